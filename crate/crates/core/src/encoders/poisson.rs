//! Seeded homogeneous Poisson spike trains.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};

use crate::error::{domain, Result};
use crate::signal::{Spike, SpikeTrain};

/// Spike times (µs) of one Poisson process drawn from `rng`.
pub fn poisson_times(rate: f64, duration_us: f64, rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
    if !(rate >= 0.0) || !rate.is_finite() {
        return domain(format!("Poisson rate must be finite and >= 0, got {rate}"));
    }
    let mut times = Vec::new();
    if rate == 0.0 {
        return Ok(times);
    }
    let isi = Exp::new(rate).expect("positive rate");
    let mut t = 0.0;
    loop {
        t += isi.sample(rng) * 1e6;
        if t >= duration_us {
            break;
        }
        times.push(t);
    }
    Ok(times)
}

pub fn poisson_train(rate: f64, duration_us: f64, seed: u64) -> Result<SpikeTrain> {
    poisson_trains(&[rate], duration_us, seed)
}

/// Independent Poisson trains, one channel per rate. Channel `c` draws from
/// stream `c` of the seeded generator.
pub fn poisson_trains(rates: &[f64], duration_us: f64, seed: u64) -> Result<SpikeTrain> {
    let mut events = Vec::new();
    for (channel, &rate) in rates.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(channel as u64);
        events.extend(
            poisson_times(rate, duration_us, &mut rng)?
                .into_iter()
                .map(|time_us| Spike { time_us, channel }),
        );
    }
    let names = (0..rates.len()).map(|c| format!("poisson{c}")).collect();
    SpikeTrain::from_unsorted(names, events, duration_us)
}
