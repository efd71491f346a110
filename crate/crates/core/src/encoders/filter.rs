//! Causal Butterworth filters built from cascaded second-order sections.

use std::f64::consts::PI;

use crate::error::{domain, Result};

/// One second-order section, transposed direct form II.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Biquad {
    b0: f64,
    b1: f64,
    b2: f64,
    a1: f64,
    a2: f64,
    z1: f64,
    z2: f64,
}

impl Biquad {
    fn normalized(b: [f64; 3], a: [f64; 3]) -> Self {
        Self {
            b0: b[0] / a[0],
            b1: b[1] / a[0],
            b2: b[2] / a[0],
            a1: a[1] / a[0],
            a2: a[2] / a[0],
            z1: 0.0,
            z2: 0.0,
        }
    }

    fn lowpass(fc: f64, fs: f64, q: f64) -> Self {
        let w0 = 2.0 * PI * fc / fs;
        let (sin, cos) = w0.sin_cos();
        let alpha = sin / (2.0 * q);
        Self::normalized(
            [(1.0 - cos) / 2.0, 1.0 - cos, (1.0 - cos) / 2.0],
            [1.0 + alpha, -2.0 * cos, 1.0 - alpha],
        )
    }

    fn highpass(fc: f64, fs: f64, q: f64) -> Self {
        let w0 = 2.0 * PI * fc / fs;
        let (sin, cos) = w0.sin_cos();
        let alpha = sin / (2.0 * q);
        Self::normalized(
            [(1.0 + cos) / 2.0, -(1.0 + cos), (1.0 + cos) / 2.0],
            [1.0 + alpha, -2.0 * cos, 1.0 - alpha],
        )
    }

    // First-order sections (for odd orders) stored with b2 = a2 = 0.
    fn lowpass_first(fc: f64, fs: f64) -> Self {
        let k = (PI * fc / fs).tan();
        Self::normalized([k, k, 0.0], [1.0 + k, k - 1.0, 0.0])
    }

    fn highpass_first(fc: f64, fs: f64) -> Self {
        let k = (PI * fc / fs).tan();
        Self::normalized([1.0, -1.0, 0.0], [1.0 + k, k - 1.0, 0.0])
    }

    #[inline]
    pub fn process(&mut self, x: f64) -> f64 {
        let y = self.b0 * x + self.z1;
        self.z1 = self.b1 * x - self.a1 * y + self.z2;
        self.z2 = self.b2 * x - self.a2 * y;
        y
    }

    pub fn reset(&mut self) {
        self.z1 = 0.0;
        self.z2 = 0.0;
    }
}

/// Pole quality factors of an even-order Butterworth prototype.
fn butterworth_qs(order: usize) -> Vec<f64> {
    (1..=order / 2)
        .map(|k| 1.0 / (2.0 * ((2 * k - 1) as f64 * PI / (2 * order) as f64).cos()))
        .collect()
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Cascade {
    sections: Vec<Biquad>,
}

impl Cascade {
    pub fn lowpass(order: usize, fc: f64, fs: f64) -> Result<Self> {
        check_edge(order, fc, fs)?;
        let mut sections: Vec<Biquad> = butterworth_qs(order)
            .into_iter()
            .map(|q| Biquad::lowpass(fc, fs, q))
            .collect();
        if order % 2 == 1 {
            sections.push(Biquad::lowpass_first(fc, fs));
        }
        Ok(Self { sections })
    }

    pub fn highpass(order: usize, fc: f64, fs: f64) -> Result<Self> {
        check_edge(order, fc, fs)?;
        let mut sections: Vec<Biquad> = butterworth_qs(order)
            .into_iter()
            .map(|q| Biquad::highpass(fc, fs, q))
            .collect();
        if order % 2 == 1 {
            sections.push(Biquad::highpass_first(fc, fs));
        }
        Ok(Self { sections })
    }

    /// Band-pass as a high-pass at `low` followed by a low-pass at `high`.
    ///
    /// An edge at 0 Hz drops the high-pass; an edge at or above Nyquist drops
    /// the low-pass.
    pub fn bandpass(order: usize, low: f64, high: f64, fs: f64) -> Result<Self> {
        if !(low < high) {
            return domain(format!("band edges must increase ({low}, {high})"));
        }
        let nyquist = fs / 2.0;
        let mut sections = Vec::new();
        if low > 0.0 {
            sections.extend(Self::highpass(order, low, fs)?.sections);
        }
        if high < nyquist * (1.0 - 1e-9) {
            sections.extend(Self::lowpass(order, high, fs)?.sections);
        }
        Ok(Self { sections })
    }

    #[inline]
    pub fn process(&mut self, x: f64) -> f64 {
        self.sections.iter_mut().fold(x, |v, s| s.process(v))
    }

    pub fn filter(&mut self, xs: &[f64]) -> Vec<f64> {
        xs.iter().map(|&x| self.process(x)).collect()
    }

    pub fn reset(&mut self) {
        self.sections.iter_mut().for_each(Biquad::reset);
    }
}

fn check_edge(order: usize, fc: f64, fs: f64) -> Result<()> {
    if order == 0 {
        return domain("filter order must be at least 1");
    }
    if !(fs > 0.0) || !(fc > 0.0 && fc < fs / 2.0) {
        return domain(format!("cutoff {fc} Hz outside (0, {}) Hz", fs / 2.0));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tone_gain(filter: &mut Cascade, f: f64, fs: f64) -> f64 {
        let n = (fs * 20.0) as usize;
        let ys: Vec<f64> = (0..n)
            .map(|k| filter.process((2.0 * PI * f * k as f64 / fs).sin()))
            .collect();
        let tail = &ys[n / 2..];
        (tail.iter().map(|y| y * y).sum::<f64>() / tail.len() as f64 * 2.0).sqrt()
    }

    #[test]
    fn lowpass_is_3db_at_cutoff() {
        let mut lp = Cascade::lowpass(4, 20.0, 200.0).unwrap();
        let g = tone_gain(&mut lp, 20.0, 200.0);
        assert!((g - std::f64::consts::FRAC_1_SQRT_2).abs() < 0.01, "{g}");
        lp.reset();
        assert!(tone_gain(&mut lp, 2.0, 200.0) > 0.99);
    }

    #[test]
    fn bandpass_rejects_out_of_band() {
        let mut bp = Cascade::bandpass(4, 0.5, 50.0, 200.0).unwrap();
        let pass = tone_gain(&mut bp, 15.0, 200.0);
        bp.reset();
        let stop = tone_gain(&mut bp, 80.0, 200.0);
        assert!(pass > 0.95 && stop < 0.05, "{pass} {stop}");
        let mut hp = Cascade::bandpass(4, 50.0, 100.0, 200.0).unwrap();
        assert!(tone_gain(&mut hp, 80.0, 200.0) > 0.95);
    }

    #[test]
    fn odd_order_and_bad_edges() {
        assert!(Cascade::lowpass(3, 10.0, 200.0).is_ok());
        assert!(Cascade::lowpass(4, 150.0, 200.0).is_err());
        assert!(Cascade::bandpass(4, 60.0, 50.0, 200.0).is_err());
    }
}
