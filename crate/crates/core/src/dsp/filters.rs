use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Second-order IIR section (audio-EQ cookbook designs), normalized so
/// `a0 = 1`. Runs in f64 transposed direct form II.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Biquad {
    pub b: [f64; 3],
    pub a: [f64; 2],
}

fn check(sample_rate: f64, freq: f64, q: f64) -> Result<()> {
    if !(freq > 0.0 && freq < sample_rate / 2.0) || !(q > 0.0) {
        return Err(Error::config(format!(
            "filter at {freq} Hz with Q {q} is invalid for {sample_rate} Hz"
        )));
    }
    Ok(())
}

impl Biquad {
    fn normalized(b: [f64; 3], a0: f64, a1: f64, a2: f64) -> Self {
        Self {
            b: [b[0] / a0, b[1] / a0, b[2] / a0],
            a: [a1 / a0, a2 / a0],
        }
    }

    fn omega(sample_rate: f64, freq: f64, q: f64) -> (f64, f64) {
        let w = 2.0 * std::f64::consts::PI * freq / sample_rate;
        (w.cos(), w.sin() / (2.0 * q))
    }

    pub fn lowpass(sample_rate: f64, freq: f64, q: f64) -> Result<Self> {
        check(sample_rate, freq, q)?;
        let (c, alpha) = Self::omega(sample_rate, freq, q);
        let b1 = 1.0 - c;
        Ok(Self::normalized([b1 / 2.0, b1, b1 / 2.0], 1.0 + alpha, -2.0 * c, 1.0 - alpha))
    }

    pub fn highpass(sample_rate: f64, freq: f64, q: f64) -> Result<Self> {
        check(sample_rate, freq, q)?;
        let (c, alpha) = Self::omega(sample_rate, freq, q);
        let b1 = 1.0 + c;
        Ok(Self::normalized([b1 / 2.0, -b1, b1 / 2.0], 1.0 + alpha, -2.0 * c, 1.0 - alpha))
    }

    /// Band-pass with 0 dB gain at `freq`.
    pub fn bandpass(sample_rate: f64, freq: f64, q: f64) -> Result<Self> {
        check(sample_rate, freq, q)?;
        let (c, alpha) = Self::omega(sample_rate, freq, q);
        Ok(Self::normalized([alpha, 0.0, -alpha], 1.0 + alpha, -2.0 * c, 1.0 - alpha))
    }

    /// Peaking equalizer with `gain_db` at `freq`.
    pub fn peaking(sample_rate: f64, freq: f64, q: f64, gain_db: f64) -> Result<Self> {
        check(sample_rate, freq, q)?;
        let (c, alpha) = Self::omega(sample_rate, freq, q);
        let amp = 10f64.powf(gain_db / 40.0);
        Ok(Self::normalized(
            [1.0 + alpha * amp, -2.0 * c, 1.0 - alpha * amp],
            1.0 + alpha / amp,
            -2.0 * c,
            1.0 - alpha / amp,
        ))
    }

    /// Fourth-order Butterworth low-pass as two sections.
    pub fn butterworth_lowpass4(sample_rate: f64, freq: f64) -> Result<[Self; 2]> {
        Ok([
            Self::lowpass(sample_rate, freq, BUTTERWORTH4_Q[0])?,
            Self::lowpass(sample_rate, freq, BUTTERWORTH4_Q[1])?,
        ])
    }

    /// Fourth-order Butterworth high-pass as two sections.
    pub fn butterworth_highpass4(sample_rate: f64, freq: f64) -> Result<[Self; 2]> {
        Ok([
            Self::highpass(sample_rate, freq, BUTTERWORTH4_Q[0])?,
            Self::highpass(sample_rate, freq, BUTTERWORTH4_Q[1])?,
        ])
    }

    pub fn process_in_place(&self, x: &mut [f64]) {
        let (mut s1, mut s2) = (0.0, 0.0);
        for v in x.iter_mut() {
            let input = *v;
            let y = self.b[0] * input + s1;
            s1 = self.b[1] * input - self.a[0] * y + s2;
            s2 = self.b[2] * input - self.a[1] * y;
            *v = y;
        }
    }

    /// |H(e^{jω})| at `freq` Hz.
    pub fn magnitude_at(&self, sample_rate: f64, freq: f64) -> f64 {
        let w = 2.0 * std::f64::consts::PI * freq / sample_rate;
        let (c1, s1, c2, s2) = (w.cos(), w.sin(), (2.0 * w).cos(), (2.0 * w).sin());
        let num_re = self.b[0] + self.b[1] * c1 + self.b[2] * c2;
        let num_im = -(self.b[1] * s1 + self.b[2] * s2);
        let den_re = 1.0 + self.a[0] * c1 + self.a[1] * c2;
        let den_im = -(self.a[0] * s1 + self.a[1] * s2);
        (num_re.hypot(num_im)) / (den_re.hypot(den_im))
    }
}

/// Section Q values of a fourth-order Butterworth response.
pub const BUTTERWORTH4_Q: [f64; 2] = [0.541_196_100_146_197, 1.306_562_964_876_376_5];

pub fn cascade_in_place(filters: &[Biquad], x: &mut [f64]) {
    for f in filters {
        f.process_in_place(x);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn butterworth_is_3db_down_at_cutoff() {
        let [a, b] = Biquad::butterworth_lowpass4(16000.0, 1000.0).unwrap();
        let g = a.magnitude_at(16000.0, 1000.0) * b.magnitude_at(16000.0, 1000.0);
        assert!((g - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-9);
        let dc = a.magnitude_at(16000.0, 0.0) * b.magnitude_at(16000.0, 0.0);
        assert!((dc - 1.0).abs() < 1e-12);
    }

    #[test]
    fn peaking_gain_at_centre() {
        let p = Biquad::peaking(16000.0, 2000.0, 4.0, 12.0).unwrap();
        let g = 20.0 * p.magnitude_at(16000.0, 2000.0).log10();
        assert!((g - 12.0).abs() < 1e-9);
    }

    #[test]
    fn bandpass_unity_at_centre_and_impulse_response_matches_design() {
        let f = Biquad::bandpass(16000.0, 1500.0, 2.0).unwrap();
        assert!((f.magnitude_at(16000.0, 1500.0) - 1.0).abs() < 1e-12);
        let mut x = vec![0.0; 3];
        x[0] = 1.0;
        f.process_in_place(&mut x);
        assert!((x[0] - f.b[0]).abs() < 1e-15);
        assert!((x[1] - (f.b[1] - f.a[0] * f.b[0])).abs() < 1e-15);
    }

    #[test]
    fn rejects_out_of_range_frequency() {
        assert!(Biquad::lowpass(16000.0, 8000.0, 0.7).is_err());
        assert!(Biquad::highpass(16000.0, 0.0, 0.7).is_err());
    }
}
