//! Sinusoidal drive of the static chain and THD extraction.

use std::f64::consts::PI;

use rayon::prelude::*;
use rustfft::{num_complex::Complex, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::chain::{large_signal_output, ChainParams, NonlinearModelSpec};
use crate::error::{require_positive, Error, Result};

/// Sinusoidal sensor current i_dc + i_amp sin(2 pi f0 t).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Stimulus {
    pub i_dc: f64,
    pub i_amp: f64,
    pub f0: f64,
}

impl Default for Stimulus {
    /// Full detection window, 4.2..180 uA.
    fn default() -> Self {
        Self {
            i_dc: 92.1e-6,
            i_amp: 87.9e-6,
            f0: 1.0e3,
        }
    }
}

impl Stimulus {
    pub fn validate(&self) -> Result<()> {
        if !(self.i_amp >= 0.0 && self.i_amp.is_finite() && self.i_dc.is_finite()) {
            return Err(Error::Domain(format!(
                "stimulus needs finite i_dc and i_amp >= 0, got {} / {}",
                self.i_dc, self.i_amp
            )));
        }
        require_positive("f0", self.f0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WaveformSpec {
    pub n_periods: usize,
    pub samples_per_period: usize,
}

impl Default for WaveformSpec {
    fn default() -> Self {
        Self {
            n_periods: 8,
            samples_per_period: 256,
        }
    }
}

impl WaveformSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_periods < 4 {
            return Err(Error::Domain(format!(
                "n_periods must be >= 4, got {}",
                self.n_periods
            )));
        }
        if self.samples_per_period < 64 || !self.samples_per_period.is_power_of_two() {
            return Err(Error::Domain(format!(
                "samples_per_period must be a power of two >= 64, got {}",
                self.samples_per_period
            )));
        }
        Ok(())
    }

    /// Total number of samples.
    pub fn total_samples(&self) -> usize {
        self.n_periods * self.samples_per_period
    }
}

/// Uniformly sampled output voltage.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    pub dt: f64,
    pub samples: Vec<f64>,
}

impl Waveform {
    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.samples.len()).map(move |k| k as f64 * self.dt)
    }
}

/// A static current-to-voltage characteristic.
pub trait Transfer: Sync {
    fn output(&self, i_sen: f64) -> Result<f64>;
}

/// The full readout chain at one gain step.
#[derive(Debug, Clone)]
pub struct ChainTransfer<'a> {
    pub params: &'a ChainParams,
    pub j: u32,
    pub models: NonlinearModelSpec,
}

impl Transfer for ChainTransfer<'_> {
    fn output(&self, i_sen: f64) -> Result<f64> {
        large_signal_output(i_sen, self.params, self.j, &self.models).map(|o| o.v_out)
    }
}

/// Diode-connected square-law device biased at `i_bias`, driven directly by
/// the sensor current: v = v_th + sqrt((i_bias + i) / k).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SquareLawStage {
    pub k: f64,
    pub v_th: f64,
    pub i_bias: f64,
}

impl SquareLawStage {
    /// Stage biased at k (v_dd - v_th)^2, where its slope is the I-V gain A.
    pub fn from_params(params: &ChainParams) -> Result<Self> {
        let v_ov = params.overdrive()?;
        Ok(Self {
            k: params.k_proc,
            v_th: params.v_th,
            i_bias: params.k_proc * v_ov * v_ov,
        })
    }

    /// First and second Taylor coefficients (a1, a2) of v(i) about `i0`.
    pub fn taylor(&self, i0: f64) -> (f64, f64) {
        let total = self.i_bias + i0;
        let a1 = 0.5 / (self.k * total).sqrt();
        let a2 = -0.125 / (self.k.sqrt() * total.powf(1.5));
        (a1, a2)
    }
}

impl Transfer for SquareLawStage {
    fn output(&self, i_sen: f64) -> Result<f64> {
        let total = self.i_bias + i_sen;
        if total < 0.0 {
            return Err(Error::Domain(format!(
                "square-law device cut off at i = {i_sen:e} A"
            )));
        }
        Ok(self.v_th + (total / self.k).sqrt())
    }
}

/// Affine reference characteristic.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineTransfer {
    pub gain: f64,
    pub offset: f64,
}

impl Transfer for AffineTransfer {
    fn output(&self, i_sen: f64) -> Result<f64> {
        Ok(self.offset + self.gain * i_sen)
    }
}

/// Samples the chain output over `spec.n_periods` whole periods.
pub fn simulate_transient(
    stim: &Stimulus,
    params: &ChainParams,
    j: u32,
    models: &NonlinearModelSpec,
    spec: &WaveformSpec,
) -> Result<Waveform> {
    let chain = ChainTransfer {
        params,
        j,
        models: *models,
    };
    simulate_with(stim, &chain, spec)
}

pub fn simulate_with(
    stim: &Stimulus,
    transfer: &dyn Transfer,
    spec: &WaveformSpec,
) -> Result<Waveform> {
    stim.validate()?;
    spec.validate()?;
    let n = spec.total_samples();
    let per = spec.samples_per_period as f64;
    let samples = (0..n)
        .into_par_iter()
        .map(|k| {
            let phase = 2.0 * PI * ((k % spec.samples_per_period) as f64 / per);
            let i = stim.i_dc + stim.i_amp * phase.sin();
            transfer.output(i).map_err(|e| e.at_point(k, i))
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(Waveform {
        dt: 1.0 / (stim.f0 * per),
        samples,
    })
}

/// Harmonic magnitudes |X_1|..|X_n| (index 0 is the fundamental).
pub fn harmonic_magnitudes(waveform: &Waveform, f0: f64, n_harmonics: usize) -> Result<Vec<f64>> {
    require_positive("f0", f0)?;
    let n = waveform.samples.len();
    if n == 0 {
        return Err(Error::Domain("empty waveform".into()));
    }
    let periods = f0 * waveform.dt * n as f64;
    let cycles = periods.round();
    if cycles < 1.0 || (periods - cycles).abs() > 1e-9 * periods.max(1.0) {
        return Err(Error::Domain(format!(
            "waveform spans {periods} periods of f0; need an integer"
        )));
    }
    let cycles = cycles as usize;
    if n_harmonics * cycles >= n.div_ceil(2) {
        return Err(Error::Domain(format!(
            "harmonic {n_harmonics} is above Nyquist for {n} samples"
        )));
    }
    let mut buf: Vec<Complex<f64>> = waveform
        .samples
        .iter()
        .map(|&v| Complex::new(v, 0.0))
        .collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    Ok((1..=n_harmonics).map(|h| buf[h * cycles].norm()).collect())
}

/// sqrt(sum_{h=2..n} |X_h|^2) / |X_1| at exact harmonic bins.
pub fn thd(waveform: &Waveform, f0: f64, n_harmonics: usize) -> Result<f64> {
    if n_harmonics < 2 {
        return Err(Error::Domain("n_harmonics must be >= 2".into()));
    }
    let mags = harmonic_magnitudes(waveform, f0, n_harmonics)?;
    let n = waveform.samples.len() as f64;
    let full_scale = waveform.samples.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    // single-sided amplitude of the fundamental
    let fundamental = 2.0 * mags[0] / n;
    if fundamental < 1e-15 * full_scale || fundamental == 0.0 {
        return Err(Error::UndefinedThd {
            magnitude: fundamental,
        });
    }
    let harmonics: f64 = mags[1..].iter().map(|m| m * m).sum();
    Ok(harmonics.sqrt() / mags[0])
}

/// THD of y = a1 x + a2 x^2 driven with amplitude A: |a2 A / (2 a1)|.
pub fn analytic_thd_quadratic(a1: f64, a2: f64, amplitude: f64) -> Result<f64> {
    if a1 == 0.0 || !a1.is_finite() {
        return Err(Error::Domain("a1 must be finite and nonzero".into()));
    }
    Ok((a2 * amplitude / (2.0 * a1)).abs())
}

pub const DEFAULT_HARMONICS: usize = 9;

/// Band the calibrated full-range THD is compared against (a logged check).
pub const REFERENCE_THD_BAND: (f64, f64) = (0.05, 0.15);

#[cfg(test)]
mod tests {
    use super::*;

    fn synth(f: impl Fn(f64) -> f64, n_periods: usize, per: usize) -> Waveform {
        let n = n_periods * per;
        Waveform {
            dt: 1.0 / (1.0e3 * per as f64),
            samples: (0..n)
                .map(|k| f(2.0 * PI * (k % per) as f64 / per as f64))
                .collect(),
        }
    }

    #[test]
    fn pure_sine_has_no_distortion() {
        let w = synth(|p| p.sin(), 4, 64);
        assert!(thd(&w, 1e3, 9).unwrap() < 1e-10);
    }

    #[test]
    fn constructed_second_harmonic() {
        let w = synth(|p| p.sin() + 0.1 * (2.0 * p).sin(), 8, 256);
        assert!((thd(&w, 1e3, 9).unwrap() - 0.1).abs() < 1e-9);
    }

    #[test]
    fn quadratic_matches_oracle() {
        let (a1, a2, amp) = (1.0, 0.3, 0.5);
        let w = synth(
            |p| {
                let x = amp * p.sin();
                a1 * x + a2 * x * x
            },
            8,
            256,
        );
        let expected = analytic_thd_quadratic(a1, a2, amp).unwrap();
        assert!((thd(&w, 1e3, 9).unwrap() / expected - 1.0).abs() < 5e-3);
    }

    #[test]
    fn oracle_examples() {
        assert_eq!(analytic_thd_quadratic(1.0, 0.0, 1.0).unwrap(), 0.0);
        assert!((analytic_thd_quadratic(1.0, 0.2, 1.0).unwrap() - 0.1).abs() < 1e-15);
        assert!((analytic_thd_quadratic(2.0, 0.2, 0.5).unwrap() - 0.025).abs() < 1e-15);
        assert!(analytic_thd_quadratic(0.0, 0.2, 0.5).is_err());
    }

    #[test]
    fn flat_waveform_is_undefined() {
        let w = synth(|_| 1.0, 4, 64);
        assert!(matches!(thd(&w, 1e3, 9), Err(Error::UndefinedThd { .. })));
    }

    #[test]
    fn rejects_bad_inputs() {
        let w = synth(|p| p.sin(), 4, 64);
        assert!(thd(&w, 1e3, 1).is_err());
        assert!(thd(&w, 1.1e3, 9).is_err());
        assert!(thd(&w, 1e3, 40).is_err());
        assert!(WaveformSpec {
            n_periods: 3,
            samples_per_period: 64
        }
        .validate()
        .is_err());
        assert!(WaveformSpec {
            n_periods: 4,
            samples_per_period: 96
        }
        .validate()
        .is_err());
        assert!(WaveformSpec {
            n_periods: 4,
            samples_per_period: 32
        }
        .validate()
        .is_err());
    }

    #[test]
    fn zero_amplitude_is_constant() {
        let params = ChainParams::default();
        let stim = Stimulus {
            i_dc: 50e-6,
            i_amp: 0.0,
            f0: 1e3,
        };
        let w = simulate_transient(
            &stim,
            &params,
            1,
            &NonlinearModelSpec::default(),
            &WaveformSpec::default(),
        )
        .unwrap();
        let v = large_signal_output(50e-6, &params, 1, &NonlinearModelSpec::default())
            .unwrap()
            .v_out;
        assert_eq!(w.samples.len(), 8 * 256);
        assert!(w.samples.iter().all(|&s| s == v));
    }

    #[test]
    fn linear_override_is_pure() {
        let params = ChainParams::default();
        let w = simulate_transient(
            &Stimulus::default(),
            &params,
            1,
            &NonlinearModelSpec::linear(),
            &WaveformSpec::default(),
        )
        .unwrap();
        assert!(thd(&w, 1e3, 9).unwrap() < 1e-10);
    }
}
