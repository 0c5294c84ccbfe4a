//! Thermal-noise model of the readout chain.
//!
//! The input-referred PSD is white (thermal only), so band integration is
//! closed-form by default. A trapezoid integrator over a log-spaced grid
//! handles user-supplied frequency-dependent PSDs.

use serde::{Deserialize, Serialize};

use crate::error::{require_positive, Error, Result};

pub const BOLTZMANN: f64 = 1.380_649e-23;

/// Substrate factor, thermal-noise factor and transconductance of one branch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Branch {
    #[serde(default = "unity")]
    pub n: f64,
    #[serde(default = "unity")]
    pub gamma: f64,
    pub gm: f64,
}

fn unity() -> f64 {
    1.0
}

impl Branch {
    pub fn new(n: f64, gamma: f64, gm: f64) -> Self {
        Self { n, gamma, gm }
    }

    pub fn n_gamma(&self) -> f64 {
        self.n * self.gamma
    }
}

/// Parameters of the input-referred noise expression. Branch names follow
/// the transistor that carries the transconductance (M17/M18 input pair,
/// M16/M20, M10/M11 and M14/M19 mirrors, the TA devices M21..M28, and the
/// I-V converter devices M29 and M30).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseParams {
    pub temperature: f64,
    pub b17: Branch,
    pub b16: Branch,
    pub b11: Branch,
    pub b14: Branch,
    pub b26: Branch,
    pub b22: Branch,
    pub b23: Branch,
    pub b25: Branch,
    pub b29: Branch,
    pub b30: Branch,
    pub r_load: f64,
    /// Number of enabled programmable output branches.
    pub p: u32,
}

impl Default for NoiseParams {
    /// Back-calibrated so that 1 Hz..10 kHz integrates to 5.101 uVrms.
    fn default() -> Self {
        let b = |gm| Branch::new(1.0, 1.0, gm);
        Self {
            temperature: 300.15,
            b17: b(20.0e-6),
            b16: b(1.0e-6),
            b11: b(1.0e-6),
            b14: b(1.0e-6),
            b26: b(9.461_274_181_939_925e-5),
            b22: b(5.0e-6),
            b23: b(5.0e-6),
            b25: b(5.0e-6),
            b29: b(1.0e-4),
            b30: b(1.0e-4),
            r_load: 1.0e4,
            p: 1,
        }
    }
}

impl NoiseParams {
    pub fn validate(&self) -> Result<()> {
        require_positive("temperature", self.temperature)?;
        require_positive("r_load", self.r_load)?;
        for (name, br) in self.branches() {
            if !(br.gm.is_finite() && br.gm > 0.0) {
                return Err(Error::InvalidParam {
                    name,
                    reason: format!("gm must be > 0, got {}", br.gm),
                });
            }
            if !(br.n_gamma().is_finite() && br.n_gamma() >= 0.0) {
                return Err(Error::InvalidParam {
                    name,
                    reason: "n * gamma must be finite and >= 0".into(),
                });
            }
        }
        if !(1..=8).contains(&self.p) {
            return Err(Error::InvalidParam {
                name: "p",
                reason: format!("must be in 1..=8, got {}", self.p),
            });
        }
        Ok(())
    }

    pub fn branches(&self) -> [(&'static str, Branch); 10] {
        [
            ("b17", self.b17),
            ("b16", self.b16),
            ("b11", self.b11),
            ("b14", self.b14),
            ("b26", self.b26),
            ("b22", self.b22),
            ("b23", self.b23),
            ("b25", self.b25),
            ("b29", self.b29),
            ("b30", self.b30),
        ]
    }
}

/// Drain thermal-noise current PSD 4 k T gamma gm, in A^2/Hz.
pub fn mos_thermal_psd(gm: f64, gamma: f64, temperature: f64) -> Result<f64> {
    require_positive("gm", gm)?;
    require_positive("gamma", gamma)?;
    require_positive("temperature", temperature)?;
    Ok(4.0 * BOLTZMANN * temperature * gamma * gm)
}

/// Individual contributions inside the bracket of the input-referred PSD,
/// before the 4kT factor, in published order.
pub fn psd_terms(params: &NoiseParams) -> [f64; 11] {
    let g17 = params.b17.gm;
    let g26 = params.b26.gm;
    let mirror = |b: &Branch, g_in: f64| b.n_gamma() * b.gm / (g_in * g_in);
    [
        2.0 * params.b17.n_gamma() / g17,
        2.0 * mirror(&params.b16, g17),
        2.0 * mirror(&params.b11, g17),
        f64::from(params.p) * mirror(&params.b14, g17),
        2.0 * params.b26.n_gamma() / g26,
        2.0 * mirror(&params.b22, g26),
        2.0 * mirror(&params.b23, g26),
        2.0 * mirror(&params.b25, g26),
        params.b29.n_gamma() / params.b29.gm,
        params.b30.n_gamma() / params.b30.gm,
        1.0 / params.r_load,
    ]
}

/// Input-referred thermal-noise voltage PSD, in V^2/Hz.
pub fn input_referred_psd(params: &NoiseParams) -> Result<f64> {
    params.validate()?;
    let bracket: f64 = psd_terms(params).iter().sum();
    Ok(4.0 * BOLTZMANN * params.temperature * bracket)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BandSpec {
    pub f_low: f64,
    pub f_high: f64,
}

impl Default for BandSpec {
    fn default() -> Self {
        Self {
            f_low: 1.0,
            f_high: 10.0e3,
        }
    }
}

impl BandSpec {
    pub fn validate(&self) -> Result<()> {
        if self.f_low >= 0.0 && self.f_low < self.f_high && self.f_high.is_finite() {
            Ok(())
        } else {
            Err(Error::Domain(format!(
                "band needs 0 <= f_low < f_high, got [{}, {}]",
                self.f_low, self.f_high
            )))
        }
    }

    pub fn width(&self) -> f64 {
        self.f_high - self.f_low
    }
}

/// Noise spectral density as a function of frequency.
pub enum Psd<'a> {
    /// Frequency-independent density.
    Flat(f64),
    Shaped(&'a dyn Fn(f64) -> f64),
}

const SHAPED_POINTS: usize = 1000;

/// RMS value sqrt(integral of psd over the band).
pub fn integrate_rms(psd: &Psd<'_>, band: &BandSpec) -> Result<f64> {
    band.validate()?;
    match psd {
        Psd::Flat(s) => {
            if !(*s >= 0.0 && s.is_finite()) {
                return Err(Error::Domain(format!("negative or non-finite PSD {s}")));
            }
            Ok((s * band.width()).sqrt())
        }
        Psd::Shaped(f) => {
            let grid = integration_grid(band);
            let mut total = 0.0;
            let mut prev: Option<(f64, f64)> = None;
            for &freq in &grid {
                let s = f(freq);
                if !(s >= 0.0 && s.is_finite()) {
                    return Err(Error::Domain(format!(
                        "PSD sample {s} at {freq} Hz is negative or non-finite"
                    )));
                }
                if let Some((f0, s0)) = prev {
                    total += 0.5 * (s0 + s) * (freq - f0);
                }
                prev = Some((freq, s));
            }
            Ok(total.sqrt())
        }
    }
}

/// Log-spaced grid, or linear when the band starts at 0 Hz.
fn integration_grid(band: &BandSpec) -> Vec<f64> {
    let last = (SHAPED_POINTS - 1) as f64;
    (0..SHAPED_POINTS)
        .map(|k| {
            if k == 0 {
                return band.f_low;
            }
            if k == SHAPED_POINTS - 1 {
                return band.f_high;
            }
            let t = k as f64 / last;
            if band.f_low > 0.0 {
                (band.f_low.ln() + t * (band.f_high / band.f_low).ln()).exp()
            } else {
                band.f_low + t * band.width()
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn only(branch: &str, nparams: &mut NoiseParams, br: Branch) {
        let zero = Branch::new(0.0, 0.0, 1.0);
        for (name, slot) in [
            ("b17", &mut nparams.b17),
            ("b16", &mut nparams.b16),
            ("b11", &mut nparams.b11),
            ("b14", &mut nparams.b14),
            ("b26", &mut nparams.b26),
            ("b22", &mut nparams.b22),
            ("b23", &mut nparams.b23),
            ("b25", &mut nparams.b25),
            ("b29", &mut nparams.b29),
            ("b30", &mut nparams.b30),
        ] {
            *slot = if name == branch {
                br
            } else {
                Branch {
                    gm: slot.gm,
                    ..zero
                }
            };
        }
        nparams.r_load = f64::MAX;
    }

    #[test]
    fn device_psd() {
        let s = mos_thermal_psd(1e-3, 2.0 / 3.0, 300.0).unwrap();
        assert!((s / 1.104e-23 - 1.0).abs() < 1e-3);
        assert_eq!(mos_thermal_psd(2e-3, 2.0 / 3.0, 300.0).unwrap(), 2.0 * s);
        assert!(mos_thermal_psd(1e-3, 2.0 / 3.0, 0.0).is_err());
        assert!(mos_thermal_psd(1e-3, 2.0 / 3.0, 1e-300).unwrap() < 1e-300);
    }

    #[test]
    fn input_pair_alone() {
        let mut p = NoiseParams {
            temperature: 300.0,
            ..NoiseParams::default()
        };
        only("b17", &mut p, Branch::new(1.0, 1.0, 1e-3));
        let s = input_referred_psd(&p).unwrap();
        assert!((s / 3.313e-17 - 1.0).abs() < 1e-3, "{s}");
    }

    #[test]
    fn p_scales_programmable_branch() {
        let mut p = NoiseParams::default();
        only("b14", &mut p, Branch::new(1.0, 1.0, 5e-6));
        p.p = 1;
        let s1 = input_referred_psd(&p).unwrap();
        p.p = 2;
        let s2 = input_referred_psd(&p).unwrap();
        assert!((s2 / s1 - 2.0).abs() < 1e-12);
    }

    #[test]
    fn calibrated_profile() {
        let s = input_referred_psd(&NoiseParams::default()).unwrap();
        assert!((s / 2.602e-15 - 1.0).abs() < 0.01, "{s}");
        let rms = integrate_rms(&Psd::Flat(s), &BandSpec::default()).unwrap();
        assert!((rms / 5.101e-6 - 1.0).abs() < 1e-3, "{rms}");
    }

    #[test]
    fn flat_integration() {
        let band = BandSpec {
            f_low: 0.0,
            f_high: 1e4,
        };
        assert!((integrate_rms(&Psd::Flat(1e-18), &band).unwrap() - 1e-7).abs() < 1e-20);
        assert_eq!(integrate_rms(&Psd::Flat(0.0), &band).unwrap(), 0.0);
        let rms = integrate_rms(&Psd::Flat(2.602e-15), &BandSpec::default()).unwrap();
        assert!((rms / 5.101e-6 - 1.0).abs() < 1e-3);
        assert!(integrate_rms(&Psd::Flat(-1.0), &band).is_err());
    }

    #[test]
    fn shaped_integration() {
        let flat = |_f: f64| 4e-16;
        let band = BandSpec::default();
        let a = integrate_rms(&Psd::Shaped(&flat), &band).unwrap();
        let b = integrate_rms(&Psd::Flat(4e-16), &band).unwrap();
        assert!((a / b - 1.0).abs() < 1e-12);
        // 1/f: integral is ln(f_high/f_low)
        let pink = |f: f64| 1e-12 / f;
        let c = integrate_rms(&Psd::Shaped(&pink), &band).unwrap();
        let exact = (1e-12 * (1e4f64).ln()).sqrt();
        assert!((c / exact - 1.0).abs() < 1e-4, "{c} vs {exact}");
        let neg = |_f: f64| -1.0;
        assert!(integrate_rms(&Psd::Shaped(&neg), &band).is_err());
    }

    #[test]
    fn rejects_bad_params() {
        let p = NoiseParams {
            p: 9,
            ..NoiseParams::default()
        };
        assert!(input_referred_psd(&p).is_err());
        let mut p = NoiseParams::default();
        p.b26.gm = 0.0;
        assert!(input_referred_psd(&p).is_err());
    }
}
