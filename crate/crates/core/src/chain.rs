//! Readout chain: current conveyor, gm-boosted programmable transconductor,
//! and the I-V converter closed in a positive-feedback loop by a
//! transconductance amplifier.
//!
//! Small-signal gain is evaluated in closed form. The large-signal path
//! solves the scalar feedback loop around the quiescent point `i_q`, where
//! the closed form is the exact linearization.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{require_finite, require_positive, Error, Result};

/// Device parameters of the readout chain. `Default` is the shipped
/// calibrated profile (0.55 V at 4.2 uA, 1.44 V at 180 uA for j = 1).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChainParams {
    /// Current-conveyor tracking error.
    pub alpha_c: f64,
    pub gm17: f64,
    pub gm16: f64,
    pub gm11: f64,
    pub gm12: f64,
    pub gm14: f64,
    /// Resistance at the Z node (ohms).
    pub r_z: f64,
    /// I-V converter device process parameter (A/V^2).
    pub k_proc: f64,
    pub v_th: f64,
    pub v_dd: f64,
    /// Feedback TA transconductance.
    pub gm2: f64,
    pub i_b1: f64,
    /// Feedback TA tail current; sets where the tanh characteristic saturates.
    pub i_b2: f64,
    /// Intercept of the small-signal tangent line at `i_q` (output at zero
    /// input for a perfectly linear chain).
    pub v_offset: f64,
    /// Quiescent sensor current at which the loop is linearized.
    pub i_q: f64,
    pub p_max: u32,
    /// Optional per-step gain multipliers (index j-1). Defaults to j.
    pub step_multipliers: Option<Vec<f64>>,
}

impl Default for ChainParams {
    fn default() -> Self {
        Self {
            alpha_c: 1.0,
            gm17: 2.602_224_409_692_424e-6,
            gm16: 1.0e-4,
            gm11: 1.0e-3,
            gm12: 0.9e-3,
            gm14: 1.0e-4,
            r_z: 5.0e3,
            k_proc: 1.284_928_523_121_768_8e-4,
            v_th: 0.5,
            v_dd: 1.5,
            gm2: 2.312_871_341_619_184e-4,
            i_b1: 175.0e-6,
            i_b2: 350.0e-6,
            v_offset: 0.5287,
            i_q: 92.1e-6,
            p_max: 8,
            step_multipliers: None,
        }
    }
}

impl ChainParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("alpha_c", self.alpha_c),
            ("gm17", self.gm17),
            ("gm16", self.gm16),
            ("gm11", self.gm11),
            ("gm14", self.gm14),
            ("r_z", self.r_z),
            ("k_proc", self.k_proc),
            ("v_dd", self.v_dd),
            ("i_b2", self.i_b2),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidParam {
                    name,
                    reason: format!("must be > 0, got {v}"),
                });
            }
        }
        for (name, v) in [("gm12", self.gm12), ("gm2", self.gm2), ("i_b1", self.i_b1)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::InvalidParam {
                    name,
                    reason: format!("must be >= 0, got {v}"),
                });
            }
        }
        for (name, v) in [
            ("v_th", self.v_th),
            ("v_offset", self.v_offset),
            ("i_q", self.i_q),
        ] {
            if !v.is_finite() {
                return Err(Error::InvalidParam {
                    name,
                    reason: format!("must be finite, got {v}"),
                });
            }
        }
        if self.alpha_c > 1.0 {
            return Err(Error::InvalidParam {
                name: "alpha_c",
                reason: format!("must be <= 1, got {}", self.alpha_c),
            });
        }
        if self.p_max < 1 {
            return Err(Error::InvalidParam {
                name: "p_max",
                reason: "must be >= 1".into(),
            });
        }
        if let Some(steps) = &self.step_multipliers {
            if steps.len() < self.p_max as usize {
                return Err(Error::InvalidParam {
                    name: "step_multipliers",
                    reason: format!("need {} entries, got {}", self.p_max, steps.len()),
                });
            }
            if steps.iter().any(|m| !(m.is_finite() && *m > 0.0)) {
                return Err(Error::InvalidParam {
                    name: "step_multipliers",
                    reason: "entries must be finite and > 0".into(),
                });
            }
        }
        Ok(())
    }

    /// Output-current multiplier for gain step j.
    pub fn step_multiplier(&self, j: u32) -> Result<f64> {
        if j < 1 || j > self.p_max {
            return Err(Error::GainIndex {
                j,
                p_max: self.p_max,
            });
        }
        Ok(match &self.step_multipliers {
            Some(steps) => steps[(j - 1) as usize],
            None => f64::from(j),
        })
    }

    /// Quiescent overdrive of the I-V converter devices, v_dd - v_th.
    pub fn overdrive(&self) -> Result<f64> {
        if self.v_dd > self.v_th {
            Ok(self.v_dd - self.v_th)
        } else {
            Err(Error::Headroom {
                v_dd: self.v_dd,
                v_th: self.v_th,
            })
        }
    }

    /// A * gm2.
    pub fn loop_gain(&self) -> Result<f64> {
        Ok(iv_small_signal_gain(self)? * self.gm2)
    }
}

/// Z = alpha_c * i_sen.
pub fn ccii_output(i_sen: f64, params: &ChainParams) -> Result<f64> {
    require_finite("i_sen", i_sen)?;
    Ok(params.alpha_c * i_sen)
}

/// Effective PTBTA transconductance gm17 / (1 - gm12/gm11).
pub fn ptbta_gm(params: &ChainParams) -> Result<f64> {
    require_positive("gm11", params.gm11)?;
    let ratio = params.gm12 / params.gm11;
    if !(ratio < 1.0) {
        return Err(Error::SingularBoost { ratio });
    }
    Ok(params.gm17 / (1.0 - ratio))
}

/// I-V converter gain A = 1 / (2 k (v_dd - v_th)), in ohms.
pub fn iv_small_signal_gain(params: &ChainParams) -> Result<f64> {
    require_positive("k_proc", params.k_proc)?;
    Ok(1.0 / (2.0 * params.k_proc * params.overdrive()?))
}

/// Closed-form transimpedance for gain step j:
/// m_j * alpha_c * Gm1 * R_z * A / (1 - A * gm2).
pub fn transimpedance_closed_form(params: &ChainParams, j: u32) -> Result<f64> {
    let m = params.step_multiplier(j)?;
    let gm1 = ptbta_gm(params)?;
    let a = iv_small_signal_gain(params)?;
    let loop_gain = a * params.gm2;
    let denom = 1.0 - loop_gain;
    if denom == 0.0 {
        return Err(Error::SingularFeedback { loop_gain });
    }
    Ok(m * params.alpha_c * gm1 * params.r_z * a / denom)
}

/// Small-signal (AC) output for an input deviation `i_ac` around the
/// operating point.
pub fn small_signal_output(i_ac: f64, params: &ChainParams, j: u32) -> Result<f64> {
    require_finite("i_ac", i_ac)?;
    Ok(transimpedance_closed_form(params, j)? * i_ac)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IvModel {
    /// v = A * i.
    Linear,
    /// Single diode-connected square-law device, v = v_th + sqrt(i / k).
    SquareLaw,
    /// Balanced M29/M30 square-law pair; even-order terms cancel.
    #[default]
    BalancedSquareLaw,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaModel {
    /// i = gm2 * v.
    Linear,
    /// i = i_b2 * tanh(gm2 * v / i_b2).
    #[default]
    Tanh,
}

/// Large-signal model selection and solver settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NonlinearModelSpec {
    pub iv: IvModel,
    pub ta: TaModel,
    pub max_iterations: usize,
    pub rel_tol: f64,
}

impl Default for NonlinearModelSpec {
    fn default() -> Self {
        Self {
            iv: IvModel::default(),
            ta: TaModel::default(),
            max_iterations: 200,
            rel_tol: 1e-12,
        }
    }
}

impl NonlinearModelSpec {
    pub fn linear() -> Self {
        Self {
            iv: IvModel::Linear,
            ta: TaModel::Linear,
            ..Self::default()
        }
    }
}

/// Large-signal I-V converter characteristic, parameterized by deviation
/// `w` of the output node from its quiescent value.
#[derive(Debug, Clone, Copy)]
struct IvStage {
    model: IvModel,
    k: f64,
    v_ov: f64,
    a: f64,
}

impl IvStage {
    fn i_q(&self) -> f64 {
        self.k * self.v_ov * self.v_ov
    }

    /// Signal current required for node deviation w.
    fn current(&self, w: f64) -> f64 {
        let (k, v) = (self.k, self.v_ov);
        match self.model {
            IvModel::Linear => w / self.a,
            IvModel::SquareLaw => {
                if w >= -v {
                    k * w * (2.0 * v + w)
                } else {
                    -self.i_q()
                }
            }
            IvModel::BalancedSquareLaw => {
                if w.abs() <= std::f64::consts::SQRT_2 * v {
                    k * w * (4.0 * v * v - w * w).sqrt()
                } else {
                    w.signum() * 2.0 * k * (w * w - v * v)
                }
            }
        }
    }

    fn slope(&self, w: f64) -> f64 {
        let (k, v) = (self.k, self.v_ov);
        match self.model {
            IvModel::Linear => 1.0 / self.a,
            IvModel::SquareLaw => {
                if w >= -v {
                    2.0 * k * (v + w)
                } else {
                    0.0
                }
            }
            IvModel::BalancedSquareLaw => {
                if w.abs() <= std::f64::consts::SQRT_2 * v {
                    k * (4.0 * v * v - 2.0 * w * w) / (4.0 * v * v - w * w).sqrt()
                } else {
                    4.0 * k * w.abs()
                }
            }
        }
    }

    /// Node deviation produced by signal current i (inverse of `current`).
    fn voltage(&self, i: f64) -> f64 {
        let (k, v) = (self.k, self.v_ov);
        let iq = self.i_q();
        match self.model {
            IvModel::Linear => self.a * i,
            IvModel::SquareLaw => {
                let total = iq + i;
                if total <= 0.0 {
                    -v
                } else {
                    // sqrt(total/k) - v without cancellation
                    (i / k) / ((total / k).sqrt() + v)
                }
            }
            IvModel::BalancedSquareLaw => {
                let p = (iq + 0.5 * i).max(0.0);
                let m = (iq - 0.5 * i).max(0.0);
                let (s, t) = ((p / k).sqrt(), (m / k).sqrt());
                ((p - m) / k) / (s + t)
            }
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct FeedbackTa {
    model: TaModel,
    gm2: f64,
    i_b2: f64,
}

impl FeedbackTa {
    fn current(&self, w: f64) -> f64 {
        match self.model {
            TaModel::Linear => self.gm2 * w,
            TaModel::Tanh => self.i_b2 * (self.gm2 * w / self.i_b2).tanh(),
        }
    }

    fn slope(&self, w: f64) -> f64 {
        match self.model {
            TaModel::Linear => self.gm2,
            TaModel::Tanh => {
                let c = (self.gm2 * w / self.i_b2).cosh();
                self.gm2 / (c * c)
            }
        }
    }
}

/// Result of one large-signal evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChainOutput {
    /// Output voltage, clamped to [0, v_dd].
    pub v_out: f64,
    /// Deviation of the output from its quiescent value (unclamped).
    pub ac: f64,
    pub saturated: bool,
    pub iterations: usize,
}

/// Solved feedback loop: node deviation and iteration count.
#[derive(Debug, Clone, Copy)]
struct LoopSolution {
    w: f64,
    iterations: usize,
    cutoff: bool,
}

struct Loop {
    iv: IvStage,
    ta: FeedbackTa,
    /// Over-relaxation for the fixed-point map, 1 / (1 - A*gm2).
    damping: f64,
}

impl Loop {
    fn residual(&self, w: f64, i_o: f64) -> f64 {
        self.iv.current(w) - self.ta.current(w) - i_o
    }

    fn scale(&self, w: f64, i_o: f64) -> f64 {
        self.iv.current(w).abs() + self.ta.current(w).abs() + i_o.abs()
    }

    /// Damped fixed-point iteration w <- F(i_o + T(w)), falling back to a
    /// bracketed Newton solve when the contraction is too slow.
    fn solve(&self, i_o: f64, spec: &NonlinearModelSpec) -> Result<LoopSolution> {
        if i_o == 0.0 {
            return Ok(LoopSolution {
                w: 0.0,
                iterations: 0,
                cutoff: false,
            });
        }
        let tol = spec.rel_tol;
        let converged = |w: f64| {
            let s = self.scale(w, i_o);
            s == 0.0 || self.residual(w, i_o).abs() <= tol * s
        };

        const FIXED_POINT_STEPS: usize = 12;
        let mut w = self.iv.voltage(i_o);
        let mut last = self.residual(w, i_o).abs();
        let mut iterations = 0;
        while iterations < FIXED_POINT_STEPS.min(spec.max_iterations) {
            iterations += 1;
            let next = w + self.damping * (self.iv.voltage(i_o + self.ta.current(w)) - w);
            if !next.is_finite() {
                break;
            }
            w = next;
            if converged(w) {
                return Ok(LoopSolution {
                    w,
                    iterations,
                    cutoff: false,
                });
            }
            let r = self.residual(w, i_o).abs();
            if r > 0.5 * last {
                break;
            }
            last = r;
        }

        // Bracket the root: the residual is -i_o at w = 0.
        let dir = i_o.signum();
        let (mut lo, mut hi) = (0.0_f64, dir * w.abs().max(self.iv.a * i_o.abs()).max(1e-12));
        let mut expansions = 0;
        while self.residual(hi, i_o) * dir <= 0.0 {
            lo = hi;
            hi *= 2.0;
            expansions += 1;
            if expansions > 200 || !hi.is_finite() {
                // a single-ended stage cannot sink more than its bias current
                if self.iv.model == IvModel::SquareLaw && dir < 0.0 {
                    return Ok(LoopSolution {
                        w: -self.iv.v_ov,
                        iterations,
                        cutoff: true,
                    });
                }
                return Err(Error::NonConvergence {
                    iterations,
                    residual: self.residual(w, i_o).abs()
                        / self.scale(w, i_o).max(f64::MIN_POSITIVE),
                });
            }
        }
        if lo > hi {
            std::mem::swap(&mut lo, &mut hi);
        }
        if !(lo..=hi).contains(&w) {
            w = 0.5 * (lo + hi);
        }

        while iterations < spec.max_iterations {
            iterations += 1;
            let g = self.residual(w, i_o);
            if g == 0.0 || converged(w) {
                return Ok(LoopSolution {
                    w,
                    iterations,
                    cutoff: false,
                });
            }
            // residual(lo) < 0 <= residual(hi)
            if g < 0.0 {
                lo = w;
            } else {
                hi = w;
            }
            let d = self.iv.slope(w) - self.ta.slope(w);
            let newton = w - g / d;
            w = if d != 0.0 && newton > lo && newton < hi {
                newton
            } else {
                0.5 * (lo + hi)
            };
            if hi - lo <= f64::EPSILON * w.abs() && converged(w) {
                return Ok(LoopSolution {
                    w,
                    iterations,
                    cutoff: false,
                });
            }
        }
        if converged(w) {
            return Ok(LoopSolution {
                w,
                iterations,
                cutoff: false,
            });
        }
        Err(Error::NonConvergence {
            iterations,
            residual: self.residual(w, i_o).abs() / self.scale(w, i_o),
        })
    }
}

/// Output voltage for sensor current `i_sen` at gain step j.
///
/// Solves I_iv(w) - I_ta(w) = m_j * alpha_c * Gm1 * R_z * (i_sen - i_q) for
/// the node deviation w and returns v_offset + Z_j * i_q + w, clamped to the
/// supply rails.
pub fn large_signal_output(
    i_sen: f64,
    params: &ChainParams,
    j: u32,
    models: &NonlinearModelSpec,
) -> Result<ChainOutput> {
    require_finite("i_sen", i_sen)?;
    let z = transimpedance_closed_form(params, j)?;
    let a = iv_small_signal_gain(params)?;
    let loop_gain = a * params.gm2;
    if loop_gain >= 1.0 {
        return Err(Error::SingularFeedback { loop_gain });
    }
    let chain = Loop {
        iv: IvStage {
            model: models.iv,
            k: params.k_proc,
            v_ov: params.overdrive()?,
            a,
        },
        ta: FeedbackTa {
            model: models.ta,
            gm2: params.gm2,
            i_b2: params.i_b2,
        },
        damping: 1.0 / (1.0 - loop_gain),
    };
    let m = params.step_multiplier(j)?;
    let i_o = m * ccii_output(i_sen - params.i_q, params)? * ptbta_gm(params)? * params.r_z;
    let sol = chain.solve(i_o, models)?;
    let v = params.v_offset + z * params.i_q + sol.w;
    let clamped = v.clamp(0.0, params.v_dd);
    Ok(ChainOutput {
        v_out: clamped,
        ac: sol.w,
        saturated: clamped != v || sol.cutoff,
        iterations: sol.iterations,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridScale {
    #[default]
    Linear,
    Logarithmic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSpec {
    pub i_min: f64,
    pub i_max: f64,
    pub n_points: usize,
    pub scale: GridScale,
}

impl Default for SweepSpec {
    fn default() -> Self {
        Self {
            i_min: 4.2e-6,
            i_max: 180e-6,
            n_points: 100,
            scale: GridScale::Linear,
        }
    }
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.i_min > 0.0 && self.i_min < self.i_max && self.i_max.is_finite()) {
            return Err(Error::Domain(format!(
                "sweep needs 0 < i_min < i_max, got [{}, {}]",
                self.i_min, self.i_max
            )));
        }
        if self.n_points < 2 {
            return Err(Error::Domain("sweep needs at least 2 points".into()));
        }
        Ok(())
    }

    /// Strictly increasing current grid including both endpoints.
    pub fn grid(&self) -> Result<Vec<f64>> {
        self.validate()?;
        let last = (self.n_points - 1) as f64;
        let grid = (0..self.n_points)
            .map(|k| {
                if k == 0 {
                    return self.i_min;
                }
                if k == self.n_points - 1 {
                    return self.i_max;
                }
                let t = k as f64 / last;
                match self.scale {
                    GridScale::Linear => self.i_min + t * (self.i_max - self.i_min),
                    GridScale::Logarithmic => {
                        (self.i_min.ln() + t * (self.i_max.ln() - self.i_min.ln())).exp()
                    }
                }
            })
            .collect();
        Ok(grid)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepPoint {
    pub i_sen: f64,
    pub v_out: f64,
    pub ac: f64,
    pub saturated: bool,
}

/// Sweep with the default large-signal models.
pub fn sweep(spec: &SweepSpec, params: &ChainParams, j: u32) -> Result<Vec<SweepPoint>> {
    sweep_with(spec, params, j, &NonlinearModelSpec::default())
}

/// Evaluates `large_signal_output` over the grid, in parallel, returning
/// points in grid order.
pub fn sweep_with(
    spec: &SweepSpec,
    params: &ChainParams,
    j: u32,
    models: &NonlinearModelSpec,
) -> Result<Vec<SweepPoint>> {
    let grid = spec.grid()?;
    grid.par_iter()
        .enumerate()
        .map(|(index, &i_sen)| {
            large_signal_output(i_sen, params, j, models)
                .map(|o| SweepPoint {
                    i_sen,
                    v_out: o.v_out,
                    ac: o.ac,
                    saturated: o.saturated,
                })
                .map_err(|e| e.at_point(index, i_sen))
        })
        .collect()
}

/// Bandgap reference potentiostat output.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReferenceSpec {
    pub v_ref_nominal: f64,
    /// Volts of reference shift per volt of supply deviation.
    pub line_regulation: f64,
    pub v_dd_nominal: f64,
}

impl Default for ReferenceSpec {
    fn default() -> Self {
        Self {
            v_ref_nominal: 0.6,
            line_regulation: 0.0,
            v_dd_nominal: 1.5,
        }
    }
}

pub fn reference_voltage(v_dd: f64, spec: &ReferenceSpec) -> Result<f64> {
    require_positive("v_dd", v_dd)?;
    require_positive("v_ref_nominal", spec.v_ref_nominal)?;
    if !(spec.line_regulation >= 0.0) {
        return Err(Error::Domain(format!(
            "line_regulation must be >= 0, got {}",
            spec.line_regulation
        )));
    }
    Ok(spec.v_ref_nominal + spec.line_regulation * (v_dd - spec.v_dd_nominal))
}

/// 20 log10(i_max / (v_noise_rms / r_t)), in dB.
pub fn dynamic_range(i_max: f64, v_noise_rms: f64, r_t: f64) -> Result<f64> {
    require_positive("i_max", i_max)?;
    require_positive("v_noise_rms", v_noise_rms)?;
    require_positive("r_t", r_t)?;
    Ok(20.0 * (i_max * r_t / v_noise_rms).log10())
}
