//! Monte Carlo mismatch analysis and PVT corner tables.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chain::{
    large_signal_output, transimpedance_closed_form, ChainParams, NonlinearModelSpec,
};
use crate::distortion::{simulate_transient, thd, Stimulus, WaveformSpec, DEFAULT_HARMONICS};
use crate::error::{Error, Result};
use crate::noise::{input_referred_psd, integrate_rms, BandSpec, NoiseParams, Psd};
use crate::stats::mean_std;

/// Parameters the mismatch model may perturb, by profile key.
pub const CHAIN_KEYS: &[&str] = &[
    "alpha_c", "gm17", "gm16", "gm11", "gm12", "gm14", "gm2", "r_z", "v_th", "k_proc",
];
pub const NOISE_KEYS: &[&str] = &[
    "noise_b17",
    "noise_b16",
    "noise_b11",
    "noise_b14",
    "noise_b26",
    "noise_b22",
    "noise_b23",
    "noise_b25",
    "noise_b29",
    "noise_b30",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MismatchDistribution {
    #[default]
    Gaussian,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VariationSpec {
    pub n_samples: usize,
    pub seed: u64,
    /// Relative standard deviation per parameter key.
    pub sigmas: BTreeMap<String, f64>,
    pub distribution: MismatchDistribution,
}

impl Default for VariationSpec {
    fn default() -> Self {
        let sigmas = [
            "gm17", "gm16", "gm11", "gm12", "gm14", "gm2", "r_z", "v_th", "alpha_c",
        ]
        .iter()
        .map(|k| (k.to_string(), 0.01))
        .collect();
        Self {
            n_samples: 400,
            seed: 0,
            sigmas,
            distribution: MismatchDistribution::Gaussian,
        }
    }
}

impl VariationSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_samples < 1 {
            return Err(Error::Config("n_samples must be >= 1".into()));
        }
        for (key, s) in &self.sigmas {
            if !CHAIN_KEYS.contains(&key.as_str()) && !NOISE_KEYS.contains(&key.as_str()) {
                return Err(Error::Config(format!("unknown mismatch parameter `{key}`")));
            }
            if !(s.is_finite() && *s >= 0.0) {
                return Err(Error::Config(format!(
                    "sigma for `{key}` must be >= 0, got {s}"
                )));
            }
        }
        Ok(())
    }
}

/// Nominal design the perturbations are applied to.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct BaseDesign {
    pub chain: ChainParams,
    pub noise: NoiseParams,
    pub models: NonlinearModelSpec,
    pub stimulus: Stimulus,
    pub waveform: WaveformSpec,
    pub band: BandSpec,
    pub j: u32,
}

impl BaseDesign {
    pub fn new(chain: ChainParams, noise: NoiseParams) -> Self {
        Self {
            chain,
            noise,
            j: 1,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Metric {
    /// Large-signal output voltage at the given sensor current.
    OutputVoltage(f64),
    Transimpedance,
    /// THD of the base stimulus, as a fraction.
    Thd,
    /// Input-referred RMS noise over the base band.
    Irn,
    /// The (perturbed) value of a parameter itself.
    Param(String),
}

impl Metric {
    pub fn name(&self) -> String {
        match self {
            Metric::OutputVoltage(i) => format!("v_out@{i:e}"),
            Metric::Transimpedance => "transimpedance".into(),
            Metric::Thd => "thd".into(),
            Metric::Irn => "irn".into(),
            Metric::Param(p) => format!("param:{p}"),
        }
    }

    fn evaluate(&self, chain: &ChainParams, noise: &NoiseParams, base: &BaseDesign) -> Result<f64> {
        match self {
            Metric::OutputVoltage(i) => {
                large_signal_output(*i, chain, base.j, &base.models).map(|o| o.v_out)
            }
            Metric::Transimpedance => transimpedance_closed_form(chain, base.j),
            Metric::Thd => {
                let w = simulate_transient(
                    &base.stimulus,
                    chain,
                    base.j,
                    &base.models,
                    &base.waveform,
                )?;
                thd(&w, base.stimulus.f0, DEFAULT_HARMONICS)
            }
            Metric::Irn => {
                let s = input_referred_psd(noise)?;
                integrate_rms(&Psd::Flat(s), &base.band)
            }
            Metric::Param(key) => param_value(chain, noise, key),
        }
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "transimpedance" => Ok(Metric::Transimpedance),
            "thd" => Ok(Metric::Thd),
            "irn" => Ok(Metric::Irn),
            other => {
                if let Some(i) = other.strip_prefix("v_out@") {
                    let i: f64 = i
                        .parse()
                        .map_err(|_| Error::Config(format!("bad current in metric `{other}`")))?;
                    Ok(Metric::OutputVoltage(i))
                } else if let Some(p) = other.strip_prefix("param:") {
                    if CHAIN_KEYS.contains(&p) || NOISE_KEYS.contains(&p) {
                        Ok(Metric::Param(p.to_string()))
                    } else {
                        Err(Error::Config(format!(
                            "unknown parameter in metric `{other}`"
                        )))
                    }
                } else {
                    Err(Error::Config(format!("unknown metric `{other}`")))
                }
            }
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

fn chain_slot<'a>(chain: &'a mut ChainParams, key: &str) -> Option<&'a mut f64> {
    Some(match key {
        "alpha_c" => &mut chain.alpha_c,
        "gm17" => &mut chain.gm17,
        "gm16" => &mut chain.gm16,
        "gm11" => &mut chain.gm11,
        "gm12" => &mut chain.gm12,
        "gm14" => &mut chain.gm14,
        "gm2" => &mut chain.gm2,
        "r_z" => &mut chain.r_z,
        "v_th" => &mut chain.v_th,
        "k_proc" => &mut chain.k_proc,
        _ => return None,
    })
}

fn noise_slot<'a>(noise: &'a mut NoiseParams, key: &str) -> Option<&'a mut f64> {
    Some(match key {
        "noise_b17" => &mut noise.b17.gm,
        "noise_b16" => &mut noise.b16.gm,
        "noise_b11" => &mut noise.b11.gm,
        "noise_b14" => &mut noise.b14.gm,
        "noise_b26" => &mut noise.b26.gm,
        "noise_b22" => &mut noise.b22.gm,
        "noise_b23" => &mut noise.b23.gm,
        "noise_b25" => &mut noise.b25.gm,
        "noise_b29" => &mut noise.b29.gm,
        "noise_b30" => &mut noise.b30.gm,
        _ => return None,
    })
}

fn param_value(chain: &ChainParams, noise: &NoiseParams, key: &str) -> Result<f64> {
    let (mut c, mut n) = (chain.clone(), noise.clone());
    chain_slot(&mut c, key)
        .or_else(|| noise_slot(&mut n, key))
        .map(|v| *v)
        .ok_or_else(|| Error::Config(format!("unknown parameter `{key}`")))
}

/// Draws the perturbed design for sample `index`. The draw depends only on
/// (seed, index): each sample gets its own ChaCha stream.
pub fn perturb(spec: &VariationSpec, base: &BaseDesign, index: u64) -> (ChainParams, NoiseParams) {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(index);
    let mut chain = base.chain.clone();
    let mut noise = base.noise.clone();
    for (key, &sigma) in &spec.sigmas {
        let z: f64 = StandardNormal.sample(&mut rng);
        let factor = 1.0 + sigma * z;
        if let Some(v) = chain_slot(&mut chain, key) {
            *v *= factor;
        } else if let Some(v) = noise_slot(&mut noise, key) {
            *v *= factor;
        }
    }
    // tracking cannot exceed unity
    chain.alpha_c = chain.alpha_c.min(1.0);
    (chain, noise)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricStats {
    pub mean: f64,
    pub std_dev: f64,
    pub min: f64,
    pub max: f64,
    pub count: usize,
}

impl MetricStats {
    pub fn from_values(values: &[f64]) -> Self {
        let (mean, std_dev) = mean_std(values);
        let (min, max) = values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            });
        Self {
            mean,
            std_dev,
            min,
            max,
            count: values.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonteCarloReport {
    pub metrics: Vec<Metric>,
    pub stats: Vec<MetricStats>,
    /// Accepted samples: (sample index, metric values in `metrics` order).
    pub samples: Vec<(u64, Vec<f64>)>,
    /// Samples excluded because a metric failed to evaluate.
    pub rejected: Vec<(u64, String)>,
}

/// Runs the Monte Carlo analysis. `threads` = `None` uses the global pool;
/// results are bit-identical for any thread count.
pub fn run_monte_carlo(
    spec: &VariationSpec,
    base: &BaseDesign,
    metrics: &[Metric],
    threads: Option<usize>,
) -> Result<MonteCarloReport> {
    spec.validate()?;
    if metrics.is_empty() {
        return Err(Error::Config("no metrics selected".into()));
    }
    let eval = |index: u64| -> std::result::Result<Vec<f64>, String> {
        let (chain, noise) = perturb(spec, base, index);
        metrics
            .iter()
            .map(|m| {
                m.evaluate(&chain, &noise, base)
                    .map_err(|e| format!("{}: {e}", m.name()))
            })
            .collect()
    };
    let run = || -> Vec<std::result::Result<Vec<f64>, String>> {
        (0..spec.n_samples as u64)
            .into_par_iter()
            .map(eval)
            .collect()
    };
    let outcomes = match threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?
            .install(run),
        None => run(),
    };

    let mut samples = Vec::new();
    let mut rejected = Vec::new();
    for (index, outcome) in outcomes.into_iter().enumerate() {
        match outcome {
            Ok(values) => samples.push((index as u64, values)),
            Err(msg) => rejected.push((index as u64, msg)),
        }
    }
    let stats = (0..metrics.len())
        .map(|m| {
            let column: Vec<f64> = samples.iter().map(|(_, v)| v[m]).collect();
            MetricStats::from_values(&column)
        })
        .collect();
    Ok(MonteCarloReport {
        metrics: metrics.to_vec(),
        stats,
        samples,
        rejected,
    })
}

/// Exploratory temperature scaling gm ~ (T/T0)^-1.5. Not derived from the
/// published corner data.
pub fn scale_for_temperature(params: &ChainParams, t_celsius: f64, t0_celsius: f64) -> ChainParams {
    let ratio = (t_celsius + 273.15) / (t0_celsius + 273.15);
    let f = ratio.powf(-1.5);
    let mut p = params.clone();
    for gm in [
        &mut p.gm17,
        &mut p.gm16,
        &mut p.gm11,
        &mut p.gm12,
        &mut p.gm14,
        &mut p.gm2,
    ] {
        *gm *= f;
    }
    p
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ProcessCorner {
    Ss,
    Sf,
    Tt,
    Fs,
    Ff,
}

impl FromStr for ProcessCorner {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "ss" => Ok(Self::Ss),
            "sf" => Ok(Self::Sf),
            "tt" => Ok(Self::Tt),
            "fs" => Ok(Self::Fs),
            "ff" => Ok(Self::Ff),
            _ => Err(Error::UnknownCorner(s.to_string())),
        }
    }
}

impl fmt::Display for ProcessCorner {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Ss => "ss",
            Self::Sf => "sf",
            Self::Tt => "tt",
            Self::Fs => "fs",
            Self::Ff => "ff",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CornerAxis {
    Process,
    /// Supply voltage in volts.
    Supply,
    /// Temperature in degrees Celsius.
    Temperature,
}

impl CornerAxis {
    pub fn header(self) -> &'static str {
        match self {
            CornerAxis::Process => "process",
            CornerAxis::Supply => "supply_V",
            CornerAxis::Temperature => "temperature_C",
        }
    }

    fn from_header(s: &str) -> Option<Self> {
        match s.trim() {
            "process" => Some(Self::Process),
            "supply_V" => Some(Self::Supply),
            "temperature_C" => Some(Self::Temperature),
            _ => None,
        }
    }
}

impl FromStr for CornerAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "process" => Ok(Self::Process),
            "supply" => Ok(Self::Supply),
            "temperature" => Ok(Self::Temperature),
            _ => Err(Error::Config(format!("unknown PVT axis `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CornerPoint {
    Process(ProcessCorner),
    Value(f64),
}

impl fmt::Display for CornerPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CornerPoint::Process(p) => write!(f, "{p}"),
            CornerPoint::Value(v) => write!(f, "{v}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CornerMetrics {
    pub output_voltage: f64,
    /// Input-referred noise in microvolts.
    pub irn_uv: f64,
    /// THD in percent.
    pub thd_pct: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CornerTable {
    pub axis: CornerAxis,
    pub rows: Vec<(CornerPoint, CornerMetrics)>,
}

const PROCESS_CSV: &str = include_str!("../data/pvt_process.csv");
const SUPPLY_CSV: &str = include_str!("../data/pvt_supply.csv");
const TEMPERATURE_CSV: &str = include_str!("../data/pvt_temperature.csv");

impl CornerTable {
    /// Published process, supply and temperature tables.
    pub fn builtin(axis: CornerAxis) -> Self {
        let src = match axis {
            CornerAxis::Process => PROCESS_CSV,
            CornerAxis::Supply => SUPPLY_CSV,
            CornerAxis::Temperature => TEMPERATURE_CSV,
        };
        Self::from_csv(src.as_bytes()).expect("built-in corner table parses")
    }

    /// Parses the transposed layout: header `<axis>,<corner>...`, then rows
    /// `output_voltage_V`, `irn_uV`, `thd_pct`.
    pub fn from_csv<R: std::io::Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .from_reader(reader);
        let headers = rdr
            .headers()
            .map_err(|e| Error::Format(format!("corner table header: {e}")))?
            .clone();
        let axis = headers
            .get(0)
            .and_then(CornerAxis::from_header)
            .ok_or_else(|| Error::Format("first header cell must name the axis".into()))?;
        let points: Vec<CornerPoint> = headers
            .iter()
            .skip(1)
            .map(|h| match axis {
                CornerAxis::Process => h.parse().map(CornerPoint::Process),
                _ => h
                    .trim()
                    .parse::<f64>()
                    .map(CornerPoint::Value)
                    .map_err(|_| Error::Format(format!("bad corner value `{h}`"))),
            })
            .collect::<Result<_>>()?;
        if points.is_empty() {
            return Err(Error::Format("corner table has no columns".into()));
        }

        let mut columns: BTreeMap<&'static str, Vec<f64>> = BTreeMap::new();
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| Error::Format(e.to_string()))?;
            let line = line as u64 + 2;
            let key = match rec.get(0).map(str::trim) {
                Some("output_voltage_V") => "v",
                Some("irn_uV") => "irn",
                Some("thd_pct") => "thd",
                Some(other) => {
                    return Err(Error::Parse {
                        line,
                        message: format!("unknown metric row `{other}`"),
                    })
                }
                None => continue,
            };
            let values = rec
                .iter()
                .skip(1)
                .map(|c| {
                    c.trim()
                        .parse::<f64>()
                        .ok()
                        .filter(|v| v.is_finite())
                        .ok_or_else(|| Error::Parse {
                            line,
                            message: format!("non-numeric value `{c}`"),
                        })
                })
                .collect::<Result<Vec<f64>>>()?;
            if values.len() != points.len() {
                return Err(Error::Parse {
                    line,
                    message: format!("expected {} values, got {}", points.len(), values.len()),
                });
            }
            columns.insert(key, values);
        }
        let col = |k: &str| {
            columns
                .get(k)
                .cloned()
                .ok_or_else(|| Error::Format(format!("corner table is missing the `{k}` row")))
        };
        let (v, irn, thd) = (col("v")?, col("irn")?, col("thd")?);
        let rows: Vec<_> = points
            .into_iter()
            .enumerate()
            .map(|(k, p)| {
                (
                    p,
                    CornerMetrics {
                        output_voltage: v[k],
                        irn_uv: irn[k],
                        thd_pct: thd[k],
                    },
                )
            })
            .collect();
        let table = Self { axis, rows };
        table.validate()?;
        Ok(table)
    }

    pub fn validate(&self) -> Result<()> {
        if axis_is_numeric(self.axis) {
            let xs: Vec<f64> = self.rows.iter().filter_map(|(p, _)| numeric(p)).collect();
            if xs.len() != self.rows.len() || xs.windows(2).any(|w| !(w[0] < w[1])) {
                return Err(Error::Format(
                    "numeric corner points must be strictly increasing".into(),
                ));
            }
        }
        Ok(())
    }
}

fn axis_is_numeric(axis: CornerAxis) -> bool {
    !matches!(axis, CornerAxis::Process)
}

fn numeric(p: &CornerPoint) -> Option<f64> {
    match p {
        CornerPoint::Value(v) => Some(*v),
        CornerPoint::Process(_) => None,
    }
}

fn lerp(a: &CornerMetrics, b: &CornerMetrics, t: f64) -> CornerMetrics {
    let l = |x: f64, y: f64| x + t * (y - x);
    CornerMetrics {
        output_voltage: l(a.output_voltage, b.output_voltage),
        irn_uv: l(a.irn_uv, b.irn_uv),
        thd_pct: l(a.thd_pct, b.thd_pct),
    }
}

/// Exact at anchors, piecewise-linear between numeric anchors, lookup-only
/// for process corners.
pub fn corner_eval(table: &CornerTable, query: CornerPoint) -> Result<CornerMetrics> {
    match (table.axis, query) {
        (CornerAxis::Process, CornerPoint::Process(c)) => table
            .rows
            .iter()
            .find(|(p, _)| *p == CornerPoint::Process(c))
            .map(|(_, m)| *m)
            .ok_or_else(|| Error::UnknownCorner(c.to_string())),
        (CornerAxis::Process, CornerPoint::Value(v)) => Err(Error::UnknownCorner(v.to_string())),
        (_, CornerPoint::Process(c)) => Err(Error::Domain(format!(
            "process corner `{c}` queried on the {} axis",
            table.axis.header()
        ))),
        (_, CornerPoint::Value(x)) => {
            let xs: Vec<f64> = table.rows.iter().filter_map(|(p, _)| numeric(p)).collect();
            let (min, max) = (xs[0], xs[xs.len() - 1]);
            if !(x >= min && x <= max) {
                return Err(Error::Extrapolation { query: x, min, max });
            }
            if let Some(k) = xs.iter().position(|&a| a == x) {
                return Ok(table.rows[k].1);
            }
            let k = xs.iter().position(|&a| a > x).expect("x inside range");
            let t = (x - xs[k - 1]) / (xs[k] - xs[k - 1]);
            Ok(lerp(&table.rows[k - 1].1, &table.rows[k].1, t))
        }
    }
}
