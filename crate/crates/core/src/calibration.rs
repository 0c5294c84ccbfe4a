//! Electrochemical measurement ingestion and concentration calibration.

use std::fmt;
use std::io::Read;

use serde::{Deserialize, Serialize};

use crate::chain::{large_signal_output, ChainParams, NonlinearModelSpec};
use crate::error::{Error, Result};
use crate::stats::ols;

/// One CSV data row. Concentration in mM, current in A, voltage in V.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeasurementRecord {
    /// 1-based line number in the source file.
    pub line: u64,
    pub t_s: Option<f64>,
    pub conc_mm: Option<f64>,
    pub current: Option<f64>,
    pub voltage: Option<f64>,
}

#[derive(Debug, Clone, Copy, Default)]
struct Columns {
    t: Option<usize>,
    conc: Option<usize>,
    current: Option<usize>,
    voltage: Option<usize>,
}

/// Reads records from CSV with any of the columns `t_s`, `conc_mM`, `i_A`,
/// `v_V` (matched case-insensitively). At least one of `i_A` / `v_V` is
/// required.
pub fn parse_records<R: Read>(input: R) -> Result<Vec<MeasurementRecord>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .flexible(false)
        .from_reader(input);
    let headers = rdr
        .headers()
        .map_err(|e| Error::Format(format!("header: {e}")))?
        .clone();
    if headers.is_empty() || headers.iter().all(str::is_empty) {
        return Err(Error::Format("empty input: no header row".into()));
    }
    let mut cols = Columns::default();
    for (k, h) in headers.iter().enumerate() {
        match h.to_ascii_lowercase().as_str() {
            "t_s" => cols.t = Some(k),
            "conc_mm" => cols.conc = Some(k),
            "i_a" => cols.current = Some(k),
            "v_v" => cols.voltage = Some(k),
            _ => {}
        }
    }
    if cols.current.is_none() && cols.voltage.is_none() {
        return Err(Error::Format(format!(
            "header must name `i_A` or `v_V`, found {:?}",
            headers.iter().collect::<Vec<_>>()
        )));
    }

    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            Error::Parse {
                line,
                message: e.to_string(),
            }
        })?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let cell = |idx: Option<usize>, name: &str| -> Result<Option<f64>> {
            let Some(idx) = idx else { return Ok(None) };
            let raw = rec.get(idx).unwrap_or("");
            if raw.is_empty() {
                return Ok(None);
            }
            raw.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .map(Some)
                .ok_or_else(|| Error::Parse {
                    line,
                    message: format!("column `{name}`: `{raw}` is not a number"),
                })
        };
        let r = MeasurementRecord {
            line,
            t_s: cell(cols.t, "t_s")?,
            conc_mm: cell(cols.conc, "conc_mM")?,
            current: cell(cols.current, "i_A")?,
            voltage: cell(cols.voltage, "v_V")?,
        };
        if r.current.is_none() && r.voltage.is_none() {
            return Err(Error::Parse {
                line,
                message: "row has neither current nor voltage".into(),
            });
        }
        if r.conc_mm.is_some_and(|c| c < 0.0) {
            return Err(Error::Parse {
                line,
                message: "negative concentration".into(),
            });
        }
        out.push(r);
    }
    if out.is_empty() {
        return Err(Error::Format("no data rows".into()));
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    Current,
    Voltage,
}

impl Target {
    pub fn as_str(self) -> &'static str {
        match self {
            Target::Current => "current",
            Target::Voltage => "voltage",
        }
    }
}

impl fmt::Display for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Affine map value = slope * concentration + intercept.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationCurve {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    /// Fitted concentration range [c_min, c_max] in mM.
    pub domain: [f64; 2],
    pub target: Target,
}

/// A converted value and whether it fell inside the curve's fitted domain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Conversion {
    pub value: f64,
    pub in_domain: bool,
}

impl CalibrationCurve {
    pub fn validate(&self) -> Result<()> {
        if !(self.slope.is_finite() && self.intercept.is_finite()) {
            return Err(Error::Config(
                "curve slope and intercept must be finite".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.r_squared) {
            return Err(Error::Config(format!(
                "r_squared {} outside [0, 1]",
                self.r_squared
            )));
        }
        if !(self.domain[0] < self.domain[1]) {
            return Err(Error::Config(format!(
                "domain [{}, {}] must satisfy c_min < c_max",
                self.domain[0], self.domain[1]
            )));
        }
        Ok(())
    }

    /// Domain membership, tolerant to rounding at the endpoints.
    pub fn contains(&self, c: f64) -> bool {
        let slack = 1e-9 * (self.domain[1] - self.domain[0]);
        c >= self.domain[0] - slack && c <= self.domain[1] + slack
    }

    pub fn to_text(&self) -> String {
        toml::to_string(self).expect("curve serializes")
    }

    pub fn from_text(s: &str) -> Result<Self> {
        let curve: Self = toml::from_str(s).map_err(|e| Error::Config(e.message().to_string()))?;
        curve.validate()?;
        Ok(curve)
    }

    fn expect(&self, target: Target) -> Result<()> {
        if self.target == target {
            Ok(())
        } else {
            Err(Error::WrongTarget {
                expected: target.as_str(),
                actual: self.target.as_str(),
            })
        }
    }

    fn evaluate(&self, c: f64) -> Result<Conversion> {
        if !(c.is_finite() && c >= 0.0) {
            return Err(Error::Domain(format!(
                "concentration must be >= 0, got {c}"
            )));
        }
        Ok(Conversion {
            value: self.slope * c + self.intercept,
            in_domain: self.contains(c),
        })
    }

    fn invert(&self, value: f64) -> Result<Conversion> {
        if self.slope == 0.0 {
            return Err(Error::NonInvertible);
        }
        if !value.is_finite() {
            return Err(Error::Domain(format!("value must be finite, got {value}")));
        }
        let c = (value - self.intercept) / self.slope;
        Ok(Conversion {
            value: c,
            in_domain: self.contains(c),
        })
    }
}

/// Ordinary least squares over (concentration, value) pairs.
pub fn fit_linear(points: &[(f64, f64)], target: Target) -> Result<CalibrationCurve> {
    let (cs, vs): (Vec<f64>, Vec<f64>) = points.iter().copied().unzip();
    if cs.iter().any(|c| !(c.is_finite() && *c >= 0.0)) {
        return Err(Error::Domain(
            "concentrations must be finite and >= 0".into(),
        ));
    }
    let c_min = cs.iter().copied().fold(f64::INFINITY, f64::min);
    let c_max = cs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if cs.len() >= 2 && c_min == c_max {
        return Err(Error::DegenerateFit(
            "all concentrations are identical".into(),
        ));
    }
    let fit = ols(&cs, &vs)?;
    Ok(CalibrationCurve {
        slope: fit.slope,
        intercept: fit.intercept,
        r_squared: fit.r_squared,
        domain: [c_min, c_max],
        target,
    })
}

/// Fits records carrying both a concentration and the target quantity.
pub fn fit_records(records: &[MeasurementRecord], target: Target) -> Result<CalibrationCurve> {
    let points: Vec<(f64, f64)> = records
        .iter()
        .filter_map(|r| {
            let y = match target {
                Target::Current => r.current,
                Target::Voltage => r.voltage,
            };
            Some((r.conc_mm?, y?))
        })
        .collect();
    if points.len() < 2 {
        return Err(Error::Format(format!(
            "need at least two rows with `conc_mM` and {} values",
            target
        )));
    }
    fit_linear(&points, target)
}

pub fn concentration_from_voltage(curve: &CalibrationCurve, v: f64) -> Result<Conversion> {
    curve.expect(Target::Voltage)?;
    curve.invert(v)
}

pub fn concentration_from_current(curve: &CalibrationCurve, i: f64) -> Result<Conversion> {
    curve.expect(Target::Current)?;
    curve.invert(i)
}

pub fn voltage_from_concentration(curve: &CalibrationCurve, c: f64) -> Result<Conversion> {
    curve.expect(Target::Voltage)?;
    curve.evaluate(c)
}

pub fn sensor_current_from_concentration(curve: &CalibrationCurve, c: f64) -> Result<Conversion> {
    curve.expect(Target::Current)?;
    curve.evaluate(c)
}

/// Synthetic current-domain curve mapping 1..10 mM onto the chain's
/// 4.2..180 uA detection window.
pub fn synthetic_current_curve() -> CalibrationCurve {
    let slope = (180.0e-6 - 4.2e-6) / 9.0;
    CalibrationCurve {
        slope,
        intercept: 4.2e-6 - slope,
        r_squared: 1.0,
        domain: [1.0, 10.0],
        target: Target::Current,
    }
}

/// Two-point voltage curve through the emulated-circuit endpoints
/// (1 mM, 1.19 V) and (10 mM, 1.67 V).
pub fn endpoint_voltage_curve() -> CalibrationCurve {
    fit_linear(&[(1.0, 1.19), (10.0, 1.67)], Target::Voltage).expect("two distinct points")
}

/// Chain output voltage for a concentration, through a current curve.
pub fn chain_voltage(
    c: f64,
    current_curve: &CalibrationCurve,
    params: &ChainParams,
    j: u32,
    models: &NonlinearModelSpec,
) -> Result<f64> {
    let i = sensor_current_from_concentration(current_curve, c)?.value;
    Ok(large_signal_output(i, params, j, models)?.v_out)
}

/// Fits the voltage curve the chain produces over `concentrations`.
pub fn fit_chain_voltage_curve(
    concentrations: &[f64],
    current_curve: &CalibrationCurve,
    params: &ChainParams,
    j: u32,
    models: &NonlinearModelSpec,
) -> Result<CalibrationCurve> {
    let points = concentrations
        .iter()
        .map(|&c| Ok((c, chain_voltage(c, current_curve, params, j, models)?)))
        .collect::<Result<Vec<_>>>()?;
    fit_linear(&points, Target::Voltage)
}

/// Peak |current| of each voltammetry scan. A new scan starts whenever the
/// sweep direction of the voltage reverses.
pub fn cv_peak_currents(records: &[MeasurementRecord]) -> Result<Vec<f64>> {
    let pts: Vec<(f64, f64)> = records
        .iter()
        .filter_map(|r| Some((r.voltage?, r.current?)))
        .collect();
    if pts.is_empty() {
        return Err(Error::Format(
            "voltammetry needs rows with both `v_V` and `i_A`".into(),
        ));
    }
    let mut peaks = Vec::new();
    let mut peak = pts[0].1.abs();
    let mut dir = 0.0_f64;
    for w in pts.windows(2) {
        let step = (w[1].0 - w[0].0).signum();
        if step != 0.0 && dir != 0.0 && step != dir {
            peaks.push(peak);
            peak = w[0].1.abs();
        }
        if step != 0.0 {
            dir = step;
        }
        peak = peak.max(w[1].1.abs());
    }
    peaks.push(peak);
    Ok(peaks)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_voltage_file() {
        let mut s = String::from("conc_mM,v_V\n");
        for c in 1..=10 {
            s += &format!("{c},{}\n", 1.0 + 0.05 * f64::from(c));
        }
        let recs = parse_records(s.as_bytes()).unwrap();
        assert_eq!(recs.len(), 10);
        assert_eq!(recs[0].line, 2);
        assert_eq!(recs[9].conc_mm, Some(10.0));
        assert!(recs[0].current.is_none());
    }

    #[test]
    fn header_is_case_insensitive() {
        let recs = parse_records("T_S,CONC_MM,I_a\n0,1,1e-6\n".as_bytes()).unwrap();
        assert_eq!(recs[0].t_s, Some(0.0));
        assert_eq!(recs[0].current, Some(1e-6));
    }

    #[test]
    fn format_errors() {
        assert!(matches!(
            parse_records("".as_bytes()),
            Err(Error::Format(_))
        ));
        assert!(matches!(
            parse_records("conc_mM,x\n1,2\n".as_bytes()),
            Err(Error::Format(_))
        ));
        assert!(matches!(
            parse_records("conc_mM,v_V\n".as_bytes()),
            Err(Error::Format(_))
        ));
        match parse_records("conc_mM,v_V\n1,1.2\n2,abc\n".as_bytes()) {
            Err(Error::Parse { line, message }) => {
                assert_eq!(line, 3);
                assert!(message.contains("abc"));
            }
            other => panic!("{other:?}"),
        }
        assert!(parse_records("conc_mM,v_V\n-1,1.2\n".as_bytes()).is_err());
        assert!(parse_records("conc_mM,v_V\n1,\n".as_bytes()).is_err());
    }

    #[test]
    fn endpoint_curve() {
        let c = endpoint_voltage_curve();
        assert!((c.slope - 0.48 / 9.0).abs() < 1e-12);
        assert!((c.intercept - (1.19 - 0.48 / 9.0)).abs() < 1e-12);
        assert!((c.slope - 0.05333).abs() < 1e-5);
        assert!((c.intercept - 1.13667).abs() < 1e-5);
        assert_eq!(c.r_squared, 1.0);
        assert_eq!(c.domain, [1.0, 10.0]);
        assert!((concentration_from_voltage(&c, 1.67).unwrap().value - 10.0).abs() < 1e-9);
        assert!((concentration_from_voltage(&c, 1.19).unwrap().value - 1.0).abs() < 1e-9);
        assert!((concentration_from_voltage(&c, 1.43).unwrap().value - 5.5).abs() < 1e-6);
        let out = concentration_from_voltage(&c, 2.0).unwrap();
        assert!(!out.in_domain);
    }

    #[test]
    fn degenerate_and_wrong_target() {
        assert!(matches!(
            fit_linear(&[(2.0, 1.0), (2.0, 1.5)], Target::Voltage),
            Err(Error::DegenerateFit(_))
        ));
        let flat = CalibrationCurve {
            slope: 0.0,
            intercept: 1.0,
            r_squared: 1.0,
            domain: [1.0, 10.0],
            target: Target::Voltage,
        };
        assert!(matches!(
            concentration_from_voltage(&flat, 1.0),
            Err(Error::NonInvertible)
        ));
        assert!(concentration_from_current(&flat, 1.0).is_err());
    }

    #[test]
    fn current_curve_evaluation() {
        let curve = synthetic_current_curve();
        let at_min = sensor_current_from_concentration(&curve, 1.0).unwrap();
        assert_eq!(at_min.value, curve.slope * 1.0 + curve.intercept);
        assert!(at_min.in_domain);
        assert_eq!(
            sensor_current_from_concentration(&curve, 0.0)
                .unwrap()
                .value,
            curve.intercept
        );
        for c in [1.0, 3.3, 7.25, 10.0] {
            let i = sensor_current_from_concentration(&curve, c).unwrap().value;
            let back = concentration_from_current(&curve, i).unwrap().value;
            assert!((back - c).abs() < 1e-9);
        }
        assert!(sensor_current_from_concentration(&curve, -1.0).is_err());
    }

    #[test]
    fn curve_text_round_trip() {
        let c = endpoint_voltage_curve();
        let text = c.to_text();
        assert!(text.contains("target = \"voltage\""));
        assert_eq!(CalibrationCurve::from_text(&text).unwrap(), c);
        assert!(CalibrationCurve::from_text("slope = 1.0").is_err());
    }

    #[test]
    fn cv_peaks_split_on_reversal() {
        let mut s = String::from("v_V,i_A\n");
        for (v, i) in [
            (0.0, 1.0),
            (0.1, 3.0),
            (0.2, 2.0),
            (0.1, -5.0),
            (0.0, -1.0),
            (0.1, 0.5),
        ] {
            s += &format!("{v},{i}\n");
        }
        let recs = parse_records(s.as_bytes()).unwrap();
        assert_eq!(cv_peak_currents(&recs).unwrap(), vec![3.0, 5.0, 1.0]);
    }
}
