use std::fs;
use std::path::Path;

use ptia_core::calibration::{
    concentration_from_current, concentration_from_voltage, cv_peak_currents,
    endpoint_voltage_curve, fit_chain_voltage_curve, fit_records, parse_records,
    sensor_current_from_concentration, synthetic_current_curve, voltage_from_concentration,
    CalibrationCurve, Conversion, Target,
};
use ptia_core::chain::{sweep_with, transimpedance_closed_form, GridScale, SweepSpec};
use ptia_core::control::{decode, gain_index, SelectWord};
use ptia_core::distortion::{self, simulate_transient, Stimulus, REFERENCE_THD_BAND};
use ptia_core::noise::{input_referred_psd, integrate_rms, psd_terms, BandSpec, Psd, BOLTZMANN};
use ptia_core::stats::ols;
use ptia_core::variation::{
    corner_eval, run_monte_carlo, BaseDesign, CornerAxis, CornerPoint, CornerTable, Metric,
};
use ptia_core::{Error, Result};

use crate::output::{emit, num, sig4, write_file, Chart, Table};
use crate::{
    Axis, CalibrateArgs, Context, ConvertArgs, CurveTarget, GainArgs, MonteCarloArgs, NoiseArgs,
    PvtArgs, Select, SweepArgs, ThdArgs,
};

fn gain_step(select: &Select) -> Result<u32> {
    Ok(gain_index(select.select.parse::<SelectWord>()?))
}

pub fn gain(ctx: &Context, args: &GainArgs) -> Result<()> {
    let sel: SelectWord = args.code.parse()?;
    let j = gain_index(sel);
    let z = transimpedance_closed_form(&ctx.profile.chain, j)?;
    println!("select = {sel}");
    println!("j = {j}");
    println!("control = {}", decode(sel));
    println!("transimpedance = {} ohm", sig4(z));
    Ok(())
}

pub fn sweep(ctx: &Context, args: &SweepArgs) -> Result<()> {
    let j = gain_step(&args.select)?;
    let base = &ctx.profile.sweep;
    let spec = SweepSpec {
        i_min: args.i_min.unwrap_or(base.i_min),
        i_max: args.i_max.unwrap_or(base.i_max),
        n_points: args.points.unwrap_or(base.n_points),
        scale: if args.log {
            GridScale::Logarithmic
        } else {
            base.scale
        },
    };
    let points = sweep_with(&spec, &ctx.profile.chain, j, &ctx.profile.models)?;

    let mut table = Table::new(["i_sen_A", "v_out_V", "saturated"]);
    for p in &points {
        table.push([
            num(p.i_sen),
            num(p.v_out),
            u8::from(p.saturated).to_string(),
        ]);
    }
    let xy: Vec<(f64, f64)> = points.iter().map(|p| (p.i_sen, p.v_out)).collect();
    let chart = Chart {
        title: "DC transfer",
        x_label: "i_sen (A)",
        y_label: "v_out (V)",
        points: xy.clone(),
    };
    emit(ctx, "sweep", &table, Some(chart))?;

    let (xs, ys): (Vec<f64>, Vec<f64>) = xy.into_iter().unzip();
    let fit = ols(&xs, &ys)?;
    let saturated = points.iter().filter(|p| p.saturated).count();
    println!(
        "j = {j}: v_out {} V .. {} V, slope {} ohm, R^2 = {}, saturated points {saturated}",
        sig4(ys[0]),
        sig4(ys[ys.len() - 1]),
        sig4(fit.slope),
        sig4(fit.r_squared)
    );
    Ok(())
}

pub fn noise(ctx: &Context, args: &NoiseArgs) -> Result<()> {
    let band = BandSpec {
        f_low: args.f_low.unwrap_or(ctx.profile.band.f_low),
        f_high: args.f_high.unwrap_or(ctx.profile.band.f_high),
    };
    let params = &ctx.profile.noise;
    let psd = input_referred_psd(params)?;
    let rms = integrate_rms(&Psd::Flat(psd), &band)?;
    println!("psd_V2_per_Hz,f_low_Hz,f_high_Hz,v_rms_V");
    println!(
        "{},{},{},{}",
        num(psd),
        num(band.f_low),
        num(band.f_high),
        num(rms)
    );
    if args.terms {
        let scale = 4.0 * BOLTZMANN * params.temperature;
        let names = [
            "b17", "b16", "b11", "b14", "b26", "b22", "b23", "b25", "b29", "b30", "r_load",
        ];
        println!();
        println!("term,psd_V2_per_Hz");
        for (name, t) in names.iter().zip(psd_terms(params)) {
            println!("{name},{}", num(scale * t));
        }
    }
    eprintln!(
        "input-referred noise {} uVrms over {} Hz .. {} Hz",
        sig4(rms * 1e6),
        sig4(band.f_low),
        sig4(band.f_high)
    );
    Ok(())
}

pub fn thd(ctx: &Context, args: &ThdArgs) -> Result<()> {
    let j = gain_step(&args.select)?;
    let stim = Stimulus {
        i_dc: args.i_dc.unwrap_or(ctx.profile.stimulus.i_dc),
        i_amp: args.i_amp,
        f0: args.f0.unwrap_or(ctx.profile.stimulus.f0),
    };
    let w = simulate_transient(
        &stim,
        &ctx.profile.chain,
        j,
        &ctx.profile.models,
        &ctx.profile.waveform,
    )?;
    let value = distortion::thd(&w, stim.f0, args.harmonics)?;

    let mut table = Table::new(["t_s", "v_out_V"]);
    for (t, v) in w.times().zip(&w.samples) {
        table.push([num(t), num(*v)]);
    }
    let chart = Chart {
        title: "Transient output",
        x_label: "t (s)",
        y_label: "v_out (V)",
        points: w.times().zip(w.samples.iter().copied()).collect(),
    };
    emit(ctx, "waveform", &table, Some(chart))?;
    println!(
        "THD = {} % (j = {j}, i_dc = {} A, i_amp = {} A, {} harmonics)",
        sig4(100.0 * value),
        sig4(stim.i_dc),
        sig4(stim.i_amp),
        args.harmonics
    );
    let (lo, hi) = REFERENCE_THD_BAND;
    if !(lo..=hi).contains(&value) {
        eprintln!(
            "note: THD outside the reference band {}..{} %",
            sig4(100.0 * lo),
            sig4(100.0 * hi)
        );
    }
    Ok(())
}

pub fn montecarlo(ctx: &Context, args: &MonteCarloArgs) -> Result<()> {
    let p = &ctx.profile;
    let mut spec = p.variation.clone();
    if let Some(seed) = ctx.seed {
        spec.seed = seed;
    }
    if let Some(n) = args.samples {
        spec.n_samples = n;
    }
    let base = BaseDesign {
        chain: p.chain.clone(),
        noise: p.noise.clone(),
        models: p.models,
        stimulus: p.stimulus,
        waveform: p.waveform,
        band: p.band,
        j: gain_step(&args.select)?,
    };
    let metrics = args
        .metric
        .iter()
        .map(|m| m.parse::<Metric>())
        .collect::<Result<Vec<_>>>()?;
    if args.threads == Some(0) {
        return Err(Error::Config("--threads must be >= 1".into()));
    }
    let report = run_monte_carlo(&spec, &base, &metrics, args.threads)?;

    let names: Vec<String> = metrics.iter().map(Metric::name).collect();
    let mut samples =
        Table::new(std::iter::once("sample".to_string()).chain(names.iter().cloned()));
    for (index, values) in &report.samples {
        samples.push(std::iter::once(index.to_string()).chain(values.iter().copied().map(num)));
    }
    let chart = Chart {
        title: &names[0],
        x_label: "sample",
        y_label: &names[0],
        points: report
            .samples
            .iter()
            .map(|(i, v)| (*i as f64, v[0]))
            .collect(),
    };
    emit(ctx, "montecarlo", &samples, Some(chart))?;

    let mut summary = Table::new(["metric", "mean", "std_dev", "min", "max", "count"]);
    for (name, s) in names.iter().zip(&report.stats) {
        summary.push([
            name.clone(),
            num(s.mean),
            num(s.std_dev),
            num(s.min),
            num(s.max),
            s.count.to_string(),
        ]);
    }
    write_file(ctx, "montecarlo_summary.csv", &summary.to_csv())?;
    if !report.rejected.is_empty() {
        let mut rejected = Table::new(["sample", "reason"]);
        for (i, why) in &report.rejected {
            rejected.push([i.to_string(), format!("\"{}\"", why.replace('"', "'"))]);
        }
        write_file(ctx, "montecarlo_rejected.csv", &rejected.to_csv())?;
    }
    for (name, s) in names.iter().zip(&report.stats) {
        println!("{name}: mean {} std {}", sig4(s.mean), sig4(s.std_dev));
    }
    println!(
        "seed {}, {} accepted, {} rejected",
        spec.seed,
        report.samples.len(),
        report.rejected.len()
    );
    Ok(())
}

pub fn pvt(ctx: &Context, args: &PvtArgs) -> Result<()> {
    let axis = match args.axis {
        Axis::Process => CornerAxis::Process,
        Axis::Supply => CornerAxis::Supply,
        Axis::Temperature => CornerAxis::Temperature,
    };
    let table = match &args.table {
        Some(path) => {
            let t = CornerTable::from_csv(open(path)?)?;
            if t.axis != axis {
                return Err(Error::Config(format!(
                    "{} holds the {} axis",
                    path.display(),
                    t.axis.header()
                )));
            }
            t
        }
        None => CornerTable::builtin(axis),
    };
    let queries: Vec<CornerPoint> = if args.at.is_empty() {
        table.rows.iter().map(|(p, _)| *p).collect()
    } else {
        args.at
            .iter()
            .map(|s| match axis {
                CornerAxis::Process => s.parse().map(CornerPoint::Process),
                _ => s
                    .trim()
                    .parse::<f64>()
                    .map(CornerPoint::Value)
                    .map_err(|_| Error::Config(format!("`{s}` is not a number"))),
            })
            .collect::<Result<_>>()?
    };

    let mut out = Table::new([axis.header(), "output_voltage_V", "irn_uV", "thd_pct"]);
    let mut points = Vec::new();
    for (k, q) in queries.iter().enumerate() {
        let m = corner_eval(&table, *q)?;
        out.push([
            q.to_string(),
            num(m.output_voltage),
            num(m.irn_uv),
            num(m.thd_pct),
        ]);
        let x = match q {
            CornerPoint::Value(v) => *v,
            CornerPoint::Process(_) => k as f64,
        };
        points.push((x, m.output_voltage));
    }
    let chart = Chart {
        title: "Output voltage across corners",
        x_label: axis.header(),
        y_label: "output_voltage_V",
        points,
    };
    emit(
        ctx,
        &format!("pvt_{}", axis.header().split('_').next().unwrap_or("axis")),
        &out,
        Some(chart),
    )?;
    println!(
        "{} corner points on the {} axis",
        queries.len(),
        axis.header()
    );
    Ok(())
}

fn open(path: &Path) -> Result<fs::File> {
    fs::File::open(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

pub fn calibrate(ctx: &Context, args: &CalibrateArgs) -> Result<()> {
    let target = match args.target {
        CurveTarget::Current => Target::Current,
        CurveTarget::Voltage => Target::Voltage,
    };
    if args.cv {
        let path = args
            .input
            .as_ref()
            .ok_or_else(|| Error::Config("--cv needs --input".into()))?;
        let records = parse_records(open(path)?)?;
        let peaks = cv_peak_currents(&records)?;
        let mut table = Table::new(["scan", "peak_i_A"]);
        for (k, p) in peaks.iter().enumerate() {
            table.push([(k + 1).to_string(), num(*p)]);
        }
        let chart = Chart {
            title: "Peak current per scan",
            x_label: "scan",
            y_label: "peak |i| (A)",
            points: peaks
                .iter()
                .enumerate()
                .map(|(k, p)| ((k + 1) as f64, *p))
                .collect(),
        };
        emit(ctx, "cv_peaks", &table, Some(chart))?;
        println!("{} scans", peaks.len());
        return Ok(());
    }

    let (curve, points) = match &args.input {
        Some(path) => {
            let records = parse_records(open(path)?)?;
            let curve = fit_records(&records, target)?;
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
            (curve, points)
        }
        None => {
            let p = &ctx.profile;
            let j = gain_step(&args.select)?;
            let current = synthetic_current_curve();
            let concs: Vec<f64> = (0..=18).map(|k| 1.0 + 0.5 * f64::from(k)).collect();
            let curve = match target {
                Target::Current => current,
                Target::Voltage => {
                    fit_chain_voltage_curve(&concs, &current, &p.chain, j, &p.models)?
                }
            };
            let points = concs
                .iter()
                .map(|&c| Ok((c, curve.slope * c + curve.intercept)))
                .collect::<Result<Vec<_>>>()?;
            (curve, points)
        }
    };
    write_file(ctx, "curve.txt", &curve.to_text())?;
    if ctx.formats.contains(&crate::Format::Svg) {
        let svg = ptia_core::plot::line_chart(
            "Calibration",
            "concentration (mM)",
            target.as_str(),
            &points,
        );
        write_file(ctx, "curve.svg", &svg)?;
    }
    println!(
        "{} = {} * c + {} (R^2 = {}, {}..{} mM)",
        target.as_str(),
        sig4(curve.slope),
        sig4(curve.intercept),
        sig4(curve.r_squared),
        sig4(curve.domain[0]),
        sig4(curve.domain[1])
    );
    Ok(())
}

fn report(label: &str, c: Conversion, unit: &str) {
    println!("{label} = {} {unit}", sig4(c.value));
    if !c.in_domain {
        eprintln!("warning: outside the fitted concentration domain (extrapolated)");
    }
}

pub fn convert(_ctx: &Context, args: &ConvertArgs) -> Result<()> {
    let curve = match &args.curve {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
            CalibrationCurve::from_text(&text).map_err(|e| match e {
                Error::Config(m) => Error::Format(format!("{}: {m}", path.display())),
                other => other,
            })?
        }
        None => endpoint_voltage_curve(),
    };
    if let Some(v) = args.voltage {
        report(
            "concentration",
            concentration_from_voltage(&curve, v)?,
            "mM",
        );
    } else if let Some(i) = args.current {
        report(
            "concentration",
            concentration_from_current(&curve, i)?,
            "mM",
        );
    } else if let Some(c) = args.conc {
        match curve.target {
            Target::Voltage => report("voltage", voltage_from_concentration(&curve, c)?, "V"),
            Target::Current => report(
                "current",
                sensor_current_from_concentration(&curve, c)?,
                "A",
            ),
        }
    }
    Ok(())
}
