use proptest::prelude::*;

use ptia_core::calibration::{
    concentration_from_current, concentration_from_voltage, fit_linear,
    sensor_current_from_concentration, voltage_from_concentration, CalibrationCurve, Target,
};
use ptia_core::chain::{iv_small_signal_gain, ptbta_gm, transimpedance_closed_form, ChainParams};
use ptia_core::control::{decode, gain_index, SelectWord};
use ptia_core::distortion::{thd, Waveform};
use ptia_core::noise::{input_referred_psd, integrate_rms, BandSpec, Branch, NoiseParams, Psd};
use ptia_core::stats::ols;
use ptia_core::variation::MetricStats;

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs())
}

fn branches_mut(p: &mut NoiseParams) -> [&mut Branch; 10] {
    [
        &mut p.b17, &mut p.b16, &mut p.b11, &mut p.b14, &mut p.b26, &mut p.b22, &mut p.b23,
        &mut p.b25, &mut p.b29, &mut p.b30,
    ]
}

fn noise_params() -> impl Strategy<Value = NoiseParams> {
    (
        prop::collection::vec((1.0f64..1.5, 0.5f64..2.0, -6.0f64..-3.0), 10),
        200.0f64..400.0,
        3.0f64..6.0,
        1u32..=8,
    )
        .prop_map(|(branches, temperature, r_exp, p)| {
            let mut params = NoiseParams {
                temperature,
                r_load: 10f64.powf(r_exp),
                p,
                ..NoiseParams::default()
            };
            for (b, (n, gamma, gm_exp)) in branches_mut(&mut params).into_iter().zip(branches) {
                *b = Branch::new(n, gamma, 10f64.powf(gm_exp));
            }
            params
        })
}

/// Same parameters with every branch except `keep` silenced.
fn restrict(p: &NoiseParams, keep: Option<usize>) -> NoiseParams {
    let mut q = p.clone();
    for (k, b) in branches_mut(&mut q).into_iter().enumerate() {
        if Some(k) != keep {
            b.gamma = 0.0;
        }
    }
    q
}

#[test]
fn select_value_orders_gain() {
    let words: Vec<SelectWord> = SelectWord::all().collect();
    for w in words.windows(2) {
        assert!(w[0].code() < w[1].code());
        assert!(gain_index(w[0]) < gain_index(w[1]));
    }
    for w in words {
        assert_eq!(gain_index(w), decode(w).zero_count());
        assert!(decode(w).is_thermometer());
        assert_eq!(w.to_string().parse::<SelectWord>().unwrap(), w);
    }
}

#[test]
fn noisy_line_slope_within_three_standard_errors() {
    let eps = 1e-3;
    let points: Vec<(f64, f64)> = (0..40)
        .map(|k| {
            let c = 1.0 + 0.25 * f64::from(k);
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            (c, 1.1 + 0.05 * c + sign * eps)
        })
        .collect();
    let (xs, ys): (Vec<f64>, Vec<f64>) = points.iter().copied().unzip();
    let fit = ols(&xs, &ys).unwrap();
    let curve = fit_linear(&points, Target::Voltage).unwrap();
    assert_eq!(curve.slope, fit.slope);
    assert!((fit.slope - 0.05).abs() <= 3.0 * fit.slope_std_err);
}

proptest! {
    #[test]
    fn open_loop_gain_is_plain_product(
        alpha in 0.9f64..=1.0,
        gm17 in 1e-6f64..1e-4,
        ratio in 0.0f64..0.95,
        r_z in 1e3f64..1e5,
        k in 5e-5f64..1e-3,
    ) {
        let p = ChainParams {
            alpha_c: alpha, gm17, gm11: 1e-3, gm12: ratio * 1e-3, r_z, k_proc: k, gm2: 0.0,
            ..ChainParams::default()
        };
        let product = p.alpha_c * ptbta_gm(&p).unwrap() * p.r_z * iv_small_signal_gain(&p).unwrap();
        prop_assert_eq!(transimpedance_closed_form(&p, 1).unwrap(), product);
    }

    #[test]
    fn psd_is_sum_of_single_branch_restrictions(p in noise_params()) {
        let total = input_referred_psd(&p).unwrap();
        let floor = input_referred_psd(&restrict(&p, None)).unwrap();
        let parts: f64 = (0..10)
            .map(|k| input_referred_psd(&restrict(&p, Some(k))).unwrap() - floor)
            .sum();
        prop_assert!(close(total, parts + floor, 1e-12), "{} vs {}", total, parts + floor);
    }

    #[test]
    fn input_pair_and_mirror_terms_scale(p in noise_params(), s in 1.01f64..10.0) {
        // input pair alone: proportional to 1/gm17
        let pair = restrict(&p, Some(0));
        let mut wide = pair.clone();
        wide.b17.gm *= s;
        let floor = input_referred_psd(&restrict(&p, None)).unwrap();
        let a = input_referred_psd(&pair).unwrap() - floor;
        let b = input_referred_psd(&wide).unwrap() - floor;
        prop_assert!(close(a / b, s, 1e-9));

        // mirror term: proportional to gm16 and to 1/gm17^2
        let mirror = restrict(&p, Some(1));
        let base = input_referred_psd(&mirror).unwrap() - floor;
        let mut up = mirror.clone();
        up.b16.gm *= s;
        prop_assert!(close((input_referred_psd(&up).unwrap() - floor) / base, s, 1e-9));
        let mut boosted = mirror.clone();
        boosted.b17.gm *= s;
        prop_assert!(close(base / (input_referred_psd(&boosted).unwrap() - floor), s * s, 1e-9));

        // boosting gm17 lowers the total
        let mut all = p.clone();
        all.b17.gm *= s;
        prop_assert!(input_referred_psd(&all).unwrap() < input_referred_psd(&p).unwrap());
    }

    #[test]
    fn rms_monotone_in_band_and_psd(
        s0 in 1e-18f64..1e-12,
        f_low in 0.0f64..100.0,
        width in 1.0f64..1e4,
        extra in 0.0f64..1e4,
        bump in 1.0f64..4.0,
    ) {
        let narrow = BandSpec { f_low, f_high: f_low + width };
        let broad = BandSpec { f_low, f_high: f_low + width + extra };
        prop_assert!(integrate_rms(&Psd::Flat(s0), &narrow).unwrap() <= integrate_rms(&Psd::Flat(s0), &broad).unwrap());
        let shaped = move |f: f64| s0 * (1.0 + 100.0 / (1.0 + f));
        let louder = move |f: f64| bump * shaped(f);
        let q = integrate_rms(&Psd::Shaped(&shaped), &narrow).unwrap();
        prop_assert!(q <= integrate_rms(&Psd::Shaped(&louder), &narrow).unwrap());
        prop_assert!(q <= integrate_rms(&Psd::Shaped(&shaped), &broad).unwrap());
        prop_assert!(integrate_rms(&Psd::Flat(s0), &narrow).unwrap() <= q);
    }

    #[test]
    fn thd_ignores_output_gain(
        h2 in 0.0f64..0.2,
        h3 in 0.0f64..0.1,
        phase in 0.0f64..std::f64::consts::TAU,
        gain in 1e-3f64..1e3,
        offset in -1.0f64..1.0,
    ) {
        let n = 8 * 256;
        let samples: Vec<f64> = (0..n)
            .map(|k| {
                let x = 2.0 * std::f64::consts::PI * (k % 256) as f64 / 256.0;
                x.sin() + h2 * (2.0 * x + phase).sin() + h3 * (3.0 * x).cos()
            })
            .collect();
        let w = Waveform { dt: 1.0 / (1e3 * 256.0), samples };
        let scaled = Waveform { dt: w.dt, samples: w.samples.iter().map(|v| offset + gain * v).collect() };
        let a = thd(&w, 1e3, 9).unwrap();
        prop_assert!(close(a, thd(&scaled, 1e3, 9).unwrap(), 1e-9));
        prop_assert!(close(a, (h2 * h2 + h3 * h3).sqrt(), 1e-9) || a < 1e-12);
    }

    #[test]
    fn statistics_ignore_sample_order(values in prop::collection::vec(-1e3f64..1e3, 2..200), seed in any::<u64>()) {
        let mut shuffled = values.clone();
        // deterministic Fisher-Yates driven by a 64-bit LCG
        let mut state = seed;
        for i in (1..shuffled.len()).rev() {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            shuffled.swap(i, (state >> 33) as usize % (i + 1));
        }
        let (a, b) = (MetricStats::from_values(&values), MetricStats::from_values(&shuffled));
        prop_assert_eq!(a.min, b.min);
        prop_assert_eq!(a.max, b.max);
        prop_assert!((a.mean - b.mean).abs() <= 1e-11);
        prop_assert!(close(a.std_dev, b.std_dev, 1e-10) || a.std_dev < 1e-9);
    }

    #[test]
    fn fit_ignores_order_and_duplication(
        points in prop::collection::vec((0.0f64..20.0, -5.0f64..5.0), 3..40),
        times in 2usize..4,
    ) {
        let mut xs: Vec<f64> = points.iter().map(|p| p.0).collect();
        xs.sort_by(f64::total_cmp);
        xs.dedup();
        prop_assume!(xs.len() >= 2 && xs[xs.len() - 1] - xs[0] > 1e-3);
        let base = fit_linear(&points, Target::Voltage).unwrap();
        let mut reversed = points.clone();
        reversed.reverse();
        let r = fit_linear(&reversed, Target::Voltage).unwrap();
        let dup: Vec<(f64, f64)> = points.iter().cycle().take(points.len() * times).copied().collect();
        let d = fit_linear(&dup, Target::Voltage).unwrap();
        let scale = 1.0 + base.slope.abs() * 20.0 + base.intercept.abs();
        for other in [r, d] {
            prop_assert!((other.slope - base.slope).abs() <= 1e-10 * scale);
            prop_assert!((other.intercept - base.intercept).abs() <= 1e-10 * scale);
            prop_assert_eq!(other.domain, base.domain);
        }
    }

    #[test]
    fn curves_round_trip(slope in 1e-3f64..1.0, intercept in -1.0f64..2.0, c in 0.0f64..20.0) {
        let v = CalibrationCurve { slope, intercept, r_squared: 1.0, domain: [1.0, 10.0], target: Target::Voltage };
        let back = concentration_from_voltage(&v, voltage_from_concentration(&v, c).unwrap().value).unwrap().value;
        prop_assert!((back - c).abs() <= 1e-9 * c.max(1.0));
        let i = CalibrationCurve { slope: slope * 1e-5, intercept: intercept * 1e-5, target: Target::Current, ..v };
        let back = concentration_from_current(&i, sensor_current_from_concentration(&i, c).unwrap().value).unwrap().value;
        prop_assert!((back - c).abs() < 1e-9 * c.max(1.0));
        prop_assert_eq!(CalibrationCurve::from_text(&v.to_text()).unwrap(), v);
    }
}
