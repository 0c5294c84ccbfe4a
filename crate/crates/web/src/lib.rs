//! Browser bindings for the readout-chain simulator: DC transfer curve,
//! harmonic distortion of a sinusoidal drive, and gain/noise summary for
//! the shipped calibrated profile.

use ptia_core::chain::{sweep, transimpedance_closed_form, SweepSpec};
use ptia_core::control::{decode, gain_index, SelectWord};
use ptia_core::distortion::{simulate_transient, thd, Stimulus, DEFAULT_HARMONICS};
use ptia_core::noise::{input_referred_psd, integrate_rms, BandSpec, Psd};
use ptia_core::Profile;
use wasm_bindgen::prelude::*;

fn step(code: &str) -> Result<(SelectWord, u32), String> {
    let sel: SelectWord = code.parse().map_err(|e: ptia_core::Error| e.to_string())?;
    Ok((sel, gain_index(sel)))
}

/// Interleaved (i_sen, v_out) pairs over the detection window.
pub fn transfer_points(code: &str, n_points: usize) -> Result<Vec<f64>, String> {
    let p = Profile::calibrated();
    let (_, j) = step(code)?;
    let spec = SweepSpec {
        n_points,
        ..p.sweep
    };
    let pts = sweep(&spec, &p.chain, j).map_err(|e| e.to_string())?;
    Ok(pts.iter().flat_map(|q| [q.i_sen, q.v_out]).collect())
}

/// One period of the output waveform followed by the THD in percent.
pub fn distortion(code: &str, i_amp: f64) -> Result<Vec<f64>, String> {
    let p = Profile::calibrated();
    let (_, j) = step(code)?;
    let stim = Stimulus {
        i_amp,
        ..p.stimulus
    };
    let w = simulate_transient(&stim, &p.chain, j, &p.models, &p.waveform)
        .map_err(|e| e.to_string())?;
    let t = thd(&w, stim.f0, DEFAULT_HARMONICS).map_err(|e| e.to_string())?;
    let mut out = w.samples[..p.waveform.samples_per_period].to_vec();
    out.push(100.0 * t);
    Ok(out)
}

/// Control vector, transimpedance and input-referred noise over a band.
pub fn summary(code: &str, f_low: f64, f_high: f64) -> Result<String, String> {
    let p = Profile::calibrated();
    let (sel, j) = step(code)?;
    let z = transimpedance_closed_form(&p.chain, j).map_err(|e| e.to_string())?;
    let psd = input_referred_psd(&p.noise).map_err(|e| e.to_string())?;
    let rms =
        integrate_rms(&Psd::Flat(psd), &BandSpec { f_low, f_high }).map_err(|e| e.to_string())?;
    Ok(format!(
        "j = {j}, control {}, transimpedance {:.1} kOhm, noise {:.3} uVrms",
        decode(sel),
        z / 1e3,
        rms * 1e6
    ))
}

#[wasm_bindgen(js_name = transferCurve)]
pub fn transfer_curve(code: &str, n_points: usize) -> Result<Vec<f64>, JsError> {
    transfer_points(code, n_points).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = distortionWaveform)]
pub fn distortion_waveform(code: &str, i_amp: f64) -> Result<Vec<f64>, JsError> {
    distortion(code, i_amp).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = gainSummary)]
pub fn gain_summary(code: &str, f_low: f64, f_high: f64) -> Result<String, JsError> {
    summary(code, f_low, f_high).map_err(|e| JsError::new(&e))
}
