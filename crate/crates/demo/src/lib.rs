//! WebAssembly bindings for the browser demo: simulate one event and view
//! its scalogram, and explore ECOC code matrices and Hamming decoding.
//!
//! The plain Rust functions do the work and are tested natively; the
//! `#[wasm_bindgen]` wrappers only convert errors for JavaScript.

use hfo_core::ecoc::{build_code_matrix, decode, min_hamming_distance, CodingScheme};
use hfo_core::simgen::{
    add_noise, gen_event, EventClass, EventParams, SecondBurst, Snr, DEFAULT_FS_HZ,
    DEFAULT_WINDOW_S,
};
use hfo_core::tfr::{scalogram, ScalogramConfig};
use wasm_bindgen::prelude::*;

/// A simulated event with its scalogram.
#[wasm_bindgen]
#[derive(Debug, Clone)]
pub struct EventView {
    samples: Vec<f64>,
    map: Vec<f64>,
    size: usize,
    freq_axis_hz: Vec<f64>,
    ridge_hz: f64,
    fs_hz: f64,
}

#[wasm_bindgen]
impl EventView {
    pub fn samples(&self) -> Vec<f64> {
        self.samples.clone()
    }

    /// Row-major `size x size` map in `[0, 1]`, highest frequency first.
    pub fn map(&self) -> Vec<f64> {
        self.map.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn size(&self) -> usize {
        self.size
    }

    pub fn freq_axis_hz(&self) -> Vec<f64> {
        self.freq_axis_hz.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn ridge_hz(&self) -> f64 {
        self.ridge_hz
    }

    #[wasm_bindgen(getter)]
    pub fn fs_hz(&self) -> f64 {
        self.fs_hz
    }
}

/// Settings of one simulated event. `snr_db` of `None` means no noise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EventRequest {
    pub class: EventClass,
    pub freq_hz: f64,
    pub dur_s: f64,
    pub rel_amplitude: f64,
    pub overlap: f64,
    pub second_freq_hz: f64,
    pub snr_db: Option<f64>,
    pub seed: u64,
    pub image_size: usize,
}

pub fn simulate(req: &EventRequest) -> Result<EventView, String> {
    let mut params = EventParams::new(req.freq_hz, req.dur_s);
    params.fs_hz = DEFAULT_FS_HZ;
    params.window_s = DEFAULT_WINDOW_S;
    params.overlap_frac = req.overlap;
    if req.class == EventClass::SpikeRipple {
        params.rel_amplitude = req.rel_amplitude;
    }
    if req.class == EventClass::RippleAndFastRipple {
        params.second = Some(SecondBurst {
            freq_hz: req.second_freq_hz,
            dur_s: req.dur_s / 2.0,
        });
    }
    let snr = req.snr_db.map_or(Snr::Clean, Snr::Db);
    params.snr = snr;
    let clean = gen_event(req.class, &params, req.seed).map_err(|e| e.to_string())?;
    let seg = add_noise(&clean, snr, req.seed.wrapping_add(1)).map_err(|e| e.to_string())?;
    let cfg = ScalogramConfig {
        size: req.image_size,
        ..ScalogramConfig::default()
    };
    let map = scalogram(&seg, &cfg).map_err(|e| e.to_string())?;
    Ok(EventView {
        ridge_hz: map.ridge_frequency(),
        samples: seg.samples,
        size: map.size,
        freq_axis_hz: map.freq_axis_hz,
        map: map.values,
        fs_hz: seg.fs_hz,
    })
}

#[allow(clippy::too_many_arguments)]
#[wasm_bindgen(js_name = simulateEvent)]
pub fn simulate_event(
    class: &str,
    freq_hz: f64,
    dur_s: f64,
    rel_amplitude: f64,
    overlap: f64,
    second_freq_hz: f64,
    snr_db: f64,
    seed: u32,
    image_size: usize,
) -> Result<EventView, JsError> {
    let class: EventClass = class
        .parse()
        .map_err(|e: hfo_core::Error| JsError::new(&e.to_string()))?;
    simulate(&EventRequest {
        class,
        freq_hz,
        dur_s,
        rel_amplitude,
        overlap,
        second_freq_hz,
        snr_db: snr_db.is_finite().then_some(snr_db),
        seed: seed as u64,
        image_size,
    })
    .map_err(|e| JsError::new(&e))
}

/// A code matrix flattened row-major, with its shape and minimum distance.
#[wasm_bindgen]
#[derive(Debug, Clone)]
pub struct CodeView {
    entries: Vec<i8>,
    rows: usize,
    classes: usize,
    min_distance: usize,
}

#[wasm_bindgen]
impl CodeView {
    pub fn entries(&self) -> Vec<i8> {
        self.entries.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[wasm_bindgen(getter)]
    pub fn classes(&self) -> usize {
        self.classes
    }

    #[wasm_bindgen(getter)]
    pub fn min_distance(&self) -> usize {
        self.min_distance
    }

    /// Errors the decoder is guaranteed to correct.
    #[wasm_bindgen(getter)]
    pub fn correctable(&self) -> usize {
        self.min_distance.saturating_sub(1) / 2
    }
}

pub fn code(scheme: &str, classes: usize) -> Result<CodeView, String> {
    let scheme: CodingScheme = scheme.parse().map_err(|e: hfo_core::Error| e.to_string())?;
    let m = build_code_matrix(scheme, classes).map_err(|e| e.to_string())?;
    let entries = (0..m.rows()).flat_map(|r| m.row(r).to_vec()).collect();
    Ok(CodeView {
        entries,
        rows: m.rows(),
        classes: m.classes(),
        min_distance: min_hamming_distance(&m),
    })
}

#[wasm_bindgen(js_name = codeMatrix)]
pub fn code_matrix(scheme: &str, classes: usize) -> Result<CodeView, JsError> {
    code(scheme, classes).map_err(|e| JsError::new(&e))
}

/// Hamming distance to each class codeword for one decision vector, followed
/// by the decoded class index as the last element.
pub fn decode_values(
    scheme: &str,
    classes: usize,
    decision_values: &[f64],
) -> Result<Vec<f64>, String> {
    let scheme: CodingScheme = scheme.parse().map_err(|e: hfo_core::Error| e.to_string())?;
    let m = build_code_matrix(scheme, classes).map_err(|e| e.to_string())?;
    if decision_values.len() != m.rows() {
        return Err(format!(
            "expected {} decision values, got {}",
            m.rows(),
            decision_values.len()
        ));
    }
    let p = decode(&m, decision_values);
    let mut out = p.per_class_distance;
    out.push(p.class as f64);
    Ok(out)
}

#[wasm_bindgen(js_name = decodeDecisions)]
pub fn decode_decisions(
    scheme: &str,
    classes: usize,
    decision_values: &[f64],
) -> Result<Vec<f64>, JsError> {
    decode_values(scheme, classes, decision_values).map_err(|e| JsError::new(&e))
}
