//! Browser bindings. Each exported function takes plain values and returns a
//! JSON string; errors come back as a thrown string.

use polarq::algebra::Quasigroup;
use polarq::dmc::{mutual_information, Dmc};
use polarq::linmac::{loss_report, BinaryState};
use polarq::macpolar::{mac_minus, mac_plus, rate_region, MacChannel};
use polarq::polarize::{survey, Sign, SignSequence, SurveyConfig, SurveyMode};
use serde::Serialize;
use wasm_bindgen::prelude::*;

/// Largest depth the page may request for an exact survey.
pub const MAX_SURVEY_DEPTH: u32 = 12;
pub const MAX_LOSS_DEPTH: u32 = 60;
pub const MAX_MAC_DEPTH: u32 = 4;

fn parse_channel(spec: &str) -> Result<Dmc, String> {
    let spec = spec.trim();
    if spec.starts_with('{') {
        serde_json::from_str(spec).map_err(|e| e.to_string())
    } else {
        Dmc::builtin(spec).map_err(|e| e.to_string())
    }
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct BranchPoint {
    index: u64,
    signs: String,
    info: f64,
    /// Block count of the matched partition, 0 when unclassified.
    blocks: usize,
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct SurveyView {
    branches: Vec<BranchPoint>,
    classified_fraction: f64,
    mean_info: f64,
    base_info: f64,
    log2q: f64,
}

/// Exact survey of every branch at `depth`.
pub fn survey_view(channel: &str, quasigroup: &str, depth: u32, delta: f64) -> Result<String, String> {
    if depth > MAX_SURVEY_DEPTH {
        return Err(format!("depth is limited to {MAX_SURVEY_DEPTH} in the browser"));
    }
    let p = parse_channel(channel)?;
    let g = if quasigroup.trim().is_empty() {
        Quasigroup::cyclic(p.inputs())
    } else {
        Quasigroup::builtin(quasigroup.trim()).map_err(|e| e.to_string())?
    };
    let mut cfg = SurveyConfig::new(depth, SurveyMode::Exact);
    cfg.delta = delta;
    let s = survey(&p, &g, &cfg).map_err(|e| e.to_string())?;
    let view = SurveyView {
        branches: s
            .reports
            .iter()
            .map(|b| BranchPoint {
                index: b.signs.index(),
                signs: b.signs.to_string(),
                info: b.mutual_info,
                blocks: b.matched_partition.as_ref().map_or(0, |h| h.partition().block_count()),
            })
            .collect(),
        classified_fraction: s.classified_fraction,
        mean_info: s.mean_info,
        base_info: s.base.mutual_info,
        log2q: (g.size() as f64).log2(),
    };
    Ok(serde_json::to_string(&view).expect("serialisable"))
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct LossPoint {
    n: usize,
    p: [f64; 5],
    i1: f64,
    i2: f64,
    isum: f64,
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct LossView {
    trajectory: Vec<LossPoint>,
    analytic_loss: bool,
    maximal_loss_detected: bool,
}

/// Averaged trajectory of the binary two-user state. Weights are normalised
/// here so sliders need not sum to one.
pub fn loss_view(weights: &[f64], depth: u32, resolution: f64) -> Result<String, String> {
    if depth > MAX_LOSS_DEPTH {
        return Err(format!("depth is limited to {MAX_LOSS_DEPTH}"));
    }
    let w: [f64; 5] = weights.try_into().map_err(|_| "expected five weights".to_string())?;
    let total: f64 = w.iter().sum();
    if w.iter().any(|&v| !(v >= 0.0)) || !(total > 0.0) {
        return Err("weights must be nonnegative with a positive sum".into());
    }
    let st = BinaryState::new(w.map(|v| v / total)).map_err(|e| e.to_string())?;
    let r = loss_report(&st, depth, resolution);
    let view = LossView {
        trajectory: r
            .trajectory
            .iter()
            .enumerate()
            .map(|(n, s)| LossPoint { n, p: s.0, i1: s.i1(), i2: s.i2(), isum: s.isum() })
            .collect(),
        analytic_loss: r.analytic_loss,
        maximal_loss_detected: r.maximal_loss_detected,
    };
    Ok(serde_json::to_string(&view).expect("serialisable"))
}

/// Two binary users; the real sum `x₁ + x₂ ∈ {0,1,2}` is erased with
/// probability `erasure`.
pub fn erased_adder(erasure: f64) -> Result<MacChannel, String> {
    if !(0.0..=1.0).contains(&erasure) {
        return Err("erasure probability must lie in [0, 1]".into());
    }
    let rows: Vec<Vec<f64>> = (0..4)
        .map(|x| {
            let mut r = vec![0.0; 4];
            r[(x >> 1) + (x & 1)] = 1.0 - erasure;
            r[3] += erasure;
            r
        })
        .collect();
    let ch = Dmc::from_rows(&rows).map_err(|e| e.to_string())?;
    MacChannel::new(vec![2, 2], ch).map_err(|e| e.to_string())
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct RegionView {
    signs: String,
    /// `I[{1}]`, `I[{2}]`, `I[{1,2}]` in bits.
    i1: f64,
    i2: f64,
    isum: f64,
    vertices: Vec<Vec<f64>>,
    base_isum: f64,
}

/// Rate region of the erased adder after the transforms named by `signs`
/// (a string of `-` and `+`, first step first).
pub fn region_view(erasure: f64, signs: &str) -> Result<String, String> {
    let seq = signs.trim().parse::<SignSequence>().map_err(|e| e.to_string())?;
    if seq.len() > MAX_MAC_DEPTH {
        return Err(format!("at most {MAX_MAC_DEPTH} steps"));
    }
    let base = erased_adder(erasure)?;
    let mut ch = base.clone();
    for s in seq.signs() {
        ch = match s {
            Sign::Minus => mac_minus(&ch),
            Sign::Plus => mac_plus(&ch),
        }
        .map_err(|e| e.to_string())?;
    }
    let r = rate_region(&ch).map_err(|e| e.to_string())?;
    let view = RegionView {
        signs: seq.to_string(),
        i1: r.get(0b01),
        i2: r.get(0b10),
        isum: r.get(0b11),
        vertices: r.dominant_vertices(),
        base_isum: mutual_information(base.channel()),
    };
    Ok(serde_json::to_string(&view).expect("serialisable"))
}

#[wasm_bindgen]
pub fn survey_histogram(channel: &str, quasigroup: &str, depth: u32, delta: f64) -> Result<String, JsValue> {
    survey_view(channel, quasigroup, depth, delta).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn binary_loss(weights: &[f64], depth: u32, resolution: f64) -> Result<String, JsValue> {
    loss_view(weights, depth, resolution).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn mac_region(erasure: f64, signs: &str) -> Result<String, JsValue> {
    region_view(erasure, signs).map_err(|e| JsValue::from_str(&e))
}
