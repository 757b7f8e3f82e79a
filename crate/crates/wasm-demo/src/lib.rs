//! Browser bindings for the demo page in `www/`.
//!
//! Tables cross the boundary as flat `Float64Array`s, row-major, with the row
//! width documented on each export. Missing values are `NaN`.

use wasm_bindgen::prelude::*;

use sface_core::analysis::angle_stats;
use sface_core::margin::margin_v_curves;
use sface_core::rescale::{v_curves, CurvePoint};
use sface_core::synthetic::{generate, DatasetSpec};
use sface_core::trainer::{train, LossConfig, TrainConfig};
use sface_core::{MarginSpec, MarginVariant, RescaleFamily, RescaleSpec};

fn js_err(e: sface_core::Error) -> JsError {
    JsError::new(&e.to_string())
}

fn flatten(points: &[CurvePoint]) -> Vec<f64> {
    points.iter().flat_map(|p| [p.theta, p.v_intra, p.v_inter]).collect()
}

fn margin_spec(variant: &str, s: f64, m: f64) -> Result<MarginSpec, JsError> {
    let variant: MarginVariant = variant.parse().map_err(js_err)?;
    Ok(match variant {
        MarginVariant::Softmax => MarginSpec::softmax(),
        MarginVariant::NSoftmax => MarginSpec::nsoftmax(s),
        MarginVariant::CosFace => MarginSpec::cosface(s, m),
        MarginVariant::ArcFace => MarginSpec::arcface(s, m),
        MarginVariant::Combined => MarginSpec::combined(s, 1.0, m, 0.2),
    })
}

/// Re-scale speed curves, rows `[theta, v_intra, v_inter]`.
#[wasm_bindgen]
pub fn rescale_curves(family: &str, s: f64, k: f64, a: f64, b: f64, points: usize) -> Result<Vec<f64>, JsError> {
    let family: RescaleFamily = family.parse().map_err(js_err)?;
    let spec = RescaleSpec { family, s, k, a, b };
    v_curves(&spec, points).map(|c| flatten(&c)).map_err(js_err)
}

/// Margin-loss speed curves with every non-target angle pinned at
/// `reference_angle`, rows `[theta, v_intra, v_inter]`. For `combined`, `m`
/// is the additive angular term and the other two margins are fixed at 1 and 0.2.
#[wasm_bindgen]
pub fn margin_curves(
    variant: &str,
    s: f64,
    m: f64,
    num_classes: usize,
    reference_angle: f64,
    points: usize,
) -> Result<Vec<f64>, JsError> {
    let spec = margin_spec(variant, s, m)?;
    margin_v_curves(&spec, num_classes, reference_angle, points)
        .map(|c| flatten(&c))
        .map_err(js_err)
}

/// Train on a small noisy dataset and return the trace, rows
/// `[step, loss, clean_intra_deg, noisy_intra_deg, inter_deg]`, followed by
/// one final row `[-1, delta_intra, inter_mean, inter_std, max_norm_drift]`.
///
/// `loss` is `sface` (sigmoid, s=64, k=80, cutoffs `a`, `b`) or a margin
/// variant name using `s = 64` and margin `m`.
#[allow(clippy::too_many_arguments)]
#[wasm_bindgen]
pub fn train_demo(
    loss: &str,
    a: f64,
    b: f64,
    m: f64,
    flip_rate: f64,
    steps: usize,
    seed: u64,
) -> Result<Vec<f64>, JsError> {
    let loss = if loss == "sface" {
        LossConfig::SFace(RescaleSpec::sigmoid(64.0, 80.0, a, b))
    } else {
        LossConfig::Margin(margin_spec(loss, 64.0, m)?)
    };
    let dataset = DatasetSpec {
        num_classes: 6,
        per_class: 40,
        dim: 8,
        flip_rate,
        seed,
        ..DatasetSpec::default()
    };
    let data = generate(&dataset).map_err(js_err)?;
    let mut cfg = TrainConfig::new(loss, steps);
    cfg.seed = seed;
    let out = train(&data, &cfg).map_err(js_err)?;
    let stats = angle_stats(&out.embeddings, &out.centers, &data.noise_mask).map_err(js_err)?;

    let mut table: Vec<f64> = out
        .trace
        .snapshots
        .iter()
        .flat_map(|s| {
            [
                s.step as f64,
                s.loss,
                s.clean_intra_deg,
                s.noisy_intra_deg.unwrap_or(f64::NAN),
                s.inter_deg,
            ]
        })
        .collect();
    table.extend([
        -1.0,
        stats.delta_intra.unwrap_or(f64::NAN),
        stats.inter_mean,
        stats.inter_std,
        out.final_snapshot().max_norm_drift,
    ]);
    Ok(table)
}
