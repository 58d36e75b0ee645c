//! Per-tile attribution of the unsolvability prediction.
//!
//! Both methods attribute the pre-squash logit of the "unsolvable" class
//! against a baseline input (the all-zeros tensor by default) and aggregate
//! the four channel attributions of each cell by summation:
//!
//! - Integrated Gradients averages input gradients along the straight path
//!   from baseline to input (right-endpoint rule with `steps` samples).
//! - The DeepLIFT rescale rule propagates multipliers backward, dividing
//!   activation deltas by pre-activation deltas at each rectifier. With a
//!   single baseline this is the deterministic core of Deep SHAP, so its
//!   output is tagged `SHAP-style`.

use std::fmt;
use std::str::FromStr;

use crate::classifier::{ClassifierError, MlpModel};
use crate::level::{Level, OneHotTensor};

/// Rescale threshold: below this pre-activation delta the local derivative
/// is used instead of the delta ratio.
const RESCALE_EPS: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AttributionMethod {
    /// DeepLIFT-rescale with a single baseline.
    ShapStyle,
    IntegratedGradients,
    Uniform,
}

impl fmt::Display for AttributionMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            AttributionMethod::ShapStyle => "SHAP-style",
            AttributionMethod::IntegratedGradients => "IG",
            AttributionMethod::Uniform => "UNI",
        };
        f.write_str(s)
    }
}

impl FromStr for AttributionMethod {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "shap" | "shap-style" | "shapstyle" => Ok(AttributionMethod::ShapStyle),
            "ig" | "integrated-gradients" => Ok(AttributionMethod::IntegratedGradients),
            "uni" | "uniform" => Ok(AttributionMethod::Uniform),
            other => Err(format!("unknown attribution method {other:?}")),
        }
    }
}

/// Per-cell real attributions (channel-aggregated).
#[derive(Debug, Clone, PartialEq)]
pub struct AttributionGrid {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
    method: AttributionMethod,
}

impl AttributionGrid {
    pub fn new(rows: usize, cols: usize, values: Vec<f64>, method: AttributionMethod) -> AttributionGrid {
        assert_eq!(values.len(), rows * cols);
        assert!(values.iter().all(|v| v.is_finite()), "attributions must be finite");
        AttributionGrid { rows, cols, values, method }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.cols + col]
    }

    pub fn method(&self) -> AttributionMethod {
        self.method
    }

    pub fn total(&self) -> f64 {
        self.values.iter().sum()
    }

    /// CSV grid, one row per line.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for r in 0..self.rows {
            let row: Vec<String> = (0..self.cols).map(|c| format!("{}", self.get(r, c))).collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str, method: AttributionMethod) -> Result<AttributionGrid, String> {
        let mut values = Vec::new();
        let mut cols = None;
        let mut rows = 0;
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            let row: Result<Vec<f64>, _> = line.split(',').map(|v| v.trim().parse::<f64>()).collect();
            let row = row.map_err(|e| format!("bad value in attribution csv: {e}"))?;
            match cols {
                None => cols = Some(row.len()),
                Some(c) if c != row.len() => return Err("ragged attribution csv".to_string()),
                _ => {}
            }
            values.extend(row);
            rows += 1;
        }
        let cols = cols.ok_or_else(|| "empty attribution csv".to_string())?;
        Ok(AttributionGrid::new(rows, cols, values, method))
    }
}

/// Metadata JSON written alongside attribution dumps.
pub fn attribution_metadata(method: AttributionMethod, steps: Option<usize>, model_hash: &str) -> String {
    let meta = serde_json::json!({
        "method": method.to_string(),
        "baseline": "zeros",
        "steps": steps,
        "model_hash": model_hash,
    });
    serde_json::to_string_pretty(&meta).expect("metadata serialize")
}

fn check_baseline(model: &MlpModel, baseline: &OneHotTensor) -> Result<(), ClassifierError> {
    if baseline.rows() != model.rows() || baseline.cols() != model.cols() {
        return Err(ClassifierError::DimMismatch {
            got_rows: baseline.rows(),
            got_cols: baseline.cols(),
            rows: model.rows(),
            cols: model.cols(),
        });
    }
    Ok(())
}

pub(crate) fn aggregate_channels(rows: usize, cols: usize, raw: &[f64]) -> Vec<f64> {
    debug_assert_eq!(raw.len(), rows * cols * 4);
    (0..rows * cols).map(|i| raw[i * 4..i * 4 + 4].iter().sum()).collect()
}

/// Integrated Gradients of the unsolvable logit.
///
/// `a_e = (x_e - x'_e) * mean_k grad_e(x' + (k/steps)(x - x'))` for
/// `k = 1..steps`, then channels are summed per cell.
pub fn integrated_gradients(
    model: &MlpModel,
    level: &Level,
    steps: usize,
    baseline: &OneHotTensor,
) -> Result<AttributionGrid, ClassifierError> {
    assert!(steps >= 1, "steps must be at least 1");
    let x = level.to_onehot();
    model.grad_input(&x)?; // dim check
    check_baseline(model, baseline)?;

    let n = x.data().len();
    let mut grad_sum = vec![0.0; n];
    let mut point = vec![0.0; n];
    for k in 1..=steps {
        let t = k as f64 / steps as f64;
        for i in 0..n {
            point[i] = baseline.data()[i] + t * (x.data()[i] - baseline.data()[i]);
        }
        let g = model.grad_input_raw(&point);
        for i in 0..n {
            grad_sum[i] += g[i];
        }
    }
    let raw: Vec<f64> = (0..n)
        .map(|i| (x.data()[i] - baseline.data()[i]) * grad_sum[i] / steps as f64)
        .collect();
    Ok(AttributionGrid::new(
        level.rows(),
        level.cols(),
        aggregate_channels(level.rows(), level.cols(), &raw),
        AttributionMethod::IntegratedGradients,
    ))
}

/// DeepLIFT rescale-rule attribution of the unsolvable logit.
///
/// Multipliers pass through affine layers via transposed weights; each
/// rectifier uses delta-out over delta-in when the pre-activation delta is
/// meaningful, otherwise the local derivative. Satisfies summation-to-delta:
/// the attributions sum to `logit(x) - logit(baseline)`.
pub fn deeplift_rescale(
    model: &MlpModel,
    level: &Level,
    baseline: &OneHotTensor,
) -> Result<AttributionGrid, ClassifierError> {
    let x = level.to_onehot();
    model.grad_input(&x)?; // dim check
    check_baseline(model, baseline)?;

    let trace_x = model.forward_trace(x.data(), None);
    let trace_b = model.forward_trace(baseline.data(), None);

    let mut multipliers = vec![1.0];
    for li in (0..3).rev() {
        let layer = &model.layers[li];
        let mut m_in = vec![0.0; layer.in_dim];
        layer.backward_input(&multipliers, &mut m_in);
        if li > 0 {
            let zx = &trace_x.z[li - 1];
            let zb = &trace_b.z[li - 1];
            for (j, m) in m_in.iter_mut().enumerate() {
                let dz = zx[j] - zb[j];
                let ratio = if dz.abs() > RESCALE_EPS {
                    (zx[j].max(0.0) - zb[j].max(0.0)) / dz
                } else if zx[j] > 0.0 {
                    1.0
                } else {
                    0.0
                };
                *m *= ratio;
            }
        }
        multipliers = m_in;
    }
    let raw: Vec<f64> = multipliers
        .iter()
        .zip(x.data().iter().zip(baseline.data().iter()))
        .map(|(m, (xi, bi))| m * (xi - bi))
        .collect();
    Ok(AttributionGrid::new(
        level.rows(),
        level.cols(),
        aggregate_channels(level.rows(), level.cols(), &raw),
        AttributionMethod::ShapStyle,
    ))
}

/// The uniform baseline: every cell gets the constant 1.0.
pub fn uniform_attribution(level: &Level) -> AttributionGrid {
    AttributionGrid::new(
        level.rows(),
        level.cols(),
        vec![1.0; level.rows() * level.cols()],
        AttributionMethod::Uniform,
    )
}

/// Computes an attribution grid by method name, using the all-zeros baseline.
pub fn attribute(
    model: &MlpModel,
    level: &Level,
    method: AttributionMethod,
    steps: usize,
) -> Result<AttributionGrid, ClassifierError> {
    match method {
        AttributionMethod::Uniform => Ok(uniform_attribution(level)),
        AttributionMethod::IntegratedGradients => {
            let baseline = OneHotTensor::zeros(level.rows(), level.cols());
            integrated_gradients(model, level, steps, &baseline)
        }
        AttributionMethod::ShapStyle => {
            let baseline = OneHotTensor::zeros(level.rows(), level.cols());
            deeplift_rescale(model, level, &baseline)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifier::tests::effective_linear_model;
    use crate::level::TileKind;

    fn small_level() -> Level {
        Level::parse("{-X\n--}").unwrap()
    }

    #[test]
    fn uniform_is_all_ones() {
        let mut cells = vec![TileKind::Empty; 15 * 12];
        cells[0] = TileKind::Start;
        cells[179] = TileKind::Goal;
        let l = Level::new(15, 12, cells, "cave").unwrap();
        let g = uniform_attribution(&l);
        assert_eq!(g.values().len(), 180);
        assert!(g.values().iter().all(|v| *v == 1.0));
        assert_eq!(g.method(), AttributionMethod::Uniform);
    }

    #[test]
    fn linear_model_closed_form() {
        let l = small_level();
        let d = l.rows() * l.cols() * 4;
        let w: Vec<f64> = (0..d).map(|i| (i as f64 * 0.731).sin()).collect();
        let model = effective_linear_model(l.rows(), l.cols(), &w, 0.2);
        let baseline = OneHotTensor::zeros(l.rows(), l.cols());
        let x = l.to_onehot();

        for steps in [1, 7, 64] {
            let ig = integrated_gradients(&model, &l, steps, &baseline).unwrap();
            // closed form: per entry w_e * (x_e - 0), summed per cell
            for r in 0..l.rows() {
                for c in 0..l.cols() {
                    let cell = r * l.cols() + c;
                    let expected: f64 =
                        (0..4).map(|ch| w[cell * 4 + ch] * x.data()[cell * 4 + ch]).sum();
                    assert!((ig.get(r, c) - expected).abs() < 1e-9, "steps {steps}");
                }
            }
        }

        let dl = deeplift_rescale(&model, &l, &baseline).unwrap();
        let ig = integrated_gradients(&model, &l, 16, &baseline).unwrap();
        for (a, b) in dl.values().iter().zip(ig.values().iter()) {
            assert!((a - b).abs() <= 1e-9);
        }
    }

    #[test]
    fn input_equal_to_baseline_gives_zero() {
        let l = small_level();
        let model = MlpModel::init(l.rows(), l.cols(), 10, 6, 4);
        let baseline = l.to_onehot();
        let ig = integrated_gradients(&model, &l, 32, &baseline).unwrap();
        assert!(ig.values().iter().all(|v| *v == 0.0));
        let dl = deeplift_rescale(&model, &l, &baseline).unwrap();
        assert!(dl.values().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn rescale_summation_to_delta() {
        let l = small_level();
        let model = MlpModel::init(l.rows(), l.cols(), 12, 8, 21);
        let baseline = OneHotTensor::zeros(l.rows(), l.cols());
        let dl = deeplift_rescale(&model, &l, &baseline).unwrap();
        let delta = model.logit(&l.to_onehot()).unwrap() - model.logit_raw(baseline.data());
        assert!((dl.total() - delta).abs() <= 1e-6, "sum {} vs delta {}", dl.total(), delta);
    }

    #[test]
    fn ig_completeness_improves_with_steps() {
        let l = small_level();
        let model = MlpModel::init(l.rows(), l.cols(), 12, 8, 21);
        let baseline = OneHotTensor::zeros(l.rows(), l.cols());
        let delta = model.logit(&l.to_onehot()).unwrap() - model.logit_raw(baseline.data());
        let coarse = (integrated_gradients(&model, &l, 4, &baseline).unwrap().total() - delta).abs();
        let fine = (integrated_gradients(&model, &l, 512, &baseline).unwrap().total() - delta).abs();
        assert!(fine <= coarse + 1e-12);
        assert!(fine <= 1e-3 * delta.abs() + 1e-6, "residual {fine} vs delta {delta}");
    }

    #[test]
    fn aggregation_preserves_totals() {
        let raw: Vec<f64> = (0..24).map(|i| i as f64 * 0.5 - 3.0).collect();
        let agg = aggregate_channels(2, 3, &raw);
        let raw_total: f64 = raw.iter().sum();
        let agg_total: f64 = agg.iter().sum();
        assert!((raw_total - agg_total).abs() < 1e-12);
    }

    #[test]
    fn csv_round_trip() {
        let g = AttributionGrid::new(2, 2, vec![0.5, -1.25, 3.0, 0.0], AttributionMethod::IntegratedGradients);
        let back = AttributionGrid::from_csv(&g.to_csv(), AttributionMethod::IntegratedGradients).unwrap();
        assert_eq!(g, back);
    }

    #[test]
    fn method_parsing() {
        assert_eq!("shap".parse::<AttributionMethod>().unwrap(), AttributionMethod::ShapStyle);
        assert_eq!("SHAP-style".parse::<AttributionMethod>().unwrap(), AttributionMethod::ShapStyle);
        assert_eq!("IG".parse::<AttributionMethod>().unwrap(), AttributionMethod::IntegratedGradients);
        assert_eq!("uni".parse::<AttributionMethod>().unwrap(), AttributionMethod::Uniform);
        assert!("pixels".parse::<AttributionMethod>().is_err());
    }
}
