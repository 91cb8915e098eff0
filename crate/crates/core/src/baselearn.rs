//! Base learners shared by every meta-learner: binary logistic regression
//! (outcome and propensity models) fit by full-batch gradient descent, and
//! ridge linear regression (pseudo-effect regressions) solved exactly from
//! its normal equations.
//!
//! The logistic objective is mean log-loss + (l2/2)·‖w‖² with the intercept
//! unpenalized; the ridge objective is Σ(yᵢ − a − w·xᵢ)² + l2·‖w‖², again
//! with the intercept unpenalized. Both fits are deterministic: identical
//! inputs produce bit-identical models.

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::dataset::CampaignDataset;
use crate::error::{Error, Result};

/// Smallest / largest probabilities [`predict_proba`] will return. Keeps
/// predictions strictly inside (0, 1): `MAX_PROB` is the largest f64 below 1.
const MIN_PROB: f64 = f64::EPSILON / 2.0;
const MAX_PROB: f64 = 1.0 - f64::EPSILON / 2.0;

/// Standard deviations below this floor are treated as constant columns
/// during internal standardization.
const STD_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ModelKind {
    Logistic,
    Ridge,
}

/// A fitted affine model: `score(x) = intercept + weights · x`, passed
/// through a sigmoid when `kind` is logistic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub kind: ModelKind,
    pub weights: Vec<f64>,
    pub intercept: f64,
}

/// Gradient-descent settings for [`fit_logistic`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    /// L2 penalty strength (applied to weights, never the intercept).
    pub l2: f64,
    /// Initial step size; halved whenever a step would increase the loss.
    pub learning_rate: f64,
    pub max_iter: usize,
    /// Stop when the gradient ∞-norm drops below this.
    pub tol: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            l2: 1e-3,
            learning_rate: 0.1,
            max_iter: 5000,
            tol: 1e-8,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.l2 >= 0.0 && self.l2.is_finite()) {
            return Err(Error::invalid(format!("l2 must be ≥ 0, got {}", self.l2)));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid(format!(
                "learning_rate must be > 0, got {}",
                self.learning_rate
            )));
        }
        if self.max_iter == 0 {
            return Err(Error::invalid("max_iter must be ≥ 1"));
        }
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return Err(Error::invalid(format!("tol must be > 0, got {}", self.tol)));
        }
        Ok(())
    }
}

/// Numerically stable sigmoid.
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn check_matrix(x: &ArrayView2<f64>, n_rows: usize) -> Result<()> {
    if x.nrows() != n_rows {
        return Err(Error::invalid(format!(
            "feature matrix has {} rows but {} targets were given",
            x.nrows(),
            n_rows
        )));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("feature matrix contains non-finite values"));
    }
    Ok(())
}

fn check_binary(y: &[f64]) -> Result<()> {
    match y.iter().find(|&&v| v != 0.0 && v != 1.0) {
        Some(v) => Err(Error::invalid(format!(
            "targets must be binary (0/1), found {v}"
        ))),
        None => Ok(()),
    }
}

/// Regularized mean log-loss at the given raw-scale parameters:
/// mean over rows of `max(z,0) − y·z + ln(1 + e^{−|z|})` plus (l2/2)·‖w‖².
pub fn logistic_loss(
    x: &ArrayView2<f64>,
    y: &[f64],
    weights: &[f64],
    intercept: f64,
    l2: f64,
) -> f64 {
    let n = y.len() as f64;
    let mut total = 0.0;
    for (row, &yi) in x.rows().into_iter().zip(y) {
        let z = intercept + row.iter().zip(weights).map(|(a, b)| a * b).sum::<f64>();
        total += z.max(0.0) - yi * z + (-z.abs()).exp().ln_1p();
    }
    total / n + 0.5 * l2 * weights.iter().map(|w| w * w).sum::<f64>()
}

/// Analytic gradient of [`logistic_loss`] with respect to (weights, intercept).
pub fn logistic_gradient(
    x: &ArrayView2<f64>,
    y: &[f64],
    weights: &[f64],
    intercept: f64,
    l2: f64,
) -> (Vec<f64>, f64) {
    let n = y.len() as f64;
    let d = weights.len();
    let mut grad_w = vec![0.0; d];
    let mut grad_b = 0.0;
    for (row, &yi) in x.rows().into_iter().zip(y) {
        let z = intercept + row.iter().zip(weights).map(|(a, b)| a * b).sum::<f64>();
        let residual = sigmoid(z) - yi;
        grad_b += residual;
        for (g, &xij) in grad_w.iter_mut().zip(row.iter()) {
            *g += residual * xij;
        }
    }
    for (g, &w) in grad_w.iter_mut().zip(weights) {
        *g = *g / n + l2 * w;
    }
    (grad_w, grad_b / n)
}

struct Standardized {
    x: Array2<f64>,
    means: Vec<f64>,
    stds: Vec<f64>,
}

fn standardize(x: &ArrayView2<f64>) -> Standardized {
    let n = x.nrows() as f64;
    let d = x.ncols();
    let mut means = vec![0.0; d];
    let mut stds = vec![0.0; d];
    for j in 0..d {
        let col = x.column(j);
        let mean = col.sum() / n;
        let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        means[j] = mean;
        stds[j] = var.sqrt().max(STD_FLOOR);
    }
    let mut xs = x.to_owned();
    for j in 0..d {
        let (mean, std) = (means[j], stds[j]);
        xs.column_mut(j).mapv_inplace(|v| (v - mean) / std);
    }
    Standardized { x: xs, means, stds }
}

/// Fit a logistic model by full-batch gradient descent with backtracking
/// step halving, stopping when the gradient ∞-norm falls below `cfg.tol` or
/// after `cfg.max_iter` iterations.
///
/// Features are standardized internally for conditioning; the penalty is
/// rescaled per coordinate so the minimized objective is exactly
/// [`logistic_loss`] on the raw scale, and the returned coefficients are
/// mapped back to that scale.
pub fn fit_logistic(x: &ArrayView2<f64>, y: &[f64], cfg: &FitConfig) -> Result<LinearModel> {
    cfg.validate()?;
    if y.is_empty() {
        return Err(Error::invalid("cannot fit on an empty dataset"));
    }
    check_matrix(x, y.len())?;
    check_binary(y)?;

    let std = standardize(x);
    let d = x.ncols();
    // (l2/2)·‖w_raw‖² == (l2/2)·Σ (w_std_j / σ_j)², so the standardized-space
    // penalty for coordinate j has strength l2 / σ_j².
    let penalty: Vec<f64> = std.stds.iter().map(|s| cfg.l2 / (s * s)).collect();

    let xs = std.x.view();
    let eval_loss = |w: &[f64], b: f64| {
        let n = y.len() as f64;
        let mut total = 0.0;
        for (row, &yi) in xs.rows().into_iter().zip(y) {
            let z = b + row.iter().zip(w).map(|(a, c)| a * c).sum::<f64>();
            total += z.max(0.0) - yi * z + (-z.abs()).exp().ln_1p();
        }
        total / n + 0.5 * w.iter().zip(&penalty).map(|(wi, p)| p * wi * wi).sum::<f64>()
    };

    let mut w = vec![0.0; d];
    let mut b = 0.0;
    let mut loss = eval_loss(&w, b);

    for _ in 0..cfg.max_iter {
        let n = y.len() as f64;
        let mut grad_w = vec![0.0; d];
        let mut grad_b = 0.0;
        for (row, &yi) in xs.rows().into_iter().zip(y) {
            let z = b + row.iter().zip(&w).map(|(a, c)| a * c).sum::<f64>();
            let residual = sigmoid(z) - yi;
            grad_b += residual;
            for (g, &xij) in grad_w.iter_mut().zip(row.iter()) {
                *g += residual * xij;
            }
        }
        grad_b /= n;
        for ((g, &wi), &p) in grad_w.iter_mut().zip(&w).zip(&penalty) {
            *g = *g / n + p * wi;
        }

        let grad_norm = grad_w
            .iter()
            .chain(std::iter::once(&grad_b))
            .fold(0.0f64, |acc, g| acc.max(g.abs()));
        if grad_norm < cfg.tol {
            break;
        }

        let mut step = cfg.learning_rate;
        let mut accepted = false;
        while step >= 1e-20 {
            let cand_w: Vec<f64> = w.iter().zip(&grad_w).map(|(wi, g)| wi - step * g).collect();
            let cand_b = b - step * grad_b;
            let cand_loss = eval_loss(&cand_w, cand_b);
            if cand_loss < loss {
                w = cand_w;
                b = cand_b;
                loss = cand_loss;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            // No step strictly decreases the loss: the objective is at float
            // resolution, so further iterations cannot make progress.
            break;
        }
    }

    // Map standardized-scale coefficients back: w_raw = w_std/σ,
    // b_raw = b_std − Σ w_std·μ/σ.
    let weights: Vec<f64> = w.iter().zip(&std.stds).map(|(wi, s)| wi / s).collect();
    let intercept = b - w
        .iter()
        .zip(&std.means)
        .zip(&std.stds)
        .map(|((wi, m), s)| wi * m / s)
        .sum::<f64>();

    Ok(LinearModel {
        kind: ModelKind::Logistic,
        weights,
        intercept,
    })
}

/// Exact ridge regression via the normal equations of
/// min Σ(yᵢ − a − w·xᵢ)² + l2·‖w‖² with unpenalized intercept a.
///
/// With the intercept profiled out this reduces to
/// (XcᵀXc + l2·I)·w = Xcᵀ·yc on centered data, solved by Gaussian
/// elimination with partial pivoting.
pub fn fit_ridge(x: &ArrayView2<f64>, y: &[f64], l2: f64) -> Result<LinearModel> {
    if y.is_empty() {
        return Err(Error::invalid("cannot fit on an empty dataset"));
    }
    if !(l2 >= 0.0 && l2.is_finite()) {
        return Err(Error::invalid(format!("l2 must be ≥ 0, got {l2}")));
    }
    check_matrix(x, y.len())?;
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("targets contain non-finite values"));
    }

    let n = y.len() as f64;
    let d = x.ncols();
    let x_means: Vec<f64> = (0..d).map(|j| x.column(j).sum() / n).collect();
    let y_mean = y.iter().sum::<f64>() / n;

    // Gram matrix and right-hand side on centered data.
    let mut a = Array2::<f64>::zeros((d, d));
    let mut rhs = vec![0.0; d];
    for (row, &yi) in x.rows().into_iter().zip(y) {
        let yc = yi - y_mean;
        for j in 0..d {
            let xj = row[j] - x_means[j];
            rhs[j] += xj * yc;
            for k in j..d {
                a[[j, k]] += xj * (row[k] - x_means[k]);
            }
        }
    }
    for j in 0..d {
        for k in 0..j {
            a[[j, k]] = a[[k, j]];
        }
        a[[j, j]] += l2;
    }

    let weights = solve_linear(a, rhs)?;
    let intercept = y_mean
        - weights
            .iter()
            .zip(&x_means)
            .map(|(w, m)| w * m)
            .sum::<f64>();

    Ok(LinearModel {
        kind: ModelKind::Ridge,
        weights,
        intercept,
    })
}

/// Gaussian elimination with partial pivoting; errors on a singular system.
fn solve_linear(mut a: Array2<f64>, mut b: Vec<f64>) -> Result<Vec<f64>> {
    let d = b.len();
    let scale = a.iter().fold(0.0f64, |acc, v| acc.max(v.abs())).max(1.0);
    for col in 0..d {
        let pivot_row = (col..d)
            .max_by(|&i, &j| a[[i, col]].abs().total_cmp(&a[[j, col]].abs()))
            .expect("non-empty pivot range");
        if a[[pivot_row, col]].abs() < 1e-12 * scale {
            return Err(Error::fit(
                "singular normal equations: features are linearly dependent and l2 = 0",
            ));
        }
        if pivot_row != col {
            for k in 0..d {
                a.swap([pivot_row, k], [col, k]);
            }
            b.swap(pivot_row, col);
        }
        for row in col + 1..d {
            let factor = a[[row, col]] / a[[col, col]];
            if factor == 0.0 {
                continue;
            }
            for k in col..d {
                a[[row, k]] -= factor * a[[col, k]];
            }
            b[row] -= factor * b[col];
        }
    }
    let mut out = vec![0.0; d];
    for col in (0..d).rev() {
        let mut acc = b[col];
        for k in col + 1..d {
            acc -= a[[col, k]] * out[k];
        }
        out[col] = acc / a[[col, col]];
    }
    Ok(out)
}

fn check_model_dims(model: &LinearModel, x: &ArrayView2<f64>) -> Result<()> {
    if model.weights.len() != x.ncols() {
        return Err(Error::DimensionMismatch {
            expected: model.weights.len(),
            got: x.ncols(),
        });
    }
    Ok(())
}

fn affine_scores(model: &LinearModel, x: &ArrayView2<f64>) -> Vec<f64> {
    x.rows()
        .into_iter()
        .map(|row| {
            model.intercept
                + row
                    .iter()
                    .zip(&model.weights)
                    .map(|(a, b)| a * b)
                    .sum::<f64>()
        })
        .collect()
}

/// Predicted probabilities of a logistic model, strictly inside (0, 1).
pub fn predict_proba(model: &LinearModel, x: &ArrayView2<f64>) -> Result<Vec<f64>> {
    if model.kind != ModelKind::Logistic {
        return Err(Error::invalid("predict_proba requires a logistic model"));
    }
    check_model_dims(model, x)?;
    Ok(affine_scores(model, x)
        .into_iter()
        .map(|z| sigmoid(z).clamp(MIN_PROB, MAX_PROB))
        .collect())
}

/// Affine predictions of a ridge model.
pub fn predict(model: &LinearModel, x: &ArrayView2<f64>) -> Result<Vec<f64>> {
    if model.kind != ModelKind::Ridge {
        return Err(Error::invalid("predict requires a ridge model"));
    }
    check_model_dims(model, x)?;
    Ok(affine_scores(model, x))
}

/// Fit a propensity model P(T = 1 | X = x) on a binary-treatment dataset.
pub fn fit_propensity(dataset: &CampaignDataset, cfg: &FitConfig) -> Result<LinearModel> {
    let labels: Vec<f64> = dataset.treatments().iter().map(|&t| t as f64).collect();
    if labels.iter().any(|&t| t != 0.0 && t != 1.0) {
        return Err(Error::invalid(
            "propensity model requires treatment labels in {0, 1}; filter one-vs-control first",
        ));
    }
    let treated = labels.iter().filter(|&&t| t == 1.0).count();
    if treated == 0 || treated == labels.len() {
        return Err(Error::fit(
            "propensity model requires both treated and control rows",
        ));
    }
    fit_logistic(&dataset.features().view(), &labels, cfg)
}
