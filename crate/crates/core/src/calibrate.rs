//! Isotonic regression via pool-adjacent-violators and a cross-fitted
//! calibration wrapper for outcome-probability models.
//!
//! Calibration here wraps the *outcome* classifiers inside a meta-learner,
//! never the CATE score itself: isotonic regression needs observed labels,
//! which exist for outcomes but not for treatment effects. The CATE is then
//! recomputed from calibrated probabilities.

use ndarray::ArrayView2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::baselearn::{fit_logistic, predict_proba, FitConfig, LinearModel};
use crate::error::{Error, Result};

/// A fitted non-decreasing step/line calibrator: `knots_x` strictly
/// increasing, `knots_y` non-decreasing, equal lengths ≥ 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsotonicModel {
    pub knots_x: Vec<f64>,
    pub knots_y: Vec<f64>,
}

/// One cross-validation fold of a calibrated learner: a base logistic model
/// trained on the other folds plus the isotonic calibrator fitted on this
/// fold's held-out predictions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibratedFold {
    pub base: LinearModel,
    pub calibrator: IsotonicModel,
}

/// Cross-fitted isotonic-calibrated classifier; predictions average the
/// per-fold calibrated probabilities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibratedLearner {
    pub folds: Vec<CalibratedFold>,
}

/// Pool-adjacent-violators: the unique minimizer of Σ wᵢ(outᵢ − valuesᵢ)²
/// over non-decreasing sequences. Pooled blocks take weighted means.
pub fn pava(values: &[f64], weights: &[f64]) -> Result<Vec<f64>> {
    if values.is_empty() {
        return Err(Error::invalid("pava requires at least one value"));
    }
    if values.len() != weights.len() {
        return Err(Error::DimensionMismatch {
            expected: values.len(),
            got: weights.len(),
        });
    }
    if let Some(w) = weights.iter().find(|&&w| !(w > 0.0) || !w.is_finite()) {
        return Err(Error::invalid(format!("weights must be positive, got {w}")));
    }

    // Stack of (block mean, block weight, block length).
    let mut blocks: Vec<(f64, f64, usize)> = Vec::with_capacity(values.len());
    for (&v, &w) in values.iter().zip(weights) {
        blocks.push((v, w, 1));
        while blocks.len() > 1 {
            let top = blocks.len() - 1;
            if blocks[top - 1].0 <= blocks[top].0 {
                break;
            }
            let (mv, mw, ml) = blocks.pop().expect("non-empty");
            let (pv, pw, pl) = blocks.pop().expect("non-empty");
            let w_sum = pw + mw;
            blocks.push(((pv * pw + mv * mw) / w_sum, w_sum, pl + ml));
        }
    }

    let mut out = Vec::with_capacity(values.len());
    for (v, _, len) in blocks {
        out.extend(std::iter::repeat(v).take(len));
    }
    Ok(out)
}

/// Fit an isotonic calibrator on (score, target) pairs. Targets must lie in
/// [0, 1]. Identical scores are merged into one weighted knot before PAVA so
/// the fit is unique and `knots_x` strictly increasing.
pub fn fit_isotonic(scores: &[f64], targets: &[f64]) -> Result<IsotonicModel> {
    if scores.len() != targets.len() {
        return Err(Error::DimensionMismatch {
            expected: scores.len(),
            got: targets.len(),
        });
    }
    if scores.len() < 2 {
        return Err(Error::invalid("fit_isotonic requires at least 2 points"));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::invalid("scores must be finite"));
    }
    if let Some(t) = targets.iter().find(|&&t| !(0.0..=1.0).contains(&t)) {
        return Err(Error::invalid(format!("targets must lie in [0, 1], got {t}")));
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    // Merge tied scores into weighted knots.
    let mut xs: Vec<f64> = Vec::new();
    let mut ys: Vec<f64> = Vec::new();
    let mut ws: Vec<f64> = Vec::new();
    let mut i = 0;
    while i < order.len() {
        let x = scores[order[i]];
        let mut sum = 0.0;
        let mut count = 0.0;
        while i < order.len() && scores[order[i]] == x {
            sum += targets[order[i]];
            count += 1.0;
            i += 1;
        }
        xs.push(x);
        ys.push(sum / count);
        ws.push(count);
    }

    let fitted = pava(&ys, &ws)?;
    Ok(IsotonicModel {
        knots_x: xs,
        knots_y: fitted,
    })
}

/// Evaluate the calibrator: linear interpolation between knots, clamped to
/// the first/last knot value outside the fitted range.
pub fn apply_isotonic(model: &IsotonicModel, scores: &[f64]) -> Vec<f64> {
    scores.iter().map(|&s| interpolate(model, s)).collect()
}

fn interpolate(model: &IsotonicModel, query: f64) -> f64 {
    let xs = &model.knots_x;
    let ys = &model.knots_y;
    match xs.binary_search_by(|x| x.total_cmp(&query)) {
        Ok(i) => ys[i],
        Err(0) => ys[0],
        Err(i) if i == xs.len() => ys[xs.len() - 1],
        Err(i) => {
            let frac = (query - xs[i - 1]) / (xs[i] - xs[i - 1]);
            ys[i - 1] + frac * (ys[i] - ys[i - 1])
        }
    }
}

impl CalibratedLearner {
    /// Mean over folds of each fold's calibrated base-model probability.
    pub fn predict_proba(&self, x: &ArrayView2<f64>) -> Result<Vec<f64>> {
        let mut acc = vec![0.0; x.nrows()];
        for fold in &self.folds {
            let base = predict_proba(&fold.base, x)?;
            let cal = apply_isotonic(&fold.calibrator, &base);
            for (a, c) in acc.iter_mut().zip(&cal) {
                *a += c;
            }
        }
        let k = self.folds.len() as f64;
        Ok(acc.into_iter().map(|a| a / k).collect())
    }
}

/// Cross-fitted isotonic calibration of a logistic outcome model.
///
/// Rows are shuffled by a ChaCha8 stream seeded with `seed` and dealt into
/// `k` contiguous chunks, so the fold assignment is a pure function of
/// (n, k, seed). For each fold, a base model is fit on the other k−1 folds
/// and an isotonic calibrator on the held-out fold's (prediction, outcome)
/// pairs.
pub fn calibrated_fit(
    x: &ArrayView2<f64>,
    y: &[f64],
    cfg: &FitConfig,
    k: usize,
    seed: u64,
) -> Result<CalibratedLearner> {
    if k < 2 {
        return Err(Error::invalid(format!("fold count must be ≥ 2, got {k}")));
    }
    if y.len() < 2 * k {
        return Err(Error::invalid(format!(
            "calibrated fit needs at least 2 rows per fold: n = {}, k = {k}",
            y.len()
        )));
    }

    let n = y.len();
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);

    let base_size = n / k;
    let remainder = n % k;
    let mut folds = Vec::with_capacity(k);
    let mut start = 0;
    for fold_idx in 0..k {
        let size = base_size + usize::from(fold_idx < remainder);
        let holdout: &[usize] = &order[start..start + size];
        start += size;

        let train: Vec<usize> = order[..start - size]
            .iter()
            .chain(&order[start..])
            .copied()
            .collect();

        let classes: (bool, bool) = train.iter().fold((false, false), |(z, o), &i| {
            (z || y[i] == 0.0, o || y[i] == 1.0)
        });
        if !(classes.0 && classes.1) {
            return Err(Error::fit(format!(
                "fold {fold_idx}: training part contains a single outcome class"
            )));
        }

        let x_train = select_rows(x, &train);
        let y_train: Vec<f64> = train.iter().map(|&i| y[i]).collect();
        let base = fit_logistic(&x_train.view(), &y_train, cfg)?;

        let x_hold = select_rows(x, holdout);
        let y_hold: Vec<f64> = holdout.iter().map(|&i| y[i]).collect();
        let preds = predict_proba(&base, &x_hold.view())?;
        let calibrator = fit_isotonic(&preds, &y_hold)?;

        folds.push(CalibratedFold { base, calibrator });
    }

    Ok(CalibratedLearner { folds })
}

fn select_rows(x: &ArrayView2<f64>, rows: &[usize]) -> ndarray::Array2<f64> {
    let mut out = ndarray::Array2::zeros((rows.len(), x.ncols()));
    for (dst, &src) in rows.iter().enumerate() {
        out.row_mut(dst).assign(&x.row(src));
    }
    out
}

/// Expected calibration error with `n_bins` equal-width bins over [0, 1]:
/// Σ over non-empty bins of (bin size / n) · |mean predicted − mean actual|.
pub fn expected_calibration_error(predicted: &[f64], actual: &[f64], n_bins: usize) -> Result<f64> {
    if predicted.len() != actual.len() {
        return Err(Error::DimensionMismatch {
            expected: predicted.len(),
            got: actual.len(),
        });
    }
    if predicted.is_empty() {
        return Err(Error::invalid("expected_calibration_error needs data"));
    }
    if n_bins == 0 {
        return Err(Error::invalid("n_bins must be ≥ 1"));
    }
    if let Some(p) = predicted.iter().find(|&&p| !(0.0..=1.0).contains(&p)) {
        return Err(Error::invalid(format!(
            "predictions must lie in [0, 1], got {p}"
        )));
    }
    if actual.iter().any(|&a| a != 0.0 && a != 1.0) {
        return Err(Error::invalid("actual outcomes must be binary"));
    }

    let mut pred_sum = vec![0.0; n_bins];
    let mut actual_sum = vec![0.0; n_bins];
    let mut count = vec![0usize; n_bins];
    for (&p, &a) in predicted.iter().zip(actual) {
        let bin = ((p * n_bins as f64) as usize).min(n_bins - 1);
        pred_sum[bin] += p;
        actual_sum[bin] += a;
        count[bin] += 1;
    }
    let n = predicted.len() as f64;
    let mut ece = 0.0;
    for bin in 0..n_bins {
        if count[bin] == 0 {
            continue;
        }
        let c = count[bin] as f64;
        ece += (c / n) * ((pred_sum[bin] / c) - (actual_sum[bin] / c)).abs();
    }
    Ok(ece)
}
