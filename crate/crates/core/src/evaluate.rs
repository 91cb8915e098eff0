//! Policy and ranking metrics: the cumulative uplift curve and its area
//! (AUUC), a seeded random-score AUUC baseline, conversion lift at score
//! quantiles, outcome accuracy, and ground-truth policy value.
//!
//! Curve construction follows the sort-and-bin procedure: customers are
//! sorted by descending score and, for each of `n_bins` prefixes, the
//! cumulative uplift is the treated minus control mean outcome inside the
//! prefix (0 when either arm is empty there).

use ndarray::ArrayView2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::selection::Assignment;

/// Cumulative uplift over increasing population prefixes; `fractions` are
/// strictly ascending with the last equal to 1.0.
#[derive(Debug, Clone, PartialEq)]
pub struct UpliftCurve {
    pub fractions: Vec<f64>,
    pub cumulative_uplift: Vec<f64>,
}

/// Conversion lift of the top-q scored customers against the
/// full-population control conversion rate. `lift_ratio` is `None` when the
/// baseline rate is zero.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantileLift {
    pub quantile: f64,
    pub treated_rate: f64,
    pub baseline_rate: f64,
    pub lift_ratio: Option<f64>,
}

/// Seeded random-score AUUC distribution summary.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RandomBaseline {
    pub mean: f64,
    pub p95: f64,
}

fn check_aligned(score: &[f64], treatment: &[u32], outcome: &[f64]) -> Result<()> {
    if score.len() != treatment.len() || score.len() != outcome.len() {
        return Err(Error::invalid(format!(
            "score/treatment/outcome lengths disagree: {}/{}/{}",
            score.len(),
            treatment.len(),
            outcome.len()
        )));
    }
    if treatment.iter().any(|&t| t > 1) {
        return Err(Error::invalid(
            "evaluation expects binary treatment labels; filter one-vs-control first",
        ));
    }
    let treated = treatment.iter().filter(|&&t| t == 1).count();
    if treated == 0 || treated == treatment.len() {
        return Err(Error::invalid(
            "evaluation requires both treatment arms to be present",
        ));
    }
    Ok(())
}

/// Indices sorted by descending score; ties keep input order.
fn descending_order(score: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..score.len()).collect();
    order.sort_by(|&a, &b| score[b].total_cmp(&score[a]));
    order
}

/// Cumulative uplift curve over `n_bins` prefixes of the score-sorted
/// population.
pub fn uplift_curve(
    score: &[f64],
    treatment: &[u32],
    outcome: &[f64],
    n_bins: usize,
) -> Result<UpliftCurve> {
    check_aligned(score, treatment, outcome)?;
    let n = score.len();
    if n_bins == 0 || n_bins > n {
        return Err(Error::invalid(format!(
            "n_bins must lie in 1..=n: n_bins = {n_bins}, n = {n}"
        )));
    }

    let order = descending_order(score);
    // Prefix sums of treated/control counts and outcome totals in sort order.
    let mut treated_count = vec![0.0; n + 1];
    let mut control_count = vec![0.0; n + 1];
    let mut treated_sum = vec![0.0; n + 1];
    let mut control_sum = vec![0.0; n + 1];
    for (pos, &i) in order.iter().enumerate() {
        let is_treated = treatment[i] == 1;
        treated_count[pos + 1] = treated_count[pos] + f64::from(u8::from(is_treated));
        control_count[pos + 1] = control_count[pos] + f64::from(u8::from(!is_treated));
        treated_sum[pos + 1] = treated_sum[pos] + if is_treated { outcome[i] } else { 0.0 };
        control_sum[pos + 1] = control_sum[pos] + if is_treated { 0.0 } else { outcome[i] };
    }

    let mut fractions = Vec::with_capacity(n_bins);
    let mut uplift = Vec::with_capacity(n_bins);
    for b in 1..=n_bins {
        let prefix = (b * n).div_ceil(n_bins);
        let value = if treated_count[prefix] == 0.0 || control_count[prefix] == 0.0 {
            0.0
        } else {
            treated_sum[prefix] / treated_count[prefix]
                - control_sum[prefix] / control_count[prefix]
        };
        fractions.push(prefix as f64 / n as f64);
        uplift.push(value);
    }
    Ok(UpliftCurve {
        fractions,
        cumulative_uplift: uplift,
    })
}

/// Trapezoidal area under the curve with the origin (0, 0) prepended;
/// reported unnormalized.
pub fn auuc(curve: &UpliftCurve) -> f64 {
    let mut area = 0.0;
    let mut prev_x = 0.0;
    let mut prev_y = 0.0;
    for (&x, &y) in curve.fractions.iter().zip(&curve.cumulative_uplift) {
        area += (x - prev_x) * (y + prev_y) / 2.0;
        prev_x = x;
        prev_y = y;
    }
    area
}

/// AUUC distribution of uniformly random scores: `n_shuffles` draws from a
/// ChaCha8 stream seeded with `seed`, summarized by the mean and the
/// nearest-rank 95th percentile.
pub fn auuc_random_baseline(
    treatment: &[u32],
    outcome: &[f64],
    n_bins: usize,
    n_shuffles: usize,
    seed: u64,
) -> Result<RandomBaseline> {
    if n_shuffles == 0 {
        return Err(Error::invalid("n_shuffles must be ≥ 1"));
    }
    let n = treatment.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut aucs = Vec::with_capacity(n_shuffles);
    for _ in 0..n_shuffles {
        let scores: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let curve = uplift_curve(&scores, treatment, outcome, n_bins)?;
        aucs.push(auuc(&curve));
    }
    let mean = aucs.iter().sum::<f64>() / n_shuffles as f64;
    let mut sorted = aucs;
    sorted.sort_by(f64::total_cmp);
    let rank = ((0.95 * n_shuffles as f64).ceil() as usize).clamp(1, n_shuffles);
    Ok(RandomBaseline {
        mean,
        p95: sorted[rank - 1],
    })
}

/// Conversion lift in the top `ceil(q·n)` scored customers. The treated rate
/// is the treated conversion inside that prefix (0 when no treated rows land
/// there); the baseline is the control conversion over the full population.
pub fn lift_at_quantile(
    score: &[f64],
    treatment: &[u32],
    outcome: &[f64],
    q: f64,
) -> Result<QuantileLift> {
    check_aligned(score, treatment, outcome)?;
    if !(q > 0.0 && q <= 1.0) {
        return Err(Error::invalid(format!("quantile must lie in (0, 1], got {q}")));
    }
    let n = score.len();
    let order = descending_order(score);
    let prefix = (q * n as f64).ceil() as usize;

    let mut treated_sum = 0.0;
    let mut treated_count = 0.0;
    for &i in &order[..prefix.min(n)] {
        if treatment[i] == 1 {
            treated_sum += outcome[i];
            treated_count += 1.0;
        }
    }
    let treated_rate = if treated_count == 0.0 {
        0.0
    } else {
        treated_sum / treated_count
    };

    let mut control_sum = 0.0;
    let mut control_count = 0.0;
    for i in 0..n {
        if treatment[i] == 0 {
            control_sum += outcome[i];
            control_count += 1.0;
        }
    }
    let baseline_rate = control_sum / control_count;

    let lift_ratio = if baseline_rate > 0.0 {
        Some(treated_rate / baseline_rate)
    } else {
        None
    };
    Ok(QuantileLift {
        quantile: q,
        treated_rate,
        baseline_rate,
        lift_ratio,
    })
}

/// Fraction of rows where thresholding the predicted probability reproduces
/// the actual binary outcome.
pub fn outcome_accuracy(predicted: &[f64], actual: &[f64], threshold: f64) -> Result<f64> {
    if predicted.len() != actual.len() {
        return Err(Error::DimensionMismatch {
            expected: predicted.len(),
            got: actual.len(),
        });
    }
    if predicted.is_empty() {
        return Err(Error::invalid("outcome_accuracy needs data"));
    }
    if actual.iter().any(|&a| a != 0.0 && a != 1.0) {
        return Err(Error::invalid("actual outcomes must be binary"));
    }
    let hits = predicted
        .iter()
        .zip(actual)
        .filter(|(&p, &a)| (p >= threshold) == (a == 1.0))
        .count();
    Ok(hits as f64 / predicted.len() as f64)
}

/// Mean over all customers of the true effect of their assigned treatment,
/// with withheld assignments contributing 0 — the offline stand-in for
/// realized campaign lift.
pub fn policy_value(
    assignment: &Assignment,
    treatment_labels: &[u32],
    true_tau: &ArrayView2<f64>,
) -> Result<f64> {
    let n = assignment.rows.len();
    if true_tau.nrows() != n {
        return Err(Error::invalid(format!(
            "ground truth has {} rows, assignment has {n}",
            true_tau.nrows()
        )));
    }
    if true_tau.ncols() != treatment_labels.len() {
        return Err(Error::DimensionMismatch {
            expected: treatment_labels.len(),
            got: true_tau.ncols(),
        });
    }
    let mut total = 0.0;
    for (i, row) in assignment.rows.iter().enumerate() {
        if let Some(label) = row.assigned {
            let col = treatment_labels
                .iter()
                .position(|&t| t == label)
                .ok_or_else(|| {
                    Error::invalid(format!(
                        "assigned treatment {label} is not a ground-truth column"
                    ))
                })?;
            total += true_tau[[i, col]];
        }
    }
    Ok(total / n as f64)
}
