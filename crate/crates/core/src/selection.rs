//! Offer selection: turn an n × K matrix of per-treatment uplift scores into
//! one assigned treatment per customer, either by comparing per-treatment
//! rank positions directly or by comparing Z-standardized scores, then keep
//! only the top fraction by raw CATE.
//!
//! All tie-breaks (equal ranks, equal z-scores, cutoff boundary) resolve
//! toward the smallest treatment label / earliest input row, so assignment
//! is fully deterministic.

use std::collections::HashSet;
use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::io::{fmt_f64, read_to_string, write_atomic};

/// Estimated CATE per customer and treatment: column `k` holds τ̂ for
/// `treatment_labels[k]`, labels ascending.
#[derive(Debug, Clone, PartialEq)]
pub struct UpliftScores {
    customer_ids: Vec<String>,
    treatment_labels: Vec<u32>,
    scores: Array2<f64>,
}

/// One customer's selected offer. `assigned` is `None` once the cutoff stage
/// withholds treatment; `deciding_score` is the raw CATE of the winning
/// treatment and `deciding_stat` the rank or z-score that won the comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct AssignmentRow {
    pub customer_id: String,
    pub assigned: Option<u32>,
    pub deciding_score: f64,
    pub deciding_stat: f64,
}

/// Per-customer offer decisions, in the scores' row order.
#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    pub rows: Vec<AssignmentRow>,
}

impl UpliftScores {
    pub fn new(
        customer_ids: Vec<String>,
        treatment_labels: Vec<u32>,
        scores: Array2<f64>,
    ) -> Result<Self> {
        let n = customer_ids.len();
        let k = treatment_labels.len();
        if n == 0 || k == 0 {
            return Err(Error::invalid("scores need at least one row and one treatment"));
        }
        if scores.nrows() != n || scores.ncols() != k {
            return Err(Error::invalid(format!(
                "score matrix is {}×{}, expected {}×{}",
                scores.nrows(),
                scores.ncols(),
                n,
                k
            )));
        }
        if treatment_labels.iter().any(|&t| t == 0) {
            return Err(Error::invalid("treatment labels must be ≥ 1"));
        }
        if treatment_labels.windows(2).any(|p| p[1] <= p[0]) {
            return Err(Error::invalid("treatment labels must be ascending and unique"));
        }
        if scores.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("scores must be finite"));
        }
        let unique: HashSet<&String> = customer_ids.iter().collect();
        if unique.len() != n {
            return Err(Error::invalid("customer ids must be unique"));
        }
        Ok(Self {
            customer_ids,
            treatment_labels,
            scores,
        })
    }

    pub fn n(&self) -> usize {
        self.customer_ids.len()
    }

    pub fn k(&self) -> usize {
        self.treatment_labels.len()
    }

    pub fn customer_ids(&self) -> &[String] {
        &self.customer_ids
    }

    pub fn treatment_labels(&self) -> &[u32] {
        &self.treatment_labels
    }

    pub fn scores(&self) -> &Array2<f64> {
        &self.scores
    }

    /// Write as `customer_id,cate_<label>,…`; values round-trip bit-exactly.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::from("customer_id");
        for t in &self.treatment_labels {
            out.push_str(&format!(",cate_{t}"));
        }
        out.push('\n');
        for i in 0..self.n() {
            out.push_str(&self.customer_ids[i]);
            for v in self.scores.row(i) {
                out.push(',');
                out.push_str(&fmt_f64(*v));
            }
            out.push('\n');
        }
        write_atomic(path, &out)
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let text = read_to_string(path)?;
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::invalid(format!("{}: empty scores file", path.display())))?;
        let columns: Vec<&str> = header.trim_end_matches('\r').split(',').collect();
        if columns.len() < 2 || columns[0] != "customer_id" {
            return Err(Error::invalid(format!(
                "{}: expected header customer_id,cate_<t>,…",
                path.display()
            )));
        }
        let mut labels = Vec::new();
        for col in &columns[1..] {
            let label: u32 = col
                .strip_prefix("cate_")
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| {
                    Error::invalid(format!(
                        "{}: score column '{col}' is not of the form cate_<t>",
                        path.display()
                    ))
                })?;
            labels.push(label);
        }
        let mut ids = Vec::new();
        let mut flat = Vec::new();
        for (idx, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let cells: Vec<&str> = line.trim_end_matches('\r').split(',').collect();
            if cells.len() != columns.len() {
                return Err(Error::invalid(format!(
                    "{}: line {}: expected {} fields, found {}",
                    path.display(),
                    idx + 2,
                    columns.len(),
                    cells.len()
                )));
            }
            ids.push(cells[0].to_string());
            for cell in &cells[1..] {
                let v: f64 = cell.parse().map_err(|_| {
                    Error::invalid(format!(
                        "{}: line {}: '{cell}' is not a number",
                        path.display(),
                        idx + 2
                    ))
                })?;
                flat.push(v);
            }
        }
        let n = ids.len();
        let k = labels.len();
        let scores = Array2::from_shape_vec((n, k), flat)
            .map_err(|_| Error::invalid("ragged scores file"))?;
        UpliftScores::new(ids, labels, scores)
    }
}

/// Rank customers within each treatment column (rank 1 = highest score, ties
/// broken toward earlier input rows) and assign each customer the treatment
/// where their rank number is smallest; rank ties across treatments go to
/// the smallest label. `deciding_stat` is the winning rank.
pub fn direct_rank_assign(scores: &UpliftScores) -> Assignment {
    let n = scores.n();
    let k = scores.k();

    // ranks[column][row] = 1-based rank of that row in the column.
    let mut ranks = vec![vec![0usize; n]; k];
    for col in 0..k {
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| scores.scores[[b, col]].total_cmp(&scores.scores[[a, col]]));
        for (pos, &row) in order.iter().enumerate() {
            ranks[col][row] = pos + 1;
        }
    }

    let rows = (0..n)
        .map(|i| {
            let mut best_col = 0;
            for col in 1..k {
                if ranks[col][i] < ranks[best_col][i] {
                    best_col = col;
                }
            }
            AssignmentRow {
                customer_id: scores.customer_ids[i].clone(),
                assigned: Some(scores.treatment_labels[best_col]),
                deciding_score: scores.scores[[i, best_col]],
                deciding_stat: ranks[best_col][i] as f64,
            }
        })
        .collect();
    Assignment { rows }
}

/// Standardize each column to z = (s − mean)/std with the population std
/// (divide by n); columns with std below 1e−12 map to all zeros.
pub fn zscore_standardize(scores: &UpliftScores) -> Result<UpliftScores> {
    let n = scores.n();
    if n < 2 {
        return Err(Error::invalid(
            "zscore standardization needs at least 2 rows per column",
        ));
    }
    let mut out = scores.scores.clone();
    for col in 0..scores.k() {
        let column = scores.scores.column(col);
        let mean = column.sum() / n as f64;
        let var = column.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
        let std = var.sqrt();
        if std < 1e-12 {
            out.column_mut(col).fill(0.0);
        } else {
            out.column_mut(col).mapv_inplace(|v| (v - mean) / std);
        }
    }
    UpliftScores::new(
        scores.customer_ids.clone(),
        scores.treatment_labels.clone(),
        out,
    )
}

/// Assign each customer the treatment with the highest z-score (ties go to
/// the smallest label). `deciding_stat` is the winning z-score and
/// `deciding_score` the raw CATE of the winning treatment.
pub fn zscore_assign(scores: &UpliftScores) -> Result<Assignment> {
    let z = zscore_standardize(scores)?;
    let rows = (0..scores.n())
        .map(|i| {
            let mut best_col = 0;
            for col in 1..scores.k() {
                if z.scores[[i, col]] > z.scores[[i, best_col]] {
                    best_col = col;
                }
            }
            AssignmentRow {
                customer_id: scores.customer_ids[i].clone(),
                assigned: Some(scores.treatment_labels[best_col]),
                deciding_score: scores.scores[[i, best_col]],
                deciding_stat: z.scores[[i, best_col]],
            }
        })
        .collect();
    Ok(Assignment { rows })
}

/// Keep the `ceil(top_fraction · n)` customers with the highest raw CATE for
/// their assigned treatment (boundary ties keep earlier input rows); the
/// rest have their assignment withheld.
pub fn apply_cutoff(
    assignment: &Assignment,
    scores: &UpliftScores,
    top_fraction: f64,
) -> Result<Assignment> {
    if !(top_fraction > 0.0 && top_fraction <= 1.0) {
        return Err(Error::invalid(format!(
            "top_fraction must lie in (0, 1], got {top_fraction}"
        )));
    }
    if assignment.rows.len() != scores.n()
        || assignment
            .rows
            .iter()
            .zip(scores.customer_ids())
            .any(|(row, id)| row.customer_id != *id)
    {
        return Err(Error::invalid(
            "assignment and scores are misaligned (customer ids differ)",
        ));
    }

    let n = assignment.rows.len();
    let keep = (top_fraction * n as f64).ceil() as usize;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        assignment.rows[b]
            .deciding_score
            .total_cmp(&assignment.rows[a].deciding_score)
    });

    let kept: HashSet<usize> = order.into_iter().take(keep).collect();
    let rows = assignment
        .rows
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let mut row = row.clone();
            if !kept.contains(&i) {
                row.assigned = None;
            }
            row
        })
        .collect();
    Ok(Assignment { rows })
}

impl Assignment {
    pub fn n_assigned(&self) -> usize {
        self.rows.iter().filter(|r| r.assigned.is_some()).count()
    }

    /// Write as `customer_id,assigned_treatment,deciding_score,deciding_stat`
    /// with withheld assignments encoded as `-1`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::from("customer_id,assigned_treatment,deciding_score,deciding_stat\n");
        for row in &self.rows {
            let label = match row.assigned {
                Some(t) => t as i64,
                None => -1,
            };
            out.push_str(&format!(
                "{},{},{},{}\n",
                row.customer_id,
                label,
                fmt_f64(row.deciding_score),
                fmt_f64(row.deciding_stat)
            ));
        }
        write_atomic(path, &out)
    }
}
