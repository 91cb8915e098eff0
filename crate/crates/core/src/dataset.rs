//! Campaign data representation, CSV ingestion, stratified splitting and
//! per-treatment filtering.
//!
//! The on-disk format is a UTF-8, comma-separated file with a header row and
//! `.` as the decimal point: `customer_id,<feature columns…>,treatment,outcome`.
//! The first column is always the customer id regardless of its header name;
//! the treatment and outcome columns are located by name; every remaining
//! column is a feature. Missing or non-finite values are rejected, not
//! imputed — any preprocessing happens upstream.

use std::collections::HashSet;
use std::path::Path;

use ndarray::{Array2, ArrayView1};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::io::{fmt_f64, read_to_string, write_atomic};

/// One marketing campaign: n customers with d features each, an integer
/// treatment label (0 = control) and a real outcome (binary campaigns use
/// {0, 1}).
///
/// Immutable after construction; all invariants are enforced by [`CampaignDataset::new`].
#[derive(Debug, Clone, PartialEq)]
pub struct CampaignDataset {
    customer_ids: Vec<String>,
    feature_names: Vec<String>,
    features: Array2<f64>,
    treatments: Vec<u32>,
    outcomes: Vec<f64>,
}

/// Disjoint train/validation partition of a campaign, stratified by
/// treatment label.
#[derive(Debug, Clone)]
pub struct DatasetSplit {
    pub train: CampaignDataset,
    pub validation: CampaignDataset,
}

impl CampaignDataset {
    /// Build a dataset, checking every invariant: equal lengths, n ≥ 1,
    /// finite features and outcomes, unique customer ids, and at least one
    /// control row.
    pub fn new(
        customer_ids: Vec<String>,
        feature_names: Vec<String>,
        features: Array2<f64>,
        treatments: Vec<u32>,
        outcomes: Vec<f64>,
    ) -> Result<Self> {
        let n = customer_ids.len();
        if n == 0 {
            return Err(Error::invalid("dataset must contain at least one row"));
        }
        if features.nrows() != n || treatments.len() != n || outcomes.len() != n {
            return Err(Error::invalid(format!(
                "field lengths disagree: {} ids, {} feature rows, {} treatments, {} outcomes",
                n,
                features.nrows(),
                treatments.len(),
                outcomes.len()
            )));
        }
        if features.ncols() != feature_names.len() {
            return Err(Error::DimensionMismatch {
                expected: feature_names.len(),
                got: features.ncols(),
            });
        }
        for ((i, j), v) in features.indexed_iter() {
            if !v.is_finite() {
                return Err(Error::invalid(format!(
                    "non-finite feature value at row {i}, column '{}'",
                    feature_names[j]
                )));
            }
        }
        if let Some(i) = outcomes.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!(
                "non-finite outcome value at row {i}"
            )));
        }
        let mut seen = HashSet::with_capacity(n);
        for (i, id) in customer_ids.iter().enumerate() {
            if !seen.insert(id.as_str()) {
                return Err(Error::invalid(format!(
                    "duplicate customer_id '{id}' at row {i}"
                )));
            }
        }
        if !treatments.contains(&0) {
            return Err(Error::NoControlRows);
        }
        Ok(Self {
            customer_ids,
            feature_names,
            features,
            treatments,
            outcomes,
        })
    }

    pub fn n(&self) -> usize {
        self.customer_ids.len()
    }

    pub fn n_features(&self) -> usize {
        self.features.ncols()
    }

    pub fn customer_ids(&self) -> &[String] {
        &self.customer_ids
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn features(&self) -> &Array2<f64> {
        &self.features
    }

    pub fn feature_row(&self, i: usize) -> ArrayView1<'_, f64> {
        self.features.row(i)
    }

    pub fn treatments(&self) -> &[u32] {
        &self.treatments
    }

    pub fn outcomes(&self) -> &[f64] {
        &self.outcomes
    }

    /// Distinct non-control treatment labels, ascending.
    pub fn treatment_labels(&self) -> Vec<u32> {
        let mut labels: Vec<u32> = self
            .treatments
            .iter()
            .copied()
            .filter(|&t| t != 0)
            .collect::<HashSet<_>>()
            .into_iter()
            .collect();
        labels.sort_unstable();
        labels
    }

    /// True when every outcome is exactly 0 or 1.
    pub fn binary_outcomes(&self) -> bool {
        self.outcomes.iter().all(|&y| y == 0.0 || y == 1.0)
    }

    /// New dataset containing the given rows, in the given order.
    pub fn subset(&self, rows: &[usize]) -> Result<CampaignDataset> {
        let ids = rows.iter().map(|&i| self.customer_ids[i].clone()).collect();
        let treatments = rows.iter().map(|&i| self.treatments[i]).collect();
        let outcomes = rows.iter().map(|&i| self.outcomes[i]).collect();
        let mut features = Array2::zeros((rows.len(), self.n_features()));
        for (out_i, &src_i) in rows.iter().enumerate() {
            features.row_mut(out_i).assign(&self.features.row(src_i));
        }
        CampaignDataset::new(ids, self.feature_names.clone(), features, treatments, outcomes)
    }

    /// Write the dataset as `customer_id,<features…>,treatment,outcome`.
    /// Numeric cells round-trip bit-exactly through [`load_csv`].
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        out.push_str("customer_id");
        for name in &self.feature_names {
            out.push(',');
            out.push_str(name);
        }
        out.push_str(",treatment,outcome\n");
        for i in 0..self.n() {
            out.push_str(&self.customer_ids[i]);
            for v in self.features.row(i) {
                out.push(',');
                out.push_str(&fmt_f64(*v));
            }
            out.push(',');
            out.push_str(&self.treatments[i].to_string());
            out.push(',');
            out.push_str(&fmt_f64(self.outcomes[i]));
            out.push('\n');
        }
        write_atomic(path, &out)
    }
}

/// Load a campaign from CSV. The first column holds customer ids; the
/// columns named by `treatment_column` and `outcome_column` hold labels and
/// outcomes; everything else is a feature. Every parse or invariant failure
/// is reported with its line and column.
pub fn load_csv(
    path: &Path,
    treatment_column: &str,
    outcome_column: &str,
) -> Result<CampaignDataset> {
    let text = read_to_string(path)?;
    let mut lines = text.lines().enumerate();

    let (_, header) = lines
        .next()
        .ok_or_else(|| parse_err(path, 1, "<header>", "file is empty"))?;
    let columns: Vec<&str> = split_row(header);
    if columns.len() < 2 {
        return Err(parse_err(path, 1, "<header>", "need at least an id column and one data column"));
    }
    let treatment_idx = find_column(path, &columns, treatment_column)?;
    let outcome_idx = find_column(path, &columns, outcome_column)?;
    if treatment_idx == 0 || outcome_idx == 0 {
        return Err(parse_err(
            path,
            1,
            "<header>",
            "the first column is reserved for customer ids",
        ));
    }
    if treatment_idx == outcome_idx {
        return Err(parse_err(
            path,
            1,
            "<header>",
            "treatment and outcome must be distinct columns",
        ));
    }
    let feature_cols: Vec<usize> = (1..columns.len())
        .filter(|&j| j != treatment_idx && j != outcome_idx)
        .collect();
    let feature_names: Vec<String> = feature_cols.iter().map(|&j| columns[j].to_string()).collect();

    let mut ids = Vec::new();
    let mut treatments = Vec::new();
    let mut outcomes = Vec::new();
    let mut flat_features = Vec::new();
    let mut seen_ids: HashSet<String> = HashSet::new();

    for (line_idx, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let line_no = line_idx + 1;
        let cells = split_row(line);
        if cells.len() != columns.len() {
            return Err(parse_err(
                path,
                line_no,
                "<row>",
                format!("expected {} fields, found {}", columns.len(), cells.len()),
            ));
        }
        let id = cells[0].to_string();
        if !seen_ids.insert(id.clone()) {
            return Err(parse_err(
                path,
                line_no,
                columns[0],
                format!("duplicate customer_id '{id}'"),
            ));
        }
        let t: u32 = cells[treatment_idx].parse().map_err(|_| {
            parse_err(
                path,
                line_no,
                columns[treatment_idx],
                format!("'{}' is not a non-negative integer", cells[treatment_idx]),
            )
        })?;
        let y = parse_finite(path, line_no, columns[outcome_idx], cells[outcome_idx])?;
        for &j in &feature_cols {
            flat_features.push(parse_finite(path, line_no, columns[j], cells[j])?);
        }
        ids.push(id);
        treatments.push(t);
        outcomes.push(y);
    }

    let n = ids.len();
    if n == 0 {
        return Err(parse_err(path, 1, "<row>", "file has a header but no data rows"));
    }
    let features = Array2::from_shape_vec((n, feature_cols.len()), flat_features)
        .expect("row-major feature buffer matches (n, d)");
    CampaignDataset::new(ids, feature_names, features, treatments, outcomes)
}

fn split_row(line: &str) -> Vec<&str> {
    line.trim_end_matches('\r').split(',').map(str::trim).collect()
}

fn find_column(path: &Path, columns: &[&str], name: &str) -> Result<usize> {
    columns
        .iter()
        .position(|c| *c == name)
        .ok_or_else(|| parse_err(path, 1, name, "column not found in header"))
}

fn parse_finite(path: &Path, line: usize, column: &str, cell: &str) -> Result<f64> {
    let v: f64 = cell
        .parse()
        .map_err(|_| parse_err(path, line, column, format!("'{cell}' is not a number")))?;
    if !v.is_finite() {
        return Err(parse_err(
            path,
            line,
            column,
            format!("'{cell}' is not finite"),
        ));
    }
    Ok(v)
}

fn parse_err(path: &Path, line: usize, column: &str, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        column: column.to_string(),
        message: message.into(),
    }
}

/// Stratified train/validation split.
///
/// Rows of each treatment group are shuffled by a ChaCha8 stream seeded with
/// `seed + label`, and `round(validation_fraction · group size)` of them
/// (clamped so both sides keep at least one row per group) go to validation.
/// Row order within each side follows the input.
pub fn split(
    dataset: &CampaignDataset,
    validation_fraction: f64,
    seed: u64,
) -> Result<DatasetSplit> {
    if !(validation_fraction > 0.0 && validation_fraction < 1.0) {
        return Err(Error::invalid(format!(
            "validation_fraction must lie in (0, 1), got {validation_fraction}"
        )));
    }

    let mut labels: Vec<u32> = dataset.treatment_labels();
    labels.insert(0, 0);

    let mut val_rows: Vec<usize> = Vec::new();
    let mut train_rows: Vec<usize> = Vec::new();
    for &label in &labels {
        let mut group: Vec<usize> = (0..dataset.n())
            .filter(|&i| dataset.treatments()[i] == label)
            .collect();
        if group.len() < 2 {
            return Err(Error::invalid(format!(
                "treatment group {label} has {} row(s); need at least 2 to stratify",
                group.len()
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(label as u64));
        group.shuffle(&mut rng);
        let n_val = ((validation_fraction * group.len() as f64).round() as usize)
            .clamp(1, group.len() - 1);
        val_rows.extend_from_slice(&group[..n_val]);
        train_rows.extend_from_slice(&group[n_val..]);
    }
    val_rows.sort_unstable();
    train_rows.sort_unstable();

    Ok(DatasetSplit {
        train: dataset.subset(&train_rows)?,
        validation: dataset.subset(&val_rows)?,
    })
}

/// Restrict the campaign to control rows plus rows of treatment `t`, with
/// labels remapped so `t` becomes 1.
pub fn filter_one_vs_control(dataset: &CampaignDataset, t: u32) -> Result<CampaignDataset> {
    if t == 0 {
        return Err(Error::invalid("treatment label must be ≥ 1"));
    }
    if !dataset.treatments().contains(&t) {
        return Err(Error::invalid(format!(
            "treatment label {t} not present in dataset"
        )));
    }
    let rows: Vec<usize> = (0..dataset.n())
        .filter(|&i| dataset.treatments()[i] == 0 || dataset.treatments()[i] == t)
        .collect();
    let mut filtered = dataset.subset(&rows)?;
    for label in &mut filtered.treatments {
        if *label == t {
            *label = 1;
        }
    }
    Ok(filtered)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use tempfile::tempdir;

    fn write_file(dir: &tempfile::TempDir, name: &str, contents: &str) -> std::path::PathBuf {
        let path = dir.path().join(name);
        std::fs::write(&path, contents).unwrap();
        path
    }

    fn toy_dataset(treatments: Vec<u32>) -> CampaignDataset {
        let n = treatments.len();
        let ids = (0..n).map(|i| format!("c{i}")).collect();
        let features = Array2::from_shape_fn((n, 2), |(i, j)| (i * 2 + j) as f64);
        let outcomes = vec![0.0; n];
        CampaignDataset::new(ids, vec!["f_a".into(), "f_b".into()], features, treatments, outcomes)
            .unwrap()
    }

    #[test]
    fn load_csv_parses_three_rows() {
        let dir = tempdir().unwrap();
        let path = write_file(
            &dir,
            "toy.csv",
            "id,f_a,treatment,outcome\nu1,0.5,0,0\nu2,1.5,1,1\nu3,-2.0,0,0\n",
        );
        let ds = load_csv(&path, "treatment", "outcome").unwrap();
        assert_eq!(ds.n(), 3);
        assert_eq!(ds.n_features(), 1);
        assert_eq!(ds.feature_names(), ["f_a"]);
        assert_eq!(ds.treatments(), [0, 1, 0]);
        assert_eq!(ds.features()[[1, 0]], 1.5);
    }

    #[test]
    fn load_csv_rejects_nan_cell_with_location() {
        let dir = tempdir().unwrap();
        let path = write_file(
            &dir,
            "bad.csv",
            "id,f_a,treatment,outcome\nu1,0.5,0,0\nu2,NaN,1,1\n",
        );
        let err = load_csv(&path, "treatment", "outcome").unwrap_err();
        match err {
            Error::Parse { line, column, .. } => {
                assert_eq!(line, 3);
                assert_eq!(column, "f_a");
            }
            other => panic!("expected Parse error, got {other:?}"),
        }
    }

    #[test]
    fn load_csv_handles_k_equals_two() {
        let dir = tempdir().unwrap();
        let path = write_file(
            &dir,
            "multi.csv",
            "id,f_a,treatment,outcome\nu1,0.5,0,0\nu2,1.5,1,1\nu3,2.5,2,0\n",
        );
        let ds = load_csv(&path, "treatment", "outcome").unwrap();
        assert_eq!(ds.treatment_labels(), vec![1, 2]);
    }

    #[test]
    fn load_csv_rejects_duplicate_ids_and_missing_control() {
        let dir = tempdir().unwrap();
        let dup = write_file(
            &dir,
            "dup.csv",
            "id,f_a,treatment,outcome\nu1,0.5,0,0\nu1,1.5,1,1\n",
        );
        assert!(matches!(
            load_csv(&dup, "treatment", "outcome").unwrap_err(),
            Error::Parse { line: 3, .. }
        ));

        let no_ctrl = write_file(
            &dir,
            "noctrl.csv",
            "id,f_a,treatment,outcome\nu1,0.5,1,0\nu2,1.5,1,1\n",
        );
        assert!(matches!(
            load_csv(&no_ctrl, "treatment", "outcome").unwrap_err(),
            Error::NoControlRows
        ));
    }

    #[test]
    fn load_csv_missing_file_is_io_error() {
        let err = load_csv(Path::new("/nonexistent/x.csv"), "treatment", "outcome").unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
    }

    #[test]
    fn csv_round_trip_is_bit_exact() {
        let dir = tempdir().unwrap();
        let ids = vec!["a".into(), "b".into(), "c".into()];
        let features = array![[0.1, -1.5e-12], [2.0 / 3.0, 1e10], [-0.0, 123.456]];
        let ds = CampaignDataset::new(
            ids,
            vec!["f_a".into(), "f_b".into()],
            features,
            vec![0, 1, 0],
            vec![0.0, 1.0, 0.25],
        )
        .unwrap();
        let path = dir.path().join("rt.csv");
        ds.write_csv(&path).unwrap();
        let back = load_csv(&path, "treatment", "outcome").unwrap();
        assert_eq!(ds, back);
        // bit-level check, including the -0.0 cell
        for (a, b) in ds.features().iter().zip(back.features().iter()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn split_is_stratified_and_deterministic() {
        let treatments: Vec<u32> = (0..100).map(|i| (i % 2) as u32).collect();
        let ds = toy_dataset(treatments);
        let s1 = split(&ds, 0.2, 7).unwrap();
        let s2 = split(&ds, 0.2, 7).unwrap();
        assert_eq!(s1.validation.n(), 20);
        let treated = s1.validation.treatments().iter().filter(|&&t| t == 1).count();
        assert_eq!(treated, 10);
        assert_eq!(s1.validation.customer_ids(), s2.validation.customer_ids());
        assert_eq!(s1.train.customer_ids(), s2.train.customer_ids());
    }

    #[test]
    fn split_is_a_partition() {
        let treatments: Vec<u32> = (0..25).map(|i| (i % 3) as u32).collect();
        let ds = toy_dataset(treatments);
        let s = split(&ds, 0.4, 3).unwrap();
        assert_eq!(s.train.n() + s.validation.n(), ds.n());
        let train_ids: HashSet<_> = s.train.customer_ids().iter().collect();
        assert!(s.validation.customer_ids().iter().all(|id| !train_ids.contains(id)));
    }

    #[test]
    fn split_four_rows_half_fraction() {
        let ds = toy_dataset(vec![0, 1, 0, 1]);
        let s = split(&ds, 0.5, 11).unwrap();
        assert_eq!(s.validation.n(), 2);
        assert_eq!(
            s.validation.treatments().iter().filter(|&&t| t == 1).count(),
            1
        );
    }

    #[test]
    fn split_rejects_tiny_groups() {
        let ds = toy_dataset(vec![0, 0, 1]);
        assert!(matches!(split(&ds, 0.5, 1), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn filter_keeps_control_and_remaps() {
        let ds = toy_dataset(vec![0, 1, 2, 0, 1]);
        let f = filter_one_vs_control(&ds, 2).unwrap();
        assert_eq!(f.customer_ids(), ["c0", "c2", "c3"]);
        assert_eq!(f.treatments(), [0, 1, 0]);
    }

    #[test]
    fn filter_absent_label_errors() {
        let ds = toy_dataset(vec![0, 0, 0, 1]);
        assert!(filter_one_vs_control(&ds, 2).is_err());
    }

    #[test]
    fn filter_binary_dataset_is_identity() {
        let ds = toy_dataset(vec![0, 1, 0, 1]);
        let f = filter_one_vs_control(&ds, 1).unwrap();
        assert_eq!(f, ds);
    }

    #[test]
    fn filter_row_count_matches_group_sizes() {
        let ds = toy_dataset(vec![0, 1, 2, 2, 0, 1, 2]);
        let f = filter_one_vs_control(&ds, 2).unwrap();
        assert_eq!(f.n(), 2 + 3);
    }
}
