//! S-, T- and X-learner CATE estimation for one treatment vs. control, plus
//! the multi-treatment wrapper that fits one single-treatment model per
//! treatment label and binds their scores into an n × K uplift matrix.
//!
//! - S: one outcome model μ(x, t) over features plus a trailing treatment
//!   indicator column; τ̂(x) = μ̂(x, 1) − μ̂(x, 0).
//! - T: per-arm outcome models; τ̂(x) = μ̂₁(x) − μ̂₀(x).
//! - X: the T stage, then pseudo-effects D¹ᵢ = Yᵢ − μ̂₀(xᵢ) on treated rows
//!   and D⁰ⱼ = μ̂₁(xⱼ) − Yⱼ on control rows, ridge regressions τ̂₁/τ̂₀ on
//!   those, blended as τ̂(x) = g(x)·τ̂₀(x) + (1 − g(x))·τ̂₁(x) with g the
//!   fitted propensity clipped to [0.01, 0.99].
//!
//! Binary outcomes use logistic outcome models (optionally wrapped in
//! cross-fitted isotonic calibration); continuous outcomes switch the S/T
//! outcome stage to ridge. X-learner CATEs are clipped to [−1, 1] for binary
//! outcomes since the ridge stages are unbounded.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use ndarray::{Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::baselearn::{
    fit_logistic, fit_propensity, fit_ridge, predict, predict_proba, FitConfig, LinearModel,
};
use crate::calibrate::{calibrated_fit, CalibratedLearner};
use crate::dataset::{filter_one_vs_control, CampaignDataset};
use crate::error::{Error, Result};
use crate::io::write_atomic;
use crate::selection::UpliftScores;

/// Propensity clip range for the X-learner blend weight g(x).
const G_CLIP: (f64, f64) = (0.01, 0.99);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MetaKind {
    S,
    T,
    X,
}

impl std::str::FromStr for MetaKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "S" | "s" => Ok(MetaKind::S),
            "T" | "t" => Ok(MetaKind::T),
            "X" | "x" => Ok(MetaKind::X),
            other => Err(Error::invalid(format!(
                "unknown learner kind '{other}' (expected S, T or X)"
            ))),
        }
    }
}

impl std::fmt::Display for MetaKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            MetaKind::S => "S",
            MetaKind::T => "T",
            MetaKind::X => "X",
        })
    }
}

/// Whether and how to calibrate the outcome models of a meta-learner.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Calibration {
    None,
    /// Cross-fitted isotonic calibration with `folds` folds; the fold
    /// shuffle for treatment t uses stream `seed + t`.
    Isotonic { folds: usize, seed: u64 },
}

impl Calibration {
    pub fn is_enabled(&self) -> bool {
        !matches!(self, Calibration::None)
    }
}

/// An outcome-probability model: the plain base learner or its cross-fitted
/// isotonic-calibrated wrapper.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum OutcomeModel {
    Plain(LinearModel),
    Calibrated(CalibratedLearner),
}

impl OutcomeModel {
    fn predict(&self, x: &ArrayView2<f64>) -> Result<Vec<f64>> {
        match self {
            OutcomeModel::Plain(m) => match m.kind {
                crate::baselearn::ModelKind::Logistic => predict_proba(m, x),
                crate::baselearn::ModelKind::Ridge => predict(m, x),
            },
            OutcomeModel::Calibrated(c) => c.predict_proba(x),
        }
    }
}

/// The kind-specific submodels of a fitted meta-learner.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum MetaParts {
    S {
        /// μ(x, t) over features with the indicator appended last.
        model: OutcomeModel,
    },
    T {
        mu0: OutcomeModel,
        mu1: OutcomeModel,
    },
    X {
        mu0: OutcomeModel,
        mu1: OutcomeModel,
        tau0: LinearModel,
        tau1: LinearModel,
        propensity: LinearModel,
    },
}

/// A trained meta-learner bundle for one treatment vs. control.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedMetaModel {
    pub feature_names: Vec<String>,
    pub binary_outcome: bool,
    pub parts: MetaParts,
}

/// One fitted single-treatment model per non-control label.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiTreatmentModel {
    pub kind: MetaKind,
    pub calibrated: bool,
    pub per_treatment: BTreeMap<u32, FittedMetaModel>,
}

fn check_binary_labels(dataset: &CampaignDataset) -> Result<()> {
    if dataset.treatments().iter().any(|&t| t > 1) {
        return Err(Error::invalid(
            "meta-learners fit one treatment vs. control; filter one-vs-control first",
        ));
    }
    if !dataset.treatments().contains(&1) {
        return Err(Error::fit("dataset has no treated rows"));
    }
    Ok(())
}

fn fit_outcome_model(
    x: &ArrayView2<f64>,
    y: &[f64],
    binary: bool,
    cfg: &FitConfig,
    calibration: Calibration,
) -> Result<OutcomeModel> {
    match calibration {
        Calibration::None => {
            let model = if binary {
                fit_logistic(x, y, cfg)?
            } else {
                fit_ridge(x, y, cfg.l2)?
            };
            Ok(OutcomeModel::Plain(model))
        }
        Calibration::Isotonic { folds, seed } => {
            if !binary {
                return Err(Error::invalid(
                    "isotonic calibration requires binary outcomes",
                ));
            }
            Ok(OutcomeModel::Calibrated(calibrated_fit(
                x, y, cfg, folds, seed,
            )?))
        }
    }
}

fn augment_with_indicator(x: &ArrayView2<f64>, indicator: &[f64]) -> Array2<f64> {
    let mut out = Array2::zeros((x.nrows(), x.ncols() + 1));
    out.slice_mut(ndarray::s![.., ..x.ncols()]).assign(x);
    for (i, &v) in indicator.iter().enumerate() {
        out[[i, x.ncols()]] = v;
    }
    out
}

fn arm_rows(dataset: &CampaignDataset, arm: u32) -> Vec<usize> {
    (0..dataset.n())
        .filter(|&i| dataset.treatments()[i] == arm)
        .collect()
}

fn rows_matrix(dataset: &CampaignDataset, rows: &[usize]) -> Array2<f64> {
    dataset.features().select(Axis(0), rows)
}

/// S-learner: one outcome model on features ⊕ treatment indicator.
pub fn fit_s(
    dataset: &CampaignDataset,
    cfg: &FitConfig,
    calibration: Calibration,
) -> Result<FittedMetaModel> {
    check_binary_labels(dataset)?;
    let binary = dataset.binary_outcomes();
    let indicator: Vec<f64> = dataset.treatments().iter().map(|&t| t as f64).collect();
    let x_aug = augment_with_indicator(&dataset.features().view(), &indicator);
    let model = fit_outcome_model(&x_aug.view(), dataset.outcomes(), binary, cfg, calibration)?;
    Ok(FittedMetaModel {
        feature_names: dataset.feature_names().to_vec(),
        binary_outcome: binary,
        parts: MetaParts::S { model },
    })
}

/// T-learner: μ₀ fit on control rows only, μ₁ on treated rows only.
pub fn fit_t(
    dataset: &CampaignDataset,
    cfg: &FitConfig,
    calibration: Calibration,
) -> Result<FittedMetaModel> {
    check_binary_labels(dataset)?;
    let binary = dataset.binary_outcomes();
    let (mu0, mu1) = fit_arm_models(dataset, binary, cfg, calibration)?;
    Ok(FittedMetaModel {
        feature_names: dataset.feature_names().to_vec(),
        binary_outcome: binary,
        parts: MetaParts::T { mu0, mu1 },
    })
}

fn fit_arm_models(
    dataset: &CampaignDataset,
    binary: bool,
    cfg: &FitConfig,
    calibration: Calibration,
) -> Result<(OutcomeModel, OutcomeModel)> {
    let control = arm_rows(dataset, 0);
    let treated = arm_rows(dataset, 1);
    let x0 = rows_matrix(dataset, &control);
    let x1 = rows_matrix(dataset, &treated);
    let y0: Vec<f64> = control.iter().map(|&i| dataset.outcomes()[i]).collect();
    let y1: Vec<f64> = treated.iter().map(|&i| dataset.outcomes()[i]).collect();
    let mu0 = fit_outcome_model(&x0.view(), &y0, binary, cfg, calibration)
        .map_err(|e| prefix_fit_error("control outcome model", e))?;
    let mu1 = fit_outcome_model(&x1.view(), &y1, binary, cfg, calibration)
        .map_err(|e| prefix_fit_error("treated outcome model", e))?;
    Ok((mu0, mu1))
}

fn prefix_fit_error(which: &str, e: Error) -> Error {
    match e {
        Error::Fit(msg) => Error::fit(format!("{which}: {msg}")),
        other => other,
    }
}

/// X-learner: T stage, pseudo-effect ridge regressions, propensity blend.
pub fn fit_x(
    dataset: &CampaignDataset,
    cfg: &FitConfig,
    calibration: Calibration,
) -> Result<FittedMetaModel> {
    check_binary_labels(dataset)?;
    let binary = dataset.binary_outcomes();
    let (mu0, mu1) = fit_arm_models(dataset, binary, cfg, calibration)?;

    let control = arm_rows(dataset, 0);
    let treated = arm_rows(dataset, 1);
    let x0 = rows_matrix(dataset, &control);
    let x1 = rows_matrix(dataset, &treated);

    // D¹ᵢ = Yᵢ − μ̂₀(xᵢ) on treated rows; D⁰ⱼ = μ̂₁(xⱼ) − Yⱼ on control rows.
    let mu0_on_treated = mu0.predict(&x1.view())?;
    let mu1_on_control = mu1.predict(&x0.view())?;
    let d1: Vec<f64> = treated
        .iter()
        .zip(&mu0_on_treated)
        .map(|(&i, m)| dataset.outcomes()[i] - m)
        .collect();
    let d0: Vec<f64> = control
        .iter()
        .zip(&mu1_on_control)
        .map(|(&i, m)| m - dataset.outcomes()[i])
        .collect();

    let tau1 = fit_ridge(&x1.view(), &d1, cfg.l2)
        .map_err(|e| prefix_fit_error("treated pseudo-effect model", e))?;
    let tau0 = fit_ridge(&x0.view(), &d0, cfg.l2)
        .map_err(|e| prefix_fit_error("control pseudo-effect model", e))?;
    let propensity = fit_propensity(dataset, cfg)?;

    Ok(FittedMetaModel {
        feature_names: dataset.feature_names().to_vec(),
        binary_outcome: binary,
        parts: MetaParts::X {
            mu0,
            mu1,
            tau0,
            tau1,
            propensity,
        },
    })
}

impl FittedMetaModel {
    pub fn kind(&self) -> MetaKind {
        match self.parts {
            MetaParts::S { .. } => MetaKind::S,
            MetaParts::T { .. } => MetaKind::T,
            MetaParts::X { .. } => MetaKind::X,
        }
    }

    pub fn calibrated(&self) -> bool {
        let is_cal = |m: &OutcomeModel| matches!(m, OutcomeModel::Calibrated(_));
        match &self.parts {
            MetaParts::S { model } => is_cal(model),
            MetaParts::T { mu0, mu1 } => is_cal(mu0) || is_cal(mu1),
            MetaParts::X { mu0, mu1, .. } => is_cal(mu0) || is_cal(mu1),
        }
    }

    /// Verify that scoring data carries exactly the model's feature columns,
    /// in order.
    pub fn check_features(&self, names: &[String]) -> Result<()> {
        if names == self.feature_names.as_slice() {
            return Ok(());
        }
        let missing: Vec<String> = self
            .feature_names
            .iter()
            .filter(|n| !names.contains(n))
            .cloned()
            .collect();
        let extra: Vec<String> = names
            .iter()
            .filter(|n| !self.feature_names.contains(n))
            .cloned()
            .collect();
        if missing.is_empty() && extra.is_empty() {
            return Err(Error::invalid(format!(
                "feature columns are reordered; the model expects [{}]",
                self.feature_names.join(", ")
            )));
        }
        Err(Error::FeatureMismatch { missing, extra })
    }

    fn check_width(&self, x: &ArrayView2<f64>) -> Result<()> {
        if x.ncols() != self.feature_names.len() {
            return Err(Error::DimensionMismatch {
                expected: self.feature_names.len(),
                got: x.ncols(),
            });
        }
        Ok(())
    }

    /// Kind-appropriate CATE estimate per row.
    pub fn predict_cate(&self, x: &ArrayView2<f64>) -> Result<Vec<f64>> {
        self.check_width(x)?;
        match &self.parts {
            MetaParts::S { model } => {
                let ones = vec![1.0; x.nrows()];
                let zeros = vec![0.0; x.nrows()];
                let treated = model.predict(&augment_with_indicator(x, &ones).view())?;
                let control = model.predict(&augment_with_indicator(x, &zeros).view())?;
                Ok(treated
                    .into_iter()
                    .zip(control)
                    .map(|(t, c)| t - c)
                    .collect())
            }
            MetaParts::T { mu0, mu1 } => {
                let m1 = mu1.predict(x)?;
                let m0 = mu0.predict(x)?;
                Ok(m1.into_iter().zip(m0).map(|(t, c)| t - c).collect())
            }
            MetaParts::X { propensity, .. } => {
                let g: Vec<f64> = predict_proba(propensity, x)?
                    .into_iter()
                    .map(|p| p.clamp(G_CLIP.0, G_CLIP.1))
                    .collect();
                let blended = self.x_blend(x, &g)?;
                Ok(if self.binary_outcome {
                    blended.into_iter().map(|v| v.clamp(-1.0, 1.0)).collect()
                } else {
                    blended
                })
            }
        }
    }

    /// X-learner CATE with a forced constant blend weight g; a diagnostic
    /// hook for checking the g ≡ 0 / g ≡ 1 boundary identities, so the blend
    /// is returned unclipped.
    pub fn predict_cate_forced_g(&self, x: &ArrayView2<f64>, g: f64) -> Result<Vec<f64>> {
        if !(0.0..=1.0).contains(&g) {
            return Err(Error::invalid(format!("g must lie in [0, 1], got {g}")));
        }
        self.check_width(x)?;
        let gs = vec![g; x.nrows()];
        self.x_blend(x, &gs)
    }

    fn x_blend(&self, x: &ArrayView2<f64>, g: &[f64]) -> Result<Vec<f64>> {
        let MetaParts::X { tau0, tau1, .. } = &self.parts else {
            return Err(Error::invalid("blend weights apply only to X-learners"));
        };
        let t0 = predict(tau0, x)?;
        let t1 = predict(tau1, x)?;
        Ok(g.iter()
            .zip(t0.iter().zip(&t1))
            .map(|(&gi, (&a, &b))| gi * a + (1.0 - gi) * b)
            .collect())
    }

    /// Predicted outcome for one arm: μ̂(x, arm) for S, μ̂_arm(x) for T and X.
    /// Probabilities for binary-outcome models, raw values otherwise.
    pub fn predict_outcome(&self, x: &ArrayView2<f64>, arm: u32) -> Result<Vec<f64>> {
        if arm > 1 {
            return Err(Error::invalid("arm must be 0 (control) or 1 (treated)"));
        }
        self.check_width(x)?;
        match &self.parts {
            MetaParts::S { model } => {
                let indicator = vec![arm as f64; x.nrows()];
                model.predict(&augment_with_indicator(x, &indicator).view())
            }
            MetaParts::T { mu0, mu1 } | MetaParts::X { mu0, mu1, .. } => {
                if arm == 0 {
                    mu0.predict(x)
                } else {
                    mu1.predict(x)
                }
            }
        }
    }
}

fn fit_one(
    dataset: &CampaignDataset,
    kind: MetaKind,
    cfg: &FitConfig,
    calibration: Calibration,
) -> Result<FittedMetaModel> {
    match kind {
        MetaKind::S => fit_s(dataset, cfg, calibration),
        MetaKind::T => fit_t(dataset, cfg, calibration),
        MetaKind::X => fit_x(dataset, cfg, calibration),
    }
}

/// Fit one single-treatment meta-learner per non-control label, each on the
/// one-vs-control slice of the campaign (the control group is shared by
/// every treatment). Per-treatment failures carry the treatment label.
pub fn fit_multi_treatment(
    dataset: &CampaignDataset,
    kind: MetaKind,
    cfg: &FitConfig,
    calibration: Calibration,
) -> Result<MultiTreatmentModel> {
    cfg.validate()?;
    let labels = dataset.treatment_labels();
    if labels.is_empty() {
        return Err(Error::fit("dataset has no treated rows"));
    }
    let mut per_treatment = BTreeMap::new();
    for &t in &labels {
        let slice = filter_one_vs_control(dataset, t)?;
        let calibration_t = match calibration {
            Calibration::None => Calibration::None,
            Calibration::Isotonic { folds, seed } => Calibration::Isotonic {
                folds,
                seed: seed.wrapping_add(t as u64),
            },
        };
        let model = fit_one(&slice, kind, cfg, calibration_t)
            .map_err(|e| attach_treatment(t, e))?;
        per_treatment.insert(t, model);
    }
    Ok(MultiTreatmentModel {
        kind,
        calibrated: calibration.is_enabled(),
        per_treatment,
    })
}

fn attach_treatment(t: u32, e: Error) -> Error {
    match e {
        Error::Fit(msg) => Error::fit(format!("treatment {t}: {msg}")),
        other => other,
    }
}

impl MultiTreatmentModel {
    pub fn treatment_labels(&self) -> Vec<u32> {
        self.per_treatment.keys().copied().collect()
    }

    pub fn feature_names(&self) -> &[String] {
        self.per_treatment
            .values()
            .next()
            .expect("at least one treatment model")
            .feature_names
            .as_slice()
    }

    /// Score every row of `dataset` under every per-treatment model; column
    /// order follows ascending treatment label.
    pub fn predict_uplift_matrix(&self, dataset: &CampaignDataset) -> Result<UpliftScores> {
        self.per_treatment
            .values()
            .next()
            .expect("at least one treatment model")
            .check_features(dataset.feature_names())?;
        let n = dataset.n();
        let k = self.per_treatment.len();
        let mut scores = Array2::zeros((n, k));
        for (col, model) in self.per_treatment.values().enumerate() {
            let cate = model.predict_cate(&dataset.features().view())?;
            for (i, v) in cate.into_iter().enumerate() {
                scores[[i, col]] = v;
            }
        }
        UpliftScores::new(
            dataset.customer_ids().to_vec(),
            self.treatment_labels(),
            scores,
        )
    }

    /// Write the model as a directory: `manifest.json` plus one
    /// `model_t<label>.json` document per treatment.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let manifest = Manifest {
            format_version: FORMAT_VERSION,
            kind: self.kind,
            calibrated: self.calibrated,
            treatment_labels: self.treatment_labels(),
            feature_names: self.feature_names().to_vec(),
        };
        let manifest_json = serde_json::to_string_pretty(&manifest)
            .expect("manifest serialization cannot fail");
        write_atomic(&dir.join("manifest.json"), &manifest_json)?;
        for (t, model) in &self.per_treatment {
            let doc = ModelDocument {
                format_version: FORMAT_VERSION,
                model: model.clone(),
            };
            let json = serde_json::to_string_pretty(&doc)
                .expect("model serialization cannot fail");
            write_atomic(&dir.join(format!("model_t{t}.json")), &json)?;
        }
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let manifest_path = dir.join("manifest.json");
        let manifest: Manifest = read_json(&manifest_path)?;
        if manifest.format_version != FORMAT_VERSION {
            return Err(Error::ModelFormat {
                path: manifest_path,
                message: format!(
                    "unsupported format version {} (this build reads {FORMAT_VERSION})",
                    manifest.format_version
                ),
            });
        }
        let mut per_treatment = BTreeMap::new();
        for &t in &manifest.treatment_labels {
            let path = dir.join(format!("model_t{t}.json"));
            let doc: ModelDocument = read_json(&path)?;
            if doc.model.feature_names != manifest.feature_names {
                return Err(Error::ModelFormat {
                    path,
                    message: "model feature names disagree with the manifest".into(),
                });
            }
            if doc.model.kind() != manifest.kind {
                return Err(Error::ModelFormat {
                    path,
                    message: "model kind disagrees with the manifest".into(),
                });
            }
            per_treatment.insert(t, doc.model);
        }
        if per_treatment.is_empty() {
            return Err(Error::ModelFormat {
                path: manifest_path,
                message: "manifest lists no treatments".into(),
            });
        }
        Ok(MultiTreatmentModel {
            kind: manifest.kind,
            calibrated: manifest.calibrated,
            per_treatment,
        })
    }
}

const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    format_version: u32,
    kind: MetaKind,
    calibrated: bool,
    treatment_labels: Vec<u32>,
    feature_names: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ModelDocument {
    format_version: u32,
    model: FittedMetaModel,
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = crate::io::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::ModelFormat {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::baselearn::ModelKind;
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// RCT with uninformative features: outcome rates depend only on the
    /// arm, so the group-mean difference is the analytic CATE oracle.
    fn flat_rct(n: usize, p_control: f64, p_treated: f64, seed: u64) -> CampaignDataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let features = Array2::from_shape_fn((n, 2), |_| rng.random_range(-1.0..1.0));
        let treatments: Vec<u32> = (0..n).map(|_| u32::from(rng.random::<f64>() < 0.5)).collect();
        let outcomes: Vec<f64> = treatments
            .iter()
            .map(|&t| {
                let p = if t == 1 { p_treated } else { p_control };
                f64::from(rng.random::<f64>() < p)
            })
            .collect();
        let ids = (0..n).map(|i| format!("c{i}")).collect();
        CampaignDataset::new(
            ids,
            vec!["f1".into(), "f2".into()],
            features,
            treatments,
            outcomes,
        )
        .unwrap()
    }

    fn group_mean_diff(ds: &CampaignDataset) -> f64 {
        let mut sums = [0.0; 2];
        let mut counts = [0.0; 2];
        for (&t, &y) in ds.treatments().iter().zip(ds.outcomes()) {
            sums[t as usize] += y;
            counts[t as usize] += 1.0;
        }
        sums[1] / counts[1] - sums[0] / counts[0]
    }

    fn mean(v: &[f64]) -> f64 {
        v.iter().sum::<f64>() / v.len() as f64
    }

    #[test]
    fn s_learner_recovers_flat_effect() {
        let ds = flat_rct(2000, 0.10, 0.30, 55);
        let oracle = group_mean_diff(&ds);
        assert!((oracle - 0.20).abs() < 0.05, "unlucky draw: {oracle}");
        let m = fit_s(&ds, &FitConfig::default(), Calibration::None).unwrap();
        let cate = m.predict_cate(&ds.features().view()).unwrap();
        for v in &cate {
            assert!((v - 0.20).abs() < 0.02, "cate {v} vs 0.20");
        }
        assert!((mean(&cate) - oracle).abs() < 0.02);
    }

    #[test]
    fn t_learner_recovers_flat_effect() {
        let ds = flat_rct(2000, 0.10, 0.30, 55);
        let m = fit_t(&ds, &FitConfig::default(), Calibration::None).unwrap();
        let cate = m.predict_cate(&ds.features().view()).unwrap();
        for v in &cate {
            assert!((v - 0.20).abs() < 0.02, "cate {v} vs 0.20");
        }
    }

    #[test]
    fn x_learner_recovers_flat_effect() {
        let ds = flat_rct(2000, 0.10, 0.30, 55);
        let m = fit_x(&ds, &FitConfig::default(), Calibration::None).unwrap();
        let cate = m.predict_cate(&ds.features().view()).unwrap();
        for v in &cate {
            assert!((v - 0.20).abs() < 0.02, "cate {v} vs 0.20");
        }
    }

    #[test]
    fn null_effect_means_are_near_zero() {
        let ds = flat_rct(2000, 0.20, 0.20, 45);
        for kind in [MetaKind::S, MetaKind::T, MetaKind::X] {
            let m = fit_one(&ds, kind, &FitConfig::default(), Calibration::None).unwrap();
            let cate = m.predict_cate(&ds.features().view()).unwrap();
            assert!(mean(&cate).abs() < 0.02, "{kind:?}: {}", mean(&cate));
        }
    }

    #[test]
    fn s_indicator_column_is_appended_once_and_last() {
        let ds = flat_rct(200, 0.2, 0.4, 46);
        let m = fit_s(&ds, &FitConfig::default(), Calibration::None).unwrap();
        let MetaParts::S { model: OutcomeModel::Plain(lin) } = &m.parts else {
            panic!("expected plain S model");
        };
        assert_eq!(lin.weights.len(), ds.n_features() + 1);
        // Predictions on (x, 1) and (x, 0) differ exactly by the trailing
        // indicator weight on the logit scale.
        let x = array![[0.3, -0.4]];
        let p1 = m.predict_outcome(&x.view(), 1).unwrap()[0];
        let p0 = m.predict_outcome(&x.view(), 0).unwrap()[0];
        let logit = |p: f64| (p / (1.0 - p)).ln();
        assert!((logit(p1) - logit(p0) - lin.weights[2]).abs() < 1e-9);
    }

    #[test]
    fn t_learner_arms_are_independent() {
        let ds = flat_rct(400, 0.2, 0.4, 47);
        let m = fit_t(&ds, &FitConfig::default(), Calibration::None).unwrap();

        // Scramble control outcomes; μ1 must stay bit-identical.
        let outcomes: Vec<f64> = ds
            .treatments()
            .iter()
            .zip(ds.outcomes())
            .map(|(&t, &y)| if t == 0 { 1.0 - y } else { y })
            .collect();
        let scrambled = CampaignDataset::new(
            ds.customer_ids().to_vec(),
            ds.feature_names().to_vec(),
            ds.features().clone(),
            ds.treatments().to_vec(),
            outcomes,
        )
        .unwrap();
        let m2 = fit_t(&scrambled, &FitConfig::default(), Calibration::None).unwrap();
        let (MetaParts::T { mu1: a, .. }, MetaParts::T { mu1: b, .. }) = (&m.parts, &m2.parts)
        else {
            panic!("expected T models");
        };
        assert_eq!(a, b);
    }

    #[test]
    fn x_boundary_identities_are_exact() {
        let ds = flat_rct(500, 0.15, 0.35, 48);
        let m = fit_x(&ds, &FitConfig::default(), Calibration::None).unwrap();
        let MetaParts::X { tau0, tau1, .. } = &m.parts else {
            panic!("expected X model");
        };
        let x = ds.features().view();
        let g0 = m.predict_cate_forced_g(&x, 0.0).unwrap();
        let g1 = m.predict_cate_forced_g(&x, 1.0).unwrap();
        let t1 = predict(tau1, &x).unwrap();
        let t0 = predict(tau0, &x).unwrap();
        for (a, b) in g0.iter().zip(&t1) {
            assert!((a - b).abs() <= 1e-12);
        }
        for (a, b) in g1.iter().zip(&t0) {
            assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn predict_cate_trivial_identities() {
        // S model with all-zero weights → CATE 0 everywhere.
        let zero = LinearModel {
            kind: ModelKind::Logistic,
            weights: vec![0.0, 0.0, 0.0],
            intercept: 0.3,
        };
        let s = FittedMetaModel {
            feature_names: vec!["a".into(), "b".into()],
            binary_outcome: true,
            parts: MetaParts::S {
                model: OutcomeModel::Plain(zero),
            },
        };
        let x = array![[1.0, -2.0], [0.5, 0.0]];
        assert!(s.predict_cate(&x.view()).unwrap().iter().all(|&v| v == 0.0));

        // T model with μ1 = μ0 → CATE 0.
        let lin = LinearModel {
            kind: ModelKind::Logistic,
            weights: vec![0.4, -0.1],
            intercept: -0.2,
        };
        let t = FittedMetaModel {
            feature_names: vec!["a".into(), "b".into()],
            binary_outcome: true,
            parts: MetaParts::T {
                mu0: OutcomeModel::Plain(lin.clone()),
                mu1: OutcomeModel::Plain(lin.clone()),
            },
        };
        assert!(t.predict_cate(&x.view()).unwrap().iter().all(|&v| v == 0.0));

        // X model with τ0 = τ1 = constant c → CATE = c regardless of g.
        let constant = |c: f64| LinearModel {
            kind: ModelKind::Ridge,
            weights: vec![0.0, 0.0],
            intercept: c,
        };
        let xm = FittedMetaModel {
            feature_names: vec!["a".into(), "b".into()],
            binary_outcome: true,
            parts: MetaParts::X {
                mu0: OutcomeModel::Plain(lin.clone()),
                mu1: OutcomeModel::Plain(lin),
                tau0: constant(0.07),
                tau1: constant(0.07),
                propensity: LinearModel {
                    kind: ModelKind::Logistic,
                    weights: vec![0.9, -0.4],
                    intercept: 0.1,
                },
            },
        };
        for v in xm.predict_cate(&x.view()).unwrap() {
            assert!((v - 0.07).abs() < 1e-15);
        }
    }

    fn two_treatment_campaign(seed: u64) -> CampaignDataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = 900;
        let features = Array2::from_shape_fn((n, 2), |_| rng.random_range(-1.0..1.0));
        let treatments: Vec<u32> = (0..n).map(|i| (i % 3) as u32).collect();
        let outcomes: Vec<f64> = treatments
            .iter()
            .map(|&t| {
                let p = 0.1 + 0.1 * t as f64;
                f64::from(rng.random::<f64>() < p)
            })
            .collect();
        let ids = (0..n).map(|i| format!("c{i}")).collect();
        CampaignDataset::new(
            ids,
            vec!["f1".into(), "f2".into()],
            features,
            treatments,
            outcomes,
        )
        .unwrap()
    }

    #[test]
    fn multi_treatment_k1_equals_single_fit() {
        let ds = flat_rct(400, 0.2, 0.4, 49);
        let multi =
            fit_multi_treatment(&ds, MetaKind::T, &FitConfig::default(), Calibration::None)
                .unwrap();
        let single = fit_t(&ds, &FitConfig::default(), Calibration::None).unwrap();
        assert_eq!(multi.per_treatment.len(), 1);
        assert_eq!(multi.per_treatment[&1], single);
    }

    #[test]
    fn multi_treatment_models_are_independent() {
        let ds = two_treatment_campaign(50);
        let multi =
            fit_multi_treatment(&ds, MetaKind::T, &FitConfig::default(), Calibration::None)
                .unwrap();

        // Drop all treatment-2 rows; the treatment-1 model must not change.
        let keep: Vec<usize> = (0..ds.n()).filter(|&i| ds.treatments()[i] != 2).collect();
        let reduced = ds.subset(&keep).unwrap();
        let multi_reduced =
            fit_multi_treatment(&reduced, MetaKind::T, &FitConfig::default(), Calibration::None)
                .unwrap();
        assert_eq!(multi.per_treatment[&1], multi_reduced.per_treatment[&1]);
        assert_eq!(multi_reduced.treatment_labels(), vec![1]);
    }

    #[test]
    fn uplift_matrix_shape_and_column_order() {
        let ds = two_treatment_campaign(51);
        let multi =
            fit_multi_treatment(&ds, MetaKind::S, &FitConfig::default(), Calibration::None)
                .unwrap();
        let scores = multi.predict_uplift_matrix(&ds).unwrap();
        assert_eq!(scores.scores().nrows(), ds.n());
        assert_eq!(scores.scores().ncols(), 2);
        assert_eq!(scores.treatment_labels(), &[1, 2]);

        // Column t must equal the per-treatment model's own predictions.
        let direct = multi.per_treatment[&2]
            .predict_cate(&ds.features().view())
            .unwrap();
        for (i, v) in direct.iter().enumerate() {
            assert_eq!(scores.scores()[[i, 1]], *v);
        }
    }

    #[test]
    fn feature_name_mismatch_is_reported() {
        let ds = flat_rct(200, 0.2, 0.4, 52);
        let m = fit_t(&ds, &FitConfig::default(), Calibration::None).unwrap();
        let err = m
            .check_features(&["f1".to_string(), "other".to_string()])
            .unwrap_err();
        match err {
            Error::FeatureMismatch { missing, extra } => {
                assert_eq!(missing, vec!["f2".to_string()]);
                assert_eq!(extra, vec!["other".to_string()]);
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let ds = two_treatment_campaign(53);
        for kind in [MetaKind::S, MetaKind::T, MetaKind::X] {
            let multi = fit_multi_treatment(
                &ds,
                kind,
                &FitConfig::default(),
                Calibration::Isotonic { folds: 3, seed: 5 },
            )
            .unwrap();
            let path = dir.path().join(format!("model_{kind}"));
            multi.save(&path).unwrap();
            let back = MultiTreatmentModel::load(&path).unwrap();
            assert_eq!(multi, back);
        }
    }

    #[test]
    fn continuous_outcomes_switch_to_ridge() {
        let mut rng = ChaCha8Rng::seed_from_u64(54);
        let n = 300;
        let features = Array2::from_shape_fn((n, 1), |_| rng.random_range(-1.0..1.0));
        let treatments: Vec<u32> = (0..n).map(|i| (i % 2) as u32).collect();
        let outcomes: Vec<f64> = treatments
            .iter()
            .enumerate()
            .map(|(i, &t)| 5.0 + 2.5 * t as f64 + 0.1 * features[[i, 0]])
            .collect();
        let ids = (0..n).map(|i| format!("c{i}")).collect();
        let ds = CampaignDataset::new(ids, vec!["f1".into()], features, treatments, outcomes)
            .unwrap();

        let m = fit_t(&ds, &FitConfig::default(), Calibration::None).unwrap();
        assert!(!m.binary_outcome);
        let cate = m.predict_cate(&ds.features().view()).unwrap();
        for v in cate {
            assert!((v - 2.5).abs() < 0.05, "{v}");
        }
        // Calibration requires binary outcomes.
        assert!(fit_t(
            &ds,
            &FitConfig::default(),
            Calibration::Isotonic { folds: 3, seed: 1 }
        )
        .is_err());
    }
}
