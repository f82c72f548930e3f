//! End-to-end orchestration shared by the CLI and the acceptance suite:
//! artifact layout, the synth -> score -> train-eval -> explain stages, and
//! their file formats.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{
    apply_minmax, drop_missing, filter_cohorts, fit_minmax, stratified_split, CohortLabel,
    DataError, FeatureMatrix, NormalizationParams, SplitPlan,
};
use crate::eval::{
    aggregate_folds, cross_val_metrics, evaluate_heldout, format_mean_std, grid_search_cv,
    AggregateMetrics, EvalError, FoldReport, GridSpec, MetricSet, OofConfusion,
};
use crate::explain::{
    global_contributions, local_waterfall, treeshap_batch, Attribution, ExplainError,
    GlobalSummary, Waterfall,
};
use crate::models::{
    train_model, EnsembleKind, Hyperparams, ModelError, ModelFamily, NodeRecord, TreeEnsemble,
    TreeNode,
};
use crate::report::{
    confusion_heatmap_svg, render_metrics_table, stacked_bar_svg, waterfall_svg, TableRow,
};
use crate::survey::{io as survey_io, Battery, SurveyError};
use crate::synth::{generate_cohort, CohortPlan, SynthError};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("missing artifact {path}: {hint}")]
    ArtifactMissing { path: PathBuf, hint: String },
    #[error("features file {path} does not contain feature {feature}")]
    FeatureUnavailable { path: PathBuf, feature: String },
    #[error("participant {0} not found in the explained scope")]
    UnknownParticipant(String),
    #[error("family {0} has no tree-ensemble artifact; only rf and gbm are explainable")]
    NotExplainable(ModelFamily),
    #[error(transparent)]
    Survey(#[from] SurveyError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Explain(#[from] ExplainError),
    #[error("io {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("json {path}: {source}")]
    Json {
        path: PathBuf,
        source: serde_json::Error,
    },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Which engineered dataset a run works on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetSelection {
    Subjective,
    Objective,
    Combined,
}

impl DatasetSelection {
    pub fn key(&self) -> &'static str {
        match self {
            DatasetSelection::Subjective => "subjective",
            DatasetSelection::Objective => "objective",
            DatasetSelection::Combined => "combined",
        }
    }

    pub fn display_name(&self) -> &'static str {
        match self {
            DatasetSelection::Subjective => "Subjective",
            DatasetSelection::Objective => "Objective",
            DatasetSelection::Combined => "Combined",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "subjective" => Some(DatasetSelection::Subjective),
            "objective" => Some(DatasetSelection::Objective),
            "combined" => Some(DatasetSelection::Combined),
            _ => None,
        }
    }

    pub fn instruments(&self, battery: &Battery) -> Vec<crate::survey::InstrumentSpec> {
        match self {
            DatasetSelection::Subjective => battery.subjective(),
            DatasetSelection::Objective => battery.objective(),
            DatasetSelection::Combined => battery.instruments().to_vec(),
        }
    }
}

/// Artifact layout inside one output directory.
#[derive(Debug, Clone)]
pub struct ArtifactPaths {
    out_dir: PathBuf,
}

impl ArtifactPaths {
    pub fn new(out_dir: impl Into<PathBuf>) -> Self {
        Self {
            out_dir: out_dir.into(),
        }
    }

    pub fn out_dir(&self) -> &Path {
        &self.out_dir
    }

    fn ensure_out_dir(&self) -> Result<(), PipelineError> {
        std::fs::create_dir_all(&self.out_dir).map_err(io_err(&self.out_dir))
    }

    pub fn responses_csv(&self) -> PathBuf {
        self.out_dir.join("responses.csv")
    }

    pub fn features_csv(&self, selection: DatasetSelection) -> PathBuf {
        self.out_dir.join(format!("features_{}.csv", selection.key()))
    }

    pub fn model_json(&self, family: ModelFamily) -> PathBuf {
        self.out_dir.join(format!("model_{}.json", family.key()))
    }

    pub fn norm_params_json(&self, family: ModelFamily) -> PathBuf {
        self.out_dir.join(format!("norm_params_{}.json", family.key()))
    }

    pub fn metrics_csv(&self) -> PathBuf {
        self.out_dir.join("metrics.csv")
    }

    pub fn metrics_table_txt(&self) -> PathBuf {
        self.out_dir.join("metrics_table.txt")
    }

    pub fn confusion_csv(&self, family: ModelFamily) -> PathBuf {
        self.out_dir.join(format!("oof_confusion_{}.csv", family.key()))
    }

    pub fn confusion_svg(&self, family: ModelFamily) -> PathBuf {
        self.out_dir.join(format!("oof_confusion_{}.svg", family.key()))
    }

    pub fn attributions_jsonl(&self) -> PathBuf {
        self.out_dir.join("attributions.jsonl")
    }

    pub fn global_contributions_csv(&self) -> PathBuf {
        self.out_dir.join("global_contributions.csv")
    }

    pub fn global_contributions_svg(&self) -> PathBuf {
        self.out_dir.join("global_contributions.svg")
    }

    pub fn waterfall_csv(&self) -> PathBuf {
        self.out_dir.join("waterfall.csv")
    }

    pub fn waterfall_svg(&self) -> PathBuf {
        self.out_dir.join("waterfall.svg")
    }
}

fn require(path: PathBuf, hint: &str) -> Result<PathBuf, PipelineError> {
    if path.exists() {
        Ok(path)
    } else {
        Err(PipelineError::ArtifactMissing {
            path,
            hint: hint.to_string(),
        })
    }
}

/// Generates the synthetic cohort and writes the long-format response CSV.
pub fn run_synth(
    plan: &CohortPlan,
    battery: &Battery,
    paths: &ArtifactPaths,
) -> Result<PathBuf, PipelineError> {
    paths.ensure_out_dir()?;
    let records = generate_cohort(plan, battery.instruments())?;
    let path = paths.responses_csv();
    survey_io::write_responses_csv_path(&records, &path)?;
    Ok(path)
}

/// Scores the raw responses into the selected engineered feature matrix and
/// writes the wide-format CSV.
pub fn run_score(
    battery: &Battery,
    selection: DatasetSelection,
    paths: &ArtifactPaths,
) -> Result<PathBuf, PipelineError> {
    paths.ensure_out_dir()?;
    let responses = require(
        paths.responses_csv(),
        "run `synth` first (or point --out at a directory holding responses.csv)",
    )?;
    let records = survey_io::read_responses_csv_path(&responses)?;
    // Validate instruments against the full battery, then narrow to the
    // selection: a responses file legitimately covers all instruments.
    for record in &records {
        if battery.instrument(&record.instrument).is_none() {
            return Err(SurveyError::UnknownInstrument(record.instrument.clone()).into());
        }
    }
    let instruments = selection.instruments(battery);
    let wanted: BTreeSet<&str> = instruments.iter().map(|s| s.name.as_str()).collect();
    let scoped: Vec<_> = records
        .into_iter()
        .filter(|r| wanted.contains(r.instrument.as_str()))
        .collect();
    let matrix = crate::survey::score_battery(&instruments, &scoped)?;
    let path = paths.features_csv(selection);
    matrix.write_csv_path(&path)?;
    Ok(path)
}

/// Everything train-eval settings that the CLI can override.
#[derive(Debug, Clone)]
pub struct TrainEvalConfig {
    pub selection: DatasetSelection,
    pub families: Vec<ModelFamily>,
    pub plan: SplitPlan,
    /// Features missing in more than this fraction of samples are dropped
    /// wholesale before per-sample removal.
    pub max_missing_fraction: f64,
    pub cohorts: BTreeSet<CohortLabel>,
    pub grids: Vec<GridSpec>,
}

impl TrainEvalConfig {
    pub fn new(selection: DatasetSelection, families: Vec<ModelFamily>, plan: SplitPlan) -> Self {
        Self {
            selection,
            families,
            plan,
            max_missing_fraction: 0.1,
            cohorts: default_cohorts(),
            grids: Vec::new(),
        }
    }

    fn grid_for(&self, family: ModelFamily) -> GridSpec {
        self.grids
            .iter()
            .find(|g| g.family == family)
            .cloned()
            .unwrap_or_else(|| GridSpec::default_for(family))
    }
}

/// Per-family evaluation outcome with everything the reports need.
#[derive(Debug, Clone)]
pub struct FamilyReport {
    pub family: ModelFamily,
    pub selection: DatasetSelection,
    pub best_params: Hyperparams,
    pub best_mean_f1: f64,
    pub folds: Vec<FoldReport>,
    pub aggregate: AggregateMetrics,
    pub holdout: MetricSet,
    pub oof: OofConfusion,
}

/// On-disk tree-model artifact: flat node records plus the normalization
/// sidecar data and the held-out participant ids, so explanation reproduces
/// exactly what the classifier saw.
#[derive(Debug, Serialize, Deserialize)]
pub struct ModelArtifact {
    pub family: ModelFamily,
    pub selection: DatasetSelection,
    pub params: Hyperparams,
    pub kind: EnsembleKind,
    pub base_score: f64,
    pub feature_names: Vec<String>,
    pub trees: Vec<Vec<NodeRecord>>,
    pub normalization: NormalizationParams,
    pub test_ids: Vec<String>,
}

impl ModelArtifact {
    pub fn to_ensemble(&self) -> Result<TreeEnsemble, ModelError> {
        let trees = self
            .trees
            .iter()
            .map(|records| TreeNode::from_records(records))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(TreeEnsemble {
            trees,
            kind: self.kind,
            base_score: self.base_score,
            feature_names: self.feature_names.clone(),
        })
    }
}

/// The modeled cohorts: PD (positive) vs HC (negative).
pub fn default_cohorts() -> BTreeSet<CohortLabel> {
    [CohortLabel::Pd, CohortLabel::Hc].into_iter().collect()
}

/// Loads the engineered matrix for a selection and applies the cleaning
/// stages: feature-then-sample missing-data removal, then the cohort
/// filter.
pub fn load_cleaned_matrix(
    paths: &ArtifactPaths,
    selection: DatasetSelection,
    max_missing_fraction: f64,
    keep: &BTreeSet<CohortLabel>,
) -> Result<FeatureMatrix, PipelineError> {
    let path = require(
        paths.features_csv(selection),
        "run `score` first to build the feature matrix",
    )?;
    let matrix = FeatureMatrix::read_csv_path(&path)?;
    let threshold = (max_missing_fraction * matrix.n_samples() as f64).floor() as usize;
    let cleaned = drop_missing(&matrix, threshold)?;
    Ok(filter_cohorts(&cleaned, keep)?)
}

fn metric_row(
    selection: DatasetSelection,
    family: ModelFamily,
    source: String,
    metrics: &MetricSet,
) -> Vec<String> {
    let mut row = vec![
        selection.key().to_string(),
        family.key().to_string(),
        source,
    ];
    row.extend(metrics.values().iter().map(|(_, v)| format!("{v}")));
    row
}

fn write_metrics_csv(paths: &ArtifactPaths, reports: &[FamilyReport]) -> Result<(), PipelineError> {
    let path = paths.metrics_csv();
    let file = std::fs::File::create(&path).map_err(io_err(&path))?;
    let mut wtr = csv::Writer::from_writer(std::io::BufWriter::new(file));
    wtr.write_record([
        "dataset", "model", "source", "accuracy", "precision", "recall", "f1", "roc_auc",
        "pr_auc",
    ])
    ?;
    for report in reports {
        for fold in &report.folds {
            wtr.write_record(metric_row(
                report.selection,
                report.family,
                format!("cv_fold_{}", fold.fold_index),
                &fold.metrics,
            ))
            ?;
        }
        wtr.write_record(metric_row(
            report.selection,
            report.family,
            "cv_mean".to_string(),
            &report.aggregate.mean,
        ))
        ?;
        wtr.write_record(metric_row(
            report.selection,
            report.family,
            "cv_std".to_string(),
            &report.aggregate.std,
        ))
        ?;
        wtr.write_record(metric_row(
            report.selection,
            report.family,
            "holdout".to_string(),
            &report.holdout,
        ))
        ?;
    }
    wtr.flush().map_err(io_err(&path))?;
    Ok(())
}

/// Renders the two labeled tables: per-fold CV mean ± SD, and the single
/// held-out evaluation.
pub fn render_report_tables(reports: &[FamilyReport]) -> String {
    let cv_rows: Vec<TableRow> = reports
        .iter()
        .map(|r| {
            let mean = r.aggregate.mean.values();
            let std = r.aggregate.std.values();
            let mut cells: [String; 6] = Default::default();
            for i in 0..6 {
                cells[i] = format_mean_std(mean[i].1, std[i].1);
            }
            TableRow {
                dataset: r.selection.display_name().to_string(),
                model: r.family.display_name().to_string(),
                cells,
            }
        })
        .collect();
    let holdout_rows: Vec<TableRow> = reports
        .iter()
        .map(|r| {
            let mut cells: [String; 6] = Default::default();
            for (i, (_, v)) in r.holdout.values().into_iter().enumerate() {
                cells[i] = format!("{v:.4}");
            }
            TableRow {
                dataset: r.selection.display_name().to_string(),
                model: r.family.display_name().to_string(),
                cells,
            }
        })
        .collect();
    let mut text = render_metrics_table(
        "Cross-validated metrics at selected hyperparameters (mean \u{b1} SD over folds)",
        &cv_rows,
    );
    text.push('\n');
    text.push_str(&render_metrics_table(
        "Held-out test metrics (single 20% split, one evaluation)",
        &holdout_rows,
    ));
    text
}

fn write_confusion_outputs(
    paths: &ArtifactPaths,
    family: ModelFamily,
    oof: &OofConfusion,
) -> Result<(), PipelineError> {
    let csv_path = paths.confusion_csv(family);
    let file = std::fs::File::create(&csv_path).map_err(io_err(&csv_path))?;
    let mut wtr = csv::Writer::from_writer(std::io::BufWriter::new(file));
    wtr.write_record(["true_label", "pred_hc_rate", "pred_pd_rate", "pred_hc_count", "pred_pd_count"])
        ?;
    for (row, label) in ["HC", "PD"].iter().enumerate() {
        wtr.write_record([
            label.to_string(),
            format!("{}", oof.normalized[row][0]),
            format!("{}", oof.normalized[row][1]),
            oof.counts[row][0].to_string(),
            oof.counts[row][1].to_string(),
        ])
        ?;
    }
    wtr.flush().map_err(io_err(&csv_path))?;
    let svg = confusion_heatmap_svg(
        oof.normalized,
        oof.counts,
        &format!("Out-of-fold confusion ({})", family.display_name()),
    );
    let svg_path = paths.confusion_svg(family);
    std::fs::write(&svg_path, svg).map_err(io_err(&svg_path))?;
    Ok(())
}

/// Grid search, held-out evaluation, OOF confusion, and artifact emission
/// for every requested family.
pub fn run_train_eval(
    cfg: &TrainEvalConfig,
    paths: &ArtifactPaths,
) -> Result<Vec<FamilyReport>, PipelineError> {
    paths.ensure_out_dir()?;
    let matrix = load_cleaned_matrix(paths, cfg.selection, cfg.max_missing_fraction, &cfg.cohorts)?;
    let (train, test) = stratified_split(&matrix, &cfg.plan)?;

    let mut reports = Vec::new();
    for &family in &cfg.families {
        let grid = cfg.grid_for(family);
        let outcome = grid_search_cv(family, &grid, &train, &cfg.plan)?;
        let folds = cross_val_metrics(family, &outcome.best, &train, &cfg.plan)?;
        let aggregate = aggregate_folds(&folds)?;
        let holdout = evaluate_heldout(family, &outcome.best, &train, &test)?;
        let oof = crate::eval::oof_confusion(family, &outcome.best, &matrix, &cfg.plan)?;
        write_confusion_outputs(paths, family, &oof)?;

        if family.explainable() {
            let norm = fit_minmax(&train)?;
            let train_scaled = apply_minmax(&norm, &train)?;
            let y = train_scaled.binary_labels()?;
            let model = train_model(
                family,
                train_scaled.rows(),
                &y,
                train_scaled.feature_names(),
                &outcome.best,
            )?;
            let ensemble = model.as_tree().expect("tree family");
            let artifact = ModelArtifact {
                family,
                selection: cfg.selection,
                params: outcome.best.clone(),
                kind: ensemble.kind,
                base_score: ensemble.base_score,
                feature_names: ensemble.feature_names.clone(),
                trees: ensemble.trees.iter().map(TreeNode::to_records).collect(),
                normalization: norm.clone(),
                test_ids: test.participant_ids().to_vec(),
            };
            let model_path = paths.model_json(family);
            let json = serde_json::to_string(&artifact).map_err(|source| PipelineError::Json {
                path: model_path.clone(),
                source,
            })?;
            std::fs::write(&model_path, json).map_err(io_err(&model_path))?;
            let norm_path = paths.norm_params_json(family);
            std::fs::write(&norm_path, norm.to_json()).map_err(io_err(&norm_path))?;
        }

        reports.push(FamilyReport {
            family,
            selection: cfg.selection,
            best_params: outcome.best,
            best_mean_f1: outcome.best_mean_f1,
            folds,
            aggregate,
            holdout,
            oof,
        });
    }

    write_metrics_csv(paths, &reports)?;
    let tables = render_report_tables(&reports);
    let table_path = paths.metrics_table_txt();
    std::fs::write(&table_path, tables).map_err(io_err(&table_path))?;
    Ok(reports)
}

/// Whether explanations cover the whole cohort or only the held-out split.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExplainScope {
    Cohort,
    Test,
}

impl ExplainScope {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "cohort" => Some(ExplainScope::Cohort),
            "test" => Some(ExplainScope::Test),
            _ => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ExplainConfig {
    pub family: ModelFamily,
    pub scope: ExplainScope,
    pub top_k: usize,
    /// Participant to draw the waterfall for; defaults to the first
    /// PD-labeled participant in scope.
    pub sample_id: Option<String>,
    pub max_missing_fraction: f64,
    pub cohorts: BTreeSet<CohortLabel>,
}

#[derive(Debug)]
pub struct ExplainOutput {
    pub attributions: Vec<Attribution>,
    pub labels: Vec<CohortLabel>,
    pub global: GlobalSummary,
    pub waterfall: Waterfall,
}

pub fn load_model_artifact(
    paths: &ArtifactPaths,
    family: ModelFamily,
) -> Result<ModelArtifact, PipelineError> {
    if !family.explainable() {
        return Err(PipelineError::NotExplainable(family));
    }
    let path = require(
        paths.model_json(family),
        "model artifact missing: run `train-eval` for this family first",
    )?;
    let json = std::fs::read_to_string(&path).map_err(io_err(&path))?;
    serde_json::from_str(&json).map_err(|source| PipelineError::Json { path, source })
}

/// Attributes the selected scope with the trained ensemble and writes the
/// attribution records, global-contribution CSV/SVG, and waterfall CSV/SVG.
pub fn run_explain(
    cfg: &ExplainConfig,
    paths: &ArtifactPaths,
) -> Result<ExplainOutput, PipelineError> {
    paths.ensure_out_dir()?;
    let artifact = load_model_artifact(paths, cfg.family)?;
    let ensemble = artifact.to_ensemble()?;

    let matrix =
        load_cleaned_matrix(paths, artifact.selection, cfg.max_missing_fraction, &cfg.cohorts)?;
    // The stored feature list guards against scoring drift between train
    // time and explain time.
    let features_path = paths.features_csv(artifact.selection);
    for (have, want) in matrix
        .feature_names()
        .iter()
        .zip(&artifact.feature_names)
    {
        if have != want {
            return Err(PipelineError::FeatureUnavailable {
                path: features_path,
                feature: want.clone(),
            });
        }
    }
    if matrix.n_features() != artifact.feature_names.len() {
        return Err(PipelineError::FeatureUnavailable {
            path: features_path,
            feature: format!(
                "expected {} features, found {}",
                artifact.feature_names.len(),
                matrix.n_features()
            ),
        });
    }
    let scaled = apply_minmax(&artifact.normalization, &matrix)?;

    let scope_indices: Vec<usize> = match cfg.scope {
        ExplainScope::Cohort => (0..scaled.n_samples()).collect(),
        ExplainScope::Test => {
            let test_ids: BTreeSet<&str> =
                artifact.test_ids.iter().map(String::as_str).collect();
            (0..scaled.n_samples())
                .filter(|&i| test_ids.contains(scaled.participant_ids()[i].as_str()))
                .collect()
        }
    };
    let scoped = scaled.select_rows(&scope_indices);
    let attributions = treeshap_batch(
        &ensemble,
        scoped.participant_ids(),
        scoped.rows(),
    )?;
    let labels = scoped.labels().to_vec();
    let global = global_contributions(&attributions, &labels)?;

    let waterfall_target = match &cfg.sample_id {
        Some(id) => attributions
            .iter()
            .position(|a| &a.participant_id == id)
            .ok_or_else(|| PipelineError::UnknownParticipant(id.clone()))?,
        None => labels
            .iter()
            .position(|l| *l == CohortLabel::Pd)
            .unwrap_or(0),
    };
    let waterfall = local_waterfall(&attributions[waterfall_target], cfg.top_k)?;

    write_attributions_jsonl(paths, &attributions, &labels)?;
    write_global_outputs(paths, &global, cfg.top_k, cfg.family)?;
    write_waterfall_outputs(paths, &waterfall)?;

    Ok(ExplainOutput {
        attributions,
        labels,
        global,
        waterfall,
    })
}

#[derive(Serialize, Deserialize)]
struct AttributionRecord<'a> {
    participant_id: &'a str,
    label: &'a str,
    base_value: f64,
    prediction: f64,
    space: crate::explain::OutputSpace,
    phi: Vec<(&'a str, f64)>,
}

fn write_attributions_jsonl(
    paths: &ArtifactPaths,
    attributions: &[Attribution],
    labels: &[CohortLabel],
) -> Result<(), PipelineError> {
    use std::io::Write;
    let path = paths.attributions_jsonl();
    let file = std::fs::File::create(&path).map_err(io_err(&path))?;
    let mut out = std::io::BufWriter::new(file);
    for (attribution, label) in attributions.iter().zip(labels) {
        let record = AttributionRecord {
            participant_id: &attribution.participant_id,
            label: label.as_str(),
            base_value: attribution.base_value,
            prediction: attribution.prediction,
            space: attribution.space,
            phi: attribution
                .phi
                .iter()
                .map(|(name, v)| (name.as_str(), *v))
                .collect(),
        };
        let line = serde_json::to_string(&record).map_err(|source| PipelineError::Json {
            path: path.clone(),
            source,
        })?;
        writeln!(out, "{line}").map_err(io_err(&path))?;
    }
    out.flush().map_err(io_err(&path))?;
    Ok(())
}

fn write_global_outputs(
    paths: &ArtifactPaths,
    global: &GlobalSummary,
    top_k: usize,
    family: ModelFamily,
) -> Result<(), PipelineError> {
    let csv_path = paths.global_contributions_csv();
    let file = std::fs::File::create(&csv_path).map_err(io_err(&csv_path))?;
    let mut wtr = csv::Writer::from_writer(std::io::BufWriter::new(file));
    wtr.write_record(["rank", "feature", "mean_abs_hc", "mean_abs_pd", "total"])
        ?;
    for (rank, c) in global.ranked.iter().enumerate() {
        wtr.write_record([
            (rank + 1).to_string(),
            c.feature.clone(),
            format!("{}", c.mean_abs_hc),
            format!("{}", c.mean_abs_pd),
            format!("{}", c.total()),
        ])
        ?;
    }
    wtr.flush().map_err(io_err(&csv_path))?;

    let top: Vec<_> = global.ranked.iter().take(top_k).cloned().collect();
    let svg = stacked_bar_svg(
        &top,
        &format!(
            "Top {} feature contributions by cohort ({})",
            top.len(),
            family.display_name()
        ),
    );
    let svg_path = paths.global_contributions_svg();
    std::fs::write(&svg_path, svg).map_err(io_err(&svg_path))?;
    Ok(())
}

fn write_waterfall_outputs(
    paths: &ArtifactPaths,
    waterfall: &Waterfall,
) -> Result<(), PipelineError> {
    let csv_path = paths.waterfall_csv();
    let file = std::fs::File::create(&csv_path).map_err(io_err(&csv_path))?;
    let mut wtr = csv::Writer::from_writer(std::io::BufWriter::new(file));
    wtr.write_record(["position", "label", "phi", "cumulative"])
        ?;
    let mut cumulative = waterfall.base_value;
    wtr.write_record(["0", "baseline", "", &format!("{cumulative}")])
        ?;
    let mut position = 1;
    for (name, phi) in &waterfall.entries {
        cumulative += phi;
        wtr.write_record([
            position.to_string(),
            name.clone(),
            format!("{phi}"),
            format!("{cumulative}"),
        ])
        ?;
        position += 1;
    }
    if waterfall.remainder != 0.0 {
        cumulative += waterfall.remainder;
        wtr.write_record([
            position.to_string(),
            "remaining features".to_string(),
            format!("{}", waterfall.remainder),
            format!("{cumulative}"),
        ])
        ?;
        position += 1;
    }
    wtr.write_record([
        position.to_string(),
        "prediction".to_string(),
        String::new(),
        format!("{}", waterfall.prediction),
    ])
    ?;
    wtr.flush().map_err(io_err(&csv_path))?;

    let svg = waterfall_svg(
        waterfall,
        &format!("Local explanation for {}", waterfall.participant_id),
    );
    let svg_path = paths.waterfall_svg();
    std::fs::write(&svg_path, svg).map_err(io_err(&svg_path))?;
    Ok(())
}

/// Re-renders the metric tables from an existing metrics.csv (the `report`
/// command).
pub fn run_report(paths: &ArtifactPaths) -> Result<String, PipelineError> {
    let path = require(
        paths.metrics_csv(),
        "run `train-eval` first to produce metrics.csv",
    )?;
    let file = std::fs::File::open(&path).map_err(io_err(&path))?;
    let mut rdr = csv::Reader::from_reader(std::io::BufReader::new(file));
    let mut cv: Vec<TableRow> = Vec::new();
    let mut holdout: Vec<TableRow> = Vec::new();
    let mut means: std::collections::BTreeMap<(String, String), [f64; 6]> = Default::default();
    let mut stds: std::collections::BTreeMap<(String, String), [f64; 6]> = Default::default();
    for record in rdr.records() {
        let record = record?;
        let key = (record[0].to_string(), record[1].to_string());
        let mut values = [0.0f64; 6];
        for i in 0..6 {
            values[i] = record[3 + i].parse().unwrap_or(f64::NAN);
        }
        match &record[2] {
            "cv_mean" => {
                means.insert(key, values);
            }
            "cv_std" => {
                stds.insert(key, values);
            }
            "holdout" => {
                let mut cells: [String; 6] = Default::default();
                for (i, v) in values.iter().enumerate() {
                    cells[i] = format!("{v:.4}");
                }
                holdout.push(TableRow {
                    dataset: display_dataset(&key.0),
                    model: display_model(&key.1),
                    cells,
                });
            }
            _ => {}
        }
    }
    for (key, mean) in &means {
        let std = stds.get(key).copied().unwrap_or([0.0; 6]);
        let mut cells: [String; 6] = Default::default();
        for i in 0..6 {
            cells[i] = format_mean_std(mean[i], std[i]);
        }
        cv.push(TableRow {
            dataset: display_dataset(&key.0),
            model: display_model(&key.1),
            cells,
        });
    }
    let mut text = render_metrics_table(
        "Cross-validated metrics at selected hyperparameters (mean \u{b1} SD over folds)",
        &cv,
    );
    text.push('\n');
    text.push_str(&render_metrics_table(
        "Held-out test metrics (single 20% split, one evaluation)",
        &holdout,
    ));
    let table_path = paths.metrics_table_txt();
    std::fs::write(&table_path, &text).map_err(io_err(&table_path))?;
    Ok(text)
}

fn display_dataset(key: &str) -> String {
    DatasetSelection::parse(key)
        .map(|s| s.display_name().to_string())
        .unwrap_or_else(|| key.to_string())
}

fn display_model(key: &str) -> String {
    ModelFamily::parse(key)
        .map(|f| f.display_name().to_string())
        .unwrap_or_else(|| key.to_string())
}
