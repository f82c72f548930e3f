//! Run configuration: a TOML file merged with command-line overrides
//! (flags win over the file, the file wins over built-in defaults).

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Deserialize;

use pdscreen::dataset::{CohortLabel, SplitPlan};
use pdscreen::eval::GridSpec;
use pdscreen::models::ModelFamily;
use pdscreen::pipeline::{DatasetSelection, ExplainScope};
use pdscreen::synth::{CohortPlan, EffectSpec, MissingnessSpec};

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub dataset: Option<String>,
    pub out_dir: Option<PathBuf>,
    /// Instrument battery TOML; the battery embedded in the library is used
    /// when absent.
    pub instruments: Option<PathBuf>,
    pub cohorts: Option<Vec<String>>,
    #[serde(default)]
    pub split: SplitSection,
    #[serde(default)]
    pub cleaning: CleaningSection,
    #[serde(default)]
    pub models: ModelsSection,
    #[serde(default)]
    pub explain: ExplainSection,
    pub synth: Option<SynthSection>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSection {
    pub test_fraction: Option<f64>,
    pub k_folds: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CleaningSection {
    pub max_missing_fraction: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelsSection {
    pub families: Option<Vec<String>>,
    #[serde(default)]
    pub grids: GridsSection,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridsSection {
    pub rf: Option<TreeGridSection>,
    pub gbm: Option<TreeGridSection>,
    pub lr: Option<LrGridSection>,
    pub knn: Option<KnnGridSection>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TreeGridSection {
    #[serde(default)]
    pub n_trees: Vec<usize>,
    #[serde(default)]
    pub max_depth: Vec<usize>,
    #[serde(default)]
    pub min_samples_leaf: Vec<f64>,
    #[serde(default)]
    pub learning_rate: Vec<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LrGridSection {
    #[serde(default)]
    pub l2: Vec<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KnnGridSection {
    #[serde(default)]
    pub k: Vec<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExplainSection {
    pub model: Option<String>,
    pub top_k: Option<usize>,
    pub scope: Option<String>,
    pub sample_id: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSection {
    pub n_pd: usize,
    pub n_hc: usize,
    #[serde(default)]
    pub effects: Vec<EffectSpec>,
    #[serde(default)]
    pub missingness: Vec<MissingnessSpec>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }
}

pub fn parse_dataset(s: &str) -> Result<DatasetSelection> {
    DatasetSelection::parse(s)
        .with_context(|| format!("unknown dataset {s:?} (choose subjective|objective|combined)"))
}

pub fn parse_families(s: &str) -> Result<Vec<ModelFamily>> {
    if s == "all" {
        return Ok(ModelFamily::ALL.to_vec());
    }
    let family =
        ModelFamily::parse(s).with_context(|| format!("unknown model {s:?} (lr|knn|rf|gbm|all)"))?;
    Ok(vec![family])
}

pub fn parse_cohorts(names: &[String]) -> Result<BTreeSet<CohortLabel>> {
    let mut keep = BTreeSet::new();
    for name in names {
        keep.insert(
            CohortLabel::parse(name).with_context(|| format!("unknown cohort {name:?}"))?,
        );
    }
    if keep.is_empty() {
        bail!("cohort list is empty");
    }
    Ok(keep)
}

/// Fully resolved settings for one run.
#[derive(Debug)]
pub struct Resolved {
    pub dataset: DatasetSelection,
    pub out_dir: PathBuf,
    pub instruments: Option<PathBuf>,
    pub cohorts: BTreeSet<CohortLabel>,
    pub plan: SplitPlan,
    pub max_missing_fraction: f64,
    pub families: Vec<ModelFamily>,
    pub grids: Vec<GridSpec>,
    pub explain_family: ModelFamily,
    pub explain_top_k: usize,
    pub explain_scope: ExplainScope,
    pub explain_sample_id: Option<String>,
    pub synth_plan: CohortPlan,
}

pub struct Overrides {
    pub seed: Option<u64>,
    pub dataset: Option<String>,
    pub out: Option<PathBuf>,
    pub instruments: Option<PathBuf>,
    pub model: Option<String>,
    pub top_k: Option<usize>,
    pub scope: Option<String>,
    pub sample_id: Option<String>,
}

fn grids_from(section: &GridsSection) -> Vec<GridSpec> {
    let mut grids = Vec::new();
    if let Some(rf) = &section.rf {
        let mut g = GridSpec::empty(ModelFamily::RandomForest);
        g.n_trees = rf.n_trees.clone();
        g.max_depth = rf.max_depth.clone();
        g.min_samples_leaf = rf.min_samples_leaf.clone();
        grids.push(g);
    }
    if let Some(gbm) = &section.gbm {
        let mut g = GridSpec::empty(ModelFamily::Gbm);
        g.n_trees = gbm.n_trees.clone();
        g.max_depth = gbm.max_depth.clone();
        g.learning_rate = gbm.learning_rate.clone();
        g.min_samples_leaf = gbm.min_samples_leaf.clone();
        grids.push(g);
    }
    if let Some(lr) = &section.lr {
        let mut g = GridSpec::empty(ModelFamily::LogisticRegression);
        g.lr_l2 = lr.l2.clone();
        grids.push(g);
    }
    if let Some(knn) = &section.knn {
        let mut g = GridSpec::empty(ModelFamily::Knn);
        g.k_neighbors = knn.k.clone();
        grids.push(g);
    }
    grids
}

pub fn resolve(file: FileConfig, overrides: Overrides) -> Result<Resolved> {
    let seed = overrides.seed.or(file.seed).unwrap_or(42);
    let dataset = match overrides.dataset.as_deref().or(file.dataset.as_deref()) {
        Some(s) => parse_dataset(s)?,
        None => DatasetSelection::Combined,
    };
    let out_dir = overrides
        .out
        .or(file.out_dir)
        .unwrap_or_else(|| PathBuf::from("out"));
    let instruments = overrides.instruments.or(file.instruments);
    let cohorts = match &file.cohorts {
        Some(names) => parse_cohorts(names)?,
        None => pdscreen::pipeline::default_cohorts(),
    };
    let plan = SplitPlan::new(
        seed,
        file.split.test_fraction.unwrap_or(0.2),
        file.split.k_folds.unwrap_or(5),
    )?;
    let max_missing_fraction = file.cleaning.max_missing_fraction.unwrap_or(0.1);
    let families = match overrides.model.as_deref() {
        Some(s) => parse_families(s)?,
        None => match &file.models.families {
            Some(names) => {
                let mut families = Vec::new();
                for name in names {
                    families.extend(parse_families(name)?);
                }
                families
            }
            None => vec![ModelFamily::RandomForest],
        },
    };
    let explain_family = match overrides.model.as_deref().or(file.explain.model.as_deref()) {
        Some(s) if s != "all" => ModelFamily::parse(s)
            .with_context(|| format!("unknown model {s:?} (lr|knn|rf|gbm)"))?,
        _ => ModelFamily::RandomForest,
    };
    let explain_scope = match overrides.scope.as_deref().or(file.explain.scope.as_deref()) {
        Some(s) => {
            ExplainScope::parse(s).with_context(|| format!("unknown scope {s:?} (cohort|test)"))?
        }
        None => ExplainScope::Cohort,
    };
    let synth_plan = match &file.synth {
        Some(section) => CohortPlan {
            n_pd: section.n_pd,
            n_hc: section.n_hc,
            effects: section.effects.clone(),
            missingness: section.missingness.clone(),
            seed,
        },
        None => CohortPlan::default_plan(seed),
    };
    Ok(Resolved {
        dataset,
        out_dir,
        instruments,
        cohorts,
        plan,
        max_missing_fraction,
        families,
        grids: grids_from(&file.models.grids),
        explain_family,
        explain_top_k: overrides.top_k.or(file.explain.top_k).unwrap_or(10),
        explain_scope,
        explain_sample_id: overrides.sample_id.or(file.explain.sample_id),
        synth_plan,
    })
}
