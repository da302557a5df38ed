//! Run configuration: command-line flags overlaid by an optional TOML file.
//!
//! ```toml
//! family = "censored-gaussian"   # or "censored-logistic"
//! threshold = 0.0
//! model = "forest"               # forest | tree | emos | intercept
//! schema = "schema.toml"         # relative to this file
//!
//! [forest]
//! ntree = 100
//! mtry = 3
//! subsample_fraction = 0.632
//! minsplit = 50
//! minbucket = 20
//! alpha = 1.0
//! statistic = "quadratic"        # or "maximum"
//! split_objective = "max-statistic"
//! seed = 1
//!
//! [emos]
//! loc = "ens_mean"
//! scale = "ens_sprd"
//! scale_transform = "log"        # or "identity"
//! intercept_only = false
//! ```
//!
//! Every key is optional. Keys present in the file win over flags.

use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use serde::Deserialize;

use distforest::baselines::ScaleTransform;
use distforest::tree::{SplitObjective, Statistic};
use distforest::{EmosSpec, Family, ForestConfig, TreeConfig};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    Forest,
    Tree,
    Emos,
    Intercept,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Forest => "forest",
            ModelKind::Tree => "tree",
            ModelKind::Emos => "emos",
            ModelKind::Intercept => "intercept",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum StatisticArg {
    Quadratic,
    Maximum,
}

impl From<StatisticArg> for Statistic {
    fn from(s: StatisticArg) -> Self {
        match s {
            StatisticArg::Quadratic => Statistic::Quadratic,
            StatisticArg::Maximum => Statistic::Maximum,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ObjectiveArg {
    MaxStatistic,
    MinStatistic,
}

impl From<ObjectiveArg> for SplitObjective {
    fn from(s: ObjectiveArg) -> Self {
        match s {
            ObjectiveArg::MaxStatistic => SplitObjective::MaxStatistic,
            ObjectiveArg::MinStatistic => SplitObjective::MinStatistic,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TransformArg {
    Log,
    Identity,
}

impl From<TransformArg> for ScaleTransform {
    fn from(s: TransformArg) -> Self {
        match s {
            TransformArg::Log => ScaleTransform::Log,
            TransformArg::Identity => ScaleTransform::Identity,
        }
    }
}

/// Flags shared by every command that fits models.
#[derive(Debug, Clone, Args)]
pub struct ModelArgs {
    /// TOML run configuration; its keys override the flags below.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// TOML schema describing the data file.
    #[arg(long)]
    pub schema: Option<PathBuf>,
    #[arg(long, default_value = "censored-gaussian")]
    pub family: String,
    /// Censoring point of the family.
    #[arg(long, default_value_t = 0.0)]
    pub threshold: f64,
    #[arg(long, value_enum, default_value_t = ModelKind::Forest)]
    pub model: ModelKind,
    #[arg(long, default_value_t = 100)]
    pub ntree: usize,
    /// Variables tried per split [default: ceil(m / 3) for forests, all for trees]
    #[arg(long)]
    pub mtry: Option<usize>,
    #[arg(long, default_value_t = 0.632)]
    pub subsample_fraction: f64,
    #[arg(long, default_value_t = 50)]
    pub minsplit: usize,
    #[arg(long, default_value_t = 20)]
    pub minbucket: usize,
    #[arg(long, default_value_t = 1.0)]
    pub alpha: f64,
    #[arg(long, value_enum, default_value_t = StatisticArg::Quadratic)]
    pub statistic: StatisticArg,
    #[arg(long, value_enum, default_value_t = ObjectiveArg::MaxStatistic)]
    pub split_objective: ObjectiveArg,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// EMOS location regressor column.
    #[arg(long)]
    pub emos_loc: Option<String>,
    /// EMOS scale regressor column.
    #[arg(long)]
    pub emos_scale: Option<String>,
    #[arg(long, value_enum, default_value_t = TransformArg::Log)]
    pub emos_scale_transform: TransformArg,
    #[arg(long)]
    pub emos_intercept_only: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub family: String,
    pub threshold: f64,
    pub model: ModelKind,
    pub schema: Option<PathBuf>,
    pub forest: ForestConfig,
    pub emos_loc: Option<String>,
    pub emos_scale: Option<String>,
    pub emos_scale_transform: ScaleTransform,
    pub emos_intercept_only: bool,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    family: Option<String>,
    threshold: Option<f64>,
    model: Option<ModelKind>,
    schema: Option<PathBuf>,
    #[serde(default)]
    forest: ForestSection,
    #[serde(default)]
    emos: EmosSection,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ForestSection {
    ntree: Option<usize>,
    mtry: Option<usize>,
    subsample_fraction: Option<f64>,
    minsplit: Option<usize>,
    minbucket: Option<usize>,
    alpha: Option<f64>,
    statistic: Option<Statistic>,
    split_objective: Option<SplitObjective>,
    seed: Option<u64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct EmosSection {
    loc: Option<String>,
    scale: Option<String>,
    scale_transform: Option<ScaleTransform>,
    intercept_only: Option<bool>,
}

fn overlay<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

impl RunConfig {
    pub fn from_args(args: &ModelArgs) -> CliResult<Self> {
        let mut config = RunConfig {
            family: args.family.clone(),
            threshold: args.threshold,
            model: args.model,
            schema: args.schema.clone(),
            forest: ForestConfig {
                ntree: args.ntree,
                mtry: args.mtry,
                subsample_fraction: args.subsample_fraction,
                minsplit: args.minsplit,
                minbucket: args.minbucket,
                alpha: args.alpha,
                statistic: args.statistic.into(),
                split_objective: args.split_objective.into(),
                seed: args.seed,
            },
            emos_loc: args.emos_loc.clone(),
            emos_scale: args.emos_scale.clone(),
            emos_scale_transform: args.emos_scale_transform.into(),
            emos_intercept_only: args.emos_intercept_only,
        };
        if let Some(path) = &args.config {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::config(format!("cannot read {}: {e}", path.display())))?;
            config.apply_toml(&text, path.parent().unwrap_or(Path::new("")))?;
        }
        config.family()?;
        Ok(config)
    }

    /// Overrides fields with the keys present in `text`. A relative schema
    /// path is resolved against `base`.
    pub fn apply_toml(&mut self, text: &str, base: &Path) -> CliResult<()> {
        let file: ConfigFile = toml::from_str(text).map_err(|e| CliError::config(format!("run config: {e}")))?;
        overlay(&mut self.family, file.family);
        overlay(&mut self.threshold, file.threshold);
        overlay(&mut self.model, file.model);
        if let Some(s) = file.schema {
            self.schema = Some(if s.is_relative() { base.join(s) } else { s });
        }
        let f = file.forest;
        overlay(&mut self.forest.ntree, f.ntree);
        if f.mtry.is_some() {
            self.forest.mtry = f.mtry;
        }
        overlay(&mut self.forest.subsample_fraction, f.subsample_fraction);
        overlay(&mut self.forest.minsplit, f.minsplit);
        overlay(&mut self.forest.minbucket, f.minbucket);
        overlay(&mut self.forest.alpha, f.alpha);
        overlay(&mut self.forest.statistic, f.statistic);
        overlay(&mut self.forest.split_objective, f.split_objective);
        overlay(&mut self.forest.seed, f.seed);
        let e = file.emos;
        if e.loc.is_some() {
            self.emos_loc = e.loc;
        }
        if e.scale.is_some() {
            self.emos_scale = e.scale;
        }
        overlay(&mut self.emos_scale_transform, e.scale_transform);
        overlay(&mut self.emos_intercept_only, e.intercept_only);
        Ok(())
    }

    pub fn family(&self) -> CliResult<Family> {
        Ok(Family::from_name(&self.family, self.threshold)?)
    }

    /// Single-tree settings: the forest's stopping rules with all variables
    /// tested unless `mtry` is given.
    pub fn tree_config(&self) -> TreeConfig {
        TreeConfig {
            minsplit: self.forest.minsplit,
            minbucket: self.forest.minbucket,
            alpha: self.forest.alpha,
            mtry: self.forest.mtry,
            statistic: self.forest.statistic,
            split_objective: self.forest.split_objective,
        }
    }

    pub fn emos_spec(&self) -> CliResult<EmosSpec> {
        match (&self.emos_loc, &self.emos_scale) {
            (Some(loc), Some(scale)) => Ok(EmosSpec {
                loc_column: loc.clone(),
                scale_column: scale.clone(),
                scale_transform: self.emos_scale_transform,
                intercept_only: self.emos_intercept_only,
            }),
            _ => Err(CliError::config("EMOS needs both a location and a scale column")),
        }
    }
}
