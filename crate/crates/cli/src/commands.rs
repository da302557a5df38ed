use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use distforest::data::{self, Covariates, Dataset, Schema, SyntheticScenario};
use distforest::eval::{self, CvPlan, EvalOptions, ModelFactory};
use distforest::{
    fit_emos, fit_intercept, DistForest, DistTree, DistributionFamily, DistributionalModel, Error, ModelArchive,
    StoredModel,
};

use crate::config::{ModelKind, RunConfig};
use crate::error::{CliError, CliResult};

type Fitter = Box<dyn Fn(&Dataset) -> distforest::Result<StoredModel> + Send + Sync>;

/// Errors while reading inputs are data errors unless the schema itself is bad.
fn input_error(e: Error) -> CliError {
    match e {
        Error::Config(_) | Error::Toml(_) => e.into(),
        other => CliError::data(other.to_string()),
    }
}

fn read_schema(path: &Path) -> CliResult<Schema> {
    Schema::from_file(path).map_err(|e| match e {
        Error::Io(io) => CliError::config(format!("cannot read schema {}: {io}", path.display())),
        other => CliError::config(format!("schema {}: {other}", path.display())),
    })
}

fn with_path(path: &Path) -> impl Fn(Error) -> CliError + '_ {
    move |e| match e {
        Error::Io(io) => CliError::data(format!("cannot read {}: {io}", path.display())),
        other => input_error(other),
    }
}

fn load_dataset(path: &Path, schema: &Schema) -> CliResult<Dataset> {
    data::load(path, schema).map_err(with_path(path))
}

fn load_archive(path: &Path) -> CliResult<ModelArchive> {
    ModelArchive::load(path).map_err(|e| CliError::data(format!("archive {}: {e}", path.display())))
}

fn archive_schema(archive: &ModelArchive, schema: Option<&Path>) -> CliResult<Schema> {
    match schema {
        Some(p) => read_schema(p),
        None => archive
            .schema
            .clone()
            .ok_or_else(|| CliError::config("archive stores no schema; pass --schema")),
    }
}

/// Covariates laid out as the model expects, plus the response if present.
fn load_for_model(
    path: &Path,
    schema: &Schema,
    model: &dyn DistributionalModel,
) -> CliResult<(Covariates, Option<Vec<f64>>)> {
    data::load_covariates(path, schema, model.layout()).map_err(with_path(path))
}

fn labelled_dataset(path: &Path, schema: &Schema, model: &dyn DistributionalModel) -> CliResult<Dataset> {
    let (covariates, response) = load_for_model(path, schema, model)?;
    let response = response.ok_or_else(|| {
        CliError::data(format!(
            "{} has no response column '{}'",
            path.display(),
            schema.response
        ))
    })?;
    let n = response.len();
    Dataset::from_parts(schema.response.clone(), response, covariates, vec![1.0; n], None).map_err(input_error)
}

fn writer(path: Option<&Path>) -> CliResult<csv::Writer<Box<dyn Write>>> {
    let sink: Box<dyn Write> = match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).map_err(|e| CliError::data(format!("cannot create {}: {e}", p.display())))?,
        )),
        None => Box::new(io::stdout().lock()),
    };
    Ok(csv::Writer::from_writer(sink))
}

fn format_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| x.to_string())
}

pub fn fitter(config: &RunConfig, kind: ModelKind) -> CliResult<Fitter> {
    let family = config.family()?;
    Ok(match kind {
        ModelKind::Forest => {
            let fc = config.forest;
            Box::new(move |d: &Dataset| DistForest::grow(d, family, fc).map(StoredModel::Forest))
        }
        ModelKind::Tree => {
            let tc = config.tree_config();
            let seed = config.forest.seed;
            Box::new(move |d: &Dataset| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                DistTree::grow(d, family, tc, &mut rng).map(StoredModel::Tree)
            })
        }
        ModelKind::Emos => {
            let spec = config.emos_spec()?;
            Box::new(move |d: &Dataset| fit_emos(d, family, &spec).map(StoredModel::Emos))
        }
        ModelKind::Intercept => Box::new(move |d: &Dataset| fit_intercept(d, family).map(StoredModel::Intercept)),
    })
}

fn boxed(model: StoredModel) -> Box<dyn DistributionalModel> {
    match model {
        StoredModel::Forest(m) => Box::new(m),
        StoredModel::Tree(m) => Box::new(m),
        StoredModel::Emos(m) => Box::new(m),
        StoredModel::Intercept(m) => Box::new(m),
    }
}

/// Size statistics and in-sample score of a freshly fitted model.
pub fn fit_summary(model: &StoredModel, data: &Dataset) -> CliResult<Vec<(String, String)>> {
    let mut lines = vec![
        ("model".to_string(), model.kind().to_string()),
        ("family".to_string(), model.family().name().to_string()),
        ("rows".to_string(), data.n_rows().to_string()),
        ("covariates".to_string(), data.n_covariates().to_string()),
    ];
    let trees: Vec<&DistTree> = match model {
        StoredModel::Forest(f) => {
            lines.push(("skipped trees".into(), f.skipped_trees.to_string()));
            f.trees.iter().collect()
        }
        StoredModel::Tree(t) => vec![t],
        StoredModel::Emos(e) => {
            lines.push(("location coefficients".into(), format!("{} {}", e.beta[0], e.beta[1])));
            lines.push(("log-scale coefficients".into(), format!("{} {}", e.gamma[0], e.gamma[1])));
            Vec::new()
        }
        StoredModel::Intercept(m) => {
            lines.push(("parameters".into(), m.theta.to_string()));
            Vec::new()
        }
    };
    if !trees.is_empty() {
        let k = trees.len() as f64;
        let depth = trees.iter().map(|t| t.depth() as f64).sum::<f64>() / k;
        let leaves = trees.iter().map(|t| t.n_leaves() as f64).sum::<f64>() / k;
        lines.push(("trees".into(), trees.len().to_string()));
        lines.push(("mean depth".into(), format!("{depth:.3}")));
        lines.push(("mean leaves".into(), format!("{leaves:.3}")));
    }
    let m = model.as_model();
    let predictions = m.predict_all(&data.covariates)?;
    let crps = eval::mean_crps(&m.family(), &predictions, &data.response)?;
    lines.push(("in-sample mean CRPS".into(), format!("{crps:.6}")));
    Ok(lines)
}

pub fn fit(config: &RunConfig, data_path: &Path, out: &Path, slim: bool) -> CliResult<()> {
    let schema_path = config
        .schema
        .as_deref()
        .ok_or_else(|| CliError::config("fit needs a schema (--schema or `schema` in the run config)"))?;
    let schema = read_schema(schema_path)?;
    let data = load_dataset(data_path, &schema)?;
    let model = fitter(config, config.model)?(&data)?;
    let summary = fit_summary(&model, &data)?;
    let model = match model {
        StoredModel::Forest(f) if slim => StoredModel::Forest(f.into_slim()),
        other => other,
    };
    ModelArchive::new(model, &data, Some(schema))
        .save(out)
        .map_err(|e| CliError::data(format!("cannot write {}: {e}", out.display())))?;
    let mut stdout = io::stdout().lock();
    for (key, value) in summary {
        writeln!(stdout, "{key}: {value}")?;
    }
    Ok(())
}

pub fn predict(
    model_path: &Path,
    data_path: &Path,
    schema: Option<&Path>,
    out: Option<&Path>,
    quantiles: &[f64],
) -> CliResult<()> {
    if let Some(bad) = quantiles.iter().find(|p| !(**p > 0.0 && **p < 1.0)) {
        return Err(CliError::config(format!("quantile level {bad} outside (0, 1)")));
    }
    let archive = load_archive(model_path)?;
    let schema = archive_schema(&archive, schema)?;
    let model = archive.model.as_model();
    let (covariates, _) = load_for_model(data_path, &schema, model)?;
    let predictions = model.predict_all(&covariates)?;
    let family = model.family();

    let mut w = writer(out)?;
    let mut header = vec!["mu".to_string(), "sigma".into(), "p0".into()];
    header.extend(quantiles.iter().map(|p| format!("q{p}")));
    w.write_record(&header)?;
    for theta in &predictions {
        let mut rec = vec![
            theta.mu.to_string(),
            theta.sigma.to_string(),
            family.point_mass(theta)?.to_string(),
        ];
        for &p in quantiles {
            rec.push(family.quantile(theta, p)?.to_string());
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub struct EvaluateArgs<'a> {
    pub model: &'a Path,
    pub data: &'a Path,
    pub schema: Option<&'a Path>,
    pub reference: Option<&'a Path>,
    pub residual_draws: usize,
    pub seed: u64,
    pub per_obs: Option<&'a Path>,
    pub out: Option<&'a Path>,
}

pub fn evaluate(args: &EvaluateArgs) -> CliResult<()> {
    let archive = load_archive(args.model)?;
    let schema = archive_schema(&archive, args.schema)?;
    let model = archive.model.as_model();
    let test = labelled_dataset(args.data, &schema, model)?;
    let reference = args.reference.map(load_archive).transpose()?;
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let report = eval::evaluate(
        model,
        reference.as_ref().map(|r| r.model.as_model()),
        &test,
        &mut rng,
        EvalOptions {
            residual_draws: args.residual_draws,
            importance_permutations: 0,
        },
    )?;

    let mut w = writer(args.out)?;
    w.write_record(["metric", "value"])?;
    w.write_record(["n", &test.n_rows().to_string()])?;
    w.write_record(["mean_crps", &report.mean_crps.to_string()])?;
    if let Some(s) = report.crpss_vs_reference {
        w.write_record(["crpss", &s.to_string()])?;
    }
    let first_draw: Option<Vec<f64>> = report
        .calibration
        .as_ref()
        .map(|c| c.pit.iter().map(|d| d[0]).collect());
    if let (Some(pit), Some(cal)) = (&first_draw, &report.calibration) {
        let ks = eval::ks_uniform(pit);
        w.write_record(["pit_ks_statistic", &ks.statistic.to_string()])?;
        w.write_record(["pit_ks_p_value", &ks.p_value.to_string()])?;
        w.write_record(["pit_clamped", &cal.clamped.iter().filter(|&&c| c).count().to_string()])?;
    }
    w.flush()?;

    if let Some(path) = args.per_obs {
        let mut w = writer(Some(path))?;
        w.write_record(["row", "crps", "pit"])?;
        for (i, c) in report.per_obs_crps.iter().enumerate() {
            let pit = first_draw.as_ref().map(|p| p[i]);
            w.write_record([i.to_string(), c.to_string(), format_opt(pit)])?;
        }
        w.flush()?;
    }
    Ok(())
}

pub struct CvArgs<'a> {
    pub config: &'a RunConfig,
    pub data: &'a Path,
    pub models: &'a [ModelKind],
    pub reference: ModelKind,
    pub repetitions: usize,
    pub folds: usize,
    pub seed: u64,
    pub out: Option<&'a Path>,
}

pub fn cv(args: &CvArgs) -> CliResult<()> {
    let schema_path = args
        .config
        .schema
        .as_deref()
        .ok_or_else(|| CliError::config("cv needs a schema (--schema or `schema` in the run config)"))?;
    let schema = read_schema(schema_path)?;
    let mut data = load_dataset(args.data, &schema)?;
    if data.groups.is_none() {
        // without a group column every row is its own group
        let labels = (0..data.n_rows()).map(|i| format!("{i:09}")).collect();
        data = data.with_groups(labels).map_err(input_error)?;
    }
    let reference = args
        .models
        .iter()
        .position(|&m| m == args.reference)
        .ok_or_else(|| CliError::config(format!("reference '{}' is not among --models", args.reference.name())))?;
    let factories = args
        .models
        .iter()
        .map(|&kind| {
            let fit = fitter(args.config, kind)?;
            Ok(ModelFactory::new(kind.name(), move |d: &Dataset| fit(d).map(boxed)))
        })
        .collect::<CliResult<Vec<_>>>()?;
    let plan = CvPlan::for_dataset(&data, args.repetitions, args.folds, args.seed)?;
    let table = eval::cross_validate(&data, &factories, reference, &plan)?;

    let mut w = writer(args.out)?;
    w.write_record(["repetition", "model", "mean_crps", "crpss"])?;
    for (r, (crps_row, skill_row)) in table.mean_crps.iter().zip(&table.crpss).enumerate() {
        for (m, name) in table.models.iter().enumerate() {
            w.write_record([r.to_string(), name.clone(), format_opt(crps_row[m]), format_opt(skill_row[m])])?;
        }
    }
    w.flush()?;
    for (m, name) in table.models.iter().enumerate() {
        let med = eval::median(table.crpss.iter().map(|row| row[m]));
        eprintln!("{name}: median CRPSS {}", format_opt(med));
    }
    Ok(())
}

pub fn importance(
    model_path: &Path,
    data_path: &Path,
    schema: Option<&Path>,
    permutations: usize,
    seed: u64,
    out: Option<&Path>,
) -> CliResult<()> {
    if permutations == 0 {
        return Err(CliError::config("--permutations must be at least 1"));
    }
    let archive = load_archive(model_path)?;
    let schema = archive_schema(&archive, schema)?;
    let model = archive.model.as_model();
    let test = labelled_dataset(data_path, &schema, model)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut entries = eval::variable_importance(model, &test, &mut rng, permutations)?;
    entries.sort_by(|a, b| b.delta_crps.total_cmp(&a.delta_crps));
    let mut w = writer(out)?;
    w.write_record(["variable", "delta_crps"])?;
    for e in entries {
        w.write_record([e.name, e.delta_crps.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn simulate(scenario_path: &Path, out: &Path, schema_out: Option<&Path>) -> CliResult<()> {
    let scenario = SyntheticScenario::from_file(scenario_path)
        .map_err(|e| CliError::config(format!("scenario {}: {e}", scenario_path.display())))?;
    let generated = data::generate(&scenario).map_err(|e| CliError::config(e.to_string()))?;
    let schema = data::save(&generated.dataset, out)
        .map_err(|e| CliError::data(format!("cannot write {}: {e}", out.display())))?;
    if let Some(p) = schema_out {
        std::fs::write(p, schema.to_toml_string())
            .map_err(|e| CliError::data(format!("cannot write {}: {e}", p.display())))?;
    }
    Ok(())
}
