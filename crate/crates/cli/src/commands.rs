use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use serde::Serialize;
use serde_json::json;

use metricre_core::anchor::{load_ensemble, save_ensemble};
use metricre_core::data::{load_dataset, save_dataset, DatasetFormat};
use metricre_core::eval::{
    consistency_study, emit_consistency, emit_report, evaluate, fit_holdout, simulate, training_candidates,
};
use metricre_core::metrics::pairwise_squared_distances;
use metricre_core::predict::{batch_predict, CandidateSet, PredictionRequest};
use metricre_core::{LongitudinalDataset, MetricKind, SplitPlan, VisitKey};

use crate::config::{
    resolve, ConfigFile, ConsistencySettings, DataFormat, EvaluateSettings, ExportSettings, FitSettings,
    GlobalSettings, PredictSettings, SimulateSettings, Subset,
};
use crate::manifest::RunRecord;
use crate::{Cli, Command, DistancesCommand};

#[derive(Serialize)]
struct GlobalFlags {
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    threads: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    out_dir: Option<PathBuf>,
}

struct RunContext {
    file: ConfigFile,
    seed: u64,
    out_dir: PathBuf,
}

pub fn run(cli: Cli) -> Result<()> {
    let file = ConfigFile::load(cli.config.as_deref())?;
    let globals: GlobalSettings = resolve(
        &GlobalFlags {
            seed: cli.seed,
            threads: cli.threads,
            out_dir: cli.out_dir.clone(),
        },
        &file,
    )?;
    fs::create_dir_all(&globals.out_dir)
        .with_context(|| format!("creating {}", globals.out_dir.display()))?;
    let ctx = RunContext {
        file,
        seed: globals.seed,
        out_dir: globals.out_dir,
    };
    match globals.threads {
        Some(0) => bail!("--threads must be at least 1"),
        Some(k) => {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(k).build()?;
            pool.install(|| dispatch(&cli.command, &ctx))
        }
        None => dispatch(&cli.command, &ctx),
    }
}

fn dispatch(command: &Command, ctx: &RunContext) -> Result<()> {
    match command {
        Command::Simulate(flags) => cmd_simulate(&resolve(flags, &ctx.file)?, ctx),
        Command::Fit(flags) => cmd_fit(&resolve(flags, &ctx.file)?, ctx),
        Command::Predict(flags) => cmd_predict(&resolve(flags, &ctx.file)?, ctx),
        Command::Evaluate(flags) => cmd_evaluate(&resolve(flags, &ctx.file)?, ctx),
        Command::Consistency(flags) => cmd_consistency(&resolve(flags, &ctx.file)?, ctx),
        Command::Distances {
            command: DistancesCommand::Export(flags),
        } => cmd_export(&resolve(flags, &ctx.file)?, ctx),
    }
}

fn required<'a>(value: &'a Option<PathBuf>, flag: &str) -> Result<&'a Path> {
    value
        .as_deref()
        .ok_or_else(|| anyhow!("missing required setting --{flag}"))
}

fn load_data(data: &Option<PathBuf>, covariates: &Option<PathBuf>) -> Result<LongitudinalDataset> {
    let path = required(data, "data")?;
    let format = DatasetFormat::infer(path, covariates.as_deref())?;
    Ok(load_dataset(path, &format)?)
}

fn read_split(path: &Path, dataset: &LongitudinalDataset) -> Result<SplitPlan> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let split: SplitPlan =
        serde_json::from_str(&text).with_context(|| format!("parsing split {}", path.display()))?;
    split.validate(dataset)?;
    Ok(split)
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, format!("{text}\n")).with_context(|| format!("writing {}", path.display()))
}

fn cmd_simulate(s: &SimulateSettings, ctx: &RunContext) -> Result<()> {
    let sim = simulate(&s.spec(ctx.seed))?;
    let mut record = RunRecord::new("simulate", ctx.seed, s)?;
    match s.format {
        DataFormat::Ndjson => {
            let path = ctx.out_dir.join("dataset.ndjson");
            save_dataset(&sim.dataset, &path, &DatasetFormat::Ndjson)?;
            record.output(path);
        }
        DataFormat::Csv => {
            if s.metric != MetricKind::Curve {
                bail!("csv output is only available for curves, not {}", s.metric);
            }
            let path = ctx.out_dir.join("curves.csv");
            let covariates = ctx.out_dir.join("covariates.csv");
            save_dataset(
                &sim.dataset,
                &path,
                &DatasetFormat::CurveCsv {
                    covariates: covariates.clone(),
                },
            )?;
            record.output(path);
            record.output(covariates);
        }
    }
    let targets: Vec<_> = sim
        .oracle
        .iter()
        .map(|(k, t)| json!({ "subject_id": k.subject_id, "visit": k.visit, "target": t }))
        .collect();
    let oracle_path = ctx.out_dir.join("oracle.json");
    write_json(
        &oracle_path,
        &json!({ "subject_effects": sim.subject_effects, "targets": targets }),
    )?;
    record.output(oracle_path);
    record.write(&ctx.out_dir)?;
    Ok(())
}

fn cmd_fit(s: &FitSettings, ctx: &RunContext) -> Result<()> {
    let dataset = load_data(&s.data, &s.covariates)?;
    let (split, fit) = fit_holdout(&dataset, &s.holdout(), ctx.seed)?;
    let ensemble_path = ctx.out_dir.join("ensemble.json");
    save_ensemble(&fit.ensemble, &ensemble_path)?;
    let split_path = ctx.out_dir.join("split.json");
    write_json(&split_path, &split)?;

    let mut record = RunRecord::new("fit", ctx.seed, s)?;
    record.input("data", s.data.as_deref());
    record.input("covariates", s.covariates.as_deref());
    record.output(ensemble_path);
    record.output(split_path);
    record.write(&ctx.out_dir)?;
    Ok(())
}

fn cmd_predict(s: &PredictSettings, ctx: &RunContext) -> Result<()> {
    let dataset = load_data(&s.data, &s.covariates)?;
    let ensemble_path = required(&s.ensemble, "ensemble")?;
    let split_path = required(&s.split, "split")?;
    let ensemble = load_ensemble(ensemble_path)?;
    let split = read_split(split_path, &dataset)?;
    let candidates = CandidateSet::new(&ensemble, training_candidates(&dataset, &split)?)?;

    let mut queries: Vec<(&VisitKey, PredictionRequest)> = Vec::new();
    for key in &split.test {
        let x = dataset.try_visit(key)?.covariates.clone();
        for mode in s.mode.modes() {
            queries.push((
                key,
                PredictionRequest {
                    x: x.clone(),
                    subject: Some(key.subject_id.clone()),
                    mode,
                    record_scores: false,
                },
            ));
        }
    }
    let requests: Vec<PredictionRequest> = queries.iter().map(|(_, r)| r.clone()).collect();
    let results = batch_predict(&ensemble, &candidates, &requests)?;

    let path = ctx.out_dir.join("predictions.csv");
    let mut w = csv::Writer::from_path(&path).with_context(|| format!("writing {}", path.display()))?;
    w.write_record(["subject_id", "visit", "mode", "chosen_subject", "chosen_visit", "score"])?;
    for ((key, req), res) in queries.iter().zip(&results) {
        w.write_record([
            key.subject_id.as_str().to_string(),
            key.visit.to_string(),
            req.mode.to_string(),
            res.chosen_key.subject_id.as_str().to_string(),
            res.chosen_key.visit.to_string(),
            res.score.to_string(),
        ])?;
    }
    w.flush()?;

    let mut record = RunRecord::new("predict", ctx.seed, s)?;
    record.input("data", s.data.as_deref());
    record.input("covariates", s.covariates.as_deref());
    record.input("ensemble", Some(ensemble_path));
    record.input("split", Some(split_path));
    record.output(path);
    record.write(&ctx.out_dir)?;
    Ok(())
}

fn cmd_evaluate(s: &EvaluateSettings, ctx: &RunContext) -> Result<()> {
    let dataset = load_data(&s.data, &s.covariates)?;
    let ensemble_path = required(&s.ensemble, "ensemble")?;
    let split_path = required(&s.split, "split")?;
    let ensemble = load_ensemble(ensemble_path)?;
    if ensemble.metric_kind != dataset.metric_kind() {
        return Err(metricre_core::Error::MetricMismatch {
            expected: ensemble.metric_kind.to_string(),
            found: dataset.metric_kind().to_string(),
        })
        .context(format!(
            "ensemble {} was fitted on {} responses but the dataset holds {}",
            ensemble_path.display(),
            ensemble.metric_kind,
            dataset.metric_kind()
        ));
    }
    let split = read_split(split_path, &dataset)?;
    let candidates = CandidateSet::new(&ensemble, training_candidates(&dataset, &split)?)?;
    let report = evaluate(&dataset, &split, &ensemble, &candidates)?;
    let outputs = emit_report(&report, &ctx.out_dir)?;

    let mut record = RunRecord::new("evaluate", ctx.seed, s)?;
    record.input("data", s.data.as_deref());
    record.input("covariates", s.covariates.as_deref());
    record.input("ensemble", Some(ensemble_path));
    record.input("split", Some(split_path));
    for p in outputs {
        record.output(p);
    }
    record.write(&ctx.out_dir)?;
    if let (Some(w), Some(wo)) = (report.mean_mse_with_re, report.mean_mse_without_re) {
        println!("mean MSE with RE {w}, without RE {wo}");
    }
    Ok(())
}

fn cmd_consistency(s: &ConsistencySettings, ctx: &RunContext) -> Result<()> {
    let table = consistency_study(&s.study(ctx.seed))?;
    let path = emit_consistency(&table, &ctx.out_dir)?;
    let mut record = RunRecord::new("consistency", ctx.seed, s)?;
    record.output(path);
    record.write(&ctx.out_dir)?;
    for row in &table.rows {
        println!("n={} mean={} std={}", row.n, row.mean_sq_error, row.std_sq_error);
    }
    Ok(())
}

fn cmd_export(s: &ExportSettings, ctx: &RunContext) -> Result<()> {
    let dataset = load_data(&s.data, &s.covariates)?;
    let keys: Vec<VisitKey> = match s.subset {
        Subset::All => dataset.keys().cloned().collect(),
        Subset::Train => {
            let split_path = required(&s.split, "split")?;
            read_split(split_path, &dataset)?.train.into_iter().collect()
        }
    };
    let matrix = pairwise_squared_distances(&keys, &keys, &dataset)?;
    let path = ctx.out_dir.join("distances.csv");
    matrix.write_csv(&path)?;

    let mut record = RunRecord::new("distances export", ctx.seed, s)?;
    record.input("data", s.data.as_deref());
    record.input("covariates", s.covariates.as_deref());
    record.input("split", s.split.as_deref());
    record.output(path);
    record.write(&ctx.out_dir)?;
    Ok(())
}
