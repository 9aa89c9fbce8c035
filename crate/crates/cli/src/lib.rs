//! Command-line experiments: data generation, training, evaluation,
//! ablation, K-fold cross-validation and model selection.
//!
//! Every command writes its resolved configuration to `config.json` in the
//! output directory next to its artifacts, and is deterministic given its
//! flags when run sequentially.

pub mod config;

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use cloudret_core::architectures::{train, write_history_csv, TrainData, Variant};
use cloudret_core::datasynth::{kfold_indices, save_csv, split, SensorName, Standardizer};
use cloudret_core::selection::{
    default_complexity_order, fold_stats, load_grid, render_table, save_grid, select, selection_values, FoldStats,
    SELECTION_METRICS,
};
use cloudret_core::{Checkpoint, Error, EvalReport, Model, PixelDataset, Result};
use serde::Serialize;

pub use config::{derive_seed, ArchitectureOptions, ExperimentConfig, Stream};

#[derive(Debug, Parser)]
#[command(name = "cloudret", version, about = "Multi-task cloud mask, phase and optical thickness retrieval")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic pixel dataset.
    GenData(GenDataArgs),
    /// Train one variant and evaluate it on the test split.
    Train(TrainArgs),
    /// Re-evaluate a checkpoint on the test split.
    Eval(EvalArgs),
    /// Train several variants under identical data, splits and seeds.
    Ablate(AblateArgs),
    /// K-fold cross-validation producing a selection grid.
    Kfold(KfoldArgs),
    /// One-standard-error model selection over a statistics grid.
    Select(SelectArgs),
}

#[derive(Debug, Args)]
pub struct Common {
    /// Experiment configuration JSON; flags override its fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Master seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct DataArgs {
    #[arg(long)]
    pub sensor: Option<SensorName>,
    /// Dataset CSV instead of generated data.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Number of generated pixels.
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub noise_sd: Option<f64>,
}

#[derive(Debug, Args)]
pub struct TrainFlags {
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lasso_lambda: Option<f64>,
}

#[derive(Debug, Args)]
pub struct GenDataArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub data: DataArgs,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub train: TrainFlags,
    #[arg(long)]
    pub variant: Option<Variant>,
    /// Also write `(y_true, y_pred)` of cloudy test pixels to `scatter.csv`.
    #[arg(long)]
    pub dump_scatter: bool,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub checkpoint: PathBuf,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub train: TrainFlags,
    /// Comma-separated variants; defaults to all six.
    #[arg(long, value_delimiter = ',')]
    pub variants: Option<Vec<Variant>>,
}

#[derive(Debug, Args)]
pub struct KfoldArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub train: TrainFlags,
    #[arg(long)]
    pub k: Option<usize>,
    /// Comma-separated variants; defaults to the four multi-task models.
    #[arg(long, value_delimiter = ',')]
    pub variants: Option<Vec<Variant>>,
    /// Run folds on separate threads. Results are identical to sequential runs.
    #[arg(long)]
    pub parallel: bool,
}

#[derive(Debug, Args)]
pub struct SelectArgs {
    /// Statistics grid CSV; repeat to combine several datasets.
    #[arg(long, required = true)]
    pub grid: Vec<PathBuf>,
    /// Models from least to most complex, comma-separated.
    #[arg(long, value_delimiter = ',')]
    pub order: Option<Vec<String>>,
    /// Display resolution of the grid means, widening every 1SE reach by half of it.
    #[arg(long, default_value_t = 0.0)]
    pub resolution: f64,
    #[arg(long)]
    pub out: PathBuf,
}

/// Exit status for a command result: 0, 1 for runtime failures, 2 for
/// usage and configuration errors.
pub fn exit_code(result: &Result<()>) -> i32 {
    match result {
        Ok(()) => 0,
        Err(e) if e.is_usage() => 2,
        Err(_) => 1,
    }
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenData(a) => gen_data(&a),
        Command::Train(a) => cmd_train(&a),
        Command::Eval(a) => cmd_eval(&a),
        Command::Ablate(a) => cmd_ablate(&a),
        Command::Kfold(a) => cmd_kfold(&a),
        Command::Select(a) => cmd_select(&a),
    }
}

fn resolve(common: &Common, data: &DataArgs, train: Option<&TrainFlags>) -> Result<ExperimentConfig> {
    let mut c = match &common.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = common.seed {
        c.seed = s;
    }
    if let Some(s) = data.sensor {
        c.sensor = s;
    }
    if let Some(d) = &data.data {
        c.data = Some(d.clone());
    }
    if let Some(n) = data.n {
        c.n = n;
    }
    if let Some(s) = data.noise_sd {
        c.noise_sd = s;
    }
    if let Some(t) = train {
        if let Some(e) = t.epochs {
            c.train.epochs = e;
        }
        if let Some(lr) = t.lr {
            c.train.learning_rate = lr;
        }
        if let Some(b) = t.batch_size {
            c.train.batch_size = b;
        }
        if let Some(l) = t.lasso_lambda {
            c.train.lasso_lambda = l;
        }
    }
    c.resolve()
}

fn out_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::Io {
        path: path.into(),
        source: e,
    })
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::Io {
        path: path.into(),
        source: e,
    })
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_text(path, &(serde_json::to_string_pretty(value)? + "\n"))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| Error::Io {
        path: path.into(),
        source: e,
    })
}

fn csv_writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(w)
}

fn csv_error(e: csv::Error) -> Error {
    Error::from(e)
}

fn gen_data(a: &GenDataArgs) -> Result<()> {
    let mut c = resolve(&a.common, &a.data, None)?;
    c.data = None;
    out_dir(&a.common.out)?;
    let ds = c.dataset()?;
    save_csv(&ds, a.common.out.join("dataset.csv"))?;
    write_text(&a.common.out.join("config.json"), &c.to_json()?)?;
    let [clear, liquid, ice] = ds.label_counts();
    println!(
        "{} pixels, {} reflectance bands ({} features); clear {clear}, liquid {liquid}, ice {ice}",
        ds.len(),
        ds.sensor.band_count(),
        ds.feature_dim()
    );
    Ok(())
}

/// Standardised train / validation / test partitions of a dataset.
struct Prepared {
    standardizer: Standardizer,
    train: TrainData,
    val: TrainData,
    test: TrainData,
}

fn prepare(c: &ExperimentConfig, ds: &PixelDataset) -> Result<Prepared> {
    let parts = split(ds.len(), &c.split)?;
    if parts.train.is_empty() || parts.test.is_empty() {
        return Err(Error::Config(format!(
            "split of {} pixels leaves {} training and {} test pixels",
            ds.len(),
            parts.train.len(),
            parts.test.len()
        )));
    }
    let train_ds = ds.subset(&parts.train);
    let standardizer = Standardizer::fit(&train_ds.features())?;
    Ok(Prepared {
        train: TrainData::from_dataset(&train_ds, &standardizer)?,
        val: TrainData::from_dataset(&ds.subset(&parts.val), &standardizer)?,
        test: TrainData::from_dataset(&ds.subset(&parts.test), &standardizer)?,
        standardizer,
    })
}

fn fit(
    c: &ExperimentConfig,
    variant: Variant,
    init_seed: u64,
    data: &TrainData,
    val: Option<&TrainData>,
    train_seed: u64,
) -> Result<(Model, Vec<cloudret_core::architectures::HistoryRow>)> {
    let spec = c.architecture.spec(variant, data.x.cols())?;
    let mut model = Model::new(spec, init_seed)?;
    let mut tc = c.train.clone();
    tc.seed = train_seed;
    let history = train(&mut model, data, val.filter(|v| !v.is_empty()), &tc)?;
    Ok((model, history))
}

fn evaluate(model: &Model, data: &TrainData, c: &ExperimentConfig) -> Result<EvalReport> {
    model.evaluate(&data.x, &data.labels, &data.cot, c.fmg_space)
}

fn cmd_train(a: &TrainArgs) -> Result<()> {
    let mut c = resolve(&a.common, &a.data, Some(&a.train))?;
    if let Some(v) = a.variant {
        c.variant = v;
    }
    out_dir(&a.common.out)?;
    let out = &a.common.out;
    let ds = c.dataset()?;
    let p = prepare(&c, &ds)?;
    let (model, history) = fit(&c, c.variant, c.init_seed(), &p.train, Some(&p.val), c.train.seed)?;

    Checkpoint::capture(&model, &c.train, &p.standardizer).save(&out.join("checkpoint.json"))?;
    write_history_csv(&history, create(&out.join("history.csv"))?)?;
    write_json(&out.join("standardization.json"), &p.standardizer)?;
    let report = evaluate(&model, &p.test, &c)?;
    write_json(&out.join("eval_report.json"), &report)?;
    if a.dump_scatter {
        write_scatter(&model, &p.test, &out.join("scatter.csv"))?;
    }
    write_text(&out.join("config.json"), &c.to_json()?)?;
    if let (Some(first), Some(last)) = (history.first(), history.last()) {
        println!("{}: train loss {:.6} -> {:.6}", c.variant, first.train.total, last.train.total);
    }
    println!(
        "{}: test acc_bi {:.4}, mse {}, r2 {}",
        c.variant,
        report.acc_bi,
        fmt_opt(report.mse_all),
        fmt_opt(report.r2_all)
    );
    Ok(())
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.4}")).unwrap_or_else(|| "undefined".into())
}

fn write_scatter(model: &Model, test: &TrainData, path: &Path) -> Result<()> {
    let y_hat = model.forward(&test.x, false)?.y_cot_hat;
    let mut w = csv_writer(create(path)?);
    w.write_record(["y_true", "y_pred", "phase"]).map_err(csv_error)?;
    for ((label, y), yh) in test.labels.iter().zip(&test.cot).zip(&y_hat) {
        if let Some(y) = y {
            w.write_record([y.to_string(), yh.to_string(), label.as_str().to_string()])
                .map_err(csv_error)?;
        }
    }
    w.flush().map_err(|e| Error::Io {
        path: path.into(),
        source: e,
    })
}

fn cmd_eval(a: &EvalArgs) -> Result<()> {
    let c = resolve(&a.common, &a.data, None)?;
    out_dir(&a.common.out)?;
    let ck = Checkpoint::load(&a.checkpoint)?;
    let model = ck.restore()?;
    let ds = c.dataset()?;
    let parts = split(ds.len(), &c.split)?;
    let test = TrainData::from_dataset(&ds.subset(&parts.test), &ck.standardization)?;
    if test.is_empty() {
        return Err(Error::Config("the configured split has no test pixels".into()));
    }
    let report = evaluate(&model, &test, &c)?;
    write_json(&a.common.out.join("eval_report.json"), &report)?;
    write_text(&a.common.out.join("config.json"), &c.to_json()?)?;
    println!("{}: test acc_bi {:.4}, r2 {}", model.variant(), report.acc_bi, fmt_opt(report.r2_all));
    Ok(())
}

#[derive(Debug, Serialize)]
struct ManifestEntry {
    variant: Variant,
    parameter_count: usize,
    epochs_run: usize,
    final_train_total: Option<f64>,
}

#[derive(Debug, Serialize)]
struct Manifest {
    complete: bool,
    failed_variant: Option<Variant>,
    variants: Vec<ManifestEntry>,
}

fn cmd_ablate(a: &AblateArgs) -> Result<()> {
    let mut c = resolve(&a.common, &a.data, Some(&a.train))?;
    if let Some(v) = &a.variants {
        c.variants = v.clone();
        c = c.resolve()?;
    }
    let out = &a.common.out;
    out_dir(&out.join("reports"))?;
    write_text(&out.join("config.json"), &c.to_json()?)?;
    let ds = c.dataset()?;
    let p = prepare(&c, &ds)?;

    let mut table = csv_writer(create(&out.join("ablation.csv"))?);
    let mut header = vec!["variant", "parameter_count"];
    header.extend(EvalReport::COLUMNS);
    table.write_record(&header).map_err(csv_error)?;
    let mut manifest = Manifest {
        complete: false,
        failed_variant: None,
        variants: Vec::new(),
    };
    let mut failure = None;
    for &v in &c.variants {
        let result = fit(&c, v, c.init_seed(), &p.train, Some(&p.val), c.train.seed)
            .and_then(|(model, history)| Ok((evaluate(&model, &p.test, &c)?, model, history)));
        let (report, model, history) = match result {
            Ok(r) => r,
            Err(e) => {
                manifest.failed_variant = Some(v);
                failure = Some(e);
                break;
            }
        };
        write_json(&out.join("reports").join(format!("{v}.json")), &report)?;
        let mut row = vec![v.to_string(), model.parameter_count().to_string()];
        row.extend(report.row());
        table.write_record(&row).map_err(csv_error)?;
        table.flush().map_err(|e| Error::Io {
            path: out.join("ablation.csv"),
            source: e,
        })?;
        println!(
            "{v:<13} params {:>7}  acc_bi {:.4}  mse {}  r2 {}",
            model.parameter_count(),
            report.acc_bi,
            fmt_opt(report.mse_all),
            fmt_opt(report.r2_all)
        );
        manifest.variants.push(ManifestEntry {
            variant: v,
            parameter_count: model.parameter_count(),
            epochs_run: history.len(),
            final_train_total: history.last().map(|h| h.train.total),
        });
    }
    manifest.complete = failure.is_none();
    write_json(&out.join("manifest.json"), &manifest)?;
    match failure {
        Some(e) => Err(e),
        None => Ok(()),
    }
}

/// One trained and evaluated fold.
struct FoldResult {
    n_train: usize,
    report: EvalReport,
}

fn run_fold(c: &ExperimentConfig, ds: &PixelDataset, folds: &[Vec<usize>], f: usize, v: Variant) -> Result<FoldResult> {
    let train_idx: Vec<usize> = folds
        .iter()
        .enumerate()
        .filter(|(g, _)| *g != f)
        .flat_map(|(_, idx)| idx.iter().copied())
        .collect();
    let train_ds = ds.subset(&train_idx);
    let st = Standardizer::fit(&train_ds.features())?;
    let train_data = TrainData::from_dataset(&train_ds, &st)?;
    let test = TrainData::from_dataset(&ds.subset(&folds[f]), &st)?;
    let fold_seed = c.seed.wrapping_add(f as u64);
    let (model, _) = fit(
        c,
        v,
        derive_seed(fold_seed, Stream::Init),
        &train_data,
        None,
        derive_seed(fold_seed, Stream::Shuffle),
    )?;
    Ok(FoldResult {
        n_train: train_data.len(),
        report: evaluate(&model, &test, c)?,
    })
}

fn cmd_kfold(a: &KfoldArgs) -> Result<()> {
    let mut c = resolve(&a.common, &a.data, Some(&a.train))?;
    if let Some(k) = a.k {
        c.kfold_k = k;
    }
    c.variants = match &a.variants {
        Some(v) => v.clone(),
        None => default_complexity_order()
            .iter()
            .map(|m| m.parse())
            .collect::<Result<Vec<Variant>>>()?,
    };
    let c = c.resolve()?;
    let out = &a.common.out;
    out_dir(out)?;
    write_text(&out.join("config.json"), &c.to_json()?)?;
    let ds = c.dataset()?;
    let folds = kfold_indices(ds.len(), c.kfold_k, c.split.seed)?;
    let dataset_name = ds.sensor.name.as_str();

    let mut reports = csv_writer(create(&out.join("fold_reports.csv"))?);
    let mut header = vec!["variant", "fold", "n_train"];
    header.extend(EvalReport::COLUMNS);
    reports.write_record(&header).map_err(csv_error)?;
    let mut grid: Vec<FoldStats> = Vec::new();
    for &v in &c.variants {
        let results: Vec<Result<FoldResult>> = if a.parallel {
            std::thread::scope(|s| {
                let handles: Vec<_> = (0..folds.len())
                    .map(|f| {
                        let (c, ds, folds) = (&c, &ds, &folds);
                        s.spawn(move || run_fold(c, ds, folds, f, v))
                    })
                    .collect();
                handles
                    .into_iter()
                    .map(|h| h.join().unwrap_or_else(|_| Err(Error::State("fold thread panicked".into()))))
                    .collect()
            })
        } else {
            (0..folds.len()).map(|f| run_fold(&c, &ds, &folds, f, v)).collect()
        };
        let results = results.into_iter().collect::<Result<Vec<_>>>()?;
        let mut values: Vec<Vec<f64>> = vec![Vec::new(); SELECTION_METRICS.len()];
        for (f, r) in results.iter().enumerate() {
            let mut row = vec![v.to_string(), (f + 1).to_string(), r.n_train.to_string()];
            row.extend(r.report.row());
            reports.write_record(&row).map_err(csv_error)?;
            for (slot, (value, (metric, _))) in values
                .iter_mut()
                .zip(selection_values(&r.report).into_iter().zip(SELECTION_METRICS))
            {
                let value = value.ok_or_else(|| {
                    Error::Data(format!("{metric} is undefined for {v} on fold {}", f + 1))
                })?;
                slot.push(value);
            }
        }
        for (vals, (metric, direction)) in values.iter().zip(SELECTION_METRICS) {
            grid.push(fold_stats(vals, v.as_str(), dataset_name, metric, direction)?);
        }
        println!("{v}: {} folds done", folds.len());
    }
    reports.flush().map_err(|e| Error::Io {
        path: out.join("fold_reports.csv"),
        source: e,
    })?;
    save_grid(&grid, &out.join("fold_stats.csv"))
}

#[derive(Debug, Serialize)]
struct SelectConfig<'a> {
    grids: &'a [PathBuf],
    complexity_order: &'a [String],
    resolution: f64,
    weights: BTreeMap<String, f64>,
}

fn cmd_select(a: &SelectArgs) -> Result<()> {
    if !(a.resolution >= 0.0) || !a.resolution.is_finite() {
        return Err(Error::Config(format!("resolution must be non-negative, got {}", a.resolution)));
    }
    let order = a.order.clone().unwrap_or_else(default_complexity_order);
    let mut grid = Vec::new();
    for path in &a.grid {
        grid.extend(load_grid(path)?);
    }
    let weights: BTreeMap<String, f64> = SELECTION_METRICS.iter().map(|(m, _)| (m.to_string(), 1.0)).collect();
    let scores = select(&grid, &order, &weights, a.resolution)?;
    out_dir(&a.out)?;
    write_json(&a.out.join("selection.json"), &scores)?;
    let table = render_table(&grid, &scores, &order);
    write_text(&a.out.join("selection.txt"), &table)?;
    write_json(
        &a.out.join("config.json"),
        &SelectConfig {
            grids: &a.grid,
            complexity_order: &order,
            resolution: a.resolution,
            weights,
        },
    )?;
    print!("{table}");
    Ok(())
}
