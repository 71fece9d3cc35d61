//! Command-line surface: synth, train, evaluate, importance, explain,
//! demand. Every run writes its primary artifact(s) plus a run manifest
//! recording the resolved configuration, input digests, and seed.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataset::{self, SynthSpec};
use crate::demand::{demand_extended, demand_static, DemandCoefficients, LandUseEntry};
use crate::explain::{explain_case, garson, LimeConfig, PerturbStats};
use crate::model_io::ModelFile;
use crate::network::TrainConfig;
use crate::plot::{feature_plot_svg, feature_plot_text};
use crate::seed::{mix, tag};
use crate::selection::{accuracy, confusion, expected_accuracy, grid_search, kappa, Grid};

#[derive(Parser, Debug)]
#[command(name = "parkdur", version, about = "Parking-duration modeling pipeline")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum OutputFormat {
    Json,
    Text,
    Svg,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a synthetic survey CSV from a spec file.
    Synth(SynthArgs),
    /// Grid-search (size, decay) with k-fold CV and write the refit model.
    Train(TrainArgs),
    /// Evaluate a model on labeled data: confusion matrix, accuracy, kappa.
    Evaluate(EvaluateArgs),
    /// Garson relative importance of the model's input columns.
    Importance(ImportanceArgs),
    /// LIME explanations and feature plots for a CSV of cases.
    Explain(ExplainArgs),
    /// Parking-generation demand formulas (static or extended).
    Demand(DemandArgs),
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    /// SynthSpec JSON file.
    pub spec: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Overrides the seed stored in the spec.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides the record count in the spec.
    #[arg(long)]
    pub n: Option<usize>,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub schema: PathBuf,
    /// Model JSON output; the report is written next to it.
    #[arg(long)]
    pub out: PathBuf,
    /// Hidden-layer sizes: a comma list ("2,4,6,8") or a range ("1..20").
    #[arg(long, default_value = "1..20")]
    pub sizes: String,
    /// Weight-decay values, comma separated.
    #[arg(long, default_value = "0,0.001,0.01,0.1")]
    pub decays: String,
    #[arg(long, default_value_t = 10)]
    pub folds: usize,
    #[arg(long, default_value_t = 0.1)]
    pub lr: f64,
    #[arg(long = "max-iter", default_value_t = 2000)]
    pub max_iter: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct ImportanceArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct ExplainArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// CSV of cases conforming to the model's schema.
    #[arg(long)]
    pub cases: PathBuf,
    /// Explanation JSON output; the feature plot is written next to it.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long = "n-samples", default_value_t = 5000)]
    pub n_samples: usize,
    /// Defaults to 0.75 * sqrt(d).
    #[arg(long = "kernel-width")]
    pub kernel_width: Option<f64>,
    #[arg(long = "n-features", default_value_t = 4)]
    pub n_features: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub ridge: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Plot format: text or svg.
    #[arg(long, value_enum, default_value_t = OutputFormat::Text)]
    pub format: OutputFormat,
}

#[derive(Args, Debug)]
pub struct DemandArgs {
    /// JSON document of land-use entries and coefficients.
    pub input: PathBuf,
    #[arg(long, value_enum, default_value_t = DemandModel::Static)]
    pub model: DemandModel,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum DemandModel {
    Static,
    Extended,
}

/// One manifest per run: resolved configuration, input digests, seed, and
/// every artifact path written.
#[derive(Debug, Serialize)]
struct RunManifest {
    command: String,
    config: serde_json::Value,
    inputs: indexmap::IndexMap<String, String>,
    seed: u64,
    artifacts: Vec<String>,
}

fn sha256_hex(path: &Path) -> Result<String> {
    let bytes =
        fs::read(path).with_context(|| format!("cannot read {}", path.display()))?;
    Ok(format!("{:x}", Sha256::digest(&bytes)))
}

fn write_manifest(out: &Path, manifest: &RunManifest) -> Result<PathBuf> {
    let path = manifest_path(out);
    fs::write(&path, serde_json::to_string_pretty(manifest)?)
        .with_context(|| format!("cannot write {}", path.display()))?;
    Ok(path)
}

fn manifest_path(out: &Path) -> PathBuf {
    sibling(out, ".manifest.json")
}

/// `foo.json` -> `foo<suffix>`; keeps the artifact family side by side.
fn sibling(out: &Path, suffix: &str) -> PathBuf {
    let stem = out.file_stem().and_then(|s| s.to_str()).unwrap_or("out");
    out.with_file_name(format!("{stem}{suffix}"))
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth(args) => cmd_synth(args),
        Command::Train(args) => cmd_train(args),
        Command::Evaluate(args) => cmd_evaluate(args),
        Command::Importance(args) => cmd_importance(args),
        Command::Explain(args) => cmd_explain(args),
        Command::Demand(args) => cmd_demand(args),
    }
}

fn cmd_synth(args: SynthArgs) -> Result<()> {
    let file = fs::File::open(&args.spec)
        .with_context(|| format!("cannot open {}", args.spec.display()))?;
    let mut spec = SynthSpec::from_json(file)?;
    if let Some(n) = args.n {
        spec.n = n;
    }
    let seed = args.seed.unwrap_or(spec.seed);
    let gen_seed = mix(seed, tag::SYNTH);

    let records = dataset::synthesize(&spec, gen_seed)?;
    let schema = spec.schema()?;

    let mut csv_bytes = Vec::new();
    dataset::write_csv(&records, &schema, &mut csv_bytes)?;
    fs::write(&args.out, &csv_bytes)
        .with_context(|| format!("cannot write {}", args.out.display()))?;

    let schema_path = sibling(&args.out, ".schema.json");
    fs::write(&schema_path, serde_json::to_string_pretty(&schema)?)?;

    let manifest = RunManifest {
        command: "synth".into(),
        config: serde_json::json!({
            "spec": args.spec.display().to_string(),
            "n": spec.n,
            "seed": seed,
            "generator_seed": gen_seed,
        }),
        inputs: indexmap::IndexMap::from([(
            args.spec.display().to_string(),
            sha256_hex(&args.spec)?,
        )]),
        seed,
        artifacts: vec![
            args.out.display().to_string(),
            schema_path.display().to_string(),
        ],
    };
    write_manifest(&args.out, &manifest)?;
    println!("wrote {} records to {}", records.len(), args.out.display());
    Ok(())
}

fn parse_sizes(s: &str) -> Result<Vec<usize>> {
    if let Some((lo, hi)) = s.split_once("..") {
        let lo: usize = lo.trim().parse().context("bad range start in --sizes")?;
        let hi: usize = hi.trim().parse().context("bad range end in --sizes")?;
        if lo == 0 || hi < lo {
            bail!("--sizes range must be nonempty and positive");
        }
        return Ok((lo..=hi).collect());
    }
    let sizes: Vec<usize> = s
        .split(',')
        .map(|t| t.trim().parse().context("bad entry in --sizes"))
        .collect::<Result<_>>()?;
    if sizes.is_empty() || sizes.contains(&0) {
        bail!("--sizes must be nonempty and positive");
    }
    Ok(sizes)
}

fn parse_decays(s: &str) -> Result<Vec<f64>> {
    let decays: Vec<f64> = s
        .split(',')
        .map(|t| t.trim().parse().context("bad entry in --decays"))
        .collect::<Result<_>>()?;
    if decays.iter().any(|d| *d < 0.0) {
        bail!("--decays must be nonnegative");
    }
    Ok(decays)
}

fn load_training_data(
    data_path: &Path,
    schema_path: &Path,
) -> Result<(dataset::Schema, dataset::DesignMatrix)> {
    let schema_file = fs::File::open(schema_path)
        .with_context(|| format!("cannot open {}", schema_path.display()))?;
    let schema = dataset::Schema::from_json(schema_file)?;
    let data_file = fs::File::open(data_path)
        .with_context(|| format!("cannot open {}", data_path.display()))?;
    let records = dataset::load_csv(data_file, &schema)?;
    if records.is_empty() {
        bail!("{} contains no data rows", data_path.display());
    }
    let encoded = dataset::encode(&records, &schema)?;
    let scaled = dataset::center_scale(&encoded)?;
    Ok((schema, scaled))
}

fn cmd_train(args: TrainArgs) -> Result<()> {
    let (schema, dm) = load_training_data(&args.data, &args.schema)?;
    for w in &dm.warnings {
        eprintln!("warning: {w}");
    }
    let targets = dm
        .targets
        .clone()
        .context("training data must carry a target column")?;

    let train_seed = mix(args.seed, tag::TRAIN);
    let grid = Grid {
        sizes: parse_sizes(&args.sizes)?,
        decays: parse_decays(&args.decays)?,
        k: args.folds,
        seed: train_seed,
    };
    let cfg = TrainConfig {
        learning_rate: args.lr,
        max_iterations: args.max_iter,
        seed: train_seed,
        ..TrainConfig::default()
    };

    let report = grid_search(&dm.data, &targets, dataset::N_CLASSES, &grid, &cfg)?;

    println!("{:>5} {:>8} {:>12} {:>9}", "size", "decay", "cv_accuracy", "cv_kappa");
    for cell in &report.grid {
        println!(
            "{:>5} {:>8} {:>12.4} {:>9.4}",
            cell.size, cell.decay, cell.cv_accuracy, cell.cv_kappa
        );
    }
    println!(
        "best: size={} decay={} | train accuracy {:.4}, train kappa {:.4}",
        report.best.size, report.best.decay, report.train_accuracy, report.train_kappa
    );

    let labels: Vec<String> = dataset::CLASS_LABELS.iter().map(|s| s.to_string()).collect();
    let stats = PerturbStats::from_design(&dm)?;
    let model = ModelFile::new(&report.network, &dm.meta, &schema, &labels, args.seed, &cfg, stats);
    fs::write(&args.out, model.to_json())
        .with_context(|| format!("cannot write {}", args.out.display()))?;

    let report_path = sibling(&args.out, ".report.json");
    let report_json = serde_json::json!({
        "grid": report.grid.iter().map(|c| serde_json::json!({
            "size": c.size,
            "decay": c.decay,
            "cv_accuracy": c.cv_accuracy,
            "cv_kappa": c.cv_kappa,
            "pooled_kappa": c.pooled_kappa,
            "fold_accuracies": c.fold_accuracies,
            "degenerate_folds": c.degenerate_folds,
        })).collect::<Vec<_>>(),
        "best": {"size": report.best.size, "decay": report.best.decay},
        "train_confusion": report.train_confusion.counts,
        "train_accuracy": report.train_accuracy,
        "train_kappa": report.train_kappa,
    });
    fs::write(&report_path, serde_json::to_string_pretty(&report_json)?)?;

    // CV accuracy curve, one row per configuration
    let grid_csv_path = sibling(&args.out, ".grid.csv");
    let mut grid_csv = String::from("size,decay,cv_accuracy,cv_kappa\n");
    for c in &report.grid {
        grid_csv.push_str(&format!(
            "{},{},{},{}\n",
            c.size,
            c.decay,
            dataset::format_number(c.cv_accuracy),
            dataset::format_number(c.cv_kappa)
        ));
    }
    fs::write(&grid_csv_path, grid_csv)?;

    let manifest = RunManifest {
        command: "train".into(),
        config: serde_json::json!({
            "data": args.data.display().to_string(),
            "schema": args.schema.display().to_string(),
            "sizes": grid.sizes,
            "decays": grid.decays,
            "folds": grid.k,
            "lr": cfg.learning_rate,
            "max_iterations": cfg.max_iterations,
            "grad_tolerance": cfg.grad_tolerance,
            "init_range": cfg.init_range,
            "seed": args.seed,
            "train_seed": train_seed,
        }),
        inputs: indexmap::IndexMap::from([
            (args.data.display().to_string(), sha256_hex(&args.data)?),
            (args.schema.display().to_string(), sha256_hex(&args.schema)?),
        ]),
        seed: args.seed,
        artifacts: vec![
            args.out.display().to_string(),
            report_path.display().to_string(),
            grid_csv_path.display().to_string(),
        ],
    };
    write_manifest(&args.out, &manifest)?;
    Ok(())
}

fn load_model(path: &Path) -> Result<ModelFile> {
    let text =
        fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    Ok(ModelFile::from_json(&text)?)
}

fn cmd_evaluate(args: EvaluateArgs) -> Result<()> {
    let model = load_model(&args.model)?;
    let net = model.network()?;
    let meta = model.meta();

    let data_file = fs::File::open(&args.data)
        .with_context(|| format!("cannot open {}", args.data.display()))?;
    let records = dataset::load_csv(data_file, &model.schema)?;
    if records.is_empty() {
        bail!("{} contains no data rows", args.data.display());
    }
    let dm = dataset::apply_transform(&records, &meta)?;
    let observed = dm
        .targets
        .clone()
        .context("evaluation data must carry a target column")?;
    let preds = net.predict_batch(&dm.data)?;
    let predicted: Vec<usize> = preds.iter().map(|p| p.label).collect();

    let cm = confusion(&observed, &predicted, net.d_out)?;
    let acc = accuracy(&cm);
    let expected = expected_accuracy(&cm);
    let kap = kappa(&cm)?;

    let metrics = serde_json::json!({
        "confusion": cm.counts,
        "classes": model.class_labels,
        "n": cm.total(),
        "accuracy": acc,
        "expected_accuracy": expected,
        "kappa": kap,
    });
    fs::write(&args.out, serde_json::to_string_pretty(&metrics)?)
        .with_context(|| format!("cannot write {}", args.out.display()))?;
    println!(
        "n={} accuracy={:.4} expected={:.4} kappa={:.4}",
        cm.total(),
        acc,
        expected,
        kap
    );

    let manifest = RunManifest {
        command: "evaluate".into(),
        config: serde_json::json!({
            "model": args.model.display().to_string(),
            "data": args.data.display().to_string(),
        }),
        inputs: indexmap::IndexMap::from([
            (args.model.display().to_string(), sha256_hex(&args.model)?),
            (args.data.display().to_string(), sha256_hex(&args.data)?),
        ]),
        seed: model.seed,
        artifacts: vec![args.out.display().to_string()],
    };
    write_manifest(&args.out, &manifest)?;
    Ok(())
}

fn cmd_importance(args: ImportanceArgs) -> Result<()> {
    let model = load_model(&args.model)?;
    let net = model.network()?;
    let names = model.meta().column_names();
    let table = garson(&net, &names)?;

    let json = serde_json::json!({
        "entries": table.entries.iter().map(|(name, q)| {
            serde_json::json!({"name": name, "importance": q})
        }).collect::<Vec<_>>(),
    });
    fs::write(&args.out, serde_json::to_string_pretty(&json)?)
        .with_context(|| format!("cannot write {}", args.out.display()))?;

    let width = table.entries.iter().map(|(n, _)| n.len()).max().unwrap_or(0);
    for (name, q) in &table.entries {
        println!("{name:<width$}  {q:.4}");
    }

    let manifest = RunManifest {
        command: "importance".into(),
        config: serde_json::json!({"model": args.model.display().to_string()}),
        inputs: indexmap::IndexMap::from([(
            args.model.display().to_string(),
            sha256_hex(&args.model)?,
        )]),
        seed: model.seed,
        artifacts: vec![args.out.display().to_string()],
    };
    write_manifest(&args.out, &manifest)?;
    Ok(())
}

/// Per-case output: either an explanation or an error entry.
#[derive(Debug, Serialize)]
#[serde(untagged)]
enum ExplainEntry {
    Ok(crate::explain::Explanation),
    Err { case: String, error: String },
}

fn cmd_explain(args: ExplainArgs) -> Result<()> {
    let model = load_model(&args.model)?;
    let net = model.network()?;
    let meta = model.meta();

    let cases_file = fs::File::open(&args.cases)
        .with_context(|| format!("cannot open {}", args.cases.display()))?;
    let records = dataset::load_csv(cases_file, &model.schema)?;
    if records.is_empty() {
        bail!("{} contains no cases", args.cases.display());
    }

    // training-data statistics travel with the model file
    let stats = model.perturb.clone();

    let explain_seed = mix(args.seed, tag::EXPLAIN);
    let mut entries = Vec::with_capacity(records.len());
    let mut ok = Vec::new();
    let mut failures = 0usize;
    for (i, record) in records.iter().enumerate() {
        let case_id = (i + 1).to_string();
        let cfg = LimeConfig {
            n_samples: args.n_samples,
            kernel_width: args.kernel_width,
            n_features: args.n_features,
            ridge_lambda: args.ridge,
            seed: mix(explain_seed, i as u64),
        };
        match explain_case(&net, record, &meta, &stats, &model.class_labels, &cfg, &case_id) {
            Ok(e) => {
                ok.push(e.clone());
                entries.push(ExplainEntry::Ok(e));
            }
            Err(e) => {
                failures += 1;
                entries.push(ExplainEntry::Err {
                    case: case_id,
                    error: e.to_string(),
                });
            }
        }
    }
    if failures == records.len() {
        bail!("all {} cases failed to explain", failures);
    }

    fs::write(&args.out, serde_json::to_string_pretty(&entries)?)
        .with_context(|| format!("cannot write {}", args.out.display()))?;

    let (plot, plot_path) = match args.format {
        OutputFormat::Svg => (feature_plot_svg(&ok), sibling(&args.out, ".plot.svg")),
        _ => (feature_plot_text(&ok), sibling(&args.out, ".plot.txt")),
    };
    fs::write(&plot_path, &plot)?;
    if args.format != OutputFormat::Svg {
        print!("{plot}");
    }

    let manifest = RunManifest {
        command: "explain".into(),
        config: serde_json::json!({
            "model": args.model.display().to_string(),
            "cases": args.cases.display().to_string(),
            "n_samples": args.n_samples,
            "kernel_width": args.kernel_width,
            "n_features": args.n_features,
            "ridge": args.ridge,
            "seed": args.seed,
            "explain_seed": explain_seed,
            "format": format!("{:?}", args.format).to_lowercase(),
        }),
        inputs: indexmap::IndexMap::from([
            (args.model.display().to_string(), sha256_hex(&args.model)?),
            (args.cases.display().to_string(), sha256_hex(&args.cases)?),
        ]),
        seed: args.seed,
        artifacts: vec![
            args.out.display().to_string(),
            plot_path.display().to_string(),
        ],
    };
    write_manifest(&args.out, &manifest)?;
    Ok(())
}

#[derive(Debug, Deserialize)]
struct DemandEntryInput {
    a: f64,
    #[serde(alias = "R")]
    r: f64,
    #[serde(default = "one")]
    mu: f64,
    #[serde(default = "one")]
    gamma: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Default, Deserialize)]
struct DemandCoefficientsInput {
    delta: Option<f64>,
    #[serde(alias = "L")]
    l: Option<f64>,
    beta: Option<f64>,
}

/// Coefficients may sit under a "coefficients" object or at the top level;
/// the nested form wins field-by-field. Missing coefficients default to 1.
#[derive(Debug, Deserialize)]
struct DemandInput {
    entries: Vec<DemandEntryInput>,
    #[serde(default)]
    coefficients: Option<DemandCoefficientsInput>,
    #[serde(flatten)]
    top_level: DemandCoefficientsInput,
}

impl DemandInput {
    fn coefficients(&self) -> DemandCoefficients {
        let nested = self.coefficients.as_ref();
        let pick = |f: fn(&DemandCoefficientsInput) -> Option<f64>| {
            nested.and_then(f).or(f(&self.top_level)).unwrap_or(1.0)
        };
        DemandCoefficients {
            delta: pick(|c| c.delta),
            l: pick(|c| c.l),
            beta: pick(|c| c.beta),
        }
    }
}

fn cmd_demand(args: DemandArgs) -> Result<()> {
    let text = fs::read_to_string(&args.input)
        .with_context(|| format!("cannot read {}", args.input.display()))?;
    let input: DemandInput =
        serde_json::from_str(&text).context("invalid demand input document")?;

    let demand = match args.model {
        DemandModel::Static => {
            let entries: Vec<(f64, f64)> = input.entries.iter().map(|e| (e.a, e.r)).collect();
            demand_static(&entries)?
        }
        DemandModel::Extended => {
            let entries: Vec<LandUseEntry> = input
                .entries
                .iter()
                .map(|e| LandUseEntry {
                    a: e.a,
                    r: e.r,
                    mu: e.mu,
                    gamma: e.gamma,
                })
                .collect();
            demand_extended(&entries, &input.coefficients())?
        }
    };

    let json = serde_json::json!({ "demand": demand });
    fs::write(&args.out, serde_json::to_string_pretty(&json)?)
        .with_context(|| format!("cannot write {}", args.out.display()))?;
    println!("demand = {demand}");

    let manifest = RunManifest {
        command: "demand".into(),
        config: serde_json::json!({
            "input": args.input.display().to_string(),
            "model": format!("{:?}", args.model).to_lowercase(),
        }),
        inputs: indexmap::IndexMap::from([(
            args.input.display().to_string(),
            sha256_hex(&args.input)?,
        )]),
        seed: 0,
        artifacts: vec![args.out.display().to_string()],
    };
    write_manifest(&args.out, &manifest)?;
    Ok(())
}
