use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use augboost::augment::AugmenterKind;
use augboost::boost;
use augboost::config::RunConfig;
use augboost::dataset::{synthesize, FingerprintDataset};
use augboost::error::{Error, Result};
use augboost::eval;
use augboost::grid::GridMap;

#[derive(Parser)]
#[command(
    name = "augboost",
    version,
    about = "Gradient boosting with periodic neural feature augmentation \
             for grid-cell indoor positioning"
)]
struct Cli {
    /// JSON run configuration; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Root seed; overrides every seed in the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a synthetic fingerprint CSV from the path-loss model.
    Synth {
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a model on a fingerprint CSV and write it as JSON.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Predict cell labels and coordinates for a fingerprint CSV.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Output CSV; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Repeated-holdout evaluation; prints location error as "mean ± std m".
    Eval {
        #[arg(long)]
        data: PathBuf,
        /// Output directory for summary.json and repetitions.csv.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare ANN, random-projection, and identity augmenters on
    /// identical splits.
    Compare {
        #[arg(long)]
        data: PathBuf,
        /// Output directory for compare.csv.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Held-out learning curve, one CSV row per boosting iteration.
    Curve {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind::*;
            let code = match e.kind() {
                DisplayHelp | DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.override_seed(seed);
    }
    match cli.cmd {
        Cmd::Synth { out } => cmd_synth(&cfg, &out, cli.verbose),
        Cmd::Train { data, out } => cmd_train(&cfg, &data, &out, cli.verbose),
        Cmd::Predict { model, data, out } => {
            cmd_predict(&cfg, &model, &data, out.as_deref())
        }
        Cmd::Eval { data, out } => cmd_eval(&cfg, &data, out.as_deref(), cli.verbose),
        Cmd::Compare { data, out } => {
            cmd_compare(&cfg, &data, out.as_deref(), cli.verbose)
        }
        Cmd::Curve { data, out } => cmd_curve(&cfg, &data, &out),
    }
}

fn load_data(cfg: &RunConfig, path: &Path) -> Result<(GridMap, FingerprintDataset<f64>)> {
    let grid = cfg.grid_map()?;
    let ds = FingerprintDataset::<f64>::load_csv(path, &grid)?;
    let ds = ds.impute_missing(cfg.impute_floor)?;
    Ok((grid, ds))
}

fn cmd_synth(cfg: &RunConfig, out: &Path, verbose: bool) -> Result<()> {
    let grid = cfg.grid_map()?;
    let beacons = cfg.beacon_positions(&grid);
    let trajectory = cfg.trajectory_cells(&grid)?;
    let ds: FingerprintDataset<f64> = synthesize(&grid, &beacons, &cfg.path_loss, &trajectory)?;
    ds.save_csv(out)?;
    if verbose {
        println!(
            "wrote {} samples x {} beacons over {} cells to {}",
            ds.n_samples(),
            ds.n_beacons(),
            ds.distinct_labels().len(),
            out.display()
        );
    }
    Ok(())
}

fn cmd_train(cfg: &RunConfig, data: &Path, out: &Path, verbose: bool) -> Result<()> {
    let (_, ds) = load_data(cfg, data)?;
    let model = boost::fit(&ds, &cfg.boost)?;
    std::fs::write(out, model.to_json())?;
    if verbose {
        for (i, loss) in model.training_loss.iter().enumerate() {
            println!("stage {:3}  train-loss {loss:.6}", i + 1);
        }
    }
    println!(
        "trained {} stages on {} samples, model at {}",
        model.stages.len(),
        ds.n_samples(),
        out.display()
    );
    Ok(())
}

fn csv_has_rows(path: &Path) -> Result<bool> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Data(format!("cannot read {}: {e}", path.display())))?;
    Ok(text.lines().skip(1).any(|l| !l.trim().is_empty()))
}

fn cmd_predict(
    cfg: &RunConfig,
    model_path: &Path,
    data: &Path,
    out: Option<&Path>,
) -> Result<()> {
    let mut body = String::from("predicted_label,x,y\n");
    // a header-only input yields a header-only output
    if csv_has_rows(data)? {
        let model_text = std::fs::read_to_string(model_path)
            .map_err(|e| Error::Data(format!("cannot read {}: {e}", model_path.display())))?;
        let model = boost::BoostModel::<f64>::from_json(&model_text)?;
        let (grid, ds) = load_data(cfg, data)?;
        let labels = model.predict_label(&ds.rssi)?;
        for label in &labels {
            let (x, y) = grid.cell_center(label)?;
            body.push_str(&format!("{label},{x},{y}\n"));
        }
    }
    match out {
        Some(path) => std::fs::write(path, body)?,
        None => print!("{body}"),
    }
    Ok(())
}

fn write_report_files(dir: &Path, report: &eval::EvalReport) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let json = serde_json::to_string_pretty(report).expect("report serializes");
    std::fs::write(dir.join("summary.json"), json)?;
    let mut csv = std::io::BufWriter::new(std::fs::File::create(dir.join("repetitions.csv"))?);
    writeln!(csv, "repetition,mean_error_m")?;
    for (i, err) in report.per_rep_errors.iter().enumerate() {
        writeln!(csv, "{},{err}", i + 1)?;
    }
    Ok(())
}

fn cmd_eval(cfg: &RunConfig, data: &Path, out: Option<&Path>, verbose: bool) -> Result<()> {
    let (grid, ds) = load_data(cfg, data)?;
    let report = eval::evaluate(&ds, &grid, &cfg.boost, &cfg.split)?;
    println!("{:.2} ± {:.2} m", report.mean, report.std);
    if verbose {
        for (t, p, c) in &report.top_confusions {
            println!("confused {t} -> {p} ({c}x)");
        }
    }
    if let Some(dir) = out {
        write_report_files(dir, &report)?;
    }
    Ok(())
}

fn cmd_compare(cfg: &RunConfig, data: &Path, out: Option<&Path>, verbose: bool) -> Result<()> {
    let (grid, ds) = load_data(cfg, data)?;
    let variants: Vec<(String, boost::BoostConfig)> = [
        ("ann", AugmenterKind::Ann),
        ("random-projection", AugmenterKind::RandomProjection),
        ("identity", AugmenterKind::Identity),
    ]
    .into_iter()
    .map(|(name, kind)| {
        let mut c = cfg.boost.clone();
        c.augmenter = kind;
        (name.to_string(), c)
    })
    .collect();
    let rows = eval::compare(&ds, &grid, &variants, &cfg.split)?;
    for row in &rows {
        println!(
            "{:18} {:.2} ± {:.2} m",
            row.name, row.report.mean, row.report.std
        );
    }
    if let Some(dir) = out {
        std::fs::create_dir_all(dir)?;
        let mut csv = std::io::BufWriter::new(std::fs::File::create(dir.join("compare.csv"))?);
        writeln!(csv, "name,mean_error_m,std_error_m")?;
        for row in &rows {
            writeln!(csv, "{},{},{}", row.name, row.report.mean, row.report.std)?;
        }
    }
    if verbose {
        println!("split hash {:016x}", rows[0].report.split_hash);
    }
    Ok(())
}

fn cmd_curve(cfg: &RunConfig, data: &Path, out: &Path) -> Result<()> {
    let (_, ds) = load_data(cfg, data)?;
    let curve = eval::learning_curve(&ds, &cfg.boost, &cfg.split)?;
    let mut csv = std::io::BufWriter::new(std::fs::File::create(out)?);
    writeln!(csv, "iteration,mean_log10_loss,std_log10_loss")?;
    for i in 0..curve.mean_logloss.len() {
        writeln!(
            csv,
            "{},{},{}",
            i + 1,
            curve.mean_logloss[i],
            curve.std_logloss[i]
        )?;
    }
    Ok(())
}

// keep the derive in sync with clap's debug assertions
#[test]
fn cli_asserts() {
    use clap::CommandFactory;
    Cli::command().debug_assert();
}
