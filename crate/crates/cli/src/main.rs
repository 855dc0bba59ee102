use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use bttda::eval::io::{load_dataset, load_model, save_dataset, save_model};
use bttda::eval::{
    generate_synthetic, run_evaluation, tune_hyperparameters, write_metrics_csv,
    write_tuning_csv, EvalSettings, RunTags, SyntheticConfig, TuningGrid,
};
use bttda::{Decoder, FitOptions, InitStrategy, LdaShrinkage};

/// Block-term tensor discriminant analysis for labeled multiway data.
#[derive(Parser)]
#[command(name = "bttda", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic dataset with planted rank-1 class effects.
    Synth(SynthArgs),
    /// Fit a decoder and write the model file.
    Fit(FitArgs),
    /// Score samples with a fitted model.
    Predict(PredictArgs),
    /// Nested cross-validation; writes one metrics row per fold and metric.
    Evaluate(EvaluateArgs),
    /// Inner-loop tuning only; writes the score of every candidate.
    Gridsearch(GridArgs),
}

#[derive(Args)]
struct SynthArgs {
    /// Tensor dimensions, e.g. `8,16`.
    #[arg(long, value_delimiter = ',', required = true)]
    dims: Vec<usize>,
    #[arg(long, default_value_t = 100)]
    per_class: usize,
    #[arg(long, default_value_t = 2)]
    classes: usize,
    /// Amplitude of each planted effect; empty for pure noise.
    #[arg(long, value_delimiter = ',')]
    effects: Vec<f64>,
    #[arg(long, default_value_t = 1.0)]
    sigma: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct FitArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    theta: f64,
    #[arg(long, default_value_t = 1)]
    blocks: usize,
    /// Seed for random orthonormal initialization; omit for partial HOSVD.
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    fit: FitFlags,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// Output CSV; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GridFlags {
    /// Candidate thetas; defaults to 0, 0.1, .., 1.
    #[arg(long, value_delimiter = ',')]
    theta: Vec<f64>,
    /// Largest block count tried.
    #[arg(long, default_value_t = 16)]
    blocks: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct FitFlags {
    #[arg(long, default_value_t = 128)]
    max_iterations: usize,
    #[arg(long, default_value_t = 1e-6)]
    tolerance: f64,
    /// Fixed LDA shrinkage in [0, 1]; Ledoit-Wolf when omitted.
    #[arg(long)]
    lda_shrinkage: Option<f64>,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    data: PathBuf,
    #[command(flatten)]
    grid: GridFlags,
    /// Outer folds.
    #[arg(long, default_value_t = 5)]
    folds: usize,
    #[arg(long, default_value_t = 5)]
    inner_folds: usize,
    #[command(flatten)]
    fit: FitFlags,
    #[arg(long, default_value = "synthetic")]
    dataset: String,
    #[arg(long, default_value = "")]
    subject: String,
    #[arg(long, default_value = "")]
    session: String,
    /// Output CSV; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GridArgs {
    #[arg(long)]
    data: PathBuf,
    #[command(flatten)]
    grid: GridFlags,
    /// Inner folds.
    #[arg(long, default_value_t = 5)]
    folds: usize,
    #[command(flatten)]
    fit: FitFlags,
    #[arg(long)]
    out: Option<PathBuf>,
}

impl FitFlags {
    fn options(&self) -> FitOptions {
        FitOptions {
            max_iterations: self.max_iterations,
            tolerance: self.tolerance,
            ..FitOptions::default()
        }
    }

    fn lda(&self) -> LdaShrinkage {
        self.lda_shrinkage.map_or(LdaShrinkage::Auto, LdaShrinkage::Fixed)
    }
}

impl GridFlags {
    fn grid(&self) -> TuningGrid {
        let mut grid = TuningGrid::default();
        if !self.theta.is_empty() {
            grid.thetas = self.theta.clone();
        }
        grid.max_blocks = self.blocks;
        grid
    }
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(io::stdout().lock()),
    })
}

fn synth(a: SynthArgs) -> Result<()> {
    let cfg = SyntheticConfig::planted(&a.dims, a.per_class, a.classes, &a.effects, a.sigma, a.seed)?;
    let data = generate_synthetic(&cfg)?;
    save_dataset(&data, &a.out).with_context(|| format!("writing {}", a.out.display()))?;
    eprintln!("wrote {} samples of dims {:?} to {}", data.len(), data.dims(), a.out.display());
    Ok(())
}

fn fit(a: FitArgs) -> Result<()> {
    let data = load_dataset(&a.data).with_context(|| format!("reading {}", a.data.display()))?;
    let mut opts = a.fit.options();
    if let Some(seed) = a.seed {
        opts.init = InitStrategy::RandomOrthonormal { seed };
    }
    let decoder = Decoder::fit(&data, a.blocks, a.theta, &opts, a.fit.lda())?;
    if decoder.extractor.truncated {
        eprintln!(
            "warning: residual exhausted, fitted {} of {} blocks",
            decoder.extractor.blocks.len(),
            a.blocks
        );
    }
    save_model(&decoder, &a.out).with_context(|| format!("writing {}", a.out.display()))?;
    eprintln!(
        "fitted {} blocks, {} features; model written to {}",
        decoder.extractor.blocks.len(),
        decoder.extractor.feature_len(),
        a.out.display()
    );
    Ok(())
}

fn predict(a: PredictArgs) -> Result<()> {
    let decoder = load_model(&a.model).with_context(|| format!("reading {}", a.model.display()))?;
    let data = load_dataset(&a.data).with_context(|| format!("reading {}", a.data.display()))?;
    let scores = decoder.scores(data.samples())?;
    let mut w = output(a.out.as_deref())?;
    let header: Vec<String> = ["index".to_string(), "label".into(), "predicted".into()]
        .into_iter()
        .chain((0..decoder.classes).map(|c| format!("score_{c}")))
        .collect();
    writeln!(w, "{}", header.join(","))?;
    for (i, row) in scores.row_iter().enumerate() {
        let predicted = row.iter().enumerate().fold(0, |b, (c, &v)| if v > row[b] { c } else { b });
        let values: Vec<String> = row.iter().map(f64::to_string).collect();
        writeln!(w, "{i},{},{predicted},{}", data.labels()[i], values.join(","))?;
    }
    w.flush()?;
    Ok(())
}

fn evaluate(a: EvaluateArgs) -> Result<()> {
    let data = load_dataset(&a.data).with_context(|| format!("reading {}", a.data.display()))?;
    let settings = EvalSettings {
        grid: a.grid.grid(),
        outer_folds: a.folds,
        inner_folds: a.inner_folds,
        seed: a.grid.seed,
        fit: a.fit.options(),
        lda: a.fit.lda(),
    };
    let tags = RunTags {
        dataset: a.dataset,
        subject: a.subject,
        session: a.session,
    };
    let records = run_evaluation(&data, &settings, &tags)?;
    write_metrics_csv(&records, output(a.out.as_deref())?)?;
    Ok(())
}

fn gridsearch(a: GridArgs) -> Result<()> {
    let data = load_dataset(&a.data).with_context(|| format!("reading {}", a.data.display()))?;
    let settings = EvalSettings {
        grid: a.grid.grid(),
        inner_folds: a.folds,
        seed: a.grid.seed,
        fit: a.fit.options(),
        lda: a.fit.lda(),
        ..EvalSettings::default()
    };
    let report = tune_hyperparameters(&data, &settings, 0)?;
    if report.candidates.is_empty() && settings.grid.thetas.len() * settings.grid.max_blocks > 1 {
        bail!("no candidate could be scored");
    }
    write_tuning_csv(&report, output(a.out.as_deref())?)?;
    eprintln!("selected theta {} with {} blocks", report.theta, report.blocks);
    Ok(())
}

fn main() -> Result<()> {
    let run = match Cli::parse().command {
        Command::Synth(a) => synth(a),
        Command::Fit(a) => fit(a),
        Command::Predict(a) => predict(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Gridsearch(a) => gridsearch(a),
    };
    // a closed downstream pipe (`| head`) is not a failure
    match run {
        Err(e)
            if e.chain().any(|c| {
                c.downcast_ref::<io::Error>().is_some_and(|e| e.kind() == io::ErrorKind::BrokenPipe)
            }) =>
        {
            Ok(())
        }
        other => other,
    }
}
