//! Command-line front end: `train`, `predict`, `eval` and `dump-features`.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical error.
//! Reports and predictions go to stdout, diagnostics to stderr.

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::error::{Error, Result};
use crate::imageio::parse_views;
use crate::pipeline::{self, PipelineConfig, DEFAULT_RESOLUTION, DEFAULT_SEED};
use crate::{pca, svm};

#[derive(Debug, Parser)]
#[command(
    name = "mvdr",
    version,
    about = "Multi-view convolutional features + PCA + linear SVM image classifier"
)]
struct Cli {
    /// Worker threads for feature extraction and training (results do not depend on it).
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train a model on a dataset root.
    Train(TrainArgs),
    /// Classify one image.
    Predict(PredictArgs),
    /// Evaluate a model on a labelled dataset root.
    Eval(EvalArgs),
    /// Write the spliced feature matrix of a dataset as CSV.
    DumpFeatures(DumpArgs),
}

#[derive(Debug, Args)]
struct FeatureArgs {
    /// Dataset root containing classes.txt and one directory per class.
    #[arg(long, value_name = "DIR")]
    data: PathBuf,

    /// Comma-separated views out of r, g, b, gray, depth.
    #[arg(long, default_value = "r,g,b,gray")]
    views: String,

    /// Square working resolution in pixels.
    #[arg(long, default_value_t = DEFAULT_RESOLUTION)]
    resolution: usize,

    /// Seed for the convolution weights.
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[command(flatten)]
    features: FeatureArgs,

    #[arg(long, value_name = "PATH")]
    model_out: PathBuf,

    /// Retained-variance fraction for PCA.
    #[arg(long, default_value_t = pca::DEFAULT_THRESHOLD)]
    pca_threshold: f64,

    /// Soft-margin penalty.
    #[arg(long, default_value_t = svm::DEFAULT_C)]
    svm_c: f64,

    /// Also write the training feature matrix as CSV.
    #[arg(long, value_name = "PATH")]
    dump_features: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct PredictArgs {
    #[arg(long, value_name = "PATH")]
    model: PathBuf,

    #[arg(long, value_name = "FILE")]
    image: PathBuf,

    #[arg(long, value_name = "FILE")]
    depth: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long, value_name = "PATH")]
    model: PathBuf,

    #[arg(long, value_name = "DIR")]
    data: PathBuf,

    #[arg(long, value_name = "PATH")]
    report_json: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct DumpArgs {
    #[command(flatten)]
    features: FeatureArgs,

    #[arg(long, value_name = "CSV")]
    out: PathBuf,
}

impl FeatureArgs {
    fn config(&self) -> Result<PipelineConfig> {
        let views =
            parse_views(&self.views).map_err(|e| Error::Argument(format!("--views: {e}")))?;
        Ok(PipelineConfig {
            resolution: self.resolution,
            views,
            seed: self.seed,
            ..PipelineConfig::default()
        })
    }
}

/// Attaches the file a failure concerns when the error itself lacks it.
fn with_path(path: &Path) -> impl Fn(Error) -> Error + '_ {
    move |e| match e {
        Error::Version { .. } | Error::Integrity(_) => {
            Error::Data(format!("{}: {e}", path.display()))
        }
        other => other,
    }
}

fn write_csv(path: &Path, x: &crate::fusion::FeatureMatrix) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    x.write_csv(&mut out)
        .and_then(|_| out.flush())
        .map_err(|e| Error::io(path, e))
}

fn dispatch(
    command: Command,
    stdout: &mut (dyn Write + Send),
    stderr: &mut (dyn Write + Send),
) -> Result<()> {
    match command {
        Command::Train(args) => {
            let mut config = args.features.config()?;
            config.pca_threshold = args.pca_threshold;
            config.svm_c = args.svm_c;
            if !(config.pca_threshold > 0.0 && config.pca_threshold <= 1.0) {
                return Err(Error::Argument(format!(
                    "--pca-threshold {} must lie in (0, 1]",
                    config.pca_threshold
                )));
            }
            if !(config.svm_c > 0.0 && config.svm_c.is_finite()) {
                return Err(Error::Argument(format!(
                    "--svm-c {} must be positive",
                    config.svm_c
                )));
            }
            let (config, net, x) = pipeline::extract(&args.features.data, &config)?;
            if let Some(path) = &args.dump_features {
                write_csv(path, &x)?;
            }
            let model = pipeline::train_on_features(config, net, &x)?;
            pipeline::save_model(&args.model_out, &model)?;
            let _ = writeln!(
                stderr,
                "trained on {} samples: n = {}, w = {}; model written to {}",
                x.rows(),
                x.cols(),
                model.pca.retained,
                args.model_out.display()
            );
        }
        Command::Predict(args) => {
            let model = pipeline::load_model(&args.model).map_err(with_path(&args.model))?;
            let p = pipeline::predict_file(&model, &args.image, args.depth.as_deref())?;
            let mut text = format!("class: {}\n", p.class_name);
            for (name, d) in model.svm.classes.iter().zip(&p.decisions) {
                text.push_str(&format!("{name} {d}\n"));
            }
            stdout
                .write_all(text.as_bytes())
                .map_err(|e| Error::io("<stdout>", e))?;
        }
        Command::Eval(args) => {
            let model = pipeline::load_model(&args.model).map_err(with_path(&args.model))?;
            let report = pipeline::evaluate(&model, &args.data)?;
            if let Some(path) = &args.report_json {
                std::fs::write(path, report.to_json()).map_err(|e| Error::io(path, e))?;
            }
            stdout
                .write_all(report.to_text().as_bytes())
                .map_err(|e| Error::io("<stdout>", e))?;
        }
        Command::DumpFeatures(args) => {
            let config = args.features.config()?;
            let (_, _, x) = pipeline::extract(&args.features.data, &config)?;
            write_csv(&args.out, &x)?;
            let _ = writeln!(
                stderr,
                "wrote {}x{} feature matrix to {}",
                x.rows(),
                x.cols(),
                args.out.display()
            );
        }
    }
    Ok(())
}

/// Parses `argv` (including the program name) and runs the subcommand.
pub fn run<I, T>(argv: I, stdout: &mut (dyn Write + Send), stderr: &mut (dyn Write + Send)) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let text = e.render().to_string();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = stdout.write_all(text.as_bytes());
                    0
                }
                _ => {
                    let _ = stderr.write_all(text.as_bytes());
                    1
                }
            };
        }
    };

    let result = match cli.threads {
        Some(0) => Err(Error::Argument("--threads must be at least 1".into())),
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(|| dispatch(cli.command, stdout, stderr)),
            Err(e) => Err(Error::Argument(format!("--threads {n}: {e}"))),
        },
        None => dispatch(cli.command, stdout, stderr),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            e.exit_code()
        }
    }
}
