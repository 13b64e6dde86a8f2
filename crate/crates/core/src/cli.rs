//! Command-line front end.

use std::collections::HashSet;
use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::error::{Error, Result};
use crate::evaluation::{evaluate_report, predict_labels, DEFAULT_THRESHOLD, DEFAULT_VOXEL_SIZE};
use crate::gcnn::build_hierarchy;
use crate::io_util::write_atomic;
use crate::slt::{fmt_f64, parse_streamline_file, write_streamline_file};
use crate::streamline::{fit_normalization, Streamline, StreamlineSet};
use crate::synthetic::{generate_synthetic_dataset, SyntheticSpec};
use crate::train::{
    assemble_binary_dataset, deserialize_model, label_all, serialize_model, split_streamlines,
    train_with_progress, NeighborRule, TrainConfig,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "fibergcn",
    version,
    about = "Streamline bundle detection with spectral graph CNNs",
    arg_required_else_help = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a labeled synthetic streamline set from a spec file.
    Generate {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Train a one-vs-rest detector for one bundle.
    Train(TrainArgs),
    /// Write `id probability label` for every streamline.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
        threshold: f64,
    },
    /// Score detectors against labeled test sets (one file per subject).
    Evaluate {
        #[arg(long, num_args = 1.., required = true)]
        models: Vec<PathBuf>,
        #[arg(long, num_args = 1.., required = true)]
        data: Vec<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_VOXEL_SIZE)]
        voxel_size: f64,
        #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
        threshold: f64,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum NeighborArg {
    /// Bounding-box intersection.
    Bbox,
    None,
}

#[derive(Debug, Args)]
struct TrainArgs {
    /// Training SLT files; several files are merged with fresh ids.
    #[arg(long, num_args = 1.., required = true)]
    data: Vec<PathBuf>,
    #[arg(long)]
    bundle: String,
    /// Streamline-level validation split, ignored with --val-files.
    #[arg(long, default_value_t = 0.1)]
    val_fraction: f64,
    /// Separate validation SLT files instead of a split.
    #[arg(long, num_args = 1..)]
    val_files: Vec<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    #[arg(long, default_value_t = 1e-4)]
    l2: f64,
    #[arg(long, default_value_t = 64)]
    batch_size: usize,
    #[arg(long, default_value_t = 200)]
    epochs: usize,
    #[arg(long, default_value_t = 10)]
    patience: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Disable reversed-copy augmentation.
    #[arg(long)]
    no_reverse: bool,
    #[arg(long, value_enum, default_value_t = NeighborArg::Bbox)]
    neighbors: NeighborArg,
    /// Suppress per-epoch logs.
    #[arg(long)]
    quiet: bool,
}

/// Parses `args` (without the program name), runs the subcommand and
/// returns the process exit code. Diagnostics go to stderr.
pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv = std::iter::once(OsString::from("fibergcn")).chain(args.into_iter().map(Into::into));
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_USAGE,
            };
            let _ = e.print();
            return code;
        }
    };
    match run(cli.command) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("fibergcn: error: {e}");
            match e {
                Error::InvalidArgument(_) => EXIT_USAGE,
                _ => EXIT_DATA,
            }
        }
    }
}

fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::Generate { spec, out, seed } => {
            let spec = SyntheticSpec::read(&spec, seed)?;
            let set = generate_synthetic_dataset(&spec)?;
            write_streamline_file(&set, &out)
        }
        Command::Train(args) => run_train(args),
        Command::Predict {
            model,
            data,
            out,
            threshold,
        } => {
            let model = deserialize_model(&model)?;
            let set = parse_streamline_file(&data)?;
            let preds = predict_labels(&model, &set, threshold)?;
            for id in &preds.skipped {
                eprintln!("fibergcn: warning: skipped zero-length streamline {id}");
            }
            let mut text = String::new();
            for p in &preds.entries {
                writeln!(text, "{} {} {}", p.id, fmt_f64(p.probability), p.label).unwrap();
            }
            write_atomic(&out, text.as_bytes())
        }
        Command::Evaluate {
            models,
            data,
            voxel_size,
            threshold,
            out,
        } => {
            let models = models.iter().map(|p| deserialize_model(p)).collect::<Result<Vec<_>>>()?;
            let mut seen = HashSet::new();
            let mut subjects = Vec::new();
            for p in &data {
                let name = subject_name(p);
                if !seen.insert(name.clone()) {
                    return Err(Error::InvalidArgument(format!("duplicate subject name `{name}`")));
                }
                subjects.push((name, parse_streamline_file(p)?));
            }
            let report = evaluate_report(&models, &subjects, voxel_size, threshold)?;
            for r in &report.results {
                for id in &r.skipped {
                    eprintln!("fibergcn: warning: {} / {}: skipped zero-length streamline {id}", r.bundle, r.subject);
                }
            }
            write_atomic(&out, report.to_text().as_bytes())
        }
    }
}

/// File stem with whitespace replaced, used as the report's subject column.
fn subject_name(path: &Path) -> String {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let name: String = stem.chars().map(|c| if c.is_whitespace() { '_' } else { c }).collect();
    if name.is_empty() {
        "subject".into()
    } else {
        name
    }
}

/// Reads one or more SLT files; several are merged with ids renumbered from 0.
fn read_sets(paths: &[PathBuf]) -> Result<StreamlineSet> {
    if paths.len() == 1 {
        return parse_streamline_file(&paths[0]);
    }
    let mut streamlines = Vec::new();
    let mut sources = Vec::new();
    for p in paths {
        let set = parse_streamline_file(p)?;
        sources.push(set.source);
        streamlines.extend(set.streamlines);
    }
    let streamlines: Vec<Streamline> = streamlines
        .into_iter()
        .enumerate()
        .map(|(i, s)| Streamline { id: i as u64, ..s })
        .collect();
    StreamlineSet::new(streamlines, sources.join(" + "))
}

fn run_train(a: TrainArgs) -> Result<()> {
    let config = TrainConfig {
        learning_rate: a.lr,
        l2: a.l2,
        batch_size: a.batch_size,
        max_epochs: a.epochs,
        patience: a.patience,
        seed: a.seed,
        reverse_augment: !a.no_reverse,
        ..TrainConfig::default()
    };
    config.validate()?;
    let rule = match a.neighbors {
        NeighborArg::Bbox => NeighborRule::BoundingBoxOverlap,
        NeighborArg::None => NeighborRule::Disabled,
    };

    let all = read_sets(&a.data)?;
    let (train_set, val_set) = if a.val_files.is_empty() {
        split_streamlines(&all, a.val_fraction, a.seed)?
    } else {
        (all, read_sets(&a.val_files)?)
    };
    if val_set.is_empty() {
        return Err(Error::InvalidArgument("validation set is empty".into()));
    }

    let normalization = fit_normalization(&[&train_set])?;
    let hierarchy = build_hierarchy(&config.arch)?;
    let dataset = assemble_binary_dataset(&train_set, &a.bundle, rule, a.seed, &normalization, &hierarchy)?;
    let validation = label_all(&val_set, &a.bundle, &normalization, &hierarchy)?;
    let (neg, pos) = dataset.class_counts();
    if !a.quiet {
        eprintln!(
            "bundle {}: {pos} positives, {neg} negatives, {} validation streamlines",
            a.bundle,
            validation.len()
        );
    }
    let quiet = a.quiet;
    let (model, report) = train_with_progress(&dataset, &validation, &config, hierarchy, |e| {
        if !quiet {
            eprintln!(
                "epoch {} train_loss {:.6} val_loss {:.6} val_accuracy {:.4}",
                e.epoch, e.train_loss, e.val_loss, e.val_accuracy
            );
        }
    })?;
    if !quiet {
        eprintln!("stopped after epoch {}, kept epoch {}", report.stopped_epoch, report.best_epoch);
    }
    serialize_model(&model, &a.out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn usage_errors() {
        assert_eq!(run_cli(Vec::<String>::new()), EXIT_USAGE);
        assert_eq!(run_cli(["frobnicate"]), EXIT_USAGE);
        assert_eq!(run_cli(["predict", "--model", "m.gcm"]), EXIT_USAGE);
        assert_eq!(run_cli(["generate", "--spec", "s", "--out", "o", "--seed", "abc"]), EXIT_USAGE);
        assert_eq!(run_cli(["--help"]), EXIT_OK);
    }

    #[test]
    fn missing_input_is_a_data_error() {
        let dir = tempfile::tempdir().unwrap();
        let spec = dir.path().join("missing.spec");
        let out = dir.path().join("out.slt");
        let code = run_cli([
            "generate".into(),
            "--spec".into(),
            spec.into_os_string(),
            "--out".into(),
            out.clone().into_os_string(),
        ]);
        assert_eq!(code, EXIT_DATA);
        assert!(!out.exists());
    }

    #[test]
    fn subject_names() {
        assert_eq!(subject_name(Path::new("/x/sub 01.slt")), "sub_01");
        assert_eq!(subject_name(Path::new("/x/s2")), "s2");
    }
}
