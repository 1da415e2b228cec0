use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use dmdcf::bench::dataset::{load_dataset, parse_xywh};
use dmdcf::bench::{
    aggregate_by_category, evaluate, generate_synthetic, load_config, load_sequence_with, read_result, run_dataset,
    run_sequence, write_result, Category, DepthEncoding, Metrics, SyntheticSpec,
};
use dmdcf::{Mask, TrackerConfig};
use image::{GrayImage, Luma};

#[derive(Parser)]
#[command(name = "dmdcf", version, about = "Track objects in RGBD sequences")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Track one sequence directory and write its result file.
    Track {
        sequence: PathBuf,
        /// Tracker configuration (TOML).
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output directory for `<name>.txt` and its timing sidecar.
        #[arg(long, default_value = ".")]
        out: PathBuf,
        /// Also write the per-frame depth mask as PNG.
        #[arg(long)]
        debug_masks: bool,
        #[arg(long, value_enum, default_value_t = Encoding::Mm)]
        depth: Encoding,
    },
    /// Track every sequence below a dataset root and report scores.
    Bench {
        root: PathBuf,
        /// Only sequences tagged with this category.
        #[arg(long)]
        filter: Option<Category>,
        #[arg(long, value_enum, default_value_t = Report::Table)]
        report: Report,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Write per-sequence result files here.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Encoding::Mm)]
        depth: Encoding,
    },
    /// Render a synthetic sequence described by a TOML spec.
    Synth {
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a result file (corners) against a ground-truth file (x,y,w,h).
    Eval { result: PathBuf, truth: PathBuf },
}

#[derive(Clone, Copy, ValueEnum)]
enum Report {
    Csv,
    Table,
}

#[derive(Clone, Copy, ValueEnum)]
enum Encoding {
    /// 16-bit millimeters.
    Mm,
    /// Princeton RGBD depth PNGs (bit-rotated millimeters).
    Princeton,
}

impl From<Encoding> for DepthEncoding {
    fn from(e: Encoding) -> Self {
        match e {
            Encoding::Mm => DepthEncoding::Millimeters,
            Encoding::Princeton => DepthEncoding::PrincetonRotated,
        }
    }
}

enum Failure {
    Usage(String),
    Ingestion(String),
    Runtime(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Ingestion(_) => 2,
            Failure::Runtime(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Ingestion(m) | Failure::Runtime(m) => m,
        }
    }
}

/// Errors reading inputs are ingestion failures; everything else happened
/// while tracking or scoring.
fn classify(e: dmdcf::Error) -> Failure {
    use dmdcf::Error::*;
    match e {
        Ingestion { .. } | Io { .. } | Image { .. } | Parse { .. } => Failure::Ingestion(e.to_string()),
        Configuration(_) | Spec(_) => Failure::Usage(e.to_string()),
        _ => Failure::Runtime(e.to_string()),
    }
}

fn config_from(path: Option<&Path>) -> Result<TrackerConfig, Failure> {
    match path {
        None => Ok(TrackerConfig::default()),
        Some(p) => load_config(p).map_err(|e| Failure::Usage(e.to_string())),
    }
}

fn create_dir(dir: &Path) -> Result<(), Failure> {
    fs::create_dir_all(dir).map_err(|e| Failure::Runtime(format!("{}: {e}", dir.display())))
}

fn save_mask(mask: &Mask, cell: u32, path: &Path) -> Result<(), Failure> {
    let (rows, cols) = mask.values.dim();
    let img = GrayImage::from_fn(cols as u32 * cell, rows as u32 * cell, |x, y| {
        Luma([if mask.values[[(y / cell) as usize, (x / cell) as usize]] { 255 } else { 0 }])
    });
    img.save(path).map_err(|e| Failure::Runtime(format!("{}: {e}", path.display())))
}

fn summary_line(name: &str, frames: usize, fps: f64, metrics: Option<&Metrics>) -> String {
    match metrics {
        Some(m) => format!(
            "{name}: {frames} frames, {fps:.1} fps, success {:.3}, mean IOU {:.3}",
            m.success, m.mean_iou
        ),
        None => format!("{name}: {frames} frames, {fps:.1} fps"),
    }
}

fn track(
    dir: &Path,
    config: Option<&Path>,
    out: &Path,
    debug_masks: bool,
    encoding: DepthEncoding,
) -> Result<(), Failure> {
    let config = config_from(config)?;
    let seq = load_sequence_with(dir, encoding).map_err(classify)?;
    create_dir(out)?;
    let mask_dir = out.join(format!("{}_masks", seq.name));
    if debug_masks {
        create_dir(&mask_dir)?;
    }
    let mut mask_err = None;
    let mut frame_errors = 0usize;
    let result = run_sequence(&seq, &config, |t, o| {
        if o.error.is_some() {
            frame_errors += 1;
        }
        if debug_masks && mask_err.is_none() {
            let path = mask_dir.join(format!("mask-{:05}.png", o.index));
            if let Err(e) = save_mask(&t.state().mask, t.search().cell() as u32, &path) {
                mask_err = Some(e);
            }
        }
    })
    .map_err(classify)?;
    if let Some(e) = mask_err {
        return Err(e);
    }
    let path = out.join(format!("{}.txt", seq.name));
    write_result(&result, &path).map_err(classify)?;
    let metrics = match &seq.ground_truth {
        Some(gt) => Some(evaluate(&result.boxes, gt).map_err(classify)?),
        None => None,
    };
    println!("{}", summary_line(&seq.name, result.len(), result.fps(), metrics.as_ref()));
    if frame_errors > 0 {
        eprintln!("{frame_errors} frame(s) could not be processed; previous boxes were reported");
    }
    Ok(())
}

fn bench(
    root: &Path,
    filter: Option<Category>,
    report: Report,
    config: Option<&Path>,
    out: Option<&Path>,
    encoding: DepthEncoding,
) -> Result<(), Failure> {
    let config = config_from(config)?;
    let mut seqs = load_dataset(root, encoding).map_err(classify)?;
    if let Some(c) = filter {
        seqs.retain(|s| s.tags.contains(&c));
    }
    if seqs.is_empty() {
        return Err(Failure::Ingestion(format!("no matching sequences below {}", root.display())));
    }
    if let Some(dir) = out {
        create_dir(dir)?;
    }
    let runs = run_dataset(&seqs, &config);

    let mut rows = Vec::new();
    let mut scored = Vec::new();
    let mut failed = Vec::new();
    for ((name, outcome), seq) in runs.into_iter().zip(&seqs) {
        match outcome {
            Ok((result, metrics)) => {
                if let Some(dir) = out {
                    write_result(&result, &dir.join(format!("{name}.txt"))).map_err(classify)?;
                }
                if let Some(m) = &metrics {
                    scored.push((seq.tags.clone(), m.clone()));
                }
                rows.push((name, result.len(), result.fps(), metrics));
            }
            Err(e) => failed.push(format!("{name}: {e}")),
        }
    }
    let categories: BTreeMap<Category, f64> = aggregate_by_category(&scored);

    match report {
        Report::Csv => {
            println!("sequence,frames,fps,success,mean_iou");
            for (name, n, fps, m) in &rows {
                let (s, iou) = m.as_ref().map_or((String::new(), String::new()), |m| {
                    (format!("{:.4}", m.success), format!("{:.4}", m.mean_iou))
                });
                println!("{name},{n},{fps:.2},{s},{iou}");
            }
            for (c, s) in &categories {
                println!("category:{c},,,{s:.4},");
            }
        }
        Report::Table => {
            println!("{:<24} {:>7} {:>7} {:>8} {:>8}", "sequence", "frames", "fps", "success", "mean IOU");
            for (name, n, fps, m) in &rows {
                let (s, iou) = m.as_ref().map_or(("-".to_string(), "-".to_string()), |m| {
                    (format!("{:.3}", m.success), format!("{:.3}", m.mean_iou))
                });
                println!("{name:<24} {n:>7} {fps:>7.1} {s:>8} {iou:>8}");
            }
            if !categories.is_empty() {
                println!();
                println!("{:<24} {:>8}", "category", "success");
                for (c, s) in &categories {
                    println!("{:<24} {s:>8.3}", c.to_string());
                }
            }
            if !scored.is_empty() {
                println!("(absent frames score 1 when reported absent, 0 otherwise)");
            }
        }
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::Runtime(failed.join("\n")))
    }
}

fn synth(spec_path: &Path, out: &Path) -> Result<(), Failure> {
    let text = fs::read_to_string(spec_path).map_err(|e| Failure::Ingestion(format!("{}: {e}", spec_path.display())))?;
    let spec: SyntheticSpec =
        toml::from_str(&text).map_err(|e| Failure::Usage(format!("{}: {e}", spec_path.display())))?;
    let seq = generate_synthetic(&spec, out).map_err(classify)?;
    println!("wrote {} frames to {}", seq.len(), out.display());
    Ok(())
}

fn eval(result: &Path, truth: &Path) -> Result<(), Failure> {
    let result = read_result(result).map_err(classify)?;
    let text = fs::read_to_string(truth).map_err(|e| Failure::Ingestion(format!("{}: {e}", truth.display())))?;
    let truth_boxes = parse_xywh(&text, truth).map_err(classify)?;
    let m = evaluate(&result.boxes, &truth_boxes).map_err(classify)?;
    println!("frames {}", m.ious.len());
    println!("success {:.4}", m.success);
    println!("mean_iou {:.4}", m.mean_iou);
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let outcome = match &cli.command {
        Command::Track {
            sequence,
            config,
            out,
            debug_masks,
            depth,
        } => track(sequence, config.as_deref(), out, *debug_masks, (*depth).into()),
        Command::Bench {
            root,
            filter,
            report,
            config,
            out,
            depth,
        } => bench(root, *filter, *report, config.as_deref(), out.as_deref(), (*depth).into()),
        Command::Synth { spec, out } => synth(spec, out),
        Command::Eval { result, truth } => eval(result, truth),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
