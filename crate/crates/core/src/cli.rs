//! Command-line front end.
//!
//! Data goes to files or standard output; timing and diagnostics go to
//! standard error so outputs stay byte-reproducible. Exit codes: 0 success,
//! 1 usage, 2 I/O, 3 data/format, 4 resource cap.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use rayon::prelude::*;

use crate::classify::{detect, DetectionResult};
use crate::config::ConfigFile;
use crate::error::{Error, Result};
use crate::eval::{
    evaluate_folds, grid_search, parse_values, perturb_sweep, sweep_to_csv, trajectory, FoldSpec,
    GridSpec, Method, Subset,
};
use crate::frame_io::{
    frame_id, list_frames, load_dataset, load_image, write_image, write_labels, write_map,
    write_ppm, GrayImage, LabeledFrame, MapMode,
};
use crate::params::Params;
use crate::synth::{synth_phantom, synth_tilt_sequence, PhantomSpec, TiltProfile};

#[derive(Debug, Parser)]
#[command(name = "tissue-topo", version, about = "Acoustic shadow and confidence maps for ultrasound frames")]
pub struct Cli {
    /// Worker threads (defaults to the number of CPUs).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Topol,
    Thresh,
    Oracle,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Classify the scan lines of one frame and write its confidence map.
    Detect {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out_labels: PathBuf,
        /// `.csv` writes floats, anything else an 8-bit PGM.
        #[arg(long)]
        out_confidence: Option<PathBuf>,
        /// PPM with shadow columns tinted and triangle edges drawn.
        #[arg(long)]
        overlay: Option<PathBuf>,
    },
    /// Per-fold seen/unseen metrics on a labelled dataset.
    Evaluate {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        folds: PathBuf,
        #[arg(long, value_enum)]
        method: Option<MethodArg>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, conflicts_with = "fit_kappa")]
        kappa: Option<f64>,
        #[arg(long)]
        fit_kappa: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Mean-confidence trajectory of an ordered frame sequence.
    Trajectory {
        #[arg(long)]
        frames_dir: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Vary one parameter and report Topol metrics for each value.
    Sweep {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        param: String,
        /// Comma-separated values.
        #[arg(long)]
        values: String,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Restrict to one fold's subset (requires --fold).
        #[arg(long, requires = "fold")]
        folds: Option<PathBuf>,
        #[arg(long)]
        fold: Option<u32>,
        #[arg(long, default_value = "unseen")]
        subset: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Exhaustive Topol parameter search on seen data.
    Gridsearch {
        #[arg(long)]
        dataset: PathBuf,
        /// Axes such as `epsilon=50,60,70;gamma=3,4`.
        #[arg(long, required_unless_present = "grid_file")]
        grid: Option<String>,
        #[arg(long)]
        grid_file: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Search the seen frames of this fold only (requires --fold).
        #[arg(long, requires = "fold")]
        folds: Option<PathBuf>,
        #[arg(long)]
        fold: Option<u32>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write synthetic frames, label sidecars and a fold manifest.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 30)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 3)]
        k_folds: u32,
        /// Frames per group in the fold manifest.
        #[arg(long, default_value_t = 5)]
        group_size: usize,
        /// Write an N-frame tilt sequence instead of independent phantoms.
        #[arg(long)]
        tilt: Option<usize>,
    },
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(cli: Cli) -> Result<()> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            return Err(Error::InvalidParam("--jobs must be >= 1".into()));
        }
        builder = builder.num_threads(jobs);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::InvalidParam(format!("thread pool: {e}")))?;
    pool.install(|| dispatch(cli.command))
}

fn load_config(path: &Option<PathBuf>) -> Result<ConfigFile> {
    match path {
        Some(p) => ConfigFile::load(p),
        None => Ok(ConfigFile::default()),
    }
}

fn emit(out: &Option<PathBuf>, text: &str) -> Result<()> {
    match out {
        Some(path) => fs::write(path, text).map_err(|e| Error::io(path, e)),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(text.as_bytes())
                .map_err(|e| Error::io("<stdout>", e))
        }
    }
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Detect {
            input,
            config,
            out_labels,
            out_confidence,
            overlay,
        } => cmd_detect(&input, &load_config(&config)?.params, &out_labels, out_confidence.as_deref(), overlay.as_deref()),
        Command::Evaluate {
            dataset,
            folds,
            method,
            config,
            kappa,
            fit_kappa,
            out,
        } => {
            let cfg = load_config(&config)?;
            let method = resolve_method(method, &cfg, kappa, fit_kappa)?;
            let frames = load_dataset(&dataset)?;
            let folds = FoldSpec::load(&folds)?;
            let report = evaluate_folds(&frames, &folds, &method)?;
            emit(&out, &report.to_csv())
        }
        Command::Trajectory {
            frames_dir,
            config,
            out,
        } => {
            let params = load_config(&config)?.params;
            emit(&out, &cmd_trajectory(&frames_dir, &params)?)
        }
        Command::Sweep {
            dataset,
            param,
            values,
            config,
            folds,
            fold,
            subset,
            out,
        } => {
            let params = load_config(&config)?.params;
            let subset = match subset.as_str() {
                "seen" => Subset::Seen,
                "unseen" => Subset::Unseen,
                other => return Err(Error::InvalidParam(format!("unknown subset {other:?}"))),
            };
            let frames = select_frames(load_dataset(&dataset)?, folds.as_deref(), fold, subset)?;
            let values = parse_values(&values)?;
            let rows = perturb_sweep(&frames, &param, &values, &params)?;
            emit(&out, &sweep_to_csv(&rows))
        }
        Command::Gridsearch {
            dataset,
            grid,
            grid_file,
            config,
            folds,
            fold,
            out,
        } => {
            let params = load_config(&config)?.params;
            let grid_text = match (grid, grid_file) {
                (Some(g), _) => g,
                (None, Some(path)) => fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?,
                (None, None) => return Err(Error::EmptyGrid),
            };
            let grid = GridSpec::parse(&grid_text)?;
            let frames = select_frames(load_dataset(&dataset)?, folds.as_deref(), fold, Subset::Seen)?;
            let result = grid_search(&frames, &grid, &params)?;
            let mut text = String::from("index,score");
            for (name, _) in &grid.axes {
                text.push(',');
                text.push_str(name);
            }
            text.push('\n');
            text.push_str(&format!("{},{}", result.index, result.score));
            for (name, _) in &grid.axes {
                text.push_str(&format!(",{}", result.params.get(name)?));
            }
            text.push('\n');
            emit(&out, &text)
        }
        Command::Synth {
            out,
            count,
            seed,
            k_folds,
            group_size,
            tilt,
        } => cmd_synth(&out, count, seed, k_folds, group_size, tilt),
    }
}

fn resolve_method(
    arg: Option<MethodArg>,
    cfg: &ConfigFile,
    kappa: Option<f64>,
    fit_kappa: bool,
) -> Result<Method> {
    let name = match arg {
        Some(MethodArg::Topol) => "topol",
        Some(MethodArg::Thresh) => "thresh",
        Some(MethodArg::Oracle) => "oracle",
        None => cfg.method.as_deref().unwrap_or("topol"),
    };
    Ok(match name {
        "topol" => Method::Topol(cfg.params.clone()),
        "oracle" => Method::Oracle,
        _ => Method::Thresh {
            kappa: if fit_kappa { None } else { kappa.or(cfg.kappa) },
            crop_rows: cfg.params.crop_rows,
        },
    })
}

fn select_frames(
    frames: Vec<LabeledFrame>,
    folds: Option<&Path>,
    fold: Option<u32>,
    subset: Subset,
) -> Result<Vec<LabeledFrame>> {
    let (Some(path), Some(fold)) = (folds, fold) else {
        return Ok(frames);
    };
    let spec = FoldSpec::load(path)?;
    let ids = spec.frames(fold, subset);
    if ids.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let missing: Vec<String> = ids
        .iter()
        .filter(|id| !frames.iter().any(|f| f.id == **id))
        .map(|id| id.to_string())
        .collect();
    if !missing.is_empty() {
        return Err(Error::MissingAnnotations(missing));
    }
    Ok(frames.into_iter().filter(|f| ids.contains(&f.id.as_str())).collect())
}

pub fn cmd_detect(
    input: &Path,
    params: &Params,
    out_labels: &Path,
    out_confidence: Option<&Path>,
    overlay: Option<&Path>,
) -> Result<()> {
    let img = load_image(input)?;
    let start = Instant::now();
    let result = detect(&img, params)?;
    let elapsed = start.elapsed();
    write_labels(&result.labels, out_labels)?;
    if let Some(path) = out_confidence {
        let mode = if path.extension().is_some_and(|e| e == "csv") {
            MapMode::CsvFloat
        } else {
            MapMode::Linear8
        };
        write_map(&result.confidence, path, mode)?;
    }
    if let Some(path) = overlay {
        let rgb = render_overlay(&img, &result, params.crop_rows);
        write_ppm(img.width(), img.height(), &rgb, path)?;
    }
    println!("mean_confidence={}", result.mean_confidence);
    println!("shadow_scanlines={}", result.labels.shadow_count());
    eprintln!(
        "detect: {:.3} ms, {} salient points, {} triangles",
        elapsed.as_secs_f64() * 1e3,
        result.cloud_size,
        result.triangle_count
    );
    Ok(())
}

/// Grayscale frame with shadow columns tinted cyan and triangle edges in yellow.
pub fn render_overlay(img: &GrayImage, result: &DetectionResult, crop_rows: usize) -> Vec<[u8; 3]> {
    let (w, h) = (img.width(), img.height());
    let gray = img.to_u8();
    let shadow = result.labels.as_slice();
    let mut rgb: Vec<[u8; 3]> = gray
        .iter()
        .enumerate()
        .map(|(i, &g)| {
            if shadow[i % w] {
                let g = g as u16;
                [(g / 2) as u8, (g / 2 + 110).min(255) as u8, (g / 2 + 110).min(255) as u8]
            } else {
                [g, g, g]
            }
        })
        .collect();
    let mut plot = |r: i64, c: i64| {
        if r >= 0 && c >= 0 && (r as usize) < h && (c as usize) < w {
            rgb[r as usize * w + c as usize] = [255, 220, 0];
        }
    };
    let offset = crop_rows as i64;
    for [a, b, c] in result.complex.iter_triangles() {
        for (p, q) in [(a, b), (b, c), (c, a)] {
            draw_line(
                (p.row as i64 + offset, p.col as i64),
                (q.row as i64 + offset, q.col as i64),
                &mut plot,
            );
        }
    }
    rgb
}

fn draw_line((r0, c0): (i64, i64), (r1, c1): (i64, i64), plot: &mut impl FnMut(i64, i64)) {
    let (dr, dc) = ((r1 - r0).abs(), -(c1 - c0).abs());
    let (sr, sc) = (if r0 < r1 { 1 } else { -1 }, if c0 < c1 { 1 } else { -1 });
    let (mut r, mut c, mut err) = (r0, c0, dr + dc);
    loop {
        plot(r, c);
        if r == r1 && c == c1 {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dc {
            err += dc;
            r += sr;
        }
        if e2 <= dr {
            err += dr;
            c += sc;
        }
    }
}

pub fn cmd_trajectory(frames_dir: &Path, params: &Params) -> Result<String> {
    let paths = list_frames(frames_dir)?;
    if paths.len() < 3 {
        return Err(Error::InvalidParam(format!(
            "{}: trajectory needs at least 3 frames, found {}",
            frames_dir.display(),
            paths.len()
        )));
    }
    let start = Instant::now();
    let means = paths
        .par_iter()
        .map(|p| detect(&load_image(p)?, params).map(|r| r.mean_confidence))
        .collect::<Result<Vec<f64>>>()?;
    eprintln!(
        "trajectory: {} frames in {:.1} ms",
        paths.len(),
        start.elapsed().as_secs_f64() * 1e3
    );
    let names: Vec<String> = paths.iter().map(|p| frame_id(p)).collect();
    Ok(trajectory(means)?.to_csv(&names))
}

fn phantom_seed(seed: u64, i: usize) -> u64 {
    seed.wrapping_mul(1_000_003).wrapping_add(i as u64)
}

pub fn cmd_synth(
    out: &Path,
    count: usize,
    seed: u64,
    k_folds: u32,
    group_size: usize,
    tilt: Option<usize>,
) -> Result<()> {
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    if let Some(n) = tilt {
        let frames = synth_tilt_sequence(n, &PhantomSpec::default(), TiltProfile::default(), seed)?;
        for (i, (img, labels)) in frames.iter().enumerate() {
            write_image(img, out.join(format!("tilt_{i:04}.pgm")))?;
            write_labels(labels, out.join(format!("tilt_{i:04}.labels")))?;
        }
        return Ok(());
    }
    if k_folds < 1 || group_size < 1 {
        return Err(Error::InvalidParam("k-folds and group-size must be >= 1".into()));
    }
    let rendered = (0..count)
        .into_par_iter()
        .map(|i| synth_phantom(&PhantomSpec::random_layout(phantom_seed(seed, i))))
        .collect::<Result<Vec<_>>>()?;
    let mut ids = Vec::with_capacity(count);
    for (i, (img, labels)) in rendered.iter().enumerate() {
        let id = format!("frame_{i:04}");
        write_image(img, out.join(format!("{id}.pgm")))?;
        write_labels(labels, out.join(format!("{id}.labels")))?;
        ids.push((id, format!("g{:03}", i / group_size)));
    }
    let folds = FoldSpec::group_kfold(&ids, k_folds);
    let path = out.join("folds.txt");
    fs::write(&path, folds.to_text()).map_err(|e| Error::io(&path, e))
}

/// Same phantoms as `cmd_synth`, in memory.
pub fn synth_dataset(count: usize, seed: u64) -> Result<Vec<LabeledFrame>> {
    (0..count)
        .into_par_iter()
        .map(|i| {
            let (image, labels) = synth_phantom(&PhantomSpec::random_layout(phantom_seed(seed, i)))?;
            Ok(LabeledFrame {
                id: format!("frame_{i:04}"),
                image,
                labels,
            })
        })
        .collect()
}
