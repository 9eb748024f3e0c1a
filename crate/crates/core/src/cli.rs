//! Command-line interface: file-to-file pipeline stages plus the dataset
//! generator, evaluation harness, report renderer and latency bench.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use crate::config::PipelineConfig;
use crate::dataset::{
    generate_dataset, load_scene, read_manifest, EntryKind, ManifestEntry, ProtocolConfig,
};
use crate::energy::energy_from_logits;
use crate::eval::{
    detection_rate, false_positive_eval, judge_detection, render_report, DetectionVerdict,
    EvalReport, FpRow, RateRow,
};
use crate::formats::{
    read_energy, read_logits, read_mask_png, write_energy, write_logits, write_mask_png,
};
use crate::fusion::fuse_with_energy;
use crate::oracle::{segment, segment_mask, Corruption, CorruptionConfig};
use crate::postprocess::postprocess;

#[derive(Parser)]
#[command(
    name = "corridor",
    version,
    about = "Ego-corridor obstacle detection pipeline"
)]
struct Cli {
    /// Pipeline config file (key = value lines). Falls back to the
    /// CORRIDOR_CONFIG environment variable, then to built-in defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads for batch commands (overrides the config).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic dataset and its manifest.
    Scenegen(ScenegenArgs),
    /// Run the oracle segmenter over a dataset, writing corridor masks
    /// (and optionally logits).
    Segment(SegmentArgs),
    /// Post-process corridor masks (component selection, closing,
    /// width-drop cut).
    Postprocess(StageArgs),
    /// Compute free-energy maps from logits files.
    Energy(StageArgs),
    /// Fuse corridors with energy outlier blobs.
    Fuse(FuseArgs),
    /// Judge predictions against a dataset and write verdicts and rates.
    Eval(EvalArgs),
    /// Render rate/FP CSVs into an aligned text table.
    Report(ReportArgs),
    /// Measure single-threaded per-frame stage latency.
    Bench(BenchArgs),
}

#[derive(Args)]
struct ScenegenArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Protocol preset: `full` (5 bins x 28 sprites x 3 variants + 12x200
    /// clean frames) or `smoke` (a tiny subset).
    #[arg(long, default_value = "full")]
    protocol: String,
    /// Override the distance bins, comma separated meters.
    #[arg(long)]
    bins: Option<String>,
    #[arg(long)]
    sprites: Option<usize>,
    #[arg(long)]
    variants: Option<usize>,
    #[arg(long)]
    runs: Option<usize>,
    #[arg(long)]
    frames: Option<usize>,
}

#[derive(Args)]
struct SegmentArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Corruption modes, in order: clean, wrap, miss_near:<m>, holes:<p>,
    /// edge_jitter:<sigma>. Repeatable.
    #[arg(long = "corruption", default_value = "clean")]
    corruptions: Vec<String>,
    /// Also write per-pixel class logits next to each mask.
    #[arg(long)]
    logits: bool,
}

#[derive(Args)]
struct StageArgs {
    /// Input file, or input directory when --dataset is given.
    #[arg(long = "in", value_name = "PATH")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Batch mode: treat --in/--out as directories mirroring this
    /// dataset's manifest layout.
    #[arg(long)]
    dataset: Option<PathBuf>,
}

#[derive(Args)]
struct FuseArgs {
    /// Post-processed corridor mask (file, or directory with --dataset).
    #[arg(long)]
    corridor: PathBuf,
    /// Energy raster (file, or directory with --dataset).
    #[arg(long)]
    energy: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    dataset: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    dataset: PathBuf,
    /// Directory of predicted masks (`<path>/mask.png` per manifest entry).
    #[arg(long)]
    pred: PathBuf,
    #[arg(long, default_value = "corridor")]
    method: String,
    #[arg(long, name = "out-dir")]
    out_dir: PathBuf,
    /// Obstacle-free frames whose corridor ends closer than this count as
    /// false positives (overrides the config).
    #[arg(long, name = "expected-min-range")]
    expected_min_range: Option<f64>,
}

#[derive(Args)]
struct ReportArgs {
    /// Rate CSVs (method,bin_m,correct,total,pct_truncated). Repeatable.
    #[arg(long = "rates", required = true)]
    rates: Vec<PathBuf>,
    /// Optional FP CSV (run_id,frames,fp_count).
    #[arg(long)]
    fp: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, default_value_t = 100)]
    frames: usize,
    #[arg(long, default_value_t = 3)]
    seed: u64,
    /// Where to write the per-frame latency records (CSV).
    #[arg(long)]
    out: Option<PathBuf>,
}

type CliResult = Result<(), String>;

pub fn run() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(cli: Cli) -> CliResult {
    let config = load_config(cli.config.as_deref())?;
    let jobs = cli.jobs.unwrap_or(config.jobs).max(1);
    match cli.command {
        Command::Scenegen(a) => cmd_scenegen(a, &config, jobs),
        Command::Segment(a) => cmd_segment(a, &config, jobs),
        Command::Postprocess(a) => cmd_postprocess(a, &config, jobs),
        Command::Energy(a) => cmd_energy(a, jobs),
        Command::Fuse(a) => cmd_fuse(a, &config, jobs),
        Command::Eval(a) => cmd_eval(a, &config, jobs),
        Command::Report(a) => cmd_report(a),
        Command::Bench(a) => cmd_bench(a, &config),
    }
}

fn load_config(path: Option<&Path>) -> Result<PipelineConfig, String> {
    let path = path
        .map(Path::to_path_buf)
        .or_else(|| std::env::var_os("CORRIDOR_CONFIG").map(PathBuf::from));
    match path {
        Some(p) => PipelineConfig::from_file(&p).map_err(|e| e.to_string()),
        None => Ok(PipelineConfig::default()),
    }
}

fn cmd_scenegen(a: ScenegenArgs, config: &PipelineConfig, jobs: usize) -> CliResult {
    let mut proto = match a.protocol.as_str() {
        "full" => ProtocolConfig::full(a.seed),
        "smoke" => ProtocolConfig::smoke(a.seed),
        other => return Err(format!("unknown protocol `{other}` (full|smoke)")),
    };
    proto.camera = config.camera;
    proto.lane_width = config.lane_width;
    proto.max_corridor_range = config.max_corridor_range;
    proto.feather_radius = config.feather_radius;
    if let Some(bins) = &a.bins {
        proto.bins = bins
            .split(',')
            .map(|b| b.trim().parse::<f64>().map_err(|e| e.to_string()))
            .collect::<Result<_, _>>()?;
    }
    if let Some(v) = a.sprites {
        proto.sprites_per_bin = v;
    }
    if let Some(v) = a.variants {
        proto.variants_per_sprite = v;
    }
    if let Some(v) = a.runs {
        proto.runs = v;
    }
    if let Some(v) = a.frames {
        proto.frames_per_run = v;
    }
    let entries = generate_dataset(&a.out, &proto, jobs).map_err(|e| e.to_string())?;
    println!("wrote {} scenes to {}", entries.len(), a.out.display());
    Ok(())
}

fn parse_corruptions(specs: &[String]) -> Result<Vec<Corruption>, String> {
    specs
        .iter()
        .map(|s| {
            let (name, arg) = s.split_once(':').unwrap_or((s.as_str(), ""));
            let num = || -> Result<f64, String> {
                arg.parse()
                    .map_err(|_| format!("corruption `{s}` needs a numeric argument"))
            };
            match name {
                "clean" => Ok(Corruption::Clean),
                "wrap" => Ok(Corruption::Wrap),
                "miss_near" => Ok(Corruption::MissNear { d_threshold: num()? }),
                "holes" => Ok(Corruption::Holes { p: num()? }),
                "edge_jitter" => Ok(Corruption::EdgeJitter { sigma: num()? }),
                other => Err(format!("unknown corruption `{other}`")),
            }
        })
        .collect()
}

fn with_pool<T: Send>(
    jobs: usize,
    items: &[ManifestEntry],
    f: impl Fn(&ManifestEntry) -> Result<T, String> + Sync,
) -> Result<Vec<T>, String> {
    if jobs <= 1 {
        items.iter().map(&f).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| e.to_string())?;
        pool.install(|| items.par_iter().map(&f).collect())
    }
}

fn cmd_segment(a: SegmentArgs, config: &PipelineConfig, jobs: usize) -> CliResult {
    let modes = parse_corruptions(&a.corruptions)?;
    let entries = read_manifest(&a.dataset).map_err(|e| e.to_string())?;
    let cam = config.camera;
    let params = config.oracle;
    with_pool(jobs, &entries, |entry| {
        let scene = load_scene(&a.dataset, &entry.path).map_err(|e| e.to_string())?;
        let cfg = CorruptionConfig {
            modes: modes.clone(),
            rng_seed: entry.seed,
        };
        let dir = a.out.join(&entry.path);
        std::fs::create_dir_all(&dir).map_err(|e| e.to_string())?;
        if a.logits {
            let (logits, mask) = segment(&scene, &cam, &cfg, &params).map_err(|e| e.to_string())?;
            write_logits(&dir.join("logits.bin"), &logits).map_err(|e| e.to_string())?;
            write_mask_png(&dir.join("mask.png"), &mask).map_err(|e| e.to_string())?;
        } else {
            let mask = segment_mask(&scene, &cam, &cfg).map_err(|e| e.to_string())?;
            write_mask_png(&dir.join("mask.png"), &mask).map_err(|e| e.to_string())?;
        }
        Ok(())
    })?;
    println!("segmented {} scenes into {}", entries.len(), a.out.display());
    Ok(())
}

fn cmd_postprocess(a: StageArgs, config: &PipelineConfig, jobs: usize) -> CliResult {
    let cam = config.camera;
    let params = config.postprocess;
    let one = |input: &Path, out: &Path| -> Result<(), String> {
        let mask = read_mask_png(input).map_err(|e| e.to_string())?;
        let (out_mask, edge) = postprocess(&mask, &params, &cam);
        if let Some(parent) = out.parent() {
            std::fs::create_dir_all(parent).map_err(|e| e.to_string())?;
        }
        write_mask_png(out, &out_mask).map_err(|e| e.to_string())?;
        if edge.degenerate {
            eprintln!("warning: {} corridor too short for the width-drop search", input.display());
        }
        Ok(())
    };
    match &a.dataset {
        None => one(&a.input, &a.out),
        Some(root) => {
            let entries = read_manifest(root).map_err(|e| e.to_string())?;
            with_pool(jobs, &entries, |e| {
                one(
                    &a.input.join(&e.path).join("mask.png"),
                    &a.out.join(&e.path).join("mask.png"),
                )
            })?;
            println!("post-processed {} masks into {}", entries.len(), a.out.display());
            Ok(())
        }
    }
}

fn cmd_energy(a: StageArgs, jobs: usize) -> CliResult {
    let one = |input: &Path, out: &Path| -> Result<(), String> {
        let logits = read_logits(input).map_err(|e| e.to_string())?;
        let energy = energy_from_logits(&logits).map_err(|e| e.to_string())?;
        if let Some(parent) = out.parent() {
            std::fs::create_dir_all(parent).map_err(|e| e.to_string())?;
        }
        write_energy(out, &energy).map_err(|e| e.to_string())
    };
    match &a.dataset {
        None => one(&a.input, &a.out),
        Some(root) => {
            let entries = read_manifest(root).map_err(|e| e.to_string())?;
            with_pool(jobs, &entries, |e| {
                one(
                    &a.input.join(&e.path).join("logits.bin"),
                    &a.out.join(&e.path).join("energy.bin"),
                )
            })?;
            println!("computed {} energy maps into {}", entries.len(), a.out.display());
            Ok(())
        }
    }
}

fn cmd_fuse(a: FuseArgs, config: &PipelineConfig, jobs: usize) -> CliResult {
    let cam = config.camera;
    let cfg = config.fusion;
    let one = |corridor: &Path, energy: &Path, out: &Path| -> Result<(), String> {
        let mask = read_mask_png(corridor).map_err(|e| e.to_string())?;
        let e = read_energy(energy).map_err(|e| e.to_string())?;
        if (e.width, e.height) != (mask.width, mask.height) {
            return Err(format!(
                "dimension mismatch: energy {}x{} vs mask {}x{}",
                e.width, e.height, mask.width, mask.height
            ));
        }
        let (fused, _) = fuse_with_energy(&mask, &e, &cfg, &cam);
        if let Some(parent) = out.parent() {
            std::fs::create_dir_all(parent).map_err(|e| e.to_string())?;
        }
        write_mask_png(out, &fused).map_err(|e| e.to_string())
    };
    match &a.dataset {
        None => one(&a.corridor, &a.energy, &a.out),
        Some(root) => {
            let entries = read_manifest(root).map_err(|e| e.to_string())?;
            with_pool(jobs, &entries, |e| {
                one(
                    &a.corridor.join(&e.path).join("mask.png"),
                    &a.energy.join(&e.path).join("energy.bin"),
                    &a.out.join(&e.path).join("mask.png"),
                )
            })?;
            println!("fused {} masks into {}", entries.len(), a.out.display());
            Ok(())
        }
    }
}

fn cmd_eval(a: EvalArgs, config: &PipelineConfig, jobs: usize) -> CliResult {
    let entries = read_manifest(&a.dataset).map_err(|e| e.to_string())?;
    let cam = config.camera;
    let tol = config.eval_tolerance;
    let expected_min_range = a.expected_min_range.unwrap_or(config.expected_min_range);

    let obstacles: Vec<ManifestEntry> = entries
        .iter()
        .filter(|e| e.kind == EntryKind::Obstacle)
        .cloned()
        .collect();
    let verdicts: Vec<DetectionVerdict> = with_pool(jobs, &obstacles, |entry| {
        let scene = load_scene(&a.dataset, &entry.path).map_err(|e| e.to_string())?;
        let pred = read_mask_png(&a.pred.join(&entry.path).join("mask.png"))
            .map_err(|e| e.to_string())?;
        let mut v = judge_detection(&pred, &scene, &cam, tol).map_err(|e| e.to_string())?;
        v.scene_id = entry.path.clone();
        Ok(v)
    })?;

    let mut bins: Vec<f64> = obstacles.iter().filter_map(|e| e.bin).collect();
    bins.sort_by(|x, y| x.partial_cmp(y).unwrap());
    bins.dedup();
    let rates = detection_rate(&a.method, &bins, &verdicts).map_err(|e| e.to_string())?;

    // false positives, grouped per obstacle-free run
    let mut runs: Vec<usize> = entries
        .iter()
        .filter(|e| e.kind == EntryKind::Clean)
        .filter_map(|e| e.run)
        .collect();
    runs.sort_unstable();
    runs.dedup();
    let mut fp = Vec::new();
    for run in runs {
        let frames: Vec<ManifestEntry> = entries
            .iter()
            .filter(|e| e.kind == EntryKind::Clean && e.run == Some(run))
            .cloned()
            .collect();
        let preds = with_pool(jobs, &frames, |entry| {
            read_mask_png(&a.pred.join(&entry.path).join("mask.png")).map_err(|e| e.to_string())
        })?;
        fp.push(FpRow {
            run_id: run,
            frames: preds.len(),
            fp_count: false_positive_eval(&preds, expected_min_range, &cam),
        });
    }

    let report = EvalReport { rates, fp };
    let art = render_report(&report);
    std::fs::create_dir_all(&a.out_dir).map_err(|e| e.to_string())?;
    std::fs::write(
        a.out_dir.join("verdicts.csv"),
        crate::eval::verdict_csv(&verdicts),
    )
    .map_err(|e| e.to_string())?;
    std::fs::write(a.out_dir.join("rates.csv"), &art.csv).map_err(|e| e.to_string())?;
    std::fs::write(a.out_dir.join("fp.csv"), &art.fp_csv).map_err(|e| e.to_string())?;
    std::fs::write(a.out_dir.join("table.txt"), &art.table).map_err(|e| e.to_string())?;
    print!("{}", art.table);
    Ok(())
}

fn cmd_report(a: ReportArgs) -> CliResult {
    let mut rates = Vec::new();
    for path in &a.rates {
        let text = std::fs::read_to_string(path).map_err(|e| e.to_string())?;
        for (i, line) in text.lines().enumerate().skip(1) {
            if line.trim().is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() < 4 {
                return Err(format!("{}:{}: expected >= 4 CSV columns", path.display(), i + 1));
            }
            rates.push(RateRow {
                method: cols[0].to_string(),
                bin_m: cols[1].parse().map_err(|e| format!("{}:{}: {e}", path.display(), i + 1))?,
                correct: cols[2].parse().map_err(|e| format!("{}:{}: {e}", path.display(), i + 1))?,
                total: cols[3].parse().map_err(|e| format!("{}:{}: {e}", path.display(), i + 1))?,
            });
        }
    }
    let mut fp = Vec::new();
    if let Some(path) = &a.fp {
        let text = std::fs::read_to_string(path).map_err(|e| e.to_string())?;
        for line in text.lines().skip(1) {
            if line.trim().is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() < 3 {
                return Err(format!("{}: expected 3 CSV columns", path.display()));
            }
            fp.push(FpRow {
                run_id: cols[0].parse().map_err(|e| format!("{e}"))?,
                frames: cols[1].parse().map_err(|e| format!("{e}"))?,
                fp_count: cols[2].parse().map_err(|e| format!("{e}"))?,
            });
        }
    }
    let art = render_report(&EvalReport { rates, fp });
    std::fs::write(&a.out, &art.table).map_err(|e| e.to_string())?;
    print!("{}", art.table);
    Ok(())
}

fn percentile(sorted_ms: &[f64], p: f64) -> f64 {
    if sorted_ms.is_empty() {
        return 0.0;
    }
    let idx = ((sorted_ms.len() as f64 - 1.0) * p).round() as usize;
    sorted_ms[idx]
}

fn cmd_bench(a: BenchArgs, config: &PipelineConfig) -> CliResult {
    use crate::scene::{render_scene, ObstaclePlacement, ScenarioSpec};
    use crate::sprite::builtin_library;

    let cam = config.camera;
    let mut spec = ScenarioSpec::new(cam);
    spec.lane_width = config.lane_width;
    spec.max_corridor_range = config.max_corridor_range;
    spec.sprite_id = "crate_red".into();
    spec.rng_seed = a.seed;
    spec.obstacle = Some(ObstaclePlacement {
        distance: 50.0,
        lateral_offset: 0.0,
        physical_width: 0.6,
        physical_height: 0.6,
        rotation: 0.0,
    });
    let scene = render_scene(&spec, &builtin_library()).map_err(|e| e.to_string())?;
    let cfg = CorruptionConfig {
        modes: vec![Corruption::Wrap],
        rng_seed: a.seed,
    };
    let (logits, raw_mask) = segment(&scene, &cam, &cfg, &config.oracle).map_err(|e| e.to_string())?;

    let mut post_ms = Vec::with_capacity(a.frames);
    let mut energy_ms = Vec::with_capacity(a.frames);
    let mut fuse_ms = Vec::with_capacity(a.frames);
    let mut csv = String::from("frame,postprocess_ms,energy_ms,fuse_ms,total_ms\n");
    for frame in 0..a.frames {
        let t0 = Instant::now();
        let (post_mask, _) = postprocess(&raw_mask, &config.postprocess, &cam);
        let t1 = Instant::now();
        let energy = energy_from_logits(&logits).map_err(|e| e.to_string())?;
        let t2 = Instant::now();
        let (fused, _) = fuse_with_energy(&post_mask, &energy, &config.fusion, &cam);
        let t3 = Instant::now();
        std::hint::black_box(&fused);
        let p = (t1 - t0).as_secs_f64() * 1e3;
        let e = (t2 - t1).as_secs_f64() * 1e3;
        let f = (t3 - t2).as_secs_f64() * 1e3;
        csv.push_str(&format!("{frame},{p:.3},{e:.3},{f:.3},{:.3}\n", p + e + f));
        post_ms.push(p);
        energy_ms.push(e);
        fuse_ms.push(f);
    }
    let mut total: Vec<f64> = (0..a.frames)
        .map(|i| post_ms[i] + energy_ms[i] + fuse_ms[i])
        .collect();
    for v in [&mut post_ms, &mut energy_ms, &mut fuse_ms, &mut total] {
        v.sort_by(|x, y| x.partial_cmp(y).unwrap());
    }
    for (name, v) in [
        ("postprocess", &post_ms),
        ("energy", &energy_ms),
        ("fuse", &fuse_ms),
        ("total", &total),
    ] {
        println!(
            "{name:11} p50 {:8.3} ms   p95 {:8.3} ms   max {:8.3} ms",
            percentile(v, 0.50),
            percentile(v, 0.95),
            percentile(v, 1.0),
        );
    }
    if let Some(out) = &a.out {
        std::fs::write(out, csv).map_err(|e| e.to_string())?;
    }
    Ok(())
}
