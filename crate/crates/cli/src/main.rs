mod config;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use kitting::controller::run_trial;
use kitting::corpus::{builtin_corpus, load_corpus_dir, write_corpus};
use kitting::dataset::generate_dataset;
use kitting::mesh::load_mesh;
use kitting::render::{parse_kndi_header, render_scene, Placed};
use kitting::suite::{build_trials, run_trials, write_outputs, SuiteConfig};
use kitting::{DepthImage, Error, Pose, Result, TriMesh, UnitQuaternion, Vec3};
use log::warn;
use serde_json::json;

use config::{resolve, resolve_seed, RunConfig};

#[derive(Parser)]
#[command(
    name = "kitting",
    version,
    about = "Rotation-then-translation kitting simulation and evaluation"
)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON config file merged over the defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override one config key, e.g. `--set suite.controller.eta=0.5`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    /// Seed; falls back to the config, then KITNET_SEED, then 0.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; defaults to every available core.
    #[arg(long, short = 'j', global = true)]
    workers: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a labeled rotation-pair dataset.
    GenDataset {
        /// Mesh directory; overrides `corpus` in the config.
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the trial grid and write results.jsonl and summary.csv.
    RunSuite {
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the single trial described by the `trial` config section.
    RunTrial {
        #[arg(long)]
        corpus: Option<PathBuf>,
        /// Also write trial.json and run.json here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Render a mesh to a KNDI depth raster.
    Render {
        mesh: PathBuf,
        /// Rotation quaternion as w,x,y,z.
        #[arg(long, value_delimiter = ',', default_values_t = [1.0, 0.0, 0.0, 0.0], allow_negative_numbers = true)]
        quat: Vec<f64>,
        /// Translation as x,y,z in meters.
        #[arg(long, value_delimiter = ',', default_values_t = [0.0, 0.0, 0.3], allow_negative_numbers = true)]
        translation: Vec<f64>,
        #[arg(long)]
        out: PathBuf,
        /// Also write a 16-bit millimeter PNG next to the raster.
        #[arg(long)]
        png: bool,
    },
    /// Print a KNDI header and depth statistics.
    Inspect { raster: PathBuf },
    /// Write the built-in mesh corpus as OBJ files.
    WriteCorpus { out: PathBuf },
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::InvalidArgument(_) | Error::CorpusNotFound(_) => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = resolve(cli.common.config.as_deref(), &cli.common.overrides)?;
    if cli.common.seed.is_some() {
        cfg.seed = cli.common.seed;
    }
    if cli.common.workers.is_some() {
        cfg.workers = cli.common.workers;
    }
    cfg.seed = Some(resolve_seed(&cfg)?);
    if let Some(n) = cfg.workers {
        if n == 0 {
            return Err(Error::Config("workers must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(e.to_string()))?;
    }
    match cli.command {
        Command::GenDataset { corpus, out } => gen_dataset(cfg, corpus, &out),
        Command::RunSuite { corpus, out } => run_suite(cfg, corpus, &out),
        Command::RunTrial { corpus, out } => run_one(cfg, corpus, out.as_deref()),
        Command::Render {
            mesh,
            quat,
            translation,
            out,
            png,
        } => render(&cfg, &mesh, &quat, &translation, &out, png),
        Command::Inspect { raster } => inspect(&raster),
        Command::WriteCorpus { out } => {
            for id in write_corpus(&out)? {
                println!("{}", out.join(format!("{id}.obj")).display());
            }
            Ok(())
        }
    }
}

fn load_corpus(cfg: &mut RunConfig, flag: Option<PathBuf>) -> Result<Vec<(String, TriMesh)>> {
    if flag.is_some() {
        cfg.corpus = flag;
    }
    match &cfg.corpus {
        Some(dir) => load_corpus_dir(dir),
        None => Ok(builtin_corpus()),
    }
}

fn seed(cfg: &RunConfig) -> u64 {
    cfg.seed.expect("seed is resolved before dispatch")
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(format!("creating {}", dir.display()), e))
}

/// Writes the fully resolved config next to a command's outputs.
fn echo_config(path: &Path, command: &str, cfg: &RunConfig) -> Result<()> {
    echo_config_value(path, command, serde_json::to_value(cfg)?)
}

fn gen_dataset(mut cfg: RunConfig, corpus: Option<PathBuf>, out: &Path) -> Result<()> {
    let meshes = load_corpus(&mut cfg, corpus)?;
    let manifest = generate_dataset(&meshes, &cfg.dataset, out, seed(&cfg))?;
    echo_config(&out.join("run.json"), "gen-dataset", &cfg)?;
    println!("{}", manifest.to_json());
    println!("manifest sha256 {}", manifest.hash());
    Ok(())
}

fn run_suite(mut cfg: RunConfig, corpus: Option<PathBuf>, out: &Path) -> Result<()> {
    let meshes = load_corpus(&mut cfg, corpus)?;
    let trials = build_trials(&meshes, &cfg.suite, seed(&cfg))?;
    let reports = run_trials(&trials)?;
    create_dir(out)?;
    let rows = write_outputs(out, &reports)?;
    echo_config(&out.join("run.json"), "run-suite", &cfg)?;
    let mut stdout = std::io::stdout().lock();
    let _ = writeln!(
        stdout,
        "{:<22} {:<18} {:>6} {:<28} {:>9} {:>9} {:>9}",
        "object", "cavity", "angle", "method", "success", "completed", "mean_fit"
    );
    for r in &rows {
        let _ = writeln!(
            stdout,
            "{:<22} {:<18} {:>6} {:<28} {:>4}/{:<4} {:>9} {:>9}",
            r.object,
            r.cavity_kind.as_str(),
            r.init_angle_deg,
            r.method,
            r.successes,
            r.trials,
            r.completed,
            r.mean_fit.map_or("-".to_string(), |f| format!("{f:.4}")),
        );
    }
    let failed = reports.iter().filter(|r| r.error.is_some()).count();
    if failed > 0 {
        warn!("{failed} of {} trials recorded an error", reports.len());
    }
    Ok(())
}

fn run_one(mut cfg: RunConfig, corpus: Option<PathBuf>, out: Option<&Path>) -> Result<()> {
    let meshes = load_corpus(&mut cfg, corpus)?;
    let t = &cfg.trial;
    let grid = SuiteConfig {
        meshes: vec![t.mesh.clone()],
        cavity_kinds: vec![t.cavity_kind],
        angles_deg: vec![t.angle_deg],
        trials_per_cell: t.index + 1,
        methods: vec![t.method.clone()],
        ..cfg.suite.clone()
    };
    let trials = build_trials(&meshes, &grid, seed(&cfg))?;
    let trial = trials.last().expect("grid has at least one trial");
    let mut report = run_trial(trial)?;
    report.init_angle_deg = t.angle_deg;
    let text = serde_json::to_string_pretty(&report)?;
    if let Some(dir) = out {
        create_dir(dir)?;
        write_file(&dir.join("trial.json"), text.as_bytes())?;
        echo_config(&dir.join("run.json"), "run-trial", &cfg)?;
    }
    println!("{text}");
    Ok(())
}

fn render(
    cfg: &RunConfig,
    mesh_path: &Path,
    quat: &[f64],
    translation: &[f64],
    out: &Path,
    png: bool,
) -> Result<()> {
    if quat.len() != 4 || translation.len() != 3 {
        return Err(Error::InvalidArgument(
            "--quat takes w,x,y,z and --translation takes x,y,z".into(),
        ));
    }
    let mesh = load_mesh(mesh_path, None, cfg.render.scale)?;
    let rotation = UnitQuaternion::new(quat[0], quat[1], quat[2], quat[3])?;
    let pose = Pose::new(
        rotation,
        Vec3::new(translation[0], translation[1], translation[2]),
    );
    let cam = &cfg.render.camera;
    cam.validate()?;
    let img = render_scene(&[Placed { mesh: &mesh, pose }], cfg.render.plane_z, cam);
    if img.foreground_count() == 0 {
        warn!("mesh is outside the view frustum; the raster is empty");
    }
    img.save_kndi(out)?;
    println!("{}", out.display());
    if png {
        let path = out.with_extension("png");
        img.save_png16(&path)?;
        println!("{}", path.display());
    }
    let mut echo = out.as_os_str().to_owned();
    echo.push(".json");
    let mut doc = serde_json::to_value(cfg)?;
    doc["mesh"] = json!(mesh_path);
    doc["quat_wxyz"] = json!(rotation.wxyz());
    doc["translation"] = json!(translation);
    echo_config_value(Path::new(&echo), "render", doc)
}

fn echo_config_value(path: &Path, command: &str, config: serde_json::Value) -> Result<()> {
    let doc = json!({
        "command": command,
        "version": env!("CARGO_PKG_VERSION"),
        "config": config,
    });
    write_file(path, serde_json::to_string_pretty(&doc)?.as_bytes())
}

fn inspect(path: &Path) -> Result<()> {
    let bytes = fs::read(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    let (header, _) = parse_kndi_header(&bytes)?;
    let img = DepthImage::from_kndi_bytes(&bytes)?;
    let fg: Vec<f32> = img.data().iter().copied().filter(|&d| d > 0.0).collect();
    println!("file        {}", path.display());
    println!("size        {} x {}", header.width, header.height);
    println!("reserved    {}", header.reserved);
    println!("foreground  {} of {} pixels", fg.len(), img.data().len());
    if !fg.is_empty() {
        let min = fg.iter().copied().fold(f32::INFINITY, f32::min);
        let max = fg.iter().copied().fold(f32::NEG_INFINITY, f32::max);
        let mean = fg.iter().map(|&d| d as f64).sum::<f64>() / fg.len() as f64;
        println!("depth min   {min:.6} m");
        println!("depth max   {max:.6} m");
        println!("depth mean  {mean:.6} m");
    }
    if let Some((u0, v0, u1, v1)) = img.foreground_bbox() {
        println!("bbox        u {u0}..={u1}, v {v0}..={v1}");
    }
    Ok(())
}
