use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use micp::config::{MapSpec, MicpConfig, RunConfig};
use micp::core::sensor::simulate_scan;
use micp::core::{find_correspondences, micp_converge, Bvh, MicpParams, Scan, SensorRig, Transform};
use micp::harness::{run_sphere_benchmark, CasterKind, SphereBenchmark};
use micp::mesh_io::{save_mesh, MeshFormat};
use micp::serial::{parse_pose, scan_from_csv, scan_to_csv, ModelJson, ResultJson, ScanFile};
use micp::trajectory::{trajectory_mean_error, Trajectory};
use serde::Serialize;

#[derive(Parser)]
#[command(name = "micp", version, about = "Register range scans against triangle mesh maps")]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true, env = "MICP_WORKERS")]
    workers: Option<usize>,
    /// TOML run configuration; command-line flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Correct an initial pose against one or more scans.
    Register(RegisterArgs),
    /// Run the sphere convergence and runtime benchmark.
    Benchmark(BenchmarkArgs),
    /// Simulate a scan from a pose in a map.
    Simulate(SimulateArgs),
    /// Mean translation error of an estimated trajectory.
    EvalTraj(EvalTrajArgs),
    /// Print mesh statistics, optionally converting the mesh.
    MeshInfo(MeshInfoArgs),
}

#[derive(Args, Default)]
struct MicpArgs {
    #[arg(long)]
    max_iterations: Option<usize>,
    #[arg(long)]
    translation_epsilon: Option<f64>,
    #[arg(long)]
    rotation_epsilon: Option<f64>,
    #[arg(long)]
    min_correspondences: Option<usize>,
    #[arg(long)]
    max_projective_distance: Option<f64>,
    #[arg(long)]
    max_range: Option<f64>,
}

impl MicpArgs {
    fn config(&self) -> MicpConfig {
        MicpConfig {
            max_iterations: self.max_iterations,
            translation_epsilon: self.translation_epsilon,
            rotation_epsilon: self.rotation_epsilon,
            min_correspondences: self.min_correspondences,
            max_projective_distance: self.max_projective_distance,
            max_range: self.max_range,
        }
    }
}

#[derive(Args)]
struct RegisterArgs {
    /// Mesh file or generator (sphere:R:FACES, box:X:Y:Z).
    #[arg(long)]
    map: Option<String>,
    /// Scan JSON file, or NAME=FILE binding a JSON/CSV scan to a configured sensor.
    #[arg(long = "scan")]
    scans: Vec<String>,
    /// Initial base pose: "x y z" or "x y z qx qy qz qw".
    #[arg(long, allow_hyphen_values = true)]
    initial_pose: String,
    #[command(flatten)]
    micp: MicpArgs,
    /// Write the result here instead of stdout.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Omit timing fields so output is reproducible.
    #[arg(long)]
    no_timing: bool,
    /// Write the correspondences at the final pose as CSV.
    #[arg(long)]
    dump_correspondences: Option<PathBuf>,
}

#[derive(Args)]
struct BenchmarkArgs {
    /// Comma-separated sphere face counts.
    #[arg(long, value_delimiter = ',')]
    faces: Option<Vec<usize>>,
    #[arg(long)]
    poses: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    max_translation: Option<f64>,
    #[arg(long)]
    max_rotation: Option<f64>,
    /// Sensor layout, e.g. vlp16:900 or planar:360:30.
    #[arg(long)]
    model: Option<String>,
    /// Raycast by exhaustive triangle scan instead of the BVH.
    #[arg(long)]
    brute_force: bool,
    /// Add per-phase time fractions to the CSV.
    #[arg(long)]
    phases: bool,
    /// Include per-pose outcomes in the JSON report.
    #[arg(long)]
    per_pose: bool,
    #[command(flatten)]
    micp: MicpArgs,
    #[arg(long)]
    csv: Option<PathBuf>,
    #[arg(long)]
    json: Option<PathBuf>,
    #[arg(long)]
    no_timing: bool,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    map: Option<String>,
    /// Base pose to scan from.
    #[arg(long, allow_hyphen_values = true)]
    pose: String,
    /// Sensor layout, e.g. vlp16:900 or planar:360:30 (default: first configured sensor).
    #[arg(long)]
    model: Option<String>,
    /// Name of a configured sensor.
    #[arg(long)]
    sensor: Option<String>,
    /// Sensor-to-base transform for --model.
    #[arg(long, allow_hyphen_values = true)]
    sensor_to_base: Option<String>,
    /// Range noise standard deviation, meters.
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    #[arg(long)]
    seed: Option<u64>,
    /// Output file; `.csv` writes ranges only, anything else the JSON container.
    #[arg(long)]
    output: PathBuf,
}

#[derive(Args)]
struct EvalTrajArgs {
    #[arg(long)]
    truth: PathBuf,
    #[arg(long)]
    estimate: PathBuf,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct MeshInfoArgs {
    /// Mesh file or generator spec.
    map: String,
    /// Write the mesh to this path (format from the extension).
    #[arg(long)]
    save: Option<PathBuf>,
    /// Use the ASCII flavor of PLY/STL when saving.
    #[arg(long)]
    ascii: bool,
}

enum Outcome {
    Done,
    NotConverged,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(Outcome::Done) => ExitCode::SUCCESS,
        Ok(Outcome::NotConverged) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: Cli) -> Result<Outcome> {
    let config = match &cli.config {
        Some(path) => RunConfig::load(path).with_context(|| format!("loading config {}", path.display()))?,
        None => RunConfig::default(),
    };
    if let Some(workers) = cli.workers.or(config.workers) {
        if workers == 0 {
            bail!("workers must be at least 1");
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build_global()
            .context("configuring worker threads")?;
    }
    match cli.command {
        Command::Register(args) => register(&config, args),
        Command::Benchmark(args) => benchmark(&config, args),
        Command::Simulate(args) => simulate(&config, args),
        Command::EvalTraj(args) => eval_traj(args),
        Command::MeshInfo(args) => mesh_info(args),
    }
}

fn map_spec(config: &RunConfig, cli: Option<&str>) -> Result<MapSpec> {
    match cli {
        Some(spec) => Ok(spec.parse()?),
        None => config
            .map_spec()?
            .ok_or_else(|| anyhow!("no map given (--map or `map` in the config)")),
    }
}

fn parse_model(text: &str) -> Result<ModelJson> {
    let parts: Vec<&str> = text.split(':').collect();
    let model = match parts.as_slice() {
        ["vlp16", n] => ModelJson::Vlp16 {
            n_horizontal: n.parse()?,
        },
        ["planar", n, r] => ModelJson::Planar {
            n_horizontal: n.parse()?,
            range_max: r.parse()?,
        },
        _ => bail!("unknown model {text:?}; expected vlp16:COLUMNS or planar:COLUMNS:RANGE"),
    };
    model.to_model()?;
    Ok(model)
}

fn emit(text: &str, output: Option<&Path>) -> Result<()> {
    match output {
        Some(path) => fs::write(path, text).with_context(|| format!("writing {}", path.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn to_json<T: Serialize>(value: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(value)? + "\n")
}

/// Resolves every `--scan` argument (or the configured sensors' scan
/// files) into a rig and its scan.
fn load_scans(config: &RunConfig, args: &[String]) -> Result<(Vec<SensorRig>, Vec<Scan>)> {
    let mut rigs = Vec::new();
    let mut scans = Vec::new();
    let mut push_file = |rig: Option<SensorRig>, path: &Path| -> Result<()> {
        let is_csv = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"));
        let (rig, scan) = if is_csv {
            let rig = rig.ok_or_else(|| anyhow!("CSV scan {} needs a configured sensor", path.display()))?;
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            let scan = scan_from_csv(&text, rig.model()).with_context(|| format!("parsing {}", path.display()))?;
            (rig, scan)
        } else {
            let file = ScanFile::load(path).with_context(|| format!("loading {}", path.display()))?;
            let rig = match rig {
                Some(r) => r,
                None => file.rig()?,
            };
            let scan = file
                .scan(rig.model())
                .with_context(|| format!("scan {}", path.display()))?;
            (rig, scan)
        };
        rigs.push(rig);
        scans.push(scan);
        Ok(())
    };

    if args.is_empty() {
        for sensor in &config.sensors {
            let path = sensor
                .scan
                .as_ref()
                .ok_or_else(|| anyhow!("configured sensor {:?} has no scan file", sensor.name))?;
            push_file(Some(sensor.rig()?), &config.resolve(path))?;
        }
    }
    for arg in args {
        match arg.split_once('=') {
            Some((name, file)) => {
                let sensor = config
                    .sensors
                    .iter()
                    .find(|s| s.name.as_deref() == Some(name))
                    .ok_or_else(|| anyhow!("no configured sensor named {name:?}"))?;
                push_file(Some(sensor.rig()?), Path::new(file))?;
            }
            None => push_file(None, Path::new(arg))?,
        }
    }
    if rigs.is_empty() {
        bail!("no scans given (--scan or sensors with `scan` in the config)");
    }
    Ok((rigs, scans))
}

fn register(config: &RunConfig, args: RegisterArgs) -> Result<Outcome> {
    let params = config.micp.overlay(&args.micp.config()).params()?;
    let initial = parse_pose(&args.initial_pose)?;
    let (rigs, scans) = load_scans(config, &args.scans)?;
    let mesh = map_spec(config, args.map.as_deref())?.load()?;
    let bvh = Bvh::build(&mesh);
    let result = micp_converge(&bvh, &rigs, &scans, &initial, &params)?;

    if let Some(path) = &args.dump_correspondences {
        let mut csv = String::from("sensor,ray,scan_x,scan_y,scan_z,map_x,map_y,map_z,projective_distance\n");
        for (k, (rig, scan)) in rigs.iter().zip(&scans).enumerate() {
            let corr = find_correspondences(&bvh, rig, scan, &result.pose, &params.spc)?;
            for i in 0..corr.len() {
                let (s, m) = (corr.scan_points[i], corr.map_points[i]);
                csv.push_str(&format!(
                    "{k},{},{},{},{},{},{},{},{}\n",
                    corr.ray_indices[i], s.x, s.y, s.z, m.x, m.y, m.z, corr.projective_distances[i]
                ));
            }
        }
        fs::write(path, csv).with_context(|| format!("writing {}", path.display()))?;
    }
    emit(
        &to_json(&ResultJson::new(&result, !args.no_timing))?,
        args.output.as_deref(),
    )?;
    Ok(if result.converged {
        Outcome::Done
    } else {
        Outcome::NotConverged
    })
}

fn benchmark(config: &RunConfig, args: BenchmarkArgs) -> Result<Outcome> {
    let file = &config.benchmark;
    let defaults = SphereBenchmark::default();
    let model = match (&args.model, &file.model) {
        (Some(text), _) => parse_model(text)?.to_model()?,
        (None, Some(m)) => m.to_model()?,
        (None, None) => defaults.model.clone(),
    };
    let params: MicpParams = config.micp.overlay(&args.micp.config()).params()?;
    let bench = SphereBenchmark {
        face_counts: args
            .faces
            .or_else(|| file.face_counts.clone())
            .unwrap_or(defaults.face_counts),
        poses: args.poses.or(file.poses).unwrap_or(defaults.poses),
        model,
        radius: file.radius.unwrap_or(defaults.radius),
        max_translation: args
            .max_translation
            .or(file.max_translation)
            .unwrap_or(defaults.max_translation),
        max_rotation: args.max_rotation.or(file.max_rotation).unwrap_or(defaults.max_rotation),
        params,
        seed: args.seed.or(config.seed).unwrap_or(defaults.seed),
        caster: if args.brute_force {
            CasterKind::BruteForce
        } else {
            CasterKind::Bvh
        },
        success_tolerance: file.success_tolerance.unwrap_or(defaults.success_tolerance),
    };
    if bench.poses == 0 {
        bail!("poses must be at least 1");
    }
    let mut report = run_sphere_benchmark(&bench)?;
    if args.no_timing {
        report.normalize_timing();
    }
    if !args.per_pose {
        report = report.without_outcomes();
    }
    let json = to_json(&report)?;
    let csv = report.to_csv(args.phases);
    if let Some(path) = &args.json {
        fs::write(path, &json).with_context(|| format!("writing {}", path.display()))?;
    }
    match &args.csv {
        Some(path) => fs::write(path, &csv).with_context(|| format!("writing {}", path.display()))?,
        None if args.json.is_none() => print!("{csv}"),
        None => {}
    }
    Ok(Outcome::Done)
}

fn simulate(config: &RunConfig, args: SimulateArgs) -> Result<Outcome> {
    let rig = match (&args.model, &args.sensor) {
        (Some(text), _) => {
            let sensor_to_base = match &args.sensor_to_base {
                Some(p) => parse_pose(p)?,
                None => Transform::identity(),
            };
            SensorRig::new(parse_model(text)?.to_model()?, sensor_to_base)?
        }
        (None, Some(name)) => config
            .sensors
            .iter()
            .find(|s| s.name.as_deref() == Some(name))
            .ok_or_else(|| anyhow!("no configured sensor named {name:?}"))?
            .rig()?,
        (None, None) => config
            .sensors
            .first()
            .ok_or_else(|| anyhow!("no sensor given (--model, --sensor or [[sensors]] in the config)"))?
            .rig()?,
    };
    let pose = parse_pose(&args.pose)?;
    let mesh = map_spec(config, args.map.as_deref())?.load()?;
    let bvh = Bvh::build(&mesh);
    let seed = args.seed.or(config.seed).unwrap_or(0);
    let scan = simulate_scan(&bvh, rig.model(), &pose.compose(rig.sensor_to_base()), args.noise, seed)?;
    let is_csv = args.output.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"));
    if is_csv {
        fs::write(&args.output, scan_to_csv(&scan)).with_context(|| format!("writing {}", args.output.display()))?;
    } else {
        ScanFile::new(&rig, &scan).save(&args.output)?;
    }
    Ok(Outcome::Done)
}

#[derive(Serialize)]
struct TrajectoryReport {
    mean_error: f64,
    samples: usize,
}

fn eval_traj(args: EvalTrajArgs) -> Result<Outcome> {
    let truth = Trajectory::load(&args.truth).with_context(|| format!("reading {}", args.truth.display()))?;
    let estimate = Trajectory::load(&args.estimate).with_context(|| format!("reading {}", args.estimate.display()))?;
    let report = TrajectoryReport {
        mean_error: trajectory_mean_error(&estimate, &truth)?,
        samples: estimate.len(),
    };
    emit(&to_json(&report)?, args.output.as_deref())?;
    Ok(Outcome::Done)
}

#[derive(Serialize)]
struct MeshReport {
    vertex_count: usize,
    face_count: usize,
    bounds_min: [f64; 3],
    bounds_max: [f64; 3],
    surface_area: f64,
}

fn mesh_info(args: MeshInfoArgs) -> Result<Outcome> {
    let mesh = args.map.parse::<MapSpec>()?.load()?;
    if let Some(path) = &args.save {
        let format = match (MeshFormat::from_extension(path), args.ascii) {
            (Some(MeshFormat::PlyBinary), true) => MeshFormat::PlyAscii,
            (Some(MeshFormat::StlBinary), true) => MeshFormat::StlAscii,
            (Some(f), _) => f,
            (None, _) => bail!("cannot infer a mesh format from {}", path.display()),
        };
        save_mesh(&mesh, path, format)?;
    }
    let stats = mesh.stats();
    let report = MeshReport {
        vertex_count: stats.vertex_count,
        face_count: stats.face_count,
        bounds_min: stats.bounds_min.into(),
        bounds_max: stats.bounds_max.into(),
        surface_area: stats.surface_area,
    };
    emit(&to_json(&report)?, None)?;
    Ok(Outcome::Done)
}
