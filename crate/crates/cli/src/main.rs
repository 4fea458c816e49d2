//! `mt3`: command-line front end to the retrieval-and-transfer pipeline.
//!
//! Exit codes: 0 success, 2 input or configuration error, 3 the query names a
//! skill or workspace region the dataset cannot serve, 1 anything else.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use mt3_core::policies::{simulate_alignment_trajectories, DEFAULT_TRAJECTORY_COUNT};
use mt3_core::registration::{register_clouds, RegistrationParams};
use mt3_core::retrieval::{hierarchical_retrieve, rank_candidates};
use mt3_core::sim::{
    default_camera, generate, randomize_scene, record_demo, run_rollout, Category, RenderSpec, RolloutOptions,
    SceneMode, TaskSpec,
};
use mt3_core::stats::{
    emit_report, failure_histogram, read_traces, render_csv, render_failure_svg, render_svg, run_experiment,
    table_from_traces, ExperimentConfig,
};
use mt3_core::store::{format_cloud, read_cloud_file, read_trajectory_file, Dataset, DemoInput, StoreConfig};
use mt3_core::{Error, Pose, Vec3};

#[derive(Parser, Serialize)]
#[command(name = "mt3", version, about = "Retrieve a demonstration, align it to the scene, replay it")]
struct Cli {
    /// Worker threads; results do not depend on it. Defaults to all cores.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Serialize)]
#[serde(rename_all = "kebab-case", tag = "command")]
enum Command {
    /// Add one demonstration to a dataset (created if missing).
    Ingest(IngestArgs),
    /// Find the demonstration best matching a description and object cloud.
    Retrieve(RetrieveArgs),
    /// Estimate the rigid transform taking one cloud onto another.
    Register(RegisterArgs),
    /// Run one simulated rollout against a dataset.
    Rollout(RolloutArgs),
    /// Run a dataset-size, diversity or thousand-task experiment.
    Evaluate(EvaluateArgs),
    /// Rebuild the success table and charts from a trace file.
    Report(ReportArgs),
    /// Sample a simulated scene; optionally record a scripted demonstration.
    GenScene(GenSceneArgs),
    /// Export simulated alignment trajectories for one demonstration.
    GenAlignData(GenAlignArgs),
}

#[derive(Args, Serialize)]
struct DatasetArg {
    /// Dataset directory.
    #[arg(long, env = "MT3_DATASET")]
    dataset: PathBuf,
}

#[derive(Args, Serialize)]
struct IngestArgs {
    #[command(flatten)]
    dataset: DatasetArg,
    /// Demonstration id, unique within the dataset.
    #[arg(long)]
    id: String,
    /// Natural-language task description.
    #[arg(long)]
    description: String,
    /// Object cloud: a point count line, then `x y z` rows.
    #[arg(long)]
    cloud: PathBuf,
    /// Trajectory rows `t tx ty tz qw qx qy qz g`.
    #[arg(long)]
    trajectory: PathBuf,
    /// Ground-truth object instance id, if known.
    #[arg(long)]
    instance: Option<String>,
    /// Ground-truth object pose `tx,ty,tz,qw,qx,qy,qz`, if known.
    #[arg(long, value_parser = parse_pose)]
    object_pose: Option<Pose>,
}

#[derive(Args, Serialize)]
struct RetrieveArgs {
    #[command(flatten)]
    dataset: DatasetArg,
    /// Task description; its micro skill selects the candidates.
    #[arg(long)]
    description: String,
    /// Observed object cloud, same format as for `ingest`.
    #[arg(long)]
    cloud: PathBuf,
    /// Print the best N candidates instead of the single best match.
    #[arg(long)]
    top: Option<usize>,
}

#[derive(Args, Serialize)]
struct RegisterArgs {
    /// Cloud to move (the demonstration's object).
    #[arg(long)]
    source: PathBuf,
    /// Cloud to align onto (the observed object).
    #[arg(long)]
    target: PathBuf,
    /// Sensor position `x,y,z` shared by both clouds.
    #[arg(long, value_parser = parse_vec3, conflicts_with = "head_camera")]
    viewpoint: Option<Vec3>,
    /// Use the simulator's head camera as the viewpoint.
    #[arg(long)]
    head_camera: bool,
    /// Correspondence radius of the final refinement, metres.
    #[arg(long)]
    inlier_radius: Option<f64>,
    /// Write `source_aligned.txt` and `target.txt` here for side-by-side viewing.
    #[arg(long)]
    aligned_out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum ModeArg {
    Controlled,
    Thousand,
}

impl From<ModeArg> for SceneMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Controlled => SceneMode::Controlled,
            ModeArg::Thousand => SceneMode::Thousand,
        }
    }
}

#[derive(Args, Serialize)]
struct SceneArgs {
    /// Object family: mug, box, pan, bottle, tray, kettle.
    #[arg(long, value_parser = parse_category)]
    category: Category,
    /// Seed of the generated object instance.
    #[arg(long, default_value_t = 0)]
    instance_seed: u64,
    /// Seed of the placement, description and sensor noise.
    #[arg(long, default_value_t = 0)]
    scene_seed: u64,
    /// `controlled`: ±180° yaw, noiseless; `thousand`: ±45° yaw, 1 mm noise.
    #[arg(long, value_enum, default_value = "controlled")]
    mode: ModeArg,
    /// Fraction of the cloud's clusters masked out.
    #[arg(long, default_value_t = 0.0)]
    occlusion: f64,
}

#[derive(Args, Serialize)]
struct RolloutArgs {
    #[command(flatten)]
    dataset: DatasetArg,
    #[command(flatten)]
    scene: SceneArgs,
    /// Replace the estimated object motion with the ground truth.
    #[arg(long)]
    gt_delta: bool,
}

#[derive(Args, Serialize)]
struct EvaluateArgs {
    /// Experiment configuration (JSON, same schema as the summary's config).
    #[arg(long)]
    config: PathBuf,
    /// Report directory.
    #[arg(long)]
    out: PathBuf,
    /// Override the configuration's seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Serialize)]
struct ReportArgs {
    /// JSON-lines trace written by `evaluate`.
    #[arg(long)]
    traces: PathBuf,
    /// Directory for `results.csv`, `success.svg` and `failures.svg`.
    #[arg(long)]
    out: PathBuf,
    /// Add one row per object family.
    #[arg(long)]
    per_family: bool,
}

#[derive(Args, Serialize)]
struct GenSceneArgs {
    #[command(flatten)]
    scene: SceneArgs,
    /// Write the observed cloud here.
    #[arg(long)]
    cloud_out: Option<PathBuf>,
    /// Record the scripted demonstration into this dataset.
    #[arg(long)]
    record: Option<PathBuf>,
    /// Id of the recorded demonstration; defaults to `<category>-<scene seed>`.
    #[arg(long)]
    id: Option<String>,
}

#[derive(Args, Serialize)]
struct GenAlignArgs {
    #[command(flatten)]
    dataset: DatasetArg,
    /// Id of the demonstration whose alignment target is used.
    #[arg(long)]
    demo: String,
    #[arg(long, default_value_t = DEFAULT_TRAJECTORY_COUNT)]
    count: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// JSON-lines output, one trajectory per line.
    #[arg(long)]
    out: PathBuf,
}

fn parse_floats<const N: usize>(s: &str) -> Result<[f64; N], String> {
    let v: Vec<f64> = s
        .split(',')
        .map(|x| x.trim().parse::<f64>().map_err(|e| format!("{x:?}: {e}")))
        .collect::<Result<_, _>>()?;
    v.try_into().map_err(|v: Vec<f64>| format!("expected {N} comma-separated numbers, got {}", v.len()))
}

fn parse_pose(s: &str) -> Result<Pose, String> {
    let a = parse_floats::<7>(s)?;
    let q = a[3..].iter().map(|x| x * x).sum::<f64>().sqrt();
    if !(q > 1e-9 && a.iter().all(|x| x.is_finite())) {
        return Err("pose needs a finite translation and a non-zero quaternion".into());
    }
    Ok(Pose::from_array(a))
}

fn parse_vec3(s: &str) -> Result<Vec3, String> {
    let a = parse_floats::<3>(s)?;
    Ok(Vec3::new(a[0], a[1], a[2]))
}

fn parse_category(s: &str) -> Result<Category, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

/// Failure with its exit code.
struct Failure(u8, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match &e {
            e if e.is_retrieval_domain() => 3,
            Error::EmptyDataset => 3,
            Error::NoCorrespondences | Error::NothingVisible | Error::ZeroEmbedding | Error::OutOfRange(_) => 1,
            _ => 2,
        };
        Failure(code, e.to_string())
    }
}

type CmdResult = Result<(), Failure>;

fn print_json<T: Serialize>(value: &T) -> CmdResult {
    let json = serde_json::to_string_pretty(value).map_err(|e| Failure(1, e.to_string()))?;
    println!("{json}");
    Ok(())
}

fn write_file(path: &Path, contents: &[u8]) -> CmdResult {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Failure(2, format!("{}: {e}", dir.display())))?;
    }
    fs::write(path, contents).map_err(|e| Failure(2, format!("{}: {e}", path.display())))
}

fn open_or_create(dir: &Path) -> Result<Dataset, Error> {
    if dir.join(mt3_core::store::MANIFEST_FILE).exists() {
        Dataset::load(dir)
    } else {
        Dataset::new(StoreConfig::default())
    }
}

fn ingest(a: &IngestArgs) -> CmdResult {
    let mut ds = open_or_create(&a.dataset.dataset)?;
    let input = DemoInput {
        id: a.id.clone(),
        description: a.description.clone(),
        object_cloud: read_cloud_file(&a.cloud)?,
        trajectory: read_trajectory_file(&a.trajectory)?,
        object_instance_id: a.instance.clone(),
        object_pose: a.object_pose,
    };
    let id = ds.ingest(input)?.id.clone();
    ds.save(&a.dataset.dataset)?;
    println!("{id}");
    Ok(())
}

fn retrieve(a: &RetrieveArgs) -> CmdResult {
    let ds = Dataset::load(&a.dataset.dataset)?;
    let cloud = read_cloud_file(&a.cloud)?;
    match a.top {
        Some(n) => {
            let mut ranked = rank_candidates(&ds, &a.description, &cloud)?;
            ranked.truncate(n);
            print_json(&ranked)
        }
        None => print_json(&hierarchical_retrieve(&ds, &a.description, &cloud)?),
    }
}

fn register(a: &RegisterArgs) -> CmdResult {
    let source = read_cloud_file(&a.source)?;
    let target = read_cloud_file(&a.target)?;
    let mut params = RegistrationParams {
        viewpoint: a.viewpoint.or(a.head_camera.then(|| *default_camera().translation())),
        ..RegistrationParams::default()
    };
    if let Some(r) = a.inlier_radius {
        if !(r > 0.0 && r.is_finite()) {
            return Err(Failure(2, format!("--inlier-radius must be positive, got {r}")));
        }
        params.gicp.inlier_radius = r;
    }
    let result = register_clouds(&source, &target, &params)?;
    if let Some(dir) = &a.aligned_out {
        let moved = mt3_core::se3::transform_cloud(&result.delta, &source)?;
        write_file(&dir.join("source_aligned.txt"), format_cloud(&moved).as_bytes())?;
        write_file(&dir.join("target.txt"), format_cloud(&target).as_bytes())?;
    }
    print_json(&result)
}

fn scene(a: &SceneArgs) -> Result<(TaskSpec, mt3_core::sim::SceneSpec), Failure> {
    if !(0.0..=1.0).contains(&a.occlusion) {
        return Err(Failure(2, format!("--occlusion must lie in [0, 1], got {}", a.occlusion)));
    }
    let task = TaskSpec::for_category(a.category);
    let instance = generate(a.category, a.instance_seed);
    let scene = randomize_scene(&task, &instance, a.mode.into(), a.scene_seed).with_occlusion(a.occlusion);
    Ok((task, scene))
}

fn rollout(a: &RolloutArgs) -> CmdResult {
    let ds = Dataset::load(&a.dataset.dataset)?;
    let (task, scene) = scene(&a.scene)?;
    let options = RolloutOptions {
        use_gt_delta: a.gt_delta,
        ..RolloutOptions::default()
    };
    print_json(&run_rollout(&ds, &task, &scene, &options)?)
}

fn evaluate(a: &EvaluateArgs) -> CmdResult {
    let text = fs::read_to_string(&a.config).map_err(|e| Failure(2, format!("{}: {e}", a.config.display())))?;
    let mut config: ExperimentConfig =
        serde_json::from_str(&text).map_err(|e| Failure(2, format!("{}: {e}", a.config.display())))?;
    if let Some(seed) = a.seed {
        config.seed = seed;
    }
    eprintln!("experiment: {}", serde_json::to_string(&config).expect("config serializes"));
    let output = run_experiment(&config)?;
    emit_report(&a.out, &output)?;
    for r in &output.table.rows {
        println!("{}: {}/{} = {:.3} [{:.3}, {:.3}]", r.label, r.k, r.n, r.phat, r.lo, r.hi);
    }
    Ok(())
}

fn report(a: &ReportArgs) -> CmdResult {
    let traces = read_traces(&a.traces)?;
    let table = table_from_traces(&traces, a.per_family)?;
    if table.rows.is_empty() {
        return Err(Failure(2, format!("{}: no rollouts", a.traces.display())));
    }
    write_file(&a.out.join("results.csv"), render_csv(&table)?.as_bytes())?;
    write_file(&a.out.join("success.svg"), render_svg(&table, "Success rate (95% Wilson CI)").as_bytes())?;
    let mut order: Vec<String> = Vec::new();
    for t in &traces {
        if !order.contains(&t.condition) {
            order.push(t.condition.clone());
        }
    }
    let hist = failure_histogram(&traces);
    write_file(&a.out.join("failures.svg"), render_failure_svg(&hist, &order).as_bytes())?;
    for r in &table.rows {
        println!("{}: {}/{} = {:.3} [{:.3}, {:.3}]", r.label, r.k, r.n, r.phat, r.lo, r.hi);
    }
    Ok(())
}

fn gen_scene(a: &GenSceneArgs) -> CmdResult {
    let (task, scene) = scene(&a.scene)?;
    let render = RenderSpec::default();
    if let Some(path) = &a.cloud_out {
        write_file(path, format_cloud(&scene.observe(&render)?).as_bytes())?;
    }
    let mut recorded = None;
    if let Some(dir) = &a.record {
        let mut ds = open_or_create(dir)?;
        let id = a.id.clone().unwrap_or_else(|| format!("{}-{}", a.scene.category, a.scene.scene_seed));
        let input = record_demo(&task, &scene, &id, &render)?;
        recorded = Some(ds.ingest(input)?.id.clone());
        ds.save(dir)?;
    }
    #[derive(Serialize)]
    struct Out<'a> {
        scene: &'a mt3_core::sim::SceneSpec,
        description: String,
        recorded: Option<String>,
    }
    print_json(&Out {
        scene: &scene,
        description: task.describe(scene.rng_seed),
        recorded,
    })
}

fn gen_align_data(a: &GenAlignArgs) -> CmdResult {
    let ds = Dataset::load(&a.dataset.dataset)?;
    let demo = ds.get(&a.demo).ok_or_else(|| Error::UnknownDemo(a.demo.clone()))?;
    let trajectories = simulate_alignment_trajectories(demo, a.count, a.seed)?;
    let mut out = Vec::new();
    for t in &trajectories {
        serde_json::to_writer(&mut out, t).map_err(|e| Failure(1, e.to_string()))?;
        out.push(b'\n');
    }
    write_file(&a.out, &out)?;
    println!("{} trajectories -> {}", trajectories.len(), a.out.display());
    Ok(())
}

fn run(cli: &Cli) -> CmdResult {
    match &cli.command {
        Command::Ingest(a) => ingest(a),
        Command::Retrieve(a) => retrieve(a),
        Command::Register(a) => register(a),
        Command::Rollout(a) => rollout(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Report(a) => report(a),
        Command::GenScene(a) => gen_scene(a),
        Command::GenAlignData(a) => gen_align_data(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    eprintln!("config: {}", serde_json::to_string(&cli).expect("arguments serialize"));
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.jobs {
        if n == 0 {
            eprintln!("error: --jobs must be at least 1");
            return ExitCode::from(2);
        }
        pool = pool.num_threads(n);
    }
    let pool = match pool.build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    match pool.install(|| run(&cli)) {
        Ok(()) => {
            let _ = std::io::stdout().flush();
            ExitCode::SUCCESS
        }
        Err(Failure(code, message)) => {
            eprintln!("error: {message}");
            ExitCode::from(code)
        }
    }
}
