//! Command-line front end for toponav.

pub mod config;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use toponav_core::sim::{
    episode_start, eval::aggregate, eval::eval_episodes, record_trajectory, run_episode, write_eval_csv, EpisodeConfig, EvalSpec, RouteSpec, SparsitySetting,
};
use toponav_core::stream::{read_stream_file, write_stream_file};
use toponav_core::{
    build_map, calibrate_thresholds, optimize, Error, GlobalDescriptor, NodeId, Phase, Result, Session, SimWorld,
    SimilarityScore, StepEvent, TopologicalMap,
};

pub use config::{RunConfig, ThresholdArgs};

pub const EXIT_OK: u8 = 0;
pub const EXIT_FAILURE: u8 = 1;
pub const EXIT_FORMAT: u8 = 2;
pub const EXIT_CONFIG: u8 = 3;
pub const EXIT_GOAL_NOT_IN_MAP: u8 = 4;
pub const EXIT_LOCALIZATION_FAILED: u8 = 5;

#[derive(Debug, Parser)]
#[command(name = "toponav", version, about = "Topological mapping and navigation on descriptor streams")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build a map from a descriptor stream.
    Build(BuildArgs),
    /// Merge duplicate nodes and contract redundant chain nodes.
    Optimize(OptimizeArgs),
    /// Export a map for visualization.
    Export(ExportArgs),
    /// Replay a descriptor stream through the navigator.
    Navigate(NavigateArgs),
    /// Suggest thresholds from a stream's similarity statistics.
    Calibrate(CalibrateArgs),
    /// Synthetic world: record teach runs, run episodes, evaluate.
    #[command(subcommand)]
    Sim(SimCommand),
}

#[derive(Debug, Args)]
pub struct Common {
    /// JSON run configuration; flags take precedence over it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub thresholds: ThresholdArgs,
}

#[derive(Debug, Args)]
pub struct BuildArgs {
    #[arg(long)]
    pub stream: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Per-frame build events as JSON lines.
    #[arg(long)]
    pub log: Option<PathBuf>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct OptimizeArgs {
    #[arg(long)]
    pub map: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0.95)]
    pub merge: f64,
    #[arg(long, default_value_t = 0.90)]
    pub sparsify: f64,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum ExportFormat {
    Dot,
    Json,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    #[arg(long)]
    pub map: PathBuf,
    #[arg(long, value_enum, default_value = "dot")]
    pub format: ExportFormat,
    /// Defaults to stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
#[group(id = "goal", required = true, multiple = false)]
pub struct GoalArgs {
    /// Use the full descriptor of this frame of the replayed stream as the goal.
    #[arg(long, group = "goal")]
    pub goal_frame: Option<u64>,
    #[arg(long, group = "goal")]
    pub goal_node: Option<NodeId>,
    /// JSON array holding the goal descriptor.
    #[arg(long, group = "goal")]
    pub goal_descriptor: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct NavigateArgs {
    #[arg(long)]
    pub map: PathBuf,
    #[arg(long)]
    pub stream: PathBuf,
    #[command(flatten)]
    pub goal: GoalArgs,
    /// Per-step actions and events as JSON lines; defaults to stdout.
    #[arg(long)]
    pub log: Option<PathBuf>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    #[arg(long)]
    pub stream: PathBuf,
    /// Frame gap at which two frames should count as different places.
    #[arg(long)]
    pub gap: usize,
    /// Defaults to stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum SimCommand {
    /// Drive the teach follower along a route and write its stream.
    Record(RecordArgs),
    /// Run one closed-loop episode against a map.
    Episode(EpisodeArgs),
    /// Success rates over routes, seeds and densities, as CSV.
    Eval(EvalArgs),
}

#[derive(Debug, Args)]
pub struct SimCommon {
    /// World seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Record every n-th follower step.
    #[arg(long)]
    pub stride: Option<usize>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct RecordArgs {
    /// Built-in route name (easy, moderate, hard, square_loop) or route JSON file.
    #[arg(long)]
    pub route: String,
    #[arg(long)]
    pub out: PathBuf,
    /// Teach poses as CSV.
    #[arg(long)]
    pub poses: Option<PathBuf>,
    #[command(flatten)]
    pub sim: SimCommon,
}

#[derive(Debug, Args)]
pub struct EpisodeArgs {
    #[arg(long)]
    pub route: String,
    #[arg(long)]
    pub map: PathBuf,
    /// Defaults to the last node.
    #[arg(long)]
    pub goal_node: Option<NodeId>,
    /// Episode index; selects the perturbed start.
    #[arg(long, default_value_t = 0)]
    pub episode: usize,
    #[arg(long)]
    pub start_perturbation: Option<f64>,
    #[arg(long)]
    pub log: Option<PathBuf>,
    /// Pose trace as CSV.
    #[arg(long)]
    pub trace: Option<PathBuf>,
    #[command(flatten)]
    pub sim: SimCommon,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Repeatable; defaults to easy, moderate and hard.
    #[arg(long)]
    pub route: Vec<String>,
    /// Density settings by name: sparse, dense.
    #[arg(long, value_delimiter = ',')]
    pub settings: Vec<String>,
    /// Number of world seeds, counted up from --seed.
    #[arg(long)]
    pub seeds: Option<u64>,
    #[arg(long)]
    pub episodes: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub sim: SimCommon,
}

/// Maps an error to the process exit code.
pub fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Format { .. }
        | Error::Version(_)
        | Error::InvalidMap(_)
        | Error::InvalidDescriptor(_)
        | Error::ZeroNorm
        | Error::NonMonotonicFrame { .. }
        | Error::MissingSegments => EXIT_FORMAT,
        Error::Config(_)
        | Error::BadThresholds { .. }
        | Error::DimMismatch { .. }
        | Error::UnknownNode(_)
        | Error::StreamTooShort { .. }
        | Error::UnreachableWaypoint { .. } => EXIT_CONFIG,
        Error::GoalNotInMap { .. } => EXIT_GOAL_NOT_IN_MAP,
        _ => EXIT_FAILURE,
    }
}

/// Parses `args` and runs the command, printing errors to stderr.
pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_FORMAT } else { EXIT_OK });
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

pub fn run(cli: Cli) -> Result<u8> {
    match cli.command {
        Command::Build(a) => cmd_build(&a),
        Command::Optimize(a) => cmd_optimize(&a),
        Command::Export(a) => cmd_export(&a),
        Command::Navigate(a) => cmd_navigate(&a),
        Command::Calibrate(a) => cmd_calibrate(&a),
        Command::Sim(SimCommand::Record(a)) => cmd_record(&a),
        Command::Sim(SimCommand::Episode(a)) => cmd_episode(&a),
        Command::Sim(SimCommand::Eval(a)) => cmd_eval(&a),
    }
}

fn effective_config(common: &Common) -> Result<RunConfig> {
    let mut cfg = RunConfig::load(common.config.as_deref())?;
    common.thresholds.apply(&mut cfg.thresholds);
    Ok(cfg)
}

fn effective_sim_config(sim: &SimCommon) -> Result<RunConfig> {
    let mut cfg = effective_config(&sim.common)?;
    if let Some(seed) = sim.seed {
        cfg.seed = seed;
    }
    if let Some(stride) = sim.stride {
        cfg.frame_stride = stride;
    }
    cfg.sim.seed = cfg.seed;
    Ok(cfg)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

fn write_json_lines<T: serde::Serialize>(mut w: impl Write, items: impl IntoIterator<Item = T>) -> Result<()> {
    for item in items {
        serde_json::to_writer(&mut w, &item).map_err(|e| Error::Config(e.to_string()))?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn cmd_build(a: &BuildArgs) -> Result<u8> {
    let cfg = effective_config(&a.common)?;
    cfg.thresholds.validate()?;
    let stream = read_stream_file(&a.stream)?;
    let out = build_map(&stream, cfg.thresholds.clone())?;
    out.map.write_file(&a.out)?;
    if let Some(log) = &a.log {
        write_json_lines(create(log)?, &out.log)?;
        cfg.write_sidecar(log)?;
    }
    println!(
        "nodes={} arcs={} loops={}",
        out.map.len(),
        out.map.arc_count(),
        out.loop_closures()
    );
    Ok(EXIT_OK)
}

pub fn cmd_optimize(a: &OptimizeArgs) -> Result<u8> {
    let map = TopologicalMap::read_file(&a.map)?;
    let opt = optimize(&map, SimilarityScore::new(a.merge), SimilarityScore::new(a.sparsify))?;
    opt.write_file(&a.out)?;
    println!("nodes: {} → {}", map.len(), opt.len());
    Ok(EXIT_OK)
}

pub fn cmd_export(a: &ExportArgs) -> Result<u8> {
    let map = TopologicalMap::read_file(&a.map)?;
    let text = match a.format {
        ExportFormat::Dot => map.to_dot(),
        ExportFormat::Json => map.to_json(),
    };
    match &a.out {
        Some(p) => std::fs::write(p, text)?,
        None => print!("{text}"),
    }
    Ok(EXIT_OK)
}

pub fn cmd_calibrate(a: &CalibrateArgs) -> Result<u8> {
    let stream = read_stream_file(&a.stream)?;
    let cfg = calibrate_thresholds(&stream, a.gap)?;
    let mut text = serde_json::to_string_pretty(&cfg).expect("thresholds serialize");
    text.push('\n');
    match &a.out {
        Some(p) => std::fs::write(p, text)?,
        None => print!("{text}"),
    }
    Ok(EXIT_OK)
}

fn read_goal_descriptor(path: &Path) -> Result<GlobalDescriptor> {
    let text = std::fs::read_to_string(path)?;
    let raw: Vec<f64> = serde_json::from_str(&text).map_err(|e| Error::Format {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    GlobalDescriptor::normalize(&raw)
}

pub fn cmd_navigate(a: &NavigateArgs) -> Result<u8> {
    let map = TopologicalMap::read_file(&a.map)?;
    // Without a config file the thresholds the map was built with are the base.
    let mut cfg = RunConfig::load(a.common.config.as_deref())?;
    if a.common.config.is_none() {
        cfg.thresholds = map.config.clone();
    }
    a.common.thresholds.apply(&mut cfg.thresholds);
    cfg.thresholds.validate()?;
    let stream = read_stream_file(&a.stream)?;
    if let Some(first) = stream.first() {
        if first.dim() != map.dim {
            return Err(Error::DimMismatch {
                expected: map.dim,
                found: first.dim(),
            });
        }
    }
    let attempts = cfg.kinematics.turns_per_revolution();
    let mut session = if let Some(node) = a.goal.goal_node {
        map.node(node)?;
        Session::with_goal_node(&map, node, cfg.thresholds.clone(), attempts)
    } else {
        let goal = match (a.goal.goal_frame, &a.goal.goal_descriptor) {
            (Some(frame), _) => stream
                .iter()
                .find(|o| o.frame_index == frame)
                .map(|o| o.full.clone())
                .ok_or_else(|| Error::Config(format!("frame {frame} is not in the stream")))?,
            (None, Some(path)) => read_goal_descriptor(path)?,
            (None, None) => unreachable!("clap requires a goal"),
        };
        Session::new(&map, &goal, cfg.thresholds.clone(), attempts)?
    };

    let mut log: Box<dyn Write> = match &a.log {
        Some(p) => Box::new(create(p)?),
        None => Box::new(std::io::stdout().lock()),
    };
    let mut code = EXIT_FAILURE;
    for obs in &stream {
        let step = session.step(obs)?;
        write_json_lines(&mut log, [session.log_entry(&step)])?;
        match step.event {
            StepEvent::GoalReached => code = EXIT_OK,
            StepEvent::LocalizationFailed => code = EXIT_LOCALIZATION_FAILED,
            _ => {}
        }
        if session.is_done() {
            break;
        }
    }
    log.flush()?;
    drop(log);
    if let Some(p) = &a.log {
        cfg.write_sidecar(p)?;
    }
    let result = match session.phase() {
        Phase::Reached => "goal_reached",
        Phase::Failed => "localization_failed",
        _ => "stream_exhausted",
    };
    eprintln!(
        "result={result} steps={} relocalizations={}",
        session.steps(),
        session.relocalizations()
    );
    Ok(code)
}

/// Resolves a built-in route name or reads a route file.
pub fn resolve_route(name: &str) -> Result<RouteSpec> {
    let path = Path::new(name);
    if path.exists() {
        return RouteSpec::read_file(path);
    }
    match name {
        "easy" => Ok(RouteSpec::easy()),
        "moderate" => Ok(RouteSpec::moderate()),
        "hard" => Ok(RouteSpec::hard()),
        "square_loop" => Ok(RouteSpec::square_loop()),
        _ => Err(Error::Config(format!("unknown route {name:?}"))),
    }
}

fn resolve_setting(name: &str, cfg: &RunConfig) -> Result<SparsitySetting> {
    if let Some(s) = cfg.settings.iter().find(|s| s.name == name) {
        return Ok(s.clone());
    }
    match name {
        "sparse" => Ok(SparsitySetting::sparse()),
        "dense" => Ok(SparsitySetting::dense()),
        _ => Err(Error::Config(format!("unknown sparsity setting {name:?}"))),
    }
}

pub fn cmd_record(a: &RecordArgs) -> Result<u8> {
    let cfg = effective_sim_config(&a.sim)?;
    cfg.validate()?;
    let route = resolve_route(&a.route)?;
    let world = SimWorld::new(cfg.sim.clone())?;
    let teach = record_trajectory(&world, &route, &cfg.kinematics, cfg.frame_stride)?;
    write_stream_file(&a.out, &teach.frames)?;
    cfg.write_sidecar(&a.out)?;
    if let Some(p) = &a.poses {
        let mut w = create(p)?;
        writeln!(w, "frame,x,y,theta")?;
        for (obs, pose) in teach.frames.iter().zip(&teach.poses) {
            writeln!(w, "{},{},{},{}", obs.frame_index, pose.x, pose.y, pose.theta)?;
        }
        w.flush()?;
    }
    println!("frames={} steps={}", teach.frames.len(), teach.steps);
    Ok(EXIT_OK)
}

pub fn cmd_episode(a: &EpisodeArgs) -> Result<u8> {
    let mut cfg = effective_sim_config(&a.sim)?;
    if let Some(r) = a.start_perturbation {
        cfg.start_perturbation = r;
    }
    cfg.validate()?;
    let map = TopologicalMap::read_file(&a.map)?;
    let route = resolve_route(&a.route)?;
    let world = SimWorld::new(cfg.sim.clone())?;
    if map.dim != world.dim() {
        return Err(Error::DimMismatch {
            expected: world.dim(),
            found: map.dim,
        });
    }
    let teach = record_trajectory(&world, &route, &cfg.kinematics, cfg.frame_stride)?;
    let goal = match a.goal_node {
        Some(g) => {
            map.node(g)?;
            g
        }
        None => map.len() - 1,
    };
    let goal_pose = teach.pose_of_frame(map.nodes[goal].frame_index).ok_or_else(|| {
        Error::Config("goal node's frame is not in this route's teach run; check --seed and --stride".into())
    })?;
    let start = episode_start(teach.poses[0], cfg.start_perturbation, cfg.seed, 0, a.episode);
    let budget = ((teach.steps as f64) * cfg.budget_factor).ceil() as usize;
    let ep = EpisodeConfig {
        thresholds: cfg.thresholds.clone(),
        kinematics: cfg.kinematics.clone(),
        budget,
        goal_radius: cfg.goal_radius,
        start_attempts: 0,
    };
    let report = run_episode(&world, &map, start, goal, goal_pose, &ep)?;
    if let Some(p) = &a.log {
        write_json_lines(create(p)?, &report.log)?;
        cfg.write_sidecar(p)?;
    }
    if let Some(p) = &a.trace {
        report.write_pose_csv(create(p)?)?;
        cfg.write_sidecar(p)?;
    }
    println!(
        "success={} goal_reached={} steps={} relocalizations={} final_pose_error={:.3}",
        report.success, report.goal_reached, report.steps, report.relocalizations, report.final_pose_error
    );
    let failed = report.log.last().is_some_and(|e| e.event == StepEvent::LocalizationFailed.as_str());
    Ok(if report.success {
        EXIT_OK
    } else if failed {
        EXIT_LOCALIZATION_FAILED
    } else {
        EXIT_FAILURE
    })
}

pub fn cmd_eval(a: &EvalArgs) -> Result<u8> {
    let mut cfg = effective_sim_config(&a.sim)?;
    if let Some(n) = a.seeds {
        cfg.seeds = n;
    }
    if let Some(n) = a.episodes {
        cfg.episodes = n;
    }
    if !a.settings.is_empty() {
        cfg.settings = a
            .settings
            .iter()
            .map(|n| resolve_setting(n, &cfg))
            .collect::<Result<_>>()?;
    }
    cfg.validate()?;
    let routes = if a.route.is_empty() {
        vec![RouteSpec::easy(), RouteSpec::moderate(), RouteSpec::hard()]
    } else {
        a.route.iter().map(|r| resolve_route(r)).collect::<Result<_>>()?
    };
    let spec = EvalSpec {
        sim: cfg.sim.clone(),
        kinematics: cfg.kinematics.clone(),
        routes,
        settings: cfg.settings.clone(),
        seeds: (cfg.seed..cfg.seed + cfg.seeds).collect(),
        episodes: cfg.episodes,
        frame_stride: cfg.frame_stride,
        start_perturbation: cfg.start_perturbation,
        goal_radius: cfg.goal_radius,
        budget_factor: cfg.budget_factor,
    };
    let rows = aggregate(&spec, &eval_episodes(&spec)?);
    write_eval_csv(&rows, create(&a.out)?)?;
    cfg.write_sidecar(&a.out)?;
    for r in &rows {
        println!(
            "{} {} episodes={} sr={:.3} mean_steps={:.1} mean_relocalizations={:.3}",
            r.route, r.sparsity_setting, r.episodes, r.sr, r.mean_steps, r.mean_relocalizations
        );
    }
    Ok(EXIT_OK)
}
