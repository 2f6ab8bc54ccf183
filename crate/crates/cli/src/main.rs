//! `layout3d`: synthetic scenes, wall codecs, inference, evaluation and the
//! closed-loop self-test.
//!
//! Exit codes: 0 success, 2 input error, 3 scene ids do not align,
//! 4 closed-loop self-test failed.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rayon::prelude::*;

use layout3d::io::heads::{parse_anchors, HeadOutputs, WallTargets};
use layout3d::io::json::{to_canonical, write_canonical};
use layout3d::io::ply::{write_ply, PlyFormat};
use layout3d::io::report::{loss_json, write_report};
use layout3d::io::{self, align_scenes, read_json, read_scene, read_scene_list, write_scene, PointsOut, SceneRecord};
use layout3d::losses::{FocalParams, LossConfig};
use layout3d::metrics::{evaluate, EvalConfig, MatchOrder, DEFAULT_WALL_THICKNESS};
use layout3d::pipeline::{closed_loop, heads_loss, ideal_heads, nearest_layout_anchors, predict, InferConfig, PipelineConfig};
use layout3d::scene::{CategoryLevelMap, Scene};
use layout3d::synth::{generate_scene, SynthConfig};
use layout3d::wall_codec::WallScheme;
use layout3d::{assign, infer, Error};

const SEED_ENV: &str = "LAYOUT3D_SEED";

#[derive(Parser)]
#[command(name = "layout3d", version, about = "Joint layout and object detection toolkit for indoor point clouds")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic scenes (scene_NNNN.json + scene_NNNN.ply).
    Synth {
        /// SynthConfig JSON; omitted fields take defaults.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        count: usize,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        /// Write ascii PLY instead of binary little-endian.
        #[arg(long)]
        ascii: bool,
    },
    /// Encode a scene's walls into per-wall parameter rows.
    EncodeWalls {
        #[arg(long)]
        scene: PathBuf,
        #[arg(long, default_value = "bev2h")]
        scheme: String,
        /// One anchor per wall; defaults to each wall's nearest 32 cm location.
        #[arg(long)]
        anchors: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Decode parameter rows from `encode-walls` back into a scene of walls.
    DecodeWalls {
        #[arg(long)]
        targets: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score predictions against ground truth.
    Eval {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        csv: Option<PathBuf>,
        #[arg(long, default_value_t = infer::WALL_MATCH_DISTANCE)]
        corner_thr: f64,
        #[arg(long = "match", default_value = "score")]
        match_order: String,
        #[arg(long, default_value_t = DEFAULT_WALL_THICKNESS)]
        thickness: f64,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Decode raw head outputs and apply NMS.
    Infer {
        #[arg(long)]
        heads: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = infer::DEFAULT_SCORE_THRESHOLD)]
        score_thr: f64,
        #[arg(long, default_value_t = infer::DEFAULT_IOU_THRESHOLD)]
        nms_iou: f64,
        #[arg(long, default_value_t = infer::WALL_MATCH_DISTANCE)]
        nms_wall_dist: f64,
    },
    /// Closed-loop self-test: encode the scene, decode, suppress and evaluate.
    Pipeline {
        #[arg(long)]
        scene: PathBuf,
        #[arg(long, default_value = "bev2h")]
        scheme: String,
        #[arg(long)]
        out: PathBuf,
        /// JSON object mapping category names to 16 or 32 (cm).
        #[arg(long)]
        levels: Option<PathBuf>,
        #[arg(long, default_value_t = assign::DEFAULT_K)]
        k: usize,
        /// Also write the synthesized head outputs.
        #[arg(long)]
        heads: Option<PathBuf>,
    },
    /// Training loss of head outputs against a scene's annotations.
    Loss {
        #[arg(long)]
        scene: PathBuf,
        /// Head outputs laid out as `pipeline --heads` writes them.
        #[arg(long)]
        heads: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        levels: Option<PathBuf>,
        #[arg(long, default_value_t = assign::DEFAULT_K)]
        k: usize,
        #[arg(long, default_value_t = 0.25)]
        alpha: f64,
        #[arg(long, default_value_t = 2.0)]
        gamma: f64,
        /// Include the flat gradient in the output.
        #[arg(long)]
        gradient: bool,
    },
}

fn seed_override() -> Result<Option<u64>, Error> {
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| Error::InvalidConfig(format!("{SEED_ENV}=`{v}` is not an unsigned integer"))),
        Err(_) => Ok(None),
    }
}

fn pool(jobs: usize) -> Result<rayon::ThreadPool, Error> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::InvalidConfig(e.to_string()))
}

fn synth(config: Option<&Path>, out: &Path, count: usize, jobs: usize, ascii: bool) -> Result<(), Error> {
    let mut cfg: SynthConfig = match config {
        Some(path) => read_json(path)?,
        None => SynthConfig::default(),
    };
    if let Some(seed) = seed_override()? {
        cfg.seed = seed;
    }
    cfg.validate()?;
    let format = if ascii { PlyFormat::Ascii } else { PlyFormat::BinaryLittleEndian };
    std::fs::create_dir_all(out).map_err(|e| Error::Io { path: out.into(), source: e })?;
    let write_one = |i: usize| -> Result<(), Error> {
        let scene_cfg = SynthConfig { seed: cfg.seed.wrapping_add(i as u64), ..cfg.clone() };
        let scene = generate_scene(&scene_cfg)?;
        let stem = format!("scene_{i:04}");
        write_ply(&out.join(format!("{stem}.ply")), &scene.cloud, format)?;
        let record = SceneRecord { id: Some(stem.clone()), scene };
        write_scene(&out.join(format!("{stem}.json")), &record, &PointsOut::Path(format!("{stem}.ply")))
    };
    pool(jobs)?.install(|| (0..count).into_par_iter().map(write_one).collect::<Result<Vec<()>, Error>>())?;
    Ok(())
}

fn encode_walls(scene_path: &Path, scheme: &str, anchors: Option<&Path>, out: &Path) -> Result<(), Error> {
    let scheme: WallScheme = scheme.parse()?;
    let scene = read_scene(scene_path)?.scene;
    let anchors = match anchors {
        Some(path) => parse_anchors(&io::read_text(path)?)?,
        None => nearest_layout_anchors(&scene, scheme, &PipelineConfig::default())?,
    };
    write_canonical(out, &WallTargets::encode(scheme, &scene.walls, &anchors)?)
}

fn decode_walls(targets: &Path, out: &Path) -> Result<(), Error> {
    let walls = read_json::<WallTargets>(targets)?.decode()?;
    let record = SceneRecord { id: None, scene: Scene { walls, ..Scene::default() } };
    write_scene(out, &record, &PointsOut::Omit)
}

#[allow(clippy::too_many_arguments)]
fn eval(
    pred: &Path,
    gt: &Path,
    out: &Path,
    csv: Option<&Path>,
    corner_thr: f64,
    match_order: &str,
    thickness: f64,
    jobs: usize,
) -> Result<(), Error> {
    let cfg = EvalConfig {
        corner_threshold: corner_thr,
        match_order: match_order.parse::<MatchOrder>()?,
        wall_thickness: thickness,
        jobs,
    };
    let gts = read_scene_list(gt)?;
    let preds = read_scene_list(pred)?;
    let names: BTreeMap<u32, String> = gts.iter().flat_map(|r| r.scene.categories.clone()).collect();
    let (preds, gts) = align_scenes(preds, gts)?;
    let report = evaluate(&preds, &gts, &cfg)?;
    write_report(out, csv, &report, &names)?;
    println!("{}", report.summary_line());
    Ok(())
}

fn run_infer(heads: &Path, out: &Path, cfg: InferConfig) -> Result<(), Error> {
    let heads: HeadOutputs = read_json(heads)?;
    let (scene, dropped) = predict(&heads, &cfg)?;
    if dropped > 0 {
        eprintln!("warning: {dropped} wall location(s) above threshold did not decode to a valid wall");
    }
    write_scene(out, &SceneRecord { id: None, scene }, &PointsOut::Omit)
}

fn read_levels(path: Option<&Path>, scene: &Scene) -> Result<Option<CategoryLevelMap>, Error> {
    path.map(|path| {
        let by_name: BTreeMap<String, u32> = read_json(path)?;
        CategoryLevelMap::from_names(&by_name, &scene.categories)
    })
    .transpose()
}

fn pipeline(scene_path: &Path, scheme: &str, out: &Path, levels: Option<&Path>, k: usize, heads: Option<&Path>) -> Result<(), Error> {
    let scheme: WallScheme = scheme.parse()?;
    let record = read_scene(scene_path)?;
    let levels = read_levels(levels, &record.scene)?;
    let cfg = PipelineConfig { scheme, k, levels, ..PipelineConfig::default() };
    if let Some(path) = heads {
        let ideal = ideal_heads(&record.scene, &cfg)?;
        io::write_bytes(path, to_canonical(&ideal.heads)?.as_bytes())?;
    }
    let outcome = closed_loop(&record.scene, &cfg)?;
    write_report(out, None, &outcome.report, &record.scene.categories)?;
    println!("{}", outcome.report.summary_line());
    match outcome.failure_reason() {
        None => Ok(()),
        Some(reason) => Err(Error::ClosedLoop(reason)),
    }
}

#[allow(clippy::too_many_arguments)]
fn loss(
    scene_path: &Path,
    heads: &Path,
    out: &Path,
    levels: Option<&Path>,
    k: usize,
    focal: FocalParams,
    gradient: bool,
) -> Result<(), Error> {
    let scene = read_scene(scene_path)?.scene;
    let heads: HeadOutputs = read_json(heads)?;
    let cfg = PipelineConfig { scheme: heads.scheme()?, k, levels: read_levels(levels, &scene)?, ..PipelineConfig::default() };
    let loss_cfg = LossConfig { focal, ..LossConfig::default() };
    let value = heads_loss(&scene, &heads, &cfg, &loss_cfg)?;
    io::write_bytes(out, loss_json(&value, gradient)?.as_bytes())?;
    println!("loss={:.6}", value.total.value);
    Ok(())
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Synth { config, out, count, jobs, ascii } => synth(config.as_deref(), &out, count, jobs, ascii),
        Command::EncodeWalls { scene, scheme, anchors, out } => encode_walls(&scene, &scheme, anchors.as_deref(), &out),
        Command::DecodeWalls { targets, out } => decode_walls(&targets, &out),
        Command::Eval { pred, gt, out, csv, corner_thr, match_order, thickness, jobs } => {
            eval(&pred, &gt, &out, csv.as_deref(), corner_thr, &match_order, thickness, jobs)
        }
        Command::Infer { heads, out, score_thr, nms_iou, nms_wall_dist } => run_infer(
            &heads,
            &out,
            InferConfig { score_threshold: score_thr, nms_iou, nms_wall_distance: nms_wall_dist },
        ),
        Command::Pipeline { scene, scheme, out, levels, k, heads } => {
            pipeline(&scene, &scheme, &out, levels.as_deref(), k, heads.as_deref())
        }
        Command::Loss { scene, heads, out, levels, k, alpha, gamma, gradient } => {
            loss(&scene, &heads, &out, levels.as_deref(), k, FocalParams { alpha, gamma }, gradient)
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::SceneAlignment(_) => 3,
        Error::ClosedLoop(_) => 4,
        _ => 2,
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
