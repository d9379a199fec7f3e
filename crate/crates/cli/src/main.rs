use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context, Result};
use clap::{Args, Parser, Subcommand};

use dact_core::data_io::{
    read_annotations, read_checkpoint, read_keypoints, read_predictions, read_stream, write_annotations, write_atomic,
    write_checkpoint, write_keypoints, write_predictions, write_stream, AnnotationRecord, FeatureStream,
};
use dact_core::localization::{localize_scene, LocalizeConfig};
use dact_core::metrics::evaluate;
use dact_core::model::{frame_labels, infer, train, Dataset, FusionModel, LabeledStream, LossConfig, ModelConfig};
use dact_core::pipeline::{
    extract_features, predictions, probability_stream, read_probabilities, seconds_to_frames, video_id_from_path, video_stream,
};
use dact_core::pose::{CameraIntrinsics, FeatureLayout};
use dact_core::synth::{gen_embeddings, gen_keypoints, Scenario};

/// Temporal gate of the overlap score, seconds.
const GATE_SECONDS: f64 = 10.0;

#[derive(Parser)]
#[command(name = "dact", version, about = "Driver action localization from pose and spatio-temporal embeddings")]
struct Cli {
    /// Overwrite existing output files.
    #[arg(long, global = true)]
    force: bool,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Extract per-frame pose features from a keypoint file.
    Features(FeaturesArgs),
    /// Train a fusion model.
    Train(TrainArgs),
    /// Per-frame class probabilities for one camera.
    Infer(InferArgs),
    /// Temporal localization over a scene's camera streams.
    Localize(LocalizeArgs),
    /// Score predictions against ground truth.
    Eval(EvalArgs),
    /// Generate a synthetic scene.
    Synth(SynthArgs),
}

#[derive(Args)]
struct FeaturesArgs {
    #[arg(long)]
    keypoints: PathBuf,
    /// `full`, `compact`, `skeleton`, `compact-skeleton`, or a JSON layout file.
    #[arg(long, default_value = "full")]
    layout: String,
    /// JSON file with `fx, fy, cx, cy`, or an image size such as `1920x1080`.
    #[arg(long)]
    intrinsics: Option<String>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    /// Pose feature files, one per camera, in the same order as `--embed`.
    #[arg(long, num_args = 1..)]
    pose: Vec<PathBuf>,
    #[arg(long, num_args = 1.., required = true)]
    embed: Vec<PathBuf>,
    #[arg(long)]
    labels: PathBuf,
    #[arg(long)]
    model_config: Option<PathBuf>,
    #[arg(long)]
    loss_config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 10)]
    epochs: usize,
    #[arg(long)]
    seed: Option<u64>,
    /// Train on at most this many segments, drawn with the seed.
    #[arg(long)]
    max_samples: Option<usize>,
    /// Loss history CSV; defaults to the checkpoint path with `.loss.csv`.
    #[arg(long)]
    history: Option<PathBuf>,
}

#[derive(Args)]
struct InferArgs {
    #[arg(long)]
    ckpt: PathBuf,
    #[arg(long)]
    pose: Option<PathBuf>,
    #[arg(long)]
    embed: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct LocalizeArgs {
    #[arg(long, num_args = 1.., required = true)]
    probs: Vec<PathBuf>,
    /// Median filter width, frames.
    #[arg(long, default_value_t = 351)]
    median: usize,
    #[arg(long, default_value_t = 0.1)]
    min_height: f64,
    /// Minimum peak width, frames.
    #[arg(long, default_value_t = 200)]
    min_width: usize,
    #[arg(long, default_value_t = 0.5)]
    iou_max: f64,
    #[arg(long, default_value_t = 3)]
    cameras: usize,
    /// Defaults to the id implied by the first probability file name.
    #[arg(long)]
    video_id: Option<String>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    pred: PathBuf,
    #[arg(long)]
    gt: PathBuf,
    #[arg(long, default_value_t = 30.0)]
    fps: f64,
    /// Where to write the JSON report, in addition to standard output.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long)]
    out_dir: PathBuf,
}

/// An error caused by the invocation rather than the program.
#[derive(Debug)]
struct Usage(String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    Usage(msg.into()).into()
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<Usage>() {
            return 2;
        }
        if let Some(e) = cause.downcast_ref::<dact_core::Error>() {
            return if e.is_usage() { 2 } else { 1 };
        }
    }
    1
}

fn configure_threads() -> Result<()> {
    let Ok(v) = std::env::var("DACT_THREADS") else {
        return Ok(());
    };
    let n: usize = v.trim().parse().ok().filter(|&n| n > 0).ok_or_else(|| usage(format!("DACT_THREADS must be a positive integer, got {v:?}")))?;
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    Ok(())
}

fn check_output(path: &Path, force: bool) -> Result<()> {
    if path.exists() && !force {
        return Err(usage(format!("{} exists; pass --force to overwrite", path.display())));
    }
    Ok(())
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| anyhow!(dact_core::Error::from(e))).with_context(|| format!("reading {}", path.display()))
}

fn open(path: &Path) -> Result<fs::File> {
    fs::File::open(path).map_err(|e| anyhow!(dact_core::Error::from(e))).with_context(|| format!("opening {}", path.display()))
}

fn load_stream(path: &Path) -> Result<FeatureStream> {
    read_stream(path).with_context(|| format!("reading {}", path.display()))
}

fn parse_layout(arg: &str) -> Result<FeatureLayout> {
    Ok(match arg {
        "full" => FeatureLayout::full(),
        "compact" => FeatureLayout::compact(),
        "skeleton" => FeatureLayout::full().skeleton_only(),
        "compact-skeleton" => FeatureLayout::compact().skeleton_only(),
        other if Path::new(other).is_file() => FeatureLayout::from_json(&read_text(Path::new(other))?)?,
        other => return Err(usage(format!("unknown layout {other:?}"))),
    })
}

fn parse_intrinsics(arg: Option<&str>) -> Result<CameraIntrinsics> {
    let Some(arg) = arg else {
        return Ok(CameraIntrinsics::default());
    };
    let intr = if let Some((w, h)) = arg.split_once('x').filter(|_| !Path::new(arg).exists()) {
        let parse = |s: &str| s.parse::<f64>().map_err(|_| usage(format!("bad image size {arg:?}")));
        CameraIntrinsics::from_image_size(parse(w)?, parse(h)?)
    } else {
        serde_json::from_str(&read_text(Path::new(arg))?).map_err(dact_core::Error::from)?
    };
    intr.validate()?;
    Ok(intr)
}

fn cmd_features(a: FeaturesArgs, force: bool) -> Result<()> {
    check_output(&a.out, force)?;
    let layout = parse_layout(&a.layout)?;
    let intr = parse_intrinsics(a.intrinsics.as_deref())?;
    let frames = read_keypoints(&a.keypoints).with_context(|| format!("opening {}", a.keypoints.display()))?;
    let out = extract_features(frames, &layout, intr).with_context(|| format!("processing {}", a.keypoints.display()))?;
    if out.stream.is_empty() {
        eprintln!("warning: {} holds no keypoint frames", a.keypoints.display());
    }
    if out.substituted > 0 {
        eprintln!("{} of {} frames reused an earlier head pose", out.substituted, out.stream.len());
    }
    write_stream(&a.out, &out.stream)?;
    eprintln!("wrote {} frames of {} features to {}", out.stream.len(), layout.pose_dim(), a.out.display());
    Ok(())
}

fn labels_for(path: &Path, by_video: &[(String, Vec<AnnotationRecord>)]) -> Result<Vec<AnnotationRecord>> {
    let id = video_id_from_path(path);
    if let Some((_, recs)) = by_video.iter().find(|(v, _)| *v == id) {
        return Ok(recs.clone());
    }
    match by_video {
        [(_, recs)] => Ok(recs.clone()),
        [] => Ok(Vec::new()),
        _ => Err(usage(format!("cannot tell which video {} belongs to; name it <video_id>_cam<k>", path.display()))),
    }
}

fn cmd_train(a: TrainArgs, force: bool) -> Result<()> {
    let history_path = a.history.clone().unwrap_or_else(|| a.out.with_extension("loss.csv"));
    check_output(&a.out, force)?;
    check_output(&history_path, force)?;
    if !a.pose.is_empty() && a.pose.len() != a.embed.len() {
        return Err(usage(format!("{} pose files for {} embedding files", a.pose.len(), a.embed.len())));
    }
    let embeds = a.embed.iter().map(|p| load_stream(p)).collect::<Result<Vec<_>>>()?;
    let poses = a.pose.iter().map(|p| load_stream(p)).collect::<Result<Vec<_>>>()?;
    let mut cfg = match &a.model_config {
        Some(p) => ModelConfig::from_json(&read_text(p)?)?,
        None => {
            let n_f = embeds[0].feat_dim();
            let pose_dim = poses.first().map_or(0, |p| p.feat_dim());
            let heads = if n_f % 4 == 0 { 4 } else { 1 };
            ModelConfig { segment_len: embeds[0].header.segment_len as usize, ..ModelConfig::with_dims(pose_dim, n_f, heads, 2) }
        }
    };
    if let Some(seed) = a.seed {
        cfg.seed = seed;
    }
    let loss_cfg = match &a.loss_config {
        Some(p) => LossConfig::from_json(&read_text(p)?)?,
        None => LossConfig::default(),
    };
    let records = read_annotations(open(&a.labels)?).with_context(|| format!("reading {}", a.labels.display()))?;
    let mut by_video: Vec<(String, Vec<AnnotationRecord>)> = Vec::new();
    for r in records {
        match by_video.iter_mut().find(|(v, _)| *v == r.video_id) {
            Some((_, v)) => v.push(r),
            None => by_video.push((r.video_id.clone(), vec![r])),
        }
    }
    let mut streams = Vec::new();
    for (i, (path, embed)) in a.embed.iter().zip(&embeds).enumerate() {
        let stream = video_stream(poses.get(i), embed, &cfg).with_context(|| format!("loading {}", path.display()))?;
        let labels = frame_labels(&labels_for(path, &by_video)?, stream.num_frames(cfg.segment_len));
        streams.push(LabeledStream { stream, frame_labels: labels });
    }
    let mut data = Dataset::new(streams, &cfg)?;
    if let Some(n) = a.max_samples {
        data.subsample_random(n, cfg.seed);
    }
    eprintln!("training on {} segments from {} streams", data.samples.len(), data.streams.len());
    let out = train(&data, cfg, &loss_cfg, a.epochs, |e, l| eprintln!("epoch {e}: loss {l:.6}"))?;
    let mut csv = String::from("epoch,loss\n");
    for (e, l) in out.loss_history.iter().enumerate() {
        csv.push_str(&format!("{e},{l}\n"));
    }
    write_checkpoint(&out.model.to_checkpoint(out.steps), &a.out)?;
    write_atomic(&history_path, csv.as_bytes())?;
    eprintln!("wrote {} and {}", a.out.display(), history_path.display());
    Ok(())
}

fn cmd_infer(a: InferArgs, force: bool) -> Result<()> {
    check_output(&a.out, force)?;
    let ckpt = read_checkpoint(&a.ckpt).with_context(|| format!("reading {}", a.ckpt.display()))?;
    let model = FusionModel::from_checkpoint(&ckpt).with_context(|| format!("loading {}", a.ckpt.display()))?;
    let embed = load_stream(&a.embed)?;
    let pose = a.pose.as_deref().map(load_stream).transpose()?;
    let stream = video_stream(pose.as_ref(), &embed, &model.config)?;
    let probs = infer(&model, &stream)?;
    write_stream(&a.out, &probability_stream(&probs)?)?;
    eprintln!("wrote {} frames to {}", probs.nrows(), a.out.display());
    Ok(())
}

fn cmd_localize(a: LocalizeArgs, force: bool) -> Result<()> {
    check_output(&a.out, force)?;
    let cfg = LocalizeConfig {
        median_width: a.median,
        min_height: a.min_height,
        min_width_frames: a.min_width,
        o_max: a.iou_max,
        num_cameras: a.cameras,
    };
    cfg.validate()?;
    let probs = a
        .probs
        .iter()
        .map(|p| Ok(read_probabilities(&load_stream(p)?).with_context(|| format!("reading {}", p.display()))?))
        .collect::<Result<Vec<_>>>()?;
    let views: Vec<_> = probs.iter().map(|p| p.view()).collect();
    let found = localize_scene(&views, &cfg)?;
    let video_id = a.video_id.unwrap_or_else(|| video_id_from_path(&a.probs[0]));
    let mut buf = Vec::new();
    write_predictions(&mut buf, &predictions(&video_id, &found))?;
    write_atomic(&a.out, &buf)?;
    eprintln!("wrote {} activities to {}", found.len(), a.out.display());
    Ok(())
}

fn cmd_eval(a: EvalArgs, force: bool) -> Result<()> {
    if let Some(out) = &a.out {
        check_output(out, force)?;
    }
    let window = seconds_to_frames(GATE_SECONDS, a.fps)?;
    let preds = read_predictions(open(&a.pred)?).with_context(|| format!("reading {}", a.pred.display()))?;
    let gts = read_annotations(open(&a.gt)?).with_context(|| format!("reading {}", a.gt.display()))?;
    let report = evaluate(&preds, &gts, window);
    let json = serde_json::to_string_pretty(&report)?;
    if let Some(out) = &a.out {
        write_atomic(out, format!("{json}\n").as_bytes())?;
    }
    match writeln!(std::io::stdout(), "{json}") {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}

fn cmd_synth(a: SynthArgs, force: bool) -> Result<()> {
    let scn = Scenario::from_json(&read_text(&a.scenario)?).with_context(|| format!("reading {}", a.scenario.display()))?;
    let cams = scn.num_cameras as u32;
    let labels_path = a.out_dir.join(format!("{}.labels.csv", scn.video_id));
    let names: Vec<(PathBuf, PathBuf)> = (0..cams)
        .map(|c| {
            let base = format!("{}_cam{c}", scn.video_id);
            (a.out_dir.join(format!("{base}.keypoints.jsonl")), a.out_dir.join(format!("{base}.embed.stem")))
        })
        .collect();
    for p in names.iter().flat_map(|(k, e)| [k, e]).chain([&labels_path]) {
        check_output(p, force)?;
    }
    fs::create_dir_all(&a.out_dir).with_context(|| format!("creating {}", a.out_dir.display()))?;
    for (c, (kp_path, emb_path)) in (0..cams).zip(&names) {
        let mut buf = Vec::new();
        write_keypoints(&mut buf, &gen_keypoints(&scn, c))?;
        write_atomic(kp_path, &buf)?;
        let emb = gen_embeddings(&scn, c);
        let stream = FeatureStream::from_rows(scn.embed_dim, scn.segment_len, 1, emb.iter().map(|e| &e.values))?;
        write_stream(emb_path, &stream)?;
    }
    let mut buf = Vec::new();
    write_annotations(&mut buf, &scn.annotations())?;
    write_atomic(&labels_path, &buf)?;
    eprintln!("wrote {} cameras and {} activities to {}", cams, scn.activities.len(), a.out_dir.display());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    configure_threads()?;
    let force = cli.force;
    match cli.cmd {
        Cmd::Features(a) => cmd_features(a, force),
        Cmd::Train(a) => cmd_train(a, force),
        Cmd::Infer(a) => cmd_infer(a, force),
        Cmd::Localize(a) => cmd_localize(a, force),
        Cmd::Eval(a) => cmd_eval(a, force),
        Cmd::Synth(a) => cmd_synth(a, force),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&usage("x")), 2);
        assert_eq!(exit_code(&anyhow!(dact_core::Error::Shape("n_f".into())).context("loading")), 2);
        assert_eq!(exit_code(&anyhow!(dact_core::Error::Diverged("nan".into()))), 1);
        assert_eq!(exit_code(&anyhow!("unexpected")), 1);
    }

    #[test]
    fn layouts() {
        assert_eq!(parse_layout("compact").unwrap().pose_dim(), FeatureLayout::compact().pose_dim());
        assert_eq!(exit_code(&parse_layout("nope").unwrap_err()), 2);
    }

    #[test]
    fn intrinsics_from_size() {
        let i = parse_intrinsics(Some("640x480")).unwrap();
        assert_eq!((i.fx, i.cx, i.cy), (640.0, 320.0, 240.0));
        assert!(parse_intrinsics(Some("640xabc")).is_err());
    }

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
