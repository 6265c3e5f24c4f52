use std::fs;
use std::path::{Path, PathBuf};

use fracstab::baselines::{apply_baseline_batch, BaselineKind};
use fracstab::heatmap::{decode_stack, read_stack, render_heatmaps, write_stack, DecodeMode, GridSpec, RenderMode};
use fracstab::metrics::{evaluate as score, frame_metrics_csv, MetricsReport, DEFAULT_THRESHOLD};
use fracstab::stabilizer::{stabilize_batch, StabilizerParams};
use fracstab::synth::{make_benchmark, BenchmarkConfig, Video};
use fracstab::training::{fit, history_csv, init_params, LossBreakdown, TrainConfig};
use fracstab::{par, Error, TrajectorySequence};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::io::{self, OutputDir};
use crate::{CliError, Common};

/// Reads `--config` (or starts from defaults) into `T`.
fn load_config<T: DeserializeOwned + Default>(common: &Common) -> Result<T, CliError> {
    match &common.config {
        None => Ok(T::default()),
        Some(path) => {
            let text = io::read_text(path)?;
            serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
        }
    }
}

fn as_value<T: Serialize>(value: &T) -> Result<Value, CliError> {
    Ok(serde_json::to_value(value).map_err(Error::from)?)
}

/// Parses a flag through the same serde names used in config files.
fn parse_enum<T: DeserializeOwned>(flag: &str, text: &str) -> Result<T, CliError> {
    serde_json::from_value(Value::String(text.to_string()))
        .map_err(|_| CliError::Config(format!("unrecognized --{flag} value {text:?}")))
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(default)]
struct SimulateConfig {
    seed: u64,
    #[serde(flatten)]
    benchmark: BenchmarkConfig,
}

pub fn simulate(
    common: &Common,
    train_videos: Option<usize>,
    test_videos: Option<usize>,
    frames: Option<usize>,
    noise_levels: Option<Vec<f64>>,
) -> Result<(), CliError> {
    let mut config: SimulateConfig = load_config(common)?;
    let b = &mut config.benchmark;
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    if let Some(n) = train_videos {
        b.train_videos = n;
    }
    if let Some(n) = test_videos {
        b.test_videos = n;
    }
    if let Some(n) = frames {
        b.frames = n;
    }
    if let Some(levels) = noise_levels {
        b.noise_levels = levels;
    }
    let bench = make_benchmark(&config.benchmark, config.seed)?;
    let mut out = OutputDir::create(&common.out)?;
    let mut write_videos = |split: &str, videos: &[Video]| -> Result<(), CliError> {
        for v in videos {
            let id = &v.ground_truth.video_id;
            out.write(&format!("{split}/{id}.gt.json"), v.ground_truth.to_json()?.as_bytes())?;
            out.write(&format!("{split}/{id}.z.json"), v.detections.to_json()?.as_bytes())?;
        }
        Ok(())
    };
    write_videos("train", &bench.train)?;
    write_videos("test", &bench.test)?;
    let motions: Vec<_> = bench
        .train
        .iter()
        .chain(&bench.test)
        .map(|v| json!({ "motion": v.motion, "noise": v.noise }))
        .collect();
    out.write("videos.json", io::to_json(&motions)?.as_bytes())?;
    println!(
        "wrote {} train and {} test videos to {}",
        bench.train.len(),
        bench.test.len(),
        common.out.display()
    );
    out.finish("simulate", config.seed, &as_value(&config)?, Value::Null)
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(default)]
struct EncodeConfig {
    seed: u64,
    width: usize,
    height: usize,
    scale: f64,
    sigma: f64,
    render: RenderMode,
}

impl Default for EncodeConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            width: 128,
            height: 128,
            scale: 8.0,
            sigma: 3.0,
            render: RenderMode::Fractional,
        }
    }
}

/// Video metadata kept next to encoded frames.
#[derive(Debug, Serialize, Deserialize)]
struct EncodedVideo {
    video_id: String,
    norm_distance: f64,
    frame_box: [f64; 4],
    num_landmarks: usize,
    frames: usize,
}

pub fn encode(
    common: &Common,
    input: &Path,
    width: Option<usize>,
    height: Option<usize>,
    scale: Option<f64>,
    sigma: Option<f64>,
    render: Option<String>,
) -> Result<(), CliError> {
    let mut config: EncodeConfig = load_config(common)?;
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    config.width = width.unwrap_or(config.width);
    config.height = height.unwrap_or(config.height);
    config.scale = scale.unwrap_or(config.scale);
    config.sigma = sigma.unwrap_or(config.sigma);
    if let Some(r) = render {
        config.render = parse_enum("render", &r)?;
    }
    let grid = GridSpec::new(config.width, config.height, config.scale, config.sigma)?;
    let seq = io::read_trajectory(input)?;
    let encoded = par::try_map(&seq.frames, |frame| {
        let stack = render_heatmaps(frame, &grid, config.render)?;
        let mut bytes = Vec::new();
        write_stack(&mut bytes, &stack)?;
        Ok::<_, Error>(bytes)
    })?;
    let mut out = OutputDir::create(&common.out)?;
    for (t, bytes) in encoded.iter().enumerate() {
        out.write(&format!("frames/{t:06}.fhrs"), bytes)?;
    }
    let video = EncodedVideo {
        video_id: seq.video_id.clone(),
        norm_distance: seq.norm_distance,
        frame_box: seq.frame_box,
        num_landmarks: seq.num_landmarks(),
        frames: seq.len(),
    };
    println!("encoded {} frames of {}", seq.len(), seq.video_id);
    out.finish("encode", config.seed, &as_value(&config)?, json!({ "video": video }))
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(default)]
struct DecodeConfig {
    seed: u64,
    mode: Option<DecodeMode>,
}

pub fn decode(common: &Common, input: &Path, mode: Option<String>) -> Result<(), CliError> {
    let mut config: DecodeConfig = load_config(common)?;
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    if let Some(m) = mode {
        config.mode = Some(parse_enum("mode", &m)?);
    }
    let mode = config.mode.unwrap_or(DecodeMode::Fhr);
    config.mode = Some(mode);

    let manifest_path = input.join(io::MANIFEST);
    let manifest: Value = serde_json::from_str(&io::read_text(&manifest_path)?)
        .map_err(|e| CliError::Data(format!("{}: {e}", manifest_path.display())))?;
    let video: EncodedVideo = serde_json::from_value(manifest["extra"]["video"].clone())
        .map_err(|e| CliError::Data(format!("{}: no video metadata ({e})", manifest_path.display())))?;
    let paths = io::list_with_suffix(&input.join("frames"), ".fhrs")?;
    if paths.len() != video.frames {
        return Err(CliError::Data(format!(
            "found {} frame files, manifest lists {}",
            paths.len(),
            video.frames
        )));
    }
    let frames = par::try_map(&paths, |path| {
        let bytes = fs::read(path).map_err(|e| CliError::Io(path.clone(), e))?;
        let stack = read_stack(bytes.as_slice()).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        Ok::<_, CliError>(decode_stack(&stack, mode)?)
    })?;
    let seq = TrajectorySequence::new(video.video_id, video.norm_distance, video.frame_box, frames)?;
    let mut out = OutputDir::create(&common.out)?;
    out.write(&format!("{}.json", seq.video_id), seq.to_json()?.as_bytes())?;
    println!("decoded {} frames of {}", seq.len(), seq.video_id);
    out.finish("decode", config.seed, &as_value(&config)?, Value::Null)
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(default)]
struct TrainCliConfig {
    split: String,
    #[serde(flatten)]
    train: TrainConfig,
}

impl Default for TrainCliConfig {
    fn default() -> Self {
        Self {
            split: "train".into(),
            train: TrainConfig::default(),
        }
    }
}

pub struct TrainOverrides {
    pub split: Option<String>,
    pub lambda1: Option<f64>,
    pub lambda2: Option<f64>,
    pub lambda3: Option<f64>,
    pub max_iters: Option<usize>,
    pub max_evals: Option<usize>,
    pub mode: Option<String>,
}

#[derive(Debug, Serialize)]
struct LossReport<'a> {
    euclidean: f64,
    time_delay: f64,
    tm: f64,
    total: f64,
    weighted: WeightedTerms,
    per_video: Vec<(&'a str, f64)>,
    iterations: usize,
    evaluations: usize,
    termination: fracstab::training::Termination,
}

#[derive(Debug, Serialize)]
struct WeightedTerms {
    euclidean: f64,
    time_delay: f64,
    tm: f64,
}

fn weighted(loss: &LossBreakdown, config: &TrainConfig) -> WeightedTerms {
    WeightedTerms {
        euclidean: config.lambda1 * loss.reg_euclidean,
        time_delay: config.lambda2 * loss.reg_time_delay,
        tm: config.lambda3 * loss.tm_smooth,
    }
}

pub fn train(common: &Common, data: &Path, o: TrainOverrides) -> Result<(), CliError> {
    let mut config: TrainCliConfig = load_config(common)?;
    let t = &mut config.train;
    if let Some(seed) = common.seed {
        t.seed = seed;
    }
    t.lambda1 = o.lambda1.unwrap_or(t.lambda1);
    t.lambda2 = o.lambda2.unwrap_or(t.lambda2);
    t.lambda3 = o.lambda3.unwrap_or(t.lambda3);
    t.max_iters = o.max_iters.unwrap_or(t.max_iters);
    t.max_evals = o.max_evals.unwrap_or(t.max_evals);
    if let Some(m) = o.mode {
        t.mode = parse_enum("mode", &m)?;
    }
    if let Some(split) = o.split {
        config.split = split;
    }
    config.train.validate()?;

    let (z, p) = io::read_split(&data.join(&config.split))?;
    let p0 = init_params(&z, &p)?;
    let result = fit(&p0, &z, &p, &config.train)?;
    let report = LossReport {
        euclidean: result.loss.reg_euclidean,
        time_delay: result.loss.reg_time_delay,
        tm: result.loss.tm_smooth,
        total: result.loss.total,
        weighted: weighted(&result.loss, &config.train),
        per_video: p.iter().map(|s| s.video_id.as_str()).zip(result.loss.per_video.iter().copied()).collect(),
        iterations: result.iterations,
        evaluations: result.evaluations,
        termination: result.termination,
    };
    let report_text = io::to_json(&report)?;
    let config_value = as_value(&config)?;

    let mut out = OutputDir::create(&common.out)?;
    out.write("params.json", (result.params.to_json()? + "\n").as_bytes())?;
    out.write("history.csv", history_csv(&result.history).as_bytes())?;
    out.write("loss.json", report_text.as_bytes())?;
    out.write("train_config.json", io::to_json(&config_value)?.as_bytes())?;
    print!("{report_text}");
    out.finish("train", config.train.seed, &config_value, Value::Null)
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(default)]
struct StabilizeConfig {
    seed: u64,
    params: Option<PathBuf>,
    baseline: Option<String>,
}

fn output_stem(path: &Path) -> String {
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("video");
    let stem = name
        .strip_suffix(".z.json")
        .or_else(|| name.strip_suffix(".json"))
        .unwrap_or(name);
    stem.to_string()
}

pub fn stabilize(
    common: &Common,
    input: &Path,
    params: Option<PathBuf>,
    baseline: Option<String>,
) -> Result<(), CliError> {
    let mut config: StabilizeConfig = load_config(common)?;
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    if params.is_some() || baseline.is_some() {
        config.params = params;
        config.baseline = baseline;
    }
    io::require_exists(input)?;
    let paths = if input.is_dir() {
        io::list_with_suffix(input, ".z.json")?
    } else {
        vec![input.to_path_buf()]
    };
    if paths.is_empty() {
        return Err(CliError::Data(format!("no *.z.json files in {}", input.display())));
    }
    let z = paths.iter().map(|p| io::read_trajectory(p)).collect::<Result<Vec<_>, _>>()?;
    let (x, extra) = match (&config.params, &config.baseline) {
        (Some(path), None) => {
            let text = io::read_text(path)?;
            let params = StabilizerParams::from_json(&text)?;
            let x = stabilize_batch(&params, &z)?;
            (x, json!({ "params_sha256": io::sha256_hex(text.as_bytes()) }))
        }
        (None, Some(kind)) => {
            let kind: BaselineKind = kind.parse()?;
            (apply_baseline_batch(kind, &z)?, Value::Null)
        }
        _ => return Err(CliError::Config("give exactly one of --params or --baseline".into())),
    };
    let mut out = OutputDir::create(&common.out)?;
    for (path, seq) in paths.iter().zip(&x) {
        out.write(&format!("{}.x.json", output_stem(path)), seq.to_json()?.as_bytes())?;
    }
    println!("stabilized {} videos", x.len());
    out.finish("stabilize", config.seed, &as_value(&config)?, extra)
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(default)]
struct EvaluateConfig {
    seed: u64,
    split: String,
    methods: Vec<String>,
    threshold: f64,
}

impl Default for EvaluateConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            split: "test".into(),
            methods: vec!["gt".into(), "raw".into()],
            threshold: DEFAULT_THRESHOLD,
        }
    }
}

/// File-name-safe label for a method spec.
fn method_label(method: &str) -> String {
    let label = match method.split_once(':') {
        Some(("params", path)) => format!("params-{}", output_stem(Path::new(path)).trim_end_matches(".json")),
        _ => method.to_string(),
    };
    label
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' || c == '.' { c } else { '-' })
        .collect()
}

fn run_method(
    method: &str,
    z: &[TrajectorySequence],
    p: &[TrajectorySequence],
) -> Result<Vec<TrajectorySequence>, CliError> {
    match method.split_once(':') {
        None if method == "gt" => Ok(p.to_vec()),
        None if method == "raw" => Ok(z.to_vec()),
        Some(("params", path)) => {
            let params = StabilizerParams::from_json(&io::read_text(Path::new(path))?)?;
            Ok(stabilize_batch(&params, z)?)
        }
        Some(("baseline", kind)) => Ok(apply_baseline_batch(kind.parse()?, z)?),
        _ => Err(CliError::Config(format!(
            "unknown method {method:?}; expected gt, raw, params:<file> or baseline:<kind>"
        ))),
    }
}

pub fn evaluate(
    common: &Common,
    data: &Path,
    split: Option<String>,
    methods: Vec<String>,
    threshold: Option<f64>,
) -> Result<(), CliError> {
    let mut config: EvaluateConfig = load_config(common)?;
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    if let Some(split) = split {
        config.split = split;
    }
    if !methods.is_empty() {
        config.methods = methods;
    }
    config.threshold = threshold.unwrap_or(config.threshold);
    if config.methods.is_empty() {
        return Err(CliError::Config("no methods to evaluate".into()));
    }
    if !(config.threshold > 0.0 && config.threshold <= 100.0) {
        return Err(CliError::Config(format!("threshold {} not in (0, 100]", config.threshold)));
    }

    let (z, p) = io::read_split(&data.join(&config.split))?;
    let mut out = OutputDir::create(&common.out)?;
    let mut reports: Vec<MetricsReport> = Vec::new();
    for method in &config.methods {
        let label = method_label(method);
        let x = run_method(method, &z, &p)?;
        let (report, rows) = score(method, &x, &p, config.threshold)?;
        out.write(&format!("{label}.report.json"), io::to_json(&report)?.as_bytes())?;
        out.write(&format!("{label}.frames.csv"), frame_metrics_csv(&rows).as_bytes())?;
        println!(
            "{:<32} nrmse {:>8.4}%  auc {:>7.3}%  fail {:>7.3}%  stability {:>8.4}%  lag {:>6.3}",
            method,
            report.nrmse_percent,
            report.auc_percent,
            report.failure_rate_percent,
            report.stability_nrmse_percent,
            report.lag_frames
        );
        reports.push(report);
    }
    out.write("summary.json", io::to_json(&reports)?.as_bytes())?;
    out.finish("evaluate", config.seed, &as_value(&config)?, Value::Null)
}
