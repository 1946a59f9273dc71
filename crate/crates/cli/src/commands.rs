use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use beamsep::beam::{beampattern as gain_grid, BeamformerConfig};
use beamsep::data::{build_dataset, derive_seed, load_windows, write_synthetic_corpus, Condition, Split};
use beamsep::enhance::{enhance_signals, EnhanceOptions};
use beamsep::eval::{evaluate, format_table, mean_report, EvalReport, ModelLabel};
use beamsep::nn::{load_model, save_model, train as train_model, FeatureScale, Fusion, InputMode, TcnModel};
use beamsep::room::{render_quadruple, sample_scene, SceneGeometry};
use beamsep::wav::{read_wav, write_wav, write_wav_f32};
use clap::Args;
use log::info;
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::json;

use crate::config::{ConfigLock, RunConfig, LOCK_FILE};

/// Invalid invocation detected after argument parsing; exits with code 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn require_out(out: Option<PathBuf>, what: &str) -> Result<PathBuf> {
    out.ok_or_else(|| UsageError(format!("--out <{what}> is required")).into())
}

/// Parses a snake_case enum name the way the config file spells it.
fn parse_name<T: DeserializeOwned>(s: &str) -> std::result::Result<T, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string())).map_err(|_| format!("unknown value `{s}`"))
}

fn parse_condition(s: &str) -> std::result::Result<Condition, String> {
    s.parse().map_err(|e: beamsep::Error| e.to_string())
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

/// `dir/<stem>.<suffix>` for a file output at `path`.
fn sidecar(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}.{suffix}"))
}

fn parent_dir(path: &Path) -> Result<()> {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => create_dir(p),
        _ => Ok(()),
    }
}

#[derive(Debug, Args, Serialize)]
pub struct CorpusArgs {
    /// Utterances in the training split.
    #[arg(long)]
    pub train: Option<usize>,
    #[arg(long)]
    pub dev: Option<usize>,
    #[arg(long)]
    pub test: Option<usize>,
}

pub fn corpus(args: CorpusArgs, mut cfg: RunConfig, out: Option<PathBuf>) -> Result<()> {
    let out = require_out(out, "dir")?;
    for (slot, v) in [(&mut cfg.corpus.train, args.train), (&mut cfg.corpus.dev, args.dev), (&mut cfg.corpus.test, args.test)] {
        if let Some(v) = v {
            *slot = v;
        }
    }
    cfg.validate()?;
    create_dir(&out)?;
    let noise = write_synthetic_corpus(&out, &cfg.corpus, cfg.seed)?;
    ConfigLock::new("corpus", json!(args), &cfg).write(&out.join(LOCK_FILE))?;
    info!("corpus written to {}; noise {}", out.display(), noise.display());
    Ok(())
}

#[derive(Debug, Args, Serialize)]
pub struct DatagenArgs {
    /// no_reverb, rir_matched, rir_multicondition or time_varying_snr.
    #[arg(long, value_parser = parse_condition)]
    pub condition: Condition,
    /// Corpus directory with train/, dev/ and test/ subdirectories.
    #[arg(long)]
    pub corpus: PathBuf,
    /// Noise recording; defaults to `<corpus>/noise.wav`.
    #[arg(long)]
    pub noise: Option<PathBuf>,
    /// Splits to build.
    #[arg(long, value_delimiter = ',', value_parser = parse_name::<Split>, default_value = "train,dev,test")]
    pub splits: Vec<Split>,
}

pub fn datagen(args: DatagenArgs, cfg: RunConfig, out: Option<PathBuf>) -> Result<()> {
    let out = require_out(out, "dir")?;
    cfg.validate()?;
    let noise = args.noise.clone().unwrap_or_else(|| args.corpus.join("noise.wav"));
    create_dir(&out)?;
    for &split in &args.splits {
        let dir = out.join(split.as_str());
        build_dataset(&args.corpus, &noise, &dir, args.condition, split, cfg.seed, &cfg.datagen)?;
        info!("{} {}: {}", args.condition.as_str(), split.as_str(), dir.display());
    }
    ConfigLock::new("datagen", json!(args), &cfg).write(&out.join(LOCK_FILE))
}

#[derive(Debug, Args, Serialize)]
pub struct TrainArgs {
    /// Dataset directory containing train/ and dev/ splits.
    #[arg(long)]
    pub dataset: PathBuf,
    /// Analysis window in frames (160, 320 or 640).
    #[arg(long)]
    pub window: Option<usize>,
    /// cbp or concat.
    #[arg(long, value_parser = parse_name::<Fusion>)]
    pub fusion: Option<Fusion>,
    /// both, b0_only or b1_only.
    #[arg(long, value_parser = parse_name::<InputMode>)]
    pub input_mode: Option<InputMode>,
    /// linear or log1p.
    #[arg(long, value_parser = parse_name::<FeatureScale>)]
    pub features: Option<FeatureScale>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub patience: Option<usize>,
    /// Independent training runs with consecutive seeds.
    #[arg(long, default_value_t = 1)]
    pub repeats: usize,
}

/// Model paths for `repeats` runs: `out` itself, or `<stem>-<k>.<ext>`.
pub fn repeat_paths(out: &Path, repeats: usize) -> Vec<PathBuf> {
    if repeats <= 1 {
        return vec![out.to_path_buf()];
    }
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let ext = out.extension().map(|e| format!(".{}", e.to_string_lossy())).unwrap_or_default();
    (0..repeats).map(|k| out.with_file_name(format!("{stem}-{k}{ext}"))).collect()
}

pub fn train(args: TrainArgs, mut cfg: RunConfig, out: Option<PathBuf>) -> Result<()> {
    let out = require_out(out, "model file")?;
    if args.repeats == 0 {
        return Err(UsageError("--repeats must be at least 1".into()).into());
    }
    let t = &mut cfg.train;
    t.window_frames = args.window.unwrap_or(t.window_frames);
    t.fusion = args.fusion.unwrap_or(t.fusion);
    t.input_mode = args.input_mode.unwrap_or(t.input_mode);
    t.features = args.features.unwrap_or(t.features);
    t.max_epochs = args.epochs.unwrap_or(t.max_epochs);
    t.learning_rate = args.learning_rate.unwrap_or(t.learning_rate);
    t.batch_size = args.batch_size.unwrap_or(t.batch_size);
    t.patience = args.patience.or(t.patience);
    t.seed = cfg.seed;
    cfg.validate()?;

    let w = cfg.train.window_frames;
    let train_set = load_windows(&args.dataset.join(Split::Train.as_str()), w)?;
    let dev_set = load_windows(&args.dataset.join(Split::Dev.as_str()), w)?;
    info!("{} training and {} dev windows of {w} frames", train_set.len(), dev_set.len());
    parent_dir(&out)?;
    for (k, path) in repeat_paths(&out, args.repeats).into_iter().enumerate() {
        let mut run_cfg = cfg.clone();
        run_cfg.train.seed = cfg.seed + k as u64;
        let model = TcnModel::<f32>::new(run_cfg.train.architecture(), run_cfg.train.seed)?;
        let (best, history) = train_model(model, &train_set, &dev_set, &run_cfg.train, |r| {
            info!("run {k} epoch {}: train {:.5} dev {:.5}", r.epoch, r.train_loss, r.dev_loss);
        })?;
        save_model(&best, &path)?;
        write_json(&sidecar(&path, "history.json"), &history)?;
        ConfigLock::new("train", json!(args), &run_cfg).write(&sidecar(&path, LOCK_FILE))?;
        info!("saved {} (best epoch {:?})", path.display(), history.best_epoch);
    }
    Ok(())
}

#[derive(Debug, Args, Serialize)]
pub struct EnhanceArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Beam steered at the target speaker.
    #[arg(long)]
    pub b0: PathBuf,
    /// Beam steered at the interferer.
    #[arg(long)]
    pub b1: PathBuf,
    #[arg(long)]
    pub window: Option<usize>,
    /// Dereverberate both beams before enhancement.
    #[arg(long)]
    pub wpe: bool,
}

pub fn enhance(args: EnhanceArgs, cfg: RunConfig, out: Option<PathBuf>) -> Result<()> {
    let out = require_out(out, "wav file")?;
    cfg.validate()?;
    let model = load_model(&args.model)?;
    let b0 = read_wav(&args.b0)?;
    let b1 = read_wav(&args.b1)?;
    let opts = EnhanceOptions {
        stft: cfg.datagen.stft.clone(),
        window_frames: args.window.unwrap_or(cfg.train.window_frames),
        wpe: args.wpe.then(|| cfg.wpe.clone()),
        batch_size: cfg.eval.batch_size,
    };
    let result = enhance_signals(&b0, &b1, &model, &opts)?;
    parent_dir(&out)?;
    write_wav(&out, &result.waveform)?;
    ConfigLock::new("enhance", json!(args), &cfg).write(&sidecar(&out, LOCK_FILE))
}

#[derive(Debug, Args, Serialize)]
pub struct EvalArgs {
    /// Model file; repeat the flag to evaluate several runs and their mean.
    #[arg(long, required = true)]
    pub model: Vec<PathBuf>,
    /// Dataset directory (with a manifest, or with split subdirectories).
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long, value_parser = parse_name::<Split>, default_value = "test")]
    pub split: Split,
    /// Window widths to sweep (overrides `eval.windows`).
    #[arg(long, value_delimiter = ',')]
    pub windows: Option<Vec<usize>>,
    #[arg(long)]
    pub wpe: bool,
}

pub fn eval(args: EvalArgs, mut cfg: RunConfig, out: Option<PathBuf>) -> Result<()> {
    let out = require_out(out, "dir")?;
    if let Some(w) = &args.windows {
        cfg.eval.windows = w.clone();
    }
    cfg.validate()?;
    let dataset = if args.dataset.join(beamsep::data::MANIFEST_FILE).exists() {
        args.dataset.clone()
    } else {
        args.dataset.join(args.split.as_str())
    };
    let models = args
        .model
        .iter()
        .map(|p| load_model(p).with_context(|| format!("loading {}", p.display())))
        .collect::<Result<Vec<_>>>()?;
    create_dir(&out)?;
    let mut rows: Vec<EvalReport> = Vec::new();
    for &w in &cfg.eval.windows {
        let opts = EnhanceOptions {
            stft: cfg.datagen.stft.clone(),
            window_frames: w,
            wpe: args.wpe.then(|| cfg.wpe.clone()),
            batch_size: cfg.eval.batch_size,
        };
        let mut per_model = Vec::new();
        for (k, (model, path)) in models.iter().zip(&args.model).enumerate() {
            let label = ModelLabel {
                id: path.display().to_string(),
                fusion: Some(model.arch.fusion),
                input_mode: Some(model.arch.input_mode),
            };
            let report = evaluate(&dataset, model, &label, &opts)?;
            let name = if models.len() == 1 { format!("report-w{w}.json") } else { format!("report-w{w}-m{k}.json") };
            write_json(&out.join(name), &report)?;
            per_model.push(report);
        }
        if per_model.len() > 1 {
            let mean = mean_report(&per_model)?;
            write_json(&out.join(format!("report-w{w}-mean.json")), &mean)?;
            rows.push(mean);
        } else {
            rows.extend(per_model);
        }
    }
    let table = format_table(&rows);
    fs::write(out.join("table.txt"), &table).with_context(|| format!("writing table in {}", out.display()))?;
    print!("{table}");
    ConfigLock::new("eval", json!(args), &cfg).write(&out.join(LOCK_FILE))
}

#[derive(Debug, Args, Serialize)]
pub struct BeampatternArgs {
    /// Look direction in degrees from broadside; defaults to the nominal speech angle.
    #[arg(long, allow_hyphen_values = true)]
    pub look: Option<f64>,
    #[arg(long, default_value_t = 1.0)]
    pub angle_step: f64,
    #[arg(long, default_value_t = 125.0)]
    pub freq_step: f64,
    #[arg(long, default_value_t = 8000.0)]
    pub max_freq: f64,
}

fn grid(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    let n = ((hi - lo) / step + 1e-9).floor() as usize;
    (0..=n).map(|i| lo + i as f64 * step).collect()
}

pub fn beampattern(args: BeampatternArgs, cfg: RunConfig, out: Option<PathBuf>) -> Result<()> {
    let out = require_out(out, "dir")?;
    cfg.validate()?;
    if !(args.angle_step > 0.0 && args.freq_step > 0.0 && args.max_freq >= 0.0) {
        return Err(UsageError("steps must be positive and --max-freq nonnegative".into()).into());
    }
    let look = args.look.unwrap_or(cfg.datagen.scene.speech_aoi_deg);
    let beam = BeamformerConfig::new(cfg.datagen.scene.mic_offsets.clone(), look.to_radians())?;
    let rows = gain_grid(&beam, &grid(-90.0, 90.0, args.angle_step), &grid(0.0, args.max_freq, args.freq_step));
    let mut csv = String::from("angle_deg,freq_hz,gain\n");
    for (a, f, g) in rows {
        csv.push_str(&format!("{a},{f},{g:.9}\n"));
    }
    create_dir(&out)?;
    let path = out.join("beampattern.csv");
    fs::write(&path, csv).with_context(|| format!("writing {}", path.display()))?;
    ConfigLock::new("beampattern", json!(args), &cfg).write(&out.join(LOCK_FILE))
}

#[derive(Debug, Args, Serialize)]
pub struct RirArgs {
    /// Scene number; each index draws an independent scene from the seed.
    #[arg(long, default_value_t = 0)]
    pub index: u64,
    /// Use the mean geometry instead of a random draw.
    #[arg(long)]
    pub zero_jitter: bool,
}

#[derive(Debug, Serialize)]
struct RirInfo<'a> {
    scene_seed: u64,
    scene: &'a SceneGeometry,
    speaker_distance: f64,
    /// First nonzero tap of each response, in samples.
    first_arrival: [(&'static str, usize); 4],
    files: Vec<String>,
}

pub fn rir(args: RirArgs, mut cfg: RunConfig, out: Option<PathBuf>) -> Result<()> {
    let out = require_out(out, "dir")?;
    cfg.datagen.scene.zero_jitter |= args.zero_jitter;
    cfg.validate()?;
    let scene_seed = derive_seed(cfg.seed, "rir", args.index);
    let scene = sample_scene(scene_seed, &cfg.datagen.room, &cfg.datagen.scene)?;
    let quad = render_quadruple(&scene)?;
    create_dir(&out)?;
    let mut files = Vec::new();
    let mut first = [("", 0usize); 4];
    for (slot, (name, h)) in first.iter_mut().zip(quad.iter()) {
        let file = format!("{name}.wav");
        write_wav_f32(out.join(&file), h.taps())?;
        files.push(file);
        *slot = (name, h.first_arrival());
    }
    let info = RirInfo {
        scene_seed,
        speaker_distance: scene.speaker_distance(),
        scene: &scene,
        first_arrival: first,
        files,
    };
    write_json(&out.join("scene.json"), &info)?;
    ConfigLock::new("rir", json!(args), &cfg).write(&out.join(LOCK_FILE))
}
