use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::mix::{mix_moving, mix_no_reverb, mix_reverberant, segment_signals, Condition, MixSpec, Trajectory};
use super::{derive_seed, list_split, Split};
use crate::dsp::{SampleBuffer, StftConfig};
use crate::error::{Error, Result};
use crate::nn::AnalysisWindow;
use crate::room::{render_quadruple, sample_scene, RirQuadruple, RoomSpec, SceneConstraints, SceneGeometry};
use crate::wav::{read_wav, write_wav, write_wav_f32};

pub const MANIFEST_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatagenConfig {
    pub room: RoomSpec,
    pub scene: SceneConstraints,
    pub stft: StftConfig,
    pub trajectory: Trajectory,
    /// Peak level the loudest of b0, b1 and s0 is scaled to before writing.
    pub peak_level: f64,
}

impl Default for DatagenConfig {
    fn default() -> Self {
        Self {
            room: RoomSpec::default(),
            scene: SceneConstraints::default(),
            stft: StftConfig::default(),
            trajectory: Trajectory::default(),
            peak_level: 0.9,
        }
    }
}

impl DatagenConfig {
    pub fn validate(&self) -> Result<()> {
        self.room.validate()?;
        self.stft.validate()?;
        self.trajectory.validate()?;
        if !(self.peak_level > 0.0 && self.peak_level <= 1.0) {
            return Err(Error::config("peak_level must be in (0, 1]"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairFiles {
    pub b0: String,
    pub b1: String,
    pub s0: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RirRecord {
    pub id: String,
    pub seed: u64,
    pub scene: SceneGeometry,
    /// `h00`, `h01`, `h10`, `h11` as 32-bit float WAVs.
    pub files: [String; 4],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    /// Clean source file name within the corpus split.
    pub source: String,
    pub seed: u64,
    pub snr_db: f64,
    pub noise_offset: usize,
    /// Gain applied to all three signals to reach the peak level.
    pub level_gain: f64,
    pub files: PairFiles,
    pub rir: Option<String>,
    pub trajectory: Option<Trajectory>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub version: u32,
    pub condition: Condition,
    pub split: Split,
    pub seed: u64,
    pub stft: StftConfig,
    pub rirs: Vec<RirRecord>,
    pub entries: Vec<ManifestEntry>,
}

fn render_record(dir: &Path, id: String, seed: u64, cfg: &DatagenConfig) -> Result<(RirRecord, RirQuadruple)> {
    let scene = sample_scene(seed, &cfg.room, &cfg.scene)?;
    let quad = render_quadruple(&scene)?;
    let mut files: [String; 4] = Default::default();
    for (slot, (name, h)) in files.iter_mut().zip(quad.iter()) {
        *slot = format!("rirs/{id}_{name}.wav");
        write_wav_f32(dir.join(&*slot), h.taps())?;
    }
    Ok((RirRecord { id, seed, scene, files }, quad))
}

fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

/// Mixes every clean utterance of `split` under `condition` and writes the
/// beam signals, target, responses and `manifest.json` into `out_dir`.
///
/// The matched condition renders one response set from `seed` alone, so all
/// splits share it; the other reverberant conditions draw one per utterance.
pub fn build_dataset(
    corpus_dir: &Path,
    noise_path: &Path,
    out_dir: &Path,
    condition: Condition,
    split: Split,
    seed: u64,
    cfg: &DatagenConfig,
) -> Result<DatasetManifest> {
    cfg.validate()?;
    let clean_files = list_split(corpus_dir, split).map_err(|e| match e {
        Error::MissingFiles(mut paths) if !noise_path.exists() => {
            paths.push(noise_path.to_path_buf());
            Error::MissingFiles(paths)
        }
        other => other,
    })?;
    if !noise_path.exists() {
        return Err(Error::MissingFiles(vec![noise_path.to_path_buf()]));
    }
    let noise = read_wav(noise_path)?;
    create_dir(&out_dir.join("audio"))?;
    if condition.is_reverberant() {
        create_dir(&out_dir.join("rirs"))?;
    }

    let matched = if condition == Condition::RirMatched {
        let rseed = derive_seed(seed, "rir_matched", 0);
        Some(render_record(out_dir, "matched".into(), rseed, cfg)?)
    } else {
        None
    };

    let results: Vec<(ManifestEntry, Option<RirRecord>)> = clean_files
        .par_iter()
        .enumerate()
        .map(|(i, path)| -> Result<(ManifestEntry, Option<RirRecord>)> {
            let useed = derive_seed(seed, split.as_str(), i as u64);
            let mut rng = ChaCha8Rng::seed_from_u64(useed);
            let spec = MixSpec::draw(rng.random(), condition);
            let clean = read_wav(path)?;
            if noise.len() < clean.len() {
                return Err(Error::SignalTooShort {
                    len: noise.len(),
                    needed: clean.len(),
                });
            }
            let noise_offset = rng.random_range(0..=noise.len() - clean.len());
            let segment = SampleBuffer::new(noise.samples()[noise_offset..noise_offset + clean.len()].to_vec())?;
            let id = format!("{}_{i:04}", split.as_str());

            let mut record = None;
            let mut trajectory = None;
            let pair = match condition {
                Condition::NoReverb => mix_no_reverb(&clean, &segment, &spec)?,
                Condition::RirMatched => {
                    let (_, quad) = matched.as_ref().expect("rendered above");
                    mix_reverberant(&clean, &segment, quad, &spec)?
                }
                Condition::RirMulticondition | Condition::TimeVaryingSnr => {
                    let (rec, quad) = render_record(out_dir, id.clone(), rng.random(), cfg)?;
                    record = Some(rec);
                    if condition == Condition::TimeVaryingSnr {
                        let traj = if rng.random_bool(0.5) {
                            cfg.trajectory
                        } else {
                            cfg.trajectory.reversed()
                        };
                        trajectory = Some(traj);
                        mix_moving(&clean, &segment, &quad, &spec, &traj)?
                    } else {
                        mix_reverberant(&clean, &segment, &quad, &spec)?
                    }
                }
            };

            let peak = pair.b0.peak().max(pair.b1.peak()).max(pair.s0_ref.peak());
            let level_gain = if peak > 0.0 { cfg.peak_level / peak } else { 1.0 };
            let files = PairFiles {
                b0: format!("audio/{id}_b0.wav"),
                b1: format!("audio/{id}_b1.wav"),
                s0: format!("audio/{id}_s0.wav"),
            };
            write_wav(out_dir.join(&files.b0), &pair.b0.scaled(level_gain))?;
            write_wav(out_dir.join(&files.b1), &pair.b1.scaled(level_gain))?;
            write_wav(out_dir.join(&files.s0), &pair.s0_ref.scaled(level_gain))?;
            let entry = ManifestEntry {
                rir: match (&record, &matched) {
                    (Some(r), _) | (None, Some((r, _))) => Some(r.id.clone()),
                    _ => None,
                },
                id,
                source: path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default(),
                seed: useed,
                snr_db: spec.snr_b0,
                noise_offset,
                level_gain,
                files,
                trajectory,
            };
            Ok((entry, record))
        })
        .collect::<Result<_>>()?;

    let mut rirs: Vec<RirRecord> = matched.map(|(r, _)| r).into_iter().collect();
    let mut entries = Vec::with_capacity(results.len());
    for (entry, record) in results {
        entries.push(entry);
        rirs.extend(record);
    }
    let manifest = DatasetManifest {
        version: MANIFEST_VERSION,
        condition,
        split,
        seed,
        stft: cfg.stft,
        rirs,
        entries,
    };
    let path = out_dir.join(MANIFEST_FILE);
    let json = serde_json::to_string_pretty(&manifest)?;
    std::fs::write(&path, json).map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}

/// Reads a manifest from a dataset directory or a manifest file path.
pub fn load_manifest(path: &Path) -> Result<(DatasetManifest, PathBuf)> {
    let file = if path.is_dir() { path.join(MANIFEST_FILE) } else { path.to_path_buf() };
    if !file.exists() {
        return Err(Error::MissingFiles(vec![file]));
    }
    let text = std::fs::read_to_string(&file).map_err(|e| Error::io(&file, e))?;
    let manifest: DatasetManifest = serde_json::from_str(&text)?;
    if manifest.version != MANIFEST_VERSION {
        return Err(Error::config(format!(
            "manifest version {} is not supported (expected {MANIFEST_VERSION})",
            manifest.version
        )));
    }
    let dir = file.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok((manifest, dir))
}

/// Errors with every audio file the manifest references but the disk lacks.
pub fn check_files(manifest: &DatasetManifest, dir: &Path) -> Result<()> {
    let missing: Vec<PathBuf> = manifest
        .entries
        .iter()
        .flat_map(|e| [&e.files.b0, &e.files.b1, &e.files.s0])
        .map(|f| dir.join(f))
        .filter(|p| !p.exists())
        .collect();
    if missing.is_empty() {
        Ok(())
    } else {
        Err(Error::MissingFiles(missing))
    }
}

/// `(b0, b1, s0)` of one entry.
pub fn load_utterance(entry: &ManifestEntry, dir: &Path) -> Result<(SampleBuffer, SampleBuffer, SampleBuffer)> {
    Ok((
        read_wav(dir.join(&entry.files.b0))?,
        read_wav(dir.join(&entry.files.b1))?,
        read_wav(dir.join(&entry.files.s0))?,
    ))
}

/// All analysis windows of a dataset, in manifest order.
pub fn load_windows(path: &Path, window_frames: usize) -> Result<Vec<AnalysisWindow>> {
    let (manifest, dir) = load_manifest(path)?;
    check_files(&manifest, &dir)?;
    let per_utt: Vec<Vec<AnalysisWindow>> = manifest
        .entries
        .par_iter()
        .map(|e| {
            let (b0, b1, s0) = load_utterance(e, &dir)?;
            segment_signals(&b0, &b1, &s0, &manifest.stft, window_frames)
        })
        .collect::<Result<_>>()?;
    Ok(per_utt.into_iter().flatten().collect())
}
