//! Simulated datasets: corpus access, per-split sample generation and
//! JSON-lines manifests.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::acoustics::speech::synthetic_utterance;
use crate::acoustics::{render_scene, sample_scene, RenderedSample, Scene, NUM_INTERFERERS};
use crate::error::{Error, Result};
use crate::seed::{derive_seed, substream};
use crate::signal::{read_wav, write_wav, WavFormat};

pub const SAMPLE_RATE: u32 = 16_000;
/// Speakers per scene: the target and the interferers.
pub const SOURCES_PER_SAMPLE: usize = NUM_INTERFERERS + 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Validation, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Validation => "validation",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "validation" | "val" => Ok(Split::Validation),
            "test" => Ok(Split::Test),
            other => Err(Error::InvalidArgument(format!("unknown split {other:?}"))),
        }
    }
}

/// Number of samples per split.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitCounts {
    pub train: usize,
    pub validation: usize,
    pub test: usize,
}

impl Default for SplitCounts {
    fn default() -> Self {
        Self {
            train: 6000,
            validation: 1000,
            test: 600,
        }
    }
}

impl SplitCounts {
    pub fn get(&self, split: Split) -> usize {
        match split {
            Split::Train => self.train,
            Split::Validation => self.validation,
            Split::Test => self.test,
        }
    }

    pub fn total(&self) -> usize {
        self.train + self.validation + self.test
    }
}

/// Source of dry utterances.
#[derive(Debug, Clone, PartialEq)]
pub enum Corpus {
    /// Generated speech stand-ins of fixed duration; every sample draws fresh
    /// utterances, so splits never share sources.
    Synthetic { seconds: f64 },
    /// Mono 16 kHz WAV files, partitioned into disjoint per-split pools.
    Directory { files: Vec<PathBuf>, pools: HashMap<Split, Vec<usize>> },
}

impl Corpus {
    pub fn synthetic(seconds: f64) -> Self {
        Corpus::Synthetic { seconds }
    }

    /// Scans `dir` recursively for `.wav` files and assigns each to one split
    /// pool in proportion to `counts`.
    pub fn directory(dir: &Path, counts: SplitCounts, seed: u64) -> Result<Self> {
        let mut files = Vec::new();
        collect_wavs(dir, &mut files)?;
        files.sort();
        let active: Vec<Split> = Split::ALL.into_iter().filter(|&s| counts.get(s) > 0).collect();
        let needed = active.len() * SOURCES_PER_SAMPLE;
        if files.len() < needed {
            return Err(Error::Dataset(format!(
                "corpus {} has {} utterances; disjoint splits need at least {needed} ({SOURCES_PER_SAMPLE} per split)",
                dir.display(),
                files.len()
            )));
        }
        let mut order: Vec<usize> = (0..files.len()).collect();
        order.shuffle(&mut substream(seed, "corpus-split", 0));
        let mut sizes: Vec<usize> = active
            .iter()
            .map(|&s| (files.len() * counts.get(s) / counts.total()).max(SOURCES_PER_SAMPLE))
            .collect();
        let assigned: usize = sizes.iter().sum();
        if assigned > files.len() {
            return Err(Error::Dataset(format!(
                "corpus {} has {} utterances; the requested split proportions need {assigned}",
                dir.display(),
                files.len()
            )));
        }
        let largest = (0..sizes.len()).max_by_key(|&i| sizes[i]).expect("one split");
        sizes[largest] += files.len() - assigned;
        let mut pools = HashMap::new();
        let mut start = 0;
        for (split, size) in active.iter().zip(sizes) {
            pools.insert(*split, order[start..start + size].to_vec());
            start += size;
        }
        Ok(Corpus::Directory { files, pools })
    }

    /// Loads the dry utterances of one sample: the target first.
    fn utterances(&self, split: Split, index: usize, seed: u64) -> Result<(Vec<Vec<f64>>, Vec<String>)> {
        match self {
            Corpus::Synthetic { seconds } => {
                let mut signals = Vec::with_capacity(SOURCES_PER_SAMPLE);
                let mut ids = Vec::with_capacity(SOURCES_PER_SAMPLE);
                for j in 0..SOURCES_PER_SAMPLE {
                    let n = (index * SOURCES_PER_SAMPLE + j) as u64;
                    let utt_seed = derive_seed(seed, &format!("utterance-{split}"), n);
                    signals.push(synthetic_utterance(utt_seed, *seconds, SAMPLE_RATE));
                    ids.push(format!("synthetic:{split}:{n}"));
                }
                Ok((signals, ids))
            }
            Corpus::Directory { files, pools } => {
                let pool = pools
                    .get(&split)
                    .ok_or_else(|| Error::Dataset(format!("no utterance pool for split {split}")))?;
                let mut rng = substream(seed, &format!("sources-{split}"), index as u64);
                let chosen: Vec<usize> = pool.choose_multiple(&mut rng, SOURCES_PER_SAMPLE).copied().collect();
                let mut signals = Vec::with_capacity(SOURCES_PER_SAMPLE);
                for &i in &chosen {
                    let wave = read_wav(&files[i])?;
                    if wave.sample_rate != SAMPLE_RATE {
                        return Err(Error::SampleRate {
                            expected: SAMPLE_RATE,
                            actual: wave.sample_rate,
                        });
                    }
                    signals.push(wave.channel_vec(0));
                }
                let len = signals[0].len();
                for s in signals.iter_mut().skip(1) {
                    *s = (0..len).map(|n| s[n % s.len()]).collect();
                }
                let ids = chosen.iter().map(|&i| files[i].display().to_string()).collect();
                Ok((signals, ids))
            }
        }
    }
}

fn collect_wavs(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.is_dir() {
            collect_wavs(&path, out)?;
        } else if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("wav")) {
            out.push(path);
        }
    }
    Ok(())
}

/// One generated sample with its provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedSample {
    pub id: String,
    pub split: Split,
    pub sample: RenderedSample,
    pub sources: Vec<String>,
    pub seed: u64,
}

pub fn sample_id(split: Split, index: usize) -> String {
    format!("{split}-{index:05}")
}

/// Renders sample `index` of `split`; independent of every other sample.
pub fn generate_sample(corpus: &Corpus, split: Split, index: usize, seed: u64) -> Result<GeneratedSample> {
    let scene_seed = derive_seed(seed, &format!("scene-{split}"), index as u64);
    let scene = sample_scene(scene_seed)?;
    let (signals, sources) = corpus.utterances(split, index, seed)?;
    let sample = render_scene(&scene, &signals[0], &signals[1..])?;
    Ok(GeneratedSample {
        id: sample_id(split, index),
        split,
        sample,
        sources,
        seed: scene_seed,
    })
}

/// Renders `count` samples of a split in parallel, in index order.
pub fn generate_split(corpus: &Corpus, split: Split, count: usize, seed: u64) -> Result<Vec<GeneratedSample>> {
    (0..count)
        .into_par_iter()
        .map(|i| generate_sample(corpus, split, i, seed))
        .collect()
}

/// Manifest line describing one stored sample. Paths are relative to the
/// dataset directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRecord {
    pub id: String,
    pub split: Split,
    pub noisy: PathBuf,
    pub target_aligned: PathBuf,
    pub noise: PathBuf,
    pub scene: Scene,
    pub snr_db: f64,
    pub sources: Vec<String>,
    pub seed: u64,
}

pub fn manifest_path(dir: &Path, split: Split) -> PathBuf {
    dir.join(format!("{split}.jsonl"))
}

/// Writes the sample's WAV files below `dir/<split>/` and returns its record.
pub fn store_sample(dir: &Path, g: &GeneratedSample) -> Result<ManifestRecord> {
    let sub = PathBuf::from(g.split.name());
    fs::create_dir_all(dir.join(&sub)).map_err(|e| Error::io(dir.join(&sub), e))?;
    let rel = |stem: &str| sub.join(format!("{}_{stem}.wav", g.id));
    let record = ManifestRecord {
        id: g.id.clone(),
        split: g.split,
        noisy: rel("noisy"),
        target_aligned: rel("target"),
        noise: rel("noise"),
        scene: g.sample.scene.clone().ok_or_else(|| Error::Dataset(format!("{} has no scene", g.id)))?,
        snr_db: g.sample.snr_db,
        sources: g.sources.clone(),
        seed: g.seed,
    };
    write_wav(dir.join(&record.noisy), &g.sample.noisy, WavFormat::Float32)?;
    write_wav(dir.join(&record.target_aligned), &g.sample.target_aligned, WavFormat::Float32)?;
    write_wav(dir.join(&record.noise), &g.sample.noise, WavFormat::Float32)?;
    Ok(record)
}

pub fn write_manifest(path: &Path, records: &[ManifestRecord]) -> Result<()> {
    let mut text = String::new();
    for r in records {
        text.push_str(&serde_json::to_string(r)?);
        text.push('\n');
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))
}

/// Reads a manifest and checks that ids are unique and files exist.
pub fn read_manifest(path: &Path) -> Result<Vec<ManifestRecord>> {
    let f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or(Path::new("."));
    let mut records = Vec::new();
    let mut ids = HashSet::new();
    for (n, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let r: ManifestRecord = serde_json::from_str(&line)
            .map_err(|e| Error::Dataset(format!("{}:{}: {e}", path.display(), n + 1)))?;
        if !ids.insert(r.id.clone()) {
            return Err(Error::Dataset(format!("{}: duplicate id {}", path.display(), r.id)));
        }
        for file in [&r.noisy, &r.target_aligned, &r.noise] {
            if !base.join(file).is_file() {
                return Err(Error::Dataset(format!("{}: missing file {}", r.id, file.display())));
            }
        }
        records.push(r);
    }
    Ok(records)
}

/// Fails if two splits share a source utterance or a sample id.
pub fn check_disjoint(splits: &[(Split, &[ManifestRecord])]) -> Result<()> {
    let mut owner: HashMap<&str, Split> = HashMap::new();
    let mut ids: HashSet<&str> = HashSet::new();
    for (split, records) in splits {
        for r in records.iter() {
            if r.split != *split {
                return Err(Error::Dataset(format!("{} listed in {split} but tagged {}", r.id, r.split)));
            }
            if !ids.insert(&r.id) {
                return Err(Error::Dataset(format!("sample id {} appears in several splits", r.id)));
            }
            for s in &r.sources {
                if let Some(&other) = owner.get(s.as_str()) {
                    if other != *split {
                        return Err(Error::Dataset(format!("utterance {s} is shared by {other} and {split}")));
                    }
                }
                owner.insert(s, *split);
            }
        }
    }
    Ok(())
}

/// Manifests of all splits present in a dataset directory.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub dir: PathBuf,
    pub splits: HashMap<Split, Vec<ManifestRecord>>,
}

impl Dataset {
    /// Loads every `<split>.jsonl` in `dir` and validates split disjointness.
    pub fn open(dir: &Path) -> Result<Self> {
        let mut splits = HashMap::new();
        for split in Split::ALL {
            let path = manifest_path(dir, split);
            if path.is_file() {
                splits.insert(split, read_manifest(&path)?);
            }
        }
        if splits.is_empty() {
            return Err(Error::Dataset(format!("no manifests in {}", dir.display())));
        }
        let view: Vec<(Split, &[ManifestRecord])> = Split::ALL
            .iter()
            .filter_map(|s| splits.get(s).map(|r| (*s, r.as_slice())))
            .collect();
        check_disjoint(&view)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            splits,
        })
    }

    pub fn records(&self, split: Split) -> Result<&[ManifestRecord]> {
        self.splits
            .get(&split)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::Dataset(format!("dataset has no {split} split")))
    }

    pub fn load(&self, record: &ManifestRecord) -> Result<RenderedSample> {
        let noisy = read_wav(self.dir.join(&record.noisy))?;
        let target_aligned = read_wav(self.dir.join(&record.target_aligned))?;
        let noise = read_wav(self.dir.join(&record.noise))?;
        if target_aligned.len() != noisy.len() || noise.len() != noisy.len() {
            return Err(Error::LengthMismatch(format!("stems of {} differ in length", record.id)));
        }
        Ok(RenderedSample {
            noisy,
            target_aligned,
            noise,
            snr_db: record.snr_db,
            scene: Some(record.scene.clone()),
        })
    }

    pub fn load_split(&self, split: Split) -> Result<Vec<RenderedSample>> {
        self.records(split)?.par_iter().map(|r| self.load(r)).collect()
    }
}

/// Mean and in-band fraction of the per-sample SNRs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SnrSummary {
    pub count: usize,
    pub mean_db: f64,
    pub std_db: f64,
    /// Fraction of samples with SNR in [-9, 2] dB.
    pub in_band: f64,
}

pub fn snr_summary(snrs: &[f64]) -> SnrSummary {
    let n = snrs.len().max(1) as f64;
    let mean = snrs.iter().sum::<f64>() / n;
    let var = snrs.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / n;
    SnrSummary {
        count: snrs.len(),
        mean_db: mean,
        std_db: var.sqrt(),
        in_band: snrs.iter().filter(|s| (-9.0..=2.0).contains(*s)).count() as f64 / n,
    }
}

/// Renders and stores a full dataset; manifests are written after all
/// samples of a split succeed.
pub fn simulate_dataset(dir: &Path, corpus: &Corpus, counts: SplitCounts, seed: u64) -> Result<Dataset> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for split in Split::ALL {
        let count = counts.get(split);
        if count == 0 {
            continue;
        }
        let records: Vec<ManifestRecord> = (0..count)
            .into_par_iter()
            .map(|i| store_sample(dir, &generate_sample(corpus, split, i, seed)?))
            .collect::<Result<_>>()?;
        write_manifest(&manifest_path(dir, split), &records)?;
    }
    Dataset::open(dir)
}
