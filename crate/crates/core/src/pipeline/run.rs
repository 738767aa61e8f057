use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use log::info;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::audio::load_wav;
use crate::cluster::{build_similarity_matrix, cluster, cluster_count_profile, read_clusters, write_clusters, ClusterAssignment};
use crate::error::{AudError, Result};
use crate::features::{extract, FeatureKind, FeatureSequence, FrameConfig};
use crate::hmm::{init_inventory, self_train, transcribe_prepared, AuInventory, ConvergenceReport, Grammar, Stage, Transcription};
use crate::matrix::Matrix;
use crate::metrics::{bitrate, BitrateReport};
use crate::segment::{read_segments, segment_syllables, summary_report, write_segments, Segment, SegmentKind};

use super::config::PipelineConfig;
use super::manifest::{CorpusManifest, ManifestEntry};

pub const STAGES: [&str; 8] = ["features", "segment", "cluster", "init", "stage1", "stage2", "transcribe", "eval"];

/// Directory layout of a pipeline run.
#[derive(Debug, Clone)]
pub struct RunLayout {
    pub root: PathBuf,
}

impl RunLayout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn dir(&self, stage: &str) -> PathBuf {
        match stage {
            "transcribe" => self.root.join("transcriptions"),
            other => self.root.join(other),
        }
    }

    pub fn features(&self) -> PathBuf {
        self.dir("features")
    }

    pub fn segments(&self) -> PathBuf {
        self.dir("segment")
    }

    pub fn clusters_file(&self) -> PathBuf {
        self.dir("cluster").join("clusters.tsv")
    }

    pub fn inventory(&self, stage: &str) -> PathBuf {
        self.dir(stage).join("inventory.json")
    }

    pub fn transcriptions(&self) -> PathBuf {
        self.dir("transcribe")
    }

    fn record(&self, stage: &str) -> PathBuf {
        self.root.join("stages").join(format!("{stage}.json"))
    }

    fn log(&self, stage: &str) -> PathBuf {
        self.root.join("logs").join(format!("{stage}.log"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StageOutcome {
    Executed,
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub stages: Vec<(String, StageOutcome)>,
    pub inventory_size: usize,
    pub n_clusters: usize,
    pub stage1: ConvergenceReport,
    pub stage2: ConvergenceReport,
    pub bitrate: BitrateReport,
}

impl RunSummary {
    pub fn outcome(&self, stage: &str) -> Option<StageOutcome> {
        self.stages.iter().find(|(s, _)| s == stage).map(|(_, o)| *o)
    }
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
struct StageRecord {
    stage: String,
    fingerprint: String,
    outputs: BTreeMap<String, String>,
}

fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| AudError::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Regular files directly inside `dir`, sorted by name.
fn files_in(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| AudError::io(dir, e))? {
        let entry = entry.map_err(|e| AudError::io(dir, e))?;
        if entry.file_type().map_err(|e| AudError::io(dir, e))?.is_file() {
            out.push(entry.path());
        }
    }
    out.sort();
    Ok(out)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| AudError::io(path, e))
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| AudError::io(path, e))
}

/// Removes and recreates a stage output directory so stale files never survive a rerun.
fn fresh_dir(path: &Path) -> Result<()> {
    if path.exists() {
        fs::remove_dir_all(path).map_err(|e| AudError::io(path, e))?;
    }
    create_dir(path)
}

/// Exclusive claim on an output directory, released on drop.
struct RunLock {
    path: PathBuf,
}

impl RunLock {
    fn acquire(root: &Path) -> Result<Self> {
        let path = root.join("run.lock");
        fs::OpenOptions::new()
            .write(true)
            .create_new(true)
            .open(&path)
            .map_err(|e| match e.kind() {
                std::io::ErrorKind::AlreadyExists => AudError::Config(format!(
                    "{} is in use by another run (delete {} if that run is gone)",
                    root.display(),
                    path.display()
                )),
                _ => AudError::io(&path, e),
            })?;
        Ok(Self { path })
    }
}

impl Drop for RunLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

/// Deterministic per-stage log: plain lines, no timestamps.
#[derive(Debug, Default)]
pub struct StageLog {
    lines: Vec<String>,
}

impl StageLog {
    pub fn note(&mut self, line: impl Into<String>) {
        let line = line.into();
        info!("{line}");
        self.lines.push(line);
    }
}

struct Runner<'a> {
    layout: &'a RunLayout,
    outcomes: Vec<(String, StageOutcome)>,
}

impl Runner<'_> {
    /// Runs `body` unless a previous run left a record whose fingerprint (config section and
    /// input hashes) matches and whose outputs are intact.
    fn stage(
        &mut self,
        name: &str,
        config: &impl Serialize,
        inputs: &[(String, PathBuf)],
        body: impl FnOnce(&mut StageLog) -> Result<()>,
    ) -> Result<()> {
        let run = || -> Result<StageOutcome> {
            let mut h = Sha256::new();
            h.update(name.as_bytes());
            h.update(serde_json::to_vec(config)?);
            for (key, path) in inputs {
                h.update(key.as_bytes());
                h.update(sha256_file(path)?.as_bytes());
            }
            let fingerprint = hex::encode(h.finalize());
            let record_path = self.layout.record(name);
            let out_dir = self.layout.dir(name);
            if let Ok(text) = fs::read_to_string(&record_path) {
                if let Ok(rec) = serde_json::from_str::<StageRecord>(&text) {
                    if rec.fingerprint == fingerprint && self.outputs(&out_dir).ok().as_ref() == Some(&rec.outputs) {
                        info!("{name}: up to date, skipped");
                        return Ok(StageOutcome::Skipped);
                    }
                }
                let _ = fs::remove_file(&record_path);
            }
            fresh_dir(&out_dir)?;
            let mut log = StageLog::default();
            body(&mut log)?;
            let mut text = log.lines.join("\n");
            text.push('\n');
            write_text(&self.layout.log(name), &text)?;
            let rec = StageRecord {
                stage: name.to_string(),
                fingerprint,
                outputs: self.outputs(&out_dir)?,
            };
            write_text(&record_path, &(serde_json::to_string_pretty(&rec)? + "\n"))?;
            Ok(StageOutcome::Executed)
        };
        let outcome = run().map_err(|e| e.in_stage(name))?;
        self.outcomes.push((name.to_string(), outcome));
        Ok(())
    }

    fn outputs(&self, dir: &Path) -> Result<BTreeMap<String, String>> {
        files_in(dir)?
            .into_iter()
            .map(|p| {
                let name = p.file_name().unwrap().to_string_lossy().into_owned();
                Ok((name, sha256_file(&p)?))
            })
            .collect()
    }
}

/// Every file of a stage directory as a fingerprint input.
fn dir_inputs(layout: &RunLayout, stage: &str) -> Result<Vec<(String, PathBuf)>> {
    Ok(files_in(&layout.dir(stage))?
        .into_iter()
        .map(|p| (format!("{stage}/{}", p.file_name().unwrap().to_string_lossy()), p))
        .collect())
}

const FEATURE_INDEX: &str = "index.tsv";

/// MFCCs of every utterance as `<id>.audf`, plus `index.tsv` with sample rate and length.
pub fn compute_features(manifest: &CorpusManifest, cfg: &crate::features::MfccConfig, out_dir: &Path, log: &mut StageLog) -> Result<()> {
    create_dir(out_dir)?;
    let rows = manifest
        .entries
        .par_iter()
        .map(|e| {
            let audio = load_wav(&e.path)?;
            let feats = extract(&audio, cfg)?;
            Matrix::from_f64(feats.len(), feats.dim(), feats.as_slice())?.write(out_dir.join(format!("{}.audf", e.utterance_id)))?;
            Ok(format!("{}\t{}\t{}\t{}\n", e.utterance_id, audio.sample_rate, audio.len(), feats.len()))
        })
        .collect::<Result<Vec<_>>>()?;
    write_text(&out_dir.join(FEATURE_INDEX), &rows.concat())?;
    log.note(format!("features: {} utterances, dim {}", manifest.len(), cfg.dim()));
    Ok(())
}

/// MFCCs of every manifest entry, in manifest order.
pub fn extract_corpus(manifest: &CorpusManifest, cfg: &crate::features::MfccConfig) -> Result<Vec<(String, FeatureSequence)>> {
    manifest
        .entries
        .par_iter()
        .map(|e| Ok((e.utterance_id.clone(), extract(&load_wav(&e.path)?, cfg)?)))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct UtteranceInfo {
    pub sample_rate: u32,
    pub n_samples: usize,
}

impl UtteranceInfo {
    pub fn duration(&self) -> f64 {
        self.n_samples as f64 / self.sample_rate as f64
    }
}

pub fn read_feature_index(dir: &Path) -> Result<BTreeMap<String, UtteranceInfo>> {
    let path = dir.join(FEATURE_INDEX);
    let text = fs::read_to_string(&path).map_err(|e| AudError::io(&path, e))?;
    text.lines()
        .filter(|l| !l.is_empty())
        .map(|l| {
            let c: Vec<&str> = l.split('\t').collect();
            let bad = || AudError::parse(path.display().to_string(), format!("bad row `{l}`"));
            if c.len() != 4 {
                return Err(bad());
            }
            Ok((
                c[0].to_string(),
                UtteranceInfo {
                    sample_rate: c[1].parse().map_err(|_| bad())?,
                    n_samples: c[2].parse().map_err(|_| bad())?,
                },
            ))
        })
        .collect()
}

/// Reads the stored MFCCs of the given utterances, with frame times rebuilt from `frame`.
pub fn load_features<'a>(dir: &Path, ids: impl IntoIterator<Item = &'a str>, frame: &FrameConfig) -> Result<Vec<(String, FeatureSequence)>> {
    let index = read_feature_index(dir)?;
    ids.into_iter()
        .map(|id| {
            let info = index
                .get(id)
                .ok_or_else(|| AudError::Missing(format!("features for {id}")))?;
            let m = Matrix::read(dir.join(format!("{id}.audf")))?;
            let times = (0..m.rows).map(|t| frame.frame_time(t, info.sample_rate)).collect();
            Ok((id.to_string(), FeatureSequence::new(m.to_f64(), m.cols, times, FeatureKind::Mfcc)?))
        })
        .collect()
}

pub fn segment_corpus(manifest: &CorpusManifest, cfg: &super::config::SegmentationConfig, out_dir: &Path, log: &mut StageLog) -> Result<()> {
    create_dir(out_dir)?;
    let all = manifest
        .entries
        .par_iter()
        .map(|e| {
            let audio = load_wav(&e.path)?;
            let segs = segment_syllables(&audio, &cfg.frame, &cfg.group_delay)?;
            write_segments(out_dir.join(format!("{}.tsv", e.utterance_id)), &segs)?;
            Ok(segs)
        })
        .collect::<Result<Vec<_>>>()?;
    let summary = summary_report(&all);
    write_text(&out_dir.join("summary.txt"), &summary)?;
    for line in summary.lines().take(3) {
        log.note(format!("segment: {line}"));
    }
    Ok(())
}

pub fn load_segments<'a>(dir: &Path, ids: impl IntoIterator<Item = &'a str>) -> Result<Vec<Vec<Segment>>> {
    ids.into_iter()
        .map(|id| read_segments(dir.join(format!("{id}.tsv")), id))
        .collect()
}

/// Feature slices of all segments of `kind`, named `<utt>_<nnn>` in corpus order.
pub fn segment_features(features: &[(String, FeatureSequence)], segments: &[Vec<Segment>], kind: SegmentKind) -> Result<Vec<(String, FeatureSequence)>> {
    let mut out = Vec::new();
    for ((id, f), segs) in features.iter().zip(segments) {
        for (k, s) in segs.iter().filter(|s| s.kind == kind).enumerate() {
            let r = f.frames_between(s.start, s.end);
            if r.is_empty() {
                continue;
            }
            out.push((format!("{id}_{k:03}"), f.slice(r)?));
        }
    }
    Ok(out)
}

fn cluster_stage(layout: &RunLayout, ids: &[&str], cfg: &PipelineConfig, log: &mut StageLog) -> Result<()> {
    let features = load_features(&layout.features(), ids.iter().copied(), &cfg.features.frame)?;
    let segments = load_segments(&layout.segments(), ids.iter().copied())?;
    let syll = segment_features(&features, &segments, SegmentKind::Syllable)?;
    if syll.len() < 2 {
        return Err(AudError::Degenerate(format!("{} syllable segments; need at least 2", syll.len())));
    }
    let sim = build_similarity_matrix(&syll, &cfg.clustering.dtw)?;
    let assignment = cluster(&sim, &cfg.clustering)?;
    let out = layout.dir("cluster");
    sim.to_matrix()?.write(out.join("similarity.audf"))?;
    let seg_ids: Vec<String> = syll.iter().map(|(id, _)| id.clone()).collect();
    write_clusters(out.join("clusters.tsv"), &seg_ids, &assignment)?;
    let profile: String = cluster_count_profile(&sim, cfg.clustering.min_cluster_size)
        .iter()
        .map(|(k, c, a)| format!("{k}\t{c}\t{a}\n"))
        .collect();
    write_text(&out.join("profile.tsv"), &format!("k\tclusters\tassigned\n{profile}"))?;
    log.note(format!(
        "cluster: {} segments, k = {}, {} clusters, {} assigned, sigma {:.6}",
        syll.len(),
        assignment.k_neighbors,
        assignment.n_clusters,
        assignment.assigned(),
        sim.sigma
    ));
    if assignment.n_clusters == 0 {
        return Err(AudError::Degenerate("no cluster reached the minimum size".into()));
    }
    Ok(())
}

/// Rebuilds a cluster assignment from `clusters.tsv`, checking it matches the segments.
pub fn load_assignment(path: &Path, segment_ids: &[String]) -> Result<ClusterAssignment> {
    let rows = read_clusters(path)?;
    if rows.len() != segment_ids.len() || rows.iter().zip(segment_ids).any(|((a, _), b)| a != b) {
        return Err(AudError::Format(format!("{} does not match the segment list", path.display())));
    }
    let labels: Vec<Option<usize>> = rows.into_iter().map(|(_, l)| l).collect();
    let n_clusters = labels.iter().flatten().max().map_or(0, |m| m + 1);
    Ok(ClusterAssignment {
        labels,
        k_neighbors: 0,
        n_clusters,
    })
}

fn init_stage(layout: &RunLayout, ids: &[&str], cfg: &PipelineConfig, log: &mut StageLog) -> Result<()> {
    let features = load_features(&layout.features(), ids.iter().copied(), &cfg.features.frame)?;
    let segments = load_segments(&layout.segments(), ids.iter().copied())?;
    let syll = segment_features(&features, &segments, SegmentKind::Syllable)?;
    let sil = segment_features(&features, &segments, SegmentKind::Silence)?;
    let seg_ids: Vec<String> = syll.iter().map(|(id, _)| id.clone()).collect();
    let assignment = load_assignment(&layout.clusters_file(), &seg_ids)?;
    let seqs: Vec<FeatureSequence> = syll.into_iter().map(|(_, f)| f).collect();
    let sil: Vec<FeatureSequence> = sil.into_iter().map(|(_, f)| f).collect();
    let inv = init_inventory(&assignment, &seqs, &sil, &cfg.init)?;
    inv.save(layout.inventory("init"))?;
    log.note(format!(
        "init: {} clusters, {} units, {} silence segments",
        assignment.n_clusters,
        inv.len(),
        sil.len()
    ));
    Ok(())
}

fn write_report(dir: &Path, report: &ConvergenceReport, log: &mut StageLog) -> Result<()> {
    for it in &report.iterations {
        log.note(format!(
            "{:?} iteration {}: log-likelihood {:.6}, label change {:.6}",
            report.stage, it.iteration, it.log_likelihood, it.change_fraction
        ));
    }
    log.note(format!(
        "{:?}: stopped ({:?}) after {} passes, converged = {}",
        report.stage, report.stop, report.passes, report.converged
    ));
    write_text(&dir.join("report.json"), &(serde_json::to_string_pretty(report)? + "\n"))
}

pub fn read_report(dir: &Path) -> Result<ConvergenceReport> {
    let path = dir.join("report.json");
    let text = fs::read_to_string(&path).map_err(|e| AudError::io(&path, e))?;
    Ok(serde_json::from_str(&text)?)
}

fn stage1(layout: &RunLayout, ids: &[&str], cfg: &PipelineConfig, log: &mut StageLog) -> Result<()> {
    let features = load_features(&layout.features(), ids.iter().copied(), &cfg.features.frame)?;
    let segments = load_segments(&layout.segments(), ids.iter().copied())?;
    let syll = segment_features(&features, &segments, SegmentKind::Syllable)?;
    let inv = AuInventory::load(layout.inventory("init"))?;
    let (inv, _, report) = self_train(&inv, &syll, Stage::Stage1Syllables, &cfg.stage1)?;
    inv.save(layout.inventory("stage1"))?;
    write_report(&layout.dir("stage1"), &report, log)
}

fn stage2(layout: &RunLayout, ids: &[&str], cfg: &PipelineConfig, log: &mut StageLog) -> Result<()> {
    let features = load_features(&layout.features(), ids.iter().copied(), &cfg.features.frame)?;
    let inv = AuInventory::load(layout.inventory("stage1"))?;
    let (inv, _, report) = self_train(&inv, &features, Stage::Stage2Continuous, &cfg.stage2)?;
    inv.save(layout.inventory("stage2"))?;
    write_report(&layout.dir("stage2"), &report, log)
}

/// Free-loop transcription of every utterance into `out_dir`.
pub fn transcribe_corpus(inv: &AuInventory, features: &[(String, FeatureSequence)], grammar: Grammar, out_dir: &Path) -> Result<Vec<Transcription>> {
    create_dir(out_dir)?;
    let prepared = inv.prepare();
    let trans = features
        .par_iter()
        .map(|(id, f)| transcribe_prepared(inv, &prepared, f, grammar, id))
        .collect::<Result<Vec<_>>>()?;
    for t in &trans {
        t.write(out_dir)?;
    }
    Ok(trans)
}

fn eval_stage(layout: &RunLayout, ids: &[&str], cfg: &PipelineConfig, log: &mut StageLog) -> Result<()> {
    let index = read_feature_index(&layout.features())?;
    let trans = ids
        .iter()
        .map(|id| Transcription::read(layout.transcriptions(), id))
        .collect::<Result<Vec<_>>>()?;
    let duration: f64 = ids
        .iter()
        .map(|id| index.get(*id).map(UtteranceInfo::duration).ok_or_else(|| AudError::Missing(format!("index row for {id}"))))
        .sum::<Result<f64>>()?;
    let with = bitrate(&trans, duration, false)?;
    let without = bitrate(&trans, duration, true).ok();
    let out = layout.dir("eval");
    let chosen = if cfg.eval.exclude_silence {
        without.clone().ok_or_else(|| AudError::EmptyInput("only silence was transcribed".into()))?
    } else {
        with.clone()
    };
    write_text(&out.join("bitrate.json"), &(serde_json::to_string_pretty(&chosen)? + "\n"))?;
    let mut report = format!(
        "utterances\t{}\nduration_s\t{:.6}\nsymbols\t{}\ndistinct_symbols\t{}\nentropy_bits\t{:.6}\nbitrate\t{:.6}\n",
        trans.len(),
        duration,
        with.n_symbols,
        with.unigram_distribution.len(),
        with.entropy_bits,
        with.bitrate
    );
    if let Some(w) = &without {
        report.push_str(&format!("bitrate_excluding_silence\t{:.6}\n", w.bitrate));
    }
    write_text(&out.join("report.txt"), &report)?;
    log.note(format!("eval: bitrate {:.4} bits/s over {:.3} s", chosen.bitrate, duration));
    Ok(())
}

/// Runs every stage into `out_dir`, skipping stages whose inputs and settings are unchanged
/// since a previous run in the same directory.
pub fn run_pipeline(manifest: &CorpusManifest, cfg: &PipelineConfig, out_dir: &Path) -> Result<RunSummary> {
    cfg.validate()?;
    if manifest.len() < 2 {
        return Err(AudError::EmptyInput("the pipeline needs at least 2 utterances".into()));
    }
    create_dir(out_dir)?;
    let _lock = RunLock::acquire(out_dir)?;
    let layout = RunLayout::new(out_dir);
    create_dir(&out_dir.join("stages"))?;
    create_dir(&out_dir.join("logs"))?;
    write_text(&out_dir.join("config.toml"), &cfg.to_toml()?)?;
    let absolute = manifest
        .entries
        .iter()
        .map(|e| {
            let path = std::path::absolute(&e.path).map_err(|err| AudError::io(&e.path, err))?;
            Ok(ManifestEntry { path, ..e.clone() })
        })
        .collect::<Result<Vec<_>>>()?;
    CorpusManifest::new(out_dir, absolute)?.write(out_dir.join("manifest.tsv"))?;

    let ids: Vec<&str> = manifest.ids().collect();
    let wavs: Vec<(String, PathBuf)> = manifest
        .entries
        .iter()
        .map(|e| (format!("wav/{}", e.utterance_id), e.path.clone()))
        .collect();
    let mut r = Runner {
        layout: &layout,
        outcomes: Vec::new(),
    };
    r.stage("features", &cfg.features, &wavs, |log| compute_features(manifest, &cfg.features, &layout.features(), log))?;
    r.stage("segment", &cfg.segmentation, &wavs, |log| segment_corpus(manifest, &cfg.segmentation, &layout.segments(), log))?;
    let fs_inputs = [dir_inputs(&layout, "features")?, dir_inputs(&layout, "segment")?].concat();
    r.stage("cluster", &(&cfg.clustering, &cfg.features.frame), &fs_inputs, |log| cluster_stage(&layout, &ids, cfg, log))?;
    let inputs = [fs_inputs.clone(), dir_inputs(&layout, "cluster")?].concat();
    r.stage("init", &cfg.init, &inputs, |log| init_stage(&layout, &ids, cfg, log))?;
    let inputs = [fs_inputs.clone(), dir_inputs(&layout, "init")?].concat();
    r.stage("stage1", &cfg.stage1, &inputs, |log| stage1(&layout, &ids, cfg, log))?;
    let inputs = [dir_inputs(&layout, "features")?, dir_inputs(&layout, "stage1")?].concat();
    r.stage("stage2", &cfg.stage2, &inputs, |log| stage2(&layout, &ids, cfg, log))?;
    let inputs = [dir_inputs(&layout, "features")?, vec![("stage2/inventory.json".into(), layout.inventory("stage2"))]].concat();
    r.stage("transcribe", &Grammar::FreeLoop, &inputs, |log| {
        let features = load_features(&layout.features(), ids.iter().copied(), &cfg.features.frame)?;
        let inv = AuInventory::load(layout.inventory("stage2"))?;
        let trans = transcribe_corpus(&inv, &features, Grammar::FreeLoop, &layout.transcriptions())?;
        let warned = trans.iter().filter(|t| t.warning).count();
        log.note(format!("transcribe: {} utterances, {warned} best-effort", trans.len()));
        Ok(())
    })?;
    let inputs = [
        dir_inputs(&layout, "transcribe")?,
        vec![("features/index.tsv".into(), layout.features().join(FEATURE_INDEX))],
    ]
    .concat();
    r.stage("eval", &cfg.eval, &inputs, |log| eval_stage(&layout, &ids, cfg, log))?;

    let inv = AuInventory::load(layout.inventory("stage2"))?;
    let bitrate_path = layout.dir("eval").join("bitrate.json");
    let text = fs::read_to_string(&bitrate_path).map_err(|e| AudError::io(&bitrate_path, e))?;
    Ok(RunSummary {
        stages: r.outcomes,
        inventory_size: inv.len(),
        n_clusters: inv.clusters.len(),
        stage1: read_report(&layout.dir("stage1"))?,
        stage2: read_report(&layout.dir("stage2"))?,
        bitrate: serde_json::from_str(&text)?,
    })
}
