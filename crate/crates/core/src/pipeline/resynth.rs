use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use crate::audio::{load_wav, write_wav, AudioBuffer};
use crate::dtw::{dtw_distance, DtwConfig};
use crate::error::{AudError, Result};
use crate::features::{FeatureSequence, FrameConfig};
use crate::hmm::{AuInventory, Transcription};

use super::manifest::CorpusManifest;

/// Crossfade between consecutive exemplars.
pub const CROSSFADE_MS: f64 = 5.0;

/// Candidate occurrences examined per symbol when choosing a medoid.
const MAX_CANDIDATES: usize = 24;

/// One representative waveform per unit symbol.
#[derive(Debug, Clone, PartialEq)]
pub struct ExemplarStore {
    pub sample_rate: u32,
    pub exemplars: BTreeMap<String, Vec<f64>>,
}

impl ExemplarStore {
    /// Writes `<dir>/<symbol>.wav` for every exemplar.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| AudError::io(dir, e))?;
        for (sym, samples) in &self.exemplars {
            let audio = AudioBuffer::new(sym.clone(), self.sample_rate, samples.clone())?;
            write_wav(dir.join(format!("{sym}.wav")), &audio)?;
        }
        Ok(())
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let mut exemplars = BTreeMap::new();
        let mut rate = None;
        let mut paths: Vec<_> = fs::read_dir(dir)
            .map_err(|e| AudError::io(dir, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "wav"))
            .collect();
        paths.sort();
        for p in paths {
            let a = load_wav(&p)?;
            if *rate.get_or_insert(a.sample_rate) != a.sample_rate {
                return Err(AudError::Format(format!("{}: sample rate differs from the other exemplars", p.display())));
            }
            exemplars.insert(a.utterance_id, a.samples);
        }
        Ok(Self {
            sample_rate: rate.ok_or_else(|| AudError::EmptyInput(format!("no exemplars in {}", dir.display())))?,
            exemplars,
        })
    }
}

/// Sample range covered by frames `[a, b)`.
fn frame_span(frame: &FrameConfig, sample_rate: u32, a: usize, b: usize, n_samples: usize) -> (usize, usize) {
    let hop = frame.hop_samples(sample_rate);
    let len = frame.frame_samples(sample_rate);
    (a * hop, ((b - 1) * hop + len).min(n_samples))
}

/// Picks, for every symbol, the aligned occurrence with the smallest summed DTW distance to
/// the other occurrences (the first `MAX_CANDIDATES` in corpus order are considered).
pub fn build_exemplars(
    manifest: &CorpusManifest,
    transcriptions: &[Transcription],
    features: &[(String, FeatureSequence)],
    frame: &FrameConfig,
) -> Result<ExemplarStore> {
    let feats: BTreeMap<&str, &FeatureSequence> = features.iter().map(|(id, f)| (id.as_str(), f)).collect();
    let mut occ: BTreeMap<&str, Vec<(usize, usize, usize)>> = BTreeMap::new();
    for (ti, t) in transcriptions.iter().enumerate() {
        let ali = t
            .alignments
            .as_ref()
            .ok_or_else(|| AudError::Missing(format!("alignments for {}", t.utterance_id)))?;
        for (sym, &(a, b)) in t.symbols.iter().zip(ali) {
            let list = occ.entry(sym.as_str()).or_default();
            if list.len() < MAX_CANDIDATES && b > a {
                list.push((ti, a, b));
            }
        }
    }
    let dtw = DtwConfig::default();
    let mut chosen = BTreeMap::new();
    for (sym, list) in occ {
        let seqs = list
            .iter()
            .map(|&(ti, a, b)| {
                let id = transcriptions[ti].utterance_id.as_str();
                feats
                    .get(id)
                    .ok_or_else(|| AudError::Missing(format!("features for {id}")))?
                    .slice(a..b)
            })
            .collect::<Result<Vec<_>>>()?;
        let mut best = (f64::INFINITY, 0);
        for i in 0..seqs.len() {
            let mut total = 0.0;
            for j in 0..seqs.len() {
                if i != j {
                    total += dtw_distance(&seqs[i], &seqs[j], &dtw)?;
                }
            }
            if total < best.0 {
                best = (total, i);
            }
        }
        chosen.insert(sym.to_string(), list[best.1]);
    }

    let paths: BTreeMap<&str, &Path> = manifest.entries.iter().map(|e| (e.utterance_id.as_str(), e.path.as_path())).collect();
    let mut audio_cache: BTreeMap<usize, AudioBuffer> = BTreeMap::new();
    let mut exemplars = BTreeMap::new();
    let mut rate = None;
    for (sym, (ti, a, b)) in chosen {
        if let std::collections::btree_map::Entry::Vacant(v) = audio_cache.entry(ti) {
            let id = transcriptions[ti].utterance_id.as_str();
            let p = paths.get(id).ok_or_else(|| AudError::Missing(format!("manifest entry for {id}")))?;
            v.insert(load_wav(p)?);
        }
        let audio = &audio_cache[&ti];
        if *rate.get_or_insert(audio.sample_rate) != audio.sample_rate {
            return Err(AudError::Format("exemplar sources have different sample rates".into()));
        }
        let (s, e) = frame_span(frame, audio.sample_rate, a, b, audio.len());
        exemplars.insert(sym, audio.samples[s..e].to_vec());
    }
    Ok(ExemplarStore {
        sample_rate: rate.unwrap_or(16_000),
        exemplars,
    })
}

/// Concatenates the exemplars of a transcription with a linear crossfade of
/// [`CROSSFADE_MS`] (shortened when an exemplar is shorter than that).
pub fn resynthesize_exemplar(transcription: &Transcription, inventory: &AuInventory, store: &ExemplarStore) -> Result<AudioBuffer> {
    let fade = (CROSSFADE_MS / 1000.0 * store.sample_rate as f64).round() as usize;
    let mut out: Vec<f64> = Vec::new();
    for sym in &transcription.symbols {
        inventory.index_of(sym)?;
        let ex = store
            .exemplars
            .get(sym)
            .ok_or_else(|| AudError::Missing(format!("exemplar for {sym}")))?;
        let c = fade.min(out.len()).min(ex.len());
        let base = out.len() - c;
        for (i, &x) in ex.iter().enumerate() {
            if i < c {
                let w = (i + 1) as f64 / (c + 1) as f64;
                out[base + i] = out[base + i] * (1.0 - w) + x * w;
            } else {
                out.push(x);
            }
        }
    }
    AudioBuffer::new(transcription.utterance_id.clone(), store.sample_rate, out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hmm::{AcousticUnitHmm, AuInventory};
    use crate::mixture::GaussianMixture;

    fn inv(symbols: &[&str]) -> AuInventory {
        let units = symbols
            .iter()
            .map(|s| AcousticUnitHmm::left_to_right(*s, vec![GaussianMixture::single(vec![0.0], vec![1.0])], 0.5))
            .collect();
        AuInventory::new(1, vec![1e-3], units, vec![]).unwrap()
    }

    fn trans(symbols: &[&str]) -> Transcription {
        Transcription {
            utterance_id: "u".into(),
            symbols: symbols.iter().map(|s| s.to_string()).collect(),
            alignments: None,
            log_likelihood: 0.0,
            warning: false,
        }
    }

    fn store() -> ExemplarStore {
        let mut exemplars = BTreeMap::new();
        exemplars.insert("A".to_string(), vec![0.5; 400]);
        exemplars.insert("B".to_string(), vec![-0.25; 400]);
        ExemplarStore {
            sample_rate: 16000,
            exemplars,
        }
    }

    #[test]
    fn single_symbol_is_the_exemplar() {
        let out = resynthesize_exemplar(&trans(&["A"]), &inv(&["A", "B"]), &store()).unwrap();
        assert_eq!(out.samples, vec![0.5; 400]);
    }

    #[test]
    fn length_accounts_for_overlaps() {
        let out = resynthesize_exemplar(&trans(&["A", "B", "A"]), &inv(&["A", "B"]), &store()).unwrap();
        assert_eq!(out.len(), 3 * 400 - 2 * 80);
    }

    #[test]
    fn empty_and_missing() {
        let out = resynthesize_exemplar(&trans(&[]), &inv(&["A"]), &store()).unwrap();
        assert!(out.is_empty());
        assert!(matches!(
            resynthesize_exemplar(&trans(&["C"]), &inv(&["A", "C"]), &store()),
            Err(AudError::Missing(_))
        ));
    }
}
