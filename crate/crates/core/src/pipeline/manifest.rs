use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{AudError, Result};
use crate::gender::{Gender, GenderDecision};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub utterance_id: String,
    /// Resolved against the manifest's directory when relative.
    pub path: PathBuf,
    pub speaker: String,
    pub group: Option<String>,
}

impl ManifestEntry {
    /// Voting group: the explicit group column, else the speaker.
    pub fn group_key(&self) -> &str {
        self.group.as_deref().unwrap_or(&self.speaker)
    }
}

/// Corpus listing in the form `utt_id<TAB>path<TAB>speaker[<TAB>group]`. Blank lines and
/// lines starting with `#` are ignored, as is a leading `utt_id` header row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorpusManifest {
    pub root: PathBuf,
    pub entries: Vec<ManifestEntry>,
}

impl CorpusManifest {
    pub fn new(root: impl Into<PathBuf>, entries: Vec<ManifestEntry>) -> Result<Self> {
        let m = Self {
            root: root.into(),
            entries,
        };
        m.check_unique()?;
        Ok(m)
    }

    fn check_unique(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for e in &self.entries {
            if !seen.insert(e.utterance_id.as_str()) {
                return Err(AudError::Format(format!("duplicate utterance id `{}`", e.utterance_id)));
            }
        }
        Ok(())
    }

    pub fn parse(text: &str, root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        let mut entries = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() || line.starts_with('#') || (n == 0 && line.starts_with("utt_id\t")) {
                continue;
            }
            let cols: Vec<&str> = line.split('\t').collect();
            if !(3..=4).contains(&cols.len()) || cols[..3].iter().any(|c| c.is_empty()) {
                return Err(AudError::parse(
                    "manifest",
                    format!("line {}: expected utt_id, path, speaker and an optional group", n + 1),
                ));
            }
            let path = Path::new(cols[1]);
            entries.push(ManifestEntry {
                utterance_id: cols[0].to_string(),
                path: if path.is_absolute() { path.to_path_buf() } else { root.join(path) },
                speaker: cols[2].to_string(),
                group: cols.get(3).filter(|g| !g.is_empty()).map(|g| g.to_string()),
            });
        }
        Self::new(root, entries)
    }

    /// Reads a manifest and checks that every audio path exists.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| AudError::io(path, e))?;
        let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let m = Self::parse(&text, root)?;
        let missing: Vec<&str> = m
            .entries
            .iter()
            .filter(|e| !e.path.is_file())
            .map(|e| e.utterance_id.as_str())
            .collect();
        if !missing.is_empty() {
            return Err(AudError::Missing(format!("audio for {}", missing.join(", "))));
        }
        Ok(m)
    }

    /// Serializes with paths relative to `root` where possible.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for e in &self.entries {
            let p = e.path.strip_prefix(&self.root).unwrap_or(&e.path);
            out.push_str(&format!("{}\t{}\t{}", e.utterance_id, p.display(), e.speaker));
            if let Some(g) = &e.group {
                out.push('\t');
                out.push_str(g);
            }
            out.push('\n');
        }
        out
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_tsv()).map_err(|e| AudError::io(path, e))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.utterance_id.as_str())
    }
}

/// Splits a manifest into male and female parts according to per-file decisions.
pub fn partition_by_gender(manifest: &CorpusManifest, decisions: &[GenderDecision]) -> Result<(CorpusManifest, CorpusManifest)> {
    let by_id: BTreeMap<&str, Gender> = decisions.iter().map(|d| (d.file_id.as_str(), d.label)).collect();
    let missing: Vec<&str> = manifest.ids().filter(|id| !by_id.contains_key(id)).collect();
    if !missing.is_empty() {
        return Err(AudError::Missing(format!("gender decisions for {}", missing.join(", "))));
    }
    let (male, female): (Vec<_>, Vec<_>) = manifest
        .entries
        .iter()
        .cloned()
        .partition(|e| by_id[e.utterance_id.as_str()] == Gender::Male);
    Ok((
        CorpusManifest::new(manifest.root.clone(), male)?,
        CorpusManifest::new(manifest.root.clone(), female)?,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_write() {
        let text = "utt_id\tpath\tspeaker\tgroup\n# comment\na\twav/a.wav\ts1\n\nb\t/abs/b.wav\ts2\tg1\n";
        let m = CorpusManifest::parse(text, "/corpus").unwrap();
        assert_eq!(m.len(), 2);
        assert_eq!(m.entries[0].path, PathBuf::from("/corpus/wav/a.wav"));
        assert_eq!(m.entries[0].group_key(), "s1");
        assert_eq!(m.entries[1].group_key(), "g1");
        assert_eq!(m.to_tsv(), "a\twav/a.wav\ts1\nb\t/abs/b.wav\ts2\tg1\n");
    }

    #[test]
    fn rejects_duplicates_and_short_rows() {
        assert!(CorpusManifest::parse("a\tx\ts\na\ty\ts\n", "/").is_err());
        assert!(CorpusManifest::parse("a\tx\n", "/").is_err());
    }

    #[test]
    fn missing_audio_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.tsv");
        fs::write(&p, "a\tnope.wav\ts\n").unwrap();
        assert!(matches!(CorpusManifest::load(&p), Err(AudError::Missing(_))));
    }

    #[test]
    fn gender_partition() {
        let m = CorpusManifest::parse("a\ta\ts\nb\tb\ts\nc\tc\tt\n", "/").unwrap();
        let d = vec![
            GenderDecision::from_llr("a", 1.0),
            GenderDecision::from_llr("b", -1.0),
            GenderDecision::from_llr("c", 2.0),
        ];
        let (male, female) = partition_by_gender(&m, &d).unwrap();
        assert_eq!(male.ids().collect::<Vec<_>>(), vec!["a", "c"]);
        assert_eq!(female.ids().collect::<Vec<_>>(), vec!["b"]);
        assert!(matches!(partition_by_gender(&m, &d[..2]), Err(AudError::Missing(m)) if m.contains('c')));
    }
}
