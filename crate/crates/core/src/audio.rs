//! Mono 16-bit PCM WAV input and output.

use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};

use crate::error::{AudError, Result};

/// Mono PCM samples normalized to `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioBuffer {
    pub utterance_id: String,
    pub sample_rate: u32,
    pub samples: Vec<f64>,
}

impl AudioBuffer {
    pub fn new(utterance_id: impl Into<String>, sample_rate: u32, samples: Vec<f64>) -> Result<Self> {
        if sample_rate == 0 {
            return Err(AudError::Config("sample rate must be positive".into()));
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return Err(AudError::Format(format!("sample {i} is not finite")));
        }
        Ok(Self {
            utterance_id: utterance_id.into(),
            sample_rate,
            samples,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Duration in seconds.
    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    /// Copies the samples in `[start_s, end_s)`, clamped to the buffer.
    pub fn slice_seconds(&self, start_s: f64, end_s: f64) -> Vec<f64> {
        let sr = self.sample_rate as f64;
        let a = ((start_s * sr).round().max(0.0) as usize).min(self.samples.len());
        let b = ((end_s * sr).round().max(0.0) as usize).clamp(a, self.samples.len());
        self.samples[a..b].to_vec()
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct WavOptions {
    /// Average the channels of multi-channel input instead of rejecting it.
    pub downmix: bool,
}

pub fn load_wav(path: impl AsRef<Path>) -> Result<AudioBuffer> {
    load_wav_with(path, WavOptions::default())
}

pub fn load_wav_with(path: impl AsRef<Path>, opts: WavOptions) -> Result<AudioBuffer> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| AudError::io(path, e))?;
    // the file opened, so read failures from here on mean malformed content
    let reader = WavReader::new(std::io::BufReader::new(file)).map_err(|e| wav_error(path, e))?;
    let spec = reader.spec();
    if spec.sample_format != SampleFormat::Int || spec.bits_per_sample != 16 {
        return Err(AudError::UnsupportedFormat(format!(
            "{}: {}-bit {:?} samples, only 16-bit PCM is supported",
            path.display(),
            spec.bits_per_sample,
            spec.sample_format
        )));
    }
    let channels = spec.channels as usize;
    if channels != 1 && !opts.downmix {
        return Err(AudError::UnsupportedFormat(format!(
            "{}: {channels} channels, expected mono (enable downmix to average channels)",
            path.display()
        )));
    }
    let raw = reader
        .into_samples::<i16>()
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| wav_error(path, e))?;
    let samples = if channels == 1 {
        raw.iter().map(|&s| s as f64 / 32768.0).collect()
    } else {
        raw.chunks_exact(channels)
            .map(|frame| frame.iter().map(|&s| s as f64).sum::<f64>() / (channels as f64 * 32768.0))
            .collect()
    };
    let id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    AudioBuffer::new(id, spec.sample_rate, samples)
}

/// Converts a normalized sample back to 16-bit PCM; exact inverse of the load scaling.
pub fn to_pcm16(sample: f64) -> i16 {
    (sample * 32768.0).round().clamp(i16::MIN as f64, i16::MAX as f64) as i16
}

pub fn write_wav(path: impl AsRef<Path>, audio: &AudioBuffer) -> Result<()> {
    let path = path.as_ref();
    let spec = WavSpec {
        channels: 1,
        sample_rate: audio.sample_rate,
        bits_per_sample: 16,
        sample_format: SampleFormat::Int,
    };
    let write_error = |e: hound::Error| match e {
        hound::Error::IoError(e) => AudError::io(path, e),
        other => wav_error(path, other),
    };
    let mut writer = WavWriter::create(path, spec).map_err(write_error)?;
    for &s in &audio.samples {
        writer.write_sample(to_pcm16(s)).map_err(write_error)?;
    }
    writer.finalize().map_err(write_error)
}

fn wav_error(path: &Path, err: hound::Error) -> AudError {
    match err {
        hound::Error::IoError(e) => AudError::Format(format!("{}: {e}", path.display())),
        hound::Error::Unsupported => {
            AudError::UnsupportedFormat(format!("{}: unsupported WAV encoding", path.display()))
        }
        other => AudError::Format(format!("{}: {other}", path.display())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_pcm(path: &Path, channels: u16, bits: u16, data: &[i32]) {
        let spec = WavSpec {
            channels,
            sample_rate: 16000,
            bits_per_sample: bits,
            sample_format: SampleFormat::Int,
        };
        let mut w = WavWriter::create(path, spec).unwrap();
        for &s in data {
            if bits == 16 {
                w.write_sample(s as i16).unwrap();
            } else {
                w.write_sample(s).unwrap();
            }
        }
        w.finalize().unwrap();
    }

    #[test]
    fn scales_by_32768() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.wav");
        write_pcm(&p, 1, 16, &[0, 16384, -32768]);
        let a = load_wav(&p).unwrap();
        assert_eq!(a.samples, vec![0.0, 0.5, -1.0]);
        assert_eq!(a.sample_rate, 16000);
        assert_eq!(a.utterance_id, "a");
    }

    #[test]
    fn one_second_at_16k() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("one.wav");
        write_pcm(&p, 1, 16, &vec![7; 16000]);
        let a = load_wav(&p).unwrap();
        assert_eq!(a.len(), 16000);
        assert!((a.duration() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn stereo_rejected_unless_downmixed() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("st.wav");
        write_pcm(&p, 2, 16, &[16384, 0, -16384, -16384]);
        assert!(matches!(load_wav(&p), Err(AudError::UnsupportedFormat(_))));
        let a = load_wav_with(&p, WavOptions { downmix: true }).unwrap();
        assert_eq!(a.samples, vec![0.25, -0.5]);
    }

    #[test]
    fn other_bit_depths_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("24.wav");
        write_pcm(&p, 1, 24, &[1, 2, 3]);
        assert!(matches!(load_wav(&p), Err(AudError::UnsupportedFormat(_))));
    }

    #[test]
    fn garbage_is_a_format_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.wav");
        std::fs::write(&p, b"RIFF\x10\x00\x00\x00WAVEjunkjunk").unwrap();
        let r = load_wav(&p);
        assert!(matches!(r, Err(AudError::Format(_))), "{r:?}");
    }

    #[test]
    fn missing_file_is_io() {
        assert!(matches!(load_wav("/nonexistent/x.wav"), Err(AudError::Io { .. })));
    }

    #[test]
    fn rejects_non_finite_samples() {
        assert!(AudioBuffer::new("x", 16000, vec![0.0, f64::NAN]).is_err());
        assert!(AudioBuffer::new("x", 0, vec![0.0]).is_err());
    }
}
