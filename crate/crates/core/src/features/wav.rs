//! WAV ingestion: RIFF PCM, 16-bit signed little-endian, mono, 16 kHz.

use std::path::Path;

use crate::error::{Error, Result};

/// Read a mono 16-bit 16 kHz PCM WAV file, scaling samples to [-1, 1).
pub fn read_wav(path: &Path) -> Result<Vec<f64>> {
    let reader = hound::WavReader::open(path)
        .map_err(|e| Error::parse(path.display().to_string(), e.to_string()))?;
    let spec = reader.spec();
    if spec.sample_format != hound::SampleFormat::Int || spec.bits_per_sample != 16 {
        return Err(Error::Data(format!(
            "{}: expected 16-bit signed PCM, got {:?} at {} bits",
            path.display(),
            spec.sample_format,
            spec.bits_per_sample
        )));
    }
    if spec.channels != 1 {
        return Err(Error::Data(format!(
            "{}: expected mono audio, got {} channels",
            path.display(),
            spec.channels
        )));
    }
    if spec.sample_rate != 16_000 {
        return Err(Error::Data(format!(
            "{}: expected a 16000 Hz sample rate, got {}",
            path.display(),
            spec.sample_rate
        )));
    }
    let samples: std::result::Result<Vec<i16>, _> = reader.into_samples().collect();
    let samples = samples.map_err(|e| Error::parse(path.display().to_string(), e.to_string()))?;
    if samples.is_empty() {
        return Err(Error::Data(format!("{}: empty audio stream", path.display())));
    }
    Ok(samples.into_iter().map(|s| s as f64 / 32_768.0).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_wav(path: &Path, spec: hound::WavSpec, samples: &[i16]) {
        let mut writer = hound::WavWriter::create(path, spec).unwrap();
        for &s in samples {
            writer.write_sample(s).unwrap();
        }
        writer.finalize().unwrap();
    }

    #[test]
    fn reads_and_scales_mono_pcm() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.wav");
        let spec = hound::WavSpec {
            channels: 1,
            sample_rate: 16_000,
            bits_per_sample: 16,
            sample_format: hound::SampleFormat::Int,
        };
        write_wav(&path, spec, &[0, 16_384, -32_768, 32_767]);
        let samples = read_wav(&path).unwrap();
        assert_eq!(samples, vec![0.0, 0.5, -1.0, 32_767.0 / 32_768.0]);
    }

    #[test]
    fn rejects_wrong_rate_and_channels() {
        let dir = tempfile::tempdir().unwrap();

        let stereo = dir.path().join("stereo.wav");
        write_wav(
            &stereo,
            hound::WavSpec {
                channels: 2,
                sample_rate: 16_000,
                bits_per_sample: 16,
                sample_format: hound::SampleFormat::Int,
            },
            &[1, 2, 3, 4],
        );
        assert!(read_wav(&stereo).unwrap_err().to_string().contains("mono"));

        let slow = dir.path().join("slow.wav");
        write_wav(
            &slow,
            hound::WavSpec {
                channels: 1,
                sample_rate: 8_000,
                bits_per_sample: 16,
                sample_format: hound::SampleFormat::Int,
            },
            &[1, 2, 3],
        );
        assert!(read_wav(&slow).unwrap_err().to_string().contains("16000"));
    }
}
