//! MFCC extraction: framing, Hamming window, periodogram power spectrum,
//! triangular mel filterbank, log compression, DCT-II.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// MFCC extraction parameters for 16 kHz speech.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MfccConfig {
    pub sample_rate: u32,
    /// Samples per analysis frame (25 ms).
    pub frame_len: usize,
    /// Samples between frame starts (10 ms).
    pub frame_step: usize,
    /// DFT length; frames are zero-padded up to this.
    pub n_fft: usize,
    pub n_mel_filters: usize,
    /// Cepstral coefficients kept from the filterbank DCT.
    pub n_kept_coeffs: usize,
}

impl Default for MfccConfig {
    fn default() -> Self {
        MfccConfig {
            sample_rate: 16_000,
            frame_len: 400,
            frame_step: 160,
            n_fft: 512,
            n_mel_filters: 26,
            n_kept_coeffs: 13,
        }
    }
}

impl MfccConfig {
    /// Standardized recording length: 10 seconds at the configured rate.
    pub fn target_samples(&self) -> usize {
        self.sample_rate as usize * 10
    }

    fn check(&self) -> Result<()> {
        if self.frame_len > self.n_fft {
            return Err(Error::Config(format!(
                "frame_len {} exceeds n_fft {}",
                self.frame_len, self.n_fft
            )));
        }
        if self.n_kept_coeffs > self.n_mel_filters {
            return Err(Error::Config(format!(
                "n_kept_coeffs {} exceeds n_mel_filters {}",
                self.n_kept_coeffs, self.n_mel_filters
            )));
        }
        if self.frame_len == 0 || self.frame_step == 0 || self.n_fft == 0 {
            return Err(Error::Config("frame sizes must be positive".into()));
        }
        Ok(())
    }
}

/// Floor inside the filterbank log, keeping silent frames well defined.
const LOG_FLOOR: f64 = 1e-10;

fn hamming(len: usize) -> Vec<f64> {
    if len == 1 {
        return vec![1.0];
    }
    (0..len)
        .map(|n| 0.54 - 0.46 * (2.0 * std::f64::consts::PI * n as f64 / (len - 1) as f64).cos())
        .collect()
}

/// Full two-sided `|S(k)|^2` of one windowed, zero-padded frame (n_fft bins, unscaled).
pub fn full_power_spectrum(frame: &[f64], cfg: &MfccConfig) -> Result<Vec<f64>> {
    cfg.check()?;
    if frame.len() != cfg.frame_len {
        return Err(Error::Data(format!(
            "frame length {} does not match configured frame_len {}",
            frame.len(),
            cfg.frame_len
        )));
    }
    let window = hamming(cfg.frame_len);
    let mut buf: Vec<Complex<f64>> = frame
        .iter()
        .zip(&window)
        .map(|(s, h)| Complex::new(s * h, 0.0))
        .collect();
    buf.resize(cfg.n_fft, Complex::new(0.0, 0.0));

    FftPlanner::new().plan_fft_forward(cfg.n_fft).process(&mut buf);
    Ok(buf.iter().map(|c| c.norm_sqr()).collect())
}

/// Periodogram power spectral estimate: `|S(k)|^2 / N` for `k = 0..n_fft/2`.
pub fn power_spectrum(frame: &[f64], cfg: &MfccConfig) -> Result<Vec<f64>> {
    let full = full_power_spectrum(frame, cfg)?;
    let n = cfg.n_fft as f64;
    Ok(full[..cfg.n_fft / 2 + 1].iter().map(|p| p / n).collect())
}

fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Triangular mel filterbank over the one-sided spectrum, 0 Hz to Nyquist.
fn mel_filterbank(cfg: &MfccConfig) -> Vec<Vec<f64>> {
    let n_filters = cfg.n_mel_filters;
    let n_bins = cfg.n_fft / 2 + 1;
    let low_mel = hz_to_mel(0.0);
    let high_mel = hz_to_mel(cfg.sample_rate as f64 / 2.0);

    // n_filters + 2 equally spaced mel points, mapped to FFT bin indices.
    let bins: Vec<usize> = (0..n_filters + 2)
        .map(|i| {
            let mel = low_mel + (high_mel - low_mel) * i as f64 / (n_filters + 1) as f64;
            let hz = mel_to_hz(mel);
            ((cfg.n_fft + 1) as f64 * hz / cfg.sample_rate as f64).floor() as usize
        })
        .collect();

    (0..n_filters)
        .map(|j| {
            let (lo, mid, hi) = (bins[j], bins[j + 1], bins[j + 2]);
            let mut filter = vec![0.0; n_bins];
            for k in lo..mid {
                filter[k] = (k - lo) as f64 / (mid - lo) as f64;
            }
            for k in mid..hi {
                filter[k] = (hi - k) as f64 / (hi - mid) as f64;
            }
            filter
        })
        .collect()
}

/// Orthonormal DCT-II of `x`, keeping the first `kept` coefficients.
fn dct2_orthonormal(x: &[f64], kept: usize) -> Vec<f64> {
    let n = x.len();
    let scale0 = (1.0 / n as f64).sqrt();
    let scale = (2.0 / n as f64).sqrt();
    (0..kept)
        .map(|k| {
            let sum: f64 = x
                .iter()
                .enumerate()
                .map(|(i, v)| {
                    v * (std::f64::consts::PI * k as f64 * (2 * i + 1) as f64 / (2 * n) as f64)
                        .cos()
                })
                .sum();
            if k == 0 {
                scale0 * sum
            } else {
                scale * sum
            }
        })
        .collect()
}

/// MFCC matrix (frames x kept coefficients) of a duration-standardized signal.
pub fn mfcc(samples: &[f64], cfg: &MfccConfig) -> Result<Vec<Vec<f64>>> {
    cfg.check()?;
    if samples.len() < cfg.frame_len {
        return Err(Error::Data("audio shorter than one frame".into()));
    }
    let n_frames = (samples.len() - cfg.frame_len) / cfg.frame_step + 1;
    let filters = mel_filterbank(cfg);
    let window = hamming(cfg.frame_len);
    let fft = FftPlanner::new().plan_fft_forward(cfg.n_fft);
    let n_bins = cfg.n_fft / 2 + 1;
    let inv_n = 1.0 / cfg.n_fft as f64;

    let mut out = Vec::with_capacity(n_frames);
    let mut buf = vec![Complex::new(0.0, 0.0); cfg.n_fft];
    for f in 0..n_frames {
        let start = f * cfg.frame_step;
        for (i, c) in buf.iter_mut().enumerate() {
            *c = if i < cfg.frame_len {
                Complex::new(samples[start + i] * window[i], 0.0)
            } else {
                Complex::new(0.0, 0.0)
            };
        }
        fft.process(&mut buf);

        let power: Vec<f64> = buf[..n_bins].iter().map(|c| c.norm_sqr() * inv_n).collect();
        let log_energies: Vec<f64> = filters
            .iter()
            .map(|filter| {
                let e: f64 = filter.iter().zip(&power).map(|(w, p)| w * p).sum();
                e.max(LOG_FLOOR).ln()
            })
            .collect();
        out.push(dct2_orthonormal(&log_energies, cfg.n_kept_coeffs));
    }
    Ok(out)
}
