//! Audio feature extraction: WAV decoding, resampling, segmenting, STFT,
//! mel filterbank and the log-mel spectrogram fed to the encoder.
//!
//! Every stage is a pure function of its inputs, so identical files always
//! produce bit-identical spectrograms.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::textio;

pub const TARGET_RATE: u32 = 22050;
pub const SEGMENT_OFFSET_SECS: f64 = 3.0;
pub const SEGMENT_LENGTH_SECS: f64 = 6.0;
pub const STFT_WINDOW: usize = 2048;
pub const STFT_HOP: usize = 1024;
pub const N_MELS: usize = 80;
pub const MEL_F_MIN: f64 = 16.0;
pub const MEL_F_MAX: f64 = 11000.0;

/// Mono audio at a known rate; samples nominally in [-1, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

impl AudioClip {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::Data("audio clip has no samples".into()));
        }
        if sample_rate == 0 {
            return Err(Error::Param("sample rate must be positive".into()));
        }
        if let Some(bad) = samples.iter().find(|s| !s.is_finite()) {
            return Err(Error::Data(format!("non-finite sample value {bad}")));
        }
        Ok(AudioClip {
            samples,
            sample_rate,
        })
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }
}

fn mel_of_hz(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

fn hz_of_mel(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// Linear-interpolation resampling; identity when the rates already match.
pub fn resample(clip: &AudioClip, target_rate: u32) -> Result<AudioClip> {
    if target_rate == 0 {
        return Err(Error::Param("target rate must be positive".into()));
    }
    if clip.sample_rate == target_rate {
        return Ok(clip.clone());
    }
    let src = &clip.samples;
    let ratio = clip.sample_rate as f64 / target_rate as f64;
    let n_out = ((src.len() as f64 / ratio).round() as usize).max(1);
    let mut out = Vec::with_capacity(n_out);
    for i in 0..n_out {
        let pos = i as f64 * ratio;
        let idx = pos.floor() as usize;
        if idx + 1 >= src.len() {
            out.push(src[src.len() - 1]);
        } else {
            let frac = pos - idx as f64;
            out.push(src[idx] * (1.0 - frac) + src[idx + 1] * frac);
        }
    }
    AudioClip::new(out, target_rate)
}

/// Cuts the fixed analysis window out of a clip; at 22050 Hz the defaults
/// give exactly 132300 samples.
pub fn segment(clip: &AudioClip, offset_secs: f64, length_secs: f64) -> Result<AudioClip> {
    let start = (offset_secs * clip.sample_rate as f64).round() as usize;
    let n = (length_secs * clip.sample_rate as f64).round() as usize;
    if clip.samples.len() < start + n {
        return Err(Error::Data(format!(
            "clip too short for segmentation: need {:.3} s ({} samples), have {:.3} s ({} samples)",
            offset_secs + length_secs,
            start + n,
            clip.duration_secs(),
            clip.samples.len()
        )));
    }
    AudioClip::new(clip.samples[start..start + n].to_vec(), clip.sample_rate)
}

fn hann_window(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 * (1.0 - (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos()))
        .collect()
}

fn reflect_pad(samples: &[f64], pad: usize) -> Vec<f64> {
    let n = samples.len();
    let mut out = Vec::with_capacity(n + 2 * pad);
    for i in 0..pad {
        // reflect without repeating the edge sample
        out.push(samples[(pad - i).min(n - 1)]);
    }
    out.extend_from_slice(samples);
    for i in 0..pad {
        out.push(samples[n - 2 - i.min(n - 2)]);
    }
    out
}

/// Magnitude STFT with Hann windowing and reflect center padding; returns a
/// frames × (window/2 + 1) matrix. Frame count is floor(N/hop) + 1.
pub fn stft(samples: &[f64], window: usize, hop: usize) -> Result<Array2<f64>> {
    if samples.is_empty() {
        return Err(Error::Data("cannot transform an empty signal".into()));
    }
    if window < 2 || window % 2 != 0 || hop == 0 {
        return Err(Error::Param(
            "window must be even and >= 2, hop positive".into(),
        ));
    }
    let n_frames = samples.len() / hop + 1;
    let n_bins = window / 2 + 1;
    let padded = reflect_pad(samples, window / 2);
    let win = hann_window(window);
    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(window);
    let mut out = Array2::zeros((n_frames, n_bins));
    let mut buf = vec![Complex::new(0.0, 0.0); window];
    for t in 0..n_frames {
        let start = t * hop;
        for i in 0..window {
            let s = if start + i < padded.len() {
                padded[start + i]
            } else {
                0.0
            };
            buf[i] = Complex::new(s * win[i], 0.0);
        }
        fft.process(&mut buf);
        for k in 0..n_bins {
            out[[t, k]] = buf[k].norm();
        }
    }
    Ok(out)
}

/// Triangular mel filterbank, n_mels × (n_fft/2 + 1). Centers are equally
/// spaced on the mel scale between f_min and f_max; filters are evaluated at
/// the FFT bin frequencies, which clips the lowest filter when f_min falls
/// under the bin spacing.
pub fn mel_filterbank(
    n_mels: usize,
    f_min: f64,
    f_max: f64,
    n_fft: usize,
    rate: u32,
) -> Result<Array2<f64>> {
    if n_mels == 0 || n_fft < 2 {
        return Err(Error::Param("need at least one mel band and two fft bins".into()));
    }
    if !(f_min >= 0.0 && f_min < f_max && f_max <= rate as f64 / 2.0) {
        return Err(Error::Param(format!(
            "mel cutoffs must satisfy 0 <= f_min < f_max <= rate/2, got [{f_min}, {f_max}] at {rate} Hz"
        )));
    }
    let n_bins = n_fft / 2 + 1;
    let mel_lo = mel_of_hz(f_min);
    let mel_hi = mel_of_hz(f_max);
    let points: Vec<f64> = (0..n_mels + 2)
        .map(|i| hz_of_mel(mel_lo + (mel_hi - mel_lo) * i as f64 / (n_mels + 1) as f64))
        .collect();
    let bin_hz = rate as f64 / n_fft as f64;
    let mut bank = Array2::zeros((n_mels, n_bins));
    for m in 0..n_mels {
        let (left, center, right) = (points[m], points[m + 1], points[m + 2]);
        for k in 0..n_bins {
            let f = k as f64 * bin_hz;
            let w = if f <= left || f >= right {
                0.0
            } else if f <= center {
                (f - left) / (center - left)
            } else {
                (right - f) / (right - center)
            };
            bank[[m, k]] = w;
        }
    }
    Ok(bank)
}

/// Log-mel spectrogram of one analysis segment.
#[derive(Debug, Clone, PartialEq)]
pub struct MelSpectrogram {
    /// n_mels × frames, entries log(1 + mel power).
    pub values: Array2<f64>,
}

impl MelSpectrogram {
    pub fn n_bands(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_frames(&self) -> usize {
        self.values.ncols()
    }
}

/// STFT power spectra through the mel filterbank, then log(1 + x). The clip
/// must already be at the target rate.
pub fn mel_spectrogram(clip: &AudioClip) -> Result<MelSpectrogram> {
    if clip.sample_rate != TARGET_RATE {
        return Err(Error::Param(format!(
            "mel analysis expects {TARGET_RATE} Hz input, got {} Hz",
            clip.sample_rate
        )));
    }
    let mags = stft(&clip.samples, STFT_WINDOW, STFT_HOP)?;
    let bank = mel_filterbank(N_MELS, MEL_F_MIN, MEL_F_MAX, STFT_WINDOW, TARGET_RATE)?;
    let n_frames = mags.nrows();
    let mut values = Array2::zeros((N_MELS, n_frames));
    for t in 0..n_frames {
        for m in 0..N_MELS {
            let mut acc = 0.0;
            for k in 0..mags.ncols() {
                let p = mags[[t, k]];
                acc += bank[[m, k]] * p * p;
            }
            values[[m, t]] = acc.ln_1p();
        }
    }
    Ok(MelSpectrogram { values })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureMode {
    /// Row-major flattening, band-major: length n_mels * frames.
    Flatten,
    /// Per-band mean then per-band standard deviation over time: 2 * n_mels.
    BandStats,
}

impl std::str::FromStr for FeatureMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "flatten" => Ok(FeatureMode::Flatten),
            "band-stats" => Ok(FeatureMode::BandStats),
            other => Err(Error::Param(format!("unknown feature mode {other:?}"))),
        }
    }
}

impl std::fmt::Display for FeatureMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            FeatureMode::Flatten => write!(f, "flatten"),
            FeatureMode::BandStats => write!(f, "band-stats"),
        }
    }
}

pub fn features_from_mel(spec: &MelSpectrogram, mode: FeatureMode) -> Vec<f64> {
    match mode {
        FeatureMode::Flatten => spec.values.iter().copied().collect(),
        FeatureMode::BandStats => {
            let t = spec.n_frames() as f64;
            let mut out = Vec::with_capacity(2 * spec.n_bands());
            let mut stds = Vec::with_capacity(spec.n_bands());
            for band in spec.values.rows() {
                let mean = band.sum() / t;
                let var = band.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / t;
                out.push(mean);
                stds.push(var.sqrt());
            }
            out.extend(stds);
            out
        }
    }
}

// ---------------------------------------------------------------------------
// WAV input

fn wav_err(path: &Path, message: impl Into<String>) -> Error {
    Error::Format {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

fn u16_at(b: &[u8], i: usize) -> u16 {
    u16::from_le_bytes([b[i], b[i + 1]])
}

fn u32_at(b: &[u8], i: usize) -> u32 {
    u32::from_le_bytes([b[i], b[i + 1], b[i + 2], b[i + 3]])
}

/// Decodes a PCM WAV file: 8-bit unsigned, 16-bit signed or 32-bit float,
/// mono or stereo. Stereo is downmixed by channel average before any further
/// processing.
pub fn read_wav(path: &Path) -> Result<AudioClip> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() < 12 || &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(wav_err(path, "not a RIFF/WAVE file"));
    }
    let mut pos = 12;
    let mut fmt: Option<(u16, u16, u32, u16)> = None; // format, channels, rate, bits
    let mut data: Option<&[u8]> = None;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let size = u32_at(&bytes, pos + 4) as usize;
        let body_end = (pos + 8 + size).min(bytes.len());
        let body = &bytes[pos + 8..body_end];
        match id {
            b"fmt " => {
                if body.len() < 16 {
                    return Err(wav_err(path, "truncated fmt chunk"));
                }
                fmt = Some((
                    u16_at(body, 0),
                    u16_at(body, 2),
                    u32_at(body, 4),
                    u16_at(body, 14),
                ));
            }
            b"data" => data = Some(body),
            _ => {}
        }
        pos += 8 + size + (size & 1); // chunks are word-aligned
    }
    let (format, channels, rate, bits) =
        fmt.ok_or_else(|| wav_err(path, "missing fmt chunk"))?;
    let data = data.ok_or_else(|| wav_err(path, "missing data chunk"))?;
    if channels == 0 || channels > 2 {
        return Err(wav_err(path, format!("unsupported channel count {channels}")));
    }
    let decode: fn(&[u8]) -> f64 = match (format, bits) {
        (1, 8) => |b| (b[0] as f64 - 128.0) / 128.0,
        (1, 16) => |b| i16::from_le_bytes([b[0], b[1]]) as f64 / 32768.0,
        (3, 32) => |b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
        _ => {
            return Err(wav_err(
                path,
                format!("unsupported sample encoding: format {format}, {bits} bits"),
            ))
        }
    };
    let bytes_per = bits as usize / 8;
    let frame = bytes_per * channels as usize;
    let n_frames = data.len() / frame;
    if n_frames == 0 {
        return Err(wav_err(path, "empty data chunk"));
    }
    let mut samples = Vec::with_capacity(n_frames);
    for f in 0..n_frames {
        let mut acc = 0.0;
        for c in 0..channels as usize {
            let off = f * frame + c * bytes_per;
            acc += decode(&data[off..off + bytes_per]);
        }
        samples.push(acc / channels as f64);
    }
    AudioClip::new(samples, rate)
}

/// Writes a mono 16-bit PCM WAV; the inverse of `read_wav` up to
/// quantization. Used by the synthetic tooling and tests.
pub fn write_wav(path: &Path, clip: &AudioClip) -> Result<()> {
    let n = clip.samples.len();
    let data_len = (n * 2) as u32;
    let mut out = Vec::with_capacity(44 + n * 2);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&(36 + data_len).to_le_bytes());
    out.extend_from_slice(b"WAVEfmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes()); // PCM
    out.extend_from_slice(&1u16.to_le_bytes()); // mono
    out.extend_from_slice(&clip.sample_rate.to_le_bytes());
    out.extend_from_slice(&(clip.sample_rate * 2).to_le_bytes());
    out.extend_from_slice(&2u16.to_le_bytes());
    out.extend_from_slice(&16u16.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&data_len.to_le_bytes());
    for &s in &clip.samples {
        let q = (s.clamp(-1.0, 1.0) * 32767.0).round() as i16;
        out.extend_from_slice(&q.to_le_bytes());
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

// ---------------------------------------------------------------------------
// Feature files

/// Writes one track's feature vector with its extraction parameters.
pub fn save_features(
    path: &Path,
    track_id: &str,
    mode: FeatureMode,
    values: &[f64],
) -> Result<()> {
    let mut out = String::from("tagtriplet-features 1\n");
    let _ = writeln!(out, "track_id\t{track_id}");
    let _ = writeln!(out, "mode\t{mode}");
    let _ = writeln!(out, "shape\t{}", values.len());
    let _ = writeln!(
        out,
        "params\twindow={STFT_WINDOW} hop={STFT_HOP} n_mels={N_MELS} \
         f_min={MEL_F_MIN} f_max={MEL_F_MAX} rate={TARGET_RATE}"
    );
    out.push_str("values");
    for v in values {
        let _ = write!(out, "\t{}", textio::fmt_f64(*v));
    }
    out.push('\n');
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn load_features(path: &Path) -> Result<(String, FeatureMode, Vec<f64>)> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    textio::check_version(lines.next(), "tagtriplet-features", 1, path)?;
    let mut track_id = None;
    let mut mode = None;
    let mut shape = None;
    let mut values: Option<Vec<f64>> = None;
    for (lineno, line) in lines.enumerate() {
        let (key, rest) = line.split_once('\t').ok_or_else(|| Error::Format {
            path: path.to_path_buf(),
            message: format!("line {}: missing field separator", lineno + 2),
        })?;
        match key {
            "track_id" => track_id = Some(rest.to_string()),
            "mode" => mode = Some(rest.parse::<FeatureMode>()?),
            "shape" => shape = Some(textio::parse_usize(rest, path, lineno + 2)?),
            "params" => {}
            "values" => {
                values = Some(
                    rest.split('\t')
                        .map(|v| textio::parse_f64(v, path, lineno + 2))
                        .collect::<Result<_>>()?,
                );
            }
            other => {
                return Err(Error::Format {
                    path: path.to_path_buf(),
                    message: format!("line {}: unknown field {other:?}", lineno + 2),
                })
            }
        }
    }
    let (track_id, mode, shape, values) = match (track_id, mode, shape, values) {
        (Some(t), Some(m), Some(s), Some(v)) => (t, m, s, v),
        _ => {
            return Err(Error::Format {
                path: path.to_path_buf(),
                message: "missing track_id, mode, shape or values".into(),
            })
        }
    };
    if values.len() != shape {
        return Err(Error::Format {
            path: path.to_path_buf(),
            message: format!("declared shape {shape} but found {} values", values.len()),
        });
    }
    Ok((track_id, mode, values))
}

pub fn save_manifest(path: &Path, entries: &[(String, PathBuf)]) -> Result<()> {
    let mut out = String::from("tagtriplet-feature-manifest 1\n");
    for (track_id, file) in entries {
        let _ = writeln!(out, "{track_id}\t{}", file.display());
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn load_manifest(path: &Path) -> Result<Vec<(String, PathBuf)>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    textio::check_version(lines.next(), "tagtriplet-feature-manifest", 1, path)?;
    let mut entries = Vec::new();
    for (lineno, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let (track_id, file) = line.split_once('\t').ok_or_else(|| Error::Format {
            path: path.to_path_buf(),
            message: format!("line {}: expected track_id<TAB>path", lineno + 2),
        })?;
        entries.push((track_id.to_string(), PathBuf::from(file)));
    }
    if entries.is_empty() {
        return Err(Error::Data(format!(
            "feature manifest {} lists no tracks",
            path.display()
        )));
    }
    Ok(entries)
}

/// Loads every manifest entry into one aligned matrix. Feature paths are
/// resolved relative to the manifest's directory when not absolute.
pub fn load_feature_matrix(manifest_path: &Path) -> Result<(Vec<String>, Array2<f64>)> {
    let base = manifest_path.parent().unwrap_or_else(|| Path::new("."));
    let entries = load_manifest(manifest_path)?;
    let mut track_ids = Vec::with_capacity(entries.len());
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(entries.len());
    for (track_id, file) in entries {
        let file = if file.is_absolute() {
            file
        } else {
            base.join(file)
        };
        let (stored_id, _, values) = load_features(&file)?;
        if stored_id != track_id {
            return Err(Error::Data(format!(
                "manifest lists {track_id} but {} contains {stored_id}",
                file.display()
            )));
        }
        if let Some(first) = rows.first() {
            if values.len() != first.len() {
                return Err(Error::Data(format!(
                    "feature width mismatch: {} has {} values, expected {}",
                    file.display(),
                    values.len(),
                    first.len()
                )));
            }
        }
        track_ids.push(track_id);
        rows.push(values);
    }
    let width = rows[0].len();
    let matrix = Array2::from_shape_fn((rows.len(), width), |(i, j)| rows[i][j]);
    Ok((track_ids, matrix))
}
