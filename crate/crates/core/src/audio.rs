//! Audio clips, WAV input/output and band-limited resampling.

use std::io::{Cursor, Read, Seek};
use std::path::Path;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// A mono clip of audio samples at a fixed sample rate.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip<T: Scalar> {
    samples: Vec<T>,
    sample_rate: u32,
}

impl<T: Scalar> AudioClip<T> {
    pub fn new(samples: Vec<T>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::contract("sample rate must be positive"));
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return Err(Error::contract(format!("non-finite sample at index {i}")));
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    pub fn silence(len: usize, sample_rate: u32) -> Self {
        Self {
            samples: vec![T::zero(); len],
            sample_rate: sample_rate.max(1),
        }
    }

    pub fn samples(&self) -> &[T] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<T> {
        self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    pub fn peak(&self) -> T {
        self.samples
            .iter()
            .fold(T::zero(), |acc, s| if s.abs() > acc { s.abs() } else { acc })
    }

    pub fn rms(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        let energy: f64 = self.samples.iter().map(|s| s.as_f64() * s.as_f64()).sum();
        (energy / self.samples.len() as f64).sqrt()
    }

    /// Scales so that the largest magnitude is 1. Silent clips are left untouched.
    pub fn peak_normalized(mut self) -> Self {
        let peak = self.peak();
        if peak > T::zero() {
            let gain = T::one() / peak;
            self.samples.iter_mut().for_each(|s| *s = (*s * gain).min(T::one()).max(-T::one()));
        }
        self
    }

    /// Sub-clip `[start, start + len)`, zero-padded past the end.
    pub fn excerpt(&self, start: usize, len: usize) -> Self {
        let mut out = vec![T::zero(); len];
        if start < self.samples.len() {
            let avail = (self.samples.len() - start).min(len);
            out[..avail].copy_from_slice(&self.samples[start..start + avail]);
        }
        Self {
            samples: out,
            sample_rate: self.sample_rate,
        }
    }

    pub fn cast<U: Scalar>(&self) -> AudioClip<U> {
        AudioClip {
            samples: self.samples.iter().map(|s| U::lit(s.as_f64())).collect(),
            sample_rate: self.sample_rate,
        }
    }
}

fn write_error(path: &Path, err: hound::Error) -> Error {
    match err {
        hound::Error::IoError(e) => Error::Io(e),
        other => hound_error(path, other),
    }
}

fn hound_error(path: &Path, err: hound::Error) -> Error {
    match err {
        hound::Error::Unsupported => Error::Unsupported {
            path: path.to_path_buf(),
            message: "encoding not supported".into(),
        },
        other => Error::Format {
            path: path.to_path_buf(),
            message: other.to_string(),
        },
    }
}

/// Reads a PCM16 or float32 RIFF/WAVE file with one or two channels, mixing
/// down to mono by channel averaging.
pub fn read_wav<T: Scalar>(path: impl AsRef<Path>) -> Result<AudioClip<T>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path)?;
    read_wav_from(std::io::BufReader::new(file), path)
}

/// Same as [`read_wav`], from an in-memory buffer.
pub fn read_wav_bytes<T: Scalar>(bytes: &[u8]) -> Result<AudioClip<T>> {
    read_wav_from(Cursor::new(bytes), Path::new("<memory>"))
}

fn read_wav_from<T: Scalar, R: Read + Seek>(reader: R, origin: &Path) -> Result<AudioClip<T>> {
    let reader = hound::WavReader::new(reader).map_err(|e| hound_error(origin, e))?;
    let spec = reader.spec();
    let unsupported = |message: String| Error::Unsupported {
        path: origin.to_path_buf(),
        message,
    };
    if spec.channels == 0 || spec.channels > 2 {
        return Err(unsupported(format!("{} channels", spec.channels)));
    }
    let interleaved: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (hound::SampleFormat::Int, 16) => reader
            .into_samples::<i16>()
            .map(|s| s.map(|v| v as f64 / 32768.0))
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| hound_error(origin, e))?,
        (hound::SampleFormat::Float, 32) => reader
            .into_samples::<f32>()
            .map(|s| s.map(f64::from))
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| hound_error(origin, e))?,
        (format, bits) => {
            return Err(unsupported(format!("{format:?} with {bits} bits per sample")));
        }
    };
    let channels = spec.channels as usize;
    let samples: Vec<T> = interleaved
        .chunks_exact(channels)
        .map(|frame| T::lit(frame.iter().sum::<f64>() / channels as f64))
        .collect();
    AudioClip::new(samples, spec.sample_rate).map_err(|e| Error::Format {
        path: origin.to_path_buf(),
        message: e.to_string(),
    })
}

fn float_spec(sample_rate: u32) -> hound::WavSpec {
    hound::WavSpec {
        channels: 1,
        sample_rate,
        bits_per_sample: 32,
        sample_format: hound::SampleFormat::Float,
    }
}

/// Writes a mono float32 WAV file.
pub fn write_wav<T: Scalar>(path: impl AsRef<Path>, clip: &AudioClip<T>) -> Result<()> {
    let path = path.as_ref();
    let mut writer =
        hound::WavWriter::create(path, float_spec(clip.sample_rate)).map_err(|e| write_error(path, e))?;
    for s in &clip.samples {
        writer
            .write_sample(s.to_f32().unwrap_or(0.0))
            .map_err(|e| write_error(path, e))?;
    }
    writer.finalize().map_err(|e| write_error(path, e))
}

/// Encodes a clip as mono float32 WAV bytes.
pub fn wav_bytes<T: Scalar>(clip: &AudioClip<T>) -> Result<Vec<u8>> {
    let origin = Path::new("<memory>");
    let mut cursor = Cursor::new(Vec::new());
    {
        let mut writer =
            hound::WavWriter::new(&mut cursor, float_spec(clip.sample_rate)).map_err(|e| write_error(origin, e))?;
        for s in &clip.samples {
            writer
                .write_sample(s.to_f32().unwrap_or(0.0))
                .map_err(|e| write_error(origin, e))?;
        }
        writer.finalize().map_err(|e| write_error(origin, e))?;
    }
    Ok(cursor.into_inner())
}

const KAISER_BETA: f64 = 8.0;
const CUTOFF_FRACTION: f64 = 0.45;
const ZERO_CROSSINGS: f64 = 16.0;
const MAX_TABULATED_PHASES: u64 = 2048;

fn bessel_i0(x: f64) -> f64 {
    let mut sum = 1.0;
    let mut term = 1.0;
    let half = x / 2.0;
    for k in 1..64 {
        term *= (half / k as f64) * (half / k as f64);
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Kaiser-windowed sinc low-pass evaluated at fractional input-sample
/// offsets; taps are renormalized to unit DC gain.
struct SincKernel {
    /// Normalized cutoff in cycles per input sample.
    cutoff: f64,
    half_width: f64,
    i0_beta: f64,
}

impl SincKernel {
    fn new(source_rate: u32, target_rate: u32) -> Self {
        let cutoff = CUTOFF_FRACTION * source_rate.min(target_rate) as f64 / source_rate as f64;
        Self {
            cutoff,
            half_width: ZERO_CROSSINGS / (2.0 * cutoff),
            i0_beta: bessel_i0(KAISER_BETA),
        }
    }

    fn value(&self, t: f64) -> f64 {
        if t.abs() >= self.half_width {
            return 0.0;
        }
        let x = 2.0 * self.cutoff * t;
        let sinc = if x.abs() < 1e-12 {
            1.0
        } else {
            (std::f64::consts::PI * x).sin() / (std::f64::consts::PI * x)
        };
        let r = t / self.half_width;
        let window = bessel_i0(KAISER_BETA * (1.0 - r * r).max(0.0).sqrt()) / self.i0_beta;
        2.0 * self.cutoff * sinc * window
    }

    /// Taps for an output instant at `first + frac` input samples, where
    /// `first` is the lowest input index touched.
    fn taps(&self, frac: f64) -> (isize, Vec<f64>) {
        let reach = self.half_width.ceil() as isize;
        let lo = -reach + 1;
        let mut taps: Vec<f64> = (lo..=reach).map(|j| self.value(frac - j as f64)).collect();
        let total: f64 = taps.iter().sum();
        if total.abs() > 0.0 {
            taps.iter_mut().for_each(|t| *t /= total);
        }
        (lo, taps)
    }
}

/// Band-limited rational resampling with a polyphase windowed-sinc filter.
///
/// Output length is `round(L · target / source)`.
pub fn resample<T: Scalar>(clip: &AudioClip<T>, target_rate: u32) -> Result<AudioClip<T>> {
    if target_rate == 0 {
        return Err(Error::contract("target rate must be positive"));
    }
    let source_rate = clip.sample_rate;
    if target_rate == source_rate {
        return Ok(clip.clone());
    }
    let g = gcd(source_rate as u64, target_rate as u64);
    let up = target_rate as u64 / g;
    let down = source_rate as u64 / g;
    let out_len = ((clip.len() as u128 * target_rate as u128 + source_rate as u128 / 2) / source_rate as u128) as usize;
    let kernel = SincKernel::new(source_rate, target_rate);
    let input: Vec<f64> = clip.samples.iter().map(|s| s.as_f64()).collect();

    let table: Option<Vec<(isize, Vec<f64>)>> = (up <= MAX_TABULATED_PHASES)
        .then(|| (0..up).map(|phase| kernel.taps(phase as f64 / up as f64)).collect());

    let mut out = Vec::with_capacity(out_len);
    for m in 0..out_len as u64 {
        let position = m * down;
        let base = (position / up) as isize;
        let phase = position % up;
        let owned;
        let (lo, taps) = match &table {
            Some(t) => (t[phase as usize].0, &t[phase as usize].1),
            None => {
                owned = kernel.taps(phase as f64 / up as f64);
                (owned.0, &owned.1)
            }
        };
        let mut acc = 0.0;
        for (j, tap) in taps.iter().enumerate() {
            let idx = base + lo + j as isize;
            if idx >= 0 && (idx as usize) < input.len() {
                acc += tap * input[idx as usize];
            }
        }
        out.push(T::lit(acc));
    }
    AudioClip::new(out, target_rate)
}
