//! Distribution distances between audio sets over a clip embedding.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::audio::AudioClip;
use crate::dsp::{MfccConfig, MfccExtractor};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Clips shorter than this are skipped by the default embedder.
pub const MIN_CLIP_SECONDS: f64 = 0.25;
pub const LOG_RMS_FLOOR: f64 = 1e-5;

/// Rows of clip embeddings from one named source.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSet {
    pub name: String,
    pub embedder: String,
    pub dims: usize,
    /// Row-major `n × dims`.
    pub data: Vec<f64>,
}

impl EmbeddingSet {
    pub fn new(name: impl Into<String>, embedder: impl Into<String>, dims: usize, data: Vec<f64>) -> Result<Self> {
        if dims == 0 || data.len() % dims != 0 {
            return Err(Error::contract("embedding data does not divide into rows"));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("non-finite embedding entry".into()));
        }
        Ok(Self {
            name: name.into(),
            embedder: embedder.into(),
            dims,
            data,
        })
    }

    pub fn rows(&self) -> usize {
        self.data.len() / self.dims
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dims..(i + 1) * self.dims]
    }

    fn matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.rows(), self.dims, &self.data)
    }
}

/// Maps a clip to a fixed-length vector, or `None` if the clip is unusable.
pub trait ClipEmbedder {
    fn id(&self) -> &str;
    fn dims(&self) -> usize;
    fn embed(&self, samples: &[f64], sample_rate: u32) -> Option<Vec<f64>>;
}

/// Per-clip mean and standard deviation of each MFCC plus log-RMS.
pub struct MfccStatsEmbedder {
    extractor: MfccExtractor<f64>,
}

impl MfccStatsEmbedder {
    pub fn new(config: MfccConfig) -> Result<Self> {
        Ok(Self {
            extractor: MfccExtractor::new(config)?,
        })
    }
}

impl Default for MfccStatsEmbedder {
    fn default() -> Self {
        Self::new(MfccConfig::default()).expect("default MFCC config is valid")
    }
}

impl ClipEmbedder for MfccStatsEmbedder {
    fn id(&self) -> &str {
        "mfcc-stats-27"
    }

    fn dims(&self) -> usize {
        2 * self.extractor.config().n_coeffs + 1
    }

    fn embed(&self, samples: &[f64], sample_rate: u32) -> Option<Vec<f64>> {
        let cfg = self.extractor.config();
        if sample_rate != cfg.sample_rate || (samples.len() as f64) < MIN_CLIP_SECONDS * sample_rate as f64 {
            return None;
        }
        let c = cfg.n_coeffs;
        let coeffs = self.extractor.compute(samples);
        let frames = (coeffs.len() / c) as f64;
        let mut mean = vec![0.0; c];
        for row in coeffs.chunks_exact(c) {
            mean.iter_mut().zip(row).for_each(|(m, v)| *m += v);
        }
        mean.iter_mut().for_each(|m| *m /= frames);
        let mut var = vec![0.0; c];
        for row in coeffs.chunks_exact(c) {
            var.iter_mut()
                .zip(row)
                .zip(&mean)
                .for_each(|((s, v), m)| *s += (v - m) * (v - m));
        }
        let rms = (samples.iter().map(|v| v * v).sum::<f64>() / samples.len() as f64).sqrt();
        let mut out = mean;
        out.extend(var.into_iter().map(|s| (s / frames).sqrt()));
        out.push(rms.max(LOG_RMS_FLOOR).ln());
        Some(out)
    }
}

/// Reference level for [`loudness_normalized`].
pub const EVAL_RMS: f64 = 0.1;

/// Clip scaled to RMS `target` (silent clips are returned unchanged).
pub fn loudness_normalized<T: Scalar>(clip: &AudioClip<T>, target: f64) -> AudioClip<T> {
    let rms = clip.rms();
    if rms <= 0.0 {
        return clip.clone();
    }
    let gain = T::lit(target / rms);
    let samples = clip.samples().iter().map(|v| *v * gain).collect();
    AudioClip::new(samples, clip.sample_rate()).expect("scaled clip stays finite")
}

/// Embeds each clip; unusable clips are skipped with a warning.
pub fn embed_clips<T: Scalar>(name: &str, clips: &[AudioClip<T>], embedder: &dyn ClipEmbedder) -> Result<EmbeddingSet> {
    let mut data = Vec::with_capacity(clips.len() * embedder.dims());
    for (i, clip) in clips.iter().enumerate() {
        let samples: Vec<f64> = clip.samples().iter().map(|v| v.as_f64()).collect();
        match embedder.embed(&samples, clip.sample_rate()) {
            Some(row) => data.extend(row),
            None => log::warn!("{name}: skipping clip {i} ({} samples at {} Hz)", clip.len(), clip.sample_rate()),
        }
    }
    EmbeddingSet::new(name, embedder.id(), embedder.dims(), data)
}

/// Square root of a symmetric PSD matrix by eigendecomposition, with
/// negative eigenvalues clamped to zero.
pub fn matrix_sqrt_psd(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if !m.is_square() {
        return Err(Error::contract("matrix square root of a non-square matrix"));
    }
    let asym = (m - m.transpose()).amax();
    if asym > 1e-8 * m.amax().max(1.0) {
        return Err(Error::contract(format!("matrix is not symmetric (max deviation {asym:e})")));
    }
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let roots = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    let v = &eig.eigenvectors;
    Ok(v * DMatrix::from_diagonal(&roots) * v.transpose())
}

fn mean_cov(set: &EmbeddingSet) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let n = set.rows();
    if n < 2 {
        return Err(Error::contract(format!("set {} has {n} rows; at least 2 needed", set.name)));
    }
    let x = set.matrix();
    let mean = x.row_mean().transpose();
    let mut centered = x;
    for mut row in centered.row_iter_mut() {
        row -= mean.transpose();
    }
    let cov = centered.transpose() * &centered / (n as f64 - 1.0);
    Ok((mean, cov))
}

fn sqrt_trace_term(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<f64> {
    let ra = matrix_sqrt_psd(a)?;
    let inner = &ra * b * &ra;
    let inner = (&inner + inner.transpose()) * 0.5;
    Ok(matrix_sqrt_psd(&inner)?.trace())
}

/// Fréchet distance between Gaussians fitted to two embedding sets:
/// `|μa - μb|² + tr(Σa + Σb - 2 (Σa Σb)^½)`, with the cross term evaluated
/// as the mean of `tr((A^½ B A^½)^½)` over both argument orders so the
/// result is exactly symmetric.
pub fn fad(a: &EmbeddingSet, b: &EmbeddingSet) -> Result<f64> {
    if a.dims != b.dims {
        return Err(Error::contract("embedding sets differ in dimension"));
    }
    let (ma, ca) = mean_cov(a)?;
    let (mb, cb) = mean_cov(b)?;
    let mean_term = (&ma - &mb).norm_squared();
    let cross = (sqrt_trace_term(&ca, &cb)? + sqrt_trace_term(&cb, &ca)?) / 2.0;
    let value = mean_term + ca.trace() + cb.trace() - 2.0 * cross;
    if !value.is_finite() {
        let ea = SymmetricEigen::new(ca).eigenvalues;
        let eb = SymmetricEigen::new(cb).eigenvalues;
        return Err(Error::Numerical(format!(
            "FAD is {value}; covariance eigenvalue ranges [{:e}, {:e}] and [{:e}, {:e}]",
            ea.min(),
            ea.max(),
            eb.min(),
            eb.max()
        )));
    }
    Ok(value)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Kernel {
    /// Gaussian kernel `exp(-d² / 2σ²)`; σ defaults to the median pairwise
    /// distance of the pooled sets.
    Rbf { bandwidth: Option<f64> },
    Linear,
}

impl Default for Kernel {
    fn default() -> Self {
        Kernel::Rbf { bandwidth: None }
    }
}

fn sq_dist(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum()
}

fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

/// Median pairwise Euclidean distance over the pooled rows.
pub fn median_pairwise_distance(a: &EmbeddingSet, b: &EmbeddingSet) -> f64 {
    let rows: Vec<&[f64]> = (0..a.rows()).map(|i| a.row(i)).chain((0..b.rows()).map(|i| b.row(i))).collect();
    let mut d = Vec::with_capacity(rows.len() * rows.len().saturating_sub(1) / 2);
    for i in 0..rows.len() {
        for j in i + 1..rows.len() {
            d.push(sq_dist(rows[i], rows[j]).sqrt());
        }
    }
    if d.is_empty() {
        return 0.0;
    }
    d.sort_by(f64::total_cmp);
    let n = d.len();
    if n % 2 == 1 {
        d[n / 2]
    } else {
        0.5 * (d[n / 2 - 1] + d[n / 2])
    }
}

/// Unbiased (U-statistic) squared maximum mean discrepancy.
pub fn mmd2(a: &EmbeddingSet, b: &EmbeddingSet, kernel: Kernel) -> Result<f64> {
    if a.dims != b.dims {
        return Err(Error::contract("embedding sets differ in dimension"));
    }
    let (m, n) = (a.rows(), b.rows());
    if m < 2 || n < 2 {
        return Err(Error::contract("MMD needs at least two rows per set"));
    }
    let k: Box<dyn Fn(&[f64], &[f64]) -> f64> = match kernel {
        Kernel::Linear => Box::new(dot),
        Kernel::Rbf { bandwidth } => {
            let sigma = bandwidth.unwrap_or_else(|| median_pairwise_distance(a, b));
            if !(sigma > 0.0) {
                return Err(Error::Numerical(format!("RBF bandwidth {sigma} is not positive")));
            }
            let denom = 2.0 * sigma * sigma;
            Box::new(move |x, y| (-sq_dist(x, y) / denom).exp())
        }
    };
    let within = |s: &EmbeddingSet| {
        let r = s.rows();
        let mut total = 0.0;
        for i in 0..r {
            for j in i + 1..r {
                total += k(s.row(i), s.row(j));
            }
        }
        2.0 * total / (r as f64 * (r as f64 - 1.0))
    };
    let mut cross = 0.0;
    for i in 0..m {
        for j in 0..n {
            cross += k(a.row(i), b.row(j));
        }
    }
    Ok(within(a) + within(b) - 2.0 * cross / (m as f64 * n as f64))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairScore {
    pub set_a: String,
    pub set_b: String,
    pub fad: f64,
    pub mmd2: f64,
}

/// Pairwise scores between named sets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub embedder: String,
    pub kernel: Kernel,
    pub config_hash: String,
    pub pairs: Vec<PairScore>,
}

impl EvalReport {
    /// Scores every unordered pair of `sets` (in order).
    pub fn compute(sets: &[EmbeddingSet], kernel: Kernel, config_hash: impl Into<String>) -> Result<Self> {
        let embedder = sets.first().map(|s| s.embedder.clone()).unwrap_or_default();
        if sets.iter().any(|s| s.embedder != embedder) {
            return Err(Error::contract("all sets must share one embedder"));
        }
        let mut pairs = Vec::new();
        for i in 0..sets.len() {
            for j in i + 1..sets.len() {
                pairs.push(PairScore {
                    set_a: sets[i].name.clone(),
                    set_b: sets[j].name.clone(),
                    fad: fad(&sets[i], &sets[j])?,
                    mmd2: mmd2(&sets[i], &sets[j], kernel)?,
                });
            }
        }
        Ok(Self {
            embedder,
            kernel,
            config_hash: config_hash.into(),
            pairs,
        })
    }

    pub fn get(&self, a: &str, b: &str) -> Option<&PairScore> {
        self.pairs
            .iter()
            .find(|p| (p.set_a == a && p.set_b == b) || (p.set_a == b && p.set_b == a))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("set_a,set_b,fad,mmd2\n");
        for p in &self.pairs {
            out.push_str(&format!("{},{},{},{}\n", p.set_a, p.set_b, p.fad, p.mmd2));
        }
        out
    }

    /// Human-readable table.
    pub fn table(&self) -> String {
        let mut out = format!("embedder: {}\n{:<20} {:<20} {:>12} {:>12}\n", self.embedder, "set A", "set B", "FAD", "MMD²");
        for p in &self.pairs {
            out.push_str(&format!("{:<20} {:<20} {:>12.5} {:>12.6}\n", p.set_a, p.set_b, p.fad, p.mmd2));
        }
        out
    }
}
