//! Core types: feature vectors, signature records, datasets, the standard
//! scaler, feature-file ingestion and the synthetic feature-space generator.

use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SignatureKind {
    Genuine,
    Skilled,
    Simple,
}

impl SignatureKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            SignatureKind::Genuine => "genuine",
            SignatureKind::Skilled => "skilled",
            SignatureKind::Simple => "simple",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "genuine" => Some(SignatureKind::Genuine),
            "skilled" => Some(SignatureKind::Skilled),
            "simple" => Some(SignatureKind::Simple),
            _ => None,
        }
    }
}

/// Fixed-dimension real vector representing one signature in feature space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector(Vec<f64>);

impl FeatureVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(bad) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Config(format!(
                "non-finite feature value at dimension {bad}"
            )));
        }
        Ok(FeatureVector(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignatureRecord {
    pub writer_id: u32,
    pub signature_id: u32,
    pub kind: SignatureKind,
    pub features: FeatureVector,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Development,
    Exploitation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub name: String,
    pub dimensionality: usize,
    pub records: Vec<SignatureRecord>,
    pub split: Split,
}

impl Dataset {
    pub fn new(name: impl Into<String>, dimensionality: usize, split: Split) -> Self {
        Dataset {
            name: name.into(),
            dimensionality,
            records: Vec::new(),
            split,
        }
    }

    /// Distinct writer ids in first-appearance order.
    pub fn writer_ids(&self) -> Vec<u32> {
        let mut ids = Vec::new();
        for r in &self.records {
            if !ids.contains(&r.writer_id) {
                ids.push(r.writer_id);
            }
        }
        ids
    }

    /// Genuine records of one writer, sorted by signature id.
    pub fn genuines_of(&self, writer_id: u32) -> Vec<&SignatureRecord> {
        let mut out: Vec<&SignatureRecord> = self
            .records
            .iter()
            .filter(|r| r.writer_id == writer_id && r.kind == SignatureKind::Genuine)
            .collect();
        out.sort_by_key(|r| r.signature_id);
        out
    }

    pub fn of_kind(&self, writer_id: u32, kind: SignatureKind) -> Vec<&SignatureRecord> {
        let mut out: Vec<&SignatureRecord> = self
            .records
            .iter()
            .filter(|r| r.writer_id == writer_id && r.kind == kind)
            .collect();
        out.sort_by_key(|r| r.signature_id);
        out
    }

    /// Splits by writer: the first `dev_writers` distinct writers become the
    /// development set, the rest the exploitation set. Writer sets are disjoint.
    pub fn split_writers(&self, dev_writers: usize) -> Result<(Dataset, Dataset)> {
        let ids = self.writer_ids();
        if dev_writers == 0 || dev_writers >= ids.len() {
            return Err(Error::Config(format!(
                "cannot split {} writers into {} development writers",
                ids.len(),
                dev_writers
            )));
        }
        let dev_ids = &ids[..dev_writers];
        let mut dev = Dataset::new(format!("{}-dev", self.name), self.dimensionality, Split::Development);
        let mut expl = Dataset::new(
            format!("{}-expl", self.name),
            self.dimensionality,
            Split::Exploitation,
        );
        for r in &self.records {
            if dev_ids.contains(&r.writer_id) {
                dev.records.push(r.clone());
            } else {
                expl.records.push(r.clone());
            }
        }
        Ok((dev, expl))
    }
}

/// Loads the delimiter-separated feature-file format:
/// first line `dims=<n>`, then rows `writer_id,signature_id,kind,v1,...,vn`.
pub fn load_features(path: &Path) -> Result<Dataset> {
    let text =
        std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".to_string());
    parse_features(&text, name)
}

pub fn parse_features(text: &str, name: String) -> Result<Dataset> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::parse(1, "empty file, expected `dims=<n>` header"))?;
    let dims: usize = header
        .strip_prefix("dims=")
        .and_then(|s| s.trim().parse().ok())
        .ok_or_else(|| Error::parse(1, format!("malformed header `{header}`, expected `dims=<n>`")))?;

    let mut ds = Dataset::new(name, dims, Split::Development);
    for (idx, raw) in lines {
        let line_no = idx + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = raw.split(',').collect();
        if fields.len() != 3 + dims {
            return Err(Error::parse(
                line_no,
                format!("expected {} fields, found {}", 3 + dims, fields.len()),
            ));
        }
        let writer_id: u32 = fields[0]
            .trim()
            .parse()
            .map_err(|_| Error::parse(line_no, format!("bad writer id `{}`", fields[0])))?;
        let signature_id: u32 = fields[1]
            .trim()
            .parse()
            .map_err(|_| Error::parse(line_no, format!("bad signature id `{}`", fields[1])))?;
        let kind = SignatureKind::parse(fields[2].trim())
            .ok_or_else(|| Error::parse(line_no, format!("unknown kind `{}`", fields[2])))?;
        let mut values = Vec::with_capacity(dims);
        for f in &fields[3..] {
            let v: f64 = f
                .trim()
                .parse()
                .map_err(|_| Error::parse(line_no, format!("bad feature value `{f}`")))?;
            if !v.is_finite() {
                return Err(Error::parse(line_no, format!("non-finite feature value `{f}`")));
            }
            values.push(v);
        }
        ds.records.push(SignatureRecord {
            writer_id,
            signature_id,
            kind,
            features: FeatureVector::new(values)?,
        });
    }
    Ok(ds)
}

/// Inverse of `load_features`; floats use the shortest round-trip form.
pub fn render_features(ds: &Dataset) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "dims={}", ds.dimensionality);
    for r in &ds.records {
        let _ = write!(out, "{},{},{}", r.writer_id, r.signature_id, r.kind.as_str());
        for v in r.features.values() {
            let _ = write!(out, ",{v}");
        }
        out.push('\n');
    }
    out
}

pub fn save_features(ds: &Dataset, path: &Path) -> Result<()> {
    std::fs::write(path, render_features(ds)).map_err(|e| Error::io(path.display().to_string(), e))
}

/// Per-dimension zero-mean unit-variance scaler. Fitted once on a training
/// collection; `transform` never re-fits, which is what makes the transfer
/// protocol well defined.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StandardScaler {
    pub means: Vec<f64>,
    pub std_devs: Vec<f64>,
}

impl StandardScaler {
    pub fn identity(n: usize) -> Self {
        StandardScaler {
            means: vec![0.0; n],
            std_devs: vec![1.0; n],
        }
    }

    pub fn dims(&self) -> usize {
        self.means.len()
    }

    /// Fits means and population standard deviations. A zero-variance
    /// dimension gets std 1 so the transform stays total.
    pub fn fit<S: AsRef<[f64]>>(samples: &[S]) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::EmptyInput("fit_scaler requires at least one sample"));
        }
        let n = samples[0].as_ref().len();
        for (i, s) in samples.iter().enumerate() {
            if s.as_ref().len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    actual: s.as_ref().len(),
                });
            }
            let _ = i;
        }
        let m = samples.len() as f64;
        let mut means = vec![0.0; n];
        for s in samples {
            for (acc, v) in means.iter_mut().zip(s.as_ref()) {
                *acc += v;
            }
        }
        for acc in &mut means {
            *acc /= m;
        }
        let mut vars = vec![0.0; n];
        for s in samples {
            for ((acc, v), mu) in vars.iter_mut().zip(s.as_ref()).zip(&means) {
                let d = v - mu;
                *acc += d * d;
            }
        }
        let std_devs = vars
            .iter()
            .map(|&v| {
                let s = (v / m).sqrt();
                if s > 0.0 {
                    s
                } else {
                    1.0
                }
            })
            .collect();
        Ok(StandardScaler { means, std_devs })
    }

    pub fn transform(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.means.len() {
            return Err(Error::DimensionMismatch {
                expected: self.means.len(),
                actual: v.len(),
            });
        }
        Ok(v.iter()
            .zip(&self.means)
            .zip(&self.std_devs)
            .map(|((x, mu), sd)| (x - mu) / sd)
            .collect())
    }
}

/// Geometry knobs for the synthetic feature space: per-writer Gaussian
/// clusters, with skilled forgeries placed on a sphere of radius
/// `delta_good` (good quality, overlapping the genuine cloud) or
/// `delta_bad` (bad quality, far outside it) around the writer centroid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub writers: usize,
    pub dimensionality: usize,
    pub genuine_per_writer: usize,
    pub skilled_per_writer: usize,
    pub sigma_genuine: f64,
    /// Relative spread of per-writer variability: writer w draws its own
    /// noise scale uniformly from sigma_genuine * [1 - spread, 1 + spread].
    /// 0 gives every writer the same scale.
    #[serde(default)]
    pub sigma_spread: f64,
    pub sigma_centroid: f64,
    /// Number of feature coordinates in which a writer's centroid is
    /// nonzero. 0 means dense centroids (all coordinates drawn). Sparse
    /// centroids model writers that differ in a handful of features.
    #[serde(default)]
    pub active_features: usize,
    /// Distance between a writer's two signing styles. Each genuine
    /// signature is drawn around one of two mode centers placed
    /// mode_distance apart along a writer-specific direction; skilled
    /// forgeries imitate the average impression at the centroid. 0 gives
    /// unimodal writers.
    #[serde(default)]
    pub mode_distance: f64,
    /// Noise multiplier for the forger's hand: skilled forgeries are drawn
    /// with forger_noise times the victim writer's noise scale.
    #[serde(default = "default_forger_noise")]
    pub forger_noise: f64,
    /// Fraction of each writer's skilled forgeries that are good quality.
    pub good_fraction: f64,
    pub delta_good: f64,
    pub delta_bad: f64,
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.writers == 0 || self.dimensionality == 0 || self.genuine_per_writer == 0 {
            return Err(Error::Config(
                "writers, dimensionality and genuine_per_writer must be positive".into(),
            ));
        }
        if self.sigma_genuine <= 0.0 || self.sigma_centroid <= 0.0 {
            return Err(Error::Config("spreads must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.sigma_spread) {
            return Err(Error::Config("sigma_spread must lie in [0, 1)".into()));
        }
        if self.active_features > self.dimensionality {
            return Err(Error::Config(
                "active_features cannot exceed dimensionality".into(),
            ));
        }
        if self.mode_distance < 0.0 {
            return Err(Error::Config("mode_distance must be non-negative".into()));
        }
        if self.forger_noise <= 0.0 {
            return Err(Error::Config("forger_noise must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.good_fraction) {
            return Err(Error::Config("good_fraction must lie in [0, 1]".into()));
        }
        if self.delta_good <= 0.0 || self.delta_bad <= 0.0 || self.delta_good >= self.delta_bad {
            return Err(Error::Config(
                "forgery offsets must satisfy 0 < delta_good < delta_bad".into(),
            ));
        }
        Ok(())
    }

    /// Number of good-quality skilled forgeries per writer. Per writer, the
    /// skilled signatures with ids below this count are the good ones.
    pub fn good_forgeries_per_writer(&self) -> usize {
        (self.good_fraction * self.skilled_per_writer as f64).round() as usize
    }
}

fn default_forger_noise() -> f64 {
    1.0
}

fn gaussian_vec(rng: &mut ChaCha8Rng, n: usize, sigma: f64) -> Vec<f64> {
    (0..n)
        .map(|_| {
            let z: f64 = rng.sample(StandardNormal);
            z * sigma
        })
        .collect()
}

fn unit_direction(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    loop {
        let v = gaussian_vec(rng, n, 1.0);
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-12 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

/// Deterministic synthetic dataset: a pure function of (config, seed).
pub fn synth_generate(config: &SynthConfig, seed: u64) -> Result<Dataset> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = config.dimensionality;
    let mut ds = Dataset::new(format!("synth-{seed}"), n, Split::Development);
    let n_good = config.good_forgeries_per_writer();
    for w in 0..config.writers {
        let centroid = if config.active_features == 0 {
            gaussian_vec(&mut rng, n, config.sigma_centroid)
        } else {
            let mut coords: Vec<usize> = (0..n).collect();
            for i in 0..config.active_features {
                let j = rng.gen_range(i..n);
                coords.swap(i, j);
            }
            let mut c = vec![0.0; n];
            for &i in &coords[..config.active_features] {
                let z: f64 = rng.sample(StandardNormal);
                c[i] = z * config.sigma_centroid;
            }
            c
        };
        // Cubic skew: most writers sit near the low end of the scale range,
        // a minority are much sloppier.
        let t: f64 = rng.gen();
        let scale = 1.0 - config.sigma_spread + 2.0 * config.sigma_spread * t * t * t;
        let sigma_w = config.sigma_genuine * scale;
        let mode_offset: Vec<f64> = unit_direction(&mut rng, n)
            .into_iter()
            .map(|d| d * config.mode_distance / 2.0)
            .collect();
        for g in 0..config.genuine_per_writer {
            let mode: f64 = if rng.gen::<bool>() { 1.0 } else { -1.0 };
            let noise = gaussian_vec(&mut rng, n, sigma_w);
            let values: Vec<f64> = centroid
                .iter()
                .zip(&mode_offset)
                .zip(&noise)
                .map(|((c, m), e)| c + mode * m + e)
                .collect();
            ds.records.push(SignatureRecord {
                writer_id: w as u32,
                signature_id: g as u32,
                kind: SignatureKind::Genuine,
                features: FeatureVector::new(values)?,
            });
        }
        for s in 0..config.skilled_per_writer {
            let delta = if s < n_good {
                config.delta_good
            } else {
                config.delta_bad
            };
            let dir = unit_direction(&mut rng, n);
            let noise = gaussian_vec(&mut rng, n, sigma_w * config.forger_noise);
            let values: Vec<f64> = centroid
                .iter()
                .zip(&dir)
                .zip(&noise)
                .map(|((c, d), e)| c + d * delta + e)
                .collect();
            ds.records.push(SignatureRecord {
                writer_id: w as u32,
                signature_id: s as u32,
                kind: SignatureKind::Skilled,
                features: FeatureVector::new(values)?,
            });
        }
    }
    Ok(ds)
}
