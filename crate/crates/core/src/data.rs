//! Labelled multichannel datasets, the synthetic correlated-pair generator and
//! experiment configuration.
//!
//! On disk a dataset is a directory holding `manifest.json` and `data.bin`.
//! `data.bin` is the magic `MTSD`, a little-endian `u32` format version, then
//! every sample as little-endian `f64` values in row-major `T×C` order, in
//! manifest order. Synthetic datasets also write `signal.bin` and `noise.bin`
//! in the same layout, holding the additive decomposition of each sample.

use std::collections::BTreeSet;
use std::f64::consts::TAU;
use std::path::{Path, PathBuf};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::cif::CifConfig;
use crate::error::{config, dim, Error, Result};
use crate::io::{f64s_from_le, f64s_to_le, read_file, write_atomic};
use crate::model::HmBiTcnConfig;
use crate::rng::{self, Normal, GENERATOR_NAME};
use crate::tensor::Tensor;
use crate::train::{SplitSpec, TrainConfig};

pub const DATA_MAGIC: &[u8; 4] = b"MTSD";
pub const FORMAT_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";
pub const DATA_FILE: &str = "data.bin";
pub const SIGNAL_FILE: &str = "signal.bin";
pub const NOISE_FILE: &str = "noise.bin";

#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    /// `T×C` values.
    pub values: Tensor,
    pub label: usize,
    pub subject_id: String,
}

/// Ground-truth additive split `values = signal + noise` for every sample.
#[derive(Clone, Debug, PartialEq)]
pub struct Decomposition {
    pub signal: Vec<Tensor>,
    pub noise: Vec<Tensor>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    num_classes: usize,
    length: usize,
    channels: usize,
    samples: Vec<Sample>,
    decomposition: Option<Decomposition>,
}

impl Dataset {
    pub fn new(num_classes: usize, length: usize, channels: usize, samples: Vec<Sample>) -> Result<Self> {
        for (i, s) in samples.iter().enumerate() {
            if s.values.shape() != [length, channels] {
                return dim(format!(
                    "sample {i} has shape {:?}, expected [{length}, {channels}]",
                    s.values.shape()
                ));
            }
            if s.label >= num_classes {
                return config(format!("sample {i} has label {} ≥ K = {num_classes}", s.label));
            }
        }
        Ok(Self {
            num_classes,
            length,
            channels,
            samples,
            decomposition: None,
        })
    }

    /// Attaches a signal/noise decomposition; each pair must sum to its sample.
    pub fn with_decomposition(mut self, dec: Decomposition) -> Result<Self> {
        if dec.signal.len() != self.samples.len() || dec.noise.len() != self.samples.len() {
            return dim("decomposition length differs from sample count");
        }
        for (i, s) in self.samples.iter().enumerate() {
            let (sig, noi) = (&dec.signal[i], &dec.noise[i]);
            if sig.shape() != s.values.shape() || noi.shape() != s.values.shape() {
                return dim(format!("decomposition of sample {i} has the wrong shape"));
            }
            let ok = s
                .values
                .data()
                .iter()
                .zip(sig.data().iter().zip(noi.data()))
                .all(|(&v, (&a, &b))| v == a + b);
            if !ok {
                return config(format!("decomposition of sample {i} does not sum to its values"));
            }
        }
        self.decomposition = Some(dec);
        Ok(self)
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn length(&self) -> usize {
        self.length
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn decomposition(&self) -> Option<&Decomposition> {
        self.decomposition.as_ref()
    }

    pub fn labels(&self) -> Vec<usize> {
        self.samples.iter().map(|s| s.label).collect()
    }

    /// Distinct subject identifiers, sorted.
    pub fn subjects(&self) -> Vec<String> {
        self.samples
            .iter()
            .map(|s| s.subject_id.clone())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect()
    }

    /// The samples at `indices`, in that order, with their decomposition if present.
    pub fn subset(&self, indices: &[usize]) -> Self {
        let pick = |v: &[Tensor]| indices.iter().map(|&i| v[i].clone()).collect();
        Self {
            num_classes: self.num_classes,
            length: self.length,
            channels: self.channels,
            samples: indices.iter().map(|&i| self.samples[i].clone()).collect(),
            decomposition: self.decomposition.as_ref().map(|d| Decomposition {
                signal: pick(&d.signal),
                noise: pick(&d.noise),
            }),
        }
    }

    /// Stacks the samples at `indices` into a `B×T×C` tensor plus labels.
    pub fn batch(&self, indices: &[usize]) -> (Tensor, Vec<usize>) {
        let mut data = Vec::with_capacity(indices.len() * self.length * self.channels);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            data.extend_from_slice(self.samples[i].values.data());
            labels.push(self.samples[i].label);
        }
        let x = Tensor::new(vec![indices.len(), self.length, self.channels], data).expect("consistent sample shapes");
        (x, labels)
    }

    /// Applies a CIF transform to every sample and to both decomposition parts.
    pub fn apply_cif(&self, cfg: &CifConfig) -> Result<Self> {
        cfg.validate(self.channels)?;
        let map = |t: &Tensor| -> Result<Tensor> {
            let x = t.clone().reshape(vec![1, self.length, self.channels])?;
            cfg.apply(&x)?.reshape(vec![self.length, self.channels])
        };
        let samples = self
            .samples
            .iter()
            .map(|s| {
                Ok(Sample {
                    values: map(&s.values)?,
                    label: s.label,
                    subject_id: s.subject_id.clone(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let decomposition = match &self.decomposition {
            Some(d) => Some(Decomposition {
                signal: d.signal.iter().map(map).collect::<Result<_>>()?,
                noise: d.noise.iter().map(map).collect::<Result<_>>()?,
            }),
            None => None,
        };
        Ok(Self {
            samples,
            decomposition,
            ..self.clone_header()
        })
    }

    fn clone_header(&self) -> Self {
        Self {
            num_classes: self.num_classes,
            length: self.length,
            channels: self.channels,
            samples: Vec::new(),
            decomposition: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
struct ManifestEntry {
    label: usize,
    subject_id: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
struct Manifest {
    format_version: u32,
    generator: String,
    num_classes: usize,
    length: usize,
    channels: usize,
    decomposition: bool,
    samples: Vec<ManifestEntry>,
}

fn encode_tensors<'a>(tensors: impl Iterator<Item = &'a Tensor>) -> Vec<u8> {
    let mut buf = Vec::new();
    buf.extend_from_slice(DATA_MAGIC);
    buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    for t in tensors {
        f64s_to_le(t.data(), &mut buf);
    }
    buf
}

fn decode_tensors(path: &Path, count: usize, length: usize, channels: usize) -> Result<Vec<Tensor>> {
    let bytes = read_file(path)?;
    let bad = |msg: String| Error::Format {
        path: path.to_path_buf(),
        msg,
    };
    if bytes.len() < 8 || &bytes[..4] != DATA_MAGIC {
        return Err(bad("missing MTSD header".into()));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != FORMAT_VERSION {
        return Err(bad(format!("unsupported format version {version}")));
    }
    let per = length * channels;
    if bytes.len() - 8 != 8 * per * count {
        return Err(bad(format!(
            "expected {} payload bytes, found {}",
            8 * per * count,
            bytes.len() - 8
        )));
    }
    let values = f64s_from_le(&bytes[8..]);
    values
        .chunks(per.max(1))
        .take(count)
        .map(|c| Tensor::new(vec![length, channels], c.to_vec()).map_err(|_| bad("non-finite value".into())))
        .collect()
}

pub fn save_dataset(ds: &Dataset, dir: &Path) -> Result<()> {
    let manifest = Manifest {
        format_version: FORMAT_VERSION,
        generator: GENERATOR_NAME.into(),
        num_classes: ds.num_classes,
        length: ds.length,
        channels: ds.channels,
        decomposition: ds.decomposition.is_some(),
        samples: ds
            .samples
            .iter()
            .map(|s| ManifestEntry {
                label: s.label,
                subject_id: s.subject_id.clone(),
            })
            .collect(),
    };
    let mut json = serde_json::to_vec_pretty(&manifest)?;
    json.push(b'\n');
    write_atomic(&dir.join(DATA_FILE), &encode_tensors(ds.samples.iter().map(|s| &s.values)))?;
    if let Some(d) = &ds.decomposition {
        write_atomic(&dir.join(SIGNAL_FILE), &encode_tensors(d.signal.iter()))?;
        write_atomic(&dir.join(NOISE_FILE), &encode_tensors(d.noise.iter()))?;
    }
    write_atomic(&dir.join(MANIFEST_FILE), &json)
}

pub fn load_dataset(dir: &Path) -> Result<Dataset> {
    let manifest_path = dir.join(MANIFEST_FILE);
    let manifest: Manifest = serde_json::from_slice(&read_file(&manifest_path)?)?;
    if manifest.format_version != FORMAT_VERSION {
        return Err(Error::Format {
            path: manifest_path,
            msg: format!("unsupported format version {}", manifest.format_version),
        });
    }
    let (n, t, c) = (manifest.samples.len(), manifest.length, manifest.channels);
    let values = decode_tensors(&dir.join(DATA_FILE), n, t, c)?;
    let samples = values
        .into_iter()
        .zip(manifest.samples)
        .map(|(values, e)| Sample {
            values,
            label: e.label,
            subject_id: e.subject_id,
        })
        .collect();
    let ds = Dataset::new(manifest.num_classes, t, c, samples)?;
    if manifest.decomposition {
        let signal = decode_tensors(&dir.join(SIGNAL_FILE), n, t, c)?;
        let noise = decode_tensors(&dir.join(NOISE_FILE), n, t, c)?;
        return ds.with_decomposition(Decomposition { signal, noise });
    }
    Ok(ds)
}

/// Generator settings for the correlated-pair classification task.
///
/// Channel `p` and channel `p + C/2` form a pair. Each pair carries a
/// class-specific sum of two sinusoids scaled to mean power `sigma_s2`, with
/// time-averaged correlation exactly `rho` between the two members, plus
/// white Gaussian noise of variance `sigma_e2` correlated `gamma` across the
/// pair.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub num_classes: usize,
    pub subjects_per_class: usize,
    pub samples_per_subject: usize,
    pub length: usize,
    pub channels: usize,
    /// Whole cycles per window of the two sinusoids of each class; defaults
    /// to `[2 + k, 5 + 2k]` for class `k`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class_frequencies: Option<Vec<[f64; 2]>>,
    /// Per-sample random phase of each sinusoid; otherwise phases are fixed per pair.
    #[serde(default = "default_true")]
    pub random_phase: bool,
    pub sigma_s2: f64,
    pub sigma_e2: f64,
    pub rho: f64,
    pub gamma: f64,
    pub seed: u64,
}

fn default_true() -> bool {
    true
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            num_classes: 2,
            subjects_per_class: 10,
            samples_per_subject: 10,
            length: 64,
            channels: 4,
            class_frequencies: None,
            random_phase: true,
            sigma_s2: 1.0,
            sigma_e2: 4.0,
            rho: 0.0,
            gamma: 0.9,
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.num_classes < 2 || self.subjects_per_class == 0 || self.samples_per_subject == 0 {
            return config("need at least 2 classes and one subject and sample per class");
        }
        if self.length < 2 {
            return config("length must be at least 2");
        }
        if self.channels == 0 || !self.channels.is_multiple_of(2) {
            return config(format!("channel count {} must be even and positive", self.channels));
        }
        let positive = |v: f64| v.is_finite() && v >= 0.0;
        if !positive(self.sigma_s2) || !positive(self.sigma_e2) {
            return config("variances must be finite and non-negative");
        }
        if !(self.rho.abs() <= 1.0 && self.gamma.abs() <= 1.0) {
            return config("rho and gamma must lie in [-1, 1]");
        }
        if let Some(f) = &self.class_frequencies {
            if f.len() != self.num_classes || f.iter().flatten().any(|v| !v.is_finite()) {
                return config("class_frequencies needs one finite pair per class");
            }
        }
        Ok(())
    }

    pub fn frequencies(&self, class: usize) -> [f64; 2] {
        match &self.class_frequencies {
            Some(f) => f[class],
            None => [2.0 + class as f64, 5.0 + 2.0 * class as f64],
        }
    }

    pub fn snr_in(&self) -> f64 {
        self.sigma_s2 / self.sigma_e2
    }
}

/// Removes the mean and scales to unit mean square; a constant input becomes zero.
fn standardise(v: &mut [f64]) {
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    v.iter_mut().for_each(|x| *x -= mean);
    let power = v.iter().map(|x| x * x).sum::<f64>() / v.len() as f64;
    if power > 0.0 {
        let s = power.sqrt();
        v.iter_mut().for_each(|x| *x /= s);
    }
}

/// Two zero-mean, unit-power, mutually orthogonal class templates.
fn pair_templates(freqs: [f64; 2], phases: [f64; 2], len: usize) -> (Vec<f64>, Vec<f64>) {
    let wave = |f: fn(f64) -> f64| -> Vec<f64> {
        (0..len)
            .map(|t| {
                let u = t as f64 / len as f64;
                f(TAU * freqs[0] * u + phases[0]) + f(TAU * freqs[1] * u + phases[1])
            })
            .collect()
    };
    let mut primary = wave(f64::sin);
    let mut secondary = wave(f64::cos);
    standardise(&mut primary);
    let dot = primary.iter().zip(&secondary).map(|(p, s)| p * s).sum::<f64>() / len as f64;
    secondary.iter_mut().zip(&primary).for_each(|(s, p)| *s -= dot * p);
    standardise(&mut secondary);
    (primary, secondary)
}

/// Draws the dataset described by `spec`, keeping the signal/noise decomposition.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<Dataset> {
    spec.validate()?;
    let (len, c) = (spec.length, spec.channels);
    let half = c / 2;
    let sigma_s = spec.sigma_s2.sqrt();
    let sigma_e = spec.sigma_e2.sqrt();
    let partner = (1.0 - spec.rho * spec.rho).max(0.0).sqrt();
    let noise_partner = (1.0 - spec.gamma * spec.gamma).max(0.0).sqrt();
    let mut normal = Normal::new(rng::seeded(rng::derive_seed(spec.seed, 0)));
    let mut phase_rng = rng::seeded(rng::derive_seed(spec.seed, 1));

    let mut samples = Vec::new();
    let mut signal = Vec::new();
    let mut noise = Vec::new();
    for class in 0..spec.num_classes {
        let freqs = spec.frequencies(class);
        for subj in 0..spec.subjects_per_class {
            let subject_id = format!("c{class}s{subj}");
            for _ in 0..spec.samples_per_subject {
                let mut sig = vec![0.0; len * c];
                let mut noi = vec![0.0; len * c];
                for p in 0..half {
                    let phases = if spec.random_phase {
                        [TAU * phase_rng.random::<f64>(), TAU * phase_rng.random::<f64>()]
                    } else {
                        [0.7 * p as f64, 1.3 * p as f64]
                    };
                    let (primary, secondary) = pair_templates(freqs, phases, len);
                    for t in 0..len {
                        sig[t * c + p] = sigma_s * primary[t];
                        sig[t * c + p + half] = sigma_s * (spec.rho * primary[t] + partner * secondary[t]);
                        let (z1, z2) = (normal.sample(), normal.sample());
                        noi[t * c + p] = sigma_e * z1;
                        noi[t * c + p + half] = sigma_e * (spec.gamma * z1 + noise_partner * z2);
                    }
                }
                let values: Vec<f64> = sig.iter().zip(&noi).map(|(s, e)| s + e).collect();
                samples.push(Sample {
                    values: Tensor::new(vec![len, c], values)?,
                    label: class,
                    subject_id: subject_id.clone(),
                });
                signal.push(Tensor::new(vec![len, c], sig)?);
                noise.push(Tensor::new(vec![len, c], noi)?);
            }
        }
    }
    Dataset::new(spec.num_classes, len, c, samples)?.with_decomposition(Decomposition { signal, noise })
}

/// Ratio of pooled signal power to pooled noise power in channel `channel`,
/// measured from the decomposition.
pub fn measured_snr(ds: &Dataset, channel: usize) -> Result<f64> {
    let d = ds
        .decomposition()
        .ok_or_else(|| Error::Argument("dataset has no signal/noise decomposition".into()))?;
    if channel >= ds.channels() {
        return dim(format!("channel {channel} out of range for C = {}", ds.channels()));
    }
    let power = |ts: &[Tensor]| -> f64 {
        let vals: Vec<f64> = ts
            .iter()
            .flat_map(|t| t.data().iter().skip(channel).step_by(ds.channels()).copied())
            .collect();
        crate::snr::sample_variance(&vals)
    };
    Ok(power(&d.signal) / power(&d.noise))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    Path(PathBuf),
    Synthetic(SyntheticSpec),
}

/// One experiment: data, optional CIF front end, model, training and split settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub data: DataSource,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cif: Option<CifConfig>,
    pub model: HmBiTcnConfig,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub split: SplitSpec,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = read_file(path)?;
        Self::from_json(std::str::from_utf8(&bytes).map_err(|e| Error::Format {
            path: path.to_path_buf(),
            msg: e.to_string(),
        })?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialises")
    }

    pub fn validate(&self) -> Result<()> {
        if self.cif.is_some() && self.model.cif.is_some() {
            return config("CIF given both at top level and inside the model config");
        }
        if let DataSource::Synthetic(s) = &self.data {
            s.validate()?;
        }
        self.model_config().validate()?;
        self.train.validate()?;
        self.split.validate()
    }

    /// Model config with the top-level CIF settings folded in.
    pub fn model_config(&self) -> HmBiTcnConfig {
        let mut m = self.model.clone();
        if self.cif.is_some() {
            m.cif = self.cif.clone();
        }
        m
    }

    /// Loads or generates the dataset and checks it against the model config.
    pub fn dataset(&self) -> Result<Dataset> {
        let ds = match &self.data {
            DataSource::Path(p) => load_dataset(p)?,
            DataSource::Synthetic(s) => generate_synthetic(s)?,
        };
        let m = &self.model;
        if ds.channels() != m.input_channels || ds.num_classes() != m.num_classes {
            return config(format!(
                "dataset has C = {}, K = {} but the model expects C = {}, K = {}",
                ds.channels(),
                ds.num_classes(),
                m.input_channels,
                m.num_classes
            ));
        }
        Ok(ds)
    }
}
