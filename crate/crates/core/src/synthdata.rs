//! Synthetic identity world.
//!
//! Every identity owns a center direction on the unit sphere in the latent
//! space `R^d`. A clean image of identity `i` has latent embedding
//! `normalize(c_i + n)` with isotropic Gaussian noise of per-axis std
//! `1 / noise_kappa`. A corrupted image of strength `t` is pulled toward one
//! shared "unrecognizable" direction `u`:
//!
//! ```text
//! latent = normalize((1 - t) * (c_i + n1) + t * (u + n2)),   latent_quality = 1 - t
//! ```
//!
//! The encoder never sees latents. It sees `D`-dimensional observations
//! `Q [latent; nuisance] + eps` where `Q` is a fixed random `D x D`
//! orthogonal matrix, `nuisance` is `D - d` Gaussian coordinates with std
//! `nuisance_scale` that carry no identity information, and `eps` is small
//! observation noise.

use std::fmt::Write as _;
use std::io::{BufRead, Write};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vecmath::{dot, UnitEmbedding};
use crate::ClassId;

pub const DATASET_FORMAT_VERSION: u32 = 1;

/// Identity label carried by samples from the unrecognizable pool.
pub const UNRECOGNIZABLE_ID: ClassId = ClassId(u64::MAX);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldConfig {
    pub num_identities: usize,
    pub dim: usize,
    pub obs_dim: usize,
    pub noise_kappa: f64,
    pub nuisance_scale: f64,
    pub obs_noise: f64,
    pub corruption_rate: f64,
    pub strength_min: f64,
    pub strength_max: f64,
    pub seed: u64,
}

impl Default for WorldConfig {
    fn default() -> Self {
        Self {
            num_identities: 200,
            dim: 32,
            obs_dim: 64,
            noise_kappa: 20.0,
            nuisance_scale: 1.0,
            obs_noise: 0.01,
            corruption_rate: 0.2,
            strength_min: 0.4,
            strength_max: 0.9,
            seed: 0,
        }
    }
}

impl WorldConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_identities < 2 {
            return Err(Error::config("world.identities must be at least 2"));
        }
        if self.dim < 2 {
            return Err(Error::config("world.dim must be at least 2"));
        }
        if self.obs_dim < self.dim {
            return Err(Error::config("world.obs_dim must be at least world.dim"));
        }
        if !(self.noise_kappa > 0.0) {
            return Err(Error::config("world.noise_kappa must be positive"));
        }
        for (key, v) in [
            ("world.nuisance_scale", self.nuisance_scale),
            ("world.obs_noise", self.obs_noise),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::config(format!("{key} must be finite and non-negative")));
            }
        }
        if !(0.0..=1.0).contains(&self.corruption_rate) {
            return Err(Error::config(format!(
                "world.corruption_rate must lie in [0, 1], got {}",
                self.corruption_rate
            )));
        }
        if !(0.0 <= self.strength_min
            && self.strength_min <= self.strength_max
            && self.strength_max <= 1.0)
        {
            return Err(Error::config(
                "world.strength_min / world.strength_max must satisfy 0 <= min <= max <= 1",
            ));
        }
        Ok(())
    }

    pub fn corruption_policy(&self) -> CorruptionPolicy {
        CorruptionPolicy {
            rate: self.corruption_rate,
            strength_min: self.strength_min,
            strength_max: self.strength_max,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorruptionPolicy {
    pub rate: f64,
    pub strength_min: f64,
    pub strength_max: f64,
}

impl CorruptionPolicy {
    pub fn clean() -> Self {
        Self { rate: 0.0, strength_min: 0.0, strength_max: 0.0 }
    }

    /// Corrupted images per identity for `k` images.
    pub fn quota(&self, k: usize) -> usize {
        ((self.rate * k as f64).round() as usize).min(k)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IdentityWorld {
    config: WorldConfig,
    centers: Vec<UnitEmbedding>,
    unrecognizable: UnitEmbedding,
    /// Row-major `D x D` orthogonal matrix.
    basis: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub identity: ClassId,
    pub observation: Vec<f64>,
    pub latent_quality: f64,
    pub is_unrecognizable: bool,
}

impl Sample {
    pub fn is_corrupted(&self) -> bool {
        self.latent_quality < 1.0
    }
}

fn random_unit<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> UnitEmbedding {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        if let Ok(u) = UnitEmbedding::normalized(&v) {
            return u;
        }
    }
}

/// Modified Gram-Schmidt over the rows of a Gaussian matrix.
fn random_orthogonal<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<f64> {
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(n);
    while rows.len() < n {
        let mut v: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        for r in &rows {
            let proj = dot(&v, r);
            for (x, y) in v.iter_mut().zip(r) {
                *x -= proj * y;
            }
        }
        if let Ok(u) = UnitEmbedding::normalized(&v) {
            rows.push(u.into_inner());
        }
    }
    rows.concat()
}

pub fn make_world(config: &WorldConfig) -> Result<IdentityWorld> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let centers: Vec<UnitEmbedding> = (0..config.num_identities)
        .map(|_| random_unit(config.dim, &mut rng))
        .collect();
    let unrecognizable = random_unit(config.dim, &mut rng);
    let basis = random_orthogonal(config.obs_dim, &mut rng);
    Ok(IdentityWorld {
        config: config.clone(),
        centers,
        unrecognizable,
        basis,
    })
}

impl IdentityWorld {
    pub fn config(&self) -> &WorldConfig {
        &self.config
    }

    pub fn num_identities(&self) -> usize {
        self.centers.len()
    }

    pub fn dim(&self) -> usize {
        self.config.dim
    }

    pub fn obs_dim(&self) -> usize {
        self.config.obs_dim
    }

    pub fn center(&self, identity: ClassId) -> Result<&UnitEmbedding> {
        self.centers
            .get(identity.0 as usize)
            .ok_or(Error::UnknownIdentity(identity))
    }

    pub fn centers(&self) -> &[UnitEmbedding] {
        &self.centers
    }

    pub fn unrecognizable_direction(&self) -> &UnitEmbedding {
        &self.unrecognizable
    }

    fn noisy<R: Rng + ?Sized>(&self, base: &UnitEmbedding, rng: &mut R) -> Vec<f64> {
        let std = 1.0 / self.config.noise_kappa;
        base.as_slice()
            .iter()
            .map(|c| {
                let z: f64 = rng.sample(StandardNormal);
                c + std * z
            })
            .collect()
    }

    /// Latent embedding of one image. Consumes the same amount of randomness
    /// for every strength.
    pub fn latent<R: Rng + ?Sized>(
        &self,
        identity: ClassId,
        strength: f64,
        rng: &mut R,
    ) -> Result<UnitEmbedding> {
        let center = self.center(identity)?;
        let a = self.noisy(center, rng);
        let b = self.noisy(&self.unrecognizable, rng);
        let mixed: Vec<f64> = a
            .iter()
            .zip(&b)
            .map(|(x, y)| (1.0 - strength) * x + strength * y)
            .collect();
        match UnitEmbedding::normalized(&mixed) {
            Ok(u) => Ok(u),
            // vanishing mixture: only possible for adversarial noise draws
            Err(_) => Ok(center.clone()),
        }
    }

    /// `Q [latent; nuisance] + eps`.
    pub fn observe<R: Rng + ?Sized>(&self, latent: &UnitEmbedding, rng: &mut R) -> Vec<f64> {
        let d = self.config.dim;
        let big_d = self.config.obs_dim;
        let mut full = Vec::with_capacity(big_d);
        full.extend_from_slice(latent.as_slice());
        for _ in d..big_d {
            let z: f64 = rng.sample(StandardNormal);
            full.push(self.config.nuisance_scale * z);
        }
        let mut obs = self.rotate(&full);
        for o in &mut obs {
            let z: f64 = rng.sample(StandardNormal);
            *o += self.config.obs_noise * z;
        }
        obs
    }

    fn rotate(&self, full: &[f64]) -> Vec<f64> {
        let n = self.config.obs_dim;
        (0..n)
            .map(|r| dot(&self.basis[r * n..(r + 1) * n], full))
            .collect()
    }

    /// Noise-free observation of an identity's center.
    pub fn clean_center_observation(&self, identity: ClassId) -> Result<Vec<f64>> {
        let mut full = self.center(identity)?.as_slice().to_vec();
        full.resize(self.config.obs_dim, 0.0);
        Ok(self.rotate(&full))
    }

    /// Noise-free observation of the unrecognizable direction.
    pub fn clean_unrecognizable_observation(&self) -> Vec<f64> {
        let mut full = self.unrecognizable.as_slice().to_vec();
        full.resize(self.config.obs_dim, 0.0);
        self.rotate(&full)
    }

    pub fn draw_sample<R: Rng + ?Sized>(
        &self,
        identity: ClassId,
        corrupt: bool,
        strength: f64,
        rng: &mut R,
    ) -> Result<Sample> {
        let strength = if corrupt { strength } else { 0.0 };
        if !(0.0..=1.0).contains(&strength) {
            return Err(Error::config(format!("strength must lie in [0, 1], got {strength}")));
        }
        let latent = self.latent(identity, strength, rng)?;
        Ok(Sample {
            identity,
            observation: self.observe(&latent, rng),
            latent_quality: 1.0 - strength,
            is_unrecognizable: false,
        })
    }

    /// Samples of pure unrecognizable faces (strength 1).
    pub fn unrecognizable_pool<R: Rng + ?Sized>(&self, size: usize, rng: &mut R) -> Vec<Sample> {
        (0..size)
            .map(|_| {
                let mut s = self
                    .draw_sample(ClassId(0), true, 1.0, rng)
                    .expect("identity 0 exists");
                s.identity = UNRECOGNIZABLE_ID;
                s.is_unrecognizable = true;
                s
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetHeader {
    pub version: u32,
    pub dim: usize,
    pub obs_dim: usize,
    pub num_identities: usize,
    pub num_samples: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub header: DatasetHeader,
    pub samples: Vec<Sample>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub world: WorldConfig,
    pub images_per_identity: usize,
    pub policy: CorruptionPolicy,
    pub dataset_seed: u64,
    pub num_identities: usize,
    pub num_samples: usize,
    pub num_unrecognizable: usize,
    /// Corrupted identity images; the unrecognizable pool is not counted.
    pub num_corrupted: usize,
    pub latent_quality: Vec<f64>,
}

/// Per-identity RNG stream.
fn identity_rng(seed: u64, identity: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(identity.wrapping_add(1));
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub images_per_identity: usize,
    pub policy: CorruptionPolicy,
    /// Unrecognizable images appended after the identity images.
    pub unrecognizable_pool: usize,
    pub seed: u64,
}

/// Draws `images_per_identity` images of every identity, then the
/// unrecognizable pool. Exactly `round(rate * k)` images per identity are
/// corrupted, at randomly chosen positions, with strength uniform in the
/// policy's range.
pub fn make_dataset(world: &IdentityWorld, spec: &DatasetSpec) -> Result<(Dataset, Manifest)> {
    let DatasetSpec { images_per_identity, ref policy, unrecognizable_pool, seed } = *spec;
    if images_per_identity < 2 {
        return Err(Error::config("dataset.images_per_identity must be at least 2"));
    }
    if !(0.0..=1.0).contains(&policy.rate)
        || !(0.0 <= policy.strength_min
            && policy.strength_min <= policy.strength_max
            && policy.strength_max <= 1.0)
    {
        return Err(Error::config("corruption policy out of range"));
    }
    let k = images_per_identity;
    let quota = policy.quota(k);
    let mut samples = Vec::with_capacity(world.num_identities() * k);
    for id in 0..world.num_identities() as u64 {
        let mut rng = identity_rng(seed, id);
        let mut corrupt = vec![false; k];
        corrupt[..quota].iter_mut().for_each(|c| *c = true);
        corrupt.shuffle(&mut rng);
        for c in corrupt {
            let strength = if c {
                if policy.strength_max > policy.strength_min {
                    rng.random_range(policy.strength_min..=policy.strength_max)
                } else {
                    policy.strength_min
                }
            } else {
                0.0
            };
            samples.push(world.draw_sample(ClassId(id), c, strength, &mut rng)?);
        }
    }
    let num_corrupted = samples.iter().filter(|s| s.is_corrupted()).count();
    let mut pool_rng = identity_rng(seed, u64::MAX - 1);
    samples.extend(world.unrecognizable_pool(unrecognizable_pool, &mut pool_rng));
    let header = DatasetHeader {
        version: DATASET_FORMAT_VERSION,
        dim: world.dim(),
        obs_dim: world.obs_dim(),
        num_identities: world.num_identities(),
        num_samples: samples.len(),
        seed,
    };
    let manifest = Manifest {
        world: world.config().clone(),
        images_per_identity: k,
        policy: *policy,
        dataset_seed: seed,
        num_identities: world.num_identities(),
        num_samples: samples.len(),
        num_unrecognizable: unrecognizable_pool,
        num_corrupted,
        latent_quality: samples.iter().map(|s| s.latent_quality).collect(),
    };
    Ok((Dataset { header, samples }, manifest))
}

fn fmt_f64(out: &mut String, v: f64) {
    write!(out, "{v:.16e}").expect("writing to String");
}

impl Dataset {
    /// Identities present, ascending.
    pub fn identities(&self) -> Vec<ClassId> {
        let mut ids: Vec<ClassId> = self
            .samples
            .iter()
            .filter(|s| !s.is_unrecognizable)
            .map(|s| s.identity)
            .collect();
        ids.sort();
        ids.dedup();
        ids
    }

    pub fn unrecognizable_indices(&self) -> Vec<usize> {
        (0..self.samples.len())
            .filter(|i| self.samples[*i].is_unrecognizable)
            .collect()
    }

    /// Text format: one header line, then one line per sample with identity,
    /// unrecognizable flag, latent quality and the observation, all numbers
    /// with 17 significant digits.
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        let h = &self.header;
        writeln!(
            w,
            "qapm-dataset version={} d={} D={} identities={} samples={} seed={}",
            h.version, h.dim, h.obs_dim, h.num_identities, h.num_samples, h.seed
        )?;
        let mut line = String::new();
        for s in &self.samples {
            line.clear();
            write!(line, "{} {} ", s.identity.0, u8::from(s.is_unrecognizable)).unwrap();
            fmt_f64(&mut line, s.latent_quality);
            for x in &s.observation {
                line.push(' ');
                fmt_f64(&mut line, *x);
            }
            writeln!(w, "{line}")?;
        }
        Ok(())
    }

    pub fn read_from<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines();
        let first = lines
            .next()
            .ok_or_else(|| Error::format("dataset", "empty file"))??;
        let header = parse_header(&first)?;
        if header.version != DATASET_FORMAT_VERSION {
            return Err(Error::format("dataset", format!("unsupported version {}", header.version)));
        }
        let mut samples = Vec::with_capacity(header.num_samples);
        for (i, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let bad = |what: &str| Error::format("dataset", format!("record {}: {what}", i + 1));
            let mut fields = line.split_ascii_whitespace();
            let identity = fields
                .next()
                .and_then(|f| f.parse().ok())
                .map(ClassId)
                .ok_or_else(|| bad("identity"))?;
            let is_unrecognizable = match fields.next() {
                Some("0") => false,
                Some("1") => true,
                _ => return Err(bad("flag")),
            };
            let latent_quality: f64 = fields
                .next()
                .and_then(|f| f.parse().ok())
                .ok_or_else(|| bad("latent quality"))?;
            let observation: Vec<f64> = fields
                .map(|f| f.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| bad("observation"))?;
            if observation.len() != header.obs_dim {
                return Err(bad("observation length"));
            }
            samples.push(Sample { identity, observation, latent_quality, is_unrecognizable });
        }
        if samples.len() != header.num_samples {
            return Err(Error::format(
                "dataset",
                format!("header says {} samples, found {}", header.num_samples, samples.len()),
            ));
        }
        Ok(Self { header, samples })
    }
}

fn parse_header(line: &str) -> Result<DatasetHeader> {
    let mut fields = line.split_ascii_whitespace();
    if fields.next() != Some("qapm-dataset") {
        return Err(Error::format("dataset", "missing qapm-dataset header"));
    }
    let mut get = |key: &str| -> Result<u64> {
        let f = fields
            .next()
            .ok_or_else(|| Error::format("dataset", format!("header missing {key}")))?;
        f.strip_prefix(key)
            .and_then(|v| v.strip_prefix('='))
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| Error::format("dataset", format!("bad header field {f:?}")))
    };
    Ok(DatasetHeader {
        version: get("version")? as u32,
        dim: get("d")? as usize,
        obs_dim: get("D")? as usize,
        num_identities: get("identities")? as usize,
        num_samples: get("samples")? as usize,
        seed: get("seed")?,
    })
}
