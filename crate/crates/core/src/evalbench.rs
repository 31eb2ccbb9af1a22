//! Evaluation: verification ROC, identification, prototype placement error,
//! quality-estimator AUC, and the paired A/B harness.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::memory::PrototypeMemory;
use crate::protogen::{quality_feature_norm, quality_recognizability, QualityScore};
use crate::synthdata::{make_dataset, make_world, DatasetSpec, IdentityWorld, Sample, WorldConfig};
use crate::trainer::{run_training, stream_rng, Encoder, TrainConfig};
use crate::vecmath::{angle_degrees, cosine_similarity, l2_normalize, UnitEmbedding};
use crate::ClassId;

pub const DEFAULT_FAR_LEVELS: [f64; 2] = [1e-2, 1e-3];

const STREAM_TEST_SET: u64 = 11;
const STREAM_PAIRS: u64 = 12;

/// Accuracy of the best single threshold (accept when `score >= t`).
pub fn best_threshold_accuracy(genuine: &[f64], impostor: &[f64]) -> f64 {
    let total = (genuine.len() + impostor.len()) as f64;
    if total == 0.0 {
        return 0.0;
    }
    let mut scored: Vec<(f64, bool)> = genuine
        .iter()
        .map(|s| (*s, true))
        .chain(impostor.iter().map(|s| (*s, false)))
        .collect();
    scored.sort_by(|a, b| b.0.total_cmp(&a.0));
    // t = +inf: everything rejected
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut best = impostor.len();
    let mut i = 0;
    while i < scored.len() {
        let t = scored[i].0;
        while i < scored.len() && scored[i].0 == t {
            if scored[i].1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        best = best.max(tp + impostor.len() - fp);
    }
    best as f64 / total
}

/// ROC points `(far, tar)` from the strictest threshold down, starting at
/// `(0, 0)`.
pub fn roc_points(genuine: &[f64], impostor: &[f64]) -> Vec<(f64, f64)> {
    let mut scored: Vec<(f64, bool)> = genuine
        .iter()
        .map(|s| (*s, true))
        .chain(impostor.iter().map(|s| (*s, false)))
        .collect();
    scored.sort_by(|a, b| b.0.total_cmp(&a.0));
    let (ng, ni) = (genuine.len().max(1) as f64, impostor.len().max(1) as f64);
    let mut points = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < scored.len() {
        let t = scored[i].0;
        while i < scored.len() && scored[i].0 == t {
            if scored[i].1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push((fp as f64 / ni, tp as f64 / ng));
    }
    points
}

/// TAR at a target FAR, interpolating linearly between adjacent ROC points.
pub fn tar_at_far(genuine: &[f64], impostor: &[f64], far: f64) -> f64 {
    let points = roc_points(genuine, impostor);
    let mut below = points[0];
    for &(f, t) in &points[1..] {
        if f <= far {
            below = (f, t);
            continue;
        }
        if below.0 == far {
            return below.1;
        }
        let w = (far - below.0) / (f - below.0);
        return below.1 + w * (t - below.1);
    }
    below.1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationResult {
    pub accuracy: f64,
    pub tar_at_far: BTreeMap<String, f64>,
    pub mean_genuine_cos: f64,
    pub mean_impostor_cos: f64,
}

pub fn far_key(far: f64) -> String {
    format!("{far:e}")
}

/// Builds `num_pairs` genuine and `num_pairs` impostor index pairs.
pub fn make_pairs<R: Rng + ?Sized>(
    samples: &[Sample],
    num_pairs: usize,
    rng: &mut R,
) -> Result<(Vec<(usize, usize)>, Vec<(usize, usize)>)> {
    let mut by_id: BTreeMap<ClassId, Vec<usize>> = BTreeMap::new();
    for (i, s) in samples.iter().enumerate() {
        if !s.is_unrecognizable {
            by_id.entry(s.identity).or_default().push(i);
        }
    }
    let multi: Vec<&Vec<usize>> = by_id.values().filter(|v| v.len() >= 2).collect();
    if by_id.len() < 2 || multi.is_empty() {
        return Err(Error::config(
            "verification needs at least 2 identities and one identity with 2 images",
        ));
    }
    let all: Vec<usize> = by_id.values().flatten().copied().collect();
    let genuine = (0..num_pairs)
        .map(|_| {
            let g = multi[rng.random_range(0..multi.len())];
            let a = rng.random_range(0..g.len());
            let mut b = rng.random_range(0..g.len() - 1);
            if b >= a {
                b += 1;
            }
            (g[a], g[b])
        })
        .collect();
    let impostor = (0..num_pairs)
        .map(|_| loop {
            let a = all[rng.random_range(0..all.len())];
            let b = all[rng.random_range(0..all.len())];
            if samples[a].identity != samples[b].identity {
                break (a, b);
            }
        })
        .collect();
    Ok((genuine, impostor))
}

fn embed_all(encoder: &Encoder, samples: &[Sample]) -> Result<Vec<UnitEmbedding>> {
    samples.iter().map(|s| encoder.embed(&s.observation)).collect()
}

pub fn verification_eval<R: Rng + ?Sized>(
    encoder: &Encoder,
    samples: &[Sample],
    num_pairs: usize,
    rng: &mut R,
) -> Result<VerificationResult> {
    let (gp, ip) = make_pairs(samples, num_pairs, rng)?;
    let emb = embed_all(encoder, samples)?;
    let score = |(a, b): &(usize, usize)| cosine_similarity(&emb[*a], &emb[*b]);
    let genuine: Vec<f64> = gp.iter().map(score).collect();
    let impostor: Vec<f64> = ip.iter().map(score).collect();
    Ok(verification_from_scores(&genuine, &impostor, &DEFAULT_FAR_LEVELS))
}

pub fn verification_from_scores(genuine: &[f64], impostor: &[f64], far_levels: &[f64]) -> VerificationResult {
    let mean = |v: &[f64]| if v.is_empty() { 0.0 } else { v.iter().sum::<f64>() / v.len() as f64 };
    VerificationResult {
        accuracy: best_threshold_accuracy(genuine, impostor),
        tar_at_far: far_levels
            .iter()
            .map(|f| (far_key(*f), tar_at_far(genuine, impostor, *f)))
            .collect(),
        mean_genuine_cos: mean(genuine),
        mean_impostor_cos: mean(impostor),
    }
}

/// Nearest-gallery top-1 rate; ties go to the lowest gallery index.
pub fn identification_from_embeddings(
    gallery: &[(ClassId, UnitEmbedding)],
    probes: &[(ClassId, UnitEmbedding)],
) -> Result<f64> {
    if probes.is_empty() {
        return Err(Error::config("identification needs at least one probe"));
    }
    for (id, _) in probes {
        if !gallery.iter().any(|(g, _)| g == id) {
            return Err(Error::config(format!("probe identity {id} missing from gallery")));
        }
    }
    let mut correct = 0usize;
    for (id, p) in probes {
        let mut best = (f64::NEG_INFINITY, ClassId(u64::MAX));
        for (g_id, g) in gallery {
            let s = cosine_similarity(p, g);
            if s > best.0 {
                best = (s, *g_id);
            }
        }
        correct += usize::from(best.1 == *id);
    }
    Ok(correct as f64 / probes.len() as f64)
}

pub fn identification_eval(encoder: &Encoder, gallery: &[Sample], probes: &[Sample]) -> Result<f64> {
    let embed = |s: &[Sample]| -> Result<Vec<(ClassId, UnitEmbedding)>> {
        s.iter().map(|x| Ok((x.identity, encoder.embed(&x.observation)?))).collect()
    };
    identification_from_embeddings(&embed(gallery)?, &embed(probes)?)
}

/// Mean angle in degrees between each stored prototype and the normalized
/// encoding of its identity's noise-free center observation.
pub fn prototype_placement_error(
    memory: &PrototypeMemory,
    world: &IdentityWorld,
    encoder: &Encoder,
) -> Result<f64> {
    if memory.is_empty() {
        return Err(Error::config("prototype placement needs a non-empty memory"));
    }
    let mut total = 0.0;
    for slot in memory.slots_by_age() {
        let obs = world.clean_center_observation(slot.class_id)?;
        let center = encoder.embed(&obs)?;
        total += angle_degrees(&slot.embedding, &center);
    }
    Ok(total / memory.len() as f64)
}

/// ROC AUC of `qualities` separating clean (`latent == 1`) from corrupted
/// samples, as the Mann-Whitney statistic with ties counted as one half.
pub fn estimator_auc(qualities: &[QualityScore], latent_qualities: &[f64]) -> Result<f64> {
    if qualities.len() != latent_qualities.len() {
        return Err(Error::DimensionMismatch {
            expected: latent_qualities.len(),
            actual: qualities.len(),
        });
    }
    let n_pos = latent_qualities.iter().filter(|q| **q >= 1.0).count();
    let n_neg = latent_qualities.len() - n_pos;
    if n_pos == 0 {
        return Err(Error::DegenerateLabels("no clean samples"));
    }
    if n_neg == 0 {
        return Err(Error::DegenerateLabels("no corrupted samples"));
    }
    let mut order: Vec<usize> = (0..qualities.len()).collect();
    order.sort_by(|a, b| qualities[*a].value().total_cmp(&qualities[*b].value()));
    // average ranks (1-based) over tie groups
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && qualities[order[j + 1]].value() == qualities[order[i]].value() {
            j += 1;
        }
        let avg_rank = (i + j + 2) as f64 / 2.0;
        for &k in &order[i..=j] {
            if latent_qualities[k] >= 1.0 {
                rank_sum_pos += avg_rank;
            }
        }
        i = j + 1;
    }
    let (p, n) = (n_pos as f64, n_neg as f64);
    Ok((rank_sum_pos - p * (p + 1.0) / 2.0) / (p * n))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSettings {
    pub num_pairs: usize,
    pub test_images_per_identity: usize,
    /// Corruption rate of the held-out set; the world's rate when `None`.
    pub test_corruption_rate: Option<f64>,
    pub seed: u64,
}

impl Default for EvalSettings {
    fn default() -> Self {
        Self { num_pairs: 3000, test_images_per_identity: 6, test_corruption_rate: None, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub verification_accuracy: f64,
    pub tar_at_far: BTreeMap<String, f64>,
    pub identification_top1: f64,
    pub mean_prototype_angle_deg: f64,
    /// AUC of the soft recognizability estimator.
    pub estimator_auc: f64,
    pub feature_norm_auc: f64,
    pub mean_genuine_cos: f64,
    pub mean_impostor_cos: f64,
    pub config_fingerprint: String,
    pub seeds: Vec<u64>,
}

impl EvalReport {
    /// Named scalar metrics in a fixed order.
    pub fn metrics(&self) -> Vec<(String, f64)> {
        let mut out = vec![("verification_accuracy".to_string(), self.verification_accuracy)];
        for (k, v) in &self.tar_at_far {
            out.push((format!("tar_at_far_{k}"), *v));
        }
        out.push(("identification_top1".into(), self.identification_top1));
        out.push(("mean_prototype_angle_deg".into(), self.mean_prototype_angle_deg));
        out.push(("estimator_auc".into(), self.estimator_auc));
        out.push(("feature_norm_auc".into(), self.feature_norm_auc));
        out.push(("mean_genuine_cos".into(), self.mean_genuine_cos));
        out
    }
}

/// Whether a larger value of `metric` is better.
pub fn higher_is_better(metric: &str) -> bool {
    metric != "mean_prototype_angle_deg"
}

pub fn fingerprint(text: &str) -> String {
    let digest = Sha256::digest(text.as_bytes());
    digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
}

/// Held-out samples drawn from `world` with a seed stream disjoint from
/// training data.
pub fn test_set(world: &IdentityWorld, settings: &EvalSettings) -> Result<Vec<Sample>> {
    let mut policy = world.config().corruption_policy();
    if let Some(rate) = settings.test_corruption_rate {
        policy.rate = rate;
    }
    let seed = stream_rng(settings.seed, STREAM_TEST_SET).random::<u64>();
    let spec = DatasetSpec {
        images_per_identity: settings.test_images_per_identity,
        policy,
        unrecognizable_pool: 0,
        seed,
    };
    Ok(make_dataset(world, &spec)?.0.samples)
}

/// Soft-recognizability and feature-norm AUCs on `samples`.
pub fn estimator_aucs(
    encoder: &Encoder,
    memory: &PrototypeMemory,
    samples: &[Sample],
) -> Result<(f64, f64)> {
    let raw = samples
        .iter()
        .map(|s| encoder.encode(&s.observation))
        .collect::<Result<Vec<_>>>()?;
    let unit = raw.iter().map(l2_normalize).collect::<Result<Vec<_>>>()?;
    let latent: Vec<f64> = samples.iter().map(|s| s.latent_quality).collect();
    let recog = match memory.ui_prototype() {
        Some(p_ui) => estimator_auc(&quality_recognizability(&unit, p_ui), &latent)?,
        None => f64::NAN,
    };
    let norm = estimator_auc(&quality_feature_norm(&raw)?, &latent)?;
    Ok((recog, norm))
}

/// Full evaluation suite on a held-out set.
pub fn evaluate(
    encoder: &Encoder,
    memory: &PrototypeMemory,
    world: &IdentityWorld,
    settings: &EvalSettings,
    config_text: &str,
) -> Result<EvalReport> {
    let samples = test_set(world, settings)?;
    let mut pair_rng = stream_rng(settings.seed, STREAM_PAIRS);
    let ver = verification_eval(encoder, &samples, settings.num_pairs, &mut pair_rng)?;

    // first image of every identity is the gallery, the rest are probes
    let mut gallery = Vec::new();
    let mut probes = Vec::new();
    for s in &samples {
        if gallery.iter().any(|g: &Sample| g.identity == s.identity) {
            probes.push(s.clone());
        } else {
            gallery.push(s.clone());
        }
    }
    let top1 = identification_eval(encoder, &gallery, &probes)?;
    let angle = prototype_placement_error(memory, world, encoder)?;
    let (recog_auc, norm_auc) = if samples.iter().all(|s| !s.is_corrupted()) {
        (f64::NAN, f64::NAN)
    } else {
        estimator_aucs(encoder, memory, &samples)?
    };
    Ok(EvalReport {
        verification_accuracy: ver.accuracy,
        tar_at_far: ver.tar_at_far,
        identification_top1: top1,
        mean_prototype_angle_deg: angle,
        estimator_auc: recog_auc,
        feature_norm_auc: norm_auc,
        mean_genuine_cos: ver.mean_genuine_cos,
        mean_impostor_cos: ver.mean_impostor_cos,
        config_fingerprint: fingerprint(config_text),
        seeds: vec![settings.seed],
    })
}

/// One experiment: world, training data, training, evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Experiment {
    pub world: WorldConfig,
    pub images_per_identity: usize,
    pub unrecognizable_pool: usize,
    pub train: TrainConfig,
    pub eval: EvalSettings,
}

impl Default for Experiment {
    fn default() -> Self {
        Self {
            world: WorldConfig::default(),
            images_per_identity: 10,
            unrecognizable_pool: 256,
            train: TrainConfig::default(),
            eval: EvalSettings::default(),
        }
    }
}

impl Experiment {
    /// Same experiment with every seed replaced by `seed`.
    pub fn with_seed(&self, seed: u64) -> Self {
        let mut e = self.clone();
        e.world.seed = seed;
        e.train.seed = seed;
        e.eval.seed = seed;
        e
    }

    pub fn dataset_spec(&self) -> DatasetSpec {
        DatasetSpec {
            images_per_identity: self.images_per_identity,
            policy: self.world.corruption_policy(),
            unrecognizable_pool: self.unrecognizable_pool,
            seed: self.world.seed,
        }
    }

    pub fn run(&self) -> Result<EvalReport> {
        let world = make_world(&self.world)?;
        let (dataset, _) = make_dataset(&world, &self.dataset_spec())?;
        let out = run_training(&self.train, &dataset)?;
        let text = serde_json::to_string(self).expect("experiment serializes");
        evaluate(&out.encoder, &out.memory, &world, &self.eval, &text)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedRow {
    pub seed: u64,
    pub metric: String,
    pub base: f64,
    pub variant: f64,
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub mean_base: f64,
    pub mean_variant: f64,
    pub mean_delta: f64,
    /// Seeds where the variant is strictly better.
    pub wins: usize,
    pub ties: usize,
    pub losses: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbReport {
    pub base_estimator: String,
    pub variant_estimator: String,
    pub seeds: Vec<u64>,
    pub rows: Vec<PairedRow>,
    pub summary: BTreeMap<String, MetricSummary>,
}

impl AbReport {
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "seed,metric,base,variant,delta")?;
        for r in &self.rows {
            writeln!(w, "{},{},{:?},{:?},{:?}", r.seed, r.metric, r.base, r.variant, r.delta)?;
        }
        Ok(())
    }
}

fn differs_only_in_estimator(base: &Experiment, variant: &Experiment) -> bool {
    let mut v = variant.clone();
    v.train.estimator = base.train.estimator;
    &v == base
}

/// Runs `base` and `variant` on the same seeds and reports paired deltas
/// (`variant - base`). Seeds run concurrently; results are merged in seed
/// order.
pub fn ab_compare(base: &Experiment, variant: &Experiment, seeds: &[u64]) -> Result<AbReport> {
    if !differs_only_in_estimator(base, variant) {
        return Err(Error::config("compared configs may differ only in train.estimator"));
    }
    let results: Vec<Result<(EvalReport, EvalReport)>> = std::thread::scope(|scope| {
        let handles: Vec<_> = seeds
            .iter()
            .map(|&seed| {
                scope.spawn(move || -> Result<(EvalReport, EvalReport)> {
                    let b = base.with_seed(seed).run()?;
                    let v = if base == variant { b.clone() } else { variant.with_seed(seed).run()? };
                    Ok((b, v))
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("seed worker panicked")).collect()
    });

    let mut rows = Vec::new();
    let mut summary: BTreeMap<String, MetricSummary> = BTreeMap::new();
    for (&seed, res) in seeds.iter().zip(results) {
        let (b, v) = res?;
        for ((name, bv), (_, vv)) in b.metrics().into_iter().zip(v.metrics()) {
            let delta = vv - bv;
            let better = if higher_is_better(&name) { delta > 0.0 } else { delta < 0.0 };
            let entry = summary.entry(name.clone()).or_insert(MetricSummary {
                mean_base: 0.0,
                mean_variant: 0.0,
                mean_delta: 0.0,
                wins: 0,
                ties: 0,
                losses: 0,
            });
            entry.mean_base += bv;
            entry.mean_variant += vv;
            entry.mean_delta += delta;
            if delta == 0.0 {
                entry.ties += 1;
            } else if better {
                entry.wins += 1;
            } else {
                entry.losses += 1;
            }
            rows.push(PairedRow { seed, metric: name, base: bv, variant: vv, delta });
        }
    }
    let n = seeds.len().max(1) as f64;
    for s in summary.values_mut() {
        s.mean_base /= n;
        s.mean_variant /= n;
        s.mean_delta /= n;
    }
    Ok(AbReport {
        base_estimator: base.train.estimator.to_string(),
        variant_estimator: variant.train.estimator.to_string(),
        seeds: seeds.to_vec(),
        rows,
        summary,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn qs(v: &[f64]) -> Vec<QualityScore> {
        v.iter().map(|x| QualityScore::new(*x).unwrap()).collect()
    }

    fn brute_accuracy(genuine: &[f64], impostor: &[f64]) -> f64 {
        let mut candidates: Vec<f64> = genuine.iter().chain(impostor).copied().collect();
        candidates.push(f64::INFINITY);
        let total = (genuine.len() + impostor.len()) as f64;
        candidates
            .iter()
            .map(|t| {
                let tp = genuine.iter().filter(|s| *s >= t).count();
                let tn = impostor.iter().filter(|s| *s < t).count();
                (tp + tn) as f64 / total
            })
            .fold(0.0, f64::max)
    }

    #[test]
    fn best_accuracy_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..50 {
            let n = rng.random_range(1..60);
            // coarse grid so ties occur
            let genuine: Vec<f64> = (0..n).map(|_| (rng.random_range(0..20) as f64) / 10.0 - 0.5).collect();
            let impostor: Vec<f64> = (0..n).map(|_| (rng.random_range(0..20) as f64) / 10.0 - 1.0).collect();
            assert_eq!(best_threshold_accuracy(&genuine, &impostor), brute_accuracy(&genuine, &impostor));
        }
    }

    #[test]
    fn tar_interpolates_and_is_monotone() {
        let genuine = [0.9, 0.8, 0.7, 0.6];
        let impostor = [0.85, 0.5, 0.4, 0.3];
        // ROC: (0,0) (0,.25) (.25,.25) (.25,.5) (.25,.75) (.25,1) ...
        assert_eq!(tar_at_far(&genuine, &impostor, 0.0), 0.25);
        assert_eq!(tar_at_far(&genuine, &impostor, 0.25), 1.0);
        assert_eq!(tar_at_far(&genuine, &impostor, 0.125), 0.25);
        assert!((tar_at_far(&genuine, &impostor, 0.375) - 1.0).abs() < 1e-15);

        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let g: Vec<f64> = (0..300).map(|_| rng.random_range(-0.2..1.0)).collect();
        let i: Vec<f64> = (0..300).map(|_| rng.random_range(-1.0..0.5)).collect();
        let mut last = -1.0;
        for k in 0..=100 {
            let t = tar_at_far(&g, &i, k as f64 / 100.0);
            assert!(t >= last);
            last = t;
        }
    }

    #[test]
    fn auc_examples() {
        let latent = [1.0, 0.4, 1.0, 0.7, 0.2];
        let as_labels: Vec<f64> = latent.iter().map(|q| if *q >= 1.0 { 1.0 } else { 0.0 }).collect();
        assert_eq!(estimator_auc(&qs(&as_labels), &latent).unwrap(), 1.0);
        assert_eq!(estimator_auc(&qs(&[0.3; 5]), &latent).unwrap(), 0.5);
        assert!(matches!(
            estimator_auc(&qs(&[0.1, 0.2]), &[1.0, 1.0]),
            Err(Error::DegenerateLabels(_))
        ));
        assert!(matches!(
            estimator_auc(&qs(&[0.1, 0.2]), &[0.5, 0.5]),
            Err(Error::DegenerateLabels(_))
        ));
    }

    #[test]
    fn auc_matches_pair_count() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..30 {
            let n = rng.random_range(4..80);
            let latent: Vec<f64> = (0..n).map(|i| if i % 3 == 0 { 0.5 } else { 1.0 }).collect();
            let q: Vec<f64> = (0..n).map(|_| rng.random_range(0..10) as f64 / 10.0).collect();
            let mut count = 0.0;
            let mut pairs = 0.0;
            for a in 0..n {
                for b in 0..n {
                    if latent[a] >= 1.0 && latent[b] < 1.0 {
                        pairs += 1.0;
                        if q[a] > q[b] {
                            count += 1.0;
                        } else if q[a] == q[b] {
                            count += 0.5;
                        }
                    }
                }
            }
            let got = estimator_auc(&qs(&q), &latent).unwrap();
            assert!((got - count / pairs).abs() <= 1e-12);
        }
    }

    #[test]
    fn identification_examples() {
        let g: Vec<(ClassId, UnitEmbedding)> =
            (0..4).map(|i| (ClassId(i), UnitEmbedding::axis(4, i as usize))).collect();
        assert_eq!(identification_from_embeddings(&g, &g).unwrap(), 1.0);
        let antipodal: Vec<(ClassId, UnitEmbedding)> = g.iter().map(|(c, e)| (*c, e.neg())).collect();
        assert_eq!(identification_from_embeddings(&g, &antipodal).unwrap(), 0.0);
        let stranger = vec![(ClassId(9), UnitEmbedding::axis(4, 0))];
        assert!(identification_from_embeddings(&g, &stranger).is_err());
    }

    #[test]
    fn identification_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let unit = |rng: &mut ChaCha8Rng| {
            UnitEmbedding::normalized(&(0..8).map(|_| rng.random_range(-1.0..1.0)).collect::<Vec<_>>()).unwrap()
        };
        let gallery: Vec<(ClassId, UnitEmbedding)> = (0..50).map(|i| (ClassId(i), unit(&mut rng))).collect();
        let probes: Vec<(ClassId, UnitEmbedding)> =
            (0..200).map(|_| (ClassId(rng.random_range(0..50)), unit(&mut rng))).collect();
        let mut correct = 0;
        for (id, p) in &probes {
            let mut best = 0;
            for j in 1..gallery.len() {
                if crate::vecmath::dot(p.as_slice(), gallery[j].1.as_slice())
                    > crate::vecmath::dot(p.as_slice(), gallery[best].1.as_slice())
                {
                    best = j;
                }
            }
            correct += usize::from(gallery[best].0 == *id);
        }
        let got = identification_from_embeddings(&gallery, &probes).unwrap();
        assert_eq!(got, correct as f64 / 200.0);
    }
}
