#![allow(dead_code)]

use qapm::synthdata::{make_dataset, make_world, Dataset, DatasetSpec, IdentityWorld, WorldConfig};
use qapm::UnitEmbedding;
use rand::Rng;
use rand_distr::StandardNormal;

pub fn gaussian_vec<R: Rng>(rng: &mut R, d: usize) -> Vec<f64> {
    (0..d).map(|_| rng.sample(StandardNormal)).collect()
}

pub fn unit<R: Rng>(rng: &mut R, d: usize) -> UnitEmbedding {
    UnitEmbedding::normalized(&gaussian_vec(rng, d)).unwrap()
}

/// `||a - b|| / max(||a||, ||b||, floor)`.
pub fn rel_err(a: &[f64], b: &[f64], floor: f64) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    diff / na.max(nb).max(floor)
}

/// Normwise relative error, or zero when the absolute difference is below
/// `abs_floor`.
pub fn grad_err(analytic: &[f64], numeric: &[f64], abs_floor: f64) -> f64 {
    let diff: f64 = analytic.iter().zip(numeric).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    if diff <= abs_floor {
        0.0
    } else {
        rel_err(analytic, numeric, 0.0)
    }
}

/// Central differences of `f` at `x`.
pub fn numeric_grad(x: &[f64], h: f64, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut p = x.to_vec();
    (0..x.len())
        .map(|i| {
            p[i] = x[i] + h;
            let up = f(&p);
            p[i] = x[i] - h;
            let down = f(&p);
            p[i] = x[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

pub fn small_world(seed: u64) -> WorldConfig {
    WorldConfig { num_identities: 24, dim: 8, obs_dim: 16, seed, ..WorldConfig::default() }
}

pub fn small_dataset(seed: u64) -> (IdentityWorld, Dataset) {
    let world = make_world(&small_world(seed)).unwrap();
    let spec = DatasetSpec {
        images_per_identity: 6,
        policy: world.config().corruption_policy(),
        unrecognizable_pool: 40,
        seed,
    };
    let (ds, _) = make_dataset(&world, &spec).unwrap();
    (world, ds)
}

pub mod fifo {
    use qapm::ClassId;

    /// Plain list kept in stamp order; front is oldest.
    pub struct ListFifo {
        pub capacity: usize,
        pub r: f64,
        pub next_stamp: u64,
        pub items: Vec<(ClassId, Vec<f64>, u64)>,
    }

    fn normalize(v: &[f64]) -> Vec<f64> {
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.iter().map(|x| x / n).collect()
    }

    impl ListFifo {
        pub fn new(capacity: usize, r: f64) -> Self {
            Self { capacity, r, next_stamp: 0, items: Vec::new() }
        }

        fn stamp(&mut self) -> u64 {
            self.next_stamp += 1;
            self.next_stamp - 1
        }

        pub fn refresh(&mut self, id: ClassId, fresh: &[f64]) -> bool {
            let Some(pos) = self.items.iter().position(|(c, _, _)| *c == id) else {
                return false;
            };
            let (_, old, _) = self.items.remove(pos);
            let blended: Vec<f64> = old.iter().zip(fresh).map(|(o, f)| (1.0 - self.r) * o + self.r * f).collect();
            let s = self.stamp();
            self.items.push((id, normalize(&blended), s));
            true
        }

        /// `None` when the class was refreshed, else the evicted classes.
        pub fn enqueue(&mut self, id: ClassId, e: &[f64]) -> Option<Vec<ClassId>> {
            if self.refresh(id, e) {
                return None;
            }
            let mut evicted = Vec::new();
            while self.items.len() >= self.capacity {
                evicted.push(self.items.remove(0).0);
            }
            let s = self.stamp();
            self.items.push((id, e.to_vec(), s));
            Some(evicted)
        }

        pub fn dequeue(&mut self, count: usize) -> Option<Vec<ClassId>> {
            if count > self.items.len() {
                return None;
            }
            Some(self.items.drain(..count).map(|(c, _, _)| c).collect())
        }
    }
}

pub mod gradcheck {
    use super::{grad_err, numeric_grad, unit};
    use qapm::losses::{draw_margins, loss_and_grad_with_margins, LossSpec};
    use qapm::trainer::{encoder_loss_and_grad, Encoder};
    use qapm::vecmath::dot;
    use qapm::{ClassId, UnitEmbedding};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    pub const H: f64 = 1e-5;
    pub const TOL: f64 = 1e-5;
    pub const FLOOR: f64 = 1e-8;

    pub struct LossInstance {
        pub embeddings: Vec<UnitEmbedding>,
        pub labels: Vec<ClassId>,
        pub protos: Vec<(ClassId, UnitEmbedding)>,
        pub margins: Vec<f64>,
    }

    fn clear_of_kinks(cos_and_margin: impl Iterator<Item = (f64, f64)>) -> bool {
        cos_and_margin.into_iter().all(|(c, m)| {
            let theta = c.clamp(-1.0, 1.0).acos();
            (theta + m - std::f64::consts::PI).abs() > 1e-3 && theta.sin() > 1e-2
        })
    }

    /// Random instance kept away from the arc-margin switch and the clamped
    /// slope, where the loss is not differentiable.
    pub fn loss_instance(spec: &LossSpec, seed: u64) -> LossInstance {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = rng.random_range(4..=16);
        let c = rng.random_range(2..=6);
        let n = rng.random_range(1..=6);
        loop {
            let protos: Vec<(ClassId, UnitEmbedding)> = (0..c).map(|i| (ClassId(i as u64), unit(&mut rng, d))).collect();
            let embeddings: Vec<UnitEmbedding> = (0..n).map(|_| unit(&mut rng, d)).collect();
            let labels: Vec<ClassId> = (0..n).map(|_| ClassId(rng.random_range(0..c) as u64)).collect();
            let margins = draw_margins(spec, n, &mut rng);
            let pairs = embeddings
                .iter()
                .zip(&labels)
                .zip(&margins)
                .map(|((e, l), m)| (dot(e.as_slice(), protos[l.0 as usize].1.as_slice()), *m));
            if clear_of_kinks(pairs) {
                return LossInstance { embeddings, labels, protos, margins };
            }
        }
    }

    /// Worst gradient error over every embedding and prototype.
    pub fn loss_grad_error(spec: &LossSpec, inst: &LossInstance) -> f64 {
        let out = loss_and_grad_with_margins(spec, &inst.embeddings, &inst.labels, &inst.protos, &inst.margins).unwrap();
        let embs: Vec<Vec<f64>> = inst.embeddings.iter().map(|e| e.as_slice().to_vec()).collect();
        let protos: Vec<(ClassId, Vec<f64>)> = inst.protos.iter().map(|(c, p)| (*c, p.as_slice().to_vec())).collect();
        let loss = |e: &[Vec<f64>], p: &[(ClassId, Vec<f64>)]| {
            loss_and_grad_with_margins(spec, e, &inst.labels, p, &inst.margins).unwrap().loss
        };
        let mut worst: f64 = 0.0;
        for i in 0..embs.len() {
            let num = numeric_grad(&embs[i], H, |x| {
                let mut e = embs.clone();
                e[i] = x.to_vec();
                loss(&e, &protos)
            });
            worst = worst.max(grad_err(&out.grad_embeddings[i], &num, FLOOR));
        }
        for j in 0..protos.len() {
            let num = numeric_grad(&protos[j].1, H, |x| {
                let mut p = protos.clone();
                p[j].1 = x.to_vec();
                loss(&embs, &p)
            });
            worst = worst.max(grad_err(&out.grad_prototypes[j], &num, FLOOR));
        }
        worst
    }

    /// Worst error of the encoder gradient on a tiny random problem, or
    /// `None` when the instance sits near a non-differentiable point.
    pub fn encoder_grad_error(spec: &LossSpec, seed: u64) -> Option<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (d, big_d) = (4, 6);
        let encoder = Encoder::random(d, big_d, &mut rng);
        let obs: Vec<Vec<f64>> = (0..6).map(|_| super::gaussian_vec(&mut rng, big_d)).collect();
        let labels: Vec<ClassId> = (0..6).map(|i| ClassId(i % 3)).collect();
        let weights: Vec<(ClassId, UnitEmbedding)> = (0..5).map(|c| (ClassId(c), unit(&mut rng, d))).collect();
        let margins = draw_margins(spec, 6, &mut rng);
        let (out, grad) = encoder_loss_and_grad(&encoder, &obs, &labels, &weights, &margins, spec).unwrap();
        if spec.variant.is_angular() && !clear_of_kinks(out.target_cos.iter().copied().zip(margins.iter().copied())) {
            return None;
        }
        let loss = |w: &[f64], b: &[f64]| {
            let enc = Encoder::from_parts(d, big_d, w.to_vec(), b.to_vec()).unwrap();
            encoder_loss_and_grad(&enc, &obs, &labels, &weights, &margins, spec).unwrap().0.loss
        };
        let w = encoder.weights().to_vec();
        let b = encoder.bias().to_vec();
        let num_w = numeric_grad(&w, H, |x| loss(x, &b));
        let num_b = numeric_grad(&b, H, |x| loss(&w, x));
        Some(grad_err(&grad.weights, &num_w, FLOOR).max(grad_err(&grad.bias, &num_b, FLOOR)))
    }
}
