#![allow(dead_code)]

use num_rational::BigRational;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use pss_core::neural::{Layer, Mode, Tensor};

pub const FD_EPS: f64 = 1e-5;
pub const FD_TOL: f64 = 1e-4;

/// Exhaustive OTSU: maximizes ω0·ω1·(μ0 − μ1)² with class 0 = pixels ≤ t
/// over every t with a nonempty class 0, smallest t on ties. Evaluated in
/// exact rationals.
pub fn otsu_brute_force(pixels: &[u8]) -> u8 {
    let n = pixels.len() as i64;
    let big = |v: i64| BigRational::from_integer(v.into());
    let mut best: Option<(BigRational, u8)> = None;
    let min = *pixels.iter().min().unwrap();
    for t in min..=255u8 {
        let (lo, hi): (Vec<i64>, Vec<i64>) = pixels
            .iter()
            .map(|&p| p as i64)
            .partition(|&p| p <= t as i64);
        let score = if lo.is_empty() || hi.is_empty() {
            big(0)
        } else {
            let w0 = big(lo.len() as i64) / big(n);
            let w1 = big(hi.len() as i64) / big(n);
            let mu0 = big(lo.iter().sum()) / big(lo.len() as i64);
            let mu1 = big(hi.iter().sum()) / big(hi.len() as i64);
            let d = mu0 - mu1;
            w0 * w1 * d.clone() * d
        };
        if best.as_ref().is_none_or(|(b, _)| score > *b) {
            best = Some((score, t));
        }
    }
    best.unwrap().1
}

/// Cohen's κ straight from (p_o − p_e)/(1 − p_e) in exact rationals;
/// `None` when n = 0 or p_e = 1.
pub fn kappa_rational(tp: u64, fp: u64, fn_: u64, tn: u64) -> Option<BigRational> {
    let n = tp + fp + fn_ + tn;
    if n == 0 {
        return None;
    }
    let r = |a: u64, b: u64| BigRational::new((a as i64).into(), (b as i64).into());
    let po = r(tp + tn, n);
    let pe = r(tp + fp, n) * r(tp + fn_, n) + r(fn_ + tn, n) * r(fp + tn, n);
    let one = r(1, 1);
    if pe == one {
        return None;
    }
    Some((po - pe.clone()) / (one - pe))
}

/// Reference for the bias-regularized L1-loss linear SVM on dense points:
/// the box-constrained dual max Σα − ½αᵀQα, Q_ij = y_i y_j (x_i·x_j + B²),
/// solved by accelerated projected gradient. Returns (w, w_bias) in the
/// augmented space together with the final duality gap.
pub struct QpReference {
    pub w: Vec<f64>,
    pub w_bias: f64,
    pub gap: f64,
}

pub fn svm_qp_reference(xs: &[Vec<f64>], ys: &[f64], c: f64, bias: f64) -> QpReference {
    let n = xs.len();
    let aug: Vec<Vec<f64>> = xs
        .iter()
        .map(|x| x.iter().copied().chain([bias]).collect())
        .collect();
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let q: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| ys[i] * ys[j] * dot(&aug[i], &aug[j])).collect())
        .collect();
    let lipschitz: f64 = (0..n).map(|i| q[i][i]).sum::<f64>().max(1e-12);
    let step = 1.0 / lipschitz;
    let project = |v: f64| v.clamp(0.0, c);
    let mut alpha = vec![0.0; n];
    let mut momentum = alpha.clone();
    let mut t = 1.0f64;
    for _ in 0..200_000 {
        let grad: Vec<f64> = (0..n).map(|i| 1.0 - dot(&q[i], &momentum)).collect();
        let next: Vec<f64> = (0..n).map(|i| project(momentum[i] + step * grad[i])).collect();
        let t_next = (1.0 + (1.0 + 4.0 * t * t).sqrt()) / 2.0;
        momentum = (0..n)
            .map(|i| next[i] + (t - 1.0) / t_next * (next[i] - alpha[i]))
            .collect();
        alpha = next;
        t = t_next;
    }
    let dim = aug[0].len();
    let mut w = vec![0.0; dim];
    for i in 0..n {
        for d in 0..dim {
            w[d] += alpha[i] * ys[i] * aug[i][d];
        }
    }
    let norm2 = dot(&w, &w);
    let dual = alpha.iter().sum::<f64>() - 0.5 * norm2;
    let primal = 0.5 * norm2
        + c * (0..n)
            .map(|i| (1.0 - ys[i] * dot(&w, &aug[i])).max(0.0))
            .sum::<f64>();
    let w_bias = w.pop().unwrap();
    QpReference {
        w,
        w_bias,
        gap: primal - dual,
    }
}

/// ‖a − b‖ / max(‖a‖, ‖b‖), zero when both vanish.
pub fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = analytic.iter().zip(numeric).map(|(a, b)| a - b).collect();
    let scale = norm(analytic).max(norm(numeric));
    if scale == 0.0 {
        0.0
    } else {
        norm(&diff) / scale
    }
}

/// Central difference of `f` along every coordinate of `x`.
pub fn numeric_gradient(x: &mut [f64], mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    (0..x.len())
        .map(|i| {
            let orig = x[i];
            x[i] = orig + FD_EPS;
            let up = f(x);
            x[i] = orig - FD_EPS;
            let down = f(x);
            x[i] = orig;
            (up - down) / (2.0 * FD_EPS)
        })
        .collect()
}

/// Worst relative error of one layer's parameter and input gradients
/// under the probe loss Σ r·output + penalty. Training-mode passes reuse a
/// fixed RNG seed so dropout masks stay constant across perturbations.
pub struct LayerCheck {
    pub param_errors: Vec<f64>,
    pub input_error: Option<f64>,
}

impl LayerCheck {
    pub fn worst(&self) -> f64 {
        self.param_errors
            .iter()
            .chain(self.input_error.iter())
            .fold(0.0, |a: f64, &b| a.max(b))
    }
}

fn probe_loss(layer: &Layer<f64>, xs: &[Tensor<f64>], probe: &[Vec<f64>], seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (out, _) = layer.forward(xs, &mut Mode::Train(&mut rng)).unwrap();
    let linear: f64 = out
        .iter()
        .zip(probe)
        .map(|(o, r)| o.data().iter().zip(r).map(|(a, b)| a * b).sum::<f64>())
        .sum();
    linear + layer.penalty()
}

pub fn check_layer(mut layer: Layer<f64>, xs: Vec<Tensor<f64>>, input_grad: bool) -> LayerCheck {
    const MASK_SEED: u64 = 99;
    let mut rng = ChaCha8Rng::seed_from_u64(MASK_SEED);
    let (out, cache) = layer.forward(&xs, &mut Mode::Train(&mut rng)).unwrap();
    let mut probe_rng = ChaCha8Rng::seed_from_u64(7);
    let probe: Vec<Vec<f64>> = out
        .iter()
        .map(|o| (0..o.len()).map(|_| probe_rng.gen_range(-1.0..1.0)).collect())
        .collect();
    let grads: Vec<Tensor<f64>> = out
        .iter()
        .zip(&probe)
        .map(|(o, r)| Tensor::new(o.shape().to_vec(), r.clone()).unwrap())
        .collect();
    layer.params_mut().into_iter().for_each(|p| p.zero_grad());
    let dx = layer.backward(&cache, &grads, input_grad);

    let mut param_errors = Vec::new();
    for pi in 0..layer.params().len() {
        let analytic = layer.params()[pi].grad.clone();
        let mut values = layer.params()[pi].value.data().to_vec();
        let mut probe_layer = layer.clone();
        let numeric = numeric_gradient(&mut values, |v| {
            probe_layer.params_mut()[pi]
                .value
                .data_mut()
                .copy_from_slice(v);
            probe_loss(&probe_layer, &xs, &probe, MASK_SEED)
        });
        param_errors.push(relative_error(&analytic, &numeric));
    }

    let input_error = dx.map(|dx| {
        let analytic: Vec<f64> = dx.iter().flat_map(|t| t.data().to_vec()).collect();
        let shapes: Vec<Vec<usize>> = xs.iter().map(|t| t.shape().to_vec()).collect();
        let mut flat: Vec<f64> = xs.iter().flat_map(|t| t.data().to_vec()).collect();
        let numeric = numeric_gradient(&mut flat, |v| {
            let mut offset = 0;
            let rebuilt: Vec<Tensor<f64>> = shapes
                .iter()
                .map(|s| {
                    let n: usize = s.iter().product();
                    let t = Tensor::new(s.clone(), v[offset..offset + n].to_vec()).unwrap();
                    offset += n;
                    t
                })
                .collect();
            probe_loss(&layer, &rebuilt, &probe, MASK_SEED)
        });
        relative_error(&analytic, &numeric)
    });
    LayerCheck {
        param_errors,
        input_error,
    }
}

/// Random tensor whose entries are pairwise at least `gap` apart and at
/// least `gap` away from zero, so max and ReLU kinks stay clear of ±ε.
pub fn spread_tensor(shape: &[usize], gap: f64, rng: &mut ChaCha8Rng) -> Tensor<f64> {
    let n: usize = shape.iter().product();
    let mut slots: Vec<f64> = (0..n).map(|i| (i as f64 + 1.0) * gap).collect();
    for i in (1..n).rev() {
        slots.swap(i, rng.gen_range(0..=i));
    }
    let data = slots
        .into_iter()
        .map(|v| if rng.gen_bool(0.5) { v } else { -v })
        .collect();
    Tensor::new(shape.to_vec(), data).unwrap()
}

pub fn random_tensor(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<f64> {
    let n: usize = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

/// Documents drawn from one of three topics with disjoint vocabularies;
/// returns token ids, the generating topic of each document and the
/// vocabulary size.
pub fn three_topic_corpus(
    docs: usize,
    tokens: usize,
    words_per_topic: usize,
    seed: u64,
) -> (Vec<Vec<u32>>, Vec<usize>, usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut corpus = Vec::with_capacity(docs);
    let mut truth = Vec::with_capacity(docs);
    for _ in 0..docs {
        let topic = rng.gen_range(0..3);
        let base = (topic * words_per_topic) as u32;
        corpus.push(
            (0..tokens)
                .map(|_| base + rng.gen_range(0..words_per_topic as u32))
                .collect(),
        );
        truth.push(topic);
    }
    (corpus, truth, 3 * words_per_topic)
}

/// Best share of documents, over all 3! topic relabelings, whose matched
/// topic carries at least `mass` of θ.
pub fn best_permutation_recovery(thetas: &[Vec<f64>], truth: &[usize], mass: f64) -> f64 {
    const PERMS: [[usize; 3]; 6] = [
        [0, 1, 2],
        [0, 2, 1],
        [1, 0, 2],
        [1, 2, 0],
        [2, 0, 1],
        [2, 1, 0],
    ];
    PERMS
        .iter()
        .map(|perm| {
            let hits = thetas
                .iter()
                .zip(truth)
                .filter(|(th, &t)| th[perm[t]] >= mass)
                .count();
            hits as f64 / truth.len() as f64
        })
        .fold(0.0, f64::max)
}
