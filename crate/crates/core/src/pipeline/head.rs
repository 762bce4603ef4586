use std::sync::Arc;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::TrainConfig;
use crate::rng::keyed_rng;

/// A feature vector stored as consecutive shared segments, so a sentence
/// embedding can sit behind an ICO embedding without copying either.
#[derive(Debug, Clone, PartialEq)]
pub struct Features(pub Vec<Arc<[f64]>>);

impl Features {
    pub fn len(&self) -> usize {
        self.0.iter().map(|s| s.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn iter(&self) -> impl Iterator<Item = f64> + '_ {
        self.0.iter().flat_map(|s| s.iter().copied())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub features: Features,
    pub target: usize,
}

/// Dense layer followed by a softmax, trained with cross-entropy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearHead {
    pub n_in: usize,
    pub n_out: usize,
    /// Row-major `n_out × n_in`.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl LinearHead {
    pub fn zeros(n_in: usize, n_out: usize) -> Self {
        Self { n_in, n_out, weights: vec![0.0; n_in * n_out], bias: vec![0.0; n_out] }
    }

    pub fn logits(&self, x: &Features) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.n_in);
        (0..self.n_out)
            .map(|k| {
                let row = &self.weights[k * self.n_in..(k + 1) * self.n_in];
                self.bias[k] + row.iter().zip(x.iter()).map(|(w, v)| w * v).sum::<f64>()
            })
            .collect()
    }

    pub fn probabilities(&self, x: &Features) -> Vec<f64> {
        softmax(&self.logits(x))
    }

    /// Most probable class; ties go to the lowest index.
    pub fn predict(&self, x: &Features) -> usize {
        argmax(&self.logits(x))
    }

    /// Cross-entropy summed over `batch`.
    pub fn loss(&self, batch: &[&Example]) -> f64 {
        batch
            .iter()
            .map(|e| {
                let z = self.logits(&e.features);
                log_sum_exp(&z) - z[e.target]
            })
            .sum()
    }

    /// Gradient of [`LinearHead::loss`] with respect to weights and bias.
    pub fn gradient(&self, batch: &[&Example]) -> Gradient {
        let mut g = Gradient { weights: vec![0.0; self.weights.len()], bias: vec![0.0; self.n_out] };
        for e in batch {
            let p = self.probabilities(&e.features);
            for (k, pk) in p.iter().enumerate() {
                let delta = pk - f64::from(u8::from(k == e.target));
                g.bias[k] += delta;
                let row = &mut g.weights[k * self.n_in..(k + 1) * self.n_in];
                for (w, v) in row.iter_mut().zip(e.features.iter()) {
                    *w += delta * v;
                }
            }
        }
        g
    }

    pub fn step(&mut self, g: &Gradient, learning_rate: f64) {
        for (w, d) in self.weights.iter_mut().zip(&g.weights) {
            *w -= learning_rate * d;
        }
        for (b, d) in self.bias.iter_mut().zip(&g.bias) {
            *b -= learning_rate * d;
        }
    }
}

fn log_sum_exp(z: &[f64]) -> f64 {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

pub fn softmax(z: &[f64]) -> Vec<f64> {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

/// Index of the largest value; the first one wins ties.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate().skip(1) {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

/// Unweighted mean of per-class F1, undefined precision or recall counting 0.
pub fn macro_f1(n_classes: usize, gold: &[usize], pred: &[usize]) -> f64 {
    let mut tp = vec![0usize; n_classes];
    let mut predicted = vec![0usize; n_classes];
    let mut actual = vec![0usize; n_classes];
    for (&g, &p) in gold.iter().zip(pred) {
        actual[g] += 1;
        predicted[p] += 1;
        if g == p {
            tp[g] += 1;
        }
    }
    let f: f64 = (0..n_classes)
        .map(|c| {
            let p = if predicted[c] == 0 { 0.0 } else { tp[c] as f64 / predicted[c] as f64 };
            let r = if actual[c] == 0 { 0.0 } else { tp[c] as f64 / actual[c] as f64 };
            if p + r == 0.0 {
                0.0
            } else {
                2.0 * p * r / (p + r)
            }
        })
        .sum();
    f / n_classes as f64
}

/// Outcome of [`fit`]: the selected head plus the held-out score of every epoch.
#[derive(Debug, Clone)]
pub struct Fitted {
    pub head: LinearHead,
    pub best_epoch: usize,
    pub heldout_macro_f: Vec<f64>,
}

/// Mini-batch gradient descent from a zero initialization, stepping along
/// the gradient of each batch's summed loss.
///
/// After every epoch the head is scored by macro-F on `heldout`; the best
/// epoch is kept, later epochs winning ties. Example order is reshuffled each
/// epoch from a stream keyed by the configured seed.
pub fn fit(n_in: usize, n_out: usize, train: &[Example], heldout: &[Example], config: &TrainConfig) -> Fitted {
    let mut head = LinearHead::zeros(n_in, n_out);
    let mut best = head.clone();
    let mut best_epoch = 0;
    let mut best_score = f64::NEG_INFINITY;
    let mut scores = Vec::with_capacity(config.epochs);
    let gold: Vec<usize> = heldout.iter().map(|e| e.target).collect();
    let mut order: Vec<usize> = (0..train.len()).collect();
    for epoch in 1..=config.epochs {
        let mut rng = keyed_rng(config.seed, &format!("epoch-{epoch}"));
        order.sort_unstable();
        order.shuffle(&mut rng);
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<&Example> = chunk.iter().map(|&i| &train[i]).collect();
            let g = head.gradient(&batch);
            head.step(&g, config.learning_rate);
        }
        let pred: Vec<usize> = heldout.iter().map(|e| head.predict(&e.features)).collect();
        let score = macro_f1(n_out, &gold, &pred);
        scores.push(score);
        if score >= best_score {
            best_score = score;
            best = head.clone();
            best_epoch = epoch;
        }
    }
    Fitted { head: best, best_epoch, heldout_macro_f: scores }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn features(v: Vec<f64>) -> Features {
        Features(vec![v.into()])
    }

    fn random_instance(seed: u64) -> (LinearHead, Vec<Example>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n_in = rng.random_range(1..6);
        let n_out = rng.random_range(2..5);
        let mut head = LinearHead::zeros(n_in, n_out);
        head.weights.iter_mut().for_each(|w| *w = rng.random_range(-1.0..1.0));
        head.bias.iter_mut().for_each(|b| *b = rng.random_range(-1.0..1.0));
        let examples = (0..rng.random_range(1..6))
            .map(|_| Example {
                features: features((0..n_in).map(|_| rng.random_range(-2.0..2.0)).collect()),
                target: rng.random_range(0..n_out),
            })
            .collect();
        (head, examples)
    }

    #[test]
    fn gradients_match_central_differences() {
        let h = 1e-6;
        for seed in 0..50 {
            let (head, examples) = random_instance(seed);
            let batch: Vec<&Example> = examples.iter().collect();
            let g = head.gradient(&batch);
            let n_w = head.weights.len();
            for i in 0..n_w + head.n_out {
                let mut plus = head.clone();
                let mut minus = head.clone();
                let analytic = if i < n_w {
                    plus.weights[i] += h;
                    minus.weights[i] -= h;
                    g.weights[i]
                } else {
                    plus.bias[i - n_w] += h;
                    minus.bias[i - n_w] -= h;
                    g.bias[i - n_w]
                };
                let numeric = (plus.loss(&batch) - minus.loss(&batch)) / (2.0 * h);
                let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6);
                assert!(rel <= 1e-4, "seed {seed} param {i}: {analytic} vs {numeric}");
            }
        }
    }

    #[test]
    fn argmax_prefers_lowest_index() {
        assert_eq!(argmax(&[0.5, 0.5, 0.1]), 0);
        assert_eq!(argmax(&[0.1, 0.7, 0.7]), 1);
    }

    #[test]
    fn macro_f1_zero_convention() {
        assert!((macro_f1(3, &[1, 1, 1], &[1, 1, 1]) - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(macro_f1(2, &[0, 1], &[0, 1]), 1.0);
    }

    #[test]
    fn segmented_features_behave_like_concatenation() {
        let (head, _) = random_instance(3);
        let x: Vec<f64> = (0..head.n_in).map(|i| i as f64 * 0.3 - 0.5).collect();
        let split = head.n_in / 2;
        let joined = features(x.clone());
        let parts = Features(vec![x[..split].to_vec().into(), x[split..].to_vec().into()]);
        assert_eq!(head.logits(&joined), head.logits(&parts));
    }

    #[test]
    fn fit_separates_a_planted_problem() {
        let train: Vec<Example> = (0..40)
            .map(|i| {
                let t = i % 2;
                Example { features: features(vec![if t == 1 { 1.0 } else { -1.0 }, 0.3]), target: t }
            })
            .collect();
        let cfg = TrainConfig { epochs: 5, learning_rate: 0.05, batch_size: 8, seed: 1 };
        let fitted = fit(2, 2, &train, &train, &cfg);
        assert_eq!(fitted.heldout_macro_f.len(), 5);
        assert_eq!(fitted.heldout_macro_f[fitted.best_epoch - 1], 1.0);
        let again = fit(2, 2, &train, &train, &cfg);
        assert_eq!(fitted.head, again.head);
    }

    proptest! {
        #[test]
        fn probabilities_on_simplex(seed in any::<u64>(), scale in 0.0f64..500.0) {
            let (mut head, examples) = random_instance(seed);
            head.weights.iter_mut().for_each(|w| *w *= scale);
            for e in &examples {
                let p = head.probabilities(&e.features);
                prop_assert!(p.iter().all(|&x| x >= 0.0));
                prop_assert!((p.iter().sum::<f64>() - 1.0).abs() <= 1e-6);
            }
        }
    }
}
