//! Synthetic transfer-learning tasks: two Gaussian blobs per domain, a small
//! dense classifier, label-flip poisoning, and fine-tuning from a source model.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::nn::{softmax, Activation, DenseNet, NnError, OptimState, Tensor};
use crate::reputation::Outcome;

#[derive(Debug, thiserror::Error)]
pub enum TaskError {
    #[error("invalid task spec: {0}")]
    Spec(String),
    #[error("dimension mismatch: model expects {expected} features, data has {got}")]
    Dimension { expected: usize, got: usize },
    #[error("cannot evaluate on an empty set")]
    EmptySet,
    #[error(transparent)]
    Nn(#[from] NnError),
}

/// Class `c` of the source domain is centred at `(c - 1/2) * separation * e1`;
/// the target domain moves both centres by `domain_shift` along
/// `(e1 + e2) / sqrt(2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskSpec {
    pub feature_dim: usize,
    pub class_separation: f64,
    pub noise: f64,
    pub domain_shift: f64,
    pub source_samples: usize,
    pub target_train_samples: usize,
    pub target_test_samples: usize,
}

impl Default for TaskSpec {
    fn default() -> Self {
        Self {
            feature_dim: 4,
            class_separation: 3.0,
            noise: 1.0,
            domain_shift: 1.0,
            source_samples: 400,
            target_train_samples: 20,
            target_test_samples: 400,
        }
    }
}

impl TaskSpec {
    pub fn validate(&self) -> Result<(), TaskError> {
        let fail = |m: &str| Err(TaskError::Spec(m.to_string()));
        if self.feature_dim < 2 {
            return fail("feature_dim must be at least 2");
        }
        if self.source_samples == 0 || self.target_train_samples == 0 || self.target_test_samples == 0 {
            return fail("sample counts must be positive");
        }
        if !(self.noise > 0.0 && self.noise.is_finite()) {
            return fail("noise must be positive");
        }
        if !self.class_separation.is_finite() || !self.domain_shift.is_finite() {
            return fail("separation and shift must be finite");
        }
        Ok(())
    }

    fn class_mean(&self, class: usize, target: bool) -> Vec<f64> {
        let mut mean = vec![0.0; self.feature_dim];
        mean[0] = (class as f64 - 0.5) * self.class_separation;
        if target {
            let s = self.domain_shift / std::f64::consts::SQRT_2;
            mean[0] += s;
            mean[1] += s;
        }
        mean
    }

    fn draw<R: Rng>(&self, rng: &mut R, n: usize, target: bool) -> Dataset {
        let d = self.feature_dim;
        let mut features = Vec::with_capacity(n * d);
        let mut labels = Vec::with_capacity(n);
        for _ in 0..n {
            let class = rng.gen_range(0..2);
            let mean = self.class_mean(class, target);
            for m in mean {
                let z: f64 = rng.sample(StandardNormal);
                features.push(m + self.noise * z);
            }
            labels.push(class);
        }
        Dataset { dim: d, features, labels }
    }

    /// A held-out clean sample from the source domain.
    pub fn source_holdout(&self, n: usize, seed: u64) -> Dataset {
        self.draw(&mut ChaCha8Rng::seed_from_u64(seed), n, false)
    }
}

/// Row-major features with binary labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub dim: usize,
    pub features: Vec<f64>,
    pub labels: Vec<usize>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    fn gather(&self, idx: &[usize]) -> (Tensor, Vec<usize>) {
        let mut x = Vec::with_capacity(idx.len() * self.dim);
        for &i in idx {
            x.extend_from_slice(self.row(i));
        }
        let t = Tensor::matrix(idx.len(), self.dim, x).expect("rows have dataset width");
        (t, idx.iter().map(|&i| self.labels[i]).collect())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskData {
    pub source: Dataset,
    pub target_train: Dataset,
    pub target_test: Dataset,
}

pub fn gen_task(spec: &TaskSpec, seed: u64) -> Result<TaskData, TaskError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(TaskData {
        source: spec.draw(&mut rng, spec.source_samples, false),
        target_train: spec.draw(&mut rng, spec.target_train_samples, true),
        target_test: spec.draw(&mut rng, spec.target_test_samples, true),
    })
}

/// Fresh target train and test sets for one trade, without redrawing the
/// source set.
pub fn gen_target(spec: &TaskSpec, seed: u64) -> Result<(Dataset, Dataset), TaskError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let train = spec.draw(&mut rng, spec.target_train_samples, true);
    let test = spec.draw(&mut rng, spec.target_test_samples, true);
    Ok((train, test))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierConfig {
    pub hidden: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub pretrain_epochs: usize,
    pub fine_tune_epochs: usize,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self {
            hidden: 8,
            learning_rate: 0.02,
            batch_size: 32,
            pretrain_epochs: 30,
            fine_tune_epochs: 2,
        }
    }
}

/// `dim -> hidden (tanh) -> 2` logits.
#[derive(Debug, Clone, PartialEq)]
pub struct Classifier {
    pub net: DenseNet,
}

impl Classifier {
    pub fn new<R: Rng + ?Sized>(dim: usize, hidden: usize, rng: &mut R) -> Result<Self, TaskError> {
        let net = DenseNet::glorot(dim, &[(hidden, Activation::Tanh), (2, Activation::Identity)], rng)?;
        Ok(Self { net })
    }

    pub fn predict(&self, x: &[f64]) -> Result<usize, TaskError> {
        let out = self.net.forward(&Tensor::row(x.to_vec()))?;
        let v = out.values();
        Ok(usize::from(v[1] > v[0]))
    }

    fn check_dim(&self, data: &Dataset) -> Result<(), TaskError> {
        if data.dim != self.net.input_dim() {
            return Err(TaskError::Dimension {
                expected: self.net.input_dim(),
                got: data.dim,
            });
        }
        Ok(())
    }

    /// Minibatch Adam on softmax cross-entropy, reshuffling every epoch.
    fn train<R: Rng>(&mut self, data: &Dataset, epochs: usize, cfg: &ClassifierConfig, rng: &mut R) -> Result<(), TaskError> {
        self.check_dim(data)?;
        if epochs == 0 || data.is_empty() {
            return Ok(());
        }
        let mut opt = OptimState::adam(cfg.learning_rate, self.net.param_count())?;
        let mut order: Vec<usize> = (0..data.len()).collect();
        for _ in 0..epochs {
            order.shuffle(rng);
            for chunk in order.chunks(cfg.batch_size.max(1)) {
                let (x, y) = data.gather(chunk);
                let trace = self.net.forward_trace(&x)?;
                let logits = trace.output();
                let scale = 1.0 / chunk.len() as f64;
                let mut upstream = Vec::with_capacity(logits.len());
                for (row, &label) in logits.chunks(2).zip(&y) {
                    let p = softmax(row)?;
                    for (c, pc) in p.iter().enumerate() {
                        upstream.push(scale * (pc - f64::from(u8::from(c == label))));
                    }
                }
                let grads = self.net.backward(&trace, &Tensor::matrix(chunk.len(), 2, upstream)?)?;
                opt.step(self.net.params_mut(), &grads.params)?;
            }
        }
        Ok(())
    }
}

/// Number of labels the attacker flips out of `n`.
pub fn flip_count(attack_strength: f64, n: usize) -> usize {
    ((attack_strength * n as f64).floor() as usize).min(n)
}

/// Returns a copy of `data` with exactly `flip_count(a, n)` labels inverted,
/// chosen uniformly without replacement.
pub fn poison<R: Rng>(data: &Dataset, attack_strength: f64, rng: &mut R) -> Result<Dataset, TaskError> {
    if !(0.0..=1.0).contains(&attack_strength) {
        return Err(TaskError::Spec(format!("attack strength {attack_strength} outside [0, 1]")));
    }
    let mut out = data.clone();
    let k = flip_count(attack_strength, data.len());
    for i in rand::seq::index::sample(rng, data.len(), k) {
        out.labels[i] = 1 - out.labels[i];
    }
    Ok(out)
}

/// Trains a fresh classifier on the source set after label-flip poisoning.
pub fn pretrain(source: &Dataset, attack_strength: f64, cfg: &ClassifierConfig, seed: u64) -> Result<Classifier, TaskError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let poisoned = poison(source, attack_strength, &mut rng)?;
    let mut model = Classifier::new(source.dim, cfg.hidden, &mut rng)?;
    model.train(&poisoned, cfg.pretrain_epochs, cfg, &mut rng)?;
    Ok(model)
}

/// Continues training a copy of `source` on target data.
pub fn fine_tune(
    source: &Classifier,
    target_train: &Dataset,
    epochs: usize,
    cfg: &ClassifierConfig,
    seed: u64,
) -> Result<Classifier, TaskError> {
    let mut model = source.clone();
    model.train(target_train, epochs, cfg, &mut ChaCha8Rng::seed_from_u64(seed))?;
    Ok(model)
}

/// The same fine-tuning budget from a fresh initialisation.
pub fn train_from_scratch(
    target_train: &Dataset,
    epochs: usize,
    cfg: &ClassifierConfig,
    seed: u64,
) -> Result<Classifier, TaskError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut model = Classifier::new(target_train.dim, cfg.hidden, &mut rng)?;
    model.train(target_train, epochs, cfg, &mut rng)?;
    Ok(model)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalReport {
    pub correct: usize,
    pub sample_count: usize,
    pub accuracy: f64,
}

pub fn evaluate(model: &Classifier, test: &Dataset) -> Result<EvalReport, TaskError> {
    if test.is_empty() {
        return Err(TaskError::EmptySet);
    }
    model.check_dim(test)?;
    let (x, y) = test.gather(&(0..test.len()).collect::<Vec<_>>());
    let out = model.net.forward(&x)?;
    let correct = out
        .values()
        .chunks(2)
        .zip(&y)
        .filter(|(row, &label)| usize::from(row[1] > row[0]) == label)
        .count();
    Ok(EvalReport {
        correct,
        sample_count: test.len(),
        accuracy: correct as f64 / test.len() as f64,
    })
}

/// Positive iff `accuracy >= threshold`.
pub fn rate_outcome(report: &EvalReport, threshold: f64) -> Outcome {
    if report.accuracy >= threshold {
        Outcome::Positive
    } else {
        Outcome::Negative
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flip_count_is_floor() {
        assert_eq!(flip_count(0.0, 400), 0);
        assert_eq!(flip_count(0.25, 10), 2);
        assert_eq!(flip_count(0.999, 10), 9);
        assert_eq!(flip_count(1.0, 7), 7);
    }

    #[test]
    fn poison_flips_exactly() {
        let spec = TaskSpec::default();
        let data = gen_task(&spec, 3).unwrap().source;
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for a in [0.0, 0.1, 0.37, 0.5, 1.0] {
            let p = poison(&data, a, &mut rng).unwrap();
            let flipped = p.labels.iter().zip(&data.labels).filter(|(x, y)| x != y).count();
            assert_eq!(flipped, flip_count(a, data.len()));
            assert_eq!(p.features, data.features);
        }
        assert!(poison(&data, 1.5, &mut rng).is_err());
    }

    #[test]
    fn rating_boundary_is_inclusive() {
        let r = |acc: f64| EvalReport {
            correct: 0,
            sample_count: 1,
            accuracy: acc,
        };
        assert_eq!(rate_outcome(&r(0.91), 0.8), Outcome::Positive);
        assert_eq!(rate_outcome(&r(0.8), 0.8), Outcome::Positive);
        assert_eq!(rate_outcome(&r(0.79), 0.8), Outcome::Negative);
    }

    #[test]
    fn bad_specs_rejected() {
        let ok = TaskSpec::default();
        assert!(TaskSpec { feature_dim: 1, ..ok.clone() }.validate().is_err());
        assert!(TaskSpec { noise: 0.0, ..ok.clone() }.validate().is_err());
        assert!(TaskSpec { target_test_samples: 0, ..ok }.validate().is_err());
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let model = Classifier::new(3, 4, &mut rng).unwrap();
        let data = gen_task(&TaskSpec::default(), 0).unwrap();
        assert!(matches!(
            fine_tune(&model, &data.target_train, 1, &ClassifierConfig::default(), 0),
            Err(TaskError::Dimension { expected: 3, got: 4 })
        ));
        assert!(matches!(evaluate(&model, &data.target_test), Err(TaskError::Dimension { .. })));
    }
}
