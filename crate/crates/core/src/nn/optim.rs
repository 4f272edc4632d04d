use super::NnError;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OptimKind {
    Sgd,
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

/// Optimizer state for one flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimState {
    kind: OptimKind,
    learning_rate: f64,
    first_moment: Vec<f64>,
    second_moment: Vec<f64>,
    step: u64,
}

impl OptimState {
    pub fn sgd(learning_rate: f64) -> Result<Self, NnError> {
        Self::new(OptimKind::Sgd, learning_rate, 0)
    }

    /// Adam with the usual defaults (0.9, 0.999, 1e-8).
    pub fn adam(learning_rate: f64, param_count: usize) -> Result<Self, NnError> {
        Self::new(
            OptimKind::Adam {
                beta1: 0.9,
                beta2: 0.999,
                eps: 1e-8,
            },
            learning_rate,
            param_count,
        )
    }

    pub fn new(kind: OptimKind, learning_rate: f64, param_count: usize) -> Result<Self, NnError> {
        if !(learning_rate > 0.0 && learning_rate.is_finite()) {
            return Err(NnError::Config(format!(
                "learning rate must be positive, got {learning_rate}"
            )));
        }
        let moments = match kind {
            OptimKind::Sgd => 0,
            OptimKind::Adam { .. } => param_count,
        };
        Ok(Self {
            kind,
            learning_rate,
            first_moment: vec![0.0; moments],
            second_moment: vec![0.0; moments],
            step: 0,
        })
    }

    pub fn kind(&self) -> OptimKind {
        self.kind
    }

    pub fn learning_rate(&self) -> f64 {
        self.learning_rate
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// Applies one descent step in place.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<(), NnError> {
        if params.len() != grads.len() {
            return Err(NnError::Shape(format!(
                "{} parameters but {} gradients",
                params.len(),
                grads.len()
            )));
        }
        self.step += 1;
        let lr = self.learning_rate;
        match self.kind {
            OptimKind::Sgd => {
                for (p, g) in params.iter_mut().zip(grads) {
                    *p -= lr * g;
                }
            }
            OptimKind::Adam { beta1, beta2, eps } => {
                if self.first_moment.len() != params.len() {
                    return Err(NnError::Shape(format!(
                        "optimizer tracks {} parameters, got {}",
                        self.first_moment.len(),
                        params.len()
                    )));
                }
                let t = self.step as i32;
                let c1 = 1.0 - beta1.powi(t);
                let c2 = 1.0 - beta2.powi(t);
                for (((p, g), m), v) in params
                    .iter_mut()
                    .zip(grads)
                    .zip(&mut self.first_moment)
                    .zip(&mut self.second_moment)
                {
                    *m = beta1 * *m + (1.0 - beta1) * g;
                    *v = beta2 * *v + (1.0 - beta2) * g * g;
                    *p -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
                }
            }
        }
        Ok(())
    }
}
