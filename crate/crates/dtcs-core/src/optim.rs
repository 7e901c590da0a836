//! SGD with decoupled additive weight decay and milestone learning-rate
//! decay: θ ← θ − η_eff·(g + wd·θ), η_eff = η·factor^(milestones passed).

use alloc::vec::Vec;

use crate::error::{CoreError, Result};
use crate::mat::Mat;
use crate::mlp::MlpModel;
use crate::tape::{NodeId, Tape};

#[derive(Debug, Clone, PartialEq)]
pub struct OptimConfig {
    pub lr: f64,
    pub weight_decay: f64,
    /// Fractions of the total step budget at which the rate is decayed.
    pub milestones: Vec<f64>,
    pub decay_factor: f64,
}

impl Default for OptimConfig {
    fn default() -> Self {
        OptimConfig {
            lr: 5e-3,
            weight_decay: 5e-4,
            milestones: alloc::vec![0.6, 0.8],
            decay_factor: 0.1,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SgdOptimizer {
    pub config: OptimConfig,
    pub total_steps: usize,
    pub step_count: usize,
    milestone_steps: Vec<usize>,
}

impl SgdOptimizer {
    pub fn new(config: OptimConfig, total_steps: usize) -> Result<Self> {
        if !(config.lr > 0.0) {
            return Err(CoreError::InvalidArgument(alloc::format!(
                "learning rate must be positive, got {}",
                config.lr
            )));
        }
        if !(config.weight_decay >= 0.0) {
            return Err(CoreError::InvalidArgument("negative weight decay".into()));
        }
        if !(config.decay_factor > 0.0) {
            return Err(CoreError::InvalidArgument("decay factor must be positive".into()));
        }
        let mut prev = 0.0;
        for &m in &config.milestones {
            if !(m > prev && m < 1.0) {
                return Err(CoreError::InvalidArgument(
                    "milestones must be strictly increasing within (0, 1)".into(),
                ));
            }
            prev = m;
        }
        let milestone_steps =
            config.milestones.iter().map(|&f| libm::round(f * total_steps as f64) as usize).collect();
        Ok(SgdOptimizer { config, total_steps, step_count: 0, milestone_steps })
    }

    /// Rate for the upcoming step (milestone decay applied from the
    /// milestone step onward).
    pub fn effective_lr(&self) -> f64 {
        let passed = self.milestone_steps.iter().filter(|&&m| self.step_count >= m).count();
        let mut lr = self.config.lr;
        for _ in 0..passed {
            lr *= self.config.decay_factor;
        }
        lr
    }

    /// One step over the given parameter leaves; gradients come from the
    /// tape's last backward pass. Advances the step counter.
    pub fn sgd_step(
        &mut self,
        model: &mut MlpModel,
        tape: &Tape,
        params: &[(NodeId, NodeId)],
    ) -> Result<()> {
        if params.len() != model.layer_count() {
            return Err(CoreError::ShapeMismatch(alloc::format!(
                "{} parameter pairs for {} layers",
                params.len(),
                model.layer_count()
            )));
        }
        let lr = self.effective_lr();
        let wd = self.config.weight_decay;
        for (layer, &(wid, bid)) in params.iter().enumerate() {
            let gw = tape.grad(wid).ok_or_else(missing_grad)?;
            let gb = tape.grad(bid).ok_or_else(missing_grad)?;
            apply(&mut model.weights[layer], gw, lr, wd)?;
            apply(&mut model.biases[layer], gb, lr, wd)?;
        }
        self.step_count += 1;
        Ok(())
    }

    /// One step with an externally combined flat gradient (parameter layout
    /// of `MlpModel::flatten_params`). Advances the step counter.
    pub fn step_flat(&mut self, model: &mut MlpModel, flat_grad: &[f64]) -> Result<()> {
        if flat_grad.len() != model.param_count() {
            return Err(CoreError::ShapeMismatch(alloc::format!(
                "{} gradient entries for {} parameters",
                flat_grad.len(),
                model.param_count()
            )));
        }
        let lr = self.effective_lr();
        let wd = self.config.weight_decay;
        let mut at = 0;
        for layer in 0..model.layer_count() {
            for target in [&mut model.weights[layer], &mut model.biases[layer]] {
                let n = target.len();
                for (t, &g) in target.as_mut_slice().iter_mut().zip(&flat_grad[at..at + n]) {
                    *t -= lr * (g + wd * *t);
                }
                at += n;
            }
        }
        self.step_count += 1;
        Ok(())
    }
}

fn apply(param: &mut Mat, grad: &Mat, lr: f64, wd: f64) -> Result<()> {
    if param.shape() != grad.shape() {
        return Err(CoreError::ShapeMismatch(alloc::format!(
            "gradient {}x{} for parameter {}x{}",
            grad.rows(),
            grad.cols(),
            param.rows(),
            param.cols()
        )));
    }
    for (p, &g) in param.as_mut_slice().iter_mut().zip(grad.as_slice()) {
        *p -= lr * (g + wd * *p);
    }
    Ok(())
}

fn missing_grad() -> CoreError {
    CoreError::Numeric("parameter has no gradient on this tape".into())
}
