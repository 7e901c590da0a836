//! Tempered softmax, cross-entropy, KL divergence, and the per-domain
//! composite loss  L = α·CE(h(X), Y) + (1−α)·τ²·KL(Ỹ^τ ‖ h^τ(X)).
//!
//! CE is always evaluated at temperature 1; only the KL term is tempered,
//! and the τ² factor keeps its gradient scale comparable across τ. The KL
//! argument order is teacher-first by default (soft target as the target
//! distribution); the reverse order is available behind [`KlOrder`] because
//! the two differ only by a constant entropy term in the optimization.

use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{CoreError, Result};
use crate::mat::Mat;
use crate::tape::{NodeId, Tape};

/// Probabilities are clamped to at least this before any logarithm, which
/// bounds the loss under degenerate soft targets.
pub const PROB_CLAMP: f64 = 1e-12;

/// Which side of the KL the soft target sits on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum KlOrder {
    /// KL(target ‖ prediction); conventional distillation direction.
    #[default]
    TeacherFirst,
    /// KL(prediction ‖ target); the order the composite-loss formula is
    /// sometimes read with.
    PredictionFirst,
}

/// One sample's soft supervision: a probability vector and the temperature
/// it was produced at.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftTarget {
    pub probabilities: Vec<f64>,
    pub tau: f64,
}

impl SoftTarget {
    pub fn new(probabilities: Vec<f64>, tau: f64) -> Result<Self> {
        if !(tau > 0.0) {
            return Err(CoreError::InvalidArgument(alloc::format!(
                "temperature must be positive, got {tau}"
            )));
        }
        if probabilities.iter().any(|&p| !(p >= 0.0)) {
            return Err(CoreError::InvalidArgument("negative or NaN probability".into()));
        }
        let sum: f64 = probabilities.iter().sum();
        if libm::fabs(sum - 1.0) > 1e-9 {
            return Err(CoreError::InvalidArgument(alloc::format!(
                "probabilities sum to {sum}, not 1"
            )));
        }
        Ok(SoftTarget { probabilities, tau })
    }

    pub fn from_logits(logits: &[f64], tau: f64) -> Result<Self> {
        SoftTarget::new(tempered_softmax(logits, tau)?, tau)
    }
}

/// The three scalars of one domain's composite loss, plus the knobs that
/// produced it. Invariant: composite = α·ce + (1−α)·τ²·kl within 1e-12.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    pub ce: f64,
    pub kl: f64,
    pub composite: f64,
    pub alpha: f64,
    pub tau: f64,
}

impl LossBreakdown {
    pub fn kl_weight(&self) -> f64 {
        (1.0 - self.alpha) * self.tau * self.tau
    }

    /// |composite − (α·ce + (1−α)·τ²·kl)|, which the type promises ≤ 1e-12.
    pub fn invariant_gap(&self) -> f64 {
        libm::fabs(self.composite - (self.alpha * self.ce + self.kl_weight() * self.kl))
    }
}

/// softmax(z/τ) with max-subtraction; rejects non-finite logits and τ ≤ 0.
pub fn tempered_softmax(logits: &[f64], tau: f64) -> Result<Vec<f64>> {
    if logits.is_empty() {
        return Err(CoreError::Empty("softmax of no logits".into()));
    }
    if !(tau > 0.0) {
        return Err(CoreError::InvalidArgument(alloc::format!(
            "temperature must be positive, got {tau}"
        )));
    }
    if logits.iter().any(|v| !v.is_finite()) {
        return Err(CoreError::InvalidArgument("non-finite logit".into()));
    }
    let mut max = f64::NEG_INFINITY;
    for &z in logits {
        if z > max {
            max = z;
        }
    }
    let mut out: Vec<f64> = logits.iter().map(|&z| libm::exp((z - max) / tau)).collect();
    let sum: f64 = out.iter().sum();
    for p in &mut out {
        *p /= sum;
    }
    Ok(out)
}

/// Clamp a probability below at [`PROB_CLAMP`] without hiding NaN
/// (`f64::max` would return the clamp for a NaN input, laundering a
/// numeric failure into a finite loss).
pub(crate) fn clamp_prob(p: f64) -> f64 {
    if p < PROB_CLAMP {
        PROB_CLAMP
    } else {
        p
    }
}

/// −ln p_label with the probability clamped below at [`PROB_CLAMP`].
pub fn cross_entropy(probabilities: &[f64], label: usize) -> Result<f64> {
    if label >= probabilities.len() {
        return Err(CoreError::InvalidArgument(alloc::format!(
            "label {label} out of range for {} classes",
            probabilities.len()
        )));
    }
    Ok(-libm::log(clamp_prob(probabilities[label])))
}

/// Σ t·ln(t/p) with 0·ln(0/·) := 0 and p clamped below at [`PROB_CLAMP`].
pub fn kl_divergence(target: &[f64], prediction: &[f64]) -> Result<f64> {
    if target.len() != prediction.len() {
        return Err(CoreError::ShapeMismatch(alloc::format!(
            "KL over vectors of length {} and {}",
            target.len(),
            prediction.len()
        )));
    }
    let mut acc = 0.0;
    for (&t, &p) in target.iter().zip(prediction) {
        if t > 0.0 {
            acc += t * libm::log(t / clamp_prob(p));
        }
    }
    Ok(acc)
}

/// Row-wise tempered softmax of a logit matrix (no validation; internal).
pub(crate) fn softmax_rows(logits: &Mat, tau: f64) -> Mat {
    let mut out = logits.clone();
    for i in 0..out.rows() {
        let row = out.row_mut(i);
        let mut max = f64::NEG_INFINITY;
        for &z in row.iter() {
            if z > max {
                max = z;
            }
        }
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = libm::exp((*v - max) / tau);
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    out
}

/// Build one domain's composite loss on the tape.
///
/// Returns `(composite, ce, breakdown)`: the composite node drives the
/// optimizer step, while the bare cross-entropy node is kept separately so
/// diagnostics can differentiate the task loss alone — conflict statistics
/// compare per-domain task gradients, the same quantity regardless of the
/// training objective.
///
/// `target_logits` are the prophet's raw outputs for the batch; they enter
/// as constants, so gradients flow only through `logits`. With α = 1 (or no
/// target at all) the KL term is skipped entirely and the node reduces to
/// plain cross-entropy; that exact-collapse is what makes the α = 1
/// configuration bit-identical to ERM.
pub fn domain_loss(
    tape: &mut Tape,
    logits: NodeId,
    labels: &[usize],
    target_logits: Option<&Mat>,
    alpha: f64,
    tau: f64,
    order: KlOrder,
) -> Result<(NodeId, NodeId, LossBreakdown)> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(CoreError::InvalidArgument(alloc::format!("alpha {alpha} outside [0, 1]")));
    }
    if !(tau > 0.0) {
        return Err(CoreError::InvalidArgument(alloc::format!(
            "temperature must be positive, got {tau}"
        )));
    }
    if let Some(t) = target_logits {
        if t.rows() != labels.len() {
            return Err(CoreError::ShapeMismatch(alloc::format!(
                "{} target rows against {} labels",
                t.rows(),
                labels.len()
            )));
        }
    }
    let ce = tape.mean_cross_entropy(logits, labels)?;
    let (node, kl_value) = match target_logits {
        Some(targets) if alpha < 1.0 => {
            let kl = tape.mean_tempered_kl(logits, targets, tau, order)?;
            let kl_value = tape.scalar(kl)?;
            let node = tape.weighted_sum(&[(ce, alpha), (kl, (1.0 - alpha) * tau * tau)])?;
            (node, kl_value)
        }
        Some(_) | None => {
            if alpha < 1.0 {
                return Err(CoreError::InvalidArgument(
                    String::from("alpha < 1 requires soft targets"),
                ));
            }
            (tape.weighted_sum(&[(ce, 1.0)])?, 0.0)
        }
    };
    let breakdown = LossBreakdown {
        ce: tape.scalar(ce)?,
        kl: kl_value,
        composite: tape.scalar(node)?,
        alpha,
        tau,
    };
    Ok((node, ce, breakdown))
}
