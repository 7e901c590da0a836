//! Soft-target generators ("prophets"): frozen per-domain experts, one
//! frozen pooled expert, the hypothesis's previous-epoch snapshot, and
//! per-domain linear heads on the shared feature extractor. A prophet maps
//! a batch to target logits; it never participates in the hypothesis
//! gradient — soft targets are plain values, detached by construction.

use alloc::vec;
use alloc::vec::Vec;

use crate::data::{sample_batch, BatchSampler, DomainBatch, MultiDomainDataset};
use crate::error::{CoreError, Result};
use crate::loss::SoftTarget;
use crate::mat::Mat;
use crate::mlp::MlpModel;
use crate::optim::{OptimConfig, SgdOptimizer};
use crate::rng::{derive_seed, STREAM_EXPERT};
use crate::tape::Tape;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProphetKind {
    /// One frozen expert per source domain, trained on that domain only.
    MultiExpert,
    /// One frozen expert trained on all source domains.
    SingleExpert,
    /// The hypothesis itself, as snapshotted at the previous epoch boundary.
    PrevEpoch,
    /// Per-domain linear heads on the hypothesis's feature extractor,
    /// trained alongside it.
    MultiHead,
}

impl ProphetKind {
    pub fn tag(self) -> &'static str {
        match self {
            ProphetKind::MultiExpert => "me",
            ProphetKind::SingleExpert => "se",
            ProphetKind::PrevEpoch => "mp",
            ProphetKind::MultiHead => "mc",
        }
    }
}

/// Target logits for one batch, tagged with their provenance. Carries no
/// tape linkage.
#[derive(Debug, Clone)]
pub struct SoftTargetBatch {
    pub logits: Mat,
    pub kind: ProphetKind,
    pub domain_index: usize,
}

impl SoftTargetBatch {
    /// Per-sample tempered target distributions.
    pub fn tempered(&self, tau: f64) -> Result<Vec<SoftTarget>> {
        (0..self.logits.rows())
            .map(|i| SoftTarget::from_logits(self.logits.row(i), tau))
            .collect()
    }
}

#[derive(Debug, Clone)]
pub enum Prophet {
    MultiExpert { experts: Vec<MlpModel> },
    SingleExpert { expert: MlpModel },
    PrevEpoch { snapshot: Option<MlpModel> },
    MultiHead { heads: Vec<MlpModel>, optimizers: Vec<SgdOptimizer>, head_loss_weight: f64 },
}

impl Prophet {
    pub fn kind(&self) -> ProphetKind {
        match self {
            Prophet::MultiExpert { .. } => ProphetKind::MultiExpert,
            Prophet::SingleExpert { .. } => ProphetKind::SingleExpert,
            Prophet::PrevEpoch { .. } => ProphetKind::PrevEpoch,
            Prophet::MultiHead { .. } => ProphetKind::MultiHead,
        }
    }

    /// A previous-epoch prophet with no snapshot yet (epoch 0).
    pub fn prev_epoch() -> Self {
        Prophet::PrevEpoch { snapshot: None }
    }

    /// Fresh linear heads, one per source domain, each with its own
    /// optimizer so head step counts stay aligned with the hypothesis.
    pub fn multi_head(
        domains: usize,
        feature_dim: usize,
        classes: usize,
        seed: u64,
        head_loss_weight: f64,
        optim: &OptimConfig,
        total_steps: usize,
    ) -> Result<Self> {
        if domains == 0 {
            return Err(CoreError::Empty("no source domains for heads".into()));
        }
        let mut heads = Vec::with_capacity(domains);
        let mut optimizers = Vec::with_capacity(domains);
        for d in 0..domains {
            let head_seed = derive_seed(seed, &[STREAM_EXPERT, d as u64]);
            heads.push(MlpModel::new(&[feature_dim, classes], head_seed)?);
            optimizers.push(SgdOptimizer::new(optim.clone(), total_steps)?);
        }
        Ok(Prophet::MultiHead { heads, optimizers, head_loss_weight })
    }

    /// True once the prophet can produce targets (only the previous-epoch
    /// kind ever says no).
    pub fn ready(&self) -> bool {
        !matches!(self, Prophet::PrevEpoch { snapshot: None })
    }

    /// Target logits for a batch. For the multi-head kind the features come
    /// from the current hypothesis, evaluated outside any tape.
    pub fn soft_targets(&self, batch: &DomainBatch, hypothesis: &MlpModel) -> Result<SoftTargetBatch> {
        let logits = match self {
            Prophet::MultiExpert { experts } => {
                let expert = experts.get(batch.domain_index).ok_or_else(|| {
                    CoreError::InvalidArgument(alloc::format!(
                        "no expert for domain index {}",
                        batch.domain_index
                    ))
                })?;
                expert.apply(&batch.x)?
            }
            Prophet::SingleExpert { expert } => expert.apply(&batch.x)?,
            Prophet::PrevEpoch { snapshot } => snapshot
                .as_ref()
                .ok_or_else(|| {
                    CoreError::InvalidArgument("no previous-epoch snapshot yet".into())
                })?
                .apply(&batch.x)?,
            Prophet::MultiHead { heads, .. } => {
                let head = heads.get(batch.domain_index).ok_or_else(|| {
                    CoreError::InvalidArgument(alloc::format!(
                        "no head for domain index {}",
                        batch.domain_index
                    ))
                })?;
                head.apply(&hypothesis.apply_features(&batch.x)?)?
            }
        };
        Ok(SoftTargetBatch { logits, kind: self.kind(), domain_index: batch.domain_index })
    }

    /// Epoch-boundary bookkeeping: the previous-epoch kind snapshots the
    /// hypothesis; every other kind is a no-op.
    pub fn advance_epoch(&mut self, hypothesis: &MlpModel) {
        if let Prophet::PrevEpoch { snapshot } = self {
            *snapshot = Some(hypothesis.clone());
        }
    }
}

/// Train frozen experts: one per source domain, or a single pooled one.
/// Experts share the hypothesis's architecture; training is plain
/// cross-entropy SGD for `epochs` passes with per-(seed, domain) streams,
/// so expert training never consumes the main run's randomness.
pub fn pretrain_experts(
    kind: ProphetKind,
    sources: &MultiDomainDataset,
    hidden: &[usize],
    optim: &OptimConfig,
    epochs: usize,
    batch_size: usize,
    seed: u64,
) -> Result<Prophet> {
    if sources.domains.is_empty() {
        return Err(CoreError::Empty("no source domains".into()));
    }
    if let Some(d) = sources.domains.iter().find(|d| d.is_empty()) {
        return Err(CoreError::Empty(alloc::format!("domain {} has no samples", d.id)));
    }
    let mut dims = vec![sources.feature_dim];
    dims.extend_from_slice(hidden);
    dims.push(sources.classes);

    match kind {
        ProphetKind::MultiExpert => {
            let mut experts = Vec::with_capacity(sources.domains.len());
            for (index, domain) in sources.domains.iter().enumerate() {
                let expert_seed = derive_seed(seed, &[STREAM_EXPERT, index as u64]);
                let mut expert = MlpModel::new(&dims, expert_seed)?;
                let batch = batch_size.min(domain.len());
                let steps_per_epoch = (domain.len() / batch).max(1);
                let mut opt = SgdOptimizer::new(optim.clone(), epochs * steps_per_epoch)?;
                let mut sampler = BatchSampler::new(domain, expert_seed);
                for _ in 0..epochs * steps_per_epoch {
                    let b = sample_batch(&mut sampler, domain, index, batch)?;
                    ce_step(&mut expert, &mut opt, &b)?;
                }
                experts.push(expert);
            }
            Ok(Prophet::MultiExpert { experts })
        }
        ProphetKind::SingleExpert => {
            let expert_seed = derive_seed(seed, &[STREAM_EXPERT, u64::MAX]);
            let mut expert = MlpModel::new(&dims, expert_seed)?;
            let min_len = sources.domains.iter().map(|d| d.len()).min().unwrap();
            let batch = batch_size.min(min_len);
            let steps_per_epoch = (min_len / batch).max(1);
            let mut opt = SgdOptimizer::new(optim.clone(), epochs * steps_per_epoch)?;
            let mut samplers: Vec<BatchSampler> =
                sources.domains.iter().map(|d| BatchSampler::new(d, expert_seed)).collect();
            for _ in 0..epochs * steps_per_epoch {
                let mut tape = Tape::new();
                let params = expert.register_params(&mut tape);
                let mut terms = Vec::with_capacity(sources.domains.len());
                let weight = 1.0 / sources.domains.len() as f64;
                for (i, domain) in sources.domains.iter().enumerate() {
                    let b = sample_batch(&mut samplers[i], domain, i, batch)?;
                    let x = tape.leaf(b.x.clone(), false);
                    let pass = expert.forward_with(&mut tape, x, &params)?;
                    let ce = tape.mean_cross_entropy(pass.logits, &b.y)?;
                    terms.push((ce, weight));
                }
                let total = tape.weighted_sum(&terms)?;
                tape.backward(total)?;
                opt.sgd_step(&mut expert, &tape, &params)?;
            }
            Ok(Prophet::SingleExpert { expert })
        }
        ProphetKind::PrevEpoch | ProphetKind::MultiHead => Err(CoreError::InvalidArgument(
            "only the expert kinds are pretrained".into(),
        )),
    }
}

/// One cross-entropy SGD step of `model` on a single batch.
fn ce_step(model: &mut MlpModel, opt: &mut SgdOptimizer, batch: &DomainBatch) -> Result<()> {
    let mut tape = Tape::new();
    let params = model.register_params(&mut tape);
    let x = tape.leaf(batch.x.clone(), false);
    let pass = model.forward_with(&mut tape, x, &params)?;
    let ce = tape.mean_cross_entropy(pass.logits, &batch.y)?;
    tape.backward(ce)?;
    opt.sgd_step(model, &tape, &params)
}

/// One SGD step of the batch domain's head on CE(head(f(X)), Y), with the
/// feature extractor frozen; every other head is untouched. The joint
/// objective inside the training loop is what lets head losses reach the
/// feature extractor — this standalone op only moves the routed head.
pub fn train_mc_heads(
    prophet: &mut Prophet,
    batch: &DomainBatch,
    hypothesis: &MlpModel,
) -> Result<()> {
    let Prophet::MultiHead { heads, optimizers, .. } = prophet else {
        return Err(CoreError::InvalidArgument(alloc::format!(
            "head training on a {:?} prophet",
            prophet.kind()
        )));
    };
    let head = heads.get_mut(batch.domain_index).ok_or_else(|| {
        CoreError::InvalidArgument(alloc::format!(
            "no head for domain index {}",
            batch.domain_index
        ))
    })?;
    let features = hypothesis.apply_features(&batch.x)?;
    let mut tape = Tape::new();
    let params = head.register_params(&mut tape);
    let x = tape.leaf(features, false);
    let pass = head.forward_with(&mut tape, x, &params)?;
    let ce = tape.mean_cross_entropy(pass.logits, &batch.y)?;
    tape.backward(ce)?;
    optimizers[batch.domain_index].sgd_step(head, &tape, &params)
}
