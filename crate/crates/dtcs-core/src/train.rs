//! The training loop: per-iteration domain losses against prophet targets,
//! momentum-balanced domain contributions, and the two baselines (plain
//! empirical risk, sign-agreement gradient combination). One run = one
//! thread over mutable model/weight state.

use alloc::vec;
use alloc::vec::Vec;

use crate::data::{sample_batch, BatchSampler, Domain, DomainBatch, MultiDomainDataset};
use crate::diag::{conflict_stats, evaluate, ConflictStats};
use crate::error::{CoreError, Result};
use crate::loss::{domain_loss, KlOrder, LossBreakdown};
use crate::mat::Mat;
use crate::mlp::MlpModel;
use crate::optim::{OptimConfig, SgdOptimizer};
use crate::prophet::{Prophet, ProphetKind};
use crate::tape::{NodeId, Tape};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    /// Soft diverse targets + balanced domain contributions.
    Dtcs,
    /// Uniform mean of per-domain cross-entropies.
    Erm,
    /// Keep only gradient components whose sign all domains share.
    AgrSum,
}

impl Method {
    pub fn tag(self) -> &'static str {
        match self {
            Method::Dtcs => "dtcs",
            Method::Erm => "erm",
            Method::AgrSum => "agr-sum",
        }
    }
}

/// How the run obtains its prophet. Expert kinds are expensive to pretrain,
/// so they arrive prebuilt and can be shared across runs; the snapshot and
/// head kinds are cheap and are constructed inside the run (heads seeded by
/// the run seed, keeping the determinism contract).
#[derive(Debug, Clone)]
pub enum ProphetSpec {
    Ready(Prophet),
    PrevEpoch,
    MultiHead { head_loss_weight: f64 },
}

impl ProphetSpec {
    pub fn kind(&self) -> ProphetKind {
        match self {
            ProphetSpec::Ready(p) => p.kind(),
            ProphetSpec::PrevEpoch => ProphetKind::PrevEpoch,
            ProphetSpec::MultiHead { .. } => ProphetKind::MultiHead,
        }
    }

    fn build(
        &self,
        feature_dim: usize,
        classes: usize,
        domains: usize,
        optim: &OptimConfig,
        total_steps: usize,
        seed: u64,
    ) -> Result<Prophet> {
        match self {
            ProphetSpec::Ready(p) => Ok(p.clone()),
            ProphetSpec::PrevEpoch => Ok(Prophet::prev_epoch()),
            ProphetSpec::MultiHead { head_loss_weight } => Prophet::multi_head(
                domains,
                feature_dim,
                classes,
                seed,
                *head_loss_weight,
                optim,
                total_steps,
            ),
        }
    }
}

/// Multiplicative decay of the balancing momentum at fractions of the
/// total epoch count, mirroring the learning-rate schedule.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentumSchedule {
    pub initial: f64,
    pub milestones: Vec<f64>,
    pub decay_factor: f64,
}

impl Default for MomentumSchedule {
    fn default() -> Self {
        MomentumSchedule { initial: 0.9, milestones: vec![0.6, 0.8], decay_factor: 0.1 }
    }
}

#[derive(Debug, Clone)]
pub struct TrainPlan {
    pub method: Method,
    /// Required for the soft-target method, forbidden otherwise.
    pub prophet: Option<ProphetSpec>,
    /// Weight on the hard-label term; 1 − alpha goes to the soft term.
    pub alpha: f64,
    pub tau: f64,
    pub kl_order: KlOrder,
    pub iterations: usize,
    pub epoch_len: usize,
    /// Per-domain batch size (equal across domains by design).
    pub batch_size: usize,
    pub hidden: Vec<usize>,
    pub optim: OptimConfig,
    /// Balance domain contributions by inverse training rate.
    pub dcb: bool,
    pub momentum: MomentumSchedule,
    /// Record per-domain task-gradient geometry every iteration (adds one
    /// backward sweep per domain). The measured gradients are those of each
    /// domain's plain cross-entropy on its sampled batch — not the training
    /// composite — so the statistic means the same thing for every method.
    pub record_conflict: bool,
    /// Record a parameter fingerprint after every step.
    pub record_param_hash: bool,
}

impl TrainPlan {
    pub fn new(method: Method) -> Self {
        TrainPlan {
            method,
            prophet: None,
            alpha: 0.1,
            tau: 2.0,
            kl_order: KlOrder::default(),
            iterations: 3000,
            epoch_len: 50,
            batch_size: 32,
            hidden: vec![64, 64],
            optim: OptimConfig::default(),
            dcb: method == Method::Dtcs,
            momentum: MomentumSchedule::default(),
            record_conflict: false,
            record_param_hash: false,
        }
    }

    pub fn model_dims(&self, feature_dim: usize, classes: usize) -> Vec<usize> {
        let mut dims = vec![feature_dim];
        dims.extend_from_slice(&self.hidden);
        dims.push(classes);
        dims
    }

    fn validate(&self, data: &RunData) -> Result<()> {
        let plan_err = |msg: alloc::string::String| Err(CoreError::PlanInvalid(msg));
        if self.epoch_len == 0 {
            return plan_err("epoch length must be positive".into());
        }
        if self.batch_size == 0 {
            return plan_err("batch size must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return plan_err(alloc::format!("alpha {} outside [0, 1]", self.alpha));
        }
        if !(self.tau > 0.0) {
            return plan_err(alloc::format!("temperature {} must be positive", self.tau));
        }
        if !(0.0..=1.0).contains(&self.momentum.initial) {
            return plan_err(alloc::format!("momentum {} outside [0, 1]", self.momentum.initial));
        }
        if !(self.momentum.decay_factor > 0.0) {
            return plan_err("momentum decay factor must be positive".into());
        }
        let mut prev = 0.0;
        for &f in &self.momentum.milestones {
            if !(f > prev && f < 1.0) {
                return plan_err(alloc::format!("momentum milestone {f} outside (0, 1) or unordered"));
            }
            prev = f;
        }
        match self.method {
            Method::Dtcs => {
                if self.prophet.is_none() {
                    return plan_err("soft-target method needs a prophet".into());
                }
            }
            Method::Erm | Method::AgrSum => {
                if self.prophet.is_some() {
                    return plan_err("baselines take no prophet".into());
                }
                if self.dcb {
                    return plan_err("contribution balancing applies to the soft-target method only".into());
                }
            }
        }
        let train = data.train;
        let m = train.domains.len();
        if m < 2 {
            return plan_err(alloc::format!("{m} source domain(s), need at least 2"));
        }
        if data.val.domains.len() != m {
            return plan_err(alloc::format!(
                "{} validation domains against {m} training domains",
                data.val.domains.len()
            ));
        }
        if data.val.feature_dim != train.feature_dim || data.val.classes != train.classes {
            return plan_err("validation split shape differs from training split".into());
        }
        for d in &train.domains {
            if d.len() < 2 * self.batch_size {
                return plan_err(alloc::format!(
                    "domain {} has {} samples, need at least twice the batch size {}",
                    d.id,
                    d.len(),
                    self.batch_size
                ));
            }
        }
        if let Some(t) = data.target {
            if t.xs.cols() != train.feature_dim {
                return plan_err("target domain feature width differs".into());
            }
        }
        let dims = self.model_dims(train.feature_dim, train.classes);
        let feature_dim = dims[dims.len() - 2];
        if let Some(ProphetSpec::Ready(p)) = &self.prophet {
            match p {
                Prophet::MultiExpert { experts } => {
                    if experts.len() != m {
                        return plan_err(alloc::format!(
                            "{} experts for {m} domains",
                            experts.len()
                        ));
                    }
                    for e in experts {
                        if e.input_dim() != train.feature_dim || e.output_dim() != train.classes {
                            return plan_err("expert shape differs from data".into());
                        }
                    }
                }
                Prophet::SingleExpert { expert } => {
                    if expert.input_dim() != train.feature_dim
                        || expert.output_dim() != train.classes
                    {
                        return plan_err("expert shape differs from data".into());
                    }
                }
                Prophet::PrevEpoch { snapshot } => {
                    if let Some(s) = snapshot {
                        if s.dims != dims {
                            return plan_err("snapshot architecture differs from plan".into());
                        }
                    }
                }
                Prophet::MultiHead { heads, .. } => {
                    if heads.len() != m {
                        return plan_err(alloc::format!("{} heads for {m} domains", heads.len()));
                    }
                    for h in heads {
                        if h.input_dim() != feature_dim || h.output_dim() != train.classes {
                            return plan_err("head shape differs from feature extractor".into());
                        }
                    }
                }
            }
        }
        if let Some(ProphetSpec::MultiHead { head_loss_weight }) = &self.prophet {
            if !(*head_loss_weight >= 0.0) {
                return plan_err("head loss weight must be nonnegative".into());
            }
        }
        Ok(())
    }
}

/// Per-domain contribution weights with their momentum state. The previous
/// losses are absent until the first update records them.
#[derive(Debug, Clone, PartialEq)]
pub struct DomainWeights {
    pub weights: Vec<f64>,
    pub momentum: f64,
    pub prev_losses: Option<Vec<f64>>,
}

impl DomainWeights {
    pub fn uniform(domains: usize, momentum: f64) -> Self {
        DomainWeights {
            weights: vec![1.0 / domains as f64; domains],
            momentum,
            prev_losses: None,
        }
    }
}

/// Momentum update by inverse training rate: domains whose loss declines
/// slowest get more weight. The first call only records the losses; every
/// later call forms ratios against the previous losses, normalizes them,
/// and blends into the running weights.
pub fn dcb_update(state: &mut DomainWeights, losses: &[f64]) -> Result<()> {
    if losses.len() != state.weights.len() {
        return Err(CoreError::ShapeMismatch(alloc::format!(
            "{} losses for {} weights",
            losses.len(),
            state.weights.len()
        )));
    }
    if let Some(&bad) = losses.iter().find(|&&l| !(l > 0.0) || !l.is_finite()) {
        return Err(CoreError::Numeric(alloc::format!(
            "domain loss {bad} is not positive and finite"
        )));
    }
    if let Some(prev) = &state.prev_losses {
        let ratios: Vec<f64> = losses.iter().zip(prev).map(|(c, p)| c / p).collect();
        let sum: f64 = ratios.iter().sum();
        if !sum.is_finite() || !(sum > 0.0) {
            return Err(CoreError::Numeric(alloc::format!("ratio sum {sum} collapsed")));
        }
        let m = state.momentum;
        for (w, r) in state.weights.iter_mut().zip(&ratios) {
            *w = m * (r / sum) + (1.0 - m) * *w;
        }
    }
    state.prev_losses = Some(losses.to_vec());
    Ok(())
}

/// Σ ω_i·L_i with the weights as gradient constants.
pub fn weighted_total_loss(tape: &mut Tape, losses: &[NodeId], weights: &[f64]) -> Result<NodeId> {
    if losses.len() != weights.len() {
        return Err(CoreError::ShapeMismatch(alloc::format!(
            "{} losses for {} weights",
            losses.len(),
            weights.len()
        )));
    }
    let terms: Vec<(NodeId, f64)> =
        losses.iter().copied().zip(weights.iter().copied()).collect();
    tape.weighted_sum(&terms)
}

/// One step on the mean of per-domain cross-entropies. Returns the
/// per-domain CE values at the pre-step parameters.
pub fn erm_step(
    batches: &[DomainBatch],
    model: &mut MlpModel,
    optimizer: &mut SgdOptimizer,
) -> Result<Vec<f64>> {
    if batches.is_empty() {
        return Err(CoreError::Empty("no batches".into()));
    }
    let mut tape = Tape::new();
    let params = model.register_params(&mut tape);
    let weight = 1.0 / batches.len() as f64;
    let mut terms = Vec::with_capacity(batches.len());
    for b in batches {
        let x = tape.leaf(b.x.clone(), false);
        let pass = model.forward_with(&mut tape, x, &params)?;
        let ce = tape.mean_cross_entropy(pass.logits, &b.y)?;
        terms.push((ce, weight));
    }
    let values: Vec<f64> = terms.iter().map(|&(ce, _)| tape.value(ce).get(0, 0)).collect();
    let total = tape.weighted_sum(&terms)?;
    tape.backward(total)?;
    optimizer.sgd_step(model, &tape, &params)?;
    Ok(values)
}

/// Componentwise sign-agreement combination: a component survives (as the
/// plain sum) only when every domain gradient gives it the same strict
/// sign; any disagreement or zero blocks it.
pub fn combine_sign_agreement(grads: &[Vec<f64>]) -> Result<Vec<f64>> {
    if grads.is_empty() {
        return Err(CoreError::Empty("no gradients".into()));
    }
    let len = grads[0].len();
    if grads.iter().any(|g| g.len() != len) {
        return Err(CoreError::ShapeMismatch("gradient lengths differ".into()));
    }
    let m = grads.len();
    Ok((0..len)
        .map(|k| {
            let pos = grads.iter().filter(|g| g[k] > 0.0).count();
            let neg = grads.iter().filter(|g| g[k] < 0.0).count();
            if pos == m || neg == m {
                grads.iter().map(|g| g[k]).sum()
            } else {
                0.0
            }
        })
        .collect())
}

/// One optimizer step with the sign-agreement combination of per-domain
/// gradients (flattened to the model's parameter layout).
pub fn agr_sum_step(
    grads: &[Vec<f64>],
    model: &mut MlpModel,
    optimizer: &mut SgdOptimizer,
) -> Result<()> {
    let combined = combine_sign_agreement(grads)?;
    optimizer.step_flat(model, &combined)
}

/// Training and validation splits plus the held-out target domain.
#[derive(Debug, Clone, Copy)]
pub struct RunData<'a> {
    pub train: &'a MultiDomainDataset,
    pub val: &'a MultiDomainDataset,
    pub target: Option<&'a Domain>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub iter: usize,
    pub epoch: usize,
    pub domain_losses: Vec<LossBreakdown>,
    pub weights: Vec<f64>,
    pub total_loss: f64,
    pub lr: f64,
    /// Balancing momentum in effect; 0 when balancing is off.
    pub m: f64,
    pub conflict: Option<ConflictStats>,
    pub param_hash: Option<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalRecord {
    pub epoch: usize,
    pub iter: usize,
    pub source_val_acc: Vec<f64>,
    pub pooled_val_acc: f64,
    pub target_acc: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunRecord {
    pub iterations: Vec<IterationRecord>,
    pub evals: Vec<EvalRecord>,
}

impl RunRecord {
    pub fn total_series(&self) -> Vec<f64> {
        self.iterations.iter().map(|r| r.total_loss).collect()
    }

    /// One composite-loss series per domain.
    pub fn composite_series(&self) -> Vec<Vec<f64>> {
        let Some(first) = self.iterations.first() else {
            return Vec::new();
        };
        (0..first.domain_losses.len())
            .map(|d| self.iterations.iter().map(|r| r.domain_losses[d].composite).collect())
            .collect()
    }

    pub fn final_eval(&self) -> Option<&EvalRecord> {
        self.evals.last()
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub model: MlpModel,
    pub record: RunRecord,
    /// Final prophet state (snapshot/heads evolve during the run).
    pub prophet: Option<Prophet>,
    pub weights: DomainWeights,
}

/// A failed run, keeping whatever was recorded before the failure.
#[derive(Debug, thiserror::Error)]
#[error("training failed: {error}")]
pub struct TrainFailure {
    pub error: CoreError,
    pub record: RunRecord,
}

/// FNV-1a over the parameter bit patterns, layer order.
pub fn param_hash(model: &MlpModel) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for v in model.flatten_params() {
        for byte in v.to_bits().to_le_bytes() {
            h ^= byte as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }
    h
}

fn flatten_grads(tape: &Tape, params: &[(NodeId, NodeId)], count: usize) -> Vec<f64> {
    let mut flat = Vec::with_capacity(count);
    for &(w, b) in params {
        for id in [w, b] {
            match tape.grad(id) {
                Some(g) => flat.extend_from_slice(g.as_slice()),
                None => flat.extend(core::iter::repeat(0.0).take(tape.value(id).len())),
            }
        }
    }
    flat
}

/// Run the full loop: per iteration, visit domains in fixed order — sample
/// a batch, query the prophet, build the composite loss — then update the
/// contribution weights, form the weighted total, and take one step. Epoch
/// boundaries advance the prophet and decay the balancing momentum. On
/// failure the partial record is returned alongside the error.
pub fn run_training(
    plan: &TrainPlan,
    data: &RunData,
    seed: u64,
) -> core::result::Result<RunOutput, TrainFailure> {
    let mut record = RunRecord::default();
    match run_loop(plan, data, seed, &mut record) {
        Ok((model, prophet, weights)) => Ok(RunOutput { model, record, prophet, weights }),
        Err(error) => Err(TrainFailure { error, record }),
    }
}

fn run_loop(
    plan: &TrainPlan,
    data: &RunData,
    seed: u64,
    record: &mut RunRecord,
) -> Result<(MlpModel, Option<Prophet>, DomainWeights)> {
    plan.validate(data)?;
    let train = data.train;
    let m_domains = train.domains.len();
    let dims = plan.model_dims(train.feature_dim, train.classes);
    let mut model = MlpModel::new(&dims, seed)?;
    let mut optimizer = SgdOptimizer::new(plan.optim.clone(), plan.iterations)?;
    let mut samplers: Vec<BatchSampler> =
        train.domains.iter().map(|d| BatchSampler::new(d, seed)).collect();
    let mut weights = DomainWeights::uniform(m_domains, plan.momentum.initial);
    let mut prophet: Option<Prophet> = match &plan.prophet {
        Some(spec) => Some(spec.build(
            dims[dims.len() - 2],
            train.classes,
            m_domains,
            &plan.optim,
            plan.iterations,
            seed,
        )?),
        None => None,
    };
    let dcb_active = plan.method == Method::Dtcs && plan.dcb;
    let total_epochs = plan.iterations.div_ceil(plan.epoch_len);
    let momentum_milestones: Vec<usize> = plan
        .momentum
        .milestones
        .iter()
        .map(|&f| libm::round(f * total_epochs as f64) as usize)
        .collect();

    for iter in 0..plan.iterations {
        let epoch = iter / plan.epoch_len;
        if iter % plan.epoch_len == 0 {
            if iter > 0 {
                if let Some(p) = prophet.as_mut() {
                    p.advance_epoch(&model);
                }
            }
            let passed = momentum_milestones.iter().filter(|&&e| epoch >= e).count();
            weights.momentum = plan.momentum.initial
                * libm::pow(plan.momentum.decay_factor, passed as f64);
        }

        let mut tape = Tape::new();
        let params = model.register_params(&mut tape);
        let mut loss_nodes = Vec::with_capacity(m_domains);
        let mut ce_nodes = Vec::with_capacity(m_domains);
        let mut breakdowns = Vec::with_capacity(m_domains);
        let mut head_terms: Vec<(NodeId, f64)> = Vec::new();
        let mut head_param_sets: Vec<Vec<(NodeId, NodeId)>> = Vec::new();

        for i in 0..m_domains {
            let batch = sample_batch(&mut samplers[i], &train.domains[i], i, plan.batch_size)?;
            let x = tape.leaf(batch.x.clone(), false);
            let pass = model.forward_with(&mut tape, x, &params)?;
            let targets: Option<Mat> = match prophet.as_ref() {
                Some(p) if plan.alpha < 1.0 && p.ready() => {
                    Some(p.soft_targets(&batch, &model)?.logits)
                }
                _ => None,
            };
            let alpha_eff = if targets.is_some() { plan.alpha } else { 1.0 };
            let (node, ce_node, breakdown) = domain_loss(
                &mut tape,
                pass.logits,
                &batch.y,
                targets.as_ref(),
                alpha_eff,
                plan.tau,
                plan.kl_order,
            )?;
            loss_nodes.push(node);
            ce_nodes.push(ce_node);
            breakdowns.push(breakdown);
            if let Some(Prophet::MultiHead { heads, head_loss_weight, .. }) = prophet.as_ref() {
                let head_params = heads[i].register_params(&mut tape);
                let head_pass = heads[i].forward_with(&mut tape, pass.features, &head_params)?;
                let head_ce = tape.mean_cross_entropy(head_pass.logits, &batch.y)?;
                head_terms.push((head_ce, head_loss_weight / m_domains as f64));
                head_param_sets.push(head_params);
            }
        }

        let losses: Vec<f64> = breakdowns.iter().map(|b| b.composite).collect();
        if dcb_active {
            dcb_update(&mut weights, &losses)?;
        }
        let total = weighted_total_loss(&mut tape, &loss_nodes, &weights.weights)?;
        let total_value = tape.value(total).get(0, 0);
        if !total_value.is_finite() {
            return Err(CoreError::Numeric(alloc::format!(
                "total loss {total_value} at iteration {iter}"
            )));
        }
        let objective = if head_terms.is_empty() {
            total
        } else {
            let mut terms = vec![(total, 1.0)];
            terms.extend_from_slice(&head_terms);
            tape.weighted_sum(&terms)?
        };

        // The sign-agreement combiner consumes the per-domain training
        // gradients (composite nodes). Conflict diagnostics instead
        // differentiate the bare task loss of each domain: that keeps the
        // measured quantity identical across training methods, so ERM and
        // soft-target runs are directly comparable.
        let step_grads = if plan.method == Method::AgrSum {
            let mut grads = Vec::with_capacity(m_domains);
            for &node in &loss_nodes {
                tape.backward(node)?;
                grads.push(flatten_grads(&tape, &params, model.param_count()));
            }
            Some(grads)
        } else {
            None
        };
        let conflict = if plan.record_conflict {
            let mut grads = Vec::with_capacity(m_domains);
            for &node in &ce_nodes {
                tape.backward(node)?;
                grads.push(flatten_grads(&tape, &params, model.param_count()));
            }
            Some(conflict_stats(&grads, iter)?)
        } else {
            None
        };

        let lr = optimizer.effective_lr();
        match plan.method {
            Method::AgrSum => {
                agr_sum_step(step_grads.as_ref().unwrap(), &mut model, &mut optimizer)?;
            }
            Method::Erm | Method::Dtcs => {
                tape.backward(objective)?;
                optimizer.sgd_step(&mut model, &tape, &params)?;
                if let Some(Prophet::MultiHead { heads, optimizers, .. }) = prophet.as_mut() {
                    for (i, head_params) in head_param_sets.iter().enumerate() {
                        optimizers[i].sgd_step(&mut heads[i], &tape, head_params)?;
                    }
                }
            }
        }

        record.iterations.push(IterationRecord {
            iter,
            epoch,
            domain_losses: breakdowns,
            weights: weights.weights.clone(),
            total_loss: total_value,
            lr,
            m: if dcb_active { weights.momentum } else { 0.0 },
            conflict,
            param_hash: plan.record_param_hash.then(|| param_hash(&model)),
        });

        // Catch the explosion at the step that produced it: downstream the
        // probability clamp and dead ReLUs can keep the recorded loss
        // finite long after the parameters are garbage.
        if !params_finite(&model) {
            return Err(CoreError::Numeric(alloc::format!(
                "non-finite parameter after the step at iteration {iter}"
            )));
        }

        if (iter + 1) % plan.epoch_len == 0 || iter + 1 == plan.iterations {
            record.evals.push(eval_snapshot(&model, data, epoch, iter)?);
        }
    }

    Ok((model, prophet, weights))
}

fn params_finite(model: &MlpModel) -> bool {
    model
        .weights
        .iter()
        .chain(model.biases.iter())
        .all(|m| m.as_slice().iter().all(|v| v.is_finite()))
}

fn eval_snapshot(model: &MlpModel, data: &RunData, epoch: usize, iter: usize) -> Result<EvalRecord> {
    let mut source_val_acc = Vec::with_capacity(data.val.domains.len());
    let mut correct_weighted = 0.0;
    let mut count = 0usize;
    for d in &data.val.domains {
        let acc = evaluate(model, &d.xs, &d.ys)?;
        correct_weighted += acc * d.len() as f64;
        count += d.len();
        source_val_acc.push(acc);
    }
    let pooled_val_acc = correct_weighted / count as f64;
    let target_acc = match data.target {
        Some(t) => Some(evaluate(model, &t.xs, &t.ys)?),
        None => None,
    };
    Ok(EvalRecord { epoch, iter, source_val_acc, pooled_val_acc, target_acc })
}
