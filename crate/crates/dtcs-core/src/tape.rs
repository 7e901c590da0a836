//! Define-by-run reverse-mode automatic differentiation on dense matrices.
//!
//! A `Tape` is rebuilt for every forward pass. Nodes are appended in
//! topological order (an op can only reference already-existing nodes), so
//! the backward pass is a single reverse sweep. Gradients are accumulated
//! only for nodes actually reached from the loss, which keeps per-domain
//! backward passes cheap when several loss subgraphs share one tape.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{CoreError, Result};
use crate::loss::{clamp_prob, softmax_rows, KlOrder};
use crate::mat::Mat;

pub type NodeId = usize;

#[derive(Debug, Clone)]
enum Op {
    Leaf { requires_grad: bool },
    MatMul { a: NodeId, b: NodeId },
    /// Broadcast a 1×C bias row over every row of `x`.
    AddBias { x: NodeId, b: NodeId },
    Relu { x: NodeId },
    /// Mean over the batch of −ln softmax(logits)[label], with the
    /// probability clamped below before the log.
    MeanCrossEntropy { logits: NodeId, labels: Vec<usize> },
    /// Mean over the batch of KL between tempered softmaxes of `logits` and
    /// the constant `targets`; `order` picks which side is the target
    /// distribution. `targets` is a plain value, never a node: soft targets
    /// are detached by construction.
    MeanTemperedKl { logits: NodeId, targets: Mat, tau: f64, order: KlOrder },
    /// Σ wᵢ·termᵢ over scalar nodes, weights treated as constants.
    WeightedSum { terms: Vec<(NodeId, f64)> },
}

#[derive(Debug, Clone)]
struct Node {
    op: Op,
    value: Mat,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    grads: Vec<Option<Mat>>,
}

impl Tape {
    pub fn new() -> Self {
        Tape { nodes: Vec::new(), grads: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, op: Op, value: Mat) -> NodeId {
        self.nodes.push(Node { op, value });
        self.nodes.len() - 1
    }

    pub fn leaf(&mut self, value: Mat, requires_grad: bool) -> NodeId {
        self.push(Op::Leaf { requires_grad }, value)
    }

    pub fn value(&self, id: NodeId) -> &Mat {
        &self.nodes[id].value
    }

    /// Value of a 1×1 node.
    pub fn scalar(&self, id: NodeId) -> Result<f64> {
        let v = self.value(id);
        if v.shape() != (1, 1) {
            return Err(CoreError::ShapeMismatch(alloc::format!(
                "expected scalar node, got {}x{}",
                v.rows(),
                v.cols()
            )));
        }
        Ok(v.get(0, 0))
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let value = self.value(a).matmul(self.value(b))?;
        Ok(self.push(Op::MatMul { a, b }, value))
    }

    pub fn add_bias(&mut self, x: NodeId, b: NodeId) -> Result<NodeId> {
        let (xv, bv) = (self.value(x), self.value(b));
        if bv.rows() != 1 || bv.cols() != xv.cols() {
            return Err(CoreError::ShapeMismatch(alloc::format!(
                "bias {}x{} against activations {}x{}",
                bv.rows(),
                bv.cols(),
                xv.rows(),
                xv.cols()
            )));
        }
        let mut value = xv.clone();
        for i in 0..value.rows() {
            for (o, &bj) in value.row_mut(i).iter_mut().zip(bv.row(0)) {
                *o += bj;
            }
        }
        Ok(self.push(Op::AddBias { x, b }, value))
    }

    pub fn relu(&mut self, x: NodeId) -> NodeId {
        let mut value = self.value(x).clone();
        for v in value.as_mut_slice() {
            if *v <= 0.0 {
                *v = 0.0;
            }
        }
        self.push(Op::Relu { x }, value)
    }

    pub fn mean_cross_entropy(&mut self, logits: NodeId, labels: &[usize]) -> Result<NodeId> {
        let lv = self.value(logits);
        if labels.len() != lv.rows() || lv.rows() == 0 {
            return Err(CoreError::ShapeMismatch(alloc::format!(
                "{} labels against {} logit rows",
                labels.len(),
                lv.rows()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= lv.cols()) {
            return Err(CoreError::InvalidArgument(alloc::format!(
                "label {} out of range for {} classes",
                bad,
                lv.cols()
            )));
        }
        let p = softmax_rows(lv, 1.0);
        let mut acc = 0.0;
        for (i, &label) in labels.iter().enumerate() {
            acc -= libm::log(clamp_prob(p.get(i, label)));
        }
        let value = Mat::scalar(acc / labels.len() as f64);
        Ok(self.push(Op::MeanCrossEntropy { logits, labels: labels.to_vec() }, value))
    }

    pub fn mean_tempered_kl(
        &mut self,
        logits: NodeId,
        targets: &Mat,
        tau: f64,
        order: KlOrder,
    ) -> Result<NodeId> {
        let lv = self.value(logits);
        if targets.shape() != lv.shape() {
            return Err(CoreError::ShapeMismatch(alloc::format!(
                "target logits {}x{} against hypothesis logits {}x{}",
                targets.rows(),
                targets.cols(),
                lv.rows(),
                lv.cols()
            )));
        }
        if !(tau > 0.0) || lv.rows() == 0 {
            return Err(CoreError::InvalidArgument(alloc::format!(
                "temperature {tau} or empty batch"
            )));
        }
        let p = softmax_rows(lv, tau);
        let t = softmax_rows(targets, tau);
        let batch = lv.rows();
        let mut acc = 0.0;
        for i in 0..batch {
            acc += match order {
                KlOrder::TeacherFirst => kl_row(t.row(i), p.row(i)),
                KlOrder::PredictionFirst => kl_row(p.row(i), t.row(i)),
            };
        }
        let value = Mat::scalar(acc / batch as f64);
        Ok(self.push(Op::MeanTemperedKl { logits, targets: targets.clone(), tau, order }, value))
    }

    pub fn weighted_sum(&mut self, terms: &[(NodeId, f64)]) -> Result<NodeId> {
        if terms.is_empty() {
            return Err(CoreError::Empty("weighted sum of no terms".into()));
        }
        let mut acc = 0.0;
        for &(id, w) in terms {
            acc += w * self.scalar(id)?;
        }
        Ok(self.push(Op::WeightedSum { terms: terms.to_vec() }, Mat::scalar(acc)))
    }

    /// Reverse sweep from a scalar loss node. Replaces any previous gradients.
    pub fn backward(&mut self, loss: NodeId) -> Result<()> {
        if loss >= self.nodes.len() {
            return Err(CoreError::InvalidArgument("loss node not on this tape".into()));
        }
        let shape = self.nodes[loss].value.shape();
        if shape != (1, 1) {
            return Err(CoreError::NonScalarLoss { rows: shape.0, cols: shape.1 });
        }
        self.grads = vec![None; self.nodes.len()];
        self.grads[loss] = Some(Mat::scalar(1.0));

        for id in (0..=loss).rev() {
            let g = match self.grads[id].take() {
                Some(g) => g,
                None => continue,
            };
            let nodes = &self.nodes;
            let grads = &mut self.grads;
            match &nodes[id].op {
                Op::Leaf { .. } => {}
                Op::MatMul { a, b } => {
                    let da = g.matmul_nt(&nodes[*b].value)?;
                    let db = nodes[*a].value.matmul_tn(&g)?;
                    accumulate(grads, *a, da)?;
                    accumulate(grads, *b, db)?;
                }
                Op::AddBias { x, b } => {
                    let mut db = Mat::zeros(1, g.cols());
                    for i in 0..g.rows() {
                        for (o, &gj) in db.row_mut(0).iter_mut().zip(g.row(i)) {
                            *o += gj;
                        }
                    }
                    accumulate(grads, *b, db)?;
                    accumulate(grads, *x, g.clone())?;
                }
                Op::Relu { x } => {
                    let mut dx = g.clone();
                    for (d, &xv) in dx.as_mut_slice().iter_mut().zip(nodes[*x].value.as_slice()) {
                        if xv <= 0.0 {
                            *d = 0.0;
                        }
                    }
                    accumulate(grads, *x, dx)?;
                }
                Op::MeanCrossEntropy { logits, labels } => {
                    let gs = g.get(0, 0);
                    let lv = &nodes[*logits].value;
                    let mut dl = softmax_rows(lv, 1.0);
                    let scale = gs / labels.len() as f64;
                    for (i, &label) in labels.iter().enumerate() {
                        let row = dl.row_mut(i);
                        row[label] -= 1.0;
                        for v in row {
                            *v *= scale;
                        }
                    }
                    accumulate(grads, *logits, dl)?;
                }
                Op::MeanTemperedKl { logits, targets, tau, order } => {
                    let gs = g.get(0, 0);
                    let lv = &nodes[*logits].value;
                    let p = softmax_rows(lv, *tau);
                    let t = softmax_rows(targets, *tau);
                    let scale = gs / (lv.rows() as f64 * *tau);
                    let mut dl = Mat::zeros(lv.rows(), lv.cols());
                    for i in 0..lv.rows() {
                        let (pr, tr) = (p.row(i), t.row(i));
                        let out = dl.row_mut(i);
                        match order {
                            KlOrder::TeacherFirst => {
                                // d/dz mean KL(t ‖ softmax(z/τ)) = (p − t)/(bτ)
                                for ((o, &pj), &tj) in out.iter_mut().zip(pr).zip(tr) {
                                    *o = scale * (pj - tj);
                                }
                            }
                            KlOrder::PredictionFirst => {
                                // d/dz mean KL(softmax(z/τ) ‖ t)
                                //   = p_j·(ln(p_j/t̂_j) − KL_row)/(bτ)
                                let klrow = kl_row(pr, tr);
                                for ((o, &pj), &tj) in out.iter_mut().zip(pr).zip(tr) {
                                    *o = if pj > 0.0 {
                                        scale * pj * (libm::log(pj / clamp_prob(tj)) - klrow)
                                    } else {
                                        0.0
                                    };
                                }
                            }
                        }
                    }
                    accumulate(grads, *logits, dl)?;
                }
                Op::WeightedSum { terms } => {
                    let gs = g.get(0, 0);
                    for &(tid, w) in terms {
                        accumulate(grads, tid, Mat::scalar(w * gs))?;
                    }
                }
            }
            self.grads[id] = Some(g);
        }
        Ok(())
    }

    /// Gradient of the last backward pass for `id`; `None` if the node was
    /// not reached (or no backward has run).
    pub fn grad(&self, id: NodeId) -> Option<&Mat> {
        self.grads.get(id).and_then(|g| g.as_ref())
    }

    /// True when the node is a gradient-carrying leaf.
    pub fn is_param(&self, id: NodeId) -> bool {
        matches!(self.nodes[id].op, Op::Leaf { requires_grad: true })
    }
}

fn accumulate(grads: &mut [Option<Mat>], id: NodeId, delta: Mat) -> Result<()> {
    match &mut grads[id] {
        Some(g) => g.add_assign(&delta),
        slot @ None => {
            *slot = Some(delta);
            Ok(())
        }
    }
}

/// Σ a_k ln(a_k/b_k) for one row, with 0·ln(0/·) := 0 and b clamped below.
fn kl_row(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (&ak, &bk) in a.iter().zip(b) {
        if ak > 0.0 {
            acc += ak * libm::log(ak / clamp_prob(bk));
        }
    }
    acc
}
