//! Multilayer perceptron with rectifier hidden layers and identity output.
//! A model with zero hidden layers is a single affine map, which is exactly
//! what the per-domain linear classifier heads are.

use alloc::vec::Vec;

use crate::error::{CoreError, Result};
use crate::mat::Mat;
use crate::rng::{stream, STREAM_INIT};
use crate::tape::{NodeId, Tape};
use rand::Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    /// Layer widths, input first, class count last.
    pub dims: Vec<usize>,
    /// One d_in×d_out matrix per layer.
    pub weights: Vec<Mat>,
    /// One 1×d_out row per layer.
    pub biases: Vec<Mat>,
}

/// Node ids of one forward pass: the logits, the parameter leaves in layer
/// order, and the representation entering the final layer (the feature
/// extractor output the linear heads consume).
#[derive(Debug, Clone)]
pub struct ForwardPass {
    pub logits: NodeId,
    pub params: Vec<(NodeId, NodeId)>,
    pub features: NodeId,
}

impl MlpModel {
    /// Uniform init in ±√(6/(d_in+d_out)) per layer, bias 0, drawn from a
    /// stream keyed by (seed, layer) so init is independent of any other
    /// randomness consumption.
    pub fn new(dims: &[usize], seed: u64) -> Result<Self> {
        validate_dims(dims)?;
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for layer in 0..dims.len() - 1 {
            let (d_in, d_out) = (dims[layer], dims[layer + 1]);
            let limit = libm::sqrt(6.0 / (d_in + d_out) as f64);
            let mut rng = stream(seed, &[STREAM_INIT, layer as u64]);
            let mut w = Mat::zeros(d_in, d_out);
            for v in w.as_mut_slice() {
                *v = rng.random_range(-limit..limit);
            }
            weights.push(w);
            biases.push(Mat::zeros(1, d_out));
        }
        Ok(MlpModel { dims: dims.to_vec(), weights, biases })
    }

    /// All-zero parameters; useful as a degenerate case and for head setups.
    pub fn zeroed(dims: &[usize]) -> Result<Self> {
        validate_dims(dims)?;
        let weights =
            (0..dims.len() - 1).map(|l| Mat::zeros(dims[l], dims[l + 1])).collect::<Vec<_>>();
        let biases = (0..dims.len() - 1).map(|l| Mat::zeros(1, dims[l + 1])).collect::<Vec<_>>();
        Ok(MlpModel { dims: dims.to_vec(), weights, biases })
    }

    pub fn layer_count(&self) -> usize {
        self.weights.len()
    }

    pub fn input_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.dims.last().unwrap()
    }

    /// Width of the representation entering the final layer.
    pub fn feature_dim(&self) -> usize {
        self.dims[self.dims.len() - 2]
    }

    pub fn param_count(&self) -> usize {
        self.dims.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    /// Register every parameter matrix as a gradient leaf, layer order.
    pub fn register_params(&self, tape: &mut Tape) -> Vec<(NodeId, NodeId)> {
        (0..self.layer_count())
            .map(|layer| {
                let w = tape.leaf(self.weights[layer].clone(), true);
                let b = tape.leaf(self.biases[layer].clone(), true);
                (w, b)
            })
            .collect()
    }

    /// Register parameters as gradient leaves and build the forward graph.
    pub fn forward(&self, tape: &mut Tape, x: NodeId) -> Result<ForwardPass> {
        let params = self.register_params(tape);
        self.forward_with(tape, x, &params)
    }

    /// Build the forward graph over previously registered parameter leaves,
    /// so several batches in one tape share a single parameter set and their
    /// gradients accumulate there.
    pub fn forward_with(
        &self,
        tape: &mut Tape,
        x: NodeId,
        params: &[(NodeId, NodeId)],
    ) -> Result<ForwardPass> {
        if tape.value(x).cols() != self.input_dim() {
            return Err(CoreError::ShapeMismatch(alloc::format!(
                "input width {} against first layer {}",
                tape.value(x).cols(),
                self.input_dim()
            )));
        }
        if params.len() != self.layer_count() {
            return Err(CoreError::ShapeMismatch(alloc::format!(
                "{} parameter pairs against {} layers",
                params.len(),
                self.layer_count()
            )));
        }
        let mut h = x;
        let mut features = x;
        for (layer, &(w, b)) in params.iter().enumerate() {
            let z = tape.matmul(h, w)?;
            let z = tape.add_bias(z, b)?;
            h = if layer + 1 < self.layer_count() { tape.relu(z) } else { z };
            if layer + 1 < self.layer_count() {
                features = h;
            }
        }
        Ok(ForwardPass { logits: h, params: params.to_vec(), features })
    }

    /// Plain inference without a tape.
    pub fn apply(&self, x: &Mat) -> Result<Mat> {
        let features = self.apply_features(x)?;
        let last = self.layer_count() - 1;
        affine(&features, &self.weights[last], &self.biases[last])
    }

    /// Inference through all hidden layers only.
    pub fn apply_features(&self, x: &Mat) -> Result<Mat> {
        if x.cols() != self.input_dim() {
            return Err(CoreError::ShapeMismatch(alloc::format!(
                "input width {} against first layer {}",
                x.cols(),
                self.input_dim()
            )));
        }
        let mut h = x.clone();
        for layer in 0..self.layer_count() - 1 {
            h = affine(&h, &self.weights[layer], &self.biases[layer])?;
            for v in h.as_mut_slice() {
                if *v <= 0.0 {
                    *v = 0.0;
                }
            }
        }
        Ok(h)
    }

    /// Parameters in layer order, weights row-major then bias, concatenated.
    pub fn flatten_params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for layer in 0..self.layer_count() {
            out.extend_from_slice(self.weights[layer].as_slice());
            out.extend_from_slice(self.biases[layer].as_slice());
        }
        out
    }

    pub fn set_from_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.param_count() {
            return Err(CoreError::ShapeMismatch(alloc::format!(
                "{} values for {} parameters",
                flat.len(),
                self.param_count()
            )));
        }
        let mut at = 0;
        for layer in 0..self.layer_count() {
            let w = self.weights[layer].as_mut_slice();
            w.copy_from_slice(&flat[at..at + w.len()]);
            at += w.len();
            let b = self.biases[layer].as_mut_slice();
            b.copy_from_slice(&flat[at..at + b.len()]);
            at += b.len();
        }
        Ok(())
    }
}

fn affine(x: &Mat, w: &Mat, b: &Mat) -> Result<Mat> {
    let mut out = x.matmul(w)?;
    for i in 0..out.rows() {
        for (o, &bj) in out.row_mut(i).iter_mut().zip(b.row(0)) {
            *o += bj;
        }
    }
    Ok(out)
}

fn validate_dims(dims: &[usize]) -> Result<()> {
    if dims.len() < 2 {
        return Err(CoreError::InvalidArgument("a model needs at least one layer".into()));
    }
    if dims.iter().any(|&d| d == 0) {
        return Err(CoreError::InvalidArgument("zero-width layer".into()));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_model_maps_everything_to_zero() {
        let model = MlpModel::zeroed(&[3, 4, 2]).unwrap();
        let x = Mat::from_vec(2, 3, vec![1.0, -2.0, 3.0, 0.5, 0.0, -1.0]).unwrap();
        let y = model.apply(&x).unwrap();
        assert_eq!(y.as_slice(), &[0.0; 4]);
    }

    #[test]
    fn identity_single_layer() {
        let mut model = MlpModel::zeroed(&[2, 2]).unwrap();
        model.weights[0].set(0, 0, 1.0);
        model.weights[0].set(1, 1, 1.0);
        let x = Mat::from_vec(2, 2, vec![3.0, -1.5, 0.25, 9.0]).unwrap();
        assert_eq!(model.apply(&x).unwrap(), x);
    }

    #[test]
    fn hand_evaluated_two_layer_net() {
        // w1 = 2, b1 = −1, rectifier, w2 = 3, b2 = 0; input 1 → 3·max(0, 2·1−1) = 3
        let mut model = MlpModel::zeroed(&[1, 1, 1]).unwrap();
        model.weights[0].set(0, 0, 2.0);
        model.biases[0].set(0, 0, -1.0);
        model.weights[1].set(0, 0, 3.0);
        let y = model.apply(&Mat::scalar(1.0)).unwrap();
        assert_eq!(y.get(0, 0), 3.0);
        // and the rectifier clips: input −1 → 3·max(0, −3) = 0
        let y = model.apply(&Mat::scalar(-1.0)).unwrap();
        assert_eq!(y.get(0, 0), 0.0);
    }

    #[test]
    fn tape_forward_matches_pure_apply() {
        let model = MlpModel::new(&[3, 8, 5, 4], 11).unwrap();
        let x = Mat::from_vec(6, 3, (0..18).map(|i| (i as f64) * 0.37 - 3.0).collect()).unwrap();
        let mut tape = Tape::new();
        let xid = tape.leaf(x.clone(), false);
        let pass = model.forward(&mut tape, xid).unwrap();
        assert_eq!(tape.value(pass.logits), &model.apply(&x).unwrap());
        assert_eq!(tape.value(pass.features), &model.apply_features(&x).unwrap());
        assert_eq!(pass.params.len(), 3);
    }

    #[test]
    fn init_is_seed_deterministic_and_bounded() {
        let a = MlpModel::new(&[2, 64, 64, 4], 7).unwrap();
        let b = MlpModel::new(&[2, 64, 64, 4], 7).unwrap();
        let c = MlpModel::new(&[2, 64, 64, 4], 8).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_eq!(a.param_count(), 2 * 64 + 64 + 64 * 64 + 64 + 64 * 4 + 4);
        let limit0 = libm::sqrt(6.0 / (2.0 + 64.0));
        assert!(a.weights[0].as_slice().iter().all(|v| v.abs() < limit0));
        assert!(a.biases.iter().all(|b| b.as_slice().iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn flatten_round_trip() {
        let model = MlpModel::new(&[4, 6, 3], 5).unwrap();
        let flat = model.flatten_params();
        assert_eq!(flat.len(), model.param_count());
        let mut copy = MlpModel::zeroed(&[4, 6, 3]).unwrap();
        copy.set_from_flat(&flat).unwrap();
        assert_eq!(copy, model);
    }
}
