//! MLP feature extractor and linear classification head.

pub mod checkpoint;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::numerics::{DenseMatrix, DiffGraph, NodeId};

pub use checkpoint::Checkpoint;

/// Affine layer `x ↦ x·W + b` with `W: in x out`, `b: 1 x out`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub weight: DenseMatrix,
    pub bias: DenseMatrix,
}

impl DenseLayer {
    fn he_uniform(fan_in: usize, fan_out: usize, rng: &mut ChaCha8Rng) -> Self {
        // U(-a, a) has std a/√3, so a = √(6/fan_in) gives std √(2/fan_in).
        let bound = (6.0 / fan_in as f64).sqrt();
        let weight = DenseMatrix::from_fn(fan_in, fan_out, |_, _| rng.random_range(-bound..bound));
        Self {
            weight,
            bias: DenseMatrix::zeros(1, fan_out),
        }
    }

    pub fn in_dim(&self) -> usize {
        self.weight.rows()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.cols()
    }

    fn forward(&self, x: &DenseMatrix) -> Result<DenseMatrix> {
        let mut z = x.matmul(&self.weight)?;
        for r in 0..z.rows() {
            for (v, b) in z.row_mut(r).iter_mut().zip(self.bias.data()) {
                *v += b;
            }
        }
        Ok(z)
    }
}

/// Stack of affine layers with ReLU between them (not after the last), so
/// the embedding is unconstrained in sign.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpExtractor {
    input_dim: usize,
    layers: Vec<DenseLayer>,
}

impl MlpExtractor {
    pub fn from_layers(input_dim: usize, layers: Vec<DenseLayer>) -> Result<Self> {
        let mut d = input_dim;
        for (i, l) in layers.iter().enumerate() {
            if l.in_dim() != d || l.bias.shape() != (1, l.out_dim()) {
                return Err(Error::Shape(format!(
                    "layer {i} does not chain from width {d}"
                )));
            }
            d = l.out_dim();
        }
        Ok(Self { input_dim, layers })
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    /// Embedding dimension `P`.
    pub fn output_dim(&self) -> usize {
        self.layers
            .last()
            .map_or(self.input_dim, DenseLayer::out_dim)
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    pub fn widths(&self) -> Vec<usize> {
        std::iter::once(self.input_dim)
            .chain(self.layers.iter().map(DenseLayer::out_dim))
            .collect()
    }

    pub fn params(&self) -> Vec<&DenseMatrix> {
        self.layers
            .iter()
            .flat_map(|l| [&l.weight, &l.bias])
            .collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut DenseMatrix> {
        self.layers
            .iter_mut()
            .flat_map(|l| [&mut l.weight, &mut l.bias])
            .collect()
    }

    fn check_input(&self, cols: usize) -> Result<()> {
        if cols != self.input_dim {
            return Err(Error::Shape(format!(
                "extractor expects {} input columns, got {cols}",
                self.input_dim
            )));
        }
        Ok(())
    }

    /// `H = g(X)`, one row per example.
    pub fn forward_features(&self, x: &DenseMatrix) -> Result<DenseMatrix> {
        self.check_input(x.cols())?;
        let mut h = x.clone();
        let last = self.layers.len().saturating_sub(1);
        for (i, layer) in self.layers.iter().enumerate() {
            h = layer.forward(&h)?;
            if i < last {
                h.data_mut().iter_mut().for_each(|v| *v = v.max(0.0));
            }
        }
        Ok(h)
    }

    /// Records the forward pass on `g`. Returns the feature node and the
    /// parameter leaves in [`MlpExtractor::params`] order.
    pub fn forward_graph(&self, g: &mut DiffGraph, x: NodeId) -> Result<(NodeId, Vec<NodeId>)> {
        self.check_input(g.value(x).cols())?;
        let mut h = x;
        let mut params = Vec::with_capacity(2 * self.layers.len());
        let last = self.layers.len().saturating_sub(1);
        for (i, layer) in self.layers.iter().enumerate() {
            let w = g.param(layer.weight.clone());
            let b = g.param(layer.bias.clone());
            params.extend([w, b]);
            let z = g.matmul(h, w)?;
            h = g.add_row(z, b)?;
            if i < last {
                h = g.relu(h)?;
            }
        }
        Ok((h, params))
    }
}

/// Linear head `logits = H·W + 1·bᵀ` with `W: P x K`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearClassifier {
    pub weight: DenseMatrix,
    pub bias: DenseMatrix,
}

impl LinearClassifier {
    pub fn new(weight: DenseMatrix, bias: Vec<f64>) -> Result<Self> {
        if bias.len() != weight.cols() {
            return Err(Error::Shape(format!(
                "bias of length {} for {} classes",
                bias.len(),
                weight.cols()
            )));
        }
        let bias = DenseMatrix::from_vec(1, weight.cols(), bias)?;
        Ok(Self { weight, bias })
    }

    pub fn init(feature_dim: usize, num_classes: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let l = DenseLayer::he_uniform(feature_dim, num_classes, &mut rng);
        Self {
            weight: l.weight,
            bias: l.bias,
        }
    }

    pub fn feature_dim(&self) -> usize {
        self.weight.rows()
    }

    pub fn num_classes(&self) -> usize {
        self.weight.cols()
    }

    /// Column `k` of `W`.
    pub fn class_weight(&self, k: usize) -> Vec<f64> {
        self.weight.col(k)
    }

    pub fn params_mut(&mut self) -> Vec<&mut DenseMatrix> {
        vec![&mut self.weight, &mut self.bias]
    }

    pub fn forward_logits(&self, h: &DenseMatrix) -> Result<DenseMatrix> {
        if h.cols() != self.feature_dim() {
            return Err(Error::Shape(format!(
                "classifier expects {} feature columns, got {}",
                self.feature_dim(),
                h.cols()
            )));
        }
        DenseLayer {
            weight: self.weight.clone(),
            bias: self.bias.clone(),
        }
        .forward(h)
    }

    /// Returns the logits node and `[W, b]` leaves.
    pub fn forward_graph(&self, g: &mut DiffGraph, h: NodeId) -> Result<(NodeId, [NodeId; 2])> {
        if g.value(h).cols() != self.feature_dim() {
            return Err(Error::Shape(format!(
                "classifier expects {} feature columns, got {}",
                self.feature_dim(),
                g.value(h).cols()
            )));
        }
        let w = g.param(self.weight.clone());
        let b = g.param(self.bias.clone());
        let z = g.matmul(h, w)?;
        Ok((g.add_row(z, b)?, [w, b]))
    }

    /// Row-wise argmax of the logits, ties to the smallest class index.
    pub fn predict(&self, h: &DenseMatrix) -> Result<Vec<usize>> {
        let z = self.forward_logits(h)?;
        Ok((0..z.rows()).map(|i| argmax(z.row(i))).collect())
    }
}

pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// `widths = [D, hidden…, P, K]`: the extractor maps `D → … → P`, the
/// head maps `P → K`. Weights are He-uniform, biases zero.
pub fn init_params(widths: &[usize], seed: u64) -> Result<(MlpExtractor, LinearClassifier)> {
    if widths.len() < 2 {
        return Err(Error::InvalidInput(
            "need at least input and class widths".into(),
        ));
    }
    if widths.contains(&0) {
        return Err(Error::InvalidInput("zero-width layer".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = widths.len();
    let layers = widths[..n - 1]
        .windows(2)
        .map(|w| DenseLayer::he_uniform(w[0], w[1], &mut rng))
        .collect();
    let extractor = MlpExtractor::from_layers(widths[0], layers)?;
    let head = DenseLayer::he_uniform(widths[n - 2], widths[n - 1], &mut rng);
    Ok((
        extractor,
        LinearClassifier {
            weight: head.weight,
            bias: head.bias,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::grad_check;

    #[test]
    fn biases_start_at_zero() {
        let (ext, clf) = init_params(&[4, 8, 3], 42).unwrap();
        assert_eq!(clf.bias.data(), &[0.0, 0.0, 0.0]);
        assert!(ext.layers()[0].bias.data().iter().all(|&b| b == 0.0));
        assert_eq!(ext.output_dim(), 8);
        assert_eq!(clf.num_classes(), 3);
    }

    #[test]
    fn init_is_deterministic() {
        assert_eq!(
            init_params(&[5, 7, 6, 3], 9).unwrap(),
            init_params(&[5, 7, 6, 3], 9).unwrap()
        );
        assert_ne!(
            init_params(&[5, 7, 3], 9).unwrap(),
            init_params(&[5, 7, 3], 10).unwrap()
        );
    }

    #[test]
    fn weight_std_matches_fan_in_scaling() {
        let (ext, clf) = init_params(&[32, 64, 64], 0).unwrap();
        for (w, fan_in) in [(&ext.layers()[0].weight, 32.0), (&clf.weight, 64.0)] {
            let n = w.data().len() as f64;
            let mean = w.sum() / n;
            let std = (w.data().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
            let target = (2.0f64 / fan_in).sqrt();
            assert!((std / target - 1.0).abs() < 0.2, "{std} vs {target}");
        }
    }

    #[test]
    fn zero_weights_zero_input_give_zero_features() {
        let (mut ext, _) = init_params(&[3, 4, 5, 2], 1).unwrap();
        ext.params_mut()
            .into_iter()
            .for_each(|p| p.data_mut().fill(0.0));
        let h = ext.forward_features(&DenseMatrix::zeros(6, 3)).unwrap();
        assert_eq!(h, DenseMatrix::zeros(6, 5));
    }

    #[test]
    fn single_layer_is_affine() {
        let (mut ext, _) = init_params(&[3, 4, 2], 5).unwrap();
        ext.layers[0].bias = DenseMatrix::from_vec(1, 4, vec![1.0, -2.0, 0.5, 0.0]).unwrap();
        let x = DenseMatrix::from_fn(5, 3, |i, j| i as f64 - 2.0 * j as f64);
        let h = ext.forward_features(&x).unwrap();
        let w = &ext.layers()[0].weight;
        let expect = DenseMatrix::from_fn(5, 4, |i, j| {
            (0..3).map(|k| x[(i, k)] * w[(k, j)]).sum::<f64>() + ext.layers()[0].bias[(0, j)]
        });
        assert!(h.rel_diff(&expect).unwrap() < 1e-14);
        // doubling the input: first pre-activation is affine in x
        let h2 = ext.forward_features(&x.scale(2.0)).unwrap();
        let lhs = h2.sub(&h).unwrap();
        let rhs = h
            .sub(&ext.forward_features(&DenseMatrix::zeros(5, 3)).unwrap())
            .unwrap();
        assert!(lhs.rel_diff(&rhs).unwrap() < 1e-14);
    }

    #[test]
    fn shape_mismatch() {
        let (ext, clf) = init_params(&[3, 4, 2], 5).unwrap();
        assert!(matches!(
            ext.forward_features(&DenseMatrix::zeros(2, 4)),
            Err(Error::Shape(_))
        ));
        assert!(matches!(
            clf.forward_logits(&DenseMatrix::zeros(2, 3)),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn logits_bias_only_and_identity() {
        let clf = LinearClassifier::new(DenseMatrix::zeros(3, 2), vec![1.0, 2.0]).unwrap();
        let z = clf
            .forward_logits(&DenseMatrix::from_fn(4, 3, |i, j| (i + j) as f64))
            .unwrap();
        for i in 0..4 {
            assert_eq!(z.row(i), &[1.0, 2.0]);
        }
        let ident = LinearClassifier::new(DenseMatrix::identity(3), vec![0.0; 3]).unwrap();
        let h = DenseMatrix::from_fn(4, 3, |i, j| (i as f64) * 0.3 - j as f64);
        assert_eq!(ident.forward_logits(&h).unwrap(), h);
    }

    #[test]
    fn logits_match_triple_loop() {
        let clf = LinearClassifier::init(6, 4, 3);
        let clf = LinearClassifier::new(clf.weight, vec![0.1, -0.2, 0.3, 0.7]).unwrap();
        let h = DenseMatrix::from_fn(5, 6, |i, j| ((i * 7 + j * 3) % 5) as f64 - 1.7);
        let z = clf.forward_logits(&h).unwrap();
        for i in 0..5 {
            for k in 0..4 {
                let mut s = clf.bias[(0, k)];
                for p in 0..6 {
                    s += h[(i, p)] * clf.weight[(p, k)];
                }
                assert!((z[(i, k)] - s).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn graph_forward_matches_plain_forward() {
        let (ext, clf) = init_params(&[3, 6, 5, 4], 8).unwrap();
        let x = DenseMatrix::from_fn(7, 3, |i, j| (i as f64 - 3.0) * 0.4 + j as f64 * 0.1);
        let mut g = DiffGraph::new();
        let xn = g.constant(x.clone());
        let (h, _) = ext.forward_graph(&mut g, xn).unwrap();
        let (z, _) = clf.forward_graph(&mut g, h).unwrap();
        assert_eq!(g.value(h), &ext.forward_features(&x).unwrap());
        assert_eq!(g.value(z), &clf.forward_logits(g.value(h)).unwrap());
    }

    #[test]
    fn sum_of_features_gradient_wrt_first_layer() {
        let (ext, _) = init_params(&[3, 6, 4, 2], 21).unwrap();
        let x = DenseMatrix::from_fn(5, 3, |i, j| ((i * 3 + j) % 7) as f64 * 0.3 - 0.8);
        let w0 = ext.layers()[0].weight.data().to_vec();
        let f = |w: &[f64]| -> Result<(f64, Vec<f64>)> {
            let mut e = ext.clone();
            e.layers[0].weight = DenseMatrix::from_vec(3, 6, w.to_vec())?;
            let mut g = DiffGraph::new();
            let xn = g.constant(x.clone());
            let (h, params) = e.forward_graph(&mut g, xn)?;
            let s = g.sum_all(h)?;
            let v = g.value(s).item()?;
            let grads = g.backward(s)?;
            Ok((v, grads.get(params[0]).into_vec()))
        };
        assert!(grad_check(f, &w0, 1e-5).unwrap() <= 1e-4);
    }
}
