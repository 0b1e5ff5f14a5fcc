//! Fully connected ReLU classifier with softmax cross-entropy.

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MlpSpec {
    /// `[d_in, h_1, ..., d_out]`; ReLU between hidden layers.
    pub layer_dims: Vec<usize>,
}

impl MlpSpec {
    pub fn new(layer_dims: Vec<usize>) -> Result<Self> {
        let spec = MlpSpec { layer_dims };
        spec.validate()?;
        Ok(spec)
    }

    /// `[d_in, 64, 32, classes]`.
    pub fn default_for(d_in: usize, classes: usize) -> Self {
        MlpSpec {
            layer_dims: vec![d_in, 64, 32, classes],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.layer_dims.len() < 2 {
            return Err(Error::invalid(
                "an MLP needs at least input and output sizes",
            ));
        }
        if self.layer_dims.contains(&0) {
            return Err(Error::invalid(format!(
                "layer sizes must be positive: {:?}",
                self.layer_dims
            )));
        }
        Ok(())
    }

    pub fn num_layers(&self) -> usize {
        self.layer_dims.len() - 1
    }

    pub fn input_dim(&self) -> usize {
        self.layer_dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_dims.last().unwrap()
    }
}

/// A named parameter tensor; `quantize` marks weight matrices, which are
/// the only parameters the quantized trainers project.
#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
    pub quantize: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamSet {
    params: Vec<Param>,
}

/// Gradients share the parameter layout.
pub type Gradient = ParamSet;

impl ParamSet {
    pub fn new(params: Vec<Param>) -> Result<Self> {
        for p in &params {
            let n: usize = p.shape.iter().product();
            if n != p.values.len() {
                return Err(Error::invalid(format!(
                    "parameter `{}` has shape {:?} but {} values",
                    p.name,
                    p.shape,
                    p.values.len()
                )));
            }
        }
        Ok(ParamSet { params })
    }

    /// Weight `fc{l}.weight` with shape `[out, in]` and bias `fc{l}.bias` per
    /// layer; weights uniform in `+-sqrt(6 / (in + out))`, biases zero.
    pub fn init(spec: &MlpSpec, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Vec::with_capacity(2 * spec.num_layers());
        for (l, dims) in spec.layer_dims.windows(2).enumerate() {
            let (fan_in, fan_out) = (dims[0], dims[1]);
            let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let values = (0..fan_in * fan_out)
                .map(|_| rng.random_range(-a..=a))
                .collect();
            params.push(Param {
                name: format!("fc{l}.weight"),
                shape: vec![fan_out, fan_in],
                values,
                quantize: true,
            });
            params.push(Param {
                name: format!("fc{l}.bias"),
                shape: vec![fan_out],
                values: vec![0.0; fan_out],
                quantize: false,
            });
        }
        ParamSet { params }
    }

    pub fn zeros(spec: &MlpSpec) -> Self {
        let mut p = Self::init(spec, 0);
        p.fill(0.0);
        p
    }

    pub fn params(&self) -> &[Param] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Param] {
        &mut self.params
    }

    pub fn get(&self, name: &str) -> Option<&Param> {
        self.params.iter().find(|p| p.name == name)
    }

    /// Total number of scalars.
    pub fn len(&self) -> usize {
        self.params.iter().map(|p| p.values.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn fill(&mut self, v: f64) {
        for p in &mut self.params {
            p.values.iter_mut().for_each(|x| *x = v);
        }
    }

    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        z.fill(0.0);
        z
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.params
            .iter()
            .flat_map(|p| p.values.iter().copied())
            .collect()
    }

    /// Copy of `self` with values taken from `flat`, in `flatten` order.
    pub fn unflatten(&self, flat: &[f64]) -> Result<Self> {
        if flat.len() != self.len() {
            return Err(Error::invalid(format!(
                "flat vector has {} values, parameter set has {}",
                flat.len(),
                self.len()
            )));
        }
        let mut out = self.clone();
        let mut offset = 0;
        for p in &mut out.params {
            let n = p.values.len();
            p.values.copy_from_slice(&flat[offset..offset + n]);
            offset += n;
        }
        Ok(out)
    }

    pub fn same_layout(&self, other: &ParamSet) -> bool {
        self.params.len() == other.params.len()
            && self
                .params
                .iter()
                .zip(&other.params)
                .all(|(a, b)| a.name == b.name && a.shape == b.shape)
    }

    pub fn is_finite(&self) -> bool {
        self.params
            .iter()
            .all(|p| p.values.iter().all(|x| x.is_finite()))
    }

    pub fn to_tensors(&self) -> Vec<(String, Tensor)> {
        self.params
            .iter()
            .map(|p| {
                let t = Tensor::new(p.shape.clone(), p.values.clone()).expect("param shape");
                (p.name.clone(), t)
            })
            .collect()
    }

    /// Loads values for every parameter of `spec` by name from `tensors`.
    pub fn from_tensors(spec: &MlpSpec, tensors: &[(String, Tensor)]) -> Result<Self> {
        let mut out = Self::zeros(spec);
        for p in &mut out.params {
            let (_, t) = tensors
                .iter()
                .find(|(n, _)| *n == p.name)
                .ok_or_else(|| Error::invalid(format!("checkpoint is missing `{}`", p.name)))?;
            if t.shape() != p.shape.as_slice() {
                return Err(Error::invalid(format!(
                    "checkpoint `{}` has shape {:?}, model expects {:?}",
                    p.name,
                    t.shape(),
                    p.shape
                )));
            }
            p.values.copy_from_slice(t.data());
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mlp {
    spec: MlpSpec,
}

struct Forward {
    /// Layer inputs: `inputs[0]` is the batch, `inputs[l]` the ReLU output
    /// feeding layer `l`.
    inputs: Vec<Array2<f64>>,
    /// Pre-activations of hidden layers, for the ReLU mask.
    pre: Vec<Array2<f64>>,
    logits: Array2<f64>,
}

impl Mlp {
    pub fn new(spec: MlpSpec) -> Result<Self> {
        spec.validate()?;
        Ok(Mlp { spec })
    }

    pub fn spec(&self) -> &MlpSpec {
        &self.spec
    }

    fn check(&self, params: &ParamSet, x: ArrayView2<f64>, labels: Option<&[usize]>) -> Result<()> {
        let expected = ParamSet::zeros(&self.spec);
        if !params.same_layout(&expected) {
            return Err(Error::invalid(
                "parameter set does not match the model layout",
            ));
        }
        if x.nrows() == 0 {
            return Err(Error::invalid("empty batch"));
        }
        if x.ncols() != self.spec.input_dim() {
            return Err(Error::invalid(format!(
                "input dimension {} does not match model input {}",
                x.ncols(),
                self.spec.input_dim()
            )));
        }
        if x.iter().any(|v| v.is_nan()) {
            return Err(Error::invalid("NaN in inputs"));
        }
        if let Some(y) = labels {
            if y.len() != x.nrows() {
                return Err(Error::invalid(format!(
                    "{} labels for {} samples",
                    y.len(),
                    x.nrows()
                )));
            }
            let k = self.spec.output_dim();
            if let Some(bad) = y.iter().find(|&&c| c >= k) {
                return Err(Error::invalid(format!(
                    "label {bad} out of range for {k} classes"
                )));
            }
        }
        Ok(())
    }

    fn layer<'a>(
        &self,
        params: &'a ParamSet,
        l: usize,
    ) -> (ArrayView2<'a, f64>, ArrayView1<'a, f64>) {
        let w = &params.params[2 * l];
        let b = &params.params[2 * l + 1];
        let w = ArrayView2::from_shape((w.shape[0], w.shape[1]), &w.values).expect("weight shape");
        (w, ArrayView1::from(&b.values[..]))
    }

    fn run(&self, params: &ParamSet, x: ArrayView2<f64>) -> Forward {
        let layers = self.spec.num_layers();
        let mut inputs = vec![x.to_owned()];
        let mut pre = Vec::with_capacity(layers - 1);
        for l in 0..layers - 1 {
            let (w, b) = self.layer(params, l);
            let z = inputs[l].dot(&w.t()) + b;
            inputs.push(z.mapv(|v| v.max(0.0)));
            pre.push(z);
        }
        let (w, b) = self.layer(params, layers - 1);
        let logits = inputs[layers - 1].dot(&w.t()) + b;
        Forward {
            inputs,
            pre,
            logits,
        }
    }

    pub fn logits(&self, params: &ParamSet, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check(params, x, None)?;
        Ok(self.run(params, x).logits)
    }

    /// Mean cross-entropy over the batch and the softmax probabilities.
    pub fn forward_loss(
        &self,
        params: &ParamSet,
        x: ArrayView2<f64>,
        labels: &[usize],
    ) -> Result<(f64, Array2<f64>)> {
        self.check(params, x, Some(labels))?;
        let logits = self.run(params, x).logits;
        Ok(softmax_cross_entropy(&logits, labels))
    }

    /// Loss and its exact gradient with respect to every parameter.
    pub fn backward(
        &self,
        params: &ParamSet,
        x: ArrayView2<f64>,
        labels: &[usize],
    ) -> Result<(f64, Gradient)> {
        self.check(params, x, Some(labels))?;
        let fwd = self.run(params, x);
        let (loss, probs) = softmax_cross_entropy(&fwd.logits, labels);

        let n = x.nrows() as f64;
        let mut delta = probs;
        for (i, &y) in labels.iter().enumerate() {
            delta[[i, y]] -= 1.0;
        }
        delta /= n;

        let mut grad = params.zeros_like();
        for l in (0..self.spec.num_layers()).rev() {
            let gw = delta.t().dot(&fwd.inputs[l]);
            let gb = delta.sum_axis(Axis(0));
            grad.params[2 * l].values = gw.into_iter().collect();
            grad.params[2 * l + 1].values = gb.to_vec();
            if l > 0 {
                let (w, _) = self.layer(params, l);
                let mut dh = delta.dot(&w);
                dh.zip_mut_with(&fwd.pre[l - 1], |g, &z| {
                    if z <= 0.0 {
                        *g = 0.0;
                    }
                });
                delta = dh;
            }
        }
        Ok((loss, grad))
    }

    /// Fraction of samples whose highest-probability class is the label;
    /// equal scores resolve to the lowest class index.
    pub fn accuracy(&self, params: &ParamSet, data: &Dataset) -> Result<f64> {
        if data.is_empty() {
            return Err(Error::EmptyDataset("accuracy on an empty dataset".into()));
        }
        let logits = self.logits(params, data.features.view())?;
        let correct = logits
            .rows()
            .into_iter()
            .zip(&data.labels)
            .filter(|(row, &y)| argmax(row.view()) == y)
            .count();
        Ok(correct as f64 / data.len() as f64)
    }
}

pub fn argmax(row: ArrayView1<f64>) -> usize {
    let mut best = 0;
    for (k, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = k;
        }
    }
    best
}

/// Max-shifted log-sum-exp, so saturated logits stay finite.
fn softmax_cross_entropy(logits: &Array2<f64>, labels: &[usize]) -> (f64, Array2<f64>) {
    let mut probs = logits.clone();
    let mut total = 0.0;
    for (mut row, &y) in probs.rows_mut().into_iter().zip(labels) {
        let m = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        row.mapv_inplace(|v| v - m);
        let lse = row.mapv(f64::exp).sum().ln();
        total += lse - row[y];
        row.mapv_inplace(|v| (v - lse).exp());
    }
    (total / labels.len() as f64, probs)
}

/// Largest relative error between an analytic gradient and central finite
/// differences of the loss; the denominator is floored at `1e-4`.
pub fn gradient_check(
    mlp: &Mlp,
    params: &ParamSet,
    x: ArrayView2<f64>,
    labels: &[usize],
    analytic: &Gradient,
    step: f64,
) -> Result<f64> {
    let flat = params.flatten();
    let g = analytic.flatten();
    if g.len() != flat.len() {
        return Err(Error::invalid("gradient layout mismatch"));
    }
    let mut worst: f64 = 0.0;
    let mut probe = flat.clone();
    for i in 0..flat.len() {
        probe[i] = flat[i] + step;
        let (up, _) = mlp.forward_loss(&params.unflatten(&probe)?, x, labels)?;
        probe[i] = flat[i] - step;
        let (down, _) = mlp.forward_loss(&params.unflatten(&probe)?, x, labels)?;
        probe[i] = flat[i];
        let numeric = (up - down) / (2.0 * step);
        let denom = g[i].abs().max(numeric.abs()).max(1e-4);
        worst = worst.max((g[i] - numeric).abs() / denom);
    }
    Ok(worst)
}

/// Independent scalar-loop forward pass, used to cross-check the ndarray path.
#[doc(hidden)]
#[allow(clippy::needless_range_loop)]
pub fn reference_loss(
    params: &ParamSet,
    spec: &MlpSpec,
    x: ArrayView2<f64>,
    labels: &[usize],
) -> f64 {
    let mut total = 0.0;
    for (i, &y) in labels.iter().enumerate() {
        let mut h: Vec<f64> = x.slice(s![i, ..]).to_vec();
        for l in 0..spec.num_layers() {
            let w = &params.params()[2 * l];
            let b = &params.params()[2 * l + 1];
            let (out, inp) = (w.shape[0], w.shape[1]);
            let mut z = vec![0.0; out];
            for o in 0..out {
                let mut acc = b.values[o];
                for k in 0..inp {
                    acc += w.values[o * inp + k] * h[k];
                }
                z[o] = if l + 1 < spec.num_layers() {
                    acc.max(0.0)
                } else {
                    acc
                };
            }
            h = z;
        }
        let m = h.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + h.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
        total += lse - h[y];
    }
    total / labels.len() as f64
}

pub fn one_hot_mean(labels: &[usize], k: usize) -> Array1<f64> {
    let mut out = Array1::zeros(k);
    for &y in labels {
        out[y] += 1.0 / labels.len() as f64;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn random_batch(
        rng: &mut ChaCha8Rng,
        n: usize,
        d: usize,
        k: usize,
    ) -> (Array2<f64>, Vec<usize>) {
        let x = Array2::from_shape_fn((n, d), |_| rng.random_range(-1.5..1.5));
        let y = (0..n).map(|_| rng.random_range(0..k)).collect();
        (x, y)
    }

    #[test]
    fn zero_params_give_log_k() {
        let spec = MlpSpec::new(vec![4, 6, 5]).unwrap();
        let mlp = Mlp::new(spec.clone()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (x, y) = random_batch(&mut rng, 7, 4, 5);
        let (loss, probs) = mlp
            .forward_loss(&ParamSet::zeros(&spec), x.view(), &y)
            .unwrap();
        assert!((loss - 5f64.ln()).abs() < 1e-15);
        for row in probs.rows() {
            assert!((row.sum() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn saturated_logits_are_stable() {
        let spec = MlpSpec::new(vec![1, 2]).unwrap();
        let mlp = Mlp::new(spec.clone()).unwrap();
        let mut p = ParamSet::zeros(&spec);
        p.params_mut()[0].values = vec![1000.0, 0.0];
        let (loss, probs) = mlp.forward_loss(&p, array![[1.0]].view(), &[0]).unwrap();
        assert!(loss.abs() < 1e-12);
        assert!(probs.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn matches_reference_implementation() {
        let spec = MlpSpec::new(vec![3, 8, 4]).unwrap();
        let mlp = Mlp::new(spec.clone()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for seed in 0..10 {
            let mut p = ParamSet::init(&spec, seed);
            for param in p.params_mut() {
                param
                    .values
                    .iter_mut()
                    .for_each(|v| *v += rng.random_range(-0.3..0.3));
            }
            let (x, y) = random_batch(&mut rng, 4, 3, 4);
            let (loss, _) = mlp.forward_loss(&p, x.view(), &y).unwrap();
            assert!((loss - reference_loss(&p, &spec, x.view(), &y)).abs() < 1e-12);
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let spec = MlpSpec::new(vec![3, 5, 2]).unwrap();
        let mlp = Mlp::new(spec.clone()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for seed in 0..5 {
            let p = ParamSet::init(&spec, seed);
            let (x, y) = random_batch(&mut rng, 4, 3, 2);
            let (_, g) = mlp.backward(&p, x.view(), &y).unwrap();
            let err = gradient_check(&mlp, &p, x.view(), &y, &g, 1e-5).unwrap();
            assert!(err < 1e-5, "seed {seed}: {err}");
        }
    }

    #[test]
    fn duplicated_sample_has_same_gradient() {
        let spec = MlpSpec::new(vec![3, 5, 2]).unwrap();
        let mlp = Mlp::new(spec.clone()).unwrap();
        let p = ParamSet::init(&spec, 4);
        let x1 = array![[0.3, -0.7, 1.1]];
        let x2 = array![[0.3, -0.7, 1.1], [0.3, -0.7, 1.1]];
        let (l1, g1) = mlp.backward(&p, x1.view(), &[1]).unwrap();
        let (l2, g2) = mlp.backward(&p, x2.view(), &[1, 1]).unwrap();
        assert!((l1 - l2).abs() < 1e-15);
        for (a, b) in g1.flatten().iter().zip(g2.flatten()) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_inputs_zero_first_layer_gradient() {
        let spec = MlpSpec::new(vec![3, 5, 2]).unwrap();
        let mlp = Mlp::new(spec.clone()).unwrap();
        let p = ParamSet::zeros(&spec);
        let x = Array2::zeros((4, 3));
        let (_, g) = mlp.backward(&p, x.view(), &[0, 1, 1, 0]).unwrap();
        assert!(g
            .get("fc0.weight")
            .unwrap()
            .values
            .iter()
            .all(|&v| v == 0.0));
    }

    #[test]
    fn logit_shift_invariance() {
        let spec = MlpSpec::new(vec![3, 4, 3]).unwrap();
        let mlp = Mlp::new(spec.clone()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let p = ParamSet::init(&spec, 5);
        let (x, y) = random_batch(&mut rng, 6, 3, 3);
        let (base, _) = mlp.forward_loss(&p, x.view(), &y).unwrap();
        let mut shifted = p.clone();
        shifted.params_mut()[3]
            .values
            .iter_mut()
            .for_each(|b| *b += 17.25);
        let (after, _) = mlp.forward_loss(&shifted, x.view(), &y).unwrap();
        assert!((base - after).abs() < 1e-12);
    }

    #[test]
    fn accuracy_ties_go_to_class_zero() {
        let spec = MlpSpec::new(vec![2, 2]).unwrap();
        let mlp = Mlp::new(spec.clone()).unwrap();
        let features = array![[1.0, 0.0], [0.0, 1.0], [2.0, 2.0], [-1.0, 3.0]];
        let data = Dataset::new(features, vec![0, 1, 0, 1], 2).unwrap();
        let acc = mlp.accuracy(&ParamSet::zeros(&spec), &data).unwrap();
        assert_eq!(acc, 0.5);

        let mut p = ParamSet::zeros(&spec);
        p.params_mut()[0].values = vec![1.0, 0.0, 0.0, 1.0];
        let features = array![[1.0, 0.0], [0.0, 1.0]];
        let data = Dataset::new(features, vec![0, 1], 2).unwrap();
        assert_eq!(mlp.accuracy(&p, &data).unwrap(), 1.0);
    }

    #[test]
    fn validation_errors() {
        let spec = MlpSpec::new(vec![3, 2]).unwrap();
        let mlp = Mlp::new(spec.clone()).unwrap();
        let p = ParamSet::zeros(&spec);
        assert!(mlp
            .forward_loss(&p, Array2::zeros((0, 3)).view(), &[])
            .is_err());
        assert!(mlp
            .forward_loss(&p, Array2::zeros((1, 4)).view(), &[0])
            .is_err());
        assert!(mlp
            .forward_loss(&p, Array2::zeros((1, 3)).view(), &[2])
            .is_err());
        assert!(mlp
            .forward_loss(&p, array![[f64::NAN, 0.0, 0.0]].view(), &[0])
            .is_err());
        assert!(MlpSpec::new(vec![3]).is_err());
        assert!(MlpSpec::new(vec![3, 0, 2]).is_err());
    }

    #[test]
    fn flatten_round_trip() {
        let spec = MlpSpec::new(vec![3, 4, 2]).unwrap();
        let p = ParamSet::init(&spec, 9);
        assert_eq!(p.unflatten(&p.flatten()).unwrap(), p);
        assert_eq!(p.len(), 3 * 4 + 4 + 4 * 2 + 2);
        let back = ParamSet::from_tensors(&spec, &p.to_tensors()).unwrap();
        assert_eq!(back, p);
    }
}
