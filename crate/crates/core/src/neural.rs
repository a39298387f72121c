//! Fully connected ReLU network trained with Adam.
//!
//! Hidden layers use ReLU, the output layer is linear. Training minimizes
//! `½ mean (y - Q(x)[a])²` where only the output selected by the action
//! index receives gradient.

use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Weights (`out × in`) and bias of one affine layer. Also used to hold
/// gradients and optimizer moments of the same shape.
#[derive(Clone, Debug, PartialEq)]
pub struct Dense<T> {
    pub weights: Array2<T>,
    pub bias: Array1<T>,
}

impl<T: Real> Dense<T> {
    fn zeros(out: usize, input: usize) -> Self {
        Self {
            weights: Array2::zeros((out, input)),
            bias: Array1::zeros(out),
        }
    }

    fn zeros_like(&self) -> Self {
        Self::zeros(self.weights.nrows(), self.weights.ncols())
    }

    fn same_shape(&self, other: &Self) -> bool {
        self.weights.dim() == other.weights.dim() && self.bias.len() == other.bias.len()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Mlp<T> {
    layers: Vec<Dense<T>>,
}

impl<T: Real> Mlp<T> {
    /// Glorot-uniform weights in `±sqrt(6 / (fan_in + fan_out))`, zero biases.
    pub fn new(dims: &[usize], seed: u64) -> Result<Self> {
        if dims.len() < 2 || dims.contains(&0) {
            return Err(Error::Shape(format!("need at least two non-zero layer sizes, got {dims:?}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = dims
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
                let weights = Array2::from_shape_simple_fn((fan_out, fan_in), || T::lit(rng.gen_range(-bound..=bound)));
                Dense {
                    weights,
                    bias: Array1::zeros(fan_out),
                }
            })
            .collect();
        Ok(Self { layers })
    }

    pub fn from_layers(layers: Vec<Dense<T>>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Shape("network needs at least one layer".into()));
        }
        for (i, layer) in layers.iter().enumerate() {
            if layer.weights.nrows() != layer.bias.len() || layer.weights.is_empty() {
                return Err(Error::Shape(format!("layer {i}: weights and bias disagree")));
            }
            if i > 0 && layers[i - 1].weights.nrows() != layer.weights.ncols() {
                return Err(Error::Shape(format!("layer {i}: input size does not match previous output")));
            }
        }
        Ok(Self { layers })
    }

    pub fn layers(&self) -> &[Dense<T>] {
        &self.layers
    }

    pub fn dims(&self) -> Vec<usize> {
        std::iter::once(self.input_dim())
            .chain(self.layers.iter().map(|l| l.weights.nrows()))
            .collect()
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weights.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].weights.nrows()
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(l.bias.iter()).all(|v| v.is_finite()))
    }

    /// Visits every parameter, weights before biases, layer by layer.
    pub fn for_each_param_mut(&mut self, mut f: impl FnMut(usize, &mut T)) {
        let mut index = 0;
        for layer in &mut self.layers {
            for v in layer.weights.iter_mut().chain(layer.bias.iter_mut()) {
                f(index, v);
                index += 1;
            }
        }
    }

    pub fn forward(&self, x: &[T]) -> Result<Vec<T>> {
        if x.len() != self.input_dim() {
            return Err(Error::Shape(format!("input length {} != {}", x.len(), self.input_dim())));
        }
        let input = ArrayView2::from_shape((1, x.len()), x).expect("contiguous input");
        Ok(self.forward_batch(input)?.into_raw_vec_and_offset().0)
    }

    /// Evaluates a batch of row-vector inputs.
    pub fn forward_batch(&self, inputs: ArrayView2<T>) -> Result<Array2<T>> {
        if inputs.ncols() != self.input_dim() {
            return Err(Error::Shape(format!("input width {} != {}", inputs.ncols(), self.input_dim())));
        }
        let mut act = affine(inputs, &self.layers[0]);
        for layer in &self.layers[1..] {
            relu_in_place(&mut act);
            act = affine(act.view(), layer);
        }
        Ok(act)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&MlpFile::from(self))?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: MlpFile<T> = serde_json::from_str(text)?;
        file.try_into()
    }
}

fn affine<T: Real>(inputs: ArrayView2<T>, layer: &Dense<T>) -> Array2<T> {
    let mut out = inputs.dot(&layer.weights.t());
    out += &layer.bias;
    out
}

fn relu_in_place<T: Real>(a: &mut Array2<T>) {
    a.mapv_inplace(|v| if v > T::zero() { v } else { T::zero() });
}

/// On-disk layout: layer sizes plus row-major weight arrays.
#[derive(Serialize, Deserialize)]
struct MlpFile<T> {
    dims: Vec<usize>,
    weights: Vec<Vec<T>>,
    biases: Vec<Vec<T>>,
}

impl<T: Real> From<&Mlp<T>> for MlpFile<T> {
    fn from(net: &Mlp<T>) -> Self {
        Self {
            dims: net.dims(),
            weights: net.layers.iter().map(|l| l.weights.iter().copied().collect()).collect(),
            biases: net.layers.iter().map(|l| l.bias.to_vec()).collect(),
        }
    }
}

impl<T: Real> TryFrom<MlpFile<T>> for Mlp<T> {
    type Error = Error;

    fn try_from(file: MlpFile<T>) -> Result<Self> {
        let n = file.dims.len();
        if n < 2 || file.weights.len() != n - 1 || file.biases.len() != n - 1 {
            return Err(Error::Shape("weight file has inconsistent layer counts".into()));
        }
        let layers = file
            .dims
            .windows(2)
            .zip(file.weights.into_iter().zip(file.biases))
            .map(|(w, (weights, bias))| {
                let weights = Array2::from_shape_vec((w[1], w[0]), weights)
                    .map_err(|e| Error::Shape(format!("weights for {}x{}: {e}", w[1], w[0])))?;
                if bias.len() != w[1] {
                    return Err(Error::Shape(format!("bias length {} != {}", bias.len(), w[1])));
                }
                Ok(Dense {
                    weights,
                    bias: Array1::from(bias),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Mlp::from_layers(layers)
    }
}

/// Inputs, selected action indices and regression targets.
#[derive(Clone, Debug)]
pub struct Batch<T> {
    pub inputs: Array2<T>,
    pub actions: Vec<usize>,
    pub targets: Vec<T>,
}

impl<T: Real> Batch<T> {
    pub fn new(inputs: Array2<T>, actions: Vec<usize>, targets: Vec<T>) -> Result<Self> {
        if inputs.nrows() != actions.len() || actions.len() != targets.len() {
            return Err(Error::Shape("batch components have different lengths".into()));
        }
        Ok(Self {
            inputs,
            actions,
            targets,
        })
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradBundle<T> {
    pub layers: Vec<Dense<T>>,
    pub loss: T,
}

impl<T: Real> GradBundle<T> {
    /// Gradient entries in the order of [`Mlp::for_each_param_mut`].
    pub fn flat(&self) -> Vec<T> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(l.bias.iter()).copied())
            .collect()
    }
}

pub fn loss<T: Real>(net: &Mlp<T>, batch: &Batch<T>) -> Result<T> {
    check_batch(net, batch)?;
    let out = net.forward_batch(batch.inputs.view())?;
    Ok(selected_loss(&out, batch).0)
}

fn check_batch<T: Real>(net: &Mlp<T>, batch: &Batch<T>) -> Result<()> {
    if batch.is_empty() {
        return Err(Error::Shape("empty batch".into()));
    }
    if batch.inputs.ncols() != net.input_dim() {
        return Err(Error::Shape(format!("input width {} != {}", batch.inputs.ncols(), net.input_dim())));
    }
    if let Some(&a) = batch.actions.iter().find(|&&a| a >= net.output_dim()) {
        return Err(Error::Shape(format!("action index {a} out of range")));
    }
    Ok(())
}

/// Loss and the gradient with respect to the network outputs.
fn selected_loss<T: Real>(out: &Array2<T>, batch: &Batch<T>) -> (T, Array2<T>) {
    let n = T::from_usize(batch.len()).expect("batch size fits");
    let half = T::lit(0.5);
    let mut d_out = Array2::zeros(out.dim());
    let mut total = T::zero();
    for (i, (&a, &y)) in batch.actions.iter().zip(&batch.targets).enumerate() {
        let diff = out[[i, a]] - y;
        total += half * diff * diff;
        d_out[[i, a]] = diff / n;
    }
    (total / n, d_out)
}

pub fn loss_and_grads<T: Real>(net: &Mlp<T>, batch: &Batch<T>) -> Result<GradBundle<T>> {
    check_batch(net, batch)?;

    // Pre-activations of every layer; the input is kept separately.
    let mut pre = Vec::with_capacity(net.layers.len());
    let mut act = affine(batch.inputs.view(), &net.layers[0]);
    pre.push(act.clone());
    for layer in &net.layers[1..] {
        relu_in_place(&mut act);
        act = affine(act.view(), layer);
        pre.push(act.clone());
    }
    let (loss, mut delta) = selected_loss(&act, batch);

    let mut grads: Vec<Dense<T>> = net.layers.iter().map(Dense::zeros_like).collect();
    for l in (0..net.layers.len()).rev() {
        let input_act = if l == 0 {
            batch.inputs.clone()
        } else {
            pre[l - 1].mapv(|v| if v > T::zero() { v } else { T::zero() })
        };
        grads[l].weights = delta.t().dot(&input_act);
        grads[l].bias = delta.sum_axis(Axis(0));
        if l > 0 {
            let mut back = delta.dot(&net.layers[l].weights);
            Zip::from(&mut back).and(&pre[l - 1]).for_each(|b, &z| {
                if z <= T::zero() {
                    *b = T::zero();
                }
            });
            delta = back;
        }
    }
    Ok(GradBundle { layers: grads, loss })
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<T> {
    pub m: Vec<Dense<T>>,
    pub v: Vec<Dense<T>>,
    pub t: u64,
    pub learning_rate: T,
    pub beta1: T,
    pub beta2: T,
    pub epsilon: T,
}

impl<T: Real> AdamState<T> {
    pub fn new(net: &Mlp<T>, learning_rate: T) -> Self {
        let zeros: Vec<_> = net.layers.iter().map(Dense::zeros_like).collect();
        Self {
            m: zeros.clone(),
            v: zeros,
            t: 0,
            learning_rate,
            beta1: T::lit(0.9),
            beta2: T::lit(0.999),
            epsilon: T::lit(1e-8),
        }
    }
}

/// One bias-corrected Adam update.
pub fn adam_step<T: Real>(net: &mut Mlp<T>, adam: &mut AdamState<T>, grads: &GradBundle<T>) -> Result<()> {
    let congruent = net.layers.len() == grads.layers.len()
        && net.layers.len() == adam.m.len()
        && net.layers.iter().zip(&grads.layers).all(|(a, b)| a.same_shape(b))
        && net.layers.iter().zip(&adam.m).all(|(a, b)| a.same_shape(b));
    if !congruent {
        return Err(Error::Shape("gradients do not match the network".into()));
    }

    adam.t += 1;
    let t = adam.t as i32;
    let (b1, b2) = (adam.beta1, adam.beta2);
    let one = T::one();
    let c1 = one - b1.powi(t);
    let c2 = one - b2.powi(t);
    let (lr, eps) = (adam.learning_rate, adam.epsilon);

    let update = |p: &mut T, m: &mut T, v: &mut T, g: T| {
        *m = b1 * *m + (one - b1) * g;
        *v = b2 * *v + (one - b2) * g * g;
        let m_hat = *m / c1;
        let v_hat = *v / c2;
        *p -= lr * m_hat / (v_hat.sqrt() + eps);
    };

    for (((layer, m), v), g) in net.layers.iter_mut().zip(&mut adam.m).zip(&mut adam.v).zip(&grads.layers) {
        Zip::from(&mut layer.weights)
            .and(&mut m.weights)
            .and(&mut v.weights)
            .and(&g.weights)
            .for_each(|p, m, v, &g| update(p, m, v, g));
        Zip::from(&mut layer.bias)
            .and(&mut m.bias)
            .and(&mut v.bias)
            .and(&g.bias)
            .for_each(|p, m, v, &g| update(p, m, v, g));
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport<T> {
    pub max_relative_error: T,
    pub max_absolute_error: T,
    /// Flat index of the parameter with the largest relative error.
    pub worst_index: usize,
    pub checked: usize,
    pub passed: bool,
}

/// Compares backpropagation against central differences on every parameter.
///
/// The relative error is `|a - n| / max(|a|, |n|, floor)`, where the floor
/// keeps parameters with vanishing gradient from reporting round-off as
/// relative error.
pub fn grad_check<T: Real>(net: &Mlp<T>, batch: &Batch<T>, step: T, tolerance: T) -> Result<GradCheckReport<T>> {
    let analytic = loss_and_grads(net, batch)?.flat();
    let floor = T::lit(1e-7);
    let two = T::lit(2.0);
    let mut probe = net.clone();
    let mut numeric = vec![T::zero(); analytic.len()];
    for (i, slot) in numeric.iter_mut().enumerate() {
        let original = param_at(&mut probe, i);
        set_param(&mut probe, i, original + step);
        let up = loss(&probe, batch)?;
        set_param(&mut probe, i, original - step);
        let down = loss(&probe, batch)?;
        set_param(&mut probe, i, original);
        *slot = (up - down) / (two * step);
    }

    let mut report = GradCheckReport {
        max_relative_error: T::zero(),
        max_absolute_error: T::zero(),
        worst_index: 0,
        checked: analytic.len(),
        passed: true,
    };
    for (i, (&a, &n)) in analytic.iter().zip(&numeric).enumerate() {
        let abs = (a - n).abs();
        let rel = abs / a.abs().max(n.abs()).max(floor);
        if abs > report.max_absolute_error {
            report.max_absolute_error = abs;
        }
        if rel > report.max_relative_error {
            report.max_relative_error = rel;
            report.worst_index = i;
        }
    }
    report.passed = report.max_relative_error < tolerance;
    Ok(report)
}

fn param_at<T: Real>(net: &mut Mlp<T>, index: usize) -> T {
    let mut out = T::zero();
    net.for_each_param_mut(|i, v| {
        if i == index {
            out = *v;
        }
    });
    out
}

fn set_param<T: Real>(net: &mut Mlp<T>, index: usize, value: T) {
    let (layer, offset) = locate(net, index);
    let l = &mut net.layers[layer];
    let nw = l.weights.len();
    if offset < nw {
        let cols = l.weights.ncols();
        l.weights[[offset / cols, offset % cols]] = value;
    } else {
        l.bias[offset - nw] = value;
    }
}

fn locate<T: Real>(net: &Mlp<T>, mut index: usize) -> (usize, usize) {
    for (l, layer) in net.layers.iter().enumerate() {
        let n = layer.weights.len() + layer.bias.len();
        if index < n {
            return (l, index);
        }
        index -= n;
    }
    panic!("parameter index out of range")
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn tiny() -> Mlp<f64> {
        // 2-2-2 network with hand-set weights.
        Mlp::from_layers(vec![
            Dense {
                weights: array![[1.0, -2.0], [0.5, 1.0]],
                bias: array![0.5, -1.0],
            },
            Dense {
                weights: array![[2.0, 1.0], [-1.0, 3.0]],
                bias: array![0.0, 1.0],
            },
        ])
        .unwrap()
    }

    #[test]
    fn hand_computed_forward() {
        // x = (1, 1): hidden pre = (1 - 2 + 0.5, 0.5 + 1 - 1) = (-0.5, 0.5) -> relu (0, 0.5)
        // out = (2*0 + 1*0.5 + 0, -1*0 + 3*0.5 + 1) = (0.5, 2.5)
        assert_eq!(tiny().forward(&[1.0, 1.0]).unwrap(), vec![0.5, 2.5]);
        // x = (2, 0): hidden pre = (2.5, 0) -> (2.5, 0); out = (5, -1.5)
        assert_eq!(tiny().forward(&[2.0, 0.0]).unwrap(), vec![5.0, -1.5]);
    }

    #[test]
    fn zero_weights_give_zero_output() {
        let mut net = Mlp::<f64>::new(&[12, 64, 64, 5], 1).unwrap();
        net.for_each_param_mut(|_, v| *v = 0.0);
        assert_eq!(net.forward(&[0.3; 12]).unwrap(), vec![0.0; 5]);
    }

    #[test]
    fn single_identity_layer_passes_input() {
        let net = Mlp::from_layers(vec![Dense {
            weights: Array2::<f64>::eye(3),
            bias: Array1::zeros(3),
        }])
        .unwrap();
        assert_eq!(net.forward(&[-1.0, 0.25, 4.0]).unwrap(), vec![-1.0, 0.25, 4.0]);
    }

    #[test]
    fn init_is_deterministic_and_bounded() {
        let a = Mlp::<f64>::new(&[12, 64, 64, 5], 9).unwrap();
        assert_eq!(a, Mlp::new(&[12, 64, 64, 5], 9).unwrap());
        assert_ne!(a, Mlp::new(&[12, 64, 64, 5], 10).unwrap());
        assert_eq!(a.param_count(), 5317);
        for layer in a.layers() {
            let bound = (6.0 / (layer.weights.ncols() + layer.weights.nrows()) as f64).sqrt();
            assert!(layer.weights.iter().all(|w| w.abs() <= bound));
            assert!(layer.bias.iter().all(|&b| b == 0.0));
        }
        assert!(Mlp::<f64>::new(&[3], 0).is_err());
        assert!(Mlp::<f64>::new(&[3, 0, 2], 0).is_err());
    }

    #[test]
    fn forward_rejects_wrong_length() {
        assert!(tiny().forward(&[1.0]).is_err());
    }

    #[test]
    fn exact_targets_give_zero_gradient() {
        let net = Mlp::<f64>::new(&[4, 8, 3], 2).unwrap();
        let x = array![[0.1, -0.2, 0.3, 0.4], [0.5, 0.5, -0.5, 0.0]];
        let out = net.forward_batch(x.view()).unwrap();
        let batch = Batch::new(x, vec![2, 0], vec![out[[0, 2]], out[[1, 0]]]).unwrap();
        let g = loss_and_grads(&net, &batch).unwrap();
        assert_eq!(g.loss, 0.0);
        assert!(g.flat().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn duplicated_batch_matches_single_item() {
        let net = Mlp::<f64>::new(&[4, 8, 3], 3).unwrap();
        let single = Batch::new(array![[0.1, -0.2, 0.3, 0.4]], vec![1], vec![2.0]).unwrap();
        let double = Batch::new(array![[0.1, -0.2, 0.3, 0.4], [0.1, -0.2, 0.3, 0.4]], vec![1, 1], vec![2.0, 2.0]).unwrap();
        let a = loss_and_grads(&net, &single).unwrap();
        let b = loss_and_grads(&net, &double).unwrap();
        assert!((a.loss - b.loss).abs() < 1e-15);
        for (x, y) in a.flat().iter().zip(b.flat()) {
            assert!((x - y).abs() < 1e-15);
        }
    }

    #[test]
    fn empty_batch_is_rejected() {
        let net = Mlp::<f64>::new(&[4, 3], 3).unwrap();
        let empty = Batch::new(Array2::zeros((0, 4)), vec![], vec![]).unwrap();
        assert!(loss_and_grads(&net, &empty).is_err());
        let bad_action = Batch::new(Array2::zeros((1, 4)), vec![3], vec![0.0]).unwrap();
        assert!(loss_and_grads(&net, &bad_action).is_err());
    }

    #[test]
    fn small_grad_check() {
        let net = tiny();
        let batch = Batch::new(array![[1.0, 0.9], [2.0, 0.1], [-0.3, 0.7]], vec![0, 1, 1], vec![1.0, -2.0, 0.5]).unwrap();
        let report = grad_check(&net, &batch, 1e-5, 1e-4).unwrap();
        assert!(report.passed, "{report:?}");
        assert_eq!(report.checked, 12);
    }

    #[test]
    fn adam_zero_gradient_is_a_no_op() {
        let mut net = Mlp::<f64>::new(&[4, 8, 3], 5).unwrap();
        let before = net.clone();
        let mut adam = AdamState::new(&net, 1e-3);
        let zero = GradBundle {
            layers: net.layers().iter().map(Dense::zeros_like).collect(),
            loss: 0.0,
        };
        adam_step(&mut net, &mut adam, &zero).unwrap();
        assert_eq!(net, before);
        assert_eq!(adam.t, 1);
    }

    #[test]
    fn adam_first_step_moves_by_learning_rate() {
        let mut net = Mlp::<f64>::new(&[4, 8, 3], 6).unwrap();
        let before = net.clone();
        let batch = Batch::new(array![[0.3, -0.1, 0.8, 0.2]], vec![1], vec![3.0]).unwrap();
        let g = loss_and_grads(&net, &batch).unwrap();
        let mut adam = AdamState::new(&net, 1e-3);
        adam_step(&mut net, &mut adam, &g).unwrap();
        for ((l0, l1), lg) in before.layers().iter().zip(net.layers()).zip(&g.layers) {
            Zip::from(&l0.weights).and(&l1.weights).and(&lg.weights).for_each(|&p0, &p1, &g| {
                let expected = if g.abs() > 1e-6 { -1e-3 * g.signum() } else { p1 - p0 };
                assert!((p1 - p0 - expected).abs() < 1e-7, "{p0} {p1} {g}");
            });
        }
    }

    #[test]
    fn adam_is_stateful() {
        let base = Mlp::<f64>::new(&[4, 8, 3], 7).unwrap();
        let batch = Batch::new(array![[0.3, -0.1, 0.8, 0.2]], vec![1], vec![3.0]).unwrap();
        let g = loss_and_grads(&base, &batch).unwrap();

        let mut twice = base.clone();
        let mut adam = AdamState::new(&twice, 1e-3);
        adam_step(&mut twice, &mut adam, &g).unwrap();
        adam_step(&mut twice, &mut adam, &g).unwrap();

        let mut doubled = base.clone();
        let mut adam2 = AdamState::new(&doubled, 1e-3);
        let g2 = GradBundle {
            layers: g
                .layers
                .iter()
                .map(|l| Dense {
                    weights: &l.weights * 2.0,
                    bias: &l.bias * 2.0,
                })
                .collect(),
            loss: g.loss,
        };
        adam_step(&mut doubled, &mut adam2, &g2).unwrap();
        assert_ne!(twice, doubled);
    }

    #[test]
    fn adam_rejects_shape_mismatch() {
        let mut net = Mlp::<f64>::new(&[4, 8, 3], 7).unwrap();
        let other = Mlp::<f64>::new(&[4, 6, 3], 7).unwrap();
        let mut adam = AdamState::new(&net, 1e-3);
        let g = GradBundle {
            layers: other.layers().to_vec(),
            loss: 0.0,
        };
        assert!(adam_step(&mut net, &mut adam, &g).is_err());
    }

    #[test]
    fn json_round_trip() {
        let net = Mlp::<f64>::new(&[12, 64, 64, 5], 8).unwrap();
        let text = net.to_json().unwrap();
        let back = Mlp::<f64>::from_json(&text).unwrap();
        assert_eq!(back, net);
        let x = [0.2; 12];
        assert_eq!(back.forward(&x).unwrap(), net.forward(&x).unwrap());
        assert!(Mlp::<f64>::from_json(&text[..text.len() / 2]).is_err());
        assert!(Mlp::<f64>::from_json(r#"{"dims":[2,2],"weights":[[1.0]],"biases":[[0.0,0.0]]}"#).is_err());
    }

    #[test]
    fn homogeneous_in_last_layer() {
        let mut net = Mlp::<f64>::new(&[4, 8, 3], 11).unwrap();
        let x = [0.5, -0.25, 0.75, 0.1];
        let y = net.forward(&x).unwrap();
        let last = net.layers.len() - 1;
        net.layers[last].weights.mapv_inplace(|w| 3.0 * w);
        let y3 = net.forward(&x).unwrap();
        for (a, b) in y.iter().zip(y3) {
            assert!((3.0 * a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn single_precision_network() {
        let net = Mlp::<f32>::new(&[12, 64, 64, 5], 8).unwrap();
        let out = net.forward(&[0.1; 12]).unwrap();
        assert_eq!(out.len(), 5);
        assert!(out.iter().all(|v| v.is_finite()));
    }
}
