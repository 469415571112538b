use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Rng;

use super::tensor::{gemm, Tensor};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Param {
    pub name: String,
    pub shape: Vec<usize>,
    pub value: Vec<f64>,
    #[serde(skip)]
    pub grad: Vec<f64>,
}

/// Every trainable array of a model, each with a same-shaped gradient slot.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ParamSet {
    pub params: Vec<Param>,
    pub seed: u64,
}

impl ParamSet {
    pub fn new(seed: u64) -> Self {
        Self { params: Vec::new(), seed }
    }

    pub fn add(&mut self, name: impl Into<String>, shape: Vec<usize>, value: Vec<f64>) -> usize {
        debug_assert_eq!(shape.iter().product::<usize>(), value.len());
        let grad = vec![0.0; value.len()];
        self.params.push(Param { name: name.into(), shape, value, grad });
        self.params.len() - 1
    }

    pub fn zero_grad(&mut self) {
        for p in &mut self.params {
            p.grad.clear();
            p.grad.resize(p.value.len(), 0.0);
        }
    }

    pub fn num_values(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    pub fn grad_norm(&self) -> f64 {
        self.params.iter().flat_map(|p| p.grad.iter()).map(|g| g * g).sum::<f64>().sqrt()
    }

    pub fn flat_values(&self) -> Vec<f64> {
        self.params.iter().flat_map(|p| p.value.iter().copied()).collect()
    }

    pub fn flat_grads(&self) -> Vec<f64> {
        self.params.iter().flat_map(|p| p.grad.iter().copied()).collect()
    }

    pub fn set_flat_values(&mut self, v: &[f64]) -> Result<()> {
        if v.len() != self.num_values() {
            return Err(Error::Shape("flat parameter vector has wrong length".into()));
        }
        let mut off = 0;
        for p in &mut self.params {
            let n = p.value.len();
            p.value.copy_from_slice(&v[off..off + n]);
            off += n;
        }
        Ok(())
    }

    /// Restores values from a loaded set with the same names and shapes.
    pub fn load_values(&mut self, other: &ParamSet) -> Result<()> {
        if self.params.len() != other.params.len() {
            return Err(Error::Shape("parameter count differs from checkpoint".into()));
        }
        for (p, q) in self.params.iter_mut().zip(&other.params) {
            if p.name != q.name || p.shape != q.shape || q.value.len() != p.value.len() {
                return Err(Error::Shape(format!("parameter {} does not match checkpoint", p.name)));
            }
            p.value.copy_from_slice(&q.value);
        }
        Ok(())
    }

    pub fn all_finite(&self) -> bool {
        self.params.iter().all(|p| p.value.iter().all(|x| x.is_finite()))
    }
}

/// Affine map `y = x·W + b` with `W` stored `[in, out]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Linear {
    pub w: usize,
    pub b: usize,
    pub din: usize,
    pub dout: usize,
}

impl Linear {
    /// Uniform init in `±sqrt(6 / (fan_in + fan_out))`, zero bias.
    pub fn new(ps: &mut ParamSet, name: &str, din: usize, dout: usize, rng: &mut Rng) -> Self {
        let bound = (6.0 / (din + dout) as f64).sqrt();
        let w: Vec<f64> = (0..din * dout).map(|_| rng.random_range(-bound..bound)).collect();
        let w = ps.add(format!("{name}.weight"), vec![din, dout], w);
        let b = ps.add(format!("{name}.bias"), vec![dout], vec![0.0; dout]);
        Self { w, b, din, dout }
    }

    pub fn forward(&self, ps: &ParamSet, x: &Tensor) -> Result<Tensor> {
        if x.cols() != self.din {
            return Err(Error::Shape(format!("linear expects {} inputs, got {}", self.din, x.cols())));
        }
        let n = x.rows();
        let bias = &ps.params[self.b].value;
        let mut y = Tensor::zeros(n, self.dout);
        for r in 0..n {
            y.row_mut(r).copy_from_slice(bias);
        }
        gemm(n, self.din, self.dout, 1.0, &x.data, false, &ps.params[self.w].value, false, 1.0, &mut y.data);
        Ok(y)
    }

    /// Accumulates parameter gradients; returns the input gradient if asked.
    pub fn backward(&self, ps: &mut ParamSet, x: &Tensor, dy: &Tensor, need_dx: bool) -> Option<Tensor> {
        let n = x.rows();
        {
            let gw = &mut ps.params[self.w].grad;
            gemm(self.din, n, self.dout, 1.0, &x.data, true, &dy.data, false, 1.0, gw);
        }
        {
            let gb = &mut ps.params[self.b].grad;
            for r in 0..n {
                for (g, d) in gb.iter_mut().zip(dy.row(r)) {
                    *g += d;
                }
            }
        }
        need_dx.then(|| {
            let mut dx = Tensor::zeros(n, self.din);
            gemm(n, self.dout, self.din, 1.0, &dy.data, false, &ps.params[self.w].value, true, 0.0, &mut dx.data);
            dx
        })
    }
}

/// Stack of linear layers with tanh after each hidden layer (and optionally the last).
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Linear>,
    pub tanh_last: bool,
}

/// Activations kept from a forward pass for the matching backward pass.
#[derive(Debug, Clone, Default)]
pub struct MlpCache {
    inputs: Vec<Tensor>,
    output: Option<Tensor>,
}

impl Mlp {
    pub fn new(ps: &mut ParamSet, name: &str, sizes: &[usize], tanh_last: bool, rng: &mut Rng) -> Self {
        let layers = sizes
            .windows(2)
            .enumerate()
            .map(|(i, w)| Linear::new(ps, &format!("{name}.{i}"), w[0], w[1], rng))
            .collect();
        Self { layers, tanh_last }
    }

    fn activates(&self, i: usize) -> bool {
        i + 1 < self.layers.len() || self.tanh_last
    }

    pub fn forward(&self, ps: &ParamSet, x: &Tensor) -> Result<Tensor> {
        let mut h = x.clone();
        for (i, l) in self.layers.iter().enumerate() {
            h = l.forward(ps, &h)?;
            if self.activates(i) {
                h.data.iter_mut().for_each(|v| *v = v.tanh());
            }
        }
        Ok(h)
    }

    pub fn forward_cached(&self, ps: &ParamSet, x: Tensor) -> Result<(Tensor, MlpCache)> {
        let mut cache = MlpCache::default();
        let mut h = x;
        for (i, l) in self.layers.iter().enumerate() {
            let mut y = l.forward(ps, &h)?;
            if self.activates(i) {
                y.data.iter_mut().for_each(|v| *v = v.tanh());
            }
            cache.inputs.push(h);
            h = y;
        }
        cache.output = Some(h.clone());
        Ok((h, cache))
    }

    pub fn backward(&self, ps: &mut ParamSet, cache: &MlpCache, dy: Tensor, need_dx: bool) -> Option<Tensor> {
        let mut g = dy;
        let n = self.layers.len();
        for i in (0..n).rev() {
            if self.activates(i) {
                let y = if i + 1 == n {
                    cache.output.as_ref().expect("forward_cached before backward")
                } else {
                    &cache.inputs[i + 1]
                };
                for (gv, yv) in g.data.iter_mut().zip(&y.data) {
                    *gv *= 1.0 - yv * yv;
                }
            }
            {
                let dx = self.layers[i].backward(ps, &cache.inputs[i], &g, need_dx || i > 0)?;
                g = dx
            }
        }
        Some(g)
    }
}

/// Inverted dropout: kept units are scaled by `1 / (1 - p)`.
pub fn dropout_mask(len: usize, p: f64, rng: &mut Rng) -> Vec<f64> {
    if p <= 0.0 {
        return vec![1.0; len];
    }
    let keep = 1.0 / (1.0 - p);
    (0..len).map(|_| if rng.random::<f64>() < p { 0.0 } else { keep }).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from;

    #[test]
    fn zero_weights_give_zero_output() {
        let mut ps = ParamSet::new(0);
        let mlp = Mlp::new(&mut ps, "m", &[3, 4, 2], false, &mut rng_from(0));
        for p in &mut ps.params {
            p.value.iter_mut().for_each(|v| *v = 0.0);
        }
        let y = mlp.forward(&ps, &Tensor::from_rows(&[[1.0, -2.0, 0.5]])).unwrap();
        assert!(y.data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn identity_linear_layer() {
        let mut ps = ParamSet::new(0);
        let l = Linear::new(&mut ps, "id", 3, 3, &mut rng_from(0));
        ps.params[l.w].value = vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0];
        let x = Tensor::from_rows(&[[0.3, -0.7, 2.0], [1.0, 2.0, 3.0]]);
        assert_eq!(l.forward(&ps, &x).unwrap(), x);
    }

    #[test]
    fn two_layer_net_matches_plain_arithmetic() {
        let mut ps = ParamSet::new(0);
        let mut rng = rng_from(5);
        let mlp = Mlp::new(&mut ps, "m", &[4, 6, 3], false, &mut rng);
        for p in &mut ps.params {
            p.value.iter_mut().for_each(|v| *v = rng.random_range(-1.0..1.0));
        }
        let x: Vec<[f64; 4]> = (0..5).map(|_| std::array::from_fn(|_| rng.random_range(-1.0..1.0))).collect();
        let y = mlp.forward(&ps, &Tensor::from_rows(&x)).unwrap();
        let val = |i: usize| &ps.params[i].value;
        for (r, xr) in x.iter().enumerate() {
            let h: Vec<f64> =
                (0..6).map(|j| ((0..4).map(|i| xr[i] * val(0)[i * 6 + j]).sum::<f64>() + val(1)[j]).tanh()).collect();
            for k in 0..3 {
                let o = (0..6).map(|j| h[j] * val(2)[j * 3 + k]).sum::<f64>() + val(3)[k];
                assert!((o - y.row(r)[k]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn mlp_backward_matches_finite_differences() {
        let mut ps = ParamSet::new(0);
        let mut rng = rng_from(1);
        let mlp = Mlp::new(&mut ps, "m", &[3, 5, 2], true, &mut rng);
        let x = Tensor::from_rows(&[[0.2, -0.4, 0.9], [0.5, 0.1, -0.3]]);
        let w = Tensor::from_rows(&[[1.0, -2.0], [0.5, 3.0]]);
        let loss = |ps: &ParamSet| -> f64 {
            let y = mlp.forward(ps, &x).unwrap();
            y.data.iter().zip(&w.data).map(|(a, b)| a * b).sum()
        };
        ps.zero_grad();
        let (_, cache) = mlp.forward_cached(&ps, x.clone()).unwrap();
        mlp.backward(&mut ps, &cache, w.clone(), false);
        let g = ps.flat_grads();
        let v0 = ps.flat_values();
        for i in 0..v0.len() {
            let mut v = v0.clone();
            v[i] += 1e-5;
            ps.set_flat_values(&v).unwrap();
            let up = loss(&ps);
            v[i] -= 2e-5;
            ps.set_flat_values(&v).unwrap();
            let dn = loss(&ps);
            let fd = (up - dn) / 2e-5;
            assert!((fd - g[i]).abs() <= 1e-7 + 1e-5 * fd.abs(), "param {i}: {fd} vs {}", g[i]);
        }
    }

    #[test]
    fn dropout_keeps_expectation() {
        let m = dropout_mask(200_000, 0.01, &mut rng_from(3));
        let mean = m.iter().sum::<f64>() / m.len() as f64;
        assert!((mean - 1.0).abs() < 0.01);
        assert!(m.iter().all(|&v| v == 0.0 || (v - 1.0 / 0.99).abs() < 1e-15));
    }
}
