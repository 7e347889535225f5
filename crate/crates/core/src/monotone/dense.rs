use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{BaseActivation, UnitShape};
use crate::{Error, Result, Scalar};

/// Dense layer whose effective weights are `|raw_weights|`, so every output is
/// nondecreasing in every input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(
    deserialize = "T: Scalar + Deserialize<'de>",
    serialize = "T: Scalar + Serialize"
))]
pub struct MonotoneDense<T> {
    in_dim: usize,
    out_dim: usize,
    /// Row-major `out_dim × in_dim`.
    raw_weights: Vec<T>,
    bias: Vec<T>,
    units: Vec<UnitShape>,
    activation: BaseActivation,
}

/// Values saved by [`MonotoneDense::forward`] for the backward pass.
#[derive(Debug, Clone, Default)]
pub struct DenseCache<T> {
    input: Vec<T>,
    act_slope: Vec<T>,
}

impl<T: Scalar> MonotoneDense<T> {
    pub fn new(
        in_dim: usize,
        out_dim: usize,
        raw_weights: Vec<T>,
        bias: Vec<T>,
        units: Vec<UnitShape>,
        activation: BaseActivation,
    ) -> Result<Self> {
        if in_dim == 0 || out_dim == 0 {
            return Err(Error::invalid("monotone layer dimensions must be positive"));
        }
        if raw_weights.len() != in_dim * out_dim || bias.len() != out_dim || units.len() != out_dim
        {
            return Err(Error::invalid(format!(
                "monotone layer {in_dim}->{out_dim}: got {} weights, {} biases, {} unit shapes",
                raw_weights.len(),
                bias.len(),
                units.len()
            )));
        }
        Ok(Self {
            in_dim,
            out_dim,
            raw_weights,
            bias,
            units,
            activation,
        })
    }

    /// Uniform `(−r, r)` init for weights and biases with `r = 1/sqrt(in_dim)`.
    pub fn init(
        in_dim: usize,
        out_dim: usize,
        units: Vec<UnitShape>,
        activation: BaseActivation,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let r = 1.0 / (in_dim as f64).sqrt();
        let mut draw = || T::of(rng.gen_range(-r..r));
        let raw_weights = (0..in_dim * out_dim).map(|_| draw()).collect();
        let bias = (0..out_dim).map(|_| draw()).collect();
        Self::new(in_dim, out_dim, raw_weights, bias, units, activation)
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn units(&self) -> &[UnitShape] {
        &self.units
    }

    pub fn raw_weights(&self) -> &[T] {
        &self.raw_weights
    }

    pub fn bias(&self) -> &[T] {
        &self.bias
    }

    pub fn effective_weights(&self) -> impl Iterator<Item = T> + '_ {
        self.raw_weights.iter().map(|w| w.abs())
    }

    pub fn param_count(&self) -> usize {
        self.raw_weights.len() + self.bias.len()
    }

    pub(crate) fn write_params(&self, out: &mut Vec<T>) {
        out.extend_from_slice(&self.raw_weights);
        out.extend_from_slice(&self.bias);
    }

    /// Reads this layer's parameters from the front of `src`, returning the rest.
    pub(crate) fn read_params<'a>(&mut self, src: &'a [T]) -> &'a [T] {
        let (w, rest) = src.split_at(self.raw_weights.len());
        let (b, rest) = rest.split_at(self.bias.len());
        self.raw_weights.copy_from_slice(w);
        self.bias.copy_from_slice(b);
        rest
    }

    pub fn forward(&self, input: &[T], cache: Option<&mut DenseCache<T>>) -> Vec<T> {
        debug_assert_eq!(input.len(), self.in_dim);
        let mut out = Vec::with_capacity(self.out_dim);
        let mut slopes = Vec::with_capacity(if cache.is_some() { self.out_dim } else { 0 });
        for o in 0..self.out_dim {
            let row = &self.raw_weights[o * self.in_dim..(o + 1) * self.in_dim];
            let pre = row
                .iter()
                .zip(input)
                .fold(self.bias[o], |acc, (&w, &x)| acc + w.abs() * x);
            let (v, d) = self.units[o].apply(self.activation, pre);
            out.push(v);
            if cache.is_some() {
                slopes.push(d);
            }
        }
        if let Some(c) = cache {
            c.input.clear();
            c.input.extend_from_slice(input);
            c.act_slope = slopes;
        }
        out
    }

    /// Accumulates parameter gradients into `grad` (this layer's slice of the
    /// flat gradient) and returns the gradient with respect to the input.
    pub fn backward(&self, d_out: &[T], cache: &DenseCache<T>, grad: &mut [T]) -> Vec<T> {
        let (g_w, g_b) = grad.split_at_mut(self.raw_weights.len());
        let mut d_in = vec![T::zero(); self.in_dim];
        for o in 0..self.out_dim {
            let d_pre = d_out[o] * cache.act_slope[o];
            if d_pre == T::zero() {
                continue;
            }
            g_b[o] = g_b[o] + d_pre;
            let base = o * self.in_dim;
            for i in 0..self.in_dim {
                let w = self.raw_weights[base + i];
                g_w[base + i] = g_w[base + i] + d_pre * cache.input[i] * w.sign0();
                d_in[i] = d_in[i] + d_pre * w.abs();
            }
        }
        d_in
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn layer() -> MonotoneDense<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        MonotoneDense::init(
            3,
            6,
            UnitShape::assignment(6),
            BaseActivation::Relu,
            &mut rng,
        )
        .unwrap()
    }

    #[test]
    fn shape_checks() {
        assert!(MonotoneDense::<f64>::new(
            2,
            1,
            vec![1.0],
            vec![0.0],
            vec![UnitShape::Linear],
            BaseActivation::Relu
        )
        .is_err());
        assert!(MonotoneDense::<f64>::new(
            0,
            1,
            vec![],
            vec![0.0],
            vec![UnitShape::Linear],
            BaseActivation::Relu
        )
        .is_err());
    }

    #[test]
    fn nondecreasing_in_each_input() {
        let l = layer();
        assert!(l.effective_weights().all(|w| w >= 0.0));
        let base = [0.3, -0.2, 0.9];
        let y0 = l.forward(&base, None);
        for i in 0..3 {
            let mut x = base;
            x[i] += 0.37;
            let y1 = l.forward(&x, None);
            assert!(y0.iter().zip(&y1).all(|(a, b)| b >= a));
        }
    }

    #[test]
    fn backward_matches_finite_differences() {
        let l = layer();
        let x = [0.31, -0.17, 0.64];
        let upstream = [0.5, -1.0, 2.0, 0.25, 1.5, -0.75];
        let loss = |l: &MonotoneDense<f64>, x: &[f64]| -> f64 {
            l.forward(x, None)
                .iter()
                .zip(&upstream)
                .map(|(a, b)| a * b)
                .sum()
        };
        let mut cache = DenseCache::default();
        l.forward(&x, Some(&mut cache));
        let mut grad = vec![0.0; l.param_count()];
        let d_in = l.backward(&upstream, &cache, &mut grad);
        let mut params = Vec::new();
        l.write_params(&mut params);
        let h = 1e-6;
        for k in 0..params.len() {
            let mut p = params.clone();
            let mut lp = l.clone();
            p[k] += h;
            lp.read_params(&p);
            let up = loss(&lp, &x);
            p[k] -= 2.0 * h;
            lp.read_params(&p);
            let dn = loss(&lp, &x);
            assert!(((up - dn) / (2.0 * h) - grad[k]).abs() < 1e-6, "param {k}");
        }
        for i in 0..3 {
            let mut xp = x;
            xp[i] += h;
            let mut xm = x;
            xm[i] -= h;
            let fd = (loss(&l, &xp) - loss(&l, &xm)) / (2.0 * h);
            assert!((fd - d_in[i]).abs() < 1e-6);
        }
    }
}
