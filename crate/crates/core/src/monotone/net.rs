use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{BaseActivation, DenseCache, MonotoneDense, UnitShape};
use crate::scoring::{kernel_score_grad, Ensemble};
use crate::{Error, Result, Scalar};

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

/// Scoring operator sitting between the `ν` block and the `h` block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ScoreOperator {
    /// Kernel-form CRPS of the transformed values (twCRPS).
    #[default]
    TwCrps,
    /// `(1/M) Σ_j 2 (ν(ŷ_j) − ν(y))²`, used by the convex toy alignment.
    QuadraticResidual,
}

impl ScoreOperator {
    /// Degree of positive homogeneity in the transformed values.
    pub fn degree(self) -> u32 {
        match self {
            ScoreOperator::TwCrps => 1,
            ScoreOperator::QuadraticResidual => 2,
        }
    }

    pub fn eval<T: Scalar>(self, values: &[T], obs: T) -> T {
        match self {
            ScoreOperator::TwCrps => kernel_score_grad(values, obs)
                .map(|g| g.score)
                .unwrap_or(T::nan()),
            ScoreOperator::QuadraticResidual => {
                let two = T::of(2.0);
                values
                    .iter()
                    .map(|&v| two * (v - obs) * (v - obs))
                    .sum::<T>()
                    / T::of_usize(values.len())
            }
        }
    }

    /// Score, gradient with respect to each value, gradient with respect to the observation.
    fn eval_grad<T: Scalar>(self, values: &[T], obs: T) -> (T, Vec<T>, T) {
        match self {
            ScoreOperator::TwCrps => {
                let g = kernel_score_grad(values, obs).expect("non-empty ensemble");
                (g.score, g.d_samples, g.d_obs)
            }
            ScoreOperator::QuadraticResidual => {
                let m = T::of_usize(values.len());
                let four = T::of(4.0);
                let d: Vec<T> = values.iter().map(|&v| four * (v - obs) / m).collect();
                let d_obs = -d.iter().copied().sum::<T>();
                (self.eval(values, obs), d, d_obs)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum HKind {
    /// `h(s) = exp(log_w) s + b`
    #[default]
    Affine,
    /// Monotone multilayer block ending in a linear unit.
    Monotone,
}

/// Architecture of an [`AlignmentNet`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NetConfig {
    pub nu_hidden: Vec<usize>,
    pub h_kind: HKind,
    pub h_hidden: Vec<usize>,
    pub activation: BaseActivation,
    pub operator: ScoreOperator,
}

impl Default for NetConfig {
    fn default() -> Self {
        Self {
            nu_hidden: vec![50],
            h_kind: HKind::Affine,
            h_hidden: vec![10, 10],
            activation: BaseActivation::Relu,
            operator: ScoreOperator::TwCrps,
        }
    }
}

/// `ν(z) = exp(log_scale) · layers((z − shift)/scale) + offset`
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(
    deserialize = "T: Scalar + Deserialize<'de>",
    serialize = "T: Scalar + Serialize"
))]
pub struct NuBlock<T> {
    pub layers: Vec<MonotoneDense<T>>,
    pub log_scale: T,
    pub offset: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
#[serde(bound(
    deserialize = "T: Scalar + Deserialize<'de>",
    serialize = "T: Scalar + Serialize"
))]
pub enum HBlock<T> {
    Affine { log_w: T, b: T },
    Monotone { layers: Vec<MonotoneDense<T>> },
}

/// The alignment model `ŝ = out_shift + out_scale · h(S(ν(ŷ), ν(y)))`.
///
/// Input and output normalizations are fixed affine maps set from the
/// training data; they are not trained and keep `ν` and `h` increasing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(
    deserialize = "T: Scalar + Deserialize<'de>",
    serialize = "T: Scalar + Serialize"
))]
pub struct AlignmentNet<T> {
    format_version: u32,
    config: NetConfig,
    input_shift: T,
    input_scale: T,
    output_shift: T,
    output_scale: T,
    nu: NuBlock<T>,
    h: HBlock<T>,
    /// Ensemble size seen during training, if any.
    #[serde(default)]
    ensemble_size: Option<usize>,
}

fn build_stack<T: Scalar>(
    dims: &[usize],
    activation: BaseActivation,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<MonotoneDense<T>>> {
    let mut layers = Vec::new();
    let mut fan_in = 1;
    for &width in dims {
        layers.push(MonotoneDense::init(
            fan_in,
            width,
            UnitShape::assignment(width),
            activation,
            rng,
        )?);
        fan_in = width;
    }
    layers.push(MonotoneDense::init(
        fan_in,
        1,
        vec![UnitShape::Linear],
        activation,
        rng,
    )?);
    Ok(layers)
}

fn run_stack<T: Scalar>(
    layers: &[MonotoneDense<T>],
    x: T,
    caches: Option<&mut [DenseCache<T>]>,
) -> T {
    let mut v = vec![x];
    match caches {
        Some(caches) => {
            for (l, c) in layers.iter().zip(caches.iter_mut()) {
                v = l.forward(&v, Some(c));
            }
        }
        None => {
            for l in layers {
                v = l.forward(&v, None);
            }
        }
    }
    v[0]
}

/// Backpropagates `d_out` through a stack; `grad` is the stack's slice of the flat gradient.
fn backprop_stack<T: Scalar>(
    layers: &[MonotoneDense<T>],
    caches: &[DenseCache<T>],
    d_out: T,
    grad: &mut [T],
) -> T {
    let mut offsets = Vec::with_capacity(layers.len());
    let mut acc = 0;
    for l in layers {
        offsets.push(acc);
        acc += l.param_count();
    }
    let mut d = vec![d_out];
    for (k, l) in layers.iter().enumerate().rev() {
        let slice = &mut grad[offsets[k]..offsets[k] + l.param_count()];
        d = l.backward(&d, &caches[k], slice);
    }
    d[0]
}

impl<T: Scalar> AlignmentNet<T> {
    /// Randomly initialized network; deterministic for a given seed.
    pub fn new(config: NetConfig, seed: u64) -> Result<Self> {
        if config
            .nu_hidden
            .iter()
            .chain(&config.h_hidden)
            .any(|&w| w == 0)
        {
            return Err(Error::invalid("hidden layer widths must be positive"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let nu_layers = build_stack(&config.nu_hidden, config.activation, &mut rng)?;
        let h = match config.h_kind {
            HKind::Affine => HBlock::Affine {
                log_w: T::zero(),
                b: T::zero(),
            },
            HKind::Monotone => HBlock::Monotone {
                layers: build_stack(&config.h_hidden, config.activation, &mut rng)?,
            },
        };
        Ok(Self {
            format_version: CHECKPOINT_FORMAT_VERSION,
            config,
            input_shift: T::zero(),
            input_scale: T::one(),
            output_shift: T::zero(),
            output_scale: T::one(),
            nu: NuBlock {
                layers: nu_layers,
                log_scale: T::zero(),
                offset: T::zero(),
            },
            h,
            ensemble_size: None,
        })
    }

    /// `ν = identity`, `h = identity`: the aligned score is the plain operator score.
    pub fn identity(operator: ScoreOperator) -> Self {
        let layer = MonotoneDense::new(
            1,
            1,
            vec![T::one()],
            vec![T::zero()],
            vec![UnitShape::Linear],
            BaseActivation::Relu,
        )
        .expect("1x1 layer");
        Self {
            format_version: CHECKPOINT_FORMAT_VERSION,
            config: NetConfig {
                nu_hidden: Vec::new(),
                h_kind: HKind::Affine,
                h_hidden: Vec::new(),
                activation: BaseActivation::Relu,
                operator,
            },
            input_shift: T::zero(),
            input_scale: T::one(),
            output_shift: T::zero(),
            output_scale: T::one(),
            nu: NuBlock {
                layers: vec![layer],
                log_scale: T::zero(),
                offset: T::zero(),
            },
            h: HBlock::Affine {
                log_w: T::zero(),
                b: T::zero(),
            },
            ensemble_size: None,
        }
    }

    /// Replaces `h` by the affine map `w s + b`; `w` must be positive.
    pub fn with_affine_h(mut self, w: T, b: T) -> Result<Self> {
        if !(w > T::zero()) || !w.is_finite() || !b.is_finite() {
            return Err(Error::invalid(
                "affine output map needs a finite slope w > 0",
            ));
        }
        self.h = HBlock::Affine { log_w: w.ln(), b };
        self.config.h_kind = HKind::Affine;
        Ok(self)
    }

    pub fn config(&self) -> &NetConfig {
        &self.config
    }

    pub fn operator(&self) -> ScoreOperator {
        self.config.operator
    }

    pub fn nu_block(&self) -> &NuBlock<T> {
        &self.nu
    }

    pub fn h_block(&self) -> &HBlock<T> {
        &self.h
    }

    pub fn set_input_normalization(&mut self, shift: T, scale: T) -> Result<()> {
        if !(scale > T::zero()) || !shift.is_finite() || !scale.is_finite() {
            return Err(Error::invalid(
                "input normalization needs a finite scale > 0",
            ));
        }
        self.input_shift = shift;
        self.input_scale = scale;
        Ok(())
    }

    pub fn set_output_normalization(&mut self, shift: T, scale: T) -> Result<()> {
        if !(scale > T::zero()) || !shift.is_finite() || !scale.is_finite() {
            return Err(Error::invalid(
                "output normalization needs a finite scale > 0",
            ));
        }
        self.output_shift = shift;
        self.output_scale = scale;
        Ok(())
    }

    pub fn ensemble_size(&self) -> Option<usize> {
        self.ensemble_size
    }

    pub fn set_ensemble_size(&mut self, m: Option<usize>) {
        self.ensemble_size = m;
    }

    pub fn output_normalization(&self) -> (T, T) {
        (self.output_shift, self.output_scale)
    }

    pub fn input_normalization(&self) -> (T, T) {
        (self.input_shift, self.input_scale)
    }

    fn normalize_input(&self, z: T) -> T {
        (z - self.input_shift) / self.input_scale
    }

    /// `ν̂(z)`; nondecreasing in `z`.
    pub fn nu(&self, z: T) -> T {
        let core = run_stack(&self.nu.layers, self.normalize_input(z), None);
        self.nu.log_scale.exp() * core + self.nu.offset
    }

    pub fn nu_forward(&self, z: T) -> Result<T> {
        if !z.is_finite() {
            return Err(Error::invalid("nu_forward needs a finite input"));
        }
        Ok(self.nu(z))
    }

    /// Slope of the overall output map `s ↦ out_shift + out_scale · h(s)` when `h` is affine.
    pub fn effective_slope(&self) -> Option<T> {
        match &self.h {
            HBlock::Affine { log_w, .. } => Some(log_w.exp() * self.output_scale),
            HBlock::Monotone { .. } => None,
        }
    }

    /// Chaining function with the output slope folded in.
    ///
    /// The operator is positively homogeneous of degree `p`, so
    /// `w · S(ν) = S(w^{1/p} ν)`; with affine `h` the learned score is then
    /// an ordinary weighted score with chaining `w^{1/p} ν̂` plus a constant.
    /// Falls back to `ν̂` for a multilayer `h`.
    pub fn effective_nu(&self, z: T) -> T {
        match self.effective_slope() {
            Some(w) => {
                let k = match self.operator().degree() {
                    1 => w,
                    p => w.powf(T::one() / T::of(p as f64)),
                };
                k * self.nu(z)
            }
            None => self.nu(z),
        }
    }

    fn h_forward(&self, s: T, caches: Option<&mut [DenseCache<T>]>) -> T {
        match &self.h {
            HBlock::Affine { log_w, b } => log_w.exp() * s + *b,
            HBlock::Monotone { layers } => run_stack(layers, s, caches),
        }
    }

    /// Operator score of the `ν`-transformed ensemble, before `h`.
    pub fn inner_score(&self, samples: &[T], obs: T) -> T {
        let values: Vec<T> = samples.iter().map(|&x| self.nu(x)).collect();
        self.operator().eval(&values, self.nu(obs))
    }

    /// Output map applied to an operator score.
    pub fn output_map(&self, s: T) -> T {
        self.output_shift + self.output_scale * self.h_forward(s, None)
    }

    /// `ŝ^d` for raw samples and observation: `M + 1` evaluations of `ν`, one of `h`.
    pub fn align_forward_values(&self, samples: &[T], obs: T) -> Result<T> {
        if samples.is_empty() {
            return Err(Error::invalid(
                "alignment forward needs at least one sample",
            ));
        }
        if !obs.is_finite() || samples.iter().any(|s| !s.is_finite()) {
            return Err(Error::invalid("alignment forward needs finite inputs"));
        }
        Ok(self.output_map(self.inner_score(samples, obs)))
    }

    pub fn align_forward(&self, ens: &Ensemble<T>) -> T {
        self.output_map(self.inner_score(ens.samples(), ens.observation()))
    }

    // --- flat parameter vector -------------------------------------------------

    fn nu_layer_params(&self) -> usize {
        self.nu.layers.iter().map(|l| l.param_count()).sum()
    }

    fn h_params(&self) -> usize {
        match &self.h {
            HBlock::Affine { .. } => 2,
            HBlock::Monotone { layers } => layers.iter().map(|l| l.param_count()).sum(),
        }
    }

    /// Order: `ν` layers (weights, biases), `log_scale`, `offset`, then `h`.
    pub fn param_count(&self) -> usize {
        self.nu_layer_params() + 2 + self.h_params()
    }

    pub fn params(&self) -> Vec<T> {
        let mut p = Vec::with_capacity(self.param_count());
        for l in &self.nu.layers {
            l.write_params(&mut p);
        }
        p.push(self.nu.log_scale);
        p.push(self.nu.offset);
        match &self.h {
            HBlock::Affine { log_w, b } => {
                p.push(*log_w);
                p.push(*b);
            }
            HBlock::Monotone { layers } => {
                for l in layers {
                    l.write_params(&mut p);
                }
            }
        }
        p
    }

    pub fn set_params(&mut self, params: &[T]) -> Result<()> {
        if params.len() != self.param_count() {
            return Err(Error::invalid(format!(
                "expected {} parameters, got {}",
                self.param_count(),
                params.len()
            )));
        }
        let mut rest = params;
        for l in &mut self.nu.layers {
            rest = l.read_params(rest);
        }
        self.nu.log_scale = rest[0];
        self.nu.offset = rest[1];
        rest = &rest[2..];
        match &mut self.h {
            HBlock::Affine { log_w, b } => {
                *log_w = rest[0];
                *b = rest[1];
            }
            HBlock::Monotone { layers } => {
                for l in layers {
                    rest = l.read_params(rest);
                }
            }
        }
        Ok(())
    }

    /// Index of the output offset `b` in the flat parameter vector, for affine `h`.
    pub fn output_offset_index(&self) -> Option<usize> {
        match &self.h {
            HBlock::Affine { .. } => Some(self.param_count() - 1),
            HBlock::Monotone { .. } => None,
        }
    }

    /// Adds `weight · ∂(ŝ − target)²/∂θ` to `grad` and returns `(ŝ, (ŝ − target)²)`.
    pub fn accumulate_gradient(
        &self,
        samples: &[T],
        obs: T,
        target: T,
        weight: T,
        grad: &mut [T],
    ) -> (T, T) {
        debug_assert_eq!(grad.len(), self.param_count());
        let m = samples.len();
        let n_layers = self.nu.layers.len();
        let scale = self.nu.log_scale.exp();

        // forward through ν for the M samples and the observation (last slot)
        let mut caches: Vec<Vec<DenseCache<T>>> = Vec::with_capacity(m + 1);
        let mut cores = Vec::with_capacity(m + 1);
        for &x in samples.iter().chain(std::iter::once(&obs)) {
            let mut c = vec![DenseCache::default(); n_layers];
            let core = run_stack(&self.nu.layers, self.normalize_input(x), Some(&mut c));
            caches.push(c);
            cores.push(core);
        }
        let values: Vec<T> = cores[..m]
            .iter()
            .map(|&c| scale * c + self.nu.offset)
            .collect();
        let v_obs = scale * cores[m] + self.nu.offset;
        let (s, d_values, d_obs) = self.operator().eval_grad(&values, v_obs);

        let h_start = self.nu_layer_params() + 2;
        let mut h_caches = match &self.h {
            HBlock::Monotone { layers } => vec![DenseCache::default(); layers.len()],
            HBlock::Affine { .. } => Vec::new(),
        };
        let h_out = self.h_forward(s, Some(&mut h_caches));
        let out = self.output_shift + self.output_scale * h_out;
        let resid = out - target;
        let d_h = weight * T::of(2.0) * resid * self.output_scale;

        let d_s = match &self.h {
            HBlock::Affine { log_w, .. } => {
                let w = log_w.exp();
                grad[h_start] = grad[h_start] + d_h * w * s;
                grad[h_start + 1] = grad[h_start + 1] + d_h;
                d_h * w
            }
            HBlock::Monotone { layers } => {
                backprop_stack(layers, &h_caches, d_h, &mut grad[h_start..])
            }
        };

        if d_s != T::zero() {
            let ls_idx = h_start - 2;
            let (layer_grad, tail) = grad.split_at_mut(ls_idx);
            for (k, cache) in caches.iter().enumerate() {
                let g = d_s * if k < m { d_values[k] } else { d_obs };
                if g == T::zero() {
                    continue;
                }
                tail[0] = tail[0] + g * scale * cores[k];
                tail[1] = tail[1] + g;
                backprop_stack(&self.nu.layers, cache, g * scale, layer_grad);
            }
        }
        (out, resid * resid)
    }

    /// Exact gradient of `(ŝ − target)²` with respect to all parameters.
    pub fn align_backward(&self, ens: &Ensemble<T>, target: T) -> Result<Vec<T>> {
        if !target.is_finite() {
            return Err(Error::invalid("alignment target must be finite"));
        }
        let mut grad = vec![T::zero(); self.param_count()];
        self.accumulate_gradient(
            ens.samples(),
            ens.observation(),
            target,
            T::one(),
            &mut grad,
        );
        Ok(grad)
    }

    /// All effective monotone weights across both blocks.
    pub fn effective_weights(&self) -> Vec<T> {
        let mut all: Vec<T> = self
            .nu
            .layers
            .iter()
            .flat_map(|l| l.effective_weights())
            .collect();
        if let HBlock::Monotone { layers } = &self.h {
            all.extend(layers.iter().flat_map(|l| l.effective_weights()));
        }
        all
    }

    pub fn params_finite(&self) -> bool {
        self.params().iter().all(|p| p.is_finite())
            && self.input_scale.is_finite()
            && self.output_scale.is_finite()
    }
}

impl<T: Scalar + Serialize> AlignmentNet<T> {
    pub fn save_checkpoint(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self).map_err(|e| Error::parse(path, e))?;
        std::fs::write(path, json).map_err(|e| Error::io(path, e))
    }
}

impl<T: Scalar + for<'de> Deserialize<'de>> AlignmentNet<T> {
    pub fn load_checkpoint(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let net: Self = serde_json::from_str(&text).map_err(|e| Error::parse(path, e))?;
        if net.format_version != CHECKPOINT_FORMAT_VERSION {
            return Err(Error::parse(
                path,
                format!(
                    "unsupported checkpoint format version {}",
                    net.format_version
                ),
            ));
        }
        if net.nu.layers.is_empty()
            || net.nu.layers[0].in_dim() != 1
            || net.nu.layers.last().map(|l| l.out_dim()) != Some(1)
            || net
                .nu
                .layers
                .windows(2)
                .any(|w| w[0].out_dim() != w[1].in_dim())
        {
            return Err(Error::parse(path, "inconsistent layer shapes in nu block"));
        }
        if !net.params_finite() {
            return Err(Error::parse(
                path,
                "checkpoint contains non-finite parameters",
            ));
        }
        Ok(net)
    }
}
