//! Small dense-network toolkit with explicit forward traces and backward
//! passes, all in `f64`.
//!
//! Parameter containers implement [`Params`], which exposes every tensor by
//! a dotted name. Gradients are stored in a second instance of the same
//! type, so optimizers, checkpoints and finite-difference checks all work
//! off the same visitor.

mod adam;
pub mod gradcheck;
mod gru;
mod lstm;

pub use adam::{Adam, AdamConfig};
pub use gru::{Gru, GruTrace};
pub use lstm::{Lstm, LstmState, LstmTrace};

use ndarray::{Array1, Array2, ArrayView1};
use rand::Rng;
use rand_distr::{Distribution, Uniform};

/// A collection of named `f64` tensors.
pub trait Params {
    fn for_each(&self, f: &mut dyn FnMut(&str, &[usize], &[f64]));
    fn for_each_mut(&mut self, f: &mut dyn FnMut(&str, &mut [f64]));
}

impl Params for Array1<f64> {
    fn for_each(&self, f: &mut dyn FnMut(&str, &[usize], &[f64])) {
        f("", self.shape(), self.as_slice().expect("standard layout"));
    }

    fn for_each_mut(&mut self, f: &mut dyn FnMut(&str, &mut [f64])) {
        f("", self.as_slice_mut().expect("standard layout"));
    }
}

impl Params for Array2<f64> {
    fn for_each(&self, f: &mut dyn FnMut(&str, &[usize], &[f64])) {
        let shape = self.shape().to_vec();
        f("", &shape, self.as_slice().expect("standard layout"));
    }

    fn for_each_mut(&mut self, f: &mut dyn FnMut(&str, &mut [f64])) {
        f("", self.as_slice_mut().expect("standard layout"));
    }
}

impl<P: Params> Params for Vec<P> {
    fn for_each(&self, f: &mut dyn FnMut(&str, &[usize], &[f64])) {
        for (i, p) in self.iter().enumerate() {
            visit_field(&i.to_string(), p, f);
        }
    }

    fn for_each_mut(&mut self, f: &mut dyn FnMut(&str, &mut [f64])) {
        for (i, p) in self.iter_mut().enumerate() {
            visit_field_mut(&i.to_string(), p, f);
        }
    }
}

fn join(prefix: &str, name: &str) -> String {
    if name.is_empty() {
        prefix.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}

pub fn visit_field<P: Params + ?Sized>(prefix: &str, p: &P, f: &mut dyn FnMut(&str, &[usize], &[f64])) {
    p.for_each(&mut |name, shape, data| f(&join(prefix, name), shape, data));
}

pub fn visit_field_mut<P: Params + ?Sized>(prefix: &str, p: &mut P, f: &mut dyn FnMut(&str, &mut [f64])) {
    p.for_each_mut(&mut |name, data| f(&join(prefix, name), data));
}

/// Implements [`Params`] for a struct by listing its parameter fields.
#[macro_export]
macro_rules! impl_params {
    ($ty:ty { $($field:ident),* $(,)? }) => {
        impl $crate::nn::Params for $ty {
            fn for_each(&self, f: &mut dyn FnMut(&str, &[usize], &[f64])) {
                $( $crate::nn::visit_field(stringify!($field), &self.$field, f); )*
            }
            fn for_each_mut(&mut self, f: &mut dyn FnMut(&str, &mut [f64])) {
                $( $crate::nn::visit_field_mut(stringify!($field), &mut self.$field, f); )*
            }
        }
    };
}

pub fn param_count<P: Params + ?Sized>(p: &P) -> usize {
    let mut n = 0;
    p.for_each(&mut |_, _, d| n += d.len());
    n
}

pub fn flatten<P: Params + ?Sized>(p: &P) -> Vec<f64> {
    let mut out = Vec::new();
    p.for_each(&mut |_, _, d| out.extend_from_slice(d));
    out
}

/// Overwrites every parameter from a flat vector in visiting order.
pub fn assign_flat<P: Params + ?Sized>(p: &mut P, values: &[f64]) {
    let mut offset = 0;
    p.for_each_mut(&mut |_, d| {
        d.copy_from_slice(&values[offset..offset + d.len()]);
        offset += d.len();
    });
    assert_eq!(offset, values.len(), "flat vector length mismatch");
}

pub fn fill<P: Params + ?Sized>(p: &mut P, value: f64) {
    p.for_each_mut(&mut |_, d| d.fill(value));
}

pub fn zeros_like<P: Params + Clone>(p: &P) -> P {
    let mut z = p.clone();
    fill(&mut z, 0.0);
    z
}

/// `dst += scale * src` for two containers of identical layout.
pub fn add_scaled<P: Params + ?Sized>(dst: &mut P, src: &P, scale: f64) {
    let flat = flatten(src);
    let mut offset = 0;
    dst.for_each_mut(&mut |_, d| {
        let n = d.len();
        for (x, s) in d.iter_mut().zip(&flat[offset..offset + n]) {
            *x += scale * s;
        }
        offset += n;
    });
}

pub fn scale<P: Params + ?Sized>(p: &mut P, factor: f64) {
    p.for_each_mut(&mut |_, d| d.iter_mut().for_each(|x| *x *= factor));
}

pub fn all_finite<P: Params + ?Sized>(p: &P) -> bool {
    let mut ok = true;
    p.for_each(&mut |_, _, d| ok &= d.iter().all(|x| x.is_finite()));
    ok
}

/// Uniform(−a, a) with `a = sqrt(6 / (fan_in + fan_out))`.
pub fn xavier_uniform<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Array2<f64> {
    let a = (6.0 / (rows + cols) as f64).sqrt();
    let dist = Uniform::new_inclusive(-a, a).expect("finite bound");
    Array2::from_shape_fn((rows, cols), |_| dist.sample(rng))
}

/// `dw += a ⊗ b`.
pub fn add_outer(dw: &mut Array2<f64>, a: ArrayView1<f64>, b: ArrayView1<f64>) {
    for (mut row, &ai) in dw.rows_mut().into_iter().zip(a.iter()) {
        if ai != 0.0 {
            row.scaled_add(ai, &b);
        }
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn softmax(logits: ArrayView1<f64>) -> Array1<f64> {
    let max = logits.fold(f64::NEG_INFINITY, |m, &x| m.max(x));
    let exp = logits.mapv(|x| (x - max).exp());
    let sum = exp.sum();
    exp / sum
}

pub fn log_softmax(logits: ArrayView1<f64>) -> Array1<f64> {
    let max = logits.fold(f64::NEG_INFINITY, |m, &x| m.max(x));
    let lse = max + logits.iter().map(|&x| (x - max).exp()).sum::<f64>().ln();
    logits.mapv(|x| x - lse)
}

/// Index of the largest value; the lowest index wins ties.
pub fn argmax(values: ArrayView1<f64>) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Affine layer `y = W x + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl_params!(Linear { weight, bias });

impl Linear {
    pub fn zeros(out_dim: usize, in_dim: usize) -> Self {
        Linear {
            weight: Array2::zeros((out_dim, in_dim)),
            bias: Array1::zeros(out_dim),
        }
    }

    pub fn init<R: Rng + ?Sized>(out_dim: usize, in_dim: usize, rng: &mut R) -> Self {
        Linear {
            weight: xavier_uniform(out_dim, in_dim, rng),
            bias: Array1::zeros(out_dim),
        }
    }

    pub fn in_dim(&self) -> usize {
        self.weight.ncols()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.nrows()
    }

    pub fn forward(&self, x: ArrayView1<f64>) -> Array1<f64> {
        self.weight.dot(&x) + &self.bias
    }

    /// Accumulates parameter gradients into `grad` and returns `dL/dx`.
    pub fn backward(&self, x: ArrayView1<f64>, dy: ArrayView1<f64>, grad: &mut Linear) -> Array1<f64> {
        add_outer(&mut grad.weight, dy, x);
        grad.bias += &dy;
        self.weight.t().dot(&dy)
    }
}
