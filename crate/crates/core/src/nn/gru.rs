use ndarray::{s, Array1, Array2, ArrayView1};
use rand::Rng;

use super::{add_outer, sigmoid, xavier_uniform};
use crate::impl_params;

/// Gated recurrent unit. Gate blocks are stacked in the order reset,
/// update, candidate:
///
/// ```text
/// r  = σ(Wx_r x + bx_r + Wh_r h + bh_r)
/// z  = σ(Wx_z x + bx_z + Wh_z h + bh_z)
/// n  = tanh(Wx_n x + bx_n + r ⊙ (Wh_n h + bh_n))
/// h' = (1 − z) ⊙ n + z ⊙ h
/// ```
#[derive(Debug, Clone, PartialEq)]
pub struct Gru {
    pub wx: Array2<f64>,
    pub wh: Array2<f64>,
    pub bx: Array1<f64>,
    pub bh: Array1<f64>,
}

impl_params!(Gru { wx, wh, bx, bh });

#[derive(Debug, Clone)]
struct GruStep {
    x: Array1<f64>,
    h_prev: Array1<f64>,
    r: Array1<f64>,
    z: Array1<f64>,
    n: Array1<f64>,
    gh_n: Array1<f64>,
}

/// Everything the backward pass needs from one forward unroll.
#[derive(Debug, Clone)]
pub struct GruTrace {
    steps: Vec<GruStep>,
    pub outputs: Vec<Array1<f64>>,
}

impl GruTrace {
    pub fn last(&self) -> &Array1<f64> {
        self.outputs.last().expect("non-empty unroll")
    }
}

impl Gru {
    pub fn zeros(input: usize, hidden: usize) -> Self {
        Gru {
            wx: Array2::zeros((3 * hidden, input)),
            wh: Array2::zeros((3 * hidden, hidden)),
            bx: Array1::zeros(3 * hidden),
            bh: Array1::zeros(3 * hidden),
        }
    }

    /// Each gate block is initialised separately with its own fan.
    pub fn init<R: Rng + ?Sized>(input: usize, hidden: usize, rng: &mut R) -> Self {
        let mut g = Gru::zeros(input, hidden);
        for k in 0..3 {
            let rows = s![k * hidden..(k + 1) * hidden, ..];
            g.wx.slice_mut(rows).assign(&xavier_uniform(hidden, input, rng));
            g.wh.slice_mut(rows).assign(&xavier_uniform(hidden, hidden, rng));
        }
        g
    }

    pub fn hidden(&self) -> usize {
        self.wh.ncols()
    }

    pub fn input(&self) -> usize {
        self.wx.ncols()
    }

    /// One cell update.
    pub fn cell(&self, x: ArrayView1<f64>, h: ArrayView1<f64>) -> Array1<f64> {
        let (_, _, _, _, h_new) = self.gates(x, h);
        h_new
    }

    fn gates(
        &self,
        x: ArrayView1<f64>,
        h: ArrayView1<f64>,
    ) -> (Array1<f64>, Array1<f64>, Array1<f64>, Array1<f64>, Array1<f64>) {
        let hd = self.hidden();
        let gx = self.wx.dot(&x) + &self.bx;
        let gh = self.wh.dot(&h) + &self.bh;
        let r = (&gx.slice(s![..hd]) + &gh.slice(s![..hd])).mapv(sigmoid);
        let z = (&gx.slice(s![hd..2 * hd]) + &gh.slice(s![hd..2 * hd])).mapv(sigmoid);
        let gh_n = gh.slice(s![2 * hd..]).to_owned();
        let n = (&gx.slice(s![2 * hd..]) + &(&r * &gh_n)).mapv(f64::tanh);
        let h_new = (1.0 - &z) * &n + &z * &h;
        (r, z, n, gh_n, h_new)
    }

    /// Unrolls from the zero state over `inputs`.
    pub fn forward(&self, inputs: &[Array1<f64>]) -> GruTrace {
        let mut h = Array1::zeros(self.hidden());
        let mut steps = Vec::with_capacity(inputs.len());
        let mut outputs = Vec::with_capacity(inputs.len());
        for x in inputs {
            let (r, z, n, gh_n, h_new) = self.gates(x.view(), h.view());
            steps.push(GruStep {
                x: x.clone(),
                h_prev: h,
                r,
                z,
                n,
                gh_n,
            });
            outputs.push(h_new.clone());
            h = h_new;
        }
        GruTrace { steps, outputs }
    }

    /// Backpropagates a gradient on the final output through time.
    /// Accumulates into `grad` and returns `dL/dx` for every step.
    pub fn backward_last(&self, trace: &GruTrace, d_last: &Array1<f64>, grad: &mut Gru) -> Vec<Array1<f64>> {
        let hd = self.hidden();
        let mut dxs = vec![Array1::zeros(self.input()); trace.steps.len()];
        let mut dh = d_last.clone();
        for (t, step) in trace.steps.iter().enumerate().rev() {
            let GruStep { x, h_prev, r, z, n, gh_n } = step;
            let dn = &dh * &(1.0 - z);
            let dz = &dh * &(h_prev - n);
            let mut dh_prev = &dh * z;

            let dn_pre = dn * &(1.0 - &(n * n));
            let dr = &dn_pre * gh_n;
            let dr_pre = dr * &(r * &(1.0 - r));
            let dz_pre = dz * &(z * &(1.0 - z));

            let mut dgx = Array1::zeros(3 * hd);
            dgx.slice_mut(s![..hd]).assign(&dr_pre);
            dgx.slice_mut(s![hd..2 * hd]).assign(&dz_pre);
            dgx.slice_mut(s![2 * hd..]).assign(&dn_pre);
            let mut dgh = dgx.clone();
            dgh.slice_mut(s![2 * hd..]).assign(&(&dn_pre * r));

            add_outer(&mut grad.wx, dgx.view(), x.view());
            grad.bx += &dgx;
            add_outer(&mut grad.wh, dgh.view(), h_prev.view());
            grad.bh += &dgh;

            dxs[t] = self.wx.t().dot(&dgx);
            dh_prev += &self.wh.t().dot(&dgh);
            dh = dh_prev;
        }
        dxs
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::gradcheck;
    use crate::nn::zeros_like;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn single_step_matches_manual_cell() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let gru = Gru::init(3, 4, &mut rng);
        let x = Array1::from(vec![0.3, -0.2, 0.9]);
        let trace = gru.forward(std::slice::from_ref(&x));
        let h0 = Array1::zeros(4);
        assert_eq!(trace.last(), &gru.cell(x.view(), h0.view()));
    }

    #[test]
    fn bptt_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut gru = Gru::init(3, 4, &mut rng);
        gru.bx.mapv_inplace(|_| rng.random_range(-0.5..0.5));
        gru.bh.mapv_inplace(|_| rng.random_range(-0.5..0.5));
        let xs: Vec<Array1<f64>> = (0..4)
            .map(|_| Array1::from_shape_fn(3, |_| rng.random_range(-1.0..1.0)))
            .collect();
        let w = Array1::from_shape_fn(4, |_| rng.random_range(-1.0..1.0));
        let loss = |g: &Gru| g.forward(&xs).last().dot(&w);

        let trace = gru.forward(&xs);
        let mut grad = zeros_like(&gru);
        gru.backward_last(&trace, &w, &mut grad);
        let r = gradcheck::check(&gru, &grad, gradcheck::DEFAULT_STEP, gradcheck::DEFAULT_FLOOR, loss);
        assert!(r.max_relative_error < 1e-6, "{r:?}");
    }
}
