use ndarray::{s, Array1, Array2, ArrayView1};
use rand::Rng;

use super::{add_outer, sigmoid, xavier_uniform};
use crate::impl_params;

/// Long short-term memory cell. Gate blocks are stacked in the order input,
/// forget, candidate, output.
#[derive(Debug, Clone, PartialEq)]
pub struct Lstm {
    pub wx: Array2<f64>,
    pub wh: Array2<f64>,
    pub b: Array1<f64>,
}

impl_params!(Lstm { wx, wh, b });

#[derive(Debug, Clone, PartialEq)]
pub struct LstmState {
    pub h: Array1<f64>,
    pub c: Array1<f64>,
}

impl LstmState {
    pub fn zeros(hidden: usize) -> Self {
        LstmState {
            h: Array1::zeros(hidden),
            c: Array1::zeros(hidden),
        }
    }
}

#[derive(Debug, Clone)]
struct LstmStep {
    x: Array1<f64>,
    h_prev: Array1<f64>,
    c_prev: Array1<f64>,
    i: Array1<f64>,
    f: Array1<f64>,
    g: Array1<f64>,
    o: Array1<f64>,
    tanh_c: Array1<f64>,
}

#[derive(Debug, Clone)]
pub struct LstmTrace {
    steps: Vec<LstmStep>,
    /// Hidden output after every step.
    pub outputs: Vec<Array1<f64>>,
    pub final_state: LstmState,
}

impl Lstm {
    pub fn zeros(input: usize, hidden: usize) -> Self {
        Lstm {
            wx: Array2::zeros((4 * hidden, input)),
            wh: Array2::zeros((4 * hidden, hidden)),
            b: Array1::zeros(4 * hidden),
        }
    }

    pub fn init<R: Rng + ?Sized>(input: usize, hidden: usize, rng: &mut R) -> Self {
        let mut l = Lstm::zeros(input, hidden);
        for k in 0..4 {
            let rows = s![k * hidden..(k + 1) * hidden, ..];
            l.wx.slice_mut(rows).assign(&xavier_uniform(hidden, input, rng));
            l.wh.slice_mut(rows).assign(&xavier_uniform(hidden, hidden, rng));
        }
        l
    }

    pub fn hidden(&self) -> usize {
        self.wh.ncols()
    }

    pub fn input(&self) -> usize {
        self.wx.ncols()
    }

    fn step_full(&self, x: ArrayView1<f64>, state: &LstmState) -> LstmStep {
        let hd = self.hidden();
        let pre = self.wx.dot(&x) + self.wh.dot(&state.h) + &self.b;
        let i = pre.slice(s![..hd]).mapv(sigmoid);
        let f = pre.slice(s![hd..2 * hd]).mapv(sigmoid);
        let g = pre.slice(s![2 * hd..3 * hd]).mapv(f64::tanh);
        let o = pre.slice(s![3 * hd..]).mapv(sigmoid);
        let c = &f * &state.c + &i * &g;
        let tanh_c = c.mapv(f64::tanh);
        LstmStep {
            x: x.to_owned(),
            h_prev: state.h.clone(),
            c_prev: state.c.clone(),
            i,
            f,
            g,
            o,
            tanh_c,
        }
    }

    /// One cell update.
    pub fn step(&self, x: ArrayView1<f64>, state: &LstmState) -> LstmState {
        let st = self.step_full(x, state);
        let c = &st.f * &st.c_prev + &st.i * &st.g;
        LstmState {
            h: &st.o * &st.tanh_c,
            c,
        }
    }

    pub fn forward(&self, inputs: &[Array1<f64>], init: LstmState) -> LstmTrace {
        let mut state = init;
        let mut steps = Vec::with_capacity(inputs.len());
        let mut outputs = Vec::with_capacity(inputs.len());
        for x in inputs {
            let st = self.step_full(x.view(), &state);
            let c = &st.f * &st.c_prev + &st.i * &st.g;
            let h = &st.o * &st.tanh_c;
            outputs.push(h.clone());
            state = LstmState { h, c };
            steps.push(st);
        }
        LstmTrace {
            steps,
            outputs,
            final_state: state,
        }
    }

    /// Backpropagation through time.
    ///
    /// `d_outputs[t]` is the gradient on the hidden output of step `t`.
    /// Returns the input gradients and the gradient on the initial state.
    pub fn backward(
        &self,
        trace: &LstmTrace,
        d_outputs: &[Array1<f64>],
        grad: &mut Lstm,
    ) -> (Vec<Array1<f64>>, LstmState) {
        assert_eq!(d_outputs.len(), trace.steps.len());
        let hd = self.hidden();
        let mut dxs = vec![Array1::zeros(self.input()); trace.steps.len()];
        let mut dh_next: Array1<f64> = Array1::zeros(hd);
        let mut dc_next: Array1<f64> = Array1::zeros(hd);
        for (t, st) in trace.steps.iter().enumerate().rev() {
            let dh = &d_outputs[t] + &dh_next;
            let d_o = &dh * &st.tanh_c;
            let dc = &dc_next + &(&dh * &st.o * &(1.0 - &(&st.tanh_c * &st.tanh_c)));
            let d_f = &dc * &st.c_prev;
            let d_i = &dc * &st.g;
            let d_g = &dc * &st.i;
            dc_next = &dc * &st.f;

            let mut dpre = Array1::zeros(4 * hd);
            dpre.slice_mut(s![..hd]).assign(&(d_i * &(&st.i * &(1.0 - &st.i))));
            dpre.slice_mut(s![hd..2 * hd]).assign(&(d_f * &(&st.f * &(1.0 - &st.f))));
            dpre.slice_mut(s![2 * hd..3 * hd]).assign(&(d_g * &(1.0 - &(&st.g * &st.g))));
            dpre.slice_mut(s![3 * hd..]).assign(&(d_o * &(&st.o * &(1.0 - &st.o))));

            add_outer(&mut grad.wx, dpre.view(), st.x.view());
            add_outer(&mut grad.wh, dpre.view(), st.h_prev.view());
            grad.b += &dpre;
            dxs[t] = self.wx.t().dot(&dpre);
            dh_next = self.wh.t().dot(&dpre);
        }
        (
            dxs,
            LstmState {
                h: dh_next,
                c: dc_next,
            },
        )
    }
}
