use crate::error::{Error, Result};
use crate::nn::loss::sigmoid;
use crate::nn::matrix::{DenseMatrix, Scalar};
use crate::nn::store::ParamStore;

/// Hidden and cell vectors of one LSTM layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmState<T> {
    pub h: Vec<T>,
    pub c: Vec<T>,
}

impl<T: Scalar> LstmState<T> {
    pub fn zeros(hidden: usize) -> Self {
        Self { h: vec![T::ZERO; hidden], c: vec![T::ZERO; hidden] }
    }
}

/// Fused gate layout: the 4H rows of `w_ih`/`w_hh`/`b` are ordered
/// input, forget, candidate, output.
#[derive(Debug, Clone)]
pub struct LstmLayerNames {
    pub w_ih: String,
    pub w_hh: String,
    pub b: String,
}

impl LstmLayerNames {
    pub fn new(prefix: &str) -> Self {
        Self {
            w_ih: format!("{prefix}.w_ih"),
            w_hh: format!("{prefix}.w_hh"),
            b: format!("{prefix}.b"),
        }
    }

    pub fn init<T: Scalar>(
        &self,
        store: &mut ParamStore<T>,
        input_dim: usize,
        hidden: usize,
        seed: u64,
    ) {
        store.insert_uniform(&self.w_ih, 4 * hidden, input_dim, seed);
        store.insert_uniform(&self.w_hh, 4 * hidden, hidden, seed.wrapping_add(1));
        store.insert_zeros(&self.b, 4 * hidden, 1);
    }
}

/// Per-step values kept for backpropagation through time.
#[derive(Debug, Clone)]
pub struct LstmStepCache<T> {
    x: Vec<T>,
    h_prev: Vec<T>,
    c_prev: Vec<T>,
    gate_i: Vec<T>,
    gate_f: Vec<T>,
    gate_g: Vec<T>,
    gate_o: Vec<T>,
    tanh_c: Vec<T>,
}

fn check_step_shapes<T: Scalar>(
    x: &[T],
    state: &LstmState<T>,
    w_ih: &DenseMatrix<T>,
    w_hh: &DenseMatrix<T>,
    b: &DenseMatrix<T>,
) -> Result<usize> {
    let hidden = state.h.len();
    if state.c.len() != hidden {
        return Err(Error::Shape("lstm state: h and c lengths differ".into()));
    }
    if w_ih.rows() != 4 * hidden || w_ih.cols() != x.len() {
        return Err(Error::Shape(format!(
            "lstm w_ih is {}x{}, expected {}x{}",
            w_ih.rows(),
            w_ih.cols(),
            4 * hidden,
            x.len()
        )));
    }
    if w_hh.rows() != 4 * hidden || w_hh.cols() != hidden {
        return Err(Error::Shape(format!(
            "lstm w_hh is {}x{}, expected {}x{}",
            w_hh.rows(),
            w_hh.cols(),
            4 * hidden,
            hidden
        )));
    }
    if b.len() != 4 * hidden {
        return Err(Error::Shape(format!("lstm b has {} rows, expected {}", b.len(), 4 * hidden)));
    }
    Ok(hidden)
}

/// One LSTM step with the standard sigmoid/tanh gate equations.
pub fn lstm_step<T: Scalar>(
    x: &[T],
    state: &LstmState<T>,
    w_ih: &DenseMatrix<T>,
    w_hh: &DenseMatrix<T>,
    b: &DenseMatrix<T>,
) -> Result<LstmState<T>> {
    let (next, _) = lstm_step_cached(x, state, w_ih, w_hh, b)?;
    Ok(next)
}

/// `lstm_step` that also returns the cache needed by `lstm_step_backward`.
pub fn lstm_step_cached<T: Scalar>(
    x: &[T],
    state: &LstmState<T>,
    w_ih: &DenseMatrix<T>,
    w_hh: &DenseMatrix<T>,
    b: &DenseMatrix<T>,
) -> Result<(LstmState<T>, LstmStepCache<T>)> {
    let hidden = check_step_shapes(x, state, w_ih, w_hh, b)?;

    let mut pre = vec![T::ZERO; 4 * hidden];
    w_ih.matvec(x, &mut pre);
    let mut rec = vec![T::ZERO; 4 * hidden];
    w_hh.matvec(&state.h, &mut rec);
    for ((p, r), bias) in pre.iter_mut().zip(rec.iter()).zip(b.as_slice().iter()) {
        *p += *r + *bias;
    }

    let mut gate_i = vec![T::ZERO; hidden];
    let mut gate_f = vec![T::ZERO; hidden];
    let mut gate_g = vec![T::ZERO; hidden];
    let mut gate_o = vec![T::ZERO; hidden];
    let mut c_new = vec![T::ZERO; hidden];
    let mut tanh_c = vec![T::ZERO; hidden];
    let mut h_new = vec![T::ZERO; hidden];
    for k in 0..hidden {
        gate_i[k] = sigmoid(pre[k]);
        gate_f[k] = sigmoid(pre[hidden + k]);
        gate_g[k] = pre[2 * hidden + k].tanh();
        gate_o[k] = sigmoid(pre[3 * hidden + k]);
        c_new[k] = gate_f[k] * state.c[k] + gate_i[k] * gate_g[k];
        tanh_c[k] = c_new[k].tanh();
        h_new[k] = gate_o[k] * tanh_c[k];
    }

    let cache = LstmStepCache {
        x: x.to_vec(),
        h_prev: state.h.clone(),
        c_prev: state.c.clone(),
        gate_i,
        gate_f,
        gate_g,
        gate_o,
        tanh_c: tanh_c.clone(),
    };
    Ok((LstmState { h: h_new, c: c_new }, cache))
}

/// Gradient buffers for one LSTM layer, accumulated locally during BPTT and
/// added to the store afterwards.
#[derive(Debug, Clone)]
pub struct LstmLayerGrads<T> {
    pub w_ih: DenseMatrix<T>,
    pub w_hh: DenseMatrix<T>,
    pub b: DenseMatrix<T>,
}

impl<T: Scalar> LstmLayerGrads<T> {
    pub fn zeros(input_dim: usize, hidden: usize) -> Self {
        Self {
            w_ih: DenseMatrix::zeros(4 * hidden, input_dim),
            w_hh: DenseMatrix::zeros(4 * hidden, hidden),
            b: DenseMatrix::zeros(4 * hidden, 1),
        }
    }
}

/// Backward pass of one step. `dh`/`dc` carry gradients flowing into this
/// step's outputs; `dx`/`dh_prev`/`dc_prev` receive gradients for its inputs.
#[allow(clippy::too_many_arguments)]
pub fn lstm_step_backward<T: Scalar>(
    cache: &LstmStepCache<T>,
    dh: &[T],
    dc: &[T],
    w_ih: &DenseMatrix<T>,
    w_hh: &DenseMatrix<T>,
    grads: &mut LstmLayerGrads<T>,
    dx: &mut [T],
    dh_prev: &mut [T],
    dc_prev: &mut [T],
) {
    let hidden = cache.h_prev.len();
    let mut d_gates = vec![T::ZERO; 4 * hidden];
    for k in 0..hidden {
        let i = cache.gate_i[k];
        let f = cache.gate_f[k];
        let g = cache.gate_g[k];
        let o = cache.gate_o[k];
        let tc = cache.tanh_c[k];

        let dc_total = dh[k] * o * (T::ONE - tc * tc) + dc[k];
        d_gates[k] = dc_total * g * i * (T::ONE - i);
        d_gates[hidden + k] = dc_total * cache.c_prev[k] * f * (T::ONE - f);
        d_gates[2 * hidden + k] = dc_total * i * (T::ONE - g * g);
        d_gates[3 * hidden + k] = dh[k] * tc * o * (T::ONE - o);
        dc_prev[k] = dc_total * f;
    }

    grads.w_ih.add_outer(&d_gates, &cache.x);
    grads.w_hh.add_outer(&d_gates, &cache.h_prev);
    for (gb, dg) in grads.b.as_mut_slice().iter_mut().zip(d_gates.iter()) {
        *gb += *dg;
    }
    w_ih.matvec_t(&d_gates, dx);
    w_hh.matvec_t(&d_gates, dh_prev);
}

/// A stack of LSTM layers applied step-wise; layer l feeds layer l+1.
#[derive(Debug, Clone)]
pub struct StackedLstm {
    pub input_dim: usize,
    pub hidden: usize,
    pub layers: Vec<LstmLayerNames>,
}

impl StackedLstm {
    pub fn new(prefix: &str, input_dim: usize, hidden: usize, depth: usize) -> Self {
        let layers = (0..depth)
            .map(|l| LstmLayerNames::new(&format!("{prefix}.lstm{l}")))
            .collect();
        Self { input_dim, hidden, layers }
    }

    pub fn init<T: Scalar>(&self, store: &mut ParamStore<T>, seed: u64) {
        for (l, names) in self.layers.iter().enumerate() {
            let input = if l == 0 { self.input_dim } else { self.hidden };
            names.init(store, input, self.hidden, seed.wrapping_add(101 * l as u64));
        }
    }

    pub fn zero_states<T: Scalar>(&self) -> Vec<LstmState<T>> {
        self.layers.iter().map(|_| LstmState::zeros(self.hidden)).collect()
    }

    /// Advance all layers by one input; returns the top layer's hidden vector.
    pub fn step<T: Scalar>(
        &self,
        store: &ParamStore<T>,
        x: &[T],
        states: &mut [LstmState<T>],
    ) -> Result<Vec<T>> {
        let mut input = x.to_vec();
        for (names, state) in self.layers.iter().zip(states.iter_mut()) {
            let next = lstm_step(
                &input,
                state,
                store.value(&names.w_ih)?,
                store.value(&names.w_hh)?,
                store.value(&names.b)?,
            )?;
            input = next.h.clone();
            *state = next;
        }
        Ok(input)
    }

    /// Run a full input sequence with caching. Returns the top layer's hidden
    /// vector at every step plus the cache for `backward`.
    pub fn forward_cached<T: Scalar>(
        &self,
        store: &ParamStore<T>,
        inputs: &[Vec<T>],
    ) -> Result<(Vec<Vec<T>>, StackedLstmCache<T>)> {
        let mut states = self.zero_states::<T>();
        let mut caches: Vec<Vec<LstmStepCache<T>>> =
            self.layers.iter().map(|_| Vec::with_capacity(inputs.len())).collect();
        let mut outputs = Vec::with_capacity(inputs.len());
        for x in inputs {
            let mut input = x.clone();
            for (l, names) in self.layers.iter().enumerate() {
                let (next, cache) = lstm_step_cached(
                    &input,
                    &states[l],
                    store.value(&names.w_ih)?,
                    store.value(&names.w_hh)?,
                    store.value(&names.b)?,
                )?;
                input = next.h.clone();
                states[l] = next;
                caches[l].push(cache);
            }
            outputs.push(input);
        }
        Ok((outputs, StackedLstmCache { caches }))
    }

    /// BPTT given gradients on the top layer's per-step hidden outputs.
    /// Accumulates weight gradients into the store and returns the gradients
    /// with respect to the per-step inputs.
    pub fn backward<T: Scalar>(
        &self,
        store: &mut ParamStore<T>,
        cache: &StackedLstmCache<T>,
        d_outputs: &[Vec<T>],
    ) -> Result<Vec<Vec<T>>> {
        let steps = d_outputs.len();
        let hidden = self.hidden;
        let mut d_from_above: Vec<Vec<T>> = d_outputs.to_vec();

        for (l, names) in self.layers.iter().enumerate().rev() {
            let input_dim = if l == 0 { self.input_dim } else { hidden };
            let mut local = LstmLayerGrads::zeros(input_dim, hidden);
            let mut d_inputs: Vec<Vec<T>> = vec![vec![T::ZERO; input_dim]; steps];
            {
                let w_ih = store.value(&names.w_ih)?;
                let w_hh = store.value(&names.w_hh)?;
                let mut dh_next = vec![T::ZERO; hidden];
                let mut dc_next = vec![T::ZERO; hidden];
                for t in (0..steps).rev() {
                    let mut dh = d_from_above[t].clone();
                    for (a, b) in dh.iter_mut().zip(dh_next.iter()) {
                        *a += *b;
                    }
                    let mut dh_prev = vec![T::ZERO; hidden];
                    let mut dc_prev = vec![T::ZERO; hidden];
                    lstm_step_backward(
                        &cache.caches[l][t],
                        &dh,
                        &dc_next,
                        w_ih,
                        w_hh,
                        &mut local,
                        &mut d_inputs[t],
                        &mut dh_prev,
                        &mut dc_prev,
                    );
                    dh_next = dh_prev;
                    dc_next = dc_prev;
                }
            }
            store.grad_mut(&names.w_ih)?.add_scaled(&local.w_ih, T::ONE);
            store.grad_mut(&names.w_hh)?.add_scaled(&local.w_hh, T::ONE);
            store.grad_mut(&names.b)?.add_scaled(&local.b, T::ONE);
            d_from_above = d_inputs;
        }
        Ok(d_from_above)
    }
}

/// Per-layer, per-step caches of a stacked forward run.
#[derive(Debug, Clone)]
pub struct StackedLstmCache<T> {
    caches: Vec<Vec<LstmStepCache<T>>>,
}
