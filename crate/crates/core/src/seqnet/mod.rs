//! From-scratch gated LSTM sequence model.
//!
//! An encoder maps a character sequence to a fixed-length vector (the final
//! hidden and cell state of its top layer); per-view decoders map that vector
//! back to an output character sequence. Training uses teacher forcing,
//! masked cross-entropy, exact backpropagation through time, and Adam.
//!
//! Sequences use the id convention of `records::Vocabulary`: with alphabet
//! dimension `A`, pad is `A - 2` and eos is `A - 1`.

mod adam;
mod backward;
mod linalg;
mod real;

pub use adam::{adam_update, AdamState};
pub use backward::loss_and_grads;
pub use linalg::Matrix;
pub use real::Real;

use std::fmt;

use crate::records::CharSequence;
use crate::rng::DetRng;
use linalg::{add_column, matvec_add};

/// Input weights, recurrent weights, and bias of one gate.
#[derive(Debug, Clone, PartialEq)]
pub struct Gate<F> {
    pub w: Matrix<F>,
    pub u: Matrix<F>,
    pub b: Vec<F>,
}

/// One LSTM layer: input, forget, and output gates plus the candidate cell.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmLayer<F> {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub input_gate: Gate<F>,
    pub forget_gate: Gate<F>,
    pub output_gate: Gate<F>,
    pub candidate: Gate<F>,
}

/// Output projection from the top hidden state to alphabet logits.
#[derive(Debug, Clone, PartialEq)]
pub struct Projection<F> {
    pub weight: Matrix<F>,
    pub bias: Vec<F>,
}

/// Full parameter set of one network (encoder or decoder).
#[derive(Debug, Clone, PartialEq)]
pub struct LstmParams<F> {
    pub layers: Vec<LstmLayer<F>>,
    pub projection: Option<Projection<F>>,
}

/// Hidden and cell state of one LSTM cell.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmState<F> {
    pub h: Vec<F>,
    pub c: Vec<F>,
}

impl<F: Real> LstmState<F> {
    pub fn zeros(hidden_dim: usize) -> Self {
        LstmState {
            h: vec![F::ZERO; hidden_dim],
            c: vec![F::ZERO; hidden_dim],
        }
    }
}

/// The fixed-length representation handed to decoders: final hidden and cell
/// state of the encoder's top layer.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedVector<F> {
    pub h: Vec<F>,
    pub c: Vec<F>,
}

/// Sequence-model errors.
#[derive(Debug)]
pub enum NetError {
    DimensionMismatch { what: String },
    MissingProjection,
    MalformedSequence(&'static str),
    NonFiniteGradient { block: String },
}

impl fmt::Display for NetError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NetError::DimensionMismatch { what } => write!(f, "dimension mismatch: {what}"),
            NetError::MissingProjection => {
                write!(
                    f,
                    "decoder operation on params without an output projection"
                )
            }
            NetError::MalformedSequence(why) => write!(f, "malformed sequence: {why}"),
            NetError::NonFiniteGradient { block } => {
                write!(f, "non-finite gradient in block {block}")
            }
        }
    }
}

impl std::error::Error for NetError {}

fn dim_err(what: impl Into<String>) -> NetError {
    NetError::DimensionMismatch { what: what.into() }
}

// ---------------------------------------------------------------------------
// Parameter plumbing
// ---------------------------------------------------------------------------

impl<F: Real> Gate<F> {
    fn zeros(input_dim: usize, hidden_dim: usize) -> Self {
        Gate {
            w: Matrix::zeros(hidden_dim, input_dim),
            u: Matrix::zeros(hidden_dim, hidden_dim),
            b: vec![F::ZERO; hidden_dim],
        }
    }
}

const GATE_NAMES: [&str; 4] = ["input", "forget", "output", "candidate"];

impl<F: Real> LstmLayer<F> {
    fn zeros(input_dim: usize, hidden_dim: usize) -> Self {
        LstmLayer {
            input_dim,
            hidden_dim,
            input_gate: Gate::zeros(input_dim, hidden_dim),
            forget_gate: Gate::zeros(input_dim, hidden_dim),
            output_gate: Gate::zeros(input_dim, hidden_dim),
            candidate: Gate::zeros(input_dim, hidden_dim),
        }
    }

    fn gates(&self) -> [&Gate<F>; 4] {
        [
            &self.input_gate,
            &self.forget_gate,
            &self.output_gate,
            &self.candidate,
        ]
    }

    fn gates_mut(&mut self) -> [&mut Gate<F>; 4] {
        [
            &mut self.input_gate,
            &mut self.forget_gate,
            &mut self.output_gate,
            &mut self.candidate,
        ]
    }
}

impl<F: Real> LstmParams<F> {
    pub fn hidden_dim(&self) -> usize {
        self.layers[0].hidden_dim
    }

    pub fn alphabet_dim(&self) -> usize {
        self.layers[0].input_dim
    }

    pub fn n_layers(&self) -> usize {
        self.layers.len()
    }

    fn pad_id(&self) -> u8 {
        (self.alphabet_dim() - 2) as u8
    }

    fn eos_id(&self) -> u8 {
        (self.alphabet_dim() - 1) as u8
    }

    /// An all-zero parameter set with the given shape.
    pub fn zeros(
        hidden_dim: usize,
        alphabet_dim: usize,
        n_layers: usize,
        with_projection: bool,
    ) -> Self {
        let layers = (0..n_layers)
            .map(|li| {
                let input_dim = if li == 0 { alphabet_dim } else { hidden_dim };
                LstmLayer::zeros(input_dim, hidden_dim)
            })
            .collect();
        let projection = with_projection.then(|| Projection {
            weight: Matrix::zeros(alphabet_dim, hidden_dim),
            bias: vec![F::ZERO; alphabet_dim],
        });
        LstmParams { layers, projection }
    }

    /// A same-shaped parameter set of zeros (gradient / moment container).
    pub fn zeros_like(&self) -> Self {
        LstmParams {
            layers: self
                .layers
                .iter()
                .map(|l| LstmLayer::zeros(l.input_dim, l.hidden_dim))
                .collect(),
            projection: self.projection.as_ref().map(|p| Projection {
                weight: Matrix::zeros(p.weight.rows(), p.weight.cols()),
                bias: vec![F::ZERO; p.bias.len()],
            }),
        }
    }

    pub fn param_count(&self) -> usize {
        self.slices().iter().map(|s| s.len()).sum()
    }

    /// Parameter blocks in a fixed order, for optimizer updates.
    pub fn slices(&self) -> Vec<&[F]> {
        let mut out = Vec::new();
        for layer in &self.layers {
            for gate in layer.gates() {
                out.push(gate.w.as_slice());
                out.push(gate.u.as_slice());
                out.push(gate.b.as_slice());
            }
        }
        if let Some(p) = &self.projection {
            out.push(p.weight.as_slice());
            out.push(p.bias.as_slice());
        }
        out
    }

    pub fn slices_mut(&mut self) -> Vec<&mut [F]> {
        let mut out = Vec::new();
        for layer in &mut self.layers {
            for gate in layer.gates_mut() {
                out.push(gate.w.as_mut_slice());
                out.push(gate.u.as_mut_slice());
                out.push(gate.b.as_mut_slice());
            }
        }
        if let Some(p) = &mut self.projection {
            out.push(p.weight.as_mut_slice());
            out.push(p.bias.as_mut_slice());
        }
        out
    }

    /// Named parameter blocks in the same order as `slices`, for checkpoints.
    pub fn block_names(&self) -> Vec<String> {
        let mut out = Vec::new();
        for (li, _) in self.layers.iter().enumerate() {
            for gate in GATE_NAMES {
                for tensor in ["w", "u", "b"] {
                    out.push(format!("layer{li}.{gate}.{tensor}"));
                }
            }
        }
        if self.projection.is_some() {
            out.push("projection.weight".to_string());
            out.push("projection.bias".to_string());
        }
        out
    }

    pub fn all_finite(&self) -> bool {
        self.slices()
            .iter()
            .all(|s| s.iter().all(|v| v.is_finite()))
    }
}

/// Initializes parameters: weights uniform in +/- 1/sqrt(fan_in), forget-gate
/// bias 1.0, other biases 0. Deterministic per seed.
pub fn init_params<F: Real>(
    hidden_dim: usize,
    alphabet_dim: usize,
    n_layers: usize,
    with_projection: bool,
    seed: u64,
) -> LstmParams<F> {
    assert!(hidden_dim >= 1 && alphabet_dim >= 3 && n_layers >= 1);
    let mut rng = DetRng::from_seed(seed);
    let mut uniform = |slice: &mut [F], fan_in: usize| {
        let bound = 1.0 / (fan_in as f64).sqrt();
        for v in slice {
            *v = F::from_f64((rng.gen_unit_f64() * 2.0 - 1.0) * bound);
        }
    };
    let mut layers = Vec::with_capacity(n_layers);
    for li in 0..n_layers {
        let input_dim = if li == 0 { alphabet_dim } else { hidden_dim };
        let mut layer = LstmLayer::zeros(input_dim, hidden_dim);
        for (gi, gate) in layer.gates_mut().into_iter().enumerate() {
            uniform(gate.w.as_mut_slice(), input_dim);
            uniform(gate.u.as_mut_slice(), hidden_dim);
            let bias = if GATE_NAMES[gi] == "forget" {
                F::ONE
            } else {
                F::ZERO
            };
            gate.b.fill(bias);
        }
        layers.push(layer);
    }
    let projection = with_projection.then(|| {
        let mut p = Projection {
            weight: Matrix::zeros(alphabet_dim, hidden_dim),
            bias: vec![F::ZERO; alphabet_dim],
        };
        uniform(p.weight.as_mut_slice(), hidden_dim);
        p
    });
    LstmParams { layers, projection }
}

// ---------------------------------------------------------------------------
// Forward computation
// ---------------------------------------------------------------------------

/// Layer input: a one-hot symbol id (layer 0) or the dense output of the
/// layer below.
#[derive(Clone, Copy)]
pub(crate) enum StepInput<'a, F> {
    OneHot(usize),
    Dense(&'a [F]),
}

pub(crate) fn gate_preact<F: Real>(
    gate: &Gate<F>,
    x: StepInput<'_, F>,
    h_prev: &[F],
    out: &mut [F],
) {
    out.copy_from_slice(&gate.b);
    match x {
        StepInput::OneHot(id) => add_column(&gate.w, id, out),
        StepInput::Dense(v) => matvec_add(&gate.w, v, out),
    }
    matvec_add(&gate.u, h_prev, out);
}

/// One cell step writing every intermediate needed by backprop.
#[allow(clippy::too_many_arguments)]
pub(crate) fn cell_forward<F: Real>(
    layer: &LstmLayer<F>,
    x: StepInput<'_, F>,
    h_prev: &[F],
    c_prev: &[F],
    i: &mut [F],
    f: &mut [F],
    o: &mut [F],
    g: &mut [F],
    c: &mut [F],
    tanh_c: &mut [F],
    h: &mut [F],
) {
    gate_preact(&layer.input_gate, x, h_prev, i);
    gate_preact(&layer.forget_gate, x, h_prev, f);
    gate_preact(&layer.output_gate, x, h_prev, o);
    gate_preact(&layer.candidate, x, h_prev, g);
    for j in 0..layer.hidden_dim {
        i[j] = i[j].sigmoid();
        f[j] = f[j].sigmoid();
        o[j] = o[j].sigmoid();
        g[j] = g[j].tanh();
        c[j] = f[j] * c_prev[j] + i[j] * g[j];
        tanh_c[j] = c[j].tanh();
        h[j] = o[j] * tanh_c[j];
    }
}

/// Single-cell step on an explicit input vector: the gate equations
/// i, f, o = sigmoid, candidate = tanh, c' = f.c + i.g, h' = o.tanh(c').
pub fn lstm_step<F: Real>(
    layer: &LstmLayer<F>,
    state: &LstmState<F>,
    x: &[F],
) -> Result<LstmState<F>, NetError> {
    if x.len() != layer.input_dim {
        return Err(dim_err(format!(
            "input has {} components, layer expects {}",
            x.len(),
            layer.input_dim
        )));
    }
    if state.h.len() != layer.hidden_dim || state.c.len() != layer.hidden_dim {
        return Err(dim_err("state size does not match hidden_dim"));
    }
    let hd = layer.hidden_dim;
    let mut bufs = vec![F::ZERO; hd * 7];
    let (i, rest) = bufs.split_at_mut(hd);
    let (f, rest) = rest.split_at_mut(hd);
    let (o, rest) = rest.split_at_mut(hd);
    let (g, rest) = rest.split_at_mut(hd);
    let (c, rest) = rest.split_at_mut(hd);
    let (tanh_c, h) = rest.split_at_mut(hd);
    cell_forward(
        layer,
        StepInput::Dense(x),
        &state.h,
        &state.c,
        i,
        f,
        o,
        g,
        c,
        tanh_c,
        h,
    );
    Ok(LstmState {
        h: h.to_vec(),
        c: c.to_vec(),
    })
}

/// Checks the sequence invariants: one eos terminating the content, pad
/// everywhere after, ids within the alphabet.
fn validate_sequence<F: Real>(params: &LstmParams<F>, seq: &CharSequence) -> Result<(), NetError> {
    let pad = params.pad_id();
    let eos = params.eos_id();
    let ids = seq.ids();
    let length = seq.length();
    if length == 0 || length > ids.len() {
        return Err(NetError::MalformedSequence("length out of range"));
    }
    if ids.iter().any(|&id| id as usize >= params.alphabet_dim()) {
        return Err(NetError::MalformedSequence("id outside alphabet"));
    }
    if ids[length - 1] != eos {
        return Err(NetError::MalformedSequence("content does not end with eos"));
    }
    if ids[..length - 1].iter().any(|&id| id == eos || id == pad) {
        return Err(NetError::MalformedSequence("eos or pad inside content"));
    }
    if ids[length..].iter().any(|&id| id != pad) {
        return Err(NetError::MalformedSequence("symbol after eos"));
    }
    Ok(())
}

/// Advances all layers by one symbol, in place.
pub(crate) fn advance_states<F: Real>(
    params: &LstmParams<F>,
    states: &mut [LstmState<F>],
    id: u8,
    scratch: &mut Vec<F>,
) {
    let hd = params.hidden_dim();
    scratch.clear();
    scratch.resize(params.n_layers() * hd * 7, F::ZERO);
    let mut dense_input: Vec<F> = Vec::new();
    for (li, layer) in params.layers.iter().enumerate() {
        let chunk = &mut scratch[li * hd * 7..(li + 1) * hd * 7];
        let (i, rest) = chunk.split_at_mut(hd);
        let (f, rest) = rest.split_at_mut(hd);
        let (o, rest) = rest.split_at_mut(hd);
        let (g, rest) = rest.split_at_mut(hd);
        let (c, rest) = rest.split_at_mut(hd);
        let (tanh_c, h) = rest.split_at_mut(hd);
        let x = if li == 0 {
            StepInput::OneHot(id as usize)
        } else {
            StepInput::Dense(&dense_input)
        };
        cell_forward(
            layer,
            x,
            &states[li].h,
            &states[li].c,
            i,
            f,
            o,
            g,
            c,
            tanh_c,
            h,
        );
        states[li].h.copy_from_slice(h);
        states[li].c.copy_from_slice(c);
        dense_input = h.to_vec();
    }
}

/// Runs the encoder over a sequence; pad positions do not advance the state.
/// Returns the final hidden and cell state of the top layer.
pub fn encode_sequence<F: Real>(
    params: &LstmParams<F>,
    seq: &CharSequence,
) -> Result<EncodedVector<F>, NetError> {
    validate_sequence(params, seq)?;
    let pad = params.pad_id();
    let mut states: Vec<LstmState<F>> = (0..params.n_layers())
        .map(|_| LstmState::zeros(params.hidden_dim()))
        .collect();
    let mut scratch = Vec::new();
    for &id in seq.ids() {
        if id == pad {
            continue;
        }
        advance_states(params, &mut states, id, &mut scratch);
    }
    let top = states.last().unwrap();
    Ok(EncodedVector {
        h: top.h.clone(),
        c: top.c.clone(),
    })
}

/// Builds the decoder's initial per-layer states: the encoded vector seeds
/// the top layer, lower layers start at zero.
pub(crate) fn decoder_initial_states<F: Real>(
    params: &LstmParams<F>,
    enc: &EncodedVector<F>,
) -> Result<Vec<LstmState<F>>, NetError> {
    let hd = params.hidden_dim();
    if enc.h.len() != hd || enc.c.len() != hd {
        return Err(dim_err(format!(
            "encoded vector has {} components, decoder expects {hd}",
            enc.h.len()
        )));
    }
    let mut states: Vec<LstmState<F>> = (0..params.n_layers())
        .map(|_| LstmState::zeros(hd))
        .collect();
    let top = states.last_mut().unwrap();
    top.h.copy_from_slice(&enc.h);
    top.c.copy_from_slice(&enc.c);
    Ok(states)
}

pub(crate) fn project_logits<F: Real>(proj: &Projection<F>, h: &[F], out: &mut [F]) {
    out.copy_from_slice(&proj.bias);
    matvec_add(&proj.weight, h, out);
}

/// Teacher-forced decoding: the decoder starts from the encoded vector, sees
/// eos as its first input and then the previous target symbol, and emits one
/// row of alphabet logits per non-pad target position.
pub fn decode_teacher_forced<F: Real>(
    params: &LstmParams<F>,
    enc: &EncodedVector<F>,
    target: &CharSequence,
) -> Result<Matrix<F>, NetError> {
    let proj = params
        .projection
        .as_ref()
        .ok_or(NetError::MissingProjection)?;
    validate_sequence(params, target)?;
    let mut states = decoder_initial_states(params, enc)?;
    let t_len = target.length();
    let mut logits = Matrix::zeros(t_len, params.alphabet_dim());
    let mut scratch = Vec::new();
    for t in 0..t_len {
        let input = if t == 0 {
            params.eos_id()
        } else {
            target.ids()[t - 1]
        };
        advance_states(params, &mut states, input, &mut scratch);
        project_logits(proj, &states.last().unwrap().h, logits.row_mut(t));
    }
    Ok(logits)
}

/// Greedy autoregressive decoding: argmax at each step (ties to the lowest
/// symbol id, pad never selected), stopping at eos. If no eos is produced
/// within `max_len` symbols, eos is appended and the truncation flag set.
pub fn greedy_decode<F: Real>(
    params: &LstmParams<F>,
    enc: &EncodedVector<F>,
    max_len: usize,
) -> Result<(CharSequence, bool), NetError> {
    assert!(max_len >= 1);
    let proj = params
        .projection
        .as_ref()
        .ok_or(NetError::MissingProjection)?;
    let mut states = decoder_initial_states(params, enc)?;
    let pad = params.pad_id();
    let eos = params.eos_id();
    let mut ids: Vec<u8> = Vec::with_capacity(max_len + 1);
    let mut logits = vec![F::ZERO; params.alphabet_dim()];
    let mut scratch = Vec::new();
    let mut input = eos;
    let mut truncated = true;
    for _ in 0..max_len + 1 {
        advance_states(params, &mut states, input, &mut scratch);
        project_logits(proj, &states.last().unwrap().h, &mut logits);
        let mut best = usize::MAX;
        let mut best_val = F::ZERO;
        for (id, &v) in logits.iter().enumerate() {
            if id == pad as usize {
                continue;
            }
            if best == usize::MAX || v > best_val {
                best = id;
                best_val = v;
            }
        }
        if best == eos as usize {
            truncated = false;
            break;
        }
        if ids.len() == max_len {
            break;
        }
        ids.push(best as u8);
        input = best as u8;
    }
    ids.push(eos);
    let length = ids.len();
    ids.resize(max_len + 1, pad);
    Ok((CharSequence::from_raw(ids, length), truncated))
}

/// Mean over non-pad target positions of -log softmax(logits)[target id].
/// Returns the loss and its gradient with respect to the logits.
pub fn masked_cross_entropy<F: Real>(
    logits: &Matrix<F>,
    target: &CharSequence,
) -> Result<(F, Matrix<F>), NetError> {
    let t_len = target.length();
    if logits.rows() != t_len {
        return Err(dim_err(format!(
            "{} logit rows for {} target positions",
            logits.rows(),
            t_len
        )));
    }
    let alphabet = logits.cols();
    let mut dlogits = Matrix::zeros(t_len, alphabet);
    let mut loss = F::ZERO;
    let inv_n = F::ONE / F::from_f64(t_len as f64);
    for t in 0..t_len {
        let y = target.ids()[t] as usize;
        if y >= alphabet {
            return Err(dim_err("target id outside alphabet"));
        }
        let row = logits.row(t);
        let mut max = row[0];
        for &v in row {
            max = max.max(v);
        }
        let mut sum = F::ZERO;
        let drow = dlogits.row_mut(t);
        for (j, &v) in row.iter().enumerate() {
            let e = (v - max).exp();
            drow[j] = e;
            sum += e;
        }
        loss += -(row[y] - max - sum.ln());
        let inv_sum = inv_n / sum;
        for d in drow.iter_mut() {
            *d *= inv_sum;
        }
        drow[y] -= inv_n;
    }
    Ok((loss * inv_n, dlogits))
}
