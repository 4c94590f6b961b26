//! Forward traces and exact backpropagation through time.
//!
//! The loss gradient flows from the decoder logits back through the decoder
//! recurrence, across the encoded vector into the encoder's final state, and
//! back through the encoder recurrence to every parameter.

use super::linalg::{column_add, matvec_t_add, outer_add, Matrix};
use super::real::Real;
use super::{
    cell_forward, decoder_initial_states, dim_err, masked_cross_entropy, project_logits,
    EncodedVector, LstmParams, LstmState, NetError, StepInput,
};
use crate::records::CharSequence;

/// Per-layer activations of one unrolled pass; every matrix is T x hidden
/// with row t holding the value after consuming input t.
struct LayerTrace<F> {
    i: Matrix<F>,
    f: Matrix<F>,
    o: Matrix<F>,
    g: Matrix<F>,
    c: Matrix<F>,
    tanh_c: Matrix<F>,
    h: Matrix<F>,
    h0: Vec<F>,
    c0: Vec<F>,
}

impl<F: Real> LayerTrace<F> {
    fn new(t_len: usize, initial: &LstmState<F>) -> Self {
        let hd = initial.h.len();
        LayerTrace {
            i: Matrix::zeros(t_len, hd),
            f: Matrix::zeros(t_len, hd),
            o: Matrix::zeros(t_len, hd),
            g: Matrix::zeros(t_len, hd),
            c: Matrix::zeros(t_len, hd),
            tanh_c: Matrix::zeros(t_len, hd),
            h: Matrix::zeros(t_len, hd),
            h0: initial.h.clone(),
            c0: initial.c.clone(),
        }
    }

    fn h_prev(&self, t: usize) -> &[F] {
        if t == 0 {
            &self.h0
        } else {
            self.h.row(t - 1)
        }
    }

    fn c_prev(&self, t: usize) -> &[F] {
        if t == 0 {
            &self.c0
        } else {
            self.c.row(t - 1)
        }
    }
}

struct NetTrace<F> {
    layers: Vec<LayerTrace<F>>,
    inputs: Vec<u8>,
}

/// Unrolls the network over `inputs`, recording all activations; also emits
/// per-step logits when the params carry a projection.
fn forward_with_trace<F: Real>(
    params: &LstmParams<F>,
    initial_states: &[LstmState<F>],
    inputs: Vec<u8>,
) -> (NetTrace<F>, Option<Matrix<F>>) {
    let t_len = inputs.len();
    let hd = params.hidden_dim();
    let mut layers: Vec<LayerTrace<F>> = initial_states
        .iter()
        .map(|s| LayerTrace::new(t_len, s))
        .collect();
    let mut logits = params
        .projection
        .as_ref()
        .map(|_| Matrix::zeros(t_len, params.alphabet_dim()));
    let mut h_prev = vec![F::ZERO; hd];
    let mut c_prev = vec![F::ZERO; hd];
    #[allow(clippy::needless_range_loop)]
    for t in 0..t_len {
        for li in 0..params.layers.len() {
            let (below, rest) = layers.split_at_mut(li);
            let cur = &mut rest[0];
            h_prev.copy_from_slice(cur.h_prev(t));
            c_prev.copy_from_slice(cur.c_prev(t));
            let x = if li == 0 {
                StepInput::OneHot(inputs[t] as usize)
            } else {
                StepInput::Dense(below[li - 1].h.row(t))
            };
            cell_forward(
                &params.layers[li],
                x,
                &h_prev,
                &c_prev,
                cur.i.row_mut(t),
                cur.f.row_mut(t),
                cur.o.row_mut(t),
                cur.g.row_mut(t),
                cur.c.row_mut(t),
                cur.tanh_c.row_mut(t),
                cur.h.row_mut(t),
            );
        }
        if let (Some(proj), Some(out)) = (&params.projection, logits.as_mut()) {
            project_logits(proj, layers.last().unwrap().h.row(t), out.row_mut(t));
        }
    }
    (NetTrace { layers, inputs }, logits)
}

/// Runs BPTT over a recorded pass, accumulating parameter gradients, and
/// returns the gradient with respect to the top layer's initial (h, c).
///
/// `dlogits` feeds the projection path at every step; `d_final_top` adds a
/// gradient on the top layer's state after the last step (how the encoder
/// receives the decoder's gradient through the encoded vector).
fn backward_net<F: Real>(
    params: &LstmParams<F>,
    trace: &NetTrace<F>,
    dlogits: Option<&Matrix<F>>,
    d_final_top: Option<(&[F], &[F])>,
    grads: &mut LstmParams<F>,
) -> (Vec<F>, Vec<F>) {
    let hd = params.hidden_dim();
    let n_layers = params.layers.len();
    let t_len = trace.inputs.len();
    let top = n_layers - 1;

    // gradient flowing into each layer's (h, c) from the following step
    let mut dh_next: Vec<Vec<F>> = vec![vec![F::ZERO; hd]; n_layers];
    let mut dc_next: Vec<Vec<F>> = vec![vec![F::ZERO; hd]; n_layers];
    if let Some((dh, dc)) = d_final_top {
        dh_next[top].copy_from_slice(dh);
        dc_next[top].copy_from_slice(dc);
    }

    let mut dh = vec![F::ZERO; hd];
    let mut dc = vec![F::ZERO; hd];
    let mut dpre_i = vec![F::ZERO; hd];
    let mut dpre_f = vec![F::ZERO; hd];
    let mut dpre_o = vec![F::ZERO; hd];
    let mut dpre_g = vec![F::ZERO; hd];
    let mut dx = vec![F::ZERO; hd];

    for t in (0..t_len).rev() {
        let mut dx_from_above: Option<Vec<F>> = None;
        for li in (0..n_layers).rev() {
            let layer = &params.layers[li];
            let lt = &trace.layers[li];
            let lg = &mut grads.layers[li];

            dh.copy_from_slice(&dh_next[li]);
            dc.copy_from_slice(&dc_next[li]);
            if let Some(dx_above) = &dx_from_above {
                for (a, b) in dh.iter_mut().zip(dx_above) {
                    *a += *b;
                }
            }
            if li == top {
                if let (Some(dl), Some(proj)) = (dlogits, &params.projection) {
                    let pg = grads.projection.as_mut().unwrap();
                    let drow = dl.row(t);
                    outer_add(&mut pg.weight, drow, lt.h.row(t));
                    for (b, d) in pg.bias.iter_mut().zip(drow) {
                        *b += *d;
                    }
                    matvec_t_add(&proj.weight, drow, &mut dh);
                }
            }

            let (i, f, o, g) = (lt.i.row(t), lt.f.row(t), lt.o.row(t), lt.g.row(t));
            let tanh_c = lt.tanh_c.row(t);
            let (h_prev, c_prev) = (lt.h_prev(t), lt.c_prev(t));
            for j in 0..hd {
                let doj = dh[j] * tanh_c[j];
                dpre_o[j] = doj * o[j] * (F::ONE - o[j]);
                dc[j] += dh[j] * o[j] * (F::ONE - tanh_c[j] * tanh_c[j]);
                let dij = dc[j] * g[j];
                dpre_i[j] = dij * i[j] * (F::ONE - i[j]);
                let dfj = dc[j] * c_prev[j];
                dpre_f[j] = dfj * f[j] * (F::ONE - f[j]);
                let dgj = dc[j] * i[j];
                dpre_g[j] = dgj * (F::ONE - g[j] * g[j]);
                dc_next[li][j] = dc[j] * f[j];
            }

            dh_next[li].fill(F::ZERO);
            if li > 0 {
                dx.fill(F::ZERO);
            }
            let gates = [
                &layer.input_gate,
                &layer.forget_gate,
                &layer.output_gate,
                &layer.candidate,
            ];
            let gate_grads = [
                &mut lg.input_gate,
                &mut lg.forget_gate,
                &mut lg.output_gate,
                &mut lg.candidate,
            ];
            let dpres = [&dpre_i, &dpre_f, &dpre_o, &dpre_g];
            for ((gate, ggrad), dpre) in gates.iter().zip(gate_grads).zip(dpres) {
                match if li == 0 {
                    StepInput::<F>::OneHot(trace.inputs[t] as usize)
                } else {
                    StepInput::Dense(trace.layers[li - 1].h.row(t))
                } {
                    StepInput::OneHot(id) => column_add(&mut ggrad.w, id, dpre),
                    StepInput::Dense(x) => outer_add(&mut ggrad.w, dpre, x),
                }
                outer_add(&mut ggrad.u, dpre, h_prev);
                for (b, d) in ggrad.b.iter_mut().zip(dpre.iter()) {
                    *b += *d;
                }
                matvec_t_add(&gate.u, dpre, &mut dh_next[li]);
                if li > 0 {
                    matvec_t_add(&gate.w, dpre, &mut dx);
                }
            }
            dx_from_above = (li > 0).then(|| dx.clone());
        }
    }
    (dh_next.swap_remove(top), dc_next.swap_remove(top))
}

/// Full training-step computation for one (input, target) pair: teacher-forced
/// forward pass, masked cross-entropy, and exact gradients for both the
/// encoder and the decoder, including the flow through the encoded vector.
pub fn loss_and_grads<F: Real>(
    encoder: &LstmParams<F>,
    decoder: &LstmParams<F>,
    input: &CharSequence,
    target: &CharSequence,
) -> Result<(F, LstmParams<F>, LstmParams<F>), NetError> {
    if decoder.projection.is_none() {
        return Err(NetError::MissingProjection);
    }
    if encoder.hidden_dim() != decoder.hidden_dim()
        || encoder.alphabet_dim() != decoder.alphabet_dim()
    {
        return Err(dim_err("encoder and decoder dimensions differ"));
    }
    super::validate_sequence(encoder, input)?;
    super::validate_sequence(decoder, target)?;

    let pad = encoder.pad_id();
    let eos = decoder.eos_id();
    let hd = encoder.hidden_dim();

    // encoder pass over the non-pad input ids
    let enc_inputs: Vec<u8> = input
        .ids()
        .iter()
        .copied()
        .filter(|&id| id != pad)
        .collect();
    let enc_initial: Vec<LstmState<F>> = (0..encoder.n_layers())
        .map(|_| LstmState::zeros(hd))
        .collect();
    let (enc_trace, _) = forward_with_trace(encoder, &enc_initial, enc_inputs);
    let enc_top = enc_trace.layers.last().unwrap();
    let t_enc = enc_trace.inputs.len();
    let enc_vec = EncodedVector {
        h: enc_top.h.row(t_enc - 1).to_vec(),
        c: enc_top.c.row(t_enc - 1).to_vec(),
    };

    // teacher-forced decoder pass
    let mut dec_inputs = Vec::with_capacity(target.length());
    dec_inputs.push(eos);
    dec_inputs.extend_from_slice(&target.ids()[..target.length() - 1]);
    let dec_initial = decoder_initial_states(decoder, &enc_vec)?;
    let (dec_trace, logits) = forward_with_trace(decoder, &dec_initial, dec_inputs);
    let (loss, dlogits) = masked_cross_entropy(&logits.unwrap(), target)?;

    let mut dec_grads = decoder.zeros_like();
    let (d_enc_h, d_enc_c) =
        backward_net(decoder, &dec_trace, Some(&dlogits), None, &mut dec_grads);

    let mut enc_grads = encoder.zeros_like();
    backward_net(
        encoder,
        &enc_trace,
        None,
        Some((&d_enc_h, &d_enc_c)),
        &mut enc_grads,
    );

    Ok((loss, enc_grads, dec_grads))
}
