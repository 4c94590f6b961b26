//! Shared helpers for integration tests: random small instances and the
//! central-finite-difference gradient oracle.

use privview_core::records::CharSequence;
use privview_core::rng::DetRng;
use privview_core::seqnet::{init_params, loss_and_grads, LstmParams};

/// A random (encoder, decoder, input, target) instance with the given
/// alphabet and bounded shapes.
pub struct SmallInstance {
    pub encoder: LstmParams<f64>,
    pub decoder: LstmParams<f64>,
    pub input: CharSequence,
    pub target: CharSequence,
}

/// Builds a random sequence of printable ids with the pad/eos convention
/// pad = alphabet - 2, eos = alphabet - 1.
pub fn random_sequence(rng: &mut DetRng, alphabet_dim: usize, max_len: usize) -> CharSequence {
    let pad = (alphabet_dim - 2) as u8;
    let eos = (alphabet_dim - 1) as u8;
    let content_len = rng.gen_below(max_len as u64 + 1) as usize;
    let mut ids: Vec<u8> = (0..content_len)
        .map(|_| rng.gen_below(alphabet_dim as u64 - 2) as u8)
        .collect();
    ids.push(eos);
    let length = ids.len();
    ids.resize(max_len + 1, pad);
    CharSequence::from_raw(ids, length)
}

pub fn random_instance(seed: u64) -> SmallInstance {
    let mut rng = DetRng::from_seed(seed);
    let hidden = 2 + rng.gen_below(7) as usize; // 2..=8
    let alphabet = 6 + rng.gen_below(7) as usize; // 6..=12
    let n_layers = 1 + rng.gen_below(2) as usize; // 1..=2
    let max_len = 1 + rng.gen_below(8) as usize; // content up to 8
    SmallInstance {
        encoder: init_params(hidden, alphabet, n_layers, false, seed ^ 0xe1c0de),
        decoder: init_params(hidden, alphabet, n_layers, true, seed ^ 0xdec0de),
        input: random_sequence(&mut rng, alphabet, max_len),
        target: random_sequence(&mut rng, alphabet, max_len),
    }
}

/// Loss evaluated at the current parameters.
pub fn loss_of(inst: &SmallInstance) -> f64 {
    let (loss, _, _) = loss_and_grads(&inst.encoder, &inst.decoder, &inst.input, &inst.target)
        .expect("forward pass failed");
    loss
}

/// Largest relative disagreement between the analytic gradients and central
/// finite differences over every parameter of both networks.
pub fn max_gradient_error(inst: &mut SmallInstance, step: f64) -> f64 {
    let (_, enc_grads, dec_grads) =
        loss_and_grads(&inst.encoder, &inst.decoder, &inst.input, &inst.target).unwrap();
    let mut worst = 0.0f64;
    for which in [0, 1] {
        let analytic: Vec<f64> = {
            let g = if which == 0 { &enc_grads } else { &dec_grads };
            g.slices().iter().flat_map(|s| s.iter().copied()).collect()
        };
        let n_params = analytic.len();
        for p in 0..n_params {
            let nudge = |inst: &mut SmallInstance, delta: f64| {
                let params = if which == 0 {
                    &mut inst.encoder
                } else {
                    &mut inst.decoder
                };
                let mut seen = 0;
                for slice in params.slices_mut() {
                    if p < seen + slice.len() {
                        slice[p - seen] += delta;
                        return;
                    }
                    seen += slice.len();
                }
                unreachable!();
            };
            nudge(inst, step);
            let plus = loss_of(inst);
            nudge(inst, -2.0 * step);
            let minus = loss_of(inst);
            nudge(inst, step);
            let numeric = (plus - minus) / (2.0 * step);
            let analytic_p = analytic[p];
            let err = (analytic_p - numeric).abs() / analytic_p.abs().max(numeric.abs()).max(1e-4);
            worst = worst.max(err);
        }
    }
    worst
}
