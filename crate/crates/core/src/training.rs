//! Multi-view training: one shared encoder, one decoder per receiver view,
//! each trained against the policy oracle's target text for its view.
//!
//! Views are scheduled round-robin per batch. Per-entry gradients within a
//! batch may be computed on parallel workers; they are reduced in batch order
//! so the loss trajectory is identical however many workers run.

use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::digest::Fnv64;
use crate::eval::char_error;
use crate::policy::{apply_view, AccessMatrix, GeneralizationMap, PolicyError, ReceiverView};
use crate::records::{
    decode_chars, encode_chars, serialize_entry, AttributeSchema, CharSequence, RecordEntry,
    RecordError, Vocabulary,
};
use crate::rng::DetRng;
use crate::seqnet::{
    adam_update, encode_sequence, greedy_decode, init_params, loss_and_grads, AdamState,
    LstmParams, NetError,
};

/// Checkpoint file header.
pub const CHECKPOINT_HEADER: &[u8] = b"privview-ckpt v1\n";

/// Training hyperparameters and run controls.
#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub hidden_dim: usize,
    pub n_layers: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub max_steps: usize,
    pub seed: u64,
    pub views: Vec<ReceiverView>,
    /// Every this many steps, measure held-out character error for the
    /// current view (0 = never).
    pub eval_every: usize,
    /// Feed the encoder the serialized text reversed. Shortens the
    /// dependency span between the encoded vector and the first decoded
    /// fields, which converges far faster on small corpora; recorded in the
    /// checkpoint so encoding at inference follows the same convention.
    pub reverse_input: bool,
    /// Curriculum phases run before the real targets: for `steps` steps the
    /// oracle labels come from the phase's access matrix instead. Revealing
    /// the record prefix by prefix bootstraps the copy-through-the-vector
    /// mechanism on small corpora.
    pub warmup_phases: Vec<WarmupPhase>,
    /// Stop once a step's training loss falls below this threshold.
    pub stop_when_loss_below: Option<f64>,
    /// Where to write the final checkpoint.
    pub checkpoint_path: Option<PathBuf>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            hidden_dim: 256,
            n_layers: 1,
            lr: 0.0004,
            batch_size: 64,
            max_steps: 1000,
            seed: 0,
            views: ReceiverView::ALL.to_vec(),
            eval_every: 0,
            reverse_input: true,
            warmup_phases: Vec::new(),
            stop_when_loss_below: None,
            checkpoint_path: None,
        }
    }
}

/// One curriculum phase: an alternative policy matrix and how many steps it
/// provides the training targets for.
#[derive(Debug, Clone)]
pub struct WarmupPhase {
    pub steps: u64,
    pub matrix: AccessMatrix,
}

/// One decoder with its optimizer state.
#[derive(Debug, Clone)]
pub struct ViewDecoder {
    pub view: ReceiverView,
    pub params: LstmParams<f32>,
    pub adam: AdamState<f32>,
}

/// Checkpoint metadata carried alongside the parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainMeta {
    pub seed: u64,
    pub steps: u64,
    pub lr: f64,
    pub max_len: usize,
    pub input_reversed: bool,
}

/// Shared encoder plus per-view decoders.
#[derive(Debug, Clone)]
pub struct ViewDecoderSet {
    pub encoder: LstmParams<f32>,
    pub encoder_adam: AdamState<f32>,
    pub decoders: Vec<ViewDecoder>,
    pub meta: TrainMeta,
}

impl ViewDecoderSet {
    pub fn decoder(&self, view: ReceiverView) -> Option<&LstmParams<f32>> {
        self.decoders
            .iter()
            .find(|d| d.view == view)
            .map(|d| &d.params)
    }

    pub fn views(&self) -> Vec<ReceiverView> {
        self.decoders.iter().map(|d| d.view).collect()
    }
}

/// One training-step record; `heldout_char_error` is filled on evaluation
/// snapshots.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub step: u64,
    pub view: ReceiverView,
    pub loss: f64,
    pub heldout_char_error: Option<f64>,
}

/// Training result: the model set and the full loss history.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub set: ViewDecoderSet,
    pub history: Vec<StepRecord>,
}

/// Training errors.
#[derive(Debug)]
pub enum TrainError {
    Config(String),
    Policy(PolicyError),
    Record(RecordError),
    Net {
        step: Option<u64>,
        source: NetError,
    },
    NonFiniteLoss {
        step: u64,
        view: ReceiverView,
        batch: Vec<usize>,
    },
    Io(std::io::Error),
    VersionMismatch {
        detail: String,
    },
    DigestMismatch,
    MissingDecoder {
        view: ReceiverView,
    },
}

impl fmt::Display for TrainError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TrainError::Config(what) => write!(f, "invalid training config: {what}"),
            TrainError::Policy(e) => write!(f, "{e}"),
            TrainError::Record(e) => write!(f, "{e}"),
            TrainError::Net {
                step: Some(s),
                source,
            } => write!(f, "at step {s}: {source}"),
            TrainError::Net { step: None, source } => write!(f, "{source}"),
            TrainError::NonFiniteLoss { step, view, batch } => write!(
                f,
                "non-finite loss at step {step} for view {view} on batch entries {batch:?}"
            ),
            TrainError::Io(e) => write!(f, "io error: {e}"),
            TrainError::VersionMismatch { detail } => write!(f, "checkpoint mismatch: {detail}"),
            TrainError::DigestMismatch => write!(f, "checkpoint digest mismatch (corrupt file)"),
            TrainError::MissingDecoder { view } => {
                write!(f, "checkpoint has no decoder for view {view}")
            }
        }
    }
}

impl std::error::Error for TrainError {}

impl From<PolicyError> for TrainError {
    fn from(e: PolicyError) -> Self {
        TrainError::Policy(e)
    }
}

impl From<RecordError> for TrainError {
    fn from(e: RecordError) -> Self {
        TrainError::Record(e)
    }
}

impl From<std::io::Error> for TrainError {
    fn from(e: std::io::Error) -> Self {
        TrainError::Io(e)
    }
}

/// Builds the (input, target) id-sequence pairs for one view: the serialized
/// entry encodes to the input, the policy oracle's view text to the target.
pub fn build_training_pairs(
    dataset: &[RecordEntry],
    view: ReceiverView,
    matrix: &AccessMatrix,
    gmap: &GeneralizationMap,
    schema: &AttributeSchema,
    vocab: &Vocabulary,
    reverse_input: bool,
) -> Result<Vec<(CharSequence, CharSequence)>, TrainError> {
    let max_len = schema.max_len();
    let mut pairs = Vec::with_capacity(dataset.len());
    for entry in dataset {
        let mut input_text = serialize_entry(entry, schema)?;
        if reverse_input {
            input_text = input_text.chars().rev().collect();
        }
        let target_text = apply_view(entry, view, matrix, gmap, schema)?;
        let input = encode_chars(&input_text, vocab, max_len)?;
        let target = encode_chars(&target_text, vocab, max_len)?;
        pairs.push((input, target));
    }
    Ok(pairs)
}

/// Deterministic per-view shuffled index stream; reshuffles at epoch ends.
struct ViewSampler {
    order: Vec<usize>,
    pos: usize,
    rng: DetRng,
}

impl ViewSampler {
    fn new(len: usize, seed: u64, stream: u64) -> Self {
        let mut rng = DetRng::substream(seed, stream);
        let mut order: Vec<usize> = (0..len).collect();
        rng.shuffle(&mut order);
        ViewSampler { order, pos: 0, rng }
    }

    fn next_batch(&mut self, batch_size: usize) -> Vec<usize> {
        let mut batch = Vec::with_capacity(batch_size);
        for _ in 0..batch_size {
            if self.pos == self.order.len() {
                self.rng.shuffle(&mut self.order);
                self.pos = 0;
            }
            batch.push(self.order[self.pos]);
            self.pos += 1;
        }
        batch
    }
}

fn mix_seed(seed: u64, stream: u64) -> u64 {
    DetRng::substream(seed, stream).next_u64()
}

fn add_grads(dst: &mut LstmParams<f32>, src: &LstmParams<f32>) {
    for (d, s) in dst.slices_mut().into_iter().zip(src.slices()) {
        for (a, b) in d.iter_mut().zip(s) {
            *a += *b;
        }
    }
}

fn scale_grads(grads: &mut LstmParams<f32>, factor: f32) {
    for s in grads.slices_mut() {
        for v in s {
            *v *= factor;
        }
    }
}

fn net_err(step: Option<u64>) -> impl Fn(NetError) -> TrainError {
    move |source| TrainError::Net { step, source }
}

/// Mean greedy-decode character error of one view over held-out pairs.
fn heldout_char_error(
    encoder: &LstmParams<f32>,
    decoder: &LstmParams<f32>,
    pairs: &[(CharSequence, CharSequence)],
    vocab: &Vocabulary,
    max_len: usize,
) -> Result<f64, TrainError> {
    let distances = crate::par_map(pairs, |(input, target)| -> Result<usize, TrainError> {
        let enc = encode_sequence(encoder, input).map_err(net_err(None))?;
        let (decoded, _) = greedy_decode(decoder, &enc, max_len).map_err(net_err(None))?;
        let predicted = decode_chars(&decoded, vocab)?;
        let expected = decode_chars(target, vocab)?;
        Ok(char_error(&predicted, &expected))
    });
    let mut total = 0usize;
    for d in distances {
        total += d?;
    }
    Ok(total as f64 / pairs.len().max(1) as f64)
}

/// Incremental trainer: owns the model set, the per-view oracle pairs, and
/// the samplers, and advances one batch update at a time.
pub struct Trainer {
    set: ViewDecoderSet,
    config: TrainConfig,
    view_pairs: Vec<Vec<(CharSequence, CharSequence)>>,
    phase_pairs: Vec<Vec<Vec<(CharSequence, CharSequence)>>>,
    eval_pairs: Vec<Vec<(CharSequence, CharSequence)>>,
    samplers: Vec<ViewSampler>,
    vocab: Vocabulary,
    next_step: u64,
}

impl Trainer {
    pub fn new(
        train_set: &[RecordEntry],
        eval_set: Option<&[RecordEntry]>,
        config: &TrainConfig,
        matrix: &AccessMatrix,
        gmap: &GeneralizationMap,
        schema: &AttributeSchema,
    ) -> Result<Self, TrainError> {
        if train_set.is_empty() {
            return Err(TrainError::Config("training set is empty".into()));
        }
        if config.batch_size == 0 {
            return Err(TrainError::Config("batch_size must be at least 1".into()));
        }
        if config.views.is_empty() {
            return Err(TrainError::Config("at least one view is required".into()));
        }
        let mut seen = Vec::new();
        for v in &config.views {
            if seen.contains(v) {
                return Err(TrainError::Config(format!("view {v} listed twice")));
            }
            seen.push(*v);
        }

        let vocab = Vocabulary::standard();
        let alphabet_dim = vocab.alphabet_dim();
        let max_len = schema.max_len();

        let mut view_pairs = Vec::with_capacity(config.views.len());
        let mut eval_pairs = Vec::new();
        for &view in &config.views {
            view_pairs.push(build_training_pairs(
                train_set,
                view,
                matrix,
                gmap,
                schema,
                &vocab,
                config.reverse_input,
            )?);
            if let Some(eval) = eval_set {
                eval_pairs.push(build_training_pairs(
                    eval,
                    view,
                    matrix,
                    gmap,
                    schema,
                    &vocab,
                    config.reverse_input,
                )?);
            }
        }
        let mut phase_pairs = Vec::with_capacity(config.warmup_phases.len());
        for phase in &config.warmup_phases {
            let mut per_view = Vec::with_capacity(config.views.len());
            for &view in &config.views {
                per_view.push(build_training_pairs(
                    train_set,
                    view,
                    &phase.matrix,
                    gmap,
                    schema,
                    &vocab,
                    config.reverse_input,
                )?);
            }
            phase_pairs.push(per_view);
        }

        let encoder = init_params::<f32>(
            config.hidden_dim,
            alphabet_dim,
            config.n_layers,
            false,
            mix_seed(config.seed, 0),
        );
        let encoder_adam = AdamState::new(&encoder, config.lr);
        let decoders: Vec<ViewDecoder> = config
            .views
            .iter()
            .enumerate()
            .map(|(i, &view)| {
                let params = init_params::<f32>(
                    config.hidden_dim,
                    alphabet_dim,
                    config.n_layers,
                    true,
                    mix_seed(config.seed, 1 + i as u64),
                );
                let adam = AdamState::new(&params, config.lr);
                ViewDecoder { view, params, adam }
            })
            .collect();

        let samplers: Vec<ViewSampler> = (0..config.views.len())
            .map(|i| ViewSampler::new(train_set.len(), config.seed, 100 + i as u64))
            .collect();

        Ok(Trainer {
            set: ViewDecoderSet {
                encoder,
                encoder_adam,
                decoders,
                meta: TrainMeta {
                    seed: config.seed,
                    steps: 0,
                    lr: config.lr,
                    max_len,
                    input_reversed: config.reverse_input,
                },
            },
            config: config.clone(),
            view_pairs,
            phase_pairs,
            eval_pairs,
            samplers,
            vocab,
            next_step: 0,
        })
    }

    pub fn set(&self) -> &ViewDecoderSet {
        &self.set
    }

    pub fn into_set(self) -> ViewDecoderSet {
        self.set
    }

    pub fn steps_done(&self) -> u64 {
        self.next_step
    }

    /// One batch update for the round-robin view of this step.
    pub fn step(&mut self) -> Result<StepRecord, TrainError> {
        let step = self.next_step;
        let view_index = (step % self.config.views.len() as u64) as usize;
        let view = self.config.views[view_index];
        let batch = self.samplers[view_index].next_batch(self.config.batch_size);
        let pairs = {
            let mut source = &self.view_pairs[view_index];
            let mut boundary = 0;
            for (phase, per_view) in self.config.warmup_phases.iter().zip(&self.phase_pairs) {
                boundary += phase.steps;
                if step < boundary {
                    source = &per_view[view_index];
                    break;
                }
            }
            source
        };

        let results = {
            let encoder = &self.set.encoder;
            let decoder = &self.set.decoders[view_index].params;
            crate::par_map(&batch, |&idx| {
                let (input, target) = &pairs[idx];
                loss_and_grads(encoder, decoder, input, target)
            })
        };

        let mut loss_sum = 0.0f64;
        let mut enc_grads = self.set.encoder.zeros_like();
        let mut dec_grads = self.set.decoders[view_index].params.zeros_like();
        for r in results {
            let (loss, eg, dg) = r.map_err(net_err(Some(step)))?;
            loss_sum += loss as f64;
            add_grads(&mut enc_grads, &eg);
            add_grads(&mut dec_grads, &dg);
        }
        let inv = 1.0 / self.config.batch_size as f32;
        scale_grads(&mut enc_grads, inv);
        scale_grads(&mut dec_grads, inv);
        let loss = loss_sum / self.config.batch_size as f64;
        if !loss.is_finite() {
            return Err(TrainError::NonFiniteLoss { step, view, batch });
        }

        let wrap_update = |source: NetError, batch: &[usize]| {
            if matches!(source, NetError::NonFiniteGradient { .. }) {
                TrainError::NonFiniteLoss {
                    step,
                    view,
                    batch: batch.to_vec(),
                }
            } else {
                TrainError::Net {
                    step: Some(step),
                    source,
                }
            }
        };
        adam_update(
            &mut self.set.encoder,
            &enc_grads,
            &mut self.set.encoder_adam,
        )
        .map_err(|e| wrap_update(e, &batch))?;
        let dec = &mut self.set.decoders[view_index];
        adam_update(&mut dec.params, &dec_grads, &mut dec.adam)
            .map_err(|e| wrap_update(e, &batch))?;
        self.next_step = step + 1;
        self.set.meta.steps = self.next_step;

        let mut record = StepRecord {
            step,
            view,
            loss,
            heldout_char_error: None,
        };
        if self.config.eval_every > 0
            && !self.eval_pairs.is_empty()
            && (step + 1).is_multiple_of(self.config.eval_every as u64)
        {
            record.heldout_char_error = Some(heldout_char_error(
                &self.set.encoder,
                &self.set.decoders[view_index].params,
                &self.eval_pairs[view_index],
                &self.vocab,
                self.set.meta.max_len,
            )?);
        }
        Ok(record)
    }
}

/// Trains the shared encoder and one decoder per configured view.
///
/// Each step samples a batch for the round-robin view, runs forward/backward
/// on every batch entry, applies one Adam update to the encoder and that
/// view's decoder, and reports the batch loss through `on_step`.
pub fn train<F>(
    train_set: &[RecordEntry],
    eval_set: Option<&[RecordEntry]>,
    config: &TrainConfig,
    matrix: &AccessMatrix,
    gmap: &GeneralizationMap,
    schema: &AttributeSchema,
    mut on_step: F,
) -> Result<TrainOutcome, TrainError>
where
    F: FnMut(&StepRecord),
{
    let mut trainer = Trainer::new(train_set, eval_set, config, matrix, gmap, schema)?;
    let mut history = Vec::with_capacity(config.max_steps);
    for _ in 0..config.max_steps {
        let record = trainer.step()?;
        on_step(&record);
        let stop = matches!(config.stop_when_loss_below, Some(t) if record.loss < t);
        history.push(record);
        if stop {
            break;
        }
    }
    let set = trainer.into_set();
    if let Some(path) = &config.checkpoint_path {
        save_checkpoint(&set, path)?;
    }
    Ok(TrainOutcome { set, history })
}

// ---------------------------------------------------------------------------
// Checkpoint format
// ---------------------------------------------------------------------------

fn push_u32(buf: &mut Vec<u8>, v: u32) {
    buf.extend_from_slice(&v.to_le_bytes());
}

fn push_u64(buf: &mut Vec<u8>, v: u64) {
    buf.extend_from_slice(&v.to_le_bytes());
}

fn push_str(buf: &mut Vec<u8>, s: &str) {
    push_u32(buf, s.len() as u32);
    buf.extend_from_slice(s.as_bytes());
}

fn push_params(buf: &mut Vec<u8>, params: &LstmParams<f32>) {
    let names = params.block_names();
    let slices = params.slices();
    push_u32(buf, names.len() as u32);
    for (name, slice) in names.iter().zip(slices) {
        push_str(buf, name);
        push_u64(buf, slice.len() as u64);
        for v in slice {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], TrainError> {
        if self.pos + n > self.bytes.len() {
            return Err(TrainError::VersionMismatch {
                detail: "checkpoint ends mid-record".to_string(),
            });
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32, TrainError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, TrainError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn str(&mut self) -> Result<String, TrainError> {
        let len = self.u32()? as usize;
        let bytes = self.take(len)?;
        String::from_utf8(bytes.to_vec()).map_err(|_| TrainError::VersionMismatch {
            detail: "invalid utf-8 in checkpoint".to_string(),
        })
    }
}

fn read_params(
    r: &mut Reader<'_>,
    hidden_dim: usize,
    alphabet_dim: usize,
    n_layers: usize,
    with_projection: bool,
) -> Result<LstmParams<f32>, TrainError> {
    let mut params = LstmParams::<f32>::zeros(hidden_dim, alphabet_dim, n_layers, with_projection);
    let expected_names = params.block_names();
    let n_blocks = r.u32()? as usize;
    if n_blocks != expected_names.len() {
        return Err(TrainError::VersionMismatch {
            detail: format!(
                "expected {} parameter blocks, found {n_blocks}",
                expected_names.len()
            ),
        });
    }
    for (name, slice) in expected_names.iter().zip(params.slices_mut()) {
        let found = r.str()?;
        if &found != name {
            return Err(TrainError::VersionMismatch {
                detail: format!("expected block {name}, found {found}"),
            });
        }
        let count = r.u64()? as usize;
        if count != slice.len() {
            return Err(TrainError::VersionMismatch {
                detail: format!("block {name} has {count} values, expected {}", slice.len()),
            });
        }
        let bytes = r.take(count * 4)?;
        for (j, v) in slice.iter_mut().enumerate() {
            *v = f32::from_le_bytes(bytes[j * 4..j * 4 + 4].try_into().unwrap());
        }
    }
    Ok(params)
}

/// Serializes a model set to the checkpoint byte format: versioned header,
/// dimensions and metadata, view names, named little-endian f32 parameter
/// blocks, and a trailing content digest.
pub fn checkpoint_to_bytes(set: &ViewDecoderSet) -> Vec<u8> {
    let mut buf = Vec::new();
    buf.extend_from_slice(CHECKPOINT_HEADER);
    push_u32(&mut buf, set.encoder.hidden_dim() as u32);
    push_u32(&mut buf, set.encoder.alphabet_dim() as u32);
    push_u32(&mut buf, set.encoder.n_layers() as u32);
    push_u32(&mut buf, set.decoders.len() as u32);
    push_u64(&mut buf, set.meta.seed);
    push_u64(&mut buf, set.meta.steps);
    buf.extend_from_slice(&set.meta.lr.to_le_bytes());
    push_u64(&mut buf, set.meta.max_len as u64);
    buf.push(set.meta.input_reversed as u8);
    for d in &set.decoders {
        push_str(&mut buf, d.view.as_str());
    }
    push_params(&mut buf, &set.encoder);
    for d in &set.decoders {
        push_params(&mut buf, &d.params);
    }
    let mut digest = Fnv64::new();
    digest.update(&buf);
    push_u64(&mut buf, digest.finish());
    buf
}

/// Parses checkpoint bytes, verifying the header and the content digest.
pub fn checkpoint_from_bytes(bytes: &[u8]) -> Result<ViewDecoderSet, TrainError> {
    if bytes.len() < CHECKPOINT_HEADER.len() + 8
        || &bytes[..CHECKPOINT_HEADER.len()] != CHECKPOINT_HEADER
    {
        return Err(TrainError::VersionMismatch {
            detail: "missing privview-ckpt v1 header".to_string(),
        });
    }
    let (body, tail) = bytes.split_at(bytes.len() - 8);
    let stored = u64::from_le_bytes(tail.try_into().unwrap());
    let mut digest = Fnv64::new();
    digest.update(body);
    if digest.finish() != stored {
        return Err(TrainError::DigestMismatch);
    }

    let mut r = Reader {
        bytes: body,
        pos: CHECKPOINT_HEADER.len(),
    };
    let hidden_dim = r.u32()? as usize;
    let alphabet_dim = r.u32()? as usize;
    let n_layers = r.u32()? as usize;
    let n_views = r.u32()? as usize;
    let seed = r.u64()?;
    let steps = r.u64()?;
    let lr = f64::from_le_bytes(r.take(8)?.try_into().unwrap());
    let max_len = r.u64()? as usize;
    let input_reversed = r.take(1)?[0] != 0;
    if hidden_dim == 0 || alphabet_dim < 3 || n_layers == 0 {
        return Err(TrainError::VersionMismatch {
            detail: "implausible dimensions in header".to_string(),
        });
    }
    let mut views = Vec::with_capacity(n_views);
    for _ in 0..n_views {
        let name = r.str()?;
        let view = ReceiverView::parse(&name).ok_or_else(|| TrainError::VersionMismatch {
            detail: format!("unknown view {name:?}"),
        })?;
        views.push(view);
    }
    let encoder = read_params(&mut r, hidden_dim, alphabet_dim, n_layers, false)?;
    let mut decoders = Vec::with_capacity(n_views);
    for view in views {
        let params = read_params(&mut r, hidden_dim, alphabet_dim, n_layers, true)?;
        let adam = AdamState::new(&params, lr);
        decoders.push(ViewDecoder { view, params, adam });
    }
    if r.pos != body.len() {
        return Err(TrainError::VersionMismatch {
            detail: "trailing bytes after parameter blocks".to_string(),
        });
    }
    let encoder_adam = AdamState::new(&encoder, lr);
    Ok(ViewDecoderSet {
        encoder,
        encoder_adam,
        decoders,
        meta: TrainMeta {
            seed,
            steps,
            lr,
            max_len,
            input_reversed,
        },
    })
}

/// Writes a checkpoint atomically (temp file, then rename).
pub fn save_checkpoint(set: &ViewDecoderSet, path: &Path) -> Result<(), TrainError> {
    let bytes = checkpoint_to_bytes(set);
    let tmp = path.with_extension("tmp");
    {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(&bytes)?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}

/// Reads a checkpoint written by `save_checkpoint`.
pub fn load_checkpoint(path: &Path) -> Result<ViewDecoderSet, TrainError> {
    let bytes = std::fs::read(path)?;
    checkpoint_from_bytes(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::{default_access_matrix, default_generalization_map, PrivacyOperation};
    use crate::simulator::{simulate_dataset, SimulationConfig};

    fn toy_setup() -> (
        AttributeSchema,
        AccessMatrix,
        GeneralizationMap,
        Vec<RecordEntry>,
    ) {
        let schema = AttributeSchema::standard();
        let matrix = default_access_matrix();
        let gmap = default_generalization_map();
        let dataset = simulate_dataset(&SimulationConfig::new(5, 1, 77), &schema).unwrap();
        (schema, matrix, gmap, dataset)
    }

    #[test]
    fn pair_count_matches_dataset() {
        let (schema, matrix, gmap, dataset) = toy_setup();
        let vocab = Vocabulary::standard();
        let pairs = build_training_pairs(
            &dataset,
            ReceiverView::Researcher,
            &matrix,
            &gmap,
            &schema,
            &vocab,
            false,
        )
        .unwrap();
        assert_eq!(pairs.len(), dataset.len());
    }

    #[test]
    fn all_disclose_matrix_makes_target_equal_input() {
        let (schema, _, gmap, dataset) = toy_setup();
        let matrix = AccessMatrix::uniform(PrivacyOperation::Disclose);
        let vocab = Vocabulary::standard();
        let pairs = build_training_pairs(
            &dataset,
            ReceiverView::Doctor,
            &matrix,
            &gmap,
            &schema,
            &vocab,
            false,
        )
        .unwrap();
        for (input, target) in pairs {
            assert_eq!(input, target);
        }
    }

    #[test]
    fn researcher_target_first_field_is_star() {
        let (schema, matrix, gmap, dataset) = toy_setup();
        let vocab = Vocabulary::standard();
        let pairs = build_training_pairs(
            &dataset,
            ReceiverView::Researcher,
            &matrix,
            &gmap,
            &schema,
            &vocab,
            false,
        )
        .unwrap();
        for (_, target) in pairs {
            let text = decode_chars(&target, &vocab).unwrap();
            assert!(text.starts_with("*|"));
        }
    }

    #[test]
    fn training_is_deterministic() {
        let (schema, matrix, gmap, dataset) = toy_setup();
        let config = TrainConfig {
            hidden_dim: 12,
            batch_size: 2,
            max_steps: 6,
            seed: 9,
            views: vec![ReceiverView::Researcher, ReceiverView::Caregiver],
            ..TrainConfig::default()
        };
        let a = train(&dataset, None, &config, &matrix, &gmap, &schema, |_| {}).unwrap();
        let b = train(&dataset, None, &config, &matrix, &gmap, &schema, |_| {}).unwrap();
        assert_eq!(a.history, b.history);
        assert_eq!(a.set.encoder, b.set.encoder);
        for (da, db) in a.set.decoders.iter().zip(&b.set.decoders) {
            assert_eq!(da.params, db.params);
        }
    }

    #[test]
    fn first_step_loss_is_near_uniform() {
        let (schema, matrix, gmap, dataset) = toy_setup();
        let config = TrainConfig {
            hidden_dim: 16,
            batch_size: 3,
            max_steps: 1,
            seed: 4,
            views: vec![ReceiverView::Caregiver],
            ..TrainConfig::default()
        };
        let outcome = train(&dataset, None, &config, &matrix, &gmap, &schema, |_| {}).unwrap();
        let ln42 = (42.0f64).ln();
        let loss = outcome.history[0].loss;
        assert!(
            (loss - ln42).abs() / ln42 < 0.05,
            "step-0 loss {loss} not within 5% of ln(42) = {ln42}"
        );
    }

    #[test]
    fn views_alternate_round_robin() {
        let (schema, matrix, gmap, dataset) = toy_setup();
        let config = TrainConfig {
            hidden_dim: 8,
            batch_size: 1,
            max_steps: 4,
            seed: 2,
            views: vec![ReceiverView::Doctor, ReceiverView::Researcher],
            ..TrainConfig::default()
        };
        let outcome = train(&dataset, None, &config, &matrix, &gmap, &schema, |_| {}).unwrap();
        let seen: Vec<ReceiverView> = outcome.history.iter().map(|r| r.view).collect();
        assert_eq!(
            seen,
            vec![
                ReceiverView::Doctor,
                ReceiverView::Researcher,
                ReceiverView::Doctor,
                ReceiverView::Researcher
            ]
        );
    }

    #[test]
    fn checkpoint_round_trip_is_bitwise() {
        let (schema, matrix, gmap, dataset) = toy_setup();
        let config = TrainConfig {
            hidden_dim: 10,
            batch_size: 2,
            max_steps: 3,
            seed: 5,
            views: vec![ReceiverView::FamilyMember, ReceiverView::Doctor],
            ..TrainConfig::default()
        };
        let outcome = train(&dataset, None, &config, &matrix, &gmap, &schema, |_| {}).unwrap();
        let bytes = checkpoint_to_bytes(&outcome.set);
        let back = checkpoint_from_bytes(&bytes).unwrap();
        assert_eq!(back.encoder, outcome.set.encoder);
        assert_eq!(back.meta, outcome.set.meta);
        assert_eq!(back.decoders.len(), 2);
        for (a, b) in back.decoders.iter().zip(&outcome.set.decoders) {
            assert_eq!(a.view, b.view);
            assert_eq!(a.params, b.params);
        }
        // serialization is canonical
        assert_eq!(checkpoint_to_bytes(&back), bytes);
    }

    #[test]
    fn corrupt_checkpoints_are_rejected() {
        let (schema, matrix, gmap, dataset) = toy_setup();
        let config = TrainConfig {
            hidden_dim: 6,
            batch_size: 1,
            max_steps: 1,
            seed: 5,
            views: vec![ReceiverView::Doctor],
            ..TrainConfig::default()
        };
        let outcome = train(&dataset, None, &config, &matrix, &gmap, &schema, |_| {}).unwrap();
        let bytes = checkpoint_to_bytes(&outcome.set);
        assert!(matches!(
            checkpoint_from_bytes(&bytes[..bytes.len() - 9]),
            Err(TrainError::DigestMismatch)
        ));
        let mut corrupted = bytes.clone();
        let mid = corrupted.len() / 2;
        corrupted[mid] ^= 0xff;
        assert!(matches!(
            checkpoint_from_bytes(&corrupted),
            Err(TrainError::DigestMismatch)
        ));
        assert!(matches!(
            checkpoint_from_bytes(b"not a checkpoint at all, truly"),
            Err(TrainError::VersionMismatch { .. })
        ));
    }

    #[test]
    fn bad_configs_are_rejected() {
        let (schema, matrix, gmap, dataset) = toy_setup();
        let mut config = TrainConfig {
            hidden_dim: 4,
            batch_size: 0,
            max_steps: 1,
            ..TrainConfig::default()
        };
        assert!(matches!(
            train(&dataset, None, &config, &matrix, &gmap, &schema, |_| {}),
            Err(TrainError::Config(_))
        ));
        config.batch_size = 1;
        config.views = vec![];
        assert!(matches!(
            train(&dataset, None, &config, &matrix, &gmap, &schema, |_| {}),
            Err(TrainError::Config(_))
        ));
        config.views = vec![ReceiverView::Doctor, ReceiverView::Doctor];
        assert!(matches!(
            train(&dataset, None, &config, &matrix, &gmap, &schema, |_| {}),
            Err(TrainError::Config(_))
        ));
        config.views = vec![ReceiverView::Doctor];
        assert!(matches!(
            train(&[], None, &config, &matrix, &gmap, &schema, |_| {}),
            Err(TrainError::Config(_))
        ));
    }
}
