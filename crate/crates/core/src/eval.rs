//! Evaluation against the policy oracle: character error per entry,
//! per-attribute breakdown, and the mismatched-decoder experiment.

use std::fmt;

use crate::policy::{apply_view, AccessMatrix, GeneralizationMap, PolicyError, ReceiverView};
use crate::records::{
    decode_chars, encode_chars, serialize_entry, AttributeSchema, RecordEntry, RecordError,
    Vocabulary, ATTR_COUNT,
};
use crate::seqnet::{encode_sequence, greedy_decode, NetError};
use crate::training::ViewDecoderSet;

/// Evaluation errors.
#[derive(Debug)]
pub enum EvalError {
    MissingDecoder { view: ReceiverView },
    NotEnoughViews { found: usize },
    Net(NetError),
    Record(RecordError),
    Policy(PolicyError),
}

impl fmt::Display for EvalError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EvalError::MissingDecoder { view } => write!(f, "no trained decoder for view {view}"),
            EvalError::NotEnoughViews { found } => {
                write!(
                    f,
                    "mismatch experiment needs at least 2 views, found {found}"
                )
            }
            EvalError::Net(e) => write!(f, "{e}"),
            EvalError::Record(e) => write!(f, "{e}"),
            EvalError::Policy(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for EvalError {}

impl From<NetError> for EvalError {
    fn from(e: NetError) -> Self {
        EvalError::Net(e)
    }
}

impl From<RecordError> for EvalError {
    fn from(e: RecordError) -> Self {
        EvalError::Record(e)
    }
}

impl From<PolicyError> for EvalError {
    fn from(e: PolicyError) -> Self {
        EvalError::Policy(e)
    }
}

/// Levenshtein edit distance with unit insert/delete/substitute costs.
pub fn char_error(predicted: &str, target: &str) -> usize {
    let a: Vec<char> = predicted.chars().collect();
    let b: Vec<char> = target.chars().collect();
    if a.is_empty() {
        return b.len();
    }
    if b.is_empty() {
        return a.len();
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0usize; b.len() + 1];
    for (i, ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, cb) in b.iter().enumerate() {
            let substitute = prev[j] + usize::from(ca != cb);
            cur[j + 1] = substitute.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Positions whose symbol ids differ after padding both texts to the same
/// fixed frame; reported alongside the edit distance.
pub fn positionwise_mismatch(
    predicted: &str,
    target: &str,
    vocab: &Vocabulary,
    max_len: usize,
) -> Result<usize, RecordError> {
    let a = encode_chars(predicted, vocab, max_len)?;
    let b = encode_chars(target, vocab, max_len)?;
    Ok(a.ids().iter().zip(b.ids()).filter(|(x, y)| x != y).count())
}

/// Greedy-decodes every entry's encoded vector with one view's decoder.
pub fn predict_view_texts(
    set: &ViewDecoderSet,
    view: ReceiverView,
    entries: &[RecordEntry],
    schema: &AttributeSchema,
) -> Result<Vec<String>, EvalError> {
    let decoder = set
        .decoder(view)
        .ok_or(EvalError::MissingDecoder { view })?;
    let vocab = Vocabulary::standard();
    let max_len = schema.max_len();
    let results = crate::par_map(entries, |entry| -> Result<String, EvalError> {
        let mut text = serialize_entry(entry, schema)?;
        if set.meta.input_reversed {
            text = text.chars().rev().collect();
        }
        let input = encode_chars(&text, &vocab, max_len)?;
        let enc = encode_sequence(&set.encoder, &input)?;
        let (decoded, _) = greedy_decode(decoder, &enc, max_len)?;
        Ok(decode_chars(&decoded, &vocab)?)
    });
    results.into_iter().collect()
}

/// Oracle target text for every entry under one view.
pub fn oracle_view_texts(
    entries: &[RecordEntry],
    view: ReceiverView,
    matrix: &AccessMatrix,
    gmap: &GeneralizationMap,
    schema: &AttributeSchema,
) -> Result<Vec<String>, EvalError> {
    entries
        .iter()
        .map(|e| apply_view(e, view, matrix, gmap, schema).map_err(EvalError::from))
        .collect()
}

/// Per-entry edit distance of one view's decoder against its oracle targets.
pub fn evaluate_view(
    set: &ViewDecoderSet,
    view: ReceiverView,
    test_entries: &[RecordEntry],
    matrix: &AccessMatrix,
    gmap: &GeneralizationMap,
    schema: &AttributeSchema,
) -> Result<Vec<usize>, EvalError> {
    let predictions = predict_view_texts(set, view, test_entries, schema)?;
    let targets = oracle_view_texts(test_entries, view, matrix, gmap, schema)?;
    Ok(predictions
        .iter()
        .zip(&targets)
        .map(|(p, t)| char_error(p, t))
        .collect())
}

/// Field-aligned comparison of one prediction against its 20-field target.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BreakdownResult {
    /// Edit distance per attribute, aligned by field index.
    PerAttribute(Vec<usize>),
    /// The prediction does not have exactly 20 fields.
    Structural,
}

/// Splits both texts on `|` and reports per-field edit distances; entries
/// whose prediction has the wrong field count land in a structural bucket
/// instead of forcing an alignment.
pub fn attribute_breakdown(predicted: &str, target: &str) -> BreakdownResult {
    let p_fields: Vec<&str> = predicted.split('|').collect();
    let t_fields: Vec<&str> = target.split('|').collect();
    if p_fields.len() != ATTR_COUNT || t_fields.len() != ATTR_COUNT {
        return BreakdownResult::Structural;
    }
    BreakdownResult::PerAttribute(
        p_fields
            .iter()
            .zip(&t_fields)
            .map(|(p, t)| char_error(p, t))
            .collect(),
    )
}

/// Accumulated per-attribute error counts over a set of entries.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttributeBreakdown {
    pub per_attribute: Vec<u64>,
    pub structural_errors: u64,
    pub entries: u64,
}

impl AttributeBreakdown {
    pub fn new() -> Self {
        AttributeBreakdown {
            per_attribute: vec![0; ATTR_COUNT],
            structural_errors: 0,
            entries: 0,
        }
    }

    pub fn add(&mut self, predicted: &str, target: &str) {
        self.entries += 1;
        match attribute_breakdown(predicted, target) {
            BreakdownResult::PerAttribute(counts) => {
                for (acc, c) in self.per_attribute.iter_mut().zip(counts) {
                    *acc += c as u64;
                }
            }
            BreakdownResult::Structural => self.structural_errors += 1,
        }
    }

    /// Index and count of the attribute with the most accumulated error.
    pub fn top_error_attribute(&self) -> (usize, u64) {
        let mut best = 0;
        for (i, &c) in self.per_attribute.iter().enumerate() {
            if c > self.per_attribute[best] {
                best = i;
            }
        }
        (best, self.per_attribute[best])
    }
}

impl Default for AttributeBreakdown {
    fn default() -> Self {
        Self::new()
    }
}

/// Mean edit distance for every (target view, decoder used) pair.
#[derive(Debug, Clone, PartialEq)]
pub struct MismatchMatrix {
    pub views: Vec<ReceiverView>,
    /// `mean[target_view_index][decoder_index]`
    pub mean: Vec<Vec<f64>>,
}

impl MismatchMatrix {
    pub fn diagonal(&self, view_index: usize) -> f64 {
        self.mean[view_index][view_index]
    }
}

/// Decodes every test entry with every trained decoder and scores each
/// decoding against every view's oracle targets. Matched pairs sit on the
/// diagonal; off-diagonal cells measure what a wrong decoder recovers.
pub fn mismatch_experiment(
    set: &ViewDecoderSet,
    test_entries: &[RecordEntry],
    matrix: &AccessMatrix,
    gmap: &GeneralizationMap,
    schema: &AttributeSchema,
) -> Result<MismatchMatrix, EvalError> {
    let views = set.views();
    if views.len() < 2 {
        return Err(EvalError::NotEnoughViews { found: views.len() });
    }
    let mut predictions = Vec::with_capacity(views.len());
    for &view in &views {
        predictions.push(predict_view_texts(set, view, test_entries, schema)?);
    }
    let mut mean = vec![vec![0.0; views.len()]; views.len()];
    for (vi, &target_view) in views.iter().enumerate() {
        let targets = oracle_view_texts(test_entries, target_view, matrix, gmap, schema)?;
        for (di, preds) in predictions.iter().enumerate() {
            let total: u64 = preds
                .iter()
                .zip(&targets)
                .map(|(p, t)| char_error(p, t) as u64)
                .sum();
            mean[vi][di] = total as f64 / test_entries.len().max(1) as f64;
        }
    }
    Ok(MismatchMatrix { views, mean })
}

/// Summary statistics for one view.
#[derive(Debug, Clone, PartialEq)]
pub struct ViewReport {
    pub view: ReceiverView,
    pub n_entries: usize,
    pub mean_char_error: f64,
    pub median_char_error: f64,
    pub exact_match_rate: f64,
    pub mean_positionwise_mismatch: f64,
    pub mean_target_length: f64,
    pub breakdown: AttributeBreakdown,
}

/// Full evaluation report.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub views: Vec<ViewReport>,
    pub mismatch: Option<MismatchMatrix>,
    pub attribute_names: Vec<String>,
}

fn median(sorted: &[usize]) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2] as f64
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) as f64 / 2.0
    }
}

/// Evaluates every trained view (optionally restricted to `only`) and, when
/// at least two decoders exist, runs the mismatch experiment.
pub fn evaluate_full(
    set: &ViewDecoderSet,
    test_entries: &[RecordEntry],
    only: Option<&[ReceiverView]>,
    matrix: &AccessMatrix,
    gmap: &GeneralizationMap,
    schema: &AttributeSchema,
) -> Result<EvalReport, EvalError> {
    let views: Vec<ReceiverView> = match only {
        Some(subset) => subset.to_vec(),
        None => set.views(),
    };
    let vocab = Vocabulary::standard();
    let mut reports = Vec::with_capacity(views.len());
    for &view in &views {
        let predictions = predict_view_texts(set, view, test_entries, schema)?;
        let targets = oracle_view_texts(test_entries, view, matrix, gmap, schema)?;
        let mut distances: Vec<usize> = predictions
            .iter()
            .zip(&targets)
            .map(|(p, t)| char_error(p, t))
            .collect();
        let mut breakdown = AttributeBreakdown::new();
        let mut exact = 0usize;
        let mut poswise = 0usize;
        for (p, t) in predictions.iter().zip(&targets) {
            breakdown.add(p, t);
            if p == t {
                exact += 1;
            }
            poswise += positionwise_mismatch(p, t, &vocab, schema.max_len())?;
        }
        let n = test_entries.len();
        let mean = distances.iter().sum::<usize>() as f64 / n.max(1) as f64;
        let mean_target_length =
            targets.iter().map(|t| t.chars().count()).sum::<usize>() as f64 / n.max(1) as f64;
        distances.sort_unstable();
        reports.push(ViewReport {
            view,
            n_entries: n,
            mean_char_error: mean,
            median_char_error: median(&distances),
            exact_match_rate: exact as f64 / n.max(1) as f64,
            mean_positionwise_mismatch: poswise as f64 / n.max(1) as f64,
            mean_target_length,
            breakdown,
        });
    }
    let mismatch = if set.decoders.len() >= 2 {
        Some(mismatch_experiment(
            set,
            test_entries,
            matrix,
            gmap,
            schema,
        )?)
    } else {
        None
    };
    Ok(EvalReport {
        views: reports,
        mismatch,
        attribute_names: schema
            .attributes()
            .iter()
            .map(|a| a.key.to_string())
            .collect(),
    })
}

impl EvalReport {
    /// Fixed-format human-readable table; identical bytes for identical
    /// inputs.
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        out.push_str("view evaluation\n");
        out.push_str("===============\n");
        for v in &self.views {
            out.push_str(&format!(
                "view {:<13} entries {:>6}  mean-edit {:>8.4}  median {:>6.1}  exact {:>6.4}  poswise {:>8.4}  target-len {:>7.2}\n",
                v.view.as_str(),
                v.n_entries,
                v.mean_char_error,
                v.median_char_error,
                v.exact_match_rate,
                v.mean_positionwise_mismatch,
                v.mean_target_length,
            ));
        }
        out.push_str("\nper-attribute error counts\n");
        out.push_str("--------------------------\n");
        for v in &self.views {
            let (top, count) = v.breakdown.top_error_attribute();
            out.push_str(&format!(
                "view {:<13} top-error attribute: {} ({count} errors)\n",
                v.view.as_str(),
                self.attribute_names[top],
            ));
            for (name, c) in self.attribute_names.iter().zip(&v.breakdown.per_attribute) {
                out.push_str(&format!("  {name:<22} {c:>8}\n"));
            }
            out.push_str(&format!(
                "  {:<22} {:>8}\n",
                "structural(!=20 fields)", v.breakdown.structural_errors
            ));
        }
        if let Some(mm) = &self.mismatch {
            out.push_str(
                "\nmismatch matrix (rows: target view, cols: decoder, mean edit distance)\n",
            );
            out.push_str(
                "----------------------------------------------------------------------\n",
            );
            out.push_str(&format!("{:<15}", ""));
            for v in &mm.views {
                out.push_str(&format!("{:>15}", v.as_str()));
            }
            out.push('\n');
            for (vi, v) in mm.views.iter().enumerate() {
                out.push_str(&format!("{:<15}", v.as_str()));
                for di in 0..mm.views.len() {
                    out.push_str(&format!("{:>15.4}", mm.mean[vi][di]));
                }
                out.push('\n');
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::{default_access_matrix, default_generalization_map};
    use crate::rng::DetRng;
    use crate::seqnet::init_params;
    use crate::seqnet::AdamState;
    use crate::simulator::{simulate_dataset, SimulationConfig};
    use crate::training::{TrainMeta, ViewDecoder};

    #[test]
    fn char_error_hand_values() {
        assert_eq!(char_error("kitten", "sitting"), 3);
        assert_eq!(char_error("abc", "abc"), 0);
        assert_eq!(char_error("", "abc"), 3);
        assert_eq!(char_error("abc", ""), 3);
        assert_eq!(char_error("flaw", "lawn"), 2);
    }

    #[test]
    fn char_error_is_a_metric() {
        let mut rng = DetRng::from_seed(5);
        let alphabet: Vec<char> = "ab|*".chars().collect();
        let random_text = |rng: &mut DetRng| -> String {
            let len = rng.gen_below(12) as usize;
            (0..len).map(|_| *rng.choose(&alphabet)).collect()
        };
        for _ in 0..300 {
            let (x, y, z) = (
                random_text(&mut rng),
                random_text(&mut rng),
                random_text(&mut rng),
            );
            assert_eq!(char_error(&x, &y), char_error(&y, &x));
            assert_eq!(char_error(&x, &x), 0);
            if x != y {
                assert!(char_error(&x, &y) > 0);
            }
            assert!(char_error(&x, &z) <= char_error(&x, &y) + char_error(&y, &z));
        }
    }

    #[test]
    fn breakdown_isolates_the_differing_field() {
        let base = vec!["a"; ATTR_COUNT].join("|");
        let mut fields: Vec<&str> = base.split('|').collect();
        fields[9] = "zz";
        let changed = fields.join("|");
        match attribute_breakdown(&changed, &base) {
            BreakdownResult::PerAttribute(counts) => {
                for (i, c) in counts.iter().enumerate() {
                    assert_eq!(*c, if i == 9 { 2 } else { 0 });
                }
            }
            BreakdownResult::Structural => panic!("unexpected structural"),
        }
        assert_eq!(
            attribute_breakdown(&base, &base),
            BreakdownResult::PerAttribute(vec![0; ATTR_COUNT])
        );
        let nineteen = vec!["a"; ATTR_COUNT - 1].join("|");
        assert_eq!(
            attribute_breakdown(&nineteen, &base),
            BreakdownResult::Structural
        );
    }

    #[test]
    fn positionwise_counts_padded_differences() {
        let vocab = Vocabulary::standard();
        assert_eq!(positionwise_mismatch("abc", "abc", &vocab, 10).unwrap(), 0);
        assert_eq!(positionwise_mismatch("abc", "abd", &vocab, 10).unwrap(), 1);
        // shifted content misaligns everything after the first symbol
        assert!(positionwise_mismatch("bc", "abc", &vocab, 10).unwrap() >= 2);
    }

    fn untrained_set(hidden: usize, views: &[ReceiverView], seed: u64) -> ViewDecoderSet {
        let encoder = init_params::<f32>(hidden, 42, 1, false, seed);
        let encoder_adam = AdamState::new(&encoder, 0.0004);
        let decoders = views
            .iter()
            .enumerate()
            .map(|(i, &view)| {
                let params = init_params::<f32>(hidden, 42, 1, true, seed + 1 + i as u64);
                let adam = AdamState::new(&params, 0.0004);
                ViewDecoder { view, params, adam }
            })
            .collect();
        ViewDecoderSet {
            encoder,
            encoder_adam,
            decoders,
            meta: TrainMeta {
                seed,
                steps: 0,
                lr: 0.0004,
                max_len: 160,
                input_reversed: false,
            },
        }
    }

    #[test]
    fn evaluate_view_reports_one_distance_per_entry() {
        let schema = AttributeSchema::standard();
        let matrix = default_access_matrix();
        let gmap = default_generalization_map();
        let entries = simulate_dataset(&SimulationConfig::new(6, 2, 3), &schema).unwrap();
        let set = untrained_set(10, &[ReceiverView::Researcher], 1);
        let distances = evaluate_view(
            &set,
            ReceiverView::Researcher,
            &entries,
            &matrix,
            &gmap,
            &schema,
        )
        .unwrap();
        assert_eq!(distances.len(), entries.len());
        assert!(matches!(
            evaluate_view(
                &set,
                ReceiverView::Doctor,
                &entries,
                &matrix,
                &gmap,
                &schema
            ),
            Err(EvalError::MissingDecoder { .. })
        ));
    }

    #[test]
    fn untrained_decoder_scores_near_random_text_baseline() {
        let schema = AttributeSchema::standard();
        let matrix = default_access_matrix();
        let gmap = default_generalization_map();
        let entries = simulate_dataset(&SimulationConfig::new(20, 2, 9), &schema).unwrap();
        let set = untrained_set(16, &[ReceiverView::Caregiver], 8);
        let predictions =
            predict_view_texts(&set, ReceiverView::Caregiver, &entries, &schema).unwrap();
        let targets =
            oracle_view_texts(&entries, ReceiverView::Caregiver, &matrix, &gmap, &schema).unwrap();
        let model_mean: f64 = predictions
            .iter()
            .zip(&targets)
            .map(|(p, t)| char_error(p, t) as f64)
            .sum::<f64>()
            / entries.len() as f64;

        // Monte-Carlo floor: random printable text of the same length as
        // each decoder output, scored against the same targets
        let vocab = Vocabulary::standard();
        let mut rng = DetRng::from_seed(123);
        let mut baseline = 0.0;
        for (p, t) in predictions.iter().zip(&targets) {
            let random: String = (0..p.chars().count())
                .map(|_| vocab.char_of(rng.gen_below(40) as u8).unwrap())
                .collect();
            baseline += char_error(&random, t) as f64;
        }
        baseline /= entries.len() as f64;
        assert!(
            (model_mean - baseline).abs() <= 0.2 * baseline,
            "untrained decoder mean {model_mean} vs random baseline {baseline}"
        );
    }

    #[test]
    fn mismatch_matrix_diagonal_matches_evaluate_view() {
        let schema = AttributeSchema::standard();
        let matrix = default_access_matrix();
        let gmap = default_generalization_map();
        let entries = simulate_dataset(&SimulationConfig::new(5, 2, 31), &schema).unwrap();
        let views = [ReceiverView::Researcher, ReceiverView::Caregiver];
        let set = untrained_set(12, &views, 21);
        let mm = mismatch_experiment(&set, &entries, &matrix, &gmap, &schema).unwrap();
        for (vi, &view) in views.iter().enumerate() {
            let distances = evaluate_view(&set, view, &entries, &matrix, &gmap, &schema).unwrap();
            let mean = distances.iter().sum::<usize>() as f64 / entries.len() as f64;
            assert!((mm.diagonal(vi) - mean).abs() < 1e-12);
        }
        let single = untrained_set(12, &[ReceiverView::Doctor], 2);
        assert!(matches!(
            mismatch_experiment(&single, &entries, &matrix, &gmap, &schema),
            Err(EvalError::NotEnoughViews { found: 1 })
        ));
    }

    #[test]
    fn full_report_renders_deterministically() {
        let schema = AttributeSchema::standard();
        let matrix = default_access_matrix();
        let gmap = default_generalization_map();
        let entries = simulate_dataset(&SimulationConfig::new(4, 2, 13), &schema).unwrap();
        let views = [ReceiverView::Researcher, ReceiverView::Caregiver];
        let set = untrained_set(8, &views, 77);
        let a = evaluate_full(&set, &entries, None, &matrix, &gmap, &schema).unwrap();
        let b = evaluate_full(&set, &entries, None, &matrix, &gmap, &schema).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.render_text(), b.render_text());
        assert!(a.render_text().contains("mismatch matrix"));
        for v in &a.views {
            assert!(v.exact_match_rate >= 0.0 && v.exact_match_rate <= 1.0);
        }
    }
}
