//! Acceptance suite: one pass/fail line per criterion, run sequentially in a
//! single test so timing-sensitive stages get the whole machine.
//!
//! Run with `cargo test -p privview-core --test acceptance -- --nocapture`
//! to watch the lines as they complete.

mod support;

use std::time::Instant;

use privview_core::eval::{evaluate_full, mismatch_experiment};
use privview_core::policy::{
    apply_view, apply_view_text, default_access_matrix, default_generalization_map,
    PrivacyOperation, ReceiverView,
};
use privview_core::records::{
    attr, dataset_to_string, serialize_entry, AttributeSchema, AttributeValue, RecordEntry,
    Vocabulary, ATTR_COUNT,
};
use privview_core::seqnet::{
    adam_update, init_params, loss_and_grads, AdamState, LstmParams, Matrix,
};
use privview_core::simulator::{simulate_dataset, split_train_test, SimulationConfig};
use privview_core::training::{train, TrainConfig};

struct Outcome {
    label: &'static str,
    passed: bool,
    detail: String,
}

fn report(outcomes: &mut Vec<Outcome>, label: &'static str, passed: bool, detail: String) {
    println!(
        "criterion {label}: {} — {detail}",
        if passed { "PASS" } else { "FAIL" }
    );
    outcomes.push(Outcome {
        label,
        passed,
        detail,
    });
}

#[test]
fn acceptance_criteria() {
    let mut outcomes = Vec::new();

    criterion_1_policy_oracle(&mut outcomes);
    criterion_2_numeric_kernels(&mut outcomes);
    criterion_3_memorization(&mut outcomes);
    criterion_7_reproducibility(&mut outcomes);
    criterion_4_to_6_desk_scale(&mut outcomes);

    let failures: Vec<String> = outcomes
        .iter()
        .filter(|o| !o.passed)
        .map(|o| format!("criterion {}: {}", o.label, o.detail))
        .collect();
    assert!(
        failures.is_empty(),
        "failed criteria:\n{}",
        failures.join("\n")
    );
}

// -------------------------------------------------------------------------
// criterion 1 — policy oracle
// -------------------------------------------------------------------------

/// Independent transcription of the access-to-information table: one row per
/// attribute, columns family member / doctor / caregiver / researcher.
const TABLE_ROWS: [(&str, &str); ATTR_COUNT] = [
    ("name", "FFFD"),
    ("age", "FFGG"),
    ("gender", "FFFF"),
    ("height", "FFGG"),
    ("weight", "FFGG"),
    ("address", "FGFG"),
    ("phone-number", "FFFD"),
    ("occupation", "FGGG"),
    ("marital-status", "FGGG"),
    ("timestamp", "FFFF"),
    ("blood-pressure", "GFFG"),
    ("glucose-level", "GFFG"),
    ("disease", "FFFG"),
    ("wearable-pedometer", "FFFF"),
    ("presence-sensor", "FDFF"),
    ("temperature-sensor", "FFFG"),
    ("light-sensor", "FDDF"),
    ("window-sensor", "FDFD"),
    ("external-door-sensor", "FDFD"),
    ("energy-consumption", "GDDG"),
];

fn figure4_entry() -> RecordEntry {
    RecordEntry {
        user_id: 0,
        values: vec![
            AttributeValue::Text("john-smith".into()),
            AttributeValue::Int(80),
            AttributeValue::Choice("male".into()),
            AttributeValue::Int(172),
            AttributeValue::Int(68),
            AttributeValue::Text("9-park-road-derby".into()),
            AttributeValue::Text("071234567".into()),
            AttributeValue::Choice("retired".into()),
            AttributeValue::Choice("widowed".into()),
            AttributeValue::Timestamp(1_489_476_300),
            AttributeValue::Pair(126, 84),
            AttributeValue::Int(118),
            AttributeValue::Choice("alzheimer".into()),
            AttributeValue::Int(4021),
            AttributeValue::Choice("on".into()),
            AttributeValue::Int(21),
            AttributeValue::Choice("off".into()),
            AttributeValue::Choice("off".into()),
            AttributeValue::Choice("on".into()),
            AttributeValue::Int(27),
        ],
    }
}

fn criterion_1_policy_oracle(outcomes: &mut Vec<Outcome>) {
    let start = Instant::now();
    let schema = AttributeSchema::standard();
    let matrix = default_access_matrix();
    let gmap = default_generalization_map();
    let mut problems = Vec::new();

    // all 80 cells
    let mut checked = 0;
    for (row, (key, ops)) in TABLE_ROWS.iter().enumerate() {
        let attr_index = schema.index_of(key).expect("attribute key");
        assert_eq!(attr_index, row);
        for (col, view) in ReceiverView::ALL.iter().enumerate() {
            let expected = match ops.as_bytes()[col] {
                b'F' => PrivacyOperation::Disclose,
                b'G' => PrivacyOperation::Generalize,
                b'D' => PrivacyOperation::Delete,
                other => panic!("bad table char {other}"),
            };
            if matrix.op(*view, attr_index) != expected {
                problems.push(format!("cell ({key}, {view}) != {expected:?}"));
            }
            checked += 1;
        }
    }
    assert_eq!(checked, 80);

    // the use-case entry under the researcher view
    let researcher = apply_view(
        &figure4_entry(),
        ReceiverView::Researcher,
        &matrix,
        &gmap,
        &schema,
    )
    .unwrap();
    let fields: Vec<&str> = researcher.split('|').collect();
    if fields[attr::NAME] != "*" {
        problems.push(format!("researcher name field is {:?}", fields[attr::NAME]));
    }
    if fields[attr::DISEASE] != "dementia" {
        problems.push(format!(
            "researcher disease field is {:?}",
            fields[attr::DISEASE]
        ));
    }

    // properties over ten thousand random entries
    let dataset = simulate_dataset(&SimulationConfig::new(1000, 10, 11), &schema).unwrap();
    assert_eq!(dataset.len(), 10_000);
    for entry in &dataset {
        for view in ReceiverView::ALL {
            let text = apply_view(entry, view, &matrix, &gmap, &schema).unwrap();
            if text.matches('|').count() != ATTR_COUNT - 1 {
                problems.push(format!("field count broken for {view}"));
                break;
            }
            let twice = apply_view_text(&text, view, &matrix, &gmap, &schema).unwrap();
            if twice != text {
                problems.push(format!("idempotence broken for {view}"));
                break;
            }
            for (i, field) in text.split('|').enumerate() {
                if matrix.op(view, i) == PrivacyOperation::Delete && field != "*" {
                    problems.push(format!("delete constancy broken for {view} attr {i}"));
                    break;
                }
            }
        }
    }

    let elapsed = start.elapsed().as_secs_f64();
    if elapsed >= 10.0 {
        problems.push(format!("runtime {elapsed:.1}s exceeds 10s"));
    }
    report(
        outcomes,
        "1 (policy oracle)",
        problems.is_empty(),
        if problems.is_empty() {
            format!("80 cells match, figure-4 views correct, 10^4-entry properties hold ({elapsed:.1}s)")
        } else {
            problems.join("; ")
        },
    );
}

// -------------------------------------------------------------------------
// criterion 2 — numeric kernels
// -------------------------------------------------------------------------

fn criterion_2_numeric_kernels(outcomes: &mut Vec<Outcome>) {
    let start = Instant::now();
    let mut problems = Vec::new();

    // gradients vs central finite differences on 50 random small instances
    let mut worst = 0.0f64;
    for seed in 0..50 {
        let mut inst = support::random_instance(seed);
        let err = support::max_gradient_error(&mut inst, 1e-5);
        worst = worst.max(err);
    }
    if worst > 1e-4 {
        problems.push(format!("max relative gradient error {worst:e} > 1e-4"));
    }

    // Adam first-step hand value
    let mut params: LstmParams<f64> = init_params(2, 4, 1, false, 1).zeros_like();
    let mut grads = params.zeros_like();
    for s in grads.slices_mut() {
        s.fill(1.0);
    }
    let mut opt = AdamState::new(&params, 0.0004);
    adam_update(&mut params, &grads, &mut opt).unwrap();
    for s in params.slices() {
        for &v in s {
            if (v - (-0.0004)).abs() >= 1e-9 {
                problems.push(format!("Adam first step {v} not within 1e-9 of -0.0004"));
            }
        }
    }

    // initial loss near ln(42) for a random init on a simulated entry
    let schema = AttributeSchema::standard();
    let vocab = Vocabulary::standard();
    let entry = simulate_dataset(&SimulationConfig::new(1, 1, 3), &schema)
        .unwrap()
        .remove(0);
    let text = serialize_entry(&entry, &schema).unwrap();
    let seq = privview_core::records::encode_chars(&text, &vocab, schema.max_len()).unwrap();
    let encoder: LstmParams<f64> = init_params(16, 42, 1, false, 5);
    let decoder: LstmParams<f64> = init_params(16, 42, 1, true, 6);
    let (loss, _, _) = loss_and_grads(&encoder, &decoder, &seq, &seq).unwrap();
    let ln42 = 42f64.ln();
    if ((loss - ln42) / ln42).abs() >= 0.05 {
        problems.push(format!("initial loss {loss} not within 5% of ln(42)"));
    }

    // pad invariance is exact
    let short = privview_core::records::encode_chars(&text, &vocab, text.len() + 3).unwrap();
    let (loss_a, ga, da) = loss_and_grads(&encoder, &decoder, &seq, &seq).unwrap();
    let (loss_b, gb, db) = loss_and_grads(&encoder, &decoder, &short, &short).unwrap();
    if loss_a != loss_b || ga != gb || da != db {
        problems.push("pad invariance not exact".to_string());
    }
    let _ = loss;

    // replicated uniform-logits value
    let target = privview_core::records::encode_chars("ab", &vocab, 6).unwrap();
    let logits = Matrix::<f64>::zeros(target.length(), 42);
    let (uniform_loss, _) = privview_core::seqnet::masked_cross_entropy(&logits, &target).unwrap();
    if (uniform_loss - ln42).abs() > 1e-12 {
        problems.push(format!("uniform-logit loss {uniform_loss} != ln(42)"));
    }

    let elapsed = start.elapsed().as_secs_f64();
    if elapsed >= 60.0 {
        problems.push(format!("runtime {elapsed:.1}s exceeds 60s"));
    }
    report(
        outcomes,
        "2 (numeric kernels)",
        problems.is_empty(),
        if problems.is_empty() {
            format!("50 gradient checks within 1e-4 (worst {worst:.2e}), Adam step exact, ln(42) init, pad-invariant ({elapsed:.1}s)")
        } else {
            problems.join("; ")
        },
    );
}

// -------------------------------------------------------------------------
// criterion 3 — memorization
// -------------------------------------------------------------------------

fn criterion_3_memorization(outcomes: &mut Vec<Outcome>) {
    let start = Instant::now();
    let schema = AttributeSchema::standard();
    let matrix = default_access_matrix();
    let gmap = default_generalization_map();
    let dataset = simulate_dataset(&SimulationConfig::new(5, 1, 2024), &schema).unwrap();
    let config = TrainConfig {
        hidden_dim: 64,
        lr: 0.008,
        batch_size: 5,
        max_steps: 5000,
        seed: 7,
        views: vec![ReceiverView::Researcher],
        stop_when_loss_below: Some(1e-3),
        ..TrainConfig::default()
    };
    let outcome = train(&dataset, None, &config, &matrix, &gmap, &schema, |_| {}).unwrap();
    let final_loss = outcome.history.last().unwrap().loss;
    let steps = outcome.history.len();

    let distances = privview_core::eval::evaluate_view(
        &outcome.set,
        ReceiverView::Researcher,
        &dataset,
        &matrix,
        &gmap,
        &schema,
    )
    .unwrap();
    let all_exact = distances.iter().all(|&d| d == 0);

    let elapsed = start.elapsed().as_secs_f64();
    let mut problems = Vec::new();
    if final_loss >= 1e-3 {
        problems.push(format!(
            "loss {final_loss:.2e} did not reach 1e-3 in {steps} steps"
        ));
    }
    if !all_exact {
        problems.push(format!(
            "greedy decode distances {distances:?} not all zero"
        ));
    }
    if elapsed >= 300.0 {
        problems.push(format!("runtime {elapsed:.1}s exceeds 5 min"));
    }
    report(
        outcomes,
        "3 (memorization)",
        problems.is_empty(),
        if problems.is_empty() {
            format!("loss {final_loss:.2e} after {steps} steps, all 5 targets reproduced ({elapsed:.0}s)")
        } else {
            problems.join("; ")
        },
    );
}

// -------------------------------------------------------------------------
// criteria 4-6 — desk-scale training, lock and key, attribute breakdown
// -------------------------------------------------------------------------

/// Prefix curriculum: reveal the record five fields at a time before the
/// full view targets take over.
fn desk_warmup(
    matrix: &privview_core::policy::AccessMatrix,
) -> Vec<privview_core::training::WarmupPhase> {
    use privview_core::training::WarmupPhase;
    vec![
        WarmupPhase {
            steps: 500,
            matrix: matrix.with_tail_deleted(5),
        },
        WarmupPhase {
            steps: 500,
            matrix: matrix.with_tail_deleted(9),
        },
        WarmupPhase {
            steps: 500,
            matrix: matrix.with_tail_deleted(13),
        },
        WarmupPhase {
            steps: 500,
            matrix: matrix.with_tail_deleted(17),
        },
    ]
}

fn criterion_4_to_6_desk_scale(outcomes: &mut Vec<Outcome>) {
    let start = Instant::now();
    let schema = AttributeSchema::standard();
    let matrix = default_access_matrix();
    let gmap = default_generalization_map();

    let dataset = simulate_dataset(&SimulationConfig::new(200, 10, 41), &schema).unwrap();
    assert_eq!(dataset.len(), 2000);
    let (train_set, test_set) = split_train_test(&dataset, 0.8, 41).unwrap();
    assert_eq!(train_set.len(), 1600);
    assert_eq!(test_set.len(), 400);

    let config = TrainConfig {
        hidden_dim: 128,
        lr: 0.004,
        batch_size: 16,
        max_steps: 8_000,
        seed: 41,
        views: vec![ReceiverView::Researcher, ReceiverView::Caregiver],
        warmup_phases: desk_warmup(&matrix),
        ..TrainConfig::default()
    };
    let outcome = train(&train_set, None, &config, &matrix, &gmap, &schema, |_| {}).unwrap();
    let train_elapsed = start.elapsed().as_secs_f64();

    let full = evaluate_full(&outcome.set, &test_set, None, &matrix, &gmap, &schema).unwrap();

    // criterion 4: held-out error within 5% of mean target length per view,
    // views within 2x of each other
    let mut problems = Vec::new();
    let mut means = Vec::new();
    for v in &full.views {
        let budget = 0.05 * v.mean_target_length;
        means.push(v.mean_char_error);
        if v.mean_char_error > budget {
            problems.push(format!(
                "view {} mean error {:.2} exceeds 5% of target length ({:.2})",
                v.view, v.mean_char_error, budget
            ));
        }
    }
    let (lo, hi) = (
        means.iter().cloned().fold(f64::INFINITY, f64::min),
        means.iter().cloned().fold(0.0, f64::max),
    );
    if hi > 2.0 * lo {
        problems.push(format!("view errors {means:?} differ by more than 2x"));
    }
    let total_elapsed = start.elapsed().as_secs_f64();
    if total_elapsed >= 3600.0 {
        problems.push(format!("runtime {total_elapsed:.0}s exceeds 60 min"));
    }
    let detail4 = format!(
        "held-out mean edit {:?} vs budgets {:?}, train {train_elapsed:.0}s, total {total_elapsed:.0}s",
        full.views
            .iter()
            .map(|v| format!("{}={:.2}", v.view, v.mean_char_error))
            .collect::<Vec<_>>(),
        full.views
            .iter()
            .map(|v| format!("{:.2}", 0.05 * v.mean_target_length))
            .collect::<Vec<_>>(),
    );
    report(
        outcomes,
        "4 (desk-scale training)",
        problems.is_empty(),
        if problems.is_empty() {
            detail4
        } else {
            format!("{detail4}; {}", problems.join("; "))
        },
    );

    // criterion 5: every off-diagonal mismatch mean >= 5x its row's diagonal
    let mm = mismatch_experiment(&outcome.set, &test_set, &matrix, &gmap, &schema).unwrap();
    let mut ratio_problems = Vec::new();
    let mut min_ratio = f64::INFINITY;
    for vi in 0..mm.views.len() {
        for di in 0..mm.views.len() {
            if vi == di {
                continue;
            }
            let ratio = mm.mean[vi][di] / mm.diagonal(vi).max(1e-9);
            min_ratio = min_ratio.min(ratio);
            if ratio < 5.0 {
                ratio_problems.push(format!(
                    "target {} decoder {}: off-diagonal {:.2} < 5x diagonal {:.2}",
                    mm.views[vi],
                    mm.views[di],
                    mm.mean[vi][di],
                    mm.diagonal(vi)
                ));
            }
        }
    }
    report(
        outcomes,
        "5 (lock and key)",
        ratio_problems.is_empty(),
        format!(
            "5x threshold is this artifact's chosen bar (the reference behavior is qualitative); worst off-diagonal/diagonal ratio {min_ratio:.1}{}",
            if ratio_problems.is_empty() { String::new() } else { format!("; {}", ratio_problems.join("; ")) }
        ),
    );

    // criterion 6: attribute breakdown identifies the top-error attribute
    let mut detail6 = Vec::new();
    let mut produced = true;
    for v in &full.views {
        if v.breakdown.per_attribute.len() != ATTR_COUNT {
            produced = false;
        }
        let (top, count) = v.breakdown.top_error_attribute();
        let name = &full.attribute_names[top];
        detail6.push(format!(
            "view {}: top-error attribute {} ({} errors; timestamp as in the reference: {})",
            v.view,
            name,
            count,
            name == "timestamp"
        ));
    }
    report(
        outcomes,
        "6 (attribute breakdown)",
        produced,
        detail6.join(" | "),
    );
}

// -------------------------------------------------------------------------
// criterion 7 — reproducibility
// -------------------------------------------------------------------------

fn criterion_7_reproducibility(outcomes: &mut Vec<Outcome>) {
    let schema = AttributeSchema::standard();
    let matrix = default_access_matrix();
    let gmap = default_generalization_map();
    let mut problems = Vec::new();

    // identical dataset files
    let config = SimulationConfig::new(30, 5, 17);
    let a = dataset_to_string(&simulate_dataset(&config, &schema).unwrap(), &schema).unwrap();
    let b = dataset_to_string(&simulate_dataset(&config, &schema).unwrap(), &schema).unwrap();
    if a != b {
        problems.push("dataset bytes differ between runs".to_string());
    }

    // identical loss histories and checkpoints
    let dataset = simulate_dataset(&config, &schema).unwrap();
    let tc = TrainConfig {
        hidden_dim: 24,
        lr: 0.002,
        batch_size: 4,
        max_steps: 30,
        seed: 23,
        views: vec![ReceiverView::Researcher, ReceiverView::Doctor],
        ..TrainConfig::default()
    };
    let run1 = train(&dataset, None, &tc, &matrix, &gmap, &schema, |_| {}).unwrap();
    let run2 = train(&dataset, None, &tc, &matrix, &gmap, &schema, |_| {}).unwrap();
    if run1.history != run2.history {
        problems.push("loss histories differ between runs".to_string());
    }
    let ck1 = privview_core::training::checkpoint_to_bytes(&run1.set);
    let ck2 = privview_core::training::checkpoint_to_bytes(&run2.set);
    if ck1 != ck2 {
        problems.push("checkpoint bytes differ between runs".to_string());
    }

    // identical evaluation reports
    let r1 = evaluate_full(&run1.set, &dataset, None, &matrix, &gmap, &schema).unwrap();
    let r2 = evaluate_full(&run2.set, &dataset, None, &matrix, &gmap, &schema).unwrap();
    if r1.render_text() != r2.render_text() {
        problems.push("evaluation reports differ between runs".to_string());
    }

    report(
        outcomes,
        "7 (reproducibility)",
        problems.is_empty(),
        if problems.is_empty() {
            "dataset bytes, loss history, checkpoint bytes, and report text identical across runs"
                .to_string()
        } else {
            problems.join("; ")
        },
    );
}
