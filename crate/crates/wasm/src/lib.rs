//! Browser demo bindings: simulate entries and their per-receiver views,
//! train a small encoder/decoder set incrementally, and run the
//! mismatched-decoder experiment, all in the page.

use wasm_bindgen::prelude::*;

use privview_core::eval::{char_error, evaluate_view, mismatch_experiment, predict_view_texts};
use privview_core::policy::{
    apply_view, default_access_matrix, default_generalization_map, AccessMatrix, GeneralizationMap,
    ReceiverView,
};
use privview_core::records::{serialize_entry, AttributeSchema, RecordEntry};
use privview_core::simulator::{simulate_dataset, SimulationConfig};
use privview_core::training::{TrainConfig, Trainer};
use serde::Serialize;

fn err_to_js(e: impl std::fmt::Display) -> JsValue {
    JsValue::from_str(&e.to_string())
}

fn to_json<T: Serialize>(value: &T) -> Result<String, JsValue> {
    serde_json::to_string(value).map_err(err_to_js)
}

fn parse_views(text: &str) -> Result<Vec<ReceiverView>, JsValue> {
    text.split(',')
        .map(|v| {
            ReceiverView::parse(v.trim())
                .ok_or_else(|| JsValue::from_str(&format!("unknown view {v:?}")))
        })
        .collect()
}

#[derive(Serialize)]
struct FieldView {
    op: &'static str,
    text: String,
}

#[derive(Serialize)]
struct ViewRow {
    view: &'static str,
    fields: Vec<FieldView>,
}

#[derive(Serialize)]
struct EntryViews {
    attributes: Vec<&'static str>,
    raw: Vec<String>,
    views: Vec<ViewRow>,
}

/// Simulates a dataset and returns one entry's raw fields plus all four
/// receiver views, field by field with the operation applied to each.
#[wasm_bindgen]
pub fn simulate_views(
    seed: u32,
    users: u32,
    entries_per_user: u32,
    entry_index: u32,
) -> Result<String, JsValue> {
    let schema = AttributeSchema::standard();
    let matrix = default_access_matrix();
    let gmap = default_generalization_map();
    let config = SimulationConfig::new(
        users.max(1) as u64,
        entries_per_user.max(1) as u64,
        seed as u64,
    );
    let dataset = simulate_dataset(&config, &schema).map_err(err_to_js)?;
    let entry = dataset
        .get(entry_index as usize)
        .ok_or_else(|| JsValue::from_str("entry index out of range"))?;
    let raw_line = serialize_entry(entry, &schema).map_err(err_to_js)?;
    let raw: Vec<String> = raw_line.split('|').map(|f| f.to_string()).collect();
    let mut views = Vec::new();
    for view in ReceiverView::ALL {
        let line = apply_view(entry, view, &matrix, &gmap, &schema).map_err(err_to_js)?;
        let fields = line
            .split('|')
            .enumerate()
            .map(|(i, text)| FieldView {
                op: matrix.op(view, i).as_str(),
                text: text.to_string(),
            })
            .collect();
        views.push(ViewRow {
            view: view.as_str(),
            fields,
        });
    }
    to_json(&EntryViews {
        attributes: schema.attributes().iter().map(|a| a.key).collect(),
        raw,
        views,
    })
}

#[derive(Serialize)]
struct StepSummary {
    step: u64,
    loss: f64,
    losses: Vec<f64>,
}

#[derive(Serialize)]
struct DecodeSample {
    entry: usize,
    view: &'static str,
    input: String,
    target: String,
    decoded: String,
    char_error: usize,
}

#[derive(Serialize)]
struct MismatchJson {
    views: Vec<&'static str>,
    mean: Vec<Vec<f64>>,
}

#[derive(Serialize)]
struct CrossDecode {
    decoder: &'static str,
    target_view: &'static str,
    target: String,
    decoded: String,
    char_error: usize,
}

/// In-page trainer over a small simulated corpus.
#[wasm_bindgen]
pub struct DemoTrainer {
    trainer: Trainer,
    schema: AttributeSchema,
    matrix: AccessMatrix,
    gmap: GeneralizationMap,
    entries: Vec<RecordEntry>,
}

#[wasm_bindgen]
impl DemoTrainer {
    /// Builds the corpus (`users` x `entries_per_user`) and a fresh model.
    #[wasm_bindgen(constructor)]
    pub fn new(
        seed: u32,
        hidden: u32,
        users: u32,
        entries_per_user: u32,
        views: String,
        lr: f64,
        batch: u32,
    ) -> Result<DemoTrainer, JsValue> {
        let schema = AttributeSchema::standard();
        let matrix = default_access_matrix();
        let gmap = default_generalization_map();
        let config = SimulationConfig::new(
            users.max(1) as u64,
            entries_per_user.max(1) as u64,
            seed as u64,
        );
        let entries = simulate_dataset(&config, &schema).map_err(err_to_js)?;
        let train_config = TrainConfig {
            hidden_dim: hidden.max(2) as usize,
            lr,
            batch_size: batch.max(1) as usize,
            seed: seed as u64,
            views: parse_views(&views)?,
            ..TrainConfig::default()
        };
        let trainer = Trainer::new(&entries, None, &train_config, &matrix, &gmap, &schema)
            .map_err(err_to_js)?;
        Ok(DemoTrainer {
            trainer,
            schema,
            matrix,
            gmap,
            entries,
        })
    }

    /// Runs `n` training steps and reports the losses.
    pub fn steps(&mut self, n: u32) -> Result<String, JsValue> {
        let mut losses = Vec::with_capacity(n as usize);
        let mut last = 0.0;
        for _ in 0..n {
            let record = self.trainer.step().map_err(err_to_js)?;
            last = record.loss;
            losses.push(record.loss);
        }
        to_json(&StepSummary {
            step: self.trainer.steps_done(),
            loss: last,
            losses,
        })
    }

    pub fn steps_done(&self) -> u32 {
        self.trainer.steps_done() as u32
    }

    /// Greedy decodes of the first `count` entries for every trained view.
    pub fn sample_decodes(&self, count: u32) -> Result<String, JsValue> {
        let n = (count as usize).min(self.entries.len());
        let subset = &self.entries[..n];
        let set = self.trainer.set();
        let mut samples = Vec::new();
        for view in set.views() {
            let predictions =
                predict_view_texts(set, view, subset, &self.schema).map_err(err_to_js)?;
            for (i, decoded) in predictions.into_iter().enumerate() {
                let input = serialize_entry(&subset[i], &self.schema).map_err(err_to_js)?;
                let target = apply_view(&subset[i], view, &self.matrix, &self.gmap, &self.schema)
                    .map_err(err_to_js)?;
                samples.push(DecodeSample {
                    entry: i,
                    view: view.as_str(),
                    input,
                    char_error: char_error(&decoded, &target),
                    target,
                    decoded,
                });
            }
        }
        to_json(&samples)
    }

    /// Mean per-view character error over the whole demo corpus.
    pub fn view_errors(&self) -> Result<String, JsValue> {
        let set = self.trainer.set();
        let mut out: Vec<(String, f64)> = Vec::new();
        for view in set.views() {
            let distances = evaluate_view(
                set,
                view,
                &self.entries,
                &self.matrix,
                &self.gmap,
                &self.schema,
            )
            .map_err(err_to_js)?;
            let mean = distances.iter().sum::<usize>() as f64 / self.entries.len().max(1) as f64;
            out.push((view.as_str().to_string(), mean));
        }
        to_json(&out)
    }

    /// Full mismatch matrix over the demo corpus.
    pub fn mismatch(&self) -> Result<String, JsValue> {
        let mm = mismatch_experiment(
            self.trainer.set(),
            &self.entries,
            &self.matrix,
            &self.gmap,
            &self.schema,
        )
        .map_err(err_to_js)?;
        to_json(&MismatchJson {
            views: mm.views.iter().map(|v| v.as_str()).collect(),
            mean: mm.mean,
        })
    }

    /// Decodes one entry with every decoder, scored against every view's
    /// oracle target: the lock-and-key demonstration.
    pub fn cross_decode(&self, entry_index: u32) -> Result<String, JsValue> {
        let entry = self
            .entries
            .get(entry_index as usize)
            .ok_or_else(|| JsValue::from_str("entry index out of range"))?;
        let subset = std::slice::from_ref(entry);
        let set = self.trainer.set();
        let mut out = Vec::new();
        for decoder_view in set.views() {
            let decoded = predict_view_texts(set, decoder_view, subset, &self.schema)
                .map_err(err_to_js)?
                .pop()
                .unwrap_or_default();
            for target_view in set.views() {
                let target = apply_view(entry, target_view, &self.matrix, &self.gmap, &self.schema)
                    .map_err(err_to_js)?;
                out.push(CrossDecode {
                    decoder: decoder_view.as_str(),
                    target_view: target_view.as_str(),
                    char_error: char_error(&decoded, &target),
                    target,
                    decoded: decoded.clone(),
                });
            }
        }
        to_json(&out)
    }
}
