//! Command-line pipeline: simulate records, apply privacy views, train the
//! encoder/decoder set, share encoded vectors, and evaluate decoders.

mod manifest;
mod vectors;

use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand};
use serde_json::json;

use privview_core::eval::{evaluate_full, EvalReport};
use privview_core::policy::{
    apply_view_text, default_access_matrix, default_generalization_map, AccessMatrix,
    GeneralizationMap, ReceiverView,
};
use privview_core::records::{
    dataset_lines, encode_chars, read_dataset, serialize_entry, write_dataset, AttributeSchema,
    Vocabulary,
};
use privview_core::seqnet::{encode_sequence, greedy_decode};
use privview_core::simulator::{simulate_dataset, SimulationConfig};
use privview_core::training::{load_checkpoint, train, TrainConfig};

use manifest::Manifest;

#[derive(Parser)]
#[command(
    name = "privview",
    version,
    about = "Privacy views over simulated assisted-living records via an LSTM encoder and per-view decoders"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset file
    Simulate {
        #[arg(long)]
        users: u64,
        #[arg(long, default_value_t = 100)]
        entries_per_user: u64,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Apply one receiver view's privacy operations to a dataset file
    Apply {
        #[arg(long, value_parser = parse_view)]
        view: ReceiverView,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// key-value overrides for the access matrix / generalization map
        #[arg(long)]
        policy: Option<PathBuf>,
    },
    /// Train the shared encoder and per-view decoders
    Train {
        #[arg(long)]
        data: PathBuf,
        /// held-out dataset for periodic evaluation snapshots
        #[arg(long)]
        eval_data: Option<PathBuf>,
        /// comma-separated views, or "all"
        #[arg(long, default_value = "all")]
        views: String,
        #[arg(long, default_value_t = 256)]
        hidden: usize,
        #[arg(long, default_value_t = 1)]
        layers: usize,
        #[arg(long, default_value_t = 0.0004)]
        lr: f64,
        #[arg(long, default_value_t = 64)]
        batch: usize,
        #[arg(long)]
        steps: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        ckpt: PathBuf,
        /// measure held-out character error every N steps (requires --eval-data)
        #[arg(long, default_value_t = 0)]
        eval_every: usize,
        /// prefix-curriculum steps before the real view targets (4 equal
        /// phases revealing 5, 9, 13, then 17 attributes)
        #[arg(long, default_value_t = 0)]
        warmup: usize,
        /// also append the per-step metrics records to this file
        #[arg(long)]
        metrics: Option<PathBuf>,
        #[arg(long)]
        policy: Option<PathBuf>,
    },
    /// Encode dataset entries into fixed-length vectors
    Encode {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Greedy-decode encoded vectors with one view's decoder
    Decode {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long, value_parser = parse_view)]
        view: ReceiverView,
        #[arg(long)]
        vectors: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate trained decoders against the policy oracle
    Evaluate {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// comma-separated views, or "all" for every view in the checkpoint
        #[arg(long, default_value = "all")]
        views: String,
        #[arg(long)]
        report: PathBuf,
        /// per-entry predictions and distances, as JSON lines
        #[arg(long)]
        dump: Option<PathBuf>,
        #[arg(long)]
        policy: Option<PathBuf>,
    },
}

fn parse_view(text: &str) -> Result<ReceiverView, String> {
    ReceiverView::parse(text).ok_or_else(|| {
        format!("unknown view {text:?} (family-member, doctor, caregiver, researcher)")
    })
}

fn parse_views(text: &str) -> Result<Vec<ReceiverView>, String> {
    if text == "all" {
        return Ok(ReceiverView::ALL.to_vec());
    }
    text.split(',').map(|v| parse_view(v.trim())).collect()
}

fn load_policy(
    path: Option<&PathBuf>,
    schema: &AttributeSchema,
) -> Result<(AccessMatrix, GeneralizationMap)> {
    let mut matrix = default_access_matrix();
    let mut gmap = default_generalization_map();
    if let Some(path) = path {
        let content = std::fs::read_to_string(path)
            .with_context(|| format!("reading policy config {}", path.display()))?;
        privview_core::policy::load_policy_config(&content, schema, &mut matrix, &mut gmap)
            .map_err(|e| anyhow!("{e}"))?;
    }
    Ok((matrix, gmap))
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn run(cli: Cli) -> Result<()> {
    let schema = AttributeSchema::standard();
    match cli.command {
        Command::Simulate {
            users,
            entries_per_user,
            seed,
            out,
        } => {
            let config = SimulationConfig::new(users, entries_per_user, seed);
            let entries = simulate_dataset(&config, &schema).map_err(|e| anyhow!("{e}"))?;
            write_dataset(&out, &entries, &schema).map_err(|e| anyhow!("{e}"))?;
            let r = &config.value_ranges;
            let mut m = Manifest::new(
                "simulate",
                json!({
                    "users": users,
                    "entries_per_user": entries_per_user,
                    "seed": seed,
                    "out": out.display().to_string(),
                    "schema_fingerprint": schema.fingerprint(),
                    "max_len": schema.max_len(),
                    "value_ranges": {
                        "first_names": r.first_names,
                        "surnames": r.surnames,
                        "streets": r.streets,
                        "cities": r.cities,
                        "house_numbers": r.house_numbers,
                        "phone_prefix": r.phone_prefix,
                        "phone_digits": r.phone_digits,
                        "genders": r.genders,
                        "occupations": r.occupations,
                        "marital_statuses": r.marital_statuses,
                        "diseases": r.diseases,
                        "age_years": r.age_years,
                        "height_cm": r.height_cm,
                        "weight_kg": r.weight_kg,
                        "systolic_mmhg": r.systolic_mmhg,
                        "diastolic_mmhg": r.diastolic_mmhg,
                        "glucose_mg_dl": r.glucose_mg_dl,
                        "pedometer_steps": r.pedometer_steps,
                        "temperature_c": r.temperature_c,
                        "energy_tenths_kwh": r.energy_tenths_kwh,
                        "timestamp_start": r.timestamp_start,
                        "step_minutes": r.step_minutes,
                    },
                }),
            );
            m.add_output(&out)?;
            m.write_next_to(&out)?;
            println!("wrote {} entries to {}", entries.len(), out.display());
        }
        Command::Apply {
            view,
            input,
            out,
            policy,
        } => {
            let (matrix, gmap) = load_policy(policy.as_ref(), &schema)?;
            let content = std::fs::read_to_string(&input)
                .with_context(|| format!("reading {}", input.display()))?;
            let lines = dataset_lines(&content, &schema).map_err(|e| anyhow!("{e}"))?;
            let mut output = String::new();
            for line in &lines {
                let transformed = apply_view_text(line, view, &matrix, &gmap, &schema)
                    .map_err(|e| anyhow!("{e}"))?;
                output.push_str(&transformed);
                output.push('\n');
            }
            std::fs::write(&out, output.as_bytes())
                .with_context(|| format!("writing {}", out.display()))?;
            let mut m = Manifest::new(
                "apply",
                json!({
                    "view": view.as_str(),
                    "in": input.display().to_string(),
                    "out": out.display().to_string(),
                    "policy": policy.as_ref().map(|p| p.display().to_string()),
                }),
            );
            m.add_input(&input)?;
            if let Some(p) = &policy {
                m.add_input(p)?;
            }
            m.add_output(&out)?;
            m.write_next_to(&out)?;
            println!("wrote {} {} lines to {}", lines.len(), view, out.display());
        }
        Command::Train {
            data,
            eval_data,
            views,
            hidden,
            layers,
            lr,
            batch,
            steps,
            seed,
            ckpt,
            eval_every,
            warmup,
            metrics,
            policy,
        } => {
            if eval_every > 0 && eval_data.is_none() {
                eprintln!("error: --eval-every requires --eval-data");
                std::process::exit(2);
            }
            let views = parse_views(&views).map_err(|e| anyhow!("{e}"))?;
            let (matrix, gmap) = load_policy(policy.as_ref(), &schema)?;
            let train_set = read_dataset(&data, &schema).map_err(|e| anyhow!("{e}"))?;
            let eval_set = match &eval_data {
                Some(p) => Some(read_dataset(p, &schema).map_err(|e| anyhow!("{e}"))?),
                None => None,
            };
            let config = TrainConfig {
                hidden_dim: hidden,
                n_layers: layers,
                lr,
                batch_size: batch,
                max_steps: steps,
                seed,
                views: views.clone(),
                eval_every,
                reverse_input: true,
                warmup_phases: if warmup > 0 {
                    let q = warmup as u64 / 4;
                    [5usize, 9, 13, 17]
                        .iter()
                        .enumerate()
                        .map(|(i, &keep)| privview_core::training::WarmupPhase {
                            steps: if i == 3 { warmup as u64 - 3 * q } else { q },
                            matrix: matrix.with_tail_deleted(keep),
                        })
                        .collect()
                } else {
                    Vec::new()
                },
                stop_when_loss_below: None,
                checkpoint_path: Some(ckpt.clone()),
            };
            let mut metrics_file = match &metrics {
                Some(p) => Some(
                    std::fs::File::create(p)
                        .with_context(|| format!("creating {}", p.display()))?,
                ),
                None => None,
            };
            let stdout = std::io::stdout();
            train(
                &train_set,
                eval_set.as_deref(),
                &config,
                &matrix,
                &gmap,
                &schema,
                |r| {
                    let line = serde_json::to_string(&json!({
                        "step": r.step,
                        "view": r.view.as_str(),
                        "loss": r.loss,
                        "heldout_char_error": r.heldout_char_error,
                    }))
                    .expect("metrics record serializes");
                    let mut lock = stdout.lock();
                    let _ = writeln!(lock, "{line}");
                    if let Some(f) = metrics_file.as_mut() {
                        let _ = writeln!(f, "{line}");
                    }
                },
            )
            .map_err(|e| anyhow!("{e}"))?;
            let mut m = Manifest::new(
                "train",
                json!({
                    "data": data.display().to_string(),
                    "eval_data": eval_data.as_ref().map(|p| p.display().to_string()),
                    "views": views.iter().map(|v| v.as_str()).collect::<Vec<_>>(),
                    "hidden": hidden,
                    "layers": layers,
                    "lr": lr,
                    "batch": batch,
                    "steps": steps,
                    "seed": seed,
                    "ckpt": ckpt.display().to_string(),
                    "eval_every": eval_every,
                    "warmup": warmup,
                    "policy": policy.as_ref().map(|p| p.display().to_string()),
                }),
            );
            m.add_input(&data)?;
            if let Some(p) = &eval_data {
                m.add_input(p)?;
            }
            if let Some(p) = &policy {
                m.add_input(p)?;
            }
            m.add_output(&ckpt)?;
            if let Some(p) = &metrics {
                m.add_output(p)?;
            }
            m.write_next_to(&ckpt)?;
            eprintln!("checkpoint written to {}", ckpt.display());
        }
        Command::Encode { ckpt, data, out } => {
            let set = load_checkpoint(&ckpt).map_err(|e| anyhow!("{e}"))?;
            let entries = read_dataset(&data, &schema).map_err(|e| anyhow!("{e}"))?;
            let vocab = Vocabulary::standard();
            let max_len = set.meta.max_len;
            let mut vecs = Vec::with_capacity(entries.len());
            for entry in &entries {
                let mut text = serialize_entry(entry, &schema).map_err(|e| anyhow!("{e}"))?;
                if set.meta.input_reversed {
                    text = text.chars().rev().collect();
                }
                let seq = encode_chars(&text, &vocab, max_len).map_err(|e| anyhow!("{e}"))?;
                vecs.push(encode_sequence(&set.encoder, &seq).map_err(|e| anyhow!("{e}"))?);
            }
            vectors::write_vectors(&out, set.encoder.hidden_dim(), &vecs)?;
            let mut m = Manifest::new(
                "encode",
                json!({
                    "ckpt": ckpt.display().to_string(),
                    "data": data.display().to_string(),
                    "out": out.display().to_string(),
                    "hidden_dim": set.encoder.hidden_dim(),
                }),
            );
            m.add_input(&ckpt)?;
            m.add_input(&data)?;
            m.add_output(&out)?;
            m.write_next_to(&out)?;
            println!("encoded {} entries to {}", vecs.len(), out.display());
        }
        Command::Decode {
            ckpt,
            view,
            vectors: vectors_path,
            out,
        } => {
            let set = load_checkpoint(&ckpt).map_err(|e| anyhow!("{e}"))?;
            let decoder = set
                .decoder(view)
                .ok_or_else(|| anyhow!("checkpoint has no decoder for view {view}"))?;
            let (hidden_dim, vecs) = vectors::read_vectors(&vectors_path)?;
            if hidden_dim != set.encoder.hidden_dim() {
                bail!(
                    "vector file dimension {hidden_dim} does not match checkpoint hidden_dim {}",
                    set.encoder.hidden_dim()
                );
            }
            let vocab = Vocabulary::standard();
            let mut output = String::new();
            for v in &vecs {
                let (seq, _) =
                    greedy_decode(decoder, v, set.meta.max_len).map_err(|e| anyhow!("{e}"))?;
                let text = privview_core::records::decode_chars(&seq, &vocab)
                    .map_err(|e| anyhow!("{e}"))?;
                output.push_str(&text);
                output.push('\n');
            }
            std::fs::write(&out, output.as_bytes())
                .with_context(|| format!("writing {}", out.display()))?;
            let mut m = Manifest::new(
                "decode",
                json!({
                    "ckpt": ckpt.display().to_string(),
                    "view": view.as_str(),
                    "vectors": vectors_path.display().to_string(),
                    "out": out.display().to_string(),
                }),
            );
            m.add_input(&ckpt)?;
            m.add_input(&vectors_path)?;
            m.add_output(&out)?;
            m.write_next_to(&out)?;
            println!("decoded {} vectors to {}", vecs.len(), out.display());
        }
        Command::Evaluate {
            ckpt,
            data,
            views,
            report,
            dump,
            policy,
        } => {
            let set = load_checkpoint(&ckpt).map_err(|e| anyhow!("{e}"))?;
            let (matrix, gmap) = load_policy(policy.as_ref(), &schema)?;
            let entries = read_dataset(&data, &schema).map_err(|e| anyhow!("{e}"))?;
            let only: Option<Vec<ReceiverView>> = if views == "all" {
                None
            } else {
                Some(parse_views(&views).map_err(|e| anyhow!("{e}"))?)
            };
            let full = evaluate_full(&set, &entries, only.as_deref(), &matrix, &gmap, &schema)
                .map_err(|e| anyhow!("{e}"))?;
            std::fs::write(&report, full.render_text().as_bytes())
                .with_context(|| format!("writing {}", report.display()))?;
            let jsonl_path = {
                let mut name = report.file_name().unwrap_or_default().to_os_string();
                name.push(".jsonl");
                report.with_file_name(name)
            };
            std::fs::write(&jsonl_path, report_jsonl(&full).as_bytes())
                .with_context(|| format!("writing {}", jsonl_path.display()))?;
            if let Some(dump_path) = &dump {
                write_dump(dump_path, &set, &entries, &matrix, &gmap, &schema)?;
            }
            let mut m = Manifest::new(
                "evaluate",
                json!({
                    "ckpt": ckpt.display().to_string(),
                    "data": data.display().to_string(),
                    "views": views,
                    "report": report.display().to_string(),
                    "dump": dump.as_ref().map(|p| p.display().to_string()),
                    "policy": policy.as_ref().map(|p| p.display().to_string()),
                }),
            );
            m.add_input(&ckpt)?;
            m.add_input(&data)?;
            if let Some(p) = &policy {
                m.add_input(p)?;
            }
            m.add_output(&report)?;
            m.add_output(&jsonl_path)?;
            if let Some(p) = &dump {
                m.add_output(p)?;
            }
            m.write_next_to(&report)?;
            print!("{}", full.render_text());
        }
    }
    Ok(())
}

fn report_jsonl(report: &EvalReport) -> String {
    let mut out = String::new();
    for v in &report.views {
        out.push_str(
            &serde_json::to_string(&json!({
                "record": "view_summary",
                "view": v.view.as_str(),
                "entries": v.n_entries,
                "mean_char_error": v.mean_char_error,
                "median_char_error": v.median_char_error,
                "exact_match_rate": v.exact_match_rate,
                "mean_positionwise_mismatch": v.mean_positionwise_mismatch,
                "mean_target_length": v.mean_target_length,
                "structural_errors": v.breakdown.structural_errors,
            }))
            .unwrap(),
        );
        out.push('\n');
        for (name, errors) in report
            .attribute_names
            .iter()
            .zip(&v.breakdown.per_attribute)
        {
            out.push_str(
                &serde_json::to_string(&json!({
                    "record": "attribute_errors",
                    "view": v.view.as_str(),
                    "attribute": name,
                    "errors": errors,
                }))
                .unwrap(),
            );
            out.push('\n');
        }
    }
    if let Some(mm) = &report.mismatch {
        for (vi, target_view) in mm.views.iter().enumerate() {
            for (di, decoder) in mm.views.iter().enumerate() {
                out.push_str(
                    &serde_json::to_string(&json!({
                        "record": "mismatch",
                        "target_view": target_view.as_str(),
                        "decoder": decoder.as_str(),
                        "mean_char_error": mm.mean[vi][di],
                    }))
                    .unwrap(),
                );
                out.push('\n');
            }
        }
    }
    out
}

fn write_dump(
    path: &Path,
    set: &privview_core::training::ViewDecoderSet,
    entries: &[privview_core::records::RecordEntry],
    matrix: &AccessMatrix,
    gmap: &GeneralizationMap,
    schema: &AttributeSchema,
) -> Result<()> {
    use privview_core::eval::{char_error, oracle_view_texts, predict_view_texts};
    let mut out = String::new();
    for view in set.views() {
        let predictions =
            predict_view_texts(set, view, entries, schema).map_err(|e| anyhow!("{e}"))?;
        let targets =
            oracle_view_texts(entries, view, matrix, gmap, schema).map_err(|e| anyhow!("{e}"))?;
        for (i, (p, t)) in predictions.iter().zip(&targets).enumerate() {
            out.push_str(
                &serde_json::to_string(&json!({
                    "index": i,
                    "view": view.as_str(),
                    "target": t,
                    "predicted": p,
                    "char_error": char_error(p, t),
                }))
                .unwrap(),
            );
            out.push('\n');
        }
    }
    std::fs::write(path, out.as_bytes()).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}
