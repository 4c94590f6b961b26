//! The deterministic privacy oracle.
//!
//! Applies one of three operations to every attribute of an entry depending
//! on the receiver view: disclose (keep the value), generalize (replace with
//! a less specific but semantically consistent value), or delete (replace
//! with `*`, keeping the field slot). The transformed text is both the
//! training label and the evaluation ground truth for that view's decoder.

use std::fmt;

use crate::records::{
    attr, render_value, serialize_entry, AttributeSchema, RecordEntry, RecordError, ATTR_COUNT,
};

/// Token a deleted field is replaced with.
pub const DELETED_TOKEN: &str = "*";

/// The three privacy operations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PrivacyOperation {
    Disclose,
    Generalize,
    Delete,
}

impl PrivacyOperation {
    pub fn as_str(self) -> &'static str {
        match self {
            PrivacyOperation::Disclose => "disclose",
            PrivacyOperation::Generalize => "generalize",
            PrivacyOperation::Delete => "delete",
        }
    }

    pub fn parse(text: &str) -> Option<Self> {
        match text {
            "disclose" | "f" | "F" => Some(PrivacyOperation::Disclose),
            "generalize" | "g" | "G" => Some(PrivacyOperation::Generalize),
            "delete" | "d" | "D" => Some(PrivacyOperation::Delete),
            _ => None,
        }
    }
}

/// The four receiver views.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ReceiverView {
    FamilyMember,
    Doctor,
    Caregiver,
    Researcher,
}

impl ReceiverView {
    pub const ALL: [ReceiverView; 4] = [
        ReceiverView::FamilyMember,
        ReceiverView::Doctor,
        ReceiverView::Caregiver,
        ReceiverView::Researcher,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ReceiverView::FamilyMember => "family-member",
            ReceiverView::Doctor => "doctor",
            ReceiverView::Caregiver => "caregiver",
            ReceiverView::Researcher => "researcher",
        }
    }

    pub fn parse(text: &str) -> Option<Self> {
        match text {
            "family-member" | "family" => Some(ReceiverView::FamilyMember),
            "doctor" => Some(ReceiverView::Doctor),
            "caregiver" => Some(ReceiverView::Caregiver),
            "researcher" => Some(ReceiverView::Researcher),
            _ => None,
        }
    }

    fn index(self) -> usize {
        match self {
            ReceiverView::FamilyMember => 0,
            ReceiverView::Doctor => 1,
            ReceiverView::Caregiver => 2,
            ReceiverView::Researcher => 3,
        }
    }
}

impl fmt::Display for ReceiverView {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Privacy operation per (receiver view, attribute) pair.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AccessMatrix {
    ops: [[PrivacyOperation; ATTR_COUNT]; 4],
}

impl AccessMatrix {
    pub fn op(&self, view: ReceiverView, attr_index: usize) -> PrivacyOperation {
        self.ops[view.index()][attr_index]
    }

    pub fn set_op(&mut self, view: ReceiverView, attr_index: usize, op: PrivacyOperation) {
        self.ops[view.index()][attr_index] = op;
    }

    /// A matrix assigning the same operation everywhere.
    pub fn uniform(op: PrivacyOperation) -> Self {
        AccessMatrix {
            ops: [[op; ATTR_COUNT]; 4],
        }
    }

    /// This matrix with every attribute from `keep_fields` on replaced by
    /// Delete in all views; used for curriculum phases that reveal the
    /// record prefix by prefix.
    pub fn with_tail_deleted(&self, keep_fields: usize) -> Self {
        let mut out = self.clone();
        for view_ops in out.ops.iter_mut() {
            for op in view_ops.iter_mut().skip(keep_fields) {
                *op = PrivacyOperation::Delete;
            }
        }
        out
    }
}

/// The access-to-information table: one row per attribute, columns in view
/// order family member, doctor, caregiver, researcher.
pub fn default_access_matrix() -> AccessMatrix {
    use PrivacyOperation::{Delete as D, Disclose as F, Generalize as G};
    let rows: [[PrivacyOperation; 4]; ATTR_COUNT] = [
        [F, F, F, D], // Name
        [F, F, G, G], // Age
        [F, F, F, F], // Gender
        [F, F, G, G], // Height
        [F, F, G, G], // Weight
        [F, G, F, G], // Address
        [F, F, F, D], // Phone Number
        [F, G, G, G], // Occupation
        [F, G, G, G], // Marital Status
        [F, F, F, F], // Timestamp
        [G, F, F, G], // Blood Pressure
        [G, F, F, G], // Glucose level
        [F, F, F, G], // Disease
        [F, F, F, F], // Wearable Pedometer
        [F, D, F, F], // Presence Sensor
        [F, F, F, G], // Temperature Sensor
        [F, D, D, F], // Light Sensor
        [F, D, F, D], // Window Sensor
        [F, D, F, D], // External Door Sensor
        [G, D, D, G], // Energy Consumption
    ];
    let mut ops = [[PrivacyOperation::Disclose; ATTR_COUNT]; 4];
    for (a, row) in rows.iter().enumerate() {
        for (v, &op) in row.iter().enumerate() {
            ops[v][a] = op;
        }
    }
    AccessMatrix { ops }
}

// ---------------------------------------------------------------------------
// Generalization
// ---------------------------------------------------------------------------

/// Deterministic per-attribute coarsening rule. Every rule is idempotent: an
/// already-generalized token is returned unchanged.
#[derive(Debug, Clone, PartialEq)]
pub enum GeneralizeRule {
    /// Integer value to an aligned band label `lo-hi` of the given width.
    NumericBand { width: i64 },
    /// Address to its trailing city token.
    CityToken,
    /// Token to parent-category token.
    Lookup { pairs: Vec<(String, String)> },
    /// `sys/dia` pair to low / normal / high.
    BloodPressureLevels,
    /// Integer to low / normal / high with inclusive normal range.
    ThresholdLevels { low_below: i64, high_above: i64 },
    /// `yyyy-mm-dd/hh-mm` to `yyyy-mm-dd/hh`.
    HourTruncate,
}

fn is_plain_int(text: &str) -> Option<i64> {
    if text.is_empty() || !text.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    text.parse().ok()
}

const LEVEL_TOKENS: [&str; 3] = ["low", "normal", "high"];

impl GeneralizeRule {
    fn apply(&self, text: &str) -> Option<String> {
        match self {
            GeneralizeRule::NumericBand { width } => {
                if let Some(v) = is_plain_int(text) {
                    let lo = v - v.rem_euclid(*width);
                    return Some(format!("{}-{}", lo, lo + width - 1));
                }
                // already a band label of this rule?
                let (lo, hi) = text.split_once('-')?;
                let (lo, hi) = (is_plain_int(lo)?, is_plain_int(hi)?);
                (lo % width == 0 && hi == lo + width - 1).then(|| text.to_string())
            }
            GeneralizeRule::CityToken => {
                let city = text.rsplit('-').next()?;
                (!city.is_empty()).then(|| city.to_string())
            }
            GeneralizeRule::Lookup { pairs } => {
                if let Some((_, to)) = pairs.iter().find(|(from, _)| from == text) {
                    return Some(to.clone());
                }
                // parent tokens map to themselves
                pairs
                    .iter()
                    .any(|(_, to)| to == text)
                    .then(|| text.to_string())
            }
            GeneralizeRule::BloodPressureLevels => {
                if LEVEL_TOKENS.contains(&text) {
                    return Some(text.to_string());
                }
                let (sys, dia) = text.split_once('/')?;
                let (sys, dia) = (is_plain_int(sys)?, is_plain_int(dia)?);
                Some(
                    if sys >= 140 || dia >= 90 {
                        "high"
                    } else if sys < 90 || dia < 60 {
                        "low"
                    } else {
                        "normal"
                    }
                    .to_string(),
                )
            }
            GeneralizeRule::ThresholdLevels {
                low_below,
                high_above,
            } => {
                if LEVEL_TOKENS.contains(&text) {
                    return Some(text.to_string());
                }
                let v = is_plain_int(text)?;
                Some(
                    if v < *low_below {
                        "low"
                    } else if v > *high_above {
                        "high"
                    } else {
                        "normal"
                    }
                    .to_string(),
                )
            }
            GeneralizeRule::HourTruncate => {
                let b = text.as_bytes();
                if b.len() == 13 && b[10] == b'/' {
                    return Some(text.to_string());
                }
                if b.len() == 16 && b[10] == b'/' && b[13] == b'-' {
                    return Some(text[..13].to_string());
                }
                None
            }
        }
    }
}

/// Per-attribute coarsening functions for the attributes some view
/// generalizes (plus Timestamp, which no default view needs).
#[derive(Debug, Clone, PartialEq)]
pub struct GeneralizationMap {
    rules: Vec<Option<GeneralizeRule>>,
    keys: Vec<String>,
}

impl GeneralizationMap {
    pub fn new(schema: &AttributeSchema) -> Self {
        GeneralizationMap {
            rules: vec![None; ATTR_COUNT],
            keys: schema
                .attributes()
                .iter()
                .map(|a| a.key.to_string())
                .collect(),
        }
    }

    pub fn set_rule(&mut self, attr_index: usize, rule: GeneralizeRule) {
        self.rules[attr_index] = Some(rule);
    }

    pub fn rule(&self, attr_index: usize) -> Option<&GeneralizeRule> {
        self.rules[attr_index].as_ref()
    }

    /// Coarsens one rendered field value.
    pub fn generalize(&self, attr_index: usize, text: &str) -> Result<String, PolicyError> {
        let rule =
            self.rules[attr_index]
                .as_ref()
                .ok_or_else(|| PolicyError::MissingGeneralization {
                    attribute: self.keys[attr_index].clone(),
                })?;
        rule.apply(text)
            .ok_or_else(|| PolicyError::Ungeneralizable {
                attribute: self.keys[attr_index].clone(),
                text: text.to_string(),
            })
    }
}

fn lookup(pairs: &[(&str, &str)]) -> GeneralizeRule {
    GeneralizeRule::Lookup {
        pairs: pairs
            .iter()
            .map(|(a, b)| (a.to_string(), b.to_string()))
            .collect(),
    }
}

/// The built-in coarsening table.
pub fn default_generalization_map() -> GeneralizationMap {
    let schema = AttributeSchema::standard();
    let mut map = GeneralizationMap::new(&schema);
    map.set_rule(attr::AGE, GeneralizeRule::NumericBand { width: 10 });
    map.set_rule(attr::HEIGHT, GeneralizeRule::NumericBand { width: 10 });
    map.set_rule(attr::WEIGHT, GeneralizeRule::NumericBand { width: 10 });
    map.set_rule(attr::ADDRESS, GeneralizeRule::CityToken);
    map.set_rule(
        attr::OCCUPATION,
        lookup(&[
            ("retired", "retired"),
            ("nurse", "care"),
            ("carer", "care"),
            ("teacher", "service"),
            ("engineer", "technical"),
            ("mechanic", "technical"),
            ("farmer", "other"),
            ("clerk", "service"),
            ("driver", "service"),
            ("cleaner", "service"),
            ("builder", "technical"),
            ("gardener", "other"),
        ]),
    );
    map.set_rule(
        attr::MARITAL_STATUS,
        lookup(&[
            ("single", "never-married"),
            ("married", "ever-married"),
            ("widowed", "ever-married"),
            ("divorced", "ever-married"),
        ]),
    );
    map.set_rule(attr::TIMESTAMP, GeneralizeRule::HourTruncate);
    map.set_rule(attr::BLOOD_PRESSURE, GeneralizeRule::BloodPressureLevels);
    map.set_rule(
        attr::GLUCOSE_LEVEL,
        GeneralizeRule::ThresholdLevels {
            low_below: 70,
            high_above: 140,
        },
    );
    map.set_rule(
        attr::DISEASE,
        lookup(&[
            ("alzheimer", "dementia"),
            ("dementia", "dementia"),
            ("angina", "heart-disease"),
            ("arrhythmia", "heart-disease"),
            ("asthma", "respiratory"),
            ("bronchitis", "respiratory"),
            ("stroke", "neurological"),
            ("parkinsons", "neurological"),
            ("diabetes", "metabolic"),
            ("gout", "metabolic"),
            ("arthritis", "joint-disease"),
            ("rheumatism", "joint-disease"),
        ]),
    );
    map.set_rule(
        attr::TEMPERATURE_SENSOR,
        GeneralizeRule::NumericBand { width: 2 },
    );
    map.set_rule(
        attr::ENERGY_CONSUMPTION,
        GeneralizeRule::NumericBand { width: 5 },
    );
    map
}

// ---------------------------------------------------------------------------
// Applying operations
// ---------------------------------------------------------------------------

/// Policy errors.
#[derive(Debug)]
pub enum PolicyError {
    MissingGeneralization { attribute: String },
    Ungeneralizable { attribute: String, text: String },
    Config { line: usize, what: String },
    Record(RecordError),
}

impl fmt::Display for PolicyError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PolicyError::MissingGeneralization { attribute } => {
                write!(f, "no generalization rule for attribute {attribute}")
            }
            PolicyError::Ungeneralizable { attribute, text } => {
                write!(f, "cannot generalize {text:?} for attribute {attribute}")
            }
            PolicyError::Config { line, what } => {
                write!(f, "policy config line {line}: {what}")
            }
            PolicyError::Record(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for PolicyError {}

impl From<RecordError> for PolicyError {
    fn from(e: RecordError) -> Self {
        PolicyError::Record(e)
    }
}

/// Applies one operation to one rendered field value.
pub fn apply_operation_text(
    text: &str,
    op: PrivacyOperation,
    gmap: &GeneralizationMap,
    attr_index: usize,
) -> Result<String, PolicyError> {
    match op {
        PrivacyOperation::Disclose => Ok(text.to_string()),
        PrivacyOperation::Delete => Ok(DELETED_TOKEN.to_string()),
        PrivacyOperation::Generalize => gmap.generalize(attr_index, text),
    }
}

/// Applies one operation to one typed attribute value.
pub fn apply_operation(
    value: &crate::records::AttributeValue,
    op: PrivacyOperation,
    gmap: &GeneralizationMap,
    attr_index: usize,
) -> Result<String, PolicyError> {
    apply_operation_text(&render_value(value), op, gmap, attr_index)
}

/// Applies a view's operations field-wise to an already serialized entry.
/// Idempotent on its own output.
pub fn apply_view_text(
    line: &str,
    view: ReceiverView,
    matrix: &AccessMatrix,
    gmap: &GeneralizationMap,
    schema: &AttributeSchema,
) -> Result<String, PolicyError> {
    let fields: Vec<&str> = line.split('|').collect();
    if fields.len() != ATTR_COUNT {
        return Err(RecordError::FieldCountMismatch {
            found: fields.len(),
        }
        .into());
    }
    let mut out = String::with_capacity(line.len());
    for (i, field) in fields.iter().enumerate() {
        if i > 0 {
            out.push('|');
        }
        out.push_str(&apply_operation_text(field, matrix.op(view, i), gmap, i)?);
    }
    let len = out.chars().count();
    if len > schema.max_len() {
        return Err(RecordError::SerializationOverflow {
            len,
            max_len: schema.max_len(),
        }
        .into());
    }
    Ok(out)
}

/// Serializes an entry and applies a view's operations field-wise.
pub fn apply_view(
    entry: &RecordEntry,
    view: ReceiverView,
    matrix: &AccessMatrix,
    gmap: &GeneralizationMap,
    schema: &AttributeSchema,
) -> Result<String, PolicyError> {
    let line = serialize_entry(entry, schema)?;
    apply_view_text(&line, view, matrix, gmap, schema)
}

// ---------------------------------------------------------------------------
// Key-value config overrides
// ---------------------------------------------------------------------------

/// Applies `view.attribute = op`, `generalize.attribute.width = n`, and
/// `generalize.attribute.map.from = to` overrides from a key-value config.
pub fn load_policy_config(
    content: &str,
    schema: &AttributeSchema,
    matrix: &mut AccessMatrix,
    gmap: &mut GeneralizationMap,
) -> Result<(), PolicyError> {
    for (i, raw) in content.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| PolicyError::Config {
            line: line_no,
            what: "expected key = value".to_string(),
        })?;
        let (key, value) = (key.trim(), value.trim());
        let bad = |what: String| PolicyError::Config {
            line: line_no,
            what,
        };
        if let Some(rest) = key.strip_prefix("generalize.") {
            if let Some(attr_key) = rest.strip_suffix(".width") {
                let attr_index = schema
                    .index_of(attr_key)
                    .ok_or_else(|| bad(format!("unknown attribute {attr_key:?}")))?;
                let width: i64 = value
                    .parse()
                    .ok()
                    .filter(|w| *w > 0)
                    .ok_or_else(|| bad(format!("invalid band width {value:?}")))?;
                gmap.set_rule(attr_index, GeneralizeRule::NumericBand { width });
            } else if let Some((attr_key, from)) = rest
                .split_once(".map.")
                .map(|(a, f)| (a.to_string(), f.to_string()))
            {
                let attr_index = schema
                    .index_of(&attr_key)
                    .ok_or_else(|| bad(format!("unknown attribute {attr_key:?}")))?;
                let mut pairs = match gmap.rule(attr_index) {
                    Some(GeneralizeRule::Lookup { pairs }) => pairs.clone(),
                    None => Vec::new(),
                    Some(_) => {
                        return Err(bad(format!(
                            "attribute {attr_key:?} does not use a lookup rule"
                        )))
                    }
                };
                pairs.retain(|(f, _)| *f != from);
                pairs.push((from, value.to_string()));
                gmap.set_rule(attr_index, GeneralizeRule::Lookup { pairs });
            } else {
                return Err(bad(format!("unrecognized generalize key {key:?}")));
            }
        } else {
            let (view_key, attr_key) = key
                .split_once('.')
                .ok_or_else(|| bad("expected view.attribute".to_string()))?;
            let view = ReceiverView::parse(view_key)
                .ok_or_else(|| bad(format!("unknown view {view_key:?}")))?;
            let attr_index = schema
                .index_of(attr_key)
                .ok_or_else(|| bad(format!("unknown attribute {attr_key:?}")))?;
            let op = PrivacyOperation::parse(value)
                .ok_or_else(|| bad(format!("unknown operation {value:?}")))?;
            matrix.set_op(view, attr_index, op);
        }
    }
    Ok(())
}
