//! Record schema, character serialization, vocabulary, and padded sequences.
//!
//! An entry is 20 attribute values rendered into a 40-symbol lowercase
//! alphabet and joined with `|`. Sequences fed to the neural model append an
//! `eos` id and are padded with `pad` up to `max_len + 1`.

use std::collections::HashMap;
use std::fmt;
use std::io::Write;
use std::path::Path;

use crate::digest::fnv64_hex;

/// Number of attributes in every record.
pub const ATTR_COUNT: usize = 20;

/// Default maximum serialized entry length in characters.
pub const DEFAULT_MAX_LEN: usize = 160;

/// File header for the dataset text format.
pub const DATASET_HEADER: &str = "privview-dataset v1";

/// Enumerated value domains shared by the schema and the simulator defaults.
pub mod domains {
    pub const GENDERS: &[&str] = &["male", "female"];
    pub const OCCUPATIONS: &[&str] = &[
        "retired", "nurse", "carer", "teacher", "engineer", "mechanic", "farmer", "clerk",
        "driver", "cleaner", "builder", "gardener",
    ];
    pub const MARITAL_STATUSES: &[&str] = &["single", "married", "widowed", "divorced"];
    pub const DISEASES: &[&str] = &[
        "alzheimer",
        "dementia",
        "angina",
        "arrhythmia",
        "asthma",
        "bronchitis",
        "stroke",
        "parkinsons",
        "diabetes",
        "gout",
        "arthritis",
        "rheumatism",
    ];
    pub const ON_OFF: &[&str] = &["on", "off"];
}

/// Attribute indices in schema order.
pub mod attr {
    pub const NAME: usize = 0;
    pub const AGE: usize = 1;
    pub const GENDER: usize = 2;
    pub const HEIGHT: usize = 3;
    pub const WEIGHT: usize = 4;
    pub const ADDRESS: usize = 5;
    pub const PHONE_NUMBER: usize = 6;
    pub const OCCUPATION: usize = 7;
    pub const MARITAL_STATUS: usize = 8;
    pub const TIMESTAMP: usize = 9;
    pub const BLOOD_PRESSURE: usize = 10;
    pub const GLUCOSE_LEVEL: usize = 11;
    pub const DISEASE: usize = 12;
    pub const WEARABLE_PEDOMETER: usize = 13;
    pub const PRESENCE_SENSOR: usize = 14;
    pub const TEMPERATURE_SENSOR: usize = 15;
    pub const LIGHT_SENSOR: usize = 16;
    pub const WINDOW_SENSOR: usize = 17;
    pub const EXTERNAL_DOOR_SENSOR: usize = 18;
    pub const ENERGY_CONSUMPTION: usize = 19;
}

/// Attribute category.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AttributeKind {
    Personal,
    Medical,
    Sensor,
}

/// Character classes allowed in free-text values.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TextShape {
    /// lowercase letters, hyphen-joined words
    Letters,
    /// decimal digits only
    Digits,
    /// letters, digits and hyphens
    Mixed,
}

/// Value domain of one attribute.
#[derive(Debug, Clone, PartialEq)]
pub enum ValueDomain {
    /// Closed token set.
    Enumerated(Vec<&'static str>),
    /// Integer range with a unit tag (the unit is schema metadata, never rendered).
    Numeric {
        min: i64,
        max: i64,
        unit: &'static str,
    },
    /// Two integers rendered `a/b` (systolic/diastolic).
    NumericPair {
        min_a: i64,
        max_a: i64,
        min_b: i64,
        max_b: i64,
        unit: &'static str,
    },
    /// Seconds since the Unix epoch, rendered `yyyy-mm-dd/hh-mm`.
    Timestamp,
    /// Free text restricted to a character class.
    FreeText(TextShape),
}

impl ValueDomain {
    fn describe(&self) -> String {
        match self {
            ValueDomain::Enumerated(items) => format!("enum:{}", items.join(",")),
            ValueDomain::Numeric { min, max, unit } => format!("int:{min}..{max}:{unit}"),
            ValueDomain::NumericPair {
                min_a,
                max_a,
                min_b,
                max_b,
                unit,
            } => format!("pair:{min_a}..{max_a}/{min_b}..{max_b}:{unit}"),
            ValueDomain::Timestamp => "timestamp".to_string(),
            ValueDomain::FreeText(shape) => match shape {
                TextShape::Letters => "text:letters".to_string(),
                TextShape::Digits => "text:digits".to_string(),
                TextShape::Mixed => "text:mixed".to_string(),
            },
        }
    }
}

/// One attribute descriptor.
#[derive(Debug, Clone, PartialEq)]
pub struct AttributeDescriptor {
    /// Display name, e.g. "Phone Number".
    pub name: &'static str,
    /// Stable kebab-case key used in config files and reports.
    pub key: &'static str,
    pub kind: AttributeKind,
    pub domain: ValueDomain,
}

/// The fixed 20-attribute record schema.
#[derive(Debug, Clone, PartialEq)]
pub struct AttributeSchema {
    attributes: Vec<AttributeDescriptor>,
    max_len: usize,
}

/// One typed attribute value.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum AttributeValue {
    Text(String),
    Int(i64),
    /// systolic/diastolic
    Pair(i64, i64),
    /// seconds since epoch
    Timestamp(i64),
    /// token from an enumerated domain
    Choice(String),
}

/// One user entry: a value per schema attribute.
#[derive(Debug, Clone, PartialEq)]
pub struct RecordEntry {
    pub user_id: u64,
    pub values: Vec<AttributeValue>,
}

/// Errors from record serialization, parsing, and dataset files.
#[derive(Debug)]
pub enum RecordError {
    SerializationOverflow {
        len: usize,
        max_len: usize,
    },
    UnrepresentableCharacter {
        ch: char,
        context: String,
    },
    FieldCountMismatch {
        found: usize,
    },
    ValueParseError {
        attribute: String,
        text: String,
        reason: String,
    },
    MalformedSequence(&'static str),
    HeaderMismatch {
        found: String,
    },
    SchemaFingerprintMismatch {
        expected: String,
        found: String,
    },
    Io(std::io::Error),
}

impl fmt::Display for RecordError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RecordError::SerializationOverflow { len, max_len } => {
                write!(f, "serialized entry is {len} chars, limit {max_len}")
            }
            RecordError::UnrepresentableCharacter { ch, context } => {
                write!(f, "character {ch:?} in {context} is not in the vocabulary")
            }
            RecordError::FieldCountMismatch { found } => {
                write!(f, "expected {ATTR_COUNT} fields, found {found}")
            }
            RecordError::ValueParseError {
                attribute,
                text,
                reason,
            } => write!(f, "cannot parse {text:?} as {attribute}: {reason}"),
            RecordError::MalformedSequence(why) => write!(f, "malformed sequence: {why}"),
            RecordError::HeaderMismatch { found } => {
                write!(f, "expected header {DATASET_HEADER:?}, found {found:?}")
            }
            RecordError::SchemaFingerprintMismatch { expected, found } => {
                write!(f, "schema fingerprint {found} does not match {expected}")
            }
            RecordError::Io(e) => write!(f, "io error: {e}"),
        }
    }
}

impl std::error::Error for RecordError {}

impl From<std::io::Error> for RecordError {
    fn from(e: std::io::Error) -> Self {
        RecordError::Io(e)
    }
}

impl AttributeSchema {
    /// The Table-1 schema with the default 160-character limit.
    pub fn standard() -> Self {
        use AttributeKind::*;
        use TextShape::*;
        use ValueDomain::*;
        let attributes = vec![
            AttributeDescriptor {
                name: "Name",
                key: "name",
                kind: Personal,
                domain: FreeText(Letters),
            },
            AttributeDescriptor {
                name: "Age",
                key: "age",
                kind: Personal,
                domain: Numeric {
                    min: 0,
                    max: 129,
                    unit: "years",
                },
            },
            AttributeDescriptor {
                name: "Gender",
                key: "gender",
                kind: Personal,
                domain: Enumerated(domains::GENDERS.to_vec()),
            },
            AttributeDescriptor {
                name: "Height",
                key: "height",
                kind: Personal,
                domain: Numeric {
                    min: 50,
                    max: 249,
                    unit: "cm",
                },
            },
            AttributeDescriptor {
                name: "Weight",
                key: "weight",
                kind: Personal,
                domain: Numeric {
                    min: 20,
                    max: 249,
                    unit: "kg",
                },
            },
            AttributeDescriptor {
                name: "Address",
                key: "address",
                kind: Personal,
                domain: FreeText(Mixed),
            },
            AttributeDescriptor {
                name: "Phone Number",
                key: "phone-number",
                kind: Personal,
                domain: FreeText(Digits),
            },
            AttributeDescriptor {
                name: "Occupation",
                key: "occupation",
                kind: Personal,
                domain: Enumerated(domains::OCCUPATIONS.to_vec()),
            },
            AttributeDescriptor {
                name: "Marital Status",
                key: "marital-status",
                kind: Personal,
                domain: Enumerated(domains::MARITAL_STATUSES.to_vec()),
            },
            AttributeDescriptor {
                name: "Timestamp",
                key: "timestamp",
                kind: Sensor,
                domain: Timestamp,
            },
            AttributeDescriptor {
                name: "Blood Pressure",
                key: "blood-pressure",
                kind: Medical,
                domain: NumericPair {
                    min_a: 70,
                    max_a: 249,
                    min_b: 40,
                    max_b: 149,
                    unit: "mmhg",
                },
            },
            AttributeDescriptor {
                name: "Glucose level",
                key: "glucose-level",
                kind: Medical,
                domain: Numeric {
                    min: 20,
                    max: 999,
                    unit: "mg/dl",
                },
            },
            AttributeDescriptor {
                name: "Disease",
                key: "disease",
                kind: Medical,
                domain: Enumerated(domains::DISEASES.to_vec()),
            },
            AttributeDescriptor {
                name: "Wearable Pedometer",
                key: "wearable-pedometer",
                kind: Sensor,
                domain: Numeric {
                    min: 0,
                    max: 99_999,
                    unit: "steps",
                },
            },
            AttributeDescriptor {
                name: "Presence Sensor",
                key: "presence-sensor",
                kind: Sensor,
                domain: Enumerated(domains::ON_OFF.to_vec()),
            },
            AttributeDescriptor {
                name: "Temperature Sensor",
                key: "temperature-sensor",
                kind: Sensor,
                domain: Numeric {
                    min: 0,
                    max: 49,
                    unit: "celsius",
                },
            },
            AttributeDescriptor {
                name: "Light Sensor",
                key: "light-sensor",
                kind: Sensor,
                domain: Enumerated(domains::ON_OFF.to_vec()),
            },
            AttributeDescriptor {
                name: "Window Sensor",
                key: "window-sensor",
                kind: Sensor,
                domain: Enumerated(domains::ON_OFF.to_vec()),
            },
            AttributeDescriptor {
                name: "External Door Sensor",
                key: "external-door-sensor",
                kind: Sensor,
                domain: Enumerated(domains::ON_OFF.to_vec()),
            },
            AttributeDescriptor {
                name: "Energy Consumption",
                key: "energy-consumption",
                kind: Sensor,
                // tenths of a kWh per reading, so 27 means 2.7 kWh
                domain: Numeric {
                    min: 0,
                    max: 99,
                    unit: "kwh-tenths",
                },
            },
        ];
        debug_assert_eq!(attributes.len(), ATTR_COUNT);
        AttributeSchema {
            attributes,
            max_len: DEFAULT_MAX_LEN,
        }
    }

    /// Same schema with a different serialized-length limit.
    pub fn with_max_len(mut self, max_len: usize) -> Self {
        self.max_len = max_len;
        self
    }

    pub fn attributes(&self) -> &[AttributeDescriptor] {
        &self.attributes
    }

    pub fn attribute(&self, index: usize) -> &AttributeDescriptor {
        &self.attributes[index]
    }

    pub fn max_len(&self) -> usize {
        self.max_len
    }

    /// Index of an attribute by kebab-case key.
    pub fn index_of(&self, key: &str) -> Option<usize> {
        self.attributes.iter().position(|a| a.key == key)
    }

    /// Hash of attribute names and domains, used in dataset file headers.
    pub fn fingerprint(&self) -> String {
        let mut desc = String::new();
        for a in &self.attributes {
            desc.push_str(a.name);
            desc.push(';');
            desc.push_str(match a.kind {
                AttributeKind::Personal => "personal",
                AttributeKind::Medical => "medical",
                AttributeKind::Sensor => "sensor",
            });
            desc.push(';');
            desc.push_str(&a.domain.describe());
            desc.push('\n');
        }
        fnv64_hex(desc.as_bytes())
    }
}

// ---------------------------------------------------------------------------
// Vocabulary and padded sequences
// ---------------------------------------------------------------------------

const PRINTABLE_SYMBOLS: &str = "abcdefghijklmnopqrstuvwxyz0123456789|*-/";

/// The 40-symbol printable dictionary plus reserved pad/eos ids.
#[derive(Debug, Clone)]
pub struct Vocabulary {
    symbols: Vec<char>,
    lookup: [Option<u8>; 128],
    pad_id: u8,
    eos_id: u8,
}

impl Vocabulary {
    /// Letters a-z, digits 0-9, and `| * - /`; pad = 40, eos = 41.
    pub fn standard() -> Self {
        let symbols: Vec<char> = PRINTABLE_SYMBOLS.chars().collect();
        debug_assert_eq!(symbols.len(), 40);
        let mut lookup = [None; 128];
        for (i, &c) in symbols.iter().enumerate() {
            lookup[c as usize] = Some(i as u8);
        }
        Vocabulary {
            pad_id: symbols.len() as u8,
            eos_id: symbols.len() as u8 + 1,
            symbols,
            lookup,
        }
    }

    pub fn pad_id(&self) -> u8 {
        self.pad_id
    }

    pub fn eos_id(&self) -> u8 {
        self.eos_id
    }

    /// Printable symbols plus pad and eos.
    pub fn alphabet_dim(&self) -> usize {
        self.symbols.len() + 2
    }

    pub fn printable_count(&self) -> usize {
        self.symbols.len()
    }

    pub fn id_of(&self, c: char) -> Option<u8> {
        if (c as usize) < 128 {
            self.lookup[c as usize]
        } else {
            None
        }
    }

    pub fn char_of(&self, id: u8) -> Option<char> {
        self.symbols.get(id as usize).copied()
    }

    pub fn contains(&self, c: char) -> bool {
        self.id_of(c).is_some()
    }
}

/// Fixed-length id sequence: content ids, one eos, then pad up to
/// `max_len + 1` positions. `length` counts content plus the eos.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CharSequence {
    ids: Vec<u8>,
    length: usize,
}

impl CharSequence {
    /// Builds a sequence from raw ids without validating the invariants;
    /// `decode_chars` re-checks them.
    pub fn from_raw(ids: Vec<u8>, length: usize) -> Self {
        CharSequence { ids, length }
    }

    pub fn ids(&self) -> &[u8] {
        &self.ids
    }

    /// Non-pad prefix length, including the eos position.
    pub fn length(&self) -> usize {
        self.length
    }

    /// Content ids before the eos.
    pub fn content_ids(&self) -> &[u8] {
        &self.ids[..self.length.saturating_sub(1)]
    }
}

/// Renders text into ids followed by eos and pad.
pub fn encode_chars(
    text: &str,
    vocab: &Vocabulary,
    max_len: usize,
) -> Result<CharSequence, RecordError> {
    let n_chars = text.chars().count();
    if n_chars > max_len {
        return Err(RecordError::SerializationOverflow {
            len: n_chars,
            max_len,
        });
    }
    let mut ids = Vec::with_capacity(max_len + 1);
    for c in text.chars() {
        let id = vocab
            .id_of(c)
            .ok_or_else(|| RecordError::UnrepresentableCharacter {
                ch: c,
                context: "encode_chars input".to_string(),
            })?;
        ids.push(id);
    }
    ids.push(vocab.eos_id());
    let length = ids.len();
    ids.resize(max_len + 1, vocab.pad_id());
    Ok(CharSequence { ids, length })
}

/// Inverse of `encode_chars`: printable symbols before the eos.
pub fn decode_chars(seq: &CharSequence, vocab: &Vocabulary) -> Result<String, RecordError> {
    let eos = vocab.eos_id();
    let pad = vocab.pad_id();
    let mut out = String::new();
    let mut seen_eos = false;
    for &id in seq.ids() {
        if seen_eos {
            if id != pad {
                return Err(RecordError::MalformedSequence("symbol after eos"));
            }
            continue;
        }
        if id == eos {
            seen_eos = true;
        } else if id == pad {
            return Err(RecordError::MalformedSequence("pad before eos"));
        } else {
            let c = vocab
                .char_of(id)
                .ok_or(RecordError::MalformedSequence("id outside alphabet"))?;
            out.push(c);
        }
    }
    if !seen_eos {
        return Err(RecordError::MalformedSequence("missing eos"));
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Value rendering and parsing
// ---------------------------------------------------------------------------

/// Renders one value as lowercase vocabulary text for its attribute.
pub fn render_value(value: &AttributeValue) -> String {
    match value {
        AttributeValue::Text(s) => s.to_ascii_lowercase(),
        AttributeValue::Int(i) => i.to_string(),
        AttributeValue::Pair(a, b) => format!("{a}/{b}"),
        AttributeValue::Timestamp(t) => render_timestamp(*t),
        AttributeValue::Choice(s) => s.to_ascii_lowercase(),
    }
}

/// Renders the 20 attribute values joined by `|`.
pub fn serialize_entry(
    entry: &RecordEntry,
    schema: &AttributeSchema,
) -> Result<String, RecordError> {
    debug_assert_eq!(entry.values.len(), ATTR_COUNT);
    let vocab = Vocabulary::standard();
    let mut out = String::with_capacity(schema.max_len());
    for (i, value) in entry.values.iter().enumerate() {
        if i > 0 {
            out.push('|');
        }
        let text = render_value(value);
        for c in text.chars() {
            if !vocab.contains(c) || c == '|' {
                return Err(RecordError::UnrepresentableCharacter {
                    ch: c,
                    context: format!("attribute {}", schema.attribute(i).name),
                });
            }
        }
        out.push_str(&text);
    }
    let len = out.chars().count();
    if len > schema.max_len() {
        return Err(RecordError::SerializationOverflow {
            len,
            max_len: schema.max_len(),
        });
    }
    Ok(out)
}

fn parse_error(attr: &AttributeDescriptor, text: &str, reason: &str) -> RecordError {
    RecordError::ValueParseError {
        attribute: attr.name.to_string(),
        text: text.to_string(),
        reason: reason.to_string(),
    }
}

fn parse_int(attr: &AttributeDescriptor, text: &str) -> Result<i64, RecordError> {
    if text.is_empty() || !text.bytes().all(|b| b.is_ascii_digit()) {
        return Err(parse_error(attr, text, "not a decimal integer"));
    }
    text.parse::<i64>()
        .map_err(|_| parse_error(attr, text, "integer out of range"))
}

fn check_text_shape(
    attr: &AttributeDescriptor,
    text: &str,
    shape: TextShape,
) -> Result<(), RecordError> {
    let ok_char = |c: char| match shape {
        TextShape::Letters => c.is_ascii_lowercase() || c == '-',
        TextShape::Digits => c.is_ascii_digit(),
        TextShape::Mixed => c.is_ascii_lowercase() || c.is_ascii_digit() || c == '-',
    };
    if text.is_empty() {
        return Err(parse_error(attr, text, "empty value"));
    }
    if !text.chars().all(ok_char) {
        return Err(parse_error(
            attr,
            text,
            "character outside the value domain",
        ));
    }
    if text.starts_with('-') || text.ends_with('-') {
        return Err(parse_error(attr, text, "leading or trailing hyphen"));
    }
    Ok(())
}

/// Parses one field back into a typed value according to its domain.
pub fn parse_value(text: &str, attr: &AttributeDescriptor) -> Result<AttributeValue, RecordError> {
    match &attr.domain {
        ValueDomain::Enumerated(items) => {
            if items.contains(&text) {
                Ok(AttributeValue::Choice(text.to_string()))
            } else {
                Err(parse_error(
                    attr,
                    text,
                    "token not in the enumerated domain",
                ))
            }
        }
        ValueDomain::Numeric { min, max, .. } => {
            let v = parse_int(attr, text)?;
            if v < *min || v > *max {
                return Err(parse_error(attr, text, "outside the numeric range"));
            }
            Ok(AttributeValue::Int(v))
        }
        ValueDomain::NumericPair {
            min_a,
            max_a,
            min_b,
            max_b,
            ..
        } => {
            let (a_text, b_text) = text
                .split_once('/')
                .ok_or_else(|| parse_error(attr, text, "expected a/b"))?;
            let a = parse_int(attr, a_text)?;
            let b = parse_int(attr, b_text)?;
            if a < *min_a || a > *max_a || b < *min_b || b > *max_b {
                return Err(parse_error(attr, text, "outside the numeric range"));
            }
            Ok(AttributeValue::Pair(a, b))
        }
        ValueDomain::Timestamp => {
            let t = parse_timestamp(text)
                .ok_or_else(|| parse_error(attr, text, "expected yyyy-mm-dd/hh-mm"))?;
            Ok(AttributeValue::Timestamp(t))
        }
        ValueDomain::FreeText(shape) => {
            check_text_shape(attr, text, *shape)?;
            Ok(AttributeValue::Text(text.to_string()))
        }
    }
}

/// Parses a serialized line back into a record. The user id is not part of
/// the character format; `read_dataset` reassigns it from the per-user static
/// attributes, and single entries parsed here get user id 0.
pub fn deserialize_entry(text: &str, schema: &AttributeSchema) -> Result<RecordEntry, RecordError> {
    let fields: Vec<&str> = text.split('|').collect();
    if fields.len() != ATTR_COUNT {
        return Err(RecordError::FieldCountMismatch {
            found: fields.len(),
        });
    }
    let mut values = Vec::with_capacity(ATTR_COUNT);
    for (field, attr) in fields.iter().zip(schema.attributes()) {
        values.push(parse_value(field, attr)?);
    }
    Ok(RecordEntry { user_id: 0, values })
}

// ---------------------------------------------------------------------------
// Timestamp rendering (yyyy-mm-dd/hh-mm, UTC)
// ---------------------------------------------------------------------------

fn days_from_civil(y: i64, m: u32, d: u32) -> i64 {
    let y = if m <= 2 { y - 1 } else { y };
    let era = if y >= 0 { y } else { y - 399 } / 400;
    let yoe = (y - era * 400) as u64;
    let mp = ((m + 9) % 12) as u64;
    let doy = (153 * mp + 2) / 5 + d as u64 - 1;
    let doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    era * 146_097 + doe as i64 - 719_468
}

fn civil_from_days(z: i64) -> (i64, u32, u32) {
    let z = z + 719_468;
    let era = if z >= 0 { z } else { z - 146_096 } / 146_097;
    let doe = (z - era * 146_097) as u64;
    let yoe = (doe - doe / 1460 + doe / 36_524 - doe / 146_096) / 365;
    let y = yoe as i64 + era * 400;
    let doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    let mp = (5 * doy + 2) / 153;
    let d = (doy - (153 * mp + 2) / 5 + 1) as u32;
    let m = if mp < 10 { mp + 3 } else { mp - 9 } as u32;
    (if m <= 2 { y + 1 } else { y }, m, d)
}

/// Renders epoch seconds as `yyyy-mm-dd/hh-mm`, truncating below minutes.
pub fn render_timestamp(secs: i64) -> String {
    let days = secs.div_euclid(86_400);
    let rem = secs.rem_euclid(86_400);
    let (y, m, d) = civil_from_days(days);
    format!(
        "{:04}-{:02}-{:02}/{:02}-{:02}",
        y,
        m,
        d,
        rem / 3600,
        rem % 3600 / 60
    )
}

/// Parses `yyyy-mm-dd/hh-mm` to epoch seconds; `None` when malformed.
pub fn parse_timestamp(text: &str) -> Option<i64> {
    let b = text.as_bytes();
    if b.len() != 16 || b[4] != b'-' || b[7] != b'-' || b[10] != b'/' || b[13] != b'-' {
        return None;
    }
    let num = |range: std::ops::Range<usize>| -> Option<i64> {
        let s = &text[range];
        if !s.bytes().all(|c| c.is_ascii_digit()) {
            return None;
        }
        s.parse().ok()
    };
    let (y, m, d) = (num(0..4)?, num(5..7)?, num(8..10)?);
    let (hh, mm) = (num(11..13)?, num(14..16)?);
    if !(1..=12).contains(&m) || !(1..=31).contains(&d) || hh > 23 || mm > 59 {
        return None;
    }
    let secs = days_from_civil(y, m as u32, d as u32) * 86_400 + hh * 3600 + mm * 60;
    // reject impossible dates like 2017-02-30 by round-tripping
    if render_timestamp(secs) != text {
        return None;
    }
    Some(secs)
}

// ---------------------------------------------------------------------------
// Dataset file format
// ---------------------------------------------------------------------------

/// Serializes a dataset to the line-oriented text format (LF newlines).
pub fn dataset_to_string(
    entries: &[RecordEntry],
    schema: &AttributeSchema,
) -> Result<String, RecordError> {
    let mut out = String::new();
    out.push_str(DATASET_HEADER);
    out.push('\n');
    out.push_str(&format!("schema {}\n", schema.fingerprint()));
    for entry in entries {
        out.push_str(&serialize_entry(entry, schema)?);
        out.push('\n');
    }
    Ok(out)
}

/// Splits dataset file content into validated serialized lines.
pub fn dataset_lines(content: &str, schema: &AttributeSchema) -> Result<Vec<String>, RecordError> {
    let mut lines = content.lines();
    let header = lines.next().unwrap_or("");
    if header != DATASET_HEADER {
        return Err(RecordError::HeaderMismatch {
            found: header.to_string(),
        });
    }
    let fp_line = lines.next().unwrap_or("");
    let expected = schema.fingerprint();
    match fp_line.strip_prefix("schema ") {
        Some(found) if found == expected => {}
        _ => {
            return Err(RecordError::SchemaFingerprintMismatch {
                expected,
                found: fp_line.to_string(),
            })
        }
    }
    Ok(lines.map(|l| l.to_string()).collect())
}

/// Key of the per-user static attributes, used to regroup entries by user
/// when a dataset is loaded from disk.
fn static_key(entry: &RecordEntry) -> String {
    const STATIC_ATTRS: [usize; 10] = [
        attr::NAME,
        attr::AGE,
        attr::GENDER,
        attr::HEIGHT,
        attr::WEIGHT,
        attr::ADDRESS,
        attr::PHONE_NUMBER,
        attr::OCCUPATION,
        attr::MARITAL_STATUS,
        attr::DISEASE,
    ];
    let mut key = String::new();
    for &i in STATIC_ATTRS.iter() {
        key.push_str(&render_value(&entry.values[i]));
        key.push('|');
    }
    key
}

/// Parses dataset file content into entries, assigning user ids in order of
/// first appearance of each static-attribute tuple.
pub fn dataset_from_string(
    content: &str,
    schema: &AttributeSchema,
) -> Result<Vec<RecordEntry>, RecordError> {
    let lines = dataset_lines(content, schema)?;
    let mut entries = Vec::with_capacity(lines.len());
    let mut user_ids: HashMap<String, u64> = HashMap::new();
    for line in &lines {
        let mut entry = deserialize_entry(line, schema)?;
        let next_id = user_ids.len() as u64;
        entry.user_id = *user_ids.entry(static_key(&entry)).or_insert(next_id);
        entries.push(entry);
    }
    Ok(entries)
}

/// Writes a dataset file.
pub fn write_dataset(
    path: &Path,
    entries: &[RecordEntry],
    schema: &AttributeSchema,
) -> Result<(), RecordError> {
    let content = dataset_to_string(entries, schema)?;
    let mut f = std::fs::File::create(path)?;
    f.write_all(content.as_bytes())?;
    Ok(())
}

/// Reads a dataset file written by `write_dataset`.
pub fn read_dataset(
    path: &Path,
    schema: &AttributeSchema,
) -> Result<Vec<RecordEntry>, RecordError> {
    let content = std::fs::read_to_string(path)?;
    dataset_from_string(&content, schema)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_entry() -> RecordEntry {
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

    #[test]
    fn vocabulary_has_40_distinct_printables() {
        let v = Vocabulary::standard();
        assert_eq!(v.printable_count(), 40);
        assert_eq!(v.alphabet_dim(), 42);
        assert_eq!(v.pad_id(), 40);
        assert_eq!(v.eos_id(), 41);
        assert!(v.contains('|'));
        assert!(v.contains('*'));
        assert!(!v.contains(' '));
        let mut seen = std::collections::HashSet::new();
        for id in 0..40u8 {
            let c = v.char_of(id).unwrap();
            assert!(seen.insert(c));
            assert_eq!(v.id_of(c), Some(id));
        }
    }

    #[test]
    fn serialize_contains_name_and_disease() {
        let schema = AttributeSchema::standard();
        let text = serialize_entry(&sample_entry(), &schema).unwrap();
        assert!(text.starts_with("john-smith|"));
        assert!(text.contains("|alzheimer|"));
        assert_eq!(text.matches('|').count(), 19);
        assert!(text.chars().count() <= schema.max_len());
    }

    #[test]
    fn serialize_case_folds() {
        let schema = AttributeSchema::standard();
        let mut entry = sample_entry();
        entry.values[attr::NAME] = AttributeValue::Text("John-Smith".into());
        let text = serialize_entry(&entry, &schema).unwrap();
        assert!(text.starts_with("john-smith|"));
    }

    #[test]
    fn serialize_rejects_unrepresentable_character() {
        let schema = AttributeSchema::standard();
        let mut entry = sample_entry();
        entry.values[attr::NAME] = AttributeValue::Text("jo~n".into());
        match serialize_entry(&entry, &schema) {
            Err(RecordError::UnrepresentableCharacter { ch: '~', .. }) => {}
            other => panic!("expected UnrepresentableCharacter, got {other:?}"),
        }
    }

    #[test]
    fn serialize_at_exact_max_len_is_ok() {
        // shrink max_len to the exact rendered length and check no error
        let entry = sample_entry();
        let schema = AttributeSchema::standard();
        let text = serialize_entry(&entry, &schema).unwrap();
        let tight = AttributeSchema::standard().with_max_len(text.chars().count());
        assert_eq!(serialize_entry(&entry, &tight).unwrap(), text);
        let too_tight = AttributeSchema::standard().with_max_len(text.chars().count() - 1);
        assert!(matches!(
            serialize_entry(&entry, &too_tight),
            Err(RecordError::SerializationOverflow { .. })
        ));
    }

    #[test]
    fn deserialize_round_trip() {
        let schema = AttributeSchema::standard();
        let entry = sample_entry();
        let text = serialize_entry(&entry, &schema).unwrap();
        let back = deserialize_entry(&text, &schema).unwrap();
        assert_eq!(back.values, entry.values);
    }

    #[test]
    fn deserialize_field_count_mismatch() {
        let schema = AttributeSchema::standard();
        let entry = sample_entry();
        let text = serialize_entry(&entry, &schema).unwrap();
        let truncated = text.rsplit_once('|').unwrap().0;
        match deserialize_entry(truncated, &schema) {
            Err(RecordError::FieldCountMismatch { found: 19 }) => {}
            other => panic!("expected FieldCountMismatch, got {other:?}"),
        }
    }

    #[test]
    fn deserialize_bad_age() {
        let schema = AttributeSchema::standard();
        let entry = sample_entry();
        let text = serialize_entry(&entry, &schema).unwrap();
        let bad = text.replacen("|80|", "|abc|", 1);
        match deserialize_entry(&bad, &schema) {
            Err(RecordError::ValueParseError { attribute, .. }) => {
                assert_eq!(attribute, "Age");
            }
            other => panic!("expected ValueParseError, got {other:?}"),
        }
    }

    #[test]
    fn encode_empty_string() {
        let vocab = Vocabulary::standard();
        let seq = encode_chars("", &vocab, 8).unwrap();
        assert_eq!(seq.length(), 1);
        assert_eq!(seq.ids()[0], vocab.eos_id());
        assert!(seq.ids()[1..].iter().all(|&i| i == vocab.pad_id()));
        assert_eq!(decode_chars(&seq, &vocab).unwrap(), "");
    }

    #[test]
    fn encode_at_max_len_has_no_pad() {
        let vocab = Vocabulary::standard();
        let seq = encode_chars("abcd", &vocab, 4).unwrap();
        assert_eq!(seq.length(), 5);
        assert_eq!(seq.ids().len(), 5);
        assert_eq!(*seq.ids().last().unwrap(), vocab.eos_id());
    }

    #[test]
    fn encode_rejects_overflow_and_bad_chars() {
        let vocab = Vocabulary::standard();
        assert!(matches!(
            encode_chars("abcde", &vocab, 4),
            Err(RecordError::SerializationOverflow { .. })
        ));
        assert!(matches!(
            encode_chars("a b", &vocab, 8),
            Err(RecordError::UnrepresentableCharacter { .. })
        ));
    }

    #[test]
    fn decode_detects_malformed_sequences() {
        let vocab = Vocabulary::standard();
        let eos = vocab.eos_id();
        let pad = vocab.pad_id();
        // printable after eos
        let seq = CharSequence::from_raw(vec![0, eos, 1, pad], 2);
        assert!(matches!(
            decode_chars(&seq, &vocab),
            Err(RecordError::MalformedSequence(_))
        ));
        // missing eos
        let seq = CharSequence::from_raw(vec![0, 1, pad, pad], 2);
        assert!(matches!(
            decode_chars(&seq, &vocab),
            Err(RecordError::MalformedSequence(_))
        ));
    }

    #[test]
    fn timestamp_round_trip_and_known_value() {
        // 2017-01-01 00:00 UTC
        assert_eq!(render_timestamp(1_483_228_800), "2017-01-01/00-00");
        assert_eq!(parse_timestamp("2017-01-01/00-00"), Some(1_483_228_800));
        assert_eq!(parse_timestamp("2017-02-30/00-00"), None);
        assert_eq!(parse_timestamp("2017-13-01/00-00"), None);
        assert_eq!(parse_timestamp("2017-01-01 00-00"), None);
        for &t in &[0i64, 1_489_476_300, 1_514_764_740] {
            let t = t - t.rem_euclid(60);
            assert_eq!(parse_timestamp(&render_timestamp(t)), Some(t));
        }
    }

    #[test]
    fn dataset_round_trip_with_header() {
        let schema = AttributeSchema::standard();
        let mut entries = vec![sample_entry(), sample_entry()];
        entries[1].values[attr::TIMESTAMP] = AttributeValue::Timestamp(1_489_480_200);
        let content = dataset_to_string(&entries, &schema).unwrap();
        assert!(content.starts_with("privview-dataset v1\nschema "));
        let back = dataset_from_string(&content, &schema).unwrap();
        assert_eq!(back.len(), 2);
        // same static tuple -> same reconstructed user id
        assert_eq!(back[0].user_id, back[1].user_id);
        assert_eq!(back[0].values, entries[0].values);
    }

    #[test]
    fn dataset_header_and_fingerprint_are_checked() {
        let schema = AttributeSchema::standard();
        assert!(matches!(
            dataset_from_string("wrong header\n", &schema),
            Err(RecordError::HeaderMismatch { .. })
        ));
        let content = format!("{DATASET_HEADER}\nschema 0000000000000000\n");
        assert!(matches!(
            dataset_from_string(&content, &schema),
            Err(RecordError::SchemaFingerprintMismatch { .. })
        ));
    }
}
