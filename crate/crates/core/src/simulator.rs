//! Synthetic assisted-living dataset generation with deterministic seeding.
//!
//! Static attributes (identity, disease) are fixed per user; timestamps and
//! sensor readings vary per entry. Each user draws from an independent
//! substream of the seeded generator, so parallel and serial generation
//! produce byte-identical datasets.

use std::fmt;

use crate::records::{
    domains, serialize_entry, AttributeSchema, AttributeValue, RecordEntry, RecordError,
};
use crate::rng::DetRng;

/// Per-attribute sampling specification.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueRanges {
    pub first_names: Vec<String>,
    pub surnames: Vec<String>,
    pub streets: Vec<String>,
    pub cities: Vec<String>,
    pub house_numbers: (i64, i64),
    pub phone_prefix: String,
    pub phone_digits: usize,
    pub genders: Vec<String>,
    pub occupations: Vec<String>,
    pub marital_statuses: Vec<String>,
    pub diseases: Vec<String>,
    pub age_years: (i64, i64),
    pub height_cm: (i64, i64),
    pub weight_kg: (i64, i64),
    pub systolic_mmhg: (i64, i64),
    pub diastolic_mmhg: (i64, i64),
    pub glucose_mg_dl: (i64, i64),
    pub pedometer_steps: (i64, i64),
    pub temperature_c: (i64, i64),
    pub energy_tenths_kwh: (i64, i64),
    /// Epoch-second window for each user's first entry; sampled minute-aligned.
    pub timestamp_start: (i64, i64),
    /// Whole-minute increment between a user's consecutive entries.
    pub step_minutes: (i64, i64),
}

fn strings(items: &[&str]) -> Vec<String> {
    items.iter().map(|s| s.to_string()).collect()
}

impl Default for ValueRanges {
    fn default() -> Self {
        ValueRanges {
            first_names: strings(&[
                "john", "mary", "james", "linda", "robert", "susan", "david", "karen", "peter",
                "nancy", "frank", "helen", "betty", "edith", "agnes", "harold",
            ]),
            surnames: strings(&[
                "smith", "jones", "brown", "white", "green", "black", "hall", "wood", "lewis",
                "scott", "young", "reed", "stone", "field", "cross", "dale",
            ]),
            streets: strings(&[
                "park-road",
                "mill-lane",
                "oak-lane",
                "elm-grove",
                "new-road",
                "green-way",
                "york-road",
                "east-lane",
                "west-lane",
                "rose-walk",
            ]),
            cities: strings(&[
                "london", "leeds", "york", "derby", "oxford", "exeter", "durham", "truro",
            ]),
            house_numbers: (1, 99),
            phone_prefix: "07".to_string(),
            phone_digits: 7,
            genders: strings(domains::GENDERS),
            occupations: strings(domains::OCCUPATIONS),
            marital_statuses: strings(domains::MARITAL_STATUSES),
            diseases: strings(domains::DISEASES),
            age_years: (60, 95),
            height_cm: (145, 195),
            weight_kg: (45, 120),
            systolic_mmhg: (90, 180),
            diastolic_mmhg: (60, 110),
            glucose_mg_dl: (70, 250),
            pedometer_steps: (0, 9_999),
            temperature_c: (16, 28),
            energy_tenths_kwh: (0, 50),
            // each user's first entry falls inside calendar year 2017
            timestamp_start: (1_483_228_800, 1_514_764_799),
            step_minutes: (5, 120),
        }
    }
}

/// Simulation parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationConfig {
    pub n_users: u64,
    pub entries_per_user: u64,
    pub seed: u64,
    pub value_ranges: ValueRanges,
}

impl SimulationConfig {
    pub fn new(n_users: u64, entries_per_user: u64, seed: u64) -> Self {
        SimulationConfig {
            n_users,
            entries_per_user,
            seed,
            value_ranges: ValueRanges::default(),
        }
    }
}

/// Static attribute values fixed across all entries of one user.
#[derive(Debug, Clone, PartialEq)]
pub struct UserProfile {
    pub name: String,
    pub age: i64,
    pub gender: String,
    pub height_cm: i64,
    pub weight_kg: i64,
    pub address: String,
    pub phone: String,
    pub occupation: String,
    pub marital_status: String,
    pub disease: String,
}

/// Simulator errors.
#[derive(Debug)]
pub enum SimError {
    Config(String),
    Range { user_id: u64, source: RecordError },
    EmptySplit { n_users: usize, train_fraction: f64 },
}

impl fmt::Display for SimError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SimError::Config(what) => write!(f, "invalid simulation config: {what}"),
            SimError::Range { user_id, source } => {
                write!(f, "entry for user {user_id} cannot serialize: {source}")
            }
            SimError::EmptySplit {
                n_users,
                train_fraction,
            } => write!(
                f,
                "splitting {n_users} users at fraction {train_fraction} leaves one side empty"
            ),
        }
    }
}

impl std::error::Error for SimError {}

fn check_range(name: &str, (lo, hi): (i64, i64)) -> Result<(), SimError> {
    if lo > hi {
        return Err(SimError::Config(format!(
            "{name} range {lo}..{hi} is empty"
        )));
    }
    Ok(())
}

fn check_list(name: &str, items: &[String]) -> Result<(), SimError> {
    if items.is_empty() {
        return Err(SimError::Config(format!("{name} list is empty")));
    }
    Ok(())
}

fn validate_config(config: &SimulationConfig) -> Result<(), SimError> {
    if config.n_users == 0 {
        return Err(SimError::Config("n_users must be at least 1".into()));
    }
    if config.entries_per_user == 0 {
        return Err(SimError::Config(
            "entries_per_user must be at least 1".into(),
        ));
    }
    let r = &config.value_ranges;
    check_list("first_names", &r.first_names)?;
    check_list("surnames", &r.surnames)?;
    check_list("streets", &r.streets)?;
    check_list("cities", &r.cities)?;
    check_list("genders", &r.genders)?;
    check_list("occupations", &r.occupations)?;
    check_list("marital_statuses", &r.marital_statuses)?;
    check_list("diseases", &r.diseases)?;
    check_range("house_numbers", r.house_numbers)?;
    check_range("age_years", r.age_years)?;
    check_range("height_cm", r.height_cm)?;
    check_range("weight_kg", r.weight_kg)?;
    check_range("systolic_mmhg", r.systolic_mmhg)?;
    check_range("diastolic_mmhg", r.diastolic_mmhg)?;
    check_range("glucose_mg_dl", r.glucose_mg_dl)?;
    check_range("pedometer_steps", r.pedometer_steps)?;
    check_range("temperature_c", r.temperature_c)?;
    check_range("energy_tenths_kwh", r.energy_tenths_kwh)?;
    check_range("timestamp_start", r.timestamp_start)?;
    check_range("step_minutes", r.step_minutes)?;
    if r.step_minutes.0 < 1 {
        return Err(SimError::Config("step_minutes must be at least 1".into()));
    }
    Ok(())
}

fn sample_range(rng: &mut DetRng, (lo, hi): (i64, i64)) -> i64 {
    rng.gen_range_i64(lo, hi)
}

fn sample_profile(rng: &mut DetRng, r: &ValueRanges) -> UserProfile {
    let name = format!("{}-{}", rng.choose(&r.first_names), rng.choose(&r.surnames));
    let age = sample_range(rng, r.age_years);
    let gender = rng.choose(&r.genders).clone();
    let height_cm = sample_range(rng, r.height_cm);
    let weight_kg = sample_range(rng, r.weight_kg);
    let address = format!(
        "{}-{}-{}",
        sample_range(rng, r.house_numbers),
        rng.choose(&r.streets),
        rng.choose(&r.cities)
    );
    let mut phone = r.phone_prefix.clone();
    for _ in 0..r.phone_digits {
        phone.push(char::from(b'0' + rng.gen_below(10) as u8));
    }
    UserProfile {
        name,
        age,
        gender,
        height_cm,
        weight_kg,
        address,
        phone,
        occupation: rng.choose(&r.occupations).clone(),
        marital_status: rng.choose(&r.marital_statuses).clone(),
        disease: rng.choose(&r.diseases).clone(),
    }
}

/// Generates all entries for one user from its own substream.
fn simulate_user(
    user_id: u64,
    seed: u64,
    entries_per_user: u64,
    r: &ValueRanges,
) -> Vec<RecordEntry> {
    let mut rng = DetRng::substream(seed, user_id);
    let profile = sample_profile(&mut rng, r);
    // minute-aligned start inside the configured window
    let start_minutes = (
        r.timestamp_start.0.div_euclid(60),
        r.timestamp_start.1.div_euclid(60),
    );
    let mut timestamp = sample_range(&mut rng, start_minutes) * 60;
    let mut entries = Vec::with_capacity(entries_per_user as usize);
    for i in 0..entries_per_user {
        if i > 0 {
            timestamp += sample_range(&mut rng, r.step_minutes) * 60;
        }
        let values = vec![
            AttributeValue::Text(profile.name.clone()),
            AttributeValue::Int(profile.age),
            AttributeValue::Choice(profile.gender.clone()),
            AttributeValue::Int(profile.height_cm),
            AttributeValue::Int(profile.weight_kg),
            AttributeValue::Text(profile.address.clone()),
            AttributeValue::Text(profile.phone.clone()),
            AttributeValue::Choice(profile.occupation.clone()),
            AttributeValue::Choice(profile.marital_status.clone()),
            AttributeValue::Timestamp(timestamp),
            AttributeValue::Pair(
                sample_range(&mut rng, r.systolic_mmhg),
                sample_range(&mut rng, r.diastolic_mmhg),
            ),
            AttributeValue::Int(sample_range(&mut rng, r.glucose_mg_dl)),
            AttributeValue::Choice(profile.disease.clone()),
            AttributeValue::Int(sample_range(&mut rng, r.pedometer_steps)),
            AttributeValue::Choice(rng.choose(domains::ON_OFF).to_string()),
            AttributeValue::Int(sample_range(&mut rng, r.temperature_c)),
            AttributeValue::Choice(rng.choose(domains::ON_OFF).to_string()),
            AttributeValue::Choice(rng.choose(domains::ON_OFF).to_string()),
            AttributeValue::Choice(rng.choose(domains::ON_OFF).to_string()),
            AttributeValue::Int(sample_range(&mut rng, r.energy_tenths_kwh)),
        ];
        entries.push(RecordEntry { user_id, values });
    }
    entries
}

/// Generates `n_users * entries_per_user` entries, grouped by user in user-id
/// order, timestamps strictly increasing within each user.
pub fn simulate_dataset(
    config: &SimulationConfig,
    schema: &AttributeSchema,
) -> Result<Vec<RecordEntry>, SimError> {
    validate_config(config)?;
    let users: Vec<u64> = (0..config.n_users).collect();
    let per_user: Vec<Vec<RecordEntry>> = crate::par_map(&users, |&user_id| {
        simulate_user(
            user_id,
            config.seed,
            config.entries_per_user,
            &config.value_ranges,
        )
    });
    let mut entries = Vec::with_capacity((config.n_users * config.entries_per_user) as usize);
    for user_entries in per_user {
        for entry in user_entries {
            if let Err(source) = serialize_entry(&entry, schema) {
                return Err(SimError::Range {
                    user_id: entry.user_id,
                    source,
                });
            }
            entries.push(entry);
        }
    }
    Ok(entries)
}

/// User-disjoint train/test split: all entries of one user land on one side.
pub fn split_train_test(
    dataset: &[RecordEntry],
    train_fraction: f64,
    seed: u64,
) -> Result<(Vec<RecordEntry>, Vec<RecordEntry>), SimError> {
    assert!(
        train_fraction > 0.0 && train_fraction < 1.0,
        "train_fraction must be in (0, 1)"
    );
    let mut users: Vec<u64> = Vec::new();
    for e in dataset {
        if !users.contains(&e.user_id) {
            users.push(e.user_id);
        }
    }
    let n_users = users.len();
    let n_train = (n_users as f64 * train_fraction).floor() as usize;
    if n_train == 0 || n_train == n_users {
        return Err(SimError::EmptySplit {
            n_users,
            train_fraction,
        });
    }
    let mut shuffled = users;
    DetRng::from_seed(seed).shuffle(&mut shuffled);
    let train_users: std::collections::HashSet<u64> = shuffled[..n_train].iter().copied().collect();
    let mut train = Vec::new();
    let mut test = Vec::new();
    for e in dataset {
        if train_users.contains(&e.user_id) {
            train.push(e.clone());
        } else {
            test.push(e.clone());
        }
    }
    Ok((train, test))
}
