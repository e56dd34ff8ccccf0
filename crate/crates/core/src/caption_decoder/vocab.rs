//! Extended vocabulary: the base text vocabulary followed by one id per step of
//! the graduated number scale.

use crate::error::{Error, Result};
use crate::param_corpus::NORM_RANGE;

/// Id of the end token; number ids are offsets from it.
pub const END_ID: u32 = 49_407;
pub const BASE_VOCAB: u32 = 49_408;
/// Number of scale steps.
pub const NUM_STEPS: u32 = 200;
pub const EXTENDED_VOCAB: usize = (BASE_VOCAB + NUM_STEPS) as usize;
pub const FIRST_NUMBER_ID: u32 = END_ID + 1;
pub const LAST_NUMBER_ID: u32 = END_ID + NUM_STEPS;
/// Largest possible distance between two ids of the extended vocabulary.
pub const ORDINAL_DENOMINATOR: f64 = (END_ID + NUM_STEPS - 1) as f64;

pub fn is_number_token(id: u32) -> bool {
    (FIRST_NUMBER_ID..=LAST_NUMBER_ID).contains(&id)
}

/// Scale step in `1..=NUM_STEPS` of a normalized value (clamped into range).
pub fn value_to_scale(v: f64) -> Result<u32> {
    if !v.is_finite() {
        return Err(Error::Invalid(format!("non-finite value {v}")));
    }
    let n = (NUM_STEPS - 1) as f64;
    let raw = (((v + NORM_RANGE) / (2.0 * NORM_RANGE)) * n + 0.5).floor() + 1.0;
    Ok(raw.clamp(1.0, NUM_STEPS as f64) as u32)
}

pub fn value_to_token(v: f64) -> Result<u32> {
    Ok(END_ID + value_to_scale(v)?)
}

pub fn token_to_value(id: u32) -> Result<f64> {
    if !is_number_token(id) {
        return Err(Error::OutOfRange(format!("token {id} is not a number token")));
    }
    let scale = (id - END_ID) as f64;
    Ok(((scale - 1.0) / (NUM_STEPS - 1) as f64) * 2.0 * NORM_RANGE - NORM_RANGE)
}

/// Half of one scale step in normalized units.
pub fn half_step() -> f64 {
    NORM_RANGE / (NUM_STEPS - 1) as f64
}
