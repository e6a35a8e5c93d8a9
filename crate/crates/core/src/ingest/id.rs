//! Base-36 comment IDs and uniform ID-range sampling.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::{Error, Result};

const DIGITS: &[u8; 36] = b"0123456789abcdefghijklmnopqrstuvwxyz";

/// Decode a lowercase base-36 comment ID.
pub fn decode_base36(id: &str) -> Result<u64> {
    if id.is_empty() {
        return Err(Error::invalid("empty base-36 id"));
    }
    let mut value: u64 = 0;
    for (position, character) in id.chars().enumerate() {
        let digit = match character {
            '0'..='9' => character as u64 - '0' as u64,
            'a'..='z' => character as u64 - 'a' as u64 + 10,
            _ => return Err(Error::Base36 { character, position }),
        };
        value = value
            .checked_mul(36)
            .and_then(|v| v.checked_add(digit))
            .ok_or_else(|| Error::Base36Overflow(id.to_string()))?;
    }
    Ok(value)
}

/// Canonical (no leading zeros) base-36 encoding.
pub fn encode_base36(mut value: u64) -> String {
    if value == 0 {
        return "0".to_string();
    }
    let mut buf = Vec::with_capacity(13);
    while value > 0 {
        buf.push(DIGITS[(value % 36) as usize]);
        value /= 36;
    }
    buf.reverse();
    String::from_utf8(buf).expect("base-36 digits are ascii")
}

/// Draw `n` distinct IDs uniformly without replacement from the closed range
/// `[first_id, last_id]`, returned in ascending order.
///
/// Uses a sparse partial Fisher-Yates shuffle over the range offsets, so the
/// cost is `O(n)` regardless of the range width and no draw is ever rejected.
pub fn sample_id_range(first_id: u64, last_id: u64, n: usize, seed: u64) -> Result<Vec<u64>> {
    if first_id > last_id {
        return Err(Error::invalid(format!(
            "first id {first_id} is greater than last id {last_id}"
        )));
    }
    // width - 1 fits in u64; the full u64 range is reported as u64::MAX
    let span = last_id - first_id;
    if (n as u128) > span as u128 + 1 {
        return Err(Error::invalid(format!(
            "cannot draw {n} distinct ids from a range of {} ids",
            span as u128 + 1
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut swapped: HashMap<u64, u64> = HashMap::with_capacity(n);
    let mut out = Vec::with_capacity(n);
    for i in 0..n as u64 {
        let j = rng.random_range(i..=span);
        let at_j = *swapped.get(&j).unwrap_or(&j);
        let at_i = *swapped.get(&i).unwrap_or(&i);
        swapped.insert(j, at_i);
        out.push(first_id + at_j);
    }
    out.sort_unstable();
    Ok(out)
}
