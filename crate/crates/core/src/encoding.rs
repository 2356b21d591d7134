//! Text encodings shared by every CSV artifact.
//!
//! Big integers are lowercase hex without leading zeros (`0` for zero).
//! Multi-field values packed into one CSV cell are joined by `:`.

use num_bigint::BigUint;
use num_traits::Num;

use crate::group::GroupError;

pub const FIELD_SEPARATOR: char = ':';

pub fn to_hex(v: &BigUint) -> String {
    v.to_str_radix(16)
}

pub fn from_hex(s: &str) -> Result<BigUint, GroupError> {
    let canonical = !s.is_empty()
        && s.bytes().all(|b| b.is_ascii_digit() || (b'a'..=b'f').contains(&b))
        && (s == "0" || !s.starts_with('0'));
    if !canonical {
        return Err(GroupError::Encoding(s.to_string()));
    }
    BigUint::from_str_radix(s, 16).map_err(|_| GroupError::Encoding(s.to_string()))
}

pub fn join_fields<I, S>(fields: I) -> String
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    let mut out = String::new();
    for (i, f) in fields.into_iter().enumerate() {
        if i > 0 {
            out.push(FIELD_SEPARATOR);
        }
        out.push_str(f.as_ref());
    }
    out
}

pub fn split_fields(cell: &str, expected: usize) -> Result<Vec<&str>, GroupError> {
    let parts: Vec<&str> = cell.split(FIELD_SEPARATOR).collect();
    if parts.len() != expected {
        return Err(GroupError::Encoding(format!(
            "expected {expected} fields, found {} in {cell:?}",
            parts.len()
        )));
    }
    Ok(parts)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    use sha2::{Digest, Sha256};
    hex::encode(Sha256::digest(bytes))
}
