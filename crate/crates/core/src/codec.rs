//! Base-`b` positional codes of genomic coordinates, most significant digit first.

use crate::error::{invalid, Result};

/// `⌊log_b(len)⌋ + 1`, the number of base-`b` digits of `len`, in integer
/// arithmetic.
pub fn num_digits(len: u64, base: u32) -> Result<usize> {
    if base < 2 {
        return invalid(format!("base {base} must be at least 2"));
    }
    if len == 0 {
        return invalid("coordinate space must be non-empty");
    }
    let mut n = 0;
    let mut rest = len;
    while rest > 0 {
        rest /= base as u64;
        n += 1;
    }
    Ok(n)
}

/// `base^n`, or `None` on overflow.
pub fn capacity(base: u32, n: usize) -> Option<u64> {
    (0..n).try_fold(1u64, |acc, _| acc.checked_mul(base as u64))
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct DigitCode {
    pub base: u32,
    pub digits: Vec<u32>,
}

impl DigitCode {
    pub fn new(base: u32, digits: Vec<u32>) -> Result<Self> {
        if base < 2 {
            return invalid(format!("base {base} must be at least 2"));
        }
        if let Some(d) = digits.iter().find(|d| **d >= base) {
            return invalid(format!("digit {d} out of range for base {base}"));
        }
        Ok(Self { base, digits })
    }

    pub fn len(&self) -> usize {
        self.digits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.digits.is_empty()
    }
}

impl std::fmt::Display for DigitCode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let sep = if self.base > 10 { "," } else { "" };
        let parts: Vec<String> = self.digits.iter().map(u32::to_string).collect();
        f.write_str(&parts.join(sep))
    }
}

/// Zero-padded code of `c` with `num_digits(len, base)` digits.
pub fn encode_coordinate(c: u64, base: u32, len: u64) -> Result<DigitCode> {
    let n = num_digits(len, base)?;
    if capacity(base, n).is_some_and(|cap| c >= cap) {
        return invalid(format!("coordinate {c} needs more than {n} base-{base} digits"));
    }
    if c >= len {
        log::warn!("coordinate {c} lies outside the coordinate space of length {len}");
    }
    let mut digits = vec![0u32; n];
    let mut rest = c;
    for d in digits.iter_mut().rev() {
        *d = (rest % base as u64) as u32;
        rest /= base as u64;
    }
    Ok(DigitCode { base, digits })
}

pub fn decode_digits(dc: &DigitCode) -> Result<u64> {
    let mut v: u64 = 0;
    for &d in &dc.digits {
        if d >= dc.base {
            return invalid(format!("digit {d} out of range for base {}", dc.base));
        }
        v = v
            .checked_mul(dc.base as u64)
            .and_then(|v| v.checked_add(d as u64))
            .ok_or_else(|| crate::Error::InvalidArgument("digit code overflows u64".into()))?;
    }
    Ok(v)
}

/// `N_b × b` matrix, row `n` one-hot at digit `t_n` (row-major).
pub fn one_hot_digits(dc: &DigitCode) -> Vec<Vec<u8>> {
    dc.digits
        .iter()
        .map(|&d| (0..dc.base).map(|j| u8::from(j == d)).collect())
        .collect()
}
