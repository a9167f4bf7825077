//! Sinusoidal positional encodings, including the length-aware variants.
//!
//! Three table builders share one kernel:
//!
//! - [`pe_table`]: the absolute encoding, `sin(pos / base^(2i/d))` on even
//!   dimensions and the matching cosine on odd ones.
//! - [`ldpe_table`]: same sinusoids evaluated at the *remaining* length
//!   `len - pos`, so every row is a countdown to the terminal position and
//!   the row at `pos == len` is exactly `[0, 1, 0, 1, ...]`.
//! - [`lrpe_table`]: sinusoids of `pos` with the base replaced by `len`,
//!   encoding progress relative to the terminal position.
//!
//! Arguments are formed in integer arithmetic and converted to f64 once, so
//! `ldpe(len, pos)` and `pe(len - pos)` evaluate the identical float
//! expression: the two rows are bitwise equal for every `pos <= len`.
//! Positions beyond `len` are allowed (the argument goes negative); decoding
//! may overrun the requested length and measuring that overrun is part of
//! the point.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_BASE: f64 = 10000.0;

/// Which encoding the decoder input layer receives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Family {
    /// No positional signal at all.
    #[serde(rename = "none")]
    None,
    /// Absolute sinusoidal encoding.
    #[serde(rename = "pe")]
    Pe,
    /// Length-difference encoding.
    #[serde(rename = "ldpe")]
    Ldpe,
    /// Length-ratio encoding.
    #[serde(rename = "lrpe")]
    Lrpe,
    /// Length-difference plus absolute, summed elementwise.
    #[serde(rename = "ldpe+pe", alias = "ldpe-pe")]
    LdpePe,
    /// Length-ratio plus absolute, summed elementwise.
    #[serde(rename = "lrpe+pe", alias = "lrpe-pe")]
    LrpePe,
}

impl Family {
    /// Length-aware families need a length constraint to build their rows.
    pub fn needs_len(self) -> bool {
        matches!(
            self,
            Family::Ldpe | Family::Lrpe | Family::LdpePe | Family::LrpePe
        )
    }

    pub fn name(self) -> &'static str {
        match self {
            Family::None => "none",
            Family::Pe => "pe",
            Family::Ldpe => "ldpe",
            Family::Lrpe => "lrpe",
            Family::LdpePe => "ldpe+pe",
            Family::LrpePe => "lrpe+pe",
        }
    }
}

impl std::str::FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "none" => Ok(Family::None),
            "pe" => Ok(Family::Pe),
            "ldpe" => Ok(Family::Ldpe),
            "lrpe" => Ok(Family::Lrpe),
            "ldpe+pe" | "ldpe-pe" => Ok(Family::LdpePe),
            "lrpe+pe" | "lrpe-pe" => Ok(Family::LrpePe),
            other => Err(Error::Config(format!(
                "unknown encoding family `{other}` (expected none, pe, ldpe, lrpe, ldpe+pe, lrpe+pe)"
            ))),
        }
    }
}

/// Everything needed to build one encoding table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncodingSpec {
    pub family: Family,
    /// Embedding size; must be even.
    pub d: usize,
    /// Sinusoid base of the absolute encoding.
    pub base: f64,
    /// Length constraint in target characters; required by length-aware
    /// families.
    pub len: Option<u32>,
}

impl EncodingSpec {
    pub fn new(family: Family, d: usize, base: f64, len: Option<u32>) -> Result<Self> {
        if d == 0 || d % 2 != 0 {
            return Err(Error::Config(format!(
                "embedding size must be a positive even number, got {d}"
            )));
        }
        if base <= 1.0 {
            return Err(Error::Config(format!(
                "sinusoid base must exceed 1, got {base}"
            )));
        }
        if family.needs_len() && len.is_none() {
            return Err(Error::Config(format!(
                "family {} requires a length constraint",
                family.name()
            )));
        }
        Ok(Self {
            family,
            d,
            base,
            len,
        })
    }
}

/// A (max_pos+1) × d matrix of encoding values, row per position.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodingTable {
    pub spec: EncodingSpec,
    pub d: usize,
    /// Row-major, rows are positions 0..=max_pos.
    pub values: Vec<f32>,
}

impl EncodingTable {
    pub fn rows(&self) -> usize {
        self.values.len() / self.d
    }

    pub fn row(&self, pos: usize) -> &[f32] {
        &self.values[pos * self.d..(pos + 1) * self.d]
    }
}

/// Denominators base^(2i/d) for each dimension pair, in f64.
fn denominators(d: usize, base: f64) -> Vec<f64> {
    (0..d / 2)
        .map(|i| base.powf(2.0 * i as f64 / d as f64))
        .collect()
}

/// Writes sin(arg/denom), cos(arg/denom) pairs for one position.
fn fill_row(arg: f64, denoms: &[f64], out: &mut [f32]) {
    for (i, &denom) in denoms.iter().enumerate() {
        let t = arg / denom;
        out[2 * i] = t.sin() as f32;
        out[2 * i + 1] = t.cos() as f32;
    }
}

fn check_dims(d: usize) -> Result<()> {
    if d == 0 || d % 2 != 0 {
        return Err(Error::Config(format!(
            "embedding size must be a positive even number, got {d}"
        )));
    }
    Ok(())
}

/// Absolute sinusoidal encoding for positions 0..=max_pos.
pub fn pe_table(d: usize, base: f64, max_pos: usize) -> Result<EncodingTable> {
    check_dims(d)?;
    let denoms = denominators(d, base);
    let mut values = vec![0.0f32; (max_pos + 1) * d];
    for pos in 0..=max_pos {
        fill_row(
            pos as i64 as f64,
            &denoms,
            &mut values[pos * d..(pos + 1) * d],
        );
    }
    Ok(EncodingTable {
        spec: EncodingSpec {
            family: Family::Pe,
            d,
            base,
            len: None,
        },
        d,
        values,
    })
}

/// Length-difference encoding: sinusoids of `len - pos`.
pub fn ldpe_table(d: usize, base: f64, len: u32, max_pos: usize) -> Result<EncodingTable> {
    check_dims(d)?;
    let denoms = denominators(d, base);
    let mut values = vec![0.0f32; (max_pos + 1) * d];
    for pos in 0..=max_pos {
        let remaining = len as i64 - pos as i64;
        fill_row(
            remaining as f64,
            &denoms,
            &mut values[pos * d..(pos + 1) * d],
        );
    }
    Ok(EncodingTable {
        spec: EncodingSpec {
            family: Family::Ldpe,
            d,
            base,
            len: Some(len),
        },
        d,
        values,
    })
}

/// Length-ratio encoding: sinusoids of `pos` with `len` as the base.
pub fn lrpe_table(d: usize, len: u32, max_pos: usize) -> Result<EncodingTable> {
    check_dims(d)?;
    if len == 0 {
        return Err(Error::Config(
            "length-ratio encoding requires len >= 1 (len is the exponent base)".into(),
        ));
    }
    let denoms = denominators(d, len as f64);
    let mut values = vec![0.0f32; (max_pos + 1) * d];
    for pos in 0..=max_pos {
        fill_row(
            pos as i64 as f64,
            &denoms,
            &mut values[pos * d..(pos + 1) * d],
        );
    }
    Ok(EncodingTable {
        spec: EncodingSpec {
            family: Family::Lrpe,
            d,
            base: len as f64,
            len: Some(len),
        },
        d,
        values,
    })
}

/// Elementwise sum of two tables of identical shape.
pub fn sum_encodings(a: &EncodingTable, b: &EncodingTable) -> Result<EncodingTable> {
    if a.d != b.d || a.values.len() != b.values.len() {
        return Err(Error::ShapeMismatch {
            op: "sum_encodings",
            lhs: vec![a.rows(), a.d],
            rhs: vec![b.rows(), b.d],
        });
    }
    let values = a
        .values
        .iter()
        .zip(&b.values)
        .map(|(&x, &y)| x + y)
        .collect();
    let family = match (a.spec.family, b.spec.family) {
        (Family::Ldpe, Family::Pe) | (Family::Pe, Family::Ldpe) => Family::LdpePe,
        (Family::Lrpe, Family::Pe) | (Family::Pe, Family::Lrpe) => Family::LrpePe,
        (f, _) => f,
    };
    Ok(EncodingTable {
        spec: EncodingSpec {
            family,
            d: a.d,
            base: a.spec.base,
            len: a.spec.len.or(b.spec.len),
        },
        d: a.d,
        values,
    })
}

/// The table a decoder input layer should add, for any family.
/// `len` may be anything for families that ignore it.
pub fn family_table(
    family: Family,
    d: usize,
    base: f64,
    len: Option<u32>,
    max_pos: usize,
) -> Result<EncodingTable> {
    match family {
        Family::None => {
            check_dims(d)?;
            Ok(EncodingTable {
                spec: EncodingSpec {
                    family,
                    d,
                    base,
                    len: None,
                },
                d,
                values: vec![0.0f32; (max_pos + 1) * d],
            })
        }
        Family::Pe => pe_table(d, base, max_pos),
        Family::Ldpe | Family::Lrpe | Family::LdpePe | Family::LrpePe => {
            let len = len.ok_or_else(|| {
                Error::Config(format!(
                    "family {} requires a length constraint",
                    family.name()
                ))
            })?;
            match family {
                Family::Ldpe => ldpe_table(d, base, len, max_pos),
                Family::Lrpe => lrpe_table(d, len, max_pos),
                Family::LdpePe => {
                    let l = ldpe_table(d, base, len, max_pos)?;
                    let p = pe_table(d, base, max_pos)?;
                    sum_encodings(&l, &p)
                }
                Family::LrpePe => {
                    let l = lrpe_table(d, len, max_pos)?;
                    let p = pe_table(d, base, max_pos)?;
                    sum_encodings(&l, &p)
                }
                _ => unreachable!(),
            }
        }
    }
}
