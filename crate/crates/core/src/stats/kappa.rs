use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::num::Scalar;

/// Highest category on the reviewer scale (0..=3).
pub const MAX_CATEGORY: u8 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Kappa<T> {
    pub kappa: T,
    pub observed: T,
    pub expected: T,
    /// Expected agreement was 1, so κ was set to 1 by convention.
    pub degenerate: bool,
}

pub fn cohens_kappa<T: Scalar>(a: &[u8], b: &[u8]) -> Result<Kappa<T>> {
    if a.len() != b.len() {
        return Err(Error::InvalidInput(format!(
            "rating lists differ in length: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    if a.is_empty() {
        return Err(Error::InvalidInput("no ratings".into()));
    }
    if let Some(c) = a.iter().chain(b).find(|&&c| c > MAX_CATEGORY) {
        return Err(Error::InvalidInput(format!(
            "category {c} outside 0..={MAX_CATEGORY}"
        )));
    }
    let k = usize::from(MAX_CATEGORY) + 1;
    let mut ca = vec![0usize; k];
    let mut cb = vec![0usize; k];
    let mut agree = 0usize;
    for (&x, &y) in a.iter().zip(b) {
        ca[usize::from(x)] += 1;
        cb[usize::from(y)] += 1;
        agree += usize::from(x == y);
    }
    let n = T::from_usize_lossy(a.len());
    let observed = T::from_usize_lossy(agree) / n;
    let expected = (0..k).fold(T::zero(), |acc, c| {
        acc + T::from_usize_lossy(ca[c]) * T::from_usize_lossy(cb[c])
    }) / (n * n);
    if expected == T::one() {
        return Ok(Kappa {
            kappa: T::one(),
            observed,
            expected,
            degenerate: true,
        });
    }
    Ok(Kappa {
        kappa: (observed - expected) / (T::one() - expected),
        observed,
        expected,
        degenerate: false,
    })
}

/// Two category columns with a header line, comma or tab separated.
pub fn read_ratings_text(text: &str) -> Result<(Vec<u8>, Vec<u8>)> {
    let tab = text.lines().next().is_some_and(|h| h.contains('\t'));
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .delimiter(if tab { b'\t' } else { b',' })
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let (mut a, mut b) = (Vec::new(), Vec::new());
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let cat = |i: usize| -> Result<u8> {
            rec.get(i).and_then(|c| c.parse::<u8>().ok()).ok_or_else(|| {
                Error::InvalidInput(format!("ratings row {}: column {} is not a category", row + 2, i + 1))
            })
        };
        a.push(cat(0)?);
        b.push(cat(1)?);
    }
    Ok((a, b))
}

pub fn read_ratings(path: &Path) -> Result<(Vec<u8>, Vec<u8>)> {
    read_ratings_text(&std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
}
