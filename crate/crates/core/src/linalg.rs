//! Small dense helpers on top of nalgebra, plus the plain-text matrix format
//! shared by NtD matrices, gap matrices and sensitivity files.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Eigenvalues of a symmetric matrix in ascending order.
pub fn sym_eigenvalues(a: &DMatrix<f64>) -> Vec<f64> {
    let sym = symmetrize(a);
    let mut ev: Vec<f64> = sym.symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(|x, y| x.partial_cmp(y).expect("finite eigenvalues"));
    ev
}

pub fn min_eigenvalue(a: &DMatrix<f64>) -> f64 {
    sym_eigenvalues(a).first().copied().unwrap_or(0.0)
}

pub fn max_eigenvalue(a: &DMatrix<f64>) -> f64 {
    sym_eigenvalues(a).last().copied().unwrap_or(0.0)
}

/// Spectral norm of a symmetric matrix.
pub fn sym_norm2(a: &DMatrix<f64>) -> f64 {
    sym_eigenvalues(a).iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

pub fn symmetrize(a: &DMatrix<f64>) -> DMatrix<f64> {
    (a + a.transpose()) * 0.5
}

/// Frobenius inner product `⟨A, B⟩_F`.
pub fn frobenius_inner(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

/// Relative asymmetry `‖A - Aᵀ‖_F / ‖A‖_F` (zero for the zero matrix).
pub fn asymmetry(a: &DMatrix<f64>) -> f64 {
    let n = a.norm();
    if n == 0.0 {
        0.0
    } else {
        (a - a.transpose()).norm() / n
    }
}

/// Writes `# key=value ...` followed by one space-separated row per line.
/// Values use the shortest round-trip exponent form, so reading the text
/// back reproduces every bit.
pub fn matrix_to_text(header: &[(&str, String)], a: &DMatrix<f64>) -> String {
    let mut out = String::from("#");
    for (k, v) in header {
        write!(out, " {k}={v}").unwrap();
    }
    out.push('\n');
    for i in 0..a.nrows() {
        let row: Vec<String> = (0..a.ncols()).map(|j| format!("{:e}", a[(i, j)])).collect();
        out.push_str(&row.join(" "));
        out.push('\n');
    }
    out
}

pub fn matrix_from_text(text: &str) -> Result<(BTreeMap<String, String>, DMatrix<f64>)> {
    let mut header = BTreeMap::new();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('#') {
            for tok in rest.split_whitespace() {
                if let Some((k, v)) = tok.split_once('=') {
                    header.insert(k.to_string(), v.to_string());
                }
            }
            continue;
        }
        let row = line
            .split_whitespace()
            .map(|s| s.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::Parse(format!("matrix row `{line}`: {e}")))?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(Error::Parse("ragged matrix rows".into()));
            }
        }
        rows.push(row);
    }
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    let flat: Vec<f64> = rows.into_iter().flatten().collect();
    Ok((header, DMatrix::from_row_slice(nrows, ncols, &flat)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn eigenvalues_sorted() {
        let a = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]);
        let ev = sym_eigenvalues(&a);
        assert!((ev[0] - 1.0).abs() < 1e-14 && (ev[1] - 3.0).abs() < 1e-14);
        assert!((sym_norm2(&(-a)) - 3.0).abs() < 1e-14);
    }

    proptest! {
        #[test]
        fn text_round_trip_is_bit_exact(vals in proptest::collection::vec(any::<f64>().prop_filter("finite", |v| v.is_finite()), 12)) {
            let a = DMatrix::from_row_slice(3, 4, &vals);
            let text = matrix_to_text(&[("m", "3".into())], &a);
            let (h, b) = matrix_from_text(&text).unwrap();
            prop_assert_eq!(h.get("m").map(String::as_str), Some("3"));
            for (x, y) in a.iter().zip(b.iter()) {
                prop_assert_eq!(x.to_bits(), y.to_bits());
            }
        }
    }
}
