//! Truncated SVD of sensitivity matrices and the combined
//! monotonicity + TSVD reconstruction.

use std::fmt::Write as _;

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::constrained::{
    minimize_disjoint_supports, minimize_single_support, BoxConstraints, ReconstructionResult, SolverOptions,
};
use crate::error::{Error, Result};
use crate::sensitivity::{RegionSensitivity, SensitivityStack};

/// Which partial sums decide the truncation rank.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EnergyCriterion {
    /// `Σ_{i≤l} σ_i / Σ σ_i ≥ τ`.
    #[default]
    Linear,
    /// `Σ_{i≤l} σ_i² / Σ σ_i² ≥ τ`.
    Squared,
}

impl EnergyCriterion {
    pub fn name(self) -> &'static str {
        match self {
            EnergyCriterion::Linear => "linear",
            EnergyCriterion::Squared => "squared",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "linear" => Some(EnergyCriterion::Linear),
            "squared" => Some(EnergyCriterion::Squared),
            _ => None,
        }
    }
}

/// What gets truncated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TruncationMode {
    /// Each `[T^λ_k | T^μ_k | T^ρ_k]` separately.
    #[default]
    PerPixel,
    /// The assembled `m² × 3L` system of vectorized blocks.
    Global,
}

impl TruncationMode {
    pub fn name(self) -> &'static str {
        match self {
            TruncationMode::PerPixel => "pixel",
            TruncationMode::Global => "global",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "pixel" => Some(TruncationMode::PerPixel),
            "global" => Some(TruncationMode::Global),
            _ => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TsvdDecomposition {
    /// Nonzero singular values, descending.
    pub singular_values: Vec<f64>,
    pub rank: usize,
    pub tau: f64,
    pub criterion: EnergyCriterion,
    u: DMatrix<f64>,
    v_t: DMatrix<f64>,
}

impl TsvdDecomposition {
    /// `A_l = U_l Σ_l V_lᵀ`.
    pub fn approximation(&self) -> DMatrix<f64> {
        self.approximation_of_rank(self.rank)
    }

    pub fn approximation_of_rank(&self, l: usize) -> DMatrix<f64> {
        let l = l.min(self.singular_values.len());
        let mut us = self.u.columns(0, l).into_owned();
        for (j, s) in self.singular_values[..l].iter().enumerate() {
            us.column_mut(j).scale_mut(*s);
        }
        us * self.v_t.rows(0, l)
    }

    /// `Σ_{i>l} σ_i²`.
    pub fn tail_energy(&self) -> f64 {
        self.singular_values[self.rank..].iter().map(|s| s * s).sum()
    }

    pub fn full_rank(&self) -> usize {
        self.singular_values.len()
    }
}

/// Fraction of the total captured by the first `l` values.
pub fn energy_fraction(sigma: &[f64], l: usize, criterion: EnergyCriterion) -> f64 {
    let f = |s: &f64| match criterion {
        EnergyCriterion::Linear => *s,
        EnergyCriterion::Squared => s * s,
    };
    let total: f64 = sigma.iter().map(f).sum();
    sigma[..l].iter().map(f).sum::<f64>() / total
}

/// Smallest `l` reaching the threshold.
pub fn truncation_rank(sigma: &[f64], tau: f64, criterion: EnergyCriterion) -> usize {
    (1..=sigma.len())
        .find(|&l| energy_fraction(sigma, l, criterion) >= tau)
        .unwrap_or(sigma.len())
}

pub fn tsvd(a: &DMatrix<f64>, tau: f64) -> Result<TsvdDecomposition> {
    tsvd_with(a, tau, EnergyCriterion::Linear)
}

pub fn tsvd_with(a: &DMatrix<f64>, tau: f64, criterion: EnergyCriterion) -> Result<TsvdDecomposition> {
    if !(tau > 0.0 && tau < 1.0) {
        return Err(Error::InvalidArgument(format!("truncation threshold {tau} not in (0,1)")));
    }
    if a.iter().all(|v| *v == 0.0) {
        return Err(Error::DegenerateInput("zero matrix has no singular values".into()));
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::NumericalFailure("non-finite matrix entry".into()));
    }
    let svd = a.clone().svd(true, true);
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
    let u_full = svd.u.expect("requested U");
    let vt_full = svd.v_t.expect("requested Vᵀ");
    let smax = svd.singular_values[order[0]];
    let floor = smax * f64::EPSILON * a.nrows().max(a.ncols()) as f64;
    let kept: Vec<usize> = order.into_iter().filter(|&i| svd.singular_values[i] > floor).collect();
    let singular_values: Vec<f64> = kept.iter().map(|&i| svd.singular_values[i]).collect();
    let u = u_full.select_columns(kept.iter());
    let v_t = vt_full.select_rows(kept.iter());
    let rank = truncation_rank(&singular_values, tau, criterion);
    Ok(TsvdDecomposition {
        singular_values,
        rank,
        tau,
        criterion,
        u,
        v_t,
    })
}

/// Truncated stack plus per-matrix spectra and retained ranks.
#[derive(Debug, Clone)]
pub struct TruncatedStack {
    pub stack: SensitivityStack,
    pub mode: TruncationMode,
    /// Per pixel (or a single entry in global mode).
    pub ranks: Vec<usize>,
    pub spectra: Vec<Vec<f64>>,
}

impl TruncatedStack {
    /// CSV rows `pixel,index,sigma` (1-based index).
    pub fn spectra_csv(&self) -> String {
        let mut out = String::from("pixel,index,sigma,retained\n");
        for (k, (s, l)) in self.spectra.iter().zip(&self.ranks).enumerate() {
            for (i, v) in s.iter().enumerate() {
                writeln!(out, "{k},{},{v:e},{}", i + 1, (i < *l) as u8).unwrap();
            }
        }
        out
    }

    /// Fraction of matrices truncated strictly below their full rank.
    pub fn fraction_reduced(&self) -> f64 {
        let n = self.ranks.len().max(1);
        self.ranks
            .iter()
            .zip(&self.spectra)
            .filter(|(l, s)| **l < s.len())
            .count() as f64
            / n as f64
    }
}

fn concat(e: &RegionSensitivity) -> DMatrix<f64> {
    let m = e.dim();
    let mut c = DMatrix::zeros(m, 3 * m);
    for (b, block) in e.blocks().into_iter().enumerate() {
        c.columns_mut(b * m, m).copy_from(block);
    }
    c
}

fn split(c: &DMatrix<f64>) -> RegionSensitivity {
    let m = c.nrows();
    RegionSensitivity {
        lambda: c.columns(0, m).into_owned(),
        mu: c.columns(m, m).into_owned(),
        rho: c.columns(2 * m, m).into_owned(),
    }
}

pub fn truncate_sensitivity_stack(stack: &SensitivityStack, tau: f64) -> Result<TruncatedStack> {
    truncate_stack_with(stack, tau, EnergyCriterion::Linear, TruncationMode::PerPixel)
}

pub fn truncate_stack_with(
    stack: &SensitivityStack,
    tau: f64,
    criterion: EnergyCriterion,
    mode: TruncationMode,
) -> Result<TruncatedStack> {
    match mode {
        TruncationMode::PerPixel => {
            let parts = stack
                .entries
                .par_iter()
                .map(|e| {
                    let c = concat(e);
                    if c.iter().all(|v| *v == 0.0) {
                        return Ok((e.clone(), 0, Vec::new()));
                    }
                    let d = tsvd_with(&c, tau, criterion)?;
                    Ok((split(&d.approximation()), d.rank, d.singular_values.clone()))
                })
                .collect::<Result<Vec<_>>>()?;
            let mut entries = Vec::with_capacity(parts.len());
            let mut ranks = Vec::with_capacity(parts.len());
            let mut spectra = Vec::with_capacity(parts.len());
            for (e, l, s) in parts {
                entries.push(e);
                ranks.push(l);
                spectra.push(s);
            }
            Ok(TruncatedStack {
                stack: SensitivityStack { entries, ..stack.clone() },
                mode,
                ranks,
                spectra,
            })
        }
        TruncationMode::Global => {
            let m = stack.dim();
            let n = stack.len();
            let mut a = DMatrix::zeros(m * m, 3 * n);
            for (k, e) in stack.entries.iter().enumerate() {
                for (b, block) in e.blocks().into_iter().enumerate() {
                    a.column_mut(b * n + k).copy_from_slice(block.as_slice());
                }
            }
            let d = tsvd_with(&a, tau, criterion)?;
            let t = d.approximation();
            let col = |j: usize| DMatrix::from_column_slice(m, m, t.column(j).as_slice());
            let entries = (0..n)
                .map(|k| RegionSensitivity {
                    lambda: col(k),
                    mu: col(n + k),
                    rho: col(2 * n + k),
                })
                .collect();
            Ok(TruncatedStack {
                stack: SensitivityStack { entries, ..stack.clone() },
                mode,
                ranks: vec![d.rank],
                spectra: vec![d.singular_values.clone()],
            })
        }
    }
}

/// Constraints the combined solve uses, always built from untruncated matrices.
#[derive(Debug, Clone)]
pub enum CombinedConstraints {
    Single(BoxConstraints),
    Disjoint(Box<[BoxConstraints; 3]>),
}

pub fn combined_reconstruct(
    truncated: &TruncatedStack,
    data: &DMatrix<f64>,
    constraints: &CombinedConstraints,
    opts: &SolverOptions,
) -> Result<ReconstructionResult> {
    match constraints {
        CombinedConstraints::Single(c) => minimize_single_support(&truncated.stack, data, c, opts),
        CombinedConstraints::Disjoint(c) => minimize_disjoint_supports(&truncated.stack, data, c, opts),
    }
}
