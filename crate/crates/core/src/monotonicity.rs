//! Linearized monotonicity test: a test ball `B` is marked as inside the
//! inclusion when
//!
//! ```text
//! noiseless:  U − (C^λ T^λ_B + C^μ T^μ_B + C^ρ T^ρ_B)           ⪰ 0
//! noisy:      −(C^λ T^λ_B + C^μ T^μ_B + C^ρ T^ρ_B) − Λ̄^δ + δI   ≻ 0
//! ```
//!
//! where `U = Λ̄₀ − Λ̄` and `Λ̄^δ = Λ̄ − Λ̄₀ + noise`.

use std::fmt::Write as _;

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{sym_eigenvalues, symmetrize};
use crate::mesh::{PixelGrid, Point, RegionSet};
use crate::sensitivity::SensitivityStack;

/// Relative eigenvalue floor of the noiseless test, scaled by `‖M‖₂`.
pub const NOISELESS_EIG_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TestConstants {
    pub c_lambda: f64,
    pub c_mu: f64,
    pub c_rho: f64,
}

impl TestConstants {
    pub fn new(c_lambda: f64, c_mu: f64, c_rho: f64) -> Result<Self> {
        let all = [c_lambda, c_mu, c_rho];
        if all.iter().any(|c| !(*c >= 0.0) || !c.is_finite()) {
            return Err(Error::InvalidContrast(format!(
                "test constants {all:?} must be finite and nonnegative"
            )));
        }
        if !(c_lambda + c_mu + c_rho > 0.0) {
            return Err(Error::InvalidContrast("test constants must have a positive sum".into()));
        }
        Ok(TestConstants { c_lambda, c_mu, c_rho })
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.c_lambda, self.c_mu, self.c_rho]
    }

    /// Whether every constant respects its bound `(p₀/p₁)(p₁ − p₀)`.
    pub fn is_admissible_for(&self, maximal: &TestConstants) -> bool {
        self.c_lambda <= maximal.c_lambda && self.c_mu <= maximal.c_mu && self.c_rho <= maximal.c_rho
    }
}

/// Largest admissible constants: `C^p = (p₀/p₁)(p₁ − p₀)` per parameter.
pub fn admissible_constants(
    lambda0: f64,
    lambda1: f64,
    mu0: f64,
    mu1: f64,
    rho0: f64,
    rho1: f64,
) -> Result<TestConstants> {
    let pairs = [("lambda", lambda0, lambda1), ("mu", mu0, mu1), ("rho", rho0, rho1)];
    let mut c = [0.0; 3];
    for (k, (name, p0, p1)) in pairs.into_iter().enumerate() {
        if !(p0 > 0.0) || !(p1 > 0.0) {
            return Err(Error::InvalidContrast(format!("{name} values must be positive")));
        }
        if p1 < p0 {
            return Err(Error::InvalidContrast(format!(
                "{name}: inclusion value {p1} is below background {p0}"
            )));
        }
        c[k] = p0 / p1 * (p1 - p0);
    }
    TestConstants::new(c[0], c[1], c[2])
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BallMark {
    pub min_eigenvalue: f64,
    /// Threshold the minimum eigenvalue was compared against.
    pub tolerance: f64,
    pub marked: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MarkedBallSet {
    pub marks: Vec<BallMark>,
    /// Noisy test uses strict positivity, the noiseless one `≥ −tol`.
    pub strict: bool,
}

impl MarkedBallSet {
    pub fn marked(&self) -> Vec<bool> {
        self.marks.iter().map(|m| m.marked).collect()
    }

    pub fn count(&self) -> usize {
        self.marks.iter().filter(|m| m.marked).count()
    }

    /// Pixel mask: a pixel is set when its center lies in a marked ball.
    pub fn rasterize(&self, balls: &[(Point, f64)], grid: &PixelGrid) -> Vec<bool> {
        grid.centers()
            .iter()
            .map(|p| {
                balls.iter().zip(&self.marks).any(|((c, r), m)| {
                    m.marked && (p[0] - c[0]).powi(2) + (p[1] - c[1]).powi(2) < r * r
                })
            })
            .collect()
    }

    /// CSV rows `x,y,radius,min_eigenvalue,marked`.
    pub fn to_csv(&self, balls: &[(Point, f64)]) -> String {
        let mut out = String::from("x,y,radius,min_eigenvalue,marked\n");
        for ((c, r), m) in balls.iter().zip(&self.marks) {
            writeln!(out, "{},{},{},{:e},{}", c[0], c[1], r, m.min_eigenvalue, m.marked as u8).unwrap();
        }
        out
    }
}

fn check_dims(data: &DMatrix<f64>, stack: &SensitivityStack) -> Result<()> {
    if data.nrows() != data.ncols() || (!stack.is_empty() && stack.dim() != data.nrows()) {
        return Err(Error::IncompatibleOperands(format!(
            "data is {}x{}, sensitivities are {}x{}",
            data.nrows(),
            data.ncols(),
            stack.dim(),
            stack.dim()
        )));
    }
    Ok(())
}

/// Test matrix of the noiseless variant for one region.
pub fn noiseless_test_matrix(u: &DMatrix<f64>, stack: &SensitivityStack, k: usize, consts: &TestConstants) -> DMatrix<f64> {
    symmetrize(&(u - stack.entries[k].combine(consts.as_array())))
}

pub fn linearized_test_noiseless(
    u: &DMatrix<f64>,
    stack: &SensitivityStack,
    consts: &TestConstants,
) -> Result<MarkedBallSet> {
    check_dims(u, stack)?;
    let marks = (0..stack.len())
        .into_par_iter()
        .map(|k| {
            let ev = sym_eigenvalues(&noiseless_test_matrix(u, stack, k, consts));
            let norm = ev.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            let min = ev.first().copied().unwrap_or(0.0);
            let tolerance = -NOISELESS_EIG_TOL * norm;
            BallMark {
                min_eigenvalue: min,
                tolerance,
                marked: min >= tolerance,
            }
        })
        .collect();
    Ok(MarkedBallSet { marks, strict: false })
}

/// `noisy_difference` is `Λ̄^δ = Λ̄ − Λ̄₀ + noise`; `delta` is the absolute
/// shift added to the diagonal.
pub fn linearized_test_noisy(
    noisy_difference: &DMatrix<f64>,
    stack: &SensitivityStack,
    consts: &TestConstants,
    delta: f64,
) -> Result<MarkedBallSet> {
    check_dims(noisy_difference, stack)?;
    if !(delta >= 0.0) {
        return Err(Error::InvalidArgument(format!("noise shift {delta} must be ≥ 0")));
    }
    let m = noisy_difference.nrows();
    let base = symmetrize(&(DMatrix::identity(m, m) * delta - noisy_difference));
    let marks = (0..stack.len())
        .into_par_iter()
        .map(|k| {
            let t = &base - stack.entries[k].combine(consts.as_array());
            let min = sym_eigenvalues(&t).first().copied().unwrap_or(0.0);
            BallMark {
                min_eigenvalue: min,
                tolerance: 0.0,
                marked: min > 0.0,
            }
        })
        .collect();
    Ok(MarkedBallSet { marks, strict: true })
}

/// Convenience for ball families exposing centers and radii.
pub fn ball_geometry(set: &dyn RegionSet) -> Vec<(Point, f64)> {
    set.regions()
        .iter()
        .map(|r| match *r {
            crate::mesh::Region::Ball { center, radius } => (center, radius),
            other => (other.center(), 0.0),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::Region;
    use crate::sensitivity::RegionSensitivity;

    fn stack_of(entries: Vec<RegionSensitivity>) -> SensitivityStack {
        let n = entries.len();
        SensitivityStack {
            entries,
            regions: vec![Region::Empty; n],
            background_id: "bg".into(),
            basis_id: "b".into(),
        }
    }

    #[test]
    fn maximal_constants() {
        let c = admissible_constants(1.0, 2.0, 1.0, 2.0, 1.0, 2.0).unwrap();
        assert_eq!(c.as_array(), [0.5, 0.5, 0.5]);
        let c = admissible_constants(1.0, 4.0, 1.0, 1.0, 1.0, 2.0).unwrap();
        assert_eq!(c.c_lambda, 0.75);
        assert_eq!(c.c_mu, 0.0);
    }

    #[test]
    fn constants_reject_bad_ordering() {
        assert!(matches!(
            admissible_constants(2.0, 1.0, 1.0, 2.0, 1.0, 2.0),
            Err(Error::InvalidContrast(_))
        ));
        assert!(admissible_constants(1.0, 1.0, 1.0, 1.0, 1.0, 1.0).is_err());
        assert!(TestConstants::new(-0.1, 1.0, 0.0).is_err());
    }

    #[test]
    fn no_inclusion_marks_nothing() {
        let m = 4;
        let t = DMatrix::from_fn(m, m, |i, j| 1.0 / (1.0 + i as f64 + j as f64));
        let entry = RegionSensitivity {
            lambda: t.clone(),
            mu: t.clone() * 0.5,
            rho: t * 0.1,
        };
        let stack = stack_of(vec![entry]);
        let consts = TestConstants::new(0.5, 0.5, 0.5).unwrap();
        let res = linearized_test_noiseless(&DMatrix::zeros(m, m), &stack, &consts).unwrap();
        assert!(!res.marks[0].marked);
        assert!(res.marks[0].min_eigenvalue < 0.0);
    }

    #[test]
    fn vacuous_ball_marked_iff_data_psd() {
        let m = 3;
        let stack = stack_of(vec![RegionSensitivity::zeros(m)]);
        let consts = TestConstants::new(0.5, 0.5, 0.5).unwrap();
        let psd = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, 0.5, 0.0]));
        assert!(linearized_test_noiseless(&psd, &stack, &consts).unwrap().marks[0].marked);
        let indef = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, -0.5, 0.0]));
        assert!(!linearized_test_noiseless(&indef, &stack, &consts).unwrap().marks[0].marked);
    }

    #[test]
    fn huge_shift_marks_everything() {
        let m = 3;
        let t = DMatrix::from_fn(m, m, |i, j| if i == j { 2.0 } else { 0.3 });
        let stack = stack_of(vec![
            RegionSensitivity { lambda: t.clone(), mu: t.clone(), rho: t.clone() };
            4
        ]);
        let consts = TestConstants::new(0.5, 0.5, 0.5).unwrap();
        let data = DMatrix::from_element(m, m, 0.01);
        let res = linearized_test_noisy(&data, &stack, &consts, 1e6).unwrap();
        assert_eq!(res.count(), 4);
    }

    #[test]
    fn dimension_mismatch() {
        let stack = stack_of(vec![RegionSensitivity::zeros(3)]);
        let consts = TestConstants::new(0.5, 0.5, 0.5).unwrap();
        assert!(matches!(
            linearized_test_noiseless(&DMatrix::zeros(4, 4), &stack, &consts),
            Err(Error::IncompatibleOperands(_))
        ));
    }
}
