//! Monotonicity-constrained least squares.
//!
//! The single-support problem is
//!
//! ```text
//! min ‖Σ_k ζ_k T_k − U‖²_F   over 0 ≤ ζ_k ≤ min(a_max, β_k),
//! T_k = T^λ_k + τ₁ T^μ_k + τ₂ T^ρ_k,
//! β_k = max{a > 0 : U ⪰ a T_k},
//! ```
//!
//! and the disjoint variant keeps one coefficient per parameter and pixel.
//! Both are box-constrained convex quadratics solved by a monotone
//! accelerated projected gradient method, followed by a few Newton steps on
//! the free variables.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{max_eigenvalue, sym_norm2, symmetrize};
use crate::sensitivity::SensitivityStack;

/// Factor applied to the parameter bound to cap an inactive `β_k`.
pub const BETA_CAP_FACTOR: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoxBounds {
    pub a_max: f64,
    pub b_max: f64,
    pub c_max: f64,
    pub tau1: f64,
    pub tau2: f64,
}

impl BoxBounds {
    pub fn maxima(&self) -> [f64; 3] {
        [self.a_max, self.b_max, self.c_max]
    }
}

/// `p_max = p₀ − p₀²/(p₀ + p_min)` for each parameter and `τ = b/a, c/a`.
pub fn compute_box_bounds(
    lambda0: f64,
    mu0: f64,
    rho0: f64,
    lambda_min: f64,
    mu_min: f64,
    rho_min: f64,
) -> Result<BoxBounds> {
    let args = [lambda0, mu0, rho0, lambda_min, mu_min, rho_min];
    if args.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
        return Err(Error::InvalidArgument(format!("box bound inputs {args:?} must be positive")));
    }
    let bound = |p0: f64, pmin: f64| p0 - p0 * p0 / (p0 + pmin);
    let a_max = bound(lambda0, lambda_min);
    let b_max = bound(mu0, mu_min);
    let c_max = bound(rho0, rho_min);
    if !(a_max > 0.0 && b_max > 0.0 && c_max > 0.0) {
        return Err(Error::InvalidArgument("box bounds underflow to zero".into()));
    }
    Ok(BoxBounds {
        a_max,
        b_max,
        c_max,
        tau1: b_max / a_max,
        tau2: c_max / a_max,
    })
}

/// Cholesky whitening of an SPD data matrix, reused across pixels.
#[derive(Debug, Clone)]
pub struct Whitener {
    l: DMatrix<f64>,
}

impl Whitener {
    pub fn new(u_pd: &DMatrix<f64>) -> Result<Self> {
        if u_pd.nrows() != u_pd.ncols() {
            return Err(Error::IncompatibleOperands("data matrix is not square".into()));
        }
        let chol = nalgebra::Cholesky::new(symmetrize(u_pd)).ok_or(Error::NotPositiveDefinite)?;
        Ok(Whitener { l: chol.l() })
    }

    /// `L⁻¹ T L⁻ᵀ`.
    pub fn whiten(&self, t: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if t.nrows() != self.l.nrows() || t.ncols() != self.l.ncols() {
            return Err(Error::IncompatibleOperands(format!(
                "sensitivity is {}x{}, data is {}x{}",
                t.nrows(),
                t.ncols(),
                self.l.nrows(),
                self.l.ncols()
            )));
        }
        let left = self
            .l
            .solve_lower_triangular(&symmetrize(t))
            .ok_or(Error::NotPositiveDefinite)?;
        let both = self
            .l
            .solve_lower_triangular(&left.transpose())
            .ok_or(Error::NotPositiveDefinite)?;
        Ok(symmetrize(&both))
    }

    /// `(β, capped)`, with `β = min(1/Θ_max, cap)` and `cap` when `Θ_max ≤ 0`.
    pub fn beta(&self, t: &DMatrix<f64>, cap: f64) -> Result<(f64, bool)> {
        let theta = max_eigenvalue(&self.whiten(t)?);
        if theta > 0.0 && 1.0 / theta < cap {
            Ok((1.0 / theta, false))
        } else {
            Ok((cap, true))
        }
    }
}

/// Largest `a` with `U_pd − a T ⪰ 0`, capped at `cap`.
pub fn compute_beta(u_pd: &DMatrix<f64>, t: &DMatrix<f64>, cap: f64) -> Result<f64> {
    Ok(Whitener::new(u_pd)?.beta(t, cap)?.0)
}

/// Upper bounds for one block of coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxConstraints {
    pub bounds: BoxBounds,
    /// Parameter bound this block is clipped to (`a_max`, `b_max` or `c_max`).
    pub p_max: f64,
    pub beta: Vec<f64>,
    pub capped: Vec<bool>,
    /// `min(p_max, β_k)`.
    pub upper: Vec<f64>,
}

impl BoxConstraints {
    fn from_matrices(bounds: BoxBounds, p_max: f64, u_pd: &DMatrix<f64>, mats: &[DMatrix<f64>]) -> Result<Self> {
        let w = Whitener::new(u_pd)?;
        let cap = BETA_CAP_FACTOR * p_max;
        let betas = mats
            .par_iter()
            .map(|t| w.beta(t, cap))
            .collect::<Result<Vec<_>>>()?;
        let beta: Vec<f64> = betas.iter().map(|b| b.0).collect();
        Ok(BoxConstraints {
            bounds,
            p_max,
            upper: beta.iter().map(|b| b.min(p_max)).collect(),
            capped: betas.iter().map(|b| b.1).collect(),
            beta,
        })
    }

    pub fn len(&self) -> usize {
        self.upper.len()
    }

    pub fn is_empty(&self) -> bool {
        self.upper.is_empty()
    }

    pub fn capped_count(&self) -> usize {
        self.capped.iter().filter(|c| **c).count()
    }
}

/// Bounds for `ζ` with `T_k = T^λ_k + τ₁T^μ_k + τ₂T^ρ_k`.
pub fn single_support_constraints(
    stack: &SensitivityStack,
    u_pd: &DMatrix<f64>,
    bounds: BoxBounds,
) -> Result<BoxConstraints> {
    BoxConstraints::from_matrices(bounds, bounds.a_max, u_pd, &stack.combined(bounds.tau1, bounds.tau2))
}

/// Per-parameter bounds, each `β` computed from that parameter's block alone.
pub fn disjoint_constraints(
    stack: &SensitivityStack,
    u_pd: &DMatrix<f64>,
    bounds: BoxBounds,
) -> Result<[BoxConstraints; 3]> {
    let maxima = bounds.maxima();
    let block = |p: usize| -> Result<BoxConstraints> {
        let mats: Vec<DMatrix<f64>> = stack.entries.iter().map(|e| e.blocks()[p].clone()).collect();
        BoxConstraints::from_matrices(bounds, maxima[p], u_pd, &mats)
    };
    Ok([block(0)?, block(1)?, block(2)?])
}

/// `U^δ + δI` for the noisy pipeline (`δ = 0` returns `U`).
pub fn shifted_data(u: &DMatrix<f64>, delta_abs: f64) -> DMatrix<f64> {
    u + DMatrix::identity(u.nrows(), u.ncols()) * delta_abs
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Relative projected-gradient tolerance.
    pub tol: f64,
    pub max_iter: usize,
    /// Newton refinement rounds on the free variables after the first-order phase.
    pub polish_rounds: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tol: 1e-8,
            max_iter: 5000,
            polish_rounds: 50,
        }
    }
}

/// `min ‖A x − u‖²` over `0 ≤ x ≤ upper`; columns of `A` are vectorized
/// matrices.
#[derive(Debug, Clone)]
pub struct BoxQp {
    a: DMatrix<f64>,
    u: DVector<f64>,
    upper: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub x: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
    pub projected_gradient: f64,
    /// `tol·(1 + ‖∇f(0)‖)`.
    pub threshold: f64,
    pub converged: bool,
    pub log: Vec<(usize, f64)>,
}

impl BoxQp {
    pub fn new(columns: &[&DMatrix<f64>], data: &DMatrix<f64>, upper: Vec<f64>) -> Result<Self> {
        if columns.len() != upper.len() {
            return Err(Error::IncompatibleOperands(format!(
                "{} columns but {} bounds",
                columns.len(),
                upper.len()
            )));
        }
        if let Some(bad) = upper.iter().find(|v| !(**v >= 0.0) || !v.is_finite()) {
            return Err(Error::InvalidArgument(format!("upper bound {bad} is not a finite nonnegative value")));
        }
        let len = data.len();
        let mut a = DMatrix::zeros(len, columns.len());
        for (j, c) in columns.iter().enumerate() {
            if c.shape() != data.shape() {
                return Err(Error::IncompatibleOperands(format!(
                    "column {j} has shape {:?}, data {:?}",
                    c.shape(),
                    data.shape()
                )));
            }
            a.column_mut(j).copy_from_slice(c.as_slice());
        }
        Ok(BoxQp {
            a,
            u: DVector::from_column_slice(data.as_slice()),
            upper,
        })
    }

    pub fn len(&self) -> usize {
        self.upper.len()
    }

    pub fn is_empty(&self) -> bool {
        self.upper.is_empty()
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn objective(&self, x: &[f64]) -> f64 {
        (&self.a * DVector::from_column_slice(x) - &self.u).norm_squared()
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let r = &self.a * DVector::from_column_slice(x) - &self.u;
        (self.a.tr_mul(&r) * 2.0).as_slice().to_vec()
    }

    fn project(&self, x: &mut DVector<f64>) {
        for (v, u) in x.iter_mut().zip(&self.upper) {
            *v = v.clamp(0.0, *u);
        }
    }

    /// Norm of the gradient restricted to directions that stay feasible.
    pub fn projected_gradient_norm(&self, x: &[f64], g: &[f64]) -> f64 {
        x.iter()
            .zip(g)
            .zip(&self.upper)
            .map(|((xi, gi), ui)| {
                let pg = if *ui <= 0.0 {
                    0.0
                } else if *xi <= 0.0 {
                    gi.min(0.0)
                } else if *xi >= *ui {
                    gi.max(0.0)
                } else {
                    *gi
                };
                pg * pg
            })
            .sum::<f64>()
            .sqrt()
    }

    /// Upper estimate of the gradient Lipschitz constant `2‖A‖₂²`.
    pub fn lipschitz(&self) -> f64 {
        let n = self.len();
        if n == 0 {
            return 0.0;
        }
        let mut v = DVector::from_element(n, 1.0 / (n as f64).sqrt());
        let mut est = 0.0;
        for _ in 0..200 {
            let w = self.a.tr_mul(&(&self.a * &v));
            let norm = w.norm();
            if norm == 0.0 {
                return 0.0;
            }
            let next = norm;
            v = w / norm;
            if (next - est).abs() <= 1e-12 * next {
                est = next;
                break;
            }
            est = next;
        }
        2.0 * est * 1.02
    }

    pub fn solve(&self, opts: &SolverOptions) -> Result<QpSolution> {
        let n = self.len();
        let g0 = self.gradient(&vec![0.0; n]);
        let threshold = opts.tol * (1.0 + g0.iter().map(|v| v * v).sum::<f64>().sqrt());
        let lip = self.lipschitz();
        let mut x = DVector::zeros(n);
        let mut fx = self.u.norm_squared();
        let mut log = vec![(0usize, fx)];
        let mut iterations = 0;
        let mut pg = self.projected_gradient_norm(x.as_slice(), &g0);
        let mut converged = pg <= threshold || lip == 0.0;
        if !converged {
            let step = 1.0 / lip;
            let mut y = x.clone();
            let mut t = 1.0f64;
            while iterations < opts.max_iter {
                iterations += 1;
                let ry = &self.a * &y - &self.u;
                let gy = self.a.tr_mul(&ry) * 2.0;
                let mut z = &y - gy * step;
                self.project(&mut z);
                let fz = (&self.a * &z - &self.u).norm_squared();
                if !fz.is_finite() {
                    return Err(Error::NumericalFailure("non-finite objective".into()));
                }
                let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
                let x_prev = x.clone();
                if fz <= fx {
                    x = z.clone();
                    fx = fz;
                }
                y = &x + (&z - &x) * (t / t_next) + (&x - &x_prev) * ((t - 1.0) / t_next);
                self.project(&mut y);
                t = t_next;
                log.push((iterations, fx));
                if iterations % 10 == 0 || iterations == opts.max_iter {
                    let g = self.gradient(x.as_slice());
                    pg = self.projected_gradient_norm(x.as_slice(), &g);
                    if pg <= threshold {
                        converged = true;
                        break;
                    }
                }
            }
        }
        if !converged {
            for _ in 0..opts.polish_rounds {
                match self.newton_step(&x, fx)? {
                    Some((xn, fxn)) => {
                        x = xn;
                        fx = fxn;
                        iterations += 1;
                        log.push((iterations, fx));
                    }
                    None => break,
                }
                let g = self.gradient(x.as_slice());
                pg = self.projected_gradient_norm(x.as_slice(), &g);
                if pg <= threshold {
                    converged = true;
                    break;
                }
            }
        }
        let g = self.gradient(x.as_slice());
        pg = self.projected_gradient_norm(x.as_slice(), &g);
        Ok(QpSolution {
            objective: fx,
            x: x.as_slice().to_vec(),
            iterations,
            projected_gradient: pg,
            threshold,
            converged: converged || pg <= threshold,
            log,
        })
    }

    /// Minimum-norm least-squares step on the free set, shortened to stay
    /// in the box. Returns `None` when it does not lower the objective.
    fn newton_step(&self, x: &DVector<f64>, fx: f64) -> Result<Option<(DVector<f64>, f64)>> {
        let g = self.gradient(x.as_slice());
        let free: Vec<usize> = (0..self.len())
            .filter(|&i| {
                let (xi, ui) = (x[i], self.upper[i]);
                ui > 0.0 && ((xi > 0.0 && xi < ui) || (xi <= 0.0 && g[i] < 0.0) || (xi >= ui && g[i] > 0.0))
            })
            .collect();
        if free.is_empty() {
            return Ok(None);
        }
        let r = &self.a * x - &self.u;
        let af = self.a.select_columns(free.iter());
        let svd = af.svd(true, true);
        let eps = 1e-13 * svd.singular_values.max();
        let d = svd
            .solve(&(-r), eps)
            .map_err(|e| Error::NumericalFailure(format!("least-squares step: {e}")))?;
        let mut step = 1.0f64;
        for (k, &i) in free.iter().enumerate() {
            if d[k] > 0.0 {
                step = step.min((self.upper[i] - x[i]) / d[k]);
            } else if d[k] < 0.0 {
                step = step.min(-x[i] / d[k]);
            }
        }
        if step <= 0.0 {
            // Blocked at a bound: take the projected full step instead.
            step = 1.0;
        }
        let mut xn = x.clone();
        for (k, &i) in free.iter().enumerate() {
            xn[i] += step * d[k];
        }
        self.project(&mut xn);
        let fxn = (&self.a * &xn - &self.u).norm_squared();
        if !fxn.is_finite() {
            return Err(Error::NumericalFailure("non-finite objective".into()));
        }
        Ok(if fxn < fx { Some((xn, fxn)) } else { None })
    }

    /// Whether `x` beats every point of a uniform random sample of the box.
    pub fn beats_random_probes(&self, x: &[f64], probes: usize, seed: u64) -> bool {
        let f = self.objective(x);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..probes).all(|_| {
            let p: Vec<f64> = self.upper.iter().map(|u| rng.random::<f64>() * u).collect();
            f <= self.objective(&p) * (1.0 + 1e-12)
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReconstructionResult {
    /// `["zeta"]` or `["alpha", "beta", "gamma"]`.
    pub names: Vec<&'static str>,
    /// One coefficient vector per name, indexed by pixel.
    pub coefficients: Vec<Vec<f64>>,
    pub upper: Vec<Vec<f64>>,
    pub objective: f64,
    pub iterations: usize,
    pub projected_gradient: f64,
    pub converged: bool,
    pub threshold: Option<f64>,
    pub masks: Vec<Vec<bool>>,
    pub log: Vec<(usize, f64)>,
}

impl ReconstructionResult {
    fn from_solution(names: Vec<&'static str>, upper: Vec<Vec<f64>>, sol: QpSolution) -> Self {
        let len = upper.first().map_or(0, Vec::len);
        let coefficients = sol.x.chunks(len.max(1)).map(<[f64]>::to_vec).collect();
        ReconstructionResult {
            names,
            coefficients,
            upper,
            objective: sol.objective,
            iterations: sol.iterations,
            projected_gradient: sol.projected_gradient,
            converged: sol.converged,
            threshold: None,
            masks: Vec::new(),
            log: sol.log,
        }
    }

    pub fn is_feasible(&self) -> bool {
        self.coefficients
            .iter()
            .zip(&self.upper)
            .all(|(c, u)| c.iter().zip(u).all(|(x, ub)| *x >= 0.0 && x <= ub))
    }

    /// Sets `masks` from `fraction` of each block's maximum.
    pub fn threshold(&mut self, fraction: f64) -> Result<&[Vec<bool>]> {
        self.masks = threshold_support(&self.coefficients, fraction)?;
        self.threshold = Some(fraction);
        Ok(&self.masks)
    }

    /// CSV rows `pixel,x,y,<names...>,<mask bits...>`.
    pub fn to_csv(&self, centers: &[[f64; 2]]) -> String {
        let mut out = String::from("pixel,x,y");
        for n in &self.names {
            write!(out, ",{n}").unwrap();
        }
        for n in &self.names {
            write!(out, ",mask_{n}").unwrap();
        }
        out.push('\n');
        for (k, c) in centers.iter().enumerate() {
            write!(out, "{k},{},{}", c[0], c[1]).unwrap();
            for v in &self.coefficients {
                write!(out, ",{:e}", v[k]).unwrap();
            }
            for mask in &self.masks {
                write!(out, ",{}", mask[k] as u8).unwrap();
            }
            out.push('\n');
        }
        out
    }

    pub fn log_csv(&self) -> String {
        let mut out = String::from("iteration,objective\n");
        for (i, f) in &self.log {
            writeln!(out, "{i},{f:e}").unwrap();
        }
        out
    }
}

/// Per block: pixel marked iff `value ≥ fraction·max`; an all-zero block
/// gives an empty mask.
pub fn threshold_support(coefficients: &[Vec<f64>], fraction: f64) -> Result<Vec<Vec<bool>>> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::InvalidArgument(format!("threshold fraction {fraction} not in (0,1)")));
    }
    coefficients
        .iter()
        .map(|c| {
            if c.iter().any(|v| !v.is_finite()) {
                return Err(Error::NumericalFailure("non-finite coefficient".into()));
            }
            let max = c.iter().fold(0.0f64, |a, v| a.max(*v));
            Ok(c.iter().map(|v| max > 0.0 && *v >= fraction * max).collect())
        })
        .collect()
}

/// Solves the common-support problem; `data` is `U` or `U^δ`.
pub fn minimize_single_support(
    stack: &SensitivityStack,
    data: &DMatrix<f64>,
    constraints: &BoxConstraints,
    opts: &SolverOptions,
) -> Result<ReconstructionResult> {
    if constraints.len() != stack.len() {
        return Err(Error::IncompatibleOperands("constraints and stack differ in length".into()));
    }
    let mats = stack.combined(constraints.bounds.tau1, constraints.bounds.tau2);
    let cols: Vec<&DMatrix<f64>> = mats.iter().collect();
    let qp = BoxQp::new(&cols, data, constraints.upper.clone())?;
    let sol = qp.solve(opts)?;
    Ok(ReconstructionResult::from_solution(vec!["zeta"], vec![constraints.upper.clone()], sol))
}

/// Solves for independent `(α, β, γ)` per pixel.
pub fn minimize_disjoint_supports(
    stack: &SensitivityStack,
    data: &DMatrix<f64>,
    constraints: &[BoxConstraints; 3],
    opts: &SolverOptions,
) -> Result<ReconstructionResult> {
    if constraints.iter().any(|c| c.len() != stack.len()) {
        return Err(Error::IncompatibleOperands("constraints and stack differ in length".into()));
    }
    let mut cols: Vec<&DMatrix<f64>> = Vec::with_capacity(3 * stack.len());
    for p in 0..3 {
        cols.extend(stack.entries.iter().map(|e| e.blocks()[p]));
    }
    let upper: Vec<f64> = constraints.iter().flat_map(|c| c.upper.iter().copied()).collect();
    let qp = BoxQp::new(&cols, data, upper)?;
    let sol = qp.solve(opts)?;
    Ok(ReconstructionResult::from_solution(
        vec!["alpha", "beta", "gamma"],
        constraints.iter().map(|c| c.upper.clone()).collect(),
        sol,
    ))
}

/// Largest violation `max_k (−λ_min(U_pd − upper_k T_k))⁺ / ‖U_pd‖₂`.
pub fn beta_consistency(u_pd: &DMatrix<f64>, mats: &[DMatrix<f64>], upper: &[f64]) -> f64 {
    let scale = sym_norm2(u_pd).max(f64::MIN_POSITIVE);
    mats.par_iter()
        .zip(upper)
        .map(|(t, a)| (-crate::linalg::min_eigenvalue(&(u_pd - t * *a))).max(0.0) / scale)
        .reduce(|| 0.0, f64::max)
}
