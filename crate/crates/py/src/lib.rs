//! Python bindings. Matrices cross the boundary as lists of rows.

use std::path::PathBuf;

use monoelast::config::{ExperimentConfig, Support};
use monoelast::constrained;
use monoelast::experiment::{self, Setup};
use monoelast::fem::MaterialField;
use monoelast::mesh::{self, MeshScheme};
use monoelast::monotonicity;
use monoelast::ntd;
use monoelast::tsvd::{tsvd_with, EnergyCriterion};
use nalgebra::DMatrix;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

fn err(e: monoelast::Error) -> PyErr {
    if e.is_config() || matches!(e.root(), monoelast::Error::InvalidArgument(_)) {
        PyValueError::new_err(e.to_string())
    } else {
        PyRuntimeError::new_err(e.to_string())
    }
}

fn to_matrix(rows: Vec<Vec<f64>>) -> PyResult<DMatrix<f64>> {
    let n = rows.len();
    let m = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != m) {
        return Err(PyValueError::new_err("ragged matrix rows"));
    }
    Ok(DMatrix::from_fn(n, m, |i, j| rows[i][j]))
}

fn to_rows(a: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..a.nrows()).map(|i| a.row(i).iter().copied().collect()).collect()
}

fn parse_support(s: &str) -> PyResult<Support> {
    Support::parse(s).ok_or_else(|| PyValueError::new_err(format!("unknown support `{s}`")))
}

/// Nodes and triangles of the structured unit-square mesh.
#[pyfunction]
#[pyo3(signature = (n, scheme = "right"))]
fn generate_mesh(n: usize, scheme: &str) -> PyResult<(Vec<[f64; 2]>, Vec<[usize; 3]>)> {
    let s = MeshScheme::parse(scheme).ok_or_else(|| PyValueError::new_err(format!("unknown scheme `{scheme}`")))?;
    let m = mesh::generate_unit_square_mesh(n, s).map_err(err)?;
    Ok((m.nodes().to_vec(), m.triangles().to_vec()))
}

/// NtD matrix of a uniform material with `m` boundary patches.
#[pyfunction]
fn ntd_matrix(n: usize, m: usize, lam: f64, mu: f64, rho: f64) -> PyResult<Vec<Vec<f64>>> {
    let mesh = mesh::generate_unit_square_mesh(n, MeshScheme::RightDiagonal).map_err(err)?;
    let patches = mesh::partition_neumann_boundary(&mesh, m).map_err(err)?;
    let basis = ntd::build_load_basis(&mesh, &patches).map_err(err)?;
    let mat = MaterialField::uniform(mesh.num_elements(), lam, mu, rho).map_err(err)?;
    Ok(to_rows(&ntd::assemble_ntd(&mesh, &mat, &basis).map_err(err)?.matrix))
}

#[pyfunction]
fn admissible_constants(l0: f64, l1: f64, m0: f64, m1: f64, r0: f64, r1: f64) -> PyResult<(f64, f64, f64)> {
    let c = monotonicity::admissible_constants(l0, l1, m0, m1, r0, r1).map_err(err)?;
    Ok((c.c_lambda, c.c_mu, c.c_rho))
}

/// `(a_max, b_max, c_max, tau1, tau2)`.
#[pyfunction]
fn compute_box_bounds(l0: f64, m0: f64, r0: f64, lmin: f64, mmin: f64, rmin: f64) -> PyResult<(f64, f64, f64, f64, f64)> {
    let b = constrained::compute_box_bounds(l0, m0, r0, lmin, mmin, rmin).map_err(err)?;
    Ok((b.a_max, b.b_max, b.c_max, b.tau1, b.tau2))
}

#[pyfunction]
#[pyo3(signature = (u, t, cap = 1e6))]
fn compute_beta(u: Vec<Vec<f64>>, t: Vec<Vec<f64>>, cap: f64) -> PyResult<f64> {
    constrained::compute_beta(&to_matrix(u)?, &to_matrix(t)?, cap).map_err(err)
}

/// `(singular values, retained rank, rank-l approximation)`.
#[pyfunction]
#[pyo3(signature = (a, tau, criterion = "linear"))]
fn tsvd(a: Vec<Vec<f64>>, tau: f64, criterion: &str) -> PyResult<(Vec<f64>, usize, Vec<Vec<f64>>)> {
    let crit = EnergyCriterion::parse(criterion)
        .ok_or_else(|| PyValueError::new_err(format!("unknown criterion `{criterion}`")))?;
    let d = tsvd_with(&to_matrix(a)?, tau, crit).map_err(err)?;
    Ok((d.singular_values.clone(), d.rank, to_rows(&d.approximation())))
}

#[pyfunction]
fn jaccard(mask: Vec<bool>, truth: Vec<bool>) -> PyResult<f64> {
    experiment::score_jaccard(&mask, &truth).map_err(err)
}

/// The default configuration as text.
#[pyfunction]
fn default_config() -> String {
    ExperimentConfig::default().to_text()
}

/// Runs the configured method and returns `(method, mask, jaccard)` rows.
#[pyfunction]
#[pyo3(signature = (config_text, out = None))]
fn run_experiment(config_text: &str, out: Option<PathBuf>) -> PyResult<Vec<(String, String, f64)>> {
    let mut c = ExperimentConfig::parse(config_text).map_err(err)?;
    if let Some(o) = out {
        c.out = o;
    }
    Ok(experiment::run_experiment(&c).map_err(err)?.scores)
}

/// Forward data and sensitivities for one configuration, kept in memory.
#[pyclass(frozen)]
struct Experiment {
    setup: Setup,
}

#[pymethods]
impl Experiment {
    #[new]
    #[pyo3(signature = (config_text = None))]
    fn new(config_text: Option<&str>) -> PyResult<Self> {
        let c = match config_text {
            Some(t) => ExperimentConfig::parse(t).map_err(err)?,
            None => ExperimentConfig::default(),
        };
        Ok(Experiment {
            setup: Setup::new(&c).map_err(err)?,
        })
    }

    #[getter]
    fn num_elements(&self) -> usize {
        self.setup.mesh.num_elements()
    }

    #[getter]
    fn pixel_shape(&self) -> (usize, usize) {
        (self.setup.grid.nx, self.setup.grid.ny)
    }

    /// `U = Λ̄₀ − Λ̄`.
    fn gap(&self) -> Vec<Vec<f64>> {
        to_rows(&self.setup.gap)
    }

    /// `(U^δ, realized noise norm)`.
    fn measure(&self, delta: f64, seed: u64) -> PyResult<(Vec<Vec<f64>>, f64)> {
        let m = self.setup.measure(delta, seed).map_err(err)?;
        Ok((to_rows(&m.data), m.abs_noise))
    }

    /// `(per-ball marks, pixel raster)`.
    #[pyo3(signature = (delta = 0.0, seed = 1))]
    fn mono_test(&self, delta: f64, seed: u64) -> PyResult<(Vec<bool>, Vec<bool>)> {
        let m = self.setup.measure(delta, seed).map_err(err)?;
        let out = self.setup.mono_test(&m).map_err(err)?;
        Ok((out.marks.marked(), out.raster))
    }

    /// `(coefficients per block, masks per block, objective)`.
    #[pyo3(signature = (delta = 0.0, seed = 1, support = "single"))]
    fn constrained(&self, delta: f64, seed: u64, support: &str) -> PyResult<(Vec<Vec<f64>>, Vec<Vec<bool>>, f64)> {
        let m = self.setup.measure(delta, seed).map_err(err)?;
        let r = self.setup.constrained(&m, parse_support(support)?).map_err(err)?.result;
        Ok((r.coefficients, r.masks, r.objective))
    }

    #[pyo3(signature = (delta = 0.0, seed = 1, support = "single"))]
    fn combined(&self, delta: f64, seed: u64, support: &str) -> PyResult<(Vec<Vec<f64>>, Vec<Vec<bool>>, f64)> {
        let m = self.setup.measure(delta, seed).map_err(err)?;
        let tr = self.setup.truncate().map_err(err)?;
        let r = self.setup.combined(&m, parse_support(support)?, &tr).map_err(err)?.result;
        Ok((r.coefficients, r.masks, r.objective))
    }

    #[pyo3(signature = (support = "single"))]
    fn truth_masks(&self, support: &str) -> PyResult<Vec<Vec<bool>>> {
        Ok(self.setup.truth_masks(parse_support(support)?))
    }

    #[pyo3(signature = (masks, support = "single"))]
    fn score(&self, masks: Vec<Vec<bool>>, support: &str) -> PyResult<Vec<f64>> {
        self.setup.score(&masks, parse_support(support)?).map_err(err)
    }
}

#[pymodule]
fn monoelast_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(generate_mesh, m)?)?;
    m.add_function(wrap_pyfunction!(ntd_matrix, m)?)?;
    m.add_function(wrap_pyfunction!(admissible_constants, m)?)?;
    m.add_function(wrap_pyfunction!(compute_box_bounds, m)?)?;
    m.add_function(wrap_pyfunction!(compute_beta, m)?)?;
    m.add_function(wrap_pyfunction!(tsvd, m)?)?;
    m.add_function(wrap_pyfunction!(jaccard, m)?)?;
    m.add_function(wrap_pyfunction!(default_config, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    m.add_class::<Experiment>()?;
    Ok(())
}
