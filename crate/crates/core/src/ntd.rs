//! Boundary load basis, Galerkin-projected Neumann-to-Dirichlet matrices,
//! gap matrices and the measurement noise model.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fem::{assemble_system, solve_forward, DisplacementField, ForwardLoad, MaterialField, StiffnessSystem};
use crate::linalg::{matrix_from_text, matrix_to_text, symmetrize};
use crate::mesh::{BoundaryPatchSet, Mesh};

/// `m` unit-norm normal loads, `g_l = ν χ_l / √|Γ_l|`, one per patch.
#[derive(Debug, Clone)]
pub struct LoadBasis {
    /// Per load: `(boundary edge, constant traction)` pairs.
    loads: Vec<Vec<(usize, [f64; 2])>>,
    gram: DMatrix<f64>,
    id: String,
}

impl LoadBasis {
    pub fn len(&self) -> usize {
        self.loads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.loads.is_empty()
    }

    pub fn loads(&self) -> &[Vec<(usize, [f64; 2])>] {
        &self.loads
    }

    /// `∫_{Γ_N} g_i·g_j ds`.
    pub fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }

    /// Identifies the patch geometry; matrices built on different bases
    /// cannot be combined.
    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn forward_load(&self, mesh: &Mesh, l: usize) -> ForwardLoad {
        let mut load = ForwardLoad::zeros(mesh);
        for &(edge, g) in &self.loads[l] {
            load.add_edge_traction(mesh, edge, g);
        }
        load
    }
}

pub fn build_load_basis(mesh: &Mesh, patches: &BoundaryPatchSet) -> Result<LoadBasis> {
    let mut loads = Vec::with_capacity(patches.len());
    for (l, patch) in patches.patches().iter().enumerate() {
        let length: f64 = patch.edges.iter().map(|&e| mesh.boundary_edges()[e].length).sum();
        if !(length > 0.0) {
            return Err(Error::InvalidPatch {
                index: l,
                message: "patch has zero length".into(),
            });
        }
        let scale = 1.0 / length.sqrt();
        loads.push(
            patch
                .edges
                .iter()
                .map(|&e| {
                    let nu = mesh.boundary_edges()[e].side.outward_normal();
                    (e, [nu[0] * scale, nu[1] * scale])
                })
                .collect::<Vec<_>>(),
        );
    }
    let m = loads.len();
    let mut gram = DMatrix::zeros(m, m);
    for i in 0..m {
        for j in 0..m {
            let mut s = 0.0;
            for &(ei, gi) in &loads[i] {
                for &(ej, gj) in &loads[j] {
                    if ei == ej {
                        s += (gi[0] * gj[0] + gi[1] * gj[1]) * mesh.boundary_edges()[ei].length;
                    }
                }
            }
            gram[(i, j)] = s;
        }
    }
    let id = patches
        .breakpoints()
        .iter()
        .map(|b| format!("{b:.6}"))
        .collect::<Vec<_>>()
        .join(":");
    let id = format!("m{m}@{}", fnv(&id));
    Ok(LoadBasis { loads, gram, id })
}

fn fnv(s: &str) -> String {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in s.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    format!("{h:016x}")
}

/// `m × m` Galerkin projection of the NtD operator for one material field.
#[derive(Debug, Clone, PartialEq)]
pub struct NtdMatrix {
    pub matrix: DMatrix<f64>,
    pub material_id: String,
    pub basis_id: String,
}

impl NtdMatrix {
    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn to_text(&self, seed: Option<u64>) -> String {
        matrix_to_text(
            &[
                ("m", self.dim().to_string()),
                ("material", self.material_id.clone()),
                ("seed", seed.map_or("none".into(), |s| s.to_string())),
                ("basis", self.basis_id.clone()),
            ],
            &self.matrix,
        )
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let (header, matrix) = matrix_from_text(text)?;
        let m: usize = header
            .get("m")
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| Error::Parse("NtD header lacks m".into()))?;
        if matrix.nrows() != m || matrix.ncols() != m {
            return Err(Error::Parse(format!(
                "NtD header says m={m}, body is {}x{}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        Ok(NtdMatrix {
            matrix,
            material_id: header.get("material").cloned().unwrap_or_default(),
            basis_id: header.get("basis").cloned().unwrap_or_default(),
        })
    }
}

/// Forward solutions `u^{g_l}` for every basis load, plus the system that
/// produced them.
#[derive(Debug, Clone)]
pub struct BasisSolutions {
    pub system: StiffnessSystem,
    pub loads: Vec<ForwardLoad>,
    pub displacements: Vec<DisplacementField>,
}

/// Solves the forward problem for all basis loads against one factorization.
pub fn solve_basis(mesh: &Mesh, material: &MaterialField, basis: &LoadBasis) -> Result<BasisSolutions> {
    let system = assemble_system(mesh, material)?;
    let loads: Vec<ForwardLoad> = (0..basis.len()).map(|l| basis.forward_load(mesh, l)).collect();
    let displacements = loads
        .par_iter()
        .map(|load| solve_forward(&system, load))
        .collect::<Result<Vec<_>>>()?;
    Ok(BasisSolutions {
        system,
        loads,
        displacements,
    })
}

/// Relative tolerance for the volume-form/boundary-form cross-check.
pub const FORM_AGREEMENT_TOL: f64 = 1e-9;

/// NtD matrix from precomputed basis solutions. Entries are the boundary
/// pairing `∫ g_i·u^{g_j}`, checked against the energy form `a(u^{g_i}, u^{g_j})`.
pub fn ntd_from_solutions(sol: &BasisSolutions, material: &MaterialField, basis: &LoadBasis) -> Result<NtdMatrix> {
    let m = sol.displacements.len();
    let mut boundary = DMatrix::zeros(m, m);
    let mut volume = DMatrix::zeros(m, m);
    for i in 0..m {
        for j in 0..m {
            boundary[(i, j)] = sol.loads[i].work(&sol.displacements[j]);
            if j >= i {
                let v = sol.system.energy(&sol.displacements[i], &sol.displacements[j]);
                volume[(i, j)] = v;
                volume[(j, i)] = v;
            }
        }
    }
    let scale = boundary.amax().max(f64::MIN_POSITIVE);
    let gap = (&boundary - &volume).amax();
    if gap > FORM_AGREEMENT_TOL * scale {
        return Err(Error::NumericalFailure(format!(
            "boundary and volume NtD forms differ by {gap:e} (scale {scale:e})"
        )));
    }
    Ok(NtdMatrix {
        matrix: symmetrize(&boundary),
        material_id: material.id(),
        basis_id: basis.id().to_string(),
    })
}

pub fn assemble_ntd(mesh: &Mesh, material: &MaterialField, basis: &LoadBasis) -> Result<NtdMatrix> {
    let sol = solve_basis(mesh, material, basis)?;
    ntd_from_solutions(&sol, material, basis)
}

/// `U = Λ̄(background) − Λ̄(true)`.
pub fn gap_matrix(background: &NtdMatrix, truth: &NtdMatrix) -> Result<DMatrix<f64>> {
    if background.basis_id != truth.basis_id || background.dim() != truth.dim() {
        return Err(Error::IncompatibleOperands(format!(
            "NtD matrices on different bases ({} vs {})",
            background.basis_id, truth.basis_id
        )));
    }
    Ok(symmetrize(&(&background.matrix - &truth.matrix)))
}

/// A noisy measurement and the realized perturbation size.
#[derive(Debug, Clone)]
pub struct NoisySample {
    pub matrix: DMatrix<f64>,
    /// Relative noise level.
    pub delta: f64,
    /// `‖perturbation‖_F`, the absolute noise used in `+δI` shifts.
    pub abs_norm: f64,
    pub seed: u64,
}

/// Symmetrized standard-normal matrix scaled to unit Frobenius norm.
pub fn noise_direction(m: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let e = DMatrix::from_fn(m, m, |_, _| StandardNormal.sample(&mut rng));
    let s = symmetrize(&e);
    let n = s.norm();
    if n > 0.0 {
        s / n
    } else {
        s
    }
}

/// `clean + δ‖clean‖_F S/‖S‖_F` with `S = (E + Eᵀ)/2`, `E` i.i.d. N(0, 1).
pub fn add_noise(clean: &DMatrix<f64>, delta: f64, seed: u64) -> Result<NoisySample> {
    if !(delta >= 0.0) || !delta.is_finite() {
        return Err(Error::InvalidArgument(format!("noise level {delta} must be finite and ≥ 0")));
    }
    if delta == 0.0 {
        return Ok(NoisySample {
            matrix: clean.clone(),
            delta,
            abs_norm: 0.0,
            seed,
        });
    }
    let perturbation = noise_direction(clean.nrows(), seed) * (delta * clean.norm());
    Ok(NoisySample {
        matrix: clean + &perturbation,
        delta,
        abs_norm: perturbation.norm(),
        seed,
    })
}
