//! Region-restricted sensitivity matrices `T^λ_k`, `T^μ_k`, `T^ρ_k`.
//!
//! With background solutions `u_i = u₀^{g_i}`,
//!
//! ```text
//! (T^λ_k)_ij = ∫_{B_k} (∇·u_i)(∇·u_j)
//! (T^μ_k)_ij = 2 ∫_{B_k} ∇ˢu_i : ∇ˢu_j
//! (T^ρ_k)_ij = ∫_{B_k} u_i · u_j
//! ```
//!
//! and the derivative of the NtD form in direction `c·χ_{B_k}` is
//! `−(c_λ T^λ_k + c_μ T^μ_k + c_ρ T^ρ_k)`.
//!
//! Each matrix is accumulated as `F Fᵀ` from square-root-weighted element
//! features, so every block is symmetric positive semidefinite by
//! construction. Elements partially inside a region contribute with their
//! overlap weight `w_e`, including the mass term.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fem::{DisplacementField, ElementGeometry, MaterialField};
use crate::linalg::{matrix_from_text, matrix_to_text};
use crate::mesh::{ElementWeights, Mesh, Region, RegionSet};
use crate::ntd::{solve_basis, LoadBasis};

/// Sensitivities of one region.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionSensitivity {
    pub lambda: DMatrix<f64>,
    pub mu: DMatrix<f64>,
    pub rho: DMatrix<f64>,
}

impl RegionSensitivity {
    pub fn zeros(m: usize) -> Self {
        RegionSensitivity {
            lambda: DMatrix::zeros(m, m),
            mu: DMatrix::zeros(m, m),
            rho: DMatrix::zeros(m, m),
        }
    }

    pub fn dim(&self) -> usize {
        self.lambda.nrows()
    }

    /// `c_λ T^λ + c_μ T^μ + c_ρ T^ρ`.
    pub fn combine(&self, c: [f64; 3]) -> DMatrix<f64> {
        &self.lambda * c[0] + &self.mu * c[1] + &self.rho * c[2]
    }

    pub fn add(&self, other: &RegionSensitivity) -> RegionSensitivity {
        RegionSensitivity {
            lambda: &self.lambda + &other.lambda,
            mu: &self.mu + &other.mu,
            rho: &self.rho + &other.rho,
        }
    }

    pub fn blocks(&self) -> [&DMatrix<f64>; 3] {
        [&self.lambda, &self.mu, &self.rho]
    }
}

/// Galerkin matrix of the Fréchet derivative in direction
/// `(c_λ χ_B, c_μ χ_B, c_ρ χ_B)`.
pub fn frechet_form(entry: &RegionSensitivity, direction: [f64; 3]) -> DMatrix<f64> {
    -entry.combine(direction)
}

/// Per-element kinematic features of the `m` background solutions.
#[derive(Debug, Clone)]
pub struct ElementFeatures {
    m: usize,
    areas: Vec<f64>,
    /// `[e][l]` divergence.
    div: Vec<f64>,
    /// `[e][l][3]` strain `(ε11, ε22, ε12)`.
    strain: Vec<f64>,
    /// `[e][l][6]` nodal values `(u0x, u0y, u1x, u1y, u2x, u2y)`.
    nodal: Vec<f64>,
}

impl ElementFeatures {
    pub fn new(mesh: &Mesh, solutions: &[DisplacementField]) -> Self {
        let m = solutions.len();
        let ne = mesh.num_elements();
        let mut areas = Vec::with_capacity(ne);
        let mut div = vec![0.0; ne * m];
        let mut strain = vec![0.0; ne * m * 3];
        let mut nodal = vec![0.0; ne * m * 6];
        for (e, t) in mesh.triangles().iter().enumerate() {
            let geom = ElementGeometry::new(mesh.vertices(e));
            areas.push(geom.area);
            for (l, u) in solutions.iter().enumerate() {
                let ue = u.on_element(t);
                let (d, s) = geom.kinematics(&ue);
                div[e * m + l] = d;
                strain[(e * m + l) * 3..(e * m + l) * 3 + 3].copy_from_slice(&s);
                for a in 0..3 {
                    nodal[(e * m + l) * 6 + 2 * a] = ue[a][0];
                    nodal[(e * m + l) * 6 + 2 * a + 1] = ue[a][1];
                }
            }
        }
        ElementFeatures {
            m,
            areas,
            div,
            strain,
            nodal,
        }
    }

    pub fn num_loads(&self) -> usize {
        self.m
    }

    /// Sensitivities of the region described by `weights`.
    pub fn region(&self, weights: &ElementWeights) -> RegionSensitivity {
        let m = self.m;
        let n = weights.len();
        if n == 0 {
            return RegionSensitivity::zeros(m);
        }
        let mut fl = DMatrix::zeros(m, n);
        let mut fm = DMatrix::zeros(m, 3 * n);
        let mut fr = DMatrix::zeros(m, 8 * n);
        for (col, &(e, w)) in weights.iter().enumerate() {
            let wa = w * self.areas[e];
            let sl = wa.sqrt();
            let sm = (2.0 * wa).sqrt();
            let sm12 = (4.0 * wa).sqrt();
            let sr = (wa / 12.0).sqrt();
            for l in 0..m {
                fl[(l, col)] = sl * self.div[e * m + l];
                let s = &self.strain[(e * m + l) * 3..(e * m + l) * 3 + 3];
                fm[(l, 3 * col)] = sm * s[0];
                fm[(l, 3 * col + 1)] = sm * s[1];
                fm[(l, 3 * col + 2)] = sm12 * s[2];
                let v = &self.nodal[(e * m + l) * 6..(e * m + l) * 6 + 6];
                for k in 0..6 {
                    fr[(l, 8 * col + k)] = sr * v[k];
                }
                fr[(l, 8 * col + 6)] = sr * (v[0] + v[2] + v[4]);
                fr[(l, 8 * col + 7)] = sr * (v[1] + v[3] + v[5]);
            }
        }
        RegionSensitivity {
            lambda: &fl * fl.transpose(),
            mu: &fm * fm.transpose(),
            rho: &fr * fr.transpose(),
        }
    }
}

/// Sensitivities for every region of a family, on one background and basis.
#[derive(Debug, Clone)]
pub struct SensitivityStack {
    pub entries: Vec<RegionSensitivity>,
    pub regions: Vec<Region>,
    pub background_id: String,
    pub basis_id: String,
}

impl SensitivityStack {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.entries.first().map_or(0, RegionSensitivity::dim)
    }

    /// Per-region `T_k = T^λ_k + τ₁ T^μ_k + τ₂ T^ρ_k`.
    pub fn combined(&self, tau1: f64, tau2: f64) -> Vec<DMatrix<f64>> {
        self.entries.iter().map(|e| e.combine([1.0, tau1, tau2])).collect()
    }

    /// Text file for region `k`: the three blocks stacked vertically.
    pub fn entry_to_text(&self, k: usize) -> String {
        let e = &self.entries[k];
        let m = e.dim();
        let mut stacked = DMatrix::zeros(3 * m, m);
        for (b, block) in e.blocks().into_iter().enumerate() {
            stacked.view_mut((b * m, 0), (m, m)).copy_from(block);
        }
        matrix_to_text(
            &[
                ("k", k.to_string()),
                ("m", m.to_string()),
                ("region", self.regions[k].describe().replace(' ', ":")),
                ("background", self.background_id.clone()),
            ],
            &stacked,
        )
    }

    pub fn entry_from_text(text: &str) -> Result<RegionSensitivity> {
        let (header, stacked) = matrix_from_text(text)?;
        let m: usize = header
            .get("m")
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| Error::Parse("sensitivity header lacks m".into()))?;
        if stacked.nrows() != 3 * m || stacked.ncols() != m {
            return Err(Error::Parse("sensitivity body has wrong shape".into()));
        }
        Ok(RegionSensitivity {
            lambda: stacked.rows(0, m).into_owned(),
            mu: stacked.rows(m, m).into_owned(),
            rho: stacked.rows(2 * m, m).into_owned(),
        })
    }
}

/// Builds the stack from precomputed background solutions.
pub fn sensitivities_from_solutions(
    mesh: &Mesh,
    solutions: &[DisplacementField],
    regions: &[Region],
    memberships: &[ElementWeights],
    background_id: &str,
    basis_id: &str,
) -> SensitivityStack {
    let features = ElementFeatures::new(mesh, solutions);
    let entries = memberships.par_iter().map(|w| features.region(w)).collect();
    SensitivityStack {
        entries,
        regions: regions.to_vec(),
        background_id: background_id.to_string(),
        basis_id: basis_id.to_string(),
    }
}

/// Solves the background problem for every load and assembles the stack.
pub fn assemble_sensitivities(
    mesh: &Mesh,
    background: &MaterialField,
    basis: &LoadBasis,
    regions: &dyn RegionSet,
) -> Result<SensitivityStack> {
    let sol = solve_basis(mesh, background, basis)?;
    Ok(sensitivities_from_solutions(
        mesh,
        &sol.displacements,
        regions.regions(),
        regions.memberships(),
        &background.id(),
        basis.id(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::{element_mass_inner, strain_inner};
    use crate::linalg::{max_eigenvalue, min_eigenvalue};
    use crate::mesh::{generate_unit_square_mesh, partition_neumann_boundary, region_quadrature_weights, MeshScheme, TestBallSet};
    use crate::ntd::{assemble_ntd, build_load_basis};

    struct Fixture {
        mesh: Mesh,
        basis: LoadBasis,
        mat: MaterialField,
    }

    fn fixture() -> Fixture {
        let mesh = generate_unit_square_mesh(8, MeshScheme::RightDiagonal).unwrap();
        let patches = partition_neumann_boundary(&mesh, 6).unwrap();
        let basis = build_load_basis(&mesh, &patches).unwrap();
        let mat = MaterialField::uniform(mesh.num_elements(), 1.0, 1.0, 1.0).unwrap();
        Fixture { mesh, basis, mat }
    }

    struct Single(Vec<Region>, Vec<ElementWeights>);
    impl RegionSet for Single {
        fn regions(&self) -> &[Region] {
            &self.0
        }
        fn memberships(&self) -> &[ElementWeights] {
            &self.1
        }
    }

    fn single(mesh: &Mesh, r: Region) -> Single {
        Single(vec![r], vec![region_quadrature_weights(mesh, &r)])
    }

    #[test]
    fn empty_region_is_zero() {
        let f = fixture();
        let s = assemble_sensitivities(&f.mesh, &f.mat, &f.basis, &single(&f.mesh, Region::Empty)).unwrap();
        assert!(s.entries[0].blocks().iter().all(|b| b.amax() == 0.0));
    }

    #[test]
    fn full_domain_sums_to_ntd() {
        let f = fixture();
        let s = assemble_sensitivities(&f.mesh, &f.mat, &f.basis, &single(&f.mesh, Region::Domain)).unwrap();
        let ntd = assemble_ntd(&f.mesh, &f.mat, &f.basis).unwrap();
        let sum = s.entries[0].combine([1.0, 1.0, 1.0]);
        assert!((&sum - &ntd.matrix).amax() <= 1e-10 * ntd.matrix.amax());
    }

    #[test]
    fn blocks_are_psd_and_frechet_is_nsd() {
        let f = fixture();
        let s = assemble_sensitivities(&f.mesh, &f.mat, &f.basis, &single(&f.mesh, Region::Domain)).unwrap();
        for b in s.entries[0].blocks() {
            assert!(min_eigenvalue(b) >= -1e-12 * b.amax());
        }
        let d = frechet_form(&s.entries[0], [1.0, 0.0, 0.0]);
        assert_eq!(d, -&s.entries[0].lambda);
        assert!(max_eigenvalue(&d) <= 1e-12);
        assert_eq!(frechet_form(&s.entries[0], [0.0; 3]).amax(), 0.0);
    }

    #[test]
    fn disjoint_balls_add() {
        let f = fixture();
        let b1 = Region::Ball { center: [0.3, 0.3], radius: 0.15 };
        let b2 = Region::Ball { center: [0.7, 0.6], radius: 0.2 };
        let w1 = region_quadrature_weights(&f.mesh, &b1);
        let w2 = region_quadrature_weights(&f.mesh, &b2);
        let mut union: std::collections::BTreeMap<usize, f64> = std::collections::BTreeMap::new();
        for &(e, w) in w1.iter().chain(&w2) {
            *union.entry(e).or_default() += w;
        }
        let wu: ElementWeights = union.into_iter().collect();
        let sol = solve_basis(&f.mesh, &f.mat, &f.basis).unwrap();
        let s = sensitivities_from_solutions(&f.mesh, &sol.displacements, &[b1, b2, Region::Domain], &[w1, w2, wu], "bg", "b");
        let sum = s.entries[0].add(&s.entries[1]);
        for (a, b) in sum.blocks().iter().zip(s.entries[2].blocks()) {
            assert!((*a - b).amax() <= 1e-10 * b.amax().max(1e-300));
        }
    }

    #[test]
    fn matches_direct_elementwise_integrals() {
        let f = fixture();
        let sol = solve_basis(&f.mesh, &f.mat, &f.basis).unwrap();
        let ball = Region::Ball { center: [0.45, 0.4], radius: 0.2 };
        let w = region_quadrature_weights(&f.mesh, &ball);
        let s = sensitivities_from_solutions(&f.mesh, &sol.displacements, &[ball], &[w.clone()], "bg", "b");
        let (i, j) = (1, 4);
        let (mut tl, mut tm, mut tr) = (0.0, 0.0, 0.0);
        for &(e, we) in &w {
            let t = f.mesh.triangles()[e];
            let g = ElementGeometry::new(f.mesh.vertices(e));
            let (ui, uj) = (sol.displacements[i].on_element(&t), sol.displacements[j].on_element(&t));
            let (di, si) = g.kinematics(&ui);
            let (dj, sj) = g.kinematics(&uj);
            tl += we * g.area * di * dj;
            tm += we * g.area * 2.0 * strain_inner(&si, &sj);
            tr += we * element_mass_inner(g.area, &ui, &uj);
        }
        let e = &s.entries[0];
        assert!((e.lambda[(i, j)] - tl).abs() <= 1e-12 * e.lambda.amax());
        assert!((e.mu[(i, j)] - tm).abs() <= 1e-12 * e.mu.amax());
        assert!((e.rho[(i, j)] - tr).abs() <= 1e-12 * e.rho.amax());
    }

    #[test]
    fn entry_text_round_trip() {
        let f = fixture();
        let balls = TestBallSet::grid(&f.mesh, 2, 0.2).unwrap();
        let s = assemble_sensitivities(&f.mesh, &f.mat, &f.basis, &balls).unwrap();
        let back = SensitivityStack::entry_from_text(&s.entry_to_text(3)).unwrap();
        assert_eq!(back, s.entries[3]);
    }
}
