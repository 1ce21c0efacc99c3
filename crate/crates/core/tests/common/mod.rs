#![allow(dead_code)]

pub mod manufactured;

use monoelast::fem::{element_mass_inner, strain_inner, DisplacementField, ElementGeometry, MaterialField};
use monoelast::linalg::symmetrize;
use monoelast::mesh::{generate_unit_square_mesh, partition_neumann_boundary, Mesh, MeshScheme};
use monoelast::ntd::{build_load_basis, solve_basis, LoadBasis};
use monoelast::sensitivity::{sensitivities_from_solutions, SensitivityStack};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub struct Coarse {
    pub mesh: Mesh,
    pub basis: LoadBasis,
}

pub fn coarse(n: usize, m: usize) -> Coarse {
    let mesh = generate_unit_square_mesh(n, MeshScheme::RightDiagonal).unwrap();
    let patches = partition_neumann_boundary(&mesh, m).unwrap();
    let basis = build_load_basis(&mesh, &patches).unwrap();
    Coarse { mesh, basis }
}

impl Coarse {
    pub fn solve(&self, mat: &MaterialField) -> (DMatrix<f64>, Vec<DisplacementField>) {
        let sol = solve_basis(&self.mesh, mat, &self.basis).unwrap();
        let m = sol.loads.len();
        let ntd = DMatrix::from_fn(m, m, |i, j| sol.loads[i].work(&sol.displacements[j]));
        (symmetrize(&ntd), sol.displacements)
    }

    /// One sensitivity entry per element, at the given background.
    pub fn element_stack(&self, mat: &MaterialField) -> SensitivityStack {
        let (_, sols) = self.solve(mat);
        let memberships: Vec<Vec<(usize, f64)>> = (0..self.mesh.num_elements()).map(|e| vec![(e, 1.0)]).collect();
        let regions = vec![monoelast::mesh::Region::Domain; self.mesh.num_elements()];
        sensitivities_from_solutions(&self.mesh, &sols, &regions, &memberships, "bg", self.basis.id())
    }

    pub fn random_material(&self, rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> MaterialField {
        let ne = self.mesh.num_elements();
        let mut f = || (0..ne).map(|_| rng.random_range(lo..hi)).collect::<Vec<_>>();
        let (l, m, r) = (f(), f(), f());
        MaterialField::new(l, m, r).unwrap()
    }
}

/// Derivative of the NtD matrix in an element-wise direction.
pub fn directional_derivative(stack: &SensitivityStack, dir: [&[f64]; 3]) -> DMatrix<f64> {
    let m = stack.dim();
    let mut out = DMatrix::zeros(m, m);
    for (e, entry) in stack.entries.iter().enumerate() {
        out -= entry.combine([dir[0][e], dir[1][e], dir[2][e]]);
    }
    out
}

pub fn combine(sols: &[DisplacementField], c: &DVector<f64>) -> DisplacementField {
    let mut out = DisplacementField::zeros(sols[0].values.len());
    for (u, &w) in sols.iter().zip(c.iter()) {
        for (o, v) in out.values.iter_mut().zip(&u.values) {
            o[0] += w * v[0];
            o[1] += w * v[1];
        }
    }
    out
}

/// `∫ a |∇·u|² + 2 b |∇ˢu|² + c |u|²` with element-wise weights.
pub fn weighted_energy(mesh: &Mesh, u: &DisplacementField, w: [&[f64]; 3]) -> f64 {
    let mut total = 0.0;
    for (e, t) in mesh.triangles().iter().enumerate() {
        let geom = ElementGeometry::new(mesh.vertices(e));
        let ue = u.on_element(t);
        let (d, s) = geom.kinematics(&ue);
        total += geom.area * (w[0][e] * d * d + 2.0 * w[1][e] * strain_inner(&s, &s))
            + w[2][e] * element_mass_inner(geom.area, &ue, &ue);
    }
    total
}

pub fn map2(a: &[f64], b: &[f64], f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
    a.iter().zip(b).map(|(&x, &y)| f(x, y)).collect()
}
