//! P1 vector finite elements for
//! `-∇·(λ(∇·u)I + 2μ∇ˢu) + ρu = 0` with `u = 0` on `{y = 1}` and surface
//! tractions on the remaining three sides.
//!
//! The bilinear form is
//! `a(u, v) = ∫ λ(∇·u)(∇·v) + 2μ ∇ˢu:∇ˢv + ρ u·v dx`, integrated exactly on
//! every element: strains are constant on a P1 triangle and the mass term
//! uses the exact P1 mass matrix.

use std::fmt::Write as _;

use crate::banded::{BandedCholesky, BandedSym};
use crate::error::{Error, Result};
use crate::mesh::{Mesh, Point};

/// Piecewise-constant Lamé parameters and density, one value per element.
#[derive(Debug, Clone, PartialEq)]
pub struct MaterialField {
    lambda: Vec<f64>,
    mu: Vec<f64>,
    rho: Vec<f64>,
}

impl MaterialField {
    pub fn new(lambda: Vec<f64>, mu: Vec<f64>, rho: Vec<f64>) -> Result<Self> {
        if lambda.len() != mu.len() || mu.len() != rho.len() {
            return Err(Error::IncompatibleOperands(format!(
                "material arrays have lengths {}, {}, {}",
                lambda.len(),
                mu.len(),
                rho.len()
            )));
        }
        for (name, field) in [("lambda", &lambda), ("mu", &mu), ("rho", &rho)] {
            if let Some(e) = field.iter().position(|&v| !(v > 0.0) || !v.is_finite()) {
                return Err(Error::InvalidMaterial {
                    element: e,
                    message: format!("{name} = {} is not a positive finite value", field[e]),
                });
            }
        }
        Ok(MaterialField { lambda, mu, rho })
    }

    pub fn uniform(n_elements: usize, lambda: f64, mu: f64, rho: f64) -> Result<Self> {
        MaterialField::new(
            vec![lambda; n_elements],
            vec![mu; n_elements],
            vec![rho; n_elements],
        )
    }

    pub fn lambda(&self) -> &[f64] {
        &self.lambda
    }

    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    pub fn rho(&self) -> &[f64] {
        &self.rho
    }

    pub fn len(&self) -> usize {
        self.lambda.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lambda.is_empty()
    }

    pub fn scaled(&self, factor: f64) -> Result<Self> {
        let s = |v: &[f64]| v.iter().map(|x| x * factor).collect::<Vec<_>>();
        MaterialField::new(s(&self.lambda), s(&self.mu), s(&self.rho))
    }

    /// `self + t·(dλ, dμ, dρ)`, validated.
    pub fn perturbed(&self, t: f64, dl: &[f64], dm: &[f64], dr: &[f64]) -> Result<Self> {
        let p = |v: &[f64], d: &[f64]| v.iter().zip(d).map(|(a, b)| a + t * b).collect::<Vec<_>>();
        MaterialField::new(p(&self.lambda, dl), p(&self.mu, dm), p(&self.rho, dr))
    }

    /// Stable 64-bit fingerprint (FNV-1a over the raw value bits).
    pub fn id(&self) -> String {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for v in self.lambda.iter().chain(&self.mu).chain(&self.rho) {
            for b in v.to_bits().to_le_bytes() {
                h ^= b as u64;
                h = h.wrapping_mul(0x0000_0100_0000_01b3);
            }
        }
        format!("{h:016x}")
    }
}

/// Area and constant barycentric gradients of a P1 triangle.
#[derive(Debug, Clone, Copy)]
pub struct ElementGeometry {
    pub area: f64,
    pub grads: [[f64; 2]; 3],
}

impl ElementGeometry {
    pub fn new(v: [Point; 3]) -> Self {
        let area = 0.5 * ((v[1][0] - v[0][0]) * (v[2][1] - v[0][1]) - (v[2][0] - v[0][0]) * (v[1][1] - v[0][1]));
        let mut grads = [[0.0; 2]; 3];
        for i in 0..3 {
            let j = (i + 1) % 3;
            let k = (i + 2) % 3;
            grads[i] = [(v[j][1] - v[k][1]) / (2.0 * area), (v[k][0] - v[j][0]) / (2.0 * area)];
        }
        ElementGeometry { area, grads }
    }

    /// Divergence and symmetric strain `(ε11, ε22, ε12)` of a P1 field with
    /// the given nodal values.
    pub fn kinematics(&self, u: &[[f64; 2]; 3]) -> (f64, [f64; 3]) {
        let mut g = [[0.0; 2]; 2]; // g[c][d] = ∂u_c/∂x_d
        for a in 0..3 {
            for c in 0..2 {
                for d in 0..2 {
                    g[c][d] += u[a][c] * self.grads[a][d];
                }
            }
        }
        (g[0][0] + g[1][1], [g[0][0], g[1][1], 0.5 * (g[0][1] + g[1][0])])
    }
}

pub fn element_geometries(mesh: &Mesh) -> Vec<ElementGeometry> {
    (0..mesh.num_elements())
        .map(|e| ElementGeometry::new(mesh.vertices(e)))
        .collect()
}

/// `ε:ε` for strain stored as `(ε11, ε22, ε12)`.
#[inline]
pub fn strain_inner(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + 2.0 * a[2] * b[2]
}

/// Exact P1 mass integral `∫_e u·v` for nodal values on one element.
#[inline]
pub fn element_mass_inner(area: f64, u: &[[f64; 2]; 3], v: &[[f64; 2]; 3]) -> f64 {
    let mut diag = 0.0;
    let mut su = [0.0; 2];
    let mut sv = [0.0; 2];
    for a in 0..3 {
        diag += u[a][0] * v[a][0] + u[a][1] * v[a][1];
        for c in 0..2 {
            su[c] += u[a][c];
            sv[c] += v[a][c];
        }
    }
    area / 12.0 * (diag + su[0] * sv[0] + su[1] * sv[1])
}

/// Maps `(node, component)` to a free degree of freedom, or `None` for
/// Dirichlet-pinned nodes.
#[derive(Debug, Clone)]
pub struct DofMap {
    free: Vec<Option<usize>>,
    n_free: usize,
}

impl DofMap {
    pub fn new(mesh: &Mesh) -> Self {
        let mut free = vec![None; 2 * mesh.num_nodes()];
        let mut n_free = 0;
        for node in 0..mesh.num_nodes() {
            if !mesh.is_dirichlet_node(node) {
                free[2 * node] = Some(n_free);
                free[2 * node + 1] = Some(n_free + 1);
                n_free += 2;
            }
        }
        DofMap { free, n_free }
    }

    #[inline]
    pub fn dof(&self, node: usize, comp: usize) -> Option<usize> {
        self.free[2 * node + comp]
    }

    pub fn n_free(&self) -> usize {
        self.n_free
    }

    pub fn n_nodes(&self) -> usize {
        self.free.len() / 2
    }
}

/// Assembled and factorized stiffness matrix over the free DOFs.
#[derive(Debug, Clone)]
pub struct StiffnessSystem {
    dofs: DofMap,
    matrix: BandedSym,
    factor: BandedCholesky,
}

impl StiffnessSystem {
    pub fn dofs(&self) -> &DofMap {
        &self.dofs
    }

    pub fn matrix(&self) -> &BandedSym {
        &self.matrix
    }

    pub fn factor(&self) -> &BandedCholesky {
        &self.factor
    }

    /// `a(v, w)` through the assembled matrix (Dirichlet values ignored).
    pub fn energy(&self, v: &DisplacementField, w: &DisplacementField) -> f64 {
        self.matrix.bilinear(&self.restrict(v), &self.restrict(w))
    }

    fn restrict(&self, u: &DisplacementField) -> Vec<f64> {
        let mut x = vec![0.0; self.dofs.n_free()];
        for (node, val) in u.values.iter().enumerate() {
            for c in 0..2 {
                if let Some(d) = self.dofs.dof(node, c) {
                    x[d] = val[c];
                }
            }
        }
        x
    }
}

/// Element stiffness for DOFs ordered `(node0,x), (node0,y), (node1,x), ...`.
fn element_matrix(geom: &ElementGeometry, lambda: f64, mu: f64, rho: f64) -> [[f64; 6]; 6] {
    let mut k = [[0.0; 6]; 6];
    let g = &geom.grads;
    for a in 0..3 {
        for b in 0..3 {
            let dot = g[a][0] * g[b][0] + g[a][1] * g[b][1];
            let mass = rho * geom.area / 12.0 * if a == b { 2.0 } else { 1.0 };
            for c in 0..2 {
                for d in 0..2 {
                    let mut v = geom.area * (lambda * g[a][c] * g[b][d] + mu * g[a][d] * g[b][c]);
                    if c == d {
                        v += geom.area * mu * dot + mass;
                    }
                    k[2 * a + c][2 * b + d] = v;
                }
            }
        }
    }
    k
}

pub fn assemble_system(mesh: &Mesh, material: &MaterialField) -> Result<StiffnessSystem> {
    if material.len() != mesh.num_elements() {
        return Err(Error::IncompatibleOperands(format!(
            "material has {} elements, mesh has {}",
            material.len(),
            mesh.num_elements()
        )));
    }
    let dofs = DofMap::new(mesh);
    let mut bw = 0;
    let dref = &dofs;
    for t in mesh.triangles() {
        let ds: Vec<usize> = t
            .iter()
            .flat_map(|&n| (0..2).filter_map(move |c| dref.dof(n, c)))
            .collect();
        if let (Some(lo), Some(hi)) = (ds.iter().min(), ds.iter().max()) {
            bw = bw.max(hi - lo);
        }
    }
    let mut matrix = BandedSym::zeros(dofs.n_free(), bw);
    for (e, t) in mesh.triangles().iter().enumerate() {
        let geom = ElementGeometry::new(mesh.vertices(e));
        let k = element_matrix(&geom, material.lambda[e], material.mu[e], material.rho[e]);
        for a in 0..3 {
            for c in 0..2 {
                let Some(i) = dofs.dof(t[a], c) else { continue };
                for b in 0..3 {
                    for d in 0..2 {
                        let Some(j) = dofs.dof(t[b], d) else { continue };
                        if j <= i {
                            matrix.add(i, j, k[2 * a + c][2 * b + d]);
                        }
                    }
                }
            }
        }
    }
    let factor = matrix.cholesky()?;
    Ok(StiffnessSystem { dofs, matrix, factor })
}

/// Nodal displacements; Dirichlet nodes hold exact zeros.
#[derive(Debug, Clone, PartialEq)]
pub struct DisplacementField {
    pub values: Vec<[f64; 2]>,
}

impl DisplacementField {
    pub fn zeros(n_nodes: usize) -> Self {
        DisplacementField {
            values: vec![[0.0; 2]; n_nodes],
        }
    }

    pub fn on_element(&self, t: &[usize; 3]) -> [[f64; 2]; 3] {
        [self.values[t[0]], self.values[t[1]], self.values[t[2]]]
    }

    /// CSV rows `node,x,y,ux,uy`.
    pub fn to_csv(&self, mesh: &Mesh) -> String {
        let mut out = String::from("node,x,y,ux,uy\n");
        for (i, (p, u)) in mesh.nodes().iter().zip(&self.values).enumerate() {
            writeln!(out, "{i},{},{},{},{}", p[0], p[1], u[0], u[1]).unwrap();
        }
        out
    }
}

/// Element-wise evaluation of `a(v, w)` without the assembled matrix.
pub fn bilinear_form(
    mesh: &Mesh,
    material: &MaterialField,
    v: &DisplacementField,
    w: &DisplacementField,
) -> f64 {
    let mut total = 0.0;
    for (e, t) in mesh.triangles().iter().enumerate() {
        let geom = ElementGeometry::new(mesh.vertices(e));
        let (ve, we) = (v.on_element(t), w.on_element(t));
        let (dv, sv) = geom.kinematics(&ve);
        let (dw, sw) = geom.kinematics(&we);
        total += geom.area * (material.lambda[e] * dv * dw + 2.0 * material.mu[e] * strain_inner(&sv, &sw))
            + material.rho[e] * element_mass_inner(geom.area, &ve, &we);
    }
    total
}

// Degree-5 seven-point rule on the reference triangle: (ξ, η, weight),
// weights summing to 1.
const DUNAVANT5: [(f64, f64, f64); 7] = {
    const A1: f64 = 0.059_715_871_789_769_82;
    const B1: f64 = 0.470_142_064_105_115_1;
    const A2: f64 = 0.797_426_985_353_087_3;
    const B2: f64 = 0.101_286_507_323_456_35;
    const W0: f64 = 0.225;
    const W1: f64 = 0.132_394_152_788_506_18;
    const W2: f64 = 0.125_939_180_544_827_15;
    [
        (1.0 / 3.0, 1.0 / 3.0, W0),
        (B1, B1, W1),
        (A1, B1, W1),
        (B1, A1, W1),
        (B2, B2, W2),
        (A2, B2, W2),
        (B2, A2, W2),
    ]
};

/// Quadrature points and weights (weights sum to the element area).
pub fn element_quadrature(mesh: &Mesh, e: usize) -> impl Iterator<Item = (Point, [f64; 3], f64)> {
    let [a, b, c] = mesh.vertices(e);
    let area = mesh.element_areas()[e];
    DUNAVANT5.iter().map(move |&(s, t, w)| {
        let p = [
            a[0] + s * (b[0] - a[0]) + t * (c[0] - a[0]),
            a[1] + s * (b[1] - a[1]) + t * (c[1] - a[1]),
        ];
        (p, [1.0 - s - t, s, t], w * area)
    })
}

const GAUSS3: [(f64, f64); 3] = [
    (-0.774_596_669_241_483_4, 5.0 / 9.0),
    (0.0, 8.0 / 9.0),
    (0.774_596_669_241_483_4, 5.0 / 9.0),
];

/// Right-hand side of the discrete problem over all `2 × n_nodes` DOFs.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardLoad {
    rhs: Vec<f64>,
}

impl ForwardLoad {
    pub fn zeros(mesh: &Mesh) -> Self {
        ForwardLoad {
            rhs: vec![0.0; 2 * mesh.num_nodes()],
        }
    }

    pub fn rhs(&self) -> &[f64] {
        &self.rhs
    }

    /// Constant traction `g` on boundary edge `edge`.
    pub fn add_edge_traction(&mut self, mesh: &Mesh, edge: usize, g: [f64; 2]) {
        let be = &mesh.boundary_edges()[edge];
        for &n in &be.nodes {
            for c in 0..2 {
                self.rhs[2 * n + c] += 0.5 * be.length * g[c];
            }
        }
    }

    /// Traction given as a function of position on boundary edge `edge`.
    pub fn add_traction_fn(&mut self, mesh: &Mesh, edge: usize, g: impl Fn(Point) -> [f64; 2]) {
        let be = &mesh.boundary_edges()[edge];
        let (p, q) = (mesh.nodes()[be.nodes[0]], mesh.nodes()[be.nodes[1]]);
        for &(xi, w) in &GAUSS3 {
            let t = 0.5 * (1.0 + xi);
            let x = [p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])];
            let gv = g(x);
            let jw = 0.5 * w * be.length;
            for c in 0..2 {
                self.rhs[2 * be.nodes[0] + c] += jw * (1.0 - t) * gv[c];
                self.rhs[2 * be.nodes[1] + c] += jw * t * gv[c];
            }
        }
    }

    /// Volume force `f` (testing extension; reconstruction paths never use it).
    pub fn add_body_force(&mut self, mesh: &Mesh, f: impl Fn(Point) -> [f64; 2]) {
        for (e, t) in mesh.triangles().iter().enumerate() {
            for (p, bary, w) in element_quadrature(mesh, e) {
                let fv = f(p);
                for a in 0..3 {
                    for c in 0..2 {
                        self.rhs[2 * t[a] + c] += w * bary[a] * fv[c];
                    }
                }
            }
        }
    }

    /// Work of the load on a displacement, `∫ g·u ds (+ ∫ f·u dx)`.
    pub fn work(&self, u: &DisplacementField) -> f64 {
        u.values
            .iter()
            .enumerate()
            .map(|(n, v)| self.rhs[2 * n] * v[0] + self.rhs[2 * n + 1] * v[1])
            .sum()
    }
}

pub fn solve_forward(system: &StiffnessSystem, load: &ForwardLoad) -> Result<DisplacementField> {
    let dofs = &system.dofs;
    if load.rhs.len() != 2 * dofs.n_nodes() {
        return Err(Error::IncompatibleOperands(format!(
            "load has {} entries, system expects {}",
            load.rhs.len(),
            2 * dofs.n_nodes()
        )));
    }
    let mut b = vec![0.0; dofs.n_free()];
    for node in 0..dofs.n_nodes() {
        for c in 0..2 {
            if let Some(d) = dofs.dof(node, c) {
                b[d] = load.rhs[2 * node + c];
            }
        }
    }
    let x = system.factor.solve(&b);
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NumericalFailure("non-finite displacement".into()));
    }
    let mut u = DisplacementField::zeros(dofs.n_nodes());
    for node in 0..dofs.n_nodes() {
        for c in 0..2 {
            if let Some(d) = dofs.dof(node, c) {
                u.values[node][c] = x[d];
            }
        }
    }
    Ok(u)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{generate_unit_square_mesh, MeshScheme};

    fn field(mesh: &Mesh, f: impl Fn(Point) -> [f64; 2]) -> DisplacementField {
        DisplacementField {
            values: mesh.nodes().iter().map(|&p| f(p)).collect(),
        }
    }

    #[test]
    fn rigid_translation_only_sees_mass() {
        let mesh = generate_unit_square_mesh(6, MeshScheme::Crossed).unwrap();
        let mat = MaterialField::uniform(mesh.num_elements(), 3.7, 2.1, 1.0).unwrap();
        let v = field(&mesh, |_| [1.0, 0.0]);
        assert!((bilinear_form(&mesh, &mat, &v, &v) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn constant_strain_patch() {
        let mesh = generate_unit_square_mesh(5, MeshScheme::RightDiagonal).unwrap();
        let mat = MaterialField::uniform(mesh.num_elements(), 1.0, 1.0, 1e-12).unwrap();
        let v = field(&mesh, |p| [p[0], 0.0]);
        assert!((bilinear_form(&mesh, &mat, &v, &v) - 3.0).abs() < 1e-9);
    }

    #[test]
    fn nonpositive_material_rejected() {
        let err = MaterialField::new(vec![1.0, 0.0], vec![1.0, 1.0], vec![1.0, 1.0]).unwrap_err();
        assert!(matches!(err, Error::InvalidMaterial { element: 1, .. }));
        assert!(MaterialField::uniform(3, 1.0, 1.0, -1.0).is_err());
    }

    #[test]
    fn zero_load_gives_zero_displacement() {
        let mesh = generate_unit_square_mesh(4, MeshScheme::RightDiagonal).unwrap();
        let mat = MaterialField::uniform(mesh.num_elements(), 1.0, 1.0, 1.0).unwrap();
        let sys = assemble_system(&mesh, &mat).unwrap();
        let u = solve_forward(&sys, &ForwardLoad::zeros(&mesh)).unwrap();
        assert!(u.values.iter().all(|v| v[0] == 0.0 && v[1] == 0.0));
    }

    #[test]
    fn dirichlet_nodes_stay_pinned() {
        let mesh = generate_unit_square_mesh(4, MeshScheme::Crossed).unwrap();
        let mat = MaterialField::uniform(mesh.num_elements(), 1.0, 1.0, 1.0).unwrap();
        let sys = assemble_system(&mesh, &mat).unwrap();
        let mut load = ForwardLoad::zeros(&mesh);
        for e in mesh.neumann_edges().collect::<Vec<_>>() {
            load.add_edge_traction(&mesh, e, [0.3, -1.0]);
        }
        let u = solve_forward(&sys, &load).unwrap();
        for (n, v) in u.values.iter().enumerate() {
            if mesh.is_dirichlet_node(n) {
                assert_eq!(*v, [0.0, 0.0]);
            }
        }
        let a = sys.energy(&u, &u);
        assert!((a - load.work(&u)).abs() <= 1e-10 * a);
    }

    #[test]
    fn assembled_matrix_matches_elementwise_form() {
        let mesh = generate_unit_square_mesh(3, MeshScheme::RightDiagonal).unwrap();
        let n = mesh.num_elements();
        let mat = MaterialField::new(
            (0..n).map(|e| 1.0 + 0.1 * e as f64).collect(),
            (0..n).map(|e| 2.0 - 0.03 * e as f64).collect(),
            (0..n).map(|e| 0.5 + 0.05 * e as f64).collect(),
        )
        .unwrap();
        let sys = assemble_system(&mesh, &mat).unwrap();
        let mut v = field(&mesh, |p| [(3.0 * p[0]).sin() + p[1], p[0] * p[1] - 0.2]);
        let mut w = field(&mesh, |p| [p[1] * p[1], (p[0] + 2.0 * p[1]).cos()]);
        for (i, val) in v.values.iter_mut().enumerate() {
            if mesh.is_dirichlet_node(i) {
                *val = [0.0; 2];
            }
        }
        for (i, val) in w.values.iter_mut().enumerate() {
            if mesh.is_dirichlet_node(i) {
                *val = [0.0; 2];
            }
        }
        let a = sys.energy(&v, &w);
        let b = bilinear_form(&mesh, &mat, &v, &w);
        assert!((a - b).abs() < 1e-12 * a.abs().max(1.0));
    }

    #[test]
    fn material_id_changes_with_values() {
        let a = MaterialField::uniform(4, 1.0, 1.0, 1.0).unwrap();
        let b = MaterialField::uniform(4, 1.0, 1.0, 1.0 + 1e-15).unwrap();
        assert_eq!(a.id(), a.clone().id());
        assert_ne!(a.id(), b.id());
    }

    #[test]
    fn quadrature_integrates_quintics() {
        let mesh = generate_unit_square_mesh(2, MeshScheme::RightDiagonal).unwrap();
        // ∫_[0,1]² x⁵ + x²y³ = 1/6 + 1/12
        let mut s = 0.0;
        for e in 0..mesh.num_elements() {
            for (p, _, w) in element_quadrature(&mesh, e) {
                s += w * (p[0].powi(5) + p[0].powi(2) * p[1].powi(3));
            }
        }
        assert!((s - (1.0 / 6.0 + 1.0 / 12.0)).abs() < 1e-14);
    }
}
