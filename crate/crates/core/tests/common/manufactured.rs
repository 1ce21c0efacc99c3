use std::f64::consts::PI;

use monoelast::fem::{element_quadrature, DisplacementField, ForwardLoad};
use monoelast::mesh::{Mesh, Point};

pub const LAM: f64 = 2.0;
pub const MU: f64 = 1.0;
pub const RHO: f64 = 0.5;

pub fn exact(p: Point) -> [f64; 2] {
    let c = (0.5 * PI * p[1]).cos();
    [(PI * p[0]).sin() * c, (PI * p[0]).cos() * c]
}

// Displacement gradient by central differences of the exact field.
pub fn grad(p: Point) -> [[f64; 2]; 2] {
    let h = 1e-6;
    let mut g = [[0.0; 2]; 2];
    for d in 0..2 {
        let mut a = p;
        let mut b = p;
        a[d] += h;
        b[d] -= h;
        let (ua, ub) = (exact(a), exact(b));
        for c in 0..2 {
            g[c][d] = (ua[c] - ub[c]) / (2.0 * h);
        }
    }
    g
}

pub fn stress(p: Point) -> [[f64; 2]; 2] {
    let g = grad(p);
    let div = g[0][0] + g[1][1];
    let mut s = [[0.0; 2]; 2];
    for c in 0..2 {
        for d in 0..2 {
            s[c][d] = MU * (g[c][d] + g[d][c]);
        }
        s[c][c] += LAM * div;
    }
    s
}

pub fn body_force(p: Point) -> [f64; 2] {
    let h = 1e-4;
    let u = exact(p);
    let mut f = [RHO * u[0], RHO * u[1]];
    for d in 0..2 {
        let mut a = p;
        let mut b = p;
        a[d] += h;
        b[d] -= h;
        let (sa, sb) = (stress(a), stress(b));
        for c in 0..2 {
            f[c] -= (sa[c][d] - sb[c][d]) / (2.0 * h);
        }
    }
    f
}

pub fn manufactured_load(mesh: &Mesh) -> ForwardLoad {
    let mut load = ForwardLoad::zeros(mesh);
    load.add_body_force(mesh, body_force);
    for e in mesh.neumann_edges() {
        let n = mesh.boundary_edges()[e].side.outward_normal();
        load.add_traction_fn(mesh, e, |p| {
            let s = stress(p);
            [s[0][0] * n[0] + s[0][1] * n[1], s[1][0] * n[0] + s[1][1] * n[1]]
        });
    }
    load
}

pub fn l2_error(mesh: &Mesh, u: &DisplacementField) -> f64 {
    let mut err = 0.0;
    for (e, t) in mesh.triangles().iter().enumerate() {
        let ue = u.on_element(t);
        for (p, bary, w) in element_quadrature(mesh, e) {
            let ex = exact(p);
            for c in 0..2 {
                let uh: f64 = (0..3).map(|a| bary[a] * ue[a][c]).sum();
                err += w * (uh - ex[c]).powi(2);
            }
        }
    }
    err.sqrt()
}
