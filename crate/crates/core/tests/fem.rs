mod common;

use common::manufactured::{l2_error, manufactured_load, LAM, MU, RHO};
use monoelast::fem::{assemble_system, bilinear_form, solve_forward, DisplacementField, ForwardLoad, MaterialField};
use monoelast::linalg::min_eigenvalue;
use monoelast::mesh::{generate_unit_square_mesh, Mesh, MeshScheme};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_field(mesh: &Mesh, rng: &mut ChaCha8Rng) -> DisplacementField {
    let mut f = DisplacementField::zeros(mesh.num_nodes());
    for (i, v) in f.values.iter_mut().enumerate() {
        if !mesh.is_dirichlet_node(i) {
            *v = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
        }
    }
    f
}

#[test]
fn manufactured_solution_converges_at_second_order() {
    let mut errors = Vec::new();
    for n in [8, 16, 32] {
        let mesh = generate_unit_square_mesh(n, MeshScheme::RightDiagonal).unwrap();
        let mat = MaterialField::uniform(mesh.num_elements(), LAM, MU, RHO).unwrap();
        let sys = assemble_system(&mesh, &mat).unwrap();
        let load = manufactured_load(&mesh);
        let u = solve_forward(&sys, &load).unwrap();
        let identity = (sys.energy(&u, &u) - load.work(&u)).abs() / load.work(&u).abs();
        assert!(identity <= 1e-10, "energy identity residual {identity:e} at n={n}");
        errors.push(l2_error(&mesh, &u));
    }
    for w in errors.windows(2) {
        let order = (w[0] / w[1]).log2();
        assert!(order >= 1.7, "observed order {order:.3}, errors {errors:?}");
    }
}

#[test]
fn bilinear_form_is_symmetric_and_matches_assembly() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mesh = generate_unit_square_mesh(7, MeshScheme::Crossed).unwrap();
    let lam: Vec<f64> = (0..mesh.num_elements()).map(|_| rng.random_range(0.5..3.0)).collect();
    let mu: Vec<f64> = (0..mesh.num_elements()).map(|_| rng.random_range(0.5..3.0)).collect();
    let rho: Vec<f64> = (0..mesh.num_elements()).map(|_| rng.random_range(0.5..3.0)).collect();
    let mat = MaterialField::new(lam, mu, rho).unwrap();
    let sys = assemble_system(&mesh, &mat).unwrap();
    for _ in 0..10 {
        let v = random_field(&mesh, &mut rng);
        let w = random_field(&mesh, &mut rng);
        let a = bilinear_form(&mesh, &mat, &v, &w);
        let b = bilinear_form(&mesh, &mat, &w, &v);
        assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
        assert!((sys.energy(&v, &w) - a).abs() <= 1e-11 * a.abs().max(1.0));
    }
}

#[test]
fn stiffness_is_coercive_on_small_meshes() {
    for n in 2..=8 {
        for scheme in [MeshScheme::RightDiagonal, MeshScheme::Crossed] {
            let mesh = generate_unit_square_mesh(n, scheme).unwrap();
            let mat = MaterialField::uniform(mesh.num_elements(), 1.0, 1.0, 1.0).unwrap();
            let sys = assemble_system(&mesh, &mat).unwrap();
            let dense = sys.matrix().to_dense();
            assert!(min_eigenvalue(&dense) > 0.0, "n={n}");
        }
    }
}

#[test]
fn stiffer_material_stores_less_energy() {
    let mesh = generate_unit_square_mesh(10, MeshScheme::RightDiagonal).unwrap();
    let mut load = ForwardLoad::zeros(&mesh);
    for e in mesh.neumann_edges() {
        load.add_edge_traction(&mesh, e, [0.3, -1.0]);
    }
    let mut last = f64::INFINITY;
    for s in [1.0, 1.5, 2.0, 4.0] {
        let mat = MaterialField::uniform(mesh.num_elements(), s, s, s).unwrap();
        let sys = assemble_system(&mesh, &mat).unwrap();
        let work = load.work(&solve_forward(&sys, &load).unwrap());
        assert!(work > 0.0 && work < last);
        last = work;
    }
}
