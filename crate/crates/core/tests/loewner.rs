mod common;

use common::{coarse, combine, directional_derivative, map2, weighted_energy};
use monoelast::fem::MaterialField;
use monoelast::linalg::{min_eigenvalue, sym_norm2};
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_load(rng: &mut ChaCha8Rng, m: usize) -> DVector<f64> {
    DVector::from_fn(m, |_, _| rng.random_range(-1.0..1.0))
}

#[test]
fn frechet_derivative_matches_finite_differences() {
    let c = coarse(8, 6);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let ne = c.mesh.num_elements();
    let bg = MaterialField::uniform(ne, 1.0, 1.0, 1.0).unwrap();
    let (l0, _) = c.solve(&bg);
    let stack = c.element_stack(&bg);
    for _ in 0..10 {
        let d: Vec<Vec<f64>> = (0..3).map(|_| (0..ne).map(|_| rng.random_range(-0.5..0.5)).collect()).collect();
        let deriv = directional_derivative(&stack, [&d[0], &d[1], &d[2]]);
        for t in [1e-2, 1e-3] {
            let (lt, _) = c.solve(&bg.perturbed(t, &d[0], &d[1], &d[2]).unwrap());
            let fd = (&lt - &l0) / t;
            let rel = (&fd - &deriv).norm() / deriv.norm();
            assert!(rel <= 5.0 * t, "t={t}: relative error {rel:e}");
        }
    }
}

#[test]
fn ntd_gap_is_sandwiched_by_energy_bounds() {
    let c = coarse(8, 6);
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..20 {
        let s1 = c.random_material(&mut rng, 0.5, 3.0);
        let s2 = c.random_material(&mut rng, 0.5, 3.0);
        let (l1, u1) = c.solve(&s1);
        let (l2, u2) = c.solve(&s2);
        let scale = sym_norm2(&l1).max(sym_norm2(&l2));
        let diff = [
            map2(s1.lambda(), s2.lambda(), |a, b| a - b),
            map2(s1.mu(), s2.mu(), |a, b| a - b),
            map2(s1.rho(), s2.rho(), |a, b| a - b),
        ];
        let ratio = [
            map2(s1.lambda(), s2.lambda(), |a, b| b / a * (a - b)),
            map2(s1.mu(), s2.mu(), |a, b| b / a * (a - b)),
            map2(s1.rho(), s2.rho(), |a, b| b / a * (a - b)),
        ];
        let w = [&diff[0][..], &diff[1][..], &diff[2][..]];
        let wr = [&ratio[0][..], &ratio[1][..], &ratio[2][..]];
        for _ in 0..5 {
            let g = random_load(&mut rng, 6);
            let mid = (g.transpose() * (&l2 - &l1) * &g)[(0, 0)];
            let (v1, v2) = (combine(&u1, &g), combine(&u2, &g));
            let tol = 1e-9 * scale * g.norm_squared();
            let upper = weighted_energy(&c.mesh, &v2, w);
            let lower = weighted_energy(&c.mesh, &v1, w);
            assert!(mid <= upper + tol, "upper: {mid} > {upper}");
            assert!(mid >= lower - tol, "lower: {mid} < {lower}");
            // Ratio-weighted lower bound, with either solution.
            assert!(mid >= weighted_energy(&c.mesh, &v1, wr) - tol);
            assert!(mid >= weighted_energy(&c.mesh, &v2, wr) - tol);
        }
    }
}

#[test]
fn ordered_parameters_give_ordered_operators() {
    let c = coarse(8, 6);
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let ne = c.mesh.num_elements();
    for _ in 0..20 {
        let s0 = c.random_material(&mut rng, 0.5, 2.0);
        let bump = |v: &[f64], rng: &mut ChaCha8Rng| v.iter().map(|x| x + rng.random_range(0.0..1.0)).collect();
        let s1 = MaterialField::new(bump(s0.lambda(), &mut rng), bump(s0.mu(), &mut rng), bump(s0.rho(), &mut rng))
            .unwrap();
        let (l0, _) = c.solve(&s0);
        let (l1, _) = c.solve(&s1);
        assert!(min_eigenvalue(&(&l0 - &l1)) >= -1e-10 * sym_norm2(&l0));

        let bg = c.random_material(&mut rng, 0.5, 2.0);
        let stack = c.element_stack(&bg);
        let d0: Vec<Vec<f64>> = (0..3).map(|_| (0..ne).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let d1: Vec<Vec<f64>> = d0.iter().map(|v| bump(v, &mut rng)).collect();
        let a = directional_derivative(&stack, [&d0[0], &d0[1], &d0[2]]);
        let b = directional_derivative(&stack, [&d1[0], &d1[1], &d1[2]]);
        assert!(min_eigenvalue(&(&a - &b)) >= -1e-10 * sym_norm2(&a).max(sym_norm2(&b)));
    }
}

#[test]
fn linearization_remainder_is_bounded() {
    let c = coarse(8, 6);
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let ne = c.mesh.num_elements();
    for _ in 0..20 {
        let bg = c.random_material(&mut rng, 0.5, 2.0);
        let d: Vec<Vec<f64>> = (0..3).map(|_| (0..ne).map(|_| rng.random_range(-0.4..1.0)).collect()).collect();
        let pert = bg.perturbed(1.0, &d[0], &d[1], &d[2]).unwrap();
        let (l, u) = c.solve(&bg);
        let (lp, _) = c.solve(&pert);
        let deriv = directional_derivative(&c.element_stack(&bg), [&d[0], &d[1], &d[2]]);
        let rem = &lp - &l - &deriv;
        let bound_w = [
            map2(&d[0], bg.lambda(), |t, a| t * t / (a + t)),
            map2(&d[1], bg.mu(), |t, a| t * t / (a + t)),
            map2(&d[2], bg.rho(), |t, a| t * t / (a + t)),
        ];
        let tol = 1e-9 * sym_norm2(&l);
        for _ in 0..5 {
            let g = random_load(&mut rng, 6);
            let r = (g.transpose() * &rem * &g)[(0, 0)];
            let ug = combine(&u, &g);
            let bound = weighted_energy(&c.mesh, &ug, [&bound_w[0], &bound_w[1], &bound_w[2]]);
            let t = tol * g.norm_squared();
            assert!(r >= -t && r <= bound + t, "remainder {r} outside [0, {bound}]");
        }
    }
}
