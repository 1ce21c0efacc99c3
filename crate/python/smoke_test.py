"""Smoke test for the monoelast_py extension module."""

import sys

import monoelast_py as me


def main() -> int:
    nodes, tris = me.generate_mesh(4)
    assert len(nodes) == 25 and len(tris) == 32

    assert me.admissible_constants(1, 2, 1, 2, 1, 2) == (0.5, 0.5, 0.5)
    a_max, b_max, c_max, tau1, tau2 = me.compute_box_bounds(1, 1, 1, 1, 1, 1)
    assert a_max == 0.5 and tau1 == tau2 == 1.0

    assert abs(me.compute_beta([[2, 0], [0, 2]], [[1, 0], [0, -1]]) - 2.0) < 1e-12
    sigma, rank, _ = me.tsvd([[1, 0, 0], [0, 1, 0], [0, 0, 1]], 0.5)
    assert rank == 2 and len(sigma) == 3
    assert me.jaccard([True, True, False], [True, False, False]) == 0.5

    lam = me.ntd_matrix(8, 6, 1.0, 1.0, 1.0)
    assert len(lam) == 6 and all(abs(lam[i][j] - lam[j][i]) < 1e-12 for i in range(6) for j in range(6))

    cfg = """
[mesh]
n = 16
[measurement]
patches = 10
[pixels]
nx = 8
ny = 8
[balls]
per_side = 5
radius = 0.08
[phantom]
shape = disc 0.5 0.5 0.2
"""
    exp = me.Experiment(cfg)
    marks, raster = exp.mono_test()
    assert len(marks) == 25 and len(raster) == 64
    coeffs, masks, objective = exp.constrained(delta=0.05, seed=3)
    assert all(0.0 <= c <= 0.5 for c in coeffs[0])
    scores = exp.score(masks)
    print(f"elements={exp.num_elements} marked={sum(marks)} jaccard={scores[0]:.3f} objective={objective:.3e}")

    try:
        me.Experiment("[tsvd]\ntau = 2\n")
    except ValueError:
        pass
    else:
        raise AssertionError("invalid config accepted")
    print("ok")
    return 0


if __name__ == "__main__":
    sys.exit(main())
