"""The hypercircle identity checked against a nested reference solution.

Run with ``python3 demos/hypercircle_identity.py``. With ``sigma_h``
statically admissible and ``u^a`` kinematically admissible for the same
projected data, any stress ``sigma`` solving the projected problem obeys

    ||sigma - sigma_h||^2 + ||sigma - A eps(u^a)||^2 = ||sigma_h - A eps(u^a)||^2

in the compliance norm, and the mean ``(sigma_h + A eps(u^a)) / 2`` lies
exactly half the estimator away from it. A discrete solution on a refinement
of the barycentric split is such a ``sigma`` once it sees the same projected
load and traction, so the identity holds up to rounding.
"""
from jmfem import (assemble, hypercircle_terms, make_benchmark, projected_load,
                   projected_traction, refine_uniform, solve_saddle, split_mesh)
from jmfem.study import solve_level


def main() -> None:
    b = make_benchmark("manufactured", nu=0.3)
    coarse = b.base_mesh()
    for _ in range(3):
        lv = solve_level(b, coarse)
        fine = refine_uniform(split_mesh(coarse), 2)
        ref, _ = solve_saddle(assemble(fine, b.material, projected_load(b.body_load, coarse),
                                       projected_traction(b.traction, coarse)))
        h = hypercircle_terms(lv.solution, lv.u_a, ref)
        print(f"N = {coarse.n_triangles:5d} (reference {fine.n_triangles:6d}): "
              f"|sigma - sigma_h| = {h.ref_sigma:.4e}, |sigma - A eps(u^a)| = {h.ref_Aeps:.4e}, "
              f"estimator gap = {h.gap:.4e}, Pythagoras defect = {h.pythagoras_defect:.1e}, "
              f"c_eff against the exact solution = {lv.report.c_eff:.4f}")
        coarse = refine_uniform(coarse)


if __name__ == "__main__":
    main()
