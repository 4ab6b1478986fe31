"""Tree values against the finite-difference HJB system.

Halving dt (and h^2 on the PDE side) should roughly halve the gap between
the binomial tree and the explicit scheme at x0.
"""
from __future__ import annotations

from switchbench.acceptance import pde_grid
from switchbench.hjb import compare_tree_pde, solve_qvi, viscosity_residual
from switchbench.instances import load_bundled
from switchbench.lattice import build_grid, build_tree


def main():
    p = load_bundled("step_sigma")
    lat = build_tree(p, build_grid(p, p.meta["grids"]["max_dt"]))
    grid = pde_grid(p)
    out = compare_tree_pde(p, lat, grid)
    for key in ("baseline", "refined"):
        r = out[key]
        print(f"{key:8s} tree dt {r['tree_dt']:.4g}  pde dt {r['pde_dt']:.4g}  h {r['h']:.4g}  "
              f"max |v - Y| = {r['max_diff']:.3e}")
    print(f"refinement factor {out['factor']:.2f}")
    rep = viscosity_residual(solve_qvi(p, grid), p, grid)
    print("residuals:", rep.summary())


if __name__ == "__main__":
    main()
