"""Switching into a better mode once the cost drops.

Mode 2 earns rate 1, mode 1 earns nothing.  Switching 1 -> 2 costs 1 before
t = 0.5 and 0.2 afterwards, so the optimal strategy waits for the cheap cost
and then switches, earning 0.5 - 0.2 = 0.3 from mode 1.
"""
from __future__ import annotations

from switchbench.instances import load_bundled
from switchbench.lattice import build_grid, build_tree
from switchbench.snell import solve_capped, solve_full
from switchbench.strategy import evaluate_policy, extract_epsilon_policy, realize_strategies


def main():
    p = load_bundled("step_down")
    lat = build_tree(p, build_grid(p, p.meta["grids"]["max_dt"]))
    vf = solve_full(p, lat)
    print("layer times:", lat.grid.labels())
    print("Y0 per mode:", vf.y0.tolist())
    for n in range(3):
        print(f"at most {n} switches: Y0 =", solve_capped(p, lat, n).y0.tolist())
    pol = extract_epsilon_policy(vf, p, lat, eps=0.01)
    for e in realize_strategies(pol, p, lat, 0)[0].events:
        print(f"switch {e.from_mode + 1} -> {e.to_mode + 1} at layer {e.layer} (t = {lat.grid.labels()[e.layer]})")
    print("policy value J =", evaluate_policy(pol, p, lat, 0))


if __name__ == "__main__":
    main()
