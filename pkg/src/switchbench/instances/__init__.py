"""Bundled problem files and a generator of randomized micro-instances."""
from __future__ import annotations

from importlib import resources

import numpy as np

from ..io import problem_from_dict, read_problem

COUPLED = ("cosh", "coupled_step")


def bundled_names() -> list[str]:
    files = resources.files(__name__)
    return sorted(f.name[:-5] for f in files.iterdir() if f.name.endswith(".json"))


def bundled_path(name: str):
    return resources.files(__name__) / f"{name}.json"


def load_bundled(name: str):
    with resources.as_file(bundled_path(name)) as path:
        p, _ = read_problem(path)
    return p


def _r(rng, lo, hi, nd=3):
    return round(float(rng.uniform(lo, hi)), nd)


def random_micro_doc(seed: int, step_costs: bool | None = None) -> dict:
    """A small tree instance: q in {2, 3}, at most 5 branching steps, T = 1.

    Half of the instances (by default, alternating with the seed) carry
    piecewise-constant costs with breakpoints on grid times; spatial cost
    factors are >= 1 so that gamma is the smallest profile value.
    """
    rng = np.random.default_rng([seed, 7])
    q = int(rng.integers(2, 4))
    n_steps = int(rng.integers(3, 6))
    dt = 1.0 / n_steps
    if step_costs is None:
        step_costs = seed % 2 == 1
    psi = [[_r(rng, -1, 1), _r(rng, -2, 2)] if rng.random() < 0.7 else _r(rng, -1, 1) for _ in range(q)]
    h = [_r(rng, -0.02, 0.02) for _ in range(q)]
    costs, lows = {}, []
    for i in range(q):
        for k in range(q):
            if i == k:
                continue
            v0 = _r(rng, 0.05, 0.5)
            c = {"v0": v0}
            vals = [v0]
            if step_costs and rng.random() < 0.7:
                nb = int(rng.integers(1, 3))
                ts = sorted(set(int(j) for j in rng.integers(1, n_steps + 1, size=nb)))
                c["steps"] = [{"t": round(j * dt, 12), "v": _r(rng, 0.05, 0.5)} for j in ts]
                vals += [s["v"] for s in c["steps"]]
            if rng.random() < 0.3:
                c["xfactor"] = [1.0, 0.0, _r(rng, 0.0, 0.3)]
            costs[f"{i + 1}->{k + 1}"] = c
            lows.append(min(vals))
    sigma = _r(rng, 0.3, 1.2)
    b = [_r(rng, -0.3, 0.3), _r(rng, -0.2, 0.2)]
    return {"name": f"micro-{seed}", "q": q, "T": 1.0, "x0": _r(rng, -0.5, 0.5), "gamma": min(lows),
            "psi": psi, "h": h, "costs": costs,
            "diffusion": {"b": b, "sigma": sigma, "lipschitz": abs(b[1])},
            "grids": {"max_dt": dt}, "seed": seed}


def random_micro_instance(seed: int, step_costs: bool | None = None):
    return problem_from_dict(random_micro_doc(seed, step_costs))
