from __future__ import annotations

import numpy as np
import pytest
from conftest import make, tree

from switchbench.acceptance import pde_grid
from switchbench.instances import load_bundled
from switchbench.hjb import (CFLError, compare_tree_pde, make_space_time_grid, qvi_step, solve_qvi,
                             viscosity_residual)
from switchbench.snell import obstacle, reflect

SQ2 = 2 ** 0.5


def heat(h):
    return make(q=1, gamma=1.0, psi=[0.0], h=h, costs={},
                diffusion={"b": 0.0, "sigma": SQ2, "lipschitz": 0.0})


def test_heat_closed_form():
    p = load_bundled("heat")
    g = pde_grid(p)
    vf = solve_qvi(p, g)
    ins = g.interior()
    for m in range(0, g.time.M + 1, 2000):
        t = g.time.times[m]
        assert np.max(np.abs(vf.v[m][0] - (g.x ** 2 + 2 * (1 - t)))[ins]) <= 1e-3


def test_quartic_second_order():
    p = heat([[0, 0, 0, 0, 1.0]])
    errs = []
    for h in (0.1, 0.05):
        g = make_space_time_grid(p, h * h / 4, -8, 8, h)
        v = solve_qvi(p, g).v[0][0]
        x = g.x
        ins = np.abs(x) <= 2
        errs.append(np.max(np.abs(v - (x ** 4 + 12 * x ** 2 + 12))[ins]))
        assert errs[-1] <= 1.5 * h * h
    assert 3.5 <= errs[0] / errs[1] <= 4.5


def test_constant_rate_single_mode():
    p = make(q=1, gamma=1.0, psi=[0.7], costs={}, h=[0.0])
    vf = solve_qvi(p, make_space_time_grid(p, 0.1, -1, 1, 0.5))
    assert np.allclose(vf.v[0], 0.7, rtol=0, atol=1e-14)


@pytest.mark.parametrize("fx", ["step_down", "step_up", "never", "switch_now"])
def test_deterministic_matches_tree(fx, request):
    p = request.getfixturevalue(fx)
    lat = tree(p)
    out = compare_tree_pde(p, lat, make_space_time_grid(p, lat.grid.max_dt, -1, 1, 0.25), refine=False)
    assert out["baseline"]["max_diff"] <= 1e-12


def test_stencil_is_monotone():
    p = load_bundled("step_sigma")
    g = pde_grid(p)
    rng = np.random.default_rng(3)
    m = next(k for k in range(g.time.M) if g.time.dt(k) > 0)
    G = p.cost_matrix(float(g.time.times[m]), g.x)
    base = rng.normal(size=(p.q, g.nx))
    bump = base + rng.uniform(0, 0.1, size=base.shape)
    lo, _ = reflect(qvi_step(p, g, m, base), G)
    hi, _ = reflect(qvi_step(p, g, m, bump), G)
    assert np.all(hi >= lo)


def test_cfl_guard():
    p = heat([[0, 0, 1.0]])
    with pytest.raises(CFLError):
        make_space_time_grid(p, 0.01, -1, 1, 0.1)
    make_space_time_grid(p, 0.0025, -1, 1, 0.1)


def test_one_dimensional_only():
    p = make(q=1, gamma=1.0, psi=[0.0], h=[0.0], costs={}, r=2, x0=[0.0, 0.0],
             diffusion={"b": {"components": [0.0, 0.0]}, "sigma": {"components": [0.0, 0.0]}, "lipschitz": 0.0})
    with pytest.raises(ValueError):
        make_space_time_grid(p, 0.1, -1, 1, 0.1)


def test_residuals_and_obstacle_set(tmp_path):
    p = load_bundled("step_sigma")
    g = pde_grid(p)
    vf = solve_qvi(p, g)
    rep = viscosity_residual(vf, p, g)
    assert rep.passed() and rep.terminal_ok
    active = 0
    for m in range(g.time.M + 1):
        G = p.cost_matrix(float(g.time.times[m]), g.x, left=bool(g.time.pre_jump[m]))
        on = vf.obstacle_active[m]
        assert np.array_equal(vf.v[m][on], obstacle(vf.v[m], G)[on])
        active += int(on.sum())
    assert active > 0
    rep.export_csv(tmp_path / "r.csv")
    head = (tmp_path / "r.csv").read_text().splitlines()[0]
    assert head == "mode,t,x,v,active_tag,sub_residual,super_residual"


def test_step_sigma_refinement():
    p = load_bundled("step_sigma")
    out = compare_tree_pde(p, tree(p), pde_grid(p))
    assert out["refined"]["max_diff"] < out["baseline"]["max_diff"]
    assert out["factor"] >= 1.5
