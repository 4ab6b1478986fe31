from __future__ import annotations

import math

import numpy as np
import pytest
from conftest import make, tree

from switchbench.acceptance import bm_lattice, comparison_pairs
from switchbench.instances import load_bundled
from switchbench.problem import DriverError
from switchbench.rbsde import (FrozenInput, PicardDivergenceError, StepSizeError, beta_norm, bounding_bsdes,
                               comparison_check, monotone_solve, picard_solve, solve_bsde, solve_frozen)
from switchbench.snell import layer_costs, obstacle, solve_full


def test_bounding_zero_driver():
    p = make(h=[1.0, 0.0])
    b = bounding_bsdes(p, tree(p))
    assert all(np.all(a == 1.0) for a in b.upper)
    assert all(np.all(a == 0.0) for a in b.lower)


def test_bounding_constant_driver():
    p = make(psi=[0.3, 0.3], h=[1.0, 0.0])
    lat = tree(p)
    b = bounding_bsdes(p, lat)
    for m, t in enumerate(lat.times):
        assert np.allclose(b.upper[m], 1.0 + 0.3 * (1.0 - t), atol=1e-14)
        assert np.allclose(b.lower[m], 0.3 * (1.0 - t), atol=1e-14)


def _z(t, x, y, z):
    return z


def test_z_driver_linear_terminal():
    Y, Z, _ = solve_bsde(bm_lattice(3), _z, lambda x: x)
    assert abs(Y[0][0] - 1.0) <= 1e-14
    assert np.allclose(Z[0], 1.0)


def test_z_driver_quadratic_terminal():
    # by hand: Y0 = 3 dt + 6 dt^2 with dt = 1/3
    Y, _, _ = solve_bsde(bm_lattice(3), _z, lambda x: x * x)
    assert abs(Y[0][0] - 5.0 / 3.0) <= 1e-14


def test_step_size_guard():
    with pytest.raises(StepSizeError):
        solve_bsde(bm_lattice(1), _z, lambda x: x, lipschitz=1.0)


def test_frozen_at_full_reproduces_full(step_down):
    lat = tree(step_down)
    full = solve_full(step_down, lat)
    vf = solve_frozen(step_down, lat, full)
    assert all(np.array_equal(a, b) for a, b in zip(vf.Y, full.Y))


def test_frozen_zero_problem():
    p = make()
    lat = tree(p)
    zero = [np.zeros((2, lat.n_nodes(m))) for m in range(lat.M + 1)]
    vf = solve_frozen(p, lat, zero)
    assert all(np.all(a == 0) for a in vf.Y)
    assert all(np.all(a == 0) for a in vf.dK)


def test_push_only_where_obstacle_binds():
    p = load_bundled("coupled_step")
    lat = tree(p)
    vf = solve_frozen(p, lat, picard_solve(p, lat)[0])
    pushed = 0
    for m in range(lat.M):
        cont = vf.Y[m] - vf.dK[m]
        obs = obstacle(vf.Y[m], layer_costs(p, lat, m))
        assert np.array_equal(vf.dK[m] > 0, obs > cont)
        pushed += int(np.sum(vf.dK[m] > 0))
    assert pushed > 0


def test_frozen_shape_checked(step_down):
    lat = tree(step_down)
    with pytest.raises(ValueError):
        solve_frozen(step_down, lat, [np.zeros((2, 1))])


def test_beta_norm():
    p = load_bundled("coupled_step")
    lat = tree(p)
    u = [np.zeros((2, lat.n_nodes(m))) for m in range(lat.M + 1)]
    v = [a + 0.7 for a in u]
    assert beta_norm(u, u, 3.0, lat) == 0.0
    assert abs(beta_norm(u, v, 3.0, lat) - 0.7 * math.sqrt(2 * (math.exp(3.0) - 1) / 3.0)) <= 1e-12
    assert abs(beta_norm(u, v, 0.0, lat) - 0.7 * math.sqrt(2.0)) <= 1e-12
    with pytest.raises(ValueError):
        beta_norm(u, v[:-1], 1.0, lat)


def test_picard_decoupled_one_step(step_down):
    lat = tree(step_down)
    vf, log = picard_solve(step_down, lat)
    assert log.converged and log.distances[-1] == 0.0 and len(log.records) == 2
    assert all(np.array_equal(a, b) for a, b in zip(vf.Y, solve_full(step_down, lat).Y))


def test_picard_cosh():
    p = load_bundled("cosh")
    vf, log = picard_solve(p, tree(p))
    assert np.all(np.abs(vf.Y[0] - math.exp(0.5)) <= 1e-3)
    assert all(r < 1 for r in log.ratios())


def test_picard_coupled_step_contracts():
    p = load_bundled("coupled_step")
    _, log = picard_solve(p, tree(p))
    assert log.converged and all(r < 1 for r in log.ratios())
    with pytest.raises(PicardDivergenceError):
        picard_solve(p, tree(p), max_iter=1)


def test_picard_rejects_small_beta(step_down):
    with pytest.raises(ValueError):
        picard_solve(step_down, tree(step_down), beta=-1.0)


def test_monotone_stage_zero_is_lower_bound(step_down):
    lat = tree(step_down)
    st = monotone_solve(step_down, lat, 0)
    low = bounding_bsdes(step_down, lat).lower
    assert len(st) == 1 and all(np.array_equal(a[0], b) for a, b in zip(st[0].Y, low))


def test_monotone_stage_one_without_switching(never):
    lat = tree(never)
    st = monotone_solve(never, lat, 1)
    assert all(np.array_equal(a, b) for a, b in zip(st[1].Y, solve_full(never, lat).Y))


def test_monotone_stabilizes(step_down):
    lat = tree(step_down)
    st = monotone_solve(step_down, lat, 6)
    full = solve_full(step_down, lat)
    assert all(np.array_equal(a, b) for a, b in zip(st[2].Y, full.Y))
    assert all(np.array_equal(a, b) for a, b in zip(st[6].Y, full.Y))


def test_monotone_sandwich_cosh():
    p = load_bundled("cosh")
    lat = tree(p)
    st = monotone_solve(p, lat, 8)
    up = bounding_bsdes(p, lat).upper
    for lo, hi in zip(st[:-1], st[1:]):
        assert all(np.all(a <= b + 1e-12) for a, b in zip(lo.Y, hi.Y))
    assert all(np.all(a <= u + 1e-12) for a, u in zip(st[-1].Y, up))


def test_monotone_needs_declaration():
    p = make(drivers={"f": [{"prod": [0.5, {"var": "y2"}]}, {"prod": [0.5, {"var": "y1"}]}],
                      "lipschitz": 0.5, "monotone": False})
    with pytest.raises(DriverError):
        monotone_solve(p, tree(p), 2)


def test_comparison_pairs():
    pairs = comparison_pairs()
    rep = comparison_check(pairs)
    assert rep.passed() and len(pairs) == 42
    assert rep.margins[0] == 0.0
