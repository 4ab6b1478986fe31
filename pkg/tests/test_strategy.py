from __future__ import annotations

import itertools

import numpy as np
import pytest
from conftest import make, tree

from switchbench.instances import random_micro_doc
from switchbench.io import problem_from_dict
from switchbench.lattice import build_grid, build_tree
from switchbench.snell import layer_costs, solve_capped, solve_full
from switchbench.strategy import (STAY, EpsilonPolicy, NonTerminationError, OracleSizeError, StayPolicy,
                                  TablePolicy, admissibility_bound, brute_force_value, evaluate_policy,
                                  export_strategies_csv, extract_epsilon_policy, max_switch_count,
                                  realize_strategies, sample_leaves)


def test_expensive_switching_means_stay(never):
    lat = tree(never)
    pol = extract_epsilon_policy(solve_full(never, lat), never, lat, 0.1)
    for m in range(lat.M + 1):
        for i in range(2):
            assert np.all(pol.targets(m, i, 0) == STAY)


def test_switch_now_policy(switch_now):
    lat = tree(switch_now)
    vf = solve_full(switch_now, lat)
    pol = extract_epsilon_policy(vf, switch_now, lat, 0.01)
    assert pol.targets(0, 0, 0).tolist() == [1]
    assert admissibility_bound(switch_now, vf) == 6
    s = realize_strategies(pol, switch_now, lat, 0)[0]
    assert [(e.layer, e.from_mode, e.to_mode) for e in s.events] == [(0, 0, 1)]
    assert s.count == 1 <= pol.bound


def test_step_down_policy(step_down):
    lat = tree(step_down)
    vf = solve_full(step_down, lat)
    pol = extract_epsilon_policy(vf, step_down, lat, 0.01)
    ev = realize_strategies(pol, step_down, lat, 0)[0].events
    assert ev[0].layer == 3 and lat.grid.labels()[3] == "0.5" and not lat.grid.pre_jump[3]
    J = evaluate_policy(pol, step_down, lat, 0)
    assert J >= 0.3 - 0.01
    assert abs(J - 0.3) <= 1e-15


def test_always_stay(never):
    assert evaluate_policy(StayPolicy(tree(never)), never, tree(never), 0) == 1.0


def test_terminal_switch_is_free(step_down):
    lat = tree(step_down)
    base = extract_epsilon_policy(solve_full(step_down, lat), step_down, lat, 0.01)

    def rule(m, j, mode, n):
        if m == lat.M:
            return 1 - mode if n < 3 else None
        k = int(base.targets(m, mode, n)[j])
        return None if k == STAY else k
    pol = TablePolicy(lat, rule, bound=10)
    assert evaluate_policy(pol, step_down, lat, 0) == evaluate_policy(base, step_down, lat, 0)


def test_eps_must_be_positive(step_down):
    lat = tree(step_down)
    with pytest.raises(ValueError):
        extract_epsilon_policy(solve_full(step_down, lat), step_down, lat, 0.0)


def test_looping_policy_hits_guard(switch_now):
    lat = tree(switch_now)
    pol = TablePolicy(lat, lambda m, j, mode, n: 1 - mode, bound=5)
    with pytest.raises(NonTerminationError):
        evaluate_policy(pol, switch_now, lat, 0)


def test_trigger_invariant_on_micro():
    p = problem_from_dict(random_micro_doc(5))
    lat = build_tree(p, build_grid(p, p.meta["grids"]["max_dt"]))
    vf = solve_full(p, lat)
    for eps in (0.1, 0.01):
        pol = extract_epsilon_policy(vf, p, lat, eps)
        for m in range(lat.M):
            G = layer_costs(p, lat, m)
            for i in range(p.q):
                for n in range(3):
                    tg = pol.targets(m, i, n)
                    for j in np.nonzero(tg != STAY)[0]:
                        k = tg[j]
                        assert k != i
                        assert vf.Y[m][i, j] <= vf.Y[m][k, j] - G[i, k, j] + eps / 2 ** (n + 1)


def test_oracle_examples(never, step_down):
    assert brute_force_value(never, tree(never), 0, 2) == 1.0
    assert abs(brute_force_value(step_down, tree(step_down), 0, 1) - 0.3) <= 1e-15


def test_oracle_matches_capped_on_random_tree():
    doc = random_micro_doc(2)
    doc.update({"q": 2, "psi": doc["psi"][:2], "h": doc["h"][:2],
                "costs": {k: v for k, v in doc["costs"].items() if k in ("1->2", "2->1")},
                "diffusion": {"b": 0.0, "sigma": 1.0}, "grids": {"max_dt": 0.25}})
    p = problem_from_dict(doc)
    lat = build_tree(p, build_grid(p, 0.25))
    assert int(lat.depth[-1]) == 4
    cap = solve_capped(p, lat, 3)
    for i in range(2):
        assert abs(brute_force_value(p, lat, i, 3) - cap.y0[i]) <= 1e-12


def test_oracle_size_bounds():
    p = make(diffusion={"b": 0.0, "sigma": 1.0})
    lat = build_tree(p, build_grid(p, 1 / 6))
    with pytest.raises(OracleSizeError):
        brute_force_value(p, lat, 0, 1)
    with pytest.raises(OracleSizeError):
        brute_force_value(p, tree(p), 0, 5)


def _all_policies(lat, q=2):
    keys = [(m, j, i, n) for m in range(lat.M) for j in range(lat.n_nodes(m)) for i in range(q) for n in (0, 1)]
    for bits in itertools.product((False, True), repeat=len(keys)):
        table = dict(zip(keys, bits))
        yield TablePolicy(lat, lambda m, j, i, n, t=table: (1 - i) if t.get((m, j, i, n), False) else None,
                          bound=2)


def test_exhaustive_policy_enumeration_depth_two():
    doc = random_micro_doc(4)
    doc.update({"q": 2, "psi": [[0.1, 0.5], [0.3, -0.4]], "h": [0.0, 0.05],
                "costs": {"1->2": {"v0": 0.1}, "2->1": {"v0": 0.15}}, "gamma": 0.1,
                "diffusion": {"b": 0.0, "sigma": 1.0}, "grids": {"max_dt": 0.5}})
    p = problem_from_dict(doc)
    lat = build_tree(p, build_grid(p, 0.5))
    full = solve_full(p, lat)
    for i in range(2):
        best = max(evaluate_policy(pol, p, lat, i) for pol in _all_policies(lat))
        assert abs(best - brute_force_value(p, lat, i, 2)) <= 1e-12
        assert abs(best - solve_capped(p, lat, 2).y0[i]) <= 1e-12
        assert best <= full.y0[i] + 1e-12


def test_admissibility_audit_symmetric():
    doc = random_micro_doc(6)
    doc.update({"q": 2, "psi": [[0.0, 1.0], [0.0, -1.0]], "h": [0.0, 0.0], "gamma": 0.05,
                "costs": {"1->2": {"v0": 0.05}, "2->1": {"v0": 0.05}},
                "diffusion": {"b": 0.0, "sigma": 1.0}, "grids": {"max_dt": 1 / 12}})
    p = problem_from_dict(doc)
    lat = build_tree(p, build_grid(p, 1 / 12))
    vf = solve_full(p, lat)
    pol = extract_epsilon_policy(vf, p, lat, 0.01)
    strats = realize_strategies(pol, p, lat, 0, sample_leaves(lat, 1000, 0))
    assert len(strats) == 1000
    assert max(s.count for s in strats) <= pol.bound
    assert max_switch_count(pol, p, lat, 0) <= pol.bound
    assert max(s.count for s in strats) >= 1


def test_strategy_csv(tmp_path, switch_now):
    lat = tree(switch_now)
    pol = extract_epsilon_policy(solve_full(switch_now, lat), switch_now, lat, 0.01)
    export_strategies_csv(realize_strategies(pol, switch_now, lat, 0), tmp_path / "s.csv")
    assert (tmp_path / "s.csv").read_text().splitlines() == [
        "path_id,layer,time,from_mode,to_mode,cost_paid", "0,0,0,1,2,0.5"]
