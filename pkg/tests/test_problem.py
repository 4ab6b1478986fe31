from __future__ import annotations

import json

import numpy as np
import pytest
from conftest import STEP_COST, make, make_doc, tree

from switchbench.exprs import ExprError, compile_expr
from switchbench.io import ProblemFileError, problem_from_dict
from switchbench.problem import (AssumptionError, ProbePlan, StructureError, ensure_valid, exp_transform,
                                 validate)
from switchbench.rbsde import picard_solve
from switchbench.snell import solve_full


def test_all_pass_when_switching_is_expensive():
    p = make(gamma=10.0, costs={"1->2": {"v0": 10.0}, "2->1": {"v0": 10.0}})
    rep = validate(p)
    assert rep.passed
    assert set(rep.checks) >= {"A", "H2ii", "H2iv", "H3", "H4"}


def test_h4_failure_has_witness():
    p = make(h=[0.0, 1.0], costs={"1->2": {"v0": 0.5}, "2->1": {"v0": 0.5}})
    rep = validate(p)
    assert not rep.checks["H4"].passed
    w = rep.checks["H4"].witness
    assert w is not None and "x" in w
    with pytest.raises(AssumptionError):
        ensure_valid(p)


def test_gamma_checks_left_limits_and_values():
    assert validate(make(gamma=0.2, psi=[0.0, 1.0], costs=STEP_COST)).checks["A"].passed
    rep = validate(make(gamma=0.3, psi=[0.0, 1.0], costs=STEP_COST))
    assert not rep.checks["A"].passed
    assert rep.checks["A"].witness["t"] >= 0.5


def test_gamma_zero_fails_assumption_a():
    rep = validate(make(gamma=0.0))
    assert not rep.checks["A"].passed
    assert "gamma" in rep.checks["A"].message


def test_structural_errors():
    with pytest.raises(StructureError):
        validate(make(q=0, psi=[], h=[], costs={}))
    with pytest.raises(StructureError):
        make(T=0.0)
    with pytest.raises(StructureError):
        validate(make(costs={"1->2": {"v0": 0.5}}))
    with pytest.raises(StructureError):
        validate(make(psi=[0.0]))


def test_validate_is_pure():
    doc = make_doc(drivers={"f": [{"prod": [0.5, {"var": "y2"}]}, {"prod": [0.5, {"var": "y1"}]}],
                            "lipschitz": 0.5, "monotone": True})
    doc.pop("psi")
    p = problem_from_dict(doc)
    a = json.dumps(validate(p, ProbePlan(seed=3)).to_json(), sort_keys=True)
    b = json.dumps(validate(p, ProbePlan(seed=3)).to_json(), sort_keys=True)
    assert a == b


def test_lipschitz_probe_catches_understated_constant():
    doc = make_doc(drivers={"f": [{"prod": [2.0, {"var": "y2"}]}, {"var": "y1"}], "lipschitz": 0.5})
    doc.pop("psi")
    rep = validate(problem_from_dict(doc))
    assert not rep.checks["H2ii"].passed


def test_monotone_flag_is_probed():
    doc = make_doc(drivers={"f": [{"neg": {"var": "y2"}}, {"var": "y1"}], "lipschitz": 1.0, "monotone": True})
    doc.pop("psi")
    rep = validate(problem_from_dict(doc))
    assert not rep.checks["H2iv"].passed
    assert rep.checks["H2iv"].witness is not None


def test_schema_rejects_unknown_keys():
    with pytest.raises(ProblemFileError):
        problem_from_dict(make_doc(colour="red"))
    with pytest.raises(ProblemFileError):
        problem_from_dict(make_doc(costs={"1->2": {"v0": 0.5, "bogus": 1}, "2->1": {"v0": 0.5}}))


def test_expression_grammar():
    e = compile_expr([1.0, 2.0, 3.0], {"x"}, 1, 1)
    assert np.allclose(e({"x": np.array([0.0, 1.0, 2.0])}), [1.0, 6.0, 17.0])
    e = compile_expr({"max": [{"var": "x"}, {"exp": {"var": "t"}, "clip": [-1, 1]}]}, {"t", "x"}, 1, 1)
    assert np.allclose(e({"t": np.array([0.0, 5.0]), "x": np.array([0.5, 0.5])}), [1.0, np.e])
    with pytest.raises(ExprError):
        compile_expr({"var": "y3"}, {"t", "x", "y", "z"}, 1, 2)
    with pytest.raises(ExprError):
        compile_expr({"sin": 1}, {"x"}, 1, 1)


def test_polynomial_profiles_evaluate():
    p = make(psi=[[1.0, 2.0], 0.0], h=[[0.0, 0.0, 1.0], 0.0])
    x = np.array([0.0, 1.0, -2.0])
    assert p.rate(0, 0.0, x).tolist() == [1.0, 3.0, -3.0]
    assert p.terminal(0, x).tolist() == [0.0, 1.0, 4.0]


def _transformed_partials(pt, i, k, n=100, seed=0, step=1e-4):
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n):
        t = rng.uniform(0, 1)
        x = np.array([rng.uniform(-2, 2)])
        y = rng.uniform(-3, 3, (pt.q, 1))
        z = np.array([rng.uniform(-1, 1)])
        yp = y.copy()
        yp[k] += step
        out.append(float((pt.drive(i, t, x, yp, z) - pt.drive(i, t, x, y, z))[0] / step))
    return np.array(out)


def test_exp_transform_partials():
    doc = make_doc(drivers={"f": [{"neg": {"var": "y2"}}, {"var": "y1"}], "lipschitz": 1.0})
    doc.pop("psi")
    p = problem_from_dict(doc)
    pt = exp_transform(p, 2.0)
    # cross partial unchanged, own partial shifted by -alpha
    assert np.allclose(_transformed_partials(pt, 0, 1), -1.0, atol=1e-8)
    assert np.allclose(_transformed_partials(pt, 0, 0), -2.0, atol=1e-8)
    assert pt.lipschitz == p.lipschitz + 2.0


def test_exp_transform_scales_costs_and_terminal():
    p = make(gamma=0.5, h=[1.0, 1.0])
    pt = exp_transform(p, 1.0)
    t = np.linspace(0, 1, 11)
    g = pt.cost(0, 1, t, np.zeros(11))
    assert np.allclose(g, np.exp(t) * 0.5)
    assert np.all(g >= 0.5)
    assert np.allclose(pt.terminal(0, np.zeros(3)), np.e)


def test_exp_transform_identity_and_domain():
    p = make()
    assert exp_transform(p, 0.0) is p
    with pytest.raises(ValueError):
        exp_transform(p, -1.0)


def test_exp_transform_round_trip():
    errs = []
    for dt in (1e-2, 5e-3):
        p = make(psi=[0.0, 1.0], gamma=0.2, costs=STEP_COST)
        lat = tree(p, dt)
        full = solve_full(p, lat)
        vf, _ = picard_solve(exp_transform(p, 1.0), lat)
        back = [a * np.exp(-float(t)) for a, t in zip(vf.Y, lat.times)]
        err = max(float(np.max(np.abs(a - b))) for a, b in zip(back, full.Y))
        assert err <= dt
        errs.append(err)
    assert errs[0] / errs[1] > 1.8
    p = make(psi=[0.0, 1.0], gamma=0.2, costs=STEP_COST)
    lat = tree(p, 0.1)
    vf, _ = picard_solve(exp_transform(p, 0.0), lat)
    assert vf.max_abs_diff(solve_full(p, lat)) <= 1e-12
