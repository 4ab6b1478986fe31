from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from switchbench.acceptance import envelope_identities, random_step_function
from switchbench.cadlag import (DomainError, StepFunction, combine, envelopes, left_limit,
                                point_envelope, step_eval)

F = StepFunction((0.5,), (1.0, 0.2), 1.0)


def test_eval_is_right_continuous():
    assert step_eval(F, 0.5) == 0.2
    assert step_eval(F, 0.49) == 1.0
    assert step_eval(StepFunction.constant(3.0, 1.0), 0.77) == 3.0


def test_left_limits():
    assert left_limit(F, 0.5) == 1.0
    assert left_limit(F, 0.7) == 0.2
    assert left_limit(StepFunction.constant(3.0, 1.0), 0.5) == 3.0
    with pytest.raises(DomainError):
        left_limit(F, 0.0)


def test_domain_errors():
    with pytest.raises(DomainError):
        F.eval(1.5)
    with pytest.raises(DomainError):
        F.eval(-0.1)


def test_invalid_construction():
    with pytest.raises(ValueError):
        StepFunction((0.5, 0.4), (1.0, 2.0, 3.0), 1.0)
    with pytest.raises(ValueError):
        StepFunction((0.5,), (1.0,), 1.0)
    with pytest.raises(ValueError):
        StepFunction((1.5,), (1.0, 2.0), 1.0)


def test_breakpoint_at_horizon():
    f = StepFunction((1.0,), (1.0, 2.0), 1.0)
    assert f.eval(1.0) == 2.0
    assert f.left_limit(1.0) == 1.0


def test_json_round_trip():
    doc = {"v0": 1.0, "steps": [{"t": 0.5, "v": 0.2}]}
    f = StepFunction.from_json(doc, 1.0)
    assert f == F
    assert f.to_json() == doc


def test_envelope_examples():
    e = envelopes(StepFunction((0.5,), (1.0, 0.0), 1.0))
    assert e.usc(0.5) == 1.0 and e.lsc(0.5) == 0.0
    c = StepFunction.constant(2.0, 1.0)
    ec = envelopes(c)
    for t in (0.0, 0.3, 1.0):
        assert ec.usc(t) == ec.lsc(t) == 2.0
    up = envelopes(StepFunction((0.3,), (0.0, 1.0), 1.0))
    assert up.usc(0.3) == 1.0 and up.lsc(0.3) == 0.0
    # off breakpoints both equal f
    assert up.usc(0.2) == up.lsc(0.2) == 0.0


def test_point_envelope():
    hi, lo = point_envelope(np.array([1.0, 0.0]), np.array([0.0, 1.0]))
    assert hi.tolist() == [1.0, 1.0] and lo.tolist() == [0.0, 0.0]
    hi, lo = point_envelope(None, 2.0, 3.0)
    assert (float(hi), float(lo)) == (3.0, 2.0)


def test_combine_examples():
    one = StepFunction.constant(1.0, 1.0)
    two = StepFunction.constant(2.0, 1.0)
    assert combine(one, two, "sum").simplify() == StepFunction.constant(3.0, 1.0)
    a = StepFunction((0.5,), (1.0, 0.0), 1.0)
    b = StepFunction((0.5,), (0.0, 1.0), 1.0)
    assert combine(a, b, "max").simplify() == one
    assert combine(a, None, "negate") == StepFunction((0.5,), (-1.0, 0.0), 1.0)
    with pytest.raises(DomainError):
        combine(a, StepFunction.constant(1.0, 2.0), "sum")
    with pytest.raises(ValueError):
        combine(a, b, "div")


def test_jumps_and_continuity():
    assert F.jumps() == [(0.5, -0.8)]
    assert not F.is_continuous()
    assert StepFunction((0.5,), (1.0, 1.0), 1.0).is_continuous()
    assert F.continuous_at(0.2) and not F.continuous_at(0.5)


def test_envelope_algebra_on_1000_pairs():
    rng = np.random.default_rng(11)
    for k in range(1000):
        f1 = random_step_function(rng)
        if k % 4 == 0:
            f1 = StepFunction.constant(f1.values[0], 1.0)
        assert envelope_identities(f1, random_step_function(rng)) == []


values = st.integers(-8, 8).map(lambda v: v / 4.0)
breaks = st.lists(st.integers(0, 16).map(lambda v: v / 16.0), max_size=5, unique=True).map(sorted)


@st.composite
def step_functions(draw):
    bps = draw(breaks)
    vals = draw(st.lists(values, min_size=len(bps) + 1, max_size=len(bps) + 1))
    return StepFunction(tuple(bps), tuple(vals), 1.0)


@settings(max_examples=200, deadline=None)
@given(step_functions(), step_functions())
def test_envelope_algebra_property(f1, f2):
    assert envelope_identities(f1, f2) == []


@settings(max_examples=200, deadline=None)
@given(step_functions(), st.floats(0.0, 1.0))
def test_envelopes_bracket_f(f, t):
    e = envelopes(f)
    assert e.usc(t) >= f.eval(t) >= e.lsc(t)


@settings(max_examples=200, deadline=None)
@given(step_functions(), step_functions(), st.sampled_from(["sum", "min", "max"]))
def test_combine_commutes_with_eval(f1, f2, op):
    g = combine(f1, f2, op)
    fn = {"sum": lambda a, b: a + b, "min": min, "max": max}[op]
    for t in np.linspace(0.0, 1.0, 33):
        assert g.eval(t) == fn(f1.eval(t), f2.eval(t))
