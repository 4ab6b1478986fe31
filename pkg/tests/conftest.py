from __future__ import annotations

import copy

import pytest

from switchbench.io import problem_from_dict
from switchbench.lattice import build_grid, build_tree


def make_doc(**kw) -> dict:
    """A deterministic two-mode problem document; keyword arguments override keys."""
    doc = {"q": 2, "T": 1.0, "x0": 0.0, "gamma": 0.5, "psi": [0.0, 0.0], "h": [0.0, 0.0],
           "costs": {"1->2": {"v0": 0.5}, "2->1": {"v0": 0.5}},
           "diffusion": {"b": 0.0, "sigma": 0.0, "lipschitz": 0.0}}
    doc.update(copy.deepcopy(kw))
    return doc


def make(**kw):
    return problem_from_dict(make_doc(**kw))


def tree(p, max_dt=None):
    dt = max_dt if max_dt is not None else p.meta.get("grids", {}).get("max_dt", 0.25)
    return build_tree(p, build_grid(p, dt))


STEP_COST = {"1->2": {"v0": 1.0, "steps": [{"t": 0.5, "v": 0.2}]}, "2->1": {"v0": 10.0}}
STEP_UP_COST = {"1->2": {"v0": 0.2, "steps": [{"t": 0.5, "v": 1.0}]}, "2->1": {"v0": 10.0}}
NEVER_COST = {"1->2": {"v0": 10.0}, "2->1": {"v0": 10.0}}


@pytest.fixture
def step_down():
    return make(psi=[0.0, 1.0], gamma=0.2, costs=STEP_COST)


@pytest.fixture
def step_up():
    return make(psi=[0.0, 1.0], gamma=0.2, costs=STEP_UP_COST)


@pytest.fixture
def never():
    return make(psi=[1.0, 0.0], gamma=10.0, costs=NEVER_COST)


@pytest.fixture
def switch_now():
    return make(psi=[0.0, 2.0], gamma=0.5)
