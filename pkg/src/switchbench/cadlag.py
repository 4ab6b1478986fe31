"""Piecewise-constant cadlag time profiles.

A :class:`StepFunction` is right-continuous with finitely many breakpoints.
Left limits are exact, and the upper/lower semicontinuous envelopes are
carried as step functions with explicit point values at the breakpoints,
because the usc envelope of a downward jump is not itself right-continuous.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np


class DomainError(ValueError):
    """Raised when a time lies outside the domain of a profile."""


def _check_time(t, horizon: float, allow_zero: bool = True) -> np.ndarray:
    arr = np.asarray(t, dtype=float)
    lo_bad = arr < 0.0 if allow_zero else arr <= 0.0
    if np.any(lo_bad) or np.any(arr > horizon) or np.any(~np.isfinite(arr)):
        bad = arr[np.logical_or(lo_bad, arr > horizon)] if arr.ndim else arr
        where = "(0, T]" if not allow_zero else "[0, T]"
        raise DomainError(f"time {np.ravel(bad)[:3]} outside {where} with T={horizon}")
    return arr


@dataclass(frozen=True)
class StepFunction:
    """Right-continuous step function on [0, horizon].

    ``values[0]`` holds on ``[0, breakpoints[0])`` and ``values[j]`` on
    ``[breakpoints[j-1], breakpoints[j])``; the last segment is closed at the
    horizon.  A breakpoint at the horizon gives a degenerate final segment
    whose value is the value at T.
    """

    breakpoints: tuple[float, ...]
    values: tuple[float, ...]
    horizon: float

    def __post_init__(self):
        bps = tuple(float(b) for b in self.breakpoints)
        vals = tuple(float(v) for v in self.values)
        object.__setattr__(self, "breakpoints", bps)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "horizon", float(self.horizon))
        if not self.horizon > 0:
            raise DomainError("horizon must be positive")
        if len(vals) != len(bps) + 1:
            raise ValueError(f"need {len(bps) + 1} segment values, got {len(vals)}")
        if any(not np.isfinite(v) for v in vals):
            raise ValueError("segment values must be finite")
        if any(b < 0 or b > self.horizon for b in bps):
            raise DomainError(f"breakpoints must lie in [0, {self.horizon}]")
        if any(b2 <= b1 for b1, b2 in zip(bps, bps[1:])):
            raise ValueError("breakpoints must be strictly increasing")

    @classmethod
    def constant(cls, value: float, horizon: float) -> "StepFunction":
        return cls((), (value,), horizon)

    @classmethod
    def from_json(cls, obj: Mapping, horizon: float) -> "StepFunction":
        steps = obj.get("steps", [])
        return cls(tuple(s["t"] for s in steps), (obj["v0"],) + tuple(s["v"] for s in steps), horizon)

    def to_json(self) -> dict:
        return {"v0": self.values[0],
                "steps": [{"t": t, "v": v} for t, v in zip(self.breakpoints, self.values[1:])]}

    # evaluation
    def __call__(self, t):
        return self.eval(t)

    def eval(self, t):
        arr = _check_time(t, self.horizon)
        idx = np.searchsorted(np.asarray(self.breakpoints), arr, side="right")
        out = np.asarray(self.values)[idx]
        return float(out) if out.ndim == 0 else out

    def left_limit(self, t):
        arr = _check_time(t, self.horizon, allow_zero=False)
        idx = np.searchsorted(np.asarray(self.breakpoints), arr, side="left")
        out = np.asarray(self.values)[idx]
        return float(out) if out.ndim == 0 else out

    def jumps(self) -> list[tuple[float, float]]:
        """(t, f(t) - f(t-)) for breakpoints where the limits differ (t > 0)."""
        out = []
        for j, b in enumerate(self.breakpoints):
            if b > 0 and self.values[j + 1] != self.values[j]:
                out.append((b, self.values[j + 1] - self.values[j]))
        return out

    def is_continuous(self) -> bool:
        return not self.jumps()

    def continuous_at(self, t: float) -> bool:
        if t <= 0:
            return True
        return self.eval(t) == self.left_limit(t)

    def minimum(self) -> float:
        # a segment starting at a breakpoint at 0 never shows its initial value
        vals = self.values[1:] if self.breakpoints and self.breakpoints[0] == 0.0 else self.values
        return min(vals)

    def maximum(self) -> float:
        vals = self.values[1:] if self.breakpoints and self.breakpoints[0] == 0.0 else self.values
        return max(vals)

    def simplify(self) -> "StepFunction":
        """Drop breakpoints across which the value does not change."""
        bps, vals = [], [self.values[0]]
        for b, v in zip(self.breakpoints, self.values[1:]):
            if v != vals[-1]:
                bps.append(b)
                vals.append(v)
        return StepFunction(tuple(bps), tuple(vals), self.horizon)


def step_eval(f: StepFunction, t):
    return f.eval(t)


def left_limit(f: StepFunction, t):
    return f.left_limit(t)


@dataclass(frozen=True)
class PointedStepFunction:
    """A step function whose values at selected breakpoints are overridden."""

    base: StepFunction
    points: Mapping[float, float] = field(default_factory=dict)

    @property
    def horizon(self) -> float:
        return self.base.horizon

    def eval(self, t):
        arr = np.asarray(t, dtype=float)
        out = np.array(self.base.eval(arr), dtype=float, ndmin=1 if arr.ndim else 0)
        if out.ndim == 0:
            return float(self.points.get(float(arr), float(out)))
        flat = arr.ravel()
        res = out.ravel().copy()
        for k, tk in enumerate(flat):
            if tk in self.points:
                res[k] = self.points[tk]
        return res.reshape(arr.shape)

    __call__ = eval

    def left_limit(self, t):
        return self.base.left_limit(t)


@dataclass(frozen=True)
class EnvelopePair:
    usc: PointedStepFunction
    lsc: PointedStepFunction


def point_envelope(left, at, right=None):
    """(usc, lsc) at a point from its left limit, value and right limit.

    ``left`` may be None at t = 0.  For a right-continuous profile the right
    limit equals the value and can be omitted.
    """
    vals = [np.asarray(at, dtype=float)]
    if left is not None:
        vals.append(np.asarray(left, dtype=float))
    if right is not None:
        vals.append(np.asarray(right, dtype=float))
    hi, lo = vals[0], vals[0]
    for v in vals[1:]:
        hi = np.maximum(hi, v)
        lo = np.minimum(lo, v)
    return hi, lo


def envelopes(f: StepFunction) -> EnvelopePair:
    up, down = {}, {}
    for b in f.breakpoints:
        left = f.left_limit(b) if b > 0 else None
        hi, lo = point_envelope(left, f.eval(b))
        up[b], down[b] = float(hi), float(lo)
    return EnvelopePair(PointedStepFunction(f, up), PointedStepFunction(f, down))


_OPS: dict[str, Callable] = {
    "sum": lambda a, b: a + b,
    "min": min,
    "max": max,
}


def combine(f1: StepFunction, f2: StepFunction | None, op: str) -> StepFunction:
    """Pointwise ``op`` of two step functions on the merged breakpoint set.

    ``op`` is one of sum, min, max, negate; for negate ``f2`` is ignored.
    """
    if op == "negate":
        return StepFunction(f1.breakpoints, tuple(-v for v in f1.values), f1.horizon)
    if op not in _OPS:
        raise ValueError(f"unknown op {op!r}")
    if f2 is None or f1.horizon != f2.horizon:
        raise DomainError("combine needs two profiles on the same horizon")
    fn = _OPS[op]
    bps = tuple(sorted(set(f1.breakpoints) | set(f2.breakpoints)))
    vals = [fn(f1.values[0], f2.values[0])]
    for b in bps:
        vals.append(fn(f1.eval(b), f2.eval(b)))
    return StepFunction(bps, tuple(vals), f1.horizon)
