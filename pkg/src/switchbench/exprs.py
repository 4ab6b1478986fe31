"""A small closed class of vectorized functions read from JSON.

Grammar (all forms evaluate elementwise with numpy):

    3.5                         constant
    [c0, c1, c2]                polynomial in x, lowest degree first (r = 1)
    {"poly": [...], "of": e}    polynomial of a sub-expression (default x)
    {"var": "t" | "x" | "x2" | "z" | "y1" ...}
    {"sum": [e, ...]}  {"prod": [e, ...]}  {"min": [e, ...]}  {"max": [e, ...]}
    {"neg": e}
    {"exp": e, "clip": [lo, hi]}   exp of e clipped to [lo, hi]

Distinct from Python callables, a compiled expression remembers which
variables it reads, which lets problems detect decoupled drivers.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Callable

import numpy as np


class ExprError(ValueError):
    pass


@dataclass(frozen=True)
class Expr:
    fn: Callable[[dict], Any]
    reads: frozenset
    source: Any

    def __call__(self, env: dict):
        return self.fn(env)


_NARY = {
    "sum": lambda args: sum(args[1:], args[0]),
    "prod": lambda args: _prod(args),
    "min": lambda args: _reduce(np.minimum, args),
    "max": lambda args: _reduce(np.maximum, args),
}


def _prod(args):
    out = args[0]
    for a in args[1:]:
        out = out * a
    return out


def _reduce(op, args):
    out = args[0]
    for a in args[1:]:
        out = op(out, a)
    return out


def _horner(coeffs, v):
    out = np.zeros_like(v, dtype=float) + coeffs[-1]
    for c in reversed(coeffs[:-1]):
        out = out * v + c
    return out


def _number_list(obj) -> list[float]:
    if not isinstance(obj, list) or not obj or not all(_is_number(c) for c in obj):
        raise ExprError(f"expected a non-empty list of numbers, got {obj!r}")
    return [float(c) for c in obj]


def _is_number(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool) and np.isfinite(v)


def _var_reader(name: str, r: int, q: int) -> Callable[[dict], Any]:
    if name == "t":
        return lambda env: env["t"]
    if name == "z":
        return lambda env: env["z"]
    if name == "x":
        if r != 1:
            raise ExprError("bare 'x' is ambiguous when r > 1; use x1, x2, ...")
        return lambda env: env["x"]
    if name[0] == "x" and name[1:].isdigit():
        k = int(name[1:])
        if not 1 <= k <= r:
            raise ExprError(f"{name} out of range for r={r}")
        if r == 1:
            return lambda env: env["x"]
        return lambda env: env["x"][:, k - 1]
    if name[0] == "y" and name[1:].isdigit():
        k = int(name[1:])
        if not 1 <= k <= q:
            raise ExprError(f"{name} out of range for q={q}")
        return lambda env: env["y"][k - 1]
    raise ExprError(f"unknown variable {name!r}")


def compile_expr(obj, allowed: set[str], r: int = 1, q: int = 1) -> Expr:
    """Compile ``obj``; ``allowed`` lists variable roots usable here (t, x, y, z)."""

    def check(name):
        root = name[0] if name[0] in "xy" else name
        if root not in allowed:
            raise ExprError(f"variable {name!r} is not available here (allowed: {sorted(allowed)})")

    def go(o) -> Expr:
        if _is_number(o):
            c = float(o)
            return Expr(lambda env: c, frozenset(), o)
        if isinstance(o, list):
            coeffs = _number_list(o)
            check("x")
            rd = _var_reader("x", r, q)
            return Expr(lambda env: _horner(coeffs, rd(env)), frozenset({"x"}), o)
        if not isinstance(o, dict):
            raise ExprError(f"cannot read expression {o!r}")
        keys = set(o)
        if keys == {"var"}:
            name = o["var"]
            if not isinstance(name, str) or not name:
                raise ExprError(f"bad variable {name!r}")
            check(name)
            rd = _var_reader(name, r, q)
            return Expr(rd, frozenset({name}), o)
        if "poly" in keys:
            if not keys <= {"poly", "of"}:
                raise ExprError(f"unknown keys {sorted(keys - {'poly', 'of'})} in poly")
            coeffs = _number_list(o["poly"])
            inner = go(o.get("of", {"var": "x"}))
            return Expr(lambda env: _horner(coeffs, np.asarray(inner(env), dtype=float)), inner.reads, o)
        if len(keys) == 1 and next(iter(keys)) in _NARY:
            op = next(iter(keys))
            args = o[op]
            if not isinstance(args, list) or not args:
                raise ExprError(f"{op} needs a non-empty list")
            subs = [go(a) for a in args]
            red = _NARY[op]
            reads = frozenset().union(*(s.reads for s in subs))
            return Expr(lambda env: red([s(env) for s in subs]), reads, o)
        if keys == {"neg"}:
            inner = go(o["neg"])
            return Expr(lambda env: -inner(env), inner.reads, o)
        if "exp" in keys:
            if keys != {"exp", "clip"}:
                raise ExprError("exp requires exactly the keys 'exp' and 'clip'")
            clip = o["clip"]
            if not isinstance(clip, list) or len(clip) != 2:
                raise ExprError("clip must be [lo, hi]")
            lo, hi = _number_list(clip)
            if lo > hi:
                raise ExprError("clip must be [lo, hi] with lo <= hi")
            inner = go(o["exp"])
            return Expr(lambda env: np.exp(np.clip(inner(env), lo, hi)), inner.reads, o)
        raise ExprError(f"unknown expression keys {sorted(keys)}")

    return go(obj)


def _shape_out(val, n: int) -> np.ndarray:
    return np.array(np.broadcast_to(np.asarray(val, dtype=float), (n,)))


def _n_of(x) -> int:
    x = np.asarray(x)
    return 1 if x.ndim == 0 else x.shape[0]


def as_tx(e: Expr):
    """Wrap as f(t, x)."""
    return _Wrapped(e, lambda t, x: {"t": t, "x": np.asarray(x, dtype=float)}, 2)


def as_x(e: Expr):
    return _Wrapped(e, lambda x: {"x": np.asarray(x, dtype=float)}, 1)


def as_txyz(e: Expr):
    return _Wrapped(e, lambda t, x, y, z: {"t": t, "x": np.asarray(x, dtype=float),
                                           "y": np.asarray(y, dtype=float), "z": z}, 4)


class _Wrapped:
    """Callable adaptor keeping the expression source for serialization."""

    def __init__(self, e: Expr, envf, arity: int):
        self.expr = e
        self._envf = envf
        self.arity = arity

    @property
    def reads(self):
        return self.expr.reads

    def __call__(self, *args):
        env = self._envf(*args)
        return _shape_out(self.expr(env), _n_of(env["x"]))

    def __repr__(self):
        return f"Expr({self.expr.source!r})"
