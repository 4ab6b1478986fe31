"""Coupled reflected BSDE systems on the tree.

Backward steps use the two-point conditional expectation and the explicit
martingale coefficient Z_m = (Y_up - Y_down) / (2 sqrt(dt)) from the next
layer; y enters the driver implicitly and is found by fixed-point iteration,
which contracts when dt * C < 1.

The Picard map freezes the drivers at u and keeps the obstacles
interconnected, so one application solves

    Y^i = h_i + int f_i(s, X, u, Z^i) ds - int Z^i dB + K^i,
    Y^i >= max_{k != i} (Y^k - g_ik),

by the same-layer reflection closure used for the Snell system.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .lattice import Lattice
from .problem import AssumptionError, DriverError, SwitchingProblem, ensure_valid, exp_transform, validate
from .snell import ValueField, layer_costs, obstacle, reflect

INNER_TOL = 1e-13
INNER_MAX = 100


class StepSizeError(ValueError):
    pass


class InnerDivergenceError(RuntimeError):
    pass


class PicardDivergenceError(RuntimeError):
    def __init__(self, msg, log):
        super().__init__(msg)
        self.log = log


def _fixed_point(fn: Callable[[np.ndarray], np.ndarray], base: np.ndarray, dt: float) -> np.ndarray:
    """Solve y = base + dt * fn(y) nodewise."""
    y = base.copy()
    if dt == 0.0:
        return y
    for _ in range(INNER_MAX):
        new = base + fn(y) * dt
        if np.all(np.abs(new - y) <= INNER_TOL * (1.0 + np.abs(new))):
            return new
        y = new
    raise InnerDivergenceError(f"inner fixed point did not converge in {INNER_MAX} iterations")


def check_step(lat: Lattice, C: float) -> None:
    dts = [lat.grid.dt(m) for m in range(lat.M)]
    worst = max(dts) * C if dts else 0.0
    if worst >= 1.0:
        raise StepSizeError(f"dt * C = {worst:g} >= 1; refine the grid")


def solve_bsde(lat: Lattice, driver: Callable, terminal: Callable, barrier: Callable | None = None,
               lipschitz: float | None = None):
    """Scalar (reflected) BSDE: driver(t, x, y, z), terminal(x), barrier(t, x, left).

    Returns per-layer lists (Y, Z, dK) of node arrays.
    """
    if lipschitz is not None:
        check_step(lat, lipschitz)
    M = lat.M
    Y, Z, dK = [None] * (M + 1), [None] * (M + 1), [None] * (M + 1)
    Y[M] = np.asarray(terminal(lat.states[M]), dtype=float)
    if barrier is not None:
        Y[M] = np.maximum(Y[M], barrier(float(lat.times[M]), lat.states[M], False))
    Z[M] = np.zeros_like(Y[M])
    dK[M] = np.zeros_like(Y[M])
    for m in range(M - 1, -1, -1):
        t = float(lat.times[m])
        x = lat.states[m]
        dt = lat.grid.dt(m)
        z = Z[m + 1].copy() if dt == 0.0 else lat.zeta(m, Y[m + 1])
        base = lat.expect(m, Y[m + 1])
        y = _fixed_point(lambda v: np.asarray(driver(t, x, v, z), dtype=float), base, dt)
        if barrier is not None:
            y2 = np.maximum(y, barrier(t, x, bool(lat.grid.pre_jump[m])))
            dK[m] = y2 - y
            y = y2
        else:
            dK[m] = np.zeros_like(y)
        Y[m], Z[m] = y, z
    return Y, Z, dK


@dataclass
class BoundingPair:
    upper: list
    lower: list
    Z_upper: list
    Z_lower: list


def _aggregate(p: SwitchingProblem, how) -> Callable:
    def f(t, x, y, z):
        ys = np.broadcast_to(y, (p.q,) + np.shape(y))
        vals = np.stack([p.drive(i, t, x, ys, z) for i in range(p.q)])
        return how(vals, axis=0)
    return f


def bounding_bsdes(p: SwitchingProblem, lat: Lattice) -> BoundingPair:
    """Plain BSDEs with drivers max_i / min_i f_i(y, ..., y, z) and terminal max_i / min_i h_i."""
    check_step(lat, p.lipschitz)
    hmax = lambda x: np.max(np.stack([p.terminal(i, x) for i in range(p.q)]), axis=0)
    hmin = lambda x: np.min(np.stack([p.terminal(i, x) for i in range(p.q)]), axis=0)
    up, zu, _ = solve_bsde(lat, _aggregate(p, np.max), hmax)
    lo, zl, _ = solve_bsde(lat, _aggregate(p, np.min), hmin)
    return BoundingPair(up, lo, zu, zl)


@dataclass(eq=False)
class FrozenInput:
    u: list
    id: str = ""

    @classmethod
    def of(cls, obj, q: int | None = None) -> "FrozenInput":
        if isinstance(obj, FrozenInput):
            return obj
        if isinstance(obj, ValueField):
            return cls([np.array(a) for a in obj.Y], obj.solver)
        arrs = [np.asarray(a, dtype=float) for a in obj]
        if q is not None and arrs[0].ndim == 1:
            arrs = [np.tile(a, (q, 1)) for a in arrs]
        return cls(arrs)


def _terminal(p: SwitchingProblem, lat: Lattice) -> np.ndarray:
    x = lat.states[lat.M]
    return np.stack([p.terminal(i, x) for i in range(p.q)])


def _check_frozen(u: FrozenInput, lat: Lattice, q: int) -> None:
    if len(u.u) != lat.M + 1 or any(a.shape != (q, lat.n_nodes(m)) for m, a in enumerate(u.u)):
        raise ValueError("frozen input does not match the lattice")
    if not all(np.all(np.isfinite(a)) for a in u.u):
        raise ValueError("frozen input must be finite")


def solve_frozen(p: SwitchingProblem, lat: Lattice, u, mode: int | None = None):
    """One application of the Picard map: drivers frozen at u, reflection interconnected."""
    check_step(lat, p.lipschitz)
    u = FrozenInput.of(u, p.q)
    _check_frozen(u, lat, p.q)
    M = lat.M
    Y, Z, dK = [None] * (M + 1), [None] * (M + 1), [None] * (M + 1)
    Y[M] = _terminal(p, lat)
    Z[M] = np.zeros_like(Y[M])
    dK[M] = np.zeros_like(Y[M])
    for m in range(M - 1, -1, -1):
        t = float(lat.times[m])
        x = lat.states[m]
        dt = lat.grid.dt(m)
        Z[m] = Z[m + 1].copy() if dt == 0.0 else lat.zeta(m, Y[m + 1])
        E = lat.expect(m, Y[m + 1])
        um = u.u[m]
        # y is frozen at u and Z comes from the next layer, so the nodewise
        # fixed point is reached after one evaluation
        cont = np.stack([p.drive(i, t, x, um, Z[m][i]) * dt + E[i] for i in range(p.q)])
        Y[m], _ = reflect(cont, layer_costs(p, lat, m))
        dK[m] = Y[m] - cont
    vf = ValueField(Y, lat, "frozen", None, Z, dK, {"frozen": u.id})
    if mode is None:
        return vf
    return [a[mode] for a in Y], [a[mode] for a in Z], [a[mode] for a in dK]


def beta_norm(u, v, beta: float, lat: Lattice) -> float:
    """sqrt(E int e^{beta s} sum_i |u^i - v^i|^2 ds) for fields piecewise constant in time."""
    uu = u.Y if isinstance(u, ValueField) else (u.u if isinstance(u, FrozenInput) else u)
    vv = v.Y if isinstance(v, ValueField) else (v.u if isinstance(v, FrozenInput) else v)
    if len(uu) != len(vv) or len(uu) != lat.M + 1:
        raise ValueError("fields do not match the lattice")
    total = 0.0
    for m in range(lat.M):
        a, b = np.asarray(uu[m], dtype=float), np.asarray(vv[m], dtype=float)
        if a.shape != b.shape:
            raise ValueError(f"shape mismatch at layer {m}: {a.shape} vs {b.shape}")
        dt = lat.grid.dt(m)
        if dt == 0.0:
            continue
        t0, t1 = float(lat.times[m]), float(lat.times[m + 1])
        w = dt if beta == 0 else (math.exp(beta * t1) - math.exp(beta * t0)) / beta
        d = a - b
        sq = d * d
        per_node = sq.sum(axis=0) if sq.ndim == 2 else sq
        total += w * float(np.mean(per_node))
    return math.sqrt(total)


def beta_threshold(p: SwitchingProblem) -> float:
    C = p.lipschitz
    return max(16.0 * C * C * p.T * p.q, 2.0 * C * C)


@dataclass
class PicardLog:
    beta: float
    records: list = field(default_factory=list)
    converged: bool = False
    timings: bool = True

    def add(self, n: int, distance: float, seconds: float) -> None:
        self.records.append({"n": n, "beta": self.beta, "distance": distance, "seconds": seconds})

    @property
    def distances(self) -> list:
        return [r["distance"] for r in self.records]

    def ratios(self) -> list:
        d = self.distances
        return [d[k + 1] / d[k] for k in range(len(d) - 1) if d[k] > 0]

    def to_jsonl(self, with_seconds: bool = True) -> str:
        import json
        lines = []
        for r in self.records:
            rec = dict(r)
            if not with_seconds:
                rec["seconds"] = None
            lines.append(json.dumps(rec, sort_keys=True))
        return "\n".join(lines) + ("\n" if lines else "")


def picard_solve(p: SwitchingProblem, lat: Lattice, beta: float | None = None, tol: float = 1e-10,
                 max_iter: int = 200) -> tuple[ValueField, PicardLog]:
    ensure_valid(p)
    thr = beta_threshold(p)
    beta = thr + 1.0 if beta is None else float(beta)
    if beta < thr:
        raise ValueError(f"beta must be >= {thr:g}")
    if not tol > 0:
        raise ValueError("tol must be positive")
    bounds = bounding_bsdes(p, lat)
    u = [np.tile(a, (p.q, 1)) for a in bounds.lower]
    log = PicardLog(beta)
    for n in range(max_iter):
        t0 = time.perf_counter()
        vf = solve_frozen(p, lat, FrozenInput(u, f"picard-{n}"))
        d = beta_norm(vf.Y, u, beta, lat)
        log.add(n, d, time.perf_counter() - t0)
        u = vf.Y
        if d <= tol:
            log.converged = True
            vf.solver = "picard"
            vf.meta.update({"log": log, "iterations": n + 1})
            return vf, log
    raise PicardDivergenceError(f"Picard iteration did not reach {tol:g} in {max_iter} iterations", log)


def _needs_monotone(p: SwitchingProblem) -> bool:
    if p.drivers is None:
        return False
    for f in p.drivers:
        reads = getattr(f, "reads", None)
        if reads is None or any(v.startswith("y") for v in reads):
            return True
    return False


def monotone_solve(p: SwitchingProblem, lat: Lattice, n_stages: int, alpha: float | None = None,
                   tol: float | None = None) -> list[ValueField]:
    """Stages Y^{., 0..n}: each solves own-variable-implicit reflected BSDEs.

    Stage n freezes the other modes at stage n - 1, both in the driver and in
    the obstacle max_k (Y^{k, n-1} - g_ik); stage 0 is the lower bounding
    solution.  With ``tol`` the iteration stops once the sup-norm change
    between stages is at most tol.
    """
    if n_stages < 0:
        raise ValueError("n_stages must be >= 0")
    if _needs_monotone(p) and not p.monotone:
        if alpha is None:
            raise DriverError("drivers are not declared monotone; pass alpha to apply the exponential transform")
        pt = replace(exp_transform(p, alpha), monotone=True)
        rep = validate(pt)
        if not rep.checks["H2iv"].passed:
            raise AssumptionError("transformed drivers are still not monotone", rep)
        stages = monotone_solve(pt, lat, n_stages, tol=tol)
        for vf in stages:
            vf.Y = [a * math.exp(-alpha * float(t)) for a, t in zip(vf.Y, lat.times)]
            vf.meta["alpha"] = alpha
        return stages
    ensure_valid(p)
    check_step(lat, p.lipschitz)
    bounds = bounding_bsdes(p, lat)
    M = lat.M
    low = [np.tile(a, (p.q, 1)) for a in bounds.lower]
    stages = [ValueField(low, lat, "monotone", 0, [np.tile(a, (p.q, 1)) for a in bounds.Z_lower], None)]
    costs = [layer_costs(p, lat, m) for m in range(M + 1)]
    for n in range(1, n_stages + 1):
        prev = stages[-1].Y
        Y, Z, dK = [None] * (M + 1), [None] * (M + 1), [None] * (M + 1)
        Y[M] = _terminal(p, lat)
        Z[M] = np.zeros_like(Y[M])
        dK[M] = np.zeros_like(Y[M])
        for m in range(M - 1, -1, -1):
            t = float(lat.times[m])
            x = lat.states[m]
            dt = lat.grid.dt(m)
            Z[m] = Z[m + 1].copy() if dt == 0.0 else lat.zeta(m, Y[m + 1])
            E = lat.expect(m, Y[m + 1])
            own = np.empty_like(E)
            for i in range(p.q):
                def fi(v, i=i):
                    y = prev[m].copy()
                    y[i] = v
                    return p.drive(i, t, x, y, Z[m][i])
                own[i] = _fixed_point(fi, E[i], dt)
            Y[m] = np.maximum(own, obstacle(prev[m], costs[m]))
            dK[m] = Y[m] - own
        stages.append(ValueField(Y, lat, "monotone", n, Z, dK))
        if tol is not None and max(float(np.max(np.abs(a - b))) for a, b in zip(Y, prev)) <= tol:
            break
    return stages


# ---- comparison oracles ----------------------------------------------------

@dataclass
class ComparisonPair:
    """Y1 solves (f1, xi1); Y2 solves (f2, xi2), reflected on ``barrier`` when given."""

    lattice: Lattice
    f1: Callable
    f2: Callable
    xi1: Callable
    xi2: Callable
    lipschitz: float
    eps: float
    barrier: Callable | None = None
    name: str = ""


@dataclass
class ComparisonReport:
    margins: list
    names: list

    @property
    def worst(self) -> float:
        return min(self.margins) if self.margins else math.inf

    def passed(self, tol: float = 1e-6) -> bool:
        return self.worst >= -tol


def comparison_check(pairs) -> ComparisonReport:
    """Worst nodewise value of Y1 - Y2 - eps e^{-CT} per pair."""
    margins, names = [], []
    for pr in pairs:
        lat = pr.lattice
        Y1, _, _ = solve_bsde(lat, pr.f1, pr.xi1, lipschitz=pr.lipschitz)
        Y2, _, _ = solve_bsde(lat, pr.f2, pr.xi2, pr.barrier, lipschitz=pr.lipschitz)
        T = float(lat.times[-1])
        target = pr.eps * math.exp(-pr.lipschitz * T)
        margins.append(min(float(np.min(a - b)) - target for a, b in zip(Y1, Y2)))
        names.append(pr.name)
    return ComparisonReport(margins, names)
