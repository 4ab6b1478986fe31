"""Switching problem instances, assumption probes and the exponential transform.

Modes are 0-based in the Python API.  Files and exported tables use 1-based
mode labels ("1->2").

Every function field is a vectorized callable:

    psi[i](t, x)         payoff rate of mode i
    drivers[i](t, x, y, z)  general driver, y has shape (q, n)
    h[i](x)              terminal payoff
    b(t, x), sigma(t, x) drift and (scalar Brownian) loading of the state
    cost xfactor(x)      spatial factor of a switching cost

``x`` has shape (n,) when r = 1 and (n, r) otherwise; ``t`` is a float in
the solvers and may be an array in the probes.
"""
from __future__ import annotations

import math
import weakref
from dataclasses import dataclass, field, replace
from typing import Callable, Mapping, Sequence

import numpy as np

from .cadlag import StepFunction


class StructureError(ValueError):
    """The problem is malformed (missing data, bad sizes)."""


class AssumptionError(ValueError):
    """A standing assumption failed its probe."""

    def __init__(self, msg, report=None):
        super().__init__(msg)
        self.report = report


class DriverError(ValueError):
    """The solver cannot handle the problem's drivers."""


def _field(val, n: int) -> np.ndarray:
    return np.array(np.broadcast_to(np.asarray(val, dtype=float), (n,)))


def _count(x) -> int:
    x = np.asarray(x)
    return 1 if x.ndim == 0 else x.shape[0]


@dataclass(frozen=True)
class SwitchingCost:
    """g(t, x) = profile(t) * tfactor(t) * xfactor(x); tfactor must be continuous."""

    profile: StepFunction
    xfactor: Callable | None = None
    tfactor: Callable | None = None

    def __call__(self, t, x, left: bool = False):
        n = _count(x) if np.ndim(t) == 0 else None
        prof = self.profile.left_limit(t) if left else self.profile.eval(t)
        out = np.asarray(prof, dtype=float)
        if self.tfactor is not None:
            out = out * self.tfactor(t)
        if self.xfactor is not None:
            out = out * self.xfactor(x)
        if n is None:
            return np.asarray(out, dtype=float)
        return _field(out, n)


@dataclass(frozen=True, eq=False)
class SwitchingProblem:
    q: int
    T: float
    h: Sequence[Callable]
    costs: Mapping[tuple[int, int], SwitchingCost]
    gamma: float
    x0: float | Sequence[float] = 0.0
    psi: Sequence[Callable] | None = None
    drivers: Sequence[Callable] | None = None
    lipschitz: float = 0.0
    monotone: bool = False
    b: Callable | None = None
    sigma: Callable | None = None
    diffusion_lipschitz: float | None = None
    r: int = 1
    name: str = ""
    meta: Mapping = field(default_factory=dict)

    # ---- evaluation helpers -------------------------------------------
    @property
    def x0_array(self) -> np.ndarray:
        """Initial state as a one-node state array."""
        if self.r == 1:
            return np.array([float(np.asarray(self.x0, dtype=float).ravel()[0])])
        return np.asarray(self.x0, dtype=float).reshape(1, self.r)

    def is_decoupled(self) -> bool:
        """True when no driver reads (y, z), so the plain Snell DP applies."""
        if self.drivers is None:
            return True
        for f in self.drivers:
            reads = getattr(f, "reads", None)
            if reads is None or any(v == "z" or v.startswith("y") for v in reads):
                return False
        return True

    def rate(self, i: int, t, x) -> np.ndarray:
        n = _count(x)
        if self.psi is not None and self.drivers is None:
            return _field(self.psi[i](t, x), n)
        if not self.is_decoupled():
            raise DriverError("drivers depend on (y, z); use the RBSDE solvers")
        return _field(self.drivers[i](t, x, np.zeros((self.q, n)), np.zeros(n)), n)

    def drive(self, i: int, t, x, y, z) -> np.ndarray:
        n = _count(x)
        if self.drivers is None:
            return _field(self.psi[i](t, x), n)
        return _field(self.drivers[i](t, x, y, z), n)

    def terminal(self, i: int, x) -> np.ndarray:
        return _field(self.h[i](x), _count(x))

    def cost(self, i: int, k: int, t, x, left: bool = False) -> np.ndarray:
        return self.costs[(i, k)](t, x, left=left)

    def cost_matrix(self, t: float, x, left: bool = False) -> np.ndarray:
        """Array G[i, k, node] with +inf on the diagonal."""
        n = _count(x)
        G = np.full((self.q, self.q, n), np.inf)
        for (i, k), c in self.costs.items():
            G[i, k] = c(t, x, left=left)
        return G

    def drift(self, t, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.b is None:
            return np.zeros_like(x)
        return np.array(np.broadcast_to(np.asarray(self.b(t, x), dtype=float), x.shape))

    def vol(self, t, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.sigma is None:
            return np.zeros_like(x)
        return np.array(np.broadcast_to(np.asarray(self.sigma(t, x), dtype=float), x.shape))

    def breakpoints(self) -> list[float]:
        out = set()
        for c in self.costs.values():
            out.update(c.profile.breakpoints)
        return sorted(out)

    def driver_fn(self, i: int) -> Callable:
        if self.drivers is not None:
            return self.drivers[i]
        psi = self.psi[i]
        return lambda t, x, y, z: psi(t, x)


# ---- validation -----------------------------------------------------------

@dataclass(frozen=True)
class ProbePlan:
    n: int = 1000
    seed: int = 0
    x_radius: float = 3.0
    y_radius: float = 10.0
    tol: float = 1e-9


@dataclass
class CheckResult:
    name: str
    passed: bool
    n_probes: int
    worst_margin: float
    witness: dict | None = None
    message: str = ""

    def to_json(self) -> dict:
        return {"name": self.name, "passed": self.passed, "n_probes": self.n_probes,
                "worst_margin": _jsonable(self.worst_margin), "witness": _jsonable(self.witness),
                "message": self.message}


@dataclass
class ValidationReport:
    checks: dict[str, CheckResult]
    seed: int

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks.values())

    def failures(self) -> list[CheckResult]:
        return [c for c in self.checks.values() if not c.passed]

    def to_json(self) -> dict:
        return {"passed": self.passed, "seed": self.seed,
                "checks": {k: v.to_json() for k, v in self.checks.items()}}


def _jsonable(v):
    if isinstance(v, dict):
        return {k: _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, np.ndarray):
        return _jsonable(v.tolist())
    if isinstance(v, (np.floating, float)):
        f = float(v)
        return f if math.isfinite(f) else str(f)
    if isinstance(v, np.integer):
        return int(v)
    return v


def check_structure(p: SwitchingProblem) -> None:
    if not isinstance(p.q, (int, np.integer)) or p.q < 1:
        raise StructureError(f"q must be an integer >= 1, got {p.q!r}")
    if not p.T > 0:
        raise StructureError(f"T must be positive, got {p.T!r}")
    if p.r < 1:
        raise StructureError("r must be >= 1")
    if len(p.h) != p.q:
        raise StructureError(f"need {p.q} terminal payoffs, got {len(p.h)}")
    if p.psi is None and p.drivers is None:
        raise StructureError("either payoff rates psi or drivers are required")
    for name, seq in (("psi", p.psi), ("drivers", p.drivers)):
        if seq is not None and len(seq) != p.q:
            raise StructureError(f"need {p.q} entries in {name}, got {len(seq)}")
    for i in range(p.q):
        for k in range(p.q):
            if i != k and (i, k) not in p.costs:
                raise StructureError(f"missing switching cost {i + 1}->{k + 1}")
    for (i, k), c in p.costs.items():
        if i == k or not (0 <= i < p.q and 0 <= k < p.q):
            raise StructureError(f"invalid cost pair {i + 1}->{k + 1}")
        if c.profile.horizon != p.T:
            raise StructureError(f"cost {i + 1}->{k + 1} has horizon {c.profile.horizon} != T")
    if np.asarray(p.x0, dtype=float).size != p.r:
        raise StructureError(f"x0 must have {p.r} components")


def _probe_times(p: SwitchingProblem, rng, n: int) -> np.ndarray:
    extra = [0.0, p.T] + [b for b in p.breakpoints()]
    return np.concatenate([np.array(extra), rng.uniform(0.0, p.T, n)])


def _probe_x(p: SwitchingProblem, rng, n: int, radius: float) -> np.ndarray:
    x0 = np.asarray(p.x0, dtype=float).ravel()
    pts = x0 + rng.uniform(-radius, radius, (n, p.r))
    return pts[:, 0] if p.r == 1 else pts


def _x_at(x, j):
    return float(x[j]) if np.ndim(x) == 1 else np.asarray(x[j]).tolist()


def _check_costs(p, plan, rng, name) -> CheckResult:
    worst, wit, count = np.inf, None, 0
    bps = [b for b in p.breakpoints() if b > 0]
    for (i, k), c in sorted(p.costs.items()):
        t = _probe_times(p, rng, plan.n)
        x = _probe_x(p, rng, t.size, plan.x_radius)
        g = np.asarray(c(t, x), dtype=float)
        m = g - p.gamma
        j = int(np.argmin(m))
        count += t.size
        if m[j] < worst:
            worst, wit = float(m[j]), {"t": float(t[j]), "x": _x_at(x, j), "pair": f"{i + 1}->{k + 1}",
                                       "g": float(g[j]), "left": False}
        if bps:
            tl = np.array(bps)
            xl = _probe_x(p, rng, tl.size, plan.x_radius)
            gl = np.asarray(c(tl, xl, left=True), dtype=float)
            ml = gl - p.gamma
            jl = int(np.argmin(ml))
            count += tl.size
            if ml[jl] < worst:
                worst, wit = float(ml[jl]), {"t": float(tl[jl]), "x": _x_at(xl, jl),
                                             "pair": f"{i + 1}->{k + 1}", "g": float(gl[jl]), "left": True}
    ok = bool(worst >= -plan.tol) if p.q > 1 else True
    msg = "" if ok else f"switching cost {wit['pair']} = {wit['g']} below gamma = {p.gamma}"
    return CheckResult(name, ok, count, worst if p.q > 1 else np.inf, None if ok else wit, msg)


def validate(p: SwitchingProblem, probes: ProbePlan | None = None) -> ValidationReport:
    """Probe the standing assumptions; pure given ``probes.seed``."""
    plan = probes or ProbePlan()
    if plan.n < 1:
        raise ValueError("probe plan must be nonempty")
    check_structure(p)
    checks: dict[str, CheckResult] = {}

    # (A): declared gamma > 0 and costs above it
    rng = np.random.default_rng([plan.seed, 1])
    a = _check_costs(p, plan, rng, "A")
    if not p.gamma > 0:
        a = CheckResult("A", False, a.n_probes, float(p.gamma), {"gamma": float(p.gamma)},
                        f"assumption (A) needs gamma > 0, got {p.gamma}")
    checks["A"] = a

    # H2 (ii): Lipschitz in (y, z)
    rng = np.random.default_rng([plan.seed, 2])
    checks["H2ii"] = _check_lipschitz(p, plan, rng)

    # H2 (iv): cross monotonicity when declared
    rng = np.random.default_rng([plan.seed, 3])
    checks["H2iv"] = _check_monotone(p, plan, rng)

    # H3: costs bounded below by gamma, left limits included
    rng = np.random.default_rng([plan.seed, 1])
    h3 = _check_costs(p, plan, rng, "H3")
    checks["H3"] = h3

    # H4: terminal consistency
    rng = np.random.default_rng([plan.seed, 4])
    checks["H4"] = _check_terminal(p, plan, rng)

    rng = np.random.default_rng([plan.seed, 5])
    checks["diffusion"] = _check_diffusion(p, plan, rng)
    return ValidationReport(checks, plan.seed)


def _check_terminal(p, plan, rng) -> CheckResult:
    x = _probe_x(p, rng, plan.n, plan.x_radius)
    worst, wit = np.inf, None
    for i in range(p.q):
        hi = p.terminal(i, x)
        for k in range(p.q):
            if k == i:
                continue
            m = hi - (p.terminal(k, x) - p.cost(i, k, p.T, x))
            j = int(np.argmin(m))
            if m[j] < worst:
                worst = float(m[j])
                wit = {"x": _x_at(x, j), "mode": i + 1, "against": k + 1, "h_i": float(hi[j]),
                       "h_k": float(p.terminal(k, x)[j])}
    ok = bool(worst >= -plan.tol)
    msg = "" if ok else f"h_{wit['mode']} < h_{wit['against']} - g at x = {wit['x']}"
    return CheckResult("H4", ok, plan.n * p.q, worst, None if ok else wit, msg)


def _driver_samples(p, plan, rng):
    t = rng.uniform(0.0, p.T, plan.n)
    x = _probe_x(p, rng, plan.n, plan.x_radius)
    y = rng.uniform(-plan.y_radius, plan.y_radius, (p.q, plan.n))
    z = rng.uniform(-plan.y_radius, plan.y_radius, plan.n)
    return t, x, y, z


def _check_lipschitz(p, plan, rng) -> CheckResult:
    if p.drivers is None:
        return CheckResult("H2ii", True, 0, np.inf, None, "payoff rates do not depend on (y, z)")
    t, x, y, z = _driver_samples(p, plan, rng)
    half = plan.n // 2
    # far pairs for the first half, nearby pairs for the rest
    dy = rng.uniform(-plan.y_radius, plan.y_radius, (p.q, plan.n))
    dz = rng.uniform(-plan.y_radius, plan.y_radius, plan.n)
    dy[:, half:] *= 1e-3
    dz[half:] *= 1e-3
    worst, wit = np.inf, None
    for i in range(p.q):
        f1 = p.drive(i, t, x, y, z)
        f2 = p.drive(i, t, x, y + dy, z + dz)
        bound = p.lipschitz * (np.abs(dy).sum(axis=0) + np.abs(dz))
        m = bound - np.abs(f1 - f2)
        j = int(np.argmin(m))
        if m[j] < worst:
            worst = float(m[j])
            wit = {"mode": i + 1, "t": float(t[j]), "x": _x_at(x, j), "y": y[:, j].tolist(),
                   "z": float(z[j]), "y2": (y + dy)[:, j].tolist(), "z2": float((z + dz)[j])}
    ok = bool(worst >= -plan.tol)
    msg = "" if ok else f"driver {wit['mode']} exceeds declared Lipschitz constant {p.lipschitz}"
    return CheckResult("H2ii", ok, plan.n * p.q, worst, None if ok else wit, msg)


def _check_monotone(p, plan, rng) -> CheckResult:
    if not p.monotone:
        return CheckResult("H2iv", True, 0, np.inf, None, "monotonicity not declared")
    if p.drivers is None:
        return CheckResult("H2iv", True, 0, np.inf, None, "payoff rates do not depend on y")
    t, x, y, z = _driver_samples(p, plan, rng)
    worst, wit = np.inf, None
    for i in range(p.q):
        base = p.drive(i, t, x, y, z)
        for k in range(p.q):
            if k == i:
                continue
            step = rng.uniform(1e-3, 1.0, plan.n)
            y2 = y.copy()
            y2[k] += step
            quot = (p.drive(i, t, x, y2, z) - base) / step
            j = int(np.argmin(quot))
            if quot[j] < worst:
                worst = float(quot[j])
                wit = {"mode": i + 1, "wrt": k + 1, "t": float(t[j]), "x": _x_at(x, j),
                       "y": y[:, j].tolist(), "z": float(z[j])}
    ok = bool(worst >= -1e-12)
    msg = "" if ok else f"driver {wit['mode']} decreases in y{wit['wrt']}"
    return CheckResult("H2iv", ok, plan.n * p.q * (p.q - 1), worst, None if ok else wit, msg)


def _check_diffusion(p, plan, rng) -> CheckResult:
    if p.diffusion_lipschitz is None:
        return CheckResult("diffusion", True, 0, np.inf, None, "no Lipschitz constant declared")
    t = rng.uniform(0.0, p.T, plan.n)
    x = _probe_x(p, rng, plan.n, plan.x_radius)
    dx = rng.uniform(-1.0, 1.0, np.shape(x))
    dx[plan.n // 2:] *= 1e-3
    x2 = x + dx

    def norm(v):
        v = np.asarray(v)
        return np.abs(v) if v.ndim == 1 else np.sqrt((v ** 2).sum(axis=1))

    lhs = norm(p.drift(t, x) - p.drift(t, x2)) + norm(p.vol(t, x) - p.vol(t, x2))
    m = p.diffusion_lipschitz * norm(dx) - lhs
    j = int(np.argmin(m))
    ok = bool(m[j] >= -plan.tol)
    wit = {"t": float(t[j]), "x": _x_at(x, j), "x2": _x_at(x2, j)}
    msg = "" if ok else "drift or volatility exceeds the declared Lipschitz constant"
    return CheckResult("diffusion", ok, plan.n, float(m[j]), None if ok else wit, msg)


_REPORTS: "weakref.WeakKeyDictionary[SwitchingProblem, ValidationReport]" = weakref.WeakKeyDictionary()


def ensure_valid(p: SwitchingProblem, probes: ProbePlan | None = None) -> ValidationReport:
    """Validate once per problem object; raise AssumptionError on failure."""
    rep = _REPORTS.get(p)
    if rep is None:
        rep = validate(p, probes)
        _REPORTS[p] = rep
    if not rep.passed:
        bad = rep.failures()[0]
        raise AssumptionError(f"assumption {bad.name} failed: {bad.message}", rep)
    return rep


# ---- exponential transform ------------------------------------------------

class _ExpDriver:
    def __init__(self, f, i, alpha, reads):
        self.f, self.i, self.alpha = f, i, alpha
        self.reads = frozenset(reads) | {f"y{i + 1}"}

    def __call__(self, t, x, y, z):
        a = np.exp(self.alpha * np.asarray(t, dtype=float))
        y = np.asarray(y, dtype=float)
        return a * self.f(t, x, y / a, np.asarray(z) / a) - self.alpha * y[self.i]


class _Scaled:
    def __init__(self, f, c):
        self.f, self.c = f, c
        self.reads = getattr(f, "reads", None)

    def __call__(self, *args):
        return self.c * np.asarray(self.f(*args), dtype=float)


class _ExpFactor:
    def __init__(self, alpha, inner=None):
        self.alpha, self.inner = alpha, inner

    def __call__(self, t):
        out = np.exp(self.alpha * np.asarray(t, dtype=float))
        return out if self.inner is None else out * self.inner(t)


def exp_transform(p: SwitchingProblem, alpha: float) -> SwitchingProblem:
    """Problem solved by e^{alpha t} Y for the solution Y of ``p``.

    Drivers become e^{at} f(t, x, e^{-at} y, e^{-at} z) - a y^i, terminal
    payoffs e^{aT} h and costs e^{at} g.  The cross partials in y^k (k != i)
    are unchanged; the own partial is shifted by -alpha.
    """
    if alpha < 0:
        raise ValueError("alpha must be >= 0")
    if alpha == 0:
        return p
    base = [p.driver_fn(i) for i in range(p.q)]
    reads = []
    for i in range(p.q):
        r0 = getattr(p.drivers[i], "reads", None) if p.drivers is not None else frozenset({"t", "x"})
        reads.append(r0 if r0 is not None else frozenset({"t", "x", "z"} | {f"y{k + 1}" for k in range(p.q)}))
    drivers = tuple(_ExpDriver(base[i], i, alpha, reads[i]) for i in range(p.q))
    h = tuple(_Scaled(hi, math.exp(alpha * p.T)) for hi in p.h)
    costs = {ik: replace(c, tfactor=_ExpFactor(alpha, c.tfactor)) for ik, c in p.costs.items()}
    meta = dict(p.meta)
    meta["alpha"] = float(meta.get("alpha", 0.0)) + alpha
    return replace(p, drivers=drivers, psi=None, h=h, costs=costs, lipschitz=p.lipschitz + alpha,
                   name=(p.name + f"+exp({alpha:g})") if p.name else "", meta=meta)


def undo_exp_transform(values: Sequence[np.ndarray], times: Sequence[float], alpha: float) -> list[np.ndarray]:
    """Map per-layer transformed values back by e^{-alpha t}."""
    return [np.asarray(v) * math.exp(-alpha * t) for v, t in zip(values, times)]
