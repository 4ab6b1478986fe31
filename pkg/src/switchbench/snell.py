"""Backward dynamic programming for the interconnected Snell envelopes.

At each layer the continuation value is the explicit quadrature of the
payoff rate plus the two-point conditional expectation, then the modes are
reflected against each other on the same layer:

    Y^i <- max(cont_i, max_{k != i} (Y^k - g_ik))

repeated until stable.  Since every cycle of switches costs at least
2 gamma, the closure settles after at most q - 1 changing sweeps.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .lattice import Lattice
from .problem import DriverError, SwitchingProblem, ensure_valid


class ClosureError(RuntimeError):
    pass


@dataclass(eq=False)
class ValueField:
    """Per-layer arrays of shape (q, n_nodes) for Y, Z and K increments.

    ``dK[m]`` is the push applied at layer m; on pre-jump layers it is the
    jump part of K, elsewhere its continuous analogue.
    """

    Y: list
    lattice: Lattice
    solver: str
    cap: int | None = None
    Z: list | None = None
    dK: list | None = None
    meta: dict = field(default_factory=dict)

    @property
    def q(self) -> int:
        return self.Y[0].shape[0]

    @property
    def y0(self) -> np.ndarray:
        return self.Y[0][:, 0].copy()

    def max_abs_diff(self, other: "ValueField") -> float:
        return max(float(np.max(np.abs(a - b))) for a, b in zip(self.Y, other.Y))

    def equals(self, other: "ValueField") -> bool:
        return all(np.array_equal(a, b) for a, b in zip(self.Y, other.Y))

    def value_range(self) -> tuple[float, float]:
        return (min(float(a.min()) for a in self.Y), max(float(a.max()) for a in self.Y))

    def rows(self):
        lat = self.lattice
        for m, Ym in enumerate(self.Y):
            xs = lat.states[m]
            t = float(lat.times[m])
            for j in range(Ym.shape[1]):
                x = xs[j]
                for i in range(Ym.shape[0]):
                    z = self.Z[m][i, j] if self.Z is not None else float("nan")
                    dk = self.dK[m][i, j] if self.dK is not None else float("nan")
                    yield m, t, j, x, i + 1, Ym[i, j], z, dk

    def export_csv(self, path) -> None:
        from .io import fmt
        with open(path, "w", newline="\n") as fh:
            fh.write("layer,time,node_id,x,mode,Y,Z,dK\n")
            for m, t, j, x, i, y, z, dk in self.rows():
                xs = ";".join(fmt(v) for v in np.ravel(x))
                fh.write(f"{m},{fmt(t)},{j},{xs},{i},{fmt(y)},{fmt(z)},{fmt(dk)}\n")


def reflect(cont: np.ndarray, G: np.ndarray, max_sweeps: int | None = None) -> tuple[np.ndarray, int]:
    """Same-layer closure of ``Y = max(cont, max_k (Y^k - G[i, k]))``.

    Returns the fixed point and the number of sweeps that changed a value.
    """
    q = cont.shape[0]
    Y = cont.copy()
    limit = q if max_sweeps is None else max_sweeps
    changed = 0
    for _ in range(limit + 1):
        obst = np.max(Y[None, :, :] - G, axis=1)
        new = np.maximum(cont, obst)
        if np.array_equal(new, Y):
            return Y, changed
        Y = new
        changed += 1
    raise ClosureError(f"reflection closure did not settle in {limit} sweeps; "
                       "check that every switching cycle has positive cost")


def obstacle(Y: np.ndarray, G: np.ndarray) -> np.ndarray:
    """max_{k != i} (Y^k - g_ik) per mode; -inf when q = 1."""
    return np.max(Y[None, :, :] - G, axis=1)


def layer_costs(p: SwitchingProblem, lat: Lattice, m: int) -> np.ndarray:
    return p.cost_matrix(float(lat.times[m]), lat.states[m], left=bool(lat.grid.pre_jump[m]))


def _rates(p: SwitchingProblem, lat: Lattice, m: int) -> np.ndarray:
    x = lat.states[m]
    t = float(lat.times[m])
    return np.stack([p.rate(i, t, x) for i in range(p.q)])


def _terminal(p: SwitchingProblem, lat: Lattice) -> np.ndarray:
    x = lat.states[lat.M]
    return np.stack([p.terminal(i, x) for i in range(p.q)])


def _require_decoupled(p: SwitchingProblem) -> None:
    if not p.is_decoupled():
        raise DriverError("drivers depend on (y, z); use rbsde.picard_solve or rbsde.monotone_solve")


def solve_full(p: SwitchingProblem, lat: Lattice) -> ValueField:
    _require_decoupled(p)
    ensure_valid(p)
    M = lat.M
    Y = [None] * (M + 1)
    Z = [None] * (M + 1)
    dK = [None] * (M + 1)
    Y[M] = _terminal(p, lat)
    Z[M] = np.zeros_like(Y[M])
    dK[M] = np.zeros_like(Y[M])
    worst = 0
    for m in range(M - 1, -1, -1):
        dt = lat.grid.dt(m)
        cont = _rates(p, lat, m) * dt + lat.expect(m, Y[m + 1])
        Y[m], sweeps = reflect(cont, layer_costs(p, lat, m))
        worst = max(worst, sweeps)
        Z[m] = Z[m + 1].copy() if dt == 0.0 else lat.zeta(m, Y[m + 1])
        dK[m] = Y[m] - cont
    if worst > max(p.q - 1, 0):
        raise ClosureError(f"closure needed {worst} sweeps (> q - 1)")
    return ValueField(Y, lat, "tree", None, Z, dK, {"max_sweeps": worst})


def capped_stages(p: SwitchingProblem, lat: Lattice):
    """Yield the stage fields Y^{., n} for n = 0, 1, 2, ...

    Stage n uses the stage n-1 field as the obstacle on every layer:
    Y^{i,n}_m = max(cont^{i,n}_m, max_k (Y^{k,n-1}_m - g_ik)).
    """
    _require_decoupled(p)
    ensure_valid(p)
    M = lat.M
    rates = [_rates(p, lat, m) * lat.grid.dt(m) for m in range(M)]
    costs = [layer_costs(p, lat, m) for m in range(M)]
    prev = None
    n = 0
    while True:
        Y = [None] * (M + 1)
        dK = [None] * (M + 1)
        Y[M] = _terminal(p, lat)
        dK[M] = np.zeros_like(Y[M])
        for m in range(M - 1, -1, -1):
            cont = rates[m] + lat.expect(m, Y[m + 1])
            if prev is None:
                Y[m] = cont
            else:
                Y[m] = np.maximum(cont, obstacle(prev[m], costs[m]))
            dK[m] = Y[m] - cont
        vf = ValueField(Y, lat, "capped", n, None, dK)
        yield vf
        prev = Y
        n += 1


def solve_capped(p: SwitchingProblem, lat: Lattice, N: int) -> ValueField:
    if N < 0:
        raise ValueError("N must be >= 0")
    for vf in capped_stages(p, lat):
        if vf.cap == N:
            return vf


def stabilization_index(p: SwitchingProblem, lat: Lattice, full: ValueField | None = None,
                        limit: int | None = None) -> tuple[int, ValueField]:
    """Smallest N with solve_capped(N) == solve_full bit for bit."""
    full = full or solve_full(p, lat)
    limit = p.q * lat.M if limit is None else limit
    for vf in capped_stages(p, lat):
        if vf.equals(full):
            return vf.cap, vf
        if vf.cap >= limit:
            raise ClosureError(f"capped values did not reach the full solution by N = {limit}")


def upper_bound(p: SwitchingProblem, lat: Lattice) -> list:
    """E[sum max_i |psi_i| dt + max_i |h_i|] per node (no-switching envelope bound)."""
    M = lat.M
    U = [None] * (M + 1)
    U[M] = np.max(np.abs(_terminal(p, lat)), axis=0)
    for m in range(M - 1, -1, -1):
        U[m] = np.max(np.abs(_rates(p, lat, m)), axis=0) * lat.grid.dt(m) + lat.expect(m, U[m + 1])
    return U


@dataclass(frozen=True)
class JumpRecord:
    t: float
    layer: int
    node: int
    mode: int
    y_pre: float
    y_post: float
    observed: float
    predicted: float
    barrier_pre: float
    ok: bool


def jump_report(vf: ValueField, p: SwitchingProblem, lat: Lattice, tol: float = 1e-10) -> list[JumpRecord]:
    """Observed jumps across each (tau-, tau) pair against -(L_{tau-} - Y_tau)^+."""
    out = []
    for m in range(lat.M):
        if not lat.grid.pre_jump[m]:
            continue
        Gl = layer_costs(p, lat, m)
        pre, post = vf.Y[m], vf.Y[m + 1]
        L = obstacle(pre, Gl)
        pred = -np.maximum(L - post, 0.0)
        obs = post - pre
        t = float(lat.times[m])
        for j in range(pre.shape[1]):
            for i in range(pre.shape[0]):
                out.append(JumpRecord(t, m, j, i, float(pre[i, j]), float(post[i, j]), float(obs[i, j]),
                                      float(pred[i, j]), float(L[i, j]),
                                      bool(abs(obs[i, j] - pred[i, j]) <= tol)))
    return out


def check_field(vf: ValueField, p: SwitchingProblem, lat: Lattice, tol: float = 0.0) -> list[str]:
    """List of violated field invariants (empty when all hold)."""
    problems = []
    for m in range(lat.M + 1):
        G = layer_costs(p, lat, m)
        if np.any(vf.Y[m] < obstacle(vf.Y[m], G) - tol):
            problems.append(f"obstacle dominance fails at layer {m}")
        if vf.dK is not None and np.any(vf.dK[m] < -tol):
            problems.append(f"negative K increment at layer {m}")
    hT = _terminal(p, lat)
    if not np.array_equal(vf.Y[lat.M], hT):
        problems.append("terminal layer differs from h")
    return problems
