"""Explicit finite differences for the 1-D quasi-variational HJB system.

Backward in time, each regular step applies

    v_hat^i = v^i_{m+1} + dt (L_h v^i_{m+1} + f_i(t_m, x, v_{m+1}, sigma D_h v^i_{m+1}))

and then reflects the modes against each other on the new layer with
max_k (v^k_m - g_ik(t_m, x)).  Pre-jump layers only reflect, with the left
cost values.  Under the CFL bound sigma^2 dt / h^2 <= 1/2 the interior step
is monotone.

The residual checker evaluates the discrete sub/supersolution inequalities
with time envelopes of the field and of the obstacle at cost breakpoints.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .cadlag import point_envelope
from .lattice import Lattice, LatticeSizeError, TimeGrid, build_grid, build_tree
from .problem import SwitchingProblem, ensure_valid
from .snell import obstacle, reflect

CFL_LIMIT = 0.5


class CFLError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class SpaceTimeGrid:
    time: TimeGrid
    x: np.ndarray
    h: float
    x_lo: float
    x_hi: float
    cfl: float = 0.0
    boundary: str = "one-sided"

    @property
    def nx(self) -> int:
        return self.x.size

    def index_of(self, x0: float) -> int:
        j = int(np.argmin(np.abs(self.x - x0)))
        if abs(self.x[j] - x0) > 1e-12 * max(1.0, abs(x0)):
            raise ValueError(f"{x0} is not a grid point")
        return j

    def interior(self, margin: float = 0.1) -> np.ndarray:
        L = self.x_hi - self.x_lo
        return (self.x >= self.x_lo + margin * L) & (self.x <= self.x_hi - margin * L)


def make_space_time_grid(p: SwitchingProblem, max_dt: float, x_lo: float, x_hi: float, h: float,
                         time_grid: TimeGrid | None = None) -> SpaceTimeGrid:
    if p.r != 1:
        raise ValueError("the finite-difference solver is one-dimensional (r = 1)")
    if not h > 0 or not x_hi > x_lo:
        raise ValueError("need h > 0 and x_hi > x_lo")
    x0 = float(p.x0_array[0])
    if not x_lo <= x0 <= x_hi:
        raise ValueError("x0 must lie inside [x_lo, x_hi]")
    k_lo = math.ceil((x_lo - x0) / h - 1e-9)
    k_hi = math.floor((x_hi - x0) / h + 1e-9)
    x = x0 + h * np.arange(k_lo, k_hi + 1)
    if x.size < 3:
        raise ValueError("need at least three grid points")
    tg = time_grid or build_grid(p, max_dt)
    cfl = 0.0
    for m in range(tg.M):
        dt = tg.dt(m)
        if dt > 0:
            s = p.vol(float(tg.times[m]), x)
            cfl = max(cfl, float(np.max(s * s)) * dt / (h * h))
    if cfl > CFL_LIMIT * (1 + 1e-9):
        raise CFLError(f"CFL number {cfl:.6g} exceeds {CFL_LIMIT}; reduce dt or enlarge h")
    return SpaceTimeGrid(tg, x, float(h), float(x[0]), float(x[-1]), cfl)


def refine_grid(p: SwitchingProblem, grid: SpaceTimeGrid) -> SpaceTimeGrid:
    """Halve dt and h^2 on the same domain."""
    return make_space_time_grid(p, grid.time.max_dt / 2, grid.x_lo, grid.x_hi, grid.h / math.sqrt(2))


def d1_centered(v: np.ndarray, h: float) -> np.ndarray:
    d = np.empty_like(v)
    d[..., 1:-1] = (v[..., 2:] - v[..., :-2]) / (2 * h)
    d[..., 0] = (-3 * v[..., 0] + 4 * v[..., 1] - v[..., 2]) / (2 * h)
    d[..., -1] = (3 * v[..., -1] - 4 * v[..., -2] + v[..., -3]) / (2 * h)
    return d


def d2(v: np.ndarray, h: float) -> np.ndarray:
    d = np.empty_like(v)
    d[..., 1:-1] = (v[..., 2:] - 2 * v[..., 1:-1] + v[..., :-2]) / (h * h)
    d[..., 0] = d[..., 1]
    d[..., -1] = d[..., -2]
    return d


def d1_upwind(v: np.ndarray, h: float, b: np.ndarray) -> np.ndarray:
    fwd = np.empty_like(v)
    bwd = np.empty_like(v)
    fwd[..., :-1] = (v[..., 1:] - v[..., :-1]) / h
    fwd[..., -1] = (v[..., -1] - v[..., -2]) / h
    bwd[..., 1:] = (v[..., 1:] - v[..., :-1]) / h
    bwd[..., 0] = (v[..., 1] - v[..., 0]) / h
    return np.where(b > 0, fwd, bwd)


def generator(v: np.ndarray, p: SwitchingProblem, t: float, grid: SpaceTimeGrid):
    """(L_h v, D_h v) with centered stencils, upwinding the drift where |b| h > sigma^2."""
    x = grid.x
    b = p.drift(t, x)
    s = p.vol(t, x)
    dc = d1_centered(v, grid.h)
    upw = np.abs(b) * grid.h > s * s
    ddrift = np.where(upw, d1_upwind(v, grid.h, b), dc) if np.any(upw) else dc
    return 0.5 * s * s * d2(v, grid.h) + b * ddrift, dc, s


def qvi_step(p: SwitchingProblem, grid: SpaceTimeGrid, m: int, v_next: np.ndarray) -> np.ndarray:
    """PDE part of the step from layer m+1 to m (before reflection)."""
    dt = grid.time.dt(m)
    if dt == 0.0:
        return np.array(v_next, dtype=float)
    t = float(grid.time.times[m])
    Lv, dc, s = generator(v_next, p, t, grid)
    out = np.empty_like(v_next)
    for i in range(p.q):
        out[i] = v_next[i] + dt * (Lv[i] + p.drive(i, t, grid.x, v_next, s * dc[i]))
    return out


@dataclass(eq=False)
class PDEValueField:
    v: np.ndarray            # (M+1, q, nx)
    v_hat: np.ndarray        # PDE-step values before reflection
    obstacle_active: np.ndarray
    pde_active: np.ndarray
    grid: SpaceTimeGrid

    def at(self, m: int) -> np.ndarray:
        return self.v[m]

    def value_at_x0(self, x0: float) -> np.ndarray:
        return self.v[0][:, self.grid.index_of(x0)].copy()


def solve_qvi(p: SwitchingProblem, grid: SpaceTimeGrid) -> PDEValueField:
    if p.r != 1:
        raise ValueError("the finite-difference solver is one-dimensional (r = 1)")
    ensure_valid(p)
    tg = grid.time
    M, q, nx = tg.M, p.q, grid.nx
    v = np.empty((M + 1, q, nx))
    vh = np.empty_like(v)
    obs_on = np.zeros(v.shape, dtype=bool)
    pde_on = np.zeros(v.shape, dtype=bool)
    v[M] = np.stack([p.terminal(i, grid.x) for i in range(q)])
    vh[M] = v[M]
    GT = p.cost_matrix(float(tg.times[M]), grid.x)
    obs_on[M] = v[M] <= obstacle(v[M], GT)
    pde_on[M] = True
    for m in range(M - 1, -1, -1):
        G = p.cost_matrix(float(tg.times[m]), grid.x, left=bool(tg.pre_jump[m]))
        vh[m] = qvi_step(p, grid, m, v[m + 1])
        v[m], _ = reflect(vh[m], G)
        obs_on[m] = v[m] <= obstacle(v[m], G)
        pde_on[m] = v[m] == vh[m]
    return PDEValueField(v, vh, obs_on, pde_on, grid)


def check_pde_field(vf: PDEValueField, p: SwitchingProblem) -> list[str]:
    out = []
    tg = vf.grid.time
    for m in range(tg.M + 1):
        G = p.cost_matrix(float(tg.times[m]), vf.grid.x, left=bool(tg.pre_jump[m]))
        if np.any(vf.v[m] < obstacle(vf.v[m], G)):
            out.append(f"obstacle dominance fails at layer {m}")
    hT = np.stack([p.terminal(i, vf.grid.x) for i in range(p.q)])
    if not np.array_equal(vf.v[tg.M], hT):
        out.append("terminal layer differs from h")
    return out


# ---- weak viscosity residuals ----------------------------------------------

@dataclass
class ResidualReport:
    layers: list
    times: np.ndarray
    sub: np.ndarray          # (n_times, q, nx)
    sup: np.ndarray
    obstacle_active: np.ndarray
    interior: np.ndarray
    tol: float
    terminal_sub: np.ndarray
    terminal_sup: np.ndarray
    values: np.ndarray
    x: np.ndarray

    def _mask(self):
        return np.broadcast_to(self.interior, self.sub.shape)

    @property
    def sub_fraction(self) -> float:
        mk = self._mask()
        return float(np.mean(self.sub[mk] <= self.tol))

    @property
    def sup_fraction(self) -> float:
        mk = self._mask()
        return float(np.mean(self.sup[mk] >= -self.tol))

    @property
    def active_ok(self) -> bool:
        mk = self._mask() & self.obstacle_active
        return bool(np.all(self.sub[mk] <= self.tol) and np.all(self.sup[mk] >= -self.tol))

    @property
    def terminal_ok(self) -> bool:
        inner = self.interior
        return bool(np.all(self.terminal_sub[:, inner] <= self.tol) and
                    np.all(self.terminal_sup[:, inner] >= -self.tol))

    def passed(self, fraction: float = 0.99) -> bool:
        return (self.sub_fraction >= fraction and self.sup_fraction >= fraction
                and self.active_ok and self.terminal_ok)

    def summary(self) -> dict:
        return {"tol": self.tol, "sub_fraction": self.sub_fraction, "sup_fraction": self.sup_fraction,
                "obstacle_active_ok": self.active_ok, "terminal_ok": self.terminal_ok,
                "n_points": int(self._mask().sum()), "passed": self.passed()}

    def export_csv(self, path) -> None:
        from .io import fmt
        q = self.sub.shape[1]
        with open(path, "w", newline="\n") as fh:
            fh.write("mode,t,x,v,active_tag,sub_residual,super_residual\n")
            for a, t in enumerate(self.times):
                for i in range(q):
                    for j, xj in enumerate(self.x):
                        tag = "obstacle" if self.obstacle_active[a, i, j] else "pde"
                        fh.write(f"{i + 1},{fmt(t)},{fmt(xj)},{fmt(self.values[a, i, j])},{tag},"
                                 f"{fmt(self.sub[a, i, j])},{fmt(self.sup[a, i, j])}\n")


def _obstacle_envelopes(v_pre, v_at, G_left, G_at):
    """usc and lsc in t of max_k (v^k - g_ik) at a breakpoint (pre layer given)."""
    vs, vi = point_envelope(v_pre, v_at)
    left = obstacle(v_pre, G_left)
    right = obstacle(v_at, G_at)
    usc, _ = point_envelope(left, obstacle(vs, G_at), right)
    _, lsc = point_envelope(left, obstacle(vi, G_at), right)
    return vs, vi, usc, lsc


def viscosity_residual(vf: PDEValueField, p: SwitchingProblem, grid: SpaceTimeGrid | None = None,
                       tol: float | None = None) -> ResidualReport:
    """Discrete sub/supersolution residuals with time envelopes at breakpoints.

    sub = min(v^{i*} - O^*, -D_t v - L_h v - f) and sup = min(v^i_* - O_*, same),
    where O is max_k (v^k - g_ik) and the PDE part is taken on the layer's
    own values with a forward time difference.
    """
    grid = grid or vf.grid
    tg = grid.time
    x = grid.x
    M = tg.M
    v = vf.v
    if tol is None:
        dts = [tg.dt(m) for m in range(M) if tg.dt(m) > 0]
        scale = max(1.0, float(np.max(np.abs(v))))
        tol = 10.0 * (max(dts) + grid.h ** 2) * scale
    layers = [m for m in range(M) if not tg.pre_jump[m]]
    sub, sup, act, vals = [], [], [], []
    for m in layers:
        t = float(tg.times[m])
        G = p.cost_matrix(t, x)
        v_at = v[m]
        if m > 0 and tg.pre_jump[m - 1]:
            Gl = p.cost_matrix(t, x, left=True)
            vs, vi, O_up, O_lo = _obstacle_envelopes(v[m - 1], v_at, Gl, G)
        else:
            vs = vi = v_at
            O_up = O_lo = obstacle(v_at, G)
        dt = tg.dt(m)
        Lv, dc, s = generator(v_at, p, t, grid)
        pde = np.empty_like(v_at)
        for i in range(p.q):
            pde[i] = -(v[m + 1][i] - v_at[i]) / dt - Lv[i] - p.drive(i, t, x, v_at, s * dc[i])
        sub.append(np.minimum(vs - O_up, pde))
        sup.append(np.minimum(vi - O_lo, pde))
        act.append(v_at <= obstacle(v_at, G))
        vals.append(v_at)
    # relaxed terminal conditions
    hT = np.stack([p.terminal(i, x) for i in range(p.q)])
    GT = p.cost_matrix(float(tg.times[M]), x)
    if M > 0 and tg.pre_jump[M - 1]:
        vs, vi, O_up, O_lo = _obstacle_envelopes(v[M - 1], v[M], p.cost_matrix(float(tg.times[M]), x, left=True), GT)
    else:
        vs = vi = v[M]
        O_up = O_lo = obstacle(v[M], GT)
    tsub = np.minimum(vs - hT, vs - O_up)
    tsup = np.minimum(vi - hT, vi - O_lo)
    return ResidualReport(layers, tg.times[layers], np.array(sub), np.array(sup), np.array(act),
                          grid.interior(), float(tol), tsub, tsup, np.array(vals), x)


# ---- tree versus PDE ---------------------------------------------------------

def _tree_values(p: SwitchingProblem, lat: Lattice) -> np.ndarray:
    if p.is_decoupled():
        from .snell import solve_full
        return solve_full(p, lat).y0
    from .rbsde import picard_solve
    return picard_solve(p, lat)[0].y0


def compare_tree_pde(p: SwitchingProblem, lat: Lattice, grid: SpaceTimeGrid, refine: bool = True) -> dict:
    """|v^i(0, x0) - Y^i_0| at the given resolution and after halving (dt, h^2)."""
    x0 = float(p.x0_array[0])

    def one(lt, gd):
        tree = _tree_values(p, lt)
        pde = solve_qvi(p, gd).value_at_x0(x0)
        diff = np.abs(pde - tree)
        return {"tree_dt": lt.grid.max_dt, "pde_dt": gd.time.max_dt, "h": gd.h,
                "tree": tree.tolist(), "pde": pde.tolist(), "diff": diff.tolist(),
                "max_diff": float(diff.max())}

    out = {"baseline": one(lat, grid)}
    if refine:
        try:
            lat2 = build_tree(p, lat.grid.refine())
        except LatticeSizeError as exc:
            out["refine_skipped"] = str(exc)
            return out
        out["refined"] = one(lat2, refine_grid(p, grid))
        a, b = out["baseline"]["max_diff"], out["refined"]["max_diff"]
        out["factor"] = (a / b) if b > 0 else math.inf
    return out
