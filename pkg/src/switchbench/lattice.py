"""Time grids, the exact binary scenario tree and Euler path sets.

Cost breakpoints appear twice on the grid: a pre-jump layer standing for
tau- followed by the layer at tau, with no elapsed time between them.  On the
tree those layers have a single child carrying the same state, so any value
difference across the pair comes only from the switching costs.
"""
from __future__ import annotations

import math
import struct
from dataclasses import dataclass

import numpy as np

from .problem import SwitchingProblem

MAGIC = b"SWB1"
_HEADER = struct.Struct("<4sQQ")


class LatticeSizeError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class TimeGrid:
    times: np.ndarray
    pre_jump: np.ndarray
    max_dt: float

    @property
    def M(self) -> int:
        return len(self.times) - 1

    def dt(self, m: int) -> float:
        return 0.0 if self.pre_jump[m] else float(self.times[m + 1] - self.times[m])

    def labels(self) -> list[str]:
        return [f"{t:g}-" if pre else f"{t:g}" for t, pre in zip(self.times, self.pre_jump)]

    def regular_layers(self) -> list[int]:
        return [m for m in range(self.M + 1) if not self.pre_jump[m]]

    def refine(self) -> "TimeGrid":
        """Same anchors with half the maximal step."""
        return _grid_from_anchors(self._anchors(), self.max_dt / 2)

    def _anchors(self):
        bps = [float(t) for t, pre in zip(self.times, self.pre_jump) if pre]
        return float(self.times[-1]), bps


def _grid_from_anchors(anchors, max_dt: float) -> TimeGrid:
    T, bps = anchors
    if not max_dt > 0:
        raise ValueError("max_dt must be positive")
    for b in bps:
        if b < 0 or b > T:
            raise ValueError(f"breakpoint {b} outside [0, {T}]")
    bps = sorted(set(b for b in bps if b > 0))
    ends = sorted(set(bps) | {T})
    times, pre = [0.0], [False]
    a = 0.0
    for e in ends:
        n = max(1, math.ceil((e - a) / max_dt - 1e-9))
        for k in range(1, n):
            times.append(a + (e - a) * k / n)
            pre.append(False)
        if e in bps:
            times.append(e)
            pre.append(True)
        times.append(e)
        pre.append(False)
        a = e
    return TimeGrid(np.array(times), np.array(pre, dtype=bool), float(max_dt))


def build_grid(p: SwitchingProblem, max_dt: float) -> TimeGrid:
    """Grid with step <= max_dt and a (tau-, tau) layer pair per breakpoint tau > 0."""
    return _grid_from_anchors((float(p.T), p.breakpoints()), max_dt)


@dataclass(frozen=True, eq=False)
class Lattice:
    grid: TimeGrid
    states: list
    branching: np.ndarray
    depth: np.ndarray
    r: int = 1

    @property
    def M(self) -> int:
        return self.grid.M

    @property
    def times(self) -> np.ndarray:
        return self.grid.times

    def n_nodes(self, m: int) -> int:
        return int(self.states[m].shape[0])

    def total_nodes(self) -> int:
        return sum(self.n_nodes(m) for m in range(self.M + 1))

    def expect(self, m: int, nxt: np.ndarray) -> np.ndarray:
        """Conditional expectation at layer m of a layer m+1 array (last axis = node)."""
        if self.branching[m]:
            return 0.5 * (nxt[..., 0::2] + nxt[..., 1::2])
        return np.array(nxt, dtype=float)

    def zeta(self, m: int, nxt: np.ndarray) -> np.ndarray:
        """Two-point martingale representation (Y_up - Y_down) / (2 sqrt(dt))."""
        if self.branching[m]:
            return (nxt[..., 1::2] - nxt[..., 0::2]) / (2.0 * math.sqrt(self.grid.dt(m)))
        return np.zeros(nxt.shape, dtype=float)

    def children(self, m: int) -> np.ndarray:
        n = self.n_nodes(m)
        if self.branching[m]:
            return np.stack([2 * np.arange(n), 2 * np.arange(n) + 1], axis=1)
        return np.arange(n)[:, None]

    def ancestor(self, m: int, leaf: int) -> int:
        """Index at layer m of the ancestor of a terminal node."""
        return int(leaf) >> int(self.depth[self.M] - self.depth[m])

    def leaf_expectation(self, values: np.ndarray) -> float:
        return float(np.mean(values))


def build_tree(p: SwitchingProblem, grid: TimeGrid, depth_cap: int = 22) -> Lattice:
    """Exact non-recombining tree of the Euler chain with Bernoulli increments.

    A step branches unless it is a pre-jump step or the volatility vanishes
    at every node of the layer; deterministic instances give a chain.
    """
    x = p.x0_array
    states = [x]
    branching = np.zeros(grid.M, dtype=bool)
    depth = np.zeros(grid.M + 1, dtype=int)
    for m in range(grid.M):
        dt = grid.dt(m)
        t = float(grid.times[m])
        if dt == 0.0:
            nxt = x.copy()
        else:
            mean = x + p.drift(t, x) * dt
            s = p.vol(t, x)
            if np.all(s == 0):
                nxt = mean
            else:
                if depth[m] + 1 > depth_cap:
                    raise LatticeSizeError(
                        f"tree needs more than {depth_cap} branching steps; "
                        "use a coarser grid or the path-set mode (simulate_paths)")
                sq = math.sqrt(dt)
                nxt = np.empty((2 * x.shape[0],) + x.shape[1:])
                nxt[0::2] = mean - s * sq
                nxt[1::2] = mean + s * sq
                branching[m] = True
        depth[m + 1] = depth[m] + int(branching[m])
        states.append(nxt)
        x = nxt
    return Lattice(grid, states, branching, depth, p.r)


# ---- path sets -------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class PathSet:
    states: np.ndarray
    seed: int
    grid: TimeGrid

    @property
    def n_paths(self) -> int:
        return int(self.states.shape[0])

    @property
    def max_dt(self) -> float:
        return self.grid.max_dt

    def dump(self, path) -> None:
        with open(path, "wb") as fh:
            fh.write(_HEADER.pack(MAGIC, self.n_paths, self.grid.M))
            fh.write(np.ascontiguousarray(self.states, dtype="<f8").tobytes())

    def to_bytes(self) -> bytes:
        return _HEADER.pack(MAGIC, self.n_paths, self.grid.M) + np.ascontiguousarray(self.states, dtype="<f8").tobytes()


def load_paths(path) -> tuple[int, int, np.ndarray]:
    """Read a binary dump; returns (n_paths, M, states)."""
    with open(path, "rb") as fh:
        raw = fh.read()
    magic, n, M = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise ValueError("not a path-set dump")
    data = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size)
    per = n * (M + 1)
    if per == 0 or data.size % per:
        raise ValueError("truncated path-set dump")
    r = data.size // per
    shape = (n, M + 1) if r == 1 else (n, M + 1, r)
    return int(n), int(M), data.reshape(shape).copy()


def path_normals(seed: int, index: int, size: int) -> np.ndarray:
    """Standard normals of one path from its own counter-based stream."""
    gen = np.random.Generator(np.random.Philox(key=(int(seed) << 64) | int(index)))
    return gen.standard_normal(size)


def simulate_paths(p: SwitchingProblem, grid: TimeGrid, n_paths: int, seed: int) -> PathSet:
    if n_paths < 1:
        raise ValueError("n_paths must be >= 1")
    steps = [m for m in range(grid.M) if grid.dt(m) > 0]
    xi = np.stack([path_normals(seed, k, len(steps)) for k in range(n_paths)]) if steps else np.zeros((n_paths, 0))
    x = np.repeat(p.x0_array, n_paths, axis=0)
    out = np.empty((n_paths, grid.M + 1) + x.shape[1:])
    out[:, 0] = x
    col = {m: j for j, m in enumerate(steps)}
    for m in range(grid.M):
        dt = grid.dt(m)
        if dt > 0:
            t = float(grid.times[m])
            w = xi[:, col[m]] if x.ndim == 1 else xi[:, col[m]][:, None]
            x = x + p.drift(t, x) * dt + p.vol(t, x) * math.sqrt(dt) * w
        out[:, m + 1] = x
    return PathSet(out, int(seed), grid)


@dataclass(frozen=True)
class MomentReport:
    p_exp: int
    value: float
    stderr: float
    fitted_constant: float
    n_paths: int
    x0_norm: float

    def to_json(self) -> dict:
        return dict(self.__dict__)


def moment_diagnostic(ps: PathSet, p_exp: int) -> MomentReport:
    """Empirical E[sup_s |X_s|^p] and the constant C with value = C (1 + |x0|^p)."""
    if p_exp not in (2, 4):
        raise ValueError("p_exp must be 2 or 4")
    s = ps.states
    mag = np.abs(s) if s.ndim == 2 else np.sqrt((s ** 2).sum(axis=2))
    sup = mag.max(axis=1) ** p_exp
    val = float(sup.mean())
    err = float(sup.std(ddof=1) / math.sqrt(sup.size)) if sup.size > 1 else 0.0
    x0n = float(mag[0, 0])
    return MomentReport(p_exp, val, err, val / (1.0 + x0n ** p_exp), ps.n_paths, x0n)
