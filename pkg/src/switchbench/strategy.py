"""Switching policies, their exact evaluation on the tree, and a brute-force oracle.

A policy maps (layer, node, current mode, switches so far) to an action.
Policies answer per layer and per (mode, count) for all nodes at once, which
keeps the forward evaluation vectorized.  Targets are mode indices, -1 means
stay.

The oracle in :func:`brute_force_value` enumerates every switching chain at
every node and shares no code with the Snell solver.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .lattice import Lattice
from .problem import SwitchingProblem

STAY = -1


class NonTerminationError(RuntimeError):
    pass


class OracleSizeError(ValueError):
    pass


class Policy:
    """Base class; subclasses implement :meth:`targets`."""

    epsilon: float | None = None
    source: str | None = None
    bound: int | None = None

    def targets(self, m: int, mode: int, count: int) -> np.ndarray:
        raise NotImplementedError


class StayPolicy(Policy):
    def __init__(self, lat: Lattice):
        self._n = [lat.n_nodes(m) for m in range(lat.M + 1)]

    def targets(self, m, mode, count):
        return np.full(self._n[m], STAY)


class EpsilonPolicy(Policy):
    """First-hitting rule: switch when Y^i <= max_k (Y^k - g_ik) + eps / 2^(n+1).

    The target is the argmax over k, ties to the smallest index.  Nothing
    is prescribed on the terminal layer.
    """

    def __init__(self, vf, p: SwitchingProblem, lat: Lattice, eps: float):
        if not eps > 0:
            raise ValueError("eps must be positive")
        self.epsilon = float(eps)
        self.source = vf.solver
        self.M = lat.M
        self.gap, self.best = [], []
        for m in range(lat.M + 1):
            G = p.cost_matrix(float(lat.times[m]), lat.states[m], left=bool(lat.grid.pre_jump[m]))
            cand = vf.Y[m][None, :, :] - G
            self.best.append(np.argmax(cand, axis=1))
            self.gap.append(vf.Y[m] - np.max(cand, axis=1))
        self.bound = admissibility_bound(p, vf)

    def slack(self, count: int) -> float:
        return self.epsilon / 2.0 ** (count + 1)

    def targets(self, m, mode, count):
        n = self.gap[m].shape[1]
        if m == self.M:
            return np.full(n, STAY)
        fire = self.gap[m][mode] <= self.slack(count)
        return np.where(fire, self.best[m][mode], STAY)


class TablePolicy(Policy):
    """Policy from a function rule(m, node, mode, count) -> target or None."""

    def __init__(self, lat: Lattice, rule, bound: int | None = None):
        self.lat, self.rule, self.bound = lat, rule, bound
        self._cache = {}

    def targets(self, m, mode, count):
        key = (m, mode, count)
        if key not in self._cache:
            out = []
            for j in range(self.lat.n_nodes(m)):
                k = self.rule(m, j, mode, count)
                out.append(STAY if k is None else int(k))
            self._cache[key] = np.array(out, dtype=int)
        return self._cache[key]


def extract_epsilon_policy(vf, p: SwitchingProblem, lat: Lattice, eps: float) -> EpsilonPolicy:
    return EpsilonPolicy(vf, p, lat, eps)


def admissibility_bound(p: SwitchingProblem, vf) -> int:
    lo, hi = vf.value_range()
    return int(math.ceil((hi - lo) / p.gamma)) + p.q


def _default_bound(pol: Policy, p: SwitchingProblem, lat: Lattice) -> int:
    if pol.bound is not None:
        return int(pol.bound)
    return p.q * (lat.M + 1) + p.q


def evaluate_policy(pol: Policy, p: SwitchingProblem, lat: Lattice, start_mode: int,
                    bound: int | None = None) -> float:
    """Exact expected payoff sum psi dt - sum g + h by forward mass propagation.

    Switches on the terminal layer are free and do not change the terminal
    payoff, which is taken in the mode held before T.
    """
    return _propagate(pol, p, lat, start_mode, bound)[0]


def max_switch_count(pol: Policy, p: SwitchingProblem, lat: Lattice, start_mode: int,
                     bound: int | None = None) -> int:
    """Largest number of switches made before T on any tree path."""
    return _propagate(pol, p, lat, start_mode, bound)[1]


def _propagate(pol, p, lat, start_mode, bound):
    cap = _default_bound(pol, p, lat) if bound is None else bound
    M = lat.M
    mass = {(start_mode, 0): np.ones(1)}
    total = 0.0
    for m in range(M + 1):
        t = float(lat.times[m])
        x = lat.states[m]
        left = bool(lat.grid.pre_jump[m])
        if m == M:
            for (i, n), P in sorted(mass.items()):
                total += float(np.dot(P, p.terminal(i, x)))
            worst = max((n for (i, n), P in mass.items() if np.any(P > 0)), default=0)
            break
        settled: dict = {}
        pending = mass
        for _ in range(cap + 2):
            if not pending:
                break
            nxt: dict = {}
            for (i, n), P in sorted(pending.items()):
                tg = pol.targets(m, i, n)
                stay = np.where(tg == STAY, P, 0.0)
                if (i, n) in settled:
                    settled[(i, n)] = settled[(i, n)] + stay
                else:
                    settled[(i, n)] = stay
                for k in np.unique(tg[(tg != STAY) & (P > 0)]):
                    k = int(k)
                    if k == i:
                        raise ValueError("policy prescribes a switch to the current mode")
                    if n + 1 > cap:
                        raise NonTerminationError(f"more than {cap} switches at layer {m}")
                    moved = np.where(tg == k, P, 0.0)
                    total -= float(np.dot(moved, p.cost(i, k, t, x, left=left)))
                    key = (k, n + 1)
                    nxt[key] = nxt[key] + moved if key in nxt else moved
            pending = nxt
        else:
            raise NonTerminationError(f"switching chain did not end at layer {m}")
        dt = lat.grid.dt(m)
        new = {}
        for (i, n), P in sorted(settled.items()):
            if not np.any(P):
                continue
            if dt > 0:
                total += float(np.dot(P, p.rate(i, t, x))) * dt
            new[(i, n)] = np.repeat(P * 0.5, 2) if lat.branching[m] else P
        mass = new
    return total, worst


@dataclass(frozen=True)
class SwitchEvent:
    layer: int
    time: float
    from_mode: int
    to_mode: int
    cost: float


@dataclass
class RealizedStrategy:
    path_id: int
    start_mode: int
    events: list = field(default_factory=list)

    @property
    def count(self) -> int:
        return len(self.events)


def realize_strategies(pol: Policy, p: SwitchingProblem, lat: Lattice, start_mode: int,
                       leaves=None, bound: int | None = None) -> list[RealizedStrategy]:
    """Switch sequences along root-to-leaf paths (all leaves by default)."""
    cap = _default_bound(pol, p, lat) if bound is None else bound
    M = lat.M
    if leaves is None:
        leaves = range(lat.n_nodes(M))
    cache = {}

    def tgt(m, i, n):
        key = (m, i, n)
        if key not in cache:
            cache[key] = pol.targets(m, i, n)
        return cache[key]

    out = []
    for leaf in leaves:
        rs = RealizedStrategy(int(leaf), start_mode)
        i, n = start_mode, 0
        for m in range(M + 1):
            j = lat.ancestor(m, leaf)
            t = float(lat.times[m])
            while True:
                k = int(tgt(m, i, n)[j])
                if k == STAY:
                    break
                if n + 1 > cap:
                    raise NonTerminationError(f"path {leaf}: more than {cap} switches")
                c = 0.0 if m == M else float(p.cost(i, k, t, lat.states[m][j:j + 1],
                                                    left=bool(lat.grid.pre_jump[m]))[0])
                rs.events.append(SwitchEvent(m, t, i, k, c))
                i, n = k, n + 1
        out.append(rs)
    return out


def sample_leaves(lat: Lattice, n: int, seed: int) -> np.ndarray:
    """Leaves of n random tree paths (fair coin at every branching step)."""
    rng = np.random.default_rng(seed)
    return rng.integers(0, lat.n_nodes(lat.M), size=n)


def export_strategies_csv(strats: list[RealizedStrategy], path) -> None:
    from .io import fmt
    with open(path, "w", newline="\n") as fh:
        fh.write("path_id,layer,time,from_mode,to_mode,cost_paid\n")
        for s in strats:
            for e in s.events:
                fh.write(f"{s.path_id},{e.layer},{fmt(e.time)},{e.from_mode + 1},{e.to_mode + 1},{fmt(e.cost)}\n")


# ---- brute-force oracle ----------------------------------------------------

ORACLE_MAX_DEPTH = 5
ORACLE_MAX_Q = 3
ORACLE_MAX_SWITCHES = 4


def _chains(q: int, start: int, budget: int):
    """All mode sequences start -> ... with consecutive modes distinct, length <= budget."""
    out = [()]
    for ell in range(1, budget + 1):
        for seq in itertools.product(range(q), repeat=ell):
            prev, ok = start, True
            for s in seq:
                if s == prev:
                    ok = False
                    break
                prev = s
            if ok:
                out.append(seq)
    return out


def check_oracle_size(p: SwitchingProblem, lat: Lattice, N_max: int) -> None:
    if int(lat.depth[lat.M]) > ORACLE_MAX_DEPTH or p.q > ORACLE_MAX_Q or N_max > ORACLE_MAX_SWITCHES or N_max < 0:
        raise OracleSizeError(
            f"oracle limited to depth <= {ORACLE_MAX_DEPTH}, q <= {ORACLE_MAX_Q}, "
            f"N_max <= {ORACLE_MAX_SWITCHES} (got depth {int(lat.depth[lat.M])}, q {p.q}, N_max {N_max})")


def brute_force_value(p: SwitchingProblem, lat: Lattice, i: int, N_max: int, frozen=None) -> float:
    """Maximum expected payoff over all adapted strategies with <= N_max switches.

    At each node the strategy may run any chain of switches; the chain cost
    is charged with the layer's cost values (left values on pre-jump layers),
    then the running payoff of the final mode accrues over the step.

    With ``frozen`` (per-layer arrays (q, nodes)) the payoff of a strategy is
    the plain BSDE with driver f_mode(t, x, u, z) evaluated along it, z taken
    from the two children of the node.  Drivers that read y need ``frozen``.
    """
    check_oracle_size(p, lat, N_max)
    plain = frozen is None and p.drivers is None
    if frozen is None and not plain:
        if not p.is_decoupled():
            raise ValueError("drivers read (y, z); pass the frozen input")
        frozen = [np.zeros((p.q, lat.n_nodes(m))) for m in range(lat.M + 1)]
    M = lat.M
    chains = {(s, b): _chains(p.q, s, b) for s in range(p.q) for b in range(N_max + 1)}
    memo: dict = {}

    def point(m, j):
        return lat.states[m][j:j + 1]

    def value(m, j, mode, budget):
        key = (m, j, mode, budget)
        if key in memo:
            return memo[key]
        x = point(m, j)
        if m == M:
            v = float(p.terminal(mode, x)[0])
            memo[key] = v
            return v
        t = float(lat.times[m])
        left = bool(lat.grid.pre_jump[m])
        dt = lat.grid.dt(m)
        kids = [2 * j, 2 * j + 1] if lat.branching[m] else [j]
        best = -math.inf
        for seq in chains[(mode, budget)]:
            paid, cur = 0.0, mode
            for s in seq:
                paid += float(p.cost(cur, s, t, x, left=left)[0])
                cur = s
            rest = budget - len(seq)
            nxt = [value(m + 1, c, cur, rest) for c in kids]
            future = 0.5 * (nxt[0] + nxt[1]) if len(kids) == 2 else nxt[0]
            if plain:
                run = float(p.rate(cur, t, x)[0]) * dt
            elif dt > 0:
                z = (nxt[1] - nxt[0]) / (2.0 * math.sqrt(dt)) if len(kids) == 2 else 0.0
                u = np.asarray(frozen[m], dtype=float)[:, j:j + 1]
                run = float(p.drive(cur, t, x, u, np.array([z]))[0]) * dt
            else:
                run = 0.0
            v = run + future - paid
            best = max(best, v)
        memo[key] = best
        return best

    return value(0, 0, i, N_max)
