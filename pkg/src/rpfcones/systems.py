"""Dynamical systems with countable branch structure.

Each stage ``T_j`` is exposed through its inverse branches: for a point
``x`` the stage enumerates preimages ``y_k`` together with the log-weight
``f_j(y_k)`` (``-ln JF(y)`` on towers), truncated at ``N`` branches with a
bound on the omitted weight.  Stage sequences are plain lists, extended
periodically: stage ``j`` of a list ``stages`` is ``stages[j % len(stages)]``.

Points are floats on interval stages, symbol tuples on shift stages and
``(level, word)`` pairs on towers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property, reduce
from typing import Any, Callable, Sequence

import numpy as np
import scipy.sparse as sp

from .errors import ConfigError, DomainError, OrbitError, PairingError, TruncationError
from .function_space import DiscreteFunction, Grid, chebyshev_grid, cylinder_grid, tower_grid

GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class Branch:
    """One inverse branch ``y_k`` evaluated at a query point."""

    inverse_map: Callable[[Any], Any]
    log_weight: float
    index: int
    point: Any


@dataclass(frozen=True)
class BranchSet:
    branches: list
    tail_bound: float

    def __len__(self) -> int:
        return len(self.branches)

    def __iter__(self):
        return iter(self.branches)


class SystemStage:
    """Common interface of a stage; see the concrete subclasses.

    Metadata: ``xi`` (pairing scale), ``gamma`` and ``n0`` (pairing
    contraction ``gamma**-floor(n/n0)``), ``alpha`` and ``Q`` (Holder
    regularity of the log-weights along paired orbits).
    """

    kind = "abstract"

    def __init__(self, grid: Grid, *, index: int = 0, name: str = "", xi: float, gamma: float, n0: int, alpha: float = 1.0, Q: float = 0.0):
        if gamma <= 1:
            raise ConfigError("pairing contraction needs gamma > 1")
        self.grid = grid
        self.index = index
        self.name = name or self.kind
        self.xi = float(xi)
        self.gamma = float(gamma)
        self.n0 = int(n0)
        self.alpha = float(alpha)
        self.Q = float(Q)

    # interface ------------------------------------------------------------
    def forward(self, x):
        raise NotImplementedError

    def branches(self, x, N: int | None = None) -> BranchSet:
        raise NotImplementedError

    def distance(self, x, y) -> float:
        raise NotImplementedError

    def tail_bound(self, N: int | None) -> float:
        return 0.0

    def in_domain(self, x) -> bool:
        raise NotImplementedError

    def metadata(self) -> dict:
        return {"kind": self.kind, "name": self.name, "xi": self.xi, "gamma": self.gamma, "n0": self.n0, "alpha": self.alpha, "Q": self.Q}

    def pairing(self, x, xp, N: int | None = None) -> list[tuple[Branch, Branch]]:
        """Branches of ``x`` and ``x'`` aligned by branch index."""
        if self.distance(x, xp) >= self.xi:
            raise PairingError(f"d(x, x') = {self.distance(x, xp)} is not below xi = {self.xi}")
        a = self.branches(x, N).branches
        b = self.branches(xp, N).branches
        if [br.index for br in a] != [br.index for br in b]:
            raise PairingError("branch sets of paired points are not aligned")
        return list(zip(a, b))

    def __repr__(self) -> str:
        return f"{type(self).__name__}({self.name!r}, index={self.index})"


# ---------------------------------------------------------------------------
# interval stages


class IntervalStage(SystemStage):
    """Full-branch expanding map of [0, 1] given by vectorized inverse branches.

    ``inverse(k, x)`` and ``log_weight(k, x)`` broadcast over integer branch
    indices ``k`` and points ``x``.  Countable stages (``n_branches=None``)
    need a ``tail`` callable bounding the omitted weight beyond ``N``.
    """

    kind = "interval"

    def __init__(
        self,
        inverse: Callable,
        log_weight: Callable,
        forward: Callable,
        *,
        n_branches: int | None,
        first_branch: int = 0,
        tail: Callable[[int], float] | None = None,
        default_N: int = 10_000,
        grid: Grid | None = None,
        nodes: int = 64,
        weight_power: float | None = None,
        **meta,
    ):
        super().__init__(grid or chebyshev_grid(nodes), **meta)
        if n_branches is None and tail is None:
            raise ConfigError("countable stages need a tail bound")
        self._inverse = inverse
        self._log_weight = log_weight
        self._forward = forward
        self.n_branches = n_branches
        self.first_branch = first_branch
        self._tail = tail
        self.default_N = default_N
        # Branch weights behave like (x + k)**(-weight_power) for large k;
        # this enables the Hurwitz-zeta tail correction in operator assembly.
        self.weight_power = weight_power

    def branch_indices(self, N: int | None = None) -> np.ndarray:
        if self.n_branches is not None:
            count = self.n_branches if N is None else min(N, self.n_branches)
        else:
            count = self.default_N if N is None else N
        return np.arange(self.first_branch, self.first_branch + count)

    def inverse(self, k, x):
        return self._inverse(np.asarray(k), np.asarray(x, dtype=float))

    def log_weight(self, k, x):
        return self._log_weight(np.asarray(k), np.asarray(x, dtype=float))

    def tail_bound(self, N: int | None = None) -> float:
        if self.n_branches is not None and (N is None or N >= self.n_branches):
            return 0.0
        return float(self._tail(self.default_N if N is None else N))

    def in_domain(self, x) -> bool:
        return 0.0 <= x <= 1.0

    def distance(self, x, y) -> float:
        return abs(float(x) - float(y))

    def forward(self, x):
        x = float(x)
        if not 0.0 <= x <= 1.0:
            raise DomainError(f"{x} is outside [0, 1]")
        return float(self._forward(np.asarray(x)))

    def forward_array(self, x: np.ndarray) -> np.ndarray:
        return self._forward(np.asarray(x, dtype=float))

    def branches(self, x, N: int | None = None) -> BranchSet:
        if not self.in_domain(x):
            raise DomainError(f"{x} is outside [0, 1]")
        ks = self.branch_indices(N)
        ys = self.inverse(ks, x)
        lw = self.log_weight(ks, x)
        out = [Branch(_bind(self.inverse, int(k)), float(w), int(k), float(y)) for k, y, w in zip(ks, ys, lw)]
        return BranchSet(out, self.tail_bound(N))

    def branch_table(self, x: np.ndarray, N: int | None = None):
        """Arrays ``(k, Y, LW)`` of branch indices, preimages and log-weights, shape (len(x), B)."""
        ks = self.branch_indices(N)
        x = np.asarray(x, dtype=float)[:, None]
        return ks, self.inverse(ks[None, :], x), self.log_weight(ks[None, :], x)


def _bind(inverse, k):
    return lambda x: float(inverse(np.asarray(k), np.asarray(x, dtype=float)))


def gauss_stage(nodes: int = 64, N: int = 10_000, index: int = 0) -> IntervalStage:
    """Gauss map ``x -> 1/x mod 1`` with branches ``1/(x+n)`` and weights ``(x+n)**-2``."""

    def forward(x):
        x = np.asarray(x, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            r = 1.0 / x
            return r - np.floor(r)

    return IntervalStage(
        inverse=lambda k, x: 1.0 / (x + k),
        log_weight=lambda k, x: -2.0 * np.log(x + k),
        forward=forward,
        n_branches=None,
        first_branch=1,
        tail=lambda N: 1.0 / N,
        default_N=N,
        nodes=nodes,
        weight_power=2.0,
        index=index,
        name="gauss",
        xi=1.5,
        gamma=9.0 / 4.0,
        n0=2,
        alpha=1.0,
        # regularity of -2 ln y along paired orbits: 2 * 2 / (1 - 4/9)
        Q=7.2,
    )


def interval_stage(
    intervals: Sequence[tuple[float, float]],
    inverses: Sequence[Callable],
    log_weights: Sequence[Callable | float] | None = None,
    *,
    gamma: float | None = None,
    nodes: int = 64,
    index: int = 0,
    name: str = "interval",
    Q: float | None = None,
    samples: int = 257,
    grid: Grid | None = None,
) -> IntervalStage:
    """Finite full-branch interval map from its inverse branches.

    ``inverses[k]`` maps [0, 1] onto ``intervals[k]`` (monotone).  Log-weights
    default to ``-ln |T'|`` at the preimage, i.e. ``ln |y_k'(x)|`` estimated by
    central differences.  Expansion ``gamma`` and regularity ``Q`` are
    measured on a sample grid when not supplied.  ``grid`` replaces the
    default Chebyshev grid (e.g. a piecewise-linear one).
    """
    iv = [(float(a), float(b)) for a, b in intervals]
    if len(iv) != len(inverses) or not iv:
        raise ConfigError("one inverse branch per interval is required")
    order = sorted(range(len(iv)), key=lambda k: iv[k][0])
    iv = [iv[k] for k in order]
    inverses = [inverses[k] for k in order]
    if log_weights is not None:
        log_weights = [log_weights[k] for k in order]
    if abs(iv[0][0]) > 1e-12 or abs(iv[-1][1] - 1.0) > 1e-12:
        raise ConfigError("branch intervals must cover [0, 1)")
    for (a0, b0), (a1, b1) in zip(iv, iv[1:]):
        if a1 < b0 - 1e-12:
            raise ConfigError(f"branch intervals overlap near {a1}")
        if a1 > b0 + 1e-12:
            raise ConfigError(f"coverage gap between {b0} and {a1}")
    for a, b in iv:
        if b <= a:
            raise ConfigError("empty branch interval")

    t = np.linspace(0.0, 1.0, samples)
    Y = np.array([np.asarray(g(t), dtype=float) for g in inverses])
    for k, (a, b) in enumerate(iv):
        if np.any(Y[k] < a - 1e-12) or np.any(Y[k] > b + 1e-12):
            raise ConfigError(f"inverse branch {k} leaves its interval")
        d = np.diff(Y[k])
        if not (np.all(d > 0) or np.all(d < 0)):
            raise ConfigError(f"inverse branch {k} is not monotone")
    slopes = np.abs(np.diff(Y, axis=1)) / np.diff(t)
    measured_gamma = 1.0 / slopes.max()
    if gamma is None:
        gamma = measured_gamma
    if measured_gamma < gamma * (1 - 1e-9) or gamma <= 1:
        raise ConfigError(f"branch expansion {measured_gamma:.4g} is below gamma = {gamma:.4g} or not > 1")

    h = 1e-6

    def deriv(g, x):
        lo = np.clip(x - h, 0.0, 1.0)
        hi = np.clip(x + h, 0.0, 1.0)
        return np.abs((np.asarray(g(hi), dtype=float) - np.asarray(g(lo), dtype=float)) / (hi - lo))

    if log_weights is None:
        lw_fns = [lambda x, g=g: np.log(deriv(g, x)) for g in inverses]
    else:
        lw_fns = [w if callable(w) else (lambda x, c=float(w): np.full(np.shape(x), c)) for w in log_weights]

    K = len(iv)

    def inverse(k, x):
        k, x = np.broadcast_arrays(k, x)
        out = np.empty(x.shape)
        for j in range(K):
            m = k == j
            if np.any(m):
                out[m] = inverses[j](x[m])
        return out

    def log_weight(k, x):
        k, x = np.broadcast_arrays(k, x)
        out = np.empty(x.shape)
        for j in range(K):
            m = k == j
            if np.any(m):
                out[m] = lw_fns[j](x[m])
        return out

    edges = np.array([a for a, _ in iv] + [1.0])

    def forward(x):
        x = np.asarray(x, dtype=float)
        k = np.clip(np.searchsorted(edges, x, side="right") - 1, 0, K - 1)
        return _invert_branches(inverses, k, x)

    if Q is None:
        # sup over branches of the Lipschitz constant of the log-weight,
        # summed along a contracting pairing: Lip * gamma / (gamma - 1)
        L = np.abs(np.diff(np.array([lw(t) for lw in lw_fns]), axis=1)).max() / (t[1] - t[0])
        Q = float(L * gamma / (gamma - 1.0))

    stage = IntervalStage(
        inverse, log_weight, forward, n_branches=K, grid=grid, nodes=nodes, index=index, name=name, xi=1.5, gamma=gamma, n0=1, alpha=1.0, Q=Q
    )
    stage.intervals = iv
    return stage


def _invert_branches(inverses, k, x, iters: int = 60) -> np.ndarray:
    """Solve ``inverses[k](t) = x`` for t in [0, 1] by vectorized bisection."""
    x = np.asarray(x, dtype=float)
    k = np.broadcast_to(k, x.shape)
    lo = np.zeros(x.shape)
    hi = np.ones(x.shape)
    inc = np.empty(x.shape, dtype=bool)
    for j, g in enumerate(inverses):
        m = k == j
        if np.any(m):
            inc[m] = float(g(np.array(1.0))) > float(g(np.array(0.0)))
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        val = np.empty(x.shape)
        for j, g in enumerate(inverses):
            m = k == j
            if np.any(m):
                val[m] = g(mid[m])
        below = (val < x) == inc
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    return 0.5 * (lo + hi)


def doubling_stage(nodes: int = 64, index: int = 0) -> IntervalStage:
    """Doubling map with weights ``1/2`` (Lebesgue is conformal)."""
    return interval_stage(
        [(0.0, 0.5), (0.5, 1.0)],
        [lambda x: 0.5 * np.asarray(x), lambda x: 0.5 * (np.asarray(x) + 1.0)],
        [-math.log(2.0), -math.log(2.0)],
        gamma=2.0,
        nodes=nodes,
        index=index,
        name="doubling",
        Q=0.0,
    )


def nonlinear_three_branch_stage(kappas=(0.3, -0.25, 0.2), cuts=(0.0, 0.3, 0.65, 1.0), nodes: int = 64, index: int = 0) -> IntervalStage:
    """Three full branches ``y_k(x) = a_k + (b_k - a_k)(x + kappa_k x (1 - x))``.

    Log-weights are ``ln y_k'(x)`` so Lebesgue measure is conformal.
    """
    iv = list(zip(cuts[:-1], cuts[1:]))
    invs, lws = [], []
    for (a, b), kap in zip(iv, kappas):
        if abs(kap) >= 1:
            raise ConfigError("|kappa| < 1 keeps the branch monotone")
        invs.append(lambda x, a=a, b=b, kap=kap: a + (b - a) * (np.asarray(x) + kap * np.asarray(x) * (1 - np.asarray(x))))
        lws.append(lambda x, a=a, b=b, kap=kap: np.log((b - a) * (1 + kap * (1 - 2 * np.asarray(x)))))
    return interval_stage(iv, invs, lws, nodes=nodes, index=index, name="three-branch")


# ---------------------------------------------------------------------------
# full shifts


class ShiftStage(SystemStage):
    """Full shift with symbol weights; branches prepend a symbol."""

    kind = "shift"

    def __init__(self, weights: np.ndarray, tail: float = 0.0, depth: int = 3, **meta):
        meta.setdefault("xi", 2.0)
        meta.setdefault("gamma", 2.0)
        meta.setdefault("n0", 1)
        super().__init__(cylinder_grid(len(weights), depth), **meta)
        self.weights = np.asarray(weights, dtype=float)
        self.log_weights = np.log(self.weights)
        self._tail = float(tail)

    @property
    def n_symbols(self) -> int:
        return int(self.weights.size)

    def tail_bound(self, N: int | None = None) -> float:
        if N is None or N >= self.n_symbols:
            return self._tail
        return self._tail + float(self.weights[N:].sum())

    def in_domain(self, x) -> bool:
        try:
            return len(x) > 0 and all(0 <= int(s) < self.n_symbols for s in x)
        except TypeError:
            return False

    def distance(self, x, y) -> float:
        for n, (a, b) in enumerate(zip(x, y)):
            if a != b:
                return 2.0 ** (-n)
        return 0.0

    def forward(self, x):
        if len(x) < 2:
            raise DomainError("sequence prefix too short to shift")
        return tuple(x[1:])

    def branches(self, x, N: int | None = None) -> BranchSet:
        if not self.in_domain(x):
            raise DomainError(f"{x!r} is not a sequence over {self.n_symbols} symbols")
        count = self.n_symbols if N is None else min(N, self.n_symbols)
        out = [Branch(lambda p, a=a: (a,) + tuple(p), float(self.log_weights[a]), a, (a,) + tuple(x)) for a in range(count)]
        return BranchSet(out, self.tail_bound(N))

    def node_preimages(self):
        """(rows, cols, log_weights) with row node w pulled back from col node (a,) + w[:-1]."""
        g = self.grid
        A, K = self.n_symbols, g.coords.shape[1]
        rows, cols, lw = [], [], []
        radix = A ** np.arange(K - 1, -1, -1)
        for r, w in enumerate(g.coords):
            for a in range(A):
                pre = np.concatenate([[a], w[:-1]])
                rows.append(r)
                cols.append(int(pre @ radix))
                lw.append(self.log_weights[a])
        return np.array(rows), np.array(cols), np.array(lw)


def full_shift_stage(symbol_weights, depth: int = 3, n_symbols: int | None = None, index: int = 0, name: str = "full-shift") -> ShiftStage:
    """Full shift stage; weights may be a finite sequence or a callable on ``0, 1, ...``.

    A callable describes a countable alphabet truncated at ``n_symbols``; its
    tail is estimated from dyadic block sums, and weights whose block sums do
    not decay geometrically are rejected as non-summable.
    """
    if callable(symbol_weights):
        if n_symbols is None:
            raise ConfigError("countable alphabets need a truncation n_symbols")
        w = np.array([float(symbol_weights(k)) for k in range(n_symbols)])
        tail = _dyadic_tail(symbol_weights, n_symbols)
    else:
        w = np.asarray(symbol_weights, dtype=float)
        tail = 0.0
    if w.ndim != 1 or w.size == 0:
        raise ConfigError("need at least one symbol weight")
    if not np.all(np.isfinite(w)) or np.any(w <= 0):
        raise ConfigError("symbol weights must be finite and positive")
    if not math.isfinite(float(w.sum())):
        raise ConfigError("symbol weights are not summable")
    return ShiftStage(w, tail=tail, depth=depth, index=index, name=name)


def _dyadic_tail(weight, N: int, blocks: int = 6) -> float:
    sums = []
    start = N
    for _ in range(blocks):
        ks = np.arange(start, 2 * start)
        sums.append(float(np.sum([weight(int(k)) for k in ks])))
        start *= 2
    ratios = [b / a for a, b in zip(sums, sums[1:]) if a > 0]
    r = max(ratios) if ratios else 0.0
    if not sums[0] or r == 0.0:
        return sum(sums)
    if r >= 1 - 1e-3:
        raise ConfigError("symbol weights are not summable (dyadic block sums do not decay)")
    return sum(sums[:-1]) + sums[-1] / (1 - r)


# ---------------------------------------------------------------------------
# Young towers


@dataclass(frozen=True)
class TowerSpec:
    """Truncated Young tower over a finite set of base atoms.

    ``base_masses`` is the reference probability on the base; the base map
    acts as a Markov shift on atoms with row-stochastic ``transition``
    (default: independent atoms, rows equal to ``base_masses``).  The
    Jacobian of the return map on the cylinder ``[j, a]`` is
    ``rho_a / (rho_j P[j, a])``.
    """

    return_times: tuple
    base_masses: tuple
    beta: float = 0.5
    q: float = 1.0
    p: float = math.log(2.0)
    R_max: int = 20
    K_depth: int = 0
    transition: tuple | None = None
    mass_tol: float = 1e-12

    def level_weights(self, levels) -> np.ndarray:
        return np.exp(0.5 * self.p * np.asarray(levels, dtype=float))


def geometric_tower_spec(q: float = 1.0, p: float = math.log(2.0), R_max: int = 20, beta: float = 0.5, K_depth: int = 0) -> TowerSpec:
    """Atoms with return times 1..R_max and ``m0(R > n) = min(1, q e^{-pn})`` for n < R_max.

    The mass beyond the truncation is placed on the ``R_max`` atom, so the
    truncated tower carries the full base mass.
    """
    T = lambda n: min(1.0, q * math.exp(-p * n))
    masses = [T(r - 1) - T(r) for r in range(1, R_max)] + [T(R_max - 1)]
    R = [r for r, m in zip(range(1, R_max + 1), masses) if m > 0]
    masses = [m for m in masses if m > 0]
    return TowerSpec(tuple(R), tuple(masses), beta=beta, q=q, p=p, R_max=R_max, K_depth=K_depth)


class TowerStage(SystemStage):
    """Truncated tower with cells (level, word); see :func:`tower_build`."""

    kind = "tower"

    def __init__(self, spec: TowerSpec, R: np.ndarray, rho: np.ndarray, P: np.ndarray, index: int = 0):
        super().__init__(tower_grid(R, spec.K_depth, spec.beta), index=index, name="tower", xi=2.0, gamma=1.0 / spec.beta, n0=1)
        self.spec = spec
        self.R = R
        self.rho = rho
        self.P = P
        self.v = spec.level_weights(self.grid.levels)

    @cached_property
    def log_jacobian_inverse(self) -> np.ndarray:
        """``-ln JF^R`` on cylinders ``[j, a]`` as a (J, J) table."""
        with np.errstate(divide="ignore"):
            return np.log(self.rho[:, None] * self.P / self.rho[None, :])

    @cached_property
    def m0(self) -> np.ndarray:
        """Reference measure of each cell, normalized to total mass 1 on the tower."""
        g = self.grid
        w = g.coords
        mass = self.rho[w[:, 0]].copy()
        for i in range(w.shape[1] - 1):
            mass *= self.P[w[:, i], w[:, i + 1]]
        return mass / float(np.dot(self.rho, self.R))

    @cached_property
    def m(self) -> np.ndarray:
        return self.v * self.m0

    def in_domain(self, x) -> bool:
        try:
            level, word = x
            return 0 <= int(word[0]) < self.R.size and 0 <= int(level) < self.R[int(word[0])] and all(0 <= int(s) < self.R.size for s in word)
        except (TypeError, ValueError, IndexError):
            return False

    def distance(self, x, y) -> float:
        if int(x[0]) != int(y[0]):
            return 1.0
        for s, (a, b) in enumerate(zip(x[1], y[1])):
            if a != b:
                return self.spec.beta**s
        return 0.0

    def forward(self, x):
        if not self.in_domain(x):
            raise DomainError(f"{x!r} is not a tower point")
        level, word = int(x[0]), tuple(int(s) for s in x[1])
        if level + 1 < self.R[word[0]]:
            return (level + 1, word)
        if len(word) < 2:
            raise DomainError("word too short to apply the return map")
        return (0, word[1:])

    def branches(self, x, N: int | None = None) -> BranchSet:
        if not self.in_domain(x):
            raise DomainError(f"{x!r} is not a tower point")
        level, word = int(x[0]), tuple(int(s) for s in x[1])
        if level > 0:
            return BranchSet([Branch(lambda p: (p[0] - 1, p[1]), 0.0, 0, (level - 1, word))], 0.0)
        out = []
        lj = self.log_jacobian_inverse[:, word[0]]
        for j in range(self.R.size):
            if np.isfinite(lj[j]):
                pre = (int(self.R[j]) - 1, (j,) + word)
                out.append(Branch(lambda p, j=j: (int(self.R[j]) - 1, (j,) + tuple(p[1])), float(lj[j]), j, pre))
        return BranchSet(out, 0.0)

    def node_preimages(self):
        """(rows, cols, log_weights) of the one-step preimage structure on cells."""
        g = self.grid
        K1 = g.coords.shape[1]
        rows, cols, lw = [], [], []
        index = g._word_index
        for r, (l, w) in enumerate(zip(g.levels, g.coords)):
            w = tuple(int(s) for s in w)
            if l > 0:
                rows.append(r)
                cols.append(index[(int(l) - 1, w)])
                lw.append(0.0)
                continue
            for j in range(self.R.size):
                ljw = self.log_jacobian_inverse[j, w[0]]
                if not np.isfinite(ljw):
                    continue
                rows.append(r)
                cols.append(index[(int(self.R[j]) - 1, ((j,) + w)[:K1])])
                lw.append(float(ljw))
        return np.array(rows), np.array(cols), np.array(lw)

    @cached_property
    def L0_matrix(self) -> sp.csr_matrix:
        rows, cols, lw = self.node_preimages()
        n = self.grid.n
        return sp.csr_matrix((np.exp(lw), (rows, cols)), shape=(n, n))

    @cached_property
    def h0(self) -> np.ndarray:
        """Invariant density of ``L0`` w.r.t. ``m0`` with ``int h0 dm0 = 1``."""
        g = np.ones(self.grid.n)
        M = self.L0_matrix
        for _ in range(20000):
            new = M @ g
            new /= float(self.m0 @ new)
            if np.max(np.abs(new - g)) < 1e-15:
                g = new
                break
            g = new
        return g

    @property
    def h(self) -> np.ndarray:
        return self.h0 / self.v

    def tail_masses(self) -> np.ndarray:
        """Base masses ``m0{R > n}`` for n = 0..R_max."""
        return np.array([self.rho[self.R > n].sum() for n in range(self.spec.R_max + 1)])

    def jacobian_constant(self) -> float:
        """Smallest C in ``|JF(x)/JF(y) - 1| <= C d(F^R x, F^R y)`` on cylinder pairs.

        Points of one atom whose images start in different atoms are at
        distance 1; with the Jacobian constant on depth-1 cylinders, pairs
        with equal first image symbol contribute nothing.
        """
        J = np.exp(-self.log_jacobian_inverse)
        best = 0.0
        for j in range(self.R.size):
            Jj = J[j][np.isfinite(J[j])]
            if Jj.size:
                best = max(best, float(np.max(np.abs(Jj[:, None] / Jj[None, :] - 1.0))))
        return best

    def check_jacobian_regularity(self, C: float, pairs: Sequence[tuple] | None = None) -> bool:
        """Spot-check the Jacobian ratio bound on pairs of base points ``(word_x, word_y)``."""
        J = np.exp(-self.log_jacobian_inverse)
        if pairs is None:
            J_atoms = range(self.R.size)
            pairs = [((j, a), (j, b)) for j in J_atoms for a in J_atoms for b in J_atoms]
        for wx, wy in pairs:
            if wx[0] != wy[0]:
                continue
            ratio = J[wx[0], wx[1]] / J[wy[0], wy[1]]
            d = self.distance((0, wx[1:]), (0, wy[1:]))
            if abs(ratio - 1.0) > C * d + 1e-12:
                return False
        return True


def tower_build(spec: TowerSpec, index: int = 0) -> TowerStage:
    """Validate a tower spec and build its truncated stage."""
    R = np.asarray(spec.return_times, dtype=int)
    rho = np.asarray(spec.base_masses, dtype=float)
    if R.shape != rho.shape or R.size == 0:
        raise ConfigError("one return time per base atom is required")
    if np.any(R < 1) or np.any(rho <= 0):
        raise ConfigError("return times must be >= 1 and masses positive")
    if not 0 < spec.beta < 1:
        raise ConfigError("beta must lie in (0, 1)")
    if abs(rho.sum() - 1.0) > 1e-12:
        raise ConfigError(f"base masses sum to {rho.sum()!r}, not 1")
    keep = R <= spec.R_max
    lost = float(rho[~keep].sum())
    if lost > spec.mass_tol:
        raise TruncationError(f"atoms beyond R_max carry mass {lost:.3e} > {spec.mass_tol:.1e}")
    if not np.all(keep):
        R, rho = R[keep], rho[keep] / rho[keep].sum()
    if reduce(math.gcd, R.tolist()) != 1:
        raise ConfigError("return times must have gcd 1")
    for n in range(spec.R_max + 1):
        if rho[R > n].sum() > spec.q * math.exp(-spec.p * n) * (1 + 1e-12) + 1e-15:
            raise ConfigError(f"tail m0(R > {n}) exceeds q e^(-pn)")
    if spec.transition is None:
        P = np.tile(rho, (R.size, 1))
    else:
        P = np.asarray(spec.transition, dtype=float)
        if not np.all(keep):
            P = P[np.ix_(keep, keep)]
            P = P / P.sum(axis=1, keepdims=True)
        if P.shape != (R.size, R.size) or np.any(P < 0) or np.any(np.abs(P.sum(axis=1) - 1) > 1e-12):
            raise ConfigError("transition must be a row-stochastic matrix over the atoms")
        if np.any(P.sum(axis=0) == 0):
            raise ConfigError("every atom must be reachable")
    return TowerStage(spec, R, rho, P, index=index)


# ---------------------------------------------------------------------------
# orbits and pairings


def stage_at(stages: Sequence[SystemStage], j: int) -> SystemStage:
    return stages[j % len(stages)]


@dataclass
class PairedPreimages:
    pairs: list  # (y, y', word)
    distances: np.ndarray
    bound: float
    base_distance: float

    @property
    def ok(self) -> bool:
        return bool(np.all(self.distances <= self.bound * self.base_distance * (1 + 1e-12) + 1e-15))

    @property
    def max_ratio(self) -> float:
        if self.base_distance == 0:
            return 0.0
        return float(self.distances.max() / self.base_distance) if self.distances.size else 0.0


def paired_preimages(stages: Sequence[SystemStage], j: int, x, xp, n: int, N: int | None = None) -> PairedPreimages:
    """Aligned ``n``-step preimages of ``x`` and ``x'`` under ``T_{j+n-1} o ... o T_j``.

    Raises :class:`PairingError` when the points are too far apart or when
    some pair violates ``d(y, y') <= gamma**-floor(n/n0) d(x, x')``.
    """
    last = stage_at(stages, j + n - 1) if n > 0 else stage_at(stages, j)
    d0 = last.distance(x, xp)
    if d0 >= last.xi:
        raise PairingError(f"d(x, x') = {d0} is not below xi = {last.xi}")
    current = [(x, xp, ())]
    for m in range(n - 1, -1, -1):
        st = stage_at(stages, j + m)
        nxt = []
        for y, yp, word in current:
            for b, bp in st.pairing(y, yp, N):
                nxt.append((b.point, bp.point, (b.index,) + word))
        current = nxt
    first = stage_at(stages, j)
    dist = np.array([first.distance(y, yp) for y, yp, _ in current])
    bound = first.gamma ** (-math.floor(n / first.n0))
    out = PairedPreimages(current, dist, bound, d0)
    if not out.ok:
        raise PairingError(f"pairing contraction violated: ratio {out.max_ratio} > {bound}")
    return out


@dataclass
class Trajectory:
    points: list
    start_index: int

    def __len__(self) -> int:
        return len(self.points)


def trajectory(stages: Sequence[SystemStage], j: int, x0, n: int, rng=None) -> Trajectory:
    """Forward orbit ``x0, T_j x0, ..., T_j^n x0``.

    ``rng`` is accepted for interface symmetry with samplers and is not used:
    orbits are deterministic once ``x0`` is fixed.
    """
    if not stage_at(stages, j).in_domain(x0):
        raise OrbitError(f"{x0!r} is outside the domain", 0)
    pts = [x0]
    x = x0
    for k in range(n):
        st = stage_at(stages, j + k)
        try:
            x = st.forward(x)
        except (DomainError, ZeroDivisionError, FloatingPointError) as exc:
            raise OrbitError(str(exc), k) from exc
        if isinstance(x, float) and not math.isfinite(x):
            raise OrbitError("orbit left the domain", k)
        if not stage_at(stages, j + k + 1).in_domain(x):
            raise OrbitError(f"{x!r} left the domain", k)
        pts.append(x)
    return Trajectory(pts, j)
