"""Discretized function spaces: grids, node-valued functions and their norms.

Three grid kinds are supported:

* ``interval-collocation``: points of a closed interval, with barycentric
  (Chebyshev) or piecewise-linear interpolation between nodes;
* ``cylinder-partition``: cylinders of fixed depth in a full shift, with the
  metric ``base**(-n)`` where ``n`` is the first index of disagreement;
* ``tower-levels``: cells ``(level, word)`` of a truncated Young tower, with the
  separation metric ``beta**s`` on each floor.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from functools import cached_property
from typing import Any, Mapping, Sequence

import numpy as np
from numpy.polynomial import chebyshev as C

from .errors import DomainError, GridMismatchError

INTERVAL = "interval-collocation"
CYLINDER = "cylinder-partition"
TOWER = "tower-levels"
GRID_KINDS = (INTERVAL, CYLINDER, TOWER)

_BLOCK = 256  # rows per block when scanning node pairs


def lobatto_nodes(n: int) -> np.ndarray:
    """Chebyshev-Gauss-Lobatto points mapped to [0, 1], increasing, endpoints exact."""
    if n < 2:
        raise ValueError("need at least 2 nodes")
    k = np.arange(n)
    return np.sin(np.pi * k / (2 * (n - 1))) ** 2


def lobatto_bary_weights(n: int) -> np.ndarray:
    w = (-1.0) ** np.arange(n)
    w[0] *= 0.5
    w[-1] *= 0.5
    return w


def clenshaw_curtis_weights(n: int) -> np.ndarray:
    """Clenshaw-Curtis weights on [0, 1] for the nodes of :func:`lobatto_nodes`."""
    N = n - 1
    if N == 0:
        return np.array([1.0])
    theta = np.pi * np.arange(n) / N
    w = np.zeros(n)
    v = np.ones(n - 2)
    inner = np.arange(1, N)
    if N % 2 == 0:
        w[0] = w[N] = 1.0 / (N**2 - 1)
        for k in range(1, N // 2):
            v -= 2 * np.cos(2 * k * theta[inner]) / (4 * k * k - 1)
        v -= np.cos(N * theta[inner]) / (N**2 - 1)
    else:
        w[0] = w[N] = 1.0 / N**2
        for k in range(1, (N - 1) // 2 + 1):
            v -= 2 * np.cos(2 * k * theta[inner]) / (4 * k * k - 1)
    w[inner] = 2 * v / N
    # weights above are for [-1, 1]; halve for [0, 1]. Symmetric, so ordering is irrelevant.
    return w / 2


def barycentric_matrix(nodes: np.ndarray, weights: np.ndarray, t: np.ndarray) -> np.ndarray:
    """Matrix M with (M @ values)[i] = interpolant at t[i]; exact at nodes."""
    t = np.asarray(t, dtype=float)
    d = t[:, None] - nodes[None, :]
    exact = d == 0
    d[exact] = 1.0
    q = weights / d
    M = q / q.sum(axis=1, keepdims=True)
    rows, cols = np.nonzero(exact)
    if rows.size:
        M[rows] = 0.0
        M[rows, cols] = 1.0
    return M


def barycentric_combination(nodes: np.ndarray, weights: np.ndarray, t: np.ndarray, coef: np.ndarray) -> np.ndarray:
    """Row vector ``coef @ barycentric_matrix(nodes, weights, t)`` without forming the matrix."""
    t = np.asarray(t, dtype=float)
    hit = np.isin(t, nodes)
    d = t[:, None] - nodes[None, :]
    if np.any(hit):
        d[hit] = 1.0
    q = weights / d
    if np.any(hit):
        scale = np.where(hit, 0.0, coef / np.where(hit, 1.0, q.sum(axis=1)))
        out = scale @ q
        np.add.at(out, np.searchsorted(nodes, t[hit]), coef[hit])
        return out
    return (coef / q.sum(axis=1)) @ q


def _first_disagreement(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Index of the first differing symbol between word arrays; word length if equal."""
    eq = A == B
    return np.cumprod(eq, axis=-1).sum(axis=-1)


@dataclass(frozen=True, eq=False)
class Grid:
    """Ordered node set of a discretized phase space.

    ``coords`` holds float positions for interval grids and integer words
    (one row per node) for cylinder and tower grids; ``levels`` is set only
    for towers.
    """

    kind: str
    coords: np.ndarray
    levels: np.ndarray | None = None
    parameters: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in GRID_KINDS:
            raise ValueError(f"unknown grid kind {self.kind!r}")
        coords = np.array(self.coords)
        coords.setflags(write=False)
        object.__setattr__(self, "coords", coords)
        object.__setattr__(self, "parameters", dict(self.parameters))
        if self.kind == INTERVAL:
            if coords.ndim != 1 or coords.size < 1:
                raise ValueError("interval grid needs a 1-d node array")
            if np.any(np.diff(coords) <= 0):
                raise ValueError("interval nodes must be strictly increasing")
            lo, hi = self.domain
            if coords[0] < lo or coords[-1] > hi:
                raise ValueError("interval nodes must lie in the domain")
        else:
            if coords.ndim != 2:
                raise ValueError("word grids need a 2-d array of words")
        if self.kind == TOWER:
            if self.levels is None:
                raise ValueError("tower grids need levels")
            levels = np.array(self.levels, dtype=int)
            if levels.shape != (coords.shape[0],):
                raise ValueError("one level per node required")
            levels.setflags(write=False)
            object.__setattr__(self, "levels", levels)

    # -- basic attributes -------------------------------------------------
    @property
    def n(self) -> int:
        return int(self.coords.shape[0])

    def __len__(self) -> int:
        return self.n

    @property
    def domain(self) -> tuple[float, float]:
        lo, hi = self.parameters.get("domain", (0.0, 1.0))
        return float(lo), float(hi)

    @property
    def interpolation(self) -> str:
        return self.parameters.get("interpolation", "linear")

    def compatible(self, other: "Grid") -> bool:
        if self is other:
            return True
        return (
            self.kind == other.kind
            and self.coords.shape == other.coords.shape
            and np.array_equal(self.coords, other.coords)
            and (self.levels is None or np.array_equal(self.levels, other.levels))
        )

    # -- metric -------------------------------------------------------------
    def distance(self, i, j) -> np.ndarray:
        """Distances between nodes ``i`` and ``j`` (broadcasting index arrays)."""
        i = np.asarray(i)
        j = np.asarray(j)
        if self.kind == INTERVAL:
            return np.abs(self.coords[i] - self.coords[j])
        s = _first_disagreement(self.coords[i], self.coords[j])
        L = self.coords.shape[1]
        if self.kind == CYLINDER:
            base = float(self.parameters.get("base", 2.0))
            return np.where(s >= L, 0.0, base ** (-s.astype(float)))
        beta = float(self.parameters["beta"])
        same = self.levels[i] == self.levels[j]
        d = np.where(s >= L, 0.0, beta ** s.astype(float))
        return np.where(same, d, 1.0)

    def same_floor(self, i, j) -> np.ndarray:
        if self.kind != TOWER:
            return np.ones(np.broadcast(np.asarray(i), np.asarray(j)).shape, dtype=bool)
        return self.levels[np.asarray(i)] == self.levels[np.asarray(j)]

    @cached_property
    def pair_distance(self) -> np.ndarray:
        """Full symmetric distance table (use only on modest grids)."""
        idx = np.arange(self.n)
        return self.distance(idx[:, None], idx[None, :])

    def floors(self) -> list[np.ndarray]:
        """Node indices grouped by floor (a single group for non-tower grids)."""
        if self.kind != TOWER:
            return [np.arange(self.n)]
        return [np.flatnonzero(self.levels == l) for l in np.unique(self.levels)]

    # -- node lookup --------------------------------------------------------
    @cached_property
    def _word_index(self) -> dict:
        if self.kind == TOWER:
            return {(int(l), tuple(int(s) for s in w)): k for k, (l, w) in enumerate(zip(self.levels, self.coords))}
        return {tuple(int(s) for s in w): k for k, w in enumerate(self.coords)}

    def locate(self, point) -> int:
        """Index of the node (cell) containing a symbolic point."""
        if self.kind == INTERVAL:
            raise TypeError("locate is for word grids; use evaluate on interval grids")
        L = self.coords.shape[1]
        try:
            if self.kind == TOWER:
                level, word = point
                key = (int(level), tuple(int(s) for s in word[:L]))
            else:
                key = tuple(int(s) for s in point[:L])
        except (TypeError, ValueError) as exc:
            raise DomainError(f"malformed point {point!r}") from exc
        if len(key[1] if self.kind == TOWER else key) < L or key not in self._word_index:
            raise DomainError(f"point {point!r} is not in any grid cell")
        return self._word_index[key]

    def locate_words(self, words: np.ndarray, levels: np.ndarray | None = None) -> np.ndarray:
        """Vectorized :meth:`locate`; returns -1 where no cell matches."""
        words = np.asarray(words)[..., : self.coords.shape[1]]
        out = np.full(words.shape[:-1], -1, dtype=np.int64)
        flat_w = words.reshape(-1, words.shape[-1])
        flat_l = None if levels is None else np.asarray(levels).reshape(-1)
        res = out.reshape(-1)
        for k in range(flat_w.shape[0]):
            key = tuple(int(s) for s in flat_w[k])
            if self.kind == TOWER:
                key = (int(flat_l[k]), key)
            res[k] = self._word_index.get(key, -1)
        return res.reshape(out.shape)

    # -- interval helpers ---------------------------------------------------
    @cached_property
    def bary_weights(self) -> np.ndarray:
        if self.parameters.get("chebyshev"):
            return lobatto_bary_weights(self.n)
        x = self.coords
        diff = x[:, None] - x[None, :]
        np.fill_diagonal(diff, 1.0)
        w = 1.0 / np.prod(diff, axis=1)
        return w / np.abs(w).max()

    def interpolation_matrix(self, t) -> np.ndarray:
        """Matrix mapping node values to interpolated values at points ``t``."""
        if self.kind != INTERVAL:
            raise TypeError("interpolation is defined on interval grids only")
        t = np.atleast_1d(np.asarray(t, dtype=float))
        lo, hi = self.domain
        if np.any(t < lo) or np.any(t > hi) or not np.all(np.isfinite(t)):
            raise DomainError(f"points outside [{lo}, {hi}]")
        if self.interpolation == "barycentric":
            return barycentric_matrix(self.coords, self.bary_weights, t)
        x = self.coords
        M = np.zeros((t.size, self.n))
        if self.n == 1:
            M[:, 0] = 1.0
            return M
        k = np.clip(np.searchsorted(x, t, side="right") - 1, 0, self.n - 2)
        lam = np.clip((t - x[k]) / (x[k + 1] - x[k]), 0.0, 1.0)
        rows = np.arange(t.size)
        M[rows, k] = 1.0 - lam
        M[rows, k + 1] += lam
        return M

    @cached_property
    def quadrature_weights(self) -> np.ndarray:
        """Weights integrating the interpolant against Lebesgue measure."""
        if self.kind != INTERVAL:
            raise TypeError("quadrature weights are defined on interval grids only")
        lo, hi = self.domain
        if self.parameters.get("chebyshev"):
            return clenshaw_curtis_weights(self.n) * (hi - lo)
        x = self.coords
        w = np.zeros(self.n)
        if self.n == 1:
            w[0] = hi - lo
            return w
        h = np.diff(x)
        w[:-1] += h / 2
        w[1:] += h / 2
        w[0] += x[0] - lo
        w[-1] += hi - x[-1]
        return w

    @cached_property
    def chebyshev_coefficient_matrix(self) -> np.ndarray:
        """Matrix mapping node values to Chebyshev coefficients on the domain."""
        lo, hi = self.domain
        t = 2 * (self.coords - lo) / (hi - lo) - 1
        V = C.chebvander(t, self.n - 1)
        return np.linalg.solve(V, np.eye(self.n))

    def taylor_rows(self, kmax: int) -> np.ndarray:
        """Rows T[k] with T[k] @ values = k-th Taylor coefficient of the interpolant at the left end."""
        lo, hi = self.domain
        coef = self.chebyshev_coefficient_matrix
        rows = np.empty((kmax + 1, self.n))
        c = coef
        scale = 2.0 / (hi - lo)
        fact = 1.0
        for k in range(kmax + 1):
            if k:
                c = C.chebder(c, axis=0)
                fact *= k
            rows[k] = C.chebval(-1.0, c) * scale**k / fact if c.shape[0] else 0.0
        return rows

    # -- serialization ------------------------------------------------------
    def to_dict(self) -> dict:
        if self.kind == TOWER:
            nodes = [{"level": int(l), "word": [int(s) for s in w]} for l, w in zip(self.levels, self.coords)]
        elif self.kind == CYLINDER:
            nodes = [[int(s) for s in w] for w in self.coords]
        else:
            nodes = [float(x) for x in self.coords]
        return {"kind": self.kind, "nodes": nodes, "parameters": _jsonable(self.parameters)}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, doc: Mapping) -> "Grid":
        kind = doc["kind"]
        params = dict(doc.get("parameters", {}))
        if "domain" in params:
            params["domain"] = tuple(params["domain"])
        if kind == TOWER:
            levels = [n["level"] for n in doc["nodes"]]
            words = [n["word"] for n in doc["nodes"]]
            return cls(kind, np.array(words, dtype=np.int64), np.array(levels), params)
        if kind == CYLINDER:
            return cls(kind, np.array(doc["nodes"], dtype=np.int64), None, params)
        return cls(kind, np.array(doc["nodes"], dtype=float), None, params)

    @classmethod
    def from_json(cls, text: str) -> "Grid":
        return cls.from_dict(json.loads(text))


def _jsonable(obj):
    if isinstance(obj, Mapping):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def chebyshev_grid(n: int, alpha: float = 1.0, xi: float = 1.5) -> Grid:
    """Chebyshev-Lobatto collocation grid on [0, 1] with barycentric interpolation."""
    return Grid(
        INTERVAL,
        lobatto_nodes(n),
        parameters={"domain": (0.0, 1.0), "interpolation": "barycentric", "chebyshev": True, "alpha": alpha, "xi": xi},
    )


def interval_grid(nodes: Sequence[float], interpolation: str = "linear", domain=(0.0, 1.0), alpha: float = 1.0, xi: float = 1.5) -> Grid:
    if interpolation not in ("linear", "barycentric"):
        raise ValueError(f"unknown interpolation {interpolation!r}")
    return Grid(
        INTERVAL,
        np.asarray(nodes, dtype=float),
        parameters={"domain": tuple(domain), "interpolation": interpolation, "alpha": alpha, "xi": xi},
    )


def cylinder_grid(n_symbols: int, depth: int, base: float = 2.0) -> Grid:
    """All words of length ``depth`` over ``n_symbols`` symbols, in lexicographic order."""
    if n_symbols < 1 or depth < 1:
        raise ValueError("need at least one symbol and depth >= 1")
    words = np.array(list(itertools.product(range(n_symbols), repeat=depth)), dtype=np.int64)
    return Grid(CYLINDER, words, parameters={"n_symbols": n_symbols, "depth": depth, "base": base, "alpha": 1.0, "xi": 2.0})


def tower_grid(return_times: Sequence[int], depth: int, beta: float) -> Grid:
    """Cells (level, word) of a truncated tower.

    Words have length ``depth + 1``; the first symbol is the base atom that
    owns the column and the rest are the atoms visited after successive
    returns.  Level ``l`` exists over atom ``j`` iff ``l < R_j``.
    """
    R = [int(r) for r in return_times]
    J = len(R)
    levels, words = [], []
    tails = list(itertools.product(range(J), repeat=depth))
    for l in range(max(R)):
        for j in range(J):
            if R[j] > l:
                for t in tails:
                    levels.append(l)
                    words.append((j,) + t)
    return Grid(
        TOWER,
        np.array(words, dtype=np.int64),
        np.array(levels),
        parameters={"beta": beta, "R_max": max(R), "K_depth": depth, "return_times": R},
    )


@dataclass(frozen=True, eq=False)
class DiscreteFunction:
    """Node values of a (possibly complex) function on a grid.

    ``tail`` accumulates certified bounds on truncation errors committed
    while producing the values.
    """

    grid: Grid
    values: np.ndarray
    tail: float = 0.0

    def __post_init__(self):
        v = np.array(self.values)
        if v.dtype.kind not in "fc":
            v = v.astype(float)
        if v.shape != (self.grid.n,):
            raise ValueError(f"expected {self.grid.n} values, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("non-finite values are not allowed")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def constant(cls, grid: Grid, c: complex = 1.0) -> "DiscreteFunction":
        return cls(grid, np.full(grid.n, c))

    @classmethod
    def from_callable(cls, grid: Grid, fn) -> "DiscreteFunction":
        """Sample ``fn`` at interval nodes (vectorized) or at each word/cell."""
        if grid.kind == INTERVAL:
            return cls(grid, np.asarray(fn(grid.coords)))
        if grid.kind == TOWER:
            return cls(grid, np.array([fn((int(l), tuple(w))) for l, w in zip(grid.levels, grid.coords)]))
        return cls(grid, np.array([fn(tuple(w)) for w in grid.coords]))

    def with_values(self, values, tail: float | None = None) -> "DiscreteFunction":
        return DiscreteFunction(self.grid, values, self.tail if tail is None else tail)

    @property
    def is_real(self) -> bool:
        return self.values.dtype.kind != "c" or not np.any(self.values.imag)

    @property
    def real(self) -> "DiscreteFunction":
        return self.with_values(self.values.real)

    @property
    def imag(self) -> "DiscreteFunction":
        return self.with_values(self.values.imag if self.values.dtype.kind == "c" else np.zeros(self.grid.n))

    def sup_norm(self) -> float:
        return float(np.max(np.abs(self.values))) if self.grid.n else 0.0

    def _check(self, other: "DiscreteFunction"):
        if not self.grid.compatible(other.grid):
            raise GridMismatchError("functions live on different grids")

    def __add__(self, other):
        if isinstance(other, DiscreteFunction):
            self._check(other)
            return DiscreteFunction(self.grid, self.values + other.values, self.tail + other.tail)
        return self.with_values(self.values + other)

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, DiscreteFunction):
            self._check(other)
            return DiscreteFunction(self.grid, self.values - other.values, self.tail + other.tail)
        return self.with_values(self.values - other)

    def __neg__(self):
        return self.with_values(-self.values)

    def __mul__(self, other):
        if isinstance(other, DiscreteFunction):
            self._check(other)
            return DiscreteFunction(self.grid, self.values * other.values)
        return DiscreteFunction(self.grid, self.values * other, self.tail * abs(other))

    __rmul__ = __mul__

    def __truediv__(self, c):
        return self * (1.0 / c)

    def evaluate(self, x):
        return evaluate(self, x)


def evaluate(f: DiscreteFunction, x):
    """Value of ``f`` at a point: exact at nodes, interpolated in between.

    Interval grids accept a float or an array of floats; cylinder grids a
    symbol sequence at least as long as the cylinder depth; tower grids a
    ``(level, word)`` pair.
    """
    g = f.grid
    if g.kind == INTERVAL:
        scalar = np.ndim(x) == 0
        M = g.interpolation_matrix(np.atleast_1d(x))
        out = M @ f.values
        return out[0] if scalar else out
    return f.values[g.locate(x)]


@dataclass(frozen=True)
class NormReport:
    sup_norm: float
    seminorm: float
    total: float

    def to_dict(self) -> dict:
        return {"sup_norm": self.sup_norm, "seminorm": self.seminorm, "total": self.total}


def _pair_sup(f: DiscreteFunction, alpha: float, admissible, by_floor: bool = False) -> float:
    """max |f(x)-f(y)|/d(x,y)**alpha over node pairs accepted by ``admissible(d)``."""
    g = f.grid
    v = f.values
    best = 0.0
    for groups in g.floors() if by_floor else [np.arange(g.n)]:
        for start in range(0, groups.size, _BLOCK):
            rows = groups[start : start + _BLOCK]
            d = g.distance(rows[:, None], groups[None, :])
            ok = admissible(d)
            if not np.any(ok):
                continue
            diff = np.abs(v[rows][:, None] - v[groups][None, :])
            q = np.where(ok, diff / np.where(ok, d, 1.0) ** alpha, 0.0)
            best = max(best, float(q.max()))
    return best


def norm_alpha(f: DiscreteFunction, alpha: float, xi: float) -> NormReport:
    """Holder norm ``|f|_inf + v_{alpha,xi}(f)`` over node pairs with ``0 < d < xi``."""
    if not 0 < alpha <= 1:
        raise ValueError("alpha must lie in (0, 1]")
    if xi <= 0:
        raise ValueError("xi must be positive")
    sup = f.sup_norm()
    semi = _pair_sup(f, alpha, lambda d: (d > 0) & (d < xi))
    return NormReport(sup, semi, sup + semi)


def lipschitz_tower(f: DiscreteFunction) -> float:
    """Same-floor Lipschitz constant L(f) with respect to ``beta**s``."""
    if f.grid.kind != TOWER:
        raise TypeError("tower seminorm requires a tower grid")
    return _pair_sup(f, 1.0, lambda d: d > 0, by_floor=True)


def norm_tower(f: DiscreteFunction) -> NormReport:
    """Tower norm ``max(|f|_inf, L(f))`` with L over same-floor pairs only."""
    semi = lipschitz_tower(f)
    sup = f.sup_norm()
    return NormReport(sup, semi, max(sup, semi))
