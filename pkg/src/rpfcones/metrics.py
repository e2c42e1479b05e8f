"""Real Hilbert metric and complex projective metric for cones cut out by
finitely many linear functionals.

A family ``S`` defines the real cone ``{f : s(f) >= 0 for all s in S}`` and
its canonical complexification ``{f : Re(conj(mu(f)) nu(f)) >= 0}``.  The
family is stored as a (possibly sparse) matrix plus an optional rank-one
term ``mass_coef[i] * (mass @ f)``; tower cones have hundreds of thousands of
functionals sharing the same integral term, and this keeps them cheap.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp

from .errors import (
    ApertureViolationError,
    ConePreconditionError,
    DegenerateInputError,
    GridMismatchError,
)
from .function_space import DiscreteFunction, Grid

TOL_CONE = 1e-12
_PAIR_BLOCK = 1 << 20  # functional pairs per vectorized block


@dataclass(frozen=True, eq=False)
class LinearFunctional:
    coefficients: np.ndarray
    grid: Grid
    label: str = ""

    def __post_init__(self):
        c = np.array(self.coefficients)
        if c.shape != (self.grid.n,):
            raise ValueError("coefficient length must match the grid")
        c.setflags(write=False)
        object.__setattr__(self, "coefficients", c)

    @property
    def is_real(self) -> bool:
        return self.coefficients.dtype.kind != "c" or not np.any(self.coefficients.imag)

    def __call__(self, f: DiscreteFunction):
        if not self.grid.compatible(f.grid):
            raise GridMismatchError("functional and function live on different grids")
        return self.coefficients @ f.values

    def dual_norm(self) -> float:
        """Operator norm with respect to the sup norm on node values."""
        return float(np.abs(self.coefficients).sum())


class FunctionalFamily:
    """Finite family of real functionals ``s_i(f) = A[i] @ f + mass_coef[i] * (mass @ f)``."""

    def __init__(
        self,
        grid: Grid,
        matrix,
        labels: Sequence[str] | Callable[[int], str] | None = None,
        mass: np.ndarray | None = None,
        mass_coef: np.ndarray | None = None,
        kinds: np.ndarray | None = None,
    ):
        A = matrix if sp.issparse(matrix) else np.atleast_2d(np.asarray(matrix, dtype=float))
        if A.shape[1] != grid.n:
            raise ValueError("functional width must match the grid")
        if A.shape[0] == 0:
            raise ValueError("a functional family must be nonempty")
        self.grid = grid
        self.matrix = sp.csr_matrix(A) if sp.issparse(A) else A
        self.mass = None if mass is None else np.asarray(mass, dtype=float)
        self.mass_coef = None if mass_coef is None else np.asarray(mass_coef, dtype=float)
        if (self.mass is None) != (self.mass_coef is None):
            raise ValueError("mass and mass_coef go together")
        if self.mass_coef is not None and self.mass_coef.shape != (A.shape[0],):
            raise ValueError("one mass coefficient per functional")
        self._labels = labels
        self.kinds = kinds

    @classmethod
    def from_functionals(cls, functionals: Sequence[LinearFunctional]) -> "FunctionalFamily":
        if not functionals:
            raise ValueError("a functional family must be nonempty")
        grid = functionals[0].grid
        for mu in functionals:
            if not mu.grid.compatible(grid):
                raise GridMismatchError("functionals must share a grid")
            if not mu.is_real:
                raise ValueError("cone functionals must be real")
        A = np.array([mu.coefficients.real for mu in functionals])
        return cls(grid, A, [mu.label for mu in functionals])

    @classmethod
    def point_evaluations(cls, grid: Grid) -> "FunctionalFamily":
        return cls(grid, sp.identity(grid.n, format="csr"), lambda i: f"point-eval[{i}]")

    def __len__(self) -> int:
        return self.matrix.shape[0]

    def label(self, i: int) -> str:
        if self._labels is None:
            return f"s[{i}]"
        if callable(self._labels):
            return self._labels(i)
        return self._labels[i]

    def evaluate(self, values) -> np.ndarray:
        """Functional values; ``values`` is a node vector or an (n, m) batch."""
        if isinstance(values, DiscreteFunction):
            if not values.grid.compatible(self.grid):
                raise GridMismatchError("function and family live on different grids")
            values = values.values
        out = self.matrix @ values
        if self.mass is not None:
            m = self.mass @ values
            out = out + (np.multiply.outer(self.mass_coef, m) if np.ndim(m) else self.mass_coef * m)
        return np.asarray(out)

    def functional(self, i: int) -> LinearFunctional:
        row = self.matrix[i].toarray().ravel() if sp.issparse(self.matrix) else np.array(self.matrix[i])
        if self.mass is not None:
            row = row + self.mass_coef[i] * self.mass
        return LinearFunctional(row, self.grid, self.label(i))

    def __iter__(self):
        return (self.functional(i) for i in range(len(self)))


def _values(S: FunctionalFamily, f) -> np.ndarray:
    return S.evaluate(f)


def _require_real(f: DiscreteFunction):
    if not f.is_real:
        raise TypeError("real cone operations need real-valued input; use complex_cone_contains")


def _real_contains(s: np.ndarray) -> bool:
    scale = float(np.max(np.abs(s))) if s.size else 0.0
    return bool(np.all(s >= -TOL_CONE * scale))


def real_cone_contains(S: FunctionalFamily, f: DiscreteFunction) -> bool:
    """True iff every functional is nonnegative on ``f`` up to relative slack ``TOL_CONE``."""
    _require_real(f)
    return _real_contains(_values(S, f.real))


def _gauge(sf: np.ndarray, sg: np.ndarray) -> float:
    tf = TOL_CONE * float(np.max(np.abs(sf)))
    tg = TOL_CONE * float(np.max(np.abs(sg))) if sg.size else 0.0
    pos = sf > tf
    if np.any(~pos & (sg > tg)):
        return math.inf
    if not np.any(pos):
        return 0.0
    return max(0.0, float(np.max(sg[pos] / sf[pos])))


def beta_gauge(S: FunctionalFamily, f: DiscreteFunction, g: DiscreteFunction) -> float:
    """``inf{t > 0 : t f - g in C}``, computed as a finite sup of ratios ``s(g)/s(f)``."""
    _require_real(f)
    _require_real(g)
    sf = _values(S, f.real)
    sg = _values(S, g.real)
    if not np.any(f.values):
        raise DegenerateInputError("beta gauge needs f != 0")
    if not _real_contains(sf) or not _real_contains(sg):
        raise ConePreconditionError("beta gauge needs both arguments in the cone")
    return _gauge(sf, sg)


def _hilbert_from_values(sf: np.ndarray, sg: np.ndarray) -> float:
    a = _gauge(sf, sg)
    b = _gauge(sg, sf)
    if math.isinf(a) or math.isinf(b):
        return math.inf
    if a == 0.0 or b == 0.0:
        return math.inf
    return max(0.0, math.log(a) + math.log(b))


def hilbert_distance(S: FunctionalFamily, f: DiscreteFunction, g: DiscreteFunction) -> float:
    """Hilbert projective metric ``ln(beta(f,g) beta(g,f))``; ``inf`` across boundary rays."""
    _require_real(f)
    _require_real(g)
    if not np.any(f.values) or not np.any(g.values):
        raise DegenerateInputError("Hilbert distance needs nonzero arguments")
    sf = _values(S, f.real)
    sg = _values(S, g.real)
    if not _real_contains(sf) or not _real_contains(sg):
        raise ConePreconditionError("Hilbert distance needs both arguments in the cone")
    return _hilbert_from_values(sf, sg)


def hilbert_distance_matrix(S: FunctionalFamily, batch: np.ndarray) -> np.ndarray:
    """Pairwise Hilbert distances between the columns of ``batch`` (cone members)."""
    vals = S.evaluate(np.asarray(batch, dtype=float))
    m = vals.shape[1]
    out = np.zeros((m, m))
    for i in range(m):
        for j in range(i + 1, m):
            out[i, j] = out[j, i] = _hilbert_from_values(vals[:, i], vals[:, j])
    return out


def birkhoff_contraction_bound(D: float) -> float:
    """``tanh(D/4)`` with ``tanh(inf) = 1``."""
    if D < 0 or math.isnan(D):
        raise ValueError("diameter must be nonnegative")
    return 1.0 if math.isinf(D) else math.tanh(D / 4.0)


def _complex_contains(a: np.ndarray) -> bool:
    """Pair test ``Re(conj(a_i) a_j) >= -tol * max|a|^2`` for all i, j.

    A violating pair has arguments more than pi/2 apart, so after rotating
    the arguments into ``[0, spread]`` only pairs with one member below
    ``spread - pi/2`` and the other above ``pi/2`` need an explicit check.
    """
    mod = np.abs(a)
    M = float(mod.max()) if mod.size else 0.0
    if M == 0.0:
        return True
    slack = TOL_CONE * M * M
    b = a[mod > 0]
    ang = np.angle(b)
    order = np.sort(ang)
    gaps = np.diff(np.concatenate([order, order[:1] + 2 * np.pi]))
    k = int(np.argmax(gaps))
    rel = np.mod(ang - order[(k + 1) % order.size], 2 * np.pi)
    spread = 2 * np.pi - gaps[k]
    if spread <= np.pi / 2:
        return True
    low = b[rel < spread - np.pi / 2]
    high = b[rel > np.pi / 2]
    step = max(1, _PAIR_BLOCK // max(high.size, 1))
    for start in range(0, low.size, step):
        P = np.real(np.conj(low[start : start + step])[:, None] * high[None, :])
        if P.min() < -slack:
            return False
    return True


def complex_cone_contains(S: FunctionalFamily, f: DiscreteFunction) -> bool:
    """Membership in the canonical complexification of the real cone of ``S``."""
    return _complex_contains(_values(S, f))


@dataclass
class ExclusionBounds:
    """Inf and sup modulus of the exclusion set ``{z : z x - y not in C}``."""

    a: float
    b: float
    collinear: bool = False
    witnesses: list = field(default_factory=list)
    region_counts: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        def enc(v):
            return "inf" if isinstance(v, float) and math.isinf(v) else v

        return {
            "a": enc(self.a),
            "b": enc(self.b),
            "collinear": self.collinear,
            "region_counts": dict(self.region_counts),
            "witnesses": [{k: enc(v) for k, v in w.items()} for w in self.witnesses],
        }


def _collinear(x: np.ndarray, y: np.ndarray) -> bool:
    nx = float(np.vdot(x, x).real)
    ny = float(np.vdot(y, y).real)
    if nx == 0.0 or ny == 0.0:
        return True
    c = abs(np.vdot(x, y)) ** 2
    return nx * ny - c <= 1e-14 * nx * ny


def _pair_regions(A, B, Cv, Dv):
    """Closed-form failure regions of ``Re(conj(z A - B)(z Cv - Dv)) < 0``.

    Returns (kind, inf_modulus, sup_modulus, center, radius) arrays with
    kind 0 = empty, 1 = disc, 2 = disc complement, 3 = half-plane, 4 = plane.
    """
    alpha = np.real(np.conj(A) * Cv)
    W = A * np.conj(Dv) + Cv * np.conj(B)  # q(z) = alpha|z|^2 - Re(W z) + c0
    c0 = np.real(np.conj(B) * Dv)
    n = alpha.size
    kind = np.zeros(n, dtype=np.int8)
    lo = np.full(n, np.inf)
    hi = np.zeros(n)
    center = np.zeros(n, dtype=complex)
    radius = np.zeros(n)
    scale = np.abs(A) * np.abs(Cv)
    flat = np.abs(alpha) <= 1e-14 * np.maximum(scale, 1e-300)
    nz = ~flat
    z0 = np.zeros(n, dtype=complex)
    z0[nz] = np.conj(W[nz]) / (2 * alpha[nz])
    r2 = np.zeros(n)
    r2[nz] = np.abs(z0[nz]) ** 2 - c0[nz] / alpha[nz]
    # open disc
    disc = nz & (alpha > 0) & (r2 > 0)
    r = np.sqrt(np.where(disc, r2, 0.0))
    kind[disc] = 1
    lo[disc] = np.maximum(np.abs(z0[disc]) - r[disc], 0.0)
    hi[disc] = np.abs(z0[disc]) + r[disc]
    center[disc] = z0[disc]
    radius[disc] = r[disc]
    # complement of a closed disc (or the whole plane when r2 < 0)
    comp = nz & (alpha < 0)
    plane = comp & (r2 < 0)
    comp &= ~plane
    rc = np.sqrt(np.where(comp, r2, 0.0))
    kind[comp] = 2
    lo[comp] = np.maximum(rc[comp] - np.abs(z0[comp]), 0.0)
    hi[comp] = np.inf
    center[comp] = z0[comp]
    radius[comp] = rc[comp]
    # alpha = 0: half-plane Re(W z) > c0
    Wabs = np.abs(W)
    half = flat & (Wabs > 0)
    kind[half] = 3
    lo[half] = np.maximum(c0[half], 0.0) / Wabs[half]
    hi[half] = np.inf
    plane |= flat & (Wabs == 0) & (c0 < 0)
    kind[plane] = 4
    lo[plane] = 0.0
    hi[plane] = np.inf
    return kind, lo, hi, center, radius


_KIND_NAMES = {0: "empty", 1: "disc", 2: "disc-complement", 3: "half-plane", 4: "plane"}


def _exclusion_from_values(a: np.ndarray, b: np.ndarray, keep_witnesses: int = 0, labels=None):
    n = a.size
    best_lo, best_hi = np.inf, 0.0
    arg_lo = arg_hi = None
    counts = np.zeros(5, dtype=np.int64)
    witnesses = []
    rows_per_block = max(1, _PAIR_BLOCK // max(n, 1))
    for start in range(0, n, rows_per_block):
        i = np.arange(start, min(n, start + rows_per_block))
        I, J = np.nonzero(np.arange(n)[None, :] > i[:, None])
        I = i[I]
        if I.size == 0:
            continue
        kind, lo, hi, center, radius = _pair_regions(a[I], b[I], a[J], b[J])
        counts += np.bincount(kind, minlength=5)
        k_lo = int(np.argmin(lo))
        if lo[k_lo] < best_lo:
            best_lo = float(lo[k_lo])
            arg_lo = (int(I[k_lo]), int(J[k_lo]), int(kind[k_lo]), complex(center[k_lo]), float(radius[k_lo]))
        k_hi = int(np.argmax(hi))
        if hi[k_hi] > best_hi:
            best_hi = float(hi[k_hi])
            arg_hi = (int(I[k_hi]), int(J[k_hi]), int(kind[k_hi]), complex(center[k_hi]), float(radius[k_hi]))
        if len(witnesses) < keep_witnesses:
            for t in range(min(I.size, keep_witnesses - len(witnesses))):
                witnesses.append(_witness(labels, int(I[t]), int(J[t]), int(kind[t]), center[t], radius[t], lo[t], hi[t]))
    extremal = []
    for tag, arg, val in (("attains_a", arg_lo, best_lo), ("attains_b", arg_hi, best_hi)):
        if arg is not None:
            w = _witness(labels, arg[0], arg[1], arg[2], arg[3], arg[4], None, None)
            w["role"] = tag
            w["value"] = val
            extremal.append(w)
    region_counts = {_KIND_NAMES[k]: int(c) for k, c in enumerate(counts)}
    return best_lo, best_hi, extremal + witnesses, region_counts


def _witness(labels, i, j, kind, center, radius, lo, hi):
    w = {
        "pair": [labels(i) if labels else i, labels(j) if labels else j],
        "region": _KIND_NAMES[kind],
        "center": [float(np.real(center)), float(np.imag(center))],
        "radius": float(radius),
    }
    if lo is not None:
        w["inf_modulus"] = float(lo)
        w["sup_modulus"] = float(hi)
    return w


def _check_complex_member(vals: np.ndarray, what: str):
    if not np.any(vals):
        raise DegenerateInputError(f"{what} must be nonzero")
    if not _complex_contains(vals):
        raise ConePreconditionError(f"{what} is not in the complex cone")


def exclusion_set_bounds(S: FunctionalFamily, x: DiscreteFunction, y: DiscreteFunction, witnesses: int = 64) -> ExclusionBounds:
    """Bounds ``a <= |z| <= b`` of the exclusion set, from closed-form pair regions.

    The pair condition is symmetric in the two functionals, so only
    unordered pairs ``i < j`` are scanned; diagonal pairs never fail.
    """
    a = _values(S, x).astype(complex)
    b = _values(S, y).astype(complex)
    if not np.any(x.values) or not np.any(y.values):
        raise DegenerateInputError("exclusion bounds need nonzero arguments")
    _check_complex_member(a, "x")
    _check_complex_member(b, "y")
    if _collinear(x.values.astype(complex), y.values.astype(complex)):
        return ExclusionBounds(0.0, 0.0, collinear=True)
    lo, hi, wit, counts = _exclusion_from_values(a, b, witnesses, S.label)
    if math.isinf(lo):  # no failure region at all
        lo, hi = 0.0, 0.0
    return ExclusionBounds(lo, hi, False, wit, counts)


def _delta_from_bounds(lo: float, hi: float) -> float:
    if math.isinf(hi) or lo <= 0.0:
        return math.inf
    return max(0.0, math.log(hi / lo))


def delta_distance(S: FunctionalFamily, x: DiscreteFunction, y: DiscreteFunction) -> float:
    """Complex projective distance ``ln(b/a)``; 0 for collinear inputs."""
    eb = exclusion_set_bounds(S, x, y, witnesses=0)
    if eb.collinear:
        return 0.0
    return _delta_from_bounds(eb.a, eb.b)


def delta_from_values(a: np.ndarray, b: np.ndarray, x=None, y=None) -> float:
    """δ from precomputed functional values (no membership checks)."""
    if x is not None and _collinear(np.asarray(x, complex), np.asarray(y, complex)):
        return 0.0
    a, b = _distinct_rays(np.asarray(a, complex), np.asarray(b, complex))
    lo, hi, _, _ = _exclusion_from_values(a, b)
    if math.isinf(lo):
        return 0.0
    return _delta_from_bounds(lo, hi)


def _distinct_rays(a: np.ndarray, b: np.ndarray, digits: int = 13):
    """Drop functionals whose value pair is a positive multiple of another one.

    Pair regions are invariant under positive rescaling of either
    functional and a functional paired with itself never fails, so the
    exclusion bounds only depend on the distinct rays of ``(a_i, b_i)``.
    Small families are returned as is since deduplication costs more than it saves.
    """
    if a.size <= 16:
        return a, b
    scale = np.maximum(np.abs(a), np.abs(b))
    scale = np.where(scale > 0, scale, 1.0)
    key = np.round(np.stack([(a / scale).real, (a / scale).imag, (b / scale).real, (b / scale).imag], axis=1), digits)
    _, idx = np.unique(key, axis=0, return_index=True)
    idx = np.sort(idx)
    return a[idx], b[idx]


def aperture_constant(S: FunctionalFamily, mu: LinearFunctional, sample: Sequence[DiscreteFunction]) -> tuple[float, float]:
    """Smallest ``K`` with ``|f|_inf |mu| <= K mu(f)`` over the sample, and ``2 sqrt(2) K``."""
    norm_mu = mu.dual_norm()
    K = 0.0
    for f in sample:
        if not real_cone_contains(S, f):
            raise ConePreconditionError("aperture sample must lie in the real cone")
        val = float(np.real(mu(f)))
        nf = f.sup_norm()
        if nf == 0.0:
            continue
        if val <= 0.0:
            raise ApertureViolationError("mu vanishes on a nonzero cone element")
        K = max(K, nf * norm_mu / val)
    return K, 2.0 * math.sqrt(2.0) * K
