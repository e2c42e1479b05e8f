"""Transfer operators ``L0``, the tower-weighted ``L``, and their twists ``L_z``.

Every stage is assembled into a matrix acting on node values: dense
collocation matrices on interval grids, sparse cell maps on shift and tower
grids.  Interval stages with countably many branches are truncated at ``N``;
when the branch weights are pure powers ``(x + k)**-s`` the omitted sum is
added back through Taylor coefficients of the interpolant at 0 and Hurwitz
zeta values, ``sum_{k>N} (x+k)^-s g(1/(x+k)) = sum_m c_m zeta(s+m, x+N+1)``.

Results carry a ``tail`` entry: a running bound on truncation error in sup
norm, propagated through later applications by the operator's row-sum norm.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.special import bernoulli

from .errors import ConfigError, GridMismatchError, TruncationError
from .function_space import INTERVAL, DiscreteFunction, NormReport, barycentric_combination, norm_alpha
from .systems import IntervalStage, SystemStage, TowerStage, stage_at, trajectory

_B2K = [float(b) for b in bernoulli(14)[2::2]]  # B_2, B_4, ..., B_14
_EM_SHIFT = 30.0


def hurwitz_zeta(s: complex, q) -> np.ndarray:
    """Hurwitz zeta ``sum_{m>=0} (q+m)^-s`` for complex ``s`` (Re s > 1) and real ``q > 0``.

    Shifts ``q`` above 30 by direct summation, then applies Euler-Maclaurin
    with Bernoulli terms through ``B_14``.
    """
    q = np.asarray(q, dtype=float)
    s = complex(s)
    real = s.imag == 0.0
    dtype = float if real else complex
    sv = s.real if real else s
    res = np.zeros(q.shape, dtype=dtype)
    qq = q.copy()
    while True:
        low = qq < _EM_SHIFT
        if not np.any(low):
            break
        res[low] += qq[low] ** (-sv)
        qq[low] += 1.0
    res += qq ** (1 - sv) / (sv - 1) + 0.5 * qq ** (-sv)
    fac = sv
    p = qq ** (-sv - 1)
    fact = 1.0
    for k, B in enumerate(_B2K, start=1):
        fact *= (2 * k - 1) * (2 * k) if k > 1 else 2
        res += B / fact * fac * p
        fac = fac * (sv + 2 * k - 1) * (sv + 2 * k)
        p = p / qq**2
    return res


# ---------------------------------------------------------------------------
# potentials


@dataclass(frozen=True)
class PointPotential:
    """Potential evaluated at branch preimages rather than at nodes.

    ``log_coef = c`` declares ``u(y) = c ln y``; on a stage whose weights
    are ``(x + k)**-s`` the twisted weights stay pure powers, which keeps the
    tail correction exact.  ``sup`` and ``lipschitz`` are optional
    a-priori bounds used in truncation and Lasota-Yorke reports.
    """

    fn: Callable[[np.ndarray], np.ndarray]
    log_coef: float | None = None
    sup: float | None = None
    lipschitz: float | None = None
    name: str = ""

    def __call__(self, y):
        return self.fn(np.asarray(y, dtype=float))


def log_potential(coef: float = -2.0) -> PointPotential:
    """``u(y) = coef * ln y``; ``coef = -2`` gives the Lyapunov observable of the Gauss map."""
    return PointPotential(lambda y: coef * np.log(y), log_coef=coef, name=f"{coef}*ln(y)")


def _potential_sup(u) -> float:
    if u is None:
        return 0.0
    if isinstance(u, DiscreteFunction):
        return u.sup_norm()
    if isinstance(u, PointPotential):
        return math.inf if u.sup is None else float(u.sup)
    return abs(float(u))


def evaluate_potential(u, points) -> np.ndarray:
    """Vectorized potential values at interval points, or at symbolic points (iterable)."""
    if u is None:
        return np.zeros(len(points))
    if isinstance(u, DiscreteFunction):
        if u.grid.kind == INTERVAL:
            return np.real_if_close(u.grid.interpolation_matrix(np.asarray(points, dtype=float)) @ u.values)
        return np.array([u.values[u.grid.locate(p)] for p in points])
    if isinstance(u, PointPotential):
        return np.asarray(u(np.asarray(points, dtype=float)))
    return np.full(len(points), float(u))


# ---------------------------------------------------------------------------
# operator stages


class TransferStage:
    """A system stage turned into an operator on its grid.

    ``mode`` is ``"plain"`` for ``L0`` or ``"weighted"`` for the tower
    operator ``L f = L0(f v) / v``.
    """

    def __init__(self, stage: SystemStage, mode: str = "plain", N: int | None = None, tail_budget: float = math.inf, tail_correction: bool = True, taylor_terms: int = 6):
        if mode not in ("plain", "weighted"):
            raise ConfigError(f"unknown operator mode {mode!r}")
        if mode == "weighted" and not isinstance(stage, TowerStage):
            raise ConfigError("the weighted operator needs a tower stage with level weights")
        self.stage = stage
        self.mode = mode
        self.N = N if N is not None else getattr(stage, "default_N", None)
        self.tail_budget = tail_budget
        self.tail_correction = tail_correction
        self.taylor_terms = taylor_terms
        self._cache: dict = {}
        self._interp_cache = None

    @property
    def grid(self):
        return self.stage.grid

    def __repr__(self) -> str:
        return f"TransferStage({self.stage!r}, mode={self.mode!r}, N={self.N})"

    # -- assembly ----------------------------------------------------------
    def operator(self, z: complex = 0.0, u=None):
        """``(M, tail)``: matrix of ``f -> L(f e^{zu})`` and the per-unit-sup-norm tail bound."""
        key = (complex(z), id(u))
        hit = self._cache.get(key)
        if hit is not None and hit[2] is u:
            return hit[0], hit[1]
        if isinstance(u, DiscreteFunction) and not u.grid.compatible(self.grid):
            raise GridMismatchError("potential lives on another grid")
        if isinstance(self.stage, IntervalStage):
            M, tail = self._interval_operator(complex(z), u)
        else:
            M, tail = self._cell_operator(complex(z), u)
        if len(self._cache) > 64:
            self._cache.clear()
        self._cache[key] = (M, tail, u)
        return M, tail

    def _cell_operator(self, z: complex, u):
        rows, cols, lw = self.stage.node_preimages()
        n = self.grid.n
        if isinstance(u, PointPotential):
            raise ConfigError("cell grids take node-valued potentials")
        logw = lw.astype(complex) if z.imag else lw.astype(float)
        if u is not None and z != 0:
            uv = u.values if isinstance(u, DiscreteFunction) else np.full(n, float(u))
            logw = logw + (z if z.imag else z.real) * np.real(uv)[cols]
        w = np.exp(logw)
        if self.mode == "weighted":
            v = self.stage.v
            w = w * v[cols] / v[rows]
        M = sp.csr_matrix((w, (rows, cols)), shape=(n, n))
        return M, self.stage.tail_bound(self.N) * math.exp(abs(z.real) * _potential_sup(u))

    def _interpolation_tensor(self, Y: np.ndarray) -> np.ndarray | None:
        g = self.grid
        n, B = Y.shape
        if n * B * g.n > 2.5e7:
            return None
        if self._interp_cache is None:
            self._interp_cache = np.stack([g.interpolation_matrix(Y[i]) for i in range(n)])
        return self._interp_cache

    def _interval_operator(self, z: complex, u):
        st: IntervalStage = self.stage
        g = self.grid
        x = g.coords
        ks, Y, LW = st.branch_table(x, self.N)
        complex_z = z.imag != 0.0
        zz = z if complex_z else z.real
        point_u = isinstance(u, PointPotential)
        logw = LW + zz * u(Y) if (point_u and z != 0) else LW
        W = np.exp(logw)
        T = self._interpolation_tensor(Y)
        if T is not None:
            M = np.einsum("ib,ibn->in", W, T)
        else:
            M = np.empty((g.n, g.n), dtype=W.dtype)
            for i in range(g.n):
                if g.interpolation == "barycentric":
                    M[i] = barycentric_combination(g.coords, g.bary_weights, Y[i], W[i])
                else:
                    M[i] = W[i] @ g.interpolation_matrix(Y[i])
        tail_unit = st.tail_bound(self.N)
        if point_u and z != 0:
            if u.log_coef is not None and st.weight_power is not None:
                s_re = st.weight_power + u.log_coef * z.real
                Nt = int(ks[-1])
                tail_unit = float(hurwitz_zeta(s_re, 1.0 + Nt)) if s_re > 1 else math.inf
            else:
                tail_unit *= math.exp(abs(z.real) * _potential_sup(u))
        elif u is not None and z != 0:
            tail_unit *= math.exp(abs(z.real) * _potential_sup(u))
        correctable = (
            self.tail_correction
            and st.n_branches is None
            and st.weight_power is not None
            and g.parameters.get("chebyshev", False)
            and (not point_u or z == 0 or u.log_coef is not None)
        )
        if correctable:
            s = st.weight_power + (u.log_coef * zz if (point_u and z != 0) else 0.0)
            Trows = g.taylor_rows(self.taylor_terms)
            q = x + float(ks[-1]) + 1.0
            for k in range(self.taylor_terms + 1):
                M = M + np.multiply.outer(hurwitz_zeta(s + k, q), Trows[k])
            # size of the first omitted Taylor term, per unit of the coefficient rows
            tail_unit = float(np.abs(hurwitz_zeta(np.real(s) + self.taylor_terms + 1, 1.0 + float(ks[-1])))) * float(np.abs(Trows[-1]).sum())
        if isinstance(u, DiscreteFunction) and z != 0:
            M = M * np.exp(zz * np.real(u.values))[None, :]
        return M, tail_unit

    # -- application -------------------------------------------------------
    def apply(self, f: DiscreteFunction, z: complex = 0.0, u=None) -> DiscreteFunction:
        if not f.grid.compatible(self.grid):
            raise GridMismatchError("function is not on this operator's grid")
        M, tail_unit = self.operator(z, u)
        vals = M @ f.values
        fresh = tail_unit * f.sup_norm()
        if fresh > self.tail_budget:
            raise TruncationError(f"truncation tail {fresh:.3e} exceeds budget {self.tail_budget:.3e}")
        norm = _row_sum_norm(M)
        return DiscreteFunction(self.grid, np.asarray(vals), tail=norm * f.tail + fresh)


def _row_sum_norm(M) -> float:
    if sp.issparse(M):
        return float(np.max(np.asarray(abs(M).sum(axis=1)))) if M.shape[0] else 0.0
    return float(np.max(np.abs(M).sum(axis=1)))


def apply_L0(op: TransferStage, f: DiscreteFunction) -> DiscreteFunction:
    """Truncated branch sum (``L0``, or ``L`` for weighted towers); ``result.tail`` carries the bound."""
    return op.apply(f)


def apply_Lz(op: TransferStage, u, z: complex, f: DiscreteFunction) -> DiscreteFunction:
    """Twisted operator ``f -> L(f e^{zu})``."""
    if isinstance(u, DiscreteFunction) and not u.is_real:
        raise ValueError("potentials must be real-valued")
    return op.apply(f, z, u)


@dataclass
class TwistWindow:
    """Consecutive operator stages ``j, ..., j+n-1`` with potentials and a twist ``z``."""

    stages: list
    potentials: list = field(default_factory=list)
    z: complex = 0.0

    def __post_init__(self):
        self.stages = list(self.stages)
        if not self.potentials:
            self.potentials = [None] * len(self.stages)
        self.potentials = list(self.potentials)
        if len(self.potentials) != len(self.stages):
            raise ConfigError("one potential per stage is required")
        for a, b in zip(self.stages, self.stages[1:]):
            if not a.grid.compatible(b.grid):
                raise GridMismatchError("consecutive stages must share grids")
        B = max((_potential_sup(u) for u in self.potentials if not isinstance(u, PointPotential)), default=0.0)
        if not math.isfinite(B):
            raise ConfigError("node potentials must be bounded")

    def __len__(self) -> int:
        return len(self.stages)

    def with_z(self, z: complex) -> "TwistWindow":
        return TwistWindow(self.stages, self.potentials, z)

    def operator(self, k: int):
        return self.stages[k].operator(self.z, self.potentials[k])

    @property
    def grid(self):
        return self.stages[0].grid


def compose_window(w: TwistWindow, f: DiscreteFunction) -> DiscreteFunction:
    """``L_z^{(j+n-1)} o ... o L_z^{(j)} f``; identity for an empty window."""
    g = f
    for op, u in zip(w.stages, w.potentials):
        g = op.apply(g, w.z, u)
    return g


def birkhoff_sum(stages: Sequence[SystemStage], us: Sequence, j: int, n: int, x) -> float:
    """``sum_{k<n} u_{j+k}(T_j^k x)`` along the forward orbit (lists extend periodically)."""
    if n == 0:
        return 0.0
    orbit = trajectory(stages, j, x, n - 1).points
    total = 0.0
    for k, pt in enumerate(orbit):
        u = us[(j + k) % len(us)]
        if isinstance(u, DiscreteFunction):
            total += float(np.real(u.evaluate(pt)))
        elif callable(u):
            total += float(u(pt))
        else:
            total += float(u)
    return total


@dataclass
class LasotaYorkeReport:
    lhs: float
    rhs: float
    holds: bool
    details: dict = field(default_factory=dict)


def _window_sup_birkhoff(w: TwistWindow, samples: int = 2001) -> float:
    """max |S_{j,n} u| over orbits started at the nodes and on a uniform sample grid."""
    st0 = w.stages[0].stage
    x = np.unique(np.concatenate([st0.grid.coords, np.linspace(0.0, 1.0, samples)]))
    x = x[(x > 0) & (x < 1)]
    S = np.zeros_like(x)
    for op, u in zip(w.stages, w.potentials):
        if u is not None:
            S = S + np.real(evaluate_potential(u, x))
        x = op.stage.forward_array(x)
        good = np.isfinite(x)
        x, S = x[good], S[good]
    return float(np.max(np.abs(S))) if S.size else 0.0


def potential_regularity(u, stage: SystemStage) -> float:
    """Bound on ``sum_m |u(T^m y) - u(T^m y')|`` per unit ``d(x, x')`` along paired orbits."""
    if u is None or not isinstance(u, (DiscreteFunction, PointPotential)):
        return 0.0
    if isinstance(u, PointPotential):
        if u.lipschitz is None:
            raise ConfigError("point potentials need a declared Lipschitz constant here")
        lip = u.lipschitz
    else:
        t = np.linspace(0.0, 1.0, 4001)
        vals = np.real(evaluate_potential(u, t))
        lip = float(np.max(np.abs(np.diff(vals))) / (t[1] - t[0]))
    return lip * stage.n0 * stage.gamma / (stage.gamma - 1.0)


def lasota_yorke_report(w: TwistWindow, f: DiscreteFunction, tol: float = 1e-9, Q: float | None = None) -> LasotaYorkeReport:
    """Evaluate both sides of the sequential Lasota-Yorke inequality on the grid.

    lhs = |L_z^{j,n} f|_alpha; rhs = |L_0^{j,n} 1|_inf exp(|Re z| |S u|_inf)
    (v(f) gamma^{-alpha floor(n/n0)} + (1 + 2Q)(1 + |z|_1) |f|_inf).
    """
    stages = [op.stage for op in w.stages]
    if not stages:
        raise ConfigError("empty window")
    for st in stages:
        if not isinstance(st, IntervalStage):
            raise ConfigError("Lasota-Yorke metadata is declared for covering (interval) stages only")
    first = stages[0]
    alpha, xi, gamma, n0 = first.alpha, first.xi, first.gamma, first.n0
    n = len(stages)
    if Q is None:
        Q = max([st.Q for st in stages] + [potential_regularity(u, st) for u, st in zip(w.potentials, stages)])
    z = complex(w.z)
    image = compose_window(w, f)
    lhs = norm_alpha(image, alpha, xi).total
    one = DiscreteFunction.constant(f.grid, 1.0)
    L0one = compose_window(w.with_z(0.0), one).sup_norm()
    Su = _window_sup_birkhoff(w)
    nf: NormReport = norm_alpha(f, alpha, xi)
    contraction = gamma ** (-alpha * math.floor(n / n0))
    z1 = abs(z.real) + abs(z.imag)
    rhs = L0one * math.exp(abs(z.real) * Su) * (nf.seminorm * contraction + (1 + 2 * Q) * (1 + z1) * nf.sup_norm)
    return LasotaYorkeReport(
        lhs,
        rhs,
        bool(lhs <= rhs + tol),
        {"contraction": contraction, "Q": Q, "sup_birkhoff": Su, "L0_one": L0one, "n": n, "z": [z.real, z.imag]},
    )


def tail_ledger(results: Sequence[DiscreteFunction]) -> dict:
    """Summary of accumulated truncation bounds for report emission."""
    tails = [float(r.tail) for r in results]
    return {"count": len(tails), "max": max(tails, default=0.0), "total": float(sum(tails))}
