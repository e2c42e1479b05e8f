"""Sequential Ruelle-Perron-Frobenius triplets by projective power iteration.

For a window of twisted operators ``M_j`` the solver finds ``lambda_j``,
``h_j`` and ``nu_j`` with

    M_j h_j = lambda_j h_{j+1},    nu_{j+1} M_j = lambda_j nu_j,

plus a normalization: ``nu_j(1) = nu_j(h_j) = 1`` on covering maps, or
``nu_j(h) = nu_j(h_j) = 1`` on towers, where ``h`` is the untwisted
eigenfunction.  Windows are either periodic (the stage list repeats) or
truncated, in which case a burn-in at each end is discarded.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, ConvergenceError, DegeneracyError
from .function_space import INTERVAL, DiscreteFunction, Grid
from .metrics import LinearFunctional
from .systems import ShiftStage, TowerStage
from .transfer import TwistWindow


@dataclass
class SolverConfig:
    tol: float = 1e-14
    max_iters: int = 5000
    lambda_floor: float = 1e-10
    normalization: str | None = None  # "covering" | "tower"; inferred when None
    pilot_delta: float = 0.5
    warmup: int | None = None


def reference_weights(stage) -> np.ndarray:
    """Positive reference functional on a stage grid: Lebesgue, product or tower measure."""
    if isinstance(stage, TowerStage):
        return stage.m.copy()
    g: Grid = stage.grid
    if g.kind == INTERVAL:
        return g.quadrature_weights.copy()
    if isinstance(stage, ShiftStage):
        p = stage.weights / stage.weights.sum()
        return np.prod(p[g.coords], axis=1)
    return np.full(g.n, 1.0 / g.n)


@dataclass
class RPFTriplet:
    lambdas: np.ndarray
    h: list
    nu: list
    normalization: str
    z: complex
    boundary: str
    indices: list  # window positions of h and nu; truncated windows carry one extra trailing entry
    iterations: int = 0
    trace: list = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.lambdas)

    def lambda_product(self, j: int, n: int) -> complex:
        p = len(self.lambdas)
        return complex(np.prod([self.lambdas[(j + m) % p] for m in range(n)]))

    def to_dict(self) -> dict:
        def c(v):
            return [float(np.real(v)), float(np.imag(v))]

        return {
            "z": c(self.z),
            "boundary": self.boundary,
            "normalization": self.normalization,
            "indices": list(self.indices),
            "iterations": self.iterations,
            "lambda": [c(l) for l in self.lambdas],
            "h": [[c(v) for v in hj.values] for hj in self.h],
            "nu": [[c(v) for v in nj.coefficients] for nj in self.nu],
        }


def _normalization_mode(window: TwistWindow, config: SolverConfig) -> str:
    if config.normalization:
        if config.normalization not in ("covering", "tower"):
            raise ConfigError(f"unknown normalization {config.normalization!r}")
        return config.normalization
    return "tower" if all(isinstance(op.stage, TowerStage) for op in window.stages) else "covering"


def _mats(window: TwistWindow):
    return [window.operator(k)[0] for k in range(len(window))]


def _matvec(M, v):
    return np.asarray(M @ v)


def _vecmat(v, M):
    return np.asarray(M.T @ v)


def solve_rpf(window: TwistWindow, boundary: str = "periodic", config: SolverConfig | None = None, h_reference=None) -> RPFTriplet:
    """Dominant triplet of a twisted window.

    ``h_reference`` overrides the untwisted eigenfunction used by the tower
    normalization (default: the tower's own ``h``).
    """
    config = config or SolverConfig()
    if boundary not in ("periodic", "truncated"):
        raise ConfigError(f"unknown boundary mode {boundary!r}")
    if len(window) == 0:
        raise ConfigError("empty window")
    mode = _normalization_mode(window, config)
    mats = _mats(window)
    refs = [reference_weights(op.stage) for op in window.stages]
    if boundary == "periodic":
        hs, nus, iters, trace = _periodic(mats, refs, config)
        idx = list(range(len(mats)))
        lam_idx = idx
    else:
        hs, nus, idx, trace = _truncated(mats, refs, config)
        iters = len(mats)
        lam_idx = idx[:-1]
    grids = [window.stages[k % len(window)].grid for k in idx]
    if mode == "tower":
        if h_reference is None:
            href = [np.asarray(window.stages[k % len(window)].stage.h) for k in idx]
        else:
            href = [np.asarray(getattr(h_reference, "values", h_reference))] * len(idx)
    else:
        href = [np.ones(g.n) for g in grids]
    out_h, out_nu = [], []
    for pos, k in enumerate(idx):
        s = nus[pos] @ href[pos]
        if abs(s) < config.lambda_floor:
            raise DegeneracyError(f"normalizer nu_{k}(reference) vanishes")
        nu = nus[pos] / s
        s = nu @ hs[pos]
        if abs(s) < config.lambda_floor:
            raise DegeneracyError(f"nu_{k}(h_{k}) vanishes")
        out_h.append(hs[pos] / s)
        out_nu.append(nu)
    lams = []
    for pos, k in enumerate(lam_idx):
        nxt = (pos + 1) % len(idx)
        lam = complex(out_nu[nxt] @ _matvec(mats[k], out_h[pos]))
        if abs(lam) < config.lambda_floor:
            raise DegeneracyError(f"lambda_{k} = {lam} is below the floor")
        lams.append(lam)
    h_funcs = [DiscreteFunction(g, v) for g, v in zip(grids, out_h)]
    nu_funcs = [LinearFunctional(v, g, f"nu[{k}]") for k, g, v in zip(idx, grids, out_nu)]
    return RPFTriplet(np.array(lams, dtype=complex), h_funcs, nu_funcs, mode, complex(window.z), boundary, [int(k) for k in idx], iters, trace)


def _periodic(mats, refs, config: SolverConfig):
    p = len(mats)
    n0 = mats[0].shape[1]
    g = np.ones(n0, dtype=complex if any(np.iscomplexobj(M) for M in mats) else float)
    hs = [None] * p
    trace = []
    prev = None
    converged = False
    it = 0
    for it in range(1, config.max_iters + 1):
        for k in range(p):
            hs[k] = g
            g = _matvec(mats[k], g)
            c = refs[(k + 1) % p] @ g
            if abs(c) == 0 or not np.isfinite(c):
                raise DegeneracyError("forward iterate collapsed")
            g = g / c
        if prev is not None:
            err = float(np.max(np.abs(g - prev)) / max(np.max(np.abs(g)), 1e-300))
            trace.append(err)
            if err <= config.tol:
                converged = True
                break
        prev = g
    if not converged:
        raise ConvergenceError(f"forward pass did not converge in {config.max_iters} periods", trace)
    # one more sweep so every phase comes from the converged cycle
    for k in range(p):
        hs[k] = g
        g = _matvec(mats[k], g)
        g = g / (refs[(k + 1) % p] @ g)
    nus = [None] * p
    nu = refs[0].astype(g.dtype)
    prev = None
    converged = False
    for _ in range(config.max_iters):
        for k in range(p - 1, -1, -1):
            nu = _vecmat(nu, mats[k])
            c = nu @ np.ones(nu.size)
            if abs(c) == 0 or not np.isfinite(c):
                raise DegeneracyError("backward iterate collapsed")
            nu = nu / c
            nus[k] = nu
        if prev is not None:
            err = float(np.max(np.abs(nu - prev)) / max(np.max(np.abs(nu)), 1e-300))
            trace.append(err)
            if err <= config.tol:
                converged = True
                break
        prev = nu
    if not converged:
        raise ConvergenceError(f"backward pass did not converge in {config.max_iters} periods", trace)
    return hs, nus, it, trace


def _truncated(mats, refs, config: SolverConfig):
    n = len(mats)
    warm = config.warmup if config.warmup is not None else math.ceil(math.log(config.tol) / math.log(config.pilot_delta))
    if n <= 2 * warm:
        raise ConfigError(f"truncated window of length {n} is too short for burn-in {warm} at both ends")
    dtype = complex if any(np.iscomplexobj(M) for M in mats) else float
    fw = [None] * (n + 1)
    g = np.ones(mats[0].shape[1], dtype=dtype)
    for k in range(n):
        fw[k] = g
        g = _matvec(mats[k], g)
        g = g / (refs[min(k + 1, n - 1)] @ g)
    fw[n] = g
    bw = [None] * n
    nu = refs[-1].astype(dtype)
    for k in range(n - 1, -1, -1):
        nu = _vecmat(nu, mats[k])
        nu = nu / np.sum(nu)
        bw[k] = nu
    # one extra entry at the right end supplies nu_{j+1}, h_{j+1} for the last lambda
    idx = list(range(warm, n - warm + 1))
    return [fw[k] for k in idx], [bw[k] for k in idx], idx, []


# ---------------------------------------------------------------------------
# residuals and convergence


@dataclass
class ResidualRow:
    index: int
    eigen: float
    dual: float
    normalization: float

    def to_dict(self) -> dict:
        return {"index": self.index, "eigen": self.eigen, "dual": self.dual, "normalization": self.normalization}


def rpf_residuals(t: RPFTriplet, window: TwistWindow, h_reference=None) -> list[ResidualRow]:
    """Per-stage residuals of the eigen, dual and normalization equations (sup / l1 norms)."""
    mats = _mats(window)
    p = len(mats)
    rows = []
    for pos, k in enumerate(t.indices):
        if t.boundary == "periodic":
            nxt = (pos + 1) % len(t.indices)
        else:
            nxt = pos + 1
            if nxt >= len(t.indices):
                continue
        M = mats[k % p]
        lam = t.lambdas[pos]
        h, h1 = t.h[pos].values, t.h[nxt].values
        nu, nu1 = t.nu[pos].coefficients, t.nu[nxt].coefficients
        eig = float(np.max(np.abs(_matvec(M, h) - lam * h1)))
        dual = float(np.sum(np.abs(_vecmat(nu1, M) - lam * nu)))
        if t.normalization == "tower":
            ref = np.asarray(window.stages[k % p].stage.h) if h_reference is None else np.asarray(getattr(h_reference, "values", h_reference))
        else:
            ref = np.ones(h.size)
        norm = max(abs(nu @ ref - 1.0), abs(nu @ h - 1.0))
        rows.append(ResidualRow(k, eig, dual, float(norm)))
    return rows


@dataclass
class ConvergenceReport:
    n: np.ndarray
    residuals: np.ndarray
    delta_hat: float
    A_hat: float
    r_squared: float
    fit_points: int
    noise_floor: float
    noise_floor_reached: bool

    @property
    def eventually_monotone(self) -> bool:
        r = self.residuals[: self.fit_points]
        return bool(r.size < 2 or np.all(np.diff(r[-max(2, r.size // 2) :]) <= 0))

    def to_dict(self) -> dict:
        return {
            "n": self.n.tolist(),
            "residuals": self.residuals.tolist(),
            "delta_hat": self.delta_hat,
            "A_hat": self.A_hat,
            "r_squared": self.r_squared,
            "fit_points": self.fit_points,
            "noise_floor": self.noise_floor,
            "noise_floor_reached": self.noise_floor_reached,
        }


def convergence_rate(window: TwistWindow, g: DiscreteFunction, triplet: RPFTriplet, n_max: int = 25, j: int = 0) -> ConvergenceReport:
    """Residuals ``|L^{j,n} g / lambda_{j,n} - nu_j(g) h_{j+n}|_inf`` and a log-linear fit.

    The fit uses the leading residuals down to the first one under the noise
    floor ``1e3 * eps * (|nu_j(g)| |h| + |g|)``.
    """
    if triplet.boundary != "periodic":
        raise ConfigError("convergence_rate expects a periodic triplet")
    mats = _mats(window)
    p = len(mats)
    pos = triplet.indices.index(j % p)
    nug = complex(triplet.nu[pos].coefficients @ g.values)
    hmax = max(t.sup_norm() for t in triplet.h)
    floor = 1e3 * np.finfo(float).eps * (abs(nug) * hmax + g.sup_norm())
    G = g.values.astype(complex)
    lam = 1.0 + 0j
    res = []
    for n in range(1, n_max + 1):
        k = (j + n - 1) % p
        G = _matvec(mats[k], G)
        lam *= triplet.lambdas[k]
        res.append(float(np.max(np.abs(G / lam - nug * triplet.h[(j + n) % p].values))))
    res = np.array(res)
    ns = np.arange(1, n_max + 1)
    below = np.flatnonzero(res <= floor)
    cut = int(below[0]) if below.size else n_max
    if cut < 3:
        # at the floor within two steps: faster than any fitted geometric rate
        A = float(np.max(res[:cut])) if cut else 0.0
        return ConvergenceReport(ns, res, 0.0, A, float("nan"), cut, float(floor), True)
    x, y = ns[:cut], np.log(res[:cut])
    slope, icpt = np.polyfit(x, y, 1)
    fitted = slope * x + icpt
    ss_res = float(np.sum((y - fitted) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return ConvergenceReport(ns, res, float(np.exp(slope)), float(np.exp(icpt)), r2, cut, float(floor), bool(below.size))
