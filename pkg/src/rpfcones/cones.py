"""Concrete cone families: the Young tower cone and log-Hölder cones of covering maps.

Both are realized as :class:`FunctionalFamily` objects so the real and
complex projective metrics of :mod:`rpfcones.metrics` apply unchanged.
Invariance, domination and the perturbation radius are measured on
samples drawn from the real cone.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp

from .errors import ApertureViolationError, ConePreconditionError, ConfigError
from .function_space import INTERVAL, TOWER, DiscreteFunction, Grid, lipschitz_tower
from .metrics import (
    TOL_CONE,
    FunctionalFamily,
    complex_cone_contains,
    delta_from_values,
    hilbert_distance_matrix,
    real_cone_contains,
)
from .systems import TowerStage
from .transfer import TwistWindow, compose_window

# functional kinds of the tower family
UPSILON, GAMMA_P, GAMMA_XY, GAMMA_PM = 0, 1, 2, 3
KIND_NAMES = {UPSILON: "upsilon", GAMMA_P: "gamma_P", GAMMA_XY: "gamma_xy", GAMMA_PM: "gamma_pm"}


# ---------------------------------------------------------------------------
# tower cone


@dataclass(frozen=True, eq=False)
class TowerConeParams:
    """Parameters of the tower cone together with its partition data.

    ``P1`` is a tuple of node-index arrays (the cells of the fine
    partition), ``P2`` the nodes of the exceptional set.  ``m`` and ``h``
    are the reference measure and the untwisted eigenfunction on the grid.
    """

    a: float
    b: float
    c: float
    eps0: float
    s: int
    P1: tuple
    P2: np.ndarray
    gamma_s: float
    grid: Grid
    m: np.ndarray
    h: np.ndarray

    def __post_init__(self):
        if min(self.a, self.b, self.c) <= 0:
            raise ConfigError("cone parameters a, b, c must be positive")
        if self.m_P2 >= self.eps0:
            raise ConePreconditionError(f"m(P2) = {self.m_P2:.3e} is not below eps0 = {self.eps0:.3e}")

    @property
    def m_P2(self) -> float:
        return float(self.m[self.P2].sum()) if len(self.P2) else 0.0

    @property
    def mu_P(self) -> np.ndarray:
        mu = self.h * self.m
        return np.array([mu[P].sum() for P in self.P1])

    @property
    def D(self) -> float:
        return float(max(self.m[P].sum() / mu for P, mu in zip(self.P1, self.mu_P)))

    @property
    def h_sup(self) -> float:
        return float(np.max(np.abs(self.h)))

    @property
    def L_h(self) -> float:
        return lipschitz_tower(DiscreteFunction(self.grid, self.h))

    @property
    def c1(self) -> float:
        return self.a * self.h_sup + self.b * self.gamma_s

    @property
    def c2(self) -> float:
        return max(self.c, self.c1)

    @property
    def contains_one(self) -> bool:
        return self.a > self.D and self.c > 1.0

    @property
    def contains_h(self) -> bool:
        return self.a > 1.0 and self.b > self.L_h and self.c > self.h_sup

    def scaled(self, sigma: float) -> "TowerConeParams":
        return replace(self, a=sigma * self.a, b=sigma * self.b, c=sigma * self.c)

    def with_abc(self, a: float, b: float, c: float) -> "TowerConeParams":
        return replace(self, a=a, b=b, c=c)

    def to_dict(self) -> dict:
        return {
            "a": self.a, "b": self.b, "c": self.c, "eps0": self.eps0, "s": self.s,
            "cells": len(self.P1), "P2_nodes": int(len(self.P2)), "m_P2": self.m_P2,
            "gamma_s": self.gamma_s, "c1": self.c1, "c2": self.c2, "D": self.D,
        }


def tower_partition(stage: TowerStage, eps0: float, s: int = 0):
    """Cells ``(level, first s+1 symbols)`` below a cut level; the levels above form ``P2``.

    The cut is the lowest level whose upper part has ``m``-mass below ``eps0``.
    """
    g = stage.grid
    m = stage.m
    levels = g.levels
    top = int(levels.max())
    cut = top + 1
    for l in range(top, -1, -1):
        if m[levels >= l].sum() < eps0:
            cut = l
        else:
            break
    P2 = np.flatnonzero(levels >= cut)
    depth = min(int(s), g.coords.shape[1] - 1) + 1
    keys: dict = {}
    for k in np.flatnonzero(levels < cut):
        keys.setdefault((int(levels[k]),) + tuple(int(t) for t in g.coords[k, :depth]), []).append(k)
    P1 = tuple(np.array(v) for v in keys.values())
    gamma = 0.0
    for P in P1:
        if P.size > 1:
            gamma = max(gamma, float(np.max(g.distance(P[:, None], P[None, :]))))
    return P1, P2, gamma


def tower_cone_params(stage: TowerStage, a: float | None = None, b: float | None = None, c: float | None = None, eps0: float = 0.05, s: int = 0) -> TowerConeParams:
    """Cone parameters on a tower stage; unset a, b, c take the calibration start values."""
    P1, P2, gamma = tower_partition(stage, eps0, s)
    base = TowerConeParams(1.0, 1.0, 1.0, eps0, s, P1, P2, gamma, stage.grid, stage.m.copy(), np.asarray(stage.h, dtype=float).copy())
    a0, b0, c0 = default_abc(base)
    return base.with_abc(a if a is not None else a0, b if b is not None else b0, c if c is not None else c0)


def default_abc(params: TowerConeParams) -> tuple[float, float, float]:
    return 10.0 * max(1.0, params.D), 10.0 * max(1.0, params.L_h), 10.0 * max(1.0, params.h_sup)


def same_floor_pairs(grid: Grid):
    """Ordered same-floor pairs ``(i, j)`` with positive distance, and the distances."""
    I, J = [], []
    for fl in grid.floors():
        if fl.size < 2:
            continue
        ii, jj = np.meshgrid(fl, fl, indexing="ij")
        mask = ii != jj
        I.append(ii[mask])
        J.append(jj[mask])
    if not I:
        return np.zeros(0, int), np.zeros(0, int), np.zeros(0)
    I, J = np.concatenate(I), np.concatenate(J)
    d = grid.distance(I, J)
    keep = d > 0
    return I[keep], J[keep], d[keep]


def tower_functional_family(params: TowerConeParams, grid: Grid | None = None) -> FunctionalFamily:
    """The functionals Upsilon_P, Gamma_P, Gamma_{x,y} and Gamma_{x1,+-} on a tower grid.

    Integrals are against ``m``; Gamma_{x,y} runs over all same-floor node
    pairs and Gamma_{x1,+-} over every node of ``P2``.
    """
    grid = grid or params.grid
    if grid.kind != TOWER:
        raise TypeError("tower cone needs a tower grid")
    if not grid.compatible(params.grid):
        raise ConfigError("grid does not match the cone partition")
    n = grid.n
    m = params.m
    mu = params.mu_P
    rows, cols, vals, coef, kinds = [], [], [], [], []
    r = 0
    for sign, kind, mc in ((1.0, UPSILON, 0.0), (-1.0, GAMMA_P, params.a)):
        for P, muP in zip(params.P1, mu):
            rows.append(np.full(P.size, r))
            cols.append(P)
            vals.append(sign * m[P] / muP)
            coef.append(mc)
            kinds.append(kind)
            r += 1
    I, J, d = same_floor_pairs(grid)
    k = I.size
    ar = np.arange(r, r + k)
    rows += [ar, ar]
    cols += [I, J]
    vals += [-1.0 / d, 1.0 / d]
    coef += [params.b] * k
    kinds += [GAMMA_XY] * k
    r += k
    P2 = np.asarray(params.P2, dtype=int)
    for sign in (1.0, -1.0):
        ar = np.arange(r, r + P2.size)
        rows.append(ar)
        cols.append(P2)
        vals.append(np.full(P2.size, sign))
        coef += [params.c] * P2.size
        kinds += [GAMMA_PM] * P2.size
        r += P2.size
    A = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(r, n))
    kinds = np.array(kinds)
    nP = len(params.P1)

    def label(i: int) -> str:
        if i < nP:
            return f"upsilon[P{i}]"
        if i < 2 * nP:
            return f"gamma_P[P{i - nP}]"
        if i < 2 * nP + k:
            t = i - 2 * nP
            return f"gamma_xy[{I[t]},{J[t]}]"
        t = i - 2 * nP - k
        sign = "+" if t < P2.size else "-"
        return f"gamma_{sign}[{P2[t % P2.size]}]"

    return FunctionalFamily(grid, A, label, mass=m, mass_coef=np.array(coef, dtype=float), kinds=kinds)


def tower_sigma(params: TowerConeParams, f: DiscreteFunction) -> float:
    """Smallest ``sigma`` with ``f`` in the cone of parameters ``sigma (a, b, c)``; inf if none."""
    v = np.real(f.values)
    mass = float(params.m @ v)
    ups = np.array([params.m[P] @ v[P] for P in params.P1]) / params.mu_P
    if mass <= 0 or np.min(ups) < -TOL_CONE * max(1.0, np.max(np.abs(ups))):
        return math.inf
    I, J, d = same_floor_pairs(params.grid)
    lip = float(np.max((v[I] - v[J]) / d)) if I.size else 0.0
    top = float(np.max(np.abs(v[params.P2]))) if len(params.P2) else 0.0
    return max(float(np.max(ups)) / params.a, lip / params.b, top / params.c) / mass


# ---------------------------------------------------------------------------
# log-Hölder cones


@dataclass(frozen=True)
class LogHolderConeParams:
    """``{g >= 0, g(x) <= exp(s Q d^alpha) g(x') when d < xi}`` on a covering-map grid."""

    s: float
    Q: float
    alpha: float = 1.0
    xi: float = 1.5
    gamma: float = 2.0

    def __post_init__(self):
        if self.s <= 1.0 or self.Q < 0 or not 0 < self.alpha <= 1 or self.gamma <= 1:
            raise ConfigError("need s > 1, Q >= 0, alpha in (0, 1] and gamma > 1")

    @property
    def s_prime(self) -> float:
        return self.s / self.gamma + 1.0

    @property
    def s_threshold(self) -> float:
        return 1.0 / (1.0 - 1.0 / self.gamma)

    @property
    def improves(self) -> bool:
        return self.s_prime < self.s

    def improved(self) -> "LogHolderConeParams":
        return replace(self, s=self.s_prime)

    def to_dict(self) -> dict:
        return {"s": self.s, "Q": self.Q, "alpha": self.alpha, "xi": self.xi, "gamma": self.gamma, "s_prime": self.s_prime}


def logholder_family(params: LogHolderConeParams, grid: Grid) -> FunctionalFamily:
    """Point evaluations plus ``exp(s Q d^alpha) g(x') - g(x)`` for ordered pairs with ``0 < d < xi``."""
    n = grid.n
    ii, jj = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    ii, jj = ii.ravel(), jj.ravel()
    d = grid.distance(ii, jj)
    keep = (d > 0) & (d < params.xi)
    ii, jj, d = ii[keep], jj[keep], d[keep]
    k = ii.size
    rows = np.concatenate([np.arange(n), n + np.arange(k), n + np.arange(k)])
    cols = np.concatenate([np.arange(n), jj, ii])
    vals = np.concatenate([np.ones(n), np.exp(params.s * params.Q * d**params.alpha), -np.ones(k)])
    A = sp.csr_matrix((vals, (rows, cols)), shape=(n + k, n))

    def label(i: int) -> str:
        if i < n:
            return f"point[{i}]"
        return f"ratio[{ii[i - n]},{jj[i - n]}]"

    return FunctionalFamily(grid, A, label, kinds=np.concatenate([np.zeros(n, int), np.ones(k, int)]))


def logholder_membership(params: LogHolderConeParams, f: DiscreteFunction) -> tuple[bool, FunctionalFamily]:
    if not f.is_real:
        raise TypeError("log-Hölder membership needs a real function")
    S = logholder_family(params, f.grid)
    return real_cone_contains(S, f), S


def covering_diameter_target(params: LogHolderConeParams, C: float) -> float:
    """``2 ln((s + s') C / (s - s'))``: real diameter of the improved cone slice with ratio bound C."""
    s, sp_ = params.s, params.s_prime
    if sp_ >= s:
        return math.inf
    return 2.0 * math.log((s + sp_) * C / (s - sp_))


# ---------------------------------------------------------------------------
# sampling


def random_directions(grid: Grid, count: int, rng: np.random.Generator, degree: int = 8) -> np.ndarray:
    """(n, count) random perturbation directions: smooth series on intervals, i.i.d. elsewhere."""
    if grid.kind == INTERVAL:
        x = 2.0 * np.asarray(grid.coords, dtype=float) - 1.0
        V = np.polynomial.chebyshev.chebvander(x, degree)
        coef = rng.standard_normal((degree + 1, count)) / (1.0 + np.arange(degree + 1))[:, None] ** 2
        return V @ coef
    return rng.standard_normal((grid.n, count))


def sample_cone(S: FunctionalFamily, count: int, rng: np.random.Generator, base: np.ndarray | None = None, directions: np.ndarray | None = None, boundary: bool = False) -> np.ndarray:
    """(n, count) elements ``base + t q`` of the real cone along random directions.

    ``t`` is drawn in ``[0, t_max]`` with ``t_max`` the exit time of the
    segment, computed in closed form from the functional values; the square
    root law pushes samples toward the boundary.  ``boundary=True`` puts every
    sample at ``t_max`` (just inside), which is what diameter estimates need.
    """
    base = np.ones(S.grid.n) if base is None else np.asarray(base, dtype=float)
    sb = S.evaluate(base)
    if np.min(sb) <= 0:
        raise ConePreconditionError("sampling base must lie in the interior of the cone")
    Q = random_directions(S.grid, count, rng) if directions is None else np.asarray(directions, dtype=float)
    sq = S.evaluate(Q)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(sq < 0, sb[:, None] / -sq, np.inf)
    tmax = np.min(ratio, axis=0)
    tmax = np.where(np.isfinite(tmax), tmax, 1.0)
    u = np.ones(count) if boundary else np.sqrt(rng.uniform(size=count))
    t = tmax * u * (1.0 - 1e-9)
    return base[:, None] + Q * t[None, :]


# ---------------------------------------------------------------------------
# invariance


@dataclass
class InvarianceReport:
    samples: int
    failures: list
    worst_margin: float
    diameter: float
    target: float
    sigma_hat: float = math.nan
    ratio_C: float = math.nan

    @property
    def passed(self) -> bool:
        return not self.failures

    @property
    def within_target(self) -> bool:
        return self.diameter <= self.target

    def to_dict(self) -> dict:
        return {
            "samples": self.samples, "failures": self.failures, "worst_margin": self.worst_margin,
            "diameter": self.diameter, "target": self.target, "sigma_hat": self.sigma_hat,
            "ratio_C": self.ratio_C, "passed": self.passed,
        }


def _images(window: TwistWindow, batch: np.ndarray) -> np.ndarray:
    grid = window.grid
    out = np.empty_like(batch, dtype=complex if window.z != 0 else float)
    for k in range(batch.shape[1]):
        out[:, k] = compose_window(window, DiscreteFunction(grid, batch[:, k])).values
    return out


def _margins(S: FunctionalFamily, batch: np.ndarray) -> np.ndarray:
    vals = S.evaluate(batch)
    return np.min(vals, axis=0) / np.maximum(np.max(np.abs(vals), axis=0), 1e-300)


def invariance_check(cone_in, cone_out, window: TwistWindow, samples: int = 100, rng: np.random.Generator | int | None = 0, sigma: float = 0.9) -> InvarianceReport:
    """Map sampled ``cone_in`` elements through an untwisted window and test membership in ``cone_out``.

    ``cone_out=None`` selects ``sigma * (a, b, c)`` for tower cones and the
    ``s'`` cone for log-Hölder cones.  The diameter is the largest Hilbert
    distance in ``cone_in`` among the images.
    """
    if window.z != 0:
        raise ConfigError("invariance is checked at z = 0")
    rng = np.random.default_rng(rng)
    grid = window.grid
    if isinstance(cone_in, TowerConeParams):
        cone_out = cone_in.scaled(sigma) if cone_out is None else cone_out
        S_in = tower_functional_family(cone_in, grid)
        S_out = tower_functional_family(cone_out, grid)
    elif isinstance(cone_in, LogHolderConeParams):
        cone_out = cone_in.improved() if cone_out is None else cone_out
        S_in = logholder_family(cone_in, grid)
        S_out = logholder_family(cone_out, grid)
    else:
        raise TypeError("unsupported cone parameters")
    batch = sample_cone(S_in, samples, rng)
    img = np.real(_images(window, batch))
    margins = _margins(S_out, img)
    failures = []
    for k in np.flatnonzero(margins < -TOL_CONE):
        vals = S_out.evaluate(img[:, k])
        i = int(np.argmin(vals))
        failures.append({"sample": int(k), "functional": S_out.label(i), "value": float(vals[i]), "margin": float(margins[k])})
    D = hilbert_distance_matrix(S_in, img)
    diam = float(np.max(D)) if D.size else 0.0
    report = InvarianceReport(samples, failures, float(np.min(margins)), diam, math.inf)
    if isinstance(cone_in, TowerConeParams):
        report.sigma_hat = max(tower_sigma(cone_in, DiscreteFunction(grid, img[:, k])) for k in range(samples))
    else:
        pos = np.maximum(img, 1e-300)
        report.ratio_C = float(np.max(pos.max(axis=0) / pos.min(axis=0)))
        report.target = covering_diameter_target(cone_in, report.ratio_C)
    return report


def calibrate_tower_cone(stage: TowerStage, window: TwistWindow, eps0: float = 0.05, s: int = 0, sigma: float = 0.9, samples: int = 60, rng=0, max_doublings: int = 12):
    """Double ``(a, b, c)`` from the default start until sampled images land in the ``sigma``-cone.

    Returns ``(params, report)``; raises when no candidate passes below the cap.
    """
    params = tower_cone_params(stage, eps0=eps0, s=s)
    for _ in range(max_doublings + 1):
        report = invariance_check(params, None, window, samples=samples, rng=rng, sigma=sigma)
        if report.passed and report.sigma_hat <= sigma:
            return params, report
        params = params.with_abc(2 * params.a, 2 * params.b, 2 * params.c)
    raise ConePreconditionError(f"no invariant tower cone found within {max_doublings} doublings")


# ---------------------------------------------------------------------------
# domination and radius


@dataclass
class DominationReport:
    epsilon: float
    worst: dict  # functional kind -> worst relative deviation
    worst_label: str
    d0: float
    analytic_bound: float | None = None

    @property
    def cosh_threshold(self) -> float:
        return 2.0 * self.epsilon * (1.0 + math.cosh(0.5 * self.d0)) if math.isfinite(self.d0) else math.inf

    @property
    def contracts(self) -> bool:
        return self.cosh_threshold < 1.0

    def to_dict(self) -> dict:
        return {
            "epsilon": self.epsilon, "worst": self.worst, "worst_label": self.worst_label, "d0": self.d0,
            "cosh_threshold": self.cosh_threshold, "contracts": self.contracts, "analytic_bound": self.analytic_bound,
        }


def covering_domination_bound(z: complex, su_sup: float, s: float) -> float:
    """``|z| (2 |S u|_inf + 3 / (s - 1))``."""
    if s <= 1:
        raise ConfigError("need s > 1")
    return abs(z) * (2.0 * su_sup + 3.0 / (s - 1.0))


def domination_epsilon(S: FunctionalFamily, window_z: TwistWindow, window_0: TwistWindow, sample: np.ndarray, d0: float = 0.0, s_param: float | None = None, su_sup: float | None = None) -> DominationReport:
    """Smallest ``eps`` with ``|s(L_z f) - s(L_0 f)| <= eps s(L_0 f)`` over ``sample x S``.

    ``sample`` is an (n, m) batch of real cone elements.  With ``s_param``
    and ``su_sup`` given the analytic covering bound is reported alongside.
    """
    if len(window_z) != len(window_0) or any(a is not b for a, b in zip(window_z.stages, window_0.stages)):
        raise ConfigError("windows must share their stages")
    sample = np.asarray(sample, dtype=float)
    if sample.ndim == 1:
        sample = sample[:, None]
    img0 = np.real(_images(window_0, sample))
    imgz = _images(window_z, sample) if window_z.z != 0 else img0
    v0 = S.evaluate(img0)
    vz = S.evaluate(imgz)
    nonzero = np.max(np.abs(img0), axis=0) > 0
    if np.any(v0[:, nonzero] <= 0):
        raise ApertureViolationError("a functional vanishes on the image of a nonzero cone element")
    with np.errstate(divide="ignore", invalid="ignore"):
        rel = np.where(nonzero[None, :], np.abs(vz - v0) / v0, 0.0)
    per = np.max(rel, axis=1)
    i = int(np.argmax(per))
    kinds = S.kinds if S.kinds is not None else np.zeros(len(S), int)
    worst = {KIND_NAMES.get(int(k), str(int(k))) if S.kinds is not None else "all": float(np.max(per[kinds == k])) for k in np.unique(kinds)}
    bound = None
    if s_param is not None and su_sup is not None:
        bound = covering_domination_bound(window_z.z, su_sup, s_param)
    return DominationReport(float(per[i]), worst, S.label(i), float(d0), bound)


def estimate_C0(S: FunctionalFamily, window: TwistWindow, sample: np.ndarray, radii: Sequence[float] = (0.01, 0.02, 0.04), angles: Sequence[float] = (0.0, 0.5 * math.pi, math.pi, 1.5 * math.pi)) -> tuple[float, dict]:
    """Slope of ``eps(|z|)`` through the origin, maximized over twist directions."""
    w0 = window.with_z(0.0)
    best = 0.0
    table = {}
    r = np.asarray(radii, dtype=float)
    for th in angles:
        eps = np.array([domination_epsilon(S, window.with_z(rr * complex(math.cos(th), math.sin(th))), w0, sample).epsilon for rr in r])
        slope = float(eps @ r / (r @ r))
        table[float(th)] = {"eps": eps.tolist(), "slope": slope}
        best = max(best, slope)
    return best, table


@dataclass(frozen=True)
class RadiusReport:
    r: float
    delta: float
    d1: float
    threshold: float

    def __float__(self) -> float:
        return self.r


def perturbation_radius(C0: float, d0: float, margin: float = 0.5) -> RadiusReport:
    """``r = (1 - margin) / (2 C0 (1 + cosh(d0/2)))`` with the certified image diameter ``d0 + 6|ln(1 - delta_r)|``."""
    if C0 <= 0 or d0 < 0 or not 0 < margin < 1:
        raise ConfigError("need C0 > 0, d0 >= 0 and margin in (0, 1)")
    threshold = 1.0 / (2.0 * C0 * (1.0 + math.cosh(0.5 * d0)))
    r = (1.0 - margin) * threshold
    delta = 2.0 * C0 * r * (1.0 + math.cosh(0.5 * d0))
    return RadiusReport(r, delta, d0 + 6.0 * abs(math.log(1.0 - delta)), threshold)


def complex_image_check(S: FunctionalFamily, window: TwistWindow, sample: np.ndarray, pairs: int | None = None, rng=0) -> dict:
    """Membership of twisted images in the complexified cone and their δ-diameter.

    The diameter is taken over all image pairs, or over ``pairs`` random
    pairs plus the pair farthest apart in the sup-normalized image.
    """
    rng = np.random.default_rng(rng)
    img = _images(window, np.asarray(sample, dtype=float))
    grid = window.grid
    members = [complex_cone_contains(S, DiscreteFunction(grid, img[:, k])) for k in range(img.shape[1])]
    vals = S.evaluate(img)
    m = img.shape[1]
    all_pairs = [(i, j) for i in range(m) for j in range(i + 1, m)]
    if pairs is not None and pairs < len(all_pairs):
        chosen = [all_pairs[k] for k in rng.choice(len(all_pairs), size=pairs, replace=False)]
        nrm = img / img[np.argmax(np.abs(img), axis=0), np.arange(m)]
        far = np.max(np.abs(nrm[:, :, None] - nrm[:, None, :]), axis=0)
        i, j = np.unravel_index(int(np.argmax(far)), far.shape)
        chosen.append((int(min(i, j)), int(max(i, j))))
    else:
        chosen = all_pairs
    diam = 0.0
    for i, j in chosen:
        if i == j:
            continue
        diam = max(diam, delta_from_values(vals[:, i], vals[:, j], img[:, i], img[:, j]))
    return {"members": int(sum(members)), "samples": m, "violations": int(m - sum(members)), "delta_diameter": diam, "pairs": len(chosen)}


# ---------------------------------------------------------------------------
# reproducing shift


def _real_shift(params: TowerConeParams, f: np.ndarray) -> float:
    if not np.any(f):
        return 0.0
    m = params.m
    mass = float(m @ f)
    ups = np.array([m[P] @ f[P] for P in params.P1]) / params.mu_P
    lip = lipschitz_tower(DiscreteFunction(params.grid, f))
    bounds = [
        float(np.max(ups - params.a * mass)) / (params.a - 1.0),
        (lip - params.b * mass) / (params.b - params.L_h),
        float(np.max(-ups)),
        (float(np.max(np.abs(f))) - params.c * mass) / (params.c - params.h_sup),
    ]
    return max(0.0, max(bounds))


def reproducing_shift(params: TowerConeParams, f: DiscreteFunction, h: DiscreteFunction | None = None) -> complex:
    """A shift ``R(f)`` with ``f + R(f) h`` in the (complexified) tower cone.

    Real and imaginary parts are shifted separately.
    """
    if h is not None and not np.allclose(np.asarray(h.values), params.h, rtol=1e-12, atol=1e-14):
        params = replace(params, h=np.real(np.asarray(h.values)).astype(float))
    if params.a <= 1.0 or params.b <= params.L_h or params.c <= params.h_sup:
        raise ConfigError("need a > 1, b > L(h) and c > |h|_inf for the shift")
    v = np.asarray(f.values)
    return complex(_real_shift(params, np.real(v).astype(float)), _real_shift(params, np.imag(v).astype(float)))
