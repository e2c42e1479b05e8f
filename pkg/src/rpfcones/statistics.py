"""Mean and variance from the windowed pressure, independent oracles, and a Monte Carlo CLT harness.

The pressure of a window is ``P(z) = n^-1 sum_m log lambda_{j+m}(z)``; its
first two derivatives at 0 are the asymptotic mean and variance of the
Birkhoff sums.  They are extracted twice, by central differences on the real
axis and by the Cauchy integral on a circle, and cross-checked.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import integrate, linalg, special, stats

from .errors import ConfigError, DegenerateCLTError, DerivativeInconsistencyError, RpfConesError
from .function_space import DiscreteFunction
from .rpf import SolverConfig, solve_rpf
from .systems import IntervalStage, ShiftStage, stage_at
from .transfer import PointPotential, TwistWindow, evaluate_potential


# ---------------------------------------------------------------------------
# pressure


@dataclass
class PressureCurve:
    rho: float
    circle_z: np.ndarray
    circle_values: np.ndarray
    real_z: np.ndarray
    real_values: np.ndarray
    n: int
    failures: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    @property
    def fd_step(self) -> float:
        return self.rho / 8.0

    def to_dict(self) -> dict:
        c = lambda a: [[float(np.real(v)), float(np.imag(v))] for v in a]
        return {
            "rho": self.rho, "n": self.n,
            "circle_z": c(self.circle_z), "circle_values": c(self.circle_values),
            "real_z": [float(np.real(v)) for v in self.real_z], "real_values": c(self.real_values),
            "failures": self.failures, "meta": self.meta,
        }


def _window_at(factory, z: complex) -> TwistWindow:
    if isinstance(factory, TwistWindow):
        return factory.with_z(z)
    return factory(z)


def _log_lambdas(factory, z: complex, n: int | None, config: SolverConfig) -> np.ndarray:
    w = _window_at(factory, z)
    t = solve_rpf(w, "periodic", config)
    p = len(t.lambdas)
    n = n or p
    return np.array([t.lambdas[m % p] for m in range(n)], dtype=complex)


def pressure_samples(factory, rho: float, K: int = 32, n: int | None = None, config: SolverConfig | None = None) -> PressureCurve:
    """``n^-1 log lambda_{j,n}(z)`` on the circle ``|z| = rho`` and at ``0, +-h, +-2h`` with ``h = rho/8``.

    ``factory`` is a :class:`TwistWindow` (re-twisted at each z) or a
    callable ``z -> TwistWindow``.  Each ``log lambda_j`` is continued
    along the circle from its principal value at ``z = rho``.
    """
    if rho <= 0 or K < 4:
        raise ConfigError("need rho > 0 and at least 4 circle points")
    config = config or SolverConfig()
    theta = 2.0 * np.pi * np.arange(K) / K
    cz = rho * np.exp(1j * theta)
    h = rho / 8.0
    rz = np.array([-2 * h, -h, 0.0, h, 2 * h])
    failures = []
    lam_c = []
    for z in cz:
        try:
            lam_c.append(_log_lambdas(factory, complex(z), n, config))
        except RpfConesError as e:
            failures.append({"z": [float(z.real), float(z.imag)], "error": f"{type(e).__name__}: {e}"})
            lam_c.append(None)
    lam_r = []
    for z in rz:
        try:
            lam_r.append(_log_lambdas(factory, complex(z), n, config))
        except RpfConesError as e:
            failures.append({"z": [float(z), 0.0], "error": f"{type(e).__name__}: {e}"})
            lam_r.append(None)
    nn = next((len(v) for v in lam_c + lam_r if v is not None), 0)
    cv = np.full(K, np.nan + 0j)
    ok = [k for k, v in enumerate(lam_c) if v is not None]
    if ok:
        L = np.array([lam_c[k] for k in ok])  # (points, n)
        logs = np.log(np.abs(L)) + 1j * np.unwrap(np.angle(L), axis=0)
        cv[ok] = logs.mean(axis=1)
    rv = np.full(rz.size, np.nan + 0j)
    for k, v in enumerate(lam_r):
        if v is not None:
            rv[k] = np.mean(np.log(v))
    return PressureCurve(rho, cz, cv, rz, rv, nn, failures)


# ---------------------------------------------------------------------------
# derivatives


@dataclass
class MomentEstimates:
    mean: float
    variance: float
    method: str
    error: float
    mean_fd: float
    variance_fd: float
    mean_cauchy: float
    variance_cauchy: float
    error_fd: float
    error_cauchy: float

    @property
    def disagreement(self) -> float:
        return max(abs(self.mean_fd - self.mean_cauchy), abs(self.variance_fd - self.variance_cauchy))

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in ("mean", "variance", "method", "error", "mean_fd", "variance_fd", "mean_cauchy", "variance_cauchy", "error_fd", "error_cauchy")} | {"disagreement": self.disagreement}


def lambda_derivatives(curve: PressureCurve, tol: float = 1e-7) -> MomentEstimates:
    """First and second derivative of the pressure at 0 by Cauchy integral and by differences.

    The Cauchy values are reported as primary.  Disagreement above
    ``max(tol, 10 * combined error)`` raises.
    """
    if curve.failures or np.any(~np.isfinite(curve.circle_values)) or np.any(~np.isfinite(curve.real_values)):
        raise ConfigError("pressure curve has failed samples")
    K = curve.circle_values.size
    rho = curve.rho
    c = np.fft.fft(curve.circle_values) / K  # c[k] = a_k rho^k
    d1_c = float(np.real(c[1])) / rho
    d2_c = 2.0 * float(np.real(c[2])) / rho**2
    scale = float(np.max(np.abs(curve.circle_values))) + 1e-300
    alias = float(np.max(np.abs(c[K // 2 - 1 : K // 2 + 2])))
    err_c = max(alias, 1e-15 * scale) * 2.0 / rho**2
    f = np.real(curve.real_values)
    h = curve.fd_step
    d1_5 = (-f[4] + 8 * f[3] - 8 * f[1] + f[0]) / (12 * h)
    d2_5 = (-f[4] + 16 * f[3] - 30 * f[2] + 16 * f[1] - f[0]) / (12 * h * h)
    d1_3 = (f[3] - f[1]) / (2 * h)
    d2_3 = (f[3] - 2 * f[2] + f[1]) / (h * h)
    # the 3-point error is ~16x the 5-point one at the same spacing
    err_fd = max(abs(d1_5 - d1_3), abs(d2_5 - d2_3)) / 15.0 + 1e-15 * scale / h**2
    est = MomentEstimates(d1_c, d2_c, "cauchy-circle", err_c, float(d1_5), float(d2_5), d1_c, d2_c, float(err_fd), float(err_c))
    if est.disagreement > max(tol, 10.0 * (err_c + err_fd)):
        raise DerivativeInconsistencyError(f"finite differences and Cauchy integral disagree by {est.disagreement:.3e}")
    return est


# ---------------------------------------------------------------------------
# oracles


def gauss_lyapunov_oracle() -> float:
    """``int_0^1 -2 ln x / (ln 2 (1 + x)) dx`` by adaptive quadrature."""
    val, _ = integrate.quad(lambda x: -2.0 * math.log(x) / (math.log(2.0) * (1.0 + x)), 0.0, 1.0, limit=200)
    return val


def gauss_cdf_inverse(u: np.ndarray) -> np.ndarray:
    """Inverse distribution function of the Gauss measure, ``2**u - 1``."""
    return np.expm1(np.asarray(u) * math.log(2.0))


@dataclass
class SpectrumReport:
    eigenvalues: np.ndarray
    nodes: int
    N: int
    coefficients: np.ndarray  # Chebyshev coefficients on [0, 1] of the leading eigenfunction
    unresolved: np.ndarray = field(default_factory=lambda: np.zeros(0, complex))

    @property
    def leading(self) -> complex:
        return complex(self.eigenvalues[0])

    @property
    def subleading_modulus(self) -> float:
        return float(abs(self.eigenvalues[1]))

    def density(self, x) -> np.ndarray:
        """Leading eigenfunction scaled to unit integral on [0, 1]."""
        ser = np.polynomial.Chebyshev(self.coefficients, domain=[0.0, 1.0])
        mass = ser.integ(lbnd=0.0)(1.0)
        return np.real(ser(np.asarray(x, dtype=float)) / mass)

    def to_dict(self) -> dict:
        return {
            "nodes": self.nodes, "N": self.N,
            "eigenvalues": [[float(v.real), float(v.imag)] for v in self.eigenvalues[:10]],
            "unresolved": [[float(v.real), float(v.imag)] for v in self.unresolved],
            "subleading_modulus": self.subleading_modulus,
        }


def _cheb_taylor_at_left(k: np.ndarray, j: int) -> np.ndarray:
    """``d^j/dy^j T_k(2y - 1) / j!`` at ``y = 0``."""
    k = np.asarray(k, dtype=float)
    out = np.ones_like(k)
    for m in range(j):
        out = out * (k * k - m * m) / (2 * m + 1)
    return (-1.0) ** (k + j) * out * 2.0**j / math.factorial(j)


def gauss_spectrum_oracle(nodes: int = 64, N: int = 10_000, taylor_terms: int = 10, block: int = 2000, resolution: float = 1e-9) -> SpectrumReport:
    """Eigenvalues of the Gauss-Kuzmin-Wirsing operator by Chebyshev collocation in coefficient space.

    Interior Chebyshev points of the first kind, branches ``n <= N`` summed
    directly and the rest through power-series coefficients of each basis
    polynomial at 0 times ``scipy.special.zeta``.  Dense generalized
    eigenproblem ``A c = lambda V c`` solved by ``scipy.linalg.eig``.
    Eigenvectors whose top quarter of Chebyshev coefficients exceeds
    ``resolution`` relative to their largest one are discretization
    artifacts; their eigenvalues drift with ``nodes`` and are reported
    separately as ``unresolved``.
    """
    if nodes < 16:
        raise ConfigError("the oracle needs at least 16 nodes")
    deg = nodes - 1
    x = 0.5 * (1.0 - np.cos((2 * np.arange(nodes) + 1) * np.pi / (2 * nodes)))
    V = np.polynomial.chebyshev.chebvander(2 * x - 1, deg)
    A = np.zeros((nodes, nodes))
    for start in range(1, N + 1, block):
        n = np.arange(start, min(N, start + block - 1) + 1, dtype=float)
        y = 1.0 / (x[:, None] + n[None, :])
        Vy = np.polynomial.chebyshev.chebvander(2 * y - 1, deg)  # (nodes, b, deg+1)
        A += np.einsum("ib,ibk->ik", y * y, Vy)
    k = np.arange(deg + 1)
    for j in range(taylor_terms + 1):
        A += np.outer(special.zeta(2.0 + j, x + N + 1.0), _cheb_taylor_at_left(k, j))
    w, vr = linalg.eig(A, V)
    order = np.argsort(-np.abs(w))
    w, vr = w[order], vr[:, order]
    w_all = w
    mag = np.abs(vr)
    tail = mag[-max(1, nodes // 4):].max(axis=0) / mag.max(axis=0)
    ok = tail <= resolution
    w, vr = w[ok], vr[:, ok]
    coef = np.real(vr[:, 0] / vr[np.argmax(np.abs(vr[:, 0])), 0])
    return SpectrumReport(w, nodes, N, coef, np.asarray(w_all[~ok]))


# ---------------------------------------------------------------------------
# Monte Carlo CLT


@dataclass
class CltReport:
    trials: int
    n: int
    standardized: np.ndarray
    sums: np.ndarray
    ks: float
    ks_pvalue: float
    empirical_mean: float
    empirical_variance: float
    mean: float
    variance: float
    seed: int
    resampled: int = 0

    def to_dict(self) -> dict:
        return {
            "trials": self.trials, "n": self.n, "ks": self.ks, "ks_pvalue": self.ks_pvalue,
            "empirical_mean": self.empirical_mean, "empirical_variance": self.empirical_variance,
            "mean": self.mean, "variance": self.variance, "seed": self.seed, "resampled": self.resampled,
        }

    def rows(self):
        """CSV rows ``(trial, S_n, standardized)``."""
        return [(k, float(s), float(t)) for k, (s, t) in enumerate(zip(self.sums, self.standardized))]


_CHUNK = 10_000


def _symbol_values(stage: ShiftStage, u) -> np.ndarray:
    K = stage.n_symbols
    if u is None:
        return np.zeros(K)
    if callable(u) and not isinstance(u, DiscreteFunction):
        return np.asarray(u(np.arange(K)), dtype=float)
    if isinstance(u, DiscreteFunction):
        w = u.grid.coords
        vals = np.real(u.values)
        out = np.zeros(K)
        for k in range(K):
            sel = vals[w[:, 0] == k]
            if sel.size == 0 or np.ptp(sel) > 1e-12:
                raise ConfigError("shift Monte Carlo needs a potential of the first symbol")
            out[k] = sel[0]
        return out
    u = np.asarray(u, dtype=float)
    if u.shape != (K,):
        raise ConfigError("one potential value per symbol is required")
    return u


def _shift_sums(stage: ShiftStage, u, n: int, trials: int, seed: int) -> np.ndarray:
    """Birkhoff sums of a first-symbol potential under the Bernoulli measure, via symbol counts."""
    p = stage.weights / stage.weights.sum()
    uv = _symbol_values(stage, u)
    out = np.empty(trials)
    for c, start in enumerate(range(0, trials, _CHUNK)):
        m = min(_CHUNK, trials - start)
        rng = np.random.default_rng(np.random.SeedSequence([seed, c]))
        counts = rng.multinomial(n, p, size=m)
        out[start : start + m] = counts @ uv
    return out


def _orbit_sums(stages: Sequence[IntervalStage], us: Sequence, j: int, n: int, trials: int, seed: int, sampler) -> tuple[np.ndarray, int]:
    """Float orbits of interval maps; points leaving (0, 1) are redrawn from the sampler."""
    out = np.empty(trials)
    redrawn = 0
    for c, start in enumerate(range(0, trials, _CHUNK)):
        m = min(_CHUNK, trials - start)
        rng = np.random.default_rng(np.random.SeedSequence([seed, c]))
        x = np.asarray(sampler(rng, m), dtype=float)
        S = np.zeros(m)
        for step in range(n):
            bad = ~((x > 0.0) & (x < 1.0))
            if np.any(bad):
                redrawn += int(bad.sum())
                x[bad] = sampler(rng, int(bad.sum()))
            k = (j + step) % len(stages)
            S += np.real(evaluate_potential(us[k], x))
            x = stages[k].forward_array(x)
        out[start : start + m] = S
    return out, redrawn


def gauss_sampler(rng: np.random.Generator, size: int) -> np.ndarray:
    return gauss_cdf_inverse(rng.uniform(size=size))


def monte_carlo_clt(system, u, n: int, trials: int, seed: int, moments: MomentEstimates | tuple, sampler: Callable | None = None, j: int = 0) -> CltReport:
    """Standardized Birkhoff sums ``(S_n u - n mean) / sqrt(n var)`` and their KS distance to N(0, 1).

    ``system`` is a shift stage (first-symbol potential, Bernoulli law) or an
    interval stage / list of interval stages simulated in floating point from
    ``sampler(rng, size)`` (default: the Gauss measure).  Trials are drawn in
    fixed chunks seeded by ``(seed, chunk)``.
    """
    if n < 1 or trials < 1:
        raise ConfigError("need n >= 1 and trials >= 1")
    mean, var = (moments.mean, moments.variance) if isinstance(moments, MomentEstimates) else (float(moments[0]), float(moments[1]))
    if var <= 1e-12 * max(1.0, abs(mean)) ** 2:
        raise DegenerateCLTError(f"variance {var:.3e} is numerically zero; u may be cohomologous to a constant")
    redrawn = 0
    if isinstance(system, ShiftStage):
        sums = _shift_sums(system, u, n, trials, seed)
    else:
        stages = list(system) if isinstance(system, (list, tuple)) else [system]
        if not all(isinstance(s, IntervalStage) for s in stages):
            raise ConfigError("Monte Carlo supports shift stages and interval stages")
        us = list(u) if isinstance(u, (list, tuple)) else [u] * len(stages)
        sums, redrawn = _orbit_sums(stages, us, j, n, trials, seed, sampler or gauss_sampler)
    z = (sums - n * mean) / math.sqrt(n * var)
    if np.ptp(sums) == 0:
        raise DegenerateCLTError("all Birkhoff sums coincide")
    res = stats.kstest(z, "norm")
    return CltReport(trials, n, z, sums, float(res.statistic), float(res.pvalue), float(np.mean(sums) / n), float(np.var(sums) / n), mean, var, int(seed), redrawn)
