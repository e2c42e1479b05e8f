"""Pipelines driven by an :class:`ExperimentConfig`.

Each pipeline returns ``(result, tables, annotations)``: a JSON-ready
result, CSV tables as ``name -> (header, rows)``, and a list of per-step
failure notes (non-empty means a partial run).
"""

from __future__ import annotations

import math

import numpy as np

from .config import ExperimentConfig, build_stages, build_window
from .cones import (
    LogHolderConeParams,
    calibrate_tower_cone,
    complex_image_check,
    domination_epsilon,
    estimate_C0,
    invariance_check,
    logholder_family,
    perturbation_radius,
    random_directions,
    sample_cone,
    tower_functional_family,
)
from .errors import ConvergenceError, DegeneracyError, TruncationError
from .function_space import INTERVAL, DiscreteFunction
from .metrics import birkhoff_contraction_bound, hilbert_distance_matrix
from .rpf import convergence_rate, rpf_residuals, solve_rpf
from .statistics import gauss_spectrum_oracle, lambda_derivatives, monte_carlo_clt, pressure_samples
from .transfer import TwistWindow, compose_window, lasota_yorke_report

_COMPUTE_ERRORS = (ConvergenceError, DegeneracyError, TruncationError)


def _c(v) -> list:
    return [float(np.real(v)), float(np.imag(v))]


def run_spectrum(cfg: ExperimentConfig, seed: int):
    d = cfg.discretization
    rep = gauss_spectrum_oracle(d.nodes, d.N)
    dbl = gauss_spectrum_oracle(2 * d.nodes, d.N)
    x = np.linspace(0.0, 1.0, 201)
    dens = float(np.max(np.abs(rep.density(x) - 1.0 / (math.log(2.0) * (1.0 + x)))))
    result = rep.to_dict() | {
        "leading": _c(rep.leading),
        "doubled_nodes": 2 * d.nodes,
        "doubling_change": abs(dbl.subleading_modulus - rep.subleading_modulus),
        "density_sup_error": dens,
    }
    rows = [(k, float(v.real), float(v.imag), float(abs(v))) for k, v in enumerate(rep.eigenvalues[:20])]
    return result, {"eigenvalues": (("index", "re", "im", "modulus"), rows)}, []


def _probe(window: TwistWindow) -> DiscreteFunction:
    g = window.grid
    if g.kind == INTERVAL:
        return DiscreteFunction(g, np.asarray(g.coords, dtype=float))
    return DiscreteFunction(g, 1.0 + 0.5 * np.sin(np.arange(g.n)))


def run_rpf(cfg: ExperimentConfig, seed: int):
    rows, res_rows, notes, per_z = [], [], [], []
    for z in cfg.z_values:
        w = build_window(cfg, z)
        if cfg.solver.boundary == "truncated":
            warm = math.ceil(math.log(cfg.solver.tol) / math.log(0.5))
            reps = math.ceil((2 * warm + 4) / len(w))
            w = TwistWindow(w.stages * reps, w.potentials * reps, z)
        try:
            t = solve_rpf(w, cfg.solver.boundary, cfg.solver_config())
        except _COMPUTE_ERRORS as e:
            notes.append({"z": _c(z), "step": "solve_rpf", "error": f"{type(e).__name__}: {e}"})
            continue
        res = rpf_residuals(t, w)
        entry = {"z": _c(z), "lambda": [_c(l) for l in t.lambdas], "max_residual": max(max(r.eigen, r.dual, r.normalization) for r in res)}
        if cfg.solver.boundary == "periodic":
            cr = convergence_rate(w, _probe(w), t)
            entry["convergence"] = cr.to_dict()
        per_z.append(entry)
        for k, l in zip(t.indices, t.lambdas):
            rows.append((float(np.real(z)), float(np.imag(z)), int(k), float(l.real), float(l.imag)))
        for r in res:
            res_rows.append((float(np.real(z)), float(np.imag(z)), r.index, r.eigen, r.dual, r.normalization))
    tables = {
        "lambdas": (("z_re", "z_im", "j", "lambda_re", "lambda_im"), rows),
        "residuals": (("z_re", "z_im", "j", "eigen", "dual", "normalization"), res_rows),
    }
    return {"boundary": cfg.solver.boundary, "runs": per_z}, tables, notes


def _images(window: TwistWindow, X: np.ndarray) -> np.ndarray:
    g = window.grid
    return np.column_stack([compose_window(window, DiscreteFunction(g, X[:, j])).values for j in range(X.shape[1])])


def _tower_cones(cfg: ExperimentConfig, seed: int):
    c = cfg.cone
    stage = build_stages(cfg)[0]
    base = build_window(cfg)
    # below the tower height the window only shifts levels and L^k C has infinite diameter
    k = max(c.window, int(stage.grid.levels.max()) + 1)
    w0 = TwistWindow(base.stages * k, base.potentials * k, 0.0)
    params, inv = calibrate_tower_cone(stage, w0, eps0=c.eps0, s=int(c.s), sigma=c.sigma, samples=c.samples, rng=seed)
    if c.a is not None or c.b is not None or c.c is not None:
        params = params.with_abc(c.a or params.a, c.b or params.b, c.c or params.c)
        inv = invariance_check(params, None, w0, samples=c.samples, rng=seed, sigma=c.sigma)
    S = tower_functional_family(params)
    rng = np.random.default_rng(seed)
    F = sample_cone(S, c.samples, rng)
    G = sample_cone(S, c.samples, rng)
    B = sample_cone(S, 2 * c.samples, rng, boundary=True)
    imgF, imgG, imgB = (_images(w0, X) for X in (F, G, B))
    D = max(inv.diameter, float(np.max(hilbert_distance_matrix(S, np.hstack([imgF, imgG, imgB])))))
    tau = birkhoff_contraction_bound(D)
    rows, viol = [], 0
    for j in range(c.samples):
        before = float(hilbert_distance_matrix(S, np.column_stack([F[:, j], G[:, j]]))[0, 1])
        after = float(hilbert_distance_matrix(S, np.column_stack([imgF[:, j], imgG[:, j]]))[0, 1])
        ok = after <= tau * before * (1 + 1e-9) + 1e-12
        viol += not ok
        rows.append((j, before, after, tau * before, int(ok)))
    C0, table = estimate_C0(S, w0, F)
    rad = perturbation_radius(C0, inv.diameter)
    cplx = []
    for th in (0.0, 0.5 * math.pi, math.pi, 1.5 * math.pi):
        z = rad.r * complex(math.cos(th), math.sin(th))
        chk = complex_image_check(S, w0.with_z(z), F, pairs=20, rng=seed)
        chk["z"] = _c(z)
        chk["within_bound"] = chk["delta_diameter"] <= rad.d1
        cplx.append(chk)
    result = {
        "cone": params.to_dict(), "invariance": inv.to_dict(), "functionals": len(S),
        "window": k, "birkhoff": {"diameter": D, "tanh_bound": tau, "violations": viol, "pairs": c.samples},
        "C0": C0, "C0_fit": table, "radius": {"r": rad.r, "delta": rad.delta, "d1": rad.d1, "threshold": rad.threshold},
        "complex": cplx,
    }
    return result, {"birkhoff": (("pair", "d_before", "d_after", "bound", "ok"), rows)}, []


def _covering_cones(cfg: ExperimentConfig, seed: int):
    c = cfg.cone
    base = build_window(cfg)
    st = base.stages[0].stage
    Q = c.Q if c.Q is not None else max(op.stage.Q for op in base.stages)
    params = LogHolderConeParams(c.s, Q, c.alpha, c.xi, st.gamma)
    k = max(c.window, st.n0)
    reps = math.ceil(k / len(base))
    w0 = TwistWindow(base.stages * reps, base.potentials * reps, 0.0)
    inv = invariance_check(params, None, w0, samples=c.samples, rng=seed)
    S = logholder_family(params, st.grid)
    sample = sample_cone(S, c.samples, np.random.default_rng(seed))
    dom = []
    for z in cfg.z_values:
        if z == 0:
            continue
        rep = domination_epsilon(S, w0.with_z(z), w0, sample, d0=inv.target)
        dom.append({"z": _c(z)} | rep.to_dict())
    result = {"cone": params.to_dict() | {"improves": params.improves}, "invariance": inv.to_dict(), "domination": dom}
    return result, {}, []


def run_cones(cfg: ExperimentConfig, seed: int):
    if cfg.system.kind == "tower":
        return _tower_cones(cfg, seed)
    return _covering_cones(cfg, seed)


def run_clt(cfg: ExperimentConfig, seed: int):
    st = cfg.statistics
    tw = cfg.twist
    window = build_window(cfg)
    curve = pressure_samples(window, tw.rho, tw.K, config=cfg.solver_config())
    if curve.failures:
        return {"pressure": curve.to_dict()}, {}, [{"step": "pressure_samples", "failures": curve.failures}]
    tol = 1e-7 if cfg.system.kind == "full-shift" else 1e-5
    mom = lambda_derivatives(curve, tol)
    stages = [op.stage for op in window.stages]
    system = stages[0] if cfg.system.kind == "full-shift" else stages
    u = window.potentials[0] if cfg.system.kind == "full-shift" else window.potentials
    rep = monte_carlo_clt(system, u, st.n, st.trials, seed, mom)
    result = {"moments": mom.to_dict(), "clt": rep.to_dict(), "pressure": curve.to_dict()}
    return result, {"trials": (("trial", "sum", "standardized"), rep.rows())}, []


def run_ly_check(cfg: ExperimentConfig, seed: int):
    rng = np.random.default_rng(seed)
    base = build_window(cfg)
    rows, viol = [], 0
    for case in range(cfg.statistics.cases):
        n = int(rng.integers(1, 9))
        r, th = math.sqrt(rng.uniform()), rng.uniform(0, 2 * math.pi)
        z = r * complex(math.cos(th), math.sin(th))
        reps = math.ceil(n / len(base))
        w = TwistWindow((base.stages * reps)[:n], (base.potentials * reps)[:n], z)
        q = random_directions(w.grid, 1, rng)[:, 0]
        f = DiscreteFunction(w.grid, q + 1j * random_directions(w.grid, 1, rng)[:, 0])
        rep = lasota_yorke_report(w, f)
        viol += not rep.holds
        rows.append((case, n, z.real, z.imag, rep.lhs, rep.rhs, int(rep.holds)))
    result = {"cases": cfg.statistics.cases, "violations": viol}
    return result, {"cases": (("case", "n", "z_re", "z_im", "lhs", "rhs", "holds"), rows)}, []


PIPELINE_FUNCS = {"spectrum": run_spectrum, "rpf": run_rpf, "cones": run_cones, "clt": run_clt, "ly-check": run_ly_check}
