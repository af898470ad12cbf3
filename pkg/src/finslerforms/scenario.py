"""Scenario documents: validation, execution and machine-readable reports.

A scenario is a JSON object naming a metric (built-in id or inline family
spec), an optional grid, a seed and a list of tasks.  Validation happens in
full before any numerics run; reports embed the scenario hash and the
engine tolerances so that identical scenarios yield byte-identical reports
up to wall-clock fields.
"""

from __future__ import annotations

import hashlib
import json
import time

import numpy as np

from . import builtins as bi
from . import curvature as curvature_mod
from . import forms as forms_mod
from . import quadrature as quad
from .connection import cartan_coefficients
from .errors import ConfigError, FinslerError, TaskError
from .metric import ChartSpec, FinslerStructure
from .quadrature import QuadratureGrid

ENGINE_TOLERANCES = {
    "first_order_identities": 1e-10,
    "second_order_identities": 1e-8,
    "fourth_order_identities": 1e-5,
    "grid_default": 1e-4,
}

TASK_KINDS = ("tensor", "curvature", "laplacian", "harmonic", "integrate", "check")
CHECK_KINDS = ("ricci-identity", "adjointness", "divergence", "bochner")
TENSOR_WHICH = ("g", "ginv", "C", "T", "ell", "G", "N", "Gamma", "Cv")
CURVATURE_WHICH = ("Rhh", "P", "Pprinted", "Q", "Rflag", "Ricci")


def metric_from_config(cfg) -> FinslerStructure:
    if isinstance(cfg, str):
        return bi.get_metric(cfg)
    if not isinstance(cfg, dict):
        raise ConfigError("metric must be a builtin id or an object")
    family = cfg.get("family")
    if family is None:
        raise ConfigError("metric object needs a 'family' key")
    dim = cfg.get("dim")
    chart = None
    if "chart" in cfg:
        c = cfg["chart"]
        chart = ChartSpec(
            bounds=tuple(tuple(b) for b in c["bounds"]),
            periodic=tuple(c.get("periodic", [True] * len(c["bounds"]))),
            excluded_margin=tuple(c["excluded_margin"]) if "excluded_margin" in c else None,
        )
    if family == "euclidean":
        return FinslerStructure.euclidean(int(dim or 2), chart)
    if family == "riemannian":
        if "a" not in cfg:
            raise ConfigError("riemannian metric needs coefficient matrix 'a'")
        return FinslerStructure.riemannian(cfg["a"], dim=dim, chart=chart)
    if family == "randers":
        if "a" not in cfg or "b" not in cfg:
            raise ConfigError("randers metric needs 'a' and 'b'")
        return FinslerStructure.randers(cfg["a"], cfg["b"], dim=dim, chart=chart)
    if family == "custom":
        name = cfg.get("expression")
        if name != "quartic":
            raise ConfigError("custom metrics are limited to named built-in expressions")
        return FinslerStructure.custom(bi._quartic_f2, dim=int(dim or 2), chart=chart)
    raise ConfigError(f"unknown metric family {family!r}")


def grid_from_config(s, cfg) -> QuadratureGrid:
    if cfg is None:
        return bi.default_grid(s)
    base = cfg.get("base")
    fiber = cfg.get("fiber")
    tol = float(cfg.get("tolerance", quad.DEFAULT_TOLERANCE))
    return QuadratureGrid.for_structure(
        s,
        base_counts=tuple(base) if base else None,
        fiber_counts=tuple(fiber) if fiber else None,
        tolerance=tol,
    )


def _parse_point(s, params):
    at = params.get("at")
    if at is None:
        raise ConfigError("task needs an 'at' point {x: [...], y: [...]}")
    x = [float(v) for v in at["x"]]
    y = [float(v) for v in at["y"]]
    if len(x) != s.dim or len(y) != s.dim:
        raise ConfigError("'at' point has wrong dimension")
    return x, y


def validate_scenario(doc) -> None:
    """Raise ConfigError on any malformed element before running math."""
    if not isinstance(doc, dict):
        raise ConfigError("scenario must be a JSON object")
    s = metric_from_config(doc.get("metric", "euclidean"))
    tasks = doc.get("tasks", [])
    if not isinstance(tasks, list):
        raise ConfigError("'tasks' must be a list")
    for i, t in enumerate(tasks):
        kind = t.get("kind")
        if kind not in TASK_KINDS:
            raise ConfigError(f"task {i}: unknown kind {kind!r}")
        params = t.get("params", {})
        if kind == "tensor":
            which = params.get("which", "g")
            if which not in TENSOR_WHICH:
                raise ConfigError(f"task {i}: unknown tensor {which!r}")
            _parse_point(s, params)
        elif kind == "curvature":
            which = params.get("which", "Rhh")
            if which not in CURVATURE_WHICH:
                raise ConfigError(f"task {i}: unknown curvature block {which!r}")
            _parse_point(s, params)
        elif kind == "laplacian":
            name = params.get("form", "dx1")
            bi.get_form(name, s)
        elif kind == "harmonic":
            bi.get_form(params.get("form", "dx1"), s)
        elif kind == "integrate":
            f = params.get("field", "one")
            if f != "one":
                bi.get_form(f, s)
        elif kind == "check":
            which = params.get("which")
            if which not in CHECK_KINDS:
                raise ConfigError(f"task {i}: unknown check {which!r}")
            if which == "adjointness" and int(params.get("p", 1)) not in (0, 1, 2):
                raise ConfigError(f"task {i}: adjointness degree must be 0, 1 or 2")
            if which == "bochner":
                fid = params.get("field", "d1")
                if not isinstance(fid, str) or (
                    fid not in bi.FIELD_IDS and fid not in ("trig-random", "constant")
                ):
                    raise ConfigError(f"task {i}: unknown vector field {fid!r}")


def scenario_hash(doc) -> str:
    canonical = json.dumps(doc, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()


def _field_for_check(s, params, rng):
    fid = params.get("field", "d1")
    if fid == "trig-random":
        return bi.random_trig_vector(rng, s, trig_degree=int(params.get("degree", 2)))
    if fid == "constant":
        comps = [float(v) for v in params.get("components", [1.0] * s.dim)]
        return _constant_field(s, comps)
    return bi.get_field(fid, s)


def _constant_field(s, comps):
    from .connection import TensorField

    return TensorField.from_vector(lambda xs: list(comps), label="constant")


def run_task(s, grid, kind, params, tolerance, rng):
    if kind == "tensor":
        which = params.get("which", "g")
        x, y = _parse_point(s, params)
        z = (x, y)
        if which in ("G", "N", "Gamma", "Cv"):
            conn = cartan_coefficients(s, z)
            data = getattr(conn, {"G": "G", "N": "N", "Gamma": "Gamma", "Cv": "Cv"}[which])
        else:
            data = {
                "g": lambda: s.fundamental_tensor(z).data,
                "ginv": lambda: s.inverse_metric(z).data,
                "C": lambda: s.cartan_tensor(z).data,
                "T": lambda: s.cartan_trace(z).data,
                "ell": lambda: s.hilbert_form(z).data,
            }[which]()
        return {"which": which, "components": np.asarray(data).tolist()}, True

    if kind == "curvature":
        which = params.get("which", "Rhh")
        x, y = _parse_point(s, params)
        cur = curvature_mod.curvature_at_point(s, (x, y))
        data = {
            "Rhh": cur.R_hh,
            "P": cur.P_hv,
            "Pprinted": cur.P_hv_printed,
            "Q": cur.Q_vv,
            "Rflag": cur.R_flag,
            "Ricci": cur.Ricci,
        }[which]
        return {"which": which, "components": np.asarray(data).tolist()}, True

    if kind == "laplacian":
        phi = bi.get_form(params.get("form", "dx1"), s)
        report = forms_mod.is_h_harmonic(s, phi, grid, tol=float(params.get("tol", 1e-8)))
        return {"form": phi.label, **report}, bool(report["equivalence_consistent"])

    if kind == "harmonic":
        phi = bi.get_form(params.get("form", "dx1"), s)
        report = forms_mod.is_h_harmonic(s, phi, grid, tol=float(params.get("tol", 1e-8)))
        return {"form": phi.label, **report}, bool(report["equivalence_consistent"])

    if kind == "integrate":
        fid = params.get("field", "one")
        if fid == "one":
            value = quad.integrate_scalar(s, lambda xs, ys: 1.0, grid)
            return {"field": "one", "integral": value}, True
        phi = bi.get_form(fid, s)
        value = quad.form_grid_norm(s, phi, grid)
        return {"field": fid, "l2_norm": value}, True

    if kind == "check":
        which = params["which"]
        tol = float(tolerance if tolerance is not None else _default_check_tol(which, grid))
        if which == "ricci-identity":
            count = int(params.get("fields", 10))
            pts = int(params.get("points", 3))
            worst = 0.0
            for _ in range(count):
                X = bi.random_trig_vector(rng, s, trig_degree=int(params.get("degree", 2)))
                for z in bi.random_chart_points(rng, s, pts):
                    res = curvature_mod.ricci_identity_residual(s, X, z)
                    worst = max(worst, float(np.max(np.abs(res.data))))
            return {"which": which, "max_residual": worst, "tolerance": tol}, worst <= tol
        if which == "adjointness":
            p = int(params.get("p", 1))
            pairs = int(params.get("pairs", 10))
            worst = 0.0
            for _ in range(pairs):
                phi = bi.random_trig_form(rng, s, p)
                psi = bi.random_trig_form(rng, s, p + 1)
                worst = max(worst, quad.adjointness_defect(s, phi, psi, grid))
            return {"which": which, "p": p, "max_defect": worst, "tolerance": tol}, worst <= tol
        if which == "divergence":
            count = int(params.get("forms", 10))
            worst = 0.0
            for _ in range(count):
                pi = bi.random_trig_form(rng, s, 1)
                worst = max(worst, quad.divergence_integral_check(s, pi, grid))
            return {"which": which, "max_defect": worst, "tolerance": tol}, worst <= tol
        if which == "bochner":
            X = _field_for_check(s, params, rng)
            res = quad.bochner_integral(s, X, grid)
            ok = res["divergence_defect"] <= tol
            if params.get("expect_harmonic", False):
                ok = ok and abs(res["sum"]) <= tol
            return {"which": which, "field": X.label, **res, "tolerance": tol}, ok

    raise ConfigError(f"unknown task kind {kind!r}")


def _default_check_tol(which, grid):
    if which == "ricci-identity":
        return ENGINE_TOLERANCES["fourth_order_identities"]
    return grid.tolerance


def run_scenario(doc) -> dict:
    """Execute a validated scenario and assemble the report."""
    validate_scenario(doc)
    s = metric_from_config(doc.get("metric", "euclidean"))
    grid = grid_from_config(s, doc.get("grid"))
    seed = int(doc.get("seed", 0))
    t_start = time.time()
    tasks_out = []
    all_pass = True
    for i, t in enumerate(doc.get("tasks", [])):
        rng = np.random.default_rng(seed + i)
        t0 = time.time()
        try:
            result, ok = run_task(s, grid, t["kind"], t.get("params", {}), t.get("tolerance"), rng)
        except FinslerError as exc:
            raise TaskError(i, str(exc)) from exc
        tasks_out.append(
            {
                "index": i,
                "kind": t["kind"],
                "params": t.get("params", {}),
                "result": result,
                "pass": bool(ok),
                "wall_time_s": time.time() - t0,
            }
        )
        all_pass = all_pass and ok
    return {
        "scenario_hash": scenario_hash(doc),
        "metric": s.label,
        "seed": seed,
        "grid": grid.meta(),
        "engine_tolerances": ENGINE_TOLERANCES,
        "tasks": tasks_out,
        "pass": bool(all_pass),
        "wall_time_s": time.time() - t_start,
    }
