"""Execute configured runs and sweeps; write and re-verify trace files.

Per sweep point ``<p>`` the output directory receives

* ``trace_<p>.csv``  one row per iteration (17 significant digits)
* ``field_<p>.csv``  the final field as ``t,eps`` rows (left interval nodes)
* ``report_<p>.json`` config echo, verdicts, and the extra series needed to
  re-verify them

plus a ``summary.csv`` across all points.
"""

from __future__ import annotations

import csv
import json
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Any, Dict, List, Optional

import numpy as np

from . import analysis
from .config import CHECKS, RunConfig, parse_config, point_name, read_field_csv
from .core import ControlField, SchemeParams, operator_norm
from .problems import ProblemSpec
from .propagator import SweepError
from .scheme import NonFiniteCostError, RunReport, StoppingPolicy, run

log = logging.getLogger(__name__)

TRACE_HEADER = (
    "k", "J", "fluence", "eps_l2", "eps_sup", "d_fwd_l2", "d_bwd_l2",
    "gain_lhs", "gain_obs", "gain_fwd", "gain_bwd", "identity_residual",
)


def fmt(x: float) -> str:
    return "%.17g" % x


def trace_rows(report: RunReport):
    nan = float("nan")
    for rec in report.records:
        g = rec.gain
        yield [
            str(rec.k),
            fmt(rec.J),
            fmt(rec.fluence),
            fmt(rec.eps_l2),
            fmt(rec.eps_sup),
            fmt(g.d_fwd_l2 if g else nan),
            fmt(g.d_bwd_l2 if g else nan),
            fmt(g.lhs if g else nan),
            fmt(g.observable_term if g else nan),
            fmt(g.forward_term if g else nan),
            fmt(g.backward_term if g else nan),
            fmt(g.identity_residual if g else nan),
        ]


def write_trace(path, report: RunReport) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(TRACE_HEADER)
        writer.writerows(trace_rows(report))


def read_trace(path) -> Dict[str, np.ndarray]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if tuple(rows[0]) != TRACE_HEADER:
        raise ValueError(f"{path}: unexpected trace header {rows[0]}")
    cols = {name: np.array([float(r[i]) for r in rows[1:]]) for i, name in enumerate(TRACE_HEADER)}
    cols["k"] = cols["k"].astype(int)
    if not np.array_equal(cols["k"], np.arange(len(rows) - 1)):
        raise ValueError(f"{path}: iteration index is not contiguous from 0")
    return cols


def write_field(path, field: ControlField) -> None:
    t = field.grid.nodes[:-1]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(("t", "eps"))
        for tj, ej in zip(t, field.values):
            writer.writerow((fmt(tj), fmt(ej)))


def _verdict(passed, **numbers) -> Dict[str, Any]:
    return {"passed": passed, **{k: _clean(v) for k, v in numbers.items()}}


def _clean(v):
    if isinstance(v, (np.floating, float)):
        v = float(v)
        return v if np.isfinite(v) else repr(v)
    if isinstance(v, np.bool_):
        return bool(v)
    if isinstance(v, np.integer):
        return int(v)
    return v


def _try_bound(report: RunReport):
    try:
        return analysis.bound_m_for_run(report), None
    except analysis.BoundUndefinedError as exc:
        return None, str(exc)


def run_checks(config: RunConfig, report: RunReport) -> Dict[str, Dict[str, Any]]:
    """Evaluate every enabled check on a finished run."""
    settings = config.checks
    problem, params = report.problem, report.params
    out: Dict[str, Dict[str, Any]] = {}
    M, why = _try_bound(report)
    enabled = settings.enabled

    if "monotonicity" in enabled:
        res = analysis.monotonicity_check(report.column("J"), settings.monotonicity_rtol)
        out["monotonicity"] = _verdict(res.pop("passed"), rtol=settings.monotonicity_rtol, **res)

    if "gain_identity" in enabled:
        residuals = [g.identity_residual for g in report.gains()]
        res = analysis.gain_identity_check(residuals, settings.gain_identity_atol)
        out["gain_identity"] = _verdict(res.pop("passed"), **res)

    if "summability" in enabled:
        res = analysis.summability_check(
            report.column("J"), report.column("d_fwd_l2"), report.column("d_bwd_l2"),
            params, settings.summability_atol,
        )
        passed = res.pop("passed") if res.get("applicable") else None
        res.pop("passed", None)
        out["summability"] = _verdict(passed, **res)

    if "bound" in enabled:
        if M is None:
            out["bound"] = _verdict(None, applicable=False, reason=why)
        else:
            cert = analysis.check_bound(report, M)
            out["bound"] = _verdict(
                cert.checked_l2, applicable=True, M=cert.M, checked_l2=cert.checked_l2,
                checked_sup=cert.checked_sup, worst_ratio=cert.worst_ratio,
                worst_sup_ratio=cert.worst_sup_ratio,
            )

    if "gronwall" in enabled:
        if M is None:
            out["gronwall"] = _verdict(None, applicable=False, reason=why)
        else:
            out["gronwall"] = _gronwall(problem, M, settings.gronwall_pairs, settings.gronwall_seed)

    if "residual" in enabled:
        value = analysis.critical_residual(problem, report.final.eps, params.alpha, report.rule)
        out["residual"] = _verdict(value <= settings.residual_tol, residual=value, tol=settings.residual_tol)

    if "limit_set" in enabled:
        diag = analysis.limit_set_diagnostics(report, settings.singleton_threshold)
        out["limit_set"] = _verdict(
            diag.singleton_verdict, window=diag.window, tail_diameter_l2=diag.tail_diameter_l2,
            max_consecutive_gap=diag.max_consecutive_gap, J_spread=diag.J_spread,
            threshold=settings.singleton_threshold,
        )

    if "alpha_threshold" in enabled:
        out["alpha_threshold"] = _alpha_verdict(problem, params, M, why)
    return out


def _gronwall(problem, M: float, pairs: int, seed: int) -> Dict[str, Any]:
    rng = np.random.default_rng(seed)
    worst_psi = worst_chi = 0.0
    passed = 0
    for _ in range(pairs):
        a = analysis.random_bounded_field(problem.grid, M, rng)
        b = analysis.random_bounded_field(problem.grid, M, rng)
        v = analysis.gronwall_check(problem, a, b, M)
        passed += v.passed
        if v.bound_psi > 0:
            worst_psi = max(worst_psi, v.observed_psi / v.bound_psi)
        if v.bound_chi > 0:
            worst_chi = max(worst_chi, v.observed_chi / v.bound_chi)
    return _verdict(
        passed == pairs, pairs=pairs, passed_pairs=passed, seed=seed, M=M,
        worst_psi_ratio=worst_psi, worst_chi_ratio=worst_chi,
    )


def _alpha_verdict(problem, params: SchemeParams, M, why) -> Dict[str, Any]:
    krotov = params.delta == 1.0 and params.eta == 0.0
    if M is None:
        return _verdict(None, applicable=False, reason=why)
    try:
        threshold = analysis.alpha_threshold(
            operator_norm(problem.O), operator_norm(problem.mu), problem.grid.T, M
        )
    except analysis.ThresholdOverflowError as exc:
        return _verdict(False, applicable=krotov, reason=str(exc), M=M)
    passed = (params.alpha > threshold) if krotov else None
    return _verdict(passed, applicable=krotov, alpha=params.alpha, threshold=threshold, M=M)


def _point_passed(checks: Dict[str, Dict[str, Any]]) -> bool:
    return all(v["passed"] is not False for v in checks.values())


def run_point(config: RunConfig, name: str, params: SchemeParams, output_dir: str) -> Dict[str, Any]:
    """Run one sweep point end to end and write its files.  Never raises for
    numerical failures; those are recorded in the returned document."""
    out = Path(output_dir)
    doc: Dict[str, Any] = {
        "point": name,
        "params": {"alpha": params.alpha, "delta": params.delta, "eta": params.eta, "lambda": params.lam},
        "config": config.echo(),
    }
    t0 = time.perf_counter()
    try:
        problem = config.problem.build()
        eps0 = config.eps0.field(problem.grid)
        report = run(problem, params, eps0, config.policy, config.tail_window, config.rule)
    except (SweepError, NonFiniteCostError, FloatingPointError, ValueError) as exc:
        log.warning("sweep point %s failed: %s", name, exc)
        doc.update(status="failed", error=str(exc), passed=False, checks={})
        doc["timings"] = {"run_s": time.perf_counter() - t0}
        _write_json(out / f"report_{name}.json", doc)
        return doc
    t_run = time.perf_counter() - t0

    write_trace(out / f"trace_{name}.csv", report)
    write_field(out / f"field_{name}.csv", report.final.eps)

    t1 = time.perf_counter()
    checks = run_checks(config, report)
    t_checks = time.perf_counter() - t1

    doc.update(
        status="ok",
        error=None,
        stop_reason=report.stop_reason,
        iterations=report.iterations,
        J_initial=report.records[0].J,
        J_final=report.records[-1].J,
        norms={"O": operator_norm(problem.O), "mu": operator_norm(problem.mu), "T": problem.grid.T},
        files={
            "trace": f"trace_{name}.csv",
            "field": f"field_{name}.csv",
        },
        series={
            "eps_tilde_l2": [_clean(x) for x in report.column("eps_tilde_l2")],
            "eps_tilde_sup": [_clean(x) for x in report.column("eps_tilde_sup")],
            "d_step_l2": [_clean(x) for x in report.column("d_step_l2")],
        },
        checks=checks,
        passed=_point_passed(checks),
        timings={
            "run_s": t_run,
            "checks_s": t_checks,
            "per_iteration_s": [r.wall_time for r in report.records],
        },
    )
    _write_json(out / f"report_{name}.json", doc)
    return doc


def _write_json(path: Path, doc) -> None:
    path.write_text(json.dumps(doc, indent=2, sort_keys=False) + "\n")


def _run_point_args(args):
    return run_point(*args)


def execute(config: RunConfig, workers: Optional[int] = None, output_dir: Optional[str] = None) -> int:
    """Run every sweep point and all enabled checks.  Returns the exit status
    (0 iff every point ran and every enabled check passed)."""
    out = Path(output_dir or config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    workers = workers or config.workers
    points = config.points()
    jobs = [(config, name, params, str(out)) for name, params in points]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            docs = list(pool.map(_run_point_args, jobs))
    else:
        docs = [run_point(*job) for job in jobs]
    write_summary(out / "summary.csv", docs, config.checks.enabled)
    return 0 if all(d["passed"] for d in docs) else 1


def write_summary(path, docs: List[Dict[str, Any]], enabled) -> None:
    header = ["point", "alpha", "delta", "eta", "status", "stop_reason", "iterations", "J_initial", "J_final"]
    header += [f"{c}_passed" for c in enabled] + ["passed"]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for d in docs:
            p = d["params"]
            row = [d["point"], fmt(p["alpha"]), fmt(p["delta"]), fmt(p["eta"]), d["status"],
                   d.get("stop_reason", ""), d.get("iterations", ""),
                   fmt(d["J_initial"]) if "J_initial" in d else "",
                   fmt(d["J_final"]) if "J_final" in d else ""]
            for c in enabled:
                v = d["checks"].get(c, {}).get("passed")
                row.append("" if v is None else str(bool(v)).lower())
            row.append(str(bool(d["passed"])).lower())
            writer.writerow(row)


def recheck(trace_path, report_path) -> Dict[str, Any]:
    """Recompute verdicts from a trace (and the field file it points to).

    Returns ``{"checks": {name: {"passed", "recorded", "agrees", ...}}, "agrees": bool}``.
    """
    report_path = Path(report_path)
    doc = json.loads(report_path.read_text())
    if doc.get("status") != "ok":
        return {"checks": {}, "agrees": True, "status": doc.get("status")}
    trace = read_trace(trace_path)
    echo = doc["config"]
    checks_cfg = echo["checks"]
    p = doc["params"]
    params = SchemeParams(p["alpha"], p["delta"], p["eta"])
    series = {k: np.array([float(x) for x in v]) for k, v in doc["series"].items()}
    norms = doc["norms"]
    out: Dict[str, Dict[str, Any]] = {}

    def record(name, passed, **numbers):
        recorded = doc["checks"].get(name, {}).get("passed")
        out[name] = {"passed": passed, "recorded": recorded, "agrees": passed == recorded, **numbers}

    enabled = doc["checks"].keys()
    if "monotonicity" in enabled:
        res = analysis.monotonicity_check(trace["J"], checks_cfg["monotonicity_rtol"])
        record("monotonicity", res["passed"], worst_relative_step=res["worst_relative_step"])
    if "gain_identity" in enabled:
        res = analysis.gain_identity_check(trace["identity_residual"], checks_cfg["gain_identity_atol"])
        record("gain_identity", res["passed"], max_abs_residual=res["max_abs_residual"])
    if "summability" in enabled:
        res = analysis.summability_check(
            trace["J"], trace["d_fwd_l2"], trace["d_bwd_l2"], params, checks_cfg["summability_atol"]
        )
        record("summability", res["passed"] if res["applicable"] else None)

    M = None
    try:
        M = analysis.bound_m(
            params, norms["O"], norms["mu"], trace["eps_l2"][0], series["eps_tilde_l2"][0]
        )
    except analysis.BoundUndefinedError:
        pass
    if "bound" in enabled:
        if M is None:
            record("bound", None)
        else:
            cert = analysis.bound_certificate(
                np.concatenate([trace["eps_l2"], series["eps_tilde_l2"]]),
                np.concatenate([trace["eps_sup"], series["eps_tilde_sup"]]),
                M,
            )
            record("bound", cert.checked_l2, worst_ratio=cert.worst_ratio)
    if "alpha_threshold" in enabled:
        v = _alpha_verdict_from_norms(params, norms, M)
        record("alpha_threshold", v)

    needs_problem = {"residual", "gronwall"} & set(enabled)
    if needs_problem:
        problem_cfg = dict(echo["problem"])
        kind = problem_cfg.pop("kind")
        problem = ProblemSpec(kind, _problem_params(kind, problem_cfg)).build()
        if "residual" in enabled:
            values = read_field_csv(report_path.parent / doc["files"]["field"])
            field = ControlField(problem.grid, values)
            value = analysis.critical_residual(problem, field, params.alpha, echo["scheme"]["rule"])
            record("residual", value <= checks_cfg["residual_tol"], residual=value)
        if "gronwall" in enabled:
            if M is None:
                record("gronwall", None)
            else:
                v = _gronwall(problem, M, checks_cfg["gronwall_pairs"], checks_cfg["gronwall_seed"])
                record("gronwall", v["passed"])

    if "limit_set" in enabled:
        recorded = doc["checks"]["limit_set"]
        window = recorded["window"]
        J_tail = trace["J"][-window:]
        spread = float(np.max(J_tail) - np.min(J_tail))
        passed = recorded["tail_diameter_l2"] < checks_cfg["singleton_threshold"]
        consistent = (
            recorded["max_consecutive_gap"] <= recorded["tail_diameter_l2"] + 1e-15
            and abs(spread - recorded["J_spread"]) <= 1e-15 * max(1.0, abs(J_tail).max())
        )
        record("limit_set", passed and consistent, J_spread=spread)

    return {"checks": out, "agrees": all(v["agrees"] for v in out.values()), "status": "ok"}


def _alpha_verdict_from_norms(params, norms, M):
    if M is None or not (params.delta == 1.0 and params.eta == 0.0):
        return None
    try:
        threshold = analysis.alpha_threshold(norms["O"], norms["mu"], norms["T"], M)
    except analysis.ThresholdOverflowError:
        return False
    return params.alpha > threshold


def _problem_params(kind: str, cfg: Dict[str, Any]) -> Dict[str, Any]:
    if kind != "custom":
        return cfg
    params = {k: v for k, v in cfg.items() if k in ("T", "n_steps")}
    for name in ("H", "mu", "O", "psi0"):
        m = np.asarray(cfg[name], dtype=float)
        if name + "_imag" in cfg:
            m = m + 1j * np.asarray(cfg[name + "_imag"], dtype=float)
        params[name] = m
    return params
