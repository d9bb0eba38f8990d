"""Scenario runner: config ingestion, solving, sweeps, machine-readable output.

Configs are plain JSON with explicit numeric arrays (no expression parsing).
Outputs are deterministic: report.json plus fixed-column CSV tables suitable
for golden-file testing, ordered by value and free of timestamps.
"""
import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import evaluation, oracle
from .agent import participation_set
from .errors import AssumptionViolation, ConfigError, InfeasibleSet, InvalidParams, NLTariffError
from .model import (
    ConcaveReservation,
    ConstantReservation,
    ModelParams,
    ScenarioConfig,
    TasteMap,
    TypeDistribution,
)
from .solver_const_h import build_tariff_const_h, solve_x0_star
from .solver_typed_h import build_tariff_typed_h, mu_zero_residual, objective_ab, solve_a0_b0_star
from .tariff import TariffSegment
from .uconvex import check_u_convexity

SCHEMA_VERSION = 1

EXIT_CONFIG = 2
EXIT_ASSUMPTION = 3


# ---------------------------------------------------------------------------
# config parsing
# ---------------------------------------------------------------------------

def _require(doc, key, kind=None):
    if key not in doc:
        raise ConfigError(key, "missing")
    val = doc[key]
    if kind is not None and not isinstance(val, kind):
        raise ConfigError(key, f"expected {kind}, got {type(val).__name__}")
    return val


def _time_profile(doc, key, time_grid):
    raw = doc.get(key, 1.0)
    if isinstance(raw, (int, float)):
        return np.full(time_grid.shape, float(raw))
    arr = np.asarray(raw, dtype=float)
    if arr.shape != time_grid.shape:
        raise ConfigError(key, f"length {arr.size} does not match time grid ({time_grid.size})")
    return arr


def _taste_map(doc, gamma):
    block = doc.get("g", {"form": "canonical"})
    form = block.get("form", "canonical")
    if form == "canonical":
        return TasteMap(form="canonical", gamma_sign=1 if gamma > 0 else -1)
    if form == "tabulated":
        try:
            return TasteMap(
                form="tabulated",
                gamma_sign=1 if gamma > 0 else -1,
                x=np.asarray(block["x"], dtype=float),
                values=np.asarray(block["values"], dtype=float),
                derivative=np.asarray(block["derivative"], dtype=float),
            )
        except KeyError as exc:
            raise ConfigError("g", f"tabulated form needs {exc}") from None
    raise ConfigError("g", f"unknown form {form!r}")


def _type_distribution(doc):
    block = doc.get("f", {"form": "uniform"})
    form = block.get("form", "uniform")
    if form == "uniform":
        return TypeDistribution.uniform()
    if form == "tabulated":
        try:
            return TypeDistribution.tabulated(block["x"], block["density"])
        except KeyError as exc:
            raise ConfigError("f", f"tabulated form needs {exc}") from None
    raise ConfigError("f", f"unknown form {form!r}")


def _reservation(doc):
    block = _require(doc, "reservation", dict)
    form = block.get("form")
    if form == "constant":
        return ConstantReservation(float(_require(block, "value")))
    if form == "concave":
        try:
            return ConcaveReservation.from_table(
                block["x"], block["values"], block["derivative"]
            )
        except KeyError as exc:
            raise ConfigError("reservation", f"concave form needs {exc}") from None
    raise ConfigError("reservation", f"unknown form {form!r} (constant | concave)")


def load_config(path):
    """Parse and validate a scenario configuration file."""
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError("<file>", str(exc)) from None
    gamma = float(_require(doc, "gamma", (int, float)))
    horizon = float(doc.get("horizon", 1.0))
    if "time_grid" in doc:
        time_grid = np.asarray(doc["time_grid"], dtype=float)
    else:
        time_grid = np.linspace(0.0, horizon, int(doc.get("time_nodes", 9)))
    cost_table = None
    if "cost_table" in doc:
        block = doc["cost_table"]
        try:
            from .model import TabulatedCost
            cost_table = TabulatedCost.from_samples(block["c"], block["K"], block["marginal"])
        except KeyError as exc:
            raise ConfigError("cost_table", f"needs {exc}") from None
    params = ModelParams(
        gamma=gamma,
        horizon=horizon,
        time_grid=time_grid,
        phi=_time_profile(doc, "phi", time_grid),
        k=_time_profile(doc, "k", time_grid),
        n=float(doc["n"]) if "n" in doc else None,
        g=_taste_map(doc, gamma),
        f=_type_distribution(doc),
        reservation=_reservation(doc),
        cost_table=cost_table,
    )
    solver = doc.get("solver", {})
    return ScenarioConfig(
        params=params,
        root_tol=float(solver.get("root_tol", 1e-12)),
        x_grid_size=int(solver.get("x_grid_size", 2001)),
        c_grid_size=int(solver.get("c_grid_size", 513)),
        c_min=float(solver.get("c_min", 1e-4)),
        c_max=float(solver.get("c_max", 1e3)),
        simplified_tariff=bool(solver.get("simplified_tariff", True)),
        force_general_route=bool(solver.get("force_general_route", False)),
        tariff_samples=int(doc.get("outputs", {}).get("tariff_samples", 200)),
        type_samples=int(doc.get("outputs", {}).get("type_samples", 201)),
    )


# ---------------------------------------------------------------------------
# scenario execution
# ---------------------------------------------------------------------------

def _solve(config):
    params = config.params
    if params.reservation.kind == "constant":
        report = solve_x0_star(config)
        tariff, p_star = build_tariff_const_h(config, report)
        boundary = {"x0": report.boundary["x0"]}
        extras = {
            "foc_residual": report.foc_residual,
            "uniqueness": report.uniqueness,
            "route": report.route,
            "principal_utility": report.principal_utility,
            "warnings": list(report.warnings),
        }
    else:
        sol = solve_a0_b0_star(config)
        tariff, p_star = build_tariff_typed_h(config, sol)
        boundary = {"a0": sol.a0, "b0": sol.b0}
        extras = {
            "foc_residual": mu_zero_residual(sol, p_star, params),
            "uniqueness": True,
            "route": sol.route,
            "principal_utility": sol.objective,
            "warnings": list(sol.warnings),
            "certificates": {"Xi": sol.Xi, "Psi": sol.Psi, "theta": sol.theta},
            "assumption_flags": sol.assumption_flags,
            "bridge": None if sol.bridge is None else {
                "name": sol.bridge.name, "valid": sol.bridge.valid,
                "checks": {k: bool(v) for k, v in sol.bridge.checks.items()},
            },
        }
    return tariff, p_star, boundary, extras


def run_scenario(config_path, out_dir, run_oracle=False, full_tariff=False):
    """Solve one scenario and write report.json plus the data tables."""
    config = load_config(config_path)
    if full_tariff:
        object.__setattr__(config, "simplified_tariff", False)
    params = config.params
    tariff, p_star, boundary, extras = _solve(config)

    part = participation_set(p_star, params)
    conv = check_u_convexity(p_star.sample(np.linspace(0.0, 1.0, 801)), params)

    report = {
        "schema_version": SCHEMA_VERSION,
        "branch": "industrial" if params.gamma > 0 else "residential",
        "reservation": params.reservation.kind,
        "boundary": boundary,
        "participation": [[lo, hi] for lo, hi in part.intervals],
        "u_convexity": {
            "is_u_convex": bool(conv.is_u_convex),
            "max_biconjugation_gap": conv.max_biconjugation_gap,
            "violations": len(conv.convexity_violations),
        },
        "tariff": {
            "simplified": tariff.simplified,
            "segments": [
                {
                    "label": s.label,
                    "p1_t0": float(s.p1[0]) if isinstance(s, TariffSegment) else None,
                    "p2_t0": float(s.p2[0]) if isinstance(s, TariffSegment) else None,
                    "p3_t0": float(s.p3[0]) if isinstance(s, TariffSegment) else None,
                    "c_lo_t0": float(s.c_lo[0]),
                    "c_hi_t0": float(s.c_hi[0]) if np.isfinite(s.c_hi[0]) else None,
                }
                for s in tariff.segments
            ],
        },
        **extras,
    }

    if run_oracle:
        if params.reservation.kind == "constant":
            res = oracle.oracle_relaxed_maximize_const_h(params)
            gap = abs(res.value - extras["principal_utility"]) / max(1e-12, abs(extras["principal_utility"]))
            report["oracle"] = {"value": res.value, "x0": res.x0,
                                "relative_gap": gap, "iterations": res.iterations}
        else:
            dense = _typed_scan_audit(params)
            report["oracle"] = dense

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    _write_tariff_csv(out / "tariff.csv", tariff, config)
    _write_indirect_csv(out / "indirect_utility.csv", p_star, part, params, config)
    _write_consumption_csv(out / "consumption.csv", p_star, part, params, config)
    return report


def _typed_scan_audit(params, grid=512):
    a = np.linspace(0.0, 1.0, grid)
    A, B = np.meshgrid(a, a, indexing="ij")
    m = B <= A
    from .solver_typed_h import constraint_check_A2prime
    chk = constraint_check_A2prime(A[m], B[m], params)
    vals = objective_ab(A[m], B[m], params)
    vals = np.where(chk["feasible"], vals, -np.inf)
    i = int(np.argmax(vals))
    return {"value": float(vals[i]), "a0": float(A[m][i]), "b0": float(B[m][i]), "grid": grid}


def _selected_c_samples(tariff, config):
    if tariff.selected_range:
        tops = [np.max(band[:, 1][np.isfinite(band[:, 1])], initial=0.0) for band in tariff.selected_range]
        c_top = max(tops)
    else:
        c_top = config.c_max
    if not np.isfinite(c_top) or c_top <= 0:
        c_top = 1.0
    return np.linspace(0.0 if tariff.gamma > 0 else c_top * 1e-4, c_top * 1.25, config.tariff_samples)


def _write_tariff_csv(path, tariff, config):
    cs = _selected_c_samples(tariff, config)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["schema_version", "t", "c", "price"])
        for i, t in enumerate(tariff.time_grid):
            prices = tariff.price(i, cs)
            for c, p in zip(cs, prices):
                w.writerow([SCHEMA_VERSION, f"{t:.12g}", f"{c:.12g}", f"{p:.12g}"])


def _write_indirect_csv(path, p_star, part, params, config):
    xs = np.linspace(0.0, 1.0, config.type_samples)
    P = p_star.P_star(xs)
    H = params.reservation(xs)
    member = part.contains(xs)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["schema_version", "x", "P_star", "H", "participates"])
        for x, pv, hv, mb in zip(xs, P, H, member):
            w.writerow([SCHEMA_VERSION, f"{x:.12g}", f"{pv:.12g}", f"{hv:.12g}", int(mb)])


def _write_consumption_csv(path, p_star, part, params, config):
    xs = np.linspace(0.0, 1.0, config.type_samples)
    member = part.contains(xs)
    slopes = p_star.slopes(xs)
    cons = evaluation.consumption_from_slopes(slopes, xs, params)
    cons = np.where(np.isfinite(cons), cons, 0.0)
    cons[:, ~member] = 0.0
    vals = p_star.values(xs)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["schema_version", "t", "x", "c_star", "p_star"])
        for i, t in enumerate(params.time_grid):
            for j, x in enumerate(xs):
                w.writerow([SCHEMA_VERSION, f"{t:.12g}", f"{x:.12g}",
                            f"{cons[i, j]:.12g}", f"{vals[i, j]:.12g}"])


# ---------------------------------------------------------------------------
# sweeps
# ---------------------------------------------------------------------------

def _scaled_config(config, param, value):
    params = config.params
    if param == "H_scale":
        res = params.reservation
        if res.kind == "constant":
            new_res = ConstantReservation(res.H * value)
        else:
            new_res = ConcaveReservation(
                h=(lambda x, r=res, v=value: v * r(x)),
                h_prime=(lambda x, r=res, v=value: v * r.prime(x)),
            )
        new_params = ModelParams(
            gamma=params.gamma, horizon=params.horizon, time_grid=params.time_grid,
            phi=params.phi, k=params.k, n=params.n, g=params.g, f=params.f,
            reservation=new_res, cost_table=params.cost_table,
        )
    elif param == "k_scale":
        new_params = ModelParams(
            gamma=params.gamma, horizon=params.horizon, time_grid=params.time_grid,
            phi=params.phi, k=params.k * value, n=params.n, g=params.g, f=params.f,
            reservation=params.reservation, cost_table=params.cost_table,
        )
    else:
        raise ConfigError("param", f"unknown sweep parameter {param!r} (H_scale | k_scale)")
    return ScenarioConfig(
        params=new_params, root_tol=config.root_tol, x_grid_size=config.x_grid_size,
        c_grid_size=config.c_grid_size, c_min=config.c_min, c_max=config.c_max,
        simplified_tariff=config.simplified_tariff,
        force_general_route=config.force_general_route,
        tariff_samples=config.tariff_samples, type_samples=config.type_samples,
    )


def run_sweep(config_path, param, values, out_dir, full_tariff=False):
    """Re-solve the scenario for each sweep value and emit one CSV row each."""
    if len(values) < 2:
        raise ConfigError("values", "a sweep needs at least two values")
    base = load_config(config_path)
    if full_tariff:
        object.__setattr__(base, "simplified_tariff", False)
    rows = []
    for v in sorted(values):
        cfg = _scaled_config(base, param, float(v))
        tariff, _, boundary, extras = _solve(cfg)
        try:
            p1, p2, p3 = tariff.coefficients_at(0, label="selected")
        except InvalidParams:  # fully sampled emission carries no polynomial part
            p1 = p2 = p3 = ""
        rows.append({
            "param": param,
            "value": float(v),
            "x0": boundary.get("x0", ""),
            "a0": boundary.get("a0", ""),
            "b0": boundary.get("b0", ""),
            "p1": p1, "p2": p2, "p3": p3,
            "U_P": extras["principal_utility"],
        })
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "sweep.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["schema_version", "param", "value", "x0", "a0", "b0", "p1", "p2", "p3", "U_P"])
        for r in rows:
            w.writerow([SCHEMA_VERSION, r["param"], f"{r['value']:.12g}",
                        _fmt(r["x0"]), _fmt(r["a0"]), _fmt(r["b0"]),
                        _fmt(r["p1"]), _fmt(r["p2"]), _fmt(r["p3"]), _fmt(r["U_P"])])
    return rows


def _fmt(v):
    return "" if v == "" else f"{float(v):.12g}"


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

def build_parser():
    ap = argparse.ArgumentParser(prog="nltariff", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    solve = sub.add_parser("solve", help="solve one scenario and write report files")
    solve.add_argument("config", help="scenario configuration (JSON)")
    solve.add_argument("--out", default="out", help="output directory")
    solve.add_argument("--oracle", action="store_true", help="also run the brute-force audit")
    solve.add_argument("--full-tariff", action="store_true", help="disable simplified emission")

    sweep = sub.add_parser("sweep", help="comparative-statics sweep")
    sweep.add_argument("config")
    sweep.add_argument("--param", required=True, choices=["H_scale", "k_scale"])
    sweep.add_argument("--values", required=True, help="comma-separated sweep values")
    sweep.add_argument("--out", default="out")
    sweep.add_argument("--full-tariff", action="store_true")
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        if args.command == "solve":
            run_scenario(args.config, args.out, run_oracle=args.oracle, full_tariff=args.full_tariff)
        else:
            values = [float(v) for v in args.values.split(",") if v.strip()]
            run_sweep(args.config, args.param, values, args.out, full_tariff=args.full_tariff)
    except (ConfigError, InvalidParams) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except AssumptionViolation as exc:
        print(f"assumption violation: {exc}", file=sys.stderr)
        return EXIT_ASSUMPTION
    except (InfeasibleSet, NLTariffError) as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
