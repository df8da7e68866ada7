"""Configuration-driven command line: solve, verify, worked examples, raw OT.

Configs are strict JSON: unknown keys are rejected so misspellings cannot
silently fall back to defaults.  Every run writes report.json plus CSV
exports of the control, plan, state and adjoint into the output directory;
the resolved configuration is embedded in the report for reproducibility.

Exit codes: 0 converged and all requested checks passed, 1 usage or I/O
error, 2 solver unconverged, 3 a certificate check failed.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import structure
from .control import make_control_problem, solve_control
from .errors import ConvergenceError
from .geometry import Domain, build_grid, candidate_points
from .measures import DiscreteMeasure, estimate_density
from .pde import ScalarField, make_backend
from .transport import (
    CostModel,
    DualPotentials,
    TransportPlan,
    cost_matrix,
    solve_kantorovich_exact,
    solve_sinkhorn,
)


class ConfigError(ValueError):
    pass


_COMMANDS = ("solve", "verify", "example-annulus", "example-sparsity", "ot")
_CHECK_NAMES = ("optimality", "support", "rays", "curvature", "map",
                "state_bounds", "sparsity", "density")

_TOP_KEYS = {
    "solve": {"command", "out", "tol", "max_iter", "seed", "checks", "domain",
              "h", "cost", "alpha", "objective", "prior", "candidates",
              "backend"},
    "verify": {"command", "out", "report", "tol"},
    "example-annulus": {"command", "out", "tol", "max_iter", "seed", "checks",
                        "h", "alpha", "backend"},
    "example-sparsity": {"command", "out", "tol", "max_iter", "seed", "checks",
                         "h", "alpha_factor"},
    "ot": {"command", "out", "cost", "source", "target", "method", "eps",
           "tol"},
}


def _require(cond, message):
    if not cond:
        raise ConfigError(message)


def _check_keys(d: dict, allowed: set, where: str):
    for key in d:
        _require(key in allowed, f"unknown key {key!r} in {where}")


def _number(d, key, where, default=None, positive=False):
    if key not in d:
        _require(default is not None, f"missing key {key!r} in {where}")
        return default
    v = d[key]
    _require(isinstance(v, (int, float)) and not isinstance(v, bool),
             f"key {key!r} in {where}: expected a number")
    if positive:
        _require(v > 0, f"key {key!r} in {where}: expected a positive number")
    return float(v)


class RunConfig:
    """Validated run configuration (strict keys, typed values)."""

    def __init__(self, raw: dict, base_dir: Path):
        _require(isinstance(raw, dict), "config must be a JSON object")
        command = raw.get("command")
        _require(command in _COMMANDS,
                 f"key 'command': expected one of {_COMMANDS}, got {command!r}")
        self.command = command
        _check_keys(raw, _TOP_KEYS[command], "config")
        self.raw = raw
        self.base_dir = base_dir
        self.out = raw.get("out", "out")
        self.tol = _number(raw, "tol", "config", default=1e-6, positive=True)
        self.max_iter = int(_number(raw, "max_iter", "config", default=5000,
                                    positive=True))
        self.seed = int(_number(raw, "seed", "config", default=0) )
        self.checks = self._parse_checks(raw.get("checks", "all"))
        if command == "solve":
            self._parse_solve(raw)
        elif command == "ot":
            self._parse_ot(raw)
        elif command == "verify":
            self.report_path = raw.get("report")
        elif command == "example-annulus":
            self.h = _number(raw, "h", "config", default=0.04, positive=True)
            self.alpha = _number(raw, "alpha", "config", default=1.0, positive=True)
            self.backend = raw.get("backend", "green_disk")
            _require(self.backend in ("green_disk", "fd_grid"),
                     "key 'backend': expected 'green_disk' or 'fd_grid'")
        elif command == "example-sparsity":
            self.h = _number(raw, "h", "config", default=0.1, positive=True)
            self.alpha_factor = _number(raw, "alpha_factor", "config",
                                        default=2.0, positive=True)

    @staticmethod
    def _parse_checks(spec):
        if spec == "all":
            return list(_CHECK_NAMES)
        if spec == "none":
            return []
        _require(isinstance(spec, list), "key 'checks': expected all|none|list")
        for name in spec:
            _require(name in _CHECK_NAMES,
                     f"unknown check {name!r}; valid: {_CHECK_NAMES}")
        return list(spec)

    def _parse_cost(self, raw) -> CostModel:
        _require("cost" in raw, "missing key 'cost' in config")
        cost = raw["cost"]
        _require(isinstance(cost, dict), "key 'cost': expected an object")
        _check_keys(cost, {"kind", "gamma"}, "cost")
        kind = cost.get("kind")
        _require(kind in ("metric", "power", "quadratic"),
                 "key 'cost.kind': expected metric|power|quadratic")
        gamma = None
        if kind == "power":
            gamma = _number(cost, "gamma", "cost", default=None)
            _require(1.0 < gamma <= 2.0, "gamma must be in (1,2]")
        else:
            _require("gamma" not in cost, "unknown key 'gamma' in cost")
        return CostModel(kind, gamma=gamma)

    def _parse_measure(self, spec, where) -> DiscreteMeasure:
        _require(isinstance(spec, dict), f"key {where!r}: expected an object")
        _check_keys(spec, {"atoms", "csv"}, where)
        _require(("atoms" in spec) != ("csv" in spec),
                 f"{where}: give exactly one of 'atoms' or 'csv'")
        if "atoms" in spec:
            atoms = spec["atoms"]
            _require(isinstance(atoms, list) and atoms,
                     f"{where}.atoms: expected a nonempty list of [x,y,w]")
            arr = np.asarray(atoms, dtype=float)
            _require(arr.ndim == 2 and arr.shape[1] == 3,
                     f"{where}.atoms: rows must be [x, y, w]")
            pts, w = arr[:, :2], arr[:, 2]
        else:
            path = self.base_dir / spec["csv"]
            _require(path.exists(), f"{where}.csv: no such file {path}")
            mu = DiscreteMeasure.from_csv(path)
            pts, w = mu.points, mu.weights
        _require((w >= 0).all(), f"{where}: weights must be nonnegative")
        return DiscreteMeasure(pts, w)

    def _parse_solve(self, raw):
        dom = raw.get("domain")
        _require(dom in ("unit_square", "unit_disk"),
                 "key 'domain': expected unit_square|unit_disk")
        self.domain = dom
        self.h = _number(raw, "h", "config", default=None)
        _require(0.0 < self.h < 0.25, "key 'h': expected a number in (0, 1/4)")
        self.cost = self._parse_cost(raw)
        self.alpha = _number(raw, "alpha", "config", default=None, positive=True)
        self.backend = raw.get("backend", "fd_grid")
        _require(self.backend in ("green_disk", "fd_grid"),
                 "key 'backend': expected 'green_disk' or 'fd_grid'")
        _require("objective" in raw, "missing key 'objective' in config")
        obj = raw["objective"]
        _check_keys(obj, {"kind", "y_d", "window"}, "objective")
        kind = obj.get("kind")
        _require(kind in ("tracking_full", "tracking_window"),
                 "key 'objective.kind': expected tracking_full|tracking_window")
        self.objective_kind = kind
        if kind == "tracking_window":
            win = obj.get("window")
            _require(isinstance(win, list) and len(win) == 4,
                     "objective.window: expected [xmin, xmax, ymin, ymax]")
            self.window = [float(v) for v in win]
        else:
            _require("window" not in obj, "unknown key 'window' in objective")
            self.window = None
        yd = obj.get("y_d")
        _require(isinstance(yd, dict), "objective.y_d: expected an object")
        _check_keys(yd, {"kind", "value", "path"}, "objective.y_d")
        ykind = yd.get("kind")
        _require(ykind in ("zero", "constant", "csv", "state_of_prior"),
                 "objective.y_d.kind: expected zero|constant|csv|state_of_prior")
        self.y_d_spec = yd
        _require("prior" in raw, "missing key 'prior' in config")
        self.prior = self._parse_measure(raw["prior"], "prior")
        cand = raw.get("candidates", {"region": "full"})
        _check_keys(cand, {"region", "h"}, "candidates")
        self.candidate_h = _number(cand, "h", "candidates", default=self.h,
                                   positive=True)
        region = cand.get("region", "full")
        if region == "full":
            self.candidate_region = "full"
        elif isinstance(region, dict) and set(region) == {"annulus"}:
            rr = region["annulus"]
            _require(isinstance(rr, list) and len(rr) == 2,
                     "candidates.region.annulus: expected [r1, r2]")
            self.candidate_region = ("annulus", float(rr[0]), float(rr[1]))
        elif isinstance(region, dict) and set(region) == {"box"}:
            bx = region["box"]
            _require(isinstance(bx, list) and len(bx) == 4,
                     "candidates.region.box: expected [xmin, xmax, ymin, ymax]")
            self.candidate_region = ("subgrid", tuple(float(v) for v in bx))
        else:
            raise ConfigError("candidates.region: expected full|{annulus}|{box}")

    def _parse_ot(self, raw):
        self.cost = self._parse_cost(raw)
        _require("source" in raw and "target" in raw,
                 "ot command needs 'source' and 'target' measures")
        self.source = self._parse_measure(raw["source"], "source")
        self.target = self._parse_measure(raw["target"], "target")
        self.method = raw.get("method", "exact")
        _require(self.method in ("exact", "sinkhorn"),
                 "key 'method': expected exact|sinkhorn")
        self.eps = _number(raw, "eps", "config", default=1e-2, positive=True)


def parse_config(path) -> RunConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file {path} does not exist")
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from None
    return RunConfig(raw, path.parent)


# ---------------------------------------------------------------------------
# problem assembly and artifact output
# ---------------------------------------------------------------------------

def _build_problem(cfg: RunConfig):
    domain = Domain(cfg.domain)
    grid = build_grid(domain, cfg.h)
    backend = make_backend(cfg.backend, grid)
    cands = candidate_points(domain, cfg.candidate_region, cfg.candidate_h)
    yd_spec = cfg.y_d_spec
    if yd_spec["kind"] == "zero":
        y_d = ScalarField(grid, np.zeros(grid.n_nodes))
    elif yd_spec["kind"] == "constant":
        value = yd_spec.get("value")
        _require(isinstance(value, (int, float)),
                 "objective.y_d.value: expected a number")
        y_d = ScalarField(grid, float(value) * (grid.quad_weights > 0))
    elif yd_spec["kind"] == "csv":
        path = cfg.base_dir / yd_spec.get("path", "")
        _require(path.exists(), f"objective.y_d.path: no such file {path}")
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        _require(data.shape == (grid.n_nodes, 3),
                 "objective.y_d csv does not match the grid")
        y_d = ScalarField(grid, data[:, 2])
    else:  # state_of_prior
        y_d = backend.solve_state(cfg.prior)
    window_mask = None
    if cfg.window is not None:
        bx = cfg.window
        window_mask = ((grid.nodes[:, 0] >= bx[0]) & (grid.nodes[:, 0] <= bx[1])
                       & (grid.nodes[:, 1] >= bx[2]) & (grid.nodes[:, 1] <= bx[3]))
    return make_control_problem(domain, grid, backend, cfg.prior, cands,
                                cfg.cost, cfg.alpha, y_d, window_mask)


def _run_checks(report, problem, names, tol):
    """Run the applicable subset of the requested checks."""
    h = problem.grid.h
    results = {}
    failed = False
    for name in names:
        try:
            if name == "optimality":
                cert = structure.check_optimality(report)
                results[name] = cert.as_dict()
                failed |= not cert.passed
            elif name == "support":
                res = structure.check_support_inclusion(
                    report.plan, report.p_at_candidates, problem.alpha,
                    problem.C, tol=1e-6 + 5 * h, mass_tol=1e-6)
                results[name] = res.as_dict()
                failed |= not res.passed
            elif name == "rays":
                if problem.cost_model.kind != "metric":
                    results[name] = {"skipped": "needs metric cost"}
                    continue
                res = structure.check_transport_rays(
                    report.plan, report.grad_p_at_candidates, problem.alpha,
                    tol=5 * h, model=problem.cost_model,
                    min_transport_dist=2 * h)
                results[name] = res.as_dict()
                failed |= not res.passed
            elif name == "curvature":
                if problem.cost_model.kind not in ("power", "quadratic"):
                    results[name] = {"skipped": "needs power/quadratic cost"}
                    continue
                res = structure.check_curvature(
                    report.grad_p_at_candidates, problem.candidates,
                    problem.cost_model, problem.alpha,
                    radius=problem.pair_radius())
                results[name] = res.as_dict()
            elif name == "map":
                if problem.cost_model.kind not in ("power", "quadratic"):
                    results[name] = {"skipped": "needs power/quadratic cost"}
                    continue
                curv = structure.check_curvature(
                    report.grad_p_at_candidates, problem.candidates,
                    problem.cost_model, problem.alpha,
                    radius=problem.pair_radius())
                res = structure.extract_transport_map(
                    report.plan, tol=1e-5, model=problem.cost_model,
                    alpha=problem.alpha, kappa_hat=curv.kappa_hat)
                results[name] = res.as_dict()
                if curv.verdict:
                    failed |= not res.success
            elif name == "state_bounds":
                if (problem.objective_kind != "tracking_full"
                        or problem.cost_model.kind not in ("quadratic", "power")):
                    results[name] = {"skipped": "needs full tracking + C2 cost"}
                    continue
                if (problem.cost_model.kind == "power"
                        and problem.cost_model.gamma != 2.0):
                    results[name] = {"skipped": "needs gamma = 2"}
                    continue
                res = structure.check_state_bounds(report, problem)
                results[name] = res.as_dict()
                failed |= not res.passed
            elif name == "sparsity":
                if (problem.cost_model.kind != "metric"
                        or problem.window_mask is None):
                    results[name] = {"skipped": "needs metric cost + window"}
                    continue
                res = structure.sparsity_threshold(problem)
                results[name] = res.as_dict()
            elif name == "density":
                if problem.cost_model.kind not in ("power", "quadratic"):
                    results[name] = {"skipped": "needs power/quadratic cost"}
                    continue
                gamma = problem.cost_model.gamma or 2.0
                U0 = estimate_density(problem.prior, problem.grid)
                res = structure.check_density_bound(
                    report.plan, report.adjoint, gamma, U0, problem.grid,
                    problem.alpha)
                results[name] = res.as_dict()
        except Exception as exc:  # pragma: no cover - defensive
            results[name] = {"error": str(exc)}
            failed = True
    return results, failed


def _write_artifacts(out_dir: Path, report, problem, config_dict, checks,
                     extras=None):
    out_dir.mkdir(parents=True, exist_ok=True)
    files = {
        "prior": "prior.csv",
        "candidates": "candidates.csv",
        "u_bar": "u_bar.csv",
        "plan": "plan.csv",
        "state": "state.csv",
        "adjoint": "adjoint.csv",
        "grad_p": "grad_p.csv",
    }
    problem.prior.to_csv(out_dir / files["prior"])
    with open(out_dir / files["candidates"], "w", encoding="utf-8") as fh:
        fh.write("x,y\n")
        for x, y in problem.candidates:
            fh.write(f"{float(x)!r},{float(y)!r}\n")
    report.u_bar.to_csv(out_dir / files["u_bar"])
    report.plan.to_csv(out_dir / files["plan"])
    report.state.to_csv(out_dir / files["state"])
    report.adjoint.to_csv(out_dir / files["adjoint"])
    with open(out_dir / files["grad_p"], "w", encoding="utf-8") as fh:
        fh.write("x,y,gx,gy\n")
        for (x, y), (gx, gy) in zip(problem.candidates,
                                    report.grad_p_at_candidates):
            fh.write(f"{float(x)!r},{float(y)!r},{float(gx)!r},{float(gy)!r}\n")
    doc = {
        "config": config_dict,
        "alpha": problem.alpha,
        "objective": report.objective_value,
        "gap": report.fw_gap,
        "iterations": report.iterations,
        "converged": report.converged,
        "tol": report.tol,
        "objective_history": list(map(float, report.objective_history)),
        "gap_history": list(map(float, report.gap_history)),
        "dual": {"psi": report.psi.tolist(), "phi": report.phi.tolist()},
        "files": files,
        "certificate": report.certificate,
        "structure": checks,
        "extras": extras or {},
        "wall_time_s": report.wall_time,
    }
    (out_dir / "report.json").write_text(json.dumps(doc, sort_keys=True,
                                                    indent=2))
    return doc


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def _cmd_solve_like(cfg: RunConfig, problem, extras_fn=None) -> int:
    report = solve_control(problem, tol=cfg.tol, max_iter=cfg.max_iter)
    checks, failed = _run_checks(report, problem, cfg.checks, cfg.tol)
    extras = extras_fn(report, problem) if extras_fn else {}
    out_dir = Path(cfg.out)
    _write_artifacts(out_dir, report, problem, cfg.raw, checks, extras)
    print(f"objective={report.objective_value:.9g} gap={report.fw_gap:.3g} "
          f"iterations={report.iterations} converged={report.converged}")
    for name, res in checks.items():
        status = ("skipped" if "skipped" in res
                  else "pass" if res.get("passed", True) else "FAIL")
        print(f"check {name}: {status}")
    if not report.converged:
        return 2
    if failed:
        return 3
    return 0


def _cmd_solve(cfg: RunConfig) -> int:
    return _cmd_solve_like(cfg, _build_problem(cfg))


def _cmd_example_annulus(cfg: RunConfig) -> int:
    problem, ref = structure.build_annulus_example(cfg.h, cfg.alpha,
                                                   backend_kind=cfg.backend)

    def extras(report, prob):
        band = structure.ring_band_mass_fraction(report.u_bar, ref.ring_radius,
                                                 2 * cfg.h)
        phi_ref = structure.AnnulusReference.phi(prob.prior.points)
        lip = structure.discrete_lipschitz(report.psi, prob.candidates)
        return {
            "ring_mass_fraction_2h": band,
            "u_bar_mass": report.u_bar.total_mass,
            "reference_mass": ref.mass,
            "phi_sup_error": float(np.abs(report.phi - phi_ref).max()),
            "psi_discrete_lipschitz": lip,
        }

    return _cmd_solve_like(cfg, problem, extras)


def _cmd_example_sparsity(cfg: RunConfig) -> int:
    problem, thresh = structure.build_sparsity_example(cfg.h, cfg.alpha_factor)

    def extras(report, prob):
        from .transport import eval_transport_distance

        rows, cols, vals = report.plan.support(1e-10 * prob.prior.total_mass)
        diagonal = bool(np.all(
            np.linalg.norm(prob.prior.points[rows] - prob.candidates[cols],
                           axis=1) < 1e-12))
        dist = eval_transport_distance(prob.cost_model, prob.prior,
                                       report.u_bar)
        equal = diagonal and dist <= 1e-10
        print(f"u_bar == u0: {str(equal).lower()}")
        return {
            "threshold": thresh.as_dict(),
            "plan_diagonal": diagonal,
            "transport_distance": float(dist),
            "u_bar_equals_prior": equal,
        }

    return _cmd_solve_like(cfg, problem, extras)


def _cmd_ot(cfg: RunConfig) -> int:
    C = cost_matrix(cfg.cost, cfg.source.points, cfg.target.points)
    if cfg.method == "exact":
        plan, duals, value = solve_kantorovich_exact(cfg.source.weights,
                                                     cfg.target.weights, C)
    else:
        plan = solve_sinkhorn(cfg.source.weights, cfg.target.weights, C,
                              eps=cfg.eps, tol=cfg.tol)
        duals = DualPotentials(np.zeros(len(cfg.source.weights)),
                               np.zeros(len(cfg.target.weights)))
        value = plan.cost_inner(C)
    out_dir = Path(cfg.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    plan.to_csv(out_dir / "plan.csv")
    doc = {
        "config": cfg.raw,
        "value": value,
        "dual": {"phi": duals.phi.tolist(), "psi": duals.psi.tolist()},
        "files": {"plan": "plan.csv"},
    }
    (out_dir / "report.json").write_text(json.dumps(doc, sort_keys=True,
                                                    indent=2))
    print(f"value={value:.12g}")
    return 0


def _load_xy_csv(path):
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return data


def _cmd_verify(cfg: RunConfig) -> int:
    report_path = Path(cfg.report_path) if cfg.report_path else Path(cfg.out) / "report.json"
    if not report_path.exists():
        print(f"error: report {report_path} does not exist", file=sys.stderr)
        return 1
    doc = json.loads(report_path.read_text())
    base = report_path.parent
    run_cfg = doc.get("config", {})
    files = doc.get("files", {})
    try:
        prior = DiscreteMeasure.from_csv(base / files["prior"])
        cands = _load_xy_csv(base / files["candidates"])
        plan_rows = np.loadtxt(base / files["plan"], delimiter=",",
                               skiprows=1, ndmin=2)
        u_bar = DiscreteMeasure.from_csv(base / files["u_bar"])
    except (KeyError, OSError) as exc:
        print(f"error: incomplete artifact set ({exc})", file=sys.stderr)
        return 1
    cost_spec = run_cfg.get("cost", {"kind": "metric"})
    model = CostModel(cost_spec.get("kind", "metric"),
                      gamma=cost_spec.get("gamma"))
    C = cost_matrix(model, prior.points, cands)
    psi = np.asarray(doc["dual"]["psi"], dtype=float)
    phi = np.asarray(doc["dual"]["phi"], dtype=float)
    duals = DualPotentials(phi=phi, psi=psi)
    plan = TransportPlan(prior.points, prior.weights, cands,
                         plan_rows[:, 0].astype(int),
                         plan_rows[:, 1].astype(int), plan_rows[:, 2])

    tol_feas = doc["certificate"]["dual_feasibility"]["tol"]
    tol_gap = doc["certificate"]["ot_gap"]["tol"]
    feas = duals.feasibility_residual(C)
    gap = plan.cost_inner(C) - duals.dual_value(plan.row_sums(),
                                                plan.col_sums())
    row_err = float(np.abs(plan.row_sums() - prior.weights).max())
    col_err = float(abs(plan.col_sums().sum() - u_bar.total_mass))
    ok = (feas <= tol_feas and gap <= tol_gap
          and row_err <= 1e-9 * (1 + prior.total_mass)
          and col_err <= 1e-9 * (1 + prior.total_mass))
    print(f"verify: feasibility={feas:.3g} (tol {tol_feas:.3g}) "
          f"gap={gap:.3g} (tol {tol_gap:.3g}) row_err={row_err:.3g} "
          f"col_err={col_err:.3g} -> {'pass' if ok else 'FAIL'}")
    return 0 if ok else 3


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="otpoisson",
        description="Poisson optimal control with transport regularization",
    )
    parser.add_argument("--config", required=True, help="JSON run configuration")
    parser.add_argument("--out", help="output directory (overrides config)")
    parser.add_argument("--tol", type=float, help="FW gap tolerance override")
    parser.add_argument("--max-iter", type=int, help="iteration cap override")
    parser.add_argument("--check", help="all|none|comma list of checks")
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse exits 2 on usage problems
        return 0 if exc.code == 0 else 1
    try:
        cfg = parse_config(args.config)
        if args.out is not None:
            cfg.out = args.out
            cfg.raw["out"] = args.out
        if args.tol is not None:
            cfg.tol = args.tol
            cfg.raw["tol"] = args.tol
        if args.max_iter is not None:
            cfg.max_iter = args.max_iter
            cfg.raw["max_iter"] = args.max_iter
        if args.check is not None:
            spec = args.check if args.check in ("all", "none") else args.check.split(",")
            cfg.checks = RunConfig._parse_checks(spec)
            cfg.raw["checks"] = args.check
        if cfg.command == "solve":
            return _cmd_solve(cfg)
        if cfg.command == "example-annulus":
            return _cmd_example_annulus(cfg)
        if cfg.command == "example-sparsity":
            return _cmd_example_sparsity(cfg)
        if cfg.command == "ot":
            return _cmd_ot(cfg)
        return _cmd_verify(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except ConvergenceError as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
