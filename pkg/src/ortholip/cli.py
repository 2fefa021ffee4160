"""
Experiment orchestration: config-driven solves, checker batteries, exponent
tables, oracle fixtures and sweep CSV export.

Subcommands: ``solve``, ``verify``, ``ladder``, ``oracle``, ``sweep``.
Exit codes: 0 success, 2 configuration error, 3 non-convergence, 4 budget
violation.  Report bundles are written to a temp file and renamed, so a
crashed run never leaves a partial artifact.  ``ORTHOLIP_THREADS`` overrides
``--threads``.  Summaries contain no timestamps: reruns with the same config
and seed are byte-identical.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import hashlib
import json
import os
import sys
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .energy import (
    DegeneracyVector,
    LinearLowerOrder,
    NonlinearLowerOrder,
    NoLowerOrder,
    ProblemSpec,
)
from .grid import Ball, Grid, ScalarField, load_field, save_field
from .oracle import coordinate_descent_minimize
from .solver import ConvergenceError, continuation_solve, solve_regularized
from .verify import (
    ScalarMap,
    check_caccioppoli,
    check_lipschitz_estimate,
    check_power_caccioppoli,
    check_propagation,
    check_reverse_holder,
    check_staircase,
    check_weird_caccioppoli,
    ladder,
    reports_to_csv,
    reports_to_json,
)

SCHEMA_VERSION = 1

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NO_CONVERGENCE = 3
EXIT_BUDGET = 4


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------------------
# Config parsing


@dataclass
class ExperimentConfig:
    """Normalized experiment description (see ``parse_config``)."""

    schema_version: int
    seed: int
    threads: int
    problem: dict
    solve: dict = field(default_factory=dict)
    verify: dict = field(default_factory=dict)
    sweep: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "schema_version": self.schema_version,
            "seed": self.seed,
            "threads": self.threads,
            "problem": self.problem,
            "solve": self.solve,
            "verify": self.verify,
            "sweep": self.sweep,
        }

    def digest(self) -> str:
        return hashlib.sha256(
            json.dumps(self.to_dict(), sort_keys=True).encode()
        ).hexdigest()[:16]


def parse_config(data: dict, base_dir: Path | None = None) -> ExperimentConfig:
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    version = data.get("schema_version")
    if version != SCHEMA_VERSION:
        raise ConfigError(f"unsupported schema_version {version!r} (expected {SCHEMA_VERSION})")
    if "problem" not in data:
        raise ConfigError("config needs a 'problem' section")
    problem = data["problem"]
    for key in ("grid", "ball", "p", "deltas", "eps", "boundary"):
        if key not in problem:
            raise ConfigError(f"problem section misses key {key!r}")
    # referenced field files must exist up front
    for section in (problem.get("boundary"), problem.get("lower", {}).get("field")):
        if isinstance(section, dict) and section.get("kind") == "csv":
            path = Path(section["path"])
            if base_dir is not None and not path.is_absolute():
                path = base_dir / path
            if not path.with_suffix(".json").exists():
                raise ConfigError(f"referenced field file {path} does not exist")
    cfg = ExperimentConfig(
        schema_version=SCHEMA_VERSION,
        seed=int(data.get("seed", 0)),
        threads=int(data.get("threads", 1)),
        problem=problem,
        solve=data.get("solve", {}),
        verify=data.get("verify", {}),
        sweep=data.get("sweep", {}),
    )
    build_problem(cfg.problem)  # validate eagerly
    return cfg


def load_config(path, seed_override=None) -> ExperimentConfig:
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if seed_override is not None:
        data = {**data, "seed": int(seed_override)}
    return parse_config(data, base_dir=path.parent)


def _build_field(grid: Grid, spec: dict) -> ScalarField:
    kind = spec.get("kind")
    if kind == "zero":
        return ScalarField.constant(grid, 0.0)
    if kind == "constant":
        return ScalarField.constant(grid, float(spec["value"]))
    if kind == "affine":
        coeffs = np.asarray(spec["coeffs"], dtype=float)
        offset = float(spec.get("offset", 0.0))
        if len(coeffs) != grid.dim:
            raise ConfigError(f"affine field needs {grid.dim} coefficients")
        return ScalarField.from_function(grid, lambda x: x @ coeffs + offset)
    if kind == "saddle":
        a = float(spec.get("amplitude", 1.0))
        return ScalarField.from_function(grid, lambda x: a * (x[..., 0] ** 2 - x[..., 1] ** 2))
    if kind == "sine":
        a = float(spec.get("amplitude", 1.0))
        freq = np.asarray(spec.get("freq", [1.0] * grid.dim), dtype=float)

        def fn(x):
            out = np.full(x.shape[:-1], a)
            for i in range(grid.dim):
                out = out * np.sin(freq[i] * x[..., i])
            return out

        return ScalarField.from_function(grid, fn)
    if kind == "polynomial":
        terms = spec["terms"]

        def fn(x):
            out = np.zeros(x.shape[:-1])
            for term in terms:
                mono = np.full(x.shape[:-1], float(term["coeff"]))
                for i, e in enumerate(term["powers"]):
                    mono = mono * x[..., i] ** e
                out += mono
            return out

        return ScalarField.from_function(grid, fn)
    if kind == "csv":
        fld = load_field(spec["path"])
        if fld.grid != grid:
            raise ConfigError(f"field file {spec['path']} lives on a different grid")
        return fld
    raise ConfigError(f"unknown field kind {kind!r}")


def _smooth_abs_lower(grid: Grid, scale: float, gamma: float) -> NonlinearLowerOrder:
    """Convex builtin G(x, xi) = scale * sqrt(1 + xi^2)."""

    def G(points, xi):
        return scale * np.sqrt(1.0 + np.asarray(xi) ** 2)

    def G_xi(points, xi):
        xi = np.asarray(xi)
        return scale * xi / np.sqrt(1.0 + xi**2)

    return NonlinearLowerOrder(
        G,
        G_xi,
        a=ScalarField.constant(grid, 2.0 * scale),
        b=ScalarField.constant(grid, scale),
        gamma=gamma,
    )


def _build_lower(grid: Grid, spec: dict | None):
    if spec is None or spec.get("kind", "none") == "none":
        return NoLowerOrder()
    kind = spec["kind"]
    if kind == "linear":
        return LinearLowerOrder(_build_field(grid, spec["field"]))
    if kind == "nonlinear":
        name = spec.get("name", "smooth_abs")
        if name != "smooth_abs":
            raise ConfigError(f"unknown nonlinear lower-order profile {name!r}")
        return _smooth_abs_lower(grid, float(spec.get("scale", 1.0)), float(spec.get("gamma", 2.0)))
    raise ConfigError(f"unknown lower-order kind {kind!r}")


def build_problem(problem: dict, nodes_override=None) -> ProblemSpec:
    try:
        gspec = problem["grid"]
        nodes = nodes_override if nodes_override is not None else gspec["nodes"]
        grid = Grid.from_box(gspec["lo"], gspec["hi"], nodes)
        ball = Ball(tuple(problem["ball"]["center"]), float(problem["ball"]["radius"]))
        return ProblemSpec(
            grid=grid,
            ball=ball,
            p=float(problem["p"]),
            deltas=DegeneracyVector(tuple(problem["deltas"])),
            eps=float(problem["eps"]),
            boundary=_build_field(grid, problem["boundary"]),
            lower=_build_lower(grid, problem.get("lower")),
            eps0=float(problem.get("eps0", 0.5)),
            smoothing_radius=float(problem.get("smoothing_radius", 0.0)),
        )
    except ConfigError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"invalid problem section: {exc}") from exc


# ---------------------------------------------------------------------------
# Output helpers


def _atomic_write_text(path: Path, text: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _write_json(path: Path, payload) -> None:
    _atomic_write_text(path, json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _solve_summary(cfg: ExperimentConfig, results, distances=None) -> dict:
    summary = {
        "schema_version": SCHEMA_VERSION,
        "config_digest": cfg.digest(),
        "steps": [
            {
                "eps": r.eps,
                "converged": r.converged,
                "iterations": r.iterations,
                "energy": r.energy,
                "final_residual": r.residual_history[-1],
                "residual_history": r.residual_history,
                "message": r.message,
            }
            for r in results
        ],
    }
    if distances is not None:
        summary["w1p_distances"] = distances
    return summary


def _run_solve(cfg: ExperimentConfig):
    spec = build_problem(cfg.problem)
    tol = float(cfg.solve.get("tol", 1e-10))
    max_iter = int(cfg.solve.get("max_iter", 60))
    schedule = cfg.solve.get("eps_schedule")
    if schedule:
        cont = continuation_solve(spec, schedule, tol=tol, max_iter=max_iter)
        return spec, cont.results, cont.distances
    res = solve_regularized(spec, tol=tol, max_iter=max_iter)
    if not res.converged:
        raise ConvergenceError(res.message)
    return spec, [res], None


# ---------------------------------------------------------------------------
# Subcommands


def cmd_solve(args) -> int:
    cfg = load_config(args.config, seed_override=args.seed)
    out = Path(args.out)
    try:
        spec, results, distances = _run_solve(cfg)
    except ConvergenceError as exc:
        print(f"solve failed to converge: {exc}", file=sys.stderr)
        return EXIT_NO_CONVERGENCE
    out.mkdir(parents=True, exist_ok=True)
    save_field(results[-1].u, out / "solution")
    _write_json(out / "summary.json", _solve_summary(cfg, results, distances))
    print(f"solved: residual {results[-1].residual_history[-1]:.3e} -> {out}")
    return EXIT_OK


def cmd_oracle(args) -> int:
    cfg = load_config(args.config, seed_override=args.seed)
    out = Path(args.out)
    spec = build_problem(cfg.problem)
    tol = float(cfg.solve.get("tol", 1e-12))
    target = cfg.solve.get("residual_target", 1e-10)
    u = coordinate_descent_minimize(spec, tol=tol, residual_target=target)
    out.mkdir(parents=True, exist_ok=True)
    save_field(u, out / "oracle_solution")
    summary = {"schema_version": SCHEMA_VERSION, "config_digest": cfg.digest()}
    if cfg.solve.get("cross_check", False):
        res = solve_regularized(spec, tol=float(target))
        if not res.converged:
            print(f"cross-check solve failed: {res.message}", file=sys.stderr)
            return EXIT_NO_CONVERGENCE
        summary["max_abs_diff"] = float(np.max(np.abs(u.values - res.u.values)))
    _write_json(out / "oracle_summary.json", summary)
    print(f"oracle done -> {out}")
    return EXIT_OK


def _battery(spec: ProblemSpec, u, vcfg: dict, budget):
    """Standard checker battery on one solved instance."""
    center = spec.ball.center
    inner = Ball(center, float(vcfg.get("inner_radius", 0.5 * spec.ball.radius)))
    outer = Ball(center, float(vcfg.get("outer_radius", 0.9 * spec.ball.radius)))
    names = vcfg.get(
        "checkers",
        ["caccioppoli", "weird_caccioppoli", "staircase", "power_caccioppoli", "reverse_holder"],
    )
    h = float(vcfg.get("h", spec.grid.dim))
    reports = []
    for name in names:
        if name == "caccioppoli":
            for j in range(spec.grid.dim):
                reports.append(
                    check_caccioppoli(u, spec, ScalarMap.identity(), j, inner, outer, budget=budget)
                )
        elif name == "weird_caccioppoli":
            reports.append(
                check_weird_caccioppoli(
                    u, spec, ScalarMap.power(1), ScalarMap.power(1), 1.0, 0, min(1, spec.grid.dim - 1),
                    inner, outer, budget=budget,
                )
            )
        elif name == "staircase":
            reports.append(
                check_staircase(u, spec, 1, 3, 0, min(1, spec.grid.dim - 1), inner, outer, budget=budget)
            )
        elif name == "power_caccioppoli":
            for ell0 in (1, 2):
                reports.append(check_power_caccioppoli(u, spec, ell0, 0, inner, outer, budget=budget))
        elif name == "reverse_holder":
            rh = vcfg.get("reverse_holder", {})
            reports.append(
                check_reverse_holder(
                    u,
                    spec,
                    int(rh.get("q", 1)),
                    float(rh.get("t", inner.radius)),
                    float(rh.get("s", 0.5 * (inner.radius + outer.radius))),
                    float(rh.get("R", outer.radius)),
                    h=h,
                    budget=budget,
                )
            )
        elif name == "lipschitz":
            if not spec.deltas.is_zero:
                raise ConfigError("lipschitz checker needs a zero degeneracy vector")
            f_field = spec.lower.f if isinstance(spec.lower, LinearLowerOrder) else None
            reports.append(
                check_lipschitz_estimate(
                    u, f_field, None, spec.p, float(vcfg.get("R0", outer.radius)), h,
                    center=center, budget=budget,
                )
            )
        elif name == "propagation":
            reports.append(
                check_propagation(u, spec.boundary_extension(), spec.deltas, region=spec.ball)
            )
        else:
            raise ConfigError(f"unknown checker {name!r}")
    return reports


def cmd_verify(args) -> int:
    cfg = load_config(args.config, seed_override=args.seed)
    out = Path(args.out)
    budget = args.budget if args.budget is not None else cfg.verify.get("budget")
    try:
        spec, results, _ = _run_solve(cfg)
    except ConvergenceError as exc:
        print(f"solve failed to converge: {exc}", file=sys.stderr)
        return EXIT_NO_CONVERGENCE
    try:
        reports = _battery(spec, results[-1].u, cfg.verify, budget)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out.mkdir(parents=True, exist_ok=True)
    reports_to_json(reports, out / "reports.json")
    reports_to_csv(reports, out / "constants.csv")
    n_fail = sum(not r.passes for r in reports)
    for r in reports:
        print(f"{r.name:24s} implied={r.implied_constant:12.5g} {'pass' if r.passes else 'FAIL'}")
    if n_fail:
        print(f"{n_fail} checker(s) exceeded the budget", file=sys.stderr)
        return EXIT_BUDGET
    return EXIT_OK


def cmd_ladder(args) -> int:
    try:
        table = ladder(args.regime, args.p, args.N, args.h, args.j_max)
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    for row in table.rows:
        tau = "" if row.tau is None else f" tau={float(row.tau):.6f}"
        print(f"j={row.j:2d} gamma={float(row.gamma):10.4f} gamma_hat={float(row.gamma_hat):10.4f}{tau}")
    print(
        f"tau_bar={float(table.tau_bar):.6f} beta={float(table.beta):.6f} "
        f"j0={table.j0} j1={table.j1} q1={table.q1} [{table.sobolev_convention}]"
    )
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        _write_json(out / "ladder.json", table.to_dict())
        lines = ["j,gamma,gamma_hat,ratio,tau"]
        for row in table.rows:
            lines.append(
                f"{row.j},{float(row.gamma)!r},{float(row.gamma_hat)!r},"
                f"{'' if row.ratio is None else repr(float(row.ratio))},"
                f"{'' if row.tau is None else repr(float(row.tau))}"
            )
        _atomic_write_text(out / "ladder.csv", "\n".join(lines) + "\n")
    return EXIT_OK


def _sweep_spacing_instance(cfg: ExperimentConfig, nodes, budget):
    spec = build_problem(cfg.problem, nodes_override=nodes)
    tol = float(cfg.solve.get("tol", 1e-10))
    res = solve_regularized(spec, tol=tol, max_iter=int(cfg.solve.get("max_iter", 60)))
    if not res.converged:
        raise ConvergenceError(f"nodes={nodes}: {res.message}")
    reports = _battery(spec, res.u, cfg.verify, budget)
    return [(max(spec.grid.spacing), r) for r in reports]


def cmd_sweep(args) -> int:
    cfg = load_config(args.config, seed_override=args.seed)
    out = Path(args.out)
    budget = args.budget if args.budget is not None else cfg.verify.get("budget")
    threads = _resolve_threads(args)
    rows = []
    violations = 0

    nodes_list = cfg.sweep.get("nodes_list", [])
    if nodes_list:
        # refinement study, coarse to fine so the spacing column is monotone
        def job(nodes):
            return _sweep_spacing_instance(cfg, nodes, budget)

        try:
            if threads > 1:
                with concurrent.futures.ThreadPoolExecutor(max_workers=threads) as pool:
                    batches = list(pool.map(job, nodes_list))
            else:
                batches = [job(n) for n in nodes_list]
        except ConvergenceError as exc:
            print(f"sweep solve failed: {exc}", file=sys.stderr)
            return EXIT_NO_CONVERGENCE
        for batch in batches:
            for spacing, r in batch:
                rows.append(("spacing", spacing, r.name, r.implied_constant, int(r.passes)))
                violations += not r.passes

    lambdas = cfg.sweep.get("lambdas", [])
    if lambdas:
        spec = build_problem(cfg.problem)
        if not spec.deltas.is_zero:
            print("config error: scaling replay needs zero degeneracy", file=sys.stderr)
            return EXIT_CONFIG
        u0 = spec.boundary_extension()
        f0 = spec.lower.f if isinstance(spec.lower, LinearLowerOrder) else None
        h = float(cfg.verify.get("h", spec.grid.dim))
        R0 = float(cfg.verify.get("R0", 0.9 * spec.ball.radius))
        for lam in lambdas:
            u_l = ScalarField(spec.grid, lam * u0.values)
            f_l = None if f0 is None else ScalarField(spec.grid, lam ** (spec.p - 1) * f0.values)
            rep = check_lipschitz_estimate(
                u_l, f_l, None, spec.p, R0, h, center=spec.ball.center, budget=budget
            )
            rows.append(("lambda", float(lam), rep.name, rep.implied_constant, int(rep.passes)))
            violations += not rep.passes

    eps_schedule = cfg.sweep.get("eps_schedule", [])
    if eps_schedule:
        spec = build_problem(cfg.problem)
        try:
            cont = continuation_solve(spec, eps_schedule, tol=float(cfg.solve.get("tol", 1e-10)))
        except ConvergenceError as exc:
            print(f"continuation failed: {exc}", file=sys.stderr)
            return EXIT_NO_CONVERGENCE
        for e, d in zip(cont.schedule[1:], cont.distances):
            rows.append(("eps", e, "w1p_distance", d, 1))

    out.mkdir(parents=True, exist_ok=True)
    lines = ["axis,value,name,implied_constant,passes"]
    for axis, value, name, implied, ok in rows:
        lines.append(f"{axis},{value!r},{name},{implied!r},{ok}")
    _atomic_write_text(out / "sweep.csv", "\n".join(lines) + "\n")
    print(f"sweep: {len(rows)} rows -> {out / 'sweep.csv'}")
    if violations:
        print(f"{violations} budget violation(s)", file=sys.stderr)
        return EXIT_BUDGET
    return EXIT_OK


def _resolve_threads(args) -> int:
    env = os.environ.get("ORTHOLIP_THREADS")
    if env is not None:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigError(f"ORTHOLIP_THREADS={env!r} is not an integer")
    return max(1, int(getattr(args, "threads", 1) or 1))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ortholip", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True, help="experiment config (JSON)")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--seed", type=int, default=None, help="override config seed")
        p.add_argument("--budget", type=float, default=None, help="implied-constant budget")
        p.add_argument("--threads", type=int, default=1)

    p_solve = sub.add_parser("solve", help="minimize one instance (or an eps schedule)")
    common(p_solve)
    p_solve.set_defaults(fn=cmd_solve)

    p_verify = sub.add_parser("verify", help="solve then run the checker battery")
    common(p_verify)
    p_verify.set_defaults(fn=cmd_verify)

    p_oracle = sub.add_parser("oracle", help="brute-force reference solve")
    common(p_oracle)
    p_oracle.set_defaults(fn=cmd_oracle)

    p_sweep = sub.add_parser("sweep", help="refinement / scaling / eps sweeps to CSV")
    common(p_sweep)
    p_sweep.set_defaults(fn=cmd_sweep)

    p_ladder = sub.add_parser("ladder", help="exact exponent table")
    p_ladder.add_argument("--regime", choices=("homogeneous", "nonhomogeneous"), required=True)
    p_ladder.add_argument("--p", type=float, required=True)
    p_ladder.add_argument("--N", type=int, required=True)
    p_ladder.add_argument("--h", type=float, required=True)
    p_ladder.add_argument("--j-max", dest="j_max", type=int, default=10)
    p_ladder.add_argument("--out", default=None)
    p_ladder.set_defaults(fn=cmd_ladder)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
