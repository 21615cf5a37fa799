"""Command-line front end: ``sfdlab <subcommand> --config FILE --out DIR``.

Exit codes: 0 success, 1 scientifically inconclusive (a solver gave up, a
sweep could not be classified, or a verification check did not pass),
2 usage or configuration error. Diagnostics go to standard error.
"""

from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

import numpy as np

from .classification import Classification
from .config import ConfigError, RunConfig, parse_config, serialize_config
from .elliptic import EllipticProblem, elliptic_epsilon_sweep, solve_elliptic
from .errors import (
    InconclusiveError,
    InvalidInputError,
    InvalidParameterError,
    InvalidSpecError,
    StepFailure,
    SubcriticalError,
    UnsupportedDimensionError,
    UnsupportedRegimeError,
)
from .extinction import (
    GreenRegime,
    LogHalf,
    chebyshev_times,
    holder_constant,
    epsilon_sweep,
    explicit_solution,
    phase_diagram,
    verify_green_identity,
)
from .grid import Exterior, Field, UniformGrid, integral, lp_norm
from .nonlinearity import Nonlinearity, RegularizedNonlinearity
from .operators import OperatorKind, OperatorSpec, build_operator, stroock_varopoulos_pairing
from .outputs import (
    code_version,
    write_csv,
    write_field,
    write_manifest,
    write_phase_csv,
    write_snapshots,
    write_trajectory,
)
from .parabolic import ParabolicProblem, ab_violation, diagnostics, evolve

__all__ = ["main", "run_command", "build_parser"]

SUITES = ("green", "explicit", "diagnostics", "operator")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sfdlab", description="Singular fractional diffusion lab.")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, help_text):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="key = value config file")
        p.add_argument("--out", default="out", help="output directory (created if missing)")
        return p

    add("solve-parabolic", "evolve the regularised parabolic problem")
    add("solve-elliptic", "solve u + lambda A phi_eps(u) = f + eps")
    p = add("sweep-epsilon", "ball masses across the eps list and their classification")
    p.add_argument("--elliptic", action="store_true", help="sweep the elliptic problem instead")
    p = add("phase-diagram", "classify an (s, n) grid")
    p.add_argument("--s-steps", type=int, default=None, help="evenly spaced s values over the configured range")
    p.add_argument("--n-steps", type=int, default=None, help="evenly spaced n values over the configured range")
    p = add("verify", "run a verification suite")
    p.add_argument("--suite", required=True, choices=SUITES)
    add("verify-operator", "dump the operator coefficient table as CSV")
    return parser


class _Run:
    """Collects manifest entries and output paths for one command."""

    def __init__(self, command: str, cfg: RunConfig, out: Path):
        self.command = command
        self.cfg = cfg
        self.out = out
        self.start = time.perf_counter()
        self.entries: dict = {"command": command}
        self.entries.update(cfg.flat())
        self.outputs: list[str] = []

    def add(self, path: Path):
        self.outputs.append(path.name)

    def report(self, key: str, value):
        self.entries[f"report.{key}"] = value

    def finish(self, grid: UniformGrid | None):
        self.entries["grid_checksum"] = grid.checksum() if grid is not None else ""
        self.entries["code_version"] = code_version()
        self.entries["outputs"] = self.outputs
        self.entries["wall_clock_seconds"] = time.perf_counter() - self.start
        write_manifest(self.out, self.entries)


def _problem(cfg: RunConfig, t_end: float | None = None) -> ParabolicProblem:
    grid = cfg.grid()
    return ParabolicProblem(
        cfg.op_spec(grid), cfg.nonlinearity(), cfg["model.eps"], cfg.initial(grid),
        cfg["time.t_end"] if t_end is None else t_end, cfg["time.dt"], cfg.ball(), cfg.tol(),
    )


def _solve_parabolic(run: _Run) -> int:
    cfg = run.cfg
    p = _problem(cfg)
    samples = [t for t in cfg["time.samples"] if 0 <= t <= p.t_end]
    tr = evolve(p, samples)
    run.add(write_trajectory(run.out / "trajectory.csv", tr.summaries))
    for path in write_snapshots(run.out, tr.snapshots):
        run.add(path)
    run.report("steps", tr.step_count)
    run.report("halvings", tr.halvings)
    run.report("failed", tr.failed)
    run.report("failure", tr.failure)
    run.report("max_newton_iterations", max((r.iterations for r in tr.reports), default=0))
    run.report("sample_times", sorted(tr.snapshots))
    run.finish(p.grid)
    if tr.failed:
        print(f"run aborted: {tr.failure}", file=sys.stderr)
        return 1
    return 0


def _solve_elliptic(run: _Run) -> int:
    cfg = run.cfg
    grid = cfg.grid()
    op = build_operator(cfg.op_spec(grid))
    prob = EllipticProblem(op, RegularizedNonlinearity(cfg.nonlinearity(), cfg["model.eps"]), cfg.initial(grid), cfg["solver.lambda"])
    v, rep = solve_elliptic(prob, tol=cfg.tol(), max_iter=cfg["solver.max_iter"])
    run.add(write_field(run.out / "solution.csv", v))
    print(rep.line())
    run.report("line", rep.line())
    run.report("iterations", rep.iterations)
    run.report("final_residual", rep.final_residual)
    run.report("converged", rep.converged)
    run.report("tolerance", rep.tolerance)
    run.report("damping_events", rep.damping_events)
    run.finish(grid)
    return 0 if rep.converged else 1


def _sweep(run: _Run, elliptic: bool) -> int:
    cfg = run.cfg
    grid = cfg.grid()
    if elliptic:
        res = elliptic_epsilon_sweep(cfg.initial(grid), cfg.op_spec(grid), cfg.nonlinearity(), cfg["sweep.eps_list"], cfg.ball(), cfg.rule())
    else:
        tau = cfg["sweep.tau"]
        template = _problem(cfg, t_end=tau)
        res = epsilon_sweep(template, cfg["sweep.eps_list"], tau, cfg.ball(), cfg.rule())
    rows = list(zip(res.eps_values, res.ball_masses))
    run.add(write_csv(run.out / "sweep.csv", ("eps", "ball_mass"), rows))
    run.report("mode", "elliptic" if elliptic else "parabolic")
    run.report("classification", res.classification.value)
    run.report("slope", res.slope)
    run.report("initial_ball_mass", res.initial_ball_mass)
    run.report("ball_masses", list(res.ball_masses))
    run.finish(grid)
    print(res.classification.value)
    return 1 if res.classification is Classification.INCONCLUSIVE else 0


def _steps(values, count):
    if count is None:
        return list(values)
    if count < 1:
        raise InvalidParameterError("step counts must be positive")
    lo, hi = min(values), max(values)
    return [round(float(x), 12) for x in np.linspace(lo, hi, count)] if count > 1 else [float(lo)]


def _phase(run: _Run, s_steps, n_steps) -> int:
    cfg = run.cfg
    proto = cfg.phase_protocol()
    workers = cfg["phase.workers"] or None
    s_grid = _steps(cfg["phase.s_values"], s_steps)
    n_grid = _steps(cfg["phase.n_values"], n_steps)
    explicit = cfg["phase.points"] if cfg["phase.points"] and s_steps is None and n_steps is None else None
    points = phase_diagram(s_grid, n_grid, proto, workers=workers, points=explicit)
    run.add(write_phase_csv(run.out / "phase.csv", points))
    run.report("points", len(points))
    run.report("inconclusive", sum(p.classification is Classification.INCONCLUSIVE for p in points))
    run.report("s_grid", s_grid if explicit is None else [p[0] for p in explicit])
    run.report("n_grid", n_grid if explicit is None else [p[1] for p in explicit])
    run.finish(UniformGrid(1, proto.half_width, proto.points))
    for p in points:
        print(f"s={p.s:g} n={p.n:g} {p.classification.value}", file=sys.stderr)
    return 1 if any(p.classification is Classification.INCONCLUSIVE for p in points) else 0


# --------------------------------------------------------------------------
# verification suites; each returns rows (check, value, threshold, passed)


def _suite_operator(cfg: RunConfig):
    L, M = cfg["verify.anchor_half_width"], cfg["verify.anchor_points"]
    grid = UniformGrid(1, L, M)
    op = build_operator(OperatorSpec(0.5, OperatorKind.TRUNCATED_QUADRATURE, grid))
    f = grid.sample(lambda x: -np.log1p(x * x), Exterior.POWER_TAIL, 0.0, cfg["verify.anchor_tail_exponent"])
    val = op.apply(f).values[int(np.argmin(np.abs(grid.axis())))]
    err = abs(val - 2.0) / 2.0
    tol = cfg["verify.anchor_tolerance"]
    rows = [("anchor_relative_error", err, tol, err <= tol)]
    # positivity pairings on the configured grid
    g = cfg.grid()
    spec = cfg.op_spec(g)
    op = build_operator(spec)
    rng = np.random.default_rng(0)
    worst = np.inf
    for _ in range(100):
        fld = g.field(rng.standard_normal(g.shape), g.default_exterior())
        worst = min(worst, float(np.sum(fld.values * op.apply(fld).values)))
    rows.append(("min_quadratic_form", worst, 0.0, worst >= -1e-10 * g.size))
    if spec.kind.kernel_based:
        for delta in (1.0, 0.1):
            low = np.inf
            for _ in range(100):
                fld = g.field(rng.standard_normal(g.shape))
                low = min(low, stroock_varopoulos_pairing(op, fld, delta))
            rows.append((f"stroock_varopoulos_delta_{delta:g}", low, 0.0, low >= 0.0))
    return rows, grid


def _suite_explicit(cfg: RunConfig):
    L, M = cfg["verify.explicit_half_width"], cfg["verify.explicit_points"]
    grid = UniformGrid(1, L, M)
    kind = LogHalf(1.0)
    u0 = grid.sample(lambda x: explicit_solution(kind, x, 0.0), Exterior.POWER_TAIL, 0.0, cfg["verify.explicit_tail_exponent"])
    p = ParabolicProblem(
        OperatorSpec(0.5, OperatorKind.TRUNCATED_QUADRATURE, grid), Nonlinearity.log(),
        cfg["verify.explicit_eps"], u0, 1.05, cfg["verify.explicit_dt"],
    )
    tr = evolve(p, [0.5, 1.05])
    tol = cfg["verify.explicit_tolerance"]
    if tr.failed:
        return [("run_completed", 0.0, 1.0, False)], grid
    exact = explicit_solution(kind, grid.axis(), 0.5)
    u_half = tr.snapshot(0.5).values
    err = float(np.sum(np.abs(u_half - exact)) / np.sum(np.abs(exact)))
    m0 = integral(u0)
    late = integral(tr.snapshot(1.05)) / m0
    return [("relative_l1_error_t0.5", err, tol, err <= tol), ("mass_fraction_t1.05", late, 0.05, late <= 0.05)], grid


def _green_reports(cfg: RunConfig, points: int):
    grid = cfg.grid()
    grid = UniformGrid(grid.dimension, grid.half_width, points, grid.topology)
    t0, t1 = cfg["verify.green_tau_star"], cfg["verify.green_tau"]
    p = ParabolicProblem(cfg.op_spec(grid), cfg.nonlinearity(), cfg["model.eps"], cfg.initial(grid), t1, cfg["time.dt"], tol=cfg.tol())
    tr = evolve(p, chebyshev_times(t0, t1, cfg["verify.green_snapshots"]), accumulate_phi=True)
    if tr.failed:
        raise InconclusiveError(tr.failure)
    nodes = [x for x in (0.0, 0.5, 1.0, 2.0, 4.0) if x < grid.half_width]
    return verify_green_identity(tr, p, nodes, t0, t1), grid


def _suite_green(cfg: RunConfig):
    M = cfg["grid.points"]
    coarse, _ = _green_reports(cfg, M)
    fine, grid = _green_reports(cfg, 2 * M)
    rc = max(r.residual for r in coarse)
    rf = max(r.residual for r in fine)
    ratio = rc / rf if rf > 0 else float("inf")
    rows = [
        ("max_residual_coarse", rc, float("nan"), True),
        ("max_residual_fine", rf, float("nan"), True),
        ("refinement_ratio", ratio, 1.8, ratio >= 1.8),
    ]
    if coarse[0].regime is GreenRegime.ONE_D_SUP_HALF:
        s = cfg["operator.s"]
        cc, cf = holder_constant(coarse, s), holder_constant(fine, s)
        change = abs(cf - cc) / max(cc, 1e-300)
        rows.append(("holder_constant_fine", cf, float("nan"), True))
        rows.append(("holder_constant_change", change, 0.05, change <= 0.05))
    return rows, grid


def _suite_diagnostics(cfg: RunConfig):
    p = _problem(cfg)
    k0 = 8 * p.dt
    samples = sorted({*(t for t in cfg["time.samples"] if k0 <= t <= p.t_end), p.t_end})
    tr = evolve(p, samples)
    if tr.failed:
        return [("run_completed", 0.0, 1.0, False)], p.grid
    d = diagnostics(tr, p)
    rows = [("linf_monotone", float(d.linf_monotone), 1.0, d.linf_monotone)]
    if p.grid.periodic:
        rows.append(("max_step_mass_change", d.max_step_mass_change, 1e-12, d.max_step_mass_change <= 1e-12))
    if p.nl.kind == "power":
        ab = ab_violation(tr, p.nl.exponent, p.eps)
        rows.append(("ab_violation", ab, 1e-8, ab <= 1e-8))
    for q in (1.0, 2.0, np.inf):
        grow = lp_norm(tr.snapshot(p.t_end), q) - lp_norm(p.initial, q)
        rows.append((f"lp_growth_p{q:g}", grow, 1e-10, grow <= 1e-10))
    return rows, p.grid


def _verify(run: _Run, suite: str) -> int:
    fn = {"operator": _suite_operator, "explicit": _suite_explicit, "green": _suite_green, "diagnostics": _suite_diagnostics}[suite]
    rows, grid = fn(run.cfg)
    run.add(write_csv(run.out / f"verify_{suite}.csv", ("check", "value", "threshold", "passed"), rows))
    ok = all(r[3] for r in rows)
    run.report("suite", suite)
    run.report("passed", ok)
    for name, value, threshold, passed in rows:
        run.report(name, value)
        verdict = "INFO" if threshold != threshold else ("PASS" if passed else "FAIL")
        print(f"{verdict} {name} = {value:.6g}" + ("" if verdict == "INFO" else f" (threshold {threshold:g})"), file=sys.stderr)
    run.finish(grid)
    return 0 if ok else 1


def _verify_operator(run: _Run) -> int:
    grid = run.cfg.grid()
    op = build_operator(run.cfg.op_spec(grid))
    table = op.table()
    cols = list(table)
    rows = np.column_stack([np.asarray(table[c], dtype=float) for c in cols]).tolist()
    run.add(write_csv(run.out / "operator_table.csv", cols, rows))
    run.report("kind", op.kind.value)
    run.report("rows", len(rows))
    run.finish(grid)
    return 0


def run_command(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if isinstance(exc.code, int) else 2
    try:
        text = Path(args.config).read_text(encoding="utf-8")
        cfg = parse_config(text)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "config.txt").write_text(serialize_config(cfg))
        run = _Run(args.command, cfg, out)
        run.add(out / "config.txt")
        if args.command == "solve-parabolic":
            return _solve_parabolic(run)
        if args.command == "solve-elliptic":
            return _solve_elliptic(run)
        if args.command == "sweep-epsilon":
            return _sweep(run, args.elliptic)
        if args.command == "phase-diagram":
            return _phase(run, args.s_steps, args.n_steps)
        if args.command == "verify":
            return _verify(run, args.suite)
        return _verify_operator(run)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (
        ConfigError,
        InvalidParameterError,
        InvalidSpecError,
        InvalidInputError,
        SubcriticalError,
        UnsupportedRegimeError,
        UnsupportedDimensionError,
    ) as exc:
        print(f"error: {exc}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return 2
    except (InconclusiveError, StepFailure) as exc:
        print(f"inconclusive: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run_command())


if __name__ == "__main__":
    main()
