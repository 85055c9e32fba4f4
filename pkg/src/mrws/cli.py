"""Command-line surface.

Exit codes: 0 success (all contracts of the selected mode hold), 2 config
error, 3 solver non-convergence, 4 property violation.  Errors are reported
as one JSON object on stderr; results go to stdout and, for solve/evolve,
to CSV/JSON files in the output directory.  Runs are deterministic given the
config and seed; `--threads` (or MRWS_THREADS) only parallelizes block
evaluation and never changes results.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import runtime
from .analysis import (
    build_counterexample,
    counterexample_truncated_hub_value,
    lm_infinity_norm,
    poincare_p2,
    poincare_probe,
)
from .calculus import (
    Field,
    check_greens_identities,
    m_divergence,
    neumann_flux,
    smoothed_ramp,
)
from .config import (
    dump_json,
    load_scenario,
    write_field_csv,
    write_ledger_csv,
    write_trajectory_csv,
)
from .elliptic import (
    EllipticProblem,
    SolverOptions,
    mass_identity_gap,
    solve_resolvent,
)
from .errors import ConfigError, ConstructionError, MrwsError, SolverError
from .evolution import EvolutionProblem, evolve, mass_ledger
from .leray_lions import make_plaplacian, verify_structure
from .space import check_balance, m_boundary, pair_integral

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SOLVER = 3
EXIT_PROPERTY = 4

_BALANCE_TOL = 1e-14


def _emit_error(kind: str, message: str) -> None:
    sys.stderr.write(json.dumps({"error": kind, "message": message}) + "\n")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mrws",
        description="Nonlocal Neumann diffusion on finite random walk spaces",
    )
    parser.add_argument("--threads", type=int, default=None,
                        help="worker threads for block evaluation (default MRWS_THREADS or 1)")
    sub = parser.add_subparsers(dest="command", required=True)

    p_check = sub.add_parser("check", help="balance report and domain summary")
    p_check.add_argument("--config", help="scenario config (mode: check)")
    p_check.add_argument("--space", help="space file (alternative to --config)")
    p_check.add_argument("--omega", type=int, nargs="+", help="working-set nodes")

    p_solve = sub.add_parser("solve", help="solve one resolvent problem")
    p_solve.add_argument("--config", required=True)
    p_solve.add_argument("--output-dir", default=".")

    p_evolve = sub.add_parser("evolve", help="implicit-Euler evolution")
    p_evolve.add_argument("--config", required=True)
    p_evolve.add_argument("--output-dir", default=".")

    p_poi = sub.add_parser("poincare", help="Poincare constant (exact p=2 or probe)")
    p_poi.add_argument("--config", required=True)
    p_poi.add_argument("--p", type=float, default=2.0)
    p_poi.add_argument("--probe", action="store_true",
                       help="use the ascent probe even for p = 2")
    p_poi.add_argument("--iterations", type=int, default=500)
    p_poi.add_argument("--restarts", type=int, default=20)
    p_poi.add_argument("--seed", type=int, default=None)

    p_cex = sub.add_parser("counterexample", help="truncated star construction")
    p_cex.add_argument("--levels", type=int, required=True)
    p_cex.add_argument("-p", "--p", type=float, default=3.0, dest="p")
    p_cex.add_argument("--verify", action="store_true")

    p_verify = sub.add_parser("verify", help="identity/property suite on a configured instance")
    p_verify.add_argument("--config", required=True)
    p_verify.add_argument("--fields", type=int, default=20,
                          help="random field draws per identity")
    return parser


def _cmd_check(args) -> int:
    if args.config:
        scenario = load_scenario(args.config, "check")
        space, domain = scenario.space, scenario.domain
    else:
        if not args.space or not args.omega:
            raise ConfigError("check needs --config or both --space and --omega")
        from .config import load_space_file

        space = load_space_file(args.space)
        domain = m_boundary(space, args.omega)
    balance = check_balance(space)
    out = {
        "node_count": space.node_count,
        "balance": {
            "max_reversibility_violation": balance.max_reversibility_violation,
            "max_invariance_violation": balance.max_invariance_violation,
        },
        "domain": {
            "omega": domain.omega.tolist(),
            "boundary": domain.boundary.tolist(),
            "closure": domain.closure.tolist(),
            "interior_leak": domain.interior_leak,
        },
    }
    print(dump_json(out))
    ok = (
        balance.max_reversibility_violation <= _BALANCE_TOL
        and balance.max_invariance_violation <= _BALANCE_TOL
    )
    return EXIT_OK if ok else EXIT_PROPERTY


def _cmd_solve(args) -> int:
    scenario = load_scenario(args.config, "solve")
    problem = EllipticProblem(
        space=scenario.space,
        domain=scenario.domain,
        map=scenario.map,
        variant=scenario.variant,
        lam=scenario.lam,
        z=scenario.z,
        flux=scenario.flux,
    )
    report = solve_resolvent(problem, scenario.solver)
    gap = mass_identity_gap(problem, report.u)
    out_dir = Path(args.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_field_csv(out_dir / "solution.csv", report.u, scenario.space)
    report_json = {
        "residual_inf": report.residual_inf,
        "iterations": report.iterations,
        "converged": report.converged,
        "mass_identity_gap": gap,
    }
    (out_dir / "report.json").write_text(dump_json(report_json) + "\n")
    print(dump_json(report_json))
    return EXIT_OK if report.converged else EXIT_SOLVER


def _cmd_evolve(args) -> int:
    scenario = load_scenario(args.config, "evolve")
    problem = EvolutionProblem(
        space=scenario.space,
        domain=scenario.domain,
        map=scenario.map,
        variant=scenario.variant,
        u0=scenario.u0,
        flux=scenario.flux,
        dt=scenario.dt,
        horizon=scenario.horizon,
    )
    trajectory = evolve(problem, scenario.solver)
    ledger = mass_ledger(trajectory, scenario.flux, scenario.space, scenario.domain)
    out_dir = Path(args.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_trajectory_csv(out_dir / "trajectory.csv", trajectory.times, trajectory.fields)
    write_ledger_csv(out_dir / "ledger.csv", ledger)
    print(dump_json({
        "steps": int(trajectory.times.size - 1),
        "final_mass": float(trajectory.masses[-1]),
        "max_drift_gap": ledger.max_gap,
    }))
    return EXIT_OK


def _cmd_poincare(args) -> int:
    scenario = load_scenario(args.config, "poincare")
    if args.p == 2.0 and not args.probe:
        report = poincare_p2(scenario.space, scenario.domain)
    else:
        seed = args.seed if args.seed is not None else scenario.seed
        if seed is None:
            raise ConfigError("the probe is randomized: a seed is required "
                              "(--seed or config \"seed\")")
        report = poincare_probe(
            scenario.space, scenario.domain, args.p,
            iterations=args.iterations, seed=seed, restarts=args.restarts,
        )
    print(dump_json({"p": report.p, "lambda_best": report.lambda_best, "exact": report.exact}))
    return EXIT_OK


def _cmd_counterexample(args) -> int:
    t0 = time.perf_counter()
    space, omega, u, v, flux = build_counterexample(args.levels, args.p)
    domain = m_boundary(space, omega)
    print(f"truncated star: {args.levels} levels, p = {args.p}")
    print(f"{'node':>6} {'u':>24} {'flux':>24}")
    hub = f"{0:>6} {u.value_at(0):>24.16e} {'-':>24}"
    print(hub)
    for i, node in enumerate(domain.boundary):
        print(f"{int(node):>6} {u.value_at(int(node)):>24.16e} {flux.values[i]:>24.16e}")
    if not args.verify:
        return EXIT_OK

    map_ = make_plaplacian(args.p)
    div = m_divergence(space, domain, map_, u)
    interior_residual = abs(-div.values[0] - v.value_at(0)) / (1.0 + abs(v.value_at(0)))
    closed = counterexample_truncated_hub_value(args.levels)
    closed_gap = abs(v.value_at(0) - closed) / (1.0 + abs(closed))
    bres = neumann_flux(space, domain, map_, u, "gl").values - flux.values
    boundary_residual = float(np.max(np.abs(bres) / (1.0 + np.abs(flux.values))))
    norm = lm_infinity_norm(space, domain, flux)
    elapsed = time.perf_counter() - t0
    print(f"boundary residual (rel) : {boundary_residual:.3e}")
    print(f"interior residual (rel) : {interior_residual:.3e}")
    print(f"closed-form hub gap     : {closed_gap:.3e}")
    print(f"flux-to-mass sup norm   : {norm:.6e}")
    print(f"elapsed                 : {elapsed:.3f} s")
    ok = boundary_residual <= 1e-12 and interior_residual <= 1e-12 and closed_gap <= 1e-12
    print("verification            :", "PASS" if ok else "FAIL")
    return EXIT_OK if ok else EXIT_PROPERTY


def _random_closure_field(rng, domain) -> Field:
    return Field(domain.closure, rng.uniform(-1.0, 1.0, domain.closure.size))


def _cmd_verify(args) -> int:
    scenario = load_scenario(args.config, "verify")
    space, domain = scenario.space, scenario.domain
    map_, variant = scenario.map, scenario.variant
    rng = np.random.default_rng(scenario.seed)
    failures = 0

    def report(name: str, ok: bool, detail: str) -> None:
        nonlocal failures
        print(f"{'PASS' if ok else 'FAIL'} {name}: {detail}")
        failures += 0 if ok else 1

    balance = check_balance(space)
    worst = max(balance.max_reversibility_violation, balance.max_invariance_violation)
    report("balance", worst <= _BALANCE_TOL, f"max violation {worst:.3e}")

    structure = verify_structure(map_, space, 2000, rng_seed=scenario.seed)
    report("structure", structure.max_violation() <= 1e-12,
           f"max defect {structure.max_violation():.3e}")

    worst_gap = 0.0
    for _ in range(args.fields):
        A = rng.standard_normal((space.node_count, space.node_count))
        A = A - A.T
        total = pair_integral(space, domain, "Q1", lambda xs, ys: A[xs, ys])
        scale = pair_integral(space, domain, "Q1", lambda xs, ys: np.abs(A[xs, ys]))
        worst_gap = max(worst_gap, abs(total) / (1.0 + scale))
    report("antisymmetric-vanishing", worst_gap <= 1e-12, f"max |integral| {worst_gap:.3e}")

    worst_ibp = worst_div = 0.0
    for _ in range(args.fields):
        u = _random_closure_field(rng, domain)
        w = _random_closure_field(rng, domain)
        ibp, div = check_greens_identities(space, domain, map_, u, w, variant)
        worst_ibp = max(worst_ibp, ibp.abs_gap / (1.0 + abs(ibp.lhs)))
        worst_div = max(worst_div, div.abs_gap / (1.0 + abs(div.lhs)))
    report("integration-by-parts", worst_ibp <= 1e-12, f"max relative gap {worst_ibp:.3e}")
    report("divergence-theorem", worst_div <= 1e-12, f"max relative gap {worst_div:.3e}")

    ramp = smoothed_ramp(1e-3, 1.0)
    worst_pairing = np.inf
    for _ in range(args.fields):
        u1 = _random_closure_field(rng, domain)
        u2 = _random_closure_field(rng, domain)
        d1 = u1.dense(space.node_count)
        d2 = u2.dense(space.node_count)

        def integrand(xs, ys):
            a1 = np.asarray(map_.eval(xs, ys, d1[ys] - d1[xs]))
            a2 = np.asarray(map_.eval(xs, ys, d2[ys] - d2[xs]))
            t = ramp(d1 - d2)
            return (a1 - a2) * (t[ys] - t[xs])

        val = 0.5 * pair_integral(
            space, domain, "Q1" if variant == "gl" else "Q2", integrand
        )
        worst_pairing = min(worst_pairing, val)
    report("monotone-pairing", worst_pairing >= -1e-12,
           f"min pairing {worst_pairing:.3e}")

    if scenario.lam is not None and scenario.z is not None and scenario.flux is not None:
        problem = EllipticProblem(
            space=space, domain=domain, map=map_, variant=variant,
            lam=scenario.lam, z=scenario.z, flux=scenario.flux,
        )
        solve = solve_resolvent(problem, scenario.solver)
        report("resolvent-converged", solve.converged,
               f"residual {solve.residual_inf:.3e} in {solve.iterations} iterations")
        if solve.converged:
            gap = mass_identity_gap(problem, solve.u)
            scale = 1.0 + abs(float(np.dot(scenario.z.values, space.nu[domain.omega])))
            report("mass-identity", gap <= 1e-10 * scale, f"gap {gap:.3e}")
            flux_back = neumann_flux(space, domain, map_, solve.u, variant)
            worst_flux = float(np.max(np.abs(flux_back.values - scenario.flux.values))) \
                if domain.boundary.size else 0.0
            tol = (scenario.solver or SolverOptions()).tol_newton
            fscale = 1.0 + float(np.max(np.abs(scenario.z.values))) + (
                float(np.max(np.abs(scenario.flux.values))) if domain.boundary.size else 0.0
            )
            report("flux-consistency", worst_flux <= 10 * tol * fscale,
                   f"max flux residual {worst_flux:.3e}")

    return EXIT_OK if failures == 0 else EXIT_PROPERTY


_COMMANDS = {
    "check": _cmd_check,
    "solve": _cmd_solve,
    "evolve": _cmd_evolve,
    "poincare": _cmd_poincare,
    "counterexample": _cmd_counterexample,
    "verify": _cmd_verify,
}


def run(argv) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    if args.threads is not None:
        if args.threads < 1:
            _emit_error("config", "--threads must be at least 1")
            return EXIT_CONFIG
        runtime.set_threads(args.threads)
    try:
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        _emit_error("config", str(exc))
        return EXIT_CONFIG
    except ConstructionError as exc:
        _emit_error("config", str(exc))
        return EXIT_CONFIG
    except SolverError as exc:
        _emit_error("solver", str(exc))
        return EXIT_SOLVER
    except MrwsError as exc:
        _emit_error("error", str(exc))
        return EXIT_CONFIG


def main() -> None:
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
