"""Command-line entry point orchestrating the laboratory's experiments.

Subcommands: ground-state, spectral-property, evolve, loglog-fit,
imethod-sweep.  Every run directory receives the resolved configuration
(flat ``key = value`` text), a VERSION file, and the artifacts the subcommand
produces, with no timestamps, so identical configurations reproduce
byte-identical outputs.

Exit codes: 0 success, 1 numeric-target miss, 2 usage error, 3 solver failure.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys

import numpy as np

from . import __version__
from .spectral_core import Grid, SolverError, random_smooth_field
from .ground_state import (
    RadialGrid,
    ground_state_mass,
    profile_mass,
    save_profile,
    solve_ground_state,
)
from .spectral_property import (
    LinearizedOperators,
    constrained_min_rayleigh,
    identity_suite,
)
from .evolution import (
    DiagnosticsSeries,
    EvolveConfig,
    admissibility_report,
    evolve,
    loglog_fit,
)
from . import imethod

EXIT_OK = 0
EXIT_TARGET_MISS = 1
EXIT_USAGE = 2
EXIT_SOLVER = 3


def _write_run_metadata(out_dir, config_dict):
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "VERSION"), "w") as fh:
        fh.write(f"nlslab {__version__}\n")
    with open(os.path.join(out_dir, "config.txt"), "w") as fh:
        for key in sorted(config_dict):
            fh.write(f"{key} = {config_dict[key]}\n")


def read_config_file(path):
    """Flat ``key = value`` text; '#' starts a comment."""
    out = {}
    with open(path) as fh:
        for line in fh:
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"malformed config line: {line!r}")
            key, val = (part.strip() for part in line.split("=", 1))
            out[key] = val
    return out


def _coerce(value, like):
    if isinstance(like, bool):
        return str(value).strip().lower() in ("1", "true", "yes", "on")
    return type(like)(value)


# ----------------------------------------------------------------------
# ground-state
# ----------------------------------------------------------------------

def cmd_ground_state(args):
    grid = RadialGrid(args.d, args.m, args.r_max)
    out_dir = args.out
    methods = ["petviashvili", "shooting"] if args.method == "both" else [args.method]
    profiles = {}
    try:
        for method in methods:
            profiles[method] = solve_ground_state(args.d, grid, method=method)
    except SolverError as err:
        print(f"solver failure: {err}", file=sys.stderr)
        return EXIT_SOLVER

    if out_dir:
        _write_run_metadata(out_dir, vars(args) | {"command": "ground-state"})
    worst = 0.0
    report = {"d": args.d, "m": args.m, "r_max": args.r_max}
    for method, prof in profiles.items():
        q0 = float(prof.values[0])
        mass = profile_mass(prof)
        worst = max(worst, prof.residual)
        print(f"{method}: residual={prof.residual:.3e}  Q(0)~{q0:.6f}  "
              f"mass={mass:.8f}")
        report[method] = {"residual": prof.residual, "Q0": q0, "mass": mass}
        if out_dir:
            save_profile(prof, os.path.join(out_dir, f"Q_{method}.txt"))
    if len(profiles) == 2:
        mp = report["petviashvili"]["mass"]
        ms = report["shooting"]["mass"]
        rel = abs(mp - ms) / mp
        print(f"cross-method mass agreement: {rel:.3e}")
        report["mass_agreement"] = rel
    if out_dir:
        with open(os.path.join(out_dir, "report.json"), "w") as fh:
            json.dump(report, fh, indent=1, sort_keys=True)
            fh.write("\n")
    return EXIT_OK if worst < args.residual_target else EXIT_TARGET_MISS


# ----------------------------------------------------------------------
# spectral-property
# ----------------------------------------------------------------------

def cmd_spectral_property(args):
    grid = RadialGrid(args.d, args.nodes, args.r_max)
    try:
        ops = LinearizedOperators(args.d, grid)
    except SolverError as err:
        print(f"solver failure: {err}", file=sys.stderr)
        return EXIT_SOLVER
    if args.out:
        _write_run_metadata(args.out, vars(args) | {"command": "spectral-property"})

    if args.identity_suite:
        res = identity_suite(args.d, ops=ops)
        for key, val in res.items():
            print(f"identity {key}: residual {val:.3e}")
        if args.out:
            with open(os.path.join(args.out, "identities.json"), "w") as fh:
                json.dump(res, fh, indent=1, sort_keys=True)
                fh.write("\n")
        return EXIT_OK if max(res.values()) < 1e-5 else EXIT_TARGET_MISS

    constraints = None if args.no_constraints else "default"
    try:
        result = constrained_min_rayleigh(
            args.d, ops=ops, kappa=args.kappa, constraints=constraints,
            solver=args.solver, seed=args.seed,
        )
    except SolverError as err:
        print(f"solver failure: {err}", file=sys.stderr)
        return EXIT_SOLVER
    tag = "constrained" if constraints else "unconstrained"
    print(f"{tag} delta_min = {result.delta_min:.8f}  "
          f"(d={args.d}, nodes={args.nodes}, r_max={args.r_max}, kappa={args.kappa}, "
          f"iterations={result.iterations}, residual={result.residual:.2e})")
    for sector, val in result.sector_values.items():
        print(f"  {sector}: {val:.8f}")
    if args.out:
        table = os.path.join(args.out, "report.txt")
        with open(table, "w") as fh:
            fh.write("d n r_max kappa delta_min iterations residual\n")
            fh.write(f"{args.d} {args.nodes} {args.r_max} {args.kappa} "
                     f"{result.delta_min:.10e} {result.iterations} "
                     f"{result.residual:.3e}\n")
        from .ground_state import RadialProfile
        save_profile(
            RadialProfile(grid, result.minimizer1, tag="other"),
            os.path.join(args.out, "minimizer_sector1.txt"),
        )
        save_profile(
            RadialProfile(grid, result.minimizer2, tag="other"),
            os.path.join(args.out, "minimizer_sector2.txt"),
        )
    return EXIT_OK


# ----------------------------------------------------------------------
# evolve / loglog-fit
# ----------------------------------------------------------------------

def cmd_evolve(args):
    overrides = {}
    if args.config:
        overrides.update(read_config_file(args.config))
    defaults = EvolveConfig()
    kwargs = {}
    for f in EvolveConfig.__dataclass_fields__.values():
        cli_val = getattr(args, f.name, None)
        if cli_val is not None:
            kwargs[f.name] = cli_val
        elif f.name in overrides:
            kwargs[f.name] = _coerce(overrides[f.name], getattr(defaults, f.name))
    config = EvolveConfig(**kwargs)
    if config.out_dir:
        _write_run_metadata(config.out_dir, config.to_flat_dict())
        with open(os.path.join(config.out_dir, "admissibility.json"), "w") as fh:
            json.dump(admissibility_report(config.d, config.s, config.beta),
                      fh, indent=1, sort_keys=True)
            fh.write("\n")
    adm = admissibility_report(config.d, config.s, config.beta)
    print(f"admissibility: s > {adm['s_threshold']:.4f} is "
          f"{adm['s_admissible']} (s = {config.s}); "
          f"1/beta = {adm['inv_beta']:.3f} vs bounds "
          f"{adm['inv_beta_lower_bound_local_theory']:.3f} / "
          f"{adm['inv_beta_lower_bound_summation']:.3f}")

    if config.preset == "s-explicit" and args.convergence_table:
        return _s_explicit_convergence(config)

    series = evolve(config)
    flags = series.all_flags()
    gn = series.column("gradnorm")
    print(f"steps recorded: {len(series.rows)}  flags: {sorted(flags)}")
    print(f"gradient growth: {gn[-1] / gn[0]:.4g}")
    if config.out_dir:
        print(f"series written to {os.path.join(config.out_dir, 'series.csv')}")
    else:
        series.to_csv("series.csv")
        print("series written to series.csv")
    return EXIT_OK


def _s_explicit_convergence(config):
    from .ground_state import pseudoconformal_solution
    from dataclasses import replace

    q = solve_ground_state(config.d)
    grid = Grid(config.d, config.n, config.L)
    t0 = config.t0 if config.t0 != 0.0 else -1.0
    t_end = config.t_end if config.t_end < 1e17 else -0.5
    exact = pseudoconformal_solution(t_end, grid, q)
    dts = [4e-3, 2e-3, 1e-3]
    errors = []
    print("dt, l2_error, observed_order")
    prev = None
    for dt in dts:
        run_cfg = replace(config, dt=dt, t0=t0, t_end=t_end, mode="fixed",
                          modulation=False, out_dir="")
        series = evolve(run_cfg, q=q)
        u_end = series.final_field
        err = float(np.sqrt(np.sum(np.abs(u_end.values - exact.values) ** 2)
                            * grid.quad_weight("physical")))
        order = math.log2(prev / err) if prev else float("nan")
        print(f"{dt:.4g}, {err:.6e}, {order:.3f}")
        errors.append(err)
        prev = err
    order = math.log2(errors[-2] / errors[-1])
    if config.out_dir:
        with open(os.path.join(config.out_dir, "convergence.json"), "w") as fh:
            json.dump({"dt": dts, "l2_error": errors, "observed_order": order},
                      fh, indent=1)
            fh.write("\n")
    return EXIT_OK if 1.8 <= order <= 2.2 else EXIT_TARGET_MISS


def cmd_loglog_fit(args):
    series = DiagnosticsSeries.from_csv(args.series)
    try:
        fit = loglog_fit(series, min_samples=args.min_samples)
    except ValueError as err:
        print(f"refusing to fit: {err}", file=sys.stderr)
        return EXIT_TARGET_MISS
    print(fit.to_json())
    if args.out:
        _write_run_metadata(args.out, vars(args) | {"command": "loglog-fit"})
        with open(os.path.join(args.out, "fit.json"), "w") as fh:
            fh.write(fit.to_json())
            fh.write("\n")
    return EXIT_OK


# ----------------------------------------------------------------------
# imethod-sweep
# ----------------------------------------------------------------------

def _parse_n_list(text):
    return [float(tok) for tok in text.split(",") if tok.strip()]


def cmd_imethod_sweep(args):
    rng = np.random.default_rng(args.seed)
    n_list = _parse_n_list(args.N_list)
    if args.kind in ("energy", "momentum"):
        grid = Grid(args.d, args.n, args.L)
        u0 = random_smooth_field(grid, rng,
                                 spectral_decay=args.d / 2.0 + args.s + 0.6)
        if args.kind == "momentum":
            from .spectral_core import apply_galilean_boost
            u0 = apply_galilean_boost(u0, [4.0 * np.pi / grid.L] + [0.0] * (args.d - 1))
        fn = (imethod.energy_increment_sweep if args.kind == "energy"
              else imethod.momentum_increment_sweep)
        sweep = fn(u0, n_list, horizon=args.horizon, s=args.s)
    elif args.kind == "commutator":
        grid = Grid(args.d, args.n, args.L)
        u = random_smooth_field(grid, rng,
                                spectral_decay=args.d / 2.0 + args.s + 0.6)
        sweep = imethod.commutator_norm_sweep(u, n_list, args.s)
    elif args.kind == "norms":
        grid = Grid(args.d, args.n, args.L)
        fields = [random_smooth_field(grid, rng,
                                      spectral_decay=rng.uniform(1.5, 4.0))
                  for _ in range(args.family_size)]
        report = imethod.norm_equivalence_report(fields, N=n_list[0] if n_list else 8.0,
                                                 s=args.s)
        violations = sum(
            1 for key, cap in (("equivalence_lower", 3.0), ("equivalence_upper", 3.0),
                               ("highfreq_bound", 5.0), ("lp_bound_p2", 2.0),
                               ("lp_bound_p4", 2.0))
            if report[key] > cap
        )
        print(json.dumps(report | {"violations": violations}, indent=1, sort_keys=True))
        if args.out:
            _write_run_metadata(args.out, vars(args) | {"command": "imethod-sweep"})
            with open(os.path.join(args.out, "norms.json"), "w") as fh:
                json.dump(report | {"violations": violations}, fh, indent=1, sort_keys=True)
                fh.write("\n")
        return EXIT_OK if violations == 0 else EXIT_TARGET_MISS
    else:
        raise AssertionError(args.kind)

    print(f"axis: {[float(a) for a in sweep.axis]}")
    print(f"measurements: {[f'{v:.4e}' for v in sweep.values]}")
    print(f"fitted slope: {sweep.slope:.4f}  "
          f"(reference exponent {sweep.reference_exponent:+.3f} "
          f"+/- {sweep.reference_band})")
    if args.out:
        _write_run_metadata(args.out, vars(args) | {"command": "imethod-sweep"})
        sweep.to_csv(os.path.join(args.out, "sweep.csv"))
        with open(os.path.join(args.out, "summary.json"), "w") as fh:
            fh.write(sweep.summary_json())
            fh.write("\n")
    return EXIT_OK


# ----------------------------------------------------------------------
# parser
# ----------------------------------------------------------------------

def build_parser():
    parser = argparse.ArgumentParser(
        prog="nlslab",
        description="Pseudospectral laboratory for the focusing mass-critical NLS.",
        epilog="File formats (profiles, snapshots, series CSV, sweep CSV) are "
               "documented in docs/formats.md.",
    )
    parser.add_argument("--version", action="version",
                        version=f"nlslab {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ground-state", help="solve the radial ground state")
    p.add_argument("--d", type=int, required=True, choices=range(1, 6))
    p.add_argument("--method", choices=["petviashvili", "shooting", "both"],
                   default="both")
    p.add_argument("--m", type=int, default=4096, help="radial nodes")
    p.add_argument("--r-max", type=float, default=30.0)
    p.add_argument("--residual-target", type=float, default=1e-8)
    p.add_argument("--out", default="")
    p.set_defaults(func=cmd_ground_state)

    p = sub.add_parser("spectral-property",
                       help="coercivity minimum or the operator identity suite")
    p.add_argument("--d", type=int, default=3, choices=range(1, 6))
    p.add_argument("--kappa", type=float, default=1.9)
    p.add_argument("--nodes", type=int, default=512)
    p.add_argument("--r-max", type=float, default=30.0)
    p.add_argument("--no-constraints", action="store_true")
    p.add_argument("--identity-suite", action="store_true")
    p.add_argument("--solver", choices=["subspace", "dense"], default="subspace")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="")
    p.set_defaults(func=cmd_spectral_property)

    p = sub.add_parser("evolve", help="run a time-evolution scenario")
    p.add_argument("--config", default="", help="flat key=value config file")
    p.add_argument("--convergence-table", action="store_true",
                   help="with --preset s-explicit: dt-halving error table")
    defaults = EvolveConfig()
    for f in EvolveConfig.__dataclass_fields__.values():
        flag = "--" + f.name.replace("_", "-")
        default = getattr(defaults, f.name)
        if isinstance(default, bool):
            p.add_argument(flag, type=lambda v: v.lower() in ("1", "true", "yes"),
                           default=None, metavar="BOOL")
        else:
            p.add_argument(flag, type=type(default), default=None)
    p.set_defaults(func=cmd_evolve)

    p = sub.add_parser("loglog-fit", help="fit blowup rate from a series CSV")
    p.add_argument("series")
    p.add_argument("--min-samples", type=int, default=30)
    p.add_argument("--out", default="")
    p.set_defaults(func=cmd_loglog_fit)

    p = sub.add_parser("imethod-sweep",
                       help="almost-conservation / commutator / norm sweeps")
    p.add_argument("--kind", choices=["energy", "momentum", "commutator", "norms"],
                   required=True)
    p.add_argument("--d", type=int, default=3)
    p.add_argument("--n", type=int, default=64)
    p.add_argument("--L", type=float, default=float(np.pi) / 4.0)
    p.add_argument("--s", type=float, default=0.7)
    p.add_argument("--N-list", default="8,16,32,64")
    p.add_argument("--horizon", type=float, default=0.02)
    p.add_argument("--family-size", type=int, default=32)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="")
    p.set_defaults(func=cmd_imethod_sweep)

    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits with 2 on usage errors and 0 on --help/--version
        return int(exc.code or 0)
    try:
        return args.func(args)
    except SolverError as err:
        print(f"solver failure: {err}", file=sys.stderr)
        return EXIT_SOLVER
    except (ValueError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
