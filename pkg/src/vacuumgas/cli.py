"""Command-line front end: runs, parameter studies, and verification suites.

Exit codes: 0 success, 1 validation error, 2 mid-run abort, 64 usage.
"""

from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

import numpy as np

from .eos import ProfileError
from .harness import (
    RunConfig,
    affine_oracle,
    identity_suite,
    kappa_sweep,
    refinement_study,
)
from .inequalities import TEST_CORPUS, hardy_refinement_history
from .io import write_energy_csv, write_grid_dump
from .solver import SolverAbort

__all__ = ["main", "cli_main"]

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_ABORT = 2
EXIT_USAGE = 64


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def _parse_override(text: str) -> tuple[str, str, object]:
    if "=" not in text or "." not in text.split("=", 1)[0]:
        raise _UsageError(f"override must look like section.key=value, got {text!r}")
    target, raw = text.split("=", 1)
    section, key = target.split(".", 1)
    try:
        value = tomllib.loads(f"v = {raw}")["v"]
    except tomllib.TOMLDecodeError:
        value = raw
    return section, key, value


def _load_config(path: str | None, overrides: list[str]) -> RunConfig:
    data: dict = {}
    if path is not None:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    for text in overrides:
        section, key, value = _parse_override(text)
        if section in ("seed", "threads"):
            raise _UsageError(f"{section} is a top-level key; use --set {section}=...")
        data.setdefault(section, {})[key] = value
    return RunConfig.from_dict(data)


def _out_dir(cfg: RunConfig) -> Path:
    out = Path(cfg.output_dir or "out")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_rows_csv(path: Path, rows: list[dict]) -> None:
    keys: list[str] = []
    for row in rows:
        for k in row:
            if k not in keys:
                keys.append(k)
    with path.open("w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=keys)
        writer.writeheader()
        writer.writerows(rows)


def _cmd_run(args) -> int:
    cfg = _load_config(args.config, args.set or [])
    out = _out_dir(cfg)
    try:
        traj = cfg.execute()
    except SolverAbort as ab:
        print(f"ABORT: {ab}", file=sys.stderr)
        if ab.state is not None:
            from .geometry import snapshot

            snap = snapshot(ab.state)
            write_grid_dump(
                out / "abort_state.vgdump",
                ab.state.domain,
                ab.time,
                {"eta": ab.state.eta, "v": ab.state.v, "J": snap.J},
            )
            print(f"diagnostic dump written to {out / 'abort_state.vgdump'}", file=sys.stderr)
        return EXIT_ABORT
    write_energy_csv(out / "energy.csv", traj.reports)
    if cfg.write_dumps:
        for i, (t, state) in enumerate(traj.samples):
            if i % cfg.dump_stride:
                continue
            from .geometry import snapshot

            snap = snapshot(state)
            write_grid_dump(
                out / f"snapshot_{i:05d}.vgdump",
                state.domain,
                t,
                {"eta": state.eta, "v": state.v, "J": snap.J},
            )
    last = traj.reports[-1]
    print(
        f"run complete: t = {last.t:.6g}, steps = {traj.n_steps}, "
        f"physical energy = {last.physical_energy:.9g}, J in [{last.J_min:.4g}, {last.J_max:.4g}]"
    )
    print(f"energy series written to {out / 'energy.csv'}")
    return EXIT_OK


def _cmd_sweep(args) -> int:
    cfg = _load_config(args.config, args.set or [])
    kappas = None
    if args.kappas:
        kappas = tuple(float(x) for x in args.kappas.split(","))
    result = kappa_sweep(cfg, kappas, workers=args.threads)
    out = _out_dir(cfg)
    _write_rows_csv(out / "kappa_sweep.csv", result.rows)
    for row in result.rows:
        print(row)
    print(f"study table written to {out / 'kappa_sweep.csv'}")
    if any(row.get("aborted") for row in result.rows):
        return EXIT_ABORT
    return EXIT_OK


def _cmd_refine(args) -> int:
    cfg = _load_config(args.config, args.set or [])
    result = refinement_study(cfg, levels=args.levels)
    out = _out_dir(cfg)
    _write_rows_csv(out / "refinement.csv", result.rows)
    for row in result.rows:
        print(row)
    print("fitted orders:", result.fitted_orders)
    print(f"study table written to {out / 'refinement.csv'}")
    return EXIT_OK


def _cmd_identities(args) -> int:
    rows = identity_suite(dim=args.dim, n=args.n)
    ok_all = True
    for name, value, tol, ok in rows:
        ok_all &= ok
        print(f"{'PASS' if ok else 'FAIL'}  {name:28s} value = {value:.3e}  tol = {tol:.3e}")
    return EXIT_OK if ok_all else EXIT_VALIDATION


def _cmd_hardy(args) -> int:
    names = [args.corpus] if args.corpus else sorted(TEST_CORPUS)
    sizes = tuple(int(x) for x in args.sizes.split(",")) if args.sizes else (65, 129, 257)
    for name in names:
        report = hardy_refinement_history(name, args.s, args.gamma, sizes)
        hist = ", ".join(f"{r:.6g}" for r in report.history)
        print(f"{name:10s} s = {args.s}: ratios across refinement [{hist}]")
    return EXIT_OK


def _cmd_xsolve(args) -> int:
    cfg = _load_config(args.config, args.set or [])
    from .solver import initial_state
    from .xsolver import build_xproblem, solve_x

    domain = cfg.build_domain()
    profile = cfg.build_profile(domain)
    state = initial_state(profile, cfg.initial_velocity(domain))
    kappa = cfg.kappa if cfg.kappa > 0 else 1e-2
    problem = build_xproblem(state, profile, kappa)
    dt = cfg.dt if cfg.dt is not None else 1e-3
    sol = solve_x(problem, dt, cfg.t_end)
    print(
        f"x-solve complete: {len(sol.times) - 1} steps, "
        f"||X/sqrt(rho0)|| from {sol.energy_sqrt_rho[0]:.6g} to {sol.energy_sqrt_rho[-1]:.6g}"
    )
    out = _out_dir(cfg)
    write_grid_dump(out / "x_final.vgdump", domain, float(sol.times[-1]), {"X": sol.fields[-1]})
    print(f"final field written to {out / 'x_final.vgdump'}")
    return EXIT_OK


def _cmd_oracle(args) -> int:
    ref = affine_oracle(args.c, args.r0, args.rdot0, args.t_end, args.dt)
    path = Path(args.out)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "r", "rdot"])
        for t, r, rd in zip(ref.times, ref.r, ref.rdot):
            writer.writerow([f"{t:.17g}", f"{r:.17g}", f"{rd:.17g}"])
    print(
        f"reference trajectory written to {path} "
        f"(first-integral drift {ref.first_integral_drift():.3e})"
    )
    return EXIT_OK


def _build_parser() -> _Parser:
    parser = _Parser(prog="vacuumgas", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add_config(p):
        p.add_argument("--config", help="TOML config file")
        p.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE",
                       help="override a config entry (repeatable)")

    p = sub.add_parser("run", help="single simulation")
    add_config(p)
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("sweep-kappa", help="kappa -> 0 Cauchy study")
    add_config(p)
    p.add_argument("--kappas", help="comma-separated decreasing kappa list")
    p.add_argument("--threads", type=int, default=None, help="worker cap (env VACUUMGAS_THREADS)")
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("refine", help="grid refinement study")
    add_config(p)
    p.add_argument("--levels", type=int, default=None)
    p.set_defaults(func=_cmd_refine)

    p = sub.add_parser("check-identities", help="geometry identity suites")
    p.add_argument("--dim", type=int, default=3)
    p.add_argument("--n", type=int, default=12)
    p.set_defaults(func=_cmd_identities)

    p = sub.add_parser("hardy", help="inequality verification harness")
    p.add_argument("--corpus", choices=sorted(TEST_CORPUS), default=None)
    p.add_argument("--s", type=int, default=1)
    p.add_argument("--gamma", type=float, default=2.0)
    p.add_argument("--sizes", help="comma-separated vertical node counts")
    p.set_defaults(func=_cmd_hardy)

    p = sub.add_parser("xsolve", help="standalone degenerate parabolic solve")
    add_config(p)
    p.set_defaults(func=_cmd_xsolve)

    p = sub.add_parser("oracle", help="affine reference trajectory dump")
    p.add_argument("--c", type=float, default=1.0)
    p.add_argument("--r0", type=float, default=1.0)
    p.add_argument("--rdot0", type=float, default=0.0)
    p.add_argument("--t-end", type=float, default=0.2)
    p.add_argument("--dt", type=float, default=1e-3)
    p.add_argument("--out", default="oracle.csv")
    p.set_defaults(func=_cmd_oracle)

    return parser


def cli_main(argv) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as err:
        print(f"usage error: {err}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except _UsageError as err:
        print(f"usage error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except SolverAbort as ab:
        print(f"ABORT: {ab}", file=sys.stderr)
        return EXIT_ABORT
    except (ProfileError, ValueError, FileNotFoundError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_VALIDATION


def main() -> None:
    sys.exit(cli_main(sys.argv[1:]))
