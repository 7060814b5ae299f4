"""Command-line front end: generate, reduce, compare, eval.

Exit codes: 0 on success, 1 on usage errors, 2 on algorithmic aborts
(sample-growth cap, or an optimizer that stagnated at every level without
meeting any). All randomness flows from ``--seed``; everything except
wall-clock fields is bit-reproducible across runs on one platform.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from .bench import (
    COMPARISON_HEADER,
    ComparisonProtocol,
    MSDConfig,
    msd_chain,
    run_comparison,
)
from .core import assemble, load_system, save_system
from .freq import ErrorFunction, write_response_csv
from .greedy import greedy_init, theta_from_init
from .optimizer import MinimizeOptions
from .optimizer import reduce as run_reduce
from .sampling import SampleSet, write_samples_csv

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_ABORT = 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _read_config(path: str | None) -> dict:
    if not path:
        return {}
    values = {}
    for line in Path(path).read_text().splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, val = line.partition("=")
        if not sep:
            raise ValueError(f"malformed config line: {line!r}")
        values[key.strip().replace("-", "_")] = val.strip()
    return values


def _merge(args: argparse.Namespace, defaults: dict) -> argparse.Namespace:
    """Fill None-valued args from the config file, then from defaults."""
    config = _read_config(getattr(args, "config", None))
    for key, fallback in defaults.items():
        if getattr(args, key, None) is None:
            if key in config:
                caster = type(fallback) if fallback is not None else str
                setattr(args, key, caster(config[key]))
            else:
                setattr(args, key, fallback)
    return args


def _threads(args) -> int:
    if getattr(args, "threads", None):
        return int(args.threads)
    env = os.environ.get("PHRED_THREADS")
    if env:
        return int(env)
    return os.cpu_count() or 1


def _parse_r_list(spec: str) -> list[int]:
    if ":" in spec:
        parts = [int(p) for p in spec.split(":")]
        if len(parts) == 2:
            lo, hi, step = parts[0], parts[1], 2
        elif len(parts) == 3:
            lo, hi, step = parts
        else:
            raise ValueError(f"bad r range {spec!r}; use lo:hi[:step]")
        values = list(range(lo, hi + 1, step))
    else:
        values = [int(p) for p in spec.split(",") if p]
    if not values:
        raise ValueError(f"empty r list {spec!r}")
    for r in values:
        if r < 2 or r % 2 != 0:
            raise ValueError(f"reduced orders must be even and >= 2, got {r}")
    return values


def _check_csv_header(path: Path, expected: str) -> None:
    with open(path) as fh:
        head = fh.readline().strip()
    if head != expected:
        raise ValueError(f"{path}: header {head!r} != expected {expected!r}")


def _check_report_json(path: Path) -> None:
    with open(path) as fh:
        doc = json.load(fh)
    for key in ("iterations", "final_gamma", "theta_len"):
        if key not in doc:
            raise ValueError(f"{path}: missing field {key!r}")
    for rec in doc["iterations"]:
        for key in ("gamma", "n_samples", "loss", "opt_iters", "seconds"):
            if key not in rec:
                raise ValueError(f"{path}: iteration missing field {key!r}")


# -- commands ---------------------------------------------------------------

GENERATE_DEFAULTS = dict(masses=50, inputs=2, mass=4.0, stiffness=4.0, damping=1.0)


def cmd_generate(args) -> int:
    _merge(args, GENERATE_DEFAULTS)
    cfg = MSDConfig(
        n_masses=args.masses, mass=args.mass, stiffness=args.stiffness,
        damping=args.damping, m_inputs=args.inputs,
    )
    save_system(msd_chain(cfg), args.out)
    return EXIT_OK


REDUCE_DEFAULTS = dict(
    gamma_max=0.5, tau_b=0.1, grid_lo=1e-8, grid_hi=1e5, n_grid=2000,
    fixed_samples=0, max_bisect=30, max_samples=100_000, plot_grid=500,
    opt_maxiter=2000, seed=0,
)


def _level_recorder(out_dir: Path, fom, fom_cache, plot_omegas, threads):
    fom_sig = ErrorFunction(fom, None, cache=fom_cache,
                            threads=threads).errors_at(plot_omegas)

    def record(level, gamma, samples, theta, result):
        rom = assemble(theta)
        err = ErrorFunction(fom, rom, cache=fom_cache, threads=threads)
        rom_sig = np.linalg.svd(err.rom_responses(plot_omegas),
                                compute_uv=False)[:, 0]
        err_sig = err.errors_at(plot_omegas)
        with open(out_dir / f"level_{level:02d}_curves.csv", "w") as fh:
            fh.write("omega,sigma_fom,sigma_rom,sigma_err\n")
            for w, sf, sr, se in zip(plot_omegas, fom_sig, rom_sig, err_sig):
                fh.write(f"{float(w)!r},{float(sf)!r},{float(sr)!r},{float(se)!r}\n")
        write_samples_csv(out_dir / f"level_{level:02d}_samples.csv", samples)

    return record


def cmd_reduce(args) -> int:
    _merge(args, REDUCE_DEFAULTS)
    if args.r < 2 or args.r % 2 != 0:
        raise ValueError(f"--r must be even and >= 2, got {args.r}")
    threads = _threads(args)
    fom = load_system(args.system)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    fom_cache: dict = {}
    rom0, points = greedy_init(
        fom, args.r, grid_lo=args.grid_lo, grid_hi=args.grid_hi,
        n_grid=args.n_grid, fom_cache=fom_cache, threads=threads,
    )
    theta0 = theta_from_init(rom0)
    if args.fixed_samples > 0:
        samples0 = SampleSet.log_spaced(args.grid_lo, args.grid_hi,
                                        args.fixed_samples)
        adapt = False
    else:
        decades = 10.0 ** np.arange(np.log10(args.grid_lo),
                                    np.log10(args.grid_hi) + 0.5)
        samples0 = SampleSet(np.concatenate([decades, points]))
        adapt = True
    plot_omegas = np.logspace(np.log10(args.grid_lo), np.log10(args.grid_hi),
                              args.plot_grid)
    recorder = _level_recorder(out_dir, fom, fom_cache, plot_omegas, threads)
    options = MinimizeOptions(maxiter=args.opt_maxiter)
    theta, report = run_reduce(
        fom, theta0, samples0, args.gamma_max, args.tau_b, adapt=adapt,
        max_bisect=args.max_bisect, max_samples=args.max_samples,
        options=options, hinf_band=(args.grid_lo, args.grid_hi),
        hinf_grid=args.n_grid, fom_cache=fom_cache, threads=threads,
        level_callback=recorder, seed=args.seed,
    )
    save_system(assemble(theta), out_dir / "rom")
    report.save_json(out_dir / "report.json")
    report.save_csv(out_dir / "report.csv")
    write_samples_csv(out_dir / "samples.csv", report.final_samples)
    err = ErrorFunction(fom, assemble(theta), cache=fom_cache, threads=threads)
    write_response_csv(out_dir / "response.csv", plot_omegas,
                       err.errors_at(plot_omegas))
    _check_report_json(out_dir / "report.json")
    _check_csv_header(out_dir / "report.csv", "gamma,n_samples,loss,opt_iters,seconds")
    _check_csv_header(out_dir / "samples.csv", "omega")
    _check_csv_header(out_dir / "response.csv", "omega,sigma_max")
    if report.growth_aborted:
        return EXIT_ABORT
    met_any = any(rec.loss == 0.0 for rec in report.iterations)
    if report.iterations and not met_any and all(
        rec.stagnated for rec in report.iterations
    ):
        return EXIT_ABORT
    return EXIT_OK


COMPARE_DEFAULTS = dict(
    gamma_max=0.5, tau_b=0.1, grid_lo=1e-8, grid_hi=1e5, n_grid=2000,
    fixed_samples=800, verify_grid=100_000, repeats=3, max_bisect=30,
    max_samples=100_000, opt_maxiter=2000, seed=0,
)


def cmd_compare(args) -> int:
    _merge(args, COMPARE_DEFAULTS)
    r_list = _parse_r_list(args.r)
    threads = _threads(args)
    fom = load_system(args.system)
    protocol = ComparisonProtocol(
        gamma_max=args.gamma_max, tau_b=args.tau_b, grid_lo=args.grid_lo,
        grid_hi=args.grid_hi, n_grid=args.n_grid,
        fixed_count=args.fixed_samples, verify_count=args.verify_grid,
        repeats=args.repeats, max_bisect=args.max_bisect,
        max_samples=args.max_samples,
        options=MinimizeOptions(maxiter=args.opt_maxiter),
        threads=threads, seed=args.seed,
    )
    out_dir = Path(args.out)
    result = run_comparison(fom, r_list, protocol, out_dir=out_dir)
    _check_csv_header(out_dir / "comparison.csv", COMPARISON_HEADER)
    for r in r_list:
        _check_report_json(out_dir / "runs" / str(r) / "report.json")
    return EXIT_OK


EVAL_DEFAULTS = dict(grid_lo=1e-8, grid_hi=1e5, n=2000)


def cmd_eval(args) -> int:
    _merge(args, EVAL_DEFAULTS)
    system = load_system(args.system)
    omegas = np.logspace(np.log10(args.grid_lo), np.log10(args.grid_hi), args.n)
    err = ErrorFunction(system, None, threads=_threads(args))
    sig = err.errors_at(omegas)
    responses = err.fom_responses(omegas) if args.entries else None
    write_response_csv(args.out, omegas, sig, responses=responses)
    return EXIT_OK


def build_parser() -> _Parser:
    parser = _Parser(prog="phred", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", parents=[], help="write a chain benchmark system")
    p.add_argument("--masses", type=int, default=None)
    p.add_argument("--inputs", type=int, default=None)
    p.add_argument("--mass", type=float, default=None)
    p.add_argument("--stiffness", type=float, default=None)
    p.add_argument("--damping", type=float, default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--config", default=None)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("reduce", help="fit a reduced model to a stored system")
    p.add_argument("--system", required=True)
    p.add_argument("--r", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--gamma-max", dest="gamma_max", type=float, default=None)
    p.add_argument("--tau-b", dest="tau_b", type=float, default=None)
    p.add_argument("--grid-lo", dest="grid_lo", type=float, default=None)
    p.add_argument("--grid-hi", dest="grid_hi", type=float, default=None)
    p.add_argument("--n-grid", dest="n_grid", type=int, default=None)
    p.add_argument("--fixed-samples", dest="fixed_samples", type=int, default=None,
                   help="use this many fixed log-spaced samples instead of adaptation")
    p.add_argument("--max-bisect", dest="max_bisect", type=int, default=None)
    p.add_argument("--max-samples", dest="max_samples", type=int, default=None)
    p.add_argument("--plot-grid", dest="plot_grid", type=int, default=None)
    p.add_argument("--opt-maxiter", dest="opt_maxiter", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("--config", default=None)
    p.set_defaults(func=cmd_reduce)

    p = sub.add_parser("compare", help="adaptive-vs-fixed study over orders")
    p.add_argument("--system", required=True)
    p.add_argument("--r", required=True, help="range lo:hi[:step] or comma list")
    p.add_argument("--out", required=True)
    p.add_argument("--gamma-max", dest="gamma_max", type=float, default=None)
    p.add_argument("--tau-b", dest="tau_b", type=float, default=None)
    p.add_argument("--grid-lo", dest="grid_lo", type=float, default=None)
    p.add_argument("--grid-hi", dest="grid_hi", type=float, default=None)
    p.add_argument("--n-grid", dest="n_grid", type=int, default=None)
    p.add_argument("--fixed-samples", dest="fixed_samples", type=int, default=None)
    p.add_argument("--verify-grid", dest="verify_grid", type=int, default=None)
    p.add_argument("--repeats", type=int, default=None)
    p.add_argument("--max-bisect", dest="max_bisect", type=int, default=None)
    p.add_argument("--max-samples", dest="max_samples", type=int, default=None)
    p.add_argument("--opt-maxiter", dest="opt_maxiter", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("--config", default=None)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("eval", help="frequency-response dump of a stored system")
    p.add_argument("--system", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--grid-lo", dest="grid_lo", type=float, default=None)
    p.add_argument("--grid-hi", dest="grid_hi", type=float, default=None)
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--entries", action="store_true")
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("--config", default=None)
    p.set_defaults(func=cmd_eval)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"phred: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
