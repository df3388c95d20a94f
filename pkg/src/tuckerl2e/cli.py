"""Command-line front end.

Commands: ``decompose``, ``simulate``, ``sweep`` and ``cv``. Exit codes are 0
on success, 1 on usage or input errors and 2 when the output was written but
the fit did not converge (or a fold/replicate fit failed).
"""
from __future__ import annotations

import argparse
import math
import sys
from dataclasses import replace

import numpy as np

from . import io as tio
from .l2e import DEFAULT_LAMBDA, FitConfig, default_solver, fit, predict
from .optim import CONVERGED
from .rank_select import cross_validate, make_plan
from .sim import (Condition, CorruptionSpec, corrupt, count_of, generate_low_rank,
                  run_grid, write_csv)

EXIT_OK, EXIT_INPUT, EXIT_NOT_CONVERGED = 0, 1, 2

TAU_MAX_PRESETS = {"default": 50.0, "feature-extraction": 20.0}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad flags; 2 is reserved for non-convergence here
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, f"{self.prog}: error: {message}\n")


def parse_rank(text: str, order: int | None = None) -> tuple:
    """``"3,2,2"`` -> (3, 2, 2); a single ``"3"`` repeats over ``order`` modes."""
    try:
        rank = tuple(int(t) for t in text.split(","))
    except ValueError:
        raise UsageError(f"cannot parse rank {text!r}") from None
    if len(rank) == 1 and order is not None:
        rank = rank * order
    return rank


def parse_rank_list(text: str, order: int | None = None) -> list:
    return [parse_rank(t.strip(), order) for t in text.split(";") if t.strip()]


def parse_floats(text: str) -> list:
    try:
        return [float(t) for t in text.split(",")]
    except ValueError:
        raise UsageError(f"cannot parse number list {text!r}") from None


def parse_ints(text: str) -> list:
    try:
        return [int(t) for t in text.split(",")]
    except ValueError:
        raise UsageError(f"cannot parse integer list {text!r}") from None


def _fit_config(args, rank) -> FitConfig:
    tau_max = args.eta_max if args.eta_max is not None else TAU_MAX_PRESETS[args.preset]
    if not tau_max > 0:
        raise UsageError("--eta-max must be positive (it is the precision bound tau_max)")
    solver = replace(default_solver(), max_iters=args.max_iter)
    return FitConfig(rank, eta_max=math.log(tau_max), lam=args.lam, init=args.init,
                     solver=solver)


def _add_fit_flags(p, seed_help):
    p.add_argument("--eta-max", type=float, default=None, metavar="TAU_MAX",
                   help="upper bound on the precision tau; eta_max = ln(TAU_MAX) "
                        "(default from --preset: 50)")
    p.add_argument("--preset", choices=sorted(TAU_MAX_PRESETS), default="default",
                   help="default: TAU_MAX 50; feature-extraction: TAU_MAX 20")
    p.add_argument("--lambda", dest="lam", type=float, default=DEFAULT_LAMBDA,
                   help="ridge weight on the low-rank tensor (default 1e-8)")
    p.add_argument("--init", choices=("hosvd", "hooi"), default="hosvd")
    p.add_argument("--max-iter", type=int, default=default_solver().max_iters,
                   help="quasi-Newton iteration cap (default %(default)s)")
    p.add_argument("--seed", type=int, default=0, help=seed_help)


def cmd_decompose(args) -> int:
    data = tio.read_tensor(args.input)
    cfg = _fit_config(args, parse_rank(args.rank, len(data.shape)))
    model = fit(data, cfg)
    res = model.result
    tio.write_tensor(f"{args.out}.Lhat", predict(model))
    tio.write_model(f"{args.out}.model", model)
    tio.write_meta(f"{args.out}.meta", {
        "status": res.status,
        "iterations": res.iterations,
        "evaluations": res.n_evals,
        "objective": float(res.f_star),
        "projected_grad_norm": float(res.projected_grad_norm),
        "eta_star": float(model.eta),
        "tau_star": float(model.tau),
        "scale": float(model.scale),
        "seed": args.seed,
    })
    print(f"{res.status} after {res.iterations} iterations; objective {res.f_star!r}; "
          f"tau* {model.tau:.6g}")
    return EXIT_OK if res.status == CONVERGED else EXIT_NOT_CONVERGED


def cmd_simulate(args) -> int:
    dims = tuple(parse_ints(args.dims))
    rank = int(args.rank) if args.model == "cp" else parse_rank(args.rank, len(dims))
    seeds = np.random.SeedSequence(args.seed).generate_state(2, dtype=np.uint32)
    L, truth = generate_low_rank(args.model, dims, rank, int(seeds[0]))
    spec = CorruptionSpec(args.delta, args.mult, args.dense_noise, args.noise_ratio,
                          args.rho, int(seeds[1]))
    data, truth = corrupt(truth, spec)
    tio.write_tensor(args.out, data)
    tio.write_tensor(f"{args.out}.L", L)
    with open(f"{args.out}.truth", "w") as fh:
        fh.write(f"model {args.model}\n")
        fh.write(f"dims {' '.join(map(str, dims))}\n")
        fh.write(f"rank {rank if args.model == 'cp' else ' '.join(map(str, rank))}\n")
        fh.write(f"seed {args.seed}\n")
        fh.write(f"delta {args.delta!r}\nrho {args.rho!r}\nmult {args.mult!r}\n")
        fh.write(f"dense_noise {int(args.dense_noise)}\n")
        fh.write(f"outlier_count {truth.outliers.size}\n")
        fh.write(f"missing_count {truth.missing.size}\n")
        # linear indices, first index fastest, 0-based
        fh.write("outlier_indices " + " ".join(map(str, truth.outliers)) + "\n")
        fh.write("outlier_values " + " ".join(map(tio.format_value, truth.outlier_values)) + "\n")
        fh.write("missing_indices " + " ".join(map(str, truth.missing)) + "\n")
    print(f"wrote {args.out} ({truth.outliers.size} outliers, {truth.missing.size} missing)")
    return EXIT_OK


SWEEP_HELP = """\
presets (full scale: 50x50x50 tensors, 50 replicates):
  rank-sweep   CP and Tucker; ranks 5,10,..,45; delta 0.1 and 0.25; rho 0.2;
               with and without dense noise; fit at the true rank
  phase-grid   CP and Tucker; ranks 25,27,..,45; delta 0,0.05,..,0.5; rho 0
  misspec      delta 0.25, fit ranks 5,10,..,45 (cubic) for true CP rank 15,
               Tucker rank (30,10,5) and Tucker rank (40,40,40)

desk scale (default) reductions:
  rank-sweep   30x30x30, ranks 3,6,9, 10 replicates (other factors as above)
  phase-grid   20x20x20, ranks 10,12,..,18, delta 0,0.1,..,0.5, 5 replicates
  misspec      20x20x20, true CP rank 3 and Tucker rank (6,2,1), fit ranks
               1..6, 10 replicates
  custom       a single grid from --model/--dims/--ranks/--fit-ranks/--deltas/
               --rhos/--dense-noise/--replicates

output: CSV with header
  model,dims,true_rank,fit_rank,delta,rho,dense_noise,replicate,seed,
  relative_error,eta_star,wall_ms,status
"""


def _cube(r, N=3):
    return (r,) * N


def preset_conditions(preset: str, scale: str):
    """``(conditions, replicates)`` for a named sweep preset."""
    full = scale == "full"
    conds = []
    if preset == "rank-sweep":
        dims = (50, 50, 50) if full else (30, 30, 30)
        ranks = range(5, 50, 5) if full else (3, 6, 9)
        for model in ("cp", "tucker"):
            for noise in (False, True):
                for delta in (0.1, 0.25):
                    for r in ranks:
                        true = r if model == "cp" else _cube(r)
                        conds.append(Condition(model, dims, true, _cube(r), delta, 0.2, noise))
        return conds, 50 if full else 10
    if preset == "phase-grid":
        dims = (50, 50, 50) if full else (20, 20, 20)
        ranks = range(25, 46, 2) if full else range(10, 19, 2)
        deltas = [round(0.05 * k, 2) for k in range(11)] if full else \
            [round(0.1 * k, 1) for k in range(6)]
        for model in ("cp", "tucker"):
            for r in ranks:
                true = r if model == "cp" else _cube(r)
                for d in deltas:
                    conds.append(Condition(model, dims, true, _cube(r), d, 0.0, False))
        return conds, 50 if full else 5
    if preset == "misspec":
        if full:
            dims, truths, fits = (50, 50, 50), [("cp", 15), ("tucker", (30, 10, 5)),
                                                ("tucker", (40, 40, 40))], range(5, 50, 5)
        else:
            dims, truths, fits = (20, 20, 20), [("cp", 3), ("tucker", (6, 2, 1))], range(1, 7)
        for model, true in truths:
            for r in fits:
                conds.append(Condition(model, dims, true, _cube(r), 0.25, 0.0, False))
        return conds, 50 if full else 10
    raise UsageError(f"unknown preset {preset!r}")


def _custom_conditions(args):
    if not args.dims or not args.ranks:
        raise UsageError("custom preset needs --dims and --ranks")
    dims = tuple(parse_ints(args.dims))
    N = len(dims)
    if args.model == "cp":
        trues = [int(r[0]) for r in parse_rank_list(args.ranks)]
    else:
        trues = parse_rank_list(args.ranks, N)
    fit_ranks = parse_rank_list(args.fit_ranks, N) if args.fit_ranks else None
    conds = []
    for t in trues:
        for fr in fit_ranks or [_cube(t, N) if np.isscalar(t) else t]:
            for d in parse_floats(args.deltas):
                for rho in parse_floats(args.rhos):
                    conds.append(Condition(args.model, dims, t, tuple(fr), d, rho,
                                           args.dense_noise))
    return conds


def cmd_sweep(args) -> int:
    if args.preset == "custom":
        conds, reps = _custom_conditions(args), args.replicates or 1
    else:
        conds, reps = preset_conditions(args.preset, args.scale)
        reps = args.replicates or reps
    rows = run_grid(conds, replicates=reps, seed=args.seed, mult=args.mult, n_jobs=args.jobs)
    if args.out == "-":
        write_csv(rows, sys.stdout)
    else:
        with open(args.out, "w", newline="") as fh:
            write_csv(rows, fh)
    failed = sum(str(r["status"]).startswith("error") for r in rows)
    if failed:
        print(f"{failed} of {len(rows)} fits failed", file=sys.stderr)
    return EXIT_NOT_CONVERGED if failed else EXIT_OK


def cmd_cv(args) -> int:
    data = tio.read_tensor(args.input)
    ranks = parse_rank_list(args.ranks, len(data.shape))
    if not ranks:
        raise UsageError("no candidate ranks given")
    if args.k > data.n_observed:
        raise UsageError(f"--k {args.k} exceeds the {data.n_observed} observed entries")
    plan = make_plan(data, args.k, args.seed)
    cfg = _fit_config(args, ranks[0])
    result = cross_validate(data, ranks, plan, cfg, n_jobs=args.jobs)

    def fmt(r):
        return ",".join(map(str, r))

    lines = ["rank,fold,n_entries,cv_error,status"]
    for rank, k, mae, n, status in result.fold_errors:
        lines.append(f'"{fmt(rank)}",{k},{n},{mae!r},{status}')
    for rank, err in result.scores:
        lines.append(f'"{fmt(rank)}",all,{data.n_observed},{err!r},')
    best = result.best_rank
    lines.append(f"# argmin {fmt(best) if best else 'none'}")
    text = "\n".join(lines) + "\n"
    if args.out == "-":
        sys.stdout.write(text)
    else:
        with open(args.out, "w") as fh:
            fh.write(text)
        print(f"argmin {fmt(best) if best else 'none'}")
    failed = any(mae != mae for _, _, mae, _, _ in result.fold_errors)
    return EXIT_NOT_CONVERGED if failed or best is None else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="tuckerl2e", description="Robust Tucker decomposition (L2 criterion).")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("decompose", help="fit a Tucker-L2E model to a tensor file")
    p.add_argument("input")
    p.add_argument("--rank", required=True, help="r1,r2,...,rN (one value repeats in every mode)")
    _add_fit_flags(p, "recorded for provenance; the fit itself draws no random numbers")
    p.add_argument("--out", required=True, help="output prefix for .Lhat, .model and .meta")
    p.set_defaults(func=cmd_decompose)

    p = sub.add_parser("simulate", help="generate a corrupted low-rank tensor")
    p.add_argument("--model", choices=("cp", "tucker"), required=True)
    p.add_argument("--dims", required=True, help="I1,I2,...,IN")
    p.add_argument("--rank", required=True, help="CP rank r, or Tucker rank r1,...,rN")
    p.add_argument("--delta", type=float, default=0.0, help="outlier fraction")
    p.add_argument("--rho", type=float, default=0.0, help="missing fraction")
    p.add_argument("--dense-noise", action="store_true")
    p.add_argument("--noise-ratio", type=float, default=0.1,
                   help="||E||_F / ||L||_F when --dense-noise is set")
    p.add_argument("--mult", type=float, default=5.0, help="outlier bound M = mult * std(L)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True,
                   help="tensor file; also writes OUT.L (clean tensor) and OUT.truth")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("sweep", help="run a simulation grid and write CSV",
                       epilog=SWEEP_HELP, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--preset", choices=("rank-sweep", "phase-grid", "misspec", "custom"),
                   required=True)
    p.add_argument("--scale", choices=("desk", "full"), default="desk")
    p.add_argument("--model", choices=("cp", "tucker"), default="tucker")
    p.add_argument("--dims", help="custom: I1,...,IN")
    p.add_argument("--ranks", help="custom: true ranks, ';'-separated")
    p.add_argument("--fit-ranks", help="custom: fitted ranks (default: the true rank)")
    p.add_argument("--deltas", default="0.1", help="custom: outlier fractions")
    p.add_argument("--rhos", default="0", help="custom: missing fractions")
    p.add_argument("--dense-noise", action="store_true", help="custom: add dense noise")
    p.add_argument("--replicates", type=int, default=None)
    p.add_argument("--mult", type=float, default=5.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out", default="-", help="CSV path ('-' for stdout)")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("cv", help="choose the rank by K-fold cross-validation")
    p.add_argument("input")
    p.add_argument("--ranks", required=True, help='candidates, e.g. "2,2,2;3,3,3"')
    p.add_argument("--k", type=int, default=10)
    _add_fit_flags(p, "seed of the random fold assignment")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out", default="-", help="CSV path ('-' for stdout)")
    p.set_defaults(func=cmd_cv)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, ValueError, OSError) as exc:
        # FormatError is a ValueError and already carries the line number
        print(f"tuckerl2e {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
