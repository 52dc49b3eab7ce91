"""Command-line entry point: ``cdt-ising <command> [flags]``.

Output schemas (header rows are fixed per command):

  region        beta,curve_I,curve_II,curve_III,curve_IV,f1,f2
  curves        beta,lower_curve,psi,linear_upper,f1,f2,beta_star_1,beta_star_2
  classify      beta,mu,verdict
  free-energy   mu,lower_bound,upper_bound,phi_N_truncated,verdict
  pure          mu,N,K,log_Z,log_Z_over_N,ln_Lambda,converged
  mcmc          series CSV step,energy,n_t,mean_slice,magnetization,acc_geom,acc_spin
                plus manifest.json
  verify        JSON report (schema cdt-ising-verify/1)

Exit codes: 0 ok, 1 failed identity, 2 bad arguments, 3 refused divergent point.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
import tempfile
from concurrent.futures import ProcessPoolExecutor
from typing import Callable, Iterable, Sequence

from . import __version__
from . import bounds, mcmc, rcfk, transfer
from .ising import xi_truncated
from .triangulation import enumerate_torus_triangulations

EXIT_OK = 0
EXIT_IDENTITY = 1
EXIT_ARGS = 2
EXIT_DIVERGENT = 3

THREADS_ENV = "CDT_ISING_THREADS"

REGION_COLUMNS = ("beta", "curve_I", "curve_II", "curve_III", "curve_IV", "f1", "f2")
CLASSIFY_COLUMNS = ("beta", "mu", "verdict")
FREE_ENERGY_COLUMNS = ("mu", "lower_bound", "upper_bound", "phi_N_truncated", "verdict")
PURE_COLUMNS = ("mu", "N", "K", "log_Z", "log_Z_over_N", "ln_Lambda", "converged")

CONDITIONING_NOTE = (
    "samples target the Gibbs measure conditioned on every slice size <= K_cap; "
    "outside the unique-Gibbs region this conditioned measure is a finite surrogate"
)


class UsageError(ValueError):
    pass


def parse_range(text: str) -> list[float]:
    """``a:b:step`` inclusive of both ends, or a single number."""
    parts = text.split(":")
    try:
        nums = [float(p) for p in parts]
    except ValueError as exc:
        raise UsageError(f"bad range {text!r}; expected a:b:step") from exc
    if len(nums) == 1:
        return nums
    if len(nums) != 3:
        raise UsageError(f"bad range {text!r}; expected a:b:step")
    a, b, step = nums
    if not step > 0:
        raise UsageError("range step must be positive")
    if b < a:
        raise UsageError("range end must not be below its start")
    count = int(math.floor((b - a) / step + 1e-9)) + 1
    return [round(a + k * step, 12) for k in range(count)]


def worker_count() -> int:
    raw = os.environ.get(THREADS_ENV, "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise UsageError(f"{THREADS_ENV} must be an integer, got {raw!r}")


def ordered_map(fn: Callable, items: Sequence) -> list:
    """Map preserving order, across processes when CDT_ISING_THREADS > 1."""
    workers = min(worker_count(), len(items))
    if workers <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def write_atomic(path: str, data: str) -> None:
    """Write via a temporary file in the target directory, then rename."""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _cell(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return v


def render(rows: Iterable[dict], columns: Sequence[str], fmt: str) -> str:
    rows = list(rows)
    if fmt == "json":
        clean = [{c: _json_value(r.get(c)) for c in columns} for r in rows]
        return json.dumps({"columns": list(columns), "rows": clean}, indent=2) + "\n"
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_cell(r.get(c)) for c in columns])
    return buf.getvalue()


def _json_value(v):
    if isinstance(v, float) and not math.isfinite(v):
        return str(v)
    return v


def emit(text: str, out: str | None) -> None:
    if out:
        write_atomic(out, text)
    else:
        sys.stdout.write(text)


def _region_row(beta: float) -> dict:
    row = {
        "beta": beta,
        "curve_II": bounds.linear_upper(beta),
        "curve_III": 1.5 * math.log(2.0 * math.sinh(beta)) + transfer.LN2,
        "curve_IV": 2.0 * transfer.LN2,
        "f1": bounds.f1(beta),
    }
    try:
        p = bounds.psi(beta)
        row["curve_I"] = p
        row["f2"] = min(p - transfer.LN2, 1.5 * beta + transfer.LN2)
    except (bounds.BracketError, bounds.PoleError, transfer.DomainError) as exc:
        row["curve_I"] = math.nan
        row["f2"] = math.nan
        print(f"beta={beta}: psi failed: {exc}", file=sys.stderr)
    return row


def _require_positive(betas: Sequence[float]) -> None:
    if any(not b > 0 for b in betas):
        raise UsageError("beta must be > 0")


def cmd_region(args) -> int:
    betas = _betas(args)
    _require_positive(betas)
    rows = ordered_map(_region_row, betas)
    print(f"beta_star_1={bounds.beta_star_1()!r}", file=sys.stderr)
    print(f"beta_star_2={bounds.beta_star_2()!r}", file=sys.stderr)
    emit(render(rows, REGION_COLUMNS, args.format), args.out)
    return EXIT_OK


def cmd_curves(args) -> int:
    betas = _betas(args)
    _require_positive(betas)
    emit(render(bounds.curve_rows(betas), bounds.BOUNDS_COLUMNS, args.format), args.out)
    return EXIT_OK


def _classify_row(point) -> dict:
    beta, mu = point
    return {"beta": beta, "mu": mu, "verdict": bounds.classify(beta, mu).verdict.value}


def cmd_classify(args) -> int:
    betas, mus = _betas(args), _mus(args)
    _require_positive(betas)
    rows = ordered_map(_classify_row, [(b, m) for b in betas for m in mus])
    emit(render(rows, CLASSIFY_COLUMNS, args.format), args.out)
    return EXIT_OK


def free_energy_row(beta: float, mu: float, N: int, K: int) -> dict:
    verdict = bounds.classify(beta, mu).verdict
    fb = bounds.free_energy_bounds(beta, mu)
    if verdict is bounds.Verdict.DIVERGENT:
        phi = math.inf
    else:
        phi = xi_truncated(N, beta, mu, K, log=True) / N
    return {"mu": mu, "lower_bound": fb.lower, "upper_bound": fb.upper,
            "phi_N_truncated": phi, "verdict": verdict.value}


def cmd_free_energy(args) -> int:
    if args.beta is None:
        raise UsageError("free-energy needs --beta")
    beta = args.beta
    _require_positive([beta])
    rows = [free_energy_row(beta, mu, args.N, args.K) for mu in _mus(args)]
    emit(render(rows, FREE_ENERGY_COLUMNS, args.format), args.out)
    return EXIT_OK


def cmd_pure(args) -> int:
    rows = [transfer.z_pure(args.N, mu, args.K).row() for mu in _mus(args)]
    emit(render(rows, PURE_COLUMNS, args.format), args.out)
    return EXIT_OK


def cmd_verify(args) -> int:
    from .verify import report, run_checks

    rep = report(run_checks(inject_fault=args.inject_fault))
    emit(json.dumps(rep, indent=2, default=_json_value) + "\n", args.out)
    for r in rep["checks"]:
        if not r["passed"]:
            print(f"FAILED {r['name']}: residual {r['residual']} > {r['tolerance']} ({r['detail']})",
                  file=sys.stderr)
    return EXIT_OK if rep["passed"] else EXIT_IDENTITY


def cmd_mcmc(args) -> int:
    if args.beta is None or args.mu is None:
        raise UsageError("mcmc needs --beta and --mu")
    verdict = bounds.classify(args.beta, args.mu).verdict if args.beta > 0 else None
    try:
        series = mcmc.run(args.N, args.K, args.beta, args.mu, args.steps, args.seed,
                          thin=args.thin, force=args.force_band)
    except mcmc.DivergentRegionError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_DIVERGENT
    out_dir = args.out or "."
    series_path = os.path.join(out_dir, "series.csv")
    manifest_path = os.path.join(out_dir, "manifest.json")
    write_atomic(series_path, render(series.rows(), mcmc.SERIES_COLUMNS, "csv"))
    manifest = {
        "command": "mcmc",
        "version": __version__,
        "N": args.N,
        "K_cap": args.K,
        "beta": args.beta,
        "mu": args.mu,
        "steps": args.steps,
        "thin": args.thin,
        "seed": args.seed,
        "force_band": args.force_band,
        "verdict": None if verdict is None else verdict.value,
        "burn_in_records": series.burn_in,
        "records": len(series),
        "energy_mismatches": series.energy_mismatches,
        "conditioning": CONDITIONING_NOTE,
        "series": os.path.basename(series_path),
    }
    write_atomic(manifest_path, json.dumps(manifest, indent=2) + "\n")
    return EXIT_OK


def cmd_triangulations(args) -> int:
    blocks = [t.to_text(args.K) for t in enumerate_torus_triangulations(args.N, args.K)]
    emit("\n".join(blocks), args.out)
    return EXIT_OK


def cmd_links(args) -> int:
    if args.beta is None:
        raise UsageError("links needs --beta")
    ts = enumerate_torus_triangulations(args.N, args.K)
    for idx, t in enumerate(ts):
        if idx == args.index:
            break
    else:
        raise UsageError(f"--index {args.index} is past the end of the enumeration")
    cfg = rcfk.sample_links(t.dual_graph(), args.beta, args.seed, method=args.method)
    emit(t.to_text(args.K) + cfg.to_text(), args.out)
    return EXIT_OK


def _betas(args) -> list[float]:
    if args.beta_range:
        return parse_range(args.beta_range)
    if args.beta is not None:
        return [args.beta]
    raise UsageError("need --beta or --beta-range")


def _mus(args) -> list[float]:
    if args.mu_range:
        return parse_range(args.mu_range)
    if args.mu is not None:
        return [args.mu]
    raise UsageError("need --mu or --mu-range")


def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--beta", type=float)
    common.add_argument("--mu", type=float)
    common.add_argument("--beta-range", help="a:b:step, inclusive")
    common.add_argument("--mu-range", help="a:b:step, inclusive")
    common.add_argument("--N", type=_positive_int, default=4)
    common.add_argument("--K", type=_positive_int, default=4)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--format", choices=("csv", "json"), default="csv")
    common.add_argument("--out", help="output file (directory for mcmc); stdout if omitted")

    parser = argparse.ArgumentParser(
        prog="cdt-ising", description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, fn, help_text):
        p = sub.add_parser(name, parents=[common], help=help_text, description=help_text)
        p.set_defaults(func=fn)
        return p

    add("region", cmd_region, "bounding curves per beta: " + ",".join(REGION_COLUMNS))
    add("curves", cmd_curves, "bound curves per beta: " + ",".join(bounds.BOUNDS_COLUMNS))
    add("classify", cmd_classify, "verdict per (beta, mu): " + ",".join(CLASSIFY_COLUMNS))
    add("free-energy", cmd_free_energy, "free-energy bounds per mu: " + ",".join(FREE_ENERGY_COLUMNS))
    add("pure", cmd_pure, "truncated pure-CDT partition function per mu: " + ",".join(PURE_COLUMNS))
    p = add("verify", cmd_verify, "cross-validation suite, JSON report")
    p.add_argument("--inject-fault", action="store_true", help="perturb one check to test failure reporting")
    p = add("mcmc", cmd_mcmc, "annealed chain: writes series.csv and manifest.json into --out")
    p.add_argument("--steps", type=_positive_int, default=10_000)
    p.add_argument("--thin", type=_positive_int, default=10)
    p.add_argument("--force-band", action="store_true", help="sample even below the divergence curve")
    add("triangulations", cmd_triangulations, "fixture: every triangulation with N strips, slices <= K")
    p = add("links", cmd_links, "fixture: one FK link sample on the index-th triangulation")
    p.add_argument("--index", type=int, default=0)
    p.add_argument("--method", choices=("bernoulli", "poisson"), default="bernoulli")
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, transfer.DomainError, ValueError) as exc:
        print(f"cdt-ising {args.command}: {exc}", file=sys.stderr)
        return EXIT_ARGS


if __name__ == "__main__":
    sys.exit(main())
