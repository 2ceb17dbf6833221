"""Command-line front end: ``flagcl <command> [options]``.

Every command writes a JSON report (or CSV / plain text where offered) to
stdout or ``--out``.  Exit status is 0 on success, 2 when an identity or
exactness check fails and 1 on usage or input errors.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
import time
from fractions import Fraction

from .enumerator import BudgetExceeded as EnumBudget
from .enumerator import DEFAULT_BUDGET, enumerate_matrix_tuples, enumerate_submodule_flags
from .flags import BoundExceeded, ClassificationBound, enumerate_flag_classes, injective_flag_count, parse_label
from .formulas import (
    Bracket,
    MeasureParams,
    ShapeOffsets,
    measure_P,
    normalization_partial_sums,
    prob_flag_nonsquare_limit,
    theory_mass,
)
from .fq import BlockShape
from .fq import BudgetExceeded as FqBudget
from .fq import (
    count_block_matrices,
    count_block_matrices_brute,
    euler_product_trunc,
    flag_cl_series,
    flag_cl_series_orbits,
    orbit_enumeration,
    zp_flag_series,
)
from .sampler import SAMPLER_BOUND, ExperimentConfig, compare_distributions, run_experiment, uncertified_bound

THREADS_ENV = "FLAGCL_THREADS"
COMMANDS = (
    "simulate", "enumerate", "formula", "count-chains",
    "fq-count", "fq-orbits", "check-identity", "check-normalization",
)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _frac(text: str) -> str:
    return f"{text.numerator}/{text.denominator}" if isinstance(text, Fraction) else str(text)


def parse_rational(text: str) -> Fraction:
    try:
        return Fraction(text.strip())
    except (ValueError, ZeroDivisionError):
        raise argparse.ArgumentTypeError(f"{text!r} is not an exact rational such as 1/2 or 3") from None


def parse_rationals(text: str) -> tuple[Fraction, ...]:
    return tuple(parse_rational(x) for x in text.split(",") if x.strip())


def parse_ints(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(x) for x in text.split(",") if x.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"{text!r} is not a comma-separated list of integers") from None


def parse_n(text: str):
    if text.strip().lower() in ("inf", "infinity", "oo"):
        return None
    try:
        n = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"n must be an integer or 'inf', got {text!r}") from None
    if n < 0:
        raise argparse.ArgumentTypeError("n must be non-negative")
    return n


def read_config(path: str) -> dict[str, str]:
    """``key = value`` lines; ``#`` starts a comment.  Keys are option names."""
    out = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise UsageError(f"{path}:{lineno}: expected key=value, got {raw.strip()!r}")
            out[key.strip().replace("-", "_")] = value.strip()
    return out


def _default_threads() -> int:
    raw = os.environ.get(THREADS_ENV, "1")
    try:
        n = int(raw)
    except ValueError:
        raise UsageError(f"{THREADS_ENV}={raw!r} is not an integer") from None
    if n < 1:
        raise UsageError(f"{THREADS_ENV} must be at least 1")
    return n


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--out", help="write the report here instead of stdout")
    common.add_argument("--config", help="key=value file supplying option defaults")
    common.add_argument("--timing", action="store_true", help="include wall time in the report")

    parser = _Parser(prog="flagcl", description="Cokernel flags of random p-adic matrices.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("simulate", parents=[common], help="Monte Carlo flag frequencies")
    s.add_argument("--p", type=int, required=True)
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--k", type=int, required=True)
    s.add_argument("--samples", type=int, required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--e", type=int, default=None, help="precision (default max(8, 2 + expected top exponent))")
    s.add_argument("--offsets", type=parse_ints, default=None, help="column excesses u_1,...,u_k")
    s.add_argument("--threads", type=int, default=None, help=f"worker threads (default ${THREADS_ENV} or 1)")
    s.add_argument("--max-order", type=int, default=SAMPLER_BOUND.max_order, help="largest |G_k| classified (k >= 2)")
    s.add_argument("--max-work", type=int, default=SAMPLER_BOUND.max_work)
    s.add_argument("--theory-exp", type=int, default=None,
                   help="compare against every class with |G_k| <= p^D (default 3 for k >= 2, e - 1 for k = 1)")
    s.add_argument("--format", choices=("json", "csv"), default="json")

    s = sub.add_parser("enumerate", parents=[common], help="exact tally over all matrix tuples mod p^e")
    s.add_argument("--p", type=int, required=True)
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--k", type=int, required=True)
    s.add_argument("--e", type=int, required=True)
    s.add_argument("--offsets", type=parse_ints, default=None)
    s.add_argument("--budget", type=int, default=DEFAULT_BUDGET)
    s.add_argument("--checkpoint", default=None, help="resumable progress file")
    s.add_argument("--naive", action="store_true", help="do not group the last matrix by span class")
    s.add_argument("--threads", type=int, default=None, help="accepted for symmetry; enumeration is serial")
    s.add_argument("--format", choices=("json", "csv"), default="json")

    s = sub.add_parser("formula", parents=[common], help="closed-form probability of one flag class")
    s.add_argument("--p", type=int, required=True)
    s.add_argument("--n", type=parse_n, required=True, help="matrix size, or 'inf'")
    s.add_argument("--k", type=int, required=True)
    s.add_argument("--flag", required=True, help="class label, e.g. 'k=1;G=1'")
    s.add_argument("--offsets", type=parse_ints, default=None)
    s.add_argument("--t", type=parse_rationals, default=None, help="deformation parameters t_1,...,t_k")
    s.add_argument("--format", choices=("text", "json"), default="text")

    s = sub.add_parser("count-chains", parents=[common], help="lattice chains with a given quotient flag")
    s.add_argument("--p", type=int, required=True)
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--k", type=int, required=True)
    s.add_argument("--flag", default=None, help="class label; omit to count every class up to --max-exp")
    s.add_argument("--max-exp", type=int, default=3)
    s.add_argument("--format", choices=("json",), default="json")

    s = sub.add_parser("fq-count", parents=[common], help="block matrix counts over F_q")
    s.add_argument("--q", type=int, required=True)
    s.add_argument("--shape", type=parse_ints, required=True, help="block sizes n_1,...,n_k")
    s.add_argument("--kind", choices=("nilpotent", "invertible", "all"), default="nilpotent")
    s.add_argument("--brute", action="store_true", help="also count by exhaustion")
    s.add_argument("--format", choices=("json",), default="json")

    s = sub.add_parser("fq-orbits", parents=[common], help="conjugation orbits of nilpotent block matrices")
    s.add_argument("--q", type=int, required=True)
    s.add_argument("--shape", type=parse_ints, required=True)
    s.add_argument("--format", choices=("json",), default="json")

    s = sub.add_parser("check-identity", parents=[common], help="flag Cohen-Lenstra series against the Euler product")
    s.add_argument("--p", type=int, required=True, help="q = p, a prime")
    s.add_argument("--k", type=int, required=True)
    s.add_argument("--degree", type=int, required=True)
    s.add_argument("--orbits", action="store_true", help="add the orbit-stabiliser column (small degrees)")
    s.add_argument("--zp", choices=("auto", "yes", "no"), default="auto",
                   help="add the Z_p-side sum over flag classes (auto: degree <= 3)")
    s.add_argument("--format", choices=("json",), default="json")

    s = sub.add_parser("check-normalization", parents=[common], help="partial sums of the t-deformed measure")
    s.add_argument("--p", type=int, required=True)
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--k", type=int, required=True)
    s.add_argument("--t", type=parse_rationals, default=None, help="t_1,...,t_k (default all 1)")
    s.add_argument("--max-exp", type=int, default=10, help="mass bound: classes with |G_k| <= p^D")
    s.add_argument("--format", choices=("json",), default="json")
    return parser


def _offsets(args) -> ShapeOffsets:
    u = args.offsets if args.offsets is not None else (0,) * args.k
    if len(u) != args.k:
        raise UsageError(f"--offsets lists {len(u)} values but k={args.k}")
    return ShapeOffsets(u)


def _config_echo(args, keys) -> dict:
    out = {}
    for key in keys:
        v = getattr(args, key)
        if isinstance(v, tuple):
            v = ",".join(_frac(x) for x in v)
        elif isinstance(v, Fraction):
            v = _frac(v)
        out[key] = v
    return out


def _theory_classes(p, k, n, D):
    try:
        return enumerate_flag_classes(p, k, D, max_rank=n)
    except BoundExceeded as err:
        raise UsageError(f"theory enumeration up to p^{D}: {err}; lower --theory-exp") from None


def cmd_simulate(args) -> tuple[dict, int]:
    threads = args.threads or _default_threads()
    cfg = ExperimentConfig(
        p=args.p, k=args.k, n=args.n, samples=args.samples, seed=args.seed, e=args.e,
        offsets=args.offsets, workers=threads, bound=ClassificationBound(args.max_order, args.max_work),
    )
    offsets = ShapeOffsets(cfg.offsets)
    dist = run_experiment(cfg)
    D = args.theory_exp if args.theory_exp is not None else (cfg.e - 1 if cfg.k == 1 else 3)
    D = min(D, cfg.e - 1)
    theory = {f.canonical_label: theory_mass(cfg.n, cfg.p, offsets, f) for f in _theory_classes(cfg.p, cfg.k, cfg.n, D)}
    ub = uncertified_bound(cfg.p, cfg.k, cfg.e)
    rep = compare_distributions(dist, theory, uncertified_bound=ub)
    # classes beyond the theory table get no prediction rather than mass zero
    rows = [{
        "label": r.label, "theory": _frac(r.theory) if r.label in theory else None,
        "count": r.count, "total": rep.total,
        "zscore": round(r.zscore, 6) if r.label in theory and math.isfinite(r.zscore) else None,
    } for r in rep.rows]
    report = {
        "command": "simulate",
        "config": {**_config_echo(args, ["p", "n", "k", "samples", "seed"]), "e": cfg.e,
                   "offsets": ",".join(map(str, cfg.offsets)), "max_order": args.max_order,
                   "max_work": args.max_work, "theory_exp": D},
        "seed": cfg.seed,
        "rows": rows,
        "total": dist.total,
        "uncertified_count": dist.uncertified_count,
        "oversize_count": dist.oversize_count,
        "uncertified_mass": rep.uncertified_mass,
        "oversize_mass": rep.oversize_mass,
        "uncertified_bound": ub,
        "chi2": rep.chi2 if rep.chi2 is None or math.isfinite(rep.chi2) else None,
        "dof": rep.dof, "p_value": rep.p_value,
        "warnings": rep.warnings,
    }
    return report, 0


def cmd_enumerate(args) -> tuple[dict, int]:
    offsets = _offsets(args)
    shapes = offsets.shapes(args.n)
    dist = enumerate_matrix_tuples(args.p, args.e, shapes, budget=args.budget,
                                   group_last=not args.naive, checkpoint=args.checkpoint)
    rows, ok = [], True
    for label in sorted(dist.counts):
        f = dist.classes.get(label) or parse_label(label, args.p)
        m = theory_mass(args.n, args.p, offsets, f)
        exact = Fraction(dist.counts[label], dist.total) == m
        ok &= exact
        rows.append({"label": label, "theory": _frac(m), "count": dist.counts[label],
                     "total": dist.total, "zscore": None, "exact": exact})
    report = {
        "command": "enumerate",
        "config": {**_config_echo(args, ["p", "n", "k", "e", "budget"]),
                   "offsets": ",".join(map(str, offsets.u)), "group_last": not args.naive},
        "rows": rows,
        "total": dist.total,
        "uncertified_count": dist.uncertified_count,
        "oversize_count": dist.oversize_count,
        "all_exact": ok,
    }
    return report, 0 if ok else 2


def cmd_formula(args) -> tuple[dict, int]:
    flag = parse_label(args.flag, args.p)
    if flag.k != args.k:
        raise UsageError(f"label has k={flag.k} but --k {args.k}")
    if args.t is not None:
        if len(args.t) != args.k:
            raise UsageError(f"--t lists {len(args.t)} values but k={args.k}")
        if args.offsets is not None and any(args.offsets):
            raise UsageError("--t and non-zero --offsets cannot be combined")
        val = measure_P(MeasureParams(args.p, args.n, args.t), flag)
    elif args.n is None:
        val = prob_flag_nonsquare_limit(args.p, _offsets(args), flag)
    else:
        val = theory_mass(args.n, args.p, _offsets(args), flag)
    report = {
        "command": "formula",
        "config": {"p": args.p, "n": "inf" if args.n is None else args.n, "k": args.k,
                   "flag": args.flag, "offsets": ",".join(map(str, _offsets(args).u)),
                   "t": None if args.t is None else ",".join(_frac(x) for x in args.t)},
        "label": flag.canonical_label,
    }
    if isinstance(val, Bracket):
        report.update(value=_frac(val.value), lower=_frac(val.lower), upper=_frac(val.upper))
    else:
        report["value"] = _frac(val)
    return report, 0


def cmd_count_chains(args) -> tuple[dict, int]:
    rows, ok = [], True
    if args.flag is not None:
        flag = parse_label(args.flag, args.p)
        if flag.k != args.k:
            raise UsageError(f"label has k={flag.k} but --k {args.k}")
        classes = [flag]
        brute = {flag.canonical_label: enumerate_submodule_flags(args.p, args.n, args.k, target=flag)}
    else:
        classes = enumerate_flag_classes(args.p, args.k, args.max_exp)
        brute = enumerate_submodule_flags(args.p, args.n, args.k, max_exp=args.max_exp)
    for f in classes:
        formula = injective_flag_count(args.n, f) if f.rank <= args.n else 0
        got = brute.get(f.canonical_label, 0)
        ok &= got == formula
        rows.append({"label": f.canonical_label, "brute_force": got, "formula": formula, "match": got == formula})
    report = {
        "command": "count-chains",
        "config": _config_echo(args, ["p", "n", "k", "flag", "max_exp"]),
        "rows": rows,
        "all_match": ok,
    }
    return report, 0 if ok else 2


def cmd_fq_count(args) -> tuple[dict, int]:
    shape = BlockShape(args.shape)
    closed = count_block_matrices(shape, args.q, args.kind)
    report = {
        "command": "fq-count",
        "config": {"q": args.q, "shape": ",".join(map(str, shape.sizes)), "kind": args.kind, "brute": args.brute},
        "count": closed,
    }
    code = 0
    if args.brute:
        b = count_block_matrices_brute(shape, args.q, args.kind)
        report["brute_force"] = b
        code = 0 if b == closed else 2
    return report, code


def cmd_fq_orbits(args) -> tuple[dict, int]:
    shape = BlockShape(args.shape)
    orbits = orbit_enumeration(shape, args.q)
    nil = count_block_matrices(shape, args.q, "nilpotent")
    gl = count_block_matrices(shape, args.q, "invertible")
    burnside = sum((Fraction(1, o.stabilizer) for o in orbits), Fraction(0))
    ok = sum(o.size for o in orbits) == nil and burnside == Fraction(nil, gl)
    report = {
        "command": "fq-orbits",
        "config": {"q": args.q, "shape": ",".join(map(str, shape.sizes))},
        "orbits": [{"representative": list(o.representative.entries), "size": o.size, "stabilizer": o.stabilizer}
                   for o in orbits],
        "nilpotent_count": nil,
        "group_order": gl,
        "sum_inverse_stabilizers": _frac(burnside),
        "consistent": ok,
    }
    return report, 0 if ok else 2


def cmd_check_identity(args) -> tuple[dict, int]:
    q, k, D = args.p, args.k, args.degree
    series = flag_cl_series(q, k, D)
    euler = euler_product_trunc(q, k, D)
    orbit = flag_cl_series_orbits(q, k, D) if args.orbits else None
    use_zp = args.zp == "yes" or (args.zp == "auto" and D <= 3)
    zp = zp_flag_series(q, k, D) if use_zp else None
    rows, ok = [], True
    for e in sorted(set(series.coeffs) | set(euler.coeffs)):
        row = {"exponents": list(e), "block_series": _frac(series.coefficient(e)),
               "euler_product": _frac(euler.coefficient(e))}
        good = series.coefficient(e) == euler.coefficient(e)
        if orbit is not None:
            row["orbit_sum"] = _frac(orbit.coefficient(e))
            good &= orbit.coefficient(e) == series.coefficient(e)
        if zp is not None:
            row["zp_sum"] = _frac(zp.coefficient(e))
            good &= zp.coefficient(e) == series.coefficient(e)
        row["match"] = good
        ok &= good
        rows.append(row)
    report = {
        "command": "check-identity",
        "config": {"p": q, "k": k, "degree": D, "orbits": args.orbits, "zp": use_zp},
        "rows": rows,
        "identity_holds": ok,
    }
    return report, 0 if ok else 2


def cmd_check_normalization(args) -> tuple[dict, int]:
    t = args.t if args.t is not None else (Fraction(1),) * args.k
    if len(t) != args.k:
        raise UsageError(f"--t lists {len(t)} values but k={args.k}")
    params = MeasureParams(args.p, args.n, t)
    sums = normalization_partial_sums(params, args.max_exp)
    bounded = all(s <= 1 for s in sums)
    monotone = all(a <= b for a, b in zip(sums, sums[1:]))
    report = {
        "command": "check-normalization",
        "config": {"p": args.p, "n": args.n, "k": args.k, "t": ",".join(_frac(x) for x in t), "max_exp": args.max_exp},
        "partial_sums": [{"D": d, "value": _frac(s), "float": float(s)} for d, s in enumerate(sums)],
        "bounded_by_one": bounded,
        "nondecreasing": monotone,
    }
    return report, 0 if bounded and monotone else 2


HANDLERS = {
    "simulate": cmd_simulate,
    "enumerate": cmd_enumerate,
    "formula": cmd_formula,
    "count-chains": cmd_count_chains,
    "fq-count": cmd_fq_count,
    "fq-orbits": cmd_fq_orbits,
    "check-identity": cmd_check_identity,
    "check-normalization": cmd_check_normalization,
}

CSV_COLUMNS = ("label", "theory_num", "theory_den", "count", "total", "zscore")


def render(report: dict, fmt: str) -> str:
    if fmt == "json":
        return json.dumps(report, indent=2, sort_keys=True, allow_nan=False) + "\n"
    if fmt == "text":
        if "value" in report and "lower" not in report:
            return report["value"] + "\n"
        if "value" in report:
            lo, val, hi = (float(Fraction(report[x])) for x in ("lower", "value", "upper"))
            return f"{val:.12g}  (limit in [{lo:.12g}, {hi:.12g}]; exact values with --format json)\n"
        return json.dumps(report, indent=2, sort_keys=True) + "\n"
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in report.get("rows", []):
            th = None if r["theory"] is None else Fraction(r["theory"])
            w.writerow([r["label"], "" if th is None else th.numerator, "" if th is None else th.denominator,
                        r["count"], r["total"],
                        "" if r["zscore"] is None else r["zscore"]])
        return buf.getvalue()
    raise UsageError(f"unknown format {fmt!r}")


def _config_path(argv) -> str | None:
    for i, a in enumerate(argv):
        if a == "--config" and i + 1 < len(argv):
            return argv[i + 1]
        if a.startswith("--config="):
            return a.split("=", 1)[1]
    return None


def _apply_config(parser, argv):
    """Parse ``argv``; a ``--config`` file supplies defaults that flags override."""
    path = _config_path(argv)
    command = next((a for a in argv if a in COMMANDS), None)
    if path and command:
        values = read_config(path)
        sub = parser._subparsers._group_actions[0].choices[command]
        known = {a.dest: a for a in sub._actions}
        defaults = {}
        for key, raw in values.items():
            action = known.get(key)
            if action is None or key in ("config", "help"):
                raise UsageError(f"config key {key!r} is not an option of {command}")
            if action.type is not None:
                try:
                    defaults[key] = action.type(raw)
                except (argparse.ArgumentTypeError, ValueError) as err:
                    raise UsageError(f"config key {key!r}: {err}") from None
            elif action.const is True:
                defaults[key] = raw.lower() in ("1", "true", "yes", "on")
            else:
                defaults[key] = raw
            action.required = False
        sub.set_defaults(**defaults)
    return parser.parse_args(argv)


def main(argv=None) -> int:
    parser = build_parser()
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args = _apply_config(parser, argv)
        start = time.perf_counter()
        report, code = HANDLERS[args.command](args)
        if args.timing:
            report["wall_time_s"] = round(time.perf_counter() - start, 3)
        text = render(report, args.format)
    except (UsageError, EnumBudget, FqBudget, BoundExceeded, ValueError, OSError) as err:
        print(f"flagcl {argv[0] if argv else ''}: error: {err}", file=sys.stderr)
        return 1
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return code


if __name__ == "__main__":
    sys.exit(main())
