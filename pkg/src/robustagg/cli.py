"""Command-line front end.

  robustagg aggregate --spec '{"rule": "log_odds", "alpha": 0.585}' 0.3 0.8
  robustagg regret --spec spec.json --env env.json --format csv
  robustagg worst-case --spec '{"rule": "log_odds", "alpha": 0.585}' --domain unknown
  robustagg sweep --domain known01 --grid 0.05 --out fig2.csv
  robustagg certify --which all --tol 1e-12
  robustagg reproduce --table 2 --format md --out table2.md

Exit codes: 0 ok, 1 usage error, 2 verification failure, 3 infeasible search.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

from . import __version__
from .aggregators import (
    Constant,
    GeneralizedLogOdds,
    LogOdds,
    MissingPriorMean,
    SpecError,
    aggregate,
    parse_spec,
    spec_to_dict,
)
from .certificates import (
    CertificateMismatch,
    build_known_marginal_certificate,
    build_unknown_state_certificate,
    build_xor_certificate,
    joint_regret,
    lower_bound_gap_report,
    verify_certificate,
)
from .env import BinaryCIEnvironment, InvalidEnvironment, ZeroProbabilitySignal
from . import reproduce as rep
from .regret import expected_regret
from .search import (
    SWEEP_HEADER,
    InfeasibleDomain,
    Mode,
    SearchConfig,
    SearchDomain,
    blackwell_worst_case,
    default_jobs,
    frange,
    result_row,
    sweep_alpha,
    worst_case_regret,
)

EXIT_OK, EXIT_USAGE, EXIT_VERIFY, EXIT_INFEASIBLE = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise SystemExit(EXIT_USAGE)


@dataclass
class RunManifest:
    command: str
    argv: list
    config: dict
    rng_seed: Optional[int]
    artifacts: list = field(default_factory=list)
    duration_s: float = 0.0
    version: str = __version__

    def write(self, path: Path) -> None:
        path.write_text(json.dumps(asdict(self), indent=2, sort_keys=True) + "\n")


def manifest_path(out: Path) -> Path:
    return out.with_name(out.name + ".manifest.json")


# --- input helpers ------------------------------------------------------------

def _load_json(text: str, what: str):
    """Inline JSON, or the contents of a file when ``text`` names one."""
    stripped = text.strip()
    if not stripped.startswith(("{", "[")):
        p = Path(text)
        if not p.is_file():
            raise UsageError(f"{what}: {text!r} is neither JSON nor a readable file")
        stripped = p.read_text()
    try:
        return json.loads(stripped)
    except json.JSONDecodeError as exc:
        raise UsageError(f"{what}: malformed JSON ({exc})") from None


def _spec(text: str):
    try:
        return parse_spec(text)
    except (SpecError, ValueError, OSError) as exc:
        raise UsageError(f"--spec: {exc}") from None


def _env(text: str) -> BinaryCIEnvironment:
    data = _load_json(text, "--env")
    if not isinstance(data, dict):
        raise UsageError("--env: expected a JSON object")
    try:
        return BinaryCIEnvironment.from_dict(data)
    except InvalidEnvironment as exc:
        raise UsageError(f"--env: {exc}") from None


def _unit_float(text: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"{text!r} is not a number") from None
    if not 0.0 <= v <= 1.0:
        raise argparse.ArgumentTypeError(f"{v} is outside [0, 1]")
    return v


def _config(args) -> SearchConfig:
    starts = args.starts
    if args.fast:
        starts = max(1, starts // 2)
    try:
        return SearchConfig(n_starts=starts, local_iters=args.iters, refine_step=args.refine_step,
                            refine_radius=args.refine_radius, rng_seed=args.seed,
                            n_workers=args.jobs)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _emit(text: str, out: Optional[str]) -> list:
    if out is None:
        sys.stdout.write(text)
        return []
    path = Path(out)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)
    return [str(path)]


def _finish(args, command: str, config: Optional[SearchConfig], artifacts: list, t0: float):
    if not artifacts:
        return
    m = RunManifest(command, list(args.argv), config.to_dict() if config else {},
                    config.rng_seed if config else None, artifacts, round(time.time() - t0, 3))
    m.write(manifest_path(Path(artifacts[0])))


# --- subcommands ------------------------------------------------------------

def cmd_aggregate(args) -> int:
    spec = _spec(args.spec)
    try:
        value = float(aggregate(spec, args.x1, args.x2, args.mu))
    except MissingPriorMean as exc:
        raise UsageError(f"{exc}; pass --mu") from None
    print(f"{value:.12g}")
    return EXIT_OK


def cmd_regret(args) -> int:
    t0 = time.time()
    spec, env = _spec(args.spec), _env(args.env)
    report = expected_regret(spec, env)
    if args.format == "csv":
        text = report.to_csv()
    elif args.format == "md":
        lines = ["| " + " | ".join(report.CSV_HEADER) + " |", "|" + "---|" * 7]
        for r in report.rows:
            lines.append(f"| {r.profile.label()} | {r.joint_prob:.6f} | {r.x1:.6f} | {r.x2:.6f} "
                         f"| {r.bayes:.6f} | {r.output:.6f} | {r.sq_error:.6f} |")
        lines.append(f"\ntotal regret: {report.total:.6f}")
        text = "\n".join(lines) + "\n"
    else:
        text = json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n"
    _finish(args, "regret", None, _emit(text, args.out), t0)
    return EXIT_OK


def cmd_worst_case(args) -> int:
    t0 = time.time()
    spec, config = _spec(args.spec), _config(args)
    if args.blackwell:
        result = blackwell_worst_case(spec, config)
    else:
        result = worst_case_regret(spec, SearchDomain(Mode(args.domain)), config)
    payload = {"spec": spec_to_dict(spec), "domain": "blackwell" if args.blackwell else args.domain,
               "config": config.to_dict(), "result": result.to_dict()}
    if args.format == "json":
        text = json.dumps(payload, indent=2, sort_keys=True) + "\n"
    else:
        env = result.argmax_env.to_dict()
        if args.format == "csv":
            buf = io.StringIO()
            w = csv.writer(buf, lineterminator="\n")
            w.writerow(("worst_case_regret",) + tuple(env))
            w.writerow([f"{result.value:.6f}"] + [repr(v) for v in env.values()])
            text = buf.getvalue()
        else:
            text = f"worst-case regret: {result.value:.6f}\n\n| param | value |\n|---|---|\n"
            text += "".join(f"| {k} | {v:.6f} |\n" for k, v in env.items())
    if args.out is not None:
        print(f"worst-case regret: {result.value:.6f}", file=sys.stderr)
    _finish(args, "worst-case", config, _emit(text, args.out), t0)
    return EXIT_OK


def _alpha_grid(args) -> list[float]:
    if args.alphas is not None:
        try:
            alphas = [float(a) for a in args.alphas.split(",") if a.strip()]
        except ValueError:
            raise UsageError(f"--alphas: cannot parse {args.alphas!r}") from None
    else:
        if args.grid <= 0:
            raise UsageError("--grid must be positive")
        alphas = frange(0.0, 1.0, args.grid)
    if not alphas:
        raise UsageError("alpha grid is empty")
    if any(not 0.0 <= a <= 1.0 for a in alphas):
        raise UsageError("alpha values must lie in [0, 1]")
    return alphas


def cmd_sweep(args) -> int:
    t0 = time.time()
    alphas, config = _alpha_grid(args), _config(args)
    domain = SearchDomain(Mode(args.domain))
    if args.family == "log_odds":
        family = LogOdds
    else:
        if domain.mode != Mode.KNOWN_MARGINAL_MEAN:
            raise InfeasibleDomain("gen_log_odds needs the prior mean; use --domain known_marginal")
        gamma = args.gamma
        family = lambda a: GeneralizedLogOdds(a, gamma)  # noqa: E731
    rows = [result_row(a, r) for a, r in sweep_alpha(domain, alphas, config, family)]
    if args.format == "json":
        text = json.dumps([dict(zip(SWEEP_HEADER, r)) for r in rows], indent=2, sort_keys=True) + "\n"
    elif args.format == "md":
        text = "| alpha | worst_case_regret |\n|---|---|\n"
        text += "".join(f"| {r[0]} | {r[1]:.6f} |\n" for r in rows)
    else:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(SWEEP_HEADER)
        for r in rows:
            w.writerow([r[0]] + [f"{v:.6f}" if i == 0 else repr(v) for i, v in enumerate(r[1:])])
        text = buf.getvalue()
    _finish(args, "sweep", config, _emit(text, args.out), t0)
    return EXIT_OK


CERTIFICATES = {
    "unknown": build_unknown_state_certificate,
    "known_marginal": build_known_marginal_certificate,
}


def cmd_certify(args) -> int:
    t0 = time.time()
    if args.tol <= 0:
        raise UsageError("--tol must be positive")
    names = ["unknown", "known_marginal", "xor"] if args.which == "all" else [args.which]
    results, failed = [], False
    for name in names:
        if name == "xor":
            value = joint_regret(Constant(0.5), build_xor_certificate())
            ok = abs(value - 0.25) <= args.tol
            results.append({"certificate": "xor", "expr": "1/4", "value": value, "passed": ok})
            failed |= not ok
            continue
        cert = CERTIFICATES[name]()
        try:
            report = verify_certificate(cert, args.tol)
            entry = report.to_dict()
        except CertificateMismatch as exc:
            entry = exc.report.to_dict()
            entry["first_failure"] = exc.field
            failed = True
        entry["expr"] = cert.closed_form_expr
        results.append(entry)
    if args.which == "all":
        ladder = lower_bound_gap_report()
        sep = {"separation": ladder["separation"], "margin": ladder["separation_margin"]}
    else:
        sep = None
    if args.format == "json":
        text = json.dumps({"certificates": results, "separation": sep}, indent=2,
                          sort_keys=True) + "\n"
    else:
        lines = []
        for e in results:
            status = "pass" if e["passed"] else "FAIL"
            lines.append(f"{e['certificate']}: {e['expr']} = {e['value']:.6f} [{status}]")
        if sep is not None:
            lines.append(f"separation (unknown LB > known01 UB): {sep['separation']} "
                         f"(margin {sep['margin']:.6f})")
        text = "\n".join(lines) + "\n"
    _finish(args, "certify", None, _emit(text, args.out), t0)
    return EXIT_VERIFY if failed else EXIT_OK


def cmd_reproduce(args) -> int:
    t0 = time.time()
    config = _config(args)
    if args.table is not None:
        rows = rep.run_table(args.table, config)
        fmt = {"csv": rep.table_to_csv, "md": rep.table_to_markdown, "json": rep.table_to_json}
        text = fmt[args.format](rows)
        failed = any(r.error for r in rows)
    else:
        rows = rep.run_figure(args.figure, config)
        fmt = {"csv": rep.figure_to_csv, "md": rep.figure_to_markdown, "json": rep.figure_to_json}
        text = fmt[args.format](rows)
        failed = False
    _finish(args, "reproduce", config, _emit(text, args.out), t0)
    return EXIT_VERIFY if failed else EXIT_OK


# --- parser -----------------------------------------------------------------

def _search_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("search budget")
    g.add_argument("--starts", type=int, default=256)
    g.add_argument("--iters", type=int, default=2000, help="Nelder-Mead iterations per start")
    g.add_argument("--refine-step", type=float, default=1e-5)
    g.add_argument("--refine-radius", type=float, default=1e-3)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--jobs", type=int, default=default_jobs(),
                   help="worker processes (default: $ROBUSTAGG_JOBS or 1)")
    g.add_argument("--fast", action="store_true", help="halve the number of starts")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="robustagg", description="Robust aggregation of two expert forecasts.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    domains = [m.value for m in Mode]

    p = sub.add_parser("aggregate", help="combine two reports")
    p.add_argument("--spec", required=True, help="aggregator JSON or path to a JSON file")
    p.add_argument("x1", type=_unit_float)
    p.add_argument("x2", type=_unit_float)
    p.add_argument("--mu", type=_unit_float, default=None, help="prior mean for rules that need it")
    p.set_defaults(func=cmd_aggregate)

    p = sub.add_parser("regret", help="exact regret on one environment")
    p.add_argument("--spec", required=True)
    p.add_argument("--env", required=True, help="environment JSON or path")
    p.add_argument("--format", choices=("json", "csv", "md"), default="json")
    p.add_argument("--out")
    p.set_defaults(func=cmd_regret)

    p = sub.add_parser("worst-case", help="search for the worst environment")
    p.add_argument("--spec", required=True)
    p.add_argument("--domain", choices=domains, default="unknown")
    p.add_argument("--blackwell", action="store_true",
                   help="search garbled pairs instead of independent signals")
    p.add_argument("--format", choices=("json", "csv", "md"), default="json")
    p.add_argument("--out")
    _search_flags(p)
    p.set_defaults(func=cmd_worst_case)

    p = sub.add_parser("sweep", help="worst case along a parameter grid")
    p.add_argument("--domain", choices=domains, default="unknown")
    p.add_argument("--family", choices=("log_odds", "gen_log_odds"), default="log_odds")
    p.add_argument("--gamma", type=float, default=0.5, help="fixed gamma for gen_log_odds")
    p.add_argument("--grid", type=float, default=0.05, help="alpha step over [0, 1]")
    p.add_argument("--alphas", help="explicit comma-separated alpha values")
    p.add_argument("--format", choices=("json", "csv", "md"), default="csv")
    p.add_argument("--out")
    _search_flags(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("certify", help="verify the lower-bound constructions")
    p.add_argument("--which", choices=("unknown", "known_marginal", "xor", "all"), default="all")
    p.add_argument("--tol", type=float, default=1e-12)
    p.add_argument("--format", choices=("json", "csv", "md"), default="md")
    p.add_argument("--out")
    p.set_defaults(func=cmd_certify)

    p = sub.add_parser("reproduce", help="rebuild a reference table or curve")
    which = p.add_mutually_exclusive_group(required=True)
    which.add_argument("--table", type=int, choices=(1, 2, 4, 6))
    which.add_argument("--figure", type=int, choices=(1, 2))
    p.add_argument("--format", choices=("json", "csv", "md"), default="csv")
    p.add_argument("--out")
    _search_flags(p)
    p.set_defaults(func=cmd_reproduce)
    return parser


def main(argv: Optional[list] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # --help, --version, or a usage error
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    args.argv = argv
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"robustagg: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except InfeasibleDomain as exc:
        print(f"robustagg: infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (InvalidEnvironment, ZeroProbabilitySignal) as exc:
        print(f"robustagg: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
