"""
Command-line entry point.

    cfp <command> [options]

Every command writes JSON (default) or CSV to --emit/--out, or to stdout when
no path is given. Each written file gets a <file>.manifest.json next to it.
Exit codes: 0 success, 1 invalid input, 2 a verification identity failed.
"""

import argparse
import json
import logging
import sys
from fractions import Fraction
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import ValidationError

from cfp import __version__
from cfp.birthdeath import build_chain, marginal_evolve, spectral_gap
from cfp.config import LOG_FORMAT, MAX_EXACT_N, WEIGHT_TABLE_CAP, WORKERS
from cfp.errors import CFPError, DomainError
from cfp.exact import (
    admissible_initial,
    build_generator,
    conditional_snapshot,
    evolve,
    factorization_deviation,
    full_spectral_gap,
    point_mass,
    stationary_measure,
    weight_asymptotics,
)
from cfp.gibbs import GibbsModel, coag_walk_prob, frag_walk_prob
from cfp.kernels import Kernel, SolvableKernel, TabulatedKernel, check_homogeneity
from cfp.models import PartitionRecord, RunManifest, SimConfig
from cfp.partitions import Partition, coagulation_moves, enumerate_partitions, fragmentation_moves
from cfp.presets import PresetLibrary
from cfp.serialize import (
    finish_manifest,
    parse_rational,
    parse_rational_list,
    rational_fields,
    render_table,
    write_manifest,
    write_text,
)
from cfp.simulate import gelation_scan, run_ssa
from cfp.suite import run_suites

logger = logging.getLogger(__name__)

EXIT_OK, EXIT_INVALID, EXIT_VERIFY = 0, 1, 2


class UsageError(CFPError):
    """Bad command line."""


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # type: ignore[override]
        raise UsageError(message)


class JsonLogFormatter(logging.Formatter):
    """One JSON object per log record."""

    def format(self, record: logging.LogRecord) -> str:
        return json.dumps({
            "time": self.formatTime(record),
            "logger": record.name,
            "level": record.levelname,
            "message": record.getMessage(),
        })


def configure_logging(quiet: bool, json_logs: bool) -> None:
    root = logging.getLogger()
    if quiet:
        root.setLevel(logging.WARNING)
    formatter: logging.Formatter = JsonLogFormatter() if json_logs else logging.Formatter(LOG_FORMAT)
    for handler in root.handlers:
        handler.setFormatter(formatter)


# ============================
# Argument helpers
# ============================

def parse_times(text: str) -> List[float]:
    """'0:0.1:5' (start:step:stop, inclusive) or '0,1,2.5'."""
    if ":" in text:
        try:
            start, step, stop = (float(x) for x in text.split(":"))
        except ValueError as e:
            raise DomainError(f"Time range must be start:step:stop, got '{text}'") from e
        if step <= 0 or stop < start:
            raise DomainError(f"Invalid time range '{text}'")
        count = int(round((stop - start) / step)) + 1
        return [float(x) for x in np.round(start + step * np.arange(count), 12)]
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError as e:
        raise DomainError(f"Times must be numbers, got '{text}'") from e


def _add_kernel_args(p: argparse.ArgumentParser, allow_table: bool = True) -> None:
    group = p.add_mutually_exclusive_group()
    group.add_argument("--solvable", help="a,b,phi11 of psi(i,j)=a(i+j)+b")
    group.add_argument("--preset", help="named solvable kernel from the preset file")
    if allow_table:
        group.add_argument("--kernel", help="CSV kernel table with header i,j,psi,phi")
    p.add_argument("--frag-weights", help="a',b' of the fragmentation weights (default: a,b)")
    p.add_argument("--a", help="coagulation slope a")
    p.add_argument("--b", help="coagulation offset b")
    p.add_argument("--phi11", help="fragmentation rate phi(1,1)")


def _add_output_args(p: argparse.ArgumentParser, emit_is_path: bool = True) -> None:
    if emit_is_path:
        p.add_argument("--emit", dest="out", help="output file")
    p.add_argument("--out", dest="out", help="output file")
    p.add_argument("--format", choices=("json", "csv"), default="json")


def _solvable_params(args: argparse.Namespace) -> Optional[Tuple[Fraction, Fraction, Fraction]]:
    if getattr(args, "solvable", None):
        a, b, phi11 = parse_rational_list(args.solvable, expected=3)
        return a, b, phi11
    if getattr(args, "preset", None):
        return PresetLibrary().params(args.preset)
    if args.a is not None or args.b is not None:
        if args.a is None or args.b is None:
            raise DomainError("--a and --b must be given together")
        return parse_rational(args.a), parse_rational(args.b), parse_rational(args.phi11 or "0")
    return None


def resolve_kernel(args: argparse.Namespace, solvable_only: bool = False) -> Kernel:
    params = _solvable_params(args)
    if params is not None:
        frag = parse_rational_list(args.frag_weights, expected=2) if args.frag_weights else (None, None)
        return SolvableKernel(*params, frag_a=frag[0], frag_b=frag[1])
    if getattr(args, "kernel", None):
        if solvable_only:
            raise DomainError("This command needs a solvable kernel (--solvable, --preset or --a/--b/--phi11)")
        return TabulatedKernel.from_csv(args.kernel)
    raise DomainError("No kernel given: use --solvable a,b,phi11, --preset NAME or --kernel FILE")


def _flatten(row: Dict[str, Any]) -> Dict[str, Any]:
    flat: Dict[str, Any] = {}
    for key, value in row.items():
        if isinstance(value, list):
            flat[key] = " ".join(str(v) for v in value)
        elif isinstance(value, dict):
            flat[key] = json.dumps(value, separators=(",", ":"))
        else:
            flat[key] = value
    return flat


# ============================
# Commands
# ============================

Output = Tuple[List[Dict[str, Any]], Dict[str, Any], int]


def cmd_enumerate(args: argparse.Namespace) -> Output:
    states = enumerate_partitions(args.N, max_n=args.max_n)
    rows = [
        PartitionRecord(index=k, N=args.N, r=s.block_count, counts=list(s.counts), text=s.text()).model_dump()
        for k, s in enumerate(states)
    ]
    return rows, {"N": args.N, "count": len(rows)}, EXIT_OK


def cmd_check_homogeneity(args: argparse.Namespace) -> Output:
    kernel = resolve_kernel(args)
    report = check_homogeneity(kernel, args.N, max_n=args.max_n)
    rows = [w.model_dump() for w in report.witnesses]
    meta = report.model_dump(exclude={"witnesses"})
    meta["status"] = "homogeneous" if report.homogeneous else "inhomogeneous"
    return rows, meta, EXIT_OK


def _walk_rows(model: GibbsModel, kernel: SolvableKernel) -> List[Dict[str, Any]]:
    rows = []
    n = model.n
    for r in range(1, n):
        for eta in model.rho[r]:
            for m in fragmentation_moves(eta):
                rows.append({"direction": "fragmentation", "r": r, "source": eta.text(), "target": m.target.text(),
                             **rational_fields("p", frag_walk_prob(model.weights, m))})
    if kernel.death_rate(n, n) > 0:
        for r in range(2, n + 1):
            for zeta in model.rho[r]:
                for m in coagulation_moves(zeta):
                    rows.append({"direction": "coagulation", "r": r, "source": zeta.text(), "target": m.target.text(),
                                 **rational_fields("p", coag_walk_prob(kernel, m))})
    return rows


def cmd_gibbs(args: argparse.Namespace) -> Output:
    kernel = resolve_kernel(args, solvable_only=True)
    assert isinstance(kernel, SolvableKernel)
    model = GibbsModel.for_kernel(kernel, args.N)
    if args.emit == "weights":
        rows = [{"k": k, **rational_fields("a_k", model.weights[k])} for k in range(1, args.N + 1)]
    elif args.emit == "bell":
        rows = [{"r": r, **rational_fields("B", model.bell_at(r))} for r in range(1, args.N + 1)]
    elif args.emit == "walks":
        rows = _walk_rows(model, kernel)
    else:
        rows = [
            {"r": r, "state": eta.text(), "counts": " ".join(map(str, eta.counts)), **rational_fields("p", p)}
            for r in range(args.N, 0, -1)
            for eta, p in model.rho[r].items()
        ]
    return rows, {"N": args.N, "kernel": kernel.describe(), "table": args.emit}, EXIT_OK


def _initial(args: argparse.Namespace, gen, kernel: Kernel):
    init = args.init.strip()
    if init in ("eta-star", "single-block"):
        return point_mass(gen, Partition.single_block(args.N))
    if init in ("zeta-star", "singletons"):
        return point_mass(gen, Partition.singletons(args.N))
    if init.startswith("level:"):
        if not isinstance(kernel, SolvableKernel):
            raise DomainError("Gibbs level starts need a solvable kernel")
        r = int(init.split(":", 1)[1])
        return admissible_initial(gen, GibbsModel.for_kernel(kernel, args.N), {r: 1.0})
    return point_mass(gen, Partition.parse_text(init, args.N))


def cmd_evolve(args: argparse.Namespace) -> Output:
    kernel = resolve_kernel(args)
    gen = build_generator(kernel, args.N, max_n=args.max_n)
    path = evolve(gen, _initial(args, gen, kernel), parse_times(args.times), method=args.method)
    snapshots = [conditional_snapshot(d) for d in path]
    meta: Dict[str, Any] = {"N": args.N, "kernel": kernel.describe(), "init": args.init, "method": args.method}
    reversible = isinstance(kernel, SolvableKernel) and not kernel.boundary
    if reversible and (kernel.frag_a, kernel.frag_b) == (kernel.a, kernel.b):
        model = GibbsModel.for_kernel(kernel, args.N)
        meta["factorization_deviation"] = max(factorization_deviation(s, model) for s in snapshots)
    if args.format == "json":
        return [s.to_record().model_dump() for s in snapshots], meta, EXIT_OK
    rows = [
        {"t": s.t, "r": r, "level_mass": s.level_mass[r], "state": eta.text(), "Q": q}
        for s in snapshots
        for r, table in sorted(s.q.items())
        for eta, q in table.items()
    ]
    return rows, meta, EXIT_OK


def cmd_marginal(args: argparse.Namespace) -> Output:
    kernel = resolve_kernel(args, solvable_only=True)
    chain = build_chain(kernel.a, kernel.b, kernel.phi11, args.N)
    init = args.init.strip()
    level = {"eta-star": 1, "single-block": 1, "zeta-star": args.N, "singletons": args.N}.get(init)
    if level is None:
        try:
            level = int(init)
        except ValueError as e:
            raise DomainError(f"--init must be a level 1..N or eta-star/singletons, got '{init}'") from e
    times = parse_times(args.times)
    b0 = {level: 1.0}
    series = marginal_evolve(chain, b0, times, method=args.method)
    rows = [
        {"t": t, "r": r, "b": float(series[k, r - 1])}
        for k, t in enumerate(times)
        for r in range(1, args.N + 1)
    ]
    return rows, {"N": args.N, "kernel": kernel.describe(), "init_level": level}, EXIT_OK


def cmd_stationary(args: argparse.Namespace) -> Output:
    kernel = resolve_kernel(args)
    gen = build_generator(kernel, args.N, max_n=args.max_n)
    result = stationary_measure(gen, kernel)
    meta: Dict[str, Any] = {"N": args.N, "kernel": kernel.describe(), "ergodic": result.ergodic}
    if not result.ergodic:
        meta["absorbing"] = [s.text() for s in result.absorbing]
        return [{"state": s.text(), "counts": " ".join(map(str, s.counts))} for s in result.absorbing], meta, EXIT_OK
    if result.partition_function is not None:
        meta.update(rational_fields("c_N", result.partition_function))
        meta["max_deviation"] = result.max_deviation
    meta["balance_deviation"] = result.balance_deviation
    rows = []
    for s, p in zip(gen.states, result.distribution.probs):
        row: Dict[str, Any] = {"r": s.block_count, "largest": s.largest_block, "state": s.text(), "p": float(p)}
        if result.closed_form is not None:
            row.update(rational_fields("nu", result.closed_form[s]))
        rows.append(row)
    return rows, meta, EXIT_OK


def cmd_spectral_gap(args: argparse.Namespace) -> Output:
    kernel = resolve_kernel(args, solvable_only=True)
    chain = build_chain(kernel.a, kernel.b, kernel.phi11, args.N)
    full = None
    if args.full:
        full = full_spectral_gap(build_generator(kernel, args.N, max_n=args.max_n))
    report = spectral_gap(chain, with_optimal=not args.no_optimal, full_gap=full)
    rows = [{"r": r, "alpha": alpha} for r, alpha in enumerate(report.alphas, start=1)]
    return rows, report.model_dump(exclude={"alphas"}), EXIT_OK


def cmd_simulate(args: argparse.Namespace) -> Output:
    kernel = resolve_kernel(args)
    cfg = SimConfig(
        N=args.N,
        kernel=kernel.describe(),
        init=args.init,
        T=args.T,
        snapshots=parse_times(args.snapshots),
        trajectories=args.traj,
        base_seed=args.seed,
        workers=args.workers,
    )
    stats = run_ssa(cfg, kernel)
    if args.format == "json":
        payload = stats.model_dump()
        return payload.pop("snapshots"), {**payload, "seed": args.seed}, EXIT_OK
    rows = [
        {"t": snap.t, "r": int(r), "p": p, "stderr": snap.level_stderr[r]}
        for snap in stats.snapshots
        for r, p in snap.level_probs.items()
    ]
    return rows, {"seed": args.seed}, EXIT_OK


def cmd_verify(args: argparse.Namespace) -> Output:
    if args.grid:
        kernels = [SolvableKernel(*params) for params in PresetLibrary().grid()]
    else:
        kernel = resolve_kernel(args, solvable_only=True)
        kernels = [kernel]  # type: ignore[list-item]
    reports = run_suites(kernels, args.N)
    rows = []
    for report in reports:
        for check in report.checks:
            rows.append({"N": report.N, "kernel": report.kernel, **check.model_dump()})
    issues = [issue.model_dump() for report in reports for issue in report.issues]
    passed = all(r.passed for r in reports)
    if not passed:
        logger.warning(f"Verification failed: {len(issues)} issues")
    meta = {"N": args.N, "passed": passed, "issues": issues}
    return rows, meta, EXIT_OK if passed else EXIT_VERIFY


def cmd_asymptotics(args: argparse.Namespace) -> Output:
    params = _solvable_params(args)
    if params is None:
        raise DomainError("Give --a and --b (or --solvable/--preset)")
    report = weight_asymptotics(params[0], params[1], args.K)
    return [row.model_dump() for row in report.rows], report.model_dump(exclude={"rows"}), EXIT_OK


def cmd_gelation(args: argparse.Namespace) -> Output:
    params = _solvable_params(args)
    if params is None:
        raise DomainError("Give --solvable, --preset or --a/--b/--phi11")
    sizes = [int(x) for x in args.Ns.split(",") if x.strip()]
    report = gelation_scan(*params, sizes, t=args.t, trajectories=args.traj,
                           base_seed=args.seed, workers=args.workers)
    return [row.model_dump() for row in report.rows], report.model_dump(exclude={"rows"}), EXIT_OK


# ============================
# Parser
# ============================

COMMANDS: Dict[str, Callable[[argparse.Namespace], Output]] = {
    "enumerate": cmd_enumerate,
    "check-homogeneity": cmd_check_homogeneity,
    "gibbs": cmd_gibbs,
    "evolve": cmd_evolve,
    "marginal": cmd_marginal,
    "stationary": cmd_stationary,
    "spectral-gap": cmd_spectral_gap,
    "simulate": cmd_simulate,
    "verify": cmd_verify,
    "asymptotics": cmd_asymptotics,
    "gelation": cmd_gelation,
}


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="cfp", description="Mean-field coagulation-fragmentation processes on integer partitions")
    parser.add_argument("--version", action="version", version=f"cfp {__version__}")
    parser.add_argument("--quiet", action="store_true", help="log warnings and errors only")
    parser.add_argument("--json-logs", action="store_true", help="emit logs as JSON lines")
    parser.add_argument("--max-n", type=int, default=MAX_EXACT_N, help="exact-mode cap (CFP_MAX_N)")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("enumerate", help="list Omega_N in the stable order")
    p.add_argument("--N", type=int, required=True)
    _add_output_args(p)

    p = sub.add_parser("check-homogeneity", help="test level constancy of outflow totals")
    p.add_argument("--N", type=int, required=True)
    _add_kernel_args(p)
    _add_output_args(p)

    p = sub.add_parser("gibbs", help="weights, Bell polynomials, level laws and walks")
    p.add_argument("--N", type=int, required=True)
    _add_kernel_args(p, allow_table=False)
    p.add_argument("--emit", choices=("rho", "bell", "weights", "walks"), default="rho")
    _add_output_args(p, emit_is_path=False)

    p = sub.add_parser("evolve", help="transient law on Omega_N")
    p.add_argument("--N", type=int, required=True)
    _add_kernel_args(p)
    p.add_argument("--init", default="eta-star", help="eta-star | singletons | level:R | state text")
    p.add_argument("--times", required=True, help="start:step:stop or comma list")
    p.add_argument("--method", choices=("uniformization", "ode"), default="uniformization")
    _add_output_args(p)

    p = sub.add_parser("marginal", help="block-count law of the birth and death chain")
    p.add_argument("--N", type=int, required=True)
    _add_kernel_args(p, allow_table=False)
    p.add_argument("--init", default="1", help="initial level, or eta-star/singletons")
    p.add_argument("--times", required=True)
    p.add_argument("--method", choices=("uniformization", "ode"), default="uniformization")
    _add_output_args(p)

    p = sub.add_parser("stationary", help="stationary measure or absorbing states")
    p.add_argument("--N", type=int, required=True)
    _add_kernel_args(p)
    _add_output_args(p)

    p = sub.add_parser("spectral-gap", help="gap of the block-count chain with Zeifman bounds")
    p.add_argument("--N", type=int, required=True)
    _add_kernel_args(p, allow_table=False)
    p.add_argument("--full", action="store_true", help="also compute the full-process gap (exact range only)")
    p.add_argument("--no-optimal", action="store_true", help="skip the delta search")
    _add_output_args(p)

    p = sub.add_parser("simulate", help="Gillespie trajectories")
    p.add_argument("--N", type=int, required=True)
    _add_kernel_args(p)
    p.add_argument("--init", default="singletons")
    p.add_argument("--T", type=float, required=True)
    p.add_argument("--snapshots", required=True)
    p.add_argument("--traj", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=WORKERS)
    _add_output_args(p)

    p = sub.add_parser("verify", help="run every exact identity and oracle")
    p.add_argument("--N", type=int, required=True)
    _add_kernel_args(p, allow_table=False)
    p.add_argument("--grid", action="store_true", help="sweep the preset verification grid")
    _add_output_args(p)

    p = sub.add_parser("asymptotics", help="growth of the weights a_k")
    _add_kernel_args(p, allow_table=False)
    p.add_argument("--K", type=int, default=WEIGHT_TABLE_CAP)
    _add_output_args(p)

    p = sub.add_parser("gelation", help="largest-block scan over N")
    _add_kernel_args(p, allow_table=False)
    p.add_argument("--Ns", required=True, help="comma separated sizes")
    p.add_argument("--t", type=float, default=None)
    p.add_argument("--traj", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=WORKERS)
    _add_output_args(p)
    return parser


def _seeds(args: argparse.Namespace) -> List[int]:
    seed = getattr(args, "seed", None)
    return [] if seed is None else [seed]


def dispatch(argv: Optional[Sequence[str]] = None) -> int:
    """Run one command; returns the exit code."""
    try:
        args = build_parser().parse_args(argv)
    except UsageError as e:
        print(f"cfp: error: {e}", file=sys.stderr)
        return EXIT_INVALID

    configure_logging(args.quiet, args.json_logs)
    manifest = RunManifest(
        command=args.command,
        parameters={k: v for k, v in vars(args).items() if k not in ("quiet", "json_logs")},
        version=__version__,
        seeds=_seeds(args),
    )
    try:
        rows, meta, code = COMMANDS[args.command](args)
        rows = rows if args.format == "json" else [_flatten(r) for r in rows]
        text = render_table(rows, args.format, meta)
    except (CFPError, ValidationError, ValueError) as e:
        message = str(e).splitlines()[0] if str(e) else type(e).__name__
        logger.error(f"{args.command} failed: {message}")
        print(f"cfp {args.command}: error: {message}", file=sys.stderr)
        return EXIT_INVALID

    if args.out:
        entry = write_text(args.out, text)
        write_manifest(finish_manifest(manifest, [entry]), args.out)
    else:
        sys.stdout.write(text)
    return code


def main() -> None:
    sys.exit(dispatch())
