"""Command line entry point: ``multisis <subcommand> ...``."""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import sys
from pathlib import Path

from . import bench as bench_mod
from .estimator import (
    DEFAULT_MAX_ROWS,
    Infeasible,
    asymptotic_t,
    capacity,
    heuristic_counts,
    plan_parameters,
)
from .merge import LevelStats, solve
from .oracle import BudgetExceeded, brute_force_ball, brute_force_pm1, default_budget
from .zq import (
    InstanceError,
    ParseError,
    canonical_combo,
    format_instance,
    format_solutions,
    gen_instance,
    parse_instance,
    parse_solutions,
    verify_solution,
)

log = logging.getLogger("multisis")

EXIT_OK, EXIT_USAGE, EXIT_INFEASIBLE, EXIT_STARVED, EXIT_VERIFY = 0, 1, 2, 3, 4


class CliError(Exception):
    def __init__(self, msg: str, code: int = EXIT_USAGE):
        super().__init__(msg)
        self.code = code


def _write(path: str | None, text: str) -> None:
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            f.write(text)


def _read(path: str) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise CliError(f"cannot read {path}: {e.strerror}") from None


def _load_instance(path: str):
    try:
        return parse_instance(_read(path))
    except ParseError as e:
        raise CliError(f"{path}: {e}") from None


def _int_list(s: str) -> list[int]:
    return [int(x) for x in s.split(",")]


def _float_list(s: str) -> list[float]:
    return [float(x) for x in s.split(",")]


def cmd_generate(a) -> int:
    try:
        inst = gen_instance(a.n, a.m, a.q, a.seed)
    except InstanceError as e:
        raise CliError(str(e)) from None
    _write(a.out, format_instance(inst))
    return EXIT_OK


def cmd_estimate(a) -> int:
    try:
        plan = plan_parameters(a.n, a.m, a.q, a.nu, a.count, max_rows=a.max_rows)
    except Infeasible as e:
        print(str(e), file=sys.stderr)
        return EXIT_INFEASIBLE
    counts = heuristic_counts(a.n, a.m, a.q, a.nu)
    try:
        t_asym = asymptotic_t(a.n, a.m, a.q, a.nu)
    except ValueError:
        t_asym = None
    info = {
        "n": a.n,
        "m": a.m,
        "q": a.q,
        "nu": a.nu,
        "t": plan.t,
        "k": plan.k,
        "d": plan.d,
        "s": plan.s,
        "block_widths": list(plan.block_widths),
        "N_targets": list(plan.N_targets),
        "capacity": str(capacity(a.m, plan.k)),
        "log2_predicted_cost": plan.predicted_cost / math.log(2),
        "gaussian_log_count": counts.gaussian_log,
        "pm1_log_count": counts.pm1_log,
        "asymptotic_t": t_asym,
    }
    if a.json:
        _write(None, json.dumps(info, indent=2) + "\n")
        return EXIT_OK
    width = max(map(len, info))
    lines = []
    for key, val in info.items():
        if isinstance(val, float):
            val = f"{val:.6g}"
        elif val is None:
            val = "n/a (delta <= 1)"
        lines.append(f"{key:<{width}}  {val}")
    _write(None, "\n".join(lines) + "\n")
    return EXIT_OK


def cmd_solve(a) -> int:
    inst = _load_instance(a.instance)
    try:
        res = solve(
            inst,
            a.nu,
            a.count,
            max_rows=a.max_rows,
            seed=a.seed,
            order=a.seed_order,
            prune=not a.no_prune,
            check=a.check,
            threads=a.threads,
        )
    except Infeasible as e:
        print(str(e), file=sys.stderr)
        return EXIT_INFEASIBLE
    # refuse to emit anything unverified
    good = [v for v in res.solutions if verify_solution(v, inst, a.nu)]
    if len(good) != len(res.solutions):
        print("internal error: unverified solution", file=sys.stderr)
        return EXIT_VERIFY
    _write(a.out, format_solutions(inst.m, good))
    if a.stats:
        _write(a.stats, "\n".join([LevelStats.CSV_HEADER] + [s.csv_row() for s in res.stats]) + "\n")
    if not res.complete:
        print(f"starved at level {res.starved_at}: {len(good)} of {a.count} solutions", file=sys.stderr)
        return EXIT_STARVED
    log.info("found %d solutions", len(good))
    return EXIT_OK


def cmd_verify(a) -> int:
    inst = _load_instance(a.instance)
    try:
        m, rows = parse_solutions(_read(a.solutions))
    except ParseError as e:
        raise CliError(f"{a.solutions}: {e}") from None
    if m != inst.m:
        raise CliError(f"solution length {m} does not match instance m={inst.m}")
    seen: dict[tuple, int] = {}
    failures = 0
    out = []
    for i, c in enumerate(rows, start=1):
        key = canonical_combo(c)
        if key in seen:
            verdict = f"FAIL duplicate of row {seen[key]}"
        else:
            seen[key] = i
            v = verify_solution(c, inst, a.nu)
            verdict = "pass" if v.valid else f"FAIL {v.reason}"
        failures += verdict != "pass"
        out.append(f"row {i}: {verdict}")
    out.append(f"{len(rows) - failures} passed, {failures} failed")
    _write(None, "\n".join(out) + "\n")
    return EXIT_VERIFY if failures else EXIT_OK


def cmd_oracle(a) -> int:
    inst = _load_instance(a.instance)
    budget = a.budget if a.budget is not None else default_budget()
    try:
        if a.mode == "pm1":
            if a.d is None:
                raise CliError("--mode pm1 needs --d")
            rep, sols = brute_force_pm1(inst, a.d, budget=budget, threads=a.threads)
        else:
            if a.nu is None:
                raise CliError("--mode ball needs --nu")
            rep, sols = brute_force_ball(inst, a.nu, budget=budget)
    except BudgetExceeded as e:
        raise CliError(str(e)) from None
    log.info("oracle wall time %.3fs", rep.wall_time)
    print(f"exact_count {rep.exact_count}\nenumerated {rep.enumerated}\nnorm_bound {rep.norm_bound:.6g}")
    if a.out:
        _write(a.out, format_solutions(inst.m, sols))
    return EXIT_OK


def cmd_bench(a) -> int:
    points = bench_mod.grid(a.n, a.m, a.q, a.nu)
    rows = bench_mod.run_bench(
        points, a.count, a.seed, max_rows=a.max_rows, threads=a.threads, timing=not a.no_timing
    )
    buf = io.StringIO()
    path = Path(a.out) if a.out else None
    fresh = path is None or not path.exists() or path.stat().st_size == 0
    w = csv.DictWriter(buf, fieldnames=bench_mod.FIELDS, lineterminator="\n")
    if fresh:
        w.writeheader()
    w.writerows(rows)
    if path is None:
        sys.stdout.write(buf.getvalue())
    else:
        with open(path, "a", encoding="utf-8", newline="\n") as f:
            f.write(buf.getvalue())
    return EXIT_OK


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="multisis", description=__doc__)
    p.add_argument("--log-level", default="INFO")
    sub = p.add_subparsers(dest="cmd", required=True)

    g = sub.add_parser("generate", help="sample a random full-rank instance")
    g.add_argument("-n", type=int, required=True)
    g.add_argument("-m", type=int, required=True)
    g.add_argument("-q", type=int, required=True)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("-o", "--out")
    g.set_defaults(func=cmd_generate)

    e = sub.add_parser("estimate", help="plan merge depth and print heuristic counts")
    e.add_argument("-n", type=int, required=True)
    e.add_argument("-m", type=int, required=True)
    e.add_argument("-q", type=int, required=True)
    e.add_argument("--nu", type=float, required=True)
    e.add_argument("--count", type=int, default=1)
    e.add_argument("--max-rows", type=int, default=DEFAULT_MAX_ROWS)
    e.add_argument("--json", action="store_true")
    e.set_defaults(func=cmd_estimate)

    s = sub.add_parser("solve", help="find many short solutions of cA = 0 mod q")
    s.add_argument("--instance", required=True)
    s.add_argument("--nu", type=float, required=True)
    s.add_argument("--count", type=int, required=True)
    s.add_argument("--max-rows", type=int, default=DEFAULT_MAX_ROWS)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--seed-order", choices=["lex", "random"], default="random")
    s.add_argument("--no-prune", action="store_true")
    s.add_argument("--check", action="store_true", help="recompute residuals at every level")
    s.add_argument("--stats")
    s.add_argument("--threads", type=int, default=1)
    s.add_argument("-o", "--out")
    s.set_defaults(func=cmd_solve)

    v = sub.add_parser("verify", help="check a solution file against an instance")
    v.add_argument("--instance", required=True)
    v.add_argument("--solutions", required=True)
    v.add_argument("--nu", type=float, required=True)
    v.set_defaults(func=cmd_verify)

    o = sub.add_parser("oracle", help="exhaustive search on tiny instances")
    o.add_argument("--instance", required=True)
    o.add_argument("--mode", choices=["pm1", "ball"], required=True)
    o.add_argument("--d", type=int)
    o.add_argument("--nu", type=float)
    o.add_argument("--budget", type=int)
    o.add_argument("--threads", type=int, default=1)
    o.add_argument("--out")
    o.set_defaults(func=cmd_oracle)

    b = sub.add_parser("bench", help="sweep a parameter grid and append CSV rows")
    b.add_argument("--n", type=_int_list, required=True)
    b.add_argument("--m", type=_int_list, required=True)
    b.add_argument("--q", type=_int_list, required=True)
    b.add_argument("--nu", type=_float_list, required=True)
    b.add_argument("--count", type=int, default=10)
    b.add_argument("--max-rows", type=int, default=DEFAULT_MAX_ROWS)
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--threads", type=int, default=1)
    b.add_argument("--no-timing", action="store_true", help="leave wall_time empty for byte-stable output")
    b.add_argument("--out")
    b.set_defaults(func=cmd_bench)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=args.log_level.upper(), stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")
    config = {k: v for k, v in vars(args).items() if k != "func"}
    log.info("config %s", json.dumps(config, sort_keys=True, default=str))
    try:
        return args.func(args)
    except CliError as e:
        print(f"error: {e}", file=sys.stderr)
        return e.code


if __name__ == "__main__":
    sys.exit(main())
