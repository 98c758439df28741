"""Command-line entry point.

Exit codes: 0 success, 1 the plan or case has violations, 2 bad input.
"""
from __future__ import annotations

import argparse
import logging
import sys

from .. import formulation as fm
from ..milp import to_lp
from ..planner import ALGORITHMS, DEFAULT_MAX_STAGES, PlanningError, compare, run
from ..verifier import verify_plan
from .caseio import emit_case, read_case, write_case
from .feeders import PROFILES, gen_feeder33, gen_feeder123, search_severe_seed
from .planio import emit_plan, read_plan, write_plan
from .records import FormatError, atomic_write
from .report import emit_report

OK, VIOLATIONS, BAD_INPUT = 0, 1, 2

log = logging.getLogger("sdnrestore")


class InputError(Exception):
    pass


def _load_case(path):
    try:
        return read_case(path)
    except FormatError as exc:
        raise InputError("\n".join(f"{path}:{issue}" for issue in exc.issues)) from None
    except OSError as exc:
        raise InputError(f"{path}: {exc.strerror or exc}") from None


def _output(path, text):
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        atomic_write(path, text)


def _max_stages(args, case):
    if args.max_stages is not None:
        return args.max_stages
    return case.max_stages or DEFAULT_MAX_STAGES


def cmd_solve(args) -> int:
    case = _load_case(args.case)
    try:
        plan = run(args.algo, case.net, case.sc, case.cfg, _max_stages(args, case))
    except PlanningError as exc:
        raise InputError(f"{args.case}: no plan: {exc}") from None
    if args.output in (None, "-"):
        sys.stdout.write(emit_plan(plan, case.name))
    else:
        write_plan(plan, args.output, case.name)
    print(f"{plan.algorithm}: {len(plan.stages)} stage(s), "
          f"{plan.total_pickup_kw:.1f} kW restored", file=sys.stderr)
    return OK


def cmd_verify(args) -> int:
    case = _load_case(args.case)
    try:
        plan, meta = read_plan(args.plan)
    except FormatError as exc:
        raise InputError("\n".join(f"{args.plan}:{issue}" for issue in exc.issues)) from None
    except OSError as exc:
        raise InputError(f"{args.plan}: {exc.strerror or exc}") from None
    if meta.get("case") and meta["case"] != case.name:
        log.warning("plan was made for case %r, verifying against %r", meta["case"], case.name)
    violations = verify_plan(case.net, case.sc, plan, case.cfg)
    for v in violations:
        print(f"{args.plan}: {v}", file=sys.stderr)
    if violations:
        print(f"{len(violations)} violation(s)", file=sys.stderr)
        return VIOLATIONS
    print(f"{plan.algorithm} plan ok: {len(plan.stages)} stage(s), "
          f"{plan.total_pickup_kw:.1f} kW", file=sys.stderr)
    return OK


def cmd_compare(args) -> int:
    case = _load_case(args.case)
    plans = compare(case.net, case.sc, case.cfg, _max_stages(args, case), workers=args.workers)
    text, js = emit_report(plans, case.name)
    _output(args.output, text)
    if args.json:
        atomic_write(args.json, js)
    failed = [p.algorithm for p in plans if p.error]
    if failed:
        print(f"failed: {', '.join(failed)}", file=sys.stderr)
    return OK


def cmd_gen(args) -> int:
    seed = args.seed
    if args.search is not None:
        if args.feeder != "feeder33":
            raise InputError("--search is only defined for feeder33")
        try:
            seed, _ = search_severe_seed(seed, args.search, args.damage)
        except LookupError as exc:
            raise InputError(str(exc)) from None
        print(f"seed {seed}", file=sys.stderr)
    make = gen_feeder33 if args.feeder == "feeder33" else gen_feeder123
    case = make(seed, args.damage)
    if args.output in (None, "-"):
        sys.stdout.write(emit_case(case))
    else:
        write_case(case, args.output)
    return OK


def cmd_export(args) -> int:
    case = _load_case(args.case)
    stage = fm.StageState.initial(case.net, case.sc)
    model = fm.build_integrated(case.net, case.sc, stage, case.cfg)
    _output(args.output, to_lp(model))
    return OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sdnrestore",
        description="Plan restoration of a distribution feeder together with its "
                    "SDN control network.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log solver progress")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="plan one algorithm")
    p.add_argument("case")
    p.add_argument("--algo", required=True, type=str.lower,
                   choices=[a.lower() for a in ALGORITHMS])
    p.add_argument("--max-stages", type=int)
    p.add_argument("-o", "--output", help="plan file (default: stdout)")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("verify", help="replay a plan against a case")
    p.add_argument("case")
    p.add_argument("plan")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("compare", help="run all three algorithms and report")
    p.add_argument("case")
    p.add_argument("--max-stages", type=int)
    p.add_argument("--workers", type=int, default=1, help="run algorithms concurrently")
    p.add_argument("-o", "--output", help="text report (default: stdout)")
    p.add_argument("--json", help="also write the report as JSON here")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("gen", help="generate a benchmark case")
    p.add_argument("feeder", choices=["feeder33", "feeder123"])
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--damage", choices=PROFILES, default="none")
    p.add_argument("--search", type=int, metavar="N",
                   help="try N seeds from --seed until OLR < SCLR < ICLR holds")
    p.add_argument("-o", "--output", help="case file (default: stdout)")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("export-milp", help="write the first-stage integrated model as LP text")
    p.add_argument("case")
    p.add_argument("-o", "--output", help="LP file (default: stdout)")
    p.set_defaults(func=cmd_export)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "max_stages", None) is not None and args.max_stages < 1:
        parser.error("--max-stages must be at least 1")
    try:
        return args.func(args)
    except InputError as exc:
        print(exc, file=sys.stderr)
        return BAD_INPUT
    except OSError as exc:
        print(f"{exc.filename or ''}: {exc.strerror or exc}", file=sys.stderr)
        return BAD_INPUT


if __name__ == "__main__":
    sys.exit(main())
