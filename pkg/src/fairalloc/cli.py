"""fairalloc command line.

Exit codes: 0 success / feasible / satisfied, 2 infeasible or violated,
3 input error, 4 internal or oracle failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import warnings
from pathlib import Path

from . import feasibility as fz
from . import io, metrics, propositions
from .fixtures import FIXTURES
from .policy import FaithfulnessKernel, PolicyError, Scope, zero_policy
from .population import PopulationError, Shape, generate_random, read_records_csv, require_valid

EXIT_OK = 0
EXIT_NO = 2
EXIT_INPUT = 3
EXIT_INTERNAL = 4


class InputError(Exception):
    def __init__(self, *lines: str):
        self.lines = lines
        super().__init__("; ".join(lines))


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise InputError(f"{self.prog}: {message}")


def _default_seed() -> int:
    raw = os.environ.get("FAIRALLOC_SEED")
    if raw is None:
        return 0
    try:
        return int(raw)
    except ValueError:
        raise InputError(f"FAIRALLOC_SEED must be an integer, got {raw!r}") from None


def _load_json(path: str):
    try:
        with open(path) as fh:
            return json.load(fh)
    except OSError as exc:
        raise InputError(f"{path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: invalid JSON ({exc.msg} at line {exc.lineno})") from None


def _load(path: str, reader, what: str):
    doc = _load_json(path)
    try:
        return reader(doc)
    except io.FormatError as exc:
        raise InputError(*(f"{path}: {what}: {p}" for p in exc.problems)) from None
    except (PopulationError, PolicyError) as exc:
        lines = getattr(exc, "violations", None) or [str(exc)]
        raise InputError(*(f"{path}: {line}" for line in lines)) from None


def _emit(doc: dict, out: str | None, schema: dict | None = None) -> None:
    if schema is not None:
        io.check(doc, schema, "output")
    text = io.dumps(doc)
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _scope(name: str) -> Scope:
    try:
        return Scope.parse(name)
    except ValueError as exc:
        raise InputError(str(exc)) from None


def _require_model(model):
    try:
        require_valid(model)
    except PopulationError as exc:
        raise InputError(*(getattr(exc, "violations", None) or [str(exc)])) from None
    return model


# ---------------------------------------------------------------------------
# commands


def cmd_audit(args) -> int:
    if bool(args.records) == bool(args.model):
        raise InputError("audit: give exactly one of --records or --model")
    if args.records:
        if args.policy or args.kernel:
            raise InputError("audit: --policy/--kernel apply to --model only")
        try:
            src = metrics.DatasetSource(read_records_csv(args.records))
        except OSError as exc:
            raise InputError(f"{args.records}: {exc.strerror}") from None
        except PopulationError as exc:
            raise InputError(f"{args.records}: {exc}") from None
    else:
        model = _require_model(_load(args.model, io.population_from_json, "population"))
        # without a policy, audit the status quo: nobody treated
        policy = _load(args.policy, io.policy_from_json, "policy") if args.policy else zero_policy(model)
        kernel = _load(args.kernel, io.kernel_from_json, "kernel") if args.kernel else FaithfulnessKernel.identity()
        try:
            src = metrics.ModelSource(model, recommend=policy, kernel=kernel)
        except PolicyError as exc:
            raise InputError(str(exc)) from None
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", metrics.UndefinedPairWarning)
            audit = metrics.audit_all(src, args.eps, args.legit)
    except PolicyError as exc:
        raise InputError(str(exc)) from None
    if not audit.reports:
        raise InputError(*(f"definition {d}: {why}" for d, why in audit.skipped))
    _emit(io.audit_to_json(audit), args.out, io.AUDIT_SCHEMA)
    if args.md:
        Path(args.md).write_text(io.audit_markdown(audit))
    return EXIT_OK if audit.satisfied else EXIT_NO


def cmd_synthesize(args) -> int:
    model = _require_model(_load(args.model, io.population_from_json, "population"))
    scope = _scope(args.scope)
    try:
        spec = fz.FeasibilitySpec(fz.parse_constraints(args.constraints), args.budget, scope,
                                  budget_equality=args.budget_equality)
    except fz.FeasibilityError as exc:
        raise InputError(str(exc)) from None
    try:
        res = fz.joint_feasibility(model, spec)
    except fz.InfeasibleConstraintsError as exc:
        res = fz.FeasibilityResult(fz.Status.INFEASIBLE, None, None, None, budget=args.budget,
                                   flags=(f"hard_constraints_infeasible: {exc}",), constraints=spec.constraints)
    _emit(io.result_to_json(res, scope), args.out, io.RESULT_SCHEMA)
    return EXIT_OK if res.feasible else EXIT_NO


_PROP_OPS = {1: fz.prop1_solve, 2: fz.prop2_feasibility, 4: fz.prop4_feasibility, 7: fz.prop7_construct}
_PROP_SCOPES = {1: Scope.GLOBAL, 2: Scope.L0, 4: Scope.L0xL1, 7: Scope.LxG}


def cmd_check_compat(args) -> int:
    model = _require_model(_load(args.model, io.population_from_json, "population"))
    if not 0.0 <= args.budget <= 1.0:
        raise InputError(f"budget {args.budget} outside [0, 1]")
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", fz.WellChosenWarning)
        res = _PROP_OPS[args.prop](model, args.budget)
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    doc = io.result_to_json(res, _PROP_SCOPES[args.prop])
    doc["proposition"] = args.prop
    _emit(doc, args.out, io.RESULT_SCHEMA)
    return EXIT_OK if res.feasible else EXIT_NO


def _pair(text: str) -> tuple[Scope, Scope]:
    parts = [p for p in text.replace(":", ",").split(",") if p.strip()]
    if len(parts) != 2:
        raise InputError(f"--dominance expects COARSE,FINE, got {text!r}")
    return _scope(parts[0]), _scope(parts[1])


def cmd_verify(args) -> int:
    seed = _default_seed() if args.seed is None else args.seed
    if args.trials < 1:
        raise InputError("--trials must be >= 1")
    if args.worked_example:
        ex = propositions.replicate_worked_example()
        _emit(ex.to_json(), args.out)
        return EXIT_OK if ex.passed else EXIT_INTERNAL
    if args.prop is not None:
        run = propositions.verify_proposition(args.prop, args.trials, seed)
        doc = run.to_json()
    else:
        pair = _pair(args.dominance)
        try:
            run = propositions.verify_dominance_suite(pair, args.trials, seed, min_gap=args.min_gap)
            witnesses = propositions.search_strict_witness(pair, args.trials, seed, args.min_gap)
        except propositions.VerificationError as exc:
            raise InputError(str(exc)) from None
        doc = run.to_json()
        doc["summary"]["strict_witnesses"] = len(witnesses)
        doc["witnesses"] = [{k: v for k, v in w.to_json().items() if k != "model"} for w in witnesses]
    if args.failures_dir and run.failures:
        d = Path(args.failures_dir)
        d.mkdir(parents=True, exist_ok=True)
        for m in run.failures:
            (d / f"{io.digest(m)}.json").write_text(io.dumps(io.population_to_json(m)))
    _emit(doc, args.out, io.RUN_SCHEMA)
    return EXIT_OK if run.passed else EXIT_INTERNAL


def cmd_generate(args) -> int:
    if args.fixture:
        if args.fixture.upper() not in FIXTURES:
            raise InputError(f"unknown fixture {args.fixture!r}; choose from {', '.join(FIXTURES)}")
        model = FIXTURES[args.fixture.upper()]()
    else:
        seed = _default_seed() if args.seed is None else args.seed
        try:
            model = generate_random(seed, Shape(args.groups, args.l0, args.l1, args.covariates),
                                    well_chosen_l0=args.well_chosen, well_chosen_l1=args.well_chosen)
        except PopulationError as exc:
            raise InputError(str(exc)) from None
    _emit(io.population_to_json(model), args.out, io.POPULATION_SCHEMA)
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="fairalloc", description="Audit and synthesize fair resource-allocation policies.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    a = sub.add_parser("audit", help="all eight disparity reports for a dataset or a model + policy")
    a.add_argument("--records", help="CSV of allocation records")
    a.add_argument("--model", help="population model JSON")
    a.add_argument("--policy", help="recommendation policy JSON (with --model; default treats nobody)")
    a.add_argument("--kernel", help="faithfulness kernel JSON (with --model)")
    a.add_argument("--legit", choices=("l0", "l0l1"), default="l0")
    a.add_argument("--eps", type=float, default=None,
                   help=f"tolerance (default {metrics.EMPIRICAL_EPS} for records, {metrics.ANALYTIC_EPS} for models)")
    a.add_argument("--out")
    a.add_argument("--md", help="also write a markdown report")
    a.set_defaults(func=cmd_audit)

    s = sub.add_parser("synthesize", help="find a policy meeting the requested constraints")
    s.add_argument("--model", required=True)
    s.add_argument("--scope", default="global", help="global|l0|l0l1|lx|lg|full")
    s.add_argument("--budget", type=float, default=1.0)
    s.add_argument("--constraints", default="sp-outcome",
                   help="comma list of sp-alloc, csp-alloc[:l0|l0l1], sp-outcome, csp-outcome[:l0|l0l1]")
    s.add_argument("--budget-equality", action="store_true", help="spend exactly the budget")
    s.add_argument("--out")
    s.set_defaults(func=cmd_synthesize)

    c = sub.add_parser("check-compat", help="run a named compatibility condition")
    c.add_argument("--model", required=True)
    c.add_argument("--prop", type=int, choices=(1, 2, 4, 7), required=True)
    c.add_argument("--budget", type=float, default=1.0)
    c.add_argument("--out")
    c.set_defaults(func=cmd_check_compat)

    v = sub.add_parser("verify", help="randomized oracle checks")
    what = v.add_mutually_exclusive_group(required=True)
    what.add_argument("--prop", type=int, choices=(1, 2, 4, 7))
    what.add_argument("--dominance", metavar="COARSE,FINE", help="e.g. l0,l0l1 or lx,lg")
    what.add_argument("--worked-example", action="store_true")
    v.add_argument("--trials", type=int, default=100)
    v.add_argument("--seed", type=int, default=None, help="default: $FAIRALLOC_SEED or 0")
    v.add_argument("--min-gap", type=float, default=1e-3)
    v.add_argument("--failures-dir", help="write failing instances here as population JSON")
    v.add_argument("--out")
    v.set_defaults(func=cmd_verify)

    g = sub.add_parser("generate", help="write a random or named population model")
    g.add_argument("--seed", type=int, default=None, help="default: $FAIRALLOC_SEED or 0")
    g.add_argument("--groups", type=int, default=2)
    g.add_argument("--l0", type=int, default=2)
    g.add_argument("--l1", type=int, default=1)
    g.add_argument("--covariates", type=int, default=1)
    g.add_argument("--well-chosen", action="store_true", help="make both score levels well chosen")
    g.add_argument("--fixture", help="named fixture A-F instead of a random model")
    g.add_argument("--out")
    g.set_defaults(func=cmd_generate)
    return p


def run(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return args.func(args)
    except InputError as exc:
        for line in exc.lines:
            print(f"error: {line}", file=sys.stderr)
        return EXIT_INPUT
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    except Exception as exc:  # noqa: BLE001
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
