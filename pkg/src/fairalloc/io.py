"""JSON formats for models, policies, kernels, reports and results.

Every writer here has a matching JSON schema; readers validate against it
and raise ``FormatError`` with one message per violation.
"""

from __future__ import annotations

import hashlib
import json
from fractions import Fraction
from typing import Any

import jsonschema

from .policy import FaithfulnessKernel, Policy, Scope
from .population import Cell, PopulationModel

_level = {"type": ["integer", "string"]}
_prob = {"type": "number", "minimum": 0, "maximum": 1}

POPULATION_SCHEMA = {
    "type": "object",
    "required": ["cells"],
    "additionalProperties": False,
    "properties": {
        "treatments": {"type": "array", "items": {"type": "string"}, "minItems": 2},
        "cells": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "required": ["group", "covariate", "l0", "l1", "mass", "p0", "p1"],
                "additionalProperties": False,
                "properties": {
                    "group": {"type": "string"},
                    "covariate": {"type": "string"},
                    "l0": _level,
                    "l1": _level,
                    "mass": {"type": "number", "minimum": 0},
                    "p0": {"type": ["number", "null"]},
                    "p1": {"type": ["number", "null"]},
                },
            },
        },
        "excluded": {"type": "array"},
    },
}

_KEY_FIELDS = {
    Scope.GLOBAL: (),
    Scope.L0: ("l0",),
    Scope.L0xL1: ("l0", "l1"),
    Scope.LxXnoG: ("l0", "l1", "covariate"),
    Scope.LxG: ("l0", "l1", "group"),
    Scope.FULL: ("group", "covariate"),
}

POLICY_SCHEMA = {
    "type": "object",
    "required": ["scope", "table"],
    "properties": {
        "scope": {"enum": [s.value for s in Scope]},
        "label": {"type": "string"},
        "table": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["key", "q"],
                "properties": {
                    "key": {"type": "object", "additionalProperties": {"type": ["integer", "string"]}},
                    "q": _prob,
                },
            },
        },
    },
}

KERNEL_SCHEMA = {
    "type": "object",
    "required": ["scope", "table"],
    "properties": {
        "scope": {"enum": [s.value for s in Scope]},
        "table": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["key", "recommended", "received"],
                "properties": {
                    "key": {"type": "object"},
                    "recommended": {"type": "string"},
                    "received": {"type": "object", "additionalProperties": _prob},
                },
            },
        },
    },
}

_stratum = {"type": "object"}
REPORT_SCHEMA = {
    "type": "object",
    "required": ["definition", "gap", "satisfied", "pairs", "undefined"],
    "properties": {
        "definition": {"type": "integer", "minimum": 1, "maximum": 8},
        "name": {"type": "string"},
        "stage": {"enum": ["enrollment", "allocation", "outcomes"]},
        "legit": {"type": ["string", "null"]},
        "eps": {"type": "number"},
        "gap": {"type": "number", "minimum": 0},
        "satisfied": {"type": "boolean"},
        "pairs": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["g", "g_prime", "stratum", "diff"],
                "properties": {"g": {"type": "string"}, "g_prime": {"type": "string"},
                               "stratum": _stratum, "diff": {"type": "number"}},
            },
        },
        "undefined": {
            "type": "array",
            "items": {"type": "object", "required": ["g", "g_prime", "stratum"]},
        },
    },
}

AUDIT_SCHEMA = {
    "type": "object",
    "required": ["satisfied", "reports", "skipped"],
    "properties": {
        "satisfied": {"type": "boolean"},
        "reports": {"type": "array", "items": REPORT_SCHEMA},
        "skipped": {"type": "array", "items": {"type": "object", "required": ["definition", "reason"]}},
    },
}

_policy_or_null = {"oneOf": [POLICY_SCHEMA, {"type": "null"}]}
RESULT_SCHEMA = {
    "type": "object",
    "required": ["status", "policy", "residual_disparity", "budget", "coefficients"],
    "properties": {
        "status": {"enum": ["FEASIBLE", "INFEASIBLE", "INFEASIBLE_BY_CONDITION"]},
        "policy": _policy_or_null,
        "closest_policy": _policy_or_null,
        "residual_disparity": {"type": ["number", "null"]},
        "budget": {"type": "number"},
        "budget_usage": {"type": ["number", "null"]},
        "outcomes": {"type": ["object", "null"], "additionalProperties": {"type": "number"}},
        "constraints": {"type": "array", "items": {"type": "string"}},
        "flags": {"type": "array", "items": {"type": "string"}},
        "coefficients": {"type": "object"},
    },
}

SPEC_SCHEMA = {
    "type": "object",
    "required": ["constraints"],
    "properties": {
        "constraints": {"type": "array", "items": {"type": "string"}, "minItems": 1},
        "budget": _prob,
        "scope": {"type": "string"},
        "eps": {"type": "number", "minimum": 0},
        "budget_equality": {"type": "boolean"},
    },
}

RUN_SCHEMA = {
    "type": "object",
    "required": ["kind", "seed", "trials", "passed", "outcomes", "summary"],
    "properties": {
        "kind": {"type": "string"},
        "seed": {"type": "integer"},
        "trials": {"type": "integer", "minimum": 0},
        "passed": {"type": "boolean"},
        "outcomes": {"type": "array", "items": {"type": "object", "required": ["trial", "digest", "ok"]}},
        "summary": {"type": "object"},
        "failures": {"type": "array", "items": POPULATION_SCHEMA},
    },
}


class FormatError(ValueError):
    def __init__(self, what: str, problems: list[str]):
        self.problems = problems
        super().__init__(f"{what}: " + "; ".join(problems))


def check(doc: Any, schema: dict, what: str) -> None:
    errors = sorted(jsonschema.Draft7Validator(schema).iter_errors(doc), key=lambda e: list(e.absolute_path))
    if errors:
        msgs = []
        for e in errors:
            where = "/".join(str(p) for p in e.absolute_path) or "<root>"
            msgs.append(f"{where}: {e.message}")
        raise FormatError(what, msgs)


def num(x):
    if isinstance(x, Fraction):
        return float(x)
    return x


def key_str(k) -> str:
    if isinstance(k, tuple):
        return "|".join(str(v) for v in k)
    return str(k)


def jsonable(obj):
    """Plain JSON structure: tuples to lists, Fractions to floats, non-str keys stringified."""
    if isinstance(obj, dict):
        return {(k if isinstance(k, str) else key_str(k)): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, Fraction):
        return float(obj)
    if hasattr(obj, "item") and not isinstance(obj, (str, bytes)):
        return obj.item()
    if hasattr(obj, "value") and isinstance(getattr(obj, "value"), str):
        return obj.value
    return obj


def dumps(doc) -> str:
    return json.dumps(doc, indent=2, sort_keys=False, allow_nan=False) + "\n"


# ---------------------------------------------------------------------------
# population


def population_to_json(model: PopulationModel) -> dict:
    doc = {
        "treatments": list(model.treatments),
        "cells": [
            {"group": c.group, "covariate": c.covariate, "l0": c.l0, "l1": c.l1,
             "mass": num(c.mass), "p0": num(c.p0), "p1": num(c.p1)}
            for c in model.cells
        ],
    }
    if model.excluded:
        doc["excluded"] = [list(e) for e in model.excluded]
    return doc


def population_from_json(doc: dict) -> PopulationModel:
    check(doc, POPULATION_SCHEMA, "population")
    cells = [Cell(c["group"], c["covariate"], c["l0"], c["l1"], c["mass"], c["p0"], c["p1"]) for c in doc["cells"]]
    treatments = tuple(doc.get("treatments", ("0", "1")))
    if set(treatments) != {"0", "1"}:
        raise FormatError("population", [f"treatments must be ['0', '1'], got {list(treatments)}"])
    return PopulationModel.from_cells(cells, treatments=("0", "1"))


def digest(model: PopulationModel) -> str:
    canon = json.dumps(population_to_json(model), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()[:16]


# ---------------------------------------------------------------------------
# policies and kernels


def _key_to_json(scope: Scope, key) -> dict:
    fields = _KEY_FIELDS[scope]
    if scope is Scope.L0:
        return {"l0": key}
    return dict(zip(fields, key))


def _key_from_json(scope: Scope, obj: dict):
    fields = _KEY_FIELDS[scope]
    missing = [f for f in fields if f not in obj]
    extra = [f for f in obj if f not in fields]
    if missing or extra:
        raise FormatError("policy", [f"key {obj} does not match scope {scope.value} fields {list(fields)}"])
    if scope is Scope.L0:
        return obj["l0"]
    return tuple(obj[f] for f in fields)


def policy_to_json(policy: Policy) -> dict:
    return {
        "scope": policy.scope.value,
        "label": policy.label,
        "table": [{"key": _key_to_json(policy.scope, k), "q": float(q)} for k, q in policy.table.items()],
    }


def policy_from_json(doc: dict) -> Policy:
    check(doc, POLICY_SCHEMA, "policy")
    scope = Scope(doc["scope"])
    table = {}
    for row in doc["table"]:
        table[_key_from_json(scope, row["key"])] = row["q"]
    return Policy(scope, table, doc.get("label", ""))


def kernel_to_json(kernel: FaithfulnessKernel) -> dict:
    return {
        "scope": kernel.scope.value,
        "table": [{"key": _key_to_json(kernel.scope, k), "recommended": t, "received": dict(d)}
                  for (k, t), d in kernel.table.items()],
    }


def kernel_from_json(doc: dict) -> FaithfulnessKernel:
    check(doc, KERNEL_SCHEMA, "kernel")
    scope = Scope(doc["scope"])
    table = {(_key_from_json(scope, r["key"]), r["recommended"]): dict(r["received"]) for r in doc["table"]}
    return FaithfulnessKernel(scope, table)


# ---------------------------------------------------------------------------
# reports and results


def _stratum_json(label) -> dict:
    return {k: jsonable(v) for k, v in label}


def report_to_json(report) -> dict:
    from .metrics import STAGES

    return {
        "definition": report.definition,
        "name": report.name,
        "stage": STAGES[report.definition],
        "legit": report.legit,
        "eps": report.eps,
        "gap": float(report.max_abs_gap),
        "satisfied": bool(report.satisfied),
        "pairs": [{"g": p.group, "g_prime": p.other, "stratum": _stratum_json(p.stratum), "diff": float(p.diff)}
                  for p in report.pairs],
        "undefined": [{"g": g, "g_prime": h, "stratum": _stratum_json(s)} for g, h, s in report.undefined],
    }


def audit_to_json(audit) -> dict:
    return {
        "satisfied": bool(audit.satisfied),
        "reports": [report_to_json(r) for r in audit.reports],
        "skipped": [{"definition": d, "reason": why} for d, why in audit.skipped],
    }


def result_to_json(result, scope: Scope | None = None) -> dict:
    doc = {
        "status": result.status.value,
        "scope": (scope or (result.policy or result.closest_policy).scope).value
        if (scope or result.policy or result.closest_policy) else None,
        "budget": float(result.budget),
        "constraints": [str(c) for c in result.constraints],
        "policy": policy_to_json(result.policy) if result.policy else None,
        "residual_disparity": None if result.residual_disparity is None else float(result.residual_disparity),
        "closest_policy": policy_to_json(result.closest_policy) if result.closest_policy else None,
        "budget_usage": None if result.budget_usage is None else float(result.budget_usage),
        "outcomes": jsonable(result.outcomes),
        "flags": list(result.flags),
        "coefficients": jsonable(result.coefficients),
    }
    return doc


def spec_from_json(doc: dict):
    from .feasibility import FeasibilitySpec, parse_constraints

    check(doc, SPEC_SCHEMA, "feasibility spec")
    return FeasibilitySpec(
        constraints=parse_constraints(",".join(doc["constraints"])),
        budget=doc.get("budget", 1.0),
        scope=Scope.parse(doc.get("scope", "GLOBAL")),
        eps=doc.get("eps", 1e-9),
        budget_equality=doc.get("budget_equality", False),
    )


def spec_to_json(spec) -> dict:
    return {
        "constraints": [str(c).replace("(", ":").replace(")", "") for c in spec.constraints],
        "budget": spec.budget,
        "scope": spec.scope.value,
        "eps": spec.eps,
        "budget_equality": spec.budget_equality,
    }


_STAGE_ORDER = ("enrollment", "allocation", "outcomes")


def audit_markdown(audit) -> str:
    """Human-readable audit, grouped by pipeline stage."""
    from .metrics import STAGES

    lines = ["# Fairness audit", "", f"Overall: {'satisfied' if audit.satisfied else 'VIOLATED'}", ""]
    for stage in _STAGE_ORDER:
        reports = [r for r in audit.reports if STAGES[r.definition] == stage]
        skipped = [(d, why) for d, why in audit.skipped if STAGES[d] == stage]
        if not reports and not skipped:
            continue
        lines += [f"## {stage.capitalize()}", ""]
        if reports:
            lines += ["| # | definition | conditioning | max gap | eps | verdict | undefined pairs |",
                      "|---|---|---|---|---|---|---|"]
            for r in reports:
                lines.append(f"| {r.definition} | {r.name} | {r.legit or '-'} | {float(r.max_abs_gap):.6g} | "
                             f"{r.eps:g} | {'ok' if r.satisfied else 'violated'} | {len(r.undefined)} |")
            lines.append("")
        for d, why in skipped:
            lines.append(f"- definition {d} skipped: {why}")
        if skipped:
            lines.append("")
    return "\n".join(lines)
