"""JSON problem and solution files.

Problem files are validated against :data:`PROBLEM_SCHEMA` before anything
else happens; unknown keys are errors.  Floats are written with ``repr``
precision so a reloaded solution reproduces its residuals bit for bit.
"""

from __future__ import annotations

import json
import math
from dataclasses import fields
from datetime import datetime, timezone

import jsonschema
import numpy as np

from . import __version__
from . import constraints as cons
from .mixture import GaussianMixture
from .optimizer import Options, Problem, Solution
from .root import RootMixture

_EXT_REAL = {"oneOf": [{"type": "number"}, {"enum": ["-inf", "inf"]}]}
_BAND = {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2}
_POINT = {"oneOf": [{"type": "number"}, {"type": "array", "items": {"type": "number"}, "minItems": 1}]}


def _spec_schema(kind, props, target_key, required=()):
    properties = {"type": {"const": kind}, target_key: {"type": "number"}, "band": _BAND, **props}
    return {
        "type": "object",
        "properties": properties,
        "required": ["type", *required],
        "additionalProperties": False,
        "oneOf": [{"required": [target_key]}, {"required": ["band"]}],
    }


_OPTION_TYPES = {
    "max_outer": {"type": "integer", "minimum": 1},
    "max_inner": {"type": "integer", "minimum": 1},
    "mu0": {"type": "number", "exclusiveMinimum": 0},
    "penalty_growth": {"type": "number", "exclusiveMinimum": 0},
    "eq_tol": {"type": "number", "exclusiveMinimum": 0},
    "grad_tol": {"type": "number", "exclusiveMinimum": 0},
    "fd_step": {"type": "number", "exclusiveMinimum": 0},
    "multistart": {"type": "integer", "minimum": 1},
    "seed": {"type": "integer", "minimum": 0},
    "prune_threshold": {"type": ["number", "null"], "minimum": 0},
    "param_bound": {"type": "number", "exclusiveMinimum": 0},
    "log_scale_floor": {"type": "number"},
    "max_penalty": {"type": "number", "exclusiveMinimum": 0},
}

PROBLEM_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "properties": {
        "dim": {"type": "integer", "minimum": 1},
        "root_components": {"type": "integer", "minimum": 1},
        "specs": {
            "type": "array",
            "items": {
                "oneOf": [
                    _spec_schema(
                        "moment",
                        {
                            "order": {"type": "integer", "minimum": 1, "maximum": 4},
                            "kind": {"enum": ["raw", "central"]},
                            "axis": {
                                "oneOf": [
                                    {"type": "integer", "minimum": 0},
                                    {"type": "array", "items": {"type": "integer", "minimum": 0},
                                     "minItems": 2, "maxItems": 2},
                                ]
                            },
                        },
                        "target",
                        required=("order",),
                    ),
                    _spec_schema("value", {"x": _POINT}, "y", required=("x",)),
                    _spec_schema(
                        "derivative",
                        {"x": _POINT, "axis": {"type": "integer", "minimum": 0}},
                        "d",
                        required=("x",),
                    ),
                    _spec_schema("interval_prob", {"a": _EXT_REAL, "b": _EXT_REAL}, "p", required=("a", "b")),
                ]
            },
        },
        "options": {"type": "object", "properties": _OPTION_TYPES, "additionalProperties": False},
    },
    "required": ["dim", "root_components", "specs"],
    "additionalProperties": False,
}


class SchemaError(ValueError):
    """Problem document does not match :data:`PROBLEM_SCHEMA`."""


def _ext(value):
    return float(value) if not isinstance(value, str) else (math.inf if value == "inf" else -math.inf)


def _ext_out(value):
    if math.isinf(value):
        return "inf" if value > 0 else "-inf"
    return value


def spec_from_dict(doc):
    kind = doc["type"]
    band = doc.get("band")
    if kind == "moment":
        axis = doc.get("axis", 0)
        return cons.MomentSpec(doc["order"], doc.get("target"), doc.get("kind", "raw"),
                               tuple(axis) if isinstance(axis, list) else axis, band)
    if kind == "value":
        return cons.ValueSpec(doc["x"], doc.get("y"), band)
    if kind == "derivative":
        return cons.DerivativeSpec(doc["x"], doc.get("d"), doc.get("axis", 0), band)
    return cons.IntervalProbSpec(_ext(doc["a"]), _ext(doc["b"]), doc.get("p"), band)


def spec_to_dict(spec):
    if isinstance(spec, cons.MomentSpec):
        doc = {"type": "moment", "order": spec.order, "kind": spec.kind,
               "axis": list(spec.axis) if isinstance(spec.axis, tuple) else spec.axis}
        key = "target"
    elif isinstance(spec, cons.ValueSpec):
        doc, key = {"type": "value", "x": list(spec.x)}, "y"
    elif isinstance(spec, cons.DerivativeSpec):
        doc, key = {"type": "derivative", "x": list(spec.x), "axis": spec.axis}, "d"
    else:
        doc, key = {"type": "interval_prob", "a": _ext_out(spec.a), "b": _ext_out(spec.b)}, "p"
    if spec.band is None:
        doc[key] = spec.target
    else:
        doc["band"] = list(spec.band)
    return doc


def problem_from_dict(doc) -> Problem:
    """Validate ``doc`` and build a :class:`Problem`.

    Raises :class:`SchemaError` for schema violations and for values the
    spec classes reject (empty intervals, negative densities, ...).
    """
    try:
        jsonschema.validate(doc, PROBLEM_SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise SchemaError(f"problem file invalid at {where}: {exc.message}") from None
    try:
        specs = [spec_from_dict(s) for s in doc["specs"]]
        options = Options(**doc.get("options", {}))
        return Problem(doc["dim"], doc["root_components"], specs, options)
    except ValueError as exc:
        raise SchemaError(f"problem file invalid: {exc}") from None


def problem_to_dict(problem: Problem):
    opts = {f.name: getattr(problem.options, f.name) for f in fields(Options)}
    return {"dim": problem.dim, "root_components": problem.n_root,
            "specs": [spec_to_dict(s) for s in problem.specs], "options": opts}


def load_problem(path) -> Problem:
    with open(path, encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"{path}: not valid JSON ({exc})") from None
    return problem_from_dict(doc)


def _residual_doc(spec, entry):
    return {"spec": spec.describe(), "attained": entry.attained, "residual": entry.residual,
            "satisfied": entry.satisfied, "band": entry.is_band}


def solution_to_dict(solution: Solution, problem: Problem, verification=None, timestamp=None):
    """Serializable solution document; only ``timestamp`` varies between identical runs."""
    rm, mix = solution.root_mixture, solution.mixture
    if timestamp is None:
        timestamp = datetime.now(timezone.utc).isoformat(timespec="seconds")
    doc = {
        "tool": "smoothmix",
        "version": __version__,
        "seed": problem.options.seed,
        "timestamp": timestamp,
        "problem": problem_to_dict(problem),
        "root_mixture": {"weights": rm.weights.tolist(), "means": rm.means.tolist(), "covariances": rm.covs.tolist()},
        "mixture": {"weights": mix.weights.tolist(), "means": mix.means.tolist(), "covariances": mix.covs.tolist()},
        "fisher_information": solution.fisher_information,
        "residuals": [_residual_doc(s, e) for s, e in zip(problem.specs, solution.residuals)],
        "diagnostics": {
            "converged": solution.converged,
            "diverged": solution.diverged,
            "status": solution.status,
            "outer_iterations": solution.outer_iterations,
            "inner_iterations": solution.inner_iterations,
            "start_index": solution.start_index,
            "max_violation": solution.max_violation,
            "pruned_mass": solution.pruned_mass,
            "weight_sum": solution.weight_sum,
            "bound_hits": list(solution.bound_hits),
        },
    }
    if verification is not None:
        doc["verification"] = verification
    return doc


def dumps(doc) -> str:
    return json.dumps(doc, indent=2, allow_nan=False) + "\n"


def write_json(doc, path):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(dumps(doc))


def mixtures_from_solution(doc):
    """``(RootMixture, GaussianMixture)`` stored in a solution document."""
    r, m = doc["root_mixture"], doc["mixture"]
    rm = RootMixture(np.array(r["weights"]), np.array(r["means"]), np.array(r["covariances"]), normalized=True)
    mix = GaussianMixture(np.array(m["weights"]), np.array(m["means"]), np.array(m["covariances"]))
    return rm, mix


def recheck_residuals(doc, problem: Problem):
    """Re-evaluate every spec on the stored mixture.

    Returns ``(recomputed residual docs, largest absolute difference)``.
    """
    _, mix = mixtures_from_solution(doc)
    fresh = [_residual_doc(s, cons.residual(s, mix, problem.options.eq_tol)) for s in problem.specs]
    diff = max((abs(a["residual"] - b["residual"]) for a, b in zip(fresh, doc["residuals"])), default=0.0)
    if len(fresh) != len(doc["residuals"]):
        diff = math.inf
    return fresh, diff
