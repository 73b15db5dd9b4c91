"""JSON report documents, their schemas and deterministic serialization.

Reports carry no timestamps or host data, keys are sorted and non-finite
floats become ``null``, so identical inputs produce byte-identical files.
"""

from __future__ import annotations

import json
import math
import os
from typing import Any, Dict

import numpy as np

from . import __version__

__all__ = ["SCHEMAS", "report", "dumps", "write_json", "sanitize"]

_num = {"type": ["number", "null"]}
_vec = {"type": ["array", "null"], "items": {"type": "number"}}
_metric = {
    "type": "object",
    "required": ["family", "weight"],
    "properties": {
        "family": {"enum": ["l1", "l2", "linf"]},
        "weight": {"enum": ["identity", "diagonal", "factor"]},
        "D": {"type": "array", "items": {"type": "number"}},
        "Q": {"type": "array", "items": {"type": "array", "items": {"type": "number"}}},
    },
}
_condition = {
    "type": "object",
    "required": ["name", "value", "threshold", "margin", "passed", "witness", "samples", "rate", "note"],
    "properties": {
        "name": {"type": "string"},
        "value": _num,
        "threshold": {"type": "number"},
        "margin": _num,
        "passed": {"type": ["boolean", "null"]},
        "witness": _vec,
        "samples": {"type": "integer", "minimum": 0},
        "rate": _num,
        "note": {"type": "string"},
    },
}
_domain = {
    "type": ["object", "null"],
    "required": ["lower", "upper", "samples_per_axis", "seed", "jitter"],
    "properties": {
        "lower": {"type": "array", "items": {"type": "number"}},
        "upper": {"type": "array", "items": {"type": "number"}},
        "samples_per_axis": {"type": "integer", "minimum": 3},
        "seed": {"type": "integer"},
        "jitter": {"type": "number"},
    },
}


def _doc(kind: str, body: dict) -> dict:
    return {
        "type": "object",
        "required": ["report", "version", "system"] + list(body),
        "properties": {
            "report": {"const": kind},
            "version": {"type": "string"},
            "system": {"type": ["string", "null"]},
            **body,
        },
    }


SCHEMAS: Dict[str, dict] = {
    "certificate": _doc(
        "certificate",
        {
            "kind": {"enum": ["filippov", "pwa", "relay"]},
            "metric": _metric,
            "domain": _domain,
            "conditions": {"type": "array", "items": _condition, "minItems": 1},
            "rates": {
                "type": "object",
                "required": ["c1", "c2", "c", "K"],
                "properties": {"c1": _num, "c2": _num, "c": _num, "K": {"type": "number"}},
            },
            "verdict": {"enum": ["certified", "refuted-at-witness", "inconclusive"]},
            "assumptions": {"type": "array", "items": {"type": "string"}},
        },
    ),
    "simulation": _doc(
        "simulation",
        {
            "method": {"enum": ["filippov", "regularized"]},
            "x0": _vec,
            "t_span": {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2},
            "h": {"type": "number"},
            "eps": _num,
            "phi": {"type": ["string", "null"]},
            "samples": {"type": "integer"},
            "steps": {"type": "integer"},
            "events": {"type": "integer"},
            "final_state": _vec,
            "files": {"type": "object"},
        },
    ),
    "decay": _doc(
        "decay",
        {
            "c": {"type": "number"},
            "K": {"type": "number"},
            "metric": _metric,
            "max_ratio": _num,
            "t_max_ratio": {"type": "number"},
            "max_violation": _num,
            "initial_distance": {"type": "number"},
            "final_distance": {"type": "number"},
            "t0": {"type": "number"},
            "t1": {"type": "number"},
            "samples": {"type": "integer"},
            "x0": _vec,
            "y0": _vec,
            "files": {"type": "object"},
        },
    ),
    "sweep": _doc(
        "sweep",
        {
            "phi": {"enum": ["sat", "cubic"]},
            "metric": _metric,
            "rows": {
                "type": "array",
                "items": {
                    "type": "object",
                    "required": ["eps", "sup_error", "ratio", "t_sup", "steps"],
                    "properties": {
                        "eps": {"type": "number"},
                        "sup_error": {"type": "number"},
                        "ratio": {"type": "number"},
                        "t_sup": {"type": "number"},
                        "steps": {"type": "integer"},
                    },
                },
            },
            "ratio_band": _num,
            "within_3x_of_median": {"type": "boolean"},
            "monotone": {"type": "boolean"},
            "x0": _vec,
            "files": {"type": "object"},
        },
    ),
    "entrainment": _doc(
        "entrainment",
        {
            "period": {"type": "number"},
            "tail_start": {"type": "number"},
            "max_pairwise_distance": {"type": "number"},
            "max_period_mismatch": {"type": "number"},
            "initial_conditions": {"type": "integer"},
            "metric": _metric,
            "files": {"type": "object"},
        },
    ),
    "metric-search": _doc(
        "metric-search",
        {
            "family": {"enum": ["l1", "l2", "linf"]},
            "found": {"type": "boolean"},
            "objective": _num,
            "evaluations": {"type": "integer"},
            "reason": {"type": "string"},
            "metric": {"oneOf": [_metric, {"type": "null"}]},
            "certificate": {"type": ["object", "null"]},
        },
    ),
}


def sanitize(obj: Any) -> Any:
    """Plain JSON types; non-finite floats become ``None``."""
    if isinstance(obj, dict):
        return {str(k): sanitize(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [sanitize(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return sanitize(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    return obj


def report(kind: str, system_name, body: dict) -> dict:
    if kind not in SCHEMAS:
        raise KeyError(kind)
    doc = {"report": kind, "version": __version__, "system": system_name}
    doc.update(body)
    return sanitize(doc)


def dumps(doc: dict) -> str:
    return json.dumps(doc, sort_keys=True, indent=2, allow_nan=False) + "\n"


def write_json(doc: dict, path) -> None:
    with open(os.fspath(path), "w", encoding="utf-8") as fh:
        fh.write(dumps(doc))
