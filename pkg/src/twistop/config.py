"""Job configuration: JSON schema, defaults and construction of model objects."""
from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass
from typing import Any

import jsonschema
import numpy as np

from .errors import SchemaError, UnknownMap
from .maps import (BUILTIN_MAPS, Branch, Observable, PiecewiseAffineMap, digit_observable,
                   expression_observable, function_observable, table_observable)
from .montecarlo import InitialLaw
from .partition import Rectangle, UlamPartition

_NUM_LIST = {"type": "array", "items": {"type": "number"}, "minItems": 1}
_POS_INT_LIST = {"type": "array", "items": {"type": "integer", "minimum": 1}, "minItems": 1}

_BRANCH = {
    "type": "object",
    "additionalProperties": False,
    "required": ["lower", "upper", "linear", "offset"],
    "properties": {
        "lower": _NUM_LIST,
        "upper": _NUM_LIST,
        "linear": _NUM_LIST,  # row-major d x d
        "offset": _NUM_LIST,
        "wrap": {"type": "array", "items": {"type": "boolean"}},
        "label": {"type": "string"},
    },
}

SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["map"],
    "properties": {
        "map": {"oneOf": [
            {"type": "string"},
            {"type": "object", "additionalProperties": False, "required": ["branches"],
             "properties": {
                 "name": {"type": "string"},
                 "phase_space": {"type": "object", "additionalProperties": False,
                                 "required": ["lower", "upper"],
                                 "properties": {"lower": _NUM_LIST, "upper": _NUM_LIST}},
                 "branches": {"type": "array", "items": _BRANCH, "minItems": 1},
             }},
        ]},
        "alpha": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
        "resolution": _POS_INT_LIST,
        "method": {"enum": ["exact-affine", "sampled"]},
        "samples_per_cell": {"type": "integer", "minimum": 1000},
        "observable": {"oneOf": [
            {"const": "digit"},
            {"type": "object", "additionalProperties": False, "required": ["table"],
             "properties": {"table": _NUM_LIST}},
            {"type": "object", "additionalProperties": False, "required": ["expression"],
             "properties": {"expression": {"type": "string"}}},
            {"type": "object", "additionalProperties": False, "required": ["coboundary"],
             "properties": {"coboundary": {"type": "string"}}},
        ]},
        "law": {"oneOf": [
            {"const": "uniform"},
            {"type": "object", "additionalProperties": False, "required": ["density"],
             "properties": {"density": {"type": "string"}}},
        ]},
        "theta_max": {"type": "number", "exclusiveMinimum": 0},
        "n_theta": {"type": "integer", "minimum": 9},
        "n_eps": {"type": "integer", "minimum": 1},
        "tail_tol": {"type": "number", "exclusiveMinimum": 0},
        "gap_threshold": {"type": "number", "exclusiveMinimum": 0},
        "t_grid": {"type": "array", "items": {"type": "number", "minimum": -3, "maximum": 3},
                   "minItems": 1},
        "n_schedule": _POS_INT_LIST,
        "mc_n": _POS_INT_LIST,
        "mc_eps": _NUM_LIST,
        "mc_samples": {"type": "integer", "minimum": 1},
        "clt_n": {"type": "integer", "minimum": 1},
        "clt_samples": {"type": "integer", "minimum": 2},
        "seed": {"type": "integer", "minimum": 0},
        "oracle": {"enum": ["none", "markov"]},
        "bsum": {"type": "boolean"},
        "qh_function": {"type": "string"},
        "qh_alpha": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
        "qh_eps0": {"type": ["number", "null"], "exclusiveMinimum": 0},
        "qh_n_eps": {"type": "integer", "minimum": 1},
        "qh_k_max": {"type": "integer", "minimum": 1},
        "output": {"type": "string"},
    },
}

DEFAULTS: dict[str, Any] = {
    "alpha": 1.0,
    "method": "exact-affine",
    "samples_per_cell": 1024,
    "observable": "digit",
    "law": "uniform",
    "theta_max": 2.0,
    "n_theta": 21,
    "n_eps": 41,
    "tail_tol": 1e-12,
    "gap_threshold": 1e-3,
    "t_grid": [round(-3.0 + 0.1 * k, 10) for k in range(61)],
    "n_schedule": [100, 400],
    "mc_n": [25, 50, 100],
    "mc_eps": [0.1],
    "mc_samples": 100_000,
    "clt_n": 100,
    "clt_samples": 100_000,
    "seed": 2024,
    "oracle": "none",
    "bsum": False,
    "qh_function": "observable",
    "qh_alpha": 1.0,
    "qh_eps0": None,
    "qh_n_eps": 20,
    "qh_k_max": 12,
    "output": "twistop-out",
}


def _default_resolution(dim: int) -> list[int]:
    return [1024] if dim == 1 else [64] * dim


@dataclass
class JobConfig:
    data: dict

    def __getitem__(self, key):
        return self.data[key]

    def canonical(self) -> str:
        return json.dumps(self.data, sort_keys=True, separators=(",", ":"))

    @property
    def hash(self) -> str:
        return hashlib.sha256(self.canonical().encode()).hexdigest()

    # -- model objects

    def build_map(self) -> PiecewiseAffineMap:
        return _build_map(self.data["map"], self.data["alpha"])

    def partition(self, T: PiecewiseAffineMap | None = None) -> UlamPartition:
        T = T or self.build_map()
        return UlamPartition(T.phase_space, tuple(self.data["resolution"]))

    def observable(self, partition: UlamPartition, T: PiecewiseAffineMap | None = None) -> Observable:
        """Uncentered observable on ``partition``."""
        spec = self.data["observable"]
        if spec == "digit":
            return digit_observable(partition)
        if "table" in spec:
            return table_observable(partition, spec["table"])
        if "expression" in spec:
            return expression_observable(partition, spec["expression"])
        return coboundary_observable(partition, spec["coboundary"], T or self.build_map())

    def law(self, partition: UlamPartition) -> InitialLaw:
        spec = self.data["law"]
        if spec == "uniform":
            return InitialLaw()
        dens = expression_observable(partition, spec["density"])
        return InitialLaw.from_function(partition, dens.pointwise)


def coboundary_observable(partition, expr, T) -> Observable:
    """``psi∘T - psi`` for ``psi`` given by a numpy expression.

    Cell values are averages of the exact pointwise function. The discrete
    Green-Kubo sum of a smooth coboundary vanishes only as the grid is
    refined (about ``N^-2`` in one dimension).
    """
    psi = expression_observable(partition, expr).pointwise

    def cob(p):
        y, _ = T.apply(p)
        return psi(y) - psi(p)

    return function_observable(partition, cob, name=f"coboundary({expr})", per_axis=8)


def _build_map(spec, alpha) -> PiecewiseAffineMap:
    if isinstance(spec, str):
        if spec not in BUILTIN_MAPS:
            raise UnknownMap(f"unknown map {spec!r}; built-ins are {sorted(BUILTIN_MAPS)}")
        T = BUILTIN_MAPS[spec]()
        if alpha != T.alpha:
            T = PiecewiseAffineMap(T.branches, T.phase_space, alpha, T.name)
        return T
    branches = []
    for k, b in enumerate(spec["branches"]):
        d = len(b["lower"])
        if len(b["upper"]) != d or len(b["offset"]) != d or len(b["linear"]) != d * d:
            raise SchemaError(f"/map/branches/{k}", "inconsistent branch dimensions")
        wrap = tuple(b.get("wrap", [False] * d))
        branches.append(Branch(Rectangle(tuple(b["lower"]), tuple(b["upper"])),
                               np.reshape(b["linear"], (d, d)), b["offset"],
                               label=b.get("label", str(k + 1)), wrap=wrap))
    d = branches[0].domain.dim
    ps = spec.get("phase_space", {"lower": [0.0] * d, "upper": [1.0] * d})
    T = PiecewiseAffineMap(tuple(branches), Rectangle(tuple(ps["lower"]), tuple(ps["upper"])),
                           alpha, spec.get("name", "custom"))
    return T.validate(require_expanding=True)


def parse_config(document: str | dict) -> JobConfig:
    """Validate a JSON document and fill every default explicitly."""
    if isinstance(document, (str, bytes)):
        try:
            data = json.loads(document)
        except json.JSONDecodeError as exc:
            raise SchemaError("/", f"malformed JSON: {exc}") from exc
    else:
        data = copy.deepcopy(document)
    validator = jsonschema.Draft202012Validator(SCHEMA)
    errors = sorted(validator.iter_errors(data), key=lambda e: list(e.absolute_path))
    if errors:
        err = errors[0]
        path = "/" + "/".join(str(p) for p in err.absolute_path)
        raise SchemaError(path, err.message)
    full = {**copy.deepcopy(DEFAULTS), **data}
    T = _build_map(full["map"], full["alpha"])
    if "resolution" not in full:
        full["resolution"] = _default_resolution(T.dim)
    if len(full["resolution"]) != T.dim:
        raise SchemaError("/resolution", f"needs {T.dim} entries for a {T.dim}-dimensional map")
    obs = full["observable"]
    if isinstance(obs, dict) and "table" in obs:
        n_cells = int(np.prod(full["resolution"]))
        if len(obs["table"]) != n_cells:
            raise SchemaError("/observable/table", f"has {len(obs['table'])} values for {n_cells} cells")
    if full["qh_eps0"] is None:
        full["qh_eps0"] = T.default_epsilon0()
    return JobConfig(full)


def load_config(path) -> JobConfig:
    with open(path) as fh:
        return parse_config(fh.read())


__all__ = ["JobConfig", "parse_config", "load_config", "SCHEMA", "DEFAULTS",
           "coboundary_observable"]
