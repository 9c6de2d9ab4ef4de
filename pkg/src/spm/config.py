"""Experiment configuration: schema, validation, object construction.

Configs are JSON documents (see SCHEMA below; the README documents every
field).  Cross-field rules that a JSON schema cannot express are enforced
in ``load_config``:

* the L2-energy check against Laplacian forcing needs smoothness class
  C2_0,
* experiments built on the strong contraction bound (attractor,
  invariant-measure, contraction curves) need a nonlinearity that
  certifies strong monotonicity; that check happens lazily at run time so
  a failed certification is reported with its witness.
"""

from __future__ import annotations

import copy
import hashlib
import json

import jsonschema

from .domain import Domain
from .integrator import SolverConfig
from .noise import NoiseOperator
from . import nonlinearity as nlmod

__all__ = ["SCHEMA", "ConfigError", "load_config", "config_hash", "apply_overrides"]

SCHEMA_VERSION = 1

EXPERIMENT_KINDS = (
    "simulate",
    "verify-hypotheses",
    "verify-estimates",
    "pullback",
    "attractor",
    "invariant-measure",
)

_number = {"type": "number"}
_positive = {"type": "number", "exclusiveMinimum": 0}

SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["schema_version", "domain", "nonlinearity", "solver", "experiment"],
    "additionalProperties": False,
    "properties": {
        "schema_version": {"const": SCHEMA_VERSION},
        "domain": {
            "type": "object",
            "required": ["length", "n_modes"],
            "additionalProperties": False,
            "properties": {
                "length": _positive,
                "n_modes": {"type": "integer", "minimum": 1},
                "oversample": {"type": "integer", "minimum": 2},
            },
        },
        "nonlinearity": {
            "type": "object",
            "required": ["kind"],
            "additionalProperties": False,
            "properties": {
                "kind": {"enum": ["power_law", "dead_zone_cubic", "mollified_exp"]},
                "p": {"type": "number", "minimum": 1},
                "delta": _positive,
            },
        },
        "noise": {
            "type": "object",
            "required": ["profiles", "seeds"],
            "additionalProperties": False,
            "properties": {
                "profiles": {
                    "type": "array",
                    "minItems": 1,
                    "items": {
                        "type": "object",
                        "additionalProperties": False,
                        "properties": {
                            "mode": {"type": "integer", "minimum": 1},
                            "coeffs": {"type": "array", "items": _number},
                        },
                    },
                },
                "amplitudes": {"type": "array", "items": {"type": "number", "minimum": 0}},
                "smoothness_class": {"enum": ["C1_0", "C2_0"]},
                "dt_grid": _positive,
                "seeds": {
                    "type": "array",
                    "minItems": 1,
                    "items": {"type": "integer", "minimum": 0},
                },
            },
        },
        "solver": {
            "type": "object",
            "required": ["dt"],
            "additionalProperties": False,
            "properties": {
                "dt": _positive,
                "scheme": {"enum": ["backward_euler", "explicit_substep"]},
                "nonlinear_tol": _positive,
                "max_iters": {"type": "integer", "minimum": 1},
                "substep_safety": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
                "anderson_depth": {"type": "integer", "minimum": 0},
                "damping": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
            },
        },
        "experiment": {
            "type": "object",
            "required": ["kind"],
            "properties": {"kind": {"enum": list(EXPERIMENT_KINDS)}},
        },
        "output": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "directory": {"type": "string"},
                "snapshot_stride": {"type": "integer", "minimum": 0},
            },
        },
    },
}

_EXPERIMENT_SCHEMAS = {
    "simulate": {
        "type": "object",
        "additionalProperties": False,
        "required": ["kind", "t_start", "t_end", "initial_condition"],
        "properties": {
            "kind": {"const": "simulate"},
            "t_start": _number,
            "t_end": _number,
            "initial_condition": {"type": "object"},
        },
    },
    "verify-hypotheses": {
        "type": "object",
        "additionalProperties": False,
        "required": ["kind", "hypotheses"],
        "properties": {
            "kind": {"const": "verify-hypotheses"},
            "search_box": _positive,
            "grid_step": _positive,
            "hypotheses": {
                "type": "array",
                "minItems": 1,
                "items": {
                    "type": "object",
                    "additionalProperties": False,
                    "required": ["name"],
                    "properties": {
                        "name": {"enum": [h.value for h in nlmod.Hypothesis]},
                        "expect": {"enum": ["pass", "fail"]},
                    },
                },
            },
        },
    },
    "verify-estimates": {
        "type": "object",
        "additionalProperties": False,
        "required": ["kind", "t_start", "t_end", "initial_condition", "checks"],
        "properties": {
            "kind": {"const": "verify-estimates"},
            "t_start": _number,
            "t_end": _number,
            "initial_condition": {"type": "object"},
            "beta": _positive,
            "alpha": _positive,
            "slack": _positive,
            "l2_route": {"enum": ["auto", "smooth", "gradient"]},
            "checks": {
                "type": "array",
                "minItems": 1,
                "items": {"enum": ["h_energy", "l2_energy", "gradient_energy", "decay_bound"]},
            },
        },
    },
    "pullback": {
        "type": "object",
        "additionalProperties": False,
        "required": ["kind", "horizons"],
        "properties": {
            "kind": {"const": "pullback"},
            "horizons": {"type": "array", "minItems": 1, "items": {"type": "number", "minimum": 0}},
            "n_ics": {"type": "integer", "minimum": 1},
            "ic_radius": _positive,
            "rho_list": {"type": "array", "items": {"type": "number", "minimum": 0}},
            "band": _positive,
        },
    },
    "attractor": {
        "type": "object",
        "additionalProperties": False,
        "required": ["kind"],
        "properties": {
            "kind": {"const": "attractor"},
            "tol": _positive,
            "n_ics": {"type": "integer", "minimum": 1},
            "initial_horizon": _positive,
            "max_horizon": _positive,
            "forward_time": _positive,
        },
    },
    "invariant-measure": {
        "type": "object",
        "additionalProperties": False,
        "required": ["kind"],
        "properties": {
            "kind": {"const": "invariant-measure"},
            "tol": _positive,
            "initial_horizon": _positive,
            "max_horizon": _positive,
            "functionals": {"type": "array", "items": {"type": "string"}},
        },
    },
}

_IC_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "modes": {"type": "array", "items": {"type": "integer", "minimum": 1}},
        "coeffs": {"type": "array", "items": _number},
        "random": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "n_low_modes": {"type": "integer", "minimum": 1},
                "h_radius": {"type": "number", "minimum": 0},
            },
        },
    },
}


class ConfigError(ValueError):
    """Configuration is unparseable, schema-invalid or inconsistent."""


def apply_overrides(doc: dict, overrides) -> dict:
    """Apply dotted-path key=value overrides; values parsed as JSON."""
    doc = copy.deepcopy(doc)
    for item in overrides or ():
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form key=value")
        key, raw = item.split("=", 1)
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        node = doc
        parts = key.split(".")
        for part in parts[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ConfigError(f"override path {key!r} crosses a non-object")
        node[parts[-1]] = value
    return doc


def config_hash(doc: dict) -> str:
    canon = json.dumps(doc, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()[:16]


def _build_initial_condition(spec: dict, domain: Domain, seed: int):
    jsonschema.validate(spec, _IC_SCHEMA)
    if "random" in spec:
        import numpy as np

        from .attractor import random_low_mode_field

        r = spec["random"]
        rng = np.random.default_rng((int(seed), 0x1C))
        return random_low_mode_field(
            domain, rng, n_low=r.get("n_low_modes", 4), h_radius=r.get("h_radius", 1.0)
        )
    modes = spec.get("modes", [])
    coeffs = spec.get("coeffs", [])
    if len(modes) != len(coeffs):
        raise ConfigError("initial_condition modes and coeffs differ in length")
    f = domain.zero_field()
    for k, c in zip(modes, coeffs):
        if k > domain.n_modes:
            raise ConfigError(f"initial-condition mode {k} exceeds n_modes")
        f = f + domain.basis(int(k), float(c))
    return f


class LoadedConfig:
    """Validated config with constructed core objects."""

    def __init__(self, doc: dict):
        self.doc = doc
        self.hash = config_hash(doc)
        d = doc["domain"]
        oversample = d.get("oversample", 4)
        self.domain = Domain(d["length"], d["n_modes"], oversample * d["n_modes"])
        self.nl = nlmod.from_spec(doc["nonlinearity"])
        s = doc["solver"]
        self.solver = SolverConfig(
            dt=s["dt"],
            scheme=s.get("scheme", "backward_euler"),
            nonlinear_tol=s.get("nonlinear_tol", 1e-9),
            max_iters=s.get("max_iters", 500),
            substep_safety=s.get("substep_safety", 0.5),
            anderson_depth=s.get("anderson_depth", 4),
            damping=s.get("damping", 1.0),
        )
        self.noise_doc = doc.get("noise")
        self.Q = None
        self.seeds = [0]
        self.noise_dt = self.solver.dt
        if self.noise_doc is not None:
            profiles = []
            for prof in self.noise_doc["profiles"]:
                if "mode" in prof:
                    profiles.append(self.domain.basis(prof["mode"]))
                elif "coeffs" in prof:
                    profiles.append(self.domain.field(prof["coeffs"]))
                else:
                    raise ConfigError("noise profile needs 'mode' or 'coeffs'")
            self.Q = NoiseOperator(
                tuple(profiles),
                self.noise_doc.get("smoothness_class", "C2_0"),
                tuple(self.noise_doc.get("amplitudes", ())),
            )
            self.seeds = [int(s) for s in self.noise_doc["seeds"]]
            self.noise_dt = self.noise_doc.get("dt_grid", self.solver.dt)
        self.experiment = doc["experiment"]
        self.kind = self.experiment["kind"]
        out = doc.get("output", {})
        self.out_dir = out.get("directory", "results")
        self.snapshot_stride = out.get("snapshot_stride", 0)

    def initial_condition(self, spec: dict, seed: int):
        return _build_initial_condition(spec, self.domain, seed)


def load_config(doc: dict) -> LoadedConfig:
    """Validate a config document and build the core objects."""
    try:
        jsonschema.validate(doc, SCHEMA)
        kind = doc["experiment"]["kind"]
        jsonschema.validate(doc["experiment"], _EXPERIMENT_SCHEMAS[kind])
    except jsonschema.ValidationError as exc:
        raise ConfigError(f"config rejected by schema: {exc.message}") from exc

    kind = doc["experiment"]["kind"]
    noise = doc.get("noise")
    if kind == "verify-estimates":
        checks = doc["experiment"]["checks"]
        if (
            "l2_energy" in checks
            and noise is not None
            and noise.get("smoothness_class", "C2_0") != "C2_0"
            and doc["experiment"].get("l2_route", "auto") == "smooth"
        ):
            raise ConfigError(
                "l2_energy with Laplacian forcing requires smoothness_class C2_0"
            )
    if kind in ("simulate", "verify-estimates"):
        exp = doc["experiment"]
        if exp["t_end"] < exp["t_start"]:
            raise ConfigError("t_end must not precede t_start")
    try:
        return LoadedConfig(doc)
    except (ValueError, KeyError) as exc:
        raise ConfigError(str(exc)) from exc
