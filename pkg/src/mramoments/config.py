"""Experiment configuration: JSON files validated against a schema.

Errors name the offending field and, where it can be located, the line of
the file, e.g. ``run.json:4: field 'K': -1 is less than the minimum of 1``.
"""

import json
import re
from dataclasses import dataclass

from jsonschema import Draft202012Validator

from .models import MODEL_NAMES
from .rep import ValidationError
from .solver import METHODS

SUBCOMMANDS = ("bound", "certify", "recover", "sweep", "simulate")
U64_MAX = 2 ** 64 - 1

_pos_int = {"type": "integer", "minimum": 1}
_seed = {"type": "integer", "minimum": 0, "maximum": U64_MAX}
_nonneg = {"type": "number", "minimum": 0}

SCHEMA = {
    "type": "object",
    "required": ["model"],
    "properties": {
        "model": {"enum": list(MODEL_NAMES)},
        "N": _pos_int,
        "L": {"type": "integer", "minimum": 0},
        "L_prime": {"type": "integer", "minimum": 0},
        "R": _pos_int,
        "P": _pos_int,
        "K": _pos_int,
        "seed": _seed,
        "seeds": {"type": "array", "items": _seed, "minItems": 1},
        "trials": _pos_int,
        "basis": {"enum": ["random", "standard"]},
        "grams": {"enum": ["exact", "empirical"]},
        "sigma": _nonneg,
        "sigmas": {"type": "array", "items": _nonneg, "minItems": 1},
        "n": _pos_int,
        "ns": {"type": "array", "items": _pos_int, "minItems": 1},
        "restarts": _pos_int,
        "max_iters": _pos_int,
        "tol": {"type": "number", "exclusiveMinimum": 0},
        "method": {"enum": list(METHODS)},
        "gate": {"type": "number", "exclusiveMinimum": 0},
        "normalize": {"type": "boolean"},
        "timing": {"type": "boolean"},
        "trace": {"type": "string"},
        "K_range": {"type": "array", "items": _pos_int, "minItems": 1},
    },
    "additionalProperties": False,
    "allOf": [
        {"if": {"properties": {"model": {"enum": ["cyclic", "dihedral"]}}},
         "then": {"required": ["N"]}},
        {"if": {"properties": {"model": {"enum": ["rotated_images", "tomography_2d"]}}},
         "then": {"required": ["L_prime", "R"]}},
        {"if": {"properties": {"model": {"const": "cryo_em"}}},
         "then": {"required": ["L", "R"]}},
    ],
}

REQUIRED = {
    "bound": [],
    "certify": ["K"],
    "recover": ["K"],
    "sweep": ["K", "sigmas", "ns", "seeds"],
    "simulate": ["n", "sigma"],
}

DEFAULTS = {
    "seed": 0,
    "trials": 20,
    "basis": "random",
    "grams": "exact",
    "sigma": 0.0,
    "restarts": 25,
    "max_iters": 600,
    "tol": 1e-9,
    "method": "douglas_rachford",
    "gate": 1e-6,
    "normalize": False,
    "timing": False,
}


class ConfigError(ValidationError):
    """Invalid configuration; the message carries file/line/field context."""


@dataclass
class ExperimentConfig:
    subcommand: str
    params: dict
    source: str = "<config>"

    def __getitem__(self, key):
        return self.params[key]

    def get(self, key, default=None):
        return self.params.get(key, default)

    def provenance_dict(self):
        """Everything that determines the outputs (not threads or paths)."""
        return {"subcommand": self.subcommand, **self.params}


def _locate(text, path):
    """Best-effort line number of the last key in ``path``."""
    if text is None:
        return None
    keys = [p for p in path if isinstance(p, str)]
    if not keys:
        return None
    m = re.search(r'"%s"\s*:' % re.escape(keys[-1]), text)
    return text.count("\n", 0, m.start()) + 1 if m else None


def _where(source, text, path):
    line = _locate(text, list(path))
    prefix = f"{source}:{line}" if line else source
    name = ".".join(str(p) for p in path)
    return f"{prefix}: field '{name}'" if name else prefix


def validate(subcommand, doc, source="<config>", text=None):
    if subcommand not in SUBCOMMANDS:
        raise ConfigError(f"unknown subcommand {subcommand!r}")
    if not isinstance(doc, dict):
        raise ConfigError(f"{source}: top level must be a JSON object")
    errors = sorted(Draft202012Validator(SCHEMA).iter_errors(doc), key=lambda e: list(e.absolute_path))
    if errors:
        msgs = []
        for e in errors:
            path = list(e.absolute_path)
            extra = re.findall(r"'([^']+)' (?:was|were) unexpected", e.message)
            if not path and extra:
                path = [extra[0]]
            msgs.append(f"{_where(source, text, path)}: {e.message}")
        raise ConfigError("\n".join(msgs))
    missing = [k for k in REQUIRED[subcommand] if k not in doc]
    if missing:
        raise ConfigError(f"{source}: subcommand {subcommand!r} needs field(s) {', '.join(missing)}")
    if doc.get("grams") == "empirical" and not {"n", "sigma"} <= doc.keys():
        raise ConfigError(f"{source}: empirical grams need fields 'n' and 'sigma'")
    params = {**DEFAULTS, **doc}
    return ExperimentConfig(subcommand, params, source)


def parse(subcommand, text, source="<config>"):
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{source}:{exc.lineno}:{exc.colno}: invalid JSON: {exc.msg}") from exc
    return validate(subcommand, doc, source, text)


def load(subcommand, path):
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from exc
    return parse(subcommand, text, str(path))
