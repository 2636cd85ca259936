"""Declarative experiment configs: YAML with explicit units.

Every physical quantity is a string with a unit (``"6.66 us"``,
``"325 MHz"``). Frequencies are written as ``f = omega / 2 pi`` and converted
to angular units where the library expects them; fields documented as rates
(``1/s``) are taken literally. Dimensionless numbers, counts and flags are
plain YAML scalars.
"""

from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

import numpy as np
import pint
import yaml

from . import constants as C

KINDS = ("simulate", "simulate-4wm", "raman", "decay-fit", "tomography", "tv", "compare")
STOCHASTIC_KINDS = ("raman", "decay-fit", "tomography", "tv")

_ureg = pint.UnitRegistry(on_redefinition="ignore")
# SI-valued gauss (pint's own is CGS-Gaussian) and a fibre attenuation unit
_ureg.define("G = 1e-4 tesla")
_ureg.define("dB_per_km = [attenuation]")


_ALIAS_MAP = {"dB/km": "dB_per_km", "gauss": "G"}
_ALIASES = re.compile(r"dB/km|\bgauss\b")


class ConfigError(ValueError):
    def __init__(self, message: str, line: Optional[int] = None, path: str = ""):
        where = f"line {line}: " if line else ""
        super().__init__(f"{where}{path + ': ' if path else ''}{message}")
        self.line = line
        self.key_path = path


@dataclass(frozen=True)
class Field:
    kind: str  # quantity | float | int | bool | str | floats | quantities
    default: Any = None
    dim: Optional[str] = None  # pint dimensionality for quantities
    unit: Optional[str] = None  # target SI unit
    angular: bool = False
    choices: Optional[tuple] = None
    required: bool = False


def Q(default, dim, unit, angular=False, required=False):
    return Field("quantity", default, dim, unit, angular, required=required)


FREQ = "[frequency]"
TIME = "[time]"
LENGTH = "[length]"

ENSEMBLE = {
    "optical_depth": Field("float", float(C.DEFAULT_OPTICAL_DEPTH)),
    "length": Q("5 cm", LENGTH, "m"),
    "linewidth": Q("5.75 MHz", FREQ, "Hz", angular=True),
    "ground_decoherence": Q("0 Hz", FREQ, "Hz", angular=True),
    "raman_detuning": Q("325 MHz", FREQ, "Hz", angular=True),
    "temperature": Q("100 uK", "[temperature]", "K"),
    "probe_waist": Q("110 um", LENGTH, "m"),
}
CONTROL = {
    "rabi_frequency": Q("9 MHz", FREQ, "Hz", angular=True),
    "angle": Q("0 deg", "", "rad"),
}
GEM_SCHEMA = {
    "ensemble": ENSEMBLE,
    "control": CONTROL,
    "schedule": {
        "write_width": Q("197 kHz", FREQ, "Hz"),
        "read_width": Q("210 kHz", FREQ, "Hz"),
        "hold": Q("0 s", TIME, "s"),
        "hold_fields_off": Field("bool", False),
        "flip_delay_fwhm": Field("float", 1.0),
    },
    "pulse": {
        "fwhm": Q("6.66 us", TIME, "s"),
        "amplitude": Field("float", 1.0),
        "count": Field("int", 1),
        "spacing": Q("7 us", TIME, "s"),
    },
    "grid": {
        "nz": Field("int", 512),
        "dt": Field("quantity", None, TIME, "s"),
    },
    "recall": {
        "compensate": Field("bool", False),
        "lossless": Field("bool", False),
        "passes": Field("int", 2),
        "reference_fwhm": Field("quantity", None, TIME, "s"),
    },
    "four_wave_mixing": {
        "idler_ratio": Field("float", None),
    },
}
RAMAN_SCHEMA = {
    "ensemble": {k: ENSEMBLE[k] for k in ("linewidth", "ground_decoherence", "raman_detuning")},
    "control": {"rabi_frequency": Q("5.19 MHz", FREQ, "Hz", angular=True)},
    "manifold": {
        "od_per_line": Field("floats", list(C.DEFAULT_ZEEMAN_ODS)),
        "bias_field": Q("0.5 G", "[mass] / [current] / [time] ** 2", "T"),
    },
    "scan": {
        "start": Q("-2 MHz", FREQ, "Hz", angular=True),
        "stop": Q("2 MHz", FREQ, "Hz", angular=True),
        "points": Field("int", 801),
        "noise": Field("float", 0.0),
    },
    "fit": {
        "enabled": Field("bool", True),
        "od_guess": Field("floats", None),
        "rabi_guess": Field("quantity", None, FREQ, "Hz", True),
    },
    "data": {"path": Field("str", None)},
}
DECAY_UNITS = {
    "E0": None, "zeta": ("[frequency]", "1/s"), "sigma": (LENGTH, "m"),
    "length_L": (LENGTH, "m"), "Gamma_sc": ("[frequency]", "1/s"), "t0": (TIME, "s"),
    "tau_l": (TIME, "s"), "tau_d": (TIME, "s"),
}
DECAY_SCHEMA = {
    "model": Field("str", "thermal", choices=("quadratic", "thermal", "thermal_tau_d_inf",
                                              "thermal_fixed_tau_l")),
    "guess": "decay-params",
    "free": Field("strs", None),
    "data": {"path": Field("str", None)},
    "synthetic": {
        "truth": "decay-params",
        "start": Q("0 s", TIME, "s"),
        "stop": Q("3 ms", TIME, "s"),
        "points": Field("int", 40),
        "noise": Field("float", 0.0),
    },
}
TOMO_SCHEMA = {
    "state": {"alpha_re": Field("float", 0.0), "alpha_im": Field("float", 0.0)},
    "channel": {"loss": Field("float", 1.0)},
    "heterodyne": {
        "pulses": Field("int", 3000),
        "phase_drift": Q("0 deg", "", "rad"),
        "beat_frequency": Q("3 MHz", FREQ, "Hz"),
        "sample_rate": Q("40 MHz", FREQ, "Hz"),
        "periods": Field("int", 9),
        "bins": Field("int", 41),
    },
}
TV_SCHEMA = {
    "state": {"alpha_re": Field("float", 2.0), "alpha_im": Field("float", 1.0)},
    "channel": {
        "type": Field("str", "loss", choices=("loss", "measure-prepare", "identity")),
        "eta": Field("float", 0.5),
        "gain": Field("float", 1.0),
    },
    "pulses": Field("int", 20000),
    "resamples": Field("int", 500),
    "detection": {
        "spatial_filter_transmission": Field("float", 1.0),
        "fringe_visibility_squared": Field("float", 1.0),
        "heterodyne_penalty": Field("float", 1.0),
        "detector_qe": Field("float", 1.0),
        "shotnoise_to_darknoise_factor": Field("float", 1.0),
    },
    "data": {"input": Field("str", None), "output": Field("str", None)},
}
COMPARE_SCHEMA = {
    "records": {"path": Field("str", None), "builtin": Field("bool", True)},
    "fiber": {
        "attenuation": Q("0.15 dB_per_km", "[attenuation]", "dB_per_km"),
        "group_index": Field("float", 1.468),
    },
}
KIND_SCHEMAS = {
    "simulate": GEM_SCHEMA, "simulate-4wm": GEM_SCHEMA, "raman": RAMAN_SCHEMA,
    "decay-fit": DECAY_SCHEMA, "tomography": TOMO_SCHEMA, "tv": TV_SCHEMA,
    "compare": COMPARE_SCHEMA,
}
TOP_LEVEL = {"kind", "seed", "output", "emit", "assert"}


@dataclass
class ExperimentConfig:
    kind: str
    seed: Optional[int]
    output_dir: Optional[str]
    emit: dict
    sections: dict
    asserts: dict
    source: str = ""
    raw_text: str = ""

    def resolved(self) -> dict:
        return {"kind": self.kind, "seed": self.seed, "output": self.output_dir,
                "emit": self.emit, "assert": {k: list(v) for k, v in self.asserts.items()},
                **self.sections}

    @property
    def config_hash(self) -> str:
        return hashlib.sha256(canonical_json(self.resolved()).encode()).hexdigest()


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), default=_jsonable)


def _jsonable(o):
    if isinstance(o, np.generic):
        return o.item()
    raise TypeError(f"cannot serialise {type(o).__name__}")


# --- YAML with line numbers ---------------------------------------------------

@dataclass
class _Node:
    value: Any
    line: int
    children: dict = field(default_factory=dict)


def _walk(node: yaml.Node) -> _Node:
    line = node.start_mark.line + 1
    if isinstance(node, yaml.MappingNode):
        out = _Node(None, line)
        for k, v in node.value:
            key = k.value
            if key in out.children:
                raise ConfigError(f"duplicate key '{key}'", k.start_mark.line + 1)
            child = _walk(v)
            child.line = k.start_mark.line + 1
            out.children[key] = child
        return out
    if isinstance(node, yaml.SequenceNode):
        return _Node([_walk(v).value for v in node.value], line)
    return _Node(yaml.safe_load(yaml.serialize(node)) if node.tag != "tag:yaml.org,2002:str"
                 else node.value, line)


def _parse_yaml(text: str) -> _Node:
    try:
        node = yaml.compose(text, Loader=yaml.SafeLoader)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ConfigError(f"YAML syntax error: {getattr(exc, 'problem', exc)}",
                          mark.line + 1 if mark else None) from exc
    if node is None:
        raise ConfigError("config file is empty", 1)
    if not isinstance(node, yaml.MappingNode):
        raise ConfigError("config root must be a mapping", node.start_mark.line + 1)
    return _walk(node)


# --- field conversion ---------------------------------------------------------

def parse_quantity(text, dim: str, unit: str, angular: bool = False, *, line=None, path=""):
    """Convert ``"6.66 us"`` style text to a float in ``unit`` (times 2 pi if ``angular``)."""
    if isinstance(text, bool) or not isinstance(text, str):
        raise ConfigError(f"'{text}' needs an explicit unit (e.g. \"{text} {unit}\")", line, path)
    try:
        q = _ureg.Quantity(_ALIASES.sub(lambda m: _ALIAS_MAP[m.group(0)], text))
    except Exception as exc:
        raise ConfigError(f"cannot parse quantity '{text}': {exc}", line, path) from exc
    if q.dimensionless and dim:
        raise ConfigError(f"'{text}' needs an explicit unit", line, path)
    if dim == "":
        if not q.dimensionless or q.unitless:
            raise ConfigError(f"'{text}' needs an angle unit (deg or rad)", line, path)
    elif not q.check(dim):
        raise ConfigError(f"'{text}' has the wrong dimension (expected {dim})", line, path)
    value = float(q.to(unit).magnitude)
    return value * C.TWO_PI if angular else value


def _convert(spec: Field, node: _Node, path: str):
    v = node.value
    if node.children:
        raise ConfigError("expected a value, found a section", node.line, path)
    if v is None and not spec.required:
        return spec.default if spec.kind != "quantity" else _default_quantity(spec)
    k = spec.kind
    try:
        if k == "quantity":
            return parse_quantity(v, spec.dim, spec.unit, spec.angular, line=node.line, path=path)
        if k == "bool":
            if not isinstance(v, bool):
                raise TypeError
            return v
        if k == "int":
            if isinstance(v, bool) or not isinstance(v, int):
                raise TypeError
            return v
        if k == "float":
            if isinstance(v, bool) or not isinstance(v, (int, float)):
                raise TypeError
            return float(v)
        if k == "str":
            if not isinstance(v, str):
                raise TypeError
            if spec.choices and v not in spec.choices:
                raise ConfigError(f"'{v}' is not one of {list(spec.choices)}", node.line, path)
            return v
        if k == "floats":
            if not isinstance(v, list) or any(isinstance(x, bool) or not isinstance(x, (int, float))
                                              for x in v):
                raise TypeError
            return [float(x) for x in v]
        if k == "strs":
            if not isinstance(v, list) or any(not isinstance(x, str) for x in v):
                raise TypeError
            return list(v)
    except TypeError:
        if k in ("float", "int") and isinstance(v, str):
            raise ConfigError(f"'{v}' should be a plain number (this field is dimensionless)",
                              node.line, path) from None
        raise ConfigError(f"expected {k}, got {v!r}", node.line, path) from None
    raise AssertionError(k)


def _default_quantity(spec: Field):
    if spec.default is None:
        return None
    return parse_quantity(spec.default, spec.dim, spec.unit, spec.angular)


def _defaults(schema) -> dict:
    out = {}
    for k, spec in schema.items():
        if isinstance(spec, dict):
            out[k] = _defaults(spec)
        elif spec == "decay-params":
            out[k] = None
        elif spec.kind == "quantity":
            out[k] = _default_quantity(spec)
        else:
            out[k] = spec.default
    return out


def _decay_params(node: _Node, path: str) -> dict:
    if not node.children:
        raise ConfigError("expected a mapping of decay parameters", node.line, path)
    out = {}
    for k, child in node.children.items():
        if k not in DECAY_UNITS:
            raise ConfigError(f"unknown key '{k}'", child.line, f"{path}.{k}")
        unit = DECAY_UNITS[k]
        if unit is None:
            out[k] = _convert(Field("float"), child, f"{path}.{k}")
        else:
            if isinstance(child.value, str) and child.value.strip() == "inf":
                out[k] = float("inf")
            else:
                out[k] = parse_quantity(child.value, unit[0], unit[1], line=child.line,
                                        path=f"{path}.{k}")
    return out


def _resolve(schema: dict, node: _Node, path: str) -> dict:
    out = _defaults(schema)
    for key, child in node.children.items():
        sub = f"{path}.{key}" if path else key
        if key not in schema:
            raise ConfigError(f"unknown key '{key}'", child.line, sub)
        spec = schema[key]
        if isinstance(spec, dict):
            if not child.children:
                if child.value is None:
                    continue
                raise ConfigError("expected a section (mapping)", child.line, sub)
            out[key] = _resolve(spec, child, sub)
        elif spec == "decay-params":
            out[key] = _decay_params(child, sub)
        else:
            out[key] = _convert(spec, child, sub)
    return out


def load_config(path) -> ExperimentConfig:
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"config file '{p}' does not exist")
    return parse_config(p.read_text(), str(p))


def parse_config(text: str, source: str = "<string>") -> ExperimentConfig:
    root = _parse_yaml(text)
    top = root.children
    if "kind" not in top:
        raise ConfigError("missing required key 'kind'", 1)
    kind = top["kind"].value
    if kind not in KINDS:
        raise ConfigError(f"unknown kind '{kind}'; choose from {list(KINDS)}", top["kind"].line, "kind")
    schema = KIND_SCHEMAS[kind]
    sections = {}
    body = _Node(None, root.line, {k: v for k, v in top.items() if k not in TOP_LEVEL})
    sections = _resolve(schema, body, "")

    seed = None
    if "seed" in top:
        seed = _convert(Field("int", required=True), top["seed"], "seed")
        if seed < 0:
            raise ConfigError("seed must be non-negative", top["seed"].line, "seed")
    if kind in STOCHASTIC_KINDS and seed is None:
        raise ConfigError(f"kind '{kind}' is stochastic and needs a 'seed'", 1)

    output_dir = None
    if "output" in top:
        output_dir = _convert(Field("str", required=True), top["output"], "output")

    emit = {"csv": True, "json": True, "plotdata": False}
    if "emit" in top:
        emit.update(_resolve({k: Field("bool", v) for k, v in emit.items()}, top["emit"], "emit"))

    asserts = {}
    if "assert" in top:
        for name, child in top["assert"].children.items():
            v = child.value
            if (not isinstance(v, list) or len(v) != 2
                    or any(isinstance(x, bool) or not isinstance(x, (int, float)) for x in v)):
                raise ConfigError("assert bounds must be [low, high] numbers", child.line,
                                  f"assert.{name}")
            asserts[name] = (float(v[0]), float(v[1]))
    _check_kind(kind, sections, top)
    return ExperimentConfig(kind, seed, output_dir, emit, sections, asserts, source, text)


def _check_kind(kind: str, sections: dict, top: dict) -> None:
    if kind == "decay-fit":
        if sections["guess"] is None:
            raise ConfigError("decay-fit needs a 'guess' section", 1)
        has_data = sections["data"]["path"] is not None
        has_syn = "synthetic" in top
        if has_data == has_syn:
            raise ConfigError("decay-fit needs exactly one of 'data.path' or 'synthetic'", 1)
        if has_syn and sections["synthetic"]["truth"] is None:
            raise ConfigError("'synthetic' needs a 'truth' parameter set", top["synthetic"].line)
    if kind == "tv":
        d = sections["data"]
        if (d["input"] is None) != (d["output"] is None):
            raise ConfigError("tv data needs both 'input' and 'output' files", 1)
