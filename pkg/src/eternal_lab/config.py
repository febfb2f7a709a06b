"""Experiment configuration: JSON schema, parsing and semantic validation.

A config names a domain, a grid spacing, operator coefficients (strings in
the expression grammar of :mod:`eternal_lab.expr`), a source, a time
discretisation and an experiment ``kind`` with its parameters. A ``suite``
holds a list of experiments; each one inherits every field of the suite and
overrides what it names (``coefficients``, ``params`` and ``tolerances`` are
merged key by key).
"""

from __future__ import annotations

import copy
import hashlib
import json
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import jsonschema
import numpy as np

from .domain import CylinderWindow, SpatialDomain, build_grid
from .errors import ConfigError, EternalLabError
from .evolution import SCHEMES
from .expr import ExpressionError, parse_number
from .operator import FORMS, SourceSpec, make_spec, validate

KINDS = ("eternal", "rates", "comparison", "contraction", "max_principle", "exhaustion", "decompose", "suite")

DEFAULT_TOLERANCES = {
    "normalization": 1e-10,
    "route_spread": 1e-6,
    "monotone": 1e-12,
    "rate_abs": 1e-2,
    "delta_rel": 2e-2,
    "c_star": 1e-5,
    "K_abs": 1e-3,
    "zeta_rel": 0.1,
    "tail": 1e-2,
    "bound_var": 0.05,
    "cauchy_ratio": 0.2,
    "u0_sup": 1e-3,
    "a_abs": 1e-6,
    "residual": 1e-8,
    "order": 1e-12,
}

# parameters every kind needs; the rest have defaults
REQUIRED_PARAMS = {
    "contraction": ("initial",),
    "exhaustion": ("N_list", "W"),
    "decompose": ("N_list", "W"),
}

_number = {"oneOf": [{"type": "number"}, {"type": "string"}]}
_field = {"oneOf": [{"type": "number"}, {"type": "string"}]}

SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "ExperimentConfig",
    "type": "object",
    "$defs": {
        "number": _number,
        "domain": {
            "type": "object",
            "required": ["kind"],
            "properties": {
                "kind": {"enum": ["interval", "rectangle", "polygon"]},
                "bounds": {"type": "array", "items": _number},
                "vertices": {"type": "array", "items": {"type": "array", "items": _number, "minItems": 2, "maxItems": 2}},
                "origin": {"oneOf": [_number, {"type": "array", "items": _number}]},
            },
            "additionalProperties": False,
        },
        "coefficients": {
            "type": "object",
            "properties": {
                "a": {"oneOf": [_field, {"type": "array", "items": {"type": "array", "items": _field}}]},
                "b": {"type": "array", "items": _field},
                "c": _field,
                "lam": _number,
                "Lam": _number,
                "form": {"enum": list(FORMS)},
                "period": _number,
            },
            "additionalProperties": False,
        },
        "experiment": {
            "type": "object",
            "properties": {
                "name": {"type": "string", "pattern": "^[A-Za-z0-9_.-]+$"},
                "kind": {"enum": list(KINDS)},
                "domain": {"$ref": "#/$defs/domain"},
                "h": {"oneOf": [_number, {"type": "array", "items": _number}]},
                "coefficients": {"$ref": "#/$defs/coefficients"},
                "source": _field,
                "scheme": {"enum": list(SCHEMES)},
                "dt": _number,
                "seed": {"type": "integer", "minimum": 0},
                "params": {"type": "object"},
                "tolerances": {"type": "object", "additionalProperties": {"type": "number", "exclusiveMinimum": 0}},
                "regress_tolerances": {"type": "object", "additionalProperties": {"type": "number", "minimum": 0}},
                "output_dir": {"type": "string"},
                "experiments": {"type": "array", "items": {"$ref": "#/$defs/experiment"}},
            },
            "additionalProperties": False,
        },
    },
    "allOf": [{"$ref": "#/$defs/experiment"}, {"required": ["kind", "domain", "h"]}],
}

_MERGED = ("coefficients", "params", "tolerances", "regress_tolerances")
_NOT_INHERITED = ("experiments", "name", "output_dir")


def _merge(base: dict, over: dict) -> dict:
    out = {k: copy.deepcopy(v) for k, v in base.items() if k not in _NOT_INHERITED}
    if base.get("kind") == "suite":
        out.pop("kind", None)
    for k, v in over.items():
        if k in _MERGED and isinstance(out.get(k), dict):
            out[k] = {**out[k], **v}
        else:
            out[k] = copy.deepcopy(v)
    return out


def config_hash(data: dict) -> str:
    """SHA-256 of the canonical JSON of a config, ignoring where output goes."""
    clean = {k: v for k, v in data.items() if k != "output_dir"}
    text = json.dumps(clean, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()


def rng_stream(seed: int, name: str) -> np.random.Generator:
    """Independent generator for a named purpose, derived from one config seed."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(zlib.crc32(name.encode()),))
    return np.random.default_rng(ss)


@dataclass
class ExperimentConfig:
    name: str
    kind: str
    raw: dict = field(repr=False)
    domain: SpatialDomain = field(repr=False)
    h: object = None
    coefficients: dict = field(default_factory=dict)
    source: object = "0"
    scheme: str = "implicit_euler"
    dt: float = 1e-3
    seed: int = 0
    params: dict = field(default_factory=dict)
    tolerances: dict = field(default_factory=dict)
    regress_tolerances: dict = field(default_factory=dict)
    output_dir: str | None = None
    experiments: list = field(default_factory=list)

    @property
    def hash(self) -> str:
        return config_hash(self.raw)

    def tol(self, key: str) -> float:
        return float(self.tolerances.get(key, DEFAULT_TOLERANCES[key]))

    def param(self, key: str, default=None):
        return self.params.get(key, default)

    def number(self, key: str, default=None) -> float:
        value = self.params.get(key, default)
        return None if value is None else parse_number(value)

    def window(self, key: str = "window", default=(0.0, 5.0)) -> CylinderWindow:
        lo, hi = (parse_number(v) for v in self.params.get(key, default))
        return CylinderWindow(lo, hi, self.dt)

    def rng(self, name: str) -> np.random.Generator:
        return rng_stream(self.seed, f"{self.name}/{name}")

    def grid(self):
        return build_grid(self.domain, self.h)

    def spec(self, **override):
        kw = dict(self.coefficients)
        kw.update(override)
        dim = self.domain.dim
        for key in ("lam", "Lam", "period"):
            if key in kw and kw[key] is not None:
                kw[key] = parse_number(kw[key])
        if "b" in kw and kw["b"] is not None and len(kw["b"]) != dim:
            raise ConfigError(f"b has {len(kw['b'])} components on a {dim}D domain")
        kw.setdefault("lam", 1.0)
        kw.setdefault("Lam", max(1.0, kw["lam"]))
        return make_spec(dim=dim, **kw)

    def source_spec(self) -> SourceSpec:
        return SourceSpec.of(self.source)


def _domain(d: dict) -> SpatialDomain:
    kind = d["kind"]
    if kind == "interval":
        lo, hi = (parse_number(v) for v in d.get("bounds", ()))
        return SpatialDomain.interval(lo, hi, origin=parse_number(d.get("origin", 0.0)))
    origin = tuple(parse_number(v) for v in d.get("origin", (0.0, 0.0)))
    if kind == "rectangle":
        x0, x1, y0, y1 = (parse_number(v) for v in d.get("bounds", ()))
        return SpatialDomain.rectangle(x0, x1, y0, y1, origin=origin)
    verts = [tuple(parse_number(v) for v in p) for p in d.get("vertices", ())]
    return SpatialDomain.polygon(verts, origin=origin)


def _build(data: dict, name: str) -> ExperimentConfig:
    kind = data.get("kind")
    if kind is None:
        raise ConfigError(f"experiment {name!r} has no kind")
    try:
        domain = _domain(data["domain"])
        h = data["h"]
        h = [parse_number(v) for v in h] if isinstance(h, list) else parse_number(h)
        dt = parse_number(data.get("dt", 1e-3))
    except (KeyError, TypeError, ValueError, EternalLabError) as exc:
        raise ConfigError(f"{name}: {exc}") from None
    if not dt > 0:
        raise ConfigError(f"{name}: dt must be positive, got {dt}")
    if np.any(np.asarray(h, dtype=float) <= 0):
        raise ConfigError(f"{name}: h must be positive, got {h}")
    cfg = ExperimentConfig(
        name=name,
        kind=kind,
        raw=data,
        domain=domain,
        h=h,
        coefficients=dict(data.get("coefficients", {})),
        source=data.get("source", "0"),
        scheme=data.get("scheme", "implicit_euler"),
        dt=dt,
        seed=int(data.get("seed", 0)),
        params=dict(data.get("params", {})),
        tolerances=dict(data.get("tolerances", {})),
        regress_tolerances=dict(data.get("regress_tolerances", {})),
        output_dir=data.get("output_dir"),
    )
    unknown = set(cfg.tolerances) - set(DEFAULT_TOLERANCES)
    if unknown:
        raise ConfigError(f"{name}: unknown tolerance keys {sorted(unknown)}")
    missing = [p for p in REQUIRED_PARAMS.get(kind, ()) if p not in cfg.params]
    if missing:
        raise ConfigError(f"{name}: kind {kind!r} needs params {missing}")
    if kind == "suite":
        subs = data.get("experiments") or []
        if not subs:
            raise ConfigError(f"{name}: a suite needs a non-empty 'experiments' list")
        names = set()
        for i, sub in enumerate(subs):
            sub_name = sub.get("name", f"{sub.get('kind', 'exp')}_{i}")
            if sub_name in names:
                raise ConfigError(f"{name}: duplicate experiment name {sub_name!r}")
            names.add(sub_name)
            if sub.get("kind") == "suite":
                raise ConfigError(f"{name}: suites do not nest")
            cfg.experiments.append(_build(_merge(data, sub), sub_name))
    else:
        _check_semantics(cfg)
    return cfg


def _check_semantics(cfg: ExperimentConfig) -> None:
    """Build the grid and operator once so bad inputs fail before any solve."""
    try:
        grid = cfg.grid()
        spec = cfg.spec()
        cfg.source_spec()
    except (ExpressionError, TypeError, ValueError, EternalLabError) as exc:
        raise ConfigError(f"{cfg.name}: {exc}") from None
    if spec.time_dependence == "periodic":
        times = list(np.linspace(0.0, spec.period, 9))
    elif spec.time_dependence == "general":
        times = list(np.linspace(-5.0, 5.0, 21))
    else:
        times = [0.0]
    report = validate(spec, grid, times)
    if not report.passed:
        details = "; ".join(str(exc) for exc in report.failures)
        raise ConfigError(f"{cfg.name}: coefficient assumptions fail: {details}")
    if cfg.scheme not in SCHEMES:
        raise ConfigError(f"{cfg.name}: unknown scheme {cfg.scheme!r}")


def parse_config(data: dict) -> ExperimentConfig:
    """Validate ``data`` against :data:`SCHEMA` and the semantic rules."""
    try:
        jsonschema.validate(data, SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"config invalid at {where}: {exc.message}") from None
    return _build(data, data.get("name", data["kind"]))


def bundled_config_path(name: str) -> Path:
    return Path(__file__).with_name("configs") / name


def load_config(path) -> ExperimentConfig:
    """Load a config file; a bare name falls back to the bundled configs."""
    p = Path(path)
    if not p.exists() and bundled_config_path(p.name).exists() and p.parent == Path("."):
        p = bundled_config_path(p.name)
    try:
        data = json.loads(p.read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path} is not valid JSON: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be an object")
    return parse_config(data)
