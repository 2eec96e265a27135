"""Scenario files and the built-in scenario registry.

A scenario is a JSON document that binds a domain, a metric, four maps, the
auxiliary and control functions, a condition form and the run settings into
one reproducible configuration::

    {
      "name": "banach",
      "domain": {"lo": [0], "hi": [1]},
      "metric": "euclidean",
      "maps": {"A": "identity", "B": "identity", "S": "x/2", "T": "x/2"},
      "psi": {"family": "scaled_power", "p": 1, "q": 0, "r": 0, "lam": 1},
      "phi": {"kind": "linear", "r": 0.5},
      "form": {"tag": "phi_max"},
      "iteration": {"x0": [1], "max_iter": 200},
      "sampling": {"grid": 101},
      ...
    }

Built-ins are stored in the same form and go through the same validation.
"""
from __future__ import annotations

import copy
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .auxiliary import AuxFunction, ControlFunction
from .contraction import COND_TOL, ConditionForm, MapQuadruple
from .errors import ConfigurationError, ParseError, ValidationError
from .iteration import PREMISE_TOL, IterationConfig
from .maps import PiecewiseMap
from .metric import Domain, Grid, Metric, as_point, generator_from_dict, sample

PROVENANCE = ("literature", "derived", "trivial", "snapshot")
EXPECTATION_CHECKS = ("verify", "fixed_point", "coincidence", "inclusions", "compat")
COVERAGE_PROBE = 101
SECTIONS = (
    "name", "description", "provenance", "domain", "metric", "maps", "psi", "phi", "form",
    "iteration", "sampling", "cond_tol", "certify", "compat", "coincidence", "expectations",
)


@dataclass(frozen=True)
class Scenario:
    name: str
    domain: Domain
    metric: Metric
    maps: MapQuadruple
    psi: AuxFunction
    phi: Optional[ControlFunction]
    form: ConditionForm
    iteration: IterationConfig
    sampling: object
    cond_tol: float = COND_TOL
    probes: tuple = ()
    compat: tuple = ()
    coincidence: tuple = ()
    expectations: tuple = ()
    description: str = ""
    provenance: str = "derived"

    def samples(self, generator=None):
        return sample(self.domain, generator or self.sampling)

    @property
    def compat_settings(self) -> dict:
        return _thaw(self.compat)

    @property
    def coincidence_settings(self) -> dict:
        return _thaw(self.coincidence)

    def to_dict(self) -> dict:
        maps = {k: self.maps[k].to_spec() for k in ("A", "B", "S", "T")}
        form = {"tag": self.form.tag}
        if self.form.tag == "linear":
            form["r"] = self.form.r
        if self.form.is_sum:
            form.update(r=self.form.r, s=self.form.s)
        return {
            "name": self.name,
            "description": self.description,
            "provenance": self.provenance,
            "domain": self.domain.to_dict(),
            "metric": self.metric.kind,
            "maps": maps,
            "psi": self.psi.to_dict(),
            "phi": None if self.phi is None else self.phi.to_dict(),
            "form": form,
            "iteration": self.iteration.to_dict(),
            "sampling": self.sampling.to_dict(),
            "cond_tol": self.cond_tol,
            "certify": {"probes": [list(p) for p in self.probes]},
            "compat": _thaw(self.compat),
            "coincidence": _thaw(self.coincidence),
            "expectations": [_thaw(e) for e in self.expectations],
        }


def _freeze(value):
    """Hashable, order-stable copy of a JSON tree (dicts become sorted item tuples)."""
    if isinstance(value, dict):
        return tuple(sorted(((k, _freeze(v)) for k, v in value.items()), key=lambda kv: kv[0]))
    if isinstance(value, list):
        return ("__list__",) + tuple(_freeze(v) for v in value)
    return value


def _thaw(value):
    if isinstance(value, tuple):
        if value and value[0] == "__list__":
            return [_thaw(v) for v in value[1:]]
        return {k: _thaw(v) for k, v in value}
    return value


def _section(doc: dict, key: str, default=None):
    value = doc.get(key, default)
    return copy.deepcopy(value)


def _build_maps(spec, domain: Domain, eq_tol: float) -> dict:
    if not isinstance(spec, dict):
        raise ConfigurationError("'maps' must be an object with keys A, B, S, T")
    maps = dict(spec)
    # a single pair (A, T) stands for the quadruple (A, A, T, T)
    maps.setdefault("B", maps.get("A"))
    maps.setdefault("S", maps.get("T"))
    missing = [k for k in ("A", "B", "S", "T") if maps.get(k) is None]
    if missing:
        raise ConfigurationError(f"missing map(s): {', '.join(missing)}")
    extra = set(maps) - {"A", "B", "S", "T"}
    if extra:
        raise ConfigurationError(f"unexpected map name(s): {sorted(extra)}")
    out = {}
    for k in ("A", "B", "S", "T"):
        try:
            out[k] = PiecewiseMap.from_spec(maps[k], domain, eq_tol)
        except ConfigurationError as exc:
            raise ConfigurationError(f"map {k}: {exc}") from exc
    return out


def _validate_maps(maps: dict, domain: Domain):
    probe = sample(domain, Grid(COVERAGE_PROBE)).array
    for name, m in maps.items():
        holes = m.uncovered(probe)
        if np.any(holes):
            first = ", ".join(f"{tuple(map(float, p))}" for p in probe[holes][:3])
            raise ValidationError("branch coverage", f"map {name} has no branch for {first}")
        images = m.evaluate_many(probe, strict=False)
        bad = ~np.all(np.isfinite(images), axis=1)
        bad |= ~domain.contains_many(np.where(np.isfinite(images), images, 0.0), m.eq_tol)
        if np.any(bad):
            p = probe[np.flatnonzero(bad)[0]]
            raise ValidationError("self-map", f"map {name} sends {tuple(map(float, p))} outside the domain")


def _build_form(spec, psi: AuxFunction, phi: Optional[ControlFunction]) -> ConditionForm:
    if isinstance(spec, str):
        spec = {"tag": spec}
    if not isinstance(spec, dict) or "tag" not in spec:
        raise ConfigurationError("'form' needs a tag")
    extra = set(spec) - {"tag", "r", "s"}
    if extra:
        raise ConfigurationError(f"unexpected form field(s): {sorted(extra)}")
    return ConditionForm(spec["tag"], psi, phi, spec.get("r"), spec.get("s"))


def _build_expectations(items) -> tuple:
    if items is None:
        return ()
    if not isinstance(items, list):
        raise ConfigurationError("'expectations' must be a list")
    out = []
    for item in items:
        if not isinstance(item, dict) or "check" not in item or "expect" not in item:
            raise ConfigurationError(f"expectation needs 'check' and 'expect': {item!r}")
        if item["check"] not in EXPECTATION_CHECKS:
            raise ConfigurationError(f"unknown expectation check {item['check']!r}")
        if item.get("provenance") not in PROVENANCE:
            raise ValidationError("expectation provenance", f"{item!r} needs provenance in {PROVENANCE}")
        out.append(_freeze(item))
    return tuple(out)


def from_dict(doc: dict) -> Scenario:
    """Build and validate a scenario from its document form."""
    if not isinstance(doc, dict):
        raise ConfigurationError("a scenario document must be a JSON object")
    unknown = set(doc) - set(SECTIONS)
    if unknown:
        raise ConfigurationError(f"unknown scenario section(s): {sorted(unknown)}")
    for key in ("domain", "maps", "psi", "form", "iteration"):
        if key not in doc:
            raise ConfigurationError(f"scenario is missing section {key!r}")
    dom = _section(doc, "domain")
    domain = Domain(as_point(dom["lo"]), as_point(dom["hi"]))
    metric = Metric(_section(doc, "metric", "euclidean"))
    it = _section(doc, "iteration")
    if "x0" not in it:
        raise ConfigurationError("iteration.x0 is required")
    extra = set(it) - {"x0", "max_iter", "conv_tol", "eq_tol", "preimage_tol", "resolution"}
    if extra:
        raise ConfigurationError(f"unexpected iteration field(s): {sorted(extra)}")
    cfg = IterationConfig(**it)
    if not domain.contains(cfg.x0, cfg.eq_tol):
        raise ValidationError("x0 in domain", f"x0 = {cfg.x0}")

    maps = _build_maps(_section(doc, "maps"), domain, cfg.eq_tol)
    _validate_maps(maps, domain)
    quad = MapQuadruple(maps["A"], maps["B"], maps["S"], maps["T"], metric)

    psi = AuxFunction.from_dict(_section(doc, "psi"))
    phi_doc = _section(doc, "phi")
    phi = None if phi_doc is None else ControlFunction.from_dict(phi_doc)
    form = _build_form(_section(doc, "form"), psi, phi)
    form.maps_for(quad)
    phi = form.phi

    sampling = generator_from_dict(_section(doc, "sampling", {"grid": 101}))
    cond_tol = float(doc.get("cond_tol", COND_TOL))
    if not cond_tol > 0:
        raise ConfigurationError("cond_tol must be positive")

    certify_doc = _section(doc, "certify", {}) or {}
    probes = tuple(as_point(p) for p in certify_doc.get("probes", []))
    for p in probes:
        if not domain.contains(p, cfg.eq_tol):
            raise ValidationError("probe in domain", f"probe start {p}")

    compat = _section(doc, "compat", {}) or {}
    if compat:
        compat.setdefault("horizon", 10**6)
        compat.setdefault("tol", 1e-9)
        compat.setdefault("premise_tol", PREMISE_TOL)
        _check_pair_names(compat, "compat")
        if "witness" not in compat:
            raise ConfigurationError("compat.witness is required")
    coincidence = _section(doc, "coincidence", {}) or {}
    if coincidence:
        coincidence.setdefault("eq_tol", cfg.eq_tol)
        _check_pair_names(coincidence, "coincidence")

    return Scenario(
        name=str(doc.get("name", "unnamed")),
        domain=domain,
        metric=metric,
        maps=quad,
        psi=psi,
        phi=phi,
        form=form,
        iteration=cfg,
        sampling=sampling,
        cond_tol=cond_tol,
        probes=probes,
        compat=_freeze(compat),
        coincidence=_freeze(coincidence),
        expectations=_build_expectations(_section(doc, "expectations")),
        description=str(doc.get("description", "")),
        provenance=str(doc.get("provenance", "derived")),
    )


def _check_pair_names(section: dict, where: str):
    pair = section.setdefault("pair", ["A", "T"])
    if not (isinstance(pair, list) and len(pair) == 2 and all(p in ("A", "B", "S", "T") for p in pair)):
        raise ConfigurationError(f"{where}.pair must name two of A, B, S, T")


# -- overrides --------------------------------------------------------------


def parse_override(text: str) -> tuple:
    """``"iteration.conv_tol=1e-10"`` -> ``(["iteration", "conv_tol"], 1e-10)``.

    Values are read as JSON when possible and as plain strings otherwise.
    """
    key, sep, raw = text.partition("=")
    if not sep or not key.strip():
        raise ConfigurationError(f"override must look like key=value, got {text!r}")
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key.strip().split("."), value


def apply_overrides(doc: dict, overrides) -> dict:
    doc = copy.deepcopy(doc)
    for item in overrides:
        path, value = parse_override(item) if isinstance(item, str) else item
        node = doc
        for part in path[:-1]:
            child = node.get(part)
            if child is None:
                child = node[part] = {}
            if not isinstance(child, dict):
                raise ConfigurationError(f"cannot override inside non-object {'.'.join(path)}")
            node = child
        if path[:-1] == ["sampling"] and path[-1] in ("grid", "uniform") and path[-1] not in node:
            # switching generator kind drops the other kind's fields
            node.clear()
        node[path[-1]] = value
    return doc


# -- files ------------------------------------------------------------------


def loads(text: str, overrides=()) -> Scenario:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        line = text.splitlines()[exc.lineno - 1] if text.splitlines() else ""
        raise ParseError(f"{exc.msg} (line {exc.lineno}, column {exc.colno})", line, exc.colno - 1) from None
    return from_dict(apply_overrides(doc, overrides))


def load(path, overrides=()) -> Scenario:
    text = Path(path).read_text(encoding="utf-8")
    return loads(text, overrides)


def dumps(sc: Scenario) -> str:
    return json.dumps(sc.to_dict(), indent=2, sort_keys=True) + "\n"


def save(sc: Scenario, path) -> None:
    Path(path).write_text(dumps(sc), encoding="utf-8")


# -- registry ---------------------------------------------------------------

_STEP_A = [
    {"if": "x < 3/8", "then": "11/32"},
    {"if": "3/8 <= x < 1/2", "then": "(1+x)/4"},
    {"if": "x >= 1/2", "then": "(1+x)/2"},
]
_STEP_T = [
    {"if": "x < 3/8", "then": "10/32"},
    {"if": "3/8 <= x < 1/2", "then": "3/8"},
    {"if": "x >= 1/2", "then": "1"},
]
_UNIT = {"lo": [0.0], "hi": [1.0]}
_PROBES = {"probes": [[1.0], [0.7], [0.31]]}

_BUILTINS = {
    "weakly_compatible_steps": {
        "description": "Step maps A, T on [0, 1.2] that are weakly compatible but not compatible; "
                       "quadruple (A, A, T, T).",
        "provenance": "literature",
        "domain": {"lo": [0.0], "hi": [1.2]},
        "maps": {"A": _STEP_A, "B": _STEP_A, "S": _STEP_T, "T": _STEP_T},
        "psi": {"family": "power_sum", "p": 1, "q": 1},
        "phi": {"kind": "linear", "r": 0.9},
        "form": {"tag": "phi_max"},
        "iteration": {"x0": [0.6]},
        "sampling": {"grid": 101},
        "certify": {"probes": [[0.5], [0.8], [1.2]]},
        "compat": {"pair": ["A", "T"], "witness": "1/2 - 1/n", "horizon": 1000000},
        "coincidence": {"pair": ["A", "T"], "grid": 1201, "eq_tol": 1e-6},
        "expectations": [
            {"check": "coincidence", "expect": [[1.0]], "provenance": "derived"},
            {"check": "compat", "expect": "not compatible", "provenance": "literature"},
            {"check": "inclusions", "expect": [[0.3125]], "provenance": "derived"},
            {"check": "verify", "expect": "fail", "provenance": "snapshot"},
            {"check": "fixed_point", "expect": [1.0], "provenance": "derived"},
        ],
    },
    "banach": {
        "description": "A = B = identity, S = T = x/2 on [0, 1]; the plain contraction.",
        "provenance": "derived",
        "domain": _UNIT,
        "maps": {"A": "identity", "B": "identity", "S": "x/2", "T": "x/2"},
        "psi": {"family": "scaled_power", "p": 1, "q": 0, "r": 0, "lam": 1},
        "phi": {"kind": "linear", "r": 0.5},
        "form": {"tag": "phi_max"},
        "iteration": {"x0": [1.0]},
        "sampling": {"grid": 101},
        "certify": _PROBES,
        "compat": {"pair": ["A", "T"], "witness": "1/n", "horizon": 1000000},
        "coincidence": {"pair": ["A", "T"], "grid": 101},
        "expectations": [
            {"check": "verify", "expect": "pass", "provenance": "derived"},
            {"check": "fixed_point", "expect": [0.0], "provenance": "derived"},
            {"check": "inclusions", "expect": [], "provenance": "trivial"},
            {"check": "coincidence", "expect": [[0.0]], "provenance": "derived"},
            {"check": "compat", "expect": "compatible at witness", "provenance": "derived"},
        ],
    },
    "kannan_form": {
        "description": "Power-family condition with p = 1, r = 0, q = 1, lam = 1, A = B = identity, "
                       "S = T a map with a jump at 1/2.",
        "provenance": "derived",
        "domain": _UNIT,
        "maps": {
            "A": "identity",
            "B": "identity",
            "S": [{"if": "x < 1/2", "then": "x/4"}, {"if": "otherwise", "then": "x/5"}],
            "T": [{"if": "x < 1/2", "then": "x/4"}, {"if": "otherwise", "then": "x/5"}],
        },
        "psi": {"family": "scaled_power", "p": 1, "q": 1, "r": 0, "lam": 1},
        "phi": {"kind": "linear", "r": 0.5},
        "form": {"tag": "power_family"},
        "iteration": {"x0": [1.0]},
        "sampling": {"grid": 101},
        "certify": _PROBES,
        "expectations": [
            {"check": "verify", "expect": "pass", "provenance": "derived"},
            {"check": "fixed_point", "expect": [0.0], "provenance": "derived"},
        ],
    },
    "identity_violation": {
        "description": "All four maps are the identity; every pair x != y violates the condition.",
        "provenance": "derived",
        "domain": _UNIT,
        "maps": {"A": "identity", "B": "identity", "S": "identity", "T": "identity"},
        "psi": {"family": "scaled_power", "p": 1, "q": 0, "r": 0, "lam": 1},
        "phi": {"kind": "linear", "r": 0.5},
        "form": {"tag": "phi_max"},
        "iteration": {"x0": [0.3]},
        "sampling": {"grid": 101},
        "certify": _PROBES,
        "expectations": [
            {"check": "verify", "expect": "fail", "provenance": "derived"},
        ],
    },
    "choudhury_single": {
        "description": "Single map T = x/3 on [0, 1] under the summed two-term condition.",
        "provenance": "derived",
        "domain": _UNIT,
        "maps": {"A": "identity", "B": "identity", "S": "x/3", "T": "x/3"},
        "psi": {"family": "scaled_power", "p": 1, "q": 0, "r": 0, "lam": 1},
        "phi": None,
        "form": {"tag": "choudhury_sum", "r": 0.5, "s": 1.0},
        "iteration": {"x0": [1.0]},
        "sampling": {"grid": 101},
        "certify": _PROBES,
        "expectations": [
            {"check": "verify", "expect": "pass", "provenance": "derived"},
            {"check": "fixed_point", "expect": [0.0], "provenance": "derived"},
        ],
    },
    "four_maps": {
        "description": "Four distinct linear maps A = x/2, B = x, S = x/8, T = x/4 on [0, 1] "
                       "(artifact-constructed, not taken from the literature).",
        "provenance": "derived",
        "domain": _UNIT,
        "maps": {"A": "x/2", "B": "x", "S": "x/8", "T": "x/4"},
        "psi": {"family": "max_power", "p": 1, "q": 1},
        "phi": {"kind": "linear", "r": 0.5},
        "form": {"tag": "phi_max"},
        "iteration": {"x0": [1.0]},
        "sampling": {"grid": 101},
        "certify": _PROBES,
        "coincidence": {"pair": ["A", "S"], "grid": 101},
        "expectations": [
            {"check": "verify", "expect": "pass", "provenance": "derived"},
            {"check": "fixed_point", "expect": [0.0], "provenance": "derived"},
            {"check": "inclusions", "expect": [], "provenance": "derived"},
            {"check": "coincidence", "expect": [[0.0]], "provenance": "derived"},
        ],
    },
}

BUILTIN_NAMES = tuple(_BUILTINS)


def builtin_document(name: str) -> dict:
    if name not in _BUILTINS:
        raise ConfigurationError(f"unknown scenario {name!r}; built-ins: {', '.join(BUILTIN_NAMES)}")
    return {"name": name, **copy.deepcopy(_BUILTINS[name])}


def builtin(name: str, overrides=()) -> Scenario:
    return from_dict(apply_overrides(builtin_document(name), overrides))


def resolve(ref: str, overrides=()) -> Scenario:
    """A built-in name or a path to a scenario file."""
    if ref in _BUILTINS:
        return builtin(ref, overrides)
    path = Path(ref)
    if not path.exists():
        raise ConfigurationError(
            f"{ref!r} is neither a built-in scenario ({', '.join(BUILTIN_NAMES)}) nor an existing file"
        )
    return load(path, overrides)
