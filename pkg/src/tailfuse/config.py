"""JSON sweep configuration: schema, validation and conversion."""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import jsonschema

from .copulas import CopulaModelError
from .distributions import DomainError
from .simlab import (
    DEFAULT_CHUNK,
    SPARSE_BETA_W,
    ExperimentConfig,
    Null,
    TypeA,
    TypeB,
    copula_grid,
    signal_vector,
)
from .theory import (
    ComonotoneEll,
    FromSpectral,
    GalambosBiv,
    GumbelBiv,
    IndependenceEll,
    Logistic,
    SpectralMeasure,
    SpectralMeasureError,
)
from .transforms import DEFAULT_TRUNCATION, TransformError, TransformSpec, WeightVector


class ConfigError(ValueError):
    """A configuration problem, tagged with the JSON path of the offending field."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path or '<root>'}: {message}")
        self.path = path


_number_or_list = {"oneOf": [{"type": "number"}, {"type": "array", "items": {"type": "number"}, "minItems": 1}]}

_transform = {
    "type": "object",
    "required": ["family"],
    "additionalProperties": False,
    "properties": {
        "family": {"enum": ["pareto", "cauchy", "truncated_cauchy", "truncated_t"]},
        "gamma": {"type": "number", "exclusiveMinimum": 0},
        "nu": {"type": "number", "exclusiveMinimum": 0},
        "trunc_q": {"type": "number", "minimum": 0, "exclusiveMaximum": 1},
    },
}

SCHEMA = {
    "$schema": "http://json-schema.org/draft-07/schema#",
    "type": "object",
    "required": ["n", "copula", "transforms", "alphas"],
    "additionalProperties": False,
    "properties": {
        "name": {"type": "string", "pattern": "^[A-Za-z0-9_.-]+$"},
        "n": {"type": "integer", "minimum": 1},
        "copula": {
            "type": "object",
            "required": ["family"],
            "additionalProperties": False,
            "properties": {
                "family": {"enum": ["independence", "comonotone", "clayton", "gaussian", "student_t"]},
                "tau_grid": {"type": "array", "items": {"type": "number", "minimum": 0, "maximum": 1}, "minItems": 1},
                "params": {"type": "array", "items": {"type": "number"}, "minItems": 1},
                "nu": {"type": "number", "exclusiveMinimum": 0},
            },
        },
        "transforms": {"type": "array", "items": _transform, "minItems": 1},
        "weights": {"oneOf": [{"type": "null"},
                              {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}, "minItems": 1}]},
        "alphas": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
                   "minItems": 1},
        "reps": {"oneOf": [
            {"type": "integer", "minimum": 1},
            {"type": "object", "additionalProperties": {"type": "integer", "minimum": 1}},
        ]},
        "seed": {"type": "integer", "minimum": 0, "maximum": 2 ** 64 - 1},
        "chunk": {"type": "integer", "minimum": 1},
        "baseline": {"type": "boolean"},
        "alternative": {
            "type": "object",
            "required": ["type"],
            "additionalProperties": False,
            "properties": {
                "type": {"enum": ["null", "A", "B"]},
                "mu": _number_or_list,
                "beta": _number_or_list,
                "layout": {"enum": ["dense", "sparse"]},
                "beta_w": {"type": "number", "minimum": 1},
                "calibrate": {
                    "type": "object",
                    "required": ["target"],
                    "additionalProperties": False,
                    "properties": {
                        "target": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
                        "tau": {"type": "number", "minimum": 0, "maximum": 1},
                        "reps": {"type": "integer", "minimum": 1},
                        "tol": {"type": "number", "exclusiveMinimum": 0},
                        "alpha": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
                        "transform": _transform,
                    },
                },
            },
        },
        "outputs": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "csv": {"type": "string", "minLength": 1},
                "svg": {"type": "boolean"},
            },
        },
    },
}


@dataclass(frozen=True)
class Calibration:
    target: float
    tau: float = 0.5
    reps: int = 100_000
    tol: float = 0.01
    alpha: float | None = None
    transform: TransformSpec | None = None


@dataclass(frozen=True)
class RunConfig:
    """A validated sweep plus output options."""

    experiment: ExperimentConfig
    copula_family: str
    copula_nu: float = 5.0
    csv_name: str | None = None
    svg: bool = False
    out_dir: Path = Path(".")
    verbosity: int = 0
    alt_kind: str = "null"
    layout: str = "dense"
    beta_w: float = SPARSE_BETA_W
    calibration: Calibration | None = None
    raw: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def csv_path(self) -> Path:
        return self.out_dir / (self.csv_name or f"{self.experiment.name}.csv")


def _path(parts) -> str:
    return ".".join(str(p) for p in parts)


def validate_document(doc) -> None:
    """Schema check; raises :class:`ConfigError` naming the first bad field."""
    validator = jsonschema.Draft7Validator(SCHEMA)
    errors = sorted(validator.iter_errors(doc), key=lambda e: (list(map(str, e.absolute_path)), e.message))
    if errors:
        err = errors[0]
        raise ConfigError(_path(err.absolute_path), err.message)


def transform_from_dict(d: dict, where: str = "transforms") -> TransformSpec:
    family = d["family"]
    q0 = d.get("trunc_q", DEFAULT_TRUNCATION)
    try:
        if family == "pareto":
            if "gamma" not in d:
                raise ConfigError(where, "pareto transform needs gamma")
            return TransformSpec("pareto", gamma=d["gamma"])
        if family == "truncated_t":
            nu = d.get("nu", d.get("gamma"))
            if nu is None:
                raise ConfigError(where, "truncated_t transform needs nu (or gamma)")
            return TransformSpec("truncated_t", nu=nu, q0=q0)
        if family == "truncated_cauchy":
            return TransformSpec("truncated_cauchy", q0=q0)
        return TransformSpec("cauchy")
    except TransformError as exc:
        raise ConfigError(where, str(exc)) from None


def _expand(value, n: int, where: str, layout: str, fill: float) -> tuple:
    if isinstance(value, list):
        if len(value) != n:
            raise ConfigError(where, f"expected {n} entries, got {len(value)}")
        return tuple(float(v) for v in value)
    return signal_vector(float(value), n, layout, fill)


def build_run_config(doc: dict, *, out_dir=".", seed: int | None = None, transforms=None,
                     alphas=None, weights=None, svg: bool | None = None, verbosity: int = 0) -> RunConfig:
    """Validate a config document, apply command-line overrides and build the sweep."""
    validate_document(doc)
    n = doc["n"]
    cop = doc["copula"]
    family = cop["family"]
    nu = float(cop.get("nu", 5.0))
    taus = cop.get("tau_grid")
    params = cop.get("params")
    if taus is not None and params is not None:
        raise ConfigError("copula", "give either tau_grid or params, not both")
    if family not in ("independence", "comonotone") and taus is None and params is None:
        raise ConfigError("copula", f"{family} needs tau_grid or params")
    try:
        cells = copula_grid(family, n, taus=taus, params=params, nu=nu)
    except (DomainError, CopulaModelError, ValueError) as exc:
        key = "copula.tau_grid" if taus is not None else "copula.params"
        raise ConfigError(key, str(exc)) from None

    if transforms is None:
        transforms = [transform_from_dict(t, f"transforms.{i}") for i, t in enumerate(doc["transforms"])]
    alphas = tuple(alphas if alphas is not None else doc["alphas"])

    w = weights if weights is not None else doc.get("weights")
    wv = None
    if w is not None:
        if len(w) != n:
            raise ConfigError("weights", f"expected {n} weights, got {len(w)}")
        try:
            wv = WeightVector(w)
        except ValueError as exc:
            raise ConfigError("weights", str(exc)) from None

    reps_doc = doc.get("reps")
    if reps_doc is None:
        reps = {}
    elif isinstance(reps_doc, int):
        reps = {a: reps_doc for a in alphas}
    else:
        reps = {}
        for key, val in reps_doc.items():
            try:
                reps[float(key)] = val
            except ValueError:
                raise ConfigError(f"reps.{key}", "keys must be alpha values") from None

    alt_doc = doc.get("alternative", {"type": "null"})
    kind = alt_doc["type"]
    layout = alt_doc.get("layout", "dense")
    beta_w = float(alt_doc.get("beta_w", SPARSE_BETA_W))
    calibration = None
    if kind == "null":
        alternative = Null()
    else:
        key = "mu" if kind == "A" else "beta"
        cal = alt_doc.get("calibrate")
        if cal is not None:
            calibration = Calibration(
                target=cal["target"], tau=cal.get("tau", 0.5), reps=cal.get("reps", 100_000),
                tol=cal.get("tol", 0.01), alpha=cal.get("alpha"),
                transform=transform_from_dict(cal["transform"], "alternative.calibrate.transform")
                if "transform" in cal else None)
        if key not in alt_doc and calibration is None:
            raise ConfigError("alternative", f"type {kind} needs {key} or calibrate")
        value = alt_doc.get(key, 0.0 if kind == "A" else 1.0)
        try:
            if kind == "A":
                alternative = TypeA(_expand(value, n, f"alternative.{key}", layout, 0.0))
            else:
                alternative = TypeB(_expand(value, n, f"alternative.{key}", layout, beta_w))
        except ValueError as exc:
            raise ConfigError(f"alternative.{key}", str(exc)) from None

    outputs = doc.get("outputs", {})
    try:
        exp = ExperimentConfig(
            n=n, cells=tuple(cells), transforms=tuple(transforms), alphas=alphas, reps=reps,
            seed=doc.get("seed", 0) if seed is None else seed, chunk=doc.get("chunk", DEFAULT_CHUNK),
            alternative=alternative, weights=wv, baseline=doc.get("baseline", True),
            name=doc.get("name", "sweep"))
    except ValueError as exc:
        raise ConfigError("", str(exc)) from None
    return RunConfig(experiment=exp, copula_family=family, copula_nu=nu, csv_name=outputs.get("csv"),
                     svg=bool(outputs.get("svg", False)) if svg is None else svg, out_dir=Path(out_dir),
                     verbosity=verbosity, alt_kind=kind, layout=layout, beta_w=beta_w,
                     calibration=calibration, raw=doc)


def load_run_config(path, **overrides) -> RunConfig:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError("", f"invalid JSON at line {exc.lineno}: {exc.msg}") from None
    return build_run_config(doc, **overrides)


def with_signal(run: RunConfig, strength: float) -> RunConfig:
    """Replace the alternative's signal strength, keeping its layout."""
    n = run.experiment.n
    if run.alt_kind == "A":
        alt = TypeA(signal_vector(strength, n, run.layout, 0.0))
    else:
        alt = TypeB(signal_vector(strength, n, run.layout, run.beta_w))
    return replace(run, experiment=replace(run.experiment, alternative=alt))


def ell_from_dict(d: dict, where: str = "ell"):
    """Stable tail dependence function from a family tag or an atom/mass list."""
    try:
        if "atoms" in d:
            return FromSpectral(SpectralMeasure.from_dict(d))
        family = d.get("family")
        if family == "independence":
            return IndependenceEll(int(d["n"]))
        if family == "comonotone":
            return ComonotoneEll(int(d["n"]))
        if family == "logistic":
            return Logistic(float(d["alpha"]), int(d["n"]))
        if family == "gumbel":
            return GumbelBiv(float(d["theta"]), float(d.get("a", 1.0)), float(d.get("b", 1.0)))
        if family == "galambos":
            return GalambosBiv(float(d["theta"]), float(d.get("a", 1.0)), float(d.get("b", 1.0)))
    except KeyError as exc:
        raise ConfigError(f"{where}.{exc.args[0]}", "missing field") from None
    except (SpectralMeasureError, ValueError) as exc:
        raise ConfigError(where, str(exc)) from None
    raise ConfigError(f"{where}.family", f"unknown family {d.get('family')!r}")
