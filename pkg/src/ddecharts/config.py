"""Declarative problem configuration: parse, validate, emit.

A config is a YAML document declaring the characteristic function (terms
as coefficient lists plus a delay, each slot a number or a ``[scale*]name``
parameter reference), fixed parameter values, the sweep geometry, solver
settings and the run mode.  Parsing is strict: unknown keys, duplicate
keys and semantic contradictions are rejected with positioned messages
where the YAML parser provides them.
"""

from __future__ import annotations

from dataclasses import dataclass, field, asdict

import numpy as np
import yaml

from .continuation import ContinuationConfig
from .chart import SweepConfig
from .errors import ConfigError
from .quasipoly import QuasiPolynomial, as_scalar
from .seeding import SeedConfig

MODES = ("sweep", "oracle", "benchmark", "roots")

_TOP_KEYS = {"name", "mode", "terms", "parameters", "sweep", "seeding",
             "continuation", "oracle_seeding", "output_dir", "gnuplot",
             "repetitions"}
_SWEEP_KEYS = {"param1", "param2", "range1", "range2", "n1", "n2", "seed"}
_SEED_KEYS = {"n_roots", "n_modes", "newton_tol", "newton_max_iter",
              "dedup_tol"}
_CONT_KEYS = {"abs_tol", "rel_tol", "eps_jacobian", "residual_check_tol",
              "max_step"}


class _StrictLoader(yaml.SafeLoader):
    """SafeLoader that rejects duplicate mapping keys."""


def _strict_mapping(loader, node, deep=False):
    mapping = {}
    for key_node, value_node in node.value:
        key = loader.construct_object(key_node, deep=deep)
        if key in mapping:
            mark = key_node.start_mark
            raise ConfigError(f"duplicate key {key!r}",
                              mark.line + 1, mark.column + 1)
        mapping[key] = loader.construct_object(value_node, deep=deep)
    return mapping


_StrictLoader.add_constructor(
    yaml.resolver.BaseResolver.DEFAULT_MAPPING_TAG, _strict_mapping
)


@dataclass
class TermSpec:
    """One declared term: coefficient entries (low order first) and a delay."""

    coeffs: list
    delay: object


@dataclass
class SweepSpec:
    param1: str
    param2: str
    range1: tuple[float, float]
    range2: tuple[float, float]
    n1: int
    n2: int
    seed: tuple[float, float] | None = None


@dataclass
class ProblemConfig:
    """Validated, normalized problem declaration."""

    terms: list[TermSpec]
    parameters: dict[str, float] = field(default_factory=dict)
    mode: str = "sweep"
    name: str | None = None
    sweep: SweepSpec | None = None
    seeding: SeedConfig = field(default_factory=SeedConfig)
    continuation: ContinuationConfig = field(default_factory=ContinuationConfig)
    oracle_seeding: SeedConfig | None = None
    output_dir: str = "out"
    gnuplot: bool = False
    repetitions: int = 1

    def quasipolynomial(self) -> QuasiPolynomial:
        try:
            return QuasiPolynomial.from_terms(
                [(t.coeffs, t.delay) for t in self.terms]
            )
        except (ValueError, TypeError) as e:
            raise ConfigError(f"terms: {e}") from None

    def anchor_point(self) -> dict[str, float]:
        """Full parameter assignment at the sweep anchor (or fixed values)."""
        qp = self.quasipolynomial()
        point = dict(self.parameters)
        if self.sweep is not None:
            seed = self.sweep.seed
            if seed is None:
                seed = (self.sweep.range1[0], self.sweep.range2[0])
            point[self.sweep.param1] = seed[0]
            point[self.sweep.param2] = seed[1]
        missing = qp.param_names - set(point)
        if missing:
            raise ConfigError(
                f"parameters: no value for {sorted(missing)}"
            )
        return point

    def sweep_config(self) -> SweepConfig:
        if self.sweep is None:
            raise ConfigError(f"mode {self.mode!r} requires a sweep section")
        return SweepConfig(
            param1=self.sweep.param1,
            param2=self.sweep.param2,
            range1=self.sweep.range1,
            range2=self.sweep.range2,
            n1=self.sweep.n1,
            n2=self.sweep.n2,
            seed_point=self.anchor_point(),
            seed_cfg=self.seeding,
            cont_cfg=self.continuation,
        )


def _require_keys(section: dict, allowed: set, where: str):
    unknown = set(section) - allowed
    if unknown:
        raise ConfigError(f"{where}: unknown keys {sorted(unknown)}")


def _as_float(v, where: str) -> float:
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"{where}: expected a number, got {v!r}")
    return float(v)


def _as_int(v, where: str) -> int:
    if isinstance(v, bool) or not isinstance(v, int):
        raise ConfigError(f"{where}: expected an integer, got {v!r}")
    return v


def _parse_terms(raw, parameters: dict) -> list[TermSpec]:
    if not isinstance(raw, list) or len(raw) == 0:
        raise ConfigError("terms: need a nonempty list")
    out = []
    for i, entry in enumerate(raw):
        where = f"terms[{i}]"
        if not isinstance(entry, dict):
            raise ConfigError(f"{where}: expected a mapping")
        _require_keys(entry, {"coeffs", "delay"}, where)
        if "coeffs" not in entry or "delay" not in entry:
            raise ConfigError(f"{where}: needs 'coeffs' and 'delay'")
        coeffs = entry["coeffs"]
        if not isinstance(coeffs, list) or len(coeffs) == 0:
            raise ConfigError(f"{where}.coeffs: need a nonempty list")
        norm = []
        for j, c in enumerate(coeffs):
            try:
                s = as_scalar(c)
            except (ValueError, TypeError) as e:
                raise ConfigError(f"{where}.coeffs[{j}]: {e}") from None
            norm.append(float(c) if not s.is_parameter else str(s))
        try:
            d = as_scalar(entry["delay"])
        except (ValueError, TypeError) as e:
            raise ConfigError(f"{where}.delay: {e}") from None
        delay = float(entry["delay"]) if not d.is_parameter else str(d)
        if not d.is_parameter and d.value < 0:
            raise ConfigError(f"{where}.delay: negative constant delay")
        out.append(TermSpec(coeffs=norm, delay=delay))
    return out


def _parse_sweep(raw) -> SweepSpec:
    if not isinstance(raw, dict):
        raise ConfigError("sweep: expected a mapping")
    _require_keys(raw, _SWEEP_KEYS, "sweep")
    for key in ("param1", "param2", "range1", "range2", "n1", "n2"):
        if key not in raw:
            raise ConfigError(f"sweep: missing {key!r}")
    ranges = []
    for key in ("range1", "range2"):
        rng = raw[key]
        if not isinstance(rng, list) or len(rng) != 2:
            raise ConfigError(f"sweep.{key}: expected [low, high]")
        lo = _as_float(rng[0], f"sweep.{key}[0]")
        hi = _as_float(rng[1], f"sweep.{key}[1]")
        if not lo <= hi:
            raise ConfigError(f"sweep.{key}: low must not exceed high")
        ranges.append((lo, hi))
    seed = None
    if raw.get("seed") is not None:
        sv = raw["seed"]
        if not isinstance(sv, list) or len(sv) != 2:
            raise ConfigError("sweep.seed: expected [value1, value2]")
        seed = (_as_float(sv[0], "sweep.seed[0]"),
                _as_float(sv[1], "sweep.seed[1]"))
    for k, nm in (("param1", raw["param1"]), ("param2", raw["param2"])):
        if not isinstance(nm, str):
            raise ConfigError(f"sweep.{k}: expected a parameter name")
    if raw["param1"] == raw["param2"]:
        raise ConfigError("sweep: param1 and param2 must differ")
    return SweepSpec(
        param1=raw["param1"], param2=raw["param2"],
        range1=ranges[0], range2=ranges[1],
        n1=_as_int(raw["n1"], "sweep.n1"), n2=_as_int(raw["n2"], "sweep.n2"),
        seed=seed,
    )


def _parse_seeding(raw, where: str) -> SeedConfig:
    if not isinstance(raw, dict):
        raise ConfigError(f"{where}: expected a mapping")
    _require_keys(raw, _SEED_KEYS, where)
    kwargs = {}
    for k, v in raw.items():
        if k in ("n_roots", "n_modes", "newton_max_iter"):
            kwargs[k] = _as_int(v, f"{where}.{k}")
        else:
            kwargs[k] = _as_float(v, f"{where}.{k}")
    try:
        return SeedConfig(**kwargs)
    except ValueError as e:
        raise ConfigError(f"{where}: {e}") from None


def _parse_continuation(raw) -> ContinuationConfig:
    if not isinstance(raw, dict):
        raise ConfigError("continuation: expected a mapping")
    _require_keys(raw, _CONT_KEYS, "continuation")
    kwargs = {}
    for k, v in raw.items():
        if k == "max_step":
            kwargs[k] = None if v is None else _as_float(v, f"continuation.{k}")
        else:
            kwargs[k] = _as_float(v, f"continuation.{k}")
    try:
        return ContinuationConfig(**kwargs)
    except ValueError as e:
        raise ConfigError(f"continuation: {e}") from None


def parse_config(text: str) -> ProblemConfig:
    """Parse and validate a YAML problem declaration.

    Syntax errors carry the line and column from the YAML parser; semantic
    errors name the offending key path.
    """
    try:
        raw = yaml.load(text, Loader=_StrictLoader)
    except ConfigError:
        raise
    except yaml.MarkedYAMLError as e:
        mark = e.problem_mark
        raise ConfigError(
            e.problem or "invalid YAML",
            None if mark is None else mark.line + 1,
            None if mark is None else mark.column + 1,
        ) from None
    except yaml.YAMLError as e:
        raise ConfigError(f"invalid YAML: {e}") from None
    if not isinstance(raw, dict):
        raise ConfigError("top level must be a mapping")
    _require_keys(raw, _TOP_KEYS, "config")
    if "terms" not in raw:
        raise ConfigError("config: missing 'terms'")

    parameters = {}
    if raw.get("parameters") is not None:
        if not isinstance(raw["parameters"], dict):
            raise ConfigError("parameters: expected a mapping")
        for k, v in raw["parameters"].items():
            if not isinstance(k, str):
                raise ConfigError(f"parameters: bad name {k!r}")
            parameters[k] = _as_float(v, f"parameters.{k}")

    mode = raw.get("mode", "sweep")
    if mode not in MODES:
        raise ConfigError(f"mode: expected one of {MODES}, got {mode!r}")

    pc = ProblemConfig(
        terms=_parse_terms(raw["terms"], parameters),
        parameters=parameters,
        mode=mode,
        name=raw.get("name"),
        sweep=_parse_sweep(raw["sweep"]) if raw.get("sweep") is not None else None,
        seeding=_parse_seeding(raw["seeding"], "seeding")
        if raw.get("seeding") is not None else SeedConfig(),
        continuation=_parse_continuation(raw["continuation"])
        if raw.get("continuation") is not None else ContinuationConfig(),
        oracle_seeding=_parse_seeding(raw["oracle_seeding"], "oracle_seeding")
        if raw.get("oracle_seeding") is not None else None,
        output_dir=str(raw.get("output_dir", "out")),
        gnuplot=bool(raw.get("gnuplot", False)),
        repetitions=_as_int(raw.get("repetitions", 1), "repetitions"),
    )
    _validate_semantics(pc)
    return pc


def _validate_semantics(pc: ProblemConfig) -> None:
    qp = pc.quasipolynomial()
    names = qp.param_names
    unused = set(pc.parameters) - names
    if unused:
        raise ConfigError(f"parameters: {sorted(unused)} not used by any term")
    if pc.sweep is not None:
        for p in (pc.sweep.param1, pc.sweep.param2):
            if p not in names:
                raise ConfigError(f"sweep: {p!r} is not a problem parameter")
            if p in pc.parameters:
                raise ConfigError(
                    f"sweep: {p!r} is swept and cannot also be fixed"
                )
        try:
            pc.sweep_config().validate(qp)
        except ValueError as e:
            raise ConfigError(f"sweep: {e}") from None
    if pc.mode in ("sweep", "oracle", "benchmark") and pc.sweep is None:
        raise ConfigError(f"mode {pc.mode!r} requires a sweep section")
    if pc.mode == "roots":
        pc.anchor_point()
    if pc.repetitions < 0:
        raise ConfigError("repetitions: must be nonnegative")


def emit_config(pc: ProblemConfig) -> str:
    """Serialize a configuration; ``parse_config`` round-trips it exactly."""
    doc: dict = {}
    if pc.name is not None:
        doc["name"] = pc.name
    doc["mode"] = pc.mode
    doc["terms"] = [{"coeffs": list(t.coeffs), "delay": t.delay}
                    for t in pc.terms]
    if pc.parameters:
        doc["parameters"] = dict(pc.parameters)
    if pc.sweep is not None:
        sw = {
            "param1": pc.sweep.param1, "param2": pc.sweep.param2,
            "range1": list(pc.sweep.range1), "range2": list(pc.sweep.range2),
            "n1": pc.sweep.n1, "n2": pc.sweep.n2,
        }
        if pc.sweep.seed is not None:
            sw["seed"] = list(pc.sweep.seed)
        doc["sweep"] = sw
    doc["seeding"] = asdict(pc.seeding)
    cont = asdict(pc.continuation)
    doc["continuation"] = cont
    if pc.oracle_seeding is not None:
        doc["oracle_seeding"] = asdict(pc.oracle_seeding)
    doc["output_dir"] = pc.output_dir
    doc["gnuplot"] = pc.gnuplot
    doc["repetitions"] = pc.repetitions
    return yaml.safe_dump(doc, sort_keys=False, default_flow_style=None)
