"""Run configuration read from a YAML file.

Unknown keys are rejected so that typos fail loudly.  Every section is
optional; omitted values take the defaults used for the published figure
parameters.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np
import yaml

from . import keyrate
from .channel import ChannelParams
from .optimizer import PARAM_NAMES, SearchBudget, SearchSpace, Settings


class ConfigError(ValueError):
    """Invalid or unreadable configuration."""


@dataclass
class SweepSpec:
    name: str
    axis: str
    grid: list
    N: float = 1e13
    distance: float = 0.0


@dataclass
class CoverageSpec:
    levels: tuple = (0.1, 0.01)
    trials: int = 100_000
    lp_trials: int = 0
    soundness_instances: int = 0


@dataclass
class RunConfig:
    settings: Settings = field(default_factory=Settings)
    space: SearchSpace = field(default_factory=SearchSpace)
    budget: SearchBudget = field(default_factory=SearchBudget)
    N: float = 1e13
    distance: float = 0.0
    point: dict | None = None
    sweeps: list = field(default_factory=list)
    coverage: CoverageSpec = field(default_factory=CoverageSpec)
    counts: str | None = None
    seed: int = 0
    out_dir: str = "out"
    workers: int = 1
    source: str = ""


_TOP = {"seed", "out_dir", "estimator", "workers", "channel", "security", "protocol", "search",
        "sweeps", "coverage", "estimate"}


def _num(value, name):
    try:
        out = float(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{name}: expected a number, got {value!r}") from None
    if not math.isfinite(out):
        raise ConfigError(f"{name}: must be finite")
    return out


def _section(raw, name, allowed):
    sec = raw.get(name) or {}
    if not isinstance(sec, dict):
        raise ConfigError(f"{name}: expected a mapping")
    extra = set(sec) - set(allowed)
    if extra:
        raise ConfigError(f"{name}: unknown keys {sorted(extra)}")
    return sec


def _grid(spec, name):
    if isinstance(spec, list):
        return [_num(v, name) for v in spec]
    if isinstance(spec, dict):
        keys = set(spec)
        if keys == {"start", "stop", "step"}:
            start, stop, step = (_num(spec[k], name) for k in ("start", "stop", "step"))
            if step <= 0:
                raise ConfigError(f"{name}: step must be positive")
            count = int(math.floor((stop - start) / step + 1e-9)) + 1
            return [start + i * step for i in range(count)]
        if keys == {"log_start", "log_stop", "num"}:
            return list(np.logspace(_num(spec["log_start"], name), _num(spec["log_stop"], name),
                                    int(spec["num"])))
    raise ConfigError(f"{name}: grid must be a list, {{start, stop, step}} or {{log_start, log_stop, num}}")


def parse(raw: dict, source: str = "") -> RunConfig:
    """Validate a decoded YAML document."""
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError("top level must be a mapping")
    extra = set(raw) - _TOP
    if extra:
        raise ConfigError(f"unknown top-level keys {sorted(extra)}")

    ch_names = [f.name for f in fields(ChannelParams)]
    ch = _section(raw, "channel", ch_names)
    sec = _section(raw, "security", ["eps_total", "eps_cor", "zeta"])
    proto = _section(raw, "protocol", ["N", "distance_km", "point", "e_tol", "phase_tol", "m_cut", "a_d2", "b_d2"])
    search = _section(raw, "search", ["bounds", "budget"])
    cov = _section(raw, "coverage", ["levels", "trials", "lp_trials", "soundness_instances"])
    est = _section(raw, "estimate", ["counts"])

    try:
        channel = ChannelParams(**{k: (int(v) if k == "phase_nodes" else _num(v, f"channel.{k}"))
                                   for k, v in ch.items()})
        estimator = raw.get("estimator", "analytic")
        settings = Settings(
            channel=channel,
            eps_total=_num(sec.get("eps_total", 1e-10), "security.eps_total"),
            eps_cor=_num(sec.get("eps_cor", 1e-15), "security.eps_cor"),
            zeta=_num(sec.get("zeta", 1.16), "security.zeta"),
            e_tol=_num(proto.get("e_tol", 0.11), "protocol.e_tol"),
            phase_tol=_num(proto.get("phase_tol", 0.3), "protocol.phase_tol"),
            estimator=estimator,
            m_cut=int(proto.get("m_cut", 8)),
        )
        # the composed budget must stay inside the target
        keyrate.compose_secrecy(settings.budget, settings.eps_total)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None

    bounds = search.get("bounds") or {}
    if not isinstance(bounds, dict) or set(bounds) - set(PARAM_NAMES):
        raise ConfigError(f"search.bounds: keys must be among {list(PARAM_NAMES)}")
    space_kw = {k: tuple(_num(x, f"search.bounds.{k}") for x in v) for k, v in bounds.items()}
    for k, v in space_kw.items():
        if len(v) != 2:
            raise ConfigError(f"search.bounds.{k}: expected [low, high]")
    for k in ("a_d2", "b_d2"):
        if k in proto:
            space_kw[k] = _num(proto[k], f"protocol.{k}")
    budget_raw = search.get("budget") or {}
    budget_names = [f.name for f in fields(SearchBudget)]
    if not isinstance(budget_raw, dict) or set(budget_raw) - set(budget_names):
        raise ConfigError(f"search.budget: keys must be among {budget_names}")
    try:
        space = SearchSpace(**space_kw)
        budget = SearchBudget(**{k: (float(v) if isinstance(getattr(SearchBudget, k), float) else int(v))
                                 for k, v in budget_raw.items()})
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None

    point = proto.get("point")
    if point is not None:
        if not isinstance(point, dict) or set(point) != set(PARAM_NAMES):
            raise ConfigError(f"protocol.point: needs exactly the keys {list(PARAM_NAMES)}")
        point = {k: _num(v, f"protocol.point.{k}") for k, v in point.items()}
        if space.config(point) is None:
            raise ConfigError("protocol.point: not a valid protocol configuration")

    sweeps = []
    for i, sw in enumerate(raw.get("sweeps") or []):
        if not isinstance(sw, dict) or set(sw) - {"name", "axis", "grid", "N", "distance_km"}:
            raise ConfigError(f"sweeps[{i}]: keys must be among name, axis, grid, N, distance_km")
        if sw.get("axis") not in ("distance", "N"):
            raise ConfigError(f"sweeps[{i}].axis must be 'distance' or 'N'")
        name = str(sw.get("name", f"sweep{i}"))
        if not name.replace("_", "").replace("-", "").isalnum():
            raise ConfigError(f"sweeps[{i}].name must be alphanumeric (with - or _)")
        sweeps.append(SweepSpec(name, sw["axis"], _grid(sw.get("grid"), f"sweeps[{i}].grid"),
                                _num(sw.get("N", 1e13), f"sweeps[{i}].N"),
                                _num(sw.get("distance_km", 0.0), f"sweeps[{i}].distance_km")))
    names = [s.name for s in sweeps]
    if len(set(names)) != len(names):
        raise ConfigError("sweep names must be unique")

    levels = tuple(_num(v, "coverage.levels") for v in cov.get("levels", (0.1, 0.01)))
    if not all(0 < v < 1 for v in levels):
        raise ConfigError("coverage.levels must lie in (0, 1)")
    coverage = CoverageSpec(levels, int(cov.get("trials", 100_000)), int(cov.get("lp_trials", 0)),
                            int(cov.get("soundness_instances", 0)))

    N = _num(proto.get("N", 1e13), "protocol.N")
    if N < 1:
        raise ConfigError("protocol.N must be >= 1")
    return RunConfig(settings=settings, space=space, budget=budget, N=N,
                     distance=_num(proto.get("distance_km", channel.distance_km), "protocol.distance_km"),
                     point=point, sweeps=sweeps, coverage=coverage,
                     counts=est.get("counts"), seed=int(raw.get("seed", 0)),
                     out_dir=str(raw.get("out_dir", "out")), workers=int(raw.get("workers", 1)),
                     source=source)


def load(path) -> RunConfig:
    """Read and validate a YAML configuration file."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: invalid YAML: {exc}") from None
    cfg = parse(raw, str(path))
    if cfg.counts is not None and not Path(cfg.counts).is_absolute():
        cfg.counts = str(path.parent / cfg.counts)
    return cfg
