"""Run configuration: one JSON document with model/process/schedule/sweep sections.

Temperatures are Celsius in the file and kelvin everywhere else. Every key is
checked; unknown keys and invalid values are collected and reported together
through :class:`ConfigError`, with the line of the offending key where it can
be found.
"""

from __future__ import annotations

import copy
import json
import math
import re
from dataclasses import dataclass, field, fields

from .annealer import AnnealSchedule
from .errors import ConfigError, ModelError
from .kinetics import KineticsConstants, StageParams, Technology
from .oracle import GridSpec
from .paths import Path
from .process import ProcessConfig

KELVIN = 273.15
DEFAULT_ALPHAS = (0.5, 0.2, 0.1, 1 / 15, 0.05, 0.04)
DEFAULT_MS = (1, 2, 3, 4, 5, 6)

# Constants under which HAUS beats HA by a wide margin at alpha = 0.5: cold
# intake air makes heating expensive, so the faster high-temperature HAUS
# stages pay off, and HA stages appear only as alpha falls.
PRESETS = {
    "default": {},
    "cold-intake": {"process": {"T0_C": -80.0, "P_us": 80.0}, "model": {"M": 5}},
}

_SECTIONS = {
    "model": {"M", "allowed", "x0_dry", "k0", "k1", "m0", "m1", "negate_k0", "allow_sorption"},
    "process": {"alpha", "rho_air", "area", "v_air", "c_p", "T0_C", "P_us", "x0", "x_d",
                "penalty_weight", "t_min", "T_bounds_C"},
    "schedule": {f.name for f in fields(AnnealSchedule)},
    "sweep": {"M", "alpha", "jobs"},
    "oracle": {f.name for f in fields(GridSpec)},
    "simulate": {"path", "params", "samples_per_stage"},
}
_TOP = set(_SECTIONS) | {"preset"}


@dataclass(frozen=True)
class SweepSpec:
    M: tuple = DEFAULT_MS
    alpha: tuple = DEFAULT_ALPHAS
    jobs: int = 1


@dataclass(frozen=True)
class SimulateSpec:
    path: Path
    params: tuple
    samples_per_stage: int = 10


@dataclass(frozen=True)
class RunConfig:
    process: ProcessConfig = field(default_factory=ProcessConfig)
    kinetics: KineticsConstants = field(default_factory=KineticsConstants)
    schedule: AnnealSchedule = field(default_factory=AnnealSchedule)
    sweep: SweepSpec = field(default_factory=SweepSpec)
    oracle: GridSpec = field(default_factory=GridSpec)
    simulate: SimulateSpec | None = None
    raw: dict = field(default_factory=dict, compare=False, repr=False)

    def to_dict(self):
        """The merged document, re-loadable with :func:`load_config`."""
        return copy.deepcopy(self.raw)


def _line_of(text, key):
    if not text:
        return None
    m = re.search(r'"%s"\s*:' % re.escape(key), text)
    return text.count("\n", 0, m.start()) + 1 if m else None


def _where(source, text, key):
    line = _line_of(text, key)
    return f"{source}:{line}: " if line else ""


def _merge(base, extra):
    out = copy.deepcopy(base)
    for key, value in extra.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


def parse_override(item: str):
    """``"process.alpha=0.2"`` -> (["process", "alpha"], 0.2); values are JSON when they parse."""
    if "=" not in item:
        raise ConfigError(f"override {item!r} is not of the form key=value")
    key, value = item.split("=", 1)
    try:
        parsed = json.loads(value)
    except json.JSONDecodeError:
        parsed = value
    return key.strip().split("."), parsed


def _apply_overrides(doc, overrides, problems):
    for item in overrides:
        try:
            keys, value = parse_override(item)
        except ConfigError as exc:
            problems.extend(exc.problems)
            continue
        if keys == ["preset"]:
            continue
        if len(keys) != 2 or keys[0] not in _SECTIONS or keys[1] not in _SECTIONS[keys[0]]:
            problems.append(f"--set {item}: unknown key {'.'.join(keys)!r}")
            continue
        doc.setdefault(keys[0], {})[keys[1]] = value


def _check_keys(doc, source, text, problems):
    if not isinstance(doc, dict):
        problems.append(f"{source}: top level must be an object")
        return
    for key, value in doc.items():
        if key not in _TOP:
            problems.append(f"{_where(source, text, key)}unknown section {key!r}")
        elif key != "preset":
            if not isinstance(value, dict):
                problems.append(f"{_where(source, text, key)}section {key!r} must be an object")
                continue
            for sub in value:
                if sub not in _SECTIONS[key]:
                    problems.append(f"{_where(source, text, sub)}unknown key {key}.{sub}")


def _number(sec, key, default, problems, section, kind=float):
    value = sec.get(key, default)
    if value is None:
        return None
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        problems.append(f"{section}.{key} must be a number, got {value!r}")
        return default
    if kind is int:
        if value != int(value):
            problems.append(f"{section}.{key} must be an integer, got {value!r}")
            return default
        return int(value)
    return float(value)


def _build(doc, problems):
    model = doc.get("model", {})
    proc = doc.get("process", {})
    sched = doc.get("schedule", {})
    sweep = doc.get("sweep", {})
    orc = doc.get("oracle", {})
    sim = doc.get("simulate")

    defaults = ProcessConfig()
    kw = {}
    for key in ("alpha", "rho_air", "area", "v_air", "c_p", "P_us", "x0", "x_d",
                "penalty_weight", "t_min"):
        kw[key] = _number(proc, key, getattr(defaults, key), problems, "process")
    kw["T0"] = _number(proc, "T0_C", defaults.T0 - KELVIN, problems, "process") + KELVIN
    bounds = proc.get("T_bounds_C", [v - KELVIN for v in defaults.T_bounds])
    if not (isinstance(bounds, list) and len(bounds) == 2
            and all(isinstance(v, (int, float)) for v in bounds)):
        problems.append(f"process.T_bounds_C must be [low, high], got {bounds!r}")
        bounds = [v - KELVIN for v in defaults.T_bounds]
    kw["T_bounds"] = tuple(float(v) + KELVIN for v in bounds)
    kw["M"] = _number(model, "M", defaults.M, problems, "model", int)
    allowed = model.get("allowed", [["HA", "HAUS"]])
    if isinstance(allowed, list) and allowed and all(isinstance(a, str) for a in allowed):
        allowed = [allowed]
    try:
        kw["allowed"] = tuple(tuple(stage) for stage in allowed)
    except TypeError:
        problems.append(f"model.allowed must be a list of technology names, got {allowed!r}")
        kw["allowed"] = defaults.allowed

    process = None
    try:
        process = ProcessConfig(**kw)
    except ConfigError as exc:
        problems.extend(exc.problems)
    except (ValueError, TypeError) as exc:
        problems.append(f"model.allowed: {exc}")

    kin_kw = {"T_range": kw["T_bounds"]}
    for key, name in (("k0", "k0_coeffs"), ("k1", "k1_coeffs"), ("m0", "m0_coeffs"), ("m1", "m1_coeffs")):
        if key in model:
            value = model[key]
            if not (isinstance(value, list) and len(value) == 3
                    and all(isinstance(v, (int, float)) for v in value)):
                problems.append(f"model.{key} must be three numbers [a, b, c], got {value!r}")
                continue
            kin_kw[name] = tuple(value)
    for key in ("negate_k0", "allow_sorption"):
        if key in model:
            if not isinstance(model[key], bool):
                problems.append(f"model.{key} must be true or false, got {model[key]!r}")
                continue
            kin_kw[key] = model[key]
    if "x0_dry" in model:
        kin_kw["x0_dry"] = _number(model, "x0_dry", None, problems, "model")
    kinetics = None
    try:
        kinetics = KineticsConstants(**kin_kw)
    except ModelError as exc:
        problems.append(f"model: kinetics constants rejected: {exc}")

    schedule = None
    skw = {}
    for f in fields(AnnealSchedule):
        if f.name not in sched:
            continue
        if f.name == "flip_search":
            if not isinstance(sched[f.name], bool):
                problems.append(f"schedule.flip_search must be true or false, got {sched[f.name]!r}")
            else:
                skw[f.name] = sched[f.name]
            continue
        kind = int if isinstance(f.default, int) and not isinstance(f.default, bool) else float
        skw[f.name] = _number(sched, f.name, f.default, problems, "schedule", kind)
    try:
        schedule = AnnealSchedule(**skw)
    except ConfigError as exc:
        problems.extend(exc.problems)

    sweep_spec = None
    Ms = sweep.get("M", list(DEFAULT_MS))
    alphas = sweep.get("alpha", list(DEFAULT_ALPHAS))
    jobs = _number(sweep, "jobs", 1, problems, "sweep", int)
    ok = True
    if not (isinstance(Ms, list) and Ms and all(isinstance(m, int) and not isinstance(m, bool) and m >= 1 for m in Ms)):
        problems.append(f"sweep.M must be a non-empty list of integers >= 1, got {Ms!r}")
        ok = False
    if not (isinstance(alphas, list) and alphas
            and all(isinstance(a, (int, float)) and math.isfinite(a) and a > 0 for a in alphas)):
        problems.append(f"sweep.alpha must be a non-empty list of positive numbers, got {alphas!r}")
        ok = False
    if jobs is not None and jobs < 1:
        problems.append(f"sweep.jobs must be >= 1, got {jobs}")
        ok = False
    if ok:
        sweep_spec = SweepSpec(tuple(Ms), tuple(float(a) for a in alphas), jobs)

    grid = None
    gkw = {f.name: _number(orc, f.name, f.default, problems, "oracle",
                           float if isinstance(f.default, float) else int)
           for f in fields(GridSpec) if f.name in orc}
    try:
        grid = GridSpec(**gkw)
    except ValueError as exc:
        problems.append(f"oracle: {exc}")

    simulate = None
    if sim is not None:
        try:
            path = Path.parse(sim["path"])
            params = tuple(StageParams(float(p["t_min"]), float(p["T_C"]) + KELVIN)
                           for p in sim["params"])
            samples = int(sim.get("samples_per_stage", 10))
            if len(params) != len(path):
                problems.append(f"simulate.params has {len(params)} stages but the path has {len(path)}")
            elif samples < 1:
                problems.append("simulate.samples_per_stage must be >= 1")
            else:
                for k, p in enumerate(params):
                    try:
                        p.check(0.0, kw["T_bounds"])
                    except (ValueError, ModelError) as exc:
                        problems.append(f"simulate.params[{k}]: {exc}")
                simulate = SimulateSpec(path, params, samples)
        except (KeyError, TypeError, ValueError) as exc:
            problems.append(f"simulate needs path and params [{{t_min, T_C}}, ...]: {exc!r}")

    return RunConfig(process, kinetics, schedule, sweep_spec, grid, simulate)


def load_config(source=None, overrides=(), seed=None) -> RunConfig:
    """Read, merge and validate a configuration.

    ``source`` is a file path, a dict, or None for the defaults. A ``preset``
    key names a built-in starting point that the file's sections refine.
    ``overrides`` are dotted ``section.key=value`` strings applied last
    (``preset=NAME`` swaps the preset);
    ``seed`` sets both the hardening and oracle sampler seeds.
    """
    problems = []
    text = ""
    name = "<config>"
    if source is None:
        doc = {}
    elif isinstance(source, dict):
        doc = copy.deepcopy(source)
    else:
        name = str(source)
        try:
            with open(source, encoding="utf-8") as fh:
                text = fh.read()
        except OSError as exc:
            raise ConfigError(f"{name}: cannot read ({exc.strerror})") from None
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{name}:{exc.lineno}:{exc.colno}: {exc.msg}") from None

    _check_keys(doc, name, text, problems)
    if problems:
        raise ConfigError(problems)
    preset = doc.pop("preset", "default")
    for item in overrides:
        if "=" in item and item.split("=", 1)[0].strip() == "preset":
            preset = parse_override(item)[1]
    if preset not in PRESETS:
        raise ConfigError(f"{_where(name, text, 'preset')}unknown preset {preset!r} "
                          f"(choose from {', '.join(sorted(PRESETS))})")
    doc = _merge(PRESETS[preset], doc)
    _apply_overrides(doc, overrides, problems)
    if seed is not None:
        doc.setdefault("schedule", {})["seed"] = int(seed)
        doc.setdefault("oracle", {})["seed"] = int(seed)
    cfg = _build(doc, problems)
    if problems:
        raise ConfigError(problems)
    doc["preset"] = preset
    return RunConfig(cfg.process, cfg.kinetics, cfg.schedule, cfg.sweep, cfg.oracle,
                     cfg.simulate, doc)


def validate(source=None, overrides=()) -> list:
    """All problems with a configuration; an empty list means it loads."""
    try:
        load_config(source, overrides)
    except ConfigError as exc:
        return exc.problems
    return []


def document(run: RunConfig) -> dict:
    """A complete config document (every key spelled out) for ``run``."""
    p, k, s = run.process, run.kinetics, run.schedule
    doc = {
        "model": {
            "M": p.M,
            "allowed": [[g.name for g in stage] for stage in p.allowed],
            "x0_dry": k.x0_dry,
            "k0": list(k.k0_coeffs), "k1": list(k.k1_coeffs),
            "m0": list(k.m0_coeffs), "m1": list(k.m1_coeffs),
            "negate_k0": k.negate_k0, "allow_sorption": k.allow_sorption,
        },
        "process": {
            "alpha": p.alpha, "rho_air": p.rho_air, "area": p.area, "v_air": p.v_air,
            "c_p": p.c_p, "T0_C": p.T0 - KELVIN, "P_us": p.P_us, "x0": p.x0, "x_d": p.x_d,
            "penalty_weight": p.penalty_weight, "t_min": p.t_min,
            "T_bounds_C": [v - KELVIN for v in p.T_bounds],
        },
        "schedule": s.to_dict(),
        "sweep": {"M": list(run.sweep.M), "alpha": list(run.sweep.alpha), "jobs": run.sweep.jobs},
        "oracle": run.oracle.to_dict(),
    }
    if run.simulate is not None:
        doc["simulate"] = {
            "path": str(run.simulate.path),
            "params": [{"t_min": q.t, "T_C": q.T - KELVIN} for q in run.simulate.params],
            "samples_per_stage": run.simulate.samples_per_stage,
        }
    return doc


def with_process(run: RunConfig, **changes) -> RunConfig:
    """Copy of ``run`` with some process fields replaced (kelvin units)."""
    return RunConfig(run.process.replace(**changes), run.kinetics, run.schedule, run.sweep,
                     run.oracle, run.simulate, run.raw)


__all__ = ["RunConfig", "SweepSpec", "SimulateSpec", "PRESETS", "load_config", "validate",
           "document", "with_process", "parse_override", "Technology"]
