"""Experiment configuration: a sectioned ``key = value`` text file.

Example (the electron defaults)::

    [system]
    preset = electron        # or: hole
    t1_ns = 0.76
    t2_ns = 1.52             # or gamma3_per_ns, not both
    t2star_ns = 2.4
    zeeman_ghz = 22.0
    p_over_psat = 0.1        # or omega_rad_per_ns, not both
    branching = 0.5          # gamma31 / gamma

    [sweep]
    tau_max_ns = 4.0
    tau_points = 101
    tau_spacing = linear     # or: log
    visibility_powers = 0.1, 0.5
    sat_powers = 0.05, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 1.0
    delays_ns = 0.75, 3.0
    phase_points = 24
    mean_counts = 500.0
    background = 0.0

    [sequence]
    mode = single            # or: double
    prep_ns = 10.0
    excite_ns = 10.0
    rep_period_ns = 52.0
    window_ns = 3.0
    pulse_ns = 3.0

    [output]
    dir = out
    formats = csv, json

    [run]
    seed = 2016

Every key can be overridden from the environment as
``RAMANVIS_<SECTION>_<KEY>`` (upper case), e.g. ``RAMANVIS_SYSTEM_T2STAR_NS=2.6``.
Environment values win over the file, the file wins over the preset, the
preset wins over the built-in defaults.
"""

from __future__ import annotations

import ast
import configparser
import dataclasses
import hashlib
import logging
import math
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping

from .core import SystemParams
from .fringes import PulseSequence, SequenceMode
from .spectral import power_to_rabi

__all__ = [
    "ConfigError",
    "SystemBlock",
    "SweepBlock",
    "SequenceBlock",
    "OutputBlock",
    "ExperimentConfig",
    "PRESETS",
    "ENV_PREFIX",
    "load_config",
    "loads_config",
    "serialize",
    "config_hash",
]

log = logging.getLogger(__name__)

ENV_PREFIX = "RAMANVIS_"


class ConfigError(ValueError):
    """Configuration could not be parsed or failed validation.

    ``problems`` lists every issue found, not only the first.
    """

    def __init__(self, problems: list[str]):
        self.problems = list(problems)
        super().__init__("invalid configuration:\n  " + "\n  ".join(self.problems))


@dataclass(frozen=True)
class SystemBlock:
    preset: str = "electron"
    t1_ns: float = 0.76
    t2_ns: float | None = None
    gamma3_per_ns: float | None = None
    t2star_ns: float = 2.4
    zeeman_ghz: float = 22.0
    p_over_psat: float | None = None
    omega_rad_per_ns: float | None = None
    branching: float = 0.5


@dataclass(frozen=True)
class SweepBlock:
    tau_max_ns: float = 4.0
    tau_points: int = 101
    tau_spacing: str = "linear"
    visibility_powers: tuple[float, ...] = (0.1, 0.5)
    sat_powers: tuple[float, ...] = (0.05, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 1.0)
    delays_ns: tuple[float, ...] = (0.75, 3.0)
    phase_points: int = 24
    mean_counts: float = 500.0
    background: float = 0.0


@dataclass(frozen=True)
class SequenceBlock:
    mode: str = "single"
    prep_ns: float = 10.0
    excite_ns: float = 10.0
    rep_period_ns: float = 52.0
    window_ns: float = 3.0
    pulse_ns: float = 3.0


@dataclass(frozen=True)
class OutputBlock:
    dir: str = "out"
    formats: tuple[str, ...] = ("csv", "json")


@dataclass(frozen=True)
class RunBlock:
    seed: int = 2016


@dataclass(frozen=True)
class ExperimentConfig:
    system: SystemBlock = SystemBlock()
    sweep: SweepBlock = SweepBlock()
    sequence: SequenceBlock = SequenceBlock()
    output: OutputBlock = OutputBlock()
    run: RunBlock = RunBlock()

    def system_params(self) -> SystemParams:
        s = self.system
        gamma = 1.0 / s.t1_ns
        if s.omega_rad_per_ns is not None:
            omega = s.omega_rad_per_ns
        else:
            omega = power_to_rabi(s.p_over_psat, gamma)
        if s.gamma3_per_ns is not None:
            return SystemParams(
                omega=omega,
                gamma=gamma,
                branching=(s.branching * gamma, (1 - s.branching) * gamma),
                gamma3=s.gamma3_per_ns,
                omega12=2 * math.pi * s.zeeman_ghz,
                t2star=s.t2star_ns,
            )
        return SystemParams.from_lifetimes(
            s.t1_ns,
            s.t2_ns,
            omega=omega,
            t2star=s.t2star_ns,
            zeeman_ghz=s.zeeman_ghz,
            branching_ratio=s.branching,
        )

    def at_power(self, p_over_psat: float) -> SystemParams:
        sys_block = dataclasses.replace(self.system, p_over_psat=p_over_psat, omega_rad_per_ns=None)
        return dataclasses.replace(self, system=sys_block).system_params()

    def pulse_sequence(self, delta_t: float | None = None) -> PulseSequence:
        q = self.sequence
        return PulseSequence(
            prep_length=q.prep_ns,
            excite_length=q.excite_ns,
            rep_period=q.rep_period_ns,
            window_length=q.window_ns,
            mode=SequenceMode(q.mode),
            delta_t=delta_t,
            pulse_length=q.pulse_ns,
        )


SECTIONS = {
    "system": SystemBlock,
    "sweep": SweepBlock,
    "sequence": SequenceBlock,
    "output": OutputBlock,
    "run": RunBlock,
}

PRESETS: dict[str, dict[str, dict[str, object]]] = {
    "electron": {},
    "hole": {
        "system": {"t2star_ns": 25.7, "zeeman_ghz": 8.0, "p_over_psat": 0.05},
        "sweep": {
            "tau_max_ns": 40.0,
            "visibility_powers": (0.05,),
            "delays_ns": (5.0, 25.0),
        },
        "sequence": {"mode": "double", "pulse_ns": 3.0, "window_ns": 2.5},
    },
}

# defaults that depend on other keys
_DERIVED_DEFAULTS = {
    ("system", "t2_ns"): "2 * t1_ns",
    ("system", "p_over_psat"): "0.1",
}


def _field_types(block) -> dict[str, str]:
    return {f.name: str(f.type) for f in dataclasses.fields(block)}


def _convert(kind: str, raw: str):
    raw = raw.strip()
    if kind.startswith("tuple[float"):
        return tuple(float(x) for x in raw.replace(";", ",").split(",") if x.strip())
    if kind.startswith("tuple[str"):
        return tuple(x.strip() for x in raw.split(",") if x.strip())
    if kind == "int":
        return int(raw)
    if kind.startswith("float"):
        if raw.lower() in ("", "none"):
            return None
        return float(raw)
    return raw


def _format(value) -> str:
    if isinstance(value, tuple):
        return ", ".join(_format(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _unrepr(line: str) -> str:
    # newer configparser versions store repr(line) in ParsingError.errors
    if len(line) >= 2 and line[0] == line[-1] and line[0] in "'\"":
        try:
            return ast.literal_eval(line)
        except (ValueError, SyntaxError):
            pass
    return line


def _col(line: str) -> int:
    return 1 + len(line) - len(line.lstrip())


def _parse(text: str, source: str) -> dict[str, dict[str, str]]:
    parser = configparser.ConfigParser(
        interpolation=None, inline_comment_prefixes=("#", ";"), strict=True
    )
    try:
        parser.read_string(text, source=source)
    except configparser.MissingSectionHeaderError as exc:
        raise ConfigError(
            [f"{source}: line {exc.lineno}, column {_col(exc.line)}: key outside a [section]"]
        ) from None
    except configparser.ParsingError as exc:
        raise ConfigError(
            [
                f"{source}: line {ln}, column {_col(_unrepr(line))}: cannot parse {_unrepr(line).strip()!r}"
                for ln, line in exc.errors
            ]
        ) from None
    except (configparser.DuplicateOptionError, configparser.DuplicateSectionError) as exc:
        raise ConfigError([f"{source}: line {exc.lineno}, column 1: {exc.message}"]) from None
    return {sec: dict(parser.items(sec)) for sec in parser.sections()}


def _env_overrides(environ: Mapping[str, str]) -> dict[str, dict[str, str]]:
    out: dict[str, dict[str, str]] = {}
    for name, value in environ.items():
        if not name.startswith(ENV_PREFIX):
            continue
        section, _, key = name[len(ENV_PREFIX):].lower().partition("_")
        if section in SECTIONS and key:
            out.setdefault(section, {})[key] = value
    return out


def _resolvable_dir(path: str) -> bool:
    p = Path(path).expanduser().absolute()
    while not p.exists():
        if p.parent == p:
            return False
        p = p.parent
    return p.is_dir() and os.access(p, os.W_OK)


def _validate(cfg: ExperimentConfig) -> list[str]:
    problems = []
    s, w, q = cfg.system, cfg.sweep, cfg.sequence
    if s.t2_ns is not None and s.gamma3_per_ns is not None:
        problems.append("system: give only one of 't2_ns' and 'gamma3_per_ns'")
    if s.p_over_psat is not None and s.omega_rad_per_ns is not None:
        problems.append("system: give only one of 'p_over_psat' and 'omega_rad_per_ns'")
    for name in ("t1_ns", "t2star_ns"):
        if not getattr(s, name) > 0:
            problems.append(f"system: '{name}' must be > 0")
    for name in ("t2_ns",):
        v = getattr(s, name)
        if v is not None and not v > 0:
            problems.append(f"system: '{name}' must be > 0")
    if s.t2_ns is not None and s.t1_ns > 0 and s.t2_ns > 2 * s.t1_ns * (1 + 1e-12):
        problems.append("system: 't2_ns' must not exceed 2 * t1_ns")
    for name in ("gamma3_per_ns", "p_over_psat", "omega_rad_per_ns", "zeeman_ghz"):
        v = getattr(s, name)
        if v is not None and v < 0:
            problems.append(f"system: '{name}' must be >= 0")
    if not 0 <= s.branching <= 1:
        problems.append("system: 'branching' must lie in [0, 1]")
    if s.preset not in PRESETS:
        problems.append(f"system: unknown preset {s.preset!r} (choose from {', '.join(PRESETS)})")
    if not w.tau_max_ns > 0:
        problems.append("sweep: 'tau_max_ns' must be > 0")
    if w.tau_points < 2:
        problems.append("sweep: 'tau_points' must be >= 2")
    if w.tau_spacing not in ("linear", "log"):
        problems.append("sweep: 'tau_spacing' must be 'linear' or 'log'")
    if any(p < 0 for p in w.visibility_powers + w.sat_powers):
        problems.append("sweep: powers must be >= 0")
    if any(d < 0 for d in w.delays_ns):
        problems.append("sweep: 'delays_ns' must be >= 0")
    if w.phase_points < 6:
        problems.append("sweep: 'phase_points' must be >= 6")
    if w.mean_counts < 0 or w.background < 0:
        problems.append("sweep: 'mean_counts' and 'background' must be >= 0")
    if q.mode not in [m.value for m in SequenceMode]:
        problems.append("sequence: 'mode' must be 'single' or 'double'")
    for name in ("prep_ns", "excite_ns", "rep_period_ns", "window_ns", "pulse_ns"):
        if getattr(q, name) < 0:
            problems.append(f"sequence: '{name}' must be >= 0")
    active = q.pulse_ns if q.mode == "double" else q.excite_ns
    if q.window_ns > active:
        problems.append("sequence: 'window_ns' longer than the excitation pulse")
    bad_formats = set(cfg.output.formats) - {"csv", "json"}
    if bad_formats:
        problems.append(f"output: unknown formats {sorted(bad_formats)}")
    if not _resolvable_dir(cfg.output.dir):
        problems.append(f"output: directory {cfg.output.dir!r} cannot be created")
    if cfg.run.seed < 0:
        problems.append("run: 'seed' must be >= 0")
    return problems


# a preset value steps aside when the file sets the other key of its pair
_PARTNER = {
    "t2_ns": "gamma3_per_ns",
    "gamma3_per_ns": "t2_ns",
    "p_over_psat": "omega_rad_per_ns",
    "omega_rad_per_ns": "p_over_psat",
}


def loads_config(
    text: str, *, source: str = "<string>", environ: Mapping[str, str] | None = None
) -> ExperimentConfig:
    """Parse configuration text; see the module docstring for the format."""
    raw = _parse(text, source)
    env = _env_overrides(os.environ if environ is None else environ)
    for section, values in env.items():
        raw.setdefault(section, {}).update(values)

    problems = []
    for section in raw:
        if section not in SECTIONS:
            problems.append(f"{source}: unknown section [{section}]")

    preset = raw.get("system", {}).get("preset", "electron").strip()
    preset_values = PRESETS.get(preset, {})
    blocks = {}
    for section, block in SECTIONS.items():
        types = _field_types(block)
        given = raw.get(section, {})
        values = {}
        for key in given:
            if key not in types:
                problems.append(f"{source}: unknown key '{key}' in [{section}]")
        for key, kind in types.items():
            if key in given:
                try:
                    values[key] = _convert(kind, given[key])
                except ValueError:
                    problems.append(f"{section}: '{key}' = {given[key]!r} is not a valid {kind}")
            elif key in preset_values.get(section, {}) and _PARTNER.get(key) not in given:
                values[key] = preset_values[section][key]
                log.info("default applied: %s.%s = %r (preset %s)", section, key, values[key], preset)
            else:
                default = getattr(block(), key)
                if default is not None:
                    log.info("default applied: %s.%s = %r", section, key, default)
        blocks[section] = block(**values)

    cfg = ExperimentConfig(**blocks)
    problems.extend(_validate(cfg))
    if problems:
        raise ConfigError(problems)

    s = cfg.system
    fill = {}
    if s.t2_ns is None and s.gamma3_per_ns is None:
        fill["t2_ns"] = 2.0 * s.t1_ns
    if s.p_over_psat is None and s.omega_rad_per_ns is None:
        fill["p_over_psat"] = 0.1
    for key, value in fill.items():
        log.info("default applied: system.%s = %r (%s)", key, value, _DERIVED_DEFAULTS[("system", key)])
    if fill:
        cfg = dataclasses.replace(cfg, system=dataclasses.replace(s, **fill))
    try:
        cfg.system_params()
    except ValueError as exc:
        raise ConfigError([f"system: {exc}"]) from None
    return cfg


def load_config(path=None, *, environ: Mapping[str, str] | None = None) -> ExperimentConfig:
    """Load and validate a configuration file (``None`` gives pure defaults)."""
    if path is None:
        return loads_config("", source="<defaults>", environ=environ)
    path = Path(path)
    if not path.is_file():
        raise ConfigError([f"{path}: no such file"])
    return loads_config(path.read_text(encoding="utf-8"), source=str(path), environ=environ)


def serialize(cfg: ExperimentConfig) -> str:
    """Text form that :func:`loads_config` maps back to an equal config."""
    lines = []
    for section in SECTIONS:
        lines.append(f"[{section}]")
        block = getattr(cfg, section)
        for f in dataclasses.fields(block):
            value = getattr(block, f.name)
            if value is None:
                continue
            lines.append(f"{f.name} = {_format(value)}")
        lines.append("")
    return "\n".join(lines)


def config_hash(cfg: ExperimentConfig, *extra: str) -> str:
    """Hash of everything that affects results; the output directory is excluded."""
    neutral = dataclasses.replace(cfg, output=dataclasses.replace(cfg.output, dir="."))
    h = hashlib.sha256(serialize(neutral).encode())
    for item in extra:
        h.update(b"\0" + item.encode())
    return h.hexdigest()
