"""Experiment configuration files.

The format is a sectioned ``key = value`` file read with :mod:`configparser`.
Lists are comma separated. Every key is optional; missing keys take the
defaults of :class:`~hadoa.experiments.ExperimentConfig`::

    [experiment]
    methods = fd-music, scm-music, had-music
    M = 64
    L = 16
    snr_db = -10, -5, 0, 5, 10
    angles_deg = 10, 60
    powers = 1, 1
    num_snapshots = 1000
    trials = 100
    seed = 20250101
    grid_step_deg = 0.1
    failure_ceiling = 1.0

    [architecture]
    type = fully-connected      ; partially-connected, switch-based, dynamic-subarray
    subarray_size = 4           ; partially-connected
    active_per_chain = 2        ; switch-based
    num_subarrays = 4           ; dynamic-subarray
    closure_ratio = 0.5         ; dynamic-subarray

    [scm]
    plan = sliding              ; pairs, random
    slots = 8                   ; omit to let the plan pick
    recon = toeplitz            ; entrywise, beamspace
    allocation = split          ; per-slot

    [sweep-rf]
    M = 16, 32
    L = 2, 4, 8
    snr_db = 0

    [scan]
    num_sectors = 8
    coarse_slots_per_beam = 1
    fine_step_deg = 1.0
    overlap = 0.25
    fine_slots_per_beam = 1

    [pilot]
    num_slots = 8
    frames_per_slot = 100
    estimator = music           ; matched-filter

Problems are reported as :class:`ConfigError` with the offending line.
"""

from __future__ import annotations

import configparser
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

from .errors import ConfigurationError, HadoaError
from .experiments import ExperimentConfig, PilotSettings, ScanSettings
from .frontend import DynamicSubarray, FullyConnected, PartiallyConnected, SwitchBased

ARCHITECTURES = {
    "fully-connected": FullyConnected,
    "partially-connected": PartiallyConnected,
    "switch-based": SwitchBased,
    "dynamic-subarray": DynamicSubarray,
}


class ConfigError(ConfigurationError):
    """Configuration problem tied to a file location."""

    def __init__(self, message: str, path=None, line: Optional[int] = None):
        self.path = path
        self.line = line
        where = f"{path}:{line}: " if path is not None and line else (f"{path}: " if path is not None else "")
        super().__init__(where + message)


def _floats(s: str) -> tuple[float, ...]:
    return tuple(float(v) for v in s.split(",") if v.strip())


def _ints(s: str) -> tuple[int, ...]:
    return tuple(int(v) for v in s.split(",") if v.strip())


def _words(s: str) -> tuple[str, ...]:
    return tuple(v.strip() for v in s.split(",") if v.strip())


# section -> key -> (parser, ExperimentConfig field or a sub-config field)
SCHEMA: dict[str, dict[str, tuple[Callable, str]]] = {
    "experiment": {
        "methods": (_words, "methods"),
        "m": (int, "M"),
        "l": (int, "L"),
        "snr_db": (_floats, "snr_db_list"),
        "angles_deg": (_floats, "angles_deg"),
        "powers": (_floats, "powers"),
        "num_snapshots": (int, "num_snapshots"),
        "trials": (int, "trials"),
        "seed": (int, "master_seed"),
        "grid_step_deg": (float, "grid_step_deg"),
        "failure_ceiling": (float, "failure_ceiling"),
    },
    "architecture": {
        "type": (str, "type"),
        "subarray_size": (int, "subarray_size"),
        "active_per_chain": (int, "active_per_chain"),
        "num_subarrays": (int, "num_subarrays"),
        "closure_ratio": (float, "closure_ratio"),
    },
    "scm": {
        "plan": (str, "plan_kind"),
        "slots": (int, "plan_slots"),
        "recon": (str, "recon"),
        "allocation": (str, "allocation"),
    },
    "sweep-rf": {
        "m": (_ints, "M_list"),
        "l": (_ints, "L_list"),
        "snr_db": (float, "rf_snr_db"),
    },
    "scan": {
        "num_sectors": (int, "num_sectors"),
        "coarse_slots_per_beam": (int, "coarse_slots_per_beam"),
        "fine_step_deg": (float, "fine_step_deg"),
        "overlap": (float, "overlap"),
        "fine_slots_per_beam": (int, "fine_slots_per_beam"),
    },
    "pilot": {
        "num_slots": (int, "num_slots"),
        "frames_per_slot": (int, "frames_per_slot"),
        "estimator": (str, "estimator"),
    },
}

_SECTION = re.compile(r"^\s*\[([^\]]+)\]")
_KEY = re.compile(r"^\s*([^=:\s;#][^=:]*?)\s*[=:]")


def _line_index(text: str) -> dict:
    """``(section, key) -> line`` and ``(section, None) -> line`` for diagnostics."""
    idx, sec = {}, None
    for n, raw in enumerate(text.splitlines(), start=1):
        m = _SECTION.match(raw)
        if m:
            sec = m.group(1).strip().lower()
            idx.setdefault((sec, None), n)
            continue
        m = _KEY.match(raw)
        if m and sec is not None and not raw[:1].isspace():
            idx.setdefault((sec, m.group(1).strip().lower()), n)
    return idx


@dataclass(frozen=True)
class LoadedConfig:
    config: ExperimentConfig
    path: Optional[Path]
    lines: dict = field(default_factory=dict, compare=False)

    def line_of(self, section: str, key: Optional[str] = None) -> Optional[int]:
        return self.lines.get((section, key)) or self.lines.get((section, None))


def parse_config(text: str, path=None) -> LoadedConfig:
    """Parse configuration text into a validated :class:`ExperimentConfig`."""
    lines = _line_index(text)
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"), interpolation=None)
    try:
        cp.read_string(text, source=str(path) if path is not None else "<config>")
    except configparser.Error as e:
        line = getattr(e, "lineno", None)
        if line is None and getattr(e, "errors", None):
            line = e.errors[0][0]
        raise ConfigError(str(e).splitlines()[0], path, line) from e

    values: dict[str, dict] = {s: {} for s in SCHEMA}
    for sec in cp.sections():
        s = sec.strip().lower()
        if s not in SCHEMA:
            raise ConfigError(f"unknown section [{sec}]; expected one of {', '.join(SCHEMA)}", path,
                              lines.get((s, None)))
        for key, raw in cp.items(sec):
            k = key.lower()
            if k not in SCHEMA[s]:
                raise ConfigError(f"unknown key {key!r} in [{sec}]", path, lines.get((s, k)))
            conv, name = SCHEMA[s][k]
            try:
                values[s][name] = conv(raw.strip())
            except ValueError as e:
                raise ConfigError(f"bad value for {key} in [{sec}]: {raw!r} ({e})", path, lines.get((s, k))) from e

    def loc(section, key=None):
        return lines.get((section, key)) or lines.get((section, None))

    arch = dict(values["architecture"])
    kind = arch.pop("type", "fully-connected").lower()
    if kind not in ARCHITECTURES:
        raise ConfigError(f"unknown architecture type {kind!r}; expected one of {', '.join(ARCHITECTURES)}",
                          path, loc("architecture", "type"))
    cls = ARCHITECTURES[kind]
    allowed = {f for f in cls.__dataclass_fields__} - {"selection", "switches"}
    extra = set(arch) - allowed
    if extra:
        k = sorted(extra)[0]
        raise ConfigError(f"key {k!r} does not apply to architecture {kind}", path, loc("architecture", k))
    try:
        spec = cls(**arch)
    except TypeError as e:
        raise ConfigError(f"architecture {kind}: {e}", path, loc("architecture", "type")) from e
    except ConfigurationError as e:
        raise ConfigError(str(e), path, loc("architecture")) from e

    kwargs = {**values["experiment"], **values["scm"], **values["sweep-rf"], "architecture": spec}
    try:
        kwargs["scan"] = ScanSettings(**values["scan"])
        kwargs["pilot"] = PilotSettings(**values["pilot"])
        cfg = ExperimentConfig(**kwargs)
    except (ConfigurationError, ValueError) as e:
        raise ConfigError(str(e), path, _guess_line(str(e), lines)) from e
    return LoadedConfig(cfg, Path(path) if path is not None else None, lines)


def _guess_line(message: str, lines: dict) -> Optional[int]:
    """Best-effort line for a validation message that names a key."""
    low = message.lower()
    for (sec, key), n in sorted(lines.items(), key=lambda kv: kv[1]):
        if key and re.search(rf"\b{re.escape(key)}\b", low):
            return n
    return None


def load_config(path) -> LoadedConfig:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as e:
        raise ConfigError(f"cannot read config: {e.strerror}", p) from e
    return parse_config(text, p)


def validate_loaded(loaded: LoadedConfig, rf_sweep: Optional[bool] = None) -> None:
    """Deep checks that need the numerical modules: combiner constraints and SCM identifiability.

    The ``(M, L)`` grid of the RF sweep is checked too when ``rf_sweep`` is set,
    or, by default, when the file has a ``[sweep-rf]`` section.
    """
    from .errors import IdentifiabilityError
    from .experiments import check_config

    cfg = loaded.config
    try:
        check_config(cfg)
        if rf_sweep is None:
            rf_sweep = ("sweep-rf", None) in loaded.lines
        if rf_sweep:
            for M in cfg.M_list:
                for L in cfg.L_list:
                    check_config(cfg.replace(M=M, L=L))
    except IdentifiabilityError as e:
        raise ConfigError(f"rank deficit: {e} (numerical rank {e.numerical_rank}, required {e.required_rank})",
                          loaded.path, loaded.line_of("scm")) from e
    except ConfigurationError as e:
        msg = str(e)
        sec = "architecture" if re.search(r"subarray|switch|closure|active|L <= M|L=", msg) else "experiment"
        raise ConfigError(msg, loaded.path, loaded.line_of(sec)) from e
    except HadoaError as e:
        raise ConfigError(str(e), loaded.path) from e


def config_to_dict(cfg: ExperimentConfig) -> dict:
    """JSON-friendly echo of a resolved configuration."""
    import dataclasses

    d = dataclasses.asdict(cfg)
    d["architecture"] = {"type": type(cfg.architecture).__name__, **dataclasses.asdict(cfg.architecture)}
    return d
