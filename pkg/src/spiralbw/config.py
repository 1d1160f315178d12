"""Scenario configuration: TOML files with named blocks, validated before any computation.

Blocks: ``[fwm]``, ``[chi3]``, ``[decay]``, ``[noise]``, ``[run]``, ``[output]``.
Every key is optional, every unknown key is an error, and all messages carry the
line number of the offending key (or block header).
"""
from __future__ import annotations

import math
import re
import sys
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .errors import ConfigError, SpiralBWError
from .fwm import TWO_PI, MHZ, Chi3Params, FwmConfig, PumpConvention, chi3
from .lg_modes import LGMode
from .measurement import DecayModel, NoiseModel
from .metrics import ChshSettings

COMMANDS = ("spectrum", "tomography", "chsh", "witness", "multiplex", "decay")

# name -> (type, default); "flist"/"ilist" are lists of floats/ints
SCHEMA: dict[str, dict[str, tuple]] = {
    "": {"scenario": (str, ""), "command": (str, "")},
    "fwm": {
        "l_w": (int, 0),
        "l_r": (int, 0),
        "write_waist": (float, 1.0),
        "read_waist": (float, 1.0),
        "signal1_waist": (float, 1.0),
        "signal2_waist": (float, 1.0),
        "interaction_length": (float, 1.0),
        "r_max": (float, None),
        "quad_order": (int, 256),
        "pump_convention": (str, "standard"),
        "l_min": (int, -50),
        "l_max": (int, 50),
        "baseline": (bool, True),
    },
    "chi3": {
        "delta_w_mhz": (float, 70.0),
        "omega_mhz": (float, 0.0),
        "rabi_r_mhz": (float, 10.0),
        "gamma_23_mhz": (float, 0.1),
        "gamma_24_mhz": (float, 0.1),
        "gamma_21_mhz": (float, 0.1),
        "dipole_product": (float, 1.0),
        "density_n": (float, 1.0),
    },
    "decay": {
        "tau_ns": (float, 1655.0),
        "storage_time_ns": (float, 0.0),
        "delays_ns": ("flist", [0.0, 500.0, 1000.0, 1500.0, 2000.0, 3000.0, 4000.0, 5000.0]),
        "probability": (float, 1.0),
    },
    "noise": {
        "background_rate": (float, 0.0),
        "signal_rate_scale": (float, 1.0),
    },
    "run": {
        "seed": (int, 0),
        "threads": (int, 1),
        "infinite_counts": (bool, False),
        "duration_s": (float, 3000.0),
        "replicas": (int, 200),
        "state": (str, "eq2-highl"),
        "modes": ("ilist", [0, 4, 8, 12, 16]),
        "delta_l": ("ilist", list(range(0, 11))),
        "inner_waist": (float, 1.0),
        "fit_background": (bool, False),
        "theta_s1": (float, 0.0),
        "theta_s1_prime": (float, math.pi / 4),
        "theta_s2": (float, math.pi / 8),
        "theta_s2_prime": (float, -math.pi / 8),
    },
    "output": {
        "dir": (str, "out"),
        "prefix": (str, ""),
    },
}

# Two-photon target states: name -> (terms {(l1, l2): amplitude}, s1 pair, s2 pair)
STATES = {
    "eq2-highl": ({(-28, 28): 1.0, (-32, 32): 1.0}, (-28, -32), (28, 32)),
    "psi-2-0": ({(0, 2): 1.0, (2, 0): 1.0}, (0, 2), (0, 2)),
    "psi-1-2": ({(0, 3): 1.0, (3, 0): 1.0}, (0, 3), (0, 3)),
}

PRESETS = (
    "fig2-gaussian",
    "fig2-twisted",
    "fig3-multiplex",
    "fig3-decay",
    "fig4-highl",
    "eq2-highl",
    "psi-2-0",
    "psi-1-2",
    "witness-5d",
)


@dataclass(frozen=True)
class RunBlock:
    seed: int = 0
    threads: int = 1
    infinite_counts: bool = False
    duration_s: float = 3000.0
    replicas: int = 200
    state: str = "eq2-highl"
    modes: tuple[int, ...] = (0, 4, 8, 12, 16)
    delta_l: tuple[int, ...] = tuple(range(0, 11))
    inner_waist: float = 1.0
    fit_background: bool = False
    chsh: ChshSettings = ChshSettings()


@dataclass(frozen=True)
class DecayBlock:
    model: DecayModel = DecayModel()
    delays_ns: tuple[float, ...] = ()
    probability: float = 1.0


@dataclass(frozen=True)
class ScenarioConfig:
    scenario: str
    command: str
    fwm: FwmConfig
    l_range: tuple[int, int]
    baseline: bool
    chi: Chi3Params
    decay: DecayBlock
    noise: NoiseModel
    run: RunBlock
    out_dir: Path
    prefix: str
    source: str = field(default="", repr=False, compare=False)

    def override(self, *, seed=None, threads=None, infinite=None, out=None) -> "ScenarioConfig":
        run = self.run
        if seed is not None:
            run = replace(run, seed=int(seed))
        if threads is not None:
            if threads < 1:
                raise ConfigError("--threads must be at least 1")
            run = replace(run, threads=int(threads))
        if infinite:
            run = replace(run, infinite_counts=True)
        return replace(self, run=run, out_dir=Path(out) if out is not None else self.out_dir)


def _line_of(text: str, block: str, key: str | None = None) -> int | None:
    """1-based line of ``key`` inside ``[block]`` (or of the header when key is None)."""
    current = ""
    header = re.compile(r"^\s*\[\s*([^\]\s]+)\s*\]")
    for i, raw in enumerate(text.splitlines(), 1):
        m = header.match(raw)
        if m:
            current = m.group(1)
            if key is None and current == block:
                return i
            continue
        if key is not None and current == block and re.match(rf"^\s*{re.escape(key)}\s*=", raw):
            return i
    return None


def _coerce(kind, value, block, key, text):
    line = _line_of(text, block, key)
    where = f"{block}.{key}" if block else key
    ok = True
    if kind is bool:
        ok = isinstance(value, bool)
    elif kind is int:
        ok = isinstance(value, int) and not isinstance(value, bool)
    elif kind is float:
        ok = isinstance(value, (int, float)) and not isinstance(value, bool)
        if ok:
            value = float(value)
            ok = math.isfinite(value)
    elif kind is str:
        ok = isinstance(value, str)
    elif kind == "ilist":
        ok = isinstance(value, list) and all(isinstance(v, int) and not isinstance(v, bool) for v in value)
    elif kind == "flist":
        ok = isinstance(value, list) and all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in value)
        if ok:
            value = [float(v) for v in value]
    if not ok:
        name = kind if isinstance(kind, str) else kind.__name__
        raise ConfigError(f"{where}: expected {name}, got {value!r}", line)
    return value


def _read_blocks(data: dict, text: str) -> dict[str, dict]:
    out = {name: {k: d for k, (_, d) in keys.items()} for name, keys in SCHEMA.items()}
    for key, value in data.items():
        if isinstance(value, dict):
            if key not in SCHEMA or key == "":
                raise ConfigError(f"unknown block [{key}]", _line_of(text, key))
            for k, v in value.items():
                if k not in SCHEMA[key]:
                    raise ConfigError(f"unknown key {key}.{k}", _line_of(text, key, k) or _line_of(text, key))
                out[key][k] = _coerce(SCHEMA[key][k][0], v, key, k, text)
        else:
            if key not in SCHEMA[""]:
                raise ConfigError(f"unknown top-level key {key!r}", _line_of(text, "", key))
            out[""][key] = _coerce(SCHEMA[""][key][0], value, "", key, text)
    return out


class _Guard:
    """Turn library validation errors into ConfigError anchored at a block or key."""

    def __init__(self, text, block, keys=()):
        self.text, self.block, self.keys = text, block, keys

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        if exc is None or not isinstance(exc, (SpiralBWError, ValueError)) or isinstance(exc, ConfigError):
            return False
        msg = str(exc)
        line = None
        for k in self.keys:
            if k in msg or re.sub(r"_(mhz|ns)$", "", k) in msg:
                line = _line_of(self.text, self.block, k)
                if line:
                    break
        line = line or _line_of(self.text, self.block)
        raise ConfigError(f"[{self.block}] {msg}", line) from None


def _check(cond, msg, text, block, key):
    if not cond:
        raise ConfigError(f"{block}.{key}: {msg}", _line_of(text, block, key) or _line_of(text, block))


def parse_config(text: str, default_command: str = "") -> ScenarioConfig:
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        m = re.search(r"line (\d+)", str(exc))
        raise ConfigError(f"TOML syntax error: {exc}", int(m.group(1)) if m else None) from None
    b = _read_blocks(data, text)
    top, f, c, d, n, r, o = (b[k] for k in ("", "fwm", "chi3", "decay", "noise", "run", "output"))

    command = top["command"] or default_command
    if command and command not in COMMANDS:
        raise ConfigError(f"unknown command {command!r}", _line_of(text, "", "command"))

    with _Guard(text, "fwm", list(SCHEMA["fwm"])):
        _check(f["pump_convention"] in {p.value for p in PumpConvention}, f"unknown convention {f['pump_convention']!r}", text, "fwm", "pump_convention")
        _check(f["l_min"] <= f["l_max"], "empty l range (l_min > l_max)", text, "fwm", "l_max")
        for w in ("write_waist", "read_waist"):
            _check(f[w] > 0, "waist must be positive", text, "fwm", w)
        fwm = FwmConfig(
            LGMode(f["l_w"], 0, f["write_waist"]),
            LGMode(f["l_r"], 0, f["read_waist"]),
            f["signal1_waist"],
            f["signal2_waist"],
            f["interaction_length"],
            f["r_max"],
            f["quad_order"],
            PumpConvention(f["pump_convention"]),
        )
    with _Guard(text, "chi3", list(SCHEMA["chi3"])):
        chi = Chi3Params(
            TWO_PI * MHZ * c["delta_w_mhz"],
            TWO_PI * MHZ * c["omega_mhz"],
            TWO_PI * MHZ * c["rabi_r_mhz"],
            TWO_PI * MHZ * c["gamma_23_mhz"],
            TWO_PI * MHZ * c["gamma_24_mhz"],
            TWO_PI * MHZ * c["gamma_21_mhz"],
            c["dipole_product"],
            c["density_n"],
        )
        chi3(chi)
    with _Guard(text, "decay", list(SCHEMA["decay"])):
        _check(0 <= d["probability"] <= 1, "probability must lie in [0, 1]", text, "decay", "probability")
        _check(all(t >= 0 for t in d["delays_ns"]), "delays must be non-negative", text, "decay", "delays_ns")
        _check(len(set(d["delays_ns"])) >= 3, "need at least three distinct delays", text, "decay", "delays_ns")
        decay = DecayBlock(DecayModel(d["tau_ns"], d["storage_time_ns"]), tuple(d["delays_ns"]), d["probability"])
    with _Guard(text, "noise", list(SCHEMA["noise"])):
        noise = NoiseModel(n["background_rate"], n["signal_rate_scale"])
    with _Guard(text, "run", ["theta"]):
        _check(r["threads"] >= 1, "threads must be at least 1", text, "run", "threads")
        _check(r["duration_s"] > 0, "duration must be positive", text, "run", "duration_s")
        _check(r["replicas"] >= 2, "need at least two replicas", text, "run", "replicas")
        _check(r["seed"] >= 0, "seed must be non-negative", text, "run", "seed")
        _check(r["state"] in STATES, f"unknown state preset {r['state']!r} (known: {', '.join(STATES)})", text, "run", "state")
        _check(len(r["modes"]) >= 2 and len(set(r["modes"])) == len(r["modes"]), "need at least two distinct modes", text, "run", "modes")
        _check(len(r["delta_l"]) >= 1 and all(v >= 0 for v in r["delta_l"]), "delta_l values must be non-negative", text, "run", "delta_l")
        _check(r["inner_waist"] > 0, "inner_waist must be positive", text, "run", "inner_waist")
        chsh = ChshSettings(r["theta_s1"], r["theta_s1_prime"], r["theta_s2"], r["theta_s2_prime"])
        run = RunBlock(
            r["seed"],
            r["threads"],
            r["infinite_counts"],
            r["duration_s"],
            r["replicas"],
            r["state"],
            tuple(r["modes"]),
            tuple(r["delta_l"]),
            r["inner_waist"],
            r["fit_background"],
            chsh,
        )
    _check(o["dir"] != "", "output directory must not be empty", text, "output", "dir")
    return ScenarioConfig(
        top["scenario"],
        command,
        fwm,
        (f["l_min"], f["l_max"]),
        f["baseline"],
        chi,
        decay,
        noise,
        run,
        Path(o["dir"]),
        o["prefix"],
        text,
    )


def load_config(path, default_command: str = "") -> ScenarioConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    return parse_config(text, default_command)


def preset_text(name: str) -> str:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r} (known: {', '.join(PRESETS)})")
    return resources.files("spiralbw").joinpath("presets").joinpath(f"{name}.toml").read_text()


def load_preset(name: str, default_command: str = "") -> ScenarioConfig:
    return parse_config(preset_text(name), default_command)
