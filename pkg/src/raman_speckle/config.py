"""Experiment configuration documents (YAML) and their validation.

Units are carried in the key suffixes. Unknown sections or keys are
rejected; diagnostics name the offending field and its line.
"""

from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import yaml

from .geometry import CellGeometry, OpticalConstants
from .modes import AngularGrid
from .simulate import DetectorModel, ExperimentConfig

# diffusion constants (cm^2/s) fitted in the reference measurement
GAS_DIFFUSION = {"Ne-5torr": 397.0, "Kr-0.5torr": 257.0, "Kr-1torr": 146.0}

_REQ = object()

SCHEMA: dict[str, dict[str, tuple]] = {
    "optical": {"lambda_write_nm": (795.0, float), "stokes_shift_ghz": (6.8, float)},
    "cell": {
        "length_mm": (100.0, float),
        "write_waist_mm": (2.16, float),  # 1/e^2 diameter
        "read_waist_mm": (1.76, float),
        "tilt_mrad": (13.0, float),
    },
    "gas": {"name": (_REQ, str), "diffusion_cm2_s": (None, float)},
    "rates": {"zeta_sq_per_s": (8.0e7, float), "gamma_sp_per_s": (0.0, float)},
    "pulses": {"t_write_us": (0.1, float), "t_store_us": (0.0, float), "t_read_us": (2.0, float)},
    "sim": {
        "n_modes": (55, int),
        "gain_schedule": ("fresnel", str),
        "grid_n": (128, int),
        "pitch_urad": (76.0, float),
        "w0_mrad": (1.4, float),
        "seed": (0, int),
        "n_frames": (500, int),
        "n_background": (100, int),
    },
    "detector": {
        "background_counts": (50.0, float),
        "read_noise_counts": (5.0, float),
        "shot_noise": (True, bool),
        "counts_per_photon": (10.0, float),
    },
    "retrieval": {"eta": (1.0, float), "epsilon": (0.0, float), "read_blur_mrad": (0.26, float)},
}


class ConfigError(ValueError):
    def __init__(self, message: str, field: str | None = None, line: int | None = None):
        where = ""
        if field:
            where += f"{field}"
        if line is not None:
            where += f" (line {line})"
        super().__init__(f"{where}: {message}" if where else message)
        self.field = field
        self.line = line


@dataclass
class LoadedConfig:
    experiment: ExperimentConfig
    n_frames: int
    document: dict  # fully resolved, defaults filled in
    path: str | None = None


def _line_map(text: str) -> dict[str, int]:
    lines: dict[str, int] = {}
    try:
        root = yaml.compose(text)
    except yaml.YAMLError:
        return lines
    if not isinstance(root, yaml.MappingNode):
        return lines
    for knode, vnode in root.value:
        sec = knode.value
        lines[sec] = knode.start_mark.line + 1
        if isinstance(vnode, yaml.MappingNode):
            for k2, _ in vnode.value:
                lines[f"{sec}.{k2.value}"] = k2.start_mark.line + 1
    return lines


def _coerce(value, typ, field, line):
    if value is None:
        return None
    if typ is bool:
        if isinstance(value, bool):
            return value
        raise ConfigError(f"expected true/false, got {value!r}", field, line)
    if typ is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"expected an integer, got {value!r}", field, line)
        return value
    if typ is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"expected a number, got {value!r}", field, line)
        return float(value)
    if not isinstance(value, str):
        raise ConfigError(f"expected a string, got {value!r}", field, line)
    return value


def resolve_document(raw: dict, lines: dict[str, int] | None = None) -> dict:
    """Validate a parsed document and fill in defaults."""
    lines = lines or {}
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError("top level must be a mapping of sections")
    for sec in raw:
        if sec not in SCHEMA:
            raise ConfigError(f"unknown section (expected one of {', '.join(SCHEMA)})", str(sec), lines.get(str(sec)))
    doc: dict[str, dict] = {}
    for sec, keys in SCHEMA.items():
        given = raw.get(sec) or {}
        if not isinstance(given, dict):
            raise ConfigError("section must be a mapping", sec, lines.get(sec))
        for k in given:
            if k not in keys:
                raise ConfigError(f"unknown key (expected one of {', '.join(keys)})",
                                  f"{sec}.{k}", lines.get(f"{sec}.{k}"))
        out = {}
        for k, (default, typ) in keys.items():
            field = f"{sec}.{k}"
            if k in given:
                out[k] = _coerce(given[k], typ, field, lines.get(field))
            elif default is _REQ:
                raise ConfigError("required key missing", field, lines.get(sec))
            else:
                out[k] = default
        doc[sec] = out
    gas = doc["gas"]
    if gas["diffusion_cm2_s"] is None:
        if gas["name"] not in GAS_DIFFUSION:
            raise ConfigError(
                f"no diffusion constant for gas {gas['name']!r}; set gas.diffusion_cm2_s "
                f"or use one of {', '.join(GAS_DIFFUSION)}", "gas.diffusion_cm2_s", lines.get("gas"))
        gas["diffusion_cm2_s"] = GAS_DIFFUSION[gas["name"]]
    return doc


def config_hash(doc: dict) -> str:
    canon = json.dumps(doc, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()[:16]


_FIELD_KEYS = {
    "diffusion_D": "gas.diffusion_cm2_s",
    "zeta_sq": "rates.zeta_sq_per_s",
    "gamma_sp": "rates.gamma_sp_per_s",
    "t_write": "pulses.t_write_us",
    "t_store": "pulses.t_store_us",
    "t_read": "pulses.t_read_us",
    "read_blur": "retrieval.read_blur_mrad",
    "retrieval_efficiency": "retrieval.eta",
    "read_leak": "retrieval.epsilon",
    "n_modes": "sim.n_modes",
    "gain_schedule": "sim.gain_schedule",
    "n_background": "sim.n_background",
}


def build_experiment(doc: dict, lines: dict[str, int] | None = None) -> LoadedConfig:
    lines = lines or {}
    o, c, g, r, p, s, d, rt = (doc[k] for k in
                               ("optical", "cell", "gas", "rates", "pulses", "sim", "detector", "retrieval"))

    def guard(field, fn):
        try:
            return fn()
        except ValueError as exc:
            msg = str(exc)
            if field == "config":
                # name the document key behind the offending constructor field
                attr = msg.split()[0]
                field = _FIELD_KEYS.get(attr, field)
            raise ConfigError(msg, field, lines.get(field) or lines.get(field.split(".")[0])) from None

    optics = guard("optical", lambda: OpticalConstants(o["lambda_write_nm"] * 1e-9, o["stokes_shift_ghz"] * 1e9))
    cell = guard("cell", lambda: CellGeometry(c["length_mm"] * 1e-3, c["write_waist_mm"] * 1e-3,
                                               c["read_waist_mm"] * 1e-3, c["tilt_mrad"] * 1e-3))
    grid = guard("sim.grid_n", lambda: AngularGrid(s["grid_n"], s["grid_n"], s["pitch_urad"] * 1e-6))
    det = guard("detector", lambda: DetectorModel(d["background_counts"], d["read_noise_counts"],
                                                   d["shot_noise"], d["counts_per_photon"]))
    if s["n_frames"] < 1:
        raise ConfigError("must be >= 1", "sim.n_frames", lines.get("sim.n_frames"))
    exp = guard("config", lambda: ExperimentConfig(
        optics=optics,
        cell=cell,
        diffusion_D=g["diffusion_cm2_s"] * 1e-4,
        zeta_sq=r["zeta_sq_per_s"],
        gamma_sp=r["gamma_sp_per_s"],
        t_write=p["t_write_us"] * 1e-6,
        t_store=p["t_store_us"] * 1e-6,
        t_read=p["t_read_us"] * 1e-6,
        retrieval_efficiency=rt["eta"],
        read_leak=rt["epsilon"],
        read_blur=rt["read_blur_mrad"] * 1e-3,
        grid=grid,
        detector=det,
        n_modes=s["n_modes"],
        gain_schedule=s["gain_schedule"],
        w0=None if s["w0_mrad"] is None else s["w0_mrad"] * 1e-3,
        seed=s["seed"],
        n_background=s["n_background"],
        gas=g["name"],
        config_hash=config_hash(doc),
    ))
    return LoadedConfig(exp, s["n_frames"], doc)


def parse_config(text: str, path: str | None = None) -> LoadedConfig:
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ConfigError(f"YAML syntax error: {getattr(exc, 'problem', exc)}",
                          line=None if mark is None else mark.line + 1) from None
    lines = _line_map(text)
    loaded = build_experiment(resolve_document(raw, lines), lines)
    loaded.path = path
    return loaded


def load_config(path) -> LoadedConfig:
    text = Path(path).read_text(encoding="utf-8")
    return parse_config(text, str(path))


def with_overrides(loaded: LoadedConfig, **overrides) -> LoadedConfig:
    """Return a copy with ``section.key``-style overrides, e.g. ``{"sim.seed": 3}``."""
    doc = copy.deepcopy(loaded.document)
    for dotted, value in overrides.items():
        sec, key = dotted.split(".")
        if sec not in doc or key not in doc[sec]:
            raise ConfigError("unknown key", dotted)
        doc[sec][key] = value
    out = build_experiment(resolve_document(doc))
    out.path = loaded.path
    return out


def dump_document(doc: dict) -> str:
    return yaml.safe_dump(doc, sort_keys=False)
