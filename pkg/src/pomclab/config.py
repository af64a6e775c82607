"""Experiment configuration files.

INI sections whose values are JSON literals::

    [experiment]
    command = "fit"
    model = "nbin"
    seed = 42
    output_dir = "out/fit"

    [theta_star]
    omega = 1.0
    ...

``[theta_star]`` and ``[box]`` may be omitted when ``preset`` names one of
the presets; explicit sections take precedence.
"""
from __future__ import annotations

import configparser
import dataclasses
import hashlib
import json
import re
from dataclasses import dataclass, field

import numpy as np

from .distributions import Gaussian, NoisePair, SymmetricPareto
from .errors import PomcError
from .estimate import ThetaBox
from .hmm import GridSpec, Hmm1, ThetaHmm, parse_initial
from .odm import NbinGarch, NmGarch, ThetaNbin, ThetaNm
from .presets import PRESETS


class ConfigError(PomcError, ValueError):
    pass


COMMANDS = ("simulate", "fit", "kl-profile", "consistency", "filter-forget",
            "return-tail", "moment")

SECTION_KEYS = {
    "experiment": {"command", "model", "seed", "output_dir", "workers", "preset"},
    "run": {"n", "n_list", "replicates", "truncation", "x0", "burn", "beta", "n_samples",
            "cap", "xi", "xi2", "x1", "x2", "data", "resolution", "level", "sensitivity"},
    "grid": {"x_max", "n_cells", "spacing", "stretch", "scheme"},
    "noise": {"alpha", "scale", "sigma"},
    "model_options": {"nb_parametrization", "xi"},
    "profile": {"axes"},
    "theta_star": None,  # model-dependent
    "box": None,
}
SECTION_ORDER = ("experiment", "theta_star", "box", "run", "grid", "noise",
                 "model_options", "profile")


@dataclass
class ExperimentConfig:
    command: str
    model: str
    seed: int
    output_dir: str = "."
    workers: int | None = None
    preset: str | None = None
    theta_star: dict = field(default_factory=dict)
    box: dict = field(default_factory=dict)
    run: dict = field(default_factory=dict)
    grid: dict = field(default_factory=dict)
    noise: dict = field(default_factory=dict)
    model_options: dict = field(default_factory=dict)
    profile: dict = field(default_factory=dict)

    # ---- derived objects -------------------------------------------------

    def noise_pair(self) -> NoisePair:
        n = self.noise
        return NoisePair(SymmetricPareto(n.get("alpha", 3.5), n.get("scale", 1.0)),
                         Gaussian(n.get("sigma", 1.0)))

    def grid_spec(self) -> GridSpec:
        return GridSpec(**self.grid)

    def build_model(self):
        kind, d = parse_model(self.model)
        if kind == "hmm1":
            return Hmm1(self.noise_pair(), self.grid_spec(),
                        self.model_options.get("xi", "dirac:0"))
        if kind == "nbin":
            return NbinGarch(self.model_options.get("nb_parametrization", "mean"))
        return NmGarch(d)

    def theta(self, model=None):
        model = self.build_model() if model is None else model
        return theta_from_dict(model, self.theta_star)

    def theta_box(self, model=None) -> ThetaBox:
        model = self.build_model() if model is None else model
        box = ThetaBox.from_dict(model, self.box)
        box.check_stability(model)
        return box

    def to_sections(self) -> dict:
        exp = {"command": self.command, "model": self.model, "seed": self.seed,
               "output_dir": self.output_dir}
        if self.workers is not None:
            exp["workers"] = self.workers
        if self.preset is not None:
            exp["preset"] = self.preset
        out = {"experiment": exp}
        for name in SECTION_ORDER[1:]:
            if getattr(self, name):
                out[name] = getattr(self, name)
        return out

    def sha256(self) -> str:
        return hashlib.sha256(dump_config(self).encode("utf-8")).hexdigest()


def parse_model(text: str):
    text = str(text).strip().lower()
    if text in ("hmm1", "nbin"):
        return text, 1
    match = re.fullmatch(r"nm\((\d+)\)", text)
    if match and int(match.group(1)) >= 1:
        return "nm", int(match.group(1))
    raise ConfigError(f"unknown model {text!r}; expected hmm1, nbin or nm(d)")


def theta_from_dict(model, values: dict):
    try:
        if isinstance(model, Hmm1):
            _expect_keys(values, {"m", "a"}, "theta_star")
            return ThetaHmm(values["m"], values["a"])
        if isinstance(model, NbinGarch):
            _expect_keys(values, {"omega", "a", "b", "r"}, "theta_star")
            return ThetaNbin(values["omega"], values["a"], values["b"], values["r"])
        _expect_keys(values, {"gamma", "omega", "A", "b"}, "theta_star")
        th = ThetaNm(values["gamma"], values["omega"], values["A"], values["b"])
        model.check_theta(th)
        return th
    except (TypeError, KeyError) as exc:
        raise ConfigError(f"invalid theta_star: {exc}") from exc


def theta_to_dict(theta) -> dict:
    if isinstance(theta, ThetaNm):
        return {"gamma": theta.gamma.tolist(), "omega": theta.omega.tolist(),
                "A": theta.A.tolist(), "b": theta.b.tolist()}
    return {k: float(v) for k, v in vars(theta).items()}


def _expect_keys(values, keys, section):
    if set(values) != set(keys):
        raise ConfigError(f"[{section}] needs keys {sorted(keys)}, got {sorted(values)}")


def parse_config(text: str) -> ExperimentConfig:
    parser = configparser.ConfigParser(interpolation=None, default_section="__none__")
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse config: {exc}") from exc
    sections = {}
    for name in parser.sections():
        if name not in SECTION_KEYS:
            raise ConfigError(f"unknown section [{name}]")
        allowed = SECTION_KEYS[name]
        values = {}
        for key, raw in parser.items(name):
            if allowed is not None and key not in allowed:
                raise ConfigError(f"unknown key {key!r} in [{name}]")
            try:
                values[key] = json.loads(raw)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"[{name}] {key}: not a JSON value: {raw!r}") from exc
        sections[name] = values
    exp = sections.pop("experiment", None)
    if exp is None:
        raise ConfigError("missing [experiment] section")
    for key in ("command", "model", "seed"):
        if key not in exp:
            raise ConfigError(f"[experiment] is missing {key!r}")
    if exp["command"] not in COMMANDS:
        raise ConfigError(f"unknown command {exp['command']!r}")
    seed = exp["seed"]
    if isinstance(seed, bool) or not isinstance(seed, int) or not 0 <= seed < 2**64:
        raise ConfigError("seed must be an integer in [0, 2^64)")
    workers = exp.get("workers")
    if workers is not None and (isinstance(workers, bool) or not isinstance(workers, int)
                                or workers < 1):
        raise ConfigError("workers must be a positive integer")
    parse_model(exp["model"])
    return ExperimentConfig(
        command=exp["command"], model=exp["model"], seed=seed,
        output_dir=str(exp.get("output_dir", ".")), workers=workers,
        preset=exp.get("preset"), **sections)


def load_config(path) -> ExperimentConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text)


def dump_config(cfg: ExperimentConfig) -> str:
    lines = []
    for name, values in cfg.to_sections().items():
        lines.append(f"[{name}]")
        for key, val in values.items():
            lines.append(f"{key} = {json.dumps(_jsonable(val))}")
        lines.append("")
    return "\n".join(lines)


def _jsonable(v):
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, dict):
        return {k: _jsonable(x) for k, x in v.items()}
    if isinstance(v, np.generic):
        return v.item()
    return v


def resolve(cfg: ExperimentConfig) -> ExperimentConfig:
    """Fill ``theta_star``/``box`` from the preset and validate the whole config.

    Every error is raised as ``ConfigError``. Returns a new config.
    """
    cfg = dataclasses.replace(cfg)
    if cfg.preset is not None:
        if cfg.preset not in PRESETS:
            raise ConfigError(f"unknown preset {cfg.preset!r}; known: {sorted(PRESETS)}")
        model_name, star, box = PRESETS[cfg.preset]
        if parse_model(model_name) != parse_model(cfg.model):
            raise ConfigError(f"preset {cfg.preset!r} is for model {model_name}")
        if not cfg.theta_star:
            cfg.theta_star = theta_to_dict(star)
        if not cfg.box:
            cfg.box = {k: list(v) for k, v in box.items()}
    try:
        model = cfg.build_model()
        if cfg.command not in ("return-tail",) or cfg.theta_star:
            if not cfg.theta_star:
                raise ConfigError("[theta_star] is required (directly or via preset)")
            cfg.theta(model)
        if cfg.command in ("fit", "consistency"):
            if not cfg.box:
                raise ConfigError("[box] is required for this command")
            cfg.theta_box(model)
        if "xi" in cfg.run:
            parse_initial(cfg.run["xi"])
    except ConfigError:
        raise
    except (PomcError, ValueError, TypeError) as exc:
        raise ConfigError(str(exc)) from exc
    kind, _ = parse_model(cfg.model)
    hmm_only = {"return-tail", "moment"}
    if cfg.command in hmm_only and kind != "hmm1":
        raise ConfigError(f"command {cfg.command!r} is only defined for model hmm1")
    return cfg
