"""Experiment configuration: INI-style sections of ``key = value`` lines.

Numeric values may be arithmetic expressions such as ``sqrt(2)/255``.
Overrides use ``section.key=value``.
"""

import ast
import configparser
import math
import operator
import os
from dataclasses import dataclass, field

__all__ = ["ConfigError", "ExperimentConfig", "SCHEMA", "safe_eval", "load_config",
           "parse_override"]


class ConfigError(ValueError):
    """Invalid configuration (unknown key, bad value, incompatible choices)."""


_BINOPS = {ast.Add: operator.add, ast.Sub: operator.sub, ast.Mult: operator.mul,
           ast.Div: operator.truediv, ast.Pow: operator.pow}
_UNARY = {ast.UAdd: operator.pos, ast.USub: operator.neg}
_FUNCS = {"sqrt": math.sqrt, "exp": math.exp, "log": math.log}
_CONSTS = {"pi": math.pi, "e": math.e, "inf": math.inf}


def safe_eval(text):
    """Evaluate a numeric expression built from literals, + - * / **, and sqrt/exp/log."""

    def ev(node):
        if isinstance(node, ast.Expression):
            return ev(node.body)
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)) \
                and not isinstance(node.value, bool):
            return node.value
        if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
            return _BINOPS[type(node.op)](ev(node.left), ev(node.right))
        if isinstance(node, ast.UnaryOp) and type(node.op) in _UNARY:
            return _UNARY[type(node.op)](ev(node.operand))
        if isinstance(node, ast.Name) and node.id in _CONSTS:
            return _CONSTS[node.id]
        if (isinstance(node, ast.Call) and isinstance(node.func, ast.Name)
                and node.func.id in _FUNCS and len(node.args) == 1 and not node.keywords):
            return _FUNCS[node.func.id](ev(node.args[0]))
        raise ConfigError(f"unsupported expression {text!r}")

    try:
        tree = ast.parse(str(text).strip(), mode="eval")
    except SyntaxError:
        raise ConfigError(f"cannot parse number {text!r}") from None
    try:
        return ev(tree)
    except (ZeroDivisionError, OverflowError, ValueError) as exc:
        raise ConfigError(f"cannot evaluate {text!r}: {exc}") from None


def _num(text):
    return float(safe_eval(text))


def _int(text):
    v = safe_eval(text)
    if isinstance(v, float):
        if not v.is_integer():
            raise ConfigError(f"expected an integer, got {text!r}")
        v = int(v)
    return v


def _bool(text):
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"expected a boolean, got {text!r}")


def _str(text):
    return str(text).strip()


def _opt(conv):
    def f(text):
        t = str(text).strip()
        return None if t.lower() in ("", "none") else conv(t)
    return f


def _choice(*options):
    def f(text):
        t = str(text).strip().lower()
        if t not in options:
            raise ConfigError(f"{text!r} is not one of {', '.join(options)}")
        return t
    return f


TASKS = ("denoise", "deblur", "sr2", "sr3", "inpaint")
ALGORITHMS = ("pnp_gd", "red", "admm", "closed_form")
PRIORS = ("tikhonov", "laplacian", "zero", "reg", "denoiser")

# section -> key -> (converter, default)
SCHEMA = {
    "task": {
        "name": (_choice(*TASKS), "deblur"),
        # deblur: gauss1.6 | gauss2.0 | aniso1 | aniso2 ; sr: bicubic | gaussian
        "kernel": (_str, "gauss1.6"),
        "kernel_size": (_int, 25),
        "sigma_n": (_num, 0.0),
        "keep_rate": (_num, 0.2),
        "operator_method": (_choice("fft", "direct"), "fft"),
    },
    "solver": {
        "algorithm": (_choice(*ALGORITHMS), "pnp_gd"),
        "preset": (_bool, False),
        "mu": (_opt(_num), None),
        "sigma": (_opt(_num), None),
        "n_iter": (_opt(_int), None),
        "max_iter": (_opt(_int), None),
        "update": (_choice("plain", "adam"), "plain"),
        "self_ensemble": (_bool, False),
        "tol": (_opt(_num), None),
        "w": (_opt(_num), None),
        "sigma_f": (_opt(_num), None),
        "s0": (_opt(_num), None),
        "sN": (_opt(_num), None),
    },
    "prior": {
        "kind": (_choice(*PRIORS), "tikhonov"),
        "checkpoint": (_opt(_str), None),
    },
    "data": {
        # whitespace-separated image paths or directories of PNGs
        "images": (_str, ""),
        "toy_count": (_int, 4),
        "toy_size": (_int, 32),
        "channels": (_int, 1),
    },
    "run": {
        "seed": (_int, 0),
        "out": (_str, "out"),
        "jobs": (_int, 1),
        "fp64": (_bool, False),
        "save_images": (_bool, True),
        "figures": (_bool, True),
    },
    "train": {
        "steps": (_int, 2000),
        "pretrain_steps": (_int, 2000),
        "lr": (_num, 1e-3),
        "lr_period": (_int, 700),
        "lr_floor": (_num, 1.25e-4),
        "batch_size": (_int, 8),
        "patch_size": (_int, 16),
        "lam": (_num, 0.004),
        "alternation": (_num, 0.5),
        "freeze_denoiser": (_bool, False),
        "base_channels": (_int, 8),
        "scales": (_int, 2),
        "blocks": (_int, 2),
        "toy_count": (_int, 24),
        "toy_size": (_int, 64),
        "denoiser": (_opt(_str), None),
        "reg": (_opt(_str), None),
    },
    "study": {
        "kind": (_choice("ablation", "admm_stability"), "ablation"),
        "joint_denoiser": (_opt(_str), None),
        "joint_reg": (_opt(_str), None),
        "frozen_denoiser": (_opt(_str), None),
        "frozen_reg": (_opt(_str), None),
        "original_denoiser": (_opt(_str), None),
        "updated_denoiser": (_opt(_str), None),
        "heldout_count": (_int, 8),
        "heldout_seed": (_int, 12345),
    },
}


@dataclass
class ExperimentConfig:
    """Typed view over all sections; ``values[section][key]``."""

    values: dict = field(default_factory=dict)
    source: str = None

    def __post_init__(self):
        full = {sec: {k: d for k, (_, d) in keys.items()} for sec, keys in SCHEMA.items()}
        for sec, kv in self.values.items():
            for k, v in kv.items():
                full[sec][k] = v
        self.values = full

    def __getitem__(self, section):
        return self.values[section]

    def get(self, dotted):
        sec, key = _split(dotted)
        return self.values[sec][key]

    def set(self, dotted, raw):
        sec, key = _split(dotted)
        conv = SCHEMA[sec][key][0]
        try:
            self.values[sec][key] = conv(raw) if isinstance(raw, str) else raw
        except ConfigError as exc:
            raise ConfigError(f"{dotted}: {exc}") from None

    def apply_overrides(self, overrides):
        for item in overrides or ():
            key, raw = parse_override(item)
            self.set(key, raw)
        return self

    def echo(self):
        """Canonical text form; loading it back gives an equal config."""
        lines = []
        for sec in SCHEMA:
            lines.append(f"[{sec}]")
            for key in SCHEMA[sec]:
                v = self.values[sec][key]
                lines.append(f"{key} = {_render(v)}")
            lines.append("")
        return "\n".join(lines)

    def to_dict(self):
        return {sec: dict(kv) for sec, kv in self.values.items()}

    def resolve_path(self, path):
        """Relative paths are taken relative to the config file's directory."""
        if path is None or os.path.isabs(path) or self.source is None:
            return path
        return os.path.join(os.path.dirname(os.path.abspath(self.source)), path)


def _render(v):
    if v is None:
        return "none"
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _split(dotted):
    if "." not in dotted:
        raise ConfigError(f"key {dotted!r} must have the form section.key")
    sec, key = dotted.split(".", 1)
    if sec not in SCHEMA:
        raise ConfigError(f"unknown section {sec!r}")
    if key not in SCHEMA[sec]:
        raise ConfigError(f"unknown key {key!r} in section [{sec}]")
    return sec, key


def parse_override(item):
    if "=" not in item:
        raise ConfigError(f"override {item!r} must look like section.key=value")
    key, raw = item.split("=", 1)
    key = key.strip()
    _split(key)
    return key, raw.strip()


def parse_config_text(text, source=None):
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    cp.optionxform = str
    try:
        cp.read_string(text, source=source or "<config>")
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from None
    cfg = ExperimentConfig(source=source)
    for sec in cp.sections():
        for key, raw in cp.items(sec):
            cfg.set(f"{sec}.{key}", raw)
    return cfg


def load_config(path=None, overrides=()):
    """Defaults, then the file at ``path`` (if any), then overrides."""
    if path is None:
        cfg = ExperimentConfig()
    else:
        if not os.path.isfile(path):
            raise ConfigError(f"config file {path!r} does not exist")
        with open(path, encoding="utf-8") as fh:
            cfg = parse_config_text(fh.read(), source=path)
    return cfg.apply_overrides(overrides)
