"""Flat ``key = value`` configuration files and the objects they build."""

from __future__ import annotations

from dataclasses import fields

from .episodes import TaskSpec
from .errors import ConfigurationError
from .model import ModelConfig
from .training import TrainConfig


def parse_scalar(raw):
    raw = raw.strip()
    low = raw.lower()
    if low in ("true", "false"):
        return low == "true"
    try:
        return int(raw)
    except ValueError:
        pass
    try:
        return float(raw)
    except ValueError:
        pass
    return raw


def parse_config(path):
    """One ``key = value`` per line; ``#`` starts a comment."""
    out = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigurationError(f"{path}:{lineno}: expected 'key = value', got {line!r}")
            key, raw = line.split("=", 1)
            out[key.strip()] = parse_scalar(raw)
    return out


def parse_inline(text):
    """Comma-separated ``key=value`` pairs (CLI convenience)."""
    out = {}
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        if "=" not in part:
            raise ConfigurationError(f"expected key=value, got {part!r}")
        key, raw = part.split("=", 1)
        out[key.strip()] = parse_scalar(raw)
    return out


def _build(cls, conf, prefix, extra_allowed=()):
    names = {f.name for f in fields(cls)}
    kwargs = {}
    for key, value in conf.items():
        if not key.startswith(prefix):
            continue
        name = key[len(prefix):]
        if name in extra_allowed:
            continue
        if name not in names:
            raise ConfigurationError(f"unknown config field '{key}'")
        if name == "mlp_hidden":
            value = tuple(int(v) for v in str(value).split(";") if v != "")
        kwargs[name] = value
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise ConfigurationError(f"bad {prefix}* section: {exc}") from exc


def task_spec_from(conf, prefix="task."):
    return _build(TaskSpec, conf, prefix).validate()


def model_config_from(conf, spec: TaskSpec = None, prefix="model."):
    mcfg = _build(ModelConfig, conf, prefix, extra_allowed=("pretrained_embeddings",))
    if spec is not None:
        mcfg.task = spec.kind
        if spec.kind == "classification":
            mcfg.n_classes = spec.n_classes
            if mcfg.encoder == "mlp":
                mcfg.input_dim = spec.feature_dim
        else:
            mcfg.encoder = "lookup"
            if mcfg.vocab_size <= 0:
                mcfg.vocab_size = spec.n_movies
    return mcfg.validate()


def train_config_from(conf, prefix="train."):
    return _build(TrainConfig, conf, prefix).validate()
