"""Run configuration: defaults < config file < command-line overrides.

Config files hold ``key = value`` lines; ``#`` starts a comment. Lists are
comma separated. Unknown keys are rejected so typos fail loudly.
"""
from __future__ import annotations

import dataclasses
import logging
from dataclasses import dataclass

log = logging.getLogger(__name__)

ABLATIONS = ("no_gan", "no_distill", "no_lrf", "no_sym")


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    # descriptor
    lrf_radius: float = 0.3
    grid_size: int = 16
    # encoder
    encoder_channels: tuple = (32, 32, 64, 64, 128, 128, 128)
    encoder_strides: tuple = (1, 2, 1, 2, 1, 2, 1)
    kernel_size: int = 3
    padding: int = 1
    xyz_widths: tuple = (64, 128)           # per-point MLP of the no_lrf ablation
    # heads
    trunk_widths: tuple = (512, 256)
    feature_dim: int = 128
    leaky_slope: float = 0.2
    # distillation: "hard" (coordinate max) or "soft" (tempered expectation)
    gamma_mode: str = "hard"
    gamma: float = 1.0
    # decoder
    decoder_widths: tuple = (256, 64)
    node_dim: int = 8
    root_children: int = 4
    fanout: int = 8
    n_output: int = 2048
    # critic
    critic_channels: tuple = (512, 256, 128, 64, 1)
    # Beta prior
    prior_alpha: float = 0.01
    prior_beta: float = 0.05
    # optimisation
    lr: float = 1e-4
    critic_lr: float = 1e-4
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    batch_size: int = 8
    critic_steps: int = 5
    epochs: int = 300
    seed: int = 0
    centers_per_cloud: int = 2048
    # loss weights
    beta1: float = 10.0
    beta2: float = 1.0
    beta3: float = 0.1
    lambda_gp: float = 1.0
    sym_tol: float = 0.01
    ablations: tuple = ()
    # detection
    nms_radius: float = 0.1
    threshold: float = 0.5
    threads: int = 1

    def validate(self):
        if self.grid_size < 1 or self.kernel_size < 1:
            raise ConfigError("grid_size and kernel_size must be positive")
        if len(self.encoder_channels) != len(self.encoder_strides):
            raise ConfigError("encoder_channels and encoder_strides differ in length")
        if self.gamma_mode not in ("hard", "soft"):
            raise ConfigError(f"gamma_mode must be 'hard' or 'soft', got '{self.gamma_mode}'")
        if self.gamma < 1:
            raise ConfigError("gamma must be >= 1")
        if self.prior_alpha <= 0 or self.prior_beta <= 0:
            raise ConfigError("Beta prior parameters must be positive")
        if self.batch_size < 1 or self.critic_steps < 1:
            raise ConfigError("batch_size and critic_steps must be >= 1")
        if min(self.beta1, self.beta2, self.beta3, self.lambda_gp) < 0:
            raise ConfigError("loss weights must be >= 0")
        if self.critic_channels[-1] != 1:
            raise ConfigError("the last critic layer must have one channel")
        bad = set(self.ablations) - set(ABLATIONS)
        if bad:
            raise ConfigError(f"unknown ablations {sorted(bad)}; expected {ABLATIONS}")
        self.tree_depth()
        return self

    def tree_depth(self):
        """Number of fan-out levels below the root: n_output = root * fanout**depth."""
        n, depth = self.n_output, 0
        if n % self.root_children:
            raise ConfigError(f"n_output {n} is not a multiple of root_children")
        n //= self.root_children
        while n > 1:
            if n % self.fanout:
                raise ConfigError(f"n_output {self.n_output} is not "
                                  f"{self.root_children}*{self.fanout}^k")
            n //= self.fanout
            depth += 1
        return depth

    def has(self, ablation):
        return ablation in self.ablations

    def to_text(self):
        lines = []
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            if isinstance(v, tuple):
                v = ",".join(str(x) for x in v)
            lines.append(f"{f.name} = {v}")
        return "\n".join(lines) + "\n"


_FIELDS = {f.name: f for f in dataclasses.fields(RunConfig)}


def _convert(key, raw):
    default = _FIELDS[key].default
    raw = raw.strip()
    try:
        if isinstance(default, tuple):
            if not raw:
                return ()
            items = [s.strip() for s in raw.split(",") if s.strip()]
            if key == "ablations":
                return tuple(items)
            return tuple(int(s) for s in items)
        if isinstance(default, bool):
            return raw.lower() in ("1", "true", "yes", "on")
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        return raw
    except ValueError:
        raise ConfigError(f"bad value for '{key}': {raw!r}") from None


def parse_config_text(text, source="<config>"):
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
        key, raw = (s.strip() for s in line.split("=", 1))
        if key not in _FIELDS:
            raise ConfigError(f"{source}:{lineno}: unknown config key '{key}'")
        values[key] = _convert(key, raw)
    return values


def load_config(path=None, overrides=None) -> RunConfig:
    """Defaults, then the file at ``path``, then ``overrides`` (a dict)."""
    values = {}
    if path is not None:
        with open(path) as fh:
            values.update(parse_config_text(fh.read(), str(path)))
        missing = [k for k in _FIELDS if k not in values]
        if missing:
            log.info("%s: defaults used for %s", path, ", ".join(missing))
    for key, val in (overrides or {}).items():
        if key not in _FIELDS:
            raise ConfigError(f"unknown config key '{key}'")
        if isinstance(val, str):
            val = _convert(key, val)
        values[key] = val
    return RunConfig(**values).validate()
