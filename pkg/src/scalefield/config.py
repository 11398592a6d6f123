"""Flat key-value experiment configuration with dotted sections.

The on-disk format is diff-friendly plain text::

    # comment
    grid.n_max = 8
    schedule.t = 4.0
    mc.replicas = 10000

Unknown keys, bad types, and violated bounds are collected with line/field
diagnostics and reported together.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

__all__ = ["RunConfig", "ConfigError", "parse_config", "parse_config_text",
           "apply_overrides", "default_config", "config_as_dict", "KEYS"]


class ConfigError(ValueError):
    """Carries (line, key, message) diagnostics for every problem found."""

    def __init__(self, problems):
        self.problems = list(problems)
        lines = [f"line {ln if ln is not None else '-'}: {key}: {msg}"
                 for ln, key, msg in self.problems]
        super().__init__("invalid configuration:\n" + "\n".join(lines))


def _bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _float_list(text: str) -> tuple:
    return tuple(float(x) for x in text.replace(",", " ").split())


# key -> (parser, default, validator or None)
KEYS = {
    "experiment": (str, "", None),
    "out": (str, "out", None),
    "grid.dim": (int, 3, lambda v: v in (2, 3) or "dim must be 2 or 3"),
    "grid.modes_per_axis": (int, 0, lambda v: v >= 0 or "must be >= 0"),
    "grid.n_max": (int, 8, lambda v: v >= 1 or "must be >= 1"),
    "grid.padding": (int, 4, lambda v: v >= 1 or "must be >= 1"),
    "schedule.t": (float, 4.0, lambda v: v > 0 or "must be > 0"),
    "schedule.resolution": (float, 1.0, lambda v: v > 0 or "must be > 0"),
    "physics.lam": (float, 0.3, lambda v: v >= 0 or "must be >= 0"),
    "physics.gamma": (float, 0.0, None),
    "physics.t_bar": (float, 2.0, lambda v: v >= 0 or "must be >= 0"),
    "physics.n_aux": (int, 5, lambda v: v % 2 == 1 or "must be odd"),
    "physics.aux_on": (_bool, True, None),
    "physics.n_stop": (float, 1e4, lambda v: v > 0 or "must be > 0"),
    "physics.delta": (float, 0.1, lambda v: 0 < v < 0.5 or "must be in (0, .5)"),
    "mc.replicas": (int, 1000, lambda v: v >= 1 or "must be >= 1"),
    "mc.seed": (int, 0, lambda v: v >= 0 or "must be >= 0"),
    "mc.workers": (int, 0, lambda v: v >= 0 or "must be >= 0"),
    "mc.abort_threshold": (float, 0.05, lambda v: 0 <= v <= 1 or "in [0,1]"),
    "bd.kind": (str, "raw", lambda v: v in ("raw", "renormalized")
                or "kind must be raw or renormalized"),
    "bd.epochs": (int, 200, lambda v: v >= 1 or "must be >= 1"),
    "bd.batch": (int, 128, lambda v: v >= 1 or "must be >= 1"),
    "bd.step": (float, 0.2, lambda v: v > 0 or "must be > 0"),
    "bd.eval_batch": (int, 512, lambda v: v >= 2 or "must be >= 2"),
    "bd.quadratic_m": (float, 0.0, lambda v: v >= 0 or "must be >= 0"),
    "bd.direct_replicas": (int, 10000, lambda v: v >= 100 or "must be >= 100"),
    "scan.ts": (_float_list, (2.0, 4.0, 8.0, 16.0), None),
    "scan.cross_ts": (_float_list, (4.0, 8.0, 16.0), None),
    "scan.q_ts": (_float_list, (2.0, 4.0, 8.0), None),
    "scan.cross_n_max": (int, 12, lambda v: v >= 1 or "must be >= 1"),
    "scan.q_n_max": (int, 8, lambda v: v >= 1 or "must be >= 1"),
    "scan.cross_replicas": (int, 128, lambda v: v >= 4 or "must be >= 4"),
    "scan.q_replicas": (int, 128, lambda v: v >= 4 or "must be >= 4"),
    "weights.ts": (_float_list, (2.0, 4.0, 8.0), None),
    "weights.k_quantile": (float, 0.75, lambda v: 0 < v < 1 or "in (0,1)"),
    "weights.moment_p": (float, 1.01, lambda v: v > 1 or "must be > 1"),
    "weights.eps": (float, 0.1, lambda v: v > 0 or "must be > 0"),
    "ito.resolutions": (_float_list, (0.25, 1.0, 4.0), None),
    "drift.mode": (str, "under-q", lambda v: v in ("under-p", "under-q")
                   or "mode must be under-p or under-q"),
}


@dataclass
class RunConfig:
    values: dict = field(default_factory=dict)
    explicit: set = field(default_factory=set)

    def __getitem__(self, key: str):
        return self.values[key]

    def get(self, key: str, fallback=None):
        return self.values.get(key, fallback)

    def is_set(self, key: str) -> bool:
        return key in self.explicit

    def setdefault_unless_set(self, key: str, value):
        """Experiment-specific default that yields to explicit user settings."""
        if key not in self.explicit:
            self.values[key] = value

    def grid(self):
        from .spectral import TorusGrid
        return TorusGrid(dim=self["grid.dim"],
                         modes_per_axis=self["grid.modes_per_axis"],
                         mode_cutoff=self["grid.n_max"],
                         padding_factor=self["grid.padding"])

    def schedule(self):
        from .paths import make_schedule
        return make_schedule(self["schedule.t"], self["schedule.resolution"])

    def drift_params(self, T: float | None = None):
        from .drift import DriftParams
        return DriftParams(lam=self["physics.lam"],
                           T=self["schedule.t"] if T is None else T,
                           N_stop=self["physics.n_stop"],
                           T_bar=self["physics.t_bar"],
                           n_aux=self["physics.n_aux"],
                           aux_on=self["physics.aux_on"],
                           gamma=self["physics.gamma"])

    def workers(self) -> int:
        import os
        env = os.environ.get("SCALEFIELD_WORKERS")
        if env:
            return max(1, int(env))
        w = self["mc.workers"]
        return w if w > 0 else (os.cpu_count() or 1)


def default_config() -> RunConfig:
    return RunConfig(values={k: v for k, (_, v, _) in KEYS.items()},
                     explicit=set())


def _assign(cfg: RunConfig, key: str, raw: str, line: int | None, problems):
    if key not in KEYS:
        problems.append((line, key, "unknown key"))
        return
    parser, _, validator = KEYS[key]
    try:
        value = parser(raw.strip())
    except ValueError as exc:
        problems.append((line, key, str(exc)))
        return
    if validator is not None:
        ok = validator(value)
        if ok is not True:
            problems.append((line, key, ok if isinstance(ok, str)
                             else "invalid value"))
            return
    cfg.values[key] = value
    cfg.explicit.add(key)


def parse_config_text(text: str) -> RunConfig:
    cfg = default_config()
    problems = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        stripped = raw.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            problems.append((lineno, stripped, "expected key = value"))
            continue
        key, _, val = stripped.partition("=")
        _assign(cfg, key.strip(), val, lineno, problems)
    if problems:
        raise ConfigError(problems)
    return cfg


def parse_config(path: str | Path | None) -> RunConfig:
    if path is None:
        return default_config()
    p = Path(path)
    if not p.exists():
        raise ConfigError([(None, str(p), "config file not found")])
    return parse_config_text(p.read_text())


def apply_overrides(cfg: RunConfig, overrides: list[str]) -> RunConfig:
    problems = []
    for item in overrides:
        if "=" not in item:
            problems.append((None, item, "override must look like key=value"))
            continue
        key, _, val = item.partition("=")
        _assign(cfg, key.strip(), val, None, problems)
    if problems:
        raise ConfigError(problems)
    return cfg


def config_as_dict(cfg: RunConfig) -> dict:
    out = {}
    for k, v in sorted(cfg.values.items()):
        out[k] = list(v) if isinstance(v, tuple) else v
    return out
