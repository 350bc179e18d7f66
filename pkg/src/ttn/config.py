"""Line-oriented configuration files: sections of `key = value` pairs.

Sections are [model], [solver], [noise], [study]; a [manifest] section (as
written next to every output) is accepted and kept as provenance.  Unknown
keys are rejected with their line number, every default is resolved at parse
time, and `echo()` reproduces the fully-resolved configuration, so a manifest
can be fed back as a config to re-run a study byte-identically.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from . import models as tm
from .models import CutoffSpec, ModelSpec
from .integrate import SolverConfig


class ConfigError(ValueError):
    pass


REQUIRED = object()


def _floats(text: str):
    return tuple(float(p) for p in text.replace(",", " ").split())


def _ints(text: str):
    return tuple(int(p) for p in text.replace(",", " ").split())


def _bool(text: str):
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


# key -> (converter, default); REQUIRED means the key must appear whenever the
# section is used by a command, None means "unset"
SCHEMA = {
    "model": {
        "kind": (str, REQUIRED),
        "d": (int, 2),
        "lambda": (float, 0.0),
        "chi": (float, 1.0),
        "alpha": (float, None),
    },
    "solver": {
        "N": (int, REQUIRED),
        "dt": (float, REQUIRED),
        "T": (float, REQUIRED),
        "nu": (float, 0.0),
        "record_every": (int, 1),
        "blowup_threshold": (float, None),
        "cutoff_R": (float, None),
        "cutoff_delta": (float, 0.1),
        "u0": (str, None),
    },
    "noise": {
        "family": (str, "shell"),
        "band": (int, None),
        "basis_K": (int, None),
    },
    "study": {
        "nu_grid": (_floats, None),
        "theta_bands": (_ints, None),
        "paths": (int, 8),
        "base_seed": (int, 0),
        "success_delta": (float, None),
        # ode-check
        "system": (str, None),
        "lam": (float, None),
        "C": (float, None),
        "x0": (float, 0.0),
        "y0": (float, 0.0),
        "ode_dt": (float, 1e-3),
        "ode_T": (float, 1.0),
        "beta_tilde": (float, None),
        "trajectory": (str, None),
        "eps_tol": (float, 1e-3),
        # probe-hypotheses
        "ensemble": (int, 8),
        "amplitude": (float, 1.0),
        "band": (int, 3),
        "seed": (int, 0),
    },
}

SECTIONS = tuple(SCHEMA)


@dataclass
class ResolvedConfig:
    """Raw section values with all defaults applied, plus which keys were
    given explicitly (needed for 'fixed by model' style checks)."""

    values: dict
    explicit: dict = field(default_factory=dict)
    manifest: dict = field(default_factory=dict)

    def get(self, section: str, key: str):
        return self.values[section][key]

    def has_noise(self) -> bool:
        return bool(self.explicit.get("noise"))

    def require(self, section: str, key: str):
        val = self.get(section, key)
        if val is None:
            raise ConfigError(f"missing required key '{key}' in [{section}]")
        return val

    def model(self) -> ModelSpec:
        kind = self.require("model", "kind")
        if kind not in tm.MODEL_KINDS:
            raise ConfigError(f"unknown model kind {kind!r}")
        alpha_given = "alpha" in self.explicit.get("model", set())
        if alpha_given and kind != tm.LINEAR:
            raise ConfigError("alpha fixed by model")
        kwargs = dict(kind=kind, d=self.get("model", "d"),
                      lam=self.get("model", "lambda"),
                      chi=self.get("model", "chi"))
        if kind == tm.LINEAR and self.get("model", "alpha") is not None:
            kwargs["linear_alpha"] = self.get("model", "alpha")
        try:
            return ModelSpec(**kwargs)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def solver(self) -> SolverConfig:
        cutoff = None
        if self.get("solver", "cutoff_R") is not None:
            cutoff = CutoffSpec(self.get("solver", "cutoff_R"),
                                self.get("solver", "cutoff_delta"))
        try:
            return SolverConfig(
                N=self.require("solver", "N"),
                dt=self.require("solver", "dt"),
                T=self.require("solver", "T"),
                nu=self.get("solver", "nu"),
                cutoff=cutoff,
                blowup_threshold=self.get("solver", "blowup_threshold"),
                record_every=self.get("solver", "record_every"),
            )
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def echo(self) -> str:
        """Canonical text with every default made explicit."""
        lines = []
        for section in SECTIONS:
            lines.append(f"[{section}]")
            for key in SCHEMA[section]:
                val = self.values[section][key]
                lines.append(f"{key} = {_render(val)}")
            lines.append("")
        return "\n".join(lines)


def _render(val) -> str:
    if val is None:
        return ""
    if isinstance(val, float):
        return f"{val:.17g}"
    if isinstance(val, tuple):
        return " ".join(_render(v) for v in val)
    return str(val)


def parse_config(path) -> ResolvedConfig:
    """Read and resolve a config file; every error carries its line number."""
    try:
        with open(path) as fh:
            raw_lines = fh.readlines()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None

    values = {s: {k: (None if d in (REQUIRED, None) else d)
                  for k, (_, d) in SCHEMA[s].items()} for s in SECTIONS}
    explicit: dict = {}
    manifest: dict = {}
    section = None
    for lineno, raw in enumerate(raw_lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            name = line[1:-1].strip()
            if name not in SECTIONS and name != "manifest":
                raise ConfigError(f"line {lineno}: unknown section [{name}]")
            section = name
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        if section is None:
            raise ConfigError(f"line {lineno}: key outside any section")
        key, _, text = line.partition("=")
        key, text = key.strip(), text.strip()
        if section == "manifest":
            manifest[key] = text
            continue
        if key not in SCHEMA[section]:
            raise ConfigError(
                f"line {lineno}: unknown key '{key}' in section [{section}]")
        if key in explicit.get(section, set()):
            raise ConfigError(f"line {lineno}: duplicate key '{key}'")
        conv, _default = SCHEMA[section][key]
        if text == "":
            val = None
        else:
            try:
                val = conv(text)
            except ValueError as exc:
                raise ConfigError(f"line {lineno}: bad value for '{key}': {exc}")
        values[section][key] = val
        explicit.setdefault(section, set()).add(key)
    return ResolvedConfig(values, explicit, manifest)
