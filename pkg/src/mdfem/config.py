"""Line-based run configuration: one ``section.key = value`` per line.

Blank lines and ``#`` comments are ignored.  Unknown sections or keys are
rejected so typos surface instead of silently falling back to defaults.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

from .problemspec import (AdmissibilityError, DiffusionModel, DyadicHatFamily, Functional,
                          ProblemSpec, SmoothSineFamily)


class ConfigError(ValueError):
    pass


def _floats(text: str) -> list[float]:
    out = []
    for tok in text.replace(",", " ").split():
        if "^" in tok:  # 2^-5 style
            base, exp = tok.split("^", 1)
            out.append(float(base) ** float(exp))
        else:
            out.append(float(tok))
    return out


def _float(text: str) -> float:
    vals = _floats(text)
    if len(vals) != 1:
        raise ValueError(f"expected one number, got {text!r}")
    return vals[0]


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _opt_int(text: str) -> int | None:
    return None if text.strip().lower() in ("none", "inf", "auto") else int(text)


# key -> (parser, default)
SCHEMA: dict[str, dict[str, tuple]] = {
    "problem": {
        "family": (str, "smooth"),
        "c": (_float, 0.3),
        "sigma": (_float, 4.0),
        "alpha_hat": (_float, 2.0),
        "a0": (_float, 1.0),
        "a0_amp": (_float, 0.0),
        "n_terms": (_opt_int, None),
        "f": (str, "one"),
        "g": (str, "one"),
        "functional": (str, "integral"),
        "x0": (_float, 0.5),
        "width": (_float, 0.1),
        "t": (_float, 1.0),
        "tprime": (_float, 1.0),
    },
    "weights": {
        "family": (str, "default"),
        "nu": (_float, 1.0),
        "c_delta": (_float, 1.0),
        "delta": (_float, 1.0),
        "pstar": (_float, 0.5),
    },
    "run": {
        "epsilon": (_floats, [0.125, 0.0625, 0.03125]),
        "mode": (str, "auto"),
        "shifts": (int, 8),
        "seed": (int, 0),
        "replications": (int, 1),
        "threads": (int, 1),
        "fem_constant": (_float, 1.0),
        "degree": (_opt_int, None),
    },
    "plan": {
        "strategy": (str, "cbc"),
        "cache": (str, ""),
        "candidates": (int, 64),
    },
    "oracle": {
        "s": (_opt_int, None),
        "quad_degree": (int, 4),
        "h_fine": (_float, 2.0 ** -8),
    },
    "baseline": {
        "s": (_opt_int, None),
        "n": (_opt_int, None),
        "h": (_float, 0.0),
        "alpha": (_opt_int, None),
    },
    "output": {
        "csv": (str, ""),
        "wall_clock": (_bool, True),
    },
}


@dataclass
class RunConfig:
    values: dict[str, dict] = field(default_factory=dict)

    def __getitem__(self, key: str):
        sec, k = key.split(".", 1)
        return self.values[sec][k]

    def set(self, key: str, raw) -> None:
        sec, k = _split_key(key)
        parser = SCHEMA[sec][k][0]
        try:
            self.values[sec][k] = parser(raw) if isinstance(raw, str) else raw
        except ValueError as exc:
            raise ConfigError(f"{key}: {exc}") from None

    # -- derived objects ---------------------------------------------------

    def model(self) -> DiffusionModel:
        p, w = self.values["problem"], self.values["weights"]
        if w["family"] not in ("default", p["family"]):
            raise ConfigError(f"weights.family {w['family']!r} does not match problem.family")
        if p["family"] == "smooth":
            fam = SmoothSineFamily(c=p["c"], sigma=p["sigma"], nu=w["nu"])
        elif p["family"] == "hat":
            fam = DyadicHatFamily(sigma=p["sigma"], alpha_hat=p["alpha_hat"],
                                  c_delta=w["c_delta"], delta=w["delta"])
        else:
            raise ConfigError(f"unknown problem.family {p['family']!r}; choose smooth or hat")
        return DiffusionModel(fam, a0=p["a0"], a0_amp=p["a0_amp"], pstar=w["pstar"],
                              n_terms=p["n_terms"])

    def problem(self) -> ProblemSpec:
        p = self.values["problem"]
        try:
            G = Functional(kind=p["functional"], g_name=p["g"], tprime=p["tprime"],
                           x0=p["x0"], width=p["width"])
        except ValueError as exc:
            if isinstance(exc, AdmissibilityError):
                raise
            raise ConfigError(str(exc)) from None
        return ProblemSpec(self.model(), f_name=p["f"], G=G, t=p["t"])


def _split_key(key: str) -> tuple[str, str]:
    if "." not in key:
        raise ConfigError(f"key {key!r} is not of the form section.key")
    sec, k = key.split(".", 1)
    if sec not in SCHEMA:
        raise ConfigError(f"unknown section {sec!r}")
    if k not in SCHEMA[sec]:
        raise ConfigError(f"unknown key {key!r}")
    return sec, k


def default_config() -> RunConfig:
    return RunConfig({sec: {k: d for k, (_, d) in keys.items()} for sec, keys in SCHEMA.items()})


def parse_config(text: str) -> RunConfig:
    cfg = default_config()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'section.key = value'")
        key, val = (s.strip() for s in line.split("=", 1))
        try:
            cfg.set(key, val)
        except ConfigError as exc:
            raise ConfigError(f"line {lineno}: {exc}") from None
    return cfg


def load_config(path: str | Path | None) -> RunConfig:
    if path is None:
        return default_config()
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    return parse_config(text)
