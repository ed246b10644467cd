"""Run configuration: a small INI dialect with strict validation.

::

    # comment
    [domain]
    kind = half_line
    x0 = 0

Every key must be known, every value must parse, and each error names the
line (both lines for a duplicated key).
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from .evolve import (DIPOLE, GAUSSIAN_SHELL, GRADED, POINT_APPROX, UNIFORM, ANNULUS,
                     InitialDatum)
from .geometry import DomainError, ExteriorDomain, KINDS, make_domain


class ConfigError(ValueError):
    def __init__(self, message, line=None):
        self.line = line
        super().__init__(message if line is None else f"line {line}: {message}")


def _float(s):
    v = float(s)
    if not math.isfinite(v):
        raise ValueError("not finite")
    return v


def _int(s):
    return int(s)


def _str(s):
    return s


def _float_list(s):
    """Comma separated floats, or an inclusive range ``start:stop:step``."""
    s = s.strip()
    if ":" in s:
        parts = s.split(":")
        if len(parts) != 3:
            raise ValueError("range must be start:stop:step")
        a, b, h = (_float(p) for p in parts)
        if h <= 0 or b < a:
            raise ValueError("range needs step > 0 and stop >= start")
        k = int(math.floor((b - a) / h + 1e-9))
        return [round(a + i * h, 12) for i in range(k + 1)]
    out = [_float(p) for p in s.split(",") if p.strip()]
    if not out:
        raise ValueError("empty list")
    return out


def _str_list(s):
    return [p.strip() for p in s.split(",") if p.strip()]


def _opt_float(s):
    if s.strip().lower() in ("auto", "none", ""):
        return None
    return _float(s)


SCHEMA = {
    "domain": {"kind": _str, "d": _int, "R": _float, "x0": _float},
    "initial": {"kind": _str, "center": _float, "location": _float, "width": _float,
                "mass": _float, "r1": _float, "r2": _float, "height": _float,
                "t_shift": _float},
    "time": {"t0": _float, "t_final": _float, "ratio": _float, "dt": _opt_float,
             "n": _int, "rule": _str, "eps_tail": _float, "solver": _str},
    "output": {"name": _str, "directory": _str, "formats": _str_list},
    "lsi": {"taus": _float_list, "c_assembly": _float, "n": _int},
    "normalization": {"taus": _float_list},
    "fit": {"t_lo": _float, "t_hi": _opt_float, "trim_decades": _opt_float},
}


@dataclass(frozen=True)
class TimeSpec:
    t0: float = 0.5
    t_final: float = 1e4
    ratio: float = 1.1
    dt: Optional[float] = None
    n: int = 4001
    rule: str = GRADED
    eps_tail: float = 1e-12
    solver: str = "auto"

    def times(self) -> np.ndarray:
        """Geometric output times from t0 to t_final (both included)."""
        k = max(1, int(math.ceil(math.log(self.t_final / self.t0) / math.log(self.ratio) - 1e-9)))
        return np.geomspace(self.t0, self.t_final, k + 1)


@dataclass(frozen=True)
class FitSpec:
    t_lo: float = 10.0
    t_hi: Optional[float] = None
    trim_decades: Optional[float] = None


@dataclass(frozen=True)
class LSISpec:
    taus: tuple = tuple(float(k) for k in range(11))
    c_assembly: float = 1.0
    n: int = 2000


@dataclass(frozen=True)
class OutputSpec:
    name: str = ""
    directory: str = ""
    formats: tuple = ("csv", "json")


@dataclass(frozen=True)
class RunConfig:
    domain: ExteriorDomain
    initial: InitialDatum
    time: TimeSpec
    output: OutputSpec
    lsi: LSISpec
    normalization_taus: tuple
    fit: FitSpec
    source: dict = field(default_factory=dict, compare=False, repr=False)

    @property
    def name(self) -> str:
        return self.output.name

    @property
    def solver(self) -> str:
        if self.time.solver != "auto":
            return self.time.solver
        return "exact" if self.domain.kind == "half_line" else "fd"

    def resolved(self) -> dict:
        """Every setting after defaults, as plain JSON-ready values."""
        dom = self.domain
        return {
            "domain": {"kind": dom.kind, "d": dom.dimension, "R": dom.hole_radius,
                       "x0": dom.left_endpoint},
            "initial": {k: v for k, v in asdict(self.initial).items()},
            "time": asdict(self.time),
            "output": {"name": self.output.name, "directory": self.output.directory,
                       "formats": list(self.output.formats)},
            "lsi": {"taus": list(self.lsi.taus), "c_assembly": self.lsi.c_assembly,
                    "n": self.lsi.n},
            "normalization": {"taus": list(self.normalization_taus)},
            "fit": asdict(self.fit),
            "solver": self.solver,
        }


def _tokenize(text: str):
    """Yield (section, key, raw value, line) and check structure."""
    section = None
    seen_sections = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise ConfigError(f"malformed section header {raw.strip()!r}", lineno)
            section = line[1:-1].strip()
            if section not in SCHEMA:
                raise ConfigError(f"unknown section [{section}]", lineno)
            if section in seen_sections:
                raise ConfigError(f"section [{section}] repeated (first on line "
                                  f"{seen_sections[section]})", lineno)
            seen_sections[section] = lineno
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got {raw.strip()!r}", lineno)
        if section is None:
            raise ConfigError("entry before any [section] header", lineno)
        key, value = (p.strip() for p in line.split("=", 1))
        if not key:
            raise ConfigError("empty key", lineno)
        yield section, key, value, lineno


def parse_raw(text: str) -> dict:
    """{section: {key: (typed value, line)}} with unknown keys and duplicates rejected."""
    out = {s: {} for s in SCHEMA}
    for section, key, value, lineno in _tokenize(text):
        schema = SCHEMA[section]
        if key not in schema:
            raise ConfigError(f"unknown key {key!r} in [{section}] "
                              f"(known: {', '.join(sorted(schema))})", lineno)
        if key in out[section]:
            first = out[section][key][1]
            raise ConfigError(f"duplicate key {key!r} in [{section}] on lines "
                              f"{first} and {lineno}", lineno)
        try:
            typed = schema[key](value)
        except ValueError as exc:
            raise ConfigError(f"bad value {value!r} for {section}.{key} "
                              f"({schema[key].__name__.strip('_')}): {exc}", lineno) from None
        out[section][key] = (typed, lineno)
    return out


def _get(raw, section, key, default=None):
    item = raw[section].get(key)
    return default if item is None else item[0]


def _line(raw, section, *keys):
    for k in keys:
        if k in raw[section]:
            return raw[section][k][1]
    return None


def _build_domain(raw) -> ExteriorDomain:
    if "kind" not in raw["domain"]:
        raise ConfigError("[domain] kind is required")
    kind = _get(raw, "domain", "kind")
    if kind not in KINDS:
        raise ConfigError(f"unknown domain kind {kind!r} (one of {', '.join(KINDS)})",
                          _line(raw, "domain", "kind"))
    d = _get(raw, "domain", "d", 1)
    R = _get(raw, "domain", "R", 1.0 if kind == "ball_complement" else None)
    x0 = _get(raw, "domain", "x0", 0.0 if kind == "half_line" else None)
    try:
        return make_domain(kind, d, R=R, x0=x0)
    except DomainError as exc:
        raise ConfigError(str(exc), _line(raw, "domain", "d", "R", "x0", "kind")) from None


def _build_initial(raw, domain: ExteriorDomain) -> InitialDatum:
    sec = raw["initial"]
    kind = _get(raw, "initial", "kind", POINT_APPROX if domain.kind == "half_line"
                else GAUSSIAN_SHELL)
    line = _line(raw, "initial", "kind")
    base = domain.boundary if domain.kind != "full_space" else 0.0
    allowed = {
        GAUSSIAN_SHELL: {"center", "width", "mass"},
        ANNULUS: {"r1", "r2", "height"},
        POINT_APPROX: {"location", "center", "width"},
        DIPOLE: {"mass", "t_shift"},
    }
    if kind not in allowed:
        raise ConfigError(f"unknown initial kind {kind!r} (one of {', '.join(allowed)})", line)
    for key in sec:
        if key != "kind" and key not in allowed[kind]:
            raise ConfigError(f"key {key!r} does not apply to initial kind {kind!r}",
                              sec[key][1])
    try:
        if kind == GAUSSIAN_SHELL:
            datum = InitialDatum(kind, center=_get(raw, "initial", "center", base + 2.0),
                                 width=_get(raw, "initial", "width", 0.5),
                                 mass=_get(raw, "initial", "mass", 1.0))
        elif kind == ANNULUS:
            r1 = _get(raw, "initial", "r1", base + 1.0)
            datum = InitialDatum(kind, r1=r1, r2=_get(raw, "initial", "r2", r1 + 1.0),
                                 height=_get(raw, "initial", "height", 1.0))
        elif kind == POINT_APPROX:
            loc = _get(raw, "initial", "location", _get(raw, "initial", "center", base + 2.0))
            datum = InitialDatum(kind, center=loc, width=_get(raw, "initial", "width", 0.0))
        else:
            datum = InitialDatum(kind, mass=_get(raw, "initial", "mass", 1.0),
                                 t_shift=_get(raw, "initial", "t_shift", 0.0))
        datum.check_domain(domain)
    except (ValueError, DomainError) as exc:
        lines = [v[1] for v in sec.values()]
        raise ConfigError(f"initial datum: {exc}", min(lines) if lines else None) from None
    return datum


def _build_time(raw, domain) -> TimeSpec:
    kw = {k: v[0] for k, v in raw["time"].items()}
    spec = TimeSpec(**kw)

    def bad(msg, *keys):
        raise ConfigError(msg, _line(raw, "time", *keys))

    if not spec.t0 > 0:
        bad("t0 must be positive", "t0")
    if not spec.t_final > spec.t0:
        bad("t_final must exceed t0", "t_final", "t0")
    if not spec.ratio > 1:
        bad("ratio must exceed 1", "ratio")
    if spec.dt is not None and not spec.dt > 0:
        bad("dt must be positive", "dt")
    if spec.n < 16:
        bad("grid needs n >= 16", "n")
    if spec.rule not in (UNIFORM, GRADED):
        bad(f"rule must be {UNIFORM} or {GRADED}", "rule")
    if not 0 < spec.eps_tail < 1:
        bad("eps_tail must lie in (0, 1)", "eps_tail")
    if spec.solver not in ("auto", "exact", "fd"):
        bad("solver must be auto, exact or fd", "solver")
    if spec.solver == "exact" and domain.kind == "ball_complement":
        bad("no exact solver for ball complements", "solver")
    if spec.solver == "fd" and domain.kind == "half_line":
        bad("the finite-difference solver is radial; use exact on the half-line", "solver")
    return spec


def parse_config(text: str, name: str = "") -> RunConfig:
    raw = parse_raw(text)
    domain = _build_domain(raw)
    initial = _build_initial(raw, domain)
    time = _build_time(raw, domain)
    out = OutputSpec(name=_get(raw, "output", "name", name),
                     directory=_get(raw, "output", "directory", ""),
                     formats=tuple(_get(raw, "output", "formats", ["csv", "json"])))
    bad_fmt = set(out.formats) - {"csv", "json"}
    if bad_fmt:
        raise ConfigError(f"unknown output formats {sorted(bad_fmt)}",
                          _line(raw, "output", "formats"))
    lsi = LSISpec(taus=tuple(_get(raw, "lsi", "taus", LSISpec.taus)),
                  c_assembly=_get(raw, "lsi", "c_assembly", 1.0),
                  n=_get(raw, "lsi", "n", 2000))
    if not lsi.c_assembly > 0:
        raise ConfigError("c_assembly must be positive", _line(raw, "lsi", "c_assembly"))
    if lsi.n < 8:
        raise ConfigError("lsi n must be >= 8", _line(raw, "lsi", "n"))
    if any(t < 0 for t in lsi.taus):
        raise ConfigError("tau values must be >= 0", _line(raw, "lsi", "taus"))
    ntaus = tuple(_get(raw, "normalization", "taus", [0.5 * k for k in range(21)]))
    if any(t < 0 for t in ntaus):
        raise ConfigError("tau values must be >= 0", _line(raw, "normalization", "taus"))
    fit = FitSpec(**{k: v[0] for k, v in raw["fit"].items()})
    if not fit.t_lo > 0 or (fit.t_hi is not None and fit.t_hi <= fit.t_lo):
        raise ConfigError("fit window needs 0 < t_lo < t_hi", _line(raw, "fit", "t_lo", "t_hi"))
    if fit.trim_decades is not None and fit.trim_decades < 0:
        raise ConfigError("trim_decades must be >= 0", _line(raw, "fit", "trim_decades"))
    return RunConfig(domain, initial, time, out, lsi, ntaus, fit, source=raw)


def load_config(path) -> RunConfig:
    from pathlib import Path

    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise ConfigError(f"cannot read {p}: {exc}") from None
    return parse_config(text, name=p.stem)
