"""Run configuration: INI-style text parsed with configparser.

Grammar::

    [run]                 ; optional, every key optional
    driver = membrane     ; membrane | torsion | bearing | generic
    levels = 8
    beta = 0.5
    tol = 1e-10
    max_iter = 100
    warm_start = true
    smooth = 0            ; Laplacian smoothing sweeps after refinement
    quadratic = false     ; isoparametric boundary lifting
    uniform = false       ; mark every element instead of maximum marking
    timing = false        ; record wall time in the convergence table
    out = results
    formats = csv, vtk

    [membrane]            ; one parameter section matching the driver
    ...

Comments start with ``;`` or ``#``.  Unknown sections and keys are errors.
Expression-valued keys (generic/membrane fields) accept arithmetic in ``x``,
``y`` with ``pi``, ``sin``, ``cos``, ``exp``, ``sqrt``, ``abs``, ``minimum``,
``maximum``.
"""
from __future__ import annotations

import ast
import configparser
import dataclasses
import re
from dataclasses import dataclass, field

import numpy as np

from .applications import BearingParams, TorsionParams
from .geometry import ProfileIPN80

DRIVERS = ("membrane", "torsion", "bearing", "generic")
FORMATS = ("csv", "vtk")


class ConfigError(ValueError):
    def __init__(self, message, line: int | None = None, field: str | None = None):
        where = f"line {line}: " if line is not None else ""
        super().__init__(where + message)
        self.line = line
        self.field = field


# expressions

_FUNCS = {"sin": np.sin, "cos": np.cos, "exp": np.exp, "sqrt": np.sqrt, "abs": np.abs,
          "minimum": np.minimum, "maximum": np.maximum, "tanh": np.tanh, "log": np.log}
_CONSTS = {"pi": np.pi, "e": np.e}
_ALLOWED = (ast.Expression, ast.BinOp, ast.UnaryOp, ast.Call, ast.Name, ast.Load,
            ast.Constant, ast.Add, ast.Sub, ast.Mult, ast.Div, ast.Pow, ast.USub, ast.UAdd)


@dataclass(frozen=True)
class Expression:
    """Scalar field of x and y given as text; callable on points (2, ...)."""

    text: str

    def __post_init__(self):
        try:
            tree = ast.parse(self.text, mode="eval")
        except SyntaxError as exc:
            raise ValueError(f"invalid expression {self.text!r}") from exc
        for node in ast.walk(tree):
            if not isinstance(node, _ALLOWED):
                raise ValueError(f"disallowed construct {type(node).__name__} in {self.text!r}")
            if isinstance(node, ast.Name) and node.id not in {"x", "y", *_FUNCS, *_CONSTS}:
                raise ValueError(f"unknown name {node.id!r} in {self.text!r}")
            if isinstance(node, ast.Call) and not (isinstance(node.func, ast.Name)
                                                   and node.func.id in _FUNCS):
                raise ValueError(f"unknown function in {self.text!r}")
            if isinstance(node, ast.Constant) and not isinstance(node.value, (int, float)):
                raise ValueError(f"non-numeric constant in {self.text!r}")
        object.__setattr__(self, "_code", compile(tree, "<expr>", "eval"))

    @property
    def is_constant(self) -> bool:
        return not any(isinstance(n, ast.Name) and n.id in ("x", "y")
                       for n in ast.walk(ast.parse(self.text, mode="eval")))

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        env = {"__builtins__": {}, "x": x[0], "y": x[1], **_FUNCS, **_CONSTS}
        return np.broadcast_to(np.asarray(eval(self._code, env), dtype=float), x.shape[1:])

    def as_field(self):
        """Plain float when constant, else the callable."""
        return float(self(np.zeros((2, 1)))[0]) if self.is_constant else self


# parameter blocks


@dataclass
class MembraneConfig:
    G: float = 1.0
    f: Expression = Expression("0")
    obstacle: Expression = Expression("sin(pi*x)*sin(pi*y) - 0.5")
    mesh_level: int = 3


@dataclass
class TorsionConfig:
    params: TorsionParams = field(default_factory=TorsionParams)
    profile: ProfileIPN80 = field(default_factory=ProfileIPN80)
    h0: float = 4.0                # mm


@dataclass
class BearingConfig:
    params: BearingParams = field(default_factory=BearingParams)
    nx: int = 32
    ny: int = 8
    samples: int = 201


@dataclass
class GenericConfig:
    coefficient: Expression = Expression("1")
    load: Expression = Expression("1")
    obstacle: Expression = Expression("-10")
    dirichlet: float = 0.0
    x0: float = 0.0
    x1: float = 1.0
    y0: float = 0.0
    y1: float = 1.0
    nx: int = 4
    ny: int = 4


_DEFAULT_LEVELS = {"membrane": 8, "torsion": 6, "bearing": 8, "generic": 5}


@dataclass
class RunConfig:
    driver: str = "membrane"
    levels: int = 8
    beta: float = 0.5
    tol: float = 1e-10
    max_iter: int = 100
    warm_start: bool = True
    smooth: int = 0
    quadratic: bool = False
    uniform: bool = False
    timing: bool = False
    out: str = "results"
    formats: tuple = FORMATS
    params: object = None

    def validate(self):
        if self.driver not in DRIVERS:
            raise ConfigError(f"unknown driver {self.driver!r}", field="driver")
        if not 0 < self.beta < 1:
            raise ConfigError(f"beta must lie in (0, 1), got {self.beta}", field="beta")
        if self.levels < 1:
            raise ConfigError(f"levels must be >= 1, got {self.levels}", field="levels")
        if not self.tol > 0:
            raise ConfigError(f"tol must be positive, got {self.tol}", field="tol")
        if self.max_iter < 1:
            raise ConfigError("max_iter must be >= 1", field="max_iter")
        if self.smooth < 0:
            raise ConfigError("smooth must be >= 0", field="smooth")
        bad = set(self.formats) - set(FORMATS)
        if bad:
            raise ConfigError(f"unknown output formats {sorted(bad)}", field="formats")
        return self


# parsing

_RUN_KEYS = {"driver": str, "levels": int, "beta": float, "tol": float, "max_iter": int,
             "warm_start": bool, "smooth": int, "quadratic": bool, "uniform": bool,
             "timing": bool, "out": str, "formats": tuple}

_SECTION_KEYS = {
    "membrane": {"G": float, "f": Expression, "obstacle": Expression, "mesh_level": int},
    "torsion": {"G": float, "tau": float, "gamma": float, "l": float, "h0": float,
                "h": float, "b": float, "t_w": float, "t_f": float, "r1": float, "r2": float,
                "slope": float},
    "bearing": {"R": float, "L": float, "c1": float, "mu": float, "e": float, "p_env": float,
                "p_cav": float, "V": float, "nx": int, "ny": int, "samples": int},
    "generic": {"coefficient": Expression, "load": Expression, "obstacle": Expression,
                "dirichlet": float, "x0": float, "x1": float, "y0": float, "y1": float,
                "nx": int, "ny": int},
}


def _key_lines(text: str) -> dict:
    """(section, key) -> 1-based line number."""
    lines = {}
    section = None
    for i, line in enumerate(text.splitlines(), 1):
        s = line.strip()
        m = re.match(r"^\[([^\]]+)\]", s)
        if m:
            section = m.group(1).strip()
            lines[(section, None)] = i
        elif s and s[0] not in ";#" and section is not None:
            key = re.split(r"[=:]", s, maxsplit=1)[0].strip()
            lines[(section, key)] = i
    return lines


def _convert(kind, raw: str, section: str, key: str, line):
    try:
        if kind is bool:
            low = raw.strip().lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(f"not a boolean: {raw!r}")
        if kind is int:
            return int(raw)
        if kind is float:
            return float(raw)
        if kind is tuple:
            return tuple(s.strip() for s in raw.split(",") if s.strip())
        if kind is Expression:
            return Expression(raw.strip())
        return raw.strip()
    except ValueError as exc:
        raise ConfigError(f"[{section}] {key}: {exc}", line=line, field=key) from exc


def parse_config(text: str, driver: str | None = None) -> RunConfig:
    """Parse configuration text; ``driver`` (e.g. from the command line) fills a missing one."""
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=(";", "#"),
                                       empty_lines_in_values=False)
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.MissingSectionHeaderError as exc:
        raise ConfigError("expected a [section] header", line=exc.lineno) from exc
    except configparser.ParsingError as exc:
        line = exc.errors[0][0] if exc.errors else None
        raise ConfigError("syntax error", line=line) from exc
    except (configparser.DuplicateOptionError, configparser.DuplicateSectionError) as exc:
        raise ConfigError(str(exc).split(":")[-1].strip(), line=exc.lineno) from exc
    lines = _key_lines(text)

    for section in parser.sections():
        if section != "run" and section not in _SECTION_KEYS:
            raise ConfigError(f"unknown section [{section}]", line=lines.get((section, None)))
        allowed = _RUN_KEYS if section == "run" else _SECTION_KEYS[section]
        for key in parser[section]:
            if key not in allowed:
                raise ConfigError(f"unknown key {key!r} in [{section}]",
                                  line=lines.get((section, key)), field=key)

    values = {}
    if parser.has_section("run"):
        for key, raw in parser["run"].items():
            values[key] = _convert(_RUN_KEYS[key], raw, "run", key, lines.get(("run", key)))
    file_driver = values.pop("driver", None)
    if file_driver and driver and file_driver != driver:
        raise ConfigError(f"config is for driver {file_driver!r}, not {driver!r}",
                          line=lines.get(("run", "driver")), field="driver")
    drv = file_driver or driver or "membrane"
    if drv not in DRIVERS:
        raise ConfigError(f"unknown driver {drv!r}", line=lines.get(("run", "driver")),
                          field="driver")
    for section in parser.sections():
        if section not in ("run", drv):
            raise ConfigError(f"section [{section}] does not match driver {drv!r}",
                              line=lines.get((section, None)))

    block = {}
    if parser.has_section(drv):
        for key, raw in parser[drv].items():
            block[key] = _convert(_SECTION_KEYS[drv][key], raw, drv, key, lines.get((drv, key)))
    try:
        params = _build_params(drv, block)
    except ConfigError:
        raise
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"[{drv}] {exc}", field=drv) from exc

    defaults = {"levels": _DEFAULT_LEVELS[drv]}
    if drv == "torsion":
        defaults.update(smooth=2, quadratic=True)
    cfg = RunConfig(driver=drv, params=params, **{**defaults, **values})
    try:
        return cfg.validate()
    except ConfigError as exc:
        exc_line = lines.get(("run", exc.field))
        raise ConfigError(str(exc), line=exc_line, field=exc.field) from None


def _build_params(driver: str, block: dict):
    if driver == "membrane":
        cfg = MembraneConfig(**block)
        if not cfg.G > 0:
            raise ConfigError("G must be positive", field="G")
        if cfg.mesh_level < 0:
            raise ConfigError("mesh_level must be >= 0", field="mesh_level")
        return cfg
    if driver == "torsion":
        tkeys = {f.name for f in dataclasses.fields(TorsionParams)}
        pkeys = {f.name for f in dataclasses.fields(ProfileIPN80)}
        cfg = TorsionConfig(TorsionParams(**{k: v for k, v in block.items() if k in tkeys}),
                            ProfileIPN80(**{k: v for k, v in block.items() if k in pkeys}),
                            block.get("h0", 4.0))
        if not cfg.h0 > 0:
            raise ConfigError("h0 must be positive", field="h0")
        return cfg
    if driver == "bearing":
        bkeys = {f.name for f in dataclasses.fields(BearingParams)}
        cfg = BearingConfig(BearingParams(**{k: v for k, v in block.items() if k in bkeys}),
                            **{k: v for k, v in block.items() if k not in bkeys})
        if cfg.nx < 3 or cfg.ny < 1:
            raise ConfigError("bearing mesh needs nx >= 3 and ny >= 1", field="nx")
        if cfg.samples < 2:
            raise ConfigError("samples must be >= 2", field="samples")
        return cfg
    cfg = GenericConfig(**block)
    if not (cfg.x1 > cfg.x0 and cfg.y1 > cfg.y0):
        raise ConfigError("empty rectangle", field="x1")
    if cfg.nx < 1 or cfg.ny < 1:
        raise ConfigError("nx and ny must be >= 1", field="nx")
    return cfg


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, Expression):
        return v.text
    if isinstance(v, tuple):
        return ", ".join(v)
    return repr(v) if isinstance(v, float) else str(v)


def format_config(cfg: RunConfig) -> str:
    """Text that parses back to an equal configuration."""
    out = ["[run]", f"driver = {cfg.driver}"]
    for key in _RUN_KEYS:
        if key != "driver":
            out.append(f"{key} = {_fmt(getattr(cfg, key))}")
    out.append(f"\n[{cfg.driver}]")
    p = cfg.params
    if cfg.driver == "torsion":
        items = {**dataclasses.asdict(p.params), **dataclasses.asdict(p.profile), "h0": p.h0}
    elif cfg.driver == "bearing":
        items = {**dataclasses.asdict(p.params), "nx": p.nx, "ny": p.ny, "samples": p.samples}
    else:
        items = {f.name: getattr(p, f.name) for f in dataclasses.fields(p)}
    out.extend(f"{k} = {_fmt(v)}" for k, v in items.items())
    return "\n".join(out) + "\n"
