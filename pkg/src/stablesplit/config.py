"""Key-value config files, tolerance files and field table IO.

Config grammar, one ``key = value`` per line::

    # comments start with '#', blank lines are ignored
    family = cylinder          # weighted_line | flat_box | cylinder | warped_product
    T = 12
    h = 0.02                   # one spacing, or one per direction
    fiber_lengths = 1.28       # cylinder / warped_product
    extents = 8, 8             # flat_box half-widths (truncated) or periods (periodic)
    periodic = false, false    # flat_box
    density = linear_slope 0.3 # zero | gaussian | linear_slope k | polynomial c0,c1,...
    warp_lambda = 0.1          # warped_product, polynomial coefficients in t
    n = 2                      # optional cross-check

Experiment keys may sit in the same file: ``nl``, ``init``, ``tol``,
``max_iter``, ``axis_dirichlet`` (``a, b``) and ``seed``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .field_calculus import ScalarField
from .model_space import Family, ModelSpace

SPACE_KEYS = {"family", "n", "T", "h", "fiber_lengths", "extents", "periodic", "density", "warp_lambda"}
EXPERIMENT_KEYS = {"nl", "init", "tol", "max_iter", "axis_dirichlet", "seed"}
REQUIRED = {
    Family.WEIGHTED_LINE: {"T", "h"},
    Family.FLAT_BOX: {"extents", "h"},
    Family.CYLINDER: {"T", "h", "fiber_lengths"},
    Family.WARPED_PRODUCT: {"T", "h", "fiber_lengths", "warp_lambda"},
}


class ConfigError(ValueError):
    """Invalid configuration; ``path`` names the offending field."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


def parse_kv(text: str, source: str = "config") -> dict[str, str]:
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key = key.strip()
        if not sep or not key:
            raise ConfigError(f"{source}:{lineno}", f"expected 'key = value', got {raw.strip()!r}")
        if key in out:
            raise ConfigError(f"{source}.{key}", "duplicate key")
        out[key] = value.strip()
    return out


def _floats(key: str, value: str) -> list[float]:
    try:
        vals = [float(v) for v in value.replace(",", " ").split()]
    except ValueError:
        raise ConfigError(f"config.{key}", f"expected numbers, got {value!r}") from None
    if not vals:
        raise ConfigError(f"config.{key}", "empty value")
    if not all(math.isfinite(v) for v in vals):
        raise ConfigError(f"config.{key}", "values must be finite")
    return vals


def _bools(key: str, value: str) -> list[bool]:
    table = {"true": True, "false": False, "1": True, "0": False, "yes": True, "no": False}
    try:
        return [table[v.lower()] for v in value.replace(",", " ").split()]
    except KeyError:
        raise ConfigError(f"config.{key}", f"expected booleans, got {value!r}") from None


def resolve_space_config(kv: dict[str, str]) -> dict:
    """Typed space mapping for :meth:`ModelSpace.from_config`."""
    if "family" not in kv:
        raise ConfigError("config.family", "missing required key")
    try:
        family = Family(kv["family"].strip().lower())
    except ValueError:
        raise ConfigError("config.family", f"unknown family {kv['family']!r}") from None
    missing = sorted(REQUIRED[family] - kv.keys())
    if missing:
        raise ConfigError(f"config.{missing[0]}", f"required for family {family.value}")
    cfg: dict = {"family": family.value}
    if "T" in kv:
        (T,) = _floats("T", kv["T"])[:1]
        if T <= 0:
            raise ConfigError("config.T", "must be positive")
        cfg["T"] = T
    h = _floats("h", kv["h"])
    if min(h) <= 0:
        raise ConfigError("config.h", "spacings must be positive")
    cfg["h"] = h
    for key in ("fiber_lengths", "extents", "warp_lambda"):
        if key in kv:
            cfg[key] = _floats(key, kv[key])
    if "periodic" in kv:
        cfg["periodic"] = _bools("periodic", kv["periodic"])
    if "n" in kv:
        try:
            cfg["n"] = int(kv["n"])
        except ValueError:
            raise ConfigError("config.n", f"expected an integer, got {kv['n']!r}") from None
    cfg["density"] = kv.get("density", "zero")
    return cfg


def build_space(cfg: dict) -> ModelSpace:
    try:
        return ModelSpace.from_config(cfg)
    except ConfigError:
        raise
    except (ValueError, KeyError, TypeError) as exc:
        key = _guess_key(str(exc))
        raise ConfigError(f"config.{key}", str(exc)) from exc


def _guess_key(message: str) -> str:
    m = message.lower()
    for key, hints in (("density", ("density",)), ("fiber_lengths", ("periodic length",)),
                       ("T", ("axis extent",)), ("n", ("n=",)), ("warp_lambda", ("warp",)),
                       ("h", ("spacing",))):
        if any(hint in m for hint in hints):
            return key
    return "family"


@dataclass
class ExperimentConfig:
    """A resolved experiment: space, nonlinearity, solver settings, seed."""

    space: dict
    nl: str = "allen-cahn"
    init: str = "tanh"
    tol: float = 1e-10
    max_iter: int = 50
    axis_dirichlet: tuple[float, float] | None = None
    seed: int = 0
    tols: dict = field(default_factory=dict)

    def echo(self) -> dict:
        return {
            "space": self.space,
            "nl": self.nl,
            "init": self.init,
            "tol": self.tol,
            "max_iter": self.max_iter,
            "axis_dirichlet": list(self.axis_dirichlet) if self.axis_dirichlet else None,
            "seed": self.seed,
            "tols": dict(sorted(self.tols.items())),
        }


def load_experiment(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError("config", f"cannot read {path}: {exc.strerror}") from exc
    kv = parse_kv(text, "config")
    unknown = sorted(kv.keys() - SPACE_KEYS - EXPERIMENT_KEYS)
    if unknown:
        raise ConfigError(f"config.{unknown[0]}", "unknown key")
    space_cfg = resolve_space_config({k: v for k, v in kv.items() if k in SPACE_KEYS})
    exp = ExperimentConfig(space_cfg)
    if "nl" in kv:
        exp.nl = kv["nl"]
    if "init" in kv:
        exp.init = kv["init"]
    if "tol" in kv:
        exp.tol = _floats("tol", kv["tol"])[0]
        if exp.tol <= 0:
            raise ConfigError("config.tol", "must be positive")
    if "max_iter" in kv:
        try:
            exp.max_iter = int(kv["max_iter"])
        except ValueError:
            raise ConfigError("config.max_iter", "expected an integer") from None
    if "axis_dirichlet" in kv:
        vals = _floats("axis_dirichlet", kv["axis_dirichlet"])
        if len(vals) != 2:
            raise ConfigError("config.axis_dirichlet", "expected two values 'a, b'")
        exp.axis_dirichlet = (vals[0], vals[1])
    if "seed" in kv:
        try:
            exp.seed = int(kv["seed"])
        except ValueError:
            raise ConfigError("config.seed", "expected an integer") from None
    return exp


def load_tols(path: str | Path, known) -> dict[str, float]:
    """Tolerance overrides, ``name = value`` per line; names must be in ``known``."""
    path = Path(path)
    try:
        kv = parse_kv(path.read_text(), "tols")
    except OSError as exc:
        raise ConfigError("tols", f"cannot read {path}: {exc.strerror}") from exc
    out = {}
    for key, value in kv.items():
        if key not in known:
            raise ConfigError(f"tols.{key}", "unknown tolerance")
        try:
            out[key] = float(value)
        except ValueError:
            raise ConfigError(f"tols.{key}", f"expected a number, got {value!r}") from None
    return out


# ------------------------------------------------------------------ fields
def sidecar_path(path: str | Path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".json")


def write_field(path: str | Path, u: ScalarField, extra: dict | None = None) -> Path:
    """CSV table ``index, x0..x{n-1}, value`` plus a JSON sidecar with the space config.

    Values are written with 17 significant digits, which round-trips doubles exactly.
    """
    s = u.space
    if s.density.kind == "custom":
        raise ValueError("fields on custom-density spaces cannot be serialized")
    path = Path(path)
    cols = [np.arange(s.size, dtype=float)] + [x.ravel() for x in s.mesh] + [u.values.ravel()]
    header = ",".join(["index"] + [f"x{i}" for i in range(s.n)] + ["value"])
    fmt = ["%d"] + ["%.17g"] * (s.n + 1)
    np.savetxt(path, np.column_stack(cols), fmt=fmt, delimiter=",", header=header, comments="")
    side = {"space": s.to_config(), "shape": list(s.shape), "extra": extra or {}}
    sidecar_path(path).write_text(json.dumps(side, sort_keys=True, indent=2) + "\n")
    return path


def read_field(path: str | Path) -> tuple[ScalarField, dict]:
    """Inverse of :func:`write_field`; returns the field and the sidecar ``extra`` block."""
    path = Path(path)
    try:
        side = json.loads(sidecar_path(path).read_text())
    except OSError as exc:
        raise ConfigError("solution", f"missing sidecar for {path}: {exc.strerror}") from exc
    space = build_space(side["space"])
    if list(space.shape) != side["shape"]:
        raise ConfigError("solution.shape", "sidecar shape disagrees with the rebuilt space")
    try:
        table = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    except (OSError, ValueError) as exc:
        raise ConfigError("solution", f"cannot read field table {path}: {exc}") from exc
    if table.shape != (space.size, space.n + 2):
        raise ConfigError("solution", "field table has the wrong number of rows or columns")
    order = table[:, 0].astype(int)
    if not np.array_equal(order, np.arange(space.size)):
        raise ConfigError("solution.index", "node indices are not 0..N-1 in order")
    return ScalarField(space, table[:, -1].reshape(space.shape)), side.get("extra", {})
