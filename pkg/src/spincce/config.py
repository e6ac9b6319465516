"""Validated YAML configuration for simulation runs.

A configuration is a single self-describing document with the blocks ``structure``,
``central``, ``method``, ``couplings``, ``output`` and optionally ``scan``. Unknown keys
are rejected. Relative file paths are resolved against the directory of the config file.
"""
import math
import os
from typing import List, Literal, Optional, Tuple, Union

import numpy as np
import yaml
from pydantic import BaseModel, ConfigDict, Field, PrivateAttr, ValidationError, field_validator, model_validator

from .constants import ELECTRON_GYRO

Vector = Tuple[float, float, float]
Matrix = Tuple[Vector, Vector, Vector]


class ConfigError(ValueError):
    """Invalid configuration; ``path`` is the dotted key path of the offending entry."""

    def __init__(self, message, path=""):
        self.path = path
        super().__init__(f"{path}: {message}" if path else message)


class _Block(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class Site(_Block):
    element: str
    frac: Vector


class CellBlock(_Block):
    """Unit cell: explicit lattice rows (angstrom) and sites, or the diamond preset."""
    preset: Optional[Literal["diamond"]] = None
    a: Optional[float] = Field(None, gt=0)
    lattice: Optional[Matrix] = None
    sites: Optional[List[Site]] = None

    @model_validator(mode="after")
    def _check(self):
        if self.preset is None and (self.lattice is None or not self.sites):
            raise ValueError("give either 'preset' or both 'lattice' and 'sites'")
        if self.preset is not None and (self.lattice is not None or self.sites is not None):
            raise ValueError("'preset' cannot be combined with 'lattice' or 'sites'")
        if self.a is not None and self.preset is None:
            raise ValueError("'a' is only used with 'preset'")
        return self


class StructureBlock(_Block):
    cell: Optional[CellBlock] = None
    xyz: Optional[str] = None
    isotopes: Optional[dict[str, dict[str, float]]] = None
    radius: Optional[float] = Field(None, gt=0)
    seed: int = Field(0, ge=0)
    center: Vector = (0.0, 0.0, 0.0)
    origin: Vector = (0.0, 0.0, 0.0)
    exclude: List[Vector] = []
    exclude_radius: float = Field(0.1, ge=0)
    zdir: Optional[Vector] = None

    @model_validator(mode="after")
    def _check(self):
        if (self.cell is None) == (self.xyz is None):
            raise ValueError("exactly one of 'cell' or 'xyz' is required")
        if self.cell is not None and self.radius is None:
            raise ValueError("'radius' is required with 'cell'")
        for el, table in (self.isotopes or {}).items():
            if any(v < 0 for v in table.values()) or sum(table.values()) > 1 + 1e-12:
                raise ValueError(f"isotope abundances of {el} must be non-negative and sum to at most 1")
        return self


class CentralBlock(_Block):
    s: float = Field(0.5, ge=0)
    D: Union[float, Matrix] = 0.0
    E: float = 0.0
    gamma: Union[float, Matrix] = ELECTRON_GYRO
    B: Vector = (0.0, 0.0, 0.0)
    levels: Optional[Tuple[int, int]] = None
    sz_levels: Optional[Tuple[float, float]] = None

    @model_validator(mode="after")
    def _check(self):
        if not isinstance(self.D, (int, float)) and self.E != 0:
            raise ValueError("'E' is only used with a scalar (axial) 'D'")
        if self.levels is not None and self.sz_levels is not None:
            raise ValueError("'levels' and 'sz_levels' are mutually exclusive")
        if abs(2 * self.s - round(2 * self.s)) > 1e-12:
            raise ValueError("'s' must be a non-negative multiple of 1/2")
        return self

    def d_tensor(self):
        if isinstance(self.D, (int, float)):
            return np.diag([self.E, -self.E, float(self.D)])
        return np.array(self.D, dtype=float)

    def gamma_scalar(self):
        """Isotropic part of the field coupling."""
        g = np.asarray(self.gamma, dtype=float)
        return float(g) if g.ndim == 0 else float(np.trace(g) / 3)


class ExplicitPulse(_Block):
    fraction: float = Field(gt=0, lt=1)
    axis: Literal["x", "y", "z"] = "x"
    angle: float = math.pi


class PulseBlock(_Block):
    """Either ``n`` equispaced pulses (CPMG-like) or an explicit list."""
    n: int = Field(1, ge=0)
    axis: Literal["x", "y", "z"] = "x"
    angle: float = math.pi
    explicit: Optional[List[ExplicitPulse]] = None

    @model_validator(mode="after")
    def _check(self):
        if self.explicit is not None and self.model_fields_set & {"n", "axis", "angle"}:
            raise ValueError("'explicit' cannot be combined with 'n', 'axis' or 'angle'")
        if self.explicit is not None:
            f = [p.fraction for p in self.explicit]
            if any(b <= a for a, b in zip(f, f[1:])):
                raise ValueError("explicit pulse fractions must be strictly increasing")
        return self


class TimeGrid(_Block):
    start: float = Field(0.0, ge=0)
    stop: float
    count: int = Field(ge=2)

    @model_validator(mode="after")
    def _check(self):
        if self.stop <= self.start:
            raise ValueError("'stop' must exceed 'start'")
        return self

    def array(self):
        return np.linspace(self.start, self.stop, self.count)


class MethodBlock(_Block):
    kind: Literal["conventional", "gcce"] = "conventional"
    order: int = Field(2, ge=1)
    r_bath: Optional[float] = Field(None, gt=0)
    r_dipole: float = Field(6.0, gt=0)
    second_order: bool = False
    self_terms: bool = True
    mean_field: Literal["mixed", "mc"] = "mixed"
    n_samples: int = Field(1, ge=1)
    sample_seed: int = Field(0, ge=0)
    pulses: PulseBlock = PulseBlock()
    timegrid: TimeGrid

    @model_validator(mode="after")
    def _check(self):
        if self.kind == "conventional" and self.pulses.explicit is None and self.pulses.n and \
                abs(abs(self.pulses.angle) - math.pi) > 1e-12:
            raise ValueError("conventional method supports only pi pulses; use kind: gcce")
        if self.kind == "conventional" and self.pulses.explicit is not None and \
                any(abs(abs(p.angle) - math.pi) > 1e-12 for p in self.pulses.explicit):
            raise ValueError("conventional method supports only pi pulses; use kind: gcce")
        return self


class DonorBlock(_Block):
    n: float = Field(0.81, gt=0)
    eta: float = 186.0
    a: float = Field(2.509, gt=0)
    b: float = Field(1.443, gt=0)
    a_si: float = Field(0.543, gt=0)
    k0_factor: float = Field(0.85, gt=0)


class CouplingsBlock(_Block):
    model: Literal["point-dipole", "cube", "tensor-table", "donor-kl"] = "point-dipole"
    path: Optional[str] = None
    cube_origin: Vector = (0.0, 0.0, 0.0)
    donor: DonorBlock = DonorBlock()

    @model_validator(mode="after")
    def _check(self):
        needs_path = self.model in ("cube", "tensor-table")
        if needs_path and self.path is None:
            raise ValueError(f"'path' is required for model {self.model!r}")
        if not needs_path and self.path is not None:
            raise ValueError(f"'path' is not used by model {self.model!r}")
        return self


class OutputBlock(_Block):
    dir: str = "results"
    mode: Literal["magnitude", "complex"] = "magnitude"
    ensemble: int = Field(1, ge=1)
    workers: int = Field(1, ge=1)
    autocorr: bool = False
    fit: bool = True
    fit_window: Optional[Tuple[float, float]] = None


class ScanBlock(_Block):
    parameter: str
    values: List[Union[int, float, str]] = Field(min_length=1)

    @field_validator("parameter")
    @classmethod
    def _known(cls, v):
        if v.split(".")[0] not in ("structure", "central", "method", "couplings"):
            raise ValueError("scan parameter must be a dotted key inside structure/central/method/couplings")
        return v


class SimulationConfig(_Block):
    structure: StructureBlock
    central: CentralBlock = CentralBlock()
    method: MethodBlock
    couplings: CouplingsBlock = CouplingsBlock()
    output: OutputBlock = OutputBlock()
    scan: Optional[ScanBlock] = None

    _warnings: list = PrivateAttr(default_factory=list)
    _base_dir: str = PrivateAttr(default=".")

    @property
    def warnings(self):
        return list(self._warnings)

    @property
    def base_dir(self):
        return self._base_dir

    def resolve(self, path):
        return path if os.path.isabs(path) else os.path.normpath(os.path.join(self._base_dir, path))

    def input_paths(self):
        """Referenced input files as {key path: resolved path}."""
        out = {}
        if self.structure.xyz is not None:
            out["structure.xyz"] = self.resolve(self.structure.xyz)
        if self.couplings.path is not None:
            out["couplings.path"] = self.resolve(self.couplings.path)
        return out

    def to_dict(self):
        return self.model_dump(mode="json", exclude_none=True)


def _error_path(err):
    return ".".join(str(p) for p in err["loc"])


def validate_config(data, base_dir=".", check_files=True):
    """Build a :class:`SimulationConfig` from a mapping.

    Raises:
        ConfigError: On schema violations (with the key path) or missing files.
    """
    if not isinstance(data, dict):
        raise ConfigError("configuration must be a mapping")
    try:
        cfg = SimulationConfig.model_validate(data)
    except ValidationError as exc:
        first = exc.errors()[0]
        raise ConfigError(first["msg"], _error_path(first)) from None
    cfg._base_dir = os.path.abspath(base_dir)
    m = cfg.method
    if m.r_bath is not None and m.r_dipole > m.r_bath:
        cfg._warnings.append(f"method.r_dipole ({m.r_dipole}) exceeds method.r_bath ({m.r_bath})")
    if cfg.structure.cell is not None and m.r_bath is not None and m.r_bath > cfg.structure.radius:
        cfg._warnings.append(f"method.r_bath ({m.r_bath}) exceeds structure.radius ({cfg.structure.radius})")
    if check_files:
        for key, path in cfg.input_paths().items():
            if not os.path.isfile(path):
                raise ConfigError(f"file not found: {path}", key)
    return cfg


def load_yaml(text):
    try:
        return yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f" (line {mark.line + 1})" if mark is not None else ""
        raise ConfigError(f"malformed YAML{where}: {getattr(exc, 'problem', exc)}") from None


def parse_config(text, base_dir=".", check_files=True, overrides=()):
    """Parse and validate a YAML configuration.

    Args:
        text (str): YAML document.
        base_dir (str): Directory against which relative paths are resolved.
        check_files (bool): Verify that referenced input files exist.
        overrides (list): ``"dotted.key=value"`` strings applied before validation;
            values are parsed as YAML scalars.

    Returns:
        SimulationConfig
    """
    data = load_yaml(text)
    if data is None:
        data = {}
    for item in overrides:
        data = apply_override(data, item)
    return validate_config(data, base_dir, check_files)


def set_key(data, dotted, value):
    """Copy of nested mapping ``data`` with ``dotted`` set to ``value``."""
    if not isinstance(data, dict):
        raise ConfigError("configuration must be a mapping")
    keys = dotted.split(".")
    out = dict(data)
    node = out
    for k in keys[:-1]:
        child = node.get(k)
        if child is None:
            child = {}
        elif not isinstance(child, dict):
            raise ConfigError("cannot set a key inside a non-mapping value", dotted)
        node[k] = dict(child)
        node = node[k]
    node[keys[-1]] = value
    return out


def apply_override(data, item):
    if "=" not in item:
        raise ConfigError(f"override {item!r} must look like key=value")
    key, raw = item.split("=", 1)
    key = key.strip()
    if not key:
        raise ConfigError(f"override {item!r} has an empty key")
    return set_key(data or {}, key, load_yaml(raw))
