"""Cutoff torus model shared by the expansion pipeline and the exact oracle.

Momenta are stored as integer vectors ``n``; the physical momentum is
``2*pi*n`` and kinetic energies are ``4*pi**2*|n|**2``.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from pathlib import Path

import jsonschema
import numpy as np

MODE_BUDGET = 125
FOUR_PI_SQ = 4.0 * np.pi**2


class CapacityError(RuntimeError):
    """Raised when a requested basis or mode set exceeds its budget."""


class PotentialError(ValueError):
    pass


class PositivityError(PotentialError):
    def __init__(self, k, value):
        super().__init__(f"negative Fourier coefficient v({list(k)}) = {value!r}")
        self.k = tuple(k)
        self.value = value


class EvennessError(PotentialError):
    def __init__(self, k, a, b):
        super().__init__(
            f"potential not even: v({list(k)}) = {a!r} but v({[-x for x in k]}) = {b!r}")
        self.k = tuple(k)


class ConfigError(ValueError):
    """Malformed or schema-violating model configuration."""


@dataclass(frozen=True)
class ModeSet:
    dimension: int
    cutoff: int
    momenta: np.ndarray = field(repr=False)  # (M, d) integer vectors
    zero_index: int

    def __post_init__(self):
        self.momenta.setflags(write=False)

    @property
    def size(self) -> int:
        return len(self.momenta)

    @property
    def nonzero(self) -> np.ndarray:
        return np.array([i for i in range(self.size) if i != self.zero_index])

    def index(self, n) -> int | None:
        """Index of integer momentum ``n`` or None if outside the set."""
        n = tuple(int(x) for x in np.atleast_1d(n))
        if len(n) != self.dimension or max(abs(x) for x in n) > self.cutoff:
            return None
        # lexicographic order over the box [-K, K]^d
        w = 2 * self.cutoff + 1
        idx = 0
        for x in n:
            idx = idx * w + (x + self.cutoff)
        return idx

    @property
    def negation(self) -> np.ndarray:
        return np.array([self.index(-m) for m in self.momenta])

    def kinetic(self) -> np.ndarray:
        """|p|^2 = 4 pi^2 |n|^2 for every mode."""
        return FOUR_PI_SQ * np.sum(self.momenta.astype(float) ** 2, axis=1)

    def difference_vectors(self):
        """All representable differences p - q, as tuples."""
        r = range(-2 * self.cutoff, 2 * self.cutoff + 1)
        return [k for k in itertools.product(r, repeat=self.dimension)]


def build_mode_set(d: int, K: int, budget: int = MODE_BUDGET) -> ModeSet:
    if d not in (1, 2, 3):
        raise ValueError(f"dimension must be 1, 2 or 3, got {d}")
    if K < 1:
        raise ValueError(f"cutoff must be >= 1, got {K}")
    M = (2 * K + 1) ** d
    if M > budget:
        raise CapacityError(f"mode set needs {M} modes, budget is {budget}")
    momenta = np.array(list(itertools.product(range(-K, K + 1), repeat=d)), dtype=np.int64)
    zero = int(np.flatnonzero(~momenta.any(axis=1))[0])
    return ModeSet(d, K, momenta, zero)


@dataclass(frozen=True)
class PairPotential:
    """Fourier coefficients v(k) on the representable difference momenta.

    Keys are integer tuples; missing keys mean v(k) = 0.
    """
    coefficients: dict

    def __call__(self, k) -> float:
        return self.coefficients.get(tuple(int(x) for x in k), 0.0)

    def scaled(self, lam: float) -> "PairPotential":
        return PairPotential({k: lam * v for k, v in self.coefficients.items()})

    @property
    def is_zero(self) -> bool:
        return all(v == 0.0 for v in self.coefficients.values())

    def at_modes(self, modes: ModeSet) -> np.ndarray:
        """v(p) evaluated at each mode momentum."""
        return np.array([self(m) for m in modes.momenta])

    @classmethod
    def constant(cls, value: float, modes: ModeSet) -> "PairPotential":
        return cls({k: float(value) for k in modes.difference_vectors()})

    @classmethod
    def gaussian(cls, amplitude: float, width: float, modes: ModeSet) -> "PairPotential":
        coeffs = {}
        for k in modes.difference_vectors():
            k2 = FOUR_PI_SQ * sum(x * x for x in k)
            coeffs[k] = float(amplitude * np.exp(-0.5 * width**2 * k2))
        return cls(coeffs)

    @classmethod
    def table(cls, entries) -> "PairPotential":
        """``entries``: iterable of (k, value) with k an integer vector."""
        return cls({tuple(int(x) for x in np.atleast_1d(k)): float(v) for k, v in entries})


def validate_potential(vhat: PairPotential, modes: ModeSet) -> PairPotential:
    for k in modes.difference_vectors():
        a = vhat(k)
        if a < 0:
            raise PositivityError(k, a)
        b = vhat(tuple(-x for x in k))
        if a != b:
            raise EvennessError(k, a, b)
    vals = [vhat(k) for k in modes.difference_vectors()]
    if not np.all(np.isfinite(vals)):
        raise PotentialError("potential has non-finite coefficients")
    return vhat


@dataclass(frozen=True)
class CutoffModel:
    modes: ModeSet
    potential: PairPotential
    N: int

    def __post_init__(self):
        if self.N < 2:
            raise ValueError(f"need N >= 2, got {self.N}")

    @property
    def coupling(self) -> float:
        return 1.0 / (self.N - 1)

    def with_N(self, N: int) -> "CutoffModel":
        return CutoffModel(self.modes, self.potential, N)

    def with_potential(self, potential: PairPotential) -> "CutoffModel":
        return CutoffModel(self.modes, potential, self.N)


@dataclass(frozen=True)
class TrapGrid:
    dimension: int
    L: float
    points: int
    x: np.ndarray = field(repr=False)  # 1d axis coordinates
    values: np.ndarray = field(repr=False)  # V^trap on the full grid
    threshold: float = 10.0
    kind: str = "harmonic"

    @property
    def spacing(self) -> float:
        return float(self.x[1] - self.x[0])

    @property
    def shape(self):
        return (self.points,) * self.dimension

    def coordinates(self):
        return np.meshgrid(*([self.x] * self.dimension), indexing="ij")


def build_trap_grid(d: int, L: float, points: int, kind: str = "harmonic",
                    values=None, threshold: float = 10.0) -> TrapGrid:
    if d not in (1, 2):
        raise ValueError("trap grids are supported in d = 1, 2")
    x = np.linspace(-L, L, points)
    mesh = np.meshgrid(*([x] * d), indexing="ij")
    if kind == "harmonic":
        V = sum(m**2 for m in mesh)
    elif kind == "table":
        V = np.asarray(values, dtype=float).reshape((points,) * d)
    else:
        raise ConfigError(f"unknown trap kind {kind!r}")
    if np.any(V < 0):
        raise PotentialError("trap potential must be non-negative")
    edge = np.concatenate([np.moveaxis(V, ax, 0)[[0, -1]].ravel() for ax in range(d)])
    if np.any(edge <= threshold):
        raise PotentialError(
            f"trap does not confine: boundary minimum {edge.min():.3g} <= {threshold}")
    V.setflags(write=False)
    return TrapGrid(d, float(L), int(points), x, V, threshold, kind)


# --- JSON configuration ----------------------------------------------------

CONFIG_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["spec", "dimension", "cutoff", "potential", "N"],
    "properties": {
        "spec": {"const": 1},
        "dimension": {"type": "integer", "minimum": 1, "maximum": 3},
        "cutoff": {"type": "integer", "minimum": 1},
        "N": {"type": "integer", "minimum": 2},
        "potential": {
            "type": "object",
            "additionalProperties": False,
            "required": ["kind"],
            "properties": {
                "kind": {"enum": ["constant", "table", "gaussian"]},
                "value": {"type": "number"},
                "amplitude": {"type": "number"},
                "width": {"type": "number", "exclusiveMinimum": 0},
                "entries": {
                    "type": "array",
                    "items": {
                        "type": "object",
                        "additionalProperties": False,
                        "required": ["k", "value"],
                        "properties": {
                            "k": {"type": "array", "items": {"type": "integer"}},
                            "value": {"type": "number"},
                        },
                    },
                },
            },
        },
        "trap": {
            "type": "object",
            "additionalProperties": False,
            "required": ["L", "points", "kind"],
            "properties": {
                "L": {"type": "number", "exclusiveMinimum": 0},
                "points": {"type": "integer", "minimum": 8},
                "kind": {"enum": ["harmonic", "table"]},
                "values": {"type": "array", "items": {"type": "number"}},
            },
        },
    },
}


@dataclass(frozen=True)
class ModelConfig:
    raw: dict
    model: CutoffModel
    trap: TrapGrid | None = None


def potential_from_config(spec: dict, modes: ModeSet) -> PairPotential:
    kind = spec["kind"]
    if kind == "constant":
        if "value" not in spec:
            raise ConfigError("constant potential needs 'value'")
        return PairPotential.constant(spec["value"], modes)
    if kind == "gaussian":
        if "amplitude" not in spec or "width" not in spec:
            raise ConfigError("gaussian potential needs 'amplitude' and 'width'")
        return PairPotential.gaussian(spec["amplitude"], spec["width"], modes)
    if "entries" not in spec:
        raise ConfigError("table potential needs 'entries'")
    entries = [(e["k"], e["value"]) for e in spec["entries"]]
    for k, _ in entries:
        if len(k) != modes.dimension:
            raise ConfigError(f"table entry k={k} has wrong dimension")
    return PairPotential.table(entries)


def parse_config(raw: dict) -> ModelConfig:
    try:
        jsonschema.validate(raw, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        raise ConfigError(f"invalid model configuration: {exc.message}") from None
    modes = build_mode_set(raw["dimension"], raw["cutoff"])
    vhat = validate_potential(potential_from_config(raw["potential"], modes), modes)
    trap = None
    if "trap" in raw:
        t = raw["trap"]
        trap = build_trap_grid(raw["dimension"], t["L"], t["points"], t["kind"], t.get("values"))
    return ModelConfig(raw, CutoffModel(modes, vhat, raw["N"]), trap)


def load_config(path) -> ModelConfig:
    text = Path(path).read_text()
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: malformed JSON ({exc})") from None
    return parse_config(raw)


def benchmark_model(N: int = 10, K: int = 1, d: int = 1, value: float = 1.0) -> CutoffModel:
    """The standard d=1, v = const model used throughout the validation suite."""
    modes = build_mode_set(d, K)
    return CutoffModel(modes, PairPotential.constant(value, modes), N)
