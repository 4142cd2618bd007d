"""Finitely supported probability measures on [0, inf).

Everything that stands in for the limiting spectral law of ``A A^*`` (and for
empirical spectra) is an :class:`AtomicMeasure`.  Atomic representation gives
closed-form Stieltjes transforms and exact gap arithmetic.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy import stats

from ipn.errors import ConfigError, DomainError

MERGE_TOL = 1e-12
DEFAULT_HULL_MARGIN = 10.0


@dataclass(frozen=True)
class AtomicMeasure:
    """Probability measure ``sum_k w_k delta_{t_k}`` with ``0 <= t_0 < t_1 < ...``."""

    locations: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        loc = np.asarray(self.locations, dtype=float).copy()
        w = np.asarray(self.weights, dtype=float).copy()
        if loc.ndim != 1 or loc.shape != w.shape or loc.size == 0:
            raise ConfigError("measure needs at least one atom and matching weights")
        if not np.all(np.isfinite(loc)) or not np.all(np.isfinite(w)):
            raise ConfigError("atom locations and weights must be finite")
        if np.any(loc < 0):
            raise ConfigError("atoms must lie in [0, inf)")
        if np.any(w <= 0):
            raise ConfigError("atom weights must be positive")
        if np.any(np.diff(loc) <= 0):
            raise ConfigError("atom locations must be strictly increasing")
        if abs(w.sum() - 1.0) > MERGE_TOL * max(1, w.size):
            raise ConfigError(f"weights sum to {w.sum()!r}, expected 1")
        loc.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "locations", loc)
        object.__setattr__(self, "weights", w)

    @classmethod
    def from_atoms(cls, atoms: Iterable[Sequence[float]], normalize: bool = False) -> "AtomicMeasure":
        """Build from ``(location, weight)`` pairs in any order.

        Locations closer than ``1e-12`` are merged and their weights added.
        """
        pairs = sorted((float(t), float(w)) for t, w in atoms)
        if not pairs:
            raise ConfigError("measure needs at least one atom")
        loc: list[float] = []
        wts: list[float] = []
        for t, w in pairs:
            if loc and abs(t - loc[-1]) <= MERGE_TOL:
                wts[-1] += w
            else:
                loc.append(t)
                wts.append(w)
        w_arr = np.asarray(wts)
        if normalize:
            w_arr = w_arr / w_arr.sum()
        return cls(np.asarray(loc), w_arr)

    @classmethod
    def dirac(cls, at: float = 0.0) -> "AtomicMeasure":
        return cls(np.array([float(at)]), np.array([1.0]))

    @classmethod
    def empirical(cls, values: Sequence[float]) -> "AtomicMeasure":
        """Uniform measure on ``values`` (duplicates merged)."""
        v = np.asarray(values, dtype=float)
        return cls.from_atoms(((t, 1.0 / v.size) for t in v), normalize=True)

    @property
    def size(self) -> int:
        return int(self.locations.size)

    @property
    def min_atom(self) -> float:
        return float(self.locations[0])

    @property
    def max_atom(self) -> float:
        return float(self.locations[-1])

    def mean(self) -> float:
        return float(self.weights @ self.locations)

    def __contains__(self, x: float) -> bool:
        return bool(np.any(self.locations == x))

    def to_json(self) -> dict:
        return {"atoms": [[float(t), float(w)] for t, w in zip(self.locations, self.weights)]}

    @classmethod
    def from_json(cls, data: dict | str) -> "AtomicMeasure":
        if isinstance(data, str):
            data = json.loads(data)
        return cls.from_atoms(data["atoms"])

    def __eq__(self, other):
        if not isinstance(other, AtomicMeasure):
            return NotImplemented
        return np.array_equal(self.locations, other.locations) and np.array_equal(
            self.weights, other.weights
        )

    def __hash__(self):
        return hash((self.locations.tobytes(), self.weights.tobytes()))


def _check_off_atoms(m: AtomicMeasure, z: np.ndarray) -> None:
    if np.any(z[..., None] == m.locations):
        raise DomainError("Stieltjes transform evaluated at an atom")


def stieltjes(m: AtomicMeasure, z):
    """``sum_k w_k / (z - t_k)``; scalar or array ``z``."""
    za = np.asarray(z)
    _check_off_atoms(m, za)
    out = (m.weights / (za[..., None] - m.locations)).sum(axis=-1)
    return out if za.ndim else out[()]


def stieltjes_derivative(m: AtomicMeasure, x):
    """``d/dx g(x) = -sum_k w_k / (x - t_k)^2``."""
    xa = np.asarray(x)
    _check_off_atoms(m, xa)
    out = -(m.weights / (xa[..., None] - m.locations) ** 2).sum(axis=-1)
    return out if xa.ndim else out[()]


def _family_ppf(family: str, params: dict):
    if family == "uniform":
        a, b = float(params["a"]), float(params["b"])
        if not a < b:
            raise ConfigError("uniform family needs a < b")
        return stats.uniform(loc=a, scale=b - a).ppf
    if family == "two-point-mixture":
        x1, x2, p = float(params["x1"]), float(params["x2"]), float(params["p"])
        if not (0 < p < 1) or not x1 < x2:
            raise ConfigError("two-point-mixture needs x1 < x2 and 0 < p < 1")
        return lambda q: np.where(q <= p, x1, x2)
    if family == "dirac":
        at = float(params.get("at", 0.0))
        return lambda q: np.full_like(q, at)
    raise ConfigError(f"unknown density family {family!r}")


def discretize(family: str, m: int = 1, **params) -> AtomicMeasure:
    """Equal-weight quantile atoms ``F^{-1}((k - 1/2)/m)``, ``k = 1..m``.

    ``family`` is ``"uniform"`` (``a``, ``b``), ``"two-point-mixture"``
    (``x1``, ``x2``, ``p`` = mass at ``x1``), ``"dirac"`` (``at``) or
    ``"atoms"`` (``atoms=[[t, w], ...]``, returned as given).
    """
    if family == "atoms":
        return AtomicMeasure.from_atoms(params["atoms"])
    if m < 1:
        raise ConfigError("discretization count must be >= 1")
    q = (np.arange(1, m + 1) - 0.5) / m
    x = np.asarray(_family_ppf(family, params)(q), dtype=float)
    return AtomicMeasure.from_atoms(((t, 1.0 / m) for t in x), normalize=True)


def measure_from_config(spec: dict) -> AtomicMeasure:
    """Build a measure from a config table such as ``{"family": "uniform", "a": 0, "b": 1, "m": 64}``."""
    spec = dict(spec)
    if "atoms" in spec and "family" not in spec:
        return AtomicMeasure.from_atoms(spec["atoms"])
    family = spec.pop("family")
    m = int(spec.pop("m", 1))
    return discretize(family, m, **spec)


def gaps(m: AtomicMeasure, hull: tuple[float, float] | None = None) -> list[tuple[float, float]]:
    """Open intervals of ``R \\ supp(m)`` inside ``hull``.

    The default hull is ``(-10, inf)``.  The left piece ``(hull[0], min_atom)``
    is always present because negative abscissae carry the hard-edge gap of
    the deformed law when ``c < 1``.
    """
    lo, hi = hull if hull is not None else (-DEFAULT_HULL_MARGIN, math.inf)
    loc = m.locations
    out: list[tuple[float, float]] = []
    if lo < loc[0]:
        out.append((float(lo), float(loc[0])))
    out.extend((float(a), float(b)) for a, b in zip(loc[:-1], loc[1:]))
    if hi > loc[-1]:
        out.append((float(loc[-1]), float(hi)))
    return out


def apportion(m: AtomicMeasure, count: int) -> np.ndarray:
    """Integer multiplicities per atom summing to ``count`` (largest remainder)."""
    if count < m.size:
        raise ConfigError(
            f"cannot represent {m.size} atoms with only {count} bulk eigenvalues"
        )
    raw = m.weights * count
    base = np.floor(raw).astype(int)
    short = count - int(base.sum())
    # stable order: larger remainder first, then smaller location
    order = sorted(range(m.size), key=lambda k: (-(raw[k] - base[k]), k))
    for k in order[:short]:
        base[k] += 1
    return base
