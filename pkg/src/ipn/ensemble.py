"""Finite-N instances: noise entry laws, the signal matrix A and M = S S^*."""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import integrate, special, stats

from ipn.equilibrium import ModelParams
from ipn.errors import ConfigError
from ipn.measure import apportion

HALF = 0.5
_UNIFORM_HALF_WIDTH = math.sqrt(1.5)  # component variance 1/2

BASE_LAWS = ("complex-gaussian", "real-gaussian-pair", "rademacher", "uniform-bounded")


def stream(seed: int, *key: int) -> np.random.Generator:
    """Independent generator for ``(seed, key...)``; no dependence on call order."""
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key)))


# --------------------------------------------------------------------------
# entry laws; every law has independent real/imaginary parts of variance 1/2


def _component_truncated_moments(law: str, C: float) -> tuple[float, float]:
    """``(E[x 1{|x|<=C}], E[x^2 1{|x|<=C}])`` for one real component of ``law``."""
    if law in ("complex-gaussian", "real-gaussian-pair"):
        sd = math.sqrt(HALF)
        t = C / sd
        second = HALF * ((2 * stats.norm.cdf(t) - 1) - 2 * t * stats.norm.pdf(t))
        return 0.0, float(second)
    if law == "rademacher":
        return 0.0, HALF if C >= math.sqrt(HALF) else 0.0
    if law == "uniform-bounded":
        a = _UNIFORM_HALF_WIDTH
        return 0.0, HALF if C >= a else C**3 / (3 * a)
    raise ConfigError(f"unknown base law {law!r}")


def third_abs_moment(law: str) -> float:
    """``E|X_ij|^3`` for a base law (the constant theta* of the truncation step)."""
    if law in ("complex-gaussian", "real-gaussian-pair"):
        return float(special.gamma(2.5))  # |X|^2 ~ Exp(1)
    if law == "rademacher":
        return 1.0
    if law == "uniform-bounded":
        a = _UNIFORM_HALF_WIDTH
        val, _ = integrate.dblquad(lambda y, x: (x * x + y * y) ** 1.5, 0, a, 0, a)
        return float(val / (a * a))
    raise ConfigError(f"unknown base law {law!r}")


@dataclass(frozen=True)
class TruncatedLaw:
    """Truncate each component at ``C``, recentre, rescale, then mix with Gaussian noise."""

    C: float
    alpha: float
    base: str = "complex-gaussian"

    def __post_init__(self):
        if self.base not in BASE_LAWS:
            raise ConfigError(f"unknown base law {self.base!r}")
        if not self.alpha > 0:
            raise ConfigError("alpha must be positive")
        bound = 8 * third_abs_moment(self.base)
        if not self.C > bound:
            raise ConfigError(f"truncation level C={self.C} must exceed 8 theta* = {bound:.4f}")

    @property
    def name(self) -> str:
        return "truncated-smoothed"

    def component_scale(self) -> tuple[float, float]:
        """Mean and standard deviation of a truncated component before rescaling."""
        mean, second = _component_truncated_moments(self.base, self.C)
        return mean, math.sqrt(second - mean**2)


def _base_components(law: str, rng: np.random.Generator, shape) -> tuple[np.ndarray, np.ndarray]:
    if law == "complex-gaussian":
        re = rng.standard_normal(shape)
        im = rng.standard_normal(shape)
        return re * math.sqrt(HALF), im * math.sqrt(HALF)
    if law == "real-gaussian-pair":
        pair = rng.standard_normal((*shape, 2)) * math.sqrt(HALF)
        return pair[..., 0], pair[..., 1]
    if law == "rademacher":
        signs = rng.integers(0, 2, size=(*shape, 2)) * 2.0 - 1.0
        return signs[..., 0] * math.sqrt(HALF), signs[..., 1] * math.sqrt(HALF)
    if law == "uniform-bounded":
        a = _UNIFORM_HALF_WIDTH
        return rng.uniform(-a, a, shape), rng.uniform(-a, a, shape)
    raise ConfigError(f"unknown entry law {law!r}")


def _truncated(law: TruncatedLaw, rng, shape) -> np.ndarray:
    re, im = _base_components(law.base, rng, shape)
    mean, sd = law.component_scale()
    y_re = np.where(np.abs(re) <= law.C, re, 0.0) - mean
    y_im = np.where(np.abs(im) <= law.C, im, 0.0) - mean
    # sqrt(2 E|Y|^2) normalisation gives component variance 1/2
    xc = (y_re + 1j * y_im) / (math.sqrt(2.0) * sd)
    gre, gim = _base_components("complex-gaussian", rng, shape)
    return (xc + law.alpha * (gre + 1j * gim)) / math.sqrt(1.0 + law.alpha**2)


def parse_law(spec) -> str | TruncatedLaw:
    if isinstance(spec, TruncatedLaw):
        return spec
    if isinstance(spec, str):
        if spec not in BASE_LAWS:
            raise ConfigError(f"unknown entry law {spec!r}")
        return spec
    if isinstance(spec, dict):
        d = dict(spec)
        name = d.pop("name", "truncated-smoothed")
        if name != "truncated-smoothed":
            raise ConfigError(f"unknown entry law {name!r}")
        return TruncatedLaw(float(d["C"]), float(d["alpha"]), d.get("base", "complex-gaussian"))
    raise ConfigError(f"cannot parse entry law {spec!r}")


def law_name(law) -> str:
    return law.name if isinstance(law, TruncatedLaw) else law


def law_to_json(law):
    if isinstance(law, TruncatedLaw):
        return {"name": law.name, "C": law.C, "alpha": law.alpha, "base": law.base}
    return law


@dataclass(frozen=True)
class EnsembleConfig:
    N: int
    c: float
    entry_law: str | TruncatedLaw = "complex-gaussian"
    rotate: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.N < 1:
            raise ConfigError("N must be positive")
        if not (0 < self.c <= 1):
            raise ConfigError("c must lie in (0, 1]")
        if not (0 <= self.seed < 2**64):
            raise ConfigError("seed must be a 64-bit unsigned integer")
        object.__setattr__(self, "entry_law", parse_law(self.entry_law))
        if self.n < 1:
            raise ConfigError(f"n = round(c N) = {self.n} must be >= 1")

    @property
    def n(self) -> int:
        return min(int(round(self.c * self.N)), self.N)

    @property
    def c_N(self) -> float:
        return self.n / self.N


def sample_x(config: EnsembleConfig, shape: tuple[int, int] | None = None, trial: int = 0) -> np.ndarray:
    """Noise matrix for one trial; bit-identical for identical ``(config, trial)``."""
    shape = shape or (config.n, config.N)
    rng = stream(config.seed, 0, trial)
    law = config.entry_law
    if isinstance(law, TruncatedLaw):
        return _truncated(law, rng, shape)
    re, im = _base_components(law, rng, shape)
    return re + 1j * im


# --------------------------------------------------------------------------
# signal matrix


def haar_unitary(rng: np.random.Generator, n: int, k: int | None = None) -> np.ndarray:
    """``n x k`` matrix with orthonormal columns, the first ``k`` columns of a Haar unitary."""
    k = n if k is None else k
    z = (rng.standard_normal((n, k)) + 1j * rng.standard_normal((n, k))) / math.sqrt(2)
    q, r = np.linalg.qr(z)
    d = np.diag(r)
    return q * (d / np.abs(d))


@dataclass(frozen=True)
class ASpec:
    """``A = U [diag(d) 0] V^*`` with ``U``/``V`` identity unless rotated.

    ``right`` stores only the first ``n`` columns of ``V`` (``N x n``), which
    is all that enters ``A``.
    """

    diagonal: np.ndarray
    N: int
    spike_blocks: tuple[tuple[int, int], ...]
    left: np.ndarray | None = None
    right: np.ndarray | None = None

    @property
    def n(self) -> int:
        return int(self.diagonal.size)

    @property
    def gamma(self) -> np.ndarray:
        """Diagonal of ``A A^*`` in the unrotated frame."""
        return np.abs(self.diagonal) ** 2

    def aa_eigenvalues(self) -> np.ndarray:
        return np.sort(self.gamma)[::-1]

    def rank_range(self, j: int) -> tuple[int, int]:
        """1-based descending ranks of spike ``j`` among the eigenvalues of ``A A^*``."""
        lo, hi = self.spike_blocks[j]
        value = self.gamma[lo]
        above = int(np.sum(self.gamma > value))
        return above + 1, above + (hi - lo)

    def spike_basis(self, j: int) -> np.ndarray:
        lo, hi = self.spike_blocks[j]
        if self.left is not None:
            return self.left[:, lo:hi]
        basis = np.zeros((self.n, hi - lo))
        basis[np.arange(lo, hi), np.arange(hi - lo)] = 1.0
        return basis

    def aa_eigenbasis(self) -> tuple[np.ndarray, np.ndarray]:
        """Eigenvalues of ``A A^*`` (descending) and a matching orthonormal basis."""
        order = np.argsort(-self.gamma, kind="stable")
        basis = self.left if self.left is not None else np.eye(self.n)
        return self.gamma[order], basis[:, order]

    def matrix(self) -> np.ndarray:
        n, N = self.n, self.N
        if self.right is None:
            core = np.zeros((n, N), dtype=complex)
            core[np.arange(n), np.arange(n)] = self.diagonal
        else:
            core = self.diagonal[:, None] * self.right.conj().T
        return core if self.left is None else self.left @ core


def build_a(params: ModelParams, config: EnsembleConfig) -> ASpec:
    """Spike blocks ``sqrt(theta_j)`` first, then bulk ``sqrt(beta)`` in decreasing order."""
    n, r = config.n, params.r
    if n < r + 1:
        raise ConfigError(f"n={n} too small for {r} spike directions plus bulk")
    copies = apportion(params.nu, n - r)
    bulk = np.repeat(params.nu.locations, copies)[::-1]
    for theta, _ in params.spikes:
        if np.any(bulk == theta):
            raise ConfigError(f"spike {theta} ties with a bulk eigenvalue")
    spikes = np.concatenate([np.full(k, theta) for theta, k in params.spikes]) if params.spikes else np.empty(0)
    diag = np.sqrt(np.concatenate([spikes, bulk]))
    blocks = []
    start = 0
    for _, k in params.spikes:
        blocks.append((start, start + k))
        start += k
    left = right = None
    if config.rotate:
        rng = stream(config.seed, 1)
        left = haar_unitary(rng, n)
        right = haar_unitary(rng, config.N, n)
    return ASpec(diag, config.N, tuple(blocks), left, right)


def assemble_m(a: ASpec, x: np.ndarray, sigma: float) -> np.ndarray:
    """``(sigma X / sqrt(N) + A)(sigma X / sqrt(N) + A)^*``, symmetrised."""
    n, N = x.shape
    if (n, N) != (a.n, a.N):
        raise ConfigError(f"noise shape {x.shape} does not match A ({a.n}, {a.N})")
    s = (sigma / math.sqrt(N)) * x
    if a.left is None and a.right is None:
        s = s.astype(complex, copy=True)
        s[np.arange(n), np.arange(n)] += a.diagonal
    else:
        s = s + a.matrix()
    m = s @ s.conj().T
    return 0.5 * (m + m.conj().T)


# --------------------------------------------------------------------------
# debug dump: 32-byte header then row-major interleaved (re, im) doubles

DUMP_MAGIC = b"IPNM"
_HEADER = struct.Struct("<4s4xQQQ")


def write_matrix_dump(path: str | Path, m: np.ndarray, N: int, flags: int = 0) -> None:
    m = np.asarray(m, dtype="<c16")
    rows = m.shape[0]
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(DUMP_MAGIC, rows, int(N), int(flags)))
        fh.write(np.ascontiguousarray(m).view("<f8").tobytes())


def read_matrix_dump(path: str | Path) -> tuple[np.ndarray, int, int]:
    """Returns ``(matrix, N, flags)``; the matrix is ``n x (payload / n)``."""
    raw = Path(path).read_bytes()
    magic, n, N, flags = _HEADER.unpack_from(raw)
    if magic != DUMP_MAGIC:
        raise ValueError(f"{path}: bad magic {magic!r}")
    data = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size)
    cols = data.size // (2 * n)
    return data.view("<c16").reshape(n, cols).copy(), int(N), int(flags)
