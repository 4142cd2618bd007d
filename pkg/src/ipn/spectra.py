"""Eigen-analysis of sampled matrices and the empirical side of each limit theorem."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ipn.ensemble import ASpec
from ipn.equilibrium import ModelParams, SupportProfile, omega_complex, omega_on_gap, solve_g_mu
from ipn.errors import ConfigError, DomainError, SolverError
from ipn.spikes import OutlierSet


def eig_h(m: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Eigenvalues in decreasing order and the matching orthonormal eigenvectors (columns)."""
    scale = max(1.0, float(np.max(np.abs(m)))) if m.size else 1.0
    if np.max(np.abs(m - m.conj().T), initial=0.0) > 1e-10 * scale:
        raise DomainError("matrix is not Hermitian")
    try:
        w, v = np.linalg.eigh(m)
    except np.linalg.LinAlgError as exc:
        raise SolverError(f"Hermitian eigensolver failed: {exc}") from exc
    return w[::-1].copy(), v[:, ::-1].copy()


def _cluster(vectors: np.ndarray, ranks: tuple[int, int]) -> np.ndarray:
    lo, hi = ranks
    if hi > vectors.shape[1] or lo < 1:
        raise ConfigError(f"rank range {ranks} outside 1..{vectors.shape[1]}")
    return vectors[:, lo - 1 : hi]


def spike_projection(vectors: np.ndarray, a: ASpec, j: int, onto: int | None = None) -> np.ndarray:
    """``||P_Ker(alpha_l - A A^*) xi_p||^2`` for the eigenvectors ``xi_p`` ranked like spike ``j``.

    ``onto`` selects the spike eigenspace ``l``; by default ``l = j``.
    """
    xi = _cluster(vectors, a.rank_range(j))
    basis = a.spike_basis(j if onto is None else onto)
    return np.sum(np.abs(basis.conj().T @ xi) ** 2, axis=0)


def aggregate_projection(vectors: np.ndarray, a: ASpec, j: int, l: int) -> float:
    """Sum over the ``k_j`` outlier eigenvectors of spike ``j`` of their projection onto spike ``l``."""
    return float(spike_projection(vectors, a, j, onto=l).sum())


def trace_identity(eigenvalues, vectors: np.ndarray, a: ASpec, j: int, l: int) -> tuple[float, float, float]:
    """Three evaluations of ``Tr[h(M) f(A A^*)]`` with indicator ``h``, ``f``.

    ``h`` selects the eigenvectors ranked like spike ``j``; ``f`` selects the
    eigenvalue of spike ``l`` of ``A A^*``.  Returns (projection sum, matrix
    trace, double sum over eigenpairs); all three are equal for every draw.
    """
    lo, hi = a.rank_range(j)
    proj_sum = aggregate_projection(vectors, a, j, l)

    w = vectors[:, lo - 1 : hi]
    h_m = w @ w.conj().T
    basis = a.spike_basis(l)
    f_a = basis @ basis.conj().T
    trace = float(np.einsum("ij,ji->", h_m, f_a).real)

    aa_vals, aa_vecs = a.aa_eigenbasis()
    alpha = a.gamma[a.spike_blocks[l][0]]
    f_vals = (aa_vals == alpha).astype(float)
    h_vals = np.zeros(vectors.shape[1])
    h_vals[lo - 1 : hi] = 1.0
    overlaps = np.abs(aa_vecs.conj().T @ vectors) ** 2  # [m, p] = |<v_m, w_p>|^2
    double = float(f_vals @ overlaps @ h_vals)
    return proj_sum, trace, double


def completeness_defect(vectors: np.ndarray, a: ASpec) -> float:
    """``max_p |1 - sum_m |<v_m, w_p>|^2|`` over a full eigenbasis ``v`` of ``A A^*``."""
    _, aa_vecs = a.aa_eigenbasis()
    tot = np.sum(np.abs(aa_vecs.conj().T @ vectors) ** 2, axis=0)
    return float(np.max(np.abs(1.0 - tot)))


@dataclass
class SpectralSample:
    eigenvalues: np.ndarray
    projections: dict[int, np.ndarray] = field(default_factory=dict)
    cross_projections: dict[tuple[int, int], np.ndarray] = field(default_factory=dict)
    counts: dict[tuple[float, float], int] = field(default_factory=dict)


def analyze(
    m: np.ndarray,
    a: ASpec,
    spikes: list[int],
    windows: list[tuple[float, float]] = (),
) -> tuple[SpectralSample, np.ndarray]:
    """Eigendecompose ``m`` and collect projections for the listed spike indices."""
    vals, vecs = eig_h(m)
    sample = SpectralSample(vals)
    for j in spikes:
        sample.projections[j] = spike_projection(vecs, a, j)
        for l in spikes:
            if l != j:
                sample.cross_projections[(j, l)] = spike_projection(vecs, a, j, onto=l)
    for lo, hi in windows:
        sample.counts[(lo, hi)] = count_in(vals, lo, hi)
    return sample, vecs


def count_in(eigenvalues, lo: float, hi: float) -> int:
    ev = np.asarray(eigenvalues)
    return int(np.sum((ev > lo) & (ev < hi)))


@dataclass(frozen=True)
class SeparationReport:
    x: float
    y: float
    omega_x: float
    omega_y: float
    i_N: int
    assumption_ok: bool
    below: bool
    above: bool

    @property
    def passed(self) -> bool:
        return self.assumption_ok and self.below and self.above

    def to_json(self) -> dict:
        return {k: getattr(self, k) for k in ("x", "y", "omega_x", "omega_y", "i_N", "assumption_ok", "below", "above")}


def _lam(values: np.ndarray, i: int) -> float:
    """1-based eigenvalue with ``lambda_0 = +inf`` and ``lambda_{n+1} = -inf``."""
    if i <= 0:
        return math.inf
    if i > values.size:
        return -math.inf
    return float(values[i - 1])


def exact_separation_check(
    eigenvalues, a: ASpec, gap: tuple[float, float], params: ModelParams, profile: SupportProfile
) -> SeparationReport:
    """Count-matching across ``[x, y]`` between ``M`` and ``A A^*`` mapped through ``omega``."""
    x, y = gap
    if not x < y:
        raise DomainError("gap must satisfy x < y")
    kx, ky = profile.gap_index(x), profile.gap_index(y)
    if kx is None or kx != ky:
        raise DomainError(f"[{x}, {y}] is not inside a single gap of the support")
    wx, wy = (float(v) for v in omega_on_gap(params, np.array([x, y]), profile))
    aa = a.aa_eigenvalues()
    assumption_ok = not bool(np.any((aa >= wx) & (aa <= wy)))
    i_n = int(np.sum(aa > wy))
    ev = np.asarray(eigenvalues)
    return SeparationReport(
        x, y, wx, wy, i_n, assumption_ok,
        below=_lam(ev, i_n + 1) < x,
        above=_lam(ev, i_n) > y,
    )


def support_exclusion_check(eigenvalues, s: OutlierSet, epsilon: float) -> tuple[bool, list[float]]:
    """Every eigenvalue within ``epsilon`` of ``S``?  Returns the verdict and the offenders."""
    ev = np.asarray(eigenvalues, dtype=float)
    d = s.distance(ev)
    bad = ev[d > epsilon]
    return bad.size == 0, [float(v) for v in bad]


def no_eigenvalue_in(eigenvalues, interval: tuple[float, float]) -> tuple[bool, list[float]]:
    lo, hi = interval
    ev = np.asarray(eigenvalues, dtype=float)
    bad = ev[(ev >= lo) & (ev <= hi)]
    return bad.size == 0, [float(v) for v in bad]


# --------------------------------------------------------------------------
# resolvent


def resolvent(eigenvalues, vectors: np.ndarray, z: complex) -> np.ndarray:
    """``(z - M)^{-1}`` from an eigendecomposition of ``M``."""
    return (vectors / (z - np.asarray(eigenvalues))) @ vectors.conj().T


def resolvent_prediction(params: ModelParams, gamma: np.ndarray, z: complex) -> np.ndarray:
    """Deterministic equivalent of ``E G(z)_qq``: ``(1 - s g_mu(z)) / (omega(z) - gamma_q)``."""
    if z.imag > 0:
        g = solve_g_mu(params, z)
    elif z.imag < 0:
        g = np.conj(solve_g_mu(params, np.conj(z)))
    else:
        raise DomainError("resolvent prediction needs Im z != 0")
    om = omega_complex(params, z, g)
    return (1.0 - params.s * g) / (om - np.asarray(gamma))


def resolvent_deviation(mean_g: np.ndarray, prediction: np.ndarray) -> tuple[float, float, float]:
    """``(max diagonal deviation, mean |off-diagonal|, max |off-diagonal|)`` of an averaged resolvent."""
    diag = np.abs(np.diag(mean_g) - prediction)
    off = np.abs(mean_g - np.diag(np.diag(mean_g)))
    n = mean_g.shape[0]
    off_mean = float(off.sum() / (n * (n - 1))) if n > 1 else 0.0
    return float(diag.max()), off_mean, float(off.max())


def resolvent_diag_check(
    params: ModelParams,
    a: ASpec,
    draws,
    zs,
) -> dict[complex, tuple[float, float, float]]:
    """Average ``G(z)`` over an iterable of ``(eigenvalues, vectors)`` draws and compare.

    Requires an unrotated ``A`` so that ``gamma_q`` is the diagonal of ``A A^*``.
    """
    if a.left is not None or a.right is not None:
        raise ConfigError("resolvent check needs a diagonal A (rotate = false)")
    zs = [complex(z) for z in zs]
    sums = {z: np.zeros((a.n, a.n), complex) for z in zs}
    count = 0
    for vals, vecs in draws:
        for z in zs:
            sums[z] += resolvent(vals, vecs, z)
        count += 1
    if count == 0:
        raise ConfigError("no draws")
    return {
        z: resolvent_deviation(sums[z] / count, resolvent_prediction(params, a.gamma, z)) for z in zs
    }
