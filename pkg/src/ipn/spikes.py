"""Outlier predictions for the spikes of ``A A^*``."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from ipn.equilibrium import (
    BOUNDARY_TOL,
    ModelParams,
    SupportProfile,
    g_mu_on_gap,
    omega_on_gap,
    phi,
    phi_prime,
    support,
)
from ipn.errors import ConfigError, DomainError
from ipn.measure import apportion, stieltjes


@dataclass(frozen=True)
class SpikePrediction:
    theta: float
    multiplicity: int
    in_outlier_set: bool
    phi_prime_at_theta: float
    g_nu_at_theta: float
    rho: float | None
    tau: float | None
    rank_range: tuple[int, int] | None

    @property
    def aggregate_tau(self) -> float | None:
        """Limit of the summed projections over the whole outlier cluster."""
        return None if self.tau is None else self.multiplicity * self.tau

    def to_json(self) -> dict:
        d = asdict(self)
        d["rank_range"] = list(self.rank_range) if self.rank_range else None
        d["aggregate_tau"] = self.aggregate_tau
        return d

    def csv_row(self) -> str:
        fmt = lambda v: "" if v is None else repr(float(v))
        return f"{self.theta!r},{self.multiplicity},{str(self.in_outlier_set).lower()},{fmt(self.rho)},{fmt(self.tau)}"


CSV_HEADER = "theta,k,in_set,rho,tau"


def is_outlier_spike(params: ModelParams, theta: float) -> bool:
    """Strict membership test; points within ``1e-10`` of a boundary are excluded."""
    pp = float(phi_prime(params, theta))
    if pp <= BOUNDARY_TOL:
        return False
    if params.s > 0:
        return float(stieltjes(params.nu, theta)) + 1.0 / params.s > BOUNDARY_TOL
    return True


def bulk_counts(params: ModelParams, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Bulk eigenvalues of ``A A^*`` laid out for an ``n x N`` instance: (atoms, copies)."""
    return params.nu.locations, apportion(params.nu, n - params.r)


def rank_ranges(params: ModelParams, n: int | None = None) -> list[tuple[int, int] | None]:
    """1-based descending ranks ``(n_{j-1} + 1, n_{j-1} + k_j)`` of each spike.

    Without ``n`` the bulk layout is unknown; ranks are still returned when
    every spike lies above all atoms.
    """
    out = []
    for j, (theta, k) in enumerate(params.spikes):
        above_spikes = sum(kk for t, kk in params.spikes[:j])
        if n is None:
            if theta < params.nu.max_atom:
                out.append(None)
                continue
            above_bulk = 0
        else:
            atoms, copies = bulk_counts(params, n)
            if np.any(atoms == theta):
                raise ConfigError(f"spike {theta} coincides with a bulk eigenvalue")
            above_bulk = int(copies[atoms > theta].sum())
        start = above_spikes + above_bulk
        out.append((start + 1, start + k))
    return out


def tau_value(params: ModelParams, theta: float) -> float:
    """Limiting squared overlap ``Phi'(theta) / (1 + sigma^2 c g_nu(theta))``."""
    if not is_outlier_spike(params, theta):
        raise DomainError(f"theta={theta} is not in the outlier set")
    return float(phi_prime(params, theta)) / (1.0 + params.s * float(stieltjes(params.nu, theta)))


def tau_via_omega(params: ModelParams, theta: float, profile: SupportProfile | None = None) -> float:
    """Same limit from ``(1 - s g_mu(rho)) / omega'(rho)``, with ``omega'`` by finite differences."""
    if not is_outlier_spike(params, theta):
        raise DomainError(f"theta={theta} is not in the outlier set")
    profile = profile or support(params)
    rho = float(phi(params, theta))
    gap = profile.gap_map[profile.gap_index(rho)][0]
    # omega has a square-root singularity at the gap ends, so the step follows the distance to them
    h = min(1e-3 * (1.0 + abs(rho)), 0.02 * (rho - gap[0]), 0.02 * (gap[1] - rho))
    x = rho + h * np.array([-3.0, -2.0, -1.0, 1.0, 2.0, 3.0])
    w = omega_on_gap(params, x, profile)
    d_omega = (-w[0] + 9 * w[1] - 45 * w[2] + 45 * w[3] - 9 * w[4] + w[5]) / (60 * h)
    g = float(g_mu_on_gap(params, rho, profile))
    return (1.0 - params.s * g) / d_omega


def classify(
    params: ModelParams, profile: SupportProfile | None = None, n: int | None = None
) -> list[SpikePrediction]:
    """One prediction per spike, in the (decreasing) order of ``params.spikes``."""
    profile = profile or support(params)
    ranks = rank_ranges(params, n)
    out = []
    for (theta, k), rank in zip(params.spikes, ranks):
        inside = is_outlier_spike(params, theta)
        pp = float(phi_prime(params, theta))
        gn = float(stieltjes(params.nu, theta))
        rho = float(phi(params, theta)) if inside else None
        tau = tau_value(params, theta) if inside else None
        out.append(SpikePrediction(theta, k, inside, pp, gn, rho, tau, rank))
    return out


@dataclass(frozen=True)
class OutlierSet:
    """Compact set ``supp(mu)`` together with the isolated outlier limits."""

    intervals: tuple[tuple[float, float], ...]
    points: tuple[float, ...]

    def distance(self, x) -> np.ndarray:
        xa = np.atleast_1d(np.asarray(x, dtype=float))
        d = np.full(xa.shape, math.inf)
        for a, b in self.intervals:
            d = np.minimum(d, np.maximum(0.0, np.maximum(a - xa, xa - b)))
        for p in self.points:
            d = np.minimum(d, np.abs(xa - p))
        return d

    def to_json(self) -> dict:
        return {"intervals": [list(iv) for iv in self.intervals], "points": list(self.points)}


def outlier_set_S(params: ModelParams, profile: SupportProfile | None = None) -> OutlierSet:
    profile = profile or support(params)
    pts = tuple(float(phi(params, t)) for t, _ in params.spikes if is_outlier_spike(params, t))
    return OutlierSet(tuple(profile.support), tuple(sorted(pts)))
