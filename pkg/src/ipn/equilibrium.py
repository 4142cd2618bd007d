"""Deterministic-equivalent engine for the Information-Plus-Noise model.

The limiting spectral law ``mu`` of ``M = (sigma X / sqrt(N) + A)(...)^*`` is
described through its Stieltjes transform ``g_mu``, which solves

    g = int dnu(t) / ((1 - s g) z - t / (1 - s g) - sigma^2 (1 - c)),   s = sigma^2 c.

Writing ``u = 1 - s g`` and ``omega(z) = z u^2 - sigma^2 (1 - c) u`` the
right-hand side is ``u * g_nu(omega)``.  On the real axis outside the support
``omega`` is the inverse of

    Phi(x) = x (1 + s g_nu(x))^2 + sigma^2 (1 - c)(1 + s g_nu(x)),

restricted to the admissible set ``E = {Phi' > 0, g_nu > -1/s}``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ipn.errors import ConfigError, DomainError, SolverError
from ipn.measure import AtomicMeasure, gaps, stieltjes, stieltjes_derivative

Interval = tuple[float, float]

SCAN_POINTS = 4096
EDGE_POINTS = 200
BOUNDARY_TOL = 1e-10
MAX_SIGMA = 1e3


@dataclass(frozen=True)
class ModelParams:
    """Noise scale, aspect ratio, bulk law and spikes ``((theta, k), ...)``.

    ``sigma = 0`` is accepted as the noiseless degenerate case.
    """

    sigma: float
    c: float
    nu: AtomicMeasure
    spikes: tuple[tuple[float, int], ...] = ()

    def __post_init__(self):
        if not (0 <= self.sigma <= MAX_SIGMA) or not math.isfinite(self.sigma):
            raise ConfigError(f"sigma must lie in [0, {MAX_SIGMA}], got {self.sigma}")
        if not (0 < self.c <= 1):
            raise ConfigError(f"c must lie in (0, 1], got {self.c}")
        spikes = tuple((float(t), int(k)) for t, k in self.spikes)
        thetas = [t for t, _ in spikes]
        if any(k < 1 for _, k in spikes):
            raise ConfigError("spike multiplicities must be >= 1")
        if any(t < 0 for t in thetas):
            raise ConfigError("spikes must be nonnegative")
        if any(a <= b for a, b in zip(thetas, thetas[1:])):
            raise ConfigError("spikes must be distinct and sorted decreasingly")
        if any(t in self.nu for t in thetas):
            raise ConfigError("spikes must lie outside supp(nu)")
        object.__setattr__(self, "spikes", spikes)

    @property
    def s(self) -> float:
        """``sigma^2 c``."""
        return self.sigma**2 * self.c

    @property
    def r(self) -> int:
        return sum(k for _, k in self.spikes)

    @property
    def hull_margin(self) -> float:
        return 10.0 * (1.0 + self.sigma**2)

    def with_(self, **changes) -> "ModelParams":
        d = dict(sigma=self.sigma, c=self.c, nu=self.nu, spikes=self.spikes)
        d.update(changes)
        return ModelParams(**d)


def phi(params: ModelParams, x):
    gn = stieltjes(params.nu, x)
    h = 1.0 + params.s * gn
    return x * h**2 + params.sigma**2 * (1.0 - params.c) * h


def phi_prime(params: ModelParams, x):
    s = params.s
    gn = stieltjes(params.nu, x)
    dg = stieltjes_derivative(params.nu, x)
    h = 1.0 + s * gn
    return h**2 + 2.0 * x * s * dg * h + params.sigma**2 * (1.0 - params.c) * s * dg


def in_admissible(params: ModelParams, x):
    """Pointwise membership ``Phi'(x) > 0 and g_nu(x) > -1/(sigma^2 c)``."""
    with np.errstate(all="ignore"):
        # overflow next to an atom yields nan/inf, which compares False
        ok = phi_prime(params, x) > 0
        if params.s > 0:
            ok = ok & (stieltjes(params.nu, x) > -1.0 / params.s)
    return ok


def _bisect_bool(pred, x_false: float, x_true: float, max_iter: int = 1200) -> float:
    """Transition point of a boolean predicate; returns a point where ``pred`` holds."""
    a, b = x_false, x_true
    for _ in range(max_iter):
        mid = 0.5 * (a + b)
        if mid == a or mid == b:
            break
        if pred(mid):
            b = mid
        else:
            a = mid
    return b


def _scan_points(lo: float, hi: float, lo_atom: bool, hi_atom: bool, n: int) -> np.ndarray:
    k = np.arange(n + 1)
    pts = lo + (hi - lo) * k / n
    cell = (hi - lo) / n
    extra = []
    for end, sign, is_atom in ((lo, 1.0, lo_atom), (hi, -1.0, hi_atom)):
        if is_atom:
            floor = max(4.0 * np.spacing(abs(end)), 1e-300)
            d = np.logspace(np.log10(floor), np.log10(cell), EDGE_POINTS)
            extra.append(end + sign * d)
    pts = np.unique(np.concatenate([pts, *extra]))
    keep = np.ones(pts.size, bool)
    if lo_atom:
        keep &= pts > lo
    if hi_atom:
        keep &= pts < hi
    return pts[keep]


def _components_in_gap(params, lo, hi, grid):
    """Maximal subintervals of ``(lo, hi)`` where the admissibility conditions hold."""
    left_open = not math.isfinite(lo)
    right_open = not math.isfinite(hi)
    scan_lo, scan_hi = lo, hi
    margin = params.hull_margin
    if right_open:
        scan_hi = lo + margin
        while not in_admissible(params, scan_hi):
            margin *= 2
            scan_hi = lo + margin
            if margin > 1e12:
                raise SolverError("admissible set does not extend to +inf")
    if left_open:
        scan_lo = min(lo, hi - margin) if math.isfinite(lo) else hi - margin
        while not in_admissible(params, scan_lo):
            margin *= 2
            scan_lo = hi - margin
            if margin > 1e12:
                raise SolverError("admissible set does not extend to -inf")

    pts = _scan_points(scan_lo, scan_hi, not left_open, not right_open, grid)
    ok = np.asarray(in_admissible(params, pts))
    pred = lambda x: bool(in_admissible(params, x))

    comps = []
    i = 0
    n = pts.size
    while i < n:
        if not ok[i]:
            i += 1
            continue
        j = i
        while j + 1 < n and ok[j + 1]:
            j += 1
        if i == 0:
            a = -math.inf if left_open else _bisect_bool(pred, lo, pts[0])
        else:
            a = _bisect_bool(pred, pts[i - 1], pts[i])
        if j == n - 1:
            b = math.inf if right_open else _bisect_bool(pred, hi, pts[-1])
        else:
            b = _bisect_bool(pred, pts[j + 1], pts[j])
        comps.append((float(a), float(b)))
        i = j + 1
    return comps


def admissible_set(params: ModelParams, grid: int = SCAN_POINTS) -> list[Interval]:
    """Components of ``E`` as open intervals; infinite ends use ``+-inf``.

    Endpoints are returned on the admissible side of the transition.
    """
    comps: list[Interval] = []
    for lo, hi in gaps(params.nu, (-params.hull_margin, math.inf)):
        if lo == -params.hull_margin:
            lo = -math.inf
        comps.extend(_components_in_gap(params, lo, hi, grid))
    return comps


def _phi_at(params, x: float) -> float:
    # Phi(+-inf) = +-inf
    return x if not math.isfinite(x) else float(phi(params, x))


@dataclass(frozen=True)
class SupportProfile:
    """Admissible components, bulk support intervals and the gap <-> E matching."""

    admissible: tuple[Interval, ...]
    support: tuple[Interval, ...]
    gap_map: tuple[tuple[Interval, Interval], ...] = field(default=())

    def gap_index(self, x: float) -> int | None:
        for k, ((lo, hi), _) in enumerate(self.gap_map):
            if lo < x < hi:
                return k
        return None

    def in_support(self, x: float) -> bool:
        return any(a <= x <= b for a, b in self.support)

    def distance_to_support(self, x: float) -> float:
        return min(0.0 if a <= x <= b else min(abs(x - a), abs(x - b)) for a, b in self.support)

    @property
    def right_edge(self) -> float:
        return self.support[-1][1]

    def to_json(self) -> dict:
        enc = lambda iv: [None if not math.isfinite(v) else float(v) for v in iv]
        return {
            "admissible": [enc(iv) for iv in self.admissible],
            "support": [enc(iv) for iv in self.support],
            "gap_map": [{"gap": enc(g), "component": enc(e)} for g, e in self.gap_map],
        }

    @classmethod
    def from_json(cls, data: dict) -> "SupportProfile":
        def dec(iv):
            lo, hi = iv
            return (-math.inf if lo is None else float(lo), math.inf if hi is None else float(hi))

        return cls(
            tuple(dec(iv) for iv in data["admissible"]),
            tuple(dec(iv) for iv in data["support"]),
            tuple((dec(d["gap"]), dec(d["component"])) for d in data["gap_map"]),
        )


def support(params: ModelParams, grid: int = SCAN_POINTS) -> SupportProfile:
    """Support of ``mu`` as the complement in ``[0, inf)`` of ``Phi(E)``."""
    comps = admissible_set(params, grid)
    pairs = []
    for a, b in comps:
        img = (_phi_at(params, a), _phi_at(params, b))
        pairs.append((img, (a, b)))
    pairs.sort(key=lambda p: p[0][0])

    pieces: list[Interval] = []
    cursor = 0.0
    for (lo, hi), _ in pairs:
        if hi <= cursor:
            continue
        if lo > cursor:
            pieces.append((cursor, lo))
        cursor = max(cursor, hi)
    if math.isfinite(cursor):
        # only reachable if E misses a neighbourhood of +inf
        raise SolverError("support is unbounded above; admissible set scan failed")
    return SupportProfile(tuple(comps), tuple(pieces), tuple(pairs))


# --------------------------------------------------------------------------
# Stieltjes transform of mu off the real axis


def _fixed_point_map(params: ModelParams, g, z):
    u = 1.0 - params.s * g
    om = z * u**2 - params.sigma**2 * (1.0 - params.c) * u
    d = om[..., None] - params.nu.locations
    return u * (params.nu.weights / d).sum(axis=-1)


def _fixed_point_jac(params: ModelParams, g, z):
    """Derivative of ``g -> u g_nu(omega)`` with respect to ``g``."""
    s = params.s
    u = 1.0 - s * g
    om = z * u**2 - params.sigma**2 * (1.0 - params.c) * u
    d = om[..., None] - params.nu.locations
    gn = (params.nu.weights / d).sum(axis=-1)
    dgn = -(params.nu.weights / d**2).sum(axis=-1)
    dom = -s * (2.0 * z * u - params.sigma**2 * (1.0 - params.c))
    return -s * gn + u * dgn * dom


def omega_complex(params: ModelParams, z, g):
    """``z (1 - s g)^2 - sigma^2 (1 - c)(1 - s g)`` evaluated at complex ``z``."""
    u = 1.0 - params.s * np.asarray(g)
    return z * u**2 - params.sigma**2 * (1.0 - params.c) * u


def _damped(params, z, g, active, tol, n_iter, damping):
    for _ in range(n_iter):
        if not active.any():
            break
        za, ga = z[active], g[active]
        fg = _fixed_point_map(params, ga, za)
        res = np.abs(ga - fg)
        new = (1.0 - damping) * ga + damping * fg
        new = new.real - 1j * np.abs(new.imag)
        done = res < tol
        new[done] = ga[done]
        g[active] = new
        idx = np.flatnonzero(active)
        active[idx[done]] = False
    return g


def _newton(params, z, g, tol, n_iter=60):
    """Safeguarded Newton on ``g - F(g) = 0`` staying in ``{Im g < 0}``."""
    for _ in range(n_iter):
        f = g - _fixed_point_map(params, g, z)
        res = np.abs(f)
        if np.all(res < tol):
            break
        step = f / (1.0 - _fixed_point_jac(params, g, z))
        t = np.ones(g.shape)
        for _ in range(40):
            trial = g - t * step
            bad = trial.imag >= 0
            if not bad.any():
                new_res = np.abs(trial - _fixed_point_map(params, trial, z))
                bad = ~(new_res <= res) & (res >= tol)
            if not bad.any():
                break
            t = np.where(bad, 0.5 * t, t)
        g = np.where(res < tol, g, g - t * step)
    return g


def _solve(params, z, tol, max_iter, damping):
    z = np.asarray(z, dtype=complex)
    shape = z.shape
    z = z.ravel()
    g = 1.0 / z
    active = np.ones(z.size, bool)
    # plain damped iteration first; it contracts quickly away from the real axis
    g = _damped(params, z, g, active, tol, min(max_iter, 400), damping)

    if active.any():
        # continuation in Im z with Newton polishing; the damped map needs
        # O(1 / Im z) sweeps near the bulk
        idx = np.flatnonzero(active)
        zt = z[idx]
        eta_hi = np.maximum(zt.imag, 2.0)
        ladder = max(1, int(np.ceil(np.log(eta_hi.max() / zt.imag.min()) / np.log(1.5))))
        zs = zt.real + 1j * eta_hi
        gs = 1.0 / zs
        sub_active = np.ones(zs.size, bool)
        gs = _damped(params, zs, gs, sub_active, tol, 2000, damping)
        for k in range(1, ladder + 1):
            eta = np.maximum(eta_hi * (1.5 ** -k), zt.imag)
            gs = _newton(params, zt.real + 1j * eta, gs, tol)
        gs = _newton(params, zt, gs, tol)
        g[idx] = gs
        left = max_iter - 400
        if left > 0:
            still = np.abs(g - _fixed_point_map(params, g, z)) >= tol
            if still.any():
                g = _damped(params, z, g, still, tol, left, damping)

    res = np.abs(g - _fixed_point_map(params, g, z))
    return g.reshape(shape), res.reshape(shape)


def solve_g_mu(params: ModelParams, z, tol: float = 1e-12, max_iter: int = 100_000, damping: float = 0.5):
    """``g_mu(z)`` for ``Im z > 0`` (scalar or array)."""
    za = np.asarray(z, dtype=complex)
    if np.any(za.imag <= 0):
        raise DomainError("solve_g_mu needs Im z > 0; use conjugate symmetry below the axis")
    g, res = _solve(params, za, tol, max_iter, damping)
    if np.any(~(res < tol)):
        worst = float(np.nanmax(res))
        raise SolverError(f"fixed point did not converge (residual {worst:.3e})", residual=worst)
    return g if za.ndim else complex(g)


def density_grid(params: ModelParams, x_grid: Sequence[float], eta: float, tol: float = 1e-12) -> np.ndarray:
    """``-Im g_mu(x + i eta) / pi``; points where the solver fails are NaN."""
    if not eta > 0:
        raise DomainError("eta must be positive")
    x = np.asarray(x_grid, dtype=float)
    g, res = _solve(params, x + 1j * eta, tol, 100_000, 0.5)
    dens = -g.imag / np.pi
    dens[~(res < tol)] = np.nan
    return dens


# --------------------------------------------------------------------------
# Real-axis quantities on the gaps of the support


def _locate(profile: SupportProfile, x: np.ndarray) -> np.ndarray:
    idx = np.full(x.shape, -1)
    for k, ((lo, hi), _) in enumerate(profile.gap_map):
        idx[(x > lo) & (x < hi)] = k
    if np.any(idx < 0):
        bad = x[idx < 0]
        raise DomainError(f"points not inside a gap of the support: {bad[:5]}")
    return idx


def omega_on_gap(params: ModelParams, x, profile: SupportProfile | None = None):
    """Inverse of ``Phi`` on the matched admissible component, by bisection."""
    profile = profile or support(params)
    xa = np.atleast_1d(np.asarray(x, dtype=float))
    idx = _locate(profile, xa)
    lo = np.empty(xa.shape)
    hi = np.empty(xa.shape)
    for i, k in enumerate(idx):
        a, b = profile.gap_map[k][1]
        if not math.isfinite(a):
            step = 1.0
            a = min(xa[i], b) - step
            while phi(params, a) >= xa[i]:
                step *= 2
                a = min(xa[i], b) - step
        if not math.isfinite(b):
            step = 1.0
            b = max(xa[i], a) + step
            while phi(params, b) <= xa[i]:
                step *= 2
                b = max(xa[i], a) + step
        lo[i], hi[i] = a, b
    flo = phi(params, lo) - xa
    fhi = phi(params, hi) - xa
    if np.any(flo > 0) or np.any(fhi < 0):
        raise SolverError("bisection bracket failure: profile inconsistent with params")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if np.all((mid == lo) | (mid == hi)):
            break
        up = phi(params, mid) > xa
        hi = np.where(up, mid, hi)
        lo = np.where(up, lo, mid)
    # pick the bracket end with the smaller residual
    w = np.where(np.abs(phi(params, lo) - xa) <= np.abs(phi(params, hi) - xa), lo, hi)
    return w if np.ndim(x) else float(w[0])


def g_mu_on_gap(params: ModelParams, x, profile: SupportProfile | None = None):
    """Real ``g_mu(x)`` on a gap: ``g_nu(w) / (1 + s g_nu(w))`` with ``w = omega(x)``."""
    w = omega_on_gap(params, x, profile)
    gn = stieltjes(params.nu, w)
    return gn / (1.0 + params.s * gn)


def omega_direct(params: ModelParams, x, g=None, profile: SupportProfile | None = None):
    """``x (1 - s g)^2 - sigma^2 (1 - c)(1 - s g)`` with real ``g = g_mu(x)``."""
    if g is None:
        g = g_mu_on_gap(params, x, profile)
    u = 1.0 - params.s * np.asarray(g, dtype=float)
    out = np.asarray(x, dtype=float) * u**2 - params.sigma**2 * (1.0 - params.c) * u
    return out if np.ndim(out) else float(out)
