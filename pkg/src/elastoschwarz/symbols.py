"""Fourier convergence factors of classical and optimized Schwarz methods.

Two half-planes ``(-inf, delta) x R`` and ``(0, inf) x R`` are coupled either by
Dirichlet traces (classical Schwarz) or by traction plus a 2x2 matrix symbol
(optimized Schwarz).  Every routine here evaluates closed-form expressions of
the per-mode iteration matrix as a function of the tangential wavenumber ``k``.

All array-valued helpers accept a 1-D array of wavenumbers; the public scalar
functions wrap them and return :class:`RhoResult`.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.optimize import bisect

from .errors import (
    DomainError,
    RootNotFoundError,
    SingularPointError,
    SingularTransmissionError,
    UsageError,
)

SINGULAR_RTOL = 1e-12
VARIANTS = ("classical", "taylor0", "taylor2", "optimal", "custom")


@dataclass(frozen=True)
class ElasticMedium:
    """Isotropic elastic material given by density and Lamé parameters, with ``lambda > 0``."""

    rho: float
    lam: float
    mu: float

    def __post_init__(self):
        _check_moduli(self.rho, self.lam, self.mu)
        if not self.lam > 0:
            raise DomainError(f"invalid medium lambda={self.lam}: need lambda > 0 (cp^2 > 2 cs^2)")

    @classmethod
    def from_speeds(cls, cp, cs, rho=1.0):
        """Build the medium with P/S speeds ``cp``, ``cs`` and density ``rho``."""
        if not (cp > 0 and cs > 0 and rho > 0):
            raise DomainError("wave speeds and density must be positive")
        return cls(rho=rho, lam=rho * (cp**2 - 2 * cs**2), mu=rho * cs**2)

    @property
    def cp(self):
        return math.sqrt((self.lam + 2 * self.mu) / self.rho)

    @property
    def cs(self):
        return math.sqrt(self.mu / self.rho)


def wave_speeds(rho, lam, mu):
    """Return ``(cp, cs)`` for density ``rho`` and Lamé parameters ``lam``, ``mu``."""
    _check_moduli(rho, lam, mu)
    return math.sqrt((lam + 2 * mu) / rho), math.sqrt(mu / rho)


def _check_moduli(rho, lam, mu):
    if not (rho > 0 and mu > 0 and lam + 2 * mu > 0):
        raise DomainError(f"invalid medium rho={rho}, lambda={lam}, mu={mu}: "
                          "need rho > 0, mu > 0, lambda + 2 mu > 0")


@dataclass(frozen=True)
class ModeRoots:
    lambda1: complex  # S branch, sqrt(k^2 - omega^2/cs^2)
    lambda2: complex  # P branch, sqrt(k^2 - omega^2/cp^2)
    k: float
    omega: float


@dataclass(frozen=True)
class RhoResult:
    """Eigenvalues ``r_plus``, ``r_minus`` and contraction estimate at one ``k``.

    ``exponent`` records how ``rho`` is obtained from the eigenvalues:
    ``rho = max(|r_plus|, |r_minus|) ** exponent``.
    """

    k: float
    r_plus: complex
    r_minus: complex
    rho: float
    exponent: float = 1.0


class TransmissionSymbol:
    """Fourier symbol of a 2x2 interface operator.

    ``entries`` has shape ``(2, 2)`` for a single wavenumber or ``(n, 2, 2)``
    for a batch.
    """

    def __init__(self, entries):
        entries = np.asarray(entries, dtype=complex)
        if entries.shape[-2:] != (2, 2):
            raise UsageError(f"symbol entries must end in shape (2, 2), got {entries.shape}")
        if not np.all(np.isfinite(entries)):
            raise DomainError("transmission symbol has non-finite entries")
        self.entries = entries

    def __getitem__(self, idx):
        return self.entries[..., idx[0], idx[1]]

    def mirrored(self):
        """Symbol for the opposite interface: off-diagonal entries negated."""
        e = self.entries.copy()
        e[..., 0, 1] *= -1
        e[..., 1, 0] *= -1
        return TransmissionSymbol(e)

    def at(self, i):
        """Single-wavenumber symbol from a batch."""
        return TransmissionSymbol(self.entries[i])

    def __repr__(self):
        return f"TransmissionSymbol({self.entries!r})"


def _branch_sqrt(q):
    # real nonnegative root for q >= 0, +i sqrt(-q) otherwise
    q = np.asarray(q, dtype=float)
    return np.where(q >= 0, np.sqrt(np.abs(q)) + 0j, 1j * np.sqrt(np.abs(q)))


def _roots(k, omega, medium):
    k = np.asarray(k, dtype=float)
    lam1 = _branch_sqrt(k * k - omega**2 / medium.cs**2)
    lam2 = _branch_sqrt(k * k - omega**2 / medium.cp**2)
    return lam1, lam2


def mode_roots(k, omega, medium):
    """Decay rates of the S (``lambda1``) and P (``lambda2``) branches at ``k``."""
    if k < 0 or omega <= 0:
        raise DomainError("mode_roots needs k >= 0 and omega > 0")
    lam1, lam2 = _roots(k, omega, medium)
    return ModeRoots(complex(lam1), complex(lam2), float(k), float(omega))


def _eigs_from_xy(X, Y):
    s = np.sqrt(X * X * (X * X + 4 * Y))
    base = X * X / 2 + Y
    return base + s / 2, base - s / 2


def _check_k(k, positive):
    k = np.atleast_1d(np.asarray(k, dtype=float))
    if positive and np.any(k <= 0):
        raise DomainError("wavenumber must be positive (symbols carry 1/k terms)")
    if np.any(k < 0):
        raise DomainError("wavenumber must be nonnegative")
    return k


# -- classical Schwarz -------------------------------------------------------

def classical_eigs(k, omega, medium, delta):
    """Vectorized eigenvalues of the classical two-step iteration matrix.

    Returns ``(r_plus, r_minus, singular)``; entries flagged in ``singular``
    are NaN.
    """
    if delta < 0:
        raise DomainError("overlap must be nonnegative")
    k = _check_k(k, positive=False)
    lam1, lam2 = _roots(k, omega, medium)
    den = k * k - lam1 * lam2
    singular = np.abs(den) < SINGULAR_RTOL * np.maximum(k * k, np.abs(lam1 * lam2))
    with np.errstate(divide="ignore", invalid="ignore"):
        X = (k * k + lam1 * lam2) / den * (np.exp(-lam1 * delta) - np.exp(-lam2 * delta))
        E = np.exp(-delta * (lam1 + lam2))
        rp, rm = _eigs_from_xy(X, E)
    ks, kp = omega / medium.cs, omega / medium.cp
    at_s = np.isclose(k, ks, rtol=1e-14, atol=0)
    at_p = np.isclose(k, kp, rtol=1e-14, atol=0)
    rp = np.where(at_s | at_p, 1.0 + 0j, rp)
    rm = np.where(at_s, np.exp(-2 * lam2 * delta), rm)
    rm = np.where(at_p, np.exp(-2 * lam1 * delta), rm)
    rp = np.where(singular, np.nan, rp)
    rm = np.where(singular, np.nan, rm)
    return rp, rm, singular


def rho_classical(k, omega, medium, delta):
    """Convergence factor of the overlapping classical Schwarz method."""
    rp, rm, singular = classical_eigs([k], omega, medium, delta)
    if singular[0]:
        raise SingularPointError(f"k={k} is a pole of the classical factor", k=k)
    rp, rm = complex(rp[0]), complex(rm[0])
    return RhoResult(float(k), rp, rm, max(abs(rp), abs(rm)), 1.0)


# -- transmission symbols ----------------------------------------------------

def optimal_symbols(k, omega, medium):
    """Transparent interface symbols for which the method converges in two steps.

    Returns ``(S1hat, S2hat)``; ``S2hat`` is ``S1hat`` with the off-diagonal
    entries negated.
    """
    scalar = np.ndim(k) == 0
    k = _check_k(k, positive=False)
    lam1, lam2 = _roots(k, omega, medium)
    q = k * k - lam1 * lam2
    if np.any(np.abs(q) < SINGULAR_RTOL * np.maximum(k * k, np.abs(lam1 * lam2))):
        raise SingularPointError("k^2 - lambda1 lambda2 vanishes")
    rho, cs = medium.rho, medium.cs
    w2 = omega**2
    off = 1j * k * rho * (2 * cs**2 - w2 / q)
    e = np.empty(k.shape + (2, 2), dtype=complex)
    e[:, 0, 0] = rho * lam1 * w2 / q
    e[:, 0, 1] = off
    e[:, 1, 0] = -off
    e[:, 1, 1] = rho * lam2 * w2 / q
    S1 = TransmissionSymbol(e[0] if scalar else e)
    return S1, S1.mirrored()


def taylor_symbols(order, k, omega, medium):
    """Low-frequency (Taylor) approximation of the optimal symbols.

    ``order=0`` gives ``i rho omega diag(cp, cs)``; ``order=2`` adds the
    ``k`` and ``k**2`` corrections.
    """
    if order not in (0, 2):
        raise UsageError(f"Taylor order must be 0 or 2, got {order!r}")
    if omega <= 0:
        raise DomainError("omega must be positive")
    scalar = np.ndim(k) == 0
    k = _check_k(k, positive=False)
    rho, cp, cs = medium.rho, medium.cp, medium.cs
    e = np.zeros(k.shape + (2, 2), dtype=complex)
    e[:, 0, 0] = 1j * rho * omega * cp
    e[:, 1, 1] = 1j * rho * omega * cs
    if order == 2:
        e[:, 0, 0] += 1j * rho * cp**2 / (2 * omega) * (cp - 2 * cs) * k**2
        e[:, 1, 1] += 1j * rho * cs**2 / (2 * omega) * (cs - 2 * cp) * k**2
        e[:, 0, 1] = -1j * rho * (cp - 2 * cs) * cs * k
        e[:, 1, 0] = 1j * rho * (cp - 2 * cs) * cs * k
    S1 = TransmissionSymbol(e[0] if scalar else e)
    return S1, S1.mirrored()


# -- general optimized Schwarz -----------------------------------------------

def transmission_matrices(k, omega, medium, S2hat):
    """Matrices ``B1``, ``B2`` with ``B = B2^-1 B1``, built from ``S2hat`` only.

    Rows are the two traction-plus-symbol components at the interface ``x=0``;
    columns are the S and P modes, scaled by ``1/(ik)``.
    """
    k = np.atleast_1d(np.asarray(k, dtype=float))
    S = np.broadcast_to(S2hat.entries, k.shape + (2, 2))
    lam1, lam2 = _roots(k, omega, medium)
    rho, mu = medium.rho, medium.mu
    w2 = rho * omega**2
    s11, s12, s21, s22 = S[:, 0, 0], S[:, 0, 1], S[:, 1, 0], S[:, 1, 1]
    B1 = np.empty(k.shape + (2, 2), dtype=complex)
    B2 = np.empty_like(B1)
    B1[:, 0, 0] = s11 - 2 * mu * lam1 + 1j * lam1 * s12 / k
    B1[:, 0, 1] = s12 + 1j * (2 * k * k * mu - lam2 * s11 - w2) / k
    B1[:, 1, 0] = s21 - 1j * (2 * k * k * mu - lam1 * s22 - w2) / k
    B1[:, 1, 1] = s22 - 2 * mu * lam2 - 1j * lam2 * s21 / k
    B2[:, 0, 0] = s11 + 2 * mu * lam1 - 1j * lam1 * s12 / k
    B2[:, 0, 1] = s12 + 1j * (2 * k * k * mu + lam2 * s11 - w2) / k
    B2[:, 1, 0] = s21 - 1j * (2 * k * k * mu + lam1 * s22 - w2) / k
    B2[:, 1, 1] = s22 + 2 * mu * lam2 + 1j * lam2 * s21 / k
    return B1, B2


def _exp_gap(lam1, lam2, a1, a2, delta):
    """``exp(-lam1 delta) - exp(-lam2 delta)`` without cancellation (``lam1 - lam2 = (a2 - a1)/(lam1 + lam2)``)."""
    return np.exp(-lam2 * delta) * np.expm1(-(a2 - a1) / (lam1 + lam2) * delta)


def general_eigs(k, omega, medium, delta, S2hat):
    """Vectorized eigenvalues for arbitrary ``S2hat``; singular entries are NaN.

    The half-step map is ``E B J`` with ``B = B2^-1 B1``, ``E`` the overlap
    decay and ``J = diag(1, -1)``; its eigenvalue sum and product give ``X``
    and ``-Y``.  For ``k >> omega/cs`` the S and P columns of ``B1``, ``B2``
    become nearly parallel, so the pencil ``(B1 J E, B2)`` is evaluated in the
    basis ``(P, S -+ i P)`` where the second column is formed analytically.
    """
    if delta < 0:
        raise DomainError("overlap must be nonnegative")
    k = _check_k(k, positive=True)
    B1, B2 = transmission_matrices(k, omega, medium, S2hat)
    S = np.broadcast_to(S2hat.entries, k.shape + (2, 2))
    s11, s12, s21, s22 = S[:, 0, 0], S[:, 0, 1], S[:, 1, 0], S[:, 1, 1]
    lam1, lam2 = _roots(k, omega, medium)
    mu, w2 = medium.mu, medium.rho * omega**2
    a1, a2 = omega**2 / medium.cs**2, omega**2 / medium.cp**2
    d1, d2 = a1 / (k + lam1), a2 / (k + lam2)  # k - lambda_j
    # S column minus (B1) / plus (B2) i times the P column
    D1 = np.stack([s11 * d2 / k + 2 * mu * d1 - w2 / k - 1j * s12 * d1 / k,
                   s21 * d2 / k - 2j * mu * d2 - 1j * s22 * d1 / k + 1j * w2 / k], axis=-1)
    D2 = np.stack([s11 * d2 / k - 2 * mu * d1 + w2 / k + 1j * s12 * d1 / k,
                   s21 * d2 / k - 2j * mu * d2 + 1j * s22 * d1 / k + 1j * w2 / k], axis=-1)
    P1, P2 = B1[:, :, 1], B2[:, :, 1]
    e1, e2 = np.exp(-lam1 * delta), np.exp(-lam2 * delta)
    L0 = -e2[:, None] * P1
    L1 = e1[:, None] * D1 + 1j * _exp_gap(lam1, lam2, a1, a2, delta)[:, None] * P1

    def cross(u, v):
        return u[:, 0] * v[:, 1] - u[:, 1] * v[:, 0]

    det2 = -cross(P2, D2)  # det B2
    norm2 = np.max(np.abs(B2), axis=(1, 2))
    singular = np.abs(det2) < SINGULAR_RTOL * norm2**2
    safe = np.where(singular, 1.0, det2)
    X = (cross(L0, D2) + cross(P2, L1)) / safe
    Y = cross(L0, L1) / safe
    rp, rm = _eigs_from_xy(X, Y)
    rp = np.where(singular, np.nan, rp)
    rm = np.where(singular, np.nan, rm)
    return rp, rm, singular


def _as_result(k, rp, rm):
    rp, rm = complex(rp), complex(rm)
    return RhoResult(float(k), rp, rm, math.sqrt(max(abs(rp), abs(rm))), 0.5)


def rho_general(k, omega, medium, delta, S2hat):
    """Convergence factor of the optimized Schwarz method with symbol ``S2hat``.

    ``S2hat`` must belong to a pair obeying the mirror relation
    ``S2 = S1`` with negated off-diagonals.
    """
    if k <= 0:
        raise DomainError("rho_general needs k > 0")
    rp, rm, singular = general_eigs([k], omega, medium, delta, S2hat)
    if singular[0]:
        raise SingularTransmissionError(f"B2 is singular at k={k}", k=k)
    return _as_result(k, rp[0], rm[0])


def taylor_closed_eigs(k, omega, medium, delta):
    """Vectorized eigenvalues for zeroth-order Taylor conditions, explicit form."""
    if delta < 0:
        raise DomainError("overlap must be nonnegative")
    k = _check_k(k, positive=True)
    cp, cs = medium.cp, medium.cs
    lam1, lam2 = _roots(k, omega, medium)
    a1, a2 = omega**2 / cs**2, omega**2 / cp**2
    w3 = omega**3
    ratio = cp / cs
    Z1 = cs**3 * (k * k + lam1 * lam1) ** 2 + omega**2 * cp * k * k
    Z2 = (4 * cs**3 * k * k + cp * omega**2) * lam1 * lam2
    # Z2 - Z1 cancels to leading order when both roots are real
    both_real = k * k >= a1
    with np.errstate(divide="ignore", invalid="ignore"):
        gap = np.where(both_real, (a1 * a2 - k * k * (a1 + a2)) / (lam1 * lam2 + k * k), lam1 * lam2 - k * k)
    z21 = np.where(both_real, 4 * cs**3 * k * k * gap + cs**3 * (4 * k * k * a1 - a1 * a1) + cp * omega**2 * gap,
                   Z2 - Z1)
    W = w3 * (lam1 - lam2 * ratio)
    V = w3 * (lam1 + lam2 * ratio)
    D = z21 + 1j * V
    b22 = (-Z1 - Z2 + 1j * W) / D
    # b11 - b22 and det B = D(-lambda) / D(lambda) in cancellation-free form
    X = np.exp(-lam1 * delta) * (-2j * W / D) + _exp_gap(lam1, lam2, a1, a2, delta) * b22
    Y = (z21 - 1j * V) / D * np.exp(-(lam1 + lam2) * delta)

    # limits at k = omega/cp and k = omega/cs
    s = math.sqrt(cp**2 - cs**2)
    q = (cp + cs) * (cp**3 - 4 * cp * cs**2 + 4 * cs**3)
    at_p = np.isclose(k, omega / cp, rtol=1e-14, atol=0)
    at_s = np.isclose(k, omega / cs, rtol=1e-14, atol=0)
    special = at_p | at_s
    if special.any():
        B = np.zeros(k.shape + (2, 2), dtype=complex)
        B[at_p] = [[(q - s * cp**3) / (q + s * cp**3), 0.0], [0.0, 1.0]]
        B[at_s] = [[1.0, 0.0], [0.0, (-1j * s - (cp + cs)) / (1j * s - (cp + cs))]]
        e1, e2 = np.exp(-lam1 * delta), np.exp(-lam2 * delta)
        X = np.where(special, e1 * B[:, 0, 0] - e2 * B[:, 1, 1], X)
        Y = np.where(special, (B[:, 0, 0] * B[:, 1, 1] - B[:, 0, 1] * B[:, 1, 0]) * e1 * e2, Y)
    return _eigs_from_xy(X, Y)


def rho_taylor_closed(k, omega, medium, delta):
    """Explicit zeroth-order Taylor factor; cross-check for :func:`rho_general`."""
    if k <= 0:
        raise DomainError("rho_taylor_closed needs k > 0")
    rp, rm = taylor_closed_eigs([k], omega, medium, delta)
    return _as_result(k, rp[0], rm[0])


def rho_values(k, omega, medium, delta, variant="taylor0", S2hat=None):
    """Vectorized ``rho`` for a variant; NaN where the factor is singular."""
    k = np.atleast_1d(np.asarray(k, dtype=float))
    if variant == "classical":
        rp, rm, _ = classical_eigs(k, omega, medium, delta)
        return np.maximum(np.abs(rp), np.abs(rm))
    if variant == "taylor0":
        S2 = taylor_symbols(0, k, omega, medium)[1]
    elif variant == "taylor2":
        S2 = taylor_symbols(2, k, omega, medium)[1]
    elif variant == "optimal":
        S2 = optimal_symbols(k, omega, medium)[1]
    elif variant == "custom":
        if S2hat is None:
            raise UsageError("custom variant needs an S2hat symbol")
        S2 = S2hat
    else:
        raise UsageError(f"unknown variant {variant!r}")
    rp, rm, _ = general_eigs(k, omega, medium, delta, S2)
    return np.sqrt(np.maximum(np.abs(rp), np.abs(rm)))


# -- overlap threshold -------------------------------------------------------

def _require_delta_star_domain(medium, omega):
    if omega <= 0:
        raise DomainError("omega must be positive")
    if not medium.cp**2 > 2 * medium.cs**2:
        raise DomainError("critical overlap requires cp^2 > 2 cs^2 (lambda > 0)")


def _alpha_equation(alpha, cp, cs):
    # alpha cp^2 (cp cosh a + cs) - (cp^3 + 3 cp^2 cs - 4 cs^3) sinh a, scaled by 2 e^-a
    ea = math.exp(-alpha)
    e2a = ea * ea
    return alpha * cp**2 * (cp * (1 + e2a) + 2 * cs * ea) - (
        cp**3 + 3 * cp**2 * cs - 4 * cs**3
    ) * (1 - e2a)


def critical_alpha(medium, xtol=1e-12, alpha_max=1e3):
    """Positive root of the overlap-threshold equation (independent of omega)."""
    _require_delta_star_domain(medium, 1.0)
    cp, cs = medium.cp, medium.cs
    lo, hi = 1e-6, 1.0
    f_lo = _alpha_equation(lo, cp, cs)
    while _alpha_equation(hi, cp, cs) * f_lo > 0:
        lo, hi = hi, hi * 2.0
        if hi > alpha_max:
            raise RootNotFoundError(f"no sign change of the alpha equation below {alpha_max}")
    return bisect(_alpha_equation, lo, hi, args=(cp, cs), xtol=xtol, rtol=4 * np.finfo(float).eps)


def delta_star(medium, omega):
    """Overlap above which zeroth-order Taylor Schwarz converges for all but two modes."""
    _require_delta_star_domain(medium, omega)
    cp, cs = medium.cp, medium.cs
    a = critical_alpha(medium)
    pref = cs * math.sqrt(cp**2 - cs**2) * (cp + 2 * cs) ** 2 / (cp * omega * (cs + cp))
    return pref * math.sinh(a) / (cp * math.cosh(a) + cs)


def find_kstar(medium, omega, delta, k_max=None, xtol=1e-8):
    """Upper end ``k*`` of the divergence interval ``(omega/cs, k*)``.

    Returns ``None`` if ``rho`` never exceeds one right of ``omega/cs``.
    """
    if delta <= 0:
        raise DomainError("find_kstar needs a positive overlap")
    ks = omega / medium.cs
    k_max = 5 * ks if k_max is None else k_max
    fine = ks * (1 + np.logspace(-10, -2, 200))
    grid = np.unique(np.concatenate([fine, np.linspace(ks, k_max, 2001)[1:]]))
    rho = rho_values(grid, omega, medium, delta)
    while rho[-1] > 1 and k_max < 1e4 * ks:
        k_max *= 2
        grid = np.unique(np.concatenate([grid, np.linspace(grid[-1], k_max, 2001)[1:]]))
        rho = rho_values(grid, omega, medium, delta)
    excess = np.nan_to_num(rho - 1.0, nan=-np.inf)
    if excess.max() <= 1e-12:
        return None
    i = int(np.argmax(excess))
    below = np.nonzero(excess[i:] < 0)[0]
    if below.size == 0:
        raise RootNotFoundError("rho stays above one on the whole scan")
    j = i + int(below[0])
    f = lambda kk: float(rho_values([kk], omega, medium, delta)[0] - 1.0)
    return bisect(f, grid[j - 1], grid[j], xtol=xtol)


# -- scans -------------------------------------------------------------------

@dataclass
class ScanTable:
    variant: str
    delta: float
    rows: list = field(default_factory=list)
    skipped: list = field(default_factory=list)  # (k, reason)

    def rho(self):
        return np.array([r.rho for r in self.rows])

    def k(self):
        return np.array([r.k for r in self.rows])


def scan_rho(variant, k_grid, omega, medium, delta, S2hat=None):
    """Evaluate the factor of ``variant`` on ``k_grid``, skipping singular points."""
    if variant not in VARIANTS:
        raise UsageError(f"unknown variant {variant!r}")
    k_grid = np.asarray(k_grid, dtype=float)
    if k_grid.ndim != 1 or k_grid.size == 0:
        raise UsageError("k_grid must be a nonempty 1-D array")
    if np.any(np.diff(k_grid) <= 0):
        raise UsageError("k_grid must be strictly increasing")
    table = ScanTable(variant, float(delta))
    keep = np.ones(k_grid.size, dtype=bool)
    if variant != "classical":
        for kk in k_grid[k_grid <= 0]:
            table.skipped.append((float(kk), "k<=0 outside symbol domain"))
        keep &= k_grid > 0
    kk = k_grid[keep]
    if kk.size:
        if variant == "classical":
            rp, rm, sing = classical_eigs(kk, omega, medium, delta)
            exponent = 1.0
        else:
            if variant == "custom":
                if S2hat is None:
                    raise UsageError("custom variant needs an S2hat symbol")
                S2 = S2hat
            elif variant == "optimal":
                lam1, lam2 = _roots(kk, omega, medium)
                q = kk * kk - lam1 * lam2
                bad = np.abs(q) < SINGULAR_RTOL * np.maximum(kk * kk, np.abs(lam1 * lam2))
                for b in kk[bad]:
                    table.skipped.append((float(b), "k^2 = lambda1 lambda2"))
                kk = kk[~bad]
                S2 = optimal_symbols(kk, omega, medium)[1]
            else:
                S2 = taylor_symbols(0 if variant == "taylor0" else 2, kk, omega, medium)[1]
            rp, rm, sing = general_eigs(kk, omega, medium, delta, S2)
            exponent = 0.5
        for i, k in enumerate(kk):
            if sing[i]:
                table.skipped.append((float(k), "singular transmission operator"))
                continue
            mag = max(abs(rp[i]), abs(rm[i]))
            table.rows.append(RhoResult(float(k), complex(rp[i]), complex(rm[i]), mag**exponent, exponent))
    table.skipped.sort()
    if not table.rows:
        raise UsageError("no wavenumbers left after excluding singular points")
    return table


def _g17(x):
    return format(float(x), ".17g")


def write_scan_csv(table, path):
    """Write ``table`` as CSV plus a ``<name>.skipped.csv`` sidecar; return both paths."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["k", "re_rplus", "im_rplus", "re_rminus", "im_rminus", "rho"])
        for r in table.rows:
            w.writerow([_g17(r.k), _g17(r.r_plus.real), _g17(r.r_plus.imag),
                        _g17(r.r_minus.real), _g17(r.r_minus.imag), _g17(r.rho)])
    side = path.with_name(path.stem + ".skipped.csv")
    with side.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["k", "reason"])
        for k, reason in table.skipped:
            w.writerow([_g17(k), reason])
    return path, side


def max_rho_above_ks(medium, omega, delta, k_max=None, spacing=1e-3):
    """Largest zeroth-order Taylor factor on ``(omega/cs, k_max]``.

    The grid combines a uniform step ``spacing`` with geometric refinement next
    to ``omega/cs``, where the divergence bump sits for overlaps near the
    threshold.  Returns ``(k_at_max, rho_max)``.
    """
    ks = omega / medium.cs
    k_max = 100 * ks if k_max is None else k_max
    n = int(np.ceil((k_max - ks) / spacing))
    fine = ks * (1 + np.logspace(-10, -2, 400))
    grid = np.unique(np.concatenate([fine, ks + spacing * np.arange(1, n + 1)]))
    grid = grid[(grid > ks) & (grid <= k_max)]
    rho = np.nan_to_num(rho_values(grid, omega, medium, delta), nan=-np.inf)
    i = int(np.argmax(rho))
    return float(grid[i]), float(rho[i])
