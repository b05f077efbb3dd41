"""
C^2 composite function used to attenuate adaptation near the origin.

``kappa(z)`` is ``rho * z`` on ``[0, a]``, the identity on ``[b, inf)`` and a
quintic ``sum_k psi_k z^k`` on ``(a, b)`` whose six coefficients match value,
slope and curvature of both neighbours at ``a`` and ``b``.
"""

from dataclasses import dataclass

import numpy as np

from .errors import InvalidInterval, InvalidRho, NegativeArgument, NonMonotone, SingularMatrix
from .linalg import solve_linear

GRID_POINTS = 1000


@dataclass(frozen=True)
class CompositeFn:
    a: float
    b: float
    rho: float
    psi: tuple
    min_slope: float
    max_slope: float


@dataclass(frozen=True)
class IdentityFn:
    """``kappa(z) = z`` everywhere; the unattenuated special case."""

    rho: float = 1.0

    @property
    def min_slope(self):
        return 1.0

    @property
    def max_slope(self):
        return 1.0


def boundary_system(a, b, rho):
    """Return the 6x6 matrix and right-hand side fixing the quintic."""
    def rows(z):
        return [
            [1.0, z, z**2, z**3, z**4, z**5],
            [0.0, 1.0, 2 * z, 3 * z**2, 4 * z**3, 5 * z**4],
            [0.0, 0.0, 2.0, 6 * z, 12 * z**2, 20 * z**3],
        ]

    M = np.array(rows(a) + rows(b))
    rhs = np.array([rho * a, rho, 0.0, b, 1.0, 0.0])
    return M, rhs


def _horner(psi, z):
    # value, first and second derivative of sum psi_k z^k
    p = dp = ddp = 0.0
    for c in reversed(psi):
        ddp = ddp * z + 2.0 * dp
        dp = dp * z + p
        p = p * z + c
    return p, dp, ddp


def transition_eval(psi, z):
    """Evaluate the quintic and its first two derivatives at `z`."""
    return _horner(psi, float(z))


def transition_slope_range(psi, a, b):
    """Exact min and max of the quintic's slope over ``[a, b]``.

    Candidates are the endpoints and the real roots of the second derivative.
    """
    # kappa_c'' coefficients, highest power first
    dd = [k * (k - 1) * psi[k] for k in range(5, 1, -1)]
    cands = [a, b]
    for r in np.roots(dd) if any(dd) else []:
        if abs(r.imag) < 1e-9 and a < r.real < b:
            cands.append(float(r.real))
    slopes = [_horner(psi, z)[1] for z in cands]
    return min(slopes), max(slopes)


def build_composite(a, b, rho):
    """
    Build the composite function for breakpoints ``0 < a < b`` and lower
    slope ``0 <= rho < 1``.

    Raises
    ------
    InvalidInterval, InvalidRho
        On out-of-range parameters.
    NonMonotone
        If the resulting function fails the slope or sign check on a
        1000-point grid over ``[0, 2b]``.
    """
    a = float(a)
    b = float(b)
    rho = float(rho)
    if not (np.isfinite(a) and np.isfinite(b)) or a <= 0.0 or a >= b:
        raise InvalidInterval(f"need 0 < a < b, got a={a}, b={b}")
    if not np.isfinite(rho) or rho < 0.0 or rho >= 1.0:
        raise InvalidRho(f"need 0 <= rho < 1, got {rho}")

    M, rhs = boundary_system(a, b, rho)
    try:
        psi = tuple(float(c) for c in solve_linear(M, rhs))
    except SingularMatrix:
        raise InvalidInterval(f"transition (a={a}, b={b}) is too narrow to solve for the quintic") from None
    lo, hi = transition_slope_range(psi, a, b)
    # the endpoint slopes are rho and 1 by construction; drop rounding noise
    lo = rho if abs(lo - rho) < 1e-9 else lo
    hi = 1.0 if abs(hi - 1.0) < 1e-9 else hi
    f = CompositeFn(a, b, rho, psi, min(rho, lo), max(1.0, hi))
    check_monotone(f)
    return f


def check_monotone(f):
    """
    Raise :class:`NonMonotone` unless ``kappa' > 0`` (``>= 0`` when
    ``rho = 0``) and ``kappa >= 0`` on a 1000-point grid over ``[0, 2b]``.
    """
    z = np.linspace(0.0, 2.0 * f.b, GRID_POINTS)
    vals = np.array([kappa_eval(f, zi) for zi in z])
    slopes = vals[:, 1]
    if f.rho > 0.0:
        ok = np.all(slopes > 0.0)
    else:
        ok = np.all(slopes >= -1e-12)
    if not ok:
        raise NonMonotone(f"kappa' is not positive on [0, {2 * f.b}] for a={f.a}, b={f.b}, rho={f.rho}")
    if np.any(vals[:, 0] < -1e-12):
        raise NonMonotone(f"kappa takes negative values for a={f.a}, b={f.b}, rho={f.rho}")


def kappa_eval(f, z):
    """
    Return ``(kappa(z), kappa'(z), kappa''(z))``.

    `z` is a quadratic form ``e^T P e`` and therefore must be nonnegative.
    """
    z = float(z)
    if z < 0.0:
        raise NegativeArgument(f"kappa is defined for z >= 0, got {z}")
    if isinstance(f, IdentityFn) or z >= f.b:
        return z, 1.0, 0.0
    if z <= f.a:
        return f.rho * z, f.rho, 0.0
    return _horner(f.psi, z)


def kappa_prime(f, z):
    return kappa_eval(f, z)[1]


def sample(f, z_max=None, num=401):
    """Tabulate ``(z, kappa, kappa', kappa'')`` on ``[0, z_max]``."""
    if z_max is None:
        z_max = 2.0 * f.b if isinstance(f, CompositeFn) else 1.0
    z = np.linspace(0.0, z_max, num)
    vals = np.array([kappa_eval(f, zi) for zi in z])
    return np.column_stack([z, vals])
