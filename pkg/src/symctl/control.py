"""
Control laws and parameter-adjustment right-hand sides.

Shapes follow the usual state-space conventions: ``x, e`` are ``(n,)``,
``u`` signals are ``(m,)``, the regressor ``sigma`` is ``(s+m,)``, the weight
estimate ``W_hat`` is ``(s+m, m)`` and the effectiveness estimate
``Lambda_hat`` is ``(m, m)``. Every function here is pure; the integrator in
:mod:`symctl.sim` owns the mutable state.

The parametric laws are the nonparametric ones with their leakage switched
off, so each formula exists exactly once.
"""

import dataclasses
import enum
from dataclasses import dataclass

import numpy as np

from .composite import CompositeFn, IdentityFn, kappa_prime
from .errors import ValidationError
from .linalg import as_matrix, is_hurwitz, is_positive_definite


class Variant(str, enum.Enum):
    NOMINAL = "nominal"
    FIXED_GAIN = "fixed_gain"
    STANDARD_ADAPTIVE = "standard_adaptive"
    STANDARD_ADAPTIVE_LEAKAGE = "standard_adaptive_leakage"
    SYMBIOTIC_PARAMETRIC = "symbiotic_parametric"
    SYMBIOTIC_NONPARAMETRIC = "symbiotic_nonparametric"

    @property
    def uses_fixed_gain(self):
        return self in (Variant.FIXED_GAIN, Variant.SYMBIOTIC_PARAMETRIC, Variant.SYMBIOTIC_NONPARAMETRIC)

    @property
    def uses_adaptation(self):
        return self in (
            Variant.STANDARD_ADAPTIVE,
            Variant.STANDARD_ADAPTIVE_LEAKAGE,
            Variant.SYMBIOTIC_PARAMETRIC,
            Variant.SYMBIOTIC_NONPARAMETRIC,
        )

    @property
    def is_symbiotic(self):
        return self in (Variant.SYMBIOTIC_PARAMETRIC, Variant.SYMBIOTIC_NONPARAMETRIC)


@dataclass(frozen=True)
class Gains:
    K1: np.ndarray
    K2: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "K1", as_matrix(self.K1, "K1"))
        object.__setattr__(self, "K2", as_matrix(self.K2, "K2"))
        if self.K1.shape[0] != self.K2.shape[0]:
            raise ValidationError("K1 and K2 must have the same number of rows")

    def closed_loop(self, A, B):
        """Return ``(A_n, B_n) = (A - B K1, B K2)``."""
        A = np.asarray(A, dtype=float)
        B = np.asarray(B, dtype=float)
        if self.K1.shape != (B.shape[1], A.shape[0]):
            raise ValidationError(f"K1 must be {B.shape[1]}x{A.shape[0]}, got {self.K1.shape}")
        return A - B @ self.K1, B @ self.K2

    def validate_for(self, A, B):
        A_n, _ = self.closed_loop(A, B)
        if not is_hurwitz(A_n):
            raise ValidationError("A - B K1 is not Hurwitz")


@dataclass(frozen=True)
class SymbioticParams:
    """Tuning parameters. ``None`` means "not supplied".

    ``beta1`` doubles as the single learning rate of the standard adaptive
    law; ``gamma1`` is the effectiveness learning rate (``gamma`` in the
    parametric design, where ``gamma2`` and ``beta3`` must be zero).
    """

    alpha: float = None
    beta1: float = None
    beta2: float = None
    beta3: float = 0.0
    gamma1: float = None
    gamma2: float = 0.0
    R: np.ndarray = None
    kappa: object = None

    def R_or_identity(self, n):
        return np.eye(n) if self.R is None else np.asarray(self.R, dtype=float)


REQUIRED = {
    Variant.NOMINAL: (),
    Variant.FIXED_GAIN: ("alpha",),
    Variant.STANDARD_ADAPTIVE: ("beta1",),
    Variant.STANDARD_ADAPTIVE_LEAKAGE: ("beta1", "beta2"),
    Variant.SYMBIOTIC_PARAMETRIC: ("alpha", "beta1", "beta2", "gamma1", "kappa"),
    Variant.SYMBIOTIC_NONPARAMETRIC: ("alpha", "beta1", "beta2", "beta3", "gamma1", "gamma2", "kappa"),
}


def validate_params(variant, p, n):
    """Check that `p` carries what `variant` needs, with admissible values."""
    variant = Variant(variant)
    for name in REQUIRED[variant]:
        if getattr(p, name) is None:
            raise ValidationError(f"{variant.value} requires params.{name}")
    for name in ("alpha", "beta1", "beta2", "gamma1"):
        if name in REQUIRED[variant] and not getattr(p, name) > 0.0:
            raise ValidationError(f"params.{name} must be positive")
    if p.beta3 is None or p.beta3 < 0.0 or p.gamma2 is None or p.gamma2 < 0.0:
        raise ValidationError("leakage parameters must be nonnegative")
    if variant is Variant.SYMBIOTIC_PARAMETRIC and (p.beta3 != 0.0 or p.gamma2 != 0.0):
        raise ValidationError("symbiotic_parametric has no leakage; set beta3 = gamma2 = 0")
    if variant is Variant.SYMBIOTIC_NONPARAMETRIC:
        if not p.beta3 > 0.0 or not p.gamma2 > 0.0:
            raise ValidationError("symbiotic_nonparametric requires beta3 > 0 and gamma2 > 0")
        if p.kappa.rho == 0.0:
            raise ValidationError(
                "symbiotic_nonparametric requires kappa.rho != 0: the ultimate bound needs a "
                "strictly positive lower slope of kappa"
            )
    if variant.is_symbiotic and not isinstance(p.kappa, (CompositeFn, IdentityFn)):
        raise ValidationError("params.kappa must be a composite or identity function")
    R = p.R_or_identity(n)
    if R.shape != (n, n) or not np.allclose(R, R.T) or not is_positive_definite(R):
        raise ValidationError("params.R must be symmetric positive definite")


@dataclass
class AdaptiveState:
    W_hat: np.ndarray
    Lambda_hat: np.ndarray
    q: np.ndarray
    qg: np.ndarray

    @classmethod
    def zeros(cls, n, m, s):
        return cls(np.zeros((s + m, m)), np.zeros((m, m)), np.zeros(n), np.zeros(m))


def nominal_control(g, x, r):
    """``u_n = -K1 x + K2 r``."""
    return -g.K1 @ np.asarray(x, dtype=float) + g.K2 @ np.atleast_1d(np.asarray(r, dtype=float))


def fixed_gain_control(alpha, B_i, x, x0, st):
    """
    Implementable fixed-gain signal from the integral bookkeeping:
    ``u_f = -alpha B_i (x - x0) + alpha B_i q + q_g``, where ``q`` integrates
    ``A_n x + B_n r`` and ``q_g`` integrates the gating signal.
    """
    return -alpha * B_i @ (np.asarray(x) - np.asarray(x0)) + alpha * B_i @ st.q + st.qg


def gating_signal(p, P, e, Lambda_hat, B, kp=None):
    """
    ``u_g = -(beta1 / beta2) kappa'(e^T P e) Lambda_hat B^T P e``.

    `kp` may be passed in when kappa' was already evaluated for this `e`.
    """
    Pe = P @ e
    if kp is None:
        kp = kappa_prime(p.kappa, float(e @ Pe))
    return -(p.beta1 / p.beta2) * kp * (Lambda_hat @ (B.T @ Pe))


def adaptive_signal(W_hat, sigma):
    """``u_a = -W_hat^T sigma``."""
    return -np.asarray(W_hat).T @ np.asarray(sigma)


def w_hat_dot_standard_leakage(beta1, beta2, sigma, e, P, B, W_hat):
    """``beta1 sigma e^T P B - beta2 W_hat``."""
    return beta1 * np.outer(sigma, e @ P @ B) - beta2 * np.asarray(W_hat)


def w_hat_dot_standard(beta, sigma, e, P, B):
    return w_hat_dot_standard_leakage(beta, 0.0, sigma, e, P, B, 0.0)


def w_hat_dot_symbiotic_nonparametric(p, kp, sigma, e, P, B, u_f, W_hat):
    """``beta1 kappa' sigma e^T P B - beta2 alpha sigma u_f^T - beta3 W_hat``."""
    return (
        p.beta1 * kp * np.outer(sigma, e @ P @ B)
        - p.beta2 * p.alpha * np.outer(sigma, u_f)
        - p.beta3 * np.asarray(W_hat)
    )


def w_hat_dot_symbiotic_parametric(p, kp, sigma, e, P, B, u_f):
    return w_hat_dot_symbiotic_nonparametric(dataclasses.replace(p, beta3=0.0), kp, sigma, e, P, B, u_f, 0.0)


def lambda_hat_dot_leakage(gamma1, gamma2, kp, e, P, B, u_f, Lambda_hat):
    """``gamma1 kappa' B^T P e u_f^T - gamma2 Lambda_hat``."""
    return gamma1 * kp * np.outer(B.T @ (P @ e), u_f) - gamma2 * np.asarray(Lambda_hat)


def lambda_hat_dot_parametric(gamma, kp, e, P, B, u_f):
    return lambda_hat_dot_leakage(gamma, 0.0, kp, e, P, B, u_f, 0.0)
