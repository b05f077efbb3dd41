"""
Uncertain plant ``x' = A x + B Lambda (u + delta(x))``, regressor bases and
reference signals.

The true uncertainty is restricted to polynomials so that every plant can be
written down in a text config. Nothing in this module is read by the
controller except the regressor bases and the reference signal.
"""

import re
from dataclasses import dataclass

import numpy as np

from .errors import RankDeficient, ValidationError
from .linalg import as_matrix, as_vector, cholesky_pd, controllability_rank, solve_linear


# --------------------------------------------------------------------------
# polynomials


@dataclass(frozen=True)
class TrueUncertainty:
    """Polynomial matched uncertainty.

    ``channels[i]`` is a tuple of ``(coefficient, exponents)`` terms for the
    i-th control channel, with one nonnegative integer exponent per state.
    """

    channels: tuple

    def __post_init__(self):
        coefs, exps, chans = [], [], []
        for j, terms in enumerate(self.channels):
            for coef, e in terms:
                if any(int(k) != k or k < 0 for k in e):
                    raise ValidationError(f"exponents must be nonnegative integers, got {e}")
                coefs.append(float(coef))
                exps.append(tuple(int(k) for k in e))
                chans.append(j)
        width = len(exps[0]) if exps else 0
        if any(len(e) != width for e in exps):
            raise ValidationError("all exponent vectors must have the same length")
        # flat term arrays for vectorized evaluation
        object.__setattr__(self, "coefs", np.array(coefs, dtype=float))
        object.__setattr__(self, "exps", np.array(exps, dtype=np.int64).reshape(len(exps), width))
        object.__setattr__(self, "chans", np.array(chans, dtype=np.int64))

    @property
    def m(self):
        return len(self.channels)

    @classmethod
    def zero(cls, m=1):
        return cls(tuple(() for _ in range(m)))


def monomial(x, exps):
    return float(np.prod([xi ** k for xi, k in zip(x, exps)]))


def monomials(x, exps):
    """Values of every monomial row of the integer array `exps` at `x`."""
    return np.prod(np.asarray(x, dtype=float) ** exps, axis=1)


def eval_delta(unc, x):
    """Evaluate the true uncertainty channel by channel."""
    out = np.zeros(unc.m)
    if unc.coefs.size:
        np.add.at(out, unc.chans, unc.coefs * monomials(x, unc.exps))
    return out


_FACTOR = re.compile(r"^x(\d+)(?:\^(\d+))?$")
# split before +/- unless it is the sign of a float exponent (1e-3)
_SPLIT = re.compile(r"(?<![0-9.][eE])(?=[+-])")


def parse_polynomial(text, n):
    """
    Parse ``"0.2*x1 + 0.8*x1*x2 - x2^2"`` into ``(coef, exponents)`` terms.

    Variables are ``x1 .. xn`` (1-based); powers use ``^``.
    """
    src = text.replace(" ", "")
    terms = []
    for chunk in _SPLIT.split(src):
        if not chunk:
            continue
        coef = 1.0
        if chunk[0] in "+-":
            coef = -1.0 if chunk[0] == "-" else 1.0
            chunk = chunk[1:]
        exps = [0] * n
        for fac in chunk.split("*"):
            fm = _FACTOR.match(fac)
            if fm:
                i = int(fm.group(1)) - 1
                if not 0 <= i < n:
                    raise ValueError(f"variable x{i + 1} out of range in {text!r}")
                exps[i] += int(fm.group(2) or 1)
                continue
            try:
                coef *= float(fac)
            except ValueError:
                raise ValueError(f"bad factor {fac!r} in {text!r}") from None
        terms.append((coef, tuple(exps)))
    return tuple(terms)


def format_monomial(exps):
    parts = []
    for i, k in enumerate(exps):
        if k == 1:
            parts.append(f"x{i + 1}")
        elif k > 1:
            parts.append(f"x{i + 1}^{k}")
    return "*".join(parts) or "1"


def format_polynomial(terms):
    if not terms:
        return "0"
    out = []
    for coef, exps in terms:
        mono = format_monomial(exps)
        body = repr(float(coef)) if mono == "1" else f"{float(coef)!r}*{mono}"
        out.append(body)
    return " + ".join(out).replace("+ -", "- ")


# --------------------------------------------------------------------------
# regressor bases


@dataclass(frozen=True)
class PolynomialFeatures:
    """Exact monomials; ``monomials`` holds one exponent tuple per feature."""

    monomials: tuple

    def __post_init__(self):
        if not self.monomials:
            raise ValidationError("a polynomial basis needs at least one monomial")
        if len({len(e) for e in self.monomials}) != 1:
            raise ValidationError("all monomials must have the same number of exponents")
        object.__setattr__(self, "exps", np.array(self.monomials, dtype=np.int64))

    @property
    def s(self):
        return len(self.monomials)


@dataclass(frozen=True)
class RbfWithBias:
    """Unity bias followed by one Gaussian per ``(coordinate, center)`` pair.

    Each radial unit acts on a single state coordinate:
    ``exp(-0.5 * (x[coord] - center)**2 / width**2)``.
    """

    centers: tuple
    width: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "coords", np.array([int(i) for i, _ in self.centers], dtype=np.int64))
        object.__setattr__(self, "values", np.array([float(c) for _, c in self.centers]))
        if not self.width > 0.0:
            raise ValidationError("RBF width must be positive")

    @property
    def s(self):
        return 1 + len(self.centers)


def eval_basis(basis, x):
    x = np.asarray(x, dtype=float)
    if isinstance(basis, RbfWithBias):
        out = np.empty(basis.s)
        out[0] = 1.0
        out[1:] = np.exp(-0.5 * (x[basis.coords] - basis.values) ** 2 / basis.width**2)
        return out
    return monomials(x, basis.exps)


def full_regressor(basis, x, u_n):
    """``[sigma_delta(x); u_n]``."""
    return np.concatenate([eval_basis(basis, x), np.atleast_1d(np.asarray(u_n, dtype=float))])


def benchmark_rbf_basis(n=2, centers=(1.0, -1.0), width=1.0):
    """Bias plus Gaussians centred at each value of `centers` on every coordinate."""
    return RbfWithBias(tuple((i, float(c)) for i in range(n) for c in centers), float(width))


# --------------------------------------------------------------------------
# plant


@dataclass(frozen=True)
class PlantSpec:
    A: np.ndarray
    B: np.ndarray
    lambda_diag: np.ndarray
    delta: TrueUncertainty
    x0: np.ndarray

    def __post_init__(self):
        A = as_matrix(self.A, "A")
        B = as_matrix(self.B, "B")
        lam = as_vector(self.lambda_diag, "lambda")
        x0 = as_vector(self.x0, "x0")
        n, m = B.shape
        if A.shape != (n, n):
            raise ValidationError(f"A must be {n}x{n} to match B, got {A.shape}")
        if lam.size != m:
            raise ValidationError(f"lambda must have {m} entries")
        if np.any(lam <= 0.0):
            raise ValidationError("control effectiveness entries must be strictly positive")
        if x0.size != n:
            raise ValidationError(f"x0 must have {n} entries")
        if self.delta.m != m:
            raise ValidationError(f"delta must have {m} channels")
        for terms in self.delta.channels:
            for _, e in terms:
                if len(e) != n:
                    raise ValidationError("delta exponent vectors must have one entry per state")
        if controllability_rank(A, B) != n:
            raise ValidationError("(A, B) is not controllable")
        if cholesky_pd(B.T @ B) is None:
            raise ValidationError("B must have full column rank")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "lambda_diag", lam)
        object.__setattr__(self, "x0", x0)

    @property
    def n(self):
        return self.A.shape[0]

    @property
    def m(self):
        return self.B.shape[1]

    @property
    def Lambda(self):
        return np.diag(self.lambda_diag)


def total_uncertainty(spec, x, u_n):
    """``delta(x) + (I - Lambda^{-1}) u_n``."""
    u_n = np.atleast_1d(np.asarray(u_n, dtype=float))
    return eval_delta(spec.delta, x) + (1.0 - 1.0 / spec.lambda_diag) * u_n


def ideal_weight(spec, basis):
    """Exact ``[W_delta; I - Lambda^{-1}]`` for the parametric case.

    `basis` must be a :class:`PolynomialFeatures` whose monomials cover every
    term of delta.
    """
    W_delta = np.zeros((basis.s, spec.m))
    index = {tuple(e): k for k, e in enumerate(basis.monomials)}
    for j, terms in enumerate(spec.delta.channels):
        for coef, e in terms:
            if tuple(e) not in index:
                raise ValidationError(f"basis does not contain monomial {format_monomial(e)}")
            W_delta[index[tuple(e)], j] += coef
    return np.vstack([W_delta, np.diag(1.0 - 1.0 / spec.lambda_diag)])


def domain_grid(lo=-4.0, hi=4.0, num=41, n=2):
    axes = [np.linspace(lo, hi, num)] * n
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.column_stack([g.ravel() for g in mesh])


def ideal_weight_and_eps(spec, basis, grid=None):
    """
    Least-squares fit of delta over `grid` in the span of `basis`.

    Returns
    -------
    W_delta : (s, m) ndarray
    eps_bar : float
        Largest residual 2-norm over the grid.
    """
    if grid is None:
        grid = domain_grid(n=spec.n)
    Phi = np.array([eval_basis(basis, x) for x in grid])
    Y = np.array([eval_delta(spec.delta, x) for x in grid])
    G = Phi.T @ Phi
    if cholesky_pd(G) is None:
        raise RankDeficient("basis Gram matrix is singular on the grid")
    rhs = Phi.T @ Y
    W = np.column_stack([solve_linear(G, rhs[:, j]) for j in range(Y.shape[1])])
    resid = Y - Phi @ W
    eps_bar = float(np.max(np.linalg.norm(resid, axis=1)))
    return W, eps_bar


# --------------------------------------------------------------------------
# reference


@dataclass(frozen=True)
class ReferenceSignal:
    """Square wave (or constant step) passed through a first-order lag.

    The lag state lives in the simulation state; this object only produces
    the raw input to it.
    """

    amplitude: float = 1.0
    period: float = 40.0
    filter_time_constant: float = 1.0
    kind: str = "square"

    def __post_init__(self):
        if self.kind not in ("square", "step"):
            raise ValidationError(f"unknown reference kind {self.kind!r}")
        if not self.period > 0.0:
            raise ValidationError("reference period must be positive")
        if not self.filter_time_constant > 0.0:
            raise ValidationError("reference filter time constant must be positive")


def reference_square(sig, t):
    """Raw reference at time `t`: +amplitude on the first half of each period."""
    if sig.kind == "step":
        return sig.amplitude
    phase = np.floor(2.0 * t / sig.period)
    return sig.amplitude if int(phase) % 2 == 0 else -sig.amplitude
