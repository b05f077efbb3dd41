"""
Dense small-matrix numerics.

Everything here targets the n <= 10 regime of the controllers in this package:
Gaussian elimination with scaled partial pivoting, a Cholesky-based
definiteness test, cyclic Jacobi for symmetric eigenvalue extremes, and a
Kronecker-vectorized Lyapunov solver. Matrices and vectors are plain float64
numpy arrays; the helpers :func:`as_matrix` and :func:`as_vector` enforce the
shape and finiteness invariants at module boundaries.
"""

import numpy as np

from .errors import NotHurwitz, NotSymmetric, RankDeficient, SingularMatrix

PIVOT_TOL = 1e-12
SYM_TOL = 1e-10
JACOBI_TOL = 1e-12
RANK_TOL = 1e-10


def as_matrix(a, name="matrix"):
    """Return `a` as a finite 2-D float64 array."""
    m = np.array(a, dtype=float)
    if m.ndim == 0:
        m = m.reshape(1, 1)
    if m.ndim != 2 or m.size == 0:
        raise ValueError(f"{name} must be a non-empty 2-D array, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError(f"{name} has non-finite entries")
    return m


def as_vector(v, name="vector"):
    """Return `v` as a finite 1-D float64 array."""
    x = np.array(v, dtype=float).reshape(-1)
    if x.size == 0:
        raise ValueError(f"{name} must be non-empty")
    if not np.all(np.isfinite(x)):
        raise ValueError(f"{name} has non-finite entries")
    return x


def _check_square(A, name="A"):
    if A.shape[0] != A.shape[1]:
        raise ValueError(f"{name} must be square, got shape {A.shape}")


def _check_symmetric(S):
    _check_square(S, "S")
    scale = max(1.0, float(np.max(np.abs(S))))
    if np.max(np.abs(S - S.T)) > SYM_TOL * scale:
        raise NotSymmetric("matrix is not symmetric within tolerance")


def solve_linear(A, b):
    """
    Solve ``A x = b`` by Gaussian elimination with scaled partial pivoting.

    Parameters
    ----------
    A : (n, n) array_like
    b : (n,) array_like

    Returns
    -------
    x : (n,) ndarray

    Raises
    ------
    SingularMatrix
        If a pivot, relative to the largest entry of its original row, falls
        below 1e-12.
    """
    A = as_matrix(A, "A")
    _check_square(A)
    b = as_vector(b, "b")
    n = A.shape[0]
    if b.size != n:
        raise ValueError(f"b has dimension {b.size}, expected {n}")

    M = A.copy()
    x = b.copy()
    scale = np.max(np.abs(M), axis=1)
    if np.any(scale == 0.0):
        raise SingularMatrix("matrix has a zero row")

    for k in range(n):
        ratios = np.abs(M[k:, k]) / scale[k:]
        p = k + int(np.argmax(ratios))
        if ratios[p - k] < PIVOT_TOL:
            raise SingularMatrix(f"pivot {k} below tolerance")
        if p != k:
            M[[k, p]] = M[[p, k]]
            x[[k, p]] = x[[p, k]]
            scale[[k, p]] = scale[[p, k]]
        factors = M[k + 1:, k] / M[k, k]
        M[k + 1:, k:] -= np.outer(factors, M[k, k:])
        x[k + 1:] -= factors * x[k]

    for k in range(n - 1, -1, -1):
        x[k] = (x[k] - M[k, k + 1:] @ x[k + 1:]) / M[k, k]
    return x


def cholesky_pd(S):
    """
    Lower Cholesky factor of a symmetric matrix, or ``None`` if it is not
    positive definite.

    Raises
    ------
    NotSymmetric
        When ``S`` is asymmetric beyond a 1e-10 relative tolerance.
    """
    S = as_matrix(S, "S")
    _check_symmetric(S)
    S = 0.5 * (S + S.T)
    n = S.shape[0]
    L = np.zeros_like(S)
    # pivots at rounding level relative to the diagonal count as zero
    floor = PIVOT_TOL * float(np.max(np.abs(np.diag(S))))
    for j in range(n):
        d = S[j, j] - L[j, :j] @ L[j, :j]
        if not d > floor:
            return None
        L[j, j] = np.sqrt(d)
        L[j + 1:, j] = (S[j + 1:, j] - L[j + 1:, :j] @ L[j, :j]) / L[j, j]
    return L


def is_positive_definite(S):
    return cholesky_pd(S) is not None


def sym_eigvals(S):
    """All eigenvalues of a symmetric matrix by cyclic Jacobi rotations, ascending."""
    S = as_matrix(S, "S")
    _check_symmetric(S)
    M = 0.5 * (S + S.T)
    n = M.shape[0]
    for _ in range(100):
        off = np.sqrt(np.sum(np.tril(M, -1) ** 2))
        if off <= JACOBI_TOL:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = M[p, q]
                gap = M[q, q] - M[p, p]
                if abs(apq) <= 1e-18 * abs(gap):
                    # negligible next to the diagonal gap; a rotation would overflow theta
                    M[p, q] = M[q, p] = 0.0
                    continue
                theta = gap / (2.0 * apq)
                if theta == 0.0:
                    t = 1.0
                else:
                    t = np.sign(theta) / (abs(theta) + np.sqrt(theta * theta + 1.0))
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                J = np.eye(n)
                J[p, p] = c
                J[q, q] = c
                J[p, q] = s
                J[q, p] = -s
                M = J.T @ M @ J
                M[p, q] = M[q, p] = 0.0
    return np.sort(np.diag(M))


def sym_eig_extremes(S):
    """Return ``(lambda_min, lambda_max)`` of a symmetric matrix."""
    w = sym_eigvals(S)
    return float(w[0]), float(w[-1])


def _lyapunov_vectorized(A, R):
    # vec(A^T P + P A) = (I kron A^T + A^T kron I) vec(P), column-major vec
    n = A.shape[0]
    I = np.eye(n)
    K = np.kron(I, A.T) + np.kron(A.T, I)
    p = solve_linear(K, -R.reshape(-1, order="F"))
    P = p.reshape(n, n, order="F")
    return 0.5 * (P + P.T)


def is_hurwitz(A):
    """True iff ``A^T P + P A + I = 0`` has a positive definite solution."""
    A = as_matrix(A, "A")
    _check_square(A)
    try:
        P = _lyapunov_vectorized(A, np.eye(A.shape[0]))
    except SingularMatrix:
        return False
    return is_positive_definite(P)


def solve_lyapunov(A_n, R):
    """
    Solve ``A_n^T P + P A_n + R = 0`` for symmetric positive definite P.

    Raises
    ------
    NotHurwitz
        If `A_n` is not Hurwitz.
    """
    A_n = as_matrix(A_n, "A_n")
    R = as_matrix(R, "R")
    _check_square(A_n, "A_n")
    if R.shape != A_n.shape:
        raise ValueError("R must match the shape of A_n")
    if not is_positive_definite(R):
        raise ValueError("R must be symmetric positive definite")
    if not is_hurwitz(A_n):
        raise NotHurwitz("A_n is not Hurwitz")
    return _lyapunov_vectorized(A_n, R)


def left_pseudoinverse(B):
    """``(B^T B)^{-1} B^T`` for a full column rank `B`."""
    B = as_matrix(B, "B")
    G = B.T @ B
    if cholesky_pd(G) is None:
        raise RankDeficient("B does not have full column rank")
    m = G.shape[0]
    Ginv = np.column_stack([solve_linear(G, e) for e in np.eye(m)])
    return Ginv @ B.T


def matrix_rank(M, tol=RANK_TOL):
    """Rank by Gaussian elimination with full pivoting; entries below
    ``tol * max|M|`` count as zero."""
    M = as_matrix(M, "M").copy()
    big = float(np.max(np.abs(M)))
    if big == 0.0:
        return 0
    thresh = tol * big
    rank = 0
    rows, cols = M.shape
    for _ in range(min(rows, cols)):
        sub = np.abs(M[rank:, rank:])
        i, j = np.unravel_index(np.argmax(sub), sub.shape)
        if sub[i, j] <= thresh:
            break
        i += rank
        j += rank
        M[[rank, i]] = M[[i, rank]]
        M[:, [rank, j]] = M[:, [j, rank]]
        M[rank + 1:, rank:] -= np.outer(M[rank + 1:, rank] / M[rank, rank], M[rank, rank:])
        rank += 1
    return rank


def controllability_rank(A, B):
    """Rank of ``[B, AB, ..., A^{n-1} B]``."""
    A = as_matrix(A, "A")
    B = as_matrix(B, "B")
    _check_square(A)
    if B.shape[0] != A.shape[0]:
        raise ValueError("A and B have incompatible row counts")
    blocks = [B]
    for _ in range(A.shape[0] - 1):
        blocks.append(A @ blocks[-1])
    return matrix_rank(np.hstack(blocks))
