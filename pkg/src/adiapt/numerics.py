"""Dense linear-algebra kernels, Gauss quadrature rules and line fitting.

Everything here works in complex double precision so that real-symmetric
and genuinely complex Hermitian problems share one code path.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np
from scipy import linalg

__all__ = [
    "LinearAlgebraError",
    "QuadratureRule",
    "LineFit",
    "check_hermitian",
    "solve_generalized_hermitian",
    "solve_linear_hermitian",
    "gauss_hermite",
    "gauss_legendre",
    "hermite_dvr",
    "fit_line",
    "OscillatorBasis",
    "RadialSineBasis",
]

# Hermiticity tolerance relative to the largest entry.
HERMITIAN_RTOL = 1e-11
# Smallest admissible eigenvalue of S relative to the largest one.
OVERLAP_RCOND = 1e-10
# Condition number above which a linear solve is refused.
MAX_CONDITION = 1e12


class LinearAlgebraError(ValueError):
    """Raised when a matrix violates the preconditions of a solver."""


class QuadratureRule(NamedTuple):
    """Nodes and strictly positive weights of a quadrature rule."""

    nodes: np.ndarray
    weights: np.ndarray


class LineFit(NamedTuple):
    """Ordinary least-squares line ``y = slope * x + intercept``."""

    slope: float
    intercept: float
    rms_residual: float


def check_hermitian(matrix, name="matrix", rtol=HERMITIAN_RTOL):
    """Return the Hermitian part of `matrix` after validating it.

    Parameters
    ----------
    matrix : array_like, shape (..., m, m)
        Square matrix or stack of matrices.
    name : str
        Used in error messages.
    rtol : float
        Allowed ``max|M - M^H|`` relative to ``max(1, max|M|)``.

    Returns
    -------
    ndarray
        ``(M + M^H) / 2`` as complex128.
    """
    m = np.asarray(matrix, dtype=np.complex128)
    if m.ndim < 2 or m.shape[-1] != m.shape[-2]:
        raise LinearAlgebraError(f"{name} must be square, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise LinearAlgebraError(f"{name} has non-finite entries")
    mh = np.conj(np.swapaxes(m, -1, -2))
    scale = max(1.0, float(np.max(np.abs(m)))) if m.size else 1.0
    defect = float(np.max(np.abs(m - mh))) if m.size else 0.0
    if defect > rtol * scale:
        raise LinearAlgebraError(
            f"{name} is not Hermitian: max|M - M^H| = {defect:.3e}"
        )
    return 0.5 * (m + mh)


def solve_generalized_hermitian(H, S, check_residual=True):
    """Solve ``H v = lambda S v`` for Hermitian `H` and positive definite `S`.

    The pencil is reduced to standard form with the Cholesky factor of
    `S` and the resulting Hermitian matrix is diagonalized densely.

    Parameters
    ----------
    H, S : array_like, shape (m, m)
        Hermitian matrices; `S` must be positive definite.
    check_residual : bool
        Verify ``||H v - lambda S v|| <= 1e-10 ||H||`` for every pair.

    Returns
    -------
    eigenvalues : ndarray, shape (m,)
        Ascending real eigenvalues.
    eigenvectors : ndarray, shape (m, m)
        Columns are S-orthonormal eigenvectors.

    Raises
    ------
    LinearAlgebraError
        If either matrix is not Hermitian or `S` is not positive definite.
    """
    H = check_hermitian(H, "H")
    S = check_hermitian(S, "S")
    if H.shape != S.shape:
        raise LinearAlgebraError(f"shape mismatch {H.shape} vs {S.shape}")
    s_eigs = linalg.eigvalsh(S)
    if s_eigs[0] <= OVERLAP_RCOND * max(s_eigs[-1], 0.0):
        raise LinearAlgebraError(
            "overlap matrix is not positive definite: smallest eigenvalue "
            f"{s_eigs[0]:.3e} (largest {s_eigs[-1]:.3e}); basis is over-complete"
        )
    L = linalg.cholesky(S, lower=True)
    # C = L^-1 H L^-H
    tmp = linalg.solve_triangular(L, H, lower=True)
    C = linalg.solve_triangular(L, np.conj(tmp.T), lower=True)
    C = 0.5 * (C + np.conj(C.T))
    w, y = linalg.eigh(C)
    v = linalg.solve_triangular(L, y, lower=True, trans="C")
    if check_residual:
        resid = H @ v - (S @ v) * w
        hnorm = max(linalg.norm(H, 2), np.finfo(float).tiny)
        worst = float(np.max(linalg.norm(resid, axis=0)))
        if worst > 1e-10 * hnorm:
            raise LinearAlgebraError(
                f"eigenpair residual {worst:.3e} exceeds 1e-10 * ||H|| = "
                f"{1e-10 * hnorm:.3e}"
            )
    return w, v


def solve_linear_hermitian(A, b, max_condition=MAX_CONDITION):
    """Solve ``A x = b`` for Hermitian, nonsingular `A`.

    Stacks of systems are supported: `A` may have shape ``(..., m, m)``
    and `b` shape ``(..., m)``.

    Parameters
    ----------
    A : array_like
        Hermitian matrix or stack of matrices.
    b : array_like
        Right-hand side(s).
    max_condition : float
        Largest accepted 2-norm condition number.

    Returns
    -------
    ndarray
        Solution with ``||A x - b|| <= 1e-12 ||b||``.
    """
    A = check_hermitian(A, "A")
    b = np.asarray(b, dtype=np.complex128)
    cond = np.linalg.cond(A)
    worst = float(np.max(cond))
    if not np.isfinite(worst) or worst > max_condition:
        raise LinearAlgebraError(
            f"matrix is singular to tolerance: condition estimate {worst:.3e}"
        )
    x = np.linalg.solve(A, b[..., None])[..., 0]
    bnorm = np.linalg.norm(b, axis=-1)
    for _ in range(2):
        r = b - (A @ x[..., None])[..., 0]
        if np.all(np.linalg.norm(r, axis=-1) <= 1e-12 * bnorm):
            return x
        # one step of iterative refinement
        x = x + np.linalg.solve(A, r[..., None])[..., 0]
    r = b - (A @ x[..., None])[..., 0]
    rel = float(np.max(np.linalg.norm(r, axis=-1) / np.where(bnorm > 0, bnorm, 1.0)))
    if rel > 1e-12:
        raise LinearAlgebraError(
            f"linear solve residual {rel:.3e} above 1e-12 (condition {worst:.3e})"
        )
    return x


def hermite_dvr(n):
    """Golub-Welsch decomposition of the Hermite Jacobi matrix.

    Parameters
    ----------
    n : int
        Number of nodes.

    Returns
    -------
    nodes : ndarray, shape (n,)
        Zeros of the degree-`n` Hermite polynomial, ascending.
    vectors : ndarray, shape (n, n)
        Orthogonal eigenvector matrix, with ``vectors[0] > 0``.
        Row ``k`` holds the normalized Hermite function of order ``k``
        at the nodes multiplied by the square root of the weight, so
        ``sum_m vectors[i, m] f(t_m) vectors[j, m]`` integrates
        ``h_i h_j f`` exactly for polynomial `f` of low enough degree.
    """
    if n < 1:
        raise ValueError("need at least one node")
    off = np.sqrt(np.arange(1, n) / 2.0)
    nodes, vectors = linalg.eigh_tridiagonal(np.zeros(n), off)
    # Row 0 underflows at the outer nodes for large n; the last row never
    # vanishes and its sign alternates, (-1)^(n-1-m) at ascending node m.
    want = (-1.0) ** (n - 1 - np.arange(n))
    vectors = vectors * np.where(np.sign(vectors[-1]) == want, 1.0, -1.0)
    return nodes, vectors


def gauss_hermite(n):
    """Gauss-Hermite rule for ``int exp(-t^2) f(t) dt``, exact to degree 2n-1."""
    nodes, vectors = hermite_dvr(n)
    weights = np.sqrt(np.pi) * vectors[0] ** 2
    return QuadratureRule(nodes, weights)


def gauss_legendre(n, lower=-1.0, upper=1.0):
    """Gauss-Legendre rule on ``[lower, upper]``, exact to degree 2n-1."""
    if not upper > lower:
        raise ValueError("need upper > lower")
    t, w = np.polynomial.legendre.leggauss(n)
    half = 0.5 * (upper - lower)
    return QuadratureRule(lower + half * (t + 1.0), half * w)


def fit_line(xs, ys):
    """Least-squares fit of a straight line.

    Parameters
    ----------
    xs, ys : array_like
        At least three points with distinct abscissae.

    Returns
    -------
    LineFit
    """
    x = np.asarray(xs, dtype=float)
    y = np.asarray(ys, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("xs and ys must be 1-d arrays of equal length")
    if x.size < 3:
        raise ValueError(f"need at least 3 points for a line fit, got {x.size}")
    if np.unique(x).size != x.size:
        raise ValueError("abscissae must be distinct")
    design = np.column_stack([x, np.ones_like(x)])
    (slope, intercept), *_ = np.linalg.lstsq(design, y, rcond=None)
    resid = y - (slope * x + intercept)
    return LineFit(float(slope), float(intercept), float(np.sqrt(np.mean(resid**2))))


class OscillatorBasis:
    """Harmonic-oscillator functions with their Gauss-Hermite quadrature.

    The functions are ``phi_i(q) = h_i((q - center) / width) / sqrt(width)``
    with ``h_i`` the normalized Hermite functions.  Values and first
    derivatives are tabulated at the quadrature nodes with the square root
    of the quadrature weight folded in, so that

    ``int f(q) phi_i(q) phi_j(q) dq = sum_k values[i, k] f(q_k) values[j, k]``.

    Parameters
    ----------
    size : int
        Number of basis functions.
    center, width : float
        Centre and length scale of the oscillator.
    n_nodes : int, optional
        Quadrature nodes; at least ``2 * size + 16`` are always used.
    """

    def __init__(self, size, center=0.0, width=1.0, n_nodes=None):
        if size < 1:
            raise ValueError("basis size must be positive")
        if not width > 0:
            raise ValueError("oscillator width must be positive")
        self.size = int(size)
        self.center = float(center)
        self.width = float(width)
        k = max(2 * self.size + 16, int(n_nodes or 0))
        t, U = hermite_dvr(k)
        self.points = self.center + self.width * t
        self.values = U[: self.size].copy()
        i = np.arange(self.size)[:, None]
        lower = np.zeros_like(self.values)
        lower[1:] = U[: self.size - 1]
        self.derivatives = (
            np.sqrt(i / 2.0) * lower - np.sqrt((i + 1) / 2.0) * U[1 : self.size + 1]
        ) / self.width

    @property
    def n_nodes(self):
        return self.points.size

    def __repr__(self):
        return (
            f"OscillatorBasis(size={self.size}, center={self.center:.6g}, "
            f"width={self.width:.6g}, n_nodes={self.n_nodes})"
        )


class RadialSineBasis:
    """Dirichlet sine functions on ``[lower, upper]`` for a radial measure.

    The functions are ``f_i(q) = u_i(q) / sqrt(q)`` with
    ``u_i = sqrt(2/L) sin(i pi (q - lower) / L)``, so that they are
    orthonormal under the measure ``q dq``.  Tabulation follows
    :class:`OscillatorBasis` with Gauss-Legendre nodes.
    """

    def __init__(self, size, lower, upper, n_nodes=None):
        if size < 1:
            raise ValueError("basis size must be positive")
        if not 0 < lower < upper:
            raise ValueError("need 0 < lower < upper for a radial basis")
        self.size = int(size)
        self.lower = float(lower)
        self.upper = float(upper)
        length = self.upper - self.lower
        k = max(3 * self.size + 32, int(n_nodes or 0))
        rule = gauss_legendre(k, self.lower, self.upper)
        q = rule.nodes
        sw = np.sqrt(rule.weights)
        kk = np.arange(1, self.size + 1)[:, None] * np.pi / length
        arg = kk * (q - self.lower)
        u = np.sqrt(2.0 / length) * np.sin(arg)
        du = np.sqrt(2.0 / length) * kk * np.cos(arg)
        self.points = q
        self.values = u / np.sqrt(q) * sw
        self.derivatives = (du / np.sqrt(q) - 0.5 * u / q**1.5) * sw

    @property
    def n_nodes(self):
        return self.points.size

    def __repr__(self):
        return (
            f"RadialSineBasis(size={self.size}, lower={self.lower:.6g}, "
            f"upper={self.upper:.6g}, n_nodes={self.n_nodes})"
        )
