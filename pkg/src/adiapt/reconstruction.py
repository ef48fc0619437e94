"""First-order decoupling generator and reconstructed eigenstates.

For a one-dimensional active coordinate the generator ``G1`` is
represented in the adiabatic product basis ``|l> phi_a`` with level-major
ordering ``index = l * N + a``.  Its blocks between the level of interest
``n`` and every other level ``l`` are::

    G_la,nb = int w_ln <d(l phi_a)|d(n phi_b)> dq + int sqrt(g) phi_a U_ln phi_b dq
    w_ln    = (i/2) sqrt(g) g^qq / (E_l - E_n)
    U_ln    = -(1/2) g^qq d(E_l + E_n) A_ln / (E_l - E_n)**2
    A_ln    = i <l|dn>

and the blocks between two levels other than ``n`` vanish.  The
reconstructed state is ``|n> zeta + i eps G1 |n> zeta``, renormalized and
projected onto the diabatic product basis.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.interpolate import CubicSpline

from .adiabatic import finite_difference
from .exact_solver import CoupledBasis, CoupledState
from .effective_solver import AssemblyError

__all__ = [
    "LevelCouplings",
    "level_couplings",
    "G1Operator",
    "build_g1",
    "product_hamiltonian",
    "reconstruct",
    "decoupling_residual",
    "DecouplingResidual",
]


def _spline(grid, values, points):
    values = np.asarray(values)
    if np.iscomplexobj(values):
        return _spline(grid, values.real, points) + 1j * _spline(grid, values.imag, points)
    return CubicSpline(grid, values, axis=0)(points)


@dataclass(frozen=True)
class LevelCouplings:
    """All-level adiabatic quantities at the nodes of a basis.

    Attributes
    ----------
    points : ndarray (K,)
    energies, dE : ndarray (K, m)
    states : ndarray (K, m, m)
        Eigenvectors at the nodes, columns by level, phases continuous with
        the smoothed grid states.
    C : ndarray (K, m, m)
        ``<l|d m>`` indexed ``[k, l, m]``.
    D : ndarray (K, m, m)
        ``<d l|d m>``.
    sqrt_g, ginv : ndarray (K,)
    """

    points: np.ndarray
    energies: np.ndarray
    dE: np.ndarray
    states: np.ndarray
    C: np.ndarray
    D: np.ndarray
    sqrt_g: np.ndarray
    ginv: np.ndarray


def level_couplings(data, points):
    """Evaluate the couplings between all levels of `data` at `points`."""
    if data.dim != 1:
        raise AssemblyError("the decoupling generator is implemented for one coordinate")
    points = np.asarray(points, dtype=float)
    if points.min() < data.grid[0] or points.max() > data.grid[-1]:
        raise AssemblyError("basis nodes lie outside the adiabatic grid")
    h = data.spacing
    U = data.states
    dU = finite_difference(U, h)
    C = np.einsum("kil,kim->klm", np.conj(U), dU)
    D = np.einsum("kil,kim->klm", np.conj(dU), dU)
    dE = finite_difference(data.energies, h)

    splined = _spline(data.grid, U, points)
    if data.fiber is not None:
        energies, exact = np.linalg.eigh(data.fiber(points))
        ov = np.sum(np.conj(exact) * splined, axis=1)
        states = exact * (ov / np.abs(ov))[:, None, :]
    else:
        energies = _spline(data.grid, data.energies, points)
        states, _ = np.linalg.qr(splined)
    if data.metric_fn is not None:
        g = np.asarray(data.metric_fn(points), dtype=float)[:, 0, 0]
    else:
        g = _spline(data.grid, data.metric[:, 0, 0], points)
    return LevelCouplings(
        points=points,
        energies=energies,
        dE=_spline(data.grid, dE, points),
        states=states,
        C=_spline(data.grid, C, points),
        D=_spline(data.grid, D, points),
        sqrt_g=np.sqrt(g),
        ginv=1.0 / g,
    )


def _product_element(basis, lc, l, m, weight):
    """``sum_k weight_k <d(l phi_a)|d(m phi_b)>`` over the basis nodes."""
    phi, dphi = basis.values, basis.derivatives
    C, D = lc.C[:, l, m], lc.D[:, l, m]
    # <d l|m> = -<l|d m> is not assumed; use the conjugate of <m|d l>
    Cbar = np.conj(lc.C[:, m, l])
    out = (dphi * (weight * C)) @ phi.T
    out += (phi * (weight * Cbar)) @ dphi.T
    out += (phi * (weight * D)) @ phi.T
    if l == m:
        out += (dphi * weight) @ dphi.T
    return out


@dataclass(frozen=True)
class G1Operator:
    """Matrix elements of the decoupling generator and its context.

    Attributes
    ----------
    matrix : ndarray (mN, mN)
        Matrix elements ``<l phi_a|G1|n phi_b>``, level-major.
    overlap : ndarray (N, N)
        Scalar overlap ``int sqrt(g) phi_a phi_b``.
    level : int
    basis : object
        Scalar basis of the active coordinate.
    couplings : LevelCouplings
    """

    matrix: np.ndarray
    overlap: np.ndarray
    level: int
    basis: object
    couplings: LevelCouplings

    @property
    def levels(self):
        return self.couplings.energies.shape[1]

    @property
    def size(self):
        return self.basis.size

    def hermiticity_defect(self):
        G = self.matrix
        return float(np.max(np.abs(G - np.conj(G.T))) / np.max(np.abs(G)))

    def block(self, l, m):
        N = self.size
        return self.matrix[l * N:(l + 1) * N, m * N:(m + 1) * N]


def build_g1(data, basis):
    """Assemble the first-order decoupling generator for level ``data.level``.

    Parameters
    ----------
    data : AdiabaticData
        One-dimensional adiabatic data whose grid covers the basis nodes.
    basis : OscillatorBasis
        Scalar basis with ``values`` and ``derivatives`` at its nodes.
    """
    lc = level_couplings(data, basis.points)
    n = data.level
    nlev = lc.energies.shape[1]
    N = basis.size
    phi = basis.values
    G = np.zeros((nlev * N, nlev * N), dtype=np.complex128)
    for l in range(nlev):
        for m in range(nlev):
            if l == m or (l != n and m != n):
                continue
            gap = lc.energies[:, l] - lc.energies[:, m]
            w = 0.5j * lc.sqrt_g * lc.ginv / gap
            A_lm = 1j * lc.C[:, l, m]
            U = -0.5 * lc.ginv * (lc.dE[:, l] + lc.dE[:, m]) * A_lm / gap**2
            block = _product_element(basis, lc, l, m, w)
            block += (phi * (lc.sqrt_g * U)) @ phi.T
            G[l * N:(l + 1) * N, m * N:(m + 1) * N] = block
    S = (phi * lc.sqrt_g) @ phi.T
    return G1Operator(G, S, n, basis, lc)


def product_hamiltonian(g1, epsilon):
    """Full Hamiltonian in the adiabatic product basis of `g1`.

    ``<l phi_a|H|m phi_b> = eps/2 int sqrt(g) g^qq <d(l phi_a)|d(m phi_b)>
    + delta_lm int sqrt(g) E_l phi_a phi_b``.
    """
    lc, basis = g1.couplings, g1.basis
    nlev, N = g1.levels, g1.size
    phi = basis.values
    w = 0.5 * float(epsilon) * lc.sqrt_g * lc.ginv
    H = np.zeros((nlev * N, nlev * N), dtype=np.complex128)
    for l in range(nlev):
        for m in range(nlev):
            block = _product_element(basis, lc, l, m, w)
            if l == m:
                block = block + (phi * (lc.sqrt_g * lc.energies[:, l])) @ phi.T
            H[l * N:(l + 1) * N, m * N:(m + 1) * N] = block
    return H


def _inverse_sqrt(S):
    w, v = np.linalg.eigh(S)
    if w.min() <= 0:
        raise AssemblyError("basis overlap is not positive definite")
    return (v / np.sqrt(w)) @ np.conj(v.T), (v * np.sqrt(w)) @ np.conj(v.T)


@dataclass(frozen=True)
class DecouplingResidual:
    """Norms of the off-diagonal blocks acting on an effective eigenvector.

    ``transformed`` uses ``H + i eps [H, G1]`` and ``bare`` the untransformed
    Hamiltonian.
    """

    transformed: float
    bare: float


def decoupling_residual(g1, epsilon, coefficients):
    """Off-diagonal leakage of the effective eigenvector `coefficients`.

    The product basis is Lowdin orthonormalized before forming
    ``H + i eps [H, G1]`` and the norm of its ``l != n`` blocks acting on
    the normalized state ``|n> zeta`` is returned together with that of the
    bare ``H``.
    """
    eps = float(epsilon)
    N, nlev, n = g1.size, g1.levels, g1.level
    Sm, Sp = _inverse_sqrt(g1.overlap)
    X = np.kron(np.eye(nlev), Sm)
    H = X @ product_hamiltonian(g1, eps) @ X
    G = X @ g1.matrix @ X
    c = Sp @ np.asarray(coefficients, dtype=np.complex128)
    c = c / np.linalg.norm(c)
    T = H + 1j * eps * (H @ G - G @ H)
    rows = [l for l in range(nlev) if l != n]
    cols = slice(n * N, (n + 1) * N)

    def leak(M):
        return float(np.sqrt(sum(
            np.linalg.norm(M[l * N:(l + 1) * N, cols] @ c) ** 2 for l in rows
        )))

    return DecouplingResidual(leak(T), leak(H))


def _diabatic_projection(g1, coupled):
    """Map level-major adiabatic product coefficients to diabatic ones."""
    lc, basis = g1.couplings, g1.basis
    phi = basis.values
    nlev, N = g1.levels, g1.size
    Sinv = np.linalg.inv(g1.overlap)
    P = np.zeros((coupled.channels * N, nlev * N), dtype=np.complex128)
    for alpha in range(coupled.channels):
        for l in range(nlev):
            w = lc.sqrt_g * lc.states[:, alpha, l]
            P[alpha * N:(alpha + 1) * N, l * N:(l + 1) * N] = Sinv @ ((phi * w) @ phi.T)
    return P


def reconstruct(spectrum, g1, epsilon, index=0, include_g1=True):
    """Reconstruct an eigenstate of the full problem from an effective one.

    Parameters
    ----------
    spectrum : SpectrumResult
        First-order effective spectrum in the basis of `g1`.
    g1 : G1Operator
    epsilon : float
    index : int
        Effective eigenvector to lift.
    include_g1 : bool
        When False the plain product ``|n> zeta`` is returned.

    Returns
    -------
    CoupledState
        Normalized state in the diabatic product basis.
    """
    if spectrum.vectors.shape[0] != g1.size:
        raise AssemblyError("effective spectrum and generator use different bases")
    N, nlev, n = g1.size, g1.levels, g1.level
    zeta = spectrum.vectors[:, index].astype(np.complex128)
    coeffs = np.zeros(nlev * N, dtype=np.complex128)
    coeffs[n * N:(n + 1) * N] = zeta
    if include_g1:
        Sinv = np.linalg.inv(g1.overlap)
        for l in range(nlev):
            if l != n:
                coeffs[l * N:(l + 1) * N] = 1j * float(epsilon) * Sinv @ (g1.block(l, n) @ zeta)
    coupled = CoupledBasis(g1.basis, g1.couplings.sqrt_g, channels=g1.couplings.states.shape[1])
    state = CoupledState(_diabatic_projection(g1, coupled) @ coeffs, coupled)
    return state.normalized()
