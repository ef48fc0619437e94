"""Reference solutions of the full two-component problem.

The Morse model is solved in a diabatic product basis ``|alpha> phi_a(q)``
with the Laplace-Beltrami kinetic energy of the active coordinate.  The
Jahn-Teller model is reduced by its angular symmetry to two coupled radial
channels and solved on a uniform sine DVR grid in the ``u = sqrt(q) f``
representation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .effective_solver import EffectiveProblem
from .models import JahnTellerModel, MorseModel

__all__ = [
    "RadialDVR",
    "CoupledBasis",
    "CoupledState",
    "coupled_basis",
    "radial_dvr_for",
    "assemble_exact",
    "coupled_state",
    "operator_matrix",
    "expectation",
    "NormalizationError",
]

OBSERVABLES = ("q", "q_sigma_z", "sigma_z")


class NormalizationError(ValueError):
    """Raised when an expectation value is requested for an unnormalized state."""


class RadialDVR:
    """Sine DVR on ``(0, q_max)`` with Dirichlet ends.

    Grid points are ``q_k = k q_max / (size + 1)``, ``k = 1..size``.  In the
    DVR the basis functions are localized on the points, so ``values`` is
    the identity and integrals reduce to point evaluations.
    """

    def __init__(self, size, q_max):
        if size < 2 or not q_max > 0:
            raise ValueError("need size >= 2 and q_max > 0")
        self.size = int(size)
        self.q_max = float(q_max)
        self.spacing = self.q_max / (self.size + 1)
        self.points = self.spacing * np.arange(1, self.size + 1)
        self.values = np.eye(self.size)

    def kinetic(self):
        """Matrix of ``-d^2/dq^2``."""
        k = np.arange(1, self.size + 1)
        U = np.sqrt(2.0 / (self.size + 1)) * np.sin(np.pi * np.outer(k, k) / (self.size + 1))
        return (U * (k * np.pi / self.q_max) ** 2) @ U.T

    def __repr__(self):
        return f"RadialDVR(size={self.size}, q_max={self.q_max:.6g})"


@dataclass(frozen=True)
class CoupledBasis:
    """Product of two electronic channels with a heavy-coordinate basis.

    Coefficients are ordered channel-major: ``index = alpha * N + a``.

    Attributes
    ----------
    basis : OscillatorBasis or RadialDVR
    sqrt_g : ndarray
        Measure at the basis nodes.
    channels : int
    """

    basis: object
    sqrt_g: np.ndarray
    channels: int = 2

    @property
    def size(self):
        return self.basis.size

    @property
    def dimension(self):
        return self.channels * self.basis.size

    @property
    def scalar_overlap(self):
        phi = self.basis.values
        return (phi * self.sqrt_g) @ phi.T

    @property
    def overlap(self):
        return np.kron(np.eye(self.channels), self.scalar_overlap)


@dataclass(frozen=True)
class CoupledState:
    """State vector in a :class:`CoupledBasis`."""

    coefficients: np.ndarray
    basis: CoupledBasis

    def norm(self):
        c = self.coefficients
        return float(np.real(np.conj(c) @ self.basis.overlap @ c))

    def normalized(self):
        return CoupledState(self.coefficients / np.sqrt(self.norm()), self.basis)


def coupled_basis(model, basis):
    """Wrap a scalar basis for the two-channel problem of `model`."""
    if isinstance(basis, RadialDVR):
        return CoupledBasis(basis, np.ones(basis.size))
    return CoupledBasis(basis, model.metric(basis.points).sqrt_g)


def radial_dvr_for(epsilon, width=14.0, points_per_width=4.0):
    """DVR grid for the Jahn-Teller channels at small parameter `epsilon`.

    The grid reaches ``1 + width * eps**0.25`` so that the low states have
    decayed by many orders of magnitude at the outer wall.
    """
    sigma = float(epsilon) ** 0.25
    q_max = 1.0 + width * sigma
    size = int(np.ceil(q_max * points_per_width / sigma)) - 1
    return RadialDVR(max(size, 16), q_max)


def _assemble_morse(model, basis):
    cb = coupled_basis(model, basis)
    phi, dphi = basis.values, basis.derivatives
    metric = model.metric(basis.points)
    sg = metric.sqrt_g
    T = 0.5 * model.epsilon * (dphi * (sg * metric.ginv)) @ dphi.T
    V = model.fiber(basis.points)
    blocks = [[(phi * (sg * V[:, a, b])) @ phi.T for b in range(2)] for a in range(2)]
    H = np.block([[T + blocks[0][0], blocks[0][1]], [blocks[1][0], T + blocks[1][1]]])
    return EffectiveProblem(
        H=H.astype(np.complex128), S=cb.overlap.astype(np.complex128),
        provenance="exact", level=0, basis=cb,
        metadata={"epsilon": model.epsilon, "coords": model.coords, "mass": model.mass},
    )


def _assemble_jt(model, dvr):
    eps, j = model.epsilon, model.j
    q = dvr.points
    T = 0.5 * eps * dvr.kinetic()
    out = []
    for m in (j - 0.5, j + 0.5):
        out.append(T + np.diag(0.5 * eps * (m * m - 0.25) / q**2 + 0.5 * q * q))
    coupling = -np.diag(q)
    H = np.block([[out[0], coupling], [coupling, out[1]]])
    cb = coupled_basis(model, dvr)
    return EffectiveProblem(
        H=H.astype(np.complex128), S=np.eye(H.shape[0], dtype=np.complex128),
        provenance="exact", level=0, basis=cb,
        metadata={"epsilon": eps, "j": j},
    )


def assemble_exact(model, basis):
    """Matrix of the full Hamiltonian in a product basis.

    Parameters
    ----------
    model : MorseModel or JahnTellerModel
    basis : OscillatorBasis (Morse) or RadialDVR (Jahn-Teller)

    Returns
    -------
    EffectiveProblem
        With provenance ``"exact"`` and a :class:`CoupledBasis` attached.

    Notes
    -----
    Morse energies are in units of the well depth.  The Jahn-Teller radial
    channels carry angular factors ``exp(i (j -+ 1/2) phi)``; with
    ``u = sqrt(q) f`` the centrifugal terms become
    ``eps ((j -+ 1/2)**2 - 1/4) / (2 q**2)`` and the channels are coupled
    by ``-q``.
    """
    if isinstance(model, MorseModel):
        if isinstance(basis, RadialDVR):
            raise TypeError("Morse model needs an oscillator-type basis")
        return _assemble_morse(model, basis)
    if isinstance(model, JahnTellerModel):
        if not isinstance(basis, RadialDVR):
            raise TypeError("Jahn-Teller model needs a RadialDVR")
        return _assemble_jt(model, basis)
    raise TypeError(f"unsupported model {type(model).__name__}")


def coupled_state(spectrum, index=0):
    """Eigenvector `index` of an exact spectrum as a :class:`CoupledState`."""
    cb = spectrum.problem.basis
    return CoupledState(spectrum.vectors[:, index], cb)


def operator_matrix(basis, operator):
    """Matrix of ``q``, ``q sigma_z`` or ``sigma_z`` in a :class:`CoupledBasis`.

    ``sigma_z`` is diagonal in the diabatic channels: +1 for the first
    channel and -1 for the second.
    """
    if operator not in OBSERVABLES:
        raise ValueError(f"operator must be one of {OBSERVABLES}")
    b = basis.basis
    phi = b.values
    if operator == "sigma_z":
        scalar = basis.scalar_overlap
    else:
        scalar = (phi * (basis.sqrt_g * b.points)) @ phi.T
    if operator == "q":
        return np.kron(np.eye(basis.channels), scalar)
    sz = np.diag([1.0, -1.0])
    return np.kron(sz, scalar)


def expectation(state, operator, tol=1e-10):
    """``<psi|O|psi>`` for a normalized :class:`CoupledState`."""
    norm = state.norm()
    if abs(norm - 1.0) > tol:
        raise NormalizationError(f"state norm {norm:.12f} deviates from 1")
    c = state.coefficients
    return float(np.real(np.conj(c) @ operator_matrix(state.basis, operator) @ c))
