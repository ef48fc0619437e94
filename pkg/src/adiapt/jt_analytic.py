"""Closed-form radial equations of the linear E x e Jahn-Teller model.

On the lower adiabatic sheet the vibronic angular momentum ``j`` is
conserved and the effective equations reduce to radial problems for
``zeta = f(q) exp(i (j - A_phi) phi)`` with measure ``q dq``.  In units of
``2 E_JT``::

    first order   -eps/2 (f'' + f'/q) + eps j**2/(2 q**2) + q**2/2 - q + eps/(8 q**2)
    second order  first order - eps**2 j**2 / (8 q**5)

The second-order correction is the expansion of the centrifugal term
``eps j**2 / (2 (q**2 + eps/(4 q)))`` built from the corrected moment of
inertia; ``expanded=False`` keeps the unexpanded form.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .adiabatic import build_polar_adiabatic
from .effective_solver import EffectiveProblem, assemble_from_fields, node_fields, grid_for_basis
from .models import JahnTellerModel
from .numerics import RadialSineBasis

__all__ = [
    "JTQuantumNumbers",
    "analytic_coefficients",
    "analytic_energy",
    "jt_basis",
    "jt_radial_potential",
    "jt_first_order_problem",
    "jt_second_order_problem",
    "jt_pipeline_problem",
]


@dataclass(frozen=True)
class JTQuantumNumbers:
    """Vibronic angular momentum ``j`` (half-integer) and radial number ``nu``."""

    j: float
    nu: int = 0

    def __post_init__(self):
        twice = 2.0 * self.j
        if abs(twice - round(twice)) > 1e-12 or round(twice) % 2 == 0:
            raise ValueError(f"j must be half-integer, got {self.j}")
        if int(self.nu) != self.nu or self.nu < 0:
            raise ValueError(f"nu must be a non-negative integer, got {self.nu}")

    @property
    def j_fraction(self):
        return Fraction(round(2 * self.j), 2)


def analytic_coefficients(qn):
    """Exact coefficients of ``lambda / (hbar omega)`` in powers of ``sqrt(eps)``.

    Returns
    -------
    dict
        Maps the power ``p`` of ``eps`` (a Fraction from -1/2 to 2) to its
        rational coefficient.
    """
    j2 = qn.j_fraction**2
    nu = Fraction(int(qn.nu))
    n = nu + Fraction(1, 2)
    half = Fraction(1, 2)
    return {
        -half: -half,
        Fraction(0): n,
        half: j2 / 2,
        Fraction(1): Fraction(3, 2) * j2 * n,
        Fraction(3, 2): j2 / 8 * (30 * (nu * nu + nu + half) - 1) - j2 * j2 / 2,
        Fraction(2): Fraction(5, 16) * j2 * (28 * n**3 + 29 * n) - Fraction(57, 8) * j2 * j2 * n,
    }


def analytic_energy(epsilon, qn):
    """Second-order eigenenergy in units of the vibrational quantum.

    Parameters
    ----------
    epsilon : float
        Positive small parameter.
    qn : JTQuantumNumbers

    Returns
    -------
    float
        ``lambda / (hbar omega)``; multiply by ``sqrt(epsilon)`` for units of
        ``2 E_JT``.
    """
    eps = float(epsilon)
    if not eps > 0:
        raise ValueError("epsilon must be positive")
    return float(sum(float(c) * eps ** float(p) for p, c in analytic_coefficients(qn).items()))


def jt_basis(epsilon, size, width=14.0, q_floor=0.1):
    """Radial sine basis on ``[max(q_floor, 1 - w s), 1 + w s]`` with ``s = eps**0.25``."""
    sigma = float(epsilon) ** 0.25
    return RadialSineBasis(size, max(q_floor, 1.0 - width * sigma), 1.0 + width * sigma)


def jt_radial_potential(q, epsilon, j, order=1, expanded=True):
    """Radial effective potential of the lower sheet, units of ``2 E_JT``."""
    q = np.asarray(q, dtype=float)
    eps = float(epsilon)
    j2 = float(j) ** 2
    base = 0.5 * q * q - q + eps / (8.0 * q * q)
    if order == 1:
        return base + 0.5 * eps * j2 / q**2
    if order != 2:
        raise ValueError("order must be 1 or 2")
    if expanded:
        return base + 0.5 * eps * j2 / q**2 - eps**2 * j2 / (8.0 * q**5)
    return base + 0.5 * eps * j2 / (q * q + eps / (4.0 * q))


def _radial_problem(epsilon, j, basis, order, expanded):
    q = basis.points
    phi, dphi = basis.values, basis.derivatives
    V = jt_radial_potential(q, epsilon, j, order, expanded)
    H = 0.5 * float(epsilon) * (dphi * q) @ dphi.T + (phi * (q * V)) @ phi.T
    S = (phi * q) @ phi.T
    return EffectiveProblem(
        H=H.astype(np.complex128), S=S.astype(np.complex128),
        provenance=f"order{order}", level=0, basis=basis,
        metadata={"epsilon": float(epsilon), "j": float(j), "expanded": expanded},
    )


def jt_first_order_problem(epsilon, j, basis):
    """Closed-form first-order radial problem on the lower sheet."""
    JTQuantumNumbers(j)
    return _radial_problem(epsilon, j, basis, 1, True)


def jt_second_order_problem(epsilon, j, basis, expanded=True):
    """Closed-form second-order radial problem on the lower sheet."""
    JTQuantumNumbers(j)
    return _radial_problem(epsilon, j, basis, 2, expanded)


def jt_pipeline_problem(epsilon, j, basis, order=1, grid=None, step=2e-3):
    """Radial problem assembled by the generic adiabatic pipeline.

    The polar fiber is processed pointwise, the angular factor carries
    ``m = j + A_phi`` and the generic assembly is used with the unexpanded
    second-order mass tensor.
    """
    model = JahnTellerModel(epsilon, j)
    if grid is None:
        grid = grid_for_basis(basis, lower_limit=0.0)
    data = build_polar_adiabatic(model, grid, level=0, step=step)
    A_phi = float(np.mean(data.A[:, 1]))
    fields = node_fields(data, basis.points)
    return assemble_from_fields(
        fields, basis, epsilon, order, angular_momentum=j + A_phi,
        metadata={"j": float(j), "A_phi": A_phi},
    )
