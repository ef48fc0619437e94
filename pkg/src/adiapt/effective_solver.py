"""First- and second-order effective Schrodinger equations.

The effective operator for level ``n`` is assembled as a generalized
Hermitian eigenproblem ``H c = lambda S c`` in a basis of functions of the
active coordinate.  After integrating the kinetic term by parts::

    H_ij = eps/2 sum_k sqrt(g) conj(D_mu phi_i) hinv^{mu nu} D_nu phi_j
           + sum_k sqrt(g) phi_i V phi_j
    S_ij = sum_k sqrt(g) phi_i phi_j

with ``D_mu = d_mu - i A_mu``.  At first order ``A`` is the Mead-Truhlar
potential, ``hinv`` the inverse metric and ``V = E_n + eps V_geo``.  At
second order ``A -> A + eps A2``, ``h = g + eps h2`` is inverted pointwise
and ``V`` gains ``eps**2 V_2geo``.  The pair (complex ``A``, Hermitian
``hinv``) keeps ``H`` Hermitian by construction.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.optimize import minimize_scalar

from .numerics import OscillatorBasis, solve_generalized_hermitian

__all__ = [
    "AssemblyError",
    "EffectiveProblem",
    "SpectrumResult",
    "NodeFields",
    "node_fields",
    "assemble_first_order",
    "assemble_second_order",
    "assemble_from_fields",
    "solve_effective",
    "solve_converged",
    "locate_minimum",
    "oscillator_basis_for",
    "grid_for_basis",
    "hermiticity_defect",
]

PROVENANCES = ("exact", "order1", "order2", "analytic")
CONVERGENCE_TOL = 1e-10


class AssemblyError(ValueError):
    """Raised when the effective operator cannot be assembled."""


@dataclass(frozen=True)
class EffectiveProblem:
    """Matrices of a generalized Hermitian eigenproblem and their origin."""

    H: np.ndarray
    S: np.ndarray
    provenance: str
    level: int = 0
    basis: object = None
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.provenance not in PROVENANCES:
            raise ValueError(f"unknown provenance {self.provenance!r}")

    @property
    def order(self):
        return {"order1": 1, "order2": 2}.get(self.provenance)

    @property
    def basis_size(self):
        return self.H.shape[0]


@dataclass(frozen=True)
class SpectrumResult:
    """Eigenvalues (ascending) and S-orthonormal coefficient columns."""

    eigenvalues: np.ndarray
    vectors: np.ndarray
    provenance: str
    problem: EffectiveProblem = field(default=None, repr=False)

    def __len__(self):
        return self.eigenvalues.size


@dataclass(frozen=True)
class NodeFields:
    """Adiabatic fields evaluated at quadrature nodes."""

    points: np.ndarray
    energy: np.ndarray
    metric: np.ndarray
    A: np.ndarray
    vgeo: np.ndarray
    A2: np.ndarray
    h2: np.ndarray
    v2geo: np.ndarray
    cyclic: tuple

    @property
    def sqrt_g(self):
        return np.sqrt(np.linalg.det(self.metric))


def _spline(grid, values, points):
    values = np.asarray(values)
    if np.iscomplexobj(values):
        return _spline(grid, values.real, points) + 1j * _spline(grid, values.imag, points)
    return CubicSpline(grid, values, axis=0)(points)


def node_fields(data, points):
    """Interpolate the fields of `data` to `points` with cubic splines.

    Energies and the metric are evaluated exactly when the data carry the
    fiber and metric callables.
    """
    points = np.asarray(points, dtype=float)
    lo, hi = data.grid[0], data.grid[-1]
    if points.min() < lo or points.max() > hi:
        raise AssemblyError(
            f"quadrature nodes span [{points.min():.4g}, {points.max():.4g}] "
            f"beyond the adiabatic grid [{lo:.4g}, {hi:.4g}]"
        )
    if data.fiber is not None:
        energy = np.linalg.eigvalsh(data.fiber(points))[:, data.level]
    else:
        energy = _spline(data.grid, data.energies[:, data.level], points)
    if data.metric_fn is not None:
        metric = np.asarray(data.metric_fn(points), dtype=float)
    else:
        metric = _spline(data.grid, data.metric, points)
    return NodeFields(
        points=points,
        energy=energy,
        metric=metric,
        A=_spline(data.grid, data.A, points),
        vgeo=_spline(data.grid, data.vgeo, points),
        A2=_spline(data.grid, data.A2, points),
        h2=_spline(data.grid, data.h2, points),
        v2geo=_spline(data.grid, data.v2geo, points),
        cyclic=tuple(data.cyclic),
    )


def assemble_from_fields(fields, basis, epsilon, order, angular_momentum=0, level=0,
                         metadata=None):
    """Assemble the order-1 or order-2 effective problem from node fields.

    Parameters
    ----------
    fields : NodeFields
        Must be evaluated at ``basis.points``.
    basis : OscillatorBasis or RadialSineBasis
    epsilon : float
    order : {1, 2}
    angular_momentum : int
        Integer angular quantum number ``m`` of the factor ``exp(i m phi)``
        carried by cyclic coordinates.
    """
    if order not in (1, 2):
        raise ValueError("order must be 1 or 2")
    if fields.points.shape != basis.points.shape or not np.allclose(
        fields.points, basis.points, rtol=0, atol=0
    ):
        raise AssemblyError("fields were not evaluated at the basis nodes")
    eps = float(epsilon)
    d = fields.metric.shape[-1]
    if len(fields.cyclic) != d or fields.cyclic[0] or not all(fields.cyclic[1:]):
        raise AssemblyError("only the first coordinate may be non-cyclic")
    sqrt_g = fields.sqrt_g
    V = fields.energy + eps * fields.vgeo
    A = fields.A.astype(np.complex128)
    h = fields.metric.astype(np.complex128)
    if order == 2:
        V = V + eps**2 * fields.v2geo
        A = A + eps * fields.A2
        h = h + eps * fields.h2
        low = np.linalg.eigvalsh(h)[:, 0]
        bad = np.flatnonzero(low <= 0)
        if bad.size:
            k = int(bad[0])
            raise AssemblyError(
                f"second-order mass tensor not positive definite at "
                f"q = {fields.points[k]:.6g} (eigenvalue {low[k]:.3e}); "
                "epsilon is outside the regime of the expansion"
            )
    hinv = np.linalg.inv(h)

    phi = basis.values
    dphi = np.empty((d,) + phi.shape, dtype=np.complex128)
    dphi[0] = basis.derivatives - 1j * A[:, 0] * phi
    for mu in range(1, d):
        dphi[mu] = 1j * (angular_momentum - A[:, mu]) * phi

    Hmat = np.zeros((basis.size, basis.size), dtype=np.complex128)
    for mu in range(d):
        for nu in range(d):
            w = 0.5 * eps * sqrt_g * hinv[:, mu, nu]
            Hmat += (np.conj(dphi[mu]) * w) @ dphi[nu].T
    Hmat += (phi * (sqrt_g * V)) @ phi.T
    S = (phi * sqrt_g) @ phi.T
    meta = {"epsilon": eps, "order": order}
    if d > 1:
        meta["angular_momentum"] = angular_momentum
    meta.update(metadata or {})
    return EffectiveProblem(
        H=Hmat, S=S.astype(np.complex128), provenance=f"order{order}",
        level=level, basis=basis, metadata=meta,
    )


def assemble_first_order(adiabatic, basis, epsilon, angular_momentum=0, metadata=None):
    """First-order effective problem for the level of `adiabatic`."""
    fields = node_fields(adiabatic, basis.points)
    return assemble_from_fields(
        fields, basis, epsilon, 1, angular_momentum, adiabatic.level, metadata
    )


def assemble_second_order(adiabatic, basis, epsilon, angular_momentum=0, metadata=None):
    """Second-order effective problem with complex gauge potential and mass tensor."""
    fields = node_fields(adiabatic, basis.points)
    return assemble_from_fields(
        fields, basis, epsilon, 2, angular_momentum, adiabatic.level, metadata
    )


def hermiticity_defect(problem):
    """``max|H_ij - conj(H_ji)| / max|H_ij|`` of an assembled problem."""
    H = problem.H
    return float(np.max(np.abs(H - np.conj(H.T))) / np.max(np.abs(H)))


def solve_effective(problem, count=None):
    """Lowest `count` eigenpairs of an assembled problem.

    Returns
    -------
    SpectrumResult
    """
    w, v = solve_generalized_hermitian(problem.H, problem.S)
    if count is not None:
        w, v = w[:count], v[:, :count]
    return SpectrumResult(w, v, problem.provenance, problem)


def solve_converged(build, start=60, tol=CONVERGENCE_TOL, max_size=480, state=0,
                    count=None):
    """Double the basis size until eigenvalue `state` moves by less than `tol`.

    Parameters
    ----------
    build : callable
        ``build(size)`` returns an :class:`EffectiveProblem`.
    start, max_size : int
        First and largest basis sizes tried.
    tol : float
        Convergence threshold on the shift of eigenvalue `state`.

    Returns
    -------
    result : SpectrumResult
        Spectrum at the largest size tried.
    converged : bool
    shift : float
        Last observed change of eigenvalue `state`.
    """
    size = int(start)
    prev = solve_effective(build(size), count)
    shift = np.inf
    while size * 2 <= max_size:
        size *= 2
        cur = solve_effective(build(size), count)
        shift = abs(cur.eigenvalues[state] - prev.eigenvalues[state])
        prev = cur
        if shift < tol:
            return cur, True, float(shift)
    return prev, False, float(shift)


# basis placement -----------------------------------------------------------

def locate_minimum(energy, bracket, step=1e-3):
    """Minimum of a scalar potential inside `bracket` and its curvature.

    Parameters
    ----------
    energy : callable
        Vectorized ``E(q)``.
    bracket : (float, float)
    step : float
        Spacing of the curvature stencil.

    Returns
    -------
    q_min, curvature : float
    """
    lo, hi = bracket
    scan = np.linspace(lo, hi, 401)
    k = int(np.argmin(energy(scan)))
    a = scan[max(k - 1, 0)]
    b = scan[min(k + 1, scan.size - 1)]
    res = minimize_scalar(lambda t: float(energy(np.array([t]))[0]), bounds=(a, b),
                          method="bounded", options={"xatol": 1e-12})
    q0 = float(res.x)
    pts = q0 + step * np.arange(-2, 3)
    e = energy(pts)
    curv = float(np.dot([-1.0, 16.0, -30.0, 16.0, -1.0], e) / (12.0 * step**2))
    if not curv > 0:
        raise AssemblyError(f"potential has no minimum inside {bracket}")
    return q0, curv


def oscillator_basis_for(model, size, level=0, bracket=(-3.0, 3.0), n_nodes=None):
    """Oscillator basis matched to the local quadratic fit of ``E_n(q)``.

    The centre is the minimum of the adiabatic level and the width
    ``(eps g^qq / k)^(1/4)`` that of the harmonic approximation with
    curvature ``k``.
    """
    def energy(q):
        return np.linalg.eigvalsh(model.fiber(q))[:, level]

    q0, curv = locate_minimum(energy, bracket)
    ginv = float(model.metric(np.array([q0])).ginv[0])
    width = (model.epsilon * ginv / curv) ** 0.25
    return OscillatorBasis(size, q0, width, n_nodes)


def grid_for_basis(basis, spacing=None, pad=6, lower_limit=None):
    """Uniform grid covering every quadrature node of `basis`.

    The default spacing is ``min(0.005, width / 40)`` for oscillator bases
    and ``(upper - lower) / 1000`` otherwise.
    """
    if spacing is None:
        if hasattr(basis, "width"):
            spacing = min(0.005, basis.width / 40.0)
        else:
            spacing = (basis.upper - basis.lower) / 1000.0
    lo = basis.points.min() - pad * spacing
    hi = basis.points.max() + pad * spacing
    if lower_limit is not None and lo <= lower_limit:
        lo = basis.points.min() - 0.5 * (basis.points.min() - lower_limit)
    count = int(np.ceil((hi - lo) / spacing)) + 1
    return lo + spacing * np.arange(count)
