"""Adiabatic data along the heavy coordinate.

Fibers ``H(x)`` are diagonalized point by point, the eigenvector phases
are parallel transported along the grid, and the geometric objects of the
effective equations are built from fourth-order finite differences:

* Mead-Truhlar potential ``A_mu = i <n|d_mu n>``
* covariant derivative ``|D_mu n> = (1 - |n><n|) d_mu |n>``
* scalar potential ``V_geo = g^{mu nu} Re<D_mu n|D_nu n> / 2``
* ``|lap n> = g^{rs} P D_r D_s |n> - g^{rs} Gamma^t_rs |D_t n>``
* the second-order gauge potential, mass-tensor correction and scalar
  potential, all expressed with the reduced resolvent ``(E_n - H)^-1``.

Two engines share the resolvent algebra.  The grid engine works on a
uniform one-dimensional grid (Morse).  The pointwise engine differentiates
on a local stencil around a single point of a d-dimensional space and is
used for the polar Jahn-Teller fiber, where the angle is cyclic.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .numerics import LinearAlgebraError, check_hermitian, solve_linear_hermitian

__all__ = [
    "GAP_FLOOR",
    "DegenerateFiberError",
    "GaugeSmoothingError",
    "AdiabaticData",
    "LocalGeometry",
    "diagonalize_fibers",
    "smooth_gauge",
    "finite_difference",
    "mead_truhlar_potential",
    "covariant_derivative",
    "transported_derivative",
    "geometric_potential",
    "reduced_resolvent_apply",
    "laplacian_state",
    "second_order_quantities",
    "derive_adiabatic",
    "build_adiabatic",
    "regauge",
    "with_states",
    "local_geometry",
    "berry_connection_on_loop",
    "build_polar_adiabatic",
    "dump_adiabatic_csv",
]

GAP_FLOOR = 1e-9


class DegenerateFiberError(ValueError):
    """Raised when two adiabatic levels come closer than the gap floor."""


class GaugeSmoothingError(ValueError):
    """Raised when neighbouring eigenvectors overlap too little to transport."""


@dataclass(frozen=True)
class AdiabaticData:
    """Adiabatic quantities of one level sampled along the active coordinate.

    Arrays have a leading grid axis of length ``K``.  ``d`` is the number of
    heavy coordinates (1 for Morse; 2 for the polar Jahn-Teller fiber, whose
    second coordinate is a cyclic angle sampled at zero) and ``m`` the
    fiber dimension.

    Attributes
    ----------
    grid : ndarray (K,)
        Uniform samples of the active coordinate.
    level : int
        Index ``n`` of the adiabatic level the fields refer to.
    energies : ndarray (K, m)
        All adiabatic energies, ascending.
    states : ndarray (K, m, m)
        Gauge-smoothed eigenvectors; column ``l`` is level ``l``.
    metric : ndarray (K, d, d)
        Covariant metric ``g_mu nu``.
    christoffel : ndarray (K, d, d, d)
        ``Gamma^t_rs`` indexed ``[k, t, r, s]``.
    A : ndarray (K, d)
        Mead-Truhlar potential of level `level`.
    dstate : ndarray (K, d, m)
        ``|D_mu n>``.
    laplacian : ndarray (K, m)
        ``|lap n>``.
    dE : ndarray (K, d)
        Gradient of ``E_n``.
    vgeo, v2geo : ndarray (K,)
        First- and second-order scalar potentials.
    A2 : ndarray (K, d), complex
        Second-order gauge potential.
    h2 : ndarray (K, d, d), complex
        Mass-tensor correction, Hermitian.
    cyclic : tuple of bool
        Which coordinates are cyclic angles absent from the grid.
    fiber, metric_fn : callable, optional
        Exact fiber ``H(q)`` and metric ``g(q)`` on the active coordinate,
        used by the solvers to avoid interpolating energies and measures.
    """

    grid: np.ndarray
    level: int
    energies: np.ndarray
    states: np.ndarray
    metric: np.ndarray
    christoffel: np.ndarray
    A: np.ndarray
    dstate: np.ndarray
    laplacian: np.ndarray
    dE: np.ndarray
    vgeo: np.ndarray
    A2: np.ndarray
    h2: np.ndarray
    v2geo: np.ndarray
    cyclic: tuple = (False,)
    fiber: Optional[Callable] = field(default=None, repr=False, compare=False)
    metric_fn: Optional[Callable] = field(default=None, repr=False, compare=False)

    @property
    def dim(self):
        return self.metric.shape[-1]

    @property
    def spacing(self):
        return float(self.grid[1] - self.grid[0])

    @property
    def ginv(self):
        return np.linalg.inv(self.metric)

    @property
    def sqrt_g(self):
        return np.sqrt(np.linalg.det(self.metric))

    @property
    def state(self):
        """Smoothed eigenvectors of level `level`, shape (K, m)."""
        return self.states[:, :, self.level]

    def to_csv(self, path):
        dump_adiabatic_csv(self, path)


# fibers and gauge ----------------------------------------------------------

def _check_gaps(energies, grid, gap_floor):
    if energies.shape[-1] < 2:
        return
    gaps = np.min(np.diff(energies, axis=-1), axis=-1)
    bad = np.flatnonzero(np.ravel(gaps) < gap_floor)
    if bad.size:
        k = int(bad[0])
        where = f"x = {np.ravel(grid)[k]:.6g}" if grid is not None else f"index {k}"
        raise DegenerateFiberError(
            f"adiabatic gap {np.ravel(gaps)[k]:.3e} below floor {gap_floor:g} at {where}"
        )


def diagonalize_fibers(source, grid=None, gap_floor=GAP_FLOOR):
    """Eigenpairs of the fiber Hamiltonian at every grid point.

    Parameters
    ----------
    source : model, callable or array_like
        An object with a ``fiber(grid)`` method, a callable returning the
        stack of Hamiltonians, or the stack itself, shape (K, m, m).
    grid : array_like, optional
        Grid points (required unless `source` is an array).
    gap_floor : float
        Smallest admissible gap between adjacent levels.

    Returns
    -------
    energies : ndarray (K, m)
    states : ndarray (K, m, m), complex
        Orthonormal eigenvectors in columns.
    """
    if hasattr(source, "fiber"):
        H = source.fiber(grid)
    elif callable(source):
        H = source(grid)
    else:
        H = source
    H = check_hermitian(H, "fiber")
    energies, states = np.linalg.eigh(H)
    _check_gaps(energies, grid, gap_floor)
    return energies, states.astype(np.complex128)


def smooth_gauge(states, min_overlap=0.5):
    """Parallel-transport eigenvector phases along the grid.

    The first point is fixed by making the largest component of every
    vector real and positive.  Each later vector is multiplied by the phase
    that makes its overlap with the previous one real and positive.

    Parameters
    ----------
    states : ndarray (K, m, m)
        Eigenvectors in columns, ordered by level.
    min_overlap : float
        Error threshold for ``|<n_k|n_k+1>|``.

    Returns
    -------
    ndarray (K, m, m)
    """
    U = np.array(states, dtype=np.complex128)
    first = U[0]
    idx = np.argmax(np.abs(first), axis=0)
    lead = first[idx, np.arange(first.shape[1])]
    U[0] = first * (np.conj(lead) / np.abs(lead))
    for k in range(1, U.shape[0]):
        ov = np.sum(np.conj(U[k - 1]) * U[k], axis=0)
        mag = np.abs(ov)
        if np.any(mag < min_overlap):
            raise GaugeSmoothingError(
                f"neighbour overlap {mag.min():.3f} at grid index {k}: "
                "grid too coarse near avoided crossing"
            )
        U[k] *= np.conj(ov) / mag
    return U


def regauge(states, phase):
    """Multiply every eigenvector at grid point k by ``exp(i phase[k])``."""
    phase = np.asarray(phase, dtype=float)
    return np.asarray(states) * np.exp(1j * phase)[:, None, None]


# finite differences --------------------------------------------------------

_C1 = np.array([1.0, -8.0, 0.0, 8.0, -1.0]) / 12.0
_C2 = np.array([-1.0, 16.0, -30.0, 16.0, -1.0]) / 12.0


def finite_difference(f, spacing):
    """Fourth-order first derivative along axis 0 of a uniformly sampled array.

    Centred five-point stencils are used in the interior and one-sided
    five-point stencils at the two outermost points of each end.
    """
    f = np.asarray(f)
    if f.shape[0] < 5:
        raise ValueError("need at least 5 grid points for 4th-order differences")
    h = float(spacing)
    out = np.empty_like(f, dtype=np.result_type(f, float))
    out[2:-2] = (f[:-4] - 8.0 * f[1:-3] + 8.0 * f[3:-1] - f[4:]) / (12.0 * h)
    out[0] = (-25.0 * f[0] + 48.0 * f[1] - 36.0 * f[2] + 16.0 * f[3] - 3.0 * f[4]) / (12.0 * h)
    out[1] = (-3.0 * f[0] - 10.0 * f[1] + 18.0 * f[2] - 6.0 * f[3] + f[4]) / (12.0 * h)
    out[-1] = (25.0 * f[-1] - 48.0 * f[-2] + 36.0 * f[-3] - 16.0 * f[-4] + 3.0 * f[-5]) / (12.0 * h)
    out[-2] = (3.0 * f[-1] + 10.0 * f[-2] - 18.0 * f[-3] + 6.0 * f[-4] - f[-5]) / (12.0 * h)
    return out


def _braket(u, v):
    """``<u|v>`` over the last axis."""
    return np.sum(np.conj(u) * v, axis=-1)


def _project_out(state, v):
    """``(1 - |n><n|) v`` with `state` broadcast against `v`."""
    return v - state * _braket(state, v)[..., None]


def mead_truhlar_potential(state, spacing):
    """``A = i <n|dn>`` on a uniform grid; `state` has shape (K, m)."""
    d = finite_difference(state, spacing)
    return np.real(1j * _braket(state, d))


def _stencil_table(count):
    """Neighbour indices and weights of the 4th-order first-derivative rule.

    Returns
    -------
    index : ndarray (K, 5) of int
    weight : ndarray (K, 5)
        Multiply by ``1 / spacing``.
    """
    if count < 5:
        raise ValueError("need at least 5 grid points for 4th-order differences")
    k = np.arange(count)
    index = np.clip(k[:, None] + np.arange(-2, 3), 0, count - 1)
    weight = np.tile(_C1, (count, 1))
    head = np.arange(5)
    index[0] = index[1] = head
    index[-1] = index[-2] = count - 5 + head
    weight[0] = np.array([-25.0, 48.0, -36.0, 16.0, -3.0]) / 12.0
    weight[1] = np.array([-3.0, -10.0, 18.0, -6.0, 1.0]) / 12.0
    weight[-2] = np.array([-1.0, 6.0, -18.0, 10.0, 3.0]) / 12.0
    weight[-1] = np.array([3.0, -16.0, 36.0, -48.0, 25.0]) / 12.0
    return index, weight


def transported_derivative(state, field, spacing):
    """Derivative of a covariant field in the local gauge of every point.

    Before differencing at point ``k`` each stencil neighbour ``j`` is
    multiplied by the phase that makes ``<n_k|n_j>`` real and positive.
    Fields that transform like ``|n>`` (the state itself, ``|Dn>``) then
    give results that are gauge covariant to rounding error, and the
    local Mead-Truhlar potential vanishes at ``k``.

    Parameters
    ----------
    state : ndarray (K, m)
    field : ndarray (K, m)
    spacing : float
    """
    index, weight = _stencil_table(state.shape[0])
    ov = np.einsum("ki,kji->kj", np.conj(state), state[index])
    mag = np.abs(ov)
    if np.any(mag < 0.5):
        k = int(np.argwhere(mag < 0.5)[0, 0])
        raise GaugeSmoothingError(
            f"neighbour overlap {mag.min():.3f} at grid index {k}: "
            "grid too coarse near avoided crossing"
        )
    phase = np.conj(ov) / mag
    return np.einsum("kj,kj,kji->ki", weight, phase, field[index]) / float(spacing)


def covariant_derivative(state, spacing):
    """``|Dn> = (1 - |n><n|) d|n>`` on a uniform grid, shape (K, m)."""
    return _project_out(state, transported_derivative(state, state, spacing))


def geometric_potential(dstate, ginv):
    """``V_geo = g^{mu nu} Re<D_mu n|D_nu n> / 2``.

    Parameters
    ----------
    dstate : ndarray (K, d, m)
    ginv : ndarray (K, d, d)
    """
    gram = np.einsum("kai,kbi->kab", np.conj(dstate), dstate)
    return 0.5 * np.einsum("kab,kab->k", ginv, gram.real)


def laplacian_state(state, dstate, ginv, christoffel, spacing):
    """``|lap n>`` on a one-dimensional uniform grid.

    ``D D n`` is evaluated in the local gauge of each point (see
    :func:`transported_derivative`), where the gauge potential vanishes.

    Parameters
    ----------
    state, dstate : ndarray (K, m)
        ``|n>`` and ``|Dn>``.
    ginv, christoffel : ndarray (K,)
        Inverse metric and ``Gamma^0_00``.
    spacing : float

    Returns
    -------
    ndarray (K, m)
        Orthogonal to ``|n>``.
    """
    dd = transported_derivative(state, dstate, spacing)
    lap = ginv[:, None] * dd - (ginv * christoffel)[:, None] * dstate
    return _project_out(state, lap)


# resolvent algebra ---------------------------------------------------------

def reduced_resolvent_apply(H, energy, state, v, power=1, check=True):
    """Apply ``(E_n - H)^-power (1 - |n><n|)`` to `v`.

    The singular direction is removed by solving with
    ``E_n - H + |n><n|``, which acts as the identity on ``|n>`` and as
    ``E_n - H`` on its complement, so the solution never acquires an
    ``|n>`` component.  Stacks of fibers are handled in one call.

    Parameters
    ----------
    H : ndarray (..., m, m)
    energy : float or ndarray (...)
        ``E_n``.
    state : ndarray (..., m)
        ``|n>``, normalized.
    v : ndarray (..., m)
    power : {1, 2}
    check : bool
        Verify ``(E_n - H)^power x = P v`` to 1e-11 relative.

    Returns
    -------
    ndarray (..., m)
    """
    if power not in (1, 2):
        raise ValueError("power must be 1 or 2")
    H = np.asarray(H, dtype=np.complex128)
    state = np.asarray(state, dtype=np.complex128)
    v = np.asarray(v, dtype=np.complex128)
    m = H.shape[-1]
    E = np.asarray(energy, dtype=float)[..., None, None]
    shifted = E * np.eye(m) - H
    A = shifted + state[..., :, None] * np.conj(state[..., None, :])
    rhs = _project_out(state, v)
    try:
        x = solve_linear_hermitian(A, rhs)
        if power == 2:
            x = solve_linear_hermitian(A, x)
    except LinearAlgebraError as exc:
        raise DegenerateFiberError(f"reduced resolvent is singular: {exc}") from exc
    if check:
        back = x
        for _ in range(power):
            back = (shifted @ back[..., None])[..., 0]
        # relative bound plus a backward-error floor for right-hand sides
        # that are themselves at roundoff level
        opnorm = np.linalg.norm(shifted, ord=2, axis=(-2, -1)) ** power
        rnorm = np.linalg.norm(rhs, axis=-1)
        floor = np.linalg.norm(v, axis=-1) + opnorm * np.linalg.norm(x, axis=-1)
        tol = 1e-11 * rnorm + 1e-14 * floor
        err = np.linalg.norm(back - rhs, axis=-1)
        if np.any(err > tol):
            worst = float(np.max(err / np.maximum(rnorm, np.finfo(float).tiny)))
            raise LinearAlgebraError(f"resolvent back-application residual {worst:.3e}")
    return x


def second_order_quantities(H, energy, state, dstate, laplacian, ginv, dE):
    """Second-order gauge potential, mass-tensor correction and potential.

    With ``R = (E_n - H)^-1`` on the complement of ``|n>``::

        A2_nu  = i [<D_nu n|R|lap n> - <D_nu n|R^2|D_r n> g^{rs} dE_s]
        h2_mu nu = -2 <D_mu n|R|D_nu n>
        V2geo  = <lap n|R|lap n>/4 - g^{mu nu} dE_nu Re<D_mu n|R^2|lap n>/2

    The factor ``i`` in ``A2`` makes ``A + eps A2`` the potential that
    enters ``(d - i A)`` in the kinetic operator.

    Parameters
    ----------
    H : ndarray (K, m, m)
    energy : ndarray (K,)
    state : ndarray (K, m)
    dstate : ndarray (K, d, m)
    laplacian : ndarray (K, m)
    ginv : ndarray (K, d, d)
    dE : ndarray (K, d)

    Returns
    -------
    A2 : ndarray (K, d), complex
    h2 : ndarray (K, d, d), complex Hermitian
    v2geo : ndarray (K,), real
    """
    K, d, m = dstate.shape
    Hd = np.repeat(H[:, None], d, axis=1)
    Ed = np.repeat(energy[:, None], d, axis=1)
    nd = np.repeat(state[:, None], d, axis=1)
    RD = reduced_resolvent_apply(Hd, Ed, nd, dstate, power=1)
    R2D = reduced_resolvent_apply(Hd, Ed, nd, dstate, power=2)
    Rlap = reduced_resolvent_apply(H, energy, state, laplacian, power=1)
    R2lap = reduced_resolvent_apply(H, energy, state, laplacian, power=2)

    force = np.einsum("krs,ks->kr", ginv, dE)  # g^{rs} dE_s
    A2 = 1j * (
        np.einsum("kvi,ki->kv", np.conj(dstate), Rlap)
        - np.einsum("kvi,kri,kr->kv", np.conj(dstate), R2D, force)
    )
    h2 = -2.0 * np.einsum("kai,kbi->kab", np.conj(dstate), RD)
    h2 = 0.5 * (h2 + np.conj(np.swapaxes(h2, -1, -2)))
    first = 0.25 * np.real(_braket(laplacian, Rlap))
    second = 0.5 * np.einsum(
        "kmv,kv,km->k", ginv, dE, np.real(np.einsum("kmi,ki->km", np.conj(dstate), R2lap))
    )
    return A2, h2, first - second


# grid engine ---------------------------------------------------------------

def derive_adiabatic(
    grid,
    hamiltonians,
    energies,
    states,
    level,
    g00,
    christoffel,
    dhamiltonians=None,
    fiber=None,
    metric_fn=None,
):
    """Build :class:`AdiabaticData` on a uniform 1-d grid from smoothed states.

    The states are used as given, so a regauged copy of smoothed states
    yields the regauged Mead-Truhlar potential and unchanged invariants.

    Parameters
    ----------
    grid : ndarray (K,)
        Uniform grid.
    hamiltonians : ndarray (K, m, m)
    energies : ndarray (K, m)
    states : ndarray (K, m, m)
        Smooth eigenvectors.
    level : int
    g00, christoffel : ndarray (K,)
    dhamiltonians : ndarray (K, m, m), optional
        Analytic ``dH/dq`` for Hellmann-Feynman forces; without it the
        energy is differentiated numerically.
    fiber, metric_fn : callable, optional
        Stored on the result for the solvers.
    """
    grid = np.asarray(grid, dtype=float)
    h = grid[1] - grid[0]
    if not np.allclose(np.diff(grid), h, rtol=1e-9, atol=0.0):
        raise ValueError("adiabatic grid must be uniform")
    n = states[:, :, level]
    A = mead_truhlar_potential(n, h)
    Dn = covariant_derivative(n, h)
    ginv = 1.0 / np.asarray(g00, dtype=float)
    christoffel = np.asarray(christoffel, dtype=float)
    lap = laplacian_state(n, Dn, ginv, christoffel, h)
    if dhamiltonians is not None:
        dE = np.real(_braket(n, (dhamiltonians @ n[..., None])[..., 0]))
    else:
        dE = finite_difference(energies[:, level], h)
    ginv3 = ginv[:, None, None]
    Dn3 = Dn[:, None, :]
    dE2 = dE[:, None]
    vgeo = geometric_potential(Dn3, ginv3)
    A2, h2, v2 = second_order_quantities(
        hamiltonians, energies[:, level], n, Dn3, lap, ginv3, dE2
    )
    return AdiabaticData(
        grid=grid,
        level=int(level),
        energies=np.asarray(energies, dtype=float),
        states=np.asarray(states),
        metric=np.asarray(g00, dtype=float)[:, None, None],
        christoffel=christoffel[:, None, None, None],
        A=A[:, None],
        dstate=Dn3,
        laplacian=lap,
        dE=dE2,
        vgeo=vgeo,
        A2=A2,
        h2=h2,
        v2geo=v2,
        cyclic=(False,),
        fiber=fiber,
        metric_fn=metric_fn,
    )


def build_adiabatic(model, grid, level=0, gap_floor=GAP_FLOOR):
    """Full grid pipeline for a one-dimensional model.

    `model` must provide ``fiber(q)``, ``metric(q)`` (a
    :class:`~adiapt.models.Metric1D`) and may provide
    ``fiber_derivative(q)`` and ``metric_tensor(q)``.
    """
    grid = np.asarray(grid, dtype=float)
    H = model.fiber(grid)
    energies, states = diagonalize_fibers(H, grid, gap_floor)
    states = smooth_gauge(states)
    metric = model.metric(grid)
    dH = model.fiber_derivative(grid) if hasattr(model, "fiber_derivative") else None
    return derive_adiabatic(
        grid,
        H,
        energies,
        states,
        level,
        metric.g00,
        metric.christoffel,
        dhamiltonians=dH,
        fiber=model.fiber,
        metric_fn=getattr(model, "metric_tensor", None),
    )


# pointwise engine ----------------------------------------------------------

@dataclass(frozen=True)
class LocalGeometry:
    """Adiabatic geometry of one level at a single point of a d-dim space.

    Vectors are expressed in a local gauge where ``<n(x0)|n(x)>`` is real,
    so the Mead-Truhlar potential vanishes at the point itself.
    """

    point: np.ndarray
    energies: np.ndarray
    state: np.ndarray
    metric: np.ndarray
    christoffel: np.ndarray
    dstate: np.ndarray
    laplacian: np.ndarray
    dE: np.ndarray
    vgeo: float
    A2: np.ndarray
    h2: np.ndarray
    v2geo: float


def _stencil(d):
    """Offsets (in units of the step) of the local derivative stencil."""
    offsets = [np.zeros(d)]
    for mu in range(d):
        for s in (-2, -1, 1, 2):
            e = np.zeros(d)
            e[mu] = s
            offsets.append(e)
    for mu in range(d):
        for nu in range(mu + 1, d):
            for a in (-2, -1, 1, 2):
                for b in (-2, -1, 1, 2):
                    e = np.zeros(d)
                    e[mu], e[nu] = a, b
                    offsets.append(e)
    return np.array(offsets)


def local_geometry(fiber, point, metric, level=0, step=2e-3, gradient=None,
                   gap_floor=GAP_FLOOR):
    """Adiabatic geometry at one point from a local finite-difference stencil.

    Parameters
    ----------
    fiber : callable
        ``fiber(points)`` with points of shape (P, d) returns (P, m, m).
    point : array_like (d,)
    metric : callable
        ``metric(points)`` returns covariant metrics of shape (P, d, d).
    level : int
    step : float
        Stencil spacing in every coordinate.
    gradient : callable, optional
        ``gradient(point)`` returns the d matrices ``dH/dx_mu``; used for
        Hellmann-Feynman forces.  Without it forces are differentiated.

    Returns
    -------
    LocalGeometry
    """
    x0 = np.atleast_1d(np.asarray(point, dtype=float))
    d = x0.size
    h = float(step)
    offs = _stencil(d)
    pts = x0 + h * offs
    Hs = check_hermitian(fiber(pts), "fiber")
    E, U = np.linalg.eigh(Hs)
    _check_gaps(E, None, gap_floor)
    n = U[:, :, level].astype(np.complex128)
    ov = _braket(n[0], n)
    if np.any(np.abs(ov) < 0.5):
        raise GaugeSmoothingError("stencil step too large for the local gauge")
    n = n * (np.conj(ov) / np.abs(ov))[:, None]
    n0 = n[0]

    def index(o):
        return int(np.flatnonzero(np.all(offs == o, axis=1))[0])

    first = np.zeros((d, n0.size), dtype=np.complex128)
    second = np.zeros((d, d, n0.size), dtype=np.complex128)
    dE_fd = np.zeros(d)
    g_all = np.asarray(metric(pts), dtype=float)
    dg = np.zeros((d, d, d))  # dg[lam, r, s] = d_lam g_rs
    for mu in range(d):
        e = np.zeros(d)
        e[mu] = 1.0
        ids = [index(s * e) for s in (-2, -1, 0, 1, 2)]
        first[mu] = np.tensordot(_C1, n[ids], axes=1) / h
        second[mu, mu] = np.tensordot(_C2, n[ids], axes=1) / h**2
        dE_fd[mu] = np.dot(_C1, E[ids, level]) / h
        dg[mu] = np.tensordot(_C1, g_all[ids], axes=1) / h
    for mu in range(d):
        for nu in range(mu + 1, d):
            acc = np.zeros_like(n0)
            for ia, a in enumerate((-2, -1, 0, 1, 2)):
                for ib, b in enumerate((-2, -1, 0, 1, 2)):
                    w = _C1[ia] * _C1[ib]
                    if w == 0.0:
                        continue
                    e = np.zeros(d)
                    e[mu], e[nu] = a, b
                    acc = acc + w * n[index(e)]
            second[mu, nu] = second[nu, mu] = acc / h**2

    g = g_all[0]
    ginv = np.linalg.inv(g)
    gamma = _christoffel(ginv, dg)

    Dn = _project_out(n0, first)
    lap = np.einsum("rs,rsi->i", ginv, second)
    lap = lap - np.einsum("rs,trs,ti->i", ginv, gamma, Dn)
    lap = _project_out(n0, lap)
    if gradient is not None:
        dH = np.asarray(gradient(x0), dtype=np.complex128)
        dE = np.real(np.einsum("i,mij,j->m", np.conj(n0), dH, n0))
    else:
        dE = dE_fd
    vgeo = float(geometric_potential(Dn[None], ginv[None])[0])
    A2, h2, v2 = second_order_quantities(
        Hs[:1], E[:1, level], n0[None], Dn[None], lap[None], ginv[None], dE[None]
    )
    return LocalGeometry(
        point=x0, energies=E[0], state=n0, metric=g, christoffel=gamma,
        dstate=Dn, laplacian=lap, dE=dE, vgeo=vgeo, A2=A2[0], h2=h2[0],
        v2geo=float(v2[0]),
    )


def _christoffel(ginv, dg):
    """``Gamma^t_rs = g^{tl} (d_r g_ls + d_s g_lr - d_l g_rs) / 2``."""
    # dg[lam, r, s] = d_lam g_rs
    term = (
        np.einsum("rls->lrs", dg)
        + np.einsum("slr->lrs", dg)
        - dg
    )
    return 0.5 * np.einsum("tl,lrs->trs", ginv, term)


def berry_connection_on_loop(states):
    """Constant gauge potential of a closed loop of eigenvectors.

    Parameters
    ----------
    states : ndarray (P, m)
        Eigenvectors at equally spaced angles around the loop, arbitrary
        phases.

    Returns
    -------
    float
        ``gamma / (2 pi)`` with ``gamma`` the Berry phase, folded into
        ``[-1/2, 1/2)``; values within 1e-8 of ``+-1/2`` map to ``-1/2``.
    """
    nxt = np.roll(states, -1, axis=0)
    prod = np.prod(_braket(states, nxt))
    a = -np.angle(prod) / (2.0 * np.pi)
    a = (a + 0.5) % 1.0 - 0.5
    if abs(abs(a) - 0.5) < 1e-8:
        a = -0.5
    return float(a)


def build_polar_adiabatic(model, grid, level=0, step=2e-3, loop_points=64):
    """Adiabatic data of a polar fiber on a radial grid.

    The fiber depends on a radius and a cyclic angle.  Gauge-invariant
    fields are evaluated with :func:`local_geometry` at zero angle; the
    angular Mead-Truhlar potential is the Berry phase of the circle divided
    by ``2 pi``, and the radial one vanishes (parallel transport in radius).

    Parameters
    ----------
    model : object
        Provides ``fiber(q, phi)``, ``fiber_gradient(q, phi)`` and
        ``metric_tensor(q)`` for polar coordinates.
    grid : array_like
        Uniform radial grid with ``q > 0``.
    """
    grid = np.asarray(grid, dtype=float)
    if np.any(grid <= 0):
        raise ValueError("radial grid must be positive")

    def fiber(pts):
        return model.fiber(pts[:, 0], pts[:, 1])

    def metric(pts):
        return model.metric_tensor(pts[:, 0])

    def gradient(x):
        dq, dphi = model.fiber_gradient(x[0], x[1])
        return np.array([dq, dphi])

    phis = 2.0 * np.pi * np.arange(loop_points) / loop_points
    rows = []
    aphi = np.empty(grid.size)
    for k, q in enumerate(grid):
        rows.append(local_geometry(fiber, (q, 0.0), metric, level, step, gradient))
        _, ring = np.linalg.eigh(model.fiber(np.full(loop_points, q), phis))
        aphi[k] = berry_connection_on_loop(ring[:, :, level])
    H = model.fiber(grid, 0.0)
    energies, states = diagonalize_fibers(H, grid)
    states = smooth_gauge(states)
    A = np.zeros((grid.size, 2))
    A[:, 1] = aphi
    return AdiabaticData(
        grid=grid,
        level=int(level),
        energies=energies,
        states=states,
        metric=np.array([r.metric for r in rows]),
        christoffel=np.array([r.christoffel for r in rows]),
        A=A,
        dstate=np.array([r.dstate for r in rows]),
        laplacian=np.array([r.laplacian for r in rows]),
        dE=np.array([r.dE for r in rows]),
        vgeo=np.array([r.vgeo for r in rows]),
        A2=np.array([r.A2 for r in rows]),
        h2=np.array([r.h2 for r in rows]),
        v2geo=np.array([r.v2geo for r in rows]),
        cyclic=(False, True),
        fiber=lambda q: model.fiber(q, 0.0),
        metric_fn=model.metric_tensor,
    )


def with_states(data, states, hamiltonians, dhamiltonians=None):
    """Recompute a 1-d :class:`AdiabaticData` from replacement states."""
    return derive_adiabatic(
        data.grid, hamiltonians, data.energies, states, data.level,
        data.metric[:, 0, 0], data.christoffel[:, 0, 0, 0],
        dhamiltonians=dhamiltonians, fiber=data.fiber, metric_fn=data.metric_fn,
    )


# output --------------------------------------------------------------------

def dump_adiabatic_csv(data, path, x=None):
    """Write one row per grid point.

    Columns: ``q`` (and ``x`` when a physical coordinate is supplied), all
    adiabatic energies ``E_1 ... E_m``, then per heavy coordinate ``A``,
    ``Re_A2`` and ``Im_A2``, followed by ``V_geo``, the diagonal of ``h2``
    and ``V_2geo``.
    """
    d = data.dim
    m = data.energies.shape[1]
    suffix = [""] if d == 1 else [f"_{i}" for i in range(d)]
    header = ["q"] + (["x"] if x is not None else [])
    header += [f"E_{i + 1}" for i in range(m)]
    header += [f"A{s}" for s in suffix] + ["V_geo"]
    header += [f"Re_A2{s}" for s in suffix] + [f"Im_A2{s}" for s in suffix]
    header += [f"h2{s}" for s in suffix] + ["V_2geo"]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for k in range(data.grid.size):
            row = [data.grid[k]] + ([float(np.asarray(x)[k])] if x is not None else [])
            row += list(data.energies[k])
            row += list(data.A[k]) + [data.vgeo[k]]
            row += list(data.A2[k].real) + list(data.A2[k].imag)
            row += list(np.real(np.diagonal(data.h2[k]))) + [data.v2geo[k]]
            w.writerow([repr(float(v)) for v in row])
