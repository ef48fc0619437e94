"""Benchmark systems: a two-level Morse diatomic and the linear E x e
Jahn-Teller model, with their coordinates, metrics and small parameter.

Energies handed to the solvers are dimensionless.  The Morse fiber is
measured in units of the well depth ``de`` and the Jahn-Teller fiber in
units of twice the Jahn-Teller stabilization energy.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

__all__ = [
    "DomainError",
    "ConfigError",
    "Metric1D",
    "MorseModel",
    "JahnTellerModel",
    "morse_potential_matrix",
    "sinh_coordinate_map",
    "inverse_sinh_coordinate_map",
    "jt_radial_potentials",
    "epsilon_of",
    "parse_config",
    "load_config",
    "morse_from_config",
    "jahn_teller_from_config",
]

COORDINATE_SYSTEMS = ("cartesian_x", "sinh_q")

# Blend window (bohr) of the whole-line continuation of the Morse fiber.
_BLEND_START = 0.5
_BLEND_END = 1.5
_CORE_RADIUS = 0.5


class DomainError(ValueError):
    """Raised when a coordinate lies outside a model's domain."""


class ConfigError(ValueError):
    """Raised for malformed or inconsistent configuration text."""


@dataclass(frozen=True)
class Metric1D:
    """Metric of a single active coordinate sampled at some points.

    Attributes
    ----------
    g00 : ndarray
        Covariant metric component, strictly positive.
    sqrt_g : ndarray
        Square root of the metric determinant.
    christoffel : ndarray
        The single Christoffel symbol ``Gamma^0_00 = g^00 d g00 / 2``.
    dg00 : ndarray
        Analytic derivative of `g00`.
    """

    g00: np.ndarray
    sqrt_g: np.ndarray
    christoffel: np.ndarray
    dg00: np.ndarray

    @property
    def ginv(self):
        return 1.0 / self.g00


def _smooth_step(t):
    out = np.zeros_like(t)
    pos = t > 0
    out[pos] = np.exp(-1.0 / t[pos])
    return out


def _smooth_step_derivative(t):
    out = np.zeros_like(t)
    pos = t > 0
    out[pos] = np.exp(-1.0 / t[pos]) / t[pos] ** 2
    return out


def _blend(x):
    """C-infinity switch equal to 1 below the blend window and 0 above it."""
    lo = _smooth_step(_BLEND_END - x)
    hi = _smooth_step(x - _BLEND_START)
    return lo / (lo + hi)


def _blend_derivative(x):
    lo = _smooth_step(_BLEND_END - x)
    hi = _smooth_step(x - _BLEND_START)
    dlo = -_smooth_step_derivative(_BLEND_END - x)
    dhi = _smooth_step_derivative(x - _BLEND_START)
    return (dlo * hi - lo * dhi) / (lo + hi) ** 2


@dataclass(frozen=True)
class MorseModel:
    """Two-level diatomic: a Morse well crossed by a repulsive state.

    Parameters are in atomic units.  The default values are the
    benchmark set (well depth 0.015 hartree, mass 1e4 electron masses).

    Attributes
    ----------
    de : float
        Morse well depth (hartree).
    delta : float
        Asymptotic offset of the second diabatic state below ``de``.
    x0 : float
        Equilibrium bond length (bohr).
    a : float
        Morse range parameter (1/bohr).
    b : float
        Strength of the ``b / x**4`` repulsion.
    c : float
        Constant diabatic coupling (enters as ``-c``).
    mass : float
        Reduced mass (electron masses).
    coords : {"sinh_q", "cartesian_x"}
        Active coordinate used by the solvers.
    """

    de: float = 0.015
    delta: float = 0.010
    x0: float = 4.0
    a: float = 0.30
    b: float = 1.00
    c: float = 0.002
    mass: float = 1.0e4
    coords: str = "sinh_q"

    def __post_init__(self):
        for name in ("de", "a", "b", "mass"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.c < 0:
            raise ValueError("c must be non-negative")
        if self.coords not in COORDINATE_SYSTEMS:
            raise ValueError(f"coords must be one of {COORDINATE_SYSTEMS}")
        if not self.epsilon < 1:
            raise ValueError(f"epsilon = {self.epsilon:.3g} is not small")

    @property
    def epsilon(self):
        return 2.0 * self.a**2 / (self.mass * self.de)

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)

    # coordinates -------------------------------------------------------

    def to_x(self, q):
        """Bond length for active coordinate `q`."""
        q = np.asarray(q, dtype=float)
        if self.coords == "cartesian_x":
            return self.x0 + q / (np.sqrt(2.0) * self.a)
        return inverse_sinh_coordinate_map(self, q)

    def from_x(self, x):
        """Active coordinate for bond length `x`."""
        x = np.asarray(x, dtype=float)
        if self.coords == "cartesian_x":
            return np.sqrt(2.0) * self.a * (x - self.x0)
        return sinh_coordinate_map(self, x)

    def dx_dq(self, q):
        q = np.asarray(q, dtype=float)
        if self.coords == "cartesian_x":
            return np.full_like(q, 1.0 / (np.sqrt(2.0) * self.a))
        return 1.0 / (np.sqrt(2.0) * self.a * np.sqrt(1.0 + 0.5 * q * q))

    def metric(self, q):
        """:class:`Metric1D` of the active coordinate at `q`."""
        q = np.asarray(q, dtype=float)
        if self.coords == "cartesian_x":
            one = np.ones_like(q)
            zero = np.zeros_like(q)
            return Metric1D(one, one, zero, zero)
        s = 1.0 + 0.5 * q * q
        return Metric1D(1.0 / s, 1.0 / np.sqrt(s), -0.5 * q / s, -q / s**2)

    def metric_tensor(self, q):
        """Metric as a stack of 1x1 matrices, shape ``q.shape + (1, 1)``."""
        return self.metric(q).g00[..., None, None]

    # fiber -------------------------------------------------------------

    def diabatic(self, x):
        """Whole-line diabatic energies and x-derivatives (hartree).

        For ``x >= 1.5`` bohr these coincide with
        :func:`morse_potential_matrix`.  Below that the ``b / x**4`` wall
        is softened and the repulsive state is lifted onto the Morse wall
        through a C-infinity blend, so the fiber stays smooth and gapped on
        the whole line.  Only regions where the bound states have
        negligible weight are affected.

        Returns
        -------
        v11, v22, v12, d11, d22, d12 : ndarray
        """
        x = np.asarray(x, dtype=float)
        e = np.exp(-self.a * (x - self.x0))
        v11 = self.de * (1.0 - e) ** 2
        d11 = 2.0 * self.de * self.a * e * (1.0 - e)
        s = _blend(x)
        ds = _blend_derivative(x)
        core = x**4 + _CORE_RADIUS**4 * s
        v22 = self.de - self.delta + self.b / core + s * v11
        d22 = -self.b * (4.0 * x**3 + _CORE_RADIUS**4 * ds) / core**2 + ds * v11 + s * d11
        v12 = np.full_like(x, -self.c)
        return v11, v22, v12, d11, d22, np.zeros_like(x)

    def fiber(self, q):
        """Electronic Hamiltonian in units of ``de``, shape ``q.shape + (2, 2)``."""
        v11, v22, v12, *_ = self.diabatic(self.to_x(q))
        return _sym2(v11, v22, v12) / self.de

    def fiber_derivative(self, q):
        """Analytic ``dH/dq`` in units of ``de``."""
        q = np.asarray(q, dtype=float)
        *_, d11, d22, d12 = self.diabatic(self.to_x(q))
        return _sym2(d11, d22, d12) * (self.dx_dq(q) / self.de)[..., None, None]


def _sym2(h11, h22, h12):
    out = np.empty(np.shape(h11) + (2, 2))
    out[..., 0, 0] = h11
    out[..., 1, 1] = h22
    out[..., 0, 1] = h12
    out[..., 1, 0] = h12
    return out


def morse_potential_matrix(model, x):
    """Diabatic 2x2 potential matrix (hartree) of the Morse model.

    Parameters
    ----------
    model : MorseModel
    x : float or array_like
        Bond length in bohr, strictly positive.

    Returns
    -------
    ndarray, shape ``x.shape + (2, 2)``
    """
    x = np.asarray(x, dtype=float)
    if np.any(x <= 0):
        raise DomainError("Morse potential requires x > 0")
    v11 = model.de * (1.0 - np.exp(-model.a * (x - model.x0))) ** 2
    v22 = model.de - model.delta + model.b / x**4
    return _sym2(v11, v22, np.full_like(x, -model.c))


def sinh_coordinate_map(model, x):
    """``q = sqrt(2) sinh(a (x - x0))``, the sinh coordinate with L = 1/a."""
    x = np.asarray(x, dtype=float)
    return np.sqrt(2.0) * np.sinh(model.a * (x - model.x0))


def inverse_sinh_coordinate_map(model, q):
    """Inverse of :func:`sinh_coordinate_map`."""
    q = np.asarray(q, dtype=float)
    return model.x0 + np.arcsinh(q / np.sqrt(2.0)) / model.a


@dataclass(frozen=True)
class JahnTellerModel:
    """Linear E x e Jahn-Teller model in reduced units.

    Energies are in units of ``2 E_JT`` and lengths in units of the
    distortion of the trough, so the lower sheet has its minimum at
    ``q = 1`` and the vibrational quantum is ``sqrt(epsilon)``.

    Attributes
    ----------
    epsilon : float
        Small parameter.
    j : float
        Half-integer vibronic angular momentum.
    """

    epsilon: float
    j: float = 0.5

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        twice = 2.0 * self.j
        if abs(twice - round(twice)) > 1e-12 or round(twice) % 2 == 0:
            raise ValueError(f"j must be half-integer, got {self.j}")

    @property
    def hbar_omega(self):
        return np.sqrt(self.epsilon)

    def fiber(self, q, phi=0.0):
        """Electronic Hamiltonian at polar point ``(q, phi)``."""
        q, phi = np.broadcast_arrays(np.asarray(q, float), np.asarray(phi, float))
        s, c = np.sin(phi), np.cos(phi)
        return _sym2(0.5 * q * q + q * s, 0.5 * q * q - q * s, -q * c)

    def fiber_gradient(self, q, phi=0.0):
        """``(dH/dq, dH/dphi)`` at polar point ``(q, phi)``."""
        q, phi = np.broadcast_arrays(np.asarray(q, float), np.asarray(phi, float))
        s, c = np.sin(phi), np.cos(phi)
        dq = _sym2(q + s, q - s, -c)
        dphi = _sym2(q * c, -q * c, q * s)
        return dq, dphi

    @staticmethod
    def metric_tensor(q):
        """Polar metric ``diag(1, q**2)``, shape ``q.shape + (2, 2)``."""
        q = np.asarray(q, dtype=float)
        g = np.zeros(q.shape + (2, 2))
        g[..., 0, 0] = 1.0
        g[..., 1, 1] = q * q
        return g


def jt_radial_potentials(model, q):
    """Adiabatic radial surfaces of the Jahn-Teller model.

    Returns
    -------
    lower, upper, gap : ndarray
        ``q**2/2 - q``, ``q**2/2 + q`` and ``2 q``.
    """
    q = np.asarray(q, dtype=float)
    if np.any(q <= 0):
        raise DomainError("radial coordinate must be positive")
    return 0.5 * q * q - q, 0.5 * q * q + q, 2.0 * q


def epsilon_of(model):
    """Small parameter of either model."""
    return float(model.epsilon)


# configuration files ---------------------------------------------------

def _parse_scalar(text):
    text = text.strip()
    if len(text) >= 2 and text[0] == text[-1] and text[0] in "'\"":
        return text[1:-1]
    low = text.lower()
    if low in ("true", "yes", "on"):
        return True
    if low in ("false", "no", "off"):
        return False
    for kind in (int, float):
        try:
            return kind(text)
        except ValueError:
            pass
    return text


def parse_config(text):
    """Parse flat ``key = value`` text.

    Blank lines and ``#`` comments are ignored.  Values are converted to
    bool, int or float where possible; comma-separated values become
    lists; surrounding quotes are stripped.  Keys are case-insensitive.

    Returns
    -------
    dict
    """
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ConfigError(f"line {lineno}: empty key")
        key = key.lower()
        if key in out:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        if value.startswith("[") and value.endswith("]"):
            value = value[1:-1]
        if "," in value:
            out[key] = [_parse_scalar(v) for v in value.split(",") if v.strip()]
        else:
            out[key] = _parse_scalar(value)
    return out


def load_config(path):
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())


_MORSE_KEYS = ("de", "delta", "x0", "a", "b", "c", "mass", "coords")
_COORD_ALIASES = {"cartesian": "cartesian_x", "x": "cartesian_x", "sinh": "sinh_q", "q": "sinh_q"}


def morse_from_config(cfg):
    """Build a :class:`MorseModel` from parsed config; missing keys keep defaults."""
    kwargs = {}
    for key in _MORSE_KEYS:
        if key not in cfg:
            continue
        value = cfg[key]
        if key == "coords":
            value = _COORD_ALIASES.get(str(value), str(value))
        elif isinstance(value, list):
            continue  # sweep lists are handled by the study driver
        else:
            value = float(value)
        kwargs[key] = value
    try:
        return MorseModel(**kwargs)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def jahn_teller_from_config(cfg):
    """Build a :class:`JahnTellerModel` from scalar ``epsilon`` and ``j``."""
    try:
        return JahnTellerModel(float(cfg["epsilon"]), float(cfg.get("j", 0.5)))
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"Jahn-Teller config needs scalar epsilon and j: {exc}") from exc
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
