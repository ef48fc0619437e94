import numpy as np
import pytest

from adiapt.effective_solver import oscillator_basis_for, solve_effective
from adiapt.exact_solver import (
    CoupledState,
    NormalizationError,
    RadialDVR,
    assemble_exact,
    coupled_basis,
    coupled_state,
    expectation,
    operator_matrix,
    radial_dvr_for,
)
from adiapt.jt_analytic import JTQuantumNumbers, analytic_energy
from adiapt.models import JahnTellerModel, MorseModel


def morse_levels(eps, count):
    """Whole-line Morse levels of ``-eps/2 d2 + (1 - exp(-q/sqrt2))**2``."""
    n = np.arange(count) + 0.5
    return np.sqrt(eps) * n - eps * n * n / 4.0


@pytest.mark.parametrize("mass", [1e4, 6.4e4])
def test_uncoupled_morse_channel_matches_analytic_levels(mass):
    m = MorseModel(c=0.0, coords="cartesian_x", mass=mass)
    basis = oscillator_basis_for(m, 120)
    prob = assemble_exact(m, basis)
    N = basis.size
    assert np.abs(prob.H[:N, N:]).max() == 0.0
    res = solve_effective(prob, 3)
    assert np.allclose(res.eigenvalues, morse_levels(m.epsilon, 3), rtol=1e-10, atol=0)
    # the bound levels live entirely in the Morse channel
    assert np.abs(res.vectors[N:]).max() == 0.0


@pytest.mark.parametrize("coords", ["sinh_q", "cartesian_x"])
def test_eigen_residuals(coords):
    m = MorseModel(coords=coords)
    prob = assemble_exact(m, oscillator_basis_for(m, 120))
    res = solve_effective(prob, 6)
    R = prob.H @ res.vectors - prob.S @ res.vectors * res.eigenvalues
    assert np.abs(R).max() <= 1e-11 * np.abs(prob.H).max()


def test_coordinate_systems_agree():
    vals = []
    for coords in ("sinh_q", "cartesian_x"):
        m = MorseModel(coords=coords)
        vals.append(solve_effective(assemble_exact(m, oscillator_basis_for(m, 120)), 3).eigenvalues)
    assert np.allclose(vals[0], vals[1], rtol=0, atol=1e-10)


def test_radial_dvr_displaced_oscillator():
    # states localized away from the origin, as in the trough
    eps = 1e-3
    dvr = radial_dvr_for(eps)
    q = dvr.points
    H = 0.5 * eps * dvr.kinetic() + np.diag(0.5 * (q - 1.0) ** 2)
    w = np.linalg.eigvalsh(H)[:2]
    assert np.allclose(w, np.sqrt(eps) * (np.arange(2) + 0.5), rtol=1e-10, atol=0)


def test_radial_dvr_kinetic_spectrum():
    dvr = RadialDVR(40, 2.0)
    w = np.linalg.eigvalsh(dvr.kinetic())
    assert np.allclose(w, (np.arange(1, 41) * np.pi / 2.0) ** 2, rtol=1e-12)
    with pytest.raises(ValueError):
        RadialDVR(1, 1.0)


def test_jt_ground_state_approaches_trough():
    for eps in (1e-3, 2.5e-4):
        model = JahnTellerModel(eps, 0.5)
        lam = solve_effective(assemble_exact(model, radial_dvr_for(eps)), 1).eigenvalues[0]
        hw = np.sqrt(eps)
        assert abs(lam + 0.5 - 0.5 * hw) < 2 * hw**2
        ref = analytic_energy(eps, JTQuantumNumbers(0.5, 0)) * hw
        assert abs(lam - ref) / hw < 10 * eps**2.5


def test_jt_sign_of_j_is_degenerate():
    eps = 1e-3
    dvr = radial_dvr_for(eps)
    a = solve_effective(assemble_exact(JahnTellerModel(eps, 1.5), dvr), 4).eigenvalues
    b = solve_effective(assemble_exact(JahnTellerModel(eps, -1.5), dvr), 4).eigenvalues
    assert np.allclose(a, b, rtol=0, atol=1e-10)


def test_jt_dvr_converged():
    eps = 1e-3
    model = JahnTellerModel(eps, 0.5)
    fine = solve_effective(assemble_exact(model, radial_dvr_for(eps)), 2).eigenvalues
    coarse = solve_effective(assemble_exact(model, radial_dvr_for(eps, points_per_width=3)),
                             2).eigenvalues
    assert np.abs(fine - coarse).max() < 1e-10


def test_basis_type_checks():
    with pytest.raises(TypeError):
        assemble_exact(MorseModel(), RadialDVR(10, 1.0))
    with pytest.raises(TypeError):
        assemble_exact(JahnTellerModel(1e-3), oscillator_basis_for(MorseModel(), 10))
    with pytest.raises(TypeError):
        assemble_exact(object(), RadialDVR(10, 1.0))


def test_expectation_of_simple_states():
    m = MorseModel()
    basis = oscillator_basis_for(m, 30)
    cb = coupled_basis(m, basis)
    S = cb.scalar_overlap
    w, v = np.linalg.eigh(S)
    c0 = v[:, -1] / np.sqrt(w[-1])
    upper = CoupledState(np.concatenate([c0, np.zeros(30)]), cb)
    lower = CoupledState(np.concatenate([np.zeros(30), c0]), cb)
    assert expectation(upper, "sigma_z") == pytest.approx(1.0, abs=1e-12)
    assert expectation(lower, "sigma_z") == pytest.approx(-1.0, abs=1e-12)
    q_up = expectation(upper, "q")
    assert expectation(upper, "q_sigma_z") == pytest.approx(q_up, abs=1e-12)
    assert expectation(lower, "q_sigma_z") == pytest.approx(-expectation(lower, "q"), abs=1e-12)
    mixed = CoupledState((upper.coefficients + lower.coefficients) / np.sqrt(2), cb)
    assert expectation(mixed, "sigma_z") == pytest.approx(0.0, abs=1e-12)


def test_expectation_requires_normalization():
    m = MorseModel()
    res = solve_effective(assemble_exact(m, oscillator_basis_for(m, 30)), 1)
    psi = coupled_state(res)
    assert psi.norm() == pytest.approx(1.0, abs=1e-12)
    scaled = CoupledState(2.0 * psi.coefficients, psi.basis)
    with pytest.raises(NormalizationError):
        expectation(scaled, "q")
    assert expectation(scaled.normalized(), "q") == pytest.approx(expectation(psi, "q"), abs=1e-12)
    with pytest.raises(ValueError):
        operator_matrix(psi.basis, "p")


def test_operators_are_hermitian():
    m = MorseModel()
    cb = coupled_basis(m, oscillator_basis_for(m, 20))
    for op in ("q", "q_sigma_z", "sigma_z"):
        M = operator_matrix(cb, op)
        assert np.allclose(M, M.conj().T, atol=1e-14)
