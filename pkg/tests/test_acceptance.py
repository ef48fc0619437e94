"""Acceptance criteria, one PASS/FAIL line each.

The sweeps are run once per module; every criterion is checked at its
stated tolerance.
"""

import time

import numpy as np
import pytest

from adiapt.adiabatic import build_adiabatic, build_polar_adiabatic, reduced_resolvent_apply, regauge, with_states
from adiapt.effective_solver import (
    assemble_first_order,
    assemble_second_order,
    grid_for_basis,
    hermiticity_defect,
    oscillator_basis_for,
    solve_converged,
    solve_effective,
)
from adiapt.jt_analytic import jt_basis, jt_pipeline_problem, jt_second_order_problem
from adiapt.models import JahnTellerModel, MorseModel
from adiapt.reconstruction import build_g1
from adiapt.study_cli import StudyConfig, fit_scaling, run_jt_study, run_morse_scaling, run_observable_study
from conftest import random_hermitian

JT_J = (0.5, 1.5)
JT_NU = (0, 1)
APPROX = 0.2  # tolerance used for the "approximately" slopes of criterion 5


@pytest.fixture
def report(capsys):
    def emit(number, ok, detail):
        with capsys.disabled():
            print(f"\n{'PASS' if ok else 'FAIL'} criterion {number}: {detail}")
        assert ok, detail

    return emit


@pytest.fixture(scope="module")
def morse_sweep():
    start = time.perf_counter()
    result = run_morse_scaling(StudyConfig())
    return result, time.perf_counter() - start


@pytest.fixture(scope="module")
def jt_sweep():
    return run_jt_study(StudyConfig(model="jahn_teller", j_values=JT_J, nu_values=JT_NU))


@pytest.fixture(scope="module")
def observable_sweep():
    return run_observable_study(StudyConfig())


def test_criterion_1_first_order_scaling(morse_sweep, report):
    result, seconds = morse_sweep
    fit = result.fits["order1"]
    ok = (fit is not None and abs(fit.slope - 1.50) <= 0.10
          and abs(fit.intercept + 3.49) <= 0.5 and seconds < 120 and result.excluded == 0)
    report(1, ok, f"slope {fit.slope:.3f} (1.50 +- 0.10), intercept {fit.intercept:.3f} "
                  f"(-3.49 +- 0.5), {len(result.rows)} masses in {seconds:.1f} s")


def test_criterion_2_second_order_scaling(morse_sweep, report):
    result, _ = morse_sweep
    fit = result.fits["order2"]
    ok = fit is not None and abs(fit.slope - 2.49) <= 0.15 and abs(fit.intercept + 2.33) <= 0.5
    report(2, ok, f"slope {fit.slope:.3f} (2.49 +- 0.15), intercept {fit.intercept:.3f} "
                  f"(-2.33 +- 0.5)")


def test_criterion_3_coordinate_invariance(report):
    worst = 0.0
    for mass in (1e3, 1e4, 1e5, 1e6):
        vals = {}
        for coords in ("sinh_q", "cartesian_x"):
            m = MorseModel(mass=mass, coords=coords)
            for order, assemble in ((1, assemble_first_order), (2, assemble_second_order)):
                def build(size, m=m, assemble=assemble):
                    b = oscillator_basis_for(m, size)
                    return assemble(build_adiabatic(m, grid_for_basis(b)), b, m.epsilon)

                res, conv, _ = solve_converged(build, 60, max_size=240)
                assert conv
                vals[coords, order] = res.eigenvalues[0] * m.de
        for order in (1, 2):
            worst = max(worst, abs(vals["sinh_q", order] - vals["cartesian_x", order]))
    report(3, worst <= 1e-8, f"max |lambda(sinh) - lambda(cartesian)| = {worst:.2e} hartree "
                             "(<= 1e-8)")


def test_criterion_4_gauge_invariance(report):
    rng = np.random.default_rng(4)
    m = MorseModel()
    b = oscillator_basis_for(m, 120)
    q = grid_for_basis(b)
    base = build_adiabatic(m, q)
    ref = {o: solve_effective(f(base, b, m.epsilon), 6).eigenvalues
           for o, f in ((1, assemble_first_order), (2, assemble_second_order))}
    eig_dev = field_dev = 0.0
    span = q[-1] - q[0]
    for _ in range(5):
        # random smooth phase: a few low Fourier modes plus a quadratic
        k = rng.uniform(0.2, 3.0, size=3) * 2 * np.pi / span
        lam = sum(rng.uniform(-1, 1) * np.sin(kk * q + rng.uniform(0, 2 * np.pi)) for kk in k)
        lam = lam + rng.uniform(-0.5, 0.5) * ((q - q.mean()) / span) ** 2
        new = with_states(base, regauge(base.states, lam), m.fiber(q), m.fiber_derivative(q))
        for name in ("vgeo", "A2", "h2", "v2geo"):
            field_dev = max(field_dev, float(np.abs(getattr(new, name) - getattr(base, name)).max()))
        for o, f in ((1, assemble_first_order), (2, assemble_second_order)):
            w = solve_effective(f(new, b, m.epsilon), 6).eigenvalues
            eig_dev = max(eig_dev, float(np.abs(w - ref[o]).max()))
    ok = eig_dev <= 1e-9 and field_dev <= 1e-9
    report(4, ok, f"eigenvalue shift {eig_dev:.2e} (<= 1e-9), pointwise field shift "
                  f"{field_dev:.2e} (<= 1e-9)")


def test_criterion_5_jahn_teller_oracle(jt_sweep, report):
    fits = jt_sweep.fits
    analytic = {(j, nu): fits[f"order2_analytic_j{j:g}_nu{nu}"].slope for j in JT_J for nu in JT_NU}
    exact2 = fits["order2_exact_j0.5_nu0"].slope
    exact1 = fits["order1_exact_j0.5_nu0"].slope
    ok = (min(analytic.values()) >= 2.4 and abs(exact2 - 2.5) <= APPROX
          and abs(exact1 - 1.5) <= APPROX and jt_sweep.excluded == 0)
    report(5, ok, f"analytic slopes min {min(analytic.values()):.3f} (>= 2.4) over j in {JT_J}, "
                  f"nu in {JT_NU}; exact slopes order2 {exact2:.3f}, order1 {exact1:.3f} "
                  f"(2.5, 1.5 +- {APPROX})")


def test_criterion_6_jahn_teller_geometry(report):
    q = np.linspace(0.5, 3.0, 51)
    d = build_polar_adiabatic(JahnTellerModel(1e-3), q)
    vgeo = float(np.abs(d.vgeo * 8 * q**2 - 1).max())
    h2 = float(np.abs(d.h2[:, 1, 1] * 4 * q - 1).max())
    zero = float(max(np.abs(d.A2).max(), np.abs(d.v2geo).max()))
    ok = vgeo <= 1e-8 and h2 <= 1e-8 and zero <= 1e-9
    report(6, ok, f"V_geo rel {vgeo:.1e}, h2_phiphi rel {h2:.1e} (<= 1e-8); "
                  f"|A2|, |V2geo| <= {zero:.1e} (<= 1e-9)")


def test_criterion_7_observable_scaling(observable_sweep, report):
    fq = observable_sweep.fits["q"].slope
    fz = observable_sweep.fits["q_sigma_z"].slope
    ok = abs(fq - 1.5) <= 0.2 and abs(fz - 1.5) <= 0.2 and observable_sweep.excluded == 0
    report(7, ok, f"<q> slope {fq:.3f}, <q sigma_z> slope {fz:.3f} (1.5 +- 0.2)")


def test_criterion_8_resolvent_and_generator(observable_sweep, report):
    rng = np.random.default_rng(8)
    res_dev = 0.0
    for _ in range(200):
        m = int(rng.integers(2, 7))
        H = random_hermitian(rng, m)
        E, U = np.linalg.eigh(H)
        level = int(rng.integers(m))
        v = rng.normal(size=m) + 1j * rng.normal(size=m)
        for power in (1, 2):
            x = reduced_resolvent_apply(H, E[level], U[:, level], v, power)
            for _ in range(power):
                x = (E[level] * np.eye(m) - H) @ x
            P = v - U[:, level] * (U[:, level].conj() @ v)
            res_dev = max(res_dev, np.linalg.norm(x - P) / np.linalg.norm(P))

    herm = 0.0
    for model in StudyConfig().morse_models():
        b = oscillator_basis_for(model, 60)
        herm = max(herm, build_g1(build_adiabatic(model, grid_for_basis(b)), b).hermiticity_defect())

    decoupling = observable_sweep.fits["decoupling"].slope

    model = MorseModel()
    data = build_adiabatic(model, np.arange(-1.0, 5.0, 0.005))
    l = data.states[:, :, 1]
    a = np.sum(np.conj(l) * data.dstate[:, 0], axis=-1)
    bb = np.sum(np.conj(l) * data.laplacian, axis=-1)
    delta = data.energies[:, 0] - data.energies[:, 1]
    g, dE = data.ginv[:, 0, 0], data.dE[:, 0]
    sos = {
        "A2": 1j * (np.conj(a) * bb / delta - np.abs(a) ** 2 * g * dE / delta**2),
        "h2": -2 * np.abs(a) ** 2 / delta,
        "v2geo": 0.25 * np.abs(bb) ** 2 / delta - 0.5 * g * dE * np.real(np.conj(a) * bb) / delta**2,
    }
    got = {"A2": data.A2[:, 0], "h2": data.h2[:, 0, 0], "v2geo": data.v2geo}
    sos_dev = max(float(np.abs(got[k] - sos[k]).max()) for k in sos)

    ok = res_dev <= 1e-11 and herm <= 1e-10 and decoupling >= 1.4 and sos_dev <= 1e-10
    report(8, ok, f"resolvent residual {res_dev:.1e} (<= 1e-11), G1 hermiticity {herm:.1e} "
                  f"(<= 1e-10), decoupling slope {decoupling:.3f} (>= 1.4), two-level "
                  f"sum over states {sos_dev:.1e} (<= 1e-10)")


def test_criterion_9_second_order_hermiticity(report):
    worst = 0.0
    cfg = StudyConfig()
    for coords in ("sinh_q", "cartesian_x"):
        for model in cfg.morse_models():
            model = model.replace(coords=coords)
            b = oscillator_basis_for(model, 60)
            p = assemble_second_order(build_adiabatic(model, grid_for_basis(b)), b, model.epsilon)
            worst = max(worst, hermiticity_defect(p))
    for eps in cfg.epsilons:
        b = jt_basis(eps, 60)
        for j in JT_J:
            worst = max(worst, hermiticity_defect(jt_pipeline_problem(eps, j, b, order=2)))
            worst = max(worst, hermiticity_defect(jt_second_order_problem(eps, j, b)))
    report(9, worst <= 1e-11, f"max relative hermiticity defect {worst:.1e} (<= 1e-11) over "
                              f"{2 * len(cfg.masses)} Morse and {len(cfg.epsilons)} JT epsilons")


# supporting checks of the sweeps -------------------------------------------

def test_fit_window_robustness(morse_sweep, observable_sweep):
    result, _ = morse_sweep
    eps = np.array(result.column("epsilon"))
    for key, errs in (("order1", result.column("abs_err1")), ("order2", result.column("abs_err2"))):
        full = result.fits[key]
        drop = fit_scaling(eps[1:], np.array(errs)[1:], points=len(full.window) - 1)
        assert abs(drop.slope - full.slope) < 0.05


def test_reconstruction_ablation(observable_sweep):
    for row in observable_sweep.rows:
        assert row["overlap_rec"] > row["overlap_product"]
