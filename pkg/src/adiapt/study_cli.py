"""Parameter sweeps, slope fits and the command-line interface.

Subcommands::

    adiapt morse-scaling  energy errors of the Morse model versus epsilon
    adiapt jt-study       Jahn-Teller radial levels against exact and analytic values
    adiapt observables    <q> and <q sigma_z> from reconstructed states
    adiapt surfaces       diabatic and adiabatic Morse curves

Each writes ``<name>.csv`` or ``<name>.json`` into ``--out``.  The exit
code is 0 on success, 2 when some sweep points failed to converge and were
left out of the fits, and 1 on errors.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .adiabatic import build_adiabatic
from .effective_solver import (
    CONVERGENCE_TOL,
    assemble_first_order,
    assemble_second_order,
    grid_for_basis,
    oscillator_basis_for,
    solve_converged,
    solve_effective,
)
from .exact_solver import assemble_exact, coupled_state, expectation, radial_dvr_for
from .jt_analytic import (
    JTQuantumNumbers,
    analytic_energy,
    jt_basis,
    jt_first_order_problem,
    jt_second_order_problem,
)
from .models import ConfigError, JahnTellerModel, MorseModel, load_config, morse_from_config
from .numerics import fit_line
from .reconstruction import build_g1, decoupling_residual, reconstruct

__all__ = [
    "StudyConfig",
    "ScalingFit",
    "StudyResult",
    "default_masses",
    "config_from_mapping",
    "fit_scaling",
    "run_morse_scaling",
    "run_jt_study",
    "run_observable_study",
    "surface_table",
    "write_table",
    "main",
]

MORSE_HEADER = ("epsilon", "lambda_exact", "lambda_o1", "lambda_o2", "abs_err1", "abs_err2",
                "converged")
JT_HEADER = ("epsilon", "j", "nu", "lambda_exact", "lambda_o1", "lambda_o2", "lambda_analytic",
             "abs_err1", "abs_err2", "abs_err2_analytic", "converged")
OBSERVABLE_HEADER = ("epsilon", "q_exact", "q_rec", "q_product", "qsz_exact", "qsz_rec",
                     "qsz_product", "overlap_rec", "overlap_product", "decoupling_residual",
                     "converged")
SURFACE_HEADER = ("x", "q", "v11", "v22", "v12", "e0", "e1")

MIN_FIT_POINTS = 4


def default_masses():
    """Mass-doubling sweep ``1e3 * 2**k``, ``k = 0..10`` (electron masses)."""
    return [1.0e3 * 2.0**k for k in range(11)]


def _as_list(value):
    return list(value) if isinstance(value, (list, tuple)) else [value]


@dataclass(frozen=True)
class StudyConfig:
    """Settings of one sweep.

    Attributes
    ----------
    model : {"morse", "jahn_teller"}
    morse : MorseModel
        Template whose mass is replaced along the sweep.
    masses : tuple of float
        Morse sweep; sets epsilon.
    epsilons : tuple of float
        Jahn-Teller sweep, descending.
    orders : tuple of int
        Effective orders to run.
    j_values, nu_values : tuple
        Jahn-Teller quantum numbers.
    basis_size, max_basis_size : int
        First and largest heavy-coordinate basis size.
    auto_converge : bool
        Double the basis until eigenvalues move by less than `tolerance`.
    fit_points : int
        Number of smallest-epsilon converged points used in the fits.
    """

    model: str = "morse"
    morse: MorseModel = field(default_factory=MorseModel)
    masses: tuple = tuple(default_masses())
    epsilons: tuple = tuple(1e-3 * 2.0**-k for k in range(7))
    orders: tuple = (1, 2)
    j_values: tuple = (0.5,)
    nu_values: tuple = (0,)
    basis_size: int = 60
    max_basis_size: int = 240
    jt_basis_size: int = 160
    auto_converge: bool = True
    fit_points: int = 6
    tolerance: float = CONVERGENCE_TOL

    def __post_init__(self):
        if self.model not in ("morse", "jahn_teller"):
            raise ConfigError(f"unknown model {self.model!r}")
        if not set(self.orders) <= {1, 2} or not self.orders:
            raise ConfigError("orders must be a non-empty subset of {1, 2}")
        for m in self.masses:
            if not m > 0:
                raise ConfigError("masses must be positive")
        eps = list(self.epsilons)
        if any(not e > 0 for e in eps):
            raise ConfigError("epsilon values must be positive")
        if eps != sorted(eps, reverse=True):
            raise ConfigError("epsilon values must be sorted in descending order")
        if self.fit_points < MIN_FIT_POINTS:
            raise ConfigError(f"fit_points must be at least {MIN_FIT_POINTS}")
        for j in self.j_values:
            JTQuantumNumbers(j)
        for nu in self.nu_values:
            JTQuantumNumbers(0.5, nu)

    def morse_models(self):
        """Models in order of decreasing epsilon."""
        return [self.morse.replace(mass=float(m)) for m in sorted(self.masses)]


def config_from_mapping(cfg):
    """Build a :class:`StudyConfig` from a parsed config mapping."""
    kwargs = {}
    model = str(cfg.get("model", "morse")).lower().replace("-", "_")
    kwargs["model"] = {"jt": "jahn_teller"}.get(model, model)
    kwargs["morse"] = morse_from_config(cfg)
    if "masses" in cfg:
        kwargs["masses"] = tuple(float(m) for m in _as_list(cfg["masses"]))
    elif isinstance(cfg.get("mass"), list):
        kwargs["masses"] = tuple(float(m) for m in cfg["mass"])
    elif "mass" in cfg:
        kwargs["masses"] = (float(cfg["mass"]),)
    for key in ("epsilons", "epsilon"):
        if key in cfg:
            kwargs["epsilons"] = tuple(float(e) for e in _as_list(cfg[key]))
    if "orders" in cfg:
        kwargs["orders"] = tuple(int(o) for o in _as_list(cfg["orders"]))
    if "j" in cfg:
        kwargs["j_values"] = tuple(float(j) for j in _as_list(cfg["j"]))
    if "nu" in cfg:
        kwargs["nu_values"] = tuple(int(n) for n in _as_list(cfg["nu"]))
    for key in ("basis_size", "max_basis_size", "jt_basis_size", "fit_points"):
        if key in cfg:
            kwargs[key] = int(cfg[key])
    if "auto_converge" in cfg:
        kwargs["auto_converge"] = bool(cfg["auto_converge"])
    if "tolerance" in cfg:
        kwargs["tolerance"] = float(cfg["tolerance"])
    try:
        return StudyConfig(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


# fits ----------------------------------------------------------------------

@dataclass(frozen=True)
class ScalingFit:
    """Least-squares line ``ln(err) = intercept + slope ln(eps)``.

    ``window`` holds the row indices used.
    """

    slope: float
    intercept: float
    rms_residual: float
    window: tuple

    def to_dict(self):
        return {"slope": self.slope, "intercept": self.intercept,
                "rms_residual": self.rms_residual, "window": list(self.window)}


def fit_scaling(epsilons, errors, converged=None, points=6):
    """Fit the `points` smallest-epsilon usable rows.

    Rows that did not converge or whose error is not a positive finite
    number are skipped.  Returns None when fewer than four rows remain.
    """
    eps = np.asarray(epsilons, dtype=float)
    err = np.asarray(errors, dtype=float)
    ok = np.isfinite(err) & (err > 0)
    if converged is not None:
        ok &= np.asarray(converged, dtype=bool)
    idx = [int(i) for i in np.argsort(eps, kind="stable") if ok[i]][:points]
    if len(idx) < MIN_FIT_POINTS:
        return None
    idx.sort()
    line = fit_line(np.log(eps[idx]), np.log(err[idx]))
    return ScalingFit(float(line.slope), float(line.intercept), float(line.rms_residual),
                      tuple(idx))


@dataclass(frozen=True)
class StudyResult:
    """Table rows, column names and named fits of one study."""

    name: str
    header: tuple
    rows: list
    fits: dict

    @property
    def excluded(self):
        return sum(1 for r in self.rows if not r.get("converged", True))

    def column(self, key):
        return [r[key] for r in self.rows]


# studies -------------------------------------------------------------------

def _morse_solver(model, order, config):
    """Converged (or fixed-size) ground eigenvalue of one Morse problem."""

    def build(size):
        basis = oscillator_basis_for(model, size)
        if order == 0:
            return assemble_exact(model, basis)
        data = build_adiabatic(model, grid_for_basis(basis))
        if order == 1:
            return assemble_first_order(data, basis, model.epsilon)
        return assemble_second_order(data, basis, model.epsilon)

    if not config.auto_converge:
        return solve_effective(build(config.basis_size)), True
    result, ok, _ = solve_converged(build, config.basis_size, config.tolerance,
                                    config.max_basis_size)
    return result, ok


def run_morse_scaling(config):
    """Ground-state energy errors of the first- and second-order equations.

    Energies are in units of the well depth.  Returns a
    :class:`StudyResult` with fits ``order1`` and ``order2`` of the
    absolute errors against ``ln epsilon``.
    """
    rows = []
    for model in config.morse_models():
        exact, ok = _morse_solver(model, 0, config)
        lam = float(exact.eigenvalues[0])
        row = {"epsilon": model.epsilon, "lambda_exact": lam}
        for order in (1, 2):
            if order in config.orders:
                res, ok_p = _morse_solver(model, order, config)
                ok = ok and ok_p
                val = float(res.eigenvalues[0])
                row[f"lambda_o{order}"] = val
                row[f"abs_err{order}"] = abs(val - lam)
            else:
                row[f"lambda_o{order}"] = None
                row[f"abs_err{order}"] = None
        row["converged"] = bool(ok)
        rows.append(row)
    fits = {}
    eps = [r["epsilon"] for r in rows]
    conv = [r["converged"] for r in rows]
    for order in config.orders:
        errs = [r[f"abs_err{order}"] for r in rows]
        fits[f"order{order}"] = fit_scaling(eps, errs, conv, config.fit_points)
    return StudyResult("morse_scaling", MORSE_HEADER, rows, fits)


def _jt_levels(problem_fn, epsilon, j, count, config):
    def build(size):
        return problem_fn(epsilon, j, jt_basis(epsilon, size))

    if not config.auto_converge:
        return solve_effective(build(config.jt_basis_size), count).eigenvalues, True
    res, ok, _ = solve_converged(build, config.jt_basis_size // 2, config.tolerance,
                                 config.jt_basis_size, state=count - 1, count=count)
    return res.eigenvalues, ok


def _jt_exact_levels(epsilon, j, count, config):
    model = JahnTellerModel(epsilon, j)
    fine = solve_effective(assemble_exact(model, radial_dvr_for(epsilon)), count).eigenvalues
    if not config.auto_converge:
        return fine, True
    coarse = solve_effective(
        assemble_exact(model, radial_dvr_for(epsilon, points_per_width=3.0)), count
    ).eigenvalues
    return fine, bool(np.max(np.abs(fine - coarse)) < config.tolerance)


def run_jt_study(config):
    """Jahn-Teller levels on the lower sheet against exact and analytic values.

    Energies are reported in units of ``2 E_JT`` and errors in units of
    the vibrational quantum ``sqrt(epsilon)``.  Fits are keyed
    ``"<kind>_j<j>_nu<nu>"`` with kinds ``order1_exact``, ``order2_exact``
    and ``order2_analytic``.
    """
    rows = []
    count = max(config.nu_values) + 1
    for eps in config.epsilons:
        hw = np.sqrt(eps)
        for j in config.j_values:
            exact, ok = _jt_exact_levels(eps, j, count, config)
            levels = {}
            for order in config.orders:
                fn = jt_first_order_problem if order == 1 else jt_second_order_problem
                levels[order], ok_p = _jt_levels(fn, eps, j, count, config)
                ok = ok and ok_p
            for nu in config.nu_values:
                analytic = analytic_energy(eps, JTQuantumNumbers(j, nu)) * hw
                row = {"epsilon": eps, "j": j, "nu": nu,
                       "lambda_exact": float(exact[nu])}
                for order in (1, 2):
                    val = float(levels[order][nu]) if order in levels else None
                    row[f"lambda_o{order}"] = val
                row["lambda_analytic"] = analytic
                row["abs_err1"] = (abs(row["lambda_o1"] - row["lambda_exact"]) / hw
                                   if 1 in levels else None)
                row["abs_err2"] = (abs(row["lambda_o2"] - row["lambda_exact"]) / hw
                                   if 2 in levels else None)
                row["abs_err2_analytic"] = (abs(row["lambda_o2"] - analytic) / hw
                                            if 2 in levels else None)
                row["converged"] = bool(ok)
                rows.append(row)
    fits = {}
    for j in config.j_values:
        for nu in config.nu_values:
            sub = [r for r in rows if r["j"] == j and r["nu"] == nu]
            eps = [r["epsilon"] for r in sub]
            conv = [r["converged"] for r in sub]
            for kind, key, order in (("order1_exact", "abs_err1", 1),
                                     ("order2_exact", "abs_err2", 2),
                                     ("order2_analytic", "abs_err2_analytic", 2)):
                if order in config.orders:
                    fits[f"{kind}_j{j:g}_nu{nu}"] = fit_scaling(
                        eps, [r[key] for r in sub], conv, config.fit_points)
    return StudyResult("jt_study", JT_HEADER, rows, fits)


def _overlap(a, b):
    S = a.basis.overlap
    return float(abs(np.conj(a.coefficients) @ S @ b.coefficients) ** 2)


def run_observable_study(config):
    """Observables of reconstructed first-order Morse ground states.

    For every mass the exact ground state, the first-order state lifted
    with the decoupling generator and the plain product state are
    compared.  Fits ``q``, ``q_sigma_z`` and ``decoupling`` are returned.
    """
    rows = []
    for model in config.morse_models():
        eps = model.epsilon
        exact_run, ok = _morse_solver(model, 0, config)
        size = exact_run.problem.basis.size
        basis = oscillator_basis_for(model, size)
        exact = coupled_state(solve_effective(assemble_exact(model, basis)))
        data = build_adiabatic(model, grid_for_basis(basis))
        first = solve_effective(assemble_first_order(data, basis, eps))
        g1 = build_g1(data, basis)
        rec = reconstruct(first, g1, eps)
        prod = reconstruct(first, g1, eps, include_g1=False)
        row = {"epsilon": eps}
        for op, key in (("q", "q"), ("q_sigma_z", "qsz")):
            row[f"{key}_exact"] = expectation(exact, op)
            row[f"{key}_rec"] = expectation(rec, op)
            row[f"{key}_product"] = expectation(prod, op)
        row["overlap_rec"] = _overlap(exact, rec)
        row["overlap_product"] = _overlap(exact, prod)
        row["decoupling_residual"] = decoupling_residual(g1, eps, first.vectors[:, 0]).transformed
        row["converged"] = bool(ok)
        rows.append(row)
    eps = [r["epsilon"] for r in rows]
    conv = [r["converged"] for r in rows]
    fits = {
        "q": fit_scaling(eps, [abs(r["q_rec"] - r["q_exact"]) for r in rows], conv,
                         config.fit_points),
        "q_sigma_z": fit_scaling(eps, [abs(r["qsz_rec"] - r["qsz_exact"]) for r in rows],
                                 conv, config.fit_points),
        "decoupling": fit_scaling(eps, [r["decoupling_residual"] for r in rows], conv,
                                  config.fit_points),
    }
    return StudyResult("observables", OBSERVABLE_HEADER, rows, fits)


def surface_table(model, x_min=2.0, x_max=12.0, count=201):
    """Diabatic and adiabatic Morse curves in hartree on a bond-length grid."""
    x = np.linspace(x_min, x_max, count)
    v11, v22, v12 = model.diabatic(x)[:3]
    e = np.linalg.eigvalsh(model.fiber(model.from_x(x))) * model.de
    rows = [
        {"x": float(x[k]), "q": float(model.from_x(x[k])), "v11": float(v11[k]),
         "v22": float(v22[k]), "v12": float(np.broadcast_to(v12, x.shape)[k]),
         "e0": float(e[k, 0]), "e1": float(e[k, 1])}
        for k in range(count)
    ]
    return StudyResult("surfaces", SURFACE_HEADER, rows, {})


# output --------------------------------------------------------------------

def _fmt(value):
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_table(result, out_dir, fmt="csv"):
    """Write `result` as ``<name>.csv`` or ``<name>.json``; returns the path."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / f"{result.name}.{fmt}"
    if fmt == "csv":
        lines = [",".join(result.header)]
        lines += [",".join(_fmt(r[k]) for k in result.header) for r in result.rows]
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    elif fmt == "json":
        payload = {
            "columns": list(result.header),
            "rows": [{k: r[k] for k in result.header} for r in result.rows],
            "fits": {k: (v.to_dict() if v is not None else None)
                     for k, v in result.fits.items()},
        }
        path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    else:
        raise ValueError(f"unknown format {fmt!r}")
    return path


def _summary(result):
    lines = []
    for name, fit in result.fits.items():
        if fit is None:
            lines.append(f"{name}: not enough converged points for a fit")
        else:
            lines.append(f"{name}: ln err = {fit.intercept:.3f} + {fit.slope:.3f} ln eps "
                         f"(rms {fit.rms_residual:.2e}, rows {list(fit.window)})")
    return lines


def _parser():
    p = argparse.ArgumentParser(prog="adiapt", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    for name, helptext in (
        ("morse-scaling", "Morse ground-state energy errors versus epsilon"),
        ("jt-study", "Jahn-Teller radial levels against exact and analytic values"),
        ("observables", "observables of reconstructed Morse states"),
        ("surfaces", "diabatic and adiabatic Morse curves"),
    ):
        s = sub.add_parser(name, help=helptext)
        s.add_argument("--config", type=Path, help="flat key = value settings file")
        s.add_argument("--out", type=Path, default=Path("."), help="output directory")
        s.add_argument("--orders", default=None, help="comma-separated orders, e.g. 1,2")
        s.add_argument("--format", choices=("csv", "json"), default="csv")
    return p


def _study_config(args, model):
    cfg = load_config(args.config) if args.config else {}
    cfg.setdefault("model", model)
    if args.orders:
        try:
            cfg["orders"] = [int(o) for o in args.orders.split(",") if o.strip()]
        except ValueError as exc:
            raise ConfigError(f"bad --orders value {args.orders!r}") from exc
    return config_from_mapping(cfg)


def main(argv=None):
    """Entry point; returns the process exit code."""
    args = _parser().parse_args(argv)
    try:
        if args.command == "surfaces":
            cfg = load_config(args.config) if args.config else {}
            result = surface_table(morse_from_config(cfg))
        elif args.command == "jt-study":
            result = run_jt_study(_study_config(args, "jahn_teller"))
        elif args.command == "observables":
            result = run_observable_study(_study_config(args, "morse"))
        else:
            result = run_morse_scaling(_study_config(args, "morse"))
        path = write_table(result, args.out, args.format)
    except (ConfigError, ValueError, OSError, np.linalg.LinAlgError) as exc:
        print(f"adiapt: error: {exc}", file=sys.stderr)
        return 1
    for line in _summary(result):
        print(line)
    print(f"wrote {path}")
    if result.excluded:
        print(f"{result.excluded} row(s) not converged and excluded from fits", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
