"""Quick checks of the trivial examples, used by ``bergman-lab selftest``."""
from __future__ import annotations

import json

import numpy as np


def _gaussian_zero():
    from .model import KernelPolynomial, ModelParams, gaussian_moment_integrate
    return gaussian_moment_integrate(KernelPolynomial.zero(ModelParams.kahler(1, 1))) == 0


def _zero_operators():
    from .coefficients import PointGeometry, build_O1, build_O2_fully_normal
    from .model import ModelParams
    g = PointGeometry.zero(ModelParams.kahler(2, 2))
    return build_O1(g).is_zero() and build_O2_fully_normal(g).is_zero()


def _zero_coefficients():
    from .coefficients import expansion_coefficient, phi1_numeric
    from .model import LadderPolynomial, ModelParams
    z = LadderPolynomial.zero(ModelParams.kahler(2, 1))
    return (expansion_coefficient(1, z).is_zero() and expansion_coefficient(2, z, z).is_zero()
            and phi1_numeric(z, z) == 0)


def _oracle_zero_is_projector():
    from ._fock import FockOracle
    from .model import KernelPolynomial, LadderPolynomial, ModelParams, eval_kernel
    params = ModelParams.kahler(2, 1)
    z = LadderPolynomial.zero(params)
    k = FockOracle(params, N=12, max_degree=1).coefficient(2, z, z)
    P0 = FockOracle(params, N=12, max_degree=1).coefficient(0, z, z)
    Z = np.array([0.3, -0.2, 0.1])
    Zp = np.array([-0.1, 0.4, 0.2])
    exact = eval_kernel(KernelPolynomial.identity(params), Z, Zp)
    return k(Z, Zp) == 0 and abs(P0(Z, Zp) - exact) < 1e-12


def _closed_zero():
    from .coefficients import PointGeometry, phi_coefficients_closed
    from .model import ModelParams
    phi1, p2 = phi_coefficients_closed(PointGeometry.zero(ModelParams.kahler(3, 2)))
    return phi1 == 0 and p2 == 0


def _group_average_p0():
    from .projective import bergman_kernel, group_average_kernel, make_section_space
    s = make_section_space("CP1_O2", 0)
    z = np.array([0.7 + 0.2j])
    a, f = group_average_kernel(s, z), bergman_kernel(s, "full", z)
    return abs(a - f) < 1e-14 and abs(f - bergman_kernel(s, "full", np.array([3.0]))) < 1e-14


def _richardson_constant():
    from .asymptotics import richardson_extrapolate
    fit = richardson_extrapolate([(p, 7.0) for p in range(100, 1601, 100)])
    # higher coefficients are zero up to rounding, measured by their share of v(p)
    share = [abs(c) * 100.0 ** -e for e, c in zip(fit.exponents[1:], fit.coefficients[1:])]
    return abs(fit.coefficient(0) - 7) < 1e-12 and max(share) < 1e-12


def _gaussian_rate():
    from .asymptotics import fit_gaussian_rate
    q = np.linspace(0.001, 0.02, 15)
    return abs(fit_gaussian_rate(100, q, np.exp(-5 * 100 * q)).rate - 5) < 1e-12


def _localize_p1():
    from .asymptotics import localization_scan
    return abs(localization_scan("CP1_O2", 1, [1.0])[0]["ratio"] - 1) < 1e-14


def _slice_zero_kernel():
    from .asymptotics import normal_slice_integral
    return normal_slice_integral("CP1_O2", 10, 0.5, kernel=lambda w: 0.0) == 0


def _toeplitz_constants():
    from .projective import make_section_space
    from .toeplitz import constant_symbol, toeplitz_matrix
    s = make_section_space("CP1_O2", 6)
    one = toeplitz_matrix(s, constant_symbol(1.0)).entries
    zero = toeplitz_matrix(s, constant_symbol(0.0)).entries
    return np.max(np.abs(one - np.eye(len(one)))) < 1e-12 and not np.any(zero)


def _commutator_self():
    from .projective import make_section_space
    from .toeplitz import commutator_residual, sphere_symbol
    return commutator_residual(make_section_space("CP1_O2", 8), sphere_symbol(1), sphere_symbol(1)) == 0


def _report_formats():
    from .cli import Report, Row, emit_report, parse_report
    empty = Report("selftest", "CP1_O2", ())
    one = Report("selftest", "CP1_O2", (Row("selftest", "CP1_O2", 3, "q", 0.1, 0.1, 1e-3, "pass"),))
    csv_empty = emit_report(empty, "csv")
    csv_one = emit_report(one, "csv")
    return (csv_empty.count("\n") == 1 and csv_one.count("\n") == 2
            and parse_report(emit_report(one, "json"), "json") == one
            and json.loads(emit_report(empty, "json"))["rows"] == [])


CHECKS = (
    ("gaussian_moment_zero", _gaussian_zero),
    ("zero_geometry_operators", _zero_operators),
    ("zero_operator_coefficients", _zero_coefficients),
    ("oracle_zero_operators", _oracle_zero_is_projector),
    ("closed_form_zero_geometry", _closed_zero),
    ("group_average_p0", _group_average_p0),
    ("richardson_constant", _richardson_constant),
    ("gaussian_rate_synthetic", _gaussian_rate),
    ("localization_p1", _localize_p1),
    ("normal_slice_zero_kernel", _slice_zero_kernel),
    ("toeplitz_constant_symbols", _toeplitz_constants),
    ("commutator_equal_symbols", _commutator_self),
    ("report_formats", _report_formats),
)


def run_all():
    out = []
    for name, fn in CHECKS:
        try:
            ok = bool(fn())
        except Exception:  # a crash is a failed check
            ok = False
        out.append((name, ok))
    return out


if __name__ == "__main__":
    for name, ok in run_all():
        print(f"{'PASS' if ok else 'FAIL'} {name}")
