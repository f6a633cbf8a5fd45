"""Acceptance criteria, one or more tests per criterion.

Each test carries a ``criterion`` marker; conftest prints one PASS/FAIL
line per criterion at the end of the run.
"""
import math
import time
import warnings

import numpy as np
import pytest

import test_model as tm
from bergman_lab._fock import FockOracle
from bergman_lab.asymptotics import (
    decay_fit,
    invariant_dimension_report,
    localization_scan,
    normal_slice_integral,
    richardson_extrapolate,
    scaled_diagonal,
    singular_weight_scaling,
)
from bergman_lab.coefficients import (
    GeometryWarning,
    brute_force_coefficient,
    build_O1,
    build_O2_fully_normal,
    compute_coefficients,
    expansion_coefficient,
    random_geometry,
)
from bergman_lab.model import (
    KernelPolynomial,
    LadderPolynomial,
    ModelParams,
    compose,
    eval_kernel,
    to_eigen_form,
)
from bergman_lab.projective import (
    bergman_kernel,
    cp1_point_geometry,
    group_average_kernel,
    make_section_space,
    quadrature_gram,
)
from bergman_lab.toeplitz import (
    commutator_residual,
    invariant_symbol,
    invariant_toeplitz,
    isometry_defect,
    sphere_symbol,
    symbol_t_ratio,
    toeplitz_matrix,
)

from helpers import random_kernel, random_points

_START = time.perf_counter()
SQRT2 = math.sqrt(2.0)
CP1, CP2 = "CP1_O2", "CP2_O2_level_half"
L = LadderPolynomial
criterion = pytest.mark.criterion


def quiet_geometry(params, rng, **kw):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", GeometryWarning)
        return random_geometry(params, rng, **kw)


# ---------------------------------------------------------------- 1

@criterion(1, "ladder-engine evaluation identities and commutators")
def test_criterion_01_engine_identities():
    t0 = time.perf_counter()
    for seed in range(3):
        tm.test_horizontal_evaluation_table(seed)
    tm.test_projected_linear_pair()
    tm.test_mixed_annihilator_values()
    tm.test_normal_gaussian_powers()
    tm.test_projector_normal_square()
    tm.test_eigen_form_normal_square()
    for seed in range(4):
        tm.test_commutation_relations_on_random_states(seed)
    assert time.perf_counter() - t0 < 30


# ---------------------------------------------------------------- 2

@criterion(2, "first-order leak vanishes on 100 random geometries (N = 30)")
def test_criterion_02_leak_vanishes():
    dims = [(1, 1), (2, 1), (2, 2), (3, 2)]
    worst = 0.0
    for d in dims:
        params = ModelParams.kahler(*d)
        oracle = FockOracle(params, N=30, max_degree=3)
        rng = np.random.default_rng(1000 + 10 * d[0] + d[1])
        for _ in range(25):
            O1 = build_O1(quiet_geometry(params, rng))
            worst = max(worst, float(np.max(np.abs(oracle.sandwich(O1)))))
    assert worst < 1e-10


# ---------------------------------------------------------------- 3

def _kinds(p):
    out = []
    for i in range(p.nh):
        out += [("z", i), ("zb", i), ("b", i), ("bp", i)]
    for i in range(p.n0):
        out += [("Z", i), ("bn", i), ("bnp", i)]
    return out


def _random_words(p, rng, maxdeg, nterms):
    kinds = _kinds(p)
    out = L.zero(p)
    for _ in range(nterms):
        w = L.const(p, 0.5 * complex(rng.normal(), rng.normal()))
        for _ in range(int(rng.integers(0, maxdeg + 1))):
            k, i = kinds[rng.integers(len(kinds))]
            w = w * L.letter(p, k, i)
        out = out + w
    return out


def _random_operators(p, rng):
    """Self-adjoint O1 without leak (A + A^* with A = lowering letter times a word) and O2."""
    lowers = [("b", i) for i in range(p.nh)] + [("bn", i) for i in range(p.n0)]
    A = L.zero(p)
    for _ in range(3):
        k, i = lowers[rng.integers(len(lowers))]
        A = A + L.letter(p, k, i) * _random_words(p, rng, 3, 2)
    B = _random_words(p, rng, 4, 4)
    return A + A.adjoint(), B + B.adjoint()


@criterion(3, "engine coefficients agree with the matrix oracle")
def test_criterion_03_oracle_equivalence():
    t0 = time.perf_counter()
    worst = 0.0
    for n, n0 in [(1, 1), (2, 1), (2, 2), (3, 2)]:
        params = ModelParams.kahler(n, n0)
        rng = np.random.default_rng(30 + 10 * n + n0)
        geom = quiet_geometry(params, rng, scale=0.5)
        cases = [(build_O1(geom), build_O2_fully_normal(geom) if n == n0 else None)]
        cases += [_random_operators(params, rng) for _ in range(2)]
        for O1, O2 in cases:
            assert max(O1.degree(), 0 if O2 is None else O2.degree()) <= 4
            pts = random_points(params, rng, 6, radius=1.0)
            for r in (1, 2):
                k = expansion_coefficient(r, O1, O2)
                eng = np.array([eval_kernel(k, Z, Zp) for Z, Zp in pts])
                bf = brute_force_coefficient(r, O1, O2, N=30, points=pts)
                worst = max(worst, float(np.max(np.abs(eng - bf))))
    assert worst < 1e-8
    assert time.perf_counter() - t0 < 120


# ---------------------------------------------------------------- 4

@criterion(4, "CP^1 battery: dimension, Gram, expansion, coefficients, normal slice")
def test_criterion_04a_invariant_dimension():
    assert all(make_section_space(CP1, p).invariant_dimension == 1 for p in range(1, 501))


@criterion(4, "CP^1 battery: dimension, Gram, expansion, coefficients, normal slice")
def test_criterion_04b_quadrature_gram():
    for p in range(1, 51):
        G = quadrature_gram(make_section_space(CP1, p))
        assert np.max(np.abs(G - np.eye(len(G)))) < 1e-10, p


def _cp1_fit(grid):
    return richardson_extrapolate([(p, scaled_diagonal(make_section_space(CP1, p))) for p in grid])


@criterion(4, "CP^1 battery: dimension, Gram, expansion, coefficients, normal slice")
@pytest.mark.parametrize("grid", [(100, 200, 400, 800, 1600), tuple(range(100, 1601, 100))],
                         ids=["doubling", "step100"])
def test_criterion_04c_expansion(grid):
    fit = _cp1_fit(grid)
    assert abs(fit.coefficient(0) - SQRT2) < 1e-6
    assert abs(fit.coefficient(0.5)) < 1e-6
    assert abs(fit.coefficient(1) - 3 * SQRT2 / 8) < 1e-4


@criterion(4, "CP^1 battery: dimension, Gram, expansion, coefficients, normal slice")
def test_criterion_04d_engine_coefficient():
    res = compute_coefficients(cp1_point_geometry())
    c1 = _cp1_fit((100, 200, 400, 800, 1600)).coefficient(1)
    assert abs(res.p2_zero_engine - c1) < 1e-4
    assert abs(res.p2_zero_engine - res.p2_zero_closed) < 1e-8


@criterion(4, "CP^1 battery: dimension, Gram, expansion, coefficients, normal slice")
def test_criterion_04e_normal_slice():
    assert abs(normal_slice_integral(CP1, 100, 0.5) - 1) < 1e-8


# ---------------------------------------------------------------- 5

@criterion(5, "Gaussian decay rate 2 pi across the zero level")
def test_criterion_05_decay():
    assert abs(decay_fit(CP1, 400).rate / (2 * math.pi) - 1) < 0.02
    assert abs(decay_fit(CP2, 80).rate / (2 * math.pi) - 1) < 0.05


# ---------------------------------------------------------------- 6

@criterion(6, "off-level ratio at |z| = 2 below 1e-15 for p >= 60")
@pytest.mark.parametrize("p", [60, 80, 120])
def test_criterion_06_localization(p):
    ratio = localization_scan(CP1, p, [2.0])[0]["ratio"]
    # the exact value is (16/25)^p
    assert abs(ratio / (16 / 25) ** p - 1) < 1e-9
    assert ratio < 1e-15, f"ratio {ratio:.3e} at p = {p}"


# ---------------------------------------------------------------- 7

@criterion(7, "singular fixed-point scaling vs regular scaling")
def test_criterion_07_singular_scaling():
    rows = [singular_weight_scaling(p) for p in (10, 100, 400, 1600)]
    for r in rows:
        p = r["p"]
        assert abs(r["singular_p^-1"] - (1 + 0.5 / p)) < 1e-12
        assert abs(r["singular_p^-1/2"] - math.sqrt(p) * (1 + 0.5 / p)) < 1e-10 * math.sqrt(p)
        assert abs(r["regular_p^-1/2"] - SQRT2) < 1.0 / p
        assert abs(r["regular_p^-1"] * math.sqrt(p) - r["regular_p^-1/2"]) < 1e-12
    # the two scalings separate: the regular value under the singular law dies out
    assert rows[-1]["regular_p^-1"] < rows[0]["regular_p^-1"] / 10


# ---------------------------------------------------------------- 8

@criterion(8, "group average equals the invariant kernel")
def test_criterion_08_averaging():
    rng = np.random.default_rng(8)
    for p in range(0, 41):
        s = make_section_space(CP1, p)
        sel = "full" if p == 0 else "invariant"
        for _ in range(3):
            z = np.exp(2j * math.pi * rng.uniform())
            zp = np.exp(2j * math.pi * rng.uniform())
            a, b = group_average_kernel(s, z, zp), bergman_kernel(s, sel, z, zp)
            assert abs(a - b) < 1e-8 * max(1.0, abs(b)), p


# ---------------------------------------------------------------- 9

@criterion(9, "Toeplitz diagonal, principal symbol, isometry, commutator")
def test_criterion_09a_diagonal():
    for p in (1, 10, 50, 100):
        T = toeplitz_matrix(make_section_space(CP1, p), symbol_t_ratio).entries
        j = np.arange(2 * p + 1)
        assert np.max(np.abs(np.diag(T) - (j + 1) / (2 * p + 2))) < 1e-10


@criterion(9, "Toeplitz diagonal, principal symbol, isometry, commutator")
def test_criterion_09b_symbol():
    target = 0.5 / math.sqrt(math.pi)
    errs = {}
    for p in (200, 400, 800):
        s = make_section_space(CP1, p)
        assert abs(invariant_symbol(s, symbol_t_ratio) - target) < 1e-14
        errs[p] = abs(invariant_toeplitz(s, symbol_t_ratio).real - target)
    assert errs[400] / target < 3e-3
    assert abs(errs[400] / errs[200] - 0.5) < 0.05
    assert abs(errs[800] / errs[400] - 0.5) < 0.05


@criterion(9, "Toeplitz diagonal, principal symbol, isometry, commutator")
def test_criterion_09c_isometry():
    d = {p: isometry_defect(make_section_space(CP1, p)) for p in (100, 200, 400)}
    for p, v in d.items():
        assert abs(v / (3 / (8 * p)) - 1) < 0.1
    assert abs(d[200] / d[100] - 0.5) < 0.05
    assert abs(d[400] / d[200] - 0.5) < 0.05


@criterion(9, "Toeplitz diagonal, principal symbol, isometry, commutator")
def test_criterion_09d_commutator():
    x1, x2 = sphere_symbol(1), sphere_symbol(2)
    r128 = commutator_residual(make_section_space(CP1, 128), x1, x2)
    r256 = commutator_residual(make_section_space(CP1, 256), x1, x2)
    assert abs(r128 / r256 - 2) < 0.3


# ---------------------------------------------------------------- 10

@criterion(10, "CP^2 reduction: dimension p + 1 and leading diagonal")
def test_criterion_10_cp2():
    rep = invariant_dimension_report(CP2, range(1, 41))
    assert all(d == p + 1 for p, d, _ in rep.rows)
    assert abs(rep.slope - 1) < 1e-9
    s = make_section_space(CP2, 80)
    for theta in (0.3, 0.8, 1.2):
        x0 = np.array([math.cos(theta), math.sin(theta) * np.exp(0.7j)])
        assert abs(scaled_diagonal(s, x0) / SQRT2 - 1) < 0.05


# ---------------------------------------------------------------- 11

@criterion(11, "property suite on seeded random inputs, total runtime")
@pytest.mark.parametrize("dims", [(1, 1), (2, 1), (2, 2), (3, 2)])
def test_criterion_11_properties(dims):
    params = ModelParams.kahler(*dims)
    rng = np.random.default_rng(110 + 10 * dims[0] + dims[1])
    # parity and Hermiticity of the coefficients
    g = quiet_geometry(params, rng)
    O1 = build_O1(g)
    O2 = build_O2_fully_normal(g) if params.nh == 0 else None
    pts = random_points(params, rng, 8, radius=1.5)
    for r in (1, 2):
        k = expansion_coefficient(r, O1, O2)
        for Z, Zp in pts:
            v = eval_kernel(k, Z, Zp)
            assert abs(eval_kernel(k, -Z, -Zp) - (-1) ** r * v) < 1e-10
            assert abs(eval_kernel(k, Zp, Z) - np.conj(v)) < 1e-10
    # reproducing property
    P = KernelPolynomial.identity(params)
    assert compose(P, P).is_close(P, 1e-12)
    # EigenForm round trip
    for _ in range(3):
        q = random_kernel(params, rng, degree=6, n_terms=8)
        assert to_eigen_form(q).to_kernel().is_close(q, 1e-10)


@criterion(11, "property suite on seeded random inputs, total runtime")
def test_criterion_11_total_runtime():
    assert time.perf_counter() - _START < 600
