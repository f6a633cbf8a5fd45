from math import pi, sqrt

import numpy as np
import pytest

from bergman_lab.model import (
    DegreeOverflowError,
    KernelPolynomial,
    LadderPolynomial,
    Letter,
    ModelParams,
    ParameterMismatchError,
    apply_to_kernel,
    compose,
    eval_kernel,
    gaussian_moment_integrate,
    model_operator,
    normal_order,
    project_and_resolve,
    right_apply,
    to_eigen_form,
)

from helpers import (
    first_derivative,
    multiplier,
    random_kernel,
    random_points,
    random_quadratic,
    second_derivative,
)

L = LadderPolynomial
K1 = ModelParams.kahler(1, 1)
ORIGIN = np.zeros(1)


def at_origin(k):
    z = np.zeros(2 * k.params.nh + k.params.n0)
    return eval_kernel(k, z, z)


# ---------------------------------------------------------------- params

def test_params_validation():
    with pytest.raises(ValueError):
        ModelParams(1, 2)
    with pytest.raises(ValueError):
        ModelParams(2, 1, (1.0, 2.0), (1.0,))
    with pytest.raises(ValueError):
        ModelParams(1, 0, (-1.0,), ())
    assert ModelParams.kahler(3, 1).kahler_standard
    assert not ModelParams(1, 0, (1.0,), ()).kahler_standard


# ---------------------------------------------------------------- normal ordering

def test_b_bplus_reorders_with_constant():
    p = ModelParams.kahler(1, 0)
    got = normal_order(p, [(1.0, [("b", 0), ("bp", 0)])])
    want = L.letter(p, "bp", 0) * L.letter(p, "b", 0) - 4 * pi
    assert got == want


def test_zbar_commutes_with_b():
    p = ModelParams.kahler(1, 0)
    assert normal_order(p, [(1.0, [("zb", 0), ("b", 0)])]) == \
        normal_order(p, [(1.0, [("b", 0), ("zb", 0)])])


def test_normal_multiplier_past_annihilator():
    got = normal_order(K1, [(1.0, [("Z", 0), ("bn", 0)])])
    want = normal_order(K1, [(1.0, [("bn", 0), ("Z", 0)])]) + 1.0
    assert got.is_close(want)


def test_normal_order_idempotent():
    rng = np.random.default_rng(1)
    p = ModelParams(2, 1, (1.3,), (0.7,))
    kinds = ["z", "zb", "b", "bp", "Z", "bn", "bnp"]
    for _ in range(20):
        word = []
        for _ in range(5):
            k = kinds[rng.integers(len(kinds))]
            word.append(Letter(k, 0))
        x = normal_order(p, [(complex(rng.normal(), 1.0), word)])
        assert normal_order(p, x) == x


def test_degree_cap():
    p = ModelParams.kahler(1, 1)
    b = L(p, L.letter(p, "bn", 0).terms, cap=3)
    with pytest.raises(DegreeOverflowError):
        b * b * b * b


def test_parameter_mismatch():
    with pytest.raises(ParameterMismatchError):
        L.letter(K1, "bn", 0) + L.letter(ModelParams.kahler(2, 2), "bn", 0)
    with pytest.raises(ParameterMismatchError):
        apply_to_kernel(L.letter(K1, "bn", 0), KernelPolynomial.identity(ModelParams.kahler(2, 1)))


@pytest.mark.parametrize("seed", range(4))
def test_commutation_relations_on_random_states(seed):
    """[b_i, b_j^+] = -2 a_i delta_ij and the other brackets, applied letter by letter."""
    rng = np.random.default_rng(seed)
    p = ModelParams(3, 1, (1.1, 2.7), (0.9,))
    pairs = {("b", "bp"): -2.0, ("bn", "bnp"): -2.0, ("b", "b"): 0.0, ("bp", "bp"): 0.0,
             ("bn", "bn"): 0.0, ("b", "bn"): 0.0, ("bp", "bnp"): 0.0, ("zb", "b"): 0.0,
             ("z", "bp"): 0.0}
    for _ in range(50):
        k = random_kernel(p, rng, degree=6, n_terms=8)
        scale = max(abs(c) for c in k.q.values())
        for (x, y), factor in pairs.items():
            nx = p.nh if x in ("b", "bp", "z", "zb") else p.n0
            ny = p.nh if y in ("b", "bp", "z", "zb") else p.n0
            for i in range(nx):
                for j in range(ny):
                    lx, ly = L.letter(p, x, i), L.letter(p, y, j)
                    lhs = apply_to_kernel(lx, apply_to_kernel(ly, k)) - apply_to_kernel(ly, apply_to_kernel(lx, k))
                    if factor and i == j and x[0] == y[0]:
                        a = p.a[i] if x == "b" else p.a_perp[i]
                        lhs = lhs - k * (factor * a)
                    assert all(abs(c) < 1e-10 * scale for c in lhs.q.values()), (x, y, i, j)


def test_products_act_as_compositions():
    rng = np.random.default_rng(7)
    p = ModelParams(2, 1, (1.7,), (2.2,))
    kinds = ["z", "zb", "b", "bp", "Z", "bn", "bnp"]

    def rand_op():
        out = L.zero(p)
        for _ in range(3):
            word = [Letter(kinds[rng.integers(len(kinds))], 0) for _ in range(rng.integers(0, 4))]
            out = out + normal_order(p, [(complex(rng.normal(), rng.normal()), word)])
        return out

    for _ in range(20):
        A, B = rand_op(), rand_op()
        k = random_kernel(p, rng, degree=4)
        lhs = apply_to_kernel(A * B, k)
        rhs = apply_to_kernel(A, apply_to_kernel(B, k))
        assert lhs.is_close(rhs, 1e-11)


def test_adjoint_is_involution_and_reverses_products():
    p = ModelParams(2, 1, (1.7,), (2.2,))
    A = normal_order(p, [(1 + 2j, [("b", 0), ("Z", 0), ("bnp", 0)])])
    B = normal_order(p, [(0.5, [("zb", 0), ("bp", 0)])])
    assert A.adjoint().adjoint().is_close(A)
    assert (A * B).adjoint().is_close(B.adjoint() * A.adjoint())


# ---------------------------------------------------------------- kernels

def test_bplus_kills_projector():
    p = ModelParams.kahler(2, 1)
    P = KernelPolynomial.identity(p)
    assert apply_to_kernel(L.letter(p, "bp", 0), P).is_zero()
    assert apply_to_kernel(L.letter(p, "bnp", 0), P).is_zero()


def test_b_on_projector():
    p = ModelParams.kahler(1, 0)
    got = apply_to_kernel(L.letter(p, "b", 0), KernelPolynomial.identity(p))
    want = KernelPolynomial.from_monomials(p, [(2 * pi, {"zb1": 1}), (-2 * pi, {"zbp1": 1})])
    assert got.is_close(want)


def test_normal_gaussian_powers():
    # (bperp)^k applied to exp(-pi Z^2) at Z = 0, with P(0, 0) = sqrt 2
    P = KernelPolynomial.identity(K1)
    expected = {1: 0.0, 2: -4 * pi, 3: 0.0, 4: 3 * (4 * pi) ** 2, 5: 0.0, 6: 15 * (-4 * pi) ** 3}
    for k, want in expected.items():
        got = at_origin(apply_to_kernel(L.letter(K1, "bn", 0) ** k, P)) / sqrt(2)
        assert abs(got - want) <= 1e-12 * max(1.0, abs(want))


def test_eval_kernel_identity_values():
    P = KernelPolynomial.identity(K1)
    assert abs(at_origin(P) - sqrt(2)) < 1e-15
    for t in (0.1, 0.4, -0.8):
        Z = np.array([t])
        assert abs(eval_kernel(P, Z, Z) - sqrt(2) * np.exp(-2 * pi * t * t)) < 1e-14
    p = ModelParams(2, 0, (1.5, 3.0), ())
    assert abs(at_origin(KernelPolynomial.identity(p)) - 1.5 * 3.0 / (2 * pi) ** 2) < 1e-15


def test_eval_kernel_dimension_check():
    with pytest.raises(ValueError):
        eval_kernel(KernelPolynomial.identity(K1), np.zeros(2), np.zeros(1))


def test_gaussian_moments():
    P = KernelPolynomial.identity(K1)
    assert abs(gaussian_moment_integrate(P) - 1.0) < 1e-14
    Z2 = KernelPolynomial.from_monomials(K1, [(1.0, {"Z1": 2})])
    assert abs(gaussian_moment_integrate(Z2) - 1 / (4 * pi)) < 1e-15
    assert gaussian_moment_integrate(KernelPolynomial.zero(K1)) == 0
    with pytest.raises(ValueError):
        gaussian_moment_integrate(P, "nowhere")


def test_gaussian_moments_against_quadrature():
    rng = np.random.default_rng(3)
    p = ModelParams(2, 1, (2.0,), (3.1,))
    k = random_kernel(p, rng, degree=6)
    x, w = np.polynomial.legendre.leggauss(120)
    t = 4.0 * x
    vals = [eval_kernel(k, np.array([0.0, 0.0, s]), np.array([0.0, 0.0, s])) for s in t]
    assert abs(4.0 * np.dot(w, vals) - gaussian_moment_integrate(k)) < 1e-12


# ---------------------------------------------------------------- eigen forms

def test_eigen_form_normal_square():
    k = KernelPolynomial.from_monomials(K1, [(1.0, {"Z1": 2})])
    ef = to_eigen_form(k)
    assert set(ef.components) == {((), (2,)), ((), (0,))}
    assert abs(ef.components[((), (2,))][(0, 0)] - 1 / (16 * pi ** 2)) < 1e-15
    assert abs(ef.components[((), (0,))][(0, 0)] - 1 / (4 * pi)) < 1e-15


def test_eigen_form_zbar():
    p = ModelParams.kahler(1, 0)
    ef = to_eigen_form(KernelPolynomial.from_monomials(p, [(1.0, {"zb1": 1}), (-1.0, {"zbp1": 1})]))
    assert set(ef.components) == {((1,), ())}
    assert abs(ef.components[((1,), ())][(0, 0, 0, 0)] - 1 / (2 * pi)) < 1e-15
    ef = to_eigen_form(KernelPolynomial.identity(p))
    assert ef.components == {((0,), ()): {(0, 0, 0, 0): 1.0}}


@pytest.mark.parametrize("dims", [(1, 1), (2, 1), (2, 2), (3, 1)])
def test_eigen_form_round_trip(dims):
    rng = np.random.default_rng(sum(dims))
    p = ModelParams(*dims, tuple(rng.uniform(1, 3, dims[0] - dims[1])), tuple(rng.uniform(1, 3, dims[1])))
    for _ in range(10):
        k = random_kernel(p, rng, degree=8, n_terms=10)
        back = to_eigen_form(k).to_kernel()
        assert back.is_close(k, 1e-12)


def test_model_operator_on_eigen_components():
    rng = np.random.default_rng(5)
    p = ModelParams(2, 1, (1.4,), (2.3,))
    L2 = model_operator(p)
    for _ in range(5):
        ef = to_eigen_form(random_kernel(p, rng, degree=5))
        for key in ef.components:
            comp = ef.component_kernel(key)
            got = apply_to_kernel(L2, comp)
            assert got.is_close(comp * ef.eigenvalue(key), 1e-11)


def test_resolve_normal_square():
    bn2P = apply_to_kernel(L.letter(K1, "bn", 0) ** 2, KernelPolynomial.identity(K1))
    assert project_and_resolve(bn2P, "resolve", 1).is_close(bn2P * (1 / (8 * pi)))
    assert project_and_resolve(bn2P, "resolve", 2).is_close(bn2P * (1 / (8 * pi) ** 2))
    assert project_and_resolve(bn2P, "project").is_zero()
    with pytest.raises(ValueError):
        project_and_resolve(bn2P, "resolve", 3)


def test_project_kills_excited_holomorphic():
    p = ModelParams.kahler(2, 0)
    f = KernelPolynomial.from_monomials(p, [(1.0, {"z1": 2}), (2.0, {"z2": 1, "zbp1": 1})])
    assert project_and_resolve(apply_to_kernel(L.letter(p, "b", 0), f), "project").is_zero()


def test_projector_normal_square():
    p = ModelParams.kahler(2, 2)
    for k in range(2):
        for l in range(2):
            powers = {f"Z{k + 1}": 2} if k == l else {f"Z{k + 1}": 1, f"Z{l + 1}": 1}
            q = KernelPolynomial.from_monomials(p, [(1.0, powers)])
            want = KernelPolynomial.identity(p) * ((k == l) / (4 * pi))
            assert project_and_resolve(q, "project").is_close(want)


# ---------------------------------------------------------------- horizontal table

H2 = ModelParams.kahler(2, 0)


def _kernel_of(op):
    return apply_to_kernel(op, KernelPolynomial.identity(op.params))


def _resolved(op):
    return at_origin(project_and_resolve(_kernel_of(op), "resolve", 1))


def _letters(p, kind):
    return [L.letter(p, kind, i) for i in range(p.nh)]


@pytest.mark.parametrize("seed", range(3))
def test_horizontal_evaluation_table(seed):
    rng = np.random.default_rng(seed)
    p = H2
    b = _letters(p, "b")
    z = [("z", i) for i in range(2)]
    zb = [("zb", i) for i in range(2)]
    F = random_quadratic(p, rng)
    Fop = multiplier(p, F)
    lap = sum(second_derivative(F, z[i], zb[i]) for i in range(2))
    # P-perp F P at the origin, F(0) removed by P-perp
    val = at_origin(_kernel_of(Fop)) - at_origin(project_and_resolve(_kernel_of(Fop), "project"))
    assert abs(val - (-lap / pi)) < 1e-12
    # second order annihilators and linear multipliers resolve to zero at the origin
    A = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
    assert abs(_resolved(sum((A[i, j] * (b[i] * b[j]) for i in range(2) for j in range(2)), L.zero(p)))) < 1e-12
    hs = [{(g,): complex(rng.normal(), rng.normal()) for g in z + zb} for _ in range(2)]
    for h in hs:
        h[()] = complex(rng.normal())
    hop = [multiplier(p, h) for h in hs]
    assert abs(_resolved(hop[0])) < 1e-12
    div = sum(first_derivative(hs[i], z[i]) for i in range(2))
    assert abs(_resolved(hop[0] * b[0] + hop[1] * b[1]) + div / (2 * pi)) < 1e-12
    assert abs(_resolved(b[0] * hop[0] + b[1] * hop[1]) + div / (2 * pi)) < 1e-12
    assert abs(_resolved(Fop) + lap / (4 * pi ** 2)) < 1e-12
    for i in range(2):
        for j in range(2):
            d2 = second_derivative(F, z[i], z[j])
            assert abs(_resolved(b[i] * Fop * b[j]) + d2 / (2 * pi)) < 1e-12
            assert abs(_resolved(b[i] * b[j] * Fop) - d2 / (2 * pi)) < 1e-12
            assert abs(_resolved(Fop * b[i] * b[j]) + 3 * d2 / (2 * pi)) < 1e-12
    S = b[0] * hop[0] + b[1] * hop[1]
    J = np.array([[first_derivative(hs[i], z[j]) for j in range(2)] for i in range(2)])
    want = -(np.trace(J @ J) - np.trace(J) ** 2) / (2 * pi)
    assert abs(_resolved(S * S) - want) < 1e-12


def test_projected_linear_pair():
    rng = np.random.default_rng(11)
    p = H2
    h1 = {(("z", i),): complex(rng.normal(), rng.normal()) for i in range(2)}
    h2 = {(("zb", i),): complex(rng.normal(), rng.normal()) for i in range(2)}
    op = multiplier(p, h1) * multiplier(p, h2)
    got = at_origin(project_and_resolve(_kernel_of(op), "project"))
    want = sum(first_derivative(h1, ("z", i)) * first_derivative(h2, ("zb", i)) for i in range(2)) / pi
    assert abs(got - want) < 1e-12


def test_mixed_annihilator_values():
    p = ModelParams.kahler(4, 2)
    P0 = at_origin(KernelPolynomial.identity(p))
    for i in range(2):
        for j in range(2):
            zi, bj = L.letter(p, "z", i), L.letter(p, "b", j)
            assert abs(at_origin(_kernel_of(bj * zi)) + 2 * (i == j) * P0) < 1e-12
            for k in range(2):
                for l in range(2):
                    op = L.letter(p, "bn", k) * L.letter(p, "bn", l) * bj * zi
                    want = 8 * pi * (i == j) * (k == l) * P0
                    assert abs(at_origin(_kernel_of(op)) - want) < 1e-12 * max(1, abs(want))


# ---------------------------------------------------------------- composition, symmetry

def test_reproducing_property():
    rng = np.random.default_rng(2)
    for p in (ModelParams.kahler(1, 1), ModelParams.kahler(2, 1), ModelParams(2, 2, (), (1.2, 3.4))):
        P = KernelPolynomial.identity(p)
        PP = compose(P, P)
        assert PP.is_close(P, 1e-12)
        for Z, Zp in random_points(p, rng, 20):
            a, b = eval_kernel(PP, Z, Zp), eval_kernel(P, Z, Zp)
            assert abs(a - b) <= 1e-10 * abs(b)


def test_projector_hermitian_pointwise():
    rng = np.random.default_rng(4)
    p = ModelParams.kahler(2, 1)
    P = KernelPolynomial.identity(p)
    for Z, Zp in random_points(p, rng, 30):
        assert eval_kernel(P, Z, Zp) == np.conj(eval_kernel(P, Zp, Z))


def test_kernel_adjoint_pointwise():
    rng = np.random.default_rng(6)
    p = ModelParams.kahler(2, 1)
    k = random_kernel(p, rng, degree=5)
    ks = k.adjoint()
    for Z, Zp in random_points(p, rng, 10):
        assert abs(eval_kernel(ks, Z, Zp) - np.conj(eval_kernel(k, Zp, Z))) < 1e-13


def test_right_apply_matches_adjoint_action():
    p = ModelParams.kahler(1, 1)
    P = KernelPolynomial.identity(p)
    # P b^+ is the adjoint of b P
    bP = apply_to_kernel(L.letter(p, "bn", 0), P)
    assert right_apply(P, L.letter(p, "bnp", 0)).is_close(bP.adjoint())


def test_parity_split():
    rng = np.random.default_rng(8)
    p = ModelParams.kahler(2, 1)
    k = random_kernel(p, rng, degree=5, n_terms=12)
    even, odd = k.parity_split()
    assert (even + odd).is_close(k)
    for Z, Zp in random_points(p, rng, 5):
        assert abs(eval_kernel(odd, -Z, -Zp) + eval_kernel(odd, Z, Zp)) < 1e-13
        assert abs(eval_kernel(even, -Z, -Zp) - eval_kernel(even, Z, Zp)) < 1e-13
