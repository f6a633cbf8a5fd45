"""Shared builders for the test suite."""
import itertools
from math import pi

import numpy as np

from bergman_lab.model import KernelPolynomial, LadderPolynomial

TWO_PI = 2 * pi


def random_kernel(params, rng, degree=4, n_terms=6, scale=1.0):
    """Random q(Z, Z') of total degree <= degree, complex coefficients."""
    q = {}
    for _ in range(n_terms):
        d = int(rng.integers(0, degree + 1))
        e = [0] * params.nvars
        for _ in range(d):
            e[int(rng.integers(params.nvars))] += 1
        q[tuple(e)] = q.get(tuple(e), 0) + scale * complex(rng.normal(), rng.normal())
    return KernelPolynomial(params, q)


def random_points(params, rng, count, radius=1.0):
    """Pairs (Z, Z') with |Z|, |Z'| <= radius in real split coordinates."""
    dim = 2 * params.nh + params.n0
    out = []
    for _ in range(count):
        pair = []
        for _ in range(2):
            v = rng.normal(size=dim)
            v *= radius * rng.uniform() ** (1.0 / dim) / np.linalg.norm(v)
            pair.append(v)
        out.append(tuple(pair))
    return out


def multiplier(params, coeffs):
    """Ladder polynomial of a function of z, zbar given as {(kind, index), ...: coeff}.

    Keys are tuples of letters, e.g. (("z", 0), ("zb", 1)); multipliers commute.
    """
    out = LadderPolynomial.zero(params)
    for letters, c in coeffs.items():
        word = LadderPolynomial.const(params, c)
        for kind, i in letters:
            word = word * LadderPolynomial.letter(params, kind, i)
        out = out + word
    return out


def random_quadratic(params, rng, with_lower=True):
    """Random F(z, zbar) of degree 2 as {letters: coeff}."""
    gens = [("z", i) for i in range(params.nh)] + [("zb", i) for i in range(params.nh)]
    F = {}
    for a, b in itertools.combinations_with_replacement(gens, 2):
        F[(a, b)] = complex(rng.normal(), rng.normal())
    if with_lower:
        for g in gens:
            F[(g,)] = complex(rng.normal(), rng.normal())
        F[()] = complex(rng.normal(), rng.normal())
    return F


def second_derivative(F, v1, v2):
    """d^2 F / d v1 d v2 for F from :func:`random_quadratic`; v = (kind, index)."""
    total = 0j
    for letters, c in F.items():
        if len(letters) != 2:
            continue
        a, b = letters
        if {a, b} == {v1, v2} and a != b:
            total += c
        elif a == b == v1 == v2:
            total += 2 * c
    return total


def first_derivative(h, v):
    return sum((c for letters, c in h.items() if letters == (v,)), 0j)
