"""Sparse multivariate polynomials stored as ``{exponent tuple: complex}``.

Only the handful of operations the kernel calculus needs are provided.
Functions return fresh dicts, except ``add_into`` which accumulates in place.
"""
from __future__ import annotations

from math import factorial
from typing import Dict, Tuple

Poly = Dict[Tuple[int, ...], complex]

DROP_TOL = 1e-14


def prune(p: Poly, tol: float = DROP_TOL) -> Poly:
    """Drop coefficients below ``tol`` times the largest magnitude."""
    if not p:
        return {}
    big = max(abs(c) for c in p.values())
    if big == 0.0:
        return {}
    cut = tol * big
    return {e: c for e, c in p.items() if abs(c) > cut}


def add_into(acc: Poly, p: Poly, scale: complex = 1.0) -> Poly:
    for e, c in p.items():
        acc[e] = acc.get(e, 0.0) + scale * c
    return acc


def add(p: Poly, q: Poly, scale: complex = 1.0) -> Poly:
    return add_into(dict(p), q, scale)


def scale(p: Poly, s: complex) -> Poly:
    return {e: s * c for e, c in p.items()}


def mul(p: Poly, q: Poly) -> Poly:
    out: Poly = {}
    for e1, c1 in p.items():
        for e2, c2 in q.items():
            e = tuple(x + y for x, y in zip(e1, e2))
            out[e] = out.get(e, 0.0) + c1 * c2
    return out


def mul_var(p: Poly, var: int, power: int = 1) -> Poly:
    out: Poly = {}
    for e, c in p.items():
        f = list(e)
        f[var] += power
        out[tuple(f)] = c
    return out


def deriv(p: Poly, var: int) -> Poly:
    out: Poly = {}
    for e, c in p.items():
        k = e[var]
        if k:
            f = list(e)
            f[var] = k - 1
            t = tuple(f)
            out[t] = out.get(t, 0.0) + k * c
    return out


def degree(p: Poly) -> int:
    return max((sum(e) for e in p), default=0)


def evaluate(p: Poly, values) -> complex:
    total = 0.0 + 0.0j
    for e, c in p.items():
        term = c
        for v, k in zip(values, e):
            if k:
                term *= v ** k
        total += term
    return total


def constant(nvars: int, c: complex = 1.0) -> Poly:
    return {(0,) * nvars: complex(c)}


def complex_moment(k: int, scale_: float) -> float:
    """E[u^k conj(u)^k] for a complex Gaussian with E|u|^2 = scale_."""
    return factorial(k) * scale_ ** k


def real_moment(k: int, var: float) -> float:
    """E[W^k] for a centred real Gaussian with variance ``var``."""
    if k % 2:
        return 0.0
    m = 1.0
    for j in range(k - 1, 0, -2):
        m *= j
    return m * var ** (k // 2)
