"""Berezin-Toeplitz operators on the projective models.

Matrix entries <f s_a, s_b> are computed in the orthonormal monomial basis.
The symbol is sampled on a grid of radial Gauss-Legendre nodes times an
angular trapezoid grid, its angular Fourier modes are taken by FFT, and each
mode only couples monomials whose exponents differ by that mode.  The
radial integrals are then exact for polynomial symbols in |w|^2 / (1 + |w|^2)
and spectrally accurate for smooth ones.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .projective import (
    SectionSpace,
    _radial_nodes,
    level_gram,
    make_section_space,
    orbit_geometry,
)

__all__ = [
    "QuadratureError",
    "ToeplitzMatrix",
    "toeplitz_matrix",
    "invariant_toeplitz",
    "invariant_symbol",
    "isometry_defect",
    "commutator_residual",
    "poisson_bracket",
    "sphere_coordinates",
    "symbol_t_ratio",
    "sphere_symbol",
    "constant_symbol",
]

Symbol = Callable[[np.ndarray], np.ndarray]


class QuadratureError(RuntimeError):
    """Doubling the quadrature order did not stabilise the matrix."""


@dataclass(frozen=True)
class ToeplitzMatrix:
    p: int
    symbol_id: str
    entries: np.ndarray
    quadrature_order: dict
    selector: object = "full"

    @property
    def shape(self):
        return self.entries.shape

    def is_hermitian(self, tol: float = 1e-12) -> bool:
        return bool(np.max(np.abs(self.entries - self.entries.conj().T)) <= tol)


# --------------------------------------------------------------------------
# symbols, as functions of chart points w with shape (..., n)

def _t(w):
    return np.sum(np.abs(w) ** 2, axis=-1)


def symbol_t_ratio(w):
    """t / (1 + t) with t = |w|^2."""
    t = _t(w)
    return t / (1.0 + t)


def sphere_coordinates(w):
    """(x1, x2, x3) on the unit sphere for CP^1 chart points, via stereographic projection."""
    z = w[..., 0]
    t = np.abs(z) ** 2
    return 2.0 * z.real / (1.0 + t), 2.0 * z.imag / (1.0 + t), (t - 1.0) / (t + 1.0)


def sphere_symbol(k: int) -> Symbol:
    def f(w):
        return sphere_coordinates(w)[k - 1]
    f.__name__ = f"x{k}"
    return f


def constant_symbol(c: float) -> Symbol:
    def f(w):
        return np.full(np.shape(w)[:-1], c, dtype=float)
    f.__name__ = f"const({c!r})"
    return f


def poisson_bracket(f1: Symbol, f2: Symbol, step: float = 1e-5) -> Symbol:
    """{f1, f2} on CP^1 for the symplectic form 2 pi omega, omega = 2 omega_FS.

    In the chart 2 pi omega = rho dx ^ dy with rho = 4 / (1 + |z|^2)^2, the
    Hamiltonian field of g solves 2 pi i_xi omega = dg, and {f1, f2} = xi_{f2}(f1).
    Derivatives by central differences.
    """
    def grad(f, w):
        dx = (f(w + step) - f(w - step)) / (2 * step)
        dy = (f(w + 1j * step) - f(w - 1j * step)) / (2 * step)
        return dx, dy

    def br(w):
        w = np.asarray(w, dtype=complex)
        rho = 4.0 / (1.0 + _t(w)) ** 2
        a_x, a_y = grad(f1, w)
        b_x, b_y = grad(f2, w)
        return (a_x * b_y - a_y * b_x) / rho
    br.__name__ = f"{{{getattr(f1, '__name__', 'f1')},{getattr(f2, '__name__', 'f2')}}}"
    return br


# --------------------------------------------------------------------------
# matrices

def _assemble(space: SectionSpace, f: Symbol, idx, Q: int, M: int, mode_tol: float):
    mod, weight, u = _radial_nodes(space, Q)
    n = space.n
    theta = np.arange(M) / M * 2.0 * np.pi
    grids = np.meshgrid(*([theta] * n), indexing="ij")
    phases = np.stack([np.exp(1j * g) for g in grids], axis=-1)        # (M,)*n + (n,)
    # angular Fourier modes of f on each radial node, in bounded-memory chunks
    fhat = np.empty((len(mod),) + (M,) * n, dtype=complex)
    step = max(1, 2_000_000 // M ** n)
    for lo in range(0, len(mod), step):
        chunk = mod[lo:lo + step]
        pts = chunk[(slice(None),) + (None,) * n + (slice(None),)] * phases[None]
        vals = np.asarray(f(pts), dtype=complex)
        fhat[lo:lo + step] = np.fft.fftn(vals, axes=tuple(range(1, n + 1))) / M ** n
    E = space.chart[idx]
    ln = space.log_norms[idx]
    N = len(idx)
    out = np.zeros((N, N), dtype=complex)
    logmod = np.log(mod)
    logw = np.log(weight) + 2.0 * space.p * np.log1p(-u)
    # pairs grouped by exponent difference m = E_b - E_a
    diff = (E[None, :, :] - E[:, None, :]).reshape(-1, n)                # row a * N + b
    big = np.max(np.abs(fhat)) if fhat.size else 0.0
    keys, inverse = np.unique(diff, axis=0, return_inverse=True)
    order = np.argsort(inverse.ravel(), kind="stable")
    bounds = np.searchsorted(inverse.ravel()[order], np.arange(len(keys) + 1))
    for g, m in enumerate(keys):
        if np.max(np.abs(m)) >= M // 2:
            # unresolved mode: taken as zero, the doubling check guards this
            continue
        coeff = fhat[(slice(None),) + tuple(int(mk) % M for mk in m)]
        if np.max(np.abs(coeff)) <= mode_tol * max(big, 1e-300):
            continue
        flat = order[bounds[g]:bounds[g + 1]]
        a_idx, b_idx = np.divmod(flat, N)
        logs = (E[a_idx] + E[b_idx]) @ logmod.T + logw[None, :]
        logs -= 0.5 * (ln[a_idx] + ln[b_idx])[:, None]
        out[b_idx, a_idx] = np.exp(logs) @ coeff
    return out


def toeplitz_matrix(space: SectionSpace, f: Symbol, selector="full", order: int | None = None,
                    angular_order: int | None = None, check: bool = True, tol: float = 1e-10,
                    symbol_id: str | None = None) -> ToeplitzMatrix:
    """Compression of multiplication by f to the selected subspace.

    ``entries[b, a] = <f s_a, s_b>`` for orthonormal monomials, so the matrix
    acts on coefficient vectors.  With ``check`` the computation is repeated
    with doubled orders and must agree to ``tol``.
    """
    idx = space.indices(selector)
    M = angular_order or (64 if space.n == 1 else 16)
    Q = order or (2 * space.p + 16)
    mat = _assemble(space, f, idx, Q, M, 1e-15)
    if check:
        ref = _assemble(space, f, idx, 2 * Q, 2 * M, 1e-15)
        err = float(np.max(np.abs(mat - ref))) if mat.size else 0.0
        if err > tol:
            raise QuadratureError(f"quadrature did not stabilise: change {err:.3g} on doubling")
        mat = ref
        Q, M = 2 * Q, 2 * M
    name = symbol_id or getattr(f, "__name__", "f")
    return ToeplitzMatrix(space.p, name, mat, {"radial": Q, "angular": M}, selector)


def invariant_toeplitz(space: SectionSpace, f: Symbol, **kw):
    """p^{-n0/2} sigma^G f sigma^G*, as an operator on sections over the quotient.

    With G the Gram matrix of the descended invariant basis on the quotient
    and F the invariant Toeplitz matrix, the operator has matrix
    p^{-n0/2} G^{1/2} F G^{1/2} in an orthonormal basis of the quotient
    sections.  For a point reduction this is a single complex number.
    """
    F = toeplitz_matrix(space, f, "invariant", **kw).entries
    G = level_gram(space)
    w, V = np.linalg.eigh(G)
    root = (V * np.sqrt(np.clip(w, 0.0, None))) @ V.conj().T
    T = space.p ** (-0.5 * space.n0) * root @ F @ root
    if T.shape == (1, 1):
        return complex(T[0, 0])
    return T


def invariant_symbol(space: SectionSpace, f: Symbol, base=None, n_angles: int = 256) -> float:
    """Leading symbol 2^{n0/2} f^G / h^2 at a point of the zero level.

    f^G is the orbit average of f, by the trapezoid rule in the group angle.
    """
    x0 = space.level_point if base is None else np.asarray(base, dtype=complex)
    t = np.arange(n_angles) / n_angles
    orbit = np.stack([space.act_inverse(ti, x0) for ti in t])
    fG = float(np.mean(np.real(f(orbit))))
    h2 = orbit_geometry(space.model, x0).h2
    return 2.0 ** (0.5 * space.n0) * fG / h2


def isometry_defect(space: SectionSpace, p: int | None = None) -> float:
    """max |(2p)^{-n0/2} <sigma s_i, sigma s_j>_h~ - delta_ij| over the invariant basis.

    The weighted product uses h~^2 = h^2 on the zero level, which is constant
    for both models.
    """
    if p is not None and p != space.p:
        space = make_section_space(space.model, p)
    G = level_gram(space)
    h2 = orbit_geometry(space.model, space.level_point).h2
    D = (2.0 * space.p) ** (-0.5 * space.n0) * h2 * G - np.eye(len(G))
    return float(np.max(np.abs(D)))


def commutator_residual(space: SectionSpace, f1: Symbol, f2: Symbol, p: int | None = None,
                        **kw) -> float:
    """|| p [T_f1, T_f2] - (1/i) T_{f1, f2} || for the full space of CP^1 (trivial group)."""
    if space.model != "CP1_O2":
        raise ValueError("the commutator law is checked on CP^1 with the trivial group")
    if p is not None and p != space.p:
        space = make_section_space(space.model, p)
    T1 = toeplitz_matrix(space, f1, "full", **kw).entries
    T2 = toeplitz_matrix(space, f2, "full", **kw).entries
    Tb = toeplitz_matrix(space, poisson_bracket(f1, f2), "full", tol=1e-8, **kw).entries
    R = space.p * (T1 @ T2 - T2 @ T1) + 1j * Tb
    return float(np.linalg.norm(R, 2))
