"""Matrix oracle for the expansion coefficients.

Works in the orthonormal eigenbasis of L_2^0 directly (no symbolic kernel
calculus).  Each horizontal direction carries two oscillator modes: alpha,
raised by b, and beta, raised by c = -2 d/dzbar + (a/2) z, which commutes with
b and b^+.  Each normal direction carries one mode gamma raised by bperp.
Coordinates are z = (b^+ + c)/a, zbar = (b + c^+)/a, Z = (bperp + bperp^+)/(2 a_perp).

Kernels are kept as sums of column blocks L R^H and evaluated through the
eigenfunctions phi_{alpha beta}(z) and phi_gamma(Z), so only matrix products
on a few dozen columns are needed.
"""
from __future__ import annotations

from functools import reduce
from math import pi, sqrt

import numpy as np
import scipy.sparse as sp

from .model import LadderPolynomial, ModelParams

__all__ = ["FockOracle", "DenseKernel", "horizontal_eigenfunctions", "normal_eigenfunctions"]


def horizontal_eigenfunctions(a: float, z: complex, amax: int, bmax: int) -> np.ndarray:
    """phi[alpha, beta](z) for one horizontal direction."""
    phi = np.zeros((amax + 1, bmax + 1), dtype=complex)
    phi[0, 0] = sqrt(a / (2 * pi)) * np.exp(-a * abs(z) ** 2 / 4.0)
    for beta in range(bmax):
        phi[0, beta + 1] = a * z * phi[0, beta] / sqrt(2 * a * (beta + 1))
    for alpha in range(amax):
        row = a * np.conj(z) * phi[alpha, :]
        row[1:] -= np.sqrt(2 * a * np.arange(1, bmax + 1)) * phi[alpha, :-1]
        phi[alpha + 1, :] = row / sqrt(2 * a * (alpha + 1))
    return phi


def normal_eigenfunctions(a: float, Z: float, gmax: int) -> np.ndarray:
    """phi[gamma](Z) for one normal direction (Hermite functions)."""
    phi = np.zeros(gmax + 1)
    phi[0] = (a / pi) ** 0.25 * np.exp(-a * Z * Z / 2.0)
    if gmax >= 1:
        phi[1] = 2 * a * Z * phi[0] / sqrt(2 * a)
    for g in range(1, gmax):
        phi[g + 1] = (2 * a * Z * phi[g] - sqrt(2 * a * g) * phi[g - 1]) / sqrt(2 * a * (g + 1))
    return phi


class DenseKernel:
    """Kernel sum_t coeff_t * Phi(Z)^T L_t conj(Phi(Z')^T R_t)."""

    def __init__(self, oracle: "FockOracle", blocks):
        self.oracle = oracle
        self.blocks = blocks

    def __call__(self, Z, Zp) -> complex:
        fz = self.oracle._features(Z)
        fzp = self.oracle._features(Zp)
        total = 0.0 + 0.0j
        for c, Lb, Rb in self.blocks:
            total += c * np.dot(fz @ Lb, np.conj(fzp @ Rb))
        return complex(total)

    def samples(self, points) -> np.ndarray:
        return np.array([self(Z, Zp) for Z, Zp in points])


class FockOracle:
    """Truncated Fock-space representation of the ladder algebra."""

    def __init__(self, params: ModelParams, N: int = 30, max_degree: int = 4, margin: int = 2):
        if N < max_degree + 4:
            raise ValueError("truncation N must be at least the operator degree + 4")
        self.params = params
        self.N = N
        span = 2 * max_degree + margin
        self.amax = span
        self.bmax = N + span
        self.gmax = span
        dims = []
        for _ in range(params.nh):
            dims += [self.amax + 1, self.bmax + 1]
        dims += [self.gmax + 1] * params.n0
        self.dims = dims
        self.dim = int(np.prod(dims)) if dims else 1
        self._letters = {}
        self._build()

    # ------------------------------------------------------------ matrices
    def _embed(self, mode: int, op1d):
        mats = [sp.identity(d, format="csr") for d in self.dims]
        mats[mode] = sp.csr_matrix(op1d)
        return reduce(lambda x, y: sp.kron(x, y, format="csr"), mats)

    @staticmethod
    def _raise(size, a):
        k = np.arange(size - 1)
        return sp.csr_matrix((np.sqrt(2 * a * (k + 1)), (k + 1, k)), shape=(size, size))

    def _build(self):
        p = self.params
        for i, a in enumerate(p.a):
            ma, mb = 2 * i, 2 * i + 1
            b = self._embed(ma, self._raise(self.amax + 1, a))
            c = self._embed(mb, self._raise(self.bmax + 1, a))
            self._letters[("b", i)] = b
            self._letters[("bp", i)] = b.T.tocsr()
            self._letters[("z", i)] = ((b.T + c) / a).tocsr()
            self._letters[("zb", i)] = ((b + c.T) / a).tocsr()
        for j, a in enumerate(p.a_perp):
            m = 2 * p.nh + j
            bn = self._embed(m, self._raise(self.gmax + 1, a))
            self._letters[("bn", j)] = bn
            self._letters[("bnp", j)] = bn.T.tocsr()
            self._letters[("Z", j)] = ((bn + bn.T) / (2 * a)).tocsr()
        # eigenvalues of L_2^0 and the kernel range of P^N (alpha = gamma = 0)
        grids = np.meshgrid(*[np.arange(d) for d in self.dims], indexing="ij")
        lam = np.zeros(self.dims)
        in_P = np.ones(self.dims, dtype=bool)
        for i, a in enumerate(p.a):
            lam = lam + 2 * a * grids[2 * i]
            in_P &= grids[2 * i] == 0
            in_P &= grids[2 * i + 1] <= self.N
        for j, a in enumerate(p.a_perp):
            lam = lam + 2 * a * grids[2 * p.nh + j]
            in_P &= grids[2 * p.nh + j] == 0
        lam = lam.ravel()
        self.eigenvalues = lam
        with np.errstate(divide="ignore"):
            inv = np.where(lam > 0, 1.0 / np.where(lam > 0, lam, 1.0), 0.0)
        self._resolvent = inv
        idx = np.flatnonzero(in_P.ravel())
        self.P_cols = np.zeros((self.dim, idx.size), dtype=complex)
        self.P_cols[idx, np.arange(idx.size)] = 1.0

    def apply(self, op: LadderPolynomial, V: np.ndarray) -> np.ndarray:
        if op.params != self.params:
            raise ValueError("parameter mismatch")
        out = np.zeros_like(V, dtype=complex)
        for c, letters in op.words():
            W = V
            for letter in reversed(letters):
                W = self._letters[tuple(letter)] @ W
            out += c * W
        return out

    def resolve(self, V: np.ndarray, m: int = 1) -> np.ndarray:
        return (self._resolvent ** m)[:, None] * V

    def sandwich(self, op: LadderPolynomial) -> np.ndarray:
        """Matrix of P^N op P^N on the truncated kernel range."""
        return self.P_cols.conj().T @ self.apply(op, self.P_cols)

    # ------------------------------------------------------------ kernels
    def coefficient(self, r: int, O1: LadderPolynomial, O2: LadderPolynomial) -> DenseKernel:
        Pc = self.P_cols
        if r == 0:
            return DenseKernel(self, [(1.0, Pc, Pc)])
        Xc = self.resolve(self.apply(O1, Pc))
        if r == 1:
            return DenseKernel(self, [(-1.0, Xc, Pc), (-1.0, Pc, Xc)])
        if r != 2:
            raise ValueError("r must be 0, 1 or 2")
        Yc = self.resolve(self.apply(O1, Xc))
        Wc = self.resolve(self.apply(O2, Pc))
        G = Xc.conj().T @ Xc
        blocks = [
            (1.0, Yc, Pc), (1.0, Pc, Yc),
            (-1.0, Wc, Pc), (-1.0, Pc, Wc),
            (1.0, Xc, Xc), (-1.0, Pc @ G, Pc),
        ]
        return DenseKernel(self, blocks)

    def _features(self, Z) -> np.ndarray:
        """Row vector Phi(Z) over the truncated basis."""
        p = self.params
        Z = np.asarray(Z, dtype=float).ravel()
        parts = []
        for i, a in enumerate(p.a):
            z = Z[2 * i] + 1j * Z[2 * i + 1]
            parts.append(horizontal_eigenfunctions(a, z, self.amax, self.bmax).ravel())
        for j, a in enumerate(p.a_perp):
            parts.append(normal_eigenfunctions(a, Z[2 * p.nh + j], self.gmax))
        return reduce(np.kron, parts, np.ones(1))
