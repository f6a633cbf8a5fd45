"""Ladder-operator calculus for the model operator on C^{n-n0} x R^{n0}.

Coordinates are split as Z = (Z^0, Z^perp): the horizontal part is complex,
z_i = Z_{2i-1} + i Z_{2i}, the normal part Z^perp is real.  The ladder letters
act on functions of Z by

    b_i       = -2 d/dz_i     + (a_i/2) zbar_i
    b_i^+     =  2 d/dzbar_i  + (a_i/2) z_i
    bperp_j   = -d/dZ_j       + a_perp_j Z_j
    bperp_j^+ =  d/dZ_j       + a_perp_j Z_j

so that [b_i, b_i^+] = -2 a_i and [bperp_j, bperp_j^+] = -2 a_perp_j.  The model
operator L_2^0 = sum b_i b_i^+ + sum bperp_j bperp_j^+ has spectrum
2<alpha, a> + 2<gamma, a_perp> and its kernel is spanned by the range of the
Gaussian projector P (see :func:`eval_kernel`).

Operators are :class:`LadderPolynomial` objects (normal-ordered words);
integral kernels are :class:`KernelPolynomial` objects q(Z, Z') P(Z, Z').
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from functools import lru_cache
from math import comb, factorial, pi, sqrt
from types import MappingProxyType
from typing import Iterable, Mapping, NamedTuple, Sequence, Tuple

import numpy as np

from . import _poly
from ._poly import Poly

__all__ = [
    "DEFAULT_DEGREE_CAP",
    "DegreeOverflowError",
    "ParameterMismatchError",
    "ModelParams",
    "Letter",
    "LadderPolynomial",
    "KernelPolynomial",
    "EigenForm",
    "normal_order",
    "apply_to_kernel",
    "to_eigen_form",
    "project_and_resolve",
    "eval_kernel",
    "gaussian_moment_integrate",
    "compose",
    "model_operator",
]

DEFAULT_DEGREE_CAP = 24
TWO_PI = 2.0 * pi


class DegreeOverflowError(ValueError):
    """A word or polynomial exceeded the configured degree cap."""


class ParameterMismatchError(ValueError):
    """Operands were built for different :class:`ModelParams`."""


@dataclass(frozen=True)
class ModelParams:
    """Dimensions and J-eigenvalues of the model.

    ``a`` holds the n-n0 horizontal eigenvalues, ``a_perp`` the n0 normal ones.
    """

    n: int
    n0: int
    a: Tuple[float, ...] = ()
    a_perp: Tuple[float, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "a", tuple(float(x) for x in self.a))
        object.__setattr__(self, "a_perp", tuple(float(x) for x in self.a_perp))
        if self.n0 < 0 or self.n0 > self.n:
            raise ValueError(f"need 0 <= n0 <= n, got n={self.n}, n0={self.n0}")
        if len(self.a) != self.n - self.n0 or len(self.a_perp) != self.n0:
            raise ValueError("a must have n-n0 entries and a_perp n0 entries")
        if any(x <= 0 for x in self.a + self.a_perp):
            raise ValueError("all eigenvalues a, a_perp must be positive")

    @classmethod
    def kahler(cls, n: int, n0: int) -> "ModelParams":
        """The standard specialisation a_i = a_perp_j = 2 pi."""
        return cls(n, n0, (TWO_PI,) * (n - n0), (TWO_PI,) * n0)

    @property
    def nh(self) -> int:
        return self.n - self.n0

    @property
    def kahler_standard(self) -> bool:
        return all(abs(x - TWO_PI) <= 1e-14 * TWO_PI for x in self.a + self.a_perp)

    # variable slots of a KernelPolynomial
    @property
    def nvars(self) -> int:
        return 2 * (2 * self.nh + self.n0)

    def var_z(self, i, primed=False):
        return i + (self._half if primed else 0)

    def var_zb(self, i, primed=False):
        return self.nh + i + (self._half if primed else 0)

    def var_Z(self, j, primed=False):
        return 2 * self.nh + j + (self._half if primed else 0)

    @property
    def _half(self):
        return 2 * self.nh + self.n0


def _check_same(p: ModelParams, q: ModelParams):
    if p != q:
        raise ParameterMismatchError(f"parameter mismatch: {p} vs {q}")


# --------------------------------------------------------------------------
# letters and canonical words

class Letter(NamedTuple):
    """One generator.  kind is one of z, zb, Z, bp, bnp, b, bn."""

    kind: str
    index: int


_H_KINDS = ("z", "zb", "bp", "b")      # per horizontal direction, canonical order
_N_KINDS = ("Z", "bnp", "bn")          # per normal direction
_ADJOINT_KIND = {"z": "zb", "zb": "z", "Z": "Z", "b": "bp", "bp": "b",
                 "bn": "bnp", "bnp": "bn"}


def _horizontal_comm(a: float, x: int, y: int) -> float:
    """XY - YX for ranks x > y in (z, zb, bp, b)."""
    table = {(2, 1): 2.0, (3, 0): -2.0, (3, 2): -2.0 * a}
    return table.get((x, y), 0.0)


def _normal_comm(a: float, x: int, y: int) -> float:
    """XY - YX for ranks x > y in (Z, bnp, bn)."""
    table = {(1, 0): 1.0, (2, 0): -1.0, (2, 1): -2.0 * a}
    return table.get((x, y), 0.0)


@lru_cache(maxsize=None)
def _order_runs(kind: str, a: float, runs: tuple) -> tuple:
    """Normal-order a product of powers of one direction's generators.

    ``runs`` is a tuple of (rank, power).  Out-of-order neighbours X^m Y^n with a
    central commutator c = [X, Y] are rewritten with
    X^m Y^n = sum_k C(m,k) C(n,k) k! c^k Y^(n-k) X^(m-k).
    """
    merged = []
    for r, p in runs:
        if p == 0:
            continue
        if merged and merged[-1][0] == r:
            merged[-1] = (r, merged[-1][1] + p)
        else:
            merged.append((r, p))
    nranks = 4 if kind == "h" else 3
    comm = _horizontal_comm if kind == "h" else _normal_comm
    for i in range(len(merged) - 1):
        (x, m), (y, n) = merged[i], merged[i + 1]
        if x > y:
            c = comm(a, x, y)
            out: dict = {}
            kmax = min(m, n) if c != 0.0 else 0
            for k in range(kmax + 1):
                coef = comb(m, k) * comb(n, k) * factorial(k) * c ** k
                new = tuple(merged[:i]) + ((y, n - k), (x, m - k)) + tuple(merged[i + 2:])
                for blk, cc in _order_runs(kind, a, new):
                    out[blk] = out.get(blk, 0.0) + coef * cc
            return tuple((b, c_) for b, c_ in out.items() if c_ != 0.0)
    block = [0] * nranks
    for r, p in merged:
        block[r] += p
    return ((tuple(block), 1.0),)


def _block_runs(block: Sequence[int]) -> tuple:
    return tuple((r, p) for r, p in enumerate(block) if p)


class _Layout:
    """Slot bookkeeping for canonical words of given parameters."""

    def __init__(self, params: ModelParams):
        self.params = params
        nh, n0 = params.nh, params.n0
        self.length = 4 * nh + 3 * n0
        self.blocks = [(4 * i, 4, "h", params.a[i]) for i in range(nh)]
        self.blocks += [(4 * nh + 3 * j, 3, "n", params.a_perp[j]) for j in range(n0)]

    def slot(self, letter: Letter) -> int:
        kind, idx = letter
        if kind in _H_KINDS:
            if not 0 <= idx < self.params.nh:
                raise IndexError(f"horizontal index {idx} out of range")
            return 4 * idx + _H_KINDS.index(kind)
        if kind in _N_KINDS:
            if not 0 <= idx < self.params.n0:
                raise IndexError(f"normal index {idx} out of range")
            return 4 * self.params.nh + 3 * idx + _N_KINDS.index(kind)
        raise ValueError(f"unknown letter kind {kind!r}")

    def product(self, w1: tuple, w2: tuple):
        """Canonical expansion of the product of two canonical words."""
        per_block = []
        for start, size, kind, a in self.blocks:
            b1 = w1[start:start + size]
            b2 = w2[start:start + size]
            if not any(b2) or not any(b1):
                per_block.append((((tuple(x + y for x, y in zip(b1, b2))), 1.0),))
            else:
                per_block.append(_order_runs(kind, a, _block_runs(b1) + _block_runs(b2)))
        for combo in itertools.product(*per_block):
            word = sum((blk for blk, _ in combo), ())
            coef = 1.0
            for _, c in combo:
                coef *= c
            yield word, coef

    def letters(self, word: tuple):
        """Letters of a canonical word in display order (multipliers, creators, annihilators)."""
        nh, n0 = self.params.nh, self.params.n0
        out = []
        groups = [(("z", "zb"), ("Z",)), (("bp",), ("bnp",)), (("b",), ("bn",))]
        for hk, nk in groups:
            for kind in hk:
                for i in range(nh):
                    out += [Letter(kind, i)] * word[4 * i + _H_KINDS.index(kind)]
            for kind in nk:
                for j in range(n0):
                    out += [Letter(kind, j)] * word[4 * nh + 3 * j + _N_KINDS.index(kind)]
        return out


_LAYOUTS: dict = {}


def _layout(params: ModelParams) -> _Layout:
    lay = _LAYOUTS.get(params)
    if lay is None:
        lay = _LAYOUTS[params] = _Layout(params)
    return lay


_DISPLAY = {"z": "z{}", "zb": "zb{}", "Z": "Z{}", "bp": "b{}+", "b": "b{}",
            "bnp": "bperp{}+", "bn": "bperp{}"}


class LadderPolynomial:
    """Finite sum of canonical words with complex coefficients (immutable).

    A canonical word is stored as a tuple of exponents, direction by direction:
    (z, zb, b^+, b) for every horizontal index, then (Z, bperp^+, bperp) for every
    normal index.  Letters of different directions commute, so this layout is
    the canonical order multipliers -> creators -> annihilators up to
    relabelling.
    """

    __slots__ = ("params", "_terms", "cap")

    def __init__(self, params: ModelParams, terms: Mapping[tuple, complex] | None = None,
                 *, cap: int = DEFAULT_DEGREE_CAP, tol: float = _poly.DROP_TOL):
        self.params = params
        self.cap = cap
        clean = _poly.prune(dict(terms or {}), tol)
        for w in clean:
            if sum(w) > cap:
                raise DegreeOverflowError(f"word degree {sum(w)} exceeds cap {cap}")
        self._terms = MappingProxyType({w: complex(c) for w, c in clean.items()})

    # construction
    @classmethod
    def zero(cls, params):
        return cls(params)

    @classmethod
    def const(cls, params, c: complex = 1.0):
        return cls(params, {(0,) * _layout(params).length: c})

    @classmethod
    def letter(cls, params, kind: str, index: int, coeff: complex = 1.0):
        lay = _layout(params)
        w = [0] * lay.length
        w[lay.slot(Letter(kind, index))] = 1
        return cls(params, {tuple(w): coeff})

    @property
    def terms(self) -> Mapping[tuple, complex]:
        return self._terms

    def words(self):
        """Yield (coefficient, [Letter, ...]) in display order."""
        lay = _layout(self.params)
        for w, c in self._terms.items():
            yield c, lay.letters(w)

    def degree(self) -> int:
        return max((sum(w) for w in self._terms), default=0)

    def is_zero(self) -> bool:
        return not self._terms

    # arithmetic
    def _coerce(self, other):
        if isinstance(other, LadderPolynomial):
            _check_same(self.params, other.params)
            return other
        return LadderPolynomial.const(self.params, complex(other))

    def __add__(self, other):
        other = self._coerce(other)
        return LadderPolynomial(self.params, _poly.add(dict(self._terms), dict(other._terms)),
                                cap=self.cap)

    __radd__ = __add__

    def __neg__(self):
        return LadderPolynomial(self.params, _poly.scale(dict(self._terms), -1.0), cap=self.cap)

    def __sub__(self, other):
        return self + (-self._coerce(other))

    def __rsub__(self, other):
        return self._coerce(other) - self

    def __mul__(self, other):
        if not isinstance(other, LadderPolynomial):
            return LadderPolynomial(self.params, _poly.scale(dict(self._terms), complex(other)),
                                    cap=self.cap)
        _check_same(self.params, other.params)
        lay = _layout(self.params)
        out: dict = {}
        for w1, c1 in self._terms.items():
            for w2, c2 in other._terms.items():
                for w, c in lay.product(w1, w2):
                    out[w] = out.get(w, 0.0) + c1 * c2 * c
        return LadderPolynomial(self.params, out, cap=self.cap)

    def __rmul__(self, other):
        return LadderPolynomial(self.params, _poly.scale(dict(self._terms), complex(other)),
                                cap=self.cap)

    def __pow__(self, k: int):
        out = LadderPolynomial.const(self.params, 1.0)
        for _ in range(k):
            out = out * self
        return out

    def adjoint(self) -> "LadderPolynomial":
        """Formal L^2 adjoint: reverse words, swap b <-> b^+, z <-> zbar, conjugate."""
        out = LadderPolynomial.zero(self.params)
        for c, letters in self.words():
            seq = [Letter(_ADJOINT_KIND[k], i) for k, i in reversed(letters)]
            out = out + normal_order(self.params, [(np.conj(c), seq)])
        return out

    def commutator(self, other) -> "LadderPolynomial":
        return self * other - other * self

    def reduced(self) -> "LadderPolynomial":
        """Rewrite normal multipliers as Z_j = (bperp_j + bperp_j^+) / (2 a_perp_j).

        The canonical form is not unique while Z letters are present (Z is a
        combination of bperp and bperp^+); after this substitution it is.
        """
        p = self.params
        lay = _layout(p)
        if not any(w[lay.slot(Letter("Z", j))] for w in self._terms for j in range(p.n0)):
            return self
        out = LadderPolynomial.zero(p)
        for c, letters in self.words():
            word = LadderPolynomial.const(p, c)
            for kind, i in letters:
                if kind == "Z":
                    factor = (LadderPolynomial.letter(p, "bn", i) + LadderPolynomial.letter(p, "bnp", i)) \
                        * (1.0 / (2.0 * p.a_perp[i]))
                else:
                    factor = LadderPolynomial.letter(p, kind, i)
                word = word * factor
            out = out + word
        return out

    def is_close(self, other, tol: float = 1e-12) -> bool:
        diff = (self - self._coerce(other)).reduced()
        scale = max([abs(c) for c in self._terms.values()] + [1.0])
        return all(abs(c) <= tol * scale for c in diff._terms.values())

    def __eq__(self, other):
        if not isinstance(other, LadderPolynomial):
            return NotImplemented
        return self.params == other.params and dict(self._terms) == dict(other._terms)

    def __hash__(self):
        return hash((self.params, frozenset(self._terms.items())))

    def __repr__(self):
        if not self._terms:
            return "LadderPolynomial(0)"
        parts = []
        for c, letters in self.words():
            name = "*".join(_DISPLAY[k].format(i + 1) for k, i in letters) or "1"
            parts.append(f"({c:.6g})*{name}")
        return "LadderPolynomial(" + " + ".join(parts) + ")"


def normal_order(params: ModelParams, expr) -> LadderPolynomial:
    """Canonical form of a word sum.

    ``expr`` is either a :class:`LadderPolynomial` (already canonical; returned
    unchanged up to pruning) or an iterable of ``(coefficient, letters)`` where
    ``letters`` is a left-to-right sequence of :class:`Letter` or
    ``(kind, index)`` pairs.
    """
    if isinstance(expr, LadderPolynomial):
        _check_same(params, expr.params)
        return LadderPolynomial(params, expr.terms, cap=expr.cap)
    total = LadderPolynomial.zero(params)
    for coeff, letters in expr:
        word = LadderPolynomial.const(params, coeff)
        for kind, idx in letters:
            word = word * LadderPolynomial.letter(params, kind, idx)
        total = total + word
    return total


def model_operator(params: ModelParams, part: str = "full") -> LadderPolynomial:
    """L (horizontal), Lperp (normal) or the full L_2^0 = L + Lperp."""
    L = LadderPolynomial.zero(params)
    if part in ("full", "horizontal"):
        for i in range(params.nh):
            L = L + LadderPolynomial.letter(params, "b", i) * LadderPolynomial.letter(params, "bp", i)
    if part in ("full", "normal"):
        for j in range(params.n0):
            L = L + LadderPolynomial.letter(params, "bn", j) * LadderPolynomial.letter(params, "bnp", j)
    return L


# --------------------------------------------------------------------------
# kernels

class KernelPolynomial:
    """Kernel q(Z, Z') P(Z, Z') with P the model Gaussian projector.

    Variable slots of q: z_i, zbar_i, Z_j, then the same for the primed point.
    """

    __slots__ = ("params", "_q", "cap")

    def __init__(self, params: ModelParams, q: Mapping[tuple, complex] | None = None,
                 *, cap: int = DEFAULT_DEGREE_CAP, tol: float = _poly.DROP_TOL):
        self.params = params
        self.cap = cap
        clean = _poly.prune(dict(q or {}), tol)
        for e in clean:
            if len(e) != params.nvars:
                raise ValueError("exponent tuple length does not match the parameters")
            if sum(e) > cap:
                raise DegreeOverflowError(f"kernel degree {sum(e)} exceeds cap {cap}")
        self._q = MappingProxyType(clean)

    @classmethod
    def identity(cls, params):
        return cls(params, _poly.constant(params.nvars))

    @classmethod
    def zero(cls, params):
        return cls(params)

    @classmethod
    def from_monomials(cls, params, items: Iterable[Tuple[complex, Mapping[str, int]]]):
        """Build q from ``(coeff, {"z1": 1, "zbp1": 2, "Z1": 1, ...})`` pairs.

        Names: z, zb, Z for the unprimed point and zp, zbp, Zp for the primed one,
        followed by a 1-based index.
        """
        q: Poly = {}
        for coeff, powers in items:
            e = [0] * params.nvars
            for name, k in powers.items():
                e[_var_from_name(params, name)] += k
            q[tuple(e)] = q.get(tuple(e), 0.0) + coeff
        return cls(params, q)

    @property
    def q(self) -> Mapping[tuple, complex]:
        return self._q

    def degree(self) -> int:
        return _poly.degree(self._q)

    def is_zero(self) -> bool:
        return not self._q

    def _coerce(self, other):
        _check_same(self.params, other.params)
        return other

    def __add__(self, other):
        other = self._coerce(other)
        return KernelPolynomial(self.params, _poly.add(dict(self._q), dict(other._q)), cap=self.cap)

    def __sub__(self, other):
        other = self._coerce(other)
        return KernelPolynomial(self.params, _poly.add(dict(self._q), dict(other._q), -1.0),
                                cap=self.cap)

    def __neg__(self):
        return KernelPolynomial(self.params, _poly.scale(dict(self._q), -1.0), cap=self.cap)

    def __mul__(self, s):
        return KernelPolynomial(self.params, _poly.scale(dict(self._q), complex(s)), cap=self.cap)

    __rmul__ = __mul__

    def __truediv__(self, s):
        return self * (1.0 / s)

    def adjoint(self) -> "KernelPolynomial":
        """K*(Z, Z') = conj(K(Z', Z)); P is Hermitian so only q changes."""
        p = self.params
        nh, n0, half = p.nh, p.n0, p._half
        out: Poly = {}
        for e, c in self._q.items():
            f = [0] * p.nvars
            for i in range(nh):
                f[i] = e[half + nh + i]            # z   <- zbar'
                f[nh + i] = e[half + i]            # zb  <- z'
                f[half + i] = e[nh + i]            # z'  <- zbar
                f[half + nh + i] = e[i]            # zb' <- z
            for j in range(n0):
                f[2 * nh + j] = e[half + 2 * nh + j]
                f[half + 2 * nh + j] = e[2 * nh + j]
            out[tuple(f)] = np.conj(c)
        return KernelPolynomial(p, out, cap=self.cap)

    def evaluate(self, Z, Zp) -> complex:
        return eval_kernel(self, Z, Zp)

    __call__ = evaluate

    def is_close(self, other, tol: float = 1e-12) -> bool:
        diff = self - other
        scale = max([abs(c) for c in self._q.values()] + [1.0])
        return all(abs(c) <= tol * scale for c in diff.q.values())

    def parity_split(self):
        """(even part, odd part) under (Z, Z') -> (-Z, -Z')."""
        even = {e: c for e, c in self._q.items() if sum(e) % 2 == 0}
        odd = {e: c for e, c in self._q.items() if sum(e) % 2 == 1}
        return KernelPolynomial(self.params, even), KernelPolynomial(self.params, odd)

    def __repr__(self):
        return f"KernelPolynomial(terms={len(self._q)}, degree={self.degree()})"


def _var_from_name(params: ModelParams, name: str) -> int:
    for prefix, fn, primed in (("zbp", params.var_zb, True), ("zp", params.var_z, True),
                               ("Zp", params.var_Z, True), ("zb", params.var_zb, False),
                               ("z", params.var_z, False), ("Z", params.var_Z, False)):
        if name.startswith(prefix) and name[len(prefix):].isdigit():
            return fn(int(name[len(prefix):]) - 1, primed)
    raise ValueError(f"bad variable name {name!r}")


# action of single letters on q (the Gaussian factor is absorbed analytically)

def _act(params: ModelParams, letter: Letter, q: Poly) -> Poly:
    kind, i = letter
    if kind == "z":
        return _poly.mul_var(q, params.var_z(i))
    if kind == "zb":
        return _poly.mul_var(q, params.var_zb(i))
    if kind == "Z":
        return _poly.mul_var(q, params.var_Z(i))
    if kind == "b":
        a = params.a[i]
        out = _poly.scale(_poly.deriv(q, params.var_z(i)), -2.0)
        _poly.add_into(out, _poly.mul_var(q, params.var_zb(i)), a)
        _poly.add_into(out, _poly.mul_var(q, params.var_zb(i, True)), -a)
        return out
    if kind == "bp":
        return _poly.scale(_poly.deriv(q, params.var_zb(i)), 2.0)
    if kind == "bn":
        a = params.a_perp[i]
        out = _poly.scale(_poly.deriv(q, params.var_Z(i)), -1.0)
        _poly.add_into(out, _poly.mul_var(q, params.var_Z(i)), 2.0 * a)
        return out
    if kind == "bnp":
        return _poly.deriv(q, params.var_Z(i))
    raise ValueError(f"unknown letter kind {kind!r}")


def _apply_word(params: ModelParams, letters: Sequence[Letter], q: Poly) -> Poly:
    for letter in reversed(letters):
        q = _act(params, letter, q)
        if not q:
            break
    return q


def apply_to_kernel(op: LadderPolynomial, k: KernelPolynomial) -> KernelPolynomial:
    """op . K with op acting in the unprimed variable."""
    _check_same(op.params, k.params)
    out: Poly = {}
    base = dict(k.q)
    for c, letters in op.words():
        _poly.add_into(out, _apply_word(op.params, letters, base), c)
    return KernelPolynomial(k.params, out, cap=max(op.cap, k.cap))


def right_apply(k: KernelPolynomial, op: LadderPolynomial) -> KernelPolynomial:
    """K . op, computed as (op^* K^*)^*."""
    return apply_to_kernel(op.adjoint(), k.adjoint()).adjoint()


# --------------------------------------------------------------------------
# eigen-decomposition under L_2^0

@dataclass(frozen=True)
class EigenForm:
    """K = sum over (alpha, gamma) of b^alpha bperp^gamma (f P).

    Each f is holomorphic in the unprimed horizontal variables and independent
    of the unprimed normal ones.
    """

    params: ModelParams
    components: Mapping[tuple, Poly] = field(default_factory=dict)

    def eigenvalue(self, key) -> float:
        alpha, gamma = key
        return (2.0 * sum(x * y for x, y in zip(alpha, self.params.a))
                + 2.0 * sum(x * y for x, y in zip(gamma, self.params.a_perp)))

    def component_kernel(self, key) -> KernelPolynomial:
        alpha, gamma = key
        letters = [Letter("b", i) for i, m in enumerate(alpha) for _ in range(m)]
        letters += [Letter("bn", j) for j, m in enumerate(gamma) for _ in range(m)]
        return KernelPolynomial(self.params, _apply_word(self.params, letters, self.components[key]))

    def to_kernel(self, weight=None) -> KernelPolynomial:
        """Reassemble, optionally scaling component ``key`` by ``weight(key)``."""
        out: Poly = {}
        for key, f in self.components.items():
            w = 1.0 if weight is None else weight(key)
            if w == 0.0:
                continue
            _poly.add_into(out, dict(self.component_kernel(key).q), w)
        return KernelPolynomial(self.params, out)


class _EigenEngine:
    """Memoised splitting of monomials into ladder components."""

    def __init__(self, params: ModelParams):
        self.p = params
        self.cache: dict = {}

    def split(self, e: tuple) -> dict:
        hit = self.cache.get(e)
        if hit is not None:
            return hit
        p = self.p
        out: dict = {}
        zero_key = ((0,) * p.nh, (0,) * p.n0)
        target = None
        for i in range(p.nh):
            if e[p.var_zb(i)]:
                target = ("h", i)
                break
        if target is None:
            for j in range(p.n0):
                if e[p.var_Z(j)]:
                    target = ("n", j)
                    break
        if target is None:
            out[zero_key] = {e: 1.0}
        else:
            kind, i = target
            g = list(e)
            if kind == "h":
                a = p.a[i]
                g[p.var_zb(i)] -= 1
                g = tuple(g)
                # zbar g P = (1/a) b (g P) + [(2/a) d_z g + zbar' g] P
                self._shifted(out, self.split(g), ("h", i), 1.0 / a)
                rest = _poly.scale(_poly.deriv({g: 1.0}, p.var_z(i)), 2.0 / a)
                _poly.add_into(rest, _poly.mul_var({g: 1.0}, p.var_zb(i, True)))
            else:
                a = p.a_perp[i]
                g[p.var_Z(i)] -= 1
                g = tuple(g)
                # Z g P = (1/2a) [bperp (g P) + (d_Z g) P]
                self._shifted(out, self.split(g), ("n", i), 1.0 / (2.0 * a))
                rest = _poly.scale(_poly.deriv({g: 1.0}, p.var_Z(i)), 1.0 / (2.0 * a))
            for m, c in rest.items():
                self._accumulate(out, self.split(m), c)
        self.cache[e] = out
        return out

    @staticmethod
    def _accumulate(out, comps, c):
        for key, f in comps.items():
            acc = out.setdefault(key, {})
            _poly.add_into(acc, f, c)

    @staticmethod
    def _shifted(out, comps, shift, c):
        kind, i = shift
        for (alpha, gamma), f in comps.items():
            if kind == "h":
                alpha = alpha[:i] + (alpha[i] + 1,) + alpha[i + 1:]
            else:
                gamma = gamma[:i] + (gamma[i] + 1,) + gamma[i + 1:]
            acc = out.setdefault((alpha, gamma), {})
            _poly.add_into(acc, f, c)


_ENGINES: dict = {}


def to_eigen_form(k: KernelPolynomial) -> EigenForm:
    eng = _ENGINES.get(k.params)
    if eng is None:
        eng = _ENGINES[k.params] = _EigenEngine(k.params)
    comps: dict = {}
    for e, c in k.q.items():
        eng._accumulate(comps, eng.split(e), c)
    clean = {}
    for key, f in comps.items():
        f = _poly.prune(f)
        if f:
            clean[key] = f
    return EigenForm(k.params, clean)


def project_and_resolve(k: KernelPolynomial, mode: str = "project", m: int = 1) -> KernelPolynomial:
    """P^N K (mode="project") or (L_2^0)^(-m) P^Nperp K (mode="resolve")."""
    ef = to_eigen_form(k)
    zero_key = ((0,) * k.params.nh, (0,) * k.params.n0)
    if mode == "project":
        return ef.to_kernel(lambda key: 1.0 if key == zero_key else 0.0)
    if mode == "resolve":
        if m not in (1, 2):
            raise ValueError("resolve power must be 1 or 2")
        return ef.to_kernel(lambda key: 0.0 if key == zero_key else ef.eigenvalue(key) ** (-m))
    raise ValueError(f"unknown mode {mode!r}")


# --------------------------------------------------------------------------
# evaluation and integration

def _split_point(params: ModelParams, Z):
    Z = np.asarray(Z, dtype=float).ravel()
    if Z.size != 2 * params.nh + params.n0:
        raise ValueError(f"point must have {2 * params.nh + params.n0} real coordinates")
    z = Z[0:2 * params.nh:2] + 1j * Z[1:2 * params.nh:2]
    return z, Z[2 * params.nh:]


def gaussian_factor(params: ModelParams, Z, Zp) -> complex:
    z, X = _split_point(params, Z)
    zp, Xp = _split_point(params, Zp)
    val = 1.0 + 0.0j
    for i, a in enumerate(params.a):
        val *= a / TWO_PI * np.exp(-a / 4.0 * (abs(z[i]) ** 2 + abs(zp[i]) ** 2
                                               - 2.0 * z[i] * np.conj(zp[i])))
    for j, a in enumerate(params.a_perp):
        val *= sqrt(a / pi) * np.exp(-a / 2.0 * (X[j] ** 2 + Xp[j] ** 2))
    return complex(val)


def eval_kernel(k: KernelPolynomial, Z, Zp) -> complex:
    """q(Z, Z') P(Z, Z') at real split coordinates (Re z, Im z, ..., Zperp)."""
    p = k.params
    z, X = _split_point(p, Z)
    zp, Xp = _split_point(p, Zp)
    values = list(z) + list(np.conj(z)) + list(X) + list(zp) + list(np.conj(zp)) + list(Xp)
    return _poly.evaluate(k.q, values) * gaussian_factor(p, Z, Zp)


def gaussian_moment_integrate(k: KernelPolynomial, domain: str = "diagonal_normal",
                              base=None) -> complex:
    """Exact integral of K((z0, Zperp), (z0, Zperp)) over Zperp in R^n0.

    ``diagonal_normal`` uses z0 = 0; ``full_diagonal_slice`` uses the
    horizontal base point ``base`` (complex sequence, default 0).
    """
    p = k.params
    if domain == "diagonal_normal":
        z0 = np.zeros(p.nh, dtype=complex)
    elif domain == "full_diagonal_slice":
        z0 = np.zeros(p.nh, dtype=complex) if base is None else np.asarray(base, dtype=complex)
    else:
        raise ValueError(f"unknown domain {domain!r}")
    total = 0.0 + 0.0j
    for e, c in k.q.items():
        term = c
        for i in range(p.nh):
            term *= (z0[i] ** e[p.var_z(i)] * np.conj(z0[i]) ** e[p.var_zb(i)]
                     * z0[i] ** e[p.var_z(i, True)] * np.conj(z0[i]) ** e[p.var_zb(i, True)])
        for j, a in enumerate(p.a_perp):
            power = e[p.var_Z(j)] + e[p.var_Z(j, True)]
            # sqrt(a/pi) exp(-a Z^2) is a normal density of variance 1/(2a)
            term *= _poly.real_moment(power, 1.0 / (2.0 * a))
        total += term
    # horizontal diagonal density of P at (z0, z0)
    for a in p.a:
        total *= a / TWO_PI
    if not np.isfinite(total):
        raise ValueError("non-integrable kernel")
    return complex(total)


# --------------------------------------------------------------------------
# composition of kernels

@lru_cache(maxsize=None)
def _horizontal_moment(a: float, A: int, B: int) -> tuple:
    """E[(z+u)^A (zbar'+ubar)^B] as ((power of z, power of zbar', coeff), ...)."""
    s = 2.0 / a
    return tuple((A - j, B - j, comb(A, j) * comb(B, j) * factorial(j) * s ** j)
                 for j in range(min(A, B) + 1))


def compose(k1: KernelPolynomial, k2: KernelPolynomial) -> KernelPolynomial:
    """Kernel of the operator product: integral of K1(Z, W) K2(W, Z') dW."""
    _check_same(k1.params, k2.params)
    p = k1.params
    nh, n0, half = p.nh, p.n0, p._half
    # group k1 by its primed exponents, k2 by its unprimed ones
    g1: dict = {}
    for e, c in k1.q.items():
        g1.setdefault(e[half:], {})[e[:half]] = c
    g2: dict = {}
    for e, c in k2.q.items():
        g2.setdefault(e[:half], {})[e[half:]] = c
    out: Poly = {}
    for w1, left in g1.items():
        for w2, right in g2.items():
            # powers of w, wbar, W coming from both factors
            moment_terms = [((0,) * nh, (0,) * nh, 1.0)]
            for i in range(nh):
                A = w1[i] + w2[i]
                B = w1[nh + i] + w2[nh + i]
                new = []
                for zpow, zbpow, c in moment_terms:
                    for pa, pb, m in _horizontal_moment(p.a[i], A, B):
                        new.append((zpow[:i] + (pa,) + zpow[i + 1:],
                                    zbpow[:i] + (pb,) + zbpow[i + 1:], c * m))
                moment_terms = new
            normal = 1.0
            for j in range(n0):
                normal *= _poly.real_moment(w1[2 * nh + j] + w2[2 * nh + j],
                                            1.0 / (2.0 * p.a_perp[j]))
            if normal == 0.0:
                continue
            for eu, cu in left.items():
                for ep, cp in right.items():
                    base_c = cu * cp * normal
                    for zpow, zbpow, m in moment_terms:
                        e = list(eu) + list(ep)
                        for i in range(nh):
                            e[i] += zpow[i]
                            e[half + nh + i] += zbpow[i]
                        t = tuple(e)
                        out[t] = out.get(t, 0.0) + base_c * m
    return KernelPolynomial(p, out, cap=max(k1.cap, k2.cap))
