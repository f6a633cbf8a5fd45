"""Perturbation operators O_1, O_2 and the expansion coefficients P^(1), P^(2).

A :class:`PointGeometry` collects the scalar torsion, curvature and moment-map
contractions at one point of the zero level.  From it we build

* ``O_1`` in ladder form (all term groups, general horizontal dimension),
* ``O_2`` for a reduction to a point (n = n0),

and run the resolvent formulas

    P1 = -(S O1 P + (S O1 P)^*)
    P2 = S O1 S O1 P + adj - S O2 P - adj + S O1 P O1 S - P O1 S^2 O1 P

with S = (L_2^0)^{-1} P^Nperp.  Closed forms for Phi_1 and P^(2)(0,0) are
provided for cross-checking.

Index conventions (e^perp an orthonormal normal frame, all at the base point):

* ``T3[i,j,k]      = <J T(e_i, J e_j), e_k>``      fully symmetric
* ``Ttilde[i,j,k]  = <J T(e_i, e_j), e_k>``        antisymmetric in (i, j)
* ``Tmix.zbar[i,j,k] = <J T(d/dzbar_i, e_j), e_k>`` symmetric in (j, k)
* ``Tmix.H[i,j,k]  = <J T(d/dz_i, d/dzbar_j), e_k>``, H[j,i,k] = -conj(H[i,j,k])
* ``muE.values[k]  = <J e_k, mu^E>``  (imaginary for a unitary line bundle)
* ``muE.normal_derivatives[k,l] = <J e_k, nabla_{e_l} mu^E>``
* ``RTB[i,j,k,l]   = <R^TB(e_i, e_j) e_k, e_l>``
* ``Gdot[j,k,l,m]  = <(nabla_{e_j} gdot_{e_k}) J e_l, J e_m>``
* ``dTtilde[m,k,l,n] = <nabla_{e_m}(T(e_k, e_l)), J e_n>``  (optional, default 0)
"""
from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field, replace
from math import pi, sqrt
from typing import Optional

import numpy as np

from .model import (
    KernelPolynomial,
    LadderPolynomial,
    ModelParams,
    apply_to_kernel,
    compose,
    eval_kernel,
    gaussian_moment_integrate,
    model_operator,
    project_and_resolve,
)

__all__ = [
    "GeometryError",
    "GeometryWarning",
    "PointGeometry",
    "CoefficientResult",
    "build_O1",
    "build_O2_fully_normal",
    "expansion_coefficient",
    "phi_coefficients_closed",
    "phi1_numeric",
    "p2_zero_engine",
    "compute_coefficients",
    "random_geometry",
    "brute_force_coefficient",
]

SYM_TOL = 1e-12

# Trace identity linking T3 to the orbit volume: <T(e_m, J e_l), J e_l> = 2 d_m log h.
# Since J is skew, <T(x, y), J e> = -<J T(x, y), e>, so with the index
# convention above T3[l,l,m] = TORSION_TRACE_SIGN * 2 d_m log h.
TORSION_TRACE_SIGN = -1.0


class GeometryError(ValueError):
    """Geometry data violate a declared symmetry or shape."""


class GeometryWarning(UserWarning):
    """A geometric consistency relation is not satisfied by the data."""


# --------------------------------------------------------------------------
# geometry record

def _arr(x, shape, dtype=float, name="field"):
    a = np.zeros(shape, dtype=dtype) if x is None else np.asarray(x, dtype=dtype)
    if a.shape != tuple(shape):
        raise GeometryError(f"{name}: expected shape {tuple(shape)}, got {a.shape}")
    if not np.all(np.isfinite(a)):
        raise GeometryError(f"{name}: non-finite entries")
    return a


def _check(cond_err: float, scale: float, what: str):
    if cond_err > SYM_TOL * max(1.0, scale):
        raise GeometryError(f"symmetry violated: {what} (error {cond_err:.3g})")


@dataclass(frozen=True, eq=False)
class PointGeometry:
    """Pointwise geometric data at a point of the zero level (line bundle E)."""

    params: ModelParams
    T3: np.ndarray = None
    Ttilde: np.ndarray = None
    Tmix_zbar: np.ndarray = None
    Tmix_H: np.ndarray = None
    muE: np.ndarray = None
    dmuE: np.ndarray = None
    dlogh_normal: np.ndarray = None
    dlogh_horizontal: np.ndarray = None
    d2logh_normal: np.ndarray = None
    laplacian_logh: complex = 0.0
    RTB: np.ndarray = None
    REB_normal: np.ndarray = None
    REG_trace: complex = 0.0
    Gdot: np.ndarray = None
    rXG: float = 0.0
    dTtilde: np.ndarray = None
    check_consistency: bool = field(default=True, repr=False)

    def __post_init__(self):
        p = self.params
        nh, n0 = p.nh, p.n0
        fix = object.__setattr__
        fix(self, "T3", _arr(self.T3, (n0, n0, n0), float, "T3"))
        fix(self, "Ttilde", _arr(self.Ttilde, (n0, n0, n0), float, "Ttilde"))
        fix(self, "Tmix_zbar", _arr(self.Tmix_zbar, (nh, n0, n0), complex, "Tmix.zbar"))
        fix(self, "Tmix_H", _arr(self.Tmix_H, (nh, nh, n0), complex, "Tmix.H"))
        fix(self, "muE", _arr(self.muE, (n0,), complex, "muE.values"))
        fix(self, "dmuE", _arr(self.dmuE, (n0, n0), complex, "muE.normal_derivatives"))
        fix(self, "dlogh_normal", _arr(self.dlogh_normal, (n0,), float, "dlogh.normal"))
        fix(self, "dlogh_horizontal", _arr(self.dlogh_horizontal, (nh,), complex,
                                           "dlogh.horizontal"))
        fix(self, "d2logh_normal", _arr(self.d2logh_normal, (n0, n0), float, "d2logh.normal"))
        fix(self, "RTB", _arr(self.RTB, (n0,) * 4, float, "RTB"))
        fix(self, "REB_normal", _arr(self.REB_normal, (n0, n0), complex, "REB.normal"))
        fix(self, "Gdot", _arr(self.Gdot, (n0,) * 4, float, "Gdot"))
        fix(self, "dTtilde", _arr(self.dTtilde, (n0,) * 4, float, "dTtilde"))
        fix(self, "laplacian_logh", complex(self.laplacian_logh))
        fix(self, "REG_trace", complex(self.REG_trace))
        fix(self, "rXG", float(self.rXG))
        for name in ("laplacian_logh", "REG_trace", "rXG"):
            if not np.isfinite(getattr(self, name)):
                raise GeometryError(f"{name}: non-finite")
        self._validate()
        if self.check_consistency:
            self._consistency()

    def _validate(self):
        T3 = self.T3
        for perm in ((1, 0, 2), (0, 2, 1), (2, 1, 0)):
            _check(np.max(np.abs(T3 - T3.transpose(perm)), initial=0.0),
                   np.max(np.abs(T3), initial=0.0), "T3 not fully symmetric")
        Tt = self.Ttilde
        _check(np.max(np.abs(Tt + Tt.transpose(1, 0, 2)), initial=0.0),
               np.max(np.abs(Tt), initial=0.0), "Ttilde not antisymmetric in (i, j)")
        Z = self.Tmix_zbar
        _check(np.max(np.abs(Z - Z.transpose(0, 2, 1)), initial=0.0),
               np.max(np.abs(Z), initial=0.0), "Tmix.zbar not symmetric in (j, k)")
        H = self.Tmix_H
        _check(np.max(np.abs(H + np.conj(H.transpose(1, 0, 2))), initial=0.0),
               np.max(np.abs(H), initial=0.0), "Tmix.H violates H[j,i,k] = -conj(H[i,j,k])")
        D = self.d2logh_normal
        _check(np.max(np.abs(D - D.T), initial=0.0), np.max(np.abs(D), initial=0.0),
               "d2logh.normal not symmetric")
        R = self.RTB
        s = np.max(np.abs(R), initial=0.0)
        _check(np.max(np.abs(R + R.transpose(1, 0, 2, 3)), initial=0.0), s,
               "RTB not antisymmetric in the first pair")
        _check(np.max(np.abs(R + R.transpose(0, 1, 3, 2)), initial=0.0), s,
               "RTB not antisymmetric in the second pair")
        _check(np.max(np.abs(R - R.transpose(2, 3, 0, 1)), initial=0.0), s,
               "RTB not pair symmetric")
        E = self.REB_normal
        _check(np.max(np.abs(E + E.T), initial=0.0), np.max(np.abs(E), initial=0.0),
               "REB.normal not antisymmetric")
        G = self.Gdot
        _check(np.max(np.abs(G - G.transpose(0, 1, 3, 2)), initial=0.0),
               np.max(np.abs(G), initial=0.0), "Gdot not symmetric in the last pair")
        dT = self.dTtilde
        _check(np.max(np.abs(dT + dT.transpose(0, 2, 1, 3)), initial=0.0),
               np.max(np.abs(dT), initial=0.0), "dTtilde not antisymmetric in (k, l)")

    def _consistency(self):
        n0 = self.params.n0
        if n0 == 0:
            return
        lhs = np.einsum("llm->m", self.T3)
        rhs = TORSION_TRACE_SIGN * 2.0 * self.dlogh_normal
        if np.max(np.abs(lhs - rhs)) > 1e-8 * max(1.0, np.max(np.abs(rhs))):
            warnings.warn("T3[l,l,m] != -2 dlogh[m]", GeometryWarning, stacklevel=3)
        lhs = np.einsum("kkll->", self.Gdot)
        rhs = 4.0 * np.trace(self.d2logh_normal)
        if abs(lhs - rhs) > 1e-8 * max(1.0, abs(rhs)):
            warnings.warn("Gdot[k,k,l,l] != 4 tr d2logh", GeometryWarning, stacklevel=3)

    # ------------------------------------------------------------ helpers
    @classmethod
    def zero(cls, params: ModelParams) -> "PointGeometry":
        return cls(params)

    def with_(self, **changes) -> "PointGeometry":
        return replace(self, **changes)

    @property
    def Tmix_z(self) -> np.ndarray:
        """<J T(d/dz_i, e_j), e_k>, the conjugate of ``Tmix_zbar``."""
        return np.conj(self.Tmix_zbar)

    # ------------------------------------------------------------ JSON
    def to_dict(self) -> dict:
        def enc(a):
            a = np.asarray(a)
            if np.iscomplexobj(a):
                return {"re": np.real(a).tolist(), "im": np.imag(a).tolist()}
            return a.tolist()

        p = self.params
        return {
            "params": {"n": p.n, "n0": p.n0, "a": list(p.a), "a_perp": list(p.a_perp)},
            "T3": enc(self.T3),
            "Ttilde": enc(self.Ttilde),
            "Tmix": {"zbar": enc(self.Tmix_zbar), "H": enc(self.Tmix_H)},
            "muE": {"values": enc(self.muE), "normal_derivatives": enc(self.dmuE)},
            "dlogh": {"normal": enc(self.dlogh_normal), "horizontal": enc(self.dlogh_horizontal)},
            "d2logh": {"normal": enc(self.d2logh_normal),
                       "horizontal_laplacian": enc(self.laplacian_logh)},
            "RTB": enc(self.RTB),
            "REB": {"normal": enc(self.REB_normal), "REG_trace": enc(self.REG_trace)},
            "Gdot": enc(self.Gdot),
            "rXG": self.rXG,
            "dTtilde": enc(self.dTtilde),
        }

    @classmethod
    def from_dict(cls, d: dict, check_consistency: bool = True) -> "PointGeometry":
        def dec(x):
            if x is None:
                return None
            if isinstance(x, dict) and set(x) == {"re", "im"}:
                return np.asarray(x["re"], dtype=float) + 1j * np.asarray(x["im"], dtype=float)
            return np.asarray(x)

        def get(*path):
            cur = d
            for key in path:
                if not isinstance(cur, dict) or key not in cur:
                    return None
                cur = cur[key]
            return dec(cur)

        pp = d["params"]
        params = ModelParams(int(pp["n"]), int(pp["n0"]), tuple(pp["a"]), tuple(pp["a_perp"]))

        def scalar(x, default=0.0):
            return default if x is None else complex(np.asarray(x).item())

        return cls(
            params,
            T3=get("T3"), Ttilde=get("Ttilde"),
            Tmix_zbar=get("Tmix", "zbar"), Tmix_H=get("Tmix", "H"),
            muE=get("muE", "values"), dmuE=get("muE", "normal_derivatives"),
            dlogh_normal=get("dlogh", "normal"), dlogh_horizontal=get("dlogh", "horizontal"),
            d2logh_normal=get("d2logh", "normal"),
            laplacian_logh=scalar(get("d2logh", "horizontal_laplacian")),
            RTB=get("RTB"), REB_normal=get("REB", "normal"),
            REG_trace=scalar(get("REB", "REG_trace")),
            Gdot=get("Gdot"), rXG=scalar(get("rXG")).real, dTtilde=get("dTtilde"),
            check_consistency=check_consistency,
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, text: str, check_consistency: bool = True) -> "PointGeometry":
        return cls.from_dict(json.loads(text), check_consistency)


def random_geometry(params: ModelParams, rng: np.random.Generator, scale: float = 1.0,
                    realizable: bool = True, with_mu: bool = True,
                    abelian: bool = False) -> PointGeometry:
    """Random data with all declared symmetries.

    With ``realizable`` the consistency relations are imposed (dlogh from T3,
    the traces of Gdot from d2logh).  ``abelian`` sets Ttilde = 0, as for a
    torus action.  mu^E is drawn imaginary so O_1 and O_2 are formally
    self-adjoint.
    """
    nh, n0 = params.nh, params.n0

    def sym3(a):
        return sum(a.transpose(p) for p in ((0, 1, 2), (0, 2, 1), (1, 0, 2),
                                            (1, 2, 0), (2, 0, 1), (2, 1, 0))) / 6.0

    g = lambda *s: rng.normal(size=s) * scale
    T3 = sym3(g(n0, n0, n0))
    Tt = g(n0, n0, n0)
    Tt = 0.0 * Tt if abelian else 0.5 * (Tt - Tt.transpose(1, 0, 2))
    Zb = g(nh, n0, n0) + 1j * g(nh, n0, n0)
    Zb = 0.5 * (Zb + Zb.transpose(0, 2, 1))
    H = g(nh, nh, n0) + 1j * g(nh, nh, n0)
    H = 0.5 * (H - np.conj(H.transpose(1, 0, 2)))
    mu = 1j * g(n0) if with_mu else np.zeros(n0)
    dmu = 1j * g(n0, n0) if with_mu else np.zeros((n0, n0))
    D2 = g(n0, n0)
    D2 = 0.5 * (D2 + D2.T)
    R = g(n0, n0, n0, n0)
    R = R - R.transpose(1, 0, 2, 3)
    R = R - R.transpose(0, 1, 3, 2)
    R = 0.5 * (R + R.transpose(2, 3, 0, 1))
    E = 1j * g(n0, n0)
    E = 0.5 * (E - E.T)
    Gd = g(n0, n0, n0, n0)
    Gd = 0.5 * (Gd + Gd.transpose(0, 1, 3, 2))
    dT = g(n0, n0, n0, n0)
    dT = 0.5 * (dT - dT.transpose(0, 2, 1, 3))
    dlogh = g(n0)
    if realizable and n0:
        dlogh = TORSION_TRACE_SIGN * 0.5 * np.einsum("llm->m", T3)
        # impose both trace identities: Gdot[k,k,l,l] and Gdot[k,l,l,k] equal 4 tr d2logh
        target = 4.0 * np.trace(D2)
        s1 = target - np.einsum("kkll->", Gd)
        s2 = target - np.einsum("kllk->", Gd)
        if n0 == 1:
            Gd[0, 0, 0, 0] += s1
        else:
            # a kkll-type pattern and a klkl/kllk-type pattern, solved jointly
            A = np.zeros_like(Gd)
            B = np.zeros_like(Gd)
            for k in range(n0):
                for l in range(n0):
                    if k != l:
                        A[k, k, l, l] = 1.0
                        B[k, l, l, k] = B[k, l, k, l] = 1.0
            M = np.array([[np.einsum("kkll->", A), np.einsum("kkll->", B)],
                          [np.einsum("kllk->", A), np.einsum("kllk->", B)]])
            x, y = np.linalg.solve(M, [s1, s2])
            Gd = Gd + x * A + y * B
    horiz = 1.0 if nh else 0.0
    return PointGeometry(
        params, T3=T3, Ttilde=Tt, Tmix_zbar=Zb, Tmix_H=H, muE=mu, dmuE=dmu,
        dlogh_normal=dlogh, dlogh_horizontal=g(nh) + 1j * g(nh), d2logh_normal=D2,
        laplacian_logh=horiz * float(g(1)[0]), RTB=R, REB_normal=E,
        REG_trace=horiz * float(g(1)[0]), Gdot=Gd, rXG=horiz * float(g(1)[0]), dTtilde=dT, check_consistency=realizable,
    )


# --------------------------------------------------------------------------
# operator builders

def _require_kahler(params: ModelParams):
    if not params.kahler_standard:
        raise ValueError("geometric builders need the Kahler-standard parameters a = a_perp = 2 pi")


class _Letters:
    def __init__(self, params):
        self.p = params
        L = LadderPolynomial
        self.b = [L.letter(params, "b", i) for i in range(params.nh)]
        self.bp = [L.letter(params, "bp", i) for i in range(params.nh)]
        self.z = [L.letter(params, "z", i) for i in range(params.nh)]
        self.zb = [L.letter(params, "zb", i) for i in range(params.nh)]
        self.bn = [L.letter(params, "bn", j) for j in range(params.n0)]
        self.bnp = [L.letter(params, "bnp", j) for j in range(params.n0)]
        self.Z = [L.letter(params, "Z", j) for j in range(params.n0)]
        self.zero = L.zero(params)
        self.one = L.const(params, 1.0)

    def dZ(self, j):
        """d/dZ_j = (bperp^+ - bperp) / 2."""
        return 0.5 * (self.bnp[j] - self.bn[j])


def _B2(L: _Letters, j, k):
    bn, bnp = L.bn, L.bnp
    out = bnp[j] * bnp[k] + bn[k] * bnp[j] + bn[j] * bnp[k] + bn[j] * bn[k]
    if j == k:
        out = out + 4.0 * pi
    return out


def _B3(L: _Letters, i, j, k):
    bn, bnp = L.bn, L.bnp
    return (bn[i] * bn[j] * bn[k] + 3.0 * (bn[i] * bn[j] * bnp[k])
            + 3.0 * (bn[i] * bnp[j] * bnp[k]) + bnp[i] * bnp[j] * bnp[k])


def _nz(x, tol=0.0):
    return abs(x) > tol


def build_O1(geom: PointGeometry) -> LadderPolynomial:
    """First-order perturbation operator in creation/annihilation form."""
    p = geom.params
    _require_kahler(p)
    L = _Letters(p)
    nh, n0 = p.nh, p.n0
    Zb, Zh, H = geom.Tmix_zbar, geom.Tmix_z, geom.Tmix_H
    out = L.zero
    I = 1j
    cache_B2 = {}

    def B2(j, k):
        key = (min(j, k), max(j, k))
        if key not in cache_B2:
            cache_B2[key] = _B2(L, j, k)
        return cache_B2[key]

    for i in range(nh):
        for j in range(n0):
            for k in range(n0):
                if _nz(Zh[i, j, k]):
                    out = out + (-I / (8 * pi) * Zh[i, j, k]) * (B2(j, k) * L.bp[i])
                if _nz(Zb[i, j, k]):
                    out = out + (I / (8 * pi) * Zb[i, j, k]) * (L.b[i] * B2(j, k))
    # (i/4) T_ij(R^0) (bperp^+_i bperp^+_j - bperp_i bperp_j), R^0 = z_l d/dz_l + zbar_l d/dzbar_l
    for i in range(n0):
        for j in range(n0):
            mult = L.zero
            for l in range(nh):
                if _nz(Zh[l, i, j]):
                    mult = mult + Zh[l, i, j] * L.z[l]
                if _nz(Zb[l, i, j]):
                    mult = mult + Zb[l, i, j] * L.zb[l]
            if not mult.is_zero():
                out = out + (I / 4) * (mult * (L.bnp[i] * L.bnp[j] - L.bn[i] * L.bn[j]))
    for j in range(n0):
        if _nz(geom.muE[j]):
            out = out + (I * geom.muE[j]) * (L.bnp[j] + L.bn[j])
    for i in range(nh):
        for j in range(nh):
            for k in range(n0):
                if not _nz(H[i, j, k]):
                    continue
                inner = 2.0 * (L.b[j] * L.bp[i])
                if i == j:
                    inner = inner + 4 * pi
                out = out + (-I / (4 * pi) * H[i, j, k]) * ((L.bnp[k] + L.bn[k]) * inner)
    Tt = geom.Ttilde
    for i in range(n0):
        for j in range(n0):
            for k in range(n0):
                if _nz(Tt[i, j, k]):
                    out = out + (-I / (8 * pi) * Tt[i, j, k]) * (
                        (L.bn[j] * L.bnp[k] + L.bn[j] * L.bn[k]) * L.bnp[i])
    T3 = geom.T3
    for i in range(n0):
        for j in range(n0):
            for k in range(n0):
                if _nz(T3[i, j, k]):
                    term = _B3(L, i, j, k)
                    if i == k:
                        term = term + 12 * pi * (L.bnp[j] + L.bn[j])
                    out = out + (T3[i, j, k] / (16 * pi)) * term
    return out


def O1_fully_normal_direct(geom: PointGeometry) -> LadderPolynomial:
    """O_1 for n = n0 written with coordinates and derivatives.

    2 pi i Ttilde_jik Z_j Z_k d_i + 4 pi^2 T3_ijk Z_i Z_j Z_k + 4 pi i mu_k Z_k;
    used to cross-check :func:`build_O1`.
    """
    p = geom.params
    if p.nh:
        raise ValueError("direct form only for n = n0")
    L = _Letters(p)
    out = L.zero
    n0 = p.n0
    for i in range(n0):
        for j in range(n0):
            for k in range(n0):
                if _nz(geom.Ttilde[j, i, k]):
                    out = out + (2j * pi * geom.Ttilde[j, i, k]) * (L.Z[j] * L.Z[k] * L.dZ(i))
                if _nz(geom.T3[i, j, k]):
                    out = out + (4 * pi ** 2 * geom.T3[i, j, k]) * (L.Z[i] * L.Z[j] * L.Z[k])
        if _nz(geom.muE[i]):
            out = out + (4j * pi * geom.muE[i]) * L.Z[i]
    return out


def build_O2_fully_normal(geom: PointGeometry) -> LadderPolynomial:
    """Second-order perturbation operator for a reduction to a point (n = n0)."""
    p = geom.params
    if p.nh:
        raise ValueError("build_O2_fully_normal requires n = n0 (no horizontal directions)")
    _require_kahler(p)
    L = _Letters(p)
    n0 = p.n0
    Z = L.Z
    T3, Tt, R = geom.T3, geom.Ttilde, geom.RTB
    dT = geom.dTtilde
    out = L.zero

    def poly3(coef):
        """sum coef[a,b,c] Z_a Z_b Z_c as a multiplier."""
        acc = L.zero
        for a in range(n0):
            for b in range(n0):
                for c in range(n0):
                    if _nz(coef[a, b, c]):
                        acc = acc + coef[a, b, c] * (Z[a] * Z[b] * Z[c])
        return acc

    def deriv_mult(poly, l):
        """d/dZ_l of a multiplier polynomial, as a commutator."""
        return L.dZ(l) * poly - poly * L.dZ(l)

    # I_1 = -B_l d_l - (1/2) d_l(B_l)
    TT = np.einsum("ijm,klm->ijkl", T3, Tt)
    for l in range(n0):
        coef = -1.25 * np.einsum("mkn->mkn", dT[:, :, l, :]) + 0.5 * TT[:, :, :, l]
        Bl = (-1j * pi) * poly3(coef)
        if Bl.is_zero():
            continue
        out = out - Bl * L.dZ(l) - 0.5 * deriv_mult(Bl, l)
    # I_2 = (1/3) R_piqj Z_p Z_q d_i d_j
    for pp in range(n0):
        for q in range(n0):
            for i in range(n0):
                for j in range(n0):
                    if _nz(R[pp, i, q, j]):
                        out = out + (R[pp, i, q, j] / 3.0) * (Z[pp] * Z[q] * L.dZ(i) * L.dZ(j))
    # [K_2 / 4, L_2^0], K_2 = (1/3) R_piqi Z_p Z_q
    K2 = L.zero
    for pp in range(n0):
        for q in range(n0):
            c = np.einsum("ii->", R[pp, :, q, :]) / 3.0
            if _nz(c):
                K2 = K2 + c * (Z[pp] * Z[q])
    if not K2.is_zero():
        L20 = model_operator(p)
        out = out + 0.25 * (K2 * L20 - L20 * K2)
    # (2/3) R_piij Z_p d_j
    for pp in range(n0):
        for j in range(n0):
            c = np.einsum("ii->", R[pp, :, :, j]) * 2.0 / 3.0
            if _nz(c):
                out = out + c * (Z[pp] * L.dZ(j))
    # -R^{E_B}(Z, e_i) d_i
    for pp in range(n0):
        for i in range(n0):
            if _nz(geom.REB_normal[pp, i]):
                out = out - geom.REB_normal[pp, i] * (Z[pp] * L.dZ(i))
    # -(1/9) sum_i [..]^2 = pi^2 sum_i (Ttilde_jik Z_j Z_k)^2
    for i in range(n0):
        quad = L.zero
        for j in range(n0):
            for k in range(n0):
                if _nz(Tt[j, i, k]):
                    quad = quad + Tt[j, i, k] * (Z[j] * Z[k])
        if not quad.is_zero():
            out = out + pi ** 2 * (quad * quad)
    # (1/h) Laplacian h
    lap_h = np.trace(geom.d2logh_normal) + float(np.dot(geom.dlogh_normal, geom.dlogh_normal))
    out = out + lap_h
    # 4 pi^2 O''_2
    Opp = L.zero
    for a in range(n0):
        for b in range(n0):
            for c in range(n0):
                for d in range(n0):
                    if _nz(geom.Gdot[a, b, c, d]):
                        Opp = Opp + (-geom.Gdot[a, b, c, d] / 3.0) * (Z[a] * Z[b] * Z[c] * Z[d])
    for l in range(n0):
        quad = L.zero
        for i in range(n0):
            for m in range(n0):
                if _nz(Tt[i, l, m]):
                    quad = quad + Tt[i, l, m] * (Z[i] * Z[m])
        if not quad.is_zero():
            Opp = Opp - (1.0 / 12.0) * (quad * quad)
    for m in range(n0):
        quad = L.zero
        for i in range(n0):
            for j in range(n0):
                if _nz(T3[i, j, m]):
                    quad = quad + T3[i, j, m] * (Z[i] * Z[j])
        if not quad.is_zero():
            Opp = Opp + (7.0 / 12.0) * (quad * quad)
    out = out + 4 * pi ** 2 * Opp
    # moment-map terms; products are bilinear in mu
    mu, dmu = geom.muE, geom.dmuE
    inner = L.zero
    for i in range(n0):
        for j in range(n0):
            c = -0.5 * np.dot(T3[i, j, :], mu) - dmu[i, j]
            if _nz(c):
                inner = inner + c * (Z[i] * Z[j])
    out = out + (-4j * pi) * inner
    out = out - complex(np.dot(mu, mu))
    return out


# --------------------------------------------------------------------------
# resolvent engine

def _check_same_params(*ops):
    ps = {op.params for op in ops}
    if len(ps) != 1:
        raise ValueError("operators built for different parameters")
    return ps.pop()


def _first_order_parts(O1: LadderPolynomial):
    p = O1.params
    P = KernelPolynomial.identity(p)
    O1P = apply_to_kernel(O1, P)
    leak = project_and_resolve(O1P, "project")
    scale = max([abs(c) for c in O1P.q.values()] + [1.0])
    if any(abs(c) > 1e-10 * scale for c in leak.q.values()):
        raise ValueError("P^N O_1 P^N does not vanish; the reduced formulas do not apply")
    X = project_and_resolve(O1P, "resolve", 1)
    return P, X


def expansion_coefficient(r: int, O1: LadderPolynomial,
                          O2: Optional[LadderPolynomial] = None) -> KernelPolynomial:
    """P^(1) (r = 1) or P^(2) (r = 2) as a kernel polynomial."""
    if r not in (1, 2):
        raise ValueError("r must be 1 or 2")
    p = _check_same_params(O1) if O2 is None else _check_same_params(O1, O2)
    P, X = _first_order_parts(O1)
    Xs = X.adjoint()
    if r == 1:
        return -(X + Xs)
    if O2 is None:
        O2 = LadderPolynomial.zero(p)
    Y = project_and_resolve(apply_to_kernel(O1, X), "resolve", 1)
    W = project_and_resolve(apply_to_kernel(O2, P), "resolve", 1)
    out = Y + Y.adjoint() - W - W.adjoint()
    out = out + compose(X, Xs) - compose(Xs, X)
    return out


def phi1_numeric(O1: LadderPolynomial, O2: LadderPolynomial) -> complex:
    return gaussian_moment_integrate(expansion_coefficient(2, O1, O2), "diagonal_normal")


def p2_zero_engine(O1: LadderPolynomial, O2: LadderPolynomial) -> complex:
    p = O1.params
    origin = np.zeros(2 * p.nh + p.n0)
    return eval_kernel(expansion_coefficient(2, O1, O2), origin, origin)


# --------------------------------------------------------------------------
# closed forms

def phi_coefficients_closed(geom: PointGeometry):
    """(Phi_1, P^(2)(0,0)) from the closed formulas.

    Term readings for the horizontal pieces: |T(d/dz_i, d/dzbar_j)|^2 sums
    |H_ijk|^2 over all indices; the derivative of log h along
    J T(d/dz_j, d/dzbar_l) is taken on the trace j = l; R^{E_G}(d/dz, d/dzbar)
    is half of the unitary-frame trace.
    """
    p = geom.params
    n0 = p.n0
    H = geom.Tmix_H
    mu = geom.muE
    phi1 = geom.rXG / (8 * pi) + 3.0 / (4 * pi) * geom.laplacian_logh + geom.REG_trace / (2 * pi)

    trH = np.einsum("jjk->k", H) if p.nh else np.zeros(n0, dtype=complex)
    Tt = geom.Ttilde
    terms = [
        geom.rXG / (8 * pi),
        0.5 * geom.REG_trace / pi,
        geom.laplacian_logh / pi,
        -3.0 / (8 * pi) * np.trace(geom.d2logh_normal),
        -2j / pi * np.dot(trH, geom.dlogh_normal),
        -3.0 / pi * np.sum(np.abs(geom.dlogh_horizontal) ** 2),
        -5.0 / (4 * pi) * np.sum(geom.dlogh_normal ** 2),
        1.0 / (2 * pi) * np.sum(np.abs(geom.Tmix_zbar) ** 2),
        -1.0 / (2 * pi) * np.sum(np.abs(trH) ** 2),
        1.0 / (2 * pi) * np.sum(np.abs(H) ** 2),
        1.0 / (24 * pi) * np.sum(geom.T3 ** 2),
        1.0 / (64 * pi) * np.einsum("ijk,ijk->", Tt, 3.0 * Tt.transpose(2, 1, 0) - Tt),
        1.0 / (2 * pi) * np.dot(mu, mu),
        -1.0 / pi * np.dot(mu, trH),
        1.5j / pi * np.dot(mu, geom.dlogh_normal),
        0.25j / pi * np.trace(geom.dmuE),
    ]
    p2 = 2.0 ** (n0 / 2.0) * complex(sum(terms))
    return complex(phi1), p2


# --------------------------------------------------------------------------
# bundled result

@dataclass(frozen=True)
class CoefficientResult:
    P1: KernelPolynomial
    P2: KernelPolynomial
    phi1_numeric: complex
    phi1_closed: complex
    p2_zero_engine: complex
    p2_zero_closed: complex


def compute_coefficients(geom: PointGeometry) -> CoefficientResult:
    """Engine and closed-form coefficients for a reduction to a point."""
    O1 = build_O1(geom)
    O2 = build_O2_fully_normal(geom)
    P1 = expansion_coefficient(1, O1)
    P2 = expansion_coefficient(2, O1, O2)
    origin = np.zeros(geom.params.n0)
    phi1_c, p2_c = phi_coefficients_closed(geom)
    return CoefficientResult(
        P1=P1, P2=P2,
        phi1_numeric=gaussian_moment_integrate(P2, "diagonal_normal"),
        phi1_closed=phi1_c,
        p2_zero_engine=eval_kernel(P2, origin, origin),
        p2_zero_closed=p2_c,
    )


def brute_force_coefficient(r: int, O1: LadderPolynomial, O2: Optional[LadderPolynomial],
                            N: int = 30, points=None):
    """Independent matrix oracle for P^(r); see :mod:`bergman_lab._fock`.

    Returns the :class:`~bergman_lab._fock.DenseKernel`, or its values at
    ``points`` (a sequence of (Z, Z') pairs) when given.
    """
    from ._fock import FockOracle

    p = O1.params
    if O2 is None:
        O2 = LadderPolynomial.zero(p)
    oracle = FockOracle(p, N, max(O1.degree(), O2.degree(), 1))
    kern = oracle.coefficient(r, O1, O2)
    if points is None:
        return kern
    return np.array([kern(Z, Zp) for Z, Zp in points])
