"""Holomorphic sections of O(2p) on CP^1 and CP^2 with a circle action.

Both models carry the metric 2 omega_FS, the line bundle L = O(2) with
|frame|^2 = (1 + |w|^2)^(-2) in the affine chart, and a circle acting on the
homogeneous coordinate z0.  The lift is chosen so that the invariant sections
are the monomials with z0-exponent p, and the zero level of the moment map is
{|w| = 1} in the chart.

* ``CP1_O2``: chart z = z0/z1, sections z^j (0 <= j <= 2p), weight j - p.
* ``CP2_O2_level_half``: chart w = (z1/z0, z2/z0), sections w1^a w2^b with
  a + b <= 2p, weight p - a - b.

In both cases the weight is the z0-exponent minus p, so weight -p on CP^1 is
the line spanned by the constant section, peaked at the fixed point z = 0.  The quotient is CP^1 with its
  Fubini-Study metric of volume 1.

Kernel values are reported in unitary frames, i.e. as densities against the
Riemannian volume on the diagonal.  Factorial ratios are handled as
log-binomials, so levels in the thousands are fine.
"""
from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass
from functools import cached_property, lru_cache
from typing import Union

import numpy as np
from numpy.polynomial.legendre import leggauss

from .coefficients import PointGeometry
from .model import ModelParams

__all__ = [
    "MODELS",
    "SectionSpace",
    "OrbitGeometry",
    "EmptySelectorError",
    "QuadratureWarning",
    "make_section_space",
    "bergman_kernel",
    "group_average_kernel",
    "orbit_geometry",
    "normal_point",
    "arclength_to_radius",
    "radius_to_arclength",
    "quadrature_gram",
    "kernel_trace",
    "level_gram",
    "cp1_point_geometry",
    "S_MAX",
]

MODELS = ("CP1_O2", "CP2_O2_level_half")

# arclength from |w| = 1 to w = 0 (or infinity) along a radial ray
S_MAX = math.sqrt(math.pi / 8.0)

Selector = Union[str, int]


class EmptySelectorError(ValueError):
    """The requested weight space has no sections."""


class QuadratureWarning(UserWarning):
    pass


def _gl01(order: int):
    x, w = leggauss(order)
    return 0.5 * (x + 1.0), 0.5 * w


@dataclass(frozen=True, eq=False)
class SectionSpace:
    """Monomial basis of H^0(CP^n, O(2p)) with exact norms and circle weights.

    ``basis`` holds homogeneous exponents (alpha_0, ..., alpha_n), ``chart``
    the exponents of the chart monomial, ``log_norms`` the log of the squared
    L^2 norms against omega^n / n!.
    """

    model: str
    p: int
    n: int
    k: int
    weight_vector: tuple
    weight_shift: int
    basis: np.ndarray
    chart: np.ndarray
    log_norms: np.ndarray
    weights: np.ndarray

    @property
    def n0(self) -> int:
        return 1

    @property
    def dimension(self) -> int:
        return len(self.basis)

    @property
    def norms(self) -> np.ndarray:
        return np.exp(self.log_norms)

    def indices(self, selector: Selector = "full") -> np.ndarray:
        if selector == "full":
            idx = np.arange(self.dimension)
        elif selector == "invariant":
            idx = np.flatnonzero(self.weights == 0)
        elif isinstance(selector, (int, np.integer)) and not isinstance(selector, bool):
            idx = np.flatnonzero(self.weights == int(selector))
        else:
            raise ValueError(f"unknown selector {selector!r}")
        if idx.size == 0:
            raise EmptySelectorError(f"no sections of weight {selector!r} at p={self.p}")
        return idx

    @property
    def invariant_dimension(self) -> int:
        return int(np.count_nonzero(self.weights == 0))

    def weight_histogram(self) -> dict:
        vals, counts = np.unique(self.weights, return_counts=True)
        return {int(v): int(c) for v, c in zip(vals, counts)}

    def metadata(self) -> dict:
        return {
            "model": self.model,
            "p": self.p,
            "dimension": self.dimension,
            "invariant_dimension": self.invariant_dimension,
            "weight_histogram": {str(k): v for k, v in self.weight_histogram().items()},
        }

    def to_json(self) -> str:
        return json.dumps(self.metadata(), sort_keys=True)

    # ---- circle action in the chart
    def act_inverse(self, t: float, w: np.ndarray) -> np.ndarray:
        """Chart coordinates of g^{-1} x for g = exp(2 pi i t)."""
        if self.model == "CP1_O2":
            return np.exp(-2j * np.pi * t) * w
        return np.exp(2j * np.pi * t) * w

    @property
    def frame_weight(self) -> int:
        """Phase exponent carried by the chart frame of L^p under g^{-1}.

        Together with the rotation in :meth:`act_inverse` this gives each
        monomial the character of its weight (up to an overall sign, which
        the circle average does not see).
        """
        return self.p if self.model == "CP1_O2" else -self.p

    # ---- geometry of the chart
    @cached_property
    def level_point(self) -> np.ndarray:
        """Default base point on the zero level."""
        if self.model == "CP1_O2":
            return np.array([1.0 + 0.0j])
        return np.array([1.0, 1.0], dtype=complex) / math.sqrt(2.0)


@lru_cache(maxsize=4096)
def _log_binomial_row(m: int) -> np.ndarray:
    # exact integer binomials, logged once; read from the nearer end of the row
    half = np.empty(m // 2 + 1)
    half[0] = 0.0
    c = 1
    for i in range(1, m // 2 + 1):
        c = c * (m - i + 1) // i
        half[i] = math.log(c)
    j = np.arange(m + 1)
    return half[np.minimum(j, m - j)]


def _log_binomial(m, j):
    """log C(m, j), elementwise, correctly rounded."""
    m = np.asarray(m, dtype=int)
    j = np.asarray(j, dtype=int)
    if m.ndim == 0:
        return _log_binomial_row(int(m))[j]
    out = np.empty(m.shape)
    for mm in np.unique(m):
        sel = m == mm
        out[sel] = _log_binomial_row(int(mm))[j[sel]]
    return out


def make_section_space(model: str, p: int) -> SectionSpace:
    if model not in MODELS:
        raise ValueError(f"unknown model {model!r}; choose from {MODELS}")
    if p < 0:
        raise ValueError("p must be non-negative")
    k = 2 * p
    if model == "CP1_O2":
        n = 1
        j = np.arange(k + 1)
        basis = np.stack([j, k - j], axis=1)
        chart = j[:, None]
        weight_vector, shift = (1, 0), -p
    else:
        n = 2
        rows = [(k - a - b, a, b) for a in range(k + 1) for b in range(k + 1 - a)]
        basis = np.array(rows, dtype=int)
        chart = basis[:, 1:]
        weight_vector, shift = (1, 0, 0), -p
    weights = basis @ np.array(weight_vector) + shift
    # ||z^alpha||^2 = 2^n alpha! / (k + n)!  against (2 omega_FS)^n / n!, with
    # (k + n)! / alpha! = (k + 1)...(k + n) * multinomial(k; alpha).  Log-binomials
    # are taken from exact integers.
    log_norms = n * math.log(2.0) - sum(math.log(k + i) for i in range(1, n + 1))
    log_norms = log_norms - _log_binomial(k, k - basis[:, 0])
    if n == 2:
        log_norms = log_norms - _log_binomial(k - basis[:, 0], basis[:, 1])
    return SectionSpace(model, p, n, k, weight_vector, shift, basis, chart, log_norms,
                        weights.astype(int))


# --------------------------------------------------------------------------
# kernels

def _as_point(space: SectionSpace, z) -> np.ndarray:
    w = np.atleast_1d(np.asarray(z, dtype=complex))
    if w.shape != (space.n,):
        raise ValueError(f"point must have {space.n} complex coordinate(s)")
    return w


def _log_monomials(chart: np.ndarray, w: np.ndarray):
    """log|w^alpha| and arg(w^alpha) for every chart exponent."""
    mod = np.abs(w)
    with np.errstate(divide="ignore"):
        logmod = np.log(mod)
    logmag = np.zeros(len(chart))
    for k in range(len(w)):
        e = chart[:, k]
        if np.isfinite(logmod[k]):
            logmag += e * logmod[k]
        else:
            # w_k = 0: only monomials free of w_k survive
            logmag[e > 0] = -np.inf
    phase = chart @ np.angle(w)
    return logmag, phase


def _kernel_sum(space: SectionSpace, idx, w, wp) -> complex:
    chart = space.chart[idx]
    lm1, ph1 = _log_monomials(chart, w)
    lm2, ph2 = _log_monomials(chart, wp)
    logs = lm1 + lm2 - space.log_norms[idx]
    finite = np.isfinite(logs)
    if not finite.any():
        return 0.0j
    logs, phase = logs[finite], (ph1 - ph2)[finite]
    top = logs.max()
    terms = np.exp(logs - top) * np.exp(1j * phase)
    total = complex(math.fsum(terms.real), math.fsum(terms.imag))
    log_frame = -space.p * (math.log1p(float(np.sum(np.abs(w) ** 2)))
                            + math.log1p(float(np.sum(np.abs(wp) ** 2))))
    return total * math.exp(top + log_frame)


def bergman_kernel(space: SectionSpace, selector: Selector, z, zp=None) -> complex:
    """Projection kernel onto the selected subspace, in unitary frames.

    With ``zp`` omitted the diagonal density at ``z`` is returned.
    """
    w = _as_point(space, z)
    wp = w if zp is None else _as_point(space, zp)
    return _kernel_sum(space, space.indices(selector), w, wp)


def group_average_kernel(space: SectionSpace, z, zp=None, quadrature_order: int | None = None) -> complex:
    """Average over the circle of g . P_p(g^{-1} x, x'), by the trapezoid rule."""
    need = 4 * space.p + 8
    M = need if quadrature_order is None else int(quadrature_order)
    if M < need:
        warnings.warn(f"quadrature order {M} below 4p+8 = {need}", QuadratureWarning, stacklevel=2)
    w = _as_point(space, z)
    wp = w if zp is None else _as_point(space, zp)
    idx = space.indices("full")
    acc = []
    for m in range(M):
        t = m / M
        val = _kernel_sum(space, idx, space.act_inverse(t, w), wp)
        # the frame at g^{-1} x is carried back to x with the character of its weight
        acc.append(val * np.exp(2j * np.pi * t * space.frame_weight))
    acc = np.array(acc)
    return complex(math.fsum(acc.real) / M, math.fsum(acc.imag) / M)


# --------------------------------------------------------------------------
# orbit geometry along the normal direction

@dataclass(frozen=True)
class OrbitGeometry:
    mu: float
    h2: float
    s_normal: float
    kappa: float
    dlogh: float
    d2logh: float


def radius_to_arclength(r):
    """Signed arclength from |w| = 1 along a radial ray (positive outward)."""
    return math.sqrt(2.0 / math.pi) * (np.arctan(r) - math.pi / 4.0)


def arclength_to_radius(s):
    return np.tan(math.pi / 4.0 + np.asarray(s) * math.sqrt(math.pi / 2.0))


def orbit_geometry(model: str, z) -> OrbitGeometry:
    """Moment map, orbit volume h^2, arclength, volume density and log h derivatives.

    The normal direction is the radial ray through ``z``; its metric is
    (2/pi) dr^2 / (1 + r^2)^2 in both models, so s(r) and the derivatives of
    log h agree between them.  Only kappa differs: for CP^2 the horizontal
    area of the quotient scales by 2 r^2 / (1 + r^2).
    """
    if model not in MODELS:
        raise ValueError(f"unknown model {model!r}")
    w = np.atleast_1d(np.asarray(z, dtype=complex))
    r = float(np.sqrt(np.sum(np.abs(w) ** 2)))
    if r == 0.0 or not np.isfinite(r):
        raise ValueError("h^2 vanishes at the fixed points of the action")
    if model == "CP1_O2":
        mu = 2.0 * r * r / (1.0 + r * r) - 1.0
        kappa = 1.0
    else:
        mu = (1.0 - r * r) / (1.0 + r * r)
        kappa = 2.0 * r * r / (1.0 + r * r)
    h2 = math.sqrt(8.0 * math.pi) * r / (1.0 + r * r)
    s = float(radius_to_arclength(r))
    # d/ds = sqrt(pi/2) (1 + r^2) d/dr and log h = (1/2) log h^2
    dlogh = math.sqrt(math.pi / 2.0) * (1.0 - r * r) / (2.0 * r)
    d2logh = -(math.pi / 4.0) * (1.0 + r * r) ** 2 / (r * r)
    return OrbitGeometry(mu, h2, s, kappa, dlogh, d2logh)


def normal_point(space: SectionSpace, s, base=None) -> np.ndarray:
    """Chart point at signed arclength ``s`` along the normal ray through ``base``."""
    x0 = space.level_point if base is None else _as_point(space, base)
    x0 = x0 / np.sqrt(np.sum(np.abs(x0) ** 2))
    return float(arclength_to_radius(s)) * x0


def cp1_point_geometry() -> PointGeometry:
    """Pointwise data at the reduction point of the CP^1 model.

    The torsion vanishes for a circle acting on a Riemann surface, log h is
    critical on the zero level and its second arclength derivative is -pi.
    The third-order metric contraction is fixed by its trace relation with
    the Hessian of log h.
    """
    geo = orbit_geometry("CP1_O2", 1.0)
    params = ModelParams.kahler(1, 1)
    base = PointGeometry.zero(params)
    return base.with_(d2logh_normal=np.array([[geo.d2logh]]),
                      Gdot=np.full((1, 1, 1, 1), 4.0 * geo.d2logh))


# --------------------------------------------------------------------------
# quadrature in the chart

def _radial_nodes(space: SectionSpace, order: int):
    """Radial nodes as moduli |w_k|, with weights of the volume form.

    CP^1: t = |z|^2 = u/(1-u) gives dv = 2 du (angle averaged).
    CP^2: |w|^2 = u/(1-u), |w1|^2 = x |w|^2 gives dv = 4 u du dx.
    """
    u, wu = _gl01(order)
    if space.n == 1:
        mod = np.sqrt(u / (1.0 - u))[:, None]
        return mod, 2.0 * wu, u
    x, wx = _gl01(order)
    U, X = np.meshgrid(u, x, indexing="ij")
    T = U / (1.0 - U)
    mod = np.stack([np.sqrt(T * X).ravel(), np.sqrt(T * (1.0 - X)).ravel()], axis=1)
    weight = (4.0 * U * np.outer(wu, wx)).ravel()
    return mod, weight, U.ravel()


def _radial_logs(space: SectionSpace, mod, u, ea, eb):
    """log of |w^ea| |w^eb| |frame|^2 at each radial node, for exponent pairs."""
    logmod = np.log(mod)
    s = (ea + eb)
    return (s @ logmod.T) + 2.0 * space.p * np.log1p(-u)[None, :]


def quadrature_gram(space: SectionSpace, selector: Selector = "full", order: int | None = None):
    """Gram matrix <s_a, s_b> by quadrature (angular trapezoid, radial Gauss-Legendre).

    Returns the matrix relative to the closed-form norms, i.e.
    G_ab / sqrt(|s_a|^2 |s_b|^2), which should be the identity.
    """
    idx = space.indices(selector)
    Q = order or (2 * space.p + 16)
    M = 4 * space.p + 16
    E = space.chart[idx]
    mod, weight, u = _radial_nodes(space, Q)
    theta = np.arange(M) / M * 2.0 * np.pi
    out = np.zeros((len(idx), len(idx)), dtype=complex)
    logw = np.log(weight)
    for a in range(len(idx)):
        diff = E[a][None, :] - E                       # exponent differences
        ang = np.ones(len(idx), dtype=complex)
        for k in range(space.n):
            ang *= np.exp(1j * np.outer(diff[:, k], theta)).mean(axis=1)
        logs = _radial_logs(space, mod, u, E[a][None, :], E) + logw[None, :]
        logs -= 0.5 * (space.log_norms[idx][a] + space.log_norms[idx])[:, None]
        out[a] = ang * np.exp(logs).sum(axis=1)
    return out


def kernel_trace(space: SectionSpace, selector: Selector = "invariant", method: str = "closed",
                 order: int | None = None) -> float:
    """Integral over X of the diagonal kernel of the selected subspace."""
    idx = space.indices(selector)
    if method == "closed":
        # each orthonormal section contributes exactly 1
        return float(len(idx))
    if method != "quadrature":
        raise ValueError(f"unknown method {method!r}")
    Q = order or (2 * space.p + 16)
    mod, weight, u = _radial_nodes(space, Q)
    E = space.chart[idx]
    logs = _radial_logs(space, mod, u, E, E) - space.log_norms[idx][:, None]
    dens = np.exp(logs).sum(axis=0)
    return float(math.fsum(dens * weight))


def level_gram(space: SectionSpace, method: str = "closed", order: int | None = None) -> np.ndarray:
    """<sigma s_a, sigma s_b> on the quotient for the orthonormal invariant basis.

    sigma restricts an invariant section to the zero level and descends it.
    For CP^1 the quotient is a point (counting measure); for CP^2 it is CP^1
    with volume form omega_FS, parametrised by zeta = w2/w1 on the level.
    """
    idx = space.indices("invariant")
    ln = space.log_norms[idx]
    if space.model == "CP1_O2":
        # |s_p|^2 at |z| = 1 is 4^{-p}
        return np.array([[math.exp(-2.0 * space.p * math.log(2.0) - ln[0])]])
    E = space.chart[idx]
    a, b = E[:, 0], E[:, 1]
    if method == "closed":
        # integral of |w1|^2a |w2|^2b over the level quotient = a! b! / (p+1)!
        logs = (-2.0 * space.p * math.log(2.0) - _log_binomial(space.p, a)
                - math.log(space.p + 1) - ln)
        return np.diag(np.exp(logs))
    if method != "quadrature":
        raise ValueError(f"unknown method {method!r}")
    Q = order or (space.p + 16)
    M = 2 * space.p + 16
    v, wv = _gl01(Q)
    theta = np.arange(M) / M * 2.0 * np.pi
    # |w1|^2 = 1 - v, |w2|^2 = v on the level, angle of zeta carries the phase
    out = np.zeros((len(idx), len(idx)), dtype=complex)
    for i in range(len(idx)):
        diff = b[i] - b
        ang = np.exp(1j * np.outer(diff, theta)).mean(axis=1)
        logs = (0.5 * np.outer(a[i] + a, np.log1p(-v)) + 0.5 * np.outer(b[i] + b, np.log(v))
                - 2.0 * space.p * math.log(2.0) - 0.5 * (ln[i] + ln)[:, None])
        out[i] = ang * (np.exp(logs) @ wv)
    return out
