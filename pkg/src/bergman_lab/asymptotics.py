"""Asymptotic statements from exact kernel values.

Least-squares extrapolation in half-integer powers of 1/p, Gaussian decay
fits across the zero level, localization ratios, normal-slice integrals and
dimension counts.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np
from numpy.polynomial.legendre import leggauss

from .projective import (
    S_MAX,
    SectionSpace,
    arclength_to_radius,
    bergman_kernel,
    make_section_space,
    normal_point,
    orbit_geometry,
)

__all__ = [
    "DEFAULT_EXPONENTS",
    "ExpansionFit",
    "RankDeficientError",
    "richardson_extrapolate",
    "DecayFit",
    "decay_fit",
    "fit_gaussian_rate",
    "localization_scan",
    "invariant_dimension_report",
    "normal_slice_integral",
    "scaled_diagonal",
    "cp1_scaled_diagonal_exact",
    "singular_weight_scaling",
]

DEFAULT_EXPONENTS = (0.0, 0.5, 1.0, 1.5, 2.0)


class RankDeficientError(ValueError):
    pass


@dataclass(frozen=True)
class ExpansionFit:
    exponents: tuple
    coefficients: tuple
    residual: float
    p_grid: tuple
    condition: float

    def coefficient(self, e: float) -> float:
        return self.coefficients[self.exponents.index(float(e))]

    def to_dict(self) -> dict:
        return {"exponents": list(self.exponents), "coefficients": list(self.coefficients),
                "residual": self.residual, "p_grid": list(self.p_grid),
                "condition": self.condition}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def richardson_extrapolate(samples, exponents: Sequence[float] = DEFAULT_EXPONENTS) -> ExpansionFit:
    """Fit value(p) = sum_e c_e p^(-e) by least squares (QR on a column-scaled design)."""
    exponents = tuple(float(e) for e in exponents)
    samples = sorted((float(p), float(np.real(v))) for p, v in samples)
    ps = np.array([p for p, _ in samples])
    vals = np.array([v for _, v in samples])
    if len(ps) < len(exponents):
        raise ValueError(f"need at least {len(exponents)} samples, got {len(ps)}")
    if len(np.unique(ps)) != len(ps):
        raise ValueError("p values must be distinct")
    A = ps[:, None] ** (-np.array(exponents))[None, :]
    scale = np.linalg.norm(A, axis=0)
    As = A / scale
    Qm, R = np.linalg.qr(As)
    sv = np.linalg.svd(R, compute_uv=False)
    cond = float(sv[0] / sv[-1]) if sv[-1] > 0 else math.inf
    if not np.isfinite(cond) or cond > 1e13:
        raise RankDeficientError(f"design matrix is rank deficient (condition {cond:.3g})")
    coef = np.linalg.solve(R, Qm.T @ vals) / scale
    fitted = A @ coef
    denom = np.maximum(np.abs(vals), np.finfo(float).tiny)
    residual = float(np.max(np.abs(fitted - vals) / denom))
    return ExpansionFit(exponents, tuple(float(c) for c in coef), residual,
                        tuple(int(p) if p.is_integer() else p for p in ps), cond)


# --------------------------------------------------------------------------
# exact sequences

def scaled_diagonal(space: SectionSpace, base=None) -> float:
    """p^{-(n - n0/2)} h^2 P^G_p(x0, x0) at a point of the zero level."""
    x0 = space.level_point if base is None else base
    geo = orbit_geometry(space.model, x0)
    val = bergman_kernel(space, "invariant", x0).real
    return geo.h2 * val / space.p ** ((space.n - space.n0) + 0.5 * space.n0)


def cp1_scaled_diagonal_exact(p: int) -> float:
    """p^{-1/2} h^2 P^G_p(1, 1) for CP^1 from the factorial formula alone."""
    # (2p + 1)! / p!^2 = (2p + 1) C(2p, p); the integer ratio is rounded once
    ratio = (2 * p + 1) * math.comb(2 * p, p) / (1 << (2 * p + 2))
    return math.sqrt(8.0 * math.pi / p) * ratio


def singular_weight_scaling(p: int) -> dict:
    """Both scalings at the fixed point z = 0 (weight -p) and on the level |z| = 1."""
    space = make_section_space("CP1_O2", p)
    singular = bergman_kernel(space, -p, 0.0).real
    return {"p": p,
            "singular_p^-1": singular / p,
            "singular_p^-1/2": singular / math.sqrt(p),
            "regular_p^-1/2": scaled_diagonal(space),
            "regular_p^-1": scaled_diagonal(space) / math.sqrt(p)}


# --------------------------------------------------------------------------
# decay across the zero level

@dataclass(frozen=True)
class DecayFit:
    rate: float
    residual: float
    n_samples: int


def fit_gaussian_rate(p: float, quad, values) -> DecayFit:
    """Least-squares rate in -log(v / v0) = rate * p * quad (no intercept)."""
    values = np.asarray(values, dtype=float)
    quad = np.asarray(quad, dtype=float)
    if np.any(values <= 0):
        raise ValueError("decay samples must be positive")
    y = -np.log(values)
    x = p * quad
    rate = float(np.dot(x, y) / np.dot(x, x))
    resid = float(np.max(np.abs(y - rate * x)) / max(np.max(np.abs(y)), 1e-300))
    return DecayFit(rate, resid, len(values))


def decay_fit(model: str, p: int, normal_samples=None, base=None) -> DecayFit:
    """Fitted Gaussian rate of the invariant kernel across the zero level.

    CP^1: the diagonal h^2 P^G_p at arclength s, rate from -log ratio = rate p s^2.
    CP^2: the off-diagonal |P^G_p(s, s')| h(s) h(s') on an (s, s') grid along
    the normal ray, rate from -log ratio = rate p (s^2 + s'^2) / 2.
    """
    if normal_samples is None:
        normal_samples = np.linspace(-0.15, 0.15, 31)
    s = np.asarray(normal_samples, dtype=float)
    s = s[s != 0.0]
    if np.max(np.abs(s)) > 0.15 + 1e-12:
        raise ValueError("normal samples must satisfy |s| <= 0.15")
    space = make_section_space(model, p)

    def h(si):
        return math.sqrt(orbit_geometry(model, normal_point(space, si, base)).h2)

    if model == "CP1_O2":
        v0 = h(0.0) ** 2 * bergman_kernel(space, "invariant", normal_point(space, 0.0, base)).real
        vals = [h(si) ** 2 * bergman_kernel(space, "invariant", normal_point(space, si, base)).real / v0
                for si in s]
        return fit_gaussian_rate(p, s ** 2, vals)
    x0 = normal_point(space, 0.0, base)
    v0 = h(0.0) ** 2 * abs(bergman_kernel(space, "invariant", x0, x0))
    grid = np.concatenate([[0.0], s])
    quad, vals = [], []
    for a in grid:
        for b in grid:
            if a == 0.0 and b == 0.0:
                continue
            k = bergman_kernel(space, "invariant", normal_point(space, a, base),
                               normal_point(space, b, base))
            vals.append(h(a) * h(b) * abs(k) / v0)
            quad.append(0.5 * (a * a + b * b))
    return fit_gaussian_rate(p, quad, vals)


# --------------------------------------------------------------------------
# localization

def localization_scan(model: str, p: int, radii, n_angles: int = 8) -> list:
    """Max diagonal invariant-kernel value on |w| = r, and its ratio to the level value."""
    space = make_section_space(model, p)
    on_level = bergman_kernel(space, "invariant", space.level_point).real
    rows = []
    for r in radii:
        best = 0.0
        for m in range(n_angles):
            phi = 2.0 * math.pi * m / n_angles
            if space.n == 1:
                w = np.array([r * np.exp(1j * phi)])
            else:
                c = math.cos(0.5 * math.pi * (m + 0.5) / n_angles)
                w = r * np.array([c, math.sqrt(1.0 - c * c) * np.exp(1j * phi)])
            best = max(best, bergman_kernel(space, "invariant", w).real)
        rows.append({"radius": float(r), "value": best, "ratio": best / on_level})
    return rows


# --------------------------------------------------------------------------
# dimensions

@dataclass(frozen=True)
class DimensionReport:
    model: str
    rows: tuple          # (p, exact dimension, leading-order prediction)
    slope: float
    intercept: float

    def to_dict(self) -> dict:
        return asdict(self)


def invariant_dimension_report(model: str, p_values) -> DimensionReport:
    """Exact invariant dimensions against p^{n-n0} vol(X_G), vol(X_G) = 1 for both models."""
    rows = []
    for p in p_values:
        space = make_section_space(model, int(p))
        deg = space.n - space.n0
        rows.append((int(p), space.invariant_dimension, float(p) ** deg))
    ps = np.array([r[0] for r in rows], dtype=float)
    dims = np.array([r[1] for r in rows], dtype=float)
    if len(ps) >= 2:
        slope, intercept = np.polyfit(ps, dims, 1)
    else:
        slope, intercept = 0.0, float(dims[0])
    return DimensionReport(model, tuple(rows), float(slope), float(intercept))


# --------------------------------------------------------------------------
# normal-slice integral

def normal_slice_integral(model: str, p: int, eps: float, nodes: int = 200, base=None,
                          with_tail: bool = False, kernel=None):
    """Integral over |s| <= eps of h^2 P^G_p kappa along the normal ray, over p^{n-n0}.

    ``kernel`` may replace the invariant diagonal kernel by any function of
    the chart point (used for testing).  With ``with_tail`` a Gaussian tail
    bound beyond eps, using the model rate 2 pi, is also returned.
    """
    if not 0.0 < eps < S_MAX:
        raise ValueError(f"eps must lie in (0, {S_MAX:.4f}) to stay inside the chart")
    space = make_section_space(model, p)
    if kernel is None:
        def kernel(w):
            return bergman_kernel(space, "invariant", w).real
    x, w = leggauss(nodes)
    s = eps * x
    total = []
    for si, wi in zip(s, w):
        pt = normal_point(space, si, base)
        geo = orbit_geometry(model, pt)
        total.append(wi * geo.h2 * kernel(pt) * geo.kappa)
    val = eps * math.fsum(total) / p ** (space.n - space.n0)
    if not np.isfinite(val):
        raise ValueError("normal-slice quadrature failed")
    if not with_tail:
        return val
    rate = 2.0 * math.pi
    tail = math.erfc(math.sqrt(rate * p) * eps)
    return val, tail
