"""Command-line experiment runner.

    bergman-lab list
    bergman-lab run --config cfg.json [--experiment NAME] [--pmax P] [--out PATH] [--seed S]
    bergman-lab selftest

Every experiment produces rows (experiment, model, p, quantity, value,
target, tolerance, verdict).  The exit status is 1 if any verdict is "fail".
Per-level work fans out over a thread pool capped by BERGMAN_LAB_THREADS.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Callable, Optional

import numpy as np

__all__ = [
    "CSV_FIELDS",
    "REGISTRY",
    "Row",
    "Report",
    "ExperimentConfig",
    "ConfigError",
    "default_config",
    "run_experiment",
    "emit_report",
    "parse_report",
    "main",
]

CSV_FIELDS = ("experiment", "model", "p", "quantity", "value", "target", "tolerance", "verdict")
THREADS_ENV = "BERGMAN_LAB_THREADS"
SQRT2 = math.sqrt(2.0)


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class Row:
    experiment: str
    model: str
    p: Optional[int]
    quantity: str
    value: float
    target: Optional[float] = None
    tolerance: Optional[float] = None
    verdict: str = "info"


@dataclass(frozen=True)
class Report:
    experiment: str
    model: str
    rows: tuple

    @property
    def passed(self) -> bool:
        return all(r.verdict != "fail" for r in self.rows)


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    model: str
    p_grid: tuple
    tolerances: dict = field(default_factory=dict)
    output_path: Optional[str] = None
    output_format: str = "csv"
    seed: int = 0
    geometry_path: Optional[str] = None

    def validate(self):
        if self.experiment not in REGISTRY:
            raise ConfigError(f"unknown experiment {self.experiment!r}")
        entry = REGISTRY[self.experiment]
        if self.model not in entry.models:
            raise ConfigError(f"experiment {self.experiment!r} does not support model {self.model!r}")
        if entry.needs_p:
            if not self.p_grid:
                raise ConfigError("p_grid must be non-empty")
            if any(b <= a for a, b in zip(self.p_grid, self.p_grid[1:])):
                raise ConfigError("p_grid must be strictly ascending")
            if any(int(p) != p or p < 1 for p in self.p_grid):
                raise ConfigError("p_grid entries must be positive integers")
        if any(not (t > 0) for t in self.tolerances.values()):
            raise ConfigError("tolerances must be positive")
        if self.output_format not in ("csv", "json"):
            raise ConfigError("output format must be csv or json")
        return self


# --------------------------------------------------------------------------
# helpers

def _threads() -> int:
    raw = os.environ.get(THREADS_ENV)
    if raw:
        try:
            return max(1, int(raw))
        except ValueError:
            raise ConfigError(f"{THREADS_ENV} must be an integer") from None
    return min(4, os.cpu_count() or 1)


def _map(fn, items):
    """Ordered parallel map."""
    items = list(items)
    workers = min(_threads(), max(1, len(items)))
    if workers == 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def _check(exp, model, p, quantity, value, target, tol, relative=False) -> Row:
    value = float(value)
    err = abs(value - target)
    if relative:
        err /= abs(target)
    ok = np.isfinite(value) and err <= tol
    return Row(exp, model, p, quantity, value, float(target), float(tol), "pass" if ok else "fail")


def _bound(exp, model, p, quantity, value, bound) -> Row:
    """Pass iff value < bound; the bound goes in the target column."""
    value = float(value)
    return Row(exp, model, p, quantity, value, float(bound), None,
               "pass" if value < bound else "fail")


def _info(exp, model, p, quantity, value) -> Row:
    return Row(exp, model, p, quantity, float(value))


# --------------------------------------------------------------------------
# experiments

def _exp_expand_diagonal(cfg: ExperimentConfig):
    from .asymptotics import richardson_extrapolate, scaled_diagonal, singular_weight_scaling
    from .projective import make_section_space
    E, m, tol = cfg.experiment, cfg.model, cfg.tolerances
    vals = _map(lambda p: scaled_diagonal(make_section_space(m, p)), cfg.p_grid)
    rows = [_info(E, m, p, "scaled_diagonal", v) for p, v in zip(cfg.p_grid, vals)]
    fit = richardson_extrapolate(list(zip(cfg.p_grid, vals)))
    rows.append(_check(E, m, None, "c0", fit.coefficient(0), SQRT2, tol["c0"]))
    if m == "CP1_O2":
        rows.append(_check(E, m, None, "c1/2", fit.coefficient(0.5), 0.0, tol["c_half"]))
        rows.append(_check(E, m, None, "c1", fit.coefficient(1), 3 * SQRT2 / 8, tol["c1"]))
        for p in cfg.p_grid:
            sc = singular_weight_scaling(p)
            rows.append(_check(E, m, p, "singular_p^-1", sc["singular_p^-1"], 1 + 0.5 / p,
                               tol["singular"], relative=True))
            rows.append(_info(E, m, p, "singular_p^-1/2", sc["singular_p^-1/2"]))
            rows.append(_info(E, m, p, "regular_p^-1/2", sc["regular_p^-1/2"]))
    else:
        # the levels stop well short of the CP^1 grid, so the subleading fit is informational
        rows.append(_info(E, m, None, "c1/2", fit.coefficient(0.5)))
        rows.append(_info(E, m, None, "c1", fit.coefficient(1)))
        # three points of the quotient, |w1| = cos(theta), on the level |w| = 1
        for p in cfg.p_grid:
            space = make_section_space(m, p)
            for theta in (0.3, 0.8, 1.2):
                x0 = np.array([math.cos(theta), math.sin(theta) * np.exp(0.7j)])
                rows.append(_check(E, m, p, f"scaled_diagonal_theta{theta!r}",
                                   scaled_diagonal(space, x0), SQRT2, tol["level_points"],
                                   relative=True))
    rows.append(_info(E, m, None, "fit_residual", fit.residual))
    return rows


def _exp_offdiag_decay(cfg):
    from .asymptotics import decay_fit
    E, m = cfg.experiment, cfg.model
    tol = cfg.tolerances["rate"]
    fits = _map(lambda p: decay_fit(m, p), cfg.p_grid)
    return [_check(E, m, p, "rate", f.rate, 2 * math.pi, tol, relative=True)
            for p, f in zip(cfg.p_grid, fits)]


def _exp_localize(cfg):
    from .asymptotics import localization_scan
    E, m = cfg.experiment, cfg.model
    scans = _map(lambda p: localization_scan(m, p, [2.0]), cfg.p_grid)
    rows = []
    for p, scan in zip(cfg.p_grid, scans):
        ratio = scan[0]["ratio"]
        # the invariant diagonal is proportional to (|w|^2 / (1 + |w|^2)^2)^p
        rows.append(_check(E, m, p, "ratio_exact_law", ratio, (16.0 / 25.0) ** p,
                           cfg.tolerances["exact_law"] * (16.0 / 25.0) ** p))
        rows.append(_bound(E, m, p, "ratio_r2", ratio, cfg.tolerances["ratio"]))
    return rows


def _exp_normal_slice(cfg):
    from .asymptotics import normal_slice_integral
    E, m, tol = cfg.experiment, cfg.model, cfg.tolerances
    eps = 0.5
    target = (lambda p: 1.0) if m == "CP1_O2" else (lambda p: (p + 1.0) / p)
    vals = _map(lambda p: (normal_slice_integral(m, p, eps), normal_slice_integral(m, p, eps / 2)),
                cfg.p_grid)
    rows = []
    for p, (full, half) in zip(cfg.p_grid, vals):
        rows.append(_check(E, m, p, "I_p", full, target(p), tol["value"]))
        rows.append(_check(E, m, p, "eps_change", abs(full - half), 0.0, tol["eps"]))
    return rows


def _exp_dimensions(cfg):
    from .asymptotics import invariant_dimension_report
    E, m = cfg.experiment, cfg.model
    rep = invariant_dimension_report(m, cfg.p_grid)
    rows = []
    for p, dim, lead in rep.rows:
        exact = 1 if m == "CP1_O2" else p + 1
        rows.append(_check(E, m, p, "invariant_dimension", dim, exact, 0.5))
        rows.append(_info(E, m, p, "leading_prediction", lead))
    if len(rep.rows) >= 2:
        slope = 0.0 if m == "CP1_O2" else 1.0
        rows.append(_check(E, m, None, "slope", rep.slope, slope, cfg.tolerances["slope"]))
    return rows


def _exp_coefficients_engine(cfg):
    from .asymptotics import cp1_scaled_diagonal_exact, richardson_extrapolate
    from .coefficients import compute_coefficients
    from .projective import cp1_point_geometry
    E, m, tol = cfg.experiment, cfg.model, cfg.tolerances
    if cfg.geometry_path:
        return _coefficients_from_file(cfg)
    res = compute_coefficients(cp1_point_geometry())
    fit = richardson_extrapolate([(p, cp1_scaled_diagonal_exact(p)) for p in range(100, 1601, 100)])
    eng = res.p2_zero_engine.real
    return [
        _check(E, m, None, "p2_zero_engine", eng, 3 * SQRT2 / 8, tol["closed"]),
        _check(E, m, None, "p2_zero_closed", res.p2_zero_closed.real, eng, tol["closed"]),
        _check(E, m, None, "p2_zero_vs_richardson", eng, fit.coefficient(1), tol["richardson"]),
        _check(E, m, None, "phi1_numeric", abs(res.phi1_numeric), 0.0, tol["phi1"]),
        _check(E, m, None, "phi1_closed", abs(res.phi1_closed), 0.0, tol["phi1"]),
    ]


def _coefficients_from_file(cfg):
    """Engine against closed forms for a user geometry (reduction to a point)."""
    from .coefficients import PointGeometry, compute_coefficients
    try:
        with open(cfg.geometry_path, encoding="utf-8") as fh:
            geom = PointGeometry.from_json(fh.read())
    except (OSError, ValueError, KeyError) as exc:
        raise ConfigError(f"cannot read geometry {cfg.geometry_path}: {exc}") from exc
    E, m, tol = cfg.experiment, cfg.model, cfg.tolerances
    res = compute_coefficients(geom)
    return [
        _check(E, m, None, "p2_zero_engine_vs_closed", abs(res.p2_zero_engine - res.p2_zero_closed),
               0.0, tol["closed"]),
        _check(E, m, None, "phi1_engine_vs_closed", abs(res.phi1_numeric - res.phi1_closed),
               0.0, tol["closed"]),
        _info(E, m, None, "p2_zero_engine_re", res.p2_zero_engine.real),
        _info(E, m, None, "p2_zero_engine_im", res.p2_zero_engine.imag),
        _info(E, m, None, "phi1_engine_re", res.phi1_numeric.real),
        _info(E, m, None, "phi1_engine_im", res.phi1_numeric.imag),
    ]


def _phi1_hermite(kern, params, nodes: int = 20) -> complex:
    """Integral over the normal slice of the sampled diagonal, by Gauss-Hermite."""
    from numpy.polynomial.hermite import hermgauss
    x, w = hermgauss(nodes)
    scale = [1.0 / math.sqrt(a) for a in params.a_perp]      # diagonal factor exp(-a |Z|^2)
    total = 0.0 + 0.0j
    for idx in np.ndindex(*([nodes] * params.n0)):
        Zn = np.array([x[i] * scale[j] for j, i in enumerate(idx)])
        weight = np.prod([w[i] * math.exp(x[i] ** 2) * scale[j] for j, i in enumerate(idx)])
        Z = np.concatenate([np.zeros(2 * params.nh), Zn])
        total += weight * kern(Z, Z)
    return total


def _oracle_case(seed: int, n: int, n0: int):
    from .coefficients import (brute_force_coefficient, build_O1, build_O2_fully_normal,
                               expansion_coefficient, phi1_numeric, random_geometry)
    from .model import ModelParams, eval_kernel
    rng = np.random.default_rng(seed)
    params = ModelParams.kahler(n, n0)
    geom = random_geometry(params, rng, scale=0.5)
    O1 = build_O1(geom)
    O2 = build_O2_fully_normal(geom) if n == n0 else None
    dim = 2 * params.nh + params.n0
    pts = []
    for _ in range(6):
        Z = rng.uniform(-1, 1, dim)
        Zp = rng.uniform(-1, 1, dim)
        Z /= max(1.0, np.linalg.norm(Z))
        Zp /= max(1.0, np.linalg.norm(Zp))
        pts.append((Z, Zp))
    errs = {}
    for r in (1, 2):
        k = expansion_coefficient(r, O1, O2)
        eng = np.array([eval_kernel(k, Z, Zp) for Z, Zp in pts])
        bf = brute_force_coefficient(r, O1, O2, N=30, points=pts)
        errs[r] = float(np.max(np.abs(eng - bf)))
    if n == n0:
        kern = brute_force_coefficient(2, O1, O2, N=30)
        errs["phi1"] = abs(phi1_numeric(O1, O2) - _phi1_hermite(kern, params))
    return errs


def _exp_coefficients_oracle(cfg):
    E, m = cfg.experiment, cfg.model
    tol = cfg.tolerances["oracle"]
    cases = [(1, 1), (2, 2), (2, 1)]
    out = _map(lambda c: _oracle_case(cfg.seed + 17 * c[0] + c[1], *c), cases)
    rows = []
    for (n, n0), errs in zip(cases, out):
        for r in (1, 2):
            rows.append(_check(E, m, None, f"P{r}_max_diff_n{n}_n0{n0}", errs[r], 0.0, tol))
        if "phi1" in errs:
            rows.append(_check(E, m, None, f"phi1_vs_sampled_n{n}_n0{n0}", errs["phi1"], 0.0,
                               cfg.tolerances["phi1"]))
    return rows


def _exp_toeplitz_symbol(cfg):
    from .projective import make_section_space
    from .toeplitz import invariant_toeplitz, symbol_t_ratio
    E, m = cfg.experiment, cfg.model
    target = 1.0 / (2.0 * math.sqrt(math.pi))
    vals = _map(lambda p: invariant_toeplitz(make_section_space(m, p), symbol_t_ratio).real,
                cfg.p_grid)
    rows = [_check(E, m, p, "T_f_value", v, target, cfg.tolerances["symbol"], relative=True)
            for p, v in zip(cfg.p_grid, vals)]
    for (p, v), (q, w) in zip(zip(cfg.p_grid, vals), zip(cfg.p_grid[1:], vals[1:])):
        if q == 2 * p:
            rows.append(_check(E, m, q, "error_ratio", (w - target) / (v - target), 0.5,
                               cfg.tolerances["halving"]))
    return rows


def _exp_isometry(cfg):
    from .projective import make_section_space
    from .toeplitz import isometry_defect
    E, m = cfg.experiment, cfg.model
    vals = _map(lambda p: isometry_defect(make_section_space(m, p)), cfg.p_grid)
    rows = []
    for p, d in zip(cfg.p_grid, vals):
        rows.append(_check(E, m, p, "defect", d, 3.0 / (8 * p), cfg.tolerances["defect"], relative=True))
        rows.append(_bound(E, m, p, "defect_vs_1/(2p)", d, 0.5 / p))
    for (p, v), (q, w) in zip(zip(cfg.p_grid, vals), zip(cfg.p_grid[1:], vals[1:])):
        if q == 2 * p:
            rows.append(_check(E, m, q, "defect_ratio", w / v, 0.5, cfg.tolerances["halving"]))
    return rows


def _exp_commutator(cfg):
    from .projective import make_section_space
    from .toeplitz import commutator_residual, sphere_symbol
    E, m = cfg.experiment, cfg.model
    x1, x2 = sphere_symbol(1), sphere_symbol(2)
    vals = _map(lambda p: commutator_residual(make_section_space(m, p), x1, x2), cfg.p_grid)
    rows = [_info(E, m, p, "residual", v) for p, v in zip(cfg.p_grid, vals)]
    for (p, v), (q, w) in zip(zip(cfg.p_grid, vals), zip(cfg.p_grid[1:], vals[1:])):
        if q == 2 * p:
            rows.append(_check(E, m, q, "residual_ratio", v / w, 2.0, cfg.tolerances["ratio"]))
    return rows


def _exp_selftest(cfg):
    from . import _selftest
    return [Row(cfg.experiment, cfg.model, None, name, 1.0 if ok else 0.0, 1.0, None,
                "pass" if ok else "fail") for name, ok in _selftest.run_all()]


@dataclass(frozen=True)
class _Entry:
    fn: Callable
    models: tuple
    default_model: str
    p_grid: tuple
    tolerances: dict
    needs_p: bool = True


_BOTH = ("CP1_O2", "CP2_O2_level_half")
_CP1 = ("CP1_O2",)

REGISTRY = {
    "expand-diagonal": _Entry(_exp_expand_diagonal, _BOTH, "CP1_O2", tuple(range(100, 1601, 100)),
                             {"c0": 1e-6, "c_half": 1e-6, "c1": 1e-4, "singular": 1e-12,
                              "level_points": 0.05}),
    "offdiag-decay": _Entry(_exp_offdiag_decay, _BOTH, "CP1_O2", (400,), {"rate": 0.02}),
    "localize": _Entry(_exp_localize, _BOTH, "CP1_O2", (60, 80, 120),
                      {"ratio": 1e-15, "exact_law": 1e-9}),
    "normal-slice": _Entry(_exp_normal_slice, _BOTH, "CP1_O2", (50, 100, 200),
                          {"value": 1e-8, "eps": 1e-10}),
    "dimensions": _Entry(_exp_dimensions, _BOTH, "CP2_O2_level_half", tuple(range(2, 41)),
                        {"slope": 1e-9}),
    "coefficients-engine": _Entry(_exp_coefficients_engine, _CP1, "CP1_O2", (), {
        "closed": 1e-8, "richardson": 1e-4, "phi1": 1e-10}, needs_p=False),
    "coefficients-oracle": _Entry(_exp_coefficients_oracle, _CP1, "CP1_O2", (), {"oracle": 1e-8, "phi1": 1e-6},
                                 needs_p=False),
    "toeplitz-symbol": _Entry(_exp_toeplitz_symbol, _CP1, "CP1_O2", (200, 400, 800),
                             {"symbol": 3e-3, "halving": 0.05}),
    "isometry": _Entry(_exp_isometry, _BOTH, "CP1_O2", (100, 200, 400),
                      {"defect": 0.1, "halving": 0.05}),
    "commutator": _Entry(_exp_commutator, _CP1, "CP1_O2", (128, 256), {"ratio": 0.3}),
    "selftest": _Entry(_exp_selftest, _BOTH, "CP1_O2", (), {}, needs_p=False),
}

# the CP^2 variant of the decay law is checked at a lower level and tolerance
_MODEL_OVERRIDES = {
    ("offdiag-decay", "CP2_O2_level_half"): {"p_grid": (80,), "tolerances": {"rate": 0.05}},
    ("localize", "CP2_O2_level_half"): {"p_grid": (60, 80, 120)},
    ("isometry", "CP2_O2_level_half"): {"p_grid": (25, 50, 100)},
    ("expand-diagonal", "CP2_O2_level_half"): {"p_grid": (80, 160, 240, 320, 400, 480, 560, 640)},
}


def default_config(experiment: str, model: Optional[str] = None) -> ExperimentConfig:
    if experiment not in REGISTRY:
        raise ConfigError(f"unknown experiment {experiment!r}")
    entry = REGISTRY[experiment]
    model = model or entry.default_model
    over = _MODEL_OVERRIDES.get((experiment, model), {})
    tols = dict(entry.tolerances)
    tols.update(over.get("tolerances", {}))
    return ExperimentConfig(experiment, model, tuple(over.get("p_grid", entry.p_grid)), tols)


def run_experiment(cfg: ExperimentConfig) -> Report:
    cfg.validate()
    entry = REGISTRY[cfg.experiment]
    tols = dict(entry.tolerances)
    tols.update(cfg.tolerances)
    cfg = replace(cfg, tolerances=tols)
    rows = entry.fn(cfg)
    return Report(cfg.experiment, cfg.model, tuple(rows))


# --------------------------------------------------------------------------
# serialisation

def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, float):
        return repr(x)
    return str(x)


def emit_report(report: Report, fmt: str = "csv") -> str:
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_FIELDS)
        for r in report.rows:
            w.writerow([_fmt(getattr(r, f)) for f in CSV_FIELDS])
        return buf.getvalue()
    if fmt == "json":
        doc = {"experiment": report.experiment, "model": report.model,
               "rows": [asdict(r) for r in report.rows]}
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"
    raise ValueError(f"unknown format {fmt!r}")


def parse_report(text: str, fmt: str = "json") -> Report:
    if fmt == "json":
        doc = json.loads(text)
        return Report(doc["experiment"], doc["model"], tuple(Row(**r) for r in doc["rows"]))
    if fmt == "csv":
        rows = []
        for rec in csv.DictReader(io.StringIO(text)):
            def num(s, conv=float):
                return None if s == "" else conv(s)
            rows.append(Row(rec["experiment"], rec["model"], num(rec["p"], int), rec["quantity"],
                            float(rec["value"]), num(rec["target"]), num(rec["tolerance"]),
                            rec["verdict"]))
        exp = rows[0].experiment if rows else ""
        model = rows[0].model if rows else ""
        return Report(exp, model, tuple(rows))
    raise ValueError(f"unknown format {fmt!r}")


def _write(text: str, path: Optional[str]):
    if path in (None, "-"):
        sys.stdout.write(text)
        return
    try:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    except OSError as exc:
        raise ConfigError(f"cannot write output to {path}: {exc}") from exc


# --------------------------------------------------------------------------
# entry point

def _load_config(args) -> ExperimentConfig:
    doc = {}
    if args.config:
        try:
            with open(args.config, encoding="utf-8") as fh:
                doc = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
    experiment = args.experiment or doc.get("experiment")
    if not experiment:
        raise ConfigError("no experiment given (use --experiment or the config file)")
    base = default_config(experiment, args.model or doc.get("model"))
    p_grid = tuple(int(p) for p in doc.get("p_grid", base.p_grid))
    if args.pmax is not None:
        p_grid = tuple(p for p in p_grid if p <= args.pmax)
    tols = dict(base.tolerances)
    tols.update(doc.get("tolerances", {}))
    out = doc.get("output", {})
    return ExperimentConfig(
        experiment=experiment,
        model=base.model,
        p_grid=p_grid,
        tolerances=tols,
        output_path=args.out or out.get("path"),
        output_format=args.format or out.get("format", "csv"),
        seed=int(args.seed if args.seed is not None else doc.get("seed", 0)),
        geometry_path=args.geometry or doc.get("geometry"),
    )


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="bergman-lab",
                                 description="Invariant Bergman kernel verification experiments.")
    sub = ap.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run one experiment")
    run.add_argument("--config", help="JSON configuration file")
    run.add_argument("--experiment", choices=sorted(REGISTRY))
    run.add_argument("--model", choices=list(_BOTH))
    run.add_argument("--pmax", type=int, help="drop levels above this value")
    run.add_argument("--out", help="output path ('-' for stdout)")
    run.add_argument("--format", choices=("csv", "json"))
    run.add_argument("--seed", type=int)
    run.add_argument("--geometry", help="PointGeometry JSON file (coefficients-engine)")
    st = sub.add_parser("selftest", help="run the quick built-in checks")
    st.add_argument("--format", choices=("csv", "json"), default="csv")
    sub.add_parser("list", help="list experiments and their defaults")
    return ap


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        if args.command == "list":
            for name in sorted(REGISTRY):
                cfg = default_config(name)
                entry = REGISTRY[name]
                print(f"{name:22s} models={','.join(entry.models)} p_grid={list(cfg.p_grid)}")
            return 0
        if args.command == "selftest":
            report = run_experiment(default_config("selftest"))
            _write(emit_report(report, args.format), None)
            return 0 if report.passed else 1
        _threads()  # reject a malformed thread cap before any work
        cfg = _load_config(args)
        report = run_experiment(cfg)
        _write(emit_report(report, cfg.output_format), cfg.output_path)
        return 0 if report.passed else 1
    except ConfigError as exc:
        print(f"bergman-lab: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
