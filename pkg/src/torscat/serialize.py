"""Config ingestion, matrix dumps and deterministic result serialization.

All output files embed a run manifest and are byte-stable: keys are
sorted, floats go through the shortest round-trip representation, and
nothing volatile is written unless timing is explicitly requested.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import __version__
from .funcspace import SmoothFn1D
from .presets import PRESETS, build_preset
from .stackel import StackelMatrix, geometric_grid

CONFIG_SCHEMA = "torscat-config/1"
MATRIX_SCHEMA = "torscat-matrix/1"

DEFAULT_TOLERANCES = {
    "structural": 1e-8,
    "spectral": 1e-6,
    "scattering": 1e-6,
    "sensitivity": 1e-3,
    "unitarity": 1e-6,
    "pole": 1e-8,
}


class ConfigError(ValueError):
    """Malformed or inconsistent manifold configuration."""


def _c2l(z) -> list:
    z = complex(z)
    return [z.real, z.imag]


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=1) + "\n"


def config_hash(cfg: dict) -> str:
    return hashlib.sha256(
        json.dumps(cfg, sort_keys=True, separators=(",", ":")).encode()).hexdigest()[:16]


@dataclass
class RunManifest:
    command: str
    config_hash: str
    tool_version: str = __version__
    tolerances: dict = field(default_factory=lambda: dict(DEFAULT_TOLERANCES))
    wall_time_s: Optional[float] = None

    def to_dict(self) -> dict:
        return {
            "command": self.command,
            "config_hash": self.config_hash,
            "tool_version": self.tool_version,
            "tolerances": self.tolerances,
            "wall_time_s": self.wall_time_s,
        }


# ---------------------------------------------------------------------------
# Configs
# ---------------------------------------------------------------------------

@dataclass
class ManifoldConfig:
    raw: dict
    matrix: StackelMatrix
    lam: float
    eps0: float
    eps1: float
    tolerances: dict

    @property
    def hash(self) -> str:
        return config_hash(self.raw)


def _matrix_from_tables(rows: dict, A: float, B: float, C: float) -> StackelMatrix:
    def entry(name, periodic):
        spec = rows[name]
        knots = np.asarray(spec["knots"], dtype=float)
        values = np.asarray(spec["values"], dtype=float)
        fn = SmoothFn1D.from_table(knots, values, periodic=periodic)
        taper = int(spec.get("taper", 0))
        if taper:
            lo, hi = knots[0], knots[-1]
            span = hi - lo

            def detapered(x, fn=fn, p=taper):
                x = np.asarray(x, dtype=float)
                return fn(np.clip(x, lo, hi)) / (x**p * (A - x) ** p)

            return SmoothFn1D(domain=(0.0, A), fn=detapered)
        return fn

    names = [["s11", "s12", "s13"], ["s21", "s22", "s23"], ["s31", "s32", "s33"]]
    out = []
    for i, row in enumerate(names):
        periodic = i > 0
        out.append(tuple(entry(n, periodic) for n in row))
    return StackelMatrix(rows=tuple(out), radial_domain=(0.0, A), periods=(B, C))


def load_config(cfg: dict) -> ManifoldConfig:
    if cfg.get("schema", CONFIG_SCHEMA) != CONFIG_SCHEMA:
        raise ConfigError(f"unsupported schema {cfg.get('schema')!r}")
    lam = float(cfg.get("lambda", 0.0))
    if lam == 0.0:
        raise ConfigError("the energy parameter lambda must be nonzero")
    eps0 = float(cfg.get("eps0", 1.0))
    eps1 = float(cfg.get("eps1", 1.0))
    tols = dict(DEFAULT_TOLERANCES)
    tols.update(cfg.get("tolerances", {}))

    if "preset" in cfg:
        name = cfg["preset"]
        if name not in PRESETS:
            raise ConfigError(f"unknown preset {name!r}")
        params = dict(cfg.get("params", {}))
        matrix = build_preset(name, **params)
    elif "rows" in cfg:
        for key in ("A", "B", "C"):
            if float(cfg.get(key, 0.0)) <= 0.0:
                raise ConfigError(f"domain size {key} must be positive")
        matrix = _matrix_from_tables(cfg["rows"], float(cfg["A"]),
                                     float(cfg["B"]), float(cfg["C"]))
    else:
        raise ConfigError("config needs either 'preset' or 'rows'")
    return ManifoldConfig(raw=cfg, matrix=matrix, lam=lam, eps0=eps0,
                          eps1=eps1, tolerances=tols)


def load_config_file(path) -> ManifoldConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return load_config(json.load(fh))


# ---------------------------------------------------------------------------
# Matrix dumps
# ---------------------------------------------------------------------------

def _radial_knots(A: float, n: int = 1800) -> np.ndarray:
    # dense enough that re-ingested splines reproduce the metric to 1e-12
    inner = geometric_grid(0.0, A, n=600, depth=1e-9)
    return np.unique(np.concatenate([inner, np.linspace(0.01 * A, 0.99 * A, n)]))


def dump_matrix(S: StackelMatrix, n_angular: int = 1024) -> dict:
    """Knot/value tables for every entry, radial singularities tapered."""
    A = S.A
    B, C = S.periods
    xr = _radial_knots(A)
    rows = {}
    for j, name in ((1, "s11"), (2, "s12"), (3, "s13")):
        fn = S.entry(1, j)
        vals = fn(xr)
        taper = 0
        probe = abs(fn(np.array([1e-7 * A]))[0] if hasattr(fn(np.array([1e-7 * A])), "__len__")
                    else fn(1e-7 * A))
        mid = abs(float(np.atleast_1d(fn(0.5 * A))[0]))
        if probe > 100.0 * (1.0 + mid):
            taper = 2
            vals = vals * xr**2 * (A - xr) ** 2
        rows[name] = {"knots": xr.tolist(), "values": np.asarray(vals).tolist(),
                      "taper": taper}
    for i, prefix in ((2, "s2"), (3, "s3")):
        period = S.periods[i - 2]
        xa = np.linspace(0.0, period, n_angular + 1)
        for j in (1, 2, 3):
            vals = S.entry(i, j)(np.minimum(xa, period * (1 - 1e-12)))
            vals[-1] = vals[0]
            rows[f"{prefix}{j}"] = {"knots": xa.tolist(),
                                    "values": np.asarray(vals).tolist()}
    return {"schema": MATRIX_SCHEMA, "A": A, "B": B, "C": C, "rows": rows}


def matrix_config_from_dump(dump: dict, lam: float, eps0=1.0, eps1=1.0) -> dict:
    return {
        "schema": CONFIG_SCHEMA,
        "rows": dump["rows"],
        "A": dump["A"], "B": dump["B"], "C": dump["C"],
        "lambda": lam, "eps0": eps0, "eps1": eps1,
    }


# ---------------------------------------------------------------------------
# Result records
# ---------------------------------------------------------------------------

def spectrum_record(spectrum) -> dict:
    return {
        "cone_bounds": {
            "C1": spectrum.cone.C1, "C2": spectrum.cone.C2,
            "D1": spectrum.cone.D1, "D2": spectrum.cone.D2,
            "window": list(spectrum.cone.window),
        },
        "lam": spectrum.lam,
        "r_max": spectrum.r_max,
        "dropped_negative": spectrum.dropped_negative,
        "failed_cells": spectrum.failed_cells,
        "modes": [
            {"m": m.index, "mu_sq": m.mu_sq, "nu_sq": m.nu_sq,
             "multiplicity": m.multiplicity}
            for m in spectrum.modes
        ],
    }


def counting_record(count) -> dict:
    return {
        "r": count.r, "count": count.count,
        "count_weighted": count.count_weighted,
        "ratio": count.ratio, "ratio_weighted": count.ratio_weighted,
        "symbol_volume": count.symbol_volume,
        "symbol_ratio": count.symbol_ratio,
    }


def scattering_lines(table, manifest: RunManifest) -> str:
    lines = [json.dumps({"manifest": manifest.to_dict()}, sort_keys=True)]
    for row in table:
        rec = {
            "m": row.index, "mu_sq": row.mu_sq, "nu_sq": row.nu_sq,
            "multiplicity": row.multiplicity,
            "Delta": _c2l(row.chi.delta_big),
            "delta": _c2l(row.chi.delta_small),
            "M": "pole" if row.chi.pole else _c2l(row.chi.wt),
            "wronskian_spread": row.chi.spread,
        }
        if row.smat is not None:
            rec.update({
                "L": _c2l(row.smat.L), "T": _c2l(row.smat.T_L),
                "R": _c2l(row.smat.R),
                "unitarity_residual": row.smat.unitarity_residual,
                "flagged": row.smat.flagged,
            })
        lines.append(json.dumps(rec, sort_keys=True))
    return "\n".join(lines) + "\n"


def asymptotics_csv(rows) -> str:
    out = ["y,ratio_big_re,ratio_big_im,err_big,ratio_small_re,ratio_small_im,err_small"]
    for r in rows:
        out.append(",".join(repr(v) for v in (
            r.y, r.ratio_big.real, r.ratio_big.imag, r.err_big,
            r.ratio_small.real, r.ratio_small.imag, r.err_small)))
    return "\n".join(out) + "\n"


def comparison_record(report) -> dict:
    rec = {
        "verdict": report.verdict,
        "stage_failed": report.stage_failed,
        "angular": {
            "s11_match": report.angular.s11_match,
            "s11_deviation": report.angular.s11_deviation,
            "block_gauge_c": report.angular.block_constant,
            "block_gauge_G": np.asarray(report.angular.block_gauge).tolist(),
            "shift_constants": list(report.angular.shift_constants),
            "passed": report.angular.passed,
            "reason": report.angular.reason,
        },
    }
    if report.scattering is not None:
        rec["scattering"] = {
            "n_modes": report.scattering.n_modes,
            "spectrum_deviation": report.scattering.spectrum_deviation,
            "first_disagreement": report.scattering.first_disagreement,
            "max_deviation": report.scattering.max_deviation,
            "per_mode": np.asarray(report.scattering.mode_deviations).tolist(),
            "passed": report.scattering.passed,
        }
    if report.radial is not None:
        rec["radial"] = {
            "quotient_s13_s12_match": report.radial.quotient_s13_s12_match,
            "potential_deviation": report.radial.potential_deviation,
            "u_deviation": report.radial.u_deviation,
            "coefficient_positive": report.radial.coefficient_positive,
            "passed": report.radial.passed,
        }
    if report.pullback is not None:
        rec["pullback"] = {
            "length_deviation": report.pullback.length_deviation,
            "max_deviation": report.pullback.max_deviation,
            "worst_point": list(report.pullback.worst_point),
            "passed": report.pullback.passed,
        }
    return rec
