"""Command-line frontend.

Verbs: normalize, spectrum, scatter, asymptotics, verify.  Exit codes:
0 pass/equivalent, 1 distinct, 2 structural or usage error.  Outputs
are deterministic; wall time is only written with --timing.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from pathlib import Path

from .angular import count_in_cone, coupled_solve
from .inverse import verify_pair
from .radial import asymptotics_check, scattering_table
from .serialize import (
    ConfigError,
    ManifoldConfig,
    RunManifest,
    asymptotics_csv,
    canonical_json,
    comparison_record,
    counting_record,
    dump_matrix,
    load_config_file,
    scattering_lines,
    spectrum_record,
)
from .stackel import (
    GaugeError,
    NonRiemannianError,
    NormalizationError,
    RobertsonError,
    check_ah_ends,
    check_robertson,
    gauge_normalize,
    normalize_angular_gauge,
)

STRUCTURAL_ERRORS = (ConfigError, NonRiemannianError, NormalizationError,
                     RobertsonError, GaugeError, FileNotFoundError,
                     json.JSONDecodeError)


def _workers(args) -> int:
    if args.workers is not None:
        return args.workers
    return int(os.environ.get("TORSCAT_WORKERS", "1"))


def _out_dir(args) -> Path:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _manifest(args, verb: str, cfg: ManifoldConfig, t0: float) -> RunManifest:
    man = RunManifest(command=verb, config_hash=cfg.hash,
                      tolerances=cfg.tolerances)
    if args.timing:
        man.wall_time_s = round(time.time() - t0, 3)
    return man


def _apply_overrides(cfg: ManifoldConfig, args) -> ManifoldConfig:
    if args.lam is not None:
        if args.lam == 0.0:
            raise ConfigError("lambda must be nonzero")
        cfg.lam = args.lam
    for item in args.tol_overrides or []:
        key, _, val = item.partition("=")
        if not val:
            raise ConfigError(f"bad tolerance override {item!r}")
        cfg.tolerances[key] = float(val)
    return cfg


def _normalized(cfg: ManifoldConfig):
    """Canonical-frame matrix plus the structural reports."""
    norm = gauge_normalize(cfg.matrix)
    gauge = normalize_angular_gauge(norm.matrix)
    S = gauge.matrix
    factors = check_robertson(S)
    ah = check_ah_ends(S, cfg.eps0, cfg.eps1)
    report = {
        "condition_c_steps": list(norm.steps),
        "column_gauge": norm.gauge.tolist(),
        "angular_gauge_mode": gauge.mode,
        "robertson_residual": factors.residual,
        "ah_ends": [
            {"end": r.end, "epsilon": r.epsilon, "passed": r.passed,
             "threshold": r.threshold, "deviations": r.deviations}
            for r in ah
        ],
    }
    passed = all(r.passed for r in ah)
    return S, factors, report, passed


def cmd_normalize(args) -> int:
    t0 = time.time()
    cfg = _apply_overrides(load_config_file(args.config), args)
    S, factors, report, passed = _normalized(cfg)
    out = _out_dir(args)
    man = _manifest(args, "normalize", cfg, t0)
    (out / "normalized.json").write_text(canonical_json(
        {"manifest": man.to_dict(), "matrix": dump_matrix(S)}), encoding="utf-8")
    (out / "normalize_report.json").write_text(canonical_json(
        {"manifest": man.to_dict(), "report": report, "passed": passed}),
        encoding="utf-8")
    return 0 if passed else 2


def cmd_spectrum(args) -> int:
    t0 = time.time()
    cfg = _apply_overrides(load_config_file(args.config), args)
    S, factors, report, passed = _normalized(cfg)
    spec = coupled_solve(S, cfg.lam, args.r_max)
    cb = spec.cone
    pad = 0.02 * (cb.window[1] - cb.window[0])
    cone = (cb.window[0] + pad, cb.window[1] - pad)
    r_count = max(1.0, float(args.r_max) ** 0.5)
    counting = count_in_cone(S, spec, cone, r=r_count, seed=0)
    man = _manifest(args, "spectrum", cfg, t0)
    out = _out_dir(args)
    record = {"manifest": man.to_dict(), "structural": report}
    record.update(spectrum_record(spec))
    record["counting"] = dict(counting_record(counting), cone=list(cone))
    (out / "spectrum.json").write_text(canonical_json(record), encoding="utf-8")
    if spec.failed_cells:
        print(f"warning: {spec.failed_cells} solver cells did not converge",
              file=sys.stderr)
    return 0 if passed else 2


def cmd_scatter(args) -> int:
    t0 = time.time()
    cfg = _apply_overrides(load_config_file(args.config), args)
    S, factors, report, passed = _normalized(cfg)
    spec = coupled_solve(S, cfg.lam, args.r_max)
    table = scattering_table(S, cfg.lam, spec, factors=factors,
                             workers=_workers(args))
    y_list = [float(v) for v in args.y_list.split(",")] if args.y_list else [20.0, 40.0]
    ladder = asymptotics_check(S, cfg.lam, y_list, factors=factors)
    man = _manifest(args, "scatter", cfg, t0)
    out = _out_dir(args)
    (out / "scatter.jsonl").write_text(scattering_lines(table, man),
                                       encoding="utf-8")
    (out / "asymptotics.csv").write_text(asymptotics_csv(ladder), encoding="utf-8")
    n_pole = sum(1 for r in table if r.smat is None)
    if n_pole:
        print(f"note: {n_pole} modes flagged as poles", file=sys.stderr)
    return 0 if passed else 2


def cmd_asymptotics(args) -> int:
    t0 = time.time()
    cfg = _apply_overrides(load_config_file(args.config), args)
    S, factors, report, passed = _normalized(cfg)
    y_list = [float(v) for v in args.y_list.split(",")]
    ladder = asymptotics_check(S, cfg.lam, y_list, factors=factors)
    man = _manifest(args, "asymptotics", cfg, t0)
    out = _out_dir(args)
    (out / "asymptotics.csv").write_text(asymptotics_csv(ladder), encoding="utf-8")
    (out / "asymptotics.json").write_text(canonical_json(
        {"manifest": man.to_dict(),
         "rows": [{"y": r.y, "err_big": r.err_big, "err_small": r.err_small}
                  for r in ladder]}), encoding="utf-8")
    return 0 if passed else 2


def cmd_verify(args) -> int:
    t0 = time.time()
    cfg_a = _apply_overrides(load_config_file(args.config), args)
    cfg_b = _apply_overrides(load_config_file(args.config_b), args)
    S_a, _, _, ok_a = _normalized(cfg_a)
    S_b, _, _, ok_b = _normalized(cfg_b)
    if not (ok_a and ok_b):
        print("structural validation failed", file=sys.stderr)
        return 2
    report = verify_pair(S_a, S_b, cfg_a.lam, r_max=args.r_max)
    man = RunManifest(command="verify",
                      config_hash=cfg_a.hash + ":" + cfg_b.hash,
                      tolerances=cfg_a.tolerances)
    if args.timing:
        man.wall_time_s = round(time.time() - t0, 3)
    out = _out_dir(args)
    (out / "verify_report.json").write_text(canonical_json(
        {"manifest": man.to_dict(), "comparison": comparison_record(report)}),
        encoding="utf-8")
    print(f"verdict: {report.verdict}")
    return 0 if report.verdict == "equivalent" else 1


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="torscat",
        description="Separable toric-cylinder spectra, scattering data and "
                    "uniqueness verification at fixed energy.")
    sub = p.add_subparsers(dest="verb", required=True)

    def common(sp, config_b=False):
        sp.add_argument("--config", required=True, help="manifold config JSON")
        if config_b:
            sp.add_argument("--config-b", required=True,
                            help="second manifold config JSON")
        sp.add_argument("--out-dir", default="out", help="output directory")
        sp.add_argument("--lambda", dest="lam", type=float, default=None,
                        help="override the energy parameter")
        sp.add_argument("--r-max", type=float, default=10.0,
                        help="spectrum radius in the momentum-squared plane")
        sp.add_argument("--workers", type=int, default=None,
                        help="worker threads (default: env TORSCAT_WORKERS or 1)")
        sp.add_argument("--tol-overrides", nargs="*", default=None,
                        metavar="KEY=VAL", help="tolerance overrides")
        sp.add_argument("--timing", action="store_true",
                        help="record wall time in the manifests")

    common(sub.add_parser("normalize", help="canonical frame + structure reports"))
    common(sub.add_parser("spectrum", help="coupled spectrum + counting"))
    sp = sub.add_parser("scatter", help="per-mode scattering records")
    common(sp)
    sp.add_argument("--y-list", default=None,
                    help="comma-separated imaginary momenta for the ladder")
    sp = sub.add_parser("asymptotics", help="large-momentum ladder only")
    common(sp)
    sp.add_argument("--y-list", default="20,40,80,160")
    common(sub.add_parser("verify", help="compare two manifolds"), config_b=True)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    handlers = {
        "normalize": cmd_normalize,
        "spectrum": cmd_spectrum,
        "scatter": cmd_scatter,
        "asymptotics": cmd_asymptotics,
        "verify": cmd_verify,
    }
    try:
        return handlers[args.verb](args)
    except STRUCTURAL_ERRORS as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}),
              file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
