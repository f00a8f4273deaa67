"""Executable uniqueness verification for pairs of geometries.

Given two coefficient matrices in the canonical frame, the pipeline
mirrors the uniqueness argument step by step: equality of the boundary
metric density, recovery of the residual block gauge and first-column
shifts, equality of coupled spectra and per-mode scattering data,
direct comparison of the radial potentials, the nonlinear Cauchy
reconstruction problem (whose solution must be identically one), and
the final pullback comparison of the metric in the common radial chart.
Each stage gates the next; the verdict is "equivalent" only when every
stage passes at its declared tolerance.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.integrate import solve_ivp

from .angular import coupled_solve
from .radial import build_potential, scattering_table
from .stackel import (
    MetricData,
    RobertsonFactors,
    StackelMatrix,
    apply_column_invariance,
    apply_first_column_shift,
    check_robertson,
)
from .funcspace import compose_after_inverse

TOL_STRUCTURAL = 1e-8
TOL_SPECTRAL = 1e-6
TOL_SCATTERING = 1e-6
TOL_CONSTANCY = 1e-3


@dataclass
class AngularRecovery:
    s11_match: bool
    s11_deviation: float
    block_constant: float          # c of the residual block gauge
    block_constancy_residual: float
    block_gauge: np.ndarray        # [[1-c, -c], [c, 1+c]]
    shift_constants: tuple[float, float]
    shift_residual: float
    aligned: Optional[StackelMatrix]
    passed: bool
    reason: str = ""


def angular_recover(S: StackelMatrix, S_t: StackelMatrix,
                    n_grid: int = 96) -> AngularRecovery:
    """Recover the residual block gauge and column shifts of a pair.

    Both inputs must be in the canonical frame.  On success ``aligned``
    holds the second matrix transformed onto the first's gauge, with
    block and first column agreeing pointwise.
    """
    fail = lambda why, **kw: AngularRecovery(
        s11_match=kw.get("s11_match", False),
        s11_deviation=kw.get("s11_deviation", np.inf),
        block_constant=kw.get("c", 0.0),
        block_constancy_residual=kw.get("resid", np.inf),
        block_gauge=np.eye(2), shift_constants=(0.0, 0.0),
        shift_residual=np.inf, aligned=None, passed=False, reason=why)

    if abs(S.periods[0] - S_t.periods[0]) > 1e-9 or \
            abs(S.periods[1] - S_t.periods[1]) > 1e-9:
        return fail("angular periods differ")

    x2 = S.angular_grid(2, n_grid)
    x3 = S.angular_grid(3, n_grid)
    md, md_t = MetricData(matrix=S), MetricData(matrix=S_t)
    m11 = md.minor11(x2[:, None], x3[None, :])
    m11_t = md_t.minor11(x2[:, None], x3[None, :])
    s11_dev = float(np.max(np.abs(m11 - m11_t) / (1.0 + np.abs(m11))))
    if s11_dev > TOL_STRUCTURAL:
        return fail("boundary density s^11 differs", s11_deviation=s11_dev)

    diff2 = S.entry(2, 2)(x2) - S_t.entry(2, 2)(x2)
    diff3 = S_t.entry(3, 3)(x3) - S.entry(3, 3)(x3)
    c = float(np.mean(np.concatenate([diff2, diff3])))
    resid = float(max(np.max(np.abs(diff2 - c)), np.max(np.abs(diff3 - c))))
    if resid > TOL_CONSTANCY:
        return fail("block difference is not a constant gauge",
                    s11_match=True, s11_deviation=s11_dev, c=c, resid=resid)

    G = np.array([[1.0 - c, -c], [c, 1.0 + c]])
    aligned = apply_column_invariance(S_t, G)

    # first-column shifts: fit on row 2, cross-validate on row 3
    d21 = aligned.entry(2, 1)(x2) - S.entry(2, 1)(x2)
    basis = np.column_stack([aligned.entry(2, 3)(x2), aligned.entry(2, 2)(x2)])
    coef, *_ = np.linalg.lstsq(basis, d21, rcond=None)
    C1, C2 = (float(v) for v in coef)
    d31 = aligned.entry(3, 1)(x3) - S.entry(3, 1)(x3)
    pred31 = C1 * aligned.entry(3, 3)(x3) + C2 * aligned.entry(3, 2)(x3)
    shift_resid = float(max(
        np.max(np.abs(d21 - basis @ coef)),
        np.max(np.abs(d31 - pred31))))
    if shift_resid > TOL_CONSTANCY:
        return fail("first column difference is not a shift invariance",
                    s11_match=True, s11_deviation=s11_dev, c=c, resid=resid)

    # the fit basis is (col3, col2); undo in matching order
    aligned = apply_first_column_shift(aligned, -C2, -C1)

    # exact agreement of the block and the angular first column
    worst = 0.0
    for i, grid in ((2, x2), (3, x3)):
        for j in (1, 2, 3):
            a = S.entry(i, j)(grid)
            b = aligned.entry(i, j)(grid)
            worst = max(worst, float(np.max(np.abs(a - b) / (1.0 + np.abs(a)))))
    if worst > TOL_STRUCTURAL:
        return fail("aligned angular rows disagree", s11_match=True,
                    s11_deviation=s11_dev, c=c, resid=resid)

    return AngularRecovery(
        s11_match=True, s11_deviation=s11_dev, block_constant=c,
        block_constancy_residual=resid, block_gauge=G,
        shift_constants=(C1, C2), shift_residual=shift_resid,
        aligned=aligned, passed=True)


# ---------------------------------------------------------------------------
# Scattering comparison
# ---------------------------------------------------------------------------

@dataclass
class ScatteringComparison:
    n_modes: int
    spectrum_deviation: float
    first_disagreement: Optional[int]
    mode_deviations: np.ndarray
    max_deviation: float
    passed: bool
    reason: str = ""


def compare_scattering(S: StackelMatrix, S_t: StackelMatrix, lam: float,
                       r_max: float,
                       factors: Optional[RobertsonFactors] = None,
                       factors_t: Optional[RobertsonFactors] = None,
                       spectra=None) -> ScatteringComparison:
    """Coupled spectra and per-mode scattering blocks of an aligned pair."""
    if spectra is None:
        spec = coupled_solve(S, lam, r_max)
        spec_t = coupled_solve(S_t, lam, r_max)
    else:
        spec, spec_t = spectra
    if len(spec.modes) != len(spec_t.modes):
        k = min(len(spec.modes), len(spec_t.modes))
        return ScatteringComparison(
            n_modes=k, spectrum_deviation=np.inf, first_disagreement=k + 1,
            mode_deviations=np.array([]), max_deviation=np.inf, passed=False,
            reason=f"spectra have {len(spec.modes)} vs {len(spec_t.modes)} modes")

    sdev = 0.0
    for i, (a, b) in enumerate(zip(spec.modes, spec_t.modes)):
        d = max(abs(a.mu_sq - b.mu_sq), abs(a.nu_sq - b.nu_sq)) / (1.0 + abs(a.mu_sq))
        if d > TOL_SPECTRAL or a.multiplicity != b.multiplicity:
            return ScatteringComparison(
                n_modes=len(spec.modes), spectrum_deviation=d,
                first_disagreement=i + 1, mode_deviations=np.array([]),
                max_deviation=np.inf, passed=False,
                reason=f"coupled spectra disagree at mode {i + 1}")
        sdev = max(sdev, d)

    table = scattering_table(S, lam, spec, factors=factors)
    table_t = scattering_table(S_t, lam, spec_t, factors=factors_t)
    devs = []
    for a, b in zip(table, table_t):
        if a.smat is None or b.smat is None:
            if (a.smat is None) != (b.smat is None):
                devs.append(np.inf)
            else:
                devs.append(abs(a.chi.delta_big - b.chi.delta_big))
            continue
        devs.append(max(abs(a.smat.L - b.smat.L),
                        abs(a.smat.T_L - b.smat.T_L),
                        abs(a.smat.R - b.smat.R)))
    devs = np.asarray(devs)
    max_dev = float(devs.max()) if len(devs) else 0.0
    passed = bool(max_dev < TOL_SCATTERING)
    return ScatteringComparison(
        n_modes=len(spec.modes), spectrum_deviation=sdev,
        first_disagreement=None, mode_deviations=devs, max_deviation=max_dev,
        passed=passed, reason="" if passed else "scattering blocks deviate")


# ---------------------------------------------------------------------------
# Radial recovery: potential comparison and the Cauchy problem
# ---------------------------------------------------------------------------

@dataclass
class RadialRecovery:
    chart_lengths: tuple[float, float]
    potential_deviation: float
    quotient_s13_s12_match: bool
    quotient_deviation: float
    coefficient_positive: bool
    u_deviation: float
    passed: bool
    reason: str = ""
    u_grid: Optional[np.ndarray] = None      # reconstruction solution samples
    u_values: Optional[np.ndarray] = None


def radial_recover(S: StackelMatrix, S_t: StackelMatrix, lam: float,
                   nu_values: tuple[float, float],
                   factors: Optional[RobertsonFactors] = None,
                   factors_t: Optional[RobertsonFactors] = None,
                   n_grid: int = 240) -> RadialRecovery:
    """Potential equality at two momenta, then the reconstruction ODE.

    Equal potentials at two distinct nu^2 isolate the quotient s13/s12
    by linearity; the remaining content is the Cauchy problem for
    u = (h/h~)^(1/4), whose solution must stay at 1.  u is integrated
    from the left end with u = 1, u' = 0 and its maximal drift reported.
    """
    if factors is None:
        factors = check_robertson(S)
    if factors_t is None:
        factors_t = check_robertson(S_t)
    pot = build_potential(S, "mu", lam, factors=factors)
    pot_t = build_potential(S_t, "mu", lam, factors=factors_t)

    fail = lambda why, **kw: RadialRecovery(
        chart_lengths=(pot.length, pot_t.length),
        potential_deviation=kw.get("qdev", np.inf),
        quotient_s13_s12_match=False, quotient_deviation=np.inf,
        coefficient_positive=False, u_deviation=np.inf, passed=False,
        reason=why)

    if abs(pot.length - pot_t.length) > TOL_STRUCTURAL * (1.0 + pot.length):
        return fail("radial chart lengths differ")
    L = min(pot.length, pot_t.length)
    X = np.linspace(0.02 * L, 0.98 * L, n_grid)

    nu_a, nu_b = nu_values
    if abs(nu_a - nu_b) < 1e-12:
        raise ValueError("two distinct nu^2 values are required")
    qdev = 0.0
    for nu_sq in (nu_a, nu_b):
        qa = pot.with_frozen(nu_sq).q(X)
        qb = pot_t.with_frozen(nu_sq).q(X)
        qdev = max(qdev, float(np.max(np.abs(qa - qb) / (1.0 + np.abs(qa)))))
    if qdev > TOL_SPECTRAL:
        return fail("radial potentials differ", qdev=qdev)

    # linearity in nu^2 isolates the quotient on each side
    la = (pot.with_frozen(nu_a).q(X) - pot.with_frozen(nu_b).q(X)) / (nu_a - nu_b)
    lb = (pot_t.with_frozen(nu_a).q(X) - pot_t.with_frozen(nu_b).q(X)) / (nu_a - nu_b)
    quot_dev = float(np.max(np.abs(la - lb)))
    quot_ok = quot_dev < TOL_SPECTRAL

    # Cauchy problem for u; coefficients from the second manifold in its
    # radial chart, angular factor on the base lines x2 = B/2, x3 = C/2
    chart_t = pot_t.chart
    h_fun = compose_after_inverse(chart_t, S_t.entry(1, 2) / factors_t.f1)
    l_fun = compose_after_inverse(chart_t, S_t.entry(1, 3) / S_t.entry(1, 2))
    x20 = 0.5 * S_t.periods[0]
    x30 = 0.5 * S_t.periods[1]
    s22, s23 = (float(S_t.entry(2, j)(x20)) for j in (2, 3))
    s32, s33 = (float(S_t.entry(3, j)(x30)) for j in (2, 3))

    def angular_factor(lv):
        return (lv * s32 - s33) * (s23 - lv * s22)

    coef_vals = angular_factor(l_fun(X))
    coef_positive = bool(np.all(np.real(coef_vals) > 0.0))

    def rhs(x, y):
        u, up = y
        dlog = float(h_fun.deriv(np.array([x]), 1)[0]
                     / h_fun(np.array([x]))[0])
        hval = float(h_fun(np.array([x]))[0])
        lv = float(l_fun(np.array([x]))[0])
        return [up, -0.5 * dlog * up
                - (lam**2 + 1.0) * hval * angular_factor(lv) * (u**5 - u)]

    eps = 1e-4 * L
    sol = solve_ivp(rhs, (eps, L - eps), [1.0, 0.0], method="RK45",
                    rtol=1e-10, atol=1e-12, dense_output=True)
    if not sol.success:
        return fail("reconstruction problem did not integrate")
    u_dev = float(np.max(np.abs(sol.y[0] - 1.0)))

    passed = quot_ok and u_dev < TOL_SPECTRAL
    return RadialRecovery(
        chart_lengths=(pot.length, pot_t.length), potential_deviation=qdev,
        quotient_s13_s12_match=quot_ok, quotient_deviation=quot_dev,
        coefficient_positive=coef_positive, u_deviation=u_dev,
        passed=passed, reason="" if passed else "reconstruction drifted",
        u_grid=sol.t.copy(), u_values=sol.y[0].copy())


# ---------------------------------------------------------------------------
# Pullback comparison in the common radial chart
# ---------------------------------------------------------------------------

@dataclass
class PullbackComparison:
    length_deviation: float
    max_deviation: float
    worst_point: tuple[float, float, float]
    passed: bool
    reason: str = ""


def pullback_compare(S: StackelMatrix, S_t: StackelMatrix,
                     n_grid: tuple[int, int, int] = (40, 16, 16)) -> PullbackComparison:
    """Metric coefficients of the pair in the shared radial chart.

    Compares H1^2/s12, H2^2 and H3^2 at matched chart positions on a 3D
    grid; for an equivalent pair these agree pointwise even when the
    radial parametrizations differ.
    """
    from .funcspace import build_chart

    chart = build_chart(S.entry(1, 2))
    chart_t = build_chart(S_t.entry(1, 2))
    len_dev = abs(chart.length - chart_t.length) / (1.0 + chart.length)
    if len_dev > TOL_STRUCTURAL:
        return PullbackComparison(length_deviation=len_dev, max_deviation=np.inf,
                                  worst_point=(0, 0, 0), passed=False,
                                  reason="radial chart lengths differ")

    L = min(chart.length, chart_t.length)
    Xg = np.linspace(0.02 * L, 0.98 * L, n_grid[0])
    x2 = S.angular_grid(2, n_grid[1])
    x3 = S.angular_grid(3, n_grid[2])
    x1 = np.atleast_1d(chart.inverse(Xg))
    x1_t = np.atleast_1d(chart_t.inverse(Xg))

    md, md_t = MetricData(matrix=S), MetricData(matrix=S_t)
    X1, X2, X3 = np.ix_(x1, x2, x3)
    T1, _, _ = np.ix_(x1_t, x2, x3)

    s12 = S.entry(1, 2)(x1)[:, None, None]
    s12_t = S_t.entry(1, 2)(x1_t)[:, None, None]
    worst = 0.0
    worst_pt = (0.0, 0.0, 0.0)
    for name, a, b in (
        ("h1/s12", md.h_sq(1, X1, X2, X3) / s12, md_t.h_sq(1, T1, X2, X3) / s12_t),
        ("h2", md.h_sq(2, X1, X2, X3), md_t.h_sq(2, T1, X2, X3)),
        ("h3", md.h_sq(3, X1, X2, X3), md_t.h_sq(3, T1, X2, X3)),
    ):
        dev = np.abs(a - b) / (1.0 + np.abs(a))
        idx = np.unravel_index(int(np.argmax(dev)), dev.shape)
        if dev[idx] > worst:
            worst = float(dev[idx])
            worst_pt = (float(Xg[idx[0]]), float(x2[idx[1]]), float(x3[idx[2]]))
    passed = worst < TOL_STRUCTURAL
    return PullbackComparison(length_deviation=len_dev, max_deviation=worst,
                              worst_point=worst_pt, passed=passed,
                              reason="" if passed else "metric coefficients disagree")


# ---------------------------------------------------------------------------
# Full pipeline
# ---------------------------------------------------------------------------

@dataclass
class ComparisonReport:
    verdict: str                   # "equivalent" | "distinct"
    angular: AngularRecovery
    scattering: Optional[ScatteringComparison]
    radial: Optional[RadialRecovery]
    pullback: Optional[PullbackComparison]
    stage_failed: Optional[str]


def verify_pair(S: StackelMatrix, S_t: StackelMatrix, lam: float,
                r_max: float = 10.0) -> ComparisonReport:
    """The full comparison pipeline on two canonical-frame matrices."""
    ang = angular_recover(S, S_t)
    if not ang.passed:
        return ComparisonReport(verdict="distinct", angular=ang, scattering=None,
                                radial=None, pullback=None,
                                stage_failed="angular")
    aligned = ang.aligned
    factors = check_robertson(S)
    factors_t = check_robertson(aligned)

    scat = compare_scattering(S, aligned, lam, r_max,
                              factors=factors, factors_t=factors_t)
    if not scat.passed:
        return ComparisonReport(verdict="distinct", angular=ang, scattering=scat,
                                radial=None, pullback=None,
                                stage_failed="scattering")

    spec = coupled_solve(S, lam, r_max)
    nus = sorted({round(m.nu_sq, 9) for m in spec.modes})
    if len(nus) < 2:
        nu_values = (0.5, 1.5)
    else:
        nu_values = (nus[0], nus[1])
    rad = radial_recover(S, aligned, lam, nu_values,
                         factors=factors, factors_t=factors_t)
    if not rad.passed:
        return ComparisonReport(verdict="distinct", angular=ang, scattering=scat,
                                radial=rad, pullback=None,
                                stage_failed="radial")

    pb = pullback_compare(S, aligned)
    verdict = "equivalent" if pb.passed else "distinct"
    return ComparisonReport(verdict=verdict, angular=ang, scattering=scat,
                            radial=rad, pullback=pb,
                            stage_failed=None if pb.passed else "pullback")
