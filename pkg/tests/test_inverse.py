import numpy as np
import pytest

from torscat.funcspace import SmoothFn1D
from torscat.inverse import (
    angular_recover,
    compare_scattering,
    pullback_compare,
    radial_recover,
    verify_pair,
)
from torscat.presets import example2, example3, hyperbolic_template, with_radial_bump
from torscat.stackel import (
    apply_column_invariance,
    apply_first_column_shift,
    reparametrize_radial,
)

LAM = 1.3
TWO_PI = 2.0 * np.pi


def block_gauge(c):
    return np.array([[1.0 - c, -c], [c, 1.0 + c]])


def gauge_pair(S, c=0.1, shifts=(0.3, -0.2)):
    """Apply shifts then the inverse block gauge, so the recovery returns
    exactly (c, shifts): the fit reads the shift in the original columns."""
    St = apply_first_column_shift(S, shifts[1], shifts[0])
    return apply_column_invariance(St, block_gauge(-c))


# -- angular recovery ------------------------------------------------------------

def test_angular_recover_identity():
    S = example3()
    rec = angular_recover(S, S)
    assert rec.passed
    assert abs(rec.block_constant) < 1e-12
    assert max(abs(v) for v in rec.shift_constants) < 1e-10


def test_angular_recover_forward_inverse():
    S = example3()
    St = gauge_pair(S, c=0.1, shifts=(0.3, -0.2))
    rec = angular_recover(S, St)
    assert rec.passed
    assert abs(rec.block_constant - 0.1) < 1e-8
    assert abs(rec.shift_constants[0] - 0.3) < 1e-8
    assert abs(rec.shift_constants[1] + 0.2) < 1e-8


def test_angular_recover_detects_nonconstant_difference():
    S = example2()
    B = S.periods[0]
    pert = SmoothFn1D.from_callable(
        lambda x: 0.05 * np.sin(TWO_PI * x / B), (0.0, B),
        d1=lambda x: 0.05 * TWO_PI / B * np.cos(TWO_PI * x / B), periodic=True)
    rows = (S.rows[0],
            (S.rows[1][0], S.rows[1][1] + pert, S.rows[1][2] + pert),
            S.rows[2])
    St = S.with_rows(rows)   # keeps s23 - s22 = 1 but shifts the block
    rec = angular_recover(S, St)
    assert not rec.passed
    assert rec.block_constancy_residual > 1e-3 or not rec.s11_match


# -- radial recovery --------------------------------------------------------------

def test_radial_recover_equal_pair():
    S = example3()
    rec = radial_recover(S, S, LAM, (0.5, 1.5))
    assert rec.passed
    assert rec.potential_deviation < 1e-10
    assert rec.quotient_s13_s12_match
    assert rec.u_deviation < 1e-7
    assert rec.coefficient_positive


@pytest.mark.parametrize("make", [hyperbolic_template, example2, example3])
def test_reconstruction_coefficient_positive(make):
    S = make()
    rec = radial_recover(S, S, LAM, (0.6, 1.7))
    assert rec.coefficient_positive


def test_radial_recover_detects_bump():
    S = hyperbolic_template()
    St = with_radial_bump(S, 0.01)
    rec = radial_recover(S, St, LAM, (0.5, 1.5))
    assert not rec.passed
    assert rec.potential_deviation > 1e-3 * (LAM**2 + 1.0) * 0.01


# -- pullback ---------------------------------------------------------------------

def test_pullback_equal_pair():
    S = example3()
    res = pullback_compare(S, S)
    assert res.passed
    assert res.max_deviation < 1e-8


def test_pullback_after_radial_reparametrization():
    S = example2()
    w = np.pi
    St = reparametrize_radial(
        S, lambda y: y + (0.2 / w) * (1 - np.cos(w * y)),
        lambda y: 1.0 + 0.2 * np.sin(w * y), 2.0,
        d2phi=lambda y: 0.2 * w * np.cos(w * y),
        d3phi=lambda y: -0.2 * w**2 * np.sin(w * y))
    res = pullback_compare(S, St)
    assert res.passed, res.max_deviation


def test_pullback_localizes_bump():
    S = hyperbolic_template()
    center = 1.3
    St = with_radial_bump(S, 0.02, center=center, width=0.25)
    res = pullback_compare(S, St)
    assert not res.passed
    assert abs(res.worst_point[0] - center) < 0.45


# -- scattering comparison -----------------------------------------------------------

def test_compare_scattering_self_is_exact():
    S = hyperbolic_template()
    res = compare_scattering(S, S, LAM, r_max=6.0)
    assert res.passed
    assert res.max_deviation == 0.0


def test_compare_scattering_gauge_pair():
    S = example2()
    # pure first-column shift: an invariance of the metric
    St = apply_first_column_shift(S, 0.2, -0.15)
    rec = angular_recover(S, St)
    assert rec.passed
    res = compare_scattering(S, rec.aligned, LAM, r_max=6.0)
    assert res.passed
    assert res.max_deviation < 1e-6


def test_compare_scattering_bump_sensitivity():
    S = hyperbolic_template()
    St = with_radial_bump(S, 0.01)
    res = compare_scattering(S, St, LAM, r_max=6.0)
    assert not res.passed
    assert res.max_deviation > 1e-3


# -- full pipeline -----------------------------------------------------------------

def test_verify_pair_equivalent():
    S = example3()
    St = gauge_pair(S, c=0.05, shifts=(0.12, -0.07))
    report = verify_pair(S, St, LAM, r_max=6.0)
    assert report.verdict == "equivalent"
    assert report.scattering.max_deviation < 1e-6
    assert report.radial.u_deviation < 1e-6


def test_verify_pair_distinct():
    S = hyperbolic_template()
    St = with_radial_bump(S, 0.01)
    report = verify_pair(S, St, LAM, r_max=6.0)
    assert report.verdict == "distinct"
    assert report.stage_failed == "scattering"


def test_verify_deterministic():
    S = hyperbolic_template()
    St = with_radial_bump(S, 0.01)
    a = verify_pair(S, St, LAM, r_max=6.0)
    b = verify_pair(S, St, LAM, r_max=6.0)
    assert a.verdict == b.verdict
    assert a.scattering.max_deviation == b.scattering.max_deviation
