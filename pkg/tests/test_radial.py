import numpy as np
import pytest

from torscat.angular import coupled_solve
from torscat.funcspace import SmoothFn1D, build_chart
from torscat.presets import example3, hyperbolic_template
from torscat.radial import (
    AHStructureError,
    CharacteristicData,
    EnergyContext,
    RadialPotential,
    asymptotics_check,
    build_potential,
    cam_diagnostics,
    characteristic,
    characteristic_for_mode,
    scattering_entry,
    scattering_table,
    solve_fss,
)
from torscat.stackel import check_robertson, scale_radial_row, reparametrize_radial

from oracles import bessel_s10, template_connection

LAM = 1.3


@pytest.fixture(scope="module")
def template():
    return hyperbolic_template(A=2.0)


@pytest.fixture(scope="module")
def template_pot(template):
    return build_potential(template, "mu", LAM)


# -- energy context -------------------------------------------------------------

def test_omega_factors():
    en = EnergyContext.from_lambda(LAM)
    assert abs(abs(en.omega_plus) - abs(en.omega_minus)) < 1e-14
    assert abs(abs(en.prefactor) - 2.0 * LAM) < 1e-12


# -- potentials ------------------------------------------------------------------

def test_template_potential_singular_strength(template_pot):
    c = LAM**2 + 0.25
    X = np.geomspace(1e-6, 1e-4, 5) * template_pot.length
    assert np.max(np.abs(-np.real(template_pot.q(X)) * X**2 - c) / c) < 1e-4


def test_template_potential_closed_form(template_pot, template):
    # exact form: -(lam^2+1/4)(pi/A)^2/sin^2(pi X/A) - (pi/A)^2/4 + nu^2
    A = template.A
    k = np.pi / A
    nu_sq = 3.0
    pot = template_pot.with_frozen(nu_sq)
    X = np.linspace(0.15, A - 0.15, 9)
    exact = -(LAM**2 + 0.25) * k**2 / np.sin(k * X) ** 2 - k**2 / 4.0 + nu_sq
    assert np.max(np.abs(pot.q(X) - exact)) < 1e-8


def test_omega_gauge_unit_quotient(template):
    pot = build_potential(template, "omega", LAM, mode=(-9.0, -16.0))
    assert abs(pot.length - template.A) < 1e-10


def test_gauge_nu_equals_gauge_mu_for_equal_columns(template):
    pot_mu = build_potential(template, "mu", LAM)
    pot_nu = build_potential(template, "nu", LAM)
    X = np.linspace(0.2, 1.8, 7)
    assert np.max(np.abs(pot_mu.with_frozen(2.0).q(X)
                         - pot_nu.with_frozen(2.0).q(X))) < 1e-9


def test_endpoint_integrability_sums(template_pot):
    rep = template_pot.with_frozen(2.0).endpoint_integrability()
    for full, deep in rep.values():
        assert np.isfinite(full)
        # the deep half contributes a vanishing share: the weighted sum converges
        assert deep < 0.05 * (1.0 + full)


def test_omega_chart_weight_bounded():
    # the averaged weight stays between the two column weights pointwise
    S = example3()
    x = np.linspace(1e-3, S.A - 1e-3, 50)
    s12, s13 = S.entry(1, 2)(x), S.entry(1, 3)(x)
    lo = np.minimum(s12, s13)
    hi = np.maximum(s12, s13)
    for y, yp in [(1.0, 2.0), (5.0, 0.5), (3.0, 3.0)]:
        r = (y**2 * s12 + yp**2 * s13) / (y**2 + yp**2)
        assert np.all(r >= lo - 1e-12) and np.all(r <= hi + 1e-12)


def test_singular_strength_violation_detected():
    S = hyperbolic_template()
    bad = scale_radial_row(S, SmoothFn1D.constant(1.2, (0.0, S.A)))
    # uniform row scaling keeps f1/s12 but scales s11/s12 by 1.2
    with pytest.raises(AHStructureError):
        build_potential(bad, "mu", LAM)


# -- fundamental systems -----------------------------------------------------------

def test_bessel_oracle_s10():
    # potential exactly -(lam^2+1/4)/x^2 + w2 over the comparison window
    lam = LAM
    w2 = 5.0
    L = 1.2
    c = lam**2 + 0.25

    def qfn(X):
        X = np.atleast_1d(X)
        return -c / X**2 + w2

    pot = RadialPotential(
        gauge="mu", chart=build_chart(SmoothFn1D.constant(1.0, (0.0, L))),
        lam=lam, base=SmoothFn1D(domain=(0.0, L), fn=qfn), linear=None)
    mu_sq = 2.0
    from torscat.radial import solve_left_pair
    s10, s20 = solve_left_pair(pot, mu_sq, x_stop=1.05)
    om = np.sqrt(complex(mu_sq + w2))
    worst = 0.0
    for x in np.linspace(0.1, 1.0, 10):
        ref = bessel_s10(lam, om, x)
        worst = max(worst, abs(s10.value(x) - ref) / abs(ref))
    assert worst < 1e-7
    # normalization contract of the pair on the same case
    xm = 0.5
    w = s10.value(xm) * s20.deriv(xm) - s10.deriv(xm) * s20.value(xm)
    assert abs(w - 1.0) < 1e-9


def test_wronskian_normalization(template_pot):
    fss = solve_fss(template_pot.with_frozen(2.0), 3.0)
    pts = np.linspace(0.1, 1.9, 16)
    w0 = np.array([fss.wronskian("s10", "s20", x) for x in pts])
    w1 = np.array([fss.wronskian("s11", "s21", x) for x in pts])
    assert np.max(np.abs(w0 - 1.0)) < 1e-8
    assert np.max(np.abs(w1 - 1.0)) < 1e-8


def test_evenness_in_spectral_root(template_pot):
    mu = 1.7
    chi_p = characteristic(solve_fss(template_pot.with_frozen(2.0), (+mu) ** 2))
    chi_m = characteristic(solve_fss(template_pot.with_frozen(2.0), (-mu) ** 2))
    assert chi_p.delta_big == chi_m.delta_big
    assert chi_p.delta_small == chi_m.delta_small


# -- characteristic data -----------------------------------------------------------

def test_template_connection_oracle(template_pot):
    for (mu_sq, nu_sq) in [(2.0, 3.0), (1.5, 0.5), (6.0, 2.0)]:
        chi = characteristic(solve_fss(template_pot.with_frozen(nu_sq), mu_sq))
        big, small = template_connection(LAM, 2.0, mu_sq, nu_sq)
        assert abs(chi.delta_big - big) / abs(big) < 1e-6
        assert abs(chi.delta_small - small) / abs(small) < 1e-6
        assert chi.spread < 1e-7


def test_wronskian_constancy_across_points(template_pot):
    fss = solve_fss(template_pot.with_frozen(1.0), 2.5)
    vals = [fss.wronskian("s11", "s10", x) for x in np.linspace(0.3, 1.7, 5)]
    assert max(abs(v - vals[0]) for v in vals) < 1e-7 * (1.0 + abs(vals[0]))


def test_gauge_equality_of_characteristics():
    S = example3()
    fac = check_robertson(S)
    spec = coupled_solve(S, LAM, r_max=8.0)
    assert len(spec.modes) >= 3
    for mode in spec.modes[:3]:
        chis = {g: characteristic_for_mode(S, LAM, mode.mu_sq, mode.nu_sq,
                                           gauge=g, factors=fac)
                for g in ("mu", "nu", "omega")}
        ref = chis["mu"].delta_big
        for g in ("nu", "omega"):
            assert abs(chis[g].delta_big - ref) < 1e-6 * (1.0 + abs(ref))
            assert abs(chis[g].delta_small - chis["mu"].delta_small) \
                < 1e-6 * (1.0 + abs(chis["mu"].delta_small))


def test_solver_tolerance_stability(template_pot):
    pot = template_pot.with_frozen(2.0)
    a = characteristic(solve_fss(pot, 3.0, ladder=False))
    # double the endpoint offset: the characteristic data must be stable
    b = characteristic(solve_fss(pot, 3.0, eps_rel=2e-6, ladder=False))
    assert abs(a.delta_big - b.delta_big) < 1e-7 * (1.0 + abs(a.delta_big))


def test_pole_flag_blocks_scattering():
    chi = CharacteristicData(delta_big=0.0, delta_small=1.0, wt=None, pole=True,
                             spread=0.0, gauge="mu", spectral_sq=1.0,
                             frozen_sq=1.0)
    with pytest.raises(ValueError):
        scattering_entry(chi, EnergyContext.from_lambda(LAM))


# -- scattering -------------------------------------------------------------------

def test_unitarity_template(template):
    spec = coupled_solve(template, LAM, r_max=10.0)
    table = scattering_table(template, LAM, spec)
    assert len(table) == len(spec.modes)
    for row in table:
        assert row.smat is not None
        assert row.smat.unitarity_residual < 1e-6
        s = row.smat
        assert abs(abs(s.L) ** 2 + abs(s.T_L) ** 2 - 1.0) < 1e-6
        assert s.T_L == s.T_R


def test_transmission_against_oracle(template):
    en = EnergyContext.from_lambda(LAM)
    mu_sq, nu_sq = 2.0, 2.0
    chi = characteristic_for_mode(template, LAM, mu_sq, nu_sq, gauge="mu")
    smat = scattering_entry(chi, en)
    big, _ = template_connection(LAM, 2.0, mu_sq, nu_sq)
    assert abs(smat.T_L - en.prefactor / big) < 1e-6 * abs(smat.T_L)


# -- asymptotics -------------------------------------------------------------------

def test_asymptotics_ladder(template):
    rows = asymptotics_check(template, LAM, (20.0, 40.0, 80.0, 160.0))
    errs = [r.err_big for r in rows]
    assert all(np.diff(errs) < 0.0)
    assert errs[-1] < 0.05
    # the delta-small reference passes through zeros of cosh(omega A) on
    # this ray, so only boundedness is meaningful for it
    assert all(np.isfinite(r.err_small) for r in rows)


# -- complex momentum diagnostics -----------------------------------------------------

def test_cam_gauge_pair_vanishes(template):
    w = np.pi  # 2 pi / A with A = 2
    phi = lambda y: y + (0.25 / w) * (1 - np.cos(w * y))
    dphi = lambda y: 1.0 + 0.25 * np.sin(w * y)
    d2phi = lambda y: 0.25 * w * np.cos(w * y)
    d3phi = lambda y: -0.25 * w**2 * np.sin(w * y)
    S_t = reparametrize_radial(template, phi, dphi, 2.0,
                               d2phi=d2phi, d3phi=d3phi)
    rep = cam_diagnostics(template, S_t, LAM,
                          imag_values=(2.0, 5.0), ray_values=(0.5, 1.0, 1.5))
    assert rep.imag_axis_max < 1e-7


def test_cam_perturbed_pair_bounded(template):
    from torscat.presets import with_radial_bump
    S_t = with_radial_bump(template, 0.05)
    spec = coupled_solve(template, LAM, r_max=6.0)
    rep = cam_diagnostics(template, S_t, LAM,
                          imag_values=(2.0, 5.0, 9.0),
                          ray_values=(0.5, 1.0, 1.5, 2.0), spectrum=spec)
    assert rep.imag_axis_max < 10.0           # bounded on the imaginary axis
    assert rep.spectrum_max > 1e-7            # no vanishing on the spectrum
    assert np.isfinite(rep.growth_A) and np.isfinite(rep.growth_B)
    assert rep.growth_A > 0.0 and rep.growth_B > 0.0
