import numpy as np
import pytest

from torscat.angular import (
    AngularProblem,
    WindowError,
    angular_schrodinger,
    cone_bounds,
    count_in_cone,
    coupled_solve,
    curve_lengths,
    curve_separation,
    hill_equations,
    monodromy,
    periodicity_char,
)
from torscat.funcspace import SmoothFn1D
from torscat.presets import example1, example2, example3, hyperbolic_template

TWO_PI = 2.0 * np.pi


def const_problem(vals, period, lam=1.0):
    row = tuple(SmoothFn1D.constant(v, (0.0, period), periodic=True) for v in vals)
    return AngularProblem(row=row, period=period, lam=lam, which=2)


def fourier_lattice(r_max):
    """Coupled spectrum of the constant preset: Fourier diagonalization."""
    out = []
    kl_max = int(np.sqrt(r_max / 0.5)) + 2
    for k in range(kl_max + 1):
        for l in range(kl_max + 1):
            if k == 0 and l == 0:
                continue
            mu2 = 1.5 * k**2 + 0.5 * l**2
            nu2 = 0.5 * k**2 + 1.5 * l**2
            if np.hypot(mu2, nu2) <= r_max:
                mult = (2 if k > 0 else 1) * (2 if l > 0 else 1)
                out.append((mu2, nu2, mult))
    out.sort()
    return out


# -- Schrodinger form ---------------------------------------------------------

def test_angular_schrodinger_constant_row():
    prob = const_problem((0.0, -0.75, 0.25), TWO_PI, lam=1.3)
    for theta_sq in (0.5, 1.0, 2.5):
        Q, chart = angular_schrodinger(prob, theta_sq)
        assert abs(chart.length - TWO_PI * np.sqrt(0.75 - 0.25 * theta_sq)) < 1e-9
        X = np.linspace(0.05, chart.length - 0.05, 9)
        assert np.max(np.abs(Q(X))) < 1e-9


def test_angular_schrodinger_lambda_drops_out():
    row3 = (0.0, 0.25, -0.75)
    for lam in (0.7, 2.1):
        prob = AngularProblem(
            row=tuple(SmoothFn1D.constant(v, (0.0, TWO_PI), periodic=True) for v in row3),
            period=TWO_PI, lam=lam, which=3)
        theta_sq = 1.2
        Q, chart = angular_schrodinger(prob, theta_sq)
        assert abs(chart.length - TWO_PI * np.sqrt(-0.25 + 0.75 * theta_sq)) < 1e-9
        assert np.max(np.abs(Q(np.linspace(0.1, chart.length - 0.1, 7)))) < 1e-9


def test_window_error_outside():
    prob = const_problem((0.0, -0.75, 0.25), TWO_PI)
    with pytest.raises(WindowError):
        prob.chart(4.0)  # weight 0.75 - 0.25*4 <= 0


# -- monodromy ----------------------------------------------------------------

def test_monodromy_rotation():
    prob = const_problem((0.0, -1.0, 0.0), np.pi)
    M = monodromy(prob, mu_sq=1.0, theta_sq=0.3)
    assert abs(M[0, 0] + 1.0) < 1e-9
    assert abs(M[0, 1]) < 1e-9


def test_monodromy_periodic_eigenvalue():
    prob = const_problem((0.0, -1.0, 0.0), np.pi)
    M = monodromy(prob, mu_sq=4.0, theta_sq=0.3)
    assert abs(M[0, 0] - 1.0) < 1e-9
    assert abs(M[0, 0] + M[1, 1] - 2.0) < 1e-9


def test_monodromy_constant_potential_trace():
    # Q = -(lam^2+1) s21 / w = c with w = 1
    lam, c = 1.0, 0.8
    prob = const_problem((-c / (lam**2 + 1.0), -1.0, 0.0), 1.7, lam=lam)
    for mu_sq in (2.0, 5.0, 11.0):
        M = monodromy(prob, mu_sq=mu_sq, theta_sq=0.2)
        expected = 2.0 * np.cos(np.sqrt(mu_sq - c) * 1.7)
        assert abs(M[0, 0] + M[1, 1] - expected) < 1e-8


def test_periodicity_char_zero_potential():
    prob = const_problem((0.0, -1.0, 0.0), TWO_PI)
    assert abs(periodicity_char(prob, 1.0, 0.4)) < 1e-9
    assert abs(periodicity_char(prob, 0.25, 0.4) - 4.0) < 1e-9


def test_discriminant_invariant_under_chart():
    # x-variable Hill trace equals the Schrodinger-form trace
    S = example2()
    lam = 1.1
    eq2, _ = hill_equations(S, lam)
    prob = AngularProblem.from_matrix(S, lam, 2)
    mu_sq, nu_sq = 3.1, 4.0
    d_x = float(eq2.discriminant([mu_sq], [nu_sq])[0])
    d_X = periodicity_char(prob, mu_sq, nu_sq / mu_sq)
    assert abs(d_x - d_X) < 2e-7 * (1.0 + abs(d_x))


def test_wronskian_conserved_along_interval():
    S = example2()
    eq2, _ = hill_equations(S, 1.1)
    from torscat.angular import _HillEquation
    for frac in np.linspace(1.0 / 16.0, 1.0, 16):
        part = _HillEquation(eq2.a, eq2.b, eq2.c, frac * eq2.L)
        M = part.monodromy([7.3], [9.2])[0]
        assert abs(np.linalg.det(M) - 1.0) < 1e-9


def test_discriminant_step_refinement_consistency():
    S = example3()
    eq2, _ = hill_equations(S, 1.3)
    n = eq2._auto_steps(np.array([5.0]), np.array([3.0]))
    d1 = eq2.discriminant([5.0], [3.0], n_steps=n)[0]
    d2 = eq2.discriminant([5.0], [3.0], n_steps=2 * n)[0]
    assert abs(d1 - d2) < 1e-9 * (1.0 + abs(d2))


# -- cone bounds ----------------------------------------------------------------

def test_cone_bounds_constant_preset():
    cb = cone_bounds(hyperbolic_template(), lam=1.3)
    assert abs(cb.C1 - 1.0 / 3.0) < 1e-12
    assert abs(cb.C2 - 3.0) < 1e-12
    assert cb.D1 == 0.0 and cb.D2 == 0.0
    assert cb.window == (pytest.approx(1.0 / 3.0), pytest.approx(3.0))


@pytest.mark.parametrize("make", [hyperbolic_template, example1, example2, example3])
def test_cone_bounds_ordering(make):
    cb = cone_bounds(make(), lam=1.0)
    assert 0.0 < cb.C1 < cb.C2
    assert cb.C1 <= cb.window[0] < cb.window[1] <= cb.C2


# -- coupled solve ---------------------------------------------------------------

def test_fourier_point_zeroes_both_discriminants():
    S = hyperbolic_template()
    eq2, eq3 = hill_equations(S, lam=0.9)
    assert abs(eq2.discriminant([1.5], [0.5])[0]) < 1e-9
    assert abs(eq3.discriminant([1.5], [0.5])[0]) < 1e-9


def test_coupled_solve_matches_fourier_lattice():
    S = hyperbolic_template()
    spec = coupled_solve(S, lam=1.3, r_max=12.0)
    oracle = fourier_lattice(12.0)
    assert len(spec.modes) == len(oracle)
    for mode, (mu2, nu2, mult) in zip(spec.modes, oracle):
        assert abs(mode.mu_sq - mu2) < 1e-8
        assert abs(mode.nu_sq - nu2) < 1e-8
        assert mode.multiplicity == mult


def test_coupled_solve_ordering_and_cone():
    S = hyperbolic_template()
    lam = 1.3
    spec = coupled_solve(S, lam=lam, r_max=12.0)
    pairs = spec.pairs()
    assert np.all(np.diff(pairs[:, 0]) > -1e-12)
    cb = spec.cone
    assert np.all(pairs[:, 1] <= cb.C2 * pairs[:, 0] + cb.D2 + 1e-7)
    assert np.all(pairs[:, 1] >= cb.C1 * pairs[:, 0] + cb.D1 - 1e-7)


def test_coupled_solve_residuals_small():
    S = example3()
    spec = coupled_solve(S, lam=1.3, r_max=8.0)
    assert len(spec.modes) > 0
    eq2, eq3 = hill_equations(S, 1.3)
    P = spec.pairs()
    d2 = eq2.discriminant(P[:, 0], P[:, 1])
    d3 = eq3.discriminant(P[:, 0], P[:, 1])
    assert np.max(np.abs(d2)) < 1e-7
    assert np.max(np.abs(d3)) < 1e-7


def test_coupled_solve_empty_below_first_mode():
    S = hyperbolic_template()
    spec = coupled_solve(S, lam=1.3, r_max=1.0)
    assert len(spec.modes) == 0


def test_cone_boundary_saturation():
    # the (k, 0) family sits exactly on nu^2 = C1 mu^2 for the constant preset
    S = hyperbolic_template()
    spec = coupled_solve(S, lam=1.3, r_max=12.0)
    cb = spec.cone
    on_boundary = [m for m in spec.modes
                   if abs(m.nu_sq - cb.C1 * m.mu_sq) < 1e-7]
    assert len(on_boundary) >= 2


# -- counting ---------------------------------------------------------------------

def test_count_empty_cone():
    S = hyperbolic_template()
    spec = coupled_solve(S, lam=1.3, r_max=6.0)
    res = count_in_cone(S, spec, cone=(3.0, 1.0), r=5.0, n_samples=1000)
    assert res.count == 0


def test_count_growth_and_symbol_volume():
    S = hyperbolic_template()
    spec = coupled_solve(S, lam=1.3, r_max=75.0)
    cone = (0.34, 2.9)
    c1 = count_in_cone(S, spec, cone, r=4.1, n_samples=400_000, seed=3)
    c2 = count_in_cone(S, spec, cone, r=8.2, n_samples=400_000, seed=3)
    assert c1.count > 0
    growth = c2.count / c1.count
    assert 4.0 / 1.5 <= growth <= 4.0 * 1.5
    for c in (c1, c2):
        # the volume integral estimates the multiplicity-weighted count;
        # distinct pairs stay within the one-quarter floor of it
        assert c.symbol_ratio / 4.0 <= c.ratio_weighted <= c.symbol_ratio * 4.0
        assert c.count_weighted <= 4 * c.count


# -- curve separation ---------------------------------------------------------------

def test_curve_separation_positive_presets():
    for make in (hyperbolic_template, example2, example3):
        S = make()
        cb = cone_bounds(S, 1.0)
        lo = cb.window[0] + 0.1 * (cb.window[1] - cb.window[0])
        hi = cb.window[1] - 0.1 * (cb.window[1] - cb.window[0])
        h = curve_separation(S, (lo, hi), (1, 4))
        assert h > 0.0


def test_curve_separation_single_theta_spacing():
    S = hyperbolic_template()
    theta_sq = 1.0
    lengths = curve_lengths(S)
    tb = lengths.tilde_B(theta_sq)[0]
    h = curve_separation(S, (theta_sq, theta_sq + 1e-12), (2, 2), n_theta=2)
    expected = (1.0 + np.sqrt(theta_sq)) * TWO_PI / tb
    assert abs(h - expected) < 1e-4 * expected
