"""Acceptance suite: one test per criterion, one printed line each.

Run with `pytest tests/test_acceptance.py -v -s` to see the lines.
"""

import json
import time

import numpy as np
import pytest

from torscat.angular import count_in_cone, coupled_solve
from torscat.funcspace import SmoothFn1D, build_chart
from torscat.inverse import verify_pair
from torscat.presets import (
    example1,
    example2,
    example3,
    hyperbolic_template,
    with_radial_bump,
)
from torscat.radial import (
    EnergyContext,
    RadialPotential,
    asymptotics_check,
    build_potential,
    characteristic,
    characteristic_for_mode,
    scattering_entry,
    solve_fss,
    solve_left_pair,
)
from torscat.stackel import (
    MetricData,
    apply_column_invariance,
    apply_first_column_shift,
    condition_c_report,
    gauge_normalize,
    reparametrize_radial,
)

from oracles import bessel_s10, template_connection

LAM = 1.3


def report(num, name, passed, detail):
    line = f"{'PASS' if passed else 'FAIL'} criterion {num}: {name} ({detail})"
    print(line)
    assert passed, line


@pytest.fixture(scope="module")
def template_spectrum_r12():
    S = hyperbolic_template()
    return S, coupled_solve(S, LAM, r_max=12.0)


def fourier_lattice(r_max):
    out = []
    kl = int(np.sqrt(r_max / 0.5)) + 2
    for k in range(kl + 1):
        for l in range(kl + 1):
            if k == 0 and l == 0:
                continue
            mu2 = 1.5 * k**2 + 0.5 * l**2
            nu2 = 0.5 * k**2 + 1.5 * l**2
            if np.hypot(mu2, nu2) <= r_max:
                out.append((mu2, nu2, (2 if k else 1) * (2 if l else 1)))
    out.sort()
    return out


def test_criterion_1_gauge_invariance():
    t0 = time.time()
    S = example2()
    md = MetricData(matrix=S)
    x1 = S.radial_grid(10, depth=1e-4)
    x2 = S.angular_grid(2, 10)
    x3 = S.angular_grid(3, 10)
    X = np.ix_(x1, x2, x3)
    base = [md.h_sq(i, *X) for i in (1, 2, 3)]
    rng = np.random.default_rng(2024)
    worst = 0.0
    for _ in range(100):
        G = rng.normal(size=(2, 2))
        while abs(np.linalg.det(G)) < 0.2:
            G = rng.normal(size=(2, 2))
        c1, c2 = rng.uniform(-1.0, 1.0, 2)
        St = apply_first_column_shift(apply_column_invariance(S, G), c1, c2)
        md_t = MetricData(matrix=St)
        for i in (1, 2, 3):
            h = md_t.h_sq(i, *X)
            worst = max(worst, float(np.max(np.abs(h - base[i - 1])
                                            / np.abs(base[i - 1]))))
    dt = time.time() - t0
    report(1, "gauge invariance",
           worst < 1e-9 and dt < 10.0,
           f"max dev {worst:.2e}, {dt:.1f} s")


def test_criterion_2_normalization():
    t0 = time.time()
    rng = np.random.default_rng(7)
    presets = [example2(), example3(), example1(s12_amp=0.2, s13_amp=0.1)]
    ok = True
    for k in range(20):
        S = presets[k % len(presets)]
        G = rng.normal(size=(2, 2))
        while abs(np.linalg.det(G)) < 0.2:
            G = rng.normal(size=(2, 2))
        res = gauge_normalize(apply_column_invariance(S, G))
        rep = condition_c_report(res.matrix)
        ok &= rep["signs"] and rep["limits"]
        twice = gauge_normalize(res.matrix)
        ok &= twice.steps == ()
    dt = time.time() - t0
    report(2, "canonical-frame normalization",
           ok and dt < 5.0, f"20 scrambles, idempotent, {dt:.1f} s")


def test_criterion_3_angular_oracle():
    t0 = time.time()
    S = hyperbolic_template()
    spec = coupled_solve(S, LAM, r_max=20.0)
    oracle = fourier_lattice(20.0)
    dt = time.time() - t0
    ok = len(spec.modes) == len(oracle)
    worst = np.inf
    mult_ok = False
    if ok:
        worst = max(max(abs(m.mu_sq - a), abs(m.nu_sq - b))
                    for m, (a, b, _) in zip(spec.modes, oracle))
        mult_ok = all(m.multiplicity == mm
                      for m, (_, _, mm) in zip(spec.modes, oracle))
        ok = worst < 1e-8 and mult_ok and dt < 60.0
    report(3, "constant-coefficient spectrum lattice", ok,
           f"{len(spec.modes)} modes, max err {worst:.1e}, "
           f"multiplicities {'exact' if mult_ok else 'WRONG'}, {dt:.1f} s")


def test_criterion_4_cone_and_counting():
    S = hyperbolic_template()
    spec = coupled_solve(S, LAM, r_max=1600.0)
    cb = spec.cone
    pairs = spec.pairs()
    bounds_ok = bool(
        np.all(pairs[:, 1] <= cb.C2 * pairs[:, 0] + cb.D2 + 1e-7) and
        np.all(pairs[:, 1] >= cb.C1 * pairs[:, 0] + cb.D1 - 1e-7))
    pad = 0.02 * (cb.window[1] - cb.window[0])
    cone = (cb.window[0] + pad, cb.window[1] - pad)
    counts = [count_in_cone(S, spec, cone, r=r, n_samples=400_000, seed=1)
              for r in (10.0, 20.0, 40.0)]
    ratios = [c.ratio for c in counts]
    vary_ok = max(ratios) <= 1.5 * min(ratios)
    # the phase-space volume estimates the multiplicity-weighted count;
    # distinct pairs stay within its one-quarter floor
    factor_ok = all(c.symbol_ratio / 4.0 <= c.ratio_weighted <= 4.0 * c.symbol_ratio
                    for c in counts)
    floor_ok = all(c.count_weighted <= 4 * c.count for c in counts)
    report(4, "cone bounds and counting",
           bounds_ok and vary_ok and factor_ok and floor_ok,
           f"ratios {['%.3f' % r for r in ratios]}, "
           f"weighted vs volume {['%.2f' % (c.ratio_weighted / c.symbol_ratio) for c in counts]}")


def test_criterion_5_radial_oracle():
    # left half: the solver against the Gamma-normalized Bessel series
    lam, w2, L = LAM, 5.0, 1.2
    c = lam**2 + 0.25
    pot = RadialPotential(
        gauge="mu", chart=build_chart(SmoothFn1D.constant(1.0, (0.0, L))),
        lam=lam, base=SmoothFn1D(domain=(0.0, L),
                                 fn=lambda X: -c / np.atleast_1d(X)**2 + w2),
        linear=None)
    s10, _ = solve_left_pair(pot, 2.0, x_stop=1.05)
    om = np.sqrt(complex(2.0 + w2))
    dev_series = max(abs(s10.value(x) - bessel_s10(lam, om, x))
                     / abs(bessel_s10(lam, om, x))
                     for x in np.linspace(0.1, 1.0, 13))

    # both ends: Delta against the connection-coefficient closed form
    S = hyperbolic_template()
    pot_t = build_potential(S, "mu", LAM)
    dev_delta = 0.0
    for mu_sq, nu_sq in [(2.0, 3.0), (1.5, 0.5), (8.0, 8.0)]:
        chi = characteristic(solve_fss(pot_t.with_frozen(nu_sq), mu_sq))
        big, _ = template_connection(LAM, 2.0, mu_sq, nu_sq)
        dev_delta = max(dev_delta, abs(chi.delta_big - big) / abs(big))
    report(5, "radial oracles",
           dev_series < 1e-6 and dev_delta < 1e-6,
           f"series dev {dev_series:.1e}, connection dev {dev_delta:.1e}")


def test_criterion_6_wronskian_unitarity():
    en = EnergyContext.from_lambda(LAM)
    worst_w, worst_u = 0.0, 0.0
    for make in (hyperbolic_template, example1, example2, example3):
        S = make()
        spec = coupled_solve(S, LAM, r_max=10.0)
        pot = build_potential(S, "mu", LAM)
        for mode in spec.modes:
            fss = solve_fss(pot.with_frozen(mode.nu_sq), mode.mu_sq)
            pts = np.linspace(0.05 * pot.length, 0.95 * pot.length, 16)
            for a, b in (("s10", "s20"), ("s11", "s21")):
                w = np.array([fss.wronskian(a, b, x) for x in pts])
                worst_w = max(worst_w, float(np.max(np.abs(w - 1.0))))
            chi = characteristic(fss)
            if not chi.pole:
                worst_u = max(worst_u,
                              scattering_entry(chi, en).unitarity_residual)
    report(6, "Wronskian and unitarity suite",
           worst_w < 1e-8 and worst_u < 1e-6,
           f"max |W-1| {worst_w:.1e}, max unitarity residual {worst_u:.1e}")


def test_criterion_7_gauge_equality():
    worst = 0.0
    n_checked = 0
    for make in (hyperbolic_template,
                 lambda: example1(s12_amp=0.25, s13_amp=0.1),
                 example3):
        S = make()
        spec = coupled_solve(S, LAM, r_max=26.0)
        modes = spec.modes[:20]
        from torscat.stackel import check_robertson
        fac = check_robertson(S)
        pot_mu = build_potential(S, "mu", LAM, factors=fac)
        pot_nu = build_potential(S, "nu", LAM, factors=fac)
        for mode in modes:
            chi_mu = characteristic(solve_fss(
                pot_mu.with_frozen(mode.nu_sq), mode.mu_sq, ladder=False))
            chi_nu = characteristic(solve_fss(
                pot_nu.with_frozen(mode.mu_sq), mode.nu_sq, ladder=False))
            chi_om = characteristic_for_mode(
                S, LAM, mode.mu_sq, mode.nu_sq, gauge="omega", factors=fac,
                ladder=False)
            ref = abs(chi_mu.delta_big) + 1.0
            worst = max(worst,
                        abs(chi_nu.delta_big - chi_mu.delta_big) / ref,
                        abs(chi_om.delta_big - chi_mu.delta_big) / ref)
            n_checked += 1
    report(7, "gauge equality of characteristic functions",
           worst < 1e-6, f"{n_checked} modes, max rel dev {worst:.1e}")


def test_criterion_8_asymptotics():
    t0 = time.time()
    S = hyperbolic_template()
    rows = asymptotics_check(S, LAM, (20.0, 40.0, 80.0, 160.0))
    errs = [r.err_big for r in rows]
    dt = time.time() - t0
    ok = all(np.diff(errs) < 0.0) and errs[-1] < 0.05 and dt < 30.0
    report(8, "large-momentum asymptotics ladder", ok,
           "errors " + " > ".join(f"{e:.4f}" for e in errs) + f", {dt:.1f} s")


def test_criterion_9_uniqueness_end_to_end():
    t0 = time.time()
    S = example3()
    w = np.pi
    St = apply_first_column_shift(S, -0.07, 0.12)
    St = apply_column_invariance(St, np.array([[1.05, 0.05], [-0.05, 0.95]]))
    St = reparametrize_radial(
        St, lambda y: y + (0.15 / w) * (1 - np.cos(w * y)),
        lambda y: 1.0 + 0.15 * np.sin(w * y), 2.0,
        d2phi=lambda y: 0.15 * w * np.cos(w * y),
        d3phi=lambda y: -0.15 * w**2 * np.sin(w * y))
    rep_eq = verify_pair(S, St, LAM, r_max=10.0)

    Sb = hyperbolic_template()
    rep_neq = verify_pair(Sb, with_radial_bump(Sb, 1e-2), LAM, r_max=10.0)
    dt = time.time() - t0
    ok = (rep_eq.verdict == "equivalent"
          and rep_eq.scattering.max_deviation < 1e-6
          and rep_eq.radial.u_deviation < 1e-6
          and rep_neq.verdict == "distinct"
          and rep_neq.scattering is not None
          and rep_neq.scattering.max_deviation > 1e-3
          and dt < 300.0)
    report(9, "uniqueness end-to-end", ok,
           f"equivalent pair dev {rep_eq.scattering.max_deviation:.1e}, "
           f"u drift {rep_eq.radial.u_deviation:.1e}; "
           f"bump pair dev {rep_neq.scattering.max_deviation:.1e}, {dt:.0f} s")


def test_criterion_10_determinism(tmp_path):
    from torscat.cli import main
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({
        "schema": "torscat-config/1", "preset": "hyperbolic-template",
        "lambda": LAM, "eps0": 0.5, "eps1": 0.5}), encoding="utf-8")
    outs = []
    for name in ("o1", "o2"):
        out = tmp_path / name
        assert main(["spectrum", "--config", str(cfg), "--out-dir", str(out),
                     "--r-max", "4"]) == 0
        assert main(["scatter", "--config", str(cfg), "--out-dir", str(out),
                     "--r-max", "3", "--y-list", "20"]) == 0
        outs.append(out)
    same = all(
        (outs[0] / f).read_bytes() == (outs[1] / f).read_bytes()
        for f in ("spectrum.json", "scatter.jsonl", "asymptotics.csv"))
    report(10, "byte-identical reruns", same, "spectrum + scatter outputs")
