"""Singular radial problems, characteristic functions and scattering data.

In each of the three Liouville gauges the radial equation becomes a
Schrodinger problem on (0, A1) whose potential carries the universal
-(lam^2 + 1/4)/dist^2 singularity at both ends.  Fundamental systems are
fixed by power-law asymptotics at the ends, started a small offset away
with a two-term Frobenius expansion and integrated across in complex
arithmetic.  Wronskians of the end solutions give the characteristic
functions Delta, delta, the Weyl-Titchmarsh quotient M = -delta/Delta,
and through the energy factors the 2x2 partial scattering matrix of
each angular mode.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.integrate import solve_ivp
from scipy.special import gamma as cgamma

from .funcspace import LiouvilleChart, SmoothFn1D, build_chart, \
    compose_after_inverse, pushforward_potential_terms
from .stackel import RobertsonFactors, StackelMatrix, check_robertson


class AHStructureError(RuntimeError):
    """Endpoint singularity strength deviates from lam^2 + 1/4."""


class SingularIntegrationError(RuntimeError):
    """The endpoint-offset convergence ladder failed."""


TOL_POLE = 1e-8
TOL_UNITARITY = 1e-6


# ---------------------------------------------------------------------------
# Energy factors
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EnergyContext:
    lam: float
    omega_plus: complex
    omega_minus: complex

    @staticmethod
    def from_lambda(lam: float) -> "EnergyContext":
        if lam == 0.0:
            raise ValueError("the energy parameter must be nonzero")
        root = np.sqrt(2.0 * lam * np.sinh(np.pi * lam))
        return EnergyContext(
            lam=lam,
            omega_plus=complex(np.pi / (root * cgamma(1.0 - 1j * lam))),
            omega_minus=complex(np.pi / (root * cgamma(1.0 + 1j * lam))),
        )

    @property
    def prefactor(self) -> complex:
        """2 i lam omega_- / omega_+, the factor linking M, Delta to L, T, R."""
        return 2j * self.lam * self.omega_minus / self.omega_plus


# ---------------------------------------------------------------------------
# Radial potentials in the three gauges
# ---------------------------------------------------------------------------

GAUGES = ("mu", "nu", "omega")


@dataclass(frozen=True)
class RadialPotential:
    """q(X) = base(X) + frozen_sq * linear(X) on (0, length).

    gauge "mu": spectral parameter mu^2, frozen nu^2 (chart weight s12);
    gauge "nu": spectral nu^2, frozen mu^2 (chart weight s13);
    gauge "omega": spectral mu^2 + nu^2, momenta folded into the chart
    weight, no frozen term.
    """

    gauge: str
    chart: LiouvilleChart
    lam: float
    base: SmoothFn1D
    linear: Optional[SmoothFn1D]
    frozen_sq: complex = 0.0

    @property
    def length(self) -> float:
        return self.chart.length

    @property
    def coulomb_strength(self) -> float:
        return self.lam**2 + 0.25

    def q(self, X):
        X = np.atleast_1d(np.asarray(X, dtype=float))
        val = self.base(X).astype(complex)
        if self.linear is not None and self.frozen_sq != 0.0:
            val = val + self.frozen_sq * self.linear(X)
        return val

    def q_regular(self, X):
        """q with the end singularities subtracted (both ends)."""
        X = np.atleast_1d(np.asarray(X, dtype=float))
        c = self.coulomb_strength
        return self.q(X) + c / X**2 + c / (self.length - X) ** 2

    def with_frozen(self, frozen_sq) -> "RadialPotential":
        return RadialPotential(gauge=self.gauge, chart=self.chart, lam=self.lam,
                               base=self.base, linear=self.linear,
                               frozen_sq=frozen_sq)

    def verify_singular_strength(self, tol: float = 0.05):
        """Fit -q * dist^2 near each end against lam^2 + 1/4."""
        c = self.coulomb_strength
        for side in (0, 1):
            t = self.length * np.geomspace(1e-7, 1e-5, 7)
            X = t if side == 0 else self.length - t
            fit = np.real(-self.q(X)) * t**2
            dev = float(np.max(np.abs(fit - c))) / c
            if dev > tol:
                raise AHStructureError(
                    f"end {side}: singular strength off by {dev:.1%}")

    def endpoint_integrability(self, depth: float = 1e-6, n: int = 200):
        """Weighted grid sums of dist * |q - singular part| near each end.

        Converging partial sums on a geometric grid witness the
        integrability the end asymptotics require; returns the two half
        sums (full, deep-half) per end.
        """
        out = {}
        for side, label in ((0, "left"), (1, "right")):
            t = self.length * np.geomspace(depth, 0.4, n)
            X = t if side == 0 else self.length - t
            dt = np.diff(np.concatenate([[0.0], t]))
            vals = np.abs(self.q_regular(X)) * t * dt
            out[label] = (float(vals.sum()), float(vals[: n // 2].sum()))
        return out


def _gauge_weight(S: StackelMatrix, gauge: str, mode=None) -> SmoothFn1D:
    s12, s13 = S.entry(1, 2), S.entry(1, 3)
    if gauge == "mu":
        return s12
    if gauge == "nu":
        return s13
    if gauge == "omega":
        mu_sq, nu_sq = mode
        tot = mu_sq + nu_sq
        if tot == 0:
            raise ValueError("omega gauge needs mu^2 + nu^2 != 0")
        return (mu_sq / tot) * s12 + (nu_sq / tot) * s13
    raise ValueError(f"unknown gauge {gauge!r}")


def _graded_nodes(L: float, inner: float = 3e-6) -> np.ndarray:
    # the subtracted remainder is evaluated no deeper than `inner`: closer
    # to the ends the cancellation against the Coulomb terms leaves noise,
    # while the remainder itself is already flat there for this class
    left = L * np.geomspace(inner, 0.12, 240)
    mid = np.linspace(0.12 * L, 0.88 * L, 420)
    right = L - L * np.geomspace(inner, 0.12, 240)
    return np.unique(np.concatenate([left, mid[1:-1], np.sort(right)]))


def _fast_table(fn_vals: np.ndarray, nodes: np.ndarray, L: float) -> SmoothFn1D:
    from scipy.interpolate import CubicSpline
    spl = CubicSpline(nodes, fn_vals)
    lo, hi = nodes[0], nodes[-1]

    def fast(X):
        return spl(np.clip(np.asarray(X, dtype=float), lo, hi))

    return SmoothFn1D(domain=(0.0, L), fn=fast)


def build_potential(S: StackelMatrix, gauge: str, lam: float,
                    factors: Optional[RobertsonFactors] = None,
                    mode=None, verify: bool = True) -> RadialPotential:
    """Assemble the radial potential of one gauge.

    ``factors`` supplies f1 (extracted if omitted).  For the omega gauge
    ``mode = (mu_sq, nu_sq)`` fixes the averaged chart weight; for the
    mu / nu gauges the frozen momentum is attached per mode later via
    ``with_frozen``.

    The parameter-free part is tabulated once on a graded grid with the
    end singularities split off analytically; integrations then evaluate
    a spline instead of re-inverting the chart at every step.  Near the
    ends the tabulated remainder carries the cancellation noise of the
    subtraction, which is negligible against the exact singular terms.
    """
    if factors is None:
        factors = check_robertson(S)
    f1 = factors.f1
    s11 = S.entry(1, 1)
    w = _gauge_weight(S, gauge, mode)
    chart = build_chart(w)
    t1, t2 = pushforward_potential_terms(chart, f1 / w)
    main = compose_after_inverse(chart, s11 / w)

    L = chart.length
    c = lam**2 + 0.25
    nodes = _graded_nodes(L)
    raw = -(lam**2 + 1.0) * main(nodes) + t1(nodes) - t2(nodes)
    reg = raw + c / nodes**2 + c / (L - nodes) ** 2
    reg_spline = _fast_table(reg, nodes, L)

    def base_fn(X):
        X = np.atleast_1d(np.asarray(X, dtype=float))
        return -c / X**2 - c / (L - X) ** 2 + reg_spline(X)

    base = SmoothFn1D(domain=(0.0, L), fn=base_fn)
    linear = None
    if gauge in ("mu", "nu"):
        other = S.entry(1, 3) if gauge == "mu" else S.entry(1, 2)
        lin_vals = compose_after_inverse(chart, other / w)(nodes)
        linear = _fast_table(lin_vals, nodes, L)
    pot = RadialPotential(gauge=gauge, chart=chart, lam=lam, base=base,
                          linear=linear)
    if verify:
        pot.verify_singular_strength()
    return pot


# ---------------------------------------------------------------------------
# Fundamental systems
# ---------------------------------------------------------------------------

@dataclass
class _EndSolution:
    sol: object            # dense solve_ivp interpolant, state (u, u')

    def value(self, X):
        return self.sol(X)[0]

    def deriv(self, X):
        return self.sol(X)[1]


def _frobenius_state(dist, exponent, w):
    """(u, du/ddist) of dist^s (1 + c2 dist^2) with c2 from the local
    regular part w = q_reg(end) + spectral."""
    s = exponent
    c2 = w / ((s + 2.0) * (s + 1.0) - s * (s - 1.0))
    u = dist**s * (1.0 + c2 * dist**2)
    du = s * dist ** (s - 1.0) + c2 * (s + 2.0) * dist ** (s + 1.0)
    return u, du


@dataclass
class FundamentalSystem:
    """The four end-normalized solutions with first derivatives."""

    pot: RadialPotential
    spectral_sq: complex
    eps: float
    s10: _EndSolution
    s20: _EndSolution
    s11: _EndSolution
    s21: _EndSolution

    def wronskian(self, a: str, b: str, X):
        fa, fb = getattr(self, a), getattr(self, b)
        return fa.value(X) * fb.deriv(X) - fa.deriv(X) * fb.value(X)

    def wronskian_points(self, n: int = 5) -> np.ndarray:
        L = self.pot.length
        return np.linspace(0.35 * L, 0.65 * L, n)


def _integrate(pot: RadialPotential, z: complex, x0: float, x1: float, y0,
               rtol=1e-12, atol=1e-15):
    def rhs(x, y):
        return [y[1], (pot.q(x)[0] + z) * y[0]]

    sol = solve_ivp(rhs, (x0, x1), np.asarray(y0, dtype=complex),
                    method="DOP853", rtol=rtol, atol=atol, dense_output=True)
    if not sol.success:
        raise SingularIntegrationError(sol.message)
    return sol.sol


def _solve_from_ends(pot: RadialPotential, z: complex, eps: float):
    lam = pot.lam
    L = pot.length
    s_minus = 0.5 - 1j * lam
    s_plus = 0.5 + 1j * lam
    c = pot.coulomb_strength

    q0_left = complex(pot.q(eps)[0]) + c / eps**2
    q0_right = complex(pot.q(L - eps)[0]) + c / eps**2

    u, du = _frobenius_state(eps, s_minus, q0_left + z)
    s10 = _EndSolution(_integrate(pot, z, eps, L - eps, [u, du]))
    u, du = _frobenius_state(eps, s_plus, q0_left + z)
    s20 = _EndSolution(_integrate(pot, z, eps, L - eps,
                                  [u / (2j * lam), du / (2j * lam)]))
    u, du = _frobenius_state(eps, s_minus, q0_right + z)
    s11 = _EndSolution(_integrate(pot, z, L - eps, eps, [u, -du]))
    u, du = _frobenius_state(eps, s_plus, q0_right + z)
    s21 = _EndSolution(_integrate(pot, z, L - eps, eps,
                                  [-u / (2j * lam), du / (2j * lam)]))
    return s10, s20, s11, s21


def solve_left_pair(pot: RadialPotential, spectral_sq, eps_rel: float = 1e-6,
                    x_stop: Optional[float] = None):
    """S10, S20 alone, for reference potentials singular only at X = 0."""
    z = complex(spectral_sq)
    lam = pot.lam
    eps = eps_rel * pot.length
    x_stop = 0.99 * pot.length if x_stop is None else x_stop
    q0 = complex(pot.q(eps)[0]) + pot.coulomb_strength / eps**2
    u, du = _frobenius_state(eps, 0.5 - 1j * lam, q0 + z)
    s10 = _EndSolution(_integrate(pot, z, eps, x_stop, [u, du]))
    u, du = _frobenius_state(eps, 0.5 + 1j * lam, q0 + z)
    s20 = _EndSolution(_integrate(pot, z, eps, x_stop,
                                  [u / (2j * lam), du / (2j * lam)]))
    return s10, s20


def solve_fss(pot: RadialPotential, spectral_sq, eps_rel: float = 1e-6,
              ladder: bool = True, ladder_tol: float = 1e-7) -> FundamentalSystem:
    """Fundamental systems from both ends for one spectral value.

    Solutions start ``eps = eps_rel * length`` away from each end on the
    two-term Frobenius expansion; with ``ladder`` on, a restart from
    eps/4 must reproduce the characteristic Wronskians or the run
    aborts (the expansion would be under-resolved).
    """
    if pot.lam == 0.0:
        raise ValueError("end exponents coincide at lam = 0")
    z = complex(spectral_sq)
    eps = eps_rel * pot.length
    sols = _solve_from_ends(pot, z, eps)
    fss = FundamentalSystem(pot=pot, spectral_sq=z, eps=eps,
                            s10=sols[0], s20=sols[1], s11=sols[2], s21=sols[3])
    if ladder:
        fine = _solve_from_ends(pot, z, eps / 4.0)
        fss_fine = FundamentalSystem(pot=pot, spectral_sq=z, eps=eps / 4.0,
                                     s10=fine[0], s20=fine[1], s11=fine[2],
                                     s21=fine[3])
        xm = 0.5 * pot.length
        for name in ("s10", "s20", "s11", "s21"):
            a = getattr(fss, name).value(xm)
            b = getattr(fss_fine, name).value(xm)
            if abs(a - b) > ladder_tol * (1.0 + abs(b)):
                raise SingularIntegrationError(
                    f"offset ladder disagrees for {name}: |d| = {abs(a - b):.2e}")
        return fss_fine
    return fss


# ---------------------------------------------------------------------------
# Characteristic / Weyl-Titchmarsh data
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CharacteristicData:
    delta_big: complex          # W(S11, S10)
    delta_small: complex        # W(S11, S20)
    wt: Optional[complex]       # -delta_small / delta_big, None at poles
    pole: bool
    spread: float               # scatter of the Wronskians over the interval
    gauge: str
    spectral_sq: complex
    frozen_sq: complex


def characteristic(fss: FundamentalSystem) -> CharacteristicData:
    """Wronskians averaged over interior points; the spread is reported
    and poles of M are flagged instead of divided through."""
    pts = fss.wronskian_points()
    big = np.array([fss.wronskian("s11", "s10", x) for x in pts])
    small = np.array([fss.wronskian("s11", "s20", x) for x in pts])
    delta_big = complex(big.mean())
    delta_small = complex(small.mean())
    spread = float(max(np.abs(big - delta_big).max(),
                       np.abs(small - delta_small).max()))
    pole = abs(delta_big) < TOL_POLE * (abs(delta_small) + 1.0)
    wt = None if pole else -delta_small / delta_big
    return CharacteristicData(
        delta_big=delta_big, delta_small=delta_small, wt=wt, pole=pole,
        spread=spread, gauge=fss.pot.gauge, spectral_sq=fss.spectral_sq,
        frozen_sq=fss.pot.frozen_sq)


def characteristic_for_mode(S: StackelMatrix, lam: float, mu_sq, nu_sq,
                            gauge: str = "mu",
                            factors: Optional[RobertsonFactors] = None,
                            pot: Optional[RadialPotential] = None,
                            **fss_kw) -> CharacteristicData:
    """Delta, delta-small, M of one mode in the requested gauge."""
    if pot is None:
        mode = (mu_sq, nu_sq) if gauge == "omega" else None
        pot = build_potential(S, gauge, lam, factors=factors, mode=mode)
    if gauge == "mu":
        pot = pot.with_frozen(nu_sq)
        spectral = mu_sq
    elif gauge == "nu":
        pot = pot.with_frozen(mu_sq)
        spectral = nu_sq
    else:
        spectral = mu_sq + nu_sq
    return characteristic(solve_fss(pot, spectral, **fss_kw))


# ---------------------------------------------------------------------------
# Partial scattering matrices
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PartialScatteringMatrix:
    L: complex
    T_L: complex
    T_R: complex
    R: complex
    unitarity_residual: float
    flagged: bool

    @property
    def matrix(self) -> np.ndarray:
        return np.array([[self.L, self.T_R], [self.T_L, self.R]])


def scattering_entry(chi: CharacteristicData, energy: EnergyContext) -> PartialScatteringMatrix:
    """2x2 block {L, T; T, R} of one mode from its characteristic data.

    R comes from the unitarity-derived expression (conjugate ratio of
    Delta), so the residual check below exercises |L|^2 + |T|^2 = 1 and
    phase coherence rather than R's definition circularly.
    """
    if chi.pole:
        raise ValueError("mode flagged as a pole of the Weyl-Titchmarsh function")
    pref = energy.prefactor
    L = -pref * chi.wt
    T = pref / chi.delta_big
    R = pref * np.conj(chi.delta_big) / chi.delta_big * np.conj(chi.wt)
    mat = np.array([[L, T], [T, R]])
    resid = float(np.max(np.abs(mat @ mat.conj().T - np.eye(2))))
    return PartialScatteringMatrix(L=complex(L), T_L=complex(T), T_R=complex(T),
                                   R=complex(R), unitarity_residual=resid,
                                   flagged=resid > TOL_UNITARITY)


@dataclass(frozen=True)
class ModeScattering:
    index: int
    mu_sq: float
    nu_sq: float
    multiplicity: int
    chi: CharacteristicData
    smat: Optional[PartialScatteringMatrix]   # None when chi.pole


def scattering_table(S: StackelMatrix, lam: float, spectrum,
                     factors: Optional[RobertsonFactors] = None,
                     gauge: str = "mu", workers: int = 1,
                     **fss_kw) -> list:
    """Per-mode characteristic and scattering data for a spectrum."""
    if factors is None:
        factors = check_robertson(S)
    energy = EnergyContext.from_lambda(lam)
    mode_pot = None
    if gauge in ("mu", "nu"):
        mode_pot = build_potential(S, gauge, lam, factors=factors)

    def solve_one(mode):
        pot = mode_pot
        if gauge == "omega":
            pot = build_potential(S, gauge, lam, factors=factors,
                                  mode=(mode.mu_sq, mode.nu_sq))
        chi = characteristic_for_mode(S, lam, mode.mu_sq, mode.nu_sq,
                                      gauge=gauge, factors=factors, pot=pot,
                                      **fss_kw)
        smat = None if chi.pole else scattering_entry(chi, energy)
        return ModeScattering(index=mode.index, mu_sq=mode.mu_sq,
                              nu_sq=mode.nu_sq, multiplicity=mode.multiplicity,
                              chi=chi, smat=smat)

    modes = list(spectrum.modes)
    if workers > 1:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(max_workers=workers) as ex:
            out = list(ex.map(solve_one, modes))
    else:
        out = [solve_one(m) for m in modes]
    out.sort(key=lambda r: r.index)
    return out


# ---------------------------------------------------------------------------
# Large-momentum asymptotics along the imaginary axis
# ---------------------------------------------------------------------------

def asymptotic_reference(lam: float, length: float, y: float):
    """Closed-form large-|omega| forms of Delta and delta at omega = i y.

    Valid on the imaginary axis with y > 0 (the branch the diagnostics
    ladder uses): powers of omega are principal-branch.
    """
    om = 1j * y
    G = cgamma
    pref = G(1.0 - 1j * lam) ** 2 / (np.pi * 2.0 ** (2j * lam))
    delta_big = pref * om ** (2j * lam) * np.exp(lam * np.pi) \
        * 2.0 * np.cosh(om * length - lam * np.pi)
    delta_small = G(1.0 - 1j * lam) * G(1.0 + 1j * lam) / (2j * lam * np.pi) \
        * 2.0 * np.cosh(om * length)
    return complex(delta_big), complex(delta_small)


@dataclass(frozen=True)
class AsymptoticsRow:
    y: float
    ratio_big: complex
    ratio_small: complex
    err_big: float
    err_small: float


def asymptotics_check(S: StackelMatrix, lam: float, y_list: Sequence[float],
                      theta_sq: float = 1.0,
                      factors: Optional[RobertsonFactors] = None) -> list:
    """Computed / predicted characteristic functions along omega = i y.

    Uses the averaged (omega) gauge on the ray mu^2 = -y^2/(1+theta^2),
    nu^2 = theta^2 mu^2, where the chart weight is y-independent.
    """
    if factors is None:
        factors = check_robertson(S)
    share = 1.0 / (1.0 + theta_sq)
    pot = build_potential(S, "omega", lam, factors=factors,
                          mode=(share, theta_sq * share))
    out = []
    for y in y_list:
        chi = characteristic(solve_fss(pot, -float(y) ** 2))
        ref_big, ref_small = asymptotic_reference(lam, pot.length, float(y))
        rb = chi.delta_big / ref_big
        rs = chi.delta_small / ref_small
        out.append(AsymptoticsRow(y=float(y), ratio_big=complex(rb),
                                  ratio_small=complex(rs),
                                  err_big=abs(rb - 1.0), err_small=abs(rs - 1.0)))
    return out


# ---------------------------------------------------------------------------
# Complex-momentum growth diagnostics
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CamReport:
    imag_axis_max: float          # sup |psi| over the (i R)^2 samples
    bound_constant: float         # fitted C
    growth_A: float               # fitted exponential rates
    growth_B: float
    spectrum_max: Optional[float]  # max |psi| over supplied coupled pairs
    psi_samples: tuple


def _chi_pair(S, S_t, lam, factors, factors_t, pot, pot_t, mu, nu):
    mu_sq = mu * mu
    nu_sq = nu * nu
    a = characteristic(solve_fss(pot.with_frozen(nu_sq), mu_sq, ladder=False))
    b = characteristic(solve_fss(pot_t.with_frozen(nu_sq), mu_sq, ladder=False))
    psi = b.delta_big * a.delta_small - a.delta_big * b.delta_small
    return complex(psi)


def cam_diagnostics(S: StackelMatrix, S_t: StackelMatrix, lam: float,
                    imag_values: Sequence[float] = (2.0, 5.0, 9.0),
                    ray_values: Sequence[float] = (0.5, 1.0, 1.5, 2.0),
                    spectrum=None) -> CamReport:
    """psi = Delta~ delta - Delta delta~ on complex momentum samples.

    Boundedness is sampled on the imaginary axis, the exponential-type
    constants are fitted on real-part rays, and psi is evaluated on the
    shared coupled spectrum when one is supplied.
    """
    factors = check_robertson(S)
    factors_t = check_robertson(S_t)
    pot = build_potential(S, "mu", lam, factors=factors)
    pot_t = build_potential(S_t, "mu", lam, factors=factors_t)

    def psi_at(mu, nu):
        return _chi_pair(S, S_t, lam, factors, factors_t, pot, pot_t, mu, nu)

    samples = []
    imax = 0.0
    for y in imag_values:
        for yp in imag_values:
            v = psi_at(1j * y, 1j * yp)
            samples.append(((1j * y, 1j * yp), v))
            imax = max(imax, abs(v))

    rows, rhs = [], []
    for x in ray_values:
        for xp in ray_values:
            v = psi_at(x + 0.3j, xp + 0.3j)
            samples.append(((x + 0.3j, xp + 0.3j), v))
            if abs(v) > 0:
                rows.append([1.0, x, xp])
                rhs.append(np.log(abs(v)))
    if len(rows) >= 3:
        coef, *_ = np.linalg.lstsq(np.asarray(rows), np.asarray(rhs), rcond=None)
        logC, A, B = (float(c) for c in coef)
    else:
        logC, A, B = 0.0, 0.0, 0.0

    smax = None
    if spectrum is not None and len(spectrum.modes):
        vals = [abs(psi_at(np.sqrt(complex(m.mu_sq)), np.sqrt(complex(m.nu_sq))))
                for m in spectrum.modes]
        smax = float(max(vals))

    return CamReport(imag_axis_max=imax, bound_constant=float(np.exp(logC)),
                     growth_A=A, growth_B=B, spectrum_max=smax,
                     psi_samples=tuple(samples))
