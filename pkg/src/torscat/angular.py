"""Coupled spectrum of the two commuting angular operators.

The two separated angular equations are periodic Hill problems sharing
the pair of separation constants (mu^2, nu^2).  A pair belongs to the
coupled spectrum exactly when both Floquet discriminants vanish, i.e.
both equations admit a periodic solution.  The solver seeds candidate
pairs from the large-|mu| curve approximations and a coarse scan,
refines them with a damped two-dimensional Newton iteration on the
discriminant pair, and resolves double periodic eigenvalues (where the
discriminant vanishes quadratically) with a Gauss-Newton polish on the
monodromy entries, which vanish linearly there.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .funcspace import LiouvilleChart, PositivityError, SmoothFn1D, build_chart, \
    pushforward_potential_terms
from .stackel import StackelMatrix


class WindowError(ValueError):
    """theta^2 outside the admissible positivity window of a weight."""


class IntegrationAccuracyError(RuntimeError):
    """The monodromy integrator did not converge under step refinement."""


# ---------------------------------------------------------------------------
# Batched Hill monodromy
# ---------------------------------------------------------------------------

def _rk4_monodromy(V_half: np.ndarray, h: float) -> np.ndarray:
    """Monodromy of v'' = V(x) v over the sampled interval.

    V_half holds V on the half-step grid (2 n + 1 points) for a batch,
    shape (2n+1, nb).  Returns (nb, 2, 2) propagators.
    """
    nb = V_half.shape[1]
    n_steps = (V_half.shape[0] - 1) // 2
    M = np.zeros((nb, 2, 2))
    M[:, 0, 0] = 1.0
    M[:, 1, 1] = 1.0

    def amul(V, P):
        out = np.empty_like(P)
        out[:, 0, :] = P[:, 1, :]
        out[:, 1, :] = V[:, None] * P[:, 0, :]
        return out

    for k in range(n_steps):
        V0 = V_half[2 * k]
        Vm = V_half[2 * k + 1]
        V1 = V_half[2 * k + 2]
        k1 = amul(V0, M)
        k2 = amul(Vm, M + (0.5 * h) * k1)
        k3 = amul(Vm, M + (0.5 * h) * k2)
        k4 = amul(V1, M + h * k3)
        M = M + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return M


class _HillEquation:
    """One angular equation v'' = [a(x) + mu^2 b(x) + nu^2 c(x)] v on [0, L].

    Coefficient samples are cached per step count, so batched monodromy
    evaluations at many (mu^2, nu^2) pairs cost one matrix sweep each.
    """

    def __init__(self, a: SmoothFn1D, b: SmoothFn1D, c: SmoothFn1D, L: float):
        self.a, self.b, self.c, self.L = a, b, c, float(L)
        self._samples = {}

    def _coeffs(self, n_steps: int):
        if n_steps not in self._samples:
            xs = np.linspace(0.0, self.L, 2 * n_steps + 1)
            self._samples[n_steps] = (self.a(xs), self.b(xs), self.c(xs))
        return self._samples[n_steps]

    def _auto_steps(self, mu_sq, nu_sq) -> int:
        a, b, c = self._coeffs(64)
        V = (a[:, None] + np.multiply.outer(b, mu_sq) + np.multiply.outer(c, nu_sq))
        vmax = float(np.max(np.abs(V)))
        waves = self.L * np.sqrt(vmax) / (2.0 * np.pi)
        return int(max(1024, 2 ** int(np.ceil(np.log2(max(1.0, 48.0 * waves))))))

    def _propagate(self, mu_sq, nu_sq, n: int) -> np.ndarray:
        a, b, c = self._coeffs(n)
        V = a[:, None] + np.multiply.outer(b, mu_sq) + np.multiply.outer(c, nu_sq)
        return _rk4_monodromy(V, self.L / n)

    def monodromy(self, mu_sq, nu_sq, n_steps: Optional[int] = None,
                  refine: bool = False) -> np.ndarray:
        mu_sq = np.atleast_1d(np.asarray(mu_sq, dtype=float))
        nu_sq = np.atleast_1d(np.asarray(nu_sq, dtype=float))
        n = n_steps if n_steps is not None else self._auto_steps(mu_sq, nu_sq)
        M = self._propagate(mu_sq, nu_sq, n)
        if refine:
            # Richardson step removes the leading h^4 discretization bias,
            # which otherwise displaces double eigenvalues by ~1e-7
            M2 = self._propagate(mu_sq, nu_sq, 2 * n)
            M = M2 + (M2 - M) / 15.0
        return M

    def discriminant(self, mu_sq, nu_sq, n_steps: Optional[int] = None,
                     refine: bool = False) -> np.ndarray:
        M = self.monodromy(mu_sq, nu_sq, n_steps, refine=refine)
        return 2.0 - M[:, 0, 0] - M[:, 1, 1]

    def freq_scale(self, mu_sq, nu_sq) -> np.ndarray:
        """sqrt of the mean oscillation rate -V, floored at one."""
        a, b, c = self._coeffs(64)
        vbar = (a.mean() + np.asarray(mu_sq) * b.mean() + np.asarray(nu_sq) * c.mean())
        return np.sqrt(np.maximum(1.0, -vbar))


def hill_equations(S: StackelMatrix, lam: float) -> tuple[_HillEquation, _HillEquation]:
    """The pair of angular Hill equations of a matrix at energy lam."""
    pref = -(lam**2 + 1.0)
    eq2 = _HillEquation(pref * S.entry(2, 1), S.entry(2, 2), S.entry(2, 3), S.periods[0])
    eq3 = _HillEquation(pref * S.entry(3, 1), S.entry(3, 2), S.entry(3, 3), S.periods[1])
    return eq2, eq3


# ---------------------------------------------------------------------------
# Schrodinger form on the theta^2 window (chart-variable view)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AngularProblem:
    """One angular equation with its theta^2-dependent Liouville weight."""

    row: tuple
    period: float
    lam: float
    which: int  # 2 or 3

    @staticmethod
    def from_matrix(S: StackelMatrix, lam: float, which: int) -> "AngularProblem":
        return AngularProblem(row=S.rows[which - 1], period=S.periods[which - 2],
                              lam=lam, which=which)

    def weight(self, theta_sq: float) -> SmoothFn1D:
        _, s2, s3 = self.row
        return -(s2 + theta_sq * s3)

    def chart(self, theta_sq: float) -> LiouvilleChart:
        try:
            return build_chart(self.weight(theta_sq))
        except PositivityError as exc:
            raise WindowError(
                f"theta^2 = {theta_sq:.6g} outside the admissible window") from exc


def angular_schrodinger(problem: AngularProblem, theta_sq: float):
    """Schrodinger-form potential on [0, length(theta_sq)].

    Q(X) = -(lam^2+1) s_i1 / w + corrections(log w), with the weight
    w = -(s_i2 + theta^2 s_i3); the spectral parameter mu^2 sits on the
    right-hand side of the transformed equation.
    """
    chart = problem.chart(theta_sq)
    s1 = problem.row[0]
    w = chart.weight
    t1, t2 = pushforward_potential_terms(chart, w)

    def q_fn(X):
        x = np.atleast_1d(chart.inverse(X))
        base = -(problem.lam**2 + 1.0) * s1(x) / w(x)
        return base + t1(np.atleast_1d(X)) + t2(np.atleast_1d(X))

    Q = SmoothFn1D(domain=(0.0, chart.length), fn=q_fn)
    return Q, chart


def monodromy(problem: AngularProblem, mu_sq: float, theta_sq: float,
              n_steps: Optional[int] = None, tol: float = 1e-9) -> np.ndarray:
    """Endpoint data of the cosine/sine pair of the Schrodinger form.

    Integrates across [0, length] and verifies the unit Wronskian.
    """
    Q, chart = angular_schrodinger(problem, theta_sq)
    L = chart.length
    n = n_steps or 512

    def run(n):
        xs = np.linspace(0.0, L, 2 * n + 1)
        xs[0] = 1e-12 * L  # weights may vanish only at window edges
        V = (Q(xs) - mu_sq)[:, None]
        return _rk4_monodromy(V, L / n)[0]

    M = run(n)
    M2 = run(2 * n)
    if np.max(np.abs(M - M2)) > 1e-6 * (1.0 + np.max(np.abs(M2))):
        M, M2 = M2, run(4 * n)
    if abs(np.linalg.det(M2) - 1.0) > tol:
        raise IntegrationAccuracyError(
            f"monodromy determinant off by {abs(np.linalg.det(M2) - 1.0):.2e}")
    return M2


def periodicity_char(problem: AngularProblem, mu_sq: float, theta_sq: float,
                     n_steps: Optional[int] = None) -> float:
    """Floquet quantity 2 - W(C0,S1) - W(C1,S0) = 2 - tr(monodromy)."""
    M = monodromy(problem, mu_sq, theta_sq, n_steps)
    return float(2.0 - M[0, 0] - M[1, 1])


# ---------------------------------------------------------------------------
# Cone bounds and curve lengths
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ConeBounds:
    C1: float
    C2: float
    D1: float
    D2: float
    window: tuple[float, float]   # (max(-s32/s33), min(-s22/s23))


def cone_bounds(S: StackelMatrix, lam: float, n: int = 256) -> ConeBounds:
    x2 = S.angular_grid(2, n)
    x3 = S.angular_grid(3, n)
    s21, s22, s23 = (S.entry(2, j)(x2) for j in (1, 2, 3))
    s31, s32, s33 = (S.entry(3, j)(x3) for j in (1, 2, 3))
    C1 = float(np.min(-s32 / s33))
    C2 = float(-np.min(s22 / s23))
    D1 = (lam**2 + 1.0) * float(np.min(s31 / s33))
    D2 = -(lam**2 + 1.0) * float(np.min(-s21 / s23))
    window = (float(np.max(-s32 / s33)), float(np.min(-s22 / s23)))
    return ConeBounds(C1=C1, C2=C2, D1=D1, D2=D2, window=window)


class _CurveLengths:
    """tilde-B and tilde-C, the chart lengths of the two weights."""

    def __init__(self, S: StackelMatrix, n_nodes: int = 512):
        from numpy.polynomial.legendre import leggauss
        z, w = leggauss(32)
        B, C = S.periods
        panels = n_nodes // 32

        def nodes(period):
            edges = np.linspace(0.0, period, panels + 1)
            mid = 0.5 * (edges[:-1] + edges[1:])[:, None]
            half = 0.5 * (edges[1] - edges[0])
            return (mid + half * z[None, :]).ravel(), np.tile(w * half, panels)

        self.x2, self.w2 = nodes(B)
        self.x3, self.w3 = nodes(C)
        self.s22 = S.entry(2, 2)(self.x2)
        self.s23 = S.entry(2, 3)(self.x2)
        self.s32 = S.entry(3, 2)(self.x3)
        self.s33 = S.entry(3, 3)(self.x3)

    def tilde_B(self, theta_sq):
        theta_sq = np.atleast_1d(np.asarray(theta_sq, dtype=float))
        vals = np.clip(-(self.s22[:, None] + np.multiply.outer(self.s23, theta_sq)),
                       0.0, None)
        return np.sqrt(vals).T @ self.w2

    def tilde_C(self, theta_sq):
        theta_sq = np.atleast_1d(np.asarray(theta_sq, dtype=float))
        vals = np.clip(-(self.s32[:, None] + np.multiply.outer(self.s33, theta_sq)),
                       0.0, None)
        return np.sqrt(vals).T @ self.w3


def curve_lengths(S: StackelMatrix) -> _CurveLengths:
    return _CurveLengths(S)


# ---------------------------------------------------------------------------
# Coupled solve
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CoupledEigenvalue:
    mu_sq: float
    nu_sq: float
    multiplicity: int
    index: int

    @property
    def theta_sq(self) -> float:
        return self.nu_sq / self.mu_sq if self.mu_sq != 0.0 else np.inf

    @property
    def radius(self) -> float:
        return float(np.hypot(self.mu_sq, self.nu_sq))


@dataclass(frozen=True)
class SpectrumResult:
    modes: tuple
    cone: ConeBounds
    dropped_negative: int
    failed_cells: int
    lam: float
    r_max: float

    def pairs(self) -> np.ndarray:
        return np.array([[m.mu_sq, m.nu_sq] for m in self.modes]).reshape(-1, 2)


def _curve_intersection_seeds(S, cone, lengths, r_max):
    """Large-|mu| seeds where an m-curve of one equation meets a k-curve
    of the other, plus window-edge fallbacks for the lowest branches."""
    c1, c2 = cone.window
    # sample the full window: high branches intersect arbitrarily close to
    # the edges (e.g. pairs with one small index), and both chart lengths
    # stay integrable there
    eps = 1e-4 * (c2 - c1)
    lo, hi = c1 + eps, c2 - eps
    mid = np.linspace(c1 + 0.02 * (c2 - c1), c2 - 0.02 * (c2 - c1), 64)
    edges_lo = np.geomspace(eps, 0.02 * (c2 - c1), 32) + c1
    edges_hi = c2 - np.geomspace(eps, 0.02 * (c2 - c1), 32)
    thetas = np.unique(np.concatenate([mid, edges_lo, np.sort(edges_hi)]))
    tB = lengths.tilde_B(thetas)
    tC = lengths.tilde_C(thetas)
    two_pi = 2.0 * np.pi
    m_max = int(np.ceil(np.sqrt(r_max) * tB.max() / two_pi)) + 2
    k_max = int(np.ceil(np.sqrt(r_max) * tC.max() / two_pi)) + 2

    seeds = []
    for m in range(1, m_max + 1):
        for k in range(1, k_max + 1):
            # m * tC(theta) - k * tB(theta) is increasing in theta
            g = m * tC - k * tB
            if g[0] > 0.0 or g[-1] < 0.0:
                continue
            j = min(max(int(np.searchsorted(g, 0.0)), 1), len(thetas) - 1)
            t = thetas[j - 1] + (thetas[j] - thetas[j - 1]) * abs(g[j - 1]) / (
                abs(g[j - 1]) + abs(g[j]) + 1e-300)
            mu = two_pi * m / lengths.tilde_B(t)[0]
            if mu * mu * np.hypot(1.0, t) <= 1.3 * r_max:
                seeds.append((mu * mu, t * mu * mu))

    # boundary families: branches whose partner equation keeps its lowest
    # eigenvalue live on the shifted cone edges nu^2 = C1 mu^2 + D1 and
    # nu^2 = C2 mu^2 + D2; seed them exactly there
    tB_lo = lengths.tilde_B(cone.window[0])[0]
    tC_hi = lengths.tilde_C(cone.window[1])[0]
    for m in range(1, m_max + 1):
        mu2 = (two_pi * m / tB_lo) ** 2
        nu2 = cone.C1 * mu2 + cone.D1
        if np.hypot(mu2, nu2) <= 1.3 * r_max:
            seeds.append((mu2, nu2))
    for k in range(1, k_max + 1):
        mu2 = (two_pi * k / tC_hi) ** 2
        nu2 = cone.C2 * mu2 + cone.D2
        if np.hypot(mu2, nu2) <= 1.3 * r_max:
            seeds.append((mu2, nu2))
    return seeds


def _scan_seeds(eq2, eq3, cone, r_max, n_grid=56):
    """Coarse rectangle scan for the low modes the curves cannot see."""
    floor = min(0.0, cone.D1, cone.D2) - 1.0
    mu = np.linspace(max(floor, -2.0), r_max, n_grid)
    nu = np.linspace(max(floor, -2.0), r_max, n_grid)
    MU, NU = np.meshgrid(mu, nu, indexing="ij")
    pad = 1.0 + 0.1 * r_max
    mask = (NU <= cone.C2 * np.maximum(MU, 0.0) + cone.D2 + pad) & \
           (NU >= cone.C1 * np.maximum(MU, 0.0) + cone.D1 - pad) & \
           (np.hypot(MU, NU) <= 1.25 * r_max)
    pts = np.column_stack([MU[mask], NU[mask]])
    if len(pts) == 0:
        return []
    f2 = eq2.discriminant(pts[:, 0], pts[:, 1])
    f3 = eq3.discriminant(pts[:, 0], pts[:, 1])
    res = np.full(MU.shape, np.inf)
    res[mask] = np.abs(f2) + np.abs(f3)
    seeds = []
    for i in range(1, n_grid - 1):
        for j in range(1, n_grid - 1):
            v = res[i, j]
            if not np.isfinite(v):
                continue
            if v <= res[i - 1:i + 2, j - 1:j + 2].min() and v < 4.0:
                seeds.append((MU[i, j], NU[i, j]))
    return seeds


def _newton_refine(eq2, eq3, seeds: np.ndarray, max_iter=25):
    """Damped Newton on the discriminant pair, batched over all seeds.

    This stage only needs to localize candidates: near double periodic
    eigenvalues the discriminants vanish quadratically, so the
    finite-difference Jacobian saturates around parameter errors of the
    FD step size and the iteration stalls there.  The monodromy-entry
    polish afterwards restores full accuracy; candidates are therefore
    accepted on a loose residual here.
    """
    P = seeds.copy()
    nb = len(P)

    def F(pts):
        return np.column_stack([eq2.discriminant(pts[:, 0], pts[:, 1]),
                                eq3.discriminant(pts[:, 0], pts[:, 1])])

    res = np.abs(F(P)).sum(axis=1)
    for _ in range(max_iter):
        tol = 1e-10 * (1.0 + np.abs(P[:, 0]))
        if (res < tol).all():
            break
        f0 = F(P)
        res = np.abs(f0).sum(axis=1)
        h1 = 1e-6 * (1.0 + np.abs(P[:, 0]))
        h2 = 1e-6 * (1.0 + np.abs(P[:, 1]))
        fa = F(P + np.column_stack([h1, np.zeros(nb)]))
        fb = F(P + np.column_stack([np.zeros(nb), h2]))
        J = np.empty((nb, 2, 2))
        J[:, :, 0] = (fa - f0) / h1[:, None]
        J[:, :, 1] = (fb - f0) / h2[:, None]
        det = J[:, 0, 0] * J[:, 1, 1] - J[:, 0, 1] * J[:, 1, 0]
        det = np.where(np.abs(det) < 1e-300, 1e-300, det)
        step = np.empty_like(P)
        step[:, 0] = -(J[:, 1, 1] * f0[:, 0] - J[:, 0, 1] * f0[:, 1]) / det
        step[:, 1] = -(-J[:, 1, 0] * f0[:, 0] + J[:, 0, 0] * f0[:, 1]) / det
        # cap runaway steps and backtrack with damping factor 0.5
        norm = np.abs(step).max(axis=1)
        cap = 2.0 * (1.0 + np.abs(P).max(axis=1))
        step *= np.where(norm > cap, cap / np.maximum(norm, 1e-300), 1.0)[:, None]
        rho = np.ones(nb)
        best = P + step
        best_res = np.abs(F(best)).sum(axis=1)
        for _ in range(4):
            worse = best_res > res
            if not worse.any():
                break
            rho = np.where(worse, rho * 0.5, rho)
            trial = P + rho[:, None] * step
            tres = np.abs(F(trial)).sum(axis=1)
            upd = worse & (tres < best_res)
            best[upd] = trial[upd]
            best_res[upd] = tres[upd]
        moved = best_res <= res
        P[moved] = best[moved]
        res[moved] = best_res[moved]
    near = res < 1e-3 * (1.0 + np.abs(P[:, 0]))
    return P, near


_DEGEN_TOL = 1e-7


def _entry_residuals(eq, pts, sigma):
    """Residual rows that vanish linearly at periodic eigenvalues.

    Double eigenvalue: the full distance of the monodromy from the
    identity; simple eigenvalue: just the discriminant (rows 2-4 are
    zeroed by the caller through the mask).
    """
    M = eq.monodromy(pts[:, 0], pts[:, 1], refine=True)
    return np.column_stack([
        2.0 - M[:, 0, 0] - M[:, 1, 1],
        M[:, 0, 0] - M[:, 1, 1],
        M[:, 0, 1] * sigma,
        M[:, 1, 0] / sigma,
    ]), M


def _polish_degenerate(eq2, eq3, P):
    """Gauss-Newton on monodromy-entry residuals near double eigenvalues.

    Near a double periodic eigenvalue the discriminant vanishes
    quadratically and plain Newton stalls around sqrt(residual); the
    entries of M - I vanish linearly there and restore quadratic
    convergence, which the lattice-accuracy requirements need.
    """
    nb = len(P)
    sig2 = eq2.freq_scale(P[:, 0], P[:, 1])
    sig3 = eq3.freq_scale(P[:, 0], P[:, 1])

    def residual(pts):
        r2, M2 = _entry_residuals(eq2, pts, sig2)
        r3, M3 = _entry_residuals(eq3, pts, sig3)
        return np.concatenate([r2, r3], axis=1), M2, M3

    r0, M2, M3 = residual(P)
    deg2 = (np.abs(M2[:, 0, 1] * sig2) < 1e-3) & (np.abs(M2[:, 1, 0] / sig2) < 1e-3)
    deg3 = (np.abs(M3[:, 0, 1] * sig3) < 1e-3) & (np.abs(M3[:, 1, 0] / sig3) < 1e-3)
    mask = np.ones((nb, 8))
    mask[~deg2, 1:4] = 0.0
    mask[~deg3, 5:8] = 0.0

    X = P.copy()
    for _ in range(12):
        r0, _, _ = residual(X)
        r0 = r0 * mask
        h1 = 1e-7 * (1.0 + np.abs(X[:, 0]))
        h2 = 1e-7 * (1.0 + np.abs(X[:, 1]))
        ra, _, _ = residual(X + np.column_stack([h1, np.zeros(nb)]))
        rb, _, _ = residual(X + np.column_stack([np.zeros(nb), h2]))
        Ja = (ra * mask - r0) / h1[:, None]
        Jb = (rb * mask - r0) / h2[:, None]
        # normal equations of the 8x2 least-squares problem, batched
        a11 = np.einsum("ij,ij->i", Ja, Ja)
        a12 = np.einsum("ij,ij->i", Ja, Jb)
        a22 = np.einsum("ij,ij->i", Jb, Jb)
        g1 = np.einsum("ij,ij->i", Ja, r0)
        g2 = np.einsum("ij,ij->i", Jb, r0)
        det = a11 * a22 - a12 * a12
        det = np.where(np.abs(det) < 1e-300, 1e-300, det)
        d1 = -(a22 * g1 - a12 * g2) / det
        d2 = -(-a12 * g1 + a11 * g2) / det
        ok = np.isfinite(d1) & np.isfinite(d2)
        X[ok, 0] += d1[ok]
        X[ok, 1] += d2[ok]
        if max(np.abs(d1[ok]).max(initial=0.0), np.abs(d2[ok]).max(initial=0.0)) < 1e-13 * (
                1.0 + np.abs(X).max()):
            break

    # keep the polish wherever the true residuals stay acceptable; both
    # points can sit below the integrator noise floor, in which case the
    # entry-residual minimizer is the better root
    f_old = np.abs(eq2.discriminant(P[:, 0], P[:, 1], refine=True)) + \
        np.abs(eq3.discriminant(P[:, 0], P[:, 1], refine=True))
    f_new = np.abs(eq2.discriminant(X[:, 0], X[:, 1], refine=True)) + \
        np.abs(eq3.discriminant(X[:, 0], X[:, 1], refine=True))
    floor = 0.5e-10 * (1.0 + np.abs(X[:, 0]))
    good = np.isfinite(f_new) & (f_new <= np.maximum(10.0 * f_old, floor))
    out = P.copy()
    out[good] = X[good]
    return out


def _multiplicities(eq2, eq3, P):
    """Per-equation periodic-solution dimension (1 or 2), multiplied.

    Dimension two means the monodromy is the identity: both off-diagonal
    entries vanish.  They are compared in the balanced normalization
    (S0 * omega, C0' / omega) so one threshold works across the range.
    """
    mult = np.ones(len(P), dtype=int)
    for eq in (eq2, eq3):
        M = eq.monodromy(P[:, 0], P[:, 1], refine=True)
        om = eq.freq_scale(P[:, 0], P[:, 1])
        dim2 = (np.abs(M[:, 0, 1]) * om < _DEGEN_TOL) & \
               (np.abs(M[:, 1, 0]) / om < _DEGEN_TOL)
        mult *= np.where(dim2, 2, 1)
    return np.minimum(mult, 4)


def coupled_solve(S: StackelMatrix, lam: float, r_max: float,
                  extra_seeds: Optional[Sequence] = None) -> SpectrumResult:
    """All coupled pairs with ||(mu^2, nu^2)|| <= r_max, ordered.

    Ordering is mu^2 ascending with nu^2 breaking ties; pairs that agree
    within the cluster radius collapse into one entry whose multiplicity
    is the product of the per-equation periodic-solution dimensions.
    Pairs with min(mu^2, nu^2) < 0 are dropped and counted.
    """
    eq2, eq3 = hill_equations(S, lam)
    cone = cone_bounds(S, lam)
    lengths = _CurveLengths(S)

    seeds = _curve_intersection_seeds(S, cone, lengths, r_max)
    seeds += _scan_seeds(eq2, eq3, cone, r_max)
    if extra_seeds is not None:
        seeds += [tuple(s) for s in extra_seeds]
    if not seeds:
        return SpectrumResult(modes=(), cone=cone, dropped_negative=0,
                              failed_cells=0, lam=lam, r_max=r_max)
    seeds = np.array(sorted(set((round(a, 6), round(b, 6)) for a, b in seeds)))

    refined, near = _newton_refine(eq2, eq3, seeds)
    P = refined[near]
    if len(P) == 0:
        return SpectrumResult(modes=(), cone=cone, dropped_negative=0,
                              failed_cells=int((~near).sum()), lam=lam, r_max=r_max)

    P = _polish_degenerate(eq2, eq3, P)

    # final acceptance on the true residuals, after the polish; the
    # refined-minus-plain gap estimates the remaining discretization
    # floor, which grows with the mode frequency
    r2p = eq2.discriminant(P[:, 0], P[:, 1])
    r3p = eq3.discriminant(P[:, 0], P[:, 1])
    r2 = eq2.discriminant(P[:, 0], P[:, 1], refine=True)
    r3 = eq3.discriminant(P[:, 0], P[:, 1], refine=True)
    res = np.abs(r2) + np.abs(r3)
    floor = (np.abs(r2 - r2p) + np.abs(r3 - r3p)) / 4.0
    accepted = res < np.maximum(1e-10 * (1.0 + np.abs(P[:, 0])), floor)
    failed = int((~near).sum()) + int((~accepted).sum())
    P = P[accepted]
    # the constant harmonic (0, 0) carries no scattering content
    P = P[np.abs(P).sum(axis=1) > 1e-8]
    if len(P) == 0:
        return SpectrumResult(modes=(), cone=cone, dropped_negative=0,
                              failed_cells=failed, lam=lam, r_max=r_max)

    # dedup within the cluster radius
    order = np.lexsort((P[:, 1], P[:, 0]))
    P = P[order]
    keep = []
    for row in P:
        radius = 1e-4 * (1.0 + abs(row[0]))
        if keep and abs(row[0] - keep[-1][0]) < radius and abs(row[1] - keep[-1][1]) < radius:
            continue
        keep.append(row)
    P = np.array(keep)

    inside = np.hypot(P[:, 0], P[:, 1]) <= r_max * (1.0 + 1e-9)
    P = P[inside]
    dropped = int(np.sum(np.min(P, axis=1) < -1e-9))
    P = P[np.min(P, axis=1) >= -1e-9]
    if len(P) == 0:
        return SpectrumResult(modes=(), cone=cone, dropped_negative=dropped,
                              failed_cells=failed, lam=lam, r_max=r_max)

    mult = _multiplicities(eq2, eq3, P)
    order = np.lexsort((P[:, 1], P[:, 0]))
    modes = tuple(
        CoupledEigenvalue(mu_sq=float(P[i, 0]), nu_sq=float(P[i, 1]),
                          multiplicity=int(mult[i]), index=rank + 1)
        for rank, i in enumerate(order))
    return SpectrumResult(modes=modes, cone=cone, dropped_negative=dropped,
                          failed_cells=failed, lam=lam, r_max=r_max)


# ---------------------------------------------------------------------------
# Counting diagnostics
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ConeCount:
    r: float
    count: int               # distinct (|mu|, |nu|) pairs
    count_weighted: int      # counted with multiplicity (what the volume estimates)
    ratio: float             # n(r) / r^2
    ratio_weighted: float
    symbol_volume: float     # vol(p^{-1}(cone ∩ ball)) / (4 pi^2)
    symbol_ratio: float      # symbol_volume / r^2


def count_in_cone(S: StackelMatrix, spectrum: SpectrumResult,
                  cone: tuple[float, float], r: float,
                  n_samples: int = 200_000, seed: int = 0) -> ConeCount:
    """Counting function against the Monte-Carlo phase-space volume.

    Counts distinct (|mu|, |nu|) points of the spectrum inside the cone
    and the ball of radius r, and integrates the volume of the region
    where the principal-symbol pair lands in the same set.
    """
    t_lo, t_hi = cone
    if t_lo > t_hi:
        return ConeCount(r=r, count=0, count_weighted=0, ratio=0.0,
                         ratio_weighted=0.0, symbol_volume=0.0, symbol_ratio=0.0)

    pts = spectrum.pairs()
    count = 0
    count_weighted = 0
    if len(pts):
        mu_sq, nu_sq = pts[:, 0], pts[:, 1]
        ok = (mu_sq > 0) & (nu_sq >= t_lo * mu_sq) & (nu_sq <= t_hi * mu_sq) \
            & (mu_sq + nu_sq <= r * r)
        count = int(ok.sum())
        mults = np.array([m.multiplicity for m in spectrum.modes])
        count_weighted = int(mults[ok].sum())

    rng = np.random.default_rng(seed)
    B, C = S.periods
    x2 = rng.uniform(0.0, B, n_samples)
    x3 = rng.uniform(0.0, C, n_samples)
    s22, s23 = S.entry(2, 2)(x2), S.entry(2, 3)(x2)
    s32, s33 = S.entry(3, 2)(x3), S.entry(3, 3)(x3)
    m11 = s22 * s33 - s23 * s32
    W = r * np.sqrt(np.max(m11))
    xi2 = rng.uniform(-W, W, n_samples)
    xi3 = rng.uniform(-W, W, n_samples)
    p1_sq = (-s33 * xi2**2 + s23 * xi3**2) / m11    # pairs with |nu|
    p2_sq = (s32 * xi2**2 - s22 * xi3**2) / m11     # pairs with |mu|
    inside = (p1_sq >= t_lo * p2_sq) & (p1_sq <= t_hi * p2_sq) & \
        (p1_sq + p2_sq <= r * r)
    vol = B * C * (2.0 * W) ** 2 * float(inside.mean()) / (4.0 * np.pi**2)
    return ConeCount(r=r, count=count, count_weighted=count_weighted,
                     ratio=count / r**2, ratio_weighted=count_weighted / r**2,
                     symbol_volume=vol, symbol_ratio=vol / r**2)


def curve_separation(S: StackelMatrix, theta_window: tuple[float, float],
                     m_range: tuple[int, int], n_theta: int = 33) -> float:
    """Empirical gap between successive branch curves over a window.

    Checks the monotonicity of the two chart lengths first (decreasing
    tilde-B, increasing tilde-C) and then minimizes the combined
    |mu| + |nu| jump over sampled angle pairs.
    """
    lengths = _CurveLengths(S)
    t = np.linspace(theta_window[0], theta_window[1], n_theta)
    tB = lengths.tilde_B(t)
    tC = lengths.tilde_C(t)
    if np.any(np.diff(tB) >= 0):
        raise WindowError("tilde-B is not strictly decreasing on the window")
    if np.any(np.diff(tC) <= 0):
        raise WindowError("tilde-C is not strictly increasing on the window")

    two_pi = 2.0 * np.pi
    h = np.inf
    th = np.sqrt(t)
    for m in range(m_range[0], m_range[1] + 1):
        mu_m = two_pi * m / tB
        mu_m1 = two_pi * (m + 1) / tB
        dmu = np.abs(mu_m1[None, :] - mu_m[:, None])
        dnu = np.abs(th[None, :] * mu_m1[None, :] - th[:, None] * mu_m[:, None])
        h = min(h, float((dmu + dnu).min()))
    return h
