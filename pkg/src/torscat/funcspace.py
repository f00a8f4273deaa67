"""One-dimensional coefficient functions and Liouville chart machinery.

Everything downstream (metric assembly, separated angular equations, the
radial Schrodinger problems) is built from smooth functions of a single
variable carrying two derivatives, and from the change of variables
``X = integral of sqrt(weight)`` that turns a separated ODE into
Schrodinger form.  Functions combine with the usual arithmetic so that
derived quantities (quotients of matrix entries, Robertson factors)
keep analytic derivatives; a Richardson-extrapolated finite-difference
fallback covers anything supplied without them.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.interpolate import CubicSpline


class DomainError(ValueError):
    """Point outside the domain of a function or chart."""


class PositivityError(ValueError):
    """A quantity required to be strictly positive was not."""


class AccuracyError(RuntimeError):
    """A quadrature or integration tolerance could not be met."""


# Default tolerances; the CLI may override some of them per run.
TOL_INV = 1e-10       # forward/inverse chart round trip
TOL_QUAD = 1e-10      # relative tolerance of chart quadrature
TOL_PERIODIC = 1e-8   # endpoint match of periodic functions


def _fd_first(f: Callable, x, h):
    return (f(x + h) - f(x - h)) / (2.0 * h)


def _fd_second(f: Callable, x, h):
    return (f(x + h) - 2.0 * f(x) + f(x - h)) / (h * h)


@dataclass(frozen=True)
class SmoothFn1D:
    """A scalar function on a closed interval with up to two derivatives.

    ``fn`` must accept numpy arrays.  ``d1``/``d2`` are optional analytic
    derivatives; when absent, derivatives fall back to centered finite
    differences with Richardson extrapolation (step shrunk near the
    domain ends so the stencil stays inside).
    """

    domain: tuple[float, float]
    fn: Callable
    d1: Optional[Callable] = None
    d2: Optional[Callable] = None
    periodic: bool = False
    period: Optional[float] = None

    # -- evaluation ------------------------------------------------------

    def _check_domain(self, x):
        a, b = self.domain
        x = np.asarray(x, dtype=float)
        pad = 1e-12 * (b - a)
        if np.any(x < a - pad) or np.any(x > b + pad):
            bad = x[(x < a - pad) | (x > b + pad)]
            raise DomainError(f"point {np.atleast_1d(bad)[0]!r} outside domain [{a}, {b}]")
        return x

    def __call__(self, x):
        return self.fn(self._check_domain(x))

    def deriv(self, x, order: int = 1):
        x = self._check_domain(x)
        if order == 0:
            return self.fn(x)
        if order == 1 and self.d1 is not None:
            return self.d1(x)
        if order == 2 and self.d2 is not None:
            return self.d2(x)
        if order > 2:
            raise ValueError("only derivatives up to order 2 are provided")
        return self._fd_deriv(x, order)

    def _fd_deriv(self, x, order: int):
        a, b = self.domain
        h = np.maximum(1e-5, 1e-4 * np.abs(x))
        # keep the widest stencil (step h) inside the domain
        room = np.minimum(x - a, b - x)
        h = np.where(room > 0, np.minimum(h, 0.45 * np.maximum(room, 1e-300)), h)
        fd = _fd_first if order == 1 else _fd_second
        coarse = fd(self.fn, x, h)
        fine = fd(self.fn, x, h / 2.0)
        return (4.0 * fine - coarse) / 3.0

    # -- constructors ----------------------------------------------------

    @staticmethod
    def constant(c: float, domain: tuple[float, float], periodic: bool = False) -> "SmoothFn1D":
        c = float(c)
        return SmoothFn1D(
            domain=domain,
            fn=lambda x, c=c: np.full_like(np.asarray(x, dtype=float), c),
            d1=lambda x: np.zeros_like(np.asarray(x, dtype=float)),
            d2=lambda x: np.zeros_like(np.asarray(x, dtype=float)),
            periodic=periodic,
            period=(domain[1] - domain[0]) if periodic else None,
        )

    @staticmethod
    def from_callable(fn, domain, d1=None, d2=None, periodic=False) -> "SmoothFn1D":
        return SmoothFn1D(
            domain=tuple(map(float, domain)), fn=fn, d1=d1, d2=d2,
            periodic=periodic,
            period=(domain[1] - domain[0]) if periodic else None,
        )

    @staticmethod
    def from_table(knots, values, periodic=False) -> "SmoothFn1D":
        """Cubic-spline interpolant of a knot/value table.

        Periodic tables must repeat the first value at the last knot; the
        spline then matches value and first derivative at the seam.
        """
        knots = np.asarray(knots, dtype=float)
        values = np.asarray(values, dtype=float)
        if periodic:
            if abs(values[0] - values[-1]) > TOL_PERIODIC * (1.0 + np.abs(values).max()):
                raise ValueError("periodic table must close up (first value == last value)")
            values = values.copy()
            values[-1] = values[0]
            spl = CubicSpline(knots, values, bc_type="periodic")
        else:
            spl = CubicSpline(knots, values, bc_type="not-a-knot")
        return SmoothFn1D(
            domain=(float(knots[0]), float(knots[-1])),
            fn=spl, d1=spl.derivative(1), d2=spl.derivative(2),
            periodic=periodic,
            period=float(knots[-1] - knots[0]) if periodic else None,
        )

    # -- arithmetic (keeps analytic derivatives via chain rules) ---------

    def _binary(self, other, f, df, d2f) -> "SmoothFn1D":
        if not isinstance(other, SmoothFn1D):
            other = SmoothFn1D.constant(other, self.domain, periodic=self.periodic)
        u, v = self, other
        return SmoothFn1D(
            domain=self.domain,
            fn=lambda x: f(u.fn(x), v.fn(x)),
            d1=lambda x: df(u.fn(x), v.fn(x), u.deriv(x, 1), v.deriv(x, 1)),
            d2=lambda x: d2f(u.fn(x), v.fn(x), u.deriv(x, 1), v.deriv(x, 1),
                             u.deriv(x, 2), v.deriv(x, 2)),
            periodic=self.periodic and other.periodic,
            period=self.period if (self.periodic and other.periodic) else None,
        )

    def __add__(self, other):
        return self._binary(other, lambda a, b: a + b,
                            lambda a, b, da, db: da + db,
                            lambda a, b, da, db, d2a, d2b: d2a + d2b)

    __radd__ = __add__

    def __sub__(self, other):
        return self._binary(other, lambda a, b: a - b,
                            lambda a, b, da, db: da - db,
                            lambda a, b, da, db, d2a, d2b: d2a - d2b)

    def __rsub__(self, other):
        return (-1.0) * self + other

    def __mul__(self, other):
        return self._binary(other, lambda a, b: a * b,
                            lambda a, b, da, db: da * b + a * db,
                            lambda a, b, da, db, d2a, d2b: d2a * b + 2.0 * da * db + a * d2b)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return self._binary(
            other, lambda a, b: a / b,
            lambda a, b, da, db: (da * b - a * db) / (b * b),
            lambda a, b, da, db, d2a, d2b:
                (d2a * b * b - 2.0 * da * db * b + 2.0 * a * db * db - a * b * d2b) / (b ** 3))

    def __rtruediv__(self, other):
        if not isinstance(other, SmoothFn1D):
            other = SmoothFn1D.constant(other, self.domain, periodic=self.periodic)
        return other / self

    def __neg__(self):
        return (-1.0) * self

    # -- consistency checks ----------------------------------------------

    def periodicity_residual(self) -> float:
        """Mismatch of value and first derivative across the seam."""
        a, b = self.domain
        scale = 1.0 + abs(float(self(0.5 * (a + b))))
        va = float(self.deriv(np.array([a + 1e-9 * (b - a)]), 0)[0])
        vb = float(self.deriv(np.array([b - 1e-9 * (b - a)]), 0)[0])
        da = float(self.deriv(np.array([a + 1e-9 * (b - a)]), 1)[0])
        db = float(self.deriv(np.array([b - 1e-9 * (b - a)]), 1)[0])
        return max(abs(va - vb), abs(da - db)) / scale

    def second_deriv_consistency(self, x) -> float:
        """Analytic vs finite-difference second derivative, Richardson step pair."""
        x = np.asarray(x, dtype=float)
        ana = self.deriv(x, 2)
        num = self._fd_deriv(x, 2)
        return float(np.max(np.abs(ana - num) / (1.0 + np.abs(ana))))


def eval_with_derivs(f: SmoothFn1D, x, k: int = 2):
    """Value and first ``k`` derivatives of ``f`` at ``x`` (k <= 2)."""
    if k > 2 or k < 0:
        raise ValueError("k must be 0, 1 or 2")
    return tuple(f.deriv(x, order) for order in range(k + 1))


# ---------------------------------------------------------------------------
# Liouville charts
# ---------------------------------------------------------------------------

# 15-point Gauss-Legendre rule on [-1, 1]; panels map it affinely.
_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(15)


def _gl_panel_integrals(fn, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    """Integral of fn over each [lo_i, hi_i] by 15-point Gauss-Legendre."""
    mid = 0.5 * (lo + hi)[:, None]
    half = 0.5 * (hi - lo)[:, None]
    x = mid + half * _GL_NODES[None, :]
    return (half[:, 0]) * (fn(x) @ _GL_WEIGHTS)


@dataclass(frozen=True)
class LiouvilleChart:
    """The diffeomorphism ``X = g(x) = integral_0^x sqrt(weight)``.

    The cumulative integral is cached on a graded partition at build
    time; ``forward`` finishes the open panel with one quadrature and
    ``inverse`` runs a bracketed Newton iteration on the cache, so both
    directions are pure reads afterwards.
    """

    weight: SmoothFn1D
    nodes: np.ndarray      # partition of the x-domain
    cum: np.ndarray        # g at the partition nodes
    length: float

    @property
    def domain(self) -> tuple[float, float]:
        return (float(self.nodes[0]), float(self.nodes[-1]))

    def sqrt_weight(self, x):
        w = self.weight(x)
        return np.sqrt(w)

    def forward(self, x):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        a, b = self.domain
        if np.any(x < a - 1e-12) or np.any(x > b + 1e-12):
            raise DomainError("chart forward: point outside domain")
        idx = np.clip(np.searchsorted(self.nodes, x, side="right") - 1, 0, len(self.nodes) - 2)
        lo = self.nodes[idx]
        out = self.cum[idx] + _gl_panel_integrals(self.sqrt_weight, lo, x)
        return out if out.shape != (1,) else float(out[0])

    def inverse(self, X):
        X = np.atleast_1d(np.asarray(X, dtype=float))
        if np.any(X < -1e-9 * self.length) or np.any(X > self.length * (1 + 1e-9)):
            raise DomainError("chart inverse: point outside [0, length]")
        Xc = np.clip(X, 0.0, self.length)
        idx = np.clip(np.searchsorted(self.cum, Xc, side="right") - 1, 0, len(self.nodes) - 2)
        lo, hi = self.nodes[idx], self.nodes[idx + 1]
        # linear seed inside the bracketing panel, then safeguarded Newton
        frac = (Xc - self.cum[idx]) / np.maximum(self.cum[idx + 1] - self.cum[idx], 1e-300)
        x = lo + frac * (hi - lo)
        for _ in range(60):
            g = np.atleast_1d(self.forward(x))
            resid = g - Xc
            if np.max(np.abs(resid)) < TOL_INV * max(self.length, 1.0) * 1e-2:
                break
            step = resid / np.maximum(self.sqrt_weight(x), 1e-300)
            x_new = x - step
            bad = (x_new <= lo) | (x_new >= hi)
            x_new[bad] = 0.5 * (np.where(resid > 0, lo + x, x + hi))[bad]
            lo = np.where(resid < 0, x, lo)
            hi = np.where(resid > 0, x, hi)
            x = x_new
        return x if x.shape != (1,) else float(x[0])

    def roundtrip_residual(self, n: int = 64) -> float:
        a, b = self.domain
        xs = np.linspace(a + (b - a) * 1e-6, b - (b - a) * 1e-6, n)
        back = np.atleast_1d(self.inverse(np.atleast_1d(self.forward(xs))))
        return float(np.max(np.abs(back - xs)) / max(b - a, 1.0))


def build_chart(weight: SmoothFn1D, n_panels: int = 256) -> LiouvilleChart:
    """Chart from a strictly positive weight, quadrature-refined to TOL_QUAD."""
    a, b = weight.domain
    probe = np.linspace(a + (b - a) * 1e-9, b - (b - a) * 1e-9, 513)
    w = weight(probe)
    if np.any(w <= 0.0):
        bad = probe[np.asarray(w <= 0.0).nonzero()[0][0]]
        raise PositivityError(f"weight is not strictly positive (w({bad:.6g}) <= 0)")

    def grade(n):
        # uniform core with geometric refinement near both endpoints,
        # where AH-type weights vary fastest
        t = np.linspace(0.0, 1.0, n + 1)
        s = 0.5 * (1.0 - np.cos(np.pi * t))
        return a + (b - a) * s

    nodes = grade(n_panels)
    total_prev = None
    for _ in range(5):
        seg = _gl_panel_integrals(lambda x: np.sqrt(weight(x)), nodes[:-1], nodes[1:])
        total = float(seg.sum())
        if total_prev is not None and abs(total - total_prev) <= TOL_QUAD * abs(total):
            break
        total_prev = total
        n_panels *= 2
        nodes = grade(n_panels)
    else:
        raise AccuracyError("chart quadrature did not reach its relative tolerance")
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    cum[-1] = total
    return LiouvilleChart(weight=weight, nodes=nodes, cum=cum, length=total)


def compose_after_inverse(chart: LiouvilleChart, f: SmoothFn1D) -> SmoothFn1D:
    """``f`` re-expressed in the chart variable: ``F(X) = f(h(X))``.

    Chain rules through ``h' = 1/sqrt(w)`` keep two analytic derivatives.
    """
    def val(X):
        return f(np.atleast_1d(chart.inverse(X)))

    def d1(X):
        x = np.atleast_1d(chart.inverse(X))
        return f.deriv(x, 1) / chart.sqrt_weight(x)

    def d2(X):
        x = np.atleast_1d(chart.inverse(X))
        w = chart.weight(x)
        w1 = chart.weight.deriv(x, 1)
        return f.deriv(x, 2) / w - f.deriv(x, 1) * w1 / (2.0 * w * w)

    return SmoothFn1D(domain=(0.0, chart.length), fn=val, d1=d1, d2=d2,
                      periodic=f.periodic, period=chart.length if f.periodic else None)


def pushforward_potential_terms(chart: LiouvilleChart, f: SmoothFn1D):
    """The two chart-variable correction terms built from ``log f``.

    Returns ``(t1, t2)`` with ``t1 = (d/dX log f)^2 / 16`` and
    ``t2 = (d^2/dX^2 log f) / 4``, both as functions of the chart
    variable ``X`` on ``[0, length]``.  The Schrodinger-form potential
    of a separated equation adds ``t1 - t2`` with the appropriate ``f``.
    """
    a, b = f.domain
    probe = np.linspace(a + (b - a) * 1e-9, b - (b - a) * 1e-9, 257)
    if np.any(f(probe) <= 0.0):
        raise PositivityError("pushforward requires a strictly positive function")

    def phi_dot_at(x):
        return f.deriv(x, 1) / (f(x) * chart.sqrt_weight(x))

    def phi_ddot_at(x):
        F1 = f.deriv(x, 1) / f(x)
        F2 = f.deriv(x, 2) / f(x) - F1 * F1
        w = chart.weight(x)
        w1 = chart.weight.deriv(x, 1)
        return F2 / w - F1 * w1 / (2.0 * w * w)

    def t1_fn(X):
        x = np.atleast_1d(chart.inverse(X))
        return phi_dot_at(x) ** 2 / 16.0

    def t2_fn(X):
        x = np.atleast_1d(chart.inverse(X))
        return phi_ddot_at(x) / 4.0

    dom = (0.0, chart.length)
    return (SmoothFn1D(domain=dom, fn=t1_fn),
            SmoothFn1D(domain=dom, fn=t2_fn))
