"""Built-in manifold families.

Every preset is already in the canonical frame (condition C signs, unit
limits, angular gauge s23 - s22 = s32 - s33 = 1) so the pipeline stages
act as verified no-ops on them; tests scramble them deliberately.  The
radial profile (pi/A)^2 / sin^2(pi x / A) realizes the two hyperbolic
ends exactly, with corrections decaying like x^2 (faster than any
logarithmic rate).
"""

from __future__ import annotations

import numpy as np

from .funcspace import SmoothFn1D
from .stackel import StackelMatrix

TWO_PI = 2.0 * np.pi


def sin_sq_profile(A: float) -> SmoothFn1D:
    """The exact hyperbolic radial profile (pi/A)^2 / sin^2(pi x / A).

    Evaluated through the distance to the nearest end (sin(pi x/A) is
    symmetric about A/2), which keeps full precision where the argument
    of sin would otherwise sit next to pi.
    """
    k = np.pi / A

    def parts(x):
        x = np.asarray(x, dtype=float)
        d = np.minimum(x, A - x)
        sign = np.where(x <= 0.5 * A, 1.0, -1.0)
        return np.sin(k * d), np.cos(k * d), sign

    def fn(x):
        s, _, _ = parts(x)
        return k**2 / s**2

    def d1(x):
        s, c, sign = parts(x)
        return -sign * 2.0 * k**3 * c / s**3

    def d2(x):
        s, c, _ = parts(x)
        return 6.0 * k**4 * c**2 / s**4 + 2.0 * k**4 / s**2

    return SmoothFn1D.from_callable(fn, (0.0, A), d1=d1, d2=d2)


def inverse_sin_sq_profile(A: float) -> SmoothFn1D:
    """sin^2(pi x / A) / (pi/A)^2, the reciprocal of the profile above."""
    k = np.pi / A

    def dmin(x):
        x = np.asarray(x, dtype=float)
        return np.minimum(x, A - x), np.where(x <= 0.5 * A, 1.0, -1.0)

    def fn(x):
        d, _ = dmin(x)
        return np.sin(k * d) ** 2 / k**2

    def d1(x):
        d, sign = dmin(x)
        return sign * np.sin(2.0 * k * d) / k

    def d2(x):
        d, _ = dmin(x)
        return 2.0 * np.cos(2.0 * k * d)

    return SmoothFn1D.from_callable(fn, (0.0, A), d1=d1, d2=d2)


def radial_bump(A: float, center: float, width: float) -> SmoothFn1D:
    """Smooth localized bump vanishing to second order at both ends."""
    def fn(x):
        return np.sin(np.pi * x / A) ** 2 * np.exp(-(((x - center) / width) ** 2))

    return SmoothFn1D.from_callable(fn, (0.0, A))


def one_plus_sin_sq(A: float, amp: float) -> SmoothFn1D:
    k = np.pi / A
    return SmoothFn1D.from_callable(
        lambda x: 1.0 + amp * np.sin(k * x) ** 2, (0.0, A),
        d1=lambda x: amp * k * np.sin(2.0 * k * x),
        d2=lambda x: 2.0 * amp * k**2 * np.cos(2.0 * k * x))


def cosine_profile(period: float, mean: float, amp: float) -> SmoothFn1D:
    """mean + amp * cos(2 pi x / period), periodic with two derivatives."""
    w = TWO_PI / period
    return SmoothFn1D.from_callable(
        lambda x: mean + amp * np.cos(w * x), (0.0, period),
        d1=lambda x: -amp * w * np.sin(w * x),
        d2=lambda x: -amp * w**2 * np.cos(w * x),
        periodic=True)


def _const_row(domain, vals, periodic=False):
    return tuple(SmoothFn1D.constant(v, domain, periodic=periodic) for v in vals)


def hyperbolic_template(A: float = 2.0, B: float = TWO_PI, C: float = TWO_PI) -> StackelMatrix:
    """Exact hyperbolic ends with constant angular rows.

    Rows: (profile, 1, 1 | 0, -3/4, 1/4 | 0, 1/4, -3/4).  The radial
    Schrodinger problems on this matrix are exactly solvable, which
    makes it the reference case for the scattering oracles.
    """
    dom_r = (0.0, A)
    row1 = (sin_sq_profile(A),
            SmoothFn1D.constant(1.0, dom_r),
            SmoothFn1D.constant(1.0, dom_r))
    row2 = _const_row((0.0, B), (0.0, -0.75, 0.25), periodic=True)
    row3 = _const_row((0.0, C), (0.0, 0.25, -0.75), periodic=True)
    return StackelMatrix(rows=(row1, row2, row3), radial_domain=dom_r, periods=(B, C))


def example1(A: float = 2.0, B: float = TWO_PI, C: float = TWO_PI,
             row2=(0.0, -0.75, 0.25), row3=(0.0, 0.25, -0.75),
             s12_amp: float = 0.0, s13_amp: float = 0.0) -> StackelMatrix:
    """Constant angular rows (two commuting translation symmetries).

    Optional s12/s13 profiles keep the limits at 1 while making the
    three radial gauge constructions genuinely different.
    """
    dom_r = (0.0, A)
    row1 = (sin_sq_profile(A), one_plus_sin_sq(A, s12_amp), one_plus_sin_sq(A, s13_amp))
    return StackelMatrix(
        rows=(row1,
              _const_row((0.0, B), row2, periodic=True),
              _const_row((0.0, C), row3, periodic=True)),
        radial_domain=dom_r, periods=(B, C))


def example2(A: float = 2.0, B: float = TWO_PI, C: float = TWO_PI,
             s12_amp: float = 0.25, rho2: float = 0.1, rho3: float = 0.1) -> StackelMatrix:
    """Warped-product family: s21 = s31 = 0, equal s12 = s13.

    Angular rows vary but keep |s22| + |s33| > 1 so the first cofactor
    stays positive.
    """
    dom_r = (0.0, A)
    s12 = one_plus_sin_sq(A, s12_amp)
    row1 = (sin_sq_profile(A), s12, s12)
    s22 = cosine_profile(B, -0.75, -rho2)
    s33 = cosine_profile(C, -0.70, -rho3)
    row2 = (SmoothFn1D.constant(0.0, (0.0, B), periodic=True), s22, s22 + 1.0)
    row3 = (SmoothFn1D.constant(0.0, (0.0, C), periodic=True), s33 + 1.0, s33)
    return StackelMatrix(rows=(row1, row2, row3), radial_domain=dom_r, periods=(B, C))


def example3(A: float = 2.0, B: float = TWO_PI, C: float = TWO_PI,
             sigma: float = 0.0,
             mean2: float = 0.56, amp2: float = 0.2,
             mean3: float = 0.24, amp3: float = 0.1) -> StackelMatrix:
    """Fully generic family with no symmetry or warped structure.

    Rows (s1, 1, 1 - 1/s1 | -s2^2, -s2, 1 - s2 | s3^2, s3, s3 - 1) with
    s1 the hyperbolic profile (plus an optional shift) and s2, s3
    cosine profiles valued in (0, 1), ranges ordered s1 > s2 > s3.
    """
    if not (mean2 - amp2 > mean3 + amp3 > 0 and mean2 + amp2 < 1):
        raise ValueError("profiles must satisfy 0 < s3 < s2 < 1 with a gap")
    dom_r = (0.0, A)
    s1 = sin_sq_profile(A) + sigma
    row1 = (s1, SmoothFn1D.constant(1.0, dom_r), 1.0 - 1.0 / s1)
    s2 = cosine_profile(B, mean2, amp2)
    s3 = cosine_profile(C, mean3, amp3)
    row2 = (-(s2 * s2), -s2, 1.0 - s2)
    row3 = (s3 * s3, s3, s3 - 1.0)
    return StackelMatrix(rows=(row1, row2, row3), radial_domain=dom_r, periods=(B, C))


def example3_raw(A: float = 2.0, B: float = TWO_PI, C: float = TWO_PI,
                 sigma: float = 0.0,
                 mean2: float = 0.56, amp2: float = 0.2,
                 mean3: float = 0.24, amp3: float = 0.1) -> StackelMatrix:
    """The un-normalized variant (s_i^2, -/+ s_i, +/- 1 rows).

    Violates the canonical sign pattern on purpose; normalization tests
    start from here.
    """
    dom_r = (0.0, A)
    s1 = sin_sq_profile(A) + sigma
    s2 = cosine_profile(B, mean2, amp2)
    s3 = cosine_profile(C, mean3, amp3)
    one_r = SmoothFn1D.constant(1.0, dom_r)
    one_b = SmoothFn1D.constant(1.0, (0.0, B), periodic=True)
    one_c = SmoothFn1D.constant(1.0, (0.0, C), periodic=True)
    return StackelMatrix(
        rows=((s1 * s1, -s1, one_r),
              (-(s2 * s2), s2, -one_b),
              (s3 * s3, -s3, one_c)),
        radial_domain=dom_r, periods=(B, C))


def with_radial_bump(S: StackelMatrix, amplitude: float,
                     center: float | None = None, width: float | None = None) -> StackelMatrix:
    """Multiply s11 by (1 + amplitude * bump); the perturbation family
    used for sensitivity (distinct-verdict) runs."""
    A = S.A
    center = 0.5 * A if center is None else center
    width = A / 6.0 if width is None else width
    bump = radial_bump(A, center, width)
    s11 = S.entry(1, 1) * (1.0 + amplitude * bump)
    rows = ((s11, S.rows[0][1], S.rows[0][2]), S.rows[1], S.rows[2])
    return S.with_rows(rows)


PRESETS = {
    "hyperbolic-template": hyperbolic_template,
    "example1": example1,
    "example2": example2,
    "example3": example3,
}


def build_preset(name: str, **params) -> StackelMatrix:
    try:
        factory = PRESETS[name]
    except KeyError:
        raise ValueError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    return factory(**params)
