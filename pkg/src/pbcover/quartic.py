"""Closed-form placement results for one (or two) serving PBs.

On the sector edge the coverage condition ``gamma_eq >= gamma_eq_th``
reduces to ``f(r) = r^4 - 2 d cos(pi/M) r^3 + d^2 r^2 - varsigma <= 0``
with ``varsigma = (alpha_eff / gamma_eq_th)^(2/delta)``.
"""

from __future__ import annotations

import cmath
import functools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from .errors import NotApplicable, NumericalInstability

# two positive roots closer than this (relative) are one repeated root
REPEATED_ROOT_TOL = 1e-6
# a gap whose peak f is below this fraction of varsigma has zero width
TOUCH_TOL = 1e-9


def theta_cos(m_total: int) -> float:
    return math.cos(math.pi / m_total)


def varsigma(alpha_eff: float, gamma_eq_th: float, delta: float) -> float:
    return (alpha_eff / gamma_eq_th) ** (2.0 / delta)


@dataclass(frozen=True)
class CoverageQuartic:
    d: float
    theta_cos: float
    varsigma: float

    def __post_init__(self):
        if self.varsigma <= 0:
            raise ValueError("varsigma must be positive")
        if not -1 <= self.theta_cos < 1:
            raise ValueError("theta_cos must lie in [-1, 1)")
        if self.d < 0:
            raise ValueError("d must be >= 0")

    @classmethod
    def for_m(cls, d: float, m_total: int, varsigma: float) -> "CoverageQuartic":
        return cls(d, theta_cos(m_total), varsigma)

    @property
    def coefficients(self) -> np.ndarray:
        """Highest degree first."""
        d, t = self.d, self.theta_cos
        return np.array([1.0, -2.0 * d * t, d * d, 0.0, -self.varsigma])

    def __call__(self, r):
        return np.polyval(self.coefficients, r)

    def derivative(self, r):
        d, t = self.d, self.theta_cos
        return 4 * r**3 - 6 * d * t * r**2 + 2 * d * d * r

    def relative_residual(self, r: float) -> float:
        terms = np.abs(self.coefficients) * np.abs(r) ** np.arange(4, -1, -1)
        return abs(self(r)) / terms.sum()


@dataclass(frozen=True)
class RootStructure:
    positive_real_roots: list[float]
    has_coverage_gap: bool
    r_cov: float
    touching: bool = False
    residuals: list[float] = field(default_factory=list)


def _polish(q: CoverageQuartic, r: float) -> float:
    for _ in range(8):
        fp = q.derivative(r)
        if fp == 0:
            break
        step = q(r) / fp
        if not math.isfinite(step) or abs(step) > 1e-3 * max(abs(r), 1.0):
            break
        r -= step
        if abs(step) < 1e-15 * abs(r):
            break
    return r


def solve_coverage_quartic(q: CoverageQuartic) -> RootStructure:
    """Real roots of the coverage quartic on ``r > 0`` and the resulting GCD.

    Three distinct positive roots mean a coverage gap and ``r_cov`` is the
    smallest; a single root, or a repeated root below the largest one
    (the gap has zero width), gives ``r_cov`` equal to the largest root.
    """
    scale = q.varsigma**0.25
    if q.d == 0:
        return RootStructure([scale], False, scale, residuals=[0.0])
    # work in units of varsigma^(1/4) so the coefficients are O(1)
    dd = q.d / scale
    roots = np.roots([1.0, -2.0 * dd * q.theta_cos, dd * dd, 0.0, -1.0])
    real = sorted(
        float(z.real) * scale
        for z in roots
        if z.real > 0 and abs(z.imag) <= REPEATED_ROOT_TOL * abs(z)
    )
    real = [_polish(q, r) for r in real]
    if len(real) not in (1, 3):
        # f(0) < 0 < f(inf) forces an odd count of positive roots
        raise NumericalInstability(f"unexpected positive root count {len(real)} for {q}")
    resid = [q.relative_residual(r) for r in real]
    if len(real) == 1:
        return RootStructure(real, False, real[0], residuals=resid)
    r1, r2, r3 = real[0], real[1], real[2]
    # near a double root the split is ill-conditioned, so judge by depth
    crit = np.sort(np.roots([4.0, -6.0 * q.d * q.theta_cos, 2.0 * q.d * q.d]).real)
    peak = q(crit[0]) / q.varsigma
    trough = q(crit[1]) / q.varsigma
    if abs(r2 - r1) <= REPEATED_ROOT_TOL * r2 or peak <= TOUCH_TOL:
        return RootStructure(real, False, r3, touching=True, residuals=resid)
    if abs(r3 - r2) <= REPEATED_ROOT_TOL * r3 or trough >= -TOUCH_TOL:
        # the outer pair touches: coverage ends at the first root
        return RootStructure(real, False, r1, touching=True, residuals=resid)
    return RootStructure(real, True, r1, residuals=resid)


def lemma1_monotonic(m_total: int, d: float) -> bool:
    """True when the edge SNR decreases monotonically in ``r``.

    That is, ``4r^2 - 6 d cos(pi/M) r + 2 d^2`` has no positive root.
    """
    if d == 0:
        return True
    t = theta_cos(m_total)
    if t <= 0:
        return True
    return 9 * t * t - 8 < 0


def lemma2_rmax(varsigma: float, m_total: int) -> float:
    """Largest edge distance that any ``d`` can make feasible."""
    if m_total == 1:
        return varsigma**0.25
    t = theta_cos(m_total)
    return (varsigma / (1 - t * t)) ** 0.25


def lemma2_dstar(varsigma: float, m_total: int) -> float:
    if m_total <= 2:
        return 0.0
    return lemma2_rmax(varsigma, m_total) * theta_cos(m_total)


def _discriminant_quadratic(varsigma: float, m_total: int) -> tuple[float, float, float]:
    """Coefficients of the quartic discriminant as a quadratic in ``y = d^4``."""
    t2 = theta_cos(m_total) ** 2
    return (
        16 * varsigma * (t2 - 1),
        varsigma**2 * (576 * t2 - 128 - 432 * t2 * t2),
        -256 * varsigma**3,
    )


def lemma3_branches(varsigma: float, m_total: int) -> tuple[float, float]:
    """Both roots ``y = d^4`` of the discriminant quadratic, ``(selected, rejected)``."""
    a, b, c = _discriminant_quadratic(varsigma, m_total)
    disc = b * b - 4 * a * c
    if disc < 0:
        raise NotApplicable(f"no real double root for M = {m_total}")
    y_sel = lemma3_dprime(varsigma, m_total) ** 4
    y_other = c / a / y_sel
    return y_sel, y_other


def lemma3_dprime(varsigma: float, m_total: int) -> float:
    """PB distance at which the edge quartic first acquires a real double root."""
    if m_total <= 9:
        raise NotApplicable("a real double root needs M >= 10")
    t = theta_cos(m_total)
    t2 = t * t
    csc2 = 1.0 / math.sin(math.pi / m_total) ** 2
    inner = math.sqrt(varsigma**2 * t2 * (9 * t2 - 8) ** 3) + varsigma * (27 * t2 * t2 - 36 * t2 + 8)
    y = -0.5 * csc2 * inner
    assert y > 0, "double-root distance must be real"
    # side conditions for "one real double root plus two simple real roots":
    # 8 a4 a2 - 3 a3^2 < 0 reduces to cos^2(pi/M) > 2/3 (M >= 6)
    assert t2 > 2.0 / 3.0
    # 64 a4^3 a0 - 16 a4^2 a2^2 + 16 a4 a3^2 a2 - 3 a3^4 < 0
    assert y < 4 * varsigma / ((3 * t2 - 1) * (1 - t2))
    # a2^2 + 12 a4 a0 != 0 excludes a triple root
    assert not math.isclose(y, 12 * varsigma, rel_tol=1e-12)
    return y**0.25


@functools.lru_cache(maxsize=1)
def omega() -> float:
    """Positive real root of ``4x^6 + 2x^2 - 7``."""
    return optimize.brentq(lambda x: 4 * x**6 + 2 * x**2 - 7, 1.0, 2.0, xtol=1e-15, rtol=4 * np.finfo(float).eps)


def m_threshold() -> float:
    """Crossover PB count between the two optimal-distance regimes (about 12.36)."""
    return math.pi / math.acos(1.0 / omega())


def theorem1_dstar(varsigma: float, m_total: int) -> float:
    """Optimal PB distance when every BD is served by its nearest PB."""
    if varsigma <= 0:
        raise ValueError("varsigma must be positive")
    if m_total <= 2:
        return 0.0
    small_m = lemma2_dstar(varsigma, m_total)
    if m_total <= 9:
        return small_m
    return min(small_m, lemma3_dprime(varsigma, m_total))


def theorem1_dstar_piecewise(varsigma: float, m_total: int) -> float:
    """Same as :func:`theorem1_dstar` but switching at floor/ceil of the crossover."""
    if m_total <= 2:
        return 0.0
    if m_total <= math.floor(m_threshold()):
        return lemma2_dstar(varsigma, m_total)
    return lemma3_dprime(varsigma, m_total)


def corollary1_asymptotics(varsigma: float) -> tuple[float, float]:
    """``(d_inf, r_cov_inf)``: limits of the optimal distance and GCD as ``M`` grows."""
    if varsigma <= 0:
        raise ValueError("varsigma must be positive")
    d_inf = 2.0 * varsigma**0.25
    s = complex(varsigma)
    c = (-(varsigma**1.5) + 0j) ** (1.0 / 3.0)
    first = cmath.sqrt((cmath.sqrt(s) + c) ** 2 / c)
    second = cmath.sqrt((4 * s + s * s / c**2 + c**2) / cmath.sqrt(s))
    r = varsigma**0.25 + (first + second) / math.sqrt(6)
    if abs(r.imag) > 1e-9 * abs(r):
        raise NumericalInstability(f"imaginary parts failed to cancel: {r}")
    return d_inf, r.real
