"""Numeric GCD search and PB-distance optimisation.

For one serving PB, all PBs serving, or an odd serving count, the worst BD
at any distance sits on a sector edge, so the GCD for a PB distance ``d``
is the first ``r`` along the edge where the equivalent SNR drops below the
equivalent threshold. For an even ``S < M`` that reduction can fail and
:func:`gcd_all_angles` scans the whole half-sector instead. A linear scan locates the crossing,
narrow dips between grid points are caught by refining every discrete
local minimum of the SNR margin, and the crossing is polished by Brent's
method. ``d*`` is found by a grid scan over ``d`` followed by golden-section
refinement.
"""

from __future__ import annotations

import functools
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np
from scipy import optimize

from . import fading, linkmodel, quartic
from .errors import FlatProfile, InvalidConfig
from .linkmodel import Placement, RfConfig

# relative margin below which a grid local minimum is refined continuously
_DIP_REFINE = 1e-3
_INV_PHI = (math.sqrt(5) - 1) / 2


class Method(str, Enum):
    CLOSED_FORM = "ClosedForm"
    NUMERIC = "Numeric"
    CHI_APPROX = "ChiApprox"


@dataclass
class GcdQuery:
    config: RfConfig
    placement: Placement
    qos: fading.QosSpec
    fading: fading.FadingSpec = field(default_factory=fading.FadingSpec)
    r_upper: float | None = None
    grid_step_r: float = 0.05
    grid_step_d: float = 0.1
    threshold_method: str = "closed"

    def __post_init__(self):
        if self.placement.scheme is not linkmodel.Scheme.SYMMETRIC:
            raise InvalidConfig("the planner handles symmetric single-tier placements only")
        if self.grid_step_r <= 0 or self.grid_step_d <= 0:
            raise InvalidConfig("grid steps must be positive")
        if self.r_upper is not None and self.r_upper <= 0:
            raise InvalidConfig("r_upper must be positive")
        r_up = self.r_upper_value
        if self.grid_step_r > r_up / 100 or self.grid_step_d > r_up / 100:
            raise InvalidConfig("grid steps must not exceed r_upper / 100")

    @property
    def m_total(self) -> int:
        return self.placement.m_total

    @property
    def serving_count(self) -> int:
        return self.placement.serving_count

    @functools.cached_property
    def alpha(self) -> float:
        return linkmodel.alpha(self.config)

    @functools.cached_property
    def forward_kappas(self) -> np.ndarray:
        return self.fading.forward_kappas(self.serving_count)

    def threshold_for_shape(self, kappa_sigma):
        return self._threshold(kappa_sigma)

    @functools.cached_property
    def _threshold(self):
        k = self.forward_kappas
        lo, hi = float(k.min()), float(k.sum())
        if self.serving_count <= 2 and np.all(k == k[0]):
            # edge BD with <= 2 PBs: equal path losses, so the sum shape is fixed
            hi = lo = float(fading.sum_shape(np.ones(self.serving_count), k))
        return fading.ThresholdCurve(self.qos, lo, hi, self.fading.kappa_back, self.threshold_method)

    @property
    def constant_threshold(self) -> float | None:
        curve = self._threshold
        return curve._const

    def edge_threshold(self) -> float:
        """Threshold for the closed-form paths (S <= 2)."""
        if self.constant_threshold is None:
            raise InvalidConfig("equivalent threshold varies with geometry for S > 2")
        return self.constant_threshold

    def varsigma(self, alpha_scale: float | None = None, threshold: float | None = None) -> float:
        scale = self.serving_count if alpha_scale is None else alpha_scale
        th = self.edge_threshold() if threshold is None else threshold
        return quartic.varsigma(scale * self.alpha, th, self.config.path_loss_exponent)

    @functools.cached_property
    def varsigma_bound(self) -> float:
        """varsigma with all ``S`` PBs at the nearest distance and the smallest threshold."""
        th = float(self._threshold(float(self.forward_kappas.sum())))
        return quartic.varsigma(self.serving_count * self.alpha, th, self.config.path_loss_exponent)

    @property
    def r_upper_value(self) -> float:
        if self.r_upper is not None:
            return self.r_upper
        return 3.0 * quartic.corollary1_asymptotics(self.varsigma_bound)[1]

    @property
    def d_upper(self) -> float:
        return 1.2 * quartic.corollary1_asymptotics(self.varsigma_bound)[0]

    def at_d(self, d: float) -> "GcdQuery":
        return replace(self, placement=replace(self.placement, d=float(d)))


@dataclass
class GcdResult:
    r_cov: float
    d_star: float | None = None
    gap_detected: bool = False
    method: Method = Method.NUMERIC
    truncated: bool = False
    zero_coverage: bool = False
    d_star_closed: float | None = None
    diagnostics: dict | None = None


def edge_margin(query: GcdQuery, r, d):
    """``gamma_eq / gamma_eq_th - 1`` on the sector edge; broadcasts ``r`` against ``d``."""
    cfg = query.config
    delta = cfg.path_loss_exponent
    off = linkmodel.edge_offsets(query.m_total, query.serving_count)
    r = np.asarray(r, dtype=float)
    d = np.asarray(d, dtype=float)
    dist2 = d[..., None] ** 2 + r[..., None] ** 2 - 2 * d[..., None] * r[..., None] * np.cos(off)
    w = np.maximum(dist2, linkmodel.D_MIN**2) ** (-delta / 2)
    snr = linkmodel.snr_from_gain(w.sum(axis=-1), r, cfg)
    const = query.constant_threshold
    th = const if const is not None else query.threshold_for_shape(fading.sum_shape(w, query.forward_kappas))
    return snr / th - 1.0


def _scalar_margin(query, d):
    return lambda r: float(edge_margin(query, r, d))


def _r_grid(query: GcdQuery) -> np.ndarray:
    step = query.grid_step_r
    n = int(math.ceil(query.r_upper_value / step))
    return step * np.arange(1, n + 1)


def _refine_row(query: GcdQuery, d: float, r: np.ndarray, m: np.ndarray, with_trace: bool) -> GcdResult:
    fn = _scalar_margin(query, d)
    fail = np.flatnonzero(m < 0)
    first = int(fail[0]) if fail.size else r.size
    # narrow dips that fall between grid points
    if first > 2:
        mm = m[:first]
        inner = np.flatnonzero((mm[1:-1] <= mm[:-2]) & (mm[1:-1] <= mm[2:]) & (mm[1:-1] < _DIP_REFINE)) + 1
        for k in inner:
            res = optimize.minimize_scalar(fn, bounds=(r[k - 1], r[k + 1]), method="bounded",
                                           options={"xatol": 1e-9 * r[k]})
            if res.fun < 0:
                lo = r[k - 1]
                rc = optimize.brentq(fn, lo, res.x, xtol=1e-10 * res.x, rtol=1e-12)
                return GcdResult(rc, gap_detected=True, diagnostics=_trace(r, m, with_trace))
    if first == r.size:
        return GcdResult(float(r[-1]), truncated=True, diagnostics=_trace(r, m, with_trace))
    gap = bool(np.any(m[first:] >= 0))
    if first == 0:
        if fn(linkmodel.D_MIN) < 0 or r[0] <= linkmodel.D_MIN:
            return GcdResult(0.0, zero_coverage=True, diagnostics=_trace(r, m, with_trace))
        lo = linkmodel.D_MIN
    else:
        lo = r[first - 1]
    rc = optimize.brentq(fn, lo, r[first], xtol=1e-10 * r[first], rtol=1e-12)
    return GcdResult(rc, gap_detected=gap, diagnostics=_trace(r, m, with_trace))


def _trace(r, m, keep):
    return {"r": r, "margin": m} if keep else None


def gcd_batch(d_values, query: GcdQuery, threads: int = 1) -> list[GcdResult]:
    """:func:`gcd_at` for many PB distances, sharing one vectorised scan."""
    d_values = np.asarray(d_values, dtype=float)
    r = _r_grid(query)
    rows = max(1, int(4_000_000 // (r.size * query.serving_count)))

    def chunk(i):
        ds = d_values[i:i + rows]
        mm = edge_margin(query, r[None, :], ds[:, None])
        return [_refine_row(query, float(dv), r, row, False) for dv, row in zip(ds, mm)]

    starts = range(0, d_values.size, rows)
    if threads > 1:
        with ThreadPoolExecutor(threads) as ex:
            parts = list(ex.map(chunk, starts))
    else:
        parts = [chunk(i) for i in starts]
    return [res for part in parts for res in part]


def gcd_at(d: float, query: GcdQuery, trace: bool = False) -> GcdResult:
    """GCD for PB distance ``d``: edge scan plus root refinement."""
    if d < 0:
        raise InvalidConfig("d must be >= 0")
    r = _r_grid(query)
    m = edge_margin(query, r, d)
    return _refine_row(query, float(d), r, m, trace)


def gcd_circuit_power(query: GcdQuery, d: float | None = None) -> GcdResult:
    """GCD with the circuit-power-clipped SNR; optimises ``d`` when not given."""
    if d is None:
        return optimize_d(query)
    return gcd_at(d, query)


def golden_section_max(fn, a: float, b: float, tol: float = 1e-6, max_iter: int = 200):
    """Maximise a unimodal ``fn`` on ``[a, b]``; returns ``(x, fn(x))``."""
    c = b - _INV_PHI * (b - a)
    e = a + _INV_PHI * (b - a)
    fc, fe = fn(c), fn(e)
    for _ in range(max_iter):
        if b - a <= tol:
            break
        if fc >= fe:
            b, e, fe = e, c, fc
            c = b - _INV_PHI * (b - a)
            fc = fn(c)
        else:
            a, c, fc = c, e, fe
            e = a + _INV_PHI * (b - a)
            fe = fn(e)
    return (c, fc) if fc >= fe else (e, fe)


def optimize_d(query: GcdQuery, threads: int = 1) -> GcdResult:
    """PB distance maximising the GCD.

    Searches ``d`` directly rather than rooting a numerical derivative of
    ``r_cov(d)``, which jumps at the onset of a coverage gap.
    """
    step = query.grid_step_d
    d_grid = step * np.arange(0, int(math.ceil(query.d_upper / step)) + 1)
    results = gcd_batch(d_grid, query, threads)
    r_cov = np.array([res.r_cov for res in results])
    best = float(r_cov.max())
    i = int(np.flatnonzero(r_cov >= best - 1e-9 * max(best, 1.0))[0])
    lo = d_grid[max(i - 1, 0)]
    hi = d_grid[min(i + 1, d_grid.size - 1)]
    d_star, r_star = float(d_grid[i]), best
    if hi > lo:
        dg, rg = golden_section_max(lambda x: gcd_at(x, query).r_cov, lo, hi, tol=1e-5 * max(hi, 1.0))
        if rg > r_star + 1e-9 * r_star:
            d_star, r_star = dg, rg
    final = gcd_at(d_star, query)
    out = replace(final, d_star=d_star, method=Method.NUMERIC,
                  diagnostics={"edge_reduction_exact": edge_reduction_exact(query.m_total, query.serving_count)})
    if query.config.circuit_power_watts == 0 and query.serving_count <= 2:
        d_closed = quartic.theorem1_dstar(query.varsigma(), query.m_total)
        out.d_star_closed = d_closed
        if abs(d_closed - d_star) <= 2 * step:
            out.method = Method.CLOSED_FORM
    return out


def edge_reduction_exact(m_total: int, serving_count: int) -> bool:
    """Whether the sector edge is provably the worst BD angle.

    True for one serving PB, all PBs serving, or an odd serving count. With
    an even ``S < M`` an off-edge BD can see a lower SNR at the same
    distance (e.g. ``M=5, S=2, r=1, d=3``); :func:`gcd_all_angles` then
    gives the exact GCD.
    """
    return serving_count == 1 or serving_count == m_total or serving_count % 2 == 1


def angular_margin(query: GcdQuery, r, d: float, angles) -> np.ndarray:
    """``gamma_eq / gamma_eq_th - 1`` at radii ``r`` (rows) and BD angles (columns)."""
    cfg = query.config
    delta = cfg.path_loss_exponent
    m, s = query.m_total, query.serving_count
    r = np.atleast_1d(np.asarray(r, dtype=float))
    phi = linkmodel.canonical_pi(np.asarray(angles)[:, None] - 2 * np.pi * np.arange(m) / m)
    dist2 = d * d + r[:, None, None] ** 2 - 2 * d * r[:, None, None] * np.cos(phi)[None]
    w = np.maximum(dist2, linkmodel.D_MIN**2) ** (-delta / 2)
    if s < m:
        w = -np.partition(-w, s - 1, axis=-1)[..., :s]
    snr = linkmodel.snr_from_gain(w.sum(axis=-1), r[:, None], cfg)
    const = query.constant_threshold
    if const is not None and s > 1:
        # off the edge the serving path losses differ, so the sum shape is not fixed
        const = None
    th = const if const is not None else query.threshold_for_shape(fading.sum_shape(w, query.forward_kappas))
    return snr / th - 1.0


def gcd_all_angles(d: float, query: GcdQuery, n_angles: int = 129) -> GcdResult:
    """GCD from the worst BD angle in ``[0, pi/M]`` rather than the sector edge alone."""
    angles = np.linspace(0.0, np.pi / query.m_total, n_angles)
    r = _r_grid(query)
    worst = np.empty(r.size)
    for i in range(0, r.size, 256):
        worst[i:i + 256] = angular_margin(query, r[i:i + 256], d, angles).min(axis=1)

    def fn(x):
        return float(angular_margin(query, x, d, angles).min())

    fail = np.flatnonzero(worst < 0)
    if fail.size == 0:
        return GcdResult(float(r[-1]), truncated=True)
    k = int(fail[0])
    if k == 0:
        return GcdResult(0.0, zero_coverage=True)
    rc = optimize.brentq(fn, r[k - 1], r[k], xtol=1e-9 * r[k])
    return GcdResult(rc, gap_detected=bool(np.any(worst[k:] >= 0)))


def closed_form_gcd(query: GcdQuery, d: float) -> float:
    """GCD from the coverage quartic; valid for S <= 2 without circuit power."""
    q = quartic.CoverageQuartic.for_m(d, query.m_total, query.varsigma())
    return quartic.solve_coverage_quartic(q).r_cov


def chi_approx_dstar(query: GcdQuery, max_iter: int = 50) -> GcdResult:
    """Approximate ``d*`` for ``S = M`` by scaling alpha with the S=M / S=1 SNR ratio.

    The ratio and the sum-shape threshold are evaluated at the current
    estimate and iterated to a fixed point.
    """
    m = query.m_total
    delta = query.config.path_loss_exponent
    single = query.at_d(0.0)
    single = replace(single, placement=replace(single.placement, serving_count=1))
    th = single.edge_threshold()
    sig = single.varsigma(1.0, th)
    d = quartic.theorem1_dstar(sig, m)
    r = quartic.solve_coverage_quartic(quartic.CoverageQuartic.for_m(d, m, sig)).r_cov
    chi = 1.0
    for _ in range(max_iter):
        placement = replace(query.placement, d=d, serving_count=m)
        chi = linkmodel.snr_ratio_chi(placement, r, query.config)
        off = linkmodel.edge_offsets(m, m)
        w = np.maximum(d * d + r * r - 2 * d * r * np.cos(off), linkmodel.D_MIN**2) ** (-delta / 2)
        th = float(query.threshold_for_shape(fading.sum_shape(w, query.forward_kappas)))
        sig = quartic.varsigma(chi * query.alpha, th, delta)
        d_new = quartic.theorem1_dstar(sig, m)
        r_new = quartic.solve_coverage_quartic(quartic.CoverageQuartic.for_m(d_new, m, sig)).r_cov
        done = abs(d_new - d) < 1e-9 * max(d, 1.0) and abs(r_new - r) < 1e-9 * r
        d, r = d_new, r_new
        if done:
            break
    return GcdResult(r, d_star=d, method=Method.CHI_APPROX, diagnostics={"chi": chi, "varsigma": sig})


def worst_case_angle_check(query: GcdQuery, d: float, r: float, n_angles: int = 64) -> float:
    """Angle in ``[-pi/M, pi/M]`` with the lowest equivalent SNR at distance ``r``."""
    if n_angles < 32:
        raise ValueError("need at least 32 angles")
    m, s = query.m_total, query.serving_count
    angles = np.linspace(-np.pi / m, np.pi / m, n_angles)
    delta = query.config.path_loss_exponent
    gains = np.array([
        linkmodel.forward_gain(r, d, linkmodel.serving_offsets(a, m, s), delta) for a in angles
    ])
    snr = linkmodel.snr_from_gain(gains, r, query.config)
    if snr.max() - snr.min() <= 1e-12 * snr.max():
        raise FlatProfile("equivalent SNR is independent of the BD angle")
    return float(angles[int(np.argmin(snr))])
