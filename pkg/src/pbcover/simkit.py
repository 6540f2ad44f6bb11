"""Monte Carlo validation and coverage-area benchmarks."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import fading, linkmodel, quartic
from .errors import GridTooSmall, InvalidConfig
from .linkmodel import Placement, RfConfig, Scheme
from .rng import stream


@dataclass(frozen=True)
class SimPlan:
    trials_per_point: int = 20_000
    seed: int = 0
    cell_size: float = 0.5
    extent: float | None = None
    confidence_z: float = 3.0

    def __post_init__(self):
        if self.trials_per_point < 1000:
            raise InvalidConfig("need at least 1000 trials per point")
        if self.cell_size <= 0:
            raise InvalidConfig("cell size must be positive")
        if self.extent is not None and self.extent <= 0:
            raise InvalidConfig("extent must be positive")


@dataclass(frozen=True)
class OutageEstimate:
    probability: float
    band: float
    trials: int

    @property
    def upper(self) -> float:
        return self.probability + self.band


@dataclass
class CoverageMap:
    covered: np.ndarray
    margin: np.ndarray
    cell_size: float
    extent: float
    total_area_m2: float
    gcd_empirical: float


def _as_xy(point) -> tuple[float, float]:
    if isinstance(point, linkmodel.PolarPoint):
        return point.cartesian()
    x, y = point
    return float(x), float(y)


def _serving_weights_xy(pts: np.ndarray, positions: np.ndarray, s: int, delta: float) -> np.ndarray:
    dist = np.hypot(pts[:, None, 0] - positions[None, :, 0], pts[:, None, 1] - positions[None, :, 1])
    if s < dist.shape[1]:
        dist = np.partition(dist, s - 1, axis=1)[:, :s]
    return np.maximum(dist, linkmodel.D_MIN) ** (-delta)


def _fading_draws(spec: fading.FadingSpec, s: int, n: int, g: np.random.Generator):
    kx = spec.forward_kappas(s)
    x = g.gamma(kx, 1.0 / kx, size=(n, s))
    y = g.gamma(spec.kappa_back, 1.0 / spec.kappa_back, size=n)
    return x, y


def _coherent_gain(w: np.ndarray, x: np.ndarray, g: np.random.Generator) -> np.ndarray:
    phase = np.exp(2j * np.pi * g.random(x.shape))
    return np.abs(np.sum(np.sqrt(w * x) * phase, axis=-1)) ** 2


def simulate_outage(point, placement: Placement, config: RfConfig, spec: fading.FadingSpec,
                    qos: fading.QosSpec, plan: SimPlan, coherent: bool = False, key=()) -> OutageEstimate:
    """Empirical outage probability of a BD at ``point``.

    Each trial draws a unit-mean gamma power per serving forward link and one
    for the backscatter link. By default the forward energies add; with
    ``coherent`` unit-amplitude random phases are attached and ``|sum h|^2``
    is used instead.
    """
    x0, y0 = _as_xy(point)
    n = plan.trials_per_point
    s = placement.serving_count
    r = math.hypot(x0, y0)
    if qos.gamma_th == 0:
        return OutageEstimate(0.0, 0.0, n)
    g = stream(plan.seed, *key)
    w = _serving_weights_xy(np.array([[x0, y0]]), placement.positions(), s, config.path_loss_exponent)[0]
    x, y = _fading_draws(spec, s, n, g)
    gain = _coherent_gain(w, x, g) if coherent else x @ w
    snr = linkmodel.snr_from_gain(gain, max(r, linkmodel.D_MIN), config) * y
    p = float(np.mean(snr < qos.gamma_th))
    return OutageEstimate(p, plan.confidence_z * math.sqrt(max(p * (1 - p), 1.0 / n) / n), n)


def _probe_angles(placement: Placement, n_angles: int) -> np.ndarray:
    if placement.scheme is Scheme.SYMMETRIC and placement.m_total > 1:
        # by symmetry half a sector suffices; the edge is included
        return placement.rotation + np.linspace(0.0, np.pi / placement.m_total, n_angles)
    return np.linspace(0.0, 2 * np.pi, 4 * n_angles, endpoint=False)


def empirical_gcd(placement: Placement, config: RfConfig, spec: fading.FadingSpec, qos: fading.QosSpec,
                  plan: SimPlan, r_upper: float, coarse_step: float = 0.5, n_angles: int = 9) -> float:
    """Largest ``r`` below which the worst simulated outage stays under ``epsilon``.

    The same fading draws are reused for every radius and angle, so the
    worst-angle outage is a deterministic function of ``r`` that can be
    bisected.
    """
    s = placement.serving_count
    delta = config.path_loss_exponent
    pos = placement.positions()
    angles = _probe_angles(placement, n_angles)
    x, y = _fading_draws(spec, s, plan.trials_per_point, stream(plan.seed, 1))
    # a failure needs more than eps*n outages
    limit = qos.epsilon * plan.trials_per_point

    def fails(r: float) -> bool:
        pts = np.column_stack([r * np.cos(angles), r * np.sin(angles)])
        w = _serving_weights_xy(pts, pos, s, delta)
        snr = linkmodel.snr_from_gain(x @ w.T, max(r, linkmodel.D_MIN), config) * y[:, None]
        return bool(np.any(np.sum(snr < qos.gamma_th, axis=0) >= limit))

    grid = coarse_step * np.arange(1, int(math.ceil(r_upper / coarse_step)) + 1)
    prev = 0.0
    for r in grid:
        if fails(r):
            break
        prev = r
    else:
        return float(grid[-1])
    lo, hi = prev, r
    while hi - lo > 1e-3:
        mid = 0.5 * (lo + hi)
        lo, hi = (lo, mid) if fails(mid) else (mid, hi)
    return lo


def _threshold_fn(spec: fading.FadingSpec, qos: fading.QosSpec, s: int, method: str = "closed"):
    k = spec.forward_kappas(s)
    lo, hi = float(k.min()), float(k.sum())
    if s == 1:
        hi = lo
    curve = fading.ThresholdCurve(qos, lo, hi, spec.kappa_back, method)
    if curve._const is not None:
        const = curve._const
        return lambda w: np.full(w.shape[0], const)
    return lambda w: curve(fading.sum_shape(w, k))


def margin_at_points(pts: np.ndarray, positions: np.ndarray, s: int, config: RfConfig, threshold) -> np.ndarray:
    """``gamma_eq / gamma_eq_th`` at Cartesian points for exact PB positions."""
    w = _serving_weights_xy(pts, positions, s, config.path_loss_exponent)
    r = np.hypot(pts[:, 0], pts[:, 1])
    with np.errstate(divide="ignore"):
        snr = linkmodel.snr_from_gain(w.sum(axis=1), np.maximum(r, 1e-300), config)
    return snr / threshold(w)


def _default_extent(placement: Placement, config: RfConfig, spec, qos) -> float:
    s = placement.serving_count
    th = fading.equivalent_threshold(qos, fading.FadingSpec(float(spec.forward_kappas(s).sum()), spec.kappa_back))
    sig = quartic.varsigma(s * linkmodel.alpha(config), th, config.path_loss_exponent)
    reach = float(np.max(np.hypot(*placement.positions().T)))
    return 1.2 * max(quartic.corollary1_asymptotics(sig)[1], reach + sig**0.25)


def total_coverage_area(placement: Placement, config: RfConfig, spec: fading.FadingSpec,
                        qos: fading.QosSpec, plan: SimPlan, threshold=None) -> CoverageMap:
    """Area of grid cells whose centre meets ``gamma_eq >= gamma_eq_th``.

    Uses the exact PB positions rather than the sector reduction. Without an
    explicit extent the grid grows until no covered cell touches its border.
    """
    threshold = threshold or _threshold_fn(spec, qos, placement.serving_count)
    extent = plan.extent if plan.extent is not None else _default_extent(placement, config, spec, qos)
    while True:
        try:
            return _area_on_grid(placement, config, plan.cell_size, extent, threshold)
        except GridTooSmall:
            if plan.extent is not None:
                raise
            extent *= 1.5


def _area_on_grid(placement, config, cell, extent, threshold) -> CoverageMap:
    n = int(math.ceil(extent / cell))
    centres = (np.arange(-n, n) + 0.5) * cell
    pos = placement.positions()
    margin = np.empty((centres.size, centres.size))
    rows = max(1, 400_000 // centres.size)
    for i in range(0, centres.size, rows):
        yy, xx = np.meshgrid(centres[i:i + rows], centres, indexing="ij")
        pts = np.column_stack([xx.ravel(), yy.ravel()])
        margin[i:i + rows] = margin_at_points(pts, pos, placement.serving_count, config, threshold).reshape(xx.shape)
    covered = margin >= 1.0
    if covered[0].any() or covered[-1].any() or covered[:, 0].any() or covered[:, -1].any():
        raise GridTooSmall(f"coverage reaches the border of a {2 * n * cell:.1f} m grid")
    yy, xx = np.meshgrid(centres, centres, indexing="ij")
    rr = np.hypot(xx, yy)
    gcd = float(rr[~covered].min()) if (~covered).any() else float("inf")
    return CoverageMap(covered, margin, cell, n * cell, float(covered.sum()) * cell * cell, gcd)


def polar_gcd(placement: Placement, config: RfConfig, threshold, r_upper: float,
              r_step: float = 0.25, n_angles: int = 360, block: int = 64) -> float:
    """GCD of an arbitrary placement: the nearest failing point on a polar grid."""
    angles = np.linspace(0.0, 2 * np.pi, n_angles, endpoint=False)
    radii = r_step * np.arange(1, int(math.ceil(r_upper / r_step)) + 1)
    pos = placement.positions()
    for i in range(0, radii.size, block):
        rr, aa = np.meshgrid(radii[i:i + block], angles, indexing="ij")
        pts = np.column_stack([(rr * np.cos(aa)).ravel(), (rr * np.sin(aa)).ravel()])
        m = margin_at_points(pts, pos, placement.serving_count, config, threshold).reshape(rr.shape)
        bad = np.flatnonzero((m < 1.0).any(axis=1))
        if bad.size:
            k = i + int(bad[0])
            return float(radii[k - 1]) if k > 0 else 0.0
    return float(radii[-1])


@dataclass
class TwoTierReport:
    m_total: int
    single_tier_gcd: float
    best_two_tier_gcd: float
    best: dict
    rows: list


def compare_two_tier(m_total: int, config: RfConfig, spec: fading.FadingSpec, qos: fading.QosSpec,
                     plan: SimPlan, serving_count: int = 1, n_outer: int = 9, outer_span: float = 0.2,
                     n_rotation: int = 5, r_step: float = 0.25, n_angles: int = 360) -> TwoTierReport:
    """Best two-tier GCD against the symmetric single-tier GCD at its optimum.

    The inner tier of ``M1`` PBs sits at the closed-form optimum for ``M1``;
    the outer-tier distance is swept within ``outer_span`` of the single-tier
    optimum and the outer tier is rotated over ``[0, pi/M2]``.
    """
    if m_total < 6:
        raise InvalidConfig("two tiers need M >= 6")
    s = serving_count
    threshold = _threshold_fn(spec, qos, s)
    th = fading.equivalent_threshold(qos, fading.FadingSpec(float(spec.forward_kappas(s).sum()), spec.kappa_back))
    sig = quartic.varsigma(s * linkmodel.alpha(config), th, config.path_loss_exponent)
    r_upper = 1.5 * quartic.corollary1_asymptotics(sig)[1]
    d_single = quartic.theorem1_dstar(sig, m_total)
    single = polar_gcd(Placement(m_total, d_single, s), config, threshold, r_upper, r_step, n_angles)
    rows = []
    best = {"gcd": -1.0}
    for m1 in range(3, m_total - 2):
        m2 = m_total - m1
        d_in = quartic.theorem1_dstar(sig, m1)
        for d_out in d_single * np.linspace(1 - outer_span, 1 + outer_span, n_outer):
            for rot in np.linspace(0.0, np.pi / m2, n_rotation):
                p = Placement.two_tier(m1, d_in, m2, float(d_out), float(rot), serving_count=s)
                gcd = polar_gcd(p, config, threshold, r_upper, r_step, n_angles)
                row = {"m_inner": m1, "m_outer": m2, "d_inner": d_in, "d_outer": float(d_out),
                       "rotation": float(rot), "gcd": gcd}
                rows.append(row)
                if gcd > best["gcd"]:
                    best = row
    return TwoTierReport(m_total, single, best["gcd"], best, rows)


@dataclass(frozen=True)
class AreaStats:
    mean: float
    std: float
    p10: float
    p50: float
    p90: float
    areas: tuple


def random_placement_area(m_total: int, max_radius: float, n_realizations: int, config: RfConfig,
                          spec: fading.FadingSpec, qos: fading.QosSpec, plan: SimPlan) -> AreaStats:
    """Coverage-area statistics for PBs dropped uniformly in a disk; nearest-PB service."""
    if n_realizations < 50:
        raise InvalidConfig("need at least 50 realizations")
    seeds = stream(plan.seed, 2).integers(0, 2**63 - 1, size=n_realizations)
    threshold = _threshold_fn(spec, qos, 1)
    areas = []
    for sd in seeds:
        p = Placement(m_total, scheme=Scheme.RANDOM, max_radius=max_radius, seed=int(sd))
        areas.append(total_coverage_area(p, config, spec, qos, plan, threshold).total_area_m2)
    a = np.array(areas)
    p10, p50, p90 = np.percentile(a, [10, 50, 90])
    return AreaStats(float(a.mean()), float(a.std(ddof=1)), float(p10), float(p50), float(p90), tuple(areas))


def gcd_optimal_d(m_total, config, spec, qos) -> float:
    th = fading.equivalent_threshold(qos, spec)
    return quartic.theorem1_dstar(quartic.varsigma(linkmodel.alpha(config), th, config.path_loss_exponent), m_total)


def symmetric_area(m_total: int, config: RfConfig, spec: fading.FadingSpec, qos: fading.QosSpec,
                   plan: SimPlan, d: float | None = None) -> CoverageMap:
    """Total coverage area of the symmetric single-tier scheme (GCD-optimal ``d`` by default)."""
    if d is None:
        d = gcd_optimal_d(m_total, config, spec, qos)
    return total_coverage_area(Placement(m_total, d), config, spec, qos, plan)


def best_symmetric_area(m_total: int, config: RfConfig, spec: fading.FadingSpec, qos: fading.QosSpec,
                        plan: SimPlan, max_factor: float = 3.0, n_points: int = 51):
    """Sweep ``d`` up to ``max_factor`` times the GCD-optimal distance; returns (d, CoverageMap).

    Area keeps growing past the GCD optimum because covered patches beyond
    the GCD count too, so the area optimum sits at a larger ``d``.
    """
    d_sym = gcd_optimal_d(m_total, config, spec, qos)
    best = None
    for d in np.linspace(0.0, max_factor * d_sym, n_points):
        cm = total_coverage_area(Placement(m_total, float(d)), config, spec, qos, plan)
        if best is None or cm.total_area_m2 > best[1].total_area_m2:
            best = (float(d), cm)
    return best


def best_random_area(m_total: int, d_sym: float, n_realizations: int, config: RfConfig,
                     spec: fading.FadingSpec, qos: fading.QosSpec, plan: SimPlan, n_radii: int = 20,
                     max_factor: float = 3.0):
    """Sweep the random-disk radius up to ``max_factor`` times ``d_sym``; returns (radius, stats).

    Every radius reuses the same realization seeds.
    """
    best = None
    for rad in np.linspace(max_factor * d_sym / n_radii, max_factor * d_sym, n_radii):
        st = random_placement_area(m_total, float(rad), n_realizations, config, spec, qos, plan)
        if best is None or st.mean > best[1].mean:
            best = (float(rad), st)
    return best
