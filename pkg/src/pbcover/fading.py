"""Nakagami (gamma-power) fading statistics.

All fading powers are unit-mean gammas ``Gamma(k, 1/k)``. With several
serving PBs the forward fading is the path-loss weighted average of the
per-PB gammas, approximated by a single moment-matched gamma; the SNR then
factors as ``gamma_eq * X * Y``.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass
from typing import Sequence

import mpmath
import numpy as np
from scipy import optimize

from . import linkmodel
from .bessel import bessel_k_orders
from .errors import SingularParameterization, UnsupportedShape
from .rng import stream

SINGULAR_TOL = 1e-3
DEFAULT_SAMPLES = 1_000_000


@dataclass(frozen=True)
class GammaParams:
    shape: float
    scale: float

    def __post_init__(self):
        if self.shape <= 0 or self.scale <= 0:
            raise ValueError("gamma shape and scale must be positive")

    @classmethod
    def unit_mean(cls, kappa: float) -> "GammaParams":
        return cls(kappa, 1.0 / kappa)

    @property
    def mean(self) -> float:
        return self.shape * self.scale

    @property
    def var(self) -> float:
        return self.shape * self.scale**2


@dataclass(frozen=True)
class FadingSpec:
    """Nakagami parameters of the PB->BD links and the BD->reader link.

    ``kappa_forward`` is either one value shared by every PB or one value
    per serving PB; ``weights`` are the per-PB deterministic path gains
    used when the forward powers are summed.
    """

    kappa_forward: float | tuple[float, ...] = 4.0
    kappa_back: float = 4.0
    weights: tuple[float, ...] | None = None

    def __post_init__(self):
        kf = np.atleast_1d(self.kappa_forward)
        if np.any(kf <= 0) or self.kappa_back <= 0:
            raise ValueError("Nakagami parameters must be positive")
        if self.weights is not None and np.any(np.asarray(self.weights) <= 0):
            raise ValueError("path-loss weights must be positive")

    def forward_kappas(self, n: int) -> np.ndarray:
        kf = np.atleast_1d(np.asarray(self.kappa_forward, dtype=float))
        return np.broadcast_to(kf, (n,)).copy() if kf.size == 1 else kf[:n]

    def with_weights(self, weights) -> "FadingSpec":
        return FadingSpec(self.kappa_forward, self.kappa_back, tuple(float(w) for w in weights))

    def forward_law(self) -> GammaParams:
        """Moment-matched gamma for the weighted average of the forward powers."""
        w = np.asarray(self.weights if self.weights is not None else (1.0,), dtype=float)
        w = w / w.sum()
        kf = self.forward_kappas(w.size)
        return gamma_sum_approx([GammaParams(k, wi / k) for k, wi in zip(kf, w)])


@dataclass(frozen=True)
class QosSpec:
    gamma_th: float
    epsilon: float

    def __post_init__(self):
        if self.gamma_th < 0:
            raise ValueError("SNR threshold must be >= 0")
        if not 0 < self.epsilon < 1:
            raise ValueError("outage cap must lie in (0, 1)")

    @classmethod
    def from_db(cls, gamma_th_db: float, epsilon: float) -> "QosSpec":
        return cls(linkmodel.db_to_linear(gamma_th_db), epsilon)

    def gamma_eq_th(self, spec: FadingSpec, method: str = "closed") -> float:
        return equivalent_threshold(self, spec, method)


def sample_gamma(params: GammaParams, rng: np.random.Generator, size=None):
    return rng.gamma(params.shape, params.scale, size)


def gamma_sum_approx(parts: Sequence[GammaParams]) -> GammaParams:
    """Single gamma with the mean and variance of ``sum(parts)``."""
    if not parts:
        raise ValueError("need at least one gamma component")
    if len(parts) == 1:
        return parts[0]
    mu = math.fsum(p.shape * p.scale for p in parts)
    second = math.fsum(p.shape * p.scale**2 for p in parts)
    return GammaParams(mu * mu / second, second / mu)


def sum_shape(weights, kappas) -> np.ndarray:
    """Vectorised moment-matched shape of the normalised weighted forward sum.

    ``weights`` has the PB axis last; returns ``1 / sum(w_i^2 / k_i)`` for
    weights normalised to unit sum.
    """
    w = np.asarray(weights, dtype=float)
    w = w / w.sum(axis=-1, keepdims=True)
    return 1.0 / np.sum(w * w / np.asarray(kappas, dtype=float), axis=-1)


def _as_int(k: float) -> int | None:
    r = round(k)
    return int(r) if abs(k - r) < 1e-9 and r >= 1 else None


def product_cdf_closed(u: float, kx: int, ky: int) -> float:
    """``P(XY < u)`` for unit-mean gammas with integer shapes (finite Bessel-K sum)."""
    ix, iy = _as_int(kx), _as_int(ky)
    if ix is None or iy is None:
        raise UnsupportedShape(f"closed-form product CDF needs integer shapes, got ({kx}, {ky})")
    if u <= 0:
        return 0.0
    v = ix * iy * u
    z = 2.0 * math.sqrt(v)
    orders = bessel_k_orders(max(iy, ix), z)
    log_v = math.log(v)
    total = 0.0
    for n in range(ix):
        log_coef = math.log(2.0) - math.lgamma(n + 1) - math.lgamma(iy) + 0.5 * (iy + n) * log_v
        total += math.exp(log_coef) * orders[abs(iy - n)]
    return min(max(1.0 - total, 0.0), 1.0)


def is_singular(kx: float, ky: float) -> bool:
    diff = kx - ky
    return abs(diff - round(diff)) < SINGULAR_TOL


def _weighted_hyp(a, b, x):
    """``Gamma(a) x^a 1F2~(a; a+1, a-b+1; x)`` at the current mpmath precision."""
    total = mpmath.mpf(0)
    term_pow = mpmath.mpf(1)
    k = 0
    tol = mpmath.mpf(10) ** (-mpmath.mp.dps)
    while True:
        term = term_pow / (a + k) * mpmath.rgamma(a - b + 1 + k)
        total += term
        if k > x and abs(term) < tol * abs(total):
            break
        k += 1
        term_pow *= x / k
    return mpmath.power(x, a) * total


def product_cdf_general(u: float, kx: float, ky: float) -> float:
    """``P(XY < u)`` for unit-mean gammas with real shapes via regularized 1F2 terms.

    Raises :class:`SingularParameterization` when ``kx - ky`` is within
    ``SINGULAR_TOL`` of an integer, where the cosecant prefactor blows up.
    """
    if is_singular(kx, ky):
        raise SingularParameterization(f"shape difference {kx - ky} too close to an integer")
    if u <= 0:
        return 0.0
    x = kx * ky * u
    # the two series are ~exp(2 sqrt x) and cancel down to O(1)
    dps = 20 + int(2.0 * math.sqrt(x) / math.log(10)) + 1
    with mpmath.workdps(dps):
        a, b, xm = mpmath.mpf(kx), mpmath.mpf(ky), mpmath.mpf(x)
        pref = mpmath.pi / mpmath.sinpi(a - b) / (mpmath.gamma(a) * mpmath.gamma(b))
        val = pref * (_weighted_hyp(b, a, xm) - _weighted_hyp(a, b, xm))
        out = float(val)
    return min(max(out, 0.0), 1.0)


@functools.lru_cache(maxsize=8)
def _product_samples(kx: float, ky: float, n: int, seed: int) -> np.ndarray:
    g = stream(seed, 0)
    x = g.gamma(kx, 1.0 / kx, n)
    y = g.gamma(ky, 1.0 / ky, n)
    z = np.sort(x * y)
    z.setflags(write=False)
    return z


def product_samples(kx: float, ky: float, n: int = DEFAULT_SAMPLES, seed: int = 0) -> np.ndarray:
    """Sorted samples of ``X * Y`` (read-only, cached per arguments)."""
    return _product_samples(float(kx), float(ky), int(n), int(seed))


def product_cdf_empirical(u, kx, ky, n_samples: int = DEFAULT_SAMPLES, seed: int = 0):
    z = product_samples(kx, ky, n_samples, seed)
    return np.searchsorted(z, u, side="left") / z.size


def product_cdf(u: float, kx: float, ky: float, n_samples: int = DEFAULT_SAMPLES, seed: int = 0) -> float:
    """Best available product CDF: closed form, then 1F2 series, then samples."""
    if _as_int(kx) is not None and _as_int(ky) is not None:
        return product_cdf_closed(u, kx, ky)
    if not is_singular(kx, ky):
        return product_cdf_general(u, kx, ky)
    return float(product_cdf_empirical(u, kx, ky, n_samples, seed))


def _dist_shapes(dist) -> tuple[float, float]:
    if isinstance(dist, FadingSpec):
        return dist.forward_law().shape, dist.kappa_back
    kx, ky = dist
    return float(kx), float(ky)


def empirical_inverse_cdf(dist, epsilon: float, n_samples: int = DEFAULT_SAMPLES, seed: int = 0) -> float:
    """epsilon-quantile of ``X_sum * Y`` from sorted samples, linear interpolation."""
    if not 0 < epsilon < 1:
        raise ValueError("epsilon must lie in (0, 1)")
    if n_samples < 100_000:
        raise ValueError("need at least 1e5 samples")
    kx, ky = _dist_shapes(dist)
    z = product_samples(kx, ky, n_samples, seed)
    return float(np.quantile(z, epsilon, method="linear"))


@functools.lru_cache(maxsize=4096)
def _inverse_cdf_closed(epsilon: float, kx: float, ky: float) -> float:
    if _as_int(kx) is not None and _as_int(ky) is not None:
        cdf = functools.partial(product_cdf_closed, kx=kx, ky=ky)
    elif not is_singular(kx, ky):
        cdf = functools.partial(product_cdf_general, kx=kx, ky=ky)
    else:
        return empirical_inverse_cdf((kx, ky), epsilon)
    hi = 1.0
    while cdf(hi) < epsilon:
        hi *= 2.0
    lo = hi / 2.0
    while cdf(lo) > epsilon:
        lo /= 2.0
    return optimize.brentq(lambda u: cdf(u) - epsilon, lo, hi, xtol=1e-14, rtol=1e-12)


def inverse_product_cdf(epsilon: float, kx: float, ky: float, method: str = "closed", **kw) -> float:
    if method == "closed":
        return _inverse_cdf_closed(float(epsilon), float(kx), float(ky))
    if method == "empirical":
        return empirical_inverse_cdf((kx, ky), epsilon, **kw)
    raise ValueError(f"unknown method {method!r}")


def equivalent_threshold(qos: QosSpec, spec: FadingSpec, method: str = "closed", **kw) -> float:
    """Deterministic SNR threshold equivalent to ``P_out < epsilon``."""
    kx, ky = _dist_shapes(spec)
    return qos.gamma_th / inverse_product_cdf(qos.epsilon, kx, ky, method, **kw)


class ThresholdCurve:
    """Equivalent threshold as a smooth function of the forward sum shape.

    With more than two serving PBs the sum shape changes with geometry.
    Thresholds are computed exactly at Chebyshev nodes in ``1/kappa`` and
    interpolated between them.
    """

    def __init__(self, qos: QosSpec, kappa_lo: float, kappa_hi: float, kappa_back: float,
                 method: str = "closed", nodes: int = 40):
        from scipy.interpolate import BarycentricInterpolator

        self.qos = qos
        self.kappa_back = kappa_back
        self.method = method
        self.lo, self.hi = 1.0 / kappa_hi, 1.0 / kappa_lo
        if self.hi - self.lo < 1e-12:
            self._const = equivalent_threshold(qos, FadingSpec(kappa_lo, kappa_back), method)
            return
        self._const = None
        j = np.arange(nodes)
        t = 0.5 * (self.lo + self.hi) + 0.5 * (self.hi - self.lo) * np.cos(np.pi * (2 * j + 1) / (2 * nodes))
        kap = 1.0 / t
        for i, k in enumerate(kap):
            # keep nodes off the 1F2 singular set so the smooth series path is used
            if is_singular(k, kappa_back) and _as_int(k) is None:
                kap[i] = k + 2.5 * SINGULAR_TOL
        vals = [math.log(equivalent_threshold(qos, FadingSpec(k, kappa_back), method)) for k in kap]
        self._interp = BarycentricInterpolator(1.0 / kap, vals)

    def __call__(self, kappa_sigma):
        ks = np.asarray(kappa_sigma, dtype=float)
        if self._const is not None:
            return np.full(ks.shape, self._const)
        t = np.clip(1.0 / ks, self.lo, self.hi)
        return np.exp(self._interp(t))


def serving_weights(p: linkmodel.PolarPoint, placement: linkmodel.Placement, config: linkmodel.RfConfig):
    """Per-PB path gains ``D^-delta`` of the serving set."""
    delta = config.path_loss_exponent
    s = placement.serving_count
    if placement.scheme is linkmodel.Scheme.SYMMETRIC:
        theta = linkmodel.canonical_offset(p.theta_offset - placement.rotation, placement.m_total)
        off = linkmodel.serving_offsets(theta, placement.m_total, s)
        d2 = placement.d**2 + p.r**2 - 2 * placement.d * p.r * np.cos(off)
        return np.maximum(d2, linkmodel.D_MIN**2) ** (-delta / 2)
    x, y = p.cartesian()
    pos = placement.positions()
    dist = np.sort(np.hypot(pos[:, 0] - x, pos[:, 1] - y))[:s]
    return np.maximum(dist, linkmodel.D_MIN) ** (-delta)


def outage_probability(p: linkmodel.PolarPoint, placement: linkmodel.Placement, config: linkmodel.RfConfig,
                       spec: FadingSpec, qos: QosSpec) -> float:
    """Outage probability of a BD at ``p`` (gamma-sum approximation for S >= 2)."""
    geq = linkmodel.equivalent_snr(p, placement, config)
    if geq <= 0:
        return 1.0
    if qos.gamma_th == 0:
        return 0.0
    if not math.isfinite(geq):
        return 0.0
    w = serving_weights(p, placement, config)
    kx = spec.with_weights(w).forward_law().shape if w.size > 1 else float(spec.forward_kappas(1)[0])
    return product_cdf(qos.gamma_th / geq, kx, spec.kappa_back)
