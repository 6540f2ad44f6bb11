"""Deterministic link budget and equivalent (fading-free) SNR.

The reader sits at the origin. In the symmetric single-tier scheme PB ``m``
sits at distance ``d`` and angle ``2*pi*m/M``; a BD is described by its
distance ``r`` from the reader and its angular offset from the nearest PB.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from enum import Enum

import numpy as np

from .errors import DegenerateGeometry, InvalidConfig

SPEED_OF_LIGHT = 299_792_458.0
# closest a BD may sit to a PB; the path-loss model diverges at 0
D_MIN = 0.1


def dbm_to_watts(dbm: float) -> float:
    return 10.0 ** (dbm / 10.0) / 1000.0


def db_to_linear(db: float) -> float:
    return 10.0 ** (db / 10.0)


class Modulation(str, Enum):
    OOK = "OOK"
    FSK = "FSK"


class Scheme(str, Enum):
    SYMMETRIC = "SymmetricSingleTier"
    RANDOM = "Random"
    TWO_TIER = "TwoTier"


@dataclass(frozen=True)
class RfConfig:
    """Distance-independent link-budget parameters (linear units)."""

    transmit_power_watts: float
    wavelength_m: float
    path_loss_exponent: float
    switching_loss: float
    samples_per_symbol: int
    noise_power_watts: float
    structural_mode: complex
    reflection_coeffs: tuple[complex, complex]
    bd_antenna_gain_linear: float = 1.0
    pol_mismatch_forward: float = 1.0
    pol_mismatch_back: float = 1.0
    modulation: Modulation = Modulation.OOK
    circuit_power_watts: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "modulation", Modulation(self.modulation))
        object.__setattr__(self, "structural_mode", complex(self.structural_mode))
        g0, g1 = self.reflection_coeffs
        object.__setattr__(self, "reflection_coeffs", (complex(g0), complex(g1)))
        if self.transmit_power_watts <= 0:
            raise InvalidConfig("transmit power must be positive")
        if self.wavelength_m <= 0:
            raise InvalidConfig("wavelength must be positive")
        if self.path_loss_exponent < 2:
            raise InvalidConfig("path loss exponent must be >= 2")
        if not 0 < self.switching_loss <= 1:
            raise InvalidConfig("switching loss must lie in (0, 1]")
        if int(self.samples_per_symbol) != self.samples_per_symbol or self.samples_per_symbol < 1:
            raise InvalidConfig("samples per symbol must be a positive integer")
        if self.noise_power_watts <= 0:
            raise InvalidConfig("noise power must be positive")
        if self.bd_antenna_gain_linear <= 0:
            raise InvalidConfig("antenna gain must be positive")
        for chi in (self.pol_mismatch_forward, self.pol_mismatch_back):
            if not 0 < chi <= 1:
                raise InvalidConfig("polarization mismatch must lie in (0, 1]")
        if self.circuit_power_watts < 0:
            raise InvalidConfig("circuit power must be >= 0")
        if any(abs(g) > 1 + 1e-12 for g in self.reflection_coeffs):
            raise InvalidConfig("reflection coefficients must have magnitude <= 1")
        if self.modulation_depth <= 0:
            raise InvalidConfig("reflection coefficients give zero modulation depth")

    @classmethod
    def baseline(cls, **overrides) -> "RfConfig":
        """Numerical-results baseline: 27 dBm, 915 MHz, delta=2.4, Kim et al. tag."""
        a = complex(0.6047, 0.5042)
        params = dict(
            transmit_power_watts=dbm_to_watts(27.0),
            wavelength_m=SPEED_OF_LIGHT / 915e6,
            path_loss_exponent=2.4,
            switching_loss=0.49,
            samples_per_symbol=20,
            noise_power_watts=dbm_to_watts(-110.0),
            structural_mode=a,
            reflection_coeffs=(a, -a / abs(a)),
            bd_antenna_gain_linear=db_to_linear(2.1),
            pol_mismatch_forward=0.8,
            pol_mismatch_back=0.8,
        )
        params.update(overrides)
        return cls(**params)

    @property
    def beta0(self) -> float:
        return (self.wavelength_m / (4 * math.pi)) ** 2

    @property
    def baseband_levels(self) -> tuple[complex, complex]:
        a = self.structural_mode
        return a - self.reflection_coeffs[0], a - self.reflection_coeffs[1]

    @property
    def modulation_depth(self) -> float:
        """``|b0 - b1|^2``."""
        b0, b1 = self.baseband_levels
        return abs(b0 - b1) ** 2

    @property
    def modulation_factor(self) -> float:
        return 4 / math.pi**2 if self.modulation is Modulation.FSK else 1.0

    @property
    def forward_factor(self) -> float:
        """Received power at unit PB-BD distance, before fading."""
        return self.transmit_power_watts * self.beta0 * self.bd_antenna_gain_linear * self.pol_mismatch_forward

    @property
    def backscatter_factor(self) -> float:
        """SNR per watt of BD received power at unit BD-reader distance."""
        return (
            self.switching_loss
            * self.beta0
            * self.bd_antenna_gain_linear
            * self.pol_mismatch_back
            * self.modulation_depth
            * self.samples_per_symbol
            * self.modulation_factor
            / self.noise_power_watts
        )

    def with_(self, **changes) -> "RfConfig":
        return replace(self, **changes)


def alpha(config: RfConfig) -> float:
    """Distance-independent SNR scale (includes the FSK 4/pi^2 factor)."""
    return config.forward_factor * config.backscatter_factor


@dataclass(frozen=True)
class PolarPoint:
    r: float
    theta_offset: float = 0.0

    def canonical(self, m_total: int) -> "PolarPoint":
        """Reduce the angle into ``[-pi/M, pi/M]`` (offset from nearest PB)."""
        return PolarPoint(self.r, canonical_offset(self.theta_offset, m_total))

    def cartesian(self) -> tuple[float, float]:
        return self.r * math.cos(self.theta_offset), self.r * math.sin(self.theta_offset)


def canonical_offset(theta, m_total: int):
    width = 2 * np.pi / m_total
    out = np.asarray(theta, dtype=float) - width * np.round(np.asarray(theta, dtype=float) / width)
    return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True)
class Placement:
    """PB deployment.

    Single-tier PBs sit at angles ``2*pi*m/M``. Random placements draw
    ``m_total`` PBs uniformly in a disk of ``max_radius`` from ``seed``.
    Two-tier placements put ``m_inner`` PBs at ``d_inner`` and ``m_outer``
    at ``d_outer``, the outer tier rotated by ``rotation_offset``.
    """

    m_total: int
    d: float = 0.0
    serving_count: int = 1
    scheme: Scheme = Scheme.SYMMETRIC
    max_radius: float = 0.0
    seed: int = 0
    m_inner: int = 0
    d_inner: float = 0.0
    m_outer: int = 0
    d_outer: float = 0.0
    rotation_offset: float = 0.0
    rotation: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "scheme", Scheme(self.scheme))
        if self.m_total < 1:
            raise InvalidConfig("need at least one PB")
        if not 1 <= self.serving_count <= self.m_total:
            raise InvalidConfig("serving count must lie in [1, M]")
        if self.d < 0 or self.max_radius < 0:
            raise InvalidConfig("distances must be non-negative")
        if self.scheme is Scheme.TWO_TIER:
            if self.m_inner < 3 or self.m_outer < 3:
                raise InvalidConfig("each tier needs at least 3 PBs")
            if self.m_inner + self.m_outer != self.m_total:
                raise InvalidConfig("tier sizes must add up to m_total")

    @classmethod
    def two_tier(cls, m_inner, d_inner, m_outer, d_outer, rotation_offset=0.0, serving_count=1):
        return cls(
            m_total=m_inner + m_outer,
            serving_count=serving_count,
            scheme=Scheme.TWO_TIER,
            m_inner=m_inner,
            d_inner=d_inner,
            m_outer=m_outer,
            d_outer=d_outer,
            rotation_offset=rotation_offset,
        )

    def positions(self) -> np.ndarray:
        """Cartesian PB coordinates, shape ``(M, 2)``."""
        if self.scheme is Scheme.SYMMETRIC:
            ang = 2 * np.pi * np.arange(self.m_total) / self.m_total + self.rotation
            rad = np.full(self.m_total, self.d)
        elif self.scheme is Scheme.TWO_TIER:
            ang = np.concatenate(
                [
                    2 * np.pi * np.arange(self.m_inner) / self.m_inner,
                    2 * np.pi * np.arange(self.m_outer) / self.m_outer + self.rotation_offset,
                ]
            ) + self.rotation
            rad = np.concatenate([np.full(self.m_inner, self.d_inner), np.full(self.m_outer, self.d_outer)])
        else:
            from .rng import stream

            g = stream(self.seed, 0)
            rad = self.max_radius * np.sqrt(g.random(self.m_total))
            ang = 2 * np.pi * g.random(self.m_total) + self.rotation
        return np.column_stack([rad * np.cos(ang), rad * np.sin(ang)])


def pb_bd_distance(p: PolarPoint, d: float, pb_index_offset: int, m_total: int) -> float:
    """Distance from the BD to the PB ``pb_index_offset`` sectors away from its own."""
    ang = p.theta_offset + 2 * math.pi * pb_index_offset / m_total
    return math.sqrt(max(d * d + p.r * p.r - 2 * d * p.r * math.cos(ang), 0.0))


def serving_offsets(theta_offset: float, m_total: int, serving_count: int) -> np.ndarray:
    """Angular offsets between a BD and its ``serving_count`` nearest PBs."""
    phi = canonical_pi(theta_offset - 2 * np.pi * np.arange(m_total) / m_total)
    order = np.argsort(np.abs(phi), kind="stable")
    return phi[order[:serving_count]]


def canonical_pi(angle):
    """Wrap angles into ``(-pi, pi]``."""
    a = np.mod(np.asarray(angle, dtype=float) + np.pi, 2 * np.pi) - np.pi
    return np.where(a == -np.pi, np.pi, a)


def edge_offsets(m_total: int, serving_count: int) -> np.ndarray:
    return serving_offsets(np.pi / m_total, m_total, serving_count)


def forward_gain(r, d, offsets, delta):
    """``sum_m D_m^-delta`` over serving PBs; broadcasts over ``r`` and ``d``."""
    r = np.asarray(r, dtype=float)[..., None]
    d = np.asarray(d, dtype=float)[..., None]
    dist2 = d * d + r * r - 2 * d * r * np.cos(offsets)
    return np.sum(np.maximum(dist2, 0.0) ** (-delta / 2), axis=-1)


def snr_from_gain(gain, r, config: RfConfig):
    """Equivalent SNR from the summed forward path gain; applies circuit-power clipping."""
    r = np.asarray(r, dtype=float)
    back = config.backscatter_factor * r ** (-config.path_loss_exponent)
    if config.circuit_power_watts > 0:
        return np.maximum(config.forward_factor * gain - config.circuit_power_watts, 0.0) * back
    return config.forward_factor * gain * back


def _check_geometry(r, dists):
    if r <= 0:
        raise DegenerateGeometry("BD located on the reader (r = 0)")
    if np.min(dists) < D_MIN:
        raise DegenerateGeometry(f"BD within {D_MIN} m of a serving PB")


def equivalent_snr(p: PolarPoint, placement: Placement, config: RfConfig) -> float:
    """Fading-free SNR of a BD served by its ``S`` nearest PBs."""
    s = placement.serving_count
    delta = config.path_loss_exponent
    if placement.scheme is not Scheme.SYMMETRIC:
        x, y = p.cartesian()
        return snr_at_points(np.array([[x, y]]), placement.positions(), s, config, strict=True)[0]
    m = placement.m_total
    theta = canonical_offset(p.theta_offset - placement.rotation, m)
    offsets = serving_offsets(theta, m, s)
    dists = np.sqrt(np.maximum(placement.d**2 + p.r**2 - 2 * placement.d * p.r * np.cos(offsets), 0.0))
    _check_geometry(p.r, dists)
    if s == m and math.isclose(abs(theta), math.pi / m, rel_tol=0, abs_tol=1e-12):
        gain = full_service_edge_gain(p.r, placement.d, m, delta)
    else:
        gain = np.sum(dists ** (-delta))
    return float(snr_from_gain(gain, p.r, config))


def full_service_edge_gain(r, d, m_total: int, delta: float):
    """Forward gain for an edge BD served by all ``M`` PBs, pairing mirror-image PBs.

    Even ``M``: PBs come in pairs at angular distance ``(2k+1)pi/M``.
    Odd ``M``: the same pairs plus the single PB diametrically opposite.
    """
    r = np.asarray(r, dtype=float)
    k = np.arange(m_total // 2)
    ang = (2 * k + 1) * np.pi / m_total
    dist2 = d * d + r[..., None] ** 2 - 2 * d * r[..., None] * np.cos(ang)
    gain = 2 * np.sum(dist2 ** (-delta / 2), axis=-1)
    if m_total % 2:
        gain = gain + (d + r) ** (-delta)
    return gain


def snr_at_points(points, pb_positions, serving_count: int, config: RfConfig, strict: bool = False):
    """Equivalent SNR at Cartesian ``points`` (shape ``(n, 2)``) for arbitrary PB positions.

    With ``strict`` the usual :class:`DegenerateGeometry` checks apply;
    otherwise points on the reader or inside ``D_MIN`` of a PB get ``inf``.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    r = np.hypot(pts[:, 0], pts[:, 1])
    dist = np.hypot(pts[:, None, 0] - pb_positions[None, :, 0], pts[:, None, 1] - pb_positions[None, :, 1])
    if serving_count < dist.shape[1]:
        dist = np.partition(dist, serving_count - 1, axis=1)[:, :serving_count]
    nearest = dist.min(axis=1)
    if strict:
        for ri, di in zip(r, nearest):
            _check_geometry(ri, [di])
    bad = (r <= 0) | (nearest < D_MIN)
    with np.errstate(divide="ignore"):
        gain = np.sum(np.maximum(dist, D_MIN) ** (-config.path_loss_exponent), axis=1)
        snr = snr_from_gain(gain, np.where(bad, 1.0, r), config)
    return np.where(bad, np.inf, snr)


def snr_ratio_chi(placement: Placement, r: float, config: RfConfig) -> float:
    """Ratio of the edge SNR with all PBs serving to the edge SNR with the nearest PB only."""
    m = placement.m_total
    delta = config.path_loss_exponent
    if r <= 0:
        raise DegenerateGeometry("BD located on the reader (r = 0)")
    near = forward_gain(r, placement.d, edge_offsets(m, 1), delta)
    full = forward_gain(r, placement.d, edge_offsets(m, m), delta)
    if near ** (-1 / delta) < D_MIN:
        raise DegenerateGeometry(f"BD within {D_MIN} m of a serving PB")
    return float(full / near)


def sector_edge_snr(r, d, m_total: int, serving_count: int, config: RfConfig):
    """Vectorised edge SNR used by the planner; no geometry checks."""
    gain = forward_gain(r, d, edge_offsets(m_total, serving_count), config.path_loss_exponent)
    return snr_from_gain(gain, r, config)
