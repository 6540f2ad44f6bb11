"""Modified Bessel function of the second kind for integer order.

K0 and K1 come from their power series for ``x <= 2`` and from Steed's
continued fraction (Temme's formulation) above; higher orders follow by
upward recurrence, which is stable for K.
"""

from __future__ import annotations

import math

EULER_GAMMA = 0.57721566490153286061
_SPLIT = 2.0
_EPS = 1e-16
_MAXIT = 10_000


def _k01_series(x: float) -> tuple[float, float]:
    q = 0.25 * x * x
    log_half = math.log(0.5 * x)
    # K0 = -(ln(x/2) + g) I0 + sum_{k>=1} q^k/(k!)^2 H_k
    term = 1.0
    i0 = 1.0
    s0 = 0.0
    harmonic = 0.0
    # K1 = 1/x + ln(x/2) I1 - (x/4) sum_{k>=0} (psi(k+1)+psi(k+2)) q^k/(k!(k+1)!)
    t1 = 1.0
    i1 = 1.0
    psi_k1 = -EULER_GAMMA
    psi_k2 = 1.0 - EULER_GAMMA
    s1 = psi_k1 + psi_k2
    k = 0
    while True:
        k += 1
        term *= q / (k * k)
        harmonic += 1.0 / k
        i0 += term
        s0 += term * harmonic
        t1 *= q / (k * (k + 1))
        i1 += t1
        psi_k1 += 1.0 / k
        psi_k2 += 1.0 / (k + 1)
        s1 += t1 * (psi_k1 + psi_k2)
        if term < _EPS * abs(s0) and t1 < _EPS * abs(s1):
            break
    k0 = -(log_half + EULER_GAMMA) * i0 + s0
    k1 = 1.0 / x + log_half * (0.5 * x * i1) - 0.25 * x * s1
    return k0, k1


def _k01_cf(x: float) -> tuple[float, float]:
    # Steed's CF2 with nu = 0
    b = 2.0 * (1.0 + x)
    d = 1.0 / b
    h = delh = d
    q1, q2 = 0.0, 1.0
    a1 = 0.25
    q = c = a1
    a = -a1
    s = 1.0 + q * delh
    for i in range(2, _MAXIT):
        a -= 2 * (i - 1)
        c = -a * c / i
        qnew = (q1 - b * q2) / a
        q1, q2 = q2, qnew
        q += c * qnew
        b += 2.0
        d = 1.0 / (b + a * d)
        delh = (b * d - 1.0) * delh
        h += delh
        dels = q * delh
        s += dels
        if abs(dels / s) < _EPS:
            break
    else:  # pragma: no cover
        raise ArithmeticError("Bessel K continued fraction failed to converge")
    h = a1 * h
    k0 = math.sqrt(math.pi / (2.0 * x)) * math.exp(-x) / s
    k1 = k0 * (x + 0.5 - h) / x
    return k0, k1


def bessel_k01(x: float) -> tuple[float, float]:
    if x <= 0:
        raise ValueError("Bessel K needs x > 0")
    return _k01_series(x) if x <= _SPLIT else _k01_cf(x)


def bessel_k(n: int, x: float) -> float:
    """``K_n(x)`` for integer ``n`` and ``x > 0``."""
    n = abs(int(n))
    k0, k1 = bessel_k01(x)
    if n == 0:
        return k0
    km, k = k0, k1
    for j in range(1, n):
        km, k = k, km + 2.0 * j / x * k
    return k


def bessel_k_orders(n_max: int, x: float) -> list[float]:
    """``[K_0(x), ..., K_{n_max}(x)]``."""
    k0, k1 = bessel_k01(x)
    out = [k0, k1]
    for j in range(1, n_max):
        out.append(out[-2] + 2.0 * j / x * out[-1])
    return out[: n_max + 1]
