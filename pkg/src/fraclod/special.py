"""Gamma, modified Bessel K of fractional order, and the extension constant."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError

_EPS = 1e-16
_EULER = 0.5772156649015329

# Taylor coefficients of 1/Gamma(1+z) about z=0, orders 2..5
_RG2 = -0.6558780715202539
_RG3 = -0.04200263503409524
_RG4 = 0.16653861138229149
_RG5 = -0.04219773455554434


def gamma(x: float) -> float:
    """Gamma function for positive real arguments."""
    if not x > 0:
        raise DomainError(f"gamma requires x > 0, got {x!r}")
    return math.gamma(x)


def _temme_gammas(mu: float) -> tuple[float, float, float, float]:
    # gam1 = (1/G(1-mu) - 1/G(1+mu)) / (2 mu), gam2 = (1/G(1-mu) + 1/G(1+mu)) / 2
    gampl = 1.0 / math.gamma(1.0 + mu)
    gammi = 1.0 / math.gamma(1.0 - mu)
    if abs(mu) < 1e-3:
        m2 = mu * mu
        gam1 = -(_EULER + _RG3 * m2 + _RG5 * m2 * m2)
        gam2 = 1.0 + _RG2 * m2 + _RG4 * m2 * m2
    else:
        gam1 = (gammi - gampl) / (2.0 * mu)
        gam2 = 0.5 * (gammi + gampl)
    return gam1, gam2, gampl, gammi


def _k_pair_small(mu: float, x: float) -> tuple[float, float]:
    """Temme's series for K_mu(x), K_{mu+1}(x), |mu| <= 1/2, x < 2."""
    x2 = 0.5 * x
    pimu = math.pi * mu
    fact = 1.0 if abs(pimu) < _EPS else pimu / math.sin(pimu)
    d = -math.log(x2)
    e = mu * d
    fact2 = 1.0 if abs(e) < _EPS else math.sinh(e) / e
    gam1, gam2, gampl, gammi = _temme_gammas(mu)
    ff = fact * (gam1 * math.cosh(e) + gam2 * fact2 * d)
    total = ff
    e = math.exp(e)
    p = 0.5 * e / gampl
    q = 0.5 / (e * gammi)
    c = 1.0
    d = x2 * x2
    total1 = p
    mu2 = mu * mu
    for i in range(1, 500):
        ff = (i * ff + p + q) / (i * i - mu2)
        c *= d / i
        p /= i - mu
        q /= i + mu
        term = c * ff
        total += term
        total1 += c * (p - i * ff)
        if abs(term) < abs(total) * _EPS:
            break
    return total, total1 * 2.0 / x


def _k_pair_large(mu: float, x: float) -> tuple[float, float]:
    """Steed's continued fraction (CF2) for K_mu(x), K_{mu+1}(x), x >= 2."""
    mu2 = mu * mu
    b = 2.0 * (1.0 + x)
    d = 1.0 / b
    h = delh = d
    q1, q2 = 0.0, 1.0
    a1 = 0.25 - mu2
    q = c = a1
    a = -a1
    s = 1.0 + q * delh
    for i in range(2, 5000):
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
    h = a1 * h
    kmu = math.sqrt(math.pi / (2.0 * x)) * math.exp(-x) / s
    return kmu, kmu * (mu + x + 0.5 - h) / x


def bessel_k(nu: float, x: float) -> float:
    """Modified Bessel function of the second kind K_nu(x) for 0 <= nu < 1.

    Uses Temme's series below x = 2 and Steed's continued fraction above,
    followed by one forward recurrence step when nu >= 1/2.
    """
    if not x > 0:
        raise DomainError(f"bessel_k requires x > 0, got {x!r}")
    if not 0.0 <= nu < 1.0:
        raise DomainError(f"bessel_k requires 0 <= nu < 1, got {nu!r}")
    nl = int(nu + 0.5)
    mu = nu - nl
    if x < 2.0:
        kmu, k1 = _k_pair_small(mu, x)
    else:
        kmu, k1 = _k_pair_large(mu, x)
    if nl == 1:
        return k1
    return kmu


bessel_k_vec = np.vectorize(bessel_k, otypes=[float])


@dataclass(frozen=True)
class FractionalOrder:
    s: float
    a: float
    c_s: float


def extension_constant(s: float) -> FractionalOrder:
    """Return (s, a = 1 - 2s, c_s = 2^(1-2s) Gamma(1-s) / Gamma(s))."""
    if not 0.0 < s < 1.0:
        raise DomainError(f"fractional order must lie in (0, 1), got {s!r}")
    c_s = 2.0 ** (1.0 - 2.0 * s) * gamma(1.0 - s) / gamma(s)
    return FractionalOrder(s=s, a=1.0 - 2.0 * s, c_s=c_s)


def extension_profile(s: float, z):
    """Normalized decaying profile 2^(1-s)/Gamma(s) z^s K_s(z), equal to 1 at z = 0."""
    z = np.asarray(z, dtype=float)
    out = np.ones_like(z)
    pos = z > 0
    zp = z[pos]
    out[pos] = 2.0 ** (1.0 - s) / gamma(s) * zp**s * bessel_k_vec(s, zp)
    return out
