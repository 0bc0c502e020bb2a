import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import special as sps

from fraclod.errors import DomainError
from fraclod.special import bessel_k, extension_constant, extension_profile, gamma

# 30-digit values from mpmath
GAMMA_08 = 1.16422971372530337363632093827
K_02_AT_1 = 0.427219995136734991513322416756
C_02 = 0.384382996899886753559263428541


def test_gamma_oracle():
    assert gamma(0.8) == pytest.approx(GAMMA_08, rel=1e-14)


def test_gamma_rejects_nonpositive():
    with pytest.raises(DomainError):
        gamma(0.0)
    with pytest.raises(DomainError):
        gamma(-1.5)


@given(st.floats(min_value=1e-3, max_value=1 - 1e-3))
def test_gamma_reflection(s):
    lhs = gamma(s) * gamma(1 - s)
    assert lhs == pytest.approx(math.pi / math.sin(math.pi * s), rel=1e-12)


def test_bessel_k_integral_oracle():
    assert bessel_k(0.2, 1.0) == pytest.approx(K_02_AT_1, rel=1e-12)


@pytest.mark.parametrize("x", [1e-6, 0.01, 0.3, 1.0, 1.999, 2.0, 5.0, 20.0, 50.0])
def test_bessel_k_half_closed_form(x):
    exact = math.sqrt(math.pi / (2 * x)) * math.exp(-x)
    assert bessel_k(0.5, x) == pytest.approx(exact, rel=1e-10)


@settings(max_examples=200)
@given(st.floats(min_value=0.0, max_value=0.999, allow_subnormal=False),
       st.floats(min_value=1e-6, max_value=50.0))
def test_bessel_k_matches_scipy(nu, x):
    assert bessel_k(nu, x) == pytest.approx(sps.kv(nu, x), rel=1e-11)


@pytest.mark.parametrize("nu", [0.2, 0.5, 0.8])
def test_bessel_k_large_argument(nu):
    x = 50.0
    ratio = bessel_k(nu, x) * math.sqrt(2 * x / math.pi) * math.exp(x)
    assert abs(ratio - 1.0) < 0.01


def test_bessel_k_domain():
    with pytest.raises(DomainError):
        bessel_k(0.2, 0.0)
    with pytest.raises(DomainError):
        bessel_k(1.0, 1.0)


def test_extension_constant_oracle():
    order = extension_constant(0.2)
    assert order.c_s == pytest.approx(C_02, rel=1e-13)
    assert order.a == pytest.approx(0.6)


def test_extension_constant_half():
    order = extension_constant(0.5)
    assert order.c_s == pytest.approx(1.0, rel=1e-14)
    assert order.a == 0.0


@pytest.mark.parametrize("s", np.linspace(0.01, 0.99, 50))
def test_extension_constant_reflection(s):
    # Gamma(1-s) = pi / (sin(pi s) Gamma(s))
    via_reflection = 2 ** (1 - 2 * s) * math.pi / (math.sin(math.pi * s) * gamma(s) ** 2)
    assert extension_constant(s).c_s == pytest.approx(via_reflection, rel=1e-12)


@pytest.mark.parametrize("s", [0.0, 1.0, -0.1, 1.5])
def test_extension_constant_domain(s):
    with pytest.raises(DomainError):
        extension_constant(s)


# psi at z = 1e-6 from mpmath; the leading correction is of order z^(2s)
PROFILE_AT_1E_6 = {0.2: 0.996174359317694504786032070098,
                   0.5: 0.999999000000500068191351593567,
                   0.8: 0.999999999592821596228671279592}


@pytest.mark.parametrize("s", [0.2, 0.5, 0.8])
def test_profile_near_zero(s):
    val = extension_profile(s, np.array([1e-6]))[0]
    assert val == pytest.approx(PROFILE_AT_1E_6[s], rel=1e-10)
    assert extension_profile(s, np.array([0.0]))[0] == 1.0


@pytest.mark.parametrize("s", [0.5, 0.8])
def test_profile_limit_within_1e4(s):
    assert abs(extension_profile(s, np.array([1e-6]))[0] - 1.0) < 1e-4


@pytest.mark.parametrize("s", [0.2, 0.5, 0.8])
def test_profile_decreasing(s):
    z = np.linspace(1e-4, 20, 200)
    psi = extension_profile(s, z)
    assert np.all(np.diff(psi) < 0)
    assert psi[-1] < 1e-7
