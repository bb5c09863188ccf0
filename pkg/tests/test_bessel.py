import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from floqchain.bessel import bessel_j0

# reference values from a 30-digit arbitrary-precision evaluation
FROZEN = {
    0.5: 0.9384698072408129,
    1.0: 0.76519768655796655,
    1.78: 0.35161281706436003,
    3.3333333333333335: -0.35142283429330193,
    5.0: -0.1775967713143383,
    7.5: 0.2663396578803784,
    12.0: 0.047689310796833537,
    24.9: 0.08324596835301549,
    30.0: -0.086367983581040211,
    60.0: -0.09147180408906187,
    -4.2: -0.37655705436756764,
}


def quadrature_j0(x: float, n: int = 400) -> float:
    """(1/pi) int_0^pi cos(x sin theta) dtheta by the trapezoid rule (spectrally accurate here)."""
    theta = np.linspace(0.0, math.pi, n + 1)
    f = np.cos(x * np.sin(theta))
    return float((f.sum() - 0.5 * (f[0] + f[-1])) / n)


def test_zero_and_first_root():
    assert bessel_j0(0.0) == 1.0
    assert abs(bessel_j0(2.404825557695773)) < 1e-10


@pytest.mark.parametrize("x,expected", sorted(FROZEN.items()))
def test_frozen_values(x, expected):
    assert bessel_j0(x) == pytest.approx(expected, abs=2e-15)


@given(st.floats(-80.0, 80.0, allow_nan=False))
def test_matches_quadrature_oracle(x):
    assert abs(bessel_j0(x) - quadrature_j0(x)) < 1e-12


@given(st.floats(0.0, 50.0))
def test_even_and_bounded(x):
    assert bessel_j0(-x) == bessel_j0(x)
    assert abs(bessel_j0(x)) <= 1.0


def test_vectorised():
    xs = np.array(sorted(FROZEN))
    assert np.allclose(bessel_j0(xs), [FROZEN[x] for x in xs], atol=2e-15)
