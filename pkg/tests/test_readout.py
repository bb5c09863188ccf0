import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from floqchain.analysis import ConfusionModel, calibrate_counts, post_select, sample_shots
from floqchain.model import StateVector, build_basis, plus_product_state, product_state, site_populations


def _exactly_one(p_one):
    """P(exactly one bit reads 1) for independent bits."""
    dist = np.array([1.0])
    for p in p_one:
        dist = np.convolve(dist, [1 - p, p])
    return dist[1]


def test_perfect_readout_returns_the_basis_state():
    basis = build_basis(4, 2)
    counts = sample_shots(product_state(basis, "0110"), ConfusionModel.perfect(4), 500, seed=1)
    assert counts == {"0110": 500}


def test_level_two_reads_as_one():
    basis = build_basis(2, 3)
    counts = sample_shots(product_state(basis, (2, 0)), ConfusionModel.perfect(2), 10, seed=0)
    assert counts == {"10": 10}


def test_paper_excited_fidelity_of_last_site():
    conf = ConfusionModel.paper()
    assert conf.f_excited[9] == 0.856
    basis = build_basis(10, 2, 10)
    n = 40000
    cal = calibrate_counts(sample_shots(product_state(basis, "1" * 10), conf, n, seed=7), ConfusionModel.perfect(10))
    assert abs(cal.raw[9] - 0.856) < 4 * np.sqrt(0.856 * 0.144 / n)


def test_seed_determinism():
    basis = build_basis(5, 2)
    psi = plus_product_state(basis)
    conf = ConfusionModel.paper().f_ground[:5], ConfusionModel.paper().f_excited[:5]
    model = ConfusionModel(*conf)
    assert sample_shots(psi, model, 1000, 42) == sample_shots(psi, model, 1000, 42)
    assert sample_shots(psi, model, 1000, 42) != sample_shots(psi, model, 1000, 43)


def test_identity_calibration_is_raw():
    counts = {"10": 30, "01": 50, "11": 20}
    cal = calibrate_counts(counts, ConfusionModel.perfect(2))
    assert np.allclose(cal.probabilities, [0.5, 0.7])
    assert np.array_equal(cal.probabilities, cal.raw)


def test_calibration_inverts_expected_counts():
    # expected counts for true P1 = (0.2, 0.9) under F_g = 0.95, F_e = 0.85
    conf = ConfusionModel([0.95, 0.95], [0.85, 0.85])
    measured = [conf.matrix(0) @ [0.8, 0.2], conf.matrix(1) @ [0.1, 0.9]]
    n = 10 ** 6
    counts = {}
    for a in (0, 1):
        for b in (0, 1):
            counts[f"{a}{b}"] = int(round(n * measured[0][a] * measured[1][b]))
    cal = calibrate_counts(counts, conf)
    assert np.allclose(cal.probabilities, [0.2, 0.9], atol=1e-5)


def test_calibration_round_trip_statistics(rng):
    conf = ConfusionModel.paper()
    basis = build_basis(10, 2, 1)
    amps = rng.normal(size=10) + 1j * rng.normal(size=10)
    psi = StateVector(basis, amps / np.linalg.norm(amps))
    truth = site_populations(basis, psi.amplitudes, 1)
    cal = calibrate_counts(sample_shots(psi, conf, 20000, seed=5), conf)
    assert np.all(np.abs(cal.probabilities - truth) < 5 * cal.sigma(conf) + 1e-3)


def test_clipping_flags_sites():
    conf = ConfusionModel([0.9], [0.9])
    cal = calibrate_counts({"0": 100}, conf)
    assert cal.probabilities[0] == 0.0 and cal.clipped[0]


def test_post_select():
    counts = {"100": 5, "010": 3, "110": 2}
    kept, frac = post_select(counts, 1)
    assert kept == {"100": 5, "010": 3} and frac == pytest.approx(0.8)
    with pytest.raises(ValueError):
        post_select(counts, 3)


def test_post_select_fraction_matches_confusion_model():
    conf = ConfusionModel.paper()
    basis = build_basis(10, 2, 1)
    psi = product_state(basis, "1" + "0" * 9)
    n = 50000
    _, frac = post_select(sample_shots(psi, conf, n, seed=11), 1)
    p_one = 1 - conf.f_ground.copy()
    p_one[0] = conf.f_excited[0]
    expected = _exactly_one(p_one)
    assert abs(frac - expected) < 4 * np.sqrt(expected * (1 - expected) / n)
    _, perfect = post_select(sample_shots(psi, ConfusionModel.perfect(10), 100, seed=11), 1)
    assert perfect == 1.0


def test_confusion_validation():
    with pytest.raises(ValueError):
        ConfusionModel([0.4], [0.9])
    with pytest.raises(ValueError):
        calibrate_counts({}, ConfusionModel.perfect(2))
    with pytest.raises(ValueError):
        sample_shots(product_state(build_basis(2, 2), "01"), ConfusionModel.perfect(3), 10, 0)


@given(st.floats(0.0, 1.0), st.floats(0.51, 1.0), st.floats(0.51, 1.0))
def test_calibration_is_unbiased(p, fg, fe):
    # correction is linear in the raw one-fraction, so expected counts map back to p exactly
    conf = ConfusionModel([fg], [fe])
    n = 10 ** 12
    ones = round(n * ((1 - fg) * (1 - p) + fe * p))
    cal = calibrate_counts({"1": ones, "0": n - ones}, conf)
    assert cal.corrected[0] == pytest.approx(p, abs=1e-9)
