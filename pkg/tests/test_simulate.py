import math
from collections import Counter
from itertools import combinations
from types import SimpleNamespace

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from sklearn.metrics import v_measure_score

from mcscan.simulate import (
    ScenarioConfig,
    evaluate_detection,
    evaluate_inference,
    gen_m1,
    gen_m2,
    gen_m3,
    generate_scenario,
    hausdorff,
    repetition_seeds,
    segment_labels,
    toeplitz_cov,
    v_measure,
)


def band(lower, upper):
    return SimpleNamespace(lower=np.asarray(lower, float), upper=np.asarray(upper, float))


# ---------------------------------------------------------------- generators


def test_m3_layout():
    data, truth = gen_m3(480, 900, seed=7)
    assert truth.change_points == (120, 240, 360)
    assert data.X.shape == (480, 900)
    np.testing.assert_allclose(truth.betas[0, :6], [0.4, -0.4, 0.4, -0.4, 0.0, 0.0])
    np.testing.assert_allclose(truth.betas[1], -truth.betas[0])
    np.testing.assert_allclose(truth.deltas[0], -2 * truth.betas[0])
    assert np.linalg.norm(truth.deltas[0]) == pytest.approx(1.6)
    with pytest.raises(ValueError):
        gen_m3(481, 10)


@given(st.integers(0, 2**32 - 1), st.integers(1, 30))
def test_m1_sphere_support(seed, s):
    _, truth = gen_m1(n=40, p=30, rho=2.0, sparsity=s, theta=20, seed=seed)
    beta0, beta1 = truth.betas
    np.testing.assert_array_equal(beta0, -beta1)
    delta = beta0 / 2.0
    assert np.count_nonzero(delta) == s
    assert np.linalg.norm(delta) == pytest.approx(1.0)


def test_m1_no_change_when_rho_zero():
    data, truth = gen_m1(n=50, p=10, rho=0.0, sparsity=3, theta=25, seed=1)
    assert np.all(truth.deltas == 0.0)


def test_m1_support_uniform():
    counts = Counter()
    draws = 10_000
    for r in range(draws):
        _, truth = gen_m1(n=4, p=10, rho=1.0, sparsity=2, theta=2, seed=np.random.SeedSequence([3, r]))
        counts[tuple(np.flatnonzero(truth.betas[0]))] += 1
    pairs = list(combinations(range(10), 2))
    assert set(counts) == set(pairs)
    prob = 1 / len(pairs)
    sd = math.sqrt(draws * prob * (1 - prob))
    assert all(abs(counts[pr] - draws * prob) <= 3 * sd for pr in pairs)


def test_m2_structure():
    _, truth = gen_m2(n=60, p=50, gamma=0.6, nu=1.0, sparsity=5, theta=30, seed=2)
    delta = truth.deltas[0]
    assert np.count_nonzero(delta) == 5
    assert set(np.abs(delta[delta != 0])) == {1.0}
    np.testing.assert_allclose((truth.betas[0] + truth.betas[1]) / 2 * 0, 0.0)
    np.testing.assert_allclose(truth.sigma, toeplitz_cov(50, 0.6))


def test_m2_toeplitz_covariance():
    data, _ = gen_m2(n=100_000, p=6, gamma=0.9, nu=1.0, sparsity=2, theta=50_000, seed=5)
    S = data.X.T @ data.X / data.n
    assert np.abs(S - toeplitz_cov(6, 0.9)).max() <= 0.02


def test_m2_gamma_zero_independent():
    assert np.array_equal(toeplitz_cov(4, 0.0), np.eye(4))


def test_generation_deterministic():
    a, _ = gen_m2(n=100, p=20, seed=11)
    b, _ = gen_m2(n=100, p=20, seed=11)
    assert np.array_equal(a.X, b.X) and np.array_equal(a.y, b.y)


def test_repetition_seeds_prefix_stable():
    short = [s.generate_state(2).tolist() for s in repetition_seeds(4, 3)]
    long = [s.generate_state(2).tolist() for s in repetition_seeds(4, 10)]
    assert long[:3] == short


# ---------------------------------------------------------------- config


def test_config_round_trip():
    cfg = ScenarioConfig(scenario="m2", n=600, p=100, change_points=(150,), gamma=0.9, nu=2.0, seed=3)
    assert ScenarioConfig.from_text(cfg.to_text()) == cfg
    m3 = ScenarioConfig(scenario="M3", n=480, p=900)
    assert m3.change_points == (120, 240, 360)
    assert ScenarioConfig.from_text(m3.to_text()) == m3


def test_config_parsing_and_errors():
    cfg = ScenarioConfig.from_text("# comment\nscenario = M1\nn = 200  # trailing\nchange_points = 50\n")
    assert (cfg.scenario, cfg.n, cfg.change_points) == ("M1", 200, (50,))
    with pytest.raises(ValueError):
        ScenarioConfig.from_text("colour = blue")
    with pytest.raises(ValueError):
        ScenarioConfig(scenario="M2", gamma=1.0)
    with pytest.raises(ValueError):
        ScenarioConfig(scenario="M1", change_points=(10, 20))


def test_generate_scenario_dispatch():
    data, truth = generate_scenario(ScenarioConfig(scenario="M3", n=40, p=8, seed=1))
    assert truth.change_points == (10, 20, 30) and data.p == 8


# ---------------------------------------------------------------- metrics


def test_detection_metrics_examples():
    ev = evaluate_detection([30, 60], [30, 60], 100)
    assert ev.hausdorff == 0.0 and ev.v_measure == 1.0 and ev.errors == [0, 0]
    assert hausdorff([], [50], 100) == 0.5
    assert hausdorff([60], [50], 100) == pytest.approx(0.1)
    assert evaluate_detection([], [50], 100).q_hat == 0


def test_segment_labels():
    assert segment_labels([2, 4], 5).tolist() == [0, 0, 1, 1, 2]


@given(st.lists(st.integers(0, 3), min_size=2, max_size=40), st.data())
def test_v_measure_matches_sklearn(a, draw):
    b = draw.draw(st.lists(st.integers(0, 3), min_size=len(a), max_size=len(a)))
    assert v_measure(a, b) == pytest.approx(v_measure_score(a, b), abs=1e-12)
    assert v_measure(a, b) == pytest.approx(v_measure(b, a), abs=1e-12)
    perm = {0: 3, 1: 0, 2: 1, 3: 2}
    assert v_measure(a, b) == pytest.approx(v_measure(a, [perm[x] for x in b]), abs=1e-12)
    assert 0.0 <= v_measure(a, b) <= 1.0


def test_inference_metrics_examples():
    truth = np.r_[1.0, np.zeros(9)]
    ev = evaluate_inference(band(truth - 1, truth + 1), truth)
    assert (ev.coverage, ev.proportion) == (1.0, 1.0)
    none = evaluate_inference(band(-np.ones(10), np.ones(10)), truth)
    assert none.fdr == 0.0 and none.tpr == 0.0
    lower, upper = truth - 0.5, truth + 0.5
    lower[3], upper[3] = 0.2, 0.9  # misses 0 and is a false rejection
    ev = evaluate_inference(band(lower, upper), truth)
    assert ev.coverage == 0.0 and ev.proportion == pytest.approx(0.9)
    assert ev.tpr == 1.0 and ev.fdr == pytest.approx(0.5)
    assert ev.half_widths[0] == pytest.approx(np.mean(upper - lower) / 2)


def test_inference_metrics_mismatch():
    with pytest.raises(ValueError):
        evaluate_inference([band([0], [1])], np.zeros((2, 1)))
