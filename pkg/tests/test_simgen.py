import json
import math

import numpy as np
import pytest

from esabcv.exceptions import InvalidInputError, InvalidRankError, StrengthCollisionError
from esabcv.matops import sample_spectrum
from esabcv.seeding import mix_seed
from esabcv.simgen import (
    PRESET_SIZES,
    SCENARIOS,
    NoiseSpec,
    ScenarioSpec,
    estimation_threshold,
    factor_strengths,
    generate_dataset,
    sample_sigmas,
    sample_signal,
    thresholds,
)

TABLE = {
    "Type-1": (0, 6, 1, 1),
    "Type-2": (2, 4, 1, 1),
    "Type-3": (3, 3, 1, 1),
    "Type-4": (3, 1, 3, 1),
    "Type-5": (1, 3, 3, 1),
    "Type-6": (0, 1, 6, 1),
}


def test_presets():
    assert set(SCENARIOS) == set(TABLE)
    for name, counts in TABLE.items():
        s = ScenarioSpec.preset(name)
        assert (s.n_strong, s.n_useful, s.n_harmful, s.n_undetectable) == counts
        assert s.k0 == 8
    assert ScenarioSpec.preset(3) is ScenarioSpec.preset("Type-3") is ScenarioSpec.preset("3")
    with pytest.raises(InvalidInputError):
        ScenarioSpec.preset("Type-9")


def test_scenario_validation():
    with pytest.raises(InvalidInputError):
        ScenarioSpec()
    with pytest.raises(InvalidInputError):
        ScenarioSpec(n_useful=-1)
    assert ScenarioSpec.null().k0 == 0


def test_thresholds():
    assert thresholds(1.0) == (1.0, 3.0)
    mu, mu_star = thresholds(4.0)
    assert mu == 2.0 and mu_star == pytest.approx(2.5 + math.sqrt(18.25))
    assert thresholds(4.0, 2.0) == pytest.approx((2 * mu, 2 * mu_star))
    assert estimation_threshold(1.0) == 3.0
    with pytest.raises(InvalidInputError):
        thresholds(0.0)


def test_strong_ladder():
    d2, labels = factor_strengths(ScenarioSpec.preset(3), 500, 1.0)
    np.testing.assert_allclose(d2[:3], [1750, 1250, 750])
    assert labels[:3] == ("strong",) * 3


def test_single_harmful_and_undetectable():
    d2, labels = factor_strengths(ScenarioSpec(n_harmful=1, n_undetectable=1), 100, 1.0)
    np.testing.assert_allclose(d2, [2.0, 0.5])
    assert labels == ("harmful", "undetectable")


def test_useful_ladder_scaled():
    d2, _ = factor_strengths(ScenarioSpec(n_useful=2), 100, 1.0, 2.0)
    np.testing.assert_allclose(d2, [2 * 2.5 * 3, 2 * 1.5 * 3])


@pytest.mark.parametrize("size", PRESET_SIZES)
@pytest.mark.parametrize("name", sorted(TABLE))
def test_ladder_ordering(name, size):
    N, n = size
    d2, labels = factor_strengths(ScenarioSpec.preset(name), N, N / n)
    assert np.all(np.diff(d2) < 0)
    mu, mu_star = thresholds(N / n)
    for v, lab in zip(d2, labels):
        if lab == "undetectable":
            assert 0 < v < mu
        elif lab == "harmful":
            assert mu < v < mu_star
        elif lab == "useful":
            assert mu_star < v
    rank = {c: i for i, c in enumerate(("strong", "useful", "harmful", "undetectable"))}
    assert [rank[c] for c in labels] == sorted(rank[c] for c in labels)


def test_strength_collision():
    # strong 1.5 N = 3 falls below the useful ladder when N is tiny
    with pytest.raises(StrengthCollisionError):
        factor_strengths(ScenarioSpec(n_strong=1, n_useful=2), 2, 1.0)


def test_noise_params():
    assert NoiseSpec(0).params is None
    assert NoiseSpec(1).params == (3.0, 2.0)
    a, b = NoiseSpec(10).params
    assert (a, b) == pytest.approx((2.1, 1.1))
    for v in (1.0, 10.0):
        a, b = NoiseSpec(v).params
        assert b / (a - 1) == pytest.approx(1.0)
        assert b**2 / ((a - 1) ** 2 * (a - 2)) == pytest.approx(v)
    with pytest.raises(InvalidInputError):
        NoiseSpec(-1)


def test_sample_sigmas(rng):
    np.testing.assert_array_equal(sample_sigmas(rng, 5, NoiseSpec(0)), np.ones(5))
    s = sample_sigmas(rng, 100_000, NoiseSpec(1))
    assert abs(s.mean() - 1) < 0.03
    assert np.all(s > 0)


def test_signal_white_keeps_frame(rng):
    g1, g2 = np.random.default_rng(3), np.random.default_rng(3)
    _, U, d, V = sample_signal(g1, 30, 40, [9.0, 4.0, 1.0], np.ones(30))
    from esabcv.matops import stiefel_uniform

    stiefel_uniform(g2, 40, 3)
    Ustar = stiefel_uniform(g2, 30, 3)
    np.testing.assert_allclose(U, Ustar, atol=1e-10)


def test_signal_frames_and_strengths(rng):
    N, n = 40, 60
    sig = rng.uniform(0.2, 5.0, N)
    d2 = np.array([30.0, 10.0, 2.0])
    X, U, d, V = sample_signal(rng, N, n, d2, sig)
    np.testing.assert_allclose(U.T @ U, np.eye(3), atol=1e-10)
    np.testing.assert_allclose(V.T @ V, np.eye(3), atol=1e-10)
    sv = np.linalg.svd(X / np.sqrt(sig)[:, None], compute_uv=False)[:3]
    np.testing.assert_allclose(sv, math.sqrt(n) * np.sqrt(d2), rtol=1e-8)


def test_signal_rank_too_large(rng):
    with pytest.raises(InvalidRankError):
        sample_signal(rng, 3, 10, [3.0, 2.0, 1.5, 1.0], np.ones(3))


def test_pure_noise_dataset():
    N, n = 40, 50
    ds = generate_dataset(7, ScenarioSpec.null(), N, n, NoiseSpec(0))
    np.testing.assert_array_equal(ds.X, 0)
    assert abs(np.sum(ds.Y**2) / (N * n) - 1) <= 4 / math.sqrt(N * n)


def test_type6_categories():
    ds = generate_dataset(1, ScenarioSpec.preset(6), 100, 200, NoiseSpec(1))
    assert ds.categories == ("useful",) + ("harmful",) * 6 + ("undetectable",)
    assert ds.k0 == 8 and np.all(np.diff(ds.D) < 0)


def test_dataset_deterministic():
    a = generate_dataset(123, ScenarioSpec.preset(2), 50, 80, NoiseSpec(10))
    b = generate_dataset(123, ScenarioSpec.preset(2), 50, 80, NoiseSpec(10))
    for f in ("Y", "X", "Sigma", "U", "D", "V"):
        np.testing.assert_array_equal(getattr(a, f), getattr(b, f))
    assert a.seed == 123


def test_dataset_reconstructs_from_noise():
    ds = generate_dataset(5, ScenarioSpec.preset(4), 60, 90, NoiseSpec(1))
    E = ds.noise_matrix()
    np.testing.assert_allclose(ds.Y, np.sqrt(ds.Sigma)[:, None] * (
        math.sqrt(90) * (ds.U * ds.D) @ ds.V.T + E), atol=1e-9)
    # E continues the seeded stream after sigma, V and U*
    g = np.random.default_rng(5)
    g.gamma(3.0, 0.5, size=60)
    g.standard_normal((90, 8))
    g.standard_normal((60, 8))
    np.testing.assert_allclose(E, g.standard_normal((60, 90)), atol=1e-9)


def test_export(tmp_path):
    ds = generate_dataset(9, ScenarioSpec.preset(1), 20, 30, NoiseSpec(1))
    csv_path, json_path = ds.export(tmp_path, "d")
    meta = json.loads(json_path.read_text())
    assert meta["seed"] == 9 and meta["N"] == 20 and len(meta["sigma2"]) == 20
    assert meta["categories"][0] == "useful"
    from esabcv.io import read_matrix_csv

    Y, rows, cols = read_matrix_csv(csv_path)
    np.testing.assert_array_equal(Y, ds.Y)


@pytest.mark.slow
def test_decoupling_of_signal_and_variance():
    cors = []
    for rep in range(200):
        ds = generate_dataset(mix_seed(55, rep), ScenarioSpec.preset(5), 200, 1000, NoiseSpec(10))
        cors.append(np.corrcoef(np.mean(ds.X**2, axis=1), ds.Sigma)[0, 1])
    assert abs(np.mean(cors)) < 0.2


def test_phase_transition_edge():
    N = n = 300
    edge = 4.0 + 0.1
    above = below = 0
    for rep in range(20):
        strong = ScenarioSpec(n_harmful=1, name="spike")  # d2 = 2 at gamma = 1
        weak = ScenarioSpec(n_undetectable=1, name="sub")  # d2 = 0.5
        a = generate_dataset(mix_seed(8, rep), strong, N, n, NoiseSpec(0))
        b = generate_dataset(mix_seed(9, rep), weak, N, n, NoiseSpec(0))
        assert a.D[0] ** 2 == pytest.approx(2.0) and b.D[0] ** 2 == pytest.approx(0.5)
        above += sample_spectrum(a.Y).eigenvalues[0] > edge
        below += sample_spectrum(b.Y).eigenvalues[0] < edge
    assert above >= 19 and below >= 16
