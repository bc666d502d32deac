import numpy as np
import pytest
from scipy import stats

from twistop import (BUILTIN_MAPS, InitialLaw, UlamPartition, digit_observable,
                     empirical_clt, empirical_rate_sweep, exact_markov_tail, simulate_birkhoff,
                     tail_estimate, table_observable, wilson_interval)
from twistop.maps import function_observable
from twistop.errors import ZeroVariance
from twistop.montecarlo import read_bsum, worker_count, write_bsum

from conftest import ulam  # noqa: F401

T = BUILTIN_MAPS["doubling"]()
P2 = UlamPartition(T.phase_space, (2,))
DIGIT = digit_observable(P2)


def test_constant_observables():
    zero = table_observable(P2, [0.0, 0.0])
    one = table_observable(P2, [1.0, 1.0])
    np.testing.assert_array_equal(simulate_birkhoff(T, zero, InitialLaw(), 7, 500), 0.0)
    np.testing.assert_array_equal(simulate_birkhoff(T, one, InitialLaw(), 7, 500), 7.0)
    rates = empirical_rate_sweep(T, zero, InitialLaw(), [5, 10], 0.1, 1000)
    assert all(r.hits == 0 and r.empirical_rate is None for r in rates)


def test_s4_distribution():
    S = simulate_birkhoff(T, DIGIT, InitialLaw(), 4, 200_000, seed=3)
    values, counts = np.unique(S, return_counts=True)
    np.testing.assert_array_equal(values, [-2, -1, 0, 1, 2])
    freq = counts / S.size
    expect = np.array([1, 4, 6, 4, 1]) / 16
    assert np.all(np.abs(freq - expect) < 5 * np.sqrt(expect * (1 - expect) / S.size))


def test_tail_n4():
    est = tail_estimate(T, DIGIT, InitialLaw(), 4, 0.25, 200_000, seed=1)
    assert est.ci95[0] <= 1 / 16 <= est.ci95[1]
    assert tail_estimate(T, DIGIT, InitialLaw(), 10, 0.5, 1000).hits == 0
    assert tail_estimate(T, DIGIT, InitialLaw(), 10, -1.5, 1000).p_hat == 1.0


def test_determinism_and_threads():
    a = simulate_birkhoff(T, DIGIT, InitialLaw(), [5, 20], 150_000, seed=7, threads=1)
    b = simulate_birkhoff(T, DIGIT, InitialLaw(), [5, 20], 150_000, seed=7, threads=3)
    assert a.tobytes() == b.tobytes()
    c = simulate_birkhoff(T, DIGIT, InitialLaw(), [5, 20], 150_000, seed=8, threads=1)
    assert a.tobytes() != c.tobytes()


def test_checkpoints_match_single_runs():
    rows = simulate_birkhoff(T, DIGIT, InitialLaw(), [3, 9], 1000, seed=2)
    np.testing.assert_array_equal(rows[1], simulate_birkhoff(T, DIGIT, InitialLaw(), 9, 1000, seed=2))


def test_exceedance_antitone():
    S = simulate_birkhoff(T, DIGIT, InitialLaw(), 30, 20_000, seed=5)
    counts = [np.count_nonzero(S > 30 * e) for e in np.linspace(-0.5, 0.5, 21)]
    assert np.all(np.diff(counts) <= 0)


def test_mean_and_variance():
    n, m = 50, 100_000
    S = simulate_birkhoff(T, DIGIT, InitialLaw(), n, m, seed=11)
    assert abs(S.mean() / n) <= 4 * 0.5 / np.sqrt(n * m)
    se = 0.25 * np.sqrt(2 / (m - 1))
    assert abs(S.var(ddof=1) / n - 0.25) <= 3 * se


def test_beta_orbits_do_not_collapse():
    Tb = BUILTIN_MAPS["beta-2.5"]()
    P = UlamPartition(Tb.phase_space, (64,))
    ident = function_observable(P, lambda p: p[:, 0])
    S = simulate_birkhoff(Tb, ident, InitialLaw(), [100, 200], 2000, seed=1)
    # a collapsed float orbit would sit at a fixed point and add a constant
    late = S[1] - S[0]
    assert np.unique(late).size == late.size
    assert 0.3 < late.mean() / 100 < 0.6


def test_wilson():
    lo, hi = wilson_interval(0, 100)
    assert lo == 0.0 and 0 < hi < 0.05
    lo, hi = wilson_interval(50, 100)
    assert lo == pytest.approx(0.4038, abs=1e-4) and hi == pytest.approx(0.5962, abs=1e-4)


def test_exact_markov_tail_binomial():
    _, P, K = ulam("doubling", 2)
    for n in (4, 25, 50, 100):
        k = int(np.floor(n * 0.6)) + 1  # S_n = k - n/2 > n/10
        expect = stats.binom.sf(k - 1, n, 0.5)
        got = exact_markov_tail(K, DIGIT.values, P.measures, n, 0.1)
        assert got == pytest.approx(expect, rel=1e-12)
    assert exact_markov_tail(K, DIGIT.values, P.measures, 4, 0.25) == pytest.approx(1 / 16)


def test_exact_markov_tail_law_and_resolution():
    _, P, K = ulam("doubling", 64)
    phi = digit_observable(P).values
    masses = np.where(P.midpoints()[:, 0] < 0.5, 2.0, 0.0) / 64
    # the first digit is fixed at -1/2, the other n-1 are fair
    got = exact_markov_tail(K, phi, masses, 25, 0.1)
    assert got == pytest.approx(stats.binom.sf(15, 24, 0.5), rel=1e-12)


def test_initial_law_density():
    law = InitialLaw.from_function(P2, lambda p: np.where(p[:, 0] < 0.5, 2.0, 0.0))
    np.testing.assert_allclose(law.cell_masses(P2), [1.0, 0.0])
    S = simulate_birkhoff(T, DIGIT, law, 1, 1000)
    np.testing.assert_array_equal(S, -0.5)
    with pytest.raises(ValueError):
        InitialLaw("density", P2, np.array([3.0, 0.0]))


def test_empirical_clt():
    res = empirical_clt(T, DIGIT, InitialLaw(), 100, 20_000, 4, 0.25)
    assert res.ks_distance <= 0.05
    one = empirical_clt(T, DIGIT, InitialLaw(), 100, 1, 4, 0.25)
    assert 0 <= one.ks_distance <= 1
    with pytest.raises(ZeroVariance):
        empirical_clt(T, DIGIT, InitialLaw(), 100, 10, 4, 0.0)


def test_bsum_roundtrip(tmp_path):
    S = simulate_birkhoff(T, DIGIT, InitialLaw(), 10, 1000, seed=9)
    path = tmp_path / "s.bsum"
    write_bsum(path, S, 10, 9)
    raw = path.read_bytes()
    assert raw[:4] == b"BSUM" and len(raw) == 4 + 24 + 8 * 1000
    back, n, seed = read_bsum(path)
    assert n == 10 and seed == 9 and back.tobytes() == S.astype("<f8").tobytes()


def test_worker_count(monkeypatch):
    monkeypatch.setenv("TWISTOP_THREADS", "1")
    assert worker_count() == 1
    monkeypatch.setenv("TWISTOP_THREADS", "junk")
    assert worker_count() >= 1
