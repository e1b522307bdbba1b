import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import special, stats

from tailfuse.copulas import Comonotone, Independence, SurvClaytonForComplement, sample_null_pvalues
from tailfuse.simlab import (
    ExperimentConfig,
    Null,
    TypeA,
    TypeB,
    calibrate_signal,
    copula_grid,
    desk_reps,
    gen_alternative,
    run_null_sweep,
    run_power_sweep,
    seed_stream,
    signal_vector,
    simulate_cell,
    wilson_ci,
)
from tailfuse.transforms import TransformSpec, bonferroni_pvalue, make_transform, reject

GAMMAS = tuple(TransformSpec("truncated_t", nu=g) for g in (0.3, 0.6, 1.0, 1.2))


def small_config(**kw):
    base = dict(n=5, cells=tuple(copula_grid("clayton", 5, taus=[0.2, 0.5])), transforms=GAMMAS,
                alphas=(0.05,), reps={0.05: 20_000}, seed=123, chunk=4096)
    base.update(kw)
    return ExperimentConfig(**base)


class TestAlternatives:
    def test_type_b_example(self):
        assert gen_alternative(np.array([0.25]), TypeB((2.0,)))[0] == pytest.approx(0.0625)

    def test_type_a_example(self):
        out = gen_alternative(np.array([0.5]), TypeA((2.570582,)))
        assert out[0] == pytest.approx(0.025, abs=1e-7)

    def test_zero_shift_is_identity(self):
        P = np.random.default_rng(0).random((100, 3))
        assert np.array_equal(gen_alternative(P, TypeA((0.0, 0.0, 0.0))), P)
        assert np.array_equal(gen_alternative(P, Null()), P)

    def test_type_a_against_scipy(self):
        P = np.array([[1e-9, 0.3, 0.99]])
        mu = np.array([1.0, 2.0, 0.5])
        expected = stats.t.sf(stats.t.isf(P, 5) + mu, 5)
        assert np.allclose(gen_alternative(P, TypeA(tuple(mu))), expected, rtol=1e-10)

    def test_type_b_marginal_is_beta(self):
        rng = np.random.default_rng(1)
        P = gen_alternative(rng.random((20_000, 1)), TypeB((3.0,)))
        assert stats.kstest(P[:, 0], stats.beta(1 / 3, 1).cdf).pvalue > 1e-3

    def test_validation(self):
        with pytest.raises(ValueError):
            TypeA((-1.0, 0.0))
        with pytest.raises(ValueError):
            TypeB((0.5,))
        with pytest.raises(ValueError):
            gen_alternative(np.ones((2, 3)) * 0.5, TypeB((2.0,)))

    def test_layouts(self):
        assert signal_vector(2.0, 5, "dense") == (2.0,) * 5
        assert signal_vector(2.0, 5, "sparse") == (2.0, 2.0, 0.0, 0.0, 0.0)
        assert signal_vector(3.0, 4, "sparse", 1.5) == (3.0, 3.0, 1.5, 1.5)
        with pytest.raises(ValueError):
            signal_vector(1.0, 3, "blocky")


class TestWilson:
    def test_examples(self):
        lo, hi = wilson_ci(0, 100)
        assert lo == 0.0
        assert hi == pytest.approx(0.037, abs=5e-4)
        lo, hi = wilson_ci(50, 100)
        assert (lo + hi) / 2 == pytest.approx(0.5)
        assert wilson_ci(100, 100)[1] == 1.0

    @given(st.integers(1, 10_000), st.data())
    def test_contains_estimate_and_matches_formula(self, n, data):
        k = data.draw(st.integers(0, n))
        lo, hi = wilson_ci(k, n, 0.95)
        p = k / n
        assert lo <= p <= hi
        z = stats.norm.ppf(0.975)
        center = (p + z * z / (2 * n)) / (1 + z * z / n)
        half = z / (1 + z * z / n) * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n))
        assert lo == pytest.approx(max(0.0, center - half), abs=1e-12)
        assert hi == pytest.approx(min(1.0, center + half), abs=1e-12)

    def test_bad_input(self):
        with pytest.raises(ValueError):
            wilson_ci(5, 3)
        with pytest.raises(ValueError):
            wilson_ci(0, 0)


class TestSeedStream:
    def test_deterministic(self):
        a = seed_stream(42, 0).random(100)
        b = seed_stream(42, 0).random(100)
        assert np.array_equal(a, b)

    def test_chunks_differ(self):
        assert not np.array_equal(seed_stream(42, 0).random(100), seed_stream(42, 1).random(100))
        assert not np.array_equal(seed_stream(42, 0).random(100), seed_stream(43, 0).random(100))
        assert not np.array_equal(seed_stream(42, 0).random(100), seed_stream(42, 0, stream=1).random(100))


class TestEngine:
    def test_counts_match_brute_force(self):
        # re-draw every chunk by hand and apply the public decision functions
        model = SurvClaytonForComplement(2.0, 4)
        specs = [GAMMAS[1], GAMMAS[2]]
        alphas = [0.05, 0.01]
        reps = [5000, 3000]
        chunk = 1024
        counts = simulate_cell(model, specs, alphas, reps, seed=9, chunk=chunk, workers=1)
        expected = np.zeros((2, 2), dtype=np.int64)
        bonf = np.zeros(2, dtype=np.int64)
        for j in range(-(-max(reps) // chunk)):
            m = min(chunk, max(reps) - j * chunk)
            P = sample_null_pvalues(model, seed_stream(9, j), m)
            for a, (alpha, r) in enumerate(zip(alphas, reps)):
                rows = P[: max(0, min(m, r - j * chunk))]
                if len(rows) == 0:
                    continue
                for t, spec in enumerate(specs):
                    expected[t, a] += np.count_nonzero(reject(make_transform(spec), rows, alpha=alpha))
                bonf[a] += np.count_nonzero(bonferroni_pvalue(rows) <= alpha)
        assert np.array_equal(counts.rejections, expected)
        assert np.array_equal(counts.bonferroni, bonf)
        assert counts.drawn == max(reps)

    def test_worker_count_invariance(self):
        cfg = small_config()
        one = run_null_sweep(cfg, workers=1)
        many = run_null_sweep(cfg, workers=4)
        assert one == many

    def test_alpha_prefix_counts(self):
        model = SurvClaytonForComplement(1.0, 3)
        both = simulate_cell(model, [GAMMAS[2]], [0.05, 0.01], [3000, 9000], seed=4, chunk=1000)
        alone = simulate_cell(model, [GAMMAS[2]], [0.05], [3000], seed=4, chunk=1000)
        assert both.rejections[0, 0] == alone.rejections[0, 0]

    def test_comonotone_gamma_one_is_exact(self):
        # gamma = 1 rejects exactly when the common p-value is <= alpha
        c = simulate_cell(Comonotone(5), [TransformSpec("pareto", gamma=1.0)], [0.05], [10_000],
                          seed=2, chunk=2048)
        direct = sum(np.count_nonzero(sample_null_pvalues(Comonotone(5), seed_stream(2, j),
                                                          min(2048, 10_000 - 2048 * j))[:, 0] <= 0.05)
                     for j in range(5))
        assert c.rejections[0, 0] == direct
        assert c.bonferroni[0] == sum(
            np.count_nonzero(sample_null_pvalues(Comonotone(5), seed_stream(2, j),
                                                 min(2048, 10_000 - 2048 * j))[:, 0] <= 0.01)
            for j in range(5))

    @pytest.mark.parametrize("spec", ["pareto:0.3", "pareto:1", "truncated_t:0.6", "truncated_t:1.2", "cauchy"])
    def test_single_pvalue_uniformity(self, spec):
        c = simulate_cell(Independence(1), [TransformSpec.parse(spec)], [0.05], [100_000], seed=3)
        # with one p-value both tests reject exactly when p <= alpha
        assert c.rejections[0, 0] == c.bonferroni[0]
        lo, hi = wilson_ci(int(c.rejections[0, 0]), 100_000)
        assert lo <= 0.05 <= hi

    def test_type_b_unit_exponent_equals_null(self):
        cfg = small_config()
        null = run_null_sweep(cfg)
        power = run_power_sweep(small_config(alternative=TypeB((1.0,) * 5)))
        assert [r.rejections for r in null] == [r.rejections for r in power]
        assert [r.bonf_rejections for r in null] == [r.bonf_rejections for r in power]

    def test_comonotone_power_ratio_closed_form(self):
        mu, alpha, n = 1.5, 0.05, 5
        reps = 200_000
        c = simulate_cell(Comonotone(n), [TransformSpec("truncated_t", nu=1.0)], [alpha], [reps],
                          alternative=TypeA((mu,) * n), seed=8)

        def G(x):  # Pr(P <= x) for a shifted t_5 statistic
            return special.stdtr(5, special.stdtrit(5, x) + mu)

        assert c.rejections[0, 0] / reps == pytest.approx(G(alpha), abs=4 * math.sqrt(G(alpha) / reps))
        assert c.bonferroni[0] / reps == pytest.approx(G(alpha / n), abs=4 * math.sqrt(G(alpha / n) / reps))


class TestSweeps:
    def test_rows_and_fields(self):
        rows = run_null_sweep(small_config())
        assert len(rows) == 2 * 4
        for r in rows:
            assert 0 <= r.rejections <= r.reps
            assert r.ci_lo <= r.estimate <= r.ci_hi
            assert r.estimate == pytest.approx(r.rejections / r.reps / r.alpha)
            assert r.ratio == pytest.approx(r.rejections / r.bonf_rejections)

    def test_degenerate_cells_are_skipped(self):
        cfg = small_config(alphas=(0.8,), reps={0.8: 1000})
        rows = run_null_sweep(cfg)
        skipped = [r for r in rows if r.skipped]
        assert {r.gamma for r in skipped} == {1.2}
        assert all(r.rejections is None for r in skipped)
        assert all(r.rejections is not None for r in rows if not r.skipped)

    def test_mode_checks(self):
        with pytest.raises(ValueError):
            run_null_sweep(small_config(alternative=TypeA((1.0,) * 5)))
        with pytest.raises(ValueError):
            run_power_sweep(small_config())

    @pytest.mark.parametrize("kw", [dict(alphas=()), dict(alphas=(1.5,)), dict(reps={0.05: 0}),
                                    dict(chunk=0), dict(cells=())])
    def test_config_validation(self, kw):
        with pytest.raises(ValueError):
            small_config(**kw)

    def test_desk_defaults(self):
        assert desk_reps(5e-2) == 1_000_000
        assert desk_reps(5e-3) == 1_000_000
        assert desk_reps(5e-4) == 4_000_000
        cfg = small_config(reps={})
        assert cfg.reps_for(5e-4) == 4_000_000


class TestCalibration:
    def test_hits_target(self):
        model = SurvClaytonForComplement(2.0, 3)
        spec = TransformSpec("truncated_t", nu=1.0)
        mu = calibrate_signal("A", model, spec, 0.05, 0.5, reps=20_000, seed=5, tol=0.01, chunk=4096)
        c = simulate_cell(model, [spec], [0.05], [20_000], alternative=TypeA((mu,) * 3), seed=5,
                          chunk=4096, baseline=False, stream=1)
        assert abs(c.rejections[0, 0] / 20_000 - 0.5) <= 0.01

    def test_type_b_sparse(self):
        model = Independence(4)
        spec = TransformSpec("truncated_t", nu=1.0)
        beta = calibrate_signal("B", model, spec, 0.05, 0.3, layout="sparse", reps=20_000, seed=6, chunk=4096)
        assert beta > 1.0
        c = simulate_cell(model, [spec], [0.05], [20_000], alternative=TypeB(signal_vector(beta, 4, "sparse", 1.5)),
                          seed=6, chunk=4096, baseline=False, stream=1)
        assert abs(c.rejections[0, 0] / 20_000 - 0.3) <= 0.01
