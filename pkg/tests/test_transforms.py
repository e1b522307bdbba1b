import math
import warnings

import mpmath
import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose
from scipy import stats

from tailfuse.transforms import (
    XMAX,
    DegenerateThresholdError,
    TransformError,
    TransformSpec,
    WeightVector,
    bonferroni_pvalue,
    combined_pvalue,
    make_transform,
    reject,
    statistic,
    threshold,
    transform_pvalue,
)

ALL_SPECS = [
    "pareto:0.3", "pareto:1", "pareto:1.2", "cauchy", "truncated_cauchy:0.001",
    "truncated_t:0.3", "truncated_t:0.6", "truncated_t:1", "truncated_t:1.2,0.01",
]

pvalue = st.floats(min_value=1e-12, max_value=1.0)


def weighted_hmp(p, w):
    p = np.asarray(p, dtype=float)
    w = np.asarray(w, dtype=float)
    w = w * len(w) / w.sum()
    x = 1.0 / np.minimum(p / w, 1.0)
    return min(1.0, len(p) / np.sum(x))


class TestSpecParsing:
    @pytest.mark.parametrize("text,expected", [
        ("pareto:1", TransformSpec("pareto", gamma=1.0)),
        ("cauchy", TransformSpec("cauchy")),
        ("truncated_cauchy:0.01", TransformSpec("truncated_cauchy", q0=0.01)),
        ("truncated_t:0.6", TransformSpec("truncated_t", nu=0.6)),
        ("truncated_t:0.6,0.002", TransformSpec("truncated_t", nu=0.6, q0=0.002)),
        ("truncated_t:nu=1.2,trunc_q=0.0", TransformSpec("truncated_t", nu=1.2, q0=0.0)),
        ("Pareto: gamma = 2", TransformSpec("pareto", gamma=2.0)),
    ])
    def test_parse(self, text, expected):
        assert TransformSpec.parse(text) == expected

    @pytest.mark.parametrize("text", [
        "weibull:1", "pareto", "pareto:-1", "pareto:1,2", "truncated_t:0.6,1.0",
        "truncated_t:x", "cauchy:nu=1",
    ])
    def test_parse_errors(self, text):
        with pytest.raises(TransformError):
            TransformSpec.parse(text)

    def test_tail_index_and_label(self):
        spec = TransformSpec.parse("truncated_t:0.6")
        assert spec.tail_index == 0.6
        assert spec.label == "truncated_t(0.6,0.001)"
        assert TransformSpec("cauchy").tail_index == 1.0


class TestTailTransform:
    def test_truncated_cauchy_left_bound(self):
        F = make_transform("truncated_t:1")
        assert F.left_bound == pytest.approx(-318.3088389855504, rel=1e-12)
        assert F.left_bound == pytest.approx(math.tan(math.pi * (0.001 - 0.5)), rel=1e-12)

    def test_left_bounds(self):
        assert make_transform("pareto:2").left_bound == 1.0
        assert make_transform("cauchy").left_bound == -math.inf
        assert make_transform("truncated_t:0.6,0").left_bound == -math.inf

    @pytest.mark.parametrize("nu,q0", [(0.3, 0.001), (1.0, 0.001), (1.2, 0.01), (5.0, 0.0)])
    def test_truncated_t_against_scipy(self, nu, q0):
        F = make_transform(TransformSpec("truncated_t", nu=nu, q0=q0))
        x = np.array([-1.0, 0.0, 2.0, 50.0, 1e6])
        x = x[x > F.left_bound]
        expected = stats.t.sf(x, nu) / (1.0 - q0)
        assert_allclose(F.sf(x), expected, rtol=1e-10)

    def test_pareto_sf(self):
        F = make_transform("pareto:2")
        assert_allclose(F.sf([0.5, 1.0, 2.0, 10.0]), [1.0, 1.0, 0.25, 0.01])

    @pytest.mark.parametrize("spec", ALL_SPECS)
    def test_isf_inverts_sf(self, spec):
        F = make_transform(spec)
        s = np.geomspace(1e-14, 0.9, 30)
        assert_allclose(F.sf(F.isf(s)), s, rtol=1e-9)

    @pytest.mark.parametrize("spec", ALL_SPECS)
    def test_regular_variation(self, spec):
        # sf(2x) / sf(x) -> 2^-gamma far in the tail
        F = make_transform(spec)
        x = F.isf(1e-12)
        assert F.sf(2 * x) / F.sf(x) == pytest.approx(2.0 ** -F.tail_index, rel=1e-3)

    @pytest.mark.parametrize("spec", ALL_SPECS)
    def test_quantile_at_zero_is_left_bound(self, spec):
        F = make_transform(spec)
        assert F.quantile(0.0) == F.left_bound
        assert F.quantile(0.5) == pytest.approx(F.isf(0.5))


class TestTransformPvalue:
    def test_saturates_at_zero(self):
        F = make_transform("pareto:1")
        assert transform_pvalue(F, 0.0) == XMAX

    def test_large_ratio_maps_to_left_bound(self):
        F = make_transform("truncated_t:1")
        assert transform_pvalue(F, 0.9, 0.5) == F.left_bound
        assert transform_pvalue(F, 1.0) == F.left_bound

    def test_pareto_reciprocal(self):
        F = make_transform("pareto:1")
        assert transform_pvalue(F, 0.02, 2.0) == pytest.approx(100.0)


class TestCombinedPvalue:
    def test_harmonic_mean_example(self):
        F = make_transform("pareto:1")
        assert combined_pvalue(F, [0.01, 0.02, 0.05]) == pytest.approx(3 / 170, rel=1e-12)
        assert round(combined_pvalue(F, [0.01, 0.02, 0.05]), 6) == 0.017647

    def test_two_values(self):
        F = make_transform("pareto:1")
        assert combined_pvalue(F, [0.02, 0.5]) == pytest.approx(1 / 26, rel=1e-12)

    @given(st.lists(pvalue, min_size=1, max_size=8), st.data())
    def test_weighted_hmp_oracle(self, p, data):
        w = data.draw(st.lists(st.floats(0.1, 10.0), min_size=len(p), max_size=len(p)))
        F = make_transform("pareto:1")
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            assert combined_pvalue(F, p, w) == pytest.approx(weighted_hmp(p, w), rel=1e-9)

    @given(st.lists(st.floats(1e-10, 0.999), min_size=1, max_size=8))
    def test_cauchy_combination_oracle(self, p):
        F = make_transform("cauchy")
        mpmath.mp.dps = 50
        t = mpmath.fsum(mpmath.cot(mpmath.pi * mpmath.mpf(v)) for v in p) / len(p)
        expected = float(mpmath.acot(t) / mpmath.pi) if t > 0 else float(1 + mpmath.acot(t) / mpmath.pi)
        assert combined_pvalue(F, p) == pytest.approx(expected, rel=1e-8, abs=1e-300)

    @pytest.mark.parametrize("spec", ALL_SPECS)
    @pytest.mark.parametrize("p", [1e-9, 0.003, 0.2, 0.7, 1.0])
    def test_single_pvalue_identity(self, spec, p):
        assert combined_pvalue(make_transform(spec), [p]) == pytest.approx(p, rel=1e-9)

    @pytest.mark.parametrize("spec", ALL_SPECS)
    @given(p=st.floats(1e-10, 1.0), n=st.integers(1, 12))
    @settings(max_examples=25)
    def test_comonotone_identity(self, spec, p, n):
        F = make_transform(spec)
        expected = min(1.0, n ** (1 - F.tail_index) * p)
        assert combined_pvalue(F, [p] * n) == pytest.approx(expected, rel=1e-8)

    @pytest.mark.parametrize("spec", ALL_SPECS)
    @given(p=st.lists(st.floats(1e-8, 1.0), min_size=2, max_size=6), i=st.integers(0, 5),
           factor=st.floats(0.05, 0.95))
    @settings(max_examples=25)
    def test_monotone_in_each_pvalue(self, spec, p, i, factor):
        F = make_transform(spec)
        i = i % len(p)
        q = list(p)
        q[i] *= factor
        assert combined_pvalue(F, q) <= combined_pvalue(F, p) * (1 + 1e-9)

    def test_zero_gives_zero(self):
        assert combined_pvalue(make_transform("truncated_t:0.6"), [0.0, 0.5]) == 0.0

    def test_rows(self):
        F = make_transform("truncated_t:0.6")
        P = np.array([[0.01, 0.2, 0.3], [0.5, 0.5, 0.9], [1e-6, 0.4, 0.8]])
        rows = combined_pvalue(F, P)
        assert_allclose(rows, [combined_pvalue(F, r) for r in P])

    @pytest.mark.parametrize("bad", [[-0.1, 0.5], [0.5, 1.2], [math.nan, 0.5]])
    def test_validation(self, bad):
        with pytest.raises(ValueError):
            combined_pvalue(make_transform("pareto:1"), bad)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError, match="dimension"):
            combined_pvalue(make_transform("pareto:1"), [0.1, 0.2], [1.0, 1.0, 1.0])

    def test_bonferroni_example(self):
        assert bonferroni_pvalue([0.01, 0.02, 0.05]) == pytest.approx(0.03)
        assert bonferroni_pvalue([0.5, 0.9]) == 1.0

    @pytest.mark.parametrize("spec", ["pareto:0.05", "truncated_t:0.05", "truncated_t:0.3"])
    @pytest.mark.parametrize("p", [[1e-300, 0.5], [1e-40, 1e-35, 0.2], [1e-200, 1e-200, 1e-200]])
    def test_deep_tail_against_mpmath(self, spec, p):
        # far in the tail every family is a pure power law with index gamma
        F = make_transform(spec)
        g = mpmath.mpf(F.tail_index)
        mpmath.mp.dps = 50
        total = mpmath.fsum(mpmath.mpf(v) ** (-1 / g) for v in p)
        expected = float(len(p) * total ** (-g))
        assert combined_pvalue(F, p) == pytest.approx(expected, rel=1e-9)

    @given(st.lists(st.floats(1e-8, 1.0), min_size=1, max_size=8))
    def test_small_gamma_approaches_bonferroni(self, p):
        # gamma -> 0 limit of the combination test is the Bonferroni test
        F = make_transform("pareto:0.01")
        pb = bonferroni_pvalue(p)
        pc = combined_pvalue(F, p)
        assume(pb < 0.5)
        assert pc == pytest.approx(pb, rel=0.1)


class TestDecision:
    def test_example_decisions(self):
        F = make_transform("pareto:1")
        P = [0.01, 0.02, 0.05]
        assert reject(F, P, alpha=0.05)
        assert not reject(F, P, alpha=0.01)

    @pytest.mark.parametrize("spec", ALL_SPECS)
    @given(p=st.lists(st.floats(1e-8, 1.0), min_size=1, max_size=6), alpha=st.floats(1e-4, 0.2))
    @settings(max_examples=30)
    def test_matches_combined_pvalue(self, spec, p, alpha):
        F = make_transform(spec)
        n = len(p)
        assume(alpha / n ** (1 - F.tail_index) < 1)
        pc = combined_pvalue(F, p)
        assume(abs(pc - alpha) > 1e-9 * alpha)
        assert reject(F, p, alpha=alpha) == (pc <= alpha)

    def test_threshold_formula(self):
        F = make_transform("pareto:0.6")
        assert threshold(F, 5, 0.005) == pytest.approx((0.005 / 5 ** 0.4) ** (-1 / 0.6))

    def test_degenerate_threshold(self):
        F = make_transform("pareto:1.2")
        with pytest.raises(DegenerateThresholdError):
            threshold(F, 5, 0.8)

    def test_statistic_mean(self):
        F = make_transform("pareto:1")
        assert statistic(F, [0.5, 0.25]) == pytest.approx(3.0)


class TestWeightVector:
    def test_renormalizes_with_warning(self):
        with pytest.warns(UserWarning, match="renormalizing"):
            w = WeightVector([1.0, 3.0])
        assert_allclose(np.asarray(w), [0.5, 1.5])

    def test_silent_when_normalized(self):
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            w = WeightVector([0.5, 1.5])
        assert len(w) == 2

    @pytest.mark.parametrize("bad", [[0.0, 1.0], [-1.0, 3.0], [], [math.inf, 1.0]])
    def test_rejects_bad(self, bad):
        with pytest.raises(ValueError):
            WeightVector(bad)

    def test_equal_weights_do_not_change_result(self):
        F = make_transform("truncated_t:0.6")
        P = [0.01, 0.3, 0.02]
        assert combined_pvalue(F, P, WeightVector(n=3)) == pytest.approx(combined_pvalue(F, P))
