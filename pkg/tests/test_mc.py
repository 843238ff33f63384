import numpy as np
import pytest

from drlab.errors import TreeTooDeep, UsageError
from drlab.evolve import EvolveConfig, evolve
from drlab.laws import ModelParams, make_law, point_mass, two_point_critical
from drlab.mc import LEAF_GUARD, McConfig, estimate, render_mc_csv, sample_xn

M2 = ModelParams(2)
M3 = ModelParams(3)


class TestMcConfig:
    def test_validation(self):
        with pytest.raises(UsageError):
            McConfig(n=-1, samples=10, seed=1)
        with pytest.raises(UsageError):
            McConfig(n=3, samples=0, seed=1)
        with pytest.raises(UsageError):
            McConfig(n=3, samples=10, seed=1, workers=0)


class TestDegenerateLaws:
    def test_point_mass_zero_is_absorbing(self):
        est = estimate(point_mass(0, M2), McConfig(n=6, samples=500, seed=7), M2)
        assert est.mean_hat == 0.0
        assert est.p_zero_hat == 1.0
        assert est.stderr_mean == 0.0
        assert est.stderr_p0 == 0.0

    def test_point_mass_one_is_fixed(self):
        # two copies of 1 sum to 2, minus one: the value never moves
        est = estimate(point_mass(1, M2), McConfig(n=5, samples=400, seed=3), M2)
        assert est.mean_hat == 1.0
        assert est.p_zero_hat == 0.0
        assert est.stderr_mean == 0.0


class TestReproducibility:
    def test_same_seed_same_estimate(self):
        law = two_point_critical(2, M2)
        cfg = McConfig(n=4, samples=5_000, seed=20_260_818)
        assert estimate(law, cfg, M2) == estimate(law, cfg, M2)

    def test_worker_count_does_not_change_results(self):
        law = two_point_critical(2, M2)
        # force several chunks so the thread pool actually splits the work
        n = 9
        samples = 3 * (2 ** 22 // M2.m ** n) + 17
        base = estimate(law, McConfig(n=n, samples=samples, seed=11), M2)
        split = estimate(law, McConfig(n=n, samples=samples, seed=11, workers=3), M2)
        assert base == split

    def test_different_seeds_differ(self):
        law = two_point_critical(2, M2)
        a = estimate(law, McConfig(n=4, samples=5_000, seed=1), M2)
        b = estimate(law, McConfig(n=4, samples=5_000, seed=2), M2)
        assert a != b


class TestGuards:
    def test_tree_too_deep(self):
        law = two_point_critical(2, M2)
        with pytest.raises(TreeTooDeep):
            estimate(law, McConfig(n=27, samples=1, seed=0), M2)

    def test_single_sample_path_guarded_too(self):
        assert 2 ** 26 == LEAF_GUARD
        law = two_point_critical(2, M2)
        rng = np.random.default_rng(0)
        with pytest.raises(TreeTooDeep):
            sample_xn(law, 27, M2, rng)


class TestSampleXn:
    def test_generation_one_support(self):
        law = two_point_critical(2, M2)
        rng = np.random.default_rng(42)
        seen = {sample_xn(law, 1, M2, rng) for _ in range(400)}
        # (X + X' - 1)^+ with X, X' in {0, 2} can only land on {0, 1, 3}
        assert seen <= {0, 1, 3}
        assert seen == {0, 1, 3}

    def test_generation_zero_draws_initial_law(self):
        law = make_law([0.25, 0.75], M3)
        rng = np.random.default_rng(5)
        draws = [sample_xn(law, 0, M3, rng) for _ in range(2_000)]
        assert set(draws) == {0, 1}
        assert abs(np.mean(draws) - 0.75) < 0.05

    def test_exact_law_sampleable(self):
        law = make_law([0.5, 0.25, 0.25], M2, exact=True)
        rng = np.random.default_rng(9)
        vals = [sample_xn(law, 1, M2, rng) for _ in range(200)]
        assert all(0 <= v <= 3 for v in vals)


class TestAgainstExactEvolution:
    def test_mean_and_zero_mass_within_four_sigma(self):
        law = two_point_critical(2, M2)
        trace = evolve(law, M2, EvolveConfig(n_max=3, tail_epsilon=0.0))
        rec = trace.record(3)
        est = estimate(law, McConfig(n=3, samples=200_000, seed=123_457), M2)
        assert abs(est.mean_hat - rec.mean) <= 4.0 * est.stderr_mean
        assert abs(est.p_zero_hat - rec.p_zero) <= 4.0 * est.stderr_p0

    def test_stderr_scale(self):
        law = two_point_critical(2, M2)
        small = estimate(law, McConfig(n=3, samples=2_000, seed=5), M2)
        large = estimate(law, McConfig(n=3, samples=128_000, seed=5), M2)
        # standard error shrinks like 1/sqrt(N): a factor 64 in N is a
        # factor 8 in stderr, up to sampling noise in the variance itself
        assert large.stderr_mean < small.stderr_mean / 6.0


class TestCsv:
    def test_header_and_row(self):
        law = two_point_critical(2, M2)
        cfg = McConfig(n=2, samples=1_000, seed=99)
        est = estimate(law, cfg, M2)
        text = render_mc_csv(est, cfg)
        lines = text.strip().split("\n")
        assert lines[0] == "n,samples,seed,mean_hat,stderr_mean,p_zero_hat,stderr_p0"
        fields = lines[1].split(",")
        assert fields[0] == "2" and fields[1] == "1000" and fields[2] == "99"
        assert float(fields[3]) == est.mean_hat
        assert float(fields[6]) == est.stderr_p0
