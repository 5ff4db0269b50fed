"""Monte Carlo engine: window sizing, point-process sampling, single-trial
SINR arithmetic, batch statistics, and determinism."""

import math

import numpy as np
import pytest
from numpy.testing import assert_allclose
from scipy import integrate, stats

from hetcov import mcsim
from hetcov.association import AssociationEvent, assoc_prob_sbs_single
from hetcov.mcsim import (
    EVENT_CODES,
    NetworkRealization,
    TrialBatch,
    Window,
    association_from_batch,
    coverage_from_batch,
    default_window,
    empirical_association,
    empirical_coverage,
    far_field_mean,
    generate_ppp,
    literal_window,
    rate_from_batch,
    run_trials,
    sample_network,
    simulate_trial,
)
from hetcov.model import Scenario, TierParams, default_scenario
from hetcov.specfun import gamma_ccdf


def siso_scenario(p_macro=1.0, p_small=0.1, cluster_size=1, noise=0.0) -> Scenario:
    return Scenario(
        macro=TierParams(density=0.01, power=p_macro, antennas=1, users=1),
        small=TierParams(density=0.04, power=p_small, antennas=1, users=1),
        cluster_size=cluster_size,
        noise=noise,
    )


class GammaQueue:
    """Drop-in for sample_gamma that replays scripted values and records the
    (shape, size) of every draw, pinning the draw-order contract."""

    def __init__(self, values):
        self.values = [np.asarray(v, dtype=float) for v in values]
        self.calls = []

    def __call__(self, shape, rng, size=None):
        self.calls.append((shape, size))
        out = self.values.pop(0)
        assert size == len(out), f"expected draw of size {size}, scripted {len(out)}"
        return out


class TestWindows:
    def test_default_window_targets_small_tier_count(self):
        w = default_window(default_scenario())
        assert_allclose(w.half_width, 0.5 * math.sqrt(5000.0 / 0.04), rtol=1e-12)
        assert w.far_field

    def test_default_window_floors_macro_count(self):
        s = Scenario(
            macro=TierParams(density=1e-5, power=1.0, antennas=1, users=1),
            small=TierParams(density=0.04, power=1.0, antennas=1, users=1),
        )
        w = default_window(s)
        assert_allclose(w.half_width, 0.5 * math.sqrt(200.0 / 1e-5), rtol=1e-12)

    def test_literal_window(self):
        assert literal_window().half_width == 2500.0
        assert_allclose(Window(10.0).area, 400.0)

    def test_validation(self):
        with pytest.raises(ValueError):
            Window(0.0)


class TestFarField:
    def test_corner_factor_reference_value(self):
        # alpha = 3: closed form 8 * sin(pi/4) / (alpha - 2) = 4 * sqrt(2)
        assert_allclose(mcsim._corner_factor(3.0), 4.0 * math.sqrt(2.0), rtol=1e-10)

    @pytest.mark.parametrize("alpha", [2.5, 3.0, 3.7])
    def test_matches_polar_oracle(self, alpha):
        # direct polar integral of |x|^-alpha over the square's complement
        def polar(hw):
            val, _ = integrate.quad(
                lambda th: (hw / math.cos(th)) ** (2.0 - alpha), 0.0, math.pi / 4
            )
            return 8.0 * val / (alpha - 2.0)

        hw = 137.0
        s = Scenario(
            macro=TierParams(density=0.01, power=2.0, antennas=2, users=2, pathloss=alpha),
            small=TierParams(density=0.04, power=0.5, antennas=4, users=3, pathloss=alpha),
        )
        expected = (0.01 * 2.0 * 2 + 0.04 * 0.5 * 3) * polar(hw)
        assert_allclose(far_field_mean(s, Window(hw)), expected, rtol=1e-9)

    def test_decays_with_window_size(self):
        s = default_scenario()
        assert far_field_mean(s, Window(200.0)) < far_field_mean(s, Window(100.0))


class TestPointProcess:
    def test_poisson_count_mean(self):
        w = Window(5.0)  # area 100
        rng = np.random.default_rng(21)
        counts = [len(generate_ppp(1.0, w, rng)) for _ in range(10_000)]
        assert abs(np.mean(counts) - 100.0) < 1.0

    def test_points_inside_window(self):
        w = Window(7.0)
        pts = generate_ppp(2.0, w, np.random.default_rng(3))
        assert np.all(np.abs(pts) <= 7.0)

    def test_deterministic_for_fixed_stream(self):
        w = Window(30.0)
        a = generate_ppp(0.05, w, np.random.Generator(np.random.Philox(key=9)))
        b = generate_ppp(0.05, w, np.random.Generator(np.random.Philox(key=9)))
        assert np.array_equal(a, b)

    def test_rejects_bad_density(self):
        with pytest.raises(ValueError):
            generate_ppp(0.0, Window(10.0), np.random.default_rng(0))

    def test_sample_network_sorted_and_positive(self):
        net = sample_network(default_scenario(), np.random.default_rng(5), Window(60.0))
        for tier in (net.macro, net.small):
            assert len(tier) >= 1
            assert tier[0] > 0.0
            assert np.all(np.diff(tier) >= 0.0)

    def test_sample_network_resamples_sparse_window(self):
        # expected counts well below 1: must retry until both tiers populate
        net = sample_network(default_scenario(), np.random.default_rng(6), Window(3.0))
        assert len(net.macro) >= 1 and len(net.small) >= 2

    def test_sample_network_gives_up_on_hopeless_window(self):
        with pytest.raises(RuntimeError):
            sample_network(default_scenario(), np.random.default_rng(7), Window(0.001))

    def test_nearest_small_distance_distribution(self):
        # KS test of the nearest small-BS distance against 1 - exp(-lam*pi*r^2)
        s = default_scenario(cluster_size=1)
        rng = np.random.default_rng(22)
        w = Window(14.0)
        nearest = np.array(
            [sample_network(s, rng, w).small[0] for _ in range(20_000)]
        )
        lam = s.small.density
        ks = stats.kstest(nearest, lambda r: 1.0 - np.exp(-lam * math.pi * r**2))
        assert ks.pvalue > 0.01


class TestSingleTrial:
    def test_macro_served_sinr_arithmetic(self, monkeypatch):
        # one macro at 100 m (h=2) over one small interferer at 200 m (g=1):
        # SINR = (1 * 2 * 100^-3) / (0.1 * 1 * 200^-3) = 160
        queue = GammaQueue([[2.0], [7.0], [9.0], [1.0]])
        monkeypatch.setattr(mcsim, "sample_gamma", queue)
        net = NetworkRealization(macro=np.array([100.0]), small=np.array([200.0]))
        out = simulate_trial(
            siso_scenario(),
            "noncooperative",
            np.random.default_rng(0),
            window=Window(300.0, far_field=False),
            net=net,
        )
        assert out.event is AssociationEvent.MACRO
        assert out.serving_distances == (100.0,)
        assert_allclose(out.sinr, 160.0, rtol=1e-12)
        # draw-order contract: desired macro, desired small, interferers
        assert queue.calls == [(1, 1), (1, 1), (1, 1), (1, 1)]

    def test_noise_only_sinr(self, monkeypatch):
        # no effective interferers: SINR = p * h * r^-alpha / noise = 1
        queue = GammaQueue([[1.0], [1.0], [1.0], [1.0]])
        monkeypatch.setattr(mcsim, "sample_gamma", queue)
        noise = 1.0 * 1.0 * 10.0 ** (-3.0)
        net = NetworkRealization(macro=np.array([10.0]), small=np.array([1e9]))
        out = simulate_trial(
            siso_scenario(noise=noise),
            "noncooperative",
            np.random.default_rng(0),
            window=Window(300.0, far_field=False),
            net=net,
        )
        assert_allclose(out.sinr, 1.0, rtol=1e-12)

    def test_cluster_sums_desired_power(self, monkeypatch):
        # two serving small BSs at 50 m, h = 3 each, p_s = 0.1, noise 1e-6:
        # desired = 0.1 * (3 + 3) * 50^-3 = 4.8e-6  =>  SINR = 4.8
        queue = GammaQueue([[9.9], [3.0, 3.0], [1.0], [5.0, 5.0]])
        monkeypatch.setattr(mcsim, "sample_gamma", queue)
        net = NetworkRealization(macro=np.array([1e9]), small=np.array([50.0, 50.0]))
        out = simulate_trial(
            siso_scenario(cluster_size=2, noise=1e-6),
            "cooperative",
            np.random.default_rng(0),
            window=Window(300.0, far_field=False),
            net=net,
        )
        assert out.event is AssociationEvent.CLUSTER
        assert out.serving_distances == (50.0, 50.0)
        assert_allclose(out.sinr, 4.8, rtol=1e-10)
        assert queue.calls == [(1, 1), (1, 2), (1, 1), (1, 2)]

    def test_mode_validation(self):
        with pytest.raises(ValueError):
            simulate_trial(siso_scenario(), "hybrid", np.random.default_rng(0))

    def test_fixed_geometry_fading_distribution(self):
        # noise-dominated single macro link with an 8-antenna beamformer:
        # SINR / scale must be Gamma(8, 1); check mean and CCDF points
        s = Scenario(
            macro=TierParams(density=0.01, power=1.0, antennas=8, users=1),
            small=TierParams(density=0.04, power=0.1, antennas=4, users=1),
            noise=1e-9,
        )
        net = NetworkRealization(macro=np.array([40.0]), small=np.array([1e9]))
        w = Window(300.0, far_field=False)
        rng = np.random.default_rng(77)
        scale = 1.0 * 40.0 ** (-3.0) / 1e-9
        draws = np.array(
            [
                simulate_trial(s, "noncooperative", rng, window=w, net=net).sinr
                for _ in range(35_000)
            ]
        ) / scale
        assert abs(draws.mean() - 8.0) < 0.1
        for u in (4.0, 8.0, 12.0):
            empirical = float(np.mean(draws > u))
            assert abs(empirical - gamma_ccdf(8, 1.0, u)) < 0.01


class TestBatchStatistics:
    def test_batch_validation(self):
        with pytest.raises(ValueError):
            TrialBatch(events=np.zeros(2, dtype=np.int8), sinr=np.zeros(3))
        with pytest.raises(ValueError):
            TrialBatch(events=np.zeros(0, dtype=np.int8), sinr=np.zeros(0))

    def test_coverage_from_batch(self):
        batch = TrialBatch(
            events=np.zeros(4, dtype=np.int8), sinr=np.array([0.5, 2.0, 3.0, 0.1])
        )
        res = coverage_from_batch(batch, 1.0)
        assert res.value == 0.5
        assert res.trials == 4
        assert res.method == "mc"

    def test_rate_from_batch(self):
        batch = TrialBatch(events=np.zeros(3, dtype=np.int8), sinr=np.full(3, 3.0))
        res = rate_from_batch(batch)
        assert_allclose(res.value, 2.0, rtol=1e-12)
        assert res.ci_halfwidth == 0.0

    def test_association_from_batch_counts(self):
        codes = np.array(
            [EVENT_CODES[AssociationEvent.MACRO]] * 3
            + [EVENT_CODES[AssociationEvent.SMALL]] * 1,
            dtype=np.int8,
        )
        out = association_from_batch(TrialBatch(events=codes, sinr=np.ones(4)))
        assert out[AssociationEvent.MACRO].value == 0.75
        assert out[AssociationEvent.SMALL].value == 0.25
        assert out[AssociationEvent.CLUSTER].value == 0.0


class TestRunTrials:
    def test_worker_count_does_not_change_results(self):
        s = default_scenario()
        ref = run_trials(s, "cooperative", 300, master_seed=42, workers=1)
        for workers in (4, 8):
            alt = run_trials(s, "cooperative", 300, master_seed=42, workers=workers)
            assert np.array_equal(ref.events, alt.events)
            assert np.array_equal(ref.sinr, alt.sinr)

    def test_validation(self):
        s = default_scenario()
        with pytest.raises(ValueError):
            run_trials(s, "noncooperative", 0, master_seed=1)
        with pytest.raises(ValueError):
            run_trials(s, "noncooperative", 10, master_seed=1, workers=0)

    def test_extreme_thresholds(self):
        s = default_scenario()
        low = empirical_coverage(s, "noncooperative", 1e-9, 400, master_seed=3)
        high = empirical_coverage(s, "noncooperative", 1e9, 400, master_seed=3)
        assert low.value >= 0.999
        assert high.value <= 0.001

    def test_association_matches_analytic(self):
        s = default_scenario()
        batch = run_trials(s, "noncooperative", 2500, master_seed=8)
        freq = association_from_batch(batch)
        expected = assoc_prob_sbs_single(s)
        res = freq[AssociationEvent.SMALL]
        assert abs(res.value - expected) <= 4.0 * res.ci_halfwidth / 1.96
        assert freq[AssociationEvent.CLUSTER].value == 0.0
        total = sum(r.value for r in freq.values())
        assert_allclose(total, 1.0, rtol=1e-12)

    def test_window_size_does_not_shift_coverage(self):
        # far-field pedestal must absorb the truncation difference
        s = default_scenario()
        small, big = Window(62.5), Window(125.0)
        a = empirical_coverage(s, "noncooperative", 1.0, 3000, master_seed=5, window=small)
        b = empirical_coverage(s, "noncooperative", 1.0, 3000, master_seed=6, window=big)
        assert abs(a.value - b.value) <= a.ci_halfwidth + b.ci_halfwidth

    def test_joint_density_scaling_invariance(self):
        # zero noise: multiplying both densities by 4 only rescales space
        base = default_scenario()
        scaled = Scenario(
            macro=TierParams(
                density=4 * base.macro.density, power=base.macro.power,
                antennas=base.macro.antennas, users=base.macro.users,
            ),
            small=TierParams(
                density=4 * base.small.density, power=base.small.power,
                antennas=base.small.antennas, users=base.small.users,
            ),
            cluster_size=base.cluster_size,
        )
        a = empirical_coverage(base, "cooperative", 1.0, 2500, master_seed=9)
        b = empirical_coverage(scaled, "cooperative", 1.0, 2500, master_seed=10)
        assert abs(a.value - b.value) <= a.ci_halfwidth + b.ci_halfwidth


class TestEmpiricalAssociation:
    def test_distance_method_matches_analytic(self):
        s = default_scenario()
        expected = assoc_prob_sbs_single(s)
        freq = empirical_association(s, "noncooperative", 100_000, master_seed=12)
        res = freq[AssociationEvent.SMALL]
        se = res.ci_halfwidth / 1.96
        assert abs(res.value - expected) <= 3.0 * se

    def test_window_method_agrees_with_distance_method(self):
        s = default_scenario()
        a = empirical_association(s, "cooperative", 50_000, master_seed=13)
        b = empirical_association(s, "cooperative", 1500, master_seed=13, method="window")
        pa = a[AssociationEvent.CLUSTER]
        pb = b[AssociationEvent.CLUSTER]
        se = math.hypot(pa.ci_halfwidth, pb.ci_halfwidth) / 1.96
        assert abs(pa.value - pb.value) <= 3.5 * se

    def test_method_validation(self):
        with pytest.raises(ValueError):
            empirical_association(default_scenario(), "noncooperative", 10, 0, method="exact")
