import math

import numpy as np
import pytest

from molfield import channel
from molfield.analytic import PhiKernel, expected_all
from molfield.core import (
    ConfigError,
    Deployment,
    DetectorSpec,
    DomainError,
    EmissionProtocol,
    LinkParams,
    Medium,
    ReceiverKind,
    ReceiverSpec,
)
from molfield.geometry import TxField
from molfield.sim import estimate_ber, mc_type1, mc_type2, particle_sim, stream

R_R = 5.0


def make_link(kind="absorbing", D=80.0, k_d=0.0, N_tx=10_000, T_b=0.05, T_ss=None, bits=None, P1=0.5):
    proto = EmissionProtocol(N_tx, T_b, T_ss=T_ss, bits=bits, P1=P1)
    return LinkParams(Medium(D, k_d), ReceiverSpec(kind, R_R), proto)


def one_tx(r0):
    return TxField.from_points([[r0, 0.0, 0.0]])


class TestStreams:
    def test_reproducible_and_distinct(self):
        a = stream(5, 3).random(4)
        assert np.array_equal(a, stream(5, 3).random(4))
        assert not np.array_equal(a, stream(5, 4).random(4))
        assert not np.array_equal(a, stream(5, 3, tier=1).random(4))
        assert not np.array_equal(a, stream(6, 3).random(4))


class TestType1:
    def test_empty_fields(self):
        link = make_link(T_b=0.01)
        res = mc_type1(link, Deployment(1e-15, 50.0), 50, [0.0, 0.1])
        assert np.all(res.mean_all == 0) and np.all(res.mean_nearest == 0)

    @pytest.mark.parametrize("kind", ["absorbing", "passive"])
    def test_mean_matches_campbell(self, kind):
        link = make_link(kind, T_b=0.01)
        dep = Deployment(1e-4, 150.0)
        times = [0.0, 0.05, 0.3]
        res = mc_type1(link, dep, 4000, times, seed=1, threads=4)
        for k, t in enumerate(times):
            e = expected_all(PhiKernel(ReceiverKind(kind), t, 0.01, link.medium, R_R), dep, link.protocol.N_tx)
            assert abs(res.mean_all[k] - e) < 3 * res.se_all[k]

    def test_split_adds_up(self):
        res = mc_type1(make_link(T_b=0.01), Deployment(1e-4, 50.0), 300, [0.0, 0.1], seed=2)
        assert np.allclose(res.mean_nearest + res.mean_others, res.mean_all)

    def test_thread_count_irrelevant(self):
        link, dep = make_link("passive", T_b=0.01), Deployment(1e-4, 50.0)
        a = mc_type1(link, dep, 1500, [0.0, 0.2], seed=9, threads=1)
        b = mc_type1(link, dep, 1500, [0.0, 0.2], seed=9, threads=3)
        assert np.array_equal(a.mean_all, b.mean_all) and np.array_equal(a.se_nearest, b.se_nearest)

    def test_truncation(self):
        # a short truncation radius loses molecules; a long one has converged
        link = make_link(T_b=0.01)
        exact = expected_all(PhiKernel(ReceiverKind.ABSORBING, 0.3, 0.01, link.medium, R_R), Deployment(1e-4), 1e4)
        short = mc_type1(link, Deployment(1e-4, 20.0), 2000, [0.3], seed=4)
        long = mc_type1(link, Deployment(1e-4, 120.0), 2000, [0.3], seed=4)
        assert short.mean_all[0] + 5 * short.se_all[0] < 0.9 * exact
        assert abs(long.mean_all[0] - exact) < 3 * long.se_all[0]

    def test_needs_realizations(self):
        with pytest.raises(DomainError):
            mc_type1(make_link(), Deployment(1e-4), 0, [0.0])


class TestType2:
    DEP = Deployment(1e-5, 150.0)

    def test_all_zero_bits(self):
        link = make_link(D=800.0, N_tx=20, T_b=0.2, P1=0.0)
        res = mc_type2(link, self.DEP, 6, 200, seed=1)
        assert not res.counts.any() and not res.means.any() and not res.bits.any()

    def test_prefix_is_kept(self):
        link = make_link(D=800.0, N_tx=20, T_b=0.2, bits=[1, 0, 1, 0])
        res = mc_type2(link, self.DEP, 6, 300, seed=1)
        assert np.all(res.bits[:, :4] == [1, 0, 1, 0])
        assert 0.3 < res.bits[:, 4:].mean() < 0.7

    def test_means_match_type1(self):
        # bit j of a lone pulse sees the window [(j-1) T_b, j T_b]
        link = make_link(D=800.0, N_tx=20, T_b=0.2, bits=[1, 0, 0, 0])
        t2 = mc_type2(link, self.DEP, 4, 20_000, seed=5, threads=4)
        t1 = mc_type1(link, self.DEP, 20_000, [0.0, 0.2, 0.4, 0.6], seed=6, threads=4)
        mean = t2.counts.mean(axis=0)
        se = t2.counts.std(axis=0, ddof=1) / math.sqrt(len(t2))
        assert np.all(np.abs(mean - t1.mean_all) < 3 * np.hypot(se, t1.se_all))

    def test_counts_follow_means(self):
        link = make_link(D=800.0, N_tx=20, T_b=0.2, bits=[1, 1, 0])
        res = mc_type2(link, self.DEP, 3, 20_000, seed=8, threads=2)
        resid = (res.counts - res.means).mean(axis=0)
        assert np.all(np.abs(resid) < 3 * np.sqrt(res.means.mean(axis=0) / len(res)))

    def test_thread_count_irrelevant(self):
        link = make_link("passive", D=800.0, N_tx=20, T_b=0.2)
        a = mc_type2(link, self.DEP, 5, 1200, seed=3, threads=1)
        b = mc_type2(link, self.DEP, 5, 1200, seed=3, threads=4)
        assert np.array_equal(a.counts, b.counts) and np.array_equal(a.bits, b.bits)

    def test_traces(self):
        res = mc_type2(make_link(D=800.0, N_tx=20, T_b=0.2), self.DEP, 3, 4, seed=1)
        tr = list(res.traces())
        assert len(tr) == 4 and len(tr[0]) == 3
        assert np.allclose(tr[0].sample_times, [0.2, 0.4, 0.6])


class TestEstimateBer:
    def test_perfect_traces(self):
        bits = np.array([[1, 0, 1], [0, 1, 0], [1, 1, 1]])
        est = estimate_ber(bits * 50, DetectorSpec("fixed", 5), bits)
        assert est.p_error == 0.0 and est.ci_low == 0.0 and est.ci_high > 0

    def test_huge_threshold_misses_every_one(self):
        rng = np.random.default_rng(0)
        bits = (rng.random((1000, 4)) < 0.5).astype(int)
        est = estimate_ber(bits * 50, DetectorSpec("fixed", 10**9), bits)
        assert est.p_error == pytest.approx(bits[:, -1].mean())

    def test_wilson_interval(self):
        bits = np.ones((100, 1), dtype=int)
        counts = np.zeros((100, 1), dtype=int)
        counts[:90] = 3
        est = estimate_ber(counts, DetectorSpec("fixed", 1), bits)
        assert est.errors == 10 and est.ci_low < 0.1 < est.ci_high

    def test_errors(self):
        with pytest.raises(DomainError):
            estimate_ber(np.zeros((0, 3)), DetectorSpec(), np.zeros((0, 3)))
        with pytest.raises(DomainError):
            estimate_ber(np.zeros((2, 3)), DetectorSpec(), np.zeros((2, 2)))


class TestParticles:
    def test_frozen_particles_never_arrive(self):
        link = make_link(D=1e-12, N_tx=500, T_b=0.02)
        res = particle_sim(one_tx(10.0), link, 1e-3, [0.01, 0.02], seed=1)
        assert res.absorbed.sum() == 0 and res.trace.counts.sum() == 0

    def test_step_must_be_below_sampling_interval(self):
        link = make_link(T_b=0.01)
        with pytest.raises(ConfigError):
            particle_sim(one_tx(10.0), link, 0.01, [0.01])
        with pytest.raises(ConfigError):
            particle_sim(one_tx(10.0), link, 0.0, [0.01])

    def test_sample_times_on_grid(self):
        with pytest.raises(ConfigError):
            particle_sim(one_tx(10.0), make_link(T_b=0.01), 1e-3, [0.0105])

    @pytest.mark.parametrize("kind", ["absorbing", "passive"])
    def test_conservation_every_step(self, kind):
        link = make_link(kind, k_d=5.0, N_tx=3000, T_b=0.01)
        field = TxField.from_points([[8.0, 0, 0], [0, -12.0, 0]])
        res = particle_sim(field, link, 1e-3, [0.01, 0.02, 0.03], seed=2, bits=[1, 1], record_steps=True)
        emitted, live, absorbed, degraded = res.step_balance.T
        assert np.array_equal(emitted, live + absorbed + degraded)
        assert emitted[-1] == 2 * 2 * 3000 and degraded[-1] > 0
        assert np.array_equal(res.emitted, res.live + res.absorbed + res.degraded)
        if kind == "passive":
            assert absorbed[-1] == 0

    def test_absorbed_counts_monotone(self):
        link = make_link(N_tx=4000, T_b=0.01)
        times = np.round(np.arange(1, 21) * 0.01, 10)
        res = particle_sim(one_tx(10.0), link, 1e-3, times, seed=3)
        assert np.all(np.diff(res.absorbed) >= 0)
        assert np.array_equal(np.cumsum(res.trace.counts), res.absorbed)

    def test_passive_counts_rise_then_fall(self):
        link = make_link("passive", N_tx=20_000, T_b=0.01)
        times = np.round(np.arange(1, 41) * 0.01, 10)
        counts = particle_sim(one_tx(12.0), link, 1e-3, times, seed=4).trace.counts
        assert np.any(np.diff(counts) > 0) and np.any(np.diff(counts) < 0)
        assert 0 < int(np.argmax(counts)) < len(counts) - 1

    def test_passive_count_near_analytic(self):
        link = make_link("passive", N_tx=20_000, T_b=0.01)
        res = particle_sim(one_tx(10.0), link, 1e-3, [0.1, 0.3], seed=5)
        p = channel.ps_fraction(10.0, np.array([0.1, 0.3]), link.medium, R_R)
        mean = 20_000 * p
        assert np.all(np.abs(res.inside - mean) < 4 * np.sqrt(mean * (1 - p)))

    def test_thread_count_irrelevant(self):
        link = make_link(N_tx=9000, T_b=0.01)
        field = TxField.from_points([[9.0, 0, 0], [0, 0, 14.0]])
        a = particle_sim(field, link, 1e-3, [0.01, 0.05], seed=6, threads=1)
        b = particle_sim(field, link, 1e-3, [0.01, 0.05], seed=6, threads=4)
        assert np.array_equal(a.absorbed, b.absorbed) and np.array_equal(a.trace.counts, b.trace.counts)

    def test_bridge_test_absorbs_more(self):
        link = make_link(N_tx=8000, T_b=0.05)
        naive = particle_sim(one_tx(10.0), link, 1e-2, [0.1], seed=7)
        bridge = particle_sim(one_tx(10.0), link, 1e-2, [0.1], seed=7, hit_test="bridge")
        exact = 8000 * channel.fa_cum_fraction(10.0, 0.1, link.medium, R_R)
        assert naive.absorbed[0] < bridge.absorbed[0]
        assert abs(bridge.absorbed[0] - exact) < abs(naive.absorbed[0] - exact)

    def test_unknown_hit_test(self):
        with pytest.raises(ConfigError):
            particle_sim(one_tx(10.0), make_link(T_b=0.01), 1e-3, [0.01], hit_test="exact")

    def test_degradation_thins_absorption(self):
        link = make_link(k_d=0.0, N_tx=6000, T_b=0.05)
        plain = particle_sim(one_tx(10.0), link, 1e-3, [0.2], seed=8).absorbed[0]
        decayed = particle_sim(one_tx(10.0), make_link(k_d=10.0, N_tx=6000, T_b=0.05), 1e-3, [0.2], seed=8).absorbed[0]
        m = Medium(80.0, 10.0)
        assert decayed < plain
        exact = 6000 * channel.fa_cum_fraction(10.0, 0.2, m, R_R)
        assert decayed == pytest.approx(exact, rel=0.1)
