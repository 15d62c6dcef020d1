"""Jump chains, the index process and kernel estimation, checked against
literal term-by-term oracles."""
import numpy as np
import pytest

from conftest import random_chain, toy_grid
from wismc.core import (
    IndexParams,
    JumpChain,
    ScoreSpec,
    StateGrid,
    discretize,
    estimate_kernel,
    ewma_score,
    index_at_jump,
    index_at_time,
    index_at_times,
    index_trajectory,
    make_state_grid,
    shift_check,
)
from wismc.errors import ContractViolation, EstimationError, ParameterError


def oracle_index(values, times, t, lam):
    """Literal double-sum expansion: every past minute scores the holding
    state with geometric decay, plus the current-state term; normalizer is
    the geometric sum over the window span plus one."""
    pos = max(k for k in range(len(times)) if times[k] <= t)
    norm = sum(lam ** e for e in range(int(t - times[0]) + 1))
    total = 0.0
    for k in range(pos):
        for a in range(int(times[k]), int(times[k + 1])):
            total += lam ** (t - a) * values[k] ** 2 / norm
    for a in range(int(times[pos]), int(t)):
        total += lam ** (t - a) * values[pos] ** 2 / norm
    total += values[pos] ** 2 / norm
    return total


class TestStateGrid:
    def test_make_grid_center_bin(self):
        rng = np.random.default_rng(0)
        x = rng.standard_t(3, 20000) * 1e-3
        grid = make_state_grid(x, 5)
        assert grid.n_states == 5
        assert grid.edges[2] < 0 < grid.edges[3]  # center bin brackets zero
        assert np.isinf(grid.edges[0]) and np.isinf(grid.edges[-1])

    def test_every_value_maps(self):
        grid = make_state_grid(np.random.default_rng(1).standard_normal(1000), 4)
        idx = grid.state_of([-100.0, 0.0, 100.0])
        assert idx.min() >= 0 and idx.max() < 4

    def test_validation(self):
        with pytest.raises(ParameterError):
            StateGrid(edges=np.array([0.0, 1.0, 2.0]), representatives=np.array([0.5, 1.5]))
        with pytest.raises(ParameterError):
            StateGrid(edges=np.array([-np.inf, 1.0, 0.0, np.inf]),
                      representatives=np.array([0.0, 0.5, 1.0]))


class TestDiscretize:
    def test_hand_trace(self):
        grid = toy_grid([0.0, 1.0, 2.0, 3.0])
        values = grid.representatives[[2, 2, 2, 1, 1, 3]]
        chain = discretize(values, grid)
        assert list(chain.states) == [2, 1, 3]
        assert list(chain.times) == [0, 3, 5]

    def test_constant_series(self):
        grid = toy_grid([0.0, 1.0])
        chain = discretize(np.zeros(10), grid)
        assert len(chain) == 1 and chain.sojourns().size == 0

    def test_alternating(self):
        grid = toy_grid([0.0, 1.0])
        chain = discretize(np.array([0.0, 1.0] * 5), grid)
        assert np.all(chain.sojourns() == 1)

    def test_empty(self):
        chain = discretize(np.array([]), toy_grid([0.0, 1.0]))
        assert len(chain) == 0

    def test_chain_invariants_enforced(self):
        grid = toy_grid([0.0, 1.0])
        with pytest.raises(ContractViolation):
            JumpChain(states=np.array([0, 0]), times=np.array([0, 2]), grid=grid)
        with pytest.raises(ContractViolation):
            JumpChain(states=np.array([0, 1]), times=np.array([2, 2]), grid=grid)


class TestEwmaScore:
    def test_zero_state(self):
        assert ewma_score(0.0, 5, 0.9, 2.0) == 0.0

    def test_no_decay(self):
        assert ewma_score(0.3, 7, 1.0, 4.0) == pytest.approx(0.09 / 4.0)

    def test_hand_value(self):
        assert ewma_score(0.5, 2, 0.9, 1.0) == pytest.approx(0.2025)

    def test_contract(self):
        with pytest.raises(ContractViolation):
            ewma_score(0.5, -1, 0.9, 1.0)
        with pytest.raises(ContractViolation):
            ewma_score(0.5, 1, 0.9, 0.0)


class TestIndexProcess:
    def test_zero_states_zero_index(self):
        grid = StateGrid(edges=np.array([-np.inf, 0.5, np.inf]),
                         representatives=np.array([0.0, 0.0]))
        chain = JumpChain(states=np.array([0, 1, 0]), times=np.array([0, 2, 5]),
                          grid=grid)
        sc = ScoreSpec("ewma-squares", lam=0.9)
        assert index_at_jump(chain, 2, sc) == 0.0

    def test_degenerate_history(self):
        grid = toy_grid([0.0, 0.7])
        chain = JumpChain(states=np.array([1]), times=np.array([0]), grid=grid)
        sc = ScoreSpec("ewma-squares", lam=0.9)
        assert index_at_jump(chain, 0, sc) == pytest.approx(0.49)

    def test_matches_term_by_term_oracle(self):
        rng = np.random.default_rng(3)
        worst = 0.0
        for _ in range(100):
            chain = random_chain(rng)
            lam = float(rng.uniform(0.5, 1.0))
            sc = ScoreSpec("ewma-squares", lam=lam)
            vals = chain.values
            for n in range(len(chain)):
                got = index_at_jump(chain, n, sc)
                want = oracle_index(vals, chain.times, chain.times[n], lam)
                worst = max(worst, abs(got - want))
        assert worst < 1e-14

    def test_time_form_matches_oracle_mid_sojourn(self):
        rng = np.random.default_rng(4)
        for _ in range(50):
            chain = random_chain(rng)
            lam = float(rng.uniform(0.5, 1.0))
            sc = ScoreSpec("ewma-squares", lam=lam)
            t = int(rng.integers(chain.times[0], chain.times[-1] + 4))
            got = index_at_time(chain, t, sc)
            want = oracle_index(chain.values, chain.times, t, lam)
            assert got == pytest.approx(want, abs=1e-14)

    def test_coincidence_at_jump_times(self):
        rng = np.random.default_rng(5)
        chain = random_chain(rng)
        sc = ScoreSpec("ewma-squares", lam=0.93)
        for n in range(len(chain)):
            assert index_at_time(chain, int(chain.times[n]), sc) == pytest.approx(
                index_at_jump(chain, n, sc), abs=1e-14)

    def test_fast_paths_match_reference(self):
        rng = np.random.default_rng(6)
        for _ in range(30):
            chain = random_chain(rng)
            sc = ScoreSpec("ewma-squares", lam=float(rng.uniform(0.5, 1.0)))
            traj = index_trajectory(chain, sc)
            for n in range(len(chain)):
                assert traj[n] == pytest.approx(index_at_jump(chain, n, sc), abs=1e-12)
            qts = np.sort(rng.integers(chain.times[0], chain.times[-1] + 4, 5))
            fast = index_at_times(chain, qts, sc)
            for q, t in enumerate(qts):
                assert fast[q] == pytest.approx(index_at_time(chain, int(t), sc),
                                                abs=1e-12)

    def test_lambda_one(self):
        rng = np.random.default_rng(7)
        chain = random_chain(rng)
        sc = ScoreSpec("ewma-squares", lam=1.0)
        got = index_at_jump(chain, len(chain) - 1, sc)
        want = oracle_index(chain.values, chain.times, chain.times[-1], 1.0)
        assert got == pytest.approx(want, abs=1e-14)

    def test_monotone_bound(self):
        rng = np.random.default_rng(8)
        for _ in range(20):
            chain = random_chain(rng)
            sc = ScoreSpec("ewma-squares", lam=float(rng.uniform(0.5, 1.0)))
            idx = index_trajectory(chain, sc)
            top = np.max(chain.values ** 2)
            assert np.all(idx >= 0.0) and np.all(idx <= top + 1e-12)

    def test_before_history(self):
        chain = random_chain(np.random.default_rng(9))
        with pytest.raises(ContractViolation):
            index_at_time(chain, int(chain.times[0]) - 1, ScoreSpec(lam=0.9))

    def test_zero_state_sojourn_contributes_nothing(self):
        # mid-sojourn in a zero-valued state: only the decayed past counts,
        # and the current-state term vanishes
        grid = StateGrid(edges=np.array([-np.inf, 0.005, np.inf]),
                         representatives=np.array([0.0, 0.02]))
        chain = JumpChain(states=np.array([1, 0]), times=np.array([0, 2]),
                          grid=grid)
        sc = ScoreSpec("ewma-squares", lam=0.9)
        t = 5  # three minutes into the zero-state sojourn
        norm = sum(0.9 ** e for e in range(t + 1))
        want = (0.9 ** 5 + 0.9 ** 4) * 0.02 ** 2 / norm
        assert index_at_time(chain, t, sc) == pytest.approx(want, abs=1e-15)


class TestShiftCheck:
    def test_ewma_passes_on_random_windows(self):
        rng = np.random.default_rng(10)
        for _ in range(100):
            chain = random_chain(rng)
            lam = float(rng.uniform(0.5, 1.0))
            assert shift_check(chain, ScoreSpec("ewma-squares", lam=lam))

    def test_custom_elapsed_only_score_passes(self):
        rng = np.random.default_rng(11)
        sc = ScoreSpec("custom", func=lambda v, t, a: 0.8 ** (t - a) * abs(v))
        for _ in range(20):
            assert shift_check(random_chain(rng), sc)

    def test_absolute_time_score_fails(self):
        rng = np.random.default_rng(12)
        bad = ScoreSpec("custom",
                        func=lambda v, t, a: 0.9 ** (t - a) * v * v * (1.0 + 0.3 * np.sin(a)))
        fails = sum(not shift_check(random_chain(rng), bad) for _ in range(20))
        assert fails >= 1


class TestEstimateKernel:
    def test_single_transition(self):
        grid = toy_grid([0.0, 1.0])
        chain = JumpChain(states=np.array([0, 1]), times=np.array([0, 2]), grid=grid)
        kernel, wait = estimate_kernel(chain, IndexParams(lam=0.9, n_index_bins=1,
                                                          t_max=4))
        assert kernel.pmf[0, 0, 1, 1] == 1.0
        assert wait.at(0, 0, 2) == 1.0
        assert wait.at(0, 0, 1) == 0.0

    def test_hand_counted_frequencies(self):
        grid = toy_grid([-0.01, 0.0, 0.02])
        states = np.array([0, 1, 2, 0, 2, 1, 0, 1])
        times = np.array([0, 2, 3, 7, 8, 10, 11, 15])
        chain = JumpChain(states=states, times=times, grid=grid)
        kernel, _ = estimate_kernel(chain, IndexParams(lam=0.9, n_index_bins=1,
                                                       t_max=6))
        from collections import Counter
        oracle = Counter(zip(states[:-1], states[1:], np.diff(times)))
        for (i, j, t), n in oracle.items():
            assert kernel.counts[i, 0, j, min(t, 6) - 1] == n
        assert kernel.counts.sum() == len(states) - 1

    def test_rows_are_pmfs(self):
        rng = np.random.default_rng(13)
        chain = random_chain(rng, n_jumps=400)
        kernel, _ = estimate_kernel(chain, IndexParams(lam=0.95, n_index_bins=3))
        sums = kernel.pmf.sum(axis=(2, 3))
        assert np.allclose(sums[kernel.occupied], 1.0, atol=1e-12)
        assert np.all(sums[~kernel.occupied] == 0.0)

    def test_no_zero_sojourns(self):
        rng = np.random.default_rng(14)
        chain = random_chain(rng, n_jumps=200)
        kernel, wait = estimate_kernel(chain, IndexParams(lam=0.9, n_index_bins=2))
        # cdf at t=0 vanishes everywhere: sojourns start at one minute
        for i in range(kernel.grid.n_states):
            for b in range(kernel.n_index_bins):
                assert wait.at(i, b, 0) == 0.0

    def test_single_bin_degenerates_to_plain_counting(self):
        rng = np.random.default_rng(15)
        chain = random_chain(rng, n_jumps=2000, n_states=3)
        kernel, _ = estimate_kernel(chain, IndexParams(lam=0.9, n_index_bins=1))
        # plain semi-Markov counting oracle, no index anywhere
        t_max = kernel.t_max
        plain = np.zeros((3, 3, t_max), dtype=np.int64)
        soj = np.minimum(chain.sojourns(), t_max)
        for i, j, t in zip(chain.states[:-1], chain.states[1:], soj):
            plain[i, j, t - 1] += 1
        assert np.array_equal(kernel.counts[:, 0], plain)

    def test_sojourn_truncation_lumps_overflow(self):
        grid = toy_grid([0.0, 1.0])
        chain = JumpChain(states=np.array([0, 1, 0, 1]),
                          times=np.array([0, 1, 2, 50]), grid=grid)
        kernel, _ = estimate_kernel(chain, IndexParams(lam=0.9, n_index_bins=1,
                                                       t_max=3))
        assert kernel.counts[0, 0, 1, 2] == 1  # the 48-minute sojourn in the top slot

    def test_fallback_ladder(self):
        rng = np.random.default_rng(16)
        chain = random_chain(rng, n_jumps=50, n_states=3)
        kernel, _ = estimate_kernel(chain, IndexParams(lam=0.9, n_index_bins=4))
        empty = np.argwhere(~kernel.occupied)
        if empty.size:
            i, b = empty[0]
            pmf, level = kernel.cell_pmf(int(i), int(b))
            assert level >= 1
            assert pmf.sum() == pytest.approx(1.0)

    def test_needs_a_transition(self):
        grid = toy_grid([0.0, 1.0])
        chain = JumpChain(states=np.array([0]), times=np.array([0]), grid=grid)
        with pytest.raises(EstimationError):
            estimate_kernel(chain, IndexParams(lam=0.9))
