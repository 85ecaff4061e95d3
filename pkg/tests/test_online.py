import math

import numpy as np
import pytest

from conftest import random_topology
from leaderselect import (
    EpochSequence,
    ErrorEvaluator,
    ExpertsState,
    RegretLedger,
    Topology,
    adversarial_lower_bound_experiment,
    choose_horizon,
    default_eta,
    greedy_guarantee_terms,
    randomized_experts_step,
    regret_of_run,
    run_dynamic_selection,
    select_dynamic_leaders,
    select_k_leaders,
)


def random_sequence(rng, n, r, connected=True):
    topos = [random_topology(rng, n, connected=connected) for _ in range(r)]
    return EpochSequence(tuple((tp, float(rng.uniform(0.1, 0.6))) for tp in topos))


# -- experts --------------------------------------------------------------------


def test_eta_zero_stays_uniform(rng):
    state = ExpertsState.uniform(4, 1, eta=0.0)
    for _ in range(50):
        _, state = randomized_experts_step(state, rng.random(4), rng)
        np.testing.assert_allclose(state.probabilities(0), 0.25)


def test_better_action_gains_probability(rng):
    state = ExpertsState.uniform(2, 1, eta=0.5)
    prev = state.probabilities(0)[1]
    for _ in range(30):
        _, state = randomized_experts_step(state, [1.0, 0.0], rng)
        cur = state.probabilities(0)[1]
        assert cur > prev or cur == 1.0
        prev = cur


def test_weights_positive_and_normalised(rng):
    state = ExpertsState.uniform(6, 1, eta=1.0)
    for _ in range(3000):
        _, state = randomized_experts_step(state, rng.random(6), rng)
        assert (state.weights > 0).all()
        assert state.probabilities(0).sum() == pytest.approx(1.0, abs=1e-12)


def test_underflow_rescaled(rng):
    state = ExpertsState.uniform(3, 1, eta=1.0)
    for _ in range(1000):
        _, state = randomized_experts_step(state, [1.0, 1.0, 1.0], rng)
    assert state.weights.max() > 1e-100


def test_experts_input_checks(rng):
    state = ExpertsState.uniform(3, 1)
    with pytest.raises(ValueError):
        randomized_experts_step(state, [1.0, 1.0], rng)
    with pytest.raises(ValueError):
        randomized_experts_step(state, [1.0, -1.0, 0.0], rng)
    with pytest.raises(FloatingPointError):
        ExpertsState(np.zeros((3, 1)))


def test_experts_regret_bernoulli():
    n, T = 10, 5000
    eta = default_eta(n, T)
    for seed in range(50):
        rng = np.random.default_rng(seed)
        means = rng.uniform(0.2, 0.8, n)
        losses = (rng.random((T, n)) < means).astype(float)
        state = ExpertsState.uniform(n, 1, eta=eta)
        total = 0.0
        for m in range(T):
            a, state = randomized_experts_step(state, losses[m], rng)
            total += losses[m, a]
        regret = total - losses.sum(axis=0).min()
        assert regret <= 2 * math.sqrt(T * math.log(n) / 2)


def test_default_eta():
    assert default_eta(10) == 0.3
    assert default_eta(10, 100) == pytest.approx(min(1.0, math.sqrt(8 * math.log(10) / 100)))


# -- select_dynamic_leaders ------------------------------------------------------------


def test_k_equals_n_selects_all(rng):
    topo = random_topology(rng, 4)
    state = ExpertsState.uniform(4, 4)
    state = ExpertsState(state.weights * rng.uniform(0.01, 5, size=(4, 4)), last_leaders=(0, 1, 2, 3))
    S, _ = select_dynamic_leaders(state, topo, 0.3, 4, rng=rng)
    assert sorted(S) == [0, 1, 2, 3]


def test_k_too_large(rng):
    with pytest.raises(ValueError):
        select_dynamic_leaders(ExpertsState.uniform(3, 3), None, 0.1, 4, rng=rng)


def test_first_epoch_uniform_distinct(rng):
    state = ExpertsState.uniform(5, 3)
    S, new = select_dynamic_leaders(state, None, 0.1, 3, rng=rng)
    assert len(set(S)) == 3
    np.testing.assert_array_equal(new.weights, state.weights)
    assert new.epoch == 1 and new.last_leaders == S


def test_loss_exponent_rewards_low_error(rng):
    topo = random_topology(rng, 6)
    ev = ErrorEvaluator(topo, 0.3)
    state = ExpertsState.uniform(6, 1, beta=0.5)
    state = ExpertsState(state.weights, beta=0.5, last_leaders=(0,))
    _, new = select_dynamic_leaders(state, topo, 0.3, 1, rng=rng)
    vals = np.array([ev.bound({i}) for i in range(6)])
    np.testing.assert_allclose(new.weights[:, 0], 0.5 ** (vals / vals.max()))
    _, lit = select_dynamic_leaders(state, topo, 0.3, 1, rng=rng, exponent="gain")
    np.testing.assert_allclose(lit.weights[:, 0], 0.5 ** (ev.bound(()) - vals))


def test_static_topology_concentrates():
    # closeness measured on the normalised scale the weights are updated with
    for seed in range(20):
        rng = np.random.default_rng(seed)
        topo = random_topology(rng, 6)
        t = choose_horizon(topo, 1.0, 2.0, rng)
        ev = ErrorEvaluator(topo, t)
        best = select_k_leaders(ev, 2).objective
        sets = run_dynamic_selection(EpochSequence(((topo, t),) * 500), 2, 2.0, rng)
        excess = np.mean([(ev.bound(S) - best) / ev.f_max() for S in sets[-100:]])
        assert excess <= 0.05


def test_permutation_equivariance():
    rng = np.random.default_rng(3)
    seq = random_sequence(rng, 5, 6)
    perm = np.array([3, 0, 4, 1, 2])
    inv = np.argsort(perm)

    def relabel(topo):
        # new node perm[i] plays old node i
        return Topology(topo.adjacency[np.ix_(inv, inv)], topo.weights[np.ix_(inv, inv)])

    pseq = EpochSequence(tuple((relabel(tp), d) for tp, d in seq.epochs))
    ev, pev = ErrorEvaluator(seq), ErrorEvaluator(pseq)
    assert pev.bound({int(perm[1]), int(perm[3])}) == pytest.approx(ev.bound({1, 3}), rel=1e-12)
    a = select_k_leaders(ev, 2).leaders
    b = select_k_leaders(pev, 2).leaders
    assert sorted(perm[a]) == sorted(b)


# -- regret -----------------------------------------------------------------------


def test_regret_zero_when_playing_hindsight_best(rng):
    seq = random_sequence(rng, 6, 5)
    ledger = regret_of_run(seq, [(0,)] * 5)
    again = regret_of_run(seq, [ledger.best_fixed_set] * 5)
    assert again.regret == pytest.approx(0.0, abs=1e-15)


def test_regret_nonnegative_exhaustive(rng):
    for _ in range(20):
        n = int(rng.integers(2, 21))
        seq = random_sequence(rng, n, 4, connected=False)
        S = int(rng.integers(n))
        ledger = regret_of_run(seq, [(S,)] * 4)
        assert ledger.exact
        assert ledger.regret >= -1e-15


def test_regret_greedy_fallback_flagged(rng):
    seq = random_sequence(rng, 12, 3)
    ledger = regret_of_run(seq, [(0, 1, 2)] * 3, max_exhaustive=10)
    assert not ledger.exact


def test_regret_length_mismatch(rng):
    with pytest.raises(ValueError):
        regret_of_run(random_sequence(rng, 4, 3), [(0,)])


def test_ledger_recomputable(rng):
    seq = random_sequence(rng, 6, 5)
    sets = run_dynamic_selection(seq, 2, 2.0, rng)
    ledger = regret_of_run(seq, sets)
    copy = RegretLedger(
        np.array(ledger.per_epoch_losses), ledger.best_fixed_set,
        np.array(ledger.best_fixed_losses), ledger.exact, ledger.f_max, list(ledger.chosen_sets),
    )
    assert copy.regret == ledger.regret
    np.testing.assert_array_equal(copy.cumulative_regret, ledger.cumulative_regret)
    assert regret_of_run(seq, sets).regret == ledger.regret
    rows = list(ledger.rows())
    assert rows[-1]["cumulative_regret"] == pytest.approx(ledger.regret * seq.r)
    assert rows[0]["leaders"] == " ".join(str(v + 1) for v in sets[0])


def test_online_guarantee_six_nodes():
    held = 0
    for seed in range(30):
        rng = np.random.default_rng(seed)
        seq = random_sequence(rng, 6, 20)
        sets = run_dynamic_selection(seq, 2, 2.0, rng)
        terms = greedy_guarantee_terms(regret_of_run(seq, sets), 2, 6)
        held += terms["holds"]
    assert held >= 29


# -- adversarial construction ----------------------------------------------------------


def test_single_arm_no_regret(rng):
    st = adversarial_lower_bound_experiment(1, 100, 5, rng)
    assert st.mean_regret == 0.0 and st.lower_bound == 0.0


def test_loss_totals_are_binomial(rng):
    st = adversarial_lower_bound_experiment(20, 400, 200, rng)
    assert (np.abs(st.A_means - 200) <= 3 * st.A_stderr).all()


def test_experts_regret_below_upper_rate(rng):
    st = adversarial_lower_bound_experiment(50, 2000, 20, rng, policy="experts")
    assert 0 < st.mean_regret <= st.upper_bound(2.0)


def test_sigma_shifts_losses(rng):
    st = adversarial_lower_bound_experiment(5, 100, 30, rng, sigma=0.5)
    assert (np.abs(st.A_means - 75) <= 4 * st.A_stderr).all()


def test_callable_policy(rng):
    st = adversarial_lower_bound_experiment(4, 50, 3, rng, policy=lambda past, r: 0)
    assert st.regrets.shape == (3,)
    with pytest.raises(ValueError):
        adversarial_lower_bound_experiment(4, 50, 1, rng, policy="bogus")
