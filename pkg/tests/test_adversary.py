import itertools
import math

import numpy as np
import pytest

from qauction.adversary import (
    LockingPair,
    Povm,
    helstrom_error,
    locked_bidding_state,
    locking_operator,
    locking_operators,
    min_error_povm,
    povm_attack_majority_vote,
    povm_attack_monte_carlo,
    povm_optimality_check,
    probe_attack_basis,
    probe_attack_povm,
    revealing_index,
    run_collusion_defense,
    run_locked_auction,
    run_spurious_attack,
    spurious_table,
    toy_bidding_states,
)
from qauction.core import ContractViolation, computational_povm, is_hermitian, is_unitary
from qauction.protocol import (
    AdiabaticSchedule,
    AuctionConfig,
    build_first_price_table,
    default_schedule,
    eigenvalue_tracks,
    payoff,
    run_adiabatic,
)

# A corrupt table paying the sum of both registers' dollar values rewards
# states that expose both bids at once.
SPURIOUS_PAYOFFS = [0, 1, 2, 3, 1, 2, 3, 4, 2, 3, 4, 5, 3, 4, 5, 6]

TOY_TABLE = build_first_price_table(AuctionConfig(m=2, p=2))
PRIORS = [1 / 3] * 3


def bits_of(value):
    return {1: "01", 2: "10", 3: "11"}[value]


class TestSpuriousTable:
    def test_all_rows(self):
        assert list(spurious_table().values) == SPURIOUS_PAYOFFS

    def test_spot_values(self):
        table = spurious_table()
        assert payoff(table, 0b1011) == 5
        assert payoff(table, 0b0000) == 0
        assert payoff(table, 0b1111) == 6

    def test_problem_hamiltonian_diagonal(self):
        from qauction.protocol import problem_hamiltonian
        diag = np.diag(problem_hamiltonian(spurious_table())).real
        np.testing.assert_array_equal(diag, [-v for v in SPURIOUS_PAYOFFS])

    def test_revealing_index(self):
        assert revealing_index(["10", "11"]) == 0b1011


class TestLockingOperators:
    @pytest.mark.parametrize("bits", ["01", "10", "11"])
    @pytest.mark.parametrize("alpha", [0.6, 0.7, 0.9, 1 / math.sqrt(2), 1.0])
    def test_defining_action(self, bits, alpha):
        theta, v = locking_operator(bits, alpha)
        assert is_hermitian(v, 1e-12)
        assert is_unitary(v, 1e-10)
        locked = locked_bidding_state(bits, alpha)
        # amplitude alpha stays on |00>, the rest on the price state
        assert abs(locked.amplitudes[0]) == pytest.approx(alpha, abs=1e-12)
        assert abs(locked.amplitudes[int(bits, 2)]) == pytest.approx(
            math.sqrt(1 - alpha**2), abs=1e-12)
        others = [abs(a) for i, a in enumerate(locked.amplitudes)
                  if i not in (0, int(bits, 2))]
        assert max(others, default=0.0) <= 1e-12

    def test_full_lock(self):
        theta, _ = locking_operator("10", 1.0)
        assert theta == pytest.approx(math.pi / 4, abs=1e-12)
        locked = locked_bidding_state("10", 1.0)
        assert abs(locked.amplitudes[0]) == pytest.approx(1.0, abs=1e-12)

    def test_neutral_lock_flips_sign(self):
        locked = locked_bidding_state("10", 1 / math.sqrt(2))
        assert locked.amplitudes[0].real == pytest.approx(1 / math.sqrt(2), abs=1e-12)
        assert locked.amplitudes[2].real == pytest.approx(-1 / math.sqrt(2), abs=1e-12)

    def test_spot_angle(self):
        theta, _ = locking_operator("11", 0.9)
        assert theta == pytest.approx(math.asin(0.9) - math.pi / 4, abs=1e-12)
        assert theta == pytest.approx(0.3344, abs=5e-5)

    def test_pair_invariants(self):
        pair = locking_operators(0.9, 0.7, ["11", "10"])
        assert isinstance(pair, LockingPair)
        for theta, alpha in ((pair.theta1, pair.alpha1), (pair.theta2, pair.alpha2)):
            assert (math.cos(theta) + math.sin(theta)) / math.sqrt(2) == pytest.approx(alpha, abs=1e-12)

    def test_alpha_range(self):
        with pytest.raises(ContractViolation):
            locking_operator("10", 0.0)
        with pytest.raises(ContractViolation):
            locking_operator("10", 1.2)


class TestBasisLearningCurve:
    def test_unprotected_closed_form(self):
        curve = probe_attack_basis(["10", "11"], 8)
        expected = (1 - 0.5 ** np.arange(1, 9)) ** 2
        np.testing.assert_allclose(curve.probabilities, expected, rtol=1e-15)
        assert curve.probabilities[0] == 0.25
        assert curve.probabilities[3] == 225 / 256

    def test_locked_closed_form(self):
        pair = locking_operators(0.9, 0.7, ["11", "10"])
        curve = probe_attack_basis(["11", "10"], 4, locking=pair)
        assert curve.probabilities[0] == pytest.approx((1 - 0.81) * (1 - 0.49), abs=1e-12)

    def test_monte_carlo_within_3_sigma(self):
        trials = 100_000
        closed = probe_attack_basis(["10", "11"], 6)
        mc = probe_attack_basis(["10", "11"], 6, mode="monte_carlo", trials=trials, seed=0)
        for p_hat, p in zip(mc.probabilities, closed.probabilities):
            sigma = math.sqrt(p * (1 - p) / trials)
            assert abs(p_hat - p) <= 3 * sigma + 1e-12

    def test_locked_strictly_slower_when_alpha_strong(self):
        for a1, a2 in ((0.8, 0.75), (0.9, 0.9), (0.95, 0.8)):
            pair = locking_operators(a1, a2, ["11", "10"])
            locked = probe_attack_basis(["11", "10"], 20, locking=pair).probabilities
            plain = probe_attack_basis(["11", "10"], 20).probabilities
            assert np.all(locked < plain)

    def test_curve_shape_invariants(self):
        for curve in (probe_attack_basis(["10", "11"], 20),
                      probe_attack_basis(["10", "11"], 10, mode="monte_carlo", trials=5000)):
            assert np.all(np.diff(curve.probabilities) >= -1e-12)
            assert np.all((curve.probabilities >= 0) & (curve.probabilities <= 1))


@pytest.fixture(scope="module")
def toy_povm():
    states = toy_bidding_states()
    povm, p_e = min_error_povm(states, PRIORS)
    return states, povm, p_e


class TestMinErrorPovm:
    def test_toy_error_probability(self, toy_povm):
        _, _, p_e = toy_povm
        assert p_e == pytest.approx(0.1112, abs=1e-3)
        assert p_e == pytest.approx(1 / 9, abs=1e-9)

    def test_optimality_conditions(self, toy_povm):
        states, povm, _ = toy_povm
        assert povm_optimality_check(povm, states, PRIORS)

    def test_povm_well_formed(self, toy_povm):
        _, povm, _ = toy_povm
        total = sum(povm.elements)
        assert np.max(np.abs(total - np.eye(4))) <= 1e-9
        for element in povm.elements:
            assert np.min(np.linalg.eigvalsh((element + element.conj().T) / 2)) >= -1e-9

    def test_orthogonal_states(self):
        from qauction.core import StateVector
        _, p_e = min_error_povm([StateVector([1, 0]), StateVector([0, 1])], [0.5, 0.5])
        assert p_e <= 1e-12

    def test_every_pair_matches_helstrom(self):
        states = toy_bidding_states()
        for i, j in itertools.combinations(range(3), 2):
            _, p_e = min_error_povm([states[i], states[j]], [0.5, 0.5], restarts=10)
            expected = helstrom_error(states[i], states[j])
            assert p_e == pytest.approx(expected, abs=1e-6)
            assert expected == pytest.approx((1 - math.sqrt(3) / 2) / 2, abs=1e-12)

    def test_locked_sets_match_symmetric_closed_form(self):
        # independent oracle: square-root measurement of three symmetric
        # pure states with pairwise overlap c is optimal
        for alpha in (0.7, 0.9):
            states = toy_bidding_states(alpha)
            _, p_e = min_error_povm(states, PRIORS, restarts=10)
            c = alpha**2
            srm = 1 - ((math.sqrt(1 + 2 * c) + 2 * math.sqrt(1 - c)) / 3) ** 2
            assert p_e == pytest.approx(srm, abs=1e-9)

    def test_beats_random_projective_grid(self, toy_povm):
        # sanity floor: no projective basis from a large random grid does better
        states, _, p_e = toy_povm
        psis = np.array([s.amplitudes for s in states])
        rng = np.random.default_rng(123)
        z = rng.normal(size=(10_000, 4, 4)) + 1j * rng.normal(size=(10_000, 4, 4))
        bases, _ = np.linalg.qr(z)
        gains = np.abs(np.einsum("id,bdj->bij", psis.conj(), bases)) ** 2 / 3
        best = 0.0
        for perm in itertools.permutations(range(4), 3):
            pc = gains[:, range(3), perm].sum(axis=1)
            best = max(best, float(pc.max()))
        assert p_e <= (1 - best) + 1e-9

    def test_priors_validated(self):
        with pytest.raises(ContractViolation):
            min_error_povm(toy_bidding_states(), [0.5, 0.5, 0.5])


class TestOptimalityCheck:
    def test_computational_basis_suboptimal(self):
        povm = Povm(tuple(computational_povm(2)))
        assert not povm_optimality_check(povm, toy_bidding_states(), PRIORS)

    def test_single_state_trivial(self):
        from qauction.core import StateVector
        povm = Povm((np.eye(2, dtype=complex),))
        assert povm_optimality_check(povm, [StateVector([1, 0])], [1.0])


class TestPovmLearningCurves:
    def test_closed_form_values(self):
        curve = probe_attack_povm(["10", "11"], 4, 0.1112)
        assert curve.probabilities[0] == pytest.approx((1 - 0.1112) ** 2, abs=1e-12)
        assert curve.probabilities[3] > 0.999

    def test_zero_error(self):
        curve = probe_attack_povm(["10", "11"], 5, 0.0)
        np.testing.assert_array_equal(curve.probabilities, np.ones(5))

    def test_monte_carlo_matches_closed_form(self, toy_povm):
        _, _, p_e = toy_povm
        trials = 100_000
        closed = probe_attack_povm(["10", "11"], 5, p_e).probabilities
        mc = povm_attack_monte_carlo(["10", "11"], 5, trials=trials, seed=1).probabilities
        for p_hat, p in zip(mc, closed):
            sigma = math.sqrt(p * (1 - p) / trials)
            assert abs(p_hat - p) <= 3 * sigma + 1e-12

    def test_majority_vote_first_round(self, toy_povm):
        _, _, p_e = toy_povm
        trials = 20_000
        probs = povm_attack_majority_vote(["10", "11"], 2, trials=trials, seed=2)
        p1 = (1 - p_e) ** 2
        assert abs(probs[0] - p1) <= 3 * math.sqrt(p1 * (1 - p1) / trials)
        # even rounds can tie, so the majority rule is not monotone
        assert probs[1] < probs[0]

    def test_invalid_error_probability(self):
        with pytest.raises(ContractViolation):
            probe_attack_povm(["10", "11"], 3, 1.0)


class TestLockedAuction:
    def test_neutral_lock_equals_unlocked_zeroth(self):
        pair = locking_operators(1 / math.sqrt(2), 1 / math.sqrt(2), ["10", "11"])
        locked = run_locked_auction(["10", "11"], TOY_TABLE, default_schedule(), pair)
        plain = run_adiabatic(["10", "11"], TOY_TABLE, default_schedule())
        assert abs(locked.success[-1] - plain.success[-1]) <= 1e-6

    def test_leakage_stays_in_subspace(self):
        pair = locking_operators(0.9, 0.7, ["11", "10"])
        traj = run_locked_auction(["11", "10"], TOY_TABLE, default_schedule(), pair)
        assert traj.leakage.max() <= 1e-9

    def test_strong_lock_winner_exact_variant(self):
        # exact stepping at the short schedule already resolves the winner
        pair = locking_operators(0.9, 0.7, ["11", "10"])
        traj = run_locked_auction(["11", "10"], TOY_TABLE, default_schedule("exact"), pair)
        final = traj.final_state.probabilities()
        assert int(np.argmax(final)) == 0b1100

    def test_winner_never_changes_on_alpha_grid(self):
        # the locked interpolation roughly halves g_min, so run the locked
        # iteration on a longer schedule before asserting the argmax
        schedule = AdiabaticSchedule(steps=60, delta=1.0, variant="locked")
        alphas = (0.6, 0.7, 0.8, 0.9)
        for v1, v2 in itertools.permutations((1, 2, 3), 2):
            bids = [bits_of(v1), bits_of(v2)]
            honest = run_adiabatic(bids, TOY_TABLE, default_schedule())
            expected = int(np.argmax(honest.final_state.probabilities()))
            assert expected == honest.winner_index
            for a1, a2 in itertools.product(alphas, repeat=2):
                pair = locking_operators(a1, a2, bids)
                locked = run_locked_auction(bids, TOY_TABLE, schedule, pair)
                got = int(np.argmax(locked.final_state.probabilities()))
                assert got == expected, (v1, v2, a1, a2)

    def test_locked_gap_shrinks(self):
        pair = locking_operators(0.9, 0.7, ["11", "10"])
        locked_schedule = AdiabaticSchedule(20, 1.5, "locked", locking=pair.operators)
        locked = eigenvalue_tracks(["11", "10"], TOY_TABLE, locked_schedule)
        honest = eigenvalue_tracks(["11", "10"], TOY_TABLE, default_schedule())
        assert 0 < locked.g_min < honest.g_min

    def test_first_variant_rejected(self):
        pair = locking_operators(0.9, 0.7, ["11", "10"])
        with pytest.raises(ContractViolation):
            run_locked_auction(["11", "10"], TOY_TABLE, default_schedule("first"), pair)


class TestSpuriousAttack:
    def test_converges_to_revealing_state(self):
        traj = run_spurious_attack(["10", "11"], default_schedule())
        assert traj.winner_index == 0b1011
        assert traj.success[0] == pytest.approx(0.25, abs=1e-12)
        assert traj.success[-1] >= 0.9

    def test_restricted_gap_positive(self):
        tracks = eigenvalue_tracks(["10", "11"], spurious_table(), default_schedule())
        assert tracks.g_min > 0
        np.testing.assert_allclose(tracks.eigenvalues[-1], [-5, -3, -2, 0], atol=1e-9)


class TestCollusionDefense:
    def test_initial_populations(self):
        traj = run_collusion_defense(["10", "11"], spurious_table(), default_schedule())
        probs = traj.steps[0].state.probabilities()
        for idx in (0b0000, 0b0011, 0b1000):
            assert probs[idx] == pytest.approx(1 / 3, abs=1e-12)
        assert traj.winner_index == 0b0011

    def test_revealing_state_never_populated(self):
        traj = run_collusion_defense(["10", "11"], spurious_table(), default_schedule())
        worst = max(abs(st.state.amplitudes[0b1011]) for st in traj.steps)
        assert worst <= 1e-9

    def test_against_honest_table_winner_stands(self):
        traj = run_collusion_defense(["10", "11"], TOY_TABLE, default_schedule())
        final = traj.final_state.probabilities()
        assert int(np.argmax(final)) == 0b0011

    def test_rejects_three_bidders(self):
        with pytest.raises(ContractViolation):
            run_collusion_defense(["10", "11", "01"], TOY_TABLE, default_schedule())


class TestPovmSolverOnRandomEnsembles:
    """The solver must satisfy the necessary optimality conditions and beat
    the square-root measurement (an upper bound on the minimum error) on
    arbitrary pure-state ensembles, not just the shipped scenarios."""

    @staticmethod
    def _random_states(rng, dim, count):
        from qauction.core import StateVector
        out = []
        for _ in range(count):
            v = rng.normal(size=dim) + 1j * rng.normal(size=dim)
            out.append(StateVector(v / np.linalg.norm(v)))
        return out

    @staticmethod
    def _srm_error(states, priors):
        # square-root measurement: Pi_i = rho^{-1/2} p_i |psi_i><psi_i| rho^{-1/2}
        dim = len(states[0])
        rho = np.zeros((dim, dim), dtype=complex)
        for p, s in zip(priors, states):
            rho += p * np.outer(s.amplitudes, s.amplitudes.conj())
        w, v = np.linalg.eigh(rho)
        inv_sqrt = np.array([1 / math.sqrt(x) if x > 1e-14 else 0.0 for x in w])
        root = (v * inv_sqrt) @ v.conj().T
        p_c = sum(p**2 * abs(np.vdot(s.amplitudes, root @ s.amplitudes)) ** 2
                  for p, s in zip(priors, states))
        return 1.0 - p_c

    @pytest.mark.parametrize("seed", [3, 5, 8])
    def test_three_random_states(self, seed):
        rng = np.random.default_rng(seed)
        states = self._random_states(rng, 4, 3)
        priors = rng.uniform(0.2, 1.0, size=3)
        priors = list(priors / priors.sum())
        povm, p_e = min_error_povm(states, priors, restarts=10, seed=seed)
        assert povm_optimality_check(povm, states, priors)
        assert p_e <= self._srm_error(states, priors) + 1e-9

    @pytest.mark.parametrize("seed", [11, 13])
    def test_two_random_states_match_helstrom(self, seed):
        rng = np.random.default_rng(seed)
        states = self._random_states(rng, 4, 2)
        _, p_e = min_error_povm(states, [0.5, 0.5], restarts=10, seed=seed)
        assert p_e == pytest.approx(helstrom_error(states[0], states[1]), abs=1e-9)
