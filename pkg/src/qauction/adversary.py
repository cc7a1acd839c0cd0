"""Corrupt-auctioneer attacks and bidder countermeasures.

Two attacks: probe-and-measure (replace the mixing step with fresh |0..0>
probes and measure the returned bidding states, either qubit-by-qubit or
with a minimum-error POVM) and the spurious payoff table that makes the
search converge to a state revealing both bids. Two defenses: secret
locking operators that bias the bidding states toward |0..0>, and a
colluding joint bidding operator that removes the revealing state.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from itertools import permutations
from typing import Sequence

import numpy as np

from .circuits import build_collusion_circuit, circuit_to_matrix
from .core import (
    ContractViolation,
    StateVector,
    check_povm,
    measurement_probabilities,
)
from .protocol import (
    AdiabaticSchedule,
    BidSpec,
    PayoffTable,
    Trajectory,
    as_bid,
    bidding_operator,
    run_adiabatic,
    run_schedule,
    winning_allocation,
)

TOY_BIDS = ("01", "10", "11")  # the three admissible price states at p=2


@dataclass(frozen=True)
class Povm:
    """Positive operators summing to identity; element i decides state i."""

    elements: tuple[np.ndarray, ...]

    def __post_init__(self):
        object.__setattr__(self, "elements", tuple(check_povm(self.elements)))


@dataclass(frozen=True)
class LockingPair:
    """Secret per-bidder involutions V_i biasing bidding states toward |0..0>.

    alpha_i = (cos(theta_i) + sin(theta_i)) / sqrt(2) is the locked
    amplitude on |0..0>; the amplitude left on the price state is
    (sin(theta_i) - cos(theta_i)) / sqrt(2), whose magnitude is
    sqrt(1 - alpha_i^2).
    """

    theta1: float
    theta2: float
    v1: np.ndarray
    v2: np.ndarray
    alpha1: float
    alpha2: float

    @property
    def operators(self) -> tuple[np.ndarray, np.ndarray]:
        return (self.v1, self.v2)


@dataclass(frozen=True)
class LearningCurve:
    """Probability the auctioneer knows every bid value after N rounds."""

    rounds: np.ndarray          # 1..N
    probabilities: np.ndarray
    mode: str                   # "closed_form" or "monte_carlo"


def locking_operator(bid: BidSpec | str, alpha: float) -> tuple[float, np.ndarray]:
    """Hermitian unitary V with V(|0..0> + |b>)/sqrt(2) = alpha|0..0> + ...

    Built as cos(theta) * Z on the bid's leading set bit plus
    sin(theta) * X on every set bit, with theta = arcsin(alpha) - pi/4.
    The two terms anticommute, so V is both Hermitian and unitary, and V
    preserves each span{|x>, |x XOR b>} plane.
    """
    if not 0 < alpha <= 1:
        raise ContractViolation(f"lock amplitude must lie in (0, 1], got {alpha}")
    bid = as_bid(bid)
    theta = math.asin(alpha) - math.pi / 4
    p, k = bid.n_qubits, bid.index
    dim = 2**p
    lead = min(q for q, ch in enumerate(bid.bits) if ch == "1")
    lead_bit = 1 << (p - 1 - lead)
    v = np.zeros((dim, dim), dtype=complex)
    for x in range(dim):
        v[x, x] = math.cos(theta) * (-1.0 if x & lead_bit else 1.0)
        v[x ^ k, x] += math.sin(theta)
    return theta, v


def locking_operators(alpha1: float, alpha2: float,
                      bids: Sequence[BidSpec | str]) -> LockingPair:
    if len(bids) != 2:
        raise ContractViolation("locking pair covers exactly two bidders")
    t1, v1 = locking_operator(bids[0], alpha1)
    t2, v2 = locking_operator(bids[1], alpha2)
    return LockingPair(theta1=t1, theta2=t2, v1=v1, v2=v2, alpha1=alpha1, alpha2=alpha2)


def locked_bidding_state(bid: BidSpec | str, alpha: float | None) -> StateVector:
    """What the auctioneer receives from a probed bidder: V^dag U|0..0>
    when locked with amplitude alpha, the plain bidding state otherwise."""
    bid = as_bid(bid)
    column = bidding_operator(bid)[:, 0]
    if alpha is None:
        return StateVector(column)
    _, v = locking_operator(bid, alpha)
    return StateVector(v.conj().T @ column)


def _revelation_probability(alpha: float | None) -> float:
    # per-round chance a basis measurement shows the price state;
    # alpha = 1/sqrt(2) when unprotected, so exactly 1/2
    return 0.5 if alpha is None else 1.0 - alpha * alpha


def _mc_rng(seed: int, point: int) -> np.random.Generator:
    # per-point stream so curve points can be evaluated independently
    return np.random.default_rng([seed, point])


def _sample_outcomes(rng, cdf: np.ndarray, trials: int, rounds: int) -> np.ndarray:
    return np.searchsorted(cdf, rng.random((trials, rounds)), side="right")


def basis_mc_point(dists: Sequence[np.ndarray], n: int, trials: int, seed: int) -> float:
    """One Monte Carlo point of the basis-measurement curve: fraction of
    trials where every bidder produced a non-|0..0> outcome within n rounds."""
    rng = _mc_rng(seed, int(n))
    learned_all = np.ones(trials, dtype=bool)
    for dist in dists:
        outcomes = _sample_outcomes(rng, np.cumsum(dist), trials, int(n))
        learned_all &= (outcomes != 0).any(axis=1)
    return float(learned_all.mean())


def povm_mc_point(per_bidder, n: int, trials: int, seed: int) -> float:
    """First-correct-outcome rule: bidder learned once any of n POVM
    outcomes names their true state (matches the closed form exactly)."""
    rng = _mc_rng(seed, 10_000 + int(n))
    learned_all = np.ones(trials, dtype=bool)
    for dist, true_index in per_bidder:
        outcomes = _sample_outcomes(rng, np.cumsum(np.asarray(dist)), trials, int(n))
        learned_all &= (outcomes == true_index).any(axis=1)
    return float(learned_all.mean())


def majority_mc_point(per_bidder, n: int, trials: int, seed: int) -> float:
    """Strict-majority rule over n POVM outcomes; a tie counts as not
    learned, so this is not monotone in n."""
    rng = _mc_rng(seed, 20_000 + int(n))
    learned_all = np.ones(trials, dtype=bool)
    for dist, true_index in per_bidder:
        dist = np.asarray(dist)
        outcomes = _sample_outcomes(rng, np.cumsum(dist), trials, int(n))
        counts = np.stack([(outcomes == c).sum(axis=1) for c in range(dist.size)], axis=1)
        true_count = counts[:, true_index].copy()
        counts[:, true_index] = -1
        learned_all &= true_count > counts.max(axis=1)
    return float(learned_all.mean())


def probe_attack_basis(bids: Sequence[BidSpec | str], n_rounds: int,
                       locking: LockingPair | None = None,
                       mode: str = "closed_form",
                       trials: int = 100_000, seed: int = 0) -> LearningCurve:
    """Learning curve of qubit-by-qubit probe measurements.

    Closed form: prod_i (1 - (1 - rho_i)^N) with per-round revelation
    probability rho_i = 1 - |alpha_i|^2 (1/2 when unprotected). Monte
    Carlo samples computational-basis outcomes of each returned bidding
    state and declares a bidder learned at the first non-|0..0> outcome.
    """
    if n_rounds < 1:
        raise ContractViolation("need at least one probe round")
    alphas = _lock_amplitudes(bids, locking)
    rounds = np.arange(1, n_rounds + 1)
    if mode == "closed_form":
        probs = np.ones(n_rounds)
        for alpha in alphas:
            rho = _revelation_probability(alpha)
            probs *= 1.0 - (1.0 - rho) ** rounds
        return LearningCurve(rounds, probs, "closed_form")
    if mode != "monte_carlo":
        raise ContractViolation(f"unknown mode {mode!r}")
    dists = [locked_bidding_state(b, a).probabilities() for b, a in zip(bids, alphas)]
    probs = np.array([basis_mc_point(dists, int(n), trials, seed) for n in rounds])
    return LearningCurve(rounds, probs, "monte_carlo")


def _lock_amplitudes(bids, locking: LockingPair | None):
    if locking is None:
        return [None] * len(bids)
    if len(bids) != 2:
        raise ContractViolation("locking pair covers exactly two bidders")
    return [locking.alpha1, locking.alpha2]


def helstrom_error(state_a: StateVector, state_b: StateVector,
                   prior_a: float = 0.5) -> float:
    """Minimum two-state discrimination error for pure states."""
    overlap = abs(state_a.overlap(state_b)) ** 2
    prior_b = 1.0 - prior_a
    return 0.5 * (1.0 - math.sqrt(1.0 - 4.0 * prior_a * prior_b * overlap))


def _best_assignment(amps: np.ndarray, priors: np.ndarray):
    """amps[i, j] = <v_j|psi_i|; returns the injective state->outcome map
    maximizing the total correct-decision probability."""
    n_states, dim = amps.shape
    gains = np.abs(amps) ** 2 * priors[:, None]
    best, best_p = None, -1.0
    for perm in permutations(range(dim), n_states):
        p = float(sum(gains[i, perm[i]] for i in range(n_states)))
        if p > best_p:
            best, best_p = perm, p
    return best, best_p


def _fixed_point_polish(elements, psis: np.ndarray, priors: np.ndarray,
                        iters: int = 300, tol: float = 1e-14):
    """Sharpen a near-optimal measurement with the minimum-error fixed-point
    iteration Pi_k <- L^+ R_k Pi_k R_k L^+ (R_k = p_k rho_k, L = sqrt of
    sum_k R_k Pi_k R_k), run inside the span of the states. Monotone in the
    success probability, so started from the greedy optimum it only
    tightens the optimality residuals."""
    dim = psis.shape[1]
    span, _ = np.linalg.qr(psis.T)
    span = span[:, : min(len(psis), dim)]
    rhos = []
    for i in range(len(psis)):
        phi = span.conj().T @ psis[i]
        rhos.append(priors[i] * np.outer(phi, phi.conj()))
    pis = [span.conj().T @ e @ span for e in elements]

    def inv_sqrt(m):
        w, v = np.linalg.eigh((m + m.conj().T) / 2)
        w = np.array([1 / math.sqrt(x) if x > 1e-28 else 0.0 for x in np.clip(w, 0, None)])
        return (v * w) @ v.conj().T

    for _ in range(iters):
        lam_inv = inv_sqrt(sum(r @ p @ r for r, p in zip(rhos, pis)))
        pis = [lam_inv @ r @ p @ r @ lam_inv for r, p in zip(rhos, pis)]
        total_inv = inv_sqrt(sum(pis))  # heal completeness drift on the span
        pis = [total_inv @ p @ total_inv for p in pis]
        gamma = sum(p @ r for r, p in zip(rhos, pis))
        if float(np.max(np.abs(gamma - gamma.conj().T))) < tol:
            break
    return [span @ p @ span.conj().T for p in pis]


def min_error_povm(states: Sequence[StateVector], priors: Sequence[float],
                   restarts: int = 20, seed: int = 0,
                   tol: float = 1e-10) -> tuple[Povm, float]:
    """Minimum-error measurement for discriminating pure states.

    Greedy search over projective measurements: starting from a random
    orthonormal basis, closed-form plane rotations (real and imaginary
    Givens moves between basis vectors) are accepted whenever they lower
    the error, until a full sweep improves by less than `tol`; restarted
    from `restarts` random bases plus the computational basis, then
    sharpened by a fixed-point polish. For linearly independent pure
    states the optimum is projective, so the search space is exhaustive in
    principle. The identity remainder (basis vectors assigned to no state)
    is spread equally over the returned elements so they sum to the
    identity; at an optimum the states carry no weight on it.
    """
    if not states:
        raise ContractViolation("need at least one state")
    priors = np.asarray(priors, dtype=float)
    if priors.size != len(states) or np.any(priors < 0) or abs(priors.sum() - 1.0) > 1e-9:
        raise ContractViolation("priors must be nonnegative and sum to 1")
    dim = len(states[0])
    if any(len(s) != dim for s in states):
        raise ContractViolation("states must share a dimension")
    if len(states) > dim:
        raise ContractViolation("cannot assign more states than outcomes")
    psis = np.array([s.amplitudes for s in states])  # rows

    rng = np.random.default_rng(seed)
    best_basis, best_assign, best_pc = None, None, -1.0
    for start in range(restarts + 1):
        if start == 0:
            basis = np.eye(dim, dtype=complex)
        else:
            z = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
            basis, _ = np.linalg.qr(z)
        amps = psis @ basis.conj()           # amps[i, j] = <v_j|psi_i>
        assign, pc = _best_assignment(amps, priors)
        while True:
            sweep_gain = 0.0
            for j in range(dim):
                for k in range(j + 1, dim):
                    for phase in (1.0, 1j):
                        b_coef = c_coef = 0.0
                        for i in range(len(states)):
                            a, b = amps[i, j], amps[i, k]
                            term_b = priors[i] * (abs(a) ** 2 - abs(b) ** 2) / 2
                            term_c = priors[i] * float(np.real(np.conj(a) * np.conj(phase) * b))
                            if assign[i] == j:
                                b_coef += term_b
                                c_coef += term_c
                            elif assign[i] == k:
                                b_coef -= term_b
                                c_coef -= term_c
                        gain = math.hypot(b_coef, c_coef) - b_coef
                        if gain <= tol / 10:
                            continue
                        theta = math.atan2(c_coef, b_coef) / 2
                        c, s = math.cos(theta), math.sin(theta)
                        vj, vk = basis[:, j].copy(), basis[:, k].copy()
                        basis[:, j] = c * vj + s * phase * vk
                        basis[:, k] = -s * np.conj(phase) * vj + c * vk
                        amps = psis @ basis.conj()
                        assign, new_pc = _best_assignment(amps, priors)
                        sweep_gain += new_pc - pc
                        pc = new_pc
            if sweep_gain < tol:
                break
        if pc > best_pc:
            best_basis, best_assign, best_pc = basis.copy(), assign, pc

    elements = [np.outer(best_basis[:, best_assign[i]], best_basis[:, best_assign[i]].conj())
                for i in range(len(states))]
    elements = _fixed_point_polish(elements, psis, priors)
    remainder = (np.eye(dim) - sum(elements)) / len(states)
    elements = [e + remainder for e in elements]
    povm = Povm(tuple(elements))
    p_correct = sum(float(priors[i] * np.real(np.vdot(psis[i], povm.elements[i] @ psis[i])))
                    for i in range(len(states)))
    return povm, 1.0 - p_correct


def povm_optimality_check(povm: Povm, states: Sequence[StateVector],
                          priors: Sequence[float], tol: float = 1e-8) -> bool:
    """Necessary minimum-error conditions: G = sum_i p_i Pi_i |psi_i><psi_i|
    Hermitian, and G - p_j |psi_j><psi_j| positive semidefinite for all j."""
    priors = np.asarray(priors, dtype=float)
    if len(povm.elements) < len(states):
        raise ContractViolation("need at least one POVM element per state")
    dim = len(states[0])
    gamma = np.zeros((dim, dim), dtype=complex)
    projectors = []
    for i, state in enumerate(states):
        rho = np.outer(state.amplitudes, state.amplitudes.conj())
        projectors.append(priors[i] * rho)
        gamma += priors[i] * (povm.elements[i] @ rho)
    if float(np.max(np.abs(gamma - gamma.conj().T))) > tol:
        return False
    gamma = (gamma + gamma.conj().T) / 2
    for pj_rho in projectors:
        if float(np.min(np.linalg.eigvalsh(gamma - pj_rho))) < -tol:
            return False
    return True


def toy_bidding_states(alpha: float | None = None) -> list[StateVector]:
    """The three candidate states an auctioneer must tell apart per bidder,
    optionally all locked at the same amplitude."""
    return [locked_bidding_state(b, alpha) for b in TOY_BIDS]


def probe_attack_povm(bids: Sequence[BidSpec | str], n_rounds: int,
                      p_e: float) -> LearningCurve:
    """Closed-form joint learning curve (1 - p_e^N)^m of the optimal-POVM
    probe attack, taking the solved single-round error as input."""
    if not 0 <= p_e < 1:
        raise ContractViolation("error probability must lie in [0, 1)")
    if n_rounds < 1:
        raise ContractViolation("need at least one probe round")
    rounds = np.arange(1, n_rounds + 1)
    probs = (1.0 - p_e**rounds.astype(float)) ** len(list(bids))
    return LearningCurve(rounds, probs, "closed_form")


def _povm_outcome_distributions(bids, locking: LockingPair | None,
                                restarts: int, seed: int):
    """Per bidder: (outcome distribution of their true state, true index, p_e)."""
    alphas = _lock_amplitudes(bids, locking)
    cache: dict[float | None, tuple[Povm, float]] = {}
    out = []
    for bid, alpha in zip(bids, alphas):
        if alpha not in cache:
            cands = toy_bidding_states(alpha)
            cache[alpha] = min_error_povm(cands, [1 / 3] * 3, restarts=restarts, seed=seed)
        povm, p_e = cache[alpha]
        true_index = TOY_BIDS.index(as_bid(bid).bits)
        dist = measurement_probabilities(locked_bidding_state(bid, alpha), povm.elements)
        out.append((dist, true_index, p_e))
    return out


def povm_attack_monte_carlo(bids: Sequence[BidSpec | str], n_rounds: int,
                            locking: LockingPair | None = None,
                            trials: int = 100_000, seed: int = 0,
                            restarts: int = 20) -> LearningCurve:
    """Monte Carlo counterpart of the (1 - p_e^N)^m model: a bidder counts
    as learned once any round's POVM outcome names their true state."""
    per = [(dist, t) for dist, t, _ in _povm_outcome_distributions(bids, locking, restarts, seed)]
    rounds = np.arange(1, n_rounds + 1)
    probs = np.array([povm_mc_point(per, int(n), trials, seed) for n in rounds])
    return LearningCurve(rounds, probs, "monte_carlo")


def povm_attack_majority_vote(bids: Sequence[BidSpec | str], n_rounds: int,
                              locking: LockingPair | None = None,
                              trials: int = 100_000, seed: int = 0,
                              restarts: int = 20) -> np.ndarray:
    """Alternative decision rule, reported separately from the learning
    curves: after N rounds the auctioneer picks each bidder's strict
    majority outcome (a tie counts as not learned). Not monotone in N."""
    per = [(dist, t) for dist, t, _ in _povm_outcome_distributions(bids, locking, restarts, seed)]
    return np.array([majority_mc_point(per, n, trials, seed) for n in range(1, n_rounds + 1)])


def spurious_table() -> PayoffTable:
    """Corrupt payoff metric F = b1 + b2 over both two-qubit registers; the
    double-nonzero (revealing) states get the top payoffs."""
    values = np.array([float((x >> 2) + (x & 3)) for x in range(16)])
    return PayoffTable(4, values)


def revealing_index(bids: Sequence[BidSpec | str]) -> int:
    """Basis index with every bidder's register at their price state."""
    x = 0
    for b in bids:
        b = as_bid(b)
        x = (x << b.n_qubits) | b.index
    return x


def run_spurious_attack(bids: Sequence[BidSpec | str],
                        schedule: AdiabaticSchedule) -> Trajectory:
    """Honest bidders, corrupt table: the search targets the revealing state
    (it holds the top payoff among plausible allocations by construction)."""
    traj = run_adiabatic(bids, spurious_table(), schedule)
    assert traj.winner_index == revealing_index(bids)
    return traj


def run_locked_auction(bids: Sequence[BidSpec | str], table: PayoffTable,
                       schedule: AdiabaticSchedule, locking: LockingPair) -> Trajectory:
    """Search with the payoff phases conjugated by the secret V = V1 x V2.

    A "zeroth" schedule is promoted to the "locked" iteration; "exact"
    keeps exact stepping with the conjugated final Hamiltonian.
    """
    variant = schedule.variant
    if variant == "zeroth":
        variant = "locked"
    if variant not in ("locked", "exact"):
        raise ContractViolation("locked runs support the 'locked' and 'exact' variants only")
    locked_schedule = dataclasses.replace(schedule, variant=variant, locking=locking.operators)
    return run_adiabatic(bids, table, locked_schedule)


def run_collusion_defense(bids: Sequence[BidSpec | str], table: PayoffTable,
                          schedule: AdiabaticSchedule) -> Trajectory:
    """Search where the colluding joint operator replaces U1 x U2 in every
    iteration. The initial superposition keeps only {|0000>, |00 b2>,
    |b1 00>}; success is measured against the best-payoff state of those
    three and leakage against their span."""
    if len(list(bids)) != 2:
        raise ContractViolation("collusion defense covers exactly two bidders")
    if schedule.locking is not None:
        raise ContractViolation("collusion and locking defenses do not compose")
    bid1, bid2 = (as_bid(b) for b in bids)
    joint = circuit_to_matrix(build_collusion_circuit(bid1, bid2))
    p = bid1.n_qubits
    plausible = sorted({0, bid2.index, bid1.index << p})
    winner = winning_allocation(table, plausible)
    return run_schedule(joint, plausible, winner, table, schedule)
