"""Prover implementations behind one rewindable interface.

The ideal prover simulates the honest quantum device exactly: the
post-round-1 state is supported on just two basis strings, so it is
represented as the pair plus a relative sign.  The trapdoor is used
internally to materialize the partner branch -- the simulator is playing
the physics, not the prover's knowledge; a real device gets the partner
from the superposition.

The cheater is the optimal classical strategy: commit to one preimage,
answer the preimage challenge perfectly, and in round 3 pretend the qubit
is |r.x0>.  The noisy prover runs an actual gate list on both branches
with Pauli errors and adapts its measurement angle if told to.

Rewinding: reset() restores the exact post-round-1 state, and all
post-reset randomness is a deterministic function of the messages received
since (keyed by a per-iteration snapshot), which is the classical-prover
rewind model the extractor relies on.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from . import circuits, tcf
from .protocol import (COS2_PI_8, ProtocolContext, QubitState, born_probability,
                       compute_qubit_state, expected_bit, parity)
from .seeds import derive_rng, derive_seed


class CollapsedState(RuntimeError):
    """Round-2 measurement requested on an already collapsed register."""


class DegenerateModel(ValueError):
    """Angle adaptation is undefined at or below f_par = 1/2."""


# ---------------------------------------------------------------------------
# state and noise models

@dataclass
class TwoBranchState:
    """(|x0> + rel_phase |x1>) |y>, or a single collapsed branch."""

    x0: int
    x1: int
    rel_phase: int
    y: int
    width: int
    collapsed: int | None = None  # branch index if the superposition is gone

    @property
    def merged(self) -> bool:
        return self.collapsed is not None or self.x0 == self.x1


@dataclass(frozen=True)
class NoiseModel:
    """Per-gate Pauli noise calibrated so a clean run of the reference
    circuit has overall fidelity `circuit_fidelity`."""

    circuit_fidelity: float
    n_gates: int

    def __post_init__(self):
        if not 0.0 < self.circuit_fidelity <= 1.0:
            raise tcf.DomainError("circuit fidelity must be in (0, 1]")
        if self.n_gates < 1:
            raise tcf.DomainError("reference gate count must be positive")

    @property
    def per_gate_fidelity(self) -> float:
        return self.circuit_fidelity ** (1.0 / self.n_gates)

    @property
    def error_prob(self) -> float:
        return 1.0 - self.per_gate_fidelity


@dataclass(frozen=True)
class AngleModel:
    """Correct-state rates for computational (f_par) and diagonal (f_perp)
    rounds, and the round-3 measurement half-angle theta."""

    f_par: float
    f_perp: float
    theta: float

    def __post_init__(self):
        if not (0.0 <= self.f_par <= 1.0 and 0.0 <= self.f_perp <= 1.0):
            raise tcf.DomainError("state rates must lie in [0, 1]")
        if not -math.pi / 2 < self.theta < math.pi / 2:
            raise tcf.DomainError("theta must lie in (-pi/2, pi/2)")


def pm_of_theta(model: AngleModel) -> float:
    """Round-3 success rate when measuring at +/- theta instead of +/- pi/4."""
    t2 = model.theta / 2.0
    return 0.5 * (
        math.cos(t2) ** 2 * model.f_par
        + math.cos(t2 - math.pi / 4) ** 2 * model.f_perp
        + math.sin(t2) ** 2 * (1.0 - model.f_par)
        + math.sin(t2 - math.pi / 4) ** 2 * (1.0 - model.f_perp)
    )


def optimal_theta(f_par: float, f_perp: float) -> float:
    """Angle maximizing pm_of_theta: atan((2 f_perp - 1)/(2 f_par - 1))."""
    if f_par <= 0.5:
        raise DegenerateModel("optimal angle undefined for f_par <= 1/2")
    return math.atan((2.0 * f_perp - 1.0) / (2.0 * f_par - 1.0))


# ---------------------------------------------------------------------------
# functional core of the honest simulation

def sample_claw(keys, rng):
    """Uniform x0 over the domain, partner via trapdoor inversion; resamples
    until the image has a genuine colliding pair."""
    if isinstance(keys, tcf.RabinKeyPair):
        bound = tcf.rabin_domain_size(keys.N)
        while True:
            x0 = rng.randrange(bound)
            y = tcf.rabin_eval(keys.N, x0)
            roots = tcf.rabin_invert(keys, y)
            if len(roots) == 2:
                x1 = next(iter(roots - {x0}))
                return x0, x1, y
    else:
        while True:
            b = rng.randrange(2)
            vec = tuple(rng.randrange(keys.m) for _ in range(keys.k))
            y = tcf.ddh_eval(keys, b, vec)
            pre = tcf.invert(keys, y)
            if len(pre) == 2:
                x0 = (b, vec)
                x1 = next(iter(pre - {x0}))
                return x0, x1, y


def ideal_round1(keys, rng, ctx: ProtocolContext | None = None):
    """Honest round 1: collapse onto a claw superposition with +1 phase."""
    ctx = ctx or ProtocolContext.plain(keys)
    x0, x1, y = sample_claw(keys, rng)
    state = TwoBranchState(
        x0=ctx.encode_domain(x0), x1=ctx.encode_domain(x1),
        rel_phase=1, y=y, width=ctx.reg_width,
    )
    return y, state


def ideal_round2(state: TwoBranchState, r: int, rng) -> int:
    """Hadamard-basis measurement string d of the input register.

    If r.x0 != r.x1 every d is equally likely.  Otherwise the branches
    interfere and d is uniform over the affine class
    {d : d.(x0 xor x1) = rel_phase_bit}.
    """
    if state.merged:
        raise CollapsedState("input register already collapsed")
    d = rng.getrandbits(state.width)
    if parity(r & state.x0) == parity(r & state.x1):
        want = 0 if state.rel_phase == 1 else 1
        diff = state.x0 ^ state.x1
        if parity(d & diff) != want:
            # flip d at the lowest set bit of the branch difference
            d ^= diff & -diff
    return d


def ideal_round3(state: TwoBranchState, r: int, d: int, basis_sign: int, rng,
                 theta: float = math.pi / 4) -> int:
    """Sample the round-3 outcome with exact Born probabilities at the
    (possibly adapted) angle basis_sign * theta."""
    if state.merged:
        branch = state.x0 if (state.collapsed in (None, 0)) else state.x1
        qubit = QubitState.ZERO if parity(r & branch) == 0 else QubitState.ONE
    else:
        pbit = 0 if state.rel_phase == 1 else 1
        qubit = compute_qubit_state(state.x0, state.x1, r, d, rel_phase_bit=pbit)
    p0 = born_probability(qubit, basis_sign * theta, 0)
    return 0 if rng.random() < p0 else 1


# ---------------------------------------------------------------------------
# the rewindable interface

class ProverBase:
    """Session state machine: round1, then (answer_preimage | round2+round3),
    with reset() rewinding to the post-round-1 point deterministically."""

    def __init__(self, seed: int):
        self._seed = seed
        self._iteration = -1
        self._snapshot = None
        self._r = None
        self._d = None

    # -- deterministic per-message randomness since the snapshot
    def _rng(self, *labels):
        return derive_rng(self._snapshot, *labels)

    def round1(self):
        self._iteration += 1
        self._snapshot = derive_seed(self._seed, "iter", self._iteration)
        self._r = None
        self._d = None
        return self._round1_impl()

    def reset(self):
        """Rewind to the post-round-1 state (same snapshot, rounds cleared)."""
        if self._snapshot is None:
            raise RuntimeError("reset before the first round")
        self._r = None
        self._d = None

    def round2(self, r: int) -> int:
        self._r = r
        self._d = self._round2_impl(r)
        return self._d

    def round3(self, basis_sign: int) -> int:
        if self._r is None:
            raise RuntimeError("round3 before round2")
        return self._round3_impl(self._r, self._d, basis_sign)

    def _round1_impl(self):
        raise NotImplementedError

    def answer_preimage(self) -> int:
        raise NotImplementedError

    def _round2_impl(self, r):
        raise NotImplementedError

    def _round3_impl(self, r, d, basis_sign):
        raise NotImplementedError


class IdealProver(ProverBase):
    """Noise-free two-branch simulation of the honest quantum prover."""

    def __init__(self, keys, seed: int, ctx: ProtocolContext | None = None):
        super().__init__(seed)
        if not keys.has_trapdoor:
            raise tcf.DomainError("the simulated prover materializes the claw "
                                  "with the trapdoor; pass the full key")
        self.keys = keys
        self.ctx = ctx or ProtocolContext.plain(keys)
        self.state = None

    def _round1_impl(self):
        y, self.state = ideal_round1(self.keys, self._rng("round1"), self.ctx)
        return y, 0, 0

    def answer_preimage(self) -> int:
        pick = self._rng("preimage").randrange(2)
        return self.state.x0 if pick == 0 else self.state.x1

    def _round2_impl(self, r):
        return ideal_round2(self.state, r, self._rng("d", r))

    def _round3_impl(self, r, d, basis_sign):
        return ideal_round3(self.state, r, d, basis_sign,
                            self._rng("m", r, basis_sign))


class CheaterProver(ProverBase):
    """Optimal classical strategy: p_x = 1, p_m = 3/4, score 0.

    Knows only the public key.  Commits to x0, returns it on request, and
    answers round 3 as if the qubit were |r.x0>.
    """

    def __init__(self, public_keys, seed: int, ctx: ProtocolContext | None = None):
        super().__init__(seed)
        self.keys = public_keys
        self.ctx = ctx or ProtocolContext.plain(public_keys)
        self._x0 = None
        self._x0_wire = None

    def _round1_impl(self):
        rng = self._rng("round1")
        if isinstance(self.keys, tcf.RabinKeyPair):
            self._x0 = rng.randrange(tcf.rabin_domain_size(self.keys.N))
            y = tcf.rabin_eval(self.keys.N, self._x0)
        else:
            self._x0 = (rng.randrange(2), tuple(rng.randrange(self.keys.m)
                                                for _ in range(self.keys.k)))
            y = tcf.evaluate(self.keys, self._x0)
        self._x0_wire = self.ctx.encode_domain(self._x0)
        return y, 0, 0

    def answer_preimage(self):
        return self._x0_wire

    def _round2_impl(self, r):
        return self._rng("d", r).getrandbits(self.ctx.reg_width)

    def _round3_impl(self, r, d, basis_sign):
        assumed = QubitState.ZERO if parity(r & self._x0_wire) == 0 else QubitState.ONE
        return expected_bit(assumed, basis_sign)


def cheater_strategy(public_keys, seed: int) -> CheaterProver:
    return CheaterProver(public_keys, seed)


class PhaseNoisyProver(ProverBase):
    """Correct branch strings, correct phase only with probability 1/2 + delta;
    measures round 3 at +/- theta (the sign follows the requested basis)."""

    def __init__(self, keys, seed: int, delta: float, theta: float = math.pi / 4):
        super().__init__(seed)
        self.keys = keys
        self.ctx = ProtocolContext.plain(keys)
        self.delta = delta
        self.theta = theta
        self.state = None

    def _round1_impl(self):
        rng = self._rng("round1")
        y, self.state = ideal_round1(self.keys, rng, self.ctx)
        if rng.random() >= 0.5 + self.delta:
            self.state.rel_phase = -1
        return y, 0, 0

    def answer_preimage(self):
        pick = self._rng("preimage").randrange(2)
        return self.state.x0 if pick == 0 else self.state.x1

    def _round2_impl(self, r):
        return ideal_round2(self.state, r, self._rng("d", r))

    def _round3_impl(self, r, d, basis_sign):
        return ideal_round3(self.state, r, d, basis_sign,
                            self._rng("m", r, basis_sign), theta=self.theta)


def noisy_round1(keys, circuit, noise: NoiseModel, rng, ctx: ProtocolContext | None = None):
    """Round 1 through an actual gate list with Pauli errors.

    Both branch bitstrings share one error realization.  If the branches'
    output registers disagree, the y measurement collapses the state to one
    branch chosen uniformly.  Returns (y, state, records) where records
    carries the per-discard Hadamard outcomes.
    """
    ctx = ctx or ProtocolContext.for_circuit(keys, circuit)
    x0, x1, _ = sample_claw(keys, rng)
    run = circuits.run_two_branch(circuit, x0, x1, noise.error_prob, rng)
    if run.y0 != run.y1:
        pick = rng.randrange(2)
        y = (run.y0, run.y1)[pick]
        state = TwoBranchState(x0=run.reg0, x1=run.reg1, rel_phase=run.rel_phase,
                               y=y, width=ctx.reg_width, collapsed=pick)
    else:
        y = run.y0
        state = TwoBranchState(x0=run.reg0, x1=run.reg1, rel_phase=run.rel_phase,
                               y=y, width=ctx.reg_width,
                               collapsed=None if run.reg0 != run.reg1 else 0)
    return y, state, run.records


class NoisyCircuitProver(ProverBase):
    """Circuit-level prover with per-gate Pauli noise and optional
    prover-side post-selection (retry until the measured y is a multiple
    of k^2, which is all the prover can check without the trapdoor)."""

    def __init__(self, keys, circuit, noise: NoiseModel, seed: int,
                 theta: float = math.pi / 4, retry_invalid: bool = True,
                 max_attempts: int = 1000):
        super().__init__(seed)
        self.keys = keys
        self.circuit = circuit
        self.noise = noise
        self.theta = theta
        self.retry_invalid = retry_invalid
        self.max_attempts = max_attempts
        self.ctx = ProtocolContext.for_circuit(keys, circuit)
        self.attempts = 0
        self.valid_attempts = 0
        self.state = None

    def _round1_impl(self):
        k2 = self.ctx.lift_k ** 2
        rng = self._rng("round1")
        for _ in range(self.max_attempts):
            self.attempts += 1
            y, state, records = noisy_round1(self.keys, self.circuit, self.noise,
                                             rng, self.ctx)
            if not self.retry_invalid or y % k2 == 0:
                self.valid_attempts += 1
                self.state = state
                h = 0
                shift = 0
                for rec in records:
                    h |= rec.h << shift
                    shift += rec.width
                return y, h, shift
        raise RuntimeError("no valid y within the attempt budget")

    def answer_preimage(self):
        if self.state.collapsed is not None:
            return (self.state.x0, self.state.x1)[self.state.collapsed]
        pick = self._rng("preimage").randrange(2)
        return self.state.x0 if pick == 0 else self.state.x1

    def _round2_impl(self, r):
        if self.state.merged:
            return self._rng("d", r).getrandbits(self.state.width)
        return ideal_round2(self.state, r, self._rng("d", r))

    def _round3_impl(self, r, d, basis_sign):
        return ideal_round3(self.state, r, d, basis_sign,
                            self._rng("m", r, basis_sign), theta=self.theta)
