"""Constructive classical soundness: turn any good rewindable prover into a
factoring algorithm.

Fixing one round-1 commitment y, the prover is replayed through rounds 2-3
for chosen vectors r, asking for the measurement outcome in both bases
(rewinding in between).  The two answers determine a unique single-qubit
state, which reveals whether r.x0 = r.x1; combined with the known x0 this
is a noisy oracle for the parity r.x1.  Goldreich-Levin list decoding of
that oracle produces a candidate list for x1; any candidate that maps to y
completes a claw and factors the modulus.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from . import tcf
from .protocol import QubitState, parity


class BudgetExceeded(RuntimeError):
    """Decoding would need more oracle queries than allowed."""


class ExtractionFailed(RuntimeError):
    """No candidate completed a claw."""

    def __init__(self, message, queries_used=0):
        super().__init__(message)
        self.queries_used = queries_used


@dataclass(frozen=True)
class GlParams:
    """t probes give 2^t sign assignments and 2^t - 1 majority samples per bit."""

    t: int
    mu: float = 0.05
    max_candidates: int = 4096
    max_queries: int = 2_000_000

    def __post_init__(self):
        if self.t < 1:
            raise tcf.DomainError("need at least one probe")
        if not 0.0 < self.mu < 0.5:
            raise tcf.DomainError("mu must lie in (0, 1/2)")


def default_probe_count(n: int, mu: float = 0.05) -> int:
    """Probes so the per-bit majority has ceil(8 ln(4n) / mu^2) samples."""
    samples = math.ceil(8.0 * math.log(4.0 * n) / (mu * mu))
    return max(1, (samples + 1).bit_length())


def lemma1_bound(epsilon: float, mu: float) -> float:
    """Lower bound on the fraction of commitments whose conditional noise
    rate is below 1/2 - mu, given overall oracle noise epsilon."""
    if not 0.0 <= epsilon <= 1.0:
        raise tcf.DomainError("epsilon must lie in [0, 1]")
    if not 0.0 < mu < 0.5:
        raise tcf.DomainError("mu must lie in (0, 1/2)")
    return max(0.0, 1.0 - 2.0 * epsilon - 2.0 * mu)


def good_fraction(noise_rates, mu: float) -> float:
    """Fraction of per-commitment noise rates below 1/2 - mu."""
    rates = list(noise_rates)
    return sum(1 for e in rates if e < 0.5 - mu) / len(rates)


# state inferred from the (+pi/4, -pi/4) answer pair; exact inverse of the
# accept table: each state has a unique pair of "more likely" outcomes
_STATE_FROM_BITS = {
    (0, 0): QubitState.ZERO,
    (1, 1): QubitState.ONE,
    (0, 1): QubitState.PLUS,
    (1, 0): QubitState.MINUS,
}


class RewindableOracle:
    """Parity oracle r -> guess of r.x1 built from a rewindable prover.

    One oracle instance serves one fixed commitment y; x0 must already be
    known (from a preimage challenge before the rewind).  Answers to
    repeated r queries are cached, matching the deterministic-rewind model.
    """

    def __init__(self, prover, x0: int):
        self.prover = prover
        self.x0 = x0
        self.queries_used = 0
        self._cache = {}

    def query(self, r: int) -> int:
        if r in self._cache:
            return self._cache[r]
        self.queries_used += 1
        self.prover.reset()
        self.prover.round2(r)
        bit_plus = self.prover.round3(1)
        self.prover.reset()
        self.prover.round2(r)
        bit_minus = self.prover.round3(-1)
        state = _STATE_FROM_BITS[(bit_plus, bit_minus)]
        if state is QubitState.ZERO:
            guess = 0
        elif state is QubitState.ONE:
            guess = 1
        else:
            guess = 1 ^ parity(r & self.x0)
        self._cache[r] = guess
        return guess


def parity_guess(oracle: RewindableOracle, r: int) -> int:
    """Single oracle guess of the parity r.x1."""
    return oracle.query(r)


def gl_list_decode(oracle, n: int, params: GlParams, rng) -> list:
    """Goldreich-Levin list decoding with pairwise-independent probe sums.

    Draws t probes; for every subset-sum r_T and every bit i queries the
    oracle at r_T xor e_i, then reconstructs a candidate for each of the
    2^t assignments of the probes' true parities, taking per-bit majorities.
    """
    t = params.t
    n_subsets = (1 << t) - 1
    if n_subsets * n > params.max_queries:
        raise BudgetExceeded(f"{n_subsets * n} queries exceed {params.max_queries}")
    probes = [rng.getrandbits(n) for _ in range(t)]
    subset_r = {}
    for mask in range(1, 1 << t):
        low = mask & -mask
        rest = mask ^ low
        subset_r[mask] = probes[low.bit_length() - 1] ^ subset_r.get(rest, 0)
    answers = {}
    for mask, r_t in subset_r.items():
        answers[mask] = [oracle.query(r_t ^ (1 << i)) for i in range(n)]
    candidates = []
    seen = set()
    for sigma in range(1 << t):
        votes = [0] * n
        for mask in subset_r:
            base = parity(sigma & mask)
            row = answers[mask]
            for i in range(n):
                votes[i] += 1 if row[i] ^ base else -1
        cand = 0
        for i in range(n):
            if votes[i] > 0:
                cand |= 1 << i
        if cand not in seen:
            seen.add(cand)
            candidates.append(cand)
        if len(candidates) >= params.max_candidates:
            break
    return candidates


@dataclass
class ExtractionReport:
    x0: int
    x1: int | None
    claw: tcf.Claw | None
    factors: tuple | None
    queries_used: int

    def to_json_dict(self):
        return {
            "x0": str(self.x0),
            "x1": None if self.x1 is None else str(self.x1),
            "factors": None if self.factors is None else [str(f) for f in self.factors],
            "queries_used": self.queries_used,
        }


def extract_and_factor(prover, N: int, params: GlParams, rng) -> ExtractionReport:
    """Run the full reduction against a rewindable prover on modulus N.

    Ask the preimage challenge first (storing x0), rewind, list-decode the
    round-2/3 oracle for x1, filter candidates by f(x1) = y, and factor.
    """
    y = prover.round1()[0]
    x0 = prover.answer_preimage()
    bound = tcf.rabin_domain_size(N)
    if not (0 <= x0 < bound and x0 * x0 % N == y):
        raise ExtractionFailed("prover's preimage answer does not match y")
    prover.reset()
    oracle = RewindableOracle(prover, x0)
    n = N.bit_length()
    candidates = gl_list_decode(oracle, n, params, rng)
    for cand in candidates:
        if cand != x0 and 0 <= cand < bound and cand * cand % N == y:
            claw = tcf.Claw(x0=x0, x1=cand, y=y)
            try:
                factors = tcf.factor_from_claw(N, claw)
            except tcf.NotAClaw:
                continue
            return ExtractionReport(x0=x0, x1=cand, claw=claw, factors=factors,
                                    queries_used=oracle.queries_used)
    raise ExtractionFailed("no candidate completed a claw",
                           queries_used=oracle.queries_used)
