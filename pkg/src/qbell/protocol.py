"""Verifier state machine for the 3-round interactive quantumness test.

Round 1: the prover commits an image y of the trapdoor claw-free function;
the verifier inverts it with the trapdoor.  The verifier then either asks
for a preimage (checked against y) or continues.  Round 2: the verifier
sends a random vector r, the prover returns the Hadamard-measurement
string d of its input register.  Round 3: the verifier requests one of the
two intermediate bases (rotated +/- pi/4 from Z around Y) and accepts iff
the reported bit is the more likely outcome for the single-qubit state
determined by (x0, x1, r, d).

Conventions: bit strings are little-endian integers (bit i weights 2^i);
r . x is the parity of r & x.  Scores are kept as exact rationals.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field
from fractions import Fraction

from . import circuits, tcf


class InsufficientData(ValueError):
    """Scoring requires at least one trial of each challenge branch."""


COS2_PI_8 = math.cos(math.pi / 8) ** 2  # honest single-round success rate


def parity(x: int) -> int:
    return x.bit_count() & 1


# ---------------------------------------------------------------------------
# messages

@dataclass(frozen=True)
class KeyMsg:
    tag = "key"
    key_json: str


@dataclass(frozen=True)
class ImageMsg:
    """Round-1 commitment.  h carries the Hadamard outcomes of discarded
    garbage qubits when the prover ran a discarding circuit (empty
    otherwise); the verifier needs them to reconstruct the discard phase."""

    tag = "image"
    y: int
    h: int = 0
    h_len: int = 0


@dataclass(frozen=True)
class ChallengeMsg:
    tag = "challenge"
    kind: str  # "preimage" | "continue"


@dataclass(frozen=True)
class PreimageMsg:
    tag = "preimage"
    x: int


@dataclass(frozen=True)
class VectorMsg:
    tag = "vector"
    r: int
    n: int


@dataclass(frozen=True)
class EquationMsg:
    tag = "equation"
    d: int
    n: int


@dataclass(frozen=True)
class BasisMsg:
    """Measurement basis rotated by sign * pi/4 from Z around Y."""

    tag = "basis"
    sign: int

    @property
    def angle(self) -> float:
        return self.sign * math.pi / 4


@dataclass(frozen=True)
class ResultMsg:
    tag = "result"
    bit: int


class Outcome(str, enum.Enum):
    ACCEPTED_PREIMAGE = "AcceptedPreimage"
    REJECTED_PREIMAGE = "RejectedPreimage"
    ACCEPTED_MEASUREMENT = "AcceptedMeasurement"
    REJECTED_MEASUREMENT = "RejectedMeasurement"
    DISCARDED_INVALID_Y = "DiscardedInvalidY"


@dataclass
class Transcript:
    iteration: int
    msgs: list = field(default_factory=list)
    outcome: Outcome | None = None

    def to_json(self) -> str:
        body = []
        for m in self.msgs:
            payload = {k: (str(v) if isinstance(v, int) and abs(v) > 2 ** 53 else v)
                       for k, v in m.__dict__.items()}
            body.append({"tag": m.tag, "payload": payload})
        return json.dumps({"iter": self.iteration, "msgs": body,
                           "outcome": self.outcome.value if self.outcome else None},
                          sort_keys=True)


class QubitState(enum.Enum):
    ZERO = "0"
    ONE = "1"
    PLUS = "+"
    MINUS = "-"


# ---------------------------------------------------------------------------
# single-qubit algebra

def compute_qubit_state(x0: int, x1: int, r: int, d: int, rel_phase_bit: int = 0) -> QubitState:
    """State of the ancilla after round 2 for branch strings x0, x1.

    If r.x0 = r.x1 the state is |r.x0>; otherwise the equation string d
    fixes the sign: plus iff d.(x0 xor x1) equals the relative-phase bit
    of the branch superposition (0 for the noise-free +1 phase).
    """
    b0 = parity(r & x0)
    b1 = parity(r & x1)
    if b0 == b1:
        return QubitState.ZERO if b0 == 0 else QubitState.ONE
    sign = parity(d & (x0 ^ x1)) ^ rel_phase_bit
    return QubitState.PLUS if sign == 0 else QubitState.MINUS


_EXPECTED_BIT = {
    (QubitState.ZERO, 1): 0, (QubitState.ZERO, -1): 0,
    (QubitState.ONE, 1): 1, (QubitState.ONE, -1): 1,
    (QubitState.PLUS, 1): 0, (QubitState.PLUS, -1): 1,
    (QubitState.MINUS, 1): 1, (QubitState.MINUS, -1): 0,
}


def expected_bit(state: QubitState, basis_sign: int) -> int:
    """The more likely outcome (probability cos^2(pi/8)) in the +/- pi/4 basis."""
    return _EXPECTED_BIT[(state, basis_sign)]


def born_probability(state: QubitState, angle: float, outcome: int) -> float:
    """P[measuring `state` at basis angle `angle` yields `outcome`].

    Basis vectors: |m0> = cos(a/2)|0> + sin(a/2)|1>,
                   |m1> = -sin(a/2)|0> + cos(a/2)|1>.
    """
    half = angle / 2.0
    if state is QubitState.ZERO:
        p0 = math.cos(half) ** 2
    elif state is QubitState.ONE:
        p0 = math.sin(half) ** 2
    elif state is QubitState.PLUS:
        p0 = (1.0 + math.sin(angle)) / 2.0
    else:
        p0 = (1.0 - math.sin(angle)) / 2.0
    return p0 if outcome == 0 else 1.0 - p0


# ---------------------------------------------------------------------------
# verifier-side checks

def choose_challenge(rng, ratio: float = 0.5) -> str:
    """Preimage with probability `ratio`, continue otherwise."""
    if not 0.0 < ratio <= 1.0:
        raise tcf.DomainError(f"challenge ratio must be in (0, 1], got {ratio}")
    return "preimage" if rng.random() < ratio else "continue"


def verifier_check_image(keys, y):
    """("claw", Claw) | ("single", x) | ("invalid", None) via trapdoor inversion."""
    preimages = tcf.invert(keys, y)
    if len(preimages) == 2:
        x0, x1 = sorted(preimages) if all(isinstance(p, int) for p in preimages) \
            else sorted(preimages, key=repr)
        return ("claw", tcf.Claw(x0=x0, x1=x1, y=y))
    if len(preimages) == 1:
        return ("single", next(iter(preimages)))
    return ("invalid", None)


def check_preimage(keys, x, y) -> bool:
    """True iff x is in the domain and f(x) = y."""
    try:
        return tcf.evaluate(keys, x) == y
    except tcf.DomainError:
        return False


# ---------------------------------------------------------------------------
# protocol context: how a key plus (optionally) a circuit defines the wire values

@dataclass
class ProtocolContext:
    """Everything the verifier needs to interpret prover messages.

    For circuit-backed provers the measured value carries the Montgomery
    factor and the lift: y_wire = (k x)^2 R' mod k^2 N.  The base image is
    recovered as (y_wire * R / k^2) mod' and the register strings compared
    in rounds 2-3 are k * x_i at the register width.
    """

    keys: object
    reg_width: int
    lift_k: int = 1
    modulus: int | None = None  # k^2 N for circuit-backed runs
    r_undo: int | None = None   # multiplicative undo of the Montgomery factor
    circuit: object | None = None

    @classmethod
    def plain(cls, keys):
        if isinstance(keys, tcf.RabinKeyPair):
            width = keys.N.bit_length()
        else:
            per = (keys.m - 1).bit_length()
            width = 1 + keys.k * per
        return cls(keys=keys, reg_width=width)

    @classmethod
    def for_circuit(cls, keys, circuit):
        meta = circuit.metadata
        return cls(
            keys=keys,
            reg_width=len(circuit.registers["x"]),
            lift_k=meta.get("k", 1),
            modulus=meta.get("modulus"),
            r_undo=meta.get("r_undo"),
            circuit=circuit,
        )

    # --- wire value <-> base value

    def base_image(self, y_wire: int):
        """Undo Montgomery factor and lift; None if structurally invalid."""
        if self.circuit is None:
            return y_wire
        k2 = self.lift_k * self.lift_k
        if not 0 <= y_wire < self.modulus:
            return None
        y = y_wire * self.r_undo % self.modulus
        if y % k2:
            return None
        return y // k2

    def register_value(self, x_base: int) -> int:
        return x_base * self.lift_k

    def encode_domain(self, x) -> int:
        """Domain element -> little-endian register string."""
        if isinstance(self.keys, tcf.RabinKeyPair):
            return self.register_value(x)
        b, vec = x
        per = (self.keys.m - 1).bit_length()
        out = b
        for i, v in enumerate(vec):
            out |= v << (1 + i * per)
        return out

    def check_preimage_wire(self, x_wire: int, y_wire: int) -> bool:
        """Verify a round-1 preimage answer as sent on the wire."""
        if isinstance(self.keys, tcf.RabinKeyPair):
            y = self.base_image(y_wire)
            if y is None:
                return False
            k = self.lift_k
            if x_wire % k:
                return False
            return check_preimage(self.keys, x_wire // k, y)
        return check_preimage(self.keys, _decode_ddh(self.keys, x_wire), y_wire)


def _decode_ddh(keys, x_wire: int):
    per = (keys.m - 1).bit_length()
    b = x_wire & 1
    vec = tuple((x_wire >> (1 + i * per)) & ((1 << per) - 1) for i in range(keys.k))
    return (b, vec)


# ---------------------------------------------------------------------------
# one full iteration

@dataclass
class IterationConfig:
    challenge_ratio: float = 0.5
    postselect: bool = False


def _verifier_phase_bit(ctx: ProtocolContext, x0_base, x1_base, h: int, h_len: int) -> int:
    """Reconstruct the discard phase from transmitted h and the two branch
    garbage strings, recomputed classically from the claw."""
    if ctx.circuit is None or h_len == 0:
        return 0
    _, g0 = circuits.evaluate_classical(ctx.circuit, x0_base)
    _, g1 = circuits.evaluate_classical(ctx.circuit, x1_base)
    g0i = sum(b << i for i, b in enumerate(g0))
    g1i = sum(b << i for i, b in enumerate(g1))
    return parity(h & (g0i ^ g1i))


def run_iteration(ctx: ProtocolContext, prover, rng, config: IterationConfig,
                  iteration: int = 0) -> Transcript:
    """Drive one iteration against a prover implementing the 3-round interface."""
    t = Transcript(iteration=iteration)
    y_wire, h, h_len = prover.round1()
    t.msgs.append(ImageMsg(y=y_wire, h=h, h_len=h_len))

    y_base = ctx.base_image(y_wire)
    kind, inverted = ("invalid", None) if y_base is None \
        else verifier_check_image(ctx.keys, y_base)
    if config.postselect and kind == "invalid":
        # silent discard: the prover is not told, the iteration is dropped
        t.outcome = Outcome.DISCARDED_INVALID_Y
        return t

    challenge = choose_challenge(rng, config.challenge_ratio)
    t.msgs.append(ChallengeMsg(kind=challenge))
    if challenge == "preimage":
        x_wire = prover.answer_preimage()
        t.msgs.append(PreimageMsg(x=x_wire))
        ok = ctx.check_preimage_wire(x_wire, y_wire)
        t.outcome = Outcome.ACCEPTED_PREIMAGE if ok else Outcome.REJECTED_PREIMAGE
        return t

    r = rng.getrandbits(ctx.reg_width)
    t.msgs.append(VectorMsg(r=r, n=ctx.reg_width))
    d = prover.round2(r)
    t.msgs.append(EquationMsg(d=d, n=ctx.reg_width))
    sign = 1 if rng.random() < 0.5 else -1
    t.msgs.append(BasisMsg(sign=sign))
    bit = prover.round3(sign)
    t.msgs.append(ResultMsg(bit=bit))

    if kind == "invalid":
        # post-selection off: an unindexable y can never be accepted
        t.outcome = Outcome.REJECTED_MEASUREMENT
        return t
    if kind == "single":
        x_reg = ctx.encode_domain(inverted)
        state = QubitState.ZERO if parity(r & x_reg) == 0 else QubitState.ONE
    else:
        x0_reg = ctx.encode_domain(inverted.x0)
        x1_reg = ctx.encode_domain(inverted.x1)
        if isinstance(ctx.keys, tcf.RabinKeyPair):
            pv = _verifier_phase_bit(ctx, inverted.x0, inverted.x1, h, h_len)
        else:
            pv = 0
        state = compute_qubit_state(x0_reg, x1_reg, r, d, rel_phase_bit=pv)
    ok = bit == expected_bit(state, sign)
    t.outcome = Outcome.ACCEPTED_MEASUREMENT if ok else Outcome.REJECTED_MEASUREMENT
    return t


# ---------------------------------------------------------------------------
# scoring

@dataclass(frozen=True)
class ScoreReport:
    trials_x: int
    accepts_x: int
    trials_m: int
    accepts_m: int
    p_x: Fraction
    p_m: Fraction
    score: Fraction
    ci_halfwidth: float

    @classmethod
    def from_counts(cls, trials_x, accepts_x, trials_m, accepts_m,
                    confidence: float = 0.95) -> "ScoreReport":
        if trials_x == 0 or trials_m == 0:
            raise InsufficientData("need at least one trial of each branch")
        p_x = Fraction(accepts_x, trials_x)
        p_m = Fraction(accepts_m, trials_m)
        score = p_x + 4 * p_m - 4
        # two-sided Hoeffding on each rate, alpha split between them,
        # combined through the linear form's coefficients 1 and 4
        alpha = (1.0 - confidence) / 2.0
        hw_x = math.sqrt(math.log(2.0 / alpha) / (2.0 * trials_x))
        hw_m = math.sqrt(math.log(2.0 / alpha) / (2.0 * trials_m))
        return cls(trials_x, accepts_x, trials_m, accepts_m,
                   p_x, p_m, score, hw_x + 4.0 * hw_m)

    def to_json(self) -> str:
        return json.dumps({
            "trials_x": self.trials_x, "accepts_x": self.accepts_x,
            "trials_m": self.trials_m, "accepts_m": self.accepts_m,
            "p_x": str(self.p_x), "p_m": str(self.p_m),
            "score": str(self.score), "score_float": float(self.score),
            "ci_halfwidth": self.ci_halfwidth,
        }, sort_keys=True)


def score(transcripts) -> ScoreReport:
    """Aggregate accept rates; discarded iterations count toward nothing."""
    tx = ax = tm = am = 0
    for t in transcripts:
        if t.outcome is Outcome.ACCEPTED_PREIMAGE:
            tx += 1
            ax += 1
        elif t.outcome is Outcome.REJECTED_PREIMAGE:
            tx += 1
        elif t.outcome is Outcome.ACCEPTED_MEASUREMENT:
            tm += 1
            am += 1
        elif t.outcome is Outcome.REJECTED_MEASUREMENT:
            tm += 1
    return ScoreReport.from_counts(tx, ax, tm, am)


def transcripts_to_jsonl(transcripts) -> str:
    return "\n".join(t.to_json() for t in transcripts) + "\n"
