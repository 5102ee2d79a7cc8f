"""Redundancy-based error filtering experiments.

Key lifting maps the squaring function to (k x)^2 mod k^2 N with k = 3^m,
so every honest image is a multiple of k^2 and the prover can reject a
corrupted measurement without the trapdoor, at a cost of re-running the
circuit.  The verifier additionally discards (silently) any surviving y
that the trapdoor cannot invert.  Sweeps measure the protocol score, the
combined discard rate and the runtime overhead across circuit fidelities.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from . import circuits, protocol, tcf
from .provers import NoiseModel, optimal_theta, sample_claw
from .seeds import derive_rng, derive_seed


class NoCrossing(ValueError):
    """Score rows never change sign."""


@dataclass(frozen=True)
class LiftedKey:
    base: tcf.RabinKeyPair
    m: int
    k: int
    n_lifted: int
    circuit: circuits.Circuit
    gate_count: int


def lift_key(keys: tcf.RabinKeyPair, m: int, method: str = "karatsuba",
             cutoff: int = 32) -> LiftedKey:
    """Build the lifted circuit (x3 chain, square, reduce) for k = 3^m."""
    if m < 0:
        raise tcf.DomainError("lift exponent must be nonnegative")
    circ = circuits.build_modsquare(keys.N, lift_m=m, method=method, cutoff=cutoff)
    k = 3 ** m
    return LiftedKey(base=keys, m=m, k=k, n_lifted=k * k * keys.N, circuit=circ,
                     gate_count=circuits.count_resources(circ).total_gates)


def is_valid_y(y: int, k: int) -> bool:
    """Prover-side validity: the lifted image must be a multiple of k^2."""
    return y % (k * k) == 0


def rejection_power(k: int) -> Fraction:
    """Fraction 1 - 1/k^2 of uniformly corrupted images the k^2 test rejects."""
    if k < 1:
        raise tcf.DomainError("k must be >= 1")
    return Fraction(k * k - 1, k * k)


@dataclass(frozen=True)
class SweepConfig:
    m_values: tuple
    fidelity_grid: tuple
    trials_per_point: int
    seed: int
    method: str = "karatsuba"
    cutoff: int = 32

    def __post_init__(self):
        if not self.m_values or not self.fidelity_grid:
            raise tcf.DomainError("sweep grids must be nonempty")
        if self.trials_per_point < 100:
            raise tcf.DomainError("need at least 100 trials per point")


@dataclass(frozen=True)
class SweepRow:
    m: int
    F: float
    p_x: float
    p_m: float
    score: float
    discard_rate: float
    runtime_overhead: float
    kept: int


def run_sweep(config: SweepConfig, keys: tcf.RabinKeyPair) -> list:
    """Noisy-prover protocol statistics over the (m, F) grid.

    Per-gate fidelity is calibrated on the unlifted circuit, so lifted
    circuits run at a lower overall fidelity -- that cost, plus re-running
    until a valid y appears, is the runtime overhead
    (size ratio / keep rate).
    """
    base = lift_key(keys, 0, config.method, config.cutoff)
    rows = []
    for m in config.m_values:
        lifted = base if m == 0 else lift_key(keys, m, config.method, config.cutoff)
        for F in config.fidelity_grid:
            noise = NoiseModel(circuit_fidelity=F, n_gates=base.gate_count)
            rows.append(_sweep_point(config, lifted, base, noise))
    return rows


def _sweep_point(config: SweepConfig, lifted: LiftedKey, base: LiftedKey,
                 noise: NoiseModel) -> SweepRow:
    keys = lifted.base
    N = keys.N
    k = lifted.k
    k2 = k * k
    circ = lifted.circuit
    meta = circ.metadata
    modulus, r_undo = meta["modulus"], meta["r_undo"]
    trials = config.trials_per_point

    seed = derive_seed(config.seed, "point", lifted.m, repr(noise.circuit_fidelity))
    rng = derive_rng(seed, "rounds")
    nprng = np.random.default_rng(derive_seed(seed, "engine"))

    # stage 1: run the circuit, post-select, remember the surviving runs
    kept_runs = []
    discarded = 0
    cal_total = cal_bits = cal_state = 0
    chunk = 2048
    done = 0
    while done < trials:
        R = min(chunk, trials - done)
        done += R
        claws = [sample_claw(keys, rng) for _ in range(R)]
        x0s = [c[0] for c in claws]
        x1s = [c[1] for c in claws]
        out = circuits.run_two_branch_batch(circ, x0s, x1s, noise.error_prob, nprng)
        for i in range(R):
            y0, y1 = out["y0"][i], out["y1"][i]
            if y0 != y1:
                pick = rng.randrange(2)
                y = (y0, y1)[pick]
                collapsed = pick
            else:
                y = y0
                collapsed = None
            if not is_valid_y(y, k):
                discarded += 1  # prover-side: re-run the circuit
                continue
            # device characterization against the intended (error-free)
            # computation, over the runs the prover itself can keep
            v0, v1 = out["reg0"][i], out["reg1"][i]
            cal_total += 1
            if collapsed is None and {v0, v1} == {out["creg0"][i], out["creg1"][i]}:
                cal_bits += 1
                if out["phase_prover"][i] == out["phase_verifier"][i]:
                    cal_state += 1
            y_base_wire = y * r_undo % modulus
            y_base = y_base_wire // k2 if y_base_wire % k2 == 0 else None
            kind, inverted = ("invalid", None) if y_base is None else \
                protocol.verifier_check_image(keys, y_base)
            if kind == "invalid":
                discarded += 1  # verifier-side silent discard
                continue
            kept_runs.append((
                v0, v1, int(out["phase_prover"][i]),
                int(out["phase_verifier"][i]), collapsed, kind, inverted, y_base,
            ))

    # stage 2: calibrate the round-3 angle; the prover only sees its own
    # post-selected ensemble, not the verifier's silent discards
    theta = _calibrated_theta(cal_total, cal_bits, cal_state)

    # stage 3: play rounds against the verifier
    width = lifted_width(lifted)
    tx = ax = tm = am = 0
    for v0, v1, phase_p, phase_v, collapsed, kind, inverted, y_base in kept_runs:
        if rng.random() < 0.5:
            tx += 1
            if collapsed is not None:
                answer = (v0, v1)[collapsed]
            else:
                answer = (v0, v1)[rng.randrange(2)]
            if answer % k == 0 and answer // k < tcf.rabin_domain_size(N) \
                    and (answer // k) ** 2 % N == y_base:
                ax += 1
        else:
            tm += 1
            r = rng.getrandbits(width)
            merged = collapsed is not None or v0 == v1
            if merged:
                d = rng.getrandbits(width)
                branch = (v0, v1)[collapsed or 0]
                actual = protocol.QubitState.ZERO if protocol.parity(r & branch) == 0 \
                    else protocol.QubitState.ONE
            else:
                d = _sample_d(rng, width, r, v0, v1, phase_p)
                actual = protocol.compute_qubit_state(v0, v1, r, d,
                                                      rel_phase_bit=phase_p)
            sign = 1 if rng.random() < 0.5 else -1
            bit = _born_sample(rng, actual, sign, theta)
            if kind == "single":
                w = inverted * k
                pred = protocol.QubitState.ZERO if protocol.parity(r & w) == 0 \
                    else protocol.QubitState.ONE
            else:
                w0 = inverted.x0 * k
                w1 = inverted.x1 * k
                pred = protocol.compute_qubit_state(w0, w1, r, d,
                                                    rel_phase_bit=phase_v)
            if bit == protocol.expected_bit(pred, sign):
                am += 1

    kept = tx + tm
    discard_rate = discarded / trials
    size_ratio = lifted.gate_count / base.gate_count
    overhead = size_ratio / (1.0 - discard_rate) if discard_rate < 1.0 else math.inf
    p_x = ax / tx if tx else 0.0
    p_m = am / tm if tm else 0.0
    return SweepRow(m=lifted.m, F=noise.circuit_fidelity, p_x=p_x, p_m=p_m,
                    score=p_x + 4.0 * p_m - 4.0, discard_rate=discard_rate,
                    runtime_overhead=overhead, kept=kept)


def _calibrated_theta(total, bits_ok, state_ok) -> float:
    """Round-3 angle from the empirical correct-state rates.

    Post-selection cannot catch pure phase errors, so the prover measures
    at the optimum for its actual (f_par, f_perp) instead of pi/4; with
    correct bitstrings f_par is near one and the optimum angle shrinks with
    the surviving phase coherence.  Runs with wrong bitstrings hold an
    effectively random state, correct with probability one half.
    """
    if total == 0:
        return math.pi / 4
    frac_bits = bits_ok / total
    frac_state = state_ok / total
    f_par = frac_bits + (1.0 - frac_bits) * 0.5
    f_perp = frac_state + (1.0 - frac_bits) * 0.5
    if f_par <= 0.5 + 1e-9:
        return math.pi / 4
    return optimal_theta(f_par, f_perp)


def lifted_width(lifted: LiftedKey) -> int:
    return len(lifted.circuit.registers["x"])


def _sample_d(rng, width, r, v0, v1, phase_bit):
    d = rng.getrandbits(width)
    if protocol.parity(r & v0) == protocol.parity(r & v1):
        diff = v0 ^ v1
        if protocol.parity(d & diff) != phase_bit:
            d ^= diff & -diff
    return d


def _born_sample(rng, state, sign, theta=math.pi / 4):
    p0 = protocol.born_probability(state, sign * theta, 0)
    return 0 if rng.random() < p0 else 1


def threshold_of(rows) -> float:
    """Fidelity at which the score crosses zero, by linear interpolation."""
    pts = sorted(((row.F, row.score) for row in rows))
    for (f0, s0), (f1, s1) in zip(pts, pts[1:]):
        if s0 <= 0.0 < s1:
            return f0 + (0.0 - s0) * (f1 - f0) / (s1 - s0)
    raise NoCrossing("score never crosses zero on this grid")


def sweep_rows_to_csv(rows) -> str:
    lines = ["m,F,p_x,p_m,score,discard_rate,overhead"]
    for r in rows:
        lines.append(f"{r.m},{r.F:.6g},{r.p_x:.6f},{r.p_m:.6f},{r.score:.6f},"
                     f"{r.discard_rate:.6f},{r.runtime_overhead:.6f}")
    return "\n".join(lines) + "\n"


def sweep_rows_to_json(rows) -> str:
    return json.dumps([{
        "m": r.m, "F": r.F, "p_x": r.p_x, "p_m": r.p_m, "score": r.score,
        "discard_rate": r.discard_rate, "overhead": r.runtime_overhead,
        "kept": r.kept,
    } for r in rows], sort_keys=True)
