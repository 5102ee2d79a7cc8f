"""Shared test utilities: independent simulation oracles and key helpers."""

import numpy as np

from qbell import circuits as cc
from qbell import tcf


def gen_exact_bits(n, seed0=0):
    """Rabin key whose modulus has exactly n bits."""
    for s in range(seed0, seed0 + 80):
        keys = tcf.rabin_gen(tcf.SecurityParams(n, s))
        if keys.N.bit_length() == n:
            return keys
    raise RuntimeError(f"no exact {n}-bit modulus found")


def blum_semiprimes(limit):
    """All p*q <= limit with distinct primes p, q = 3 mod 4."""
    sieve = np.ones(limit // 2 + 1, dtype=bool)
    sieve[0] = False  # index i represents 2i+1
    for i in range(1, int(limit ** 0.5) // 2 + 1):
        if sieve[i]:
            p = 2 * i + 1
            sieve[i + p::p] = False
    primes = [int(2 * i + 1) for i in np.nonzero(sieve)[0] if (2 * i + 1) % 4 == 3]
    out = []
    for i, p in enumerate(primes):
        for q in primes[i + 1:]:
            if p * q > limit:
                break
            out.append((p * q, q, p))
    return sorted(out)


class StateVector:
    """Dense complex state-vector simulator over few qubits.

    Supports the bit gates, controlled phases, and explicit Pauli error
    operators; used as the independent oracle for the two-branch tracker.
    """

    def __init__(self, n_qubits):
        self.n = n_qubits
        self.dim = 1 << n_qubits
        self.idx = np.arange(self.dim)
        self.state = np.zeros(self.dim, complex)

    @classmethod
    def two_branch(cls, n_qubits, a, b, rel_phase=1):
        sv = cls(n_qubits)
        sv.state[a] += 1 / np.sqrt(2)
        sv.state[b] += rel_phase / np.sqrt(2)
        return sv

    def apply_gate(self, gate):
        tag = gate[0]
        if tag == cc.X:
            self.pauli("X", gate[1])
        elif tag == cc.CNOT:
            _, c, t = gate
            perm = self.idx ^ (((self.idx >> c) & 1) << t)
            self.state = self.state[perm]
        elif tag == cc.TOFFOLI:
            _, a, b, t = gate
            perm = self.idx ^ ((((self.idx >> a) & (self.idx >> b)) & 1) << t)
            self.state = self.state[perm]
        elif tag == cc.CPHASE:
            _, controls, t, angle = gate
            mask = (self.idx >> t) & 1
            for c in controls:
                mask = mask & ((self.idx >> c) & 1)
            self.state = np.where(mask == 1, self.state * np.exp(1j * angle), self.state)
        else:
            raise ValueError(f"state vector cannot apply {tag}")

    def pauli(self, which, q):
        bit = (self.idx >> q) & 1
        if which in ("X", "Y"):
            flipped = self.state[self.idx ^ (1 << q)]
        if which == "X":
            self.state = flipped
        elif which == "Z":
            self.state = np.where(bit == 1, -self.state, self.state)
        elif which == "Y":
            # Y = iXZ: phase from the pre-flip bit value
            sign = np.where(((self.idx ^ (1 << q)) >> q) & 1 == 1, -1.0, 1.0)
            self.state = 1j * sign * flipped

    def equal_up_to_global_phase(self, other_state, atol=1e-9):
        inner = np.vdot(self.state, other_state)
        return np.isclose(abs(inner), 1.0, atol=atol) and \
            np.isclose(np.linalg.norm(other_state), 1.0, atol=atol)


def hybrid_phase_run(circuit, x):
    """Amplitudes over the y register for a basis input x, walking the gate
    list with classical non-y qubits (phase circuits never write to y)."""
    y_reg = list(circuit.registers["y"])
    y_pos = {q: i for i, q in enumerate(y_reg)}
    M = 1 << len(y_reg)
    amps = np.full(M, 1.0 / np.sqrt(M), complex)
    bits = {}
    for i, q in enumerate(circuit.registers["x"]):
        bits[q] = (x >> i) & 1
    zidx = np.arange(M)
    for gate in circuit.gates:
        tag = gate[0]
        if tag == cc.ALLOC:
            if gate[1] not in y_pos and gate[1] not in bits:
                bits[gate[1]] = 0
        elif tag == cc.X:
            assert gate[1] not in y_pos
            bits[gate[1]] ^= 1
        elif tag == cc.CNOT:
            _, c, t = gate
            assert t not in y_pos and c not in y_pos
            bits[t] ^= bits[c]
        elif tag == cc.TOFFOLI:
            _, a, b, t = gate
            assert t not in y_pos
            bits[t] ^= bits[a] & bits[b]
        elif tag == cc.CPHASE:
            _, controls, t, angle = gate
            assert t in y_pos
            if all(bits[c] for c in controls):
                k = y_pos[t]
                amps = np.where((zidx >> k) & 1 == 1, amps * np.exp(1j * angle), amps)
    return amps
