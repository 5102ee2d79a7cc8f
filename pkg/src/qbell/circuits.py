"""Gate-level circuits for modular squaring, and their evaluators.

The gate set is X / CNOT / Toffoli / controlled-phase plus three
bookkeeping events: ALLOC (a qubit index enters use, value 0), DISCARD
(garbage qubits are measured in the Hadamard basis and their indices
returned to the pool) and MEASURE_Y (the standard-basis readout of the
output register, exactly once per circuit).

Discarding garbage imprints a relative phase (-1)^(h . g(x)) between
superposed branches, where h is the random string of Hadamard-basis
outcomes and g(x) the garbage values on input x.  Builders here discard
eagerly -- every carry chain and partial product is measured away as soon
as it is classically dead -- so the multipliers run in essentially the
classical number of qubits.

Multiplication is schoolbook or Karatsuba; the modulo is Montgomery
reduction, which leaves a known factor R' = R^-1 mod N on the output
(recorded in the metadata, removed classically by the verifier).  A final
comparator + conditional subtraction canonicalizes the output into [0, N)
so that both branches of a claw measure the identical y.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


class CircuitError(ValueError):
    """Bad builder parameters."""


class MalformedCircuit(ValueError):
    """Circuit violates a structural invariant."""


# gate tags
X = "X"
CNOT = "CNOT"
TOFFOLI = "TOFFOLI"
CPHASE = "CPHASE"
ALLOC = "ALLOC"
DISCARD = "DISCARD"
MEASURE_Y = "MEASURE_Y"

UNITARY_TAGS = (X, CNOT, TOFFOLI, CPHASE)


@dataclass
class Circuit:
    n_qubits: int
    gates: list
    registers: dict
    metadata: dict = field(default_factory=dict)


@dataclass(frozen=True)
class ResourceReport:
    qubits: int
    total_gates: int
    toffoli_count: int
    depth: int

    @property
    def gates_clifford_t(self) -> int:
        """Total after expanding each Toffoli into its standard 15-gate
        Clifford+T realization (6 CNOT, 7 T/Tdg, 2 H); other gates unchanged."""
        return self.total_gates + 14 * self.toffoli_count


@dataclass(frozen=True)
class GarbageRecord:
    """One discard event: Hadamard outcomes h and garbage values per branch."""

    h: int
    g0: int
    g1: int
    width: int


def discard_phase(record: GarbageRecord) -> int:
    """Relative phase (-1)^(h . (g0 xor g1)) a discard imposes between branches."""
    return -1 if (record.h & (record.g0 ^ record.g1)).bit_count() & 1 else 1


class QubitPool:
    """Allocates qubit indices into a gate list, reusing discarded ones."""

    def __init__(self, gates: list):
        self.gates = gates
        self._free = []
        self._next = 0
        self._live = 0
        self.peak = 0

    def new(self) -> int:
        q = self._free.pop() if self._free else self._bump()
        self._live += 1
        self.peak = max(self.peak, self._live)
        self.gates.append((ALLOC, q))
        return q

    def _bump(self) -> int:
        q = self._next
        self._next += 1
        return q

    def new_register(self, width: int) -> tuple:
        return tuple(self.new() for _ in range(width))

    def discard(self, qs) -> None:
        if isinstance(qs, int):
            qs = (qs,)
        qs = tuple(qs)
        self.gates.append((DISCARD, qs))
        self._free.extend(qs)
        self._live -= len(qs)

    @property
    def total_indices(self) -> int:
        return self._next


# ---------------------------------------------------------------------------
# arithmetic building blocks
#
# half_adder:  (a, b, cout) -> (a, a+b, cout + carry)
# full_adder:  (a, b, cin, cout) -> (a, a+b+cin, cin, cout + carry)
# callers discard the stale carry (and the a input where it is a scratch
# partial product) immediately after each step.

def _half_adder(g, a, b, cout):
    g.append((TOFFOLI, a, b, cout))
    g.append((CNOT, a, b))


def _full_adder(g, a, b, cin, cout):
    g.append((TOFFOLI, a, b, cout))
    g.append((CNOT, a, b))
    g.append((TOFFOLI, b, cin, cout))
    g.append((CNOT, cin, b))


def add_registers(g, pool, A, B):
    """B += A (mod 2^len(B)) for quantum registers, len(A) <= len(B)."""
    if len(A) > len(B):
        raise CircuitError("register A too long to add into B")
    cin = None
    for i, a in enumerate(A):
        cout = pool.new()
        if i == 0:
            _half_adder(g, a, B[i], cout)
        else:
            _full_adder(g, a, B[i], cin, cout)
            pool.discard(cin)
        cin = cout
    for b in B[len(A):]:
        cout = pool.new()
        _half_adder(g, cin, b, cout)
        pool.discard(cin)
        cin = cout
    pool.discard(cin)


def add_constant(g, pool, value, A):
    """A += value (mod 2^len(A)) for a classical nonnegative constant."""
    if value < 0 or value.bit_length() > len(A):
        raise CircuitError("constant does not fit the register")
    cin = pool.new()
    for a in A:
        cout = pool.new()
        if value & 1:
            g.append((X, cin))
            g.append((X, a))
            _half_adder(g, cin, a, cout)
            g.append((X, a))
            g.append((X, cout))
        else:
            _half_adder(g, cin, a, cout)
        pool.discard(cin)
        cin = cout
        value >>= 1
    pool.discard(cin)


def copy_register(g, A, B):
    """B ^= A, elementwise CNOTs."""
    if len(A) > len(B):
        raise CircuitError("register B shorter than A")
    for a, b in zip(A, B):
        g.append((CNOT, a, b))


def schoolbook_mult(g, pool, A, B, C):
    """C += A*B by shift-and-add over Toffoli partial products."""
    if len(C) < len(A) + len(B):
        raise CircuitError("product register too short")
    for i, a in enumerate(A):
        cin = pool.new()
        for j, b in enumerate(B):
            d = pool.new()
            g.append((TOFFOLI, a, b, d))
            cout = pool.new()
            _full_adder(g, d, C[i + j], cin, cout)
            pool.discard(cin)
            cin = cout
            pool.discard(d)
        for c in C[i + len(B):]:
            cout = pool.new()
            _half_adder(g, cin, c, cout)
            pool.discard(cin)
            cin = cout
        pool.discard(cin)


def schoolbook_square(g, pool, A, C):
    """C += A^2, exploiting symmetry: cross terms carry double weight."""
    if len(C) < 2 * len(A):
        raise CircuitError("square register too short")
    n = len(A)
    for i in range(n):
        cin = pool.new()
        b_idx = 2 * i
        for j in range(i, n):
            if i == j:
                a = A[i]
            else:
                a = pool.new()
                g.append((TOFFOLI, A[i], A[j], a))
            b_idx = i + j + (i != j)
            cout = pool.new()
            _full_adder(g, a, C[b_idx], cin, cout)
            pool.discard(cin)
            cin = cout
            if i == j:
                b_idx += 1
                cout = pool.new()
                _half_adder(g, cin, C[b_idx], cout)
                pool.discard(cin)
                cin = cout
            else:
                pool.discard(a)
        for c in C[b_idx + 1:]:
            cout = pool.new()
            _half_adder(g, cin, c, cout)
            pool.discard(cin)
            cin = cout
        pool.discard(cin)


def schoolbook_mult_classical(g, pool, a, B, C, trunc=None):
    """C += a*B for classical a; partial products at index >= trunc dropped."""
    limit = len(C) if trunc is None else trunc
    if trunc is None and a.bit_length() + len(B) > len(C):
        raise CircuitError("product register too short")
    i = 0
    while a and i < limit:
        if a & 1:
            cin = pool.new()
            top = 0
            for j, b in enumerate(B):
                if i + j >= limit:
                    break
                cout = pool.new()
                _full_adder(g, b, C[i + j], cin, cout)
                pool.discard(cin)
                cin = cout
                top = i + j + 1
            for c in C[top:limit]:
                cout = pool.new()
                _half_adder(g, cin, c, cout)
                pool.discard(cin)
                cin = cout
            pool.discard(cin)
        a >>= 1
        i += 1


def karatsuba_mult(g, pool, A, B, C, cutoff):
    """C += A*B splitting both factors; garbage dropped at every level."""
    if len(C) < len(A) + len(B):
        raise CircuitError("product register too short")
    if min(len(A), len(B)) <= cutoff:
        schoolbook_mult(g, pool, A, B, C)
        return
    split = min(len(A), len(B)) // 2
    A_low, A_high = A[:split], A[split:]
    B_low, B_high = B[:split], B[split:]

    C_mid = pool.new_register(len(A_high) + len(B_high) + 2)
    karatsuba_mult(g, pool, A_low, B_low, C_mid, cutoff)
    add_registers(g, pool, C_mid, C)

    C_high = pool.new_register(len(A_high) + len(B_high))
    karatsuba_mult(g, pool, A_high, B_high, C_high, cutoff)
    add_registers(g, pool, C_high, C[2 * split:])
    add_registers(g, pool, C_high, C_mid)
    pool.discard(C_high)

    A_sum = pool.new_register(len(A_high) + 1)
    B_sum = pool.new_register(len(B_high) + 1)
    copy_register(g, A_low, A_sum)
    add_registers(g, pool, A_high, A_sum)
    copy_register(g, B_low, B_sum)
    add_registers(g, pool, B_high, B_sum)

    # C_mid holds low+high; two's-complement negate, then add the middle product
    for c in C_mid:
        g.append((X, c))
    add_constant(g, pool, 1, C_mid)
    karatsuba_mult(g, pool, A_sum, B_sum, C_mid, cutoff)
    add_registers(g, pool, C_mid, C[split:])

    pool.discard(A_sum)
    pool.discard(B_sum)
    pool.discard(C_mid)


def karatsuba_square(g, pool, A, C, cutoff):
    """C += A^2 via Karatsuba splitting."""
    if len(C) < 2 * len(A):
        raise CircuitError("square register too short")
    if len(A) <= cutoff:
        schoolbook_square(g, pool, A, C)
        return
    split = len(A) // 2
    A_low, A_high = A[:split], A[split:]

    C_low = pool.new_register(2 * split)
    karatsuba_square(g, pool, A_low, C_low, cutoff)
    add_registers(g, pool, C_low, C)
    pool.discard(C_low)

    C_mid = pool.new_register(len(A))
    karatsuba_mult(g, pool, A_low, A_high, C_mid, cutoff)
    add_registers(g, pool, C_mid, C[split + 1:])
    pool.discard(C_mid)

    C_high = pool.new_register(2 * len(A_high))
    karatsuba_square(g, pool, A_high, C_high, cutoff)
    add_registers(g, pool, C_high, C[2 * split:])
    pool.discard(C_high)


def karatsuba_mult_classical(g, pool, a, B, C, cutoff):
    """C += a*B for classical a, Karatsuba split."""
    if a.bit_length() + len(B) > len(C):
        raise CircuitError("product register too short")
    if min(a.bit_length(), len(B)) <= cutoff:
        schoolbook_mult_classical(g, pool, a, B, C)
        return
    split = min(a.bit_length(), len(B)) // 2
    a_low, a_high = a & ((1 << split) - 1), a >> split
    B_low, B_high = B[:split], B[split:]

    C_mid = pool.new_register(a_high.bit_length() + len(B_high) + 2)
    karatsuba_mult_classical(g, pool, a_low, B_low, C_mid, cutoff)
    add_registers(g, pool, C_mid, C)

    C_high = pool.new_register(a_high.bit_length() + len(B_high))
    karatsuba_mult_classical(g, pool, a_high, B_high, C_high, cutoff)
    add_registers(g, pool, C_high, C[2 * split:])
    add_registers(g, pool, C_high, C_mid)
    pool.discard(C_high)

    a_sum = a_low + a_high
    B_sum = pool.new_register(len(B_high) + 1)
    copy_register(g, B_low, B_sum)
    add_registers(g, pool, B_high, B_sum)

    for c in C_mid:
        g.append((X, c))
    add_constant(g, pool, 1, C_mid)
    karatsuba_mult_classical(g, pool, a_sum, B_sum, C_mid, cutoff)
    add_registers(g, pool, C_mid, C[split:])

    pool.discard(B_sum)
    pool.discard(C_mid)


# ---------------------------------------------------------------------------
# in-place multiplication by 3

def mul3_inplace(g, pool, X_reg, width):
    """x <- 3x in place on X_reg[:width+2]; X_reg[width:width+2] must be 0.

    3x = x + (x << 1).  Carries are precomputed into ancillas from the
    original bits, the register is updated top-down (so each original bit
    is still intact when consumed as the shifted addend), and the carry
    chain is discarded as garbage.  Returns the new effective width.
    """
    if len(X_reg) < width + 2:
        raise CircuitError("register too narrow for an in-place x3")
    out_w = width + 2
    # carry[i] feeds position i; positions 0 and 1 never receive a carry
    carries = {}
    prev = None
    for i in range(2, out_w):
        c = pool.new()
        xi, xim1 = X_reg[i - 1] if i - 1 < width else None, X_reg[i - 2]
        # carry_i = maj(x_{i-1}, x_{i-2}, carry_{i-1}); absent bits are 0
        if xi is not None:
            g.append((TOFFOLI, xi, xim1, c))
            if prev is not None:
                g.append((TOFFOLI, xi, prev, c))
        if prev is not None:
            g.append((TOFFOLI, xim1, prev, c))
        carries[i] = c
        prev = c
    for i in range(out_w - 1, 0, -1):
        if i - 1 < width:
            g.append((CNOT, X_reg[i - 1], X_reg[i]))
        if i in carries:
            g.append((CNOT, carries[i], X_reg[i]))
    pool.discard(tuple(carries.values()))
    return out_w


# ---------------------------------------------------------------------------
# Montgomery reduction and the y canonicalization

def montgomery_reduce(g, pool, T, modulus, method="schoolbook", cutoff=32):
    """Reduce the product register T to T * R^-1 mod modulus, R = 2^bitlen(modulus).

    Standard REDC: m = (T mod R) * N' mod R with N' = -modulus^-1 mod R,
    then T += m*modulus, whose low bits are then guaranteed zero and are
    discarded; the remainder t = (T + m*modulus)/R < 2*modulus is finally
    canonicalized into [0, modulus) by a comparator and a conditional
    subtraction whose comparison bit is discarded as garbage.

    Returns the tuple of y-register qubits holding the canonical value.
    """
    nm = modulus.bit_length()
    R = 1 << nm
    if len(T) < 2 * nm + 1:
        raise CircuitError("T register too short for reduction")
    n_prime = (-pow(modulus, -1, R)) % R

    m_reg = pool.new_register(nm)
    schoolbook_mult_classical(g, pool, n_prime, T[:nm], m_reg, trunc=nm)
    if method == "karatsuba":
        karatsuba_mult_classical(g, pool, modulus, m_reg, T, cutoff)
    else:
        schoolbook_mult_classical(g, pool, modulus, m_reg, T)
    pool.discard(m_reg)
    pool.discard(T[:nm])  # zero by construction of m

    t = T[nm:2 * nm + 1]  # value < 2*modulus
    # comparator: adding 2^(nm+1) - modulus overflows exactly when t >= modulus
    flag = pool.new()
    wide = t + (flag,)
    add_constant(g, pool, (1 << (nm + 1)) - modulus, wide)
    g.append((X, flag))  # flag = [t < modulus]
    # conditionally add modulus back (mod 2^(nm+1)) to undo the offset
    temp = pool.new_register(nm)
    for bit_pos in range(nm):
        if (modulus >> bit_pos) & 1:
            g.append((CNOT, flag, temp[bit_pos]))
    add_registers(g, pool, temp, t)
    for bit_pos in range(nm):
        if (modulus >> bit_pos) & 1:
            g.append((CNOT, flag, temp[bit_pos]))
    pool.discard(temp)
    pool.discard(flag)
    pool.discard(t[nm])  # zero after the subtraction
    return t[:nm]


# ---------------------------------------------------------------------------
# top-level builders

def build_modsquare(N, lift_m=0, method="schoolbook", cutoff=32):
    """Circuit computing (k x)^2 * R' mod k^2 N on the x register, k = 3^lift_m.

    The x register is lifted in place (a chain of x3 stages), squared into a
    product register, and Montgomery-reduced.  The measured value is
    (k x)^2 * R' mod k^2 N with R' = R^-1 recorded in the metadata; the
    domain-restriction comparator for x < ceil(N/2) is not part of the gate
    list (noted in metadata) since the simulated prover samples the domain
    directly.
    """
    if N % 2 == 0 or N < 15:
        raise CircuitError("modulus must be an odd composite >= 15")
    if method not in ("schoolbook", "karatsuba"):
        raise CircuitError(f"unknown multiplier {method!r}")
    if method == "karatsuba" and cutoff < 8:
        raise CircuitError("karatsuba cutoff must be >= 8")
    n = N.bit_length()
    k = 3 ** lift_m
    modulus = k * k * N
    nm = modulus.bit_length()
    width = n + 2 * lift_m

    gates = []
    pool = QubitPool(gates)
    x_reg = pool.new_register(width)
    w = n
    for _ in range(lift_m):
        w = mul3_inplace(gates, pool, x_reg, w)

    T = pool.new_register(max(2 * width, 2 * nm) + 1)
    if method == "karatsuba":
        karatsuba_square(gates, pool, x_reg[:w], T, cutoff)
    else:
        schoolbook_square(gates, pool, x_reg[:w], T)
    y_reg = montgomery_reduce(gates, pool, T, modulus, method, cutoff)
    gates.append((MEASURE_Y, y_reg))

    R = 1 << nm
    circuit = Circuit(
        n_qubits=pool.peak,
        gates=gates,
        registers={"x": x_reg, "y": y_reg},
        metadata={
            "builder": method,
            "n": n,
            "N": N,
            "lift_m": lift_m,
            "k": k,
            "modulus": modulus,
            "rprime": pow(R, -1, modulus),
            "r_undo": R % modulus,
            "cutoff": cutoff if method == "karatsuba" else None,
            "comparator_excluded": True,
        },
    )
    return circuit


def build_schoolbook(n, N):
    """Shift-and-add squaring plus Montgomery reduction for an n-bit modulus."""
    if not (1 << (n - 1)) <= N < (1 << n):
        raise CircuitError(f"N={N} is not an {n}-bit modulus")
    return build_modsquare(N, lift_m=0, method="schoolbook")


def build_karatsuba(n, N, cutoff=32):
    """Recursive Karatsuba squaring plus Montgomery reduction."""
    if not (1 << (n - 1)) <= N < (1 << n):
        raise CircuitError(f"N={N} is not an {n}-bit modulus")
    return build_modsquare(N, lift_m=0, method="karatsuba", cutoff=cutoff)


def montgomery_stage(n, N, method="schoolbook", cutoff=32):
    """Standalone reduction fragment: input register T (2n bits) -> T*R' mod N."""
    if N.bit_length() != n:
        raise CircuitError("N must be an n-bit modulus")
    if math.gcd(1 << n, N) != 1:
        raise CircuitError("modulus must be odd")
    gates = []
    pool = QubitPool(gates)
    T = pool.new_register(2 * n + 1)
    y_reg = montgomery_reduce(gates, pool, T, N, method, cutoff)
    gates.append((MEASURE_Y, y_reg))
    R = 1 << n
    return Circuit(
        n_qubits=pool.peak,
        gates=gates,
        registers={"x": T[:2 * n], "y": y_reg},
        metadata={
            "builder": f"montgomery-{method}",
            "n": n,
            "N": N,
            "rprime": pow(R, -1, N),
            "r_undo": R % N,
        },
    )


def build_mul3_inplace(n):
    """Fragment mapping x -> 3x in place on an (n+2)-wide register."""
    gates = []
    pool = QubitPool(gates)
    x_reg = pool.new_register(n + 2)
    mul3_inplace(gates, pool, x_reg, n)
    gates.append((MEASURE_Y, x_reg))
    return Circuit(
        n_qubits=pool.peak,
        gates=gates,
        registers={"x": x_reg, "y": x_reg},
        metadata={"builder": "mul3", "n": n},
    )


# ---------------------------------------------------------------------------
# validation

def validate_circuit(circuit: Circuit) -> None:
    """Check index bounds, control/target distinctness, single MEASURE_Y,
    and that discarded qubits are never touched again before a re-ALLOC."""
    nq = circuit.n_qubits
    live = set()
    measured = 0
    for gate in circuit.gates:
        tag = gate[0]
        if tag == ALLOC:
            q = gate[1]
            if not 0 <= q:
                raise MalformedCircuit(f"bad qubit index {q}")
            live.add(q)
            continue
        if tag == DISCARD:
            for q in gate[1]:
                if q not in live:
                    raise MalformedCircuit(f"discard of dead qubit {q}")
                live.discard(q)
            continue
        if tag == MEASURE_Y:
            measured += 1
            qs = gate[1]
        elif tag == X:
            qs = (gate[1],)
        elif tag == CNOT:
            qs = (gate[1], gate[2])
            if gate[1] == gate[2]:
                raise MalformedCircuit("CNOT control equals target")
        elif tag == TOFFOLI:
            qs = (gate[1], gate[2], gate[3])
            if len(set(qs)) != 3:
                raise MalformedCircuit("Toffoli qubits not distinct")
        elif tag == CPHASE:
            qs = tuple(gate[1]) + (gate[2],)
            if len(set(qs)) != len(qs):
                raise MalformedCircuit("CPHASE controls overlap target")
        else:
            raise MalformedCircuit(f"unknown gate tag {tag!r}")
        for q in qs:
            if q in live:
                continue
            raise MalformedCircuit(f"use of dead or unallocated qubit {q} in {gate}")
    if measured != 1:
        raise MalformedCircuit(f"expected exactly one MEASURE_Y, found {measured}")
    del nq


# ---------------------------------------------------------------------------
# classical evaluation

def evaluate_classical(circuit: Circuit, x: int):
    """Run the circuit on basis input x; returns (y_value, garbage_bits).

    CPHASE gates are diagonal and have no effect on basis states; garbage
    bits are recorded in discard order, little-endian within each event.
    """
    x_reg = circuit.registers["x"]
    if x < 0 or x.bit_length() > len(x_reg):
        raise MalformedCircuit(f"input {x} does not fit the x register")
    # input bits are loaded when the x register's qubits are first allocated
    pending = {q: (x >> i) & 1 for i, q in enumerate(x_reg)}
    state = 0
    garbage = []
    y_val = None
    for gate in circuit.gates:
        tag = gate[0]
        if tag == TOFFOLI:
            _, a, b, t = gate
            if (state >> a) & (state >> b) & 1:
                state ^= 1 << t
        elif tag == CNOT:
            _, c, t = gate
            if (state >> c) & 1:
                state ^= 1 << t
        elif tag == X:
            state ^= 1 << gate[1]
        elif tag == ALLOC:
            q = gate[1]
            if pending.pop(q, 0):
                state |= 1 << q
            else:
                state &= ~(1 << q)
        elif tag == DISCARD:
            for q in gate[1]:
                garbage.append((state >> q) & 1)
        elif tag == MEASURE_Y:
            y_val = 0
            for i, q in enumerate(gate[1]):
                y_val |= ((state >> q) & 1) << i
        # CPHASE: no bit effect
    if y_val is None:
        raise MalformedCircuit("circuit has no MEASURE_Y")
    return y_val, garbage


def evaluate_classical_batch(circuit: Circuit, xs):
    """Vectorized evaluate_classical over many inputs.

    Returns (ys: list[int], garbage: uint8 array of shape [len(xs), n_garbage]).
    """
    x_reg = circuit.registers["x"]
    xs = list(xs)
    R = len(xs)
    state = np.zeros((R, circuit.n_qubits), dtype=np.uint8)
    pending = {q: np.fromiter(((x >> i) & 1 for x in xs), dtype=np.uint8, count=R)
               for i, q in enumerate(x_reg)}
    garbage_cols = []
    y_cols = None
    for gate in circuit.gates:
        tag = gate[0]
        if tag == TOFFOLI:
            _, a, b, t = gate
            state[:, t] ^= state[:, a] & state[:, b]
        elif tag == CNOT:
            _, c, t = gate
            state[:, t] ^= state[:, c]
        elif tag == X:
            state[:, gate[1]] ^= 1
        elif tag == ALLOC:
            q = gate[1]
            if q in pending:
                state[:, q] = pending.pop(q)
            else:
                state[:, q] = 0
        elif tag == DISCARD:
            garbage_cols.append(state[:, list(gate[1])].copy())
        elif tag == MEASURE_Y:
            y_cols = state[:, list(gate[1])].copy()
    ys = _columns_to_ints(y_cols)
    garbage = np.concatenate(garbage_cols, axis=1) if garbage_cols else np.zeros((R, 0), np.uint8)
    return ys, garbage


def _columns_to_ints(cols) -> list:
    """Little-endian bit columns [R, W] -> list of ints."""
    R, W = cols.shape
    out = [0] * R
    weights = [1 << i for i in range(W)]
    for i in range(W):
        w = weights[i]
        col = cols[:, i]
        for r in np.nonzero(col)[0]:
            out[r] += w
    return out


# ---------------------------------------------------------------------------
# two-branch evaluation (exact simulation of a claw superposition)

@dataclass
class TwoBranchRun:
    """Result of running both branches of (|x0> + |x1>) through the circuit."""

    y0: int
    y1: int
    reg0: int  # x-register value, branch 0
    reg1: int
    rel_phase: int  # +1 / -1
    records: list  # GarbageRecord per discard event
    n_errors: int


def run_two_branch(circuit: Circuit, x0: int, x1: int, error_prob: float = 0.0, rng=None,
                   error_plan=None):
    """Evaluate the circuit on both branch bitstrings with a shared error
    realization, tracking the relative phase exactly.

    With probability error_prob, each X/CNOT/Toffoli gate is followed by a
    Pauli error (uniform over X, Y, Z) on one of its qubits.  X flips the
    struck bit in both branches; Z multiplies the relative phase by
    (-1)^(b0 xor b1) of the struck qubit; Y does both.  Discards draw a
    uniform h and apply the (-1)^(h . (g0 xor g1)) rule.

    error_plan, when given, pins the realization: a dict mapping the index
    of a unitary gate (counting only X/CNOT/Toffoli) to a (qubit, pauli)
    pair applied right after that gate.
    """
    x_reg = circuit.registers["x"]
    if max(x0, x1).bit_length() > len(x_reg):
        raise MalformedCircuit("branch value does not fit the x register")
    s = [0, 0]
    pending = {q: ((x0 >> i) & 1, (x1 >> i) & 1) for i, q in enumerate(x_reg)}
    phase = 0  # phase bit: rel_phase = (-1)^phase
    records = []
    n_errors = 0
    unitary_index = -1
    y0 = y1 = None
    for gate in circuit.gates:
        tag = gate[0]
        if tag == TOFFOLI:
            _, a, b, t = gate
            if (s[0] >> a) & (s[0] >> b) & 1:
                s[0] ^= 1 << t
            if (s[1] >> a) & (s[1] >> b) & 1:
                s[1] ^= 1 << t
            touched = (a, b, t)
        elif tag == CNOT:
            _, c, t = gate
            if (s[0] >> c) & 1:
                s[0] ^= 1 << t
            if (s[1] >> c) & 1:
                s[1] ^= 1 << t
            touched = (c, t)
        elif tag == X:
            q = gate[1]
            s[0] ^= 1 << q
            s[1] ^= 1 << q
            touched = (q,)
        elif tag == ALLOC:
            q = gate[1]
            mask = ~(1 << q)
            s[0] &= mask
            s[1] &= mask
            if q in pending:
                b0, b1 = pending.pop(q)
                s[0] |= b0 << q
                s[1] |= b1 << q
            continue
        elif tag == DISCARD:
            qs = gate[1]
            g0 = g1 = 0
            for i, q in enumerate(qs):
                g0 |= ((s[0] >> q) & 1) << i
                g1 |= ((s[1] >> q) & 1) << i
            h = rng.getrandbits(len(qs)) if rng is not None else 0
            rec = GarbageRecord(h=h, g0=g0, g1=g1, width=len(qs))
            records.append(rec)
            if (h & (g0 ^ g1)).bit_count() & 1:
                phase ^= 1
            continue
        elif tag == MEASURE_Y:
            y0 = y1 = 0
            for i, q in enumerate(gate[1]):
                y0 |= ((s[0] >> q) & 1) << i
                y1 |= ((s[1] >> q) & 1) << i
            continue
        else:
            continue
        unitary_index += 1
        if error_plan is not None:
            hit = error_plan.get(unitary_index)
            if hit is None:
                continue
            q, pauli = hit
        elif error_prob and rng is not None and rng.random() < error_prob:
            q = touched[rng.randrange(len(touched))]
            pauli = ("X", "Y", "Z")[rng.randrange(3)]
        else:
            continue
        n_errors += 1
        if pauli in ("Z", "Y"):
            if ((s[0] ^ s[1]) >> q) & 1:
                phase ^= 1
        if pauli in ("X", "Y"):
            s[0] ^= 1 << q
            s[1] ^= 1 << q

    reg0 = reg1 = 0
    for i, q in enumerate(x_reg):
        reg0 |= ((s[0] >> q) & 1) << i
        reg1 |= ((s[1] >> q) & 1) << i
    return TwoBranchRun(y0=y0, y1=y1, reg0=reg0, reg1=reg1,
                        rel_phase=-1 if phase else 1, records=records, n_errors=n_errors)


def run_two_branch_batch(circuit: Circuit, x0s, x1s, error_prob, rng):
    """Vectorized two-branch runs with a clean shadow pair.

    Runs R = len(x0s) independent error realizations at once.  Alongside the
    noisy pair it evolves an error-free shadow of the same inputs and draws
    the *same* Hadamard outcomes h at each discard, producing the phase the
    verifier would reconstruct from the true claw.  Returns a dict with
    noisy/clean y values and x-register values, the prover phase bit, the
    verifier (shadow) phase bit, and per-run error counts.

    The four branch states are stacked into one array so each gate is a
    single vectorized update; error events index the noisy halves only.
    """
    x_reg = list(circuit.registers["x"])
    R = len(x0s)
    Q = circuit.n_qubits
    # qubit-major layout: row q holds that qubit's bit for all runs;
    # run columns [0:R) noisy branch 0, [R:2R) noisy branch 1, then shadows
    S = np.zeros((Q, 4 * R), np.uint8)
    pending = {}
    for i, q in enumerate(x_reg):
        b0 = np.fromiter(((x >> i) & 1 for x in x0s), np.uint8, count=R)
        b1 = np.fromiter(((x >> i) & 1 for x in x1s), np.uint8, count=R)
        pending[q] = np.concatenate([b0, b1, b0, b1])
    phase_p = np.zeros(R, np.uint8)
    phase_v = np.zeros(R, np.uint8)
    err_count = np.zeros(R, np.int32)
    y_rows = None

    for gate in circuit.gates:
        tag = gate[0]
        if tag == TOFFOLI:
            _, a, b, t = gate
            S[t] ^= S[a] & S[b]
            touched = (a, b, t)
        elif tag == CNOT:
            _, c, t = gate
            S[t] ^= S[c]
            touched = (c, t)
        elif tag == X:
            q = gate[1]
            S[q] ^= 1
            touched = (q,)
        elif tag == ALLOC:
            q = gate[1]
            if q in pending:
                S[q] = pending.pop(q)
            else:
                S[q] = 0
            continue
        elif tag == DISCARD:
            for q in gate[1]:
                h = rng.integers(0, 2, size=R, dtype=np.uint8)
                row = S[q]
                phase_p ^= h & (row[:R] ^ row[R:2 * R])
                phase_v ^= h & (row[2 * R:3 * R] ^ row[3 * R:])
            continue
        elif tag == MEASURE_Y:
            y_rows = list(gate[1])
            continue
        else:
            continue
        if error_prob > 0:
            k = rng.binomial(R, error_prob)
            if k:
                runs = rng.integers(0, R, size=k)
                qubits = rng.integers(0, len(touched), size=k)
                paulis = rng.integers(0, 3, size=k)  # 0=X 1=Y 2=Z
                for run, qi, pa in zip(runs, qubits, paulis):
                    q = touched[qi]
                    err_count[run] += 1
                    if pa >= 1:  # Y or Z
                        phase_p[run] ^= S[q, run] ^ S[q, R + run]
                    if pa <= 1:  # X or Y
                        S[q, run] ^= 1
                        S[q, R + run] ^= 1

    ys = _rows_to_ints(S, y_rows)
    regs = _rows_to_ints(S, x_reg)
    return {
        "y0": ys[:R],
        "y1": ys[R:2 * R],
        "y_clean": ys[2 * R:3 * R],
        "reg0": regs[:R],
        "reg1": regs[R:2 * R],
        "creg0": regs[2 * R:3 * R],
        "creg1": regs[3 * R:],
        "phase_prover": phase_p,
        "phase_verifier": phase_v,
        "n_errors": err_count,
    }


def _rows_to_ints(S, rows) -> list:
    """Qubit-major rows (little-endian register order) -> per-run ints."""
    total = S.shape[1]
    out = [0] * total
    for i, q in enumerate(rows):
        w = 1 << i
        for r in np.nonzero(S[q])[0]:
            out[r] += w
    return out


# ---------------------------------------------------------------------------
# resource accounting

def count_resources(circuit: Circuit) -> ResourceReport:
    """Gate totals plus a greedy qubit-disjoint layering depth.

    ALLOC/DISCARD/MEASURE_Y are bookkeeping, not gates; they do not count
    toward totals or depth.
    """
    total = 0
    toffoli = 0
    layer = {}
    depth = 0
    for gate in circuit.gates:
        tag = gate[0]
        if tag == TOFFOLI:
            qs = gate[1:4]
            toffoli += 1
        elif tag == CNOT:
            qs = gate[1:3]
        elif tag == X:
            qs = gate[1:2]
        elif tag == CPHASE:
            qs = tuple(gate[1]) + (gate[2],)
        else:
            continue
        total += 1
        lv = 1 + max((layer.get(q, 0) for q in qs))
        for q in qs:
            layer[q] = lv
        depth = max(depth, lv)
    return ResourceReport(qubits=circuit.n_qubits, total_gates=total,
                          toffoli_count=toffoli, depth=depth)


# ---------------------------------------------------------------------------
# phase-estimation circuits for x^2 mod N
#
# The multiply-to-phase approach: with the output register prepared in a
# uniform superposition, apply controlled phases exp(2*pi*i*2^(i+j+k)/N)
# for control pair (x_i, x_j) and output qubit k, then an inverse Fourier
# transform reads out x^2 mod N.  The rotation angle depends only on the
# exponent sum, the basis of the gate-merging in variant 2.

def phase_angle(exponent_sum: int, N: int) -> float:
    """2*pi*2^s/N mod 2*pi, reduced exactly in integer arithmetic first."""
    return 2.0 * math.pi * pow(2, exponent_sum, N) / N


def _phase_gate_stream(variant, n, N, m_out):
    """Yield the controlled-phase schedule; targets index the y register 0..m_out-1.

    Variant 1 visits output bits one at a time (n^3/2-type count); the
    cross terms (i < j) appear once with the doubled angle, which is again
    of the canonical 2^s form with s shifted by one.

    Variant 2 tallies, for each control-sum s, the number of coincident
    pairs into a small counter register and phases off the counter bits,
    then uncomputes.  Ancilla indices are returned via the special target
    tags ("counter", b), ("t",), ("carry", i).
    """
    if variant == 1:
        for k in range(m_out):
            for i in range(n):
                yield (CPHASE, (("x", i),), ("y", k), 2 * i + k)
                for j in range(i + 1, n):
                    yield (CPHASE, (("x", i), ("x", j)), ("y", k), i + j + k + 1)
    elif variant == 2:
        for s in range(2 * n - 1):
            pairs = [(i, s - i) for i in range(max(0, s - n + 1), (s + 1) // 2)]
            L = len(pairs).bit_length()
            compute = []
            for (i, j) in pairs:
                compute.append((TOFFOLI, ("x", i), ("x", j), ("t",)))
                compute.extend(_increment_ops(L))
                compute.append((TOFFOLI, ("x", i), ("x", j), ("t",)))
            for op in compute:
                yield op
            for b in range(L):
                for k in range(m_out):
                    yield (CPHASE, ((("counter", b)),), ("y", k), s + 1 + b + k)
            if s % 2 == 0 and s // 2 < n:
                for k in range(m_out):
                    yield (CPHASE, ((("x", s // 2)),), ("y", k), s + k)
            for op in reversed(compute):
                yield op
    else:
        raise CircuitError(f"unknown phase circuit variant {variant}")


def _increment_ops(L):
    """Counter += t as (gate, ...) ops over symbolic ancilla labels.

    Forward carries from the original counter bits, CNOT updates, then the
    carry chain is uncomputed against the updated bits, leaving the carry
    ancillas clean for reuse.
    """
    ops = []
    prev = ("t",)
    for b in range(L - 1):
        ops.append((TOFFOLI, prev, ("counter", b), ("carry", b)))
        prev = ("carry", b)
    for b in range(L - 1, -1, -1):
        src = ("t",) if b == 0 else ("carry", b - 1)
        ops.append((CNOT, src, ("counter", b)))
    for b in range(L - 2, -1, -1):
        src = ("t",) if b == 0 else ("carry", b - 1)
        ops.append((TOFFOLI, src, ("counter", b), ("carry", b)))
        ops.append((CNOT, src, ("carry", b)))
    return ops


def _phase_qubit_map(variant, n, m_out):
    """Assign concrete indices to the symbolic labels of the phase stream."""
    mapping = {}
    idx = 0
    for i in range(n):
        mapping[("x", i)] = idx
        idx += 1
    for k in range(m_out):
        mapping[("y", k)] = idx
        idx += 1
    if variant == 2:
        L_max = (n // 2 + 1).bit_length()
        mapping[("t",)] = idx
        idx += 1
        for b in range(L_max):
            mapping[("counter", b)] = idx
            idx += 1
        for b in range(L_max):
            mapping[("carry", b)] = idx
            idx += 1
    return mapping, idx


def phase_schedule(variant, n, N, extra_bits=3) -> Circuit:
    """Explicit phase circuit over a full y register, for small-n verification.

    The y register is assumed prepared in the uniform superposition and read
    out through an inverse Fourier transform; both stand outside the gate
    list (metadata "readout").  Feasible for n up to ~16.
    """
    if not (1 << (n - 1)) <= N < (1 << n):
        raise CircuitError(f"N={N} is not an {n}-bit modulus")
    m_out = n + extra_bits
    mapping, total = _phase_qubit_map(variant, n, m_out)
    gates = [(ALLOC, q) for q in range(total)]
    for op in _phase_gate_stream(variant, n, N, m_out):
        if op[0] == CPHASE:
            _, controls, target, s = op
            controls = controls if isinstance(controls[0], tuple) else (controls,)
            gates.append((CPHASE, tuple(mapping[c] for c in controls),
                          mapping[target], phase_angle(s, N)))
        else:
            gates.append((op[0],) + tuple(mapping[lbl] for lbl in op[1:]))
    x_reg = tuple(mapping[("x", i)] for i in range(n))
    y_reg = tuple(mapping[("y", k)] for k in range(m_out))
    gates.append((MEASURE_Y, y_reg))
    return Circuit(
        n_qubits=total,
        gates=gates,
        registers={"x": x_reg, "y": y_reg},
        metadata={"builder": f"phase{variant}", "n": n, "N": N, "m_out": m_out,
                  "readout": "uniform y register in, inverse QFT out"},
    )


def phase_circuit_resources(variant, n, extra_bits=3) -> ResourceReport:
    """Resource count of the phase circuits without materializing gate lists.

    Variant 1 reuses a single output qubit, measured and reset once per
    output bit, so its qubit count is n + 1; the per-bit Hadamards and the
    classically conditioned readout rotations fall outside the counted gate
    set.  Variant 2 keeps the full output register plus the pair counter.
    """
    if n < 8:
        raise CircuitError("resource estimates are defined for n >= 8")
    N = (1 << n) - 1  # counts do not depend on the modulus value
    m_out = n + extra_bits
    if variant == 1:
        qubits = n + 1
    else:
        L_max = (n // 2 + 1).bit_length()
        qubits = n + m_out + 1 + 2 * L_max
    total = 0
    toffoli = 0
    layer = {}
    depth = 0
    for op in _phase_gate_stream(variant, n, N, m_out):
        tag = op[0]
        if tag == CPHASE:
            controls, target = op[1], op[2]
            controls = controls if isinstance(controls[0], tuple) else (controls,)
            qs = tuple(controls) + (("y", 0) if variant == 1 else target,)
        elif tag == TOFFOLI:
            qs = op[1:]
            toffoli += 1
        else:
            qs = op[1:]
        total += 1
        lv = 1 + max((layer.get(q, 0) for q in qs))
        for q in qs:
            layer[q] = lv
        depth = max(depth, lv)
    return ResourceReport(qubits=qubits, total_gates=total,
                          toffoli_count=toffoli, depth=depth)


# ---------------------------------------------------------------------------
# serialization: one gate per line

def circuit_to_text(circuit: Circuit) -> str:
    lines = []
    meta = circuit.metadata
    header_keys = [k for k in ("n", "N", "builder", "rprime", "lift_m", "modulus") if meta.get(k) is not None]
    for k in header_keys:
        lines.append(f"# {k}={meta[k]}")
    lines.append(f"# qubits={circuit.n_qubits}")
    for name, reg in sorted(circuit.registers.items()):
        lines.append(f"# reg {name}=" + ",".join(str(q) for q in reg))
    for gate in circuit.gates:
        tag = gate[0]
        if tag == CPHASE:
            ctrl = ",".join(str(q) for q in gate[1])
            lines.append(f"CPHASE {gate[3]!r} ctrl={ctrl} tgt={gate[2]}")
        elif tag in (DISCARD, MEASURE_Y):
            lines.append(tag + " " + " ".join(str(q) for q in gate[1]))
        else:
            lines.append(tag + " " + " ".join(str(q) for q in gate[1:]))
    return "\n".join(lines) + "\n"


def circuit_from_text(text: str) -> Circuit:
    gates = []
    registers = {}
    metadata = {}
    n_qubits = 0
    for line in text.splitlines():
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            body = line[1:].strip()
            if body.startswith("reg "):
                name, _, vals = body[4:].partition("=")
                registers[name] = tuple(int(v) for v in vals.split(",") if v)
            elif "=" in body:
                key, _, val = body.partition("=")
                if key == "qubits":
                    n_qubits = int(val)
                else:
                    try:
                        metadata[key] = int(val)
                    except ValueError:
                        metadata[key] = val
            continue
        parts = line.split()
        tag = parts[0]
        if tag == CPHASE:
            angle = float(parts[1])
            kv = dict(p.split("=", 1) for p in parts[2:])
            controls = tuple(int(v) for v in kv["ctrl"].split(",") if v)
            gates.append((CPHASE, controls, int(kv["tgt"]), angle))
        elif tag in (DISCARD, MEASURE_Y):
            gates.append((tag, tuple(int(v) for v in parts[1:])))
        elif tag in (X, ALLOC):
            gates.append((tag, int(parts[1])))
        elif tag == CNOT:
            gates.append((CNOT, int(parts[1]), int(parts[2])))
        elif tag == TOFFOLI:
            gates.append((TOFFOLI, int(parts[1]), int(parts[2]), int(parts[3])))
        else:
            raise MalformedCircuit(f"unknown line {line!r}")
    return Circuit(n_qubits=n_qubits, gates=gates, registers=registers, metadata=metadata)
