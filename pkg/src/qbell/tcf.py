"""Trapdoor claw-free function families and their number-theory support.

Two constructions are provided. The first is Rabin's squaring function
x^2 mod N over a Blum modulus N = p*q (p, q = 3 mod 4), with the domain
restricted to [0, ceil(N/2)) so that the trivial collisions (x, N-x) are
removed and every image has at most one colliding pair. The second is a
matrix Diffie-Hellman family over a prime-order subgroup: f_b(x) =
g^(M(x + b*s)) evaluated elementwise, invertible with the trapdoor (M, s)
because the vector entries are small enough for brute-force discrete logs.

Finding a claw for the Rabin family factors N (gcd of the root sums);
finding one for the DDH family reveals the secret shift s.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, replace
from fractions import Fraction
from itertools import product
from math import gcd


class DomainError(ValueError):
    """Input outside the function's domain or parameter range."""


class NotAClaw(ValueError):
    """Alleged claw yields no nontrivial factor."""


class NotInImage(ValueError):
    """Value has no preimage under the keyed function."""


class TooLarge(ValueError):
    """Exact enumeration would exceed the budget."""


ENUMERATION_BUDGET = 10 ** 6
MILLER_RABIN_ROUNDS = 40
MIN_MODULUS_BITS = 6


# ---------------------------------------------------------------------------
# number-theory helpers

_SMALL_PRIMES = (2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37)


def is_probable_prime(n: int, rng: random.Random, rounds: int = MILLER_RABIN_ROUNDS) -> bool:
    """Miller-Rabin with `rounds` random bases."""
    if n < 2:
        return False
    for p in _SMALL_PRIMES:
        if n == p:
            return True
        if n % p == 0:
            return False
    d = n - 1
    r = 0
    while d % 2 == 0:
        d //= 2
        r += 1
    for _ in range(rounds):
        a = rng.randrange(2, n - 1)
        x = pow(a, d, n)
        if x == 1 or x == n - 1:
            continue
        for _ in range(r - 1):
            x = x * x % n
            if x == n - 1:
                break
        else:
            return False
    return True


def gen_prime(bits: int, rng: random.Random, residue_3mod4: bool = False) -> int:
    """Random prime of exactly `bits` bits, optionally forced to 3 mod 4."""
    if bits < 2:
        raise DomainError(f"cannot sample a {bits}-bit prime")
    while True:
        c = rng.getrandbits(bits) | (1 << (bits - 1)) | 1
        if residue_3mod4:
            c |= 3
        if c.bit_length() != bits:
            continue
        if is_probable_prime(c, rng):
            return c


def sqrt_mod_blum_prime(y: int, p: int):
    """Square root of y mod p for p = 3 mod 4, or None if y is a non-residue."""
    a = pow(y % p, (p + 1) // 4, p)
    if a * a % p == y % p:
        return a
    return None


def matrix_inv_mod(mat, q: int):
    """Inverse of a square matrix over Z_q (q prime), or None if singular."""
    k = len(mat)
    aug = [list(row) + [int(i == j) for j in range(k)] for i, row in enumerate(mat)]
    for col in range(k):
        pivot = next((r for r in range(col, k) if aug[r][col] % q != 0), None)
        if pivot is None:
            return None
        aug[col], aug[pivot] = aug[pivot], aug[col]
        inv = pow(aug[col][col], -1, q)
        aug[col] = [v * inv % q for v in aug[col]]
        for r in range(k):
            if r != col and aug[r][col] % q != 0:
                factor = aug[r][col]
                aug[r] = [(v - factor * w) % q for v, w in zip(aug[r], aug[col])]
    return tuple(tuple(row[k:]) for row in aug)


# ---------------------------------------------------------------------------
# key material

@dataclass(frozen=True)
class SecurityParams:
    """Modulus bit length and the seed all key randomness derives from."""

    n_bits: int
    rng_seed: int

    def __post_init__(self):
        if self.n_bits < MIN_MODULUS_BITS:
            raise DomainError(f"n_bits must be >= {MIN_MODULUS_BITS}, got {self.n_bits}")


@dataclass(frozen=True)
class RabinKeyPair:
    """Public modulus N = p*q with the factorization as trapdoor."""

    N: int
    p: int | None = None
    q: int | None = None

    @property
    def family(self) -> str:
        return "rabin"

    @property
    def has_trapdoor(self) -> bool:
        return self.p is not None and self.q is not None

    def public(self) -> "RabinKeyPair":
        return RabinKeyPair(N=self.N)


@dataclass(frozen=True)
class DdhKeyPair:
    """Matrix DDH key over a prime-order-q subgroup of Z_P^*.

    gM[i][j] = g^M[i][j]; gMs[i] = g^((M s)[i]).  The secrets M and s are
    None in the published form.
    """

    P: int
    q: int
    g: int
    k: int
    m: int
    gM: tuple
    gMs: tuple
    M: tuple | None = None
    s: tuple | None = None

    @property
    def family(self) -> str:
        return "ddh"

    @property
    def has_trapdoor(self) -> bool:
        return self.M is not None and self.s is not None

    def public(self) -> "DdhKeyPair":
        return replace(self, M=None, s=None)


@dataclass(frozen=True)
class Claw:
    """Colliding pair x0 != x1 with f(x0) = f(x1) = y."""

    x0: object
    x1: object
    y: object

    def __post_init__(self):
        if self.x0 == self.x1:
            raise DomainError("a claw needs two distinct preimages")


# ---------------------------------------------------------------------------
# Rabin family

def rabin_domain_size(N: int) -> int:
    """Domain is [0, ceil(N/2)); N is odd so this is (N+1)//2."""
    return (N + 1) // 2


def rabin_gen(params: SecurityParams) -> RabinKeyPair:
    """Sample a Blum modulus of params.n_bits (+/- 1) bits.

    Primes are drawn at ceil(n/2) and floor(n/2) bits.  At tiny sizes a bit
    pool can contain a single 3-mod-4 prime (e.g. only 7 at 3 bits), which
    would force p == q forever; after repeated collisions the p pool is
    widened by one bit, moving N to n_bits + 1 which the contract allows.
    """
    rng = random.Random(params.rng_seed)
    p_bits = (params.n_bits + 1) // 2
    q_bits = params.n_bits // 2
    collisions = 0
    while True:
        p = gen_prime(p_bits, rng, residue_3mod4=True)
        q = gen_prime(q_bits, rng, residue_3mod4=True)
        if p == q:
            collisions += 1
            if collisions >= 25:
                p_bits += 1
                collisions = 0
            continue
        N = p * q
        if abs(N.bit_length() - params.n_bits) <= 1:
            return RabinKeyPair(N=N, p=max(p, q), q=min(p, q))


def rabin_eval(N: int, x: int) -> int:
    """x^2 mod N on the restricted domain [0, ceil(N/2))."""
    if not (0 <= x < rabin_domain_size(N)):
        raise DomainError(f"x={x} outside [0, {rabin_domain_size(N)}) for N={N}")
    return x * x % N


def rabin_invert(keys: RabinKeyPair, y: int) -> set:
    """All square roots of y mod N inside the restricted domain.

    Size 2 for a quadratic residue coprime to N (a claw), size 1 in the
    degenerate gcd cases, empty when y is not an image.  Every candidate is
    verified by squaring before it is returned.
    """
    if not keys.has_trapdoor:
        raise DomainError("inversion requires the trapdoor (p, q)")
    N, p, q = keys.N, keys.p, keys.q
    if not (0 <= y < N):
        raise DomainError(f"y={y} outside [0, {N})")
    a = sqrt_mod_blum_prime(y, p)
    b = sqrt_mod_blum_prime(y, q)
    if a is None or b is None:
        return set()
    # CRT basis: cp = 1 mod p, 0 mod q; cq = 0 mod p, 1 mod q
    cp = q * pow(q, -1, p) % N
    cq = p * pow(p, -1, q) % N
    bound = rabin_domain_size(N)
    roots = set()
    for sa in (a, p - a):
        for sb in (b, q - b):
            x = (sa * cp + sb * cq) % N
            if x < bound and x * x % N == y:
                roots.add(x)
    return roots


def factor_from_claw(N: int, claw: Claw):
    """Recover (p, q) from a claw; gcd(x0 + x1, N) or gcd(|x0 - x1|, N) is a factor."""
    for candidate in (claw.x0 + claw.x1, abs(claw.x0 - claw.x1)):
        g = gcd(candidate, N)
        if 1 < g < N:
            return (max(g, N // g), min(g, N // g))
    raise NotAClaw(f"gcds of {claw.x0}+/-{claw.x1} with {N} are trivial")


# ---------------------------------------------------------------------------
# DDH family

def _find_subgroup(group_bits: int, rng: random.Random):
    """Prime q of group_bits bits, prime P = c*q + 1, and a generator of order q."""
    while True:
        q = gen_prime(group_bits, rng)
        for c in range(2, 64 * group_bits, 2):
            P = c * q + 1
            if is_probable_prime(P, rng):
                while True:
                    h = rng.randrange(2, P - 1)
                    g = pow(h, c, P)
                    if g != 1:
                        return P, q, g


def ddh_m_for_dimension(k: int) -> int:
    """Smallest power of two >= k^2."""
    target = k * k
    m = 1
    while m < target:
        m *= 2
    return m


def ddh_gen(k: int, group_bits: int, seed: int) -> DdhKeyPair:
    """Sample a DDH key: subgroup, invertible M in Z_q^{k x k}, secret bits s."""
    if k < 1:
        raise DomainError(f"dimension k must be >= 1, got {k}")
    m = ddh_m_for_dimension(k)
    if group_bits < m.bit_length() + 1:
        raise DomainError(f"group_bits={group_bits} too small for m={m}")
    rng = random.Random(seed)
    P, q, g = _find_subgroup(group_bits, rng)
    while True:
        M = tuple(tuple(rng.randrange(q) for _ in range(k)) for _ in range(k))
        if matrix_inv_mod(M, q) is not None:
            break
    s = tuple(rng.randrange(2) for _ in range(k))
    Ms = tuple(sum(M[i][j] * s[j] for j in range(k)) % q for i in range(k))
    gM = tuple(tuple(pow(g, M[i][j], P) for j in range(k)) for i in range(k))
    gMs = tuple(pow(g, Ms[i], P) for i in range(k))
    return DdhKeyPair(P=P, q=q, g=g, k=k, m=m, gM=gM, gMs=gMs, M=M, s=s)


def ddh_eval(key: DdhKeyPair, b: int, x) -> tuple:
    """f_b(x) = g^(Mx) * (g^(Ms))^b, elementwise, from public data only."""
    if b not in (0, 1):
        raise DomainError(f"branch bit must be 0 or 1, got {b}")
    if len(x) != key.k or any(not (0 <= xi < key.m) for xi in x):
        raise DomainError(f"x={x} outside Z_{key.m}^{key.k}")
    out = []
    for i in range(key.k):
        acc = 1
        for j in range(key.k):
            acc = acc * pow(key.gM[i][j], x[j], key.P) % key.P
        if b:
            acc = acc * key.gMs[i] % key.P
        out.append(acc)
    return tuple(out)


def _dlog_small(key: DdhKeyPair, z: int):
    """Brute-force discrete log of z base g over [0, m]; None if absent.

    The inclusive upper end m catches images of f_1 whose shifted entries
    reach m before s is subtracted.
    """
    acc = 1
    for e in range(key.m + 1):
        if acc == z:
            return e
        acc = acc * key.g % key.P
    return None


def ddh_invert(key: DdhKeyPair, y):
    """Trapdoor inversion: combine M^-1 rows in the exponent, brute-force logs.

    Returns a Claw of ((0, x0), (1, x1)) when both branches invert, a single
    (b, x) when only one does, and raises NotInImage otherwise.
    """
    if not key.has_trapdoor:
        raise DomainError("inversion requires the trapdoor (M, s)")
    if len(y) != key.k:
        raise DomainError(f"image vector must have length {key.k}")
    Minv = matrix_inv_mod(key.M, key.q)
    v = []
    for i in range(key.k):
        z = 1
        for j in range(key.k):
            z = z * pow(y[j], Minv[i][j], key.P) % key.P
        e = _dlog_small(key, z)
        if e is None:
            raise NotInImage(f"component {i} has no discrete log in [0, {key.m}]")
        v.append(e)
    x0 = tuple(v)
    x1 = tuple(vi - si for vi, si in zip(v, key.s))
    x0_ok = all(0 <= xi < key.m for xi in x0)
    x1_ok = all(0 <= xi < key.m for xi in x1)
    if x0_ok and ddh_eval(key, 0, x0) != tuple(y):
        x0_ok = False
    if x1_ok and ddh_eval(key, 1, x1) != tuple(y):
        x1_ok = False
    if x0_ok and x1_ok:
        return Claw(x0=(0, x0), x1=(1, x1), y=tuple(y))
    if x0_ok:
        return (0, x0)
    if x1_ok:
        return (1, x1)
    raise NotInImage("no branch yields a valid preimage")


def ddh_secret_from_claw(claw: Claw) -> tuple:
    """Recover s = x0 - x1 from a claw; entries must come out as bits."""
    (b0, v0), (b1, v1) = claw.x0, claw.x1
    if (b0, b1) != (0, 1):
        raise NotAClaw("claw must pair the b=0 and b=1 branches")
    s = tuple(a - b for a, b in zip(v0, v1))
    if any(si not in (0, 1) for si in s):
        raise NotAClaw(f"difference {s} is not a bit vector")
    return s


def unpaired_fraction(k: int, m: int, s) -> Fraction:
    """Exact fraction of domain elements with no colliding partner.

    Counted by enumeration over both branches of {0,1} x Z_m^k: a (0, x)
    input is orphaned when x - s leaves the box, a (1, x) input when x + s
    does.  The result is tested against measurement, not assumed equal to
    any closed form.
    """
    if m < 2:
        raise DomainError(f"m must be >= 2, got {m}")
    if len(s) != k:
        raise DomainError("secret length must equal k")
    if m ** k > ENUMERATION_BUDGET:
        raise TooLarge(f"m^k = {m ** k} exceeds {ENUMERATION_BUDGET}")
    orphans = 0
    for x in product(range(m), repeat=k):
        if any(si == 1 and xi - 1 < 0 for xi, si in zip(x, s)):
            orphans += 1  # (0, x) has no partner
        if any(si == 1 and xi + 1 >= m for xi, si in zip(x, s)):
            orphans += 1  # (1, x) has no partner
    return Fraction(orphans, 2 * m ** k)


# ---------------------------------------------------------------------------
# family-generic helpers

def evaluate(keys, x):
    """Public evaluation for either family; x is (b, vec) for DDH."""
    if isinstance(keys, RabinKeyPair):
        return rabin_eval(keys.N, x)
    b, vec = x
    return ddh_eval(keys, b, vec)


def invert(keys, y):
    """Trapdoor inversion normalized to a set of preimages (possibly empty)."""
    if isinstance(keys, RabinKeyPair):
        return rabin_invert(keys, y)
    try:
        result = ddh_invert(keys, y)
    except NotInImage:
        return set()
    if isinstance(result, Claw):
        return {result.x0, result.x1}
    return {result}


# ---------------------------------------------------------------------------
# serialization: canonical JSON, big integers as decimal strings

def key_to_json(keys, include_secret: bool = True) -> str:
    if isinstance(keys, RabinKeyPair):
        doc = {"family": "rabin", "N": str(keys.N)}
        if include_secret and keys.has_trapdoor:
            doc["p"] = str(keys.p)
            doc["q"] = str(keys.q)
    elif isinstance(keys, DdhKeyPair):
        doc = {
            "family": "ddh",
            "P": str(keys.P),
            "q": str(keys.q),
            "g": str(keys.g),
            "k": keys.k,
            "m": keys.m,
            "gM": [[str(v) for v in row] for row in keys.gM],
            "gMs": [str(v) for v in keys.gMs],
        }
        if include_secret and keys.has_trapdoor:
            doc["M"] = [[str(v) for v in row] for row in keys.M]
            doc["s"] = list(keys.s)
    else:
        raise TypeError(f"unknown key type {type(keys)!r}")
    return json.dumps(doc, sort_keys=True, separators=(",", ":"))


def key_from_json(text: str):
    doc = json.loads(text)
    family = doc.get("family")
    if family == "rabin":
        return RabinKeyPair(
            N=int(doc["N"]),
            p=int(doc["p"]) if "p" in doc else None,
            q=int(doc["q"]) if "q" in doc else None,
        )
    if family == "ddh":
        return DdhKeyPair(
            P=int(doc["P"]),
            q=int(doc["q"]),
            g=int(doc["g"]),
            k=int(doc["k"]),
            m=int(doc["m"]),
            gM=tuple(tuple(int(v) for v in row) for row in doc["gM"]),
            gMs=tuple(int(v) for v in doc["gMs"]),
            M=tuple(tuple(int(v) for v in row) for row in doc["M"]) if "M" in doc else None,
            s=tuple(int(v) for v in doc["s"]) if "s" in doc else None,
        )
    raise DomainError(f"unknown key family {family!r}")
