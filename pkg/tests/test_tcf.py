"""Tests for the trapdoor claw-free families."""

import random
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qbell import tcf

from helpers import blum_semiprimes

KEY77 = tcf.RabinKeyPair(N=77, p=11, q=7)


class TestRabinEval:
    def test_worked_square(self):
        assert tcf.rabin_eval(77, 9) == 4  # 81 - 77

    def test_zero(self):
        assert tcf.rabin_eval(77, 0) == 0

    def test_out_of_domain(self):
        with pytest.raises(tcf.DomainError):
            tcf.rabin_eval(77, 40)
        with pytest.raises(tcf.DomainError):
            tcf.rabin_eval(77, -1)

    def test_domain_boundary(self):
        # ceil(77/2) = 39, so 38 is the largest valid input
        assert tcf.rabin_eval(77, 38) == 38 * 38 % 77
        with pytest.raises(tcf.DomainError):
            tcf.rabin_eval(77, 39)


class TestRabinInvert:
    def test_claw_of_four(self):
        # roots of 4 mod 77 are {2, 9, 68, 75}; only 2 and 9 are below 38.5
        assert tcf.rabin_invert(KEY77, 4) == {2, 9}

    def test_nonresidue(self):
        # 5 is a quadratic non-residue mod 7
        assert tcf.rabin_invert(KEY77, 5) == set()

    def test_zero_single_root(self):
        assert tcf.rabin_invert(KEY77, 0) == {0}

    def test_matches_enumeration_for_all_small_blum_moduli(self):
        for N, p, q in blum_semiprimes(10000):
            keys = tcf.RabinKeyPair(N=N, p=p, q=q)
            bound = tcf.rabin_domain_size(N)
            by_image = {}
            for x in range(bound):
                by_image.setdefault(x * x % N, set()).add(x)
            for y in range(N):
                assert tcf.rabin_invert(keys, y) == by_image.get(y, set()), (N, y)


class TestFactorFromClaw:
    def test_worked_claw(self):
        assert tcf.factor_from_claw(77, tcf.Claw(2, 9, 4)) == (11, 7)

    def test_small_modulus(self):
        # 2^2 = 4 and 5^2 = 25 = 4 mod 21
        assert tcf.factor_from_claw(21, tcf.Claw(2, 5, 4)) == (7, 3)

    def test_trivial_partner_rejected(self):
        # 75 = -2 mod 77: gcd(77, 77) and gcd(73, 77) are both trivial
        with pytest.raises(tcf.NotAClaw):
            tcf.factor_from_claw(77, tcf.Claw(2, 75, 4))

    def test_every_inverted_claw_factors(self):
        keys = tcf.rabin_gen(tcf.SecurityParams(n_bits=24, rng_seed=4))
        rng = random.Random(0)
        for _ in range(50):
            x = rng.randrange(tcf.rabin_domain_size(keys.N))
            roots = tcf.rabin_invert(keys, tcf.rabin_eval(keys.N, x))
            if len(roots) == 2:
                a, b = sorted(roots)
                p, q = tcf.factor_from_claw(keys.N, tcf.Claw(a, b, x * x % keys.N))
                assert p * q == keys.N and p not in (1, keys.N)


class TestRabinGen:
    def test_invariants(self):
        keys = tcf.rabin_gen(tcf.SecurityParams(n_bits=32, rng_seed=1))
        assert keys.N == keys.p * keys.q
        assert keys.p != keys.q
        assert keys.p % 4 == 3 and keys.q % 4 == 3
        rng = random.Random(0)
        assert tcf.is_probable_prime(keys.p, rng)
        assert tcf.is_probable_prime(keys.q, rng)
        assert abs(keys.N.bit_length() - 32) <= 1

    def test_smallest_size(self):
        keys = tcf.rabin_gen(tcf.SecurityParams(n_bits=6, rng_seed=0))
        assert keys.p % 4 == 3 and keys.q % 4 == 3
        assert abs(keys.N.bit_length() - 6) <= 1

    def test_precondition(self):
        with pytest.raises(tcf.DomainError):
            tcf.SecurityParams(n_bits=4, rng_seed=0)

    def test_deterministic_given_seed(self):
        a = tcf.rabin_gen(tcf.SecurityParams(n_bits=40, rng_seed=123))
        b = tcf.rabin_gen(tcf.SecurityParams(n_bits=40, rng_seed=123))
        assert a == b

    def test_round_trip_inversion(self):
        keys = tcf.rabin_gen(tcf.SecurityParams(n_bits=40, rng_seed=7))
        rng = random.Random(1)
        for _ in range(200):
            x = rng.randrange(tcf.rabin_domain_size(keys.N))
            y = tcf.rabin_eval(keys.N, x)
            assert x in tcf.rabin_invert(keys, y)


# the worked 2x2 key over the subgroup of order 11 in Z_23
DDH_KEY = tcf.DdhKeyPair(
    P=23, q=11, g=2, k=2, m=4,
    gM=((2, 4), (8, 16)),
    gMs=(2, 8),
    M=((1, 2), (3, 4)), s=(1, 0),
)


class TestDdh:
    def test_eval_worked(self):
        # M x = (3, 7) for x = (1, 1): outputs (2^3, 2^7) = (8, 13)
        assert tcf.ddh_eval(DDH_KEY, 0, (1, 1)) == (8, 13)

    def test_eval_identity(self):
        assert tcf.ddh_eval(DDH_KEY, 0, (0, 0)) == (1, 1)

    def test_claw_pair(self):
        assert tcf.ddh_eval(DDH_KEY, 1, (0, 1)) == tcf.ddh_eval(DDH_KEY, 0, (1, 1))

    def test_eval_uses_public_data_only(self):
        pub = DDH_KEY.public()
        assert tcf.ddh_eval(pub, 0, (1, 1)) == (8, 13)

    def test_eval_domain_check(self):
        with pytest.raises(tcf.DomainError):
            tcf.ddh_eval(DDH_KEY, 0, (4, 0))

    def test_invert_claw(self):
        claw = tcf.ddh_invert(DDH_KEY, (8, 13))
        assert isinstance(claw, tcf.Claw)
        assert claw.x0 == (0, (1, 1)) and claw.x1 == (1, (0, 1))

    def test_invert_boundary_single(self):
        # x0 = (0,0) has x1 = -s out of range
        assert tcf.ddh_invert(DDH_KEY, (1, 1)) == (0, (0, 0))

    def test_invert_not_in_image(self):
        # 5 generates a coset outside <g> = subgroup of order 11
        with pytest.raises(tcf.NotInImage):
            tcf.ddh_invert(DDH_KEY, (5, 1))

    def test_secret_from_claw(self):
        claw = tcf.ddh_invert(DDH_KEY, (8, 13))
        assert tcf.ddh_secret_from_claw(claw) == DDH_KEY.s

    def test_gen_invariants(self):
        key = tcf.ddh_gen(2, 10, seed=5)
        assert key.m == 4
        assert pow(key.g, key.q, key.P) == 1 and key.g != 1
        assert tcf.matrix_inv_mod(key.M, key.q) is not None
        for i in range(key.k):
            for j in range(key.k):
                assert key.gM[i][j] == pow(key.g, key.M[i][j], key.P)

    def test_gen_precondition(self):
        with pytest.raises(tcf.DomainError):
            tcf.ddh_gen(0, 10, seed=1)

    def test_round_trip(self):
        key = tcf.ddh_gen(2, 10, seed=9)
        rng = random.Random(2)
        for _ in range(200):
            x = (rng.randrange(2), tuple(rng.randrange(key.m) for _ in range(key.k)))
            y = tcf.evaluate(key, x)
            assert x in tcf.invert(key, y)

    def test_invert_matches_brute_force(self):
        for seed in (1, 2, 3):
            key = tcf.ddh_gen(2, 7, seed=seed)
            if key.P > 100:
                continue
            table = {}
            for b in (0, 1):
                for x0 in range(key.m):
                    for x1 in range(key.m):
                        y = tcf.ddh_eval(key, b, (x0, x1))
                        table.setdefault(y, set()).add((b, (x0, x1)))
            for y, pre in table.items():
                assert tcf.invert(key, y) == pre

    def test_claw_fraction_matches_enumeration(self):
        key = tcf.ddh_gen(2, 10, seed=11)
        total = 0
        unpaired = 0
        for b in (0, 1):
            for x0 in range(key.m):
                for x1 in range(key.m):
                    total += 1
                    y = tcf.ddh_eval(key, b, (x0, x1))
                    if len(tcf.invert(key, y)) != 2:
                        unpaired += 1
        assert Fraction(unpaired, total) == tcf.unpaired_fraction(key.k, key.m, key.s)


class TestUnpairedFraction:
    def test_single_coordinate(self):
        assert tcf.unpaired_fraction(1, 4, (1,)) == Fraction(1, 4)

    def test_zero_secret(self):
        assert tcf.unpaired_fraction(2, 4, (0, 0)) == 0

    def test_tiny_range(self):
        assert tcf.unpaired_fraction(1, 2, (1,)) == Fraction(1, 2)

    def test_budget(self):
        with pytest.raises(tcf.TooLarge):
            tcf.unpaired_fraction(21, 2, (1,) * 21)

    def test_closed_form_exponent_is_hamming_weight(self):
        # enumerated truth: the orphan fraction depends on hw(s), not on k
        for k, s in ((3, (1, 0, 0)), (3, (1, 1, 0)), (3, (1, 1, 1))):
            got = tcf.unpaired_fraction(k, 4, s)
            hw = sum(s)
            assert got == 1 - Fraction(3, 4) ** hw


class TestSerialization:
    def test_rabin_round_trip(self):
        keys = tcf.rabin_gen(tcf.SecurityParams(n_bits=40, rng_seed=3))
        assert tcf.key_from_json(tcf.key_to_json(keys)) == keys

    def test_rabin_public_form_omits_secrets(self):
        text = tcf.key_to_json(KEY77, include_secret=False)
        assert '"p"' not in text and '"q"' not in text
        pub = tcf.key_from_json(text)
        assert pub == KEY77.public() and not pub.has_trapdoor

    def test_ddh_round_trip(self):
        key = tcf.ddh_gen(3, 12, seed=2)
        assert tcf.key_from_json(tcf.key_to_json(key)) == key
        pub = tcf.key_from_json(tcf.key_to_json(key, include_secret=False))
        assert pub == key.public()

    def test_big_integers_as_decimal_strings(self):
        keys = tcf.rabin_gen(tcf.SecurityParams(n_bits=96, rng_seed=0))
        import json
        doc = json.loads(tcf.key_to_json(keys))
        assert doc["N"] == str(keys.N) and isinstance(doc["N"], str)


@given(st.integers(min_value=0, max_value=38))
@settings(max_examples=40, deadline=None)
def test_eval_invert_round_trip_property(x):
    y = tcf.rabin_eval(77, x)
    assert x in tcf.rabin_invert(KEY77, y)


def test_claw_requires_distinct_preimages():
    with pytest.raises(tcf.DomainError):
        tcf.Claw(x0=3, x1=3, y=9)
