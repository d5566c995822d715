"""Ballot encryption tests: hand-checkable exponents on the small group,
exhaustive tally equivalence for tiny vote matrices, and roundtrip oracles."""
import itertools
import random

import pytest

from fedjudge.errors import ConfigError, InputError, ProtocolError
from fedjudge.votecrypt import (
    EncryptedBallot,
    GroupParams,
    ballot_from_bytes,
    ballot_to_bytes,
    combine_decrypt,
    combine_pks,
    discrete_log_small,
    encrypt_vote,
    hom_add,
    keygen,
    partial_decrypt,
)

SMALL = GroupParams.small()


def _tally_column(params, pk_group, keys, votes, rand):
    """Encrypt one vote per client, sum homomorphically, jointly decrypt."""
    ballots = [encrypt_vote(params, pk_group, v, rand.randrange(params.q))
               for v in votes]
    tally = ballots[0]
    for b in ballots[1:]:
        tally = hom_add(params, tally, b)
    shares = [partial_decrypt(params, k.sk, tally) for k in keys]
    point = combine_decrypt(params, tally, shares, len(keys))
    return discrete_log_small(params, point, len(keys))


def _matrix_tallies(params, votes_by_client, rand):
    """Decrypted column sums of a full n x n vote matrix."""
    n = len(votes_by_client)
    keys = [keygen(params, 1000 + i) for i in range(n)]
    pk_group = combine_pks(params, [k.pk for k in keys])
    return [
        _tally_column(params, pk_group, keys,
                      [votes_by_client[i][j] for i in range(n)], rand)
        for j in range(n)
    ]


# ---------------------------------------------------------------------------
# group parameters
# ---------------------------------------------------------------------------

def test_small_group_is_well_formed():
    assert SMALL.p == 2 * SMALL.q + 1
    assert pow(SMALL.g, SMALL.q, SMALL.p) == 1  # g has order q
    assert SMALL.g != 1


def test_group_params_validation():
    with pytest.raises(ConfigError):
        GroupParams(p=2040, q=1019, g=49)
    with pytest.raises(ConfigError):
        GroupParams(p=2039, q=1019, g=1)
    with pytest.raises(ConfigError):
        GroupParams.by_name("tiny")


def test_modp_group_loads():
    big = GroupParams.by_name("modp_1536")
    assert big.p.bit_length() == 1536
    assert big.p == 2 * big.q + 1


# ---------------------------------------------------------------------------
# keygen / combine_pks
# ---------------------------------------------------------------------------

def test_keygen_deterministic():
    assert keygen(SMALL, 5) == keygen(SMALL, 5)
    assert keygen(SMALL, 5) != keygen(SMALL, 6)


def test_keygen_recomputation_oracle():
    for seed in range(20):
        pair = keygen(SMALL, seed)
        assert 1 <= pair.sk < SMALL.q
        assert pair.pk == pow(SMALL.g, pair.sk, SMALL.p)


def test_unit_secret_key_gives_generator():
    # sk = 1 means pk must be g itself.
    assert pow(SMALL.g, 1, SMALL.p) == SMALL.g


def test_combine_pks_exponent_addition():
    g = SMALL.g
    assert combine_pks(SMALL, [g]) == g
    two = pow(g, 2, SMALL.p)
    three = pow(g, 3, SMALL.p)
    assert combine_pks(SMALL, [two, three]) == pow(g, 5, SMALL.p)
    assert combine_pks(SMALL, [three, two]) == combine_pks(SMALL, [two, three])
    with pytest.raises(InputError):
        combine_pks(SMALL, [])


# ---------------------------------------------------------------------------
# encrypt / homomorphic add / decrypt
# ---------------------------------------------------------------------------

def test_encrypt_with_zero_randomness():
    pk = keygen(SMALL, 0).pk
    assert encrypt_vote(SMALL, pk, 0, 0) == EncryptedBallot(a=1, b=1)
    assert encrypt_vote(SMALL, pk, 1, 0) == EncryptedBallot(a=1, b=SMALL.g)


def test_encrypt_rejects_malformed_ballots():
    pk = keygen(SMALL, 0).pk
    with pytest.raises(InputError):
        encrypt_vote(SMALL, pk, 2, 1)
    with pytest.raises(InputError):
        encrypt_vote(SMALL, pk, -1, 1)
    with pytest.raises(InputError):
        encrypt_vote(SMALL, pk, 1, SMALL.q)


def test_equal_plaintexts_distinct_ciphertexts():
    pk = keygen(SMALL, 0).pk
    assert encrypt_vote(SMALL, pk, 1, 3) != encrypt_vote(SMALL, pk, 1, 4)


def test_hom_add_identity_and_sum():
    key = keygen(SMALL, 2)
    zero = encrypt_vote(SMALL, key.pk, 0, 0)
    assert hom_add(SMALL, zero, zero).a == 1
    assert hom_add(SMALL, zero, zero).b == 1
    one_a = encrypt_vote(SMALL, key.pk, 1, 17)
    one_b = encrypt_vote(SMALL, key.pk, 1, 23)
    tally = hom_add(SMALL, one_a, one_b)
    share = partial_decrypt(SMALL, key.sk, tally)
    point = combine_decrypt(SMALL, tally, [share], 1)
    assert discrete_log_small(SMALL, point, 5) == 2


def test_hom_add_association_order_irrelevant():
    rand = random.Random(7)
    keys = [keygen(SMALL, i) for i in range(3)]
    pk = combine_pks(SMALL, [k.pk for k in keys])
    ballots = [encrypt_vote(SMALL, pk, v, rand.randrange(SMALL.q))
               for v in (1, 0, 1)]
    left = hom_add(SMALL, hom_add(SMALL, ballots[0], ballots[1]), ballots[2])
    right = hom_add(SMALL, ballots[0], hom_add(SMALL, ballots[1], ballots[2]))

    def decode(tally):
        shares = [partial_decrypt(SMALL, k.sk, tally) for k in keys]
        return discrete_log_small(
            SMALL, combine_decrypt(SMALL, tally, shares, 3), 3)

    assert decode(left) == decode(right) == 2


def test_partial_decrypt_trivial_exponents():
    key = keygen(SMALL, 3)
    c = encrypt_vote(SMALL, key.pk, 1, 11)
    assert partial_decrypt(SMALL, 0, c) == 1
    assert partial_decrypt(SMALL, 1, c) == c.a


def test_share_product_is_exponent_sum():
    rand = random.Random(11)
    keys = [keygen(SMALL, 40 + i) for i in range(4)]
    pk = combine_pks(SMALL, [k.pk for k in keys])
    c = encrypt_vote(SMALL, pk, 1, rand.randrange(SMALL.q))
    product = 1
    for k in keys:
        product = product * partial_decrypt(SMALL, k.sk, c) % SMALL.p
    sk_sum = sum(k.sk for k in keys)
    assert product == pow(c.a, sk_sum, SMALL.p)


def test_combine_decrypt_requires_every_share():
    keys = [keygen(SMALL, i) for i in range(3)]
    pk = combine_pks(SMALL, [k.pk for k in keys])
    c = encrypt_vote(SMALL, pk, 1, 9)
    shares = [partial_decrypt(SMALL, k.sk, c) for k in keys]
    with pytest.raises(ProtocolError):
        combine_decrypt(SMALL, c, shares[:2], 3)


def test_decryption_share_order_irrelevant():
    rand = random.Random(13)
    keys = [keygen(SMALL, 60 + i) for i in range(4)]
    pk = combine_pks(SMALL, [k.pk for k in keys])
    c = encrypt_vote(SMALL, pk, 1, rand.randrange(SMALL.q))
    shares = [partial_decrypt(SMALL, k.sk, c) for k in keys]
    forward = combine_decrypt(SMALL, c, shares, 4)
    backward = combine_decrypt(SMALL, c, shares[::-1], 4)
    assert forward == backward == SMALL.g


def test_all_zero_votes_decode_to_identity():
    rand = random.Random(17)
    keys = [keygen(SMALL, 80 + i) for i in range(3)]
    pk = combine_pks(SMALL, [k.pk for k in keys])
    tally = encrypt_vote(SMALL, pk, 0, rand.randrange(SMALL.q))
    for _ in range(2):
        tally = hom_add(SMALL, tally,
                        encrypt_vote(SMALL, pk, 0, rand.randrange(SMALL.q)))
    shares = [partial_decrypt(SMALL, k.sk, tally) for k in keys]
    assert combine_decrypt(SMALL, tally, shares, 3) == 1


def test_three_unanimous_votes_decode_to_three():
    rand = random.Random(19)
    keys = [keygen(SMALL, 90 + i) for i in range(3)]
    pk = combine_pks(SMALL, [k.pk for k in keys])
    assert _tally_column(SMALL, pk, keys, [1, 1, 1], rand) == 3


# ---------------------------------------------------------------------------
# discrete log table
# ---------------------------------------------------------------------------

def test_discrete_log_small_values():
    assert discrete_log_small(SMALL, 1, 10) == 0
    assert discrete_log_small(SMALL, SMALL.g, 10) == 1
    assert discrete_log_small(SMALL, pow(SMALL.g, 17, SMALL.p), 200) == 17


def test_discrete_log_rejects_out_of_table():
    beyond = pow(SMALL.g, 42, SMALL.p)
    with pytest.raises(ProtocolError):
        discrete_log_small(SMALL, beyond, 10)


# ---------------------------------------------------------------------------
# tally equivalence: exhaustive for n <= 2, randomized spot checks above
# ---------------------------------------------------------------------------

def test_tally_matches_plaintext_exhaustively_tiny():
    rand = random.Random(23)
    for n in (1, 2):
        for bits in itertools.product((0, 1), repeat=n * n):
            matrix = [list(bits[i * n:(i + 1) * n]) for i in range(n)]
            expect = [sum(matrix[i][j] for i in range(n)) for j in range(n)]
            assert _matrix_tallies(SMALL, matrix, rand) == expect


def test_tally_random_matrices_small_counts():
    rand = random.Random(29)
    for n in (3, 5):
        for _ in range(20):
            matrix = [[rand.randrange(2) for _ in range(n)] for _ in range(n)]
            expect = [sum(row[j] for row in matrix) for j in range(n)]
            assert _matrix_tallies(SMALL, matrix, rand) == expect


def test_tally_on_production_group():
    # One full column on the 1536-bit group, to exercise the big backend.
    big = GroupParams.modp_1536()
    rand = random.Random(31)
    keys = [keygen(big, i) for i in range(3)]
    pk = combine_pks(big, [k.pk for k in keys])
    assert _tally_column(big, pk, keys, [1, 0, 1], rand) == 2


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------

def test_ballot_bytes_roundtrip():
    pk = keygen(SMALL, 1).pk
    ballot = encrypt_vote(SMALL, pk, 1, 77)
    blob = ballot_to_bytes(SMALL, ballot)
    assert len(blob) == 2 * SMALL.element_size
    assert ballot_from_bytes(SMALL, blob) == ballot
    with pytest.raises(InputError):
        ballot_from_bytes(SMALL, blob[:-1])


def test_element_encoding_fixed_length():
    assert SMALL.element_size == 2  # p = 2039 fits in two bytes
    assert SMALL.element_to_bytes(1) == b"\x01\x00"
    with pytest.raises(InputError):
        SMALL.element_from_bytes(b"\x01")
