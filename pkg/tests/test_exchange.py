import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from aiprov.errors import DecryptionFailed, UnsealFailed, UnsupportedAlgorithm
from aiprov.exchange import (
    AEK_SIZE,
    DEFAULT_SEALING,
    SEALING_SCHEMES,
    EncryptedPayload,
    SealedKey,
    decrypt_payload,
    encrypt_payload,
    generate_keypair,
    new_aek,
    seal_aek,
    unseal_aek,
)

RSA = "RSA-OAEP-2048-SHA256"


@pytest.fixture(scope="module")
def rsa_pair():
    return generate_keypair(RSA)


@settings(max_examples=50)
@given(st.binary(max_size=2048))
def test_payload_roundtrip(payload):
    aek = new_aek()
    enc = encrypt_payload(aek, payload)
    assert decrypt_payload(aek, enc.to_bytes()) == payload
    assert len(enc.to_bytes()) == 12 + len(payload) + 16


def test_wrong_key_or_tampered_ciphertext_fails():
    aek = new_aek()
    blob = bytearray(encrypt_payload(aek, b"secret").to_bytes())
    with pytest.raises(DecryptionFailed):
        decrypt_payload(new_aek(), bytes(blob))
    blob[-1] ^= 1
    with pytest.raises(DecryptionFailed):
        decrypt_payload(aek, bytes(blob))
    with pytest.raises(DecryptionFailed):
        EncryptedPayload.from_bytes(b"tiny")


def test_encryption_is_randomised():
    aek = new_aek()
    assert encrypt_payload(aek, b"x").to_bytes() != encrypt_payload(aek, b"x").to_bytes()


def test_aek_size_enforced():
    with pytest.raises(ValueError):
        encrypt_payload(b"short", b"x")
    assert len(new_aek()) == AEK_SIZE


@pytest.mark.parametrize("algorithm", sorted(SEALING_SCHEMES))
def test_seal_unseal(algorithm, rsa_pair):
    pair = rsa_pair if algorithm == RSA else generate_keypair(algorithm)
    aek = new_aek()
    sealed = seal_aek(pair.public_key, aek, algorithm)
    assert SealedKey.from_bytes(sealed.to_bytes()) == sealed
    assert unseal_aek(pair, sealed.to_bytes()) == aek
    assert aek not in sealed.to_bytes()


def test_default_sealed_size_is_stable():
    pair = generate_keypair()
    assert len(pair.public_key) == 32
    assert len(seal_aek(pair.public_key, new_aek()).to_bytes()) == 1 + len(DEFAULT_SEALING) + 92


def test_unseal_with_other_key_fails(rsa_pair):
    a, b = generate_keypair(), generate_keypair()
    sealed = seal_aek(a.public_key, new_aek())
    with pytest.raises(UnsealFailed):
        unseal_aek(b, sealed)
    with pytest.raises(UnsealFailed):
        unseal_aek(rsa_pair, sealed)


def test_unsupported_algorithm():
    with pytest.raises(UnsupportedAlgorithm):
        generate_keypair("ROT13")
    with pytest.raises(UnsupportedAlgorithm):
        seal_aek(b"\x00" * 32, new_aek(), "ROT13")
    with pytest.raises(UnsupportedAlgorithm):
        seal_aek(b"not a der key", new_aek(), RSA)


def test_malformed_sealed_blob():
    with pytest.raises(UnsealFailed):
        SealedKey.from_bytes(b"")
    with pytest.raises(UnsealFailed):
        SealedKey.from_bytes(b"\x09abc")
