"""Asset identifiers, payload encryption and sealing of asset keys.

A payload is encrypted once under its Asset Encryption Key (AEK, 32 random
bytes).  Access is granted by sealing the AEK to the public key an accessor
announced in its request.  Sealing schemes are addressed by string
identifiers carried on chain, so the registry below can grow.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

from cryptography.exceptions import InvalidTag
from cryptography.hazmat.primitives import hashes, serialization
from cryptography.hazmat.primitives.asymmetric import padding, rsa
from cryptography.hazmat.primitives.asymmetric.x25519 import X25519PrivateKey, X25519PublicKey
from cryptography.hazmat.primitives.ciphers.aead import AESGCM
from cryptography.hazmat.primitives.kdf.hkdf import HKDF

from .errors import DecryptionFailed, UnsealFailed, UnsupportedAlgorithm
from .primitives import AssetId, sha256

AEK_SIZE = 32
NONCE_SIZE = 12
PAYLOAD_ALGORITHM = "AES-256-GCM"


def compute_asset_id(payload: bytes) -> AssetId:
    return AssetId(sha256(payload))


def new_aek() -> bytes:
    return os.urandom(AEK_SIZE)


@dataclass(frozen=True)
class EncryptedPayload:
    nonce: bytes
    ciphertext: bytes  # includes the GCM tag

    def to_bytes(self) -> bytes:
        return self.nonce + self.ciphertext

    @classmethod
    def from_bytes(cls, blob: bytes) -> "EncryptedPayload":
        if len(blob) < NONCE_SIZE + 16:
            raise DecryptionFailed("ciphertext too short")
        return cls(blob[:NONCE_SIZE], blob[NONCE_SIZE:])


def _check_aek(aek: bytes) -> None:
    if len(aek) != AEK_SIZE:
        raise ValueError(f"AEK must be {AEK_SIZE} bytes")


def encrypt_payload(aek: bytes, payload: bytes) -> EncryptedPayload:
    _check_aek(aek)
    nonce = os.urandom(NONCE_SIZE)
    return EncryptedPayload(nonce, AESGCM(aek).encrypt(nonce, payload, None))


def decrypt_payload(aek: bytes, encrypted: EncryptedPayload | bytes) -> bytes:
    _check_aek(aek)
    if isinstance(encrypted, (bytes, bytearray)):
        encrypted = EncryptedPayload.from_bytes(bytes(encrypted))
    try:
        return AESGCM(aek).decrypt(encrypted.nonce, encrypted.ciphertext, None)
    except InvalidTag:
        raise DecryptionFailed("authentication failed") from None


# sealing ----------------------------------------------------------------------

@dataclass(frozen=True)
class SealingKeyPair:
    algorithm: str
    public_key: bytes
    private_key: bytes


@dataclass(frozen=True)
class SealedKey:
    algorithm: str
    ciphertext: bytes

    def to_bytes(self) -> bytes:
        tag = self.algorithm.encode()
        return bytes([len(tag)]) + tag + self.ciphertext

    @classmethod
    def from_bytes(cls, blob: bytes) -> "SealedKey":
        try:
            n = blob[0]
            algorithm = blob[1:1 + n].decode()
        except (IndexError, UnicodeDecodeError):
            raise UnsealFailed("malformed sealed key") from None
        if len(blob) < 1 + n:
            raise UnsealFailed("malformed sealed key")
        return cls(algorithm, blob[1 + n:])


class X25519Sealing:
    """Ephemeral X25519 agreement, HKDF-SHA256, then AES-256-GCM."""

    name = "X25519-HKDF-SHA256-AES256GCM"
    _info = b"aiprov/seal/x25519"

    def generate(self) -> SealingKeyPair:
        key = X25519PrivateKey.generate()
        raw = serialization.Encoding.Raw
        return SealingKeyPair(
            self.name,
            key.public_key().public_bytes(raw, serialization.PublicFormat.Raw),
            key.private_bytes(raw, serialization.PrivateFormat.Raw, serialization.NoEncryption()),
        )

    def _key(self, shared: bytes, eph_pub: bytes, recipient_pub: bytes) -> bytes:
        return HKDF(hashes.SHA256(), 32, salt=None,
                    info=self._info + eph_pub + recipient_pub).derive(shared)

    def seal(self, public_key: bytes, message: bytes) -> bytes:
        recipient = X25519PublicKey.from_public_bytes(public_key)
        eph = X25519PrivateKey.generate()
        eph_pub = eph.public_key().public_bytes(serialization.Encoding.Raw,
                                                serialization.PublicFormat.Raw)
        key = self._key(eph.exchange(recipient), eph_pub, public_key)
        nonce = os.urandom(NONCE_SIZE)
        return eph_pub + nonce + AESGCM(key).encrypt(nonce, message, eph_pub)

    def unseal(self, private_key: bytes, blob: bytes) -> bytes:
        eph_pub, nonce, ct = blob[:32], blob[32:32 + NONCE_SIZE], blob[32 + NONCE_SIZE:]
        me = X25519PrivateKey.from_private_bytes(private_key)
        my_pub = me.public_key().public_bytes(serialization.Encoding.Raw,
                                              serialization.PublicFormat.Raw)
        key = self._key(me.exchange(X25519PublicKey.from_public_bytes(eph_pub)), eph_pub, my_pub)
        return AESGCM(key).decrypt(nonce, ct, eph_pub)


class RSAOAEPSealing:
    name = "RSA-OAEP-2048-SHA256"

    def _padding(self):
        return padding.OAEP(mgf=padding.MGF1(hashes.SHA256()), algorithm=hashes.SHA256(), label=None)

    def generate(self) -> SealingKeyPair:
        key = rsa.generate_private_key(public_exponent=65537, key_size=2048)
        return SealingKeyPair(
            self.name,
            key.public_key().public_bytes(serialization.Encoding.DER,
                                          serialization.PublicFormat.SubjectPublicKeyInfo),
            key.private_bytes(serialization.Encoding.DER, serialization.PrivateFormat.PKCS8,
                              serialization.NoEncryption()),
        )

    def seal(self, public_key: bytes, message: bytes) -> bytes:
        return serialization.load_der_public_key(public_key).encrypt(message, self._padding())

    def unseal(self, private_key: bytes, blob: bytes) -> bytes:
        key = serialization.load_der_private_key(private_key, password=None)
        return key.decrypt(blob, self._padding())


SEALING_SCHEMES = {scheme.name: scheme for scheme in (X25519Sealing(), RSAOAEPSealing())}
DEFAULT_SEALING = X25519Sealing.name


def _scheme(algorithm: str):
    try:
        return SEALING_SCHEMES[algorithm]
    except KeyError:
        raise UnsupportedAlgorithm(algorithm) from None


def generate_keypair(algorithm: str = DEFAULT_SEALING) -> SealingKeyPair:
    return _scheme(algorithm).generate()


def seal_aek(public_key: bytes, aek: bytes, algorithm: str = DEFAULT_SEALING) -> SealedKey:
    _check_aek(aek)
    scheme = _scheme(algorithm)
    try:
        return SealedKey(algorithm, scheme.seal(public_key, aek))
    except ValueError as exc:
        raise UnsupportedAlgorithm(f"public key unusable with {algorithm}: {exc}") from None


def unseal_aek(keypair: SealingKeyPair, sealed: SealedKey | bytes) -> bytes:
    if isinstance(sealed, (bytes, bytearray)):
        sealed = SealedKey.from_bytes(bytes(sealed))
    if sealed.algorithm != keypair.algorithm:
        raise UnsealFailed(f"sealed with {sealed.algorithm}, key is {keypair.algorithm}")
    scheme = _scheme(sealed.algorithm)
    try:
        aek = scheme.unseal(keypair.private_key, sealed.ciphertext)
    except (InvalidTag, ValueError, TypeError):
        raise UnsealFailed("cannot unseal with this key") from None
    if len(aek) != AEK_SIZE:
        raise UnsealFailed("unsealed key has the wrong size")
    return aek
