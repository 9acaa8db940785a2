"""AES-128-CTR keystreams for image, payload and side-information encryption.

The counter block is ``nonce (12 bytes) || block counter (4 bytes, big-endian)``,
starting at zero, so keystream byte ``i`` lives in counter block ``i // 16``
and any range can be generated independently.
"""
from __future__ import annotations

import enum
import os
from dataclasses import dataclass

import numpy as np
from cryptography.hazmat.primitives.ciphers import Cipher, algorithms, modes

KEY_BYTES = 16
NONCE_BYTES = 12


class KeyRole(enum.Enum):
    CONTENT_OWNER = "K_e"
    DATA_HIDER = "K_d"
    SHARED = "K_s"


@dataclass(frozen=True)
class KeyMaterial:
    role: KeyRole
    key: bytes
    nonce: bytes

    def __post_init__(self):
        if len(self.key) != KEY_BYTES:
            raise ValueError(f"{self.role.value}: key must be {KEY_BYTES} bytes")
        if len(self.nonce) != NONCE_BYTES:
            raise ValueError(f"{self.role.value}: nonce must be {NONCE_BYTES} bytes")

    @classmethod
    def from_hex(cls, role: KeyRole, key_hex: str, nonce: bytes) -> "KeyMaterial":
        key_hex = key_hex.strip()
        if len(key_hex) != 2 * KEY_BYTES:
            raise ValueError(f"{role.value}: expected {2 * KEY_BYTES} hex characters")
        return cls(role, bytes.fromhex(key_hex), nonce)

    def with_nonce(self, nonce: bytes) -> "KeyMaterial":
        return KeyMaterial(self.role, self.key, nonce)


def new_nonce() -> bytes:
    return os.urandom(NONCE_BYTES)


def keystream(key: KeyMaterial, length: int, offset: int = 0) -> bytes:
    """``length`` keystream bytes starting at byte ``offset``."""
    if length < 0 or offset < 0:
        raise ValueError("length and offset must be non-negative")
    if length == 0:
        return b""
    block, skip = divmod(offset, 16)
    if block + (skip + length + 15) // 16 > 1 << 32:
        raise ValueError("keystream request exceeds the 32-bit block counter")
    counter = key.nonce + block.to_bytes(4, "big")
    enc = Cipher(algorithms.AES(key.key), modes.CTR(counter)).encryptor()
    out = enc.update(bytes(skip + length)) + enc.finalize()
    return out[skip:]


def keystream_bits(key: KeyMaterial, nbits: int, bit_offset: int = 0) -> np.ndarray:
    """Keystream expanded to bits, MSB-first within each byte."""
    if nbits == 0:
        return np.zeros(0, dtype=np.uint8)
    first, skip = divmod(bit_offset, 8)
    nbytes = (skip + nbits + 7) // 8
    raw = np.frombuffer(keystream(key, nbytes, first), dtype=np.uint8)
    return np.unpackbits(raw)[skip : skip + nbits]


def xor_image(img, key: KeyMaterial) -> np.ndarray:
    img = np.asarray(img, dtype=np.uint8)
    ks = np.frombuffer(keystream(key, img.size), dtype=np.uint8).reshape(img.shape)
    return img ^ ks


def xor_bits(bits, key: KeyMaterial, bit_offset: int = 0) -> np.ndarray:
    bits = np.asarray(bits, dtype=np.uint8)
    return bits ^ keystream_bits(key, bits.size, bit_offset)
