"""Keccak-256 (original pad10*1 padding, not the NIST SHA-3 variant).

Function selectors are the first 4 bytes of keccak256 of the canonical
signature text; hashlib only ships the NIST-padded SHA-3, which produces
different digests, so the permutation is implemented here.
"""

from __future__ import annotations

from functools import lru_cache

_RATE_BYTES = 136  # 1088-bit rate / 512-bit capacity

_ROUND_CONSTANTS = (
    0x0000000000000001, 0x0000000000008082, 0x800000000000808A, 0x8000000080008000,
    0x000000000000808B, 0x0000000080000001, 0x8000000080008081, 0x8000000000008009,
    0x000000000000008A, 0x0000000000000088, 0x0000000080008009, 0x000000008000000A,
    0x000000008000808B, 0x800000000000008B, 0x8000000000008089, 0x8000000000008003,
    0x8000000000008002, 0x8000000000000080, 0x000000000000800A, 0x800000008000000A,
    0x8000000080008081, 0x8000000000008080, 0x0000000080000001, 0x8000000080008008,
)

# Rotation offsets in flat order, lane index = x + 5*y.
_ROTATIONS = (
    0, 1, 62, 28, 27,
    36, 44, 6, 55, 20,
    3, 10, 43, 25, 39,
    41, 45, 15, 21, 8,
    18, 2, 61, 56, 14,
)

_MASK = (1 << 64) - 1


def _rotl(lane: int, offset: int) -> int:
    return ((lane << offset) | (lane >> (64 - offset))) & _MASK if offset else lane


def _keccak_f(state: list[int]) -> None:
    for rc in _ROUND_CONSTANTS:
        # theta
        c = [state[x] ^ state[x + 5] ^ state[x + 10] ^ state[x + 15] ^ state[x + 20]
             for x in range(5)]
        d = [c[(x - 1) % 5] ^ _rotl(c[(x + 1) % 5], 1) for x in range(5)]
        for x in range(5):
            dx = d[x]
            for y in range(0, 25, 5):
                state[x + y] ^= dx
        # rho + pi
        b = [0] * 25
        for x in range(5):
            for y in range(5):
                src = x + 5 * y
                b[y + 5 * ((2 * x + 3 * y) % 5)] = _rotl(state[src], _ROTATIONS[src])
        # chi
        for y in range(0, 25, 5):
            row = b[y:y + 5]
            for x in range(5):
                state[x + y] = row[x] ^ ((row[(x + 1) % 5] ^ _MASK) & row[(x + 2) % 5])
        # iota
        state[0] ^= rc


def keccak256(data: bytes) -> bytes:
    """Digest arbitrary bytes; returns 32 bytes."""
    state = [0] * 25
    padded = bytearray(data)
    pad_len = _RATE_BYTES - (len(padded) % _RATE_BYTES)
    padded += b"\x01" + b"\x00" * (pad_len - 1)
    padded[-1] |= 0x80
    for block_start in range(0, len(padded), _RATE_BYTES):
        block = padded[block_start:block_start + _RATE_BYTES]
        for j in range(_RATE_BYTES // 8):
            state[j] ^= int.from_bytes(block[8 * j:8 * j + 8], "little")
        _keccak_f(state)
    out = b"".join(state[j].to_bytes(8, "little") for j in range(4))
    return out


@lru_cache(maxsize=4096)
def selector(signature: str) -> bytes:
    """First 4 bytes of keccak256 of a canonical function signature."""
    return keccak256(signature.encode("ascii"))[:4]
