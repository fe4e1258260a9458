"""Deterministic JPEG-style compressed-size estimator.

Per-channel baseline pipeline: 8x8 blocks, fixed-point integer DCT,
standard luminance quantization table scaled to quality 75, zigzag scan,
run-length coding of zeros, and a bit count from the standard baseline
luminance Huffman code lengths. Only the byte length is produced; no
interchange-valid JPEG stream is emitted. The whole path is integer-only
after the initial 8-bit pixel view, so outputs are bit-identical across
platforms.
"""

from __future__ import annotations

import numpy as np

# Zigzag indices of all 64 coefficients (row-major natural index order).
_ZIGZAG = np.array([
    0,  1,  8, 16,  9,  2,  3, 10, 17, 24, 32, 25, 18, 11,  4,  5,
    12, 19, 26, 33, 40, 48, 41, 34, 27, 20, 13,  6,  7, 14, 21, 28,
    35, 42, 49, 56, 57, 50, 43, 36, 29, 22, 15, 23, 30, 37, 44, 51,
    58, 59, 52, 45, 38, 31, 39, 46, 53, 60, 61, 54, 47, 55, 62, 63])

# Annex-K luminance quantization table, natural (row-major) order.
_LUMA_QUANT = np.array([
    16, 11, 10, 16, 24, 40, 51, 61,
    12, 12, 14, 19, 26, 58, 60, 55,
    14, 13, 16, 24, 40, 57, 69, 56,
    14, 17, 22, 29, 51, 87, 80, 62,
    18, 22, 37, 56, 68, 109, 103, 77,
    24, 35, 55, 64, 81, 104, 113, 92,
    49, 64, 78, 87, 103, 121, 120, 101,
    72, 92, 95, 98, 112, 100, 103, 99], dtype=np.int64)

# Standard luminance Huffman tables: BITS (code count per length 1..16)
# and symbol values in code order.
_DC_BITS = [0, 1, 5, 1, 1, 1, 1, 1, 1, 0, 0, 0, 0, 0, 0, 0]
_DC_VALUES = list(range(12))
_AC_BITS = [0, 2, 1, 3, 3, 2, 4, 3, 5, 5, 4, 4, 0, 0, 1, 125]
_AC_VALUES = [
    0x01, 0x02, 0x03, 0x00, 0x04, 0x11, 0x05, 0x12, 0x21, 0x31, 0x41,
    0x06, 0x13, 0x51, 0x61, 0x07, 0x22, 0x71, 0x14, 0x32, 0x81, 0x91,
    0xA1, 0x08, 0x23, 0x42, 0xB1, 0xC1, 0x15, 0x52, 0xD1, 0xF0, 0x24,
    0x33, 0x62, 0x72, 0x82, 0x09, 0x0A, 0x16, 0x17, 0x18, 0x19, 0x1A,
    0x25, 0x26, 0x27, 0x28, 0x29, 0x2A, 0x34, 0x35, 0x36, 0x37, 0x38,
    0x39, 0x3A, 0x43, 0x44, 0x45, 0x46, 0x47, 0x48, 0x49, 0x4A, 0x53,
    0x54, 0x55, 0x56, 0x57, 0x58, 0x59, 0x5A, 0x63, 0x64, 0x65, 0x66,
    0x67, 0x68, 0x69, 0x6A, 0x73, 0x74, 0x75, 0x76, 0x77, 0x78, 0x79,
    0x7A, 0x83, 0x84, 0x85, 0x86, 0x87, 0x88, 0x89, 0x8A, 0x92, 0x93,
    0x94, 0x95, 0x96, 0x97, 0x98, 0x99, 0x9A, 0xA2, 0xA3, 0xA4, 0xA5,
    0xA6, 0xA7, 0xA8, 0xA9, 0xAA, 0xB2, 0xB3, 0xB4, 0xB5, 0xB6, 0xB7,
    0xB8, 0xB9, 0xBA, 0xC2, 0xC3, 0xC4, 0xC5, 0xC6, 0xC7, 0xC8, 0xC9,
    0xCA, 0xD2, 0xD3, 0xD4, 0xD5, 0xD6, 0xD7, 0xD8, 0xD9, 0xDA, 0xE1,
    0xE2, 0xE3, 0xE4, 0xE5, 0xE6, 0xE7, 0xE8, 0xE9, 0xEA, 0xF1, 0xF2,
    0xF3, 0xF4, 0xF5, 0xF6, 0xF7, 0xF8, 0xF9, 0xFA,
]


def _code_lengths(bits, values):
    lengths = {}
    i = 0
    for length, count in enumerate(bits, start=1):
        for _ in range(count):
            lengths[values[i]] = length
            i += 1
    return lengths


_DC_LEN = _code_lengths(_DC_BITS, _DC_VALUES)
_AC_LEN = _code_lengths(_AC_BITS, _AC_VALUES)
_EOB = 0x00
_ZRL = 0xF0

_DCT_FIX_BITS = 13


def _dct_matrix_fixed() -> np.ndarray:
    """Orthonormal 8x8 DCT-II matrix in Q13 fixed point."""
    k = np.arange(8)
    c = np.cos((2 * k[None, :] + 1) * k[:, None] * np.pi / 16)
    c[0, :] *= 1 / np.sqrt(2)
    c *= 0.5
    return np.rint(c * (1 << _DCT_FIX_BITS)).astype(np.int64)


_DCT_FIXED = _dct_matrix_fixed()


def _quality_scaled_table(quality: int = 75) -> np.ndarray:
    scale = 5000 // quality if quality < 50 else 200 - 2 * quality
    q = (_LUMA_QUANT * scale + 50) // 100
    return np.clip(q, 1, 255)


_QTABLE = _quality_scaled_table(75)
_QTABLE_ZZ = _QTABLE[_ZIGZAG]


def _blocks(channel: np.ndarray) -> np.ndarray:
    """Split a 2-D uint8 channel into 8x8 int64 blocks, edge-padding."""
    h, w = channel.shape
    ph, pw = (-h) % 8, (-w) % 8
    padded = np.pad(channel.astype(np.int64), ((0, ph), (0, pw)), mode="edge")
    hh, ww = padded.shape
    return (
        padded.reshape(hh // 8, 8, ww // 8, 8)
        .transpose(0, 2, 1, 3)
        .reshape(-1, 8, 8)
    )


def _bit_size(v: int) -> int:
    return int(v).bit_length() if v >= 0 else int(-v).bit_length()


def channel_byte_length(channel: np.ndarray, qtable_zz: np.ndarray = _QTABLE_ZZ) -> int:
    """Estimated entropy-coded byte length of one 8-bit channel."""
    blocks = _blocks(channel) - 128
    # two fixed-point matmuls, rounding shift back to coefficient scale
    tmp = np.einsum("ij,njk->nik", _DCT_FIXED, blocks)
    coef = np.einsum("nik,lk->nil", tmp, _DCT_FIXED)
    half = 1 << (2 * _DCT_FIX_BITS - 1)
    coef = (coef + half) >> (2 * _DCT_FIX_BITS)

    zz = coef.reshape(-1, 64)[:, _ZIGZAG]
    q = qtable_zz[None, :]
    quant = np.sign(zz) * ((np.abs(zz) * 2 + q) // (2 * q))

    bits = 0
    prev_dc = 0
    for block in quant:
        diff = int(block[0]) - prev_dc
        prev_dc = int(block[0])
        cat = _bit_size(diff)
        bits += _DC_LEN[cat] + cat
        run = 0
        for v in block[1:]:
            v = int(v)
            if v == 0:
                run += 1
                continue
            while run > 15:
                bits += _AC_LEN[_ZRL]
                run -= 16
            size = _bit_size(v)
            bits += _AC_LEN[(run << 4) | size] + size
            run = 0
        if run > 0:
            bits += _AC_LEN[_EOB]
    return (bits + 7) // 8


def compressed_length(pixels_q: np.ndarray) -> int:
    """Byte-length estimate for an (h, w, c) uint8 image, channels coded independently."""
    return sum(
        channel_byte_length(pixels_q[:, :, c]) for c in range(pixels_q.shape[2])
    )
