"""Minimal PNG codec: greyscale / RGB, 8- and 16-bit, no interlace.

Covers exactly the publication profile this pipeline needs (color types 0
and 2, bit depths 8 and 16). The encoder always emits filter type 0 rows,
which keeps output deterministic; the decoder understands all five baseline
filters so externally produced files decode too. 16-bit samples are
big-endian on the wire, as PNG requires.
"""

from __future__ import annotations

import struct
import zlib

import numpy as np

from .errors import CorruptImage, UnsupportedFormat, ZeroPixel

PNG_SIGNATURE = b"\x89PNG\r\n\x1a\n"

_COLOR_TYPE_CHANNELS = {0: 1, 2: 3}  # greyscale, truecolor


def _chunk(kind: bytes, payload: bytes) -> bytes:
    crc = zlib.crc32(kind + payload) & 0xFFFFFFFF
    return struct.pack(">I", len(payload)) + kind + payload + struct.pack(">I", crc)


def encode_png(samples: np.ndarray, bit_depth: int = 16) -> bytes:
    """Encode a (h, w) or (h, w, 3) unsigned array as a lossless PNG.

    Samples must already fit the target depth; no scaling happens here.
    """
    if bit_depth not in (8, 16):
        raise ValueError(f"PNG bit depth must be 8 or 16, got {bit_depth}")
    if samples.ndim == 2:
        color_type = 0
    elif samples.ndim == 3 and samples.shape[2] == 3:
        color_type = 2
    else:
        raise ValueError(f"PNG payload must be (h, w) or (h, w, 3), got {samples.shape}")
    height, width = samples.shape[:2]
    if width == 0 or height == 0:
        raise ZeroPixel("cannot encode an image with zero width or height")
    if samples.size and int(samples.max()) >= 1 << bit_depth:
        raise ValueError(f"sample exceeds {bit_depth}-bit range")

    dtype = ">u2" if bit_depth == 16 else np.uint8
    body = np.ascontiguousarray(samples.astype(dtype)).reshape(height, -1).view(np.uint8)
    scanlines = np.zeros((height, 1 + body.shape[1]), dtype=np.uint8)
    scanlines[:, 1:] = body  # leading zero byte = filter type None per row

    ihdr = struct.pack(">IIBBBBB", width, height, bit_depth, color_type, 0, 0, 0)
    return b"".join(
        [
            PNG_SIGNATURE,
            _chunk(b"IHDR", ihdr),
            _chunk(b"IDAT", zlib.compress(scanlines.tobytes(), 6)),
            _chunk(b"IEND", b""),
        ]
    )


def decode_png(data: bytes) -> tuple[np.ndarray, int]:
    """Decode a PNG into ((h, w, channels) uint16 array, bit_depth).

    Supports color types 0 and 2 at depths 8/16; anything else (palette,
    alpha, sub-byte depths, interlace) raises UnsupportedFormat.
    """
    if not data.startswith(PNG_SIGNATURE):
        raise UnsupportedFormat("not a PNG stream")

    pos = len(PNG_SIGNATURE)
    header: tuple[int, int, int, int] | None = None  # w, h, depth, channels
    idat = bytearray()
    seen_iend = False
    while pos < len(data):
        if pos + 8 > len(data):
            raise CorruptImage("truncated chunk header")
        (length,) = struct.unpack_from(">I", data, pos)
        kind = data[pos + 4 : pos + 8]
        body_end = pos + 8 + length
        if body_end + 4 > len(data):
            raise CorruptImage(f"truncated {kind!r} chunk")
        payload = data[pos + 8 : body_end]
        (crc,) = struct.unpack_from(">I", data, body_end)
        if crc != (zlib.crc32(kind + payload) & 0xFFFFFFFF):
            raise CorruptImage(f"CRC mismatch in {kind!r} chunk")
        pos = body_end + 4

        if kind == b"IHDR":
            header = _parse_ihdr(payload)
        elif kind == b"IDAT":
            if header is None:
                raise CorruptImage("IDAT before IHDR")
            idat.extend(payload)
        elif kind == b"IEND":
            seen_iend = True
            break
        # ancillary chunks are ignored

    if header is None:
        raise CorruptImage("missing IHDR")
    if not seen_iend:
        raise CorruptImage("missing IEND")
    if not idat:
        raise CorruptImage("missing IDAT")

    width, height, bit_depth, channels = header
    try:
        raw = zlib.decompress(bytes(idat))
    except zlib.error as exc:
        raise CorruptImage(f"IDAT inflate failed: {exc}") from exc

    sample_bytes = bit_depth // 8
    stride = width * channels * sample_bytes
    if len(raw) != height * (1 + stride):
        raise CorruptImage(
            f"decompressed size {len(raw)} != expected {height * (1 + stride)}"
        )

    rows = np.frombuffer(raw, dtype=np.uint8).reshape(height, 1 + stride)
    recon = _unfilter(rows[:, 0], rows[:, 1:], channels * sample_bytes)

    if bit_depth == 16:
        samples = recon.reshape(height, width * channels * 2).view(">u2").astype(np.uint16)
    else:
        samples = recon.astype(np.uint16)
    return samples.reshape(height, width, channels), bit_depth


def _parse_ihdr(payload: bytes) -> tuple[int, int, int, int]:
    if len(payload) != 13:
        raise CorruptImage("IHDR length must be 13")
    width, height, bit_depth, color_type, comp, filt, interlace = struct.unpack(
        ">IIBBBBB", payload
    )
    if width == 0 or height == 0:
        raise ZeroPixel("PNG declares zero width or height")
    if color_type not in _COLOR_TYPE_CHANNELS:
        raise UnsupportedFormat(f"PNG color type {color_type} not supported")
    if bit_depth not in (8, 16):
        raise UnsupportedFormat(f"PNG bit depth {bit_depth} not supported")
    if comp != 0 or filt != 0:
        raise UnsupportedFormat("nonstandard PNG compression/filter method")
    if interlace != 0:
        raise UnsupportedFormat("interlaced PNG not supported")
    return width, height, bit_depth, _COLOR_TYPE_CHANNELS[color_type]


def _unfilter(filters: np.ndarray, rows: np.ndarray, bpp: int) -> np.ndarray:
    """Reverse per-row PNG filtering. bpp = bytes per complete pixel."""
    height, stride = rows.shape
    out = np.zeros((height, stride), dtype=np.uint8)
    prior = np.zeros(stride, dtype=np.uint8)
    for y in range(height):
        ftype = int(filters[y])
        line = rows[y]
        if ftype == 0:  # None
            cur = line.copy()
        elif ftype == 1:  # Sub: per byte-lane prefix sum mod 256
            lanes = line.reshape(-1, bpp).astype(np.uint64)
            cur = (np.cumsum(lanes, axis=0) & 0xFF).astype(np.uint8).reshape(-1)
        elif ftype == 2:  # Up
            cur = (line.astype(np.uint16) + prior).astype(np.uint8)
        elif ftype == 3:  # Average
            cur = np.empty(stride, dtype=np.uint8)
            for x in range(stride):
                left = int(cur[x - bpp]) if x >= bpp else 0
                cur[x] = (int(line[x]) + (left + int(prior[x])) // 2) & 0xFF
        elif ftype == 4:  # Paeth
            cur = np.empty(stride, dtype=np.uint8)
            for x in range(stride):
                a = int(cur[x - bpp]) if x >= bpp else 0
                b = int(prior[x])
                c = int(prior[x - bpp]) if x >= bpp else 0
                p = a + b - c
                pa, pb, pc = abs(p - a), abs(p - b), abs(p - c)
                if pa <= pb and pa <= pc:
                    pred = a
                elif pb <= pc:
                    pred = b
                else:
                    pred = c
                cur[x] = (int(line[x]) + pred) & 0xFF
        else:
            raise CorruptImage(f"unknown PNG filter type {ftype}")
        out[y] = cur
        prior = cur
    return out
