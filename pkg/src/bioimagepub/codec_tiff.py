"""Baseline TIFF codec for unsigned 8/16-bit strip-organized images.

Decode handles both byte orders, multi-page files, chunky planar layout,
compression 1 (none) and 8/32946 (zlib deflate), and horizontal-differencing
predictor 2. Encode always writes little-endian, one strip per page, 16 bits
per sample, deflate by default; that is the publication profile.

Tiled files, planar-separated files and exotic sample formats are out of
scope and rejected with UnsupportedFormat.
"""

from __future__ import annotations

import struct
import zlib

import numpy as np

from .errors import CorruptImage, UnsupportedFormat, ZeroPixel

# tag codes used below
_IMAGE_WIDTH = 256
_IMAGE_LENGTH = 257
_BITS_PER_SAMPLE = 258
_COMPRESSION = 259
_PHOTOMETRIC = 262
_STRIP_OFFSETS = 273
_SAMPLES_PER_PIXEL = 277
_ROWS_PER_STRIP = 278
_STRIP_BYTE_COUNTS = 279
_PLANAR_CONFIG = 284
_PREDICTOR = 317
_TILE_WIDTH = 322
_SAMPLE_FORMAT = 339

_TYPE_SIZES = {1: 1, 2: 1, 3: 2, 4: 4, 5: 8, 6: 1, 7: 1, 8: 2, 9: 4, 10: 8, 11: 4, 12: 8}


def decode_tiff(data: bytes) -> tuple[list[np.ndarray], int]:
    """Decode a TIFF into ([(h, w, spp) uint16 per page], bit_depth)."""
    if len(data) < 8:
        raise UnsupportedFormat("not a TIFF stream")
    if data[:4] == b"II*\x00":
        bo = "<"
    elif data[:4] == b"MM\x00*":
        bo = ">"
    else:
        raise UnsupportedFormat("not a TIFF stream")

    (offset,) = struct.unpack_from(bo + "I", data, 4)
    pages: list[np.ndarray] = []
    depth: int | None = None
    seen_offsets: set[int] = set()
    while offset:
        if offset in seen_offsets or len(pages) > 4096:
            raise CorruptImage("IFD chain loops")
        seen_offsets.add(offset)
        page, page_depth, offset = _decode_ifd(data, bo, offset)
        if depth is None:
            depth = page_depth
        elif depth != page_depth:
            raise CorruptImage("pages disagree on bit depth")
        pages.append(page)
    if not pages or depth is None:
        raise CorruptImage("TIFF contains no images")
    return pages, depth


def _read_entry(data: bytes, bo: str, pos: int) -> tuple[int, tuple[int, ...]]:
    tag, vtype, count = struct.unpack_from(bo + "HHI", data, pos)
    size = _TYPE_SIZES.get(vtype)
    if size is None:
        return tag, ()
    total = size * count
    if total <= 4:
        raw = data[pos + 8 : pos + 8 + total]
    else:
        (voff,) = struct.unpack_from(bo + "I", data, pos + 8)
        if voff + total > len(data):
            raise CorruptImage(f"tag {tag} value offset out of range")
        raw = data[voff : voff + total]
    if vtype == 3:  # SHORT
        return tag, struct.unpack(bo + "H" * count, raw)
    if vtype == 4:  # LONG
        return tag, struct.unpack(bo + "I" * count, raw)
    if vtype == 1:  # BYTE
        return tag, tuple(raw)
    return tag, ()  # other types are not needed for baseline strips


def _decode_ifd(data: bytes, bo: str, offset: int) -> tuple[np.ndarray, int, int]:
    if offset + 2 > len(data):
        raise CorruptImage("IFD offset out of range")
    (n_entries,) = struct.unpack_from(bo + "H", data, offset)
    end = offset + 2 + n_entries * 12
    if end + 4 > len(data):
        raise CorruptImage("truncated IFD")
    tags: dict[int, tuple[int, ...]] = {}
    for i in range(n_entries):
        tag, values = _read_entry(data, bo, offset + 2 + i * 12)
        tags[tag] = values
    (next_offset,) = struct.unpack_from(bo + "I", data, end)

    def first(tag: int, default: int | None = None) -> int:
        vals = tags.get(tag)
        if not vals:
            if default is None:
                raise CorruptImage(f"required TIFF tag {tag} missing")
            return default
        return vals[0]

    if _TILE_WIDTH in tags:
        raise UnsupportedFormat("tiled TIFF not supported")

    width = first(_IMAGE_WIDTH)
    height = first(_IMAGE_LENGTH)
    if width == 0 or height == 0:
        raise ZeroPixel("TIFF declares zero width or height")
    spp = first(_SAMPLES_PER_PIXEL, 1)
    bits = tags.get(_BITS_PER_SAMPLE, (1,))
    if len(set(bits)) != 1:
        raise UnsupportedFormat("per-channel bit depths differ")
    depth = bits[0]
    if depth not in (8, 16):
        raise UnsupportedFormat(f"TIFF bit depth {depth} not supported")
    compression = first(_COMPRESSION, 1)
    if compression not in (1, 8, 32946):
        raise UnsupportedFormat(f"TIFF compression {compression} not supported")
    if first(_PLANAR_CONFIG, 1) != 1:
        raise UnsupportedFormat("planar-separated TIFF not supported")
    if first(_SAMPLE_FORMAT, 1) != 1:
        raise UnsupportedFormat("only unsigned integer samples supported")
    predictor = first(_PREDICTOR, 1)
    if predictor not in (1, 2):
        raise UnsupportedFormat(f"TIFF predictor {predictor} not supported")

    offsets = tags.get(_STRIP_OFFSETS)
    counts = tags.get(_STRIP_BYTE_COUNTS)
    if not offsets or not counts or len(offsets) != len(counts):
        raise CorruptImage("inconsistent strip offsets / byte counts")

    chunks = []
    for soff, scount in zip(offsets, counts):
        if soff + scount > len(data):
            raise CorruptImage("strip extends past end of file")
        strip = data[soff : soff + scount]
        if compression in (8, 32946):
            try:
                strip = zlib.decompress(strip)
            except zlib.error as exc:
                raise CorruptImage(f"strip inflate failed: {exc}") from exc
        chunks.append(strip)
    raw = b"".join(chunks)

    expected = width * height * spp * (depth // 8)
    if len(raw) < expected:
        raise CorruptImage(f"pixel data short: {len(raw)} < {expected}")
    raw = raw[:expected]

    dtype = (bo + "u2") if depth == 16 else np.uint8
    page = np.frombuffer(raw, dtype=dtype).astype(np.uint16).reshape(height, width, spp)
    if predictor == 2:
        # horizontal differencing: integrate along the row, modulo sample width
        page = np.cumsum(page.astype(np.uint64), axis=1, dtype=np.uint64)
        page = (page & ((1 << depth) - 1)).astype(np.uint16)
    return page, depth, next_offset


def encode_tiff(
    pages: list[np.ndarray], bit_depth: int = 16, compression: int = 8
) -> bytes:
    """Encode (h, w) or (h, w, spp) pages as a little-endian multi-page TIFF.

    One strip per page; spp must be 1 or 3. compression: 1 = none, 8 = deflate.
    """
    if bit_depth not in (8, 16):
        raise ValueError(f"TIFF bit depth must be 8 or 16, got {bit_depth}")
    if compression not in (1, 8):
        raise ValueError(f"TIFF compression must be 1 or 8, got {compression}")
    if not pages:
        raise ValueError("need at least one page")

    out = bytearray(struct.pack("<2sHI", b"II", 42, 0))  # IFD0 offset patched below
    prev_ifd_link = 4

    for page in pages:
        arr = page if page.ndim == 3 else page[:, :, None]
        height, width, spp = arr.shape
        if spp not in (1, 3):
            raise ValueError(f"TIFF encoder supports 1 or 3 samples/pixel, got {spp}")
        if width == 0 or height == 0:
            raise ZeroPixel("cannot encode an image with zero width or height")
        if arr.size and int(arr.max()) >= 1 << bit_depth:
            raise ValueError(f"sample exceeds {bit_depth}-bit range")

        dtype = "<u2" if bit_depth == 16 else np.uint8
        pixel_bytes = np.ascontiguousarray(arr.astype(dtype)).tobytes()
        strip = zlib.compress(pixel_bytes, 6) if compression == 8 else pixel_bytes

        if len(out) % 2:
            out += b"\x00"
        strip_offset = len(out)
        out += strip

        # BitsPerSample needs external storage when spp == 3 (6 bytes > 4)
        bits_value = (bit_depth,) * spp
        if spp * 2 > 4:
            if len(out) % 2:
                out += b"\x00"
            bits_offset = len(out)
            out += struct.pack("<" + "H" * spp, *bits_value)
        else:
            bits_offset = None

        entries = [
            (_IMAGE_WIDTH, 4, 1, width),
            (_IMAGE_LENGTH, 4, 1, height),
            (
                _BITS_PER_SAMPLE,
                3,
                spp,
                bits_offset if bits_offset is not None else bit_depth,
            ),
            (_COMPRESSION, 3, 1, compression),
            (_PHOTOMETRIC, 3, 1, 1 if spp == 1 else 2),
            (_STRIP_OFFSETS, 4, 1, strip_offset),
            (_SAMPLES_PER_PIXEL, 3, 1, spp),
            (_ROWS_PER_STRIP, 4, 1, height),
            (_STRIP_BYTE_COUNTS, 4, 1, len(strip)),
            (_SAMPLE_FORMAT, 3, 1, 1),
        ]

        if len(out) % 2:
            out += b"\x00"
        ifd_offset = len(out)
        struct.pack_into("<I", out, prev_ifd_link, ifd_offset)
        out += struct.pack("<H", len(entries))
        for tag, vtype, count, value in entries:
            if vtype == 3 and count == 1:
                out += struct.pack("<HHIHH", tag, vtype, count, value, 0)
            else:
                out += struct.pack("<HHII", tag, vtype, count, value)
        prev_ifd_link = len(out)
        out += struct.pack("<I", 0)

    return bytes(out)
