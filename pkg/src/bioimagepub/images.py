"""Decode source rasters and re-encode them into 16-bit publication formats.

The default policy stores raw sample values unchanged inside a 16-bit
container (lossless); optional full-range rescaling maps [0, 2^d - 1] onto
[0, 65535] with exact integer rounding.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from . import codec_png, codec_tiff
from .errors import CorruptImage, PolicyMismatch, UnsupportedFormat

FULL_SCALE = 65535


class TargetFormat(str, Enum):
    PNG16 = "png16"
    TIFF16 = "tiff16"

    @property
    def extension(self) -> str:
        return ".png" if self is TargetFormat.PNG16 else ".tif"

    @property
    def media_type(self) -> str:
        return "image/png" if self is TargetFormat.PNG16 else "image/tiff"


class ScalingMode(str, Enum):
    PRESERVE = "preserve"
    RESCALE_TO_FULL = "rescale_to_full"


@dataclass(frozen=True)
class RawImage:
    """Decoded pixels: (planes, height, width, channels) unsigned samples."""

    width: int
    height: int
    channels: int
    planes: int
    bit_depth: int
    samples: np.ndarray

    def __post_init__(self):
        if min(self.width, self.height, self.channels, self.planes) <= 0:
            raise ValueError("all image dimensions must be positive")
        if self.bit_depth not in (8, 12, 16):
            raise ValueError(f"bit depth must be 8, 12 or 16, got {self.bit_depth}")
        expected = (self.planes, self.height, self.width, self.channels)
        if self.samples.shape != expected:
            raise ValueError(f"samples shape {self.samples.shape} != {expected}")
        if self.samples.dtype != np.uint16:
            raise ValueError("samples must be uint16")
        if self.samples.size and int(self.samples.max()) >= 1 << self.bit_depth:
            raise ValueError(f"sample exceeds {self.bit_depth}-bit range")

    @classmethod
    def from_planes(cls, planes: list[np.ndarray], bit_depth: int) -> "RawImage":
        """Stack per-page (h, w, c) arrays into a RawImage."""
        stack = np.stack([p if p.ndim == 3 else p[:, :, None] for p in planes])
        n, h, w, c = stack.shape
        return cls(w, h, c, n, bit_depth, stack.astype(np.uint16))


@dataclass(frozen=True)
class ConversionPolicy:
    target_format: TargetFormat = TargetFormat.PNG16
    scaling: ScalingMode = ScalingMode.PRESERVE
    channel_split: bool = False
    plane_split: bool = True


@dataclass(frozen=True)
class ConvertedImage:
    """One encoded output file plus enough provenance to build manifests."""

    relative_path: str
    format: TargetFormat
    width: int
    height: int
    data: bytes = field(repr=False)
    sha256: bytes = field(repr=False)
    source_path: str = ""

    @property
    def sha256_hex(self) -> str:
        return self.sha256.hex()


def decode(source_bytes: bytes, filename_hint: str = "") -> RawImage:
    """Decode PNG or TIFF bytes; multi-page TIFFs become multiple planes."""
    if not source_bytes:
        raise UnsupportedFormat(f"empty input ({filename_hint or 'unnamed'})")

    if source_bytes.startswith(codec_png.PNG_SIGNATURE):
        samples, depth = codec_png.decode_png(source_bytes)
        return RawImage.from_planes([samples], depth)

    if source_bytes[:4] in (b"II*\x00", b"MM\x00*"):
        pages, depth = codec_tiff.decode_tiff(source_bytes)
        shapes = {p.shape for p in pages}
        if len(shapes) != 1:
            raise CorruptImage(f"TIFF pages have mixed geometry: {sorted(shapes)}")
        return RawImage.from_planes(pages, depth)

    raise UnsupportedFormat(
        f"unrecognized magic bytes {source_bytes[:4]!r} ({filename_hint or 'unnamed'})"
    )


def scale_sample(value: int, bit_depth: int, scaling: ScalingMode) -> int:
    """Map one sample into a 16-bit container.

    RESCALE_TO_FULL computes round(value * 65535 / (2^bit_depth - 1)) in exact
    integer arithmetic. The denominator is odd, so exact .5 ties cannot occur
    and round-half-up equals mathematical rounding.
    """
    if not 0 <= value < 1 << bit_depth:
        raise ValueError(f"sample {value} out of {bit_depth}-bit range")
    if scaling is ScalingMode.PRESERVE:
        return value
    denom = (1 << bit_depth) - 1
    return (value * FULL_SCALE + denom // 2) // denom


def _scale_array(samples: np.ndarray, bit_depth: int, scaling: ScalingMode) -> np.ndarray:
    if scaling is ScalingMode.PRESERVE:
        return samples
    denom = (1 << bit_depth) - 1
    scaled = (samples.astype(np.uint64) * FULL_SCALE + denom // 2) // denom
    return scaled.astype(np.uint16)


def convert(
    img: RawImage,
    policy: ConversionPolicy,
    base_path: str,
    source_path: str | None = None,
) -> list[ConvertedImage]:
    """Re-encode one RawImage into one or more 16-bit output files.

    File naming: base_path + "_z{plane}" + "_c{channel}" + extension, each
    suffix present only when the corresponding axis is split and longer
    than one. source_path is carried through for provenance and defaults
    to base_path.
    """
    fmt = policy.target_format
    src = base_path if source_path is None else source_path

    if policy.channel_split:
        channel_groups: list[list[int]] = [[c] for c in range(img.channels)]
    elif img.channels in (1, 3):
        channel_groups = [list(range(img.channels))]
    else:
        raise PolicyMismatch(
            f"{img.channels}-channel image cannot be stored unsplit; "
            "enable channel_split or provide 1/3 channels"
        )

    if policy.plane_split:
        plane_groups: list[list[int]] = [[p] for p in range(img.planes)]
    elif img.planes == 1 or fmt is TargetFormat.TIFF16:
        plane_groups = [list(range(img.planes))]  # multi-page TIFF holds the stack
    else:
        raise PolicyMismatch(
            f"{img.planes}-plane image cannot be stored in a single PNG; "
            "enable plane_split or choose TIFF output"
        )

    scaled = _scale_array(img.samples, img.bit_depth, policy.scaling)

    outputs: list[ConvertedImage] = []
    for planes in plane_groups:
        for channels in channel_groups:
            name = base_path
            if policy.plane_split and img.planes > 1:
                name += f"_z{planes[0]}"
            if policy.channel_split and img.channels > 1:
                name += f"_c{channels[0]}"
            name += fmt.extension

            pages = []
            for p in planes:
                page = scaled[p][:, :, channels]
                pages.append(page[:, :, 0] if len(channels) == 1 else page)

            if fmt is TargetFormat.PNG16:
                payload = codec_png.encode_png(pages[0], bit_depth=16)
            else:
                payload = codec_tiff.encode_tiff(pages, bit_depth=16)

            outputs.append(
                ConvertedImage(
                    relative_path=name,
                    format=fmt,
                    width=img.width,
                    height=img.height,
                    data=payload,
                    sha256=hashlib.sha256(payload).digest(),
                    source_path=src,
                )
            )
    return outputs
