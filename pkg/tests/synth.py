"""Deterministic synthetic source trees, tables and configs for the
pipeline, CLI and acceptance tests."""

import hashlib
import json
from pathlib import Path

import numpy as np

from bioimagepub import codec_png, codec_tiff


def gray(seed, w, h, depth):
    r = np.random.default_rng(seed)
    return r.integers(0, 1 << depth, size=(h, w), dtype=np.uint16)


def rgb(seed, w, h, depth):
    r = np.random.default_rng(seed)
    return r.integers(0, 1 << depth, size=(h, w, 3), dtype=np.uint16)


def png_bytes(seed, *, w=10, h=7, depth=8, channels=1):
    arr = gray(seed, w, h, depth) if channels == 1 else rgb(seed, w, h, depth)
    return codec_png.encode_png(arr, bit_depth=depth)


def tiff_bytes(seed, *, w=10, h=7, depth=16, channels=1, pages=1):
    arrs = [
        gray(seed * 31 + i, w, h, depth) if channels == 1 else rgb(seed * 31 + i, w, h, depth)
        for i in range(pages)
    ]
    return codec_tiff.encode_tiff(arrs, bit_depth=depth)


ANSWERS = """\
# preseeded dataset card answers
license = CC-BY-4.0
pretty_name = Pilot Screen
authors = Ada Lovelace, Grace Hopper
citation = @misc{pilot2026, title={Pilot Screen}}
description = Synthetic pilot imaging dataset used by the integration tests.
"""


def write_small_corpus(root):
    """6 single-plane images across train/ and test/, PNG and TIFF mixed."""
    root = Path(root)
    files = {
        "train/img00.png": png_bytes(1, depth=8),
        "train/img01.png": png_bytes(2, depth=8, channels=3),
        "train/img02.tif": tiff_bytes(3, depth=16),
        "train/img03.png": png_bytes(4, depth=16),
        "test/img04.tif": tiff_bytes(5, depth=8, channels=3),
        "test/img05.png": png_bytes(6, depth=16),
    }
    for rel, data in files.items():
        path = root / rel
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(data)
    return files


def write_acceptance_corpus(root):
    """19 source files that convert into exactly 20 images: 18 single-plane
    files plus one two-page TIFF, mixing 8/16-bit and gray/RGB."""
    root = Path(root)
    files = {}
    for i in range(12):
        depth = 8 if i % 2 == 0 else 16
        channels = 3 if i % 3 == 0 else 1
        if i == 5:
            files[f"train/img{i:02d}.tif"] = tiff_bytes(
                100 + i, depth=depth, channels=channels, pages=2
            )
        elif i % 4 == 1:
            files[f"train/img{i:02d}.tif"] = tiff_bytes(100 + i, depth=depth, channels=channels)
        else:
            files[f"train/img{i:02d}.png"] = png_bytes(100 + i, depth=depth, channels=channels)
    for i in range(12, 19):
        depth = 16 if i % 2 == 0 else 8
        channels = 3 if i % 5 == 0 else 1
        if i % 3 == 0:
            files[f"test/img{i:02d}.tif"] = tiff_bytes(100 + i, depth=depth, channels=channels)
        else:
            files[f"test/img{i:02d}.png"] = png_bytes(100 + i, depth=depth, channels=channels)
    for rel, data in files.items():
        path = root / rel
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(data)
    return files


def write_idr_table(path, keys, *, gene="tp53", phenotype="round"):
    """IDR-style table keyed by full file names."""
    lines = ["Image Name,Gene Symbol,Phenotype Term Name"]
    lines.extend(f"{key},{gene},{phenotype}" for key in keys)
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_user_table(path, rows):
    """User table keyed by stem: rows is {stem: {column: value}}."""
    columns = sorted({c for cols in rows.values() for c in cols})
    lines = [",".join(["file_name", *columns])]
    for stem, cols in rows.items():
        lines.append(",".join([stem, *(cols.get(c, "") for c in columns)]))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def base_config(source_root, hub_endpoint, workdir, **overrides):
    cfg = {
        "source": {"root": str(source_root)},
        "split_rules": [["train/**", "train"], ["*", "test"]],
        "target": {"endpoint": hub_endpoint, "repo_id": "lab/pilot"},
        "workdir": str(workdir),
        "card_answers": "answers.txt",
    }
    cfg.update(overrides)
    return cfg


def write_config(directory, cfg):
    directory = Path(directory)
    path = directory / "config.json"
    path.write_text(json.dumps(cfg, indent=2), encoding="utf-8")
    answers = directory / "answers.txt"
    if not answers.exists():
        answers.write_text(ANSWERS, encoding="utf-8")
    return path


def tree_hash(root):
    """Order-independent digest of a directory: every file's path and bytes."""
    digest = hashlib.sha256()
    for path in sorted(Path(root).rglob("*")):
        if path.is_file():
            rel = path.relative_to(root).as_posix()
            digest.update(rel.encode() + b"\0")
            digest.update(hashlib.sha256(path.read_bytes()).digest())
    return digest.hexdigest()
