#!/usr/bin/env python3
"""Generate a synthetic bioimaging corpus plus a ready-to-run pipeline config.

Writes under OUT:
  src/train/*.png|tif, src/test/*    mixed 8/16-bit gray and RGB images
  idr.csv, user.csv                  two annotation tables keyed to the images
  answers.txt                        dataset card answers
  config.json                        config pointing at --endpoint

Publish afterwards with:
  bioimagepub publish --config OUT/config.json
"""

import argparse
import json
from pathlib import Path

import numpy as np

from bioimagepub.codec_png import encode_png
from bioimagepub.codec_tiff import encode_tiff

ANSWERS = """\
# dataset card answers
license = CC-BY-4.0
pretty_name = Synthetic Pilot Screen
description = Randomly generated microscopy-like images for pipeline demos.
authors = Ada Lovelace, Grace Hopper
citation = @misc{synthetic2026, title={Synthetic Pilot Screen}, year={2026}}
tags = microscopy, synthetic, demo
"""


def random_image(rng, *, depth, channels, w=48, h=32):
    shape = (h, w) if channels == 1 else (h, w, channels)
    return rng.integers(0, 1 << depth, size=shape, dtype=np.uint16)


def write_images(root, count, seed):
    """Deterministic mix: alternating depths, every third image RGB, one
    two-page TIFF, roughly 60/40 train/test."""
    rng = np.random.default_rng(seed)
    names = []
    for i in range(count):
        split = "train" if i < max(1, (count * 3) // 5) else "test"
        depth = 8 if i % 2 == 0 else 16
        channels = 3 if i % 3 == 0 else 1
        if i == min(5, count - 1):
            data = encode_tiff(
                [random_image(rng, depth=depth, channels=1) for _ in range(2)],
                bit_depth=depth,
            )
            name = f"{split}/img{i:02d}.tif"
        elif i % 4 == 1:
            data = encode_tiff(
                [random_image(rng, depth=depth, channels=channels)], bit_depth=depth
            )
            name = f"{split}/img{i:02d}.tif"
        else:
            data = encode_png(random_image(rng, depth=depth, channels=channels), depth)
            name = f"{split}/img{i:02d}.png"
        path = root / name
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(data)
        names.append(name)
    return names


def write_tables(out, names, rng):
    genes = ["tp53", "brca1", "kras", "myc"]
    phenotypes = ["round", "elongated", "fragmented"]
    idr = ["Image Name,Gene Symbol,Phenotype Term Name"]
    for name in names:
        idr.append(
            f"{name.split('/')[-1]},{rng.choice(genes)},{rng.choice(phenotypes)}"
        )
    (out / "idr.csv").write_text("\n".join(idr) + "\n", encoding="utf-8")

    user = ["file_name,treatment"]
    for name in names[::3]:
        stem = name.split("/")[-1].rsplit(".", 1)[0]
        user.append(f"{stem},{rng.choice(['dmso', 'taxol', 'etoposide'])}")
    (out / "user.csv").write_text("\n".join(user) + "\n", encoding="utf-8")


def write_corpus(out, *, images, seed, endpoint, repo_id):
    out = Path(out)
    names = write_images(out / "src", images, seed)
    write_tables(out, names, np.random.default_rng(seed + 1))
    (out / "answers.txt").write_text(ANSWERS, encoding="utf-8")
    config = {
        "source": {"root": "src"},
        "split_rules": [["train/**", "train"], ["*", "test"]],
        "annotation_sources": [
            {"kind": "idr", "path": "idr.csv", "key_column": "Image Name"},
            {"kind": "user", "path": "user.csv", "key_column": "file_name"},
        ],
        "card_answers": "answers.txt",
        "target": {"endpoint": endpoint, "repo_id": repo_id},
        "workdir": "work",
    }
    config_path = out / "config.json"
    config_path.write_text(json.dumps(config, indent=2) + "\n", encoding="utf-8")
    return config_path, names


def main():
    parser = argparse.ArgumentParser(description=__doc__.split("\n", 1)[0])
    parser.add_argument("out", help="output directory")
    parser.add_argument("--images", type=int, default=19, help="source image count")
    parser.add_argument("--seed", type=int, default=7)
    parser.add_argument("--endpoint", default="http://127.0.0.1:8080")
    parser.add_argument("--repo-id", default="lab/synthetic-pilot")
    args = parser.parse_args()

    config_path, names = write_corpus(
        args.out,
        images=args.images,
        seed=args.seed,
        endpoint=args.endpoint,
        repo_id=args.repo_id,
    )
    print(f"wrote {len(names)} images and config to {config_path}")
    print(f"next: bioimagepub publish --config {config_path} --dry-run")


if __name__ == "__main__":
    main()
