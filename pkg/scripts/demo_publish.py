#!/usr/bin/env python3
"""End-to-end demo against an in-process mock hub.

Generates a synthetic corpus, publishes it, re-publishes to show the
idempotent skip path, then validates the materialized workdir.
"""

import argparse
import sys
import tempfile
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent))
from make_synthetic_dataset import write_corpus  # noqa: E402

from bioimagepub import pipeline  # noqa: E402
from bioimagepub.mockhub import MockHub  # noqa: E402


def run_demo(root, *, images, seed):
    with MockHub() as hub:
        config_path, _ = write_corpus(
            root, images=images, seed=seed,
            endpoint=hub.endpoint, repo_id="lab/demo",
        )
        config = pipeline.PipelineConfig.from_file(config_path)

        print(f"== inspect ({hub.endpoint})")
        for line in pipeline.run_inspect(config).lines():
            print(line)

        print("== publish")
        for line in pipeline.run_publish(config).lines():
            print(line)

        print("== publish again (should skip everything)")
        for line in pipeline.run_publish(config).lines():
            print(line)

        state = hub.snapshot()
        tree = state["repos"]["lab/demo"]["revisions"]["main"]["tree"]
        print(f"== hub state: {len(tree)} files, {state['commit_count']} commit(s)")
        for path in sorted(tree):
            print(f"  {path} ({tree[path]['size']} bytes)")

        violations = pipeline.run_validate(config.workdir)
        print("== validate:", "sound" if not violations else violations)
        return 0 if not violations else 1


def main():
    parser = argparse.ArgumentParser(description=__doc__.split("\n", 1)[0])
    parser.add_argument("--root", help="working directory (default: a temp dir)")
    parser.add_argument("--images", type=int, default=19)
    parser.add_argument("--seed", type=int, default=7)
    args = parser.parse_args()

    if args.root:
        Path(args.root).mkdir(parents=True, exist_ok=True)
        return run_demo(Path(args.root), images=args.images, seed=args.seed)
    with tempfile.TemporaryDirectory(prefix="bioimagepub-demo-") as tmp:
        return run_demo(Path(tmp), images=args.images, seed=args.seed)


if __name__ == "__main__":
    raise SystemExit(main())
