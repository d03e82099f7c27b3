#!/usr/bin/env python3
"""Write the built-in scripted suite as one world document per file.

The exported directory can be edited and passed back with ``timeline-qa --suite DIR``.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

REPO_ROOT = Path(__file__).resolve().parent.parent
SRC_ROOT = REPO_ROOT / "src"
if str(SRC_ROOT) not in sys.path:
    sys.path.insert(0, str(SRC_ROOT))

from timeline_qa.harness.default_suite import default_suite  # noqa: E402
from timeline_qa.harness.suite import write_suite  # noqa: E402
from timeline_qa.outputs import write_manifest  # noqa: E402


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument(
        "--out",
        default=str(REPO_ROOT / "out" / "suites" / "default"),
        help="Directory receiving <world_id>.json files (default: out/suites/default)",
    )
    p.add_argument(
        "--no-manifest",
        action="store_true",
        help="Skip writing manifest.json next to the world files",
    )
    return p


def main(argv: list[str]) -> int:
    args = build_parser().parse_args(argv)
    out_dir = Path(args.out)
    written = write_suite(default_suite(), out_dir)
    if not args.no_manifest:
        write_manifest(out_dir, written)
    for path in written:
        print(path.as_posix())
    return 0


if __name__ == "__main__":
    raise SystemExit(main(sys.argv[1:]))
