#!/usr/bin/env python3
"""Fetch the IMDB movie review archive and unpack it to data/aclImdb.

Needs network access. The archive is ~84 MB; the extracted tree follows the
{train,test}/{pos,neg}/<id>_<rating>.txt layout that `wordcam prepare
--data-format imdb` and the desk-scale acceptance test expect.

Usage:
    python scripts/download_imdb.py [--dest data]
"""

import argparse
import sys
import tarfile
import urllib.request
from pathlib import Path

URL = "https://ai.stanford.edu/~amaas/data/sentiment/aclImdb_v1.tar.gz"


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--dest", default="data", help="directory to unpack into")
    parser.add_argument("--url", default=URL)
    args = parser.parse_args()

    dest = Path(args.dest)
    final = dest / "aclImdb"
    if final.is_dir():
        print(f"{final} already exists; nothing to do")
        return 0
    dest.mkdir(parents=True, exist_ok=True)
    archive = dest / "aclImdb_v1.tar.gz"

    if not archive.exists():
        print(f"downloading {args.url} ...")
        with urllib.request.urlopen(args.url) as resp, open(archive, "wb") as out:
            while True:
                block = resp.read(1 << 20)
                if not block:
                    break
                out.write(block)
                sys.stdout.write(".")
                sys.stdout.flush()
        print(f"\nsaved {archive} ({archive.stat().st_size / 1e6:.0f} MB)")

    print("extracting ...")
    with tarfile.open(archive, "r:gz") as tar:
        tar.extractall(dest)
    print(f"done: {final}")
    print("point the acceptance test at it with WORDCAM_IMDB_DIR="
          f"{final.resolve()}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
