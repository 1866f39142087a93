"""Verify the bundled lynx/hare series against its pinned checksum.

The file holds the annual Hudson's Bay Company pelt counts for 1900-1920 in thousands, with
header ``t,x1,x2`` (x1 hare, x2 lynx). To use a copy obtained elsewhere, write it in that
layout to data/lynx_hare.csv and rerun this script.

    python scripts/fetch_lynx_hare.py
"""

import hashlib
import sys
from pathlib import Path

PATH = Path(__file__).resolve().parents[1] / "data" / "lynx_hare.csv"
SHA256 = "11b4c6bdf5ca20fc7e88e72bd6f8d50e76e4af46ca06b9bb1d5c43efb7442b95"


def main() -> int:
    if not PATH.exists():
        print(f"missing {PATH}; place the 1900-1920 series there (header t,x1,x2)")
        return 1
    digest = hashlib.sha256(PATH.read_bytes()).hexdigest()
    if digest != SHA256:
        print(f"checksum mismatch for {PATH}:\n  expected {SHA256}\n  found    {digest}")
        return 1
    print(f"{PATH.name}: checksum ok")
    return 0


if __name__ == "__main__":
    sys.exit(main())
