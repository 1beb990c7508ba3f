"""Rebuild the committed synthetic fixtures.

Run from the repository root: ``python tests/fixtures/regenerate.py``.
Each fixture equals ``stdhl synth`` output for the flags listed in ``FIXTURES``;
the large one is gzipped with a zero timestamp so the bytes are reproducible.
"""

import gzip
import sys
import tempfile
from pathlib import Path

from stdhl.cli import main

HERE = Path(__file__).resolve().parent

FIXTURES = {
    "synth_10x8760.csv.gz": ["--farms", "10", "--length", "8760", "--seed", "0", "--nwp-noise", "1.0"],
    "synth_4x300.csv": ["--farms", "4", "--length", "300", "--seed", "3"],
    "memory_2x1500.csv": ["--farms", "2", "--length", "1500", "--seed", "0", "--memory-lag", "12"],
}


def render(name: str) -> bytes:
    """Bytes the fixture ``name`` should contain."""
    with tempfile.TemporaryDirectory() as tmp:
        path = Path(tmp) / "out.csv"
        if main(["synth", *FIXTURES[name], "--out", str(path)]) != 0:
            raise RuntimeError(f"synth failed for {name}")
        raw = path.read_bytes()
    return gzip.compress(raw, mtime=0) if name.endswith(".gz") else raw


if __name__ == "__main__":
    for fixture in sys.argv[1:] or FIXTURES:
        (HERE / fixture).write_bytes(render(fixture))
        print(fixture, (HERE / fixture).stat().st_size)
