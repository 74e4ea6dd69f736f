#!/usr/bin/env python3
"""Download the UCI airfoil self-noise data and store it in the dataset
registry format (CSV, header row, target in the last column).

Usage: python scripts/fetch_airfoil.py [datasets/]

Requires direct internet access to archive.ics.uci.edu; run it on a
connected machine and copy datasets/airfoil.csv into the registry if this
environment is offline.
"""

import csv
import sys
import urllib.request
from pathlib import Path

URL = "https://archive.ics.uci.edu/ml/machine-learning-databases/00291/airfoil_self_noise.dat"
COLUMNS = [
    "frequency",
    "angle_of_attack",
    "chord_length",
    "velocity",
    "displacement_thickness",
    "sound_pressure",
]


def main() -> int:
    out_dir = Path(sys.argv[1]) if len(sys.argv) > 1 else Path("datasets")
    out_dir.mkdir(parents=True, exist_ok=True)
    raw = urllib.request.urlopen(URL, timeout=60).read().decode("utf-8")
    rows = [line.split() for line in raw.splitlines() if line.strip()]
    if not all(len(r) == len(COLUMNS) for r in rows):
        raise SystemExit("unexpected column count in downloaded data")
    out = out_dir / "airfoil.csv"
    with open(out, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(COLUMNS)
        writer.writerows(rows)
    print(f"wrote {out} ({len(rows)} rows)")
    return 0


if __name__ == "__main__":
    sys.exit(main())
