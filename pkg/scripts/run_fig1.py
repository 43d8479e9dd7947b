"""Sweep the two-user rate region for both modes and write the result files.

Usage: python3 scripts/run_fig1.py [--out DIR] [--jobs N] [--horizons 10000,100000,1000000]
"""

import argparse
import json
import sys
import tempfile
from pathlib import Path

from ehmac.cli import main as cli_main
from ehmac.config import bundled_config


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="out/fig1")
    ap.add_argument("--jobs", type=int, default=1)
    ap.add_argument("--horizons", help="comma-separated horizons (default: from the bundled config)")
    args = ap.parse_args()
    cfg = json.loads(bundled_config().read_text())
    if args.horizons:
        cfg["sweep"]["m_slots"] = [int(m) for m in args.horizons.split(",")]
    with tempfile.TemporaryDirectory() as tmp:
        path = Path(tmp) / "fig1.json"
        path.write_text(json.dumps(cfg))
        return cli_main(["region", "--config", str(path), "--out", args.out, "--jobs", str(args.jobs)])


if __name__ == "__main__":
    sys.exit(main())
