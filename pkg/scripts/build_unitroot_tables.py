"""Regenerate ``src/dynpanel/data/unitroot_moments.json``.

Every cell is a seeded 50k-replication simulation, so the output is
reproducible bit for bit on a given numpy version.
"""

import json
import sys
from pathlib import Path

from dynpanel.unit_root import (
    DETERMINISTICS, simulate_ips_moments, simulate_llc_adjustment,
)

REPS = 50_000
LLC_GRID = list(range(5, 31)) + [35, 40, 45, 50, 55, 60, 70, 80, 90, 100, 150, 200, 250, 500]
IPS_GRID = list(range(5, 31)) + [35, 40, 45, 50, 55, 60, 70, 80, 90, 100, 150, 200, 300, 500]
IPS_LAGS = range(0, 5)


def main(out: Path) -> None:
    table = {"reps": REPS, "llc": {}, "ips": {}}
    for d, det in enumerate(DETERMINISTICS):
        table["llc"][det] = {
            str(t): list(simulate_llc_adjustment(t, det, reps=REPS, seed=1000 + 7 * t + d))
            for t in LLC_GRID
        }
        table["ips"][det] = {}
        for p in IPS_LAGS:
            cells = {}
            for t in IPS_GRID:
                if t < 2 * p + d + 4:
                    continue
                seed = 500_000 + 1000 * p + 7 * t + d
                cells[str(t)] = list(simulate_ips_moments(t, p, det, reps=REPS, seed=seed))
            table["ips"][det][str(p)] = cells
        print(det, "done", file=sys.stderr)
    out.write_text(json.dumps(table, indent=1, sort_keys=True) + "\n")


if __name__ == "__main__":
    main(Path(sys.argv[1] if len(sys.argv) > 1 else "src/dynpanel/data/unitroot_moments.json"))
