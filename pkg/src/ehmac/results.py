"""Result files: region CSV, calibration and metadata JSON, per-slot traces.

Floats are written with ``repr`` so every file reloads to the same values.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ehmac.dual import CalibrationReport
from ehmac.model import Mode
from ehmac.sweep import RegionResult


def region_header(n_users: int) -> list[str]:
    idx = range(1, n_users + 1)
    return (["mode", "m_slots"] + [f"mu_{k}" for k in idx] + [f"rate_{k}" for k in idx]
            + [f"outage_{k}" for k in idx] + ["mean_bs_power", "converged"])


@dataclass(frozen=True)
class RegionRow:
    mode: Mode
    m_slots: int
    mu: tuple[float, ...]
    rates: tuple[float, ...]
    outage: tuple[float, ...]
    mean_bs_power: float
    converged: bool


def region_rows(region: RegionResult) -> list[RegionRow]:
    return [RegionRow(p.mode, p.m_slots, tuple(map(float, p.weights.mu)),
                      tuple(map(float, p.result.rates)), tuple(map(float, p.result.outage_fraction)),
                      float(p.result.mean_bs_power), p.converged) for p in region.points]


def write_region_csv(rows: list[RegionRow], path: str | Path) -> None:
    if not rows:
        raise ValueError("no rows to write")
    n = len(rows[0].mu)
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(region_header(n))
        for r in rows:
            w.writerow([r.mode.value, r.m_slots, *map(repr, r.mu), *map(repr, r.rates),
                        *map(repr, r.outage), repr(r.mean_bs_power), str(r.converged).lower()])


def read_region_csv(path: str | Path) -> list[RegionRow]:
    with open(path, newline="") as f:
        reader = csv.reader(f)
        header = next(reader)
        n = (len(header) - 4) // 3
        if header != region_header(n):
            raise ValueError(f"unexpected region header in {path}")
        rows = []
        for rec in reader:
            vals = rec[2:2 + 3 * n]
            rows.append(RegionRow(Mode(rec[0]), int(rec[1]),
                                  tuple(float(v) for v in vals[:n]),
                                  tuple(float(v) for v in vals[n:2 * n]),
                                  tuple(float(v) for v in vals[2 * n:]),
                                  float(rec[-2]), rec[-1] == "true"))
    return rows


def calibration_records(region: RegionResult) -> list[dict]:
    seen, out = set(), []
    for p in region.points:
        key = (p.mode, tuple(p.weights.mu))
        if key in seen:
            continue
        seen.add(key)
        out.append({"mode": p.mode.value, "mu": p.weights.mu.tolist(),
                    **p.calibration.to_dict(with_log=True)})
    return out


def write_json(obj, path: str | Path) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def read_json(path: str | Path):
    return json.loads(Path(path).read_text())


def read_calibration(path: str | Path) -> CalibrationReport:
    d = read_json(path)
    return CalibrationReport.from_dict(d)


def write_trace(arrays: dict, epsilon: float, path: str | Path) -> None:
    """Per-slot rows ``slot, a, p0, p_d_*, p_out_*, b_*, rate_*``."""
    n = arrays["p_d"].shape[1]
    idx = range(1, n + 1)
    header = (["slot", "a", "p0"] + [f"p_d_{k}" for k in idx] + [f"p_out_{k}" for k in idx]
              + [f"b_{k}" for k in idx] + [f"rate_{k}" for k in idx])
    cols = [np.asarray(arrays["a"]), arrays["p0"], *arrays["p_d"].T, *arrays["p_out"].T,
            *arrays["battery"].T, *arrays["rates"].T]
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(header)
        for t in range(arrays["p0"].size):
            w.writerow([t, int(cols[0][t])] + [repr(float(c[t])) for c in cols[1:]])
