"""Synthetic sensor series: 1 Hz samples, diurnal swing, random walk.

Stands in for private wearable datasets in the compression and end-to-end
studies: values combine a sinusoid with a one-day period (circadian
shape), a slow Gaussian random walk (sensor drift), and fixed-precision
text encoding -- slowly varying, locally redundant data of the kind such
devices emit. Fully determined by the seed.
"""

from __future__ import annotations

import math
import random

from .chunks import DataRecord

DAY_MS = 86_400_000


def generate_records(start_ts: int = 0, count: int = 86_400, seed: int = 0,
                     interval_ms: int = 1000, base: float = 60.0,
                     amplitude: float = 25.0, walk_step: float = 0.35,
                     period_ms: int = DAY_MS) -> list[DataRecord]:
    """``count`` records at ``interval_ms`` spacing starting at ``start_ts``."""
    rng = random.Random(seed)
    walk = 0.0
    records = []
    for i in range(count):
        ts = start_ts + i * interval_ms
        walk += rng.gauss(0.0, walk_step)
        phase = 2.0 * math.pi * ((ts % period_ms) / period_ms)
        value = base + amplitude * math.sin(phase) + walk
        records.append(DataRecord(ts, f"{value:.4f}".encode()))
    return records
