#!/usr/bin/env python3
"""Regenerates fixtures/demo.jsonl: 48 hourly records for two installations."""
import json
import math
import random
from datetime import datetime, timedelta, timezone

END = datetime(2024, 3, 2, 23, tzinfo=timezone.utc)
SITES = [
    (101, 50.0614, 19.9366, 22.0),  # city centre, crosses the pm25 limit most evenings
    (202, 50.0890, 19.8400, 9.0),   # suburb, one evening spike
]


def main():
    rng = random.Random(20240302)
    lines = []
    for inst, lat, lon, base in SITES:
        for i in range(47, -1, -1):
            ts = END - timedelta(hours=i)
            phase = 2 * math.pi * (ts.hour - 3) / 24
            pm25 = base + 0.45 * base * math.sin(phase) + rng.uniform(-1.5, 1.5)
            if inst == 202 and ts.day == 2 and ts.hour in (19, 20):
                pm25 += 12.0
            values = {
                "pm1": round(pm25 * 0.7, 1),
                "pm25": round(pm25, 1),
                "pm10": round(pm25 * 1.5 + rng.uniform(0, 3), 1),
                "temperature": round(4.0 + 5.0 * math.sin(phase), 1),
                "humidity": round(70.0 - 15.0 * math.sin(phase), 1),
                "pressure": round(1016.0 + rng.uniform(-2, 2), 1),
            }
            lines.append({"installation_id": inst, "lat": lat, "lon": lon,
                          "ts": ts.strftime("%Y-%m-%dT%H:%M:%SZ"), "values": values})
    with open("fixtures/demo.jsonl", "w") as f:
        for rec in lines:
            f.write(json.dumps(rec) + "\n")


if __name__ == "__main__":
    main()
