"""Generate the bundled two-resource level-curve system (src/mricap/data/two_resource.json).

A 24-hour day with six weather scenarios. The two variable resources are
listed first: a conventional unit (GEN) and a solar plant (SOLAR) whose
output fades before the evening peak. Fixed background capacity follows.
Every thermal unit uses iid hourly outages so the system is enumerable.

    python scripts/make_two_resource.py
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

OUT = Path(__file__).resolve().parents[1] / "src" / "mricap" / "data" / "two_resource.json"

T = 24
WEIGHTS = [0.1, 0.15, 0.25, 0.25, 0.15, 0.1]
PEAK = [900.0, 950.0, 1000.0, 1040.0, 1080.0, 1120.0]
SOLAR_CLEARNESS = [1.0, 0.95, 0.9, 0.85, 0.8, 0.7]
N_UNITS = 10
BASE = 400.0


def build() -> dict:
    hod = np.arange(T)
    shape = 0.62 + 0.38 * np.exp(-0.5 * ((hod - 18.0) / 3.0) ** 2)
    sun = np.clip(np.cos(np.pi * (hod - 13.0) / 15.0), 0.0, None) ** 1.2
    load = [{"weight": w, "demand": np.round(p * shape, 3).tolist()} for w, p in zip(WEIGHTS, PEAK)]
    solar = [np.round(400.0 * k * sun, 3).tolist() for k in SOLAR_CLEARNESS]
    resources = {
        "GEN": {"type": "thermal", "parameters": {"icap": 100.0, "for_rate": 0.03, "outage_mode": "iid"}},
        "SOLAR": {"type": "intermittent", "parameters": {"icap": 400.0, "profiles": solar}},
        "BASE": {"type": "perfect", "parameters": {"icap": BASE}},
    }
    for i in range(1, N_UNITS + 1):
        resources[f"U{i}"] = {"type": "thermal",
                              "parameters": {"icap": 60.0, "for_rate": 0.07, "outage_mode": "iid"}}
    return {"horizon_hours": T, "voll": 9000.0, "load_profiles": load, "resources": resources}


def main():
    OUT.write_text(json.dumps(build(), indent=1))
    print(f"wrote {OUT}")


if __name__ == "__main__":
    main()
