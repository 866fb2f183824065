"""Generate the bundled 25-resource test system (src/mricap/data/table1.json).

Resource sizes, outage rates and storage energy limits are fixed
reference values. The load shapes and intermittent profiles are synthetic: a peak week
(168 hours) with ten weather scenarios, built from a fixed seed. The load
is then shifted by a constant so that LOLE is 0.1 days/period with the
perfect resource at its reference size.

    python scripts/make_table1.py [--reps 200000] [--seed 2024]
"""

from __future__ import annotations

import argparse
from pathlib import Path

import numpy as np

from mricap.engine import calibration_search
from mricap.system import dump_system, system_from_dict

OUT = Path(__file__).resolve().parents[1] / "src" / "mricap" / "data" / "table1.json"

T = 168
PERFECT = 21576.3
TARGET_LOLE = 0.1

THERMAL = {  # name: (ICAP MW, FOR, mean time to repair h)
    "TH1": (750, 0.1041, 48),
    "TH2": (150, 0.0097, 24),
    "TH3": (100, 0.2061, 24),
    "TH4": (1000, 0.008, 72),
    "TH5": (5, 0.0723, 12),
    "TH6": (10, 0.0723, 12),
    "TH7": (150, 0.0964, 24),
    "TH8": (600, 0.0381, 48),
    "TH9": (900, 0.016, 48),
    "TH10": (50, 0.001, 24),
    "TH11": (200, 0.001, 24),
    "TH12": (300, 0.006, 24),
}
IPR = {  # name: (ICAP MW, profile family)
    "IPR1": (900, "wind"),
    "IPR2": (600, "wind"),
    "IPR3": (1400, "solar"),
    "IPR4": (60, "run_of_river"),
    "IPR5": (275, "run_of_river"),
    "IPR6": (15, "run_of_river"),
    "IPR7": (700, "wind"),
    "IPR8": (25, "run_of_river"),
    "IPR9": (200, "hydro"),
    "IPR10": (50, "hydro"),
    "IPR11": (800, "night_wind"),
}
STORAGE = {"ES1": (600, 1200), "ES2": (1500, 12000)}

# scenario weights and peak multipliers (mild to extreme weather)
WEIGHTS = np.array([0.025, 0.05, 0.075, 0.1, 0.25, 0.25, 0.1, 0.075, 0.05, 0.025])
PEAK_MULT = np.array([0.90, 0.93, 0.95, 0.97, 0.985, 1.0, 1.015, 1.03, 1.045, 1.06])


def ar1(rng, n, rho, sd):
    x = np.empty(n)
    x[0] = rng.normal(0, sd / np.sqrt(1 - rho**2))
    for t in range(1, n):
        x[t] = rho * x[t - 1] + rng.normal(0, sd)
    return x


def load_shapes(rng):
    hod = np.arange(T) % 24
    day = np.arange(T) // 24
    daily = 0.70 + 0.30 * np.exp(-0.5 * ((hod - 16.5) / 4.0) ** 2)
    weekday = np.where(day >= 5, 0.93, 1.0)
    heat = 1.0 + 0.02 * np.sin(np.pi * (day + 0.5) / 7)  # heat builds midweek
    shapes = []
    for m in PEAK_MULT:
        noise = 1.0 + ar1(rng, T, 0.9, 0.004)
        shapes.append(m * daily * weekday * heat * noise)
    return np.array(shapes)


def ipr_profile(rng, family, k):
    hod = np.arange(T) % 24
    hot = (PEAK_MULT[k] - PEAK_MULT.min()) / np.ptp(PEAK_MULT)  # 0 mild .. 1 extreme
    if family == "wind":
        # calmer in hot weather and in the afternoon
        level = 0.32 - 0.18 * hot
        cf = level * (1.0 - 0.35 * np.exp(-0.5 * ((hod - 15) / 4.0) ** 2))
        cf = cf * np.exp(ar1(rng, T, 0.95, 0.12))
    elif family == "solar":
        sun = np.clip(np.cos(np.pi * (hod - 13) / 14), 0, None) ** 1.5
        clear = np.clip(0.75 + 0.15 * hot + ar1(rng, T, 0.8, 0.05), 0.2, 1.0)
        cf = 0.85 * sun * clear
    elif family == "run_of_river":
        cf = np.full(T, 0.68 - 0.08 * hot) + ar1(rng, T, 0.98, 0.01)
    elif family == "hydro":
        cf = np.full(T, 0.97) + ar1(rng, T, 0.9, 0.005)
        cf[(hod < 6)] -= 0.1
    elif family == "night_wind":
        night = (hod < 8) | (hod >= 22)
        cf = np.where(night, 0.58, 0.015) * np.exp(ar1(rng, T, 0.9, 0.1))
    else:
        raise ValueError(family)
    return np.clip(cf, 0.0, 1.0)


def build(seed: int, load_scale: float) -> dict:
    rng = np.random.default_rng(seed)
    shapes = load_shapes(rng)
    resources = {}
    for name, (icap, q, mttr) in THERMAL.items():
        resources[name] = {"type": "thermal", "parameters": {
            "icap": icap, "for_rate": q, "mttr_hours": mttr, "outage_mode": "markov"}}
    for name, (icap, family) in IPR.items():
        profiles = np.array([ipr_profile(rng, family, k) for k in range(len(WEIGHTS))]) * icap
        resources[name] = {"type": "intermittent", "parameters": {
            "icap": icap, "profiles": np.round(profiles, 3).tolist()}}
    for name, (power, energy) in STORAGE.items():
        resources[name] = {"type": "storage", "parameters": {
            "discharge_cap": power, "charge_cap": power, "energy_limit": energy}}
    resources["Perfect"] = {"type": "perfect", "parameters": {"icap": PERFECT}}
    demand = np.round(shapes * load_scale, 3)
    return {
        "horizon_hours": T,
        "voll": 9000.0,
        "load_profiles": [{"weight": float(w), "demand": d.tolist()} for w, d in zip(WEIGHTS, demand)],
        "resources": resources,
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seed", type=int, default=2024)
    ap.add_argument("--reps", type=int, default=200_000)
    ap.add_argument("--calibration-seed", type=int, default=42)
    ap.add_argument("--peak", type=float, default=27000.0, help="initial guess of peak load, MW")
    args = ap.parse_args()

    doc = build(args.seed, args.peak)
    base = system_from_dict(doc)
    res = calibration_search(base, "Perfect", TARGET_LOLE, tol=0.002, replications=args.reps,
                             seed=args.calibration_seed, bracket=(PERFECT - 3000, PERFECT + 3000))
    # more perfect capacity is equivalent to less load
    shift = res.slack_capacity - PERFECT
    for prof in doc["load_profiles"]:
        prof["demand"] = np.round(np.maximum(np.array(prof["demand"]) - shift, 0.0), 3).tolist()
    final = system_from_dict(doc)
    OUT.write_text(dump_system(final))
    print(f"slack {res.slack_capacity:.1f} MW, LOLE {res.lole:.4f} (SE {res.se_lole:.4f}), "
          f"load shifted by {-shift:.1f} MW -> {OUT}")


if __name__ == "__main__":
    main()
