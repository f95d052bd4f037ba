"""Sweep one parameter at a time around a desk-scale scenario and print mean MSEs.

Usage: python scripts/run_trends.py [--config configs/desk_cw16.json] [--trials 5] [--steps 400]
"""

from __future__ import annotations

import argparse
import time

from isac_pf.harness import build_scenario, run_tracking

SPACING = 0.2e6  # Hz

SWEEPS = {
    "n_par": [("filter", {"n_par": n, "n_thres": n / 2}) for n in (50, 100, 200)],
    "n_antennas": [("radar", {"N_t": n, "N_r": n}) for n in (16, 32, 64)],
    # subcarrier spacing is held fixed, so bandwidth grows with N_c
    "n_subcarriers": [("radar", {"N_c": n, "B": n * SPACING}) for n in (64, 128, 256)],
    "snr_db": [("radar", {"snr_db": s}) for s in (-20.0, 0.0)],
    "xi": [("filter", {"xi": x}) for x in (0.5, 1.0, 2.0)],
}


def sweep(config: str, name: str, trials: int, steps: int) -> list[tuple[dict, float]]:
    out = []
    for section, change in SWEEPS[name]:
        sc = build_scenario(config, n_steps=steps, **{section: change})
        out.append((change, run_tracking(sc, "pf_sltr", trials).mse))
    return out


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--config", default="configs/desk_cw16.json")
    ap.add_argument("--trials", type=int, default=5)
    ap.add_argument("--steps", type=int, default=400)
    ap.add_argument("--only", nargs="*", default=list(SWEEPS))
    args = ap.parse_args()
    for name in args.only:
        t0 = time.time()
        rows = sweep(args.config, name, args.trials, args.steps)
        cells = "  ".join(f"{list(c.values())[0]}: {m:.4f}" for c, m in rows)
        print(f"{name:<14} {cells}   ({time.time() - t0:.0f} s)", flush=True)


if __name__ == "__main__":
    main()
