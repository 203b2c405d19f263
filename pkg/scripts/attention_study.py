"""Attention on/off on synthetic clips whose class signal sits in the middle
three of seven timesteps; prints accuracies and the learned gate profiles.

    python scripts/attention_study.py
"""
import argparse
import logging

import numpy as np

from avsr.data import SyntheticSpec
from avsr.desk import DESK_SPEC, MODALITIES, attention_study, centre_heavy, desk_train_config, gate_values


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--signal-steps", type=int, default=3)
    ap.add_argument("-v", "--verbose", action="store_true")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(message)s")

    spec = SyntheticSpec(**{**DESK_SPEC.__dict__, "signal_steps": args.signal_steps})
    off, on = attention_study(spec, desk_train_config(), log=print)
    mask = spec.signal_mask()
    for m in MODALITIES:
        print(f"{m:6s} without {off.accuracy(m):.4f}  with {on.accuracy(m):.4f}")
        for site, gate in gate_values(on[m].result.model).items():
            flag = "centre-heavy" if centre_heavy(gate, mask) else "flat/edge-heavy"
            print(f"    {site:18s} {np.array2string(gate, precision=3)}  {flag}")


if __name__ == "__main__":
    main()
