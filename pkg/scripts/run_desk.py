"""Train audio, video and fused models on the desk-scale synthetic corpus.

    python scripts/run_desk.py                  # plain training
    python scripts/run_desk.py --augment        # with flip/crop/noise augmentation
    python scripts/run_desk.py --noisy-test 0.3 # also score on a noisier test split
"""
import argparse
import logging

from avsr.desk import (DESK_SPEC, MODALITIES, desk_train_config, noisy_test, splits, train_all,
                       with_augmentation)
from avsr.models import ModelConfig
from avsr.train import evaluate


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--augment", action="store_true")
    ap.add_argument("--noisy-test", type=float, help="test-split noise std for an extra evaluation")
    ap.add_argument("--lr", type=float, help="base learning rate; attention uses twice this")
    ap.add_argument("-v", "--verbose", action="store_true")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(message)s")

    tcfg = desk_train_config(**({"lr": args.lr, "attention_lr": 2 * args.lr} if args.lr else {}))
    if args.augment:
        tcfg = with_augmentation(tcfg, audio_noise_std=0.2)
    runs = train_all(splits(DESK_SPEC), ModelConfig.tiny(), tcfg, log=print)
    if args.noisy_test is not None:
        test = noisy_test(DESK_SPEC, args.noisy_test)
        for m in MODALITIES:
            acc = evaluate(runs[m].result.model, test).accuracy
            print(f"{m:6s} noisy test (std {args.noisy_test}) {acc:.4f}")


if __name__ == "__main__":
    main()
