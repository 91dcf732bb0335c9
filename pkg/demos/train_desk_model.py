"""Train the two-block digit classifier end to end.

Reproduces the desk-scale run from configs/digits_1k.cfg without any
files on disk: synthesize the corpus, train ten epochs of projected
ADAM, and report held-out error.  Takes a minute or two on a laptop.

The command-line equivalent is:

    python -m ebssc.cli train --config configs/digits_1k.cfg \
        --data data-digits --out runs/desk
"""

import argparse
import time

import numpy as np

from ebssc import TrainConfig, digits_arrays, evaluate, variant_spec
from ebssc.checkpoint import Checkpoint, save_checkpoint
from ebssc.learn import train


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--epochs", type=int, default=10)
    ap.add_argument("--ckpt", default=None,
                    help="optionally save the trained model here")
    args = ap.parse_args()

    xtr, ytr, xte, yte = digits_arrays(1000, 10000, seed=1234)
    xtr = xtr.astype(np.float32)[:, None] / 255.0
    xte = xte.astype(np.float32)[:, None] / 255.0

    spec = variant_spec("digits_ssc_ebc2", beta=0.05)
    cfg = TrainConfig(alpha=1e-4, learning_rate=0.005, batch_size=100,
                      epochs=args.epochs, seed=0)

    t0 = time.monotonic()
    outcome = train(cfg, spec, xtr, ytr, xte, yte, log=print)
    err, loss_val = evaluate(outcome.params, spec, xte, yte)
    print(f"\nfinal test error {100 * err:.2f}%  "
          f"loss {loss_val:.4f}  [{time.monotonic() - t0:.0f}s]")

    if args.ckpt:
        save_checkpoint(args.ckpt, Checkpoint(
            spec=spec, params=outcome.params, opt_state=outcome.state,
            epoch=cfg.epochs, step=outcome.state.step,
            rng_state=outcome.rng.bit_generator.state))
        print(f"checkpoint written to {args.ckpt}")


if __name__ == "__main__":
    main()
