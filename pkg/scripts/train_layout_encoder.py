"""Train the LSTM layout encoder on random layout strings and report fidelity.

100 distinct strings give 10,000 ordered pairs labelled with their tree edit
distance, split 7:1:2. Fidelity is the held-out Spearman correlation between
embedding distance and edit distance.
"""

import argparse
import time

import numpy as np
from scipy import stats

from screenrl.embedding import layout_pairs, random_layout_strings, split_pairs, train_layout_encoder


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--strings", type=int, default=100)
    p.add_argument("--dim", type=int, default=32)
    p.add_argument("--epochs", type=int, default=400)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="write encoder weights here")
    a = p.parse_args()

    t0 = time.perf_counter()
    strings = random_layout_strings(a.strings, a.seed)
    train, val, test = split_pairs(layout_pairs(strings), a.seed)
    enc = train_layout_encoder(train, dim=a.dim, seed=a.seed, epochs=a.epochs, val_pairs=val)
    emb = {s: enc.embed(s) for s in strings}
    for name, part in (("train", train), ("val", val), ("test", test)):
        pred = [np.linalg.norm(emb[x] - emb[y]) for x, y, _ in part]
        rho = stats.spearmanr(pred, [d for _, _, d in part]).statistic
        print(f"{name:5s} pairs {len(part):5d}  spearman {rho:.3f}")
    print(f"{time.perf_counter() - t0:.1f}s")
    if a.out:
        enc.save(a.out)


if __name__ == "__main__":
    main()
