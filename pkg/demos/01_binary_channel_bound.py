"""How good is the probe-based MI lower bound?

A binary symmetric channel is one of the few setups where mutual information
has a closed form: with uniform input bits and flip probability p,

    I = ln 2 - H_b(p),   H_b(p) = -p ln p - (1-p) ln(1-p).

We generate such a channel inside a layered dataset (dim 0 of the single
layer carries the flipped bit, the other dims are pure noise), train a probe
on half the frames, and compare H(Y) - CE on the held-out half against the
closed form.
"""

import numpy as np

from lingagg import SynthSpec, TrainConfig, binary_channel_mi, generate, mi_bound, train_probe
from lingagg.lfa import split_indices

cfg = TrainConfig(seed=7, eval_fraction=0.5, hidden=(64, 64))

print(f"{'p':>6} {'exact':>9} {'bound':>9} {'error':>8}")
for p in (0.05, 0.1, 0.2, 0.3):
    ds = generate(SynthSpec(family="binary_channel", n=20_000, l=1, d=8, k=2,
                            flip_p=p, seed=int(100 * p)))
    train_idx, eval_idx = split_indices(ds.n_frames, cfg.eval_fraction, cfg.seed)
    x = ds.features[:, 0, :]
    probe, _ = train_probe(x[train_idx], ds.labels[train_idx], cfg, n_classes=2)
    est = mi_bound(probe, x[eval_idx], ds.labels[eval_idx])
    exact = binary_channel_mi(p)
    print(f"{p:>6.2f} {exact:>9.5f} {est.bound:>9.5f} {est.bound - exact:>+8.5f}")

print("\nThe bound lands within a few hundredths of a nat of the truth.  It")
print("undershoots what the evaluation sample actually carries (a probe can")
print("only be worse than p(y|z)); tiny overshoots of the analytic value are")
print("sampling noise in the finite evaluation set.")

# Sanity check in the other direction: shuffle the labels and the bound
# collapses to zero (information destroyed, estimator follows).
rng = np.random.default_rng(0)
ds = generate(SynthSpec(family="binary_channel", n=20_000, l=1, d=8, k=2, flip_p=0.1, seed=5))
shuffled = rng.permutation(ds.labels)
train_idx, eval_idx = split_indices(ds.n_frames, cfg.eval_fraction, cfg.seed)
x = ds.features[:, 0, :]
probe, _ = train_probe(x[train_idx], shuffled[train_idx], cfg, n_classes=2)
est = mi_bound(probe, x[eval_idx], shuffled[eval_idx])
print(f"\nshuffled labels: bound = {est.bound:+.5f} nats (should hug zero)")
