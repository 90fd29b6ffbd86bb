"""Pre-training a static weighted sum to keep label information.

One layer of the stack carries the class embedding, the rest is noise.
Jointly minimizing the probe's cross-entropy on the fused view (which is the
same thing as maximizing the MI lower bound) pushes the softmax weights onto
the informative layer, without ever being told which one it is.

The trained weights are frozen and exported to JSON; a downstream consumer
reads that file and never retrains the fusion.
"""

import numpy as np

from lingagg import (
    SynthSpec,
    TrainConfig,
    WSAggregator,
    compare_weights,
    evaluate_aggregator,
    export_aggregator,
    generate,
    layerwise_analysis,
    train_linguistic_ws,
)

PLANTED = 2

ds = generate(SynthSpec(family="deterministic", n=8_000, l=4, d=16, k=10,
                        informative=(PLANTED,), seed=0))
cfg = TrainConfig(seed=0, eval_fraction=0.25, hidden=(64, 64), epochs=30)

agg, probe, history = train_linguistic_ws(ds, cfg)
print("training CE per epoch:", " ".join(f"{h:.3f}" for h in history[::5]))
print("learned weights:      ", np.round(agg.weights(), 3), f"(planted layer = {PLANTED})")

fused_est = evaluate_aggregator(agg, ds, cfg)
report = layerwise_analysis(ds, cfg)
best_single = max(e.bound for e in report.estimates)
print(f"fused-view bound  {fused_est.bound:.4f} nats")
print(f"best single layer {best_single:.4f} nats")

export_aggregator(agg, "ws_linguistic.json")
print("\nwrote ws_linguistic.json (frozen=true, trainable_mask all false)")

# An acoustically-tuned module from elsewhere tends to sit on the bottom of
# the stack; import-style comparison puts both on the same normalized axis.
acoustic = WSAggregator(logits=np.log([0.55, 0.25, 0.12, 0.08]), mode="acoustic")
rows = compare_weights([agg, acoustic], ["linguistic", "acoustic"])
print("\nper-layer weights (rows sum to 1):")
for row in rows:
    print(f"  {row['label']:>10}: " + " ".join(f"{w:.3f}" for w in row["weights"]))
