"""Layer-wise information under noise.

The noisy_snr family plants class embeddings at one peak layer with signal
strength decaying away from it, then adds isotropic noise at a scheduled SNR
per frame.  Training one probe per layer (on all SNRs pooled) and evaluating
per SNR bin gives the full layer x SNR matrix of MI lower bounds: rows show
how information degrades with noise, columns show where it lives in the
stack.
"""

import numpy as np

from lingagg import SynthSpec, TrainConfig, generate, snr_analysis

SNRS = (-10.0, -5.0, 0.0, 5.0, 10.0, 15.0, 20.0)
PEAK = 2

ds = generate(SynthSpec(family="noisy_snr", n=21_000, l=5, d=24, k=10,
                        informative=(PEAK,), snr_schedule=SNRS, seed=0))
report = snr_analysis(ds, SNRS, TrainConfig(seed=0, eval_fraction=1 / 3, hidden=(64, 64)))
matrix = report.matrix()

header = "layer " + " ".join(f"{s:>7.0f}dB" for s in SNRS) + "     mean"
print(header)
means = report.layer_means()
for layer in range(matrix.shape[0]):
    row = " ".join(f"{v:>9.3f}" for v in matrix[layer])
    marker = "  <- peak" if layer == PEAK else ""
    print(f"{layer:>5} {row} {means[layer]:>8.3f}{marker}")

print(f"\nH(Y) = ln 10 = {np.log(10):.3f} nats is the ceiling.")
print("Reading the matrix:")
print(" - along a row: every layer loses information as SNR drops;")
print(" - along a column: the peak layer wins at every SNR, but its margin")
print("   shrinks in heavy noise, which is what motivates fusing layers")
print("   instead of committing to one.")

report.write_csv("snr_matrix.csv")
print("\nwrote snr_matrix.csv (context,layer,snr_bin,h_y_nats,ce_nats,mi_nats,mi_bits,n_eval)")
