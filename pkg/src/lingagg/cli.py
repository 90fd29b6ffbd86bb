"""Command-line surface for the whole pipeline.

Subcommands: validate | synth | analyze | train-ws | train-dws | eval |
dump-dynamic | compare-weights.  Every run writes a manifest recording the
resolved configuration, input hashes, and output hashes; re-running a
subcommand with the same inputs and configuration reproduces the outputs
byte for byte (single-threaded mode is the reference).

Exit codes: 0 success, 2 input/validation error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import hashlib
import io
import json
import os
import sys
import time

import numpy as np

from . import __version__
from .aggregators import (
    DWSAggregator,
    WSAggregator,
    aggregator_id,
    compare_weights,
    dws_fuse,
    evaluate_aggregator,
    export_aggregator,
    import_aggregator,
    joint_heldout_bound,
    train_linguistic_dws,
    train_linguistic_ws,
    write_dynamic_weights_csv,
    write_weight_rows_csv,
)
from .lfa import LFAError, invariant_report, read_lfa, write_lfa
from .mi import TrainConfig, layerwise_analysis, snr_analysis, write_estimates_csv
from .synth import SynthSpec, generate

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_NUMERIC = 3

SEED_ENV = "LING_AGG_SEED"


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for block in iter(lambda: f.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def _write_manifest(subcommand: str, args: argparse.Namespace, inputs: list, outputs: list,
                    started: float) -> None:
    config = {k: v for k, v in vars(args).items() if k != "func"}
    manifest = {
        "subcommand": subcommand,
        "config": config,
        "inputs": {str(p): _sha256(p) for p in inputs},
        "outputs": {str(p): _sha256(p) for p in outputs},
        "tool_version": __version__,
        "seed": getattr(args, "seed", None),
        "wall_clock_s": time.monotonic() - started,
    }
    base = outputs[0] if outputs else (inputs[0] if inputs else subcommand)
    path = f"{base}.{subcommand}.manifest.json"
    with open(path, "w", encoding="utf-8") as f:
        json.dump(manifest, f, indent=2, sort_keys=True, default=str)
        f.write("\n")


def _resolve_seed(value) -> int:
    if value is not None:
        return int(value)
    env = os.environ.get(SEED_ENV)
    return int(env) if env else 0


def _train_config(args) -> TrainConfig:
    hidden = args.probe_hidden
    if args.probe == "linear":
        hidden = ()
    elif isinstance(hidden, str):
        hidden = tuple(int(h) for h in hidden.split(",") if h.strip())
    return TrainConfig(
        epochs=args.epochs, lr=args.lr, batch_size=args.batch_size,
        seed=args.seed, eval_fraction=args.eval_frac,
        hidden=hidden, dropout=args.dropout,
    )


def _add_train_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=None, help=f"RNG seed (falls back to ${SEED_ENV}, then 0)")
    p.add_argument("--epochs", type=int, default=15)
    p.add_argument("--lr", type=float, default=0.001)
    p.add_argument("--batch-size", type=int, default=256)
    p.add_argument("--eval-frac", type=float, default=0.2)
    p.add_argument("--probe", choices=("mlp", "linear"), default="mlp")
    p.add_argument("--probe-hidden", default="256,256", help="comma-separated hidden sizes")
    p.add_argument("--dropout", type=float, default=0.1)
    p.add_argument("--threads", type=int, default=1)


def _print_estimate(est, bits: bool) -> None:
    line = f"{est.context or 'estimate'}: h_y={est.h_y:.6f} ce={est.ce:.6f} mi={est.bound:.6f} nats"
    if bits:
        line += f" ({est.bits:.6f} bits)"
    print(line + f" n_eval={est.n_eval}")


def cmd_validate(args) -> int:
    started = time.monotonic()
    failures = 0
    try:
        ds = read_lfa(args.input)
    except LFAError as e:
        print(f"read: FAIL ({e})")
        return EXIT_INPUT
    print("read: PASS")
    for name, ok, detail in invariant_report(ds):
        print(f"{name}: {'PASS' if ok else 'FAIL (' + detail + ')'}")
        failures += 0 if ok else 1
    print(f"frames={ds.n_frames} layers={ds.n_layers} dim={ds.dim} vocab={ds.vocab_size} "
          f"snr={'yes' if ds.snr_db is not None else 'no'}")
    if failures:
        return EXIT_INPUT
    try:
        _write_manifest("validate", args, [args.input], [], started)
    except OSError:
        pass  # the verdict must not depend on the manifest being writable
    return EXIT_OK


def cmd_synth(args) -> int:
    started = time.monotonic()
    args.seed = _resolve_seed(args.seed)
    spec = SynthSpec(
        family=args.family, n=args.n, l=args.l, d=args.d, k=args.k,
        flip_p=args.p,
        snr_schedule=tuple(float(s) for s in args.snrs.split(",")) if args.snrs else None,
        informative=tuple(int(i) for i in args.informative.split(",")),
        segment_len=args.segment, noise_sigma=args.noise_sigma, seed=args.seed,
    )
    ds = generate(spec)
    write_lfa(ds, args.out)
    print(f"wrote {args.out}: N={ds.n_frames} L={ds.n_layers} D={ds.dim} K={ds.vocab_size}")
    _write_manifest("synth", args, [], [args.out], started)
    return EXIT_OK


def cmd_analyze(args) -> int:
    started = time.monotonic()
    args.seed = _resolve_seed(args.seed)
    ds = read_lfa(args.input)
    cfg = _train_config(args)
    if ds.snr_db is not None:
        if args.snr_edges:
            edges = [float(e) for e in args.snr_edges.split(",")]
        else:
            edges = ds.meta.get("snr_levels") or sorted(set(float(v) for v in ds.snr_db))
        report = snr_analysis(ds, edges, cfg, threads=args.threads)
    else:
        report = layerwise_analysis(ds, cfg, threads=args.threads)
    out = args.out or f"{args.input}.report.csv"
    report.write_csv(out)
    for est in report.estimates:
        if est.snr_bin is None:
            _print_estimate(est, args.bits)
    if report.bin_labels is not None:
        means = report.layer_means()
        for layer in range(report.n_layers):
            extra = f" ({means[layer] / np.log(2):.6f} bits)" if args.bits else ""
            print(f"layer {layer}: mean-over-bins mi={means[layer]:.6f} nats{extra}")
    if report.absent:
        print(f"absent (layer, bin) pairs: {report.absent}")
    print(f"wrote {out}")
    _write_manifest("analyze", args, [args.input], [out], started)
    return EXIT_OK


def _cmd_train(args, kind: str) -> int:
    started = time.monotonic()
    args.seed = _resolve_seed(args.seed)
    ds = read_lfa(args.input)
    cfg = _train_config(args)
    if kind == "ws":
        agg, probe, history = train_linguistic_ws(ds, cfg)
        if args.hybrid:
            agg = WSAggregator(logits=agg.logits, mode="hybrid", trainable_mask=None,
                               frozen=False, dim=agg.dim, provenance=agg.provenance)
    else:
        agg, probe, history = train_linguistic_dws(ds, cfg, d_k=args.d_k)
        if args.hybrid:
            agg = DWSAggregator(w_q=agg.w_q, w_k=agg.w_k, bias=agg.bias, mode="hybrid",
                                trainable_mask=None, frozen=False, provenance=agg.provenance)
    est = joint_heldout_bound(agg, probe, ds, cfg)
    out = args.out or f"{args.input}.{kind}.json"
    export_aggregator(agg, out)
    print(f"trained {aggregator_id(agg)} in {len(history)} epochs; final train ce={history[-1]:.6f}")
    _print_estimate(est, args.bits)
    if kind == "ws":
        print("weights: " + " ".join(f"{w:.4f}" for w in agg.weights()))
    print(f"wrote {out}")
    _write_manifest(f"train-{kind}", args, [args.input], [out], started)
    return EXIT_OK


def cmd_eval(args) -> int:
    started = time.monotonic()
    args.seed = _resolve_seed(args.seed)
    agg = import_aggregator(args.aggregator)
    ds = read_lfa(args.input)
    cfg = _train_config(args)
    est = evaluate_aggregator(agg, ds, cfg)
    _print_estimate(est, args.bits)
    outputs = []
    if args.out:
        with open(args.out, "w", newline="", encoding="utf-8") as f:
            write_estimates_csv(f, [est])
        outputs.append(args.out)
        print(f"wrote {args.out}")
    _write_manifest("eval", args, [args.aggregator, args.input], outputs, started)
    return EXIT_OK


def cmd_dump_dynamic(args) -> int:
    started = time.monotonic()
    agg = import_aggregator(args.aggregator)
    if not isinstance(agg, DWSAggregator):
        print("error: static aggregator has no per-frame weights; "
              "use compare-weights for its single weight vector", file=sys.stderr)
        return EXIT_INPUT
    ds = read_lfa(args.input)
    _, weights = dws_fuse(agg, ds)
    out = args.out or f"{args.input}.dynamic.csv"
    with open(out, "w", newline="", encoding="utf-8") as f:
        write_dynamic_weights_csv(f, weights, ds.snr_db)
    print(f"wrote {out}: {weights.shape[0]} frames x {weights.shape[1]} layers")
    _write_manifest("dump-dynamic", args, [args.aggregator, args.input], [out], started)
    return EXIT_OK


def cmd_compare_weights(args) -> int:
    started = time.monotonic()
    aggs = [import_aggregator(p) for p in args.aggregators]
    labels = args.labels.split(",") if args.labels else [os.path.basename(p) for p in args.aggregators]
    if len(labels) != len(aggs):
        raise ValueError("need one label per aggregator")
    ds = read_lfa(args.ref) if args.ref else None
    rows = compare_weights(aggs, labels, ds)
    buf = io.StringIO()
    write_weight_rows_csv(buf, rows)
    text = buf.getvalue()
    print(text, end="")
    outputs = []
    if args.out:
        with open(args.out, "w", newline="", encoding="utf-8") as f:
            f.write(text)
        outputs.append(args.out)
    _write_manifest("compare-weights", args, list(args.aggregators), outputs, started)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lingagg",
                                     description="MI lower-bound analysis and layer aggregation")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check an archive against every invariant")
    p.add_argument("input")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("synth", help="generate a synthetic archive")
    p.add_argument("--family", required=True,
                   choices=("deterministic", "independent", "binary_channel", "noisy_snr", "layer_switching"))
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--l", type=int, default=1)
    p.add_argument("--d", type=int, default=8)
    p.add_argument("--k", type=int, default=2)
    p.add_argument("--p", type=float, default=None, help="flip probability (binary_channel)")
    p.add_argument("--snrs", default=None, help="comma-separated dB schedule (noisy_snr)")
    p.add_argument("--informative", default="0", help="comma-separated informative layer indices")
    p.add_argument("--segment", type=int, default=None, help="segment length (layer_switching)")
    p.add_argument("--noise-sigma", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("analyze", help="layer-wise (and SNR-grouped) MI bounds")
    p.add_argument("input")
    _add_train_flags(p)
    p.add_argument("--snr-edges", default=None, help="comma-separated bin edges in dB")
    p.add_argument("--bits", action="store_true", help="also print bounds in bits")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_analyze)

    for kind in ("ws", "dws"):
        p = sub.add_parser(f"train-{kind}", help=f"pre-train a linguistic {kind} aggregator and export it")
        p.add_argument("input")
        _add_train_flags(p)
        p.add_argument("--hybrid", action="store_true",
                       help="export with only the layer-0 parameter trainable")
        if kind == "dws":
            p.add_argument("--d-k", type=int, default=None, help="projection width (default: D)")
        p.add_argument("--bits", action="store_true")
        p.add_argument("--out", default=None)
        p.set_defaults(func=lambda a, k=kind: _cmd_train(a, k))

    p = sub.add_parser("eval", help="held-out MI bound of an exported aggregator on an archive")
    p.add_argument("aggregator")
    p.add_argument("input")
    _add_train_flags(p)
    p.add_argument("--bits", action="store_true")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("dump-dynamic", help="per-frame layer weights of a dynamic aggregator")
    p.add_argument("aggregator")
    p.add_argument("input")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_dump_dynamic)

    p = sub.add_parser("compare-weights", help="normalized per-layer weights across aggregators")
    p.add_argument("aggregators", nargs="+")
    p.add_argument("--labels", default=None, help="comma-separated row labels")
    p.add_argument("--ref", default=None, help="reference archive for dynamic aggregators")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_compare_weights)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ArithmeticError as e:  # divergence, non-finite gradients
        print(f"numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except (LFAError, ValueError, TypeError, KeyError, OSError, json.JSONDecodeError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT


def entrypoint() -> None:
    raise SystemExit(main())


if __name__ == "__main__":
    entrypoint()
