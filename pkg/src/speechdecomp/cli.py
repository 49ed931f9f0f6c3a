"""Command-line entry point: decompose, mix, evaluate, train-codebook."""
import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from .codebook import Codebook, train_codebook
from .metrics import lsd, mix_at_isnr, seg_snr
from .pipeline import (PipelineConfig, baseline_config, decompose_file, emit_plot_data,
                       read_wav, voiced_stage, write_cost_table, write_metric_rows, write_wav)

log = logging.getLogger("speechdecomp")


def _config(args):
    overrides = {}
    if getattr(args, "fixed_segmentation", None) is not None:
        overrides["fixed_segmentation_ms"] = args.fixed_segmentation
    if args.config:
        return PipelineConfig.from_file(args.config, **overrides)
    return PipelineConfig(**overrides)


def _wavs(directory):
    files = sorted(Path(directory).glob("*.wav"))
    if not files:
        raise ValueError(f"{directory}: no .wav files")
    return files


def cmd_decompose(args):
    config = _config(args)
    result, paths = decompose_file(args.input, args.out_dir, args.codebook_u, args.codebook_c,
                                   config, args.noise_ref)
    out = Path(args.out_dir)
    stem = Path(args.input).stem
    if args.dump_costs:
        for kind, table in result.cost_tables.items():
            write_cost_table(out / f"{stem}_{kind}_costs.csv", table)
    if args.plot_data:
        y = read_wav(args.input, config.sample_rate)
        emit_plot_data(out / f"{stem}_plots", {"noisy": y, "voiced": result.voiced,
                                               "unvoiced": result.unvoiced}, result)
    report = result.report
    tail = [s for s in report.voiced_segments if s["start"] + s["length"] == report.length]
    print(f"voiced segments: {len(report.voiced_segments)}, "
          f"stochastic segments: {len(report.stochastic_segments)}")
    if tail and (report.length % config.n_min):
        print(f"trailing {report.length % config.n_min} samples processed as one extra segment")
    for name, path in paths.items():
        print(f"{name}: {path}")
    return 0


def cmd_mix(args):
    clean = read_wav(args.clean)
    noise = read_wav(args.noise, clean.sample_rate)
    mixed = mix_at_isnr(clean, noise, args.isnr, offset=args.offset, wrap=args.wrap)
    out = args.out or f"{Path(args.clean).stem}_{args.isnr:g}dB.wav"
    gain = write_wav(out, mixed)
    if gain != 1.0:
        print(f"mixture scaled by {gain:.4f} to avoid clipping")
    print(out)
    return 0


def evaluate_pair(clean, noise, isnr, offset, config, base):
    """Voiced metrics of adaptive, fixed and unprocessed estimates for one mixture.

    The reference voiced signal is the voiced estimate of the clean input.
    """
    reference = voiced_stage(clean, config).voiced
    noisy = mix_at_isnr(clean, noise, isnr, offset=offset, wrap=True)
    estimates = {"adaptive": voiced_stage(noisy, config).voiced,
                 "fixed": voiced_stage(noisy, base).voiced,
                 "noisy": noisy.samples}
    rows = []
    for method, est in estimates.items():
        rows.append({"method": method,
                     "segsnr_db": seg_snr(reference, est, sample_rate=clean.sample_rate),
                     "lsd_db": lsd(reference, est, sample_rate=clean.sample_rate)})
    return rows


def cmd_evaluate(args):
    config = _config(args)
    base = baseline_config(config, args.baseline_ms)
    isnrs = [float(v) for v in args.isnr.split(",")]
    rows = []
    for cpath in _wavs(args.clean):
        clean = read_wav(cpath, config.sample_rate)
        for npath in _wavs(args.noise):
            noise = read_wav(npath, config.sample_rate)
            for isnr in isnrs:
                for run in range(args.runs):
                    offset = run * noise.samples.size // max(args.runs, 1)
                    for row in evaluate_pair(clean, noise, isnr, offset, config, base):
                        rows.append({"file": cpath.name, "noise": npath.name, "isnr_db": isnr,
                                     "run": run, **row})
                    log.info("%s + %s @ %g dB run %d done", cpath.name, npath.name, isnr, run)
    write_metric_rows(args.out, rows)
    for method in ("adaptive", "fixed", "noisy"):
        sel = [r for r in rows if r["method"] == method]
        print(f"{method:9s} segSNR {np.mean([r['segsnr_db'] for r in sel]):6.2f} dB  "
              f"LSD {np.mean([r['lsd_db'] for r in sel]):6.2f} dB")
    print(args.out)
    return 0


def cmd_train(args):
    config = _config(args)
    segments = []
    for path in _wavs(args.input_dir):
        sig = read_wav(path, config.sample_rate)
        if args.kind == "unvoiced":
            # target = clean minus its own voiced estimate
            segments.append(sig.samples - voiced_stage(sig, config).voiced)
        else:
            segments.append(sig.samples)
    frame = int(round(0.02 * config.sample_rate))
    cb = train_codebook(segments, args.order, args.size, args.seed, args.kind, frame,
                        frame // 2, config.spectral_bins)
    cb.save(args.out)
    print(f"{args.kind} codebook: {args.size} entries of order {args.order} -> {args.out}")
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="speechdecomp", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    d = sub.add_parser("decompose", help="split a noisy WAV into voiced and unvoiced parts")
    d.add_argument("input")
    d.add_argument("--codebook-u", required=True)
    d.add_argument("--codebook-c", required=True)
    d.add_argument("--config")
    d.add_argument("--fixed-segmentation", type=float, metavar="MS",
                   help="bypass the DP and use fixed segments of this length")
    d.add_argument("--noise-ref", help="noise-only WAV for the initial whitener")
    d.add_argument("--out-dir", required=True)
    d.add_argument("--dump-costs", action="store_true", help="write cost tables as CSV")
    d.add_argument("--plot-data", action="store_true", help="write spectrogram/marker CSVs")
    d.set_defaults(func=cmd_decompose)

    m = sub.add_parser("mix", help="add noise to clean speech at a given input SNR")
    m.add_argument("clean")
    m.add_argument("noise")
    m.add_argument("--isnr", type=float, required=True)
    m.add_argument("--offset", type=int, default=0)
    m.add_argument("--wrap", action="store_true")
    m.add_argument("--out")
    m.set_defaults(func=cmd_mix)

    e = sub.add_parser("evaluate", help="adaptive vs fixed segmentation on mixtures")
    e.add_argument("--clean", required=True)
    e.add_argument("--noise", required=True)
    e.add_argument("--isnr", default="0,5,10")
    e.add_argument("--runs", type=int, default=2)
    e.add_argument("--baseline-ms", type=float, default=20.0)
    e.add_argument("--config")
    e.add_argument("--out", default="results.csv")
    e.set_defaults(func=cmd_evaluate)

    t = sub.add_parser("train-codebook", help="LBG-train an AR codebook from WAVs")
    t.add_argument("input_dir")
    t.add_argument("--kind", choices=("unvoiced", "noise"), required=True)
    t.add_argument("--size", type=int, default=64)
    t.add_argument("--order", type=int, default=14)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--config")
    t.add_argument("--out", required=True)
    t.set_defaults(func=cmd_train)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ValueError, OSError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
