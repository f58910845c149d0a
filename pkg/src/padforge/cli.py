"""Command-line entry point.

Subcommands: gen-data, train, eval, bench-conv, gradcheck. Every command
takes a JSON run config; unknown keys are rejected and the fully resolved
config is echoed to <outdir>/resolved_config.json so runs are
self-describing. Seed precedence: --seed flag > PADFORGE_SEED env >
config seed.

Exit codes: 0 success, 2 config/validation error, 3 I/O error,
4 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from dataclasses import asdict, fields

import numpy as np

from . import data, gradcheck, metrics, nn
from .data import CorpusSpec, SplitSpec
from .model import (ConfigError, ModelConfig, build_model, load_checkpoint,
                    save_checkpoint)
from .nn import ShapeError
from .pgm import PgmParseError
from .training import NumericalError, TrainConfig, evaluate, train

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_NUMERIC = 4


def _build(cls, doc, section):
    allowed = {f.name for f in fields(cls)}
    unknown = set(doc) - allowed
    if unknown:
        raise ConfigError(f"unknown keys in '{section}': {sorted(unknown)} "
                          f"(allowed: {sorted(allowed)})")
    return cls(**doc)


class RunConfig:
    SECTIONS = ("seed", "model", "train", "corpus", "split")

    def __init__(self, doc, seed_override=None):
        unknown = set(doc) - set(self.SECTIONS)
        if unknown:
            raise ConfigError(f"unknown top-level config keys: {sorted(unknown)}")
        self.seed = doc.get("seed", 0)
        if seed_override is None:
            seed_override = os.environ.get("PADFORGE_SEED")
        if seed_override is not None:
            self.seed = int(seed_override)
        self.model = _build(ModelConfig, doc.get("model", {}), "model")
        train_doc = dict(doc.get("train", {}))
        train_doc["seed"] = self.seed
        self.train = _build(TrainConfig, train_doc, "train")
        corpus_doc = dict(doc.get("corpus", {}))
        corpus_doc["seed"] = self.seed
        self.corpus = _build(CorpusSpec, corpus_doc, "corpus")
        split_doc = dict(doc.get("split", {
            "protocol": "intra_sensor_known",
            "train_sensors": self.corpus.sensors[:1],
            "test_sensors": self.corpus.sensors[:1],
        }))
        split_doc["seed"] = self.seed
        self.split = _build(SplitSpec, split_doc, "split")

    def resolved(self):
        return {"seed": self.seed, "model": self.model.to_dict(),
                "train": asdict(self.train), "corpus": self.corpus.to_dict(),
                "split": asdict(self.split)}


def _load_config(path, seed_override=None):
    with open(path) as f:
        doc = json.load(f)
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    return RunConfig(doc, seed_override)


def _prepare_outdir(cfg, outdir):
    os.makedirs(outdir, exist_ok=True)
    with open(os.path.join(outdir, "resolved_config.json"), "w") as f:
        json.dump(cfg.resolved(), f, indent=2, sort_keys=True)
        f.write("\n")


# ---------------------------------------------------------------------------
# commands

def cmd_gen_data(args):
    cfg = _load_config(args.config, args.seed)
    _prepare_outdir(cfg, args.out)
    records = data.generate_corpus(cfg.corpus, args.out)
    print(f"generated {len(records)} samples -> {os.path.join(args.out, 'manifest.tsv')}")
    return EXIT_OK


def cmd_train(args):
    cfg = _load_config(args.config, args.seed)
    _prepare_outdir(cfg, args.out)
    records = data.read_manifest(args.data)
    train_recs, test_recs = data.build_split(records, cfg.split)
    train_samples = data.load_samples(args.data, train_recs)
    val_samples = data.load_samples(args.data, test_recs)

    net = build_model(cfg.model, seed=cfg.seed)

    def hook(epoch, net):
        save_checkpoint(net, os.path.join(args.out, f"checkpoint_epoch{epoch:04d}.pfc"))

    net, log = train(net, train_samples, cfg.train, val_samples=val_samples,
                     checkpoint_hook=hook)
    save_checkpoint(net, os.path.join(args.out, "checkpoint.pfc"))
    log.write_csv(os.path.join(args.out, "trainlog.csv"))
    last = log.records[-1]
    print(f"trained {cfg.train.epochs} epochs: mean_loss={last.mean_loss:.4f} "
          f"train_ace={last.train_ace:.2f}% val_ace={last.val_ace:.2f}%")
    return EXIT_OK


def cmd_eval(args):
    cfg = _load_config(args.config, args.seed)
    if args.protocol:
        spec = cfg.split
        cfg.split = SplitSpec(args.protocol, spec.train_sensors, spec.test_sensors,
                              spec.held_out_materials, spec.train_fraction, spec.seed)
    _prepare_outdir(cfg, args.out)
    net = load_checkpoint(args.checkpoint)
    records = data.read_manifest(args.data)
    _, test_recs = data.build_split(records, cfg.split)
    samples = data.load_samples(args.data, test_recs)

    score_recs = evaluate(net, samples)
    report = metrics.compute_metrics(score_recs)
    curve = metrics.det_curve(score_recs)
    bpcer1, attainable = metrics.bpcer_at_apcer(curve, 1.0)

    metrics.write_scores_csv(score_recs, os.path.join(args.out, "scores.csv"))
    metrics.write_det_csv(curve, os.path.join(args.out, "det.csv"))
    metrics.write_metrics_json(report, os.path.join(args.out, "metrics.json"), extra={
        "protocol": cfg.split.protocol,
        "train_sensors": list(cfg.split.train_sensors),
        "test_sensors": list(cfg.split.test_sensors),
        "held_out_materials": list(cfg.split.held_out_materials),
        "bpcer_at_apcer_1pct": bpcer1,
        "bpcer_at_apcer_1pct_attainable": attainable,
    })
    print(f"{cfg.split.protocol}: ACE={report.ace:.2f}% APCER={report.apcer:.2f}% "
          f"BPCER={report.bpcer:.2f}% BPCER@APCER1%={bpcer1:.2f}%")
    return EXIT_OK


DEFAULT_BENCH_SHAPES = "3:32:64:56,3:64:128:28,3:128:256:14,3:256:512:7,1:64:64:28"


def _parse_shapes(spec):
    shapes = []
    for group in spec.split(","):
        parts = group.strip().split(":")
        if len(parts) != 4:
            raise ConfigError(f"bad shape {group!r}; expected d_k:X:Y:d_y")
        shapes.append(tuple(int(p) for p in parts))
    return shapes


def cmd_bench_conv(args):
    shapes = _parse_shapes(args.shapes)
    os.makedirs(os.path.dirname(os.path.abspath(args.out)), exist_ok=True)
    rng = np.random.default_rng(0)
    rows = []
    for d_k, x_ch, y_ch, d_y in shapes:
        std = nn.flop_cost(d_k, x_ch, y_ch, d_y, "standard")
        sep = nn.flop_cost(d_k, x_ch, y_ch, d_y, "depthwise_separable")
        inp = rng.standard_normal((1, x_ch, d_y, d_y))
        kstd = nn.ConvKernel("standard", rng.standard_normal((y_ch, x_ch, d_k, d_k)))
        kdw = nn.ConvKernel("depthwise", rng.standard_normal((x_ch, d_k, d_k)))
        kpw = nn.ConvKernel("pointwise", rng.standard_normal((y_ch, x_ch, 1, 1)))

        counter_std = nn.MacCounter()
        t0 = time.perf_counter()
        nn.standard_conv2d(inp, kstd, counter_std)
        t_std = time.perf_counter() - t0

        counter_sep = nn.MacCounter()
        t0 = time.perf_counter()
        nn.pointwise_conv2d(nn.depthwise_conv2d(inp, kdw, counter_sep), kpw, counter_sep)
        t_sep = time.perf_counter() - t0

        rows.append([f"{d_k}:{x_ch}:{y_ch}:{d_y}", std.mult_adds, sep.mult_adds,
                     counter_std.total, counter_sep.total, f"{t_std:.6f}", f"{t_sep:.6f}",
                     repr(nn.speedup_ratio(d_k, x_ch, y_ch, d_y))])
    with open(args.out, "w") as f:
        f.write("shape,analytic_standard,analytic_separable,measured_standard,"
                "measured_separable,seconds_standard,seconds_separable,speedup\n")
        for row in rows:
            f.write(",".join(str(c) for c in row) + "\n")
    print(f"wrote {len(rows)} benchmark rows -> {args.out}")
    return EXIT_OK


def cmd_gradcheck(args):
    results = gradcheck.run_layer_checks(tolerance=args.tolerance)
    ok = True
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        detail = f" ({r.detail})" if r.detail else ""
        print(f"{status} {r.name}: max_rel_err={r.max_rel_err:.3e} "
              f"tol={r.tolerance:.1e}{detail}")
        ok &= r.passed
    e2e = gradcheck.end_to_end_check()
    e2e_tol = max(args.tolerance, 1e-3)
    e2e_ok = e2e <= e2e_tol
    print(f"{'PASS' if e2e_ok else 'FAIL'} end_to_end: max_rel_err={e2e:.3e} "
          f"tol={e2e_tol:.1e}")
    return EXIT_OK if ok and e2e_ok else EXIT_NUMERIC


# ---------------------------------------------------------------------------

def build_parser():
    p = argparse.ArgumentParser(prog="padforge",
                                description="Fingerprint PAD pipeline: synthetic corpus, "
                                            "separable-conv CNN + SVC training, evaluation")
    p.add_argument("--seed", type=int, default=None,
                   help="override the config seed (beats PADFORGE_SEED)")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-data", help="generate the synthetic corpus")
    g.add_argument("--config", required=True)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gen_data)

    t = sub.add_parser("train", help="train a model on a manifest split")
    t.add_argument("--config", required=True)
    t.add_argument("--data", required=True, help="manifest.tsv path")
    t.add_argument("--out", required=True)
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="score the test split and emit metrics")
    e.add_argument("--config", required=True)
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--data", required=True, help="manifest.tsv path")
    e.add_argument("--protocol", choices=data.PROTOCOLS, default=None)
    e.add_argument("--out", required=True)
    e.set_defaults(func=cmd_eval)

    b = sub.add_parser("bench-conv", help="analytic vs measured convolution cost")
    b.add_argument("--shapes", default=DEFAULT_BENCH_SHAPES,
                   help="comma-separated d_k:X:Y:d_y quadruples")
    b.add_argument("--out", required=True)
    b.set_defaults(func=cmd_bench_conv)

    c = sub.add_parser("gradcheck", help="finite-difference gradient report")
    c.add_argument("--tolerance", type=float, default=1e-4)
    c.set_defaults(func=cmd_gradcheck)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (NumericalError, FloatingPointError) as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except (OSError, PgmParseError) as e:
        print(f"I/O error: {e}", file=sys.stderr)
        return EXIT_IO
    except (ConfigError, ShapeError, json.JSONDecodeError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
