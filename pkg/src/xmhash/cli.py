"""Command-line entry points: synth | train | encode | retrieve | eval.

Exit codes: 0 success, 2 usage error, 3 malformed data file, 4 OS-level
I/O failure, 5 invalid data or configuration values.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import data as dataio
from .data import DatasetBundle, FileFormatError, SynthConfig
from .metrics import evaluate_rankings, macro_pr_curve, relevance_judgments
from .retrieval import RetrievalIndex, encode_features, rank_gallery
from .trainer import TrainConfig, train

EXIT_FORMAT = 3
EXIT_IO = 4
EXIT_DATA = 5

IMAGE_MODEL_FILE = "image.model"
TEXT_MODEL_FILE = "text.model"
IMAGE_CODES_FILE = "image_codes.bin"
TEXT_CODES_FILE = "text_codes.bin"
LOSS_LOG_FILE = "train.log"
CONFIG_FILE = "config.txt"

# train settings that a key=value config file may supply; flags win.
TRAIN_DEFAULTS = {
    "bits": 16,
    "batch-size": 64,
    "eta": 1e-4,
    "epochs": 30,
    "max-iters": None,
    "seed": 0,
    "lr": 1e-3,
    "hidden": 512,
    "batching": "stochastic",
}


def _positive_int(text):
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {value}")
    return value


def _fraction(text):
    value = float(text)
    if not 0.0 < value < 1.0:
        raise argparse.ArgumentTypeError(f"must lie in (0, 1), got {value}")
    return value


def _nonneg_float(text):
    value = float(text)
    if value < 0.0:
        raise argparse.ArgumentTypeError(f"must be >= 0, got {value}")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="xmhash",
        description="Cross-modal binary hashing: train, encode, search, evaluate.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic paired dataset bundle")
    p.add_argument("--classes", type=int, default=8)
    p.add_argument("--per-class", type=_positive_int, default=250)
    p.add_argument("--dim", type=_positive_int, default=64, help="image feature dim")
    p.add_argument("--text-dim", type=_positive_int, default=None,
                   help="text feature dim (defaults to --dim)")
    p.add_argument("--separation", type=_nonneg_float, default=4.0)
    p.add_argument("--noise", type=float, default=1.0)
    p.add_argument("--multi-label-prob", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--query-frac", type=_fraction, default=0.1)
    p.add_argument("--train-frac", type=_fraction, default=0.45)
    p.add_argument("--out", required=True, help="output bundle directory")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="learn codes and encoders from a bundle")
    p.add_argument("--data", required=True, help="dataset bundle directory")
    p.add_argument("--out", required=True, help="output run directory")
    p.add_argument("--config", default=None, help="key=value settings file")
    p.add_argument("--bits", type=_positive_int, default=None)
    p.add_argument("--batch-size", type=int, default=None)
    p.add_argument("--eta", type=_nonneg_float, default=None)
    p.add_argument("--epochs", type=_positive_int, default=None)
    p.add_argument("--max-iters", type=_positive_int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--hidden", type=_positive_int, default=None)
    p.add_argument("--batching", choices=("stochastic", "fixed"), default=None)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("encode", help="map a feature file through a saved encoder")
    p.add_argument("--model", required=True)
    p.add_argument("--features", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_encode)

    p = sub.add_parser("retrieve", help="rank gallery codes for every query code")
    p.add_argument("--queries", required=True, help="query code file")
    p.add_argument("--gallery", required=True, help="gallery code file")
    p.add_argument("--out", required=True, help="ranked id lists, one line per query")
    p.set_defaults(func=cmd_retrieve)

    p = sub.add_parser("eval", help="score rankings (or a whole run) with MAP")
    p.add_argument("--rankings", help="ranking file from retrieve")
    p.add_argument("--query-labels", help="label sidecar for the queries")
    p.add_argument("--gallery-labels", help="label sidecar for the gallery")
    p.add_argument("--data", help="bundle directory (run mode)")
    p.add_argument("--run", help="training run directory (run mode)")
    p.add_argument("--pr-out", default=None,
                   help="write recall,precision records (file, or prefix in run mode)")
    p.set_defaults(func=cmd_eval)
    return parser


def cmd_synth(args) -> int:
    cfg = SynthConfig(
        classes=args.classes,
        per_class=args.per_class,
        image_dim=args.dim,
        text_dim=args.text_dim if args.text_dim is not None else args.dim,
        separation=args.separation,
        noise=args.noise,
        multi_label_prob=args.multi_label_prob,
        seed=args.seed,
    )
    bundle = dataio.synth_generate(cfg)
    splits = dataio.default_splits(cfg, args.query_frac, args.train_frac)
    dataio.write_bundle(replace(bundle, splits=splits), args.out)
    print(f"wrote {bundle.count} pairs ({cfg.classes} classes) to {args.out}")
    return 0


def _resolve_train_settings(args) -> dict:
    settings = dict(TRAIN_DEFAULTS)
    if args.config is not None:
        for key, value in _parse_config_file(args.config).items():
            if key not in settings:
                raise ValueError(f"unknown config key {key!r} in {args.config}")
            settings[key] = value
    for key, flag in (
        ("bits", args.bits),
        ("batch-size", args.batch_size),
        ("eta", args.eta),
        ("epochs", args.epochs),
        ("max-iters", args.max_iters),
        ("seed", args.seed),
        ("lr", args.lr),
        ("hidden", args.hidden),
        ("batching", args.batching),
    ):
        if flag is not None:
            settings[key] = flag
    return settings


def _parse_config_file(path) -> dict:
    parsed = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected key=value, got {line!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        parsed[key] = value
    return parsed


def _train_config(settings: dict) -> TrainConfig:
    max_iters = settings["max-iters"]
    if isinstance(max_iters, str):
        max_iters = None if max_iters.lower() in ("", "none") else int(max_iters)
    return TrainConfig(
        code_len=int(settings["bits"]),
        batch_size=int(settings["batch-size"]),
        eta=float(settings["eta"]),
        epochs=int(settings["epochs"]),
        max_iterations=max_iters,
        rng_seed=int(settings["seed"]),
        learning_rate=float(settings["lr"]),
        hidden_dim=int(settings["hidden"]),
        batching_mode=str(settings["batching"]),
    )


def cmd_train(args) -> int:
    settings = _resolve_train_settings(args)
    cfg = _train_config(settings)
    bundle = dataio.read_bundle(args.data)
    train_set = bundle.split("train") if bundle.splits and "train" in bundle.splits else bundle
    state = train(train_set, cfg)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    dataio.save_model(state.image_model, out / IMAGE_MODEL_FILE)
    dataio.save_model(state.text_model, out / TEXT_MODEL_FILE)
    dataio.write_codes(state.image_codes(), out / IMAGE_CODES_FILE)
    dataio.write_codes(state.text_codes(), out / TEXT_CODES_FILE)
    log_lines = [
        f"{epoch},{it},{loss_f!r},{loss_g!r},{obj!r}"
        for epoch, it, loss_f, loss_g, obj in state.history
    ]
    (out / LOSS_LOG_FILE).write_text("\n".join(log_lines) + "\n")
    config_lines = [f"{k}={settings[k]}" for k in sorted(settings)]
    (out / CONFIG_FILE).write_text("\n".join(config_lines) + "\n")
    status = "converged" if state.converged else "finished"
    print(
        f"{status} after {state.epoch} epochs ({state.iteration} iterations); "
        f"run artifacts in {out}"
    )
    return 0


def cmd_encode(args) -> int:
    model = dataio.load_model(args.model)
    features = dataio.read_features(args.features)
    codes = encode_features(model, features)
    dataio.write_codes(codes, args.out)
    print(f"encoded {codes.count} items to {codes.code_len}-bit codes: {args.out}")
    return 0


def cmd_retrieve(args) -> int:
    queries = dataio.read_codes(args.queries)
    gallery = dataio.read_codes(args.gallery)
    if queries.code_len != gallery.code_len:
        raise ValueError(
            f"code length mismatch: queries are {queries.code_len}-bit, "
            f"gallery is {gallery.code_len}-bit"
        )
    index = RetrievalIndex(gallery, [()] * gallery.count)
    with open(args.out, "w") as sink:
        for i in range(queries.count):
            ids, _ = rank_gallery(index, queries.column(i))
            sink.write(" ".join(str(v) for v in ids) + "\n")
    print(f"ranked {gallery.count} gallery items for {queries.count} queries")
    return 0


def _read_rankings(path) -> list:
    rankings = []
    for line in Path(path).read_text().splitlines():
        rankings.append(np.asarray([int(tok) for tok in line.split()], dtype=np.int64))
    if not rankings:
        raise ValueError(f"{path}: no rankings found")
    return rankings


def _write_pr(path, curve):
    lines = [f"{float(recall)!r},{float(precision)!r}" for recall, precision in curve]
    Path(path).write_text("\n".join(lines) + "\n")


def cmd_eval(args) -> int:
    ranking_mode = args.rankings is not None
    run_mode = args.data is not None or args.run is not None
    if ranking_mode == run_mode:
        raise ValueError(
            "use either --rankings with label sidecars, or --data with --run"
        )
    if ranking_mode:
        if args.query_labels is None or args.gallery_labels is None:
            raise ValueError("--rankings requires --query-labels and --gallery-labels")
        rankings = _read_rankings(args.rankings)
        relevance = relevance_judgments(
            dataio.read_labels(args.query_labels),
            dataio.read_labels(args.gallery_labels),
        )
        result = evaluate_rankings(rankings, relevance)
        print(
            f"MAP: {result.map:.4f} "
            f"({result.n_queries} queries, {result.skipped} skipped)"
        )
        if args.pr_out is not None:
            _write_pr(args.pr_out, macro_pr_curve(rankings, relevance))
        return 0

    if args.data is None or args.run is None:
        raise ValueError("run mode needs both --data and --run")
    bundle = dataio.read_bundle(args.data)
    if bundle.splits is None or not {"query", "gallery"} <= bundle.splits.keys():
        raise ValueError("bundle must provide query and gallery splits for run mode")
    run = Path(args.run)
    image_model = dataio.load_model(run / IMAGE_MODEL_FILE)
    text_model = dataio.load_model(run / TEXT_MODEL_FILE)
    query, gallery = bundle.split("query"), bundle.split("gallery")
    directions = (
        ("image->text", image_model, query.image_features, text_model,
         gallery.text_features),
        ("text->image", text_model, query.text_features, image_model,
         gallery.image_features),
    )
    for name, q_model, q_feats, g_model, g_feats in directions:
        q_codes = encode_features(q_model, q_feats)
        index = RetrievalIndex(encode_features(g_model, g_feats), gallery.labels)
        rankings = [
            rank_gallery(index, q_codes.column(i))[0] for i in range(q_codes.count)
        ]
        relevance = relevance_judgments(query.labels, gallery.labels)
        result = evaluate_rankings(rankings, relevance)
        print(
            f"MAP {name}: {result.map:.4f} "
            f"({result.n_queries} queries, {result.skipped} skipped)"
        )
        if args.pr_out is not None:
            tag = name.replace("->", "2").replace("image", "i").replace("text", "t")
            _write_pr(f"{args.pr_out}.{tag}.csv", macro_pr_curve(rankings, relevance))
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except FileFormatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FORMAT
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
