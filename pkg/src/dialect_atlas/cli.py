"""Command-line entry point: ``dialect-atlas <subcommand> [flags]``.

Exit codes: 0 success, 1 usage error, 2 runtime error. Log records and errors
go to stderr as one JSON object per line; final results go to stdout as JSON.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import math
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .adagram import AdaGram
from .adagram import MAGIC as ADAGRAM_MAGIC
from .baselines import FrequencyScorer, SyntacticScorer
from .corpus import RegionMap, build_vocabulary, corpus_stats, read_corpus, write_corpus
from .dialectgram import DialectGram, write_choropleth_csv, write_choropleth_geojson
from .evaluate import read_lexicon, run_benchmark, write_report
from .geodist import MAGIC as GEODIST_MAGIC
from .geodist import GeodistModel, bootstrap_confidence
from .synth import SynthSpec, generate, planted_spec, write_labels

log = logging.getLogger("dialect_atlas")

LOG_LEVELS = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}
MODEL_TYPES = ("frequency", "syntactic", "geodist", "dialectgram")


class UsageError(Exception):
    pass


class _JsonFormatter(logging.Formatter):
    def format(self, record):
        out = {"time": round(record.created, 3), "level": record.levelname.lower(),
               "logger": record.name, "message": record.getMessage()}
        out.update(getattr(record, "fields", {}))
        return json.dumps(out, sort_keys=True, default=str)


def configure_logging(stream=None) -> None:
    level_name = os.environ.get("DIALECT_ATLAS_LOG", "info").lower()
    if level_name not in LOG_LEVELS:
        raise UsageError(f"DIALECT_ATLAS_LOG must be one of {sorted(LOG_LEVELS)}, got {level_name!r}")
    handler = logging.StreamHandler(stream or sys.stderr)
    handler.setFormatter(_JsonFormatter())
    log.handlers[:] = [handler]
    log.setLevel(LOG_LEVELS[level_name])
    log.propagate = False


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _pair(text: str) -> tuple[str, str]:
    parts = [p.strip() for p in text.split(",")]
    if len(parts) != 2 or not all(parts):
        raise argparse.ArgumentTypeError(f"expected two comma-separated regions, got {text!r}")
    return parts[0], parts[1]


def _training_flags(p, geodist: bool, adagram: bool):
    p.add_argument("--dim", type=int, default=100)
    p.add_argument("--window", type=int, default=10)
    p.add_argument("--epochs", type=int, default=1)
    p.add_argument("--lr", type=float, default=0.025)
    p.add_argument("--min-lr", type=float, default=0.0001)
    p.add_argument("--min-freq", type=int, default=20)
    if geodist:
        p.add_argument("--negatives", type=int, default=5)
    if adagram:
        p.add_argument("--alpha", type=float, default=0.1)
        p.add_argument("--max-senses", type=int, default=30)
        p.add_argument("--sense-threshold", type=float, default=1e-17)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="dialect-atlas", description="Regional word-meaning variation toolkit.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--config", help="JSON file of flag defaults; explicit flags win")
    common = _Parser(add_help=False)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--workers", type=int, default=1)
    common.add_argument("--deterministic", action="store_true",
                        help="force one worker so seeded runs are bitwise reproducible")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)

    p = sub.add_parser("ingest", parents=[common], help="build a vocabulary file from a corpus")
    p.add_argument("--corpus")
    p.add_argument("--min-freq", type=int, default=20)
    p.add_argument("--out")

    p = sub.add_parser("stats", parents=[common], help="per-region corpus statistics")
    p.add_argument("--corpus")
    p.add_argument("--resolution", default="country")
    p.add_argument("--region-map")
    p.add_argument("--min-freq", type=int, default=None)

    p = sub.add_parser("synth", parents=[common], help="generate a synthetic planted corpus")
    p.add_argument("--spec", help="SynthSpec JSON; defaults to the bundled planted spec")
    p.add_argument("--out")
    p.add_argument("--labels")
    p.add_argument("--region-map-out")

    p = sub.add_parser("train", parents=[common], help="train a geodist or dialectgram model")
    p.add_argument("--model", choices=("geodist", "dialectgram"))
    p.add_argument("--corpus")
    p.add_argument("--resolution")
    p.add_argument("--region-map")
    p.add_argument("--out")
    _training_flags(p, geodist=True, adagram=True)

    p = sub.add_parser("score", parents=[common], help="score words for regional change")
    p.add_argument("--model", choices=MODEL_TYPES)
    p.add_argument("--model-file")
    p.add_argument("--corpus")
    p.add_argument("--resolution", default="country")
    p.add_argument("--region-map")
    p.add_argument("--pair", type=_pair)
    p.add_argument("--words", default="all", help="file with one word per line, or 'all'")
    p.add_argument("--out")
    p.add_argument("--metric", default="manhattan")
    p.add_argument("--window", type=int, default=10)
    p.add_argument("--soft", action="store_true")
    p.add_argument("--min-freq", type=int, default=1)

    p = sub.add_parser("analyze", parents=[common], help="inspect senses, neighbours and maps")
    p.add_argument("--model")
    p.add_argument("--corpus")
    p.add_argument("--resolution", default="country")
    p.add_argument("--region-map")
    p.add_argument("--word")
    p.add_argument("--pair", type=_pair)
    p.add_argument("--neighbors", type=int, default=10)
    p.add_argument("--export-choropleth")
    p.add_argument("--export-geojson")
    p.add_argument("--sense", type=int, default=1, help="one-based sense number")
    p.add_argument("--min-docs", type=int, default=15)
    p.add_argument("--window", type=int, default=10)
    p.add_argument("--metric", default="manhattan")
    p.add_argument("--soft", action="store_true")
    p.add_argument("--bootstrap", type=int, default=0, help="geodist resample count")
    p.add_argument("--full-retrain", action="store_true")

    p = sub.add_parser("eval", parents=[common], help="threshold-classify scores against a lexicon")
    p.add_argument("--model-file")
    p.add_argument("--model-type", choices=MODEL_TYPES)
    p.add_argument("--lexicon")
    p.add_argument("--corpus")
    p.add_argument("--resolution", default="country")
    p.add_argument("--region-map")
    p.add_argument("--pair", type=_pair)
    p.add_argument("--metric", default="manhattan")
    p.add_argument("--window", type=int, default=10)
    p.add_argument("--soft", action="store_true")
    p.add_argument("--ratio", type=float, default=0.75)
    p.add_argument("--min-freq", type=int, default=1)
    p.add_argument("--report")
    return parser


REQUIRED = {
    "ingest": ("corpus", "out"),
    "stats": ("corpus",),
    "synth": ("out", "labels"),
    "train": ("model", "corpus", "out"),
    "score": ("model", "corpus", "pair", "out"),
    "analyze": ("model", "corpus"),
    "eval": ("model_type", "lexicon", "corpus", "pair", "report"),
}


def _flag(dest: str) -> str:
    return "--" + dest.replace("_", "-")


def resolve_config(argv) -> argparse.Namespace:
    """Parse ``argv`` with the ``--config`` file's values as defaults."""
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        parser.print_usage(sys.stderr)
        raise UsageError("missing subcommand")
    if args.config:
        try:
            overlay = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {args.config}: {exc}") from None
        if not isinstance(overlay, dict):
            raise UsageError("config file must hold a JSON object")
        overlay = {k.replace("-", "_"): v for k, v in overlay.items()}
        unknown = sorted(set(overlay) - set(vars(args)))
        if unknown:
            raise UsageError(f"unknown config keys: {', '.join(unknown)}")
        if "pair" in overlay and isinstance(overlay["pair"], str):
            overlay["pair"] = _pair(overlay["pair"])
        sub = parser._subparsers._group_actions[0].choices[args.command]
        sub.set_defaults(**overlay)
        args = parser.parse_args(argv)
    missing = [_flag(k) for k in REQUIRED[args.command] if getattr(args, k, None) is None]
    if args.command == "train" and args.model == "geodist" and args.resolution is None:
        missing.append("--resolution")
    if args.command == "score" and args.model in ("geodist", "dialectgram") and not args.model_file:
        missing.append("--model-file")
    if args.command == "eval" and args.model_type in ("geodist", "dialectgram") and not args.model_file:
        missing.append("--model-file")
    if args.command == "analyze" and args.bootstrap and not (args.word and args.pair):
        missing += [f for f, v in (("--word", args.word), ("--pair", args.pair)) if not v]
    if missing:
        raise UsageError(f"{args.command}: missing required flag(s) {', '.join(missing)}")
    if getattr(args, "deterministic", False):
        args.workers = 1
    return args


def config_hash(config: dict) -> str:
    blob = json.dumps(config, sort_keys=True, default=str, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]


def _emit(result: dict) -> None:
    print(json.dumps(result, sort_keys=True, default=_json_default))


def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    return str(obj)


def _finite(x):
    return None if x is None or (isinstance(x, float) and math.isnan(x)) else x


def _region_map(args):
    return RegionMap.load(args.region_map) if getattr(args, "region_map", None) else None


def model_kind(path) -> str:
    """``geodist`` or ``dialectgram`` from a model file's magic bytes."""
    with open(path, "rb") as fh:
        magic = fh.read(4)
    if magic == GEODIST_MAGIC:
        return "geodist"
    if magic == ADAGRAM_MAGIC:
        return "dialectgram"
    raise ValueError(f"{path}: not a geodist or dialectgram model file")


def _training_params(args) -> dict:
    return dict(dim=args.dim, window=args.window, epochs=args.epochs, lr=args.lr,
                min_lr=args.min_lr, min_freq=args.min_freq, seed=args.seed, workers=args.workers)


# -- subcommands -------------------------------------------------------------

def cmd_ingest(args) -> dict:
    vocab = build_vocabulary(read_corpus(args.corpus), args.min_freq)
    vocab.save(args.out)
    return {"vocab_size": len(vocab), "total_tokens": vocab.total_tokens, "out": args.out}


def cmd_stats(args) -> dict:
    docs = read_corpus(args.corpus)
    vocab = build_vocabulary(docs, args.min_freq) if args.min_freq else None
    return corpus_stats(docs, args.resolution, _region_map(args), vocab).to_dict()


def cmd_synth(args) -> dict:
    spec = SynthSpec.load(args.spec) if args.spec else planted_spec(seed=args.seed)
    docs, labels = generate(spec)
    write_corpus(docs, args.out)
    write_labels(labels, args.labels)
    if args.region_map_out:
        Path(args.region_map_out).write_text(json.dumps(spec.region_map().to_dict(), indent=1),
                                             encoding="utf-8")
    return {"documents": len(docs), "tokens": sum(len(d.tokens) for d in docs),
            "planted": sum(labels.values()), "stable": len(labels) - sum(labels.values()),
            "out": args.out, "labels": args.labels}


def cmd_train(args) -> dict:
    docs = read_corpus(args.corpus)
    params = _training_params(args)
    start = time.perf_counter()
    if args.model == "geodist":
        model = GeodistModel(resolution=args.resolution, region_map=_region_map(args),
                             negatives=args.negatives, **params).fit(docs)
        extra = {"regions": model.regions_, "skipped_documents": model.n_skipped_,
                 "final_loss": float(model.loss_history_[-1]) if len(model.loss_history_) else None}
    else:
        model = AdaGram(alpha=args.alpha, max_senses=args.max_senses,
                        sense_threshold=args.sense_threshold, **params).fit(docs)
        extra = {"mean_senses": model.mean_active_senses(min_prob=1e-3)}
    model.save(args.out)
    return {"model": args.model, "vocab_size": len(model.vocabulary_), "out": args.out,
            "seconds": round(time.perf_counter() - start, 3), **extra}


def _scorer(kind: str, args, model_file=None):
    rmap = _region_map(args)
    if kind == "frequency":
        return FrequencyScorer(resolution=args.resolution, region_map=rmap, min_freq=args.min_freq)
    if kind == "syntactic":
        return SyntacticScorer(resolution=args.resolution, region_map=rmap, min_freq=args.min_freq)
    found = model_kind(model_file)
    if found != kind:
        raise ValueError(f"{model_file} holds a {found} model, not {kind}")
    if kind == "geodist":
        return GeodistModel.load(model_file, metric=args.metric, seed=args.seed,
                                 resolution=args.resolution, region_map=rmap)
    return DialectGram(adagram=AdaGram.load(model_file), resolution=args.resolution, region_map=rmap,
                       window=args.window, metric=args.metric, soft=args.soft)


def _fit_scorer(scorer, docs):
    # geodist models load already trained; everything else indexes or counts the corpus
    if isinstance(scorer, GeodistModel):
        return scorer
    return scorer.fit(docs)


def _word_list(spec: str, scorer) -> list[str]:
    if spec != "all":
        return [w.strip() for w in Path(spec).read_text(encoding="utf-8").splitlines() if w.strip()]
    if isinstance(scorer, DialectGram):
        return list(scorer.model_.vocabulary_.id_to_token)
    if isinstance(scorer, GeodistModel):
        return list(scorer.vocabulary_.id_to_token)
    return sorted(scorer.vocabulary_)


def cmd_score(args) -> dict:
    docs = read_corpus(args.corpus)
    scorer = _fit_scorer(_scorer(args.model, args, args.model_file), docs)
    words = _word_list(args.words, scorer)
    scores = np.asarray(scorer.transform(words, pair=args.pair), dtype=np.float64).reshape(-1)
    with open(args.out, "w", encoding="utf-8") as fh:
        for w, s in zip(words, scores):
            fh.write(f"{w}\t{float(s)!r}\n")
    return {"model": args.model, "words": len(words), "missing": int(np.isnan(scores).sum()),
            "out": args.out}


def _analyze_geodist(args, docs) -> dict:
    model = GeodistModel.load(args.model, metric=args.metric, seed=args.seed,
                              resolution=args.resolution, region_map=_region_map(args))
    out = {"model": "geodist", "regions": model.regions_, "vocab_size": len(model.vocabulary_)}
    if args.word and args.pair:
        out["score"] = model.word_score(args.word, *args.pair)
    if args.bootstrap:
        res = bootstrap_confidence(model, docs, args.word, *args.pair, n_resamples=args.bootstrap,
                                   full_retrain=args.full_retrain, seed=args.seed)
        out["bootstrap"] = {"mean": res.mean, "std": res.std, "interval": list(res.interval),
                            "resamples": args.bootstrap, "full_retrain": args.full_retrain}
    return out


def cmd_analyze(args) -> dict:
    docs = read_corpus(args.corpus)
    if model_kind(args.model) == "geodist":
        return _analyze_geodist(args, docs)
    rmap = _region_map(args)
    dg = DialectGram(adagram=AdaGram.load(args.model), resolution=args.resolution, region_map=rmap,
                     window=args.window, metric=args.metric, min_docs=args.min_docs,
                     soft=args.soft).fit(docs)
    ag = dg.model_
    out = {"model": "dialectgram", "regions": dg.index_.regions, "vocab_size": len(ag.vocabulary_),
           "mean_senses": ag.mean_active_senses(min_prob=1e-3)}
    if not args.word:
        return out
    prior = ag.sense_prior(args.word)
    senses = []
    for s in ag.active_senses(args.word):
        if prior[s] < 1e-3:
            continue
        senses.append({"sense": int(s) + 1, "prior": float(prior[s]),
                       "neighbors": [{"word": w, "sense": k + 1, "similarity": sim}
                                     for w, k, sim in ag.nearest_neighbors(args.word, int(s),
                                                                           args.neighbors)]})
    out["word"] = args.word
    out["senses"] = senses
    out["proportions"] = {}
    for region in dg.index_.regions:
        props = dg.proportions(args.word, region)
        out["proportions"][region] = None if props is None else \
            {str(k + 1): float(p) for k, p in enumerate(props) if p > 0}
    if args.pair:
        out["score"] = dg.word_score(args.word, *args.pair)
    if args.export_choropleth or args.export_geojson:
        sense = args.sense - 1
        if not 0 <= sense < ag.max_senses:
            raise ValueError(f"--sense must be in 1..{ag.max_senses}")
        records = dg.choropleth(args.word, sense)
        if args.export_choropleth:
            write_choropleth_csv(records, args.export_choropleth)
            out["choropleth"] = args.export_choropleth
        if args.export_geojson:
            if rmap is None:
                raise ValueError("--export-geojson needs --region-map")
            write_choropleth_geojson(records, rmap, args.export_geojson)
            out["geojson"] = args.export_geojson
    return out


def cmd_eval(args) -> dict:
    docs = read_corpus(args.corpus)
    lexicon = read_lexicon(args.lexicon)
    scorer = _fit_scorer(_scorer(args.model_type, args, args.model_file), docs)
    rows = run_benchmark(docs, lexicon, {args.model_type: scorer}, pair=args.pair,
                         seed=args.seed, ratio=args.ratio)
    row = rows[0]
    if row.error:
        raise RuntimeError(f"{args.model_type} failed: {row.error}")
    write_report(rows, args.report)
    return {"model": args.model_type, "threshold": row.threshold, **row.report.as_dict(),
            "report": args.report}


COMMANDS = {"ingest": cmd_ingest, "stats": cmd_stats, "synth": cmd_synth, "train": cmd_train,
            "score": cmd_score, "analyze": cmd_analyze, "eval": cmd_eval}


def _error_record(kind: str, exc: BaseException) -> None:
    sys.stderr.write(json.dumps({"level": "error", "error": kind, "message": str(exc)}) + "\n")


def dispatch(argv=None) -> int:
    try:
        configure_logging()
        args = resolve_config(sys.argv[1:] if argv is None else list(argv))
    except UsageError as exc:
        _error_record("usage", exc)
        return 1
    except SystemExit as exc:  # --help and --version
        return int(exc.code or 0)
    config = {k: v for k, v in sorted(vars(args).items())}
    log.info("resolved config", extra={"fields": {"config": config, "config_hash": config_hash(config)}})
    try:
        result = COMMANDS[args.command](args)
    except Exception as exc:
        log.debug("traceback", exc_info=True)
        _error_record(type(exc).__name__, exc)
        return 2
    result["config_hash"] = config_hash(config)
    _emit({k: _finite(v) for k, v in result.items()})
    return 0


def main() -> None:
    sys.exit(dispatch())

