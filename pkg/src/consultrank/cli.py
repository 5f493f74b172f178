"""Pipeline orchestration: one flat config file, eight subcommands.

Stage order and the artifact each one writes (paths are config keys,
resolved under ``--out`` unless absolute):

    datagen  <corpus>/items.jsonl + events.jsonl + oracle.jsonl
    ingest   <corpus>/items.jsonl + events.jsonl (validated, canonical)
    index    <index>            inverted-index dump
    link     <linkage>          consultation-action links
    assess   <values>           per-search value reports (+ histogram)
    train    <checkpoint>       model parameters; <reports>/train_log.csv
    eval     <reports>/metrics.json (or metrics_<ranker>.json)
    report   <reports>/comparison.txt

Each stage validates its upstream artifacts and fails with an error
naming the stage to run first when one is missing.  Every stage also
writes ``manifests/<stage>.json`` (config hash, input/output hashes,
timing); manifests carry timestamps and sit outside the byte-stable
artifact contract, which covers the JSONL/JSON artifacts themselves.

Config: a single flat JSON object.  Unknown keys are rejected with every
offending key listed; flags override config keys; ``--seed``,
``--config``, and ``--out`` exist on every subcommand.

Exit codes: 0 success, 2 config error, 3 missing upstream artifact,
4 data validation error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time
from typing import Dict, List, Optional, Sequence

from . import __version__
from .corpus import Corpus, CorpusError, load_corpus, dump_corpus
from .datagen import GenSpec, write_dataset
from .evaluate import (
    MetricReport,
    bm25_score_fn,
    dump_metrics,
    evaluate_sessions,
    format_metric_table,
    load_metrics,
)
from .index import ScopeParams, build_index, dump_index, load_index
from .linkage import LinkageParams, build_linkage, dump_linkage, load_linkage
from .model import config_for_corpus, init_model, load_model, save_model
from .train import TrainConfig, kept_consultations, model_score_fn, split_sessions, train
from .value import (
    ValueParams,
    assess_corpus,
    dump_values,
    fit_buckets,
    load_assessments,
    score_histogram,
)

#: Every legal config key with its default.  Path keys resolve against
#: --out; the rest mirror the owning module's dataclass defaults.
CONFIG_DEFAULTS: Dict[str, object] = {
    # artifact paths
    "corpus": "corpus",
    "index": "index.jsonl",
    "linkage": "linkage.jsonl",
    "values": "values.jsonl",
    "checkpoint": "checkpoint.json",
    "reports": "reports",
    # global
    "seed": 0,
    # synthetic data generation
    "gen_users": 200,
    "gen_items": 500,
    "gen_horizon_hours": 4320,
    # value assessment (ValueParams / ScopeParams / LinkageParams)
    "alpha": 0.99,
    "lambda1": 0.5,
    "lambda2": 0.3,
    "l_seq": 30,
    "n_buckets": 11,
    "time_bucket_count": 13,
    "lambda_thresh": 4,
    "window_days": 14,
    # model (ModelConfig; sizes derived from the corpus are not keys)
    "d": 64,
    "n_time_buckets": 13,
    "lambda3_skip": 1.0,
    "encoder_layers": 1,
    "max_text_tokens": 64,
    # training (TrainConfig; seed comes from the global key)
    "tau1": 0.1,
    "tau2": 0.1,
    "lambda_va": 0.1,
    "lambda_l2": 1e-5,
    "n_neg_search": 10,
    "va_batch": 128,
    "batch_size": 72,
    "max_epochs": 100,
    "patience": 5,
    "lr": 1e-3,
    "value_filter": True,
    # evaluation
    "n_neg_eval": 99,
}

_PATH_KEYS = ("corpus", "index", "linkage", "values", "checkpoint", "reports")

#: Config keys exposed as flags per subcommand (names get dashes).
_STAGE_FLAGS: Dict[str, Sequence[str]] = {
    "datagen": ("gen_users", "gen_items", "gen_horizon_hours"),
    "ingest": (),
    "index": (),
    "link": ("window_days",),
    "assess": ("alpha", "lambda1", "lambda2", "l_seq", "n_buckets",
               "lambda_thresh", "time_bucket_count"),
    "train": ("d", "l_seq", "lambda3_skip", "lambda_va", "tau1", "tau2",
              "lambda_l2", "n_neg_search", "va_batch", "batch_size",
              "max_epochs", "patience", "lr", "value_filter",
              "max_text_tokens", "n_time_buckets"),
    "eval": ("l_seq", "n_neg_eval", "d"),
    "report": (),
}

RANKERS = ("vaps", "bm25", "semantic")


class CliError(Exception):
    """Base for expected failures; `exit_code` maps to the CLI contract."""

    exit_code = 2


class ConfigError(CliError):
    exit_code = 2


class MissingArtifact(CliError):
    exit_code = 3


class DataError(CliError):
    exit_code = 4


def _parse_bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("true", "1", "yes"):
        return True
    if low in ("false", "0", "no"):
        return False
    raise argparse.ArgumentTypeError(f"expected true/false, got {text!r}")


def validate_config(supplied: Dict[str, object]) -> Dict[str, object]:
    """Merge supplied keys over the defaults; reject every bad key at once."""
    unknown = sorted(set(supplied) - set(CONFIG_DEFAULTS))
    bad_types: List[str] = []
    for key, value in supplied.items():
        if key in unknown:
            continue
        default = CONFIG_DEFAULTS[key]
        if isinstance(default, bool):
            ok = isinstance(value, bool)
        elif isinstance(default, int):
            ok = isinstance(value, int) and not isinstance(value, bool)
        elif isinstance(default, float):
            ok = isinstance(value, (int, float)) and not isinstance(value, bool)
        else:
            ok = isinstance(value, str)
        if not ok:
            bad_types.append(f"{key}={value!r}")
    problems = []
    if unknown:
        problems.append("unknown config keys: " + ", ".join(unknown))
    if bad_types:
        problems.append("wrong-typed config values: " + ", ".join(sorted(bad_types)))
    if problems:
        raise ConfigError("; ".join(problems))
    merged = dict(CONFIG_DEFAULTS)
    merged.update(supplied)
    return merged


def load_config(path: Optional[str], overrides: Dict[str, object]) -> Dict[str, object]:
    supplied: Dict[str, object] = {}
    if path is not None:
        try:
            with open(path, "r", encoding="utf-8") as fh:
                raw = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"config file not readable: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file is not valid JSON: {exc}") from exc
        if not isinstance(raw, dict):
            raise ConfigError("config file must hold one JSON object")
        supplied.update(raw)
    supplied.update(overrides)
    return validate_config(supplied)


def _resolve(cfg: Dict[str, object], out_dir: str, key: str) -> str:
    path = str(cfg[key])
    return path if os.path.isabs(path) else os.path.join(out_dir, path)


def _require(path: str, hint: str) -> str:
    if not os.path.exists(path):
        raise MissingArtifact(f"missing {path}: run {hint} first")
    return path


def _sha256(path: str) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def write_manifest(out_dir: str, stage: str, cfg: Dict[str, object],
                   input_hashes: Dict[str, str], outputs: Sequence[str],
                   started: float) -> str:
    os.makedirs(os.path.join(out_dir, "manifests"), exist_ok=True)
    payload = {
        "stage": stage,
        "version": __version__,
        "config_sha256": hashlib.sha256(
            json.dumps(cfg, sort_keys=True).encode("utf-8")
        ).hexdigest(),
        "inputs": {
            os.path.relpath(p, out_dir): h for p, h in sorted(input_hashes.items())
        },
        "outputs": {os.path.relpath(p, out_dir): _sha256(p) for p in sorted(outputs)},
        "started_unix": round(started, 3),
        "elapsed_seconds": round(time.time() - started, 3),
    }
    path = os.path.join(out_dir, "manifests", f"{stage}.json")
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def _corpus_paths(cfg: Dict[str, object], out_dir: str) -> tuple:
    corpus_dir = _resolve(cfg, out_dir, "corpus")
    return (os.path.join(corpus_dir, "items.jsonl"),
            os.path.join(corpus_dir, "events.jsonl"))


def _load_corpus(cfg: Dict[str, object], out_dir: str, hint: str = "ingest") -> Corpus:
    items_path, events_path = _corpus_paths(cfg, out_dir)
    _require(items_path, hint)
    _require(events_path, hint)
    try:
        return load_corpus(items_path, events_path)
    except CorpusError as exc:
        raise DataError(f"corpus failed validation: {exc}") from exc


def _value_params(cfg: Dict[str, object]) -> ValueParams:
    try:
        return ValueParams(
            alpha=float(cfg["alpha"]), lambda1=float(cfg["lambda1"]),
            lambda2=float(cfg["lambda2"]), l_seq=int(cfg["l_seq"]),
            n_buckets=int(cfg["n_buckets"]),
            time_bucket_count=int(cfg["time_bucket_count"]),
        )
    except ValueError as exc:
        raise ConfigError(f"bad value parameters: {exc}") from exc


def _train_config(cfg: Dict[str, object]) -> TrainConfig:
    try:
        return TrainConfig(
            tau1=float(cfg["tau1"]), tau2=float(cfg["tau2"]),
            lambda_va=float(cfg["lambda_va"]), lambda_l2=float(cfg["lambda_l2"]),
            n_neg_search=int(cfg["n_neg_search"]), va_batch=int(cfg["va_batch"]),
            batch_size=int(cfg["batch_size"]), max_epochs=int(cfg["max_epochs"]),
            patience=int(cfg["patience"]), lr=float(cfg["lr"]),
            seed=int(cfg["seed"]),
        )
    except ValueError as exc:
        raise ConfigError(f"bad training parameters: {exc}") from exc


def cmd_datagen(cfg, out_dir, args) -> List[str]:
    try:
        spec = GenSpec(
            n_users=int(cfg["gen_users"]), n_items=int(cfg["gen_items"]),
            horizon_hours=int(cfg["gen_horizon_hours"]), seed=int(cfg["seed"]),
        )
    except ValueError as exc:
        raise ConfigError(f"bad generator parameters: {exc}") from exc
    corpus_dir = _resolve(cfg, out_dir, "corpus")
    write_dataset(spec, corpus_dir)
    outputs = [os.path.join(corpus_dir, name)
               for name in ("items.jsonl", "events.jsonl", "oracle.jsonl")]
    print(f"wrote synthetic dataset under {corpus_dir}")
    return outputs


def cmd_ingest(cfg, out_dir, args) -> List[str]:
    corpus_dir = _resolve(cfg, out_dir, "corpus")
    items_in = args.items or os.path.join(corpus_dir, "items.jsonl")
    events_in = args.events or os.path.join(corpus_dir, "events.jsonl")
    _require(items_in, "datagen (or pass --items pointing at an existing file)")
    _require(events_in, "datagen (or pass --events pointing at an existing file)")
    try:
        corpus = load_corpus(items_in, events_in)
    except CorpusError as exc:
        raise DataError(f"corpus failed validation: {exc}") from exc
    os.makedirs(corpus_dir, exist_ok=True)
    items_out, events_out = _corpus_paths(cfg, out_dir)
    dump_corpus(corpus, items_out, events_out)
    n_events = sum(
        len(h.interactions) + len(h.consultations) for h in corpus.users.values()
    )
    print(f"ingested {len(corpus.users)} users, {len(corpus.items)} items, "
          f"{n_events} events")
    return [items_out, events_out]


def cmd_index(cfg, out_dir, args) -> List[str]:
    corpus = _load_corpus(cfg, out_dir)
    index = build_index(corpus)
    path = _resolve(cfg, out_dir, "index")
    dump_index(index, path)
    print(f"indexed {len(index.postings)} terms over {len(corpus.items)} items")
    return [path]


def cmd_link(cfg, out_dir, args) -> List[str]:
    corpus = _load_corpus(cfg, out_dir)
    try:
        params = LinkageParams(window_days=int(cfg["window_days"]))
    except ValueError as exc:
        raise ConfigError(f"bad linkage parameters: {exc}") from exc
    table = build_linkage(corpus, params)
    path = _resolve(cfg, out_dir, "linkage")
    dump_linkage(table, path)
    n_links = sum(len(v) for user in table.links.values() for v in user.values())
    print(f"linked {n_links} consultation-action pairs")
    return [path]


def cmd_assess(cfg, out_dir, args) -> List[str]:
    corpus = _load_corpus(cfg, out_dir)
    index_path = _require(_resolve(cfg, out_dir, "index"), "index")
    linkage_path = _require(_resolve(cfg, out_dir, "linkage"), "link")
    try:
        index = load_index(index_path)
        linkage = load_linkage(linkage_path, corpus)
    except (ValueError, CorpusError) as exc:
        raise DataError(f"artifact failed validation: {exc}") from exc
    params = _value_params(cfg)
    try:
        scope = ScopeParams(lambda_thresh=int(cfg["lambda_thresh"]))
    except ValueError as exc:
        raise ConfigError(f"bad scope parameters: {exc}") from exc
    buckets = fit_buckets(linkage, n_buckets=params.n_buckets)
    assessments = assess_corpus(corpus, linkage, buckets, params, scope, index)
    path = _resolve(cfg, out_dir, "values")
    dump_values(assessments, path)
    print(score_histogram(assessments))
    return [path]


def cmd_train(cfg, out_dir, args) -> List[str]:
    corpus = _load_corpus(cfg, out_dir)
    linkage_path = _require(_resolve(cfg, out_dir, "linkage"), "link")
    values_path = _require(_resolve(cfg, out_dir, "values"), "assess")
    params = _value_params(cfg)
    try:
        linkage = load_linkage(linkage_path, corpus)
        assessments = load_assessments(values_path, corpus, params)
    except (ValueError, CorpusError) as exc:
        raise DataError(f"artifact failed validation: {exc}") from exc
    try:
        mcfg = config_for_corpus(
            corpus, d=int(cfg["d"]), n_time_buckets=int(cfg["n_time_buckets"]),
            lambda3_skip=float(cfg["lambda3_skip"]),
            encoder_layers=int(cfg["encoder_layers"]),
            max_text_tokens=int(cfg["max_text_tokens"]), seed=int(cfg["seed"]),
        )
    except ValueError as exc:
        raise ConfigError(f"bad model parameters: {exc}") from exc
    tcfg = _train_config(cfg)
    model = init_model(corpus, mcfg)
    reports_dir = _resolve(cfg, out_dir, "reports")
    os.makedirs(reports_dir, exist_ok=True)
    log_path = os.path.join(reports_dir, "train_log.csv")
    result = train(corpus, linkage, assessments, model, tcfg,
                   l_seq=params.l_seq, value_filter=bool(cfg["value_filter"]),
                   log_path=log_path)
    checkpoint_path = _resolve(cfg, out_dir, "checkpoint")
    save_model(result.model, checkpoint_path)
    print(f"best epoch {result.best_epoch}: "
          f"valid ndcg@10 {result.best_valid_ndcg10:.4f}")
    return [checkpoint_path, log_path]


def _metrics_path(cfg, out_dir, ranker: str) -> str:
    reports_dir = _resolve(cfg, out_dir, "reports")
    name = "metrics.json" if ranker == "vaps" else f"metrics_{ranker}.json"
    return os.path.join(reports_dir, name)


def cmd_eval(cfg, out_dir, args) -> List[str]:
    corpus = _load_corpus(cfg, out_dir)
    params = _value_params(cfg)
    ranker = args.ranker
    if ranker == "bm25":
        score_fn = bm25_score_fn(corpus)
    else:
        checkpoint_path = _require(_resolve(cfg, out_dir, "checkpoint"), "train")
        try:
            model = load_model(checkpoint_path, corpus)
        except ValueError as exc:
            raise DataError(f"checkpoint failed validation: {exc}") from exc
        if ranker == "vaps":
            values_path = _require(_resolve(cfg, out_dir, "values"), "assess")
            try:
                assessments = load_assessments(values_path, corpus, params)
            except (ValueError, CorpusError) as exc:
                raise DataError(f"artifact failed validation: {exc}") from exc
            kept_map = kept_consultations(assessments)
            score_fn = model_score_fn(model, corpus, kept_map,
                                      l_seq=params.l_seq, value_filter=True)
        else:  # semantic: same checkpoint, most recent consultations, no filter
            score_fn = model_score_fn(model, corpus, None,
                                      l_seq=params.l_seq, value_filter=False)
    split = split_sessions(corpus)
    if not split.test:
        raise DataError("corpus has no search sessions to evaluate")
    n_neg = min(int(cfg["n_neg_eval"]), len(corpus.items) - 1)
    report = evaluate_sessions(score_fn, corpus, split.test,
                               n_neg=n_neg, seed=int(cfg["seed"]))
    reports_dir = _resolve(cfg, out_dir, "reports")
    os.makedirs(reports_dir, exist_ok=True)
    path = _metrics_path(cfg, out_dir, ranker)
    dump_metrics(report, path)
    print(format_metric_table({ranker: report}))
    return [path]


def cmd_report(cfg, out_dir, args) -> List[str]:
    reports: Dict[str, MetricReport] = {}
    for ranker in RANKERS:
        path = _metrics_path(cfg, out_dir, ranker)
        hint = "eval" if ranker == "vaps" else f"eval --ranker {ranker}"
        _require(path, hint)
        try:
            reports[ranker] = load_metrics(path)
        except ValueError as exc:
            raise DataError(f"metrics failed validation: {exc}") from exc
    table = format_metric_table(reports)
    reports_dir = _resolve(cfg, out_dir, "reports")
    os.makedirs(reports_dir, exist_ok=True)
    path = os.path.join(reports_dir, "comparison.txt")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(table + "\n")
    print(table)
    return [path]


_STAGES = {
    "datagen": cmd_datagen,
    "ingest": cmd_ingest,
    "index": cmd_index,
    "link": cmd_link,
    "assess": cmd_assess,
    "train": cmd_train,
    "eval": cmd_eval,
    "report": cmd_report,
}

_STAGE_HELP = {
    "datagen": "generate a synthetic dataset with planted patterns",
    "ingest": "validate raw items/events and write the canonical corpus",
    "index": "build the scenario-term inverted index",
    "link": "link consultations to their subsequent related actions",
    "assess": "score every consultation against every search",
    "train": "train the ranking model",
    "eval": "rank held-out sessions and write metrics",
    "report": "collate vaps/bm25/semantic metrics into one table",
}


def _flag_type(default):
    if isinstance(default, bool):
        return _parse_bool
    if isinstance(default, int):
        return int
    if isinstance(default, float):
        return float
    return str


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="consultrank",
        description="consultation value assessment and value-aware search",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="stage", required=True)
    for stage, fn in _STAGES.items():
        p = sub.add_parser(stage, help=_STAGE_HELP[stage])
        p.add_argument("--config", help="flat JSON config file")
        p.add_argument("--out", default=".", help="directory artifacts live under")
        p.add_argument("--seed", type=int, help="override the config seed")
        for key in _STAGE_FLAGS[stage]:
            p.add_argument(
                f"--{key.replace('_', '-')}", dest=key,
                type=_flag_type(CONFIG_DEFAULTS[key]),
                help=f"override config key {key} (default {CONFIG_DEFAULTS[key]})",
            )
        if stage == "ingest":
            p.add_argument("--items", help="raw items.jsonl to ingest")
            p.add_argument("--events", help="raw events.jsonl to ingest")
        if stage == "eval":
            p.add_argument("--ranker", choices=RANKERS, default="vaps",
                           help="which system to evaluate")
        p.set_defaults(fn=fn)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        overrides: Dict[str, object] = {}
        if args.seed is not None:
            overrides["seed"] = args.seed
        for key in _STAGE_FLAGS[args.stage]:
            value = getattr(args, key, None)
            if value is not None:
                overrides[key] = value
        cfg = load_config(args.config, overrides)
        out_dir = args.out
        os.makedirs(out_dir, exist_ok=True)
        started = time.time()
        input_hashes = {
            p: _sha256(p) for p in _stage_inputs(args.stage, cfg, out_dir, args)
        }
        outputs = args.fn(cfg, out_dir, args)
        write_manifest(out_dir, args.stage, cfg, input_hashes, outputs, started)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    return 0


def _stage_inputs(stage: str, cfg: Dict[str, object], out_dir: str, args) -> List[str]:
    """Existing upstream files feeding this stage, for the manifest."""
    items_path, events_path = _corpus_paths(cfg, out_dir)
    candidates: List[str] = []
    if stage == "ingest":
        candidates = [args.items or items_path, args.events or events_path]
    elif stage in ("index", "link"):
        candidates = [items_path, events_path]
    elif stage == "assess":
        candidates = [items_path, events_path,
                      _resolve(cfg, out_dir, "index"),
                      _resolve(cfg, out_dir, "linkage")]
    elif stage == "train":
        candidates = [items_path, events_path,
                      _resolve(cfg, out_dir, "linkage"),
                      _resolve(cfg, out_dir, "values")]
    elif stage == "eval":
        candidates = [items_path, events_path]
        if args.ranker != "bm25":
            candidates.append(_resolve(cfg, out_dir, "checkpoint"))
        if args.ranker == "vaps":
            candidates.append(_resolve(cfg, out_dir, "values"))
    elif stage == "report":
        candidates = [_metrics_path(cfg, out_dir, r) for r in RANKERS]
    return [p for p in candidates if os.path.exists(p)]


if __name__ == "__main__":
    sys.exit(main())
