"""Command-line pipelines over the corpus, training, and evaluation layers.

Subcommands: validate, train, infer, eval, summarize, cou, synth. Every
subcommand that takes a seed is bit-reproducible in its JSON output. Exit
codes: 0 success, 1 usage error, 2 invalid input data, 3 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from typing import Optional, Sequence

from .corpus import (
    CorpusError,
    candidate_surface,
    load_discussions,
    prepare,
    save_discussions,
)
from .cou import (
    cou_features,
    features_csv,
    gold_assignment,
    leave_one_out,
    train_dual_models,
)
from .evaluation import (
    baseline_avg_word_score,
    baseline_centroid_da,
    baseline_longest_da,
    cross_validate,
    rouge_1,
    rouge_su4,
    summarize,
)
from .features import build_registry, fit_stats
from .inference import decode_discussion
from .learning import (
    TrainConfig,
    average_runs,
    supervised_label_space,
)
from .model import ModelError, load_model, save_model

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_INVALID = 2
EXIT_RUNTIME = 3

_CFG_FIELDS = ("eta", "epochs", "rounds", "alpha", "runs", "latent_labels",
               "seed", "jobs")


class _Parser(argparse.ArgumentParser):
    """Argument parser whose usage failures exit with status 1."""

    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _emit(text: str, out: Optional[str]) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(text)


def _emit_json(obj, out: Optional[str]) -> None:
    _emit(json.dumps(obj, indent=2, sort_keys=True) + "\n", out)


def _add_train_flags(p: argparse.ArgumentParser) -> None:
    base = TrainConfig()
    p.add_argument("--epochs", type=int, default=base.epochs,
                   help="training passes over the corpus")
    p.add_argument("--rounds", type=int, default=base.rounds,
                   help="sampling rounds per discussion chain")
    p.add_argument("--eta", type=float, default=base.eta,
                   help="learning rate")
    p.add_argument("--alpha", type=float, default=base.alpha,
                   help="phrase-F1 weight in the joint objective")
    p.add_argument("--runs", type=int, default=base.runs,
                   help="independently seeded runs to average")
    p.add_argument("--K", type=int, default=base.latent_labels,
                   help="latent label count (latent mode)")
    p.add_argument("--seed", type=int, default=base.seed)
    p.add_argument("--jobs", type=int, default=None,
                   help="worker cap for parallel runs (default: all cores)")


class _UsageError(Exception):
    """A flag value that passed parsing but fails config validation."""


def _config(args: argparse.Namespace) -> TrainConfig:
    jobs = args.jobs if args.jobs is not None else (os.cpu_count() or 1)
    try:
        return TrainConfig(eta=args.eta, epochs=args.epochs,
                           rounds=args.rounds, alpha=args.alpha,
                           runs=args.runs, latent_labels=args.K,
                           seed=args.seed, jobs=jobs)
    except ValueError as exc:
        raise _UsageError(str(exc)) from None


def _config_from_file(path: Optional[str],
                      args: argparse.Namespace) -> TrainConfig:
    """Model-config file values, overridden by explicit command-line flags."""

    base = _config(args)
    if path is None:
        return base
    with open(path, "r", encoding="utf-8") as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise CorpusError(f"{path}: not valid JSON ({exc})") from None
    if not isinstance(raw, dict):
        raise CorpusError(f"{path}: model config must be a JSON object")
    unknown = set(raw) - set(_CFG_FIELDS)
    if unknown:
        raise CorpusError(f"{path}: unknown model config fields "
                          f"{sorted(unknown)}")
    merged = {k: raw.get(k, getattr(base, k)) for k in _CFG_FIELDS}
    defaults = TrainConfig()
    for flag, field in (("epochs", "epochs"), ("rounds", "rounds"),
                        ("eta", "eta"), ("alpha", "alpha"), ("runs", "runs"),
                        ("K", "latent_labels"), ("seed", "seed")):
        value = getattr(args, flag)
        if value != getattr(defaults, field):
            merged[field] = value
    if args.jobs is not None:
        merged["jobs"] = args.jobs
    try:
        return TrainConfig(**merged)
    except (TypeError, ValueError) as exc:
        raise CorpusError(f"{path}: bad model config ({exc})") from None


# ---------------------------------------------------------------------------
# Subcommands


def cmd_validate(args: argparse.Namespace) -> int:
    discussions = load_discussions(args.corpus)
    preps = [prepare(d, with_gold=False) for d in discussions]
    _emit_json({
        "discussions": len(discussions),
        "units": sum(p.n_units for p in preps),
        "candidates": sum(len(p.candidates) for p in preps),
        "valid": True,
    }, args.out)
    return EXIT_OK


def cmd_train(args: argparse.Namespace) -> int:
    discussions = load_discussions(args.corpus)
    cfg = _config(args)
    latent = args.mode == "latent"
    preps = [prepare(d) for d in discussions]
    weights, stats = average_runs(preps, cfg, latent=latent)
    save_model(weights, stats, args.out)
    _emit_json({
        "discussions": len(discussions),
        "labels": list(weights.registry.labels),
        "content_features": weights.registry.n_content,
        "discourse_features": weights.registry.n_discourse,
        "mode": args.mode,
        "model": args.out,
    }, None)
    return EXIT_OK


def cmd_infer(args: argparse.Namespace) -> int:
    weights, stats = load_model(args.model)
    discussions = load_discussions(args.corpus)
    rows = []
    for x in discussions:
        prep = prepare(x, with_gold=False)
        config = decode_discussion(prep, weights, stats)
        phrases = []
        for cand, bit in zip(prep.candidates, config.selected):
            if bit:
                unit = x.unit_by_id(cand.unit_id)
                phrases.append({"unit": cand.unit_id, "index": cand.index,
                                "phrase": candidate_surface(unit, cand)})
        rows.append({
            "id": x.id,
            "score": config.score,
            "selected": phrases,
            "relations": {str(uid): rel for uid, rel
                          in sorted(config.relations.items())},
            "summary": summarize(prep, config),
        })
    _emit_json({"model": args.model, "predictions": rows}, args.out)
    return EXIT_OK


def cmd_eval(args: argparse.Namespace) -> int:
    discussions = load_discussions(args.corpus)
    cfg = _config(args)
    report = cross_validate(discussions, cfg, folds=args.folds,
                            latent=args.mode == "latent", task=args.task)
    if args.table:
        _emit(report.table(), args.out)
    else:
        _emit_json(report.to_dict(), args.out)
    return EXIT_OK


def cmd_summarize(args: argparse.Namespace) -> int:
    weights, stats = load_model(args.model)
    discussions = load_discussions(args.corpus)
    rouge = rouge_1 if args.rouge == "1" else rouge_su4
    rows = []
    sums = {}
    scored = 0
    for x in discussions:
        prep = prepare(x, with_gold=False)
        config = decode_discussion(prep, weights, stats)
        text = summarize(prep, config)
        k = sum(config.selected)
        outputs = {
            "system": text,
            "longest_da": baseline_longest_da(x),
            "centroid_da": baseline_centroid_da(x, stats),
            "avg_word_score": baseline_avg_word_score(x, stats, k),
        }
        row = {"id": x.id, "summaries": outputs}
        refs = list(x.summaries.abstractive)
        if refs:
            scored += 1
            row["rouge"] = {}
            for name, text_out in outputs.items():
                p, r, f = rouge(text_out, refs)
                row["rouge"][name] = {"precision": p, "recall": r, "f1": f}
                sums[name] = sums.get(name, 0.0) + f
        rows.append(row)
    aggregate = {name: total / scored for name, total in sums.items()}
    payload = {"metric": f"rouge-{args.rouge}", "discussions": rows,
               "mean_f1": aggregate}
    if args.table:
        names = ("system", "longest_da", "centroid_da", "avg_word_score")
        lines = [f"mean {payload['metric']} F1 over {scored} discussions"]
        for name in names:
            if name in aggregate:
                lines.append(f"{name:16s} {aggregate[name]:.4f}")
        _emit("\n".join(lines) + "\n", args.out)
    else:
        _emit_json(payload, args.out)
    return EXIT_OK


def cmd_cou(args: argparse.Namespace) -> int:
    discussions = load_discussions(args.corpus)
    cfg = _config_from_file(args.model_cfg, args)
    if args.loo:
        report = leave_one_out(discussions, cfg)
        if args.table:
            _emit(report.table(), args.out)
        else:
            _emit_json(report.to_dict(), args.out)
        return EXIT_OK

    preps = [prepare(d) for d in discussions]
    stats = fit_stats(preps)
    registry = build_registry(preps, supervised_label_space(preps), stats)
    w_con, w_incon = train_dual_models(discussions, cfg, stats=stats,
                                       registry=registry)
    feats = []
    labels = []
    rows = []
    for d, p in zip(discussions, preps):
        sel, rel = gold_assignment(p)
        feat = cou_features(p, w_con, w_incon, stats, sel, rel)
        feats.append(feat)
        labels.append(d.cou_label)
        rows.append({
            "id": d.id,
            "label": d.cou_label,
            "prob_diff": feat.prob_diff,
            "entrainment": feat.entrainment,
            "relation_unigrams": dict(sorted(feat.relation_unigrams.items())),
            "relation_bigrams": {f"{a}|{b}": v for (a, b), v
                                 in sorted(feat.relation_bigrams.items())},
        })
    if args.features_csv:
        _emit(features_csv(feats, registry.labels, labels),
              args.features_csv)
    _emit_json({"labels": list(registry.labels), "features": rows}, args.out)
    return EXIT_OK


def cmd_synth(args: argparse.Namespace) -> int:
    from .synth import CorpusSpec, generate

    with open(args.spec, "r", encoding="utf-8") as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise CorpusError(f"{args.spec}: not valid JSON ({exc})") \
                from None
    if not isinstance(raw, dict):
        raise CorpusError(f"{args.spec}: corpus spec must be a JSON object")
    if args.seed is not None:
        raw["seed"] = args.seed
    try:
        spec = CorpusSpec.from_dict(raw)
    except (TypeError, ValueError) as exc:
        raise CorpusError(f"{args.spec}: bad corpus spec ({exc})") from None
    discussions = generate(spec)
    save_discussions(discussions, args.out)
    _emit_json({"discussions": len(discussions), "kind": spec.kind,
                "seed": spec.seed, "out": args.out}, None)
    return EXIT_OK


# ---------------------------------------------------------------------------
# Wiring


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="meetgist",
                     description="Salient-phrase and discourse-relation "
                                 "pipelines for tree-structured discussions")
    sub = parser.add_subparsers(dest="command", required=True,
                                parser_class=_Parser)

    p = sub.add_parser("validate", help="check a corpus file")
    p.add_argument("corpus")
    p.add_argument("--out")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("train", help="train a model")
    p.add_argument("--corpus", required=True)
    p.add_argument("--mode", choices=("joint", "latent"), default="joint")
    _add_train_flags(p)
    p.add_argument("--out", required=True, help="model file to write")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("infer", help="decode a corpus under a model")
    p.add_argument("--model", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("eval", help="cross-validated task metrics")
    p.add_argument("--corpus", required=True)
    p.add_argument("--task", choices=("phrase", "discourse", "summ"),
                   default="phrase")
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--mode", choices=("joint", "latent"), default="joint")
    _add_train_flags(p)
    p.add_argument("--table", action="store_true",
                   help="human-readable report instead of JSON")
    p.add_argument("--out")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("summarize",
                       help="phrase summaries plus extractive baselines")
    p.add_argument("--model", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--rouge", choices=("1", "su4"), default="su4")
    p.add_argument("--table", action="store_true")
    p.add_argument("--out")
    p.set_defaults(func=cmd_summarize)

    p = sub.add_parser("cou",
                       help="consistency-of-understanding features and "
                            "leave-one-out evaluation")
    p.add_argument("--corpus", required=True)
    p.add_argument("--model-cfg", dest="model_cfg",
                   help="JSON file of training-config fields")
    p.add_argument("--loo", action="store_true",
                   help="run leave-one-out classification")
    p.add_argument("--features-csv", dest="features_csv",
                   help="also write the feature matrix as CSV")
    _add_train_flags(p)
    p.add_argument("--table", action="store_true")
    p.add_argument("--out")
    p.set_defaults(func=cmd_cou)

    p = sub.add_parser("synth", help="generate a synthetic corpus")
    p.add_argument("--spec", required=True,
                   help="JSON file of corpus spec fields")
    p.add_argument("--seed", type=int, default=None,
                   help="override the spec's seed")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except _UsageError as exc:
        print(f"meetgist {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (CorpusError, ModelError) as exc:
        print(f"meetgist {args.command}: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except KeyboardInterrupt:
        return EXIT_RUNTIME
    except Exception as exc:
        print(f"meetgist {args.command}: {type(exc).__name__}: {exc}",
              file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
