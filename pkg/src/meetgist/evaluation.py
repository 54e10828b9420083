"""Task metrics, cross-validation, phrase summarization, and ROUGE.

The harness trains inside each fold (statistics and registry are fitted on
the fold's training half only), decodes the held-out half exactly, and pools
counts over the fold before computing metrics. ROUGE follows the clipped
multiset-overlap definition; multiple references pool their unit counts.
"""

from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np

from .corpus import (
    CorpusError,
    Discussion,
    PreparedDiscussion,
    candidate_surface,
    extract_candidates,
    prepare,
)
from .features import CorpusStats, build_registry, fit_stats
from .inference import joint_infer_arrays
from .learning import (
    Scorer,
    TrainConfig,
    _f1_counts,
    average_runs,
    latent_label_space,
    supervised_label_space,
)
from .model import (
    Configuration,
    Weights,
    compile_discussion,
    relation_strings,
    selected_from_clusters,
)
from .rng import Pcg32

__all__ = [
    "EvalReport",
    "baseline_avg_word_score",
    "baseline_centroid_da",
    "baseline_longest_da",
    "cross_validate",
    "evaluate_split",
    "fold_indices",
    "majority_baseline",
    "rouge_1",
    "rouge_su4",
    "rouge_tokens",
    "summarize",
]

# Stream constant for the fold-assignment shuffle; distinct from the
# training chains' stream so fold layout never couples to sampling.
_FOLD_STREAM = 97

_TOKEN_RE = re.compile(r"[a-z0-9']+")

# Tags scored with full weight by the averaged-word-score baseline.
_FULL_WEIGHT_PTB = ("NN", "VB", "JJ")
_FULL_WEIGHT_UPOS = frozenset({"NOUN", "PROPN", "VERB", "ADJ"})


# ---------------------------------------------------------------------------
# Reports


@dataclass(frozen=True)
class EvalReport:
    """Per-fold metric rows plus their unweighted mean."""

    task: str
    fold_metrics: tuple[dict, ...]
    aggregate: dict
    lengths: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        out = {
            "task": self.task,
            "folds": [dict(sorted(m.items())) for m in self.fold_metrics],
            "aggregate": dict(sorted(self.aggregate.items())),
        }
        if self.lengths:
            out["lengths"] = dict(sorted(self.lengths.items()))
        return out

    def table(self) -> str:
        keys = sorted(self.aggregate)
        width = max([len(k) for k in keys] + [6])
        lines = [f"task: {self.task}"]
        header = "fold".ljust(6) + "  ".join(k.ljust(width) for k in keys)
        lines.append(header)
        for i, m in enumerate(self.fold_metrics):
            cells = [f"{m[k]:.4f}".ljust(width) if k in m else "-".ljust(width)
                     for k in keys]
            lines.append(str(i).ljust(6) + "  ".join(cells))
        cells = [f"{self.aggregate[k]:.4f}".ljust(width) for k in keys]
        lines.append("mean".ljust(6) + "  ".join(cells))
        for k in sorted(self.lengths):
            lines.append(f"{k}: {self.lengths[k]:.2f}")
        return "\n".join(lines) + "\n"


def _make_report(task: str, fold_metrics: Sequence[dict],
                 lengths: Optional[dict] = None) -> EvalReport:
    keys = sorted({k for m in fold_metrics for k in m})
    aggregate = {}
    for key in keys:
        vals = [m[key] for m in fold_metrics if key in m]
        aggregate[key] = sum(vals) / len(vals)
    return EvalReport(task=task, fold_metrics=tuple(dict(m) for m
                                                    in fold_metrics),
                      aggregate=aggregate, lengths=dict(lengths or {}))


# ---------------------------------------------------------------------------
# ROUGE


def rouge_tokens(text: str) -> list[str]:
    """Lowercased alphanumeric tokens; punctuation is dropped."""

    return _TOKEN_RE.findall(text.lower())


def _prf(match: int, sys_total: int, ref_total: int
         ) -> tuple[float, float, float]:
    p = match / sys_total if sys_total else 0.0
    r = match / ref_total if ref_total else 0.0
    f1 = 2.0 * p * r / (p + r) if p + r else 0.0
    return p, r, f1


def _clipped(system: Counter, pool: Counter) -> tuple[float, float, float]:
    match = sum(min(n, pool[u]) for u, n in system.items())
    return _prf(match, sum(system.values()), sum(pool.values()))


def rouge_1(system: str, references: Sequence[str]
            ) -> tuple[float, float, float]:
    """Clipped unigram overlap against the pooled references."""

    sys_counts = Counter(rouge_tokens(system))
    pool: Counter = Counter()
    for ref in references:
        pool.update(rouge_tokens(ref))
    return _clipped(sys_counts, pool)


def _su4_units(tokens: Sequence[str]) -> Counter:
    units: Counter = Counter()
    n = len(tokens)
    for i, tok in enumerate(tokens):
        units[("u", tok)] += 1
        # Skip-bigrams allow at most four intervening words: j - i - 1 <= 4.
        for j in range(i + 1, min(n, i + 6)):
            units[("b", tok, tokens[j])] += 1
    return units


def rouge_su4(system: str, references: Sequence[str]
              ) -> tuple[float, float, float]:
    """Skip-bigram (gap <= 4) plus unigram overlap, clipped."""

    sys_counts = _su4_units(rouge_tokens(system))
    pool: Counter = Counter()
    for ref in references:
        pool.update(_su4_units(rouge_tokens(ref)))
    return _clipped(sys_counts, pool)


# ---------------------------------------------------------------------------
# Summaries and baselines


def summarize(prep: PreparedDiscussion, config: Configuration) -> str:
    """Selected phrase surfaces joined in (unit, token start) order."""

    chosen = [c for c, sel in zip(prep.candidates, config.selected) if sel]
    chosen.sort(key=lambda c: (c.unit_id, c.ranges[0][0], c.index))
    return " ".join(
        candidate_surface(prep.discussion.unit_by_id(c.unit_id), c)
        for c in chosen)


def _unit_tfidf_vectors(x: Discussion,
                        stats: CorpusStats) -> list[dict[str, float]]:
    vectors = []
    for u in x.units:
        counts: Counter = Counter(
            t.lemma.lower() for t in u.tokens if not t.is_stopword)
        vectors.append({lem: n * stats.idf_of(lem)
                        for lem, n in counts.items()})
    return vectors


def _cosine(a: Mapping[str, float], b: Mapping[str, float]) -> float:
    if len(b) < len(a):
        a, b = b, a
    dot = sum(v * b.get(k, 0.0) for k, v in a.items())
    if not dot:
        return 0.0
    na = np.sqrt(sum(v * v for v in a.values()))
    nb = np.sqrt(sum(v * v for v in b.values()))
    return float(dot / (na * nb))


def _centroid_scores(x: Discussion, stats: CorpusStats) -> list[float]:
    vectors = _unit_tfidf_vectors(x, stats)
    return [sum(_cosine(v, w) for w in vectors) for v in vectors]


def baseline_longest_da(x: Discussion) -> str:
    """Surface text of the unit with the most tokens (earliest on ties)."""

    best = max(x.units, key=lambda u: len(u.tokens))
    return " ".join(t.surface for t in best.tokens)


def baseline_centroid_da(x: Discussion, stats: CorpusStats) -> str:
    """Surface text of the unit whose TF-IDF vector has the largest summed
    cosine similarity to every unit's vector (earliest on ties)."""

    scores = _centroid_scores(x, stats)
    best = int(np.argmax(scores)) if scores else 0
    return " ".join(t.surface for t in x.units[best].tokens)


def _pos_weight(pos: str) -> float:
    if pos.startswith(_FULL_WEIGHT_PTB) or pos in _FULL_WEIGHT_UPOS:
        return 1.0
    return 0.5


def baseline_avg_word_score(x: Discussion, stats: CorpusStats, k: int) -> str:
    """Top-k candidate phrases by mean word score, concatenated in sequence.

    A word scores TF-IDF x POS weight x unit salience, where salience is the
    unit's summed-cosine centroid score min-max normalized over the
    discussion (all-equal scores normalize to 1 so they cancel).
    """

    if k < 0:
        raise ValueError("phrase count k must be >= 0")
    raw = _centroid_scores(x, stats)
    lo, hi = min(raw), max(raw)
    salience = [1.0 if hi <= lo else (s - lo) / (hi - lo) for s in raw]
    tf: Counter = Counter(
        t.lemma.lower() for u in x.units for t in u.tokens)

    scored = []
    for u, unit in enumerate(x.units):
        for cand in extract_candidates(unit):
            words = [unit.tokens[i] for s, e in cand.ranges
                     for i in range(s, e)]
            total = 0.0
            for t in words:
                lem = t.lemma.lower()
                total += (tf[lem] * stats.idf_of(lem) * _pos_weight(t.pos)
                          * salience[u])
            mean = total / len(words)
            scored.append((-mean, cand.unit_id, cand.ranges[0][0],
                           cand.index, cand))
    scored.sort(key=lambda row: row[:4])
    top = [row[4] for row in scored[:k]]
    top.sort(key=lambda c: (c.unit_id, c.ranges[0][0], c.index))
    return " ".join(
        candidate_surface(x.unit_by_id(c.unit_id), c) for c in top)


# ---------------------------------------------------------------------------
# Fold harness


def fold_indices(n: int, folds: int, seed: int) -> list[list[int]]:
    """Disjoint, exhaustive test folds from a seeded shuffle of 0..n-1."""

    if folds < 2:
        raise ValueError("need at least two folds")
    if n < folds:
        raise CorpusError(f"corpus of {n} discussions cannot fill {folds} "
                          "folds")
    idx = list(range(n))
    rng = Pcg32(seed, stream=_FOLD_STREAM)
    for i in range(n - 1, 0, -1):
        j = rng.below(i + 1)
        idx[i], idx[j] = idx[j], idx[i]
    return [sorted(idx[f::folds]) for f in range(folds)]


def _macro_f1(pred: Sequence[str], gold: Sequence[str]) -> float:
    labels = sorted(set(gold))
    if not labels:
        return 0.0
    total = 0.0
    for lab in labels:
        tp = sum(1 for p, g in zip(pred, gold) if p == lab and g == lab)
        fp = sum(1 for p, g in zip(pred, gold) if p == lab and g != lab)
        fn = sum(1 for p, g in zip(pred, gold) if p != lab and g == lab)
        total += _f1_counts(tp, fp, fn)
    return total / len(labels)


def _pool_metrics(rows: Sequence[tuple[Sequence[int], Sequence[int],
                                       dict, Optional[dict]]]) -> dict:
    """Pooled phrase/discourse metrics over one fold.

    Each row is (predicted phrase bits, gold phrase bits, predicted
    relations, gold relations); a gold relation map of None marks a row
    whose labels are latent, disabling discourse metrics for the fold.
    """

    correct = total = tp = fp = fn = 0
    pred_rel: list[str] = []
    gold_rel: list[str] = []
    with_rel = True
    for psel, gsel, prel, grel in rows:
        for p, g in zip(psel, gsel):
            total += 1
            correct += p == g
            tp += p == 1 and g == 1
            fp += p == 1 and g == 0
            fn += p == 0 and g == 1
        if grel is None:
            with_rel = False
        else:
            for uid in sorted(grel):
                pred_rel.append(prel[uid])
                gold_rel.append(grel[uid])
    metrics = {
        "phrase_accuracy": correct / total if total else 1.0,
        "phrase_f1": _f1_counts(tp, fp, fn),
    }
    if with_rel and gold_rel:
        hits = sum(1 for p, g in zip(pred_rel, gold_rel) if p == g)
        metrics["discourse_accuracy"] = hits / len(gold_rel)
        metrics["discourse_macro_f1"] = _macro_f1(pred_rel, gold_rel)
    return metrics


def _decode_all(test: Sequence[PreparedDiscussion], weights: Weights,
                stats: CorpusStats) -> list[tuple[PreparedDiscussion,
                                                  tuple, dict]]:
    decoded = []
    for prep in test:
        view = compile_discussion(prep, weights.registry, stats)
        csel, d, _, _ = joint_infer_arrays(view, weights)
        selected = selected_from_clusters(view, csel)
        relations = relation_strings(view, d, weights.registry)
        decoded.append((prep, selected, relations))
    return decoded


def _require_gold_phrases(preps: Sequence[PreparedDiscussion]) -> None:
    for p in preps:
        if p.gold_phrase_labels is None:
            raise CorpusError(f"{p.discussion.id}: no gold phrase labels; "
                              "evaluation needs summaries")


def evaluate_split(train: Sequence[PreparedDiscussion],
                   test: Sequence[PreparedDiscussion],
                   cfg: TrainConfig,
                   scorer: Optional[Scorer] = None,
                   *,
                   latent: bool = False,
                   task: str = "phrase") -> tuple[dict, Weights, CorpusStats]:
    """Train on one split, decode the other, return pooled fold metrics."""

    stats = fit_stats(train)
    labels = (latent_label_space(cfg.latent_labels) if latent
              else supervised_label_space(train))
    registry = build_registry(train, labels, stats)
    weights, _ = average_runs(train, cfg, scorer, latent=latent, stats=stats,
                              registry=registry)
    decoded = _decode_all(test, weights, stats)

    if task == "summ":
        metrics, lengths = _summ_metrics(decoded)
        metrics.update(lengths)
        return metrics, weights, stats

    _require_gold_phrases(test)
    rows = []
    for prep, selected, relations in decoded:
        gold_rel = None if latent else dict(prep.tree.relations)
        rows.append((list(selected), prep.gold_phrase_labels,
                     relations, gold_rel))
    return _pool_metrics(rows), weights, stats


def _summ_metrics(decoded: Sequence[tuple[PreparedDiscussion, tuple,
                                          dict]]) -> tuple[dict, dict]:
    r1 = []
    su = []
    lengths = []
    for prep, selected, relations in decoded:
        config = Configuration(selected=tuple(int(v) for v in selected),
                               relations=relations)
        text = summarize(prep, config)
        lengths.append(len(rouge_tokens(text)))
        refs = list(prep.discussion.summaries.abstractive)
        if refs:
            r1.append(rouge_1(text, refs))
            su.append(rouge_su4(text, refs))
    metrics: dict = {}
    if r1:
        for name, rows in (("rouge1", r1), ("su4", su)):
            for j, part in enumerate(("precision", "recall", "f1")):
                metrics[f"{name}_{part}"] = sum(r[j] for r in rows) / len(rows)
    if not lengths:
        lengths = [0]
    stats = {"mean_words": sum(lengths) / len(lengths),
             "min_words": float(min(lengths)),
             "max_words": float(max(lengths))}
    return metrics, stats


def cross_validate(discussions: Sequence[Discussion],
                   cfg: TrainConfig,
                   scorer: Optional[Scorer] = None,
                   folds: int = 5,
                   *,
                   latent: bool = False,
                   task: str = "phrase") -> EvalReport:
    """Seeded k-fold harness: fit, train, and decode inside each fold."""

    if task not in ("phrase", "discourse", "summ"):
        raise ValueError(f"unknown evaluation task {task!r}")
    preps = [prepare(d) for d in discussions]
    splits = fold_indices(len(preps), folds, cfg.seed)
    fold_metrics = []
    lengths: Counter = Counter()
    for test_idx in splits:
        test_set = set(test_idx)
        train = [p for i, p in enumerate(preps) if i not in test_set]
        test = [preps[i] for i in test_idx]
        metrics, _, _ = evaluate_split(train, test, cfg, scorer,
                                       latent=latent, task=task)
        if task == "summ":
            for key in ("mean_words", "min_words", "max_words"):
                lengths[key] += metrics.pop(key) / folds
        fold_metrics.append(metrics)
    return _make_report(task, fold_metrics, dict(lengths) or None)


def majority_baseline(train: Sequence[Discussion],
                      test: Sequence[Discussion]) -> EvalReport:
    """Constant predictor: train-majority phrase label and relation label."""

    train_preps = [prepare(d) for d in train]
    test_preps = [prepare(d) for d in test]
    _require_gold_phrases(train_preps)
    _require_gold_phrases(test_preps)

    votes: Counter = Counter()
    for p in train_preps:
        votes.update(p.gold_phrase_labels)
    phrase_label = 1 if votes[1] > votes[0] else 0

    rel_votes: Counter = Counter()
    for p in train_preps:
        rel_votes.update(p.tree.relations.values())
    rel_label = None
    if rel_votes:
        top = max(rel_votes.values())
        rel_label = min(r for r, n in rel_votes.items() if n == top)

    rows = []
    for p in test_preps:
        gold_rel = dict(p.tree.relations) if rel_label is not None else None
        pred_rel = ({uid: rel_label for uid in gold_rel} if gold_rel
                    else {})
        rows.append(([phrase_label] * len(p.candidates),
                     p.gold_phrase_labels, pred_rel, gold_rel))
    metrics = _pool_metrics(rows)
    return _make_report("phrase", [metrics])
