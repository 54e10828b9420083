"""Consistency-of-understanding prediction.

Three feature families are read off the trained salience/relation model:
the length-normalized MAP score difference between a consistent-trained and
an inconsistent-trained model, normalized relation n-gram counts from the
discourse tree, and word entrainment between the main speaker and the rest.
A hinge-loss linear classifier consumes them under a leave-one-out harness:
training rows are built from gold labels, the held-out row from model
predictions.
"""

from __future__ import annotations

import csv
import io
from collections import Counter, defaultdict
from dataclasses import dataclass
from typing import Mapping, Optional, Sequence

import numpy as np

from .corpus import (
    CorpusError,
    Discussion,
    DiscourseTree,
    PreparedDiscussion,
    prepare,
)
from .evaluation import EvalReport, _make_report
from .features import CorpusStats, FeatureRegistry, build_registry, fit_stats
from .inference import joint_infer_arrays
from .learning import TrainConfig, average_runs, supervised_label_space
from .model import ModelError, Weights, check_fingerprint, compile_discussion

__all__ = [
    "CONSISTENT",
    "INCONSISTENT",
    "CouFeatures",
    "LinearClassifier",
    "cou_features",
    "feature_names",
    "features_csv",
    "gold_assignment",
    "leave_one_out",
    "majority_loo_accuracy",
    "predicted_assignment",
    "prob_diff",
    "relation_ngram_features",
    "train_classifier",
    "train_dual_models",
    "word_entrainment",
]

CONSISTENT = "consistent"
INCONSISTENT = "inconsistent"


# ---------------------------------------------------------------------------
# Feature families


@dataclass(frozen=True)
class CouFeatures:
    """One discussion's classifier inputs.

    The n-gram blocks are count shares (each sums to 1 when nonempty);
    entrainment is never positive.
    """

    prob_diff: float
    relation_unigrams: dict
    relation_bigrams: dict
    entrainment: float

    def vector(self, relation_labels: Sequence[str]) -> np.ndarray:
        vec = [self.prob_diff, self.entrainment]
        vec.extend(self.relation_unigrams.get(lab, 0.0)
                   for lab in relation_labels)
        vec.extend(self.relation_bigrams.get((p, c), 0.0)
                   for p in relation_labels for c in relation_labels)
        return np.asarray(vec, dtype=np.float64)


def feature_names(relation_labels: Sequence[str]) -> tuple[str, ...]:
    names = ["prob_diff", "entrainment"]
    names.extend(f"uni={lab}" for lab in relation_labels)
    names.extend(f"bi={p}|{c}" for p in relation_labels
                 for c in relation_labels)
    return tuple(names)


def prob_diff(prep: PreparedDiscussion, w_con: Weights, w_incon: Weights,
              stats: CorpusStats) -> float:
    """Per-unit difference of the two models' MAP scores on one discussion."""

    reg_a, reg_b = w_con.registry, w_incon.registry
    if (reg_a.content, reg_a.discourse, reg_a.labels) != \
            (reg_b.content, reg_b.discourse, reg_b.labels):
        raise ModelError("the two models do not share a feature registry")
    check_fingerprint(w_con, stats)
    check_fingerprint(w_incon, stats)
    view = compile_discussion(prep, reg_a, stats)
    _, _, score_con, _ = joint_infer_arrays(view, w_con)
    _, _, score_incon, _ = joint_infer_arrays(view, w_incon)
    return (score_con - score_incon) / view.n_units


def relation_ngram_features(relations: Mapping[int, str],
                            tree: DiscourseTree) -> tuple[dict, dict]:
    """Normalized relation label shares and (parent, child) pair shares.

    Bigrams run over tree edges whose parent is itself attached, so a star
    tree has an empty bigram block.
    """

    missing = set(tree.attachments) - set(relations)
    if missing:
        raise CorpusError(f"units {sorted(missing)} carry no relation label")
    uni: Counter = Counter(relations[uid] for uid in tree.attachments)
    bi: Counter = Counter()
    for child, parent in tree.attachments.items():
        if parent in tree.attachments:
            bi[(relations[parent], relations[child])] += 1
    n_uni = sum(uni.values())
    n_bi = sum(bi.values())
    unigrams = ({lab: n / n_uni for lab, n in sorted(uni.items())}
                if n_uni else {})
    bigrams = ({pair: n / n_bi for pair, n in sorted(bi.items())}
               if n_bi else {})
    return unigrams, bigrams


def word_entrainment(prep: PreparedDiscussion,
                     selected: Sequence[int]) -> float:
    """Mean negated L1 gap between the main speaker's and each other
    speaker's relative frequencies over the predicted phrases' content words.

    Zero for single-speaker discussions and for empty vocabularies; never
    positive otherwise.
    """

    x = prep.discussion
    vocab: set[str] = set()
    for cand, sel in zip(prep.candidates, selected):
        if not sel:
            continue
        unit = x.unit_by_id(cand.unit_id)
        for s, e in cand.ranges:
            for t in unit.tokens[s:e]:
                if not t.is_stopword:
                    vocab.add(t.lemma.lower())

    totals: Counter = Counter()
    counts: dict[str, Counter] = defaultdict(Counter)
    for u in x.units:
        totals[u.speaker] += len(u.tokens)
        counts[u.speaker].update(t.lemma.lower() for t in u.tokens)
    others = sorted(s for s in totals if s != prep.main_speaker)
    if not others or not vocab:
        return 0.0

    def freq(speaker: str, word: str) -> float:
        return counts[speaker][word] / totals[speaker]

    total = 0.0
    for s in others:
        total -= sum(abs(freq(prep.main_speaker, w) - freq(s, w))
                     for w in sorted(vocab))
    return total / len(others)


def gold_assignment(prep: PreparedDiscussion) -> tuple[tuple, dict]:
    selected = prep.gold_phrase_labels
    if selected is None:
        raise CorpusError(f"{prep.discussion.id}: no gold phrase labels")
    return selected, dict(prep.tree.relations)


def predicted_assignment(prep: PreparedDiscussion, weights: Weights,
                         stats: CorpusStats) -> tuple[tuple, dict]:
    from .inference import decode_discussion

    config = decode_discussion(prep, weights, stats)
    return config.selected, config.relations


def cou_features(prep: PreparedDiscussion, w_con: Weights, w_incon: Weights,
                 stats: CorpusStats, selected: Sequence[int],
                 relations: Mapping[int, str]) -> CouFeatures:
    """Assemble the classifier inputs from one phrase/relation assignment."""

    uni, bi = relation_ngram_features(relations, prep.tree)
    return CouFeatures(
        prob_diff=prob_diff(prep, w_con, w_incon, stats),
        relation_unigrams=uni,
        relation_bigrams=bi,
        entrainment=word_entrainment(prep, selected),
    )


# ---------------------------------------------------------------------------
# Dual models


def train_dual_models(
    train: Sequence[Discussion],
    cfg: TrainConfig,
    *,
    stats: Optional[CorpusStats] = None,
    registry: Optional[FeatureRegistry] = None,
) -> tuple[Weights, Weights]:
    """Train one joint model per consistency class on a shared registry."""

    preps = [prepare(d) for d in train]
    by_class: dict[str, list[PreparedDiscussion]] = {CONSISTENT: [],
                                                     INCONSISTENT: []}
    for d, p in zip(train, preps):
        if d.cou_label not in by_class:
            raise CorpusError(f"{d.id}: missing consistency label")
        by_class[d.cou_label].append(p)
    for name, rows in by_class.items():
        if not rows:
            raise CorpusError(f"no {name} discussions in the training set")

    if stats is None:
        stats = fit_stats(preps)
    if registry is None:
        registry = build_registry(preps, supervised_label_space(preps),
                                  stats)
    w_con, _ = average_runs(by_class[CONSISTENT], cfg, stats=stats,
                            registry=registry)
    w_incon, _ = average_runs(by_class[INCONSISTENT], cfg, stats=stats,
                              registry=registry)
    return w_con, w_incon


# ---------------------------------------------------------------------------
# Hinge-loss linear classifier


@dataclass
class LinearClassifier:
    """Linear decision rule over CouFeatures vectors."""

    weights: np.ndarray
    bias: float
    trade_off: float
    relation_labels: tuple[str, ...]

    @property
    def names(self) -> tuple[str, ...]:
        return feature_names(self.relation_labels)

    def decision(self, vec: np.ndarray) -> float:
        return float(np.dot(self.weights, vec) + self.bias)

    def predict(self, feat: CouFeatures) -> str:
        vec = feat.vector(self.relation_labels)
        return CONSISTENT if self.decision(vec) >= 0.0 else INCONSISTENT

    def hinge_loss(self, features: Sequence[CouFeatures],
                   labels: Sequence[str]) -> float:
        total = 0.0
        for feat, lab in zip(features, labels):
            y = _sign(lab)
            total += max(0.0, 1.0 - y * self.decision(
                feat.vector(self.relation_labels)))
        return total / len(features)


def _sign(label) -> float:
    if label == CONSISTENT:
        return 1.0
    if label == INCONSISTENT:
        return -1.0
    value = float(label)
    if value in (1.0, -1.0):
        return value
    raise ValueError(f"not a consistency label: {label!r}")


def train_classifier(features: Sequence[CouFeatures],
                     labels: Sequence[str],
                     relation_labels: Optional[Sequence[str]] = None,
                     trade_off: float = 1.0,
                     iterations: int = 2000) -> LinearClassifier:
    """Full-batch subgradient descent on the regularized hinge objective.

    The regularizer weight is 1 / (trade_off * n); the step size decays as
    1 / (lambda * t). Training is deterministic: no sampling is involved.
    """

    if len(features) != len(labels) or not features:
        raise ValueError("need one label per feature row")
    y = np.asarray([_sign(lab) for lab in labels])
    if len(set(y.tolist())) < 2:
        raise CorpusError("both consistency classes are required to train")
    if relation_labels is None:
        seen: set[str] = set()
        for feat in features:
            seen.update(feat.relation_unigrams)
            for p, c in feat.relation_bigrams:
                seen.add(p)
                seen.add(c)
        relation_labels = sorted(seen)
    relation_labels = tuple(relation_labels)

    X = np.stack([f.vector(relation_labels) for f in features])
    n, dim = X.shape
    lam = 1.0 / (trade_off * n)
    w = np.zeros(dim)
    b = 0.0
    for t in range(1, iterations + 1):
        eta = 1.0 / (lam * t)
        margins = y * (X @ w + b)
        active = margins < 1.0
        grad_w = lam * w
        grad_b = 0.0
        if active.any():
            grad_w = grad_w - (y[active, None] * X[active]).sum(axis=0) / n
            grad_b = -float(y[active].sum()) / n
        w = w - eta * grad_w
        b = b - eta * grad_b
    return LinearClassifier(weights=w, bias=float(b), trade_off=trade_off,
                            relation_labels=relation_labels)


def features_csv(features: Sequence[CouFeatures],
                 relation_labels: Sequence[str],
                 labels: Optional[Sequence[str]] = None) -> str:
    """Feature matrix as CSV text (header row = feature names)."""

    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    header = list(feature_names(relation_labels))
    if labels is not None:
        header.append("label")
    writer.writerow(header)
    for i, feat in enumerate(features):
        row = [repr(v) for v in feat.vector(relation_labels).tolist()]
        if labels is not None:
            row.append(labels[i])
        writer.writerow(row)
    return buf.getvalue()


# ---------------------------------------------------------------------------
# Leave-one-out harness


def majority_loo_accuracy(labels: Sequence[str]) -> float:
    """Accuracy of predicting, for each item, the majority of the others."""

    if not labels:
        raise ValueError("no labels")
    counts = Counter(labels)
    hits = 0
    for lab in labels:
        rest = counts.copy()
        rest[lab] -= 1
        top = max(rest.values())
        winners = {c for c, n in rest.items() if n == top}
        pred = CONSISTENT if CONSISTENT in winners else min(winners)
        hits += pred == lab
    return hits / len(labels)


def leave_one_out(corpus: Sequence[Discussion],
                  cfg: TrainConfig) -> EvalReport:
    """N rounds of train-on-rest, predict-held-out consistency.

    Training rows use gold phrase and relation labels; the held-out row uses
    the full model's predictions, mirroring deployment.
    """

    for d in corpus:
        if d.cou_label is None:
            raise CorpusError(f"{d.id}: missing consistency label")
    if len(corpus) < 3:
        raise CorpusError("leave-one-out needs at least three discussions")

    gold: list[str] = []
    pred: list[str] = []
    for i, held in enumerate(corpus):
        rest = [d for j, d in enumerate(corpus) if j != i]
        train_preps = [prepare(d) for d in rest]
        stats = fit_stats(train_preps)
        registry = build_registry(train_preps,
                                  supervised_label_space(train_preps), stats)
        w_con, w_incon = train_dual_models(rest, cfg, stats=stats,
                                           registry=registry)
        w_full, _ = average_runs(train_preps, cfg, stats=stats,
                                 registry=registry)

        rows = []
        for p in train_preps:
            sel, rel = gold_assignment(p)
            rows.append(cou_features(p, w_con, w_incon, stats, sel, rel))
        clf = train_classifier(rows, [d.cou_label for d in rest],
                               relation_labels=registry.labels)

        held_prep = prepare(held)
        sel, rel = predicted_assignment(held_prep, w_full, stats)
        feat = cou_features(held_prep, w_con, w_incon, stats, sel, rel)
        gold.append(held.cou_label)
        pred.append(clf.predict(feat))

    hits = sum(1 for p, g in zip(pred, gold) if p == g)
    tp = sum(1 for p, g in zip(pred, gold) if p == g == CONSISTENT)
    fp = sum(1 for p, g in zip(pred, gold)
             if p == CONSISTENT and g != CONSISTENT)
    fn = sum(1 for p, g in zip(pred, gold)
             if p != CONSISTENT and g == CONSISTENT)
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = (2 * precision * recall / (precision + recall)
          if precision + recall else 0.0)
    metrics = {"accuracy": hits / len(corpus), "f1": f1,
               "majority_accuracy": majority_loo_accuracy(gold)}
    return _make_report("cou", [metrics])
