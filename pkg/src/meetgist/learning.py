"""SampleRank training: objective, proposals, chains, run averaging.

Training maximizes agreement between the model ranking and an objective
omega over configuration pairs (current state vs a single-move proposal).
The objective is a convex combination of phrase F1 and macro relation F1
(or phrase F1 alone when relations are latent). Weight snapshots taken
after every accepted update (plus the random initial vector) are averaged
into the returned model.

The chain inner loop runs in a kernel selected at import time (compiled
extension when built, pure Python otherwise); both backends follow the exact
operation order documented in ``_kernel._pykernel``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Optional, Sequence

import numpy as np

from ._kernel import run_chain
from .corpus import CorpusError, PreparedDiscussion
from .features import CorpusStats, FeatureRegistry, build_registry, fit_stats
from .model import (
    CompiledDiscussion,
    Configuration,
    Weights,
    compile_discussion,
)
from .rng import Pcg32


@dataclass(frozen=True)
class Scorer:
    """Objective definition: which F1s count, and their mixing weight."""

    mode: str = "joint"  # "joint" (phrase + relation F1) or "content"
    alpha: float = 0.1   # weight of the phrase F1 in joint mode

    def __post_init__(self) -> None:
        if self.mode not in ("joint", "content"):
            raise ValueError(f"unknown scorer mode {self.mode!r}")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must lie in [0, 1]")


@dataclass(frozen=True)
class TrainConfig:
    """Sampler hyperparameters (defaults match the shipped configuration)."""

    eta: float = 0.01      # learning rate
    epochs: int = 10       # passes over the training discussions
    rounds: int = 50       # proposal rounds per chain
    alpha: float = 0.1     # phrase-F1 weight inside the joint objective
    runs: int = 20         # independently seeded runs to average
    latent_labels: int = 9 # latent label space size (latent mode only)
    seed: int = 0
    jobs: int = 1

    def __post_init__(self) -> None:
        if self.eta <= 0:
            raise ValueError("eta must be positive")
        for name in ("epochs", "rounds", "runs", "latent_labels", "jobs"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be at least 1")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must lie in [0, 1]")


# ---------------------------------------------------------------------------
# Objective


def _f1_counts(tp: int, fp: int, fn: int) -> float:
    if tp == 0:
        return 0.0
    p = tp / (tp + fp)
    r = tp / (tp + fn)
    return 2.0 * p * r / (p + r)


def f1_phrase(pred: Sequence[int], gold: Sequence[int]) -> float:
    """Positive-class F1 of a binary phrase selection (0 when no true
    positives exist, including the empty-gold edge case)."""

    if len(pred) != len(gold):
        raise ValueError(
            f"phrase assignments disagree in length: {len(pred)} vs "
            f"{len(gold)}")
    tp = fp = fn = 0
    for p, g in zip(pred, gold):
        if p and g:
            tp += 1
        elif p:
            fp += 1
        elif g:
            fn += 1
    return _f1_counts(tp, fp, fn)


def f1_discourse(pred: Mapping[int, str], gold: Mapping[int, str]) -> float:
    """Macro-averaged F1 over the relation labels present in gold."""

    if set(pred) != set(gold):
        raise ValueError("relation assignments cover different units")
    labels = sorted(set(gold.values()))
    if not labels:
        return 0.0
    total = 0.0
    for lab in labels:
        tp = sum(1 for u, g in gold.items() if g == lab and pred[u] == lab)
        fp = sum(1 for u in gold if pred[u] == lab and gold[u] != lab)
        fn = sum(1 for u, g in gold.items() if g == lab and pred[u] != lab)
        total += _f1_counts(tp, fp, fn)
    return total / len(labels)


def omega(config: Configuration, gold: Configuration,
          scorer: Scorer) -> float:
    """Objective value of a configuration against gold."""

    f1c = f1_phrase(config.selected, gold.selected)
    if scorer.mode == "content":
        return f1c
    f1d = f1_discourse(config.relations, gold.relations)
    return scorer.alpha * f1c + (1.0 - scorer.alpha) * f1d


def gold_configuration(prep: PreparedDiscussion) -> Configuration:
    labels = prep.gold_phrase_labels
    if labels is None:
        raise CorpusError(
            f"{prep.discussion.id}: candidates carry no gold labels")
    return Configuration(selected=labels,
                         relations=dict(prep.tree.relations))


# ---------------------------------------------------------------------------
# Proposals (module-level mirrors of the kernel moves)


def random_configuration(prep: PreparedDiscussion, labels: Sequence[str],
                         rng: Pcg32) -> Configuration:
    """Uniform random init, same draw order as the chain kernels."""

    nonroot = sorted(prep.tree.attachments)
    relations = {}
    if len(labels) > 1:
        for unit_id in nonroot:
            relations[unit_id] = labels[rng.below(len(labels))]
    else:
        for unit_id in nonroot:
            relations[unit_id] = labels[0]
    bits = [rng.below(2) for _ in prep.clusters]
    selected = tuple(bits[prep.cluster_index[c.cluster_key]]
                     for c in prep.candidates)
    return Configuration(selected=selected, relations=relations)


def propose_relation(config: Configuration, prep: PreparedDiscussion,
                     labels: Sequence[str], rng: Pcg32) -> Configuration:
    """Resample exactly one non-root unit's relation uniformly from the
    other labels. Consumes no draws when no such move exists."""

    nonroot = sorted(prep.tree.attachments)
    if not nonroot or len(labels) < 2:
        return Configuration(config.selected, dict(config.relations))
    k = nonroot[rng.below(len(nonroot))]
    current = list(labels).index(config.relations[k])
    r = rng.below(len(labels) - 1)
    new = r + 1 if r >= current else r
    relations = dict(config.relations)
    relations[k] = labels[new]
    return Configuration(config.selected, relations)


def propose_phrase_flip(config: Configuration, prep: PreparedDiscussion,
                        rng: Pcg32) -> Configuration:
    """Flip the selection of exactly one uniformly chosen cluster."""

    if not prep.clusters:
        return Configuration(config.selected, dict(config.relations))
    g = rng.below(len(prep.clusters))
    keys = {m.key for m in prep.clusters[g].members}
    selected = tuple(
        1 - s if c.key in keys else s
        for c, s in zip(prep.candidates, config.selected))
    return Configuration(selected, dict(config.relations))


# ---------------------------------------------------------------------------
# Training


class TrainingTrace:
    """Per-round instrumentation of a training run.

    Rows are (epoch, sample id, round, signed objective delta, delta_omega,
    margin, updated, accepted); ``snapshots`` (optional) collects a flat copy
    of the weight vector for the initial draw and after every update.
    """

    def __init__(self, collect_snapshots: bool = False):
        self.rows: list[tuple] = []
        self.collect_snapshots = collect_snapshots
        self.snapshots: list[np.ndarray] = []

    def extend(self, epoch: int, sample_id: str, arrays: tuple) -> None:
        dom, margin, upd, acc = arrays
        for t in range(len(dom)):
            signed = float(dom[t])
            self.rows.append((
                epoch, sample_id, t, signed, abs(signed), float(margin[t]),
                int(upd[t]), int(acc[t])))

    def write_tsv(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("epoch\tsample\tround\tdelta_omega\tmargin\tupdated"
                     "\taccepted\n")
            for (epoch, sample, rnd, _signed, dom, margin, upd,
                 acc) in self.rows:
                fh.write(f"{epoch}\t{sample}\t{rnd}\t{dom!r}\t{margin!r}"
                         f"\t{upd}\t{acc}\n")


def latent_label_space(k: int) -> tuple[str, ...]:
    return tuple(str(i) for i in range(1, k + 1))


def supervised_label_space(
        preps: Sequence[PreparedDiscussion]) -> tuple[str, ...]:
    labels = sorted({r for p in preps for r in p.tree.relations.values()})
    if not labels:
        raise CorpusError("no gold relations in the training corpus")
    return tuple(labels)


def _check_gold(views: Sequence[CompiledDiscussion], joint: bool) -> None:
    for view in views:
        did = view.prep.discussion.id
        if not view.has_gold_phrases:
            raise CorpusError(f"{did}: missing gold phrase labels (no "
                              "summaries to induce them from?)")
        if joint and not view.has_gold_relations:
            raise CorpusError(
                f"{did}: the joint objective needs a gold relation on every "
                "non-root unit")


def samplerank_train(
    preps: Sequence[PreparedDiscussion],
    cfg: TrainConfig,
    scorer: Optional[Scorer] = None,
    *,
    latent: bool = False,
    stats: Optional[CorpusStats] = None,
    registry: Optional[FeatureRegistry] = None,
    views: Optional[Sequence[CompiledDiscussion]] = None,
    run_seed: Optional[int] = None,
    trace: Optional[TrainingTrace] = None,
) -> Weights:
    """One SampleRank run; returns the snapshot-averaged weights.

    The initial weight vector is uniform in [-1, 1] and is itself the first
    snapshot. Each epoch walks the training discussions in corpus order,
    running one chain per discussion.
    """

    if not preps:
        raise CorpusError("cannot train on an empty corpus")
    scorer = scorer or Scorer("content" if latent else "joint",
                              alpha=cfg.alpha)
    if latent and scorer.mode != "content":
        raise CorpusError("latent relations require the content-only "
                          "objective: gold relation labels do not exist")
    if stats is None:
        stats = fit_stats(preps)
    if registry is None:
        labels = (latent_label_space(cfg.latent_labels) if latent
                  else supervised_label_space(preps))
        registry = build_registry(preps, labels, stats)
    if views is None:
        views = [compile_discussion(p, registry, stats) for p in preps]
    joint = scorer.mode == "joint"
    _check_gold(views, joint)

    rng = Pcg32(cfg.seed if run_seed is None else run_seed)
    weights = Weights.random(registry, rng, stats.fingerprint(),
                             "latent" if latent else "tas")
    sums = weights.copy()
    count = 1
    if trace is not None and trace.collect_snapshots:
        trace.snapshots.append(weights.flat())

    rng_state = np.array([rng.state, rng.inc], dtype=np.uint64)
    hook = None
    if trace is not None and trace.collect_snapshots:
        hook = lambda: trace.snapshots.append(weights.flat())

    for epoch in range(cfg.epochs):
        for prep, view in zip(preps, views):
            arrays = None
            if trace is not None:
                arrays = (np.zeros(cfg.rounds), np.zeros(cfg.rounds),
                          np.zeros(cfg.rounds, dtype=np.uint8),
                          np.zeros(cfg.rounds, dtype=np.uint8))
            count = run_chain(view, weights, sums, rng_state, cfg.rounds,
                              cfg.eta, scorer.alpha, joint, count, arrays,
                              hook)
            if trace is not None:
                trace.extend(epoch, prep.discussion.id, arrays)

    return Weights(
        registry=registry,
        wc=sums.wc / count, wd=sums.wd / count,
        wo2=sums.wo2 / count, wcd=sums.wcd / count,
        stats_fingerprint=stats.fingerprint(),
        mode="latent" if latent else "tas",
    )


def train_latent(preps: Sequence[PreparedDiscussion],
                 cfg: TrainConfig, **kwargs) -> Weights:
    """Latent-relation variant: anonymous labels 1..K, phrase-F1 objective."""

    return samplerank_train(preps, cfg, Scorer("content", alpha=cfg.alpha),
                            latent=True, **kwargs)


def _one_run(args):
    preps, cfg, scorer, latent, stats, registry, seed = args
    return samplerank_train(preps, cfg, scorer, latent=latent, stats=stats,
                            registry=registry, run_seed=seed)


def average_runs(
    preps: Sequence[PreparedDiscussion],
    cfg: TrainConfig,
    scorer: Optional[Scorer] = None,
    *,
    latent: bool = False,
    stats: Optional[CorpusStats] = None,
    registry: Optional[FeatureRegistry] = None,
    jobs: Optional[int] = None,
) -> tuple[Weights, CorpusStats]:
    """Average ``cfg.runs`` independently seeded runs element-wise.

    Run r uses seed ``cfg.seed + r``; with one run this reduces to a single
    ``samplerank_train``. Returns the averaged weights and the fitted stats.
    """

    scorer = scorer or Scorer("content" if latent else "joint",
                              alpha=cfg.alpha)
    if stats is None:
        stats = fit_stats(preps)
    if registry is None:
        labels = (latent_label_space(cfg.latent_labels) if latent
                  else supervised_label_space(preps))
        registry = build_registry(preps, labels, stats)
    jobs = cfg.jobs if jobs is None else jobs
    seeds = [cfg.seed + r for r in range(cfg.runs)]

    if jobs > 1 and cfg.runs > 1:
        from concurrent.futures import ProcessPoolExecutor
        tasks = [(preps, cfg, scorer, latent, stats, registry, s)
                 for s in seeds]
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_one_run, tasks))
    else:
        views = [compile_discussion(p, registry, stats) for p in preps]
        results = [
            samplerank_train(preps, cfg, scorer, latent=latent, stats=stats,
                             registry=registry, views=views, run_seed=s)
            for s in seeds
        ]

    out = Weights.zeros(registry, stats.fingerprint(),
                        "latent" if latent else "tas")
    for w in results:
        out.wc += w.wc
        out.wd += w.wd
        out.wo2 += w.wo2
        out.wcd += w.wcd
    out.wc /= cfg.runs
    out.wd /= cfg.runs
    out.wo2 /= cfg.runs
    out.wcd /= cfg.runs
    return out, stats
