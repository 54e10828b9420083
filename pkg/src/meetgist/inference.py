"""Exact MAP inference: alternating conditional argmax over phrase clusters
and relation labels.

Given phrases, relations form a tree-structured problem (each unit's label
couples only to its parent's label through the order-2 template), solved
exactly by one upward max-product sweep and a downward decision sweep.
Given relations, the phrase objective decomposes per cluster, solved by a
gain sign test. Alternation starts from the neutral all-first-label relation
assignment and stops at a fixpoint (or after ``max_iters`` alternations);
the score never decreases.

Ties resolve deterministically: smallest label index wins, zero-gain
clusters stay unselected.
"""

from __future__ import annotations

import itertools
from typing import Optional

import numpy as np

from .corpus import PreparedDiscussion
from .features import CorpusStats
from .model import (
    CompiledDiscussion,
    Configuration,
    Weights,
    check_fingerprint,
    compile_discussion,
    config_from_arrays,
    score_view,
)

DEFAULT_MAX_ITERS = 10
BRUTE_FORCE_LIMIT = 1_000_000


def _base_relation_scores(view: CompiledDiscussion,
                          weights: Weights) -> np.ndarray:
    """Per-unit, per-label scores from the base discourse templates."""

    theta = np.zeros((view.n_units, view.n_labels))
    for i in view.nonroot:
        a, b = view.dptr[i], view.dptr[i + 1]
        if b > a:
            theta[i] = view.dvals[a:b] @ weights.wd[view.dids[a:b]]
    return theta


def _joint_relation_scores(view: CompiledDiscussion, cluster_sel: np.ndarray,
                           weights: Weights,
                           theta: np.ndarray) -> np.ndarray:
    """Add the selected candidates' relation-tagged content scores."""

    theta = theta.copy()
    for j in range(view.n_cands):
        if not cluster_sel[view.cand_cluster[j]]:
            continue
        u = view.cand_unit[j]
        if view.parent[u] < 0:
            continue
        a, b = view.cptr[j], view.cptr[j + 1]
        if b > a:
            theta[u] += view.cvals[a:b] @ weights.wcd[view.cids[a:b]]
    return theta


def infer_relations(view: CompiledDiscussion, cluster_sel: np.ndarray,
                    weights: Weights) -> np.ndarray:
    """Exact argmax over relation labels for a fixed phrase selection.

    Upward sweep (children before parents, guaranteed because parents have
    smaller unit ids), then decisions in increasing unit order taking the
    first (smallest) maximizing label.
    """

    n, L = view.n_units, view.n_labels
    acc = _joint_relation_scores(
        view, cluster_sel, weights, _base_relation_scores(view, weights))
    for i in range(n - 1, 0, -1):
        p = view.parent[i]
        if p > 0:
            acc[p] += (acc[i][:, None] + weights.wo2).max(axis=0)
    d = np.zeros(n, dtype=np.int64)
    for i in range(1, n):
        p = view.parent[i]
        if p == 0:
            d[i] = int(np.argmax(acc[i]))
        else:
            d[i] = int(np.argmax(acc[i] + weights.wo2[:, d[p]]))
    return d


def cluster_gains(view: CompiledDiscussion, d: np.ndarray,
                  weights: Weights) -> np.ndarray:
    """Per-cluster score gain of selecting the cluster, under relations d."""

    gains = np.zeros(view.n_clusters)
    for j in range(view.n_cands):
        a, b = view.cptr[j], view.cptr[j + 1]
        ids = view.cids[a:b]
        vals = view.cvals[a:b]
        gain = float(np.dot(vals, weights.wc[ids]))
        u = view.cand_unit[j]
        if view.parent[u] >= 0:
            gain += float(np.dot(vals, weights.wcd[ids, d[u]]))
        gains[view.cand_cluster[j]] += gain
    return gains


def infer_phrases(view: CompiledDiscussion, d: np.ndarray,
                  weights: Weights) -> np.ndarray:
    """Exact argmax over cluster selections for fixed relations: select a
    cluster exactly when its total gain is strictly positive."""

    return (cluster_gains(view, d, weights) > 0.0).astype(np.int8)


def joint_infer_arrays(view: CompiledDiscussion, weights: Weights,
                       max_iters: int = DEFAULT_MAX_ITERS
                       ) -> tuple[np.ndarray, np.ndarray, float, int]:
    """Alternating argmax; returns (cluster bits, labels, score, sweeps)."""

    d = np.zeros(view.n_units, dtype=np.int64)
    csel = infer_phrases(view, d, weights)
    sweeps = 0
    for _ in range(max_iters):
        sweeps += 1
        d_next = infer_relations(view, csel, weights)
        c_next = infer_phrases(view, d_next, weights)
        converged = (np.array_equal(d_next, d)
                     and np.array_equal(c_next, csel))
        d, csel = d_next, c_next
        if converged:
            break
    return csel, d, score_view(view, csel, d, weights), sweeps


def joint_infer(view: CompiledDiscussion, weights: Weights,
                max_iters: int = DEFAULT_MAX_ITERS) -> Configuration:
    csel, d, value, _ = joint_infer_arrays(view, weights, max_iters)
    return config_from_arrays(view, csel, d, weights.registry, value)


def decode_discussion(prep: PreparedDiscussion, weights: Weights,
                      stats: CorpusStats,
                      max_iters: int = DEFAULT_MAX_ITERS) -> Configuration:
    """Compile against the model's registry/stats and run joint inference."""

    check_fingerprint(weights, stats)
    view = compile_discussion(prep, weights.registry, stats)
    return joint_infer(view, weights, max_iters)


def brute_force_infer(view: CompiledDiscussion, weights: Weights,
                      limit: int = BRUTE_FORCE_LIMIT) -> Configuration:
    """Exhaustive exact argmax (cluster-consistent selections only).

    Enumerates every label assignment (lexicographic) and, for each, every
    cluster selection (unselected-first lexicographic); keeps the first
    strictly better configuration, matching the component tie rules.
    """

    k = len(view.nonroot)
    L = view.n_labels
    G = view.n_clusters
    combos = (L ** k) * (2 ** G)
    if combos > limit:
        raise ValueError(
            f"{combos} configurations exceed the enumeration limit {limit}")

    theta = _base_relation_scores(view, weights)
    # Fixed content part of each cluster's gain.
    base_gain = np.zeros(G)
    scd = np.zeros((max(view.n_cands, 1), L))
    for j in range(view.n_cands):
        a, b = view.cptr[j], view.cptr[j + 1]
        ids = view.cids[a:b]
        vals = view.cvals[a:b]
        base_gain[view.cand_cluster[j]] += float(np.dot(vals,
                                                        weights.wc[ids]))
        if view.parent[view.cand_unit[j]] >= 0:
            scd[j] = vals @ weights.wcd[ids]
    bits = ((np.arange(2 ** G)[:, None]
             >> np.arange(G - 1, -1, -1)[None, :]) & 1).astype(np.float64)

    deep = [int(i) for i in view.nonroot if view.parent[i] > 0]
    best_score = -np.inf
    best: Optional[tuple[np.ndarray, np.ndarray]] = None
    d = np.zeros(view.n_units, dtype=np.int64)
    for assign in itertools.product(range(L), repeat=k):
        d[view.nonroot] = assign
        dscore = float(theta[view.nonroot, d[view.nonroot]].sum())
        for i in deep:
            dscore += float(weights.wo2[d[i], d[view.parent[i]]])
        gains = base_gain.copy()
        for j in range(view.n_cands):
            u = view.cand_unit[j]
            if view.parent[u] >= 0:
                gains[view.cand_cluster[j]] += scd[j, d[u]]
        scores = dscore + bits @ gains
        m = int(np.argmax(scores))
        if scores[m] > best_score:
            best_score = float(scores[m])
            best = (bits[m].astype(np.int8), d.copy())
    assert best is not None
    csel, d_best = best
    return config_from_arrays(view, csel, d_best, weights.registry,
                              score_view(view, csel, d_best, weights))
