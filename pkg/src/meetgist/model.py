"""Log-linear model: configurations, weights, scoring, and the model file.

The global score of a configuration (phrase selection + relation labels) is
the dot product of the weight vector with the global feature map. Three
weight blocks exist: content (per content template), discourse (per base
template x label, plus an order-2 label-pair square), and joint (content
template x label).

For inference and sampling, a discussion is compiled once into a dense
numeric view (:class:`CompiledDiscussion`) holding normalized feature rows
in CSR form; all hot paths work on that view.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np

from .corpus import CorpusError, PreparedDiscussion
from .features import (
    CorpusStats,
    FeatureRegistry,
    content_features,
    discourse_observations,
    global_features,
    normalize,
)
from .rng import Pcg32

MODEL_FORMAT = "meetgist-model"
MODEL_VERSION = 1


class ModelError(Exception):
    """Raised for malformed model files or model/data mismatches."""


@dataclass
class Configuration:
    """One joint assignment: 0/1 per candidate plus a label per non-root unit.

    ``selected`` aligns with ``PreparedDiscussion.candidates``;
    ``relations`` maps non-root unit ids to label strings.
    """

    selected: tuple[int, ...]
    relations: dict[int, str]
    score: Optional[float] = None

    def same_assignment(self, other: "Configuration") -> bool:
        return (self.selected == other.selected
                and self.relations == other.relations)


@dataclass
class Weights:
    """Dense weight blocks plus the registry that defines their layout."""

    registry: FeatureRegistry
    wc: np.ndarray   # [n_content]
    wd: np.ndarray   # [n_discourse, n_labels]
    wo2: np.ndarray  # [n_labels, n_labels]
    wcd: np.ndarray  # [n_content, n_labels]
    stats_fingerprint: str = ""
    mode: str = "tas"  # "tas" (supervised labels) or "latent"

    @classmethod
    def zeros(cls, registry: FeatureRegistry, stats_fingerprint: str = "",
              mode: str = "tas") -> "Weights":
        c, d, L = registry.n_content, registry.n_discourse, registry.n_labels
        return cls(registry=registry,
                   wc=np.zeros(c), wd=np.zeros((d, L)),
                   wo2=np.zeros((L, L)), wcd=np.zeros((c, L)),
                   stats_fingerprint=stats_fingerprint, mode=mode)

    @classmethod
    def random(cls, registry: FeatureRegistry, rng: Pcg32,
               stats_fingerprint: str = "", mode: str = "tas") -> "Weights":
        """Uniform [-1, 1] init, drawn in canonical block order."""

        w = cls.zeros(registry, stats_fingerprint, mode)
        for block in (w.wc, w.wd, w.wo2, w.wcd):
            flat = block.reshape(-1)
            for i in range(flat.shape[0]):
                flat[i] = rng.uniform_symmetric()
        return w

    def copy(self) -> "Weights":
        return Weights(registry=self.registry, wc=self.wc.copy(),
                       wd=self.wd.copy(), wo2=self.wo2.copy(),
                       wcd=self.wcd.copy(),
                       stats_fingerprint=self.stats_fingerprint,
                       mode=self.mode)

    def flat(self) -> np.ndarray:
        return np.concatenate([self.wc.reshape(-1), self.wd.reshape(-1),
                               self.wo2.reshape(-1), self.wcd.reshape(-1)])

    def resolve(self, fid: str):
        """String feature id -> (block, row, label-column) or None."""

        reg = self.registry
        if fid.startswith("cd::"):
            base, sep, rel = fid.partition("::rel=")
            if not sep:
                raise ModelError(f"joint feature id without label: {fid!r}")
            i = reg.content_index("c::" + base[len("cd::"):])
            return None if i is None else ("cd", i, reg.label_index(rel))
        if fid.startswith("c::"):
            i = reg.content_index(fid)
            return None if i is None else ("c", i, -1)
        if fid.startswith("d::order2::"):
            rest = fid[len("d::order2::rel="):]
            rel, sep, prel = rest.partition("::prel=")
            if not sep:
                raise ModelError(f"bad order-2 feature id: {fid!r}")
            return ("o2", reg.label_index(rel), reg.label_index(prel))
        if fid.startswith("d::"):
            base, sep, rel = fid.partition("::rel=")
            if not sep:
                raise ModelError(f"discourse feature id without label: {fid!r}")
            i = reg.discourse_index(base)
            return None if i is None else ("d", i, reg.label_index(rel))
        raise ModelError(f"bad feature id {fid!r}")

    def dot(self, phi: Mapping[str, float]) -> float:
        """Dot product with a sparse string-keyed feature vector.

        Ids whose template is absent from the registry contribute zero
        (templates unseen in training carry no weight).
        """

        total = 0.0
        for fid, value in phi.items():
            where = self.resolve(fid)
            if where is None:
                continue
            block, i, l = where
            if block == "c":
                total += self.wc[i] * value
            elif block == "d":
                total += self.wd[i, l] * value
            elif block == "o2":
                total += self.wo2[i, l] * value
            else:
                total += self.wcd[i, l] * value
        return total


def score(prep: PreparedDiscussion, config: Configuration, weights: Weights,
          stats: CorpusStats) -> float:
    """Global model score of a configuration (string-id reference path)."""

    check_fingerprint(weights, stats)
    phi = global_features(prep, config.selected, config.relations, stats)
    return weights.dot(phi)


def check_fingerprint(weights: Weights, stats: CorpusStats) -> None:
    if weights.stats_fingerprint and \
            weights.stats_fingerprint != stats.fingerprint():
        raise ModelError(
            "weights were trained with different corpus statistics "
            f"(fingerprint {weights.stats_fingerprint} != "
            f"{stats.fingerprint()})")


# ---------------------------------------------------------------------------
# Compiled numeric view


def _csr(rows: Sequence[Sequence]) -> tuple[np.ndarray, np.ndarray]:
    ptr = np.zeros(len(rows) + 1, dtype=np.int64)
    flat: list = []
    for i, row in enumerate(rows):
        flat.extend(row)
        ptr[i + 1] = len(flat)
    return ptr, np.asarray(flat, dtype=np.int64) if flat else np.zeros(0, np.int64)


@dataclass
class CompiledDiscussion:
    """Dense, registry-indexed view of one prepared discussion.

    Unit index = unit id - 1; the root has index 0 and parent -1. Feature
    rows hold normalized values keyed by registry indices, in CSR layout.
    """

    prep: PreparedDiscussion
    n_units: int
    n_labels: int
    parent: np.ndarray          # int64[n_units], -1 at the root
    nonroot: np.ndarray         # int64[k] unit indices
    children_ptr: np.ndarray
    children: np.ndarray
    dptr: np.ndarray            # discourse rows per unit (root row empty)
    dids: np.ndarray
    dvals: np.ndarray
    n_cands: int
    cand_unit: np.ndarray       # int64[n_cands] unit index
    cand_cluster: np.ndarray    # int64[n_cands]
    cptr: np.ndarray            # content rows per candidate
    cids: np.ndarray
    cvals: np.ndarray
    n_clusters: int
    clus_ptr: np.ndarray        # members per cluster (candidate indices)
    clus_members: np.ndarray
    cluster_size: np.ndarray
    unit_cand_ptr: np.ndarray   # candidates per unit
    unit_cands: np.ndarray
    gold_cluster: np.ndarray    # int8[n_clusters], -1 when unknown
    gold_d: np.ndarray          # int64[n_units], -1 at root / unknown
    max_delta_entries: int = 0

    @property
    def has_gold_phrases(self) -> bool:
        return bool(self.n_clusters == 0 or (self.gold_cluster >= 0).all())

    @property
    def has_gold_relations(self) -> bool:
        return bool((self.gold_d[self.nonroot] >= 0).all()) \
            if len(self.nonroot) else True


def compile_discussion(prep: PreparedDiscussion, registry: FeatureRegistry,
                       stats: CorpusStats) -> CompiledDiscussion:
    """Featurize one discussion against a registry into dense arrays."""

    x = prep.discussion
    n = len(x.units)
    L = registry.n_labels

    parent = np.full(n, -1, dtype=np.int64)
    for child, par in prep.tree.attachments.items():
        parent[child - 1] = par - 1
    nonroot = np.flatnonzero(parent >= 0)

    child_rows: list[list[int]] = [[] for _ in range(n)]
    for child, par in sorted(prep.tree.attachments.items()):
        child_rows[par - 1].append(child - 1)
    children_ptr, children = _csr(child_rows)

    drow_ids: list[list[int]] = []
    drow_vals: list[list[float]] = []
    for u in x.units:
        if parent[u.id - 1] < 0:
            drow_ids.append([])
            drow_vals.append([])
            continue
        obs = normalize(discourse_observations(u.id, prep), stats)
        row = sorted(
            (registry.discourse_index(fid), v) for fid, v in obs.items()
            if registry.discourse_index(fid) is not None)
        drow_ids.append([i for i, _ in row])
        drow_vals.append([v for _, v in row])
    dptr, dids = _csr(drow_ids)
    dvals = np.asarray([v for row in drow_vals for v in row], dtype=np.float64)

    cand_unit = np.asarray([c.unit_id - 1 for c in prep.candidates],
                           dtype=np.int64)
    cand_cluster = np.asarray(
        [prep.cluster_index[c.cluster_key] for c in prep.candidates],
        dtype=np.int64)
    crow_ids: list[list[int]] = []
    crow_vals: list[list[float]] = []
    for cand in prep.candidates:
        feats = normalize(content_features(cand, prep, stats), stats)
        row = sorted(
            (registry.content_index(fid), v) for fid, v in feats.items()
            if registry.content_index(fid) is not None)
        crow_ids.append([i for i, _ in row])
        crow_vals.append([v for _, v in row])
    cptr, cids = _csr(crow_ids)
    cvals = np.asarray([v for row in crow_vals for v in row], dtype=np.float64)

    G = len(prep.clusters)
    member_rows = []
    key_to_idx = {c.key: j for j, c in enumerate(prep.candidates)}
    for cl in prep.clusters:
        member_rows.append(sorted(key_to_idx[m.key] for m in cl.members))
    clus_ptr, clus_members = _csr(member_rows)
    cluster_size = np.asarray([cl.size for cl in prep.clusters],
                              dtype=np.int64)

    unit_rows: list[list[int]] = [[] for _ in range(n)]
    for j, c in enumerate(prep.candidates):
        unit_rows[c.unit_id - 1].append(j)
    unit_cand_ptr, unit_cands = _csr(unit_rows)

    gold_cluster = np.full(G, -1, dtype=np.int8)
    for g, cl in enumerate(prep.clusters):
        labels = {m.label for m in cl.members}
        if None in labels:
            continue
        if len(labels) != 1:
            raise CorpusError(
                f"{x.id}: cluster {cl.key} has mixed gold phrase labels")
        gold_cluster[g] = labels.pop()

    # Gold labels outside the registry's space (latent registries, or test
    # labels unseen in training) compile to -1: present but unusable.
    gold_d = np.full(n, -1, dtype=np.int64)
    for unit_id, rel in prep.tree.relations.items():
        idx = registry.label_lookup(rel)
        gold_d[unit_id - 1] = -1 if idx is None else idx

    view = CompiledDiscussion(
        prep=prep, n_units=n, n_labels=L, parent=parent, nonroot=nonroot,
        children_ptr=children_ptr, children=children,
        dptr=dptr, dids=dids, dvals=dvals,
        n_cands=len(prep.candidates), cand_unit=cand_unit,
        cand_cluster=cand_cluster, cptr=cptr, cids=cids, cvals=cvals,
        n_clusters=G, clus_ptr=clus_ptr, clus_members=clus_members,
        cluster_size=cluster_size, unit_cand_ptr=unit_cand_ptr,
        unit_cands=unit_cands, gold_cluster=gold_cluster, gold_d=gold_d,
    )

    max_drow = int(np.diff(dptr).max()) if n else 0
    max_child = int(np.diff(children_ptr).max()) if n else 0
    crow_len = np.diff(cptr)
    max_unit_feats = 0
    for i in range(n):
        lo, hi = unit_cand_ptr[i], unit_cand_ptr[i + 1]
        max_unit_feats = max(
            max_unit_feats, int(crow_len[unit_cands[lo:hi]].sum()))
    max_clus_feats = 0
    for g in range(G):
        lo, hi = clus_ptr[g], clus_ptr[g + 1]
        max_clus_feats = max(
            max_clus_feats, int(crow_len[clus_members[lo:hi]].sum()))
    view.max_delta_entries = (2 * max_drow + 2 + 2 * max_child
                              + 2 * max_unit_feats + 2 * max_clus_feats + 8)
    return view


# ---------------------------------------------------------------------------
# Array-level scoring


def score_view(view: CompiledDiscussion, cluster_sel: np.ndarray,
               d: np.ndarray, weights: Weights) -> float:
    """Score a configuration given per-cluster selection bits and per-unit
    label indices (root entry of ``d`` is ignored)."""

    total = 0.0
    sel = cluster_sel[view.cand_cluster].astype(bool) \
        if view.n_cands else np.zeros(0, bool)
    rows = np.diff(view.cptr)
    if view.n_cands:
        rep = np.repeat(sel, rows)
        total += float(np.dot(view.cvals[rep], weights.wc[view.cids[rep]]))
        joint = sel & (view.parent[view.cand_unit] >= 0)
        jrep = np.repeat(joint, rows)
        lab = np.repeat(d[view.cand_unit], rows)[jrep]
        total += float(np.dot(view.cvals[jrep],
                              weights.wcd[view.cids[jrep], lab]))
    if view.n_units > 1:
        dlab = np.repeat(d, np.diff(view.dptr))
        total += float(np.dot(view.dvals, weights.wd[view.dids, dlab]))
        deep = view.nonroot[view.parent[view.nonroot] > 0]
        if len(deep):
            total += float(weights.wo2[d[deep], d[view.parent[deep]]].sum())
    return total


def selected_from_clusters(view: CompiledDiscussion,
                           cluster_sel: np.ndarray) -> tuple[int, ...]:
    if not view.n_cands:
        return ()
    return tuple(int(v) for v in cluster_sel[view.cand_cluster])


def config_from_arrays(view: CompiledDiscussion, cluster_sel: np.ndarray,
                       d: np.ndarray, registry: FeatureRegistry,
                       score_value: Optional[float] = None) -> Configuration:
    return Configuration(
        selected=selected_from_clusters(view, cluster_sel),
        relations=relation_strings(view, d, registry), score=score_value)


def arrays_from_config(view: CompiledDiscussion, config: Configuration,
                       registry: FeatureRegistry
                       ) -> tuple[np.ndarray, np.ndarray]:
    """Configuration -> (cluster bits, label-index array).

    Raises if the phrase selection is not cluster-consistent; array-level
    paths enforce the hard constraint.
    """

    cluster_sel = np.zeros(view.n_clusters, dtype=np.int8)
    seen = np.full(view.n_clusters, -1, dtype=np.int64)
    if len(config.selected) != view.n_cands:
        raise CorpusError("phrase assignment length mismatch")
    for j, sel in enumerate(config.selected):
        g = view.cand_cluster[j]
        if seen[g] >= 0 and seen[g] != sel:
            raise CorpusError(
                "phrase selection splits a cluster; array paths require "
                "cluster-consistent configurations")
        seen[g] = sel
        cluster_sel[g] = sel
    d = np.zeros(view.n_units, dtype=np.int64)
    for unit_id, rel in config.relations.items():
        d[unit_id - 1] = registry.label_index(rel)
    return cluster_sel, d


def relation_strings(view: CompiledDiscussion, d: np.ndarray,
                     registry: FeatureRegistry) -> dict[int, str]:
    return {int(i) + 1: registry.labels[int(d[i])] for i in view.nonroot}


def delta_score(view: CompiledDiscussion, cluster_sel: np.ndarray,
                d: np.ndarray, move: tuple, weights: Weights) -> float:
    """Score change of a single move without rescoring the discussion.

    ``move`` is ``("phrase", cluster_index)`` (flip that cluster) or
    ``("relation", unit_index, new_label_index)``.
    """

    kind = move[0]
    if kind == "phrase":
        g = move[1]
        sign = -1.0 if cluster_sel[g] else 1.0
        lo, hi = view.clus_ptr[g], view.clus_ptr[g + 1]
        diff = 0.0
        for j in view.clus_members[lo:hi]:
            a, b = view.cptr[j], view.cptr[j + 1]
            ids = view.cids[a:b]
            vals = view.cvals[a:b]
            diff += float(np.dot(vals, weights.wc[ids]))
            u = view.cand_unit[j]
            if view.parent[u] >= 0:
                diff += float(np.dot(vals, weights.wcd[ids, d[u]]))
        return sign * diff
    if kind == "relation":
        i, new = move[1], move[2]
        if view.parent[i] < 0:
            raise ValueError("cannot relabel the root unit")
        old = int(d[i])
        if new == old:
            return 0.0
        a, b = view.dptr[i], view.dptr[i + 1]
        ids = view.dids[a:b]
        vals = view.dvals[a:b]
        diff = float(np.dot(vals, weights.wd[ids, new] - weights.wd[ids, old]))
        p = view.parent[i]
        if p > 0:
            diff += float(weights.wo2[new, d[p]] - weights.wo2[old, d[p]])
        for ch in view.children[view.children_ptr[i]:view.children_ptr[i + 1]]:
            diff += float(weights.wo2[d[ch], new] - weights.wo2[d[ch], old])
        lo, hi = view.unit_cand_ptr[i], view.unit_cand_ptr[i + 1]
        for j in view.unit_cands[lo:hi]:
            if cluster_sel[view.cand_cluster[j]]:
                a, b = view.cptr[j], view.cptr[j + 1]
                ids = view.cids[a:b]
                vals = view.cvals[a:b]
                diff += float(np.dot(
                    vals, weights.wcd[ids, new] - weights.wcd[ids, old]))
        return diff
    raise ValueError(f"unknown move kind {kind!r}")


# ---------------------------------------------------------------------------
# Model file


def save_model(weights: Weights, stats: CorpusStats, path) -> None:
    """Write a versioned model JSON: label space, feature id map, the three
    weight blocks, and the corpus statistics (plus their fingerprint)."""

    payload = {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "mode": weights.mode,
        "labels": list(weights.registry.labels),
        "registry": weights.registry.to_dict(),
        "weights": {
            "content": [float(v) for v in weights.wc],
            "discourse": [[float(v) for v in row] for row in weights.wd],
            "order2": [[float(v) for v in row] for row in weights.wo2],
            "joint": [[float(v) for v in row] for row in weights.wcd],
        },
        "stats_fingerprint": weights.stats_fingerprint,
        "stats": stats.to_dict(),
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_model(path) -> tuple[Weights, CorpusStats]:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            payload = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ModelError(f"{path}: not valid JSON ({exc})") from None
    if not isinstance(payload, dict) \
            or payload.get("format") != MODEL_FORMAT:
        raise ModelError(f"{path}: not a model file")
    if payload.get("version") != MODEL_VERSION:
        raise ModelError(
            f"{path}: unsupported model version {payload.get('version')!r}")
    try:
        registry = FeatureRegistry.from_dict(payload["registry"])
        blocks = payload["weights"]
        weights = Weights(
            registry=registry,
            wc=np.asarray(blocks["content"], dtype=np.float64),
            wd=np.asarray(blocks["discourse"],
                          dtype=np.float64).reshape(registry.n_discourse,
                                                    registry.n_labels),
            wo2=np.asarray(blocks["order2"],
                           dtype=np.float64).reshape(registry.n_labels,
                                                     registry.n_labels),
            wcd=np.asarray(blocks["joint"],
                           dtype=np.float64).reshape(registry.n_content,
                                                     registry.n_labels),
            stats_fingerprint=str(payload.get("stats_fingerprint", "")),
            mode=str(payload.get("mode", "tas")),
        )
        stats = CorpusStats.from_dict(payload["stats"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelError(f"{path}: malformed model file ({exc})") from None
    if weights.wc.shape != (registry.n_content,):
        raise ModelError(f"{path}: content block shape mismatch")
    if list(payload["labels"]) != list(registry.labels):
        raise ModelError(f"{path}: label list disagrees with registry")
    if weights.mode not in ("tas", "latent"):
        raise ModelError(f"{path}: unknown mode {weights.mode!r}")
    if weights.stats_fingerprint \
            and weights.stats_fingerprint != stats.fingerprint():
        raise ModelError(f"{path}: stats fingerprint mismatch")
    return weights, stats
