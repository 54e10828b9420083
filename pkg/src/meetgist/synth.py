"""Synthetic discussion corpora with planted model weights.

Generation runs in two passes. A structural pass samples speakers, tokens,
constituent spans, dependency links, dialogue acts, timing, and adjacency
pairs, with head-word pools kept disjoint per phrase type so cluster heads
never collide across types. A planting pass draws a weight vector over the
corpus's own feature registry, calibrates a uniform score shift until the
positively labeled candidate share lands in a target band, labels every
discussion with the exact (or alternating) MAP configuration under those
weights, and writes summaries containing exactly the selected cluster heads
so label induction recovers the planted selection verbatim.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Optional, Sequence

import numpy as np

from .corpus import (
    CorpusError,
    Discussion,
    PHRASE_TYPES,
    TAS_RELATIONS,
    discussion_from_dict,
    prepare,
)
from .features import CorpusStats, FeatureRegistry, build_registry, fit_stats
from .inference import brute_force_infer, joint_infer_arrays
from .model import (
    CompiledDiscussion,
    Weights,
    arrays_from_config,
    compile_discussion,
    relation_strings,
    selected_from_clusters,
)
from .rng import Pcg32

__all__ = ["CorpusSpec", "generate", "generate_cou"]

_SYNTH_STREAM = 11
_ORACLE_LIMIT = 200_000
_PLANT_ATTEMPTS = 40
_BISECT_STEPS = 26

_SPEAKERS = ("s1", "s2", "s3")
_DA_TAGS = ("assess", "elicit", "inform", "suggest")
_PAIR_TYPES = ("agreement", "question-answer")

# Head pools are disjoint per phrase type (including the merged pool) so a
# summary listing selected heads never labels another type's cluster.
_HEADS = {
    "NP": tuple(f"topic{i}" for i in range(8)),
    "VP": tuple(f"action{i}" for i in range(8)),
    "PP": tuple(f"place{i}" for i in range(8)),
    "ADJP": tuple(f"trait{i}" for i in range(8)),
    "merged": tuple(f"item{i}" for i in range(8)),
}
_MERGE_VERBS = tuple(f"check{i}" for i in range(6))
_CONTENT_FILL = tuple(f"note{i}" for i in range(6))
_ADJ_FILL = tuple(f"extra{i}" for i in range(4))
_STOP_FILL = (("the", "DT"), ("and", "CC"), ("of", "IN"), ("to", "TO"),
              ("we", "PRP"), ("it", "PRP"), ("a", "DT"), ("that", "IN"))


@dataclass(frozen=True)
class CorpusSpec:
    """Sizes, label space, and seed for one synthetic corpus."""

    count: int
    max_units: int = 6
    min_units: int = 2
    max_candidates: int = 2
    labels: tuple = ("elaboration", "negative", "positive")
    seed: int = 0
    # With exact_labels, a discussion too large to enumerate is an error
    # instead of falling back to alternating inference.
    exact_labels: bool = False
    positive_band: tuple = (0.18, 0.42)
    kind: str = "plain"

    def __post_init__(self) -> None:
        if self.count < 1:
            raise ValueError("count must be positive")
        if not 1 <= self.min_units <= self.max_units:
            raise ValueError("need 1 <= min_units <= max_units")
        if self.max_candidates < 0:
            raise ValueError("max_candidates must be >= 0")
        labels = tuple(self.labels)
        if not labels or len(set(labels)) != len(labels):
            raise ValueError("labels must be non-empty and duplicate-free")
        unknown = set(labels) - set(TAS_RELATIONS)
        if unknown:
            raise ValueError(f"labels outside the relation schema: "
                             f"{sorted(unknown)}")
        lo, hi = self.positive_band
        if not 0.0 <= lo < hi <= 1.0:
            raise ValueError("positive_band must satisfy 0 <= lo < hi <= 1")
        if self.kind not in ("plain", "cou"):
            raise ValueError(f"unknown corpus kind {self.kind!r}")

    def to_dict(self) -> dict:
        return {
            "count": self.count, "max_units": self.max_units,
            "min_units": self.min_units,
            "max_candidates": self.max_candidates,
            "labels": list(self.labels), "seed": self.seed,
            "exact_labels": self.exact_labels,
            "positive_band": list(self.positive_band), "kind": self.kind,
        }

    @classmethod
    def from_dict(cls, obj: Mapping) -> "CorpusSpec":
        known = {"count", "max_units", "min_units", "max_candidates",
                 "labels", "seed", "exact_labels", "positive_band", "kind"}
        extra = set(obj) - known
        if extra:
            raise ValueError(f"unknown corpus spec fields: {sorted(extra)}")
        kwargs = dict(obj)
        if "labels" in kwargs:
            kwargs["labels"] = tuple(kwargs["labels"])
        if "positive_band" in kwargs:
            kwargs["positive_band"] = tuple(kwargs["positive_band"])
        return cls(**kwargs)


# ---------------------------------------------------------------------------
# Structural pass


def _pick(rng: Pcg32, seq: Sequence):
    return seq[rng.below(len(seq))]


def _maybe(rng: Pcg32, num: int, den: int) -> bool:
    return rng.below(den) < num


def _subpool(rng: Pcg32, pool: Sequence[str], k: int = 2) -> tuple[str, ...]:
    first = rng.below(len(pool))
    if k == 1 or len(pool) < 2:
        return (pool[first],)
    second = rng.below(len(pool) - 1)
    if second >= first:
        second += 1
    return (pool[first], pool[second])


def _draw_unit(spec: CorpusSpec, rng: Pcg32,
               pools: Mapping[str, tuple[str, ...]]
               ) -> tuple[list, list, list]:
    tokens: list[tuple[str, str, bool]] = []
    spans: list[dict] = []
    deps: list[dict] = []

    def fill() -> None:
        if _maybe(rng, 1, 2):
            w, pos = _pick(rng, _STOP_FILL)
            tokens.append((w, pos, True))
        if _maybe(rng, 1, 3):
            tokens.append((_pick(rng, _CONTENT_FILL), "NN", False))

    fill()
    n_cand = rng.below(spec.max_candidates + 1)
    for _ in range(n_cand):
        kind = rng.below(20)
        base = len(tokens)
        if kind < 6:
            head = _pick(rng, pools["NP"])
            if _maybe(rng, 1, 3):
                tokens += [("the", "DT", True),
                           (_pick(rng, _ADJ_FILL), "JJ", False),
                           (head, "NN", False)]
                spans.append({"start": base, "end": base + 3, "label": "NP",
                              "head": base + 2, "parent": None})
            else:
                tokens += [("the", "DT", True), (head, "NN", False)]
                spans.append({"start": base, "end": base + 2, "label": "NP",
                              "head": base + 1, "parent": None})
        elif kind < 10:
            head = _pick(rng, pools["VP"])
            tokens += [(head, "VB", False), ("it", "PRP", True)]
            spans.append({"start": base, "end": base + 2, "label": "VP",
                          "head": base, "parent": None})
        elif kind < 13:
            head = _pick(rng, pools["PP"])
            tokens += [("of", "IN", True), ("the", "DT", True),
                       (head, "NN", False)]
            spans.append({"start": base, "end": base + 3, "label": "PP",
                          "head": base + 2, "parent": None})
        elif kind < 16:
            head = _pick(rng, pools["ADJP"])
            tokens += [(head, "JJ", False)]
            spans.append({"start": base, "end": base + 1, "label": "ADJP",
                          "head": base, "parent": None})
        else:
            head = _pick(rng, pools["merged"])
            verb = _pick(rng, _MERGE_VERBS)
            tokens += [(verb, "VB", False), ("the", "DT", True),
                       (head, "NN", False)]
            spans.append({"start": base + 1, "end": base + 3, "label": "NP",
                          "head": base + 2, "parent": None})
            deps.append({"head": base, "dep": base + 2, "rel": "dobj"})
        fill()

    # Distractor spans the extractor must reject: a stopword head and an
    # over-length constituent.
    if _maybe(rng, 1, 6):
        base = len(tokens)
        tokens.append(("it", "PRP", True))
        spans.append({"start": base, "end": base + 1, "label": "NP",
                      "head": base, "parent": None})
    if _maybe(rng, 1, 6):
        base = len(tokens)
        tokens.append(("the", "DT", True))
        for _ in range(5):
            tokens.append((_pick(rng, _CONTENT_FILL), "NN", False))
        spans.append({"start": base, "end": base + 6, "label": "NP",
                      "head": base + 5, "parent": None})
    if not tokens:
        tokens.append(("we", "PRP", True))
    return tokens, spans, deps


def _draw_discussion(spec: CorpusSpec, rng: Pcg32, did: str,
                     chain_only: bool = False) -> dict:
    span_units = spec.max_units - spec.min_units
    n = spec.min_units + (rng.below(span_units + 1) if span_units else 0)
    speakers = _SPEAKERS[:2 + rng.below(2)]
    spk = [_pick(rng, speakers) for _ in range(n)]
    if n >= 2 and len(set(spk)) == 1:
        spk[1] = speakers[1] if spk[0] == speakers[0] else speakers[0]
    pools = {t: _subpool(rng, _HEADS[t]) for t in PHRASE_TYPES}

    units = []
    clock = 0.0
    for i in range(n):
        tokens, spans, deps = _draw_unit(spec, rng, pools)
        dur = 1.0 + rng.below(4)
        units.append({"id": i + 1, "speaker": spk[i], "tokens": tokens,
                      "spans": spans, "da": _pick(rng, _DA_TAGS),
                      "t_start": clock, "t_end": clock + dur, "deps": deps})
        clock += dur + rng.below(3)

    # Echo a later unit's candidate head into the previous unit so the
    # head-in-previous-turn template fires with nonzero frequency.
    for i in range(1, n):
        if not _maybe(rng, 1, 4):
            continue
        unit = units[i]
        heads = [s["head"] for s in unit["spans"]
                 if s["end"] - s["start"] <= 5
                 and not unit["tokens"][s["head"]][2]]
        if heads:
            w = unit["tokens"][_pick(rng, heads)][0]
            units[i - 1]["tokens"].append((w, "NN", False))

    pairs = []
    if not chain_only:
        for i in range(3, n + 1):
            if _maybe(rng, 1, 3):
                src = 1 + rng.below(i - 1)
                pairs.append({"src": src, "tgt": i,
                              "type": _pick(rng, _PAIR_TYPES)})

    for u in units:
        u["tokens"] = [{"surface": w, "lemma": w, "pos": pos, "stop": stop}
                       for w, pos, stop in u["tokens"]]
    return {
        "id": did,
        "units": units,
        "adjacency_pairs": pairs,
        "gold_tree": None,
        "summaries": {"abstractive": [], "participant": [],
                      "extractive_ids": []},
    }


# ---------------------------------------------------------------------------
# Planting pass


def _oracle(view: CompiledDiscussion, weights: Weights,
            exact: bool) -> tuple[np.ndarray, np.ndarray]:
    combos = (view.n_labels ** len(view.nonroot)) * (2 ** view.n_clusters)
    if combos <= _ORACLE_LIMIT:
        config = brute_force_infer(view, weights)
        return arrays_from_config(view, config, weights.registry)
    if exact:
        raise CorpusError(
            f"{view.prep.discussion.id}: {combos} configurations exceed the "
            "exact labeling limit; shrink the spec or drop exact_labels")
    csel, d, _, _ = joint_infer_arrays(view, weights)
    return csel, d


def _shifted(weights: Weights, shift: float,
             type_idx: np.ndarray) -> Weights:
    out = weights.copy()
    out.wc[type_idx] -= shift
    return out


def _positive_share(views: Sequence[CompiledDiscussion],
                    assigns: Sequence[tuple[np.ndarray, np.ndarray]]
                    ) -> Optional[float]:
    pos = total = 0
    for view, (csel, _) in zip(views, assigns):
        total += view.n_cands
        if view.n_cands:
            pos += int(csel[view.cand_cluster].sum())
    return pos / total if total else None


def _label_shares(views: Sequence[CompiledDiscussion],
                  assigns: Sequence[tuple[np.ndarray, np.ndarray]],
                  n_labels: int) -> Optional[np.ndarray]:
    counts = np.zeros(n_labels)
    for view, (_, d) in zip(views, assigns):
        for i in view.nonroot:
            counts[d[i]] += 1
    total = counts.sum()
    return counts / total if total else None


def _plant(spec: CorpusSpec, preps: Sequence, rng: Pcg32):
    stats = fit_stats(preps)
    labels = tuple(sorted(spec.labels))
    registry = build_registry(preps, labels, stats)
    views = [compile_discussion(p, registry, stats) for p in preps]
    type_idx = np.asarray(
        [registry.content_index(f"c::phrase_type={t}") for t in PHRASE_TYPES],
        dtype=np.int64)
    lo, hi = spec.positive_band

    def fast_share(w: Weights) -> Optional[float]:
        fast = [joint_infer_arrays(v, w)[:2] for v in views]
        return _positive_share(views, fast)

    for _ in range(_PLANT_ATTEMPTS):
        base = Weights.random(registry, rng, stats.fingerprint())
        # Damp the coupling blocks so phrase salience stays content-driven
        # and relations stay locally identifiable.
        base.wo2 *= 0.5
        base.wcd *= 0.25

        shift = 0.0
        if fast_share(base) is not None:
            s_lo, s_hi = -4.0, 4.0
            if not (fast_share(_shifted(base, s_lo, type_idx)) >= lo
                    >= fast_share(_shifted(base, s_hi, type_idx))):
                continue
            for _ in range(_BISECT_STEPS):
                mid = (s_lo + s_hi) / 2.0
                share = fast_share(_shifted(base, mid, type_idx))
                if lo <= share <= hi:
                    s_lo = s_hi = mid
                    break
                if share > hi:
                    s_lo = mid
                else:
                    s_hi = mid
            shift = (s_lo + s_hi) / 2.0

        weights = _shifted(base, shift, type_idx)
        assigns = [_oracle(v, weights, spec.exact_labels) for v in views]
        share = _positive_share(views, assigns)
        if share is not None and not lo <= share <= hi:
            continue
        shares = _label_shares(views, assigns, registry.n_labels)
        if shares is not None and registry.n_labels > 1:
            if shares.min() < 0.05 or shares.max() > 0.6:
                continue
        return weights, registry, stats, views, assigns
    raise CorpusError("could not plant a balanced model for this spec; "
                      "change the seed or relax the sizes")


def _summary_text(heads: Sequence[str]) -> str:
    if not heads:
        return "the group reached no decision"
    return "the group decided " + " and ".join(heads)


def _finalize(dicts: Sequence[dict], preps: Sequence,
              views: Sequence[CompiledDiscussion],
              assigns: Sequence[tuple[np.ndarray, np.ndarray]],
              registry: FeatureRegistry) -> list[Discussion]:
    out = []
    for obj, prep, view, (csel, d) in zip(dicts, preps, views, assigns):
        relations = relation_strings(view, d, registry)
        selected = selected_from_clusters(view, csel)
        heads = sorted({cl.head_lemma
                        for g, cl in enumerate(prep.clusters) if csel[g]})
        unit_ids = sorted({c.unit_id for c, bit
                           in zip(prep.candidates, selected) if bit})
        final = dict(obj)
        final["gold_tree"] = {
            "attach": {str(c): p for c, p
                       in sorted(prep.tree.attachments.items())},
            "rel": {str(c): r for c, r in sorted(relations.items())},
        }
        final["summaries"] = {"abstractive": [_summary_text(heads)],
                              "participant": [],
                              "extractive_ids": unit_ids}
        out.append(discussion_from_dict(final))
    return out


def generate(spec: CorpusSpec) -> list[Discussion]:
    """Generate a labeled synthetic corpus for the spec (seeded)."""

    if spec.kind == "cou":
        return generate_cou(spec)
    rng = Pcg32(spec.seed, stream=_SYNTH_STREAM)
    dicts = [_draw_discussion(spec, rng, f"synth-{k:03d}")
             for k in range(spec.count)]
    discussions = [discussion_from_dict(obj) for obj in dicts]
    preps = [prepare(d, with_gold=False) for d in discussions]
    _, registry, _, views, assigns = _plant(spec, preps, rng)
    return _finalize(dicts, preps, views, assigns, registry)


def generate_cou(spec: CorpusSpec) -> list[Discussion]:
    """Chain-tree corpus whose consistency labels follow relation bigrams.

    Relations are a fixed function of each unit's dialogue act, so they are
    learnable from observations; consistent discussions use one act (hence
    one repeated relation bigram) while inconsistent ones alternate. Class
    sizes split 2:1.
    """

    if len(spec.labels) < 2:
        raise CorpusError("consistency corpora need at least two relation "
                          "labels")
    if spec.min_units < 4:
        raise CorpusError("consistency corpora need min_units >= 4 so "
                          "bigram features exist")
    if spec.count < 3:
        raise CorpusError("consistency corpora need at least three "
                          "discussions")
    rng = Pcg32(spec.seed, stream=_SYNTH_STREAM + 1)
    labels = tuple(sorted(spec.labels))
    n_incon = spec.count // 3
    out = []
    for k in range(spec.count):
        consistent = k >= n_incon
        obj = _draw_discussion(spec, rng, f"cou-{k:03d}", chain_only=True)
        n = len(obj["units"])
        for i, u in enumerate(obj["units"]):
            if consistent:
                u["da"] = "inform"
            else:
                u["da"] = "inform" if i % 2 == 0 else "elicit"

        disc = discussion_from_dict(obj)
        prep = prepare(disc, with_gold=False)
        salient = ("NP", "merged")
        heads = sorted({cl.head_lemma for cl in prep.clusters
                        if cl.phrase_type in salient})
        unit_ids = sorted({c.unit_id for c in prep.candidates
                           if c.phrase_type in salient})
        rel = {}
        for i in range(2, n + 1):
            da = obj["units"][i - 1]["da"]
            rel[i] = labels[0] if da == "inform" else labels[1]

        obj["gold_tree"] = {
            "attach": {str(i): i - 1 for i in range(2, n + 1)},
            "rel": {str(i): r for i, r in sorted(rel.items())},
        }
        obj["summaries"] = {"abstractive": [_summary_text(heads)],
                            "participant": [],
                            "extractive_ids": unit_ids}
        obj["cou"] = "consistent" if consistent else "inconsistent"
        out.append(discussion_from_dict(obj))
    return out
