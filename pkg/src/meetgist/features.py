"""Feature templates, corpus statistics, and the global feature map.

Feature ids are strings with a block prefix:

* ``c::<template>`` content features of one candidate phrase,
* ``d::<template>::rel=<label>`` discourse observations of one unit,
  conjoined with the unit's relation label,
* ``d::order2::rel=<label>::prel=<label>`` the relation-pair indicator
  between a unit and its (non-root) parent,
* ``cd::<template>::rel=<label>`` content templates of a selected candidate,
  conjoined with its unit's relation label.

Vectors are sparse maps without explicit zero entries. Real-valued templates
are min-max normalized to [0, 1] with ranges fitted on training data; values
outside the fitted range clamp.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

from .corpus import (
    CandidatePhrase,
    CorpusError,
    PreparedDiscussion,
    PHRASE_TYPES,
    is_content_pos,
    jaccard,
)

# Real-valued template names (everything else is a 0/1 indicator).
REAL_CONTENT_TEMPLATES = frozenset({
    "tfidf_min", "tfidf_max", "tfidf_avg", "num_content_words",
    "cluster_size", "abs_position", "rel_position",
})
REAL_DISCOURSE_TEMPLATES = frozenset({
    "jaccard", "num_candidates", "time_span", "num_words", "depth",
    "num_siblings",
})


def is_real_template(base_id: str) -> bool:
    """Whether a block-prefixed base id (no ``rel=`` tag) is real-valued."""

    block, _, name = base_id.partition("::")
    if block == "c" or block == "cd":
        return name in REAL_CONTENT_TEMPLATES or name.startswith("pos_count=")
    if block == "d":
        return name in REAL_DISCOURSE_TEMPLATES
    raise ValueError(f"bad feature id {base_id!r}")


def range_key(feature_id: str) -> str:
    """Base id used to look up normalization ranges.

    Relation tags are stripped and the joint block shares the content
    block's ranges (joint values are content values by construction).
    """

    base = feature_id.split("::rel=", 1)[0]
    if base.startswith("cd::"):
        base = "c::" + base[len("cd::"):]
    return base


@dataclass
class CorpusStats:
    """Training-corpus statistics needed to featurize any discussion."""

    idf: dict[str, float]
    feature_ranges: dict[str, tuple[float, float]]
    document_count: int

    def idf_of(self, lemma: str) -> float:
        try:
            return self.idf[lemma]
        except KeyError:
            return math.log(self.document_count) + 1.0

    def fingerprint(self) -> str:
        payload = json.dumps(
            {
                "idf": {k: repr(v) for k, v in sorted(self.idf.items())},
                "ranges": {k: (repr(lo), repr(hi)) for k, (lo, hi)
                           in sorted(self.feature_ranges.items())},
                "documents": self.document_count,
            },
            sort_keys=True,
        )
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:16]

    def to_dict(self) -> dict:
        return {
            "idf": dict(sorted(self.idf.items())),
            "feature_ranges": {k: list(v) for k, v
                               in sorted(self.feature_ranges.items())},
            "document_count": self.document_count,
        }

    @classmethod
    def from_dict(cls, obj: Mapping) -> "CorpusStats":
        return cls(
            idf={str(k): float(v) for k, v in obj["idf"].items()},
            feature_ranges={str(k): (float(v[0]), float(v[1]))
                            for k, v in obj["feature_ranges"].items()},
            document_count=int(obj["document_count"]),
        )


# ---------------------------------------------------------------------------
# Raw template extractors


def content_features(cand: CandidatePhrase, prep: PreparedDiscussion,
                     stats: CorpusStats) -> dict[str, float]:
    """Raw (unnormalized) content features of one candidate phrase."""

    x = prep.discussion
    unit = x.unit_by_id(cand.unit_id)
    tokens = [unit.tokens[k] for s, e in cand.ranges for k in range(s, e)]
    tfidf = [prep.tf[t.lemma.lower()] * stats.idf_of(t.lemma.lower())
             for t in tokens]

    f: dict[str, float] = {}
    f["c::tfidf_min"] = min(tfidf)
    f["c::tfidf_max"] = max(tfidf)
    f["c::tfidf_avg"] = sum(tfidf) / len(tfidf)
    n_content = sum(1 for t in tokens
                    if is_content_pos(t.pos) and not t.is_stopword)
    if n_content:
        f["c::num_content_words"] = float(n_content)
    if cand.unit_id > x.units[0].id:
        prev = prep.unit_lemmas[cand.unit_id - 1]
        if cand.head_lemma.lower() in prev:
            f["c::head_in_prev_turn"] = 1.0
    f["c::cluster_size"] = float(prep.cluster_size(cand.cluster_key))
    for t in tokens:
        key = f"c::pos_count={t.pos}"
        f[key] = f.get(key, 0.0) + 1.0
    f[f"c::phrase_type={cand.phrase_type}"] = 1.0
    f["c::abs_position"] = float(cand.unit_id)
    f["c::rel_position"] = cand.unit_id / len(x.units)
    if unit.speaker == prep.main_speaker:
        f["c::main_speaker"] = 1.0
    return f


def discourse_observations(unit_id: int,
                           prep: PreparedDiscussion) -> dict[str, float]:
    """Raw discourse observations of one non-root unit (untagged)."""

    tree = prep.tree
    parent_id = tree.parent_of(unit_id)
    if parent_id is None:
        raise ValueError(f"unit {unit_id} is the root; no discourse features")
    x = prep.discussion
    unit = x.unit_by_id(unit_id)
    parent = x.unit_by_id(parent_id)

    f: dict[str, float] = {}
    f[f"d::da_self={unit.dialogue_act}"] = 1.0
    f[f"d::da_parent={parent.dialogue_act}"] = 1.0
    if any({p.source_unit, p.target_unit} == {unit_id, parent_id}
           for p in x.adjacency_pairs):
        f["d::adj_pair"] = 1.0
    j = jaccard(prep.unit_content_lemmas[unit_id],
                prep.unit_content_lemmas[parent_id])
    if j:
        f["d::jaccard"] = j
    if unit.speaker == parent.speaker:
        f["d::same_speaker"] = 1.0
    n_cands = len(prep.candidates_by_unit.get(unit_id, ()))
    if n_cands:
        f["d::num_candidates"] = float(n_cands)
    span = unit.end_time - unit.start_time
    if span:
        f["d::time_span"] = span
    f["d::num_words"] = float(len(unit.tokens))
    f["d::depth"] = float(tree.depth_of(unit_id))
    siblings = len(tree.children_of(parent_id)) - 1
    if siblings:
        f["d::num_siblings"] = float(siblings)
    return f


def discourse_features(unit_id: int, prep: PreparedDiscussion,
                       relations: Mapping[int, str]) -> dict[str, float]:
    """Relation-conjoined discourse features of one non-root unit.

    ``relations`` maps non-root unit ids to their labels under the current
    assignment; the order-2 indicator appears only when the parent is itself
    non-root.
    """

    rel = relations[unit_id]
    obs = discourse_observations(unit_id, prep)
    f = {f"{k}::rel={rel}": v for k, v in obs.items()}
    parent_id = prep.tree.parent_of(unit_id)
    parent_rel = relations.get(parent_id)
    if parent_rel is not None:
        f[f"d::order2::rel={rel}::prel={parent_rel}"] = 1.0
    return f


def joint_features(cand: CandidatePhrase, relation: str,
                   prep: PreparedDiscussion,
                   stats: CorpusStats) -> dict[str, float]:
    """Content templates of a candidate retagged with its unit's relation.

    Values are identical to :func:`content_features` entry for entry; only
    the ids change (``c::`` becomes ``cd::`` plus the relation tag).
    """

    return {
        f"cd::{k[len('c::'):]}::rel={relation}": v
        for k, v in content_features(cand, prep, stats).items()
    }


def normalize(vec: Mapping[str, float],
              stats: CorpusStats) -> dict[str, float]:
    """Min-max normalize real-valued entries; drop entries that become 0.

    Values below/above the fitted range clamp to 0/1; a degenerate fitted
    range (min == max) maps to 0. Indicator templates pass through.
    """

    out: dict[str, float] = {}
    for fid, value in vec.items():
        base = range_key(fid)
        rng = stats.feature_ranges.get(base)
        if rng is not None:
            lo, hi = rng
            if hi <= lo:
                value = 0.0
            else:
                value = (value - lo) / (hi - lo)
                value = min(1.0, max(0.0, value))
        if value != 0.0:
            out[fid] = value
    return out


def fit_stats(preps: Sequence[PreparedDiscussion]) -> CorpusStats:
    """Fit idf and per-template value ranges on a training corpus."""

    if not preps:
        raise CorpusError("cannot fit statistics on an empty corpus")
    doc_freq: dict[str, int] = {}
    for p in preps:
        lemmas = set()
        for u in p.discussion.units:
            lemmas.update(t.lemma.lower() for t in u.tokens)
        for lem in lemmas:
            doc_freq[lem] = doc_freq.get(lem, 0) + 1
    n_docs = len(preps)
    idf = {lem: math.log(n_docs / (1 + df)) + 1.0
           for lem, df in doc_freq.items()}

    ranges: dict[str, tuple[float, float]] = {}
    stats = CorpusStats(idf=idf, feature_ranges={}, document_count=n_docs)

    def observe(vec: Mapping[str, float]) -> None:
        for fid, value in vec.items():
            base = range_key(fid)
            if not is_real_template(base):
                continue
            lo, hi = ranges.get(base, (value, value))
            ranges[base] = (min(lo, value), max(hi, value))

    for p in preps:
        for cand in p.candidates:
            observe(content_features(cand, p, stats))
        for u in p.discussion.units:
            if p.tree.parent_of(u.id) is not None:
                observe(discourse_observations(u.id, p))
    stats.feature_ranges = dict(sorted(ranges.items()))
    return stats


# ---------------------------------------------------------------------------
# Feature registry


@dataclass
class FeatureRegistry:
    """Stable index spaces for the three weight blocks.

    Content templates, discourse base templates, and relation labels each get
    a dense index; the weight blocks are laid out as

    * content:   ``[n_content]``
    * discourse: ``[n_discourse, n_labels]`` base rows plus an
      ``[n_labels, n_labels]`` order-2 square,
    * joint:     ``[n_content, n_labels]``.
    """

    content: tuple[str, ...]
    discourse: tuple[str, ...]
    labels: tuple[str, ...]
    _c_index: dict[str, int] = field(default_factory=dict, repr=False)
    _d_index: dict[str, int] = field(default_factory=dict, repr=False)
    _l_index: dict[str, int] = field(default_factory=dict, repr=False)

    def __post_init__(self) -> None:
        self._c_index = {t: i for i, t in enumerate(self.content)}
        self._d_index = {t: i for i, t in enumerate(self.discourse)}
        self._l_index = {t: i for i, t in enumerate(self.labels)}

    @property
    def n_content(self) -> int:
        return len(self.content)

    @property
    def n_discourse(self) -> int:
        return len(self.discourse)

    @property
    def n_labels(self) -> int:
        return len(self.labels)

    def content_index(self, base_id: str) -> Optional[int]:
        return self._c_index.get(base_id)

    def discourse_index(self, base_id: str) -> Optional[int]:
        return self._d_index.get(base_id)

    def label_index(self, label: str) -> int:
        try:
            return self._l_index[label]
        except KeyError:
            raise CorpusError(f"label {label!r} not in model label space "
                              f"{list(self.labels)}") from None

    def label_lookup(self, label: str) -> Optional[int]:
        """Like :meth:`label_index` but None for out-of-space labels."""

        return self._l_index.get(label)

    def describe(self) -> str:
        """Readable id -> template map, stable order, for debugging."""

        lines = []
        for i, t in enumerate(self.content):
            lines.append(f"c[{i}]\t{t}")
        for i, t in enumerate(self.discourse):
            lines.append(f"d[{i}]\t{t} (x {self.n_labels} labels)")
        lines.append(f"o2\torder-2 relation pair ({self.n_labels} x "
                     f"{self.n_labels})")
        for i, t in enumerate(self.content):
            lines.append(f"cd[{i}]\t{t} (x {self.n_labels} labels)")
        lines.append(f"labels\t{', '.join(self.labels)}")
        return "\n".join(lines) + "\n"

    def to_dict(self) -> dict:
        return {"content": list(self.content),
                "discourse": list(self.discourse),
                "labels": list(self.labels)}

    @classmethod
    def from_dict(cls, obj: Mapping) -> "FeatureRegistry":
        return cls(content=tuple(obj["content"]),
                   discourse=tuple(obj["discourse"]),
                   labels=tuple(obj["labels"]))


def build_registry(preps: Sequence[PreparedDiscussion],
                   labels: Sequence[str],
                   stats: CorpusStats) -> FeatureRegistry:
    """Enumerate every content/discourse template observed in training."""

    if len(set(labels)) != len(labels) or not labels:
        raise CorpusError("label space must be non-empty and duplicate-free")
    content: set[str] = set()
    discourse: set[str] = set()
    for p in preps:
        for cand in p.candidates:
            content.update(content_features(cand, p, stats))
        for u in p.discussion.units:
            if p.tree.parent_of(u.id) is not None:
                discourse.update(discourse_observations(u.id, p))
    # Phrase-type indicators are a closed class; register all of them so a
    # type unseen in training still scores (with zero weight) at test time.
    content.update(f"c::phrase_type={t}" for t in PHRASE_TYPES)
    return FeatureRegistry(content=tuple(sorted(content)),
                           discourse=tuple(sorted(discourse)),
                           labels=tuple(labels))


# ---------------------------------------------------------------------------
# Global feature map


def global_features(prep: PreparedDiscussion, selected: Sequence[int],
                    relations: Mapping[int, str],
                    stats: CorpusStats) -> dict[str, float]:
    """Normalized global feature vector of a full configuration.

    ``selected`` aligns with ``prep.candidates``; ``relations`` covers every
    non-root unit. Selected candidates contribute their content templates and
    (in non-root units) their relation-tagged copies; every non-root unit
    contributes its discourse templates. Unselected candidates contribute
    nothing.
    """

    if len(selected) != len(prep.candidates):
        raise CorpusError(
            f"{prep.discussion.id}: phrase assignment covers "
            f"{len(selected)} of {len(prep.candidates)} candidates")
    nonroot = set(prep.tree.attachments)
    if set(relations) != nonroot:
        raise CorpusError(
            f"{prep.discussion.id}: relation assignment must cover exactly "
            "the non-root units")

    phi: dict[str, float] = {}

    def add(vec: Mapping[str, float]) -> None:
        for fid, v in vec.items():
            new = phi.get(fid, 0.0) + v
            if new == 0.0:
                phi.pop(fid, None)
            else:
                phi[fid] = new

    for cand, sel in zip(prep.candidates, selected):
        if not sel:
            continue
        cf = normalize(content_features(cand, prep, stats), stats)
        add(cf)
        rel = relations.get(cand.unit_id)
        if rel is not None:
            add({f"cd::{k[len('c::'):]}::rel={rel}": v
                 for k, v in cf.items()})
    for unit_id in sorted(nonroot):
        add(normalize(discourse_features(unit_id, prep, relations), stats))
    return phi
