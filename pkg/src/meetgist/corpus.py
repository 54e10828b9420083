"""Discussion data model: JSON ingestion, validation, candidate phrase
extraction, phrase clustering, summary-based phrase labels, and reply trees.

A corpus file is a JSON array of discussion objects. Every downstream module
works on :class:`PreparedDiscussion`, which bundles a validated discussion
with its extracted candidates, clusters, tree, and a few cached views of the
token stream.
"""

from __future__ import annotations

import json
import math
import re
from collections import Counter, defaultdict
from dataclasses import dataclass, field, replace
from importlib import resources as importlib_resources
from typing import Iterable, Mapping, Optional, Sequence

# The nine discourse relation labels, in canonical (alphabetical) order.
# Canonical order defines label indices everywhere, including the "smallest
# label" tie rule in exact inference.
TAS_RELATIONS = (
    "elaboration",
    "negative",
    "option",
    "option exclusion",
    "positive",
    "request",
    "specialization",
    "subject-to",
    "uncertain",
)

CANDIDATE_SPAN_LABELS = ("NP", "VP", "PP", "ADJP")
MERGED_TYPE = "merged"
PHRASE_TYPES = CANDIDATE_SPAN_LABELS + (MERGED_TYPE,)
MAX_CANDIDATE_WORDS = 5

# Dependency relations that trigger a verb + argument merge.
SUBJECT_OBJECT_RELS = frozenset(
    {"nsubj", "nsubjpass", "csubj", "dobj", "obj", "iobj"}
)

_PTB_TAGS = (
    "CC CD DT EX FW IN JJ JJR JJS LS MD NN NNS NNP NNPS PDT POS PRP PRP$ "
    "RB RBR RBS RP SYM TO UH VB VBD VBG VBN VBP VBZ WDT WP WP$ WRB "
    ". , : `` '' -LRB- -RRB- $ # HYPH NFP ADD XX"
)
_UPOS_TAGS = (
    "ADJ ADP ADV AUX CCONJ DET INTJ NOUN NUM PART PRON PROPN PUNCT SCONJ "
    "SYM VERB X"
)
TAGSET = frozenset(_PTB_TAGS.split()) | frozenset(_UPOS_TAGS.split())

_CONTENT_PTB_PREFIXES = ("NN", "VB", "JJ", "RB")
_CONTENT_UPOS = frozenset({"NOUN", "PROPN", "VERB", "ADJ", "ADV"})

_WORD_RE = re.compile(r"[a-z0-9']+")


def _load_stopwords() -> frozenset[str]:
    text = (
        importlib_resources.files("meetgist.resources")
        .joinpath("stopwords.txt")
        .read_text(encoding="utf-8")
    )
    return frozenset(w for w in text.split() if w)


STOPWORDS = _load_stopwords()


class CorpusError(Exception):
    """Raised for malformed or inconsistent corpus data."""


class SchemaError(CorpusError):
    """A corpus JSON object violates the schema.

    Carries the offending discussion id (when known) and a dotted field path
    so the CLI can report the first violation precisely.
    """

    def __init__(self, message: str, discussion_id: Optional[str] = None,
                 path: str = ""):
        self.discussion_id = discussion_id
        self.path = path
        where = discussion_id if discussion_id is not None else "<corpus>"
        loc = f"{where}:{path}" if path else where
        super().__init__(f"{loc}: {message}")


def is_content_pos(pos: str) -> bool:
    return pos.startswith(_CONTENT_PTB_PREFIXES) or pos in _CONTENT_UPOS


@dataclass(frozen=True)
class Token:
    surface: str
    lemma: str
    pos: str
    is_stopword: bool
    # Ordinal of this token among the speaker's tokens across the discussion.
    speaker_word_index: int = 0


@dataclass(frozen=True)
class ConstituentSpan:
    start: int
    end: int  # exclusive
    label: str
    head_index: int  # token index within the unit, inside [start, end)
    parent: Optional[int] = None  # index of the enclosing span, if any


@dataclass(frozen=True)
class DependencyLink:
    head: int
    dep: int
    rel: str


@dataclass(frozen=True)
class DiscourseUnit:
    id: int
    speaker: str
    tokens: tuple[Token, ...]
    spans: tuple[ConstituentSpan, ...]
    dialogue_act: str
    start_time: float
    end_time: float
    dependency_links: tuple[DependencyLink, ...] = ()


@dataclass(frozen=True)
class AdjacencyPair:
    source_unit: int
    target_unit: int
    pair_type: str


@dataclass(frozen=True)
class SummarySet:
    abstractive: tuple[str, ...] = ()
    participant: tuple[str, ...] = ()
    extractive_unit_ids: tuple[int, ...] = ()


@dataclass
class DiscourseTree:
    """Reply structure over units: parent id and relation label per non-root."""

    attachments: dict[int, int]
    relations: dict[int, str]

    def parent_of(self, unit_id: int) -> Optional[int]:
        return self.attachments.get(unit_id)

    def children_of(self, unit_id: int) -> list[int]:
        return sorted(i for i, p in self.attachments.items() if p == unit_id)

    def depth_of(self, unit_id: int) -> int:
        depth = 0
        while unit_id in self.attachments:
            unit_id = self.attachments[unit_id]
            depth += 1
        return depth

    def validate(self, unit_ids: Sequence[int], labels: Iterable[str],
                 discussion_id: Optional[str] = None,
                 require_relations: bool = False) -> None:
        ids = list(unit_ids)
        root = ids[0]
        label_set = frozenset(labels)
        expected = set(ids[1:])
        if set(self.attachments) != expected:
            raise SchemaError(
                "tree must attach every non-root unit exactly once",
                discussion_id, "gold_tree.attach")
        for child, parent in self.attachments.items():
            if parent not in set(ids):
                raise SchemaError(
                    f"unit {child} attaches to unknown unit {parent}",
                    discussion_id, "gold_tree.attach")
            if parent >= child:
                raise SchemaError(
                    f"unit {child} must attach to an earlier unit, got "
                    f"{parent}", discussion_id, "gold_tree.attach")
        if root in self.attachments:
            raise SchemaError("root unit cannot attach", discussion_id,
                              "gold_tree.attach")
        for unit_id, rel in self.relations.items():
            if unit_id not in expected:
                raise SchemaError(
                    f"relation on unknown or root unit {unit_id}",
                    discussion_id, "gold_tree.rel")
            if rel not in label_set:
                raise SchemaError(f"unknown relation label {rel!r}",
                                  discussion_id, "gold_tree.rel")
        if require_relations and set(self.relations) != expected:
            raise SchemaError("every non-root unit needs a relation label",
                              discussion_id, "gold_tree.rel")


@dataclass(frozen=True)
class Discussion:
    id: str
    units: tuple[DiscourseUnit, ...]
    adjacency_pairs: tuple[AdjacencyPair, ...] = ()
    gold_tree: Optional[DiscourseTree] = None
    summaries: SummarySet = SummarySet()
    cou_label: Optional[str] = None

    def unit_by_id(self, unit_id: int) -> DiscourseUnit:
        unit = self.units[unit_id - self.units[0].id]
        if unit.id != unit_id:
            raise KeyError(unit_id)
        return unit


@dataclass(frozen=True)
class CandidatePhrase:
    """A selectable phrase within one unit.

    ``ranges`` is a tuple of half-open token ranges; merged verb + argument
    candidates have two, plain constituents have one. ``index`` numbers the
    candidates of the unit from 1 in textual order.
    """

    unit_id: int
    index: int
    ranges: tuple[tuple[int, int], ...]
    phrase_type: str
    head_lemma: str
    label: Optional[int] = None

    @property
    def key(self) -> tuple[int, int]:
        return (self.unit_id, self.index)

    @property
    def cluster_key(self) -> tuple[str, str]:
        return (self.phrase_type, self.head_lemma.lower())

    @property
    def num_words(self) -> int:
        return sum(e - s for s, e in self.ranges)


@dataclass(frozen=True)
class PhraseCluster:
    phrase_type: str
    head_lemma: str
    members: tuple[CandidatePhrase, ...]

    @property
    def key(self) -> tuple[str, str]:
        return (self.phrase_type, self.head_lemma)

    @property
    def size(self) -> int:
        return len(self.members)


# ---------------------------------------------------------------------------
# Loading and validation


def _require(obj: Mapping, key: str, kind, did: Optional[str], path: str):
    if key not in obj:
        raise SchemaError(f"missing field {key!r}", did, path)
    value = obj[key]
    if kind is float:
        if not isinstance(value, (int, float)) or isinstance(value, bool):
            raise SchemaError(f"field {key!r} must be a number", did,
                              f"{path}.{key}")
        return float(value)
    if kind is int and isinstance(value, bool):
        raise SchemaError(f"field {key!r} must be an integer", did,
                          f"{path}.{key}")
    if not isinstance(value, kind):
        raise SchemaError(f"field {key!r} must be {kind.__name__}", did,
                          f"{path}.{key}")
    return value


def _parse_token(obj, did, path) -> dict:
    if not isinstance(obj, dict):
        raise SchemaError("token must be an object", did, path)
    surface = _require(obj, "surface", str, did, path)
    lemma = _require(obj, "lemma", str, did, path)
    pos = _require(obj, "pos", str, did, path)
    stop = _require(obj, "stop", bool, did, path)
    if not surface:
        raise SchemaError("empty token surface", did, path)
    if not lemma:
        raise SchemaError("empty token lemma", did, path)
    if pos not in TAGSET:
        raise SchemaError(f"unknown POS tag {pos!r}", did, path)
    return {"surface": surface, "lemma": lemma, "pos": pos, "stop": stop}


def _parse_span(obj, n_tokens, did, path) -> ConstituentSpan:
    if not isinstance(obj, dict):
        raise SchemaError("span must be an object", did, path)
    start = _require(obj, "start", int, did, path)
    end = _require(obj, "end", int, did, path)
    label = _require(obj, "label", str, did, path)
    head = _require(obj, "head", int, did, path)
    parent = obj.get("parent")
    if parent is not None and not isinstance(parent, int):
        raise SchemaError("span parent must be an index or null", did, path)
    if not (0 <= start < end <= n_tokens):
        raise SchemaError(f"span range [{start}, {end}) out of bounds", did,
                          path)
    if not (start <= head < end):
        raise SchemaError("span head must lie inside the span", did, path)
    return ConstituentSpan(start=start, end=end, label=label,
                           head_index=head, parent=parent)


def discussion_from_dict(obj: Mapping) -> Discussion:
    """Validate one corpus JSON object and build a :class:`Discussion`."""

    if not isinstance(obj, Mapping):
        raise SchemaError("discussion must be an object")
    did = obj.get("id")
    if not isinstance(did, str) or not did:
        raise SchemaError("discussion id must be a non-empty string",
                          None, "id")

    raw_units = _require(obj, "units", list, did, "")
    if not raw_units:
        raise SchemaError("discussion needs at least one unit", did, "units")

    units: list[DiscourseUnit] = []
    speaker_counts: Counter[str] = Counter()
    prev_end = None
    for k, u in enumerate(raw_units):
        path = f"units[{k}]"
        if not isinstance(u, dict):
            raise SchemaError("unit must be an object", did, path)
        uid = _require(u, "id", int, did, path)
        if uid != k + 1:
            raise SchemaError(f"unit ids must be 1..n in order, got {uid}",
                              did, path)
        speaker = _require(u, "speaker", str, did, path)
        if not speaker:
            raise SchemaError("empty speaker id", did, path)
        raw_tokens = _require(u, "tokens", list, did, path)
        if not raw_tokens:
            raise SchemaError("unit has no tokens", did, path)
        tokens = []
        for t_idx, t in enumerate(raw_tokens):
            parsed = _parse_token(t, did, f"{path}.tokens[{t_idx}]")
            tokens.append(Token(
                surface=parsed["surface"], lemma=parsed["lemma"],
                pos=parsed["pos"], is_stopword=parsed["stop"],
                speaker_word_index=speaker_counts[speaker] + t_idx,
            ))
        speaker_counts[speaker] += len(tokens)
        spans = tuple(
            _parse_span(s, len(tokens), did, f"{path}.spans[{s_idx}]")
            for s_idx, s in enumerate(u.get("spans", []))
        )
        for s_idx, span in enumerate(spans):
            if span.parent is not None and not (0 <= span.parent < len(spans)):
                raise SchemaError("span parent index out of range", did,
                                  f"{path}.spans[{s_idx}]")
        da = _require(u, "da", str, did, path)
        if not da:
            raise SchemaError("empty dialogue act", did, path)
        t_start = _require(u, "t_start", float, did, path)
        t_end = _require(u, "t_end", float, did, path)
        if t_end < t_start:
            raise SchemaError("t_end precedes t_start", did, path)
        if prev_end is not None and t_start < prev_end:
            raise SchemaError("unit start times must be non-decreasing", did,
                              path)
        prev_end = t_start
        deps = []
        for d_idx, d in enumerate(u.get("deps", [])):
            dpath = f"{path}.deps[{d_idx}]"
            if not isinstance(d, dict):
                raise SchemaError("dependency must be an object", did, dpath)
            head = _require(d, "head", int, did, dpath)
            dep = _require(d, "dep", int, did, dpath)
            rel = _require(d, "rel", str, did, dpath)
            if not (0 <= head < len(tokens) and 0 <= dep < len(tokens)):
                raise SchemaError("dependency token index out of range", did,
                                  dpath)
            deps.append(DependencyLink(head=head, dep=dep, rel=rel))
        units.append(DiscourseUnit(
            id=uid, speaker=speaker, tokens=tuple(tokens), spans=spans,
            dialogue_act=da, start_time=t_start, end_time=t_end,
            dependency_links=tuple(deps),
        ))

    unit_ids = [u.id for u in units]
    pairs = []
    for p_idx, p in enumerate(obj.get("adjacency_pairs", [])):
        path = f"adjacency_pairs[{p_idx}]"
        if not isinstance(p, dict):
            raise SchemaError("adjacency pair must be an object", did, path)
        src = _require(p, "src", int, did, path)
        tgt = _require(p, "tgt", int, did, path)
        ptype = _require(p, "type", str, did, path)
        if src not in set(unit_ids) or tgt not in set(unit_ids):
            raise SchemaError("adjacency pair names an unknown unit", did,
                              path)
        if src == tgt:
            raise SchemaError("adjacency pair must link two distinct units",
                              did, path)
        pairs.append(AdjacencyPair(source_unit=src, target_unit=tgt,
                                   pair_type=ptype))

    gold_tree = None
    raw_tree = obj.get("gold_tree")
    if raw_tree is not None:
        if not isinstance(raw_tree, dict):
            raise SchemaError("gold_tree must be an object or null", did,
                              "gold_tree")
        attach_raw = _require(raw_tree, "attach", dict, did, "gold_tree")
        rel_raw = raw_tree.get("rel", {})
        if not isinstance(rel_raw, dict):
            raise SchemaError("gold_tree.rel must be an object", did,
                              "gold_tree.rel")
        try:
            attach = {int(c): int(p) for c, p in attach_raw.items()}
            rels = {int(c): str(r) for c, r in rel_raw.items()}
        except (TypeError, ValueError) as exc:
            raise SchemaError(f"bad gold_tree keys: {exc}", did,
                              "gold_tree") from None
        gold_tree = DiscourseTree(attachments=attach, relations=rels)
        gold_tree.validate(unit_ids, TAS_RELATIONS, did)

    summaries = SummarySet()
    raw_sum = obj.get("summaries")
    if raw_sum is not None:
        if not isinstance(raw_sum, dict):
            raise SchemaError("summaries must be an object", did, "summaries")
        abstractive = raw_sum.get("abstractive", [])
        participant = raw_sum.get("participant", [])
        extractive = raw_sum.get("extractive_ids", [])
        for name, val in (("abstractive", abstractive),
                          ("participant", participant)):
            if (not isinstance(val, list)
                    or any(not isinstance(s, str) for s in val)):
                raise SchemaError(f"summaries.{name} must be a string list",
                                  did, f"summaries.{name}")
        if (not isinstance(extractive, list)
                or any(not isinstance(i, int) for i in extractive)):
            raise SchemaError("summaries.extractive_ids must be unit ids",
                              did, "summaries.extractive_ids")
        for uid in extractive:
            if uid not in set(unit_ids):
                raise SchemaError(f"extractive id {uid} names no unit", did,
                                  "summaries.extractive_ids")
        summaries = SummarySet(abstractive=tuple(abstractive),
                               participant=tuple(participant),
                               extractive_unit_ids=tuple(extractive))

    cou = obj.get("cou")
    if cou is not None and cou not in ("consistent", "inconsistent"):
        raise SchemaError(f"cou must be consistent/inconsistent, got {cou!r}",
                          did, "cou")

    return Discussion(id=did, units=tuple(units), adjacency_pairs=tuple(pairs),
                      gold_tree=gold_tree, summaries=summaries, cou_label=cou)


def load_discussions(path) -> list[Discussion]:
    """Load and validate a corpus JSON file (a list of discussions)."""

    with open(path, "r", encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise CorpusError(f"{path}: not valid JSON ({exc})") from None
    if not isinstance(data, list):
        raise SchemaError("corpus file must contain a JSON array")
    discussions = [discussion_from_dict(obj) for obj in data]
    seen = set()
    for d in discussions:
        if d.id in seen:
            raise SchemaError("duplicate discussion id", d.id, "id")
        seen.add(d.id)
    return discussions


def discussion_to_dict(x: Discussion) -> dict:
    """Inverse of :func:`discussion_from_dict` (canonical key order)."""

    out: dict = {"id": x.id, "units": []}
    for u in x.units:
        out["units"].append({
            "id": u.id,
            "speaker": u.speaker,
            "tokens": [{"surface": t.surface, "lemma": t.lemma, "pos": t.pos,
                        "stop": t.is_stopword} for t in u.tokens],
            "spans": [{"start": s.start, "end": s.end, "label": s.label,
                       "head": s.head_index, "parent": s.parent}
                      for s in u.spans],
            "da": u.dialogue_act,
            "t_start": u.start_time,
            "t_end": u.end_time,
            "deps": [{"head": d.head, "dep": d.dep, "rel": d.rel}
                     for d in u.dependency_links],
        })
    out["adjacency_pairs"] = [
        {"src": p.source_unit, "tgt": p.target_unit, "type": p.pair_type}
        for p in x.adjacency_pairs
    ]
    if x.gold_tree is not None:
        out["gold_tree"] = {
            "attach": {str(c): p for c, p in sorted(x.gold_tree.attachments.items())},
            "rel": {str(c): r for c, r in sorted(x.gold_tree.relations.items())},
        }
    else:
        out["gold_tree"] = None
    out["summaries"] = {
        "abstractive": list(x.summaries.abstractive),
        "participant": list(x.summaries.participant),
        "extractive_ids": list(x.summaries.extractive_unit_ids),
    }
    if x.cou_label is not None:
        out["cou"] = x.cou_label
    return out


def save_discussions(discussions: Sequence[Discussion], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump([discussion_to_dict(d) for d in discussions], fh,
                  indent=2, sort_keys=True)
        fh.write("\n")


# ---------------------------------------------------------------------------
# Candidate phrase extraction


def _is_span_ancestor(spans: Sequence[ConstituentSpan], anc: int,
                      desc: int) -> bool:
    seen = set()
    cur = spans[desc].parent
    while cur is not None and cur not in seen:
        if cur == anc:
            return True
        seen.add(cur)
        cur = spans[cur].parent
    return False


def extract_candidates(unit: DiscourseUnit) -> list[CandidatePhrase]:
    """Candidate phrases of one unit, in textual order, indexed from 1.

    Rules: NP/VP/PP/ADJP spans of at most five words whose head token is not
    a stopword; spans contained in another surviving span are dropped (the
    largest constituent wins); surviving NPs whose head is the subject or
    object of a verb in the same unit merge with that verb into a
    two-range ``merged`` candidate headed by the NP's head lemma.
    """

    kept: list[tuple[int, ConstituentSpan]] = []
    for si, span in enumerate(unit.spans):
        if span.label not in CANDIDATE_SPAN_LABELS:
            continue
        if span.end - span.start > MAX_CANDIDATE_WORDS:
            continue
        if unit.tokens[span.head_index].is_stopword:
            continue
        kept.append((si, span))

    surviving: list[tuple[int, ConstituentSpan]] = []
    for si, span in kept:
        absorbed = False
        for sj, other in kept:
            if sj == si:
                continue
            if other.start <= span.start and span.end <= other.end:
                if (other.start, other.end) != (span.start, span.end):
                    absorbed = True
                    break
                # Identical extents: keep the structural ancestor only.
                if _is_span_ancestor(unit.spans, sj, si):
                    absorbed = True
                    break
        if not absorbed:
            surviving.append((si, span))

    verbs_by_arg: dict[int, list[int]] = defaultdict(list)
    for link in unit.dependency_links:
        if link.rel in SUBJECT_OBJECT_RELS:
            head_tok = unit.tokens[link.head]
            if head_tok.pos.startswith("VB") or head_tok.pos in ("VERB", "AUX"):
                verbs_by_arg[link.dep].append(link.head)

    candidates: list[CandidatePhrase] = []
    for _, span in surviving:
        head_tok = unit.tokens[span.head_index]
        ranges = ((span.start, span.end),)
        ptype = span.label
        if span.label == "NP" and span.head_index in verbs_by_arg:
            outside = [v for v in verbs_by_arg[span.head_index]
                       if not (span.start <= v < span.end)]
            if outside:
                verb = min(outside,
                           key=lambda v: (abs(v - span.head_index), v))
                ranges = tuple(sorted([(verb, verb + 1),
                                       (span.start, span.end)]))
                ptype = MERGED_TYPE
        candidates.append(CandidatePhrase(
            unit_id=unit.id, index=0, ranges=ranges, phrase_type=ptype,
            head_lemma=head_tok.lemma.lower(),
        ))

    candidates.sort(key=lambda c: (c.ranges[0][0], c.ranges[-1][1],
                                   c.phrase_type))
    return [replace(c, index=j + 1) for j, c in enumerate(candidates)]


def candidate_surface(unit: DiscourseUnit, cand: CandidatePhrase) -> str:
    words = []
    for start, end in cand.ranges:
        words.extend(t.surface for t in unit.tokens[start:end])
    return " ".join(words)


def cluster_candidates(
    discussion: Discussion,
    candidates: Optional[Sequence[CandidatePhrase]] = None,
) -> list[PhraseCluster]:
    """Group the discussion's candidates by (phrase type, head lemma).

    Clusters are ordered by key; members keep textual order. Every candidate
    lands in exactly one cluster.
    """

    if candidates is None:
        candidates = [c for u in discussion.units
                      for c in extract_candidates(u)]
    groups: dict[tuple[str, str], list[CandidatePhrase]] = defaultdict(list)
    for c in candidates:
        groups[c.cluster_key].append(c)
    return [
        PhraseCluster(phrase_type=k[0], head_lemma=k[1],
                      members=tuple(sorted(v, key=lambda c: c.key)))
        for k, v in sorted(groups.items())
    ]


def summary_words(summaries: SummarySet) -> frozenset[str]:
    words: set[str] = set()
    for text in summaries.abstractive + summaries.participant:
        words.update(_WORD_RE.findall(text.lower()))
    return frozenset(words)


def induce_gold_labels(
    discussion: Discussion,
    candidates: Sequence[CandidatePhrase],
) -> list[CandidatePhrase]:
    """Label candidates 1/0 by head-lemma occurrence in any summary."""

    if not (discussion.summaries.abstractive
            or discussion.summaries.participant):
        raise CorpusError(
            f"{discussion.id}: no summaries to induce phrase labels from")
    vocab = summary_words(discussion.summaries)
    return [replace(c, label=int(c.head_lemma.lower() in vocab))
            for c in candidates]


def build_tree(discussion: Discussion) -> DiscourseTree:
    """Reply-tree heuristic: attach each unit to the nearest earlier unit it
    forms an adjacency pair with, else to the immediately preceding unit."""

    partners: dict[int, set[int]] = defaultdict(set)
    for p in discussion.adjacency_pairs:
        lo, hi = sorted((p.source_unit, p.target_unit))
        partners[hi].add(lo)
    attach = {}
    for u in discussion.units[1:]:
        earlier = [j for j in partners[u.id] if j < u.id]
        attach[u.id] = max(earlier) if earlier else u.id - 1
    return DiscourseTree(attachments=attach, relations={})


# ---------------------------------------------------------------------------
# Prepared view


@dataclass
class PreparedDiscussion:
    """A discussion plus everything the feature/inference layers need."""

    discussion: Discussion
    candidates: tuple[CandidatePhrase, ...]
    clusters: tuple[PhraseCluster, ...]
    tree: DiscourseTree
    # Caches derived from the token stream.
    tf: Counter = field(default_factory=Counter)
    unit_lemmas: dict[int, frozenset[str]] = field(default_factory=dict)
    unit_content_lemmas: dict[int, frozenset[str]] = field(default_factory=dict)
    main_speaker: str = ""
    cluster_index: dict[tuple[str, str], int] = field(default_factory=dict)
    candidates_by_unit: dict[int, tuple[CandidatePhrase, ...]] = field(
        default_factory=dict)

    @property
    def n_units(self) -> int:
        return len(self.discussion.units)

    @property
    def gold_phrase_labels(self) -> Optional[tuple[int, ...]]:
        if any(c.label is None for c in self.candidates):
            return None
        return tuple(c.label for c in self.candidates)  # type: ignore[misc]

    def cluster_size(self, key: tuple[str, str]) -> int:
        return self.clusters[self.cluster_index[key]].size

    def candidate_by_key(self, key: tuple[int, int]) -> CandidatePhrase:
        for c in self.candidates_by_unit.get(key[0], ()):
            if c.index == key[1]:
                return c
        raise KeyError(key)


def prepare(discussion: Discussion, with_gold: bool = True) -> PreparedDiscussion:
    """Extract candidates, clusters, and the working tree for a discussion.

    The working tree is the gold tree when present, otherwise the adjacency
    heuristic. With ``with_gold``, candidates get summary-induced labels when
    summaries exist.
    """

    candidates = [c for u in discussion.units for c in extract_candidates(u)]
    if with_gold and (discussion.summaries.abstractive
                      or discussion.summaries.participant):
        candidates = induce_gold_labels(discussion, candidates)
    candidates = sorted(candidates, key=lambda c: c.key)
    clusters = cluster_candidates(discussion, candidates)

    if discussion.gold_tree is not None:
        tree = DiscourseTree(attachments=dict(discussion.gold_tree.attachments),
                             relations=dict(discussion.gold_tree.relations))
    else:
        tree = build_tree(discussion)

    tf: Counter = Counter()
    unit_lemmas = {}
    unit_content = {}
    speaker_tokens: Counter[str] = Counter()
    by_unit: dict[int, list[CandidatePhrase]] = defaultdict(list)
    for c in candidates:
        by_unit[c.unit_id].append(c)
    for u in discussion.units:
        lemmas = [t.lemma.lower() for t in u.tokens]
        tf.update(lemmas)
        unit_lemmas[u.id] = frozenset(lemmas)
        unit_content[u.id] = frozenset(
            t.lemma.lower() for t in u.tokens if not t.is_stopword)
        speaker_tokens[u.speaker] += len(u.tokens)
    top = max(speaker_tokens.values())
    main_speaker = min(s for s, n in speaker_tokens.items() if n == top)

    return PreparedDiscussion(
        discussion=discussion,
        candidates=tuple(candidates),
        clusters=tuple(clusters),
        tree=tree,
        tf=tf,
        unit_lemmas=unit_lemmas,
        unit_content_lemmas=unit_content,
        main_speaker=main_speaker,
        cluster_index={cl.key: i for i, cl in enumerate(clusters)},
        candidates_by_unit={uid: tuple(cs) for uid, cs in by_unit.items()},
    )


def jaccard(a: frozenset[str], b: frozenset[str]) -> float:
    union = a | b
    if not union:
        return 0.0
    return len(a & b) / len(union)
