"""Corpus schema validation, candidate extraction, clustering, and trees."""

import copy
import random

import pytest

from meetgist.corpus import (
    CorpusError,
    SchemaError,
    build_tree,
    candidate_surface,
    cluster_candidates,
    discussion_from_dict,
    discussion_to_dict,
    extract_candidates,
    induce_gold_labels,
    is_content_pos,
    jaccard,
    load_discussions,
    prepare,
    save_discussions,
    summary_words,
)

from conftest import chain_dict, span, tiny_dict, token, unit


class TestSchema:
    def test_round_trip(self, tiny):
        again = discussion_from_dict(discussion_to_dict(tiny))
        assert discussion_to_dict(again) == discussion_to_dict(tiny)

    def test_ids_must_be_sequential(self):
        obj = tiny_dict()
        obj["units"][1]["id"] = 5
        with pytest.raises(SchemaError, match="1..n"):
            discussion_from_dict(obj)

    def test_empty_tokens_rejected(self):
        obj = tiny_dict()
        obj["units"][0]["tokens"] = []
        with pytest.raises(SchemaError, match="no tokens"):
            discussion_from_dict(obj)

    def test_unknown_pos_rejected(self):
        obj = tiny_dict()
        obj["units"][0]["tokens"][0]["pos"] = "XYZ"
        with pytest.raises(SchemaError, match="POS"):
            discussion_from_dict(obj)

    def test_stop_flag_must_be_bool(self):
        obj = tiny_dict()
        obj["units"][0]["tokens"][0]["stop"] = 1
        with pytest.raises(SchemaError, match="stop"):
            discussion_from_dict(obj)

    def test_span_out_of_bounds(self):
        obj = tiny_dict()
        obj["units"][2]["spans"] = [span(1, 9, "ADJP", 1)]
        with pytest.raises(SchemaError, match="out of bounds"):
            discussion_from_dict(obj)

    def test_span_head_outside_span(self):
        obj = tiny_dict()
        obj["units"][2]["spans"] = [span(1, 2, "ADJP", 3)]
        with pytest.raises(SchemaError, match="head"):
            discussion_from_dict(obj)

    def test_start_times_monotone(self):
        obj = tiny_dict()
        obj["units"][2]["t_start"] = 0.5
        with pytest.raises(SchemaError, match="non-decreasing"):
            discussion_from_dict(obj)

    def test_t_end_before_t_start(self):
        obj = tiny_dict()
        obj["units"][0]["t_end"] = -1.0
        with pytest.raises(SchemaError, match="precedes"):
            discussion_from_dict(obj)

    def test_adjacency_pair_unknown_unit(self):
        obj = tiny_dict()
        obj["adjacency_pairs"] = [{"src": 1, "tgt": 9, "type": "x"}]
        with pytest.raises(SchemaError, match="unknown unit"):
            discussion_from_dict(obj)

    def test_adjacency_pair_self_loop(self):
        obj = tiny_dict()
        obj["adjacency_pairs"] = [{"src": 2, "tgt": 2, "type": "x"}]
        with pytest.raises(SchemaError, match="distinct"):
            discussion_from_dict(obj)

    def test_gold_tree_unknown_relation(self):
        obj = tiny_dict()
        obj["gold_tree"]["rel"]["2"] = "banter"
        with pytest.raises((SchemaError, CorpusError)):
            discussion_from_dict(obj)

    def test_gold_tree_parent_after_child(self):
        obj = tiny_dict()
        obj["gold_tree"]["attach"]["2"] = 3
        with pytest.raises((SchemaError, CorpusError)):
            discussion_from_dict(obj)

    def test_extractive_id_unknown(self):
        obj = tiny_dict()
        obj["summaries"]["extractive_ids"] = [7]
        with pytest.raises(SchemaError, match="names no unit"):
            discussion_from_dict(obj)

    def test_bad_cou_label(self):
        obj = tiny_dict()
        obj["cou"] = "maybe"
        with pytest.raises(SchemaError, match="cou"):
            discussion_from_dict(obj)

    def test_error_carries_location(self):
        obj = tiny_dict()
        obj["units"][1]["tokens"][0]["pos"] = "???"
        with pytest.raises(SchemaError) as err:
            discussion_from_dict(obj)
        assert err.value.discussion_id == "tiny"
        assert "units[1]" in err.value.path

    def test_save_load_round_trip(self, pair_corpus, tmp_path):
        path = tmp_path / "corpus.json"
        save_discussions(pair_corpus, path)
        again = load_discussions(path)
        assert [discussion_to_dict(d) for d in again] \
            == [discussion_to_dict(d) for d in pair_corpus]

    def test_duplicate_ids_rejected(self, tiny, tmp_path):
        path = tmp_path / "corpus.json"
        save_discussions([tiny, tiny], path)
        with pytest.raises(SchemaError, match="duplicate"):
            load_discussions(path)

    def test_not_json(self, tmp_path):
        path = tmp_path / "corpus.json"
        path.write_text("{nope")
        with pytest.raises(CorpusError, match="not valid JSON"):
            load_discussions(path)


class TestCandidateExtraction:
    def test_merged_verb_argument(self, tiny):
        cands = extract_candidates(tiny.units[0])
        assert len(cands) == 1
        c = cands[0]
        assert c.phrase_type == "merged"
        assert c.ranges == ((1, 2), (2, 5))
        assert c.head_lemma == "report"
        assert c.index == 1
        assert c.num_words == 4
        assert candidate_surface(tiny.units[0], c) \
            == "need the budget report"

    def test_textual_order_and_indexing(self, tiny):
        cands = extract_candidates(tiny.units[1])
        assert [(c.index, c.phrase_type, c.head_lemma) for c in cands] \
            == [(1, "NP", "report"), (2, "ADJP", "good")]

    def test_length_filter(self):
        words = [token(w) for w in "a b c d e f".split()]
        u = discussion_from_dict({
            "id": "x",
            "units": [unit(1, "s", words, spans=[span(0, 6, "NP", 0)])],
        }).units[0]
        assert extract_candidates(u) == []

    def test_stopword_head_filter(self):
        u = discussion_from_dict({
            "id": "x",
            "units": [unit(1, "s", [token("it", "PRP", True)],
                           spans=[span(0, 1, "NP", 0)])],
        }).units[0]
        assert extract_candidates(u) == []

    def test_non_candidate_labels_skipped(self):
        u = discussion_from_dict({
            "id": "x",
            "units": [unit(1, "s", [token("well", "UH")],
                           spans=[span(0, 1, "INTJ", 0)])],
        }).units[0]
        assert extract_candidates(u) == []

    def test_contained_span_absorbed(self):
        toks = [token("the", "DT", True), token("big", "JJ"), token("dog")]
        u = discussion_from_dict({
            "id": "x",
            "units": [unit(1, "s", toks,
                           spans=[span(0, 3, "NP", 2),
                                  span(1, 2, "ADJP", 1)])],
        }).units[0]
        cands = extract_candidates(u)
        assert [(c.phrase_type, c.head_lemma) for c in cands] \
            == [("NP", "dog")]

    def test_identical_extent_keeps_ancestor(self):
        toks = [token("run", "VB")]
        u = discussion_from_dict({
            "id": "x",
            "units": [unit(1, "s", toks,
                           spans=[span(0, 1, "VP", 0, parent=None),
                                  span(0, 1, "NP", 0, parent=0)])],
        }).units[0]
        cands = extract_candidates(u)
        assert [(c.phrase_type,) for c in cands] == [("VP",)]

    def test_merge_requires_outside_verb(self):
        # Head verb inside the span itself must not trigger a merge.
        toks = [token("fix", "VB"), token("the", "DT", True), token("bug")]
        u = discussion_from_dict({
            "id": "x",
            "units": [unit(1, "s", toks, spans=[span(0, 3, "NP", 2)],
                           deps=[{"head": 0, "dep": 2, "rel": "dobj"}])],
        }).units[0]
        cands = extract_candidates(u)
        assert [c.phrase_type for c in cands] == ["NP"]

    def test_merge_picks_nearest_verb(self):
        toks = [token("start", "VB"), token("stop", "VB"),
                token("the", "DT", True), token("car")]
        u = discussion_from_dict({
            "id": "x",
            "units": [unit(1, "s", toks, spans=[span(2, 4, "NP", 3)],
                           deps=[{"head": 0, "dep": 3, "rel": "dobj"},
                                 {"head": 1, "dep": 3, "rel": "dobj"}])],
        }).units[0]
        c = extract_candidates(u)[0]
        assert c.phrase_type == "merged"
        assert c.ranges == ((1, 2), (2, 4))

    def test_merge_needs_subject_object_relation(self):
        toks = [token("go", "VB"), token("the", "DT", True), token("shop")]
        u = discussion_from_dict({
            "id": "x",
            "units": [unit(1, "s", toks, spans=[span(1, 3, "NP", 2)],
                           deps=[{"head": 0, "dep": 2, "rel": "advmod"}])],
        }).units[0]
        assert extract_candidates(u)[0].phrase_type == "NP"


class TestClusters:
    def test_shared_head_and_type(self, tiny):
        prep = prepare(tiny)
        keys = [cl.key for cl in prep.clusters]
        assert keys == [("ADJP", "good"), ("NP", "report"),
                        ("merged", "report")]
        sizes = [cl.size for cl in prep.clusters]
        assert sizes == [2, 1, 1]

    def test_members_in_textual_order(self, tiny):
        cl = prepare(tiny).clusters[0]
        assert [(m.unit_id, m.index) for m in cl.members] == [(2, 2), (3, 1)]

    def test_cluster_key_lowercases_head(self):
        obj = {
            "id": "x",
            "units": [unit(1, "s", [token("Plan", lemma="Plan")],
                           spans=[span(0, 1, "NP", 0)])],
        }
        cl = cluster_candidates(discussion_from_dict(obj))
        assert cl[0].head_lemma == "plan"


class TestGoldInduction:
    def test_summary_marks_heads(self, tiny):
        cands = [c for u in tiny.units for c in extract_candidates(u)]
        labeled = induce_gold_labels(tiny, cands)
        assert [(c.head_lemma, c.label) for c in labeled] \
            == [("report", 1), ("report", 1), ("good", 0), ("good", 0)]

    def test_no_summaries_is_an_error(self, tiny):
        obj = tiny_dict()
        obj["summaries"] = {"abstractive": [], "participant": [],
                            "extractive_ids": []}
        bare = discussion_from_dict(obj)
        with pytest.raises(CorpusError, match="no summaries"):
            induce_gold_labels(bare, extract_candidates(bare.units[0]))

    def test_summary_words_tokenization(self):
        class S:
            abstractive = ("We'll meet Tuesday, 9am!",)
            participant = ()
        assert summary_words(S()) == {"we'll", "meet", "tuesday", "9am"}


class TestTree:
    def test_chain_fallback(self, chain):
        tree = build_tree(chain)
        assert tree.attachments == {2: 1, 3: 2}

    def test_adjacency_partner_wins(self, tiny):
        tree = build_tree(tiny)
        assert tree.attachments == {2: 1, 3: 1}

    def test_nearest_earlier_partner(self):
        obj = {
            "id": "x",
            "units": [unit(i, "s", [token("w")], t_start=float(i),
                           t_end=float(i)) for i in range(1, 5)],
            "adjacency_pairs": [{"src": 4, "tgt": 1, "type": "p"},
                                {"src": 2, "tgt": 4, "type": "p"}],
        }
        tree = build_tree(discussion_from_dict(obj))
        assert tree.attachments[4] == 2
        assert tree.attachments[3] == 2

    def test_depth_and_children(self, chain):
        prep = prepare(chain)
        assert prep.tree.depth_of(1) == 0
        assert prep.tree.depth_of(3) == 2
        assert prep.tree.children_of(1) == [2]


class TestPrepare:
    def test_gold_tree_preferred(self, tiny):
        prep = prepare(tiny)
        assert prep.tree.relations == {2: "elaboration", 3: "positive"}

    def test_main_speaker_most_words(self, tiny):
        assert prepare(tiny).main_speaker == "a"

    def test_main_speaker_tie_breaks_low(self):
        obj = {
            "id": "x",
            "units": [unit(1, "b", [token("w")], t_start=0.0, t_end=1.0),
                      unit(2, "a", [token("v")], t_start=1.0, t_end=2.0)],
        }
        assert prepare(discussion_from_dict(obj)).main_speaker == "a"

    def test_term_frequencies(self, tiny):
        prep = prepare(tiny)
        assert prep.tf["report"] == 2
        assert prep.tf["good"] == 2
        assert prep.tf["we"] == 1

    def test_content_lemmas_drop_stopwords(self, tiny):
        prep = prepare(tiny)
        assert prep.unit_content_lemmas[1] == {"need", "budget", "report"}
        assert prep.unit_content_lemmas[3] == {"sounds", "good"}

    def test_gold_phrase_labels(self, tiny):
        prep = prepare(tiny)
        assert prep.gold_phrase_labels == (1, 1, 0, 0)

    def test_without_gold(self, tiny):
        prep = prepare(tiny, with_gold=False)
        assert prep.gold_phrase_labels is None

    def test_candidate_lookup(self, tiny):
        prep = prepare(tiny)
        c = prep.candidate_by_key((2, 2))
        assert (c.phrase_type, c.head_lemma) == ("ADJP", "good")
        with pytest.raises(KeyError):
            prep.candidate_by_key((9, 1))


class TestSmallHelpers:
    def test_jaccard_values(self):
        a = frozenset({"x", "y"})
        b = frozenset({"y", "z"})
        assert jaccard(a, b) == pytest.approx(1 / 3)
        assert jaccard(frozenset(), frozenset()) == 0.0
        assert jaccard(a, a) == 1.0

    def test_content_pos(self):
        for pos in ("NN", "NNS", "VBZ", "JJR", "RB", "NOUN", "VERB",
                    "ADJ", "ADV", "PROPN"):
            assert is_content_pos(pos)
        for pos in ("DT", "IN", "PRP", "CC", "PUNCT", "DET"):
            assert not is_content_pos(pos)

    def test_random_corpora_extract_cleanly(self):
        # Candidate invariants on randomized units: indexes 1..k in textual
        # order, five-word cap, non-stop heads.
        rng = random.Random(4)
        pos_pool = ["NN", "VB", "JJ", "DT", "PRP"]
        for _ in range(50):
            n = rng.randint(1, 8)
            toks = [token(f"w{rng.randint(0, 5)}", rng.choice(pos_pool),
                          rng.random() < 0.3) for _ in range(n)]
            spans = []
            for _ in range(rng.randint(0, 3)):
                s = rng.randrange(n)
                e = rng.randint(s + 1, n)
                spans.append(span(s, e, rng.choice(["NP", "VP", "PP",
                                                    "ADJP"]),
                                  rng.randrange(s, e)))
            obj = {"id": "x", "units": [unit(1, "s", toks, spans=spans)]}
            cands = extract_candidates(discussion_from_dict(obj).units[0])
            assert [c.index for c in cands] == list(range(1, len(cands) + 1))
            starts = [c.ranges[0][0] for c in cands]
            assert starts == sorted(starts)
            nonstop = {t["lemma"] for t in toks if not t["stop"]}
            for c in cands:
                assert c.num_words <= 5
                assert c.head_lemma in nonstop
