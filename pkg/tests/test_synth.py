"""Synthetic corpus generator: spec validation, planted-label recovery,
structural coverage, and determinism."""

import json

import pytest

from meetgist.corpus import (
    CorpusError,
    PHRASE_TYPES,
    discussion_to_dict,
    prepare,
    summary_words,
)
from meetgist.synth import CorpusSpec, generate, generate_cou

LABELS = ("elaboration", "negative", "positive")


def corpus_json(discussions):
    return json.dumps([discussion_to_dict(d) for d in discussions],
                      sort_keys=True)


class TestSpec:
    @pytest.mark.parametrize("bad", [
        dict(count=0),
        dict(count=1, min_units=0),
        dict(count=1, min_units=5, max_units=4),
        dict(count=1, max_candidates=-1),
        dict(count=1, labels=()),
        dict(count=1, labels=("positive", "positive")),
        dict(count=1, labels=("positive", "made-up")),
        dict(count=1, positive_band=(0.5, 0.4)),
        dict(count=1, positive_band=(-0.1, 0.4)),
        dict(count=1, kind="weird"),
    ])
    def test_rejects_bad_specs(self, bad):
        with pytest.raises(ValueError):
            CorpusSpec(**bad)

    def test_dict_round_trip(self):
        spec = CorpusSpec(count=5, max_units=7, min_units=3,
                          max_candidates=1, labels=("negative", "positive"),
                          seed=9, exact_labels=True,
                          positive_band=(0.2, 0.4), kind="plain")
        assert CorpusSpec.from_dict(spec.to_dict()) == spec

    def test_from_dict_rejects_unknown_fields(self):
        with pytest.raises(ValueError, match="unknown"):
            CorpusSpec.from_dict({"count": 3, "n_units": 4})


@pytest.fixture(scope="module")
def plain_corpus():
    spec = CorpusSpec(count=30, max_units=6, min_units=2, seed=1)
    return spec, generate(spec)


@pytest.fixture(scope="module")
def cou_corpus():
    spec = CorpusSpec(count=9, min_units=4, max_units=7, seed=5, kind="cou")
    return spec, generate_cou(spec)


class TestGenerate:
    @pytest.fixture
    def corpus(self, plain_corpus):
        return plain_corpus

    def test_deterministic(self, corpus):
        spec, discussions = corpus
        again = generate(CorpusSpec.from_dict(spec.to_dict()))
        assert corpus_json(discussions) == corpus_json(again)

    def test_seed_changes_output(self, corpus):
        spec, discussions = corpus
        other = generate(CorpusSpec(count=30, max_units=6, min_units=2,
                                    seed=2))
        assert corpus_json(discussions) != corpus_json(other)

    def test_schema_round_trip(self, corpus):
        from meetgist.corpus import discussion_from_dict
        _, discussions = corpus
        for d in discussions:
            again = discussion_from_dict(discussion_to_dict(d))
            assert discussion_to_dict(again) == discussion_to_dict(d)

    def test_sizes_respected(self, corpus):
        spec, discussions = corpus
        for d in discussions:
            assert spec.min_units <= len(d.units) <= spec.max_units
            prep = prepare(d)
            per_unit = {}
            for c in prep.candidates:
                per_unit[c.unit_id] = per_unit.get(c.unit_id, 0) + 1
            assert all(n <= spec.max_candidates for n in per_unit.values())

    def test_trees_are_valid(self, corpus):
        spec, discussions = corpus
        for d in discussions:
            tree = d.gold_tree
            assert set(tree.attachments) == {u.id for u in d.units[1:]}
            for child, parent in tree.attachments.items():
                assert 1 <= parent < child
            assert set(tree.relations) == set(tree.attachments)
            assert set(tree.relations.values()) <= set(spec.labels)

    def test_summaries_mark_selected_clusters(self, corpus):
        _, discussions = corpus
        for d in discussions:
            prep = prepare(d)
            vocab = summary_words(d.summaries)
            for cl in prep.clusters:
                labels = {m.label for m in cl.members}
                assert labels == {int(cl.head_lemma in vocab)}

    def test_positive_share_in_band(self, corpus):
        spec, discussions = corpus
        pos = total = 0
        for d in discussions:
            prep = prepare(d)
            labels = prep.gold_phrase_labels
            assert labels is not None
            pos += sum(labels)
            total += len(labels)
        lo, hi = spec.positive_band
        assert lo <= pos / total <= hi

    def test_relation_shares_bounded(self, corpus):
        spec, discussions = corpus
        counts = {}
        for d in discussions:
            for rel in d.gold_tree.relations.values():
                counts[rel] = counts.get(rel, 0) + 1
        total = sum(counts.values())
        shares = [counts.get(lab, 0) / total for lab in spec.labels]
        assert min(shares) >= 0.05
        assert max(shares) <= 0.6

    def test_structural_coverage(self, corpus):
        _, discussions = corpus
        types = set()
        das = set()
        pair_types = set()
        merged_ranges = 0
        for d in discussions:
            prep = prepare(d)
            for c in prep.candidates:
                types.add(c.phrase_type)
                merged_ranges += len(c.ranges) > 1
            das.update(u.dialogue_act for u in d.units)
            pair_types.update(p.pair_type for p in d.adjacency_pairs)
        assert types == set(PHRASE_TYPES)
        assert das == {"assess", "elicit", "inform", "suggest"}
        assert pair_types == {"agreement", "question-answer"}
        assert merged_ranges > 0

    def test_single_unit_corpus(self):
        discussions = generate(CorpusSpec(count=4, max_units=1, min_units=1,
                                          seed=3))
        for d in discussions:
            assert len(d.units) == 1
            assert d.gold_tree.attachments == {}

    def test_no_candidate_corpus(self):
        discussions = generate(CorpusSpec(count=3, max_candidates=0, seed=3))
        for d in discussions:
            assert prepare(d).candidates == ()

    def test_exact_labels_rejects_huge_instances(self):
        spec = CorpusSpec(count=1, max_units=12, min_units=12,
                          max_candidates=4, seed=0, exact_labels=True)
        with pytest.raises(CorpusError, match="exact labeling limit"):
            generate(spec)


class TestGenerateCou:
    @pytest.fixture
    def corpus(self, cou_corpus):
        return cou_corpus

    def test_deterministic(self, corpus):
        spec, discussions = corpus
        assert corpus_json(discussions) == corpus_json(generate_cou(spec))

    def test_generate_dispatches_on_kind(self, corpus):
        spec, discussions = corpus
        assert corpus_json(generate(spec)) == corpus_json(discussions)
        assert all(d.id.startswith("cou-") for d in discussions)

    def test_two_to_one_split(self, corpus):
        _, discussions = corpus
        labels = [d.cou_label for d in discussions]
        assert labels.count("inconsistent") == 3
        assert labels.count("consistent") == 6
        assert labels[:3] == ["inconsistent"] * 3

    def test_chain_attachments(self, corpus):
        _, discussions = corpus
        for d in discussions:
            n = len(d.units)
            assert d.gold_tree.attachments == {i: i - 1
                                               for i in range(2, n + 1)}

    def test_dialogue_act_and_relation_rule(self, corpus):
        _, discussions = corpus
        for d in discussions:
            consistent = d.cou_label == "consistent"
            for i, u in enumerate(d.units):
                want_da = "inform" if consistent or i % 2 == 0 else "elicit"
                assert u.dialogue_act == want_da
            for child, rel in d.gold_tree.relations.items():
                da = d.units[child - 1].dialogue_act
                assert rel == ("elaboration" if da == "inform"
                               else "negative")

    def test_salient_types_are_the_gold_phrases(self, corpus):
        _, discussions = corpus
        for d in discussions:
            prep = prepare(d)
            for cl in prep.clusters:
                want = int(cl.phrase_type in ("NP", "merged"))
                assert {m.label for m in cl.members} == {want}

    @pytest.mark.parametrize("bad,msg", [
        (dict(count=9, min_units=4, labels=("positive",)), "two relation"),
        (dict(count=9, min_units=3), "min_units"),
        (dict(count=2, min_units=4), "three"),
    ])
    def test_guards(self, bad, msg):
        base = dict(max_units=7, kind="cou")
        base.update(bad)
        with pytest.raises(CorpusError, match=msg):
            generate_cou(CorpusSpec(**base))
