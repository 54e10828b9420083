"""Shared corpus builders: small hand-written discussions with known
candidates, clusters, trees, and summary-induced labels."""

import pytest

from meetgist.corpus import discussion_from_dict


def token(surface, pos="NN", stop=False, lemma=None):
    return {"surface": surface, "lemma": lemma or surface, "pos": pos,
            "stop": stop}


def unit(uid, speaker, tokens, spans=(), da="inform", t_start=0.0,
         t_end=1.0, deps=()):
    return {"id": uid, "speaker": speaker, "tokens": list(tokens),
            "spans": list(spans), "da": da, "t_start": t_start,
            "t_end": t_end, "deps": list(deps)}


def span(start, end, label, head, parent=None):
    return {"start": start, "end": end, "label": label, "head": head,
            "parent": parent}


def tiny_dict():
    """Three units, two speakers, one adjacency pair, gold tree and summary.

    Candidates (textual order): a merged verb+NP headed by "report" in unit
    1, an NP "report" and an ADJP "good" in unit 2, and an ADJP "good" in
    unit 3. The two ADJPs share one cluster; the summary marks exactly the
    two "report" candidates.
    """

    return {
        "id": "tiny",
        "units": [
            unit(1, "a",
                 [token("we", "PRP", True), token("need", "VB"),
                  token("the", "DT", True), token("budget"),
                  token("report")],
                 spans=[span(2, 5, "NP", 4)],
                 deps=[{"head": 1, "dep": 4, "rel": "dobj"}],
                 da="inform", t_start=0.0, t_end=2.0),
            unit(2, "b",
                 [token("report"), token("looks", "VBZ"),
                  token("good", "JJ")],
                 spans=[span(0, 1, "NP", 0), span(2, 3, "ADJP", 2)],
                 da="assess", t_start=2.0, t_end=5.0),
            unit(3, "a",
                 [token("sounds", "VBZ"), token("good", "JJ"),
                  token("to", "TO", True), token("me", "PRP", True)],
                 spans=[span(1, 2, "ADJP", 1)],
                 da="assess", t_start=5.0, t_end=9.0),
        ],
        "adjacency_pairs": [{"src": 1, "tgt": 3, "type": "agreement"}],
        "gold_tree": {"attach": {"2": 1, "3": 1},
                      "rel": {"2": "elaboration", "3": "positive"}},
        "summaries": {"abstractive": ["the budget report was approved"],
                      "participant": [], "extractive_ids": [1]},
        "cou": "consistent",
    }


def chain_dict():
    """Three units in a chain (unit 3 under unit 2), one NP per unit."""

    return {
        "id": "chain",
        "units": [
            unit(1, "a", [token("plan")], spans=[span(0, 1, "NP", 0)],
                 da="inform", t_start=0.0, t_end=1.0),
            unit(2, "a", [token("budget"), token("talk")],
                 spans=[span(0, 2, "NP", 1)],
                 da="inform", t_start=1.0, t_end=2.0),
            unit(3, "b", [token("agree", "VB"), token("it", "PRP", True)],
                 spans=[span(0, 2, "VP", 0)],
                 da="assess", t_start=2.0, t_end=4.0),
        ],
        "adjacency_pairs": [],
        "gold_tree": {"attach": {"2": 1, "3": 2},
                      "rel": {"2": "elaboration", "3": "positive"}},
        "summaries": {"abstractive": ["we agree on the plan"],
                      "participant": [], "extractive_ids": [1, 3]},
        "cou": "inconsistent",
    }


@pytest.fixture
def tiny():
    return discussion_from_dict(tiny_dict())


@pytest.fixture
def chain():
    return discussion_from_dict(chain_dict())


@pytest.fixture
def pair_corpus(tiny, chain):
    return [tiny, chain]
