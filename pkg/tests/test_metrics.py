import itertools
import json
import math
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import FIXTURES, random_text
from scenebgm.metrics.report import EvalPair, evaluate_corpus
from scenebgm.metrics.scores import (
    bleu,
    bleu_stats,
    closest_ref_length,
    corpus_bleu,
    lcs,
    meteor,
    meteor_components,
    meteor_multi,
    rouge_l,
    rouge_l_multi,
    tokenize,
)

CASES = json.loads((FIXTURES / "metric_cases.json").read_text())


def score_case(case):
    hyp, refs = case["hypothesis"], case["references"]
    if case["metric"] == "bleu":
        return bleu(hyp, refs, case["order"])[case["order"] - 1]
    if case["metric"] == "meteor":
        return meteor_multi(hyp, refs)
    return rouge_l_multi(hyp, refs)


def brute_lcs(a, b):
    """Plain recursion, no table: the definition of LCS."""
    if not a or not b:
        return 0
    if a[0] == b[0]:
        return 1 + brute_lcs(a[1:], b[1:])
    return max(brute_lcs(a[1:], b), brute_lcs(a, b[1:]))


def brute_alignment(hyp, ref):
    """(max matches, min chunks among max-match alignments) by enumeration."""
    best = (0, 0)

    def walk(i, used, pairs):
        nonlocal best
        if i == len(hyp):
            m = len(pairs)
            if m == 0:
                return
            chunks = sum(1 for k, (a, b) in enumerate(pairs)
                         if k == 0 or a != pairs[k - 1][0] + 1 or b != pairs[k - 1][1] + 1)
            if m > best[0] or (m == best[0] and chunks < best[1]):
                best = (m, chunks)
            return
        walk(i + 1, used, pairs)
        for j, w in enumerate(ref):
            if w == hyp[i] and j not in used:
                walk(i + 1, used | {j}, pairs + [(i, j)])

    walk(0, frozenset(), [])
    return best


# ---------------------------------------------------------------------------
# hand-computed oracle fixture

def test_fixture_has_enough_cases():
    assert len(CASES) >= 10
    assert {c["metric"] for c in CASES} == {"bleu", "meteor", "rouge_l"}


@pytest.mark.parametrize("case", CASES, ids=[c["id"] for c in CASES])
def test_hand_computed_case(case):
    expected = eval(case["derivation"], {"math": math})  # the derivation is the oracle
    assert expected == pytest.approx(case["expected"], abs=1e-6)
    assert score_case(case) == pytest.approx(case["expected"], abs=1e-4)


# ---------------------------------------------------------------------------
# tokenizer

@pytest.mark.parametrize("text,tokens", [
    ("The Cat sat.", ["the", "cat", "sat"]),
    ("", []),
    ("don't  stop", ["don't", "stop"]),
    ("“Quoted”, — dash …", ["quoted", "dash"]),
    ("  ...  ", []),
])
def test_tokenize(text, tokens):
    assert tokenize(text) == tokens


# ---------------------------------------------------------------------------
# BLEU

def test_bleu_order_validation():
    with pytest.raises(ValueError):
        bleu("a", ["a"], 5)
    with pytest.raises(ValueError):
        bleu("a", [], 1)


def test_empty_hypothesis_is_zero_and_flagged():
    scores = bleu("", ["a b"])
    assert list(scores) == [0.0] * 4
    assert scores.empty_hypothesis


def test_short_identity_uses_vacuous_orders():
    assert list(bleu("hello there", ["hello there"])) == [100.0] * 4
    # the reference is long enough for bigrams but the hypothesis is not
    assert bleu("hello", ["hello there"], 2)[1] == 0.0


def test_closest_reference_tie_goes_shorter():
    assert closest_ref_length(3, [4, 2]) == 2
    assert closest_ref_length(3, [5, 3, 1]) == 3


def test_sentence_mean_matches_per_pair_mean():
    rng = random.Random(10)
    pairs = [EvalPair(str(i), random_text(rng), (random_text(rng), random_text(rng))) for i in range(10)]
    report = evaluate_corpus(pairs)
    for k, key in enumerate(("B1", "B2", "B3", "B4")):
        mean = sum(bleu(p.hypothesis, list(p.references))[k] for p in pairs) / len(pairs)
        assert report.systems["system"][key] == pytest.approx(mean, abs=1e-9)


def test_corpus_bleu_pools_statistics():
    hyps = ["the cat", "a dog ran far"]
    refs = [["the cat sat"], ["a dog ran"]]
    # pooled by hand: p1 = (2+3)/(2+4), c = 6, r = 3+3 = 6, BP = 1
    assert corpus_bleu(hyps, refs, 1)[0] == pytest.approx(100 * 5 / 6)
    stats = bleu_stats(hyps[0], refs[0]) + bleu_stats(hyps[1], refs[1])
    assert (stats.hyp_len, stats.ref_len) == (6, 6)


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**32))
def test_scores_are_bounded(seed):
    rng = random.Random(seed)
    hyp, refs = random_text(rng), [random_text(rng) for _ in range(rng.randint(1, 3))]
    for value in [*bleu(hyp, refs), meteor_multi(hyp, refs), rouge_l_multi(hyp, refs)]:
        assert 0.0 <= value <= 100.0 + 1e-9


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**32))
def test_appending_unmatched_token_never_raises_b1(seed):
    rng = random.Random(seed)
    ref = random_text(rng, max_len=10)
    hyp = random_text(rng, max_len=10)
    if len(tokenize(hyp)) < len(tokenize(ref)):
        hyp = hyp + " " + ref  # make BP = 1 before and after
    longer = hyp + " zzz"
    assert bleu(longer, [ref], 1)[0] <= bleu(hyp, [ref], 1)[0] + 1e-9


# ---------------------------------------------------------------------------
# METEOR

@pytest.mark.parametrize("n", [1, 2, 5, 17])
def test_meteor_identity_closed_form(n):
    text = " ".join(f"w{i}" for i in range(n))
    assert meteor(text, text) == pytest.approx(100 * (1 - 0.5 / n ** 3), abs=1e-9)


def test_meteor_disjoint():
    assert meteor("red sky", "blue sea") == 0.0
    assert meteor("", "blue sea") == 0.0


def test_meteor_matches_brute_force_alignment():
    rng = random.Random(2)
    for _ in range(400):
        hyp = [rng.choice("abc") for _ in range(rng.randint(1, 7))]
        ref = [rng.choice("abc") for _ in range(rng.randint(1, 7))]
        m, chunks, _, _ = meteor_components(" ".join(hyp), " ".join(ref))
        assert (m, chunks) == brute_alignment(hyp, ref), (hyp, ref)


@settings(max_examples=150, deadline=None)
@given(st.integers(0, 2**32))
def test_meteor_identity_is_maximal(seed):
    rng = random.Random(seed)
    x, y = random_text(rng), random_text(rng)
    assert meteor(x, x) >= meteor(x, y) - 1e-9


# ---------------------------------------------------------------------------
# ROUGE-L and LCS

def test_rouge_l_empty_and_beta():
    assert rouge_l("", "a") == 0.0
    assert rouge_l("a b", "") == 0.0
    # beta = 1 is the plain F1 of LCS precision and recall
    assert rouge_l("the cat", "the cat sat", beta=1.0) == pytest.approx(100 * 2 * (2 / 3) / (1 + 2 / 3))


def test_lcs_exhaustive_against_recursion():
    alphabet = "abc"
    seqs = [s for n in range(0, 9) for s in itertools.product(alphabet, repeat=n)]
    rng = random.Random(0)
    # every sequence is checked against a random partner of every length
    for a in seqs:
        for n in range(0, 9):
            b = tuple(rng.choice(alphabet) for _ in range(n))
            assert lcs(list(a), list(b)) == brute_lcs(a, b), (a, b)


def test_lcs_exhaustive_all_pairs_short():
    seqs = [s for n in range(0, 5) for s in itertools.product("abc", repeat=n)]
    for a in seqs:
        for b in seqs:
            assert lcs(list(a), list(b)) == brute_lcs(a, b)
