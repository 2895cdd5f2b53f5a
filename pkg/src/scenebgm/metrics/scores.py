"""BLEU-1..4, METEOR (exact-match) and ROUGE-L on a 0-100 scale.

BLEU is the original unsmoothed definition: clipped modified n-gram
precision, geometric mean over orders 1..n and a brevity penalty against
the reference whose length is closest to the hypothesis (ties go to the
shorter one).  An order at which the hypothesis has no n-grams counts as
precision 1 only when the closest reference has none either; otherwise 0.

METEOR uses exact unigram matches only (no stemming, no synonyms), with
the alignment that maximizes matches and then minimizes chunks.

ROUGE-L is the LCS F-measure with recall weighted by ``beta``.
"""

from __future__ import annotations

import math
import string
from collections import Counter
from dataclasses import dataclass
from typing import Sequence

from scenebgm.metrics.kernels import align_chunks, lcs_length

PUNCTUATION = string.punctuation + "“”‘’«»—–…"
DEFAULT_BETA = 1.2
MAX_ORDER = 4


def tokenize(text: str) -> list[str]:
    tokens = []
    for raw in text.lower().split():
        tok = raw.strip(PUNCTUATION)
        if tok:
            tokens.append(tok)
    return tokens


def _as_tokens(text) -> list[str]:
    return tokenize(text) if isinstance(text, str) else list(text)


def _ids(*seqs):
    vocab: dict = {}
    return [[vocab.setdefault(tok, len(vocab)) for tok in seq] for seq in seqs]


def _ngrams(tokens, n) -> Counter:
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def closest_ref_length(hyp_len: int, ref_lens: Sequence[int]) -> int:
    return min(ref_lens, key=lambda r: (abs(r - hyp_len), r))


@dataclass
class BleuStats:
    """Sufficient statistics; they add up across sentences for corpus BLEU."""

    matches: list
    totals: list
    hyp_len: int
    ref_len: int
    # orders where both hypothesis and closest reference are too short
    vacuous: list

    def __add__(self, other: "BleuStats") -> "BleuStats":
        return BleuStats(
            matches=[a + b for a, b in zip(self.matches, other.matches)],
            totals=[a + b for a, b in zip(self.totals, other.totals)],
            hyp_len=self.hyp_len + other.hyp_len,
            ref_len=self.ref_len + other.ref_len,
            vacuous=[a and b for a, b in zip(self.vacuous, other.vacuous)],
        )


def bleu_stats(hypothesis, references, max_n: int = MAX_ORDER) -> BleuStats:
    hyp = _as_tokens(hypothesis)
    refs = [_as_tokens(r) for r in references]
    if not refs:
        raise ValueError("at least one reference is required")
    ref_len = closest_ref_length(len(hyp), [len(r) for r in refs])
    matches, totals, vacuous = [], [], []
    for n in range(1, max_n + 1):
        hyp_counts = _ngrams(hyp, n)
        max_ref: Counter = Counter()
        for ref in refs:
            max_ref |= _ngrams(ref, n)
        matches.append(sum(min(c, max_ref[g]) for g, c in hyp_counts.items()))
        totals.append(max(0, len(hyp) - n + 1))
        vacuous.append(len(hyp) < n and ref_len < n)
    return BleuStats(matches, totals, len(hyp), ref_len, vacuous)


class BleuScores(tuple):
    """Tuple of B-1..B-n with an ``empty_hypothesis`` flag."""

    empty_hypothesis: bool = False

    def __new__(cls, scores, empty_hypothesis=False):
        obj = super().__new__(cls, scores)
        obj.empty_hypothesis = empty_hypothesis
        return obj


def bleu_from_stats(stats: BleuStats, max_n: int = MAX_ORDER) -> BleuScores:
    if stats.hyp_len == 0:
        return BleuScores([0.0] * max_n, empty_hypothesis=True)
    bp = 1.0 if stats.hyp_len > stats.ref_len else math.exp(1.0 - stats.ref_len / stats.hyp_len)
    scores = []
    log_sum = 0.0
    dead = False
    for k in range(max_n):
        if stats.totals[k] == 0:
            precision = 1.0 if stats.vacuous[k] else 0.0
        else:
            precision = stats.matches[k] / stats.totals[k]
        if precision == 0.0:
            dead = True
        if dead:
            scores.append(0.0)
            continue
        log_sum += math.log(precision)
        scores.append(100.0 * bp * math.exp(log_sum / (k + 1)))
    return BleuScores(scores)


def bleu(hypothesis, references, max_n: int = MAX_ORDER) -> BleuScores:
    """Sentence BLEU-1..``max_n`` on a 0-100 scale."""
    if not 1 <= max_n <= MAX_ORDER:
        raise ValueError("max_n must be in 1..4")
    if isinstance(references, str):
        references = [references]
    return bleu_from_stats(bleu_stats(hypothesis, references, max_n), max_n)


def corpus_bleu(hypotheses, references_list, max_n: int = MAX_ORDER) -> BleuScores:
    """BLEU with n-gram statistics pooled over all pairs."""
    total = None
    for hyp, refs in zip(hypotheses, references_list, strict=True):
        stats = bleu_stats(hyp, [refs] if isinstance(refs, str) else refs, max_n)
        total = stats if total is None else total + stats
    if total is None:
        raise ValueError("no pairs")
    return bleu_from_stats(total, max_n)


def meteor_components(hypothesis, reference) -> tuple[int, int, int, int]:
    """Return ``(matches, chunks, hyp_len, ref_len)``."""
    hyp, ref = _as_tokens(hypothesis), _as_tokens(reference)
    if not hyp or not ref:
        return 0, 0, len(hyp), len(ref)
    hyp_ids, ref_ids = _ids(hyp, ref)
    matches, chunks = align_chunks(hyp_ids, ref_ids)
    return matches, chunks, len(hyp), len(ref)


def meteor(hypothesis, reference) -> float:
    matches, chunks, hyp_len, ref_len = meteor_components(hypothesis, reference)
    if matches == 0:
        return 0.0
    precision = matches / hyp_len
    recall = matches / ref_len
    f_mean = 10.0 * precision * recall / (recall + 9.0 * precision)
    penalty = 0.5 * (chunks / matches) ** 3
    return 100.0 * f_mean * (1.0 - penalty)


def lcs(a, b) -> int:
    a_ids, b_ids = _ids(_as_tokens(a), _as_tokens(b))
    return lcs_length(a_ids, b_ids)


def rouge_l(hypothesis, reference, beta: float = DEFAULT_BETA) -> float:
    hyp, ref = _as_tokens(hypothesis), _as_tokens(reference)
    if not hyp or not ref:
        return 0.0
    hyp_ids, ref_ids = _ids(hyp, ref)
    common = lcs_length(hyp_ids, ref_ids)
    if common == 0:
        return 0.0
    precision = common / len(hyp)
    recall = common / len(ref)
    b2 = beta * beta
    return 100.0 * (1 + b2) * precision * recall / (recall + b2 * precision)


def meteor_multi(hypothesis, references) -> float:
    return max(meteor(hypothesis, r) for r in references)


def rouge_l_multi(hypothesis, references, beta: float = DEFAULT_BETA) -> float:
    return max(rouge_l(hypothesis, r, beta) for r in references)
