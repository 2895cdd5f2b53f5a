"""Text-overlap metrics and the score table."""

from scenebgm.metrics.kernels import IMPLEMENTATION
from scenebgm.metrics.report import (
    CORPUS,
    SENTENCE_MEAN,
    EvalPair,
    EvalReport,
    evaluate_corpus,
    evaluate_systems,
)
from scenebgm.metrics.scores import bleu, corpus_bleu, meteor, rouge_l, tokenize

__all__ = [
    "CORPUS", "IMPLEMENTATION", "SENTENCE_MEAN", "EvalPair", "EvalReport", "bleu",
    "corpus_bleu", "evaluate_corpus", "evaluate_systems", "meteor", "rouge_l", "tokenize",
]
