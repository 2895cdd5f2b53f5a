"""Corpus evaluation and the six-column score table."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from scenebgm.errors import NoPairs
from scenebgm.metrics.scores import (
    DEFAULT_BETA,
    bleu,
    corpus_bleu,
    meteor_multi,
    rouge_l_multi,
)

SENTENCE_MEAN = "sentence"
CORPUS = "corpus"
COLUMNS = ("B-1", "B-2", "B-3", "B-4", "METEOR", "R-L")
SCORE_KEYS = ("B1", "B2", "B3", "B4", "METEOR", "RL")


@dataclass(frozen=True)
class EvalPair:
    id: str
    hypothesis: str
    references: tuple

    def __post_init__(self):
        if not self.references:
            raise ValueError(f"pair {self.id!r} has no references")


@dataclass
class EvalReport:
    systems: dict = field(default_factory=dict)  # name -> {B1..B4, METEOR, RL}
    n_pairs: int = 0
    aggregation: str = SENTENCE_MEAN
    empty_hypotheses: dict = field(default_factory=dict)
    per_pair: dict = field(default_factory=dict, repr=False)

    def add(self, other: "EvalReport") -> "EvalReport":
        if other.n_pairs != self.n_pairs and self.systems:
            raise ValueError("systems were scored on different numbers of pairs")
        self.systems.update(other.systems)
        self.empty_hypotheses.update(other.empty_hypotheses)
        self.per_pair.update(other.per_pair)
        self.n_pairs = other.n_pairs
        self.aggregation = other.aggregation
        return self

    def best(self) -> dict:
        """Column key -> names of the systems holding the column maximum."""
        out = {}
        for key in SCORE_KEYS:
            top = max(round(s[key], 2) for s in self.systems.values())
            out[key] = [name for name, s in self.systems.items() if round(s[key], 2) == top]
        return out

    def rank(self, key: str = "B1") -> list:
        return sorted(self.systems, key=lambda name: -self.systems[name][key])

    def rows(self):
        for name, scores in self.systems.items():
            yield name, [scores[k] for k in SCORE_KEYS]

    def to_text(self, mark_best: bool = True) -> str:
        best = self.best() if mark_best and len(self.systems) > 1 else {}
        cells = []
        for name, values in self.rows():
            row = [name]
            for key, value in zip(SCORE_KEYS, values):
                mark = "*" if name in best.get(key, ()) else ""
                row.append(f"{value:.2f}{mark}")
            cells.append(row)
        header = ["Model", *COLUMNS]
        widths = [max(len(r[i]) for r in [header, *cells]) for i in range(len(header))]
        lines = [" | ".join(h.ljust(w) if i == 0 else h.rjust(w) for i, (h, w) in enumerate(zip(header, widths)))]
        lines.append("-+-".join("-" * w for w in widths))
        for row in cells:
            lines.append(" | ".join(c.ljust(w) if i == 0 else c.rjust(w)
                                    for i, (c, w) in enumerate(zip(row, widths))))
        return "\n".join(lines) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["Model", *COLUMNS])
        for name, values in self.rows():
            writer.writerow([name, *(f"{v:.2f}" for v in values)])
        return buf.getvalue()

    def to_latex(self) -> str:
        best = self.best() if len(self.systems) > 1 else {}
        header = "Model & " + " & ".join(c + r"$\uparrow$" for c in COLUMNS) + r" \\ \midrule"
        body = []
        for name, values in self.rows():
            cells = []
            for key, value in zip(SCORE_KEYS, values):
                text = f"{value:.2f}"
                cells.append(rf"\textbf{{{text}}}" if name in best.get(key, ()) else text)
            body.append(f"{name} & " + " & ".join(cells) + r" \\")
        return "\n".join([
            r"\begin{tabular}{@{}c|cccccc@{}}",
            r"\toprule",
            header,
            *body,
            r"\bottomrule",
            r"\end{tabular}",
        ]) + "\n"

    def to_obj(self) -> dict:
        return {
            "aggregation": self.aggregation,
            "n_pairs": self.n_pairs,
            "columns": list(COLUMNS),
            "systems": {name: {col: scores[key] for col, key in zip(COLUMNS, SCORE_KEYS)}
                        for name, scores in self.systems.items()},
            "empty_hypotheses": self.empty_hypotheses,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_obj(), indent=2, sort_keys=False)

    def render(self, fmt: str) -> str:
        if fmt == "table":
            return self.to_text()
        if fmt == "csv":
            return self.to_csv()
        if fmt == "json":
            return self.to_json() + "\n"
        if fmt == "latex":
            return self.to_latex()
        raise ValueError(f"unknown format {fmt!r}")


def score_pair(pair: EvalPair, beta: float = DEFAULT_BETA) -> dict:
    b = bleu(pair.hypothesis, list(pair.references), 4)
    return {
        "B1": b[0], "B2": b[1], "B3": b[2], "B4": b[3],
        "METEOR": meteor_multi(pair.hypothesis, pair.references),
        "RL": rouge_l_multi(pair.hypothesis, pair.references, beta),
        "empty": b.empty_hypothesis,
    }


def evaluate_corpus(pairs: Sequence[EvalPair], aggregation: str = SENTENCE_MEAN,
                    system: str = "system", beta: float = DEFAULT_BETA) -> EvalReport:
    """Score one system over ``pairs``.

    ``sentence`` averages per-pair scores; ``corpus`` pools BLEU n-gram
    statistics across pairs.  METEOR and ROUGE-L are per-pair means in both.
    """
    if not pairs:
        raise NoPairs("nothing to evaluate")
    if aggregation not in (SENTENCE_MEAN, CORPUS):
        raise ValueError(f"aggregation must be {SENTENCE_MEAN!r} or {CORPUS!r}")
    per_pair = [score_pair(p, beta) for p in pairs]
    n = len(per_pair)
    scores = {key: sum(s[key] for s in per_pair) / n for key in SCORE_KEYS}
    if aggregation == CORPUS:
        pooled = corpus_bleu([p.hypothesis for p in pairs], [list(p.references) for p in pairs], 4)
        scores.update(B1=pooled[0], B2=pooled[1], B3=pooled[2], B4=pooled[3])
    return EvalReport(
        systems={system: scores},
        n_pairs=n,
        aggregation=aggregation,
        empty_hypotheses={system: sum(s["empty"] for s in per_pair)},
        per_pair={system: per_pair},
    )


def evaluate_systems(systems: Mapping[str, Sequence[EvalPair]], aggregation: str = SENTENCE_MEAN,
                     beta: float = DEFAULT_BETA) -> EvalReport:
    report = EvalReport(aggregation=aggregation)
    for name, pairs in systems.items():
        report.add(evaluate_corpus(pairs, aggregation, name, beta))
    return report


def dominates(report: EvalReport, a: str, b: str, key: str) -> bool:
    """True when system ``a`` scores at least ``b`` on every pair for ``key``."""
    return all(x[key] >= y[key] for x, y in zip(report.per_pair[a], report.per_pair[b], strict=True))


# ---------------------------------------------------------------------------
# Input formats

def _read_lines(path) -> list[str]:
    # "\n" only, so a U+2028 inside a hypothesis does not split it in two
    lines = Path(path).read_text(encoding="utf-8").split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    return [line.rstrip("\r") for line in lines]


def load_jsonl_pairs(path) -> list[EvalPair]:
    pairs = []
    for n, line in enumerate(_read_lines(path)):
        if not line.strip():
            continue
        obj = json.loads(line)
        refs = obj.get("references")
        if refs is None and "reference" in obj:
            refs = [obj["reference"]]
        pairs.append(EvalPair(str(obj.get("id", n)), obj["hypothesis"], tuple(refs or ())))
    return pairs


def load_aligned_pairs(hyp_path, ref_paths: Iterable) -> list[EvalPair]:
    """One hypothesis per line, with one or more aligned reference files."""
    hyps = _read_lines(hyp_path)
    ref_sets = [_read_lines(p) for p in ref_paths]
    if not ref_sets:
        raise ValueError("at least one reference file is required")
    for refs in ref_sets:
        if len(refs) != len(hyps):
            raise ValueError(f"{hyp_path} has {len(hyps)} lines but a reference file has {len(refs)}")
    return [EvalPair(str(i), h, tuple(r[i] for r in ref_sets)) for i, h in enumerate(hyps)]
