"""Corpus-level code-switching metrics over token language tags.

Metrics (two languages, p_j = token fraction of language j):

* M-index: (1 - sum p_j^2) / ((k - 1) * sum p_j^2)
* language entropy: -sum p_j log2 p_j
* I-index: fraction of adjacent token pairs whose languages differ
* burstiness: (sigma - mu) / (sigma + mu) over monolingual span lengths,
  population standard deviation; undefined with fewer than two spans

Pairs and spans never cross utterance boundaries. Undefined values are
represented as ``None``.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .corpus import Lang, tag_tokens

METRICS = ("m_index", "lang_entropy", "i_index", "burstiness")
REPORT_COLUMNS = ("corpus", *METRICS, "n_tokens", "n_switches", "n_spans")

_TAG_CODES = {
    Lang.MATRIX: 0, Lang.EMBEDDED: 1,
    "m": 0, "e": 1, "MATRIX": 0, "EMBEDDED": 1, 0: 0, 1: 1,
}


def _code(tag):
    try:
        return _TAG_CODES[tag]
    except (KeyError, TypeError):
        raise ValueError(f"tag {tag!r} is not MATRIX or EMBEDDED; resolve it before computing metrics") from None


@dataclass
class TagStream:
    """Pooled tags (0 = matrix, 1 = embedded) with utterance start offsets."""

    tags: np.ndarray
    boundaries: list = field(default_factory=lambda: [0])

    def __post_init__(self):
        self.tags = np.asarray(self.tags, dtype=np.int8)
        b = list(self.boundaries)
        if b != sorted(b) or (b and (b[0] != 0 or b[-1] > len(self.tags))):
            raise ValueError("utterance boundaries must be sorted offsets starting at 0")

    @classmethod
    def from_utterances(cls, utterances):
        tags, bounds = [], []
        for utt in utterances:
            codes = [_code(t) for t in utt]
            if not codes:
                continue
            bounds.append(len(tags))
            tags.extend(codes)
        return cls(np.array(tags, dtype=np.int8), bounds or [0])

    def utterances(self):
        ends = list(self.boundaries[1:]) + [len(self.tags)]
        return [self.tags[s:e] for s, e in zip(self.boundaries, ends) if e > s]

    def __len__(self):
        return len(self.tags)


def _stream(stream):
    if isinstance(stream, TagStream):
        return stream
    return TagStream.from_utterances([list(stream)])


def _fractions(stream):
    s = _stream(stream)
    if len(s) == 0:
        raise ValueError("empty tag stream")
    p1 = float(s.tags.sum()) / len(s)
    return np.array([1.0 - p1, p1])


def m_index(stream):
    p = _fractions(stream)
    sq = float((p * p).sum())
    return (1.0 - sq) / ((len(p) - 1) * sq)


def language_entropy(stream):
    p = _fractions(stream)
    return float(-sum(x * math.log2(x) for x in p if x > 0))


def switch_counts(stream):
    """(switches, adjacent pairs), both counted within utterances only."""
    switches = pairs = 0
    for utt in _stream(stream).utterances():
        pairs += len(utt) - 1
        switches += int(np.count_nonzero(utt[1:] != utt[:-1]))
    return switches, pairs


def i_index(stream):
    switches, pairs = switch_counts(stream)
    if pairs == 0:
        raise ValueError("no adjacent token pairs within any utterance")
    return switches / pairs


def span_lengths(stream):
    spans = []
    for utt in _stream(stream).utterances():
        cuts = np.flatnonzero(utt[1:] != utt[:-1]) + 1
        edges = np.concatenate([[0], cuts, [len(utt)]])
        spans.extend(np.diff(edges).tolist())
    return spans


def burstiness(stream):
    spans = np.asarray(span_lengths(stream), dtype=float)
    if len(spans) < 2:
        return None
    mu, sigma = spans.mean(), spans.std()
    return float((sigma - mu) / (sigma + mu))


@dataclass
class CsMetricsReport:
    corpus: str
    m_index: float
    lang_entropy: float
    i_index: float | None
    burstiness: float | None
    n_tokens: int
    n_switches: int
    n_spans: int
    n_utterances: int = 0

    def row(self):
        return [self.corpus, *(_fmt(getattr(self, m)) for m in METRICS),
                self.n_tokens, self.n_switches, self.n_spans]

    def to_json(self):
        return json.dumps(asdict(self), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text):
        return cls(**json.loads(text))


def _fmt(x):
    return "UNDEFINED" if x is None else repr(float(x))


def report_for_stream(stream, name=""):
    s = _stream(stream)
    switches, pairs = switch_counts(s)
    spans = span_lengths(s)
    return CsMetricsReport(
        corpus=name,
        m_index=m_index(s),
        lang_entropy=language_entropy(s),
        i_index=switches / pairs if pairs else None,
        burstiness=burstiness(s),
        n_tokens=len(s),
        n_switches=switches,
        n_spans=len(spans),
        n_utterances=len(s.utterances()),
    )


def stream_from_records(records, vocab, default_lang=Lang.MATRIX):
    """Pool record tags, dropping SPECIAL ids and resolving SHARED to ``default_lang``."""
    utterances = []
    for rec in records:
        tags = tag_tokens(rec.ids, vocab, default_lang)
        utterances.append([t for t in tags if t is not Lang.SPECIAL])
    return TagStream.from_utterances(utterances)


def corpus_report(records, vocab, default_lang=Lang.MATRIX, name=""):
    stream = stream_from_records(records, vocab, default_lang)
    if len(stream) == 0:
        raise ValueError("corpus has no non-special tokens")
    return report_for_stream(stream, name)


@dataclass
class ComparisonRow:
    report: CsMetricsReport
    distances: dict
    ranks: dict
    burstiness_excluded: bool = False


def compare_reports(candidates, reference):
    """Absolute distance of each candidate to ``reference`` per metric, plus per-metric ranks.

    ``candidates`` maps names to reports (order kept). Rank 1 is closest; an
    undefined value on either side leaves that distance ``None`` and flags it.
    """
    if not candidates:
        raise ValueError("no candidate reports to compare")
    rows = []
    for name, rep in candidates.items():
        if not rep.corpus:
            rep.corpus = name
        dist = {}
        for m in METRICS:
            a, b = getattr(rep, m), getattr(reference, m)
            dist[m] = None if a is None or b is None else abs(a - b)
        rows.append(ComparisonRow(rep, dist, {}, burstiness_excluded=dist["burstiness"] is None))
    for m in METRICS:
        defined = sorted((r.distances[m], k) for k, r in enumerate(rows) if r.distances[m] is not None)
        for rank, (_, k) in enumerate(defined, start=1):
            rows[k].ranks[m] = rank
    return rows


def write_reports_csv(path, reports):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(REPORT_COLUMNS)
        for rep in reports:
            w.writerow(rep.row())


def write_comparison_csv(path, rows, reference):
    """Reference row first, then one row per candidate, with a ``distance_`` column per metric."""
    header = [*REPORT_COLUMNS, *(f"distance_{m}" for m in METRICS), *(f"rank_{m}" for m in METRICS)]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        ref = reference.row()
        w.writerow([*ref, *(_fmt(0.0 if getattr(reference, m) is not None else None) for m in METRICS),
                    *([""] * len(METRICS))])
        for r in rows:
            w.writerow([*r.report.row(), *(_fmt(r.distances[m]) for m in METRICS),
                        *(r.ranks.get(m, "") for m in METRICS)])
