"""Corpus ingestion, the partitioned vocabulary, and synthetic bilingual corpora."""
from __future__ import annotations

import dataclasses
import enum
import json
import os
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, InvariantError

PAD, BOS, EOS, UNK = 0, 1, 2, 3
SPECIAL_TOKENS = ("<pad>", "<bos>", "<eos>", "<unk>")
DEFAULT_MAX_LEN = 45
VOCAB_HEADER = "CSVOCAB 1"


class Lang(enum.Enum):
    MATRIX = "MATRIX"
    EMBEDDED = "EMBEDDED"
    SHARED = "SHARED"
    SPECIAL = "SPECIAL"


class Origin(enum.Enum):
    MATRIX_CORPUS = "MATRIX_CORPUS"
    EMBEDDED_CORPUS = "EMBEDDED_CORPUS"
    REAL_CS = "REAL_CS"
    GENERATED = "GENERATED"


@dataclass
class Vocabulary:
    token_to_id: dict
    id_to_token: list
    lang_of_id: list

    @property
    def size_v(self):
        return len(self.id_to_token)

    def __len__(self):
        return self.size_v

    @property
    def specials(self):
        return {"PAD": PAD, "BOS": BOS, "EOS": EOS, "UNK": UNK}

    def lang(self, token_or_id):
        if isinstance(token_or_id, str):
            token_or_id = self.token_to_id.get(token_or_id, UNK)
        return self.lang_of_id[token_or_id]

    def ids_with(self, lang):
        return [i for i, tag in enumerate(self.lang_of_id) if tag is lang]

    def lang_mask(self, lang):
        """Boolean array over ids, true where the id carries ``lang``."""
        return np.array([tag is lang for tag in self.lang_of_id])

    def save(self, path):
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(VOCAB_HEADER + "\n")
            for i, (tok, tag) in enumerate(zip(self.id_to_token, self.lang_of_id)):
                fh.write(f"{i}\t{tok}\t{tag.value}\n")

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as fh:
            lines = fh.read().split("\n")
        if not lines or lines[0] != VOCAB_HEADER:
            raise ConfigurationError(f"{path}: missing '{VOCAB_HEADER}' header", code="BAD_VOCAB")
        id_to_token, lang_of_id = [], []
        for n, line in enumerate(lines[1:], start=2):
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 3 or int(parts[0]) != len(id_to_token):
                raise ConfigurationError(f"{path}:{n}: malformed vocabulary line", code="BAD_VOCAB")
            id_to_token.append(parts[1])
            lang_of_id.append(Lang(parts[2]))
        vocab = cls({t: i for i, t in enumerate(id_to_token)}, id_to_token, lang_of_id)
        vocab.validate()
        return vocab

    def validate(self):
        if tuple(self.id_to_token[:4]) != SPECIAL_TOKENS:
            raise InvariantError("first four ids must be PAD, BOS, EOS, UNK")
        if any(self.lang_of_id[i] is not Lang.SPECIAL for i in range(4)):
            raise InvariantError("special ids must be tagged SPECIAL")
        if len(self.token_to_id) != len(self.id_to_token):
            raise InvariantError("duplicate tokens in vocabulary")
        for i, tok in enumerate(self.id_to_token):
            if self.token_to_id[tok] != i:
                raise InvariantError(f"token_to_id and id_to_token disagree at {i}")


def tokenize(line):
    return line.split()


def build_vocabulary(matrix_lines, embedded_lines, cs_lines=(), min_count=1):
    """Build the shared vocabulary with a per-token language partition.

    Tokens seen in both monolingual corpora are SHARED. Tokens that only
    occur in ``cs_lines`` take the partition of whichever monolingual corpus
    contains them, else SHARED. Ids follow first-occurrence order over
    matrix, embedded, then code-switched lines.
    """
    matrix_lines, embedded_lines = list(matrix_lines), list(embedded_lines)
    if not any(line.strip() for line in matrix_lines):
        raise ConfigurationError("matrix corpus is empty", code="EMPTY_CORPUS")
    if not any(line.strip() for line in embedded_lines):
        raise ConfigurationError("embedded corpus is empty", code="EMPTY_CORPUS")
    counts = Counter()
    in_m, in_e = set(), set()
    order = {}
    for source, seen in ((matrix_lines, in_m), (embedded_lines, in_e), (cs_lines, None)):
        for line in source:
            for tok in tokenize(line):
                counts[tok] += 1
                order.setdefault(tok, len(order))
                if seen is not None:
                    seen.add(tok)
    id_to_token = list(SPECIAL_TOKENS)
    lang_of_id = [Lang.SPECIAL] * 4
    for tok in sorted(order, key=order.__getitem__):
        if counts[tok] < min_count or tok in SPECIAL_TOKENS:
            continue
        if tok in in_m and tok not in in_e:
            tag = Lang.MATRIX
        elif tok in in_e and tok not in in_m:
            tag = Lang.EMBEDDED
        else:
            tag = Lang.SHARED
        id_to_token.append(tok)
        lang_of_id.append(tag)
    return Vocabulary({t: i for i, t in enumerate(id_to_token)}, id_to_token, lang_of_id)


@dataclass
class SentenceRecord:
    ids: list
    tags: list
    origin: Origin = Origin.MATRIX_CORPUS

    def __len__(self):
        return len(self.ids)

    @property
    def content_ids(self):
        return [i for i in self.ids if i not in (PAD, BOS, EOS)]


def tag_tokens(ids, vocab, default_lang=Lang.MATRIX):
    """Per-token language tags from the vocabulary partition.

    SHARED resolves to ``default_lang``; special ids keep the SPECIAL tag so
    callers can drop them before computing metrics.
    """
    tags = []
    for i in ids:
        i = int(i)
        if i < 0 or i >= vocab.size_v:
            raise InvariantError(f"token id {i} outside vocabulary of size {vocab.size_v}")
        tag = vocab.lang_of_id[i]
        tags.append(default_lang if tag is Lang.SHARED else tag)
    return tags


def encode_sentence(line, vocab, max_len=DEFAULT_MAX_LEN, origin=Origin.MATRIX_CORPUS,
                    default_lang=Lang.MATRIX):
    if max_len < 2:
        raise ConfigurationError("max_len must be at least 2")
    body = [vocab.token_to_id.get(tok, UNK) for tok in tokenize(line)][: max_len - 2]
    ids = [BOS, *body, EOS]
    return SentenceRecord(ids, tag_tokens(ids, vocab, default_lang), origin)


def record_from_ids(ids, vocab, origin=Origin.GENERATED, default_lang=Lang.MATRIX):
    ids = [int(i) for i in ids]
    return SentenceRecord(ids, tag_tokens(ids, vocab, default_lang), origin)


def decode_to_text(rec_or_ids, vocab):
    ids = rec_or_ids.ids if isinstance(rec_or_ids, SentenceRecord) else rec_or_ids
    return " ".join(vocab.id_to_token[i] for i in ids if i not in (PAD, BOS, EOS))


def read_lines(path):
    with open(path, encoding="utf-8") as fh:
        return [line.rstrip("\n") for line in fh]


def write_lines(path, lines):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for line in lines:
            fh.write(line + "\n")


def load_corpus(path, vocab, max_len=DEFAULT_MAX_LEN, origin=Origin.MATRIX_CORPUS):
    """Encode every nonblank line of a one-sentence-per-line file, keeping file order."""
    return [encode_sentence(line, vocab, max_len, origin) for line in read_lines(path) if line.strip()]


@dataclass
class CorpusSet:
    matrix: list
    embedded: list
    real_cs: list
    negatives: list = field(default_factory=list)


# synthetic corpora

CATEGORIES = ("DET", "NOUN", "VERB", "ADJ", "ADV")
_CATEGORY_SHARE = {"DET": 0.1, "NOUN": 0.4, "VERB": 0.25, "ADJ": 0.15, "ADV": 0.1}

# subject-verb-object frames for the matrix language
DEFAULT_MATRIX_TEMPLATES = (
    ("DET", "NOUN", "VERB", "DET", "NOUN"),
    ("DET", "ADJ", "NOUN", "VERB", "DET", "NOUN"),
    ("DET", "NOUN", "VERB", "DET", "ADJ", "NOUN", "ADV"),
    ("NOUN", "VERB", "NOUN", "ADV"),
)
# subject-object-verb frames for the embedded language
DEFAULT_EMBEDDED_TEMPLATES = (
    ("DET", "NOUN", "DET", "NOUN", "VERB"),
    ("DET", "ADJ", "NOUN", "DET", "NOUN", "VERB"),
    ("ADV", "DET", "NOUN", "DET", "ADJ", "NOUN", "VERB"),
    ("NOUN", "NOUN", "VERB", "ADV"),
)


@dataclass
class SynthConfig:
    vocab_size_m: int = 40
    vocab_size_e: int = 40
    templates: dict = field(default_factory=lambda: {
        "matrix": [list(t) for t in DEFAULT_MATRIX_TEMPLATES],
        "embedded": [list(t) for t in DEFAULT_EMBEDDED_TEMPLATES],
    })
    p_sw: float = 0.3
    seed: int = 0
    cs_ratio: float = 0.25
    words_m: list | None = None
    words_e: list | None = None

    @classmethod
    def from_json(cls, text):
        raw = json.loads(text)
        unknown = set(raw) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigurationError(f"unknown synth config keys: {sorted(unknown)}")
        return cls(**raw)

    def to_json(self):
        return json.dumps(self.__dict__, indent=2, sort_keys=True)


def _lexicon(prefix, size, words):
    """Split a word list (or generated ``<prefix><cat><n>`` words) across categories."""
    if words is None:
        if size < 30:
            raise ConfigurationError("synthetic vocabularies need at least 30 tokens each")
        counts = {c: max(2, round(size * _CATEGORY_SHARE[c])) for c in CATEGORIES}
        counts["NOUN"] += size - sum(counts.values())
        return {c: [f"{prefix}{c.lower()}{k}" for k in range(counts[c])] for c in CATEGORIES}
    if len(words) < 30:
        raise ConfigurationError("synthetic vocabularies need at least 30 tokens each")
    lex = {c: [] for c in CATEGORIES}
    for k, w in enumerate(words):
        lex[CATEGORIES[k % len(CATEGORIES)]].append(w)
    return lex


def synth_corpora(seed, n_sentences, cfg=None):
    """Deterministic toy bilingual corpora plus a lexically-mixed CS corpus.

    Matrix sentences follow SVO-style frames and embedded sentences SOV-style
    frames over disjoint lexicons. Code-switched sentences start from a matrix
    frame and replace each slot word, with probability ``p_sw``, by the
    embedded word with the same category and index.
    """
    cfg = dataclasses.replace(cfg or SynthConfig(), seed=seed)
    if not 0.0 <= cfg.p_sw <= 1.0:
        raise ConfigurationError("p_sw must lie in [0, 1]")
    lex_m = _lexicon("m", cfg.vocab_size_m, cfg.words_m)
    lex_e = _lexicon("e", cfg.vocab_size_e, cfg.words_e)
    all_m = {w for ws in lex_m.values() for w in ws}
    all_e = {w for ws in lex_e.values() for w in ws}
    if all_m & all_e:
        raise ConfigurationError(f"toy vocabularies overlap: {sorted(all_m & all_e)[:5]}",
                                 code="OVERLAPPING_VOCAB")
    for name in ("matrix", "embedded"):
        frames = cfg.templates.get(name)
        if not frames or any(c not in CATEGORIES for t in frames for c in t):
            raise ConfigurationError(f"bad {name} templates")

    rng = np.random.default_rng(seed)

    def sentence(frames, lex):
        frame = frames[rng.integers(len(frames))]
        slots = [(c, int(rng.integers(len(lex[c])))) for c in frame]
        return slots

    def render(slots, lex):
        return " ".join(lex[c][k] for c, k in slots)

    matrix = [render(sentence(cfg.templates["matrix"], lex_m), lex_m) for _ in range(n_sentences)]
    embedded = [render(sentence(cfg.templates["embedded"], lex_e), lex_e) for _ in range(n_sentences)]
    n_cs = max(1, round(n_sentences * cfg.cs_ratio))
    real_cs = []
    for _ in range(n_cs):
        slots = sentence(cfg.templates["matrix"], lex_m)
        words = []
        for c, k in slots:
            if rng.random() < cfg.p_sw:
                words.append(lex_e[c][k % len(lex_e[c])])
            else:
                words.append(lex_m[c][k])
        real_cs.append(" ".join(words))
    return SyntheticCorpora(matrix, embedded, real_cs, cfg)


@dataclass
class SyntheticCorpora:
    """Raw text of the three synthetic corpora and the config that made them."""

    matrix: list
    embedded: list
    real_cs: list
    cfg: SynthConfig

    def vocabulary(self, min_count=1):
        return build_vocabulary(self.matrix, self.embedded, self.real_cs, min_count)

    def encode(self, vocab, max_len=DEFAULT_MAX_LEN):
        return CorpusSet(
            matrix=[encode_sentence(s, vocab, max_len, Origin.MATRIX_CORPUS) for s in self.matrix],
            embedded=[encode_sentence(s, vocab, max_len, Origin.EMBEDDED_CORPUS) for s in self.embedded],
            real_cs=[encode_sentence(s, vocab, max_len, Origin.REAL_CS) for s in self.real_cs],
        )

    def write(self, out_dir):
        os.makedirs(out_dir, exist_ok=True)
        write_lines(os.path.join(out_dir, "matrix.txt"), self.matrix)
        write_lines(os.path.join(out_dir, "embedded.txt"), self.embedded)
        write_lines(os.path.join(out_dir, "real_cs.txt"), self.real_cs)
        with open(os.path.join(out_dir, "synth_config.json"), "w", encoding="utf-8") as fh:
            fh.write(self.cfg.to_json() + "\n")
