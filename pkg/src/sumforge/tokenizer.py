"""Deterministic text segmentation: sentences, words, and BPE subwords.

Everything downstream (noising, corpus statistics, ROUGE) runs on the
output of this module, so only internal consistency matters; the rules
are a pragmatic approximation of a French news/meeting tokenizer, not a
reimplementation of any particular toolkit.
"""

from __future__ import annotations

import re
from collections import Counter, defaultdict
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, Iterator

from .errors import DanglingMarker, EmptyCorpus, EmptyModelRequest, MalformedLine

_TERMINALS = ".!?…"
_CLOSERS = "»”\"')]"
_OPENERS = "«“\"'‘(["

# Words that take a period without ending the sentence. Single uppercase
# letters (initials) are whitelisted by rule, not listed here.
_ABBREVIATIONS = frozenset({
    "M", "MM", "Mme", "Mmes", "Mlle", "Mlles", "Dr", "Me", "Pr", "Mgr",
    "St", "Ste", "etc", "cf", "ex", "p", "pp", "art", "vol", "chap",
    "fig", "réf", "no", "nos", "av", "bd",
})

# Angle-bracket specials (<mask>, </s>) stay whole so noised corpora
# round-trip; then words (hyphens allowed) optionally carrying an elision
# apostrophe, ellipses, or any single non-space symbol.
_TOKEN_RE = re.compile(r"</?\w+>|\w+(?:-\w+)*['’]|\w+(?:-\w+)*|\.{3}|…|[^\w\s]")

_WORD_BEFORE_RE = re.compile(r"[\w'’-]+$")

_BPE_HEADER_RE = re.compile(r"^#sumforge-bpe v1 marker=(\S+)$")


@dataclass(frozen=True)
class Document:
    """Tokenized text: a sequence of sentences, each a sequence of tokens.

    Immutable so instances can be shared freely across workers. Invariants:
    no empty sentences, no empty tokens, no whitespace inside a token.
    """

    sentences: tuple[tuple[str, ...], ...]

    def __post_init__(self):
        for sent in self.sentences:
            if not sent:
                raise ValueError("document contains an empty sentence")
            for tok in sent:
                if not tok or any(c.isspace() for c in tok):
                    raise ValueError(f"bad token {tok!r}")

    @classmethod
    def from_text(cls, text: str) -> "Document":
        sents = []
        for raw in split_sentences(text):
            toks = tokenize(raw)
            if toks:
                sents.append(tuple(toks))
        return cls(tuple(sents))

    @classmethod
    def from_sentences(cls, sentences: Iterable[Iterable[str]]) -> "Document":
        return cls(tuple(tuple(s) for s in sentences))

    @property
    def num_tokens(self) -> int:
        return sum(len(s) for s in self.sentences)

    def flat_tokens(self) -> list[str]:
        return [tok for sent in self.sentences for tok in sent]

    def text(self) -> str:
        """Tokens joined with single spaces, sentences likewise."""
        return " ".join(" ".join(sent) for sent in self.sentences)


def split_sentences(text: str) -> list[str]:
    """Split raw text into sentence strings.

    A split happens only after sentence-final punctuation (. ! ? …),
    optionally followed by closing quotes/brackets, then whitespace and
    an uppercase or opening character. Periods after whitelisted French
    abbreviations and single-letter initials never split. No non-space
    character is ever dropped or duplicated.
    """
    sentences: list[str] = []
    n = len(text)
    start = 0
    i = 0
    while i < n:
        if text[i] in _TERMINALS:
            run_start = i
            j = i + 1
            while j < n and text[j] in _TERMINALS:
                j += 1
            # closing quotes/brackets belong to the sentence, including the
            # French space-before-guillemet convention ("oui. »")
            while True:
                t = j
                while t < n and text[t].isspace():
                    t += 1
                if t < n and text[t] in _CLOSERS:
                    j = t + 1
                else:
                    break
            k = j
            while k < n and text[k].isspace():
                k += 1
            if (
                k > j
                and k < n
                and _starts_sentence(text[k])
                and not _abbreviation_dot(text, run_start, j)
            ):
                chunk = text[start:j].strip()
                if chunk:
                    sentences.append(chunk)
                start = k
            i = max(j, i + 1)
        else:
            i += 1
    tail = text[start:].strip()
    if tail:
        sentences.append(tail)
    return sentences


def _starts_sentence(c: str) -> bool:
    return c.isupper() or c in _OPENERS


def _abbreviation_dot(text: str, dot: int, run_end: int) -> bool:
    # Only a lone period can belong to an abbreviation; "etc..." still splits.
    if text[dot] != "." or run_end - dot != 1:
        return False
    m = _WORD_BEFORE_RE.search(text, 0, dot)
    if not m:
        return False
    word = m.group()
    return word in _ABBREVIATIONS or (len(word) == 1 and word.isupper())


def tokenize(sentence: str) -> list[str]:
    """Split one sentence into tokens, separating punctuation from words.

    Elision apostrophes stay on the prefix (C'est -> C' est), hyphenated
    words stay whole, whitespace collapses. Deterministic and pure.
    """
    return _TOKEN_RE.findall(sentence)


def detokenize(doc: Document) -> str:
    return doc.text()


# ---------------------------------------------------------------------------
# Byte pair encoding at the word level: merges never cross token boundaries,
# non-final pieces carry a continuation marker.
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BpeModel:
    """Ordered merge rules plus the continuation marker for non-final pieces."""

    merges: tuple[tuple[str, str], ...]
    marker: str = "@@"

    def __post_init__(self):
        if len(set(self.merges)) != len(self.merges):
            raise ValueError("duplicate merge pairs in model")
        if not self.marker:
            raise ValueError("marker must be non-empty")


def bpe_learn(corpus: Iterable[Document], num_merges: int, marker: str = "@@") -> BpeModel:
    """Learn BPE merges greedily from a corpus of documents.

    Each step merges the most frequent adjacent symbol pair inside words,
    ties broken by the lexicographically smallest pair, which makes
    learning deterministic for a given corpus. Learning stops early when
    no in-word pair remains (e.g. single-character words only).

    Raises:
        EmptyModelRequest: num_merges < 1.
        EmptyCorpus: the corpus holds no tokens at all.
    """
    if num_merges < 1:
        raise EmptyModelRequest(f"num_merges must be >= 1, got {num_merges}")

    freqs: Counter[str] = Counter()
    for doc in corpus:
        for sent in doc.sentences:
            freqs.update(sent)
    if not freqs:
        raise EmptyCorpus("no tokens in corpus")

    words = list(freqs.items())
    seqs: list[list[str]] = [list(w) for w, _ in words]

    pair_counts: Counter[tuple[str, str]] = Counter()
    pair_words: dict[tuple[str, str], set[int]] = defaultdict(set)
    for wi, (seq, (_, f)) in enumerate(zip(seqs, words)):
        for pair in zip(seq, seq[1:]):
            pair_counts[pair] += f
            pair_words[pair].add(wi)

    merges: list[tuple[str, str]] = []
    for _ in range(num_merges):
        if not pair_counts:
            break
        best_count = max(pair_counts.values())
        best = min(p for p, c in pair_counts.items() if c == best_count)
        merges.append(best)

        affected = pair_words.pop(best, set())
        for wi in affected:
            seq = seqs[wi]
            f = words[wi][1]
            old_pairs = Counter(zip(seq, seq[1:]))
            new_seq = _merge_word(seq, best)
            new_pairs = Counter(zip(new_seq, new_seq[1:]))
            seqs[wi] = new_seq
            for pair, c in (old_pairs - new_pairs).items():
                pair_counts[pair] -= c * f
                if pair_counts[pair] <= 0:
                    del pair_counts[pair]
            for pair, c in (new_pairs - old_pairs).items():
                pair_counts[pair] += c * f
                pair_words[pair].add(wi)

    return BpeModel(tuple(merges), marker)


def _merge_word(seq: list[str], pair: tuple[str, str]) -> list[str]:
    a, b = pair
    out: list[str] = []
    i = 0
    while i < len(seq):
        if i + 1 < len(seq) and seq[i] == a and seq[i + 1] == b:
            out.append(a + b)
            i += 2
        else:
            out.append(seq[i])
            i += 1
    return out


@lru_cache(maxsize=65536)
def _apply_word(token: str, model: BpeModel) -> tuple[str, ...]:
    seq = list(token)
    for pair in model.merges:
        if len(seq) < 2:
            break
        seq = _merge_word(seq, pair)
    if len(seq) == 1:
        return (token,)
    return tuple(p + model.marker for p in seq[:-1]) + (seq[-1],)


def bpe_apply(tokens: Iterable[str], model: BpeModel) -> list[str]:
    """Split tokens into subword pieces by applying merges in model order."""
    pieces: list[str] = []
    for tok in tokens:
        pieces.extend(_apply_word(tok, model))
    return pieces


def bpe_decode(pieces: Iterable[str], model: BpeModel) -> list[str]:
    """Rejoin subword pieces into tokens; inverse of bpe_apply.

    Raises DanglingMarker if the final piece still carries the
    continuation marker.
    """
    marker = model.marker
    out: list[str] = []
    buf = ""
    pending = False
    for p in pieces:
        if p.endswith(marker):
            buf += p[: -len(marker)]
            pending = True
        else:
            out.append(buf + p)
            buf = ""
            pending = False
    if pending:
        raise DanglingMarker(f"sequence ends on continuation piece {buf + marker!r}")
    return out


def save_bpe_model(model: BpeModel, path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        f.write(f"#sumforge-bpe v1 marker={model.marker}\n")
        for a, b in model.merges:
            f.write(f"{a} {b}\n")


def load_bpe_model(path) -> BpeModel:
    with open(path, encoding="utf-8") as f:
        header = f.readline().rstrip("\n")
        m = _BPE_HEADER_RE.match(header)
        if not m:
            raise MalformedLine(1, f"bad BPE model header {header!r}")
        marker = m.group(1)
        merges: list[tuple[str, str]] = []
        for line_no, line in enumerate(f, start=2):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split(" ")
            if len(parts) != 2 or not parts[0] or not parts[1]:
                raise MalformedLine(line_no, f"bad merge rule {line!r}")
            merges.append((parts[0], parts[1]))
    try:
        return BpeModel(tuple(merges), marker)
    except ValueError as e:
        raise MalformedLine(0, str(e)) from e


def iter_corpus_documents(lines: Iterable[str]) -> Iterator[Document]:
    """Parse plain-text lines into one Document each, skipping blanks."""
    for line in lines:
        line = line.strip()
        if line:
            doc = Document.from_text(line)
            if doc.sentences:
                yield doc
