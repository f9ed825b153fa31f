"""
Corpus ingestion: aligned text/POS/segmentation files to labeled sentences,
vocabularies, pretrained vectors, context windows and padded batches.

File formats (UTF-8/ASCII, one sentence per line, space separated):

* text: diacritized Buckwalter words, ``Ealamu wa+...`` without '+'
* pos:  one tag per word, e.g. ``NOUN VERB``
* seg:  the same words with '+' between segments, e.g. ``wa+ham~a``
"""
import json
import math
from collections import Counter
from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np

from .alphabet import BOUNDARY, DiacriticLabel, MARKS, apply_diacritics, strip_diacritics
from .errors import (
    AlignmentError,
    DimensionMismatch,
    EmptyCorpus,
    MalformedWord,
    ParseError,
    UnknownPosTag,
)

UD_TAGS = (
    "ADJ", "ADP", "ADV", "AUX", "CCONJ", "DET", "INTJ", "NOUN",
    "NUM", "PART", "PRON", "PROPN", "PUNCT", "SCONJ", "VERB", "X",
)
PASSIVE_TAGS = tuple(t for t in UD_TAGS if t != "VERB") + ("VERB_ACT", "VERB_PASS")

UNK = "<unk>"
NO_WORD = -1


class SegLabel(IntEnum):
    B = 0
    I = 1  # noqa: E741
    O = 2  # noqa: E741


def pos_tagset(passivization=False):
    return PASSIVE_TAGS if passivization else UD_TAGS


def normalize_pos_tag(tag, passivization=False):
    """Map a raw tag from a pos file into the active tagset."""
    if passivization:
        if tag not in PASSIVE_TAGS:
            raise UnknownPosTag(f"unknown POS tag {tag!r} (passivization expects VERB_ACT/VERB_PASS)")
        return tag
    if tag in ("VERB_ACT", "VERB_PASS"):
        return "VERB"
    if tag not in UD_TAGS:
        raise UnknownPosTag(f"unknown POS tag {tag!r}")
    return tag


@dataclass(frozen=True)
class LabeledSentence:
    words: tuple
    diacritized: tuple
    chars: tuple
    diac_labels: tuple
    seg_labels: tuple
    syn_labels: tuple
    pos_labels: tuple
    word_of_char: tuple
    word_start: tuple

    def __len__(self):
        return len(self.words)

    def word_labels(self, k):
        """DIAC labels of the k-th word's characters."""
        start = self.word_start[k]
        return self.diac_labels[start:start + len(self.words[k])]


def segment_labels(segments):
    labels = []
    for seg in segments:
        if not seg:
            raise MalformedWord("empty segment")
        labels.append(SegLabel.B)
        labels.extend([SegLabel.I] * (len(seg) - 1))
    return labels


def make_sentence(diacritized, pos_ids=None, segmented=None):
    """Build a LabeledSentence from diacritized words.

    ``pos_ids`` defaults to zeros and ``segmented`` to one segment per word,
    which is what inference on raw text needs.
    """
    words, chars, diac, seg, syn, woc, starts = [], [], [], [], [], [], []
    for k, token in enumerate(diacritized):
        skeleton, labels = strip_diacritics(token)
        if not skeleton:
            raise MalformedWord(f"empty word at position {k}")
        if segmented is None:
            seg_labels = segment_labels([skeleton])
        else:
            parts = [strip_diacritics(p)[0] for p in segmented[k].split("+")]
            if "".join(parts) != skeleton:
                raise AlignmentError(
                    f"segmentation {segmented[k]!r} does not match word {token!r}"
                )
            seg_labels = segment_labels(parts)
        if k:
            chars.append(BOUNDARY)
            diac.append(DiacriticLabel.NONE)
            seg.append(SegLabel.O)
            woc.append(NO_WORD)
        starts.append(len(chars))
        words.append(skeleton)
        chars.extend(skeleton)
        diac.extend(labels)
        seg.extend(seg_labels)
        woc.extend([k] * len(skeleton))
        syn.append(labels[-1])
    if pos_ids is None:
        pos_ids = [0] * len(words)
    return LabeledSentence(
        words=tuple(words),
        diacritized=tuple(apply_diacritics(w, l) for w, l in
                          ((w, diac[s:s + len(w)]) for w, s in zip(words, starts))),
        chars=tuple(chars),
        diac_labels=tuple(int(x) for x in diac),
        seg_labels=tuple(int(x) for x in seg),
        syn_labels=tuple(int(x) for x in syn),
        pos_labels=tuple(pos_ids),
        word_of_char=tuple(woc),
        word_start=tuple(starts),
    )


def _read_lines(path):
    with open(path, encoding="utf-8") as fh:
        return fh.read().splitlines()


def parse_lines(text_lines, pos_lines, seg_lines, passivization=False):
    """Parse already-read aligned lines. Blank text lines are skipped."""
    if not (len(text_lines) == len(pos_lines) == len(seg_lines)):
        raise AlignmentError(
            f"line counts differ: text={len(text_lines)} pos={len(pos_lines)} seg={len(seg_lines)}"
        )
    tags = pos_tagset(passivization)
    tag_id = {t: i for i, t in enumerate(tags)}
    sentences = []
    for lineno, (t, p, s) in enumerate(zip(text_lines, pos_lines, seg_lines), start=1):
        words, pos, segs = t.split(), p.split(), s.split()
        if not words and not pos and not segs:
            continue
        if not (len(words) == len(pos) == len(segs)):
            raise ParseError(
                f"word counts differ: text={len(words)} pos={len(pos)} seg={len(segs)}", lineno
            )
        try:
            pos_ids = [tag_id[normalize_pos_tag(x, passivization)] for x in pos]
            sentences.append(make_sentence(words, pos_ids, segs))
        except (MalformedWord, AlignmentError, UnknownPosTag) as exc:
            raise type(exc)(f"line {lineno}: {exc}") from None
    return sentences


def parse_corpus(text_path, pos_path, seg_path, passivization=False):
    return parse_lines(_read_lines(text_path), _read_lines(pos_path),
                       _read_lines(seg_path), passivization)


def sentence_to_record(sentence, tags):
    """Raw (text, pos, seg) strings for a sentence; inverse of parse_lines."""
    segs = []
    for k, word in enumerate(sentence.words):
        start = sentence.word_start[k]
        out = []
        for j, ch in enumerate(word):
            if j and sentence.seg_labels[start + j] == SegLabel.B:
                out.append("+")
            out.append(ch + DiacriticLabel(sentence.diac_labels[start + j]).marks)
        segs.append("".join(out))
    return {
        "text": " ".join(sentence.diacritized),
        "pos": " ".join(tags[i] for i in sentence.pos_labels),
        "seg": " ".join(segs),
    }


@dataclass
class Vocab:
    char_to_id: dict
    word_to_id: dict
    pos_tags: tuple
    training_word_set: frozenset = field(default_factory=frozenset)

    @property
    def char_unk(self):
        return self.char_to_id[UNK]

    @property
    def word_unk(self):
        return self.word_to_id[UNK]

    @property
    def boundary_id(self):
        return self.char_to_id[BOUNDARY]

    def char_id(self, ch):
        return self.char_to_id.get(ch, self.char_unk)

    def word_id(self, word):
        return self.word_to_id.get(word, self.word_unk)

    def to_dict(self):
        return {
            "chars": sorted(self.char_to_id, key=self.char_to_id.get),
            "words": sorted(self.word_to_id, key=self.word_to_id.get),
            "pos_tags": list(self.pos_tags),
            "training_words": sorted(self.training_word_set),
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            char_to_id={c: i for i, c in enumerate(d["chars"])},
            word_to_id={w: i for i, w in enumerate(d["words"])},
            pos_tags=tuple(d["pos_tags"]),
            training_word_set=frozenset(d["training_words"]),
        )

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, ensure_ascii=False)

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def build_vocab(sentences, min_count=1, passivization=False):
    sentences = list(sentences)
    if not sentences:
        raise EmptyCorpus("cannot build a vocabulary from zero sentences")
    char_counts = Counter()
    word_counts = Counter()
    for s in sentences:
        word_counts.update(s.words)
        char_counts.update(ch for w in s.words for ch in w)
    chars = [UNK, BOUNDARY] + sorted(char_counts)
    words = [UNK] + sorted(w for w, n in word_counts.items() if n >= min_count)
    return Vocab(
        char_to_id={c: i for i, c in enumerate(chars)},
        word_to_id={w: i for i, w in enumerate(words)},
        pos_tags=pos_tagset(passivization),
        training_word_set=frozenset(word_counts),
    )


def oov_rate(sentences, training_word_set):
    """Percentage of words whose skeleton was never seen in training."""
    total = oov = 0
    for s in sentences:
        for w in s.words:
            total += 1
            oov += w not in training_word_set
    return 100.0 * oov / total if total else float("nan")


@dataclass
class PretrainedEmbeddings:
    """Fixed word vectors; lookups of absent tokens return None (caller maps to UNK)."""

    dim: int
    tokens: list
    vectors: np.ndarray
    index: dict = field(init=False, repr=False)

    def __post_init__(self):
        self.index = {t: i for i, t in enumerate(self.tokens)}

    def __len__(self):
        return len(self.tokens)

    def __contains__(self, token):
        return token in self.index

    def row(self, token):
        return self.index.get(token)


def load_embeddings(path):
    """Read a fastText ``.vec`` style text file."""
    tokens, rows, dim = [], [], None
    seen = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.rstrip("\n").split()
            if not parts:
                continue
            if lineno == 1 and len(parts) == 2:
                try:
                    _, dim = int(parts[0]), int(parts[1])
                    continue
                except ValueError:
                    pass
            token, values = parts[0], parts[1:]
            if dim is None:
                dim = len(values)
            if len(values) != dim:
                raise DimensionMismatch(
                    f"line {lineno}: token {token!r} has {len(values)} values, expected {dim}"
                )
            try:
                vec = [float(v) for v in values]
            except ValueError as exc:
                raise ParseError(str(exc), lineno) from None
            if token in seen:
                continue
            seen.add(token)
            tokens.append(token)
            rows.append(vec)
    if dim is None:
        raise ParseError("no vectors found")
    vectors = np.asarray(rows, dtype=np.float32).reshape(len(rows), dim)
    return PretrainedEmbeddings(dim=dim, tokens=tokens, vectors=vectors)


def save_embeddings(path, emb):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{len(emb)} {emb.dim}\n")
        for tok, vec in zip(emb.tokens, emb.vectors):
            fh.write(tok + " " + " ".join(f"{v:.6f}" for v in vec) + "\n")


def random_embeddings(words, dim, seed=0):
    """Stand-in frozen vectors when no pretrained file is supplied."""
    words = sorted(set(words))
    rng = np.random.default_rng(seed)
    vectors = rng.uniform(-0.1, 0.1, size=(len(words), dim)).astype(np.float32)
    return PretrainedEmbeddings(dim=dim, tokens=words, vectors=vectors)


@dataclass(frozen=True)
class Window:
    sentence: LabeledSentence
    center: int
    lo: int
    hi: int  # inclusive

    @property
    def span(self):
        return range(self.lo, self.hi + 1)

    @property
    def char_lo(self):
        return self.sentence.word_start[self.lo]

    @property
    def char_hi(self):
        return self.sentence.word_start[self.hi] + len(self.sentence.words[self.hi])

    @property
    def num_words(self):
        return self.hi - self.lo + 1

    @property
    def num_chars(self):
        return self.char_hi - self.char_lo


def make_windows(sentence, R=10):
    n = len(sentence.words)
    return [Window(sentence, c, max(0, c - R), min(n - 1, c + R)) for c in range(n)]


@dataclass
class Batch:
    windows: list
    char_ids: np.ndarray      # (B, Tc)
    char_len: np.ndarray      # (B,)
    char_word: np.ndarray     # (B, Tc) span-local word index, -1 at boundary/pad
    char_uword: np.ndarray    # (B, Tc) index into uwords, -1 at boundary/pad
    char_mask: np.ndarray     # (B, Tc) 1 for real positions
    diac: np.ndarray
    seg: np.ndarray
    char_loss_mask: np.ndarray
    word_uword: np.ndarray    # (B, Tw)
    word_len: np.ndarray
    word_mask: np.ndarray
    syn: np.ndarray
    pos: np.ndarray
    word_loss_mask: np.ndarray
    center: np.ndarray        # (B,) span-local index of the center word
    uwords: list
    uword_char_ids: np.ndarray  # (Nw, Lw)
    uword_len: np.ndarray

    def __len__(self):
        return len(self.windows)


def collate(windows, vocab, supervise="center"):
    """Pad a list of windows into one Batch.

    ``supervise="center"`` puts loss only on the center word (each corpus
    position supervised exactly once); ``"span"`` supervises every word.
    """
    B = len(windows)
    Tc = max(w.num_chars for w in windows)
    Tw = max(w.num_words for w in windows)
    uindex = {}
    shape_c, shape_w = (B, Tc), (B, Tw)
    char_ids = np.full(shape_c, vocab.char_unk, dtype=np.int64)
    char_word = np.full(shape_c, NO_WORD, dtype=np.int64)
    char_uword = np.full(shape_c, NO_WORD, dtype=np.int64)
    char_mask = np.zeros(shape_c, dtype=np.float64)
    diac = np.full(shape_c, int(DiacriticLabel.NONE), dtype=np.int64)
    seg = np.full(shape_c, int(SegLabel.O), dtype=np.int64)
    char_loss = np.zeros(shape_c, dtype=np.float64)
    word_uword = np.zeros(shape_w, dtype=np.int64)
    word_mask = np.zeros(shape_w, dtype=np.float64)
    syn = np.zeros(shape_w, dtype=np.int64)
    pos = np.zeros(shape_w, dtype=np.int64)
    word_loss = np.zeros(shape_w, dtype=np.float64)
    char_len = np.zeros(B, dtype=np.int64)
    word_len = np.zeros(B, dtype=np.int64)
    center = np.zeros(B, dtype=np.int64)

    for b, win in enumerate(windows):
        s = win.sentence
        c0 = win.char_lo
        nc = win.num_chars
        char_len[b] = nc
        word_len[b] = win.num_words
        center[b] = win.center - win.lo
        char_mask[b, :nc] = 1.0
        for j in range(nc):
            ch = s.chars[c0 + j]
            char_ids[b, j] = vocab.boundary_id if ch == BOUNDARY else vocab.char_id(ch)
        diac[b, :nc] = s.diac_labels[c0:c0 + nc]
        seg[b, :nc] = s.seg_labels[c0:c0 + nc]
        for k in win.span:
            local = k - win.lo
            word = s.words[k]
            u = uindex.setdefault(word, len(uindex))
            word_uword[b, local] = u
            word_mask[b, local] = 1.0
            syn[b, local] = s.syn_labels[k]
            pos[b, local] = s.pos_labels[k]
            start = s.word_start[k] - c0
            char_word[b, start:start + len(word)] = local
            char_uword[b, start:start + len(word)] = u
            if supervise == "span" or k == win.center:
                word_loss[b, local] = 1.0
                char_loss[b, start:start + len(word)] = 1.0

    uwords = list(uindex)
    Lw = max(len(w) for w in uwords)
    uword_char_ids = np.full((len(uwords), Lw), vocab.char_unk, dtype=np.int64)
    uword_len = np.zeros(len(uwords), dtype=np.int64)
    for u, word in enumerate(uwords):
        uword_len[u] = len(word)
        uword_char_ids[u, :len(word)] = [vocab.char_id(ch) for ch in word]

    return Batch(
        windows=list(windows), char_ids=char_ids, char_len=char_len, char_word=char_word,
        char_uword=char_uword, char_mask=char_mask, diac=diac, seg=seg,
        char_loss_mask=char_loss, word_uword=word_uword, word_len=word_len,
        word_mask=word_mask, syn=syn, pos=pos, word_loss_mask=word_loss, center=center,
        uwords=uwords, uword_char_ids=uword_char_ids, uword_len=uword_len,
    )


def batch(windows, vocab, batch_size=16, seed=None, supervise="center"):
    """Shuffle (when ``seed`` is given) and group windows into padded batches."""
    windows = list(windows)
    order = np.arange(len(windows))
    if seed is not None:
        order = np.random.default_rng(seed).permutation(len(windows))
    n_batches = math.ceil(len(windows) / batch_size)
    return [
        collate([windows[i] for i in order[k * batch_size:(k + 1) * batch_size]], vocab, supervise)
        for k in range(n_batches)
    ]


def strip_sentence(text):
    """Undiacritized words of a raw input line."""
    return ["".join(ch for ch in w if ch not in MARKS) for w in text.split()]
