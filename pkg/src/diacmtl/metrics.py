"""
Diacritization error rates, auxiliary-task accuracies and Welch's t-test.

Metric inputs are aligned per-word label sequences: ``pred[k]`` and
``gold[k]`` hold the DIAC labels of word k's characters (boundary tokens are
never part of a word, so they are excluded by construction).
"""
import math
from dataclasses import dataclass, fields
from typing import Optional

from scipy import stats

from .errors import AlignmentError, DegenerateVariance

NA = float("nan")


def _check(pred, gold):
    if len(pred) != len(gold):
        raise AlignmentError(f"{len(pred)} predicted words vs {len(gold)} gold words")
    for k, (p, g) in enumerate(zip(pred, gold)):
        if len(p) != len(g):
            raise AlignmentError(f"word {k}: {len(p)} predicted labels vs {len(g)} gold")


def _pct(errors, total):
    return 100.0 * errors / total if total else NA


def word_errors(pred, gold):
    _check(pred, gold)
    return sum(any(a != b for a, b in zip(p, g)) for p, g in zip(pred, gold))


def last_errors(pred, gold):
    _check(pred, gold)
    return sum(bool(g) and p[-1] != g[-1] for p, g in zip(pred, gold))


def lex_errors(pred, gold):
    _check(pred, gold)
    return sum(any(a != b for a, b in zip(p[:-1], g[:-1])) for p, g in zip(pred, gold))


def char_errors(pred, gold):
    _check(pred, gold)
    return sum(a != b for p, g in zip(pred, gold) for a, b in zip(p, g))


def word_error_rate(pred, gold):
    return _pct(word_errors(pred, gold), len(gold))


def diacritic_error_rate(pred, gold):
    errors = char_errors(pred, gold)
    return _pct(errors, sum(len(g) for g in gold))


def last_diacritic_error_rate(pred, gold):
    return _pct(last_errors(pred, gold), len(gold))


def lex_error_rate(pred, gold):
    return _pct(lex_errors(pred, gold), len(gold))


def oov_wer(pred, gold, words, training_word_set):
    """WER over words whose skeleton is absent from training; NaN when there are none."""
    if len(words) != len(gold):
        raise AlignmentError(f"{len(words)} skeletons vs {len(gold)} gold words")
    idx = [k for k, w in enumerate(words) if w not in training_word_set]
    if not idx:
        return NA
    return word_error_rate([pred[k] for k in idx], [gold[k] for k in idx])


def accuracy(pred, gold):
    if len(pred) != len(gold):
        raise AlignmentError(f"{len(pred)} predictions vs {len(gold)} gold labels")
    return _pct(sum(p == g for p, g in zip(pred, gold)), len(gold))


@dataclass
class WelchResult:
    t: float
    dof: float
    p: float
    significant: bool


def welch_t_test(scores_a, scores_b, alpha=0.05):
    """Two-tailed unequal-variance t-test."""
    a = [float(x) for x in scores_a]
    b = [float(x) for x in scores_b]
    if len(a) < 2 or len(b) < 2:
        raise ValueError("need at least two scores per sample")
    na, nb = len(a), len(b)
    ma, mb = sum(a) / na, sum(b) / nb
    va = sum((x - ma) ** 2 for x in a) / (na - 1)
    vb = sum((x - mb) ** 2 for x in b) / (nb - 1)
    sa, sb = va / na, vb / nb
    if sa + sb == 0.0:
        raise DegenerateVariance("both samples have zero variance")
    t = (ma - mb) / math.sqrt(sa + sb)
    dof = (sa + sb) ** 2 / (sa ** 2 / (na - 1) + sb ** 2 / (nb - 1))
    p = 2.0 * stats.t.sf(abs(t), dof)
    return WelchResult(t=t, dof=dof, p=float(p), significant=bool(p < alpha))


@dataclass
class EvalReport:
    wer: float
    der: float
    ler: float
    lex: float
    oov_wer: float
    seg_acc: Optional[float]
    syn_acc: Optional[float]
    pos_acc: Optional[float]
    words: int
    chars: int
    oov_words: int
    word_errors: int
    char_errors: int

    def to_lines(self):
        """Fixed-order ``key value`` lines; NA for undefined values."""
        out = []
        for f in fields(self):
            v = getattr(self, f.name)
            if v is None or (isinstance(v, float) and math.isnan(v)):
                s = "NA"
            elif isinstance(v, float):
                s = f"{v:.4f}"
            else:
                s = str(v)
            out.append(f"{f.name} {s}")
        return "\n".join(out) + "\n"

    @classmethod
    def from_lines(cls, text):
        types = {f.name: f.type for f in fields(cls)}
        values = {}
        for line in text.strip().splitlines():
            key, raw = line.split(None, 1)
            if raw == "NA":
                values[key] = None if types[key] == Optional[float] else NA
            elif types[key] is int:
                values[key] = int(raw)
            else:
                values[key] = float(raw)
        return cls(**values)

    def to_dict(self):
        """JSON-ready dict; undefined values become None."""
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            out[f.name] = None if isinstance(v, float) and math.isnan(v) else v
        return out


def evaluate_predictions(sentences, predictions, training_word_set, tasks=()):
    """Build an EvalReport from gold sentences and model predictions."""
    pred, gold, words = [], [], []
    seg_p, seg_g, syn_p, syn_g, pos_p, pos_g = [], [], [], [], [], []
    for s, p in zip(sentences, predictions):
        for k, w in enumerate(s.words):
            words.append(w)
            gold.append(list(s.word_labels(k)))
            pred.append(list(p.diac[k]))
            start = s.word_start[k]
            if "seg" in tasks:
                seg_p.extend(p.seg[k])
                seg_g.extend(s.seg_labels[start:start + len(w)])
            if "syn" in tasks:
                syn_p.append(p.syn[k])
                syn_g.append(s.syn_labels[k])
            if "pos" in tasks:
                pos_p.append(p.pos[k])
                pos_g.append(s.pos_labels[k])
    we = word_errors(pred, gold)
    ce = char_errors(pred, gold)
    n_chars = sum(len(g) for g in gold)
    return EvalReport(
        wer=_pct(we, len(gold)),
        der=_pct(ce, n_chars),
        ler=last_diacritic_error_rate(pred, gold),
        lex=lex_error_rate(pred, gold),
        oov_wer=oov_wer(pred, gold, words, training_word_set),
        seg_acc=accuracy(seg_p, seg_g) if "seg" in tasks else None,
        syn_acc=accuracy(syn_p, syn_g) if "syn" in tasks else None,
        pos_acc=accuracy(pos_p, pos_g) if "pos" in tasks else None,
        words=len(gold),
        chars=n_chars,
        oov_words=sum(w not in training_word_set for w in words),
        word_errors=we,
        char_errors=ce,
    )


def evaluate(model, sentences, training_word_set=None):
    if training_word_set is None:
        training_word_set = model.vocab.training_word_set
    preds = model.decode(sentences)
    return evaluate_predictions(sentences, preds, training_word_set, model.config.tasks)
