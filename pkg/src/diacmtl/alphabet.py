"""
Buckwalter character inventory and the diacritic label set.

Words are handled in Buckwalter ASCII transliteration. A diacritized word is
split into its consonant skeleton plus one label per skeleton character; the
label is the (possibly shadda-combined) mark that follows the character.
"""
from enum import IntEnum

from .errors import LengthMismatch, MalformedWord

BOUNDARY = "<w>"

# hamza forms, letters, alif wasla, dagger alif, tatweel, Persian extensions
LETTERS = "'|>&<}AbptvjHxd*rzs$SDTZEgfqklmnhwYy{`_PJVG"
DIGITS = "0123456789"
PUNCTUATION = '.,:;!?"()[]-/%'
BASE_CHARS = frozenset(LETTERS + DIGITS + PUNCTUATION)

SHADDA = "~"
VOWELS = frozenset("auio")
NUNATION = frozenset("KFN")
MARKS = frozenset("auioKFN~")


class DiacriticLabel(IntEnum):
    a = 0
    u = 1
    i = 2
    o = 3
    K = 4
    F = 5
    N = 6
    Sh = 7
    Sh_a = 8
    Sh_u = 9
    Sh_i = 10
    Sh_F = 11
    Sh_K = 12
    Sh_N = 13
    NONE = 14

    @property
    def marks(self):
        """Canonical serialized form: shadda first, then the other mark."""
        return _LABEL_TO_MARKS[self]

    @classmethod
    def from_marks(cls, marks):
        """Label for an unordered group of marks following one base char."""
        key = "".join(sorted(marks, key=lambda m: m != SHADDA))
        try:
            return _MARKS_TO_LABEL[key]
        except KeyError:
            raise MalformedWord(f"invalid diacritic combination {marks!r}") from None


_LABEL_TO_MARKS = {
    DiacriticLabel.a: "a",
    DiacriticLabel.u: "u",
    DiacriticLabel.i: "i",
    DiacriticLabel.o: "o",
    DiacriticLabel.K: "K",
    DiacriticLabel.F: "F",
    DiacriticLabel.N: "N",
    DiacriticLabel.Sh: "~",
    DiacriticLabel.Sh_a: "~a",
    DiacriticLabel.Sh_u: "~u",
    DiacriticLabel.Sh_i: "~i",
    DiacriticLabel.Sh_F: "~F",
    DiacriticLabel.Sh_K: "~K",
    DiacriticLabel.Sh_N: "~N",
    DiacriticLabel.NONE: "",
}
_MARKS_TO_LABEL = {v: k for k, v in _LABEL_TO_MARKS.items()}

NUM_LABELS = len(DiacriticLabel)


def is_base_char(ch):
    return ch in BASE_CHARS


def strip_diacritics(word):
    """Split a diacritized Buckwalter word into (skeleton, labels).

    >>> strip_diacritics("Ealamu")
    ('Elm', [<DiacriticLabel.a: 0>, <DiacriticLabel.a: 0>, <DiacriticLabel.u: 1>])
    """
    skeleton = []
    groups = []
    for pos, ch in enumerate(word):
        if ch in MARKS:
            if not skeleton:
                raise MalformedWord(f"{word!r}: diacritic {ch!r} before any base character")
            groups[-1].append(ch)
        elif ch in BASE_CHARS:
            skeleton.append(ch)
            groups.append([])
        else:
            raise MalformedWord(f"{word!r}: non-Buckwalter character {ch!r} at offset {pos}")
    labels = [DiacriticLabel.from_marks(g) for g in groups]
    return "".join(skeleton), labels


def apply_diacritics(skeleton, labels):
    """Inverse of :func:`strip_diacritics`; marks are written in canonical order."""
    if len(skeleton) != len(labels):
        raise LengthMismatch(
            f"skeleton has {len(skeleton)} characters but {len(labels)} labels were given"
        )
    return "".join(ch + DiacriticLabel(lab).marks for ch, lab in zip(skeleton, labels))


def syntactic_label(word):
    """Word-final diacritic, used as the word's syntactic label."""
    skeleton, labels = strip_diacritics(word)
    if not labels:
        return DiacriticLabel.NONE
    return labels[-1]


def undiacritize(text):
    """Drop every diacritic mark from a Buckwalter string (no validation)."""
    return "".join(ch for ch in text if ch not in MARKS)
