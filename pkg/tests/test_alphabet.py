import pytest
from hypothesis import given, strategies as st

from diacmtl.alphabet import (
    BASE_CHARS,
    DiacriticLabel as D,
    NUM_LABELS,
    apply_diacritics,
    strip_diacritics,
    syntactic_label,
)
from diacmtl.errors import LengthMismatch, MalformedWord


def test_label_set_has_fifteen_values():
    assert NUM_LABELS == 15
    marks = {d.marks for d in D if d is not D.NONE}
    assert marks == {"a", "u", "i", "o", "K", "F", "N", "~", "~a", "~u", "~i", "~F", "~K", "~N"}


@pytest.mark.parametrize("word, skeleton, labels", [
    ("Ealamu", "Elm", [D.a, D.a, D.u]),
    ("Eilomo", "Elm", [D.i, D.o, D.o]),
    ("waham~a", "whm", [D.a, D.a, D.Sh_a]),
    ("Elm", "Elm", [D.NONE, D.NONE, D.NONE]),
])
def test_strip(word, skeleton, labels):
    assert strip_diacritics(word) == (skeleton, labels)


@pytest.mark.parametrize("skeleton, labels, word", [
    ("Elm", [D.a, D.a, D.u], "Ealamu"),
    ("Elm", [D.NONE] * 3, "Elm"),
    ("whm", [D.a, D.u, D.NONE], "wahum"),
])
def test_apply(skeleton, labels, word):
    assert apply_diacritics(skeleton, labels) == word


def test_shadda_order_is_canonicalized():
    assert strip_diacritics("wahama~") == ("whm", [D.a, D.a, D.Sh_a])
    assert apply_diacritics(*strip_diacritics("wahama~")) == "waham~a"


@pytest.mark.parametrize("bad", ["aElm", "Eaim", "E~~", "E~o", "Ealamم", "Ealam+"])
def test_malformed(bad):
    with pytest.raises(MalformedWord):
        strip_diacritics(bad)


def test_length_mismatch():
    with pytest.raises(LengthMismatch):
        apply_diacritics("Elm", [D.a])


@pytest.mark.parametrize("word, label", [("Ealamu", D.u), ("Ealama", D.a), ("Elm", D.NONE)])
def test_syntactic_label(word, label):
    assert syntactic_label(word) == label


base = st.sampled_from(sorted(BASE_CHARS))
label = st.sampled_from(list(D))


@given(st.lists(st.tuples(base, label), min_size=1, max_size=12))
def test_round_trip(pairs):
    skeleton = "".join(c for c, _ in pairs)
    labels = [lab for _, lab in pairs]
    word = apply_diacritics(skeleton, labels)
    assert strip_diacritics(word) == (skeleton, labels)
    assert apply_diacritics(*strip_diacritics(word)) == word
    assert all(isinstance(x, D) for x in strip_diacritics(word)[1])
