"""
Rule-generated diacritized language in Buckwalter form.

Surface diacritics are a deterministic function of hidden structure:

* lexical vowels come from the stem and its part of speech (noun/verb
  homographs share a skeleton but not a vowel pattern),
* the definite article ``Al+`` geminates a following sun letter and drops the
  sukun on its ``l``,
* word-final case marks depend on the preceding word (verb -> nominative,
  preposition or ``bi+`` -> genitive, noun -> genitive construct, otherwise
  accusative), with nunation on indefinites and adjective agreement,
* the particle ``lam`` forces a jussive verb; passive verbs use ``u-i``
  vowels and are always followed by the preposition ``Eabora``.

So segmentation, POS and syntactic diacritics each carry real signal for
full diacritic restoration.
"""
import numpy as np

from .alphabet import DiacriticLabel as D, apply_diacritics
from .corpus import PretrainedEmbeddings, parse_lines

CONSONANTS = "bt vjHxd*rzs$SDTZEgfqkmnhwy".replace(" ", "")
SUN_LETTERS = frozenset("tvd*rzs$SDTZln")

FUNCTION_WORDS = {
    # skeleton: (labels, tag)
    "fy": ([D.i, D.NONE], "ADP"),
    "mn": ([D.i, D.o], "ADP"),
    "ElY": ([D.a, D.a, D.NONE], "ADP"),
    "Ebr": ([D.a, D.o, D.a], "ADP"),
    "hw": ([D.u, D.a], "PRON"),
    "hy": ([D.i, D.a], "PRON"),
    "lm": ([D.a, D.o], "PART"),
    "vm": ([D.Sh_u, D.Sh_a], "CCONJ"),
}
VIA = "Ebr"
LAM = "lm"

CASE = {"nom": (D.u, D.N), "gen": (D.i, D.K), "acc": (D.a, D.F)}


class SyntheticLanguage:
    def __init__(self, seed=0, n_stems=240):
        rng = np.random.default_rng(seed)
        self.stems = {}
        vowels = [D.a, D.i, D.u, D.o]
        while len(self.stems) < n_stems:
            n = int(rng.integers(2, 5))
            skel = "".join(rng.choice(list(CONSONANTS), size=n))
            if skel in self.stems or skel in FUNCTION_WORDS:
                continue
            r = rng.random()
            tags = ("NOUN",) if r < 0.55 else ("VERB",) if r < 0.75 else ("ADJ",) if r < 0.88 else ("NOUN", "VERB")
            pattern = [vowels[int(k)] for k in rng.integers(0, 4, size=n - 1)]
            self.stems[skel] = (tags, pattern)
        self.by_tag = {t: sorted(s for s, (tags, _) in self.stems.items() if t in tags)
                       for t in ("NOUN", "VERB", "ADJ")}

    # -- word construction ---------------------------------------------------

    def _stem_labels(self, skel, tag, passive, final):
        tags, pattern = self.stems[skel]
        n = len(skel)
        if tag == "VERB":
            inner = [D.u] + [D.i] * (n - 2) if passive else [D.a] * (n - 1)
        elif tag == "ADJ":
            inner = [D.a] + [D.i] * (n - 2)
        else:
            inner = list(pattern)
        return inner[:n - 1] + [final]

    def _word(self, skel, tag, final, conj=False, bi=False, definite=False, passive=False):
        """Returns (diacritized, segmented) strings."""
        segments = []
        if conj:
            segments.append(("w", [D.a]))
        if bi:
            segments.append(("b", [D.i]))
        labels = self._stem_labels(skel, tag, passive, final)
        if definite:
            if skel[0] in SUN_LETTERS:
                segments.append(("Al", [D.NONE, D.NONE]))
                labels[0] = {D.a: D.Sh_a, D.u: D.Sh_u, D.i: D.Sh_i}.get(labels[0], D.Sh_a)
            else:
                segments.append(("Al", [D.NONE, D.o]))
        segments.append((skel, labels))
        diac = "".join(apply_diacritics(s, l) for s, l in segments)
        seg = "+".join(apply_diacritics(s, l) for s, l in segments)
        return diac, seg

    def _function(self, skel, conj=False):
        labels, tag = FUNCTION_WORDS[skel]
        segments = ([("w", [D.a])] if conj else []) + [(skel, list(labels))]
        return (
            "".join(apply_diacritics(s, l) for s, l in segments),
            "+".join(apply_diacritics(s, l) for s, l in segments),
            tag,
        )

    # -- sentences -----------------------------------------------------------

    def _noun_phrase(self, rng, case, out, allow_bi=False, conj=False):
        bi = allow_bi and rng.random() < 0.3
        if bi:
            case = "gen"
        definite = rng.random() < 0.5
        skel = self.by_tag["NOUN"][int(rng.integers(len(self.by_tag["NOUN"])))]
        final = CASE[case][0] if definite else CASE[case][1]
        out.append(self._word(skel, "NOUN", final, conj=conj, bi=bi, definite=definite) + ("NOUN",))
        if rng.random() < 0.3:
            # construct state: the following noun is genitive
            skel2 = self.by_tag["NOUN"][int(rng.integers(len(self.by_tag["NOUN"])))]
            d2 = rng.random() < 0.5
            out.append(self._word(skel2, "NOUN", CASE["gen"][0] if d2 else CASE["gen"][1],
                                  definite=d2) + ("NOUN",))
            definite = d2
            case = "gen"
        if rng.random() < 0.35:
            adj = self.by_tag["ADJ"][int(rng.integers(len(self.by_tag["ADJ"])))]
            out.append(self._word(adj, "ADJ", CASE[case][0] if definite else CASE[case][1],
                                  definite=definite) + ("ADJ",))

    def _verb_clause(self, rng, out, conj=False):
        jussive = rng.random() < 0.2
        if jussive:
            out.append(self._function(LAM, conj=conj))
            conj = False
        passive = not jussive and rng.random() < 0.3
        skel = self.by_tag["VERB"][int(rng.integers(len(self.by_tag["VERB"])))]
        final = D.o if jussive else D.a
        tag = "VERB_PASS" if passive else "VERB_ACT"
        out.append(self._word(skel, "VERB", final, conj=conj, passive=passive) + (tag,))
        if passive:
            out.append(self._function(VIA))
            self._noun_phrase(rng, "gen", out)
            return
        self._noun_phrase(rng, "nom", out)
        if rng.random() < 0.6:
            self._noun_phrase(rng, "acc", out, allow_bi=True)

    def _prep_phrase(self, rng, out, conj=False):
        prep = ["fy", "mn", "ElY"][int(rng.integers(3))]
        out.append(self._function(prep, conj=conj))
        self._noun_phrase(rng, "gen", out)

    def sentence(self, rng, max_words=12):
        """List of (diacritized, segmented, pos) triples."""
        out = []
        clauses = int(rng.integers(1, 3))
        for k in range(clauses):
            conj = k > 0 and rng.random() < 0.7
            r = rng.random()
            if r < 0.6:
                self._verb_clause(rng, out, conj)
            elif r < 0.85:
                self._prep_phrase(rng, out, conj)
            else:
                pron = ["hw", "hy"][int(rng.integers(2))]
                out.append(self._function(pron, conj=conj))
                self._verb_clause(rng, out)
            if rng.random() < 0.3:
                self._prep_phrase(rng, out)
        return out[:max_words]

    def lines(self, n_sentences, seed=0, max_words=12):
        """``(text_lines, pos_lines, seg_lines)`` in the companion-file formats."""
        rng = np.random.default_rng(seed)
        text, pos, seg = [], [], []
        for _ in range(n_sentences):
            s = self.sentence(rng, max_words)
            text.append(" ".join(w for w, _, _ in s))
            seg.append(" ".join(g for _, g, _ in s))
            pos.append(" ".join(t for _, _, t in s))
        return text, pos, seg

    def embeddings(self, words, dim, seed=0, noise=0.5):
        """Frozen vectors that encode each surface word's part of speech, plus noise.

        Plays the role of distributional vectors trained on a large corpus:
        every surface form (including unseen ones) gets a vector.
        """
        rng = np.random.default_rng(seed)
        tags = ["NOUN", "VERB", "ADJ", "ADP", "PRON", "PART", "CCONJ", "DEF"]
        centroid = {t: rng.standard_normal(dim) / np.sqrt(dim) for t in tags}
        words = sorted(set(words))
        vecs = np.empty((len(words), dim), dtype=np.float32)
        for k, w in enumerate(words):
            v = noise * rng.standard_normal(dim) / np.sqrt(dim)
            core = w[1:] if w.startswith("w") and w[1:] in FUNCTION_WORDS else w
            if core in FUNCTION_WORDS:
                v += centroid[FUNCTION_WORDS[core][1]]
            else:
                stem_tags = self._stem_tags(w)
                for t in stem_tags:
                    v += centroid[t] / len(stem_tags)
                if "Al" in w:
                    v += 0.5 * centroid["DEF"]
            vecs[k] = 0.1 * v
        return PretrainedEmbeddings(dim=dim, tokens=words, vectors=vecs)

    def _stem_tags(self, surface):
        for cut in range(len(surface)):
            rest = surface[cut:]
            for strip in ("", "Al"):
                if strip and not rest.startswith(strip):
                    continue
                core = rest[len(strip):]
                if core in self.stems:
                    return self.stems[core][0]
        return ("NOUN",)


def generate(n_sentences, seed=0, lang_seed=0, passivization=False, max_words=12):
    """Parsed synthetic sentences plus the language object."""
    lang = SyntheticLanguage(lang_seed)
    text, pos, seg = lang.lines(n_sentences, seed, max_words)
    return parse_lines(text, pos, seg, passivization=passivization), lang


def write_files(prefix, lines):
    text, pos, seg = lines
    paths = (f"{prefix}.txt", f"{prefix}.pos", f"{prefix}.seg")
    for path, content in zip(paths, (text, pos, seg)):
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("\n".join(content) + "\n")
    return paths
