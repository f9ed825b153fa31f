"""
Joint diacritization model.

Input representations:

* CharToWord: per word, ``[pretrained(word) ; composer-BiLSTM(chars of word)]``,
  consumed by the word-level SYN and POS towers.
* WordToChar: per character, ``[char embedding ; pretrained(containing word)]``,
  the base input of the DIAC tower. Boundary tokens get a zero word half.

The SEG tower runs over raw character embeddings. Softmax outputs of every
enabled auxiliary tower (optionally also the SEG hidden states) are
concatenated onto WordToChar before the DIAC BiLSTM.
"""
import zlib
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import nn
from .alphabet import NUM_LABELS, DiacriticLabel, apply_diacritics, strip_diacritics
from .config import ModelConfig
from .corpus import NO_WORD, SegLabel, batch as make_batches, make_sentence, make_windows, Window
from .errors import ConfigMismatch, EmptyWord

NUM_SEG = len(SegLabel)


@dataclass
class TaskOutputs:
    diac_logits: np.ndarray
    seg_probs: Optional[np.ndarray] = None
    syn_probs: Optional[np.ndarray] = None
    pos_probs: Optional[np.ndarray] = None
    seg_hidden: Optional[np.ndarray] = None
    diac_input_width: int = 0


@dataclass
class SentencePrediction:
    diac: list   # per word: list of DIAC label ids
    seg: list    # per word: list of SEG label ids (empty when SEG is off)
    syn: list    # per word label id or None
    pos: list

    def diacritized(self, words):
        return [apply_diacritics(w, [DiacriticLabel(x) for x in labs])
                for w, labs in zip(words, self.diac)]


def component_rng(seed, name):
    """Independent init stream per component so ablations keep shared towers identical."""
    return np.random.default_rng([seed, zlib.crc32(name.encode("utf-8"))])


def _gather_rows(table, index):
    """``table[index]`` with zeros wherever ``index`` is negative."""
    out = table[np.maximum(index, 0)]
    out *= (index >= 0)[..., None]
    return out


def _gather_words(probs, char_word):
    """Broadcast (B, Tw, C) word-level values onto (B, Tc) characters."""
    rows = np.arange(probs.shape[0])[:, None]
    out = probs[rows, np.maximum(char_word, 0)]
    out *= (char_word >= 0)[..., None]
    return out


def _scatter_words(dchar, char_word, Tw):
    B, Tc, C = dchar.shape
    out = np.zeros((B, Tw, C), dtype=dchar.dtype)
    b, t = np.nonzero(char_word >= 0)
    np.add.at(out, (b, char_word[b, t]), dchar[b, t])
    return out


def _one_hot_argmax(probs):
    out = np.zeros_like(probs)
    idx = probs.argmax(axis=-1)
    np.put_along_axis(out, idx[..., None], 1.0, axis=-1)
    return out


class DiacritizerModel:
    def __init__(self, config, vocab, embeddings, dtype=np.float32):
        if embeddings.dim != config.word_emb_dim:
            raise ConfigMismatch(
                f"pretrained vectors have dim {embeddings.dim}, config word_emb_dim={config.word_emb_dim}"
            )
        if len(vocab.pos_tags) != (17 if config.passivization else 16):
            raise ConfigMismatch("vocab POS tagset does not match the passivization setting")
        self.config = config
        self.vocab = vocab
        self.embeddings = embeddings
        self.dtype = np.dtype(dtype)
        c = config
        H = c.hidden
        seed = c.seed

        def rng(name):
            return component_rng(seed, name)

        self.char_emb = nn.Parameter(
            "char_emb", nn.init_embedding((len(vocab.char_to_id), c.char_emb_dim), rng("char_emb"), dtype))
        table = np.empty((len(embeddings) + 1, c.word_emb_dim), dtype=dtype)
        table[0] = nn.init_embedding((c.word_emb_dim,), rng("pretrained.unk"), dtype)
        table[1:] = embeddings.vectors
        self.pretrained = nn.Parameter("pretrained", table, frozen=True, trainable_rows=[0])

        self.uses_words = c.has("syn") or c.has("pos")
        self.composer = None
        if self.uses_words:
            self.composer = nn.BiLSTM("composer", c.char_emb_dim, H, c.layers_composer,
                                      rng("composer"), dtype, c.dropout_hidden)
        c2w_dim = c.word_emb_dim + 2 * H
        self.towers = {}
        self.heads = {}
        if c.has("seg"):
            self.towers["seg"] = nn.BiLSTM("seg", c.char_emb_dim, H, c.layers_seg, rng("seg"), dtype,
                                           c.dropout_hidden)
            self._make_head("seg", NUM_SEG, rng)
        if c.has("syn"):
            self.towers["syn"] = nn.BiLSTM("syn", c2w_dim, H, c.layers_main, rng("syn"), dtype,
                                           c.dropout_hidden)
            self._make_head("syn", NUM_LABELS, rng)
        if c.has("pos"):
            self.towers["pos"] = nn.BiLSTM("pos", c2w_dim, H, c.layers_main, rng("pos"), dtype,
                                           c.dropout_hidden)
            self._make_head("pos", len(vocab.pos_tags), rng)
        self.diac_tower = nn.BiLSTM("diac", self.diac_input_width, H, c.layers_main, rng("diac"), dtype,
                                    c.dropout_hidden)
        self._make_head("diac", NUM_LABELS, rng)
        self._row_cache = {}

    def _make_head(self, name, classes, rng):
        H2 = 2 * self.config.hidden
        W = nn.Parameter(f"{name}.out.W", nn.init_hidden((H2, classes), rng(f"{name}.out"), self.dtype))
        b = nn.Parameter(f"{name}.out.b", np.zeros(classes, dtype=self.dtype))
        self.heads[name] = (W, b)

    @property
    def feeds(self):
        """Ordered (block name, width) pairs of the DIAC tower input."""
        c = self.config
        blocks = [("char", c.char_emb_dim)]
        if not c.char_only:
            blocks.append(("word", c.word_emb_dim))
        if c.feed_labels:
            if c.has("seg"):
                blocks.append(("seg", NUM_SEG))
            if c.has("syn"):
                blocks.append(("syn", NUM_LABELS))
            if c.has("pos"):
                blocks.append(("pos", len(self.vocab.pos_tags)))
        if c.feed_seg_hidden and c.has("seg"):
            blocks.append(("seg_hidden", 2 * c.hidden))
        return blocks

    @property
    def diac_input_width(self):
        return sum(w for _, w in self.feeds)

    def parameters(self):
        params = [self.char_emb, self.pretrained]
        if self.composer is not None:
            params += self.composer.parameters()
        for name in ("seg", "syn", "pos"):
            if name in self.towers:
                params += self.towers[name].parameters()
                params += list(self.heads[name])
        params += self.diac_tower.parameters()
        params += list(self.heads["diac"])
        return params

    def named_parameters(self):
        return {p.name: p for p in self.parameters()}

    # -- representations -----------------------------------------------------

    def word_rows(self, words):
        rows = np.empty(len(words), dtype=np.int64)
        for k, w in enumerate(words):
            r = self._row_cache.get(w)
            if r is None:
                r = self.embeddings.row(w)
                r = 0 if r is None else r + 1
                self._row_cache[w] = r
            rows[k] = r
        return rows

    def char_based_word_repr(self, word_char_ids):
        """Composer BiLSTM final states for one word (inference mode)."""
        ids = np.asarray(word_char_ids)
        if ids.size == 0:
            raise EmptyWord("cannot compose a representation for an empty word")
        if self.composer is None:
            raise ConfigMismatch("character composer exists only when SYN or POS is enabled")
        E, _ = nn.embedding_forward(self.char_emb, ids[None])
        out, _ = self.composer.forward(E, [len(ids)])
        H = self.config.hidden
        return np.concatenate([out[0, -1, :H], out[0, 0, H:]])

    def char_to_word(self, words):
        """CharToWord vectors for a list of skeleton words (inference mode)."""
        rows = self.word_rows(words)
        P, _ = nn.embedding_forward(self.pretrained, rows)
        comp = np.stack([
            self.char_based_word_repr([self.vocab.char_id(ch) for ch in w]) for w in words
        ])
        return np.concatenate([P, comp], axis=1)

    def word_to_char(self, chars, word_of_char, words):
        """WordToChar vectors for a character stream (inference mode)."""
        ids = np.array([self.vocab.boundary_id if woc == NO_WORD else self.vocab.char_id(ch)
                        for ch, woc in zip(chars, word_of_char)])
        E, _ = nn.embedding_forward(self.char_emb, ids)
        P, _ = nn.embedding_forward(self.pretrained, self.word_rows(words))
        return np.concatenate([E, _gather_rows(P, np.asarray(word_of_char))], axis=1)

    # -- forward / backward --------------------------------------------------

    def _check_batch(self, batch):
        if self.config.has("pos") and batch.pos.size and batch.pos.max() >= len(self.vocab.pos_tags):
            raise ConfigMismatch("POS labels exceed the model's tagset")

    def forward(self, batch, training=False, rng=None):
        """Run every enabled tower; returns ``(TaskOutputs, cache)``."""
        self._check_batch(batch)
        c = self.config
        H = c.hidden
        cache = {}
        dt = self.dtype

        E, cache["E"] = nn.embedding_forward(self.char_emb, batch.char_ids)
        E, cache["E_drop"] = nn.dropout(E, c.dropout_emb, training, rng)

        need_pretrained = not c.char_only or self.uses_words
        if need_pretrained:
            P, cache["P"] = nn.embedding_forward(self.pretrained, self.word_rows(batch.uwords))
            P, cache["P_drop"] = nn.dropout(P, c.dropout_emb, training, rng)

        out = TaskOutputs(diac_logits=None)
        probs = {}
        if self.uses_words:
            Wc, cache["Wc"] = nn.embedding_forward(self.char_emb, batch.uword_char_ids)
            Wc, cache["Wc_drop"] = nn.dropout(Wc, c.dropout_emb, training, rng)
            comp, cache["composer"] = self.composer.forward(Wc, batch.uword_len, training, rng)
            rows = np.arange(len(batch.uwords))
            readout = np.concatenate([comp[rows, batch.uword_len - 1, :H], comp[rows, 0, H:]], axis=1)
            cache["comp_shape"] = comp.shape
            c2w = np.concatenate([P, readout], axis=1)[batch.word_uword]
            for task in ("syn", "pos"):
                if task not in self.towers:
                    continue
                h, tcache = self.towers[task].forward(c2w, batch.word_len, training, rng)
                logits, hcache = nn.dense_forward(*self.heads[task], h)
                probs[task] = nn.softmax(logits)
                cache[task] = (tcache, hcache, logits)

        if "seg" in self.towers:
            h, tcache = self.towers["seg"].forward(E, batch.char_len, training, rng)
            logits, hcache = nn.dense_forward(*self.heads["seg"], h)
            probs["seg"] = nn.softmax(logits)
            cache["seg"] = (tcache, hcache, logits)
            out.seg_hidden = h

        out.seg_probs = probs.get("seg")
        out.syn_probs = probs.get("syn")
        out.pos_probs = probs.get("pos")

        fed = dict(probs)
        if not training and c.hard_label_feed:
            fed = {k: _one_hot_argmax(v) for k, v in probs.items()}
        blocks = []
        for name, _ in self.feeds:
            if name == "char":
                blocks.append(E)
            elif name == "word":
                blocks.append(_gather_rows(P, batch.char_uword))
            elif name == "seg":
                blocks.append(fed["seg"])
            elif name in ("syn", "pos"):
                blocks.append(_gather_words(fed[name], batch.char_word))
            elif name == "seg_hidden":
                blocks.append(out.seg_hidden)
        X = np.concatenate(blocks, axis=2).astype(dt, copy=False)
        h, cache["diac"] = self.diac_tower.forward(X, batch.char_len, training, rng)
        logits, cache["diac_head"] = nn.dense_forward(*self.heads["diac"], h)
        out.diac_logits = logits
        out.diac_input_width = X.shape[2]
        cache["probs"] = probs
        return out, cache

    def loss(self, outputs, batch, cache=None):
        """Mean of the enabled tasks' masked cross-entropies.

        Returns ``(total, per_task)``; with ``cache`` the CE caches are stored
        for :meth:`backward`.
        """
        terms = {}
        ce = {}
        terms["diac"], _, ce["diac"] = nn.softmax_cross_entropy(
            outputs.diac_logits, batch.diac, batch.char_loss_mask)
        if outputs.seg_probs is not None:
            terms["seg"], _, ce["seg"] = nn.softmax_cross_entropy(
                cache["seg"][2] if cache else np.log(outputs.seg_probs), batch.seg, batch.char_loss_mask)
        for task, labels in (("syn", batch.syn), ("pos", batch.pos)):
            p = getattr(outputs, f"{task}_probs")
            if p is not None:
                terms[task], _, ce[task] = nn.softmax_cross_entropy(
                    cache[task][2] if cache else np.log(p), labels, batch.word_loss_mask)
        total = sum(terms.values()) / len(terms)
        if cache is not None:
            cache["ce"] = ce
        return total, terms

    def backward(self, batch, cache):
        """Backpropagate the normalized total loss (d total = 1)."""
        c = self.config
        H = c.hidden
        ce = cache["ce"]
        scale = 1.0 / len(ce)
        probs = cache["probs"]

        dlogits = nn.softmax_cross_entropy_backward(scale, ce["diac"])
        dh = nn.dense_backward(*self.heads["diac"], dlogits, cache["diac_head"])
        dX = self.diac_tower.backward(dh, cache["diac"])

        dE = None
        dP = None
        dprobs = {}
        dseg_hidden = None
        offset = 0
        for name, width in self.feeds:
            block = dX[:, :, offset:offset + width]
            offset += width
            if name == "char":
                dE = block.copy()
            elif name == "word":
                dP = np.zeros((len(batch.uwords), c.word_emb_dim), dtype=dX.dtype)
                b, t = np.nonzero(batch.char_uword >= 0)
                np.add.at(dP, batch.char_uword[b, t], block[b, t])
            elif name == "seg":
                dprobs["seg"] = block
            elif name in ("syn", "pos"):
                dprobs[name] = _scatter_words(block, batch.char_word, batch.word_uword.shape[1])
            elif name == "seg_hidden":
                dseg_hidden = block

        if "seg" in self.towers:
            tcache, hcache, _ = cache["seg"]
            dl = nn.softmax_cross_entropy_backward(scale, ce["seg"])
            if "seg" in dprobs:
                dl = dl + nn.softmax_backward(dprobs["seg"], probs["seg"])
            dh = nn.dense_backward(*self.heads["seg"], dl, hcache)
            if dseg_hidden is not None:
                dh = dh + dseg_hidden
            dE += self.towers["seg"].backward(dh, tcache)

        if self.uses_words:
            dc2w = None
            for task in ("syn", "pos"):
                if task not in self.towers:
                    continue
                tcache, hcache, _ = cache[task]
                dl = nn.softmax_cross_entropy_backward(scale, ce[task])
                if task in dprobs:
                    dl = dl + nn.softmax_backward(dprobs[task], probs[task])
                dh = nn.dense_backward(*self.heads[task], dl, hcache)
                d = self.towers[task].backward(dh, tcache)
                dc2w = d if dc2w is None else dc2w + d
            dc2w = dc2w * (batch.word_mask > 0)[..., None]
            dcw = np.zeros((len(batch.uwords), dc2w.shape[2]), dtype=dc2w.dtype)
            np.add.at(dcw, batch.word_uword.reshape(-1), dc2w.reshape(-1, dc2w.shape[2]))
            Dw = c.word_emb_dim
            dP = dcw[:, :Dw] if dP is None else dP + dcw[:, :Dw]
            dcomp = np.zeros(cache["comp_shape"], dtype=dcw.dtype)
            rows = np.arange(len(batch.uwords))
            dcomp[rows, batch.uword_len - 1, :H] += dcw[:, Dw:Dw + H]
            dcomp[rows, 0, H:] += dcw[:, Dw + H:]
            dWc = self.composer.backward(dcomp, cache["composer"])
            dWc = nn.dropout_backward(dWc, cache["Wc_drop"])
            nn.embedding_backward(self.char_emb, dWc, cache["Wc"])

        if dP is not None:
            dP = nn.dropout_backward(dP, cache["P_drop"])
            nn.embedding_backward(self.pretrained, dP, cache["P"])
        dE = nn.dropout_backward(dE, cache["E_drop"])
        nn.embedding_backward(self.char_emb, dE, cache["E"])

    def train_step_loss(self, batch, rng):
        """Forward in training mode, compute loss, backpropagate. Returns (total, per_task)."""
        outputs, cache = self.forward(batch, training=True, rng=rng)
        total, terms = self.loss(outputs, batch, cache)
        self.backward(batch, cache)
        return total, terms

    # -- inference -----------------------------------------------------------

    def decode(self, sentences, batch_size=64):
        """Predict every word of every sentence.

        A word's labels come from the window centered on it. Windows that
        cover an identical word span produce identical outputs in inference
        mode, so each distinct span is run once and all its centers read off.
        """
        spans = {}
        for si, s in enumerate(sentences):
            for w in make_windows(s, self.config.window_R):
                spans.setdefault((si, w.lo, w.hi), []).append(w.center)
        keys = list(spans)
        windows = [Window(sentences[si], lo, lo, hi) for si, lo, hi in keys]
        preds = [SentencePrediction(diac=[None] * len(s), seg=[None] * len(s),
                                    syn=[None] * len(s), pos=[None] * len(s)) for s in sentences]
        H_seg = self.config.has("seg")
        for start in range(0, len(windows), batch_size):
            chunk = windows[start:start + batch_size]
            (batch,) = make_batches(chunk, self.vocab, batch_size=len(chunk))
            out, _ = self.forward(batch, training=False)
            diac = out.diac_logits.argmax(axis=-1)
            seg = out.seg_probs.argmax(axis=-1) if H_seg else None
            syn = out.syn_probs.argmax(axis=-1) if out.syn_probs is not None else None
            pos = out.pos_probs.argmax(axis=-1) if out.pos_probs is not None else None
            for b, win in enumerate(chunk):
                si, lo, hi = keys[start + b]
                s = sentences[si]
                for k in spans[(si, lo, hi)]:
                    c0 = s.word_start[k] - win.char_lo
                    n = len(s.words[k])
                    p = preds[si]
                    p.diac[k] = [int(x) for x in diac[b, c0:c0 + n]]
                    p.seg[k] = [int(x) for x in seg[b, c0:c0 + n]] if seg is not None else []
                    p.syn[k] = int(syn[b, k - lo]) if syn is not None else None
                    p.pos[k] = int(pos[b, k - lo]) if pos is not None else None
        return preds

    def predict(self, sentence):
        """Diacritize one sentence (string or list of words); marks in the input are ignored."""
        words = sentence.split() if isinstance(sentence, str) else list(sentence)
        skeletons = [strip_diacritics(w)[0] for w in words]
        if not skeletons:
            return ""
        s = make_sentence(skeletons)
        (pred,) = self.decode([s])
        return " ".join(pred.diacritized(s.words))

    def predict_many(self, lines, batch_size=64):
        parsed = []
        for line in lines:
            skeletons = [strip_diacritics(w)[0] for w in line.split()]
            parsed.append(make_sentence(skeletons) if skeletons else None)
        real = [s for s in parsed if s is not None]
        preds = iter(self.decode(real, batch_size))
        out = []
        for s in parsed:
            out.append("" if s is None else " ".join(next(preds).diacritized(s.words)))
        return out
