"""
End-to-end acceptance checks. Each test carries a ``criterion`` marker; the
conftest prints one PASS/FAIL line per criterion in the terminal summary.
"""
import itertools
import math
import time

import numpy as np
import pytest
from scipy import stats

from diacmtl import checkpoint as ckpt
from diacmtl import nn
from diacmtl.alphabet import BASE_CHARS, apply_diacritics, strip_diacritics
from diacmtl.config import TASKS, ModelConfig
from diacmtl.corpus import batch, build_vocab, make_windows, parse_lines
from diacmtl.metrics import (EvalReport, diacritic_error_rate, evaluate, last_diacritic_error_rate,
                             lex_error_rate, oov_wer, welch_t_test, word_error_rate)
from diacmtl.model import DiacritizerModel, TaskOutputs
from diacmtl.synthetic import SyntheticLanguage, generate
from diacmtl.train import train

from gradcheck import worst_error

F64 = np.float64
SEEDS = (0, 1, 2)
# every surface mark group a base character can carry, written out by hand
MARK_GROUPS = ["", "a", "u", "i", "o", "K", "F", "N", "~", "~a", "~u", "~i", "~K", "~F", "~N"]


def _detail(request, text):
    request.node.user_properties.append(("detail", text))


# -- 1 -----------------------------------------------------------------------


def _full_model_error(seed):
    sents, lang = generate(6, seed=seed, max_words=5)
    cfg = ModelConfig(char_emb_dim=5, word_emb_dim=4, hidden=3, layers_main=2,
                      dropout_hidden=0.0, dropout_emb=0.0, feed_seg_hidden=True, seed=seed)
    model = DiacritizerModel(cfg, build_vocab(sents), lang.embeddings(
        [w for s in sents for w in s.words], 4), dtype=F64)
    rng = np.random.default_rng(seed)
    for p in model.parameters():
        if not p.frozen:
            p.value[...] = rng.normal(0, 0.4, p.value.shape)
    (b,) = batch(make_windows(sents[0], R=2)[:2], model.vocab, 2, supervise="span")
    out, cache = model.forward(b)
    model.loss(out, b, cache)
    model.backward(b, cache)

    def f():
        return model.loss(model.forward(b)[0], b)[0]

    pairs = [(p.value, p.grad) for p in model.parameters() if p.receives_grad and not p.frozen]
    return worst_error(f, pairs, rng, samples=2)


def _layer_errors(seed):
    rng = np.random.default_rng(seed)
    errs = {}
    table = nn.Parameter("t", rng.normal(size=(5, 3)))
    ids = rng.integers(0, 5, size=(2, 4))
    R = rng.normal(size=(2, 4, 3))
    _, c = nn.embedding_forward(table, ids)
    nn.embedding_backward(table, R, c)
    errs["embedding"] = worst_error(lambda: float((nn.embedding_forward(table, ids)[0] * R).sum()),
                                    [(table.value, table.grad)], rng)

    W, bias = nn.Parameter("W", rng.normal(size=(4, 3))), nn.Parameter("b", rng.normal(size=3))
    x = rng.normal(size=(5, 4))
    R = rng.normal(size=(5, 3))
    _, c = nn.dense_forward(W, bias, x)
    dx = nn.dense_backward(W, bias, R, c)
    errs["dense"] = worst_error(lambda: float((nn.dense_forward(W, bias, x)[0] * R).sum()),
                                [(W.value, W.grad), (bias.value, bias.grad), (x, dx)], rng)

    cell = nn.LstmCellWeights.create("c", 3, 4, rng, F64)
    for p in cell.parameters():
        p.value[...] = rng.normal(0, 0.5, p.value.shape)
    xs, h, cc = rng.normal(size=(2, 3)), rng.normal(size=(2, 4)), rng.normal(size=(2, 4))
    Rh, Rc = rng.normal(size=(2, 4)), rng.normal(size=(2, 4))

    def cell_loss():
        hn, cn, _ = nn.lstm_cell(xs, h, cc, cell)
        return float((hn * Rh).sum() + (cn * Rc).sum())

    _, _, c = nn.lstm_cell(xs, h, cc, cell)
    dxs, dh, dc = nn.lstm_cell_backward(Rh, Rc, c, cell)
    errs["lstm cell"] = worst_error(cell_loss, [(xs, dxs), (h, dh), (cc, dc)]
                                    + [(p.value, p.grad) for p in cell.parameters()], rng)

    net = nn.BiLSTM("s", 3, 3, 3, rng, F64)
    for p in net.parameters():
        p.value[...] = rng.normal(0, 0.5, p.value.shape)
    X = rng.normal(size=(2, 5, 3))
    lengths = np.array([5, 3])
    R = rng.normal(size=(2, 5, 6)) * (np.arange(5)[None, :, None] < lengths[:, None, None])
    _, caches = net.forward(X, lengths)
    dX = net.backward(R, caches)
    errs["stacked bilstm"] = worst_error(lambda: float((net.forward(X, lengths)[0] * R).sum()),
                                         [(p.value, p.grad) for p in net.parameters()] + [(X, dX)],
                                         rng, samples=3)

    logits = rng.normal(size=(3, 5, 6))
    targets = rng.integers(0, 6, size=(3, 5))
    _, _, c = nn.softmax_cross_entropy(logits, targets)
    g = nn.softmax_cross_entropy_backward(1.0, c)
    errs["softmax-ce"] = worst_error(lambda: nn.softmax_cross_entropy(logits, targets)[0],
                                     [(logits, g)], rng, samples=20)
    return errs


@pytest.mark.criterion(1, "gradient checks of every layer and the full ALL model (64-bit, 3 seeds)")
def test_gradient_correctness(request):
    t0 = time.process_time()
    worst = {}
    for seed in SEEDS:
        errs = _layer_errors(seed)
        errs["full ALL model"] = _full_model_error(seed)
        for k, v in errs.items():
            worst[k] = max(worst.get(k, 0.0), v)
    elapsed = time.process_time() - t0
    top = max(worst.values())
    _detail(request, f"max rel err {top:.2e}, {elapsed:.1f}s")
    assert top <= 1e-4, worst
    assert elapsed < 120


# -- 2 -----------------------------------------------------------------------


@pytest.mark.criterion(2, "strip -> label -> apply round trip over 1000 generated words")
def test_round_trip(request):
    t0 = time.process_time()
    rng = np.random.default_rng(0)
    alphabet = sorted(BASE_CHARS)
    words = []
    for _ in range(1000):
        n = int(rng.integers(1, 8))
        chars = [alphabet[int(k)] for k in rng.integers(0, len(alphabet), n)]
        marks = [MARK_GROUPS[int(k)] for k in rng.integers(0, len(MARK_GROUPS), n)]
        words.append("".join(c + m for c, m in zip(chars, marks)))
    mismatches = 0
    for w in words:
        skeleton, labels = strip_diacritics(w)
        mismatches += apply_diacritics(skeleton, labels) != w
    # and through the sentence pipeline, 20 words per line
    lines = [" ".join(words[k:k + 20]) for k in range(0, 1000, 20)]
    sents = parse_lines(lines, [" ".join(["NOUN"] * 20)] * 50, lines)
    for s, line in zip(sents, lines):
        rebuilt = [apply_diacritics(w, s.word_labels(k)) for k, w in enumerate(s.words)]
        mismatches += sum(a != b for a, b in zip(rebuilt, line.split()))
    elapsed = time.process_time() - t0
    _detail(request, f"{mismatches} mismatches, {elapsed:.2f}s")
    assert mismatches == 0
    assert elapsed < 5


# -- 3 -----------------------------------------------------------------------


def _recount(pred, gold, words, seen):
    """Brute-force metrics from surface strings, independent of the label code."""
    g_str = ["".join(ch + MARK_GROUPS[x] for ch, x in zip(w, g)) for w, g in zip(words, gold)]
    p_str = ["".join(ch + MARK_GROUPS[x] for ch, x in zip(w, p)) for w, p in zip(words, pred)]
    n = len(words)
    wrong_words = [a != b for a, b in zip(p_str, g_str)]
    chars = wrong_chars = last = lex = 0
    for w, p, g in zip(words, pred, gold):
        for k in range(len(w)):
            chars += 1
            wrong_chars += MARK_GROUPS[p[k]] != MARK_GROUPS[g[k]]
        last += MARK_GROUPS[p[-1]] != MARK_GROUPS[g[-1]]
        lex += any(MARK_GROUPS[p[k]] != MARK_GROUPS[g[k]] for k in range(len(w) - 1))
    oov = [k for k, w in enumerate(words) if w not in seen]
    return {
        "wer": 100.0 * sum(wrong_words) / n,
        "der": 100.0 * wrong_chars / chars,
        "ler": 100.0 * last / n,
        "lex": 100.0 * lex / n,
        "oov": 100.0 * sum(wrong_words[k] for k in oov) / len(oov) if oov else math.nan,
    }


def _as_labels(groups):
    # MARK_GROUPS index -> the label whose canonical marks are that group
    lookup = {strip_diacritics("b" + m)[1][0]: i for i, m in enumerate(MARK_GROUPS)}
    inverse = {i: lab for lab, i in lookup.items()}
    return [[inverse[x] for x in w] for w in groups]


@pytest.mark.criterion(3, "metric oracles on 100 random pairs and Welch's test vs scipy on 20")
def test_metric_oracles(request):
    t0 = time.process_time()
    rng = np.random.default_rng(3)
    exact = 0
    for _ in range(100):
        n = int(rng.integers(1, 25))
        words = ["".join(rng.choice(list("Elmktb"), size=int(rng.integers(1, 6)))) for _ in range(n)]
        gold = [list(rng.integers(0, 15, len(w))) for w in words]
        flip = rng.random()
        pred = [[x if rng.random() > flip else int(rng.integers(0, 15)) for x in g] for g in gold]
        seen = set(words[: int(rng.integers(0, n + 1))])
        want = _recount(pred, gold, words, seen)
        P, G = _as_labels(pred), _as_labels(gold)
        got = {
            "wer": word_error_rate(P, G),
            "der": diacritic_error_rate(P, G),
            "ler": last_diacritic_error_rate(P, G),
            "lex": lex_error_rate(P, G),
            "oov": oov_wer(P, G, words, seen),
        }
        same = all(got[k] == want[k] or (math.isnan(got[k]) and math.isnan(want[k])) for k in want)
        exact += same
    welch_worst = 0.0
    for _ in range(20):
        a = rng.normal(8.0, rng.uniform(0.05, 1.0), int(rng.integers(2, 10)))
        b = rng.normal(8.3, rng.uniform(0.05, 1.0), int(rng.integers(2, 10)))
        ref = stats.ttest_ind(a, b, equal_var=False)
        r = welch_t_test(list(a), list(b))
        welch_worst = max(welch_worst, abs(r.t - ref.statistic), abs(r.p - ref.pvalue))
    elapsed = time.process_time() - t0
    _detail(request, f"{exact}/100 exact, welch max diff {welch_worst:.1e}, {elapsed:.2f}s")
    assert exact == 100
    assert welch_worst <= 1e-6
    assert elapsed < 10


# -- 4 -----------------------------------------------------------------------


@pytest.mark.criterion(4, "ALL overfits 50 synthetic sentences to >= 99% DIAC char accuracy")
def test_overfitting(request):
    t0 = time.process_time()
    sents, lang = generate(50, seed=7)
    emb = lang.embeddings([w for s in sents for w in s.words], 64)
    cfg = ModelConfig(char_emb_dim=64, word_emb_dim=64, hidden=64, epochs=200, lr=0.001,
                      batch_size=4, dropout_hidden=0.0, dropout_emb=0.0, seed=0)
    probe = sents[0]
    seen = {}

    def check(record, model):
        if record["epoch"] % 5:
            return True
        r = evaluate(model, sents)
        restored = model.predict(" ".join(probe.words))
        seen.update(epoch=record["epoch"], acc=100.0 - r.der, restored=restored)
        return not (seen["acc"] >= 99.0 and restored == " ".join(probe.diacritized))

    res = train(cfg, sents, embeddings=emb, on_epoch=check)
    elapsed = time.process_time() - t0
    _detail(request, f"char acc {seen['acc']:.2f}% at epoch {seen['epoch']}, {elapsed:.0f}s")
    assert res.state.epoch <= 200
    assert seen["acc"] >= 99.0
    assert seen["restored"] == " ".join(probe.diacritized)
    assert elapsed < 600


# -- 5 -----------------------------------------------------------------------


@pytest.mark.criterion(5, "total loss equals the shared per-task loss when all four are equal")
def test_normalized_loss(request):
    sents, lang = generate(4, seed=1, max_words=6)
    cfg = ModelConfig(char_emb_dim=4, word_emb_dim=4, hidden=3, layers_main=1)
    model = DiacritizerModel(cfg, build_vocab(sents), lang.embeddings(
        [w for s in sents for w in s.words], 4), dtype=F64)
    (b,) = batch([w for s in sents for w in make_windows(s)][:3], model.vocab, 3, supervise="span")

    def fixture(targets, C):
        # same probability on the gold class for every task -> identical CE
        z = np.full(targets.shape + (C,), math.log(0.3 / (C - 1)))
        np.put_along_axis(z, targets[..., None], math.log(0.7), axis=-1)
        return z

    out = TaskOutputs(diac_logits=fixture(b.diac, 15), seg_probs=np.exp(fixture(b.seg, 3)),
                      syn_probs=np.exp(fixture(b.syn, 15)), pos_probs=np.exp(fixture(b.pos, 16)))
    total, terms = model.loss(out, b)
    per_task = -math.log(0.7)
    diff = max(abs(total - per_task), *(abs(v - per_task) for v in terms.values()))
    _detail(request, f"|total - per-task| = {abs(total - per_task):.1e}")
    assert len(terms) == 4
    assert diff <= 1e-6


# -- 6 -----------------------------------------------------------------------


@pytest.mark.criterion(6, "bit-identical training and metric-preserving checkpoints")
def test_determinism_and_persistence(request, tmp_path):
    sents, lang = generate(12, seed=5, max_words=6)
    emb = lang.embeddings([w for s in sents for w in s.words], 8)
    cfg = ModelConfig(char_emb_dim=8, word_emb_dim=8, hidden=6, layers_main=2, epochs=2, seed=9)
    runs = [train(cfg, sents[:9], sents[9:], embeddings=emb) for _ in range(2)]
    a, b = ({p.name: p.value.tobytes() for p in r.model.parameters()} for r in runs)
    path = tmp_path / "m.ckpt"
    ckpt.save_checkpoint(path, runs[0].model, runs[0].state, runs[0].optimizer)
    loaded, _, _ = ckpt.load_checkpoint(path)
    before = evaluate(runs[0].model, sents[9:]).to_lines()
    after = evaluate(loaded, sents[9:]).to_lines()
    _detail(request, f"{len(a)} parameter arrays compared")
    assert a == b
    assert before == after


# -- 7 -----------------------------------------------------------------------

ABLATION = dict(char_emb_dim=32, word_emb_dim=32, hidden=32, layers_main=2, epochs=6,
                batch_size=8, dropout_hidden=0.1, dropout_emb=0.1)


@pytest.mark.criterion(7, "ALL beats BASE (Char) on dev WER for a rule-generated language")
def test_directional_ablation(request):
    t0 = time.process_time()
    lang = SyntheticLanguage(0)
    sents = parse_lines(*lang.lines(2000, seed=21, max_words=8))
    tr, dev = sents[:1800], sents[1800:]
    emb = lang.embeddings([w for s in sents for w in s.words], 32)
    wins = 0
    scores = {"ALL": [], "BASE": []}
    for seed in (1, 2, 3):
        for name, kw in (("ALL", {}), ("BASE", dict(tasks=(), char_only=True))):
            cfg = ModelConfig(**ABLATION, **kw, seed=seed)
            res = train(cfg, tr, embeddings=emb)
            scores[name].append(evaluate(res.model, dev).wer)
        wins += scores["ALL"][-1] <= scores["BASE"][-1]
    elapsed = time.process_time() - t0
    mean_all, mean_base = np.mean(scores["ALL"]), np.mean(scores["BASE"])
    _detail(request, f"ALL {mean_all:.2f} vs BASE (Char) {mean_base:.2f} mean dev WER, "
                     f"{wins}/3 seeds, {elapsed:.0f}s")
    assert wins >= 2
    assert mean_all <= mean_base
    assert elapsed < 1800


# -- 8 -----------------------------------------------------------------------


def _ablation_matrix():
    configs = []
    for r in range(len(TASKS) + 1):
        for tasks in itertools.combinations(TASKS, r):
            feeds = (True, False) if tasks else (False,)
            passes = (False, True) if "pos" in tasks else (False,)
            for feed, passive in itertools.product(feeds, passes):
                configs.append(dict(tasks=tasks, feed_labels=feed, passivization=passive))
            if "seg" in tasks:
                configs.append(dict(tasks=tasks, feed_seg_hidden=True))
    configs.append(dict(tasks=(), char_only=True))
    return configs


@pytest.mark.criterion(8, "every ablation-table configuration trains one epoch and reports")
def test_ablation_matrix(request):
    configs = _ablation_matrix()
    data = {}
    for passive in (False, True):
        s, lang = generate(8, seed=2, passivization=passive, max_words=6)
        data[passive] = (s[:6], s[6:], lang.embeddings([w for x in s for w in x.words], 6))
    errors = []
    for kw in configs:
        cfg = ModelConfig(char_emb_dim=6, word_emb_dim=6, hidden=4, layers_main=1, epochs=1, **kw)
        tr, dev, emb = data[cfg.passivization]
        try:
            r = evaluate(train(cfg, tr, embeddings=emb).model, dev)
            assert isinstance(r, EvalReport)
            for key in ("wer", "der", "ler", "lex"):
                assert 0.0 <= getattr(r, key) <= 100.0
            for task in TASKS:
                assert (getattr(r, f"{task}_acc") is not None) == (task in cfg.tasks)
            assert r.words == sum(len(s) for s in dev)
            assert EvalReport.from_lines(r.to_lines()).to_lines() == r.to_lines()
        except Exception as exc:  # collect every failing row, not just the first
            errors.append(f"{cfg.name} {kw}: {exc!r}")
    _detail(request, f"{len(configs)} configurations, {len(errors)} errors")
    assert not errors, errors
