"""Training loop, checkpoint selection and multi-seed trials."""
import json
import logging
import math
import os
from dataclasses import asdict, dataclass, field

import numpy as np

from . import nn
from .checkpoint import load_checkpoint, restore_moments, save_checkpoint
from .corpus import batch as make_batches, build_vocab, make_windows, random_embeddings
from .errors import ConfigMismatch
from .metrics import evaluate
from .model import DiacritizerModel

log = logging.getLogger(__name__)

SHUFFLE_STREAM = 1
DROPOUT_STREAM = 2


@dataclass
class TrainState:
    seed: int = 0
    epoch: int = 0
    step: int = 0
    adam_t: int = 0
    best_dev_wer: float = math.inf
    best_epoch: int = -1

    def to_dict(self):
        d = asdict(self)
        d["best_dev_wer"] = None if math.isinf(self.best_dev_wer) else self.best_dev_wer
        # shuffling and dropout draw from per-epoch streams derived from the seed
        d["rng"] = {"scheme": "seedsequence", "streams": {"shuffle": SHUFFLE_STREAM,
                                                         "dropout": DROPOUT_STREAM}}
        return d

    @classmethod
    def from_dict(cls, d):
        d = {k: v for k, v in d.items() if k != "rng"}
        if d.get("best_dev_wer") is None:
            d["best_dev_wer"] = math.inf
        return cls(**d)


def epoch_shuffle_seed(seed, epoch):
    return int(np.random.SeedSequence([seed, SHUFFLE_STREAM, epoch]).generate_state(1)[0])


def epoch_dropout_rng(seed, epoch):
    return np.random.default_rng([seed, DROPOUT_STREAM, epoch])


@dataclass
class TrainResult:
    model: DiacritizerModel
    state: TrainState
    history: list = field(default_factory=list)
    best_values: dict = None
    optimizer: nn.Adam = None

    def best_model(self):
        """Copy of the model holding the best-dev parameters (final if no dev set)."""
        if self.best_values is None:
            return self.model
        m = DiacritizerModel(self.model.config, self.model.vocab, self.model.embeddings,
                             dtype=self.model.dtype)
        for p in m.parameters():
            p.value[...] = self.best_values[p.name]
        return m


def corpus_windows(sentences, R):
    return [w for s in sentences for w in make_windows(s, R)]


def train(config, train_sentences, dev_sentences=None, out_dir=None, embeddings=None,
          vocab=None, dtype=np.float32, resume=None, on_epoch=None):
    """Train a model; returns a :class:`TrainResult`.

    With ``out_dir`` the final model goes to ``last.ckpt``, the best-dev-WER
    model to ``best.ckpt`` and one JSON record per epoch to ``train.log.jsonl``.
    ``resume`` is a checkpoint path to continue from.
    """
    moments = None
    if resume is not None:
        model, state_d, moments = load_checkpoint(resume, dtype=dtype)
        if model.config.to_dict() != {**config.to_dict(), "epochs": model.config.epochs}:
            raise ConfigMismatch("resume checkpoint was trained with a different config")
        model.config = config
        state = TrainState.from_dict(state_d)
        vocab = model.vocab
    else:
        if vocab is None:
            vocab = build_vocab(train_sentences, config.min_count, config.passivization)
        if embeddings is None:
            words = [w for w in vocab.word_to_id if w != "<unk>"]
            embeddings = random_embeddings(words, config.word_emb_dim, seed=config.seed)
        model = DiacritizerModel(config, vocab, embeddings, dtype=dtype)
        state = TrainState(seed=config.seed)

    opt = nn.Adam(model.parameters(), lr=config.lr, beta1=config.beta1, beta2=config.beta2,
                  eps=config.eps, clip_norm=config.clip_norm or None)
    opt.t = state.adam_t
    if moments:
        restore_moments(opt, moments)

    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
    log_path = os.path.join(out_dir, "train.log.jsonl") if out_dir else None
    windows = corpus_windows(train_sentences, config.window_R)
    result = TrainResult(model=model, state=state, optimizer=opt)

    while state.epoch < config.epochs:
        epoch = state.epoch
        rng = epoch_dropout_rng(config.seed, epoch)
        batches = make_batches(windows, vocab, config.batch_size,
                               seed=epoch_shuffle_seed(config.seed, epoch), supervise=config.supervise)
        sums = {}
        total = 0.0
        for b in batches:
            loss, terms = model.train_step_loss(b, rng)
            opt.step()
            state.step += 1
            total += loss
            for k, v in terms.items():
                sums[k] = sums.get(k, 0.0) + v
        state.epoch += 1
        state.adam_t = opt.t
        record = {
            "epoch": state.epoch,
            "step": state.step,
            "loss": total / len(batches),
            "task_losses": {k: v / len(batches) for k, v in sums.items()},
        }
        improved = False
        if dev_sentences:
            report = evaluate(model, dev_sentences, vocab.training_word_set)
            record["dev"] = report.to_dict()
            if report.wer < state.best_dev_wer:
                state.best_dev_wer = report.wer
                state.best_epoch = state.epoch
                improved = True
                result.best_values = {p.name: p.value.copy() for p in model.parameters()}
        result.history.append(record)
        log.info("epoch %d step %d loss %.5f%s", state.epoch, state.step, record["loss"],
                 f" dev WER {record['dev']['wer']:.2f}" if "dev" in record else "")
        if out_dir:
            with open(log_path, "a", encoding="utf-8") as fh:
                fh.write(json.dumps(record, sort_keys=True, default=_json_default) + "\n")
            save_checkpoint(os.path.join(out_dir, "last.ckpt"), model, state, opt)
            if improved:
                save_checkpoint(os.path.join(out_dir, "best.ckpt"), model, state, opt)
        if on_epoch is not None and on_epoch(record, model) is False:
            break
    return result


def _json_default(v):
    if isinstance(v, float) and math.isnan(v):
        return None
    raise TypeError(repr(v))


@dataclass
class TrialSummary:
    seeds: list
    reports: list
    mean: dict
    std: dict

    def formatted(self, key):
        """Table-style ``mean (±std)`` string."""
        return f"{self.mean[key]:.2f} (±{self.std[key]:.2f})"

    def to_dict(self):
        return {"seeds": self.seeds, "reports": [r.to_dict() for r in self.reports],
                "mean": self.mean, "std": self.std}


METRIC_KEYS = ("wer", "der", "ler", "lex", "oov_wer", "seg_acc", "syn_acc", "pos_acc")


def summarize(seeds, reports):
    mean, std = {}, {}
    for key in METRIC_KEYS:
        vals = [getattr(r, key) for r in reports]
        if any(v is None or (isinstance(v, float) and math.isnan(v)) for v in vals):
            mean[key] = std[key] = None
            continue
        arr = np.asarray(vals, dtype=np.float64)
        mean[key] = float(arr.mean())
        std[key] = float(arr.std(ddof=1)) if len(arr) > 1 else 0.0
    return TrialSummary(seeds=list(seeds), reports=list(reports), mean=mean, std=std)


def run_trials(config, train_sentences, dev_sentences, test_sentences=None, seeds=(1, 2, 3),
               embeddings=None, out_dir=None, dtype=np.float32):
    """Independent trainings per seed, evaluated with the best-dev model."""
    seeds = list(seeds)
    if len(seeds) < 2:
        raise ValueError("run_trials needs at least two seeds")
    reports = []
    eval_set = test_sentences if test_sentences is not None else dev_sentences
    for seed in seeds:
        sub = os.path.join(out_dir, f"seed{seed}") if out_dir else None
        res = train(config.replace(seed=seed), train_sentences, dev_sentences, sub,
                    embeddings=embeddings, dtype=dtype)
        model = res.best_model()
        reports.append(evaluate(model, eval_set, model.vocab.training_word_set))
    summary = summarize(seeds, reports)
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
        with open(os.path.join(out_dir, "trials.json"), "w", encoding="utf-8") as fh:
            json.dump(summary.to_dict(), fh, indent=2, sort_keys=True, default=_json_default)
    return summary
