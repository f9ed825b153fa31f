"""
Command-line entry point: ``diacmtl <command> ...``.

Exit codes: 0 success, 1 runtime error, 2 input validation error.
"""
import argparse
import json
import logging
import math
import os
import sys

from . import __version__
from .config import load_config, parse_tasks, write_config_file
from .corpus import (Vocab, build_vocab, load_embeddings, oov_rate, parse_corpus, parse_lines,
                     pos_tagset, sentence_to_record)
from .errors import (AlignmentError, DegenerateVariance, DiacError, DimensionMismatch, EmptyCorpus, EmptyWord,
                     InvalidConfig, LengthMismatch, MalformedWord, ParseError, UnknownPosTag)

VALIDATION_ERRORS = (AlignmentError, DegenerateVariance, DimensionMismatch, EmptyCorpus, EmptyWord, InvalidConfig,
                     LengthMismatch, MalformedWord, ParseError, UnknownPosTag)

log = logging.getLogger("diacmtl")


class UsageError(Exception):
    """Bad command-line input that argparse itself cannot catch."""


# -- data loading ----------------------------------------------------------------


def read_dataset(path, passivization=False):
    """Sentences from a prepared directory, a dataset.jsonl file or a .txt/.pos/.seg prefix."""
    if os.path.isdir(path):
        path = os.path.join(path, "dataset.jsonl")
    if path.endswith(".jsonl"):
        text, pos, seg = [], [], []
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                try:
                    rec = json.loads(line)
                    text.append(rec["text"])
                    pos.append(rec["pos"])
                    seg.append(rec["seg"])
                except (json.JSONDecodeError, KeyError, TypeError) as exc:
                    raise ParseError(f"{path}: bad record ({exc})", lineno) from None
        return parse_lines(text, pos, seg, passivization)
    return parse_corpus(f"{path}.txt", f"{path}.pos", f"{path}.seg", passivization)


def _load_model(path):
    from .checkpoint import load_checkpoint

    if os.path.isdir(path):
        best = os.path.join(path, "best.ckpt")
        path = best if os.path.exists(best) else os.path.join(path, "last.ckpt")
    model, _, _ = load_checkpoint(path)
    return model


def _config_from_args(args):
    overrides = list(args.set or [])
    if args.tasks is not None:
        overrides.append(f"tasks={args.tasks}")
    for flag in ("feed_labels", "feed_seg_hidden", "passivization", "char_only"):
        value = getattr(args, flag)
        if value is not None:
            overrides.append(f"{flag}={value}")
    if args.seed is not None:
        overrides.append(f"seed={args.seed}")
    if args.epochs is not None:
        overrides.append(f"epochs={args.epochs}")
    return load_config(args.config, overrides)


def _embeddings(args, config):
    if args.emb is None:
        return None
    emb = load_embeddings(args.emb)
    if emb.dim != config.word_emb_dim:
        raise DimensionMismatch(
            f"{args.emb}: vectors have dim {emb.dim} but word_emb_dim={config.word_emb_dim}"
        )
    return emb


def _fmt(v):
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return "NA"
    return f"{v:.4f}" if isinstance(v, float) else str(v)


# -- commands --------------------------------------------------------------------


def cmd_prepare(args):
    sentences = parse_corpus(args.text, args.pos, args.seg, args.passivization)
    if not sentences:
        raise EmptyCorpus(f"{args.text}: no sentences")
    os.makedirs(args.out, exist_ok=True)
    tags = pos_tagset(args.passivization)
    with open(os.path.join(args.out, "dataset.jsonl"), "w", encoding="utf-8") as fh:
        for s in sentences:
            fh.write(json.dumps(sentence_to_record(s, tags), ensure_ascii=False) + "\n")
    vocab = build_vocab(sentences, passivization=args.passivization)
    vocab.save(os.path.join(args.out, "vocab.json"))
    reference = Vocab.load(args.train_vocab).training_word_set if args.train_vocab else None
    words = sum(len(s) for s in sentences)
    print(f"sentences {len(sentences)}")
    print(f"words {words}")
    print(f"chars {sum(len(w) for s in sentences for w in s.words)}")
    print(f"word_types {len(vocab.training_word_set)}")
    rate = oov_rate(sentences, reference) if reference is not None else None
    print(f"OOV rate {'NA' if rate is None else f'{rate:.2f}%'}")
    return 0


def cmd_train(args):
    from .train import train

    config = _config_from_args(args)
    train_sents = read_dataset(args.train, config.passivization)
    dev_sents = read_dataset(args.dev, config.passivization) if args.dev else None
    embeddings = _embeddings(args, config)
    if embeddings is None:
        log.warning("no --emb given: using random stand-in word vectors")
    os.makedirs(args.out, exist_ok=True)
    write_config_file(os.path.join(args.out, "config.txt"), config)

    def report(record, _model):
        dev = record.get("dev")
        tail = f" dev_wer {_fmt(dev['wer'])} dev_der {_fmt(dev['der'])}" if dev else ""
        print(f"epoch {record['epoch']} step {record['step']} loss {record['loss']:.6f}{tail}",
              flush=True)

    result = train(config, train_sents, dev_sents, out_dir=args.out, embeddings=embeddings,
                   resume=args.resume, on_epoch=report)
    print(f"model {config.name}")
    print(f"best_epoch {result.state.best_epoch if dev_sents else 'NA'}")
    print(f"checkpoint {os.path.join(args.out, 'best.ckpt' if dev_sents else 'last.ckpt')}")
    return 0


def cmd_eval(args):
    from .metrics import evaluate

    model = _load_model(args.checkpoint)
    sentences = read_dataset(args.data, model.config.passivization)
    if not sentences:
        raise EmptyCorpus(f"{args.data}: no sentences")
    report = evaluate(model, sentences)
    sys.stdout.write(report.to_lines())
    return 0


def cmd_restore(args):
    model = _load_model(args.checkpoint)
    src = open(args.input, encoding="utf-8") if args.input != "-" else sys.stdin
    with src:
        lines = src.read().splitlines()
    out = model.predict_many(lines)
    text = "".join(line + "\n" for line in out)
    if args.output == "-":
        sys.stdout.write(text)
    else:
        with open(args.output, "w", encoding="utf-8") as fh:
            fh.write(text)
    return 0


def read_scores(path, metric="wer"):
    """Per-run scores from a trials.json (or a directory holding one) or a plain number list."""
    if os.path.isdir(path):
        path = os.path.join(path, "trials.json")
    with open(path, encoding="utf-8") as fh:
        raw = fh.read()
    if path.endswith(".json"):
        try:
            return [float(r[metric]) for r in json.loads(raw)["reports"]]
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise ParseError(f"{path}: not a trials file ({exc})", 1) from None
    scores = []
    for lineno, line in enumerate(raw.splitlines(), start=1):
        for tok in line.replace(",", " ").split():
            try:
                scores.append(float(tok))
            except ValueError:
                raise ParseError(f"{path}: not a number: {tok!r}", lineno) from None
    return scores


def cmd_significance(args):
    from .metrics import welch_t_test

    a = read_scores(args.scores_a, args.metric)
    b = read_scores(args.scores_b, args.metric)
    if len(a) < 2 or len(b) < 2:
        raise UsageError("each sample needs at least two scores")
    r = welch_t_test(a, b, alpha=args.alpha)
    print(f"mean_a {_fmt(sum(a) / len(a))}")
    print(f"mean_b {_fmt(sum(b) / len(b))}")
    print(f"t {r.t:.6f}")
    print(f"dof {r.dof:.6f}")
    print(f"p {r.p:.6g}")
    print(f"significant {'yes' if r.significant else 'no'}")
    return 0


def cmd_trials(args):
    from .train import METRIC_KEYS, run_trials

    config = _config_from_args(args)
    seeds = [int(s) for s in args.seeds.split(",") if s.strip()]
    train_sents = read_dataset(args.train, config.passivization)
    dev_sents = read_dataset(args.dev, config.passivization)
    test_sents = read_dataset(args.test, config.passivization) if args.test else None
    summary = run_trials(config, train_sents, dev_sents, test_sents, seeds=seeds,
                         embeddings=_embeddings(args, config), out_dir=args.out)
    print(f"model {config.name}")
    for key in METRIC_KEYS:
        if summary.mean[key] is not None:
            print(f"{key} {summary.formatted(key)}")
    return 0


def cmd_synth(args):
    from .synthetic import SyntheticLanguage, write_files

    lang = SyntheticLanguage(args.lang_seed)
    lines = lang.lines(args.sentences, args.seed, args.max_words)
    for path in write_files(args.prefix, lines):
        print(path)
    if args.emb_dim:
        from .corpus import save_embeddings
        words = sorted({w for line in lines[0] for w in _strip_words(line)})
        save_embeddings(f"{args.prefix}.vec", lang.embeddings(words, args.emb_dim, args.seed))
        print(f"{args.prefix}.vec")
    return 0


def _strip_words(line):
    from .alphabet import strip_diacritics
    return [strip_diacritics(w)[0] for w in line.split()]


# -- argument parsing ------------------------------------------------------------


def _add_model_flags(p):
    p.add_argument("--config", help="flat key=value config file")
    p.add_argument("--set", action="append", metavar="KEY=VALUE",
                   help="override one config key (repeatable; wins over --config)")
    p.add_argument("--tasks", help='auxiliary tasks, e.g. "seg,syn,pos" or "" for none')
    p.add_argument("--feed-labels", dest="feed_labels", action="store_const", const="true")
    p.add_argument("--no-feed-labels", dest="feed_labels", action="store_const", const="false")
    p.add_argument("--feed-seg-hidden", dest="feed_seg_hidden", action="store_const", const="true")
    p.add_argument("--passivization", dest="passivization", action="store_const", const="true")
    p.add_argument("--char-only", dest="char_only", action="store_const", const="true",
                   help="BASE (Char): DIAC tower over character embeddings only")
    p.add_argument("--seed", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--emb", help="pretrained word vectors in .vec text format")


def build_parser():
    parser = argparse.ArgumentParser(prog="diacmtl", description="Multitask Arabic diacritic restoration.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--threads", type=int, default=1, help="BLAS threads (default 1, deterministic)")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prepare", help="validate a corpus and write dataset.jsonl + vocab.json")
    p.add_argument("text")
    p.add_argument("pos")
    p.add_argument("seg")
    p.add_argument("--out", required=True)
    p.add_argument("--passivization", action="store_true")
    p.add_argument("--train-vocab", help="vocab.json of the training split, for the OOV rate")
    p.set_defaults(func=cmd_prepare)

    p = sub.add_parser("train", help="train one model")
    p.add_argument("--train", required=True, help="prepared dir, dataset.jsonl or .txt/.pos/.seg prefix")
    p.add_argument("--dev")
    p.add_argument("--out", required=True)
    p.add_argument("--resume", help="checkpoint to continue from")
    _add_model_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="print an EvalReport")
    p.add_argument("checkpoint", help="checkpoint file or training directory (best.ckpt preferred)")
    p.add_argument("data")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("restore", help="diacritize undiacritized lines")
    p.add_argument("checkpoint")
    p.add_argument("input", nargs="?", default="-")
    p.add_argument("output", nargs="?", default="-")
    p.set_defaults(func=cmd_restore)

    p = sub.add_parser("significance", help="Welch t-test between two sets of run scores")
    p.add_argument("scores_a")
    p.add_argument("scores_b")
    p.add_argument("--metric", default="wer")
    p.add_argument("--alpha", type=float, default=0.05)
    p.set_defaults(func=cmd_significance)

    p = sub.add_parser("trials", help="train and evaluate once per seed, report mean (±std)")
    p.add_argument("--train", required=True)
    p.add_argument("--dev", required=True)
    p.add_argument("--test")
    p.add_argument("--out", required=True)
    p.add_argument("--seeds", default="1,2,3")
    _add_model_flags(p)
    p.set_defaults(func=cmd_trials)

    p = sub.add_parser("synth", help="write a rule-generated synthetic corpus")
    p.add_argument("prefix")
    p.add_argument("--sentences", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--lang-seed", type=int, default=0)
    p.add_argument("--max-words", type=int, default=12)
    p.add_argument("--emb-dim", type=int, default=0, help="also write matching .vec vectors")
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    if getattr(args, "tasks", None) is not None:
        try:
            parse_tasks(args.tasks)
        except InvalidConfig as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 2
    try:
        from threadpoolctl import threadpool_limits

        with threadpool_limits(limits=max(1, args.threads)):
            return args.func(args)
    except (VALIDATION_ERRORS + (UsageError,)) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (DiacError, OSError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
