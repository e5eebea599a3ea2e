"""Command-line entry point.

Exit codes: 0 success, 1 usage or config error, 2 data error, 3 numeric failure.
Logs go to stderr; artifacts go to the files named by flags.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from ..corpus import TagSet, build_vocab, load_corpus, load_embeddings, load_split_manifest
from ..errors import DactagError, DataError, UsageError
from ..model import Seq2SeqTagger, build_model
from ..numerics import Rng
from ..training import finetune_risk, train
from .checkpoint import Checkpoint
from .config import Config, load_config, parse_overrides, preset
from .metrics import EvalReport
from .predict import check_tagset, predict, predictions_tsv

log = logging.getLogger("dactag")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _config_args(p):
    src = p.add_mutually_exclusive_group()
    src.add_argument("--config", help="key = value config file")
    src.add_argument("--preset", help="shipped preset: swda or mrda")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override one config key")
    p.add_argument("--seed", type=int, help="shortcut for --set seed=N")


def _data_args(p, splits):
    p.add_argument("--data", help="single corpus file, split by --splits")
    p.add_argument("--splits", help="JSON manifest of conversation ids per split")
    for name in splits:
        p.add_argument(f"--{name}", help=f"{name} corpus file (JSON lines)")


def _overrides(args) -> dict:
    pairs = {}
    for item in args.set:
        if "=" not in item:
            raise UsageError(f"--set expects KEY=VALUE, got {item!r}")
        k, v = item.split("=", 1)
        pairs[k.strip()] = v
    if getattr(args, "seed", None) is not None:
        pairs["seed"] = str(args.seed)
    return parse_overrides(pairs)


def _config(args) -> Config:
    if args.config:
        base = load_config(args.config)
    elif args.preset:
        base = preset(args.preset)
    else:
        base = Config()
    return base.replace(**_overrides(args))


def _splits(args, names, max_seq_len):
    if args.data:
        if not args.splits:
            raise UsageError("--data needs --splits")
        found = load_split_manifest(args.data, args.splits, max_seq_len)
        missing = [n for n in names if n not in found]
        if missing:
            raise DataError(f"{args.splits}: no split named {missing[0]!r}")
        return [found[n] for n in names]
    out = []
    for n in names:
        path = getattr(args, n)
        if not path:
            raise UsageError(f"--{n} (or --data with --splits) is required")
        out.append(load_corpus(path, max_seq_len))
    return out


def _open_log(path):
    return open(path, "w", encoding="utf-8", newline="\n") if path else None


def cmd_train(args) -> None:
    config = _config(args)
    train_c, dev_c = _splits(args, ["train", "dev"], config.max_seq_len)
    vocab = build_vocab(train_c, config.min_count)
    tagset = TagSet.from_conversations(list(train_c) + list(dev_c))
    rng = Rng(config.seed)
    emb = None
    if config.embeddings:
        emb = load_embeddings(config.embeddings, vocab, config.d_emb, rng.derive(3))
    model = build_model(config, vocab, tagset, rng=rng, embeddings=emb)
    log.info("training %s: %d train / %d dev conversations, %d tags, vocab %d",
             model.kind, len(train_c), len(dev_c), len(tagset), len(vocab))
    fh = _open_log(args.metrics)
    try:
        result = train(model, train_c, dev_c, config, fh)
    finally:
        if fh:
            fh.close()
    Checkpoint.from_model(model, "train", {"best_epoch": result.best_epoch, "best_dev": result.best_dev}).save(args.out)
    log.info("best dev %.4f at epoch %d; saved %s", result.best_dev, result.best_epoch, args.out)


def _load(path):
    ckpt = Checkpoint.load(path)
    return ckpt, ckpt.build_model()


def cmd_finetune(args) -> None:
    ckpt, model = _load(args.checkpoint)
    if not isinstance(model, Seq2SeqTagger):
        raise UsageError("finetune-risk needs a seq2seq checkpoint")
    config = ckpt.config.replace(**_overrides(args))
    if args.b_train:
        config = config.replace(B_train=args.b_train)
    model.config = config
    train_c, dev_c = _splits(args, ["train", "dev"], config.max_seq_len)
    check_tagset(model.tagset, list(train_c) + list(dev_c))
    fh = _open_log(args.metrics)
    try:
        result = finetune_risk(model, train_c, dev_c, config, fh, epochs=args.epochs)
    finally:
        if fh:
            fh.close()
    extra = {"best_epoch": result.best_epoch, "best_dev": result.best_dev, "best_risk": result.best_risk}
    Checkpoint.from_model(model, "risk", extra).save(args.out)
    log.info("risk fine-tuning: best dev %.4f (risk %.4f) at epoch %d; saved %s",
             result.best_dev, result.best_risk, result.best_epoch, args.out)


def _beam(args, config) -> int:
    return args.beam if args.beam else config.B_inf


def cmd_eval(args) -> None:
    ckpt, model = _load(args.checkpoint)
    (test_c,) = _splits(args, ["test"], ckpt.config.max_seq_len)
    preds = [p for p in predict(model, test_c, _beam(args, ckpt.config)) if p.gold is not None]
    if not preds:
        raise DataError("test corpus has no labeled utterances")
    tags = model.tagset
    report = EvalReport.build([tags.encode(p.predicted) for p in preds], [tags.encode(p.gold) for p in preds], tags.tags)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.txt").write_text(report.to_text(), encoding="utf-8")
    (out / "confusion.csv").write_text(report.confusion_csv(), encoding="utf-8")
    if args.subset:
        subset = [t.strip() for t in args.subset.split(",") if t.strip()]
        try:
            text = report.confusion_csv(subset)
        except ValueError as exc:
            raise UsageError(f"--subset: {exc}") from None
        (out / "confusion_subset.csv").write_text(text, encoding="utf-8")
    log.info("accuracy %.4f over %d targets; wrote %s", report.accuracy, report.n, out)


def cmd_predict(args) -> None:
    ckpt, model = _load(args.checkpoint)
    conv = load_corpus(args.input, ckpt.config.max_seq_len)
    preds = predict(model, conv, _beam(args, ckpt.config), args.attention_out)
    Path(args.out).write_text(predictions_tsv(preds), encoding="utf-8")
    log.info("wrote %d predictions to %s", len(preds), args.out)


def cmd_export_attention(args) -> None:
    ckpt, model = _load(args.checkpoint)
    conv = load_corpus(args.input, ckpt.config.max_seq_len)
    preds = predict(model, conv, _beam(args, ckpt.config), args.out_dir)
    log.info("wrote %d attention grids to %s", len(preds), args.out_dir)


def cmd_inspect(args) -> None:
    sys.stdout.write(Checkpoint.load(args.checkpoint).describe())


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="dactag", description="Dialogue-act tagging with seq2seq and CRF models.")
    parser.add_argument("-q", "--quiet", action="store_true", help="only log warnings")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("train", help="token-level training")
    _config_args(p)
    _data_args(p, ["train", "dev"])
    p.add_argument("--out", required=True, help="checkpoint to write")
    p.add_argument("--metrics", help="metric log (TSV)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("finetune-risk", help="expected-risk fine-tuning of a seq2seq checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
    p.add_argument("--seed", type=int)
    _data_args(p, ["train", "dev"])
    p.add_argument("--b-train", type=int, help="candidate beam size (default: config B_train)")
    p.add_argument("--epochs", type=int, help="default: config risk_epochs")
    p.add_argument("--out", required=True)
    p.add_argument("--metrics")
    p.set_defaults(func=cmd_finetune)

    p = sub.add_parser("eval", help="last-tag accuracy, per-tag scores and confusion matrix")
    p.add_argument("--checkpoint", required=True)
    _data_args(p, ["test"])
    p.add_argument("--beam", type=int, help="default: config B_inf")
    p.add_argument("--subset", help="comma-separated tags for an extra confusion view")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("predict", help="tag every utterance of a corpus")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--beam", type=int)
    p.add_argument("--out", required=True, help="TSV of predictions")
    p.add_argument("--attention-out", help="directory for one attention grid per window")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("export-attention", help="write one attention grid per window")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--beam", type=int)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_export_attention)

    p = sub.add_parser("inspect-checkpoint", help="print checkpoint metadata and tensor shapes")
    p.add_argument("checkpoint")
    p.set_defaults(func=cmd_inspect)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(stream=sys.stderr, level=logging.INFO, format="%(levelname)s %(message)s", force=True)
    try:
        args = build_parser().parse_args(argv)
        if args.quiet:
            logging.getLogger().setLevel(logging.WARNING)
        args.func(args)
    except DactagError as exc:
        log.error("%s", exc)
        return exc.exit_code
    except OSError as exc:
        log.error("%s", exc)
        return DataError.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
