"""End-to-end acceptance checks; each records one PASS/FAIL line in the run summary."""
import io
import json
import math
import time

import numpy as np
import pytest

from conftest import toy_model
from dactag import numerics as nx
from dactag.beam import beam_search
from dactag.corpus import TagSet, build_vocab, encode_batch, save_corpus, windows_for
from dactag.crf import crf_log_partition, crf_nll_op, viterbi
from dactag.harness.checkpoint import load_checkpoint, save_checkpoint
from dactag.harness.cli import main
from dactag.harness.config import preset
from dactag.model import build_model
from dactag.numerics import Rng, grad_check, parameter
from dactag.objectives import batch_risk_loss
from dactag.synthetic import dependency_corpus, grammar_corpus, split
from dactag.training import dev_accuracy, expected_risk, finetune_risk, predict_windows, train
from test_beam import exhaustive
from test_crf import brute

GRAD_TOL = 1e-4


def op_cases(rng):
    """(name, f, params) for every differentiable operation."""
    a, b = parameter(rng.normal(size=(3, 4))), parameter(rng.normal(size=(4, 2)))
    c = parameter(rng.normal(size=(3, 4)))
    row = parameter(rng.normal(size=(1, 4)))
    t3 = parameter(rng.normal(size=(2, 3, 4)))
    table = parameter(rng.normal(size=(6, 3)))
    ids = np.array([[0, 2, 2], [5, 1, 0]])
    w34, w32 = rng.normal(size=(3, 4)), rng.normal(size=(3, 2))
    gold = rng.integers(0, 4, 3)
    xs, h0 = parameter(rng.normal(size=(4, 2, 3))), parameter(rng.normal(size=(2, 5)))
    W, U, bb = (parameter(rng.normal(size=s) * 0.5) for s in [(3, 15), (5, 15), (1, 15)])
    mask = np.array([[1, 1], [1, 0], [1, 1], [0, 1]], float)
    keep = np.array([[1, 1], [0, 1], [1, 1], [1, 0]], float)
    wh = rng.normal(size=(4, 2, 5))
    unary, trans = parameter(rng.normal(size=(3, 5, 4))), parameter(rng.normal(size=(5, 4)))
    cgold, cstart = rng.integers(0, 4, (3, 5)), np.array([0, 2, 4])
    cand = parameter(rng.normal(size=(3, 4)))
    costs = rng.integers(0, 2, (3, 4)).astype(float)
    w24, w233, w232 = rng.normal(size=(2, 4)), rng.normal(size=(2, 3, 3)), rng.normal(size=(2, 3, 2))

    def dot(node, w):
        return nx.sum(nx.mul(node, w))

    return [
        ("matmul", lambda: dot(nx.matmul(a, b), w32), [a, b]),
        ("add", lambda: dot(nx.add(a, row), w34), [a, row]),
        ("sub", lambda: dot(nx.sub(a, c), w34), [a, c]),
        ("mul", lambda: dot(nx.mul(a, c), w34), [a, c]),
        ("scale", lambda: dot(nx.scale(a, -1.7), w34), [a]),
        ("sigmoid", lambda: dot(nx.sigmoid(a), w34), [a]),
        ("tanh", lambda: dot(nx.tanh(a), w34), [a]),
        ("exp", lambda: dot(nx.exp(a), w34), [a]),
        ("softmax", lambda: dot(nx.softmax(a, axis=1), w34), [a]),
        ("log_softmax+nll", lambda: nx.scale(nx.sum(nx.pick(nx.log_softmax(a, axis=1), gold)), -1.0), [a]),
        ("concat", lambda: dot(nx.concat([a, c], axis=1), np.tile(w34, 2)), [a, c]),
        ("stack", lambda: dot(nx.stack([a, c], axis=0), np.stack([w34, -w34])), [a, c]),
        ("mean", lambda: dot(nx.mean(t3, axis=0), w34), [t3]),
        ("sum", lambda: dot(nx.sum(t3, axis=1), w24), [t3]),
        ("reshape+transpose", lambda: dot(nx.transpose(nx.reshape(a, (4, 3)), (1, 0)), w34), [a]),
        ("take+slice", lambda: dot(nx.slice_axis(nx.take(t3, 1, axis=0), 1, 3, axis=1), w32), [t3]),
        ("index_select", lambda: dot(nx.index_select(a, np.array([2, 0, 2]), axis=0), w34), [a]),
        ("embedding_lookup", lambda: dot(nx.embedding_lookup(table, ids), w233), [table]),
        ("dropout", lambda: dot(nx.dropout(a, 0.3, Rng(4), True), w34), [a]),
        ("linear", lambda: dot(nx.linear(t3, b, parameter(np.ones((1, 2)))), w232), [t3, b]),
        ("gru_scan", lambda: dot(nx.gru_scan(xs, h0, W, U, bb, mask, keep), wh), [xs, h0, W, U, bb]),
        ("gru_scan reverse", lambda: dot(nx.gru_scan(xs, h0, W, U, bb, mask, keep, reverse=True), wh),
         [xs, h0, W, U, bb]),
        ("crf_nll", lambda: crf_nll_op(unary, trans, cgold, cstart), [unary, trans]),
        ("risk_loss", lambda: batch_risk_loss(nx.log_softmax(cand, axis=1), costs), [cand]),
    ]


def test_criterion_1_gradient_fidelity(acceptance):
    start = time.perf_counter()
    rng = np.random.default_rng(2024)
    worst = {}
    for name, f, params in op_cases(rng):
        worst[name] = grad_check(f, params)
    for enc, att in [("vanilla", "vanilla"), ("hgru", "hard"), ("perso", "soft")]:
        model, batch = toy_model(n_tags=4, W=5, d=8, seed=11, encoder=enc, attention=att)
        r = np.random.default_rng(0)
        for p in model.parameters():
            if p.name.endswith(".b"):
                p.value[...] = r.normal(size=p.shape) * 0.3
        worst[f"{enc}+{att}"] = grad_check(lambda: model.loss(batch), model.parameters())
    elapsed = time.perf_counter() - start
    top = max(worst, key=worst.get)
    ok = max(worst.values()) <= GRAD_TOL and elapsed < 120
    acceptance(1, ok, f"max rel err {worst[top]:.2e} ({top}) over {len(worst)} checks, {elapsed:.0f}s")
    assert ok, worst


def test_criterion_2_attention_contracts(acceptance):
    worst_row = 0.0
    identity = True
    for att in ("vanilla", "soft", "hard"):
        for seed in range(3):
            model, batch = toy_model(n_tags=4, W=5, seed=seed, attention=att)
            for hyps in beam_search(model, batch, 3):
                for h in hyps:
                    worst_row = max(worst_row, float(np.abs(h.attention.sum(axis=1) - 1).max()))
                    if att == "hard":
                        identity &= np.array_equal(h.attention, np.eye(5))
    model, batch = toy_model(n_tags=4, W=5, seed=0, attention="soft")
    model.params["dec.att.v"].value[...] = 0.0
    grids = np.stack([h[0].attention for h in beam_search(model, batch, 1)])
    e = math.e
    aligned_err = float(np.abs(np.diagonal(grids, axis1=1, axis2=2) - e / (e + 4)).max())
    ok = worst_row <= 1e-9 and identity and aligned_err <= 1e-12
    acceptance(2, ok, f"row-sum err {worst_row:.1e}, hard identity {identity}, "
                      f"soft aligned {e / (e + 4):.7f} err {aligned_err:.1e}")
    assert ok


def _beam_models():
    for seed in range(30):
        for enc in ("vanilla", "hgru", "perso"):
            yield toy_model(n_tags=3, W=4, seed=seed, encoder=enc, attention=("none", "vanilla", "soft", "hard")[seed % 4])


def test_criterion_3_beam_oracle(acceptance):
    mismatches, checked = 0, 0
    for seed in range(6):
        model, batch = toy_model(n_tags=3, W=4, seed=100 + seed, attention=("none", "vanilla", "soft", "hard")[seed % 4])
        for (seq, score), h in zip(exhaustive(model, batch), beam_search(model, batch, 81)):
            checked += 1
            mismatches += not (np.array_equal(h[0].tags, seq) and abs(h[0].score - score) <= 1e-12)
    greedy_windows, greedy_diff, seed = 0, 0, 200
    while greedy_windows < 100:
        model, batch = toy_model(n_tags=3, W=4, seed=seed, encoder=("vanilla", "hgru", "perso")[seed % 3])
        beam1 = np.stack([h[0].tags for h in beam_search(model, batch, 1)])
        greedy_diff += int((beam1 != model.greedy(batch)).any(axis=1).sum())
        greedy_windows += batch.size
        seed += 1
    ok = mismatches == 0 and greedy_diff == 0
    acceptance(3, ok, f"B=81 vs enumeration: {checked - mismatches}/{checked} exact; "
                      f"B=1 vs greedy: {greedy_windows - greedy_diff}/{greedy_windows} equal")
    assert ok


@pytest.mark.xfail(strict=True, reason="pruned beam search can drop the greedy path, so the best score "
                                       "is not monotone in B for every model")
def test_criterion_3_best_score_monotone_in_beam(acceptance):
    sizes = (1, 2, 3, 4, 6, 9, 27, 81)
    violations, windows, example = 0, 0, None
    for model, batch in _beam_models():
        best = np.array([[h[0].score for h in beam_search(model, batch, B)] for B in sizes])
        drops = np.diff(best, axis=0) < -1e-12
        windows += batch.size
        violations += int(drops.any(axis=0).sum())
        if example is None and drops.any():
            k, n = np.argwhere(drops)[0]
            example = f"seed {model.config.seed} {model.config.encoder}: B={sizes[k]}->{sizes[k + 1]}"
    ok = violations == 0
    acceptance(3, ok, f"best score non-decreasing in B: {violations}/{windows} windows violate"
                      + (f" (first: {example})" if example else ""))
    assert ok


def test_criterion_4_crf_oracle(acceptance):
    rng = np.random.default_rng(77)
    logz_err = 0.0
    for _ in range(20):
        unary, trans = rng.normal(size=(5, 4)) * 2, rng.normal(size=(5, 4)) * 2
        start = int(rng.integers(0, 5))
        logz_err = max(logz_err, abs(crf_log_partition(unary, trans, start) - brute(unary, trans, start)[0]))
    paths_ok = 0
    for _ in range(100):
        unary, trans = rng.normal(size=(5, 4)), rng.normal(size=(5, 4))
        start = int(rng.integers(0, 5))
        paths_ok += np.array_equal(viterbi(unary, trans, start)[0], brute(unary, trans, start)[1])
    unary, trans = parameter(rng.normal(size=(3, 5, 4))), parameter(rng.normal(size=(5, 4)))
    gold, start = rng.integers(0, 4, (3, 5)), np.array([0, 1, 3])
    g = grad_check(lambda: crf_nll_op(unary, trans, gold, start), [unary, trans])
    ok = logz_err <= 1e-8 and paths_ok == 100 and g <= GRAD_TOL
    acceptance(4, ok, f"logZ err {logz_err:.1e}, Viterbi {paths_ok}/100, NLL grad err {g:.1e}")
    assert ok


def scaled_swda(**overrides):
    return preset("swda").replace(**{"d_enc": 32, "d_dec": 16, "max_epochs": 50, **overrides})


@pytest.fixture(scope="module")
def grammar_run(tmp_path_factory):
    convs = grammar_corpus(200, seed=0)
    tr, dv = split(convs)
    config = scaled_swda()
    model = build_model(config, build_vocab(tr), TagSet.from_conversations(convs))
    start = time.perf_counter()
    log = io.StringIO()
    result = train(model, tr, dv, config, log, stop=lambda rec: rec.dev_acc >= 0.999)
    elapsed = time.perf_counter() - start
    path = tmp_path_factory.mktemp("grammar") / "grammar.ckpt"
    save_checkpoint(model, path, "train")
    return dict(model=model, train=tr, dev=dv, config=config, result=result, elapsed=elapsed, ckpt=path)


def test_criterion_5_learnability(acceptance, grammar_run):
    model, result = grammar_run["model"], grammar_run["result"]
    train_acc = dev_accuracy(model, windows_for(grammar_run["train"], 5))
    dev_acc = dev_accuracy(model, windows_for(grammar_run["dev"], 5))
    epochs, elapsed = len(result.history), grammar_run["elapsed"]
    ok = train_acc >= 0.99 and dev_acc >= 0.95 and epochs <= 50 and elapsed < 300
    acceptance(5, ok, f"train {train_acc:.4f}, dev {dev_acc:.4f} after {epochs} epochs, {elapsed:.0f}s")
    assert ok


def test_criterion_6_global_dependency(acceptance):
    convs = dependency_corpus(200, seed=0)
    tr, dv = split(convs)
    tags = TagSet.from_conversations(convs)
    accs = {}
    for kind in ("seq2seq", "crf"):
        config = scaled_swda(model=kind, max_epochs=30)
        model = build_model(config, build_vocab(tr), tags)
        train(model, tr, dv, config, stop=lambda rec: rec.dev_acc >= 0.999)
        dev_w = [w for w in windows_for(dv, 5) if w.target.tag in ("sv", "sd")]
        accs[kind] = (dev_accuracy(model, windows_for(dv, 5)), dev_accuracy(model, dev_w))
    ok = accs["seq2seq"][0] >= 0.95
    acceptance(6, ok, f"seq2seq dev {accs['seq2seq'][0]:.4f} (ambiguous targets {accs['seq2seq'][1]:.4f}); "
                      f"CRF dev {accs['crf'][0]:.4f} (ambiguous targets {accs['crf'][1]:.4f})")
    assert ok


def test_criterion_7_risk_finetuning(acceptance, grammar_run):
    model = load_checkpoint(grammar_run["ckpt"]).build_model()
    dev_w = windows_for(grammar_run["dev"], 5)
    config = grammar_run["config"]
    risk0 = expected_risk(model, dev_w, 2, config.risk_cost, config.alpha_lp)
    acc0 = dev_accuracy(model, dev_w, config.B_inf)
    result = finetune_risk(model, grammar_run["train"], grammar_run["dev"], config, epochs=10, B_train=2)
    risk1 = expected_risk(model, dev_w, 2, config.risk_cost, config.alpha_lp)
    acc1 = dev_accuracy(model, dev_w, config.B_inf)
    ok = risk1 < risk0 and acc1 >= acc0 - 0.005 and len(result.history) <= 11
    acceptance(7, ok, f"dev risk {risk0:.6f} -> {risk1:.6f}, dev acc {acc0:.4f} -> {acc1:.4f} "
                      f"(best epoch {result.best_epoch})")
    assert ok


def test_criterion_8_determinism_and_persistence(acceptance, grammar_run, tmp_path):
    tr, dv = grammar_run["train"][:60], grammar_run["dev"][:20]
    logs = []
    for _ in range(2):
        config = scaled_swda(max_epochs=2, seed=7)
        model = build_model(config, build_vocab(tr), TagSet.from_conversations(tr + dv))
        buf = io.StringIO()
        train(model, tr, dv, config, buf)
        logs.append(buf.getvalue().encode())
    same_log = logs[0] == logs[1]

    model = grammar_run["model"]
    save_checkpoint(model, tmp_path / "a.ckpt")
    again = load_checkpoint(tmp_path / "a.ckpt").build_model()
    dev_w = windows_for(grammar_run["dev"], 5)
    same_pred = all(np.array_equal(predict_windows(model, dev_w, B), predict_windows(again, dev_w, B)) for B in (1, 5))
    batch = encode_batch(dev_w[:32], model.vocab, model.tagset)
    same_scores = [h.score for row in beam_search(model, batch, 5) for h in row] == \
                  [h.score for row in beam_search(again, batch, 5) for h in row]
    ok = same_log and same_pred and same_scores
    acceptance(8, ok, f"metric logs byte-identical {same_log}, reloaded predictions identical {same_pred}, "
                      f"beam scores bit-identical {same_scores}")
    assert ok


def test_criterion_9_pipeline(acceptance, tmp_path):
    convs = grammar_corpus(120, seed=9)
    save_corpus(convs, tmp_path / "corpus.jsonl")
    ids = [c.id for c in convs]
    (tmp_path / "splits.json").write_text(json.dumps({"train": ids[:80], "dev": ids[80:100], "test": ids[100:]}))
    data = ["--data", str(tmp_path / "corpus.jsonl"), "--splits", str(tmp_path / "splits.json")]
    codes = [
        main(["-q", "train", "--preset", "swda", "--set", "d_enc=32", "--set", "d_dec=16", "--set", "max_epochs=3",
              *data, "--out", str(tmp_path / "tok.ckpt"), "--metrics", str(tmp_path / "train.tsv")]),
        main(["-q", "finetune-risk", "--checkpoint", str(tmp_path / "tok.ckpt"), "--b-train", "2", "--epochs", "2",
              *data, "--out", str(tmp_path / "risk.ckpt"), "--metrics", str(tmp_path / "risk.tsv")]),
        main(["-q", "eval", "--checkpoint", str(tmp_path / "risk.ckpt"), "--beam", "5", *data,
              "--out-dir", str(tmp_path / "eval")]),
    ]
    report = (tmp_path / "eval" / "report.txt").read_text() if codes[-1] == 0 else ""
    acc_line = next((line for line in report.splitlines() if line.startswith("accuracy")), "accuracy ?")
    acc = float(acc_line.split()[-1]) if codes[-1] == 0 else float("nan")
    ok = codes == [0, 0, 0]
    acceptance(9, ok, f"train -> finetune-risk(B_train=2) -> eval(B_inf=5) exit codes {codes}; "
                      f"test accuracy {acc:.4f} on the synthetic stand-in (80% is a stretch target for real data)")
    assert ok
