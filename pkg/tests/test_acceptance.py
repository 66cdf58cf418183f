"""Release acceptance checks, one test per criterion.

Each test is independent of the unit suites: numeric claims are checked
against the exhaustive oracles in oracles.py, training claims against the
session-scoped runs from conftest.py, and CLI claims end to end through
subprocesses.
"""

import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pytest
from scipy.special import logsumexp

import oracles
from charsiu_lite import io as cio
from charsiu_lite.core import (
    FrameMatrix,
    PhoneInventory,
    PhoneSeq,
    Segment,
    SegmentTier,
)
from charsiu_lite.lattice import (
    dtw_forced_decode,
    forward_sum_loss,
    forward_sum_via_blank_suppression,
)
from charsiu_lite.metrics import boundary_eval, frame_overlap
from charsiu_lite.objective import (
    Codebook,
    DenseProjection,
    EncodedFrames,
    EncodedPhones,
    LossConfig,
    ProjectionHeads,
    combined_loss,
    contrastive_loss,
    sample_negatives,
)

DATA = Path(__file__).parent / "data"


def row_stochastic_log(rng, T, N):
    logits = rng.standard_normal((T, N))
    return logits - logsumexp(logits, axis=1, keepdims=True)


def unit_rows(rng, M, K):
    Q = rng.standard_normal((M, K))
    return Q / np.linalg.norm(Q, axis=1, keepdims=True)


def run_cli(*args):
    return subprocess.run(
        [sys.executable, "-m", "charsiu_lite.cli", *map(str, args)],
        capture_output=True,
    )


def test_criterion_1_forward_sum_equals_exhaustive_path_enumeration():
    rng = np.random.default_rng(101)
    start = time.perf_counter()
    for _ in range(500):
        N = int(rng.integers(1, 5))
        T = int(rng.integers(N, 9))
        logA = row_stochastic_log(rng, T, N)
        loss, grad = forward_sum_loss(logA)
        exact = oracles.brute_force_forward_sum(logA)
        assert abs(loss - exact) <= 1e-6 * max(1.0, abs(exact))
        np.testing.assert_allclose(grad.d_logA.sum(axis=1), -1.0, atol=1e-9)
    assert time.perf_counter() - start < 10.0


def test_criterion_2_blank_suppressed_ctc_recovers_forward_sum():
    rng = np.random.default_rng(202)
    for _ in range(100):
        N = int(rng.integers(1, 6))
        T = int(rng.integers(N, 11))
        logA = row_stochastic_log(rng, T, N)
        ref, _ = forward_sum_loss(logA)
        with_blank = np.hstack([np.full((T, 1), -1e9), logA])
        assert abs(forward_sum_via_blank_suppression(with_blank) - ref) <= 1e-4


def _combined_case(rng, K=4, N=3, T=6):
    Y = rng.standard_normal((K, N))
    X = rng.standard_normal((K, T))
    mask = rng.random(T) < 0.5
    if not mask.any():
        mask[0] = True
    heads = ProjectionHeads(
        Wy=np.eye(K) + 0.1 * rng.standard_normal((K, K)),
        by=0.1 * rng.standard_normal(K),
        Wx=np.eye(K) + 0.1 * rng.standard_normal((K, K)),
        bx=0.1 * rng.standard_normal(K),
    )
    proj = DenseProjection(
        W=0.4 * rng.standard_normal((K, 2 * K)), b=0.1 * rng.standard_normal(K)
    )
    M = 9
    Q = unit_rows(rng, M, K)
    cfg = LossConfig(kappa=0.5, lambda_=0.7, negatives=3)
    targets = rng.integers(0, M, size=T)
    negatives = sample_negatives(targets, M, 3, seed=int(rng.integers(2**31)))
    return Y, X, mask, heads, proj, Q, cfg, targets, negatives


def test_criterion_3_analytic_gradients_match_finite_differences():
    rng = np.random.default_rng(303)
    start = time.perf_counter()
    worst = 0.0

    # Forward-sum gradient with respect to the log alignment matrix.
    for _ in range(50):
        N = int(rng.integers(1, 5))
        T = int(rng.integers(N, 8))
        logA = row_stochastic_log(rng, T, N)
        _, grad = forward_sum_loss(logA)
        fd = oracles.fd_grad(lambda x: forward_sum_loss(x, validate=False)[0], logA)
        worst = max(worst, oracles.max_relerr(grad.d_logA, fd))

    # Contrastive gradients through the down-projection.
    for _ in range(50):
        K, T, M, n = 5, 6, 9, 3
        H = rng.standard_normal((2 * K, T))
        proj = DenseProjection(
            W=0.4 * rng.standard_normal((K, 2 * K)), b=0.1 * rng.standard_normal(K)
        )
        cb = Codebook(unit_rows(rng, M, K))
        cfg = LossConfig(kappa=0.5, lambda_=1.0, negatives=n)
        targets = rng.integers(0, M, size=T)
        negatives = sample_negatives(targets, M, n, seed=int(rng.integers(2**31)))
        mask = rng.random(T) < 0.5
        if not mask.any():
            mask[0] = True

        def c_loss(h=None, w=None, b=None):
            p = DenseProjection(proj.W if w is None else w, proj.b if b is None else b)
            return contrastive_loss(
                H if h is None else h, cb, targets, negatives, cfg, proj=p, mask=mask
            )[0]

        _, grad = contrastive_loss(H, cb, targets, negatives, cfg, proj=proj, mask=mask)
        worst = max(worst, oracles.max_relerr(grad.dH, oracles.fd_grad(lambda x: c_loss(h=x), H)))
        worst = max(worst, oracles.max_relerr(grad.dW, oracles.fd_grad(lambda x: c_loss(w=x), proj.W)))
        worst = max(worst, oracles.max_relerr(grad.db, oracles.fd_grad(lambda x: c_loss(b=x), proj.b)))

    # Every gradient of the combined objective.
    for _ in range(50):
        Y, X, mask, heads, proj, Q, cfg, targets, negatives = _combined_case(rng)

        def loss_with(**over):
            params = {
                "Y": Y, "X": X, "Wy": heads.Wy, "by": heads.by,
                "Wx": heads.Wx, "bx": heads.bx, "W": proj.W, "b": proj.b,
            }
            params.update(over)
            return combined_loss(
                EncodedPhones(params["Y"]),
                EncodedFrames(params["X"], mask),
                ProjectionHeads(params["Wy"], params["by"], params["Wx"], params["bx"]),
                targets,
                negatives,
                cfg,
                Codebook(Q),
                DenseProjection(params["W"], params["b"]),
            ).loss

        g = combined_loss(
            EncodedPhones(Y), EncodedFrames(X, mask), heads, targets, negatives,
            cfg, Codebook(Q), proj,
        ).grads
        for analytic, name, value in [
            (g.dY, "Y", Y), (g.dXhat, "X", X),
            (g.dWy, "Wy", heads.Wy), (g.dby, "by", heads.by),
            (g.dWx, "Wx", heads.Wx), (g.dbx, "bx", heads.bx),
            (g.dW_proj, "W", proj.W), (g.db_proj, "b", proj.b),
        ]:
            fd = oracles.fd_grad(lambda x, _n=name: loss_with(**{_n: x}), value)
            worst = max(worst, oracles.max_relerr(analytic, fd))

    assert worst <= 1e-4
    assert time.perf_counter() - start < 30.0


def test_criterion_4_forced_decode_matches_exhaustive_search():
    rng = np.random.default_rng(404)
    inv = PhoneInventory(("A", "B", "C", "D", "E", "F"))
    for _ in range(200):
        N = int(rng.integers(1, 5))
        T = int(rng.integers(N, 9))
        logP = rng.standard_normal((T, len(inv)))
        phones = tuple(int(p) for p in rng.choice(len(inv), size=N, replace=False))
        path = dtw_forced_decode(logP, PhoneSeq(phones, inv))
        best, argmax = oracles.brute_force_best_path(logP[:, list(phones)])
        assert path.score == pytest.approx(best, abs=1e-9)
        assert any(np.array_equal(path.frame_to_phone, p) for p in argmax)


def test_criterion_5_boundary_metrics_reproduce_closed_forms():
    inv = PhoneInventory(("AA", "IY", "S"))

    def tier(entries):
        segs = tuple(Segment(inv.index(s), a, b) for s, a, b in entries)
        return SegmentTier(segs, entries[-1][2], inv)

    ident = tier([("AA", 0, 30), ("S", 30, 70), ("IY", 70, 100)])
    for tol in (0.0, 20.0):
        r = boundary_eval(ident, ident, tol)
        assert (r.precision, r.recall, r.f1, r.r_value) == (1.0, 1.0, 1.0, 1.0)
    assert frame_overlap(ident, ident) == 100.0

    ref = tier([("AA", 0, 50), ("IY", 50, 100)])
    hyp = tier([("AA", 0, 40), ("IY", 40, 100)])
    r = boundary_eval(ref, hyp, 20.0)
    assert (r.precision, r.recall, r.f1, r.r_value) == (1.0, 1.0, 1.0, 1.0)
    assert frame_overlap(ref, hyp) == 90.0

    late = tier([("AA", 0, 80), ("IY", 80, 100)])
    r = boundary_eval(ref, late, 20.0)
    assert r.precision == 0.5 and r.recall == 0.5
    assert r.r_value == pytest.approx(0.5732233047033631, abs=1e-4)


def test_criterion_6_training_beats_every_ablation(training_suite):
    runs = training_suite["runs"]
    means = {
        name: float(np.mean([r.diagonality for r in rs])) for name, rs in runs.items()
    }
    full_f1 = float(np.mean([r.boundary.f1 for r in runs["full"]]))
    assert len(runs) == 4 and all(len(rs) == 3 for rs in runs.values())
    assert means["full"] >= 0.9
    assert full_f1 >= 0.90
    for name in ("no_fs", "no_contrastive", "no_curriculum"):
        assert means[name] < means["full"], f"{name} should hurt diagonality"
    assert training_suite["elapsed_s"] < 300.0


def test_criterion_7_pseudo_label_bootstrap_tracks_ground_truth(fc_pair):
    pair = fc_pair["pair"]
    assert abs(pair["f1_pseudo"] - pair["f1_truth"]) <= 0.05


def test_criterion_8_file_round_trips_are_lossless(tmp_path):
    inv = PhoneInventory(("AA", "IY", "S", "T"))
    segs = (
        Segment(0, 0.0, 123.4567),
        Segment(2, 123.4567, 310.9013),
        Segment(1, 310.9013, 500.25),
    )
    tier = SegmentTier(segs, 500.25, inv)
    tg = tmp_path / "t.TextGrid"
    cio.write_textgrid([("phones", tier)], tg)
    (_, back), = cio.read_textgrid(tg)
    assert back.symbols == tier.symbols
    for a, b in zip(tier.segments, back.segments):
        assert abs(a.start_ms - b.start_ms) <= 1e-3  # 1e-6 s
        assert abs(a.end_ms - b.end_ms) <= 1e-3

    rng = np.random.default_rng(808)
    m = FrameMatrix(rng.standard_normal((7, 3)), 12.5, "features")
    p1, p2, p3 = (tmp_path / f"m{i}.mat" for i in range(3))
    cio.write_matrix(m, p1)
    cio.write_matrix(m, p2)
    assert p1.read_bytes() == p2.read_bytes()
    back = cio.read_matrix(p1)
    np.testing.assert_array_equal(
        back.values, np.asarray(m.values, dtype=np.float32).astype(np.float64)
    )
    cio.write_matrix(back, p3)
    assert p3.read_bytes() == p1.read_bytes()

    tiers = cio.read_textgrid(DATA / "two_tier_praat.TextGrid")
    rewrite = tmp_path / "rw.TextGrid"
    cio.write_textgrid(tiers, rewrite)
    assert rewrite.read_bytes() == (DATA / "golden_two_tier_rewrite.TextGrid").read_bytes()

    golden_m = FrameMatrix(
        [[0.5, -1.25], [2.0, -0.125], [-3.5, 0.75]], 10.0, "log_posterior",
        labels=("a", "b"),
    )
    fresh = tmp_path / "g.mat"
    cio.write_matrix(golden_m, fresh)
    assert fresh.read_bytes() == (DATA / "golden_matrix.mat").read_bytes()


def test_criterion_9_cli_runs_are_byte_deterministic(tmp_path):
    import json

    inv_path = tmp_path / "inv.json"
    inv_path.write_text(
        json.dumps({"symbols": ["AA", "IY", "S", "T", "SIL"]}), encoding="utf-8"
    )
    labels = np.repeat(np.arange(5), 12)
    M = np.full((60, 5), -8.0)
    M[np.arange(60), labels] = -0.01
    mat = tmp_path / "u.mat"
    cio.write_matrix(FrameMatrix(M, 10.0, "log_posterior"), mat)

    aligned = []
    for i in range(2):
        out = tmp_path / f"a{i}.TextGrid"
        res = run_cli(
            "align", "--posteriors", mat, "--transcript", "AA IY S T SIL",
            "--out", out, "--inventory", inv_path,
        )
        assert res.returncode == 0, res.stderr
        aligned.append(out.read_bytes())
    assert aligned[0] == aligned[1]

    segmented = []
    for i in range(2):
        out = tmp_path / f"s{i}.TextGrid"
        res = run_cli("segment", "--posteriors", mat, "--out", out, "--inventory", inv_path)
        assert res.returncode == 0, res.stderr
        segmented.append(out.read_bytes())
    assert segmented[0] == segmented[1]

    evals = []
    for _ in range(2):
        res = run_cli(
            "eval", "--ref", DATA / "ref_aaiy.TextGrid", "--hyp", DATA / "hyp_aaiy.TextGrid"
        )
        assert res.returncode == 0, res.stderr
        evals.append(res.stdout)
    assert evals[0] == evals[1]

    trained = []
    for sub in ("t0", "t1"):
        out = tmp_path / sub
        res = run_cli(
            "train-toy", "--seed", 0, "--steps", 20, "--count", 10,
            "--eval-every", 10, "--out-dir", out,
        )
        assert res.returncode == 0, res.stderr
        trained.append(
            {
                n: (out / n).read_bytes()
                for n in ("history.jsonl", "summary.tsv", "curves.png", "attention.png")
            }
        )
    assert trained[0] == trained[1]

    ablated = []
    names = ["summary.tsv", "ablation.png"] + [
        f"history_{n}_seed0.jsonl"
        for n in ("full", "no_curriculum", "no_fs", "no_contrastive")
    ]
    for sub in ("b0", "b1"):
        out = tmp_path / sub
        res = run_cli(
            "ablate", "--seeds", "0", "--steps", 20, "--count", 10,
            "--eval-every", 10, "--out-dir", out,
        )
        assert res.returncode == 0, res.stderr
        ablated.append({n: (out / n).read_bytes() for n in names})
    assert ablated[0] == ablated[1]
