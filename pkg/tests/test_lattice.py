"""Log-domain DP: forward-sum loss and gradient, blank suppression, DTW,
argmax/CTC decoding, diagonality."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from charsiu_lite.core import FrameMatrix, PhoneInventory, PhoneSeq
from charsiu_lite.errors import EmptyDecode, Infeasible, InvalidInput
from charsiu_lite.lattice import (
    BLANK_LOGPROB,
    AlignmentPath,
    argmax_decode,
    ctc_greedy_decode,
    diagonality_score,
    dtw_forced_decode,
    forward_sum_loss,
    forward_sum_via_blank_suppression,
    path_to_tier,
)

AB = PhoneInventory(("a", "b"))
ABC = PhoneInventory(("a", "b", "c"))


def random_row_stochastic_log(rng, T, N):
    """Random T x N log-probabilities whose rows exponentiate-sum to 1."""
    w = rng.standard_normal((T, N)) * 2.0
    w -= np.log(np.exp(w).sum(axis=1, keepdims=True))
    return w


class TestForwardSumLoss:
    def test_single_certain_path(self):
        loss, grad = forward_sum_loss(np.array([[0.0]]))
        assert loss == 0.0
        assert grad.d_logA.shape == (1, 1)
        assert grad.d_logA[0, 0] == pytest.approx(-1.0)

    def test_uniform_two_paths(self):
        # N=2, T=3, all rows (0.5, 0.5): two monotone paths of prob 1/8 each.
        logA = np.full((3, 2), np.log(0.5))
        loss, _ = forward_sum_loss(logA)
        assert loss == pytest.approx(-np.log(0.25), abs=1e-12)
        assert loss == pytest.approx(1.3862943611198906, abs=1e-12)

    def test_matches_enumeration(self):
        rng = np.random.default_rng(11)
        for _ in range(25):
            N = int(rng.integers(1, 5))
            T = int(rng.integers(N, 9))
            logA = random_row_stochastic_log(rng, T, N)
            loss, _ = forward_sum_loss(logA)
            exact = oracles.brute_force_forward_sum(logA)
            assert oracles.max_relerr(loss, exact) <= 1e-6

    def test_gradient_rows_sum_to_minus_one(self):
        rng = np.random.default_rng(3)
        for _ in range(10):
            N = int(rng.integers(1, 5))
            T = int(rng.integers(N, 9))
            _, grad = forward_sum_loss(random_row_stochastic_log(rng, T, N))
            assert np.allclose(grad.d_logA.sum(axis=1), -1.0, atol=1e-9)

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(5)
        logA = random_row_stochastic_log(rng, 6, 3)
        _, grad = forward_sum_loss(logA)
        fd = oracles.fd_grad(
            lambda x: forward_sum_loss(x, validate=False)[0], logA, h=1e-5
        )
        assert oracles.max_relerr(grad.d_logA, fd) <= 1e-4

    def test_loss_nonnegative_for_stochastic_rows(self):
        rng = np.random.default_rng(9)
        for _ in range(20):
            loss, _ = forward_sum_loss(random_row_stochastic_log(rng, 7, 3))
            assert loss >= 0.0

    def test_permutation_sensitivity(self):
        rng = np.random.default_rng(17)
        logA = random_row_stochastic_log(rng, 6, 3)
        base, _ = forward_sum_loss(logA)
        shuffled, _ = forward_sum_loss(logA[::-1])
        assert abs(base - shuffled) > 1e-6

    def test_infeasible_when_fewer_frames(self):
        with pytest.raises(Infeasible):
            forward_sum_loss(np.full((2, 3), np.log(1 / 3)))

    def test_validation(self):
        with pytest.raises(InvalidInput):
            forward_sum_loss(np.zeros((3, 2)))  # rows sum to 2
        with pytest.raises(InvalidInput):
            forward_sum_loss(np.array([[np.nan, 0.0]]), validate=False)
        with pytest.raises(InvalidInput):
            forward_sum_loss(np.zeros(3))
        # validate=False admits unnormalized rows.
        loss, _ = forward_sum_loss(np.zeros((3, 2)), validate=False)
        assert loss == pytest.approx(-np.log(2.0))

    def test_accepts_frame_matrix(self):
        m = FrameMatrix(np.log(np.full((3, 2), 0.5)), 10.0, "log_posterior")
        loss, _ = forward_sum_loss(m)
        assert loss == pytest.approx(1.3862943611198906)

    def test_deterministic(self):
        rng = np.random.default_rng(23)
        logA = random_row_stochastic_log(rng, 8, 4)
        l1, g1 = forward_sum_loss(logA)
        l2, g2 = forward_sum_loss(logA)
        assert l1 == l2
        assert np.array_equal(g1.d_logA, g2.d_logA)


class TestBlankSuppression:
    def test_uniform_case(self):
        logA = np.full((3, 3), np.log(0.5))
        logA[:, 0] = -1e9  # blank column
        got = forward_sum_via_blank_suppression(logA)
        assert got == pytest.approx(1.3862943611198906, abs=1e-4)

    def test_single_frame_single_phone(self):
        logA = np.array([[-1e9, 0.0]])
        assert forward_sum_via_blank_suppression(logA) == pytest.approx(0.0, abs=1e-4)

    def test_agrees_with_forward_sum(self):
        rng = np.random.default_rng(29)
        for _ in range(20):
            N = int(rng.integers(1, 5))
            T = int(rng.integers(N, 9))
            logA = random_row_stochastic_log(rng, T, N)
            with_blank = np.concatenate(
                [np.full((T, 1), BLANK_LOGPROB), logA], axis=1
            )
            a = forward_sum_via_blank_suppression(with_blank)
            b, _ = forward_sum_loss(logA)
            assert abs(a - b) <= 1e-4

    def test_blank_floor_enforced(self):
        logA = np.full((3, 3), np.log(0.5))
        logA[1, 0] = -1.0  # blank not suppressed at frame 1
        with pytest.raises(InvalidInput):
            forward_sum_via_blank_suppression(logA)

    def test_shape_and_feasibility(self):
        with pytest.raises(InvalidInput):
            forward_sum_via_blank_suppression(np.full((3, 1), -1e9))
        with pytest.raises(Infeasible):
            forward_sum_via_blank_suppression(np.full((2, 4), -1e9))


class TestDtwForcedDecode:
    def test_unambiguous_optimum(self):
        logP = np.log(
            np.array([[0.9, 0.05, 0.05], [0.9, 0.05, 0.05], [0.05, 0.9, 0.05]])
        )
        path = dtw_forced_decode(logP, PhoneSeq((0, 1), ABC))
        assert list(path.frame_to_phone) == [0, 0, 1]
        assert path.score == pytest.approx(3 * np.log(0.9))

    def test_uniform_tie_stays_on_phone(self):
        # All paths tie; the stay-preference rule transitions as late as possible.
        logP = np.full((3, 2), np.log(0.5))
        path = dtw_forced_decode(logP, PhoneSeq((0, 1), AB))
        assert list(path.frame_to_phone) == [0, 0, 1]

    def test_matches_brute_force(self):
        rng = np.random.default_rng(31)
        for _ in range(40):
            N = int(rng.integers(1, 5))
            T = int(rng.integers(N, 9))
            V = int(rng.integers(N, 6))
            logP = rng.standard_normal((T, V))
            transcript = PhoneSeq(
                tuple(int(p) for p in rng.integers(0, V, size=N)),
                PhoneInventory(tuple(f"p{i}" for i in range(V))),
            )
            path = dtw_forced_decode(logP, transcript)
            S = logP[:, list(transcript.phones)]
            best, argmax = oracles.brute_force_best_path(S)
            assert path.score == pytest.approx(best, abs=1e-9)
            assert any(np.array_equal(path.frame_to_phone, p) for p in argmax)

    def test_score_dominates_every_path(self):
        rng = np.random.default_rng(37)
        logP = rng.standard_normal((7, 4))
        transcript = PhoneSeq((2, 0, 3), PhoneInventory(("w", "x", "y", "z")))
        path = dtw_forced_decode(logP, transcript)
        S = logP[:, list(transcript.phones)]
        for p in oracles.enumerate_paths(7, 3):
            assert path.score >= sum(S[t, p[t]] for t in range(7)) - 1e-9

    def test_errors(self):
        with pytest.raises(Infeasible):
            dtw_forced_decode(np.zeros((1, 3)), PhoneSeq((0, 1), ABC))
        with pytest.raises(InvalidInput):
            dtw_forced_decode(np.zeros((3, 2)), PhoneSeq((0, 2), ABC))


class TestArgmaxDecode:
    def test_identity_attention_follows_diagonal(self):
        A = np.eye(3)
        labels = argmax_decode(A, PhoneSeq((2, 0, 1), ABC), frame_shift_ms=10.0)
        assert list(labels.labels) == [2, 0, 1]

    def test_tie_goes_to_lower_position(self):
        A = np.array([[0.5], [0.5]])
        labels = argmax_decode(A, PhoneSeq((1, 0), AB), frame_shift_ms=10.0)
        assert list(labels.labels) == [1]  # position 0 wins the tie

    def test_frame_matrix_carries_shift(self):
        A = FrameMatrix(np.eye(2), 12.5, "attention")
        labels = argmax_decode(A, PhoneSeq((0, 1), AB))
        assert labels.frame_shift_ms == 12.5

    def test_nonmonotonic_output_allowed(self):
        A = np.array([[0.1, 0.9, 0.1], [0.9, 0.1, 0.9]])
        labels = argmax_decode(A, PhoneSeq((0, 1), AB), frame_shift_ms=10.0)
        assert list(labels.labels) == [1, 0, 1]

    def test_errors(self):
        with pytest.raises(InvalidInput):
            argmax_decode(np.eye(2), PhoneSeq((0, 1), AB))  # no frame shift
        with pytest.raises(InvalidInput):
            argmax_decode(np.eye(3), PhoneSeq((0, 1), AB), frame_shift_ms=10.0)


class TestCtcGreedyDecode:
    def logp(self, rows, V):
        out = np.full((len(rows), V + 1), -10.0)
        for t, c in enumerate(rows):
            out[t, c] = 0.0
        return out

    def test_collapse_and_blank_removal(self):
        blank = 2
        seq = ctc_greedy_decode(self.logp([blank, 0, 0, blank, 1], 2), AB)
        assert seq.phones == (0, 1)

    def test_repeats_collapse(self):
        seq = ctc_greedy_decode(self.logp([0, 0, 0], 2), AB)
        assert seq.phones == (0,)

    def test_blank_separates_repeats(self):
        seq = ctc_greedy_decode(self.logp([0, 2, 0], 2), AB)
        assert seq.phones == (0, 0)

    def test_all_blank_raises(self):
        with pytest.raises(EmptyDecode):
            ctc_greedy_decode(self.logp([2, 2, 2], 2), AB)

    def test_column_count_checked(self):
        with pytest.raises(InvalidInput):
            ctc_greedy_decode(np.zeros((3, 2)), AB)  # needs V + 1 = 3


class TestDiagonalityScore:
    def test_one_hot_monotonic(self):
        A = np.array([[1.0, 1.0, 0.0], [0.0, 0.0, 1.0]])
        assert diagonality_score(A) == 1.0

    def test_uniform_half(self):
        assert diagonality_score(np.full((2, 4), 0.5)) == pytest.approx(0.5)

    def test_reversed_diagonal_zero(self):
        assert diagonality_score(np.eye(4)[::-1]) == 0.0

    def test_single_column(self):
        assert diagonality_score(np.array([[1.0], [0.0]])) == 1.0


class TestAlignmentPath:
    @pytest.mark.parametrize(
        "path", [[1, 1, 2], [0, 2], [0, 1, 0], [[0, 1]], []]
    )
    def test_invalid_paths(self, path):
        with pytest.raises(InvalidInput):
            AlignmentPath(path, 0.0)

    def test_valid_path_frozen(self):
        p = AlignmentPath([0, 0, 1, 2, 2], -3.5)
        assert p.score == -3.5
        with pytest.raises(ValueError):
            p.frame_to_phone[0] = 1


class TestPathToTier:
    def test_segments_follow_path(self):
        path = AlignmentPath([0, 0, 1], -1.0)
        t = path_to_tier(path, PhoneSeq((0, 1), AB), 10.0)
        assert [(s.phone, s.start_ms, s.end_ms) for s in t.segments] == [
            (0, 0.0, 20.0),
            (1, 20.0, 30.0),
        ]

    def test_repeated_transcript_phones_stay_separate(self):
        path = AlignmentPath([0, 1], -1.0)
        t = path_to_tier(path, PhoneSeq((0, 0), AB), 10.0)
        assert len(t) == 2
        assert t.symbols == ("a", "a")

    def test_incomplete_path_rejected(self):
        path = AlignmentPath([0, 0], -1.0)
        with pytest.raises(InvalidInput):
            path_to_tier(path, PhoneSeq((0, 1), AB), 10.0)


@settings(max_examples=40, deadline=None)
@given(
    seed=st.integers(0, 2**31 - 1),
    N=st.integers(1, 4),
    extra=st.integers(0, 4),
)
def test_forward_sum_properties(seed, N, extra):
    rng = np.random.default_rng(seed)
    T = N + extra
    logA = random_row_stochastic_log(rng, T, N)
    loss, grad = forward_sum_loss(logA)
    assert np.isfinite(loss) and loss >= -1e-12
    assert np.allclose(grad.d_logA.sum(axis=1), -1.0, atol=1e-9)
    # d_logA holds negative occupancies, so entries lie in [-1, 0].
    assert np.all(grad.d_logA <= 1e-12) and np.all(grad.d_logA >= -1.0 - 1e-12)
