"""LSTM cell, BiLSTM encoders, selective hierarchical context and the LSTM decoder step."""

import math

import numpy as np
import pytest

from hiergen import tensor as T
from hiergen.exceptions import DimensionError
from hiergen.params import ParamStore
from hiergen.recurrent import (
    LstmParams,
    LstmState,
    bilstm_encode,
    encode_sentences,
    encode_words,
    hierarchical_context,
    lstm_cell_step,
    lstm_decoder_step,
    run_lstm,
    sentence_repr_mean,
)
from hiergen.tensor import Tensor, backward, no_grad

from oracles import central_diff, hierarchical_context_brute, max_rel_error


def lstm(seed=0, d_in=3, H=4, prefix="l"):
    store = ParamStore(seed)
    return store, LstmParams.create(store, prefix, d_in, H)


def zero_lstm(d_in, H):
    return LstmParams(Tensor(np.zeros((d_in, 4 * H))), Tensor(np.zeros((H, 4 * H))), Tensor(np.zeros(4 * H)))


def numpy_lstm_step(x, h, c, p):
    """Gate equations written out with numpy only (gate order i, f, g, o)."""
    H = h.shape[0]
    z = x @ p.w_ih.data + h @ p.w_hh.data + p.b.data
    s = lambda v: 1.0 / (1.0 + np.exp(-v))
    i, f, g, o = s(z[:H]), s(z[H : 2 * H]), np.tanh(z[2 * H : 3 * H]), s(z[3 * H :])
    c = f * c + i * g
    return o * np.tanh(c), c


class TestLstmCell:
    def test_zero_weights_zero_state(self):
        st = lstm_cell_step(np.ones(3), None, zero_lstm(3, 4))
        np.testing.assert_array_equal(st.h.data, 0.0)

    def test_forget_and_input_bias(self):
        p = zero_lstm(2, 3)
        b = np.zeros(12)
        b[0:3], b[3:6] = -5.0, 5.0
        p.b = Tensor(b)
        c_prev = np.array([0.5, -1.0, 2.0])
        st = lstm_cell_step(np.ones(2), LstmState(Tensor(np.zeros(3)), Tensor(c_prev)), p)
        sig5 = 1.0 / (1.0 + math.exp(-5.0))
        np.testing.assert_allclose(st.c.data, c_prev * sig5, rtol=1e-15)

    def test_matches_numpy_gate_equations(self):
        _, p = lstm(1)
        rng = np.random.default_rng(1)
        x, h, c = rng.normal(size=3), rng.normal(size=4), rng.normal(size=4)
        st = lstm_cell_step(x, LstmState(Tensor(h), Tensor(c)), p)
        h_ref, c_ref = numpy_lstm_step(x, h, c, p)
        np.testing.assert_allclose(st.h.data, h_ref, atol=1e-15)
        np.testing.assert_allclose(st.c.data, c_ref, atol=1e-15)

    def test_input_dim_mismatch(self):
        _, p = lstm()
        with pytest.raises(DimensionError):
            lstm_cell_step(np.ones(5), None, p)

    def test_three_step_gradient(self):
        store, p = lstm(2)
        X = Tensor(np.random.default_rng(2).normal(size=(3, 3)), requires_grad=True)
        w = np.random.default_rng(3).normal(size=4)

        def f():
            st = None
            for t in range(3):
                st = lstm_cell_step(X[t], st, p)
            return T.sum(T.mul(st.h, Tensor(w)))

        backward(f())

        def value():
            with no_grad():
                return f().item()

        for t in [X, *store.values()]:
            assert max_rel_error(t.grad, central_diff(value, t.data), floor=1e-6) < 1e-4


class TestBilstm:
    def test_length_one(self):
        _, f = lstm(0, prefix="f")
        _, b = lstm(1, prefix="b")
        x = np.random.default_rng(0).normal(size=(1, 3))
        out, _ = bilstm_encode(x, f, b)
        np.testing.assert_array_equal(out.data[0, :4], lstm_cell_step(x[0], None, f).h.data)
        np.testing.assert_array_equal(out.data[0, 4:], lstm_cell_step(x[0], None, b).h.data)

    def test_palindrome_with_tied_parameters(self):
        _, p = lstm(3)
        rng = np.random.default_rng(0)
        a, b, c = rng.normal(size=(3, 3))
        out, _ = bilstm_encode(np.stack([a, b, c, b, a]), p, p)
        np.testing.assert_array_equal(out.data[:, :4], out.data[::-1, 4:])

    def test_shape(self):
        _, f = lstm(0)
        out, _ = bilstm_encode(np.ones((6, 3)), f, f)
        assert out.shape == (6, 8)

    def test_empty(self):
        _, f = lstm(0)
        with pytest.raises(ValueError):
            bilstm_encode(np.ones((0, 3)), f, f)

    def test_reverse_run_reads_right_to_left(self):
        _, p = lstm(4)
        X = np.random.default_rng(4).normal(size=(4, 3))
        fwd, _ = run_lstm(X[::-1].copy(), p)
        bwd, _ = run_lstm(X, p, reverse=True)
        np.testing.assert_array_equal(bwd.data, fwd.data[::-1])


def word_encoder(seed=0, V=10, E=3, B=2, H=4):
    store = ParamStore(seed)
    emb = store.uniform("emb", (V, E), 0.5)
    bio = store.uniform("bio", (3, B), 0.5)
    f = LstmParams.create(store, "f", E + B, H)
    b = LstmParams.create(store, "b", E + B, H)
    return store, emb, bio, f, b


class TestEncodeWords:
    def test_all_o_uses_one_tag_row(self):
        store, emb, bio, f, b = word_encoder()
        x = T.concat([T.take_rows(emb, [4, 5, 6]), T.take_rows(bio, [0, 0, 0])], axis=1)
        np.testing.assert_array_equal(x.data[:, 3:], np.tile(bio.data[0], (3, 1)))
        assert bio.shape[0] == 3

    def test_tag_change_perturbs_that_step(self):
        _, emb, bio, f, b = word_encoder()
        r0, _ = encode_words([4, 5, 6], [0, 0, 0], emb, bio, f, b)
        r1, _ = encode_words([4, 5, 6], [0, 1, 0], emb, bio, f, b)
        assert np.abs(r0.data[1] - r1.data[1]).max() > 1e-6

    def test_misaligned_tags(self):
        _, emb, bio, f, b = word_encoder()
        with pytest.raises(ValueError):
            encode_words([4, 5], [0], emb, bio, f, b)


class TestSentenceMean:
    def test_single_word(self):
        r = np.array([[1.0, 2.0]])
        np.testing.assert_array_equal(sentence_repr_mean(r).data, r[0])

    def test_identical_rows(self):
        np.testing.assert_array_equal(sentence_repr_mean(np.array([[3.0, -1.0], [3.0, -1.0]])).data, [3.0, -1.0])

    def test_random_rows(self):
        r = np.random.default_rng(0).normal(size=(3, 4))
        np.testing.assert_allclose(sentence_repr_mean(r).data, (r[0] + r[1] + r[2]) / 3, atol=1e-15)

    def test_mask_and_all_pad(self):
        r = np.array([[1.0], [3.0], [100.0]])
        assert sentence_repr_mean(r, np.array([1, 1, 0])).item() == 2.0
        with pytest.raises(ValueError):
            sentence_repr_mean(r, np.zeros(3))


def sentence_encoder(seed=0, D=4, F=2, H=3):
    store = ParamStore(seed)
    flags = store.uniform("flags", (2, F), 0.5)
    f = LstmParams.create(store, "sf", D + F, H)
    b = LstmParams.create(store, "sb", D + F, H)
    return flags, f, b


class TestEncodeSentences:
    def test_single_sentence(self):
        flags, f, b = sentence_encoder()
        s = np.random.default_rng(0).normal(size=(1, 4))
        g, _ = encode_sentences(s, [True], flags, f, b)
        x = np.concatenate([s[0], flags.data[1]])
        np.testing.assert_array_equal(g.data[0, :3], lstm_cell_step(x, None, f).h.data)

    def test_flag_flip_perturbs(self):
        flags, f, b = sentence_encoder()
        s = np.random.default_rng(1).normal(size=(3, 4))
        g0, _ = encode_sentences(s, [True, False, False], flags, f, b)
        g1, _ = encode_sentences(s, [False, False, True], flags, f, b)
        assert g0.shape == (3, 6) and np.abs(g0.data - g1.data).max() > 1e-6

    def test_no_sentences(self):
        flags, f, b = sentence_encoder()
        with pytest.raises(ValueError):
            encode_sentences(np.zeros((0, 4)), [], flags, f, b)

    def test_permutation_equivariance_of_means_but_not_of_g(self):
        _, emb, bio, wf, wb = word_encoder(5, E=3, B=2, H=2)
        flags, f, b = sentence_encoder(6, D=4)
        sents = [[4, 5, 6], [7, 8], [9, 4, 4, 5]]
        means = [sentence_repr_mean(encode_words(s, [0] * len(s), emb, bio, wf, wb)[0]) for s in sents]
        perm = [2, 0, 1]
        means_p = [sentence_repr_mean(encode_words(sents[i], [0] * len(sents[i]), emb, bio, wf, wb)[0]) for i in perm]
        for k, i in enumerate(perm):
            np.testing.assert_array_equal(means_p[k].data, means[i].data)
        g, _ = encode_sentences(T.stack(means), [False] * 3, flags, f, b)
        g_p, _ = encode_sentences(T.stack(means_p), [False] * 3, flags, f, b)
        assert np.abs(g_p.data - g.data[perm]).max() > 1e-6


def additive_loop(item, d, W, v):
    x = list(item) + list(d)
    return math.fsum(v[r] * math.tanh(math.fsum(W[r, c] * x[c] for c in range(len(x)))) for r in range(len(v)))


class TestHierarchicalContext:
    def test_one_sentence_one_word(self):
        rng = np.random.default_rng(0)
        r = [rng.normal(size=(1, 4))]
        c, _, _ = hierarchical_context(r, rng.normal(size=(1, 3)), rng.normal(size=5), rng.normal(size=(2, 9)),
                                       rng.normal(size=2), rng.normal(size=(2, 8)), rng.normal(size=2))
        np.testing.assert_array_equal(c.data, r[0][0])

    def test_brute_force_100_instances(self):
        rng = np.random.default_rng(1)
        worst = 0.0
        for _ in range(100):
            K, d2, g2, dd, A = int(rng.integers(1, 4)), 3, 2, 4, 3
            R = [rng.normal(size=(int(rng.integers(1, 4)), d2)) for _ in range(K)]
            g, d = rng.normal(size=(K, g2)), rng.normal(size=dd)
            W_w, v_w = rng.normal(size=(A, d2 + dd)), rng.normal(size=A)
            W_s, v_s = rng.normal(size=(A, g2 + dd)), rng.normal(scale=3.0, size=A)
            c, _, _ = hierarchical_context([Tensor(r) for r in R], g, d, W_w, v_w, W_s, v_s)
            u_w = [additive_loop(row, d, W_w, v_w) for r in R for row in r]
            u_s = [additive_loop(g[i], d, W_s, v_s) for i in range(K)]
            ref = hierarchical_context_brute([r.tolist() for r in R], u_w, u_s)
            worst = max(worst, float(np.abs(c.data - ref).max()))
        assert worst <= 1e-9

    def test_empty(self):
        with pytest.raises(ValueError):
            hierarchical_context([], np.zeros((0, 2)), np.zeros(2), np.zeros((1, 4)), np.zeros(1), np.zeros((1, 4)), np.zeros(1))


class TestDecoderStep:
    def setup_method(self):
        self.store = ParamStore(7)
        self.E, self.C, self.H, self.V = 3, 4, 5, 6
        self.p = LstmParams.create(self.store, "dec", self.E + self.C, self.H)
        self.out_w = self.store.glorot("out.w", self.H, self.V)
        self.out_b = self.store.zeros("out.b", (self.V,))

    def test_logits_shape(self):
        logits, st = lstm_decoder_step(np.ones(3), None, np.ones(4), self.p, self.out_w, self.out_b)
        assert logits.shape == (6,) and st.h.shape == (5,)

    def test_zero_parameters_give_uniform_distribution(self):
        logits, _ = lstm_decoder_step(np.ones(3), None, np.ones(4), zero_lstm(7, 5), np.zeros((5, 6)), np.zeros(6))
        np.testing.assert_array_equal(T.softmax(logits).data, np.full(6, 1 / 6))

    def test_dim_mismatch(self):
        with pytest.raises(DimensionError):
            lstm_decoder_step(np.ones(2), None, np.ones(4), self.p, self.out_w, self.out_b)

    def test_two_step_teacher_forced_gradient(self):
        rng = np.random.default_rng(8)
        emb = Tensor(rng.normal(size=(self.V, self.E)), requires_grad=True)
        ctx = Tensor(rng.normal(size=self.C), requires_grad=True)

        def loss():
            st, total = None, None
            for prev, target in [(2, 4), (4, 1)]:
                logits, st = lstm_decoder_step(emb[prev], st, ctx, self.p, self.out_w, self.out_b)
                nll = T.nll(T.reshape(logits, (1, self.V)), [target])
                total = nll if total is None else total + nll
            return total

        backward(loss())

        def value():
            with no_grad():
                return loss().item()

        for t in [emb, ctx, *self.store.values()]:
            assert max_rel_error(t.grad, central_diff(value, t.data), floor=1e-6) < 1e-4
