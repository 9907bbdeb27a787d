import itertools

import numpy as np
import pytest

from oracles import all_sign_vectors, brute_hamming, central_diff, rel_err
from randecoc import codec, models
from randecoc.codec import CodeMatrix
from randecoc.errors import IndexOutOfRange, InvalidMatrix, LengthMismatch
from randecoc.nncore import Dense, Dropout, ReLU, Tanh

SMALL = dict(trunk_hidden=(12, 6), head_hidden=4)


def dense_widths(spec):
    return [s.out_dim for s in spec if isinstance(s, Dense)]


def test_independent_architecture(sample4):
    m = models.build_independent(2048, sample4, seed=0)
    assert len(m.classifiers) == 5
    for net in m.classifiers:
        assert dense_widths(net.spec) == [500, 50, 10, 1]
        assert net.spec[0].in_dim == 2048
        kinds = [type(s) for s in net.spec]
        assert kinds == [Dense, ReLU, Dropout] * 3 + [Dense, Tanh]


def test_independent_minimal_code():
    M = CodeMatrix([[1], [-1]])
    assert len(models.build_independent(4, M).classifiers) == 1


def test_independent_determinism(sample4):
    a = models.build_independent(8, sample4, seed=3, hidden=(6, 4, 3))
    b = models.build_independent(8, sample4, seed=3, hidden=(6, 4, 3))
    for na, nb in zip(a.classifiers, b.classifiers):
        assert all(x.tobytes() == y.tobytes() for x, y in zip(na.params(), nb.params()))
    # classifiers differ from each other
    assert not np.array_equal(a.classifiers[0].params()[0], a.classifiers[1].params()[0])


def test_mtl_architecture():
    M = codec.generate_random_matrix(10, 30, seed=1)
    m = models.build_mtl(2048, M, seed=0)
    assert len(m.heads) == 30
    assert dense_widths(m.trunk.spec) == [500, 50]
    assert [type(s) for s in m.trunk.spec] == [Dense, ReLU, Dropout] * 2
    for head in m.heads:
        assert [type(s) for s in head.spec] == [Dropout, Dense, ReLU, Dense, Tanh]
        assert dense_widths(head.spec) == [10, 1] and head.spec[1].in_dim == 50


def test_invalid_matrix_rejected():
    with pytest.raises(InvalidMatrix):
        models.build_mtl(4, CodeMatrix([[1, 1], [1, -1], [1, 1]]))


def test_embedding_layer(sample4):
    m = models.build_embedding(6, sample4, seed=0, **SMALL)
    assert m.embedding_weights.shape == (4, 5)
    np.testing.assert_array_equal(m.embedding_weights, sample4.entries)
    with pytest.raises(ValueError):
        m.embedding_weights[0, 0] = 0.0
    for c in range(4):
        o = codec.class_scores(sample4.entries[c], sample4)
        assert o[c] == sample4.nonzeros()[c]


def test_predict_bits_range_and_determinism(sample4):
    rng = np.random.default_rng(0)
    X = rng.normal(scale=5.0, size=(20, 6))
    for m in (
        models.build_independent(6, sample4, hidden=(8, 4, 3)),
        models.build_mtl(6, sample4, **SMALL),
        models.build_embedding(6, sample4, **SMALL),
    ):
        h = models.predict_bits(m, X)
        assert h.shape == (20, 5) and np.all(np.abs(h) < 1)
        assert h.tobytes() == models.predict_bits(m, X).tobytes()
        assert models.predict_bits(m, X[0]).shape == (5,)
        with pytest.raises(LengthMismatch):
            models.predict_bits(m, np.zeros(5))


def test_embedding_scores_equal_class_scores(sample4):
    m = models.build_embedding(6, sample4, seed=2, **SMALL)
    X = np.random.default_rng(1).normal(size=(15, 6))
    h = models.predict_bits(m, X)
    np.testing.assert_allclose(m.scores(X), codec.class_scores(h, sample4), rtol=0, atol=1e-14)


class Rigged:
    """Stand-in model whose base classifier outputs are fixed."""

    def __init__(self, base, h):
        self.base, self.h = base, np.asarray(h, dtype=float)
        self.D, self.matrix = base.D, base.matrix

    def bits(self, X):
        return np.tile(self.h, (len(X), 1))

    def scores(self, X):
        return self.bits(X) @ self.matrix.entries.T


def test_predict_class_rigged(sample4):
    mtl = Rigged(models.build_mtl(3, sample4, **SMALL), sample4.entries[1])
    for metric in codec.METRICS:
        assert models.predict_class(mtl, np.zeros(3), metric) == 1
    emb_base = models.build_embedding(3, sample4, **SMALL)
    emb = Rigged(emb_base, [1, 1, 1, -1, -1])
    emb.__class__ = type("RiggedEmbedding", (Rigged, models.MtlEmbeddingNetwork), {})
    np.testing.assert_array_equal(emb.scores(np.zeros((1, 3)))[0], [5, -1, -1, -3])
    assert models.predict_class(emb, np.zeros(3)) == 0


@pytest.mark.parametrize("K,L", [(2, 3), (4, 6), (8, 8), (5, 12), (8, 12)])
def test_argmax_scores_equals_hamming_decode_exhaustive(K, L):
    M = codec.generate_random_matrix(K, L, seed=K * 100 + L)
    H = all_sign_vectors(L)
    by_scores = np.argmax(codec.class_scores(H, M), axis=1)
    by_decode = codec.decode_batch(H, M, "hamming")
    np.testing.assert_array_equal(by_scores, by_decode)
    # brute-force argmin with lowest-index ties on a sample of rows
    for h in H[:: max(1, len(H) // 64)]:
        d = [brute_hamming(h, row) for row in M.entries]
        assert by_decode[np.flatnonzero((H == h).all(axis=1))[0]] == d.index(min(d))


# -- combined loss -------------------------------------------------------------


def test_loss_at_codeword_is_zero(sample4):
    for c in range(4):
        lb = models.embedding_loss(sample4.entries[c], c, sample4)
        assert lb.total == 0 and lb.score_term == 0 and lb.bit_term == 0
        assert np.all(models.embedding_loss_grad(sample4.entries[c], c, sample4) == 0)


def test_loss_zero_output(sample4):
    lb = models.embedding_loss(np.zeros(5), 0, sample4)
    assert (lb.score_term, lb.bit_term, lb.total) == (25.0, 5.0, 30.0)


def test_loss_ternary_zero_excluded():
    M = CodeMatrix([[1, 0, -1], [-1, 1, 1]])
    lb = models.embedding_loss([1.0, 0.7, -1.0], 0, M)
    assert (lb.score_term, lb.bit_term, lb.total) == (0.0, 0.0, 0.0)


def test_grad_hand_value(sample4):
    g = models.embedding_loss_grad(np.zeros(5), 0, sample4)
    assert g[0] == -12.0
    # all positions: -2*5*M + 2*(0 - M) = -12*M
    np.testing.assert_array_equal(g, -12.0 * sample4.entries[0])


def test_loss_index_error(sample4):
    with pytest.raises(IndexOutOfRange):
        models.embedding_loss(np.zeros(5), 4, sample4)
    with pytest.raises(IndexOutOfRange):
        models.embedding_loss_grad(np.zeros(5), -1, sample4)


@pytest.mark.parametrize("zf", [0.0, 0.3])
def test_grad_matches_finite_differences(zf):
    rng = np.random.default_rng(int(zf * 10))
    for _ in range(20):
        K, L = int(rng.integers(2, 11)), int(rng.integers(4, 31))
        M = codec.generate_random_matrix(K, L, "binary" if zf == 0 else "ternary", zf, int(rng.integers(1 << 30)))
        h = rng.uniform(-1, 1, size=L)
        c = int(rng.integers(K))
        num = central_diff(lambda: models.embedding_loss(h, c, M).total, h)
        assert rel_err(models.embedding_loss_grad(h, c, M), num) < 1e-6


def test_batch_and_single_agree(sample4):
    rng = np.random.default_rng(4)
    H = rng.uniform(-1, 1, size=(6, 5))
    y = rng.integers(0, 4, 6)
    s, b = models.embedding_loss_batch(H, y, sample4)
    G = models.embedding_loss_grad_batch(H, y, sample4)
    for i in range(6):
        lb = models.embedding_loss(H[i], y[i], sample4)
        assert lb.score_term == s[i] and lb.bit_term == b[i]
        np.testing.assert_array_equal(G[i], models.embedding_loss_grad(H[i], y[i], sample4))


# -- checkpoints ----------------------------------------------------------------


@pytest.mark.parametrize("kind", models.KINDS)
def test_model_checkpoint_roundtrip(tmp_path, sample4, kind):
    arch = {"hidden": (7, 5, 3)} if kind == "independent" else SMALL
    m = models.build(kind, 6, sample4, seed=9, dropout=0.3, **arch)
    models.save_model(m, tmp_path / "ck", {"note": "x"})
    back, man = models.load_model(tmp_path / "ck")
    assert man["kind"] == kind and man["note"] == "x" and back.kind == kind
    assert back.matrix == sample4
    for a, b in zip(m.networks(), back.networks()):
        assert a.spec == b.spec
        assert all(x.tobytes() == y.tobytes() for x, y in zip(a.params(), b.params()))
    names = sorted(p.name for p in (tmp_path / "ck").iterdir())
    assert "manifest.txt" in names and "matrix.txt" in names
