import math

import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make_record
from spaa.attention import (
    AttentionStore,
    attention_map_into,
    capture_self_at_least,
    mean_map_over_timesteps,
    project_qkv,
    row_softmax,
    scaled_dot_attention,
)
from spaa.errors import (
    AttentionStoreConflict,
    AttentionStoreMiss,
    InvalidRecordError,
    MissingTextConditioningError,
    ShapeMismatchError,
)


def scalar_attention_oracle(q, k, v):
    """Independent scalar-loop evaluation of softmax(QK^T/sqrt(d_k))V."""
    q = np.asarray(q, dtype=np.float64)
    k = np.asarray(k, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    n_q, d_k = q.shape
    n_k = k.shape[0]
    attn = np.zeros((n_q, n_k))
    for i in range(n_q):
        logits = [
            sum(q[i, d] * k[j, d] for d in range(d_k)) / math.sqrt(d_k)
            for j in range(n_k)
        ]
        mx = max(logits)
        exps = [math.exp(x - mx) for x in logits]
        total = sum(exps)
        for j in range(n_k):
            attn[i, j] = exps[j] / total
    out = np.zeros((n_q, v.shape[1]))
    for i in range(n_q):
        for d in range(v.shape[1]):
            out[i, d] = sum(attn[i, j] * v[j, d] for j in range(n_k))
    return out, attn


class TestScaledDotAttention:
    def test_single_position(self):
        x = torch.tensor([[3.5]])
        out, attn = scaled_dot_attention(x, x, x)
        assert attn.tolist() == [[1.0]]
        assert out.tolist() == [[3.5]]

    def test_identical_keys_give_uniform_rows(self):
        q = torch.randn(4, 8)
        k = torch.ones(6, 8)
        v = torch.randn(6, 3)
        _, attn = scaled_dot_attention(q, k, v)
        assert torch.allclose(attn, torch.full((4, 6), 1.0 / 6.0), atol=1e-7)

    def test_matches_scalar_oracle_seed7(self):
        rng = np.random.default_rng(7)
        q = torch.from_numpy(rng.standard_normal((4, 8)).astype(np.float32))
        k = torch.from_numpy(rng.standard_normal((6, 8)).astype(np.float32))
        v = torch.from_numpy(rng.standard_normal((6, 3)).astype(np.float32))
        out, attn = scaled_dot_attention(q, k, v)
        out_ref, attn_ref = scalar_attention_oracle(q, k, v)
        np.testing.assert_allclose(attn.numpy(), attn_ref, atol=1e-6)
        np.testing.assert_allclose(out.numpy(), out_ref, atol=1e-5)

    def test_dimension_mismatch_names_operands(self):
        with pytest.raises(ShapeMismatchError, match="query/key"):
            scaled_dot_attention(torch.randn(4, 8), torch.randn(6, 7), torch.randn(6, 3))
        with pytest.raises(ShapeMismatchError, match="key/value"):
            scaled_dot_attention(torch.randn(4, 8), torch.randn(6, 8), torch.randn(5, 3))

    def test_chunked_path_matches_plain(self):
        rng = np.random.default_rng(3)
        q = torch.from_numpy(rng.standard_normal((70, 16)).astype(np.float32))
        k = torch.from_numpy(rng.standard_normal((70, 16)).astype(np.float32))
        out = torch.empty(70, 70)
        attention_map_into(q, k, out, chunk_rows=16)
        _, ref = scaled_dot_attention(q, k, torch.zeros(70, 1))
        assert torch.allclose(out, ref, atol=1e-7)

    @settings(max_examples=40, deadline=None)
    @given(
        n_q=st.integers(1, 6),
        n_k=st.integers(1, 6),
        d_k=st.integers(1, 8),
        seed=st.integers(0, 2**16),
    )
    def test_maps_are_row_stochastic(self, n_q, n_k, d_k, seed):
        rng = np.random.default_rng(seed)
        q = torch.from_numpy((rng.standard_normal((n_q, d_k)) * 3).astype(np.float32))
        k = torch.from_numpy((rng.standard_normal((n_k, d_k)) * 3).astype(np.float32))
        v = torch.from_numpy(rng.standard_normal((n_k, 2)).astype(np.float32))
        _, attn = scaled_dot_attention(q, k, v)
        sums = attn.to(torch.float64).sum(dim=-1)
        assert float((sums - 1.0).abs().max()) <= 1e-6
        assert float(attn.min()) >= 0.0

    @settings(max_examples=40, deadline=None)
    @given(
        rows=st.integers(1, 5),
        cols=st.integers(1, 6),
        shift=st.floats(-50, 50, allow_nan=False),
        seed=st.integers(0, 2**16),
    )
    def test_softmax_shift_invariance(self, rows, cols, shift, seed):
        rng = np.random.default_rng(seed)
        logits = torch.from_numpy(rng.standard_normal((rows, cols)) * 4)
        base = row_softmax(logits)
        shifted = row_softmax(logits + shift)
        assert float((base - shifted).abs().max()) <= 1e-9


class TestProjectQkv:
    def test_identity_self(self):
        x = torch.randn(5, 4)
        eye = torch.eye(4)
        q, k, v = project_qkv(x, eye, eye, eye)
        assert torch.equal(q, x) and torch.equal(k, x) and torch.equal(v, x)

    def test_identity_cross_uses_text(self):
        x = torch.randn(5, 4)
        t = torch.randn(3, 4)
        eye = torch.eye(4)
        q, k, v = project_qkv(x, eye, eye, eye, kind="cross", text_embedding=t)
        assert torch.equal(q, x)
        assert torch.equal(k, t) and torch.equal(v, t)

    def test_cross_without_text_errors(self):
        with pytest.raises(MissingTextConditioningError):
            project_qkv(torch.randn(5, 4), torch.eye(4), torch.eye(4), torch.eye(4), kind="cross")

    def test_matches_matmul_oracle(self):
        rng = np.random.default_rng(11)
        x = rng.standard_normal((3, 4)).astype(np.float32)
        w = [rng.standard_normal((4, 2)).astype(np.float32) for _ in range(3)]
        q, k, v = project_qkv(torch.from_numpy(x), *map(torch.from_numpy, w))
        for got, weight in zip((q, k, v), w):
            expect = np.zeros((3, 2))
            for i in range(3):
                for j in range(2):
                    expect[i, j] = sum(x[i, d] * weight[d, j] for d in range(4))
            np.testing.assert_allclose(got.numpy(), expect, atol=1e-6)


class TestAttentionStore:
    def test_round_trip_identical(self):
        rng = np.random.default_rng(0)
        store = AttentionStore()
        rec = make_record(rng)
        store.record(rec)
        got = store.fetch(0, "b0.self", 0)
        assert torch.equal(got.map, rec.map)
        assert torch.equal(got.query, rec.query)

    def test_fetch_unknown_is_miss(self):
        store = AttentionStore()
        with pytest.raises(AttentionStoreMiss):
            store.fetch(0, "nope", 0)

    def test_duplicate_insert_conflicts(self):
        rng = np.random.default_rng(0)
        store = AttentionStore()
        store.record(make_record(rng))
        with pytest.raises(AttentionStoreConflict):
            store.record(make_record(rng))

    def test_validation_rejects_bad_rows(self):
        rng = np.random.default_rng(0)
        rec = make_record(rng)
        rec.map = rec.map * 2.0
        with pytest.raises(InvalidRecordError):
            AttentionStore().record(rec)

    def test_capture_policy_filters(self):
        rng = np.random.default_rng(0)
        store = AttentionStore(capture_policy=capture_self_at_least(8))
        assert not store.record(make_record(rng, resolution=4))
        assert store.record(make_record(rng, resolution=8))
        assert len(store) == 1

    def test_copy_on_insert_isolates_mutation(self):
        rng = np.random.default_rng(0)
        store = AttentionStore()
        rec = make_record(rng)
        snapshot = rec.map.clone()
        store.record(rec)
        rec.map.mul_(0.0)
        assert torch.equal(store.fetch(0, "b0.self", 0).map, snapshot)

    @settings(max_examples=25, deadline=None)
    @given(n=st.integers(1, 12), seed=st.integers(0, 2**16))
    def test_unique_key_inserts_round_trip(self, n, seed):
        rng = np.random.default_rng(seed)
        store = AttentionStore()
        recs = [make_record(rng, timestep=t) for t in range(n)]
        for r in recs:
            store.record(r)
        for r in recs:
            assert torch.equal(store.fetch(r.timestep, r.layer_id, r.head).map, r.map)


class TestMeanMap:
    def test_single_record_mean_is_itself(self):
        rng = np.random.default_rng(1)
        store = AttentionStore()
        rec = make_record(rng)
        store.record(rec)
        mean = mean_map_over_timesteps(store, "b0.self")
        assert torch.allclose(mean, rec.map, atol=1e-7)

    def test_two_maps_average(self):
        rng = np.random.default_rng(2)
        store = AttentionStore()
        a = make_record(rng, timestep=0)
        b = make_record(rng, timestep=1)
        store.record(a)
        store.record(b)
        mean = mean_map_over_timesteps(store, "b0.self")
        assert torch.allclose(mean, (a.map + b.map) / 2, atol=1e-7)

    def test_five_random_maps_match_accumulation_oracle(self):
        rng = np.random.default_rng(5)
        store = AttentionStore()
        maps = []
        for t in range(5):
            rec = make_record(rng, timestep=t, resolution=4)
            maps.append(rec.map.numpy().astype(np.float64))
            store.record(rec)
        mean = mean_map_over_timesteps(store, "b0.self")
        acc = np.zeros_like(maps[0])
        for m in maps:
            for i in range(m.shape[0]):
                for j in range(m.shape[1]):
                    acc[i, j] += m[i, j]
        acc /= len(maps)
        np.testing.assert_allclose(mean.numpy(), acc, atol=1e-6)
        sums = mean.to(torch.float64).sum(dim=-1)
        assert float((sums - 1.0).abs().max()) <= 1e-6

    def test_empty_layer_is_miss(self):
        with pytest.raises(AttentionStoreMiss):
            mean_map_over_timesteps(AttentionStore(), "b9.self")

    def test_mean_of_stochastic_is_stochastic(self):
        rng = np.random.default_rng(9)
        store = AttentionStore()
        for t in range(4):
            rec = make_record(rng, timestep=t, resolution=5)
            store.record(rec)
        mean = mean_map_over_timesteps(store, "b0.self")
        sums = mean.to(torch.float64).sum(dim=-1)
        assert float((sums - 1.0).abs().max()) <= 1e-6
        assert float(mean.min()) >= 0.0
