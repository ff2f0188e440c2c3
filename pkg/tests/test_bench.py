"""Harness tests: ratio reports, smoothing sweep, load benchmark."""

import numpy as np
import pytest

from qmc.bench import (
    analyze_model,
    bench_load,
    layer_group,
    sweep_alpha,
    write_raw_int8,
)
from qmc.container import ContainerReader, pack
from qmc.errors import ValidationError
from qmc.quant import quantize_tensor_wise
from qmc.tensorio import SynthSpec, Tensor, TensorMap, synth_activation, synth_weights


def compressible_tensor(name, seed=0, rows=256, cols=256, spike=32.8):
    """Float32 tensor whose tensor-wise int8 image has ~4-bit entropy (C~2):
    a unit-Gaussian body with one large value that sets the scale."""
    rng = np.random.default_rng(seed)
    data = np.clip(rng.normal(0, 1.0, (rows, cols)), -5, 5).astype(np.float32)
    data[0, 0] = spike
    return quantize_tensor_wise(Tensor(name, data))


def _synth_map(n=3, seed=0, rows=64, cols=64, fraction=0.03, scale=100.0):
    m = TensorMap()
    groups = ["attn.c_attn", "attn.c_proj", "mlp.c_fc", "mlp.c_proj"]
    for i in range(n):
        spec = SynthSpec(rows=rows, cols=cols, outlier_fraction=fraction,
                         outlier_scale=scale, seed=seed + i)
        m.add(synth_weights(spec, name=f"h.{i}.{groups[i % 4]}.weight"))
    return m


class TestLayerGroup:
    @pytest.mark.parametrize("name,expected", [
        ("h.0.mlp.c_proj.weight", "mlp.c_proj"),
        ("h.11.attn.c_attn.weight", "attn.c_attn"),
        ("transformer.h.3.mlp.c_fc.bias", "mlp.c_fc"),
        ("emb.weight", "emb"),
        ("x", "x"),
    ])
    def test_grouping(self, name, expected):
        assert layer_group(name) == expected


class TestAnalyzeModel:
    def test_row_per_tensor_scheme_codec(self):
        m = _synth_map(4)
        rep = analyze_model(m, schemes=("tensor", "channel"),
                            codecs_list=("huffman", "tans"))
        assert len(rep.rows) == 4 * 2 * 2
        assert not rep.notices

    def test_skips_non_matrix_with_notice(self):
        m = _synth_map(2)
        m.add(Tensor("bias", np.zeros(8, dtype=np.float32)))
        rep = analyze_model(m)
        assert any("bias" in n for n in rep.notices)
        assert {r.tensor for r in rep.rows} == set(m.names()) - {"bias"}

    def test_tensor_wise_more_compressible_on_outliers(self):
        m = _synth_map(6, fraction=0.02)
        rep = analyze_model(m, codecs_list=("tans",), axis="column")
        assert rep.mean_c("tensor", "tans") > rep.mean_c("channel", "tans")

    def test_c_recomputable_from_container(self, tmp_path):
        # the reported C must equal original/blob_len from the packed file
        m = _synth_map(3)
        rep = analyze_model(m, schemes=("tensor",), codecs_list=("huffman",))
        qs = [quantize_tensor_wise(t) for t in m]
        p = tmp_path / "m.qmc"
        pack(qs, p, codec="huffman")
        with ContainerReader(p) as r:
            for row, e in zip(rep.rows, r.manifest["tensors"]):
                assert row.actual_size_bytes == e["blob_len"]
                assert row.c_ratio == e["original_len"] / e["blob_len"]

    def test_rows_deterministic(self):
        m = _synth_map(2)
        a = analyze_model(m, codecs_list=("tans",))
        b = analyze_model(m, codecs_list=("tans",))
        assert a.rows == b.rows

    def test_threads_do_not_change_rows(self):
        m = _synth_map(5)
        a = analyze_model(m, codecs_list=("huffman",), threads=1)
        b = analyze_model(m, codecs_list=("huffman",), threads=4)
        assert a.rows == b.rows

    def test_group_means_expose_depth_structure(self):
        m = _synth_map(8)
        rep = analyze_model(m, schemes=("tensor",), codecs_list=("tans",))
        means = rep.group_means("tensor", "tans")
        assert set(means) == {"attn.c_attn", "attn.c_proj", "mlp.c_fc", "mlp.c_proj"}
        # per-tensor rows stay inspectable for depth (first/middle/last) studies
        assert len({r.tensor for r in rep.rows}) == 8

    def test_csv_schema(self):
        rep = analyze_model(_synth_map(1))
        text = rep.csv_text()
        header = text.splitlines()[0].split(",")
        for col in ("tensor", "scheme", "codec", "entropy_bits",
                    "excess_kurtosis", "ideal_size_bytes", "actual_size_bytes",
                    "c_ratio"):
            assert col in header


class TestSweepAlpha:
    def _xw(self, seed=5):
        x = synth_activation(SynthSpec(rows=192, cols=128, outlier_fraction=0.02,
                                       outlier_scale=100.0, seed=seed))
        w = synth_weights(SynthSpec(rows=128, cols=128, seed=seed))
        return x, w

    def test_smoothing_trades_ratio_for_accuracy(self):
        x, w = self._xw()
        rep = sweep_alpha(x, w, [0.5])
        plain = rep.row("activation", "plain")
        smooth = rep.row("activation", "smoothed", 0.5)
        assert smooth.c_ratio < plain.c_ratio
        assert smooth.mse < plain.mse

    def test_endpoints_are_valid_runs(self):
        x, w = self._xw(seed=6)
        rep = sweep_alpha(x, w, [0.0, 1.0])
        assert rep.row("activation", "smoothed", 0.0).c_ratio > 0
        assert rep.row("weight", "smoothed", 1.0).c_ratio > 0

    def test_weight_rows_present(self):
        x, w = self._xw(seed=7)
        rep = sweep_alpha(x, w, [0.25, 0.75])
        subjects = {(r.subject, r.variant, r.alpha) for r in rep.rows}
        assert ("weight", "smoothed", 0.25) in subjects
        assert ("weight", "plain", None) in subjects
        assert len(rep.rows) == 2 + 2 * 2


class TestBenchLoad:
    def _files(self, tmp_path, sigma=4.0, n=6, rows=96, cols=96, codec="tans"):
        qs = []
        rng = np.random.default_rng(1)
        for i in range(n):
            data = rng.normal(0, sigma, (rows, cols)).astype(np.float32)
            qs.append(quantize_tensor_wise(Tensor(f"t{i}", data)))
        cpath, rpath = tmp_path / "m.qmc", tmp_path / "m.raw"
        pack(qs, cpath, codec=codec)
        write_raw_int8(qs, rpath)
        return cpath, rpath

    @pytest.mark.parametrize("strategy", ["buffered_read", "memory_mapped"])
    def test_reports_consistent(self, tmp_path, strategy):
        cpath, rpath = self._files(tmp_path)
        raw, comp = bench_load(cpath, rpath, strategy=strategy, trials=2,
                               cold_cache="none")
        assert raw.strategy == comp.strategy == strategy
        assert not raw.compressed and comp.compressed
        assert comp.decode_time_s > 0
        assert comp.bytes_from_storage < raw.bytes_from_storage
        assert raw.wall_time_s > 0 and comp.wall_time_s > 0

    def test_speedup_approaches_ratio_when_decode_free(self, tmp_path):
        # paced storage, decode much faster than the cap: speedup -> C
        import os

        cpath, rpath = tmp_path / "c.qmc", tmp_path / "c.raw"
        qs = [compressible_tensor(f"t{i}", seed=i, rows=512, cols=512)
              for i in range(8)]
        pack(qs, cpath, codec="tans")
        write_raw_int8(qs, rpath)
        c = os.path.getsize(rpath) / os.path.getsize(cpath)
        assert c > 1.5
        raw, comp = bench_load(
            cpath, rpath, trials=1, bandwidth_cap_mb_s=20.0,
            decode_mb_s=20.0 * 50, cold_cache="none",
        )
        speedup = raw.wall_time_s / comp.overlapped_wall_s
        assert speedup == pytest.approx(c, rel=0.15)

    def test_store_mode_not_faster(self, tmp_path):
        # incompressible payload: C ~= 1, so compressed load cannot win
        rng = np.random.default_rng(3)
        qs = [
            quantize_tensor_wise(
                Tensor(f"r{i}", rng.uniform(-1, 1, (128, 128)).astype(np.float32))
            )
            for i in range(4)
        ]
        cpath, rpath = tmp_path / "r.qmc", tmp_path / "r.raw"
        pack(qs, cpath, codec="huffman")
        write_raw_int8(qs, rpath)
        raw, comp = bench_load(
            cpath, rpath, trials=1, bandwidth_cap_mb_s=40.0,
            decode_mb_s=200.0, cold_cache="none",
        )
        assert comp.wall_time_s >= raw.wall_time_s * 0.95

    def test_bad_strategy(self, tmp_path):
        cpath, rpath = self._files(tmp_path, n=1)
        with pytest.raises(ValidationError, match="strategy"):
            bench_load(cpath, rpath, strategy="bogus")

    def test_evict_cold_cache_path(self, tmp_path):
        # tiny junk size: exercises the unprivileged-eviction fallback
        cpath, rpath = self._files(tmp_path, n=1)
        raw, comp = bench_load(cpath, rpath, trials=1, cold_cache="evict",
                               evict_bytes=2 << 20)
        assert raw.wall_time_s > 0 and comp.wall_time_s > 0
