import json

import numpy as np
import pytest

from gridcan.codec import encode_batch, sample_codec
from gridcan.kernels import FreqDist
from gridcan.lab import laplace_freq_dist
from gridcan.netbuild import WeightMatrix
from gridcan.storage import (FormatError, load_codec, load_matrix, read_manifest,
                             save_codec, save_matrix, spec_digest, write_csv,
                             write_kernel_csv, write_manifest, write_trajectory_csv)


class TestCodecFiles:
    def test_roundtrip(self, tmp_path):
        for mode in ("permutation", "ordered"):
            c = sample_codec(256, 8, FreqDist.gaussian(32.0), mode, seed=5)
            path = tmp_path / f"c_{mode}.gcan"
            save_codec(c, path)
            back = load_codec(path)
            assert back.n_neurons == 256 and back.block_len == 8
            assert back.offset_mode == mode and back.seed == 5
            assert np.array_equal(back.block_freqs, c.block_freqs)
            assert np.array_equal(back.offsets, c.offsets)
            assert back.freq_dist.kind == "gaussian"
            ps = np.linspace(-1, 1, 7)
            assert np.array_equal(encode_batch(back, ps), encode_batch(c, ps))

    def test_custom_dist_roundtrip(self, tmp_path):
        c = sample_codec(64, 8, laplace_freq_dist(16.0), "permutation", seed=1)
        save_codec(c, tmp_path / "c.gcan")
        back = load_codec(tmp_path / "c.gcan")
        assert back.freq_dist.kind == "custom"
        assert back.freq_dist.omega_ma == pytest.approx(c.freq_dist.omega_ma)

    def test_sidecar_metadata(self, tmp_path):
        c = sample_codec(64, 8, FreqDist.rectangular(8.0), "permutation", seed=2)
        save_codec(c, tmp_path / "c.gcan")
        meta = json.loads((tmp_path / "c.gcan.json").read_text())
        assert meta["n_neurons"] == 64 and meta["block_len"] == 8
        assert meta["codec_id"] == c.codec_id
        assert meta["freq_dist"]["kind"] == "rectangular"

    def test_magic_and_truncation_errors(self, tmp_path):
        bad = tmp_path / "bad.gcan"
        bad.write_bytes(b"NOPE" + b"\x00" * 64)
        with pytest.raises(FormatError):
            load_codec(bad)
        c = sample_codec(64, 8, FreqDist.gaussian(8.0), "permutation", seed=3)
        save_codec(c, tmp_path / "ok.gcan")
        raw = (tmp_path / "ok.gcan").read_bytes()
        (tmp_path / "trunc.gcan").write_bytes(raw[: len(raw) // 2])
        with pytest.raises(FormatError):
            load_codec(tmp_path / "trunc.gcan")

    def test_version_check(self, tmp_path):
        c = sample_codec(64, 8, FreqDist.gaussian(8.0), "permutation", seed=3)
        save_codec(c, tmp_path / "v.gcan")
        raw = bytearray((tmp_path / "v.gcan").read_bytes())
        raw[4] = 99
        (tmp_path / "v.gcan").write_bytes(bytes(raw))
        with pytest.raises(FormatError):
            load_codec(tmp_path / "v.gcan")


class TestMatrixFiles:
    def test_roundtrip_with_provenance(self, tmp_path):
        w = WeightMatrix(np.arange(64, dtype=np.float32).reshape(8, 8),
                         {"kind": "auto", "block_len": 2})
        save_matrix(w, tmp_path / "m.gcwm")
        back = load_matrix(tmp_path / "m.gcwm")
        assert np.array_equal(back.values, w.values)
        assert back.provenance["kind"] == "auto"
        assert back.provenance["block_len"] == 2

    def test_bad_magic(self, tmp_path):
        (tmp_path / "m.gcwm").write_bytes(b"XXXX" + b"\x00" * 32)
        with pytest.raises(FormatError):
            load_matrix(tmp_path / "m.gcwm")

    def test_truncated(self, tmp_path):
        w = WeightMatrix(np.ones((16, 16), dtype=np.float32), {})
        save_matrix(w, tmp_path / "m.gcwm")
        raw = (tmp_path / "m.gcwm").read_bytes()
        (tmp_path / "m.gcwm").write_bytes(raw[:-64])
        with pytest.raises(FormatError):
            load_matrix(tmp_path / "m.gcwm")


class TestTables:
    def test_kernel_csv_columns(self, tmp_path):
        from gridcan.codec import KernelTable
        tab = KernelTable(np.array([0.0, 0.1]), np.array([1.0, 0.5]),
                          np.array([0.0, 0.01]), np.array([1.0, 0.52]))
        write_kernel_csv(tmp_path / "k.csv", tab)
        lines = (tmp_path / "k.csv").read_text().strip().split("\n")
        assert lines[0] == "dp,mean,stderr,theory"
        assert lines[1].startswith("0,1,0,1")

    def test_trajectory_csv(self, tmp_path):
        write_trajectory_csv(tmp_path / "t.csv", [0, 1], np.array([0.5, 0.6]),
                             np.array([1.0, 0.9]), energy=np.array([-1.0, -1.1]),
                             t_seconds=np.array([0.0, 0.001]))
        lines = (tmp_path / "t.csv").read_text().strip().split("\n")
        assert lines[0] == "step,p_hat,similarity,energy,t_seconds"
        assert len(lines) == 3

    def test_trajectory_csv_2d(self, tmp_path):
        write_trajectory_csv(tmp_path / "t.csv", [0], np.array([[0.5, 0.3]]),
                             np.array([1.0]))
        assert (tmp_path / "t.csv").read_text().startswith("step,p_hat_0,p_hat_1,similarity")

    def test_csv_nan(self, tmp_path):
        write_csv(tmp_path / "x.csv", ["a"], [(float("nan"),)])
        assert "nan" in (tmp_path / "x.csv").read_text()


class TestManifest:
    def test_write_read_and_digest(self, tmp_path):
        spec = {"recipe": "fig3", "params": {"x": 1}}
        write_manifest(tmp_path, spec, 7, [{"name": "a"}], {"f": "x.csv"})
        m = read_manifest(tmp_path)
        assert m["master_seed"] == 7
        assert m["spec_sha256"] == spec_digest(spec)
        assert m["cells"][0]["name"] == "a"

    def test_refuses_overwrite(self, tmp_path):
        write_manifest(tmp_path, {}, 0, [], {})
        with pytest.raises(FileExistsError):
            write_manifest(tmp_path, {}, 0, [], {})
        write_manifest(tmp_path, {}, 1, [], {}, force=True)
        assert read_manifest(tmp_path)["master_seed"] == 1

    def test_missing_manifest(self, tmp_path):
        with pytest.raises(FormatError):
            read_manifest(tmp_path)

    def test_digest_order_insensitive(self):
        assert spec_digest({"a": 1, "b": 2}) == spec_digest({"b": 2, "a": 1})
