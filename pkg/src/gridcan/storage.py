"""On-disk formats: codec and matrix binaries, CSV tables, manifests.

Codec file: magic "GCAN", format version u16, then N, L, offset mode
and seed, followed by per-neuron frequencies and offsets as
little-endian float64. A JSON sidecar (<file>.json) mirrors the
metadata for inspection. Matrix file: magic "GCWM", version u16, N,
then row-major little-endian float32 values, with the provenance
record in the sidecar.
"""

from __future__ import annotations

import hashlib
import json
import os
import struct
from pathlib import Path

import numpy as np

from .codec import BlockCodec
from .kernels import FreqDist
from .netbuild import WeightMatrix

__all__ = [
    "save_codec", "load_codec", "save_matrix", "load_matrix",
    "write_csv", "write_kernel_csv", "write_trajectory_csv", "write_plotdata_csv",
    "write_manifest", "read_manifest", "spec_digest", "FormatError",
]

CODEC_MAGIC = b"GCAN"
MATRIX_MAGIC = b"GCWM"
FORMAT_VERSION = 1
_MODES = {"permutation": 0, "ordered": 1}
_MODES_INV = {v: k for k, v in _MODES.items()}


class FormatError(RuntimeError):
    pass


def _sidecar(path) -> Path:
    return Path(str(path) + ".json")


def save_codec(codec: BlockCodec, path) -> None:
    path = Path(path)
    freqs = np.repeat(codec.block_freqs, codec.block_len).astype("<f8")
    offsets = codec.offsets.astype("<f8")
    with open(path, "wb") as fh:
        fh.write(CODEC_MAGIC)
        fh.write(struct.pack("<H", FORMAT_VERSION))
        fh.write(struct.pack("<QQBq", codec.n_neurons, codec.block_len,
                             _MODES[codec.offset_mode], codec.seed))
        fh.write(freqs.tobytes())
        fh.write(offsets.tobytes())
    meta = {
        "format_version": FORMAT_VERSION,
        "n_neurons": codec.n_neurons,
        "block_len": codec.block_len,
        "offset_mode": codec.offset_mode,
        "seed": codec.seed,
        "codec_id": codec.codec_id,
        "omega_ma": codec.omega_ma,
        "freq_dist": codec.freq_dist.to_json() if codec.freq_dist else None,
    }
    _sidecar(path).write_text(json.dumps(meta, indent=1))


def load_codec(path) -> BlockCodec:
    path = Path(path)
    raw = path.read_bytes()
    if raw[:4] != CODEC_MAGIC:
        raise FormatError(f"{path}: not a codec file (bad magic)")
    (version,) = struct.unpack_from("<H", raw, 4)
    if version != FORMAT_VERSION:
        raise FormatError(f"{path}: unsupported codec format version {version}")
    n, L, mode, seed = struct.unpack_from("<QQBq", raw, 6)
    off = 6 + struct.calcsize("<QQBq")
    freqs = np.frombuffer(raw, dtype="<f8", count=n, offset=off)
    offsets = np.frombuffer(raw, dtype="<f8", count=n, offset=off + 8 * n)
    if len(offsets) < n:
        raise FormatError(f"{path}: truncated codec file")
    block_freqs = freqs[::L].copy()
    if np.any(freqs.reshape(-1, L) != block_freqs[:, None]):
        raise FormatError(f"{path}: frequencies are not block-constant")
    dist = None
    side = _sidecar(path)
    if side.exists():
        meta = json.loads(side.read_text())
        if meta.get("freq_dist"):
            dist = FreqDist.from_json(meta["freq_dist"])
    return BlockCodec(int(n), int(L), block_freqs, offsets.copy(),
                      _MODES_INV[mode], int(seed), dist)


def save_matrix(matrix: WeightMatrix, path) -> None:
    path = Path(path)
    vals = np.ascontiguousarray(matrix.values, dtype="<f4")
    with open(path, "wb") as fh:
        fh.write(MATRIX_MAGIC)
        fh.write(struct.pack("<H", FORMAT_VERSION))
        fh.write(struct.pack("<Q", vals.shape[0]))
        fh.write(vals.tobytes())
    _sidecar(path).write_text(json.dumps(
        {"format_version": FORMAT_VERSION, "n_neurons": int(vals.shape[0]),
         "provenance": matrix.provenance}, indent=1, default=str))


def load_matrix(path) -> WeightMatrix:
    path = Path(path)
    with open(path, "rb") as fh:
        if fh.read(4) != MATRIX_MAGIC:
            raise FormatError(f"{path}: not a matrix file (bad magic)")
        (version,) = struct.unpack("<H", fh.read(2))
        if version != FORMAT_VERSION:
            raise FormatError(f"{path}: unsupported matrix format version {version}")
        (n,) = struct.unpack("<Q", fh.read(8))
        vals = np.fromfile(fh, dtype="<f4", count=n * n)
    if vals.size != n * n:
        raise FormatError(f"{path}: truncated matrix file")
    prov = {}
    side = _sidecar(path)
    if side.exists():
        prov = json.loads(side.read_text()).get("provenance", {})
    return WeightMatrix(vals.reshape(n, n), prov)


# -- tabular outputs -----------------------------------------------------

def write_csv(path, header, rows) -> None:
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def _fmt(v) -> str:
    if isinstance(v, float) and not np.isfinite(v):
        return "nan"
    if isinstance(v, (float, np.floating)):
        return f"{v:.10g}"
    return str(v)


def write_kernel_csv(path, table) -> None:
    write_csv(path, ["dp", "mean", "stderr", "theory"], table.rows())


def write_trajectory_csv(path, steps, positions, similarity, energy=None,
                         t_seconds=None) -> None:
    positions = np.asarray(positions)
    if positions.ndim == 1:
        positions = positions[:, None]
    pcols = [f"p_hat_{d}" for d in range(positions.shape[1])] if positions.shape[1] > 1 else ["p_hat"]
    header = ["step"] + pcols + ["similarity"]
    cols = [steps] + [positions[:, d] for d in range(positions.shape[1])] + [similarity]
    if energy is not None:
        header.append("energy")
        cols.append(energy)
    if t_seconds is not None:
        header.append("t_seconds")
        cols.append(t_seconds)
    write_csv(path, header, zip(*cols))


def write_plotdata_csv(path, x, y, ylo=None, yhi=None) -> None:
    ylo = y if ylo is None else ylo
    yhi = y if yhi is None else yhi
    write_csv(path, ["x", "y", "ylo", "yhi"], zip(x, y, ylo, yhi))


# -- run manifests -------------------------------------------------------

def spec_digest(doc: dict) -> str:
    return hashlib.sha256(json.dumps(doc, sort_keys=True).encode()).hexdigest()


def write_manifest(out_dir, spec: dict, master_seed: int, cells: list,
                   artifacts: dict, force: bool = False) -> Path:
    """Atomically write the run manifest; refuse to clobber unless forced."""
    from . import __version__
    out_dir = Path(out_dir)
    path = out_dir / "manifest.json"
    if path.exists() and not force:
        raise FileExistsError(f"{path} exists (use force to overwrite)")
    doc = {
        "spec": spec,
        "spec_sha256": spec_digest(spec),
        "master_seed": master_seed,
        "code_version": __version__,
        "cells": cells,
        "artifacts": artifacts,
    }
    tmp = path.with_suffix(".json.tmp")
    tmp.write_text(json.dumps(doc, indent=1, default=str))
    os.replace(tmp, path)
    return path


def read_manifest(out_dir) -> dict:
    path = Path(out_dir) / "manifest.json"
    if not path.exists():
        raise FormatError(f"no manifest in {out_dir}")
    return json.loads(path.read_text())
