"""Weight-matrix construction.

Autoassociative terms are Hebbian covariance integrals of centred
codewords over a manifold sample grid (midpoint rule). Heteroassociative
terms pair surrogate-gradient codewords with sign-bound centred
codewords, giving input-gated integration along a chosen vector field;
jump terms pair destination codewords with sign-bound source codewords,
giving input-gated transitions between manifolds.

All quadratures accumulate in float64 and store float32. Within-block
entries are zeroed in every term (zeroing is linear, so the superposed
matrix matches zeroing applied after superposition).

The raw surrogate drive under-delivers: the logistic window at finite
steepness is soft, and the block competition loses part of the
commanded shift, so the realized step speed would sit well under c.
build_hetero therefore measures the noiseless realized speed against
the autoassociative matrix and rescales the term until the commanded
speed is honoured (c is the speed contract, not a raw prefactor).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .codec import BlockCodec, CompositeCodec, _smooth_dphi_batch, DEFAULT_BETA
from .manifolds import ManifoldSpec, VectorField
from .net import Codebook, InputMask, MaskInterval, simulate_trials
from .rng import substream

__all__ = [
    "WeightMatrix",
    "SignVector",
    "BuildReport",
    "sample_sign",
    "build_auto",
    "build_hetero",
    "build_jump",
    "measure_energies",
    "energy_correct",
    "superpose",
    "add_weight_noise",
    "binarize",
]

_CHUNK = 4096


@dataclass
class WeightMatrix:
    """Dense N x N synaptic matrix with a construction record."""

    values: np.ndarray
    provenance: dict = field(default_factory=dict)

    @property
    def n_neurons(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True)
class SignVector:
    """Bipolar +-1 vector bound into heteroassociative terms."""

    values: np.ndarray
    block_constant: bool = True

    def __post_init__(self):
        if not np.isin(self.values, (-1.0, 1.0)).all():
            raise ValueError("sign vector entries must be -1 or +1")

    def mask(self, polarity: int = +1, fraction: float = 1.0,
             rng: np.random.Generator | None = None) -> InputMask:
        return InputMask.from_sign(self.values, polarity, fraction, rng)


def sample_sign(n_neurons: int, block_len: int, seed: int) -> SignVector:
    """Block-constant random sign vector (all neurons of a block agree)."""
    rng = substream(seed, "sign")
    per_block = rng.choice(np.array([-1.0, 1.0]), n_neurons // block_len)
    return SignVector(np.repeat(per_block, block_len).astype(np.float32))


def _codec_props(codec):
    if isinstance(codec, (BlockCodec, CompositeCodec)):
        return codec.n_neurons, codec.block_len
    raise TypeError(f"expected BlockCodec or CompositeCodec, got {type(codec)!r}")


def _indices(codec, pts_embed: np.ndarray) -> np.ndarray:
    """(S, M) active indices of embedded points (S, D')."""
    if isinstance(codec, CompositeCodec):
        return codec.active_indices(pts_embed)
    if pts_embed.ndim == 2 and pts_embed.shape[1] == 1:
        pts_embed = pts_embed[:, 0]
    return codec.active_indices(pts_embed)


def _dense(idx_chunk: np.ndarray, n: int, block_len: int) -> np.ndarray:
    out = np.zeros((len(idx_chunk), n))
    m = n // block_len
    out[np.arange(len(idx_chunk))[:, None], idx_chunk + np.arange(m) * block_len] = 1.0
    return out

def _zero_within_block(values: np.ndarray, block_len: int) -> None:
    n = values.shape[0]
    for start in range(0, n, block_len):
        values[start:start + block_len, start:start + block_len] = 0.0


def _quad_weights(manifold: ManifoldSpec, energies: np.ndarray | None = None) -> np.ndarray:
    """Per-sample quadrature weight w / sqrt(det G) [/ |E|]."""
    wq = manifold.weights / manifold.sqrt_det_metric(manifold.grid)
    if energies is not None:
        e = np.abs(np.asarray(energies, dtype=float))
        if np.any(e == 0):
            raise ValueError("measured energy is zero at a sample point; cannot energy-correct")
        wq = wq / e * np.mean(np.abs(energies))
    return wq


def build_auto(codec, manifold: ManifoldSpec, energies: np.ndarray | None = None) -> WeightMatrix:
    """Autoassociative matrix: integral of centred outer products.

    With `energies` given (the first-order build's measured energies),
    samples are reweighted by 1/|E| as the second step of the curved
    manifold procedure; the overall scale is normalized back to the
    mean measured energy so flat manifolds are (nearly) unchanged.
    """
    n, L = _codec_props(codec)
    wq = _quad_weights(manifold, energies)
    pts = np.asarray(manifold.embed(manifold.grid), dtype=float)
    idx = _indices(codec, pts)
    acc = np.zeros((n, n))
    for s in range(0, len(idx), _CHUNK):
        xc = _dense(idx[s:s + _CHUNK], n, L) - 1.0 / L
        acc += xc.T @ (wq[s:s + _CHUNK, None] * xc)
    _zero_within_block(acc, L)
    prov = {
        "kind": "auto",
        "manifold": manifold.name,
        "codec_id": codec.codec_id,
        "block_len": L,
        "n_samples": len(idx),
        "energy_corrected": energies is not None,
    }
    return WeightMatrix(acc.astype(np.float32), prov)


def measure_energies(weights, codec, manifold: ManifoldSpec) -> "BuildReport":
    """Per-sample energies E(p) = -x(p)^T W x(p) on the manifold grid."""
    n, L = _codec_props(codec)
    w = weights.values if isinstance(weights, WeightMatrix) else np.asarray(weights)
    pts = np.asarray(manifold.embed(manifold.grid), dtype=float)
    idx = _indices(codec, pts)
    e = np.empty(len(idx))
    w64 = w.astype(np.float64)
    for s in range(0, len(idx), _CHUNK):
        x = _dense(idx[s:s + _CHUNK], n, L)
        e[s:s + _CHUNK] = -np.einsum("si,si->s", x @ w64, x)
    step_est = float(np.min(manifold.weights) ** (1.0 / manifold.intrinsic_dim))
    return BuildReport(energies=e, quadrature_step=step_est, diagnostics={
        "min": float(e.min()), "max": float(e.max()),
        "cov": float(np.std(e) / abs(np.mean(e))) if np.mean(e) != 0 else math.inf,
    })


@dataclass
class BuildReport:
    """Energy sweep of a built matrix over its manifold grid."""

    energies: np.ndarray
    quadrature_step: float
    diagnostics: dict = field(default_factory=dict)


def energy_correct(a_fo: WeightMatrix, codec, manifold: ManifoldSpec) -> WeightMatrix:
    """Two-step curvature correction: rebuild with 1/|E|-weighted samples."""
    report = measure_energies(a_fo, codec, manifold)
    out = build_auto(codec, manifold, energies=report.energies)
    out.provenance["corrected_from"] = a_fo.provenance
    return out


def _directional_rows(codec, pts_embed: np.ndarray, dirs_embed: np.ndarray,
                      beta: float) -> np.ndarray:
    """Rows (S, N) of the surrogate derivative along embedded directions."""
    if isinstance(codec, CompositeCodec):
        return codec.directional_gradient(pts_embed, dirs_embed, beta)
    _, dphi = _smooth_dphi_batch(codec, pts_embed[:, 0], beta)
    return dphi * codec.neuron_freqs * dirs_embed[:, 0][:, None]


def build_hetero(codec, manifold: ManifoldSpec, fld, sign: SignVector, c: float,
                 auto: WeightMatrix | None = None, beta: float = DEFAULT_BETA,
                 energies: np.ndarray | None = None, calibrate: bool = True,
                 calib_steps: int = 40, max_gain: float = 16.0) -> WeightMatrix:
    """Heteroassociative integration term for one vector field.

    The term pairs the directional surrogate derivative (J v . grad) x
    with sign-bound centred codewords; masking the sign's negative
    neurons then drives the state along the field at speed c (in
    intrinsic coordinate units per step). With `calibrate` the raw term
    is rescaled against the realized noiseless speed on `auto`
    (see module docstring); pass calibrate=False for the raw integral.
    """
    n, L = _codec_props(codec)
    if not sign.block_constant:
        raise ValueError("sign vector must be block-constant")
    if isinstance(fld, str):
        fld = manifold.field_named(fld)
    v_int = fld(manifold.grid)
    if v_int.shape != manifold.grid.shape:
        raise ValueError("field dimension mismatch with manifold intrinsic dim")
    jac = np.asarray(manifold.jacobian(manifold.grid), dtype=float)
    dirs = np.einsum("skd,sd->sk", jac, v_int)
    wq = _quad_weights(manifold, energies)
    pts = np.asarray(manifold.embed(manifold.grid), dtype=float)
    idx = _indices(codec, pts)
    sv = sign.values.astype(np.float64)
    acc = np.zeros((n, n))
    for s in range(0, len(idx), _CHUNK):
        rows = _directional_rows(codec, pts[s:s + _CHUNK], dirs[s:s + _CHUNK], beta)
        xc = _dense(idx[s:s + _CHUNK], n, L) - 1.0 / L
        acc += rows.T @ (wq[s:s + _CHUNK, None] * (xc * sv))
    acc *= c
    _zero_within_block(acc, L)
    gain = 1.0
    if calibrate and c != 0.0:
        if auto is None:
            raise ValueError("speed calibration needs the autoassociative matrix (auto=...)")
        gain = _calibrate_gain(acc, auto, codec, manifold, fld, sign, c, calib_steps, max_gain)
        acc *= gain
    prov = {
        "kind": "hetero",
        "manifold": manifold.name,
        "field": fld.name,
        "codec_id": codec.codec_id,
        "block_len": L,
        "speed": c,
        "beta": beta,
        "gain": gain,
    }
    return WeightMatrix(acc.astype(np.float32), prov)


def _calibration_codebook(codec, manifold: ManifoldSpec, max_per_dim: int = 96) -> Codebook:
    pts = manifold.subgrid(max_per_dim)
    emb = np.asarray(manifold.embed(pts), dtype=float)
    return Codebook(pts if manifold.intrinsic_dim > 1 else pts[:, 0], _indices(codec, emb))


def _calibrate_gain(h_raw: np.ndarray, auto: WeightMatrix, codec, manifold: ManifoldSpec,
                    fld: VectorField, sign: SignVector, c: float, steps: int,
                    max_gain: float) -> float:
    n, L = _codec_props(codec)
    book = _calibration_codebook(codec, manifold)
    interior = manifold.interior_mask(0.25 * min(hi - lo for lo, hi in manifold.extent))
    if not interior.any():
        interior = np.ones(len(manifold.grid), dtype=bool)
    centre = manifold.grid.mean(axis=0)
    cand = manifold.grid[interior]
    p0 = cand[np.square(cand - centre).sum(axis=1).argmin()]
    z0 = _dense(_indices(codec, np.asarray(manifold.embed(p0[None, :]), dtype=float)), n, L)
    schedule = [MaskInterval(0, 10**9, sign.mask(+1))]
    gain = 1.0
    for _ in range(4):
        w = auto.values.astype(np.float64) + gain * h_raw
        res = simulate_trials(w, book, L, [p0], steps, 0.0, schedule,
                              seed=0, initial_states=z0, decode_stride=1)
        pos = res["positions"][0].reshape(steps + 1, -1)
        steps_used = slice(4, steps)
        dp = manifold.wrap_displacement(np.diff(pos, axis=0))[steps_used]
        v = fld(pos[steps_used])
        num = float(np.sum(dp * (c * v)))
        den = float(np.sum((c * v) ** 2))
        ratio = num / den if den > 0 else 0.0
        if ratio <= 0.05:
            gain = min(gain * 3.0, max_gain)
            continue
        gain = float(np.clip(gain / ratio, gain * 0.25, gain * 4.0))
        gain = min(gain, max_gain)
    return gain


def build_jump(codec_src, codec_dst, correspondence, sign: SignVector, gain: float,
               manifold_src: ManifoldSpec, manifold_dst: ManifoldSpec | None = None) -> WeightMatrix:
    """Transition term: destination codewords paired with masked source ones.

    `correspondence` maps source intrinsic coordinates to destination
    intrinsic coordinates (callable (S, D) -> (S, Dd), or None for the
    identity). With the jump mask applied, a state on the source
    manifold is driven to the corresponding destination state.
    """
    n, L = _codec_props(codec_src)
    nd, ld = _codec_props(codec_dst)
    if (n, L) != (nd, ld):
        raise ValueError("source and destination codecs differ in N or L")
    manifold_dst = manifold_dst or manifold_src
    src_pts = np.asarray(manifold_src.embed(manifold_src.grid), dtype=float)
    dst_coords = manifold_src.grid if correspondence is None else np.asarray(
        correspondence(manifold_src.grid), dtype=float)
    dst_pts = np.asarray(manifold_dst.embed(dst_coords), dtype=float)
    wq = _quad_weights(manifold_src)
    idx_s = _indices(codec_src, src_pts)
    idx_d = _indices(codec_dst, dst_pts)
    sv = sign.values.astype(np.float64)
    acc = np.zeros((n, n))
    for s in range(0, len(idx_s), _CHUNK):
        xd = _dense(idx_d[s:s + _CHUNK], n, L) - 1.0 / L
        xs = _dense(idx_s[s:s + _CHUNK], n, L) - 1.0 / L
        acc += xd.T @ (wq[s:s + _CHUNK, None] * (xs * sv))
    acc *= gain
    _zero_within_block(acc, L)
    prov = {
        "kind": "jump",
        "src_manifold": manifold_src.name,
        "dst_manifold": manifold_dst.name,
        "block_len": L,
        "gain": gain,
    }
    return WeightMatrix(acc.astype(np.float32), prov)


def superpose(terms) -> WeightMatrix:
    """Elementwise sum of weight terms; provenance concatenated."""
    terms = list(terms)
    if not terms:
        raise ValueError("nothing to superpose")
    n = terms[0].values.shape
    acc = np.zeros(n)
    for t in terms:
        if t.values.shape != n:
            raise ValueError("weight term shape mismatch")
        acc += t.values.astype(np.float64)
    prov = {"kind": "superpose", "terms": [t.provenance for t in terms]}
    lens = {t.provenance.get("block_len") for t in terms} - {None}
    if len(lens) == 1:
        prov["block_len"] = lens.pop()
    return WeightMatrix(acc.astype(np.float32), prov)


def add_weight_noise(weights: WeightMatrix, seed: int) -> WeightMatrix:
    """Quenched Gaussian noise at the matrix's own RMS magnitude.

    chi_ij ~ N(0, 1) scaled by the RMS of the existing values; the
    structural within-block zeros stay zero (those synapses don't
    exist, so they carry no heterogeneity).
    """
    w = weights.values
    rms = float(np.sqrt(np.mean(w.astype(np.float64) ** 2)))
    rng = substream(seed, "weight-noise")
    noise = rng.standard_normal(w.shape).astype(np.float32) * rms
    block_len = weights.provenance.get("block_len")
    if block_len:
        _zero_within_block(noise, block_len)
    out = (w + noise).astype(np.float32)
    prov = {"kind": "noisy", "w_rms": rms, "noise_seed": seed,
            "block_len": block_len, "base": weights.provenance}
    return WeightMatrix(out, prov)


def binarize(weights: WeightMatrix, alpha: float, seed: int) -> WeightMatrix:
    """Stochastic binarization: P(w -> 1) = logistic(alpha (w - <w>)/sigma_w)."""
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    w = weights.values.astype(np.float64)
    mu, sigma = float(w.mean()), float(w.std())
    if sigma == 0:
        raise ValueError("cannot binarize a constant matrix (sigma_w = 0)")
    rng = substream(seed, "binarize")
    prob = 1.0 / (1.0 + np.exp(-alpha * (w - mu) / sigma))
    out = (rng.random(w.shape) < prob).astype(np.float32)
    block_len = weights.provenance.get("block_len")
    if block_len:
        _zero_within_block(out, block_len)
    prov = {"kind": "binarized", "alpha": alpha, "seed": seed, "block_len": block_len,
            "mean": mu, "sigma": sigma, "base": weights.provenance}
    return WeightMatrix(out, prov)
