"""Sparse block-code position embeddings.

A codec maps a real position p to an N-bit binary word organized in
N/L blocks of length L, with exactly one active neuron per block:

    x_i(p) = 1[ mod_L(omega_i * p + theta_i) < 1 ]

Neurons in a block share a frequency omega_m drawn from P(omega) but
carry different offsets. Two offset layouts are supported:

* "permutation": theta_{m,n} = perm_m[n] + theta_m with theta_m ~ U[0,1)
  and perm_m a random permutation of 0..L-1. The generic layout.
* "ordered": theta_{m,n} = theta_m - n with theta_m ~ U[0,L). With this
  layout block-wise circular convolution of codewords adds the encoded
  positions (see lcc_bind).

Smooth surrogate codewords (for the derivative terms entering
heteroassociative weights) replace the crisp window with a product of
two logistic flanks around the window, evaluated in a phase frame
shifted so the window sits mid-interval and the gradient never wraps.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from .kernels import FreqDist, KernelModel
from .rng import substream

__all__ = [
    "BlockCodec",
    "CompositeCodec",
    "SparseBlockVector",
    "sample_codec",
    "encode",
    "encode_batch",
    "encode_smooth",
    "encode_gradient",
    "lcc_bind",
    "lcc_inverse",
    "encode_nd",
    "empirical_kernel",
    "KernelTable",
    "DEFAULT_BETA",
]

DEFAULT_BETA = 5.0


@dataclass(frozen=True)
class BlockCodec:
    """Sampled randomness defining one scalar embedding."""

    n_neurons: int
    block_len: int
    block_freqs: np.ndarray          # (M,) shared frequency per block, 1/m
    offsets: np.ndarray              # (N,) per-neuron offsets in [0, L)
    offset_mode: str                 # "permutation" | "ordered"
    seed: int
    freq_dist: FreqDist | None = None
    # caches derived from offsets (set in __post_init__)
    _block_theta: np.ndarray = field(default=None, repr=False, compare=False)
    _perm_inv: np.ndarray = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        n, L = self.n_neurons, self.block_len
        if L < 1 or n < 1 or n % L != 0:
            raise ValueError(f"block_len {L} must divide n_neurons {n}")
        m = n // L
        if self.block_freqs.shape != (m,) or self.offsets.shape != (n,):
            raise ValueError("codec arrays have wrong shape")
        if self.offset_mode not in ("permutation", "ordered"):
            raise ValueError(f"unknown offset_mode {self.offset_mode!r}")
        off = self.offsets.reshape(m, L)
        if self.offset_mode == "permutation":
            perm = np.floor(off).astype(np.int64)
            theta = off - perm
            if np.any(np.sort(perm, axis=1) != np.arange(L)):
                raise ValueError("permutation-mode offsets must embed a 0..L-1 permutation per block")
            if L > 1 and np.ptp(theta, axis=1).max() > 1e-9:
                raise ValueError("permutation-mode offsets must share one fractional part per block")
            inv = np.empty_like(perm)
            np.put_along_axis(inv, perm, np.arange(L)[None, :].repeat(m, 0), axis=1)
            object.__setattr__(self, "_block_theta", np.ascontiguousarray(theta[:, 0]))
            object.__setattr__(self, "_perm_inv", inv)
        else:
            # offsets stored mod L; theta_m is the n=0 entry
            theta = off[:, 0]
            expect = np.mod(theta[:, None] - np.arange(L)[None, :], L)
            if np.max(np.abs(expect - off)) > 1e-9:
                raise ValueError("ordered-mode offsets must satisfy theta_{m,n} = theta_m - n (mod L)")
            object.__setattr__(self, "_block_theta", np.ascontiguousarray(theta))
            object.__setattr__(self, "_perm_inv", None)

    @property
    def n_blocks(self) -> int:
        return self.n_neurons // self.block_len

    @property
    def neuron_freqs(self) -> np.ndarray:
        return np.repeat(self.block_freqs, self.block_len)

    @property
    def codec_id(self) -> str:
        h = hashlib.sha256()
        h.update(f"{self.n_neurons},{self.block_len},{self.offset_mode},{self.seed};".encode())
        h.update(self.block_freqs.tobytes())
        h.update(self.offsets.tobytes())
        return h.hexdigest()[:16]

    @property
    def omega_ma(self) -> float:
        if self.freq_dist is not None:
            return self.freq_dist.omega_ma
        return float(np.mean(np.abs(self.block_freqs)))

    def kernel_model(self, n_terms: int = 100) -> KernelModel:
        if self.freq_dist is None:
            raise ValueError("codec carries no frequency distribution")
        return KernelModel(self.block_len, self.freq_dist, n_terms)

    def active_indices(self, ps) -> np.ndarray:
        """Active index per block for one position or an array: (..., M)."""
        ps = np.asarray(ps, dtype=float)
        L = self.block_len
        u = np.mod(np.multiply.outer(ps, self.block_freqs) + self._block_theta, L)
        k = np.floor(u).astype(np.int64)
        if self.offset_mode == "ordered":
            return np.minimum(k, L - 1)
        slot = (L - k) % L
        return self._perm_inv[np.arange(self.n_blocks), slot]

    def phases(self, p, shift: bool = True) -> np.ndarray:
        """Per-neuron phase mod_L(omega_i p + theta_i [+ (L-1)/2])."""
        half = (self.block_len - 1) / 2.0 if shift else 0.0
        return np.mod(self.neuron_freqs * float(p) + self.offsets + half, self.block_len)


@dataclass(frozen=True)
class SparseBlockVector:
    """One-hot-per-block codeword in active-index form."""

    active: np.ndarray               # (M,) ints in [0, L)
    codec: BlockCodec

    def __post_init__(self):
        L = self.codec.block_len
        if self.active.shape != (self.codec.n_blocks,):
            raise ValueError("active-index array has wrong shape")
        if self.active.min(initial=0) < 0 or self.active.max(initial=0) >= L:
            raise ValueError("active indices out of range")

    def dense(self, dtype=np.float64) -> np.ndarray:
        out = np.zeros(self.codec.n_neurons, dtype=dtype)
        out[np.arange(self.codec.n_blocks) * self.codec.block_len + self.active] = 1
        return out

    def centred(self, dtype=np.float64) -> np.ndarray:
        """Dense expansion minus the mean activity 1/L."""
        return self.dense(dtype) - dtype(1.0) / self.codec.block_len

    def dot(self, other: "SparseBlockVector") -> int:
        _check_compatible(self.codec, other.codec)
        return int(np.count_nonzero(self.active == other.active))

    def similarity(self, other: "SparseBlockVector") -> float:
        """Normalized inner product L/N * <x, y>, in [0, 1]."""
        return self.dot(other) / self.codec.n_blocks


def _check_compatible(a: BlockCodec, b: BlockCodec):
    if a.n_neurons != b.n_neurons or a.block_len != b.block_len:
        raise ValueError("codecs differ in N or L")


def sample_codec(n_neurons: int, block_len: int, freq_dist: FreqDist,
                 offset_mode: str = "permutation", seed: int = 0) -> BlockCodec:
    """Draw a fresh embedding. Deterministic for fixed arguments."""
    if block_len < 1:
        raise ValueError("block_len must be >= 1")
    if n_neurons % block_len != 0:
        raise ValueError(f"block_len {block_len} does not divide n_neurons {n_neurons}")
    m, L = n_neurons // block_len, block_len
    rng = substream(seed, "codec")
    freqs = freq_dist.sample(rng, m)
    if offset_mode == "permutation":
        theta = rng.random(m)
        perms = rng.permuted(np.tile(np.arange(L), (m, 1)), axis=1)
        offsets = (perms + theta[:, None]).reshape(-1)
    elif offset_mode == "ordered":
        theta = rng.uniform(0.0, L, m)
        offsets = np.mod(theta[:, None] - np.arange(L)[None, :], L).reshape(-1)
    else:
        raise ValueError(f"unknown offset_mode {offset_mode!r}")
    return BlockCodec(n_neurons, L, freqs, offsets, offset_mode, seed, freq_dist)


def encode(codec: BlockCodec, p: float) -> SparseBlockVector:
    """Crisp codeword of a scalar position."""
    return SparseBlockVector(codec.active_indices(float(p)), codec)


def encode_batch(codec: BlockCodec, ps) -> np.ndarray:
    """Active indices for an array of positions: (len(ps), M)."""
    return codec.active_indices(np.asarray(ps, dtype=float))


def _logistic(u, beta):
    return 1.0 / (1.0 + np.exp(np.clip(-beta * u, -500.0, 500.0)))


def encode_smooth(codec: BlockCodec, p: float, beta: float = DEFAULT_BETA) -> np.ndarray:
    """Smooth surrogate codeword, each component in (0, 1).

    The acceptance window of a neuron, in the shifted phase frame, is
    [(L-1)/2, (L+1)/2); the surrogate is the logistic window
    S(phi - (L-1)/2) * S((L+1)/2 - phi), which converges to the crisp
    indicator pointwise (away from the window edges) as beta grows.
    """
    if beta <= 0:
        raise ValueError("beta must be positive")
    L = codec.block_len
    phi = codec.phases(p)
    return _logistic(phi - (L - 1) / 2.0, beta) * _logistic((L + 1) / 2.0 - phi, beta)


def _smooth_dphi(codec: BlockCodec, p: float, beta: float):
    """(value, d value/d phi) of the surrogate at one position."""
    L = codec.block_len
    phi = codec.phases(p)
    lo = _logistic(phi - (L - 1) / 2.0, beta)
    hi = _logistic((L + 1) / 2.0 - phi, beta)
    dlo = beta * lo * (1.0 - lo)
    dhi = -beta * hi * (1.0 - hi)
    return lo * hi, dlo * hi + lo * dhi


def _smooth_dphi_batch(codec: BlockCodec, ps: np.ndarray, beta: float):
    """Vectorized surrogate (value, d/dphi) for an array of positions: (P, N)."""
    L = codec.block_len
    half = (L - 1) / 2.0
    phi = np.mod(np.multiply.outer(ps, codec.neuron_freqs) + codec.offsets + half, L)
    lo = _logistic(phi - half, beta)
    hi = _logistic(half + 1.0 - phi, beta)
    dlo = beta * lo * (1.0 - lo)
    dhi = -beta * hi * (1.0 - hi)
    return lo * hi, dlo * hi + lo * dhi


def encode_smooth_batch(codec: BlockCodec, ps, beta: float = DEFAULT_BETA) -> np.ndarray:
    """Smooth surrogate codewords for an array of positions: (P, N)."""
    val, _ = _smooth_dphi_batch(codec, np.asarray(ps, dtype=float), beta)
    return val


def encode_gradient(codec, p, beta: float = DEFAULT_BETA) -> np.ndarray:
    """Analytic derivative of the smooth surrogate: (N, D).

    For a scalar codec D = 1. For a CompositeCodec the derivative goes
    through the binding sum: the column for coordinate d binds the
    factor-d surrogate gradient with the other factors' surrogates.
    """
    if beta <= 0:
        raise ValueError("beta must be positive")
    if isinstance(codec, CompositeCodec):
        return codec.gradient(np.asarray(p, dtype=float), beta)
    _, dphi = _smooth_dphi(codec, float(p), beta)
    return (dphi * codec.neuron_freqs)[:, None]


def lcc_bind(a, b, block_len: int | None = None):
    """Block-wise local circular convolution.

    Accepts a pair of SparseBlockVector (active-index arithmetic mod L)
    or a pair of equally-shaped real arrays whose last axis is N, in
    which case `block_len` is required (per-block FFT convolution).
    """
    if isinstance(a, SparseBlockVector) and isinstance(b, SparseBlockVector):
        _check_compatible(a.codec, b.codec)
        return SparseBlockVector(np.mod(a.active + b.active, a.codec.block_len), a.codec)
    if isinstance(a, SparseBlockVector) or isinstance(b, SparseBlockVector):
        raise ValueError("cannot bind a SparseBlockVector with a raw array")
    if block_len is None:
        raise ValueError("dense LCC binding needs block_len")
    return _lcc_bind_dense(np.asarray(a, float), np.asarray(b, float), block_len)


def _lcc_bind_dense(a: np.ndarray, b: np.ndarray, block_len: int) -> np.ndarray:
    if a.shape != b.shape:
        raise ValueError("operands have different shapes")
    if a.shape[-1] % block_len != 0:
        raise ValueError("vector length is not a multiple of block_len")
    shape = a.shape
    ab = a.reshape(-1, shape[-1] // block_len, block_len)
    bb = b.reshape(-1, shape[-1] // block_len, block_len)
    fa = np.fft.rfft(ab, axis=-1)
    fb = np.fft.rfft(bb, axis=-1)
    return np.fft.irfft(fa * fb, n=block_len, axis=-1).reshape(shape)


def lcc_inverse(a, block_len: int | None = None):
    """Inverse element under LCC binding: active index n -> (L - n) mod L.

    Defined for one-hot blocks only; a dense binary array with exactly
    one 1 per block is accepted alongside SparseBlockVector.
    """
    if isinstance(a, SparseBlockVector):
        L = a.codec.block_len
        return SparseBlockVector((L - a.active) % L, a.codec)
    arr = np.asarray(a)
    if block_len is None:
        raise ValueError("dense LCC inverse needs block_len")
    blocks = arr.reshape(-1, block_len)
    onehot = (blocks == 1).sum(axis=1) == 1
    if not (onehot.all() and np.isin(blocks, (0, 1)).all()):
        raise ValueError("LCC inverse is only defined for one-hot blocks")
    idx = blocks.argmax(axis=1)
    out = np.zeros_like(blocks)
    out[np.arange(len(blocks)), (block_len - idx) % block_len] = 1
    return out.reshape(arr.shape)


def encode_nd(codecs, p) -> SparseBlockVector:
    """LCC-fold of per-dimension encodings of a D-vector position."""
    p = np.atleast_1d(np.asarray(p, dtype=float))
    if len(codecs) != p.size:
        raise ValueError(f"{len(codecs)} codecs for a {p.size}-dimensional position")
    first = codecs[0]
    for c in codecs[1:]:
        _check_compatible(first, c)
    out = encode(first, p[0])
    for c, pd in zip(codecs[1:], p[1:]):
        out = lcc_bind(out, encode(c, pd))
    return out


class CompositeCodec:
    """D scalar codecs bound by LCC into one D-dimensional embedding."""

    def __init__(self, factors):
        factors = list(factors)
        if not factors:
            raise ValueError("need at least one factor codec")
        for c in factors[1:]:
            _check_compatible(factors[0], c)
        self.factors = factors

    @property
    def dim(self) -> int:
        return len(self.factors)

    @property
    def n_neurons(self) -> int:
        return self.factors[0].n_neurons

    @property
    def block_len(self) -> int:
        return self.factors[0].block_len

    @property
    def n_blocks(self) -> int:
        return self.factors[0].n_blocks

    @property
    def omega_ma(self) -> float:
        return self.factors[0].omega_ma

    @property
    def codec_id(self) -> str:
        h = hashlib.sha256("|".join(f.codec_id for f in self.factors).encode())
        return h.hexdigest()[:16]

    def encode(self, p) -> SparseBlockVector:
        return encode_nd(self.factors, p)

    def active_indices(self, ps) -> np.ndarray:
        """(..., M) bound active indices for an array of D-vectors."""
        ps = np.asarray(ps, dtype=float)
        if ps.shape[-1] != self.dim:
            raise ValueError("position dimensionality mismatch")
        acc = self.factors[0].active_indices(ps[..., 0])
        for d in range(1, self.dim):
            acc = acc + self.factors[d].active_indices(ps[..., d])
        return np.mod(acc, self.block_len)

    def smooth(self, p, beta: float = DEFAULT_BETA) -> np.ndarray:
        p = np.atleast_1d(np.asarray(p, dtype=float))
        out = encode_smooth(self.factors[0], p[0], beta)
        for c, pd in zip(self.factors[1:], p[1:]):
            out = _lcc_bind_dense(out, encode_smooth(c, pd, beta), self.block_len)
        return out

    def gradient(self, p, beta: float = DEFAULT_BETA) -> np.ndarray:
        """(N, D) surrogate gradient through the binding sum."""
        p = np.atleast_1d(np.asarray(p, dtype=float))
        vals, grads = [], []
        for c, pd in zip(self.factors, p):
            v, dphi = _smooth_dphi(c, float(pd), beta)
            vals.append(v)
            grads.append(dphi * c.neuron_freqs)
        cols = []
        for d in range(self.dim):
            col = grads[d]
            for k in range(self.dim):
                if k != d:
                    col = _lcc_bind_dense(col, vals[k], self.block_len)
            cols.append(col)
        return np.stack(cols, axis=1)

    def smooth_batch(self, ps, beta: float = DEFAULT_BETA) -> np.ndarray:
        """(P, N) surrogate codewords for an array of D-vector positions."""
        ps = np.atleast_2d(np.asarray(ps, dtype=float))
        out = encode_smooth_batch(self.factors[0], ps[:, 0], beta)
        for d in range(1, self.dim):
            out = _lcc_bind_dense(out, encode_smooth_batch(self.factors[d], ps[:, d], beta), self.block_len)
        return out

    def directional_gradient(self, ps, dirs, beta: float = DEFAULT_BETA) -> np.ndarray:
        """(P, N) derivative of the surrogate along per-point directions.

        dirs has shape (P, D): row p weights the partial derivatives of
        the bound surrogate at position ps[p].
        """
        ps = np.atleast_2d(np.asarray(ps, dtype=float))
        dirs = np.atleast_2d(np.asarray(dirs, dtype=float))
        if dirs.shape != ps.shape:
            raise ValueError("dirs must have one D-vector per position")
        vals, grads = [], []
        for d, c in enumerate(self.factors):
            v, dphi = _smooth_dphi_batch(c, ps[:, d], beta)
            vals.append(v)
            grads.append(dphi * c.neuron_freqs)
        out = None
        for d in range(self.dim):
            col = grads[d] * dirs[:, d][:, None]
            for k in range(self.dim):
                if k != d:
                    col = _lcc_bind_dense(col, vals[k], self.block_len)
            out = col if out is None else out + col
        return out


@dataclass
class KernelTable:
    """Empirical kernel estimate on a displacement grid."""

    dp: np.ndarray
    mean: np.ndarray
    stderr: np.ndarray
    theory: np.ndarray | None = None

    def rows(self):
        th = self.theory if self.theory is not None else np.full_like(self.dp, np.nan)
        return zip(self.dp, self.mean, self.stderr, th)


def empirical_kernel(codec: BlockCodec, dp_grid, n_probe_positions: int, seed: int,
                     probe_range: tuple[float, float] = (0.0, 10.0),
                     model: KernelModel | None = None) -> KernelTable:
    """Monte Carlo estimate of the similarity kernel.

    Averages the normalized inner product between codewords of probe
    positions p and p + dp over uniformly drawn probes. Unbiased for any
    fixed codec; the residual deviation from the theoretical kernel is
    the frozen-realization noise of that codec's frequency draw.
    """
    dp_grid = np.asarray(dp_grid, dtype=float)
    if dp_grid.size == 0:
        raise ValueError("empty displacement grid")
    rng = substream(seed, "empirical-kernel")
    probes = rng.uniform(probe_range[0], probe_range[1], n_probe_positions)
    base = codec.active_indices(probes)
    mean = np.empty_like(dp_grid)
    stderr = np.empty_like(dp_grid)
    for j, dp in enumerate(dp_grid):
        sims = (codec.active_indices(probes + dp) == base).mean(axis=1)
        mean[j] = sims.mean()
        stderr[j] = sims.std(ddof=1) / np.sqrt(n_probe_positions) if n_probe_positions > 1 else 0.0
    theory = model.evaluate(dp_grid) if model is not None else None
    return KernelTable(dp_grid, mean, stderr, theory)
