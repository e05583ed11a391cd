"""Discrete-time block-WTA network dynamics.

The update rule is z_{t+1} = bWTA[W (z_t AND i_t)]: postsynaptic sums
are computed from the masked state, then exactly one neuron per block
(the one with the largest sum; ties go to the lowest index) becomes
active. Stochastic bit errors are applied after the update: with
probability b per neuron, its bit is overwritten by a fair coin.

Trials are strictly sequential; independent trials run batched with
per-trial random streams derived from (seed, trial index), so results
are identical whether trials run one at a time or together.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .rng import substream

_GEMM_ROWS = 32   # fixed matmul row-block width (see simulate_trials)

__all__ = [
    "NetworkState",
    "InputMask",
    "Codebook",
    "MaskInterval",
    "TrialConfig",
    "Trajectory",
    "bwta",
    "step",
    "energy",
    "decode",
    "run",
    "simulate_trials",
]


@dataclass
class NetworkState:
    bits: np.ndarray                 # (N,) bool
    step: int = 0

    @property
    def n_neurons(self) -> int:
        return self.bits.size


@dataclass(frozen=True)
class InputMask:
    """1 = permitted, 0 = inhibited. All-ones leaves the update input-free."""

    bits: np.ndarray

    @classmethod
    def all_ones(cls, n: int) -> "InputMask":
        return cls(np.ones(n, dtype=bool))

    @classmethod
    def from_sign(cls, sign_values: np.ndarray, polarity: int = +1,
                  fraction: float = 1.0, rng: np.random.Generator | None = None) -> "InputMask":
        """Inhibit the neurons whose sign equals -polarity.

        fraction < 1 inhibits only a random subset of that group
        (slower integration); requires an rng to pick the subset.
        """
        inhibit = np.asarray(sign_values) == -polarity
        if fraction < 1.0:
            idx = np.flatnonzero(inhibit)
            if rng is None:
                raise ValueError("fraction < 1 needs an rng to draw the masked subset")
            keep_out = rng.choice(idx, int(round(fraction * idx.size)), replace=False)
            inhibit = np.zeros_like(inhibit)
            inhibit[keep_out] = True
        return cls(~inhibit)


@dataclass
class MaskInterval:
    """Apply `mask` on steps start <= t < stop (0-based update index)."""

    start: int
    stop: int
    mask: InputMask


@dataclass
class Codebook:
    """Sampled positions and their codewords, in position order."""

    positions: np.ndarray            # (G,) or (G, D)
    indices: np.ndarray              # (G, M) active index per block

    @classmethod
    def from_codec(cls, codec, positions) -> "Codebook":
        positions = np.asarray(positions, dtype=float)
        return cls(positions, codec.active_indices(positions))

    def __len__(self) -> int:
        return len(self.indices)


@dataclass
class TrialConfig:
    weights: object                  # WeightMatrix or (N, N) ndarray
    codebook: Codebook
    block_len: int
    p0: object                       # scalar or D-vector initial position
    steps: int
    bit_error_rate: float = 0.0
    mask_schedule: list = field(default_factory=list)
    seed: int = 0
    trial_index: int = 0
    codec: object = None             # exact-encode p0 when given, else snap to codebook
    record_energy: object = None     # optional symmetric matrix for energy logging
    omega_ma: float = 1.0            # energy scale parameter
    decode_stride: int = 1

    def __post_init__(self):
        if not (0.0 <= self.bit_error_rate <= 1.0):
            raise ValueError("bit error rate must be in [0, 1]")


@dataclass
class Trajectory:
    steps: np.ndarray                # recorded step numbers
    positions: np.ndarray            # decoded position per recorded step
    similarity: np.ndarray           # best-match similarity, in [0, 1]
    energy: np.ndarray | None = None
    states: np.ndarray | None = None


def _values(weights) -> np.ndarray:
    return weights.values if hasattr(weights, "values") else np.asarray(weights)


def bwta(u: np.ndarray, block_len: int) -> np.ndarray:
    """Per-block winner-take-all: one-hot argmax, ties to lowest index.

    u may be (N,) or batched (T, N); output matches, dtype float32.
    """
    squeeze = u.ndim == 1
    u2 = np.atleast_2d(u)
    t, n = u2.shape
    winners = u2.reshape(t, n // block_len, block_len).argmax(axis=2)
    z = np.zeros((t, n // block_len, block_len), dtype=np.float32)
    np.put_along_axis(z, winners[:, :, None], 1.0, axis=2)
    z = z.reshape(t, n)
    return z[0] if squeeze else z


def step(weights, z: np.ndarray, mask: InputMask | np.ndarray | None,
         bit_error_rate: float, rng: np.random.Generator, block_len: int) -> np.ndarray:
    """One synchronous update of a single state vector."""
    w = _values(weights)
    m = mask.bits if isinstance(mask, InputMask) else mask
    zin = z.astype(np.float32) if z.dtype != np.float32 else z
    if m is not None:
        zin = zin * m
    z_new = bwta(w @ zin, block_len)
    if bit_error_rate > 0.0:
        flips = rng.random(z_new.size) < bit_error_rate
        coins = rng.random(z_new.size) < 0.5
        z_new[flips] = coins[flips].astype(np.float32)
    return z_new


def energy(a, z: np.ndarray, n_neurons: int, block_len: int, omega_ma: float,
           require_symmetric: bool = False) -> float:
    """Scaled energy E(z) = -(L^2 omega_ma / N) z^T A z."""
    w = _values(a)
    if require_symmetric:
        if not np.allclose(w, w.T, rtol=1e-5, atol=1e-6 * max(1e-30, np.abs(w).max())):
            raise ValueError("energy with lyapunov check requires a symmetric matrix")
    zf = z.astype(np.float64)
    return float(-(block_len**2 * omega_ma / n_neurons) * (zf @ w @ zf))


def _codebook_similarities(z: np.ndarray, codebook: Codebook, block_len: int) -> np.ndarray:
    """Normalized inner products L/N * z . x(g) for every codebook entry.

    Works for arbitrary binary states (block sparsity may be broken by
    noise): gathers each codeword's active bit out of z per block.
    """
    blocks = z.reshape(-1, block_len)
    m = blocks.shape[0]
    return blocks[np.arange(m)[None, :], codebook.indices].mean(axis=1)


def decode(z: np.ndarray, codebook: Codebook, block_len: int):
    """Best-matching codebook entry: (position, similarity). Ties -> lowest."""
    if len(codebook) == 0:
        raise ValueError("empty codebook")
    sims = _codebook_similarities(z, codebook, block_len)
    best = int(sims.argmax())
    return codebook.positions[best], float(sims[best])


def _mask_for_step(schedule, t: int, n: int) -> np.ndarray | None:
    out = None
    for itv in schedule:
        if itv.start <= t < itv.stop:
            m = itv.mask.bits
            out = m if out is None else (out & m)
    return out


def run(trial: TrialConfig) -> Trajectory:
    """Run one trial; deterministic for fixed (config, seed, trial_index)."""
    res = simulate_trials(
        trial.weights, trial.codebook, trial.block_len,
        [trial.p0], trial.steps, trial.bit_error_rate, trial.mask_schedule,
        seed=trial.seed, trial_indices=[trial.trial_index], codec=trial.codec,
        record_energy=trial.record_energy, omega_ma=trial.omega_ma,
        decode_stride=trial.decode_stride,
    )
    return Trajectory(
        steps=res["steps"],
        positions=res["positions"][0],
        similarity=res["similarity"][0],
        energy=None if res["energy"] is None else res["energy"][0],
    )


def simulate_trials(weights, codebook: Codebook, block_len: int, p0s, steps: int,
                    bit_error_rate: float, mask_schedule, seed: int,
                    trial_indices=None, codec=None, embed=None, record_energy=None,
                    omega_ma: float = 1.0, decode_stride: int = 1,
                    initial_states: np.ndarray | None = None):
    """Batched trial runner; the single-trial semantics, vectorized.

    Initial states are the exact codewords x(p0) when a codec is given
    (p0 mapped through `embed` first, for manifold coordinates);
    otherwise p0s snap to the nearest codebook entry. initial_states
    ((T, N) one-hot) overrides both. Returns dict with steps, positions
    (T, K, ...), similarity (T, K), energy (T, K) or None, final_states.
    """
    w = np.ascontiguousarray(_values(weights).T, dtype=np.float32)  # u = z @ W^T
    n = w.shape[0]
    m_blocks = n // block_len
    p0s = np.asarray(p0s, dtype=float)
    t_count = len(p0s) if initial_states is None else len(initial_states)
    if trial_indices is None:
        trial_indices = np.arange(t_count)
    rngs = [substream(seed, "trial", int(ti)) for ti in trial_indices]
    # matmuls run on fixed-width row blocks so every trial's postsynaptic
    # sums are bitwise identical no matter how trials are batched
    # (GEMM blocking, and hence float rounding, depends on the shape)
    pad = -t_count % _GEMM_ROWS

    if initial_states is not None:
        z = initial_states.astype(np.float32).copy()
    else:
        z = np.zeros((t_count, n), dtype=np.float32)
        if codec is not None:
            pts = p0s if p0s.ndim > 1 else p0s.reshape(-1)
            if embed is not None:
                pts = np.asarray(embed(np.atleast_2d(p0s)), dtype=float)
            idx0 = codec.active_indices(pts)
            for t in range(t_count):
                z[t, np.arange(m_blocks) * block_len + idx0[t]] = 1.0
        else:
            pos2d = p0s.reshape(t_count, -1)
            cpos = codebook.positions.reshape(len(codebook), -1)
            for t in range(t_count):
                g = int(np.square(cpos - pos2d[t]).sum(axis=1).argmin())
                z[t, np.arange(m_blocks) * block_len + codebook.indices[g]] = 1.0

    rec_steps = list(range(0, steps + 1, decode_stride))
    if rec_steps[-1] != steps:
        rec_steps.append(steps)
    rec_set = {s: k for k, s in enumerate(rec_steps)}
    pos_shape = codebook.positions.shape[1:] if codebook.positions.ndim > 1 else ()
    positions = np.zeros((t_count, len(rec_steps)) + pos_shape)
    similarity = np.zeros((t_count, len(rec_steps)))
    energies = np.zeros((t_count, len(rec_steps))) if record_energy is not None else None
    e_mat = None if record_energy is None else _values(record_energy).astype(np.float64)

    def record(t_step, zz):
        k = rec_set.get(t_step)
        if k is None:
            return
        for t in range(t_count):
            sims = _codebook_similarities(zz[t], codebook, block_len)
            g = int(sims.argmax())
            positions[t, k] = codebook.positions[g]
            similarity[t, k] = sims[g]
        if energies is not None:
            zz64 = zz.astype(np.float64)
            energies[:, k] = -(block_len**2 * omega_ma / n) * np.einsum(
                "ti,ti->t", zz64 @ e_mat, zz64)

    record(0, z)
    z = np.vstack([z, np.zeros((pad, n), dtype=np.float32)]) if pad else z
    u = np.empty_like(z)
    for t_step in range(steps):
        mask = _mask_for_step(mask_schedule, t_step, n)
        zin = z if mask is None else z * mask
        for r0 in range(0, len(z), _GEMM_ROWS):
            u[r0:r0 + _GEMM_ROWS] = zin[r0:r0 + _GEMM_ROWS] @ w
        z = bwta(u, block_len)
        if bit_error_rate > 0.0:
            for t in range(t_count):
                flips = rngs[t].random(n) < bit_error_rate
                coins = rngs[t].random(n) < 0.5
                z[t, flips] = coins[flips].astype(np.float32)
        record(t_step + 1, z[:t_count])
    z = z[:t_count]

    return {
        "steps": np.array(rec_steps),
        "positions": positions,
        "similarity": similarity,
        "energy": energies,
        "final_states": z,
    }
