"""Classical bump-attractor rate models used for comparison.

Both models integrate tau du/dt = -u + W f(u) with Euler steps on a
ring of N discretised positions. The Zhang model uses a pseudo-sigmoid
rate function and weights obtained by regularised deconvolution so that
a bump of predetermined shape is a fixed point; the Kilpatrick &
Ermentrout model uses a Heaviside rate function and cosine ring weights
with optional periodic heterogeneity that pins the bump to n discrete
angles.

Stochastic degradation follows the clamp protocol: at the start of each
cycle every neuron is, with probability b, clamped to the current
population-maximum or -minimum current (fair coin) for 2*tau seconds,
then all currents evolve freely for another 2*tau seconds. With
tau = 0.25 ms one full cycle is 1 ms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .rng import substream

__all__ = [
    "LegacyParams",
    "RateModelState",
    "zhang_params",
    "kilpatrick_params",
    "zhang_activation",
    "zhang_activation_inverse",
    "zhang_ideal_rates",
    "zhang_weights",
    "kilpatrick_weights",
    "rate_step",
    "circular_decode",
    "simulate_rate_trials",
]


@dataclass(frozen=True)
class LegacyParams:
    model: str                        # "zhang" | "kilpatrick"
    n_neurons: int = 4096
    tau: float = 0.25e-3              # s
    dt: float = 0.05e-3               # s
    # Zhang activation + ideal-rate parameters
    lambda0: float = 1e-3
    rate_base: float = 1.0            # Hz, ideal-rate baseline
    rate_max: float = 40.0            # Hz, ideal-rate peak above baseline
    rate_conc: float = 8.0            # ideal-rate concentration
    act_beta: float = 0.8
    act_a: float = 6.34
    act_b: float = 10.0
    act_c: float = 0.5
    w_scale: float = 1.2
    # Kilpatrick parameters
    sigma_kp: float = 0.2
    theta_kp: float = 0.5
    het_freq: int = 8

    def __post_init__(self):
        if self.dt > 0.2 * self.tau + 1e-12:
            raise ValueError("Euler step must satisfy dt <= 0.2 tau")


def zhang_params(n_neurons: int = 4096, **kw) -> LegacyParams:
    return LegacyParams("zhang", n_neurons=n_neurons, **kw)


def kilpatrick_params(n_neurons: int = 4096, het_freq: int = 8, **kw) -> LegacyParams:
    return LegacyParams("kilpatrick", n_neurons=n_neurons, het_freq=het_freq, **kw)


@dataclass
class RateModelState:
    u: np.ndarray                     # synaptic currents
    t: float = 0.0                    # seconds
    clamp_mask: np.ndarray | None = None
    clamp_values: np.ndarray | None = None
    clamp_until: float = 0.0


# -- Zhang model --------------------------------------------------------

def zhang_activation(u, p: LegacyParams):
    """Pseudo-sigmoid rate function a * ln(1 + exp(b (u + c)))^beta."""
    return p.act_a * np.power(np.log1p(np.exp(p.act_b * (np.asarray(u) + p.act_c))), p.act_beta)


def zhang_activation_inverse(f, p: LegacyParams):
    """Current producing rate f (f > 0)."""
    inner = np.expm1(np.power(np.asarray(f) / p.act_a, 1.0 / p.act_beta))
    return np.log(inner) / p.act_b - p.act_c


def zhang_ideal_rates(p: LegacyParams, centre: float = 0.0) -> np.ndarray:
    """Target bump: baseline plus an exponential-of-cosine hump (Hz)."""
    th = 2 * math.pi * np.arange(p.n_neurons) / p.n_neurons
    return p.rate_base + p.rate_max * np.exp(p.rate_conc * (np.cos(th - centre) - 1.0))


def zhang_weights(p: LegacyParams) -> np.ndarray:
    """Circulant weights supporting the ideal bump as a fixed point.

    Solves W f_des = u_des in the Fourier domain with Tikhonov
    regulariser lambda0 on the mean-normalised coefficients (so the
    published lambda0 = 1e-3 is small against the bump's Fourier
    power), then applies the w_scale boost.
    """
    f_des = zhang_ideal_rates(p)
    u_des = zhang_activation_inverse(f_des, p)
    fh = np.fft.rfft(f_des) / p.n_neurons
    uh = np.fft.rfft(u_des) / p.n_neurons
    power = np.abs(fh) ** 2
    if power.max() == 0:
        raise ValueError("degenerate ideal rate profile")
    wh = uh * np.conj(fh) / (power + p.lambda0)
    kernel = np.fft.irfft(wh, n=p.n_neurons) * p.w_scale
    i = np.arange(p.n_neurons)
    return kernel[(i[:, None] - i[None, :]) % p.n_neurons]


# -- Kilpatrick & Ermentrout model --------------------------------------

def kilpatrick_weights(n_neurons: int, sigma_kp: float, het_freq: int) -> np.ndarray:
    """w_ij = (1 + sigma_kp cos(2 pi n j / N)) cos(2 pi (i - j) / N)."""
    if n_neurons <= 0:
        raise ValueError("n_neurons must be positive")
    i = np.arange(n_neurons)
    het = 1.0 + sigma_kp * np.cos(2 * math.pi * het_freq * i / n_neurons)
    ring = np.cos(2 * math.pi * (i[:, None] - i[None, :]) / n_neurons)
    return ring * het[None, :]


def _rates(u: np.ndarray, p: LegacyParams) -> np.ndarray:
    if p.model == "zhang":
        return zhang_activation(u, p)
    return (u > p.theta_kp).astype(np.float64)


def _sim_matrix(w: np.ndarray, p: LegacyParams) -> np.ndarray:
    # Kilpatrick's field equation integrates over the ring; the raw
    # formula matrix needs the 2 pi / N quadrature factor. Zhang weights
    # are already in discrete convention.
    if p.model == "kilpatrick":
        return w * (2 * math.pi / p.n_neurons)
    return w


def rate_step(state: RateModelState, w: np.ndarray, p: LegacyParams,
              bit_error_rate: float, rng: np.random.Generator) -> RateModelState:
    """One Euler step, honouring the clamp protocol.

    A new noise cycle starts whenever t is a multiple of 4*tau: clamp
    targets are resampled (probability b per neuron, set to the current
    population max or min) and held for 2*tau.
    """
    u = state.u.astype(np.float64).copy()
    t = state.t
    cycle = 4.0 * p.tau
    mask, vals, until = state.clamp_mask, state.clamp_values, state.clamp_until
    if bit_error_rate > 0.0 and math.fmod(t + 1e-12, cycle) < p.dt * 0.5:
        sel = rng.random(p.n_neurons) < bit_error_rate
        hi = rng.random(p.n_neurons) < 0.5
        vals = np.where(hi, u.max(), u.min())
        mask, until = sel, t + 2.0 * p.tau
        u[mask] = vals[mask]
    wsim = _sim_matrix(w, p)
    u = u + (p.dt / p.tau) * (-u + wsim @ _rates(u, p))
    if mask is not None and t + p.dt < until + 1e-12:
        u[mask] = vals[mask]
    return RateModelState(u, t + p.dt, mask, vals, until)


def circular_decode(rates: np.ndarray) -> float:
    """Rate-weighted circular mean, mapped to [0, 1).

    All rate on neuron i decodes to mod1(i/N + 1/2).
    """
    rates = np.asarray(rates, dtype=np.float64)
    n = rates.size
    th = 2 * math.pi * np.arange(n) / n
    cs = float(rates @ np.cos(th))
    sn = float(rates @ np.sin(th))
    total = rates.sum()
    if total <= 0 or math.hypot(cs, sn) < 1e-9 * max(total, 1e-30):
        raise ValueError("circular mean undefined for zero or uniform rates")
    return float(np.mod(math.atan2(sn, cs) / (2 * math.pi) + 0.5, 1.0))


def _initial_state(kind: str, w: np.ndarray, p: LegacyParams, position: float) -> np.ndarray:
    n = p.n_neurons
    if kind == "zhang":
        centre = 2 * math.pi * (position - 0.5)
        return zhang_activation_inverse(zhang_ideal_rates(p, centre), p)
    centre = 2 * math.pi * (position - 0.5)
    th = 2 * math.pi * np.arange(n) / n
    return 2.0 * p.theta_kp * np.cos(th - centre)


def simulate_rate_trials(w: np.ndarray, p: LegacyParams, p0s, n_cycles: int,
                         bit_error_rate: float, seed: int, trial_indices=None,
                         settle_cycles: int = 20, record_every_cycles: int = 1):
    """Batched rate-model trials, decoded once per noise cycle (4 tau).

    Each trial starts from a bump at p0 (in revolutions, [0,1)), relaxes
    noiselessly for settle_cycles, then runs n_cycles with the clamp
    protocol. Positions are unwrapped over time so diffusion across the
    ring seam accumulates. Returns dict with t_seconds, positions
    (T, K) unwrapped, raw positions in [0,1), and bump amplitude.
    """
    p0s = np.asarray(p0s, dtype=float)
    t_count = len(p0s)
    if trial_indices is None:
        trial_indices = np.arange(t_count)
    rngs = [substream(seed, "rate-trial", int(ti)) for ti in trial_indices]
    steps_per_cycle = int(round(4.0 * p.tau / p.dt))
    wsim = _sim_matrix(w, p).astype(np.float64)
    n = p.n_neurons
    u = np.stack([_initial_state(p.model, w, p, float(q)) for q in p0s])

    def euler(uu):
        return uu + (p.dt / p.tau) * (-uu + _rates(uu, p) @ wsim.T)

    for _ in range(settle_cycles * steps_per_cycle):
        u = euler(u)

    k_rec = n_cycles // record_every_cycles + 1
    raw = np.zeros((t_count, k_rec))
    unwrapped = np.zeros((t_count, k_rec))
    amp = np.zeros((t_count, k_rec))

    def decode_all(uu, k):
        for t in range(t_count):
            r = _rates(uu[t], p)
            raw[t, k] = circular_decode(r)
            amp[t, k] = r.max()

    decode_all(u, 0)
    unwrapped[:, 0] = raw[:, 0]
    last = raw[:, 0].copy()
    acc = np.zeros(t_count)
    clamp_mask = np.zeros((t_count, n), dtype=bool)
    clamp_vals = np.zeros((t_count, n))
    for cyc in range(n_cycles):
        if bit_error_rate > 0.0:
            for t in range(t_count):
                sel = rngs[t].random(n) < bit_error_rate
                hi = rngs[t].random(n) < 0.5
                clamp_mask[t] = sel
                clamp_vals[t] = np.where(hi, u[t].max(), u[t].min())
                u[t, sel] = clamp_vals[t, sel]
        else:
            clamp_mask[:] = False
        half = steps_per_cycle // 2
        for s in range(steps_per_cycle):
            u = euler(u)
            if s < half - 1 and bit_error_rate > 0.0:
                u[clamp_mask] = clamp_vals[clamp_mask]
        if (cyc + 1) % record_every_cycles == 0:
            k = (cyc + 1) // record_every_cycles
            decode_all(u, k)
            step_d = np.mod(raw[:, k] - last + 0.5, 1.0) - 0.5
            acc += step_d
            unwrapped[:, k] = unwrapped[:, 0] + acc
            last = raw[:, k].copy()

    t_seconds = np.arange(k_rec) * record_every_cycles * 4.0 * p.tau
    return {"t_seconds": t_seconds, "positions": unwrapped, "raw": raw, "amplitude": amp}
