"""Experiment protocols and statistics.

Every experiment is re-runnable from (parameters, master seed): all
randomness flows through per-cell / per-trial substreams, so sweep
cells are independent and execution order cannot change results.
Statistical outputs carry bootstrap or analytic uncertainty.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import legacy
from .codec import CompositeCodec, empirical_kernel, sample_codec
from .kernels import FreqDist, KernelModel, compose_kernel, kernel_moments
from .manifolds import make_field, make_manifold
from .net import Codebook, simulate_trials
from .netbuild import WeightMatrix, add_weight_noise, build_auto
from .rng import substream

__all__ = [
    "ExperimentSpec",
    "FitResult",
    "linear_fit",
    "bootstrap_ci",
    "diffusion_curve",
    "saturation_check",
    "asymptotic_rms_drift",
    "block_drift_experiment",
    "legacy_drift_experiment",
    "rms_drift_scaling",
    "energy_autocovariance",
    "ou_validation",
    "lcc_addition_check",
    "kernel_validation",
    "laplace_freq_dist",
]

SETTLE_FRACTION = 0.05       # initial-settle exclusion for diffusion fits
BOOTSTRAP_RESAMPLES = 1000


@dataclass
class ExperimentSpec:
    """Declarative sweep: one experiment kind over fully specified cells."""

    kind: str
    cells: list                     # list of parameter dicts, one per sweep cell
    trials: int
    steps: int
    master_seed: int
    common: dict = field(default_factory=dict)

    def cell_seed(self, index: int) -> int:
        # cells own disjoint streams; never reused across cells
        return int(substream(self.master_seed, "cell", index).integers(2**63))


@dataclass
class FitResult:
    estimate: float
    stderr: float
    window: tuple
    r2: float


def linear_fit(x, y) -> FitResult:
    """OLS slope with standard error and R^2."""
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    if x.size < 3:
        raise ValueError("need at least 3 points to fit")
    a = np.stack([x, np.ones_like(x)], axis=1)
    coef, res, *_ = np.linalg.lstsq(a, y, rcond=None)
    yhat = a @ coef
    ss_res = float(np.sum((y - yhat) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    dof = max(x.size - 2, 1)
    sxx = float(np.sum((x - x.mean()) ** 2))
    stderr = math.sqrt(ss_res / dof / sxx) if sxx > 0 else math.inf
    return FitResult(float(coef[0]), stderr, (float(x.min()), float(x.max())), r2)


def bootstrap_ci(samples: np.ndarray, stat=np.mean, n_boot: int = BOOTSTRAP_RESAMPLES,
                 level: float = 0.95, seed: int = 0):
    """Percentile bootstrap interval for a statistic over axis 0."""
    rng = substream(seed, "bootstrap")
    samples = np.asarray(samples)
    stats = np.empty((n_boot,) + samples.shape[1:])
    n = samples.shape[0]
    for b in range(n_boot):
        stats[b] = stat(samples[rng.integers(0, n, n)], axis=0)
    lo, hi = np.quantile(stats, [(1 - level) / 2, (1 + level) / 2], axis=0)
    return lo, hi


def diffusion_curve(positions: np.ndarray, p0: np.ndarray, seed: int = 0):
    """Across-trial variance of the position error at each recorded time.

    positions: (T, K); p0: (T,). Returns (var[K], ci_lo[K], ci_hi[K]).
    """
    if positions.shape[0] < 30:
        raise ValueError("diffusion curves need at least 30 trials")
    err = positions - np.asarray(p0)[:, None]
    var = err.var(axis=0)
    lo, hi = bootstrap_ci(err, stat=lambda e, axis: e.var(axis=axis), seed=seed)
    return var, lo, hi


def saturation_check(var: np.ndarray) -> bool:
    """Final-quartile variance below twice the second-quartile variance."""
    k = len(var)
    second = var[k // 4: k // 2]
    final = var[3 * k // 4:]
    return float(final.mean()) < 2.0 * float(second.mean()) + 1e-30


def diffusion_linearity(var: np.ndarray, window=(SETTLE_FRACTION, 0.5)) -> FitResult:
    """Linear fit of a variance curve over the diffusive-regime window.

    The window is a fraction of the recorded steps: the lower edge
    excludes the initial settle, the upper edge stops before desk-scale
    finite-landscape pinning bends the curve over.
    """
    k = len(var)
    a, b = int(window[0] * k), int(window[1] * k)
    return linear_fit(np.arange(a, b), var[a:b])


def asymptotic_rms_drift(positions: np.ndarray, p0: np.ndarray):
    """RMS of (p - p0) averaged over the last 10% of recorded steps.

    Returns (rms, saturated flag); non-saturating sweeps are flagged,
    not silently included.
    """
    err = positions - np.asarray(p0)[:, None]
    var = err.var(axis=0)
    tail = err[:, -max(1, err.shape[1] // 10):]
    rms = float(np.sqrt(np.mean(tail**2)))
    return rms, saturation_check(var)


def _make_dist(kind: str, omega_ma: float) -> FreqDist:
    if kind == "laplace":
        return laplace_freq_dist(omega_ma)
    return getattr(FreqDist, kind)(omega_ma)


def laplace_freq_dist(omega_ma: float) -> FreqDist:
    """Two-sided exponential P(omega), tabulated as a custom density.

    Its kernel is close to a decaying exponential, which is the shape
    the mean-reverting approximation of the inner-product process
    predicts; the stochastic-process validations default to it.
    """
    grid = np.linspace(-12 * omega_ma, 12 * omega_ma, 8193)
    return FreqDist.custom(grid, np.exp(-np.abs(grid) / omega_ma))


def block_drift_experiment(n_neurons: int, block_len: int, omega_ma: float, seed: int,
                           n_trials: int = 32, n_steps: int = 1500,
                           bit_error_rate: float = 0.1, weight_noise: bool = True,
                           dist_kind: str = "gaussian", line_length: float = 1.0,
                           interior: tuple = (0.15, 0.85), decode_grid: int = 4096,
                           decode_stride: int = 10):
    """Hold experiment: noisy block-code line attractor from many starts.

    Returns dict with steps, positions (T, K), p0 (T,), similarity.
    """
    dist = _make_dist(dist_kind, omega_ma)
    codec = sample_codec(n_neurons, block_len, dist, "permutation",
                         seed=int(substream(seed, "codec-seed").integers(2**63)))
    line = make_manifold("line", 1.0 / (10 * omega_ma), length=line_length)
    weights = build_auto(codec, line)
    if weight_noise:
        weights = add_weight_noise(weights, seed=int(substream(seed, "wnoise").integers(2**63)))
    book = Codebook.from_codec(codec, np.linspace(0.0, line_length, decode_grid + 1))
    p0 = np.linspace(interior[0] * line_length, interior[1] * line_length, n_trials)
    res = simulate_trials(weights, book, block_len, p0, n_steps, bit_error_rate,
                          [], seed=seed, codec=codec, decode_stride=decode_stride)
    return {"steps": res["steps"], "positions": res["positions"], "p0": p0,
            "similarity": res["similarity"], "codec": codec}


def legacy_drift_experiment(model: str, n_neurons: int, seed: int, n_trials: int = 32,
                            n_cycles: int = 1500, bit_error_rate: float = 0.1,
                            weight_noise: bool = True, het_freq: int = 8,
                            interior: tuple = (0.1, 0.9)):
    """Same protocol for a comparison rate model (positions unwrapped)."""
    if model == "zhang":
        params = legacy.zhang_params(n_neurons=n_neurons)
        w = legacy.zhang_weights(params)
    elif model == "kilpatrick":
        params = legacy.kilpatrick_params(n_neurons=n_neurons, het_freq=het_freq)
        w = legacy.kilpatrick_weights(n_neurons, params.sigma_kp, het_freq)
    else:
        raise ValueError(f"unknown comparison model {model!r}")
    if weight_noise:
        noisy = add_weight_noise(WeightMatrix(w.astype(np.float32), {"kind": model}),
                                 seed=int(substream(seed, "wnoise").integers(2**63)))
        w = noisy.values.astype(np.float64)
    p0 = np.linspace(interior[0], interior[1], n_trials)
    res = legacy.simulate_rate_trials(w, params, p0, n_cycles, bit_error_rate, seed=seed)
    return {"steps": np.arange(res["positions"].shape[1]), "t_seconds": res["t_seconds"],
            "positions": res["positions"], "p0": res["positions"][:, 0],
            "amplitude": res["amplitude"]}


def rms_drift_scaling(omega_list, n_neurons: int, block_len: int, master_seed: int,
                      n_trials: int = 32, n_steps: int = 1500, bit_error_rate: float = 0.1,
                      dist_kind: str = "gaussian", decode_stride: int = 25):
    """Log-log slope of asymptotic RMS drift against omega_ma.

    Needs >= 4 omega values spanning >= 4x. Non-saturating cells are
    excluded from the fit and reported.
    """
    omega_list = list(omega_list)
    if len(omega_list) < 4 or max(omega_list) < 4 * min(omega_list):
        raise ValueError("sweep needs >= 4 omega_ma values spanning >= 4x")
    rows = []
    for i, wma in enumerate(omega_list):
        seed = int(substream(master_seed, "cell", i).integers(2**63))
        exp = block_drift_experiment(n_neurons, block_len, wma, seed, n_trials=n_trials,
                                     n_steps=n_steps, bit_error_rate=bit_error_rate,
                                     dist_kind=dist_kind, decode_stride=decode_stride)
        rms, sat = asymptotic_rms_drift(exp["positions"], exp["p0"])
        rows.append({"omega_ma": wma, "rms_drift": rms, "saturated": bool(sat)})
    used = [r for r in rows if r["saturated"]]
    if len(used) < 3:
        raise ValueError("too few saturating cells to fit a scaling law")
    fit = linear_fit(np.log([r["omega_ma"] for r in used]),
                     np.log([r["rms_drift"] for r in used]))
    return fit, rows


# -- landscape and process statistics ------------------------------------

def _overlap_quadratic_energies(n_neurons, block_len, dist, rng, samples, probes):
    """E(p) = sum_s w_s (xbar_s . x_p)^2: the autoassociative quadratic
    form evaluated from block-index overlaps without materializing A."""
    m = n_neurons // block_len
    om = dist.sample(rng, m)
    th = rng.uniform(0, block_len, m)
    ns = np.floor(np.mod(np.multiply.outer(samples, om) + th, block_len)).astype(np.int16)
    npr = np.floor(np.mod(np.multiply.outer(probes, om) + th, block_len)).astype(np.int16)
    overlap = np.zeros((len(samples), len(probes)), dtype=np.int32)
    for m0 in range(0, m, 64):
        overlap += (ns[:, None, m0:m0 + 64] == npr[None, :, m0:m0 + 64]).sum(axis=2)
    xbar_dot = overlap - n_neurons / block_len**2
    return (xbar_dot**2).sum(axis=0)


def energy_autocovariance(n_neurons: int, block_len: int, omega_ma: float, seed: int,
                          n_resamples: int = 60, dist_kind: str = "laplace",
                          kappa1_sq: float | None = None):
    """Autocovariance of the attractor energy landscape over codec draws.

    The landscape is sampled on a scale-free geometry (line length
    64/omega_ma, probes in the central 40%, 16 points per half kernel
    width). The covariance curve splits into a codec-global plateau
    (realization-to-realization offset) and a locally decaying part;
    the decay length is fitted on the plateau-subtracted curve and the
    magnitude compared against the closed-form prediction
    (N^2/L^4)((L-1)/L)(P/w)[((L-1)/L)^2 + 4 N kappa1^2/(P w)].
    """
    if n_resamples < 50:
        raise ValueError("need at least 50 codec resamples")
    dist = _make_dist(dist_kind, omega_ma)
    line_len = 64.0 / omega_ma
    quad_step = 1.0 / (10 * omega_ma)
    samples = np.arange(quad_step / 2, line_len, quad_step)
    dd = 1.0 / (32 * omega_ma)
    probes = np.arange(0.3 * line_len, 0.7 * line_len, dd)
    e_all = np.empty((n_resamples, len(probes)))
    for r in range(n_resamples):
        rng = substream(seed, "resample", r)
        e_all[r] = _overlap_quadratic_energies(n_neurons, block_len, dist, rng,
                                               samples, probes) * quad_step
    centred = e_all - e_all.mean(axis=0, keepdims=True)
    n_lags = int(10.0 / (2 * omega_ma) / dd)
    lags = np.arange(n_lags)
    cov = np.array([(centred[:, : centred.shape[1] - k] * centred[:, k:]).mean()
                    for k in lags])
    plateau = cov[lags * dd > 6.0 / (2 * omega_ma)].mean()
    dec = cov - plateau
    mask = dec > 0.1 * dec[0]
    fit = linear_fit(lags[mask] * dd, np.log(dec[mask]))
    length = -1.0 / fit.estimate
    if kappa1_sq is None:
        k1, _ = kernel_moments(KernelModel(block_len, dist, 100))
        kappa1_sq = k1**2
    frac = (block_len - 1) / block_len
    pred0 = (n_neurons**2 / block_len**4) * frac * (line_len / omega_ma) * (
        frac**2 + 4 * n_neurons * kappa1_sq / (line_len * omega_ma))
    return {
        "lags": lags * dd,
        "cov": cov,
        "plateau": float(plateau),
        "fit_length": float(length),
        "target_length": 1.0 / (2 * omega_ma),
        "length_ratio": float(length * 2 * omega_ma),
        "cov0": float(cov[0]),
        "predicted_cov0": float(pred0),
        "magnitude_ratio": float(cov[0] / pred0),
        "kappa1_sq": float(kappa1_sq),
    }


def ou_validation(n_neurons: int, block_len: int, omega_ma: float, seed: int,
                  n_paths: int = 10_000, dist_kind: str = "laplace"):
    """Statistics of the inner product X(p) = z . x(p) against the
    mean-reverting approximation: steady-state mean N/L^2, variance
    (N/L^2)(L-1)/L, and exponential autocorrelation with length
    1/gamma, gamma = omega_ma L/(L-1)."""
    dist = _make_dist(dist_kind, omega_ma)
    wma = dist.omega_ma
    m = n_neurons // block_len
    gamma = wma * block_len / (block_len - 1)
    rng = substream(seed, "ou")
    om = dist.sample(rng, (n_paths, m))
    th = rng.uniform(0, block_len, (n_paths, m))
    targets = rng.integers(0, block_len, (n_paths, m))
    pgrid = np.linspace(0.0, 5.0 / wma, 100)
    x = np.empty((n_paths, len(pgrid)), dtype=np.float32)
    for j, p in enumerate(pgrid):
        x[:, j] = (np.floor(np.mod(om * p + th, block_len)) == targets).sum(axis=1)
    mean_t = n_neurons / block_len**2
    var_t = mean_t * (block_len - 1) / block_len
    xc = x - x.mean()
    var = float((xc**2).mean())
    lags = np.arange(80)
    dlag = pgrid[1] - pgrid[0]
    corr = np.array([(xc[:, : x.shape[1] - k] * xc[:, k:]).mean() / var for k in lags])
    mask = corr > 0.1
    fit = linear_fit(lags[mask] * dlag, np.log(corr[mask]))
    length = -1.0 / fit.estimate
    return {
        "mean": float(x.mean()), "mean_target": mean_t,
        "mean_rel_err": abs(float(x.mean()) - mean_t) / mean_t,
        "var": var, "var_target": var_t,
        "var_rel_err": abs(var - var_t) / var_t,
        "corr_length": float(length), "corr_length_target": 1.0 / gamma,
        "corr_length_rel_err": abs(length * gamma - 1.0),
        "lags": lags * dlag, "corr": corr,
    }


def lcc_addition_check(n_neurons: int, block_len: int, omega_ma: float, seed: int,
                       n_pairs: int = 200, dist_kind: str = "gaussian"):
    """Overlap of bound(x(p), x(q), inverse(x(0))) with x(p+q), by case.

    With ordered offsets the active indices add mod L, so the bound
    word encodes p + q up to per-block carry errors; the mean overlap
    is 1 when q = 0, 1/2 when q = +-p and 2/3 in the generic case.
    """
    dist = _make_dist(dist_kind, omega_ma)
    codec = sample_codec(n_neurons, block_len, dist, "ordered",
                         seed=int(substream(seed, "codec-seed").integers(2**63)))
    rng = substream(seed, "pairs")
    lo, hi = 10.0 / omega_ma, 60.0 / omega_ma

    def overlap(p, q):
        np_, nq = codec.active_indices(p), codec.active_indices(q)
        n0, ns = codec.active_indices(0.0), codec.active_indices(p + q)
        bound = np.mod(np_ + nq - n0, block_len)
        return float((bound == ns).mean())

    cases = {}
    ps = rng.uniform(lo, hi, n_pairs)
    cases["q_zero"] = float(np.mean([overlap(p, 0.0) for p in ps]))
    cases["q_plus_p"] = float(np.mean([overlap(p, p) for p in ps]))
    cases["q_minus_p"] = float(np.mean([overlap(p, -p) for p in ps]))
    qs = rng.uniform(lo, hi, n_pairs) * rng.choice([-1.0, 1.0], n_pairs) * 1.7183
    cases["generic"] = float(np.mean([overlap(p, q) for p, q in zip(ps, qs)]))
    return cases


def kernel_validation(n_neurons: int, block_len: int, omega_ma: float, seed: int,
                      dist_kinds=("gaussian", "rectangular"), n_probes: int = 400,
                      n_grid: int = 60, check_2d: bool = True):
    """Empirical vs theoretical kernels: max-abs and RMSE per distribution.

    Also checks the 2-D composed kernel of an LCC-bound pair against
    the closed-form composition when check_2d is set.
    """
    report = {}
    dp = np.linspace(0.0, 10.0 / omega_ma, n_grid)
    for kind in dist_kinds:
        dist = _make_dist(kind, omega_ma)
        codec = sample_codec(n_neurons, block_len, dist, "permutation",
                             seed=int(substream(seed, kind).integers(2**63)))
        model = KernelModel(block_len, dist, 100)
        tab = empirical_kernel(codec, dp, n_probes,
                               seed=int(substream(seed, kind, "probes").integers(2**63)),
                               model=model)
        dev = tab.mean - tab.theory
        report[kind] = {"rmse": float(np.sqrt(np.mean(dev**2))),
                        "max_abs": float(np.abs(dev).max()), "table": tab}
    if check_2d:
        dist = _make_dist("rectangular", omega_ma)
        codecs = [sample_codec(n_neurons, block_len, dist, "permutation",
                               seed=int(substream(seed, "2d", d).integers(2**63)))
                  for d in range(2)]
        cc = CompositeCodec(codecs)
        model = KernelModel(block_len, dist, 100)
        d1 = np.linspace(0.0, 6.0 / omega_ma, 13)
        rng = substream(seed, "2d-probes")
        probes = rng.uniform(0.0, 10.0, (n_probes, 2))
        base = cc.active_indices(probes)
        emp = np.empty((len(d1), len(d1)))
        for i, dx in enumerate(d1):
            for j, dy in enumerate(d1):
                shifted = cc.active_indices(probes + np.array([dx, dy]))
                emp[i, j] = (shifted == base).mean()
        k1 = model.evaluate(d1)
        theory = compose_kernel([k1[:, None], k1[None, :]], block_len)
        dev2 = emp - theory
        report["2d"] = {"rmse": float(np.sqrt(np.mean(dev2**2))),
                        "max_abs": float(np.abs(dev2).max())}
    return report
