import numpy as np
import pytest

from gridcan.codec import encode, encode_batch, sample_codec
from gridcan.kernels import FreqDist
from gridcan.net import (Codebook, InputMask, MaskInterval, TrialConfig, bwta,
                         decode, energy, run, simulate_trials, step)
from gridcan.rng import substream


class TestBwta:
    def test_worked_example(self):
        # L=2 over postsynaptic sums (3, 4, -5, -2)
        assert np.array_equal(bwta(np.array([3.0, 4.0, -5.0, -2.0]), 2), [0, 1, 0, 1])

    def test_tie_breaks_to_lowest_index(self):
        assert np.array_equal(bwta(np.array([7.0, 7.0]), 2), [1, 0])
        assert np.array_equal(bwta(np.array([0.0, 0.0, 0.0, 0.0]), 4), [1, 0, 0, 0])

    def test_restores_block_sparsity(self):
        rng = np.random.default_rng(0)
        u = rng.standard_normal((17, 64))
        z = bwta(u, 8)
        assert np.all(z.reshape(17, 8, 8).sum(axis=2) == 1)

    def test_batch_matches_single(self):
        rng = np.random.default_rng(1)
        u = rng.standard_normal((5, 32))
        zb = bwta(u, 4)
        for k in range(5):
            assert np.array_equal(zb[k], bwta(u[k], 4))


class TestStep:
    def test_state_settles_to_nearby_attractor(self, line_setup):
        # an arbitrary interior position falls at most one stored-sample
        # spacing to its nearest attractor, then stays put
        s = line_setup
        g = 0.5
        z = encode(s["codec"], g).dense(np.float32)
        rng = substream(0, "t")
        seen = []
        for _ in range(4):
            z = step(s["auto"], z, None, 0.0, rng, s["block"])
            p, sim = decode(z, s["codebook"], s["block"])
            seen.append(p)
            assert abs(p - g) <= 1.0 / (10 * s["omega_ma"]) + 1e-12
            assert sim > 0.9
        assert len(set(seen[1:])) <= 2   # settled

    def test_all_ones_mask_is_identity(self, small_line_setup):
        s = small_line_setup
        z = encode(s["codec"], 0.4).dense(np.float32)
        rng = substream(0, "t")
        a = step(s["auto"], z, InputMask.all_ones(s["n"]), 0.0, rng, s["block"])
        b = step(s["auto"], z, None, 0.0, rng, s["block"])
        assert np.array_equal(a, b)

    def test_bit_error_rate_validated(self, small_line_setup):
        s = small_line_setup
        with pytest.raises(ValueError):
            TrialConfig(s["auto"], s["codebook"], s["block"], 0.5, 10, bit_error_rate=1.5)

    def test_bit_errors_applied_after_update(self, small_line_setup):
        s = small_line_setup
        z = encode(s["codec"], 0.4).dense(np.float32)
        out = step(s["auto"], z, None, 1.0, substream(1, "x"), s["block"])
        # full error rate -> fair-coin state, block sparsity broken
        counts = out.reshape(-1, s["block"]).sum(axis=1)
        assert counts.std() > 0
        assert 0.3 < out.mean() < 0.7


class TestEnergy:
    def test_zero_state(self, small_line_setup):
        s = small_line_setup
        assert energy(s["auto"], np.zeros(s["n"]), s["n"], s["block"], s["omega_ma"]) == 0.0

    def test_matches_mean_energy_prediction(self, line_setup):
        # interior stored-state energies against the closed-form mean
        from gridcan.kernels import kernel_moments
        s = line_setup
        n, L, wma = s["n"], s["block"], s["omega_ma"]
        k1, k2 = kernel_moments(s["codec"].kernel_model())
        sigma0_sq = (n / L**2) * (L - 1) / L
        predicted = -(n**2 / L**2) * (k2 / wma) - sigma0_sq * 1.0   # raw z A z
        scale = L**2 * wma / n
        rng = np.random.default_rng(0)
        vals = []
        for p in rng.uniform(0.2, 0.8, 24):
            z = encode(s["codec"], p).dense()
            vals.append(energy(s["auto"], z, n, L, wma))
        measured = np.mean(vals)
        assert abs(measured - scale * predicted) < 0.1 * abs(scale * predicted)

    def test_asymmetric_rejected_with_flag(self, small_line_setup):
        s = small_line_setup
        w = s["auto"].values.copy()
        w[0, 1] += 1.0
        z = encode(s["codec"], 0.3).dense()
        with pytest.raises(ValueError):
            energy(w, z, s["n"], s["block"], s["omega_ma"], require_symmetric=True)
        energy(s["auto"].values, z, s["n"], s["block"], s["omega_ma"], require_symmetric=True)

    def test_never_increases_noiseless(self, small_line_setup):
        s = small_line_setup
        rng = np.random.default_rng(3)
        for trial in range(10):
            z = np.zeros(s["n"], dtype=np.float32)
            idx = rng.integers(0, s["block"], s["n"] // s["block"])
            z[np.arange(s["n"] // s["block"]) * s["block"] + idx] = 1.0
            e_prev = energy(s["auto"], z, s["n"], s["block"], s["omega_ma"])
            for t in range(50):
                z = step(s["auto"], z, None, 0.0, substream(trial, t), s["block"])
                e = energy(s["auto"], z, s["n"], s["block"], s["omega_ma"])
                assert e <= e_prev + 1e-9
                e_prev = e


class TestDecode:
    def test_exact_codeword(self, small_line_setup):
        s = small_line_setup
        g = s["codebook"].positions[77]
        z = encode(s["codec"], g).dense()
        p, sim = decode(z, s["codebook"], s["block"])
        assert p == g and sim == 1.0

    def test_noise_robustness(self, line_setup):
        s = line_setup
        g = s["codebook"].positions[1234]
        z = encode(s["codec"], g).dense(np.float32)
        rng = np.random.default_rng(5)
        flips = rng.random(s["n"]) < 0.1
        z[flips] = rng.integers(0, 2, flips.sum()).astype(np.float32)
        p, sim = decode(z, s["codebook"], s["block"])
        assert p == g
        assert sim >= 0.8

    def test_all_zero_state(self, small_line_setup):
        s = small_line_setup
        p, sim = decode(np.zeros(s["n"]), s["codebook"], s["block"])
        assert sim == 0.0
        assert p == s["codebook"].positions[0]

    def test_empty_codebook(self, small_line_setup):
        s = small_line_setup
        empty = Codebook(np.empty(0), np.empty((0, s["n"] // s["block"]), dtype=int))
        with pytest.raises(ValueError):
            decode(np.zeros(s["n"]), empty, s["block"])


class TestRun:
    def test_zero_steps(self, small_line_setup):
        s = small_line_setup
        tr = TrialConfig(s["auto"], s["codebook"], s["block"], 0.5, 0, codec=s["codec"])
        out = run(tr)
        assert len(out.positions) == 1
        assert abs(out.positions[0] - 0.5) < 1e-3

    def test_deterministic_for_seed(self, small_line_setup):
        s = small_line_setup
        tr = TrialConfig(s["auto"], s["codebook"], s["block"], 0.4, 40,
                         bit_error_rate=0.1, seed=9, codec=s["codec"])
        a = run(tr)
        b = run(tr)
        assert np.array_equal(a.positions, b.positions)
        tr2 = TrialConfig(s["auto"], s["codebook"], s["block"], 0.4, 40,
                          bit_error_rate=0.1, seed=10, codec=s["codec"])
        assert not np.array_equal(a.positions, run(tr2).positions)

    def test_single_matches_batch(self, small_line_setup):
        s = small_line_setup
        p0s = [0.3, 0.5, 0.7]
        batch = simulate_trials(s["auto"], s["codebook"], s["block"], p0s, 30, 0.1, [],
                                seed=4, codec=s["codec"])
        for k, p0 in enumerate(p0s):
            single = run(TrialConfig(s["auto"], s["codebook"], s["block"], p0, 30,
                                     bit_error_rate=0.1, seed=4, trial_index=k,
                                     codec=s["codec"]))
            assert np.array_equal(single.positions, batch["positions"][k])

    def test_variance_saturates_under_noise(self, line_setup):
        # noisy hold: late-window variance stays within twice the
        # mid-window variance (no return of diffusive growth)
        s = line_setup
        from gridcan.netbuild import add_weight_noise
        noisy = add_weight_noise(s["auto"], seed=8)
        p0 = np.linspace(0.2, 0.8, 30)
        res = simulate_trials(noisy, s["codebook"], s["block"], p0, 800, 0.1, [],
                              seed=12, codec=s["codec"], decode_stride=10)
        err = res["positions"] - p0[:, None]
        var = err.var(axis=0)
        k = len(var)
        assert var[3 * k // 4:].mean() < 2.0 * var[k // 4: k // 2].mean()

    def test_integrate_then_hold(self, line_setup):
        s = line_setup
        c = s["speed"]
        sch = [MaskInterval(0, 60, s["sign"].mask(+1))]
        res = simulate_trials(s["weights"], s["codebook"], s["block"], [0.3], 120, 0.0,
                              sch, seed=3, codec=s["codec"])
        pos = res["positions"][0]
        moved = pos[60] - pos[0]
        assert abs(moved - 60 * c) < 0.25 * 60 * c
        # after the mask releases (and a few settle steps) the state holds
        assert np.abs(pos[65:] - pos[65]).max() < 1.0 / (2 * s["omega_ma"])

    def test_mask_schedule_intersection(self, small_line_setup):
        s = small_line_setup
        m1 = InputMask(np.arange(s["n"]) % 2 == 0)
        m2 = InputMask(np.arange(s["n"]) % 3 == 0)
        sch = [MaskInterval(0, 5, m1), MaskInterval(0, 5, m2)]
        from gridcan.net import _mask_for_step
        combined = _mask_for_step(sch, 2, s["n"])
        assert np.array_equal(combined, m1.bits & m2.bits)
        assert _mask_for_step(sch, 7, s["n"]) is None


class TestAttractorRobustness:
    def test_one_step_cleanup(self, line_setup):
        # states within Hamming distance 0.05 N of a stored state get
        # closer to it in one noiseless step, >= 95% of 100 trials
        s = line_setup
        n, L = s["n"], s["block"]
        w = s["auto"].values.astype(np.float32)
        rng = np.random.default_rng(11)
        wins = 0
        for trial in range(100):
            p = rng.uniform(0.15, 0.85)
            z0 = encode(s["codec"], p).dense(np.float32)
            z = z0.copy()
            flips = rng.choice(n, int(0.025 * n), replace=False)
            z[flips] = 1.0 - z[flips]   # Hamming distance 0.05 N / 2 * 2
            d_before = np.abs(z - z0).sum()
            z1 = bwta(w @ z, L)
            d_after = np.abs(z1 - z0).sum()
            wins += d_after < d_before
        assert wins >= 95
