"""Named reproduction recipes behind the CLI.

Each recipe is a JSON document (packaged under gridcan/recipes/, or
found in $GRIDCAN_RECIPE_DIR) with parameters and acceptance
thresholds; the runner functions here execute them, write CSV tables,
plot data and SVGs into the output directory, and record a per-cell
summary plus pass/fail status in the manifest.
"""

from __future__ import annotations

import json
import math
import os
from importlib import resources
from pathlib import Path

import numpy as np

from . import lab, legacy, storage, svgplot
from .codec import CompositeCodec, sample_codec
from .kernels import FreqDist
from .manifolds import make_field, make_manifold
from .net import Codebook, MaskInterval, simulate_trials
from .netbuild import (binarize, build_auto, build_hetero, build_jump,
                       energy_correct, measure_energies, sample_sign, superpose)
from .rng import substream

__all__ = ["list_recipes", "load_recipe", "run_recipe", "evaluate_report"]

_RUNNERS = {}


def _runner(name):
    def deco(fn):
        _RUNNERS[name] = fn
        return fn
    return deco


def _recipe_dirs():
    env = os.environ.get("GRIDCAN_RECIPE_DIR")
    if env:
        yield Path(env)
    yield resources.files("gridcan") / "recipes"


def list_recipes() -> list[dict]:
    seen = {}
    for d in _recipe_dirs():
        if not Path(str(d)).exists():
            continue
        for f in sorted(Path(str(d)).glob("*.json")):
            doc = json.loads(f.read_text())
            seen.setdefault(doc.get("recipe", f.stem), doc.get("description", ""))
    return [{"name": k, "description": v} for k, v in seen.items()]


def load_recipe(name: str) -> dict:
    for d in _recipe_dirs():
        f = Path(str(d)) / f"{name}.json"
        if f.exists():
            return json.loads(f.read_text())
    raise FileNotFoundError(f"no recipe named {name!r} (searched GRIDCAN_RECIPE_DIR and packaged recipes)")


def run_recipe(doc: dict, out_dir, master_seed: int | None = None,
               force: bool = False, log=print) -> dict:
    """Execute a recipe document; returns the manifest dict."""
    name = doc["recipe"]
    if name not in _RUNNERS:
        raise ValueError(f"unknown recipe {name!r}")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if (out_dir / "manifest.json").exists() and not force:
        raise FileExistsError(f"{out_dir}/manifest.json exists (use --force)")
    seed = int(doc.get("seed", 0) if master_seed is None else master_seed)
    params = dict(doc.get("params", {}))
    cells, artifacts = _RUNNERS[name](params, doc.get("thresholds", {}), out_dir, seed, log)
    storage.write_manifest(out_dir, doc, seed, cells, artifacts, force=True)
    return storage.read_manifest(out_dir)


def _status(ok: bool) -> str:
    return "PASS" if ok else "FAIL"


def evaluate_report(manifest: dict, log=print) -> bool:
    """Re-evaluate the stored per-cell checks; one line per criterion."""
    all_ok = True
    cells = manifest.get("cells", [])
    if not cells:
        log("INCOMPLETE: manifest lists no result cells")
        return False
    for cell in cells:
        for check in cell.get("checks", []):
            ok = bool(check.get("passed"))
            all_ok &= ok
            log(f"[{_status(ok)}] {cell['name']}: {check['name']} = {check['value']:.6g} "
                f"(require {check['requirement']})")
        if cell.get("incomplete"):
            all_ok = False
            log(f"[INCOMPLETE] {cell['name']}")
    return all_ok


def _check(name, value, requirement, passed):
    return {"name": name, "value": float(value), "requirement": requirement,
            "passed": bool(passed)}


# -- fig2: three-model comparison ----------------------------------------

@_runner("fig2")
def run_fig2(params, thr, out: Path, seed: int, log):
    n = int(params.get("n_neurons", 1024))
    n_scaling = int(params.get("n_neurons_scaling", 2048))
    trials = int(params.get("trials", 48))
    cycles = int(params.get("cycles", 2000))
    steps = int(params.get("steps", 1500))
    b = float(params.get("bit_error_rate", 0.1))
    omega_block = float(params.get("omega_block", 64.0))
    omega_sweep = params.get("omega_sweep", [16.0, 32.0, 64.0, 128.0])
    window = tuple(params.get("fit_window", (lab.SETTLE_FRACTION, 0.5)))
    cells, series = [], []

    def var_cell(name, exp, tscale):
        var, lo, hi = lab.diffusion_curve(exp["positions"], exp["p0"],
                                          seed=int(substream(seed, name, "boot").integers(2**31)))
        t = np.arange(len(var)) * tscale
        storage.write_plotdata_csv(out / f"variance_{name}.csv", t, var, lo, hi)
        series.append((name, t, np.maximum(var, 1e-12)))
        return var

    log("fig2: Zhang model ...")
    exp = lab.legacy_drift_experiment("zhang", n, seed=int(substream(seed, "zhang").integers(2**63)),
                                      n_trials=trials, n_cycles=cycles, bit_error_rate=b)
    var = var_cell("zhang", exp, exp["t_seconds"][1])
    fit = lab.diffusion_linearity(var, window)
    cells.append({"name": "zhang", "slope": fit.estimate, "r2": fit.r2, "checks": [
        _check("variance_slope_positive", fit.estimate, "> 0", fit.estimate > 0),
        _check("variance_linear_r2", fit.r2, f">= {thr.get('zhang_r2_min', 0.9)}",
               fit.r2 >= thr.get("zhang_r2_min", 0.9)),
    ]})

    for het in (8, 16):
        log(f"fig2: Kilpatrick n={het} ...")
        exp = lab.legacy_drift_experiment("kilpatrick", n,
                                          seed=int(substream(seed, "kp", het).integers(2**63)),
                                          n_trials=trials, n_cycles=cycles,
                                          bit_error_rate=b, het_freq=het)
        var = var_cell(f"kilpatrick_n{het}", exp, exp["t_seconds"][1])
        fit = lab.diffusion_linearity(var, window)
        sat = lab.saturation_check(var)
        if het == 8:
            checks = [_check("variance_saturates", float(sat), "saturating", sat)]
        else:
            checks = [_check("variance_linear_r2", fit.r2, f">= {thr.get('kp16_r2_min', 0.9)}",
                             fit.r2 >= thr.get("kp16_r2_min", 0.9)),
                      _check("variance_slope_positive", fit.estimate, "> 0", fit.estimate > 0)]
        cells.append({"name": f"kilpatrick_n{het}", "slope": fit.estimate, "r2": fit.r2,
                      "saturated": bool(sat), "checks": checks})

    log("fig2: block-code model ...")
    exp = lab.block_drift_experiment(n, 8, omega_block,
                                     seed=int(substream(seed, "block").integers(2**63)),
                                     n_trials=trials, n_steps=steps, bit_error_rate=b)
    var = var_cell("block", exp, 1.0)
    rms, sat = lab.asymptotic_rms_drift(exp["positions"], exp["p0"])
    cells.append({"name": f"block_w{omega_block:g}", "rms_drift": rms, "saturated": bool(sat),
                  "checks": [
        _check("variance_saturates", float(sat), "saturating", sat),
        _check("asymptotic_rms", rms, f"< {1.0/omega_block:.5g}", rms < 1.0 / omega_block)]})

    log("fig2: scaling sweep ...")
    fit, rows = lab.rms_drift_scaling(omega_sweep, n_scaling, 8,
                                      master_seed=int(substream(seed, "scaling").integers(2**63)),
                                      n_trials=int(params.get("scaling_trials", trials)),
                                      n_steps=steps, bit_error_rate=b)
    storage.write_csv(out / "scaling.csv", ["omega_ma", "rms_drift", "saturated"],
                      [(r["omega_ma"], r["rms_drift"], r["saturated"]) for r in rows])
    lo_s, hi_s = thr.get("scaling_slope_range", [-1.05, -0.65])
    cells.append({"name": "scaling", "slope": fit.estimate, "stderr": fit.stderr,
                  "rows": rows, "checks": [
        _check("loglog_slope", fit.estimate, f"in [{lo_s}, {hi_s}]", lo_s <= fit.estimate <= hi_s)]})

    (out / "variance.svg").write_text(svgplot.line_plot(
        series, title="position error variance", xlabel="time (block steps / seconds)",
        ylabel="variance", logy=True))
    return cells, {"plots": ["variance.svg"], "tables": ["scaling.csv"]}


# -- fig3: path integration ----------------------------------------------

@_runner("fig3")
def run_fig3(params, thr, out: Path, seed: int, log):
    n = int(params.get("n_neurons", 4096))
    block = int(params.get("block_len", 8))
    wma = float(params.get("omega_ma", 32.0))
    c = float(params.get("speed", 0.012))
    steps = int(params.get("steps", 60))
    dist = FreqDist.rectangular(wma) if params.get("dist", "rectangular") == "rectangular" \
        else FreqDist.gaussian(wma)
    codec = sample_codec(n, block, dist, "permutation",
                         seed=int(substream(seed, "codec").integers(2**63)))
    line = make_manifold("line", 1.0 / (10 * wma), length=1.0)
    make_field(line, "constant", name="fwd", components=[1.0])
    log("fig3: building weights ...")
    auto = build_auto(codec, line)
    sgn = sample_sign(n, block, seed=int(substream(seed, "sign").integers(2**63)))
    het = build_hetero(codec, line, "fwd", sgn, c=c, auto=auto)
    w = superpose([auto, het])
    book = Codebook.from_codec(codec, np.linspace(0, 1, 4097))

    def speed_run(name, schedule, p0):
        res = simulate_trials(w, book, block, [p0], steps, 0.0, schedule,
                              seed=int(substream(seed, "run", name).integers(2**63)), codec=codec)
        pos = res["positions"][0]
        storage.write_trajectory_csv(out / f"trajectory_{name}.csv", res["steps"], pos,
                                     res["similarity"][0])
        fit = np.polyfit(res["steps"][5:], pos[5:], 1)
        return float(fit[0]), (res["steps"], pos)

    log("fig3: running masked trials ...")
    v_pos, tr1 = speed_run("forward", [MaskInterval(0, 10**9, sgn.mask(+1))], 0.3)
    v_neg, tr2 = speed_run("backward", [MaskInterval(0, 10**9, sgn.mask(-1))], 0.7)
    half_rng = substream(seed, "halfmask")
    v_half, tr3 = speed_run("half", [MaskInterval(0, 10**9, sgn.mask(+1, 0.5, half_rng))], 0.3)
    v_none, tr4 = speed_run("nomask", [], 0.5)
    hold, trh = speed_run("integrate_then_hold",
                          [MaskInterval(0, steps // 2, sgn.mask(+1))], 0.35)

    tol = float(thr.get("speed_rel_tol", 0.2))
    ratio_lo, ratio_hi = thr.get("half_ratio_range", [0.35, 0.65])
    ratio = v_half / v_pos if v_pos else math.inf
    cells = [{"name": "integration", "v_forward": v_pos, "v_backward": v_neg,
              "v_half": v_half, "v_nomask": v_none, "speed": c, "gain": het.provenance["gain"],
              "checks": [
        _check("forward_speed_over_c", v_pos / c, f"in [{1-tol}, {1+tol}]",
               abs(v_pos / c - 1) <= tol),
        _check("backward_speed_over_c", -v_neg / c, f"in [{1-tol}, {1+tol}]",
               abs(-v_neg / c - 1) <= tol),
        _check("half_mask_ratio", ratio, f"in [{ratio_lo}, {ratio_hi}]",
               ratio_lo <= ratio <= ratio_hi),
        _check("no_mask_drift_over_c", abs(v_none) / c, "< 0.1", abs(v_none) < 0.1 * c),
    ]}]
    (out / "integration.svg").write_text(svgplot.line_plot(
        [("forward", *tr1), ("backward", *tr2), ("half", *tr3), ("no mask", *tr4),
         ("hold", *trh)],
        title="path integration", xlabel="step", ylabel="decoded position"))
    return cells, {"plots": ["integration.svg"]}


# -- fig4: curved manifolds, binarized weights ---------------------------

def _direction_errors(man, fld, pos, steps, seg):
    errs = []
    for k in range(0, steps, seg):
        dp = man.wrap_displacement(pos[k + seg] - pos[k])
        g0 = np.asarray(man.embed(pos[k][None, :]))[0]
        g1 = np.asarray(man.embed((pos[k] + dp)[None, :]))[0]
        disp = g1 - g0
        jac = np.asarray(man.jacobian(pos[k][None, :]))[0]
        vdir = jac @ fld(pos[k][None, :])[0]
        norm = np.linalg.norm(disp) * np.linalg.norm(vdir)
        if norm < 1e-12:
            errs.append(90.0)
        else:
            errs.append(math.degrees(math.acos(float(np.clip(disp @ vdir / norm, -1, 1)))))
    return float(np.mean(errs))


def _fig4_manifold(name, params, thr, out, seed, log):
    n = int(params.get("n_neurons", 4096))
    block = int(params.get("block_len", 8))
    wma = float(params.get("omega_ma", 3.0))
    c = float(params.get("speed", 0.05))
    alpha = float(params.get("alpha", 5.0))
    dist = FreqDist.rectangular(wma)
    if name == "sphere":
        man = make_manifold("sphere", 1.0 / (10 * wma), radius=params.get("radius", 0.8),
                            polar_margin_deg=5.0)
        flds = [make_field(man, "axis_rotation", name="rot_z", axis=[0, 0, 1], rate=1.0),
                make_field(man, "axis_rotation", name="rot_x", axis=[1, 0, 0], rate=1.0)]
        start = np.array([math.pi / 2, 1.0])
    else:
        man = make_manifold("torus", 1.0 / (10 * wma),
                            radius_major=params.get("radius_major", 0.45),
                            radius_minor=params.get("radius_minor", 0.45))
        flds = [make_field(man, "constant", name="along_u", components=[1.0, 0.0]),
                make_field(man, "constant", name="along_v", components=[0.0, 1.0])]
        start = np.array([1.0, 1.0])
    d_embed = man.embed_dim
    cc = CompositeCodec([
        sample_codec(n, block, dist, "permutation",
                     seed=int(substream(seed, name, d).integers(2**63)))
        for d in range(d_embed)])
    log(f"fig4: {name}: building ({len(man.grid)} samples) ...")
    a_fo = build_auto(cc, man)
    a = energy_correct(a_fo, cc, man)
    rep = measure_energies(a, cc, man)
    interior = man.interior_mask(0.3)
    e_int = rep.energies[interior if interior.any() else slice(None)]
    cov = float(np.std(e_int) / abs(np.mean(e_int)))
    terms = [a]
    signs = {}
    for k, fld in enumerate(flds):
        sgn = sample_sign(n, block, seed=int(substream(seed, name, "sign", k).integers(2**63)))
        signs[fld.name] = sgn
        log(f"fig4: {name}: field {fld.name} ...")
        terms.append(build_hetero(cc, man, fld, sgn, c=c, auto=a, energies=rep.energies))
    wb = binarize(superpose(terms), alpha=alpha,
                  seed=int(substream(seed, name, "binarize").integers(2**63)))
    book_pts = man.subgrid(110)
    book = Codebook(book_pts, cc.active_indices(np.asarray(man.embed(book_pts), float)))

    rng = substream(seed, name, "recall")
    pool = man.grid[interior]
    test_pts = pool[rng.choice(len(pool), min(60, len(pool)), replace=False)]
    res = simulate_trials(wb, book, block, test_pts, 3, 0.0, [],
                          seed=int(substream(seed, name, "recall-run").integers(2**63)),
                          codec=cc, embed=man.embed)
    ga = np.asarray(man.embed(res["positions"][:, -1]))
    gb = np.asarray(man.embed(test_pts))
    if name == "sphere":
        r = float(params.get("radius", 0.8))
        geo = np.arccos(np.clip((ga * gb).sum(axis=1) / r**2, -1, 1)) * r
    else:
        geo = np.linalg.norm(ga - gb, axis=1)   # chord; lower bound on geodesic
    recall_err = float(geo.mean())

    steps, seg = 100, 20
    dir_errs = {}
    for fld in flds:
        sch = [MaskInterval(0, 10**9, signs[fld.name].mask(+1))]
        res = simulate_trials(wb, book, block, np.array([start]), steps, 0.0, sch,
                              seed=int(substream(seed, name, "dir", fld.name).integers(2**63)),
                              codec=cc, embed=man.embed)
        pos = res["positions"][0]
        storage.write_trajectory_csv(out / f"{name}_{fld.name}.csv", res["steps"], pos,
                                     res["similarity"][0])
        dir_errs[fld.name] = _direction_errors(man, fld, pos, steps, seg)

    geo_max = float(thr.get("recall_geo_factor", 2.0)) / wma
    dir_max = float(thr.get("direction_err_max_deg", 30.0))
    checks = [
        _check("energy_cov_post_correction", cov, f"< {thr.get('energy_cov_max', 0.15)}",
               cov < thr.get("energy_cov_max", 0.15)),
        _check("recall_geodesic_err", recall_err, f"< {geo_max:.4g}", recall_err < geo_max),
    ]
    for fname, de in dir_errs.items():
        checks.append(_check(f"direction_err_{fname}", de, f"< {dir_max}", de < dir_max))
    return {"name": name, "energy_cov": cov, "recall_err": recall_err,
            "direction_errors": dir_errs, "checks": checks}


def _fig4_jump(params, thr, out, seed, log):
    """Two line manifolds superposed, with gated jumps between them."""
    n = int(params.get("jump_n_neurons", 2048))
    block = int(params.get("block_len", 8))
    wma = float(params.get("jump_omega_ma", 16.0))
    dist = FreqDist.rectangular(wma)
    line = make_manifold("line", 1.0 / (10 * wma), length=1.0)
    codecs = [sample_codec(n, block, dist, "permutation",
                           seed=int(substream(seed, "jump", d).integers(2**63)))
              for d in range(2)]
    log("fig4: two-manifold jump network ...")
    autos = [build_auto(cd, line) for cd in codecs]
    s12 = sample_sign(n, block, seed=int(substream(seed, "jump", "s12").integers(2**63)))
    s21 = sample_sign(n, block, seed=int(substream(seed, "jump", "s21").integers(2**63)))
    gain = float(params.get("jump_gain", 1.0))
    j12 = build_jump(codecs[0], codecs[1], None, s12, gain, line)
    j21 = build_jump(codecs[1], codecs[0], None, s21, gain, line)
    w = superpose([autos[0], autos[1], j12, j21])
    grid = np.linspace(0, 1, 2049)
    books = [Codebook.from_codec(cd, grid) for cd in codecs]
    p0 = 0.42
    # jump mask on steps 5..10; decode the whole run against the
    # destination codebook (pre-jump reads are meaningless by design)
    sch = [MaskInterval(5, 10, s12.mask(+1))]
    res = simulate_trials(w, books[1], block, [p0], 110, 0.0, sch,
                          seed=int(substream(seed, "jump", "run").integers(2**63)),
                          codec=codecs[0])
    pos, sim = res["positions"][0], res["similarity"][0]
    storage.write_trajectory_csv(out / "jump.csv", res["steps"], pos, sim)
    landed, sim_landed = float(pos[10]), float(sim[10])
    err = abs(landed - p0)
    min_sim_after = float(sim[10:].min())
    checks = [
        _check("jump_landing_err", err, f"< {1.0/wma:.4g}", err < 1.0 / wma),
        _check("dst_similarity_held_100_steps", min_sim_after, "> 0.8", min_sim_after > 0.8),
    ]
    return {"name": "two_manifold_jump", "landed": landed, "similarity": sim_landed,
            "checks": checks}


@_runner("fig4")
def run_fig4(params, thr, out: Path, seed: int, log):
    cells = [
        _fig4_manifold("sphere", params, thr, out, seed, log),
        _fig4_manifold("torus", params, thr, out, seed, log),
        _fig4_jump(params, thr, out, seed, log),
    ]
    return cells, {}


# -- kernel validation ----------------------------------------------------

@_runner("kernels")
def run_kernels(params, thr, out: Path, seed: int, log):
    n = int(params.get("n_neurons", 4096))
    block = int(params.get("block_len", 8))
    wma = float(params.get("omega_ma", 64.0))
    log("kernels: validating 1-D and 2-D similarity kernels ...")
    rep = lab.kernel_validation(n, block, wma, seed,
                                dist_kinds=tuple(params.get("dists", ["gaussian", "rectangular"])),
                                n_probes=int(params.get("probes", 400)))
    cells = []
    series = []
    rmse_max = float(thr.get("rmse_max", 0.02))
    for kind, r in rep.items():
        if kind == "2d":
            cells.append({"name": "kernel_2d", "rmse": r["rmse"], "checks": [
                _check("rmse_2d", r["rmse"], f"< {thr.get('rmse_2d_max', 0.03)}",
                       r["rmse"] < thr.get("rmse_2d_max", 0.03))]})
            continue
        storage.write_kernel_csv(out / f"kernel_{kind}.csv", r["table"])
        series.append((kind, r["table"].dp, r["table"].mean))
        series.append((f"{kind} theory", r["table"].dp, r["table"].theory))
        cells.append({"name": f"kernel_{kind}", "rmse": r["rmse"], "max_abs": r["max_abs"],
                      "checks": [_check("rmse", r["rmse"], f"< {rmse_max}", r["rmse"] < rmse_max)]})
    (out / "kernels.svg").write_text(svgplot.line_plot(
        series, title="similarity kernels", xlabel="dp (m)", ylabel="K"))
    return cells, {"plots": ["kernels.svg"]}


# -- appendix checks: OU process, energy landscape, binding arithmetic ----

@_runner("appendix-checks")
def run_appendix(params, thr, out: Path, seed: int, log):
    n = int(params.get("n_neurons", 4096))
    block = int(params.get("block_len", 8))
    cells = []

    log("appendix: inner-product process statistics ...")
    ou = lab.ou_validation(n, block, float(params.get("ou_omega_ma", 64.0)),
                           seed=int(substream(seed, "ou").integers(2**63)),
                           n_paths=int(params.get("ou_paths", 10000)))
    storage.write_plotdata_csv(out / "ou_autocorr.csv", ou["lags"], ou["corr"])
    cells.append({"name": "ou_process", "mean": ou["mean"], "var": ou["var"],
                  "corr_length": ou["corr_length"], "checks": [
        _check("mean_rel_err", ou["mean_rel_err"], "< 0.02", ou["mean_rel_err"] < 0.02),
        _check("var_rel_err", ou["var_rel_err"], "< 0.05", ou["var_rel_err"] < 0.05),
        _check("corr_length_rel_err", ou["corr_length_rel_err"], "< 0.10",
               ou["corr_length_rel_err"] < 0.10)]})

    for wma in params.get("energy_omegas", [16.0, 64.0]):
        log(f"appendix: energy landscape autocovariance (omega={wma:g}) ...")
        ec = lab.energy_autocovariance(n, block, float(wma),
                                       seed=int(substream(seed, "energy", int(wma)).integers(2**63)),
                                       n_resamples=int(params.get("energy_resamples", 60)),
                                       kappa1_sq=params.get("kappa1_sq", 1.5))
        storage.write_plotdata_csv(out / f"energy_cov_w{wma:g}.csv", ec["lags"], ec["cov"])
        cells.append({"name": f"energy_landscape_w{wma:g}", "fit_length": ec["fit_length"],
                      "magnitude_ratio": ec["magnitude_ratio"], "checks": [
            _check("length_ratio", ec["length_ratio"], "in [0.75, 1.25]",
                   0.75 <= ec["length_ratio"] <= 1.25),
            _check("magnitude_ratio", ec["magnitude_ratio"], "in [1/3, 3]",
                   1 / 3 <= ec["magnitude_ratio"] <= 3.0)]})

    log("appendix: binding addition overlaps ...")
    cases = lab.lcc_addition_check(n, block, float(params.get("lcc_omega_ma", 16.0)),
                                   seed=int(substream(seed, "lcc").integers(2**63)))
    storage.write_csv(out / "lcc_addition.csv", ["case", "overlap"], cases.items())
    cells.append({"name": "lcc_addition", **cases, "checks": [
        _check("q_zero", cases["q_zero"], "== 1", cases["q_zero"] == 1.0),
        _check("q_plus_p", cases["q_plus_p"], "0.5 +- 0.05", abs(cases["q_plus_p"] - 0.5) <= 0.05),
        _check("q_minus_p", cases["q_minus_p"], "0.5 +- 0.05", abs(cases["q_minus_p"] - 0.5) <= 0.05),
        _check("generic", cases["generic"], "2/3 +- 0.05", abs(cases["generic"] - 2 / 3) <= 0.05)]})
    return cells, {}
