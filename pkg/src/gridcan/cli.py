"""Command-line entry point.

Subcommands:
  build        build codec / weight-matrix artifacts from a JSON spec
  run          run a named recipe or an inline experiment spec
  report       re-evaluate a result directory against its thresholds
  recipes list show discoverable recipes

Exit codes: 0 success, 2 configuration error, 3 runtime error,
4 acceptance failure (report/run found failing criteria).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3
EXIT_ACCEPT = 4


class ConfigError(Exception):
    """Invalid spec; `pointer` is a JSON pointer to the offending field."""

    def __init__(self, pointer: str, message: str):
        super().__init__(f"{pointer}: {message}")
        self.pointer = pointer


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="gridcan",
                                 description="block-code attractor network experiments")
    ap.add_argument("--threads", type=int, default=None,
                    help="BLAS thread cap (results are thread-count independent)")
    ap.add_argument("-v", "--verbose", action="count", default=0)
    sub = ap.add_subparsers(dest="command", required=True)

    b = sub.add_parser("build", help="build codec and weight-matrix artifacts")
    b.add_argument("--spec", required=True, help="JSON build spec")
    b.add_argument("--out", required=True, help="output directory")
    b.add_argument("--seed", type=int, default=None, help="master seed override")
    b.add_argument("--force", action="store_true", help="overwrite an existing manifest")

    r = sub.add_parser("run", help="run a recipe or experiment spec")
    r.add_argument("--spec", required=True,
                   help="JSON spec: a recipe document or {\"recipe\": name}")
    r.add_argument("--out", required=True)
    r.add_argument("--seed", type=int, default=None)
    r.add_argument("--force", action="store_true")

    p = sub.add_parser("report", help="summarize a result directory")
    p.add_argument("out", help="result directory with manifest.json")
    p.add_argument("--svg", action="store_true", help="list generated SVG plots")

    rec = sub.add_parser("recipes", help="recipe utilities")
    rec_sub = rec.add_subparsers(dest="recipes_command", required=True)
    rec_sub.add_parser("list", help="list discoverable recipes")
    return ap


def _require(doc, pointer: str, key: str, types, default=None, required=False):
    if key not in doc:
        if required:
            raise ConfigError(f"{pointer}/{key}", "missing required field")
        return default
    val = doc[key]
    if types is not None and not isinstance(val, types):
        raise ConfigError(f"{pointer}/{key}",
                          f"expected {getattr(types, '__name__', types)}, got {type(val).__name__}")
    return val


def _build_dist(doc, pointer):
    from .kernels import FreqDist
    kind = _require(doc, pointer, "kind", str, required=True)
    if kind in ("gaussian", "rectangular"):
        wma = _require(doc, pointer, "omega_ma", (int, float), required=True)
        if wma <= 0:
            raise ConfigError(f"{pointer}/omega_ma", "must be positive")
        return getattr(FreqDist, kind)(float(wma))
    if kind == "laplace":
        from .lab import laplace_freq_dist
        wma = _require(doc, pointer, "omega_ma", (int, float), required=True)
        return laplace_freq_dist(float(wma))
    if kind == "custom":
        grid = _require(doc, pointer, "grid", list, required=True)
        dens = _require(doc, pointer, "density", list, required=True)
        try:
            return FreqDist.custom(grid, dens, doc.get("omega_ma"))
        except ValueError as e:
            raise ConfigError(pointer, str(e)) from None
    raise ConfigError(f"{pointer}/kind", f"unknown distribution kind {kind!r}")


def cmd_build(args) -> int:
    import numpy as np

    from . import storage
    from .codec import CompositeCodec, sample_codec
    from .manifolds import manifold_from_json
    from .netbuild import (add_weight_noise, binarize, build_auto, build_hetero,
                           energy_correct, measure_energies, sample_sign, superpose)
    from .rng import substream

    spec = _load_json(args.spec)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if (out / "manifest.json").exists() and not args.force:
        print(f"error: {out}/manifest.json exists (use --force)", file=sys.stderr)
        return EXIT_CONFIG

    seed = args.seed if args.seed is not None else _require(spec, "", "seed", int, default=0)
    cdoc = _require(spec, "", "codec", dict, required=True)
    n = _require(cdoc, "/codec", "n_neurons", int, required=True)
    block = _require(cdoc, "/codec", "block_len", int, required=True)
    if block < 1 or n < 1 or n % block != 0:
        raise ConfigError("/codec/block_len", f"must divide n_neurons ({n})")
    mode = _require(cdoc, "/codec", "offset_mode", str, default="permutation")
    if mode not in ("permutation", "ordered"):
        raise ConfigError("/codec/offset_mode", f"unknown mode {mode!r}")
    factors = _require(cdoc, "/codec", "factors", int, default=None)
    dist = _build_dist(_require(cdoc, "/codec", "dist", dict, required=True), "/codec/dist")

    mdoc = _require(spec, "", "manifold", dict, required=True)
    if "name" not in mdoc:
        raise ConfigError("/manifold/name", "missing required field")
    arc_step = 1.0 / (10.0 * dist.omega_ma)
    try:
        manifold = manifold_from_json(mdoc, arc_step)
    except (ValueError, KeyError) as e:
        raise ConfigError("/manifold", str(e)) from None

    n_factors = factors if factors is not None else manifold.embed_dim
    if n_factors < manifold.embed_dim:
        raise ConfigError("/codec/factors",
                          f"manifold {manifold.name!r} embeds in {manifold.embed_dim} dims")
    codecs = [sample_codec(n, block, dist, mode,
                           seed=int(substream(seed, "factor", d).integers(2**63)))
              for d in range(n_factors)]
    codec = codecs[0] if n_factors == 1 else CompositeCodec(codecs)

    artifacts = {}
    for d, cd in enumerate(codecs):
        fname = f"codec-{d}.gcan"
        storage.save_codec(cd, out / fname)
        artifacts[f"codec_{d}"] = fname

    wdoc = _require(spec, "", "weights", dict, default={})
    auto = build_auto(codec, manifold)
    energies = None
    if wdoc.get("energy_correct"):
        auto = energy_correct(auto, codec, manifold)
        energies = measure_energies(auto, codec, manifold).energies
    terms = [auto]
    for k, hdoc in enumerate(wdoc.get("hetero", [])):
        ptr = f"/weights/hetero/{k}"
        fname = _require(hdoc, ptr, "field", str, required=True)
        try:
            manifold.field_named(fname)
        except KeyError:
            raise ConfigError(f"{ptr}/field", f"manifold has no field {fname!r}") from None
        speed = _require(hdoc, ptr, "speed", (int, float), required=True)
        sign_seed = _require(hdoc, ptr, "sign_seed", int,
                             default=int(substream(seed, "sign", k).integers(2**31)))
        sgn = sample_sign(n, block, seed=sign_seed)
        term = build_hetero(codec, manifold, fname, sgn, float(speed), auto=auto,
                            energies=energies)
        term.provenance["sign_seed"] = sign_seed
        terms.append(term)
    weights = superpose(terms) if len(terms) > 1 else auto
    if wdoc.get("weight_noise_seed") is not None:
        weights = add_weight_noise(weights, int(wdoc["weight_noise_seed"]))
    if wdoc.get("binarize"):
        bdoc = wdoc["binarize"]
        weights = binarize(weights, float(bdoc.get("alpha", 5.0)), int(bdoc.get("seed", 0)))
    storage.save_matrix(weights, out / "matrix.gcwm")
    artifacts["matrix"] = "matrix.gcwm"
    storage.write_manifest(out, spec, seed, [], artifacts, force=True)
    if args.verbose:
        print(f"built {len(codecs)} codec(s) and matrix into {out}")
    return EXIT_OK


def cmd_run(args) -> int:
    from . import recipes
    spec = _load_json(args.spec)
    if "recipe" not in spec:
        raise ConfigError("/recipe", "missing required field (name of recipe to run)")
    if isinstance(spec["recipe"], str) and "params" not in spec and "thresholds" not in spec:
        doc = recipes.load_recipe(spec["recipe"])
        doc.setdefault("seed", spec.get("seed", 0))
        if "overrides" in spec:
            doc["params"].update(spec["overrides"])
    else:
        doc = spec
    log = print if args.verbose else (lambda *a, **k: None)
    manifest = recipes.run_recipe(doc, args.out, master_seed=args.seed,
                                  force=args.force, log=log)
    ok = recipes.evaluate_report(manifest)
    return EXIT_OK if ok else EXIT_ACCEPT


def cmd_report(args) -> int:
    from . import recipes, storage
    manifest = storage.read_manifest(args.out)
    ok = recipes.evaluate_report(manifest)
    if args.svg:
        for p in sorted(Path(args.out).glob("*.svg")):
            print(f"plot: {p}")
    return EXIT_OK if ok else EXIT_ACCEPT


def cmd_recipes_list(_args) -> int:
    from . import recipes
    for r in recipes.list_recipes():
        print(f"{r['name']:18s} {r['description']}")
    return EXIT_OK


def _load_json(path) -> dict:
    p = Path(path)
    if not p.exists():
        raise ConfigError("", f"spec file not found: {path}")
    try:
        doc = json.loads(p.read_text())
    except json.JSONDecodeError as e:
        raise ConfigError("", f"invalid JSON in {path}: {e}") from None
    if not isinstance(doc, dict):
        raise ConfigError("", "spec must be a JSON object")
    return doc


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    if args.threads is not None:
        os.environ.setdefault("OMP_NUM_THREADS", str(args.threads))
        os.environ.setdefault("OPENBLAS_NUM_THREADS", str(args.threads))
    try:
        if args.command == "build":
            return cmd_build(args)
        if args.command == "run":
            return cmd_run(args)
        if args.command == "report":
            return cmd_report(args)
        if args.command == "recipes":
            return cmd_recipes_list(args)
        raise RuntimeError("unreachable")
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except FileExistsError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as e:  # runtime failures get a distinct exit code
        print(f"runtime error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
