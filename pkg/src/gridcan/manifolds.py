"""Manifold catalogue for attractor embeddings.

A ManifoldSpec bundles an analytic map g from intrinsic coordinates
p in R^D to embedding coordinates in R^{D'}, its Jacobian, a midpoint
sample grid with quadrature weights, and named on-manifold vector
fields. Weight construction integrates over the sample grid; the
embedding coordinates are what the codecs encode.

The catalogue is fixed: line, plane, ring, sphere, torus, moebius.
Sphere uses spherical angles with a polar-cap exclusion (the metric
degenerates at the poles); torus is the flat embedding in R^4; the
moebius strip is the standard ruled surface with a half twist.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = ["ManifoldSpec", "VectorField", "make_manifold", "make_field", "manifold_from_json"]


@dataclass
class VectorField:
    """Named intrinsic-coordinate velocity field v(p): R^D -> R^D."""

    name: str
    func: object                 # callable (S, D) -> (S, D)
    speed: float = 1.0           # default integration speed (coordinate units / step)

    def __call__(self, pts: np.ndarray) -> np.ndarray:
        return np.asarray(self.func(np.atleast_2d(pts)), dtype=float)


@dataclass
class ManifoldSpec:
    name: str
    intrinsic_dim: int
    embed_dim: int
    embed: object                # (S, D) -> (S, D')
    jacobian: object             # (S, D) -> (S, D', D)
    grid: np.ndarray             # (S, D) midpoint sample coordinates
    weights: np.ndarray          # (S,) coordinate-volume quadrature weights
    fields: list = field(default_factory=list)
    periodic: tuple = ()         # per intrinsic dimension
    extent: tuple = ()           # ((lo, hi), ...) per intrinsic dimension
    grid_shape: tuple = ()       # points per intrinsic dimension

    def metric(self, pts: np.ndarray) -> np.ndarray:
        """G = J^T J at each point: (S, D, D)."""
        J = np.asarray(self.jacobian(np.atleast_2d(pts)), dtype=float)
        return np.einsum("skd,ske->sde", J, J)

    def sqrt_det_metric(self, pts: np.ndarray) -> np.ndarray:
        G = self.metric(pts)
        det = np.linalg.det(G)
        if np.any(det <= 0):
            raise ValueError(f"degenerate metric on manifold {self.name!r} (det G <= 0)")
        return np.sqrt(det)

    def field_named(self, name: str) -> VectorField:
        for f in self.fields:
            if f.name == name:
                return f
        raise KeyError(f"manifold {self.name!r} has no field {name!r}")

    def interior_mask(self, margin: float) -> np.ndarray:
        """Samples at least `margin` (intrinsic units) from non-periodic edges."""
        ok = np.ones(len(self.grid), dtype=bool)
        for d, ((lo, hi), per) in enumerate(zip(self.extent, self.periodic)):
            if not per:
                ok &= (self.grid[:, d] >= lo + margin) & (self.grid[:, d] <= hi - margin)
        return ok

    def subgrid(self, max_per_dim: int = 96) -> np.ndarray:
        """Structured subsample of the grid (decode codebooks), (G, D)."""
        if not self.grid_shape:
            return self.grid
        arr = self.grid.reshape(*self.grid_shape, self.intrinsic_dim)
        slicer = tuple(slice(None, None, max(1, n // max_per_dim)) for n in self.grid_shape)
        return arr[slicer].reshape(-1, self.intrinsic_dim)

    def wrap_displacement(self, dp: np.ndarray) -> np.ndarray:
        """Minimal-image displacement for periodic intrinsic dimensions."""
        dp = np.array(dp, dtype=float, copy=True)
        for d, ((lo, hi), per) in enumerate(zip(self.extent, self.periodic)):
            if per:
                width = hi - lo
                dp[..., d] = (dp[..., d] + width / 2) % width - width / 2
        return dp


def _midpoints(lo: float, hi: float, step: float) -> np.ndarray:
    n = max(1, int(math.ceil((hi - lo) / step)))
    h = (hi - lo) / n
    return lo + (np.arange(n) + 0.5) * h, h


def _mesh(axes):
    grids = np.meshgrid(*axes, indexing="ij")
    return np.stack([g.reshape(-1) for g in grids], axis=1)


def make_manifold(name: str, arc_step: float, **params) -> ManifoldSpec:
    """Build a catalogue manifold sampled at <= arc_step embedding arc length.

    arc_step should be at most 1/(10*omega_ma) of the codec that will
    encode the embedding coordinates.
    """
    if name == "line":
        length = params.get("length", 1.0)
        pts, h = _midpoints(0.0, length, arc_step)
        grid = pts[:, None]
        return ManifoldSpec(
            "line", 1, 1,
            embed=lambda P: np.asarray(P, dtype=float),
            jacobian=lambda P: np.ones((len(np.atleast_2d(P)), 1, 1)),
            grid=grid, weights=np.full(len(grid), h),
            periodic=(False,), extent=((0.0, length),), grid_shape=(len(grid),),
        )

    if name == "plane":
        lx = params.get("length_x", 1.0)
        ly = params.get("length_y", 1.0)
        ax, hx = _midpoints(0.0, lx, arc_step)
        ay, hy = _midpoints(0.0, ly, arc_step)
        grid = _mesh([ax, ay])
        return ManifoldSpec(
            "plane", 2, 2,
            embed=lambda P: np.asarray(P, dtype=float),
            jacobian=lambda P: np.broadcast_to(np.eye(2), (len(np.atleast_2d(P)), 2, 2)).copy(),
            grid=grid, weights=np.full(len(grid), hx * hy),
            periodic=(False, False), extent=((0.0, lx), (0.0, ly)),
            grid_shape=(len(ax), len(ay)),
        )

    if name == "ring":
        r = params.get("radius", 1.0)
        ang, h = _midpoints(0.0, 2 * math.pi, arc_step / r)
        grid = ang[:, None]

        def g(P):
            t = np.atleast_2d(P)[:, 0]
            return np.stack([r * np.cos(t), r * np.sin(t)], axis=1)

        def J(P):
            t = np.atleast_2d(P)[:, 0]
            return np.stack([-r * np.sin(t), r * np.cos(t)], axis=1)[:, :, None]

        return ManifoldSpec("ring", 1, 2, g, J, grid, np.full(len(grid), h),
                            periodic=(True,), extent=((0.0, 2 * math.pi),),
                            grid_shape=(len(grid),))

    if name == "sphere":
        r = params.get("radius", 1.0)
        cap = math.radians(params.get("polar_margin_deg", 5.0))
        ath, hth = _midpoints(cap, math.pi - cap, arc_step / r)
        aph, hph = _midpoints(0.0, 2 * math.pi, arc_step / r)
        grid = _mesh([ath, aph])

        def g(P):
            P = np.atleast_2d(P)
            th, ph = P[:, 0], P[:, 1]
            return np.stack([r * np.sin(th) * np.cos(ph),
                             r * np.sin(th) * np.sin(ph),
                             r * np.cos(th)], axis=1)

        def J(P):
            P = np.atleast_2d(P)
            th, ph = P[:, 0], P[:, 1]
            out = np.empty((len(P), 3, 2))
            out[:, 0, 0] = r * np.cos(th) * np.cos(ph)
            out[:, 1, 0] = r * np.cos(th) * np.sin(ph)
            out[:, 2, 0] = -r * np.sin(th)
            out[:, 0, 1] = -r * np.sin(th) * np.sin(ph)
            out[:, 1, 1] = r * np.sin(th) * np.cos(ph)
            out[:, 2, 1] = 0.0
            return out

        return ManifoldSpec("sphere", 2, 3, g, J, grid, np.full(len(grid), hth * hph),
                            periodic=(False, True),
                            extent=((cap, math.pi - cap), (0.0, 2 * math.pi)),
                            grid_shape=(len(ath), len(aph)))

    if name == "torus":
        r1 = params.get("radius_major", 1.0)
        r2 = params.get("radius_minor", 1.0)
        au, hu = _midpoints(0.0, 2 * math.pi, arc_step / r1)
        av, hv = _midpoints(0.0, 2 * math.pi, arc_step / r2)
        grid = _mesh([au, av])

        def g(P):
            P = np.atleast_2d(P)
            u, v = P[:, 0], P[:, 1]
            return np.stack([r1 * np.cos(u), r1 * np.sin(u),
                             r2 * np.cos(v), r2 * np.sin(v)], axis=1)

        def J(P):
            P = np.atleast_2d(P)
            u, v = P[:, 0], P[:, 1]
            out = np.zeros((len(P), 4, 2))
            out[:, 0, 0] = -r1 * np.sin(u)
            out[:, 1, 0] = r1 * np.cos(u)
            out[:, 2, 1] = -r2 * np.sin(v)
            out[:, 3, 1] = r2 * np.cos(v)
            return out

        return ManifoldSpec("torus", 2, 4, g, J, grid, np.full(len(grid), hu * hv),
                            periodic=(True, True),
                            extent=((0.0, 2 * math.pi), (0.0, 2 * math.pi)),
                            grid_shape=(len(au), len(av)))

    if name == "moebius":
        R = params.get("radius", 1.0)
        hw = params.get("half_width", 0.3)
        au, hu = _midpoints(0.0, 2 * math.pi, arc_step / (R + hw))
        aw, hww = _midpoints(-hw, hw, arc_step)
        grid = _mesh([au, aw])

        def g(P):
            P = np.atleast_2d(P)
            u, w = P[:, 0], P[:, 1]
            rad = R + w * np.cos(u / 2)
            return np.stack([rad * np.cos(u), rad * np.sin(u), w * np.sin(u / 2)], axis=1)

        def J(P):
            P = np.atleast_2d(P)
            u, w = P[:, 0], P[:, 1]
            rad = R + w * np.cos(u / 2)
            drad_du = -0.5 * w * np.sin(u / 2)
            out = np.empty((len(P), 3, 2))
            out[:, 0, 0] = drad_du * np.cos(u) - rad * np.sin(u)
            out[:, 1, 0] = drad_du * np.sin(u) + rad * np.cos(u)
            out[:, 2, 0] = 0.5 * w * np.cos(u / 2)
            out[:, 0, 1] = np.cos(u / 2) * np.cos(u)
            out[:, 1, 1] = np.cos(u / 2) * np.sin(u)
            out[:, 2, 1] = np.sin(u / 2)
            return out

        return ManifoldSpec("moebius", 2, 3, g, J, grid, np.full(len(grid), hu * hww),
                            periodic=(False, False),
                            extent=((0.0, 2 * math.pi), (-hw, hw)),
                            grid_shape=(len(au), len(aw)))

    raise ValueError(f"unknown manifold {name!r} (catalogue: line, plane, ring, sphere, torus, moebius)")


def make_field(manifold: ManifoldSpec, kind: str, name: str | None = None, **params) -> VectorField:
    """Instantiate a catalogue vector field on a manifold.

    kinds: "constant" (components per intrinsic dim), "rotation_about_origin"
    (rigid rotation of a 2-D intrinsic plane about a centre point),
    "axis_rotation" (rigid rotation of the embedded manifold about a 3-D
    axis, pulled back through the Jacobian).
    """
    D = manifold.intrinsic_dim
    if kind == "constant":
        comp = np.asarray(params.get("components", [1.0] * D), dtype=float)
        if comp.shape != (D,):
            raise ValueError("constant field components must match intrinsic dim")
        fld = VectorField(name or "constant", lambda P: np.broadcast_to(comp, (len(np.atleast_2d(P)), D)).copy())
    elif kind == "rotation_about_origin":
        if D != 2:
            raise ValueError("rotation_about_origin needs a 2-D intrinsic space")
        centre = np.asarray(params.get("centre", [0.0, 0.0]), dtype=float)
        rate = float(params.get("rate", 1.0))

        def rot(P):
            P = np.atleast_2d(P) - centre
            return rate * np.stack([-P[:, 1], P[:, 0]], axis=1)

        fld = VectorField(name or "rotation_about_origin", rot)
    elif kind == "axis_rotation":
        if manifold.embed_dim != 3:
            raise ValueError("axis_rotation needs a 3-D embedding")
        axis = np.asarray(params.get("axis", [0.0, 0.0, 1.0]), dtype=float)
        axis = axis / np.linalg.norm(axis)
        rate = float(params.get("rate", 1.0))

        def pullback(P):
            P = np.atleast_2d(P)
            gpts = np.asarray(manifold.embed(P), dtype=float)
            J = np.asarray(manifold.jacobian(P), dtype=float)
            vel = rate * np.cross(np.broadcast_to(axis, gpts.shape), gpts)
            G = np.einsum("skd,ske->sde", J, J)
            rhs = np.einsum("skd,sk->sd", J, vel)
            return np.linalg.solve(G, rhs[..., None])[..., 0]

        fld = VectorField(name or "axis_rotation", pullback)
    else:
        raise ValueError(f"unknown field kind {kind!r} (catalogue: constant, rotation_about_origin, axis_rotation)")
    manifold.fields.append(fld)
    return fld


def manifold_from_json(doc: dict, arc_step: float) -> ManifoldSpec:
    """Load {"name": ..., params...} plus optional "fields": [{kind, name, ...}]."""
    doc = dict(doc)
    fields = doc.pop("fields", [])
    name = doc.pop("name")
    man = make_manifold(name, arc_step, **doc)
    for fdoc in fields:
        fdoc = dict(fdoc)
        make_field(man, fdoc.pop("kind"), fdoc.pop("name", None), **fdoc)
    return man
