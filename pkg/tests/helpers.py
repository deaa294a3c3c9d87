"""Shared fixtures-in-code: single-vertebra phantom builders, tree hashing,
and the independent oracles (dense-QP projected gradient, exact hypergeometric
enumeration) used to cross-check the production paths."""

from __future__ import annotations

import hashlib
from fractions import Fraction
from math import comb
from pathlib import Path

import numpy as np

from vcfclass.frames import make_frame
from vcfclass.grids import GridGeometry, LabelMap, Volume
from vcfclass.phantom import VertebraSpec, render_vertebra

WORLD_FRAME = make_frame((0.0, 0.0, 0.0), (0.0, 0.0, 1.0), (0.0, 1.0, 0.0))


def single_vertebra_grid(spacing=(1.0, 1.0, 1.0), with_refs=False) -> GridGeometry:
    sx, sy, sz = spacing
    ny = 64 if with_refs else 48
    oy = -(ny - 8) * sy / 2 - (16 * sy if with_refs else 0)
    return GridGeometry(dims=(int(48 / sx) + 1, int(ny), int(44 / sz) + 1),
                        spacing=spacing,
                        origin=(-24.0 + sx / 2, oy, -22.0 + sz / 2))


def body_spec(heights, trabecular_hu=150, cortical_hu=400, cortical_thickness=3.0,
              noise_sd=0.0, radii=(16.0, 13.0), **kw) -> VertebraSpec:
    return VertebraSpec(level_index=12, body_radii=radii, cell_heights=heights,
                        trabecular_hu=trabecular_hu, cortical_hu=cortical_hu,
                        cortical_thickness=cortical_thickness, noise_sd=noise_sd, **kw)


def render_single(spec: VertebraSpec, grid: GridGeometry | None = None,
                  frame=WORLD_FRAME, with_refs=False, rng=None):
    """Render one vertebra (label 1) plus optional muscle/fat blocks; returns
    (Volume, LabelMap, frame)."""
    if grid is None:
        grid = single_vertebra_grid(with_refs=with_refs)
    hu, lab = render_vertebra(spec, frame, grid, label=1, rng=rng)
    full = np.where(lab > 0, hu, -1000.0)
    labels = lab.copy()
    legend = {1: f"VERTEBRA:{spec.level_index}"}
    if with_refs:
        ys = grid.axis_coords(1)[None, :, None]
        r_ap = spec.body_radii[0]
        muscle = np.broadcast_to((ys >= -r_ap - 14) & (ys <= -r_ap - 6), full.shape) & (labels == 0)
        fat = np.broadcast_to((ys >= -r_ap - 24) & (ys <= -r_ap - 16), full.shape) & (labels == 0)
        full[muscle] = 50
        labels[muscle] = 101
        legend[101] = "MUSCLE_REF"
        full[fat] = -100
        labels[fat] = 102
        legend[102] = "FAT_REF"
    vol = Volume(geometry=grid, data=np.clip(np.rint(full), -1024, 3071).astype(np.int16))
    lm = LabelMap(geometry=grid, labels=labels, legend=legend)
    return vol, lm, frame


def column_extents(labels: np.ndarray, label: int, spacing_z: float) -> np.ndarray:
    """Per-column closed-interval z extent of a label patch; the brute-force
    height oracle (independent of the compass code)."""
    body = labels == label
    nz, ny, nx = body.shape
    out = []
    for iy in range(ny):
        for ix in range(nx):
            zs = np.flatnonzero(body[:, iy, ix])
            if zs.size:
                out.append((zs.max() - zs.min()) * spacing_z + spacing_z)
    return np.array(out)


def tree_hash(root) -> str:
    h = hashlib.sha256()
    for p in sorted(Path(root).rglob("*")):
        if p.is_file():
            h.update(str(p.relative_to(root)).encode())
            h.update(p.read_bytes())
    return h.hexdigest()


# ---------------------------------------------------------------------------
# dense-QP projected-gradient oracle for the SVM dual

def _project_box_hyperplane(v: np.ndarray, y: np.ndarray, C: float) -> np.ndarray:
    """Euclidean projection onto {0 <= a <= C, y.a = 0} for y in {-1, +1}^n.

    a(lam) = clip(v + lam*y, 0, C) makes g(lam) = y.a(lam) piecewise linear and
    nondecreasing; the root is found exactly on the breakpoint grid.
    """
    bps = np.unique(np.concatenate([-v * y, (C - v) * y]))
    a_bp = np.clip(v[None, :] + bps[:, None] * y[None, :], 0.0, C)
    g = a_bp @ y
    if g[0] >= 0:
        lam = bps[0]
    elif g[-1] <= 0:
        lam = bps[-1]
    else:
        k = int(np.searchsorted(g > 0, True)) - 1
        g0, g1 = g[k], g[k + 1]
        lam = bps[k] if g1 == g0 else bps[k] + (bps[k + 1] - bps[k]) * (-g0) / (g1 - g0)
    return np.clip(v + lam * y, 0.0, C)


def qp_dual_oracle(K: np.ndarray, y: np.ndarray, C: float,
                   max_iters: int = 20000, rel_tol: float = 1e-10) -> np.ndarray:
    """Brute-force projected-gradient ascent on the SVM dual."""
    n = y.size
    Q = K * np.outer(y, y)
    lr = 1.0 / max(1.0, float(np.linalg.norm(Q, 2)))
    alpha = np.zeros(n)
    prev = -np.inf
    for it in range(max_iters):
        alpha = _project_box_hyperplane(alpha + lr * (1.0 - Q @ alpha), y, C)
        if it % 200 == 199:
            obj = alpha.sum() - 0.5 * alpha @ Q @ alpha
            if abs(obj - prev) <= rel_tol * max(1.0, abs(obj)):
                break
            prev = obj
    return alpha


# ---------------------------------------------------------------------------
# exact hypergeometric enumeration oracle for the Fisher test

def fisher_enumeration_oracle(table, convention: str = "mass") -> Fraction:
    """Full enumeration with exact rational arithmetic and the same tie
    conventions as the production test (1e-7 relative tie band)."""
    (a, b), (c, d) = [[int(x) for x in row] for row in table]
    r1, r2 = a + b, c + d
    c1 = a + c
    n = r1 + r2
    if min(r1, r2, c1, b + d) == 0:
        return Fraction(1)
    lo, hi = max(0, c1 - r2), min(r1, c1)
    w_obs = comb(r1, a) * comb(r2, c1 - a)
    upper = Fraction(10**7 + 1, 10**7)        # observed * (1 + 1e-7)
    lower = Fraction(10**7, 10**7 + 1)
    strict = 0
    ties = 0
    for x in range(lo, hi + 1):
        w = comb(r1, x) * comb(r2, c1 - x)
        ratio = Fraction(w, w_obs)
        if ratio > upper:                     # strictly more probable
            continue
        if ratio >= lower:                    # within the +-1e-7 tie band
            ties += w
        else:
            strict += w
    den = comb(n, c1)
    if convention == "mass":
        return Fraction(strict + ties, den)
    return Fraction(2 * strict + ties, 2 * den)
