"""Bone density estimation: whole-body mean HU, trabecular mean via
anterior-half erosion, and two-point muscle/fat normalization."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .frames import LocalFrame
from .grids import LabelMap, ROLE_FAT, ROLE_MUSCLE, Volume, check_paired_geometry

MIN_LABEL_VOXELS = 50
DEFAULT_EROSION_MM = 3.0


@dataclass(frozen=True)
class DensityFeatures:
    meanDen: float        # normalized units (fat -> 0, muscle -> 100)
    meanTrab: float
    raw_meanDen: float    # HU
    raw_meanTrab: float
    muscle_hu: float
    fat_hu: float


def mean_density(vol: Volume, lm: LabelMap, label: int,
                 min_voxels: int = MIN_LABEL_VOXELS) -> float:
    """Arithmetic mean HU over all voxels carrying ``label``."""
    check_paired_geometry(vol, lm)
    sel = lm.labels == label
    n = int(sel.sum())
    if n < min_voxels:
        raise ValueError(
            f"label {label} has {n} voxels, need at least {min_voxels}")
    return float(vol.data[sel].mean(dtype=np.float64))


def _ball_structure(radius_mm: float, spacing) -> np.ndarray:
    """Discrete anisotropy-aware ball: lattice offsets within ``radius_mm``."""
    sx, sy, sz = spacing
    nx = int(np.floor(radius_mm / sx + 1e-9))
    ny = int(np.floor(radius_mm / sy + 1e-9))
    nz = int(np.floor(radius_mm / sz + 1e-9))
    ox, oy, oz = np.meshgrid(np.arange(-nx, nx + 1) * sx,
                             np.arange(-ny, ny + 1) * sy,
                             np.arange(-nz, nz + 1) * sz, indexing="xy")
    # arranged (nz, ny, nx) to match the label array layout
    dist2 = (np.moveaxis(ox, -1, 0) ** 2 + np.moveaxis(oy, -1, 0) ** 2
             + np.moveaxis(oz, -1, 0) ** 2)
    return dist2 <= radius_mm ** 2 + 1e-6


def trabecular_region(lm: LabelMap, label: int, frame: LocalFrame,
                      erosion_radius_mm: float = DEFAULT_EROSION_MM) -> np.ndarray:
    """Boolean mask of the trabecular probe region: the body eroded by a
    discrete ball of ``erosion_radius_mm`` intersected with the anterior
    half-space through the centroid."""
    body = lm.labels == label
    if not body.any():
        raise ValueError(f"label {label} absent from the label map")
    if erosion_radius_mm < 0:
        raise ValueError("erosion radius must be nonnegative")
    if erosion_radius_mm > 0:
        # Work on the body's bounding box; the surrounding background makes
        # the cropped erosion identical to the full-grid one.
        lo = np.array([int(ax.min()) for ax in np.nonzero(body)])
        hi = np.array([int(ax.max()) for ax in np.nonzero(body)])
        steps = [int(np.floor(erosion_radius_mm / s + 1e-9))
                 for s in reversed(lm.spacing)]  # (z, y, x) order
        if any(hi[i] - lo[i] + 1 < 2 * steps[i] + 1 for i in range(3)):
            raise ValueError(
                f"{erosion_radius_mm} mm erosion annihilates label {label}; "
                f"radius exceeds the body's half-extent")
        crop = body[lo[0]:hi[0] + 1, lo[1]:hi[1] + 1, lo[2]:hi[2] + 1]
        structure = _ball_structure(erosion_radius_mm, lm.spacing)
        eroded_crop = ndimage.binary_erosion(crop, structure=structure, border_value=0)
        if not eroded_crop.any():
            raise ValueError(
                f"{erosion_radius_mm} mm erosion annihilates label {label}; "
                f"radius exceeds the body's half-extent")
        eroded = np.zeros_like(body)
        eroded[lo[0]:hi[0] + 1, lo[1]:hi[1] + 1, lo[2]:hi[2] + 1] = eroded_crop
    else:
        eroded = body

    idx = np.argwhere(eroded)
    coords = lm.geometry.world_coords(idx)
    anterior = (coords - frame.centroid_array) @ frame.ap > 0
    mask = np.zeros_like(body)
    mask[tuple(idx[anterior].T)] = True
    if not mask.any():
        raise ValueError(
            f"anterior half of the eroded body is empty for label {label}")
    return mask


def normalize(raw_hu: float, muscle_hu: float, fat_hu: float) -> float:
    """Two-point linear calibration: fat maps to 0, muscle to 100."""
    if muscle_hu <= fat_hu:
        raise ValueError(
            f"invalid reference pair: muscle {muscle_hu} must exceed fat {fat_hu}")
    return 100.0 * (raw_hu - fat_hu) / (muscle_hu - fat_hu)


def density_features(vol: Volume, lm: LabelMap, label: int, frame: LocalFrame,
                     erosion_radius_mm: float = DEFAULT_EROSION_MM) -> DensityFeatures:
    """Whole-body and trabecular densities normalized against the muscle/fat
    reference segmentations."""
    check_paired_geometry(vol, lm)
    refs = {}
    for role in (ROLE_MUSCLE, ROLE_FAT):
        ref_label = lm.label_for_role(role)
        if ref_label is None:
            raise ValueError(f"missing reference region: {role}")
        refs[role] = mean_density(vol, lm, ref_label, min_voxels=1)
    muscle_hu, fat_hu = refs[ROLE_MUSCLE], refs[ROLE_FAT]

    raw_den = mean_density(vol, lm, label)
    trab_mask = trabecular_region(lm, label, frame, erosion_radius_mm)
    raw_trab = float(vol.data[trab_mask].mean(dtype=np.float64))

    return DensityFeatures(
        meanDen=normalize(raw_den, muscle_hu, fat_hu),
        meanTrab=normalize(raw_trab, muscle_hu, fat_hu),
        raw_meanDen=raw_den,
        raw_meanTrab=raw_trab,
        muscle_hu=muscle_hu,
        fat_hu=fat_hu,
    )
