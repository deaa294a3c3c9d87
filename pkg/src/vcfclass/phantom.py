"""Synthetic longitudinal spine cohorts with known geometry and density.

Vertebral bodies are elliptical cylinders whose top surface is modulated by
17 per-cell target heights (bilinear interpolation in polar coordinates, so
the height at each cell center equals the cell's target exactly). Cortical
bone is the shell of voxels within ``cortical_thickness`` of the body surface
(lattice distance transform); everything deeper is trabecular. Muscle and fat
reference blocks and a spinal-canal cylinder are rendered posterior to the
bodies. All randomness derives from (seed, patient_index, ...) so generation
is reproducible byte-for-byte and patients are independent.
"""

from __future__ import annotations

import datetime as dt
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy import ndimage

from .grids import (GridGeometry, LabelMap, Volume, ROLE_CANAL, ROLE_FAT,
                    ROLE_MUSCLE, save_labelmap, save_volume, vertebra_role)
from .frames import LocalFrame, make_frame
from .manifest import (CohortManifest, NEOPLASTIC, OSTEOPOROTIC, PatientEntry,
                       StudyRecord, UNFRACTURED, save_manifest)

N_CELLS = 17
MIN_CELL_HEIGHT_MM = 1.0

AIR_HU = -1000
CANAL_HU = 0
MUSCLE_HU = 50     # fixed reference tissue value
FAT_HU = -100      # fixed reference tissue value

MUSCLE_LABEL = 101
FAT_LABEL = 102
CANAL_LABEL = 103

# Anterior cell subset (center + anterior arcs of both rings) used for the
# default neoplastic focal lesion, so the anterior-half trabecular probe
# sees it.
ANTERIOR_LESION_CELLS = (0, 1, 2, 8, 9, 10, 16)

# Ring boundary fractions; must match the measurement side's defaults.
R1_FRACTION = 1.0 / 3.0
R2_FRACTION = 2.0 / 3.0


@dataclass(frozen=True)
class VertebraSpec:
    """Ground truth for one rendered vertebral body."""

    level_index: int
    body_radii: tuple[float, float]          # (anterior-posterior, left-right) mm
    cell_heights: tuple[float, ...]          # 17 target heights, mm
    trabecular_hu: float
    cortical_hu: float
    cortical_thickness: float
    noise_sd: float = 0.0
    cell_hu_delta: tuple[float, ...] = (0.0,) * N_CELLS  # focal lesion deposits

    def __post_init__(self):
        heights = tuple(float(h) for h in self.cell_heights)
        deltas = tuple(float(d) for d in self.cell_hu_delta)
        if len(heights) != N_CELLS or len(deltas) != N_CELLS:
            raise ValueError(f"cell arrays must have {N_CELLS} entries")
        if any(h <= 0 for h in heights):
            raise ValueError("all cell heights must be positive")
        if not (min(self.body_radii) > self.cortical_thickness > 0):
            raise ValueError("need radii > cortical_thickness > 0")
        if self.noise_sd < 0:
            raise ValueError("noise_sd must be nonnegative")
        object.__setattr__(self, "cell_heights", heights)
        object.__setattr__(self, "cell_hu_delta", deltas)
        object.__setattr__(self, "body_radii",
                           (float(self.body_radii[0]), float(self.body_radii[1])))


@dataclass(frozen=True)
class FocalLesion:
    cells: tuple[int, ...]
    hu_per_year: float       # deposited into the listed cells' trabecular HU

    def __post_init__(self):
        cells = tuple(int(c) for c in self.cells)
        if any(c < 0 or c >= N_CELLS for c in cells):
            raise ValueError(f"lesion cells out of range: {cells}")
        object.__setattr__(self, "cells", cells)


@dataclass(frozen=True)
class ProgressionModel:
    kind: str                                 # OSTEOPOROTIC | NEOPLASTIC
    height_rate: tuple[float, ...]            # mm/year per cell
    trabecular_rate: float                    # HU/year
    focal_lesion: FocalLesion | None = None

    def __post_init__(self):
        if self.kind not in (OSTEOPOROTIC, NEOPLASTIC):
            raise ValueError(f"unknown progression kind {self.kind!r}")
        if self.focal_lesion is not None and self.kind != NEOPLASTIC:
            raise ValueError("focal lesions are only valid for neoplastic progression")
        rates = tuple(float(r) for r in self.height_rate)
        if len(rates) != N_CELLS:
            raise ValueError(f"height_rate must have {N_CELLS} entries")
        object.__setattr__(self, "height_rate", rates)


@dataclass(frozen=True)
class CohortSpec:
    """Generation knobs for a synthetic cohort. Defaults give ~320 fractured
    instances (40 patients x 4 studies x 2 fractured vertebrae) with balanced
    classes."""

    n_patients: int = 40
    studies_per_patient: int | tuple[int, int] = 4
    study_interval: float = 0.5              # years between studies (jittered ±25%)
    fraction_neoplastic: float = 0.5
    vertebrae_per_patient: int = 3
    spacing: tuple[float, float, float] = (1.25, 1.25, 1.0)
    seed: int = 7
    noise_sd: float = 6.0

    def __post_init__(self):
        if self.n_patients < 1 or self.vertebrae_per_patient < 1:
            raise ValueError("counts must be >= 1")
        if isinstance(self.studies_per_patient, int):
            if self.studies_per_patient < 1:
                raise ValueError("studies_per_patient must be >= 1")
        else:
            lo, hi = self.studies_per_patient
            if lo < 1 or hi < lo:
                raise ValueError(f"bad studies range {self.studies_per_patient}")
        if not 0.0 <= self.fraction_neoplastic <= 1.0:
            raise ValueError("fraction_neoplastic must lie in [0, 1]")
        if self.study_interval <= 0:
            raise ValueError("study_interval must be positive")


def uniform_heights(height_mm: float) -> tuple[float, ...]:
    return (float(height_mm),) * N_CELLS


def wedge_heights(anterior_mm: float, posterior_mm: float) -> tuple[float, ...]:
    """Heights varying with the cosine of the clockwise-from-anterior azimuth,
    identical in both rings: anterior arcs get ``anterior_mm``, posterior arcs
    ``posterior_mm``, the center cell their midpoint."""
    mid = 0.5 * (anterior_mm + posterior_mm)
    half = 0.5 * (posterior_mm - anterior_mm)
    ring = [mid - half * np.cos(k * np.pi / 4.0) for k in range(8)]
    return tuple([mid] + ring + ring)


# ---------------------------------------------------------------------------
# rendering

def _ring_values(theta: np.ndarray, ring: np.ndarray) -> np.ndarray:
    """Piecewise-linear interpolation around a ring of 8 arc-center values.

    ``theta`` is the clockwise-from-anterior azimuth in radians.
    """
    t = (theta / (np.pi / 4.0)) % 8.0
    k0 = np.floor(t).astype(int) % 8
    frac = t - np.floor(t)
    return (1.0 - frac) * ring[k0] + frac * ring[(k0 + 1) % 8]


def height_field(spec: VertebraSpec, rho: np.ndarray, theta: np.ndarray) -> np.ndarray:
    """Target column height at normalized radius ``rho`` and clockwise azimuth
    ``theta``; equals the cell target exactly at each cell center."""
    h = np.asarray(spec.cell_heights)
    node1 = 0.5 * (R1_FRACTION + R2_FRACTION)   # inner-ring node radius
    node2 = 0.5 * (R2_FRACTION + 1.0)           # outer-ring node radius
    ring1 = _ring_values(theta, h[1:9])
    ring2 = _ring_values(theta, h[9:17])

    out = np.empty_like(rho)
    inner = rho <= node1
    mid = (rho > node1) & (rho <= node2)
    outer = rho > node2
    w = np.clip(rho / node1, 0.0, 1.0)
    out[inner] = (1.0 - w[inner]) * h[0] + w[inner] * ring1[inner]
    w2 = (rho - node1) / (node2 - node1)
    out[mid] = (1.0 - w2[mid]) * ring1[mid] + w2[mid] * ring2[mid]
    out[outer] = ring2[outer]
    return out


def cell_index_field(rho: np.ndarray, theta: np.ndarray,
                     r1_fraction: float = R1_FRACTION,
                     r2_fraction: float = R2_FRACTION) -> np.ndarray:
    """Compass cell index (0..16) for normalized radius and clockwise azimuth."""
    arc = np.floor(((theta + np.pi / 8.0) / (np.pi / 4.0))).astype(int) % 8
    cell = np.where(rho < r1_fraction, 0,
                    np.where(rho < r2_fraction, 1 + arc, 9 + arc))
    return cell


def _frame_coords(grid: GridGeometry, frame: LocalFrame):
    """Broadcast (a, l, s) local coordinates of all voxel centers, shape (nz, ny, nx)."""
    cx, cy, cz = frame.centroid
    dx = (grid.axis_coords(0) - cx)[None, None, :]
    dy = (grid.axis_coords(1) - cy)[None, :, None]
    dz = (grid.axis_coords(2) - cz)[:, None, None]

    def project(axis):
        return axis[0] * dx + axis[1] * dy + axis[2] * dz

    return project(frame.axis_ap), project(frame.axis_lr), project(frame.axis_si)


def render_vertebra(spec: VertebraSpec, frame: LocalFrame, grid: GridGeometry,
                    label: int = 1, rng: np.random.Generator | None = None):
    """Rasterize one vertebral body onto ``grid``.

    Returns ``(hu, labels)`` full-grid arrays: float64 HU values (0 outside
    the body) and a uint16 patch holding ``label`` at body voxels. The body
    bottom sits at ``centroid - max(cell_heights)/2`` along the superior axis
    and each column rises to its interpolated target height.
    """
    a, l, s = _frame_coords(grid, frame)
    r_ap, r_lr = spec.body_radii
    # For an ellipse, sqrt of the implicit value is exactly radius/boundary-radius.
    rho = np.sqrt((a / r_ap) ** 2 + (l / r_lr) ** 2)
    theta = np.arctan2(-l, a)
    h = height_field(spec, rho, theta)
    z0 = -max(spec.cell_heights) / 2.0
    body = (rho <= 1.0) & (s >= z0) & (s < z0 + h)
    if not body.any():
        raise ValueError("vertebra body does not intersect the grid")
    face = np.zeros_like(body)
    face[0, :, :] = face[-1, :, :] = True
    face[:, 0, :] = face[:, -1, :] = True
    face[:, :, 0] = face[:, :, -1] = True
    if (body & face).any():
        raise ValueError("vertebra body exceeds grid bounds")

    sampling = (grid.spacing[2], grid.spacing[1], grid.spacing[0])
    depth = ndimage.distance_transform_edt(body, sampling=sampling)
    cortical = body & (depth <= spec.cortical_thickness + 1e-6)

    hu = np.zeros(body.shape, dtype=np.float64)
    deltas = np.asarray(spec.cell_hu_delta)
    if np.any(deltas != 0.0):
        cells = cell_index_field(rho, theta)
        hu[body] = spec.trabecular_hu + deltas[cells[body]]
    else:
        hu[body] = spec.trabecular_hu
    hu[cortical] = spec.cortical_hu
    if spec.noise_sd > 0:
        if rng is None:
            raise ValueError("noise_sd > 0 requires a random generator")
        hu[body] += rng.normal(0.0, spec.noise_sd, size=int(body.sum()))

    labels = np.zeros(body.shape, dtype=np.uint16)
    labels[body] = label
    return hu, labels


def advance(spec: VertebraSpec, model: ProgressionModel, dt_years: float) -> VertebraSpec:
    """Progress a vertebra spec by ``dt_years``; heights saturate at 1 mm."""
    if dt_years < 0:
        raise ValueError("dt must be nonnegative")
    heights = tuple(max(MIN_CELL_HEIGHT_MM, h + r * dt_years)
                    for h, r in zip(spec.cell_heights, model.height_rate))
    deltas = list(spec.cell_hu_delta)
    if model.focal_lesion is not None:
        for c in model.focal_lesion.cells:
            deltas[c] += model.focal_lesion.hu_per_year * dt_years
    return replace(spec, cell_heights=heights,
                   trabecular_hu=spec.trabecular_hu + model.trabecular_rate * dt_years,
                   cell_hu_delta=tuple(deltas))


# ---------------------------------------------------------------------------
# cohort assembly

def _even(x: float) -> int:
    """Nearest even integer; keeps noise-free HU exact under halving."""
    return int(2 * round(x / 2.0))


@dataclass
class _PatientPlan:
    patient_id: str
    kind: str | None                 # fracture etiology, None for all-unfractured
    gender: str
    age0: float
    dates: list[dt.date]
    base_specs: list[VertebraSpec]   # baseline per vertebra
    models: list[ProgressionModel | None]
    truth: dict[int, str]


def _rng(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, *key]))


def _plan_patient(spec: CohortSpec, idx: int, kind: str | None) -> _PatientPlan:
    rng = _rng(spec.seed, idx, 0)
    gender = "F" if rng.random() < 0.5 else "M"
    age0 = float(np.clip(rng.normal(57.0, 15.0), 25.0, 90.0))

    if isinstance(spec.studies_per_patient, int):
        n_studies = spec.studies_per_patient
    else:
        lo, hi = spec.studies_per_patient
        n_studies = int(rng.integers(lo, hi + 1))
    start = dt.date(2016, 1, 1) + dt.timedelta(days=int(rng.integers(0, 1461)))
    dates = [start]
    for _ in range(n_studies - 1):
        gap_years = spec.study_interval * float(rng.uniform(0.75, 1.25))
        dates.append(dates[-1] + dt.timedelta(days=max(28, round(gap_years * 365.25))))

    base_specs: list[VertebraSpec] = []
    models: list[ProgressionModel | None] = []
    truth: dict[int, str] = {}
    for j in range(spec.vertebrae_per_patient):
        label = j + 1
        base_h = float(rng.uniform(20.0, 24.0))
        radii = (float(rng.uniform(15.0, 17.0)), float(rng.uniform(12.0, 14.0)))
        trab0 = _even(rng.normal(180.0, 8.0) if kind == NEOPLASTIC
                      else rng.normal(120.0, 8.0))
        vspec = VertebraSpec(
            level_index=10 + j, body_radii=radii,
            cell_heights=uniform_heights(base_h),
            trabecular_hu=trab0, cortical_hu=400, cortical_thickness=3.0,
            noise_sd=spec.noise_sd)
        # The topmost vertebra stays unfractured and serves as a contrast neighbor.
        if j == 0 or kind is None:
            truth[label] = UNFRACTURED
            models.append(None)
            base_specs.append(vspec)
            continue
        truth[label] = kind
        jitter = rng.normal(0.0, 0.3, N_CELLS)
        if kind == OSTEOPOROTIC:
            heights = tuple(max(MIN_CELL_HEIGHT_MM, 0.82 * base_h + g) for g in jitter)
            rate = -(1.6 + 0.8 * rng.random())
            model = ProgressionModel(
                kind=kind,
                height_rate=tuple(rate + float(g) for g in rng.normal(0.0, 0.1, N_CELLS)),
                trabecular_rate=-(18.0 + 8.0 * rng.random()))
            vspec = replace(vspec, cell_heights=heights)
        else:
            lesion_cells = ANTERIOR_LESION_CELLS
            heights = tuple(
                max(MIN_CELL_HEIGHT_MM,
                    (0.72 if c in lesion_cells else 0.94) * base_h + g)
                for c, g in enumerate(jitter))
            # Blastic (density-increasing) foci by default; lytic lesions are
            # supported through ProgressionModel but keep the default cohort
            # cleanly separable.
            lesion_sign = 1.0
            deltas = tuple(lesion_sign * 60.0 if c in lesion_cells else 0.0
                           for c in range(N_CELLS))
            model = ProgressionModel(
                kind=kind,
                height_rate=tuple(-(3.0 + rng.random()) if c in lesion_cells else -0.4
                                  for c in range(N_CELLS)),
                trabecular_rate=2.0 + 2.0 * rng.random(),
                focal_lesion=FocalLesion(cells=lesion_cells,
                                         hu_per_year=lesion_sign * (100.0 + 40.0 * rng.random())))
            vspec = replace(vspec, cell_heights=heights, cell_hu_delta=deltas)
        base_specs.append(vspec)
        models.append(model)
    return _PatientPlan(patient_id=f"P{idx:03d}", kind=kind, gender=gender,
                        age0=age0, dates=dates, base_specs=base_specs,
                        models=models, truth=truth)


def _study_grid(spec: CohortSpec, plan: _PatientPlan):
    """Fixed per-patient grid sized from the baseline geometry, plus the world
    anchor (centroid) of each vertebra slot and the reference-region boxes."""
    margin = 5.0
    r_ap_max = max(s.body_radii[0] for s in plan.base_specs)
    r_lr_max = max(s.body_radii[1] for s in plan.base_specs)
    slot = max(max(s.cell_heights) for s in plan.base_specs) + 6.0

    canal_r, canal_gap = 4.0, 2.0
    canal_y = -(r_ap_max + canal_gap + canal_r)
    muscle = dict(x=(-11.0, 11.0), y=(canal_y - canal_r - 12.0, canal_y - canal_r - 2.0))
    fat = dict(x=(-11.0, 11.0), y=(muscle["y"][0] - 12.0, muscle["y"][0] - 2.0))

    x_min, x_max = -r_lr_max - margin, r_lr_max + margin
    y_min, y_max = fat["y"][0] - margin, r_ap_max + margin
    n_vert = len(plan.base_specs)
    z_min, z_max = -margin, n_vert * slot + margin

    sx, sy, sz = spec.spacing
    dims = (int(np.ceil((x_max - x_min) / sx)) + 1,
            int(np.ceil((y_max - y_min) / sy)) + 1,
            int(np.ceil((z_max - z_min) / sz)) + 1)
    grid = GridGeometry(dims=dims, spacing=spec.spacing, origin=(x_min, y_min, z_min))
    centroids = [(0.0, 0.0, (j + 0.5) * slot) for j in range(n_vert)]
    return grid, centroids, dict(canal=dict(y=canal_y, r=canal_r,
                                            z=(0.0, n_vert * slot)),
                                 muscle=muscle, fat=fat)


def _render_background(grid: GridGeometry, layout):
    """Air-filled canvas with the canal cylinder and muscle/fat reference blocks."""
    hu = np.full([grid.dims[2], grid.dims[1], grid.dims[0]], AIR_HU, dtype=np.float64)
    labels = np.zeros(hu.shape, dtype=np.uint16)
    legend: dict[int, str] = {}

    xs = grid.axis_coords(0)[None, None, :]
    ys = grid.axis_coords(1)[None, :, None]
    zs = grid.axis_coords(2)[:, None, None]

    canal = layout["canal"]
    canal_mask = (((xs - 0.0) ** 2 + (ys - canal["y"]) ** 2 <= canal["r"] ** 2)
                  & (zs >= canal["z"][0]) & (zs <= canal["z"][1]))
    hu[canal_mask] = CANAL_HU
    labels[canal_mask] = CANAL_LABEL
    legend[CANAL_LABEL] = ROLE_CANAL

    for name, lab, value in (("muscle", MUSCLE_LABEL, MUSCLE_HU),
                             ("fat", FAT_LABEL, FAT_HU)):
        box = layout[name]
        mask = ((xs >= box["x"][0]) & (xs <= box["x"][1])
                & (ys >= box["y"][0]) & (ys <= box["y"][1])
                & (zs >= canal["z"][0]) & (zs <= canal["z"][1]))
        hu[mask] = value
        labels[mask] = lab
        legend[lab] = ROLE_MUSCLE if name == "muscle" else ROLE_FAT

    return hu, labels, legend


def _paste_vertebra(hu, labels, vspec: VertebraSpec, frame: LocalFrame,
                    grid: GridGeometry, label: int, rng) -> None:
    """Render one vertebra on a lattice-aligned crop of ``grid`` and paste it.

    The crop shares voxel centers with the parent grid, so the result is
    identical to rendering on the full grid.
    """
    cx, cy, cz = frame.centroid
    r_ap, r_lr = vspec.body_radii
    half_h = max(vspec.cell_heights) / 2.0
    sx, sy, sz = grid.spacing
    ox, oy, oz = grid.origin

    def span(center, reach, o, s, n):
        lo = max(0, int(np.floor((center - reach - o) / s)) - 2)
        hi = min(n - 1, int(np.ceil((center + reach - o) / s)) + 2)
        return lo, hi

    ix0, ix1 = span(cx, r_lr, ox, sx, grid.dims[0])
    iy0, iy1 = span(cy, r_ap, oy, sy, grid.dims[1])
    iz0, iz1 = span(cz, half_h, oz, sz, grid.dims[2])
    crop = GridGeometry(
        dims=(ix1 - ix0 + 1, iy1 - iy0 + 1, iz1 - iz0 + 1),
        spacing=grid.spacing,
        origin=(ox + ix0 * sx, oy + iy0 * sy, oz + iz0 * sz))
    vhu, vlab = render_vertebra(vspec, frame, crop, label=label, rng=rng)
    body = vlab > 0
    view_hu = hu[iz0:iz1 + 1, iy0:iy1 + 1, ix0:ix1 + 1]
    view_lab = labels[iz0:iz1 + 1, iy0:iy1 + 1, ix0:ix1 + 1]
    view_hu[body] = vhu[body]
    view_lab[body] = label


def generate_cohort(spec: CohortSpec, out_dir) -> CohortManifest:
    """Write a full synthetic cohort (volumes, label maps, manifest.json) under
    ``out_dir`` and return the manifest. Deterministic for a given seed."""
    if spec.vertebrae_per_patient < 1:
        raise ValueError("zero vertebrae requested")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    order = _rng(spec.seed, 0, 9).permutation(spec.n_patients)
    n_neo = int(round(spec.fraction_neoplastic * spec.n_patients))
    neoplastic_patients = set(int(i) for i in order[:n_neo])

    patients = []
    for idx in range(spec.n_patients):
        kind = NEOPLASTIC if idx in neoplastic_patients else OSTEOPOROTIC
        plan = _plan_patient(spec, idx, kind)
        grid, centroids, layout = _study_grid(spec, plan)
        pdir = out_dir / plan.patient_id
        pdir.mkdir(exist_ok=True)

        vspecs = list(plan.base_specs)
        studies = []
        for s_idx, date in enumerate(plan.dates):
            if s_idx > 0:
                dt_years = (date - plan.dates[s_idx - 1]).days / 365.25
                vspecs = [v if m is None else advance(v, m, dt_years)
                          for v, m in zip(vspecs, plan.models)]
            hu, labels, legend = _render_background(grid, layout)
            for j, (vspec, centroid) in enumerate(zip(vspecs, centroids)):
                label = j + 1
                frame = make_frame(centroid, (0.0, 0.0, 1.0), (0.0, 1.0, 0.0))
                rng = _rng(spec.seed, idx, 100 + s_idx, j)
                _paste_vertebra(hu, labels, vspec, frame, grid, label, rng)
                legend[label] = vertebra_role(vspec.level_index)

            hu_int = np.clip(np.rint(hu), -1024, 3071).astype(np.int16)
            vol = Volume(geometry=grid, data=hu_int)
            lm = LabelMap(geometry=grid, labels=labels, legend=legend)
            vol_rel = f"{plan.patient_id}/S{s_idx:02d}.vvol"
            lbl_rel = f"{plan.patient_id}/S{s_idx:02d}.vlbl"
            save_volume(vol, out_dir / vol_rel)
            save_labelmap(lm, out_dir / lbl_rel)
            studies.append(StudyRecord(
                study_id=f"{plan.patient_id}-S{s_idx:02d}",
                patient_id=plan.patient_id,
                acquisition_date=date,
                age=plan.age0 + (date - plan.dates[0]).days / 365.25,
                gender=plan.gender,
                volume_path=vol_rel,
                labelmap_path=lbl_rel,
                vertebra_truth=dict(plan.truth),
            ))
        patients.append(PatientEntry(patient_id=plan.patient_id, studies=tuple(studies)))

    manifest = CohortManifest(patients=tuple(patients))
    save_manifest(manifest, out_dir / "manifest.json")
    return manifest
