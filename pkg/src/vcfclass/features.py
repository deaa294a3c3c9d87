"""Assembly of the 36-feature classification table.

Measured features (18) are the height-compass and sagittal heights, level id,
contrasts, and the two normalized densities; longitudinal features (16) are
their per-year rates between consecutive studies of the same patient; the two
demographics complete the vector. Missing values are tracked in a boolean
mask and serialized as empty CSV fields (imputed values keep their mask bit,
recorded in the sidecar).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import densitometry, morphometry
from .frames import vertebra_frame
from .grids import (LabelMap, Volume, check_paired_geometry, load_labelmap,
                    load_volume, parse_vertebra_level)
from .manifest import (CohortManifest, NEOPLASTIC, StudyRecord,
                       load_manifest, years_between)
from .morphometry import CompassLayout

HEIGHT_COLUMNS = [
    "h_c", "h_a", "h_p", "h_l", "h_r", "h_avg", "h_avg_5",
    "contrastP", "contrastN", "contrastA", "vid",
    "Anterior", "Center", "Posterior", "manualMean", "meanH",
]
DENSITY_COLUMNS = ["meanDen", "meanTrab"]
MEASURED_COLUMNS = HEIGHT_COLUMNS + DENSITY_COLUMNS          # 18

# Rates exist for every measured feature except the level id and meanH.
RATE_BASE_COLUMNS = [c for c in MEASURED_COLUMNS if c not in ("vid", "meanH")]
RATE_COLUMNS = ["R_" + c for c in RATE_BASE_COLUMNS]         # 16
DEMOGRAPHIC_COLUMNS = ["Gender", "Age"]                      # 2
ALL_COLUMNS = MEASURED_COLUMNS + RATE_COLUMNS + DEMOGRAPHIC_COLUMNS   # 36

CONTRAST_COLUMNS = ("contrastP", "contrastN", "contrastA")

ID_COLUMNS = ["patient_id", "study_id", "vertebra"]
TRUTH_COLUMN = "truth"

CONDITIONS = ("measured", "longitudinal", "combined")

FIRST_STUDY_POLICIES = ("exclude", "zero", "carry")


def condition_columns(condition: str) -> list[str]:
    """Feature columns entering the classifier for one feature-set condition.
    Demographics ride along with every condition."""
    if condition == "measured":
        return MEASURED_COLUMNS + DEMOGRAPHIC_COLUMNS
    if condition == "longitudinal":
        return RATE_COLUMNS + DEMOGRAPHIC_COLUMNS
    if condition == "combined":
        return list(ALL_COLUMNS)
    raise ValueError(f"unknown condition {condition!r}; expected one of {CONDITIONS}")


def rate(current: float, previous: float, dt_years: float) -> float:
    """Per-year rate of change; NaN when either endpoint is missing."""
    if dt_years <= 0:
        raise ValueError(f"dt must be positive, got {dt_years}")
    if np.isnan(current) or np.isnan(previous):
        return np.nan
    return (current - previous) / dt_years


@dataclass(frozen=True)
class FeatureVector:
    patient_id: str
    study_id: str
    vertebra: int
    values: np.ndarray          # (36,) float64, NaN where missing
    mask: np.ndarray            # (36,) bool, True where not genuinely measured
    truth: str                  # 'O' | 'N'

    @property
    def instance_id(self) -> tuple[str, str, int]:
        return (self.patient_id, self.study_id, self.vertebra)


@dataclass
class FeatureTable:
    columns: list[str]
    rows: list[FeatureVector]
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.columns != ALL_COLUMNS:
            raise ValueError("feature table columns must follow the canonical order")
        seen = set()
        for r in self.rows:
            if r.instance_id in seen:
                raise ValueError(f"duplicate instance id {r.instance_id}")
            seen.add(r.instance_id)

    def __len__(self):
        return len(self.rows)

    @property
    def matrix(self) -> np.ndarray:
        return np.array([r.values for r in self.rows], dtype=np.float64)

    @property
    def mask(self) -> np.ndarray:
        return np.array([r.mask for r in self.rows], dtype=bool)

    @property
    def truth(self) -> np.ndarray:
        return np.array([r.truth for r in self.rows])

    @property
    def instance_ids(self) -> list[tuple[str, str, int]]:
        return [r.instance_id for r in self.rows]

    @property
    def patient_ids(self) -> np.ndarray:
        return np.array([r.patient_id for r in self.rows])


def _truth_code(value: str) -> str:
    return "N" if value == NEOPLASTIC else "O"


# ---------------------------------------------------------------------------
# per-study extraction

def measured_study_features(vol: Volume, lm: LabelMap, study: StudyRecord,
                            layout: CompassLayout = CompassLayout(),
                            erosion_radius_mm: float = densitometry.DEFAULT_EROSION_MM,
                            ) -> dict[int, dict[str, float]]:
    """Measured features for every vertebra in one study, keyed by label.

    All vertebrae are measured (unfractured ones supply contrast neighbors);
    contrasts are filled in across the study's level stack.
    """
    check_paired_geometry(vol, lm)
    per_label: dict[int, dict[str, float]] = {}
    h_avg_by_level: dict[int, float] = {}
    level_by_label: dict[int, int] = {}
    for label in lm.vertebra_labels():
        level = parse_vertebra_level(lm.legend[label])
        frame = vertebra_frame(lm, label)
        ch = morphometry.cell_heights(lm, label, frame, layout)
        feats = morphometry.regional_summaries(ch)
        feats.update(morphometry.sagittal_heights(lm, label, frame))
        dens = densitometry.density_features(vol, lm, label, frame, erosion_radius_mm)
        feats["meanDen"] = dens.meanDen
        feats["meanTrab"] = dens.meanTrab
        feats["vid"] = float(level)
        per_label[label] = feats
        level_by_label[label] = level
        h_avg_by_level[level] = feats["h_avg"]

    contrasts = morphometry.contrast_features(h_avg_by_level)
    for label, feats in per_label.items():
        feats.update(contrasts[level_by_label[label]])
    return per_label


def measured_features(study: StudyRecord, base_dir,
                      layout: CompassLayout = CompassLayout(),
                      erosion_radius_mm: float = densitometry.DEFAULT_EROSION_MM,
                      ) -> dict[int, dict[str, float]]:
    """Load a study's volume/label pair and measure every vertebra."""
    base = Path(base_dir)
    try:
        vol = load_volume(base / study.volume_path)
        lm = load_labelmap(base / study.labelmap_path)
        return measured_study_features(vol, lm, study, layout, erosion_radius_mm)
    except Exception as exc:
        raise RuntimeError(f"study {study.study_id}: {exc}") from exc


def demographics(study: StudyRecord) -> dict[str, float]:
    return {"Gender": 0.0 if study.gender == "F" else 1.0, "Age": float(study.age)}


# ---------------------------------------------------------------------------
# longitudinal assembly

def _build_row(study: StudyRecord, label: int, measured: dict[str, float],
               rates: dict[str, float], rate_mask: dict[str, bool]) -> FeatureVector:
    values = np.full(len(ALL_COLUMNS), np.nan)
    mask = np.zeros(len(ALL_COLUMNS), dtype=bool)
    demo = demographics(study)
    for i, col in enumerate(ALL_COLUMNS):
        if col in measured:
            values[i] = measured[col]
        elif col in rates:
            values[i] = rates[col]
            mask[i] = rate_mask.get(col, False)
        else:
            values[i] = demo[col]
        if np.isnan(values[i]):
            mask[i] = True
    return FeatureVector(patient_id=study.patient_id, study_id=study.study_id,
                         vertebra=label, values=values, mask=mask,
                         truth=_truth_code(study.vertebra_truth[label]))


def assemble(manifest: CohortManifest, base_dir, policy: str = "zero",
             layout: CompassLayout = CompassLayout(),
             erosion_radius_mm: float = densitometry.DEFAULT_EROSION_MM,
             manifest_path: str = "") -> FeatureTable:
    """One feature row per (fractured vertebra, study) instance.

    Rates compare against the same vertebra in the immediately preceding
    study. First-study instances follow ``policy``: 'exclude' drops the row,
    'zero' emits zero rates with their mask bits set, 'carry' emits zero
    rates treated as observed.
    """
    policy = policy.lower()
    if policy not in FIRST_STUDY_POLICIES:
        raise ValueError(f"unknown policy {policy!r}; expected one of {FIRST_STUDY_POLICIES}")
    rows: list[FeatureVector] = []
    for patient in manifest.patients:
        previous: dict[int, dict[str, float]] | None = None
        prev_date = None
        for study in patient.studies:
            measured = measured_features(study, base_dir, layout, erosion_radius_mm)
            for label in study.fractured_labels():
                if label not in measured:
                    raise RuntimeError(
                        f"study {study.study_id}: fractured label {label} "
                        f"absent from the label map legend")
                rates: dict[str, float] = {}
                rate_mask: dict[str, bool] = {}
                if previous is not None and label in previous:
                    dt_years = years_between(prev_date, study.acquisition_date)
                    for col in RATE_BASE_COLUMNS:
                        r = rate(measured[label][col], previous[label][col], dt_years)
                        rates["R_" + col] = r
                        rate_mask["R_" + col] = bool(np.isnan(r))
                else:
                    if policy == "exclude":
                        continue
                    flag = policy == "zero"
                    for col in RATE_BASE_COLUMNS:
                        rates["R_" + col] = 0.0
                        rate_mask["R_" + col] = flag
                rows.append(_build_row(study, label, measured[label], rates, rate_mask))
            previous = measured
            prev_date = study.acquisition_date
    return FeatureTable(columns=list(ALL_COLUMNS), rows=rows, provenance={
        "manifest": str(manifest_path),
        "policy": policy,
        "erosion_radius_mm": erosion_radius_mm,
        "r1_fraction": layout.r1_fraction,
        "r2_fraction": layout.r2_fraction,
    })


def assemble_from_path(manifest_path, policy: str = "zero",
                       layout: CompassLayout = CompassLayout(),
                       erosion_radius_mm: float = densitometry.DEFAULT_EROSION_MM,
                       ) -> FeatureTable:
    manifest_path = Path(manifest_path)
    manifest = load_manifest(manifest_path)
    return assemble(manifest, manifest_path.parent, policy, layout,
                    erosion_radius_mm, manifest_path=str(manifest_path))


# ---------------------------------------------------------------------------
# serialization

def save_table(table: FeatureTable, path) -> None:
    """CSV with canonical header, empty fields for missing values, truth last,
    plus a JSON sidecar carrying provenance and the imputation mask."""
    path = Path(path)
    lines = [",".join(ID_COLUMNS + ALL_COLUMNS + [TRUTH_COLUMN])]
    for r in table.rows:
        cells = [r.patient_id, r.study_id, str(r.vertebra)]
        for v in r.values:
            cells.append("" if np.isnan(v) else repr(float(v)))
        cells.append(r.truth)
        lines.append(",".join(cells))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")

    sidecar = {
        "provenance": table.provenance,
        "columns": ALL_COLUMNS,
        "mask": ["".join("1" if m else "0" for m in r.mask) for r in table.rows],
    }
    sidecar_path = path.with_suffix(path.suffix + ".meta.json")
    sidecar_path.write_text(json.dumps(sidecar, indent=2) + "\n", encoding="utf-8")


def load_table(path) -> FeatureTable:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"no such feature table: {path}")
    lines = path.read_text(encoding="utf-8").splitlines()
    header = lines[0].split(",")
    expected = ID_COLUMNS + ALL_COLUMNS + [TRUTH_COLUMN]
    if header != expected:
        raise ValueError(f"{path}: header does not match the canonical column order")

    sidecar_path = path.with_suffix(path.suffix + ".meta.json")
    mask_rows = None
    provenance = {}
    if sidecar_path.is_file():
        sidecar = json.loads(sidecar_path.read_text(encoding="utf-8"))
        mask_rows = sidecar.get("mask")
        provenance = sidecar.get("provenance", {})

    rows = []
    for i, line in enumerate(lines[1:]):
        cells = line.split(",")
        values = np.array([np.nan if c == "" else float(c)
                           for c in cells[3:3 + len(ALL_COLUMNS)]])
        if mask_rows is not None:
            mask = np.array([c == "1" for c in mask_rows[i]], dtype=bool)
        else:
            mask = np.isnan(values)
        truth = cells[-1]
        if truth not in ("O", "N"):
            raise ValueError(f"{path}: unknown truth label {truth!r}")
        rows.append(FeatureVector(patient_id=cells[0], study_id=cells[1],
                                  vertebra=int(cells[2]), values=values,
                                  mask=mask, truth=truth))
    return FeatureTable(columns=list(ALL_COLUMNS), rows=rows, provenance=provenance)
