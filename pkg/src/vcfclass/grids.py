"""Voxel grid containers (HU volumes, label maps) and their on-disk formats.

A volume is stored as a two-file pair: a UTF-8 key-value header (``.vvol``)
plus a raw little-endian int16 payload, x-fastest then y then z. Label maps
(``.vlbl``) use the same header shape with a uint16 payload and extra
``label`` lines mapping label values to semantic roles.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import ndimage

SCHEMA_VERSION = 1

HU_MIN = -1024
HU_MAX = 3071

# Legend role strings. Vertebra roles carry their level id, e.g. "VERTEBRA:12".
ROLE_MUSCLE = "MUSCLE_REF"
ROLE_FAT = "FAT_REF"
ROLE_CANAL = "CANAL"
ROLE_VERTEBRA_PREFIX = "VERTEBRA:"


class FormatError(ValueError):
    """Raised when a grid file violates the VVOL/VLBL format contract."""


def vertebra_role(level_index: int) -> str:
    return f"{ROLE_VERTEBRA_PREFIX}{int(level_index)}"


def parse_vertebra_level(role: str) -> int | None:
    """Level id encoded in a legend role, or None for non-vertebra roles."""
    if role.startswith(ROLE_VERTEBRA_PREFIX):
        return int(role[len(ROLE_VERTEBRA_PREFIX):])
    return None


@dataclass(frozen=True)
class GridGeometry:
    """Shared lattice description: voxel counts, spacing (mm), world origin (mm).

    ``origin`` is the world position of the center of voxel (0, 0, 0).
    """

    dims: tuple[int, int, int]        # (nx, ny, nz)
    spacing: tuple[float, float, float]
    origin: tuple[float, float, float]

    def __post_init__(self):
        if len(self.dims) != 3 or any(int(d) <= 0 for d in self.dims):
            raise FormatError(f"dims must be three positive counts, got {self.dims}")
        if len(self.spacing) != 3 or any(s <= 0 for s in self.spacing):
            raise FormatError(f"spacing must be three positive lengths, got {self.spacing}")
        object.__setattr__(self, "dims", tuple(int(d) for d in self.dims))
        object.__setattr__(self, "spacing", tuple(float(s) for s in self.spacing))
        object.__setattr__(self, "origin", tuple(float(o) for o in self.origin))

    @property
    def voxel_count(self) -> int:
        nx, ny, nz = self.dims
        return nx * ny * nz

    def axis_coords(self, axis: int) -> np.ndarray:
        """World coordinates of voxel centers along one axis (0=x, 1=y, 2=z)."""
        return self.origin[axis] + self.spacing[axis] * np.arange(self.dims[axis])

    def world_coords(self, index_zyx: np.ndarray) -> np.ndarray:
        """World positions (n, 3) xyz for an (n, 3) array of (iz, iy, ix) indices."""
        idx_xyz = index_zyx[:, ::-1].astype(np.float64)
        return np.asarray(self.origin) + idx_xyz * np.asarray(self.spacing)

    def same_lattice(self, other: "GridGeometry") -> bool:
        return (self.dims == other.dims and self.spacing == other.spacing
                and self.origin == other.origin)


def _as_locked(arr: np.ndarray, dtype, dims) -> np.ndarray:
    nx, ny, nz = dims
    out = np.ascontiguousarray(arr, dtype=dtype).reshape(nz, ny, nx)
    out.flags.writeable = False
    return out


@dataclass(frozen=True)
class Volume:
    """HU samples on a regular grid. ``data`` is indexed [iz, iy, ix]."""

    geometry: GridGeometry
    data: np.ndarray = field(repr=False)

    def __post_init__(self):
        data = _as_locked(self.data, np.int16, self.geometry.dims)
        object.__setattr__(self, "data", data)
        lo, hi = int(data.min(initial=0)), int(data.max(initial=0))
        if lo < HU_MIN or hi > HU_MAX:
            raise FormatError(f"HU samples out of range [{HU_MIN}, {HU_MAX}]: found [{lo}, {hi}]")

    @property
    def dims(self):
        return self.geometry.dims

    @property
    def spacing(self):
        return self.geometry.spacing

    @property
    def origin(self):
        return self.geometry.origin


@dataclass(frozen=True)
class LabelMap:
    """Integer identity per voxel (0 = background) with a role legend."""

    geometry: GridGeometry
    labels: np.ndarray = field(repr=False)
    legend: dict[int, str] = field(default_factory=dict)

    def __post_init__(self):
        labels = _as_locked(self.labels, np.uint16, self.geometry.dims)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "legend", {int(k): str(v) for k, v in self.legend.items()})
        present = set(int(v) for v in np.unique(labels)) - {0}
        missing = sorted(present - set(self.legend))
        if missing:
            raise FormatError(f"labels {missing} present in grid but absent from legend")

    @property
    def dims(self):
        return self.geometry.dims

    @property
    def spacing(self):
        return self.geometry.spacing

    @property
    def origin(self):
        return self.geometry.origin

    def vertebra_labels(self) -> list[int]:
        """Label values whose legend role encodes a vertebra, sorted by level."""
        out = [(parse_vertebra_level(role), lab) for lab, role in self.legend.items()
               if parse_vertebra_level(role) is not None]
        return [lab for _, lab in sorted(out)]

    def label_for_role(self, role: str) -> int | None:
        for lab, r in self.legend.items():
            if r == role:
                return lab
        return None


def check_paired_geometry(vol: Volume, lm: LabelMap) -> None:
    if not vol.geometry.same_lattice(lm.geometry):
        raise FormatError(
            f"label map geometry {lm.geometry} does not match paired volume {vol.geometry}")


def check_vertebra_connectivity(lm: LabelMap) -> None:
    """Each vertebra label must form a single 26-connected component."""
    structure = np.ones((3, 3, 3), dtype=bool)
    for lab in lm.vertebra_labels():
        _, n = ndimage.label(lm.labels == lab, structure=structure)
        if n != 1:
            raise FormatError(
                f"vertebra label {lab} splits into {n} 26-connected components")


# ---------------------------------------------------------------------------
# header parsing/writing

def _fmt_floats(values) -> str:
    return " ".join(repr(float(v)) for v in values)


def _header_lines(geometry: GridGeometry, data_file: str, dtype: str) -> list[str]:
    nx, ny, nz = geometry.dims
    return [
        f"schema_version {SCHEMA_VERSION}",
        f"dims {nx} {ny} {nz}",
        f"spacing_mm {_fmt_floats(geometry.spacing)}",
        f"origin_mm {_fmt_floats(geometry.origin)}",
        f"data_file {data_file}",
        f"dtype {dtype}",
    ]


def _parse_header(path: Path) -> dict:
    if not path.is_file():
        raise FileNotFoundError(f"no such header file: {path}")
    fields: dict = {"label": {}}
    for lineno, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, _, rest = line.partition(" ")
        if key == "label":
            value, _, role = rest.partition(" ")
            if not role:
                raise FormatError(f"{path}:{lineno}: legend line needs 'label <int> <role>'")
            fields["label"][int(value)] = role.strip()
        elif key in ("schema_version", "dims", "spacing_mm", "origin_mm", "data_file", "dtype"):
            fields[key] = rest.strip()
        else:
            raise FormatError(f"{path}:{lineno}: unknown header key {key!r}")
    for required in ("schema_version", "dims", "spacing_mm", "origin_mm", "data_file", "dtype"):
        if required not in fields:
            raise FormatError(f"{path}: missing header key {required!r}")
    if int(fields["schema_version"]) != SCHEMA_VERSION:
        raise FormatError(
            f"{path}: unsupported schema_version {fields['schema_version']}")
    return fields


def _read_payload(header_path: Path, fields: dict, dtype_tag: str, np_dtype) -> np.ndarray:
    if fields["dtype"] != dtype_tag:
        raise FormatError(f"{header_path}: expected dtype {dtype_tag}, got {fields['dtype']}")
    dims = tuple(int(t) for t in fields["dims"].split())
    geometry = GridGeometry(
        dims=dims,
        spacing=tuple(float(t) for t in fields["spacing_mm"].split()),
        origin=tuple(float(t) for t in fields["origin_mm"].split()),
    )
    payload_path = header_path.parent / fields["data_file"]
    if not payload_path.is_file():
        raise FileNotFoundError(f"missing payload file: {payload_path}")
    raw = payload_path.read_bytes()
    expected = geometry.voxel_count * 2
    if len(raw) != expected:
        raise FormatError(
            f"{payload_path}: payload is {len(raw)} bytes, header implies {expected}")
    data = np.frombuffer(raw, dtype=np_dtype)
    return geometry, data


def load_volume(path) -> Volume:
    path = Path(path)
    fields = _parse_header(path)
    geometry, data = _read_payload(path, fields, "int16le", "<i2")
    return Volume(geometry=geometry, data=data)


def save_volume(vol: Volume, path) -> None:
    path = Path(path)
    data_file = path.name + ".raw"
    lines = _header_lines(vol.geometry, data_file, "int16le")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    (path.parent / data_file).write_bytes(
        np.ascontiguousarray(vol.data, dtype="<i2").tobytes())


def load_labelmap(path) -> LabelMap:
    path = Path(path)
    fields = _parse_header(path)
    geometry, data = _read_payload(path, fields, "uint16le", "<u2")
    lm = LabelMap(geometry=geometry, labels=data, legend=fields["label"])
    check_vertebra_connectivity(lm)
    return lm


def save_labelmap(lm: LabelMap, path) -> None:
    path = Path(path)
    data_file = path.name + ".raw"
    lines = _header_lines(lm.geometry, data_file, "uint16le")
    for lab in sorted(lm.legend):
        lines.append(f"label {lab} {lm.legend[lab]}")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    (path.parent / data_file).write_bytes(
        np.ascontiguousarray(lm.labels, dtype="<u2").tobytes())
