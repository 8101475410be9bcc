"""Core volumetric grid types and the repeat / concatenate / alignment operators.

Memory layout is row-major with depth innermost: a volume is a float32 array of
shape (C, H, W, D), a 2D view is (C, H, W).  All containers are immutable after
construction and all operations are pure functions.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    EmptyInputError,
    InvalidDimensionError,
    NotARepetitionError,
)

__all__ = [
    "ViewLabel",
    "Projection2D",
    "Volume3D",
    "AlignmentRecord",
    "CompositeVolume",
    "repeat",
    "inverse_repeat",
    "transpose_perpendicular",
    "concatenate",
    "build_composite",
    "save_projection",
    "load_projection",
    "save_volume",
    "load_volume",
]

_DTYPE = np.float32


def _freeze(arr: np.ndarray) -> np.ndarray:
    out = np.ascontiguousarray(arr, dtype=_DTYPE)
    out.flags.writeable = False
    return out


@dataclass(frozen=True)
class ViewLabel:
    """View identity: 'frontal', 'lateral', or 'oblique' with an angle in degrees."""

    kind: str = "frontal"
    angle: float | None = None

    _KINDS = ("frontal", "lateral", "oblique")

    def __post_init__(self):
        if self.kind not in self._KINDS:
            raise ValueError(f"unknown view kind {self.kind!r}")
        if self.kind == "oblique" and self.angle is None:
            raise ValueError("oblique views need an angle")

    @property
    def azimuth(self) -> float:
        """Azimuth in degrees implied by the label (frontal=0, lateral=90)."""
        if self.kind == "frontal":
            return 0.0
        if self.kind == "lateral":
            return 90.0
        return float(self.angle)

    def is_perpendicular_to(self, other: "ViewLabel") -> bool:
        """True when the two labels are axis-aligned and 90 degrees apart."""
        axis_aligned = {"frontal", "lateral"}
        return (
            self.kind in axis_aligned
            and other.kind in axis_aligned
            and self.kind != other.kind
        )

    def to_json(self):
        return {"kind": self.kind, "angle": self.angle}

    @classmethod
    def from_json(cls, obj) -> "ViewLabel":
        if obj is None:
            return cls()
        return cls(kind=obj["kind"], angle=obj.get("angle"))


FRONTAL = ViewLabel("frontal")
LATERAL = ViewLabel("lateral")


def oblique(angle: float) -> ViewLabel:
    return ViewLabel("oblique", float(angle))


@dataclass(frozen=True)
class Projection2D:
    """A single 2D view: float32 intensities in [0, 1], shape (C, H, W)."""

    data: np.ndarray
    view_label: ViewLabel = FRONTAL

    def __post_init__(self):
        arr = np.asarray(self.data)
        if arr.ndim != 3:
            raise InvalidDimensionError(f"projection must be (C,H,W), got shape {arr.shape}")
        if arr.size == 0:
            raise InvalidDimensionError("projection has a zero-sized axis")
        if not np.isfinite(arr).all():
            raise ValueError("projection intensities must be finite")
        if arr.min() < 0.0 or arr.max() > 1.0:
            raise ValueError("projection intensities must lie in [0, 1]")
        object.__setattr__(self, "data", _freeze(arr))

    @property
    def channels(self) -> int:
        return self.data.shape[0]

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.data.shape


@dataclass(frozen=True)
class Volume3D:
    """A scalar field of shape (C, H, W, D), float32, intensities in [0, 1].

    ``check_range=False`` skips the [0,1] check; it exists for synthetic
    channel blocks that are not image-derived (e.g. Gaussian noise ablations).
    """

    data: np.ndarray
    check_range: bool = field(default=True, repr=False, compare=False)

    def __post_init__(self):
        arr = np.asarray(self.data)
        if arr.ndim != 4:
            raise InvalidDimensionError(f"volume must be (C,H,W,D), got shape {arr.shape}")
        if arr.size == 0:
            raise InvalidDimensionError("volume has a zero-sized axis")
        if not np.isfinite(arr).all():
            raise ValueError("volume intensities must be finite")
        if self.check_range and (arr.min() < 0.0 or arr.max() > 1.0):
            raise ValueError("volume intensities must lie in [0, 1]")
        object.__setattr__(self, "data", _freeze(arr))

    @property
    def channels(self) -> int:
        return self.data.shape[0]

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]

    @property
    def depth(self) -> int:
        return self.data.shape[3]

    @property
    def shape(self) -> tuple[int, int, int, int]:
        return self.data.shape

    @property
    def spatial_shape(self) -> tuple[int, int, int]:
        return self.data.shape[1:]


@dataclass(frozen=True)
class AlignmentRecord:
    """What alignment was applied to one constituent view of a composite."""

    view_label: ViewLabel
    alignment: str = "none"  # none | transpose | rotate3d
    angles: tuple[float, float] | None = None  # (azimuth, elevation) for rotate3d


@dataclass(frozen=True)
class CompositeVolume:
    """Channel-stacked repeated views: base has n_views * C channels."""

    n_views: int
    base: Volume3D
    provenance: tuple[AlignmentRecord, ...] = ()

    def __post_init__(self):
        if self.n_views < 1:
            raise EmptyInputError("composite needs at least one view")
        if self.base.channels % self.n_views != 0:
            raise InvalidDimensionError(
                f"{self.base.channels} channels do not split into {self.n_views} views"
            )
        object.__setattr__(self, "provenance", tuple(self.provenance))

    @property
    def channels_per_view(self) -> int:
        return self.base.channels // self.n_views

    def channel_block(self, i: int) -> Volume3D:
        """The i-th view's channel block as a standalone volume."""
        c = self.channels_per_view
        return Volume3D(self.base.data[i * c : (i + 1) * c], check_range=False)


def repeat(view: Projection2D, depth: int) -> Volume3D:
    """Stretch a 2D view into a volume by duplicating it ``depth`` times along D."""
    if depth < 1:
        raise InvalidDimensionError(f"depth must be >= 1, got {depth}")
    data = np.broadcast_to(view.data[..., None], view.shape + (depth,))
    return Volume3D(data)


def inverse_repeat(volume: Volume3D) -> Projection2D:
    """Recover the 2D view from a depth-repetition; all slices must be identical."""
    first = volume.data[..., 0]
    if not (volume.data == first[..., None]).all():
        raise NotARepetitionError("depth slices are not identical")
    return Projection2D(first.copy())


def transpose_perpendicular(volume: Volume3D) -> Volume3D:
    """Exchange the W and D axes: out[c,h,w,d] == in[c,h,d,w]."""
    if volume.width != volume.depth:
        raise InvalidDimensionError(
            f"W/D swap needs W == D, got W={volume.width} D={volume.depth}"
        )
    return Volume3D(volume.data.transpose(0, 1, 3, 2), check_range=False)


def concatenate(volumes: list[Volume3D]) -> CompositeVolume:
    """Stack volumes along the channel axis; spatial dims must agree."""
    if len(volumes) == 0:
        raise EmptyInputError("nothing to concatenate")
    spatial = volumes[0].spatial_shape
    for v in volumes[1:]:
        if v.spatial_shape != spatial:
            raise InvalidDimensionError(
                f"spatial dims differ: {v.spatial_shape} vs {spatial}"
            )
    base = Volume3D(np.concatenate([v.data for v in volumes], axis=0), check_range=False)
    return CompositeVolume(n_views=len(volumes), base=base)


def build_composite(
    views: list[Projection2D],
    depth: int,
    alignment: str = "none",
) -> CompositeVolume:
    """Repeat every view ``depth`` times, align, and concatenate across channels.

    alignment:
      * ``none``                    -- plain repeats.
      * ``transpose_perpendicular`` -- views perpendicular to the first view get
        their W and D axes swapped after repetition.
      * ``rotate3d``                -- each repeated view is rotated back to the
        first view's frame by its label azimuth (trilinear resampling).
    """
    if len(views) == 0:
        raise EmptyInputError("no views given")
    if alignment not in ("none", "transpose_perpendicular", "rotate3d"):
        raise ValueError(f"unknown alignment mode {alignment!r}")
    reference = views[0].view_label
    blocks: list[Volume3D] = []
    records: list[AlignmentRecord] = []
    for view in views:
        vol = repeat(view, depth)
        label = view.view_label
        if alignment == "transpose_perpendicular" and label.is_perpendicular_to(reference):
            vol = transpose_perpendicular(vol)
            records.append(AlignmentRecord(label, "transpose"))
        elif alignment == "rotate3d" and label.azimuth != reference.azimuth:
            from .projector import rotate3d  # local import: projector builds on volgrid

            rel = reference.azimuth - label.azimuth
            vol = rotate3d(vol, azimuth=rel, elevation=0.0)
            records.append(AlignmentRecord(label, "rotate3d", angles=(rel, 0.0)))
        else:
            records.append(AlignmentRecord(label, "none"))
        blocks.append(vol)
    composite = concatenate(blocks)
    return CompositeVolume(
        n_views=composite.n_views, base=composite.base, provenance=tuple(records)
    )


# --- on-disk format: raw little-endian f32 + JSON sidecar -------------------

def _sidecar_path(raw_path: str) -> str:
    return raw_path + ".json"


def _write_raw(path: str, arr: np.ndarray) -> None:
    tmp = path + ".tmp"
    with open(tmp, "wb") as fh:
        fh.write(arr.astype("<f4", copy=False).tobytes())
    os.replace(tmp, path)


def save_projection(path: str, proj: Projection2D) -> None:
    """Write raw <f4 pixels plus the JSON sidecar; round-trips bit-exact."""
    _write_raw(path, proj.data)
    meta = {
        "channels": proj.channels,
        "height": proj.height,
        "width": proj.width,
        "depth": None,
        "view_label": proj.view_label.to_json(),
    }
    tmp = _sidecar_path(path) + ".tmp"
    with open(tmp, "w") as fh:
        json.dump(meta, fh, indent=1)
    os.replace(tmp, _sidecar_path(path))


def load_projection(path: str) -> Projection2D:
    with open(_sidecar_path(path)) as fh:
        meta = json.load(fh)
    shape = (meta["channels"], meta["height"], meta["width"])
    data = np.fromfile(path, dtype="<f4")
    if data.size != int(np.prod(shape)):
        raise InvalidDimensionError(
            f"{path}: {data.size} values on disk, sidecar says {shape}"
        )
    return Projection2D(data.reshape(shape), ViewLabel.from_json(meta["view_label"]))


def save_volume(path: str, vol: Volume3D) -> None:
    """Write raw <f4 voxels plus the JSON sidecar; round-trips bit-exact."""
    _write_raw(path, vol.data)
    meta = {
        "channels": vol.channels,
        "height": vol.height,
        "width": vol.width,
        "depth": vol.depth,
        "view_label": None,
    }
    tmp = _sidecar_path(path) + ".tmp"
    with open(tmp, "w") as fh:
        json.dump(meta, fh, indent=1)
    os.replace(tmp, _sidecar_path(path))


def load_volume(path: str, check_range: bool = True) -> Volume3D:
    with open(_sidecar_path(path)) as fh:
        meta = json.load(fh)
    shape = (meta["channels"], meta["height"], meta["width"], meta["depth"])
    data = np.fromfile(path, dtype="<f4")
    if data.size != int(np.prod(shape)):
        raise InvalidDimensionError(
            f"{path}: {data.size} values on disk, sidecar says {shape}"
        )
    return Volume3D(data.reshape(shape), check_range=check_range)
