"""Synthetic ellipsoid phantoms and an analytic parallel-beam projector.

Projections are mean intensities along the ray axis, which keeps every view in
[0, 1] without renormalization.  View geometry: azimuth rotates about the H
axis (mixing W and D), elevation about the W axis (mixing H and D).  A frontal
view (azimuth 0, elevation 0) integrates straight down the depth axis.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyInputError, InvalidDimensionError, InvalidPhantomError
from .volgrid import (
    FRONTAL,
    LATERAL,
    Projection2D,
    ViewLabel,
    Volume3D,
    oblique,
    save_projection,
    save_volume,
)

__all__ = [
    "Ellipsoid",
    "Phantom",
    "ViewGeometry",
    "rasterize_phantom",
    "rotate3d",
    "project",
    "random_phantom",
    "generate_dataset",
    "load_manifest",
]


@dataclass(frozen=True)
class Ellipsoid:
    center: tuple[float, float, float]  # in [0,1]^3 grid coordinates
    semi_axes: tuple[float, float, float]
    rotation: tuple[float, float, float] = (0.0, 0.0, 0.0)  # degrees about h, w, d
    intensity: float = 1.0


@dataclass(frozen=True)
class Phantom:
    """A list of additive ellipsoids rasterized onto an (H, W, D) grid."""

    ellipsoids: tuple[Ellipsoid, ...]
    grid: tuple[int, int, int]

    def __post_init__(self):
        if len(self.ellipsoids) == 0:
            raise EmptyInputError("phantom needs at least one ellipsoid")
        if any(g < 2 for g in self.grid):
            raise InvalidDimensionError(f"grid dims must be >= 2, got {self.grid}")
        for e in self.ellipsoids:
            if any(s <= 0 for s in e.semi_axes):
                raise InvalidPhantomError(f"non-positive semi-axis in {e}")
        object.__setattr__(self, "ellipsoids", tuple(self.ellipsoids))


@dataclass(frozen=True)
class ViewGeometry:
    azimuth: float = 0.0
    elevation: float = 0.0
    kind: str = "parallel_beam"

    def __post_init__(self):
        if not (0.0 <= self.azimuth < 360.0):
            raise ValueError(f"azimuth must be in [0, 360), got {self.azimuth}")
        if not (-90.0 <= self.elevation <= 90.0):
            raise ValueError(f"elevation must be in [-90, 90], got {self.elevation}")
        if self.kind != "parallel_beam":
            raise ValueError(f"unsupported geometry kind {self.kind!r}")

    @property
    def view_label(self) -> ViewLabel:
        if self.elevation == 0.0:
            if self.azimuth == 0.0:
                return FRONTAL
            if self.azimuth in (90.0, 270.0):
                return LATERAL
        return oblique(self.azimuth)


def _euler_matrix(angles_deg: tuple[float, float, float]) -> np.ndarray:
    """Rotation about the h, then w, then d axis, in degrees."""
    ah, aw, ad = (np.deg2rad(a) for a in angles_deg)
    ch, sh = np.cos(ah), np.sin(ah)
    cw, sw = np.cos(aw), np.sin(aw)
    cd, sd = np.cos(ad), np.sin(ad)
    rh = np.array([[1, 0, 0], [0, ch, -sh], [0, sh, ch]])
    rw = np.array([[cw, 0, -sw], [0, 1, 0], [sw, 0, cw]])
    rd = np.array([[cd, -sd, 0], [sd, cd, 0], [0, 0, 1]])
    return rd @ rw @ rh


def rasterize_phantom(phantom: Phantom) -> Volume3D:
    """Sum ellipsoid intensities at voxel centers ((i+0.5)/n), clamp to [0, 1]."""
    gh, gw, gd = phantom.grid
    hh = (np.arange(gh) + 0.5) / gh
    ww = (np.arange(gw) + 0.5) / gw
    dd = (np.arange(gd) + 0.5) / gd
    pts = np.stack(np.meshgrid(hh, ww, dd, indexing="ij"), axis=0)  # (3,H,W,D)
    acc = np.zeros(phantom.grid, dtype=np.float64)
    for e in phantom.ellipsoids:
        rot = _euler_matrix(e.rotation)
        delta = pts - np.asarray(e.center, dtype=np.float64).reshape(3, 1, 1, 1)
        local = np.einsum("ij,jhwd->ihwd", rot.T, delta)
        scaled = local / np.asarray(e.semi_axes, dtype=np.float64).reshape(3, 1, 1, 1)
        inside = (scaled**2).sum(axis=0) <= 1.0
        acc += np.where(inside, e.intensity, 0.0)
    return Volume3D(np.clip(acc, 0.0, 1.0)[None].astype(np.float32))


_EXACT_TRIG = {0.0: (1.0, 0.0), 90.0: (0.0, 1.0), 180.0: (-1.0, 0.0), 270.0: (0.0, -1.0)}


def _cos_sin(angle_deg: float) -> tuple[float, float]:
    key = angle_deg % 360.0
    if key in _EXACT_TRIG:
        return _EXACT_TRIG[key]
    rad = np.deg2rad(angle_deg)
    return float(np.cos(rad)), float(np.sin(rad))


def _rotation_matrix(azimuth: float, elevation: float) -> np.ndarray:
    """Elevation about W composed after azimuth about H, acting on (h, w, d)."""
    ca, sa = _cos_sin(azimuth)
    ce, se = _cos_sin(elevation)
    r_az = np.array([[1, 0, 0], [0, ca, -sa], [0, sa, ca]], dtype=np.float64)
    r_el = np.array([[ce, 0, -se], [0, 1, 0], [se, 0, ce]], dtype=np.float64)
    return r_el @ r_az


def _trilinear_sample(vol: np.ndarray, coords: np.ndarray) -> np.ndarray:
    """Sample vol (C,H,W,D) at float coords (3,...); out-of-bounds reads 0."""
    c, h, w, d = vol.shape
    out_shape = coords.shape[1:]
    flat = coords.reshape(3, -1)
    lo = np.floor(flat).astype(np.int64)
    frac = flat - lo
    result = np.zeros((c, flat.shape[1]), dtype=np.float64)
    sizes = np.array([h, w, d])[:, None]
    for corner in range(8):
        offs = np.array([(corner >> 2) & 1, (corner >> 1) & 1, corner & 1])[:, None]
        idx = lo + offs
        valid = ((idx >= 0) & (idx < sizes)).all(axis=0)
        weight = np.prod(np.where(offs == 1, frac, 1.0 - frac), axis=0)
        idx_c = np.clip(idx, 0, sizes - 1)
        vals = vol[:, idx_c[0], idx_c[1], idx_c[2]]
        result += vals * (weight * valid)[None, :]
    return result.reshape((c,) + out_shape)


def rotate3d(volume: Volume3D, azimuth: float, elevation: float = 0.0) -> Volume3D:
    """Rotate a volume about its grid center with trilinear resampling.

    Zero rotation is the identity bit-exact; angles that are multiples of 90
    use exact trig constants, so on cubic grids they reduce to pure index
    permutations.  Samples falling outside the grid read 0.
    """
    if azimuth % 360.0 == 0.0 and elevation % 360.0 == 0.0:
        return volume
    _, h, w, d = volume.shape
    center = np.array([(h - 1) / 2.0, (w - 1) / 2.0, (d - 1) / 2.0])
    rot_inv = _rotation_matrix(azimuth, elevation).T  # orthonormal: inverse == transpose
    grid = np.stack(
        np.meshgrid(np.arange(h), np.arange(w), np.arange(d), indexing="ij"), axis=0
    ).astype(np.float64)
    coords = np.einsum("ij,jhwd->ihwd", rot_inv, grid - center.reshape(3, 1, 1, 1))
    coords += center.reshape(3, 1, 1, 1)
    sampled = _trilinear_sample(volume.data.astype(np.float64), coords)
    return Volume3D(sampled.astype(np.float32), check_range=False)


def project(volume: Volume3D, geometry: ViewGeometry) -> Projection2D:
    """Parallel-beam view: rotate the volume into the view frame, average along D."""
    if volume.channels != 1:
        raise InvalidDimensionError(f"projector expects 1 channel, got {volume.channels}")
    aligned = rotate3d(volume, azimuth=-geometry.azimuth, elevation=-geometry.elevation)
    pixels = aligned.data.mean(axis=3, dtype=np.float64)
    pixels = np.clip(pixels, 0.0, 1.0).astype(np.float32)
    return Projection2D(pixels, view_label=geometry.view_label)


# --- randomized phantom family ----------------------------------------------

def random_phantom(rng: np.random.Generator, grid: tuple[int, int, int]) -> Phantom:
    """A body-plus-structures template with randomized perturbations.

    Shared template (torso shell, two low-intensity cavities, a stable bright
    spine) with jittered geometry plus bright nodules at random interior
    positions, so views carry genuine localization information.
    """
    ells: list[Ellipsoid] = []
    body_axes = rng.uniform(0.36, 0.44, size=3)
    ells.append(
        Ellipsoid(
            center=tuple(0.5 + rng.uniform(-0.02, 0.02, size=3)),
            semi_axes=tuple(body_axes),
            rotation=(0.0, 0.0, float(rng.uniform(-8, 8))),
            intensity=float(rng.uniform(0.30, 0.40)),
        )
    )
    for side in (-1.0, 1.0):
        ells.append(
            Ellipsoid(
                center=(
                    0.5 + float(rng.uniform(-0.03, 0.03)),
                    0.5 + side * float(rng.uniform(0.16, 0.22)),
                    0.5 + float(rng.uniform(-0.04, 0.04)),
                ),
                semi_axes=tuple(rng.uniform(0.10, 0.16, size=3)),
                rotation=(0.0, float(rng.uniform(-10, 10)), 0.0),
                intensity=float(rng.uniform(-0.22, -0.12)),
            )
        )
    ells.append(
        Ellipsoid(
            center=(0.5, 0.5, 0.82 + float(rng.uniform(-0.02, 0.02))),
            semi_axes=(0.30, 0.06, 0.06),
            intensity=float(rng.uniform(0.45, 0.60)),
        )
    )
    for _ in range(int(rng.integers(2, 5))):
        ells.append(
            Ellipsoid(
                center=tuple(0.5 + rng.uniform(-0.22, 0.22, size=3)),
                semi_axes=tuple(rng.uniform(0.04, 0.09, size=3)),
                rotation=tuple(rng.uniform(-45, 45, size=3)),
                intensity=float(rng.uniform(0.35, 0.65)),
            )
        )
    return Phantom(ellipsoids=tuple(ells), grid=grid)


# --- dataset generation -------------------------------------------------------

def _atomic_json(path: str, obj) -> None:
    tmp = path + ".tmp"
    with open(tmp, "w") as fh:
        json.dump(obj, fh, indent=1)
    os.replace(tmp, path)


def generate_dataset(
    n_samples: int,
    grid: tuple[int, int, int],
    views: list[ViewGeometry],
    seed: int,
    out_dir: str,
) -> str:
    """Write n_samples (volume, projections) pairs plus manifest.json.

    Per-sample RNG streams derive from (seed, sample index), so outputs are
    byte-identical across runs and independent of generation order.  Returns
    the manifest path.
    """
    if n_samples < 1:
        raise EmptyInputError(f"n_samples must be >= 1, got {n_samples}")
    if len(views) == 0:
        raise EmptyInputError("at least one view geometry required")
    os.makedirs(out_dir, exist_ok=True)
    samples = []
    for i in range(n_samples):
        rng = np.random.Generator(
            np.random.PCG64(np.random.SeedSequence(entropy=seed, spawn_key=(i,)))
        )
        volume = rasterize_phantom(random_phantom(rng, grid))
        vol_name = f"volume_{i:04d}.raw"
        try:
            save_volume(os.path.join(out_dir, vol_name), volume)
        except OSError as exc:
            raise OSError(f"writing {os.path.join(out_dir, vol_name)}: {exc}") from exc
        entry = {"volume": vol_name, "views": []}
        for j, geo in enumerate(views):
            proj = project(volume, geo)
            view_name = f"view_{i:04d}_{j}.raw"
            try:
                save_projection(os.path.join(out_dir, view_name), proj)
            except OSError as exc:
                raise OSError(f"writing {os.path.join(out_dir, view_name)}: {exc}") from exc
            entry["views"].append(
                {"path": view_name, "azimuth": geo.azimuth, "elevation": geo.elevation}
            )
        samples.append(entry)
    manifest = {"samples": samples, "seed": seed, "grid": list(grid)}
    manifest_path = os.path.join(out_dir, "manifest.json")
    _atomic_json(manifest_path, manifest)
    return manifest_path


def load_manifest(manifest_path: str) -> dict:
    """Read a dataset manifest; paths stay relative to the manifest directory."""
    with open(manifest_path) as fh:
        manifest = json.load(fh)
    manifest["_dir"] = os.path.dirname(os.path.abspath(manifest_path))
    return manifest
