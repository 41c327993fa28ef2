"""Synthetic contoured patients.

A phantom is a voxel grid (default 4 x 4 x 2 mm voxels) holding a
water-equivalent density and exactly one structure label per voxel, plus
the target prescriptions. Structures are ellipsoids: three nested targets
near the grid center and eight organs-at-risk scattered inside an
elliptical body. Generation is fully deterministic in (seed, spec).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .structures import OARS, PALETTE, PRESCRIPTIONS_GY, TARGETS, StructureId

DEFAULT_SPACING_MM = (4.0, 4.0, 2.0)


@dataclass(frozen=True)
class VoxelGrid:
    """Density + label volume indexed [x, y, z]."""

    density: np.ndarray  # float32, >= 0
    labels: np.ndarray   # uint8 StructureId codes
    spacing: tuple[float, float, float] = DEFAULT_SPACING_MM

    def __post_init__(self):
        if self.density.shape != self.labels.shape:
            raise ValueError("density and label volumes must have the same shape")
        if not np.all(np.isfinite(self.density)) or np.any(self.density < 0):
            raise ValueError("density must be finite and nonnegative")

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.density.shape

    @property
    def num_voxels(self) -> int:
        return int(np.prod(self.density.shape))

    def mask(self, s: StructureId) -> np.ndarray:
        return self.labels == int(s)

    def voxel_centers_mm(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Physical center coordinates along each axis (1D arrays)."""
        sx, sy, sz = self.spacing
        nx, ny, nz = self.dims
        return (
            (np.arange(nx) + 0.5) * sx,
            (np.arange(ny) + 0.5) * sy,
            (np.arange(nz) + 0.5) * sz,
        )


@dataclass(frozen=True)
class Phantom:
    grid: VoxelGrid
    prescriptions: dict[StructureId, float] = field(
        default_factory=lambda: dict(PRESCRIPTIONS_GY)
    )
    seed: int = 0

    def structure_voxels(self, s: StructureId) -> np.ndarray:
        return np.argwhere(self.grid.mask(s))

    def centroid_mm(self, s: StructureId) -> np.ndarray:
        idx = self.structure_voxels(s)
        if idx.size == 0:
            raise ValueError(f"structure {s.name} is empty")
        return (idx.mean(axis=0) + 0.5) * np.asarray(self.grid.spacing)


@dataclass(frozen=True)
class PhantomSpec:
    """Size/complexity knobs for the generator."""

    dims: tuple[int, int, int] = (24, 24, 8)
    spacing: tuple[float, float, float] = DEFAULT_SPACING_MM
    # fraction of the in-plane extent covered by the body ellipse semi-axes
    body_fill: float = 0.44
    # in-plane voxel radius of the innermost target; outer targets scale up
    target_radius: float = 1.9
    oar_radius: float = 1.6

    def validate(self):
        nx, ny, nz = self.dims
        if nx < 16 or ny < 16:
            raise ValueError(
                f"grid dims {self.dims} too small to fit nested targets: "
                "in-plane dims must each be >= 16"
            )
        if nz < 4:
            raise ValueError(
                f"grid dims {self.dims} too small to fit nested targets: "
                "need at least 4 planes"
            )


@dataclass(frozen=True)
class ContouredSlice:
    """RGB image of one axial plane, channels-first, values in [0, 1]."""

    pixels: np.ndarray  # (3, size, size) float32
    plane: int

    @property
    def size(self) -> int:
        return self.pixels.shape[1]


def _ellipsoid_mask(dims, center, radii) -> np.ndarray:
    """Voxel mask of ((i-c)/r)^2 sum <= 1 in index units."""
    grids = np.ogrid[: dims[0], : dims[1], : dims[2]]
    acc = np.zeros(dims)
    for g, c, r in zip(grids, center, radii):
        acc = acc + ((g - c) / max(r, 1e-9)) ** 2
    return acc <= 1.0


def _is_connected(mask: np.ndarray) -> bool:
    _, n = ndimage.label(mask, structure=np.ones((3, 3, 3), dtype=bool))
    return n == 1


def generate_phantom(seed: int, spec: PhantomSpec = PhantomSpec()) -> Phantom:
    """Build one synthetic patient, bit-identical for fixed (seed, spec).

    Layout: an elliptical water body (density 1.0, air 0.0 outside), three
    concentric target ellipsoids labeled with highest prescription winning
    (target precedence), then the eight OARs placed by rejection sampling
    so each keeps a single connected ellipsoidal component disjoint from
    everything placed before it.
    """
    spec.validate()
    rng = np.random.default_rng(seed)
    nx, ny, nz = spec.dims

    labels = np.full(spec.dims, int(StructureId.UNCLASSIFIED), dtype=np.uint8)

    # body ellipse, full z extent
    cx, cy = (nx - 1) / 2.0, (ny - 1) / 2.0
    ax = nx * spec.body_fill * rng.uniform(0.94, 1.06)
    ay = ny * spec.body_fill * rng.uniform(0.94, 1.06)
    gx, gy = np.ogrid[:nx, :ny]
    body2d = ((gx - cx) / ax) ** 2 + ((gy - cy) / ay) ** 2 <= 1.0
    body = np.repeat(body2d[:, :, None], nz, axis=2)
    density = np.where(body, 1.0, 0.0).astype(np.float32)

    # nested targets around a jittered center; radii strictly increasing so
    # the filled regions are nested by construction
    tc = np.array(
        [
            cx + rng.uniform(-0.06, 0.06) * nx,
            cy + rng.uniform(-0.06, 0.06) * ny,
            (nz - 1) / 2.0 + rng.uniform(-0.5, 0.5),
        ]
    )
    r70 = spec.target_radius * rng.uniform(0.92, 1.08)
    r63 = r70 * rng.uniform(1.5, 1.7)
    r56 = r63 * rng.uniform(1.35, 1.5)
    rz70 = max(1.1, r70 * 0.75)
    rz63 = rz70 + max(0.9, r63 - r70) * 0.6
    rz56 = rz63 + max(0.9, r56 - r63) * 0.6
    if tc[0] - r56 < 1 or tc[0] + r56 > nx - 2 or tc[1] - r56 < 1 or tc[1] + r56 > ny - 2:
        raise ValueError(
            f"grid dims {spec.dims} too small to fit nested targets of "
            f"outer radius {r56:.1f} voxels"
        )

    e70 = _ellipsoid_mask(spec.dims, tc, (r70, r70, rz70))
    e63 = _ellipsoid_mask(spec.dims, tc, (r63, r63, rz63))
    e56 = _ellipsoid_mask(spec.dims, tc, (r56, r56, rz56))
    # precedence: hottest target wins where ellipsoids overlap
    labels[e56 & body] = int(StructureId.PTV56)
    labels[e63 & body] = int(StructureId.PTV63)
    labels[e70 & body] = int(StructureId.PTV70)
    for s, e in ((StructureId.PTV70, e70), (StructureId.PTV63, e63), (StructureId.PTV56, e56)):
        if not np.any(labels == int(s)):
            raise ValueError(
                f"grid dims {spec.dims} too small to fit nested targets: {s.name} empty"
            )
        if not (e & body).sum() == (e.sum()):
            # targets must sit fully inside the body so plans can cover them
            raise ValueError(f"target {s.name} does not fit inside the body ellipse")

    # OARs: rejection-sample ellipsoids inside the body, disjoint from all
    # previously assigned voxels, shrinking on repeated failure
    claimed = labels != int(StructureId.UNCLASSIFIED)
    interior_margin = 0.5
    for s in OARS:
        placed = False
        radius = spec.oar_radius
        for attempt in range(400):
            if attempt and attempt % 80 == 0:
                radius = max(0.9, radius * 0.8)
            r_in = radius * rng.uniform(0.8, 1.2)
            r_z = max(0.8, r_in * rng.uniform(0.55, 0.9))
            oc = np.array(
                [
                    rng.uniform(cx - ax + r_in + interior_margin, cx + ax - r_in - interior_margin),
                    rng.uniform(cy - ay + r_in + interior_margin, cy + ay - r_in - interior_margin),
                    rng.uniform(max(0.0, r_z - 0.5), nz - 1 - max(0.0, r_z - 0.5)),
                ]
            )
            cand = _ellipsoid_mask(spec.dims, oc, (r_in, r_in, r_z)) & body
            if not cand.any() or (cand & claimed).any():
                continue
            if not _is_connected(cand):
                continue
            labels[cand] = int(s)
            claimed |= cand
            placed = True
            break
        if not placed:
            raise ValueError(
                f"could not place {s.name} inside a {spec.dims} body; "
                "grid too small or too crowded"
            )

    grid = VoxelGrid(density=density, labels=labels, spacing=spec.spacing)
    return Phantom(grid=grid, prescriptions=dict(PRESCRIPTIONS_GY), seed=seed)


def render_contoured_slice(phantom: Phantom, z: int, size: int = 64) -> ContouredSlice:
    """Color-code one axial plane: structure palette over density grayscale.

    Unclassified pixels are pure grayscale (all channels equal to the voxel
    density clipped to [0, 1]); labeled pixels carry the fixed palette color
    of their structure. The output is size x size with nearest-neighbor
    pixel-to-voxel mapping, so two renders of the same plane are identical.
    """
    nx, ny, nz = phantom.grid.dims
    if not 0 <= z < nz:
        raise IndexError(f"plane {z} out of range for nz={nz}")
    ix = np.minimum((np.arange(size) * nx) // size, nx - 1)
    iy = np.minimum((np.arange(size) * ny) // size, ny - 1)
    lab = phantom.grid.labels[np.ix_(ix, iy)][:, :, z]
    den = phantom.grid.density[np.ix_(ix, iy)][:, :, z]

    gray = np.clip(den, 0.0, 1.0).astype(np.float32)
    img = np.repeat(gray[None, :, :], 3, axis=0)
    colored = lab != int(StructureId.UNCLASSIFIED)
    col = PALETTE[lab]  # (size, size, 3)
    img[:, colored] = col[colored].T
    return ContouredSlice(pixels=img, plane=z)


def slice_to_voxels(values: np.ndarray, dims_xy: tuple[int, int]) -> np.ndarray:
    """Average a (size, size) pixel plane back onto the (nx, ny) voxel grid.

    Inverse of the nearest-neighbor upsampling used by the renderer: each
    voxel receives the mean of the pixels that map onto it.
    """
    size = values.shape[0]
    nx, ny = dims_xy
    ix = np.minimum((np.arange(size) * nx) // size, nx - 1)
    iy = np.minimum((np.arange(size) * ny) // size, ny - 1)
    out = np.zeros(dims_xy)
    cnt = np.zeros(dims_xy)
    np.add.at(out, (ix[:, None], iy[None, :]), values)
    np.add.at(cnt, (ix[:, None], iy[None, :]), 1.0)
    return out / np.maximum(cnt, 1.0)


def distance_to_surface(grid: VoxelGrid, s: StructureId) -> np.ndarray:
    """Per-voxel Euclidean distance (mm) to the structure's surface voxels.

    Zero everywhere inside the structure; outside, the anisotropic-spacing
    distance from the voxel center to the nearest structure voxel center
    (which is always a surface voxel of the mask).
    """
    mask = grid.mask(s)
    if not mask.any():
        raise ValueError(f"structure {s.name} is empty")
    return ndimage.distance_transform_edt(~mask, sampling=grid.spacing)
