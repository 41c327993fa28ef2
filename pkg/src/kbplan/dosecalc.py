"""Dose-influence calculation for nine coplanar beams.

Physics model: each beamlet is a divergent pencil ray from a point source,
stepped voxel-exactly through the grid. The dose per unit fluence deposited
in a traversed voxel is

    F0 * exp(-mu * t_mid) * exp(-d_perp^2 / (2 sigma^2))

where t_mid is the radiological depth (sum of density * path length, mm)
accumulated to the midpoint of the segment inside that voxel, mu is the
linear attenuation per mm of water, d_perp the perpendicular distance from
the voxel center to the ray, and sigma = beamlet width / 2.
"""

from __future__ import annotations

import math
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy import sparse

from .phantom import Phantom, VoxelGrid
from .structures import StructureId

BEAM_ANGLES_DEG = tuple(range(0, 360, 40))  # nine equidistant coplanar beams


@dataclass(frozen=True)
class BeamConfig:
    source_mm: float = 1000.0
    beamlet_mm: float = 8.0
    mu_per_mm: float = 0.005
    fluence_to_gy: float = 1.0  # F0
    prune_below: float = 1e-8


@dataclass(frozen=True)
class Beam:
    gantry_deg: float
    source_mm: float
    rows: int
    cols: int
    beamlet_mm: float
    iso_mm: tuple[float, float, float]

    @property
    def num_beamlets(self) -> int:
        return self.rows * self.cols

    @property
    def direction(self) -> np.ndarray:
        """Central-axis travel direction (unit, in the xy plane)."""
        th = math.radians(self.gantry_deg)
        return np.array([math.sin(th), -math.cos(th), 0.0])

    @property
    def lateral(self) -> np.ndarray:
        """In-plane axis perpendicular to the central axis (column axis)."""
        th = math.radians(self.gantry_deg)
        return np.array([math.cos(th), math.sin(th), 0.0])

    @property
    def source_pos(self) -> np.ndarray:
        return np.asarray(self.iso_mm) - self.source_mm * self.direction


def make_beams(phantom: Phantom, config: BeamConfig = BeamConfig()) -> list[Beam]:
    """Nine beams at gantry angles 0, 40, ..., 320 deg around the PTV70 centroid.

    The beamlet grid of each beam covers the body bounding box: columns span
    the box width projected on the beam's lateral axis, rows span the z
    extent, both at the configured beamlet width.
    """
    iso = phantom.centroid_mm(StructureId.PTV70)
    body = np.argwhere(phantom.grid.density > 0)
    if body.size == 0:
        raise ValueError("phantom has no body (all densities zero)")
    centers = (body + 0.5) * np.asarray(phantom.grid.spacing)
    zmin, zmax = centers[:, 2].min(), centers[:, 2].max()
    rows = max(1, math.ceil((zmax - zmin) / config.beamlet_mm))
    beams = []
    for ang in BEAM_ANGLES_DEG:
        th = math.radians(ang)
        lateral = np.array([math.cos(th), math.sin(th), 0.0])
        proj = centers[:, :2] @ lateral[:2]
        width = proj.max() - proj.min()
        cols = max(1, math.ceil(width / config.beamlet_mm))
        beams.append(
            Beam(
                gantry_deg=float(ang),
                source_mm=config.source_mm,
                rows=rows,
                cols=cols,
                beamlet_mm=config.beamlet_mm,
                iso_mm=tuple(float(v) for v in iso),
            )
        )
    return beams


def raytrace_segments(grid: VoxelGrid, origin, direction):
    """Voxel-exact traversal of a ray through the grid.

    Steps incrementally between axis-plane crossings (parametric DDA) and
    yields (ix, iy, iz, t_enter, t_exit) with t in mm along the unit
    direction. Raises on a zero direction.
    """
    d = np.asarray(direction, dtype=float)
    norm = np.linalg.norm(d)
    if norm == 0:
        raise ValueError("degenerate ray: zero direction")
    d = d / norm
    p0 = np.asarray(origin, dtype=float)
    dims = grid.dims
    spacing = np.asarray(grid.spacing)
    extent = dims * spacing

    # clip to the grid box
    t0, t1 = 0.0, math.inf
    for ax in range(3):
        if abs(d[ax]) < 1e-300:
            if not (0.0 <= p0[ax] <= extent[ax]):
                return
            continue
        ta = (0.0 - p0[ax]) / d[ax]
        tb = (extent[ax] - p0[ax]) / d[ax]
        t0 = max(t0, min(ta, tb))
        t1 = min(t1, max(ta, tb))
    if t1 <= t0:
        return

    eps = 1e-9
    pos = p0 + (t0 + eps) * d
    idx = np.floor(pos / spacing).astype(int)
    idx = np.clip(idx, 0, np.asarray(dims) - 1)

    step = np.where(d > 0, 1, -1)
    t_next = np.full(3, math.inf)
    dt = np.full(3, math.inf)
    for ax in range(3):
        if abs(d[ax]) < 1e-300:
            continue
        next_plane = (idx[ax] + (1 if d[ax] > 0 else 0)) * spacing[ax]
        t_next[ax] = (next_plane - p0[ax]) / d[ax]
        dt[ax] = spacing[ax] / abs(d[ax])

    t = t0
    while t < t1 - 1e-12:
        ax = int(np.argmin(t_next))
        t_exit = min(t_next[ax], t1)
        yield int(idx[0]), int(idx[1]), int(idx[2]), t, t_exit
        t = t_exit
        idx[ax] += step[ax]
        t_next[ax] += dt[ax]
        if idx[ax] < 0 or idx[ax] >= dims[ax]:
            return


def trace_beamlet(
    grid: VoxelGrid, beam: Beam, beamlet: int, config: BeamConfig = BeamConfig()
) -> tuple[np.ndarray, np.ndarray]:
    """Influence column of one beamlet: (flat voxel indices, Gy per unit fluence).

    Beamlets are row-major within the beam: row index picks the z offset,
    column index the lateral offset of the ray's aim point on the isocenter
    plane. Flat voxel indices are x-fastest.
    """
    if not 0 <= beamlet < beam.num_beamlets:
        raise IndexError(f"beamlet {beamlet} out of range for {beam.num_beamlets}")
    row, col = divmod(beamlet, beam.cols)
    iso = np.asarray(beam.iso_mm)
    aim = (
        iso
        + (col - (beam.cols - 1) / 2.0) * beam.beamlet_mm * beam.lateral
        + (row - (beam.rows - 1) / 2.0) * beam.beamlet_mm * np.array([0.0, 0.0, 1.0])
    )
    src = beam.source_pos
    ray = aim - src
    ray_len = np.linalg.norm(ray)
    if ray_len == 0:
        raise ValueError("degenerate ray: aim point coincides with source")
    d = ray / ray_len

    sigma = beam.beamlet_mm / 2.0
    spacing = np.asarray(grid.spacing)
    nx, ny, nz = grid.dims

    idxs, vals = [], []
    rad_depth = 0.0
    for ix, iy, iz, t_in, t_out in raytrace_segments(grid, src, d):
        seg = t_out - t_in
        rho = float(grid.density[ix, iy, iz])
        mid_depth = rad_depth + 0.5 * rho * seg
        rad_depth += rho * seg
        center = (np.array([ix, iy, iz]) + 0.5) * spacing
        rel = center - src
        d_perp2 = float(np.dot(rel, rel) - np.dot(rel, d) ** 2)
        value = (
            config.fluence_to_gy
            * math.exp(-config.mu_per_mm * mid_depth)
            * math.exp(-max(d_perp2, 0.0) / (2.0 * sigma * sigma))
        )
        if value >= config.prune_below:
            idxs.append(ix + nx * (iy + ny * iz))
            vals.append(value)
    return np.asarray(idxs, dtype=np.uint32), np.asarray(vals, dtype=np.float64)


@dataclass
class InfluenceMatrix:
    """Sparse (voxels x beamlets) map, columns sorted by beamlet index."""

    matrix: sparse.csc_matrix  # Gy per unit fluence
    beams: list[Beam]
    dims: tuple[int, int, int]
    spacing: tuple[float, float, float]

    @property
    def num_voxels(self) -> int:
        return self.matrix.shape[0]

    @property
    def num_beamlets(self) -> int:
        return self.matrix.shape[1]

    @property
    def nnz(self) -> int:
        return self.matrix.nnz

    def beam_offsets(self) -> list[int]:
        offs, acc = [], 0
        for b in self.beams:
            offs.append(acc)
            acc += b.num_beamlets
        return offs

    def column(self, b: int) -> tuple[np.ndarray, np.ndarray]:
        sl = slice(self.matrix.indptr[b], self.matrix.indptr[b + 1])
        return self.matrix.indices[sl].copy(), self.matrix.data[sl].copy()

    def row_sums(self) -> np.ndarray:
        """Per-voxel sum of influence entries, as a flat array."""
        return np.asarray(self.matrix.sum(axis=1)).ravel()


def influence_matrix(
    grid: VoxelGrid,
    beams: list[Beam],
    config: BeamConfig = BeamConfig(),
    threads: int = 1,
) -> InfluenceMatrix:
    """Trace every beamlet of every beam into one sparse matrix.

    Beamlet traces are independent; with threads > 1 they run in a pool but
    are merged in beamlet order, so the result is thread-count-invariant.
    """
    if not beams:
        raise ValueError("need at least one beam")
    jobs = [(b, k) for b in beams for k in range(b.num_beamlets)]

    def run(job):
        beam, k = job
        return trace_beamlet(grid, beam, k, config)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            columns = list(pool.map(run, jobs))
    else:
        columns = [run(j) for j in jobs]

    n_voxels = grid.num_voxels
    indptr = np.zeros(len(columns) + 1, dtype=np.int64)
    for i, (idx, _) in enumerate(columns):
        indptr[i + 1] = indptr[i] + len(idx)
    indices = np.concatenate([idx for idx, _ in columns]) if columns else np.array([])
    data = np.concatenate([val for _, val in columns]) if columns else np.array([])
    mat = sparse.csc_matrix(
        (data.astype(np.float64), indices.astype(np.int32), indptr),
        shape=(n_voxels, len(columns)),
    )
    mat.sort_indices()
    return InfluenceMatrix(
        matrix=mat, beams=list(beams), dims=grid.dims, spacing=grid.spacing
    )


def compute_dose(influence: InfluenceMatrix, fluence: np.ndarray) -> np.ndarray:
    """Dose volume d = A w, reshaped to the phantom dims."""
    w = np.asarray(fluence, dtype=np.float64)
    if w.shape != (influence.num_beamlets,):
        raise ValueError(
            f"fluence length {w.shape} does not match {influence.num_beamlets} beamlets"
        )
    if np.any(w < 0):
        raise ValueError("fluence must be nonnegative")
    flat = influence.matrix @ w
    return flat.reshape(influence.dims, order="F")


# --- KBPI file format -------------------------------------------------------
#
# header: magic "KBPI", u32 version, u32 dims x3, f32 spacing x3, u32 n_beams,
#         per beam (f32 gantry, f32 source_mm, u32 rows, u32 cols,
#                   f32 beamlet_mm, f32 iso x3)
# body:   per column, u32 count then count * (u32 voxel, f32 value)
# little-endian throughout.

KBPI_MAGIC = b"KBPI"
KBPI_VERSION = 1


def write_influence(path, influence: InfluenceMatrix):
    out = bytearray()
    out += KBPI_MAGIC
    out += struct.pack("<I", KBPI_VERSION)
    out += struct.pack("<III", *influence.dims)
    out += struct.pack("<fff", *influence.spacing)
    out += struct.pack("<I", len(influence.beams))
    for b in influence.beams:
        out += struct.pack(
            "<ffIIffff",
            b.gantry_deg,
            b.source_mm,
            b.rows,
            b.cols,
            b.beamlet_mm,
            *b.iso_mm,
        )
    for j in range(influence.num_beamlets):
        idx, val = influence.column(j)
        out += struct.pack("<I", len(idx))
        pairs = np.empty(len(idx), dtype=[("v", "<u4"), ("x", "<f4")])
        pairs["v"] = idx
        pairs["x"] = val
        out += pairs.tobytes()
    with open(path, "wb") as f:
        f.write(bytes(out))


def read_influence(path) -> InfluenceMatrix:
    with open(path, "rb") as f:
        data = f.read()
    if data[:4] != KBPI_MAGIC:
        raise ValueError("not a KBPI file (bad magic)")
    off = 4
    (version,) = struct.unpack_from("<I", data, off)
    off += 4
    if version != KBPI_VERSION:
        raise ValueError(f"unsupported KBPI version {version}")
    dims = struct.unpack_from("<III", data, off)
    off += 12
    spacing = struct.unpack_from("<fff", data, off)
    off += 12
    (n_beams,) = struct.unpack_from("<I", data, off)
    off += 4
    beams = []
    for _ in range(n_beams):
        g, s, rows, cols, bw, ix, iy, iz = struct.unpack_from("<ffIIffff", data, off)
        off += struct.calcsize("<ffIIffff")
        beams.append(
            Beam(
                gantry_deg=g,
                source_mm=s,
                rows=rows,
                cols=cols,
                beamlet_mm=bw,
                iso_mm=(ix, iy, iz),
            )
        )
    n_cols = sum(b.num_beamlets for b in beams)
    indptr = np.zeros(n_cols + 1, dtype=np.int64)
    chunks_idx, chunks_val = [], []
    for j in range(n_cols):
        (count,) = struct.unpack_from("<I", data, off)
        off += 4
        pairs = np.frombuffer(data, dtype=[("v", "<u4"), ("x", "<f4")], count=count, offset=off)
        off += pairs.nbytes
        indptr[j + 1] = indptr[j] + count
        chunks_idx.append(pairs["v"].astype(np.int32))
        chunks_val.append(pairs["x"].astype(np.float64))
    n_voxels = int(np.prod(dims))
    indices = np.concatenate(chunks_idx) if chunks_idx else np.array([], dtype=np.int32)
    values = np.concatenate(chunks_val) if chunks_val else np.array([])
    mat = sparse.csc_matrix((values, indices, indptr), shape=(n_voxels, n_cols))
    mat.sort_indices()
    return InfluenceMatrix(matrix=mat, beams=beams, dims=tuple(dims), spacing=spacing)
