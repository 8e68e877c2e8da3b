"""Device description and rasterization onto the simulation grid.

The device is a thin metal slab on a dielectric substrate with metal-filled
grooves cut into the substrate on both sides of a groove-free central section
(the cavity), forming a distributed Bragg reflector for the interface
plasmon.  Coordinates: x runs along the interface, z upward, and the metal
slab sits between the substrate below and air above.

Rasterization snaps every feature edge to the nearest cell boundary and
assigns one material per cell; there is no boundary smoothing.  Staircase
error is therefore first order in dx and accepted.  Field components on the
staggered grid count as metal only when every touching cell is metal, so
surface-tangential components always update in the adjacent dielectric.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field, replace
from enum import IntEnum
from pathlib import Path

import numpy as np

__all__ = [
    "CellKind",
    "DeviceGeometry",
    "MaterialGrid",
    "ConstructionError",
    "ResolutionError",
    "PlacementError",
    "build_grid",
    "uniform_grid",
    "emitter_position",
    "export_grid",
    "load_grid",
    "export_field",
    "load_field",
]


class ConstructionError(ValueError):
    """Geometry parameters do not describe a buildable device."""


class ResolutionError(ValueError):
    """Grid spacing too coarse for the requested features."""


class PlacementError(ValueError):
    """Requested point is not a valid emitter location."""


class CellKind(IntEnum):
    AIR = 0
    DIELECTRIC = 1
    METAL = 2


@dataclass(frozen=True)
class DeviceGeometry:
    """Plasmonic DBR cavity layout, all lengths in nm.

    cavity_length_nm is the distance between the inner edges of the
    innermost grooves.  dbr_periods_per_side grooves of width groove_width_nm
    and depth groove_depth_nm follow at pitch period_nm on each side.  The
    slab extends slab_overhang_nm beyond the outermost groove and then
    stops, leaving side_margin_nm of bare interface before the absorber so
    that no metal ever touches the boundary layers.
    """

    period_nm: float = 116.0
    groove_width_nm: float = 20.0
    groove_depth_nm: float = 30.0
    metal_thickness_nm: float = 30.0
    cavity_length_nm: float = 328.0
    dbr_periods_per_side: int = 5
    substrate_height_nm: float = 600.0
    air_height_nm: float = 600.0
    slab_overhang_nm: float = 174.0
    side_margin_nm: float = 150.0
    pml_thickness_nm: float = 32.0

    def __post_init__(self):
        positive = {
            "period_nm": self.period_nm,
            "groove_width_nm": self.groove_width_nm,
            "groove_depth_nm": self.groove_depth_nm,
            "metal_thickness_nm": self.metal_thickness_nm,
            "cavity_length_nm": self.cavity_length_nm,
            "substrate_height_nm": self.substrate_height_nm,
            "air_height_nm": self.air_height_nm,
            "pml_thickness_nm": self.pml_thickness_nm,
        }
        for name, value in positive.items():
            if value <= 0.0:
                raise ConstructionError(f"{name} must be positive, got {value}")
        if self.slab_overhang_nm < 0.0 or self.side_margin_nm < 0.0:
            raise ConstructionError("margins must be non-negative")
        if self.dbr_periods_per_side < 1:
            raise ConstructionError(
                f"need at least one groove per side, got {self.dbr_periods_per_side}"
            )
        if self.groove_width_nm >= self.period_nm:
            raise ConstructionError(
                f"groove width {self.groove_width_nm} nm must be smaller than "
                f"the period {self.period_nm} nm"
            )
        if self.groove_depth_nm >= self.substrate_height_nm:
            raise ConstructionError("grooves deeper than the substrate")

    def with_cavity_length(self, length_nm: float) -> "DeviceGeometry":
        return replace(self, cavity_length_nm=length_nm)

    @property
    def slab_half_extent_nm(self) -> float:
        return (
            self.cavity_length_nm / 2.0
            + (self.dbr_periods_per_side - 1) * self.period_nm
            + self.groove_width_nm
            + self.slab_overhang_nm
        )

    @property
    def half_width_nm(self) -> float:
        return self.slab_half_extent_nm + self.side_margin_nm + self.pml_thickness_nm


@dataclass
class MaterialGrid:
    """Rasterized device: one CellKind per cell plus layout bookkeeping.

    cell_kind has shape (nx, nz), C order, x major.  interface_k is the
    z-index of the flat metal/dielectric interface plane; cavity_span the
    half-open x-cell range of the groove-free central section.
    """

    nx: int
    nz: int
    dx_nm: float
    cell_kind: np.ndarray
    pml_cells: int = 0
    interface_k: int = 0
    cavity_span: tuple[int, int] | None = None
    geometry: DeviceGeometry | None = field(default=None, repr=False)

    @property
    def dx(self) -> float:
        """Cell size in meters."""
        return self.dx_nm * 1e-9

    def metal_cells(self) -> np.ndarray:
        return self.cell_kind == CellKind.METAL

    def ex_metal_mask(self) -> np.ndarray:
        """Metal occupancy of Ex nodes at (i+1/2, k), shape (nx, nz+1)."""
        m = self.metal_cells()
        mask = np.zeros((self.nx, self.nz + 1), dtype=bool)
        mask[:, 1:-1] = m[:, :-1] & m[:, 1:]
        return mask

    def ez_metal_mask(self) -> np.ndarray:
        """Metal occupancy of Ez nodes at (i, k+1/2), shape (nx+1, nz)."""
        m = self.metal_cells()
        mask = np.zeros((self.nx + 1, self.nz), dtype=bool)
        mask[1:-1, :] = m[:-1, :] & m[1:, :]
        return mask

    def metal_rows(self) -> tuple[int, int]:
        """Half-open z-row range [lo, hi) containing every metal cell."""
        rows = np.flatnonzero(np.any(self.metal_cells(), axis=0))
        if rows.size == 0:
            return (0, 0)
        return int(rows[0]), int(rows[-1]) + 1

    def in_pml(self, i: int, k: int) -> bool:
        p = self.pml_cells
        return i < p or i >= self.nx - p or k < p or k >= self.nz - p


def _snap(x_nm: float, dx_nm: float) -> int:
    """Nearest cell boundary, ties rounding up for determinism."""
    return int(math.floor(x_nm / dx_nm + 0.5))


def build_grid(geom: DeviceGeometry, dx_nm: float) -> MaterialGrid:
    """Rasterize a device onto a uniform grid with spacing dx_nm.

    Raises ResolutionError when dx cannot resolve the grooves and
    ConstructionError when the layout itself is inconsistent.
    """
    if dx_nm <= 0.0:
        raise ResolutionError(f"dx must be positive, got {dx_nm}")
    if dx_nm > geom.groove_width_nm:
        raise ResolutionError(
            f"dx = {dx_nm} nm exceeds the groove width "
            f"{geom.groove_width_nm} nm; grooves would vanish"
        )

    groove_w = _snap(geom.groove_width_nm, dx_nm)
    groove_d = _snap(geom.groove_depth_nm, dx_nm)
    slab_t = _snap(geom.metal_thickness_nm, dx_nm)
    for name, cells in (
        ("groove width", groove_w),
        ("groove depth", groove_d),
        ("metal thickness", slab_t),
    ):
        if cells < 1:
            raise ResolutionError(f"{name} rounds to zero cells at dx = {dx_nm} nm")

    pml = _snap(geom.pml_thickness_nm, dx_nm)
    half_w = _snap(geom.half_width_nm, dx_nm)
    nx = 2 * half_w
    substrate = _snap(geom.substrate_height_nm, dx_nm)
    air = _snap(geom.air_height_nm, dx_nm)
    nz = 2 * pml + substrate + slab_t + air
    k_int = pml + substrate
    center = float(half_w)  # cell units, a cell boundary by construction

    kind = np.full((nx, nz), CellKind.AIR, dtype=np.uint8)
    kind[:, :k_int] = CellKind.DIELECTRIC

    def fill(x_lo_nm, x_hi_nm, k_lo, k_hi, value):
        i_lo = _snap(center * dx_nm + x_lo_nm, dx_nm)
        i_hi = _snap(center * dx_nm + x_hi_nm, dx_nm)
        kind[max(i_lo, 0): min(i_hi, nx), max(k_lo, 0): min(k_hi, nz)] = value

    # slab
    fill(-geom.slab_half_extent_nm, geom.slab_half_extent_nm,
         k_int, k_int + slab_t, CellKind.METAL)
    # grooves, mirrored
    for j in range(geom.dbr_periods_per_side):
        inner = geom.cavity_length_nm / 2.0 + j * geom.period_nm
        outer = inner + geom.groove_width_nm
        fill(inner, outer, k_int - groove_d, k_int, CellKind.METAL)
        fill(-outer, -inner, k_int - groove_d, k_int, CellKind.METAL)

    span = (
        _snap(center * dx_nm - geom.cavity_length_nm / 2.0, dx_nm),
        _snap(center * dx_nm + geom.cavity_length_nm / 2.0, dx_nm),
    )

    grid = MaterialGrid(
        nx=nx, nz=nz, dx_nm=dx_nm, cell_kind=kind, pml_cells=pml,
        interface_k=k_int, cavity_span=span, geometry=geom,
    )
    metal = grid.metal_cells()
    if (
        np.any(metal[:pml]) or np.any(metal[-pml:])
        or np.any(metal[:, :pml]) or np.any(metal[:, -pml:])
    ):
        raise ConstructionError("metal extends into the absorbing boundary")
    return grid


def uniform_grid(
    nx: int, nz: int, dx_nm: float, kind: CellKind, pml_cells: int = 0
) -> MaterialGrid:
    """Single-material grid, mostly for validation runs and tests."""
    cells = np.full((nx, nz), int(kind), dtype=np.uint8)
    return MaterialGrid(
        nx=nx, nz=nz, dx_nm=dx_nm, cell_kind=cells, pml_cells=pml_cells,
        interface_k=0,
    )


def emitter_position(
    grid: MaterialGrid, x_offset_nm: float, z_depth_nm: float
) -> tuple[int, int]:
    """Nearest Ez node to a point below the interface, as an (i, k) index.

    x_offset_nm is measured from the cavity center, z_depth_nm downward from
    the interface plane.  The node must land in the dielectric, outside the
    absorbing boundary; anything else raises PlacementError.
    """
    center_nm = (grid.nx // 2) * grid.dx_nm
    i = _snap(center_nm + x_offset_nm, grid.dx_nm)
    depth_cells = _snap(z_depth_nm, grid.dx_nm)
    k = grid.interface_k - depth_cells
    if not (0 < i < grid.nx) or not (0 <= k < grid.nz):
        raise PlacementError(
            f"emitter at offset {x_offset_nm} nm, depth {z_depth_nm} nm falls "
            "outside the domain"
        )
    if grid.in_pml(i, k):
        raise PlacementError("emitter inside the absorbing boundary")
    left, right = grid.cell_kind[i - 1, k], grid.cell_kind[i, k]
    if CellKind.METAL in (left, right):
        raise PlacementError(
            f"emitter node at i={i}, k={k} touches metal; place it in the "
            "dielectric below the structure"
        )
    if left != CellKind.DIELECTRIC or right != CellKind.DIELECTRIC:
        raise PlacementError(
            f"emitter node at i={i}, k={k} is not inside the dielectric"
        )
    return i, k


# Binary formats.  Both files start with a 32 byte little-endian header:
#
#   grid:   8s magic "SPCGRID1" | u4 nx | u4 nz | u8 dx (micro-nm)
#           | u4 interface_k | u2 pml_cells | 2 zero bytes
#   field:  8s magic "SPCFLD01" | u4 n0 | u4 n1 | u8 dx (micro-nm)
#           | u1 component tag | u1 dtype tag (0 = f8, 1 = c16) | 6 zero bytes
#
# followed by the raw array, C order with x as the major axis.  Grids store
# one CellKind byte per cell; fields store little-endian float64 or
# complex128 values.

_GRID_MAGIC = b"SPCGRID1"
_FIELD_MAGIC = b"SPCFLD01"
_GRID_HEADER = struct.Struct("<8sIIQIH2x")
_FIELD_HEADER = struct.Struct("<8sIIQBB6x")

_COMPONENT_TAGS = {"ex": 0, "ez": 1, "hy": 2, "intensity": 3}
_TAG_COMPONENTS = {v: k for k, v in _COMPONENT_TAGS.items()}


def _dx_to_micro_nm(dx_nm: float) -> int:
    return int(round(dx_nm * 1e6))


def export_grid(grid: MaterialGrid, path) -> None:
    header = _GRID_HEADER.pack(
        _GRID_MAGIC, grid.nx, grid.nz, _dx_to_micro_nm(grid.dx_nm),
        grid.interface_k, grid.pml_cells,
    )
    data = np.ascontiguousarray(grid.cell_kind, dtype=np.uint8)
    Path(path).write_bytes(header + data.tobytes())


def load_grid(path) -> MaterialGrid:
    raw = Path(path).read_bytes()
    if len(raw) < _GRID_HEADER.size:
        raise ValueError(f"{path}: truncated grid file")
    magic, nx, nz, dx_micro, k_int, pml = _GRID_HEADER.unpack_from(raw)
    if magic != _GRID_MAGIC:
        raise ValueError(f"{path}: not a grid file (magic {magic!r})")
    expected = _GRID_HEADER.size + nx * nz
    if len(raw) != expected:
        raise ValueError(f"{path}: expected {expected} bytes, found {len(raw)}")
    cells = np.frombuffer(
        raw, dtype=np.uint8, offset=_GRID_HEADER.size
    ).reshape(nx, nz).copy()
    return MaterialGrid(
        nx=nx, nz=nz, dx_nm=dx_micro / 1e6, cell_kind=cells,
        pml_cells=pml, interface_k=k_int,
    )


def export_field(path, values: np.ndarray, dx_nm: float, component: str) -> None:
    if component not in _COMPONENT_TAGS:
        raise ValueError(
            f"unknown component {component!r}; use one of {sorted(_COMPONENT_TAGS)}"
        )
    if values.ndim != 2:
        raise ValueError("field arrays are two-dimensional")
    if np.iscomplexobj(values):
        data = np.ascontiguousarray(values, dtype=np.complex128)
        dtype_tag = 1
    else:
        data = np.ascontiguousarray(values, dtype=np.float64)
        dtype_tag = 0
    header = _FIELD_HEADER.pack(
        _FIELD_MAGIC, data.shape[0], data.shape[1], _dx_to_micro_nm(dx_nm),
        _COMPONENT_TAGS[component], dtype_tag,
    )
    Path(path).write_bytes(header + data.tobytes())


def load_field(path) -> tuple[str, float, np.ndarray]:
    raw = Path(path).read_bytes()
    if len(raw) < _FIELD_HEADER.size:
        raise ValueError(f"{path}: truncated field file")
    magic, n0, n1, dx_micro, comp_tag, dtype_tag = _FIELD_HEADER.unpack_from(raw)
    if magic != _FIELD_MAGIC:
        raise ValueError(f"{path}: not a field file (magic {magic!r})")
    dtype = np.complex128 if dtype_tag == 1 else np.float64
    values = np.frombuffer(
        raw, dtype=dtype, offset=_FIELD_HEADER.size
    ).reshape(n0, n1).copy()
    return _TAG_COMPONENTS[comp_tag], dx_micro / 1e6, values
