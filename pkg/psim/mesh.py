"""Admissible one-dimensional three-layer finite volume mesh.

Each region carries ``nodes_per_region`` uniformly spaced collocation nodes,
endpoints included. Cells are the Voronoi boxes of the nodes clipped to their
region, so a region interface is always a face and every cell lies in exactly
one region. Faces are numbered left to right; face ``f`` joins cells ``f - 1``
and ``f``, and the two outer faces carry Dirichlet data.
"""

import logging
from dataclasses import dataclass, field
from enum import Enum, IntEnum
from functools import cached_property
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from numpy.typing import NDArray

from .exceptions import ConfigError, MeshError

logger = logging.getLogger(__name__)

NO_CELL = -1


class Region(IntEnum):
    """Layers of the device, left to right."""

    HTL = 0
    INTRINSIC = 1
    ETL = 2


class FaceKind(str, Enum):
    """Face classification."""

    INTERIOR = "interior"
    DIRICHLET = "dirichlet"
    NEUMANN = "neumann"


@dataclass(frozen=True)
class Cell:
    """One control volume."""

    index: int
    center: float
    measure: float
    region: Region


@dataclass(frozen=True)
class Face:
    """One face with its two-point flux geometry."""

    index: int
    kind: FaceKind
    cell_K: int
    cell_L: int
    position: float
    measure: float
    distance: float
    transmissibility: float
    in_intrinsic_interior: bool


@dataclass(frozen=True, eq=False)
class Mesh:
    """Cell and face arrays of a three-layer mesh.

    Attributes:
        breakpoints: Region boundaries ``x0 < x1 < x2 < x3``.
        nodes_per_region: Collocation nodes per region.
        face_positions: Face coordinates, ``3 n + 1`` entries.
        centers: Cell centres, ``3 n`` entries.
        measures: Cell measures ``m_K``.
        regions: Region tag per cell.
        face_K: Cell owning each face; the left cell of interior faces.
        face_L: Right cell of interior faces, ``NO_CELL`` on boundary faces.
        distances: ``d_sigma``, centre to centre or centre to boundary.
    """

    breakpoints: Tuple[float, float, float, float]
    nodes_per_region: int
    face_positions: NDArray[np.float64] = field(repr=False)
    centers: NDArray[np.float64] = field(repr=False)
    measures: NDArray[np.float64] = field(repr=False)
    regions: NDArray[np.int_] = field(repr=False)
    face_K: NDArray[np.int_] = field(repr=False)
    face_L: NDArray[np.int_] = field(repr=False)
    distances: NDArray[np.float64] = field(repr=False)

    @property
    def n_cells(self) -> int:
        return self.centers.size

    @property
    def n_faces(self) -> int:
        return self.face_positions.size

    @property
    def length(self) -> float:
        return self.breakpoints[3] - self.breakpoints[0]

    @cached_property
    def face_measures(self) -> NDArray[np.float64]:
        """``m_sigma``, one in 1D."""
        return np.ones(self.n_faces)

    @cached_property
    def transmissibilities(self) -> NDArray[np.float64]:
        """``tau_sigma = m_sigma / d_sigma``."""
        return self.face_measures / self.distances

    @cached_property
    def face_kinds(self) -> List[FaceKind]:
        kinds = [FaceKind.INTERIOR] * self.n_faces
        kinds[0] = kinds[-1] = FaceKind.DIRICHLET
        return kinds

    @cached_property
    def interior_faces(self) -> NDArray[np.int_]:
        """Indices of faces with two neighbours."""
        return np.arange(1, self.n_faces - 1)

    @cached_property
    def dirichlet_faces(self) -> NDArray[np.int_]:
        return np.array([0, self.n_faces - 1])

    @cached_property
    def intrinsic_mask(self) -> NDArray[np.bool_]:
        return self.regions == Region.INTRINSIC

    @cached_property
    def intrinsic_cells(self) -> NDArray[np.int_]:
        """Global indices of the intrinsic cells, in order."""
        return np.flatnonzero(self.intrinsic_mask)

    @cached_property
    def intrinsic_interior_faces(self) -> NDArray[np.int_]:
        """Faces whose two neighbours are both intrinsic."""
        inner = self.interior_faces
        both = self.intrinsic_mask[self.face_K[inner]] & self.intrinsic_mask[self.face_L[inner]]
        return inner[both]

    @property
    def intrinsic_length(self) -> float:
        return self.breakpoints[2] - self.breakpoints[1]

    @property
    def h(self) -> float:
        """Largest node spacing over the three regions."""
        widths = np.diff(self.breakpoints)
        return float(widths.max() / (self.nodes_per_region - 1))

    @property
    def dirichlet_slots(self) -> Dict[int, int]:
        """Storage index of the Dirichlet value of each boundary face."""
        return {0: 0, self.n_faces - 1: 1}

    @cached_property
    def faces_of_cell(self) -> List[Tuple[int, int]]:
        """The two faces bounding each cell."""
        return [(k, k + 1) for k in range(self.n_cells)]

    @property
    def cells(self) -> List[Cell]:
        return [
            Cell(k, float(c), float(m), Region(int(r)))
            for k, (c, m, r) in enumerate(zip(self.centers, self.measures, self.regions))
        ]

    @property
    def faces(self) -> List[Face]:
        inner = set(self.intrinsic_interior_faces.tolist())
        return [
            Face(
                index=f,
                kind=self.face_kinds[f],
                cell_K=int(self.face_K[f]),
                cell_L=int(self.face_L[f]),
                position=float(self.face_positions[f]),
                measure=float(self.face_measures[f]),
                distance=float(self.distances[f]),
                transmissibility=float(self.transmissibilities[f]),
                in_intrinsic_interior=f in inner,
            )
            for f in range(self.n_faces)
        ]

    @cached_property
    def regularity(self) -> float:
        """Largest xi with ``d_sigma >= xi m_K`` and ``m_K >= xi sum d_sigma``."""
        left = self.distances[:-1]
        right = self.distances[1:]
        lower = np.minimum(left, right) / self.measures
        upper = self.measures / (left + right)
        return float(min(lower.min(), upper.min()))

    def region_cells(self, region: Region) -> NDArray[np.int_]:
        return np.flatnonzero(self.regions == region)

    def is_compatible(self, other: "Mesh") -> bool:
        """True if both meshes have the same layout."""
        return self.nodes_per_region == other.nodes_per_region and np.array_equal(
            self.breakpoints, other.breakpoints
        )

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Mesh) and self.is_compatible(other)

    def __hash__(self) -> int:
        return hash((self.breakpoints, self.nodes_per_region))


def build_three_layer_mesh(breakpoints: Sequence[float], nodes_per_region: int) -> Mesh:
    """Build the three-layer mesh.

    Args:
        breakpoints: ``[x0, x1, x2, x3]``, strictly increasing.
        nodes_per_region: Collocation nodes per region, at least 2.

    Returns:
        A mesh with ``3 * nodes_per_region`` cells and two Dirichlet faces.

    Raises:
        ConfigError: If the breakpoints are not strictly increasing or too few
            nodes are requested.
    """
    points = tuple(float(x) for x in breakpoints)
    if len(points) != 4 or not all(np.isfinite(points)):
        raise ConfigError(f"expected four finite breakpoints, got {list(breakpoints)}")
    if any(b <= a for a, b in zip(points[:-1], points[1:])):
        raise ConfigError(f"breakpoints must be strictly increasing, got {list(points)}")
    if nodes_per_region < 2:
        raise ConfigError(f"nodes_per_region must be at least 2, got {nodes_per_region}")

    face_chunks: List[NDArray[np.float64]] = []
    for region in Region:
        a, b = points[region], points[region + 1]
        nodes = np.linspace(a, b, nodes_per_region)
        region_faces = np.concatenate(([a], 0.5 * (nodes[1:] + nodes[:-1]), [b]))
        face_chunks.append(region_faces if region == Region.HTL else region_faces[1:])
    faces = np.concatenate(face_chunks)

    centers = 0.5 * (faces[1:] + faces[:-1])
    measures = np.diff(faces)
    regions = np.repeat(np.array([r.value for r in Region]), nodes_per_region)

    n_faces = faces.size
    face_K = np.arange(-1, n_faces - 1)
    face_L = np.arange(n_faces)
    face_L[-1] = NO_CELL
    distances = np.empty(n_faces)
    distances[1:-1] = np.diff(centers)
    distances[0] = centers[0] - faces[0]
    distances[-1] = faces[-1] - centers[-1]
    # face 0 is seen from its only neighbour, cell 0
    face_K[0] = 0
    face_L[0] = NO_CELL

    mesh = Mesh(
        breakpoints=points,  # type: ignore[arg-type]
        nodes_per_region=nodes_per_region,
        face_positions=faces,
        centers=centers,
        measures=measures,
        regions=regions,
        face_K=face_K,
        face_L=face_L,
        distances=distances,
    )
    logger.debug(
        "built mesh: %d cells, %d faces, regularity %.3f",
        mesh.n_cells,
        mesh.n_faces,
        mesh.regularity,
    )
    return mesh


def project_to_coarser(
    fine: Mesh,
    coarse: Mesh,
    values_on_fine: NDArray[np.float64],
    region: Optional[Region] = None,
) -> NDArray[np.float64]:
    """Sample a fine cell vector at the coarse cell centres.

    Uses the region-wise piecewise linear interpolant of the fine values, which
    is exact sampling wherever a coarse centre coincides with a fine one.

    Args:
        fine: Mesh the values live on.
        coarse: Target mesh, a nested coarsening of ``fine``.
        values_on_fine: One value per fine cell, or per cell of ``region``.
        region: Restrict to one region (e.g. for vacancy fields).

    Raises:
        MeshError: If the meshes are not nested.
    """
    if not np.allclose(fine.breakpoints, coarse.breakpoints, rtol=0.0, atol=1e-12 * fine.length):
        raise MeshError(
            f"breakpoints differ: {list(fine.breakpoints)} vs {list(coarse.breakpoints)}"
        )
    n_f, n_c = fine.nodes_per_region, coarse.nodes_per_region
    if n_c > n_f or (n_f - 1) % (n_c - 1) != 0:
        raise MeshError(f"a {n_c}-node mesh is not a coarsening of a {n_f}-node mesh")

    values = np.asarray(values_on_fine, dtype=float)
    regions = [region] if region is not None else list(Region)
    expected = sum(fine.region_cells(r).size for r in regions)
    if values.size != expected:
        raise MeshError(f"expected {expected} fine values, got {values.size}")

    out: List[NDArray[np.float64]] = []
    offset = 0
    for r in regions:
        fine_cells = fine.region_cells(r)
        chunk = values[offset : offset + fine_cells.size]
        offset += fine_cells.size
        out.append(np.interp(coarse.centers[coarse.region_cells(r)], fine.centers[fine_cells], chunk))
    return np.concatenate(out)
