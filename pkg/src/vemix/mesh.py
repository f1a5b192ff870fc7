"""Polygonal meshes of the unit square: geometry, generators, checks and I/O."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np
from scipy.spatial import Voronoi

from .poly import ElementFrame
from .quadrature import DegenerateElementError, area_centroid, signed_area


class MeshParseError(ValueError):
    pass


class InvalidResolutionError(ValueError):
    pass


@dataclass(frozen=True)
class ElementGeometry:
    frame: ElementFrame
    vertices: np.ndarray
    normals: np.ndarray  # outward unit normal per edge (edge i: vertex i -> i+1)
    lengths: np.ndarray

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def centroid(self) -> np.ndarray:
        return np.asarray(self.frame.centroid)

    @property
    def diameter(self) -> float:
        return self.frame.diameter

    @property
    def area(self) -> float:
        return self.frame.area

    @property
    def perimeter(self) -> float:
        return float(self.lengths.sum())


def polygon_geometry(vertices) -> ElementGeometry:
    v = np.asarray(vertices, dtype=float)
    area = signed_area(v)
    if not area > 0:
        raise DegenerateElementError(f"degenerate or clockwise polygon (signed area {area:g})")
    c = area_centroid(v)
    diffs = v[:, None, :] - v[None, :, :]
    diam = float(np.sqrt((diffs ** 2).sum(-1)).max())
    e = np.roll(v, -1, axis=0) - v
    lengths = np.hypot(e[:, 0], e[:, 1])
    if np.any(lengths == 0):
        raise DegenerateElementError("repeated vertex")
    normals = np.column_stack([e[:, 1], -e[:, 0]]) / lengths[:, None]
    frame = ElementFrame((float(c[0]), float(c[1])), diam, area)
    for arr in (v, normals, lengths):
        arr.setflags(write=False)
    return ElementGeometry(frame, v, normals, lengths)


@dataclass
class PolygonalMesh:
    """Vertices plus counterclockwise vertex loops.

    ``meta`` records how the mesh was generated (family, n, seed).
    """

    vertices: np.ndarray
    elements: list[np.ndarray]
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=float)
        self.elements = [np.asarray(e, dtype=int) for e in self.elements]

    @property
    def n_elements(self) -> int:
        return len(self.elements)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    def element_vertices(self, i: int) -> np.ndarray:
        return self.vertices[self.elements[i]]

    @cached_property
    def edges(self) -> np.ndarray:
        """Unique edges as (lower vertex, higher vertex), shape (n_edges, 2)."""
        return np.array(sorted(self._edge_table), dtype=int).reshape(-1, 2)

    @cached_property
    def _edge_table(self) -> dict:
        table: dict[tuple[int, int], list[int]] = {}
        for ei, loop in enumerate(self.elements):
            for a, b in zip(loop, np.roll(loop, -1)):
                table.setdefault((min(a, b), max(a, b)), []).append(ei)
        return table

    @cached_property
    def edge_index(self) -> dict:
        return {tuple(e): i for i, e in enumerate(self.edges.tolist())}

    @cached_property
    def edge_elements(self) -> list[list[int]]:
        return [self._edge_table[tuple(e)] for e in self.edges.tolist()]

    @cached_property
    def boundary_edges(self) -> np.ndarray:
        return np.array([len(els) == 1 for els in self.edge_elements])

    @cached_property
    def boundary_vertices(self) -> np.ndarray:
        mask = np.zeros(self.n_vertices, dtype=bool)
        mask[self.edges[self.boundary_edges].ravel()] = True
        return mask

    def geometry(self, i: int) -> ElementGeometry:
        return element_geometry(self, i)

    @cached_property
    def geometries(self) -> list[ElementGeometry]:
        return [polygon_geometry(self.element_vertices(i)) for i in range(self.n_elements)]

    def validate(self) -> None:
        """Check the structural invariants; raises ValueError on failure."""
        for i in range(self.n_elements):
            loop = self.elements[i]
            if len(loop) < 3:
                raise ValueError(f"element {i} has fewer than 3 vertices")
            if len(set(loop.tolist())) != len(loop):
                raise ValueError(f"element {i} repeats a vertex")
            if signed_area(self.element_vertices(i)) <= 0:
                raise ValueError(f"element {i} is not counterclockwise")
        directed = {}
        for i, loop in enumerate(self.elements):
            for a, b in zip(loop, np.roll(loop, -1)):
                if (a, b) in directed:
                    raise ValueError(f"edge ({a},{b}) traversed twice in the same direction")
                directed[(a, b)] = i
        for els in self.edge_elements:
            if len(els) > 2:
                raise ValueError("edge shared by more than two elements")


def element_geometry(mesh: PolygonalMesh, i: int) -> ElementGeometry:
    if not 0 <= i < mesh.n_elements:
        raise IndexError(f"element id {i} out of range")
    return mesh.geometries[i]


def mesh_size(mesh: PolygonalMesh) -> float:
    """Mean element diameter."""
    if mesh.n_elements == 0:
        raise ValueError("empty mesh")
    return float(np.mean([g.diameter for g in mesh.geometries]))


# --------------------------------------------------------------------------
# regularity


@dataclass(frozen=True)
class RegularityReport:
    rho_star_shaped: float
    rho_edge: float

    def passes(self, rho: float) -> bool:
        return self.rho_star_shaped >= rho and self.rho_edge >= rho


def check_regularity(mesh: PolygonalMesh) -> list[RegularityReport]:
    """Per-element star-shapedness and vertex-separation ratios.

    The star-shapedness ratio is the radius of the largest centroid-centred
    ball inside the kernel of the polygon (the intersection of the inner
    half-planes of its edges), divided by the diameter.
    """
    out = []
    for g in mesh.geometries:
        v = g.vertices
        d = np.sqrt(((v[:, None, :] - v[None, :, :]) ** 2).sum(-1))
        d[np.diag_indices_from(d)] = np.inf
        rho_edge = d.min() / g.diameter
        # signed distance of the centroid to each edge's supporting line
        dist = np.einsum("ij,ij->i", g.centroid - v, -g.normals)
        rho_star = max(float(dist.min()), 0.0) / g.diameter
        out.append(RegularityReport(min(rho_star, 1.0), min(float(rho_edge), 1.0)))
    return out


# --------------------------------------------------------------------------
# generators


def quad_mesh(n: int) -> PolygonalMesh:
    if n < 2:
        raise InvalidResolutionError(f"resolution must be >= 2, got {n}")
    t = np.linspace(0.0, 1.0, n + 1)
    xx, yy = np.meshgrid(t, t, indexing="xy")
    verts = np.column_stack([xx.ravel(), yy.ravel()])
    elements = []
    for j in range(n):
        for i in range(n):
            a = j * (n + 1) + i
            elements.append([a, a + 1, a + n + 2, a + n + 1])
    return PolygonalMesh(verts, elements, {"family": "quad", "n": n})


def _clipped_voronoi(seeds: np.ndarray) -> tuple[np.ndarray, list[list[int]]]:
    # Voronoi cells of seeds in the unit square, clipped by reflecting the seeds
    # across the four sides (cells of the originals are then bounded by the walls)
    s = np.asarray(seeds, dtype=float)
    mirrored = [s,
                np.column_stack([-s[:, 0], s[:, 1]]),
                np.column_stack([2.0 - s[:, 0], s[:, 1]]),
                np.column_stack([s[:, 0], -s[:, 1]]),
                np.column_stack([s[:, 0], 2.0 - s[:, 1]])]
    vor = Voronoi(np.vstack(mirrored))
    verts = vor.vertices.copy()
    # snap to the walls
    for axis in (0, 1):
        verts[np.abs(verts[:, axis]) < 1e-12, axis] = 0.0
        verts[np.abs(verts[:, axis] - 1.0) < 1e-12, axis] = 1.0
    # merge coincident vertices produced by cocircular seeds
    key = np.round(verts / 1e-11).astype(np.int64)
    _, first, inverse = np.unique(key, axis=0, return_index=True, return_inverse=True)
    inverse = inverse.ravel()
    cells = []
    for i in range(len(s)):
        region = vor.regions[vor.point_region[i]]
        if -1 in region or len(region) == 0:
            raise DegenerateElementError("unbounded Voronoi cell for an interior seed")
        loop = []
        for r in region:
            v = int(first[inverse[r]])
            if not loop or loop[-1] != v:
                loop.append(v)
        if loop[0] == loop[-1]:
            loop.pop()
        pts = verts[loop]
        ang = np.arctan2(pts[:, 1] - s[i, 1], pts[:, 0] - s[i, 0])
        loop = [loop[j] for j in np.argsort(ang)]
        cells.append(loop)
    return _compact(verts, cells)


def _compact(verts, cells):
    used = sorted({v for c in cells for v in c})
    remap = {v: i for i, v in enumerate(used)}
    return np.asarray(verts)[used], [[remap[v] for v in c] for c in cells]


def _on_wall(p, tol=1e-12):
    return [abs(p[0]) < tol or abs(p[0] - 1) < tol, abs(p[1]) < tol or abs(p[1] - 1) < tol]


def _merge_short_edges(verts: np.ndarray, cells: list[list[int]], rho: float):
    """Collapse edges shorter than rho * (element diameter)."""
    verts = np.array(verts, dtype=float)
    for _ in range(1000):
        target = None
        for c in cells:
            pts = verts[c]
            diam = np.sqrt(((pts[:, None] - pts[None]) ** 2).sum(-1)).max()
            for a, b in zip(c, c[1:] + c[:1]):
                if np.hypot(*(verts[a] - verts[b])) < rho * diam:
                    target = (a, b)
                    break
            if target:
                break
        if target is None:
            break
        a, b = target
        wa, wb = _on_wall(verts[a]), _on_wall(verts[b])
        ca, cb = all(wa), all(wb)
        if ca and cb:
            raise DegenerateElementError("short edge between two corners")
        if ca or (sum(wa) > sum(wb)):
            keep, drop, pos = a, b, verts[a]
        elif cb or (sum(wb) > sum(wa)):
            keep, drop, pos = b, a, verts[b]
        elif any(wa):
            # both on the same wall: midpoint stays on it
            keep, drop, pos = a, b, 0.5 * (verts[a] + verts[b])
        else:
            keep, drop, pos = a, b, 0.5 * (verts[a] + verts[b])
        verts[keep] = pos
        new_cells = []
        for c in cells:
            c = [keep if v == drop else v for v in c]
            dedup = [v for i, v in enumerate(c) if v != c[i - 1]]
            new_cells.append(dedup)
        cells = new_cells
    return _compact(verts, cells)


def _lloyd_step(seeds: np.ndarray) -> np.ndarray:
    verts, cells = _clipped_voronoi(seeds)
    return np.array([area_centroid(verts[c]) for c in cells])


def voronoi_mesh(n: int, seed: int = 0, lloyd_iterations: int = 3, merge_rho: float = 0.05) -> PolygonalMesh:
    """Lloyd-relaxed Voronoi tessellation of n^2 random seeds, clipped to [0,1]^2."""
    if n < 2:
        raise InvalidResolutionError(f"resolution must be >= 2, got {n}")
    rng = np.random.default_rng(seed)
    seeds = rng.random((n * n, 2))
    for _ in range(lloyd_iterations):
        seeds = _lloyd_step(seeds)
    verts, cells = _clipped_voronoi(seeds)
    verts, cells = _merge_short_edges(verts, cells, merge_rho)
    return PolygonalMesh(verts, cells, {"family": "voro", "n": n, "seed": seed})


def hexa_mesh(n: int, seed: int = 0, amplitude: float = 0.1) -> PolygonalMesh:
    """Hexagonal tiling of [0,1]^2 with randomly displaced interior vertices.

    Built as the clipped Voronoi diagram of a staggered n x n lattice; interior
    vertices move by at most ``amplitude / n`` (``amplitude`` <= 0.2).
    """
    if n < 2:
        raise InvalidResolutionError(f"resolution must be >= 2, got {n}")
    if not 0 <= amplitude <= 0.2:
        raise ValueError("hexa perturbation amplitude must lie in [0, 0.2]")
    i, j = np.meshgrid(np.arange(n), np.arange(n), indexing="xy")
    seeds = np.column_stack([((i + 0.25 + 0.5 * (j % 2)) / n).ravel(), ((j + 0.5) / n).ravel()])
    verts, cells = _clipped_voronoi(seeds)
    verts, cells = _merge_short_edges(verts, cells, 0.02)
    rng = np.random.default_rng(seed)
    interior = np.array([not any(_on_wall(p)) for p in verts])
    r = amplitude / n * np.sqrt(rng.random(len(verts)))
    theta = 2 * np.pi * rng.random(len(verts))
    shift = np.column_stack([r * np.cos(theta), r * np.sin(theta)])
    verts = verts + shift * interior[:, None]
    return PolygonalMesh(verts, cells, {"family": "hexa", "n": n, "seed": seed, "amplitude": amplitude})


def generate_mesh(family: str, n: int, seed: int = 0, **kwargs) -> PolygonalMesh:
    if n < 2:
        raise InvalidResolutionError(f"resolution must be >= 2, got {n}")
    if family == "quad":
        return quad_mesh(n)
    if family == "hexa":
        return hexa_mesh(n, seed, **kwargs)
    if family == "voro":
        return voronoi_mesh(n, seed, **kwargs)
    raise ValueError(f"unknown mesh family {family!r}")


# --------------------------------------------------------------------------
# I/O


def write_mesh(mesh: PolygonalMesh, path) -> None:
    lines = []
    if mesh.meta:
        lines.append("# " + " ".join(f"{k}={v}" for k, v in mesh.meta.items()))
    lines.append(f"{mesh.n_vertices} {mesh.n_elements}")
    lines += [f"{x!r} {y!r}" for x, y in mesh.vertices.tolist()]
    lines += [" ".join(str(v) for v in [len(e), *e.tolist()]) for e in mesh.elements]
    Path(path).write_text("\n".join(lines) + "\n")


def read_mesh(path) -> PolygonalMesh:
    """Read the ASCII format: ``npoints ncells``, then points, then cells."""
    rows = []
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        s = raw.strip()
        if not s or s.startswith("#"):
            continue
        rows.append((lineno, s.split()))
    if not rows:
        raise MeshParseError("empty mesh file")

    def ints(lineno, toks):
        try:
            return [int(t) for t in toks]
        except ValueError:
            raise MeshParseError(f"line {lineno}: expected integers, got {' '.join(toks)!r}") from None

    lineno, head = rows[0]
    if len(head) != 2:
        raise MeshParseError(f"line {lineno}: header must be 'npoints ncells'")
    npts, ncells = ints(lineno, head)
    if npts < 3 or ncells < 1:
        raise MeshParseError(f"line {lineno}: bad counts {npts} {ncells}")
    if len(rows) != 1 + npts + ncells:
        raise MeshParseError(f"expected {npts} points and {ncells} cells, found {len(rows) - 1} data lines")
    verts = np.empty((npts, 2))
    for i in range(npts):
        lineno, toks = rows[1 + i]
        if len(toks) != 2:
            raise MeshParseError(f"line {lineno}: expected 'x y'")
        try:
            verts[i] = [float(t) for t in toks]
        except ValueError:
            raise MeshParseError(f"line {lineno}: bad coordinate") from None
    cells = []
    for c in range(ncells):
        lineno, toks = rows[1 + npts + c]
        vals = ints(lineno, toks)
        m = vals[0]
        if m < 3 or len(vals) != m + 1:
            raise MeshParseError(f"line {lineno}: cell declares {m} vertices but lists {len(vals) - 1}")
        idx = vals[1:]
        if min(idx) < 0 or max(idx) >= npts:
            raise MeshParseError(f"line {lineno}: vertex index out of range [0, {npts})")
        if signed_area(verts[idx]) <= 0:
            raise MeshParseError(f"line {lineno}: cell is not counterclockwise")
        cells.append(idx)
    return PolygonalMesh(verts, cells)
