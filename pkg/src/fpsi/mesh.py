"""Structured reference meshes for the fluid rectangle, the Biot rectangle and the plate.

All coordinates are generated from one shared integer lattice so interface
x-coordinates are bit-identical across the three meshes.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, MeshIncompatibilityError

FLUID_TAGS = ("interface", "fluid_left", "fluid_right", "fluid_bottom")
BIOT_TAGS = ("interface", "biot_left", "biot_right", "biot_top")


@dataclass(frozen=True)
class RefMesh:
    """Structured triangulation (or segment mesh for the plate).

    Vertex ``(i, j)`` of a 2D mesh has index ``j * (nx + 1) + i``.
    Each quad is split along its (i, j) -> (i+1, j+1) diagonal into a
    lower triangle ``(v00, v10, v11)`` and an upper triangle ``(v00, v11, v01)``.
    """

    region: str
    vertices: np.ndarray
    cells: np.ndarray
    boundary_edges: np.ndarray
    boundary_tags: tuple
    nx: int
    ny: int
    x0: float
    x1: float
    y0: float
    y1: float
    xs: np.ndarray = field(repr=False)
    ys: np.ndarray = field(repr=False)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_cells(self) -> int:
        return len(self.cells)

    def edges_with_tag(self, tag: str) -> np.ndarray:
        mask = np.array([t == tag for t in self.boundary_tags], dtype=bool)
        return self.boundary_edges[mask] if len(mask) else np.zeros((0, 2), dtype=int)

    def vertices_with_tag(self, tag: str) -> np.ndarray:
        return np.unique(self.edges_with_tag(tag).ravel())


def _lattice(n: int, a: float, b: float) -> np.ndarray:
    # integer lattice scaled once; endpoints are exact
    pts = a + (b - a) * (np.arange(n + 1) / n)
    pts[0], pts[-1] = a, b
    return pts


def _rect_mesh(region, xs, ys, tags):
    nx, ny = len(xs) - 1, len(ys) - 1
    X, Y = np.meshgrid(xs, ys)
    verts = np.column_stack([X.ravel(), Y.ravel()])
    vid = lambda i, j: j * (nx + 1) + i  # noqa: E731
    i, j = np.meshgrid(np.arange(nx), np.arange(ny))
    i, j = i.ravel(), j.ravel()
    v00, v10, v11, v01 = vid(i, j), vid(i + 1, j), vid(i + 1, j + 1), vid(i, j + 1)
    lower = np.column_stack([v00, v10, v11])
    upper = np.column_stack([v00, v11, v01])
    cells = np.empty((2 * len(i), 3), dtype=np.int64)
    cells[0::2], cells[1::2] = lower, upper

    bottom, top, left, right = tags
    edges, etags = [], []
    for a in range(nx):
        edges.append((vid(a, 0), vid(a + 1, 0)))
        etags.append(bottom)
    for a in range(nx):
        edges.append((vid(a, ny), vid(a + 1, ny)))
        etags.append(top)
    for b in range(ny):
        edges.append((vid(0, b), vid(0, b + 1)))
        etags.append(left)
    for b in range(ny):
        edges.append((vid(nx, b), vid(nx, b + 1)))
        etags.append(right)
    return RefMesh(region, verts, cells, np.array(edges, dtype=np.int64), tuple(etags),
                   nx, ny, float(xs[0]), float(xs[-1]), float(ys[0]), float(ys[-1]), xs, ys)


def build_reference_meshes(L: float, R: float, nx: int, ny: int):
    """Return ``(fluid, biot, plate)`` meshes on (0,L)x(-R,0), (0,L)x(0,R) and (0,L)."""
    if not (L > 0 and R > 0):
        raise ConfigError(f"L and R must be positive (got L={L}, R={R})")
    if int(nx) != nx or int(ny) != ny or nx < 1 or ny < 1:
        raise ConfigError(f"nx, ny must be integers >= 1 (got nx={nx}, ny={ny})")
    nx, ny = int(nx), int(ny)
    xs = _lattice(nx, 0.0, float(L))
    ys_f = _lattice(ny, -float(R), 0.0)
    ys_b = _lattice(ny, 0.0, float(R))
    fluid = _rect_mesh("fluid", xs, ys_f, ("fluid_bottom", "interface", "fluid_left", "fluid_right"))
    biot = _rect_mesh("biot", xs, ys_b, ("interface", "biot_top", "biot_left", "biot_right"))
    pverts = np.column_stack([xs, np.zeros_like(xs)])
    pcells = np.column_stack([np.arange(nx), np.arange(1, nx + 1)])
    plate = RefMesh("plate", pverts, pcells, np.zeros((0, 2), dtype=np.int64), (),
                    nx, 0, 0.0, float(L), 0.0, 0.0, xs, np.zeros(1))
    return fluid, biot, plate


@dataclass(frozen=True)
class InterfaceMap:
    """Order-preserving correspondence plate node -> (fluid top node, biot bottom node)."""

    plate_nodes: np.ndarray
    fluid_nodes: np.ndarray
    biot_nodes: np.ndarray
    x: np.ndarray

    def __len__(self):
        return len(self.plate_nodes)

    def triples(self):
        return list(zip(self.plate_nodes.tolist(), self.fluid_nodes.tolist(), self.biot_nodes.tolist()))


def build_interface_map(fluid: RefMesh, biot: RefMesh, plate: RefMesh) -> InterfaceMap:
    fn = fluid.vertices_with_tag("interface")
    bn = biot.vertices_with_tag("interface")
    fn = fn[np.argsort(fluid.vertices[fn, 0], kind="stable")]
    bn = bn[np.argsort(biot.vertices[bn, 0], kind="stable")]
    pn = np.argsort(plate.vertices[:, 0], kind="stable")
    xf, xb, xp = fluid.vertices[fn, 0], biot.vertices[bn, 0], plate.vertices[pn, 0]
    if not (len(xf) == len(xb) == len(xp)):
        raise MeshIncompatibilityError(
            f"interface node counts differ: fluid={len(xf)}, biot={len(xb)}, plate={len(xp)}")
    if not (np.array_equal(xf, xb) and np.array_equal(xf, xp)):
        raise MeshIncompatibilityError("interface node x-coordinates do not coincide")
    if np.any(fluid.vertices[fn, 1] != 0.0) or np.any(biot.vertices[bn, 1] != 0.0):
        raise MeshIncompatibilityError("interface nodes are not on y = 0")
    return InterfaceMap(pn, fn, bn, xp.copy())
