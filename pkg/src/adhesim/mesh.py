"""Discrete geometry: tagged triangulations, the contact polyline, dof spaces.

The body is a structured rectangle triangulation whose boundary edges carry
one of three tags: the clamped part (gamma1), the traction part (gamma2) and
the contact surface (gamma c).  The contact surface is extracted as a 1D mesh
whose nodes coincide with body vertices, which makes all trace maps boolean
selections.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

GAMMA1 = "gamma1"
GAMMA2 = "gamma2"
GAMMAC = "gammac"
_TAGS = (GAMMA1, GAMMA2, GAMMAC)

DEFAULT_TAG_LAYOUT = {"bottom": GAMMAC, "top": GAMMA1, "left": GAMMA2, "right": GAMMA2}

_SIDE_NORMALS = {
    "bottom": (0.0, -1.0),
    "top": (0.0, 1.0),
    "left": (-1.0, 0.0),
    "right": (1.0, 0.0),
}


class MeshError(ValueError):
    pass


@dataclass
class BodyMesh:
    vertices: np.ndarray  # (Nv, 2)
    triangles: np.ndarray  # (Nt, 3), positively oriented
    boundary_edges: np.ndarray  # (Ne, 2) vertex pairs
    boundary_tags: np.ndarray  # (Ne,) strings from _TAGS
    boundary_normals: np.ndarray  # (Ne, 2) outward unit normals

    @property
    def n_vertices(self) -> int:
        return self.vertices.shape[0]

    def triangle_areas(self) -> np.ndarray:
        p = self.vertices
        t = self.triangles
        d1 = p[t[:, 1]] - p[t[:, 0]]
        d2 = p[t[:, 2]] - p[t[:, 0]]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    def edges_with_tag(self, tag: str) -> np.ndarray:
        return self.boundary_edges[self.boundary_tags == tag]

    def validate(self):
        areas = self.triangle_areas()
        if np.any(areas <= 0.0):
            raise MeshError("triangles must be positively oriented")
        for tag in (GAMMA1, GAMMAC):
            if not np.any(self.boundary_tags == tag):
                raise MeshError(f"boundary part {tag} must have positive measure")
        bad = set(self.boundary_tags) - set(_TAGS)
        if bad:
            raise MeshError(f"unknown boundary tags {bad}")

    def write(self, path):
        """Plain-text export: one record per line (nodes, triangles, tagged edges)."""
        lines = []
        for i, (x, y) in enumerate(self.vertices):
            lines.append(f"node {i} {float(x)!r} {float(y)!r}")
        for i, (a, b, c) in enumerate(self.triangles):
            lines.append(f"tri {i} {a} {b} {c}")
        for i, ((a, b), tag) in enumerate(zip(self.boundary_edges, self.boundary_tags)):
            lines.append(f"edge {i} {a} {b} {tag}")
        with open(path, "w") as fh:
            fh.write("\n".join(lines) + "\n")


@dataclass
class SurfaceMesh:
    coords: np.ndarray  # (Ns, 2) node coordinates, bit-equal to parents
    arclength: np.ndarray  # (Ns,)
    segments: np.ndarray  # (Ns-1, 2) local node pairs, consecutive
    parent: np.ndarray  # (Ns,) body vertex index per surface node
    seg_normals: np.ndarray  # (Ns-1, 2) outward normals of the parent edges
    seg_length: np.ndarray  # (Ns-1,)

    @property
    def n_nodes(self) -> int:
        return self.coords.shape[0]

    @property
    def total_length(self) -> float:
        return float(np.sum(self.seg_length))


def build_rect_mesh(nx, ny, extents=(1.0, 1.0), origin=(0.0, 0.0), tag_layout=None) -> BodyMesh:
    """Structured triangulation of a rectangle with per-side boundary tags."""
    if nx < 2 or ny < 2:
        raise MeshError("need nx, ny >= 2")
    layout = dict(DEFAULT_TAG_LAYOUT if tag_layout is None else tag_layout)
    missing = {"bottom", "top", "left", "right"} - set(layout)
    if missing:
        raise MeshError(f"tag layout missing sides {sorted(missing)}")
    for side, tag in layout.items():
        if tag not in _TAGS:
            raise MeshError(f"side {side}: unknown tag {tag}")
    tags_used = set(layout.values())
    if GAMMA1 not in tags_used or GAMMAC not in tags_used:
        raise MeshError("layout must assign both gamma1 (clamped) and gammac (contact)")

    lx, ly = extents
    x0, y0 = origin
    xs = x0 + lx * np.arange(nx + 1) / nx
    ys = y0 + ly * np.arange(ny + 1) / ny
    xx, yy = np.meshgrid(xs, ys)  # row j: y = ys[j]
    vertices = np.column_stack([xx.ravel(), yy.ravel()])

    def vid(i, j):
        return j * (nx + 1) + i

    tris = []
    for j in range(ny):
        for i in range(nx):
            v00, v10 = vid(i, j), vid(i + 1, j)
            v01, v11 = vid(i, j + 1), vid(i + 1, j + 1)
            tris.append((v00, v10, v11))
            tris.append((v00, v11, v01))
    triangles = np.array(tris, dtype=np.int64)

    edges, tags, normals = [], [], []

    def add_side(side, pairs):
        n = _SIDE_NORMALS[side]
        for a, b in pairs:
            edges.append((a, b))
            tags.append(layout[side])
            normals.append(n)

    add_side("bottom", [(vid(i, 0), vid(i + 1, 0)) for i in range(nx)])
    add_side("top", [(vid(i, ny), vid(i + 1, ny)) for i in range(nx)])
    add_side("left", [(vid(0, j), vid(0, j + 1)) for j in range(ny)])
    add_side("right", [(vid(nx, j), vid(nx, j + 1)) for j in range(ny)])

    mesh = BodyMesh(
        vertices=vertices,
        triangles=triangles,
        boundary_edges=np.array(edges, dtype=np.int64),
        boundary_tags=np.array(tags, dtype=object),
        boundary_normals=np.array(normals, dtype=float),
    )
    mesh.validate()
    return mesh


def extract_surface(mesh: BodyMesh) -> SurfaceMesh:
    """Order the contact edges into a single polyline and build the parent map."""
    sel = mesh.boundary_tags == GAMMAC
    edges = mesh.boundary_edges[sel]
    normals = mesh.boundary_normals[sel]
    if edges.shape[0] == 0:
        raise MeshError("no contact edges")

    # adjacency of the contact graph; a single open polyline has exactly two
    # degree-1 endpoints and connected interior
    from collections import defaultdict

    nbr = defaultdict(list)
    for eid, (a, b) in enumerate(edges):
        nbr[a].append((b, eid))
        nbr[b].append((a, eid))
    endpoints = [v for v, lst in nbr.items() if len(lst) == 1]
    if len(endpoints) != 2 or any(len(lst) > 2 for lst in nbr.values()):
        raise MeshError("contact edges do not form a single open polyline")

    start = min(endpoints, key=lambda v: (mesh.vertices[v, 0], mesh.vertices[v, 1]))
    chain = [start]
    used = set()
    cur = start
    while True:
        nxt = [(v, eid) for v, eid in nbr[cur] if eid not in used]
        if not nxt:
            break
        v, eid = nxt[0]
        used.add(eid)
        chain.append(v)
        cur = v
    if len(used) != edges.shape[0]:
        raise MeshError("contact edges do not form a single open polyline")

    parent = np.array(chain, dtype=np.int64)
    coords = mesh.vertices[parent]
    seg_vec = np.diff(coords, axis=0)
    seg_length = np.hypot(seg_vec[:, 0], seg_vec[:, 1])
    arclength = np.concatenate([[0.0], np.cumsum(seg_length)])
    segments = np.column_stack([np.arange(len(chain) - 1), np.arange(1, len(chain))])

    # per-segment normal copied from the matching tagged edge
    edge_key = {}
    for eid, (a, b) in enumerate(edges):
        edge_key[frozenset((int(a), int(b)))] = normals[eid]
    seg_normals = np.array(
        [edge_key[frozenset((int(parent[a]), int(parent[b])))] for a, b in segments]
    )

    return SurfaceMesh(
        coords=coords,
        arclength=arclength,
        segments=segments,
        parent=parent,
        seg_normals=seg_normals,
        seg_length=seg_length,
    )


@dataclass
class Spaces:
    """Dof bookkeeping for scalars on the body, vectors on the body, scalars on the contact line."""

    mesh: BodyMesh
    surface: SurfaceMesh
    free_mask: np.ndarray = field(init=False)  # (2 Nv,) True on unconstrained vector dofs
    free_index: np.ndarray = field(init=False)

    def __post_init__(self):
        nv = self.mesh.n_vertices
        constrained = np.zeros(nv, dtype=bool)
        for a, b in self.mesh.edges_with_tag(GAMMA1):
            constrained[a] = constrained[b] = True
        mask = np.ones(2 * nv, dtype=bool)
        mask[2 * np.where(constrained)[0]] = False
        mask[2 * np.where(constrained)[0] + 1] = False
        self.free_mask = mask
        self.free_index = np.where(mask)[0]

    @property
    def n_scalar(self) -> int:
        return self.mesh.n_vertices

    @property
    def n_surface(self) -> int:
        return self.surface.n_nodes

    @property
    def n_vector_free(self) -> int:
        return int(self.free_mask.sum())

    def trace_matrix(self) -> sp.csr_matrix:
        """Boolean selector mapping body scalars to contact-node values."""
        ns, nv = self.n_surface, self.n_scalar
        return sp.csr_matrix(
            (np.ones(ns), (np.arange(ns), self.surface.parent)), shape=(ns, nv)
        )

    def trace_scalar(self, values: np.ndarray) -> np.ndarray:
        return values[self.surface.parent]

    def trace_vector(self, u_full: np.ndarray) -> np.ndarray:
        """(Ns, 2) nodal displacement values on the contact line."""
        p = self.surface.parent
        return np.column_stack([u_full[2 * p], u_full[2 * p + 1]])

    def restrict(self, vec_full: np.ndarray) -> np.ndarray:
        return vec_full[self.free_index]

    def expand(self, vec_free: np.ndarray) -> np.ndarray:
        out = np.zeros(2 * self.n_scalar)
        out[self.free_index] = vec_free
        return out

    def apply_constraints(self, u_full: np.ndarray) -> np.ndarray:
        out = u_full.copy()
        out[~self.free_mask] = 0.0
        return out


def build_spaces(mesh: BodyMesh, surface: SurfaceMesh) -> Spaces:
    if np.any(surface.parent >= mesh.n_vertices):
        raise MeshError("surface parent map out of range")
    return Spaces(mesh=mesh, surface=surface)
