"""Two-body triangulated meshes with a doubled-node interface polyline.

The canonical geometry is two stacked rectangles: body 1 occupies
[0, W] x [0, H], body 2 occupies [0, W] x [H, 2H].  The common line
y = H is the glue interface; its nodes exist twice (once per body) and the
bodies only communicate through the jump operators built here.  The unit
normal stored per interface node is the outward normal of body 2, i.e.
(0, -1) for the canonical geometry, and the tangent is its +90 degree
rotation.

Boundary edges are tagged ``dirichlet`` (bottom edge), ``neumann`` (top
edge) or ``free`` (sides).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

DIRICHLET = "dirichlet"
NEUMANN = "neumann"
FREE = "free"


class GeometryError(ValueError):
    pass


@dataclass(frozen=True)
class InterfaceMesh:
    """1-D mesh of the interface polyline (indices refer to pair slots)."""

    segments: np.ndarray        # (n_seg, 2) indices into the pair list
    lengths: np.ndarray         # (n_seg,)
    arclength_coords: np.ndarray  # (n_pairs,)

    @property
    def n_nodes(self) -> int:
        return self.arclength_coords.shape[0]

    @property
    def total_length(self) -> float:
        return float(self.lengths.sum())

    def lumped_weights(self) -> np.ndarray:
        """Nodal weights = half the length of each adjacent segment."""
        w = np.zeros(self.n_nodes)
        for (i, j), ell in zip(self.segments, self.lengths):
            w[i] += 0.5 * ell
            w[j] += 0.5 * ell
        return w


@dataclass(frozen=True)
class TwoBodyMesh:
    nodes: np.ndarray           # (n_nodes, 2)
    triangles: np.ndarray       # (n_tri, 3)
    tri_labels: np.ndarray      # (n_tri,) in {1, 2}
    boundary_edges: np.ndarray  # (n_bed, 2) node indices
    boundary_tags: list         # per edge: dirichlet | neumann | free
    node_pairs: np.ndarray      # (n_pairs, 2): (side1 node id, side2 node id)
    normal_n2: np.ndarray       # (n_pairs, 2) unit normal of body 2 on the interface
    interface: InterfaceMesh = field(repr=False)

    @property
    def n_nodes(self) -> int:
        return self.nodes.shape[0]

    @property
    def n_pairs(self) -> int:
        return self.node_pairs.shape[0]

    def tangent(self) -> np.ndarray:
        """Tangent per interface node: normal rotated by +90 degrees."""
        n = self.normal_n2
        return np.column_stack([-n[:, 1], n[:, 0]])

    def validate(self) -> None:
        if not np.allclose(
            self.nodes[self.node_pairs[:, 0]], self.nodes[self.node_pairs[:, 1]],
            rtol=0.0, atol=0.0,
        ):
            raise GeometryError("paired interface nodes must coincide exactly")
        flat = self.node_pairs.ravel()
        if len(set(flat.tolist())) != flat.size:
            raise GeometryError("an interface node appears in more than one pair")
        nodes1 = set(self.triangles[self.tri_labels == 1].ravel().tolist())
        nodes2 = set(self.triangles[self.tri_labels == 2].ravel().tolist())
        if nodes1 & nodes2:
            raise GeometryError("bodies share node ids; interface must be doubled")
        norms = np.linalg.norm(self.normal_n2, axis=1)
        if not np.allclose(norms, 1.0, atol=1e-12):
            raise GeometryError("normal_n2 must have unit length")


def _interface_mesh_from_pairs(coords: np.ndarray) -> InterfaceMesh:
    """Chain consecutive pair coordinates into a polyline mesh."""
    n = coords.shape[0]
    segs = np.column_stack([np.arange(n - 1), np.arange(1, n)])
    lengths = np.linalg.norm(coords[segs[:, 1]] - coords[segs[:, 0]], axis=1)
    if n > 1 and np.any(lengths <= 0.0):
        raise GeometryError("interface segment of non-positive length")
    arc = np.concatenate([[0.0], np.cumsum(lengths)])
    return InterfaceMesh(segments=segs, lengths=lengths, arclength_coords=arc)


def build_rect_two_body(width: float, height_each: float, nx: int, ny: int) -> TwoBodyMesh:
    """Structured two-rectangle mesh with the glue line at y = height_each.

    Body 1 is the lower rectangle, body 2 the upper one; both carry their
    own copy of the interface nodes.  Bottom edge is Dirichlet, top edge
    Neumann, the four side edges are free.
    """
    if width <= 0.0 or height_each <= 0.0:
        raise GeometryError("width and height_each must be positive")
    if nx < 1 or ny < 1:
        raise GeometryError("nx and ny must be >= 1")

    xs = np.linspace(0.0, width, nx + 1)
    ys_lo = np.linspace(0.0, height_each, ny + 1)
    ys_hi = np.linspace(height_each, 2.0 * height_each, ny + 1)

    def grid(ys):
        pts = np.array([[x, y] for y in ys for x in xs])
        return pts

    nodes_lo = grid(ys_lo)
    nodes_hi = grid(ys_hi)
    n_per_body = nodes_lo.shape[0]
    nodes = np.vstack([nodes_lo, nodes_hi])

    def cell_tris(offset):
        tris = []
        for j in range(ny):
            for i in range(nx):
                a = offset + j * (nx + 1) + i
                b = a + 1
                c = a + (nx + 1)
                d = c + 1
                tris.append([a, b, d])
                tris.append([a, d, c])
        return tris

    tris = cell_tris(0) + cell_tris(n_per_body)
    triangles = np.array(tris, dtype=int)
    labels = np.array([1] * (2 * nx * ny) + [2] * (2 * nx * ny), dtype=int)

    edges = []
    tags = []
    # bottom edge of body 1: Dirichlet
    for i in range(nx):
        edges.append([i, i + 1])
        tags.append(DIRICHLET)
    # top edge of body 2: Neumann
    top0 = n_per_body + ny * (nx + 1)
    for i in range(nx):
        edges.append([top0 + i, top0 + i + 1])
        tags.append(NEUMANN)
    # side edges of both bodies: free
    for off in (0, n_per_body):
        for j in range(ny):
            left = off + j * (nx + 1)
            edges.append([left, left + (nx + 1)])
            tags.append(FREE)
            right = off + j * (nx + 1) + nx
            edges.append([right, right + (nx + 1)])
            tags.append(FREE)

    # interface: top row of body 1 pairs with bottom row of body 2
    side1 = np.arange(ny * (nx + 1), (ny + 1) * (nx + 1))
    side2 = np.arange(n_per_body, n_per_body + nx + 1)
    pairs = np.column_stack([side1, side2])
    normal = np.tile([0.0, -1.0], (nx + 1, 1))

    mesh = TwoBodyMesh(
        nodes=nodes,
        triangles=triangles,
        tri_labels=labels,
        boundary_edges=np.array(edges, dtype=int),
        boundary_tags=tags,
        node_pairs=pairs,
        normal_n2=normal,
        interface=_interface_mesh_from_pairs(nodes[side1]),
    )
    mesh.validate()
    return mesh


@dataclass(frozen=True)
class JumpMaps:
    """Sparse trace/jump operators from bulk displacement dofs (2 per node,
    interleaved x,y) to interface nodal quantities."""

    trace1: sp.csr_matrix        # (2P, 2N) side-1 displacement trace
    trace2: sp.csr_matrix        # (2P, 2N)
    jump: sp.csr_matrix          # (2P, 2N) trace1 - trace2
    normal_jump: sp.csr_matrix   # (P, 2N)  jump . n2
    tangential_jump: sp.csr_matrix  # (P, 2N)  jump . t  (scalar along tangent)


def jump_maps(mesh: TwoBodyMesh) -> JumpMaps:
    P = mesh.n_pairs
    N = mesh.n_nodes
    tang = mesh.tangent()

    def trace(side):
        rows, cols, vals = [], [], []
        for p in range(P):
            n = mesh.node_pairs[p, side]
            for c in range(2):
                rows.append(2 * p + c)
                cols.append(2 * n + c)
                vals.append(1.0)
        return sp.csr_matrix((vals, (rows, cols)), shape=(2 * P, 2 * N))

    t1 = trace(0)
    t2 = trace(1)
    jump = (t1 - t2).tocsr()

    def project(vecs):
        rows, cols, vals = [], [], []
        for p in range(P):
            for side, sgn in ((0, 1.0), (1, -1.0)):
                n = mesh.node_pairs[p, side]
                for c in range(2):
                    rows.append(p)
                    cols.append(2 * n + c)
                    vals.append(sgn * vecs[p, c])
        return sp.csr_matrix((vals, (rows, cols)), shape=(P, 2 * N))

    return JumpMaps(
        trace1=t1,
        trace2=t2,
        jump=jump,
        normal_jump=project(mesh.normal_n2),
        tangential_jump=project(tang),
    )


def surface_gradient(imesh: InterfaceMesh) -> sp.csr_matrix:
    """Piecewise-constant arclength derivative: (n_seg, n_nodes) matrix."""
    rows, cols, vals = [], [], []
    for s, ((i, j), ell) in enumerate(zip(imesh.segments, imesh.lengths)):
        rows += [s, s]
        cols += [i, j]
        vals += [-1.0 / ell, 1.0 / ell]
    return sp.csr_matrix((vals, (rows, cols)), shape=(len(imesh.lengths), imesh.n_nodes))


def laplace_beltrami(imesh: InterfaceMesh, coeff) -> sp.csr_matrix:
    """SPSD surface stiffness G^T diag(coeff * length) G, kernel = constants.

    ``coeff`` may be a scalar or a per-segment array.
    """
    G = surface_gradient(imesh)
    w = np.asarray(coeff) * imesh.lengths
    return (G.T @ sp.diags(w) @ G).tocsr()


# ---------------------------------------------------------------------------
# plain-text mesh import/export
# ---------------------------------------------------------------------------

_HEADER = "twobody-mesh v1"


def save_mesh(mesh: TwoBodyMesh, path) -> None:
    with open(path, "w") as f:
        f.write(_HEADER + "\n")
        f.write(f"nodes {mesh.n_nodes}\n")
        for x, y in mesh.nodes:
            f.write(f"{float(x)!r} {float(y)!r}\n")
        f.write(f"triangles {len(mesh.triangles)}\n")
        for (a, b, c), lab in zip(mesh.triangles, mesh.tri_labels):
            f.write(f"{a} {b} {c} {lab}\n")
        f.write(f"edges {len(mesh.boundary_edges)}\n")
        for (a, b), tag in zip(mesh.boundary_edges, mesh.boundary_tags):
            f.write(f"{a} {b} {tag}\n")
        f.write(f"pairs {mesh.n_pairs}\n")
        for (a, b), (nx_, ny_) in zip(mesh.node_pairs, mesh.normal_n2):
            f.write(f"{a} {b} {float(nx_)!r} {float(ny_)!r}\n")


def load_mesh(path) -> TwoBodyMesh:
    with open(path) as f:
        lines = [ln.strip() for ln in f if ln.strip()]
    if lines[0] != _HEADER:
        raise GeometryError(f"unrecognised mesh header: {lines[0]!r}")
    pos = 1

    def section(name):
        nonlocal pos
        key, count = lines[pos].split()
        if key != name:
            raise GeometryError(f"expected section {name!r}, got {key!r}")
        pos += 1
        out = lines[pos:pos + int(count)]
        pos += int(count)
        return out

    nodes = np.array([[float(t) for t in ln.split()] for ln in section("nodes")])
    tri_rows = [[int(t) for t in ln.split()] for ln in section("triangles")]
    triangles = np.array([r[:3] for r in tri_rows], dtype=int)
    labels = np.array([r[3] for r in tri_rows], dtype=int)
    edges, tags = [], []
    for ln in section("edges"):
        a, b, tag = ln.split()
        edges.append([int(a), int(b)])
        tags.append(tag)
    pairs, normals = [], []
    for ln in section("pairs"):
        a, b, nx_, ny_ = ln.split()
        pairs.append([int(a), int(b)])
        normals.append([float(nx_), float(ny_)])
    pairs = np.array(pairs, dtype=int)
    mesh = TwoBodyMesh(
        nodes=nodes,
        triangles=triangles,
        tri_labels=labels,
        boundary_edges=np.array(edges, dtype=int),
        boundary_tags=tags,
        node_pairs=pairs,
        normal_n2=np.array(normals),
        interface=_interface_mesh_from_pairs(nodes[pairs[:, 0]]),
    )
    mesh.validate()
    return mesh
