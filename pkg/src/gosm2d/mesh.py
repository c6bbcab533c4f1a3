"""Conforming triangular meshes, non-overlapping partitions, and trace maps.

A ``Mesh2D`` carries a global vertex list, tagged triangles, and tagged
edges. Edges may exist without adjacent triangles: closed boundary-element
curves (e.g. the outer wall of an impenetrable obstacle) share vertices with
the volume mesh where they coincide but need no volume elements behind them.

``build_partition`` groups triangles into subdomains and tagged edges into
named surfaces, extracts the skeleton (all interfaces carrying transmission
conditions), and locates cross-points. ``build_trace_maps`` then numbers the
skeleton P1 dofs and produces the Boolean restriction/trace index maps
between volume, block, and skeleton dof sets.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from . import msh

# surface roles
ROLE_COUPLING = "bem_coupling"
ROLE_WEAK_DIRICHLET = "weak_dirichlet"
ROLE_WEAK_NEUMANN = "weak_neumann"
ROLE_STRONG_DIRICHLET = "strong_dirichlet"
ROLE_STRONG_NEUMANN = "strong_neumann"

SKELETON_ROLES = (ROLE_COUPLING, ROLE_WEAK_DIRICHLET, ROLE_WEAK_NEUMANN)


class MeshError(Exception):
    pass


class NonConforming(MeshError):
    pass


class Overlap(MeshError):
    pass


class OpenChain(MeshError):
    pass


class OrientationError(MeshError):
    pass


def _signed_areas(vertices, triangles):
    a = vertices[triangles[:, 0]]
    b = vertices[triangles[:, 1]]
    c = vertices[triangles[:, 2]]
    return 0.5 * ((b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1])
                  - (b[:, 1] - a[:, 1]) * (c[:, 0] - a[:, 0]))


@dataclass
class Mesh2D:
    """Triangulation with tagged triangles and tagged edges."""

    vertices: np.ndarray
    triangles: np.ndarray
    tri_tags: np.ndarray
    edges: np.ndarray
    edge_tags: np.ndarray

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=np.float64).reshape(-1, 2)
        self.triangles = np.asarray(self.triangles, dtype=np.int64).reshape(-1, 3)
        self.tri_tags = np.asarray(self.tri_tags, dtype=np.int64).reshape(-1)
        self.edges = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)
        self.edge_tags = np.asarray(self.edge_tags, dtype=np.int64).reshape(-1)

    @property
    def n_vertices(self):
        return self.vertices.shape[0]

    def triangle_areas(self):
        return _signed_areas(self.vertices, self.triangles)

    def validate(self, dedup_tol=1e-12):
        """Enforce mesh invariants; reorients negative triangles in place."""
        if not np.all(np.isfinite(self.vertices)):
            raise MeshError("non-finite vertex coordinates")
        for conn in (self.triangles, self.edges):
            if conn.size and (conn.min() < 0 or conn.max() >= self.n_vertices):
                raise msh.DanglingReference("connectivity refers to missing vertex")
        areas = self.triangle_areas()
        flip = areas < 0
        if np.any(flip):
            self.triangles[flip] = self.triangles[flip][:, [0, 2, 1]]
            areas = np.abs(areas)
        if self.triangles.shape[0]:
            if np.any(areas <= 1e-14 * areas.mean()):
                raise MeshError("degenerate triangle (area below 1e-14 of mean)")
        if self.n_vertices > 1:
            lo = self.vertices.min(axis=0)
            hi = self.vertices.max(axis=0)
            diag = float(np.hypot(*(hi - lo))) or 1.0
            rounded = np.round(self.vertices / (dedup_tol * diag)).astype(np.int64)
            _, counts = np.unique(rounded, axis=0, return_counts=True)
            if np.any(counts > 1):
                raise MeshError("duplicate vertices within dedup tolerance")
        return self


def mesh_from_msh(path):
    """Read an MSH 2.2 file and enforce Mesh2D invariants."""
    points, lines, line_tags, tris, tri_tags, _ = msh.read_msh(path)
    mesh = Mesh2D(points, tris, tri_tags, lines, line_tags)
    return mesh.validate()


def mesh_to_msh(mesh, path, physical_names=None):
    msh.write_msh(path, mesh.vertices, mesh.edges, mesh.edge_tags,
                  mesh.triangles, mesh.tri_tags, physical_names)


# ---------------------------------------------------------------------------
# structured generators
# ---------------------------------------------------------------------------

ANNULUS_VOLUME_TAG = 10
ANNULUS_INNER_TAG = 1
ANNULUS_OUTER_TAG = 2
DISK_VOLUME_TAG = 10
DISK_BOUNDARY_TAG = 2
RECT_VOLUME_TAG = 10
RECT_SIDE_TAGS = {"left": 1, "right": 2, "bottom": 3, "top": 4}


def annulus_mesh(r_in, r_out, n_radial, n_angular):
    """Mapped structured triangulation of an annulus.

    ``(n_radial + 1) * n_angular`` vertices and ``2 * n_radial * n_angular``
    triangles; circles tagged ANNULUS_INNER_TAG / ANNULUS_OUTER_TAG.
    """
    if not (0 < r_in < r_out):
        raise ValueError("need 0 < r_in < r_out")
    if n_radial < 1 or n_angular < 3:
        raise ValueError("need n_radial >= 1 and n_angular >= 3")
    radii = np.linspace(r_in, r_out, n_radial + 1)
    theta = 2 * np.pi * np.arange(n_angular) / n_angular
    verts = np.empty(((n_radial + 1) * n_angular, 2))
    for i, r in enumerate(radii):
        verts[i * n_angular:(i + 1) * n_angular, 0] = r * np.cos(theta)
        verts[i * n_angular:(i + 1) * n_angular, 1] = r * np.sin(theta)

    tris = []
    for i in range(n_radial):
        base = i * n_angular
        nxt = (i + 1) * n_angular
        for j in range(n_angular):
            jp = (j + 1) % n_angular
            tris.append((base + j, nxt + j, nxt + jp))
            tris.append((base + j, nxt + jp, base + jp))
    edges = []
    tags = []
    for j in range(n_angular):
        jp = (j + 1) % n_angular
        edges.append((j, jp))
        tags.append(ANNULUS_INNER_TAG)
        edges.append((n_radial * n_angular + j, n_radial * n_angular + jp))
        tags.append(ANNULUS_OUTER_TAG)
    mesh = Mesh2D(verts, np.array(tris), np.full(len(tris), ANNULUS_VOLUME_TAG),
                  np.array(edges), np.array(tags))
    return mesh.validate()


def _zip_rings(ids_a, ang_a, ids_b, ang_b):
    """Triangulate the band between two nested counterclockwise rings.

    Ring a is the inner one; both rings are sorted by angle starting at 0.
    Emits ``len(a) + len(b)`` positively oriented triangles by always
    advancing the ring whose next vertex comes first in angle.
    """
    na, nb = len(ids_a), len(ids_b)
    tris = []
    ia = ib = 0
    while ia < na or ib < nb:
        a_cur = ids_a[ia % na]
        b_cur = ids_b[ib % nb]
        next_a = ang_a[ia + 1] if ia + 1 < na else (2 * np.pi if ia < na else np.inf)
        next_b = ang_b[ib + 1] if ib + 1 < nb else (2 * np.pi if ib < nb else np.inf)
        if next_b <= next_a:
            tris.append((a_cur, b_cur, ids_b[(ib + 1) % nb]))
            ib += 1
        else:
            tris.append((a_cur, b_cur, ids_a[(ia + 1) % na]))
            ia += 1
    return tris


def disk_mesh(radius, n_rings):
    """Concentric-ring triangulation of a disk; ring ``i`` has ``6 i`` vertices.

    ``1 + 3 n (n + 1)`` vertices and ``6 n^2`` triangles; the boundary circle
    is tagged DISK_BOUNDARY_TAG.
    """
    if n_rings < 1:
        raise ValueError("need n_rings >= 1")
    verts = [(0.0, 0.0)]
    ring_ids = [np.array([0])]
    ring_angles = [np.array([0.0])]
    for i in range(1, n_rings + 1):
        n = 6 * i
        ang = 2 * np.pi * np.arange(n) / n
        r = radius * i / n_rings
        start = len(verts)
        verts.extend(zip(r * np.cos(ang), r * np.sin(ang)))
        ring_ids.append(np.arange(start, start + n))
        ring_angles.append(ang)
    tris = []
    first = ring_ids[1]
    for j in range(len(first)):
        tris.append((0, first[j], first[(j + 1) % len(first)]))
    for i in range(1, n_rings):
        tris.extend(_zip_rings(ring_ids[i], ring_angles[i],
                               ring_ids[i + 1], ring_angles[i + 1]))
    outer = ring_ids[-1]
    edges = [(outer[j], outer[(j + 1) % len(outer)]) for j in range(len(outer))]
    mesh = Mesh2D(np.array(verts), np.array(tris),
                  np.full(len(tris), DISK_VOLUME_TAG),
                  np.array(edges), np.full(len(edges), DISK_BOUNDARY_TAG))
    mesh.validate()
    if np.any(mesh.triangle_areas() <= 0):
        raise MeshError("disk_mesh produced a non-positive triangle")
    return mesh


def rect_mesh(x0, x1, y0, y1, nx, ny, volume_tag=RECT_VOLUME_TAG, side_tags=None):
    """Structured right-triangle mesh of a rectangle with per-side edge tags."""
    if side_tags is None:
        side_tags = RECT_SIDE_TAGS
    xs = np.linspace(x0, x1, nx + 1)
    ys = np.linspace(y0, y1, ny + 1)
    xx, yy = np.meshgrid(xs, ys, indexing="ij")
    verts = np.column_stack([xx.ravel(), yy.ravel()])

    def vid(i, j):
        return i * (ny + 1) + j

    tris = []
    for i in range(nx):
        for j in range(ny):
            a, b, c, d = vid(i, j), vid(i + 1, j), vid(i + 1, j + 1), vid(i, j + 1)
            tris.append((a, b, c))
            tris.append((a, c, d))
    edges, tags = [], []
    for j in range(ny):
        edges.append((vid(0, j + 1), vid(0, j)))
        tags.append(side_tags["left"])
        edges.append((vid(nx, j), vid(nx, j + 1)))
        tags.append(side_tags["right"])
    for i in range(nx):
        edges.append((vid(i, 0), vid(i + 1, 0)))
        tags.append(side_tags["bottom"])
        edges.append((vid(i + 1, ny), vid(i, ny)))
        tags.append(side_tags["top"])
    mesh = Mesh2D(verts, np.array(tris), np.full(len(tris), volume_tag),
                  np.array(edges), np.array(tags))
    return mesh.validate()


# ---------------------------------------------------------------------------
# chains
# ---------------------------------------------------------------------------


@dataclass
class Chain:
    """One closed, oriented polyline; segment i joins vertex i to i+1 (wrap)."""

    vertex_ids: np.ndarray
    points: np.ndarray

    @property
    def n(self):
        return len(self.vertex_ids)

    @property
    def seg_starts(self):
        return self.points

    @property
    def seg_ends(self):
        return np.roll(self.points, -1, axis=0)

    @property
    def seg_vectors(self):
        return self.seg_ends - self.points

    @property
    def seg_lengths(self):
        return np.linalg.norm(self.seg_vectors, axis=1)

    @property
    def tangents(self):
        return self.seg_vectors / self.seg_lengths[:, None]

    @property
    def normals(self):
        # outward for a counterclockwise (positive-area) chain
        t = self.tangents
        return np.column_stack([t[:, 1], -t[:, 0]])

    def signed_area(self):
        x, y = self.points[:, 0], self.points[:, 1]
        xn, yn = np.roll(x, -1), np.roll(y, -1)
        return 0.5 * np.sum(x * yn - xn * y)

    def reversed(self):
        return Chain(self.vertex_ids[::-1].copy(), self.points[::-1].copy())


def edges_to_loop(edges):
    """Order an edge set into a single closed vertex loop.

    Edge direction is ignored; raises OpenChain when the edges do not form
    exactly one closed loop.
    """
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    if edges.shape[0] == 0:
        raise OpenChain("empty edge set")
    adj = {}
    for a, b in edges:
        adj.setdefault(int(a), []).append(int(b))
        adj.setdefault(int(b), []).append(int(a))
    for v, nbrs in adj.items():
        if len(nbrs) != 2:
            raise OpenChain(f"vertex {v} has {len(nbrs)} incident edges (need 2)")
    start = int(edges[0, 0])
    loop = [start]
    prev, cur = None, start
    while True:
        nxt = [w for w in adj[cur] if w != prev]
        if not nxt:
            raise OpenChain("dead end while walking chain")
        step = nxt[0]
        if step == start:
            break
        loop.append(step)
        prev, cur = cur, step
    if len(loop) != len(edges):
        raise OpenChain("edges form more than one loop")
    return np.array(loop, dtype=np.int64)


def make_chain(mesh, edges, orientation="ccw"):
    """Build an oriented closed Chain from a tagged edge set.

    ``orientation='ccw'`` makes the signed area positive so normals point
    away from the enclosed region; 'cw' the opposite; 'keep' preserves the
    walk order.
    """
    loop = edges_to_loop(edges)
    chain = Chain(loop, mesh.vertices[loop])
    area = chain.signed_area()
    if abs(area) < 1e-14:
        raise OrientationError("chain has vanishing signed area")
    if orientation == "ccw" and area < 0:
        chain = chain.reversed()
    elif orientation == "cw" and area > 0:
        chain = chain.reversed()
    return chain


# ---------------------------------------------------------------------------
# partition
# ---------------------------------------------------------------------------


@dataclass
class Surface:
    name: str
    role: str
    tag: int
    edges: np.ndarray
    chain: Chain | None = None


@dataclass
class Subdomain:
    name: str
    tri_idx: np.ndarray
    boundary_edges: np.ndarray = None  # all faces of exactly one subdomain triangle


@dataclass
class SubdomainPartition:
    mesh: Mesh2D
    subdomains: list
    surfaces: list
    interface_edges: np.ndarray      # faces shared by two different subdomains
    skeleton_edges: np.ndarray
    skeleton_vertices: np.ndarray
    cross_points: np.ndarray

    def surface(self, name):
        for s in self.surfaces:
            if s.name == name:
                return s
        raise KeyError(name)

    def subdomain(self, name):
        for s in self.subdomains:
            if s.name == name:
                return s
        raise KeyError(name)


def _edge_key(a, b):
    return (a, b) if a < b else (b, a)


def _subdomain_boundary_edges(mesh, tri_idx):
    count = {}
    for t in tri_idx:
        tri = mesh.triangles[t]
        for k in range(3):
            key = _edge_key(int(tri[k]), int(tri[(k + 1) % 3]))
            count[key] = count.get(key, 0) + 1
    return np.array([e for e, c in count.items() if c == 1], dtype=np.int64).reshape(-1, 2)


def build_partition(mesh, volume_spec, surface_specs):
    """Group triangles into subdomains and tagged edges into named surfaces.

    ``volume_spec`` maps triangle tag -> subdomain name (several tags may
    share one subdomain). ``surface_specs`` is a list of ``(name, tag, role)``
    triples. Interfaces between distinct subdomains are detected
    automatically and join the skeleton together with every surface whose
    role carries transmission conditions.
    """
    names = []
    for tag, name in volume_spec.items():
        if name not in names:
            names.append(name)
    claimed = np.full(mesh.triangles.shape[0], -1, dtype=np.int64)
    for tag, name in volume_spec.items():
        idx = np.nonzero(mesh.tri_tags == tag)[0]
        sub_id = names.index(name)
        already = claimed[idx] >= 0
        if np.any(already & (claimed[idx] != sub_id)):
            raise Overlap(f"triangles with tag {tag} claimed by two subdomains")
        claimed[idx] = sub_id
    if np.any(claimed < 0):
        missing = np.unique(mesh.tri_tags[claimed < 0])
        raise NonConforming(f"unassigned triangle tags {missing.tolist()} do not cover the mesh")

    subdomains = []
    for sub_id, name in enumerate(names):
        tri_idx = np.nonzero(claimed == sub_id)[0]
        sub = Subdomain(name=name, tri_idx=tri_idx)
        sub.boundary_edges = _subdomain_boundary_edges(mesh, tri_idx)
        subdomains.append(sub)

    # adjacency of mesh faces to subdomains
    face_owner = {}
    for sub_id in range(len(names)):
        for t in np.nonzero(claimed == sub_id)[0]:
            tri = mesh.triangles[t]
            for k in range(3):
                key = _edge_key(int(tri[k]), int(tri[(k + 1) % 3]))
                face_owner.setdefault(key, set()).add(sub_id)

    surfaces = []
    for name, tag, role in surface_specs:
        tags = np.atleast_1d(np.asarray(tag, dtype=np.int64))
        edges = mesh.edges[np.isin(mesh.edge_tags, tags)]
        if edges.shape[0] == 0:
            raise NonConforming(f"surface {name!r}: no edges carry tag {tag}")
        surf = Surface(name=name, role=role, tag=int(tags[0]), edges=edges)
        if role in (ROLE_COUPLING, ROLE_WEAK_DIRICHLET, ROLE_WEAK_NEUMANN):
            surf.chain = make_chain(mesh, edges, orientation="ccw")
        surfaces.append(surf)
        if role in (ROLE_STRONG_DIRICHLET, ROLE_STRONG_NEUMANN):
            for a, b in edges:
                if _edge_key(int(a), int(b)) not in face_owner:
                    raise NonConforming(
                        f"strong-BC surface {name!r} has an edge without a volume element")

    interface = [e for e, owners in face_owner.items() if len(owners) > 1]
    if any(len(owners) > 2 for owners in face_owner.values()):
        raise NonConforming("a mesh face is shared by more than two triangles")
    interface_edges = np.array(sorted(interface), dtype=np.int64).reshape(-1, 2)

    skel = set(map(tuple, interface_edges))
    for surf in surfaces:
        if surf.role in SKELETON_ROLES:
            for a, b in surf.edges:
                skel.add(_edge_key(int(a), int(b)))
    skeleton_edges = np.array(sorted(skel), dtype=np.int64).reshape(-1, 2)
    skeleton_vertices = np.unique(skeleton_edges) if skeleton_edges.size else np.array([], dtype=np.int64)

    # cross-points: skeleton vertices adjacent to >= 3 regions, counting each
    # subdomain and each skeleton surface as one region
    region_count = {int(v): set() for v in skeleton_vertices}
    skel_vertex_set = set(int(v) for v in skeleton_vertices)
    for sub_id, sub in enumerate(subdomains):
        for v in np.unique(mesh.triangles[sub.tri_idx]):
            if int(v) in skel_vertex_set:
                region_count[int(v)].add(("sub", sub_id))
    for surf in surfaces:
        if surf.role in SKELETON_ROLES:
            for v in np.unique(surf.edges):
                if int(v) in skel_vertex_set:
                    region_count[int(v)].add(("surf", surf.name))
    cross_points = np.array(sorted(v for v, regions in region_count.items()
                                   if len(regions) >= 3), dtype=np.int64)

    return SubdomainPartition(
        mesh=mesh, subdomains=subdomains, surfaces=surfaces,
        interface_edges=interface_edges, skeleton_edges=skeleton_edges,
        skeleton_vertices=skeleton_vertices, cross_points=cross_points,
    )


# ---------------------------------------------------------------------------
# trace maps
# ---------------------------------------------------------------------------


@dataclass
class BlockTrace:
    """Dof bookkeeping of one block (a surface pair-block or a subdomain).

    ``r_skel[i]`` is the skeleton dof index of the i-th local trace dof;
    ``b_local[i]`` is its position inside the block's own dof vector. For a
    surface block the local vector stacks (trace, density), each of length
    ``n_trace``; for a volume block it holds the subdomain's kept P1 dofs.
    """

    name: str
    kind: str                  # "surface" | "volume"
    trace_vertices: np.ndarray  # mesh vertex ids, defines the local trace order
    r_skel: np.ndarray
    b_local: np.ndarray
    n_local: int
    volume_vertices: np.ndarray | None = None
    surface: Surface | None = None

    @property
    def n_trace(self):
        return len(self.trace_vertices)


@dataclass
class TraceMaps:
    """Skeleton dof numbering plus per-block Boolean restriction/trace maps."""

    partition: SubdomainPartition
    skeleton_dof_vertices: np.ndarray   # mesh vertex id per skeleton dof
    blocks: list = field(default_factory=list)

    @property
    def n_skeleton(self):
        return len(self.skeleton_dof_vertices)

    def multiplicity(self):
        """Number of blocks touching each skeleton dof (diagonal of R^T R)."""
        mult = np.zeros(self.n_skeleton, dtype=np.int64)
        for blk in self.blocks:
            np.add.at(mult, blk.r_skel, 1)
        return mult

    def r_matrix(self, blk):
        n = blk.n_trace
        return sp.csr_matrix((np.ones(n), (np.arange(n), blk.r_skel)),
                             shape=(n, self.n_skeleton))

    def b_matrix(self, blk):
        n = blk.n_trace
        return sp.csr_matrix((np.ones(n), (np.arange(n), blk.b_local)),
                             shape=(n, blk.n_local))


def build_trace_maps(partition, free_mask=None):
    """Number skeleton dofs and build every block's R and B index maps.

    ``free_mask`` (bool per mesh vertex) drops strongly eliminated dofs; a
    skeleton vertex is kept only while free. Surface blocks come first, in
    declaration order, then the subdomains, matching the fixed block order
    of the substructured operators.
    """
    mesh = partition.mesh
    if free_mask is None:
        free_mask = np.ones(mesh.n_vertices, dtype=bool)
    skel_vertices = np.array([v for v in partition.skeleton_vertices if free_mask[v]],
                             dtype=np.int64)
    skel_index = {int(v): i for i, v in enumerate(skel_vertices)}

    blocks = []
    for surf in partition.surfaces:
        if surf.role not in SKELETON_ROLES:
            continue
        chain = surf.chain
        if np.any(~free_mask[chain.vertex_ids]):
            raise NonConforming(f"surface {surf.name!r} touches an eliminated dof")
        r_skel = np.array([skel_index[int(v)] for v in chain.vertex_ids], dtype=np.int64)
        n = chain.n
        blocks.append(BlockTrace(
            name=surf.name, kind="surface",
            trace_vertices=chain.vertex_ids.copy(),
            r_skel=r_skel, b_local=np.arange(n, dtype=np.int64),
            n_local=2 * n, surface=surf,
        ))

    for sub in partition.subdomains:
        vol_vertices = np.unique(mesh.triangles[sub.tri_idx])
        vol_vertices = vol_vertices[free_mask[vol_vertices]]
        local_of = {int(v): i for i, v in enumerate(vol_vertices)}
        trace = np.array(sorted(v for v in np.unique(sub.boundary_edges)
                                if int(v) in skel_index and free_mask[v]), dtype=np.int64)
        blocks.append(BlockTrace(
            name=sub.name, kind="volume",
            trace_vertices=trace,
            r_skel=np.array([skel_index[int(v)] for v in trace], dtype=np.int64),
            b_local=np.array([local_of[int(v)] for v in trace], dtype=np.int64),
            n_local=len(vol_vertices),
            volume_vertices=vol_vertices,
        ))

    return TraceMaps(partition=partition, skeleton_dof_vertices=skel_vertices,
                     blocks=blocks)
