"""Problem builders for the experiment geometries.

Each builder returns a fully assembled ``Problem``: mesh, partition, trace
maps, per-block Galerkin operators and loads, the surface chains needed by
impedance constructors, and (when available) the analytic reference field.
The unknown is always the scattered field, so coupling blocks stay
homogeneous and excitation enters through obstacle data or a volume source.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from . import analytic, bem, fem, formulations
from . import mesh as gm

GAMMA_TAG = 1
OBSTACLE_TAG = 2


@dataclass
class VolumeInfo:
    tri_idx: np.ndarray
    skeleton_edges: np.ndarray


@dataclass
class Problem:
    geometry: str
    kappa: float
    mesh: gm.Mesh2D
    partition: gm.SubdomainPartition
    trace_maps: gm.TraceMaps
    free_mask: np.ndarray
    block_ops: list
    chains: dict
    volume_info: dict
    kappa_squared: object
    theta_inc: float = 0.0
    reference: object = None              # callable scattered field, or None
    reference_tris: np.ndarray | None = None
    aux_schur: dict = field(default_factory=dict)   # surface -> (mesh, tris, edges)
    aux_riesz: dict = field(default_factory=dict)   # surface -> dense SPD matrix
    bios: dict = field(default_factory=dict)        # surface -> BioMatrices

    def block(self, name):
        for blk, op in zip(self.trace_maps.blocks, self.block_ops):
            if blk.name == name:
                return blk, op
        raise KeyError(name)


def _volume_block(problem_mesh, blk, a_global, ell_global):
    dofs = blk.volume_vertices
    return formulations.BlockOperator(
        name=blk.name,
        matrix=fem.restrict(a_global.tocsr(), dofs),
        load=np.asarray(ell_global)[dofs],
    )


def _skeleton_edges_of(partition, sub):
    skel = {tuple(e) for e in partition.skeleton_edges}
    edges = [e for e in sub.boundary_edges if tuple(sorted(map(int, e))) in skel]
    return np.array(edges, dtype=np.int64).reshape(-1, 2)


def disk_mesh_sizes(kappa, n_lambda):
    """Angular/radial counts giving roughly ``n_lambda`` points per wavelength."""
    h = 2 * np.pi / (kappa * n_lambda)
    na = 6 * max(4, int(round(4 * np.pi / h / 6)))
    nr = max(2, int(round(1.0 / h)))
    return nr, na


def homogeneous_disk(kappa, n_lambda, coupling=formulations.COSTABEL,
                     bc="dirichlet", weak=False, theta_inc=0.0, n_gauss=8):
    """Plane-wave scattering by the unit disk behind an artificial circle r=2.

    Strong BCs act on the annulus directly; ``weak=True`` promotes the
    obstacle circle to its own boundary block (three-domain layout).
    """
    if bc not in ("dirichlet", "neumann"):
        raise ValueError("bc must be dirichlet or neumann")
    nr, na = disk_mesh_sizes(kappa, n_lambda)
    mesh = gm.annulus_mesh(1.0, 2.0, nr, na)
    role = (gm.ROLE_WEAK_DIRICHLET if bc == "dirichlet" else gm.ROLE_WEAK_NEUMANN) \
        if weak else \
        (gm.ROLE_STRONG_DIRICHLET if bc == "dirichlet" else gm.ROLE_STRONG_NEUMANN)
    partition = gm.build_partition(
        mesh, {gm.ANNULUS_VOLUME_TAG: "omega"},
        [("gamma", gm.ANNULUS_OUTER_TAG, gm.ROLE_COUPLING),
         ("obstacle", gm.ANNULUS_INNER_TAG, role)],
    )
    free = np.ones(mesh.n_vertices, dtype=bool)
    obstacle_vertices = np.unique(partition.surface("obstacle").edges)
    if not weak and bc == "dirichlet":
        free[obstacle_vertices] = False
    tm = gm.build_trace_maps(partition, free)

    tri_idx = partition.subdomain("omega").tri_idx
    a_vol = fem.assemble_helmholtz(mesh, tri_idx, kappa ** 2)
    ell = np.zeros(mesh.n_vertices, dtype=np.complex128)

    inner_edges = partition.surface("obstacle").edges
    flux = lambda p: analytic.plane_wave_radial_derivative(kappa, theta_inc, p)
    if not weak:
        if bc == "dirichlet":
            values = np.zeros(mesh.n_vertices, dtype=np.complex128)
            values[obstacle_vertices] = -analytic.plane_wave(
                kappa, theta_inc, mesh.vertices[obstacle_vertices])
            ell = ell - a_vol @ values            # lift of the eliminated data
        else:
            # outward normal of the annulus on the inner circle is -r_hat, so
            # the natural term carries +d_r(u_i)
            ell = ell + fem.boundary_load(mesh, inner_edges, flux)

    gamma_chain = partition.surface("gamma").chain
    kernel = bem.Kernel2D("helmholtz", kappa)
    bios = bem.assemble_bios(gamma_chain, kernel, n_gauss=n_gauss)
    gamma_block = formulations.build_boundary_block(coupling, bios.mass, bios=bios)

    chains = {"gamma": gamma_chain}
    aux_schur = {}
    aux_riesz = {}
    block_ops = []
    for blk in tm.blocks:
        if blk.kind == "surface" and blk.name == "gamma":
            block_ops.append(formulations.BlockOperator(
                "gamma", gamma_block.matrix,
                formulations.boundary_block_rhs(gamma_block)))
        elif blk.kind == "surface":
            chain = partition.surface("obstacle").chain
            chains["obstacle"] = chain
            mass = bem.chain_mass(chain)
            aux_mesh = gm.disk_mesh(1.0, na // 6)
            aux_order = _match_circle_order(chain, aux_mesh)
            aux_schur["obstacle"] = (aux_mesh, np.arange(aux_mesh.triangles.shape[0]),
                                     aux_mesh.edges, aux_order)
            if bc == "dirichlet":
                bblock = formulations.build_boundary_block(
                    formulations.WEAK_DIRICHLET, mass)
                data = -analytic.plane_wave(kappa, theta_inc,
                                            mesh.vertices[blk.trace_vertices])
            else:
                riesz = fem.discrete_h12_riesz(
                    fem.h1_gram(aux_mesh, np.arange(aux_mesh.triangles.shape[0]), kappa),
                    aux_order)
                aux_riesz["obstacle"] = riesz
                bblock = formulations.build_boundary_block(
                    formulations.WEAK_NEUMANN, mass, riesz=riesz)
                data = flux(mesh.vertices[blk.trace_vertices])
            block_ops.append(formulations.BlockOperator(
                "obstacle", bblock.matrix,
                formulations.boundary_block_rhs(bblock, data)))
        else:
            block_ops.append(_volume_block(mesh, blk, a_vol, ell))

    sub = partition.subdomain("omega")
    reference = (analytic.disk_dirichlet_solution if bc == "dirichlet"
                 else analytic.disk_neumann_solution)
    return Problem(
        geometry="homogeneous_disk", kappa=kappa, mesh=mesh, partition=partition,
        trace_maps=tm, free_mask=free, block_ops=block_ops, chains=chains,
        volume_info={"omega": VolumeInfo(tri_idx, _skeleton_edges_of(partition, sub))},
        kappa_squared=kappa ** 2, theta_inc=theta_inc,
        reference=lambda pts, k=kappa: reference(k, pts),
        reference_tris=tri_idx, aux_schur=aux_schur, aux_riesz=aux_riesz,
        bios={"gamma": bios},
    )


def _match_circle_order(chain, aux_mesh):
    """Aux-disk boundary dofs reordered to follow the chain's vertices."""
    bnd = np.unique(aux_mesh.edges)
    ang_aux = np.arctan2(aux_mesh.vertices[bnd, 1], aux_mesh.vertices[bnd, 0])
    order = []
    for p in chain.points:
        ang = np.arctan2(p[1], p[0])
        d = np.abs(np.angle(np.exp(1j * (ang_aux - ang))))
        j = int(np.argmin(d))
        if d[j] > 1e-8:
            raise gm.NonConforming("auxiliary disk does not match the obstacle circle")
        order.append(int(bnd[j]))
    return np.array(order, dtype=np.int64)


def heterogeneous_lens(k, n_lambda, coupling=formulations.COSTABEL,
                       theta_inc=0.0, n_gauss=8):
    """Acoustic lens inside a disk of radius 2 coupled to the free exterior."""
    h = 2 * np.pi / (k * n_lambda)
    n_rings = max(4, int(round(k * n_lambda / 3.0)))
    mesh = gm.disk_mesh(2.0, n_rings)
    partition = gm.build_partition(
        mesh, {gm.DISK_VOLUME_TAG: "omega"},
        [("gamma", gm.DISK_BOUNDARY_TAG, gm.ROLE_COUPLING)],
    )
    tm = gm.build_trace_maps(partition)
    tri_idx = partition.subdomain("omega").tri_idx

    kappa_sq = analytic.lens_kappa_squared(k)
    a_vol = fem.assemble_helmholtz(mesh, tri_idx, kappa_sq)
    source = lambda p: (k ** 2) * (analytic.lens_eta(p) - 1.0) \
        * analytic.plane_wave(k, theta_inc, p)
    ell = fem.assemble_load(mesh, tri_idx, source)

    chain = partition.surface("gamma").chain
    bios = bem.assemble_bios(chain, bem.Kernel2D("helmholtz", k), n_gauss=n_gauss)
    gamma_block = formulations.build_boundary_block(coupling, bios.mass, bios=bios)

    block_ops = []
    for blk in tm.blocks:
        if blk.kind == "surface":
            block_ops.append(formulations.BlockOperator(
                "gamma", gamma_block.matrix,
                formulations.boundary_block_rhs(gamma_block)))
        else:
            block_ops.append(_volume_block(mesh, blk, a_vol, ell))
    sub = partition.subdomain("omega")
    return Problem(
        geometry="heterogeneous_lens", kappa=k, mesh=mesh, partition=partition,
        trace_maps=tm, free_mask=np.ones(mesh.n_vertices, dtype=bool),
        block_ops=block_ops, chains={"gamma": chain},
        volume_info={"omega": VolumeInfo(tri_idx, _skeleton_edges_of(partition, sub))},
        kappa_squared=kappa_sq, theta_inc=theta_inc, reference=None,
        reference_tris=tri_idx, bios={"gamma": bios},
    )


# cavity geometry constants (outer box, hollow interior, mouth strip)
CAVITY_OUTER = (0.0, 1.5, 0.0, 0.6)
CAVITY_HOLLOW = (0.1, 1.4, 0.1, 0.5)
CAVITY_QUASIMODE_LENGTH = 0.4           # short hollow side; modes at n pi / 0.4


def _segment_points(lo, hi, h):
    n = max(1, int(round((hi - lo) / h)))
    return np.linspace(lo, hi, n + 1)


def _cavity_grid(h):
    x0, x1, y0, y1 = CAVITY_OUTER
    hx0, hx1, hy0, hy1 = CAVITY_HOLLOW
    xs = np.unique(np.concatenate([
        _segment_points(x0, hx0, h), _segment_points(hx0, hx1, h),
        _segment_points(hx1, x1, h)]))
    ys = np.unique(np.concatenate([
        _segment_points(y0, hy0, h), _segment_points(hy0, hy1, h),
        _segment_points(hy1, y1, h)]))
    return xs, ys


def _grid_path(xs, ys, waypoints):
    """Vertex-id path along grid lines through the waypoint corners."""
    ix = {round(float(x), 12): i for i, x in enumerate(xs)}
    iy = {round(float(y), 12): j for j, y in enumerate(ys)}
    ny1 = len(ys)

    def vid(i, j):
        return i * ny1 + j

    path = []
    pts = waypoints + [waypoints[0]]
    for (xa, ya), (xb, yb) in zip(pts[:-1], pts[1:]):
        ia, ja = ix[round(xa, 12)], iy[round(ya, 12)]
        ib, jb = ix[round(xb, 12)], iy[round(yb, 12)]
        if ia == ib:
            step = 1 if jb > ja else -1
            seg = [vid(ia, j) for j in range(ja, jb, step)]
        elif ja == jb:
            step = 1 if ib > ia else -1
            seg = [vid(i, ja) for i in range(ia, ib, step)]
        else:
            raise ValueError("waypoints must be axis-aligned")
        path.extend(seg)
    return np.array(path, dtype=np.int64)


def rectangular_cavity(kappa, n_lambda, coupling=formulations.COSTABEL,
                       theta_inc=4 * np.pi / 10, n_gauss=8):
    """Open sound-soft rectangular cavity: FEM hollow, BEM exterior, weak
    Dirichlet walls; the mouth corners are cross-points of the skeleton."""
    h = 2 * np.pi / (kappa * n_lambda)
    xs, ys = _cavity_grid(h)
    nx1, ny1 = len(xs), len(ys)
    xx, yy = np.meshgrid(xs, ys, indexing="ij")
    verts = np.column_stack([xx.ravel(), yy.ravel()])

    hx0, hx1, hy0, hy1 = CAVITY_HOLLOW
    x1_outer = CAVITY_OUTER[1]

    hollow_tris, wall_tris = [], []
    for i in range(nx1 - 1):
        for j in range(ny1 - 1):
            cx = 0.5 * (xs[i] + xs[i + 1])
            cy = 0.5 * (ys[j] + ys[j + 1])
            a = i * ny1 + j
            b = (i + 1) * ny1 + j
            c = (i + 1) * ny1 + j + 1
            d = i * ny1 + j + 1
            two = [(a, b, c), (a, c, d)]
            in_hollow = hx0 < cx < hx1 and hy0 < cy < hy1
            in_strip = hx1 < cx < x1_outer and hy0 < cy < hy1
            if in_hollow:
                hollow_tris.extend(two)
            elif not in_strip:
                wall_tris.extend(two)

    gamma_b_path = _grid_path(xs, ys, [
        (1.5, 0.0), (1.5, 0.1), (1.4, 0.1), (1.4, 0.5), (1.5, 0.5),
        (1.5, 0.6), (0.0, 0.6), (0.0, 0.0)])
    gamma_o_path = _grid_path(xs, ys, [
        (1.5, 0.0), (1.5, 0.1), (1.4, 0.1), (0.1, 0.1), (0.1, 0.5),
        (1.4, 0.5), (1.5, 0.5), (1.5, 0.6), (0.0, 0.6), (0.0, 0.0)])

    def path_edges(path):
        return np.column_stack([path, np.roll(path, -1)])

    edges = np.vstack([path_edges(gamma_b_path), path_edges(gamma_o_path)])
    edge_tags = np.concatenate([np.full(len(gamma_b_path), GAMMA_TAG),
                                np.full(len(gamma_o_path), OBSTACLE_TAG)])

    mesh = gm.Mesh2D(verts, np.array(hollow_tris), np.full(len(hollow_tris), 10),
                     edges, edge_tags).validate()
    wall_mesh = gm.Mesh2D(verts, np.array(wall_tris), np.full(len(wall_tris), 20),
                          np.zeros((0, 2), dtype=np.int64),
                          np.zeros(0, dtype=np.int64)).validate()

    partition = gm.build_partition(
        mesh, {10: "omega"},
        [("gamma_b", GAMMA_TAG, gm.ROLE_COUPLING),
         ("gamma_o", OBSTACLE_TAG, gm.ROLE_WEAK_DIRICHLET)],
    )
    tm = gm.build_trace_maps(partition)

    tri_idx = partition.subdomain("omega").tri_idx
    a_vol = fem.assemble_helmholtz(mesh, tri_idx, kappa ** 2)
    ell = np.zeros(mesh.n_vertices, dtype=np.complex128)

    chain_b = partition.surface("gamma_b").chain
    chain_o = partition.surface("gamma_o").chain
    bios = bem.assemble_bios(chain_b, bem.Kernel2D("helmholtz", kappa),
                             n_gauss=n_gauss)
    gamma_block = formulations.build_boundary_block(coupling, bios.mass, bios=bios)

    block_ops = []
    for blk in tm.blocks:
        if blk.name == "gamma_b":
            block_ops.append(formulations.BlockOperator(
                "gamma_b", gamma_block.matrix,
                formulations.boundary_block_rhs(gamma_block)))
        elif blk.name == "gamma_o":
            mass = bem.chain_mass(chain_o)
            bblock = formulations.build_boundary_block(
                formulations.WEAK_DIRICHLET, mass)
            data = -analytic.plane_wave(kappa, theta_inc,
                                        mesh.vertices[blk.trace_vertices])
            block_ops.append(formulations.BlockOperator(
                "gamma_o", bblock.matrix,
                formulations.boundary_block_rhs(bblock, data)))
        else:
            block_ops.append(_volume_block(mesh, blk, a_vol, ell))

    sub = partition.subdomain("omega")
    return Problem(
        geometry="rectangular_cavity", kappa=kappa, mesh=mesh,
        partition=partition, trace_maps=tm,
        free_mask=np.ones(mesh.n_vertices, dtype=bool),
        block_ops=block_ops,
        chains={"gamma_b": chain_b, "gamma_o": chain_o},
        volume_info={"omega": VolumeInfo(tri_idx, _skeleton_edges_of(partition, sub))},
        kappa_squared=kappa ** 2, theta_inc=theta_inc, reference=None,
        reference_tris=tri_idx,
        aux_schur={"gamma_o": (wall_mesh, np.arange(wall_mesh.triangles.shape[0]),
                               partition.surface("gamma_o").edges, None)},
        bios={"gamma_b": bios},
    )


def unit_square_weak_dirichlet(kappa_squared, n):
    """Unit square with a weakly imposed homogeneous Dirichlet boundary.

    The workhorse fixture for resonance studies: at a discrete Dirichlet
    eigenvalue of the Laplacian, the monolithic matrix is singular.
    """
    mesh = gm.rect_mesh(0.0, 1.0, 0.0, 1.0, n, n)
    partition = gm.build_partition(
        mesh, {gm.RECT_VOLUME_TAG: "omega"},
        [("boundary", list(gm.RECT_SIDE_TAGS.values()), gm.ROLE_WEAK_DIRICHLET)],
    )
    tm = gm.build_trace_maps(partition)
    tri_idx = partition.subdomain("omega").tri_idx
    a_vol = fem.assemble_helmholtz(mesh, tri_idx, kappa_squared)
    chain = partition.surface("boundary").chain
    mass = bem.chain_mass(chain)
    bblock = formulations.build_boundary_block(formulations.WEAK_DIRICHLET, mass)
    block_ops = []
    for blk in tm.blocks:
        if blk.kind == "surface":
            block_ops.append(formulations.BlockOperator(
                "boundary", bblock.matrix,
                formulations.boundary_block_rhs(bblock)))
        else:
            block_ops.append(_volume_block(
                mesh, blk, a_vol, np.zeros(mesh.n_vertices, dtype=np.complex128)))
    sub = partition.subdomain("omega")
    return Problem(
        geometry="unit_square", kappa=float(np.sqrt(abs(kappa_squared))),
        mesh=mesh, partition=partition, trace_maps=tm,
        free_mask=np.ones(mesh.n_vertices, dtype=bool),
        block_ops=block_ops, chains={"boundary": chain},
        volume_info={"omega": VolumeInfo(tri_idx, _skeleton_edges_of(partition, sub))},
        kappa_squared=kappa_squared, reference=None, reference_tris=tri_idx,
    )


def square_dirichlet_resonance(n):
    """Smallest discrete Dirichlet eigenvalue of the unit-square Laplacian.

    Eigen-solve of the interior stiffness/mass pencil; feeding the returned
    value as kappa_squared into the weak-Dirichlet square makes the
    monolithic system singular.
    """
    import scipy.linalg as sla
    mesh = gm.rect_mesh(0.0, 1.0, 0.0, 1.0, n, n)
    idx = np.arange(mesh.triangles.shape[0])
    k = fem.assemble_stiffness(mesh, idx)
    m = fem.assemble_mass(mesh, idx)
    boundary = np.unique(mesh.edges)
    interior = np.setdiff1d(np.arange(mesh.n_vertices), boundary)
    kii = k.tocsr()[interior][:, interior].toarray()
    mii = m.tocsr()[interior][:, interior].toarray()
    vals = sla.eigh(kii, mii, eigvals_only=True)
    return float(vals[0])
