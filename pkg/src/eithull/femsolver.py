"""P1 finite-element forward solver on the unit disk.

Solves the conductivity equation with Neumann boundary data expanded in
the trigonometric boundary basis, and assembles Neumann-to-Dirichlet /
Dirichlet-to-Neumann matrices in that basis.  Closed-form matrices for
the homogeneous disk and for a single concentric inclusion serve as
independent oracles.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .geometry import Phantom, conductivity_field

CONDITION_LIMIT = 1e12
DEFAULT_NOISE_LEVEL = 10.0**-4.5


class SolverError(RuntimeError):
    """The discrete system is singular or unacceptably ill-conditioned."""


def mode_frequency(n: int) -> int:
    """Angular frequency of basis function n: (n+1)/2 for odd n, n/2 for even."""
    return (n + 1) // 2 if n % 2 == 1 else n // 2


def trig_basis(order: int, theta: np.ndarray) -> np.ndarray:
    """Orthonormal boundary basis evaluated at angles theta, shape (order+1, len).

    Row 0 is the constant (2*pi)**-0.5; row n is pi**-0.5 * cos(k*theta)
    for odd n and pi**-0.5 * sin(k*theta) for even n, with k = mode_frequency(n).
    """
    theta = np.asarray(theta, dtype=float)
    out = np.empty((order + 1, theta.size))
    out[0] = 1.0 / math.sqrt(2 * np.pi)
    for n in range(1, order + 1):
        k = mode_frequency(n)
        out[n] = (np.cos(k * theta) if n % 2 == 1 else np.sin(k * theta)) / math.sqrt(np.pi)
    return out


@dataclass(frozen=True)
class DiskMesh:
    """Triangulation of the unit disk.

    nodes      : (n, 2) coordinates, all inside the closed unit disk
    triangles  : (m, 3) CCW vertex indices
    boundary   : boundary node indices ordered by increasing angle
    edge_length: maximum edge length
    """

    nodes: np.ndarray
    triangles: np.ndarray
    boundary: np.ndarray
    edge_length: float

    @property
    def boundary_angles(self) -> np.ndarray:
        b = self.nodes[self.boundary]
        return np.mod(np.arctan2(b[:, 1], b[:, 0]), 2 * np.pi)

    def boundary_weights(self) -> np.ndarray:
        """Trapezoidal quadrature weights in arc length over the ordered
        boundary nodes (the boundary sits on the unit circle, so dS = d(theta))."""
        th = self.boundary_angles
        gaps = np.diff(np.concatenate([th, [th[0] + 2 * np.pi]]))
        return 0.5 * (gaps + np.roll(gaps, 1))


def build_disk_mesh(refinement_level: int) -> DiskMesh:
    """Structured disk mesh by recursive refinement of a 4-triangle base.

    The base is the square with vertices on the unit circle plus the
    center node.  Each level splits every triangle into four via edge
    midpoints; midpoints of boundary edges are snapped radially onto the
    unit circle.  Level 7 reproduces a 65536-triangle, 33025-node mesh.
    """
    if not 0 <= refinement_level <= 8:
        raise ValueError("refinement_level must be in [0, 8]")
    nodes = [
        np.array([1.0, 0.0]),
        np.array([0.0, 1.0]),
        np.array([-1.0, 0.0]),
        np.array([0.0, -1.0]),
        np.array([0.0, 0.0]),
    ]
    tris = [(0, 1, 4), (1, 2, 4), (2, 3, 4), (3, 0, 4)]
    on_boundary = [True, True, True, True, False]

    for _ in range(refinement_level):
        midpoint_of: dict[tuple[int, int], int] = {}

        def midpoint(a: int, b: int) -> int:
            key = (a, b) if a < b else (b, a)
            idx = midpoint_of.get(key)
            if idx is not None:
                return idx
            m = 0.5 * (nodes[a] + nodes[b])
            snap = on_boundary[a] and on_boundary[b]
            if snap:
                m = m / np.hypot(m[0], m[1])
            idx = len(nodes)
            nodes.append(m)
            on_boundary.append(snap)
            midpoint_of[key] = idx
            return idx

        next_tris = []
        for a, b, c in tris:
            ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
            next_tris += [(a, ab, ca), (ab, b, bc), (ca, bc, c), (ab, bc, ca)]
        tris = next_tris

    node_arr = np.array(nodes)
    tri_arr = np.array(tris, dtype=np.int32)
    bidx = np.nonzero(on_boundary)[0]
    ang = np.mod(np.arctan2(node_arr[bidx, 1], node_arr[bidx, 0]), 2 * np.pi)
    bidx = bidx[np.argsort(ang)]

    p = node_arr[tri_arr]
    edges = np.concatenate([p[:, 1] - p[:, 0], p[:, 2] - p[:, 1], p[:, 0] - p[:, 2]])
    h_max = float(np.max(np.hypot(edges[:, 0], edges[:, 1])))
    return DiskMesh(node_arr, tri_arr, bidx.astype(np.int64), h_max)


@dataclass(frozen=True)
class NDMatrix:
    """Neumann-to-Dirichlet matrix on modes 1..order (constant excluded)."""

    order: int
    entries: np.ndarray


@dataclass(frozen=True)
class DNMatrix:
    """Dirichlet-to-Neumann matrix on modes 0..order; the constant row and
    column are identically zero."""

    order: int
    entries: np.ndarray


def _stiffness(mesh: DiskMesh, phantom: Phantom) -> sp.csc_matrix:
    """Assemble the sigma-weighted P1 stiffness matrix, sigma sampled at
    triangle centroids."""
    p = mesh.nodes[mesh.triangles]
    e1 = p[:, 1] - p[:, 0]
    e2 = p[:, 2] - p[:, 0]
    det = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
    if np.any(det <= 0):
        raise SolverError("mesh contains degenerate or flipped triangles")
    grad = np.empty((len(mesh.triangles), 3, 2))
    grad[:, 0] = np.stack([p[:, 1, 1] - p[:, 2, 1], p[:, 2, 0] - p[:, 1, 0]], axis=1)
    grad[:, 1] = np.stack([p[:, 2, 1] - p[:, 0, 1], p[:, 0, 0] - p[:, 2, 0]], axis=1)
    grad[:, 2] = np.stack([p[:, 0, 1] - p[:, 1, 1], p[:, 1, 0] - p[:, 0, 0]], axis=1)
    grad /= det[:, None, None]
    sigma = conductivity_field(phantom, p.mean(axis=1))
    local = (0.5 * det * sigma)[:, None, None] * np.einsum("tid,tjd->tij", grad, grad)
    rows = np.repeat(mesh.triangles, 3, axis=1).ravel()
    cols = np.tile(mesh.triangles, (1, 3)).ravel()
    n = len(mesh.nodes)
    return sp.coo_matrix((local.ravel(), (rows, cols)), shape=(n, n)).tocsc()


class NeumannFactorization:
    """Factorized zero-boundary-mean Neumann operator for one conductivity.

    The pure-Neumann stiffness matrix has the constants in its null space;
    the zero-mean condition on the boundary trace is imposed through a
    rank-one Lagrange augmentation, so a single sparse LU serves every
    right-hand side.
    """

    def __init__(self, mesh: DiskMesh, phantom: Phantom):
        self.mesh = mesh
        k = _stiffness(mesh, phantom)
        n = len(mesh.nodes)
        w = mesh.boundary_weights()
        c = np.zeros(n)
        c[mesh.boundary] = w
        system = sp.bmat([[k, c[:, None]], [c[None, :], None]], format="csc")
        try:
            self._lu = spla.splu(system)
        except RuntimeError as exc:  # pragma: no cover - inadmissible sigma
            raise SolverError(f"factorization failed: {exc}") from exc
        self._weights = w

    def solve_density(self, density: np.ndarray) -> np.ndarray:
        """Nodal potential for a boundary current density given at the
        ordered boundary nodes (zero-mean trace)."""
        rhs = np.zeros(len(self.mesh.nodes) + 1)
        rhs[self.mesh.boundary] = self._weights * density
        sol = self._lu.solve(rhs)
        if not np.all(np.isfinite(sol)):
            raise SolverError("Neumann solve produced non-finite values")
        return sol[:-1]


def solve_neumann(mesh: DiskMesh, phantom: Phantom, g: np.ndarray) -> np.ndarray:
    """Solve div(sigma grad u) = 0 with Neumann data sum_n g[n] * phi_n.

    g holds coefficients for modes 0..order and must have g[0] == 0
    (compatibility: total injected current vanishes).  The returned nodal
    potential has zero weighted mean on the boundary.
    """
    g = np.asarray(g, dtype=float)
    if g[0] != 0.0:
        raise ValueError("Neumann data must have zero mean (g[0] == 0)")
    basis = trig_basis(len(g) - 1, mesh.boundary_angles)
    density = g @ basis
    return NeumannFactorization(mesh, phantom).solve_density(density)


def nd_matrix(mesh: DiskMesh, phantom: Phantom, order: int) -> NDMatrix:
    """ND matrix: column l holds the boundary Fourier coefficients of the
    solution driven by Neumann density phi_l, for modes 1..order."""
    if order < 2 or order % 2 != 0:
        raise ValueError("order must be even and >= 2")
    fact = NeumannFactorization(mesh, phantom)
    w = mesh.boundary_weights()
    basis = trig_basis(order, mesh.boundary_angles)
    nd = np.empty((order, order))
    for l in range(1, order + 1):
        u = fact.solve_density(basis[l])
        trace = u[mesh.boundary]
        nd[:, l - 1] = basis[1:] @ (w * trace)
    return NDMatrix(order, nd)


def add_nd_noise(nd: NDMatrix, level: float, rng: np.random.Generator) -> NDMatrix:
    """Independent Gaussian perturbation of every entry, std = level."""
    if level <= 0:
        raise ValueError("noise level must be positive")
    noise = rng.normal(0.0, level, size=nd.entries.shape)
    return NDMatrix(nd.order, nd.entries + noise)


def dn_from_nd(nd: NDMatrix) -> DNMatrix:
    """Invert the mode-1..order block and embed with zero constant row/column."""
    if np.linalg.cond(nd.entries) > CONDITION_LIMIT:
        raise SolverError("ND matrix is near-singular; refusing to invert")
    block = np.linalg.inv(nd.entries)
    full = np.zeros((nd.order + 1, nd.order + 1))
    full[1:, 1:] = block
    return DNMatrix(nd.order, full)


def nd_from_dn(dn: DNMatrix) -> NDMatrix:
    """Inverse embedding of dn_from_nd (round-trip helper)."""
    return NDMatrix(dn.order, np.linalg.inv(dn.entries[1:, 1:]))


def dn_analytic_homogeneous(order: int) -> DNMatrix:
    """DN matrix of the homogeneous disk: diag of the mode frequencies."""
    if order < 2:
        raise ValueError("order must be >= 2")
    diag = np.array([float(mode_frequency(n)) for n in range(order + 1)])
    return DNMatrix(order, np.diag(diag))


def dn_analytic_concentric(rho: float, sigma_in: float, order: int) -> DNMatrix:
    """DN matrix for a centered disk inclusion of radius rho and contrast
    sigma_in, from the two-layer separation-of-variables solution:

        lambda_k = k * (1 + mu * rho**(2k)) / (1 - mu * rho**(2k)),
        mu = (sigma_in - 1) / (sigma_in + 1).
    """
    if not 0 < rho < 1:
        raise ValueError("rho must lie in (0, 1)")
    if sigma_in <= 0:
        raise ValueError("sigma_in must be positive")
    mu = (sigma_in - 1.0) / (sigma_in + 1.0)
    diag = np.zeros(order + 1)
    for n in range(1, order + 1):
        k = mode_frequency(n)
        diag[n] = k * (1 + mu * rho ** (2 * k)) / (1 - mu * rho ** (2 * k))
    return DNMatrix(order, np.diag(diag))
