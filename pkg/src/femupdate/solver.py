"""Linear elastic forward solver for patched coupon meshes.

Isoparametric QUAD4 (plane stress) and HEX8 elements with full Gauss
integration, sparse assembly, displacement-controlled boundary conditions
applied by elimination, and strain sampling at surface Gauss points.

Shear convention: the xy strain reported everywhere is the engineering
shear gamma_xy = du/dy + dv/dx (twice the tensor component), matching the
output convention of DIC software.
"""

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from . import _shape
from .errors import DegenerateElementError, NumericalError, SingularSystemError
from .geometry import Mesh, PatchMap

_EQUILIBRIUM_RTOL = 1e-8


@dataclass(frozen=True)
class DesignVector:
    """Per-patch elastic moduli (MPa) with box bounds."""

    values: np.ndarray
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        lo = np.asarray(self.lower, dtype=float)
        hi = np.asarray(self.upper, dtype=float)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)
        if not (v.shape == lo.shape == hi.shape):
            raise ValueError("values and bounds must have matching shapes")
        if not np.all(lo > 0):
            raise ValueError("lower bounds must be positive")
        if not np.all((lo <= v) & (v <= hi)):
            raise ValueError("design values must lie within bounds")

    def __len__(self) -> int:
        return self.values.size


@dataclass(frozen=True)
class MaterialField:
    """Per-patch modulus distribution plus the shared Poisson ratio."""

    design: DesignVector
    poisson_ratio: float = 0.3

    def __post_init__(self):
        _check_poisson(self.poisson_ratio)


def _check_poisson(nu: float) -> None:
    if not (0.0 <= nu < 0.5):
        raise ValueError(f"poisson_ratio must satisfy 0 <= nu < 0.5, got {nu}")


@dataclass(frozen=True)
class BoundaryConditions:
    """Displacement control: one face held, the opposite face displaced.

    The loaded face gets its normal displacement component prescribed to
    ``u_applied``; tangential components stay free. The fixed face is held
    either fully clamped (``clamp_fixed=True``) or, by default, on rollers:
    only the normal component is pinned, plus the minimal set of corner
    pins that removes the remaining rigid modes. Rollers reproduce the
    uniaxial analytic state exactly; clamping adds end constraint effects.
    """

    fixed_face: str
    loaded_face: str
    u_applied: float
    clamp_fixed: bool = False

    def prescribed_dofs(self, mesh: Mesh) -> tuple[np.ndarray, np.ndarray]:
        """Return (dof indices, prescribed values), sorted by dof index."""
        if not np.isfinite(self.u_applied):
            raise ValueError("u_applied must be finite")
        fixed_nodes = mesh.face_nodes(self.fixed_face)
        loaded_nodes = mesh.face_nodes(self.loaded_face)
        if fixed_nodes.size == 0 or loaded_nodes.size == 0:
            raise ValueError("fixed and loaded faces must be nonempty")
        if np.intersect1d(fixed_nodes, loaded_nodes).size:
            raise ValueError(
                f"fixed face {self.fixed_face!r} and loaded face {self.loaded_face!r} share nodes"
            )
        dim = mesh.dimension
        axis_fixed = "xyz".index(self.fixed_face[0])
        axis_loaded = "xyz".index(self.loaded_face[0])

        entries: dict[int, float] = {}
        for n in loaded_nodes:
            entries[dim * n + axis_loaded] = float(self.u_applied)
        if self.clamp_fixed:
            for n in fixed_nodes:
                for a in range(dim):
                    entries[dim * n + a] = 0.0
        else:
            for n in fixed_nodes:
                entries[dim * n + axis_fixed] = 0.0
            for node, axes in self._corner_pins(mesh, fixed_nodes, axis_fixed):
                for a in axes:
                    entries[dim * node + a] = 0.0

        dofs = np.array(sorted(entries), dtype=np.int64)
        values = np.array([entries[d] for d in dofs])
        return dofs, values

    def _corner_pins(self, mesh, fixed_nodes, axis_fixed):
        """Minimal pins on the fixed face killing tangential rigid modes."""
        tangent = [a for a in range(mesh.dimension) if a != axis_fixed]
        coords = mesh.nodes[fixed_nodes]
        if mesh.dimension == 2:
            a = fixed_nodes[np.lexsort((coords[:, tangent[0]],))[0]]
            return [(a, tangent)]
        t1, t2 = tangent
        order = np.lexsort((coords[:, t2], coords[:, t1]))
        corner_a = fixed_nodes[order[0]]  # min t1, then min t2
        order_b = np.lexsort((coords[:, t2], -coords[:, t1]))
        corner_b = fixed_nodes[order_b[0]]  # max t1, then min t2
        return [(corner_a, (t1, t2)), (corner_b, (t2,))]


@dataclass(frozen=True)
class DisplacementField:
    """Nodal displacement vectors (mm), shape (n_nodes, dimension)."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", v)
        if not np.all(np.isfinite(v)):
            raise ValueError("displacement field contains non-finite entries")

    def flat(self) -> np.ndarray:
        return self.values.ravel()


@dataclass(frozen=True)
class StrainField:
    """In-plane strain samples: exx, eyy and engineering shear in the exy slot."""

    points: np.ndarray
    exx: np.ndarray
    eyy: np.ndarray
    exy: np.ndarray

    def __post_init__(self):
        n = self.points.shape[0]
        if not (self.exx.size == self.eyy.size == self.exy.size == n):
            raise ValueError("strain component arrays must match the point count")
        for a in (self.points, self.exx, self.eyy, self.exy):
            if not np.all(np.isfinite(a)):
                raise ValueError("strain field contains non-finite entries")

    @property
    def n_points(self) -> int:
        return self.points.shape[0]


def elastic_matrix(modulus: float, nu: float, dimension: int) -> np.ndarray:
    """Constitutive matrix for engineering-shear Voigt strain vectors."""
    _check_poisson(nu)
    if modulus <= 0:
        raise ValueError(f"modulus must be positive, got {modulus}")
    if dimension == 2:  # plane stress
        c = modulus / (1.0 - nu * nu)
        return c * np.array([[1.0, nu, 0.0], [nu, 1.0, 0.0], [0.0, 0.0, 0.5 * (1.0 - nu)]])
    lam = modulus * nu / ((1.0 + nu) * (1.0 - 2.0 * nu))
    mu = modulus / (2.0 * (1.0 + nu))
    d = np.zeros((6, 6))
    d[:3, :3] = lam
    d[np.arange(3), np.arange(3)] = lam + 2.0 * mu
    d[np.arange(3, 6), np.arange(3, 6)] = mu
    return d


def _strain_displacement(coords: np.ndarray, parent_point: np.ndarray):
    """B matrix and det J at one parent point for an element's node coords."""
    dim = coords.shape[1]
    dnp = _shape.shape_gradients(parent_point)
    jac = _shape.jacobian(coords, dnp)
    detj = np.linalg.det(jac)
    dnx = dnp @ np.linalg.inv(jac)
    n_nodes = coords.shape[0]
    if dim == 2:
        b = np.zeros((3, 2 * n_nodes))
        b[0, 0::2] = dnx[:, 0]
        b[1, 1::2] = dnx[:, 1]
        b[2, 0::2] = dnx[:, 1]
        b[2, 1::2] = dnx[:, 0]
    else:
        b = np.zeros((6, 3 * n_nodes))
        b[0, 0::3] = dnx[:, 0]
        b[1, 1::3] = dnx[:, 1]
        b[2, 2::3] = dnx[:, 2]
        b[3, 0::3] = dnx[:, 1]
        b[3, 1::3] = dnx[:, 0]
        b[4, 1::3] = dnx[:, 2]
        b[4, 2::3] = dnx[:, 1]
        b[5, 0::3] = dnx[:, 2]
        b[5, 2::3] = dnx[:, 0]
    return b, detj


def element_stiffness(
    element_nodes: np.ndarray,
    modulus: float,
    nu: float,
    thickness: float | None = None,
    element_id: int | None = None,
) -> np.ndarray:
    """Isoparametric element stiffness, 8x8 for QUAD4 or 24x24 for HEX8.

    Full Gauss integration (2x2 or 2x2x2). ``thickness`` is required for
    QUAD4 and ignored for HEX8. Raises DegenerateElementError when the
    Jacobian determinant is non-positive at any integration point.
    """
    coords = np.asarray(element_nodes, dtype=float)
    if coords.shape == (4, 2):
        gauss = _shape.gauss_points_2d()
        if thickness is None or thickness <= 0:
            raise ValueError("QUAD4 stiffness requires a positive thickness")
        scale = float(thickness)
    elif coords.shape == (8, 3):
        gauss = _shape.gauss_points_3d()
        scale = 1.0
    else:
        raise ValueError(f"element_nodes must be (4, 2) or (8, 3), got {coords.shape}")
    d = elastic_matrix(modulus, nu, coords.shape[1])
    ndof = coords.size
    k = np.zeros((ndof, ndof))
    for gp in gauss:
        b, detj = _strain_displacement(coords, gp)
        if detj <= 0.0:
            raise DegenerateElementError(element_id, detj)
        k += scale * detj * (b.T @ d @ b)
    return k


def _align_to_pattern(template: sp.csr_matrix, a: sp.csr_matrix) -> np.ndarray:
    """Data of ``a`` scattered onto the sparsity slots of ``template``.

    Every entry of ``a`` must exist in the template pattern; both must be
    canonical CSR with sorted indices.
    """
    a = a.tocsr()
    a.sort_indices()
    out = np.zeros(template.nnz)
    for r in range(a.shape[0]):
        a0, a1 = a.indptr[r], a.indptr[r + 1]
        if a0 == a1:
            continue
        t0, t1 = template.indptr[r], template.indptr[r + 1]
        pos = t0 + np.searchsorted(template.indices[t0:t1], a.indices[a0:a1])
        if np.any(template.indices[pos] != a.indices[a0:a1]):
            raise AssertionError("sparsity pattern is not a superset of the patch matrix")
        out[pos] = a.data[a0:a1]
    return out


def _element_dofs(mesh: Mesh) -> np.ndarray:
    """Global dof indices per element, node-major: (n_elements, dim*nodes)."""
    dim = mesh.dimension
    conn = mesh.elements
    dofs = (dim * conn[:, :, None] + np.arange(dim)[None, None, :]).reshape(conn.shape[0], -1)
    return dofs


def assemble(mesh: Mesh, patch_map: PatchMap, material: MaterialField) -> sp.csr_matrix:
    """Assemble the global stiffness; element e uses its patch modulus."""
    if patch_map.patch_count != len(material.design):
        raise ValueError(
            f"patch_count {patch_map.patch_count} != design length {len(material.design)}"
        )
    moduli = material.design.values
    nu = material.poisson_ratio
    dim = mesh.dimension
    n_dofs = dim * mesh.n_nodes
    edofs = _element_dofs(mesh)
    ndof_el = edofs.shape[1]
    rows = np.empty(mesh.n_elements * ndof_el * ndof_el, dtype=np.int64)
    cols = np.empty_like(rows)
    vals = np.empty(rows.shape[0])
    at = 0
    for e in range(mesh.n_elements):
        ke = element_stiffness(
            mesh.element_coords(e),
            moduli[patch_map.patch_of_element[e]],
            nu,
            mesh.thickness,
            element_id=e,
        )
        ed = edofs[e]
        block = ndof_el * ndof_el
        rows[at : at + block] = np.repeat(ed, ndof_el)
        cols[at : at + block] = np.tile(ed, ndof_el)
        vals[at : at + block] = ke.ravel()
        at += block
    k = sp.coo_matrix((vals, (rows, cols)), shape=(n_dofs, n_dofs)).tocsr()
    k.sum_duplicates()
    return k


def solve_constrained(
    k: sp.spmatrix, dofs: np.ndarray, values: np.ndarray, rtol: float = _EQUILIBRIUM_RTOL
) -> np.ndarray:
    """Solve K u = 0 subject to u[dofs] = values by row/column elimination."""
    n = k.shape[0]
    k = k.tocsr()
    free = np.setdiff1d(np.arange(n, dtype=np.int64), dofs)
    u = np.zeros(n)
    u[dofs] = values
    if free.size == 0:
        return u
    rhs = -(k[free][:, dofs] @ values)
    kff = k[free][:, free].tocsc()
    try:
        lu = splu(kff)
    except RuntimeError as exc:
        raise SingularSystemError(f"stiffness factorization failed: {exc}") from exc
    udiag = np.abs(lu.U.diagonal())
    if udiag.min() < 1e-12 * udiag.max():
        raise SingularSystemError(
            "stiffness is numerically singular; boundary conditions leave rigid modes"
        )
    uf = lu.solve(rhs)
    if not np.all(np.isfinite(uf)):
        raise SingularSystemError("solution is non-finite; boundary conditions leave rigid modes")
    rhs_norm = np.linalg.norm(rhs)
    if rhs_norm > 0:
        rel = np.linalg.norm(kff @ uf - rhs) / rhs_norm
        if rel > rtol:
            raise NumericalError(f"equilibrium residual {rel:.3e} exceeds {rtol:.1e}")
    u[free] = uf
    return u


def solve_static(
    mesh: Mesh, patch_map: PatchMap, material: MaterialField, bcs: BoundaryConditions
) -> DisplacementField:
    """Static solve under displacement control; returns nodal displacements."""
    k = assemble(mesh, patch_map, material)
    dofs, values = bcs.prescribed_dofs(mesh)
    u = solve_constrained(k, dofs, values)
    return DisplacementField(u.reshape(mesh.n_nodes, mesh.dimension))


def _surface_sampling(mesh: Mesh, surface: str | None):
    """Surface element ids and their parent-space sample points.

    2D meshes sample every element at its 2x2 in-plane Gauss points
    ("midplane"); 3D meshes sample the z = T face ("front") at the 2x2
    face Gauss points of the top element layer.
    """
    if mesh.dimension == 2:
        if surface not in (None, "midplane"):
            raise ValueError(f"2D meshes expose only the 'midplane' surface, got {surface!r}")
        element_ids = np.arange(mesh.n_elements)
        parent_points = _shape.gauss_points_2d()
    else:
        if surface not in (None, "front"):
            raise ValueError(f"3D meshes expose only the 'front' (z = T) surface, got {surface!r}")
        nx, ny, nz = mesh.divisions
        element_ids = np.arange((nz - 1) * nx * ny, nz * nx * ny)
        face = _shape.gauss_points_2d()
        parent_points = np.column_stack([face, np.ones(face.shape[0])])
    if element_ids.size == 0:
        raise ValueError("surface selection is empty")
    return element_ids, parent_points


def surface_strains(
    mesh: Mesh, displacement: DisplacementField, surface: str | None = None
) -> StrainField:
    """Sample in-plane strains (exx, eyy, gamma_xy) on the coupon surface."""
    element_ids, parent_points = _surface_sampling(mesh, surface)
    u = displacement.flat()
    edofs = _element_dofs(mesh)
    rows = (0, 1, 2) if mesh.dimension == 2 else (0, 1, 3)
    points, exx, eyy, exy = [], [], [], []
    for e in element_ids:
        coords = mesh.element_coords(e)
        ue = u[edofs[e]]
        for gp in parent_points:
            b, _ = _strain_displacement(coords, gp)
            eps = b @ ue
            points.append((_shape.shape_values(gp) @ coords)[:2])
            exx.append(eps[rows[0]])
            eyy.append(eps[rows[1]])
            exy.append(eps[rows[2]])
    return StrainField(np.array(points), np.array(exx), np.array(eyy), np.array(exy))


class ForwardModel:
    """Cached forward operator for repeated solves with varying moduli.

    The global stiffness is linear in each patch modulus, so the model
    precomputes per-patch unit-modulus assemblies once and rebuilds
    K(E) = sum_k E_k A_k per call; every call still performs a fresh
    factorization and solve. Surface strain sampling and its Gauss-point
    geometry are likewise precomputed. Instances are immutable after
    construction and safe to share across threads.
    """

    def __init__(
        self,
        mesh: Mesh,
        patch_map: PatchMap,
        poisson_ratio: float,
        bcs: BoundaryConditions,
        surface: str | None = None,
    ):
        _check_poisson(poisson_ratio)
        self.mesh = mesh
        self.patch_map = patch_map
        self.poisson_ratio = poisson_ratio
        self.bcs = bcs
        self._dofs, self._dof_values = bcs.prescribed_dofs(mesh)
        n_dofs = mesh.dimension * mesh.n_nodes
        self._n_dofs = n_dofs
        self._free = np.setdiff1d(np.arange(n_dofs, dtype=np.int64), self._dofs)

        patch_unit = self._unit_patch_matrices()
        kff = [a[self._free][:, self._free].tocsr() for a in patch_unit]
        # Structural union of the patch patterns. Built from ones so slots
        # where stiffness contributions cancel exactly are still kept.
        coo = [a.tocoo() for a in kff]
        n_free = self._free.size
        template = sp.coo_matrix(
            (
                np.ones(sum(c.nnz for c in coo)),
                (
                    np.concatenate([c.row for c in coo]),
                    np.concatenate([c.col for c in coo]),
                ),
            ),
            shape=(n_free, n_free),
        ).tocsr()
        template.sum_duplicates()
        template.sort_indices()
        template.data = np.zeros_like(template.data)
        weights = np.zeros((template.nnz, patch_map.patch_count))
        for k, a in enumerate(kff):
            weights[:, k] = _align_to_pattern(template, a)
        self._template = template
        self._weights = weights
        # rhs = -(sum_k E_k A_k)[free, prescribed] @ values = -B @ E
        self._rhs_per_patch = np.column_stack(
            [a[self._free][:, self._dofs] @ self._dof_values for a in patch_unit]
        )
        self._init_strain_sampling(surface)

    def _unit_patch_matrices(self) -> list[sp.csr_matrix]:
        mesh, pmap = self.mesh, self.patch_map
        edofs = _element_dofs(mesh)
        ndof_el = edofs.shape[1]
        n_dofs = self._n_dofs
        per_patch: list[list] = [[] for _ in range(pmap.patch_count)]
        for e in range(mesh.n_elements):
            ke = element_stiffness(
                mesh.element_coords(e), 1.0, self.poisson_ratio, mesh.thickness, element_id=e
            )
            per_patch[pmap.patch_of_element[e]].append((edofs[e], ke))
        out = []
        for contributions in per_patch:
            rows, cols, vals = [], [], []
            for ed, ke in contributions:
                rows.append(np.repeat(ed, ndof_el))
                cols.append(np.tile(ed, ndof_el))
                vals.append(ke.ravel())
            a = sp.coo_matrix(
                (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                shape=(n_dofs, n_dofs),
            ).tocsr()
            a.sum_duplicates()
            out.append(a)
        return out

    def _init_strain_sampling(self, surface: str | None) -> None:
        mesh = self.mesh
        element_ids, parent_points = _surface_sampling(mesh, surface)
        edofs = _element_dofs(mesh)
        rows = (0, 1, 2) if mesh.dimension == 2 else (0, 1, 3)
        n_gp = parent_points.shape[0]
        b_all = np.empty((element_ids.size, n_gp, 3, edofs.shape[1]))
        pts = np.empty((element_ids.size, n_gp, 2))
        for i, e in enumerate(element_ids):
            coords = mesh.element_coords(e)
            for g, gp in enumerate(parent_points):
                b, _ = _strain_displacement(coords, gp)
                b_all[i, g] = b[list(rows)]
                pts[i, g] = (_shape.shape_values(gp) @ coords)[:2]
        self._surface_edofs = edofs[element_ids]
        self._surface_b = b_all
        self._surface_points = pts.reshape(-1, 2)

    @property
    def surface_points(self) -> np.ndarray:
        """Physical (x, y) coordinates of the strain sample points."""
        return self._surface_points

    def _check_values(self, values: np.ndarray) -> np.ndarray:
        values = np.asarray(values, dtype=float)
        if values.shape != (self.patch_map.patch_count,):
            raise ValueError(
                f"expected {self.patch_map.patch_count} moduli, got shape {values.shape}"
            )
        if not np.all(values > 0):
            raise ValueError("all patch moduli must be positive")
        return values

    def solve_displacement(self, values: np.ndarray) -> np.ndarray:
        """Flat displacement vector for the given patch moduli."""
        values = self._check_values(values)
        k = self._template.copy()
        k.data = self._weights @ values
        rhs = -(self._rhs_per_patch @ values)
        try:
            lu = splu(k.tocsc())
        except RuntimeError as exc:
            raise SingularSystemError(f"stiffness factorization failed: {exc}") from exc
        uf = lu.solve(rhs)
        if not np.all(np.isfinite(uf)):
            raise SingularSystemError("solution is non-finite")
        rhs_norm = np.linalg.norm(rhs)
        if rhs_norm > 0:
            rel = np.linalg.norm(k @ uf - rhs) / rhs_norm
            if rel > _EQUILIBRIUM_RTOL:
                raise NumericalError(f"equilibrium residual {rel:.3e} exceeds {_EQUILIBRIUM_RTOL:.1e}")
        u = np.zeros(self._n_dofs)
        u[self._dofs] = self._dof_values
        u[self._free] = uf
        return u

    def surface_strain_arrays(self, values: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(exx, eyy, gamma_xy) at the surface sample points; one fresh solve."""
        u = self.solve_displacement(values)
        ue = u[self._surface_edofs]
        eps = np.einsum("egij,ej->egi", self._surface_b, ue)
        flat = eps.reshape(-1, 3)
        return flat[:, 0], flat[:, 1], flat[:, 2]

    def strain_field(self, values: np.ndarray) -> StrainField:
        exx, eyy, exy = self.surface_strain_arrays(values)
        return StrainField(self._surface_points, exx, eyy, exy)

    def displacement_field(self, values: np.ndarray) -> DisplacementField:
        u = self.solve_displacement(values)
        return DisplacementField(u.reshape(self.mesh.n_nodes, self.mesh.dimension))
