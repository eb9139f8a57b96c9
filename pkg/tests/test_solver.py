"""Element stiffness, assembly, static solves and strain extraction."""

import numpy as np
import pytest
from numpy.linalg import eigvalsh
from numpy.testing import assert_allclose

import femupdate as fu
from femupdate.errors import DegenerateElementError, NumericalError
from femupdate.solver import solve_constrained

E_STEEL = 200000.0
NU = 0.3

UNIT_QUAD = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
UNIT_HEX = np.array(
    [
        [0, 0, 0], [1, 0, 0], [1, 1, 0], [0, 1, 0],
        [0, 0, 1], [1, 0, 1], [1, 1, 1], [0, 1, 1],
    ],
    dtype=float,
)


def quad4_k00_exact_oracle() -> float:
    """Symbolic exact integration of the unit-square QUAD4 K[0][0].

    Independent of the solver: builds the integrand from scratch in sympy
    and integrates it exactly over the parent domain (E=1, nu=0, t=1).
    """
    import sympy as sp

    xi, eta = sp.symbols("xi eta")
    signs = [(-1, -1), (1, -1), (1, 1), (-1, 1)]
    n = [sp.Rational(1, 4) * (1 + s[0] * xi) * (1 + s[1] * eta) for s in signs]
    dndx = [sp.diff(f, xi) * 2 for f in n]  # unit square: dxi/dx = 2
    dndy = [sp.diff(f, eta) * 2 for f in n]
    d = sp.Matrix([[1, 0, 0], [0, 1, 0], [0, 0, sp.Rational(1, 2)]])
    b = sp.zeros(3, 8)
    for i in range(4):
        b[0, 2 * i] = dndx[i]
        b[1, 2 * i + 1] = dndy[i]
        b[2, 2 * i] = dndy[i]
        b[2, 2 * i + 1] = dndx[i]
    integrand = (b.T * d * b)[0, 0] * sp.Rational(1, 4)  # times det J
    k00 = sp.integrate(sp.integrate(integrand, (xi, -1, 1)), (eta, -1, 1))
    return float(k00)


class TestElementStiffness:
    def test_quad4_shape_and_symmetry(self):
        k = fu.element_stiffness(UNIT_QUAD, E_STEEL, NU, thickness=1.0)
        assert k.shape == (8, 8)
        assert np.abs(k - k.T).max() < 1e-12 * np.abs(k).max()

    def test_hex8_shape(self):
        k = fu.element_stiffness(UNIT_HEX, E_STEEL, NU)
        assert k.shape == (24, 24)

    @pytest.mark.parametrize("direction", [0, 1])
    def test_quad4_rigid_translation(self, direction):
        k = fu.element_stiffness(UNIT_QUAD, E_STEEL, NU, thickness=1.0)
        u = np.zeros(8)
        u[direction::2] = 1.0
        assert np.abs(k @ u).max() < 1e-12 * np.abs(k).max()

    def test_quad4_rigid_rotation(self):
        k = fu.element_stiffness(UNIT_QUAD, E_STEEL, NU, thickness=1.0)
        u = np.column_stack([-UNIT_QUAD[:, 1], UNIT_QUAD[:, 0]]).ravel()
        assert np.abs(k @ u).max() < 1e-12 * np.abs(k).max()

    def test_quad4_zero_energy_mode_count(self):
        k = fu.element_stiffness(UNIT_QUAD, E_STEEL, NU, thickness=1.0)
        lam = eigvalsh(k)
        assert np.sum(np.abs(lam) < 1e-9 * np.abs(lam).max()) == 3
        assert np.all(lam > -1e-9 * np.abs(lam).max())  # positive semidefinite

    def test_hex8_zero_energy_mode_count(self):
        k = fu.element_stiffness(UNIT_HEX, E_STEEL, NU)
        lam = eigvalsh(k)
        assert np.sum(np.abs(lam) < 1e-9 * np.abs(lam).max()) == 6
        assert np.all(lam > -1e-9 * np.abs(lam).max())

    def test_linearity_in_modulus(self):
        k1 = fu.element_stiffness(UNIT_QUAD, 1.0, NU, thickness=2.0)
        k2 = fu.element_stiffness(UNIT_QUAD, 2.0, NU, thickness=2.0)
        assert_allclose(k2, 2.0 * k1, rtol=1e-15)

    def test_k00_matches_exact_integration_oracle(self):
        oracle = quad4_k00_exact_oracle()
        k = fu.element_stiffness(UNIT_QUAD, 1.0, 0.0, thickness=1.0)
        assert k[0, 0] == pytest.approx(oracle, rel=1e-12)
        assert oracle == pytest.approx(0.5, rel=1e-15)  # frozen value

    def test_degenerate_element_raises_with_id(self):
        inverted = UNIT_QUAD[::-1]  # clockwise ordering flips the Jacobian sign
        with pytest.raises(DegenerateElementError, match="element 7"):
            fu.element_stiffness(inverted, E_STEEL, NU, thickness=1.0, element_id=7)

    def test_quad4_requires_thickness(self):
        with pytest.raises(ValueError, match="thickness"):
            fu.element_stiffness(UNIT_QUAD, E_STEEL, NU)

    def test_bad_shape_rejected(self):
        with pytest.raises(ValueError):
            fu.element_stiffness(np.zeros((5, 2)), E_STEEL, NU, thickness=1.0)


class TestAssemble:
    def test_single_element_equals_element_matrix(self):
        mesh = fu.build_coupon_mesh(2.0, 1.0, 0.5, 1, 1)
        pmap = fu.partition_longitudinal(mesh, 1)
        material = fu.MaterialField(
            fu.DesignVector(np.array([E_STEEL]), np.array([1.0]), np.array([1e6])), NU
        )
        k = fu.assemble(mesh, pmap, material).toarray()
        ke = fu.element_stiffness(mesh.element_coords(0), E_STEEL, NU, mesh.thickness)
        # map local element dofs onto global dofs through the connectivity
        gdofs = np.concatenate([(2 * n, 2 * n + 1) for n in mesh.elements[0]])
        assert_allclose(k[np.ix_(gdofs, gdofs)], ke, rtol=0, atol=1e-12 * np.abs(ke).max())

    def test_assembled_symmetry_random_moduli(self, coupon_mesh):
        pmap = fu.partition_longitudinal(coupon_mesh, 9)
        rng = np.random.default_rng(3)
        values = rng.uniform(0.5, 3.0, 9) * E_STEEL
        material = fu.MaterialField(fu.DesignVector(values, values * 0.01, values * 10), NU)
        k = fu.assemble(coupon_mesh, pmap, material)
        asym = np.abs(k - k.T).max()
        assert asym < 1e-10 * np.abs(k).max()

    def test_doubling_all_moduli_doubles_matrix(self, coupon_mesh, single_patch):
        v1 = np.array([E_STEEL])
        m1 = fu.MaterialField(fu.DesignVector(v1, v1 * 0.01, v1 * 10), NU)
        m2 = fu.MaterialField(fu.DesignVector(2 * v1, v1 * 0.01, v1 * 10), NU)
        k1 = fu.assemble(coupon_mesh, single_patch, m1)
        k2 = fu.assemble(coupon_mesh, single_patch, m2)
        assert np.abs(k2 - 2 * k1).max() < 1e-12 * np.abs(k1).max()

    def test_patch_count_mismatch(self, coupon_mesh, single_patch, material_factory):
        with pytest.raises(ValueError, match="patch_count"):
            fu.assemble(coupon_mesh, single_patch, material_factory(3))


class TestBoundaryConditions:
    def test_prescribed_values_exact(self, coupon_mesh, single_patch, material_factory, uniaxial_bcs):
        u = fu.solve_static(coupon_mesh, single_patch, material_factory(1), uniaxial_bcs)
        loaded = coupon_mesh.face_nodes("xmax")
        fixed = coupon_mesh.face_nodes("xmin")
        assert np.all(u.values[loaded, 0] == 0.1)
        assert np.all(u.values[fixed, 0] == 0.0)

    def test_faces_must_be_disjoint(self, coupon_mesh):
        bcs = fu.BoundaryConditions("xmin", "ymax", 0.1)  # share the corner node
        with pytest.raises(ValueError, match="share"):
            bcs.prescribed_dofs(coupon_mesh)

    def test_clamped_mode_pins_all_components(self, coupon_mesh):
        bcs = fu.BoundaryConditions("xmin", "xmax", 0.1, clamp_fixed=True)
        dofs, values = bcs.prescribed_dofs(coupon_mesh)
        fixed = coupon_mesh.face_nodes("xmin")
        for n in fixed:
            assert 2 * n in dofs and 2 * n + 1 in dofs

    def test_non_finite_u_applied(self, coupon_mesh):
        bcs = fu.BoundaryConditions("xmin", "xmax", np.nan)
        with pytest.raises(ValueError, match="finite"):
            bcs.prescribed_dofs(coupon_mesh)


class TestSolveStatic:
    def test_uniform_bar_analytic(self, coupon_mesh, single_patch, material_factory, uniaxial_bcs):
        u = fu.solve_static(coupon_mesh, single_patch, material_factory(1), uniaxial_bcs)
        expected = 0.001 * coupon_mesh.nodes[:, 0]
        assert np.abs(u.values[:, 0] - expected).max() < 1e-8 * 0.1

    def test_zero_applied_displacement(self, coupon_mesh, single_patch, material_factory):
        bcs = fu.BoundaryConditions("xmin", "xmax", 0.0)
        u = fu.solve_static(coupon_mesh, single_patch, material_factory(1), bcs)
        assert np.abs(u.values).max() == 0.0

    def test_mesh_consistency_for_linear_field(self, material_factory, uniaxial_bcs):
        coarse = fu.build_coupon_mesh(100, 20, 2, 20, 5)
        fine = fu.build_coupon_mesh(100, 20, 2, 40, 10)
        uc = fu.solve_static(coarse, fu.partition_longitudinal(coarse, 1), material_factory(1), uniaxial_bcs)
        uf = fu.solve_static(fine, fu.partition_longitudinal(fine, 1), material_factory(1), uniaxial_bcs)
        # every coarse node coincides with a fine node
        fine_lookup = {tuple(np.round(p, 9)): i for i, p in enumerate(fine.nodes)}
        for i, p in enumerate(coarse.nodes):
            j = fine_lookup[tuple(np.round(p, 9))]
            assert np.abs(uc.values[i] - uf.values[j]).max() < 1e-8 * 0.1

    def test_insufficient_constraints_fail(self):
        mesh = fu.build_coupon_mesh(1, 1, 1, 1, 1)
        pmap = fu.partition_longitudinal(mesh, 1)
        values = np.array([E_STEEL])
        material = fu.MaterialField(fu.DesignVector(values, values * 0.01, values * 10), NU)
        k = fu.assemble(mesh, pmap, material)
        # only one x-dof prescribed: y-translation and rotation stay free
        with pytest.raises(NumericalError):
            solve_constrained(k, np.array([0]), np.array([0.1]))


class TestSurfaceStrains:
    def test_uniform_bar_strains(self, coupon_mesh, single_patch, material_factory, uniaxial_bcs):
        u = fu.solve_static(coupon_mesh, single_patch, material_factory(1), uniaxial_bcs)
        field = fu.surface_strains(coupon_mesh, u)
        assert_allclose(field.exx, 1e-3, rtol=1e-8)
        assert_allclose(field.eyy, -NU * 1e-3, rtol=1e-8)
        assert np.abs(field.exy).max() < 1e-8 * 1e-3

    def test_rigid_rotation_produces_no_strain(self, coupon_mesh):
        angle = 1e-6
        disp = angle * np.column_stack([-coupon_mesh.nodes[:, 1], coupon_mesh.nodes[:, 0]])
        field = fu.surface_strains(coupon_mesh, fu.DisplacementField(disp))
        bound = 1e-12 + angle**2
        for comp in (field.exx, field.eyy, field.exy):
            assert np.abs(comp).max() < bound

    def test_invalid_selector(self, coupon_mesh, single_patch, material_factory, uniaxial_bcs):
        u = fu.solve_static(coupon_mesh, single_patch, material_factory(1), uniaxial_bcs)
        with pytest.raises(ValueError, match="midplane"):
            fu.surface_strains(coupon_mesh, u, surface="front")

    def test_3d_buried_patch_perturbs_front_face(self):
        mesh = fu.build_coupon_mesh(100, 20, 8, 15, 4, 4)
        pmap = fu.partition_longitudinal(mesh, 2)
        pmap = fu.stamp_defect_patches(pmap, mesh, [fu.DefectSpec((40, 5, 0), (60, 15, 4))])
        bcs = fu.BoundaryConditions("xmin", "xmax", 0.1)
        model = fu.ForwardModel(mesh, pmap, NU, bcs)
        homog = model.strain_field(np.array([E_STEEL, E_STEEL, E_STEEL]))
        soft = model.strain_field(np.array([E_STEEL, E_STEEL, 0.25 * E_STEEL]))
        rel = np.abs(soft.exx - homog.exx) / np.abs(homog.exx)
        assert rel.max() > 0.05

    def test_3d_front_face_points_on_top_layer(self):
        mesh = fu.build_coupon_mesh(100, 20, 8, 6, 3, 2)
        pmap = fu.partition_longitudinal(mesh, 1)
        values = np.array([E_STEEL])
        material = fu.MaterialField(fu.DesignVector(values, values * 0.01, values * 10), NU)
        u = fu.solve_static(mesh, pmap, material, fu.BoundaryConditions("xmin", "xmax", 0.1))
        field = fu.surface_strains(mesh, u, surface="front")
        assert field.n_points == 6 * 3 * 4  # top-layer elements, 2x2 face points each
        assert_allclose(field.exx, 1e-3, rtol=1e-8)


class TestSolverInvariants:
    def test_patch_test_affine_boundary(self):
        """Affine displacement on the full boundary reproduces constant strain."""
        mesh = fu.build_coupon_mesh(30, 10, 1.0, 6, 4)
        pmap = fu.partition_longitudinal(mesh, 1)
        values = np.array([E_STEEL])
        material = fu.MaterialField(fu.DesignVector(values, values * 0.01, values * 10), NU)
        k = fu.assemble(mesh, pmap, material)
        a = np.array([[2e-3, 5e-4], [3e-4, -1e-3]])
        boundary = np.unique(
            np.concatenate([mesh.face_nodes(f) for f in ("xmin", "xmax", "ymin", "ymax")])
        )
        dofs = np.concatenate([[2 * n, 2 * n + 1] for n in boundary])
        u_affine = mesh.nodes @ a.T
        prescribed = u_affine[boundary].ravel()
        u = solve_constrained(k, dofs, prescribed)
        field = fu.surface_strains(mesh, fu.DisplacementField(u.reshape(-1, 2)))
        assert_allclose(field.exx, a[0, 0], rtol=1e-10)
        assert_allclose(field.eyy, a[1, 1], rtol=1e-10)
        assert_allclose(field.exy, a[0, 1] + a[1, 0], rtol=1e-10)

    def test_work_positivity(self):
        mesh = fu.build_coupon_mesh(10, 5, 1, 4, 2)
        pmap = fu.partition_longitudinal(mesh, 1)
        values = np.array([E_STEEL])
        material = fu.MaterialField(fu.DesignVector(values, values * 0.01, values * 10), NU)
        k = fu.assemble(mesh, pmap, material).toarray()
        rigid = np.zeros((3, 2 * mesh.n_nodes))
        rigid[0, 0::2] = 1.0
        rigid[1, 1::2] = 1.0
        rigid[2, 0::2] = -mesh.nodes[:, 1]
        rigid[2, 1::2] = mesh.nodes[:, 0]
        rng = np.random.default_rng(11)
        for _ in range(10):
            u = rng.normal(size=2 * mesh.n_nodes)
            for r in rigid:  # project out the rigid modes
                u -= (u @ r) / (r @ r) * r
            assert u @ (k @ u) > 0

    def test_reaction_balance(self, coupon_mesh, uniaxial_bcs):
        pmap = fu.partition_longitudinal(coupon_mesh, 9)
        pmap = fu.stamp_defect_patches(
            pmap, coupon_mesh, [fu.DefectSpec((20, 6), (32, 14)), fu.DefectSpec((60, 4), (72, 12))]
        )
        rng = np.random.default_rng(5)
        values = rng.uniform(0.3, 2.0, 11) * E_STEEL
        material = fu.MaterialField(fu.DesignVector(values, values * 0.01, values * 10), NU)
        k = fu.assemble(coupon_mesh, pmap, material)
        u = fu.solve_static(coupon_mesh, pmap, material, uniaxial_bcs)
        reactions = k @ u.flat()
        fixed = coupon_mesh.face_nodes("xmin")
        loaded = coupon_mesh.face_nodes("xmax")
        r_fixed = reactions[2 * fixed].sum()
        r_loaded = reactions[2 * loaded].sum()
        assert abs(r_fixed + r_loaded) < 1e-8 * abs(r_loaded)

    def test_modulus_scaling_leaves_displacement_unchanged(self, coupon_mesh, uniaxial_bcs):
        pmap = fu.partition_longitudinal(coupon_mesh, 9)
        rng = np.random.default_rng(8)
        values = rng.uniform(0.3, 2.0, 9) * E_STEEL

        def solve(v):
            material = fu.MaterialField(fu.DesignVector(v, v * 1e-3, v * 1e3), NU)
            return fu.solve_static(coupon_mesh, pmap, material, uniaxial_bcs).values

        u1 = solve(values)
        u2 = solve(2.0 * values)
        assert np.abs(u1 - u2).max() <= 1e-10 * np.abs(u1).max()

    def test_forward_model_matches_general_path(self, coupon_mesh, uniaxial_bcs):
        pmap = fu.partition_longitudinal(coupon_mesh, 9)
        pmap = fu.stamp_defect_patches(
            pmap, coupon_mesh, [fu.DefectSpec((20, 6), (32, 14)), fu.DefectSpec((60, 4), (72, 12))]
        )
        rng = np.random.default_rng(21)
        values = rng.uniform(0.3, 2.0, 11) * E_STEEL
        material = fu.MaterialField(fu.DesignVector(values, values * 1e-3, values * 1e3), NU)
        u_general = fu.solve_static(coupon_mesh, pmap, material, uniaxial_bcs)
        model = fu.ForwardModel(coupon_mesh, pmap, NU, uniaxial_bcs)
        u_fast = model.displacement_field(values)
        assert np.abs(u_general.values - u_fast.values).max() < 1e-12 * np.abs(u_general.values).max()
        field_general = fu.surface_strains(coupon_mesh, u_general)
        field_fast = model.strain_field(values)
        assert_allclose(field_fast.points, field_general.points, rtol=0, atol=1e-12)
        assert_allclose(field_fast.exx, field_general.exx, rtol=0, atol=1e-12 * np.abs(field_general.exx).max())
