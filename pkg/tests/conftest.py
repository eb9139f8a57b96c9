import numpy as np
import pytest

import femupdate as fu


@pytest.fixture(scope="session")
def coupon_mesh():
    """The 40x10 plane-stress coupon used across solver tests."""
    return fu.build_coupon_mesh(100.0, 20.0, 2.0, 40, 10)


@pytest.fixture(scope="session")
def uniaxial_bcs():
    return fu.BoundaryConditions("xmin", "xmax", 0.1)


@pytest.fixture
def single_patch(coupon_mesh):
    return fu.partition_longitudinal(coupon_mesh, 1)


def homogeneous_material(patch_count: int, modulus: float = 200000.0, nu: float = 0.3):
    values = np.full(patch_count, modulus)
    design = fu.DesignVector(values, 0.01 * values, 3.0 * values)
    return fu.MaterialField(design, nu)


@pytest.fixture
def material_factory():
    return homogeneous_material
