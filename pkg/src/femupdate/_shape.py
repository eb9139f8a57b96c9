"""Isoparametric shape functions and Gauss rules for QUAD4 and HEX8.

Parent domain is [-1, 1]^d. Node ordering matches the mesh convention:
counterclockwise for QUAD4, bottom face counterclockwise then top face for
HEX8. All routines return plain float64 arrays.
"""

import numpy as np

_G = 1.0 / np.sqrt(3.0)

# Corner sign patterns, one row per node.
QUAD4_SIGNS = np.array([(-1, -1), (1, -1), (1, 1), (-1, 1)], dtype=float)
HEX8_SIGNS = np.array(
    [
        (-1, -1, -1),
        (1, -1, -1),
        (1, 1, -1),
        (-1, 1, -1),
        (-1, -1, 1),
        (1, -1, 1),
        (1, 1, 1),
        (-1, 1, 1),
    ],
    dtype=float,
)


def gauss_points_2d() -> np.ndarray:
    """Full 2x2 Gauss rule, xi fastest; weights are all 1."""
    pts = [(x, y) for y in (-_G, _G) for x in (-_G, _G)]
    return np.array(pts)


def gauss_points_3d() -> np.ndarray:
    """Full 2x2x2 Gauss rule, xi fastest, then eta, then zeta."""
    pts = [(x, y, z) for z in (-_G, _G) for y in (-_G, _G) for x in (-_G, _G)]
    return np.array(pts)


def shape_values(point: np.ndarray) -> np.ndarray:
    """Shape function values N_i at a parent point (length 4 or 8)."""
    point = np.asarray(point, dtype=float)
    if point.shape == (2,):
        signs = QUAD4_SIGNS
        return 0.25 * (1 + signs[:, 0] * point[0]) * (1 + signs[:, 1] * point[1])
    if point.shape == (3,):
        signs = HEX8_SIGNS
        return (
            0.125
            * (1 + signs[:, 0] * point[0])
            * (1 + signs[:, 1] * point[1])
            * (1 + signs[:, 2] * point[2])
        )
    raise ValueError(f"parent point must be 2D or 3D, got shape {point.shape}")


def shape_gradients(point: np.ndarray) -> np.ndarray:
    """Parent-space gradients dN_i/dxi_a, shape (n_nodes, dim)."""
    point = np.asarray(point, dtype=float)
    if point.shape == (2,):
        s = QUAD4_SIGNS
        xi, eta = point
        out = np.empty((4, 2))
        out[:, 0] = 0.25 * s[:, 0] * (1 + s[:, 1] * eta)
        out[:, 1] = 0.25 * s[:, 1] * (1 + s[:, 0] * xi)
        return out
    if point.shape == (3,):
        s = HEX8_SIGNS
        xi, eta, zeta = point
        out = np.empty((8, 3))
        out[:, 0] = 0.125 * s[:, 0] * (1 + s[:, 1] * eta) * (1 + s[:, 2] * zeta)
        out[:, 1] = 0.125 * s[:, 1] * (1 + s[:, 0] * xi) * (1 + s[:, 2] * zeta)
        out[:, 2] = 0.125 * s[:, 2] * (1 + s[:, 0] * xi) * (1 + s[:, 1] * eta)
        return out
    raise ValueError(f"parent point must be 2D or 3D, got shape {point.shape}")


def jacobian(coords: np.ndarray, parent_grads: np.ndarray) -> np.ndarray:
    """Jacobian J[a, b] = dx_a/dxi_b for element node coords (n_nodes, dim)."""
    return coords.T @ parent_grads
