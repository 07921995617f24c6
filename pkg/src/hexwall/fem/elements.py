"""Element kernels: 8-node hexahedron with mean-dilatation B-bar, 4-node tetrahedron.

All kernels work on batches of elements.  Strain and stress use Voigt order
xx, yy, zz, yz, xz, xy with engineering shear strains.
"""

import numpy as np

from ..errors import AssemblyError
from ..topology import HEX_NATURAL

GAUSS = 1.0 / np.sqrt(3.0)
# 2x2x2 Gauss points listed in corner order, weight 1 each
HEX_GP = HEX_NATURAL * GAUSS


def hex8_shape(xi):
    """Shape functions (n_pts, 8) at natural points (n_pts, 3)."""
    xi = np.atleast_2d(xi)
    s = HEX_NATURAL
    return 0.125 * np.prod(1.0 + xi[:, None, :] * s[None, :, :], axis=2)


def hex8_shape_derivs(xi):
    """dN/dxi (n_pts, 8, 3) at natural points (n_pts, 3)."""
    xi = np.atleast_2d(xi)
    s = HEX_NATURAL
    f = 1.0 + xi[:, None, :] * s[None, :, :]  # (p, 8, 3)
    out = np.empty(f.shape)
    out[..., 0] = 0.125 * s[:, 0] * f[..., 1] * f[..., 2]
    out[..., 1] = 0.125 * s[:, 1] * f[..., 0] * f[..., 2]
    out[..., 2] = 0.125 * s[:, 2] * f[..., 0] * f[..., 1]
    return out


HEX_DN = hex8_shape_derivs(HEX_GP)
# maps Gauss-point values to corner values
HEX_EXTRAPOLATION = np.linalg.inv(hex8_shape(HEX_GP))
TET_DN = np.array([[-1.0, -1.0, -1.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]])


def _gradients(X, dn, first_element=0):
    """Physical shape gradients and Jacobian determinants.

    ``X`` (b, n, 3) element coordinates, ``dn`` (g, n, 3) natural derivatives.
    """
    J = np.einsum("gaj,bai->bgji", dn, X)
    det = np.linalg.det(J)
    bad = np.nonzero((det <= 0).any(axis=1))[0]
    if len(bad):
        e = first_element + int(bad[0])
        raise AssemblyError(
            f"element {e} has a non-positive Jacobian at an integration point "
            f"({len(bad)} such elements in this batch)",
            element=e,
        )
    invJ = np.linalg.inv(J)
    dndx = np.einsum("bgij,gaj->bgai", invJ, dn)
    return dndx, det


def strain_operator(dndx, mean_grad=None):
    """B matrices (b, g, 6, 3n); with ``mean_grad`` the volumetric part is
    replaced by its element average (B-bar)."""
    b, g, n, _ = dndx.shape
    B = np.zeros((b, g, 6, 3 * n))
    dx, dy, dz = dndx[..., 0], dndx[..., 1], dndx[..., 2]
    B[:, :, 0, 0::3] = dx
    B[:, :, 1, 1::3] = dy
    B[:, :, 2, 2::3] = dz
    B[:, :, 3, 1::3] = dz
    B[:, :, 3, 2::3] = dy
    B[:, :, 4, 0::3] = dz
    B[:, :, 4, 2::3] = dx
    B[:, :, 5, 0::3] = dy
    B[:, :, 5, 1::3] = dx
    if mean_grad is not None:
        corr = (mean_grad[:, None] - dndx).reshape(b, g, 1, 3 * n) / 3.0
        B[:, :, :3, :] += corr
    return B


def hex8_operators(X, bbar=True, first_element=0):
    """Strain operators and integration weights (det J) for hexahedra."""
    dndx, det = _gradients(X, HEX_DN, first_element)
    mean = None
    if bbar:
        vol = det.sum(axis=1)
        mean = np.einsum("bgai,bg->bai", dndx, det) / vol[:, None, None]
    return strain_operator(dndx, mean), det


def tet4_operators(X, first_element=0):
    dndx, det = _gradients(X, TET_DN[None], first_element)
    return strain_operator(dndx), det / 6.0


def stiffness(B, w, D):
    """Element stiffness matrices sum_g B^T D B w, shape (b, 3n, 3n)."""
    b, g, _, m = B.shape
    DB = np.einsum("kl,bglm->bgkm", D, B) * w[:, :, None, None]
    Bt = B.transpose(0, 3, 1, 2).reshape(b, m, g * 6)
    return np.matmul(Bt, DB.reshape(b, g * 6, m))


def hex8_stiffness(X, D, bbar=True, first_element=0):
    B, w = hex8_operators(X, bbar, first_element)
    return stiffness(B, w, D)


def tet4_stiffness(X, D, first_element=0):
    B, w = tet4_operators(X, first_element)
    return stiffness(B, w, D)
