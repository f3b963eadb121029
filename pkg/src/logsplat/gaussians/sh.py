"""Real spherical harmonics up to degree 3 for view-dependent splat color.

Basis ordering and constants follow the common splatting convention:
band l occupies indices l^2 .. l^2 + 2l, colors are stored per coefficient,
and the decoded color is max(0, 0.5 + sum(c_i * Y_i(d))).
"""

from __future__ import annotations

import numpy as np

MAX_SH_DEGREE = 3

_C0 = 0.28209479177387814
_C1 = 0.4886025119029199
_C2 = (
    1.0925484305920792,
    -1.0925484305920792,
    0.31539156525252005,
    -1.0925484305920792,
    0.5462742152960396,
)
_C3 = (
    -0.5900435899266435,
    2.890611442640554,
    -0.4570457994644658,
    0.3731763325901154,
    -0.4570457994644658,
    1.445305721320277,
    -0.5900435899266435,
)

DC_BASIS = _C0


def n_sh_coeffs(degree: int) -> int:
    if not (0 <= degree <= MAX_SH_DEGREE):
        raise ValueError(f"sh degree must be in [0, {MAX_SH_DEGREE}], got {degree}")
    return (degree + 1) ** 2


def sh_basis(degree: int, dirs: np.ndarray) -> np.ndarray:
    """Basis values (..., (degree+1)^2) at unit directions (..., 3)."""
    n = n_sh_coeffs(degree)
    dirs = np.asarray(dirs, dtype=np.float64)
    out = np.empty(dirs.shape[:-1] + (n,), dtype=np.float64)
    out[..., 0] = _C0
    if degree >= 1:
        x, y, z = dirs[..., 0], dirs[..., 1], dirs[..., 2]
        out[..., 1] = -_C1 * y
        out[..., 2] = _C1 * z
        out[..., 3] = -_C1 * x
    if degree >= 2:
        xx, yy, zz = x * x, y * y, z * z
        xy, yz, xz = x * y, y * z, x * z
        out[..., 4] = _C2[0] * xy
        out[..., 5] = _C2[1] * yz
        out[..., 6] = _C2[2] * (2.0 * zz - xx - yy)
        out[..., 7] = _C2[3] * xz
        out[..., 8] = _C2[4] * (xx - yy)
    if degree >= 3:
        out[..., 9] = _C3[0] * y * (3.0 * xx - yy)
        out[..., 10] = _C3[1] * xy * z
        out[..., 11] = _C3[2] * y * (4.0 * zz - xx - yy)
        out[..., 12] = _C3[3] * z * (2.0 * zz - 3.0 * xx - 3.0 * yy)
        out[..., 13] = _C3[4] * x * (4.0 * zz - xx - yy)
        out[..., 14] = _C3[5] * z * (xx - yy)
        out[..., 15] = _C3[6] * x * (xx - 3.0 * yy)
    return out


def eval_sh(degree: int, coeffs: np.ndarray, dirs: np.ndarray) -> np.ndarray:
    """Decode colors (..., 3) from coefficients (..., (degree+1)^2, 3).

    Output is offset by +0.5 and clamped at 0; it is not clamped above 1
    (compositing handles that).
    """
    coeffs = np.asarray(coeffs, dtype=np.float64)
    n = n_sh_coeffs(degree)
    if coeffs.shape[-2] != n:
        raise ValueError(f"expected {n} sh coefficients for degree {degree}, got {coeffs.shape[-2]}")
    basis = sh_basis(degree, dirs)
    return np.maximum(np.einsum("...c,...cr->...r", basis, coeffs) + 0.5, 0.0)


def rgb_to_dc(rgb: np.ndarray) -> np.ndarray:
    """DC coefficient whose degree-0 decode reproduces rgb exactly."""
    return (np.asarray(rgb, dtype=np.float64) - 0.5) / _C0


def dc_to_rgb(dc: np.ndarray) -> np.ndarray:
    return np.asarray(dc, dtype=np.float64) * _C0 + 0.5
