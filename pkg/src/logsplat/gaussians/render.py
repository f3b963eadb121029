"""CPU splat renderer: EWA projection, front-to-back alpha compositing.

Determinism contract: gaussians are composited in a canonical order derived
only from their attributes (depth first, then every remaining attribute as
a tie-break), so any permutation of the input renders bit-identically.
Accumulation is float64 throughout; the result is cast to float32 once.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..cameras import PinholeCamera
from ..rotations import quat_to_matrix
from .asset import GaussianAsset
from .sh import eval_sh

Z_NEAR = 0.01
ALPHA_MIN = 1.0 / 255.0
ALPHA_MAX = 0.99
T_STOP = 1e-4
CUTOFF_MAHALANOBIS_SQ = 9.0  # 3 sigma


@dataclass
class RenderResult:
    image: np.ndarray  # (H, W, 3) float32
    alpha: np.ndarray  # (H, W) float32, 1 - final transmittance


def _canonical_order(z: np.ndarray, flat_attrs: np.ndarray) -> np.ndarray:
    """Depth-primary total order; remaining attribute columns break ties.

    Gaussians that tie on every key are identical in geometry, opacity, and
    color, so their relative order cannot affect the composite.
    """
    keys = [flat_attrs[:, i] for i in range(flat_attrs.shape[1] - 1, -1, -1)]
    keys.append(z)  # last key is primary for np.lexsort
    return np.lexsort(keys)


def render(
    asset: GaussianAsset,
    camera: PinholeCamera,
    background=(0.0, 0.0, 0.0),
) -> RenderResult:
    if not isinstance(camera, PinholeCamera):
        raise TypeError("render targets must be pinhole cameras")
    h, w = camera.height, camera.width
    bg = np.broadcast_to(np.asarray(background, dtype=np.float64), (h, w, 3))

    pos = asset.positions.astype(np.float64)
    p_cam = camera.pose.apply(pos)
    z = p_cam[:, 2]
    front = z > Z_NEAR

    img = np.zeros((h, w, 3), dtype=np.float64)
    transmit = np.ones((h, w), dtype=np.float64)
    if np.any(front):
        idx = np.nonzero(front)[0]
        zf = z[idx]
        u = camera.fx * p_cam[idx, 0] / zf + camera.cx
        v = camera.fy * p_cam[idx, 1] / zf + camera.cy

        # EWA: cov2d = J W Sigma W^T J^T with the local affine approximation
        cov3 = asset.covariances()[idx]
        wmat = camera.pose.matrix
        m = wmat @ cov3 @ wmat.T  # (n, 3, 3) camera-frame covariance
        n = idx.size
        j = np.zeros((n, 2, 3))
        j[:, 0, 0] = camera.fx / zf
        j[:, 0, 2] = -camera.fx * p_cam[idx, 0] / zf**2
        j[:, 1, 1] = camera.fy / zf
        j[:, 1, 2] = -camera.fy * p_cam[idx, 1] / zf**2
        cov2 = j @ m @ np.transpose(j, (0, 2, 1))
        a, b, c = cov2[:, 0, 0], cov2[:, 0, 1], cov2[:, 1, 1]
        det = a * c - b * b

        lam_max = 0.5 * (a + c) + np.sqrt(np.maximum(0.25 * (a - c) ** 2 + b * b, 0.0))
        radius = 3.0 * np.sqrt(np.maximum(lam_max, 0.0))

        # color from the viewing direction expressed in each gaussian's own
        # frame; this keeps appearance attached to the object under rigid
        # motion of the whole asset
        d_world = pos[idx] - camera.center
        norms = np.linalg.norm(d_world, axis=1, keepdims=True)
        d_world = d_world / np.where(norms == 0.0, 1.0, norms)
        rg = quat_to_matrix(asset.rotations[idx].astype(np.float64))
        d_local = np.einsum("kji,kj->ki", rg, d_world)
        colors = eval_sh(asset.sh_degree, asset.sh_coeffs[idx].astype(np.float64), d_local)

        opacity = asset.opacities[idx]

        usable = np.isfinite(det) & (det > 1e-24) & np.isfinite(radius)
        x0 = np.maximum(np.floor(u - radius), 0.0)
        x1 = np.minimum(np.ceil(u + radius), w)
        y0 = np.maximum(np.floor(v - radius), 0.0)
        y1 = np.minimum(np.ceil(v + radius), h)
        usable &= (x1 > x0) & (y1 > y0)

        flat_attrs = np.concatenate(
            [
                u[:, None], v[:, None],
                asset.opacity_logits[idx, None].astype(np.float64),
                asset.log_scales[idx].astype(np.float64),
                asset.rotations[idx].astype(np.float64),
                asset.sh_coeffs[idx].reshape(n, -1).astype(np.float64),
            ],
            axis=1,
        )
        order = _canonical_order(zf, flat_attrs)
        order = order[usable[order]]

        inv_a = c / det  # inverse covariance entries
        inv_b = -b / det
        inv_c = a / det
        for g in order:
            gx0, gx1 = int(x0[g]), int(x1[g])
            gy0, gy1 = int(y0[g]), int(y1[g])
            dx = np.arange(gx0, gx1, dtype=np.float64) + 0.5 - u[g]
            dy = np.arange(gy0, gy1, dtype=np.float64) + 0.5 - v[g]
            m2 = (
                inv_a[g] * dx[None, :] ** 2
                + 2.0 * inv_b[g] * dx[None, :] * dy[:, None]
                + inv_c[g] * dy[:, None] ** 2
            )
            alpha = np.where(
                m2 <= CUTOFF_MAHALANOBIS_SQ,
                np.minimum(opacity[g] * np.exp(-0.5 * m2), ALPHA_MAX),
                0.0,
            )
            t_patch = transmit[gy0:gy1, gx0:gx1]
            active = (t_patch >= T_STOP) & (alpha >= ALPHA_MIN)
            if not active.any():
                continue
            weight = np.where(active, t_patch * alpha, 0.0)
            img[gy0:gy1, gx0:gx1] += weight[:, :, None] * colors[g]
            transmit[gy0:gy1, gx0:gx1] = np.where(active, t_patch * (1.0 - alpha), t_patch)

    img += transmit[:, :, None] * bg
    return RenderResult(image=img.astype(np.float32), alpha=(1.0 - transmit).astype(np.float32))
