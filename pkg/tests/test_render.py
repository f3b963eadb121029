import numpy as np
import pytest
from scipy.spatial.transform import Rotation
from scipy.special import expit

from logsplat.cameras import PinholeCamera
from logsplat.gaussians import GaussianAsset, render, rgb_to_dc
from logsplat.gaussians.render import ALPHA_MAX, ALPHA_MIN, CUTOFF_MAHALANOBIS_SQ, T_STOP
from logsplat.gaussians.sh import sh_basis
from logsplat.rotations import RigidTransform, quat_from_axis_angle


def front_camera(size=64, f=100.0):
    return PinholeCamera(fx=f, fy=f, cx=size / 2.0, cy=size / 2.0,
                         width=size, height=size, pose=RigidTransform.identity())


def single_gaussian(pos, log_scales, quat, logit, rgb):
    return GaussianAsset(
        positions=np.asarray(pos, dtype=np.float64)[None, :],
        log_scales=np.asarray(log_scales, dtype=np.float64)[None, :],
        rotations=np.asarray(quat, dtype=np.float64)[None, :],
        opacity_logits=np.array([logit], dtype=np.float64),
        sh_coeffs=rgb_to_dc(np.asarray(rgb))[None, None, :],
        sh_degree=0,
    )


def splat_oracle(asset, camera, background):
    """Reference compositor: per-pixel python loop, depth-sorted, no tiling.

    Independently assembles the EWA math: world covariance from scipy
    rotations, the projective Jacobian, per-pixel Mahalanobis evaluation,
    and front-to-back alpha blending with the renderer's documented
    constants (1/255 alpha floor, 0.99 cap, 3-sigma cutoff, 1e-4
    transmittance stop).
    """
    h, w = camera.height, camera.width
    wmat = camera.pose.matrix

    params = []
    for i in range(len(asset)):
        p_cam = camera.pose.apply(asset.positions[i].astype(np.float64))
        if p_cam[2] <= 0.01:
            continue
        x, y, z = p_cam
        q = asset.rotations[i].astype(np.float64)
        r = Rotation.from_quat(np.r_[q[1:], q[:1]]).as_matrix()
        s2 = np.exp(2.0 * asset.log_scales[i].astype(np.float64))
        cov3 = wmat @ (r @ np.diag(s2) @ r.T) @ wmat.T
        jac = np.array([[camera.fx / z, 0.0, -camera.fx * x / z**2],
                        [0.0, camera.fy / z, -camera.fy * y / z**2]])
        cov2 = jac @ cov3 @ jac.T
        if np.linalg.det(cov2) <= 1e-24:
            continue
        mu = np.array([camera.fx * x / z + camera.cx, camera.fy * y / z + camera.cy])
        d = asset.positions[i].astype(np.float64) - camera.center
        d /= np.linalg.norm(d)
        d_local = r.T @ d
        basis = sh_basis(asset.sh_degree, d_local)
        color = np.maximum(basis @ asset.sh_coeffs[i].astype(np.float64) + 0.5, 0.0)
        params.append((z, mu, np.linalg.inv(cov2), expit(float(asset.opacity_logits[i])), color))

    params.sort(key=lambda t: t[0])
    img = np.zeros((h, w, 3))
    for py in range(h):
        for px in range(w):
            t_acc = 1.0
            acc = np.zeros(3)
            for z, mu, icov, opacity, color in params:
                if t_acc < T_STOP:
                    break
                delta = np.array([px + 0.5, py + 0.5]) - mu
                m2 = delta @ icov @ delta
                if m2 > CUTOFF_MAHALANOBIS_SQ:
                    continue
                alpha = min(opacity * np.exp(-0.5 * m2), ALPHA_MAX)
                if alpha < ALPHA_MIN:
                    continue
                acc += t_acc * alpha * color
                t_acc *= 1.0 - alpha
            img[py, px] = acc + t_acc * np.asarray(background)
    return img


def test_single_gaussian_matches_closed_form():
    cam = front_camera()
    quat = quat_from_axis_angle(np.array([0.2, 1.0, -0.5]), 0.8)
    asset = single_gaussian([0.1, -0.05, 5.0], np.log([0.25, 0.12, 0.18]), quat, 0.4, [0.8, 0.3, 0.1])
    bg = np.array([0.0, 0.2, 0.05])
    out = render(asset, cam, background=bg)
    want = splat_oracle(asset, cam, bg)
    assert np.abs(out.image.astype(np.float64) - want).max() < 1e-6
    # alpha channel agrees with the analytic footprint
    assert out.alpha.max() > 0.5
    assert out.alpha[0, 0] == 0.0


def test_multi_gaussian_matches_reference_compositor():
    rng = np.random.default_rng(60)
    cam = front_camera(size=48)
    k = 12
    q = rng.normal(size=(k, 4))
    q /= np.linalg.norm(q, axis=1, keepdims=True)
    asset = GaussianAsset(
        positions=np.column_stack([rng.uniform(-0.6, 0.6, k), rng.uniform(-0.6, 0.6, k),
                                   rng.uniform(3.0, 8.0, k)]),
        log_scales=rng.uniform(np.log(0.05), np.log(0.3), (k, 3)),
        rotations=q,
        opacity_logits=rng.uniform(-1.0, 3.0, k),
        sh_coeffs=rng.normal(size=(k, 4, 3)) * 0.4,
        sh_degree=1,
    )
    bg = np.array([0.1, 0.1, 0.3])
    out = render(asset, cam, background=bg)
    want = splat_oracle(asset, cam, bg)
    assert np.abs(out.image.astype(np.float64) - want).max() < 1e-6


def test_render_order_invariance_bit_identical():
    rng = np.random.default_rng(61)
    cam = front_camera(size=40)
    k = 30
    q = rng.normal(size=(k, 4))
    q /= np.linalg.norm(q, axis=1, keepdims=True)
    asset = GaussianAsset(
        positions=np.column_stack([rng.uniform(-0.5, 0.5, k), rng.uniform(-0.5, 0.5, k),
                                   rng.uniform(2.0, 6.0, k)]),
        log_scales=rng.uniform(np.log(0.05), np.log(0.4), (k, 3)),
        rotations=q,
        opacity_logits=rng.uniform(-1.0, 4.0, k),
        sh_coeffs=rng.normal(size=(k, 1, 3)) * 0.5,
        sh_degree=0,
    )
    base = render(asset, cam)
    for seed in range(3):
        perm = np.random.default_rng(seed).permutation(k)
        shuffled = GaussianAsset(
            positions=asset.positions[perm], log_scales=asset.log_scales[perm],
            rotations=asset.rotations[perm], opacity_logits=asset.opacity_logits[perm],
            sh_coeffs=asset.sh_coeffs[perm], sh_degree=0)
        out = render(shuffled, cam)
        np.testing.assert_array_equal(out.image, base.image)
        np.testing.assert_array_equal(out.alpha, base.alpha)


def test_render_rigid_equivariance():
    rng = np.random.default_rng(62)
    cam = front_camera(size=48)
    k = 10
    q = rng.normal(size=(k, 4))
    q /= np.linalg.norm(q, axis=1, keepdims=True)
    asset = GaussianAsset(
        positions=rng.normal(size=(k, 3)) * 0.4 + np.array([0.0, 0.0, 5.0]),
        log_scales=rng.uniform(np.log(0.08), np.log(0.3), (k, 3)),
        rotations=q,
        opacity_logits=rng.uniform(0.0, 3.0, k),
        sh_coeffs=rng.normal(size=(k, 9, 3)) * 0.3,
        sh_degree=2,
    )
    base = render(asset, cam)
    for seed in range(5):
        r2 = np.random.default_rng(seed + 100)
        axis = r2.normal(size=3)
        t = RigidTransform(quat_from_axis_angle(axis, r2.uniform(-np.pi, np.pi)),
                           r2.normal(size=3) * 2.0)
        moved_asset = asset.transformed(t)
        moved_cam = PinholeCamera(cam.fx, cam.fy, cam.cx, cam.cy, cam.width, cam.height,
                                  pose=cam.pose.compose(t.inverse()))
        out = render(moved_asset, moved_cam)
        assert np.abs(out.image - base.image).max() < 1e-5


def test_early_termination_hides_everything_behind_opaque_stack():
    cam = front_camera(size=32, f=60.0)
    def stack(with_far):
        n = 12 + (1 if with_far else 0)
        pos = [[0.0, 0.0, 2.0 + 0.1 * i] for i in range(12)]
        rgb = [[0.5, 0.5, 0.5]] * 12
        if with_far:
            pos.append([0.0, 0.0, 40.0])
            rgb.append([1.0, 0.0, 0.0])
        return GaussianAsset(
            positions=np.array(pos),
            log_scales=np.full((n, 3), np.log(0.8)),
            rotations=np.tile([1.0, 0.0, 0.0, 0.0], (n, 1)),
            opacity_logits=np.full(n, 6.0),  # nearly opaque
            sh_coeffs=rgb_to_dc(np.array(rgb))[:, None, :],
            sh_degree=0,
        )
    a = render(stack(False), cam)
    b = render(stack(True), cam)
    # transmittance hits the stop threshold before the far gaussian
    assert (1.0 - a.alpha.max()) < T_STOP
    np.testing.assert_array_equal(a.image, b.image[..., :])


def test_gaussians_behind_camera_are_culled():
    cam = front_camera()
    asset = single_gaussian([0.0, 0.0, -5.0], np.log([0.2, 0.2, 0.2]),
                            [1.0, 0.0, 0.0, 0.0], 3.0, [1.0, 0.0, 0.0])
    out = render(asset, cam, background=[0.3, 0.3, 0.3])
    np.testing.assert_allclose(out.image, 0.3, atol=1e-7)
    assert out.alpha.max() == 0.0


def test_alpha_cap():
    cam = front_camera()
    asset = single_gaussian([0.0, 0.0, 3.0], np.log([0.5, 0.5, 0.5]),
                            [1.0, 0.0, 0.0, 0.0], 20.0, [1.0, 1.0, 1.0])
    out = render(asset, cam)
    assert out.alpha.max() <= ALPHA_MAX + 1e-6


def test_background_broadcast_forms():
    cam = front_camera(size=16)
    asset = single_gaussian([0.0, 0.0, 100.0], np.log([0.01, 0.01, 0.01]),
                            [1.0, 0.0, 0.0, 0.0], -20.0, [1.0, 1.0, 1.0])
    flat = render(asset, cam, background=(0.2, 0.4, 0.6)).image
    np.testing.assert_allclose(flat[0, 0], [0.2, 0.4, 0.6], atol=1e-7)
    grad = np.linspace(0.0, 1.0, 16 * 16 * 3).reshape(16, 16, 3)
    out = render(asset, cam, background=grad).image
    np.testing.assert_allclose(out, grad.astype(np.float32), atol=1e-6)


def test_render_rejects_non_pinhole():
    from logsplat.cameras import FThetaCamera
    ft = FThetaCamera(poly=np.array([200.0]), cx=64.0, cy=64.0, width=128, height=128,
                      pose=RigidTransform.identity())
    asset = single_gaussian([0.0, 0.0, 5.0], np.log([0.1, 0.1, 0.1]),
                            [1.0, 0.0, 0.0, 0.0], 0.0, [0.5, 0.5, 0.5])
    with pytest.raises(TypeError):
        render(asset, ft)
