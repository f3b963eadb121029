"""Gaussian asset container, token packing, and the .gsa file format.

An asset is a struct-of-arrays over K >= 1 primitives: position, log-scale,
rotation (w, x, y, z, object frame -> asset frame), opacity logit, and SH
color coefficients. Storage dtype is float32; geometry math upcasts.

Token layout (both directions): a token is a block of 64 consecutive
gaussians, each flattened to 11 + 3 * (L+1)^2 floats as
[position xyz | log-scale xyz | quaternion wxyz | opacity logit | sh],
with sh coefficient-major (all 3 channels of coefficient 0, then
coefficient 1, ...). The SH degree is inferred from the flat width.

File format ``.gsa``: an ASCII header

    GSA 1
    count <K>
    sh_degree <L>
    end_header

followed by K little-endian float32 records in the same per-gaussian
layout as the token rows.
"""

from __future__ import annotations

import io
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import (
    AssetLoadError,
    BlockSizeMismatch,
    CorruptHeader,
    DimMismatch,
    ShapeMismatch,
    TruncatedPayload,
)
from ..rotations import quat_normalize, quat_to_matrix
from .sh import MAX_SH_DEGREE, n_sh_coeffs

TOKEN_BLOCK = 64
_FIXED_FIELDS = 11  # pos 3 + log_scale 3 + quat 4 + logit 1

MAGIC = b"GSA 1"


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x, dtype=np.float64)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    out[~pos] = e / (1.0 + e)
    return out


@dataclass
class GaussianAsset:
    positions: np.ndarray  # (K, 3)
    log_scales: np.ndarray  # (K, 3)
    rotations: np.ndarray  # (K, 4) unit wxyz
    opacity_logits: np.ndarray  # (K,)
    sh_coeffs: np.ndarray  # (K, (L+1)^2, 3)
    sh_degree: int

    def __post_init__(self):
        self.positions = np.ascontiguousarray(self.positions, dtype=np.float32)
        self.log_scales = np.ascontiguousarray(self.log_scales, dtype=np.float32)
        self.rotations = np.ascontiguousarray(self.rotations, dtype=np.float32)
        self.opacity_logits = np.ascontiguousarray(self.opacity_logits, dtype=np.float32)
        self.sh_coeffs = np.ascontiguousarray(self.sh_coeffs, dtype=np.float32)
        k = self.positions.shape[0]
        if k < 1:
            raise ShapeMismatch("an asset must contain at least one gaussian")
        n = n_sh_coeffs(self.sh_degree)
        expect = {
            "positions": (k, 3),
            "log_scales": (k, 3),
            "rotations": (k, 4),
            "opacity_logits": (k,),
            "sh_coeffs": (k, n, 3),
        }
        for name, shape in expect.items():
            arr = getattr(self, name)
            if arr.shape != shape:
                raise ShapeMismatch(f"{name} has shape {arr.shape}, expected {shape}")
            if not np.all(np.isfinite(arr)):
                raise ShapeMismatch(f"{name} contains non-finite values")
        # normalize only quaternions that need it, so decode(encode(x)) is
        # bit-exact for already-unit rotations
        norms = np.linalg.norm(self.rotations.astype(np.float64), axis=1)
        if np.any(np.abs(norms - 1.0) > 1e-6):
            self.rotations = quat_normalize(self.rotations).astype(np.float32)

    def __len__(self) -> int:
        return self.positions.shape[0]

    @property
    def scales(self) -> np.ndarray:
        return np.exp(self.log_scales.astype(np.float64))

    @property
    def opacities(self) -> np.ndarray:
        return _sigmoid(self.opacity_logits.astype(np.float64))

    def covariances(self) -> np.ndarray:
        """(K, 3, 3) world covariances R diag(s^2) R^T in float64."""
        r = quat_to_matrix(self.rotations.astype(np.float64))
        s2 = self.scales ** 2
        return np.einsum("kij,kj,klj->kil", r, s2, r)

    def transformed(self, rigid) -> "GaussianAsset":
        """Asset moved rigidly: positions mapped, orientations left-composed."""
        from ..rotations import quat_multiply

        pos = rigid.apply(self.positions.astype(np.float64))
        rot = quat_multiply(rigid.rotation, self.rotations.astype(np.float64))
        return GaussianAsset(
            positions=pos, log_scales=self.log_scales, rotations=rot,
            opacity_logits=self.opacity_logits, sh_coeffs=self.sh_coeffs,
            sh_degree=self.sh_degree,
        )


def _record_width(sh_degree: int) -> int:
    return _FIXED_FIELDS + 3 * n_sh_coeffs(sh_degree)


def _degree_for_width(width: int) -> int:
    for degree in range(MAX_SH_DEGREE + 1):
        if _record_width(degree) == width:
            return degree
    raise DimMismatch(f"no sh degree packs to {width} floats per gaussian")


def _flatten(asset: GaussianAsset) -> np.ndarray:
    k = len(asset)
    return np.concatenate(
        [
            asset.positions,
            asset.log_scales,
            asset.rotations,
            asset.opacity_logits[:, None],
            asset.sh_coeffs.reshape(k, -1),
        ],
        axis=1,
    ).astype(np.float32)


def _unflatten(flat: np.ndarray, sh_degree: int) -> GaussianAsset:
    n = n_sh_coeffs(sh_degree)
    return GaussianAsset(
        positions=flat[:, 0:3],
        log_scales=flat[:, 3:6],
        rotations=flat[:, 6:10],
        opacity_logits=flat[:, 10],
        sh_coeffs=flat[:, 11:].reshape(-1, n, 3),
        sh_degree=sh_degree,
    )


def decode_tokens(tokens: np.ndarray) -> GaussianAsset:
    """(T, 64, D) token tensor -> asset with K = 64 T gaussians."""
    tokens = np.asarray(tokens)
    if tokens.ndim != 3:
        raise ShapeMismatch(f"tokens must be (T, {TOKEN_BLOCK}, D), got shape {tokens.shape}")
    if tokens.shape[1] != TOKEN_BLOCK:
        raise BlockSizeMismatch(f"token block must hold {TOKEN_BLOCK} gaussians, got {tokens.shape[1]}")
    degree = _degree_for_width(tokens.shape[2])
    flat = tokens.reshape(-1, tokens.shape[2]).astype(np.float32)
    return _unflatten(flat, degree)


def encode_tokens(asset: GaussianAsset) -> np.ndarray:
    """Asset -> (K/64, 64, D); K must be a multiple of the block size."""
    k = len(asset)
    if k % TOKEN_BLOCK != 0:
        raise BlockSizeMismatch(f"{k} gaussians do not fill {TOKEN_BLOCK}-sized blocks")
    flat = _flatten(asset)
    return flat.reshape(k // TOKEN_BLOCK, TOKEN_BLOCK, flat.shape[1])


def save_asset(path: str | Path, asset: GaussianAsset) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = f"GSA 1\ncount {len(asset)}\nsh_degree {asset.sh_degree}\nend_header\n"
    payload = _flatten(asset)
    if payload.dtype.byteorder not in ("<", "="):  # ensure little-endian on any host
        payload = payload.astype("<f4")
    with open(path, "wb") as f:
        f.write(header.encode("ascii"))
        f.write(payload.astype("<f4").tobytes())


def load_asset(path: str | Path) -> GaussianAsset:
    path = Path(path)
    if not path.is_file():
        raise AssetLoadError(f"asset file not found: {path}")
    with open(path, "rb") as f:
        data = f.read()

    head_end = data.find(b"end_header\n")
    if not data.startswith(MAGIC) or head_end < 0:
        raise CorruptHeader(f"{path}: not a GSA 1 file")
    fields = {}
    for line in data[:head_end].decode("ascii", errors="replace").splitlines()[1:]:
        parts = line.split()
        if len(parts) != 2:
            raise CorruptHeader(f"{path}: bad header line {line!r}")
        fields[parts[0]] = parts[1]
    try:
        count = int(fields["count"])
        degree = int(fields["sh_degree"])
    except (KeyError, ValueError) as e:
        raise CorruptHeader(f"{path}: missing or bad count/sh_degree") from e
    if count < 1 or not (0 <= degree <= MAX_SH_DEGREE):
        raise CorruptHeader(f"{path}: invalid count {count} or sh_degree {degree}")

    payload = data[head_end + len(b"end_header\n"):]
    width = _record_width(degree)
    need = count * width * 4
    if len(payload) < need:
        raise TruncatedPayload(f"{path}: expected {need} payload bytes, found {len(payload)}")
    flat = np.frombuffer(payload[:need], dtype="<f4").reshape(count, width)
    try:
        return _unflatten(flat.copy(), degree)
    except ShapeMismatch as e:
        raise AssetLoadError(f"{path}: {e}") from e
