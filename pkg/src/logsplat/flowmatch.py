"""Flow-matching math: OT paths, the CFM objective, fixed-step ODE solvers.

A vector field is any callable ``v(x, t) -> dx/dt`` taking states (B, D)
and a scalar time in [0, 1]. Neural fields are out of scope; the
TabulatedField below loads a field from a lookup-table file so external
models can plug in through data instead of code.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from .cameras import RayMap
from .errors import (
    CorruptHeader,
    DimMismatch,
    MissingFile,
    NonFiniteState,
    ShapeMismatch,
    TruncatedPayload,
)

TVF_MAGIC = b"TVF 1"


def ot_interpolant(x0: np.ndarray, x1: np.ndarray, t: float) -> np.ndarray:
    """Straight-path point x_t = (1 - t) x0 + t x1."""
    x0 = np.asarray(x0, dtype=np.float64)
    x1 = np.asarray(x1, dtype=np.float64)
    if x0.shape != x1.shape:
        raise ShapeMismatch(f"endpoint shapes differ: {x0.shape} vs {x1.shape}")
    return (1.0 - t) * x0 + t * x1


def ot_target_velocity(x0: np.ndarray, x1: np.ndarray) -> np.ndarray:
    """The straight path has constant velocity x1 - x0, independent of t."""
    x0 = np.asarray(x0, dtype=np.float64)
    x1 = np.asarray(x1, dtype=np.float64)
    if x0.shape != x1.shape:
        raise ShapeMismatch(f"endpoint shapes differ: {x0.shape} vs {x1.shape}")
    return x1 - x0


def cfm_loss(v_pred: np.ndarray, x0: np.ndarray, x1: np.ndarray) -> float:
    """Squared error against the straight-path velocity.

    Reduction: mean over feature dimensions per sample, then mean over the
    batch, so the value is comparable across feature widths.
    """
    v_pred = np.asarray(v_pred, dtype=np.float64)
    target = ot_target_velocity(x0, x1)
    if v_pred.shape != target.shape:
        raise ShapeMismatch(f"prediction shape {v_pred.shape} does not match {target.shape}")
    if v_pred.ndim == 1:
        return float(np.mean((v_pred - target) ** 2))
    per_sample = np.mean((v_pred - target) ** 2, axis=tuple(range(1, v_pred.ndim)))
    return float(np.mean(per_sample))


def _check_finite(x: np.ndarray, step: int) -> None:
    if not np.all(np.isfinite(x)):
        raise NonFiniteState(f"integration state became non-finite at step {step}", step=step)


def integrate(field, x0: np.ndarray, n_steps: int, method: str = "euler",
              t0: float = 0.0, t1: float = 1.0) -> np.ndarray:
    """Fixed-step ODE integration of ``field`` from t0 to t1.

    ``euler`` is first order; ``heun`` (explicit trapezoid) is second
    order. The step count is exact: the solver evaluates the field
    n_steps (euler) or 2 n_steps (heun) times.
    """
    if n_steps < 1:
        raise ValueError(f"n_steps must be >= 1, got {n_steps}")
    if method not in ("euler", "heun"):
        raise ValueError(f"unknown method {method!r}, expected 'euler' or 'heun'")
    x = np.asarray(x0, dtype=np.float64).copy()
    h = (t1 - t0) / n_steps
    for i in range(n_steps):
        t = t0 + i * h
        v = np.asarray(field(x, t), dtype=np.float64)
        if v.shape != x.shape:
            raise ShapeMismatch(f"field returned shape {v.shape} for state shape {x.shape}")
        if method == "euler":
            x = x + h * v
        else:
            x_pred = x + h * v
            _check_finite(x_pred, i)
            v2 = np.asarray(field(x_pred, t + h), dtype=np.float64)
            x = x + 0.5 * h * (v + v2)
        _check_finite(x, i)
    return x


def sample_path(field, x0: np.ndarray, n_steps: int, method: str = "euler") -> np.ndarray:
    """All intermediate states (n_steps + 1, *x0.shape), x0 first."""
    if n_steps < 1:
        raise ValueError(f"n_steps must be >= 1, got {n_steps}")
    out = [np.asarray(x0, dtype=np.float64).copy()]
    h = 1.0 / n_steps
    for i in range(n_steps):
        out.append(integrate(field, out[-1], 1, method=method, t0=i * h, t1=(i + 1) * h))
    return np.stack(out)


@dataclass
class TabulatedField:
    """Vector field on a regular (t, x_1..x_D) grid, multilinear lookup.

    ``values`` holds the field at every grid node with shape
    (n_t, n_1, ..., n_D, D). Queries clamp to the grid's bounding box, so
    the field is constant along each axis beyond its range.
    """

    t_nodes: np.ndarray  # (n_t,) increasing in [0, 1]
    axes: tuple  # D tuples (min, max, n)
    values: np.ndarray

    def __post_init__(self):
        self.t_nodes = np.asarray(self.t_nodes, dtype=np.float64)
        self.values = np.asarray(self.values, dtype=np.float64)
        d = len(self.axes)
        grid_shape = (self.t_nodes.size,) + tuple(int(n) for _, _, n in self.axes)
        if self.values.shape != grid_shape + (d,):
            raise ShapeMismatch(
                f"values shape {self.values.shape} does not match grid {grid_shape} + ({d},)")
        points = [self.t_nodes] + [np.linspace(lo, hi, int(n)) for lo, hi, n in self.axes]
        self._interp = RegularGridInterpolator(
            points, self.values, method="linear", bounds_error=False, fill_value=None)
        self._lo = np.array([p[0] for p in points])
        self._hi = np.array([p[-1] for p in points])

    @property
    def dim(self) -> int:
        return len(self.axes)

    def __call__(self, x: np.ndarray, t: float) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        squeeze = x.ndim == 1
        x2 = np.atleast_2d(x)
        if x2.shape[1] != self.dim:
            raise DimMismatch(f"state dim {x2.shape[1]} != field dim {self.dim}")
        q = np.concatenate([np.full((x2.shape[0], 1), float(t)), x2], axis=1)
        q = np.clip(q, self._lo, self._hi)
        out = self._interp(q)
        return out[0] if squeeze else out

    @staticmethod
    def from_function(fn, axes, n_t: int = 9) -> "TabulatedField":
        """Sample ``fn(x, t)`` on a regular grid; axes are (lo, hi, n) triples."""
        axes = tuple((float(lo), float(hi), int(n)) for lo, hi, n in axes)
        t_nodes = np.linspace(0.0, 1.0, n_t)
        grids = [np.linspace(lo, hi, n) for lo, hi, n in axes]
        mesh = np.meshgrid(*grids, indexing="ij")
        pts = np.stack([m.ravel() for m in mesh], axis=-1)
        vals = np.stack([np.asarray(fn(pts, t)) for t in t_nodes])
        d = len(axes)
        shape = (n_t,) + tuple(n for _, _, n in axes) + (d,)
        return TabulatedField(t_nodes, axes, vals.reshape(shape))

    def save(self, path: str | Path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        lines = [f"TVF 1", f"dim {self.dim}", f"t_n {self.t_nodes.size}"]
        for lo, hi, n in self.axes:
            lines.append(f"axis {lo:.17g} {hi:.17g} {int(n)}")
        lines.append("end_header")
        with open(path, "wb") as f:
            f.write(("\n".join(lines) + "\n").encode("ascii"))
            f.write(self.values.astype("<f4").tobytes())

    @staticmethod
    def load(path: str | Path) -> "TabulatedField":
        path = Path(path)
        if not path.is_file():
            raise MissingFile(f"field file not found: {path}")
        data = path.read_bytes()
        head_end = data.find(b"end_header\n")
        if not data.startswith(TVF_MAGIC) or head_end < 0:
            raise CorruptHeader(f"{path}: not a TVF 1 file")
        dim = n_t = None
        axes = []
        for line in data[:head_end].decode("ascii", errors="replace").splitlines()[1:]:
            parts = line.split()
            if parts[0] == "dim":
                dim = int(parts[1])
            elif parts[0] == "t_n":
                n_t = int(parts[1])
            elif parts[0] == "axis":
                axes.append((float(parts[1]), float(parts[2]), int(parts[3])))
            else:
                raise CorruptHeader(f"{path}: unknown header field {parts[0]!r}")
        if dim is None or n_t is None or len(axes) != dim:
            raise CorruptHeader(f"{path}: incomplete header")
        count = n_t * int(np.prod([n for _, _, n in axes])) * dim
        payload = data[head_end + len(b"end_header\n"):]
        if len(payload) < count * 4:
            raise TruncatedPayload(f"{path}: expected {count * 4} payload bytes, found {len(payload)}")
        shape = (n_t,) + tuple(n for _, _, n in axes) + (dim,)
        values = np.frombuffer(payload[: count * 4], dtype="<f4").reshape(shape)
        return TabulatedField(np.linspace(0.0, 1.0, n_t), tuple(axes), values.copy())


def conditioning_channels(features: np.ndarray, rays: RayMap, is_context: bool) -> np.ndarray:
    """Stack per-view conditioning: features, 6 ray channels, indicator.

    Output is (C + 7, H, W): the feature planes, ray origins (3) and
    directions (3) from the view's camera, and a constant plane that is 1
    for context views and 0 for views to be generated.
    """
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 3:
        raise ShapeMismatch(f"features must be (C, H, W), got {features.shape}")
    h, w = features.shape[1], features.shape[2]
    if (rays.height, rays.width) != (h, w):
        raise ShapeMismatch(
            f"ray map {rays.height}x{rays.width} does not match features {h}x{w}")
    indicator = np.full((1, h, w), 1.0 if is_context else 0.0)
    return np.concatenate([features, rays.channels(), indicator], axis=0)
