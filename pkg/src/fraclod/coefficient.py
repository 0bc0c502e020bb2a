"""Piecewise-constant scalar diffusion coefficients on (0,1)^d."""
from __future__ import annotations

import hashlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DomainError


class RasterError(ValueError):
    """Malformed or non-elliptic coefficient raster."""


@dataclass(frozen=True, eq=False)
class CoefficientField:
    """Cell values of A(x) = value * Identity.

    ``values`` has shape (nx,) for d = 1 and (ny, nx) for d = 2: row j holds
    the cells with x2 in [j/ny, (j+1)/ny).
    """

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim not in (1, 2) or v.size == 0:
            raise DomainError("coefficient raster must be 1- or 2-dimensional")
        if not np.all(np.isfinite(v)) or np.any(v <= 0.0):
            raise DomainError("coefficient values must be positive and finite")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def d(self) -> int:
        return self.values.ndim

    @property
    def grid_shape(self) -> tuple:
        return tuple(reversed(self.values.shape))

    @property
    def alpha(self) -> float:
        return float(self.values.min())

    @property
    def beta(self) -> float:
        return float(self.values.max())

    @property
    def digest(self) -> str:
        return hashlib.sha1(self.values.tobytes() + str(self.values.shape).encode()).hexdigest()

    def _cell_index(self, x: np.ndarray, n: int) -> np.ndarray:
        # boundaries between cells belong to the lower-index cell
        return np.clip(np.ceil(x * n - 1e-12).astype(int) - 1, 0, n - 1)

    def sample(self, x) -> np.ndarray | float:
        """Value of the containing cell at points x (shape (..., d) or scalar for d = 1)."""
        pts = np.asarray(x, dtype=float)
        scalar = pts.ndim == 0 or (self.d > 1 and pts.ndim == 1)
        pts = pts.reshape(-1, self.d)
        if np.any((pts < 0.0) | (pts > 1.0)):
            raise DomainError("sample point outside the unit cube")
        if self.d == 1:
            out = self.values[self._cell_index(pts[:, 0], self.values.shape[0])]
        else:
            ny, nx = self.values.shape
            out = self.values[self._cell_index(pts[:, 1], ny), self._cell_index(pts[:, 0], nx)]
        return float(out[0]) if scalar else out

    def extended_tensor(self, x) -> np.ndarray:
        """(d+1) x (d+1) block tensor diag(A(x) I_d, 1)."""
        a = self.sample(x)
        return np.diag([a] * self.d + [1.0])

    def on_elements(self, mesh) -> np.ndarray:
        """Cell value at each element centroid."""
        if mesh.d != self.d:
            raise DomainError("coefficient and mesh dimensions differ")
        return np.asarray(self.sample(mesh.centroids[:, : self.d]), dtype=float)


def constant_field(value: float, grid_shape=(1,)) -> CoefficientField:
    shape = tuple(reversed(tuple(grid_shape)))
    return CoefficientField(np.full(shape, float(value)))


def log_uniform_random_field(contrast: float, grid_shape, seed: int) -> CoefficientField:
    """I.i.d. cell values with log10(value) uniform on [0, log10(contrast)]."""
    if contrast < 1.0:
        raise DomainError("contrast must be at least 1")
    rng = np.random.default_rng(seed)
    shape = tuple(reversed(tuple(grid_shape)))
    expo = rng.uniform(0.0, np.log10(contrast), size=shape)
    return CoefficientField(10.0**expo)


def load_raster(path) -> CoefficientField:
    """Read a raster: header "nx" or "nx ny", then positive values in row-major order."""
    path = Path(path)
    if not path.exists():
        raise RasterError(f"{path}: no such file")
    lines = path.read_text().splitlines()
    header_line = None
    for num, line in enumerate(lines, start=1):
        if line.strip():
            header_line = num
            break
    if header_line is None:
        raise RasterError(f"{path}: empty file")
    try:
        shape = [int(t) for t in lines[header_line - 1].split()]
    except ValueError:
        raise RasterError(f"{path}:{header_line}: malformed header") from None
    if len(shape) not in (1, 2) or any(n < 1 for n in shape):
        raise RasterError(f"{path}:{header_line}: header must be 'nx' or 'nx ny'")
    values = []
    for num in range(header_line + 1, len(lines) + 1):
        for tok in lines[num - 1].split():
            try:
                val = float(tok)
            except ValueError:
                raise RasterError(f"{path}:{num}: not a number: {tok!r}") from None
            if not np.isfinite(val) or val <= 0.0:
                raise RasterError(f"{path}:{num}: coefficient must be positive, got {tok}")
            values.append(val)
    expected = int(np.prod(shape))
    if len(values) != expected:
        raise RasterError(f"{path}: expected {expected} values, found {len(values)}")
    arr = np.array(values)
    if len(shape) == 2:
        arr = arr.reshape(shape[1], shape[0])
    return CoefficientField(arr)


def write_raster(path, field: CoefficientField) -> None:
    with open(path, "w") as fh:
        fh.write(" ".join(str(n) for n in field.grid_shape) + "\n")
        for row in np.atleast_2d(field.values):
            fh.write(" ".join(repr(float(v)) for v in row) + "\n")


def parse_coefficient(spec: str, d: int, cells: int = 1) -> CoefficientField:
    """CLI form: constant:<v>, raster:<path>, logrand:<contrast>:<seed>."""
    kind, _, rest = spec.partition(":")
    if kind == "constant":
        return constant_field(float(rest or 1.0), (1,) * d)
    if kind == "raster":
        field = load_raster(rest)
        if field.d != d:
            raise DomainError(f"raster is {field.d}-dimensional, domain is {d}-dimensional")
        return field
    if kind == "logrand":
        contrast, _, seed = rest.partition(":")
        return log_uniform_random_field(float(contrast), (cells,) * d, int(seed or 0))
    raise DomainError(f"unknown coefficient spec {spec!r}")
