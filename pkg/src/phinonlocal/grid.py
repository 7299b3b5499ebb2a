"""Uniform tensor meshes on intervals and rectangles.

Nodes are stored in C order over the per-axis counts, so a 2D node
``(i, j)`` (``i`` along x) has flat index ``i * ny + j``.  Quadrature is
the tensor trapezoid rule.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .errors import InvalidMeshSpec

__all__ = [
    "Mesh",
    "GridFunction",
    "DistanceField",
    "make_mesh",
    "distance_field",
    "integrate",
    "staggered_gradient",
    "write_csv",
    "read_csv",
]


@dataclass(frozen=True, eq=False)
class Mesh:
    dim: int
    extents: tuple
    counts: tuple

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise InvalidMeshSpec(f"dim must be 1 or 2, got {self.dim}")
        if len(self.extents) != self.dim or len(self.counts) != self.dim:
            raise InvalidMeshSpec("need one extent and one count per axis")
        for (a, b), n in zip(self.extents, self.counts):
            if not (np.isfinite(a) and np.isfinite(b) and b > a):
                raise InvalidMeshSpec(f"degenerate extent [{a}, {b}]")
            if int(n) != n or n < 3:
                raise InvalidMeshSpec(f"need at least 3 nodes per axis, got {n}")

    @cached_property
    def axes(self) -> tuple:
        return tuple(np.linspace(a, b, n) for (a, b), n in zip(self.extents, self.counts))

    @cached_property
    def h(self) -> tuple:
        return tuple((b - a) / (n - 1) for (a, b), n in zip(self.extents, self.counts))

    @property
    def shape(self) -> tuple:
        return tuple(self.counts)

    @property
    def size(self) -> int:
        return int(np.prod(self.counts))

    @cached_property
    def points(self) -> np.ndarray:
        """Node coordinates, shape ``(size, dim)``."""
        grids = np.meshgrid(*self.axes, indexing="ij")
        return np.stack([g.ravel() for g in grids], axis=1)

    @cached_property
    def boundary(self) -> np.ndarray:
        mask = np.zeros(self.shape, dtype=bool)
        for k in range(self.dim):
            idx = [slice(None)] * self.dim
            idx[k] = 0
            mask[tuple(idx)] = True
            idx[k] = -1
            mask[tuple(idx)] = True
        return mask.ravel()

    @cached_property
    def interior(self) -> np.ndarray:
        return ~self.boundary

    @cached_property
    def weights(self) -> np.ndarray:
        w = np.ones(())
        for n, h in zip(self.counts, self.h):
            wk = np.full(n, h)
            wk[[0, -1]] = h / 2
            w = np.multiply.outer(w, wk)
        return w.ravel()

    @property
    def measure(self) -> float:
        return float(np.prod([b - a for a, b in self.extents]))

    @property
    def min_h(self) -> float:
        return min(self.h)

    @cached_property
    def elements(self):
        """Piecewise-linear gradient operators for the energy discretization.

        Returns ``(G, w)`` where ``G`` is a list with one sparse matrix per
        gradient component (rows are elements) and ``w`` the element
        measures.  In 1D the elements are the mesh cells, so ``G[0] u`` is
        the staggered difference.  In 2D every cell is cut into two right
        triangles along each diagonal and the two triangulations are
        averaged, which keeps the 5-point stencil for the Laplacian and
        avoids a preferred diagonal.
        """
        if self.dim == 1:
            (n,), (h,) = self.counts, self.h
            rows = np.repeat(np.arange(n - 1), 2)
            cols = np.stack([np.arange(n - 1), np.arange(1, n)], axis=1).ravel()
            vals = np.tile([-1.0 / h, 1.0 / h], n - 1)
            G = sp.csr_matrix((vals, (rows, cols)), shape=(n - 1, n))
            return [G], np.full(n - 1, h)
        return _triangle_operators(self)

    def grid_function(self, values) -> "GridFunction":
        return GridFunction(self, np.asarray(values, dtype=float))

    def __repr__(self):
        return f"Mesh(dim={self.dim}, extents={self.extents}, counts={self.counts})"


def _triangle_operators(mesh: Mesh):
    nx, ny = mesh.counts
    hx, hy = mesh.h
    ii, jj = np.meshgrid(np.arange(nx - 1), np.arange(ny - 1), indexing="ij")
    ii, jj = ii.ravel(), jj.ravel()
    c00 = ii * ny + jj
    c10 = (ii + 1) * ny + jj
    c01 = ii * ny + jj + 1
    c11 = (ii + 1) * ny + jj + 1
    # (right-angle vertex, vertex along x, vertex along y, sign_x, sign_y)
    tris = [
        (c00, c10, c01, 1.0, 1.0),
        (c11, c01, c10, -1.0, -1.0),
        (c10, c00, c11, -1.0, 1.0),
        (c01, c11, c00, 1.0, -1.0),
    ]
    ne = len(c00)
    rows_x, cols_x, vals_x, rows_y, cols_y, vals_y = [], [], [], [], [], []
    for t, (v0, vx, vy, sx, sy) in enumerate(tris):
        r = t * ne + np.arange(ne)
        rows_x += [r, r]
        cols_x += [vx, v0]
        vals_x += [np.full(ne, sx / hx), np.full(ne, -sx / hx)]
        rows_y += [r, r]
        cols_y += [vy, v0]
        vals_y += [np.full(ne, sy / hy), np.full(ne, -sy / hy)]
    n = mesh.size
    Gx = sp.csr_matrix((np.concatenate(vals_x), (np.concatenate(rows_x), np.concatenate(cols_x))), shape=(4 * ne, n))
    Gy = sp.csr_matrix((np.concatenate(vals_y), (np.concatenate(rows_y), np.concatenate(cols_y))), shape=(4 * ne, n))
    # each triangle has area hx*hy/2; the two triangulations are averaged
    return [Gx, Gy], np.full(4 * ne, hx * hy / 4.0)


def make_mesh(dim: int, extents, counts) -> Mesh:
    """Uniform tensor mesh; ``extents`` is ``[a, b]`` or a list of them."""
    ext = np.asarray(extents, dtype=float)
    if ext.ndim == 1:
        ext = ext[None, :]
    cnt = np.atleast_1d(counts)
    try:
        extents_t = tuple((float(a), float(b)) for a, b in ext)
        counts_t = tuple(int(c) if float(c) == int(c) else float(c) for c in cnt)
    except (TypeError, ValueError) as exc:
        raise InvalidMeshSpec(str(exc)) from exc
    return Mesh(int(dim), extents_t, counts_t)


@dataclass(frozen=True, eq=False)
class GridFunction:
    mesh: Mesh
    values: np.ndarray

    def __post_init__(self):
        if self.values.shape != (self.mesh.size,):
            raise ValueError(f"expected {self.mesh.size} values, got shape {self.values.shape}")

    @property
    def is_dirichlet(self) -> bool:
        return bool(np.all(self.values[self.mesh.boundary] == 0.0))

    def sup(self) -> float:
        return float(np.max(np.abs(self.values)))

    def reshape(self) -> np.ndarray:
        return self.values.reshape(self.mesh.shape)


@dataclass(frozen=True, eq=False)
class DistanceField:
    d: GridFunction
    delta: float


def distance_field(mesh: Mesh, delta: float | None = None) -> DistanceField:
    """Exact distance to the boundary of the interval or rectangle.

    ``delta`` defaults to one sixth of the shortest side, so the collar
    ``{d <= 3 delta}`` reaches at most the centre line.
    """
    pts = mesh.points
    d = np.full(mesh.size, np.inf)
    for k, (a, b) in enumerate(mesh.extents):
        d = np.minimum(d, np.minimum(pts[:, k] - a, b - pts[:, k]))
    d[mesh.boundary] = 0.0
    d = np.maximum(d, 0.0)
    if delta is None:
        delta = min(b - a for a, b in mesh.extents) / 6.0
    return DistanceField(GridFunction(mesh, d), float(delta))


def integrate(u: GridFunction) -> float:
    return float(u.mesh.weights @ u.values)


def staggered_gradient(u: GridFunction) -> tuple:
    """Face differences ``(u[i+1] - u[i]) / h`` along each axis."""
    arr = u.reshape()
    return tuple(np.diff(arr, axis=k) / h for k, h in enumerate(u.mesh.h))


def write_csv(u: GridFunction, path) -> None:
    """Columns ``node_index, x[, y], value``."""
    cols = ["node_index", "x", "y"][: 2 + u.mesh.dim - 1] + ["value"]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(cols)
        for i, (pt, val) in enumerate(zip(u.mesh.points, u.values)):
            w.writerow([i, *(repr(float(c)) for c in pt), repr(float(val))])


def read_csv(path):
    """Inverse of :func:`write_csv`: returns ``(points, values)``."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    if header[0] != "node_index" or header[-1] != "value":
        raise ValueError(f"unexpected header {header}")
    data = np.array([[float(c) for c in r] for r in body])
    return data[:, 1:-1], data[:, -1]
