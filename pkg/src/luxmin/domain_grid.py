"""Masked structured triangulations of planar domains and P1 field calculus.

The mesh is a uniform square lattice of spacing ``1/n`` covering the shape's
bounding box.  Each cell is split along its lower-left/upper-right diagonal
into two right triangles.  A node counts as interior when it lies inside the
shape with at least half a cell of clearance to the analytic boundary; every
triangle touching an interior node is kept, so interior hat functions always
have their full support present.  Curved boundaries therefore come out as a
staircase whose geometric error is O(h).

Fields are piecewise linear: one value per node, constant gradient per
triangle, one-point (centroid) quadrature.
"""

from __future__ import annotations

import math
import os
import tempfile
from dataclasses import dataclass, field

import numpy as np

SHAPES = ("rectangle", "disk", "ellipse", "lshape", "annulus")

# fraction of a cell a node must clear the boundary by to count as interior;
# balances staircase overshoot against undershoot so masked areas track |Omega|
MASK_MARGIN = 0.5


@dataclass(frozen=True)
class DomainSpec:
    """Shape plus resolution (lattice nodes per unit length)."""

    shape: str
    n: int
    w: float | None = None
    h: float | None = None
    r: float | None = None
    a: float | None = None
    b: float | None = None
    notch_w: float | None = None
    notch_h: float | None = None
    r_in: float | None = None
    r_out: float | None = None

    # -- factories ---------------------------------------------------------

    @staticmethod
    def rectangle(w, h, n):
        return DomainSpec("rectangle", n, w=float(w), h=float(h))

    @staticmethod
    def disk(r, n):
        return DomainSpec("disk", n, r=float(r))

    @staticmethod
    def ellipse(a, b, n):
        return DomainSpec("ellipse", n, a=float(a), b=float(b))

    @staticmethod
    def lshape(w, h, notch_w, notch_h, n):
        return DomainSpec("lshape", n, w=float(w), h=float(h),
                          notch_w=float(notch_w), notch_h=float(notch_h))

    @staticmethod
    def annulus(r_in, r_out, n):
        return DomainSpec("annulus", n, r_in=float(r_in), r_out=float(r_out))

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.shape not in SHAPES:
            raise ValueError(f"unknown shape {self.shape!r}; expected one of {SHAPES}")
        if not isinstance(self.n, (int, np.integer)) or self.n < 8:
            raise ValueError(f"resolution n must be an integer >= 8, got {self.n!r}")
        for name in self._param_names():
            v = getattr(self, name)
            if v is None or not math.isfinite(v) or v <= 0:
                raise ValueError(f"{self.shape} requires positive finite {name}, got {v!r}")
        if self.shape == "annulus" and self.r_in >= self.r_out:
            raise ValueError(f"annulus requires r_in < r_out, got r_in={self.r_in}, r_out={self.r_out}")
        if self.shape == "lshape":
            if self.notch_w >= self.w or self.notch_h >= self.h:
                raise ValueError("lshape notch must be strictly smaller than the outer rectangle")

    def _param_names(self):
        return {
            "rectangle": ("w", "h"),
            "disk": ("r",),
            "ellipse": ("a", "b"),
            "lshape": ("w", "h", "notch_w", "notch_h"),
            "annulus": ("r_in", "r_out"),
        }[self.shape]

    def params(self):
        """Shape parameters as an ordered dict (for reports)."""
        return {name: getattr(self, name) for name in self._param_names()}

    # -- analytic geometry --------------------------------------------------

    def bbox(self):
        if self.shape == "rectangle" or self.shape == "lshape":
            return (0.0, 0.0, self.w, self.h)
        if self.shape == "disk":
            return (-self.r, -self.r, self.r, self.r)
        if self.shape == "ellipse":
            return (-self.a, -self.b, self.a, self.b)
        return (-self.r_out, -self.r_out, self.r_out, self.r_out)

    def diameter(self):
        x0, y0, x1, y1 = self.bbox()
        return math.hypot(x1 - x0, y1 - y0)

    def analytic_area(self):
        if self.shape == "rectangle":
            return self.w * self.h
        if self.shape == "disk":
            return math.pi * self.r ** 2
        if self.shape == "ellipse":
            return math.pi * self.a * self.b
        if self.shape == "lshape":
            return self.w * self.h - self.notch_w * self.notch_h
        return math.pi * (self.r_out ** 2 - self.r_in ** 2)

    def contains(self, x, y):
        """Strict interior test, vectorized over coordinate arrays."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        if self.shape == "rectangle":
            return (x > 0) & (x < self.w) & (y > 0) & (y < self.h)
        if self.shape == "disk":
            return np.hypot(x, y) < self.r
        if self.shape == "ellipse":
            return (x / self.a) ** 2 + (y / self.b) ** 2 < 1.0
        if self.shape == "lshape":
            outer = (x > 0) & (x < self.w) & (y > 0) & (y < self.h)
            notch = (x >= self.w - self.notch_w) & (y >= self.h - self.notch_h)
            return outer & ~notch
        rr = np.hypot(x, y)
        return (rr > self.r_in) & (rr < self.r_out)

    def _segments(self):
        """Boundary polyline segments for the polygonal shapes."""
        if self.shape == "rectangle":
            w, h = self.w, self.h
            corners = [(0, 0), (w, 0), (w, h), (0, h)]
        elif self.shape == "lshape":
            w, h, nw, nh = self.w, self.h, self.notch_w, self.notch_h
            corners = [(0, 0), (w, 0), (w, h - nh), (w - nw, h - nh), (w - nw, h), (0, h)]
        else:
            raise ValueError(f"{self.shape} has no polygonal boundary")
        return [(np.array(corners[i], float), np.array(corners[(i + 1) % len(corners)], float))
                for i in range(len(corners))]

    def boundary_distance(self, x, y):
        """Distance to the analytic boundary, valid inside and outside."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        if self.shape == "disk":
            return np.abs(self.r - np.hypot(x, y))
        if self.shape == "annulus":
            rr = np.hypot(x, y)
            return np.minimum(np.abs(self.r_out - rr), np.abs(rr - self.r_in))
        if self.shape == "ellipse":
            _, _, dist = _ellipse_nearest(self.a, self.b, np.abs(x), np.abs(y))
            return dist.reshape(np.shape(x))
        dmin = None
        for p0, p1 in self._segments():
            d = _segment_distance(p0, p1, x, y)
            dmin = d if dmin is None else np.minimum(dmin, d)
        return dmin

    def boundary_projections(self, x, y):
        """Candidate nearest boundary points seen from (x, y).

        Returns an (m, 2) array.  For curved shapes this includes mirror
        images / antipodes so that equidistant feet on a single smooth
        boundary piece (disk center, ellipse axis) are representable.
        """
        pts = []
        if self.shape in ("rectangle", "lshape"):
            for p0, p1 in self._segments():
                pts.append(_segment_project(p0, p1, x, y))
        elif self.shape in ("disk", "annulus"):
            radii = (self.r,) if self.shape == "disk" else (self.r_in, self.r_out)
            rr = math.hypot(x, y)
            u = (x / rr, y / rr) if rr > 1e-14 else (1.0, 0.0)
            for rad in radii:
                pts.append((rad * u[0], rad * u[1]))
                pts.append((-rad * u[0], -rad * u[1]))
        else:
            xe, ye, _ = _ellipse_nearest(self.a, self.b,
                                         np.asarray(abs(x)), np.asarray(abs(y)))
            xe = xe.item(0) * (1.0 if x >= 0 else -1.0)
            ye = ye.item(0) * (1.0 if y >= 0 else -1.0)
            for sx in (1.0, -1.0):
                for sy in (1.0, -1.0):
                    pts.append((sx * xe, sy * ye))
        out = []
        for p in pts:
            if not any(math.hypot(p[0] - q[0], p[1] - q[1]) < 1e-12 for q in out):
                out.append(p)
        return np.array(out)


def _segment_distance(p0, p1, x, y):
    """Point-to-segment distance, vectorized over x, y."""
    dx, dy = p1[0] - p0[0], p1[1] - p0[1]
    L2 = dx * dx + dy * dy
    t = ((x - p0[0]) * dx + (y - p0[1]) * dy) / L2
    t = np.clip(t, 0.0, 1.0)
    return np.hypot(x - (p0[0] + t * dx), y - (p0[1] + t * dy))


def _segment_project(p0, p1, x, y):
    dx, dy = p1[0] - p0[0], p1[1] - p0[1]
    t = ((x - p0[0]) * dx + (y - p0[1]) * dy) / (dx * dx + dy * dy)
    t = min(max(t, 0.0), 1.0)
    return (p0[0] + t * dx, p0[1] + t * dy)


def _ellipse_nearest(a, b, u, v):
    """Nearest point on the ellipse (x/a)^2+(y/b)^2=1 from (u, v), u, v >= 0.

    Robust bisection on the orthogonality condition; vectorized.  Returns
    (xe, ye, dist) with xe, ye the foot in the closed first quadrant.
    """
    if b > a:
        ye, xe, dist = _ellipse_nearest(b, a, v, u)
        return xe, ye, dist
    u = np.atleast_1d(np.asarray(u, dtype=float))
    v = np.atleast_1d(np.asarray(v, dtype=float))
    xe = np.empty_like(u)
    ye = np.empty_like(u)

    pos = v > 0
    # v == 0: foot either at (a, 0) or off-axis when the query sits inside
    # the evolute section cut by the major axis
    denom = a * a - b * b
    off_axis = (~pos) & (a * u < denom)
    if np.any(off_axis):
        xde = a * u[off_axis] / denom
        xe[off_axis] = a * xde
        ye[off_axis] = b * np.sqrt(np.maximum(1.0 - xde * xde, 0.0))
    on_axis = (~pos) & ~off_axis
    xe[on_axis] = a
    ye[on_axis] = 0.0

    if np.any(pos):
        up, vp = u[pos], v[pos]
        z0, z1 = up / a, vp / b
        g = z0 * z0 + z1 * z1 - 1.0
        r0 = (a / b) ** 2
        n0 = r0 * z0
        s0 = z1 - 1.0
        s1 = np.where(g < 0, 0.0, np.hypot(n0, z1) - 1.0)
        for _ in range(110):
            s = 0.5 * (s0 + s1)
            ratio0 = n0 / (s + r0)
            ratio1 = z1 / (s + 1.0)
            gs = ratio0 * ratio0 + ratio1 * ratio1 - 1.0
            s0 = np.where(gs > 0, s, s0)
            s1 = np.where(gs > 0, s1, s)
        s = 0.5 * (s0 + s1)
        xe[pos] = r0 * up / (s + r0)
        ye[pos] = vp / (s + 1.0)

    dist = np.hypot(xe - u, ye - v)
    return xe, ye, dist


@dataclass
class TriGrid:
    """Structured triangulation of a masked planar domain.

    Nodes are lattice points kept because some incident triangle has an
    interior node; ``interior_mask`` is False on the Dirichlet boundary
    layer.  ``lattice_ij`` maps each node back to its (col, row) lattice
    position so nodal data can be scattered onto a dense 2-D array.
    """

    spec: DomainSpec
    nodes: np.ndarray          # (N, 2)
    interior_mask: np.ndarray  # (N,) bool
    triangles: np.ndarray      # (T, 3) int
    tri_area: np.ndarray       # (T,)
    tri_centroid: np.ndarray   # (T, 2)
    spacing: float
    lattice_ij: np.ndarray     # (N, 2) int
    lattice_shape: tuple       # (ncols, nrows)
    lattice_origin: tuple      # (x0, y0)
    _hat_grads: np.ndarray | None = field(default=None, repr=False)

    @property
    def n_nodes(self):
        return len(self.nodes)

    @property
    def n_triangles(self):
        return len(self.triangles)

    @property
    def interior_indices(self):
        return np.flatnonzero(self.interior_mask)

    def hat_gradients(self):
        """Per-triangle gradients of the three vertex hat functions, (T, 3, 2)."""
        if self._hat_grads is None:
            p = self.nodes[self.triangles]           # (T, 3, 2)
            g = np.empty_like(p)
            for i in range(3):
                pj, pk = p[:, (i + 1) % 3], p[:, (i + 2) % 3]
                g[:, i, 0] = pj[:, 1] - pk[:, 1]
                g[:, i, 1] = pk[:, 0] - pj[:, 0]
            g /= (2.0 * self.tri_area)[:, None, None]
            self._hat_grads = g
        return self._hat_grads

    def to_lattice_array(self, values, fill=0.0):
        """Scatter nodal values onto the dense (nrows, ncols) lattice array."""
        ncols, nrows = self.lattice_shape
        arr = np.full((nrows, ncols), fill, dtype=float)
        arr[self.lattice_ij[:, 1], self.lattice_ij[:, 0]] = values
        return arr


@dataclass
class ScalarField:
    """One value per grid node, interpreted piecewise linearly."""

    grid: TriGrid
    values: np.ndarray
    zero_trace: bool = False

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.grid.n_nodes,):
            raise ValueError(f"expected {self.grid.n_nodes} nodal values, got shape {self.values.shape}")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("field contains non-finite values")
        if self.zero_trace and np.any(self.values[~self.grid.interior_mask] != 0.0):
            raise ValueError("zero_trace field has nonzero values on Dirichlet nodes")

    @staticmethod
    def zeros(grid, zero_trace=True):
        return ScalarField(grid, np.zeros(grid.n_nodes), zero_trace=zero_trace)

    @staticmethod
    def from_function(grid, fn, zero_trace=False):
        vals = np.asarray(fn(grid.nodes[:, 0], grid.nodes[:, 1]), dtype=float)
        vals = np.broadcast_to(vals, (grid.n_nodes,)).copy()
        if zero_trace:
            vals[~grid.interior_mask] = 0.0
        return ScalarField(grid, vals, zero_trace=zero_trace)

    @staticmethod
    def from_interior(grid, interior_values):
        vals = np.zeros(grid.n_nodes)
        vals[grid.interior_mask] = interior_values
        return ScalarField(grid, vals, zero_trace=True)

    def copy_with(self, values):
        return ScalarField(self.grid, values, zero_trace=self.zero_trace)


def build_grid(spec: DomainSpec) -> TriGrid:
    """Build the masked triangulation for a domain spec.

    Deterministic: the same spec always produces bit-identical arrays.
    """
    spec.validate()
    h = 1.0 / spec.n
    x0, y0, x1, y1 = spec.bbox()
    ncx = _cell_count(x1 - x0, spec.n)
    ncy = _cell_count(y1 - y0, spec.n)
    xs = x0 + np.arange(ncx + 1) * h
    ys = y0 + np.arange(ncy + 1) * h
    X, Y = np.meshgrid(xs, ys)            # row-major: index [row=j, col=i]
    flat_x, flat_y = X.ravel(), Y.ravel()

    clearance = spec.boundary_distance(flat_x, flat_y)
    interior_full = spec.contains(flat_x, flat_y) & (clearance > MASK_MARGIN * h)

    ncols = ncx + 1
    ii, jj = np.meshgrid(np.arange(ncx), np.arange(ncy))
    ii, jj = ii.ravel(), jj.ravel()
    A = jj * ncols + ii
    B = A + 1
    C = B + ncols
    D = A + ncols
    # split each cell along the diagonal that has an interior endpoint, so
    # both halves of every interior-touching cell survive (exact rectangle
    # cover) and every kept triangle still touches an interior node
    use_ac = interior_full[A] | interior_full[C]
    use_bd = ~use_ac & (interior_full[B] | interior_full[D])
    tris_full = np.concatenate([
        np.stack([A[use_ac], B[use_ac], C[use_ac]], axis=1),
        np.stack([A[use_ac], C[use_ac], D[use_ac]], axis=1),
        np.stack([A[use_bd], B[use_bd], D[use_bd]], axis=1),
        np.stack([B[use_bd], C[use_bd], D[use_bd]], axis=1),
    ])
    if len(tris_full) == 0:
        raise ValueError(f"degenerate spec: no interior nodes at n={spec.n}")

    used = np.unique(tris_full)
    renumber = np.full(ncols * (ncy + 1), -1, dtype=np.int64)
    renumber[used] = np.arange(len(used))
    triangles = renumber[tris_full]

    nodes = np.stack([flat_x[used], flat_y[used]], axis=1)
    interior_mask = interior_full[used]
    lattice_ij = np.stack([used % ncols, used // ncols], axis=1)

    p = nodes[triangles]
    area = 0.5 * np.abs(
        (p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1])
        - (p[:, 2, 0] - p[:, 0, 0]) * (p[:, 1, 1] - p[:, 0, 1]))
    if np.any(area <= 0):
        raise AssertionError("triangulation produced a degenerate triangle")
    centroid = p.mean(axis=1)

    return TriGrid(spec=spec, nodes=nodes, interior_mask=interior_mask,
                   triangles=triangles, tri_area=area, tri_centroid=centroid,
                   spacing=h, lattice_ij=lattice_ij,
                   lattice_shape=(ncols, ncy + 1), lattice_origin=(x0, y0))


def _cell_count(length, n):
    exact = length * n
    rounded = round(exact)
    if abs(exact - rounded) < 1e-9 and rounded > 0:
        return int(rounded)
    return int(math.ceil(exact))


def gradient(u: ScalarField) -> np.ndarray:
    """Per-triangle gradient of a P1 field, shape (T, 2).  Exact for affine u."""
    g = u.grid
    vals = u.values[g.triangles]               # (T, 3)
    return np.einsum("ti,tid->td", vals, g.hat_gradients())


def centroid_values(u: ScalarField) -> np.ndarray:
    """Field values at triangle centroids (mean of the three vertex values)."""
    return u.values[u.grid.triangles].mean(axis=1)


def sup_norm_and_argmax(u: ScalarField, tie_tol: float = 1e-9):
    """Nodal sup norm together with the discrete set where it is attained.

    Returns (max, indices): all nodes whose |value| is within a relative
    tie_tol of the max.  The zero field returns (0.0, all node indices).
    """
    if tie_tol < 0:
        raise ValueError("tie_tol must be nonnegative")
    a = np.abs(u.values)
    m = float(a.max())
    if m == 0.0:
        return 0.0, np.arange(u.grid.n_nodes)
    return m, np.flatnonzero(a >= m * (1.0 - tie_tol))


# -- CSV interchange --------------------------------------------------------

def grid_csv_text(grid: TriGrid) -> str:
    lines = ["node_id,x,y,interior"]
    for i, (x, y) in enumerate(grid.nodes):
        lines.append(f"{i},{float(x)!r},{float(y)!r},{int(grid.interior_mask[i])}")
    return "\n".join(lines) + "\n"


def field_csv_text(u: ScalarField) -> str:
    lines = ["node_id,value"]
    for i, v in enumerate(u.values):
        lines.append(f"{i},{float(v)!r}")
    return "\n".join(lines) + "\n"


def write_text_atomic(path, text):
    """Write via a sibling temp file + rename so readers never see a torn file."""
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=".part")
    try:
        with os.fdopen(fd, "w") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def dump_grid_csv(grid: TriGrid, path):
    write_text_atomic(path, grid_csv_text(grid))


def dump_field_csv(u: ScalarField, path):
    write_text_atomic(path, field_csv_text(u))


def load_field_csv(grid: TriGrid, path) -> ScalarField:
    vals = np.zeros(grid.n_nodes)
    seen = 0
    with open(path) as f:
        header = f.readline().strip()
        if header != "node_id,value":
            raise ValueError(f"unexpected field CSV header {header!r}")
        for line in f:
            line = line.strip()
            if not line:
                continue
            sid, sval = line.split(",")
            vals[int(sid)] = float(sval)
            seen += 1
    if seen != grid.n_nodes:
        raise ValueError(f"field CSV has {seen} rows, grid has {grid.n_nodes} nodes")
    return ScalarField(grid, vals)
