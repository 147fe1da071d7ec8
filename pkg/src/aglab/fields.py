"""Grid fields and finite-difference calculus.

Scalar/vector fields are node arrays on a :class:`~aglab.geometry.Grid`.
Derivative stencils are assembled once per grid as sparse matrices:
second-order centered where both neighbours are active, second-order
one-sided at mask edges, first-order as a last resort.  The weak
divergence pairs a vector field against nodal hat functions, which on a
uniform grid reduces to centered differences on stencil-complete nodes;
its output is a signed measure on dual cells.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from . import geometry
from .geometry import Domain, Grid


@dataclass
class ScalarField:
    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != self.grid.shape:
            raise ValueError("field shape does not match grid")

    def copy(self) -> "ScalarField":
        return ScalarField(self.grid, self.values.copy())

    def check_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.values[self.grid.active()])))


@dataclass
class VectorField:
    grid: Grid
    values: np.ndarray  # (nx, ny, 2)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != self.grid.shape + (2,):
            raise ValueError("field shape does not match grid")

    def norm(self) -> np.ndarray:
        return np.linalg.norm(self.values, axis=-1)


@dataclass
class CellMeasure:
    """Signed mass per dual cell (one cell per node)."""

    grid: Grid
    masses: np.ndarray

    def total_mass(self, region: np.ndarray | None = None) -> float:
        m = self.masses if region is None else self.masses[region]
        return float(np.sum(m))

    def total_variation(self, region: np.ndarray | None = None) -> float:
        m = self.masses if region is None else self.masses[region]
        return float(np.sum(np.abs(m)))

    def restrict(self, region: np.ndarray) -> "CellMeasure":
        out = np.where(region, self.masses, 0.0)
        return CellMeasure(self.grid, out)


# ---------------------------------------------------------------------------
# stencil assembly


def _shifted(A: np.ndarray, di: int, dj: int) -> np.ndarray:
    """B[i, j] = A[i+di, j+dj], False outside the array."""
    B = np.zeros_like(A)
    nx, ny = A.shape
    i0, i1 = max(0, -di), min(nx, nx - di)
    j0, j1 = max(0, -dj), min(ny, ny - dj)
    if i0 < i1 and j0 < j1:
        B[i0:i1, j0:j1] = A[i0 + di:i1 + di, j0 + dj:j1 + dj]
    return B


def _emit(rows, cols, data, case_mask, offsets, coeffs, ny, axis):
    ii, jj = np.nonzero(case_mask)
    lin = ii * ny + jj
    for off, c in zip(offsets, coeffs):
        if axis == 0:
            tgt = (ii + off) * ny + jj
        else:
            tgt = ii * ny + (jj + off)
        rows.append(lin)
        cols.append(tgt)
        data.append(np.full(lin.shape, c))


def _first_derivative(active: np.ndarray, h: float, axis: int) -> sp.csr_matrix:
    def nb(k):
        return _shifted(active, k, 0) if axis == 0 else _shifted(active, 0, k)

    A = active
    cen = A & nb(1) & nb(-1)
    fwd2 = A & ~cen & nb(1) & nb(2)
    bwd2 = A & ~cen & ~fwd2 & nb(-1) & nb(-2)
    fwd1 = A & ~cen & ~fwd2 & ~bwd2 & nb(1)
    bwd1 = A & ~cen & ~fwd2 & ~bwd2 & ~fwd1 & nb(-1)

    rows, cols, data = [], [], []
    ny = active.shape[1]
    _emit(rows, cols, data, cen, (1, -1), (0.5 / h, -0.5 / h), ny, axis)
    _emit(rows, cols, data, fwd2, (0, 1, 2), (-1.5 / h, 2.0 / h, -0.5 / h), ny, axis)
    _emit(rows, cols, data, bwd2, (0, -1, -2), (1.5 / h, -2.0 / h, 0.5 / h), ny, axis)
    _emit(rows, cols, data, fwd1, (0, 1), (-1.0 / h, 1.0 / h), ny, axis)
    _emit(rows, cols, data, bwd1, (0, -1), (1.0 / h, -1.0 / h), ny, axis)
    n = active.size
    if rows:
        rows = np.concatenate(rows)
        cols = np.concatenate(cols)
        data = np.concatenate(data)
    return sp.csr_matrix((data, (rows, cols)), shape=(n, n))


def _second_derivative(active: np.ndarray, h: float, axis: int) -> sp.csr_matrix:
    def nb(k):
        return _shifted(active, k, 0) if axis == 0 else _shifted(active, 0, k)

    h2 = h * h
    A = active
    cen = A & nb(1) & nb(-1)
    fwd3 = A & ~cen & nb(1) & nb(2) & nb(3)
    bwd3 = A & ~cen & ~fwd3 & nb(-1) & nb(-2) & nb(-3)
    fwd2 = A & ~cen & ~fwd3 & ~bwd3 & nb(1) & nb(2)
    bwd2 = A & ~cen & ~fwd3 & ~bwd3 & ~fwd2 & nb(-1) & nb(-2)

    rows, cols, data = [], [], []
    ny = active.shape[1]
    _emit(rows, cols, data, cen, (-1, 0, 1), (1 / h2, -2 / h2, 1 / h2), ny, axis)
    _emit(rows, cols, data, fwd3, (0, 1, 2, 3), (2 / h2, -5 / h2, 4 / h2, -1 / h2), ny, axis)
    _emit(rows, cols, data, bwd3, (0, -1, -2, -3), (2 / h2, -5 / h2, 4 / h2, -1 / h2), ny, axis)
    _emit(rows, cols, data, fwd2, (0, 1, 2), (1 / h2, -2 / h2, 1 / h2), ny, axis)
    _emit(rows, cols, data, bwd2, (0, -1, -2), (1 / h2, -2 / h2, 1 / h2), ny, axis)
    n = active.size
    if rows:
        rows = np.concatenate(rows)
        cols = np.concatenate(cols)
        data = np.concatenate(data)
    return sp.csr_matrix((data, (rows, cols)), shape=(n, n))


@dataclass(frozen=True)
class DiffOps:
    d1: sp.csr_matrix
    d2: sp.csr_matrix
    d11: sp.csr_matrix
    d22: sp.csr_matrix
    d12: sp.csr_matrix


def diff_ops(grid: Grid) -> DiffOps:
    """Sparse derivative operators for the grid (cached on the grid object)."""
    cached = grid.__dict__.get("_diff_ops")
    if cached is not None:
        return cached
    active = grid.active()
    d1 = _first_derivative(active, grid.h, axis=0)
    d2 = _first_derivative(active, grid.h, axis=1)
    ops = DiffOps(
        d1=d1,
        d2=d2,
        d11=_second_derivative(active, grid.h, axis=0),
        d22=_second_derivative(active, grid.h, axis=1),
        d12=(d1 @ d2).tocsr(),
    )
    grid.__dict__["_diff_ops"] = ops
    return ops


# ---------------------------------------------------------------------------
# calculus


def fd_gradient(u: ScalarField) -> VectorField:
    ops = diff_ops(u.grid)
    flat = u.values.ravel()
    g1 = (ops.d1 @ flat).reshape(u.grid.shape)
    g2 = (ops.d2 @ flat).reshape(u.grid.shape)
    return VectorField(u.grid, np.stack([g1, g2], axis=-1))


def fd_perp_gradient(u: ScalarField) -> VectorField:
    g = fd_gradient(u).values
    return VectorField(u.grid, np.stack([-g[..., 1], g[..., 0]], axis=-1))


def fd_hessian_norm(u: ScalarField, eta: float) -> ScalarField:
    """Smoothed Frobenius norm sqrt(|H|^2 + eta^2) - eta of the FD Hessian."""
    if eta < 0:
        raise ValueError("eta must be nonnegative")
    ops = diff_ops(u.grid)
    flat = u.values.ravel()
    q = (ops.d11 @ flat) ** 2 + 2.0 * (ops.d12 @ flat) ** 2 + (ops.d22 @ flat) ** 2
    vals = np.sqrt(q + eta * eta) - eta
    return ScalarField(u.grid, vals.reshape(u.grid.shape))


def w11_distance(u: ScalarField, v: ScalarField, region: np.ndarray) -> float:
    """h^2-weighted L1 distance of values plus gradients over the region."""
    if u.grid is not v.grid:
        raise ValueError("fields must share a grid")
    diff = ScalarField(u.grid, u.values - v.values)
    g = fd_gradient(diff).values
    dens = np.abs(diff.values) + np.linalg.norm(g, axis=-1)
    return float(u.grid.h**2 * np.sum(dens[region]))


def weak_divergence(F: VectorField) -> CellMeasure:
    """Distributional divergence against nodal hat functions.

    Each stencil-complete active node carries the mass
    h^2 * (centered div F); rim nodes (incomplete stencil) carry zero, so
    totals over the active region measure interior production only.
    """
    grid = F.grid
    if grid.angle != 0.0:
        raise NotImplementedError("weak divergence expects an axis-aligned grid")
    A = grid.active()
    ok = A & _shifted(A, 1, 0) & _shifted(A, -1, 0) & _shifted(A, 0, 1) & _shifted(A, 0, -1)
    F1, F2 = F.values[..., 0], F.values[..., 1]
    div = np.zeros(grid.shape)
    div[1:-1, :] += F1[2:, :] - F1[:-2, :]
    div[:, 1:-1] += F2[:, 2:] - F2[:, :-2]
    div /= 2.0 * grid.h
    masses = np.where(ok, grid.h**2 * div, 0.0)
    return CellMeasure(grid, masses)


# ---------------------------------------------------------------------------
# analytic reference field


def exact_limit_field(domain: Domain, grid: Grid) -> tuple[ScalarField, VectorField]:
    """Extended signed distance and its perp-gradient sampled at the nodes.

    Ridge-near nodes receive the one-sided value from their own side of
    the ridge (upper side for x2 == 0 exactly); they stay flagged in
    ``grid.ridge_near``.
    """
    pts = grid.nodes
    u = geometry.signed_distance(domain, pts)
    m = geometry.limit_vector_field(domain, pts)
    return ScalarField(grid, u), VectorField(grid, m)


# ---------------------------------------------------------------------------
# dumps: one line per node "i j x y value[ value2]" plus a JSON sidecar


def _grid_meta(grid: Grid) -> dict:
    return {
        "origin": [grid.origin[0], grid.origin[1]],
        "h": grid.h,
        "nx": grid.nx,
        "ny": grid.ny,
        "angle": grid.angle,
    }


def dump_field(path: str | Path, fld: ScalarField | VectorField) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    grid = fld.grid
    pts = grid.nodes
    lines = []
    vector = isinstance(fld, VectorField)
    for i in range(grid.nx):
        for j in range(grid.ny):
            x, y = pts[i, j]
            if vector:
                v = fld.values[i, j]
                lines.append(f"{i} {j} {x:.12g} {y:.12g} {v[0]:.12g} {v[1]:.12g}")
            else:
                lines.append(f"{i} {j} {x:.12g} {y:.12g} {fld.values[i, j]:.12g}")
    path.write_text("\n".join(lines) + "\n")
    meta = _grid_meta(grid)
    meta["components"] = 2 if vector else 1
    Path(str(path) + ".json").write_text(json.dumps(meta, sort_keys=True, indent=1) + "\n")


def load_field(path: str | Path) -> ScalarField | VectorField:
    path = Path(path)
    meta = json.loads(Path(str(path) + ".json").read_text())
    grid = Grid(origin=tuple(meta["origin"]), h=meta["h"], nx=meta["nx"], ny=meta["ny"], angle=meta["angle"])
    raw = np.loadtxt(path)
    ncomp = meta["components"]
    vals = np.zeros((grid.nx, grid.ny, ncomp))
    ii = raw[:, 0].astype(int)
    jj = raw[:, 1].astype(int)
    vals[ii, jj, :] = raw[:, 4:4 + ncomp]
    if ncomp == 1:
        return ScalarField(grid, vals[..., 0])
    return VectorField(grid, vals)
