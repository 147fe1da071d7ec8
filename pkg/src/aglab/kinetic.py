"""Kinetic formulation tools.

The one-bit density chi(x, s) = 1{e^{is} . m(x) > 0}, the explicit
pi-periodic jump densities on the circle with their normalization
constant, minimal angular disintegrations, the jump identity relating
entropies to the unnormalized density, total-variation minimality
checks, the weak kinetic-identity residual against a bank of test
functions, and the sign-structure report for quadrant arcs.

Angular measures are represented exactly: a finite atom list plus a
piecewise density, every piece of the form A*sin(s - phase) + B on an
arc.  Total variations and constant shifts are evaluated in closed form
(sign changes of a shifted sine are explicit), which keeps the 1e-10
normalization checks honest.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Iterable

import numpy as np
from scipy.integrate import quad

from .entropy import (
    EntropyGenerator,
    Frame,
    TrigPoly,
    entropy_from_generator,
    frame_entropy_map,
    frame_generator,
    jump_bracket,
)
from .errors import BetaOutOfRange
from .fields import VectorField
from .geometry import Domain, Grid, RidgeSet, ridge_set

TWO_PI = 2.0 * np.pi
_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(32)


def _wrap(s):
    return np.mod(s, TWO_PI)


# ---------------------------------------------------------------------------
# circle measures


@dataclass(frozen=True)
class Piece:
    """Density A*sin(s - phase) + B on the arc [s0, s1]."""

    s0: float
    s1: float
    amp: float
    phase: float
    offset: float

    def density(self, s):
        return self.amp * np.sin(s - self.phase) + self.offset

    def abs_integral(self) -> float:
        a, b = self.s0, self.s1
        if self.amp == 0.0:
            return abs(self.offset) * (b - a)
        F = lambda s: -self.amp * np.cos(s - self.phase) + self.offset * s
        cuts = [a, b]
        r = -self.offset / self.amp
        if abs(r) <= 1.0:
            u1 = np.arcsin(r)
            for u in (u1, np.pi - u1):
                k0 = int(np.floor((a - self.phase - u) / TWO_PI)) - 1
                k1 = int(np.ceil((b - self.phase - u) / TWO_PI)) + 1
                for k in range(k0, k1 + 1):
                    z = self.phase + u + k * TWO_PI
                    if a < z < b:
                        cuts.append(z)
        cuts = sorted(cuts)
        return float(sum(abs(F(q) - F(p)) for p, q in zip(cuts[:-1], cuts[1:])))

    def signed_integral(self) -> float:
        F = lambda s: -self.amp * np.cos(s - self.phase) + self.offset * s
        return float(F(self.s1) - F(self.s0))


@dataclass
class CircleMeasure:
    """Signed measure on R/2piZ: atoms plus a piecewise sin+const density."""

    atoms: list[tuple[float, float]] = field(default_factory=list)
    pieces: list[Piece] = field(default_factory=list)
    pi_periodic: bool = False

    def __post_init__(self):
        self.atoms = [(float(_wrap(s)), float(w)) for s, w in self.atoms]
        self.pieces = sorted(self.pieces, key=lambda p: p.s0)

    # -- evaluation ---------------------------------------------------------
    def density(self, s) -> np.ndarray:
        s = _wrap(np.asarray(s, dtype=float))
        out = np.zeros_like(s)
        for p in self.pieces:
            sel = (s >= p.s0) & (s < p.s1)
            out[sel] = p.density(s[sel])
        return out

    def density_derivative(self, s) -> np.ndarray:
        s = _wrap(np.asarray(s, dtype=float))
        out = np.zeros_like(s)
        for p in self.pieces:
            sel = (s >= p.s0) & (s < p.s1)
            out[sel] = p.amp * np.cos(s[sel] - p.phase)
        return out

    # -- integrals ----------------------------------------------------------
    def total_variation(self) -> float:
        tv = sum(abs(w) for _, w in self.atoms)
        tv += sum(p.abs_integral() for p in self.pieces)
        return float(tv)

    def total_mass(self) -> float:
        mass = sum(w for _, w in self.atoms)
        mass += sum(p.signed_integral() for p in self.pieces)
        return float(mass)

    def integrate_against(self, f: Callable[[np.ndarray], np.ndarray]) -> float:
        """Integral of f against the measure (atoms plus density)."""
        total = sum(w * float(np.asarray(f(np.asarray(s)))) for s, w in self.atoms)
        for p in self.pieces:
            half = 0.5 * (p.s1 - p.s0)
            mid = 0.5 * (p.s0 + p.s1)
            s = mid + half * _GL_NODES
            total += half * float(np.sum(_GL_WEIGHTS * np.asarray(f(s)) * p.density(s)))
        return float(total)

    # -- algebra ------------------------------------------------------------
    def covered_length(self) -> float:
        return float(sum(p.s1 - p.s0 for p in self.pieces))

    def with_const(self, alpha: float) -> "CircleMeasure":
        """The measure plus alpha * (Lebesgue on the circle)."""
        if abs(self.covered_length() - TWO_PI) > 1e-9:
            raise ValueError("density pieces must cover the circle to add a constant")
        pieces = [Piece(p.s0, p.s1, p.amp, p.phase, p.offset + alpha) for p in self.pieces]
        return CircleMeasure(list(self.atoms), pieces, pi_periodic=False)

    def scaled(self, c: float) -> "CircleMeasure":
        atoms = [(s, c * w) for s, w in self.atoms]
        pieces = [Piece(p.s0, p.s1, c * p.amp, p.phase, c * p.offset) for p in self.pieces]
        return CircleMeasure(atoms, pieces, pi_periodic=self.pi_periodic)

    def shifted(self, s_bar: float) -> "CircleMeasure":
        """Pushforward under s -> s + s_bar (density becomes f(s - s_bar))."""
        atoms = [(_wrap(s + s_bar), w) for s, w in self.atoms]
        pieces = []
        for p in self.pieces:
            a, b = _wrap(p.s0 + s_bar), p.s1 + s_bar
            b = a + (p.s1 - p.s0)
            if b <= TWO_PI + 1e-15:
                pieces.append(Piece(a, min(b, TWO_PI), p.amp, _wrap(p.phase + s_bar), p.offset))
            else:
                ph = _wrap(p.phase + s_bar)
                pieces.append(Piece(a, TWO_PI, p.amp, ph, p.offset))
                pieces.append(Piece(0.0, b - TWO_PI, p.amp, ph, p.offset))
        return CircleMeasure(atoms, pieces, pi_periodic=self.pi_periodic)

    # -- serialization ------------------------------------------------------
    def to_json(self) -> dict:
        return {
            "atoms": [[s, w] for s, w in self.atoms],
            "pieces": [
                {"s0": p.s0, "s1": p.s1, "kind": "const" if p.amp == 0 else "sin",
                 "params": [p.amp, p.phase, p.offset]}
                for p in self.pieces
            ],
            "pi_periodic": self.pi_periodic,
        }

    @staticmethod
    def from_json(obj: dict) -> "CircleMeasure":
        atoms = [(s, w) for s, w in obj["atoms"]]
        pieces = [Piece(p["s0"], p["s1"], *p["params"]) for p in obj["pieces"]]
        return CircleMeasure(atoms, pieces, pi_periodic=obj.get("pi_periodic", False))


def _cover_with_zeros(pieces: list[Piece]) -> list[Piece]:
    """Insert zero-density pieces so the circle is fully covered."""
    pieces = sorted(pieces, key=lambda p: p.s0)
    out = []
    cursor = 0.0
    for p in pieces:
        if p.s0 > cursor + 1e-15:
            out.append(Piece(cursor, p.s0, 0.0, 0.0, 0.0))
        out.append(p)
        cursor = max(cursor, p.s1)
    if cursor < TWO_PI - 1e-15:
        out.append(Piece(cursor, TWO_PI, 0.0, 0.0, 0.0))
    return out


# ---------------------------------------------------------------------------
# explicit jump densities


def g_beta(beta: float, s) -> np.ndarray | float:
    """Unnormalized pi-periodic jump density with zero mean.

    On [0, pi]: (sin s - cos b) 1_{[pi/2-b, pi/2+b]}(s) - (2/pi)(sin b - b cos b).
    """
    if not (0.0 <= beta < np.pi):
        raise BetaOutOfRange(f"beta must lie in [0, pi), got {beta}")
    s = np.asarray(s, dtype=float)
    sig = np.mod(s, np.pi)
    hump = np.where((sig >= np.pi / 2 - beta) & (sig <= np.pi / 2 + beta), np.sin(sig) - np.cos(beta), 0.0)
    out = hump - (2.0 / np.pi) * (np.sin(beta) - beta * np.cos(beta))
    return float(out) if out.ndim == 0 else out


def _gbar_unnormalized(beta: float) -> CircleMeasure:
    if beta <= np.pi / 4:
        lo, hi = np.pi / 2 - beta, np.pi / 2 + beta
        pieces = [
            Piece(lo, hi, 1.0, 0.0, -np.cos(beta)),
            Piece(lo + np.pi, hi + np.pi, 1.0, np.pi, -np.cos(beta)),
        ]
        return CircleMeasure([], _cover_with_zeros(pieces), pi_periodic=True)
    lo, hi = np.pi / 2 - beta, np.pi / 2 + beta
    base = np.cos(beta) - np.sqrt(2.0) / 2.0
    pieces = [
        Piece(max(lo, 0.0), min(hi, np.pi), 1.0, 0.0, -np.sqrt(2.0) / 2.0),
        Piece(max(lo + np.pi, np.pi), min(hi + np.pi, TWO_PI), 1.0, np.pi, -np.sqrt(2.0) / 2.0),
    ]
    covered = _cover_with_zeros(pieces)
    out = [Piece(p.s0, p.s1, p.amp, p.phase, p.offset if p.amp != 0 else base) for p in covered]
    return CircleMeasure([], out, pi_periodic=True)


@lru_cache(maxsize=4096)
def c_beta(beta: float) -> float:
    """Normalization constant: c(beta) scales the raw density to unit TV."""
    if not (0.0 < beta < np.pi):
        raise BetaOutOfRange(f"beta must lie in (0, pi), got {beta}")
    if beta > np.pi / 2:
        return c_beta(np.pi - beta)
    tv = _gbar_unnormalized(beta).total_variation()
    return 1.0 / tv


def gbar_beta(beta: float) -> CircleMeasure:
    """Normalized pi-periodic jump density (total variation exactly 1)."""
    if not (0.0 < beta < np.pi):
        raise BetaOutOfRange(f"beta must lie in (0, pi), got {beta}")
    if beta > np.pi / 2:
        return gbar_beta(np.pi - beta)
    return _gbar_unnormalized(beta).scaled(c_beta(beta))


# ---------------------------------------------------------------------------
# minimal disintegrations


@dataclass(frozen=True)
class Jump:
    beta: float
    s_bar: float


@dataclass(frozen=True)
class NonJump:
    s_bar: float
    sign: int = 1


def minimal_disintegration(kind: Jump | NonJump) -> CircleMeasure:
    """Unit-TV angular disintegration of the minimal kinetic measure."""
    if isinstance(kind, Jump):
        return gbar_beta(kind.beta).shifted(kind.s_bar)
    s, sgn = kind.s_bar, float(np.sign(kind.sign) or 1.0)
    atoms = [(s - np.pi / 2, 0.5 * sgn), (s + np.pi / 2, 0.5 * sgn)]
    return CircleMeasure(atoms, _cover_with_zeros([]), pi_periodic=True)


def sigma_zero_disintegration(s_bar: float, sign: int = 1) -> CircleMeasure:
    """Zero-average normalization: +-(1/4)(delta_s + delta_{s+pi} - L1/pi)."""
    sgn = float(np.sign(sign) or 1.0)
    atoms = [(s_bar, 0.25 * sgn), (s_bar + np.pi, 0.25 * sgn)]
    pieces = [Piece(0.0, TWO_PI, 0.0, 0.0, -sgn / (4.0 * np.pi))]
    return CircleMeasure(atoms, pieces, pi_periodic=True)


def minimality_check(mu: CircleMeasure, alphas: Iterable[float], tol: float = 1e-10) -> bool:
    """True iff adding any sampled constant density does not lower the TV."""
    tv0 = mu.total_variation()
    if abs(tv0 - 1.0) > 1e-10:
        raise ValueError(f"measure must have unit total variation, got {tv0}")
    return all(mu.with_const(a).total_variation() >= tv0 - tol for a in alphas)


# ---------------------------------------------------------------------------
# jump identity


def jump_identity_check(beta: float, gen: EntropyGenerator) -> tuple[float, float]:
    """Both sides of e1.(Phi(e^{ib}) - Phi(e^{-ib})) = -int g_b psi' ds.

    The left side comes from the integrated entropy map, the right side
    from adaptive quadrature of the closed-form density against psi';
    the two paths share no code.
    """
    if not (0.0 <= beta <= np.pi / 2):
        raise BetaOutOfRange(f"identity requires beta in [0, pi/2], got {beta}")
    if not gen.pi_periodic:
        raise ValueError("generator must be pi-periodic")
    phi = entropy_from_generator(gen)
    lhs = float(phi.eval_circle(np.asarray(beta))[0] - phi.eval_circle(np.asarray(-beta))[0])
    dpsi = gen.psi.derivative()
    breaks = sorted({np.pi / 2 - beta, np.pi / 2 + beta, 3 * np.pi / 2 - beta, 3 * np.pi / 2 + beta})
    val, _ = quad(lambda s: g_beta(beta, s) * float(dpsi(np.asarray(s))), 0.0, TWO_PI,
                  points=breaks, limit=200, epsabs=1e-12, epsrel=1e-12)
    return lhs, -val


# ---------------------------------------------------------------------------
# chi sampling


@dataclass
class KineticSample:
    grid: Grid
    s_values: np.ndarray
    chi: np.ndarray  # uint8, shape (nx, ny, N_s)

    def measure_per_node(self) -> np.ndarray:
        """Angular measure of {chi = 1} per node (bin-counting estimate)."""
        return self.chi.sum(axis=-1) * (TWO_PI / self.s_values.size)


def chi_sample(m: VectorField, n_s: int, tie_tol: float = 1e-14) -> KineticSample:
    """Exact thresholding chi = 1{e^{is} . m > 0}; ties count as 0."""
    if n_s % 2 != 0:
        raise ValueError("n_s must be even so s and s + pi are both sampled")
    s = np.arange(n_s) * (TWO_PI / n_s)
    dots = np.multiply.outer(m.values[..., 0], np.cos(s)) + np.multiply.outer(m.values[..., 1], np.sin(s))
    chi = (dots > tie_tol).astype(np.uint8)
    return KineticSample(m.grid, s, chi)


# ---------------------------------------------------------------------------
# ridge sigma field


@dataclass
class RidgeSigmaField:
    """Node-indexed angular measures supported on the ridge cells.

    ``rho`` holds the per-cell calibration factor: the scalar multiple of
    the unit-TV jump density whose axis-frame pairing reproduces the
    geometric jump bracket of the traces.  It is computed, not assumed,
    and comes out negative for this field's jump orientation (the ridge
    bisector sits a quarter turn from the density's reference axis).
    """

    grid: Grid
    cells: dict[tuple[int, int], CircleMeasure]
    rho: dict[tuple[int, int], float]
    seg_length: dict[tuple[int, int], float]
    beta: dict[tuple[int, int], float]

    def total_variation(self) -> float:
        return sum(m.total_variation() for m in self.cells.values())


def ridge_sigma_field(domain: Domain, grid: Grid) -> RidgeSigmaField:
    """Calibrated minimal-measure candidate concentrated on the ridge row."""
    ridge = ridge_set(domain)
    lo, hi = ridge.p_minus[0], ridge.p_plus[0]
    if hi <= lo:
        return RidgeSigmaField(grid, {}, {}, {}, {})
    pts = grid.nodes
    j0 = int(np.argmin(np.abs(pts[0, :, 1])))
    xs = pts[:, j0, 0]
    h = grid.h
    phi_e = frame_entropy_map(Frame(0.0))
    dpsi_e = frame_generator(Frame(0.0)).psi.derivative()

    cells: dict[tuple[int, int], CircleMeasure] = {}
    rho: dict[tuple[int, int], float] = {}
    seg: dict[tuple[int, int], float] = {}
    betas: dict[tuple[int, int], float] = {}
    eps_in = 1e-9 * max(1.0, hi - lo)
    for i in range(grid.nx):
        a = max(xs[i] - h / 2, lo)
        b = min(xs[i] + h / 2, hi)
        if b - a <= 0:
            continue
        xmid = np.clip(0.5 * (a + b), lo + eps_in, hi - eps_in)
        data = ridge.data(np.asarray([xmid]))
        beta = float(data["beta"][0])
        sbar = float(data["sbar"][0])
        base = gbar_beta(beta).shifted(sbar)
        bracket = jump_bracket(phi_e, data["m_plus"][0], data["m_minus"][0], data["n"][0])
        pairing = base.integrate_against(lambda s: dpsi_e(s))
        r = -bracket / pairing
        cells[(i, j0)] = base.scaled(r * (b - a))
        rho[(i, j0)] = r
        seg[(i, j0)] = b - a
        betas[(i, j0)] = beta
    return RidgeSigmaField(grid, cells, rho, seg, betas)


# ---------------------------------------------------------------------------
# kinetic residual


@dataclass(frozen=True)
class CompactBump:
    """C^infty bump exp(-r^2 / (R^2 - r^2)) supported in the radius-R disk."""

    center: tuple[float, float]
    radius: float

    def value(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        dx = x[..., 0] - self.center[0]
        dy = x[..., 1] - self.center[1]
        r2 = dx * dx + dy * dy
        R2 = self.radius**2
        inside = r2 < R2
        denom = np.where(inside, R2 - r2, 1.0)
        return np.where(inside, np.exp(-r2 / denom), 0.0)

    def gradient(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        dx = x[..., 0] - self.center[0]
        dy = x[..., 1] - self.center[1]
        r2 = dx * dx + dy * dy
        R2 = self.radius**2
        inside = r2 < R2
        denom = np.where(inside, R2 - r2, 1.0)
        f = np.where(inside, np.exp(-r2 / denom), 0.0)
        fac = np.where(inside, -2.0 * R2 / denom**2, 0.0) * f
        return np.stack([fac * dx, fac * dy], axis=-1)


@dataclass
class TestBank:
    bumps: list[CompactBump]
    generators: list[EntropyGenerator]


PSI_SIN2 = TrigPoly.from_harmonics(sin={2: 1.0})
PSI_COS2 = TrigPoly.from_harmonics(cos={2: 1.0})
PSI_SIN4 = TrigPoly.from_harmonics(sin={4: 1.0})
PSI_COS4 = TrigPoly.from_harmonics(cos={4: 1.0})


def default_test_bank(domain: Domain, grid: Grid) -> TestBank:
    """Ridge-centered and off-ridge bumps, low even-harmonic generators.

    Bump supports are sized from the signed distance so they stay inside
    the extended domain; otherwise the weak identity picks up boundary
    flux that has nothing to do with the kinetic measure.
    """
    from .geometry import signed_distance

    ridge = ridge_set(domain)
    lo, hi = ridge.p_minus[0], ridge.p_plus[0]
    span = max(hi - lo, 4 * grid.h)
    if hi > lo:
        centers = [(lo + f * (hi - lo), 0.0) for f in (0.25, 0.5, 0.75)]
    else:
        centers = [(0.5 * (lo + hi), 0.0)]
    depth = signed_distance(domain, np.array([0.5 * (lo + hi), 0.0]))
    centers.append((0.5 * (lo + hi), 0.45 * depth))
    bumps = []
    for c in centers:
        room = signed_distance(domain, np.asarray(c)) + domain.delta
        bumps.append(CompactBump(c, min(0.5 * span, 0.9 * room)))
    gens = [EntropyGenerator(p) for p in (PSI_SIN2, PSI_COS2, PSI_SIN4, PSI_COS4)]
    return TestBank(bumps, gens)


@dataclass
class KineticResidualReport:
    max_residual: float
    entries: list[dict]


def kinetic_residual(m: VectorField, sigma_field: RidgeSigmaField | dict, bank: TestBank) -> KineticResidualReport:
    """Max over the bank of |int Phi(m).grad(zeta) - int zeta psi' dsigma|."""
    grid = m.grid
    cells = sigma_field.cells if isinstance(sigma_field, RidgeSigmaField) else sigma_field
    active = grid.active()
    pts = grid.nodes
    entries = []
    worst = 0.0
    cell_pts = {key: pts[key[0], key[1]] for key in cells}
    for gen in bank.generators:
        phi = entropy_from_generator(gen)
        phi_m = phi.eval_vectors(m.values)
        dpsi = gen.psi.derivative()
        pairings = {key: mu.integrate_against(lambda s: dpsi(s)) for key, mu in cells.items()}
        for bump in bank.bumps:
            gz = bump.gradient(pts)
            lhs = grid.h**2 * float(np.sum(np.sum(phi_m * gz, axis=-1)[active]))
            rhs = sum(float(bump.value(cell_pts[key])) * pairings[key] for key in cells)
            res = abs(lhs - rhs)
            worst = max(worst, res)
            entries.append({
                "bump_center": list(bump.center),
                "generator": _gen_label(gen),
                "lhs": lhs,
                "rhs": rhs,
                "residual": res,
            })
    return KineticResidualReport(worst, entries)


def _gen_label(gen: EntropyGenerator) -> str:
    terms = []
    for k in range(1, gen.psi.n + 1):
        c = gen.psi.harmonic(k)
        if abs(c) > 1e-14:
            if abs(c.real) > 1e-14:
                terms.append(f"cos{k}")
            if abs(c.imag) > 1e-14:
                terms.append(f"sin{k}")
    return "+".join(terms) or "0"


# ---------------------------------------------------------------------------
# sign structure


def derivative_min_on_arcs(mu: CircleMeasure, s_shift: float = 0.0) -> float:
    """Min of the density derivative over (0, pi/2) u (pi, 3pi/2), shifted.

    Atoms are ignored; only the piecewise-smooth density is examined.
    Candidate minimizers are arc/piece endpoints and interior extrema of
    the shifted sine, so the minimum is exact.
    """
    arcs = []
    for a0, a1 in ((0.0, np.pi / 2), (np.pi, 3 * np.pi / 2)):
        a0, a1 = a0 + s_shift, a1 + s_shift
        a0w = _wrap(a0)
        arcs.append((a0w, a0w + (a1 - a0)))
    best = np.inf
    for p in mu.pieces:
        for copy in (0.0, TWO_PI):
            s0, s1 = p.s0 + copy, p.s1 + copy
            for a0, a1 in arcs:
                lo, hi = max(s0, a0), min(s1, a1)
                if hi <= lo:
                    continue
                cands = [lo, hi]
                k0 = int(np.floor((lo - p.phase) / np.pi))
                for k in range(k0, k0 + 3):
                    z = p.phase + k * np.pi
                    if lo < z < hi:
                        cands.append(z)
                vals = [p.amp * np.cos(c - p.phase) for c in cands]
                best = min(best, min(vals))
    return float(best if np.isfinite(best) else 0.0)


@dataclass
class SignStructureReport:
    min_margin: float
    per_cell_margin: dict
    vertical_normal_fraction: float
    n_cells: int

    def to_json(self) -> dict:
        return {
            "min_margin": self.min_margin,
            "vertical_normal_fraction": self.vertical_normal_fraction,
            "n_cells": self.n_cells,
        }


def sign_structure_report(sigma_field: RidgeSigmaField | dict, ridge: RidgeSet | None = None,
                          s_shift: float = 0.0) -> SignStructureReport:
    """Nonnegativity margins of d/ds(sigma_x) on the two quadrant arcs.

    Arcs are taken in absolute angular coordinates (optionally shifted).
    Also reports the fraction of ridge normals aligned with the vertical
    axis, the axis-alignment census for the jump set.
    """
    cells = sigma_field.cells if isinstance(sigma_field, RidgeSigmaField) else sigma_field
    per_cell = {key: derivative_min_on_arcs(mu, s_shift) for key, mu in cells.items()}
    min_margin = min(per_cell.values()) if per_cell else 0.0
    vertical = 1.0
    if ridge is not None and ridge.length > 0:
        xs = np.linspace(ridge.p_minus[0], ridge.p_plus[0], 257)[1:-1]
        n = ridge.data(xs)["n"]
        aligned = np.abs(np.abs(n[..., 1]) - 1.0) < 1e-9
        vertical = float(np.mean(aligned))
    return SignStructureReport(min_margin, per_cell, vertical, len(cells))
