"""Velocity-space machinery: truncated grids, Maxwellians, moments, projections.

The velocity domain is the box [-L, L)^dv sampled on a uniform N^dv grid
(FFT-style nodes, -L included, +L excluded).  L >= 6 keeps the Maxwellian
mass loss below 1e-8; the trapezoidal sum on this grid is spectrally
accurate for Gaussian-decaying integrands.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


class GridError(ValueError):
    """Velocity grid or field configuration rejected."""


def gauss_legendre(n: int) -> tuple[np.ndarray, np.ndarray]:
    """n-point Gauss-Legendre rule on [-1, 1] (weights sum to 2)."""
    return np.polynomial.legendre.leggauss(n)


@dataclass(frozen=True)
class VelocityGrid:
    """Uniform truncation of velocity space.

    nodes per axis: v_i = -L + i (2L/N); cell volume (2L/N)^dv.
    """

    dv: int
    N: int
    L: float

    def __post_init__(self):
        if self.dv not in (2, 3):
            raise GridError(f"velocity dimension must be 2 or 3, got {self.dv}")
        if self.N < 4 or self.N % 2 != 0:
            raise GridError(f"N must be even and >= 4, got {self.N}")
        if self.L < 6.0:
            raise GridError(
                f"L = {self.L} too small: need L >= 6 to capture Maxwellian mass")

    @property
    def h(self) -> float:
        return 2.0 * self.L / self.N

    @property
    def vol(self) -> float:
        return self.h ** self.dv

    @property
    def axis(self) -> np.ndarray:
        return -self.L + self.h * np.arange(self.N)

    @property
    def shape(self) -> tuple:
        return (self.N,) * self.dv

    @property
    def size(self) -> int:
        return self.N ** self.dv

    def meshgrid(self) -> tuple[np.ndarray, ...]:
        return tuple(np.meshgrid(*([self.axis] * self.dv), indexing="ij"))

    def speed_sq(self) -> np.ndarray:
        vs = self.meshgrid()
        return sum(v ** 2 for v in vs)


@dataclass(frozen=True)
class SphereRule:
    """Quadrature on the unit sphere of the velocity space.

    Directions are stored relative to a reference frame whose first axis is
    the relative-velocity direction: the polar cosine of node a is the
    collision deviation cosine eta_a, so the angular kernel is sampled at
    fixed nodes.  Weights sum to 2*pi (dv = 2) or 4*pi (dv = 3).
    """

    dv: int
    eta: np.ndarray
    phi: np.ndarray
    weights: np.ndarray

    @property
    def size(self) -> int:
        return self.weights.shape[0]

    def directions(self, ref: np.ndarray | None = None) -> np.ndarray:
        """Absolute unit vectors for a reference direction (default first axis)."""
        if ref is None:
            ref = np.zeros(self.dv)
            ref[0] = 1.0
        ref = np.asarray(ref, dtype=float)
        ref = ref / np.linalg.norm(ref)
        if self.dv == 2:
            perp = np.array([-ref[1], ref[0]])
            return (self.eta[:, None] * ref[None, :]
                    + np.sin(self.phi)[:, None] * perp[None, :])
        helper = np.array([0.0, 0.0, 1.0]) if abs(ref[2]) < 0.9 else np.array([1.0, 0.0, 0.0])
        e1 = np.cross(ref, helper)
        e1 /= np.linalg.norm(e1)
        e2 = np.cross(ref, e1)
        sth = np.sqrt(np.maximum(1.0 - self.eta ** 2, 0.0))
        return (self.eta[:, None] * ref[None, :]
                + (sth * np.cos(self.phi))[:, None] * e1[None, :]
                + (sth * np.sin(self.phi))[:, None] * e2[None, :])


def sphere_rule(dv: int, n: int, n_polar: int = 8) -> SphereRule:
    """Deviation-angle quadrature rule.

    dv = 2: n uniform angles on the circle (exact on trig degree n-1).
    dv = 3: product of an n_polar-point Gauss-Legendre rule in the polar
    cosine with n uniform azimuths.
    """
    if dv == 2:
        phi = 2.0 * np.pi * np.arange(n) / n
        return SphereRule(dv=2, eta=np.cos(phi), phi=phi,
                          weights=np.full(n, 2.0 * np.pi / n))
    if dv == 3:
        xg, wg = gauss_legendre(n_polar)
        phi = 2.0 * np.pi * np.arange(n) / n
        eta = np.repeat(xg, n)
        ph = np.tile(phi, n_polar)
        w = np.repeat(wg, n) * (2.0 * np.pi / n)
        return SphereRule(dv=3, eta=eta, phi=ph, weights=w)
    raise GridError(f"velocity dimension must be 2 or 3, got {dv}")


def spherical_design(name: str = "icosahedron") -> np.ndarray:
    """Unit vectors of a polyhedral spherical design (absolute frame, dv = 3)."""
    if name == "octahedron":
        eye = np.eye(3)
        return np.concatenate([eye, -eye])
    if name == "icosahedron":
        g = (1.0 + np.sqrt(5.0)) / 2.0
        pts = []
        for s1 in (-1.0, 1.0):
            for s2 in (-1.0, 1.0):
                pts += [(0.0, s1, s2 * g), (s1, s2 * g, 0.0), (s2 * g, 0.0, s1)]
        pts = np.asarray(pts)
        return pts / np.linalg.norm(pts, axis=1, keepdims=True)
    raise GridError(f"unknown spherical design {name!r}")


@dataclass(frozen=True)
class Field:
    """Scalar field on a velocity grid with a semantic role tag."""

    grid: VelocityGrid
    values: np.ndarray
    role: str = "density"

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.shape != self.grid.shape:
            raise GridError(f"field shape {vals.shape} does not match grid {self.grid.shape}")
        if not np.all(np.isfinite(vals)):
            raise GridError("field contains non-finite values")
        if self.role == "density" and np.min(vals) < 0.0:
            raise GridError(f"density field is negative (min = {np.min(vals):.3e})")
        object.__setattr__(self, "values", vals)

    def l2(self) -> float:
        return float(np.sqrt(np.sum(self.values ** 2) * self.grid.vol))


def save_field(f: Field, path: str | Path) -> None:
    """Row-major float64 little-endian binary with a JSON sidecar."""
    path = Path(path)
    f.values.astype("<f8").tofile(path)
    sidecar = {"d_v": f.grid.dv, "N": f.grid.N, "L": f.grid.L, "role": f.role}
    path.with_suffix(path.suffix + ".json").write_text(json.dumps(sidecar, sort_keys=True))


def load_field(path: str | Path) -> Field:
    path = Path(path)
    meta = json.loads(path.with_suffix(path.suffix + ".json").read_text())
    grid = VelocityGrid(dv=meta["d_v"], N=meta["N"], L=meta["L"])
    vals = np.fromfile(path, dtype="<f8").reshape(grid.shape)
    return Field(grid=grid, values=vals, role=meta["role"])


@dataclass(frozen=True)
class MaxwellianRef:
    """Global Maxwellian on a grid with its orthonormal collision invariants.

    phi_i, i = 1..dv+2, is the Gram-Schmidt orthonormalization of
    {sqrt(M), v_1 sqrt(M), ..., v_dv sqrt(M), |v|^2 sqrt(M)} in the discrete
    L2_v inner product; their span is the null space of the linearized
    collision operator.
    """

    grid: VelocityGrid
    M: np.ndarray
    sqrt_M: np.ndarray
    invariants: np.ndarray

    @property
    def n_invariants(self) -> int:
        return self.grid.dv + 2


def maxwellian(grid: VelocityGrid, capture_tol: float = 1e-8) -> MaxwellianRef:
    """Global equilibrium (2 pi)^(-dv/2) exp(-|v|^2/2) and its invariant frame.

    The build check bounds the Maxwellian mass outside the box analytically;
    the accuracy of the discrete mass itself is a grid-resolution property
    tested separately.
    """
    from math import erf

    loss = 1.0 - erf(grid.L / np.sqrt(2.0)) ** grid.dv
    if loss > capture_tol:
        raise GridError(
            f"box loses Maxwellian mass {loss:.3e} (> {capture_tol}); increase L")
    sq = grid.speed_sq()
    M = np.exp(-0.5 * sq) / (2.0 * np.pi) ** (grid.dv / 2.0)
    sqrt_M = np.sqrt(M)
    vs = grid.meshgrid()
    raw = [sqrt_M] + [v * sqrt_M for v in vs] + [sq * sqrt_M]
    invariants = np.empty((len(raw),) + grid.shape)
    for i, r in enumerate(raw):
        v = r.copy()
        for j in range(i):
            v -= np.sum(v * invariants[j]) * grid.vol * invariants[j]
        nrm = np.sqrt(np.sum(v ** 2) * grid.vol)
        invariants[i] = v / nrm
    return MaxwellianRef(grid=grid, M=M, sqrt_M=sqrt_M, invariants=invariants)


def moments(f: Field) -> tuple[float, np.ndarray, float]:
    """Density, bulk velocity, and temperature of a distribution."""
    grid = f.grid
    rho = float(np.sum(f.values) * grid.vol)
    if rho <= 0.0:
        raise GridError(f"degenerate density rho = {rho:.3e}")
    vs = grid.meshgrid()
    u = np.array([float(np.sum(f.values * v) * grid.vol) for v in vs]) / rho
    pec = sum((v - ui) ** 2 for v, ui in zip(vs, u))
    T = float(np.sum(f.values * pec) * grid.vol) / (grid.dv * rho)
    return rho, u, T


def project_kernel(h: np.ndarray, ref: MaxwellianRef) -> tuple[np.ndarray, np.ndarray]:
    """Split h into its macroscopic part (span of the invariants) and h_perp."""
    h = np.asarray(h, dtype=float)
    coeffs = np.tensordot(ref.invariants, h, axes=(tuple(range(1, h.ndim + 1)),
                                                   tuple(range(h.ndim)))) * ref.grid.vol
    macro = np.tensordot(coeffs, ref.invariants, axes=(0, 0))
    return macro, h - macro


def lambda_norm(h: np.ndarray, grid: VelocityGrid, gamma: float) -> float:
    """Coercivity norm ||h (1+|v|)^(gamma/2)||_{L2_v}; plain L2 for gamma = 0."""
    h = np.asarray(h, dtype=float)
    if gamma == 0.0:
        return float(np.sqrt(np.sum(h ** 2) * grid.vol))
    w = (1.0 + np.sqrt(grid.speed_sq())) ** gamma
    return float(np.sqrt(np.sum(h ** 2 * w) * grid.vol))
