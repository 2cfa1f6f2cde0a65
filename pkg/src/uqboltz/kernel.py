"""Uncertain collision kernel B = C_phi |v-v*|^gamma (b0(eta) + b1(eta) z).

The angular parts b0, b1 are functions of eta = cos(theta) on [-1, 1].
This module holds the kernel representation, the Galerkin coupling tensors
in the random variable, and executable forms of every kernel hypothesis:
nonnegativity, the gap condition on (b0, b1), the Grad-cutoff infimum, the
legacy off-diagonal smallness diagnostic, and the per-angle matrix bound.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .chaos import OrthoBasis, QuadratureRule


class KernelError(ValueError):
    """Kernel or tensor configuration rejected."""


@dataclass(frozen=True)
class AngularPart:
    """b0 or b1 as a constant, a polynomial in eta, or a table on an eta grid."""

    kind: str = "constant"
    coeffs: tuple = (1.0,)
    eta_grid: tuple = ()
    values: tuple = ()

    def __post_init__(self):
        if self.kind not in ("constant", "poly", "table"):
            raise KernelError(f"unknown angular kind {self.kind!r}")
        if self.kind == "table" and len(self.eta_grid) != len(self.values):
            raise KernelError("angular table needs matching eta_grid and values")

    def __call__(self, eta) -> np.ndarray:
        eta = np.asarray(eta, dtype=float)
        if self.kind == "table":
            return np.interp(eta, self.eta_grid, self.values)
        out = np.zeros_like(eta)
        for c in reversed(self.coeffs):
            out = out * eta + c
        return out

    def deriv_bound(self, grid: np.ndarray) -> float:
        """sup |d b / d eta| estimated on a grid."""
        if self.kind == "constant":
            return 0.0
        vals = self(grid)
        return float(np.max(np.abs(np.gradient(vals, grid))))


def default_angle_grid(n: int = 64) -> np.ndarray:
    """Uniform eta = cos(theta) grid on [-1, 1] for pointwise kernel checks."""
    return np.linspace(-1.0, 1.0, n)


@dataclass(frozen=True)
class KernelSpec:
    """Collision kernel with its bound constants.

    Nonnegativity of b(eta, z) = b0 + b1 z is enforced at z = +-Cz only; b is
    affine in z so that suffices.  Bound constants are computed on the angle
    grid at construction.
    """

    gamma: float = 0.0
    c_phi: float = 1.0
    b0: AngularPart = field(default_factory=AngularPart)
    b1: AngularPart = field(default_factory=lambda: AngularPart(coeffs=(0.0,)))
    cz: float = 1.0
    angle_grid: tuple = field(default_factory=lambda: tuple(default_angle_grid()))
    c_b: float = field(default=0.0)
    c_b_tilde: float = field(default=0.0)
    c_b_star: float = field(default=0.0)

    def __post_init__(self):
        if not 0.0 <= self.gamma <= 1.0:
            raise KernelError(f"gamma must lie in [0, 1], got {self.gamma}")
        if self.c_phi <= 0.0:
            raise KernelError(f"c_phi must be positive, got {self.c_phi}")
        grid = np.asarray(self.angle_grid, dtype=float)
        b0v = self.b0(grid)
        b1v = self.b1(grid)
        lo = np.minimum(b0v - self.cz * b1v, b0v + self.cz * b1v)
        if np.min(lo) < 0.0:
            raise KernelError(
                "collision kernel is negative somewhere on the angle grid "
                f"(min b = {np.min(lo):.3e} at |z| = Cz)")
        cb = float(np.max(np.abs(b0v) + self.cz * np.abs(b1v)))
        object.__setattr__(self, "c_b", cb)
        object.__setattr__(self, "c_b_tilde",
                           self.b0.deriv_bound(grid) + self.cz * self.b1.deriv_bound(grid))
        object.__setattr__(self, "c_b_star",
                           max(cb, float(np.max(np.abs(b1v)))))

    def b(self, eta, z: float) -> np.ndarray:
        return self.b0(eta) + self.b1(eta) * z

    def kinetic(self, r) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        if self.gamma == 0.0:
            return np.full_like(r, self.c_phi)
        return self.c_phi * r ** self.gamma


@dataclass(frozen=True)
class GalerkinTensors:
    """Couplings of the chaos basis: c_kj = <z psi_k psi_j>, e/f triple tensors."""

    c: np.ndarray
    e: np.ndarray
    f: np.ndarray
    K: int
    basis_kind: str
    rule_size: int


def pair_coupling(basis: OrthoBasis, rule: QuadratureRule) -> np.ndarray:
    """c_kj = int z psi_k psi_j dpi; symmetric and tridiagonal.

    Requires quadrature exactness >= 2K-1 (integrand degree 2(K-1)+1).
    """
    need = 2 * basis.K - 1
    if rule.exactness < need:
        raise KernelError(
            f"pair coupling needs exactness >= {need}, rule has {rule.exactness}")
    psi = basis.eval_all(rule.nodes)
    wz = rule.weights * rule.nodes
    return (psi * wz) @ psi.T


def triple_tensors(basis: OrthoBasis, rule: QuadratureRule) -> tuple[np.ndarray, np.ndarray]:
    """e_kij = <psi_k psi_i psi_j>, f_kij = <z psi_k psi_i psi_j>, fully symmetric."""
    need = 3 * (basis.K - 1) + 1
    if rule.exactness < need:
        raise KernelError(
            f"triple tensors need exactness >= {need}, rule has {rule.exactness}")
    psi = basis.eval_all(rule.nodes)
    e = np.einsum("km,im,jm,m->kij", psi, psi, psi, rule.weights)
    f = np.einsum("km,im,jm,m->kij", psi, psi, psi, rule.weights * rule.nodes)
    return e, f


def assemble_tensors(basis: OrthoBasis, rule: QuadratureRule) -> GalerkinTensors:
    e, f = triple_tensors(basis, rule)
    return GalerkinTensors(c=pair_coupling(basis, rule), e=e, f=f, K=basis.K,
                           basis_kind=basis.measure.kind, rule_size=rule.nodes.shape[0])


@dataclass(frozen=True)
class GapCondition:
    """Margin D(eta) = b0 - (2^q + 2)|b1| Cz of the kernel gap condition."""

    q: float
    eta: np.ndarray
    margin: np.ndarray
    d_min: float
    passed: bool


def check_gap_condition(kernel: KernelSpec, q: float,
                        angle_grid: np.ndarray | None = None) -> GapCondition:
    """Pointwise margin of the gap condition; passes iff min_eta D(eta) > 0."""
    if q <= 0.0:
        raise KernelError(f"weight exponent q must be positive, got {q}")
    eta = np.asarray(angle_grid if angle_grid is not None else kernel.angle_grid,
                     dtype=float)
    margin = kernel.b0(eta) - (2.0 ** q + 2.0) * np.abs(kernel.b1(eta)) * kernel.cz
    d_min = float(np.min(margin))
    return GapCondition(q=q, eta=eta, margin=margin, d_min=d_min, passed=d_min > 0.0)


def check_grad_cutoff(angular, dv: int = 2, n_quad: int = 256,
                      n_pairs: int = 64) -> float:
    """Numerical infimum of the Grad-cutoff condition for an angular function.

    Evaluates inf over direction pairs (s1, s2) of int min(g(s1.s3), g(s2.s3)) ds3
    over the unit sphere of the velocity space.  By rotation invariance the
    integral depends only on the angle between s1 and s2, which is sampled
    uniformly on [0, pi].
    """
    deltas = np.linspace(0.0, np.pi, n_pairs)
    if dv == 2:
        phi = 2.0 * np.pi * np.arange(n_quad) / n_quad
        w = 2.0 * np.pi / n_quad
        best = np.inf
        for d in deltas:
            a = angular(np.cos(phi))
            b = angular(np.cos(phi - d))
            best = min(best, w * float(np.sum(np.minimum(a, b))))
        return best
    if dv == 3:
        # product rule on S^2: Gauss-Legendre in polar cosine, uniform azimuth
        from .velocity import gauss_legendre
        xg, wg = gauss_legendre(n_quad // 8 if n_quad >= 64 else 8)
        nphi = 32
        phi = 2.0 * np.pi * np.arange(nphi) / nphi
        sth = np.sqrt(np.maximum(1.0 - xg ** 2, 0.0))
        s3 = np.stack([np.outer(sth, np.cos(phi)).ravel(),
                       np.outer(sth, np.sin(phi)).ravel(),
                       np.outer(xg, np.ones(nphi)).ravel()], axis=1)
        w3 = np.outer(wg, np.full(nphi, 2.0 * np.pi / nphi)).ravel()
        best = np.inf
        for d in deltas:
            s1 = np.array([0.0, 0.0, 1.0])
            s2 = np.array([np.sin(d), 0.0, np.cos(d)])
            a = angular(s3 @ s1)
            b = angular(s3 @ s2)
            best = min(best, float(np.sum(w3 * np.minimum(a, b))))
        return best
    raise KernelError(f"velocity dimension must be 2 or 3, got {dv}")


@dataclass(frozen=True)
class OffdiagReport:
    """Diagnostic of the legacy order-epsilon coupling bound |b1(eta) c_kj| <= |b1| Cz."""

    max_coupling: float
    bound: float
    ratio: float
    order_one: bool


def offdiag_bound_check(kernel: KernelSpec, c: np.ndarray,
                        order_one_threshold: float = 0.1) -> OffdiagReport:
    """Check max_{k != j, eta} |b1(eta) c_kj| against max|b1| Cz.

    This reproduces the bound the old analysis needed; the flag marks kernels
    whose random perturbation is of order one rather than order epsilon.
    """
    eta = np.asarray(kernel.angle_grid, dtype=float)
    b1max = float(np.max(np.abs(kernel.b1(eta))))
    off = c - np.diag(np.diag(c))
    max_coupling = b1max * float(np.max(np.abs(off))) if c.shape[0] > 1 else 0.0
    bound = b1max * kernel.cz
    ratio = max_coupling / bound if bound > 0.0 else 0.0
    return OffdiagReport(max_coupling=max_coupling, bound=bound, ratio=ratio,
                         order_one=b1max > order_one_threshold)


def angular_gram(kernel: KernelSpec, basis: OrthoBasis, rule: QuadratureRule,
                 eta) -> np.ndarray:
    """S-tilde(eta) = int (b0 + b1 z) psi_k psi_j dpi by direct quadrature.

    Reference implementation used to cross-check the closed form
    b0(eta) delta_kj + b1(eta) c_kj.
    """
    psi = basis.eval_all(rule.nodes)
    eta = np.atleast_1d(np.asarray(eta, dtype=float))
    out = np.empty((eta.shape[0], basis.K, basis.K))
    for m, e in enumerate(eta):
        bz = kernel.b0(e) + kernel.b1(e) * rule.nodes
        out[m] = (psi * (rule.weights * bz)) @ psi.T
    return out


def term_a_min_eig(c: np.ndarray, kernel: KernelSpec, q: float,
                   angle_grid: np.ndarray | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Per-angle smallest eigenvalue of sym(W), W_kj = (k/j)^q (b0 d_kj + b1 c_kj).

    Returns (eta, lambda_min(eta)).  Under the gap condition the matrix bound
    guarantees lambda_min(eta) >= D(eta).
    """
    K = c.shape[0]
    eta = np.asarray(angle_grid if angle_grid is not None else kernel.angle_grid,
                     dtype=float)
    ks = np.arange(1, K + 1, dtype=float)
    ratio = (ks[:, None] / ks[None, :]) ** q
    sym_c = 0.5 * (ratio + ratio.T) * c
    b0v = kernel.b0(eta)
    b1v = kernel.b1(eta)
    lam = np.empty(eta.shape[0])
    for m in range(eta.shape[0]):
        w = b0v[m] * np.eye(K) + b1v[m] * sym_c
        try:
            lam[m] = np.linalg.eigvalsh(w)[0]
        except np.linalg.LinAlgError as exc:  # pragma: no cover
            raise KernelError(f"eigensolve failed at eta={eta[m]}: W=\n{w}") from exc
    return eta, lam
