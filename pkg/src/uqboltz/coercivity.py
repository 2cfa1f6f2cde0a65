"""Numerical certification of the spectral gap of the linearized SG operator.

Everything here runs in two complementary discretizations:

* a polynomial laboratory: test fluctuations are polynomials times sqrt(M),
  integrated by tensor Gauss-Hermite rules that are exact for Maxwell
  molecules, so the four change-of-variables forms of the weighted
  quadratic form (Term I) can be compared at rounding level;
* a velocity-grid operator: the symmetric Galerkin matrix of the coupled
  SG collision operator, whose eigendecomposition yields the null space
  (collision invariants in every chaos mode) and the spectral gap.

The gap condition on (b0, b1) makes the per-angle coupling matrix positive
semidefinite, which forces the quadratic form to be nonpositive; that is
the mechanism this module verifies without any smallness assumption on b1.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .chaos import OrthoBasis
from .collision import linearized_direct_matrix, linearized_form_matrix
from .kernel import GalerkinTensors, KernelSpec, check_gap_condition, term_a_min_eig
from .velocity import MaxwellianRef, SphereRule, VelocityGrid, maxwellian, sphere_rule

FORM_NAMES = ("E1", "E2", "E3", "E4", "E5")


class LabError(ValueError):
    """Laboratory configuration rejected."""


def gauss_hermite_maxwell(order: int) -> tuple[np.ndarray, np.ndarray]:
    """Nodes/weights with sum_m w_m f(x_m) = int f(x) (2 pi)^(-1/2) e^(-x^2/2) dx."""
    x, w = np.polynomial.hermite.hermgauss(order)
    return x * np.sqrt(2.0), w / np.sqrt(np.pi)


@dataclass(frozen=True)
class HermiteTestState:
    """Polynomial fluctuation profiles h~_k(v) = h_k / sqrt(M), one per mode.

    coeffs[k, i, j] multiplies v1^i v2^j; entries with i + j > degree are zero.
    Polynomials evaluate exactly at the off-grid post-collisional points, so
    the collision difference operator needs no interpolation here.
    """

    coeffs: np.ndarray
    degree: int

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=float)
        if c.ndim != 3 or c.shape[1] != c.shape[2]:
            raise LabError(f"coefficient array must be (K, d+1, d+1), got {c.shape}")
        if not np.all(np.isfinite(c)):
            raise LabError("non-finite polynomial coefficients")
        object.__setattr__(self, "coeffs", c)

    @property
    def K(self) -> int:
        return self.coeffs.shape[0]

    def eval(self, k: int, v1: np.ndarray, v2: np.ndarray) -> np.ndarray:
        return np.polynomial.polynomial.polyval2d(v1, v2, self.coeffs[k])

    def eval_all(self, v1: np.ndarray, v2: np.ndarray) -> np.ndarray:
        return np.stack([self.eval(k, v1, v2) for k in range(self.K)])


def random_test_state(K: int, degree: int, rng: np.random.Generator,
                      scale: float = 1.0) -> HermiteTestState:
    """Standard-normal coefficients on the total-degree simplex."""
    n = degree + 1
    coeffs = rng.standard_normal((K, n, n)) * scale
    i, j = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    coeffs[:, i + j > degree] = 0.0
    return HermiteTestState(coeffs=coeffs, degree=degree)


@dataclass(frozen=True)
class TermIReport:
    """The weighted linearized form evaluated via all change-of-variables routes."""

    values: dict
    max_pairwise_rel: float
    mean_check: float
    gh_order: int
    n_sigma: int
    q: float

    def value(self) -> float:
        return self.values["E5"]


def _stilde(kernel: KernelSpec, tensors: GalerkinTensors, eta: np.ndarray) -> np.ndarray:
    """S-tilde(eta)_kj = b0(eta) delta_kj + b1(eta) c_kj, shape (n_eta, K, K)."""
    K = tensors.K
    b0v = kernel.b0(eta)
    b1v = kernel.b1(eta)
    return (b0v[:, None, None] * np.eye(K)[None]
            + b1v[:, None, None] * tensors.c[None])


def term_I(test: HermiteTestState, tensors: GalerkinTensors, kernel: KernelSpec,
           q: float, gh_order: int | None = None, n_sigma: int = 32) -> TermIReport:
    """Evaluate Term I in forms E1-E4 (change of variables) and E5 (squared).

    E5 is assembled from the same quadrature values as the pointwise mean of
    E1..E4, so "mean_check" is a pure algebraic identity; the E1..E4 pairwise
    spread measures how exactly the quadrature realizes the four
    change-of-variables steps.  For gamma = 0 and polynomial tests the
    Gauss-Hermite x uniform-angle rule is exact and the spread is rounding.
    """
    if test.K != tensors.K:
        raise LabError(f"test state has {test.K} modes, tensors {tensors.K}")
    if gh_order is None:
        gh_order = test.degree + 4
    x, w = gauss_hermite_maxwell(gh_order)
    v1 = np.repeat(x, gh_order)
    v2 = np.tile(x, gh_order)
    wv = np.repeat(w, gh_order) * np.tile(w, gh_order)
    nv = v1.shape[0]
    phis = 2.0 * np.pi * np.arange(n_sigma) / n_sigma
    wsig = 2.0 * np.pi / n_sigma
    eta = np.cos(phis)
    st = _stilde(kernel, tensors, eta)
    ks = np.arange(1, test.K + 1, dtype=float)
    k2q = ks ** (2.0 * q)

    hv = test.eval_all(v1, v2)
    u1 = v1[:, None] - v1[None, :]
    u2 = v2[:, None] - v2[None, :]
    c1 = 0.5 * (v1[:, None] + v1[None, :])
    c2 = 0.5 * (v2[:, None] + v2[None, :])
    wpair = wv[:, None] * wv[None, :]
    if kernel.gamma > 0.0:
        wpair = wpair * kernel.kinetic(np.sqrt(u1 ** 2 + u2 ** 2))
    else:
        wpair = wpair * kernel.c_phi

    vals = dict.fromkeys(FORM_NAMES, 0.0)
    for a in range(n_sigma):
        ca, sa = np.cos(phis[a]), np.sin(phis[a])
        up1 = 0.5 * (ca * u1 - sa * u2)
        up2 = 0.5 * (ca * u2 + sa * u1)
        vp1, vp2 = c1 + up1, c2 + up2
        vs1, vs2 = c1 - up1, c2 - up2
        hp = test.eval_all(vp1, vp2)
        hps = test.eval_all(vs1, vs2)
        # theta[k] indexed (v, v*): h~ at v'* and v' minus h~ at v* and v
        theta = hps + hp - hv[:, None, :] - hv[:, :, None]
        sm = st[a]
        # coupled[k] = sum_j k^{2q} S_kj theta_j
        coupled = np.einsum("kj,jab->kab", sm, theta) * k2q[:, None, None]
        e1 = np.einsum("kab,ka,ab->", coupled, hv, wpair)
        e2 = -np.einsum("kab,kab,ab->", coupled, hp, wpair)
        e3 = np.einsum("kab,kb,ab->", coupled, hv, wpair)
        e4 = -np.einsum("kab,kab,ab->", coupled, hps, wpair)
        e5 = -0.25 * np.einsum("kab,kab,ab->", coupled, theta, wpair)
        for name, val in zip(FORM_NAMES, (e1, e2, e3, e4, e5)):
            vals[name] += wsig * val
    scale = max(abs(vals["E1"]), np.finfo(float).eps)
    pair = max(abs(vals[a] - vals[b]) for a in FORM_NAMES[:4] for b in FORM_NAMES[:4])
    mean4 = 0.25 * (vals["E1"] + vals["E2"] + vals["E3"] + vals["E4"])
    return TermIReport(values=vals, max_pairwise_rel=pair / scale,
                       mean_check=abs(vals["E5"] - mean4) / scale,
                       gh_order=gh_order, n_sigma=n_sigma, q=q)


@dataclass(frozen=True)
class TermABound:
    """Per-angle margin lambda_min(sym W(eta)) - D(eta) of the matrix bound."""

    eta: np.ndarray
    lambda_min: np.ndarray
    margin: np.ndarray
    min_margin: float
    d_min: float
    bk2_passed: bool


def term_A_bound(tensors: GalerkinTensors, kernel: KernelSpec, q: float,
                 n_samples: int = 0, rng: np.random.Generator | None = None) -> TermABound:
    """Verify the per-angle matrix inequality behind the Term A estimate.

    Optionally also exercises it on random vectors (quadratic-form route),
    which can only be weaker than the eigenvalue route.
    """
    cond = check_gap_condition(kernel, q)
    eta, lam = term_a_min_eig(tensors.c, kernel, q)
    margin = lam - cond.margin
    if n_samples and rng is not None:
        ratio_min = np.inf
        K = tensors.K
        ks = np.arange(1, K + 1, dtype=float)
        rat = (ks[:, None] / ks[None, :]) ** q
        symc = 0.5 * (rat + rat.T) * tensors.c
        for m in range(eta.shape[0]):
            w = kernel.b0(eta[m]) * np.eye(K) + kernel.b1(eta[m]) * symc
            for _ in range(n_samples):
                x = rng.standard_normal(K)
                ratio_min = min(ratio_min, (x @ w @ x) / (x @ x) - cond.margin[m])
        margin_min = min(float(np.min(margin)), float(ratio_min))
    else:
        margin_min = float(np.min(margin))
    return TermABound(eta=eta, lambda_min=lam, margin=margin,
                      min_margin=margin_min, d_min=cond.d_min, bk2_passed=cond.passed)


@dataclass(frozen=True)
class SGOperator:
    """Dense symmetric realizations of the coupled SG collision operator."""

    grid: VelocityGrid
    ref: MaxwellianRef
    K: int
    q: float
    L0: np.ndarray
    L1: np.ndarray
    coupling: np.ndarray
    matrix: np.ndarray
    matrix_weighted: np.ndarray
    symmetry_defect: float


def assemble_operator(grid: VelocityGrid, tensors: GalerkinTensors,
                      kernel: KernelSpec, q: float, n_sigma: int = 16,
                      ref: MaxwellianRef | None = None,
                      dim_budget: int = 20000) -> SGOperator:
    """Assemble the coupled operator from single-kernel Galerkin blocks.

    The kernel is affine in z, so the z-Galerkin projection is exactly
    S~_kj = b0 delta_kj + b1 c_kj and the block operator is
    I (x) L^{b0} + c (x) L^{b1}.  `matrix` is this symmetric operator;
    `matrix_weighted` carries the (k/j)^q conjugation of the weighted
    energy analysis, symmetrized.  The symmetry defect of the pointwise
    (non-Galerkin) discretization is reported as a quadrature artifact.
    """
    dim = tensors.K * grid.size
    if dim > dim_budget:
        raise LabError(
            f"operator dimension {dim} exceeds the dense eigensolve budget "
            f"{dim_budget}; shrink N or K")
    if ref is None:
        ref = maxwellian(grid)
    sphere = sphere_rule(grid.dv, n_sigma)
    L0 = linearized_form_matrix(kernel.b0, kernel.gamma, kernel.c_phi, sphere, ref)
    L1 = linearized_form_matrix(kernel.b1, kernel.gamma, kernel.c_phi, sphere, ref)
    K = tensors.K
    eyeK = np.eye(K)
    B = np.kron(eyeK, L0) + np.kron(tensors.c, L1)
    ks = np.arange(1, K + 1, dtype=float)
    rat = (ks[:, None] / ks[None, :]) ** q
    A = np.kron(eyeK, L0) + np.kron(0.5 * (rat + rat.T) * tensors.c, L1)
    direct = linearized_direct_matrix(kernel.b0, kernel.gamma, kernel.c_phi,
                                      sphere, ref)
    nrm = np.abs(direct).max()
    defect = float(np.abs(direct - direct.T).max() / nrm) if nrm > 0 else 0.0
    return SGOperator(grid=grid, ref=ref, K=K, q=q, L0=L0, L1=L1,
                      coupling=tensors.c, matrix=B, matrix_weighted=A,
                      symmetry_defect=defect)


@dataclass(frozen=True)
class GapReport:
    """Certified spectral data of the symmetric SG collision operator."""

    dim: int
    eigenvalues: np.ndarray
    tol_null: float
    null_count: int
    expected_null: int
    lambda_gap: float
    max_positive: float
    lambda_gap_weighted: float = np.nan
    symmetry_defect: float = np.nan
    d_min: float = np.nan
    bk2_passed: bool = False
    c_lambda: float = np.nan

    @property
    def gap_positive(self) -> bool:
        return self.lambda_gap > self.tol_null


def spectral_gap(matrix: np.ndarray, expected_null: int,
                 null_rtol: float = 1e-6) -> GapReport:
    """Eigendecomposition with relative null-space detection.

    The null tolerance is 1e-6 * ||A|| (absolute thresholds fail across
    kernel scales); the gap is the distance from zero to the largest
    strictly negative eigenvalue.
    """
    sym = 0.5 * (matrix + matrix.T)
    ev = np.linalg.eigvalsh(sym)
    nrm = float(np.abs(ev).max())
    tol = null_rtol * nrm
    nulls = int(np.sum(np.abs(ev) <= tol))
    neg = ev[ev < -tol]
    gap = float(-neg.max()) if neg.size else 0.0
    return GapReport(dim=sym.shape[0], eigenvalues=ev, tol_null=tol,
                     null_count=nulls, expected_null=expected_null,
                     lambda_gap=gap, max_positive=float(ev.max()))


def operator_gap_report(op: SGOperator, kernel: KernelSpec,
                        c_lambda: float = np.nan) -> GapReport:
    """Full GapReport for an assembled operator (gap from the Galerkin matrix).

    lambda_gap comes from the symmetric block operator itself; the gap of the
    weighted-symmetrized variant is attached for the energy analysis.  The
    assertion that the gap is positive is meaningful only when the kernel gap
    condition holds.
    """
    cond = check_gap_condition(kernel, op.q)
    base = spectral_gap(op.matrix, expected_null=op.K * (op.grid.dv + 2))
    weighted = spectral_gap(op.matrix_weighted, expected_null=base.expected_null)
    return GapReport(dim=base.dim, eigenvalues=base.eigenvalues,
                     tol_null=base.tol_null, null_count=base.null_count,
                     expected_null=base.expected_null, lambda_gap=base.lambda_gap,
                     max_positive=base.max_positive,
                     lambda_gap_weighted=weighted.lambda_gap,
                     symmetry_defect=op.symmetry_defect,
                     d_min=cond.d_min, bk2_passed=cond.passed,
                     c_lambda=c_lambda)


_INV_DEGREE = 2


def _invariant_basis(degree: int) -> np.ndarray:
    """Coefficient arrays of {1, v1, v2, |v|^2} padded to the given degree."""
    n = degree + 1
    basis = np.zeros((4, n, n))
    basis[0, 0, 0] = 1.0
    basis[1, 1, 0] = 1.0
    basis[2, 0, 1] = 1.0
    basis[3, 2, 0] = 1.0
    basis[3, 0, 2] = 1.0
    return basis


def _gaussian_moment_gram(degree: int) -> np.ndarray:
    """Gram matrix of monomials v1^i v2^j under the Maxwellian measure."""
    n = degree + 1
    mom = np.zeros(2 * n)
    mom[0] = 1.0
    for m in range(2, 2 * n, 2):
        mom[m] = mom[m - 2] * (m - 1)
    idx = np.arange(n)
    g1 = mom[idx[:, None] + idx[None, :]]
    return np.einsum("ik,jl->ijkl", g1, g1)


def microscopic_part(state: HermiteTestState) -> HermiteTestState:
    """Remove the collision-invariant component of every mode.

    Projection in L2(M dv) using exact Gaussian moments, i.e. the polynomial
    shadow of the kernel projection on the velocity grid.
    """
    deg = max(state.degree, _INV_DEGREE)
    n = deg + 1
    coeffs = np.zeros((state.K, n, n))
    coeffs[:, :state.coeffs.shape[1], :state.coeffs.shape[2]] = state.coeffs
    gram = _gaussian_moment_gram(deg)
    inv = _invariant_basis(deg)
    # orthonormalize the invariants under the Gaussian Gram form
    ortho = []
    for b in inv:
        v = b.copy()
        for u in ortho:
            v -= np.einsum("ij,ijkl,kl->", u, gram, v) * u
        v /= np.sqrt(np.einsum("ij,ijkl,kl->", v, gram, v))
        ortho.append(v)
    out = coeffs.copy()
    for k in range(state.K):
        for u in ortho:
            out[k] -= np.einsum("ij,ijkl,kl->", u, gram, out[k]) * u
    return HermiteTestState(coeffs=out, degree=deg)


def weighted_micro_norm_sq(state: HermiteTestState, q: float, gamma: float,
                           gh_order: int | None = None) -> float:
    """sum_k || k^q h_k^perp ||_Lambda^2 for a polynomial test state."""
    micro = microscopic_part(state)
    if gh_order is None:
        gh_order = micro.degree + 4
    x, w = gauss_hermite_maxwell(gh_order)
    v1 = np.repeat(x, gh_order)
    v2 = np.tile(x, gh_order)
    wv = np.repeat(w, gh_order) * np.tile(w, gh_order)
    if gamma > 0.0:
        wv = wv * (1.0 + np.sqrt(v1 ** 2 + v2 ** 2)) ** gamma
    vals = micro.eval_all(v1, v2)
    ks = np.arange(1, state.K + 1, dtype=float)
    return float(np.sum(ks ** (2.0 * q) * (vals ** 2 @ wv)))


@dataclass(frozen=True)
class CoercivityFit:
    """Empirical coercivity constant: worst ratio (-Term I) / ||k^q h^perp||^2."""

    c_lambda: float
    ratios: np.ndarray
    n_excluded: int
    q: float
    gamma: float


def coercivity_fit(states: list, tensors: GalerkinTensors, kernel: KernelSpec,
                   q: float, gamma: float | None = None,
                   n_sigma: int = 32, exclude_tol: float = 1e-12) -> CoercivityFit:
    """Estimate C_lambda over an ensemble of polynomial test states.

    Members whose microscopic part (nearly) vanishes give 0/0 ratios and are
    excluded with a diagnostic count.
    """
    if gamma is None:
        gamma = kernel.gamma
    ratios = []
    excluded = 0
    scale_ref = None
    for st in states:
        denom = weighted_micro_norm_sq(st, q, gamma)
        if scale_ref is None:
            scale_ref = max(denom, 1.0)
        if denom <= exclude_tol * scale_ref:
            excluded += 1
            continue
        rep = term_I(st, tensors, kernel, q, n_sigma=n_sigma)
        ratios.append(-rep.value() / denom)
    if not ratios:
        raise LabError("every ensemble member was purely macroscopic; "
                       "cannot form the coercivity ratio")
    ratios = np.asarray(ratios)
    return CoercivityFit(c_lambda=float(np.min(ratios)), ratios=ratios,
                         n_excluded=excluded, q=q, gamma=gamma)
