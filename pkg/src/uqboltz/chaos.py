"""Orthonormal polynomial chaos bases and Gauss quadrature on a compact interval.

The random variable z lives on [-Cz, Cz] with a normalized probability
density.  Bases are built from three-term recurrence coefficients of the
monic orthogonal family; quadrature rules come from the eigendecomposition
of the symmetric Jacobi matrix (Golub-Welsch).

Indexing is 1-based throughout: psi_1 is the constant function 1 and
psi_k has polynomial degree k-1.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np


class ChaosError(ValueError):
    """Invalid measure or basis configuration."""


@dataclass(frozen=True)
class MeasureSpec:
    """Probability measure for the random kernel perturbation.

    kind is one of "uniform", "symmetric-beta" (density ~ (1-(z/Cz)^2)^a),
    or "table" with explicit monic recurrence coefficients.  The density is
    normalized to total mass one, so beta[0] == 1 always.
    """

    kind: str = "uniform"
    cz: float = 1.0
    beta_a: float = 0.0
    table: tuple = field(default=())

    def __post_init__(self):
        if self.cz <= 0.0:
            raise ChaosError(f"support half-width must be positive, got {self.cz}")
        if self.kind not in ("uniform", "symmetric-beta", "table"):
            raise ChaosError(f"unknown measure kind {self.kind!r}")
        if self.kind == "symmetric-beta" and self.beta_a <= -1.0:
            raise ChaosError("symmetric-beta exponent must exceed -1")
        if self.kind == "table" and len(self.table) == 0:
            raise ChaosError("table measure needs explicit recurrence coefficients")

    def recurrence(self, n: int) -> tuple[np.ndarray, np.ndarray]:
        """Monic three-term recurrence (alpha_0..alpha_{n-1}, beta_0..beta_{n-1}).

        p_{j+1}(z) = (z - alpha_j) p_j(z) - beta_j p_{j-1}(z), with beta_0 = 1
        for the normalized measure.
        """
        if n < 1:
            raise ChaosError("need at least one recurrence coefficient")
        if self.kind == "table":
            tab = np.asarray(self.table, dtype=float)
            if tab.ndim != 2 or tab.shape[1] != 2 or tab.shape[0] < n:
                raise ChaosError(
                    f"recurrence table must be (m, 2) with m >= {n}, got {tab.shape}")
            alpha = tab[:n, 0].copy()
            beta = tab[:n, 1].copy()
            if abs(beta[0] - 1.0) > 1e-12:
                raise ChaosError("table beta_0 must be 1 (normalized measure)")
            if np.any(beta[1:] <= 0.0):
                raise ChaosError("table beta_n must be positive for n >= 1")
            return alpha, beta
        # uniform is Jacobi with a = 0
        a = 0.0 if self.kind == "uniform" else self.beta_a
        alpha = np.zeros(n)
        beta = np.empty(n)
        beta[0] = 1.0
        j = np.arange(1, n, dtype=float)
        # monic Jacobi(a, a) on [-1, 1], scaled to [-Cz, Cz]
        beta[1:] = (4.0 * j * (j + a) ** 2 * (j + 2.0 * a)
                    / (((2.0 * j + 2.0 * a) ** 2 - 1.0) * (2.0 * j + 2.0 * a) ** 2))
        beta[1:] *= self.cz ** 2
        return alpha, beta


@dataclass(frozen=True)
class QuadratureRule:
    """Gauss rule for the measure: sum(w) = 1, exact through `exactness` degree."""

    nodes: np.ndarray
    weights: np.ndarray
    exactness: int

    def integrate(self, values: np.ndarray) -> float:
        values = np.asarray(values, dtype=float)
        return float(np.dot(self.weights, values))


def quadrature(measure: MeasureSpec, n: int) -> QuadratureRule:
    """n-point Gauss rule for the measure, exact on polynomials of degree 2n-1."""
    if n < 1:
        raise ChaosError(f"quadrature order must be >= 1, got {n}")
    alpha, beta = measure.recurrence(max(n, 1))
    if n == 1:
        return QuadratureRule(np.array([alpha[0]]), np.array([1.0]), exactness=1)
    off = np.sqrt(beta[1:n])
    jac = np.diag(alpha[:n]) + np.diag(off, 1) + np.diag(off, -1)
    nodes, vecs = np.linalg.eigh(jac)
    weights = beta[0] * vecs[0, :] ** 2
    return QuadratureRule(nodes, weights, exactness=2 * n - 1)


@dataclass(frozen=True)
class OrthoBasis:
    """Orthonormal polynomial family psi_1..psi_K for a measure.

    Stores the monic recurrence plus the norms of the monic polynomials, so
    psi_k = p_{k-1} / ||p_{k-1}||.  sup-norm growth parameters (C, p) are
    filled in by sup_norm_growth; until then they hold the fitted defaults.
    """

    measure: MeasureSpec
    K: int
    alpha: np.ndarray
    beta: np.ndarray
    norms: np.ndarray
    growth_C: float = 1.0
    growth_p: float = 0.0

    def eval(self, k: int, z) -> np.ndarray:
        """Evaluate psi_k (1-based) at points z."""
        if not 1 <= k <= self.K:
            raise ChaosError(f"mode index {k} outside 1..{self.K}")
        return self.eval_all(z)[k - 1]

    def eval_all(self, z) -> np.ndarray:
        """Evaluate all psi_1..psi_K at points z; shape (K,) + z.shape."""
        z = np.asarray(z, dtype=float)
        out = np.empty((self.K,) + z.shape)
        pm1 = np.zeros_like(z)
        p = np.ones_like(z)
        out[0] = p / self.norms[0]
        for j in range(self.K - 1):
            pnew = (z - self.alpha[j]) * p - self.beta[j] * pm1
            pm1, p = p, pnew
            out[j + 1] = p / self.norms[j + 1]
        return out


def build_basis(measure: MeasureSpec, K: int) -> OrthoBasis:
    """Orthonormal basis with K retained modes (psi_1 = 1, degree of psi_k = k-1)."""
    if K < 1:
        raise ChaosError(f"K must be >= 1, got {K}")
    alpha, beta = measure.recurrence(K)
    # ||p_n||^2 = beta_0 beta_1 ... beta_n for monic orthogonal polynomials
    norms = np.sqrt(np.cumprod(beta))
    basis = OrthoBasis(measure=measure, K=K, alpha=alpha, beta=beta, norms=norms)
    if K >= 2:
        C, p = sup_norm_growth(basis)
        basis = OrthoBasis(measure=measure, K=K, alpha=alpha, beta=beta,
                           norms=norms, growth_C=C, growth_p=p)
    return basis


def sup_norm_growth(basis: OrthoBasis, n_samples: int = 4097) -> tuple[float, float]:
    """Fit ||psi_k||_inf <= C k^p over the support.

    Least-squares slope of log sup-norm against log k, then C enlarged so the
    bound encloses every sampled mode.  Sup-norms are taken on a uniform
    sample grid including both endpoints, where Legendre-type families peak.
    """
    if basis.K < 2:
        return 1.0, 0.0
    cz = basis.measure.cz
    grid = np.linspace(-cz, cz, n_samples)
    vals = np.abs(basis.eval_all(grid))
    sup = vals.max(axis=1)
    k = np.arange(1, basis.K + 1, dtype=float)
    # fit the upper half of the mode range: low modes bias the asymptotic
    # exponent upward (for Legendre the all-k slope is ~0.6, not 1/2)
    lo = max(0, min(basis.K - 2, basis.K // 2 - 1))
    slope = np.polyfit(np.log(k[lo:]), np.log(sup[lo:]), 1)[0]
    p = float(max(slope, 0.0))
    C = float(np.max(sup / k ** p))
    return max(C, 1.0), p


def project(samples: np.ndarray, basis: OrthoBasis, rule: QuadratureRule) -> np.ndarray:
    """Chaos coefficients f_k = sum_m w_m f(z_m) psi_k(z_m) from nodal samples."""
    samples = np.asarray(samples, dtype=float)
    if samples.shape[-1] != rule.nodes.shape[0]:
        raise ChaosError(
            f"sample count {samples.shape[-1]} does not match rule size {rule.nodes.shape[0]}")
    psi = basis.eval_all(rule.nodes)
    return samples @ (psi * rule.weights).T if samples.ndim > 1 else (psi * rule.weights) @ samples


def reconstruct(coeffs: np.ndarray, basis: OrthoBasis, z) -> np.ndarray:
    """Evaluate sum_k coeffs_k psi_k(z)."""
    coeffs = np.asarray(coeffs, dtype=float)
    if coeffs.shape[0] != basis.K:
        raise ChaosError(f"expected {basis.K} coefficients, got {coeffs.shape[0]}")
    psi = basis.eval_all(z)
    return np.tensordot(coeffs, psi, axes=(0, 0))


def basis_to_json(basis: OrthoBasis, rule: QuadratureRule) -> str:
    """Serialize basis + rule: {"kind","K","Cz","recurrence","nodes","weights"}."""
    doc = {
        "kind": basis.measure.kind,
        "K": basis.K,
        "Cz": basis.measure.cz,
        "recurrence": [[float(a), float(b)] for a, b in zip(basis.alpha, basis.beta)],
        "nodes": [float(x) for x in rule.nodes],
        "weights": [float(w) for w in rule.weights],
    }
    return json.dumps(doc, indent=1, sort_keys=True)


def basis_from_json(text: str) -> tuple[OrthoBasis, QuadratureRule]:
    doc = json.loads(text)
    # the recurrence table carries the full numeric content regardless of kind
    measure = MeasureSpec(kind="table", cz=doc["Cz"],
                          table=tuple(tuple(row) for row in doc["recurrence"]))
    basis = build_basis(measure, doc["K"])
    nodes = np.asarray(doc["nodes"], dtype=float)
    weights = np.asarray(doc["weights"], dtype=float)
    rule = QuadratureRule(nodes, weights, exactness=2 * len(nodes) - 1)
    return basis, rule
