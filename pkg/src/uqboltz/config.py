"""Experiment configuration: TOML schema, loading, and validation.

One file configures every command; sections missing from the file fall back
to the reference defaults.  Loading enforces the invariants that do not
need a solver: kernel nonnegativity, q > p + 2 against the fitted basis
growth, compact support, and time-step admissibility is checked by the
commands that integrate.
"""
from __future__ import annotations

import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .chaos import ChaosError, MeasureSpec, OrthoBasis, build_basis, quadrature
from .kernel import AngularPart, KernelError, KernelSpec, assemble_tensors
from .sg import EnergyConfig, ScalingConfig, SolverError, SpaceGrid
from .velocity import GridError, VelocityGrid

SCHEMA_VERSION = 1


class ConfigError(ValueError):
    """Configuration file rejected (exit code 2)."""


@dataclass(frozen=True)
class InitConfig:
    kind: str = "default"          # default | gap-mode | z-profile
    amplitude: float = 1e-2
    profile: str = "sin"
    seed: int = 0
    v_degree: int = 3
    project_micro: bool = False
    z_kind: str = "analytic"       # analytic: 1/(pole + z); poly2: z^2
    z_pole: float = 3.0


@dataclass(frozen=True)
class LabConfig:
    n: int = 12
    l: float = 8.0
    k_list: tuple = (1, 2, 3, 4)
    m_sigma: int = 16
    n_h: int = 4
    gh_order: int = 8
    n_forms: int = 25
    ensemble: int = 50
    ensemble_seed: int = 7


@dataclass(frozen=True)
class DecayConfig:
    epsilons: tuple = (0.25, 0.5, 1.0)
    alpha: int = 1
    t_final: float = 0.0           # 0 -> auto from the slowest epsilon
    agree_tol: float = 0.20
    scale_tol: float = 0.25
    fit_fraction: float = 0.5


@dataclass(frozen=True)
class ConvergenceConfig:
    k_list: tuple = (1, 2, 3, 4, 6, 8)
    z_nodes: int = 20
    t_final: float = 1.0
    n_snapshots: int = 5
    nonlinear: bool = False
    final_k_tol: float = 1e-6
    exact_tol: float = 1e-9


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything a command needs, validated and cross-checked."""

    measure: MeasureSpec
    K: int
    quad_points: int
    kernel: KernelSpec
    grid: VelocityGrid
    m_sigma: int
    space: SpaceGrid
    scaling: ScalingConfig
    energy: EnergyConfig
    t_final: float
    dt: float
    c_stab: float
    fit_fraction: float
    init: InitConfig
    lab: LabConfig
    decay: DecayConfig
    convergence: ConvergenceConfig
    nonlinear: bool
    raw_text: str
    basis: OrthoBasis = field(repr=False, default=None)

    def build_basis(self, K: int | None = None) -> OrthoBasis:
        return build_basis(self.measure, K or self.K)

    def z_rule(self, n: int | None = None):
        return quadrature(self.measure, n or self.quad_points)

    def tensors(self, K: int | None = None):
        basis = self.build_basis(K)
        need = (3 * (basis.K - 1) + 1 + 1) // 2 + 1
        return assemble_tensors(basis, self.z_rule(max(self.quad_points, need)))


def _angular_from_dict(d: dict, name: str) -> AngularPart:
    try:
        kind = d.get("kind", "constant")
        if kind == "table":
            return AngularPart(kind="table", eta_grid=tuple(d["eta_grid"]),
                               values=tuple(d["values"]))
        return AngularPart(kind=kind, coeffs=tuple(d.get("coeffs", (1.0,))))
    except (KeyError, TypeError, KernelError) as exc:
        raise ConfigError(f"bad angular part [{name}]: {exc}") from exc


def load_config(path: str | Path) -> ExperimentConfig:
    """Parse and validate a TOML experiment configuration."""
    path = Path(path)
    try:
        raw_text = path.read_text()
        doc = tomllib.loads(raw_text)
    except (OSError, tomllib.TOMLDecodeError) as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    if doc.get("schema_version", SCHEMA_VERSION) != SCHEMA_VERSION:
        raise ConfigError(f"unsupported schema_version {doc.get('schema_version')}")
    try:
        return _build(doc, raw_text)
    except (ChaosError, KernelError, GridError, SolverError, ConfigError,
            KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from exc


def _build(doc: dict, raw_text: str) -> ExperimentConfig:
    mz = doc.get("measure", {})
    measure = MeasureSpec(kind=mz.get("kind", "uniform"), cz=float(mz.get("cz", 1.0)),
                          beta_a=float(mz.get("beta_a", 0.0)),
                          table=tuple(tuple(r) for r in mz.get("table", ())))
    bz = doc.get("basis", {})
    K = int(bz.get("k", 4))
    quad_points = int(bz.get("quad_points", max(2 * K + 2, 12)))

    kz = doc.get("kernel", {})
    kernel = KernelSpec(
        gamma=float(kz.get("gamma", 0.0)),
        c_phi=float(kz.get("c_phi", 1.0)),
        b0=_angular_from_dict(kz.get("b0", {"kind": "constant", "coeffs": [1.0]}), "b0"),
        b1=_angular_from_dict(kz.get("b1", {"kind": "constant", "coeffs": [0.0]}), "b1"),
        cz=measure.cz)

    gz = doc.get("grid", {})
    grid = VelocityGrid(dv=int(gz.get("dv", 2)), N=int(gz.get("n", 16)),
                        L=float(gz.get("l", 8.0)))
    m_sigma = int(gz.get("m_sigma", 16))

    xz = doc.get("space", {})
    space = SpaceGrid(nx=int(xz.get("nx", 32)), lx=float(xz.get("lx", 2.0 * np.pi)))

    sz = doc.get("scaling", {})
    scaling = ScalingConfig(epsilon=float(sz.get("epsilon", 1.0)),
                            alpha=int(sz.get("alpha", 0)))

    ez = doc.get("energy", {})
    energy = EnergyConfig(q=float(ez.get("q", 3.0)), s=int(ez.get("s", 0)))

    tz = doc.get("time", {})
    t_final = float(tz.get("t_final", 20.0))
    dt = float(tz.get("dt", 0.0))
    c_stab = float(tz.get("c_stab", 0.5))
    fit_fraction = float(tz.get("fit_fraction", 0.5))

    iz = doc.get("init", {})
    init = InitConfig(kind=iz.get("kind", "default"),
                      amplitude=float(iz.get("amplitude", 1e-2)),
                      profile=iz.get("profile", "sin"),
                      seed=int(iz.get("seed", 0)),
                      v_degree=int(iz.get("v_degree", 3)),
                      project_micro=bool(iz.get("project_micro", False)),
                      z_kind=iz.get("z_kind", "analytic"),
                      z_pole=float(iz.get("z_pole", 3.0)))

    lz = doc.get("gap", {})
    lab = LabConfig(n=int(lz.get("n", 12)), l=float(lz.get("l", 8.0)),
                    k_list=tuple(int(k) for k in lz.get("k_list", (1, 2, 3, 4))),
                    m_sigma=int(lz.get("m_sigma", 16)),
                    n_h=int(lz.get("n_h", 4)),
                    gh_order=int(lz.get("gh_order", 8)),
                    n_forms=int(lz.get("n_forms", 25)),
                    ensemble=int(lz.get("ensemble", 50)),
                    ensemble_seed=int(lz.get("ensemble_seed", 7)))

    dz = doc.get("decay", {})
    decay = DecayConfig(epsilons=tuple(float(e) for e in dz.get("epsilons", (0.25, 0.5, 1.0))),
                        alpha=int(dz.get("alpha", 1)),
                        t_final=float(dz.get("t_final", 0.0)),
                        agree_tol=float(dz.get("agree_tol", 0.20)),
                        scale_tol=float(dz.get("scale_tol", 0.25)),
                        fit_fraction=float(dz.get("fit_fraction", 0.5)))
    if any(e < 0.1 for e in decay.epsilons):
        raise ConfigError("epsilon sweep entries must be >= 0.1 "
                          "(explicit integrator stiffness floor)")

    cz_ = doc.get("convergence", {})
    convergence = ConvergenceConfig(
        k_list=tuple(int(k) for k in cz_.get("k_list", (1, 2, 3, 4, 6, 8))),
        z_nodes=int(cz_.get("z_nodes", 20)),
        t_final=float(cz_.get("t_final", 1.0)),
        n_snapshots=int(cz_.get("n_snapshots", 5)),
        nonlinear=bool(cz_.get("nonlinear", False)),
        final_k_tol=float(cz_.get("final_k_tol", 1e-6)),
        exact_tol=float(cz_.get("exact_tol", 1e-9)))
    if convergence.z_nodes < 2 * max(convergence.k_list):
        raise ConfigError(
            f"convergence needs z_nodes >= 2 max(K) = {2 * max(convergence.k_list)}")

    nonlinear = bool(doc.get("nonlinear", False))

    basis = build_basis(measure, K)
    if energy.q <= basis.growth_p + 2.0:
        raise ConfigError(
            f"energy weight q = {energy.q} violates q > p + 2 with fitted "
            f"basis growth p = {basis.growth_p:.3f}")

    return ExperimentConfig(measure=measure, K=K, quad_points=quad_points,
                            kernel=kernel, grid=grid, m_sigma=m_sigma,
                            space=space, scaling=scaling, energy=energy,
                            t_final=t_final, dt=dt, c_stab=c_stab,
                            fit_fraction=fit_fraction, init=init, lab=lab,
                            decay=decay, convergence=convergence,
                            nonlinear=nonlinear, raw_text=raw_text, basis=basis)


REFERENCE_TOML = """\
schema_version = 1

[measure]
kind = "uniform"
cz = 1.0

[basis]
k = 4

[kernel]
gamma = 0.0
c_phi = 1.0
b0 = {kind = "constant", coeffs = [1.0]}
b1 = {kind = "constant", coeffs = [0.05]}

[grid]
dv = 2
n = 12
l = 8.0
m_sigma = 16

[space]
nx = 32

[scaling]
epsilon = 1.0
alpha = 0

[energy]
q = 3.0
s = 0

[time]
t_final = 20.0

[init]
kind = "default"
amplitude = 1e-2
profile = "sin"
seed = 0
"""
