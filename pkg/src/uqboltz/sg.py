"""Coupled gPC-SG system on a periodic 1-D spatial domain.

State layout: h[k, x, v] with k the chaos mode (K of them), x on a uniform
periodic grid, v a flattened velocity grid.  Transport is Fourier-spectral
in x; the linearized collision term applies the precomputed symmetric
Galerkin matrices (the kernel is affine in z, so the chaos coupling is
exactly tridiagonal through the pair-coupling matrix); the quadratic term
assembles the triple-tensor combinations of the weighted bilinear operator.
Time integration is classical four-stage Runge-Kutta with an
epsilon-scaled stability bound.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .chaos import OrthoBasis
from .collision import gb_bilinear_pair, linearized_form_matrix
from .kernel import GalerkinTensors, KernelSpec
from .velocity import VelocityGrid, maxwellian, sphere_rule


class SolverError(RuntimeError):
    """Time integration failed (blowup or configuration problem)."""


@dataclass(frozen=True)
class ScalingConfig:
    """Knudsen number and scaling exponent (0 acoustic, 1 incompressible NS)."""

    epsilon: float = 1.0
    alpha: int = 0

    def __post_init__(self):
        if not 0.0 < self.epsilon <= 1.0:
            raise SolverError(f"epsilon must lie in (0, 1], got {self.epsilon}")
        if self.alpha not in (0, 1):
            raise SolverError(f"alpha must be 0 or 1, got {self.alpha}")


@dataclass(frozen=True)
class EnergyConfig:
    """Mode-weight exponent q and spatial Sobolev order s of the energy."""

    q: float = 3.0
    s: int = 0

    def __post_init__(self):
        if self.q <= 0.0:
            raise SolverError(f"q must be positive, got {self.q}")
        if self.s < 0:
            raise SolverError(f"s must be >= 0, got {self.s}")


@dataclass(frozen=True)
class SpaceGrid:
    """Uniform periodic x-grid on [0, lx); nx = 1 is the space-homogeneous mode."""

    nx: int = 32
    lx: float = 2.0 * np.pi

    def __post_init__(self):
        if self.nx != 1 and (self.nx < 4 or self.nx % 2 != 0):
            raise SolverError(f"nx must be 1 or even and >= 4, got {self.nx}")

    @property
    def dx(self) -> float:
        return self.lx / self.nx

    @property
    def x(self) -> np.ndarray:
        return self.dx * np.arange(self.nx)

    def wavenumbers(self) -> np.ndarray:
        """rfft wavenumbers, Nyquist zeroed for the spectral first derivative."""
        k = 2.0 * np.pi * np.arange(self.nx // 2 + 1) / self.lx
        k[-1] = 0.0
        return k

    def sobolev_weights(self, s: int) -> np.ndarray:
        k = 2.0 * np.pi * np.arange(self.nx // 2 + 1) / self.lx
        return (1.0 + k ** 2) ** s


@dataclass
class SGState:
    """Chaos coefficient fields h_k(x, v), flattened velocity axis."""

    values: np.ndarray
    t: float = 0.0

    @property
    def K(self) -> int:
        return self.values.shape[0]

    def copy(self) -> "SGState":
        return SGState(values=self.values.copy(), t=self.t)


@dataclass(frozen=True)
class DecayReport:
    """Fitted exponential decay of the chaos energy."""

    times: np.ndarray
    energy: np.ndarray
    rate_fit: float
    tau_fit: float
    eta_fit: float
    residual: float
    epsilon: float
    alpha: int
    fit_window: tuple


class SGSystem:
    """Assembled discrete gPC-SG system (velocity matrices, transport, energy)."""

    def __init__(self, grid: VelocityGrid, space: SpaceGrid, basis: OrthoBasis,
                 tensors: GalerkinTensors, kernel: KernelSpec,
                 scaling: ScalingConfig, energy_cfg: EnergyConfig,
                 n_sigma: int = 16, nonlinear: bool = False):
        if grid.dv != 2:
            raise SolverError("the SG solver runs on d_v = 2 velocity grids")
        self.grid = grid
        self.space = space
        self.basis = basis
        self.tensors = tensors
        self.kernel = kernel
        self.scaling = scaling
        self.energy_cfg = energy_cfg
        self.nonlinear = nonlinear
        self.ref = maxwellian(grid)
        self.sphere = sphere_rule(grid.dv, n_sigma)
        self.L0 = linearized_form_matrix(kernel.b0, kernel.gamma, kernel.c_phi,
                                         self.sphere, self.ref)
        self.L1 = linearized_form_matrix(kernel.b1, kernel.gamma, kernel.c_phi,
                                         self.sphere, self.ref)
        self.v1_flat = grid.meshgrid()[0].ravel()
        self.ik = 1j * space.wavenumbers()
        self._sob = space.sobolev_weights(energy_cfg.s)
        self._lam_est = None

    def with_scaling(self, scaling: ScalingConfig) -> "SGSystem":
        """Shallow copy sharing the assembled matrices (epsilon sweeps)."""
        import copy

        clone = copy.copy(self)
        clone.scaling = scaling
        clone._lam_est = self._lam_est
        return clone

    # -- building blocks ---------------------------------------------------

    def apply_linear(self, values: np.ndarray) -> np.ndarray:
        """(L_k(h^K))_k: block-tridiagonal combination of the two matrices.

        For b1 = 0 the chaos coupling vanishes and the modes decouple.
        """
        K = values.shape[0]
        out = values @ self.L0
        mix = np.tensordot(self.tensors.c[:K, :K], values, axes=(1, 0))
        out += mix @ self.L1
        return out

    def apply_nonlinear(self, values: np.ndarray) -> np.ndarray:
        """(F_k)_k = sum_ij e_kij G^{b0}(h_i, h_j) + f_kij G^{b1}(h_i, h_j)."""
        K, nx, nv = values.shape
        shape = self.grid.shape
        g0 = np.empty((K, K, nx, nv))
        g1 = np.empty((K, K, nx, nv))
        for i in range(K):
            for j in range(K):
                for m in range(nx):
                    a, b = gb_bilinear_pair(values[i, m].reshape(shape),
                                            values[j, m].reshape(shape),
                                            self.kernel.b0, self.kernel.b1,
                                            self.kernel.gamma, self.kernel.c_phi,
                                            self.sphere, self.ref)
                    g0[i, j, m] = a.ravel()
                    g1[i, j, m] = b.ravel()
        e = self.tensors.e[:K, :K, :K]
        f = self.tensors.f[:K, :K, :K]
        return (np.tensordot(e, g0, axes=([1, 2], [0, 1]))
                + np.tensordot(f, g1, axes=([1, 2], [0, 1])))

    def transport(self, values: np.ndarray) -> np.ndarray:
        """v . grad_x h; spectral x-derivative times v_1 per velocity node."""
        spec = np.fft.rfft(values, axis=1)
        dx = np.fft.irfft(self.ik[None, :, None] * spec, n=self.space.nx, axis=1)
        return dx * self.v1_flat[None, None, :]

    def rhs(self, values: np.ndarray) -> np.ndarray:
        eps, alpha = self.scaling.epsilon, self.scaling.alpha
        out = self.apply_linear(values) / eps ** (1 + alpha)
        if self.space.nx > 1:
            out -= self.transport(values) / eps ** alpha
        if self.nonlinear:
            out += self.apply_nonlinear(values) / eps ** alpha
        return out

    # -- diagnostics ---------------------------------------------------------

    def collision_norm_estimate(self, n_iter: int = 30) -> float:
        """Crude spectral-radius bound of the block collision operator."""
        if self._lam_est is None:
            rng = np.random.default_rng(1234)
            est = []
            for mat in (self.L0, self.L1):
                x = rng.standard_normal(mat.shape[0])
                x /= np.linalg.norm(x)
                lam = 0.0
                for _ in range(n_iter):
                    y = mat @ x
                    lam = np.linalg.norm(y)
                    if lam == 0.0:
                        break
                    x = y / lam
                est.append(lam)
            cnorm = np.linalg.norm(self.tensors.c, 2) if self.tensors.K > 1 else 0.0
            self._lam_est = est[0] + cnorm * est[1]
        return self._lam_est

    def stable_dt(self, c_stab: float = 0.5) -> float:
        """Epsilon-scaled step bound: collision stiffness plus transport CFL."""
        eps, alpha = self.scaling.epsilon, self.scaling.alpha
        lam = self.collision_norm_estimate()
        dt = c_stab * 2.785 * eps ** (1 + alpha) / lam
        if self.space.nx > 1:
            ximax = np.pi * self.space.nx / self.space.lx
            dt_tr = c_stab * 2.785 * eps ** alpha / (self.grid.L * ximax)
            dt = min(dt, dt_tr)
        return dt

    def energy(self, state: SGState) -> float:
        """E^K = sum_k k^{2q} ||h_k||^2_{H^s_x L^2_v} (L^2 in v, H^s in x)."""
        return float(np.sum(self.mode_energies(state)))

    def mode_energies(self, state: SGState) -> np.ndarray:
        vals = state.values
        K = vals.shape[0]
        if self.energy_cfg.s == 0:
            sq = np.sum(vals ** 2, axis=(1, 2)) * self.space.dx * self.grid.vol
        else:
            spec = np.fft.rfft(vals, axis=1)
            w = self._sob.copy()
            mag = np.abs(spec) ** 2
            mag[:, 1:self.space.nx // 2] *= 2.0
            sq = np.einsum("kxv,x->k", mag, w) * self.grid.vol * self.space.dx / self.space.nx
        ks = np.arange(1, K + 1, dtype=float)
        return ks ** (2.0 * self.energy_cfg.q) * sq

    def hsl2_norm_sq(self, values: np.ndarray) -> float:
        """||.||^2_{H^s_x L^2_v} of a single deterministic field (nx, nv)."""
        if self.energy_cfg.s == 0:
            return float(np.sum(values ** 2) * self.space.dx * self.grid.vol)
        spec = np.fft.rfft(values, axis=0)
        mag = np.abs(spec) ** 2
        mag[1:self.space.nx // 2] *= 2.0
        return float(np.einsum("xv,x->", mag, self._sob)
                     * self.grid.vol * self.space.dx / self.space.nx)

    # -- integration ---------------------------------------------------------

    def step(self, state: SGState, dt: float) -> SGState:
        """One classical RK4 step."""
        y = state.values
        k1 = self.rhs(y)
        k2 = self.rhs(y + 0.5 * dt * k1)
        k3 = self.rhs(y + 0.5 * dt * k2)
        k4 = self.rhs(y + dt * k3)
        return SGState(values=y + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4),
                       t=state.t + dt)

    def run(self, state: SGState, t_final: float, dt: float | None = None,
            fit_fraction: float = 0.5,
            record_modes: bool = False) -> tuple[SGState, DecayReport, np.ndarray | None]:
        """Advance to t_final recording the energy; fit the tail decay rate.

        The fit regresses log E on t over the trailing `fit_fraction` of the
        run, skipping the transient.  Blowup aborts with a diagnostic.
        """
        if dt is None:
            dt = self.stable_dt()
        n_steps = max(1, int(np.ceil((t_final - state.t) / dt)))
        dt = (t_final - state.t) / n_steps
        times = np.empty(n_steps + 1)
        energies = np.empty(n_steps + 1)
        modes = np.empty((n_steps + 1, state.K)) if record_modes else None
        times[0] = state.t
        energies[0] = self.energy(state)
        if record_modes:
            modes[0] = self.mode_energies(state)
        for n in range(1, n_steps + 1):
            state = self.step(state, dt)
            e = self.energy(state)
            if not np.isfinite(e):
                raise SolverError(
                    f"blowup at t = {state.t:.6g} (step {n}/{n_steps}, dt = {dt:.3e}); "
                    f"last finite energy {energies[n-1]:.6e}")
            times[n] = state.t
            energies[n] = e
            if record_modes:
                modes[n] = self.mode_energies(state)
        report = fit_decay(times, energies, self.scaling, fit_fraction)
        return state, report, modes


def fit_decay(times: np.ndarray, energies: np.ndarray, scaling: ScalingConfig,
              fit_fraction: float = 0.5, floor: float = 1e-280) -> DecayReport:
    """Least-squares fit of log E against t on the trailing window."""
    n = times.shape[0]
    lo = int(np.floor((1.0 - fit_fraction) * (n - 1)))
    tw = times[lo:]
    ew = np.maximum(energies[lo:], floor)
    if tw.shape[0] < 3 or np.all(ew <= floor):
        return DecayReport(times=times, energy=energies, rate_fit=np.nan,
                           tau_fit=np.nan, eta_fit=np.nan, residual=np.nan,
                           epsilon=scaling.epsilon, alpha=scaling.alpha,
                           fit_window=(float(times[lo]), float(times[-1])))
    slope, intercept = np.polyfit(tw, np.log(ew), 1)
    resid = float(np.sqrt(np.mean((np.log(ew) - (slope * tw + intercept)) ** 2)))
    rate = float(-slope)
    tau = rate / scaling.epsilon ** (1 - scaling.alpha)
    return DecayReport(times=times, energy=energies, rate_fit=rate, tau_fit=tau,
                       eta_fit=float(np.exp(intercept)), residual=resid,
                       epsilon=scaling.epsilon, alpha=scaling.alpha,
                       fit_window=(float(tw[0]), float(tw[-1])))


def reconstruct(state: SGState, system: SGSystem, z: float,
                epsilon: float) -> np.ndarray:
    """Random-space solution f(x, v; z) = M + eps sqrt(M) sum_k h_k psi_k(z)."""
    cz = system.basis.measure.cz
    if abs(z) > cz:
        raise SolverError(f"|z| = {abs(z)} outside the support bound {cz}")
    psi = system.basis.eval_all(np.array([z]))[:, 0]
    pert = np.tensordot(psi, state.values, axes=(0, 0))
    sqm = system.ref.sqrt_M.ravel()
    return system.ref.M.ravel()[None, :] + epsilon * sqm[None, :] * pert


@dataclass(frozen=True)
class DeterministicRun:
    """Reference trajectory of the fluctuation equation at a fixed z node."""

    z: float
    times: np.ndarray
    snapshots: np.ndarray


def collocation_reference(system: SGSystem, init_at_z, z_nodes: np.ndarray,
                          t_final: float, dt: float,
                          n_snapshots: int = 9) -> list[DeterministicRun]:
    """Solve the deterministic fluctuation equation at each z node.

    Shares every discretization parameter with the SG run: same velocity
    matrices (the kernel is affine in z, so L(z) = L0 + z L1), same spatial
    grid, same dt.  init_at_z(z) must return the initial field (nx, nv).
    """
    runs = []
    snap_every = max(1, int(np.ceil(t_final / dt)) // max(n_snapshots - 1, 1))
    for z in z_nodes:
        lz = system.L0 + z * system.L1
        kz = None
        if system.nonlinear:
            kz = _kernel_at_z(system.kernel, z)
        vals = np.asarray(init_at_z(z), dtype=float)
        n_steps = max(1, int(np.ceil(t_final / dt)))
        dtz = t_final / n_steps
        eps, alpha = system.scaling.epsilon, system.scaling.alpha
        times = [0.0]
        snaps = [vals.copy()]

        def rhs(y):
            out = (y @ lz) / eps ** (1 + alpha)
            if system.space.nx > 1:
                spec = np.fft.rfft(y, axis=0)
                dx = np.fft.irfft(system.ik[:, None] * spec, n=system.space.nx, axis=0)
                out -= dx * system.v1_flat[None, :] / eps ** alpha
            if system.nonlinear:
                shape = system.grid.shape
                nl = np.empty_like(y)
                for m in range(system.space.nx):
                    f2 = y[m].reshape(shape)
                    g0, _ = gb_bilinear_pair(f2, f2, kz.b0, kz.b1, kz.gamma,
                                             kz.c_phi, system.sphere, system.ref)
                    nl[m] = g0.ravel()
                out += nl / eps ** alpha
            return out

        t = 0.0
        for n in range(1, n_steps + 1):
            k1 = rhs(vals)
            k2 = rhs(vals + 0.5 * dtz * k1)
            k3 = rhs(vals + 0.5 * dtz * k2)
            k4 = rhs(vals + dtz * k3)
            vals = vals + dtz / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            t = n * dtz
            if not np.all(np.isfinite(vals)):
                raise SolverError(f"collocation blowup at z = {z}, t = {t:.6g}")
            if n % snap_every == 0 or n == n_steps:
                times.append(t)
                snaps.append(vals.copy())
        runs.append(DeterministicRun(z=float(z), times=np.asarray(times),
                                     snapshots=np.asarray(snaps)))
    return runs


def _kernel_at_z(kernel: KernelSpec, z: float) -> KernelSpec:
    """Deterministic kernel with the angular part frozen at a z value."""
    from .kernel import AngularPart

    eta = np.asarray(kernel.angle_grid, dtype=float)
    vals = kernel.b0(eta) + z * kernel.b1(eta)
    b0 = AngularPart(kind="table", eta_grid=tuple(eta), values=tuple(vals))
    b1 = AngularPart(kind="constant", coeffs=(0.0,))
    return KernelSpec(gamma=kernel.gamma, c_phi=kernel.c_phi, b0=b0, b1=b1,
                      cz=kernel.cz, angle_grid=kernel.angle_grid)


def run_with_snapshots(system: SGSystem, state: SGState, t_final: float,
                       dt: float, n_snapshots: int = 9) -> list:
    """Advance the SG state recording snapshots on the collocation schedule."""
    n_steps = max(1, int(np.ceil(t_final / dt)))
    dtz = t_final / n_steps
    snap_every = n_steps // max(n_snapshots - 1, 1)
    snap_every = max(1, snap_every)
    traj = [(0.0, state.values.copy())]
    for n in range(1, n_steps + 1):
        state = system.step(state, dtz)
        if not np.all(np.isfinite(state.values)):
            raise SolverError(f"SG blowup at t = {state.t:.6g}")
        if n % snap_every == 0 or n == n_steps:
            traj.append((state.t, state.values.copy()))
    return traj


def sg_vs_collocation_error(system: SGSystem, sg_traj: list, runs: list,
                            weights: np.ndarray) -> np.ndarray:
    """L2_z error over time: sum_m w_m || h(z_m) - sum_k h_k psi_k(z_m) ||^2.

    sg_traj is a list of (t, values) SG snapshots aligned with the
    collocation snapshot times.
    """
    z_nodes = np.array([r.z for r in runs])
    psi = system.basis.eval_all(z_nodes)
    n_t = len(sg_traj)
    err = np.empty(n_t)
    for it in range(n_t):
        _, vals = sg_traj[it]
        acc = 0.0
        for m, run in enumerate(runs):
            recon = np.tensordot(psi[:, m], vals, axes=(0, 0))
            diff = run.snapshots[it] - recon
            acc += weights[m] * system.hsl2_norm_sq(diff)
        err[it] = acc
    return np.sqrt(err)


# -- initial data ------------------------------------------------------------


def polynomial_profile(grid: VelocityGrid, coeffs: np.ndarray) -> np.ndarray:
    """Flattened (polynomial in v) * sqrt(M) velocity profile."""
    v1, v2 = grid.meshgrid()
    poly = np.polynomial.polynomial.polyval2d(v1, v2, np.asarray(coeffs, dtype=float))
    m = np.exp(-0.5 * grid.speed_sq()) / (2.0 * np.pi) ** (grid.dv / 2.0)
    return (poly * np.sqrt(m)).ravel()


def x_profile(space: SpaceGrid, kind: str = "sin") -> np.ndarray:
    """Spatial modulation; 'sin' has zero mean so global invariants vanish."""
    if kind == "sin":
        return np.sin(2.0 * np.pi * space.x / space.lx)
    if kind == "uniform":
        return np.ones(space.nx)
    if kind == "two-mode":
        th = 2.0 * np.pi * space.x / space.lx
        return np.sin(th) + 0.5 * np.cos(2.0 * th)
    raise SolverError(f"unknown x profile {kind!r}")


def default_initial_state(system: SGSystem, amplitude: float = 1e-2,
                          profile: str = "sin", seed: int = 0,
                          v_degree: int = 3, project_micro: bool = False,
                          z_weights: np.ndarray | None = None) -> SGState:
    """Mode amplitudes a_k ~ k^(-(q+2)) times an x profile times poly * sqrt(M).

    With project_micro the collision-invariant component is removed from every
    mode (space-homogeneous decay runs need purely microscopic data, since the
    macroscopic component is conserved there).  z_weights overrides the
    default amplitude decay, e.g. with chaos coefficients of a z profile.
    """
    rng = np.random.default_rng(seed)
    K = system.tensors.K
    q = system.energy_cfg.q
    xs = x_profile(system.space, profile)
    vals = np.empty((K, system.space.nx, system.grid.size))
    if z_weights is None:
        ks = np.arange(1, K + 1, dtype=float)
        z_weights = amplitude * ks ** (-(q + 2.0))
    else:
        z_weights = amplitude * np.asarray(z_weights, dtype=float)
    for k in range(K):
        n = v_degree + 1
        coeffs = rng.standard_normal((n, n))
        i, j = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
        coeffs[i + j > v_degree] = 0.0
        prof = polynomial_profile(system.grid, coeffs)
        vals[k] = z_weights[k] * xs[:, None] * prof[None, :]
    state = SGState(values=vals, t=0.0)
    if project_micro:
        state = project_microscopic(system, state)
    return state


def project_microscopic(system: SGSystem, state: SGState) -> SGState:
    """Remove the collision-invariant span from every mode at every x node."""
    inv = system.ref.invariants.reshape(system.ref.n_invariants, -1)
    vals = state.values.copy()
    coeff = np.einsum("kxv,iv->kxi", vals, inv) * system.grid.vol
    vals -= np.einsum("kxi,iv->kxv", coeff, inv)
    return SGState(values=vals, t=state.t)
