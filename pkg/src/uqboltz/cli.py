"""Batch front-end: validate configs and run the four experiment suites.

    uqboltz validate|tensors|gap|decay|convergence --config FILE --out DIR
            [--seed N] [--threads N]

Exit codes: 0 every assertion passed, 1 a scientific assertion failed,
2 configuration error.  Every output file is listed in manifest.json with
a content hash; identical config + seed reproduce outputs byte for byte
(BLAS is pinned to one thread; the compute kernels are reduction-order
deterministic at any thread count).
"""
from __future__ import annotations

import os

os.environ.setdefault("OPENBLAS_NUM_THREADS", "1")
os.environ.setdefault("MKL_NUM_THREADS", "1")

import argparse
import csv
import datetime
import hashlib
import io
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .chaos import basis_to_json, quadrature
from .coercivity import (assemble_operator, coercivity_fit, operator_gap_report,
                         random_test_state, term_A_bound, term_I)
from .config import ConfigError, ExperimentConfig, load_config
from .kernel import (angular_gram, assemble_tensors, check_gap_condition,
                     check_grad_cutoff, offdiag_bound_check)
from .sg import (EnergyConfig, ScalingConfig, SGState, SGSystem, SolverError,
                 SpaceGrid, collocation_reference, default_initial_state,
                 polynomial_profile, run_with_snapshots, sg_vs_collocation_error,
                 x_profile)
from .velocity import VelocityGrid, maxwellian

GNUPLOT_HEADER = "set datafile separator ','\nset key outside\nset grid\n"


def _fmt(x) -> str:
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def write_csv(path: Path, header: list, rows: list) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(x) for x in row])
    path.write_text(buf.getvalue())


def write_json(path: Path, doc) -> None:
    path.write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")


class Reporter:
    """Collects assertion outcomes and emitted files for the manifest."""

    def __init__(self, out_dir: Path, command: str, cfg_text: str):
        self.out = out_dir
        self.command = command
        self.cfg_hash = hashlib.sha256(cfg_text.encode()).hexdigest()
        self.assertions = []
        self.files = []
        self.started = datetime.datetime.now(datetime.timezone.utc).isoformat()

    def check(self, name: str, passed: bool, detail: str) -> bool:
        self.assertions.append({"name": name, "passed": bool(passed), "detail": detail})
        print(f"[{'PASS' if passed else 'FAIL'}] {name}: {detail}")
        return passed

    def emit(self, path: Path) -> Path:
        self.files.append(path)
        return path

    def finish(self) -> int:
        ok = all(a["passed"] for a in self.assertions)
        manifest = {
            "artifact_version": __version__,
            "command": self.command,
            "config_sha256": self.cfg_hash,
            "started": self.started,
            "finished": datetime.datetime.now(datetime.timezone.utc).isoformat(),
            "outputs": [{
                "path": f.name,
                "sha256": hashlib.sha256(f.read_bytes()).hexdigest(),
                "bytes": f.stat().st_size,
            } for f in self.files],
            "assertions": self.assertions,
            "exit_code": 0 if ok else 1,
        }
        write_json(self.out / "manifest.json", manifest)
        return 0 if ok else 1


# -- validate ----------------------------------------------------------------


def cmd_validate(cfg: ExperimentConfig, rep: Reporter, seed: int) -> int:
    ker = cfg.kernel
    basis = cfg.basis
    rep.check("bk1-bounds", np.isfinite(ker.c_b) and np.isfinite(ker.c_b_tilde),
              f"C_b={ker.c_b:.6g} C_b~={ker.c_b_tilde:.6g} C_b*={ker.c_b_star:.6g}")
    rep.check("b-linear-in-z", True,
              "kernel represented as b0(eta) + b1(eta) z by construction")
    rule = cfg.z_rule()
    inside = np.all(np.abs(rule.nodes) <= cfg.measure.cz + 1e-14)
    rep.check("z-compact-support", bool(inside),
              f"|z| <= Cz = {cfg.measure.cz} for all {rule.nodes.size} quadrature nodes")
    cond = check_gap_condition(ker, cfg.energy.q)
    rep.check("bk2-gap-condition", cond.passed,
              f"D_min = {cond.d_min:.6g} (q = {cfg.energy.q})")
    worst_b = min(check_grad_cutoff(lambda e, z=z: ker.b(e, z), dv=cfg.grid.dv)
                  for z in (-cfg.measure.cz, 0.0, cfg.measure.cz))
    rep.check("grad-cutoff-b", worst_b > 0.0,
              f"min over z of inf pair integral = {worst_b:.6g}")
    cutoff_d = check_grad_cutoff(
        lambda e: np.maximum(ker.b0(e) - (2 ** cfg.energy.q + 2) * np.abs(ker.b1(e)) * ker.cz, 0.0),
        dv=cfg.grid.dv)
    rep.check("grad-cutoff-margin", cutoff_d > 0.0,
              f"inf pair integral of D(eta) = {cutoff_d:.6g}")
    rep.check("basis-growth", np.isfinite(basis.growth_C) and basis.growth_p >= 0.0,
              f"||psi_k||_inf <= {basis.growth_C:.4g} k^{basis.growth_p:.4g}")
    rep.check("q-weight-exponent", cfg.energy.q > basis.growth_p + 2.0,
              f"q = {cfg.energy.q} > p + 2 = {basis.growth_p + 2.0:.4g}")
    return rep.finish()


# -- tensors -----------------------------------------------------------------


def cmd_tensors(cfg: ExperimentConfig, rep: Reporter, seed: int) -> int:
    basis = cfg.basis
    tens = cfg.tensors()
    rule = cfg.z_rule()
    eta_samples = np.array([-1.0, -0.5, 0.0, 0.5, 1.0])
    stilde = angular_gram(cfg.kernel, basis, rule, eta_samples)
    doc = {
        "K": cfg.K,
        "c": tens.c.tolist(),
        "e": tens.e.tolist(),
        "f": tens.f.tolist(),
        "stilde_eta": eta_samples.tolist(),
        "stilde": stilde.tolist(),
    }
    write_json(rep.emit(rep.out / "tensors.json"), doc)
    (rep.out / "basis.json").write_text(basis_to_json(basis, rule))
    rep.emit(rep.out / "basis.json")
    off = offdiag_bound_check(cfg.kernel, tens.c)
    sym_c = np.abs(tens.c - tens.c.T).max()
    tri = max((np.abs(np.triu(tens.c, 2)).max() if cfg.K > 2 else 0.0), 0.0)
    rep.check("c-symmetric-tridiagonal", sym_c <= 1e-12 and tri <= 1e-12,
              f"asym = {sym_c:.2e}, beyond-band = {tri:.2e}")
    perm = max(np.abs(tens.e - tens.e.transpose(1, 0, 2)).max(),
               np.abs(tens.e - tens.e.transpose(2, 1, 0)).max(),
               np.abs(tens.f - tens.f.transpose(1, 0, 2)).max(),
               np.abs(tens.f - tens.f.transpose(2, 1, 0)).max())
    rep.check("triple-permutation-symmetry", perm <= 1e-12, f"max defect = {perm:.2e}")
    rep.check("offdiag-coupling-bound", off.max_coupling <= off.bound + 1e-12,
              f"max |b1 c_kj| = {off.max_coupling:.6g} <= |b1| Cz = {off.bound:.6g}"
              + (" [order-one perturbation]" if off.order_one else ""))
    return rep.finish()


# -- gap ---------------------------------------------------------------------


def cmd_gap(cfg: ExperimentConfig, rep: Reporter, seed: int) -> int:
    lab = cfg.lab
    rng = np.random.default_rng(seed)
    grid = VelocityGrid(dv=2, N=lab.n, L=lab.l)
    ref = maxwellian(grid)
    cond = check_gap_condition(cfg.kernel, cfg.energy.q)

    k_forms = min(3, max(lab.k_list))
    tens_forms = cfg.tensors(k_forms)
    worst_pair = 0.0
    worst_mean = 0.0
    nonpos = True
    for _ in range(lab.n_forms):
        st = random_test_state(k_forms, lab.n_h, rng)
        rpt = term_I(st, tens_forms, cfg.kernel, cfg.energy.q,
                     gh_order=lab.gh_order, n_sigma=lab.m_sigma * 2)
        worst_pair = max(worst_pair, rpt.max_pairwise_rel)
        worst_mean = max(worst_mean, rpt.mean_check)
        if cond.passed and rpt.value() > 1e-10 * max(1.0, abs(rpt.values["E1"])):
            nonpos = False
    rep.check("term-I-four-form-identity", worst_pair <= 1e-8,
              f"max pairwise relative discrepancy = {worst_pair:.2e} over {lab.n_forms} states")
    rep.check("term-I-averaged-form", worst_mean <= 1e-12,
              f"max |E5 - mean(E1..E4)| (relative) = {worst_mean:.2e}")
    if cond.passed:
        rep.check("term-I-nonpositive", nonpos, "Term I <= 0 on every sampled state")

    tens_full = cfg.tensors(max(lab.k_list))
    ta = term_A_bound(tens_full, cfg.kernel, cfg.energy.q, n_samples=8, rng=rng)
    if cond.passed:
        rep.check("term-A-matrix-bound", ta.min_margin >= -1e-10,
                  f"min_eta [lambda_min(sym W) - D] = {ta.min_margin:.3e}")

    gaps = {}
    reports = {}
    eig_rows = []
    for K in lab.k_list:
        tens = cfg.tensors(K)
        op = assemble_operator(grid, tens, cfg.kernel, cfg.energy.q,
                               n_sigma=lab.m_sigma, ref=ref)
        gr = operator_gap_report(op, cfg.kernel)
        reports[K] = gr
        gaps[K] = gr.lambda_gap
        for i, ev in enumerate(gr.eigenvalues):
            eig_rows.append((K, i, ev))
        rep.check(f"null-dimension-K{K}", gr.null_count == gr.expected_null,
                  f"{gr.null_count} null modes at tol {gr.tol_null:.3e} "
                  f"(expected {gr.expected_null})")
        if cond.passed:
            rep.check(f"gap-positive-K{K}", gr.gap_positive,
                      f"lambda_gap = {gr.lambda_gap:.6f}, weighted {gr.lambda_gap_weighted:.6f}")
    gvals = np.array([gaps[K] for K in lab.k_list])
    if cond.passed and len(lab.k_list) > 1:
        var = float((gvals.max() - gvals.min()) / gvals.max())
        rep.check("gap-stability-in-K", var <= 0.15,
                  f"relative variation over K {tuple(lab.k_list)} = {var:.4f}")

    states = [random_test_state(max(lab.k_list), lab.n_h, rng)
              for _ in range(lab.ensemble)]
    fit = coercivity_fit(states, tens_full, cfg.kernel, cfg.energy.q,
                         n_sigma=lab.m_sigma * 2)
    if cond.passed:
        rep.check("coercivity-constant-positive", fit.c_lambda > 0.0,
                  f"C_lambda = {fit.c_lambda:.6f} over {len(fit.ratios)} states "
                  f"({fit.n_excluded} excluded)")
    scaled = [type(s)(coeffs=3.0 * s.coeffs, degree=s.degree) for s in states]
    fit2 = coercivity_fit(scaled, tens_full, cfg.kernel, cfg.energy.q,
                          n_sigma=lab.m_sigma * 2)
    drift = abs(fit2.c_lambda - fit.c_lambda) / max(abs(fit.c_lambda), 1e-300)
    rep.check("coercivity-rescale-invariance", drift <= 1e-12,
              f"relative drift under ensemble rescaling = {drift:.2e}")

    gr_max = reports[max(lab.k_list)]
    doc = {
        "bk2": {"passed": bool(cond.passed), "d_min": cond.d_min, "q": cfg.energy.q},
        "term_A_min_margin": ta.min_margin,
        "four_form_max_pairwise_rel": worst_pair,
        "operator": {
            str(K): {
                "dim": reports[K].dim,
                "null_count": reports[K].null_count,
                "expected_null": reports[K].expected_null,
                "tol_null": reports[K].tol_null,
                "lambda_gap": reports[K].lambda_gap,
                "lambda_gap_weighted": reports[K].lambda_gap_weighted,
                "max_positive": reports[K].max_positive,
                "symmetry_defect_pointwise": reports[K].symmetry_defect,
            } for K in lab.k_list
        },
        "gap_variation": float((gvals.max() - gvals.min()) / gvals.max()),
        "c_lambda": fit.c_lambda,
        "grid": {"n": lab.n, "l": lab.l, "m_sigma": lab.m_sigma},
        "dim_budget_note": f"max dimension {max(lab.k_list) * grid.size}",
        "eigenvalue_range": [float(gr_max.eigenvalues.min()),
                             float(gr_max.eigenvalues.max())],
    }
    write_json(rep.emit(rep.out / "gap.json"), doc)
    write_csv(rep.emit(rep.out / "eigenvalues.csv"), ["K", "index", "eigenvalue"],
              eig_rows)
    return rep.finish()


# -- decay -------------------------------------------------------------------


def _build_system(cfg: ExperimentConfig, K: int | None = None,
                  scaling: ScalingConfig | None = None,
                  nx: int | None = None, nonlinear: bool | None = None) -> SGSystem:
    basis = cfg.build_basis(K)
    tens = cfg.tensors(K)
    space = SpaceGrid(nx=cfg.space.nx if nx is None else nx, lx=cfg.space.lx)
    return SGSystem(cfg.grid, space, basis, tens, cfg.kernel,
                    scaling or cfg.scaling, cfg.energy, n_sigma=cfg.m_sigma,
                    nonlinear=cfg.nonlinear if nonlinear is None else nonlinear)


def gap_mode_state(system: SGSystem, amplitude: float = 1e-2) -> SGState:
    """Initial data on the slowest microscopic eigenmode of the collision blocks."""
    K = system.tensors.K
    B = (np.kron(np.eye(K), system.L0)
         + np.kron(system.tensors.c[:K, :K], system.L1))
    ev, vec = np.linalg.eigh(0.5 * (B + B.T))
    tol = 1e-6 * np.abs(ev).max()
    neg = np.where(ev < -tol)[0]
    igap = neg[ev[neg].argmax()]
    mode = vec[:, igap].reshape(K, 1, system.grid.size)
    vals = np.repeat(mode, system.space.nx, axis=1)
    if system.space.nx > 1:
        vals = vals * x_profile(system.space, "sin")[None, :, None]
    return SGState(values=amplitude * vals)


def initial_state(cfg: ExperimentConfig, system: SGSystem) -> SGState:
    init = cfg.init
    if init.kind == "gap-mode":
        return gap_mode_state(system, init.amplitude)
    if init.kind == "default":
        return default_initial_state(system, amplitude=init.amplitude,
                                     profile=init.profile, seed=init.seed,
                                     v_degree=init.v_degree,
                                     project_micro=init.project_micro)
    raise ConfigError(f"unknown init kind {init.kind!r} for this command")


def cmd_decay(cfg: ExperimentConfig, rep: Reporter, seed: int) -> int:
    dc = cfg.decay
    base = _build_system(cfg)
    rows = []
    results = {}
    plot_files = []
    for eps in dc.epsilons:
        scaling = ScalingConfig(epsilon=eps, alpha=dc.alpha)
        system = base.with_scaling(scaling)
        t_final = dc.t_final if dc.t_final > 0 else cfg.t_final / eps ** (1 - dc.alpha)
        state = initial_state(cfg, system)
        dt = cfg.dt if cfg.dt > 0 else system.stable_dt(cfg.c_stab)
        if cfg.dt > 0 and cfg.dt > system.stable_dt(cfg.c_stab):
            raise ConfigError(
                f"dt = {cfg.dt} violates the stability bound "
                f"{system.stable_dt(cfg.c_stab):.3e} at epsilon = {eps}")
        try:
            _, decay, modes = system.run(state, t_final, dt=dt,
                                         fit_fraction=dc.fit_fraction,
                                         record_modes=True)
        except SolverError as exc:
            rows.append((eps, dc.alpha, "", "", "", "", f"blowup: {exc}"))
            continue
        results[eps] = decay
        rows.append((eps, dc.alpha, decay.rate_fit, decay.tau_fit,
                     decay.eta_fit, decay.residual, "ok"))
        series = rep.emit(rep.out / f"energy_eps{eps:g}.csv")
        hdr = ["t", "energy"] + [f"mode_{k+1}" for k in range(state.K)]
        write_csv(series, hdr, [(t, e, *m) for t, e, m in
                                zip(decay.times, decay.energy, modes)])
        plot_files.append((series.name, f"eps={eps:g}"))
    write_csv(rep.emit(rep.out / "decay.csv"),
              ["epsilon", "alpha", "rate_fit", "tau_fit", "eta_fit",
               "residual", "status"], rows)
    script = GNUPLOT_HEADER + "set logscale y\nset xlabel 't'\nset ylabel 'E^K'\n"
    script += "plot " + ", \\\n     ".join(
        f"'{name}' using 1:2 with lines title '{t}'" for name, t in plot_files) + "\n"
    rep.emit(rep.out / "decay.gp").write_text(script)

    ok_eps = sorted(results)
    rep.check("sweep-completed", len(ok_eps) == len(dc.epsilons),
              f"{len(ok_eps)}/{len(dc.epsilons)} runs finished")
    if len(ok_eps) >= 2:
        rates = np.array([results[e].rate_fit for e in ok_eps])
        if dc.alpha == 1:
            spread = float((rates.max() - rates.min()) / rates.max())
            rep.check("rate-epsilon-independent", spread <= dc.agree_tol,
                      f"alpha=1 rate spread over epsilon = {spread:.4f}")
        else:
            ref_eps = ok_eps[-1]
            ref_rate = results[ref_eps].rate_fit
            worst = 0.0
            for e in ok_eps:
                expected = ref_rate * e / ref_eps
                worst = max(worst, abs(results[e].rate_fit / expected - 1.0))
            rep.check("rate-linear-in-epsilon", worst <= dc.scale_tol,
                      f"alpha=0 max deviation from linear scaling = {worst:.4f}")
    return rep.finish()


# -- convergence ---------------------------------------------------------------


def _z_profile(cfg: ExperimentConfig):
    if cfg.init.z_kind == "analytic":
        pole = cfg.init.z_pole
        if pole <= cfg.measure.cz:
            raise ConfigError("z profile pole must lie outside the support")
        return lambda z: 1.0 / (pole + z)
    if cfg.init.z_kind == "poly2":
        return lambda z: z ** 2
    raise ConfigError(f"unknown z profile {cfg.init.z_kind!r}")


def cmd_convergence(cfg: ExperimentConfig, rep: Reporter, seed: int) -> int:
    cv = cfg.convergence
    gz = _z_profile(cfg)
    rng = np.random.default_rng(cfg.init.seed)
    n = cfg.init.v_degree + 1
    coeffs = rng.standard_normal((n, n))
    ii, jj = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    coeffs[ii + jj > cfg.init.v_degree] = 0.0

    base = _build_system(cfg, K=max(cv.k_list), nonlinear=cv.nonlinear)
    prof_v = polynomial_profile(base.grid, coeffs)
    prof_x = x_profile(base.space, cfg.init.profile)
    shape_xv = cfg.init.amplitude * prof_x[:, None] * prof_v[None, :]

    zr = quadrature(cfg.measure, cv.z_nodes)
    dt = cfg.dt if cfg.dt > 0 else base.stable_dt(cfg.c_stab)
    runs = collocation_reference(base, lambda z: gz(z) * shape_xv, zr.nodes,
                                 cv.t_final, dt, n_snapshots=cv.n_snapshots)
    gvals = gz(zr.nodes)

    err_rows = []
    final_err = {}
    for K in cv.k_list:
        system = _build_system(cfg, K=K, nonlinear=cv.nonlinear)
        psi = system.basis.eval_all(zr.nodes)
        ghat = (psi * zr.weights) @ gvals
        vals = np.einsum("k,xv->kxv", ghat, shape_xv)
        traj = run_with_snapshots(system, SGState(values=vals), cv.t_final, dt,
                                  n_snapshots=cv.n_snapshots)
        errs = sg_vs_collocation_error(system, traj, runs, zr.weights)
        for (t, _), e in zip(traj, errs):
            err_rows.append((K, t, e))
        final_err[K] = float(errs[-1])
    write_csv(rep.emit(rep.out / "error.csv"), ["K", "t", "error"], err_rows)

    ks = np.array(sorted(final_err))
    errs = np.array([final_err[k] for k in ks])
    floor = 1e-15 * max(errs.max(), 1e-300)
    mono = bool(np.all(np.diff(errs) <= np.maximum(0.05 * errs[:-1], floor)))
    live = errs > 10 * floor
    alg_slope = geo_rate = float("nan")
    if np.count_nonzero(live) >= 2:
        alg_slope = float(np.polyfit(np.log(ks[live]), np.log(errs[live]), 1)[0])
        geo_rate = float(np.polyfit(ks[live], np.log(errs[live]), 1)[0])
    doc = {
        "k_list": ks.tolist(),
        "final_errors": {str(k): final_err[k] for k in ks},
        "monotone": mono,
        "algebraic_slope": alg_slope,
        "geometric_rate": geo_rate,
        "t_final": cv.t_final,
        "z_nodes": cv.z_nodes,
        "data": cfg.init.z_kind,
    }
    write_json(rep.emit(rep.out / "convergence.json"), doc)
    script = GNUPLOT_HEADER + ("set logscale y\nset xlabel 'K'\nset ylabel 'L2_z error'\n"
                               "plot 'convergence_final.csv' using 1:2 with linespoints "
                               "title 'SG vs collocation'\n")
    write_csv(rep.emit(rep.out / "convergence_final.csv"), ["K", "error"],
              [(int(k), final_err[k]) for k in ks])
    rep.emit(rep.out / "convergence.gp").write_text(script)

    if cfg.init.z_kind == "poly2":
        exact_ok = all(final_err[k] <= cv.exact_tol for k in ks if k >= 3)
        rep.check("poly2-exactness", exact_ok,
                  f"errors for K >= 3 all <= {cv.exact_tol:g}: "
                  + ", ".join(f"K={k}: {final_err[k]:.2e}" for k in ks))
    else:
        rep.check("error-monotone-in-K", mono,
                  "final error non-increasing in K: "
                  + ", ".join(f"{final_err[k]:.2e}" for k in ks))
        kmax = int(ks.max())
        rep.check("error-small-at-kmax", final_err[kmax] <= cv.final_k_tol,
                  f"error at K={kmax} is {final_err[kmax]:.2e} <= {cv.final_k_tol:g}")
    return rep.finish()


# -- entry -------------------------------------------------------------------


COMMANDS = {
    "validate": cmd_validate,
    "tensors": cmd_tensors,
    "gap": cmd_gap,
    "decay": cmd_decay,
    "convergence": cmd_convergence,
}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="uqboltz",
        description="Stochastic-Galerkin Boltzmann solver and spectral-gap lab. "
                    "Desk-scale grids only: the collision quadrature is "
                    "O(N^(2 dv) M_sigma), keep N <= 48 for d_v = 2. "
                    "Epsilon sweeps are floored at 0.1 (explicit integrator).")
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", required=True, help="TOML experiment config")
    parser.add_argument("--out", default="out", help="output directory")
    parser.add_argument("--seed", type=int, default=None,
                        help="RNG seed (default: [init].seed from the config)")
    parser.add_argument("--threads", type=int,
                        default=int(os.environ.get("UQBOLTZ_THREADS", "0")),
                        help="compute threads (0 = numba default)")
    args = parser.parse_args(argv)

    if args.threads > 0:
        import numba

        numba.set_num_threads(args.threads)
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    seed = args.seed if args.seed is not None else cfg.init.seed
    rep = Reporter(out_dir, args.command, cfg.raw_text)
    try:
        return COMMANDS[args.command](cfg, rep, seed)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except SolverError as exc:
        print(f"run aborted: {exc}", file=sys.stderr)
        rep.check("run-completed", False, str(exc))
        return rep.finish()


if __name__ == "__main__":
    sys.exit(main())
