"""Three-step solve and the BDDC-preconditioned interface CG.

Step 1 solves the coarse problem for the net-flux components, step 2 adds
independent subdomain solves, and step 3 computes a divergence-free flux
correction by CG on the reduced interface system with the BDDC
preconditioner.  Pressure is recovered from the final flux by a global
SPD least-squares solve and unscaled at the end.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import adaptive as adaptive_mod
from .coarse import CoarseSpace, initial_constraints
from .decomposition import BrokenInterface, build_weights
from .errors import InvalidArgumentError, NonConvergenceError
from .grid import rescale
from .substructure import build_all_subdomains


@dataclass
class SolveConfig:
    tau: float = math.inf
    scaling: str = "multiplicity"
    tol: float = 1e-6
    maxit: int = 5000
    constraints: str = "initial"   # initial | adaptive | multiscale

    def __post_init__(self):
        if not 0.0 < self.tol < 1.0:
            raise InvalidArgumentError("tol must lie in (0, 1)")
        if not self.tau > 1.0:
            raise InvalidArgumentError("tau must exceed 1")
        if self.constraints not in ("initial", "adaptive", "multiscale"):
            raise InvalidArgumentError(
                f"unknown constraint mode {self.constraints!r}")


@dataclass
class SolveReport:
    u: np.ndarray
    p: np.ndarray
    it: int
    kappa: float
    omega_tilde: float
    n_c: int
    residuals: np.ndarray
    u0: np.ndarray = None
    u_star: np.ndarray = None
    eps0: float = None
    eps_star: float = None
    conservation_defect: float = 0.0
    pressure_warning: bool = False
    converged: bool = True


class BddcSetup:
    """Everything reusable across solves: subdomains, constraints, coarse."""

    def __init__(self, system, dec, config):
        if system.D is None:
            system = rescale(system, dec)
        self.system = system
        self.dec = dec
        self.config = config
        self.weights = build_weights(dec, system, config.scaling)
        self.broken = BrokenInterface(self.weights)
        self.subs = build_all_subdomains(system, dec)
        self.cset = initial_constraints(dec)
        self.pair_reports = {}
        self.omega_tilde = None
        if config.constraints == "adaptive" and math.isfinite(config.tau):
            self.pair_reports = adaptive_mod.solve_all_pairs(self)
            adaptive_mod.select_all(self, config.tau)
            self.omega_tilde = adaptive_mod.indicator(
                self.pair_reports, config.tau)
        elif config.constraints == "adaptive":
            self.pair_reports = adaptive_mod.solve_all_pairs(self)
            self.omega_tilde = adaptive_mod.indicator(
                self.pair_reports, config.tau)
        elif config.constraints == "multiscale":
            adaptive_mod.add_multiscale_constraints(self)
        self.coarse = CoarseSpace(self.subs, self.cset)
        self._local_pos = [np.searchsorted(dec.gamma, dec.gamma_dofs[i])
                           for i in range(dec.n_subdomains)]

    # -- interface operator and preconditioner ------------------------------

    def gather(self, x, i):
        return x[self._local_pos[i]]

    def scatter_add(self, x, i, v):
        np.add.at(x, self._local_pos[i], v)

    def schur_matvec(self, x):
        y = np.zeros_like(x)
        for i, sub in enumerate(self.subs):
            self.scatter_add(y, i, sub.schur_apply(self.gather(x, i)))
        return y

    def precondition(self, r):
        """Algorithm-2 BDDC application: coarse + substructure, averaged."""
        coarse_rhs = np.zeros(self.cset.n_flux_coarse)
        loads = []
        for i in range(self.dec.n_subdomains):
            t = self.weights.delta[i] * self.gather(r, i)
            loads.append(t)
            coarse_rhs += self.coarse.weighted_restriction(i, t)
        x, _ = self.coarse.solve(coarse_rhs,
                                 np.zeros(self.dec.n_subdomains))
        out = np.zeros_like(r)
        for i, sub in enumerate(self.subs):
            w_pi = self.coarse.local_combination(i, x)
            load = np.zeros(sub.n_int + sub.n_gamma)
            load[sub.n_int:] = loads[i]
            w_delta = self.coarse.delta_solve(i, load)
            w = w_pi + w_delta
            self.scatter_add(out, i,
                             self.weights.delta[i] * w[sub.n_int:])
        return out

    # -- balance bookkeeping -------------------------------------------------

    def net_flux_matrix(self):
        """Per-subdomain net outflux functionals on interface vectors."""
        if not hasattr(self, "_phi"):
            rows, cols, vals = [], [], []
            for i in range(self.dec.n_subdomains):
                s = self.dec.sign_for(i, self.dec.gamma_dofs[i])
                rows.extend([i] * len(s))
                cols.extend(self._local_pos[i])
                vals.extend(s)
            self._phi = sp.coo_matrix(
                (vals, (rows, cols)),
                shape=(self.dec.n_subdomains, len(self.dec.gamma))).tocsr()
        return self._phi

    def balanced_shift(self, targets):
        """Continuous interface vector with prescribed subdomain net fluxes.

        Distributes face net fluxes uniformly over each face component;
        used to pull step-3 right-hand sides into the balanced subspace.
        """
        dec = self.dec
        comps = [(key, comp) for key in dec.adjacent_pairs()
                 for comp in dec.faces[key]]
        T = np.zeros((dec.n_subdomains, len(comps)))
        for c, ((i, j), comp) in enumerate(comps):
            T[i, c] = 1.0
            T[j, c] = -1.0
        x, *_ = np.linalg.lstsq(T, targets, rcond=None)
        w = np.zeros(len(dec.gamma))
        for c, ((i, j), comp) in enumerate(comps):
            pos = np.searchsorted(dec.gamma, comp.dofs)
            w[pos] += x[c] * comp.sign_i / len(comp.dofs)
        return w

    def project_balanced(self, x):
        """Orthogonal projection onto the balanced subspace.

        The reduced interface problem is a minimization over balanced
        fluxes; its multiplier (per-subdomain constant pressure shifts)
        lives in the row space of the net-flux functionals and must be
        projected out of residuals before CG.
        """
        if not hasattr(self, "_phi_basis"):
            q, r = np.linalg.qr(self.net_flux_matrix().toarray().T)
            keep = np.abs(np.diag(r)) > 1e-12 * np.abs(r).max()
            self._phi_basis = q[:, keep]
        Q = self._phi_basis
        return x - Q @ (Q.T @ x)

    @property
    def n_c(self):
        return self.cset.n_coarse


def pcg(apply_op, apply_prec, rhs, tol=1e-6, maxit=5000, callback=None):
    """Preconditioned CG with a Lanczos condition number estimate.

    Zero initial guess.  Stops when ||r_m|| / ||r_0|| <= tol (2-norm of
    the unpreconditioned reduced residual).
    """
    x = np.zeros_like(rhs)
    r = rhs.copy()
    res0 = np.linalg.norm(r)
    history = [1.0]
    if res0 == 0.0:
        return x, 0, 1.0, np.array(history)
    z = apply_prec(r)
    p = z.copy()
    rz = r @ z
    alphas, betas = [], []
    it = 0
    converged = False
    for it in range(1, maxit + 1):
        Ap = apply_op(p)
        pAp = p @ Ap
        if pAp <= 0:
            raise NonConvergenceError(
                f"non-positive curvature p'Sp = {pAp:.3e} at iteration {it}; "
                "iterate left the balanced subspace")
        alpha = rz / pAp
        x += alpha * p
        r -= alpha * Ap
        alphas.append(alpha)
        relres = np.linalg.norm(r) / res0
        history.append(relres)
        if callback is not None:
            callback(x, r)
        if relres <= tol:
            converged = True
            break
        z = apply_prec(r)
        rz_new = r @ z
        beta = rz_new / rz
        betas.append(beta)
        rz = rz_new
        p = z + beta * p
    kappa = lanczos_condition(alphas, betas)
    if not converged:
        raise NonConvergenceError(
            f"CG did not reach tol {tol} in {maxit} iterations",
            report=(x, it, kappa, np.array(history)))
    return x, it, kappa, np.array(history)


def lanczos_condition(alphas, betas):
    """Condition estimate from the CG tridiagonal Lanczos matrix."""
    m = len(alphas)
    if m == 0:
        return 1.0
    diag = np.empty(m)
    off = np.empty(max(m - 1, 0))
    diag[0] = 1.0 / alphas[0]
    for k in range(1, m):
        diag[k] = 1.0 / alphas[k] + betas[k - 1] / alphas[k - 1]
        off[k - 1] = math.sqrt(max(betas[k - 1], 0.0)) / alphas[k - 1]
    if m == 1:
        return 1.0
    ev = sla.eigh_tridiagonal(diag, off, eigvals_only=True)
    lo = max(ev[0], np.finfo(float).tiny)
    return float(ev[-1] / lo)


def recover_pressure(u, system, tol=1e-6):
    """Least-squares pressure from the momentum equation.

    Solves (Bs Bs^T) p_bar = Bs (-A u) with one cell pinned, unscales,
    and re-centers to zero volume-weighted mean.
    """
    Bs = system.Bs
    g = -(system.A @ u)
    L = (Bs @ Bs.T).tocsc()
    rhs = Bs @ g
    n = L.shape[0]
    keep = np.arange(1, n)
    p_bar = np.zeros(n)
    if n > 1:
        p_bar[1:] = spla.spsolve(L[keep][:, keep], rhs[keep])
    p = system.unscale_pressure(p_bar)
    p -= p.mean()   # uniform cell volume: volume-weighted mean
    num = np.linalg.norm(system.A @ u + Bs.T @ p_bar)
    den = np.linalg.norm(system.A @ u)
    warn = den > 0 and num > 10.0 * tol * den
    return p, warn


def flux_errors(u0, u_star, u_exact):
    """Relative Euclidean dof-norm errors (eps0, eps_star)."""
    nrm = np.linalg.norm(u_exact)
    if nrm == 0:
        raise InvalidArgumentError("exact solution is zero")
    return (np.linalg.norm(u0 - u_exact) / nrm,
            np.linalg.norm(u_star - u_exact) / nrm)


def _suggest_scaling(setup):
    if setup.config.scaling != "multiplicity":
        return
    k = setup.system.perm.k
    for (i, j), comps in setup.dec.faces.items():
        for comp in comps:
            fc = setup.dec.grid.face_cells[setup.dec.grid.dof_face[comp.dofs]]
            ratio = k[fc[:, 0]].max() / max(k[fc[:, 1]].min(), 1e-300)
            if ratio > 1e3 or ratio < 1e-3:
                warnings.warn(
                    "coefficient jumps aligned with the partition detected; "
                    "consider --scaling stiffness")
                return


def solve(system, dec, config, u_exact=None, setup=None,
          iterate_callback=None):
    """Run the three-step method and return a SolveReport.

    `iterate_callback(x, r)` is invoked once per CG iteration with the
    current interface correction and residual (used by invariant tests).
    """
    if setup is None:
        setup = BddcSetup(system, dec, config)
    system = setup.system
    dec = setup.dec
    _suggest_scaling(setup)

    fs = system.fs
    n_u = system.n_flux

    # step 1: coarse components and the averaged trace
    rq = np.array([fs[cells].sum() for cells in dec.cells])
    x0, _ = setup.coarse.solve(np.zeros(setup.cset.n_flux_coarse), rq)
    w_broken = np.zeros(setup.broken.size)
    for i, sub in enumerate(setup.subs):
        w_loc = setup.coarse.local_combination(i, x0)
        setup.broken.local(w_broken, i)[:] = w_loc[sub.n_int:]
    g = setup.broken.average(w_broken)   # continuous interface trace of u0

    u0 = np.zeros(n_u)
    u0[dec.gamma] = g
    u_star = np.zeros(n_u)
    u_star[dec.gamma] = g
    # step 2: independent subdomain solves with the trace fixed
    for i, sub in enumerate(setup.subs):
        gi = setup.gather(g, i)
        u0[sub.interior] = sub.harmonic_extend(gi)[:sub.n_int]
        u_I, _, _ = sub.trace_solve(gi, fs[sub.cells])
        u_star[sub.interior] = u_I

    div_defect = fs - system.Bs @ u_star
    defect_norm = (np.linalg.norm(div_defect)
                   / max(np.linalg.norm(fs), 1e-300))

    # step 3: reduced interface residual, balanced shift, CG correction
    r_full = -(system.A @ u_star)
    r_gamma = r_full[dec.gamma].copy()
    for i, sub in enumerate(setup.subs):
        _, contrib = sub.condense(r_full[sub.interior],
                                  div_defect[sub.cells])
        setup.scatter_add(r_gamma, i, -contrib)

    # subdomain net-flux targets for the correction (nonzero only when the
    # scaling breaks conservation of u_star)
    targets = np.array([-div_defect[cells].sum() / system.D[cells[0]]
                        for cells in dec.cells])
    if np.abs(targets).max() > 1e-13 * max(np.abs(fs).sum(), 1.0):
        w_p = setup.balanced_shift(targets)
        r_gamma -= setup.schur_matvec(w_p)
    else:
        w_p = np.zeros_like(r_gamma)
    r_gamma = setup.project_balanced(r_gamma)

    try:
        w_cg, it, kappa, history = pcg(
            lambda x: setup.project_balanced(setup.schur_matvec(x)),
            lambda r: setup.project_balanced(setup.precondition(r)),
            r_gamma, tol=config.tol, maxit=config.maxit,
            callback=iterate_callback)
        converged = True
    except NonConvergenceError as exc:
        if exc.report is None:
            raise
        w_cg, it, kappa, history = exc.report
        converged = False
    u_corr_gamma = w_p + w_cg

    # interior recovery of the correction
    u = u_star.copy()
    u[dec.gamma] += u_corr_gamma
    for i, sub in enumerate(setup.subs):
        gi = setup.gather(u_corr_gamma, i)
        uI, _, _ = sub._kkt_solve(
            r_full[sub.interior] - sub.A_IG @ gi,
            div_defect[sub.cells] - sub.B_G @ gi)
        u[sub.interior] += uI

    p, p_warn = recover_pressure(u, system, tol=config.tol)

    omega = setup.omega_tilde if setup.omega_tilde is not None else float("nan")
    report = SolveReport(
        u=u, p=p, it=it, kappa=kappa, omega_tilde=omega,
        n_c=setup.n_c, residuals=history, u0=u0, u_star=u_star,
        conservation_defect=defect_norm, pressure_warning=p_warn,
        converged=converged)
    if u_exact is not None:
        report.eps0, report.eps_star = flux_errors(u0, u_star, u_exact)
    if not converged:
        raise NonConvergenceError(
            f"CG did not converge in {config.maxit} iterations",
            report=report)
    return report
