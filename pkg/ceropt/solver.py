"""
Interior point NLP solver and the epsilon-relaxation homotopy.

Problems follow the `NLP` protocol:

    min f(z)   s.t.  c_lower <= c(z) <= c_upper,   x_lower <= z <= x_upper

The built-in backend reformulates inequality rows with slacks,

    min f(z)  s.t.  c_E(z) = c_E,  c_I(z) - s = 0,  bounds on (z, s),

eliminates fixed variables, and runs a primal-dual barrier method with a
filter line search (monotone barrier update, fraction-to-boundary rule,
sparse LU on the KKT system with diagonal regularization, Gauss-Newton
feasibility restoration).
"""
from __future__ import annotations

import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import Protocol

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu
from tqdm.auto import tqdm

from ceropt.autodiff import value_of, jacobian as ad_jacobian, hessian as ad_hessian
from ceropt.constants import SOLVER_DEFAULTS

logger = logging.getLogger(__name__)


class SolverError(RuntimeError):
    """
    Raised when a problem cannot be handed to the solver (inconsistent sizes or bounds).
    Non-convergence is reported through SolveReport.status instead.
    """


class SolveStatus(str, Enum):
    CONVERGED = "converged"
    MAX_ITER = "max-iter"
    INFEASIBLE = "infeasible"


class NLP(Protocol):
    n_variables: int
    n_constraints: int
    x_lower: np.ndarray
    x_upper: np.ndarray
    c_lower: np.ndarray
    c_upper: np.ndarray

    def objective(self, z) -> float: ...
    def gradient(self, z) -> np.ndarray: ...
    def constraints(self, z) -> np.ndarray: ...
    def jacobian(self, z) -> sp.spmatrix: ...
    def hessian(self, z, obj_factor: float, multipliers) -> sp.spmatrix: ...


@dataclass
class NlpSolution:
    """Primal-dual point in the problem's own indexing (usable as a warm start)."""
    z: np.ndarray
    multipliers: np.ndarray     # (M,) Lagrangian f + y . c
    bound_lower: np.ndarray     # (N,) multipliers of x_lower
    bound_upper: np.ndarray     # (N,)
    row_lower: np.ndarray       # (M,) multipliers of c_lower on inequality rows
    row_upper: np.ndarray       # (M,)
    objective: float
    mu: float = 0.0


@dataclass
class BackendResult:
    solution: NlpSolution
    status: SolveStatus
    iterations: int
    message: str = ""


@dataclass
class SolveReport:
    status: SolveStatus
    objective: float
    max_defect: float
    max_complementarity: float
    eps_trace: list[float] = field(default_factory=list)
    iterations: list[int] = field(default_factory=list)
    wall_time: float = 0.0
    message: str = ""
    final_epsilon: float | None = None
    objective_breakdown: dict | None = None
    stages: list[dict] = field(default_factory=list)

    @property
    def converged(self) -> bool:
        return self.status == SolveStatus.CONVERGED

    def to_dict(self) -> dict:
        return {
            "status": self.status.value,
            "objective": self.objective,
            "max_defect": self.max_defect,
            "max_complementarity": self.max_complementarity,
            "eps_trace": list(self.eps_trace),
            "iterations": list(self.iterations),
            "wall_time": self.wall_time,
            "message": self.message,
            "final_epsilon": self.final_epsilon,
            "objective_breakdown": self.objective_breakdown,
            "stages": list(self.stages),
        }


# ------------------------------------------------------------------
# Dense adapter (small problems, derivatives through ceropt.autodiff)

class DenseNLP:
    """
    Wraps NumPy callables f(z) -> scalar and c(z) -> (M,) into the NLP protocol.
    """

    def __init__(self, f, x0, c=None, x_lower=None, x_upper=None, c_lower=None, c_upper=None):
        self.f = f
        self.c = c if c is not None else (lambda z: np.zeros(0))
        self.x0 = np.asarray(x0, dtype=float)
        self.n_variables = self.x0.size
        self.n_constraints = int(np.asarray(value_of(self.c(self.x0))).size)
        n, m = self.n_variables, self.n_constraints
        self.x_lower = np.full(n, -np.inf) if x_lower is None else np.asarray(x_lower, dtype=float)
        self.x_upper = np.full(n, np.inf) if x_upper is None else np.asarray(x_upper, dtype=float)
        self.c_lower = np.zeros(m) if c_lower is None else np.asarray(c_lower, dtype=float)
        self.c_upper = np.zeros(m) if c_upper is None else np.asarray(c_upper, dtype=float)

    def objective(self, z) -> float:
        return float(value_of(self.f(np.asarray(z, dtype=float))))

    def gradient(self, z) -> np.ndarray:
        return np.asarray(ad_jacobian(self.f, z), dtype=float).reshape(self.n_variables)

    def constraints(self, z) -> np.ndarray:
        return np.asarray(value_of(self.c(np.asarray(z, dtype=float))), dtype=float).reshape(self.n_constraints)

    def jacobian(self, z) -> sp.csr_matrix:
        if self.n_constraints == 0:
            return sp.csr_matrix((0, self.n_variables))
        return sp.csr_matrix(ad_jacobian(self.c, z).reshape(self.n_constraints, self.n_variables))

    def hessian(self, z, obj_factor: float, multipliers) -> sp.csr_matrix:
        multipliers = np.asarray(multipliers, dtype=float)

        def lagrangian(v):
            value = obj_factor * self.f(v)
            if self.n_constraints:
                value = value + np.sum(multipliers * self.c(v))
            return value

        return sp.csr_matrix(ad_hessian(lagrangian, z))

    def initial_point(self, **_) -> np.ndarray:
        return self.x0.copy()


# ------------------------------------------------------------------
# Interior point backend

def _norm_inf(v) -> float:
    return float(np.max(np.abs(v))) if v.size else 0.0


def _max_step(gap: np.ndarray, dgap: np.ndarray, tau: float) -> float:
    """Largest alpha in (0, 1] keeping gap + alpha dgap >= (1 - tau) gap."""
    shrinking = dgap < 0
    if not np.any(shrinking):
        return 1.0
    return float(min(1.0, np.min(-tau * gap[shrinking] / dgap[shrinking])))


class _KKTFailure(Exception):
    pass


class _Reduced:
    """Slack reformulation and fixed-variable elimination of an NLP."""

    def __init__(self, problem: NLP):
        xl = np.asarray(problem.x_lower, dtype=float)
        xu = np.asarray(problem.x_upper, dtype=float)
        cl = np.asarray(problem.c_lower, dtype=float)
        cu = np.asarray(problem.c_upper, dtype=float)
        N, M = problem.n_variables, problem.n_constraints
        if xl.shape != (N,) or xu.shape != (N,) or cl.shape != (M,) or cu.shape != (M,):
            raise SolverError("bound arrays do not match the problem dimensions")
        if np.any(xl > xu) or np.any(cl > cu):
            raise SolverError("lower bounds exceed upper bounds")

        self.problem = problem
        self.N, self.M = N, M
        self.x_lower = xl
        self.fixed = xl == xu
        self.free = np.flatnonzero(~self.fixed)
        self.eq = cl == cu
        self.eq_rows = np.flatnonzero(self.eq)
        self.ineq_rows = np.flatnonzero(~self.eq)
        self.c_target = cl[self.eq_rows]
        self.nF = self.free.size
        self.nI = self.ineq_rows.size
        self.n = self.nF + self.nI

        self.lower = np.concatenate([xl[self.free], cl[self.ineq_rows]])
        self.upper = np.concatenate([xu[self.free], cu[self.ineq_rows]])
        self.idx_l = np.flatnonzero(np.isfinite(self.lower))
        self.idx_u = np.flatnonzero(np.isfinite(self.upper))
        self._slack_block = sp.csr_matrix(
            (-np.ones(self.nI), (self.ineq_rows, np.arange(self.nI))), shape=(M, self.nI)
        )

    def full_z(self, w: np.ndarray) -> np.ndarray:
        z = self.x_lower.copy()
        z[self.free] = w[:self.nF]
        return z

    def initial_w(self, z: np.ndarray, c: np.ndarray) -> np.ndarray:
        return np.concatenate([z[self.free], c[self.ineq_rows]])

    def residual(self, w: np.ndarray, c: np.ndarray) -> np.ndarray:
        h = np.empty(self.M)
        h[self.eq_rows] = c[self.eq_rows] - self.c_target
        h[self.ineq_rows] = c[self.ineq_rows] - w[self.nF:]
        return h

    def grad_w(self, g: np.ndarray) -> np.ndarray:
        return np.concatenate([g[self.free], np.zeros(self.nI)])

    def jac_w(self, J) -> sp.csr_matrix:
        J = sp.csr_matrix(J)
        return sp.hstack([J[:, self.free], self._slack_block], format="csr")

    def hess_w(self, H) -> sp.csr_matrix:
        H = sp.csr_matrix(H)
        Hf = H[self.free][:, self.free]
        if self.nI == 0:
            return Hf.tocsr()
        return sp.block_diag([Hf, sp.csr_matrix((self.nI, self.nI))], format="csr")

    def bound_multipliers_w(self, solution: NlpSolution):
        lower = np.concatenate([solution.bound_lower[self.free], solution.row_lower[self.ineq_rows]])
        upper = np.concatenate([solution.bound_upper[self.free], solution.row_upper[self.ineq_rows]])
        return lower[self.idx_l], upper[self.idx_u]

    def to_solution(self, w, y, zl, zu, objective, mu) -> NlpSolution:
        full_l = np.zeros(self.n)
        full_u = np.zeros(self.n)
        full_l[self.idx_l] = zl
        full_u[self.idx_u] = zu
        bound_lower = np.zeros(self.N)
        bound_upper = np.zeros(self.N)
        bound_lower[self.free] = full_l[:self.nF]
        bound_upper[self.free] = full_u[:self.nF]
        row_lower = np.zeros(self.M)
        row_upper = np.zeros(self.M)
        row_lower[self.ineq_rows] = full_l[self.nF:]
        row_upper[self.ineq_rows] = full_u[self.nF:]
        return NlpSolution(
            z=self.full_z(w),
            multipliers=y.copy(),
            bound_lower=bound_lower,
            bound_upper=bound_upper,
            row_lower=row_lower,
            row_upper=row_upper,
            objective=float(objective),
            mu=float(mu),
        )


class InteriorPointBackend:
    """
    Primal-dual interior point method with a filter line search.
    """
    name = "interior-point"

    # line search / barrier constants
    kappa_eps = 10.0
    kappa_mu = 0.2
    theta_mu = 1.5
    tau_min = 0.99
    kappa_sigma = 1e10
    s_max = 100.0
    gamma_theta = 1e-5
    gamma_phi = 1e-5
    gamma_alpha = 0.05
    eta_phi = 1e-4
    s_theta = 1.1
    s_phi = 2.3
    switch_delta = 1.0
    max_restoration_iter = 50

    def __init__(
        self,
        max_iter: int = SOLVER_DEFAULTS["max_iter"],
        tol: float = SOLVER_DEFAULTS["tol"],
        feas_tol: float = SOLVER_DEFAULTS["feas_tol"],
        mu_init: float = SOLVER_DEFAULTS["mu_init"],
        warm_start_mu: float = SOLVER_DEFAULTS["warm_start_mu"],
        bound_push: float = SOLVER_DEFAULTS["bound_push"],
        warm_start_bound_push: float = SOLVER_DEFAULTS["warm_start_bound_push"],
        reg_init: float = SOLVER_DEFAULTS["reg_init"],
        reg_max: float = SOLVER_DEFAULTS["reg_max"],
    ):
        self.max_iter = int(max_iter)
        self.tol = tol
        self.feas_tol = feas_tol
        self.mu_init = mu_init
        self.warm_start_mu = warm_start_mu
        self.bound_push = bound_push
        self.warm_start_bound_push = warm_start_bound_push
        self.reg_init = reg_init
        self.reg_max = reg_max
        self._last_reg = 0.0

    @classmethod
    def from_options(cls, options: dict | None = None) -> InteriorPointBackend:
        options = options or {}
        keys = [
            "max_iter", "tol", "feas_tol", "mu_init", "warm_start_mu", "bound_push",
            "warm_start_bound_push", "reg_init", "reg_max",
        ]
        return cls(**{k: options[k] for k in keys if k in options})

    # -- helpers -----------------------------------------------------

    def _push(self, red: _Reduced, w: np.ndarray, kappa: float) -> np.ndarray:
        w = w.copy()
        lo, up = red.lower, red.upper
        both = np.intersect1d(red.idx_l, red.idx_u)

        pl = np.zeros(red.n)
        pu = np.zeros(red.n)
        pl[red.idx_l] = kappa * np.maximum(1.0, np.abs(lo[red.idx_l]))
        pu[red.idx_u] = kappa * np.maximum(1.0, np.abs(up[red.idx_u]))
        width = up[both] - lo[both]
        pl[both] = np.minimum(pl[both], kappa * width)
        pu[both] = np.minimum(pu[both], kappa * width)

        w[red.idx_l] = np.maximum(w[red.idx_l], lo[red.idx_l] + pl[red.idx_l])
        w[red.idx_u] = np.minimum(w[red.idx_u], up[red.idx_u] - pu[red.idx_u])
        return w

    def _gaps(self, red: _Reduced, w: np.ndarray):
        return w[red.idx_l] - red.lower[red.idx_l], red.upper[red.idx_u] - w[red.idx_u]

    def _barrier(self, f: float, sl: np.ndarray, su: np.ndarray, mu: float) -> float:
        return f - mu * (np.sum(np.log(sl)) + np.sum(np.log(su)))

    def _safeguard(self, z: np.ndarray, gap: np.ndarray, mu: float) -> np.ndarray:
        return np.clip(z, mu / (self.kappa_sigma * gap), self.kappa_sigma * mu / gap)

    def _least_squares_multipliers(self, red: _Reduced, A, gw, zl, zu) -> np.ndarray:
        if red.M == 0:
            return np.zeros(0)
        b = gw.copy()
        b[red.idx_l] -= zl
        b[red.idx_u] += zu
        K = sp.bmat([
            [sp.identity(red.n, format="csc"), A.T],
            [A, -1e-8 * sp.identity(red.M, format="csc")],
        ], format="csc")
        try:
            sol = splu(K).solve(np.concatenate([-b, np.zeros(red.M)]))
        except RuntimeError:
            return np.zeros(red.M)
        y = sol[red.n:]
        if not np.all(np.isfinite(y)) or _norm_inf(y) > 1e3:
            return np.zeros(red.M)
        return y

    def _solve_kkt(self, W, sigma, A, rhs, mu):
        n = W.shape[0]
        m = A.shape[0]
        Wsig = (W + sp.diags(sigma)).tocsc()
        delta_w = 0.0
        delta_c = 0.0
        while True:
            if m:
                K = sp.bmat([
                    [Wsig + delta_w * sp.identity(n, format="csc"), A.T],
                    [A, -delta_c * sp.identity(m, format="csc")],
                ], format="csc")
            else:
                K = (Wsig + delta_w * sp.identity(n, format="csc")).tocsc()

            singular = False
            try:
                sol = splu(K).solve(rhs)
                singular = not np.all(np.isfinite(sol))
            except RuntimeError:
                singular = True

            if singular:
                if delta_c == 0.0 and m:
                    delta_c = 1e-8 * mu ** 0.25
                    continue
                delta_w = self._next_regularization(delta_w)
                continue

            dw = sol[:n]
            dw_sq = float(dw @ dw)
            curvature = float(dw @ (Wsig @ dw)) + delta_w * dw_sq
            if dw_sq < 1e-30 or curvature >= 1e-12 * dw_sq:
                if delta_w > 0:
                    self._last_reg = delta_w
                return dw, sol[n:], delta_w
            delta_w = self._next_regularization(delta_w)

    def _next_regularization(self, delta_w: float) -> float:
        if delta_w == 0.0:
            delta_w = self.reg_init if self._last_reg == 0.0 else max(self.reg_init, self._last_reg / 3.0)
        else:
            delta_w *= 100.0 if self._last_reg == 0.0 else 8.0
        if delta_w > self.reg_max:
            raise _KKTFailure(f"KKT regularization exceeded {self.reg_max:g}")
        return delta_w

    def _alpha_min(self, gphi_d: float, theta: float, theta_min: float) -> float:
        if gphi_d < 0 and theta <= theta_min:
            term1 = min(self.gamma_theta, -self.gamma_phi * theta / gphi_d)
            term2 = self.switch_delta * theta ** self.s_theta / (-gphi_d) ** self.s_phi
            return self.gamma_alpha * min(term1, term2)
        if gphi_d < 0:
            return self.gamma_alpha * min(self.gamma_theta, -self.gamma_phi * theta / gphi_d)
        return self.gamma_alpha * self.gamma_theta

    @staticmethod
    def _in_filter(entries, theta: float, phi: float) -> bool:
        return any(theta >= t and phi >= p for t, p in entries)

    def _new_mu(self, mu: float) -> float:
        return max(self.tol / 10.0, min(self.kappa_mu * mu, mu ** self.theta_mu))

    # -- restoration -------------------------------------------------

    def _restore(self, red: _Reduced, w, mu, filter_entries):
        """Gauss-Newton minimum-norm steps on ||h||, staying interior. Returns (ok, w)."""
        problem = red.problem
        z = red.full_z(w)
        c = problem.constraints(z)
        h = red.residual(w, c)
        theta_start = float(np.sum(np.abs(h)))
        logger.debug("[restoration] start, theta=%.3e", theta_start)

        for _ in range(self.max_restoration_iter):
            A = red.jac_w(problem.jacobian(z))
            sl, su = self._gaps(red, w)
            d = np.full(red.n, math.sqrt(mu))
            d[red.idx_l] += mu / sl ** 2
            d[red.idx_u] += mu / su ** 2
            K = sp.bmat([
                [sp.diags(d), A.T],
                [A, -1e-8 * sp.identity(red.M, format="csc")],
            ], format="csc")
            try:
                dw = splu(K).solve(np.concatenate([np.zeros(red.n), -h]))[:red.n]
            except RuntimeError:
                return False, w

            alpha = min(
                _max_step(sl, dw[red.idx_l], self.tau_min),
                _max_step(su, -dw[red.idx_u], self.tau_min),
            )
            theta = float(np.sum(np.abs(h)))
            accepted = False
            while alpha > 1e-10:
                w_t = w + alpha * dw
                z_t = red.full_z(w_t)
                c_t = problem.constraints(z_t)
                h_t = red.residual(w_t, c_t)
                theta_t = float(np.sum(np.abs(h_t)))
                if np.isfinite(theta_t) and theta_t <= (1.0 - 1e-4 * alpha) * theta:
                    accepted = True
                    break
                alpha *= 0.5
            if not accepted:
                return False, w

            w, z, c, h = w_t, z_t, c_t, h_t
            sl, su = self._gaps(red, w)
            phi = self._barrier(problem.objective(z), sl, su, mu)
            if theta_t <= max(0.9 * theta_start, self.feas_tol) and not self._in_filter(filter_entries, theta_t, phi):
                logger.debug("[restoration] done, theta=%.3e", theta_t)
                return True, w

        return False, w

    # -- main loop ---------------------------------------------------

    def solve(self, problem: NLP, z0, warm_start: NlpSolution | None = None) -> BackendResult:
        red = _Reduced(problem)
        z0 = np.asarray(z0, dtype=float)
        if z0.shape != (red.N,):
            raise SolverError(f"initial point must have {red.N} entries, got {z0.shape}")

        warm = warm_start is not None
        mu = self.warm_start_mu if warm else self.mu_init
        push = self.warm_start_bound_push if warm else self.bound_push
        self._last_reg = 0.0
        eps_label = getattr(problem, "epsilon", float("nan"))

        w = self._push(red, red.initial_w(z0, problem.constraints(z0)), push)
        z = red.full_z(w)
        f = problem.objective(z)
        g = problem.gradient(z)
        c = problem.constraints(z)
        h = red.residual(w, c)
        A = red.jac_w(problem.jacobian(z))
        gw = red.grad_w(g)
        sl, su = self._gaps(red, w)

        if warm:
            zl, zu = red.bound_multipliers_w(warm_start)
            zl = self._safeguard(np.maximum(zl, 0.0), sl, mu)
            zu = self._safeguard(np.maximum(zu, 0.0), su, mu)
            y = np.asarray(warm_start.multipliers, dtype=float).copy()
        else:
            zl = np.ones(red.idx_l.size)
            zu = np.ones(red.idx_u.size)
            y = self._least_squares_multipliers(red, A, gw, zl, zu)

        theta0 = float(np.sum(np.abs(h)))
        theta_max = 1e4 * max(1.0, theta0)
        theta_min = 1e-4 * max(1.0, theta0)
        filter_entries: list[tuple[float, float]] = []

        status = SolveStatus.MAX_ITER
        message = ""
        alpha_pr = 0.0
        ls = 0
        iteration = 0

        for iteration in range(self.max_iter + 1):
            # optimality measures
            dual = gw + (A.T @ y if red.M else 0.0)
            dual[red.idx_l] -= zl
            dual[red.idx_u] += zu
            inf_pr = _norm_inf(h)
            inf_du = _norm_inf(dual)
            n_mult = max(1, red.M + zl.size + zu.size)
            s_d = max(self.s_max, (np.sum(np.abs(y)) + np.sum(zl) + np.sum(zu)) / n_mult) / self.s_max
            s_c = max(self.s_max, (np.sum(zl) + np.sum(zu)) / max(1, zl.size + zu.size)) / self.s_max
            compl_0 = max(_norm_inf(zl * sl), _norm_inf(zu * su))

            if iteration % 10 == 0:
                logger.info("iter    objective    inf_pr   inf_du lg(mu)     eps  alpha_pr ls")
            logger.info(
                "%4d %14.7e %8.2e %8.2e %5.1f %8.1e %8.2e %2d",
                iteration, f, inf_pr, inf_du, math.log10(mu), eps_label, alpha_pr, ls,
            )

            if inf_pr <= self.feas_tol and inf_du / s_d <= self.tol and compl_0 / s_c <= self.tol:
                status = SolveStatus.CONVERGED
                break
            if iteration == self.max_iter:
                status = SolveStatus.MAX_ITER
                message = f"reached max_iter={self.max_iter}"
                break

            # barrier update
            while mu > self.tol / 10.0:
                compl_mu = max(_norm_inf(zl * sl - mu), _norm_inf(zu * su - mu))
                e_mu = max(inf_du / s_d, inf_pr, compl_mu / s_c)
                if e_mu > self.kappa_eps * mu:
                    break
                mu = self._new_mu(mu)
                filter_entries = []

            # search direction
            W = red.hess_w(problem.hessian(z, 1.0, y))
            sigma = np.zeros(red.n)
            sigma[red.idx_l] += zl / sl
            sigma[red.idx_u] += zu / su
            grad_phi = gw.copy()
            grad_phi[red.idx_l] -= mu / sl
            grad_phi[red.idx_u] += mu / su
            rhs = -np.concatenate([grad_phi + (A.T @ y if red.M else 0.0), h])
            try:
                dw, dy, _ = self._solve_kkt(W, sigma, A, rhs, mu)
            except _KKTFailure as e:
                status = SolveStatus.INFEASIBLE
                message = str(e)
                break

            dzl = mu / sl - zl - (zl / sl) * dw[red.idx_l]
            dzu = mu / su - zu + (zu / su) * dw[red.idx_u]

            tau = max(self.tau_min, 1.0 - mu)
            alpha_max = min(_max_step(sl, dw[red.idx_l], tau), _max_step(su, -dw[red.idx_u], tau))
            alpha_z = min(_max_step(zl, dzl, tau), _max_step(zu, dzu, tau))

            # filter line search
            phi_k = self._barrier(f, sl, su, mu)
            theta_k = float(np.sum(np.abs(h)))
            gphi_d = float(grad_phi @ dw)
            tiny = _norm_inf(dw / (1.0 + np.abs(w))) < 10.0 * np.finfo(float).eps

            alpha = alpha_max
            alpha_min = 0.0 if tiny else self._alpha_min(gphi_d, theta_k, theta_min)
            accepted = False
            armijo = False
            switching = False
            ls = 0
            while alpha >= alpha_min:
                ls += 1
                w_t = w + alpha * dw
                z_t = red.full_z(w_t)
                f_t = problem.objective(z_t)
                c_t = problem.constraints(z_t)
                h_t = red.residual(w_t, c_t)
                sl_t, su_t = self._gaps(red, w_t)
                theta_t = float(np.sum(np.abs(h_t)))
                phi_t = self._barrier(f_t, sl_t, su_t, mu)
                if tiny:
                    accepted = True
                    break
                if not (np.isfinite(theta_t) and np.isfinite(phi_t)) or theta_t > theta_max:
                    alpha *= 0.5
                    continue
                if self._in_filter(filter_entries, theta_t, phi_t):
                    alpha *= 0.5
                    continue
                switching = gphi_d < 0 and alpha * (-gphi_d) ** self.s_phi > self.switch_delta * theta_k ** self.s_theta
                if theta_k <= theta_min and switching:
                    if phi_t <= phi_k + self.eta_phi * alpha * gphi_d:
                        accepted = armijo = True
                        break
                elif theta_t <= (1.0 - self.gamma_theta) * theta_k or phi_t <= phi_k - self.gamma_phi * theta_k:
                    accepted = True
                    break
                alpha *= 0.5

            if not accepted:
                filter_entries.append(((1.0 - self.gamma_theta) * theta_k, phi_k - self.gamma_phi * theta_k))
                ok, w = self._restore(red, w, mu, filter_entries)
                if not ok:
                    status = SolveStatus.INFEASIBLE
                    message = "feasibility restoration failed"
                    break
                z = red.full_z(w)
                f = problem.objective(z)
                g = problem.gradient(z)
                c = problem.constraints(z)
                h = red.residual(w, c)
                A = red.jac_w(problem.jacobian(z))
                gw = red.grad_w(g)
                sl, su = self._gaps(red, w)
                zl = self._safeguard(mu / sl, sl, mu)
                zu = self._safeguard(mu / su, su, mu)
                y = self._least_squares_multipliers(red, A, gw, zl, zu)
                alpha_pr = 0.0
                continue

            if not (switching and armijo):
                filter_entries.append(((1.0 - self.gamma_theta) * theta_k, phi_k - self.gamma_phi * theta_k))

            w, z, f, c, h, sl, su = w_t, z_t, f_t, c_t, h_t, sl_t, su_t
            y = y + alpha * dy
            zl = self._safeguard(zl + alpha_z * dzl, sl, mu)
            zu = self._safeguard(zu + alpha_z * dzu, su, mu)
            g = problem.gradient(z)
            gw = red.grad_w(g)
            A = red.jac_w(problem.jacobian(z))
            alpha_pr = alpha

        solution = red.to_solution(w, y, zl, zu, f, mu)
        logger.info("[interior-point] %s after %d iterations (objective %.8g)", status.value, iteration, f)
        return BackendResult(solution=solution, status=status, iterations=iteration, message=message)


# ------------------------------------------------------------------
# Optional external backend

class IpoptBackend:
    """
    Delegates solves to Ipopt through cyipopt (optional dependency, imported lazily).
    """
    name = "ipopt"

    def __init__(self, max_iter: int = SOLVER_DEFAULTS["max_iter"], tol: float = SOLVER_DEFAULTS["tol"],
                 feas_tol: float = SOLVER_DEFAULTS["feas_tol"], mu_init: float = SOLVER_DEFAULTS["mu_init"],
                 warm_start_mu: float = SOLVER_DEFAULTS["warm_start_mu"],
                 warm_start_bound_push: float = SOLVER_DEFAULTS["warm_start_bound_push"], **_):
        try:
            import cyipopt
        except ImportError as e:
            raise SolverError("the 'ipopt' backend needs cyipopt (pip install ceropt[ipopt])") from e
        self._cyipopt = cyipopt
        self.options = {
            "max_iter": int(max_iter),
            "tol": tol,
            "constr_viol_tol": feas_tol,
            "mu_init": mu_init,
            "print_level": 0,
        }
        self.warm_start_mu = warm_start_mu
        self.warm_start_bound_push = warm_start_bound_push

    @classmethod
    def from_options(cls, options: dict | None = None) -> IpoptBackend:
        return cls(**(options or {}))

    def solve(self, problem: NLP, z0, warm_start: NlpSolution | None = None) -> BackendResult:
        z0 = np.asarray(z0, dtype=float)
        jac0 = sp.coo_matrix(problem.jacobian(z0))
        hess0 = sp.tril(sp.coo_matrix(problem.hessian(z0, 1.0, np.ones(problem.n_constraints)))).tocoo()
        jac_rows, jac_cols = jac0.row, jac0.col
        hess_rows, hess_cols = hess0.row, hess0.col

        class _Adapter:
            def objective(self, z):
                return problem.objective(z)

            def gradient(self, z):
                return problem.gradient(z)

            def constraints(self, z):
                return problem.constraints(z)

            def jacobianstructure(self):
                return jac_rows, jac_cols

            def jacobian(self, z):
                return np.asarray(sp.csr_matrix(problem.jacobian(z))[jac_rows, jac_cols]).ravel()

            def hessianstructure(self):
                return hess_rows, hess_cols

            def hessian(self, z, multipliers, obj_factor):
                H = sp.csr_matrix(problem.hessian(z, obj_factor, multipliers))
                return np.asarray(H[hess_rows, hess_cols]).ravel()

        nlp = self._cyipopt.Problem(
            n=problem.n_variables,
            m=problem.n_constraints,
            problem_obj=_Adapter(),
            lb=problem.x_lower,
            ub=problem.x_upper,
            cl=problem.c_lower,
            cu=problem.c_upper,
        )
        for key, value in self.options.items():
            nlp.add_option(key, value)

        kwargs = {}
        if warm_start is not None:
            nlp.add_option("warm_start_init_point", "yes")
            nlp.add_option("mu_init", self.warm_start_mu)
            nlp.add_option("warm_start_bound_push", self.warm_start_bound_push)
            kwargs = {"lagrange": warm_start.multipliers, "zl": warm_start.bound_lower, "zu": warm_start.bound_upper}

        z, info = nlp.solve(z0, **kwargs)
        status = {0: SolveStatus.CONVERGED, 1: SolveStatus.CONVERGED, -1: SolveStatus.MAX_ITER}.get(
            info["status"], SolveStatus.INFEASIBLE
        )
        M = problem.n_constraints
        solution = NlpSolution(
            z=np.asarray(z, dtype=float),
            multipliers=np.asarray(info["mult_g"], dtype=float),
            bound_lower=np.asarray(info["mult_x_L"], dtype=float),
            bound_upper=np.asarray(info["mult_x_U"], dtype=float),
            row_lower=np.zeros(M),
            row_upper=np.zeros(M),
            objective=float(info["obj_val"]),
        )
        iterations = int(info.get("iter_count", 0)) if isinstance(info, dict) else 0
        return BackendResult(solution=solution, status=status, iterations=iterations,
                             message=str(info["status_msg"]))


BACKENDS = {
    InteriorPointBackend.name: InteriorPointBackend,
    IpoptBackend.name: IpoptBackend,
}


def make_backend(options: dict | None = None):
    options = dict(options or {})
    name = options.get("backend", SOLVER_DEFAULTS["backend"])
    try:
        cls = BACKENDS[name]
    except KeyError:
        raise SolverError(f"unknown solver backend '{name}', expected one of {list(BACKENDS)}") from None
    return cls.from_options(options)


# ------------------------------------------------------------------
# Relaxation homotopy

def validate_eps_schedule(schedule) -> list[float]:
    schedule = [float(e) for e in schedule]
    if not schedule:
        raise ValueError("epsilon schedule is empty")
    if any(not (np.isfinite(e) and e > 0) for e in schedule):
        raise ValueError(f"epsilon schedule must be positive, got {schedule}")
    if any(b >= a for a, b in zip(schedule, schedule[1:])):
        raise ValueError(f"epsilon schedule must be strictly decreasing, got {schedule}")
    return schedule


def _problem_metrics(problem, z) -> tuple[float, float]:
    if hasattr(problem, "max_defect"):
        return problem.max_defect(z), problem.max_complementarity(z)
    c = problem.constraints(z)
    eq = problem.c_lower == problem.c_upper
    return _norm_inf(c[eq] - problem.c_lower[eq]), 0.0


def solve_relaxed(problem, eps: float, warm_start: NlpSolution | None = None, z0=None,
                  backend=None, options: dict | None = None) -> tuple[NlpSolution, SolveReport]:
    """
    Solve the problem at relaxation level eps (problems without a relaxation are solved as is).
    """
    if not eps > 0:
        raise ValueError(f"epsilon must be positive, got {eps}")
    start = time.perf_counter()
    relaxed = problem.with_epsilon(eps) if hasattr(problem, "with_epsilon") else problem
    backend = backend or make_backend(options)

    if warm_start is not None:
        z_start = warm_start.z
    elif z0 is not None:
        z_start = np.asarray(z0, dtype=float)
    else:
        opts = {**SOLVER_DEFAULTS, **(options or {})}
        z_start = relaxed.initial_point(perturbation=opts["init_perturbation"])

    result = backend.solve(relaxed, z_start, warm_start)
    z = result.solution.z
    max_defect, max_compl = _problem_metrics(relaxed, z)
    report = SolveReport(
        status=result.status,
        objective=result.solution.objective,
        max_defect=max_defect,
        max_complementarity=max_compl,
        eps_trace=[float(eps)],
        iterations=[result.iterations],
        wall_time=time.perf_counter() - start,
        message=result.message,
        final_epsilon=float(eps),
        objective_breakdown=relaxed.objective_breakdown(z) if hasattr(relaxed, "objective_breakdown") else None,
    )
    report.stages.append({
        "epsilon": float(eps),
        "status": result.status.value,
        "iterations": result.iterations,
        "objective": report.objective,
        "max_defect": max_defect,
        "max_complementarity": max_compl,
    })
    return result.solution, report


def solve_homotopy(problem, schedule=None, options: dict | None = None, backend=None,
                   seed: int | None = None, z0=None, progress: bool = True) -> tuple[NlpSolution, SolveReport]:
    """
    Chain solve_relaxed over a strictly decreasing epsilon schedule, warm-starting
    every stage from the previous one. If a stage fails, the last converged stage
    is returned with the failing status.
    """
    opts = {**SOLVER_DEFAULTS, **(options or {})}
    schedule = validate_eps_schedule(opts["eps_schedule"] if schedule is None else schedule)
    backend = backend or make_backend(opts)
    start = time.perf_counter()

    if z0 is None and hasattr(problem, "initial_point"):
        z0 = problem.initial_point(seed=seed, perturbation=opts["init_perturbation"])

    best: tuple[NlpSolution, SolveReport] | None = None
    warm = None
    stages, trace, iterations = [], [], []
    status = SolveStatus.CONVERGED
    message = ""

    bar = tqdm(schedule, desc="homotopy", unit="stage",
               disable=not (progress and logger.isEnabledFor(logging.INFO)))
    for eps in bar:
        solution, report = solve_relaxed(problem, eps, warm_start=warm, z0=z0, backend=backend, options=opts)
        trace.append(eps)
        iterations.extend(report.iterations)
        stages.extend(report.stages)
        bar.set_postfix(eps=f"{eps:.0e}", status=report.status.value)
        logger.info(
            "[homotopy] eps=%.1e %s in %d iterations, defect %.2e, complementarity %.2e",
            eps, report.status.value, report.iterations[0], report.max_defect, report.max_complementarity,
        )

        if not report.converged:
            status = report.status
            if best is None:
                best = (solution, report)
                message = f"stage eps={eps:g} failed ({report.message})"
            else:
                message = f"stage eps={eps:g} failed ({report.message}); returning eps={best[1].final_epsilon:g}"
            logger.warning("[homotopy] %s", message)
            break
        best = (solution, report)
        warm = solution
    bar.close()

    solution, last = best
    final = SolveReport(
        status=status,
        objective=last.objective,
        max_defect=last.max_defect,
        max_complementarity=last.max_complementarity,
        eps_trace=trace,
        iterations=iterations,
        wall_time=time.perf_counter() - start,
        message=message,
        final_epsilon=last.final_epsilon,
        objective_breakdown=last.objective_breakdown,
        stages=stages,
    )
    return solution, final


def solve_multistart(problem, seeds, schedule=None, options: dict | None = None,
                     max_workers: int | None = None) -> tuple[NlpSolution, SolveReport]:
    """
    Independent homotopies from seeded initial perturbations; keeps the best
    converged result (lowest objective), or the least infeasible when none converged.
    """
    seeds = list(seeds)
    if not seeds:
        raise ValueError("at least one seed is needed")

    def run(seed):
        return solve_homotopy(problem, schedule, options=options, seed=seed, progress=False)

    with ThreadPoolExecutor(max_workers=max_workers) as pool:
        results = list(pool.map(run, seeds))

    for seed, (_, report) in zip(seeds, results):
        logger.info("[multistart] seed=%s %s objective %.6g", seed, report.status.value, report.objective)

    converged = [r for r in results if r[1].converged]
    if converged:
        return min(converged, key=lambda r: r[1].objective)
    return min(results, key=lambda r: r[1].max_defect)
