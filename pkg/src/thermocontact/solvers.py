"""Convex optimisation and linear-algebra engines for the time stepper.

Every sub-step of the scheme minimises a convex functional of the form
smooth + separable-nonsmooth.  The nonsmooth parts appearing here are

* weighted absolute values of linear combinations of the unknowns with
  mutually orthogonal rows (friction acts on the tangential-jump increment,
  plastic yield on the slip increment), and
* box constraints (the damage variable lives in [0, 1]).

Both admit a closed-form proximal map, so the driver is a monotone
accelerated proximal-gradient method (FISTA with backtracking, keeping the
best iterate) with an optional semismooth-Newton polish on the active-set
reduction for fast terminal convergence.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla


class SolverError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# proximal maps
# ---------------------------------------------------------------------------

def prox_weighted_norm(x, w: float, step: float):
    """Block soft-threshold: prox of step*w*||.|| at x (scalar or vector)."""
    if w < 0.0 or step < 0.0:
        raise SolverError("prox weight and step must be non-negative")
    x = np.asarray(x, dtype=float)
    nrm = float(np.linalg.norm(x))
    if nrm == 0.0:
        return x * 0.0 if x.ndim else 0.0
    factor = max(0.0, 1.0 - step * w / nrm)
    out = x * factor
    return out if out.ndim else float(out)


def shrink(z: np.ndarray, threshold: np.ndarray) -> np.ndarray:
    """Component-wise soft-threshold."""
    return np.sign(z) * np.maximum(np.abs(z) - threshold, 0.0)


def project_box01(x, lower=0.0, upper=1.0):
    out = np.clip(np.asarray(x, dtype=float), lower, upper)
    return out if out.ndim else float(out)


class ProxNone:
    def value(self, x):
        return 0.0

    def apply(self, x, step):
        return np.asarray(x, dtype=float)


class BoxProx:
    """Projection onto [lower, upper] (component-wise arrays allowed)."""

    def __init__(self, lower=0.0, upper=1.0):
        self.lower = lower
        self.upper = upper

    def value(self, x):
        ok = np.all(x >= np.asarray(self.lower) - 1e-12) and \
            np.all(x <= np.asarray(self.upper) + 1e-12)
        return 0.0 if ok else np.inf

    def apply(self, x, step):
        return np.clip(x, self.lower, self.upper)


class AbsThroughMap:
    """h(x) = sum_i weights_i * |(L x - offset)_i| with diagonal L L^T.

    Rows of L must be mutually orthogonal (true for jump/slip increments:
    each row touches its own interface node's dofs), which makes the prox
    closed-form:  with z = Lx - c and d = diag(LL^T),
        prox_{t h}(x) = x + L^T ((shrink(z, t*w*d) - z) / d).
    """

    def __init__(self, L: sp.spmatrix, offset: np.ndarray, weights: np.ndarray):
        self.L = L.tocsr()
        self.offset = np.asarray(offset, dtype=float)
        self.weights = np.asarray(weights, dtype=float)
        if np.any(self.weights < 0.0):
            raise SolverError("nonsmooth weights must be non-negative")
        gram = (self.L @ self.L.T).toarray()
        self.d = np.diag(gram).copy()
        if np.any(self.d <= 0.0):
            raise SolverError("AbsThroughMap rows must be non-zero")
        if not np.allclose(gram, np.diag(self.d), atol=1e-12 * max(1.0, self.d.max())):
            raise SolverError("AbsThroughMap rows must be mutually orthogonal")

    def value(self, x):
        z = self.L @ x - self.offset
        return float(np.dot(self.weights, np.abs(z)))

    def apply(self, x, step):
        z = self.L @ x - self.offset
        s = shrink(z, step * self.weights * self.d)
        return x + self.L.T @ ((s - z) / self.d)


@dataclass
class CompositeProblem:
    value: Callable[[np.ndarray], float]
    grad: Callable[[np.ndarray], np.ndarray]
    prox: object = field(default_factory=ProxNone)
    hess: Optional[Callable[[np.ndarray], sp.spmatrix]] = None
    tol: float = 1e-10
    max_iter: int = 20000

    def objective(self, x):
        return self.value(x) + self.prox.value(x)


@dataclass
class IterationReport:
    iterations: int = 0
    polish_steps: int = 0
    residual: float = np.inf
    objective: float = np.inf
    converged: bool = False


def _grad_mapping_norm(p: CompositeProblem, x: np.ndarray, g: np.ndarray, step: float) -> float:
    xp = p.prox.apply(x - step * g, step)
    return float(np.linalg.norm(x - xp) / step)


def solve_composite(p: CompositeProblem, x0: np.ndarray):
    """Monotone FISTA with backtracking plus semismooth-Newton polish.

    Returns (x, IterationReport).  The reported objective sequence is
    non-increasing (the best iterate is retained).  Stopping criterion is
    the composite gradient-mapping norm <= tol * (1 + ||grad at x0||).
    """
    x = np.asarray(x0, dtype=float).copy()
    g0 = p.grad(x)
    scale = 1.0 + float(np.linalg.norm(g0))
    target = p.tol * scale

    step = 1.0 / max(1.0, float(np.linalg.norm(g0)))
    # the optimality measure uses a fixed step: dividing the prox
    # displacement by a heavily backtracked step would amplify rounding
    # noise far above the tolerance
    step_eval = step
    y = x.copy()
    t_mom = 1.0
    fx = p.objective(x)
    report = IterationReport(objective=fx)

    for it in range(p.max_iter):
        gx = p.grad(x)
        res = _grad_mapping_norm(p, x, gx, step_eval)
        report.iterations = it
        report.residual = res
        report.objective = fx
        if res <= target:
            report.converged = True
            return x, report

        # occasional Newton polish on the active-set reduction
        if p.hess is not None and (it % 8 == 0):
            resfun = lambda v: _grad_mapping_norm(p, v, p.grad(v), step_eval)
            x_new, fx_new, nsteps = _newton_polish(p, x, fx, resfun, res)
            report.polish_steps += nsteps
            if nsteps > 0:
                x, fx = x_new, fx_new
                y = x.copy()
                t_mom = 1.0
                gx = p.grad(x)
                res = _grad_mapping_norm(p, x, gx, step_eval)
                report.residual = res
                report.objective = fx
                if res <= target:
                    report.iterations = it
                    report.converged = True
                    return x, report

        # FISTA step from the extrapolated point, with backtracking
        gy = p.grad(y)
        fy = p.value(y)
        while True:
            u = p.prox.apply(y - step * gy, step)
            du = u - y
            fu = p.value(u)
            if fu <= fy + float(np.dot(gy, du)) + float(np.dot(du, du)) / (2.0 * step) + \
                    1e-12 * (1.0 + abs(fy)):
                break
            step *= 0.5
            if step < 1e-18:
                raise SolverError("composite solver: backtracking step underflow")

        t_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t_mom * t_mom))
        obj_u = fu + p.prox.value(u)
        if obj_u <= fx:
            x_next = u
            y = u + (t_mom / t_next) * (u - x_next) + \
                ((t_mom - 1.0) / t_next) * (x_next - x)
            x, fx, t_mom = x_next, obj_u, t_next
        else:
            # candidate rejected: restart the momentum from the best
            # iterate, otherwise the extrapolation sequence can run away
            y = x.copy()
            t_mom = 1.0

    raise SolverError(
        f"composite solver did not converge in {p.max_iter} iterations "
        f"(residual {report.residual:.3e}, target {target:.3e})")


def _newton_polish(p: CompositeProblem, x: np.ndarray, fx: float,
                   resfun=None, res_x=np.inf):
    """One semismooth Newton step on the current active-set reduction."""
    H = p.hess(x).tocsc()
    g = p.grad(x)
    prox = p.prox
    n = x.size

    if isinstance(prox, ProxNone):
        d = _solve_reg(H, -g)
        return _accept(p, x, fx, d, 1, resfun=resfun, res_x=res_x)

    if isinstance(prox, BoxProx):
        lo = np.broadcast_to(np.asarray(prox.lower, dtype=float), x.shape)
        hi = np.broadcast_to(np.asarray(prox.upper, dtype=float), x.shape)
        eps = 1e-12
        active = ((x <= lo + eps) & (g > 0.0)) | ((x >= hi - eps) & (g < 0.0))
        free = ~active
        d = np.zeros_like(x)
        if np.any(free):
            idx = np.where(free)[0]
            Hff = H[np.ix_(idx, idx)]
            d[idx] = _solve_reg(sp.csc_matrix(Hff), -g[idx])
        # project the trial points back to the box inside the line search
        return _accept(p, x, fx, d, 1, project=lambda v: np.clip(v, lo, hi),
                       resfun=resfun, res_x=res_x)

    if isinstance(prox, AbsThroughMap):
        L, c, w = prox.L, prox.offset, prox.weights
        z = L @ x - c
        ztol = 1e-12 * (1.0 + float(np.max(np.abs(z))))
        stick = np.abs(z) <= ztol
        sgn = np.sign(z)
        d = np.zeros_like(x)
        # primal-dual active-set loop: stick rows whose multiplier exceeds
        # the weight start slipping in the multiplier's direction, slip rows
        # whose updated offset crosses zero stick again
        for _ in range(12):
            xi = np.where(stick, 0.0, w * sgn)
            F = g + L.T @ xi
            idx = np.where(stick)[0]
            if idx.size == 0:
                d = _solve_reg(H, -F)
                lam = np.zeros(0)
            else:
                Ls = L[idx, :]
                K = sp.bmat([[H, Ls.T], [Ls, None]], format="csc")
                rhs = np.concatenate([-F, -(Ls @ x - c[idx])])
                try:
                    sol = spla.splu(K).solve(rhs)
                except RuntimeError:
                    return x, fx, 0
                d = sol[:n]
                lam = sol[n:]
            changed = False
            for j, i in enumerate(idx):
                if abs(lam[j]) > w[i] * (1.0 + 1e-10):
                    stick[i] = False
                    sgn[i] = np.sign(lam[j])
                    changed = True
            z_new = L @ (x + d) - c
            for i in np.where(~stick)[0]:
                if z_new[i] * sgn[i] < -ztol:
                    stick[i] = True
                    changed = True
            if not changed:
                break
        return _accept(p, x, fx, d, 1, resfun=resfun, res_x=res_x)

    return x, fx, 0


def _solve_reg(A: sp.csc_matrix, b: np.ndarray) -> np.ndarray:
    try:
        return spla.splu(A).solve(b)
    except RuntimeError:
        reg = sp.eye(A.shape[0], format="csc") * (1e-12 * abs(A).max())
        return spla.splu(A + reg).solve(b)


def _accept(p, x, fx, d, nsteps, project=None, resfun=None, res_x=np.inf):
    """Line search for a polish step.

    Accepts on strict objective decrease, or -- near the optimum, where the
    theoretical decrease falls below floating-point resolution of the
    objective -- on a strict drop of the gradient-mapping residual at an
    objective that is equal within evaluation noise.
    """
    slack = 1e-13 * (1.0 + abs(fx))
    beta = 1.0
    for _ in range(40):
        trial = x + beta * d
        if project is not None:
            trial = project(trial)
        f_trial = p.objective(trial)
        if f_trial < fx:
            return trial, f_trial, nsteps
        if f_trial <= fx + slack and resfun is not None:
            if resfun(trial) <= 0.5 * res_x:
                return trial, min(f_trial, fx), nsteps
        beta *= 0.5
    return x, fx, 0


# ---------------------------------------------------------------------------
# linear solves
# ---------------------------------------------------------------------------

_DENSE_LIMIT = 1500


def solve_spd(A, b: np.ndarray) -> np.ndarray:
    """Direct solve of an SPD system; raises on an indefinite/singular matrix."""
    b = np.asarray(b, dtype=float)
    n = b.size
    if sp.issparse(A):
        A_dense = A.toarray() if n <= _DENSE_LIMIT else None
    else:
        A_dense = np.asarray(A, dtype=float)
    if A_dense is not None:
        try:
            Lc = np.linalg.cholesky(A_dense)
        except np.linalg.LinAlgError as exc:
            raise SolverError("matrix is not symmetric positive definite") from exc
        y = np.linalg.solve(Lc, b)
        x = np.linalg.solve(Lc.T, y)
    else:
        try:
            lu = spla.splu(sp.csc_matrix(A))
        except RuntimeError as exc:
            raise SolverError("sparse factorisation failed") from exc
        if np.any(lu.U.diagonal() <= 0.0):
            raise SolverError("matrix is not symmetric positive definite")
        x = lu.solve(b)
    res = np.linalg.norm((A @ x) - b)
    if res > 1e-12 * max(1.0, np.linalg.norm(b)) * 10.0:
        raise SolverError(f"linear solve residual too large: {res:.3e}")
    return x


def solve_monotone_heat(content, capacity, K, vartheta_prev, tau, source,
                        theta0=None, mass=None, tol=1e-10, max_iter=100):
    """Solve  mass*(C(theta) - vartheta_prev)/tau + K theta = source.

    ``content``/``capacity`` map nodal temperature vectors to C(theta) and
    c(theta); ``mass`` are lumped weights (defaults to 1).  Damped Newton on
    the residual; the Jacobian diag(mass*c/tau) + K is symmetric and, for
    positive capacities and PSD conduction, positive definite — the adiabatic
    coupling may perturb it, so factorisation falls back to a general sparse
    LU with step damping.
    """
    vartheta_prev = np.atleast_1d(np.asarray(vartheta_prev, dtype=float))
    source = np.atleast_1d(np.asarray(source, dtype=float))
    n = vartheta_prev.size
    if mass is None:
        mass = np.ones(n)
    mass = np.atleast_1d(np.asarray(mass, dtype=float))
    K = sp.csc_matrix(K) if not sp.issparse(K) else K.tocsc()
    if np.any(vartheta_prev < 0.0):
        raise SolverError("previous heat content must be non-negative")

    theta = np.maximum(np.atleast_1d(np.asarray(
        theta0 if theta0 is not None else np.ones(n), dtype=float)), 0.0).copy()

    # extend C linearly below zero so a (physically flagged) negative
    # temperature is found by Newton instead of masked by clamping
    def content_ext(th):
        pos = np.maximum(th, 0.0)
        return np.where(th >= 0.0, content(pos), capacity(pos * 0.0) * th)

    def capacity_ext(th):
        return capacity(np.maximum(th, 0.0))

    def residual(th):
        return mass * (content_ext(th) - vartheta_prev) / tau + K @ th - source

    r = residual(theta)
    scale = max(1.0, float(np.linalg.norm(mass * vartheta_prev / tau)),
                float(np.linalg.norm(source)))
    for _ in range(max_iter):
        rnorm = float(np.linalg.norm(r))
        if rnorm <= tol * scale:
            return theta
        J = sp.diags(mass * capacity_ext(theta) / tau) + K
        try:
            step = spla.splu(sp.csc_matrix(J)).solve(-r)
        except RuntimeError as exc:
            raise SolverError("heat Newton: singular Jacobian") from exc
        lam = 1.0
        while True:
            trial = theta + lam * step
            r_trial = residual(trial)
            if float(np.linalg.norm(r_trial)) < rnorm or lam < 1e-12:
                break
            lam *= 0.5
        if lam < 1e-12 and float(np.linalg.norm(r_trial)) >= rnorm:
            raise SolverError("heat Newton stagnated")
        theta, r = trial, r_trial
    raise SolverError("heat Newton did not converge")
