"""Log-barrier interior-point solver for small smooth convex programs.

Solves  minimize f0(z)  s.t.  f_i(z) <= 0  with damped Newton steps on the
barrier objective t*f0 - sum log(-f_i) and geometric continuation in t.
Constraints outside their domain report +inf, which the feasibility-preserving
line search rejects. A phase-1 pass (minimize the worst violation) is used
whenever the warm start is not already strictly feasible.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

INFEASIBLE = "infeasible"
SOLVED = "solved"
ITERATION_CAP = "iteration-cap"


# ---- constraint / objective primitives -----------------------------------------

class LinearConstraints:
    """Batch of affine constraints A z + b <= 0 (rows normalized on build)."""

    def __init__(self, a: np.ndarray, b: np.ndarray, normalize: bool = True):
        a = np.atleast_2d(np.asarray(a, dtype=float))
        b = np.asarray(b, dtype=float).reshape(-1)
        if normalize and a.size:
            scale = np.maximum(np.max(np.abs(a), axis=1), np.abs(b))
            scale = np.where(scale > 0, scale, 1.0)
            a = a / scale[:, None]
            b = b / scale
        self.a = a
        self.b = b

    @property
    def count(self) -> int:
        return self.b.size

    def values(self, z: np.ndarray) -> np.ndarray:
        return self.a @ z + self.b

    def barrier(self, z: np.ndarray, g: np.ndarray, h: np.ndarray) -> float:
        v = self.values(z)
        if np.any(v >= 0):
            return np.inf
        inv = 1.0 / (-v)
        g += self.a.T @ inv
        h += (self.a * (inv**2)[:, None]).T @ self.a
        return float(-np.sum(np.log(-v)))


class SmoothConstraint:
    """Scalar smooth convex constraint f(z) <= 0."""

    def value(self, z: np.ndarray) -> float:  # +inf outside the domain
        raise NotImplementedError

    def grad_hess(self, z: np.ndarray) -> tuple[float, np.ndarray, np.ndarray]:
        raise NotImplementedError

    def barrier(self, z: np.ndarray, g: np.ndarray, h: np.ndarray) -> float:
        v, gv, hv = self.grad_hess(z)
        if not np.isfinite(v) or v >= 0:
            return np.inf
        inv = 1.0 / (-v)
        g += gv * inv
        h += np.outer(gv, gv) * inv**2 + hv * inv
        return float(-np.log(-v))


class SphereConstraint(SmoothConstraint):
    """(z[i0]-c0)^2 + (z[i1]-c1)^2 <= r^2, scaled by 1/r^2."""

    def __init__(self, idx: tuple[int, int], center: tuple[float, float], radius: float):
        self.idx = idx
        self.center = np.asarray(center, dtype=float)
        self.r2 = float(radius) ** 2

    def value(self, z: np.ndarray) -> float:
        d = z[list(self.idx)] - self.center
        return float((d @ d - self.r2) / self.r2)

    def grad_hess(self, z: np.ndarray):
        n = z.size
        d = z[list(self.idx)] - self.center
        g = np.zeros(n)
        h = np.zeros((n, n))
        g[list(self.idx)] = 2.0 * d / self.r2
        for i in self.idx:
            h[i, i] = 2.0 / self.r2
        return float((d @ d - self.r2) / self.r2), g, h


@dataclass
class RateTerm:
    """One log(1 + 2 v sqrt(S) - v^2 N) term of a rate surrogate.

    S = coef_sqrt^2 * z[sig_idx]   (so 2 v sqrt(S) = 2 v coef_sqrt sqrt(z))
    N = lin_w . z[lin_idx] + pos_w * Z(x, y) + const
    Z(x, y) = (x - node_x)^2 + (y - node_y)^2 + z_gap2 when the position is
    free, otherwise folded into const.
    """

    v: float
    coef_sqrt: float
    sig_idx: int
    lin_idx: np.ndarray
    lin_w: np.ndarray
    const: float
    pos_w: float = 0.0
    node_xy: tuple[float, float] = (0.0, 0.0)
    z_gap2: float = 0.0


class RateConstraint(SmoothConstraint):
    """thresh - kappa * sum_m ln(arg_m) <= 0 (rate lower bound in nats).

    kappa carries the frame prefactor divided by ln 2 so thresholds stay in
    bit/s/Hz. With psi_idx set, thresh = z[psi_idx] (epigraph form).
    Evaluation is batched over the terms: args and their Jacobian come from
    a few fancy-indexed array operations instead of per-term loops.
    """

    def __init__(self, terms: list[RateTerm], kappa: float, thresh: float,
                 psi_idx: int | None = None, pos_idx: tuple[int, int] | None = None):
        self.terms = terms
        self.kappa = kappa
        self.thresh = thresh
        self.psi_idx = psi_idx
        self.pos_idx = pos_idx
        k = len(terms)
        self.v = np.array([t.v for t in terms])
        self.coef = np.array([t.coef_sqrt for t in terms])
        self.sig_idx = np.array([t.sig_idx for t in terms], dtype=int)
        self.const = np.array([t.const for t in terms])
        self.pos_w = np.array([t.pos_w for t in terms])
        self.node_x = np.array([t.node_xy[0] for t in terms])
        self.node_y = np.array([t.node_xy[1] for t in terms])
        self.z_gap2 = np.array([t.z_gap2 for t in terms])
        n_lin = max((t.lin_idx.size for t in terms), default=0)
        self.lin_idx = np.zeros((k, max(n_lin, 1)), dtype=int)
        self.lin_w = np.zeros((k, max(n_lin, 1)))
        for i, t in enumerate(terms):
            if t.lin_idx.size:
                self.lin_idx[i, :t.lin_idx.size] = t.lin_idx
                self.lin_w[i, :t.lin_idx.size] = t.lin_w
        self.use_pos = pos_idx is not None and bool(np.any(self.pos_w != 0.0))

    def _args_batch(self, z: np.ndarray):
        p = z[self.sig_idx]
        if np.any(p < 0):
            return None, None, (None, None)
        n_val = self.const + np.einsum("ij,ij->i", self.lin_w, z[self.lin_idx])
        dx = dy = None
        if self.use_pos:
            dx = z[self.pos_idx[0]] - self.node_x
            dy = z[self.pos_idx[1]] - self.node_y
            n_val = n_val + self.pos_w * (dx * dx + dy * dy + self.z_gap2)
        sqrt_p = np.sqrt(p)
        args = 1.0 + 2.0 * self.v * self.coef * sqrt_p - self.v**2 * n_val
        if np.any(args <= 0):
            return None, None, (None, None)
        return args, sqrt_p, (dx, dy)

    def _thresh(self, z: np.ndarray) -> float:
        return z[self.psi_idx] if self.psi_idx is not None else self.thresh

    def rate(self, z: np.ndarray) -> float:
        args, _, _ = self._args_batch(z)
        if args is None:
            return -np.inf
        return self.kappa * float(np.sum(np.log(args)))

    def value(self, z: np.ndarray) -> float:
        args, _, _ = self._args_batch(z)
        if args is None:
            return np.inf
        return self._thresh(z) - self.kappa * float(np.sum(np.log(args)))

    def grad_hess(self, z: np.ndarray):
        n = z.size
        k = len(self.terms)
        args, sqrt_p, (dx, dy) = self._args_batch(z)
        if args is None:
            return np.inf, np.zeros(n), np.zeros((n, n))
        # term Jacobian J[t, :] = grad of arg_t
        jac = np.zeros((k, n))
        rows = np.arange(k)
        dsqrt = np.where(sqrt_p > 0, self.v * self.coef / np.where(sqrt_p > 0, sqrt_p, 1.0), 0.0)
        jac[rows, self.sig_idx] += dsqrt
        np.add.at(jac, (rows[:, None], self.lin_idx), -(self.v**2)[:, None] * self.lin_w)
        if self.use_pos:
            jac[rows, self.pos_idx[0]] += -self.v**2 * self.pos_w * 2.0 * dx
            jac[rows, self.pos_idx[1]] += -self.v**2 * self.pos_w * 2.0 * dy
        inv = 1.0 / args
        g = -self.kappa * (jac.T @ inv)
        h = self.kappa * (jac.T * inv**2) @ jac
        # -hess(arg)/arg contributions (diagonal): sqrt curvature and position
        curve = np.where(sqrt_p > 0, 0.5 * self.v * self.coef / np.where(sqrt_p > 0, sqrt_p**3, 1.0), 0.0)
        np.add.at(h, (self.sig_idx, self.sig_idx), self.kappa * inv * curve)
        if self.use_pos:
            hp = self.kappa * float(np.sum(inv * self.v**2 * self.pos_w * 2.0))
            h[self.pos_idx[0], self.pos_idx[0]] += hp
            h[self.pos_idx[1], self.pos_idx[1]] += hp
        value = self._thresh(z) - self.kappa * float(np.sum(np.log(args)))
        if self.psi_idx is not None:
            g[self.psi_idx] += 1.0
        return float(value), g, h


# ---- objectives ------------------------------------------------------------------

class LinearObjective:
    def __init__(self, c: np.ndarray):
        self.c = np.asarray(c, dtype=float)

    def value(self, z):
        return float(self.c @ z)

    def grad_hess(self, z):
        return self.value(z), self.c.copy(), np.zeros((z.size, z.size))


class DistanceObjective:
    """((x - cx)^2 + (y - cy)^2) / scale over two coordinates of z."""

    def __init__(self, idx: tuple[int, int], center: tuple[float, float], scale: float = 1.0):
        self.idx = idx
        self.center = np.asarray(center, dtype=float)
        self.scale = float(scale)

    def value(self, z):
        d = z[list(self.idx)] - self.center
        return float(d @ d / self.scale)

    def grad_hess(self, z):
        n = z.size
        d = z[list(self.idx)] - self.center
        g = np.zeros(n)
        g[list(self.idx)] = 2.0 * d / self.scale
        h = np.zeros((n, n))
        for i in self.idx:
            h[i, i] = 2.0 / self.scale
        return float(d @ d / self.scale), g, h


class CallableObjective:
    """Adapter for ad-hoc smooth objectives (used by toy problems and tests)."""

    def __init__(self, value, grad, hess):
        self._value, self._grad, self._hess = value, grad, hess

    def value(self, z):
        return float(self._value(z))

    def grad_hess(self, z):
        return float(self._value(z)), np.asarray(self._grad(z), dtype=float), \
            np.asarray(self._hess(z), dtype=float)


# ---- solver ---------------------------------------------------------------------

@dataclass
class BarrierResult:
    z: np.ndarray
    status: str
    objective: float
    kkt_residual: float
    newton_iters: int
    max_violation: float = np.nan


@dataclass
class Problem:
    n: int
    objective: object
    linear: LinearConstraints | None = None
    smooth: list = field(default_factory=list)
    scales: np.ndarray | None = None  # per-variable magnitudes for conditioning

    def constraint_count(self) -> int:
        m = self.linear.count if self.linear is not None else 0
        return m + len(self.smooth)

    def max_violation(self, z: np.ndarray) -> float:
        worst = -np.inf
        if self.linear is not None and self.linear.count:
            worst = max(worst, float(np.max(self.linear.values(z))))
        for c in self.smooth:
            worst = max(worst, c.value(z))
        return worst


def _barrier_grad_hess(problem: Problem, z: np.ndarray, t: float):
    val, g, h = problem.objective.grad_hess(z)
    g = t * g
    h = t * h
    phi = t * val
    if problem.linear is not None and problem.linear.count:
        b = problem.linear.barrier(z, g, h)
        if not np.isfinite(b):
            return np.inf, g, h
        phi += b
    for c in problem.smooth:
        b = c.barrier(z, g, h)
        if not np.isfinite(b):
            return np.inf, g, h
        phi += b
    return phi, g, h


def _barrier_value(problem: Problem, z: np.ndarray, t: float) -> float:
    if problem.linear is not None and problem.linear.count:
        v = problem.linear.values(z)
        if np.any(v >= 0):
            return np.inf
        phi = -float(np.sum(np.log(-v)))
    else:
        phi = 0.0
    for c in problem.smooth:
        v = c.value(z)
        if not np.isfinite(v) or v >= 0:
            return np.inf
        phi += -np.log(-v)
    return phi + t * problem.objective.value(z)


def _newton(problem: Problem, z: np.ndarray, t: float, max_iters: int,
            tol: float = 3e-9) -> tuple[np.ndarray, int]:
    scales = problem.scales if problem.scales is not None else np.ones(problem.n)
    iters = 0
    for _ in range(max_iters):
        phi, g, h = _barrier_grad_hess(problem, z, t)
        if not np.isfinite(phi):
            raise FloatingPointError("barrier evaluated outside its domain")
        gs = g * scales
        hs = h * np.outer(scales, scales)
        ridge = 0.0
        for attempt in range(8):
            try:
                chol = np.linalg.cholesky(hs + ridge * np.eye(problem.n))
                break
            except np.linalg.LinAlgError:
                ridge = max(ridge * 10.0, 1e-12 * (1.0 + np.trace(hs) / problem.n))
        else:
            raise FloatingPointError("newton system not factorizable")
        step_s = -np.linalg.solve(chol.T, np.linalg.solve(chol, gs))
        decrement = float(-gs @ step_s)
        iters += 1
        if decrement / 2.0 <= tol:
            break
        step = step_s * scales
        alpha = 1.0
        accepted = False
        for _ in range(60):
            cand = z + alpha * step
            cand_phi = _barrier_value(problem, cand, t)
            if np.isfinite(cand_phi) and cand_phi <= phi - 0.25 * alpha * decrement:
                z = cand
                accepted = True
                break
            alpha *= 0.5
        if not accepted:
            break
    return z, iters


def _kkt_residual(problem: Problem, z: np.ndarray, t: float) -> float:
    """Normalized stationarity residual with barrier multipliers 1/(t*(-f_i))."""
    _, g0, _ = problem.objective.grad_hess(z)
    res = g0.copy()
    if problem.linear is not None and problem.linear.count:
        v = problem.linear.values(z)
        res += problem.linear.a.T @ (1.0 / (t * (-v)))
    for c in problem.smooth:
        v, gv, _ = c.grad_hess(z)
        res += gv / (t * (-v))
    scales = problem.scales if problem.scales is not None else np.ones(problem.n)
    return float(np.linalg.norm(res * scales) / (1.0 + np.linalg.norm(g0 * scales)))


def solve_barrier(problem: Problem, z0: np.ndarray, mu: float = 40.0,
                  gap_tol: float = 1e-7, kkt_tol: float = 1e-7,
                  max_newton: int = 200, gap0: float = 1.0) -> BarrierResult:
    """Minimize over the strictly feasible region starting from z0.

    gap0 estimates the initial suboptimality relative to the objective scale;
    warm starts near the optimum can pass a small value to skip the loose
    early centering stages.
    """
    z = np.asarray(z0, dtype=float).copy()
    if problem.max_violation(z) >= 0:
        raise ValueError("solve_barrier requires a strictly feasible start")
    m = max(problem.constraint_count(), 1)
    obj_scale = max(1.0, abs(problem.objective.value(z)))
    t = m / (obj_scale * max(gap0, gap_tol))
    total_iters = 0
    kkt = np.inf
    extra = 0
    while total_iters < max_newton:
        z, it = _newton(problem, z, t, max_iters=min(40, max_newton - total_iters))
        total_iters += it
        kkt = _kkt_residual(problem, z, t)
        if m / t < gap_tol * obj_scale:
            if kkt < kkt_tol or extra >= 2:
                break  # gap reached; allow only a short kkt clean-up tail
            extra += 1
        t *= mu
    status = SOLVED if total_iters < max_newton else ITERATION_CAP
    return BarrierResult(z=z, status=status, objective=problem.objective.value(z),
                         kkt_residual=kkt, newton_iters=total_iters,
                         max_violation=problem.max_violation(z))


class _Phase1Objective:
    """Objective s (the slack variable appended at the end of z)."""

    def value(self, z):
        return float(z[-1])

    def grad_hess(self, z):
        g = np.zeros(z.size)
        g[-1] = 1.0
        return float(z[-1]), g, np.zeros((z.size, z.size))


class _ShiftedLinear:
    """Wraps A z + b - s <= 0 for phase 1."""

    def __init__(self, inner: LinearConstraints):
        a = np.hstack([inner.a, -np.ones((inner.count, 1))])
        self.wrapped = LinearConstraints(a, inner.b, normalize=False)


class _ShiftedSmooth(SmoothConstraint):
    def __init__(self, inner: SmoothConstraint):
        self.inner = inner

    def value(self, z):
        v = self.inner.value(z[:-1])
        return v - z[-1] if np.isfinite(v) else np.inf

    def grad_hess(self, z):
        v, g, h = self.inner.grad_hess(z[:-1])
        if not np.isfinite(v):
            return np.inf, np.zeros(z.size), np.zeros((z.size, z.size))
        ge = np.append(g, -1.0)
        he = np.zeros((z.size, z.size))
        he[:-1, :-1] = h
        return v - z[-1], ge, he


def find_feasible(problem: Problem, z0: np.ndarray, feas_tol: float = 1e-8,
                  max_newton: int = 300,
                  return_point: bool = False):
    """Phase 1: find a strictly feasible point near z0.

    z0 must lie in the domain of every constraint (violations are fine).
    Infeasibility is declared when the minimized worst-violation slack stays
    above -feas_tol. Returns the point or None; with return_point=True the
    minimizer is returned alongside the verdict even when infeasible, so
    callers can re-linearize there.
    """
    def _done(point, ok):
        return (point, ok) if return_point else (point if ok else None)

    worst = problem.max_violation(z0)
    if worst < 0:  # any strictly feasible start works for the barrier
        return _done(np.asarray(z0, dtype=float).copy(), True)
    if not np.isfinite(worst):
        raise ValueError("phase-1 start is outside a constraint domain")

    n = problem.n
    aug = Problem(n=n + 1, objective=_Phase1Objective(),
                  linear=_ShiftedLinear(problem.linear).wrapped if problem.linear is not None else None,
                  smooth=[_ShiftedSmooth(c) for c in problem.smooth],
                  scales=np.append(problem.scales if problem.scales is not None else np.ones(n),
                                   max(1.0, abs(worst))))
    z = np.append(np.asarray(z0, dtype=float), worst * 1.1 + 1e-6)
    t = 1.0 / max(abs(worst), 1.0)
    total = 0
    target = -max(feas_tol, 1e-12)
    while total < max_newton:
        z, it = _newton(aug, z, t, max_iters=40)
        total += it
        if problem.max_violation(z[:-1]) < target:
            return _done(z[:-1], True)
        if 1.0 / t < feas_tol * 1e-2:
            break
        t *= 40.0
    if problem.max_violation(z[:-1]) < 0:
        return _done(z[:-1], True)
    return _done(z[:-1], False)
