"""Dense bounded-variable revised simplex for small linear programs.

Problems have the form::

    minimise (or maximise)  c @ x
    subject to              row_lo <= A @ x <= row_hi
                            lo <= x <= hi

Every row gets a slack ``s = A @ x`` that inherits the row bounds, so the
working system is ``[A, -I] @ [x; s] = 0`` with bounds on all columns.
Phase one adds one artificial column per violated row and minimises their
sum.  Pricing is Dantzig's rule, switching to Bland's smallest-index rule
after a run of degenerate pivots so the method cannot cycle.
"""
from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np

FEAS_TOL = 1e-9
COST_TOL = 1e-9
PIVOT_TOL = 1e-11
DEGENERATE_RUN = 30


class IterationLimitError(RuntimeError):
    """Raised when the pivot budget is exhausted."""


@dataclass
class LinearProgram:
    """Canonical ranged-row LP.  Infinite bounds are allowed."""

    c: np.ndarray
    A: np.ndarray
    row_lo: np.ndarray
    row_hi: np.ndarray
    lo: np.ndarray
    hi: np.ndarray
    sense: str = "min"
    var_names: list = field(default_factory=list)
    row_names: list = field(default_factory=list)

    def __post_init__(self):
        self.c = np.asarray(self.c, float)
        self.A = np.atleast_2d(np.asarray(self.A, float))
        n = self.c.size
        if self.A.shape[1] != n and self.A.size:
            raise ValueError("A has the wrong number of columns")
        if self.A.size == 0:
            self.A = np.zeros((0, n))
        self.row_lo = np.asarray(self.row_lo, float).reshape(-1)
        self.row_hi = np.asarray(self.row_hi, float).reshape(-1)
        self.lo = np.asarray(self.lo, float).reshape(-1)
        self.hi = np.asarray(self.hi, float).reshape(-1)
        if self.sense not in ("min", "max"):
            raise ValueError("sense must be 'min' or 'max'")
        for arr in (self.c, self.A):
            if not np.all(np.isfinite(arr)):
                raise ValueError("objective and constraint coefficients must be finite")
        if np.any(self.lo == np.inf) or np.any(self.hi == -np.inf):
            raise ValueError("lower bounds cannot be +inf nor upper bounds -inf")
        if not self.var_names:
            self.var_names = [f"x{j}" for j in range(n)]
        if not self.row_names:
            self.row_names = [f"r{i}" for i in range(self.A.shape[0])]

    @property
    def n_vars(self) -> int:
        return self.c.size

    @property
    def n_rows(self) -> int:
        return self.A.shape[0]

    def residual(self, x) -> float:
        """Largest violation of any row or variable bound at ``x``."""
        x = np.asarray(x, float)
        r = self.A @ x
        viol = [np.maximum(self.row_lo - r, 0.0), np.maximum(r - self.row_hi, 0.0),
                np.maximum(self.lo - x, 0.0), np.maximum(x - self.hi, 0.0)]
        return float(max((v.max() if v.size else 0.0) for v in viol))

    def dump(self) -> str:
        """Plain-text canonical form: objective, rows, bounds."""
        out = io.StringIO()
        out.write(f"{self.sense.upper()}\n  obj:")
        for name, v in zip(self.var_names, self.c):
            if v:
                out.write(f" {v:+.17g} {name}")
        out.write("\nSUBJECT TO\n")
        for i, name in enumerate(self.row_names):
            terms = " ".join(f"{v:+.17g} {self.var_names[j]}" for j, v in enumerate(self.A[i]) if v)
            out.write(f"  {name}: {self.row_lo[i]:.17g} <= {terms} <= {self.row_hi[i]:.17g}\n")
        out.write("BOUNDS\n")
        for name, l, h in zip(self.var_names, self.lo, self.hi):
            out.write(f"  {l:.17g} <= {name} <= {h:.17g}\n")
        out.write("END\n")
        return out.getvalue()


@dataclass
class LpSolution:
    status: str
    objective: float
    x: np.ndarray
    residual: float
    iterations: int
    certificate: np.ndarray | None = None


def _check_bounds(lp: LinearProgram) -> bool:
    return bool(np.all(lp.lo <= lp.hi) and np.all(lp.row_lo <= lp.row_hi))


class _Simplex:
    def __init__(self, M, lo, hi, max_iter):
        self.M = M
        self.m, self.n = M.shape
        self.lo = lo
        self.hi = hi
        self.max_iter = max_iter
        self.iterations = 0

    def compute_x(self):
        x = np.where(self.status == 1, self.lo, np.where(self.status == 2, self.hi, 0.0))
        x[self.basis] = 0.0
        if self.m:
            x[self.basis] = np.linalg.solve(self.M[:, self.basis], -self.M @ x)
        return x

    def _ratio_test(self, x, rate, step, bland):
        """Two-pass ratio test.

        Pivots smaller than ``PIVOT_TOL`` relative to the column are ignored.
        Among rows whose step is within tolerance of the smallest, the
        largest pivot wins (smallest basis index under Bland's rule).
        """
        if not self.m:
            return -1, 0
        tol = PIVOT_TOL * max(1.0, np.abs(rate).max())
        basis = np.asarray(self.basis)
        xb = x[basis]
        down = rate > tol
        up = rate < -tol
        t = np.full(self.m, np.inf)
        t[down] = (xb[down] - self.lo[basis[down]]) / rate[down]
        t[up] = (self.hi[basis[up]] - xb[up]) / -rate[up]
        t = np.maximum(t, 0.0)
        t_min = t.min()
        if not t_min < step:
            return -1, 0
        near = np.flatnonzero(t <= t_min + FEAS_TOL / np.maximum(np.abs(rate), tol))
        if bland:
            r = int(near[np.argmin(basis[near])])
        else:
            r = int(near[np.argmax(np.abs(rate[near]))])
        self._last_step = float(t[r])
        return r, (1 if rate[r] > 0 else 2)

    def run(self, cost):
        """Optimise from the current basis.  Returns 'optimal' or 'unbounded'."""
        bland = False
        degenerate = 0
        while True:
            if self.iterations >= self.max_iter:
                raise IterationLimitError(f"simplex exceeded {self.max_iter} pivots")
            x = self.compute_x()
            B = self.M[:, self.basis]
            y = np.linalg.solve(B.T, cost[self.basis]) if self.m else np.zeros(0)
            d = cost - self.M.T @ y
            in_basis = np.zeros(self.n, bool)
            in_basis[self.basis] = True
            scale = 1.0 + np.abs(cost).max(initial=0.0)
            can_up = (~in_basis) & (x < self.hi - FEAS_TOL) & (d < -COST_TOL * scale)
            can_dn = (~in_basis) & (x > self.lo + FEAS_TOL) & (d > COST_TOL * scale)
            cand = np.flatnonzero(can_up | can_dn)
            if cand.size == 0:
                self.x = x
                self.duals = y
                return "optimal"
            j = int(cand[0]) if bland else int(cand[np.argmax(np.abs(d[cand]))])
            direction = 1.0 if can_up[j] else -1.0
            w = np.linalg.solve(B, self.M[:, j]) if self.m else np.zeros(0)
            # basic variables move by -t * direction * w
            span = self.hi[j] - self.lo[j]
            step = span if np.isfinite(span) else np.inf
            leave, leave_to = self._ratio_test(x, direction * w, step, bland)
            if leave >= 0:
                step = self._last_step
            if not np.isfinite(step):
                self.ray = np.zeros(self.n)
                self.ray[j] = direction
                self.ray[self.basis] = -direction * w
                return "unbounded"
            self.iterations += 1
            if step <= FEAS_TOL:
                degenerate += 1
                if degenerate >= DEGENERATE_RUN:
                    bland = True
            else:
                degenerate = 0
            if leave < 0:
                # bound flip
                self.status[j] = 2 if direction > 0 else 1
                continue
            old = self.basis[leave]
            self.status[old] = leave_to
            self.basis[leave] = j
            self.status[j] = 0


def solve_lp(lp: LinearProgram, max_iter: int = 100_000) -> LpSolution:
    """Solve ``lp`` to optimality or report infeasibility/unboundedness."""
    n, m = lp.n_vars, lp.n_rows
    if not _check_bounds(lp):
        return LpSolution("infeasible", np.nan, np.full(n, np.nan), np.inf, 0)
    sign = 1.0 if lp.sense == "min" else -1.0
    c = sign * lp.c

    # start: structurals at a finite bound (or zero), slacks/artificials basic
    x0 = np.where(np.isfinite(lp.lo), lp.lo, np.where(np.isfinite(lp.hi), lp.hi, 0.0))
    r = lp.A @ x0
    below = r < lp.row_lo - FEAS_TOL
    above = r > lp.row_hi + FEAS_TOL
    viol = np.flatnonzero(below | above)
    n_art = viol.size
    M = np.zeros((m, n + m + n_art))
    M[:, :n] = lp.A
    M[:, n:n + m] = -np.eye(m)
    lo = np.concatenate([lp.lo, lp.row_lo, np.zeros(n_art)])
    hi = np.concatenate([lp.hi, lp.row_hi, np.full(n_art, np.inf)])
    status = np.zeros(n + m + n_art, int)
    for j in range(n):
        status[j] = 1 if np.isfinite(lp.lo[j]) else (2 if np.isfinite(lp.hi[j]) else 3)
    basis = list(range(n, n + m))
    for a, i in enumerate(viol):
        col = n + m + a
        # slack sits at the violated bound, artificial absorbs the gap
        if below[i]:
            status[n + i] = 1
            M[i, col] = 1.0
        else:
            status[n + i] = 2
            M[i, col] = -1.0
        basis[i] = col
    sx = _Simplex(M, lo, hi, max_iter)
    sx.status = status
    sx.basis = basis

    if n_art:
        cost1 = np.zeros(M.shape[1])
        cost1[n + m:] = 1.0
        sx.run(cost1)
        infeas = float(sx.x[n + m:].sum())
        scale = 1.0 + max(np.abs(lp.row_lo[np.isfinite(lp.row_lo)]).max(initial=0.0),
                          np.abs(lp.row_hi[np.isfinite(lp.row_hi)]).max(initial=0.0))
        if infeas > 1e-8 * scale:
            return LpSolution("infeasible", np.nan, sx.x[:n].copy(), infeas, sx.iterations,
                              certificate=sx.duals.copy())
        sx.hi[n + m:] = 0.0
        for col in range(n + m, n + m + n_art):
            if col not in sx.basis:
                sx.status[col] = 1

    cost2 = np.zeros(M.shape[1])
    cost2[:n] = c
    outcome = sx.run(cost2)
    if outcome == "unbounded":
        return LpSolution("unbounded", -sign * np.inf, np.full(n, np.nan), np.nan,
                          sx.iterations, certificate=sx.ray[:n].copy())
    x = sx.x[:n].copy()
    res = lp.residual(x)
    finite = np.concatenate([lp.row_lo, lp.row_hi, lp.lo, lp.hi])
    finite = finite[np.isfinite(finite)]
    tol = 1e-9 * (1.0 + (np.abs(finite).max() if finite.size else 0.0))
    status_s = "optimal" if res <= tol else "inaccurate"
    return LpSolution(status_s, float(lp.c @ x), x, res, sx.iterations, certificate=sx.duals.copy())
