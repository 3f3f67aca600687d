"""Dense convex QP solver: operator splitting with active-set polishing.

Solves ``minimize 0.5 z'Pz + q'z`` subject to linear equalities and
inequalities.  The engine works on the two-sided form ``lo <= A z <= hi``,
which lets a caller fix or free individual rows by editing bounds only;
the KKT factorization then survives across related solves (the
branch-and-bound in :mod:`footmpc.controller` leans on this).

Accuracy comes from a polishing step: once the splitting iteration has
localized the active set, the corresponding equality-constrained KKT
system is solved directly, giving residuals near machine precision.
Primal/dual infeasibility is detected from the iterate differences.
Everything is deterministic: fixed step sizes, fixed scaling, no
randomization.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

try:
    import numba

    _njit = numba.njit(cache=True)
except ImportError:  # pragma: no cover - numba is a hard dependency in practice
    def _njit(f):
        return f


class SingularKkt(RuntimeError):
    """The equality-constrained KKT system is singular."""


OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
MAX_ITER = "max_iter"

# internal engine status codes
_RUNNING = 0
_SOLVED = 1
_PRIMAL_INFEASIBLE = 2
_DUAL_INFEASIBLE = 3


@dataclass
class QpInstance:
    """Standard-form QP data: equalities A_eq z = b_eq, inequalities A_in z <= b_in."""

    P: np.ndarray
    q: np.ndarray
    A_eq: np.ndarray | None = None
    b_eq: np.ndarray | None = None
    A_in: np.ndarray | None = None
    b_in: np.ndarray | None = None

    def __post_init__(self):
        self.P = np.asarray(self.P, dtype=float)
        self.q = np.asarray(self.q, dtype=float).ravel()
        n = self.q.shape[0]
        if self.P.shape != (n, n):
            raise ValueError("P must be n x n matching q")
        self.P = 0.5 * (self.P + self.P.T)
        self.A_eq = _as_matrix(self.A_eq, n)
        self.b_eq = _as_vector(self.b_eq, self.A_eq.shape[0])
        self.A_in = _as_matrix(self.A_in, n)
        self.b_in = _as_vector(self.b_in, self.A_in.shape[0])

    @property
    def num_vars(self) -> int:
        return self.q.shape[0]


@dataclass
class QpResult:
    status: str
    z: np.ndarray
    objective: float
    dual_in: np.ndarray
    iterations: int
    primal_residual: float = np.nan
    dual_residual: float = np.nan


def _as_matrix(A, n):
    if A is None:
        return np.zeros((0, n))
    A = np.asarray(A, dtype=float)
    if A.ndim == 1:
        A = A.reshape(1, -1)
    if A.shape[1] != n:
        raise ValueError("constraint matrix width mismatch")
    return A


def _as_vector(b, m):
    if b is None:
        b = np.zeros(0)
    b = np.asarray(b, dtype=float).ravel()
    if b.shape[0] != m:
        raise ValueError("constraint vector length mismatch")
    return b


def solve_equality_qp(P, q, A_eq, b_eq):
    """Exact KKT solve for an equality-constrained QP.

    Returns (z, duals) with stationarity P z + q + A' duals = 0.  Raises
    :class:`SingularKkt` when the KKT matrix is singular or the residual
    cannot be driven below 1e-9 relative to the data scale.
    """
    P = np.asarray(P, dtype=float)
    q = np.asarray(q, dtype=float).ravel()
    n = q.shape[0]
    A = _as_matrix(A_eq, n)
    b = _as_vector(b_eq, A.shape[0])
    m = A.shape[0]
    K = np.zeros((n + m, n + m))
    K[:n, :n] = 0.5 * (P + P.T)
    K[:n, n:] = A.T
    K[n:, :n] = A
    rhs = np.concatenate([-q, b])
    import warnings

    try:
        with warnings.catch_warnings():
            warnings.simplefilter("error", scipy.linalg.LinAlgWarning)
            lu, piv = scipy.linalg.lu_factor(K)
        sol = scipy.linalg.lu_solve((lu, piv), rhs)
        if not np.isfinite(sol).all():
            raise SingularKkt("KKT solve produced non-finite values")
        for _ in range(2):
            sol += scipy.linalg.lu_solve((lu, piv), rhs - K @ sol)
    except (scipy.linalg.LinAlgError, scipy.linalg.LinAlgWarning, ValueError) as exc:
        raise SingularKkt(str(exc)) from exc
    scale = max(1.0, np.abs(q).max(initial=0.0), np.abs(b).max(initial=0.0),
                np.abs(sol).max(initial=0.0))
    resid = np.abs(rhs - K @ sol).max(initial=0.0)
    if not np.isfinite(sol).all() or resid > 1e-9 * scale:
        raise SingularKkt(f"KKT residual {resid:.3e} exceeds 1e-9 * {scale:.3e}")
    return sol[:n], sol[n:]


@_njit
def _lower_solve(L, b):
    """Solve L L' x = b for lower-triangular L, in a fresh array."""
    n = L.shape[0]
    w = b.copy()
    for i in range(n):
        s = w[i]
        for j in range(i):
            s -= L[i, j] * w[j]
        w[i] = s / L[i, i]
    for i in range(n - 1, -1, -1):
        s = w[i]
        for j in range(i + 1, n):
            s -= L[j, i] * w[j]
        w[i] = s / L[i, i]
    return w


@_njit
def _admm_iterate(L, Pb, qb, Ab, AbT, lo, hi, rho, rho_inv, sigma, alpha,
                  x, z, y, max_iter, check_every, eps_abs, eps_rel,
                  eps_pinf, eps_dinf, Dv, Ev, cost_scale, q_norm_unscaled):
    """Run the splitting iteration until the requested accuracy or budget.

    Iterates (x, z, y) are in scaled coordinates and updated in place.
    Returns (status, iterations, primal_res, dual_res) with residuals
    measured in unscaled coordinates.
    """
    n = x.shape[0]
    m = z.shape[0]
    status = _RUNNING
    rp = np.inf
    rd = np.inf
    s_prim = 1.0
    s_dual = 1.0
    it = 0
    dx = np.zeros(n)
    dy = np.zeros(m)
    w = np.zeros(m)
    rhs = np.zeros(n)
    zt = np.zeros(m)
    x_mark = x.copy()
    y_mark = y.copy()
    one_minus_alpha = 1.0 - alpha
    while it < max_iter:
        it += 1
        for i in range(m):
            w[i] = rho[i] * z[i] - y[i]
        for j in range(n):
            acc = 0.0
            for i in range(m):
                acc += AbT[j, i] * w[i]
            rhs[j] = sigma * x[j] - qb[j] + acc
        # in-place solve of L L' xt = rhs (xt stored in rhs)
        for i in range(n):
            s = rhs[i]
            for j in range(i):
                s -= L[i, j] * rhs[j]
            rhs[i] = s / L[i, i]
        for i in range(n - 1, -1, -1):
            s = rhs[i]
            for j in range(i + 1, n):
                s -= L[j, i] * rhs[j]
            rhs[i] = s / L[i, i]
        for i in range(m):
            acc = 0.0
            for j in range(n):
                acc += Ab[i, j] * rhs[j]
            zt[i] = acc
        for j in range(n):
            xn = alpha * rhs[j] + one_minus_alpha * x[j]
            dx[j] = xn - x[j]
            x[j] = xn
        for i in range(m):
            zc = alpha * zt[i] + one_minus_alpha * z[i]
            znew = zc + y[i] * rho_inv[i]
            if znew < lo[i]:
                znew = lo[i]
            elif znew > hi[i]:
                znew = hi[i]
            dy[i] = rho[i] * (zc - znew)
            y[i] = y[i] + dy[i]
            z[i] = znew

        if it % check_every != 0 and it != max_iter:
            continue

        # unscaled residuals
        Ax = Ab @ x
        rp = 0.0
        s_ax = 0.0
        s_z = 0.0
        for i in range(m):
            e = Ev[i]
            v = (Ax[i] - z[i]) / e
            if abs(v) > rp:
                rp = abs(v)
            if abs(Ax[i] / e) > s_ax:
                s_ax = abs(Ax[i] / e)
            if abs(z[i] / e) > s_z:
                s_z = abs(z[i] / e)
        Px = Pb @ x
        ATy = AbT @ y
        rd = 0.0
        s_px = 0.0
        s_aty = 0.0
        for j in range(n):
            d = Dv[j] * cost_scale
            v = (Px[j] + qb[j] + ATy[j]) / d
            if abs(v) > rd:
                rd = abs(v)
            if abs(Px[j] / d) > s_px:
                s_px = abs(Px[j] / d)
            if abs(ATy[j] / d) > s_aty:
                s_aty = abs(ATy[j] / d)
        s_prim = max(s_ax, s_z)
        s_dual = max(s_px, max(s_aty, q_norm_unscaled))
        eps_p = eps_abs + eps_rel * s_prim
        eps_d = eps_abs + eps_rel * s_dual
        if rp <= eps_p and rd <= eps_d:
            status = _SOLVED
            break

        # infeasibility certificates from the one-step delta and from the
        # delta accumulated since the previous check (smoother direction)
        found = _RUNNING
        for pass_idx in range(2):
            if pass_idx == 1:
                for i in range(m):
                    dy[i] = y[i] - y_mark[i]
                for j in range(n):
                    dx[j] = x[j] - x_mark[j]
            if _primal_cert(AbT, lo, hi, dy, Dv, Ev, cost_scale, eps_pinf, n, m):
                found = _PRIMAL_INFEASIBLE
                break
            if _dual_cert(Pb, qb, Ab, lo, hi, dx, Dv, Ev, cost_scale, eps_dinf, n, m):
                found = _DUAL_INFEASIBLE
                break
        for i in range(m):
            y_mark[i] = y[i]
        for j in range(n):
            x_mark[j] = x[j]
        if found != _RUNNING:
            status = found
            break
    return status, it, rp, rd, s_prim, s_dual


@_njit
def _primal_cert(AbT, lo, hi, dy, Dv, Ev, cost_scale, eps_pinf, n, m):
    dy_norm = 0.0
    for i in range(m):
        v = abs(Ev[i] * dy[i] / cost_scale)
        if v > dy_norm:
            dy_norm = v
    if dy_norm <= 1e-14:
        return False
    ATdy = AbT @ dy
    at_norm = 0.0
    for j in range(n):
        v = abs(ATdy[j] / (Dv[j] * cost_scale))
        if v > at_norm:
            at_norm = v
    support = 0.0
    for i in range(m):
        dyi = Ev[i] * dy[i] / cost_scale
        u_i = hi[i] / Ev[i]
        l_i = lo[i] / Ev[i]
        if dyi > 0.0:
            if np.isinf(u_i):
                if dyi > eps_pinf * dy_norm:
                    return False
            else:
                support += u_i * dyi
        elif dyi < 0.0:
            if np.isinf(l_i):
                if -dyi > eps_pinf * dy_norm:
                    return False
            else:
                support += l_i * dyi
    return at_norm <= eps_pinf * dy_norm and support <= -eps_pinf * dy_norm


@_njit
def _dual_cert(Pb, qb, Ab, lo, hi, dx, Dv, Ev, cost_scale, eps_dinf, n, m):
    dx_norm = 0.0
    for j in range(n):
        v = abs(Dv[j] * dx[j])
        if v > dx_norm:
            dx_norm = v
    if dx_norm <= 1e-14:
        return False
    Pdx = Pb @ dx
    for j in range(n):
        if abs(Pdx[j] / (Dv[j] * cost_scale)) > eps_dinf * dx_norm:
            return False
    qdx = 0.0
    for j in range(n):
        qdx += qb[j] * dx[j]
    qdx /= cost_scale
    if qdx > -eps_dinf * dx_norm:
        return False
    Adx = Ab @ dx
    for i in range(m):
        v = Adx[i] / Ev[i]
        if not np.isinf(hi[i]) and v > eps_dinf * dx_norm:
            return False
        if not np.isinf(lo[i]) and v < -eps_dinf * dx_norm:
            return False
    return True


@dataclass
class BoxQpResult:
    status: str
    z: np.ndarray
    y: np.ndarray
    objective: float
    iterations: int
    primal_residual: float
    dual_residual: float
    polished: bool
    warm: tuple | None = None


class BoxQp:
    """Reusable engine for ``min 0.5 z'Pz + q'z  s.t. lo <= A z <= hi``.

    The matrices are fixed at construction (scaled and factorized once);
    ``solve`` takes the linear cost and bounds, so families of problems
    differing only in bounds share all setup work.
    """

    def __init__(self, P, A, *, eq_rows=None, rho=0.1, sigma=1e-6, alpha=1.6,
                 ruiz_iters=10):
        P = np.ascontiguousarray(0.5 * (P + P.T), dtype=float)
        A = np.ascontiguousarray(A, dtype=float)
        self.n = P.shape[0]
        self.m = A.shape[0]
        self.P = P
        self.A = A
        self.sigma = float(sigma)
        self.alpha = float(alpha)

        # Ruiz equilibration of [[P, A'], [A, 0]]
        Dv = np.ones(self.n)
        Ev = np.ones(self.m)
        Pb = P.copy()
        Ab = A.copy()
        for _ in range(ruiz_iters):
            cn = np.maximum(
                np.abs(Pb).max(axis=0, initial=0.0),
                np.abs(Ab).max(axis=0, initial=0.0) if self.m else 0.0,
            )
            rn = np.abs(Ab).max(axis=1, initial=0.0) if self.m else np.zeros(0)
            d = 1.0 / np.sqrt(np.clip(cn, 1e-10, 1e10))
            d[cn == 0] = 1.0
            e = 1.0 / np.sqrt(np.clip(rn, 1e-10, 1e10)) if self.m else rn
            if self.m:
                e[rn == 0] = 1.0
            Pb = Pb * d[:, None] * d[None, :]
            if self.m:
                Ab = Ab * e[:, None] * d[None, :]
            Dv *= d
            Ev *= e
        self.Dv = Dv
        self.Ev = Ev
        self.cost_scale = 1.0
        self.Pb = np.ascontiguousarray(Pb)
        self.Ab = np.ascontiguousarray(Ab)
        self.AbT = np.ascontiguousarray(Ab.T)

        if eq_rows is None:
            eq_rows = np.zeros(self.m, dtype=bool)
        self._eq_rows = np.asarray(eq_rows, dtype=bool)
        self._rho_base = float(rho)
        self._set_rho(rho)

    def _set_rho(self, rho_scalar: float):
        """Per-row step sizes (equality rows run stiffer) and the KKT factor."""
        rho_scalar = float(np.clip(rho_scalar, 1e-6, 1e6))
        self._rho_scalar = rho_scalar
        self.rho = np.where(self._eq_rows, rho_scalar * 1e3, rho_scalar)
        self.rho_inv = 1.0 / self.rho
        K = self.Pb + self.sigma * np.eye(self.n)
        if self.m:
            K = K + self.AbT @ (self.rho[:, None] * self.Ab)
        try:
            self.L = np.ascontiguousarray(np.linalg.cholesky(K))
        except np.linalg.LinAlgError:
            # PSD-but-singular P: nudge the diagonal and refactor
            K = K + 1e-9 * np.eye(self.n)
            self.L = np.ascontiguousarray(np.linalg.cholesky(K))

    def scale_bounds(self, lo, hi):
        return self.Ev * lo, self.Ev * hi

    def solve(self, q, lo, hi, *, warm=None, tol_feas=1e-7, tol_opt=1e-7,
              max_iter=20000, eps_pinf=1e-5, eps_dinf=1e-5, direct_after=350):
        q = np.asarray(q, dtype=float).ravel()
        lo = np.asarray(lo, dtype=float).ravel()
        hi = np.asarray(hi, dtype=float).ravel()
        qb = np.ascontiguousarray(self.cost_scale * self.Dv * q)
        lob = np.ascontiguousarray(self.Ev * lo)
        hib = np.ascontiguousarray(self.Ev * hi)
        q_norm = float(np.abs(q).max(initial=0.0))

        if self.m == 0:
            z = np.linalg.solve(self.P + 1e-12 * np.eye(self.n), -q)
            obj = 0.5 * z @ self.P @ z + q @ z
            rd = float(np.abs(self.P @ z + q).max(initial=0.0))
            return BoxQpResult(OPTIMAL, z, np.zeros(0), obj, 0, 0.0, rd, False,
                               warm=(z, np.zeros(0)))

        if warm is not None:
            # warm iterates are exchanged unscaled so they survive re-scaling
            x = np.ascontiguousarray(warm[0] / self.Dv, dtype=float)
            y = np.ascontiguousarray(warm[1] * self.cost_scale / self.Ev, dtype=float)
            z = np.ascontiguousarray(np.clip(self.Ab @ x, lob, hib))
        else:
            x = np.zeros(self.n)
            y = np.zeros(self.m)
            z = np.ascontiguousarray(np.clip(self.Ab @ np.zeros(self.n), lob, hib))

        polish_tol = 0.1 * min(tol_feas, tol_opt)
        budget = max_iter
        used = 0
        rp = rd = np.inf
        chunk = 50
        feasibility_known = False
        while budget > 0:
            step = min(chunk, budget)
            if not feasibility_known and used < direct_after:
                step = min(step, direct_after - used)
            status, it, rp, rd, sp, sd = _admm_iterate(
                self.L, self.Pb, qb, self.Ab, self.AbT, lob, hib,
                self.rho, self.rho_inv, self.sigma, self.alpha,
                x, z, y, step, 25, 1e-10, 1e-10,
                eps_pinf, eps_dinf,
                self.Dv, self.Ev, self.cost_scale, q_norm,
            )
            used += it
            budget -= it
            if status == _PRIMAL_INFEASIBLE:
                return BoxQpResult(INFEASIBLE, self._unscale_x(x), self._unscale_y(y),
                                   np.nan, used, rp, rd, False,
                                   warm=(self._unscale_x(x), self._unscale_y(y)))
            if status == _DUAL_INFEASIBLE:
                return BoxQpResult(MAX_ITER, self._unscale_x(x), self._unscale_y(y),
                                   np.nan, used, rp, rd, False,
                                   warm=(self._unscale_x(x), self._unscale_y(y)))
            if rp <= 1e-3:  # polish only once the active set is plausible
                pol = self._polish(q, lo, hi, z / self.Ev, self._unscale_y(y),
                                   polish_tol)
                if pol is not None:
                    z_pol, y_pol, prp, prd = pol
                    obj = 0.5 * z_pol @ self.P @ z_pol + q @ z_pol
                    return BoxQpResult(OPTIMAL, z_pol, y_pol, obj, used, prp, prd,
                                       True,
                                       warm=(self._unscale_x(x), self._unscale_y(y)))
            if status == _SOLVED or (rp <= tol_feas and rd <= tol_opt):
                break
            # Splitting iterations certify infeasibility only asymptotically
            # and can crawl through active-set changes.  Once a node stalls,
            # settle it directly: an interior point solve (polished to full
            # accuracy), with an exact LP phase-1 deciding feasibility when
            # the interior point method cannot converge.
            if not feasibility_known and used >= direct_after:
                feasibility_known = True
                ipm = self._ipm_solve(q, lo, hi)
                if ipm is None:
                    if not self._phase1_feasible(lo, hi):
                        return BoxQpResult(
                            INFEASIBLE, self._unscale_x(x), self._unscale_y(y),
                            np.nan, used, rp, rd, False,
                            warm=(self._unscale_x(x), self._unscale_y(y)))
                else:
                    z_i, y_i = ipm
                    Az = self.A @ z_i
                    prp = float(np.maximum(np.maximum(lo - Az, Az - hi), 0.0)
                                .max(initial=0.0))
                    prd = float(np.abs(self.P @ z_i + q + self.A.T @ y_i)
                                .max(initial=0.0))
                    if prp <= tol_feas and prd <= tol_opt:
                        obj = 0.5 * z_i @ self.P @ z_i + q @ z_i
                        return BoxQpResult(OPTIMAL, z_i, y_i, obj, used,
                                           prp, prd, False, warm=(z_i, y_i))
                    pol = self._polish(q, lo, hi, Az, y_i, polish_tol)
                    if pol is not None:
                        z_pol, y_pol, prp, prd = pol
                        obj = 0.5 * z_pol @ self.P @ z_pol + q @ z_pol
                        return BoxQpResult(OPTIMAL, z_pol, y_pol, obj, used,
                                           prp, prd, True, warm=(z_pol, y_pol))
                # feasible but unresolved: bound the remaining splitting work
                budget = min(budget, 3000)
            # deterministic step-size adaptation from the residual balance
            if np.isfinite(rp) and np.isfinite(rd) and rd > 0 and sp > 0 and sd > 0:
                ratio = np.sqrt((rp / sp) / max(rd / sd, 1e-16))
                if ratio > 5.0 or ratio < 0.2:
                    self._set_rho(self._rho_scalar * ratio)
            chunk = min(2 * chunk, 2000)

        z_u = self._unscale_x(x)
        y_u = self._unscale_y(y)
        obj = 0.5 * z_u @ self.P @ z_u + q @ z_u
        final = OPTIMAL if (rp <= tol_feas and rd <= tol_opt) else MAX_ITER
        return BoxQpResult(final, z_u, y_u, obj, used, rp, rd, False, warm=(z_u, y_u))

    def _ipm_solve(self, q, lo, hi):
        """Dense predictor-corrector interior point solve of the node.

        Fallback for iterates the splitting method is slow to resolve.
        The equality rows are eliminated once through a null-space basis,
        so each Newton step factors only the reduced (few dozen variable)
        system.  Returns (z, y) in the two-sided row convention or None.
        """
        n = self.n
        eq = lo >= hi - 1e-300
        iu = np.flatnonzero(~eq & np.isfinite(hi))
        il = np.flatnonzero(~eq & np.isfinite(lo))
        E = self.A[eq]
        b = lo[eq]
        G = np.vstack([self.A[iu], -self.A[il]])
        h = np.concatenate([hi[iu], -lo[il]])
        me, mi = E.shape[0], G.shape[0]
        scale = max(1.0, np.abs(q).max(initial=0.0), np.abs(h).max(initial=0.0),
                    np.abs(b).max(initial=0.0))

        if me:
            # null-space reduction; pivoted QR tolerates redundant rows
            Qf, Rf, piv = scipy.linalg.qr(E.T, mode="full", pivoting=True)
            diag = np.abs(np.diag(Rf)) if Rf.shape[0] else np.zeros(0)
            tol = (diag[0] if diag.size else 0.0) * 1e-12
            rank = int(np.sum(diag > tol))
            w = scipy.linalg.solve_triangular(Rf[:rank, :rank].T, b[piv[:rank]],
                                              lower=True)
            z0 = Qf[:, :rank] @ w
            if np.abs(E @ z0 - b).max(initial=0.0) > 1e-8 * scale:
                return None
            Z = Qf[:, rank:]
        else:
            z0 = np.zeros(n)
            Z = np.eye(n)
        k = Z.shape[1]

        if mi == 0:
            H = Z.T @ self.P @ Z + 1e-11 * np.eye(k)
            g = Z.T @ (q + self.P @ z0)
            try:
                v = np.linalg.solve(H, -g)
            except np.linalg.LinAlgError:
                return None
            z = z0 + Z @ v
            y = np.zeros(self.m)
            if me:
                nu, *_ = np.linalg.lstsq(E.T, -(self.P @ z + q), rcond=None)
                y[eq] = nu
            return z, y

        Gr = G @ Z
        hr = h - G @ z0
        H = Z.T @ self.P @ Z
        g = Z.T @ (q + self.P @ z0)

        v = np.zeros(k)
        s = np.maximum(hr - Gr @ v, 1.0)
        lam = np.ones(mi)
        for _ in range(60):
            r_dual = H @ v + g + Gr.T @ lam
            r_in = Gr @ v + s - hr
            mu = lam @ s / mi
            if (mu < 1e-11 * scale
                    and np.abs(r_dual).max(initial=0.0) < 1e-9 * scale
                    and np.abs(r_in).max(initial=0.0) < 1e-9 * scale):
                break

            d = lam / s
            K = H + Gr.T @ (d[:, None] * Gr) + 1e-12 * np.eye(k)
            try:
                cho = scipy.linalg.cho_factor(K)
            except (scipy.linalg.LinAlgError, ValueError):
                return None

            def newton(target):
                rc = Gr.T @ ((lam * s - target - lam * r_in) / s)
                dv = scipy.linalg.cho_solve(cho, -r_dual + rc)
                ds = -r_in - Gr @ dv
                dlam = (target - lam * s - lam * ds) / s
                return dv, ds, dlam

            def step_len(vv, dvv):
                neg = dvv < 0
                if not np.any(neg):
                    return 1.0
                return min(1.0, float(np.min(-vv[neg] / dvv[neg])))

            dv, ds, dlam = newton(np.zeros(mi))
            a_p = step_len(s, ds)
            a_d = step_len(lam, dlam)
            mu_aff = ((lam + a_d * dlam) @ (s + a_p * ds)) / mi
            sigma_c = (mu_aff / max(mu, 1e-300)) ** 3
            dv, ds, dlam = newton(sigma_c * mu - ds * dlam)
            a = 0.99 * min(step_len(s, ds), step_len(lam, dlam))
            v = v + a * dv
            s = s + a * ds
            lam = lam + a * dlam
            if not (np.isfinite(v).all() and np.isfinite(s).all()
                    and np.isfinite(lam).all()):
                return None
        else:
            return None

        z = z0 + Z @ v
        y = np.zeros(self.m)
        y[iu] += lam[:len(iu)]
        y[il] -= lam[len(iu):]
        if me:
            nu, *_ = np.linalg.lstsq(E.T, -(self.P @ z + q + G.T @ lam), rcond=None)
            y[eq] = nu
        return z, y

    def _phase1_feasible(self, lo, hi) -> bool:
        """Exact feasibility of lo <= Az <= hi via an LP solve."""
        from scipy.optimize import linprog

        rows_u = np.isfinite(hi)
        rows_l = np.isfinite(lo)
        A_ub = np.vstack([self.A[rows_u], -self.A[rows_l]])
        b_ub = np.concatenate([hi[rows_u], -lo[rows_l]])
        res = linprog(c=np.zeros(self.n), A_ub=A_ub, b_ub=b_ub,
                      bounds=[(None, None)] * self.n, method="highs")
        return res.status == 0

    def _unscale_x(self, x):
        return self.Dv * x

    def _unscale_y(self, y):
        return self.Ev * y / self.cost_scale

    def _polish(self, q, lo, hi, z_unscaled, y_unscaled, tol):
        """Direct KKT solve on the identified active set.

        Two attempts: first from combined primal (iterate at a bound) and
        dual (multiplier sign) evidence, then from dual signs alone.
        Wrong-signed multipliers are clipped to zero and the result is
        accepted purely on the recomputed KKT residuals.
        """
        eq = lo >= hi - 1e-300  # rows pinned by equal bounds
        thr_y = 1e-10 * max(1.0, np.abs(y_unscaled).max(initial=0.0))
        near = 1e-6 * max(1.0, np.abs(z_unscaled).max(initial=0.0))
        low_d = (y_unscaled < -thr_y) & ~eq
        upp_d = (y_unscaled > thr_y) & ~eq
        low_p = (z_unscaled - lo <= near) & np.isfinite(lo) & ~eq
        upp_p = (hi - z_unscaled <= near) & np.isfinite(hi) & ~eq
        for low, upp in (
            (low_d | (low_p & ~upp_d), upp_d | (upp_p & ~low_d)),
            (low_d, upp_d),
        ):
            out = self._polish_attempt(q, lo, hi, eq, low, upp, tol)
            if out is not None:
                return out
        return None

    def _polish_attempt(self, q, lo, hi, eq, low, upp, tol):
        act = np.flatnonzero(eq | low | upp)
        k = act.shape[0]
        n = self.n
        if k > n + 20:
            # far more active rows than degrees of freedom: identification
            # is not yet meaningful and the factorization would be wasted
            return None
        Aact = self.A[act]
        bact = np.where(upp[act], hi[act], lo[act])
        bact[eq[act]] = lo[act][eq[act]]
        if not np.isfinite(bact).all():
            return None
        delta = 1e-9
        K = np.zeros((n + k, n + k))
        K[:n, :n] = self.P + delta * np.eye(n)
        K[:n, n:] = Aact.T
        K[n:, :n] = Aact
        K[n:, n:] = -delta * np.eye(k)
        rhs = np.concatenate([-q, bact])
        try:
            lu, piv = scipy.linalg.lu_factor(K)
        except (scipy.linalg.LinAlgError, ValueError):
            return None
        sol = scipy.linalg.lu_solve((lu, piv), rhs)
        K_exact = K.copy()
        K_exact[:n, :n] = self.P
        K_exact[n:, n:] = 0.0
        for _ in range(3):
            sol += scipy.linalg.lu_solve((lu, piv), rhs - K_exact @ sol)
        if not np.isfinite(sol).all():
            return None
        z = sol[:n]
        nu = sol[n:]
        y_full = np.zeros(self.m)
        # clip multipliers to the correct cone and judge by the residuals
        y_full[act] = np.where(eq[act], nu, np.where(low[act], np.minimum(nu, 0.0),
                                                     np.maximum(nu, 0.0)))
        Az = self.A @ z
        rp = float(np.maximum(np.maximum(lo - Az, Az - hi), 0.0).max(initial=0.0))
        rd = float(np.abs(self.P @ z + q + self.A.T @ y_full).max(initial=0.0))
        if rp > tol or rd > tol:
            return None
        return z, y_full, rp, rd


def solve_qp(inst: QpInstance, warm=None, tol_feas=1e-7, tol_opt=1e-7,
             max_iter=20000) -> QpResult:
    """Solve a standard-form instance; see :class:`QpResult` for the contract."""
    n = inst.num_vars
    m_eq = inst.A_eq.shape[0]
    m_in = inst.A_in.shape[0]
    if m_eq + m_in == 0:
        P_reg = inst.P + 1e-9 * np.eye(n)
        z = np.linalg.solve(P_reg, -inst.q)
        obj = 0.5 * z @ inst.P @ z + inst.q @ z
        rd = float(np.abs(inst.P @ z + inst.q).max(initial=0.0))
        return QpResult(OPTIMAL, z, obj, np.zeros(0), 0, 0.0, rd)
    A = np.vstack([inst.A_eq, inst.A_in])
    lo = np.concatenate([inst.b_eq, np.full(m_in, -np.inf)])
    hi = np.concatenate([inst.b_eq, inst.b_in])
    eq_rows = np.zeros(m_eq + m_in, dtype=bool)
    eq_rows[:m_eq] = True
    engine = BoxQp(inst.P, A, eq_rows=eq_rows)
    res = engine.solve(inst.q, lo, hi, warm=warm, tol_feas=tol_feas,
                       tol_opt=tol_opt, max_iter=max_iter)
    dual_in = np.maximum(res.y[m_eq:], 0.0)
    return QpResult(res.status, res.z, res.objective, dual_in, res.iterations,
                    res.primal_residual, res.dual_residual)
