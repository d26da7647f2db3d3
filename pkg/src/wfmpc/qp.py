"""Convex quadratic programming with inequality constraints.

Problems have the form::

    minimize    0.5 x'Hx + g'x + const
    subject to  G x <= h

and are solved by an over-relaxed operator-splitting (ADMM) iteration with
adaptive penalty, followed by an active-set polishing step that recovers a
high-accuracy primal/dual pair. Every returned solution carries the four KKT
residuals recomputed from ``(problem, x, duals)``.
"""

import enum
import hashlib
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .exceptions import InvalidParameterError


class Status(str, enum.Enum):
    SOLVED = "solved"
    MAX_ITER = "max_iter"
    INFEASIBLE = "infeasible"


@dataclass
class QpProblem:
    """Quadratic program ``min 0.5 x'Hx + g'x + const  s.t.  Gx <= h``.

    ``G`` may be a dense array or a scipy sparse matrix; it is stored as CSR.
    """

    H: np.ndarray
    g: np.ndarray
    G: sp.csr_matrix = None
    h: np.ndarray = None
    const: float = 0.0

    def __post_init__(self):
        self.H = np.asarray(self.H, dtype=float)
        self.g = np.asarray(self.g, dtype=float).ravel()
        n = self.g.size
        if self.H.shape != (n, n):
            raise InvalidParameterError(
                f"Hessian shape {self.H.shape} does not match gradient length {n}")
        if not np.all(np.isfinite(self.H)) or not np.all(np.isfinite(self.g)):
            raise InvalidParameterError("Hessian and gradient must be finite")
        if np.max(np.abs(self.H - self.H.T), initial=0.0) > 1e-10:
            raise InvalidParameterError("Hessian is not symmetric")
        if self.G is None:
            self.G = sp.csr_matrix((0, n))
            self.h = np.zeros(0)
        self.G = sp.csr_matrix(self.G, dtype=float)
        self.h = np.asarray(self.h, dtype=float).ravel()
        if self.G.shape[1] != n or self.G.shape[0] != self.h.size:
            raise InvalidParameterError(
                f"constraint shapes G{self.G.shape}, h({self.h.size}) inconsistent with n={n}")

    @property
    def n(self):
        return self.g.size

    @property
    def m(self):
        return self.h.size

    def objective(self, x):
        x = np.asarray(x, dtype=float)
        return 0.5 * x @ self.H @ x + self.g @ x + self.const


@dataclass(frozen=True)
class KktResiduals:
    stationarity: float
    primal: float
    dual: float
    complementarity: float

    def max(self):
        return max(self.stationarity, self.primal, self.dual, self.complementarity)

    def within(self, tol):
        return self.max() <= tol


@dataclass
class QpSolution:
    x: np.ndarray
    duals: np.ndarray
    status: Status
    iterations: int
    residuals: KktResiduals
    objective: float
    polished: bool = False
    rho: float = field(default=np.nan)

    @property
    def ok(self):
        return self.status is Status.SOLVED


def kkt_residuals(problem, x, duals):
    """Infinity-norm KKT residuals of a primal/dual pair.

    Returns stationarity ``|Hx + g + G'nu|``, primal infeasibility
    ``|max(Gx - h, 0)|``, dual infeasibility ``|min(nu, 0)|`` and
    complementarity ``|nu * (Gx - h)|``.
    """
    x = np.asarray(x, dtype=float)
    nu = np.asarray(duals, dtype=float)
    if x.size != problem.n or nu.size != problem.m:
        raise InvalidParameterError("primal/dual sizes do not match the problem")
    stat = problem.H @ x + problem.g + problem.G.T @ nu
    slack = problem.G @ x - problem.h
    return KktResiduals(
        stationarity=_inf_norm(stat),
        primal=_inf_norm(np.maximum(slack, 0.0)),
        dual=_inf_norm(np.minimum(nu, 0.0)),
        complementarity=_inf_norm(nu * slack),
    )


def _inf_norm(v):
    return float(np.max(np.abs(v), initial=0.0))


def _lower_bandwidth(K):
    rows, cols = np.nonzero(K)
    if rows.size == 0:
        return 0
    return int(np.max(np.abs(rows - cols)))


class _Factor:
    """Cholesky factor of a symmetric positive definite matrix.

    Uses LAPACK banded storage when the bandwidth is small relative to ``n``.
    """

    def __init__(self, K):
        n = K.shape[0]
        b = _lower_bandwidth(K)
        self.banded = n >= 16 and b < n // 4
        if self.banded:
            ab = np.zeros((b + 1, n))
            for d in range(b + 1):
                ab[d, : n - d] = np.diagonal(K, -d)
            self._c = sla.cholesky_banded(ab, lower=True)
        else:
            self._c = sla.cho_factor(K, lower=True)

    def solve(self, rhs):
        if self.banded:
            return sla.cho_solve_banded((self._c, True), rhs, check_finite=False)
        return sla.cho_solve(self._c, rhs, check_finite=False)


class QpSolver:
    """ADMM solver with factorization reuse across calls.

    A solver instance caches the factorization of the linear system it last
    used; repeated solves with identical ``(H, G)`` skip refactoring.

    Parameters
    ----------
    rho : float
        Initial constraint penalty.
    sigma : float
        Primal regularization added to the Hessian in the linear system.
    alpha : float
        Over-relaxation factor in (0, 2).
    adaptive_rho : bool
        Rebalance ``rho`` from the primal/dual residual ratio.
    polish : bool
        Attempt active-set polishing once residuals are moderately small.
    """

    def __init__(self, rho=0.1, sigma=1e-6, alpha=1.6, adaptive_rho=True,
                 polish=True, check_every=5, adapt_every=25, eps_infeasible=1e-6):
        if not 0.0 < alpha < 2.0:
            raise InvalidParameterError("alpha must lie in (0, 2)")
        self.rho0 = rho
        self.sigma = sigma
        self.alpha = alpha
        self.adaptive_rho = adaptive_rho
        self.polish = polish
        self.check_every = check_every
        self.adapt_every = adapt_every
        self.eps_infeasible = eps_infeasible
        self._cache_key = None
        self._factor = None
        self._GtG = None
        self.factorizations = 0

    def _problem_key(self, problem):
        d = hashlib.sha1(problem.H.tobytes())
        d.update(problem.G.data.tobytes())
        d.update(problem.G.indices.tobytes())
        d.update(problem.G.indptr.tobytes())
        d.update(repr(problem.G.shape).encode())
        return d.hexdigest()

    def _factor_for(self, problem, key, rho):
        if self._cache_key != (key, rho):
            if self._cache_key is None or self._cache_key[0] != key:
                self._GtG = (problem.G.T @ problem.G).toarray()
            K = problem.H + self.sigma * np.eye(problem.n) + rho * self._GtG
            self._factor = _Factor(K)
            self._cache_key = (key, rho)
            self.factorizations += 1
        return self._factor

    def solve(self, problem, tol=1e-6, max_iter=4000, warm_start=None):
        """Solve ``problem`` to KKT tolerance ``tol`` (absolute, infinity norm).

        ``warm_start`` is an optional ``(x, duals)`` pair; either entry may be
        ``None``.
        """
        if tol <= 0:
            raise InvalidParameterError("tol must be positive")
        n, m = problem.n, problem.m
        H, g, G, h = problem.H, problem.g, problem.G, problem.h
        GT = G.T.tocsr()

        x = np.zeros(n)
        y = np.zeros(m)
        if warm_start is not None:
            wx, wy = warm_start
            if wx is not None:
                x = np.array(wx, dtype=float).ravel()
            if wy is not None:
                y = np.maximum(np.array(wy, dtype=float).ravel(), 0.0)
            if x.size != n or y.size != m:
                raise InvalidParameterError("warm start has the wrong size")
        z = np.minimum(G @ x, h)

        if m == 0:
            # Unconstrained: a single regularized Newton step plus refinement.
            x = self._unconstrained(problem)
            res = kkt_residuals(problem, x, y)
            status = Status.SOLVED if res.within(tol) else Status.MAX_ITER
            return QpSolution(x, y, status, 1, res, problem.objective(x), rho=np.nan)

        key = self._problem_key(problem)
        rho = self.rho0
        factor = self._factor_for(problem, key, rho)
        alpha, sigma = self.alpha, self.sigma

        best = None
        polish_after = 0
        it = 0
        for it in range(1, max_iter + 1):
            rhs = sigma * x - g + GT @ (rho * z - y)
            xt = factor.solve(rhs)
            zt = G @ xt
            x = alpha * xt + (1.0 - alpha) * x
            zr = alpha * zt + (1.0 - alpha) * z
            z = np.minimum(zr + y / rho, h)
            y_prev = y
            y = y + rho * (zr - z)

            if it % self.check_every and it != max_iter:
                continue

            res = kkt_residuals(problem, x, y)
            if best is None or res.max() < best[2].max():
                best = (x.copy(), y.copy(), res)
            if res.within(tol):
                return QpSolution(x, y, Status.SOLVED, it, res,
                                  problem.objective(x), rho=rho)

            if self._certify_infeasible(G, h, y - y_prev):
                return QpSolution(x, y, Status.INFEASIBLE, it, res,
                                  problem.objective(x), rho=rho)

            if self.polish and it >= polish_after and res.max() <= 1e-2:
                pol = self._polish(problem, x, z, y)
                if pol is not None:
                    px, py, pres = pol
                    if pres.within(tol):
                        return QpSolution(px, py, Status.SOLVED, it, pres,
                                          problem.objective(px), polished=True, rho=rho)
                    if pres.max() < best[2].max():
                        best = (px, py, pres)
                polish_after = it + 4 * self.adapt_every

            if self.adaptive_rho and it % self.adapt_every == 0:
                new_rho = self._balanced_rho(problem, x, z, y, rho)
                if new_rho > 5.0 * rho or new_rho < 0.2 * rho:
                    rho = new_rho
                    factor = self._factor_for(problem, key, rho)

        x, y, res = best
        return QpSolution(x, y, Status.MAX_ITER, it, res, problem.objective(x), rho=rho)

    def _unconstrained(self, problem):
        K = problem.H + self.sigma * np.eye(problem.n)
        f = _Factor(K)
        x = f.solve(-problem.g)
        for _ in range(5):
            r = -problem.g - problem.H @ x
            x = x + f.solve(r)
        return x

    def _balanced_rho(self, problem, x, z, y, rho):
        Gx = problem.G @ x
        Hx = problem.H @ x
        Gty = problem.G.T @ y
        r_prim = _inf_norm(Gx - z) / max(_inf_norm(Gx), _inf_norm(z), 1e-12)
        r_dual = _inf_norm(Hx + problem.g + Gty) / max(
            _inf_norm(Hx), _inf_norm(Gty), _inf_norm(problem.g), 1e-12)
        ratio = np.sqrt(r_prim / max(r_dual, 1e-12))
        return float(np.clip(rho * ratio, 1e-6, 1e6))

    def _certify_infeasible(self, G, h, dy):
        dy = np.maximum(dy, 0.0)
        scale = _inf_norm(dy)
        if scale < 1e-9:
            return False
        eps = self.eps_infeasible * scale
        return _inf_norm(G.T @ dy) <= eps and float(h @ dy) < -eps

    def _polish(self, problem, x, z, y):
        """Solve the equality-constrained QP on the guessed active set."""
        n = problem.n
        active = np.flatnonzero(problem.h - z < y)
        GA = problem.G[active]
        na = active.size
        delta = 1e-9
        Hs = sp.csr_matrix(problem.H)
        K = sp.bmat([[Hs, GA.T], [GA, None]], format="csc")
        reg = sp.diags(np.r_[np.full(n, delta), np.full(na, -delta)], format="csc")
        try:
            lu = spla.splu((K + reg).tocsc())
        except RuntimeError:
            return None
        rhs = np.r_[-problem.g, problem.h[active]]
        sol = lu.solve(rhs)
        for _ in range(10):
            r = rhs - K @ sol
            if _inf_norm(r) < 1e-14 * max(1.0, _inf_norm(rhs)):
                break
            sol = sol + lu.solve(r)
        if not np.all(np.isfinite(sol)):
            return None
        px = sol[:n]
        py = np.zeros(problem.m)
        py[active] = sol[n:]
        return px, py, kkt_residuals(problem, px, py)


def solve(problem, tol=1e-6, max_iter=4000, warm_start=None, **options):
    """Solve a :class:`QpProblem` with a fresh :class:`QpSolver`."""
    return QpSolver(**options).solve(problem, tol=tol, max_iter=max_iter,
                                     warm_start=warm_start)


def dump_problem(problem, path):
    """Write ``problem`` as text blocks: a ``name rows cols`` header then rows."""
    with open(path, "w") as fh:
        fh.write("# wfmpc qp v1\n")
        _write_block(fh, "H", problem.H)
        _write_block(fh, "g", problem.g[:, None])
        _write_block(fh, "G", problem.G.toarray())
        _write_block(fh, "h", problem.h[:, None])
        _write_block(fh, "const", np.array([[problem.const]]))


def _write_block(fh, name, arr):
    rows, cols = arr.shape
    fh.write(f"{name} {rows} {cols}\n")
    for row in arr:
        fh.write(" ".join(repr(float(v)) for v in row) + "\n")


def load_problem(path):
    blocks = {}
    with open(path) as fh:
        lines = [ln for ln in fh.read().splitlines() if ln and not ln.startswith("#")]
    i = 0
    while i < len(lines):
        name, rows, cols = lines[i].split()
        rows, cols = int(rows), int(cols)
        data = [np.array(lines[i + 1 + r].split(), dtype=float) for r in range(rows)]
        blocks[name] = np.array(data).reshape(rows, cols)
        i += 1 + rows
    G = blocks["G"]
    return QpProblem(H=blocks["H"], g=blocks["g"].ravel(), G=G,
                     h=blocks["h"].ravel(), const=float(blocks["const"][0, 0]))
