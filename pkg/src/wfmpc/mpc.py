"""Receding-horizon active-power controller.

Each turbine is modelled, with its wind speed frozen over the horizon, by
the linear system::

    ct_hat(t+1) = a ct_hat(t) + b u(t)
    F(t+1)      = kF * ct_hat(t+1),   kF = 0.5 rho A U**2
    P(t+1)      = kP * ct_hat(t+1),   kP = 0.5 rho A U**3

with state ``X_i = [F_i, P_i, ct_hat_i]`` and input ``u`` the thrust
coefficient command. The decision vector stacks ``u`` over ``M`` steps in
time-major order (index ``k*N + i``). The objective combines power-reference
tracking, command-rate penalty, load-rate penalty and load equalization;
constraints bound the commands and their step-to-step changes.
"""

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .exceptions import InternalConsistencyError, InvalidParameterError
from .qp import QpProblem, QpSolver, Status

N_CH = 3  # F, P, ct_hat per turbine


@dataclass
class MpcWeights:
    """Objective weights.

    ``s`` trades load-rate (``S1 = s I``) against equalization
    (``S2 = (1 - s) * s2_scale * I``); ``w`` scales both load terms.
    ``drop_r`` removes the command-rate term, which with ``s = 1`` gives the
    pure tracking/load-rate baseline objective.
    """

    q: float = 1.0
    r: float = 1e12
    w: float = 1e3
    s: float = 1.0
    s2_scale: float = 1e-2
    drop_r: bool = False

    def __post_init__(self):
        if self.q < 0 or self.r < 0 or self.w < 0 or self.s2_scale < 0:
            raise InvalidParameterError("weights must be non-negative")
        if not 0.0 <= self.s <= 1.0:
            raise InvalidParameterError("s must lie in [0, 1]")

    @property
    def s1(self):
        return self.s

    @property
    def s2(self):
        return (1.0 - self.s) * self.s2_scale


@dataclass
class ConstraintSpec:
    ct_min: float = 0.1
    ct_max: float = 2.0
    d_ct: float = 0.2

    def __post_init__(self):
        if not self.ct_min < self.ct_max:
            raise InvalidParameterError("ct_min must be below ct_max")
        if self.d_ct <= 0:
            raise InvalidParameterError("d_ct must be positive")


def discretize_filter(tau, dt):
    """Zero-order-hold discretization of ``tau dy/dt + y = u``: ``(exp(-dt/tau), 1 - a)``."""
    if tau < 0 or dt <= 0:
        raise InvalidParameterError("tau must be >= 0 and dt > 0")
    if tau == 0:
        return 0.0, 1.0
    a = math.exp(-dt / tau)
    return a, 1.0 - a


@dataclass
class PredictionModel:
    """Stacked M-step prediction ``X_pred = Phi X0 + Gamma u + offset``.

    ``X_pred`` stacks ``X(t0+1) ... X(t0+M)``, each ordered per turbine as
    ``[F, P, ct_hat]``.
    """

    a_d: float
    b_d: float
    A: np.ndarray
    B: np.ndarray
    Phi: np.ndarray
    Gamma: np.ndarray
    offset: np.ndarray
    X0: np.ndarray
    U: np.ndarray
    horizon: int
    mu: np.ndarray
    kF: np.ndarray
    kP: np.ndarray

    @property
    def n_turbines(self):
        return self.U.size

    def predict(self, u):
        return self.Phi @ self.X0 + self.Gamma @ np.asarray(u, float) + self.offset

    def channel(self, name):
        """Rows of the stacked prediction for one channel, as ``(const, J)``.

        The channel values over the horizon, in time-major order, equal
        ``const + J @ u``.
        """
        c = {"F": 0, "P": 1, "ct": 2}[name]
        N, M = self.n_turbines, self.horizon
        rows = (np.arange(M)[:, None] * N_CH * N + np.arange(N)[None, :] * N_CH + c).ravel()
        base = self.Phi @ self.X0 + self.offset
        return base[rows], self.Gamma[rows]


def stack_state(F, P, ct):
    """Interleave per-turbine channels into ``X = [F1, P1, c1, F2, ...]``."""
    return np.column_stack([F, P, ct]).ravel()


def unstack_state(X):
    X = np.asarray(X).reshape(-1, N_CH)
    return X[:, 0], X[:, 1], X[:, 2]


def build_prediction(X0, U, horizon, dt, tau, half_rho_area, mu=0.5, prev_prediction=None):
    """Prediction model around the measured state ``X0`` with wind ``U`` frozen.

    ``mu`` is a scalar, a per-channel triple, or a full diagonal of length
    ``3N``. The correction ``mu * (X0 - prev_prediction)`` is added to the
    first predicted block only; ``prev_prediction`` is what the previous
    solve predicted for the present instant (``None`` means no correction).
    """
    U = np.asarray(U, dtype=float).ravel()
    X0 = np.asarray(X0, dtype=float).ravel()
    N = U.size
    if np.any(U <= 0):
        raise InvalidParameterError("frozen wind speeds must be positive")
    if X0.size != N_CH * N or not np.all(np.isfinite(X0)):
        raise InvalidParameterError(f"state must be finite with length {N_CH * N}")
    if horizon < 1:
        raise InvalidParameterError("horizon must be at least 1")
    mu = np.asarray(mu, dtype=float)
    if mu.ndim == 0:
        mu = np.full(N_CH * N, float(mu))
    elif mu.size == N_CH:
        mu = np.tile(mu, N)
    if mu.size != N_CH * N or np.any(mu < 0) or np.any(mu > 1):
        raise InvalidParameterError("mu entries must lie in [0, 1] with length 3N")

    a, b = discretize_filter(tau, dt)
    kF = half_rho_area * U ** 2
    kP = kF * U
    A = np.zeros((N_CH * N, N_CH * N))
    B = np.zeros((N_CH * N, N))
    for i in range(N):
        r = N_CH * i
        A[r:r + 3, r + 2] = [kF[i] * a, kP[i] * a, a]
        B[r:r + 3, i] = [kF[i] * b, kP[i] * b, b]

    n_x = N_CH * N
    powers = [np.eye(n_x)]
    for _ in range(horizon):
        powers.append(A @ powers[-1])
    Phi = np.vstack(powers[1:])
    Gamma = np.zeros((horizon * n_x, horizon * N))
    AkB = [powers[k] @ B for k in range(horizon)]
    for k in range(horizon):
        for j in range(k + 1):
            Gamma[k * n_x:(k + 1) * n_x, j * N:(j + 1) * N] = AkB[k - j]

    offset = np.zeros(horizon * n_x)
    if prev_prediction is not None:
        prev_prediction = np.asarray(prev_prediction, dtype=float).ravel()
        if prev_prediction.size != n_x:
            raise InvalidParameterError("previous prediction has the wrong length")
        offset[:n_x] = mu * (X0 - prev_prediction)

    return PredictionModel(a_d=a, b_d=b, A=A, B=B, Phi=Phi, Gamma=Gamma, offset=offset,
                           X0=X0, U=U, horizon=horizon, mu=mu, kF=kF, kP=kP)


def constraint_set(prev_ct, ct_min, ct_max, d_ct, horizon):
    """Box and rate limits on the stacked commands as ``G x <= h``.

    Row blocks, each ``N*M`` long: upper box, lower box, upper rate, lower
    rate. The first rate row of each turbine is anchored to ``prev_ct``.
    """
    prev_ct = np.asarray(prev_ct, dtype=float).ravel()
    if not ct_min < ct_max or d_ct <= 0:
        raise InvalidParameterError("need ct_min < ct_max and d_ct > 0")
    N, M = prev_ct.size, horizon
    n = N * M
    I = sp.identity(n, format="csr")
    D = _difference_operator(N, M)
    G = sp.vstack([I, -I, D, -D], format="csr")
    anchor = np.zeros(n)
    anchor[:N] = prev_ct
    h = np.concatenate([np.full(n, ct_max), np.full(n, -ct_min),
                        d_ct + anchor, d_ct - anchor])
    return G, h


def _difference_operator(N, M):
    """``(D x)[k*N+i] = x[k*N+i] - x[(k-1)*N+i]`` with ``x[-N+i] = 0``."""
    n = N * M
    return (sp.identity(n, format="csr") - sp.eye(n, n, k=-N, format="csr")).tocsr()


def feasible_window(prev_ct, k, ct_min, ct_max, d_ct):
    """Interval reachable by step ``k`` (1-based) from ``prev_ct``."""
    return max(ct_min, prev_ct - k * d_ct), min(ct_max, prev_ct + k * d_ct)


@dataclass
class QpMeta:
    """Bookkeeping linking a normalized QP back to physical units."""

    scale: float
    N: int
    M: int
    terms: dict = field(default_factory=dict)

    def physical_objective(self, problem, x):
        return self.scale * problem.objective(x)


def _add_ls_term(H, g, const, L, v, weight):
    """Accumulate ``weight * |L x - v|^2`` into ``0.5 x'Hx + g'x + const`` form."""
    if weight == 0:
        return const
    LtL = L.T @ L
    H += 2.0 * weight * LtL
    g -= 2.0 * weight * (L.T @ v)
    return const + weight * float(v @ v)


def objective_terms(pred, p_ref, weights, prev_F, prev_ct):
    """Least-squares pieces ``{name: (L, v, weight)}`` of the objective."""
    N, M = pred.n_turbines, pred.horizon
    n = N * M
    p_ref = np.broadcast_to(np.asarray(p_ref, dtype=float), (M,))
    prev_F = np.asarray(prev_F, dtype=float).ravel()
    prev_ct = np.asarray(prev_ct, dtype=float).ravel()
    if prev_F.size != N or prev_ct.size != N:
        raise InvalidParameterError("previous force/command vectors must have length N")

    F0, JF = pred.channel("F")
    P0, JP = pred.channel("P")
    summer = np.kron(np.eye(M), np.ones((1, N)))
    D = _difference_operator(N, M).toarray()
    anchor_F = np.zeros(n)
    anchor_F[:N] = prev_F
    anchor_ct = np.zeros(n)
    anchor_ct[:N] = prev_ct
    center = np.kron(np.eye(M), np.eye(N) - np.full((N, N), 1.0 / N))

    terms = {
        # sum_i P_i(k) - P_ref(k)
        "tracking": (summer @ JP, p_ref - summer @ P0, weights.q),
        # u(k) - u(k-1), u(-1) = prev_ct
        "command_rate": (D, anchor_ct, 0.0 if weights.drop_r else weights.r),
        # F(k) - F(k-1), F(0) = prev_F
        "load_rate": (D @ JF, anchor_F - D @ F0, weights.w * weights.s1),
        # F(k) - mean_j F_j(k)
        "equalization": (center @ JF, -center @ F0, weights.w * weights.s2),
    }
    return terms


def assemble_qp(pred, p_ref, weights, prev_F, prev_ct, constraints):
    """Normalized QP for one control step plus its :class:`QpMeta`.

    The objective is divided by the largest Hessian diagonal entry so
    residual tolerances are meaningful; ``meta.scale`` restores units.
    """
    N, M = pred.n_turbines, pred.horizon
    n = N * M
    H = np.zeros((n, n))
    g = np.zeros(n)
    const = 0.0
    terms = objective_terms(pred, p_ref, weights, prev_F, prev_ct)
    for L, v, wt in terms.values():
        const = _add_ls_term(H, g, const, L, v, wt)
    H = 0.5 * (H + H.T)
    scale = float(np.max(np.abs(np.diag(H)), initial=0.0))
    if not scale > 0:
        scale = 1.0
    H /= scale
    g /= scale
    const /= scale
    _check_psd(H)
    G, h = constraint_set(prev_ct, constraints.ct_min, constraints.ct_max,
                          constraints.d_ct, M)
    problem = QpProblem(H=H, g=g, G=G, h=h, const=const)
    return problem, QpMeta(scale=scale, N=N, M=M, terms=terms)


def _check_psd(H):
    n = H.shape[0]
    try:
        np.linalg.cholesky(H + 1e-9 * np.eye(n))
    except np.linalg.LinAlgError as exc:
        raise InternalConsistencyError("assembled Hessian is not positive semidefinite") from exc


def evaluate_objective(terms, x):
    """Physical objective value straight from the least-squares terms."""
    return sum(wt * float(np.sum((L @ x - v) ** 2)) for L, v, wt in terms.values() if wt)


def dispatch(ct_first, U, half_rho_area):
    """Power commands from the first horizon step: ``0.5 rho A ct U**3``."""
    ct_first = np.asarray(ct_first, dtype=float)
    U = np.asarray(U, dtype=float)
    return half_rho_area * ct_first * U ** 3


@dataclass
class HorizonSolution:
    ct: np.ndarray          # N x M commands
    F: np.ndarray           # N x M predicted forces
    P: np.ndarray           # N x M predicted powers
    p_star: np.ndarray      # N dispatched powers (W)
    objective: float        # physical units
    qp: object              # QpSolution
    predicted_next: np.ndarray  # X(t0+1), kept for the next correction


class MpcController:
    """Stateful receding-horizon controller.

    Holds the last applied commands, the previous one-step prediction used
    by the correction term, the previous solution for warm starting, and a
    :class:`QpSolver` whose factorization is reused when possible.
    """

    def __init__(self, weights, horizon=10, dt=1.0, tau=5.0, half_rho_area=None,
                 constraints=None, mu=0.5, tol=1e-6, max_iter=4000, solver=None):
        if half_rho_area is None:
            raise InvalidParameterError("half_rho_area is required")
        self.weights = weights
        self.horizon = int(horizon)
        self.dt = dt
        self.tau = tau
        self.half_rho_area = half_rho_area
        self.constraints = constraints or ConstraintSpec()
        self.mu = mu
        self.tol = tol
        self.max_iter = max_iter
        self.solver = solver or QpSolver()
        self.prev_ct = None
        self.prev_prediction = None
        self._warm = None

    def reset(self, ct):
        self.prev_ct = np.asarray(ct, dtype=float).copy()
        self.prev_prediction = None
        self._warm = None

    def step(self, F, P, ct, U, p_ref):
        """Solve one horizon problem and return a :class:`HorizonSolution`.

        ``F, P, ct`` are the measured feedback; ``p_ref`` is a scalar or an
        ``M``-vector of farm references in W.
        """
        U = np.asarray(U, dtype=float)
        N, M = U.size, self.horizon
        if self.prev_ct is None:
            self.reset(ct)
        X0 = stack_state(F, P, ct)
        pred = build_prediction(X0, U, M, self.dt, self.tau, self.half_rho_area,
                                mu=self.mu, prev_prediction=self.prev_prediction)
        problem, meta = assemble_qp(pred, p_ref, self.weights, F, self.prev_ct,
                                    self.constraints)
        warm = self._shifted_warm_start(N, M)
        sol = self.solver.solve(problem, tol=self.tol, max_iter=self.max_iter,
                                warm_start=warm)
        x = sol.x
        if sol.status is not Status.SOLVED:
            x = self._fallback(problem, sol, N, M)
        ct_traj = x.reshape(M, N).T
        Xp = pred.predict(x).reshape(M, N, N_CH)
        p_star = dispatch(ct_traj[:, 0], U, self.half_rho_area)

        self.prev_ct = ct_traj[:, 0].copy()
        self.prev_prediction = Xp[0].ravel().copy()
        self._warm = (x.copy(), sol.duals.copy())
        return HorizonSolution(ct=ct_traj, F=Xp[:, :, 0].T, P=Xp[:, :, 1].T, p_star=p_star,
                               objective=meta.physical_objective(problem, x), qp=sol,
                               predicted_next=self.prev_prediction)

    def _shifted_warm_start(self, N, M):
        """Previous solution shifted one step, last step repeated.

        Feasible for the new constraint set because the new anchor equals the
        previous first step.
        """
        if self._warm is None:
            x = np.tile(self.prev_ct, M)
            lo, hi = self.constraints.ct_min, self.constraints.ct_max
            return np.clip(x, lo, hi), None
        x, y = self._warm
        xs = np.concatenate([x[N:], x[-N:]])
        n = N * M
        ys = np.concatenate([np.concatenate([blk[N:], blk[-N:]])
                             for blk in np.split(y, 4)]) if y.size == 4 * n else None
        return xs, ys

    def _fallback(self, problem, sol, N, M):
        """Best feasible command when the solver did not certify a solution."""
        x = sol.x
        if sol.residuals.primal <= self.tol:
            return x
        xs, _ = self._shifted_warm_start(N, M)
        return xs
