"""Classical optimizers with evaluation budgets, tracing, and multi-start.

Four methods drive the variational loop: an in-repo BFGS (backtracking
Armijo line search, curvature-safeguarded inverse-Hessian update), an SPSA
with optional blocking and trust region, scipy's Powell, and the NFT
sequential optimizer that exploits the sinusoidal dependence of the cost
on each rotation angle.  Every cost evaluation — line-search probes and
NFT probes included — lands in the run's trace.

`multistart` runs K independent seeded starts of the same problem and
keeps the run with the smallest observed estimated cost.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.optimize

from .sim import NOISELESS, NoiseParams, derive_seed
from .vqls import DEFAULT_EPSILON, EvalRecord, TracedObjective

__all__ = [
    "METHODS",
    "OptimizerConfig",
    "RunResult",
    "RunRecord",
    "MultistartResult",
    "minimize",
    "initial_points",
    "multistart",
    "run_start",
]

METHODS = ("bfgs", "spsa", "powell", "nft")

_TAG_INIT = 401
_TAG_RUN = 402
_TAG_METHOD = 403

_CALIBRATION_EVALS = 10
_MAX_BACKTRACKS = 30
_ARMIJO_C1 = 1e-4
_BACKTRACK_RHO = 0.5
_CURVATURE_FLOOR = 1e-10


@dataclass(frozen=True)
class OptimizerConfig:
    """Method selection plus hyperparameters shared by all optimizers.

    ``learning_rate`` and ``perturbation`` apply to SPSA only; leaving them
    unset enables the standard power-law decay schedules, while explicit
    values are used as fixed constants (no decay).  ``reset_interval`` is
    NFT's baseline re-evaluation period.  Powell delegates its line
    minimization and direction-reset policy to scipy.
    """

    method: str = "bfgs"
    max_evals: int = 5000
    seed: int = 0
    learning_rate: float | None = None
    perturbation: float | None = None
    blocking: bool = True
    trust_region: bool = True
    spsa_tolerance: float | None = None
    reset_interval: int = 9
    gtol: float = 1e-8

    def __post_init__(self) -> None:
        object.__setattr__(self, "method", str(self.method).lower())
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}; expected one of {METHODS}")
        if self.max_evals < 1:
            raise ValueError("max_evals must be >= 1")
        if self.perturbation is not None and not self.perturbation > 0:
            raise ValueError("perturbation must be > 0")
        if self.learning_rate is not None and not self.learning_rate > 0:
            raise ValueError("learning_rate must be > 0")
        if self.reset_interval < 1:
            raise ValueError("reset_interval must be >= 1")


@dataclass(frozen=True)
class RunResult:
    """Outcome of one optimizer run.

    ``params``/``value`` are the best *observed* point (smallest estimated
    cost over the whole trace), not necessarily the final iterate.
    """

    params: np.ndarray = field(repr=False)
    value: float
    trace: tuple[EvalRecord, ...] = field(repr=False)
    reason: str
    n_evals: int
    n_iterations: int
    details: dict = field(default_factory=dict, repr=False)

    def to_document(self) -> dict:
        """Serialize to a JSON-compatible dict with the trace embedded as CSV."""
        lines = ["index,value,exact_value,fidelity,clamped"]
        for r in self.trace:
            lines.append(
                f"{r.index},{r.value:.17g},{r.exact_value:.17g},{r.fidelity:.17g},{int(r.clamped)}"
            )
        return {
            "params": [float(v) for v in self.params],
            "value": float(self.value),
            "reason": self.reason,
            "n_evals": self.n_evals,
            "n_iterations": self.n_iterations,
            "details": dict(self.details),
            "trace_csv": "\n".join(lines),
        }


class _BudgetExceeded(Exception):
    pass


class _Tracker:
    """Budget-enforcing wrapper that owns the trace and the best point.

    Objectives that keep their own trace (anything exposing ``.trace``,
    e.g. `TracedObjective`) are sliced; plain callables get synthetic
    records with NaN exact value/fidelity.
    """

    def __init__(self, fun, max_evals: int) -> None:
        self._fun = fun
        self._traced = hasattr(fun, "trace")
        self._start = len(fun.trace) if self._traced else 0
        self.max_evals = max_evals
        self.n_evals = 0
        self.best_x: np.ndarray | None = None
        self.best_y = math.inf
        self._records: list[EvalRecord] = []

    def __call__(self, x) -> float:
        if self.n_evals >= self.max_evals:
            raise _BudgetExceeded
        x = np.asarray(x, dtype=float)
        y = float(self._fun(x))
        self.n_evals += 1
        if y < self.best_y or self.best_x is None:
            self.best_y = y
            self.best_x = x.copy()
        if not self._traced:
            self._records.append(
                EvalRecord(self.n_evals - 1, y, math.nan, math.nan, False, x.copy())
            )
        return y

    def trace(self) -> tuple[EvalRecord, ...]:
        if self._traced:
            return tuple(self._fun.trace[self._start :])
        return tuple(self._records)


# ---------------------------------------------------------------------------
# BFGS
# ---------------------------------------------------------------------------


def _run_bfgs(tracker: _Tracker, grad, x0: np.ndarray, cfg: OptimizerConfig):
    x = x0.copy()
    n = x.size
    eye = np.eye(n)
    hinv = eye.copy()
    n_iter = 0
    try:
        y = tracker(x)
        g = np.asarray(grad(x), dtype=float)
        while True:
            if np.linalg.norm(g) < cfg.gtol:
                return "converged", n_iter, {}
            p = -hinv @ g
            gp = float(g @ p)
            if gp >= 0.0:  # stale curvature; fall back to steepest descent
                hinv = eye.copy()
                p = -g
                gp = -float(g @ g)
            t = 1.0
            y_new = None
            for _ in range(_MAX_BACKTRACKS):
                y_try = tracker(x + t * p)
                if y_try <= y + _ARMIJO_C1 * t * gp:
                    y_new = y_try
                    break
                t *= _BACKTRACK_RHO
            if y_new is None:
                return "line-search", n_iter, {}
            s = t * p
            x = x + s
            g_new = np.asarray(grad(x), dtype=float)
            yv = g_new - g
            sy = float(s @ yv)
            if sy > _CURVATURE_FLOOR * np.linalg.norm(s) * np.linalg.norm(yv):
                rho = 1.0 / sy
                left = eye - rho * np.outer(s, yv)
                hinv = left @ hinv @ left.T + rho * np.outer(s, s)
            y, g = y_new, g_new
            n_iter += 1
    except _BudgetExceeded:
        return "budget", n_iter, {}


# ---------------------------------------------------------------------------
# SPSA
# ---------------------------------------------------------------------------


def _run_spsa(tracker: _Tracker, x0: np.ndarray, cfg: OptimizerConfig):
    rng = np.random.default_rng(cfg.seed)
    x = x0.copy()
    n = x.size
    a0 = cfg.learning_rate
    c0 = cfg.perturbation
    decay_a = a0 is None
    decay_c = c0 is None
    if a0 is None:
        a0 = 0.2
    if c0 is None:
        c0 = 0.2

    k = 0
    tol = 0.0
    details: dict = {}
    try:
        y_cur = tracker(x)
        if cfg.blocking:
            if cfg.spsa_tolerance is not None:
                tol = cfg.spsa_tolerance
            else:
                # Estimate the standard error of one cost evaluation from
                # repeated calls at x0; the blocking tolerance is twice that.
                sample = [y_cur]
                for _ in range(_CALIBRATION_EVALS - 1):
                    sample.append(tracker(x))
                tol = 2.0 * float(np.std(sample, ddof=1))
                y_cur = float(np.mean(sample))
            details["blocking_tolerance"] = tol

        evals_per_iter = 3 if cfg.blocking else 2
        planned = max(1, (tracker.max_evals - tracker.n_evals) // evals_per_iter)
        stability = 0.1 * planned

        while True:
            ak = a0 / (k + 1 + stability) ** 0.602 if decay_a else a0
            ck = c0 / (k + 1) ** 0.101 if decay_c else c0
            delta = rng.integers(0, 2, size=n) * 2.0 - 1.0
            y_plus = tracker(x + ck * delta)
            y_minus = tracker(x - ck * delta)
            ghat = (y_plus - y_minus) / (2.0 * ck) * delta
            update = ak * ghat
            if cfg.trust_region:
                norm = float(np.linalg.norm(update))
                if norm > 1.0:
                    update = update / norm
            x_new = x - update
            if cfg.blocking:
                y_new = tracker(x_new)
                if y_new <= y_cur + tol:
                    x, y_cur = x_new, y_new
            else:
                x = x_new
            k += 1
    except _BudgetExceeded:
        return "budget", k, details


# ---------------------------------------------------------------------------
# NFT
# ---------------------------------------------------------------------------


def _parabola_step(tracker: _Tracker, x: np.ndarray, i: int, y0: float):
    """Derivative-free local step for a non-angle coordinate.

    Fits a parabola through three points; falls back to the best observed
    point when the fit is concave.  The move is capped at four probe widths.
    """
    s = x[i]
    d = max(0.25, 0.1 * abs(s))
    xp = x.copy()
    xp[i] = s + d
    y_p = tracker(xp)
    xp[i] = s - d
    y_m = tracker(xp)
    b = (y_p - y_m) / (2.0 * d)
    c = (y_p + y_m - 2.0 * y0) / (2.0 * d * d)
    if c > 1e-14:
        t = float(np.clip(-b / (2.0 * c), -4.0 * d, 4.0 * d))
        return t, y0 + b * t + c * t * t
    t, y_best = min(((-d, y_m), (0.0, y0), (d, y_p)), key=lambda p: p[1])
    return t, y_best


def _run_nft(tracker: _Tracker, x0: np.ndarray, cfg: OptimizerConfig, scale_last: bool):
    x = x0.copy()
    n = x.size
    n_sweeps = 0
    updates = 0

    # Reserve one evaluation for the final iterate: the carried baseline
    # never evaluates the updated point itself, so without this the trace
    # would end on a probe and the best-observed point could only ever be
    # a probe.
    reserved = tracker.max_evals > 1
    if reserved:
        tracker.max_evals -= 1

    def _eval_final():
        if reserved:
            tracker.max_evals += 1
        try:
            tracker(x)
        except _BudgetExceeded:
            pass

    try:
        y0 = tracker(x)
        while True:
            max_move = 0.0
            for i in range(n):
                # Fresh baseline every reset_interval updates; the carried
                # prediction drifts under shot noise otherwise.  (Counting
                # note: the re-evaluation lands *before* the probe pair of
                # the update that triggers it, so a sweep of p parameters
                # costs 2p + floor(updates/reset_interval increments) evals,
                # plus the single initial baseline.)
                if updates and updates % cfg.reset_interval == 0:
                    y0 = tracker(x)
                if scale_last and i == n - 1:
                    move, y0 = _parabola_step(tracker, x, i, y0)
                    x[i] += move
                else:
                    xp = x.copy()
                    xp[i] = x[i] + math.pi / 2
                    y_plus = tracker(xp)
                    xp[i] = x[i] - math.pi / 2
                    y_minus = tracker(xp)
                    a = 0.5 * (y_plus + y_minus)
                    b1 = y0 - a
                    b2 = 0.5 * (y_plus - y_minus)
                    move = math.atan2(-b2, -b1)  # argmin of a + b1 cos + b2 sin
                    x[i] += move
                    y0 = a - math.hypot(b1, b2)
                updates += 1
                max_move = max(max_move, abs(move))
            n_sweeps += 1
            if max_move < 1e-9:
                _eval_final()
                return "converged", n_sweeps, {"updates": updates}
    except _BudgetExceeded:
        _eval_final()
        return "budget", n_sweeps, {"updates": updates}


# ---------------------------------------------------------------------------
# Powell (scipy) and the dispatcher
# ---------------------------------------------------------------------------


def _run_powell(tracker: _Tracker, x0: np.ndarray, cfg: OptimizerConfig):
    try:
        res = scipy.optimize.minimize(
            tracker, x0, method="Powell", options={"maxfev": cfg.max_evals}
        )
    except _BudgetExceeded:
        return "budget", 0, {}
    if res.success:
        reason = "converged"
    elif "function evaluations" in str(res.message).lower():
        reason = "budget"
    else:
        reason = f"scipy: {res.message}"
    return reason, int(getattr(res, "nit", 0)), {}


def minimize(fun, grad, x0, config: OptimizerConfig) -> RunResult:
    """Run one optimizer on ``fun`` from ``x0`` under an evaluation budget.

    Parameters
    ----------
    fun : callable
        Objective.  A `TracedObjective` keeps its own trace, which the
        result slices; plain callables are traced by the wrapper.
    grad : callable or None
        Gradient callable; required by BFGS, ignored by the rest.
    x0 : array_like
        Starting point.
    config : OptimizerConfig

    Returns
    -------
    RunResult
        Best observed point, full evaluation trace, termination reason.
    """
    x0 = np.asarray(x0, dtype=float).copy()
    if x0.ndim != 1 or x0.size == 0:
        raise ValueError("x0 must be a nonempty 1-D array")
    expected = getattr(fun, "num_params", None)
    if expected is not None and x0.size != expected:
        raise ValueError(f"x0 has {x0.size} entries; objective expects {expected}")

    tracker = _Tracker(fun, config.max_evals)
    if config.method == "bfgs":
        if grad is None:
            raise ValueError("BFGS requires a gradient callable")
        reason, n_iter, details = _run_bfgs(tracker, grad, x0, config)
    elif config.method == "spsa":
        reason, n_iter, details = _run_spsa(tracker, x0, config)
    elif config.method == "nft":
        scale_last = getattr(fun, "kind", None) == "CNN"
        reason, n_iter, details = _run_nft(tracker, x0, config, scale_last)
    else:
        reason, n_iter, details = _run_powell(tracker, x0, config)

    if tracker.best_x is None:  # budget exhausted before the first evaluation
        tracker.best_x = x0
        tracker.best_y = math.nan
    return RunResult(
        params=tracker.best_x,
        value=tracker.best_y,
        trace=tracker.trace(),
        reason=reason,
        n_evals=tracker.n_evals,
        n_iterations=n_iter,
        details=details,
    )


# ---------------------------------------------------------------------------
# Multi-start
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RunRecord:
    index: int
    result: RunResult
    objective: TracedObjective = field(repr=False)


@dataclass(frozen=True)
class MultistartResult:
    runs: tuple[RunRecord, ...]

    @property
    def best_index(self) -> int:
        return min(range(len(self.runs)), key=lambda i: self.runs[i].result.value)

    @property
    def best(self) -> RunRecord:
        return self.runs[self.best_index]


def initial_points(
    num_starts: int, num_theta: int, master_seed: int, *, include_scale: bool = False
) -> np.ndarray:
    """Uniform [0, 2π) initial angles, one row per start.

    The angle block depends only on (master seed, K, p), so every cost
    function and optimizer sees the same fixed set of starting angles.
    The extra scale column (for costs that optimize a scale jointly)
    starts at zero — scale one — rather than at a random angle: the
    estimator variance of the scaled cost grows like the fourth power of
    the scale, and a large random start drowns run selection in noise.
    """
    rng = np.random.default_rng(derive_seed(master_seed, _TAG_INIT))
    pts = rng.uniform(0.0, 2.0 * math.pi, size=(num_starts, num_theta))
    if include_scale:
        pts = np.hstack([pts, np.zeros((num_starts, 1))])
    return pts


def multistart(
    problem,
    num_starts: int,
    config: OptimizerConfig,
    *,
    kind: str = "CN",
    innerp: str = "hadamard",
    shots: int | None = None,
    noise: NoiseParams = NOISELESS,
    epsilon: float = DEFAULT_EPSILON,
) -> MultistartResult:
    """Run ``num_starts`` independent seeded optimizations; keep them all.

    The best run is the one with the smallest observed estimated cost.
    ``config.seed`` is the master seed: it fixes the initial-value set and
    splits into per-run objective and method seeds, so a rerun with the
    same config is bit-identical.
    """
    if num_starts < 1:
        raise ValueError("num_starts must be >= 1")
    runs = [
        run_start(
            problem,
            i,
            num_starts,
            config,
            kind=kind,
            innerp=innerp,
            shots=shots,
            noise=noise,
            epsilon=epsilon,
        )
        for i in range(num_starts)
    ]
    return MultistartResult(tuple(runs))


def run_start(
    problem,
    index: int,
    num_starts: int,
    config: OptimizerConfig,
    *,
    kind: str = "CN",
    innerp: str = "hadamard",
    shots: int | None = None,
    noise: NoiseParams = NOISELESS,
    epsilon: float = DEFAULT_EPSILON,
) -> RunRecord:
    """One multistart run in isolation, bit-identical to its place in the batch.

    Seeds depend only on (master seed, index), never on sibling runs, so a
    sweep can execute, skip, or resume individual starts and still reproduce
    ``multistart`` exactly.
    """
    if not 0 <= index < num_starts:
        raise ValueError("index out of range")
    pts = initial_points(
        num_starts, problem.ansatz.num_params, config.seed, include_scale=(kind == "CNN")
    )
    objective = TracedObjective(
        problem,
        kind,
        innerp=innerp,
        shots=shots,
        noise=noise,
        master_seed=derive_seed(config.seed, _TAG_RUN, index),
        epsilon=epsilon,
    )
    run_cfg = replace(config, seed=derive_seed(config.seed, _TAG_METHOD, index))
    grad = objective.gradient if config.method == "bfgs" else None
    result = minimize(objective, grad, pts[index], run_cfg)
    return RunRecord(index, result, objective)
