"""Small damped least-squares core used by the efficiency fits.

The problems solved here have one to three smooth parameters, so a compact
Levenberg-style iteration with analytic Jacobians is deterministic, easy to
audit, and has no library-version sensitivity.  Bounds are enforced by
projecting trial steps onto the box.
"""

from __future__ import annotations

from typing import Callable, NamedTuple, Sequence

import numpy as np

from .errors import FitError

MAX_ITERATIONS = 500
STEP_TOLERANCE = 1e-10  # relative parameter step below which we declare convergence


class LeastSquaresResult(NamedTuple):
    params: np.ndarray
    cost: float  # 0.5 * sum of squared residuals
    iterations: int
    converged: bool
    jacobian: np.ndarray  # evaluated at the solution


def levenberg_least_squares(
    residuals: Callable[[np.ndarray], np.ndarray],
    jacobian: Callable[[np.ndarray], np.ndarray],
    x0: Sequence[float],
    bounds: Sequence[tuple[float, float]] | None = None,
    max_iterations: int = MAX_ITERATIONS,
    step_tolerance: float = STEP_TOLERANCE,
) -> LeastSquaresResult:
    """Minimise ``0.5*||residuals(x)||^2`` from ``x0`` inside optional box bounds.

    Raises FitError if the iteration exhausts ``max_iterations`` without the
    relative step falling below ``step_tolerance``; the exception carries the
    best-so-far parameters for diagnostics.
    """
    x = np.asarray(x0, dtype=float).copy()
    if bounds is not None:
        lo = np.array([b[0] for b in bounds], dtype=float)
        hi = np.array([b[1] for b in bounds], dtype=float)
        if np.any(lo > hi):
            raise FitError("lower bound exceeds upper bound")
        x = np.clip(x, lo, hi)
    else:
        lo = hi = None

    r = np.asarray(residuals(x), dtype=float)
    if not np.all(np.isfinite(r)):
        raise FitError("residuals are not finite at the starting point")
    cost = 0.5 * float(r @ r)
    lam = 1e-3
    n_iter = 0

    for n_iter in range(1, max_iterations + 1):
        jac = np.atleast_2d(np.asarray(jacobian(x), dtype=float))
        jtj = jac.T @ jac
        jtr = jac.T @ r
        # Levenberg damping scaled by the diagonal keeps the step well posed
        # even when one parameter barely influences the residuals.
        diag = np.diag(jtj).copy()
        diag[diag <= 0] = 1.0

        accepted = False
        for _ in range(40):
            try:
                step = np.linalg.solve(jtj + lam * np.diag(diag), -jtr)
            except np.linalg.LinAlgError:
                lam *= 10.0
                continue
            trial = x + step
            if lo is not None:
                trial = np.clip(trial, lo, hi)
            r_trial = np.asarray(residuals(trial), dtype=float)
            if np.all(np.isfinite(r_trial)):
                cost_trial = 0.5 * float(r_trial @ r_trial)
                if cost_trial <= cost:
                    rel_step = _relative_step(trial - x, x)
                    x, r, cost = trial, r_trial, cost_trial
                    lam = max(lam / 3.0, 1e-12)
                    accepted = True
                    if rel_step < step_tolerance:
                        return LeastSquaresResult(x, cost, n_iter, True, jac)
                    break
            lam *= 10.0
        if not accepted:
            # Damping grew until the step collapsed: we are at a (possibly
            # constrained) stationary point.
            return LeastSquaresResult(x, cost, n_iter, True, jac)

    raise FitError(
        f"least-squares iteration did not converge in {max_iterations} steps",
        iterations=max_iterations,
        best_params=x,
        best_cost=cost,
    )


def _relative_step(step: np.ndarray, x: np.ndarray) -> float:
    scale = np.maximum(np.abs(x), 1e-12)
    return float(np.max(np.abs(step) / scale))
