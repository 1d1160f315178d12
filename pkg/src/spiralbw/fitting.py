"""Derivative-free least squares: a Nelder-Mead engine and the two fit models."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import DomainError


@dataclass
class FitResult:
    params: dict[str, float]
    residual_sum_squares: float
    converged: bool
    iterations: int
    param_errors: dict[str, float] | None = None
    flags: tuple[str, ...] = ()
    x: np.ndarray | None = field(default=None, repr=False)

    def __getitem__(self, name):
        return self.params[name]

    def to_dict(self) -> dict:
        out = {
            "params": dict(self.params),
            "residual_sum_squares": self.residual_sum_squares,
            "converged": self.converged,
            "iterations": self.iterations,
            "flags": list(self.flags),
        }
        if self.param_errors is not None:
            out["param_errors"] = dict(self.param_errors)
        return out


def minimize(
    objective,
    x0,
    tolerance: float = 1e-10,
    max_iterations: int = 10000,
    *,
    initial_step=None,
    restarts: int = 1,
    names=None,
) -> FitResult:
    """Nelder-Mead simplex minimization.

    Stops when the simplex diameter drops below ``tolerance`` or every vertex
    has the same objective value. After convergence the search is restarted
    ``restarts`` times from the best point with a fresh simplex, which guards
    against premature collapse. Deterministic for identical inputs.
    """
    x0 = np.array(x0, dtype=float, ndmin=1)
    f0 = objective(x0)
    if not math.isfinite(f0):
        raise DomainError("objective is not finite at x0")
    step = None if initial_step is None else np.broadcast_to(np.asarray(initial_step, dtype=float), x0.shape).copy()
    best, fbest, used, converged = _kernels.nelder_mead(objective, x0, f0, tolerance, max_iterations, step)
    for _ in range(restarts):
        if not converged or used >= max_iterations or (used == 1 and fbest == f0):
            break
        nxt, fnxt, more, converged = _kernels.nelder_mead(
            objective, best, fbest, tolerance, max_iterations - used, None if step is None else step * 1e-3
        )
        used += more
        if fnxt <= fbest:
            best, fbest = nxt, fnxt
    names = names or [f"x{i}" for i in range(x0.size)]
    return FitResult(
        {k: float(v) for k, v in zip(names, best)},
        float(fbest),
        bool(converged),
        int(used),
        x=np.array(best),
    )


def lorentzian(x, y0, w, a):
    """y0 + 2 a w / (pi (4 x^2 + w^2)); w is the full width at half maximum."""
    x = np.asarray(x, dtype=float)
    return y0 + 2.0 * a * w / (math.pi * (4.0 * x**2 + w**2))


def exponential_decay(t, amplitude, tau):
    return amplitude * np.exp(-np.asarray(t, dtype=float) / tau)


def _as_xy(points, minimum):
    arr = np.asarray(points, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise DomainError("points must be a sequence of (x, y) pairs")
    if arr.shape[0] < minimum:
        raise DomainError(f"need at least {minimum} points, got {arr.shape[0]}")
    return arr[:, 0], arr[:, 1]


def fit_lorentzian(points, initial_guess=None, *, tolerance=1e-10, max_iterations=10000) -> FitResult:
    """Least-squares fit of the spiral-bandwidth Lorentzian; returns y0, w, a."""
    x, y = _as_xy(points, 4)
    if np.ptp(x) == 0:
        raise DomainError("x values are all equal")
    xs = float(np.ptp(x))
    ys = float(np.ptp(y))
    if ys == 0:
        w0 = 0.5 * xs if initial_guess is None else abs(initial_guess[1])
        return FitResult({"y0": float(y[0]), "w": w0, "a": 0.0}, 0.0, True, 0, flags=("flat",))
    if initial_guess is None:
        w_est = 0.5 * xs
        initial_guess = (float(np.min(y)), w_est, ys * math.pi * w_est / 2.0)
    y0g, wg, ag = (float(v) for v in initial_guess)
    u0 = np.array([y0g / ys, wg / xs, ag / (ys * xs)])

    def sse_scaled(u):
        model = lorentzian(x, u[0] * ys, u[1] * xs, u[2] * ys * xs)
        return float(np.sum(((y - model) / ys) ** 2))

    res = minimize(sse_scaled, u0, tolerance, max_iterations, names=["y0", "w", "a"])
    y0, w, a = res.x[0] * ys, res.x[1] * xs, res.x[2] * ys * xs
    if w < 0:
        w, a = -w, -a
    return FitResult(
        {"y0": float(y0), "w": float(w), "a": float(a)},
        res.residual_sum_squares * ys**2,
        res.converged,
        res.iterations,
    )


def fit_exponential(points, *, tolerance=1e-10, max_iterations=10000) -> FitResult:
    """Fit y = A exp(-t / tau). Flags ``saturated`` when tau exceeds the sampled span."""
    t, y = _as_xy(points, 3)
    if len(np.unique(t)) != t.size:
        raise DomainError("t values must be distinct")
    if not np.any(y):
        raise DomainError("all samples are zero, so tau is not identifiable")
    t_span = float(np.ptp(t)) or 1.0
    flags = []
    if np.all(y > 0):
        slope, intercept = np.polyfit(t, np.log(y), 1)
        a0, k0 = math.exp(intercept), -slope
    else:
        flags.append("direct_init")
        a0, k0 = float(y[np.argmin(t)]) or 1.0, 1.0 / t_span
    y_scale = float(np.max(np.abs(y))) or 1.0
    a_scale = abs(a0) or 1.0
    u0 = np.array([a0 / a_scale, k0 * t_span])

    def sse_scaled(u):
        model = u[0] * a_scale * np.exp(-u[1] * t / t_span)
        return float(np.sum(((y - model) / y_scale) ** 2))

    res = minimize(sse_scaled, u0, tolerance, max_iterations, initial_step=[0.05, 0.05])
    amplitude = res.x[0] * a_scale
    k = res.x[1] / t_span
    tau = 1.0 / k if k > 0 else math.inf
    if tau > float(np.max(t)):
        flags.append("saturated")
    return FitResult(
        {"A": float(amplitude), "tau": float(tau)},
        res.residual_sum_squares * y_scale**2,
        res.converged,
        res.iterations,
        flags=tuple(flags),
    )


def resample_errors(fit, points, replicas=200, seed=0, noise="poisson") -> dict[str, float]:
    """Standard deviations of fitted parameters over Poisson or Gaussian replicas.

    ``fit`` is fit_lorentzian or fit_exponential. Gaussian replicas use the
    residual RMS of the nominal fit as the per-point sigma.
    """
    if noise not in ("poisson", "gaussian"):
        raise DomainError(f"unknown noise model {noise!r}")
    x, y = _as_xy(points, 1)
    nominal = fit(points)
    draws = []
    if noise == "gaussian":
        names = list(nominal.params)
        model = _model_for(nominal, x)
        sigma = math.sqrt(nominal.residual_sum_squares / max(len(x) - len(names), 1))
    for rep in range(replicas):
        if noise == "poisson":
            yy = _kernels.poisson_sample(np.clip(y, 0, None), seed, rep).astype(float)
        else:
            rng = np.random.default_rng([seed, rep])
            yy = model + sigma * rng.standard_normal(len(x))
        res = fit(np.column_stack([x, yy]))
        if res.converged:
            draws.append([res.params[k] for k in nominal.params])
    draws = np.asarray(draws)
    return {k: float(np.std(draws[:, i], ddof=1)) for i, k in enumerate(nominal.params)}


def _model_for(result, x):
    p = result.params
    if "tau" in p:
        return exponential_decay(x, p["A"], p["tau"])
    return lorentzian(x, p["y0"], p["w"], p["a"])
