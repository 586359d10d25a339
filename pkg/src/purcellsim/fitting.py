"""Weighted least-squares fits for decay curves and lineshapes.

All fits run in normalized internal coordinates (abscissa scaled to
order one, ordinate standardized) with analytic Jacobians, then map
parameters and their standard errors back to physical units. Standard
errors come from the pseudo-inverse of J^T J scaled by the residual
variance; rank-deficient solutions (a constant histogram fitted by an
exponential, say) are flagged as non-converged instead of reporting
meaningless uncertainties.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import least_squares

from .errors import UndefinedEstimateError, ValidationError

XTOL = 1e-10
FTOL = 1e-10
GTOL = 1e-12
MAX_NFEV = 500
FOUR_LN2 = 4.0 * math.log(2.0)


@dataclass(frozen=True)
class FitResult:
    """Fitted parameters in physical units.

    residual_norm is the Euclidean norm of the (weighted) residuals in
    the fit's working frame; converged is False when the optimizer
    failed, the Jacobian lost rank, or the key parameter is not
    resolved by the data.
    """

    model: str
    params: dict[str, float]
    stderr: dict[str, float]
    converged: bool
    residual_norm: float
    n_points: int

    def __getitem__(self, name: str) -> float:
        return self.params[name]


def evaluate(fit: FitResult, x) -> np.ndarray:
    """Evaluate a fitted model on new abscissa values."""
    x = np.asarray(x, dtype=float)
    p = fit.params
    if fit.model == "exponential":
        return p["amplitude"] * np.exp(-x / p["lifetime_us"]) + p["offset"]
    if fit.model == "lorentzian":
        u = 2.0 * (x - p["center"]) / p["fwhm"]
        return p["offset"] + p["amplitude"] / (1.0 + u * u)
    if fit.model == "gaussian":
        u = (x - p["center"]) / p["fwhm"]
        return p["offset"] + p["amplitude"] * np.exp(-FOUR_LN2 * u * u)
    raise ValidationError(f"unknown model {fit.model!r}")


def _validated(x, y, sigma, n_min: int):
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    if x.size != y.size:
        raise ValidationError("x and y must have equal length")
    if x.size < n_min:
        raise UndefinedEstimateError(f"need at least {n_min} points, got {x.size}")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise ValidationError("x and y must be finite")
    if sigma is not None:
        sigma = np.asarray(sigma, dtype=float).ravel()
        if sigma.size != y.size:
            raise ValidationError("sigma must match y in length")
        if np.any(sigma <= 0):
            raise ValidationError("sigma values must be positive")
    return x, y, sigma


def _stderr_from_jac(jac: np.ndarray, resid: np.ndarray, n_params: int):
    """Parameter standard errors in the working frame, plus a rank flag."""
    dof = resid.size - n_params
    _, svals, vt = np.linalg.svd(jac, full_matrices=False)
    tol = svals.max() * 1e-10 if svals.size else 0.0
    rank_ok = int((svals > tol).sum()) == n_params
    if dof <= 0 or not rank_ok:
        return np.full(n_params, np.inf), False
    s2 = float(resid @ resid) / dof
    inv = np.where(svals > tol, 1.0 / (svals * svals), 0.0)
    cov = (vt.T * inv) @ vt * s2
    return np.sqrt(np.clip(np.diag(cov), 0.0, None)), True


def _solve(residual, jacobian, x0, bounds):
    return least_squares(
        residual,
        x0,
        jac=jacobian,
        bounds=bounds,
        method="trf",
        xtol=XTOL,
        ftol=FTOL,
        gtol=GTOL,
        max_nfev=MAX_NFEV,
    )


def fit_exponential(t_us, y, sigma=None) -> FitResult:
    """Fit amplitude * exp(-t / lifetime_us) + offset.

    The amplitude refers to t = 0. Works on raw histograms (counts vs
    delay) and on derived curves like retrieved intensity vs storage
    delay; pass sigma for inverse-variance weighting.
    """
    t, y, sigma = _validated(t_us, y, sigma, 4)
    if t.max() <= t.min():
        raise ValidationError("t values must span a nonzero range")
    st = max(float(t.max()), np.finfo(float).tiny)
    my = float(y.mean())
    sy = float(y.std()) or 1.0
    ts = t / st
    ys = (y - my) / sy
    ws = sigma / sy if sigma is not None else None

    order = np.argsort(ts)
    tail = ys[order][-max(3, ts.size // 10):]
    c0 = float(tail.mean())
    head = float(np.median(ys[order][:3]))
    a0 = max(head - c0, 1e-3)
    t0 = _exp_lifetime_guess(ts[order], ys[order], c0, a0)

    def residual(p):
        a, tau, c = p
        r = a * np.exp(-ts / tau) + c - ys
        return r / ws if ws is not None else r

    def jacobian(p):
        a, tau, c = p
        e = np.exp(-ts / tau)
        cols = np.column_stack([e, a * ts / (tau * tau) * e, np.ones_like(ts)])
        return cols / ws[:, None] if ws is not None else cols

    res = _solve(residual, jacobian, [a0, t0, c0], ([0.0, 1e-6, -np.inf], np.inf))
    a, tau, c = res.x
    err, rank_ok = _stderr_from_jac(res.jac, res.fun, 3)
    lifetime = tau * st
    lifetime_err = err[1] * st
    converged = bool(
        res.success
        and rank_ok
        and np.isfinite(lifetime_err)
        and lifetime_err < abs(lifetime)
        and tau < 1e3
    )
    return FitResult(
        model="exponential",
        params={
            "amplitude": a * sy,
            "lifetime_us": lifetime,
            "offset": my + c * sy,
        },
        stderr={
            "amplitude": err[0] * sy,
            "lifetime_us": lifetime_err,
            "offset": err[2] * sy,
        },
        converged=converged,
        residual_norm=float(np.linalg.norm(res.fun)),
        n_points=int(t.size),
    )


def _exp_lifetime_guess(ts, ys, c0, a0):
    """Log-linear slope of the positive part of the shifted decay."""
    shifted = ys - c0
    mask = shifted > max(0.05 * a0, 1e-12)
    if mask.sum() >= 3:
        slope = np.polyfit(ts[mask], np.log(shifted[mask]), 1)[0]
        if slope < 0:
            return float(np.clip(-1.0 / slope, 1e-3, 1e3))
    return float(max(ts.max() / 3.0, 1e-3))


def _peak_initials(xs, ys):
    """Offset, signed amplitude, center and width guesses for a peak
    or dip sitting on a flat background."""
    o0 = float(np.median(ys))
    d = ys - o0
    ia = int(np.argmax(np.abs(d)))
    a0 = float(d[ia])
    if a0 == 0.0:
        a0 = 1e-3
    c0 = float(xs[ia])
    spacing = float(np.ptp(xs)) / max(xs.size - 1, 1)
    n_above = int((np.abs(d) >= 0.5 * abs(a0)).sum())
    w0 = max(n_above * spacing, 2.0 * spacing)
    return o0, a0, c0, w0


def _fit_peak(x, y, sigma, model: str, reference_frequency_ghz=None) -> FitResult:
    x, y, sigma = _validated(x, y, sigma, 5)
    if x.max() <= x.min():
        raise ValidationError("x values must span a nonzero range")
    mx = float(x.mean())
    sx = float(np.ptp(x)) / 2.0
    my = float(y.mean())
    sy = float(y.std()) or 1.0
    xs = (x - mx) / sx
    ys = (y - my) / sy
    ws = sigma / sy if sigma is not None else None
    o0, a0, c0, w0 = _peak_initials(xs, ys)
    lo = [-np.inf, float(xs.min()) - 2.0, 1e-4, -np.inf]
    hi = [np.inf, float(xs.max()) + 2.0, 100.0, np.inf]

    if model == "lorentzian":

        def shape(u):
            return 1.0 / (1.0 + u * u)

        def shape_cols(a, u, w, core):
            dc = a * core * core * 4.0 * u / w
            dw = a * core * core * 2.0 * u * u / w
            return dc, dw

        def u_of(xv, c, w):
            return 2.0 * (xv - c) / w

    else:

        def shape(u):
            return np.exp(-FOUR_LN2 * u * u)

        def shape_cols(a, u, w, core):
            dc = a * core * 2.0 * FOUR_LN2 * u / w
            dw = a * core * 2.0 * FOUR_LN2 * u * u / w
            return dc, dw

        def u_of(xv, c, w):
            return (xv - c) / w

    def residual(p):
        a, c, w, o = p
        r = o + a * shape(u_of(xs, c, w)) - ys
        return r / ws if ws is not None else r

    def jacobian(p):
        a, c, w, o = p
        u = u_of(xs, c, w)
        core = shape(u)
        dc, dw = shape_cols(a, u, w, core)
        cols = np.column_stack([core, dc, dw, np.ones_like(xs)])
        return cols / ws[:, None] if ws is not None else cols

    res = _solve(residual, jacobian, [a0, c0, w0, o0], (lo, hi))
    a, c, w, o = res.x
    err, rank_ok = _stderr_from_jac(res.jac, res.fun, 4)
    fwhm = abs(w) * sx
    fwhm_err = err[2] * sx
    params = {
        "amplitude": a * sy,
        "center": mx + c * sx,
        "fwhm": fwhm,
        "offset": my + o * sy,
    }
    stderr = {
        "amplitude": err[0] * sy,
        "center": err[1] * sx,
        "fwhm": fwhm_err,
        "offset": err[3] * sy,
    }
    if reference_frequency_ghz is not None:
        params["q_factor"] = reference_frequency_ghz / fwhm
        stderr["q_factor"] = reference_frequency_ghz * fwhm_err / (fwhm * fwhm)
    converged = bool(
        res.success
        and rank_ok
        and np.isfinite(fwhm_err)
        and fwhm_err < fwhm
    )
    return FitResult(
        model=model,
        params=params,
        stderr=stderr,
        converged=converged,
        residual_norm=float(np.linalg.norm(res.fun)),
        n_points=int(x.size),
    )


def fit_lorentzian(x, y, sigma=None, reference_frequency_ghz=None) -> FitResult:
    """Fit offset + amplitude / (1 + (2 (x - center) / fwhm)^2).

    Negative amplitudes describe dips (reflection spectra). When
    reference_frequency_ghz is given and x is in the same units, the
    result carries q_factor = reference / fwhm with its propagated
    error.
    """
    return _fit_peak(x, y, sigma, "lorentzian", reference_frequency_ghz)


def fit_gaussian(x, y, sigma=None) -> FitResult:
    """Fit offset + amplitude * exp(-4 ln2 (x - center)^2 / fwhm^2)."""
    return _fit_peak(x, y, sigma, "gaussian")
