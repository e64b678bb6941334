"""Gaussian-plus-offset peak fit by damped least squares (Levenberg-Marquardt)."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = ["FitError", "GaussianFit", "gaussian", "fit_gaussian"]

PARAMS = ("amplitude", "center", "width", "offset")


class FitError(RuntimeError):
    pass


def gaussian(z, amplitude, center, width, offset):
    z = np.asarray(z, dtype=float)
    return amplitude * np.exp(-((z - center) ** 2) / (2 * width**2)) + offset


@dataclass(frozen=True)
class GaussianFit:
    amplitude: float
    center: float
    width: float
    offset: float
    residual: float
    stderr: dict = field(default_factory=dict)
    iterations: int = 0
    flat: bool = False

    def params(self) -> tuple[float, float, float, float]:
        return (self.amplitude, self.center, self.width, self.offset)

    def peak_significant(self, nsigma: float = 3.0) -> bool:
        err = self.stderr.get("amplitude", math.inf)
        return not self.flat and abs(self.amplitude) > nsigma * err


def _jacobian(z, p):
    a, c, w, _ = p
    e = np.exp(-((z - c) ** 2) / (2 * w**2))
    return np.column_stack([e, a * e * (z - c) / w**2, a * e * (z - c) ** 2 / w**3, np.ones_like(z)])


def _initial_guess(z, y):
    order = np.argsort(z)
    z, y = z[order], y[order]
    offset = float(np.median(np.concatenate([y[: max(1, len(y) // 4)], y[-max(1, len(y) // 4):]])))
    k = int(np.argmax(y))
    amp = float(y[k] - offset)
    above = z[y - offset > 0.5 * amp] if amp > 0 else z
    width = max((above.max() - above.min()) / 2.355, float(np.min(np.diff(z))) if len(z) > 1 else 1.0)
    return np.array([amp, float(z[k]), width, offset])


def fit_gaussian(z, y, sigma=None, *, fixed: dict | None = None, p0=None,
                 max_iter: int = 200, xtol: float = 1e-8) -> GaussianFit:
    """Fit ``A exp(-(z-c)^2 / 2w^2) + B`` to the points ``(z, y)``.

    ``sigma`` gives absolute per-point uncertainties; without it the
    parameter errors are scaled by the reduced chi-square. ``fixed`` pins
    any of ``amplitude/center/width/offset`` to a value. Iteration stops when
    the accepted step is below ``xtol`` relative to the parameters, and
    raises :class:`FitError` after ``max_iter`` iterations otherwise.

    Data that is flat to machine precision gets ``amplitude=0`` and
    ``flat=True`` instead of a fit.
    """
    z = np.asarray(z, dtype=float)
    y = np.asarray(y, dtype=float)
    if z.shape != y.shape or z.ndim != 1:
        raise ValueError("z and y must be 1-d arrays of equal length")
    if len(z) < 5:
        raise ValueError("need at least 5 points for a Gaussian fit")
    weights = np.ones_like(y) if sigma is None else 1.0 / np.asarray(sigma, dtype=float)
    fixed = dict(fixed or {})
    unknown = set(fixed) - set(PARAMS)
    if unknown:
        raise ValueError(f"unknown fixed parameters {sorted(unknown)}")

    scale = max(1.0, float(np.max(np.abs(y))))
    if np.ptp(y) <= 1e-12 * scale:
        b = float(np.mean(y))
        return GaussianFit(0.0, fixed.get("center", float(np.mean(z))),
                           fixed.get("width", float(np.ptp(z)) or 1.0),
                           b, float(np.linalg.norm((y - b) * weights)), flat=True)

    p = _initial_guess(z, y) if p0 is None else np.asarray(p0, dtype=float).copy()
    for name, value in fixed.items():
        p[PARAMS.index(name)] = value
    free = [i for i, name in enumerate(PARAMS) if name not in fixed]

    def residuals(params):
        return (gaussian(z, *params) - y) * weights

    r = residuals(p)
    cost = float(r @ r)
    lam = 1e-3
    for it in range(1, max_iter + 1):
        jac = _jacobian(z, p)[:, free] * weights[:, None]
        jtj = jac.T @ jac
        grad = jac.T @ r
        while True:
            a = jtj + lam * np.diag(np.maximum(np.diag(jtj), 1e-300))
            try:
                step = -np.linalg.solve(a, grad)
            except np.linalg.LinAlgError:
                step = -np.linalg.lstsq(a, grad, rcond=None)[0]
            trial = p.copy()
            trial[free] += step
            r_trial = residuals(trial)
            cost_trial = float(r_trial @ r_trial)
            if cost_trial <= cost:
                break
            lam *= 10
            if lam > 1e16:
                step = np.zeros_like(step)
                trial, r_trial, cost_trial = p, r, cost
                break
        p, r, cost = trial, r_trial, cost_trial
        lam = max(lam / 10, 1e-12)
        if np.linalg.norm(step) <= xtol * (np.linalg.norm(p[free]) + xtol):
            break
    else:
        raise FitError(f"Gaussian fit did not converge in {max_iter} iterations")

    p[2] = abs(p[2])
    jac = _jacobian(z, p)[:, free] * weights[:, None]
    cov = np.linalg.pinv(jac.T @ jac)
    if sigma is None:
        dof = max(1, len(z) - len(free))
        cov = cov * cost / dof
    stderr = {PARAMS[i]: float(math.sqrt(max(cov[k, k], 0.0))) for k, i in enumerate(free)}
    stderr.update({name: 0.0 for name in fixed})
    return GaussianFit(*(float(x) for x in p), residual=math.sqrt(cost), stderr=stderr, iterations=it)
