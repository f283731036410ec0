"""Shared numerical kernels: Pfaffians, log-domain determinants,
conditionally convergent image sums, 2D Newton refinement, power-law fits.

All kernels are pure functions of their inputs and safe to call from
parallel workers.
"""

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg

ANTISYMMETRY_TOL = 1e-10
PIVOT_THRESHOLD = 1e-13


class NumericsError(Exception):
    pass


class ConvergenceError(NumericsError):
    """An iterative kernel failed to meet its tolerance."""


def _as_skew_array(a, tol=ANTISYMMETRY_TOL):
    m = np.asarray(getattr(a, "array", a), dtype=complex)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise NumericsError(f"matrix must be square, got shape {m.shape}")
    scale = max(1.0, np.abs(m).max()) if m.size else 1.0
    dev = np.abs(m + m.T).max() if m.size else 0.0
    if dev > tol * scale:
        raise NumericsError(f"antisymmetry violated: |A + A^T| = {dev:.3e}")
    return m


class SkewMatrix:
    """Complex antisymmetric matrix; antisymmetry enforced on construction."""

    def __init__(self, array):
        self.array = _as_skew_array(array)

    @property
    def dim(self):
        return self.array.shape[0]

    def pfaffian(self):
        return pfaffian(self.array, _checked=True)


def pfaffian(a, _checked=False):
    """Pfaffian of a complex antisymmetric matrix.

    Parlett-Reid style skew tridiagonalization with partial pivoting:
    Pf equals the product of super-diagonal pivots times the sign of the
    accumulated row/column swaps. Odd dimension raises; a structurally
    singular matrix (all candidate pivots below threshold) gives 0.
    """
    m = a if _checked else _as_skew_array(a)
    n = m.shape[0]
    if n % 2 != 0:
        raise NumericsError("Pfaffian requires even dimension")
    if n == 0:
        return complex(1.0)
    m = m.copy()
    scale = max(1.0, np.abs(m).max())
    val = complex(1.0)
    for k in range(0, n - 2, 2):
        col = np.abs(m[k + 1:, k])
        kp = k + 1 + int(np.argmax(col))
        if np.abs(m[kp, k]) <= PIVOT_THRESHOLD * scale:
            return complex(0.0)
        if kp != k + 1:
            m[[k + 1, kp], :] = m[[kp, k + 1], :]
            m[:, [k + 1, kp]] = m[:, [kp, k + 1]]
            val = -val
        pivot = m[k + 1, k]
        val *= -pivot  # Pf of [[0, a], [-a, 0]] block is a = m[k, k+1]
        tau = m[k + 2:, k] / pivot
        w = m[k + 2:, k + 1]
        m[k + 2:, k + 2:] += np.outer(tau, w) - np.outer(w, tau)
    val *= m[n - 2, n - 1]
    return complex(val)


def complex_determinant(m):
    """Determinant of a complex square matrix as (log magnitude, phase).

    Log-domain pivoted LU; an exactly singular matrix reports -inf log
    magnitude with phase 0.
    """
    m = np.asarray(m, dtype=complex)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise NumericsError(f"matrix must be square, got shape {m.shape}")
    if m.shape[0] == 0:
        return 0.0, 0.0
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
        lu, piv = scipy.linalg.lu_factor(m, check_finite=False)
    diag = np.diagonal(lu)
    if np.any(diag == 0):
        return -np.inf, 0.0
    logmag = float(np.sum(np.log(np.abs(diag))))
    phase = float(np.sum(np.angle(diag)))
    nswaps = int(np.sum(piv != np.arange(len(piv))))
    if nswaps % 2:
        phase += np.pi
    phase = float((phase + np.pi) % (2 * np.pi) - np.pi)
    return logmag, phase


def complex_determinant_value(m):
    logmag, phase = complex_determinant(m)
    return np.exp(logmag) * np.exp(1j * phase)


@dataclass(frozen=True)
class ImageSumResult:
    value: object  # scalar or ndarray, matching the term function
    certificate: float
    shells: int

    def __float__(self):
        return float(self.value)


def lattice_image_sum(term, max_shell=64, tol=1e-8, min_shell=8):
    """Sum term(n1, n2) over n in Z^2, shell-ordered with Euler acceleration.

    term(n1, n2) -> scalar or ndarray (constant shape). Intended for
    conditionally convergent alternating sums where |term| decays like
    1/|n| or faster; plain shell sums are order-dependent, the repeated
    averaging of shell partial sums restores convergence.

    Returns ImageSumResult with certificate |S_N - S_{N-4}| of the
    accelerated estimates; raises ConvergenceError above tolerance.
    """
    center = np.asarray(term(0, 0), dtype=complex)
    partials = [center.copy()]
    total = center.copy()
    for shell in range(1, max_shell + 1):
        s = np.zeros_like(center)
        r = shell
        for n1 in range(-r, r + 1):
            s += term(n1, r) + term(n1, -r)
        for n2 in range(-r + 1, r):
            s += term(r, n2) + term(-r, n2)
        total = total + s
        partials.append(total.copy())
    if max_shell < max(min_shell, 5):
        raise NumericsError(f"need at least {max(min_shell, 5)} shells")
    est = _euler_estimate(partials)
    est_prev = _euler_estimate(partials[:-4])
    certificate = float(np.abs(est - est_prev).max())
    if certificate > tol:
        raise ConvergenceError(
            f"image sum certificate {certificate:.3e} above tol {tol:.1e} "
            f"at {max_shell} shells"
        )
    value = est
    if value.ndim == 0:
        value = complex(value)
        if abs(value.imag) < 1e-14 * max(1.0, abs(value.real)):
            value = value.real
    return ImageSumResult(value=value, certificate=certificate, shells=max_shell)


def _euler_estimate(partials):
    """Repeated pairwise averaging of partial sums (Euler transform)."""
    row = list(partials)
    depth = min(len(row) - 1, len(row) // 2)
    for _ in range(depth):
        row = [(row[i] + row[i + 1]) / 2 for i in range(len(row) - 1)]
    return row[-1]


@dataclass(frozen=True)
class PowerLawFit:
    exponent: float
    amplitude: float
    exponent_err: float
    amplitude_err: float
    residual: float
    n_points: int


def power_law_fit(r, y, yerr=None):
    """Weighted least squares fit of y = amplitude * r**exponent on log-log.

    yerr, when given, are propagated to log-space weights and to the
    parameter errors. Exactly two points interpolate with infinite error
    bars. Nonpositive y or r raises.
    """
    r = np.asarray(r, dtype=float)
    y = np.asarray(y, dtype=float)
    if r.ndim != 1 or r.shape != y.shape:
        raise NumericsError("r and y must be 1d arrays of equal length")
    if len(r) < 2:
        raise NumericsError("need at least 2 points")
    if np.any(y <= 0) or np.any(r <= 0):
        raise NumericsError("power_law_fit requires positive r and y")
    lx = np.log(r)
    ly = np.log(y)
    if yerr is not None:
        yerr = np.asarray(yerr, dtype=float)
        if np.any(yerr <= 0):
            raise NumericsError("yerr must be positive")
        w = (y / yerr) ** 2  # sigma_log = yerr / y
    else:
        w = np.ones_like(ly)
    design = np.column_stack([np.ones_like(lx), lx])
    wd = design * w[:, None]
    ata = design.T @ wd
    if np.linalg.matrix_rank(ata) < 2:
        raise NumericsError("rank-deficient fit (all r equal?)")
    atb = wd.T @ ly
    coef = np.linalg.solve(ata, atb)
    resid = ly - design @ coef
    dof = len(r) - 2
    cov = np.linalg.inv(ata)
    if yerr is None:
        # scale covariance by reduced chi^2 of the unweighted fit
        s2 = float(resid @ resid) / dof if dof > 0 else np.inf
        cov = cov * s2
    if dof == 0:
        errs = np.array([np.inf, np.inf])
    else:
        errs = np.sqrt(np.diag(cov))
    chi2 = float((w * resid**2).sum())
    return PowerLawFit(
        exponent=float(coef[1]),
        amplitude=float(np.exp(coef[0])),
        exponent_err=float(errs[1]),
        amplitude_err=float(np.exp(coef[0]) * errs[0]),
        residual=chi2,
        n_points=len(r),
    )


def newton_refine_2d(f, jac, x0, tol=1e-12, max_iter=50):
    """Newton iteration for a C->C (viewed as R^2->R^2) or R^2->R^2 map.

    f(x) -> complex, jac(x) -> (df/dx1, df/dx2) complex. Treats the
    complex value as two real equations. Raises ConvergenceError.
    """
    x = np.array(x0, dtype=float)
    for _ in range(max_iter):
        v = f(x)
        if abs(v) < tol:
            return x
        d1, d2 = jac(x)
        j = np.array([[d1.real, d2.real], [d1.imag, d2.imag]])
        rhs = np.array([v.real, v.imag])
        try:
            step = np.linalg.solve(j, rhs)
        except np.linalg.LinAlgError as exc:
            raise ConvergenceError("singular Jacobian in Newton step") from exc
        x = x - step
    if abs(f(x)) < tol:
        return x
    raise ConvergenceError(f"Newton did not reach |f| < {tol:g} in {max_iter} steps")
