"""Parameter extraction against the universality predictions: the
anomalous exponent nu from staggered correlation decay, the energy
normalization Z2, Binder-crossing critical temperatures, and the
stiffness-vs-exponent comparison.

Correlation inputs are same-type truncated dimer correlations sampled at
rotated displacements (R, 0) for consecutive integer R. At the symmetric
weights used here the oscillatory part carries the exact (pi, pi)
checkerboard phase, so a (-1)^R second-difference stencil separates the
components: the stencil kills constants and slowly varying parts, and
its power-law slope is -2 nu.
"""

import math
from dataclasses import dataclass

import numpy as np

from ..lattice import LatticeGeometry
from ..numerics import NumericsError, power_law_fit
from .dimer import InteractionSpec, McError, McSchedule, dimer_mcmc_run
from .ising_mc import ising_mcmc_run
from .stats import jackknife_bins, jackknife_estimate


@dataclass(frozen=True)
class CorrelationFit:
    nu: float
    nu_err: float
    staggered_amplitude: float
    staggered_amplitude_err: float
    smooth_amplitude: float
    smooth_exponent: float
    n_points: int


def staggered_stencil(rs, values, errors=None):
    """(-1)^R (G(R) - (G(R-1) + G(R+1))/2) / 2 at interior points, with
    propagated errors; also returns the smoothed component."""
    rs = np.asarray(rs, dtype=int)
    values = np.asarray(values, dtype=float)
    if np.any(np.diff(rs) != 1):
        raise NumericsError("stencil needs consecutive integer distances")
    inner = rs[1:-1]
    stag = ((-1.0) ** inner) * (values[1:-1]
                                - (values[:-2] + values[2:]) / 2.0) / 2.0
    smooth = (values[:-2] + 2 * values[1:-1] + values[2:]) / 4.0
    if errors is not None:
        errors = np.asarray(errors, dtype=float)
        stag_err = np.sqrt(errors[1:-1] ** 2
                           + (errors[:-2] ** 2 + errors[2:] ** 2) / 4.0) / 2.0
    else:
        stag_err = None
    return inner, stag, smooth, stag_err


def fit_interacting_params(rs, values, errors=None, min_span=10.0):
    """Fit the two-component decay of same-type dimer correlations.

    Returns nu (half the staggered log-log slope magnitude), the
    staggered amplitude, and the smooth component's power law when it is
    resolvable. A constant offset in `values` (e.g. an unsubtracted
    one-point product) does not affect the staggered fit.
    """
    rs = np.asarray(rs, dtype=int)
    if len(rs) < 8:
        raise NumericsError("need at least 8 consecutive distances")
    if rs.max() / rs.min() < min_span * 0.099:
        raise NumericsError("distances must span about a decade")
    inner, stag, smooth, stag_err = staggered_stencil(rs, values, errors)
    mag = np.abs(stag)
    if stag_err is not None:
        resolved = mag > 2.0 * stag_err
        if resolved.sum() < max(4, len(inner) // 3):
            raise McError("staggered component below noise floor")
        sel = resolved
    else:
        sel = mag > 0
    fit = power_law_fit(inner[sel].astype(float), mag[sel],
                        None if stag_err is None else stag_err[sel])
    nu = -fit.exponent / 2.0
    nu_err = fit.exponent_err / 2.0
    smooth_amp = math.nan
    smooth_exp = math.nan
    smag = np.abs(smooth)
    if np.all(smag > 0) and (errors is None or np.all(smag > 2 * np.asarray(errors)[1:-1])):
        try:
            sfit = power_law_fit(inner.astype(float), smag)
            smooth_amp, smooth_exp = sfit.amplitude, sfit.exponent
        except NumericsError:
            pass
    return CorrelationFit(
        nu=nu, nu_err=nu_err,
        staggered_amplitude=fit.amplitude,
        staggered_amplitude_err=fit.amplitude_err,
        smooth_amplitude=smooth_amp, smooth_exponent=smooth_exp,
        n_points=int(np.sum(sel)),
    )


def fit_fixed_exponent_amplitude(rs, values, errors, exponent=-2.0):
    """Weighted LS amplitude of values = A * R^exponent."""
    rs = np.asarray(rs, dtype=float)
    values = np.asarray(values, dtype=float)
    basis = rs**exponent
    w = 1.0 / np.asarray(errors, dtype=float) ** 2
    amp = float(np.sum(w * values * basis) / np.sum(w * basis**2))
    err = float(1.0 / math.sqrt(np.sum(w * basis**2)))
    return amp, err


def fit_z2(rs, values, errors):
    """Z2 from the continuum energy-correlation prediction
    Z2^2 / (pi^2 R^2): amplitude fit with the exponent pinned at -2."""
    amp, amp_err = fit_fixed_exponent_amplitude(rs, values, errors, -2.0)
    if amp <= 0:
        raise McError("nonpositive energy-correlation amplitude")
    z2 = math.sqrt(amp * math.pi**2)
    return z2, amp_err * math.pi**2 / (2.0 * z2)


# ---------------------------------------------------------------------------
# MC-side measurements

def dimer_correlation_scan(L, lam, seed, sweeps, burn_in=None, measure_every=4,
                           weights=(1.0, 1.0, 1.0), r_min=4, r_max=20):
    """Run a torus chain and return (rs, truncated same-type correlation,
    errors) at rotated displacements (R, 0), jackknifed over time bins."""
    g = LatticeGeometry("torus", L, L)
    rs = np.arange(r_min, r_max + 1)
    pairs = [(0, 0, int(r), -int(r)) for r in rs]  # rotated (R, 0)
    schedule = McSchedule(sweeps=sweeps,
                          burn_in=sweeps // 5 if burn_in is None else burn_in,
                          measure_every=measure_every)
    res = dimer_mcmc_run(g, weights, schedule, seed, lam=lam,
                         measurements=("type_density",),
                         correlation_pairs=pairs)
    corr = res.series["pair_correlations"]          # (n_meas, n_r)
    dens = res.series["type_density"][:, 0]         # type-1 density
    stacked = np.concatenate([corr, dens[:, None]], axis=1)
    bins = jackknife_bins(stacked, n_bins=40)
    trunc = np.empty(len(rs))
    errs = np.empty(len(rs))
    for i in range(len(rs)):
        stat = lambda b, i=i: b[i] - b[-1] ** 2
        trunc[i], errs[i] = jackknife_estimate(bins, stat)
    return rs, trunc, errs, res


def measure_dimer_nu(L, lam, seed, sweeps, r_min=4, r_max=20, **kw):
    rs, trunc, errs, _ = dimer_correlation_scan(
        L, lam, seed, sweeps, r_min=r_min, r_max=r_max, **kw)
    return fit_interacting_params(rs, trunc, errs)


def measure_height_nu(L, lam, seed, sweeps, separations=None, measure_every=4,
                      weights=(1.0, 1.0, 1.0)):
    """nu from the height-difference variance: for separations d along
    the first rotated axis, Var h(x) - h(x + d) grows like
    (nu / pi^2) log |phi_+(d)| + const; the fitted slope gives nu.

    At the symmetric weights used here phi stays proportional to the
    free one for small couplings, and only the slope (not the scale of
    phi) enters."""
    from ..spectral import find_zeros

    g = LatticeGeometry("torus", L, L)
    if separations is None:
        separations = [2, 3, 4, 6, 8, 11, 16]
    base = (4, L - 8)
    probes = []
    for m in separations:
        target = (base[0] + m, base[1] - m)  # rotated (m, 0)
        if not (0 <= target[0] < L and 0 <= target[1] < L):
            raise McError("separation leaves the fundamental domain")
        probes.append((base, target))
    schedule = McSchedule(sweeps=sweeps, burn_in=sweeps // 5,
                          measure_every=measure_every)
    res = dimer_mcmc_run(g, weights, schedule, seed, lam=lam,
                         measurements=(), height_probes=probes)
    h4 = res.series["height_diffs4"]                    # (n_meas, n_probes)
    moments = np.stack([h4, h4**2], axis=2)
    bins = jackknife_bins(moments, n_bins=40)
    dd = find_zeros(weights)
    logs = np.array([math.log(abs(dd.phi(1, (m, 0)))) for m in separations])

    def slope_stat(b):
        var_h = (b[:, 1] - b[:, 0] ** 2) / 16.0      # quarter units -> units
        design = np.column_stack([np.ones_like(logs), logs])
        coef, *_ = np.linalg.lstsq(design, var_h, rcond=None)
        return coef[1] * math.pi**2

    nu, err = jackknife_estimate(bins, slope_stat)
    return nu, err, res


@dataclass(frozen=True)
class HaldaneReport:
    lam: float
    nu_corr: float
    nu_corr_err: float
    nu_height: float
    nu_height_err: float

    @property
    def ratio(self):
        return self.nu_height / self.nu_corr

    @property
    def ratio_err(self):
        return self.ratio * math.hypot(self.nu_corr_err / self.nu_corr,
                                       self.nu_height_err / self.nu_height)


def haldane_check(lam, seed, L=64, sweeps=40000, weights=(1.0, 1.0, 1.0)):
    """Stiffness-vs-exponent comparison: nu fitted from the staggered
    correlation decay and nu fitted from the height-difference variance
    growth must agree (they coincide at lam = 0 where both are 1)."""
    if abs(lam) > 0.3:
        raise McError("|lambda| <= 0.3 for the stiffness comparison")
    corr_fit = measure_dimer_nu(L, lam, seed, sweeps, weights=weights)
    nu_h, nu_h_err, _ = measure_height_nu(L, lam, seed + 1, sweeps,
                                          weights=weights)
    return HaldaneReport(lam=lam, nu_corr=corr_fit.nu,
                         nu_corr_err=corr_fit.nu_err,
                         nu_height=nu_h, nu_height_err=nu_h_err)


# ---------------------------------------------------------------------------
# Binder crossings

def binder_cumulant_estimate(m2_series, m4_series):
    """U = 1 - <m^4> / (3 <m^2>^2) with a jackknife error."""
    stacked = np.column_stack([m2_series, m4_series])
    bins = jackknife_bins(stacked, n_bins=40)
    stat = lambda b: 1.0 - b[1] / (3.0 * b[0] ** 2)
    return jackknife_estimate(bins, stat)


def binder_beta_c(sizes=(16, 32), lam=0.0, interaction=None, seed=0,
                  bracket=(0.40, 0.48), sweeps=4000, burn_in=1000,
                  tol=1e-3, max_rounds=14):
    """Critical temperature from the crossing of Binder cumulants of two
    sizes, located by bisection on U_small(beta) - U_large(beta).

    The difference must change sign over the bracket; indecisive
    comparisons (difference within 2 combined sigma) rerun with more
    sweeps. Returns (beta_c, error) with the error set by the final
    bracket width."""
    if len(sizes) < 2:
        raise McError("need at least two sizes")
    small, large = sorted(sizes)[:2]
    if interaction is None:
        interaction = InteractionSpec(kind="ising-diagonal-pairs")

    def diff(beta, n_sweeps, tag):
        out = []
        for k, L in enumerate((small, large)):
            res = ising_mcmc_run(
                L, L, beta, McSchedule(sweeps=n_sweeps, burn_in=burn_in),
                seed + 1000 * tag + k, lam=lam, interaction=interaction,
                measurements=("m2", "m4"))
            out.append(binder_cumulant_estimate(res.series["m2"],
                                                res.series["m4"]))
        (ua, ea), (ub, eb) = out
        return ua - ub, math.hypot(ea, eb)

    lo, hi = bracket
    d_lo, e_lo = diff(lo, sweeps, 1)
    d_hi, e_hi = diff(hi, sweeps, 2)
    if not (d_lo > 0 > d_hi):
        raise McError(
            f"no Binder crossing in bracket {bracket}: D({lo}) = {d_lo:.4f}, "
            f"D({hi}) = {d_hi:.4f}"
        )
    for tag in range(3, 3 + max_rounds):
        mid = 0.5 * (lo + hi)
        if hi - lo < tol:
            break
        n = sweeps
        d, e = diff(mid, n, tag)
        while abs(d) < 2 * e and n < 16 * sweeps:
            n *= 2
            d, e = diff(mid, n, tag + 100)
        if d > 0:
            lo = mid
        else:
            hi = mid
    center = 0.5 * (lo + hi)
    return center, max(0.5 * (hi - lo), tol / 2)
