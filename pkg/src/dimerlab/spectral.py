"""Dispersion relation, Kasteleyn matrices and torus partition functions,
inverse-Kasteleyn evaluation, free energy and surface tension for the
noninteracting dimer model.

Momentum-space conventions: with edge weights (t1, t2, t3, t4=1) the
dispersion is

    mu(k) = t1 + i t2 e^{i k1} - t3 e^{i (k1 + k2)} - i t4 e^{i k2},

with k in the rotated (diagonal-axes) coordinates of `lattice`. On an
L1 x L2 torus the Kasteleyn operator diagonalizes on the doubled grid

    k(m, n) = 2 pi ((m + a1)/L1 - (n + a2)/L2,
                    (m + a1)/L1 + (n + a2)/L2),   m < L1, n < L2,

where (a1, a2) in {0, 1/2}^2 are the sector shifts: each distinct
momentum appears exactly twice, which is why finite-torus sums carry a
1/(L1 L2) normalization and sector determinant magnitudes equal
exp(1/2 sum log|mu|).
"""

import functools
import math
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.integrate
import scipy.linalg
import scipy.optimize

from .lattice import (
    LatticeGeometry,
    all_edges,
    edge_endpoints,
    edge_wrap_flags,
    is_black,
    paper_from_site,
)
from .numerics import ConvergenceError, complex_determinant, newton_refine_2d

K_PHASE = {1: 1.0 + 0.0j, 2: 1.0j, 3: -1.0 + 0.0j, 4: -1.0j}

ZERO_GRID = 512
NEWTON_TOL = 1e-12
NEWTON_MAX_ITER = 50
GRADIENT_FLOOR = 1e-8


class SpectralError(Exception):
    pass


class ZeroCountError(SpectralError):
    """mu does not have exactly two simple zeros."""


@dataclass(frozen=True)
class EdgeWeights:
    """Dimer weights per edge type; t4 is normalized to 1."""

    t1: float
    t2: float
    t3: float

    def __post_init__(self):
        if min(self.t1, self.t2, self.t3) <= 0:
            raise SpectralError("edge weights must be positive")

    @property
    def tuple(self):
        return (self.t1, self.t2, self.t3, 1.0)

    @classmethod
    def uniform(cls):
        return cls(1.0, 1.0, 1.0)


def _wtuple(w):
    if isinstance(w, EdgeWeights):
        return w.tuple
    t = tuple(float(v) for v in w)
    if len(t) == 3:
        t = t + (1.0,)
    if len(t) != 4 or min(t) <= 0:
        raise SpectralError("weights must be 3 positive numbers (t4 = 1)")
    return t


@dataclass(frozen=True)
class MagneticField:
    """Height-tilting field; B = 0 recovers the bare weights."""

    B1: float = 0.0
    B2: float = 0.0

    def apply(self, w):
        t1, t2, t3, _ = _wtuple(w)
        return EdgeWeights(
            t1 * math.exp(-self.B1),
            t2 * math.exp(-self.B1 - self.B2),
            t3 * math.exp(-self.B2),
        )


def dispersion_mu(k, w):
    t1, t2, t3, t4 = _wtuple(w)
    k1 = np.asarray(k[0], dtype=float)
    k2 = np.asarray(k[1], dtype=float)
    val = (t1 + 1j * t2 * np.exp(1j * k1)
           - t3 * np.exp(1j * (k1 + k2)) - 1j * t4 * np.exp(1j * k2))
    return val if val.ndim else complex(val)


def dispersion_gradient(k, w):
    t1, t2, t3, t4 = _wtuple(w)
    k1 = np.asarray(k[0], dtype=float)
    k2 = np.asarray(k[1], dtype=float)
    cross = t3 * np.exp(1j * (k1 + k2))
    d1 = -t2 * np.exp(1j * k1) - 1j * cross
    d2 = -1j * cross + t4 * np.exp(1j * k2)
    if d1.ndim:
        return d1, d2
    return complex(d1), complex(d2)


@dataclass(frozen=True)
class DispersionData:
    """The two simple zeros of mu with their gradients.

    p_plus is the zero with Im(conj(alpha) * beta) > 0, which makes
    phi_plus(x) = beta_+ x1 - alpha_+ x2 an orientation-preserving
    complex coordinate (for uniform weights phi_+(x) = (1-i)(x1+i x2)).
    """

    weights: EdgeWeights
    p_plus: tuple
    p_minus: tuple
    alpha_plus: complex
    beta_plus: complex
    alpha_minus: complex
    beta_minus: complex
    nondegenerate: bool = True

    def p(self, omega):
        return self.p_plus if omega > 0 else self.p_minus

    def alpha(self, omega):
        return self.alpha_plus if omega > 0 else self.alpha_minus

    def beta(self, omega):
        return self.beta_plus if omega > 0 else self.beta_minus

    def phi(self, omega, x):
        return self.beta(omega) * x[0] - self.alpha(omega) * x[1]

    def grad_phi(self, omega, j):
        return self.beta(omega) if j == 1 else -self.alpha(omega)


def find_zeros(w, grid=ZERO_GRID, tol=NEWTON_TOL, max_iter=NEWTON_MAX_ITER):
    """Locate the zeros of mu on the momentum torus.

    Dense |mu| scan on a grid x grid mesh, Newton refinement from every
    local minimum, then deduplication mod 2 pi. Succeeds only in the
    two-simple-zeros regime.
    """
    weights = w if isinstance(w, EdgeWeights) else EdgeWeights(*_wtuple(w)[:3])
    ks = -np.pi + 2 * np.pi * np.arange(grid) / grid
    k1g, k2g = np.meshgrid(ks, ks, indexing="ij")
    absmu = np.abs(dispersion_mu((k1g, k2g), weights))
    is_min = np.ones_like(absmu, dtype=bool)
    for d1 in (-1, 0, 1):
        for d2 in (-1, 0, 1):
            if d1 == 0 and d2 == 0:
                continue
            is_min &= absmu <= np.roll(np.roll(absmu, d1, axis=0), d2, axis=1)
    cuts = absmu <= max(4 * np.pi / grid * 4.0, 2.0 * absmu.min() + 1e-9)
    seeds = np.argwhere(is_min & cuts)
    if len(seeds) == 0 or absmu.min() > 1.0:
        raise ZeroCountError(f"no zeros found (min |mu| = {absmu.min():.3g})")

    f = lambda x: dispersion_mu((x[0], x[1]), weights)
    jac = lambda x: dispersion_gradient((x[0], x[1]), weights)
    zeros = []
    for i, j in seeds:
        try:
            z = newton_refine_2d(f, jac, (ks[i], ks[j]), tol=tol, max_iter=max_iter)
        except ConvergenceError:
            continue
        z = (z + np.pi) % (2 * np.pi) - np.pi
        if not any(_torus_close(z, p) for p in zeros):
            zeros.append(tuple(z))
    if len(zeros) != 2:
        raise ZeroCountError(
            f"expected two simple zeros, found {len(zeros)} "
            f"(weights outside the critical regime or degenerate)"
        )
    for p in zeros:
        g1, g2 = dispersion_gradient(p, weights)
        if math.hypot(abs(g1), abs(g2)) < GRADIENT_FLOOR:
            raise ZeroCountError(f"degenerate zero at {p}: |grad mu| < {GRADIENT_FLOOR}")
    psum = np.array(zeros[0]) + np.array(zeros[1])
    if not _torus_close(psum, (np.pi, np.pi), tol=1e-8):
        raise ZeroCountError(f"zeros {zeros} do not sum to (pi, pi) mod 2 pi")

    def chirality(p):
        a, b = dispersion_gradient(p, weights)
        return (np.conj(a) * b).imag

    if chirality(zeros[0]) > 0:
        pp, pm = zeros
    else:
        pm, pp = zeros
    ap, bp = dispersion_gradient(pp, weights)
    am, bm = dispersion_gradient(pm, weights)
    return DispersionData(
        weights=weights, p_plus=pp, p_minus=pm,
        alpha_plus=ap, beta_plus=bp, alpha_minus=am, beta_minus=bm,
    )


def _torus_close(a, b, tol=1e-6):
    d = np.asarray(a, dtype=float) - np.asarray(b, dtype=float)
    d = (d + np.pi) % (2 * np.pi) - np.pi
    return np.all(np.abs(d) < tol)


# ---------------------------------------------------------------------------
# Kasteleyn matrices on finite geometries

@dataclass(frozen=True)
class KasteleynSector:
    """Wrap phases: theta_j = 1/2 negates the entries of edges winding
    around direction j (anti-periodic sector)."""

    theta1: float
    theta2: float

    def __post_init__(self):
        if self.theta1 not in (0.0, 0.5) or self.theta2 not in (0.0, 0.5):
            raise SpectralError("sector shifts must be 0 or 1/2")


SECTORS = (
    KasteleynSector(0.0, 0.0),
    KasteleynSector(0.0, 0.5),
    KasteleynSector(0.5, 0.0),
    KasteleynSector(0.5, 0.5),
)

# Signs of the four sector determinants in Z = 1/2 |sum_s eps_s det K_s|,
# calibrated once against exhaustive enumeration on 4x4 .. 8x4 tori (all
# weight triples and side-parity classes give the same pattern) and frozen
# here; a regression test re-derives them.
SECTOR_SIGNS = (-1.0, 1.0, 1.0, 1.0)


@dataclass(frozen=True)
class KasteleynMatrix:
    array: np.ndarray
    blacks: tuple
    whites: tuple
    black_index: dict
    white_index: dict


def _build_kasteleyn(g, w, theta1, theta2):
    t = _wtuple(w)
    blacks = tuple(sorted(s for s in g.sites() if is_black(s)))
    whites = tuple(sorted(s for s in g.sites() if not is_black(s)))
    bi = {s: i for i, s in enumerate(blacks)}
    wi = {s: i for i, s in enumerate(whites)}
    arr = np.zeros((len(blacks), len(whites)), dtype=complex)
    for e in all_edges(g):
        b, wv = edge_endpoints(e, g)
        val = K_PHASE[e.r] * t[e.r - 1]
        f1, f2 = edge_wrap_flags(g, e)
        if theta1 == 0.5 and f1:
            val = -val
        if theta2 == 0.5 and f2:
            val = -val
        arr[bi[b.x], wi[wv.x]] = val
    return KasteleynMatrix(arr, blacks, whites, bi, wi)


def kasteleyn_matrix(g, w, sector):
    """Sector Kasteleyn matrix of a torus, rows = black sites, columns =
    white sites, both in lexicographic order."""
    if g.kind != "torus":
        raise SpectralError("kasteleyn_matrix is defined on tori")
    return _build_kasteleyn(g, w, sector.theta1, sector.theta2)


def _sector_dets(g, w):
    """(logmag, signed real unit) per sector; dets are real for tori."""
    out = []
    for s in SECTORS:
        km = _build_kasteleyn(g, w, s.theta1, s.theta2)
        logmag, phase = complex_determinant(km.array)
        # torus sector determinants are real up to rounding
        unit = math.cos(phase)
        if abs(math.sin(phase)) > 1e-8:
            raise SpectralError(f"sector determinant unexpectedly complex: phase {phase}")
        out.append((logmag, 1.0 if unit >= 0 else -1.0))
    return out


def log_torus_partition_function(g, w):
    if g.kind != "torus":
        raise SpectralError("log_torus_partition_function needs a torus")
    dets = _sector_dets(g, w)
    top = max(lm for lm, _ in dets)
    if top == -np.inf:
        raise SpectralError("all sector determinants vanish")
    acc = sum(eps * sign * math.exp(lm - top)
              for eps, (lm, sign) in zip(SECTOR_SIGNS, dets))
    return top + math.log(abs(acc) / 2.0)


def torus_partition_function(g, w):
    """Weighted number of dimer coverings of the torus.

    Combines the four sector determinants with the frozen signs; values
    beyond float range raise OverflowError (use the log form instead).
    """
    return math.exp(log_torus_partition_function(g, w))


def partition_function(g, w):
    """Weighted matching count for tori (4 determinants) or open windows
    (single determinant magnitude)."""
    if g.kind == "torus":
        return torus_partition_function(g, w)
    if g.kind == "open-window":
        km = _build_kasteleyn(g, w, 0.0, 0.0)
        logmag, _ = complex_determinant(km.array)
        return math.exp(logmag)
    raise SpectralError(f"partition function not implemented for {g.kind}")


def sector_momenta(g, sector):
    """Momentum double cover of a torus sector, arrays of shape (L1, L2)."""
    m = np.arange(g.L1)[:, None] + sector.theta1
    n = np.arange(g.L2)[None, :] + sector.theta2
    k1 = 2 * np.pi * (m / g.L1 - n / g.L2)
    k2 = 2 * np.pi * (m / g.L1 + n / g.L2)
    return k1, k2


def torus_log_abs_det_momentum(g, w, sector):
    """log |det K_sector| from the momentum product (each momentum of the
    double cover counted half)."""
    k1, k2 = sector_momenta(g, sector)
    muk = dispersion_mu((k1, k2), w)
    amin = np.abs(muk).min()
    if amin < 1e-14:
        return -np.inf
    return 0.5 * float(np.sum(np.log(np.abs(muk))))


def torus_inverse_entry(g, w, sector, dx):
    """Finite-torus inverse Kasteleyn at rotated displacement dx =
    (white index) - (black index), via the momentum double cover."""
    k1, k2 = sector_momenta(g, sector)
    muk = dispersion_mu((k1, k2), w)
    if np.abs(muk).min() < 1e-14:
        raise SpectralError(
            "mu vanishes on the momentum grid (periodic sector at critical "
            "weights); use an anti-periodic sector"
        )
    phase = np.exp(-1j * (k1 * dx[0] + k2 * dx[1]))
    return complex(np.mean(phase / muk))


def white_paper_index(s):
    """Rotated index y of a white site (the site sits at y + (1/2, 1/2))."""
    x1, x2 = paper_from_site(s)
    return (x1 - 0.5, x2 - 0.5)


# ---------------------------------------------------------------------------
# infinite-volume inverse Kasteleyn

class InfiniteKasteleynInverse:
    """Thermodynamic-limit K^{-1}(x, y) as a function of the rotated
    displacement d = x - y (x a white index, y a black index).

    Evaluated by anti-periodic momentum sums on product grids of sizes
    L, 2L, 4L (the shifted momenta avoid the zeros of mu) followed by
    two Richardson extrapolation levels in 1/L^2; the grids are realized
    as FFTs so a whole displacement window is tabulated at once.
    """

    def __init__(self, w, base_size=256):
        self.weights = w if isinstance(w, EdgeWeights) else EdgeWeights(*_wtuple(w)[:3])
        self.base_size = int(base_size)
        self._tables = {}

    def raw_table(self, L):
        """Anti-periodic momentum sum on an L x L grid, as a function of
        displacement (indexed modulo L)."""
        if L not in self._tables:
            m = (np.arange(L) + 0.5) * (2 * np.pi / L)
            k1 = m[:, None]
            k2 = m[None, :]
            muk = dispersion_mu((k1, k2), self.weights)
            self._tables[L] = np.fft.fft2(1.0 / muk) / (L * L)
        return self._tables[L]

    def raw_value(self, L, d):
        d1, d2 = int(d[0]), int(d[1])
        tab = self.raw_table(L)
        return tab[d1 % L, d2 % L] * np.exp(-1j * np.pi * (d1 + d2) / L)

    def value(self, d):
        return complex(self.values(np.asarray([d]))[0])

    def values(self, ds):
        """Vectorized evaluation for an (n, 2) integer displacement array."""
        ds = np.asarray(ds, dtype=int)
        span = int(np.abs(ds).max()) if ds.size else 0
        L = self.base_size
        while L < 2 * span + 64:
            L *= 2
        tiers = []
        for size in (L, 2 * L, 4 * L):
            tab = self.raw_table(size)
            vals = tab[ds[:, 0] % size, ds[:, 1] % size]
            vals = vals * np.exp(-1j * np.pi * (ds[:, 0] + ds[:, 1]) / size)
            tiers.append(vals)
        r1 = (4.0 * tiers[1] - tiers[0]) / 3.0
        r2 = (4.0 * tiers[2] - tiers[1]) / 3.0
        return (16.0 * r2 - r1) / 15.0


@functools.lru_cache(maxsize=200_000)
def _kinv_pointwise_cached(wkey, d1, d2):
    t1, t2, t3, t4 = wkey

    def inner(k1):
        a = t1 + 1j * t2 * np.exp(1j * k1)
        b = -t3 * np.exp(1j * k1) - 1j * t4
        if abs(a) > abs(b):
            return (1.0 / a) * (-b / a) ** d2 if d2 >= 0 else 0.0
        return (1.0 / b) * (-a / b) ** (-d2 - 1) if d2 <= -1 else 0.0

    kinks = _fermi_k1(wkey)
    args = dict(limit=400, epsabs=1e-13, epsrel=1e-13, points=kinks)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", scipy.integrate.IntegrationWarning)
        re, re_err = scipy.integrate.quad(
            lambda k1: (np.exp(-1j * k1 * d1) * inner(k1)).real,
            -np.pi, np.pi, **args)
        im, im_err = scipy.integrate.quad(
            lambda k1: (np.exp(-1j * k1 * d1) * inner(k1)).imag,
            -np.pi, np.pi, **args)
    if re_err + im_err > 1e-8:
        raise ConvergenceError(f"K^-1 quadrature error {re_err + im_err:.2e}")
    return complex(re, im) / (2 * np.pi)


@functools.lru_cache(maxsize=128)
def _fermi_k1(wkey):
    """k1 coordinates of the Fermi points: kinks of the fiber-reduced
    integrand. Empty in the gapped (no-zeros) regime."""
    try:
        dd = find_zeros(EdgeWeights(*wkey[:3]))
    except ZeroCountError:
        return ()
    return tuple(sorted({float(dd.p_plus[0]), float(dd.p_minus[0])}))


def inverse_kasteleyn_exact(w, d):
    """Thermodynamic-limit K^{-1} at rotated displacement d, by exact
    fiber reduction: the k2 integral is a geometric series (pole inside
    or outside the unit circle, whichever applies fiberwise), and the
    remaining bounded 1D integrand is quadratured adaptively with its
    kinks at the Fermi k1 values supplied. Accurate to ~1e-12 for any
    weights; the momentum-sum route above is kept for fast vectorized
    tables but its extrapolation is only reliable when the Fermi points
    stay away from the anti-periodic grid (e.g. uniform weights).
    """
    return _kinv_pointwise_cached(_wtuple(w), int(d[0]), int(d[1]))


def inverse_kasteleyn(w, x, y, geometry=None, sector=None):
    """K^{-1}(x, y) for rotated indices x (white) and y (black).

    With a torus geometry the finite-volume value is returned (default
    sector fully anti-periodic); without one, the thermodynamic-limit
    value.
    """
    d = (x[0] - y[0], x[1] - y[1])
    if geometry is None:
        return inverse_kasteleyn_exact(w, d)
    if geometry.kind != "torus":
        raise SpectralError("finite-volume inverse needs a torus")
    if sector is None:
        sector = KasteleynSector(0.5, 0.5)
    return torus_inverse_entry(geometry, w, sector, d)


# ---------------------------------------------------------------------------
# free energy and surface tension

FIELD_BOUND = 30.0


def _fiber_logs(w):
    """log|A(k1)|, log|B(k1)| with mu = A(k1) + B(k1) e^{i k2}."""
    t1, t2, t3, t4 = _wtuple(w)

    def logs(k1):
        a = t1 + 1j * t2 * np.exp(1j * k1)
        b = -t3 * np.exp(1j * k1) - 1j * t4
        return np.log(np.abs(a)), np.log(np.abs(b))

    return logs


def free_energy_density(w, field=None):
    """F = (2 pi)^{-2} integral of log|mu_B| over the momentum torus.

    The k2 integral is performed exactly (the mean of log|A + B e^{i k2}|
    is max(log|A|, log|B|)), leaving a 1D adaptive quadrature with kinks
    at the fiber crossings |A| = |B|.
    """
    weights = field.apply(w) if field is not None else w
    logs = _fiber_logs(weights)

    def integrand(k1):
        la, lb = logs(k1)
        return np.maximum(la, lb)

    grid = np.linspace(-np.pi, np.pi, 2049)
    la, lb = logs(grid)
    h = la - lb
    kinks = []
    for i in range(len(grid) - 1):
        if h[i] == 0.0:
            kinks.append(grid[i])
        elif h[i] * h[i + 1] < 0:
            kinks.append(scipy.optimize.brentq(
                lambda k: float(np.subtract(*logs(k))), grid[i], grid[i + 1]
            ))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", scipy.integrate.IntegrationWarning)
        val, err = scipy.integrate.quad(
            integrand, -np.pi, np.pi,
            points=sorted(kinks) if kinks else None,
            limit=200, epsabs=1e-12, epsrel=1e-12,
        )
    if err > 1e-7:
        raise ConvergenceError(f"free-energy quadrature error {err:.2e}")
    return val / (2 * np.pi)


def free_energy_gradient(w, field=None, step=1e-4):
    b1 = field.B1 if field is not None else 0.0
    b2 = field.B2 if field is not None else 0.0
    f = lambda x, y: free_energy_density(w, MagneticField(x, y))
    d1 = (f(b1 + step, b2) - f(b1 - step, b2)) / (2 * step)
    d2 = (f(b1, b2 + step) - f(b1, b2 - step)) / (2 * step)
    return d1, d2


def surface_tension(s, w):
    """sup_B [s . B - (B1 + B2)/2 - F(B)]; +inf outside the admissible
    slope region (the linear term then dominates at large |B|).

    The objective is concave, so a bounded quasi-Newton ascent from
    B = 0 suffices; an optimum pinned to the box boundary signals an
    unbounded supremum."""
    s = (float(s[0]), float(s[1]))

    def neg_objective(b):
        return -(s[0] * b[0] + s[1] * b[1] - (b[0] + b[1]) / 2.0
                 - free_energy_density(w, MagneticField(b[0], b[1])))

    res = scipy.optimize.minimize(
        neg_objective, x0=np.zeros(2), method="L-BFGS-B",
        bounds=[(-FIELD_BOUND, FIELD_BOUND)] * 2,
        options={"ftol": 1e-13, "gtol": 1e-9, "maxiter": 300},
    )
    if np.abs(res.x).max() >= FIELD_BOUND - 1e-6:
        return math.inf
    if not res.success:
        raise ConvergenceError(f"surface tension optimizer: {res.message}")
    return -float(res.fun)


def minimizing_slope(w):
    """argmin of the surface tension: rho = grad F(0) + (1/2, 1/2)."""
    d1, d2 = free_energy_gradient(w)
    return (d1 + 0.5, d2 + 0.5)
