"""Exact and asymptotic dimer correlations at the free-fermion point,
plus the two-term parametric form used to fit interacting data.

Exact finite-volume correlations come from sector Kasteleyn algebra:
for edges e_i = (b_i, w_i),

    E(1_{e_1} ... 1_{e_n}) = sum_s eps_s det K_s prod_i K_s(b_i, w_i)
                             det [K_s^{-1}(w_i, b_j)]  /  sum_s eps_s det K_s

(single sector on open windows). Thermodynamic-limit formulas use the
translation-invariant kernel K^{-1}(x, y) of `spectral` in rotated
coordinates; displacements below are always dx = x(e) - x(e').
"""

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .lattice import V_PAPER, edge_endpoints, paper_x
from .numerics import complex_determinant
from .spectral import (
    SECTOR_SIGNS,
    SECTORS,
    InfiniteKasteleynInverse,
    K_PHASE,
    _build_kasteleyn,
    _wtuple,
    inverse_kasteleyn_exact,
)

MULTIPOINT_CAP = 12


class CorrelationError(Exception):
    pass


# ---------------------------------------------------------------------------
# exact finite-volume correlations

class FiniteCorrelator:
    """Cached sector LU data for exact correlations on a torus or open
    window at lambda = 0."""

    def __init__(self, g, w):
        if g.kind not in ("torus", "open-window"):
            raise CorrelationError(f"no exact solver for {g.kind} geometries")
        self.geometry = g
        self.weights = _wtuple(w)
        if g.kind == "torus":
            sectors = [(s.theta1, s.theta2) for s in SECTORS]
            self.signs = SECTOR_SIGNS
        else:
            sectors = [(0.0, 0.0)]
            self.signs = (1.0,)
        self._mats = [_build_kasteleyn(g, w, t1, t2) for t1, t2 in sectors]
        self._lus = [scipy.linalg.lu_factor(m.array) for m in self._mats]
        dets = [complex_determinant(m.array) for m in self._mats]
        top = max(lm for lm, _ in dets)
        self._scaled_dets = [
            np.exp(lm - top) * np.exp(1j * ph) for lm, ph in dets
        ]

    def expectation(self, edges):
        """E(prod_i 1_{e_i}) under the weighted dimer measure."""
        edges = list(edges)
        if len(edges) != len(set(edges)):
            raise CorrelationError("duplicate edges in multipoint expectation")
        if len(edges) > MULTIPOINT_CAP:
            raise CorrelationError(f"multipoint capped at {MULTIPOINT_CAP} edges")
        g = self.geometry
        num = 0.0 + 0.0j
        den = 0.0 + 0.0j
        pairs = []
        for e in edges:
            b, wv = edge_endpoints(e, g)
            km0 = self._mats[0]
            pairs.append((km0.black_index[b.x], km0.white_index[wv.x]))
        for sign, det, km, lu in zip(self.signs, self._scaled_dets,
                                     self._mats, self._lus):
            den += sign * det
            if not edges:
                num += sign * det
                continue
            n = len(edges)
            cols = np.zeros((km.array.shape[0], n), dtype=complex)
            for j, (bidx, _) in enumerate(pairs):
                cols[bidx, j] = 1.0
            inv_cols = scipy.linalg.lu_solve(lu, cols)  # K^{-1}[:, b_j]
            minor = np.empty((n, n), dtype=complex)
            for i, (_, widx) in enumerate(pairs):
                minor[i, :] = inv_cols[widx, :]
            prod = 1.0 + 0.0j
            for bidx, widx in pairs:
                prod *= km.array[bidx, widx]
            mdet = np.linalg.det(minor)
            num += sign * det * prod * mdet
        val = num / den
        if abs(val.imag) > 1e-9 * max(1.0, abs(val.real)):
            raise CorrelationError(f"expectation came out complex: {val}")
        return float(val.real)


# ---------------------------------------------------------------------------
# thermodynamic-limit correlations

_INV_CACHE = {}


def _infinite_inverse(w):
    key = _wtuple(w)
    if key not in _INV_CACHE:
        _INV_CACHE[key] = InfiniteKasteleynInverse(key[:3])
    return _INV_CACHE[key]


def _edge_factor(r, w):
    t = _wtuple(w)
    return K_PHASE[r] * t[r - 1]


def one_point(e, w, geometry=None):
    """Occupation probability of edge e."""
    if geometry is not None:
        return FiniteCorrelator(geometry, w).expectation([e])
    val = _edge_factor(e.r, w) * inverse_kasteleyn_exact(w, V_PAPER[e.r])
    p = val.real
    if not -1e-9 <= p <= 1 + 1e-9:
        raise CorrelationError(f"one-point {p} outside [0, 1]")
    return float(min(max(p, 0.0), 1.0))


def two_point_truncated(e, ep, w, geometry=None):
    """Truncated correlation E(1_e ; 1_e') of two distinct edges."""
    if e == ep:
        raise CorrelationError("coincident edges")
    if geometry is not None:
        fc = FiniteCorrelator(geometry, w)
        return fc.expectation([e, ep]) - fc.expectation([e]) * fc.expectation([ep])
    x = paper_x(e)
    xp = paper_x(ep)
    dx = (x[0] - xp[0], x[1] - xp[1])
    return pair_correlation_at(e.r, ep.r, dx, w)


def pair_correlation_at(r, rp, dx, w):
    """Thermodynamic-limit E(1_e ; 1_e') for types (r, r') at rotated
    displacement dx = x(e) - x(e')."""
    v_r = V_PAPER[r]
    v_rp = V_PAPER[rp]
    k1 = inverse_kasteleyn_exact(w, (dx[0] + v_r[0], dx[1] + v_r[1]))
    k2 = inverse_kasteleyn_exact(w, (v_rp[0] - dx[0], v_rp[1] - dx[1]))
    val = -_edge_factor(r, w) * _edge_factor(rp, w) * k1 * k2
    return float(val.real)


def pair_correlations_at(r, rp, dxs, w):
    """Vectorized `pair_correlation_at` over an (n, 2) displacement array."""
    inv = _infinite_inverse(w)
    dxs = np.asarray(dxs, dtype=int)
    v_r = np.asarray(V_PAPER[r])
    v_rp = np.asarray(V_PAPER[rp])
    k1 = inv.values(dxs + v_r)
    k2 = inv.values(v_rp - dxs)
    vals = -_edge_factor(r, w) * _edge_factor(rp, w) * k1 * k2
    return vals.real


def multipoint(edges, w, geometry=None):
    """E(1_{e_1} ... 1_{e_n}); determinant of the n x n inverse-Kasteleyn
    minor in the thermodynamic limit."""
    edges = list(edges)
    if len(edges) != len(set(edges)):
        raise CorrelationError("duplicate edges")
    if len(edges) > MULTIPOINT_CAP:
        raise CorrelationError(f"multipoint capped at {MULTIPOINT_CAP} edges")
    if geometry is not None:
        return FiniteCorrelator(geometry, w).expectation(edges)
    if not edges:
        return 1.0
    n = len(edges)
    xs = [paper_x(e) for e in edges]
    minor = np.empty((n, n), dtype=complex)
    for i, ei in enumerate(edges):
        v = V_PAPER[ei.r]
        for j in range(n):
            d = (xs[i][0] + v[0] - xs[j][0], xs[i][1] + v[1] - xs[j][1])
            minor[i, j] = inverse_kasteleyn_exact(w, d)
    prod = 1.0 + 0.0j
    for e in edges:
        prod *= _edge_factor(e.r, w)
    val = prod * np.linalg.det(minor)
    if abs(val.imag) > 1e-9 * max(1.0, abs(val.real)):
        raise CorrelationError(f"multipoint came out complex: {val}")
    return float(val.real)


# ---------------------------------------------------------------------------
# asymptotics

@dataclass(frozen=True)
class AsymptoticCoefficients:
    """Residue data K_{omega,r} = K_r e^{-i p_omega . v_r} at the two
    Fermi points, conjugation-linked: conj(K_{omega,r}) = K_{-omega,r}."""

    dispersion: object

    def coefficient(self, omega, r):
        d = self.dispersion
        t = _wtuple(d.weights)
        p = d.p(omega)
        v = V_PAPER[r]
        return K_PHASE[r] * t[r - 1] * np.exp(-1j * (p[0] * v[0] + p[1] * v[1]))


def asymptotic_inverse_kasteleyn(dx, dispersion):
    """Leading large-distance form of K^{-1} at rotated displacement dx."""
    if dx[0] == 0 and dx[1] == 0:
        raise CorrelationError("displacement must be nonzero")
    total = 0.0 + 0.0j
    for omega in (1, -1):
        p = dispersion.p(omega)
        phi = dispersion.phi(omega, dx)
        if phi == 0:
            raise CorrelationError(f"phi_{omega:+d} vanishes at {dx}")
        total += omega * np.exp(-1j * (p[0] * dx[0] + p[1] * dx[1])) / phi
    return complex(total / (2 * np.pi))


def asymptotic_two_point(r, rp, dx, dispersion):
    """Two-term large-distance form of E(1_e ; 1_e'), dx = x(e) - x(e')."""
    if dx[0] == 0 and dx[1] == 0:
        raise CorrelationError("coincident black sites")
    coeffs = AsymptoticCoefficients(dispersion)
    smooth = 0.0 + 0.0j
    osc = 0.0 + 0.0j
    for omega in (1, -1):
        phi = dispersion.phi(omega, dx)
        smooth += (coeffs.coefficient(omega, r) * coeffs.coefficient(omega, rp)
                   / phi**2)
        p_o = dispersion.p(omega)
        p_mo = dispersion.p(-omega)
        phase = np.exp(1j * ((p_o[0] - p_mo[0]) * dx[0]
                             + (p_o[1] - p_mo[1]) * dx[1]))
        osc += (coeffs.coefficient(-omega, r) * coeffs.coefficient(omega, rp)
                * phase / abs(phi) ** 2)
    val = (smooth + osc) / (4 * np.pi**2)
    return float(val.real)


def asymptotic_two_point_split(r, rp, dx, dispersion):
    """(smooth, oscillatory) parts of the asymptotic two-point form."""
    coeffs = AsymptoticCoefficients(dispersion)
    smooth = 0.0 + 0.0j
    osc = 0.0 + 0.0j
    for omega in (1, -1):
        phi = dispersion.phi(omega, dx)
        smooth += (coeffs.coefficient(omega, r) * coeffs.coefficient(omega, rp)
                   / phi**2)
        p_o = dispersion.p(omega)
        p_mo = dispersion.p(-omega)
        phase = np.exp(1j * ((p_o[0] - p_mo[0]) * dx[0]
                             + (p_o[1] - p_mo[1]) * dx[1]))
        osc += (coeffs.coefficient(-omega, r) * coeffs.coefficient(omega, rp)
                * phase / abs(phi) ** 2)
    return (float(smooth.real) / (4 * np.pi**2),
            float(osc.real) / (4 * np.pi**2))


# ---------------------------------------------------------------------------
# interacting parametric form

@dataclass(frozen=True)
class InteractingFormParams:
    """Parameters of the two-term interacting asymptotics: smooth
    amplitudes K[(omega, r)], oscillatory amplitudes H[(omega, r)], Fermi
    points p[omega], linear forms (alpha[omega], beta[omega]), and the
    anomalous exponent nu of the oscillatory decay (nu = 1 when free)."""

    K: dict
    H: dict
    p: dict
    alpha: dict
    beta: dict
    nu: float

    def __post_init__(self):
        if self.nu <= 0:
            raise CorrelationError("nu must be positive")

    def phi(self, omega, x):
        return self.beta[omega] * x[0] - self.alpha[omega] * x[1]

    @classmethod
    def from_free(cls, dispersion, nu=1.0):
        coeffs = AsymptoticCoefficients(dispersion)
        K = {(o, r): coeffs.coefficient(o, r) for o in (1, -1) for r in range(1, 5)}
        return cls(
            K=K,
            H=dict(K),
            p={1: dispersion.p_plus, -1: dispersion.p_minus},
            alpha={1: dispersion.alpha_plus, -1: dispersion.alpha_minus},
            beta={1: dispersion.beta_plus, -1: dispersion.beta_minus},
            nu=nu,
        )


def interacting_form_eval(r, rp, dx, params):
    """Evaluate the interacting two-point form at rotated displacement
    dx = x(e) - x(e'); reduces to `asymptotic_two_point` at the free
    parameter values."""
    if dx[0] == 0 and dx[1] == 0:
        raise CorrelationError("coincident black sites")
    smooth = 0.0 + 0.0j
    osc = 0.0 + 0.0j
    for omega in (1, -1):
        phi = params.phi(omega, dx)
        smooth += params.K[(omega, r)] * params.K[(omega, rp)] / phi**2
        p_o = params.p[omega]
        p_mo = params.p[-omega]
        phase = np.exp(1j * ((p_o[0] - p_mo[0]) * dx[0]
                             + (p_o[1] - p_mo[1]) * dx[1]))
        osc += (params.H[(-omega, r)] * params.H[(omega, rp)]
                * phase / abs(phi) ** (2 * params.nu))
    val = (smooth + osc) / (4 * math.pi**2)
    return float(val.real)
