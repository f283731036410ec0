"""Plaquette-rotation Metropolis dynamics for the (interacting) dimer
measure: prod_e t_{r(e)} * exp(lambda V(D)).

State layout: partner[s1, s2] in {0,1,2,3} is the direction (E, N, W, S)
from each site to its dimer partner. A face flip exchanges a horizontal
parallel pair for a vertical one; flips conserve torus winding numbers,
so a torus chain samples the winding sector of its start configuration
(the zero-slope columnar state by default).

The default interaction V(D) counts faces carrying two parallel dimers.
Custom even local interactions run through a pure-python evaluator path
(slow; meant for small-system validation).
"""

import math
from collections import Counter
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from ..lattice import (
    DimerConfiguration,
    Edge,
    LatticeError,
    alignment_count,
    columnar_configuration,
    edge_endpoints,
    make_edge,
    white_site,
)
from .stats import ChainEstimate, estimate_autocorrelation

LAMBDA_GUARD = 1.0


class McError(Exception):
    pass


@dataclass(frozen=True)
class InteractionSpec:
    """Translation-invariant, finite-range, even interaction.

    kinds: 'dimer-plaquette-alignment' (V = number of aligned faces,
    fast path), 'ising-diagonal-pairs', 'ising-plaquette' (see the ising
    module), or 'custom-even-local' with an `evaluator(partner, face) ->
    float` giving the local V contribution of one face."""

    kind: str = "dimer-plaquette-alignment"
    range_: int = 1
    evaluator: object = None

    def __post_init__(self):
        known = ("dimer-plaquette-alignment", "ising-diagonal-pairs",
                 "ising-plaquette", "custom-even-local")
        if self.kind not in known:
            raise McError(f"unknown interaction kind {self.kind!r}")
        if self.kind == "custom-even-local" and self.evaluator is None:
            raise McError("custom interaction needs an evaluator")


@dataclass(frozen=True)
class McSchedule:
    sweeps: int
    burn_in: int
    measure_every: int = 1
    check_windings: bool = False

    def __post_init__(self):
        if self.sweeps <= 0 or self.burn_in < 0 or self.measure_every <= 0:
            raise McError("invalid schedule")


@dataclass
class McResult:
    estimates: dict
    series: dict
    meta: dict
    config_counts: Counter = field(default_factory=Counter)


# ---------------------------------------------------------------------------
# state conversion

_DIR_STEPS = ((1, 0), (0, 1), (-1, 0), (0, -1))  # E N W S


def configuration_to_partner(config):
    g = config.geometry
    partner = np.full((g.L1, g.L2), -1, dtype=np.int8)
    for e in config:
        b, wv = edge_endpoints(e, g)
        partner[b.x] = e.r - 1
        back = {1: 2, 2: 3, 3: 0, 4: 1}[e.r]  # W S E N as seen from white
        partner[wv.x] = back
    if (partner < 0).any():
        raise McError("configuration does not cover every site")
    return partner


def partner_to_configuration(partner, g):
    edges = []
    for s1 in range(g.L1):
        for s2 in range(g.L2):
            if (s1 + s2) % 2 == 0:
                edges.append(make_edge(g, (s1, s2), int(partner[s1, s2]) + 1))
    return DimerConfiguration(g, edges)


# ---------------------------------------------------------------------------
# numba kernel (plaquette-alignment interaction)

@njit(cache=True)
def _aligned(partner, c1, c2, L1, L2, wrap1, wrap2, nf1, nf2):
    if c1 < 0 or c1 >= nf1 or c2 < 0 or c2 >= nf2:
        return 0
    a1 = c1 + 1
    b2 = c2 + 1
    if wrap1 and a1 >= L1:
        a1 -= L1
    if wrap2 and b2 >= L2:
        b2 -= L2
    if partner[c1, c2] == 0 and partner[c1, b2] == 0:
        return 1
    if partner[c1, c2] == 1 and partner[a1, c2] == 1:
        return 1
    return 0


@njit(cache=True)
def _plaquette_sweep(partner, L1, L2, wrap1, wrap2, nf1, nf2,
                     log_hv, lam, faces, unif):
    accepted = 0
    for k in range(faces.shape[0]):
        idx = faces[k]
        c1 = idx // nf2
        c2 = idx % nf2
        a1 = c1 + 1
        b2 = c2 + 1
        if wrap1 and a1 >= L1:
            a1 -= L1
        if wrap2 and b2 >= L2:
            b2 -= L2
        horizontal = partner[c1, c2] == 0 and partner[c1, b2] == 0
        vertical = partner[c1, c2] == 1 and partner[a1, c2] == 1
        if not (horizontal or vertical):
            continue
        if horizontal:
            dlog = log_hv
        else:
            dlog = -log_hv
        if lam != 0.0:
            before = (_aligned(partner, c1 - 1, c2, L1, L2, wrap1, wrap2, nf1, nf2)
                      + _aligned(partner, c1 + 1, c2, L1, L2, wrap1, wrap2, nf1, nf2)
                      + _aligned(partner, c1, c2 - 1, L1, L2, wrap1, wrap2, nf1, nf2)
                      + _aligned(partner, c1, c2 + 1, L1, L2, wrap1, wrap2, nf1, nf2))
        if horizontal:
            partner[c1, c2] = 1
            partner[c1, b2] = 3
            partner[a1, c2] = 1
            partner[a1, b2] = 3
        else:
            partner[c1, c2] = 0
            partner[a1, c2] = 2
            partner[c1, b2] = 0
            partner[a1, b2] = 2
        if lam != 0.0:
            after = (_aligned(partner, c1 - 1, c2, L1, L2, wrap1, wrap2, nf1, nf2)
                     + _aligned(partner, c1 + 1, c2, L1, L2, wrap1, wrap2, nf1, nf2)
                     + _aligned(partner, c1, c2 - 1, L1, L2, wrap1, wrap2, nf1, nf2)
                     + _aligned(partner, c1, c2 + 1, L1, L2, wrap1, wrap2, nf1, nf2))
            dlog += lam * (after - before)
        if dlog >= 0.0 or unif[k] < math.exp(dlog):
            accepted += 1
        else:
            # undo
            if horizontal:
                partner[c1, c2] = 0
                partner[a1, c2] = 2
                partner[c1, b2] = 0
                partner[a1, b2] = 2
            else:
                partner[c1, c2] = 1
                partner[c1, b2] = 3
                partner[a1, c2] = 1
                partner[a1, b2] = 3
    return accepted


def _python_sweep(partner, g, t, lam, interaction, faces, unif, nf2):
    """Pure-python proposal loop for custom interactions."""
    wrap1, wrap2 = g.wraps
    nf1 = g.L1 if wrap1 else g.L1 - 1
    nf2_ = g.L2 if wrap2 else g.L2 - 1
    log_hv = math.log(t[1] * t[3] / (t[0] * t[2]))
    accepted = 0
    for k in range(len(faces)):
        idx = int(faces[k])
        c1, c2 = idx // nf2, idx % nf2
        a1 = (c1 + 1) % g.L1 if wrap1 else c1 + 1
        b2 = (c2 + 1) % g.L2 if wrap2 else c2 + 1
        horizontal = partner[c1, c2] == 0 and partner[c1, b2] == 0
        vertical = partner[c1, c2] == 1 and partner[a1, c2] == 1
        if not (horizontal or vertical):
            continue
        dlog = log_hv if horizontal else -log_hv
        rad = interaction.range_ + 1  # a flip touches sites one face away
        neighborhood = [
            (c1 + d1, c2 + d2)
            for d1 in range(-rad, rad + 1)
            for d2 in range(-rad, rad + 1)
        ]
        before = sum(interaction.evaluator(partner, f) for f in neighborhood)
        _apply_flip(partner, c1, c2, a1, b2, horizontal)
        after = sum(interaction.evaluator(partner, f) for f in neighborhood)
        dlog += lam * (after - before)
        if dlog >= 0.0 or unif[k] < math.exp(dlog):
            accepted += 1
        else:
            _apply_flip(partner, c1, c2, a1, b2, not horizontal)
    return accepted


def _apply_flip(partner, c1, c2, a1, b2, to_vertical):
    if to_vertical:
        partner[c1, c2] = 1
        partner[c1, b2] = 3
        partner[a1, c2] = 1
        partner[a1, b2] = 3
    else:
        partner[c1, c2] = 0
        partner[a1, c2] = 2
        partner[c1, b2] = 0
        partner[a1, b2] = 2


# ---------------------------------------------------------------------------
# measurements on the partner array

def type_densities(partner):
    """Fraction of black sites matched by each edge type."""
    L1, L2 = partner.shape
    s1, s2 = np.meshgrid(np.arange(L1), np.arange(L2), indexing="ij")
    black = (s1 + s2) % 2 == 0
    n_black = black.sum()
    return np.array([(black & (partner == r)).sum() / n_black for r in range(4)])


def type_fields(partner):
    """Indicator fields over the full grid, one per type, black sites only."""
    L1, L2 = partner.shape
    s1, s2 = np.meshgrid(np.arange(L1), np.arange(L2), indexing="ij")
    black = (s1 + s2) % 2 == 0
    return np.stack([(black & (partner == r)).astype(float) for r in range(4)])


def alignment_total(partner, g):
    wrap1, wrap2 = g.wraps
    nf1 = g.L1 if wrap1 else g.L1 - 1
    nf2 = g.L2 if wrap2 else g.L2 - 1
    east = np.roll(partner, -1, axis=0) if wrap1 else partner[1:, :]
    north = np.roll(partner, -1, axis=1) if wrap2 else partner[:, 1:]
    p = partner[:nf1, :nf2]
    h_pair = (p == 0) & (north[:nf1, :nf2] == 0)
    v_pair = (p == 1) & (east[:nf1, :nf2] == 1)
    return int((h_pair | v_pair).sum())


def heights4_field(partner, g):
    """4x heights on the fundamental-domain face grid, base face (0,0)."""
    wrap1, wrap2 = g.wraps
    nf1 = g.L1 if wrap1 else g.L1 - 1
    nf2 = g.L2 if wrap2 else g.L2 - 1
    c1 = np.arange(nf1)[:, None]
    c2 = np.arange(nf2)[None, :]
    # east step from face c crosses the vertical edge at site (c1+1, c2);
    # occupied iff that site is matched north
    site_e1 = (c1 + 1) % g.L1 if wrap1 else c1 + 1
    occ_e = partner[site_e1, c2 * np.ones_like(c1)] == 1
    sign_e = np.where((c1 + c2) % 2 == 0, 1, -1)
    inc_e = sign_e * (4 * occ_e - 1)
    # north step from face c crosses the horizontal edge at site (c1, c2+1);
    # occupied iff that site is matched east
    site_n2 = (c2 + 1) % g.L2 if wrap2 else c2 + 1
    occ_n = partner[c1 * np.ones_like(c2), site_n2] == 0
    sign_n = np.where((c1 + c2) % 2 == 1, 1, -1)
    inc_n = sign_n * (4 * occ_n - 1)
    h = np.zeros((nf1, nf2), dtype=np.int64)
    h[1:, 0] = np.cumsum(inc_e[:-1, 0])
    h[:, 1:] = h[:, [0]] + np.cumsum(inc_n[:, :-1], axis=1)
    return h


def winding_numbers_fast(partner, g):
    """Height increments (4x) around the two torus cycles."""
    if g.kind != "torus":
        return (0, 0)
    c1 = np.arange(g.L1)
    occ_e = partner[(c1 + 1) % g.L1, 0] == 1
    sign_e = np.where((c1 + 0) % 2 == 0, 1, -1)
    w1 = int(np.sum(sign_e * (4 * occ_e - 1)))
    c2 = np.arange(g.L2)
    occ_n = partner[0, (c2 + 1) % g.L2] == 0
    sign_n = np.where((0 + c2) % 2 == 1, 1, -1)
    w2 = int(np.sum(sign_n * (4 * occ_n - 1)))
    return (w1, w2)


def pair_correlation_snapshot(fields, pairs):
    """Translation-averaged E(1_e 1_e') estimators for one snapshot.

    fields: (4, L1, L2) type indicator stack. pairs: list of
    (r, rp, ds1, ds2) with the displacement in grid coordinates from the
    black site of e' to the black site of e. Returns one value per pair.
    """
    L1, L2 = fields.shape[1:]
    n_black = L1 * L2 // 2
    ffts = {r: np.fft.rfft2(fields[r]) for r in range(4)}
    out = np.empty(len(pairs))
    cache = {}
    for i, (r, rp, d1, d2) in enumerate(pairs):
        key = (r, rp)
        if key not in cache:
            cache[key] = np.fft.irfft2(ffts[r] * np.conj(ffts[rp]), s=(L1, L2))
        out[i] = cache[key][d1 % L1, d2 % L2] / n_black
    return out


# ---------------------------------------------------------------------------
# driver

def dimer_mcmc_run(g, w, schedule, seed, lam=0.0, interaction=None,
                   measurements=("type_density", "alignment"),
                   correlation_pairs=None, height_probes=None,
                   start=None):
    """Run one plaquette-flip chain and return per-observable estimates.

    measurements: subset of {'type_density', 'alignment', 'config_key',
    'winding'}. correlation_pairs: (r, rp, ds1, ds2) tuples for the FFT
    pair-correlation accumulator. height_probes: list of face-grid index
    pairs ((a1, a2), (b1, b2)); each snapshot records their 4x height
    difference. Identical seed and schedule reproduce the streams
    bit for bit.
    """
    from ..spectral import _wtuple

    t = _wtuple(w)
    if abs(lam) > LAMBDA_GUARD:
        raise McError(f"|lambda| exceeds the {LAMBDA_GUARD} guard")
    if g.kind == "cylinder":
        raise McError("plaquette dynamics is not ergodic on cylinders; "
                      "use a torus or an open window")
    if interaction is None:
        interaction = InteractionSpec()
    if lam != 0.0 and interaction.kind not in ("dimer-plaquette-alignment",
                                               "custom-even-local"):
        raise McError(f"{interaction.kind} is not a dimer interaction")
    if start is None:
        try:
            start = columnar_configuration(g, "h")
        except LatticeError:
            start = columnar_configuration(g, "v")
    partner = configuration_to_partner(start)

    wrap1, wrap2 = g.wraps
    nf1 = g.L1 if wrap1 else g.L1 - 1
    nf2 = g.L2 if wrap2 else g.L2 - 1
    n_faces = nf1 * nf2
    log_hv = math.log(t[1] * t[3] / (t[0] * t[2]))
    rng = np.random.Generator(np.random.Philox(key=seed))

    def run_sweeps(n):
        accepted = 0
        for _ in range(n):
            faces = rng.integers(0, n_faces, size=n_faces)
            unif = rng.random(n_faces)
            if interaction.kind == "custom-even-local" and lam != 0.0:
                accepted += _python_sweep(partner, g, t, lam, interaction,
                                          faces, unif, nf2)
            else:
                accepted += _plaquette_sweep(
                    partner, g.L1, g.L2, wrap1, wrap2, nf1, nf2,
                    log_hv, lam, faces, unif)
        return accepted

    run_sweeps(schedule.burn_in)
    w0 = winding_numbers_fast(partner, g)

    n_meas = schedule.sweeps // schedule.measure_every
    series = {name: [] for name in measurements}
    corr_series = [] if correlation_pairs else None
    height_series = [] if height_probes else None
    counts = Counter()
    accepted = 0
    for _ in range(n_meas):
        accepted += run_sweeps(schedule.measure_every)
        if schedule.check_windings and g.kind == "torus":
            if winding_numbers_fast(partner, g) != w0:
                raise McError("winding numbers changed (dynamics bug)")
        if "type_density" in measurements:
            series["type_density"].append(type_densities(partner))
        if "alignment" in measurements:
            series["alignment"].append(alignment_total(partner, g))
        if "winding" in measurements:
            series["winding"].append(winding_numbers_fast(partner, g))
        if "config_key" in measurements:
            counts[partner.tobytes()] += 1
        if correlation_pairs:
            corr_series.append(
                pair_correlation_snapshot(type_fields(partner), correlation_pairs))
        if height_probes:
            h4 = heights4_field(partner, g)
            height_series.append([
                h4[b[0], b[1]] - h4[a[0], a[1]] for a, b in height_probes
            ])

    out_series = {}
    estimates = {}
    if "type_density" in measurements:
        arr = np.asarray(series["type_density"])
        out_series["type_density"] = arr
        for r in range(4):
            estimates[f"type_density_r{r + 1}"] = estimate_autocorrelation(
                arr[:, r], seed=seed)
    if "alignment" in measurements:
        arr = np.asarray(series["alignment"], dtype=float)
        out_series["alignment"] = arr
        estimates["alignment"] = estimate_autocorrelation(arr, seed=seed)
    if "winding" in measurements:
        out_series["winding"] = np.asarray(series["winding"])
    if correlation_pairs:
        out_series["pair_correlations"] = np.asarray(corr_series)
    if height_probes:
        out_series["height_diffs4"] = np.asarray(height_series, dtype=float)

    meta = {
        "seed": seed,
        "acceptance_rate": accepted / max(1, (schedule.sweeps * n_faces)),
        "windings": w0,
        "n_measurements": n_meas,
        "lambda": lam,
        "weights": t,
    }
    return McResult(estimates=estimates, series=out_series, meta=meta,
                    config_counts=counts)
