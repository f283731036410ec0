"""Bipartite square-lattice geometry, dimer configurations, dual paths,
and brute-force enumeration oracles.

Conventions
-----------
Sites are integer pairs s = (s1, s2); a site is *black* when s1 + s2 is
even (the origin is black). Every edge joins a black site to one of its
four grid neighbors. Edges carry a type r in {1, 2, 3, 4}: the white
endpoint of a type-r edge sits one grid step E, N, W, S of its black
endpoint, respectively.

A second, rotated coordinate system runs along the lattice diagonals:
``paper_from_site(s) = ((s1 - s2)/2, (s1 + s2)/2)``. Black sites land on
integer pairs x there, and the type-r white endpoint has rotated index
x + v_r with v1=(0,0), v2=(-1,0), v3=(-1,-1), v4=(0,-1) (i.e. the white
sits to the NE, NW, SW, SE of the black site along the diagonal axes).
All momentum-space and asymptotic formulas in the other modules are
expressed in these rotated coordinates; everything geometric here works
in plain grid coordinates.

Faces are keyed by their SW corner site. Faces whose SW corner is black
are the reference faces for height observables; their rotated coordinate
is ``paper_from_site(corner)``.

Heights are stored as integers equal to 4x the height, so that the
height increment across an edge, sigma_e * (1_e - 1/4), becomes the
exact integer sigma_e * (4 * 1_e - 1).

All types are immutable values after construction.
"""

from dataclasses import dataclass
from fractions import Fraction

# white-endpoint grid step by edge type (E, N, W, S)
EDGE_STEP = {1: (1, 0), 2: (0, 1), 3: (-1, 0), 4: (0, -1)}
# white-endpoint offset by edge type in rotated (diagonal) coordinates
V_PAPER = {1: (0, 0), 2: (-1, 0), 3: (-1, -1), 4: (0, -1)}

GEOMETRY_KINDS = ("torus", "cylinder", "open-window")
ENUMERATION_CAP = 36


class LatticeError(Exception):
    pass


@dataclass(frozen=True)
class LatticeGeometry:
    """Finite lattice window: torus (wraps both directions), cylinder
    (wraps direction 1 only), or open window (no wrapping).

    L1, L2 count sites per direction. Wrapped directions must be even
    (and at least 4) for the two-coloring to close up; an open window
    only needs an even total site count to admit dimer coverings.
    """

    kind: str
    L1: int
    L2: int
    spacing: float = 1.0

    def __post_init__(self):
        if self.kind not in GEOMETRY_KINDS:
            raise LatticeError(f"unknown geometry kind {self.kind!r}")
        if self.L1 < 2 or self.L2 < 2:
            raise LatticeError("need at least 2 sites per direction")
        if self.spacing <= 0:
            raise LatticeError("spacing must be positive")
        wrapped = {"torus": (True, True), "cylinder": (True, False),
                   "open-window": (False, False)}[self.kind]
        for L, wraps in zip((self.L1, self.L2), wrapped):
            if wraps and (L % 2 != 0 or L < 4):
                raise LatticeError("wrapped directions need even L >= 4")
        if (self.L1 * self.L2) % 2 != 0:
            raise LatticeError("odd site count admits no dimer covering")

    @property
    def wraps(self):
        return {"torus": (True, True), "cylinder": (True, False),
                "open-window": (False, False)}[self.kind]

    @property
    def n_sites(self):
        return self.L1 * self.L2

    def wrap_site(self, s):
        s1, s2 = s
        w1, w2 = self.wraps
        if w1:
            s1 %= self.L1
        if w2:
            s2 %= self.L2
        return (s1, s2)

    def site_in_bounds(self, s):
        s1, s2 = self.wrap_site(s)
        return 0 <= s1 < self.L1 and 0 <= s2 < self.L2

    def sites(self):
        for s1 in range(self.L1):
            for s2 in range(self.L2):
                yield (s1, s2)

    def faces(self):
        w1, w2 = self.wraps
        for c1 in range(self.L1 if w1 else self.L1 - 1):
            for c2 in range(self.L2 if w2 else self.L2 - 1):
                yield (c1, c2)

    def face_in_bounds(self, c):
        c1, c2 = self.wrap_face(c)
        w1, w2 = self.wraps
        return (0 <= c1 < (self.L1 if w1 else self.L1 - 1)
                and 0 <= c2 < (self.L2 if w2 else self.L2 - 1))

    def wrap_face(self, c):
        return self.wrap_site(c)


def is_black(s):
    return (s[0] + s[1]) % 2 == 0


@dataclass(frozen=True)
class Vertex:
    x: tuple
    color: str


@dataclass(frozen=True)
class Edge:
    """Edge keyed by (black endpoint in grid coordinates, type)."""

    black: tuple
    r: int

    def __post_init__(self):
        if self.r not in EDGE_STEP:
            raise LatticeError(f"edge type must be 1..4, got {self.r}")
        if not is_black(self.black):
            raise LatticeError(f"{self.black} is not a black site")


def paper_from_site(s):
    """Rotated (diagonal-axes) coordinates of a site, as exact Fractions."""
    return (Fraction(s[0] - s[1], 2), Fraction(s[0] + s[1], 2))


def site_from_paper(x):
    """Grid coordinates of the black site with rotated coordinates x."""
    x1, x2 = x
    s = (x1 + x2, x2 - x1)
    if not is_black(s):
        raise LatticeError(f"{x} is not the rotated image of a black site")
    return s


def paper_displacement(ds):
    """Rotated image of a grid displacement; integer pair when possible."""
    d1 = Fraction(ds[0] - ds[1], 2)
    d2 = Fraction(ds[0] + ds[1], 2)
    if d1.denominator == 1 and d2.denominator == 1:
        return (int(d1), int(d2))
    return (d1, d2)


def paper_x(edge):
    """Rotated integer coordinates of the edge's black endpoint."""
    x1, x2 = paper_from_site(edge.black)
    return (int(x1), int(x2))


def make_edge(g, black, r):
    e = Edge(g.wrap_site(black), r)
    if not edge_in_bounds(g, e):
        raise LatticeError(f"edge {e} outside geometry")
    return e


def white_site(g, e):
    step = EDGE_STEP[e.r]
    return g.wrap_site((e.black[0] + step[0], e.black[1] + step[1]))


def edge_in_bounds(g, e):
    if not g.site_in_bounds(e.black):
        return False
    step = EDGE_STEP[e.r]
    raw = (e.black[0] + step[0], e.black[1] + step[1])
    return g.site_in_bounds(raw)


def edge_endpoints(e, g):
    """(black, white) vertices of e, wrapped into the fundamental domain."""
    if not edge_in_bounds(g, e):
        raise LatticeError(f"edge {e} outside geometry")
    b = g.wrap_site(e.black)
    w = white_site(g, e)
    return Vertex(b, "black"), Vertex(w, "white")


def edge_wrap_flags(g, e):
    """Whether the edge crosses the periodic seam in directions 1 and 2."""
    step = EDGE_STEP[e.r]
    raw1 = e.black[0] + step[0]
    raw2 = e.black[1] + step[1]
    w1, w2 = g.wraps
    return (w1 and not (0 <= raw1 < g.L1), w2 and not (0 <= raw2 < g.L2))


def edge_between(g, a, b):
    """The edge joining two adjacent sites, keyed canonically."""
    a = g.wrap_site(a)
    b = g.wrap_site(b)
    if is_black(a):
        black, white = a, b
    elif is_black(b):
        black, white = b, a
    else:
        raise LatticeError("both sites white")
    for r, step in EDGE_STEP.items():
        if g.wrap_site((black[0] + step[0], black[1] + step[1])) == white:
            e = Edge(black, r)
            if edge_in_bounds(g, e):
                return e
    raise LatticeError(f"sites {a}, {b} not adjacent in this geometry")


def edges_at_site(g, s):
    s = g.wrap_site(s)
    out = []
    if is_black(s):
        for r in (1, 2, 3, 4):
            e = Edge(s, r)
            if edge_in_bounds(g, e):
                out.append(e)
    else:
        for r, step in EDGE_STEP.items():
            b = g.wrap_site((s[0] - step[0], s[1] - step[1]))
            e = Edge(b, r)
            if edge_in_bounds(g, e) and white_site(g, e) == s:
                out.append(e)
    return out


def all_edges(g):
    out = []
    for s in g.sites():
        if is_black(s):
            for r in (1, 2, 3, 4):
                e = Edge(s, r)
                if edge_in_bounds(g, e):
                    out.append(e)
    return out


# ---------------------------------------------------------------------------
# faces and dual paths

FACE_STEP = {"E": (1, 0), "N": (0, 1), "W": (-1, 0), "S": (0, -1)}


def face_corners(c):
    c1, c2 = c
    return ((c1, c2), (c1 + 1, c2), (c1, c2 + 1), (c1 + 1, c2 + 1))


def face_edges(g, c):
    """The S, E, N, W edges bounding face c."""
    c1, c2 = c
    return (
        edge_between(g, (c1, c2), (c1 + 1, c2)),
        edge_between(g, (c1 + 1, c2), (c1 + 1, c2 + 1)),
        edge_between(g, (c1, c2 + 1), (c1 + 1, c2 + 1)),
        edge_between(g, (c1, c2), (c1, c2 + 1)),
    )


def face_at_paper(x):
    """Face whose bottom corner (in rotated axes) is the black site at x."""
    return site_from_paper(x)


def face_center_paper(c):
    x1, x2 = paper_from_site(c)
    return (x1, x2 + Fraction(1, 2))


def step_crossed_edge(g, c, direction):
    """Edge crossed when stepping from face c to its `direction` neighbor."""
    c1, c2 = c
    if direction == "E":
        return edge_between(g, (c1 + 1, c2), (c1 + 1, c2 + 1))
    if direction == "W":
        return edge_between(g, (c1, c2), (c1, c2 + 1))
    if direction == "N":
        return edge_between(g, (c1, c2 + 1), (c1 + 1, c2 + 1))
    if direction == "S":
        return edge_between(g, (c1, c2), (c1 + 1, c2))
    raise LatticeError(f"unknown direction {direction!r}")


def step_sign(g, c, direction):
    """Sign of the crossing: +1 when the white endpoint of the crossed
    edge lies to the right of the oriented dual step."""
    c1, c2 = c
    right_corner = {
        "E": (c1 + 1, c2),      # facing east, right hand points south
        "W": (c1, c2 + 1),
        "N": (c1 + 1, c2 + 1),
        "S": (c1, c2),
    }[direction]
    return 1 if not is_black(right_corner) else -1


def crossing_sign(g, step, e):
    """Sign for a dual step (face, face) crossing edge e."""
    c_from, c_to = step
    c_from = g.wrap_face(c_from)
    c_to = g.wrap_face(c_to)
    for direction, d in FACE_STEP.items():
        if g.wrap_face((c_from[0] + d[0], c_from[1] + d[1])) == c_to:
            crossed = step_crossed_edge(g, c_from, direction)
            if crossed != e:
                raise LatticeError(f"step {step} does not cross {e}")
            return step_sign(g, c_from, direction)
    raise LatticeError(f"faces {step} are not adjacent")


@dataclass(frozen=True)
class DualPath:
    faces: tuple
    crossed: tuple  # ((Edge, sign), ...)


def _signed_deltas(g, c0, c1):
    d1 = c1[0] - c0[0]
    d2 = c1[1] - c0[1]
    w1, w2 = g.wraps
    if w1:
        d1 = (d1 + g.L1 // 2) % g.L1 - g.L1 // 2
        if d1 == -g.L1 // 2:
            d1 = g.L1 // 2
    if w2:
        d2 = (d2 + g.L2 // 2) % g.L2 - g.L2 // 2
        if d2 == -g.L2 // 2:
            d2 = g.L2 // 2
    return d1, d2


def dual_path(g, c0, c1):
    """Canonical L-shaped dual path between two faces.

    From the lexicographically smaller face the path runs horizontally
    first, then vertically; the opposite ordering returns the exact
    reversal (same edges, opposite signs), so reversing endpoints always
    reverses the crossed-edge list and negates every sign. On wrapped
    directions the minimal non-winding displacement is used (ties
    resolved towards positive steps).
    """
    c0 = g.wrap_face(c0)
    c1 = g.wrap_face(c1)
    if not (g.face_in_bounds(c0) and g.face_in_bounds(c1)):
        raise LatticeError("faces outside geometry")
    if c1 < c0:
        fwd = dual_path(g, c1, c0)
        return DualPath(
            faces=tuple(reversed(fwd.faces)),
            crossed=tuple((e, -s) for e, s in reversed(fwd.crossed)),
        )
    d1, d2 = _signed_deltas(g, c0, c1)
    faces = [c0]
    crossed = []
    cur = c0
    for _ in range(abs(d1)):
        direction = "E" if d1 > 0 else "W"
        crossed.append((step_crossed_edge(g, cur, direction),
                        step_sign(g, cur, direction)))
        step = FACE_STEP[direction]
        cur = g.wrap_face((cur[0] + step[0], cur[1] + step[1]))
        faces.append(cur)
    for _ in range(abs(d2)):
        direction = "N" if d2 > 0 else "S"
        crossed.append((step_crossed_edge(g, cur, direction),
                        step_sign(g, cur, direction)))
        step = FACE_STEP[direction]
        cur = g.wrap_face((cur[0] + step[0], cur[1] + step[1]))
        faces.append(cur)
    if cur != c1:
        raise LatticeError("path construction failed (unreachable face?)")
    return DualPath(faces=tuple(faces), crossed=tuple(crossed))


def face_path(g, directions, start):
    """Dual path along explicit direction letters; for property tests."""
    faces = [g.wrap_face(start)]
    crossed = []
    cur = faces[0]
    for direction in directions:
        crossed.append((step_crossed_edge(g, cur, direction),
                        step_sign(g, cur, direction)))
        d = FACE_STEP[direction]
        cur = g.wrap_face((cur[0] + d[0], cur[1] + d[1]))
        if not g.face_in_bounds(cur):
            raise LatticeError("path leaves geometry")
        faces.append(cur)
    return DualPath(faces=tuple(faces), crossed=tuple(crossed))


# ---------------------------------------------------------------------------
# dimer configurations

class DimerConfiguration:
    """A perfect matching, stored as a frozenset of edges."""

    def __init__(self, g, edges, validate=True):
        self.geometry = g
        self.edges = frozenset(edges)
        if validate:
            self._validate()

    def _validate(self):
        g = self.geometry
        covered = {}
        for e in self.edges:
            if not edge_in_bounds(g, e):
                raise LatticeError(f"edge {e} outside geometry")
            b, w = edge_endpoints(e, g)
            for v in (b.x, w.x):
                if v in covered:
                    raise LatticeError(f"site {v} covered twice")
                covered[v] = e
        if len(covered) != g.n_sites:
            raise LatticeError("not a perfect matching: uncovered sites remain")

    def __contains__(self, e):
        return e in self.edges

    def __iter__(self):
        return iter(self.edges)

    def __len__(self):
        return len(self.edges)

    def __eq__(self, other):
        return isinstance(other, DimerConfiguration) and self.edges == other.edges

    def __hash__(self):
        return hash(self.edges)

    def type_counts(self):
        counts = {1: 0, 2: 0, 3: 0, 4: 0}
        for e in self.edges:
            counts[e.r] += 1
        return counts


def matching_weight(config, weights):
    """Product of edge weights; `weights` is indexable by type (t1..t4)."""
    t = _weights_tuple(weights)
    w = 1.0
    for e in config:
        w *= t[e.r - 1]
    return w


def _weights_tuple(weights):
    t = tuple(float(v) for v in weights)
    if len(t) == 3:
        t = t + (1.0,)
    if len(t) != 4 or any(v <= 0 for v in t):
        raise LatticeError("weights must be 3 or 4 positive numbers")
    return t


def columnar_configuration(g, orientation="h"):
    """Fully aligned columnar covering: every face in alternate rows
    (columns) carries a parallel dimer pair, so the plaquette dynamics
    has maximal mobility. This is the zero-slope start state for MC; the
    all-type-r brickworks below are plaquette-frozen."""
    edges = []
    if orientation == "h":
        if g.L1 % 2 != 0:
            raise LatticeError("horizontal columnar state needs even L1")
        for s in g.sites():
            if not is_black(s):
                continue
            r = 1 if s[0] % 2 == 0 else 3
            edges.append(make_edge(g, s, r))
    elif orientation == "v":
        if g.L2 % 2 != 0:
            raise LatticeError("vertical columnar state needs even L2")
        for s in g.sites():
            if not is_black(s):
                continue
            r = 2 if s[1] % 2 == 0 else 4
            edges.append(make_edge(g, s, r))
    else:
        raise LatticeError("orientation must be 'h' or 'v'")
    return DimerConfiguration(g, edges)


def reference_configuration(g, r):
    """Brickwork of all type-r dimers (extremal slope; plaquette-frozen)."""
    edges = []
    covered = set()
    for s in g.sites():
        if not is_black(s):
            continue
        e = Edge(s, r)
        if not edge_in_bounds(g, e):
            raise LatticeError(
                f"geometry does not admit the all-type-{r} brickwork"
            )
        edges.append(e)
        covered.add(s)
        covered.add(white_site(g, e))
    if len(covered) != g.n_sites:
        raise LatticeError(f"geometry does not admit the all-type-{r} brickwork")
    return DimerConfiguration(g, edges)


def enumerate_matchings(g):
    """All perfect matchings by recursion on the lowest uncovered site.

    Guarded at 36 sites; beyond that the list is no longer a practical
    oracle.
    """
    if g.n_sites > ENUMERATION_CAP:
        raise LatticeError(
            f"enumeration capped at {ENUMERATION_CAP} sites, geometry has {g.n_sites}"
        )
    order = sorted(g.sites())
    site_pos = {s: i for i, s in enumerate(order)}
    incident = {s: edges_at_site(g, s) for s in order}
    results = []
    covered = [False] * len(order)

    def recurse(accum):
        idx = next((i for i, c in enumerate(covered) if not c), None)
        if idx is None:
            results.append(DimerConfiguration(g, accum, validate=False))
            return
        s = order[idx]
        covered[idx] = True
        for e in incident[s]:
            b, w = edge_endpoints(e, g)
            other = w.x if b.x == s else b.x
            j = site_pos[other]
            if covered[j]:
                continue
            covered[j] = True
            accum.append(e)
            recurse(accum)
            accum.pop()
            covered[j] = False
        covered[idx] = False

    recurse([])
    return results


# ---------------------------------------------------------------------------
# plaquette moves and the alignment interaction

def face_pair_state(g, config, c):
    """'h' if the face carries two horizontal dimers, 'v' for vertical,
    None otherwise."""
    s_edge, e_edge, n_edge, w_edge = face_edges(g, c)
    if s_edge in config and n_edge in config:
        return "h"
    if w_edge in config and e_edge in config:
        return "v"
    return None


def alignment_count(g, config):
    """Number of faces carrying two parallel dimers."""
    return sum(1 for c in g.faces() if face_pair_state(g, config, c) is not None)


def plaquette_rotate(config, c):
    """Rotate the parallel pair on face c by 90 degrees."""
    g = config.geometry
    state = face_pair_state(g, config, c)
    if state is None:
        raise LatticeError(f"face {c} carries no parallel dimer pair")
    s_edge, e_edge, n_edge, w_edge = face_edges(g, c)
    edges = set(config.edges)
    if state == "h":
        edges -= {s_edge, n_edge}
        edges |= {w_edge, e_edge}
    else:
        edges -= {w_edge, e_edge}
        edges |= {s_edge, n_edge}
    return DimerConfiguration(g, edges, validate=False)


# ---------------------------------------------------------------------------
# heights

@dataclass(frozen=True)
class HeightField:
    """Face heights in quarter units (values are 4x the height), zero at
    the base face. On a torus the values live on the fundamental domain;
    `windings` records the height increment (also 4x) picked up around
    each periodic direction."""

    base: tuple
    values: dict
    windings: tuple = None

    def height4(self, c):
        return self.values[c]


def _height_increment4(config, e, sign):
    return sign * (3 if e in config else -1)


def height_field(config, base=None):
    """Integrate the height over all faces from the base face.

    Uses only non-wrapping dual steps, so torus heights are single-valued
    on the fundamental domain; the winding increments around the two
    cycles are reported separately.
    """
    g = config.geometry
    faces = list(g.faces())
    if base is None:
        base = faces[0]
    base = g.wrap_face(base)
    if not g.face_in_bounds(base):
        raise LatticeError("base face outside geometry")
    w1, w2 = g.wraps
    n1 = g.L1 if w1 else g.L1 - 1
    n2 = g.L2 if w2 else g.L2 - 1
    values = {base: 0}
    stack = [base]
    while stack:
        c = stack.pop()
        h = values[c]
        for direction, d in FACE_STEP.items():
            nc = (c[0] + d[0], c[1] + d[1])
            if not (0 <= nc[0] < n1 and 0 <= nc[1] < n2):
                continue  # stay inside the fundamental domain
            if nc in values:
                continue
            e = step_crossed_edge(g, c, direction)
            s = step_sign(g, c, direction)
            values[nc] = h + _height_increment4(config, e, s)
            stack.append(nc)
    if len(values) != len(faces):
        raise LatticeError("face graph not connected within fundamental domain")
    windings = None
    if g.kind in ("torus", "cylinder"):
        windings = winding_numbers(config)
    return HeightField(base=base, values=values, windings=windings)


def path_height_increment4(config, path):
    """4x the height change along an explicit dual path."""
    return sum(_height_increment4(config, e, s) for e, s in path.crossed)


def winding_numbers(config):
    """Height increments (4x) around the periodic directions."""
    g = config.geometry
    w1, w2 = g.wraps
    out = []
    if w1:
        loop1 = face_path(g, "E" * g.L1, (0, 0))
        out.append(path_height_increment4(config, loop1))
    else:
        out.append(0)
    if w2:
        loop2 = face_path(g, "N" * g.L2, (0, 0))
        out.append(path_height_increment4(config, loop2))
    else:
        out.append(0)
    return tuple(out)
