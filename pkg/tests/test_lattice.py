import numpy as np
import pytest

from dimerlab.lattice import (
    DimerConfiguration,
    Edge,
    LatticeError,
    LatticeGeometry,
    alignment_count,
    all_edges,
    crossing_sign,
    dual_path,
    edge_between,
    edge_endpoints,
    edge_wrap_flags,
    enumerate_matchings,
    face_at_paper,
    face_pair_state,
    face_path,
    height_field,
    is_black,
    make_edge,
    matching_weight,
    paper_displacement,
    paper_from_site,
    paper_x,
    path_height_increment4,
    plaquette_rotate,
    reference_configuration,
    site_from_paper,
    step_crossed_edge,
    step_sign,
    white_site,
    winding_numbers,
)

TORUS44 = LatticeGeometry("torus", 4, 4)
WINDOW22 = LatticeGeometry("open-window", 2, 2)
WINDOW23 = LatticeGeometry("open-window", 2, 3)


class TestGeometry:
    def test_coloring(self):
        assert is_black((0, 0))
        assert not is_black((1, 0))
        assert is_black((1, 1))

    def test_paper_map_round_trip(self):
        for s in [(0, 0), (2, 0), (1, 1), (3, -1), (-2, 4)]:
            assert site_from_paper(paper_from_site(s)) == s

    def test_paper_displacement_diagonal(self):
        # a grid step along (1, -1) is a unit step along the first rotated axis
        assert paper_displacement((1, -1)) == (1, 0)
        assert paper_displacement((1, 1)) == (0, 1)

    def test_torus_needs_even_sides(self):
        with pytest.raises(LatticeError):
            LatticeGeometry("torus", 5, 4)
        with pytest.raises(LatticeError):
            LatticeGeometry("torus", 4, 2)

    def test_window_odd_total_rejected(self):
        with pytest.raises(LatticeError):
            LatticeGeometry("open-window", 3, 3)

    def test_unknown_kind(self):
        with pytest.raises(LatticeError):
            LatticeGeometry("klein-bottle", 4, 4)


class TestEdges:
    def test_type1_white_is_rotated_ne(self):
        e = Edge((0, 0), 1)
        b, w = edge_endpoints(e, TORUS44)
        assert b.x == (0, 0) and b.color == "black"
        assert w.x == (1, 0) and w.color == "white"
        # rotated index of the white endpoint: x + v_1 = x
        assert paper_x(e) == (0, 0)

    def test_white_rotated_offsets(self):
        # white rotated index must be x + v_r for every type
        from dimerlab.lattice import V_PAPER

        g = LatticeGeometry("torus", 8, 8)
        for r in (1, 2, 3, 4):
            e = make_edge(g, (2, 2), r)
            wx = paper_from_site(white_site(g, e))
            # whites sit at (y1 + 1/2, y2 + 1/2) in rotated coordinates
            y = (wx[0] - 0.5, wx[1] - 0.5)
            x = paper_x(e)
            v = V_PAPER[r]
            assert y == (x[0] + v[0], x[1] + v[1])

    def test_wrap(self):
        e = make_edge(TORUS44, (3, 1), 1)
        _, w = edge_endpoints(e, TORUS44)
        assert w.x == (0, 1)
        assert edge_wrap_flags(TORUS44, e) == (True, False)

    def test_window_boundary_edge_rejected(self):
        with pytest.raises(LatticeError):
            make_edge(WINDOW22, (1, 1), 1)

    def test_edge_between(self):
        e = edge_between(TORUS44, (1, 0), (1, 1))
        assert e == Edge((1, 1), 4)

    def test_degree_four_on_torus(self):
        edges = all_edges(TORUS44)
        assert len(edges) == 2 * TORUS44.n_sites  # 4 * n/2 black sites


class TestCrossingSigns:
    def test_four_rotations_alternate(self):
        g = TORUS44
        signs = [step_sign(g, (0, 0), d) for d in "ENWS"]
        assert signs == [1, -1, 1, -1]

    def test_reversal_antisymmetry(self):
        g = TORUS44
        for c in [(0, 0), (1, 0), (2, 1)]:
            for d, opp in (("E", "W"), ("N", "S")):
                e = step_crossed_edge(g, c, d)
                s = step_sign(g, c, d)
                from dimerlab.lattice import FACE_STEP

                nc = g.wrap_face((c[0] + FACE_STEP[d][0], c[1] + FACE_STEP[d][1]))
                assert step_crossed_edge(g, nc, opp) == e
                assert step_sign(g, nc, opp) == -s

    def test_crossing_sign_validates_edge(self):
        g = TORUS44
        e_wrong = make_edge(g, (2, 2), 1)
        with pytest.raises(LatticeError):
            crossing_sign(g, ((0, 0), (1, 0)), e_wrong)


class TestDualPath:
    def test_empty(self):
        p = dual_path(TORUS44, (1, 1), (1, 1))
        assert p.faces == ((1, 1),)
        assert p.crossed == ()

    def test_adjacent(self):
        p = dual_path(TORUS44, (0, 0), (1, 0))
        assert len(p.crossed) == 1

    def test_l_shape(self):
        g = LatticeGeometry("open-window", 6, 5)
        p = dual_path(g, (0, 0), (3, 2))
        assert len(p.crossed) == 5
        assert p.faces[:4] == ((0, 0), (1, 0), (2, 0), (3, 0))

    def test_reversal_negates_signs(self):
        g = LatticeGeometry("open-window", 6, 6)
        fwd = dual_path(g, (0, 1), (3, 4))
        rev = dual_path(g, (3, 4), (0, 1))
        assert rev.faces == tuple(reversed(fwd.faces))
        assert [e for e, _ in rev.crossed] == [e for e, _ in reversed(fwd.crossed)]
        assert [s for _, s in rev.crossed] == [-s for _, s in reversed(fwd.crossed)]

    def test_torus_minimal_representative(self):
        p = dual_path(TORUS44, (0, 0), (3, 0))
        assert len(p.crossed) == 1  # wraps westward instead of 3 east steps


class TestEnumeration:
    def test_plaquette(self):
        ms = enumerate_matchings(WINDOW22)
        assert len(ms) == 2

    def test_2x3_window(self):
        ms = enumerate_matchings(WINDOW23)
        assert len(ms) == 3

    def test_unique(self):
        ms = enumerate_matchings(LatticeGeometry("open-window", 4, 4))
        assert len(ms) == len(set(ms)) == 36

    def test_every_vertex_degree_one(self):
        for g in (TORUS44, WINDOW23, LatticeGeometry("cylinder", 4, 3)):
            for config in enumerate_matchings(g):
                covered = set()
                for e in config:
                    b, w = edge_endpoints(e, g)
                    assert b.x not in covered and w.x not in covered
                    covered.add(b.x)
                    covered.add(w.x)
                assert len(covered) == g.n_sites

    def test_cap(self):
        with pytest.raises(LatticeError):
            enumerate_matchings(LatticeGeometry("open-window", 8, 8))

    def test_weighted_sum_positive(self):
        ms = enumerate_matchings(TORUS44)
        z = sum(matching_weight(m, (1.0, 2.0, 0.5)) for m in ms)
        assert z > 0


class TestReferenceConfiguration:
    def test_torus_type1(self):
        config = reference_configuration(TORUS44, 1)
        assert len(config) == 8
        assert all(e.r == 1 for e in config)

    def test_torus_6x4_type3(self):
        config = reference_configuration(LatticeGeometry("torus", 6, 4), 3)
        assert len(config) == 12
        assert all(e.r == 3 for e in config)

    def test_open_window_incompatible(self):
        with pytest.raises(LatticeError):
            reference_configuration(WINDOW22, 1)


class TestHeights:
    def test_closed_loop_zero_sum(self):
        # loop around any interior vertex sums to zero for every matching
        g = LatticeGeometry("open-window", 4, 4)
        for start in ((0, 0), (1, 1), (0, 1)):
            loop = face_path(g, "ENWS", start)
            for config in enumerate_matchings(g):
                assert path_height_increment4(config, loop) == 0

    def test_closed_loops_on_torus(self):
        g = TORUS44
        rng = np.random.default_rng(0)
        matchings = enumerate_matchings(g)
        for directions in ("ENWS", "EENNWWSS", "ENENWSWS"):
            for config in rng.choice(len(matchings), size=6, replace=False):
                loop = face_path(g, directions, (1, 1))
                assert path_height_increment4(matchings[config], loop) == 0

    def test_path_independence(self):
        g = LatticeGeometry("open-window", 6, 6)
        config = DimerConfiguration(
            g, [edge_between(g, (i, j), (i + 1, j)) for i in (0, 2, 4) for j in range(6)]
        )
        a = face_path(g, "EENN", (0, 0))
        b = face_path(g, "NENE", (0, 0))
        c = face_path(g, "NNEE", (0, 0))
        vals = {path_height_increment4(config, p) for p in (a, b, c)}
        assert len(vals) == 1

    def test_brickwork_heights_two_periodic(self):
        g = LatticeGeometry("torus", 8, 8)
        config = reference_configuration(g, 1)
        hf = height_field(config, base=(0, 0))
        for c1 in range(4):
            for c2 in range(4):
                assert hf.height4((c1 + 2, c2)) - hf.height4((c1, c2)) == \
                    hf.height4((2, 0)) - hf.height4((0, 0))

    def test_brickwork_slope_steps(self):
        # all-type-1 brickwork: unit steps along the rotated axes change
        # the height by -1/2 and +1/2
        g = LatticeGeometry("torus", 8, 8)
        config = reference_configuration(g, 1)
        f0 = face_at_paper((0, 0))
        p1 = face_path(g, "ES", f0)  # rotated e1 step
        p2 = face_path(g, "EN", f0)  # rotated e2 step
        assert path_height_increment4(config, p1) == -2
        assert path_height_increment4(config, p2) == 2

    def test_plaquette_rotation_changes_height_by_one(self):
        g = LatticeGeometry("open-window", 4, 4)
        for config in enumerate_matchings(g):
            for c in g.faces():
                if face_pair_state(g, config, c) is None:
                    continue
                rotated = plaquette_rotate(config, c)
                h0 = height_field(config, base=(0, 0))
                h1 = height_field(rotated, base=(0, 0))
                if c == (0, 0):
                    continue  # base face height pinned to zero
                diff = h1.height4(c) - h0.height4(c)
                assert abs(diff) == 4
                others = [
                    f for f in g.faces()
                    if f != c and h1.height4(f) != h0.height4(f)
                ]
                assert not others
                break

    def test_winding_conserved_by_plaquette_rotation(self):
        g = TORUS44
        config = reference_configuration(g, 1)
        w0 = winding_numbers(config)
        for c in g.faces():
            if face_pair_state(g, config, c):
                rotated = plaquette_rotate(config, c)
                assert winding_numbers(rotated) == w0
                break

    def test_alignment_count(self):
        g = TORUS44
        # offset brickwork has no parallel pairs; columnar state has one
        # per face in alternate columns
        assert alignment_count(g, reference_configuration(g, 1)) == 0
        from dimerlab.lattice import columnar_configuration

        col = columnar_configuration(g, "h")
        assert alignment_count(g, col) == 8
        both = enumerate_matchings(WINDOW22)
        assert [alignment_count(WINDOW22, m) for m in both] == [1, 1]
