import dataclasses
import time
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, strategies as st

from tricolor.lattice import (H_KIND, T_KIND, LatticeError, LatticeSpec, adjacent_t_sites, build_lattice,
                              dump_geometry, load_geometry_dump, validate_geometry, wilson_plaquettes)


def naive_terms(L, M):
    """Independent construction by coordinates: keys instead of dense ids."""
    def tri(x, y, s):
        corners = [(0, 0), (1, 0), (0, 1)] if s == 0 else [(1, 0), (0, 1), (1, 1)]
        return frozenset(((x + dx) % L, (y + dy) % L) for dx, dy in corners)

    triangles = {(x, y, s): tri(x, y, s) for x in range(L) for y in range(L) for s in (0, 1)}
    five, hexes = [], []
    for r in range(M):
        for (x, y, s), verts in triangles.items():
            key = [("T", r) + v for v in sorted(verts)]
            key += [("H", r, x, y, s), ("H", (r - 1) % M, x, y, s)]
            five.append(Counter(key))
        for vx in range(L):
            for vy in range(L):
                ring = [("H", r) + c for c, verts in triangles.items() if (vx, vy) in verts]
                hexes.append(Counter(ring))
    return five, hexes


def site_key(g, i):
    if g.site_kind[i] == T_KIND:
        return ("T", int(g.site_round[i]), int(g.site_x[i]), int(g.site_y[i]))
    return ("H", int(g.site_round[i]), int(g.site_x[i]), int(g.site_y[i]), int(g.site_sub[i]))


@pytest.mark.parametrize("L,M,deg,want", [
    (6, 6, False, (648, 432, 216)),
    (3, 2, False, (54, 36, 18)),
    (3, 1, True, (27, 18, 9)),
    (9, 8, False, (1944, 1296, 648)),
])
def test_counts(L, M, deg, want):
    g = build_lattice(LatticeSpec(L, M, degenerate_ok=deg))
    assert (g.n_sites, g.n_five, g.n_hex) == want


@pytest.mark.parametrize("L,M", [(3, 2), (6, 2), (3, 4), (6, 6)])
def test_terms_match_coordinate_construction(L, M):
    g = build_lattice(LatticeSpec(L, M))
    five, hexes = naive_terms(L, M)
    got5 = sorted(sorted(Counter(site_key(g, i) for i in t).items()) for t in g.five_body_terms)
    want5 = sorted(sorted(c.items()) for c in five)
    assert got5 == want5
    goth = sorted(sorted(Counter(site_key(g, i) for i in t).items()) for t in g.hexagon_terms)
    wanth = sorted(sorted(c.items()) for c in hexes)
    assert goth == wanth


def test_degenerate_terms_have_doubled_h_site(g31):
    for t in g31.five_body_terms:
        counts = Counter(t.tolist())
        h = [s for s in counts if g31.site_kind[s] == H_KIND]
        assert len(h) == 1 and counts[h[0]] == 2


@pytest.mark.parametrize("L", [3, 6, 9])
@pytest.mark.parametrize("M", [2, 4, 6])
def test_degrees_exhaustive(L, M):
    g = build_lattice(LatticeSpec(L, M))
    n5 = g.n_five
    for i in range(g.n_sites):
        terms = g.site_terms(i)
        d = (int((terms < n5).sum()), int((terms >= n5).sum()))
        assert d == ((6, 0) if g.site_kind[i] == T_KIND else (2, 3))


def test_acceptance_structure_fast():
    t0 = time.perf_counter()
    g = build_lattice(LatticeSpec(6, 6))
    rep = validate_geometry(g)
    assert time.perf_counter() - t0 < 5.0
    assert rep.ok, str(rep)


@pytest.mark.parametrize("L,M,deg", [(3, 2, False), (6, 6, False), (9, 8, False), (3, 1, True), (6, 4, False)])
def test_validate_passes(L, M, deg):
    rep = validate_geometry(build_lattice(LatticeSpec(L, M, degenerate_ok=deg)))
    assert rep.ok, str(rep)
    assert rep.first_failure is None


@pytest.mark.parametrize("L,M,deg,msg", [
    (4, 2, False, "L must be a multiple of 3"),
    (0, 2, False, "L must be a multiple of 3"),
    (7, 6, False, "L must be a multiple of 3"),
    (3, 3, False, "M must be an even number >= 2"),
    (3, 1, False, "M must be an even number >= 2"),
    (3, 0, True, "M must be an even number >= 2"),
    (3, 3, True, "M must be an even number >= 2"),
])
def test_spec_rejects(L, M, deg, msg):
    with pytest.raises(LatticeError, match=msg):
        LatticeSpec(L, M, degenerate_ok=deg)


def test_deleted_incidence_entry_fails_h_degree(g32):
    i = int(np.flatnonzero(g32.site_kind == H_KIND)[0])
    ptr = g32.incidence_ptr.copy()
    inc = np.delete(g32.incidence, ptr[i])
    ptr[i + 1 :] -= 1
    bad = dataclasses.replace(g32, incidence_ptr=ptr, incidence=inc, _cache={})
    rep = validate_geometry(bad)
    assert rep.first_failure == "H site degree"


def test_recolored_neighbours_fail_coloring(g32):
    t = int(np.flatnonzero(g32.site_kind == T_KIND)[0])
    nb = adjacent_t_sites(g32, t)[0]
    colors = g32.site_color.copy()
    colors[nb] = colors[t]
    bad = dataclasses.replace(g32, site_color=colors, _cache={})
    rep = validate_geometry(bad)
    assert rep.first_failure == "coloring"


def test_coloring_proper_on_neighbours(g66):
    for t in np.flatnonzero(g66.site_kind == T_KIND):
        for nb in adjacent_t_sites(g66, t):
            assert g66.site_color[nb] != g66.site_color[t]


def test_gauge_generators_even_overlap_exhaustive(g66):
    overlap = (g66.generator_matrix() @ g66.term_matrix().T).toarray()
    assert overlap.shape == (216, 648)
    assert np.all(overlap % 2 == 0)


def test_generator_shape(g66):
    for k, gen in enumerate(g66.gauge_generators):
        kinds = Counter(g66.site_kind[gen].tolist())
        assert kinds == {H_KIND: 6, T_KIND: 2}
        assert set(gen[:6].tolist()) == set(g66.hexagon_terms[k].tolist())


def test_wilson_plaquettes(g32):
    plaq = wilson_plaquettes(g32)
    assert len(plaq) == 18
    assert all(len(p) == 6 for p in plaq)
    for p in plaq:
        assert all(g32.site_kind[s] == H_KIND for s in p)
        assert len({int(g32.site_round[s]) for s in p}) == 1
    per_site = Counter(s for p in plaq for s in p)
    assert set(per_site.values()) == {3}
    assert len(per_site) == 2 * 9 * 2


def test_deterministic_rebuild():
    a = build_lattice(LatticeSpec(6, 4))
    b = build_lattice(LatticeSpec(6, 4))
    for name in ("five_body_terms", "hexagon_terms", "incidence", "gauge_generators", "site_color"):
        assert np.array_equal(getattr(a, name), getattr(b, name))


def test_arrays_read_only(g32):
    with pytest.raises(ValueError):
        g32.five_body_terms[0, 0] = 1


def test_index_formulas(g66):
    L = 6
    assert g66.t_site(2, 3, 4) == 2 * 3 * L * L + 3 * L + 4
    assert g66.h_site(1, 2, 5, 1) == 1 * 3 * L * L + L * L + 2 * (2 * L + 5) + 1
    assert g66.t_site(0, L, -1) == g66.t_site(0, 0, L - 1)


def test_dump_roundtrip(tmp_path, g32):
    path = tmp_path / "geom.txt"
    dump_geometry(g32, path)
    d = load_geometry_dump(path)
    assert d["header"] == "tricolor-geometry v1 L=3 M=2"
    assert len(d["sites"]) == g32.n_sites
    assert len(d["terms"]) == g32.n_terms
    tid, kind, sites = d["terms"][g32.n_five]
    assert kind.startswith("hex:")
    assert sites == g32.hexagon_terms[0].tolist()


@given(L=st.sampled_from([3, 6, 9]), M=st.sampled_from([2, 4, 6]), data=st.data())
def test_site_term_membership_consistent(L, M, data):
    g = build_lattice(LatticeSpec(L, M))
    i = data.draw(st.integers(0, g.n_sites - 1))
    for t in set(g.site_terms(i).tolist()):
        mult = int((g.term_sites(t) == i).sum())
        assert mult == int((g.site_terms(i) == t).sum())
