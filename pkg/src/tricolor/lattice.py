"""Stacked triangular/honeycomb lattice for the tricolored gauge model.

Index conventions
-----------------
The stack has ``M`` measurement rounds. Round ``r`` holds one triangular
layer T_r followed by one honeycomb layer H_r, so the vertical order is
T_0, H_0, T_1, H_1, ..., H_{M-1}, with H_{M-1} wrapping onto T_0.

In-layer coordinates are ``(x, y)`` in ``[0, L)^2`` with lattice vectors
(1, 0) and (1/2, sqrt(3)/2). Triangular neighbours of (x, y) are the
offsets +-(1, 0), +-(0, 1), +-(1, -1). Vertex color is ``(x + 2y) % 3``.

Cell (x, y) owns two triangles:

* ``s = 0`` (up):   (x, y), (x+1, y), (x, y+1)
* ``s = 1`` (down): (x+1, y), (x, y+1), (x+1, y+1)

Each triangle is dual to one honeycomb vertex, so H_r has ``2 L^2`` sites.

Site ids (dense, ``3 L^2`` per round)::

    T(r, x, y)    = r * 3L^2 + x * L + y
    H(r, x, y, s) = r * 3L^2 + L^2 + 2 * (x * L + y) + s

Term ids: five-body terms first, then hexagons::

    five(r, x, y, s) = r * 2L^2 + 2 * (x * L + y) + s
    hex(r, x, y)     = N_5 + r * L^2 + x * L + y

A five-body term is the three T_r vertices of a triangle plus its dual
vertex in H_r (above) and in H_{r-1} (below). The hexagon ``hex(r, x, y)``
is the ring of six H_r vertices around T-vertex (x, y); its gauge
generator adds T(r, x, y) below and T(r+1, x, y) above.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

T_KIND = 0
H_KIND = 1
KIND_NAMES = {T_KIND: "T", H_KIND: "H"}
COLOR_NAMES = ("red", "green", "blue")

# offsets (dx, dy, s) of the six triangles around a vertex, in cyclic order
_HEX_RING = ((0, 0, 0), (-1, 0, 1), (-1, 0, 0), (-1, -1, 1), (0, -1, 0), (0, -1, 1))
_TRIANGLE_CORNERS = {0: ((0, 0), (1, 0), (0, 1)), 1: ((1, 0), (0, 1), (1, 1))}
_NEIGHBOURS = ((1, 0), (-1, 0), (0, 1), (0, -1), (1, -1), (-1, 1))


class LatticeError(ValueError):
    pass


@dataclass(frozen=True)
class LatticeSpec:
    L: int
    M: int
    degenerate_ok: bool = False

    def __post_init__(self):
        if not isinstance(self.L, (int, np.integer)) or self.L < 3 or self.L % 3 != 0:
            raise LatticeError(f"L must be a multiple of 3 (got L={self.L})")
        if self.M == 1 and self.degenerate_ok:
            return
        if not isinstance(self.M, (int, np.integer)) or self.M < 2 or self.M % 2 != 0:
            raise LatticeError(f"M must be an even number >= 2 (got M={self.M})")

    @property
    def n_sites(self) -> int:
        return 3 * self.L**2 * self.M


def _frozen(a):
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class LatticeGeometry:
    """Immutable site, term and incidence tables for one lattice.

    Arrays are read-only numpy arrays. ``incidence_ptr``/``incidence`` is a
    CSR layout: the terms containing site ``i`` (with multiplicity) are
    ``incidence[incidence_ptr[i]:incidence_ptr[i + 1]]``.
    """

    spec: LatticeSpec
    site_kind: np.ndarray
    site_round: np.ndarray
    site_x: np.ndarray
    site_y: np.ndarray
    site_sub: np.ndarray  # -1 for T sites
    site_color: np.ndarray  # -1 for H sites
    five_body_terms: np.ndarray  # (N_5, 5)
    hexagon_terms: np.ndarray  # (N_hex, 6)
    hexagon_color: np.ndarray
    incidence_ptr: np.ndarray
    incidence: np.ndarray
    gauge_generators: np.ndarray  # (N_hex, 8)
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def L(self) -> int:
        return self.spec.L

    @property
    def M(self) -> int:
        return self.spec.M

    @property
    def n_sites(self) -> int:
        return len(self.site_kind)

    @property
    def n_five(self) -> int:
        return len(self.five_body_terms)

    @property
    def n_hex(self) -> int:
        return len(self.hexagon_terms)

    @property
    def n_terms(self) -> int:
        return self.n_five + self.n_hex

    def term_sites(self, term: int) -> np.ndarray:
        if term < self.n_five:
            return self.five_body_terms[term]
        return self.hexagon_terms[term - self.n_five]

    def site_terms(self, site: int) -> np.ndarray:
        return self.incidence[self.incidence_ptr[site] : self.incidence_ptr[site + 1]]

    def t_site(self, r: int, x: int, y: int) -> int:
        L = self.L
        return (r % self.M) * 3 * L * L + (x % L) * L + (y % L)

    def h_site(self, r: int, x: int, y: int, s: int) -> int:
        L = self.L
        return (r % self.M) * 3 * L * L + L * L + 2 * ((x % L) * L + (y % L)) + s

    def term_matrix(self) -> sp.csr_matrix:
        """Sparse (terms x sites) matrix of multiplicities."""
        if "terms" not in self._cache:
            self._cache["terms"] = _multiplicity_matrix(
                [self.five_body_terms, self.hexagon_terms], self.n_sites
            )
        return self._cache["terms"]

    def generator_matrix(self) -> sp.csr_matrix:
        if "gens" not in self._cache:
            self._cache["gens"] = _multiplicity_matrix([self.gauge_generators], self.n_sites)
        return self._cache["gens"]


def _multiplicity_matrix(blocks, n_cols):
    rows, cols = [], []
    offset = 0
    for block in blocks:
        n, k = block.shape
        rows.append(np.repeat(np.arange(offset, offset + n), k))
        cols.append(block.ravel())
        offset += n
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    # duplicate (row, col) pairs are summed by the COO -> CSR conversion
    return sp.coo_matrix((np.ones(len(rows), dtype=np.int64), (rows, cols)), shape=(offset, n_cols)).tocsr()


def build_lattice(spec: LatticeSpec) -> LatticeGeometry:
    L, M = spec.L, spec.M
    per_round = 3 * L * L
    n_sites = per_round * M

    r, x, y = np.meshgrid(np.arange(M), np.arange(L), np.arange(L), indexing="ij")
    r, x, y = r.ravel(), x.ravel(), y.ravel()  # ordered by (r, x, y)

    site_kind = np.empty(n_sites, np.int8)
    site_round = np.empty(n_sites, np.int64)
    site_x = np.empty(n_sites, np.int64)
    site_y = np.empty(n_sites, np.int64)
    site_sub = np.empty(n_sites, np.int8)
    site_color = np.empty(n_sites, np.int8)

    def tid(rr, xx, yy):
        return (rr % M) * per_round + (xx % L) * L + (yy % L)

    def hid(rr, xx, yy, s):
        return (rr % M) * per_round + L * L + 2 * ((xx % L) * L + (yy % L)) + s

    t_ids = tid(r, x, y)
    site_kind[t_ids] = T_KIND
    site_round[t_ids] = r
    site_x[t_ids] = x
    site_y[t_ids] = y
    site_sub[t_ids] = -1
    site_color[t_ids] = (x + 2 * y) % 3
    for s in (0, 1):
        h_ids = hid(r, x, y, s)
        site_kind[h_ids] = H_KIND
        site_round[h_ids] = r
        site_x[h_ids] = x
        site_y[h_ids] = y
        site_sub[h_ids] = s
        site_color[h_ids] = -1

    # five-body terms, ordered by (r, x, y, s)
    five = np.empty((2 * L * L * M, 5), np.int64)
    for s in (0, 1):
        rows = 2 * (r * L * L + x * L + y) + s
        for c, (dx, dy) in enumerate(_TRIANGLE_CORNERS[s]):
            five[rows, c] = tid(r, x + dx, y + dy)
        five[rows, 3] = hid(r, x, y, s)
        five[rows, 4] = hid(r - 1, x, y, s)

    hexes = np.empty((L * L * M, 6), np.int64)
    gens = np.empty((L * L * M, 8), np.int64)
    for k, (dx, dy, s) in enumerate(_HEX_RING):
        hexes[:, k] = hid(r, x + dx, y + dy, s)
    gens[:, :6] = hexes
    gens[:, 6] = tid(r, x, y)
    gens[:, 7] = tid(r + 1, x, y)
    hex_color = ((x + 2 * y) % 3).astype(np.int8)

    n_five = len(five)
    flat_terms = np.concatenate([five.ravel(), hexes.ravel()])
    flat_owner = np.concatenate(
        [np.repeat(np.arange(n_five), 5), n_five + np.repeat(np.arange(len(hexes)), 6)]
    )
    order = np.lexsort((flat_owner, flat_terms))
    incidence = flat_owner[order]
    counts = np.bincount(flat_terms, minlength=n_sites)
    incidence_ptr = np.concatenate([[0], np.cumsum(counts)])

    return LatticeGeometry(
        spec=spec,
        site_kind=_frozen(site_kind),
        site_round=_frozen(site_round),
        site_x=_frozen(site_x),
        site_y=_frozen(site_y),
        site_sub=_frozen(site_sub),
        site_color=_frozen(site_color),
        five_body_terms=_frozen(five),
        hexagon_terms=_frozen(hexes),
        hexagon_color=_frozen(hex_color),
        incidence_ptr=_frozen(incidence_ptr.astype(np.int64)),
        incidence=_frozen(incidence.astype(np.int64)),
        gauge_generators=_frozen(gens),
    )


def wilson_plaquettes(g: LatticeGeometry) -> list[frozenset]:
    """Elementary horizontal Wilson loops, one per hexagon term."""
    return [frozenset(int(s) for s in h) for h in g.hexagon_terms]


# ---------------------------------------------------------------- validation


@dataclass
class GeometryReport:
    checks: list  # [(name, passed, message)]

    @property
    def ok(self) -> bool:
        return all(passed for _, passed, _ in self.checks)

    @property
    def first_failure(self) -> str | None:
        for name, passed, _ in self.checks:
            if not passed:
                return name
        return None

    def __str__(self):
        lines = [f"{'PASS' if ok else 'FAIL'} {name}: {msg}" for name, ok, msg in self.checks]
        return "\n".join(lines)


def _triangle_vertices(x, y, s, L):
    return {((x + dx) % L, (y + dy) % L) for dx, dy in _TRIANGLE_CORNERS[int(s)]}


def validate_geometry(g: LatticeGeometry) -> GeometryReport:
    """Check every structural invariant of ``g``; never raises."""
    checks = []

    def add(name, fn):
        try:
            ok, msg = fn()
        except Exception as exc:  # diagnostic only
            ok, msg = False, f"{type(exc).__name__}: {exc}"
        checks.append((name, bool(ok), msg))

    L, M = g.L, g.M
    is_t = g.site_kind == T_KIND
    is_h = g.site_kind == H_KIND
    inc_counts = np.diff(g.incidence_ptr)
    n5 = g.n_five

    def counts():
        want = (3 * L * L * M, 2 * L * L * M, L * L * M)
        got = (g.n_sites, g.n_five, g.n_hex)
        per_layer = (int(is_t.sum()), int(is_h.sum())) == (L * L * M, 2 * L * L * M)
        return got == want and per_layer, f"(N_sites, N_5, N_hex) = {got}, expected {want}"

    def degrees(kind, want5, wanthex):
        def check():
            sites = np.flatnonzero(g.site_kind == kind)
            bad = []
            for i in sites:
                terms = g.incidence[g.incidence_ptr[i] : g.incidence_ptr[i + 1]]
                d5 = int((terms < n5).sum())
                dh = len(terms) - d5
                if (d5, dh) != (want5, wanthex):
                    bad.append((int(i), d5, dh))
            if bad:
                i, d5, dh = bad[0]
                return False, f"{len(bad)} sites off; site {i} has degrees ({d5}, {dh})"
            return True, f"all {len(sites)} sites have degrees ({want5}, {wanthex})"

        return check

    def five_structure():
        for t, term in enumerate(g.five_body_terms):
            kinds = g.site_kind[term]
            if list(kinds) != [T_KIND] * 3 + [H_KIND] * 2:
                return False, f"five-body term {t} has site kinds {list(kinds)}"
            tv = {(int(g.site_x[i]), int(g.site_y[i])) for i in term[:3]}
            rounds = {int(g.site_round[i]) for i in term[:3]}
            if len(tv) != 3 or len(rounds) != 1:
                return False, f"five-body term {t} does not span one triangle"
            (rt,) = rounds
            for h, dr in ((term[3], 0), (term[4], -1)):
                if int(g.site_round[h]) != (rt + dr) % M:
                    return False, f"five-body term {t}: H vertex in wrong layer"
                if _triangle_vertices(g.site_x[h], g.site_y[h], g.site_sub[h], L) != tv:
                    return False, f"five-body term {t}: H vertex not dual to its triangle"
        return True, f"{n5} terms = triangle + dual H vertices above and below"

    def hex_structure():
        for k, term in enumerate(g.hexagon_terms):
            if not np.all(g.site_kind[term] == H_KIND) or len(set(term.tolist())) != 6:
                return False, f"hexagon {k} is not 6 distinct H sites"
            if len({int(g.site_round[i]) for i in term}) != 1:
                return False, f"hexagon {k} spans several layers"
            common = set.intersection(
                *(_triangle_vertices(g.site_x[i], g.site_y[i], g.site_sub[i], L) for i in term)
            )
            if len(common) != 1:
                return False, f"hexagon {k} has no unique center vertex"
        return True, f"{g.n_hex} hexagons of 6 H sites around one T vertex"

    def coloring():
        colors = g.site_color
        if np.any(colors[is_t] < 0) or np.any(colors[is_t] > 2):
            return False, "T vertex without a valid color"
        for t, term in enumerate(g.five_body_terms):
            c = colors[term[:3]]
            if len(set(c.tolist())) != 3:
                return False, f"triangle of five-body term {t} has colors {c.tolist()}"
        return True, "adjacent T vertices carry distinct colors"

    def hexagon_colors():
        for k, term in enumerate(g.hexagon_terms):
            (center,) = set.intersection(
                *(_triangle_vertices(g.site_x[i], g.site_y[i], g.site_sub[i], L) for i in term)
            )
            r = int(g.site_round[term[0]])
            c = g.site_color[g.t_site(r, *center)]
            if c != g.hexagon_color[k]:
                return False, f"hexagon {k} color {g.hexagon_color[k]} != center color {c}"
        return True, "hexagon color = color of T vertex at its center"

    def incidence_consistent():
        mat = g.term_matrix().tocsc()
        for i in range(g.n_sites):
            col = mat.getcol(i)
            want = sorted(np.repeat(col.indices, col.data).tolist())
            got = sorted(g.incidence[g.incidence_ptr[i] : g.incidence_ptr[i + 1]].tolist())
            if want != got:
                return False, f"incidence of site {i} disagrees with term tables"
        return True, "incidence lists match term tables"

    def gauge_even():
        overlap = (g.generator_matrix() @ g.term_matrix().T).toarray()
        odd = np.argwhere(overlap % 2 != 0)
        if len(odd):
            h, t = odd[0]
            return False, f"generator {h} overlaps term {t} in {overlap[h, t]} sites"
        return True, f"{overlap.shape[0]} generators x {overlap.shape[1]} terms, all even"

    def periodic():
        ok = all(
            np.all((a >= 0) & (a < g.n_sites))
            for a in (g.five_body_terms, g.hexagon_terms, g.gauge_generators)
        )
        return ok, "all term sites resolve under periodic wraparound"

    add("counts", counts)
    add("T site degree", degrees(T_KIND, 6, 0))
    add("H site degree", degrees(H_KIND, 2, 3))
    add("five-body structure", five_structure)
    add("hexagon structure", hex_structure)
    add("coloring", coloring)
    add("hexagon color", hexagon_colors)
    add("incidence consistency", incidence_consistent)
    add("gauge even overlap", gauge_even)
    add("periodic", periodic)
    return GeometryReport(checks)


def adjacent_t_sites(g: LatticeGeometry, site: int) -> list[int]:
    """In-layer triangular neighbours of a T site."""
    r, x, y = int(g.site_round[site]), int(g.site_x[site]), int(g.site_y[site])
    return [g.t_site(r, x + dx, y + dy) for dx, dy in _NEIGHBOURS]


# ------------------------------------------------------------------ text dump


def dump_geometry(g: LatticeGeometry, path) -> None:
    """Write the line-oriented debug dump (format v1, see README)."""
    with open(path, "w") as fh:
        fh.write(f"# tricolor-geometry v1 L={g.L} M={g.M}\n")
        for i in range(g.n_sites):
            kind = KIND_NAMES[int(g.site_kind[i])]
            sub = "-" if g.site_sub[i] < 0 else str(int(g.site_sub[i]))
            color = "-" if g.site_color[i] < 0 else COLOR_NAMES[int(g.site_color[i])]
            fh.write(
                f"site {i} {kind} {int(g.site_round[i])} {int(g.site_x[i])} "
                f"{int(g.site_y[i])} {sub} {color}\n"
            )
        for t, term in enumerate(g.five_body_terms):
            fh.write(f"term {t} five " + " ".join(map(str, term)) + "\n")
        for k, term in enumerate(g.hexagon_terms):
            color = COLOR_NAMES[int(g.hexagon_color[k])]
            fh.write(f"term {g.n_five + k} hex:{color} " + " ".join(map(str, term)) + "\n")


def load_geometry_dump(path) -> dict:
    """Parse a dump back into plain tables (used by validation tooling)."""
    sites, terms = [], []
    header = None
    with open(path) as fh:
        for line in fh:
            if line.startswith("#"):
                header = line[1:].strip()
                continue
            parts = line.split()
            if parts[0] == "site":
                sites.append(tuple(parts[1:]))
            elif parts[0] == "term":
                terms.append((int(parts[1]), parts[2], [int(p) for p in parts[3:]]))
    return {"header": header, "sites": sites, "terms": terms}
