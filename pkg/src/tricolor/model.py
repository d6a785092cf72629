"""Hamiltonian, quenched disorder and gauge transformations.

H(sigma) = -J sum_five gamma prod(sigma) - K sum_hex gamma prod(sigma)

Products run over term multisets, so a spin listed twice in a term (the
degenerate M=1 stacking) squares away.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .lattice import LatticeGeometry, LatticeSpec

DISORDER_FORMAT = "tricolor-disorder v1"


class DomainError(ValueError):
    pass


@dataclass(frozen=True)
class CouplingSet:
    J: float = 1.0
    K: float = 1.0

    def __post_init__(self):
        if not (self.J > 0 and self.K > 0):
            raise ValueError(f"couplings must be positive, got J={self.J}, K={self.K}")


@dataclass(frozen=True)
class NoiseParameters:
    p: float
    q: float | None = None

    def __post_init__(self):
        if self.q is None:
            object.__setattr__(self, "q", self.p)
        for name in ("p", "q"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")


@dataclass(frozen=True, eq=False)
class DisorderRealization:
    five_body_signs: np.ndarray  # int8, +-1
    hexagon_signs: np.ndarray
    seed: object = None
    noise: NoiseParameters | None = None
    spec: LatticeSpec | None = None

    @property
    def signs(self) -> np.ndarray:
        """All term signs, five-body terms first (term-id order)."""
        return np.concatenate([self.five_body_signs, self.hexagon_signs])

    def __eq__(self, other):
        return (
            isinstance(other, DisorderRealization)
            and np.array_equal(self.five_body_signs, other.five_body_signs)
            and np.array_equal(self.hexagon_signs, other.hexagon_signs)
        )


def clean_disorder(g: LatticeGeometry) -> DisorderRealization:
    return DisorderRealization(
        np.ones(g.n_five, np.int8), np.ones(g.n_hex, np.int8), seed=None,
        noise=NoiseParameters(0.0), spec=g.spec,
    )


def sample_disorder(g: LatticeGeometry, noise: NoiseParameters, seed) -> DisorderRealization:
    """Draw quenched signs: -1 with probability p (five-body) and q (hexagon).

    ``seed`` is anything ``numpy.random.default_rng`` accepts; the same seed
    always reproduces the same realization. Five-body uniforms are drawn
    before hexagon uniforms from a single PCG64 stream.
    """
    rng = np.random.default_rng(seed)
    u5 = rng.random(g.n_five)
    uh = rng.random(g.n_hex)
    five = np.where(u5 < noise.p, -1, 1).astype(np.int8)
    hexa = np.where(uh < noise.q, -1, 1).astype(np.int8)
    five.setflags(write=False)
    hexa.setflags(write=False)
    return DisorderRealization(five, hexa, seed=_seed_repr(seed), noise=noise, spec=g.spec)


def _seed_repr(seed):
    if isinstance(seed, np.random.SeedSequence):
        return {"entropy": seed.entropy, "spawn_key": list(seed.spawn_key)}
    return seed


def _check_shapes(g, gamma, sigma):
    if sigma is not None and np.shape(sigma) != (g.n_sites,):
        raise AssertionError(f"spin configuration has shape {np.shape(sigma)}, expected ({g.n_sites},)")
    if gamma is not None and (
        len(gamma.five_body_signs) != g.n_five or len(gamma.hexagon_signs) != g.n_hex
    ):
        raise AssertionError("disorder realization does not match the geometry")


def term_sums(g: LatticeGeometry, gamma: DisorderRealization, sigma) -> tuple[int, int]:
    """Signed sums (sum gamma*prod) over five-body terms and over hexagons."""
    sigma = np.asarray(sigma, dtype=np.int64)
    s5 = int(np.dot(gamma.five_body_signs.astype(np.int64), sigma[g.five_body_terms].prod(axis=1)))
    sh = int(np.dot(gamma.hexagon_signs.astype(np.int64), sigma[g.hexagon_terms].prod(axis=1)))
    return s5, sh


def energy(g: LatticeGeometry, gamma: DisorderRealization, c: CouplingSet, sigma) -> float:
    _check_shapes(g, gamma, sigma)
    s5, sh = term_sums(g, gamma, sigma)
    return -c.J * s5 - c.K * sh


def delta_energy(g: LatticeGeometry, gamma: DisorderRealization, c: CouplingSet, sigma, site: int) -> float:
    """E(sigma with ``site`` flipped) - E(sigma), from incident terms only."""
    if not 0 <= site < g.n_sites:
        raise AssertionError(f"site index {site} out of range [0, {g.n_sites})")
    sigma = np.asarray(sigma, dtype=np.int64)
    terms, mult = np.unique(g.site_terms(site), return_counts=True)
    terms = terms[mult % 2 == 1]
    signs = gamma.signs
    de = 0.0
    for t in terms:
        w = c.J if t < g.n_five else c.K
        de += 2.0 * w * signs[t] * sigma[g.term_sites(t)].prod()
    return de


def apply_gauge(sigma, generator, out=None) -> np.ndarray:
    """Flip every site of ``generator`` (a multiset; duplicates cancel).

    Returns a new array unless ``out`` is given, in which case ``out`` is
    updated in place and returned.
    """
    res = np.array(sigma, copy=True) if out is None else out
    if out is not None and out is not sigma:
        res[...] = sigma
    np.multiply.at(res, np.asarray(generator), -1)
    return res


def nishimori_temperature(p, J: float = 1.0):
    """Temperature with exp(-2J/T) = p / (1 - p), for 0 < p < 1/2."""
    arr = np.asarray(p, dtype=float)
    if np.any(~((arr > 0) & (arr < 0.5))):
        raise DomainError(f"Nishimori temperature needs 0 < p < 1/2, got p={p}")
    t = 2.0 * J / np.log((1.0 - arr) / arr)
    return float(t) if t.ndim == 0 else t


def nishimori_p(T, J: float = 1.0) -> float:
    """Inverse of :func:`nishimori_temperature`."""
    x = math.exp(-2.0 * J / T)
    return x / (1.0 + x)


# ------------------------------------------------------------- flat system


@dataclass(frozen=True, eq=False)
class Interactions:
    """Generic flat term system consumed by the numba kernels.

    ``term_sites`` is padded with -1 to ``(n_terms, width)``. A term's value
    is ``sign * prod(sigma over its multiset)``; its energy is
    ``-weight * value``. ``flip_terms`` lists, per site, the terms in which
    the site appears an odd number of times (only those change on a flip).
    ``loops`` are raw spin products averaged into the Wilson observable.
    """

    n_sites: int
    term_sites: np.ndarray
    term_size: np.ndarray
    term_sign: np.ndarray  # int8
    term_weight: np.ndarray  # float64
    term_class: np.ndarray  # 0 = five-body / J, 1 = hexagon / K
    flip_ptr: np.ndarray
    flip_terms: np.ndarray
    loops: np.ndarray  # (n_loops, width), may have zero rows
    meta: dict = field(default_factory=dict)

    @property
    def n_terms(self) -> int:
        return len(self.term_sign)

    @property
    def n_loops(self) -> int:
        return len(self.loops)


def make_interactions(n_sites, terms, signs, weights, classes=None, loops=()) -> Interactions:
    """Build an :class:`Interactions` from python lists of site multisets."""
    n_terms = len(terms)
    width = max([len(t) for t in terms] + [len(lp) for lp in loops] + [1])
    term_sites = np.full((n_terms, width), -1, np.int64)
    term_size = np.zeros(n_terms, np.int64)
    for k, t in enumerate(terms):
        term_sites[k, : len(t)] = t
        term_size[k] = len(t)
    flips = [[] for _ in range(n_sites)]
    for k, t in enumerate(terms):
        sites, mult = np.unique(np.asarray(t, dtype=np.int64), return_counts=True)
        for s in sites[mult % 2 == 1]:
            flips[int(s)].append(k)
    flip_ptr = np.zeros(n_sites + 1, np.int64)
    flip_ptr[1:] = np.cumsum([len(f) for f in flips])
    flip_terms = np.array([k for f in flips for k in f], dtype=np.int64)
    loop_arr = np.full((len(loops), width), -1, np.int64)
    for k, lp in enumerate(loops):
        loop_arr[k, : len(lp)] = lp
    if classes is None:
        classes = np.zeros(n_terms, np.int8)
    return Interactions(
        n_sites=int(n_sites),
        term_sites=term_sites,
        term_size=term_size,
        term_sign=np.asarray(signs, dtype=np.int8).copy(),
        term_weight=np.asarray(weights, dtype=np.float64).copy(),
        term_class=np.asarray(classes, dtype=np.int8).copy(),
        flip_ptr=flip_ptr,
        flip_terms=flip_terms,
        loops=loop_arr,
    )


def lattice_interactions(g: LatticeGeometry, gamma: DisorderRealization, c: CouplingSet) -> Interactions:
    _check_shapes(g, gamma, None)
    terms = [t for t in g.five_body_terms.tolist()] + [t for t in g.hexagon_terms.tolist()]
    weights = np.concatenate([np.full(g.n_five, c.J), np.full(g.n_hex, c.K)])
    classes = np.concatenate([np.zeros(g.n_five, np.int8), np.ones(g.n_hex, np.int8)])
    inter = make_interactions(g.n_sites, terms, gamma.signs, weights, classes, g.hexagon_terms.tolist())
    inter.meta.update(L=g.L, M=g.M, J=c.J, K=c.K)
    return inter


# ------------------------------------------------------------ serialization


def write_disorder(gamma: DisorderRealization, path) -> None:
    """Text format: header lines starting with '#', then ``term_id sign``."""
    spec = gamma.spec
    with open(path, "w") as fh:
        fh.write(f"# {DISORDER_FORMAT}\n")
        fh.write(f"# seed {json.dumps(gamma.seed, sort_keys=True)}\n")
        if spec is not None:
            fh.write(f"# spec L={spec.L} M={spec.M} degenerate_ok={int(spec.degenerate_ok)}\n")
        if gamma.noise is not None:
            fh.write(f"# noise p={gamma.noise.p!r} q={gamma.noise.q!r}\n")
        fh.write(f"# counts n_five={len(gamma.five_body_signs)} n_hex={len(gamma.hexagon_signs)}\n")
        for t, s in enumerate(gamma.signs):
            fh.write(f"{t} {int(s)}\n")


def read_disorder(path) -> DisorderRealization:
    header = {}
    signs = []
    with open(path) as fh:
        first = fh.readline().strip()
        if first != f"# {DISORDER_FORMAT}":
            raise ValueError(f"{path}: not a {DISORDER_FORMAT} file")
        for line in fh:
            if line.startswith("#"):
                key, _, rest = line[1:].strip().partition(" ")
                header[key] = rest
                continue
            t, s = line.split()
            if int(t) != len(signs):
                raise ValueError(f"{path}: term ids must be dense and ordered (at {t})")
            signs.append(int(s))
    kv = dict(item.split("=") for item in header["counts"].split())
    n5 = int(kv["n_five"])
    spec = None
    if "spec" in header:
        sv = dict(item.split("=") for item in header["spec"].split())
        spec = LatticeSpec(int(sv["L"]), int(sv["M"]), bool(int(sv["degenerate_ok"])))
    noise = None
    if "noise" in header:
        nv = dict(item.split("=") for item in header["noise"].split())
        noise = NoiseParameters(float(nv["p"]), float(nv["q"]))
    signs = np.array(signs, dtype=np.int8)
    seed = json.loads(header["seed"])
    return DisorderRealization(signs[:n5].copy(), signs[n5:].copy(), seed=seed, noise=noise, spec=spec)
