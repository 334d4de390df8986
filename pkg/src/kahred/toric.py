"""Toric reductions of flat C^n by a subtorus.

A subtorus G of rank r acts on C^n with weights given by the columns of an
r x n matrix L, so the G-moment map is t -> L t with t_i = |z_i|^2.  The
reduced space at level lambda is toric with moment polytope
Delta = {t >= 0, L t = lambda}, and its metric has the explicit potential
sum (t_i - c_i log t_i) pulled back along the level set.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from . import calculus as C
from . import expr as E
from .errors import (BoundaryPoint, DomainError, NotPolarized, NotRegularLevel,
                     ValidationError)
from .potential import InvariantPotential
from .reduction import ReductionProblem, base_coords, level_set_jets, reduced_metric, solve_level_set

TOL = 1e-10


@dataclass(frozen=True)
class ToricSpec:
    weights: np.ndarray  # L, r x n
    level: np.ndarray  # lambda in R^r
    base_point: np.ndarray  # c in R^n, L c = lambda, c > 0
    split: np.ndarray | None = None  # unimodular B with B L^T = [I_r; 0]

    def __post_init__(self):
        L = np.atleast_2d(np.asarray(self.weights, dtype=float))
        lam = np.atleast_1d(np.asarray(self.level, dtype=float))
        c = np.atleast_1d(np.asarray(self.base_point, dtype=float))
        r, n = L.shape
        if r > n:
            raise ValidationError(f"subtorus rank {r} exceeds n = {n}")
        if np.linalg.matrix_rank(L) != r:
            raise ValidationError("weight matrix must have full row rank")
        if lam.shape != (r,) or c.shape != (n,):
            raise ValidationError("level must have r entries and base point n entries")
        if np.any(c <= 0):
            raise ValidationError("base point must have positive coordinates")
        if np.max(np.abs(L @ c - lam)) > TOL:
            raise ValidationError("base point does not lie on the level: L c != lambda")
        object.__setattr__(self, "weights", L)
        object.__setattr__(self, "level", lam)
        object.__setattr__(self, "base_point", c)
        if self.split is not None:
            B = np.asarray(self.split, dtype=float)
            if B.shape != (n, n) or np.any(B != np.round(B)):
                raise ValidationError("split must be an integer n x n matrix")
            if abs(abs(np.linalg.det(B)) - 1.0) > 1e-9:
                raise ValidationError("split must be unimodular")
            target = np.vstack([np.eye(r), np.zeros((n - r, r))])
            if np.max(np.abs(B @ L.T - target)) > 1e-12:
                raise ValidationError("split must satisfy B L^T = [I; 0]")
            object.__setattr__(self, "split", B)

    @property
    def r(self) -> int:
        return self.weights.shape[0]

    @property
    def n(self) -> int:
        return self.weights.shape[1]


def polarization_check(spec: ToricSpec) -> np.ndarray:
    """xi with min_i alpha_i . xi = 1, or NotPolarized.

    Extreme rays of the closed dual cone are normals to spans of r - 1 weights,
    so summing every feasible candidate lands in the open cone when it is
    nonempty.
    """
    L = spec.weights
    r, n = L.shape
    cands = [np.eye(r)[k] for k in range(r)]
    for S in itertools.combinations(range(n), r - 1):
        if r == 1:
            break
        _, sv, vt = np.linalg.svd(L[:, list(S)].T)
        if sv[-1] > 1e-12 * max(1.0, sv[0]):
            cands.append(vt[-1])
    xi = np.zeros(r)
    for v in cands:
        for sgn in (1.0, -1.0):
            if np.all(sgn * v @ L >= -1e-12):
                xi += sgn * v
    vals = xi @ L
    if np.min(vals) <= 1e-12:
        raise NotPolarized("no direction pairs positively with every weight")
    return xi / np.min(vals)


def g_moment_map(spec: ToricSpec, t) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise DomainError("squared moduli must be nonnegative")
    return spec.weights @ t


@dataclass(frozen=True)
class DelzantSlice:
    vertices: np.ndarray
    active_sets: list
    regular: bool


def delzant_slice(spec: ToricSpec, level=None) -> DelzantSlice:
    L = spec.weights
    r, n = L.shape
    lam = spec.level if level is None else np.atleast_1d(np.asarray(level, dtype=float))
    polarization_check(spec)
    verts = {}
    for free in itertools.combinations(range(n), r):
        A = L[:, list(free)]
        if abs(np.linalg.det(A)) < 1e-12:
            continue
        t = np.zeros(n)
        t[list(free)] = np.linalg.solve(A, lam)
        if np.all(t >= -1e-12):
            t[np.abs(t) <= 1e-12] = 0.0
            verts.setdefault(tuple(np.round(t, 10)), t)
    if not verts:
        raise ValidationError(f"level {lam} gives an empty slice")
    keys = sorted(verts)
    V = np.array([verts[k] for k in keys])
    active = [tuple(int(i) for i in np.flatnonzero(v == 0.0)) for v in V]
    bad = [a for a in active if len(a) > n - r]
    if bad:
        raise NotRegularLevel(f"level {lam} meets the coordinate faces non-transversally at {bad[0]}")
    return DelzantSlice(V, active, True)


def facet_potential(spec: ToricSpec, t) -> float:
    """sum (t_i - c_i log t_i) with t restricted to the slice."""
    t = np.asarray(t, dtype=float)
    if np.any(t <= 0):
        raise BoundaryPoint("point lies on a facet of the slice")
    return float(np.sum(t - spec.base_point * np.log(t)))


# -- split coordinates and the cross-check ----------------------------------------


def _inverse_split(spec: ToricSpec) -> np.ndarray:
    if spec.split is None:
        raise ValidationError("toric cross-check needs a coordinate split")
    Binv = np.linalg.inv(spec.split)
    R = np.round(Binv)
    if np.max(np.abs(Binv - R)) > 1e-9:
        raise ValidationError("inverse split is not integral")
    return R.astype(int)


def split_potential(spec: ToricSpec) -> InvariantPotential:
    """Flat C^n in split coordinates: r fiber coordinates for G, n - r base monomials."""
    Binv = _inverse_split(spec)
    r, n = spec.r, spec.n
    terms = []
    for row in Binv:
        term = None
        lin = E.total([E.s(k + 1) if row[k] == 1 else float(row[k]) * E.s(k + 1)
                       for k in range(r) if row[k] != 0])
        if lin != E.Num(0.0):
            term = E.exp(lin)
        for j in range(n - r):
            e = int(row[r + j])
            if e:
                fac = E.abs2(j + 1) if e == 1 else E.Pow(E.abs2(j + 1), e)
                term = fac if term is None else term * fac
        terms.append(E.Num(1.0) if term is None else term)
    return InvariantPotential(r, n - r, E.total(terms), name="flat_split")


def reduction_problem(spec: ToricSpec) -> ReductionProblem:
    return ReductionProblem(split_potential(spec), tuple(spec.level))


def _log_moduli_jets(spec: ToricSpec, lj):
    """Jets of s_i = log |z_i|^2 over the base, from the implicit level-set jets."""
    Binv = _inverse_split(spec)
    r, n = spec.r, spec.n
    logw = []
    for j in range(n - r):
        x, y = lj.w[2 * j], lj.w[2 * j + 1]
        logw.append(C.log(x * x + y * y))
    coords = list(lj.s) + logw
    out = []
    for row in Binv:
        acc = C.constant(0.0, 2 * (n - r))
        for k, e in enumerate(row):
            if e:
                acc = acc + float(e) * coords[k]
        out.append(acc)
    return out


def reduced_moment_point(spec: ToricSpec, w, s_star=None) -> np.ndarray:
    """t = (|z_i|^2) of the level-set point over w; lies in the slice."""
    prob = reduction_problem(spec)
    if s_star is None:
        s_star = solve_level_set(prob, w)
    Binv = _inverse_split(spec)
    x = np.asarray(base_coords(w, prob.m))
    logw = np.log(x[0::2] ** 2 + x[1::2] ** 2)
    return np.exp(Binv @ np.concatenate([s_star, logw]))


def facet_metric(spec: ToricSpec, w, s_star=None) -> np.ndarray:
    """d dbar of the facet potential sum (t_i - c_i log t_i) pulled back to the base."""
    prob = reduction_problem(spec)
    lj = level_set_jets(prob, w, s_star)
    try:
        s = _log_moduli_jets(spec, lj)
    except DomainError:
        raise BoundaryPoint(f"base point {w} maps to the boundary of the slice") from None
    G = C.constant(0.0, 2 * prob.m)
    for si, ci in zip(s, spec.base_point):
        G = G + C.exp(si) - ci * si
    return lj.ddbar(G)


@dataclass
class CrosscheckReport:
    points: list
    reduction: list
    facet: list
    max_diff: float


def toric_crosscheck(spec: ToricSpec, base_grid) -> CrosscheckReport:
    prob = reduction_problem(spec)
    pts, red, fac = [], [], []
    worst = 0.0
    for w in base_grid:
        s_star = solve_level_set(prob, w)
        a = reduced_metric(prob, w, s_star=s_star)
        b = facet_metric(spec, w, s_star=s_star)
        worst = max(worst, float(np.max(np.abs(a - b))))
        pts.append(w)
        red.append(a)
        fac.append(b)
    return CrosscheckReport(pts, red, fac, worst)


# -- catalog ----------------------------------------------------------------------


def cp1_spec(lam: float = 1.0) -> ToricSpec:
    return ToricSpec([[1, 1]], [lam], [lam / 2, lam / 2], [[1, 0], [-1, 1]])


def cp2_spec(lam: float = 1.0) -> ToricSpec:
    return ToricSpec([[1, 1, 1]], [lam], [lam / 3] * 3,
                     [[1, 0, 0], [-1, 1, 0], [-1, 0, 1]])


def cp1xcp1_spec(lam=(1.0, 1.0)) -> ToricSpec:
    a, b = lam
    return ToricSpec([[1, 1, 0, 0], [0, 0, 1, 1]], [a, b], [a / 2, a / 2, b / 2, b / 2],
                     [[1, 0, 0, 0], [0, 0, 1, 0], [-1, 1, 0, 0], [0, 0, -1, 1]])
