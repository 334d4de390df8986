"""Torus-invariant Kähler potentials on (C*)^n x U.

A potential is stored as ``f(s, w) = rho(e^s, w)`` with ``s_i = log |z_i|^2``;
phases of ``z_i`` never appear.  Bodies are DSL expression trees, which keeps
potentials printable, picklable and closed under shifts, products and
trivialization changes.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from . import calculus as C
from . import expr as E
from .calculus import Jet2, Point
from .errors import DimensionMismatch, DomainError, NotKahler, ValidationError


@dataclass(frozen=True)
class InvariantPotential:
    n: int
    m: int
    body: E.Expr
    name: str = "potential"
    constants: Mapping[str, float] = field(default_factory=dict)
    s_bounds: tuple = ()  # optional (lo, hi) per fiber coordinate
    w_bounds: tuple = ()  # optional (lo, hi) per real base coordinate

    def __post_init__(self):
        E.check_dims(self.body, self.n, self.m, self.constants)
        object.__setattr__(self, "constants", dict(self.constants))

    def __call__(self, s, x, y):
        return E.evaluate(self.body, s, x, y, self.constants)

    def __hash__(self):
        return hash((self.n, self.m, self.body, self.name))

    @property
    def dim(self) -> int:
        return self.n + 2 * self.m

    def check_point(self, p: Point):
        if p.n != self.n or p.m != self.m:
            raise DimensionMismatch(
                f"point has (n, m) = ({p.n}, {p.m}), potential expects ({self.n}, {self.m})")
        for bounds, coords in ((self.s_bounds, p.s), (self.w_bounds, p.w)):
            for (lo, hi), c in zip(bounds, coords):
                v = C.real_value(c)
                if not lo <= v <= hi:
                    raise DomainError(f"coordinate {v} outside [{lo}, {hi}]")

    def value(self, p: Point) -> float:
        self.check_point(p)
        return float(C.call_field(self, list(p.coords), self.n))

    def text(self) -> str:
        return E.to_text(self.body)


# -- catalog --------------------------------------------------------------------


def flat(n: int, m: int = 0) -> InvariantPotential:
    """Euclidean C^(n+m): sum t_i + sum |w_a|^2."""
    body = E.total([E.t(i) for i in range(1, n + 1)] + [E.abs2(a) for a in range(1, m + 1)])
    return InvariantPotential(n, m, body, name=f"flat_C{n + m}")


def fubini_study(n: int, m: int = 0) -> InvariantPotential:
    """Fubini–Study chart log(1 + sum t_i + sum |w_a|^2) on CP^(n+m)."""
    inner = E.total([E.Num(1.0)] + [E.t(i) for i in range(1, n + 1)]
                    + [E.abs2(a) for a in range(1, m + 1)])
    return InvariantPotential(n, m, E.log(inner), name=f"fs_CP{n + m}")


def diagonal_trivialization(m: int = 1) -> InvariantPotential:
    """Flat C^(1+m) in the coordinates (z, z w_1, ..., z w_m): t (1 + sum |w|^2)."""
    inner = E.total([E.Num(1.0)] + [E.abs2(a) for a in range(1, m + 1)])
    return InvariantPotential(1, m, E.t(1) * inner, name=f"diag_C{1 + m}")


def product(p1: InvariantPotential, p2: InvariantPotential) -> InvariantPotential:
    """Sum of potentials on the product; fiber and base indices of p2 come last."""
    clash = set(p1.constants) & set(p2.constants)
    if any(p1.constants[k] != p2.constants[k] for k in clash):
        raise ValidationError(f"conflicting constants {sorted(clash)}")
    body = p1.body + E.shift_indices(p2.body, p1.n, p1.m)
    return InvariantPotential(
        p1.n + p2.n, p1.m + p2.m, body, name=f"{p1.name}x{p2.name}",
        constants={**p1.constants, **p2.constants},
        s_bounds=_join_bounds(p1.s_bounds, p1.n, p2.s_bounds, p2.n),
        w_bounds=_join_bounds(p1.w_bounds, 2 * p1.m, p2.w_bounds, 2 * p2.m))


def _join_bounds(b1, k1, b2, k2):
    if not b1 and not b2:
        return ()
    inf = (-math.inf, math.inf)
    return tuple(b1 or [inf] * k1) + tuple(b2 or [inf] * k2)


def from_expression(text: str, n: int, m: int, constants: Mapping[str, float] = None,
                    name: str = "expr") -> InvariantPotential:
    constants = dict(constants or {})
    body = E.parse_expr(text, constants)
    return InvariantPotential(n, m, body, name=name, constants=constants)


# -- shifts and trivializations -----------------------------------------------


@dataclass(frozen=True)
class ShiftSpec:
    """rho -> rho + sum lambda_i s_i + Re(holomorphic function of w)."""

    lambda_shift: tuple
    pluriharmonic_part: E.Expr = E.Num(0.0)

    def validate(self, m: int, constants=None, points: int = 10, seed: int = 7, tol: float = 1e-9):
        syms = E.symbols(self.pluriharmonic_part)
        if any(k in ("s", "t") for k, _ in syms):
            raise ValidationError("pluriharmonic part must not depend on the fiber")
        pot = InvariantPotential(0, m, self.pluriharmonic_part, constants=constants or {})
        rng = np.random.default_rng(seed)
        for _ in range(points if m else 0):
            p = Point((), tuple(rng.uniform(-1, 1, 2 * m)))
            H = C.wirtinger_hessian(C.eval_jet2(pot, p), 0, m)[0]
            if np.max(np.abs(H)) > tol:
                raise ValidationError("pluriharmonic part has non-vanishing d dbar")


def apply_shift(pot: InvariantPotential, shift: ShiftSpec) -> InvariantPotential:
    lam = tuple(float(v) for v in shift.lambda_shift)
    if len(lam) != pot.n:
        raise DimensionMismatch(f"shift has {len(lam)} entries, fiber rank is {pot.n}")
    shift.validate(pot.m, pot.constants)
    terms = [pot.body]
    terms += [l * E.s(i + 1) for i, l in enumerate(lam) if l != 0.0]
    if shift.pluriharmonic_part != E.Num(0.0):
        terms.append(shift.pluriharmonic_part)
    return InvariantPotential(pot.n, pot.m, E.total(terms), name=pot.name + "+shift",
                              constants=pot.constants, s_bounds=pot.s_bounds,
                              w_bounds=pot.w_bounds)


def change_trivialization(pot: InvariantPotential, log_abs2_a: Sequence[E.Expr]) -> InvariantPotential:
    """Same potential in the trivialization z_i' = a_i(w) z_i.

    ``log_abs2_a[i]`` is ``log |a_i(w)|^2`` as an expression in w; the new
    fiber-log coordinate is ``s_i' = s_i + log |a_i(w)|^2``.
    """
    if len(log_abs2_a) != pot.n:
        raise DimensionMismatch("one factor per fiber coordinate is required")
    mapping = {i + 1: E.s(i + 1) - e for i, e in enumerate(log_abs2_a)}
    return InvariantPotential(pot.n, pot.m, E.substitute_s(pot.body, mapping),
                              name=pot.name + "'", constants=pot.constants)


# -- geometry -------------------------------------------------------------------


def moment_map(pot: InvariantPotential, p: Point) -> np.ndarray:
    return np.array(C.eval_jet2(pot, p).grad[:pot.n], dtype=float)


def z_block_scale(s, n: int, m: int) -> np.ndarray:
    """Factors e^(-s_i/2) that turn s-derivatives into z-derivatives (phases fixed to 1)."""
    scale = np.ones(n + m)
    scale[:n] = np.exp(-0.5 * np.asarray([C.real_value(v) for v in s], dtype=float))
    return scale


def complex_hessian_from_jet(j: Jet2, p: Point) -> np.ndarray:
    """d dbar of an invariant function in (z, w) coordinates, from its jet at p."""
    n, m = p.n, p.m
    M = C.complex_hessian(j, n, m)
    scale = z_block_scale(p.s, n, m)
    return M * np.outer(scale, scale)


def full_complex_hessian(pot: InvariantPotential, p: Point) -> np.ndarray:
    return complex_hessian_from_jet(C.eval_jet2(pot, p), p)


def ricci_potential(pot: InvariantPotential, p: Point) -> float:
    """h = -log det of the full complex Hessian."""
    H = full_complex_hessian(pot, p)
    sign, ld = np.linalg.slogdet(H)
    if sign.real <= 0 or not is_kahler_matrix(H):
        raise NotKahler(f"complex Hessian is not positive definite at {p}")
    return -float(ld)


def is_kahler_matrix(H) -> bool:
    return C.is_positive_definite(H, 1e-12) if len(H) else True


def ricci_jet(pot: InvariantPotential, p: Point) -> Jet2:
    """Jet of the Ricci potential h over (s, Re w, Im w) at p.

    Uses nested jets: the Hessian of f is computed with coefficients that are
    themselves jets, so h comes out with exact first and second derivatives.
    """
    pot.check_point(p)
    n, m = pot.n, pot.m
    inner = C.seed([float(v) for v in p.coords])
    J = C.eval_jet2(pot, Point(inner[:n], inner[n:]))
    re, im = C.wirtinger_blocks(J.hess, n, m)
    ld = C.logdet_hermitian(re, im)
    h = C.constant(0.0, len(inner))
    for v in inner[:n]:
        h = h + v
    return h - ld


def orbit_volume_density(pot: InvariantPotential, p: Point) -> float:
    """2^n |z_1|^2...|z_n|^2 det(d2 rho / dz_i dzbar_j) = 2^n det(d2 f / ds ds)."""
    j = C.eval_jet2(pot, p)
    fss = np.asarray(j.hess, dtype=float)[:pot.n, :pot.n]
    if pot.n and not C.is_positive_definite(fss, 1e-12):
        raise NotKahler("fiber block is not positive definite")
    return float(2.0 ** pot.n * (np.linalg.det(fss) if pot.n else 1.0))


def generator_divergence(pot: InvariantPotential, p: Point, i: int) -> float:
    """div Z_i = Z_i h + 1 with Z_i = z_i d/dz_i acting as d/ds_i."""
    return float(C.real_value(ricci_jet(pot, p).grad[i])) + 1.0


@dataclass
class SpshReport:
    min_eigenvalues: list
    failures: list

    @property
    def passed(self) -> bool:
        return not self.failures


def spsh_check(pot: InvariantPotential, points: Sequence[Point]) -> SpshReport:
    """Smallest eigenvalue of the complex Hessian at each point; failures by index."""
    mins, fails = [], []
    for k, p in enumerate(points):
        H = full_complex_hessian(pot, p)
        lo = float(np.linalg.eigvalsh(H)[0]) if len(H) else math.inf
        mins.append(lo)
        # relative pivot floor: positivity is a property, not a conditioning bound
        floor = len(H) * np.finfo(float).eps * float(np.max(np.abs(H))) if len(H) else 0.0
        if len(H) and not C.is_positive_definite(H, floor):
            fails.append(k)
    return SpshReport(mins, fails)
