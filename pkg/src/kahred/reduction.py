"""Kähler reduction of a torus-invariant potential at a level lambda.

On the level set ``d f / d s = lambda`` the reduced potential is
``g(s*(w), w)`` with ``g = f - lambda . s``.  The reduced metric comes out
two independent ways: a Schur complement of the s/w Hessian of ``g``, and the
exact w-Hessian of ``g(s*(w), w)``.  The latter uses jets of the implicit
function ``s*(w)``, obtained by running two Newton steps in jet arithmetic
from the converged float solution (each step doubles the order of accuracy).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import calculus as C
from . import potential as P
from .calculus import Jet2, Point
from .errors import DimensionMismatch, DomainError, NotKahler, StabilityViolation

NEWTON_TOL = 1e-12
NEWTON_MAX_ITER = 200
DIVERGENCE_BOUND = 1e3
MAX_STEP = 50.0
ARMIJO = 1e-4
RUNAWAY = 50.0


@dataclass(frozen=True)
class ReductionProblem:
    pot: P.InvariantPotential
    level: tuple

    def __post_init__(self):
        level = tuple(float(v) for v in np.atleast_1d(self.level)) if self.pot.n else ()
        if len(level) != self.pot.n:
            raise DimensionMismatch(f"level has {len(level)} entries, fiber rank is {self.pot.n}")
        object.__setattr__(self, "level", level)

    @property
    def n(self) -> int:
        return self.pot.n

    @property
    def m(self) -> int:
        return self.pot.m

    def __call__(self, s, x, y):
        out = self.pot(s, x, y)
        for lam, si in zip(self.level, s):
            if lam != 0.0:
                out = out - si * lam
        return out

    def check_point(self, p):
        self.pot.check_point(p)

    def point(self, s, w) -> Point:
        return Point(tuple(s), base_coords(w, self.m))


def base_coords(w, m: int) -> tuple:
    """Interleaved (Re, Im) reals for a complex base point of dimension m."""
    if isinstance(w, Point):
        return w.w
    w = np.atleast_1d(np.asarray(w, dtype=complex)) if m else np.zeros(0, dtype=complex)
    if w.shape != (m,):
        raise DimensionMismatch(f"base point must have {m} complex entries")
    return tuple(float(v) for c in w for v in (c.real, c.imag))


def hermitian(M) -> np.ndarray:
    M = np.asarray(M, dtype=complex)
    return 0.5 * (M + M.conj().T)


# -- level-set solve ------------------------------------------------------------


def solve_level_set(prob: ReductionProblem, w, s0=None, tol: float = NEWTON_TOL,
                    max_iter: int = NEWTON_MAX_ITER, trace: list | None = None) -> np.ndarray:
    """Minimize the strictly convex ``g(., w)`` by damped Newton.

    Returns ``s*`` with ``|grad_s g|_inf <= tol``.  Iterates leaving the box
    ``|s|_inf <= 1e3`` mean the level is outside the fiberwise moment image.
    """
    n = prob.n
    wx = base_coords(w, prob.m)
    s = np.zeros(n) if s0 is None else np.array(s0, dtype=float)
    if n == 0:
        return s

    def value(v):
        try:
            return float(C.call_field(prob, list(v) + list(wx), n))
        except DomainError:
            return math.inf

    for _ in range(max_iter):
        J = C.eval_jet2(prob, Point(tuple(s), wx))
        grad = np.asarray(J.grad[:n], dtype=float)
        gnorm = float(np.max(np.abs(grad)))
        if trace is not None:
            trace.append(gnorm)
        if gnorm <= tol:
            return s
        H = np.asarray(J.hess[:n, :n], dtype=float)
        try:
            np.linalg.cholesky(H)
            d = -np.linalg.solve(H, grad)
            ok = bool(np.all(np.isfinite(d)))
        except np.linalg.LinAlgError:
            ok = False
        if not ok:
            if np.max(np.abs(s)) > RUNAWAY:
                # the convex g has flattened to round-off along a runaway direction
                raise StabilityViolation(
                    f"level {prob.level} appears outside the fiberwise moment image (s={s})")
            raise NotKahler(f"fiber Hessian not positive definite at s={s}")
        big = np.max(np.abs(d))
        if big > MAX_STEP:
            d *= MAX_STEP / big
        g0 = float(J.value)
        slope = float(grad @ d)
        a = 1.0
        while True:
            trial = s + a * d
            gt = value(trial)
            if gt <= g0 + ARMIJO * a * slope:
                break
            if abs(a * slope) < 100 * C.EPS * (1.0 + abs(g0)) and math.isfinite(gt):
                break  # round-off regime: the model decrease is below resolution
            a *= 0.5
            if a < 1e-16:
                raise StabilityViolation(f"line search failed at s={s}")
        s = trial
        if np.max(np.abs(s)) > DIVERGENCE_BOUND:
            raise StabilityViolation(
                f"level {prob.level} appears outside the fiberwise moment image (|s| > {DIVERGENCE_BOUND:g})")
    raise StabilityViolation(f"Newton did not converge in {max_iter} iterations")


# -- implicit jets -----------------------------------------------------------------


@dataclass
class LevelSetJets:
    """Second-order Taylor data of w -> (s*(w), w) at a base point."""

    prob: ReductionProblem
    s_star: np.ndarray
    s: list  # jets over (Re w, Im w)
    w: list
    _outer: Jet2 | None = field(default=None, repr=False)

    def restrict(self, fn):
        """Jet of ``w -> fn(s*(w), w)`` for any field ``fn(s, x, y)``."""
        out = C.call_field(fn, self.s + self.w, self.prob.n)
        if not isinstance(out, Jet2):
            out = C.constant(out, 2 * self.prob.m)
        return out

    @property
    def outer(self) -> Jet2:
        """Jet of g over (s, Re w, Im w) whose coefficients are jets over w."""
        if self._outer is None:
            self._outer = C.eval_jet2(self.prob, Point(self.s, self.w))
        return self._outer

    def ddbar(self, j) -> np.ndarray:
        """d dbar_w of a scalar jet over w, as an m x m Hermitian matrix."""
        m = self.prob.m
        if not isinstance(j, Jet2):
            return np.zeros((m, m), dtype=complex)
        flat = Jet2(C.real_value(j.value), np.array([C.real_value(v) for v in j.grad]),
                    np.array([[C.real_value(v) for v in row] for row in j.hess]).reshape(2 * m, 2 * m))
        return hermitian(C.wirtinger_hessian(flat, 0, m)[0])

    def logdet_fiber(self):
        n = self.prob.n
        return C.logdet_pd(self.outer.hess[:n, :n]) if n else 0.0

    def logdet_full(self):
        re, im = C.wirtinger_blocks(self.outer.hess, self.prob.n, self.prob.m)
        return C.logdet_hermitian(re, im)

    def iota_ricci(self):
        """Jet of the restricted Ricci potential h = sum s - log det(s/w Hessian)."""
        return sum(self.s, C.constant(0.0, 2 * self.prob.m)) - self.logdet_full()

    def log_fiber_zblock(self):
        """Jet of log det(d2 rho / dz_i dzbar_j) on the level set."""
        return self.logdet_fiber() - sum(self.s, C.constant(0.0, 2 * self.prob.m))

    def h_lambda(self):
        return self.iota_ricci() + self.log_fiber_zblock()

    def log_veff(self):
        n = self.prob.n
        return n * math.log(2 * math.pi) + 0.5 * (n * math.log(2.0) + self.logdet_fiber())


def level_set_jets(prob: ReductionProblem, w, s_star=None) -> LevelSetJets:
    if s_star is None:
        s_star = solve_level_set(prob, w)
    n, m = prob.n, prob.m
    wj = C.seed(base_coords(w, m))
    s = [C.constant(float(v), 2 * m) for v in s_star]
    for _ in range(2):
        J = C.eval_jet2(prob, Point(s, wj))
        delta = C.solve(J.hess[:n, :n], list(J.grad[:n]))
        s = [si - di for si, di in zip(s, delta)]
    return LevelSetJets(prob, np.asarray(s_star, dtype=float), s, wj)


# -- reduced quantities ---------------------------------------------------------------


def reduced_potential(prob: ReductionProblem, w, s0=None) -> float:
    s = solve_level_set(prob, w, s0)
    return float(C.call_field(prob, list(s) + list(base_coords(w, prob.m)), prob.n))


def _schur(M: np.ndarray, n: int) -> np.ndarray:
    Mss, Msw = M[:n, :n], M[:n, n:]
    Mws, Mww = M[n:, :n], M[n:, n:]
    if n == 0:
        return hermitian(Mww)
    return hermitian(Mww - Mws @ np.linalg.solve(Mss, Msw))


def reduced_metric(prob: ReductionProblem, w, s0=None, s_star=None) -> np.ndarray:
    """psi = G_wwbar - G_ws G_ss^-1 G_swbar on the level set (Schur complement)."""
    if s_star is None:
        s_star = solve_level_set(prob, w, s0)
    J = C.eval_jet2(prob, prob.point(s_star, w))
    psi = _schur(C.complex_hessian(J, prob.n, prob.m), prob.n)
    if not P.is_kahler_matrix(psi):
        raise NotKahler(f"reduced metric not positive definite at w={w}")
    return psi


def reduced_metric_direct(prob: ReductionProblem, w, s_star=None) -> np.ndarray:
    """d dbar of w -> g(s*(w), w), computed exactly through implicit jets."""
    lj = level_set_jets(prob, w, s_star)
    return lj.ddbar(lj.restrict(prob))


def effective_potential(prob: ReductionProblem, w, s0=None, s_star=None) -> float:
    """(2 pi)^n sqrt(D) at the level-set point, D the orbit-volume density."""
    if s_star is None:
        s_star = solve_level_set(prob, w, s0)
    D = P.orbit_volume_density(prob.pot, prob.point(s_star, w))
    return (2 * math.pi) ** prob.n * math.sqrt(D)


def reduced_ricci_potential(prob: ReductionProblem, w, s0=None, s_star=None) -> float:
    """h_lambda = h + log det(fiber z-block), both evaluated on the level set."""
    if s_star is None:
        s_star = solve_level_set(prob, w, s0)
    p = prob.point(s_star, w)
    h = P.ricci_potential(prob.pot, p)
    Z = P.full_complex_hessian(prob.pot, p)[:prob.n, :prob.n]
    sign, ld = np.linalg.slogdet(Z) if prob.n else (1.0, 0.0)
    if np.real(sign) <= 0:
        raise NotKahler("fiber block not positive definite")
    return h + float(ld)


def dh_decomposition(prob: ReductionProblem, w, s_star=None):
    """(mu, [mu_i]) with mu = d dbar (rho on the level set), mu_i = -d dbar s*_i."""
    lj = level_set_jets(prob, w, s_star)
    mu = lj.ddbar(lj.restrict(prob.pot))
    mu_i = [-lj.ddbar(si) for si in lj.s]
    return mu, mu_i


@dataclass(frozen=True)
class ReducedPotentialField:
    """w -> rho_lambda(w) as a scalar field on the base alone."""

    prob: ReductionProblem

    def __call__(self, s, x, y):
        return reduced_potential(self.prob, [complex(a, b) for a, b in zip(x, y)])


def fd_reduced_metric(prob: ReductionProblem, w, h: float = 1e-4) -> np.ndarray:
    """Oracle: d dbar of rho_lambda by central differences of independent solves."""
    j = C.fd_jet2(ReducedPotentialField(prob), Point((), base_coords(w, prob.m)), h=h, h2=h)
    return hermitian(C.wirtinger_hessian(j, 0, prob.m)[0])


def intrinsic_potential(prob: ReductionProblem, s, w, s0=None) -> float:
    """K = rho_lambda(w) + sum lambda_i s_i, independent of the trivialization."""
    s = np.atleast_1d(np.asarray(s, dtype=float)) if prob.n else np.zeros(0)
    return reduced_potential(prob, w, s0) + float(np.dot(prob.level, s))


def intrinsic_hessian(prob: ReductionProblem, s, w, s_star=None) -> np.ndarray:
    """d dbar_w of the intrinsic potential at fixed fiber coordinates s."""
    lj = level_set_jets(prob, w, s_star)
    lam_s = float(np.dot(prob.level, np.atleast_1d(np.asarray(s, dtype=float)))) if prob.n else 0.0
    return lj.ddbar(lj.restrict(prob) + lam_s)


def determinant_factorization(prob: ReductionProblem, w, s_star=None):
    """(det of full complex Hessian, det(fiber z-block) * det(psi)) on the level set."""
    if s_star is None:
        s_star = solve_level_set(prob, w)
    p = prob.point(s_star, w)
    H = P.full_complex_hessian(prob.pot, p)
    psi = reduced_metric(prob, w, s_star=s_star)
    n = prob.n
    fiber = np.linalg.det(H[:n, :n]).real if n else 1.0
    return float(np.linalg.det(H).real), float(fiber * np.linalg.det(psi).real)


@dataclass
class ReductionResult:
    w: np.ndarray
    s_star: np.ndarray
    rho_lambda: float
    psi: np.ndarray
    v_eff: float
    h_lambda: float
    mu: np.ndarray | None = None
    mu_i: list | None = None
    grad_norm: float = 0.0


def reduce_at(prob: ReductionProblem, w, s0=None, curvature: bool = True) -> ReductionResult:
    s_star = solve_level_set(prob, w, s0)
    wx = base_coords(w, prob.m)
    J = C.eval_jet2(prob, Point(tuple(s_star), wx))
    res = ReductionResult(
        w=np.atleast_1d(np.asarray(w, dtype=complex)) if prob.m else np.zeros(0, dtype=complex),
        s_star=s_star,
        rho_lambda=float(J.value),
        psi=reduced_metric(prob, w, s_star=s_star),
        v_eff=effective_potential(prob, w, s_star=s_star),
        h_lambda=reduced_ricci_potential(prob, w, s_star=s_star),
        grad_norm=float(np.max(np.abs(np.asarray(J.grad[:prob.n], dtype=float)))) if prob.n else 0.0,
    )
    if curvature:
        res.mu, res.mu_i = dh_decomposition(prob, w, s_star)
    return res
