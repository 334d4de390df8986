"""Log-sum-exp functions, their Legendre maps and stability sets.

For ``F(s) = log sum k_i exp(alpha_i . s)`` the gradient map is a bijection
from R^n onto the interior of the convex hull of the exponents.  Membership
in that hull is decided exactly by enumerating facets, and every decision
comes with a certificate that can be checked independently.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from . import calculus as C
from . import expr as E
from .errors import BoundaryLevel, DegenerateInput, UnverifiedBound
from .potential import InvariantPotential

BOUNDARY_TOL = 1e-10
RAY_SAMPLES = (1.0, 2.0, 4.0, 8.0, 16.0)


@dataclass(frozen=True)
class LogSumExpFunction:
    exponents: np.ndarray  # (N, n)
    coeffs: np.ndarray  # (N,)

    def __init__(self, exponents, coeffs=None):
        a = np.atleast_2d(np.asarray(exponents, dtype=float))
        k = np.ones(len(a)) if coeffs is None else np.asarray(coeffs, dtype=float).ravel()
        if len(a) == 0 or len(k) != len(a):
            raise ValueError("need one positive coefficient per exponent")
        if np.any(k <= 0):
            raise ValueError("coefficients must be positive")
        object.__setattr__(self, "exponents", a)
        object.__setattr__(self, "coeffs", k)

    @property
    def n(self) -> int:
        return self.exponents.shape[1]

    def _weights(self, s):
        z = self.exponents @ np.asarray(s, dtype=float) + np.log(self.coeffs)
        top = z.max()
        e = np.exp(z - top)
        return top + math.log(e.sum()), e / e.sum()

    def value(self, s) -> float:
        return self._weights(s)[0]

    def gradient(self, s) -> np.ndarray:
        return self._weights(s)[1] @ self.exponents

    def hessian(self, s) -> np.ndarray:
        p = self._weights(s)[1]
        g = p @ self.exponents
        return (self.exponents * p[:, None]).T @ self.exponents - np.outer(g, g)

    def affine_dim(self) -> int:
        return affine_frame(self.exponents)[2]

    def as_potential(self) -> InvariantPotential:
        terms = []
        for a, k in zip(self.exponents, self.coeffs):
            lin = E.total([float(ai) * E.s(i + 1) for i, ai in enumerate(a) if ai != 0.0])
            terms.append(float(k) * E.exp(lin))
        return InvariantPotential(self.n, 0, E.log(E.total(terms)), name="logsumexp")


def legendre_map(F: LogSumExpFunction, s) -> np.ndarray:
    return F.gradient(s)


# -- hulls ---------------------------------------------------------------------------


def affine_frame(points, tol: float = 1e-12):
    """(base point, orthonormal basis of the direction space (n x k), k)."""
    P = np.atleast_2d(np.asarray(points, dtype=float))
    p0 = P[0]
    D = P - p0
    if len(P) == 1 or np.max(np.abs(D)) <= tol:
        return p0, np.zeros((P.shape[1], 0)), 0
    _, sv, vt = np.linalg.svd(D, full_matrices=False)
    k = int(np.sum(sv > tol * max(1.0, sv[0])))
    return p0, vt[:k].T, k


def _facets_projected(q: np.ndarray, tol: float = 1e-9):
    """All facets (u, b) with u.q <= b of the full-dimensional hull of rows of q."""
    N, k = q.shape
    found = {}
    for S in itertools.combinations(range(N), k):
        base = q[S[0]]
        if k == 1:
            u = np.array([1.0])
        else:
            D = q[list(S[1:])] - base
            _, sv, vt = np.linalg.svd(D)
            if sv[-1] <= 1e-12 * max(1.0, sv[0]):
                continue
            u = vt[-1]
        b = float(u @ base)
        side = q @ u - b
        if np.all(side <= tol):
            pass
        elif np.all(side >= -tol):
            u, b = -u, -b
        else:
            continue
        key = tuple(np.round(np.append(u, b), 9))
        found.setdefault(key, (u, b))
    return [found[key] for key in sorted(found)]


@dataclass(frozen=True)
class Polytope:
    vertices: np.ndarray
    facets: list  # (normal u, offset b): polytope = {x : u.x <= b}
    affine_dim: int

    def contains(self, x, tol: float = BOUNDARY_TOL) -> bool:
        return all(float(u @ x) <= b + tol for u, b in self.facets)


@dataclass(frozen=True)
class Certificate:
    kind: str  # 'interior', 'exterior', 'boundary'
    weights: np.ndarray | None = None
    ray: np.ndarray | None = None
    facet: int | None = None
    margin: float = 0.0


def _hull_data(points):
    P = np.atleast_2d(np.asarray(points, dtype=float))
    p0, U, k = affine_frame(P)
    q = (P - p0) @ U
    facets = _facets_projected(q) if k else []
    return P, p0, U, k, q, facets


def hull_membership(exponents, level) -> Certificate:
    """Interior / boundary / exterior of ``level`` relative to conv(exponents).

    Degenerate hulls are handled inside their affine hull; levels off the
    affine hull are exterior with a normal ray.
    """
    P, p0, U, k, q, facets = _hull_data(exponents)
    if k == 0:
        raise DegenerateInput("all exponents coincide")
    ell = np.asarray(level, dtype=float)
    r = ell - p0
    off = r - U @ (U.T @ r)
    if float(np.linalg.norm(off)) > BOUNDARY_TOL:
        return _exterior(P, ell)
    x = U.T @ r
    slack = np.array([b - u @ x for u, b in facets])
    worst = int(np.argmin(slack))
    if slack[worst] < -BOUNDARY_TOL:
        return _exterior(P, ell)
    if slack[worst] <= BOUNDARY_TOL:
        return Certificate("boundary", facet=worst, margin=float(slack[worst]))
    return Certificate("interior", weights=_barycentric(q, x), margin=float(slack[worst]))


def nearest_point(points, level):
    """Closest point of conv(points) to level, by enumerating candidate faces."""
    P = np.atleast_2d(np.asarray(points, dtype=float))
    ell = np.asarray(level, dtype=float)
    best, best_d = None, math.inf
    for size in range(1, min(len(P), P.shape[1] + 1) + 1):
        for S in itertools.combinations(range(len(P)), size):
            Q = P[list(S)]
            # minimize |Q^T theta - ell| subject to sum theta = 1
            D = (Q[1:] - Q[0]).T
            if size > 1:
                coef, *_ = np.linalg.lstsq(D, ell - Q[0], rcond=None)
                theta = np.append(1.0 - coef.sum(), coef)
            else:
                theta = np.ones(1)
            if np.any(theta < -1e-12):
                continue
            x = theta @ Q
            d = float(np.linalg.norm(ell - x))
            if d < best_d - 1e-15:
                best, best_d = x, d
    return best, best_d


def _exterior(P, ell):
    x, d = nearest_point(P, ell)
    return Certificate("exterior", ray=(ell - x) / d, margin=d)


def _barycentric(q, x):
    """Convex weights reproducing x, from the first simplex of points containing it."""
    N, k = q.shape
    for S in itertools.combinations(range(N), k + 1):
        A = np.vstack([q[list(S)].T, np.ones(k + 1)])
        if abs(np.linalg.det(A)) < 1e-12:
            continue
        theta = np.linalg.solve(A, np.append(x, 1.0))
        if np.all(theta >= -1e-12):
            out = np.zeros(N)
            out[list(S)] = np.clip(theta, 0.0, None)
            return out / out.sum()
    raise AssertionError("interior point not covered by any simplex")


def verify_certificate(exponents, level, cert: Certificate, tol: float = 1e-9) -> bool:
    """Check a certificate without trusting the facet enumeration."""
    P = np.atleast_2d(np.asarray(exponents, dtype=float))
    ell = np.asarray(level, dtype=float)
    if cert.kind == "interior":
        th = cert.weights
        return bool(np.all(th >= 0) and abs(th.sum() - 1) <= tol
                    and np.allclose(th @ P, ell, atol=tol, rtol=0))
    if cert.kind == "exterior":
        gap = float(ell @ cert.ray - np.max(P @ cert.ray))
        return gap >= BOUNDARY_TOL
    return cert.kind == "boundary"


def polytope_from_points(points) -> Polytope:
    P, p0, U, k, q, facets = _hull_data(points)
    uniq = np.unique(np.round(P, 12), axis=0)
    amb = []
    for u, b in facets:
        ua = U @ u
        amb.append((ua, float(b + ua @ p0)))
    # equality constraints pinning the affine hull
    if k < P.shape[1]:
        Q, _ = np.linalg.qr(np.hstack([U, np.eye(P.shape[1])]))
        normals = Q[:, k:P.shape[1]]
        for v in normals.T:
            amb.append((v, float(v @ p0)))
            amb.append((-v, float(-v @ p0)))
    verts = []
    for i, p in enumerate(uniq):
        others = np.delete(uniq, i, axis=0)
        if len(others) == 0:
            verts.append(p)
            continue
        try:
            cert = hull_membership(others, p)
        except DegenerateInput:
            verts.append(p)
            continue
        if cert.kind == "exterior":
            verts.append(p)
    return Polytope(np.array(verts), amb, k)


def orbit_moment_image(weights, amplitudes) -> Polytope:
    """Closure of the moment image of the torus orbit through [a_0 : ... : a_N].

    ``weights`` are beta_0..beta_N, ``amplitudes`` are |a_i|^2 with a_0 = 1.
    """
    B = np.atleast_2d(np.asarray(weights, dtype=float))
    amp = np.asarray(amplitudes, dtype=float)
    if len(amp) != len(B):
        raise ValueError("one amplitude per weight")
    if amp[0] != 1.0:
        raise ValueError("chart normalization requires a_0 = 1")
    alphas = [np.zeros(B.shape[1])] + [B[i] - B[0] for i in range(1, len(B)) if amp[i] > 0]
    return polytope_from_points(alphas)


def orbit_function(weights, amplitudes) -> LogSumExpFunction:
    """log(sum |a_i|^2 exp(alpha_i . s) + 1) restricted to the orbit."""
    B = np.atleast_2d(np.asarray(weights, dtype=float))
    amp = np.asarray(amplitudes, dtype=float)
    idx = [i for i in range(1, len(B)) if amp[i] > 0]
    ex = [np.zeros(B.shape[1])] + [B[i] - B[0] for i in idx]
    return LogSumExpFunction(ex, [1.0] + [amp[i] for i in idx])


# -- minimization ----------------------------------------------------------------------


@dataclass
class ShiftedMinimum:
    converged: bool
    s_star: np.ndarray | None = None
    certificate: Certificate | None = None
    ray: np.ndarray | None = None
    ray_values: list = field(default_factory=list)
    iterations: int = 0

    @property
    def decreasing(self) -> bool:
        v = self.ray_values
        return len(v) > 1 and all(b < a for a, b in zip(v, v[1:]))


def descend(fun, level, s0=None, tol: float = 1e-12, max_iter: int = 500,
            bound: float = 1e3, max_step: float = 50.0):
    """Damped Newton on fun - level.s with eigenvalue-floored Hessians.

    Returns ``(converged, s, iterations)``.  Non-convergence means the
    iterates ran past ``bound`` or the budget was exhausted.
    """
    ell = np.asarray(level, dtype=float)
    s = np.zeros(len(ell)) if s0 is None else np.array(s0, dtype=float)

    def val(v):
        try:
            with np.errstate(all="ignore"):
                out = fun.value(v) - ell @ v
        except (OverflowError, FloatingPointError, C.DomainError):
            return math.inf
        return out if math.isfinite(out) else math.inf

    for it in range(max_iter):
        with np.errstate(all="ignore"):
            g = fun.gradient(s) - ell
            hess = fun.hessian(s)
        if not (np.all(np.isfinite(g)) and np.all(np.isfinite(hess))):
            return False, s, it  # ran off to where the field overflows
        if np.max(np.abs(g)) <= tol:
            return True, s, it
        lam, V = np.linalg.eigh(hess)
        lam = np.maximum(np.abs(lam), 1e-12)
        d = -V @ ((V.T @ g) / lam)
        big = np.max(np.abs(d))
        if big > max_step:
            d *= max_step / big
        f0, slope, a = val(s), float(g @ d), 1.0
        while True:
            ft = val(s + a * d)
            if ft <= f0 + 1e-4 * a * slope:
                break
            if abs(a * slope) < 100 * C.EPS * (1 + abs(f0)) and math.isfinite(ft):
                break
            a *= 0.5
            if a < 1e-16:
                return False, s, it
        s = s + a * d
        if np.max(np.abs(s)) > bound:
            return False, s, it
    return False, s, max_iter


def _directions(n: int, per_plane: int = 360, seed: int = 0) -> np.ndarray:
    if n == 1:
        return np.array([[1.0], [-1.0]])
    if n == 2:
        a = np.linspace(0.0, 2 * math.pi, per_plane, endpoint=False)
        return np.column_stack([np.cos(a), np.sin(a)])
    rng = np.random.default_rng(seed)
    U = rng.standard_normal((per_plane * n, n))
    U = np.vstack([np.eye(n), -np.eye(n), U])
    return U / np.linalg.norm(U, axis=1)[:, None]


def probe_stability(fun, level, radius: float = 500.0, s0=None) -> bool:
    """Is fun - level proper?  Works for nonconvex fun.

    A descent that runs off is unstable.  A finite critical point is only
    accepted if fun - level stays above its value on spheres of radius R/2
    and R around it: a bounded perturbation can create local minima for
    levels outside the stability set, but cannot stop the linear decrease
    along a separating ray.
    """
    ell = np.asarray(level, dtype=float)
    ok, s, _ = descend(fun, ell, s0, tol=1e-10)
    if not ok:
        return False

    def val(v):
        with np.errstate(all="ignore"):
            try:
                return float(fun.value(v) - ell @ v)
            except (OverflowError, C.DomainError):
                return math.nan

    base = val(s)
    U = _directions(len(ell))
    for R in (0.5 * radius, radius):
        vals = np.array([val(s + R * u) for u in U])
        if not np.all(np.isfinite(vals)) or vals.min() <= base:
            return False
    return True


def minimize_shifted(F: LogSumExpFunction, level, s0=None, tol: float = 1e-12) -> ShiftedMinimum:
    """Minimize F - level, or certify the ray along which it decreases."""
    cert = hull_membership(F.exponents, level)
    ell = np.asarray(level, dtype=float)
    if cert.kind == "boundary":
        raise BoundaryLevel(f"level {ell} lies on facet {cert.facet}; the minimizer is at infinity")
    if cert.kind == "exterior":
        xi = cert.ray
        vals = [F.value(t * xi) - t * float(ell @ xi) for t in RAY_SAMPLES]
        return ShiftedMinimum(False, certificate=cert, ray=xi, ray_values=vals)
    ok, s, it = descend(F, ell, s0, tol=tol)
    return ShiftedMinimum(ok, s_star=s, certificate=cert, iterations=it)


# -- bounded perturbations ------------------------------------------------------------


@dataclass(frozen=True)
class PerturbedFunction:
    base: LogSumExpFunction
    perturbation: InvariantPotential  # bounded, fiber-only

    def _jet(self, s):
        return C.eval_jet2(self.perturbation, C.Point(tuple(float(v) for v in s)))

    def value(self, s):
        return self.base.value(s) + self.perturbation.value(C.Point(tuple(float(v) for v in s)))

    def gradient(self, s):
        return self.base.gradient(s) + np.asarray(self._jet(s).grad, dtype=float)

    def hessian(self, s):
        return self.base.hessian(s) + np.asarray(self._jet(s).hess, dtype=float)


@dataclass
class PerturbationReport:
    levels: np.ndarray
    hull_kinds: list
    decisions_base: list
    decisions_perturbed: list
    sampled_sup: float

    @property
    def disagreements(self) -> int:
        return sum(a != b for a, b in zip(self.decisions_base, self.decisions_perturbed))


def sup_on_box(H: InvariantPotential, half_width: float = 50.0, per_axis: int = 41) -> float:
    axes = [np.linspace(-half_width, half_width, per_axis)] * H.n
    best = 0.0
    for p in itertools.product(*axes):
        try:
            best = max(best, abs(H.value(C.Point(p))))
        except C.DomainError:
            best = math.inf
    return best


def bounded_perturbation_image(F: LogSumExpFunction, H: InvariantPotential, levels,
                               bound: float, half_width: float = 50.0) -> PerturbationReport:
    """Compare stability decisions for F and F + H at each level.

    Both decisions come from :func:`probe_stability`, which never looks at the
    exponents, so agreement is evidence rather than a tautology.
    """
    if H.n != F.n or H.m != 0:
        raise ValueError("perturbation must be a fiber-only field of matching rank")
    sup = sup_on_box(H, half_width, 41 if F.n <= 2 else 9)
    if sup > bound:
        raise UnverifiedBound(f"sampled |H| = {sup:g} exceeds the declared bound {bound:g}")
    FH = PerturbedFunction(F, H)
    levels = np.atleast_2d(np.asarray(levels, dtype=float))
    kinds, base, pert = [], [], []
    for ell in levels:
        kinds.append(hull_membership(F.exponents, ell).kind)
        base.append(probe_stability(F, ell))
        pert.append(probe_stability(FH, ell))
    return PerturbationReport(levels, kinds, base, pert, sup)
