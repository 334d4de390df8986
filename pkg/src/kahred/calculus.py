"""Second-order forward-mode jets.

A :class:`Jet2` carries the value, gradient and Hessian of a scalar with
respect to a fixed set of seed variables.  Coefficients may themselves be
jets over a different (inner) set of variables; nesting is tracked with
``depth`` so that a jet over ``(s, x, y)`` whose coefficients are jets over
``w`` behaves like a truncated bivariate Taylor series.  This is how the
reduction pipeline gets exact second derivatives of implicitly defined
functions and of Ricci potentials without ever using finite differences.

Complex base coordinates are stored as interleaved real pairs
``(Re w1, Im w1, Re w2, ...)``.  The Wirtinger recombination into
``d/dw``, ``d/dwbar`` blocks lives in :func:`wirtinger_blocks` only.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DimensionMismatch, DomainError, NotKahler

EPS = np.finfo(float).eps


def depth_of(x) -> int:
    return x.depth if isinstance(x, Jet2) else 0


def real_value(x) -> float:
    """Strip every jet layer and return the underlying float."""
    while isinstance(x, Jet2):
        x = x.value
    return float(x)


class Jet2:
    """Value, gradient and Hessian of a scalar field at a point."""

    __slots__ = ("value", "grad", "hess", "depth")

    def __init__(self, value, grad, hess, depth=None):
        self.value = value
        self.grad = grad
        self.hess = hess
        self.depth = depth_of(value) + 1 if depth is None else depth

    def __repr__(self):
        return f"Jet2(value={self.value!r}, grad={self.grad!r}, hess={self.hess!r})"

    @property
    def dim(self) -> int:
        return self.grad.shape[0]

    # -- arithmetic ---------------------------------------------------------
    # Operands of lower depth (floats or inner jets) are constants for this
    # layer.  Same-type reflected operators are never called by Python, so a
    # higher-depth right operand is forwarded explicitly.

    def __add__(self, o):
        if isinstance(o, Jet2):
            if o.depth == self.depth:
                return Jet2(self.value + o.value, self.grad + o.grad, self.hess + o.hess, self.depth)
            if o.depth > self.depth:
                return o.__radd__(self)
        elif isinstance(o, np.ndarray):
            return NotImplemented
        return Jet2(self.value + o, self.grad, self.hess, self.depth)

    def __radd__(self, o):
        return Jet2(o + self.value, self.grad, self.hess, self.depth)

    def __neg__(self):
        return Jet2(-self.value, -self.grad, -self.hess, self.depth)

    def __sub__(self, o):
        if isinstance(o, np.ndarray):
            return NotImplemented
        return self + (-o)

    def __rsub__(self, o):
        return (-self).__radd__(o)

    def __mul__(self, o):
        if isinstance(o, Jet2):
            if o.depth == self.depth:
                a, b = self, o
                hess = (a.hess * b.value + b.hess * a.value
                        + np.outer(a.grad, b.grad) + np.outer(b.grad, a.grad))
                return Jet2(a.value * b.value, a.grad * b.value + b.grad * a.value, hess, self.depth)
            if o.depth > self.depth:
                return o.__rmul__(self)
        elif isinstance(o, np.ndarray):
            return NotImplemented
        return Jet2(self.value * o, self.grad * o, self.hess * o, self.depth)

    def __rmul__(self, o):
        return Jet2(o * self.value, self.grad * o, self.hess * o, self.depth)

    def reciprocal(self):
        v = self.value
        if real_value(v) == 0.0:
            raise DomainError("division by zero")
        inv = 1.0 / v
        inv2 = inv * inv
        return _chain(self, inv, -inv2, 2.0 * inv2 * inv)

    def __truediv__(self, o):
        if isinstance(o, Jet2):
            if o.depth >= self.depth:
                return self * o.reciprocal()
        elif isinstance(o, np.ndarray):
            return NotImplemented
        if real_value(o) == 0.0:
            raise DomainError("division by zero")
        return self * (1.0 / o)

    def __rtruediv__(self, o):
        return self.reciprocal().__rmul__(o)

    def __pow__(self, k):
        if not isinstance(k, (int, np.integer)):
            raise TypeError("jets support integer powers only")
        k = int(k)
        if k == 0:
            return Jet2(self.value * 0.0 + 1.0, self.grad * 0.0, self.hess * 0.0, self.depth)
        if k == 1:
            return self
        v = self.value
        if k < 0 and real_value(v) == 0.0:
            raise DomainError("negative power of zero")
        if k == 2:
            return self * self
        vk2 = ipow(v, k - 2)
        vk1 = vk2 * v
        return _chain(self, vk1 * v, k * vk1, k * (k - 1) * vk2)


def _chain(a: Jet2, f0, f1, f2) -> Jet2:
    """Compose a univariate function (value f0, derivatives f1, f2) with ``a``."""
    grad = a.grad * f1
    hess = a.hess * f1 + np.outer(a.grad, a.grad) * f2
    return Jet2(f0, grad, hess, a.depth)


def ipow(x, k: int):
    if isinstance(x, Jet2):
        return x ** k
    if k < 0 and x == 0.0:
        raise DomainError("negative power of zero")
    return float(x) ** k


def exp(x):
    if isinstance(x, Jet2):
        e = exp(x.value)
        return _chain(x, e, e, e)
    try:
        return math.exp(x)
    except OverflowError:
        raise DomainError(f"exp overflow at {x!r}") from None


def log(x):
    if isinstance(x, Jet2):
        v = x.value
        if real_value(v) <= 0.0:
            raise DomainError(f"log of non-positive value {real_value(v)!r}")
        inv = 1.0 / v
        return _chain(x, log(v), inv, -(inv * inv))
    if x <= 0.0:
        raise DomainError(f"log of non-positive value {x!r}")
    return math.log(x)


def sqrt(x):
    if isinstance(x, Jet2):
        v = x.value
        if real_value(v) <= 0.0:
            raise DomainError(f"sqrt of non-positive value {real_value(v)!r}")
        r = sqrt(v)
        return _chain(x, r, 0.5 / r, -0.25 / (r * v))
    if x < 0.0:
        raise DomainError(f"sqrt of negative value {x!r}")
    return math.sqrt(x)


# -- points and seeding ------------------------------------------------------


@dataclass(frozen=True)
class Point:
    """A point of (C*)^n x U in fiber-log coordinates.

    ``s`` holds ``log |z_i|^2``; ``w`` holds interleaved ``(Re w, Im w)``
    pairs.  Entries are floats except inside the reduction pipeline, where
    they may be jets.
    """

    s: tuple
    w: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "s", tuple(self.s))
        object.__setattr__(self, "w", tuple(self.w))
        if len(self.w) % 2:
            raise DimensionMismatch("w must hold an even number of reals")
        for c in self.s + self.w:
            if not isinstance(c, Jet2) and not math.isfinite(c):
                raise DomainError("non-finite coordinate")

    @classmethod
    def from_complex(cls, s, w=()):
        w = np.atleast_1d(np.asarray(w, dtype=complex)) if len(w) else ()
        return cls(tuple(float(v) for v in s), tuple(v for c in w for v in (c.real, c.imag)))

    @property
    def n(self) -> int:
        return len(self.s)

    @property
    def m(self) -> int:
        return len(self.w) // 2

    @property
    def coords(self) -> tuple:
        return self.s + self.w

    @property
    def x(self) -> tuple:
        return self.w[0::2]

    @property
    def y(self) -> tuple:
        return self.w[1::2]

    def w_complex(self) -> np.ndarray:
        return np.array([complex(a, b) for a, b in zip(self.x, self.y)])


def seed(values: Sequence) -> list[Jet2]:
    """Independent jet variables at ``values`` (which may be inner jets)."""
    d = len(values)
    eye = np.eye(d)
    zero = np.zeros((d, d))
    return [Jet2(v, eye[i].copy(), zero.copy()) for i, v in enumerate(values)]


def constant(value, dim: int) -> Jet2:
    return Jet2(value, np.zeros(dim), np.zeros((dim, dim)))


def call_field(field, coords: Sequence, n: int):
    """Evaluate ``field(s, x, y)`` on a flat coordinate list."""
    s = list(coords[:n])
    w = list(coords[n:])
    return field(s, w[0::2], w[1::2])


def eval_jet2(field, p: Point) -> Jet2:
    """Exact value, gradient and Hessian of ``field`` at ``p``.

    Derivatives are with respect to ``(s_1..s_n, Re w_1, Im w_1, ...)``.
    """
    check = getattr(field, "check_point", None)
    if check is not None:
        check(p)
    base = max((depth_of(c) for c in p.coords), default=0)
    out = call_field(field, seed(p.coords), p.n)
    if depth_of(out) <= base:
        # field does not depend on the seeds
        d = len(p.coords)
        out = Jet2(out, np.zeros(d), np.zeros((d, d)))
    return out


def fd_jet2(field, p: Point, h: float = 1e-5, h2: float | None = None) -> Jet2:
    """Central-difference oracle for :func:`eval_jet2`.

    ``h`` is the relative step for the gradient.  Second differences use
    ``h2`` (default ``eps**0.25``): at ``h = 1e-5`` their round-off alone is
    about ``eps / h**2 ~ 2e-6``.  Non-smooth points are not detected.
    """
    if h <= 0:
        raise ValueError("h must be positive")
    if h2 is None:
        h2 = max(h, EPS ** 0.25)
    x0 = np.array([float(c) for c in p.coords])
    n = p.n
    d = x0.size

    def f(x):
        return float(call_field(field, list(x), n))

    value = f(x0)
    grad = np.zeros(d)
    hess = np.zeros((d, d))
    steps = h * np.maximum(1.0, np.abs(x0))
    steps2 = h2 * np.maximum(1.0, np.abs(x0))
    for i in range(d):
        e = np.zeros(d)
        e[i] = steps[i]
        grad[i] = (f(x0 + e) - f(x0 - e)) / (2 * steps[i])
        e[i] = steps2[i]
        hess[i, i] = (f(x0 + e) - 2 * value + f(x0 - e)) / steps2[i] ** 2
        for j in range(i):
            ej = np.zeros(d)
            ej[j] = steps2[j]
            v = (f(x0 + e + ej) - f(x0 + e - ej) - f(x0 - e + ej) + f(x0 - e - ej))
            hess[i, j] = hess[j, i] = v / (4 * steps2[i] * steps2[j])
    return Jet2(value, grad, hess)


# -- Wirtinger recombination ---------------------------------------------------


def wirtinger_blocks(hess: np.ndarray, n: int, m: int):
    """Real and imaginary parts of the Hermitian (n+m) matrix built from ``hess``.

    Rows/columns are ``(s_1..s_n, w_1..w_m)``; entries are
    ``d2/ds_i ds_j``, ``d2/ds_i dwbar_b``, ``d2/dw_a ds_j``, ``d2/dw_a dwbar_b``
    with ``d/dwbar = (d/dx + i d/dy) / 2``.  Works for float or jet entries.
    """
    if hess.shape != (n + 2 * m, n + 2 * m):
        raise DimensionMismatch(f"Hessian of shape {hess.shape} does not match n={n}, m={m}")
    k = n + m
    dtype = hess.dtype
    re = np.zeros((k, k), dtype=dtype)
    im = np.zeros((k, k), dtype=dtype)
    re[:n, :n] = hess[:n, :n]
    for b in range(m):
        xb, yb = n + 2 * b, n + 2 * b + 1
        for i in range(n):
            re[i, n + b] = re[n + b, i] = 0.5 * hess[i, xb]
            im[i, n + b] = 0.5 * hess[i, yb]
            im[n + b, i] = -im[i, n + b]
        for a in range(m):
            xa, ya = n + 2 * a, n + 2 * a + 1
            re[n + a, n + b] = 0.25 * (hess[xa, xb] + hess[ya, yb])
            if a != b:
                im[n + a, n + b] = 0.25 * (hess[xa, yb] - hess[ya, xb])
    return re, im


def wirtinger_hessian(j: Jet2, n: int, m: int):
    """Split a jet's Hessian into ``(H_wwbar, H_swbar, H_ss)``.

    ``H_wwbar`` is m x m Hermitian, ``H_swbar[i, b] = d2/ds_i dwbar_b`` is
    n x m complex and ``H_ss`` is the real n x n fiber block.
    """
    if j.dim != n + 2 * m:
        raise DimensionMismatch(f"jet of dimension {j.dim} does not match n={n}, m={m}")
    re, im = wirtinger_blocks(np.asarray(j.hess, dtype=float), n, m)
    full = re + 1j * im
    return full[n:, n:], full[:n, n:], re[:n, :n].copy()


def complex_hessian(j: Jet2, n: int, m: int) -> np.ndarray:
    """The (n+m) Hermitian matrix of s/w second derivatives as complex floats."""
    re, im = wirtinger_blocks(np.asarray(j.hess, dtype=float), n, m)
    return re + 1j * im


# -- generic dense linear algebra over jets -----------------------------------


def _lu(A):
    """In-place LU with partial pivoting on the float part; returns (LU, perm, sign)."""
    A = np.array(A, dtype=object)
    k = A.shape[0]
    perm = list(range(k))
    sign = 1
    for c in range(k):
        p = max(range(c, k), key=lambda r: abs(real_value(A[r, c])))
        if real_value(A[p, c]) == 0.0:
            raise NotKahler("singular matrix")
        if p != c:
            A[[c, p]] = A[[p, c]]
            perm[c], perm[p] = perm[p], perm[c]
            sign = -sign
        for r in range(c + 1, k):
            factor = A[r, c] / A[c, c]
            A[r, c] = factor
            for q in range(c + 1, k):
                A[r, q] = A[r, q] - factor * A[c, q]
    return A, perm, sign


def solve(A, b):
    """Solve ``A x = b``; entries may be jets."""
    A = np.asarray(A)
    if A.dtype != object:
        return np.linalg.solve(A, np.asarray(b, dtype=float))
    k = A.shape[0]
    if k == 0:
        return np.zeros(0, dtype=object)
    LU, perm, _ = _lu(A)
    y = [b[perm[i]] for i in range(k)]
    for i in range(k):
        for j in range(i):
            y[i] = y[i] - LU[i, j] * y[j]
    x = [None] * k
    for i in reversed(range(k)):
        acc = y[i]
        for j in range(i + 1, k):
            acc = acc - LU[i, j] * x[j]
        x[i] = acc / LU[i, i]
    return np.array(x, dtype=object)


def logdet_pd(A):
    """log det of a symmetric positive definite matrix with float or jet entries."""
    A = np.asarray(A)
    if A.shape[0] == 0:
        return 0.0
    if A.dtype != object:
        sign, ld = np.linalg.slogdet(A)
        if sign <= 0:
            raise NotKahler("matrix is not positive definite")
        return ld
    LU, _, sign = _lu(A)
    total = 0.0
    negatives = 0
    for i in range(A.shape[0]):
        piv = LU[i, i]
        if real_value(piv) < 0:
            negatives += 1
            piv = -piv
        total = total + log(piv)
    if (negatives % 2 == 1) != (sign < 0):
        raise NotKahler("matrix is not positive definite")
    return total


def logdet_hermitian(re, im):
    """log det of the Hermitian matrix ``re + i im`` (entries float or jet).

    Uses the real embedding ``[[re, -im], [im, re]]`` whose determinant is
    the square of the Hermitian one.
    """
    re = np.asarray(re)
    im = np.asarray(im)
    if re.dtype != object and im.dtype != object:
        sign, ld = np.linalg.slogdet(re + 1j * im)
        if sign.real <= 0 or abs(sign.imag) > 1e-9:
            raise NotKahler("Hermitian matrix is not positive definite")
        return float(ld)
    if all(real_value(v) == 0.0 and not isinstance(v, Jet2) for v in im.ravel()):
        return logdet_pd(re)
    big = np.block([[re, -im], [im, re]])
    return 0.5 * logdet_pd(big)


def is_positive_definite(H: np.ndarray, threshold: float = 1e-12) -> bool:
    """Cholesky-style check: every pivot must exceed ``threshold``."""
    H = np.array(H, dtype=complex)
    k = H.shape[0]
    for c in range(k):
        piv = H[c, c].real
        if piv <= threshold:
            return False
        H[c + 1:, c + 1:] -= np.outer(H[c + 1:, c], H[c, c + 1:]) / piv
    return True
