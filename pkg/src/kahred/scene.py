"""Scene files: JSON descriptions of a potential, levels and a base grid."""
from __future__ import annotations

import itertools
import json
import re
from dataclasses import dataclass, field

import numpy as np

from . import potential as P
from .errors import DimensionMismatch, KahredError, ParseError, ValidationError
from .toric import ToricSpec, split_potential

COMMANDS = ("reduce", "dh", "moment-image", "toric", "ke", "validate")
_NAME = re.compile(r"[A-Za-z0-9_.-]+$")


@dataclass
class OrbitBlock:
    weights: np.ndarray
    amplitudes: np.ndarray
    interior: int = 200
    exterior: int = 200
    seed: int = 0
    margin: float = 0.05  # minimum distance of sampled levels from the hull boundary
    perturbation: str | None = None
    perturbation_bound: float = 0.0


@dataclass
class Scene:
    name: str
    potential: P.InvariantPotential
    n: int
    m: int
    levels: list  # tuples of length n
    axes: list  # 2m (lo, hi, count) triples over (Re w1, Im w1, ...)
    kappa: float | None = None
    toric: ToricSpec | None = None
    orbit: OrbitBlock | None = None
    outputs: tuple = COMMANDS
    raw: dict = field(default_factory=dict, repr=False)

    def axis_values(self):
        return [np.linspace(lo, hi, k) if k > 1 else np.array([lo]) for lo, hi, k in self.axes]

    def grid_rows(self):
        """Base points grouped by the value of the first axis, row-major."""
        vals = self.axis_values()
        if not vals:
            return [[np.zeros(0, dtype=complex)]]
        rows = []
        for v0 in vals[0]:
            row = []
            for rest in itertools.product(*vals[1:]):
                x = np.array((v0,) + rest)
                row.append(x[0::2] + 1j * x[1::2])
            rows.append(row)
        return rows

    def grid_points(self):
        return [w for row in self.grid_rows() for w in row]


def _num(v, what):
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ValidationError(f"{what} must be a number, got {v!r}")
    return float(v)


def _int(v, what, lo=0):
    if isinstance(v, bool) or not isinstance(v, int) or v < lo:
        raise ValidationError(f"{what} must be an integer >= {lo}, got {v!r}")
    return v


def _matrix(v, what):
    try:
        A = np.array(v, dtype=float)
    except (TypeError, ValueError):
        raise ValidationError(f"{what} must be a numeric matrix") from None
    if A.ndim != 2:
        raise ValidationError(f"{what} must be a list of rows")
    return A


def _toric_block(d) -> ToricSpec:
    if not isinstance(d, dict):
        raise ValidationError("toric block must be an object")
    for key in ("weights", "level", "base_point"):
        if key not in d:
            raise ValidationError(f"toric block is missing {key!r}")
    L = _matrix(d["weights"], "toric weights")
    split = _matrix(d["split"], "toric split") if d.get("split") is not None else None
    return ToricSpec(L, np.atleast_1d(np.array(d["level"], dtype=float)),
                     np.array(d["base_point"], dtype=float), split)


def build_potential(d, n: int, m: int, toric: ToricSpec | None = None) -> P.InvariantPotential:
    if not isinstance(d, dict):
        raise ValidationError("potential must be an object")
    if "expr" in d:
        consts = d.get("constants", {})
        if not isinstance(consts, dict):
            raise ValidationError("constants must be an object")
        consts = {k: _num(v, f"constant {k}") for k, v in consts.items()}
        return P.from_expression(d["expr"], n, m, consts, name=d.get("name", "expr"))
    if "product" in d:
        parts = d["product"]
        if not isinstance(parts, list) or len(parts) != 2:
            raise ValidationError("product takes exactly two factors")
        pots = [build_potential(p, _int(p.get("n"), "factor n"), _int(p.get("m", 0), "factor m"))
                for p in parts]
        return P.product(*pots)
    cat = d.get("catalog")
    if cat == "flat":
        return P.flat(n, m)
    if cat == "fubini_study":
        return P.fubini_study(n, m)
    if cat == "diagonal_trivialization":
        if n != 1:
            raise DimensionMismatch("diagonal trivialization has fiber rank 1")
        return P.diagonal_trivialization(m)
    if cat == "toric_split":
        if toric is None:
            raise ValidationError("toric_split potential needs a toric block")
        return split_potential(toric)
    raise ValidationError(f"unknown potential {cat!r}")


def _levels(v, n):
    if not isinstance(v, list) or not v:
        raise ValidationError("lambda must be a nonempty list")
    out = []
    for item in v:
        lam = [item] if not isinstance(item, list) else item
        if len(lam) != n:
            raise DimensionMismatch(f"level {item!r} must have {n} entries")
        out.append(tuple(_num(x, "level entry") for x in lam))
    return out


def _axes(v, m):
    if not isinstance(v, list) or len(v) != 2 * m:
        raise ValidationError(f"grid needs {2 * m} axes (real and imaginary part per base coordinate)")
    out = []
    for ax in v:
        if not isinstance(ax, list) or len(ax) != 3:
            raise ValidationError("grid axis must be [lo, hi, count]")
        lo, hi = _num(ax[0], "grid lo"), _num(ax[1], "grid hi")
        k = _int(ax[2], "grid count", lo=1)
        if hi < lo:
            raise ValidationError("grid axis has hi < lo")
        out.append((lo, hi, k))
    return out


def _orbit_block(d) -> OrbitBlock:
    if not isinstance(d, dict) or "weights" not in d or "amplitudes" not in d:
        raise ValidationError("orbit block needs weights and amplitudes")
    B = _matrix(d["weights"], "orbit weights")
    amp = np.array([_num(a, "amplitude") for a in d["amplitudes"]])
    if len(amp) != len(B):
        raise ValidationError("one amplitude per orbit weight")
    if amp[0] != 1.0 or np.any(amp < 0):
        raise ValidationError("amplitudes must be nonnegative with the first equal to 1")
    pert = d.get("perturbation")
    ob = OrbitBlock(B, amp, _int(d.get("interior", 200), "interior"),
                    _int(d.get("exterior", 200), "exterior"), _int(d.get("seed", 0), "seed"),
                    _num(d.get("margin", 0.05), "margin"))
    if ob.margin <= 0:
        raise ValidationError("orbit margin must be positive")
    if pert is not None:
        if not isinstance(pert, dict) or "expr" not in pert or "bound" not in pert:
            raise ValidationError("perturbation needs expr and bound")
        ob.perturbation = pert["expr"]
        ob.perturbation_bound = _num(pert["bound"], "perturbation bound")
    return ob


def scene_from_dict(d: dict) -> Scene:
    if not isinstance(d, dict):
        raise ValidationError("scene must be a JSON object")
    if d.get("version") != 1:
        raise ValidationError("scene version must be 1")
    name = d.get("name")
    if not isinstance(name, str) or not _NAME.match(name):
        raise ValidationError("scene name must match [A-Za-z0-9_.-]+")
    n, m = _int(d.get("n"), "n"), _int(d.get("m", 0), "m")
    toric = _toric_block(d["toric"]) if d.get("toric") is not None else None
    if "potential" not in d:
        raise ValidationError("scene needs a potential")
    pot = build_potential(d["potential"], n, m, toric)
    if (pot.n, pot.m) != (n, m):
        raise DimensionMismatch(f"potential has (n, m) = ({pot.n}, {pot.m}), scene declares ({n}, {m})")
    dom = d.get("domain")
    if dom is not None:
        sb = [tuple(_num(x, "domain") for x in b) for b in dom.get("s", [])]
        wb = [tuple(_num(x, "domain") for x in b) for b in dom.get("w", [])]
        if (sb and len(sb) != n) or (wb and len(wb) != 2 * m):
            raise DimensionMismatch("domain bounds do not match (n, m)")
        pot = P.InvariantPotential(pot.n, pot.m, pot.body, pot.name, pot.constants,
                                   tuple(sb), tuple(wb))
    levels = _levels(d.get("lambda", [[0.0] * n] if n == 0 else None), n) if n else [()]
    axes = _axes(d.get("grid", []), m)
    kappa = None
    if d.get("ke") is not None:
        kappa = _num(d["ke"].get("kappa") if isinstance(d["ke"], dict) else None, "kappa")
    orbit = _orbit_block(d["orbit"]) if d.get("orbit") is not None else None
    outputs = d.get("outputs", list(COMMANDS))
    if not isinstance(outputs, list) or any(o not in COMMANDS for o in outputs):
        raise ValidationError(f"outputs must be drawn from {COMMANDS}")
    return Scene(name, pot, n, m, levels, axes, kappa, toric, orbit, tuple(outputs), d)


def parse_scene(text: str) -> Scene:
    try:
        d = json.loads(text)
    except json.JSONDecodeError as e:
        raise ParseError(e.msg, line=e.lineno, column=e.colno, position=e.pos) from None
    try:
        return scene_from_dict(d)
    except ParseError:
        raise
    except KahredError:
        raise
    except (TypeError, ValueError, AttributeError) as e:
        raise ValidationError(f"malformed scene: {e}") from None


def load_scene(path) -> Scene:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as e:
        raise ValidationError(f"cannot read scene: {e}") from None
    return parse_scene(text)
