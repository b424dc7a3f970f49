"""Discretized monotonicity penalties on equispaced lattices.

Each constraint is reduced to a "slack" ``g(point)`` that must be
nonnegative on its grid:

* individual ``a``:  ``g = df/dx_a``
* weak ``(u, v)``:   ``g = df/dx_u - df/dx_v`` on points with ``x_u == x_v``
* strong ``(y, z)``: ``g = df/dx_y - df/dx_z`` on the group's full lattice

and penalized by ``mean(max(eps, margin - g)**2)``.  With ``margin=0`` this
is the usual squared hinge with an ``eps`` floor; the trainer uses a small
positive margin so that slopes are pushed strictly inside the feasible
region and the ``eps=0`` audit can actually reach zero.

Because the model is additive, every derivative is taken from the owning
group's subnet alone.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import diffcore as dc
from .grove import GroveModel
from .schema import FeatureSchema, GroveArchitecture, MonotoneSpec, group_label

DEFAULT_POINTS_1D = 64
DEFAULT_POINTS_GROUP = 16
DEFAULT_EPSILON = 1e-3
MAX_LATTICE_POINTS = 2_000_000


class PenaltyError(ValueError):
    """A constraint cannot be penalized under the given architecture."""


def dim_points(kind: str, lo: float, hi: float, n: int, refine: int = 1) -> np.ndarray:
    """Equispaced points over ``[lo, hi]``.

    Count and binary dimensions always contain their integer points: the
    spacing is ``1/k`` with ``k`` the smallest integer giving at least ``n``
    points, times ``refine``.
    """
    if n < 2:
        raise PenaltyError("grids need at least 2 points per dimension")
    if hi <= lo:
        raise PenaltyError(f"empty domain [{lo}, {hi}]")
    span = hi - lo
    if kind in ("count", "binary") and float(span).is_integer() and float(lo).is_integer():
        k = max(1, math.ceil((n - 1) / span)) * refine
        return lo + np.arange(int(span) * k + 1) / k
    return np.linspace(lo, hi, refine * (n - 1) + 1)


def _lattice(axes: list[np.ndarray]) -> np.ndarray:
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)


@dataclass(frozen=True)
class PenaltyGrid:
    schema: FeatureSchema
    arch: GroveArchitecture
    points_1d: int = DEFAULT_POINTS_1D
    points_group: int = DEFAULT_POINTS_GROUP
    refine: int = 1
    _cache: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        if self.points_1d < 2 or self.points_group < 2 or self.refine < 1:
            raise PenaltyError("points_per_dim must be >= 2 and refine >= 1")

    def audit(self, factor: int = 4) -> "PenaltyGrid":
        return PenaltyGrid(self.schema, self.arch, self.points_1d, self.points_group, self.refine * factor)

    def n_for(self, group) -> int:
        return self.points_1d if len(group) == 1 else self.points_group

    def axis(self, name: str, n: int) -> np.ndarray:
        f = self.schema[name]
        return dim_points(f.kind, f.lo, f.hi, n, self.refine)

    def tie_axis(self, u: str, v: str, n: int) -> np.ndarray:
        fu, fv = self.schema[u], self.schema[v]
        lo, hi = max(fu.lo, fv.lo), min(fu.hi, fv.hi)
        if hi <= lo:
            raise PenaltyError(f"features {u!r} and {v!r} have disjoint domains; cannot tie them")
        kind = "count" if {fu.kind, fv.kind} <= {"count", "binary"} else "continuous"
        return dim_points(kind, lo, hi, n, self.refine)

    def lattice(self, group: tuple[str, ...], tie: tuple[str, str] | None = None) -> np.ndarray:
        """Points of ``group``'s lattice, optionally restricted to ``x_u == x_v``."""
        key = (group, tie)
        if key not in self._cache:
            n = self.n_for(group)
            if tie is None:
                axes = [self.axis(name, n) for name in group]
                size = math.prod(len(a) for a in axes)
                if size > MAX_LATTICE_POINTS:
                    raise PenaltyError(
                        f"lattice for group {group_label(group)!r} has {size} points "
                        f"(limit {MAX_LATTICE_POINTS}); use fewer points per dimension"
                    )
                pts = _lattice(axes)
            else:
                u, v = tie
                free = [name for name in group if name != v]
                axes = [self.tie_axis(u, v, n) if name == u else self.axis(name, n) for name in free]
                base = _lattice(axes)
                pts = np.empty((base.shape[0], len(group)))
                for j, name in enumerate(group):
                    pts[:, j] = base[:, free.index(u if name == v else name)]
            self._cache[key] = pts
        return self._cache[key]


@dataclass(frozen=True)
class Term:
    """One constraint's slack as a signed sum of subnet input-partials.

    ``parts`` are ``(group_label, points_key, column, coefficient)``; all parts
    share the row index of their point arrays.
    """

    kind: str
    features: tuple[str, ...]
    parts: tuple[tuple[str, tuple, int, float], ...]
    names: tuple[tuple[str, ...], ...]  # features of each part's points, for witnesses


def compile_terms(spec: MonotoneSpec, grid: PenaltyGrid) -> tuple[list[Term], dict]:
    """Resolve every constraint to grid terms; returns (terms, point arrays by key)."""
    arch, schema = grid.arch, grid.schema
    points: dict[tuple, np.ndarray] = {}
    terms: list[Term] = []

    def register(group, tie=None):
        key = (group, tie)
        if key not in points:
            points[key] = grid.lattice(group, tie)
        return key

    for a in spec.individual:
        g = arch.group_of(a)
        key = register(g)
        terms.append(Term("individual", (a,), ((group_label(g), key, g.index(a), 1.0),), (g,)))

    for kind, pairs in (("weak", spec.weak_pairs), ("strong", spec.strong_pairs)):
        for a, b in pairs:
            ga, gb = arch.group_of(a), arch.group_of(b)
            if ga == gb:
                key = register(ga, (a, b) if kind == "weak" else None)
                lbl = group_label(ga)
                parts = ((lbl, key, ga.index(a), 1.0), (lbl, key, ga.index(b), -1.0))
                terms.append(Term(kind, (a, b), parts, (ga, ga)))
                continue
            binary_pair = schema.is_binary(a) and schema.is_binary(b)
            if len(ga) == 1 and len(gb) == 1 and (kind == "weak" or binary_pair):
                n = grid.points_1d
                tkey = ("tie", a, b, grid.refine)
                if tkey not in points:
                    points[tkey] = grid.tie_axis(a, b, n)[:, None]
                parts = ((group_label(ga), tkey, 0, 1.0), (group_label(gb), tkey, 0, -1.0))
                terms.append(Term(kind, (a, b), parts, (ga, gb)))
                continue
            raise PenaltyError(
                f"{kind} pair ({a}, {b}) spans groups {group_label(ga)!r} and {group_label(gb)!r}; "
                "group pairwise-related features together"
            )
    return terms, points


@dataclass
class TermResult:
    kind: str
    features: tuple[str, ...]
    value: float
    min_slack: float
    witness: dict


@dataclass
class PenaltyReport:
    h1: float
    h2: float
    h3: float
    epsilon_used: float
    margin_used: float
    terms: list[TermResult]

    @property
    def values(self) -> tuple[float, float, float]:
        return (self.h1, self.h2, self.h3)

    def to_dict(self) -> dict:
        return {
            "h1": self.h1,
            "h2": self.h2,
            "h3": self.h3,
            "epsilon_used": self.epsilon_used,
            "margin_used": self.margin_used,
            "terms": [
                {
                    "kind": t.kind,
                    "features": list(t.features),
                    "value": t.value,
                    "min_slack": t.min_slack,
                    "worst_point": t.witness,
                }
                for t in self.terms
            ],
        }


KIND_INDEX = {"individual": 0, "weak": 1, "strong": 2}


class Penalties:
    """Compiled penalty terms for one (spec, grid) pair, reusable across steps."""

    def __init__(self, spec: MonotoneSpec, grid: PenaltyGrid):
        self.spec, self.grid = spec, grid
        self.terms, self.points = compile_terms(spec, grid)
        self.counts = [sum(t.kind == k for t in self.terms) for k in KIND_INDEX]

    def __len__(self):
        return len(self.terms)

    def _tapes(self, model: GroveModel) -> dict:
        needed = {(lbl, key) for t in self.terms for lbl, key, _, _ in t.parts}
        return {(lbl, key): dc.tape(model.subnet(lbl), self.points[key]) for lbl, key in sorted(needed, key=repr)}

    def _slack(self, term: Term, partials: dict) -> np.ndarray:
        g = None
        for lbl, key, col, coef in term.parts:
            v = coef * partials[(lbl, key)].input_grad[:, col]
            g = v if g is None else g + v
        return g

    def evaluate(
        self,
        model: GroveModel,
        eps: float = 0.0,
        margin: float = 0.0,
        lambdas=None,
        want_grad: bool = False,
    ):
        """Penalty report, plus the gradient of ``sum(lambda_i * h_i)`` if requested."""
        if eps < 0:
            raise PenaltyError("eps must be >= 0")
        partials = self._tapes(model)
        sums = [0.0, 0.0, 0.0]
        results = []
        cots: dict = {}
        lam = np.ones(3) if lambdas is None else np.asarray(lambdas, dtype=float)
        for term in self.terms:
            g = self._slack(term, partials)
            if g.size == 0:
                raise PenaltyError("empty penalty grid")
            r = np.maximum(eps, margin - g)
            val = float(np.mean(r * r))
            k = KIND_INDEX[term.kind]
            sums[k] += val
            i = int(np.argmin(g))
            witness = {}
            for (lbl, key, _, _), names in zip(term.parts, term.names):
                row = self.points[key][i]
                witness.update({n: float(row[j] if len(row) > 1 else row[0]) for j, n in enumerate(names)})
            results.append(TermResult(term.kind, term.features, val, float(g[i]), witness))
            if want_grad and lam[k] != 0.0:
                active = (margin - g) > eps
                dg = -2.0 * np.where(active, r, 0.0) / g.size * lam[k] / self.counts[k]
                for lbl, key, col, coef in term.parts:
                    buf = cots.setdefault((lbl, key), np.zeros(partials[(lbl, key)].input_grad.shape))
                    buf[:, col] += coef * dg
        h = [s / c if c else 0.0 for s, c in zip(sums, self.counts)]
        report = PenaltyReport(h[0], h[1], h[2], eps, margin, results)
        if not want_grad:
            return report
        grad = np.zeros(model.flat_params().shape)
        slices = model.param_slices()
        for (lbl, key), cot in cots.items():
            n, d = cot.shape
            grad[slices[lbl]] += partials[(lbl, key)].backward(np.zeros((n, 1)), cot.reshape(n, 1, d), reduce=True)
        return report, grad


def _single(kind: str, model, spec, grid, eps, margin):
    sub = {
        "individual": MonotoneSpec(individual=spec.individual),
        "weak": MonotoneSpec(weak_pairs=spec.weak_pairs),
        "strong": MonotoneSpec(strong_pairs=spec.strong_pairs),
    }[kind]
    pen = Penalties(sub, grid)
    if not pen.terms:
        return 0.0, np.zeros(model.flat_params().shape)
    lambdas = np.eye(3)[KIND_INDEX[kind]]
    report, grad = pen.evaluate(model, eps, margin, lambdas, want_grad=True)
    return report.values[KIND_INDEX[kind]], grad


def h1(model: GroveModel, spec: MonotoneSpec, grid: PenaltyGrid, eps: float = 0.0, margin: float = 0.0):
    """Individual-monotonicity penalty and its gradient over the model's flat parameters."""
    return _single("individual", model, spec, grid, eps, margin)


def h2(model: GroveModel, spec: MonotoneSpec, grid: PenaltyGrid, eps: float = 0.0, margin: float = 0.0):
    """Weak pairwise penalty on the tied grid ``x_u == x_v``."""
    return _single("weak", model, spec, grid, eps, margin)


def h3(model: GroveModel, spec: MonotoneSpec, grid: PenaltyGrid, eps: float = 0.0, margin: float = 0.0):
    """Strong pairwise penalty over the owning group's full lattice."""
    return _single("strong", model, spec, grid, eps, margin)
