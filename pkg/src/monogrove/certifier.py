"""Post-hoc monotonicity checks.

``certify`` works on exact derivatives over an audit lattice.  It also
handles pairs split across groups, which training never produces but which
NAM-style baselines do: with an additive model the strong condition then
separates into ``min df_y - max df_z`` over the two groups' lattices.

``certify_discrete`` checks the defining inequalities directly on function
values with integer increments; it is the oracle for the derivative route
on count and binary features.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import diffcore as dc
from . import grove
from .grove import GroveModel
from .penalty import PenaltyGrid
from .schema import GroveArchitecture, MonotoneSpec, Violation, group_label, transitive_closure_strong, validate

DME_TAIL_THRESHOLD = 0.5
SLOPE_FLOOR = 1e-3
MAX_COMPARISONS = 10**6


class DomainTooLarge(ValueError):
    pass


@dataclass
class ConstraintCheck:
    kind: str  # individual | weak | strong
    features: tuple[str, ...]
    min_margin: float
    witness_point: dict | None = None
    witness_pair: tuple[dict, dict] | None = None  # (should-be-lower, should-be-higher)
    implied: bool = False  # added by transitive closure

    def __post_init__(self):
        if self.passed:  # witnesses only accompany failures
            self.witness_point = self.witness_pair = None

    @property
    def passed(self) -> bool:
        return self.min_margin >= 0

    def to_dict(self) -> dict:
        d = {
            "kind": self.kind,
            "features": list(self.features),
            "pass": self.passed,
            "min_margin": self.min_margin,
            "implied": self.implied,
            "witness_point": self.witness_point,
        }
        if self.witness_pair is not None:
            d["witness_pair"] = list(self.witness_pair)
        return d


@dataclass
class DMEFinding:
    feature: str
    is_dme: bool
    shape_ok: bool  # positive and strictly decreasing differences
    first_differences: list[float]


@dataclass
class CertificationReport:
    checks: list[ConstraintCheck] = field(default_factory=list)
    dme_findings: list[DMEFinding] = field(default_factory=list)
    structural: list[Violation] = field(default_factory=list)
    method: str = "derivative"

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def failures(self) -> list[ConstraintCheck]:
        return [c for c in self.checks if not c.passed]

    def check_for(self, kind: str, features: Sequence[str]) -> ConstraintCheck:
        for c in self.checks:
            if c.kind == kind and c.features == tuple(features):
                return c
        raise KeyError((kind, tuple(features)))

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "pass": self.passed,
            "checks": [c.to_dict() for c in self.checks],
            "dme_findings": [vars(f) for f in self.dme_findings],
            "structural": [
                {"kind": v.kind, "features": list(v.features), "message": v.message} for v in self.structural
            ],
        }

    def summary(self) -> str:
        lines = [f"certification ({self.method}): {'PASS' if self.passed else 'FAIL'}"]
        for c in self.checks:
            tag = "ok  " if c.passed else "FAIL"
            extra = "" if c.passed else f"  witness={c.witness_pair or c.witness_point}"
            imp = " (implied)" if c.implied else ""
            lines.append(f"  {tag} {c.kind:<10} {','.join(c.features)}{imp}  margin={c.min_margin:.6g}{extra}")
        for v in self.structural:
            lines.append(f"  HAZARD {v.kind}: {v.message}")
        return "\n".join(lines)


def _group_partials(model: GroveModel, group, pts: np.ndarray, cache: dict | None = None) -> np.ndarray:
    # lattices are cached by the grid, so the array identity is a valid key
    key = (group_label(group), id(pts))
    if cache is not None and key in cache:
        return cache[key][1]
    _, ig = dc.value_and_input_grad(model.subnet(group_label(group)), pts)
    if cache is not None:
        cache[key] = (pts, ig)  # keep pts alive so its id stays unique
    return ig


def _row(group, pts, i) -> dict:
    return {n: float(pts[i, j]) for j, n in enumerate(group)}


def _check_individual(model, grid: PenaltyGrid, a: str, cache=None) -> ConstraintCheck:
    g = model.arch.group_of(a)
    pts = grid.lattice(g)
    d = _group_partials(model, g, pts, cache)[:, g.index(a)]
    i = int(np.argmin(d))
    return ConstraintCheck("individual", (a,), float(d[i]), _row(g, pts, i))


def _check_pair(model, grid: PenaltyGrid, kind: str, a: str, b: str, implied=False, cache=None) -> ConstraintCheck:
    arch, schema = model.arch, model.schema
    ga, gb = arch.group_of(a), arch.group_of(b)
    tied = kind == "weak" or (schema.is_binary(a) and schema.is_binary(b))
    if ga == gb:
        pts = grid.lattice(ga, (a, b) if kind == "weak" else None)
        d = _group_partials(model, ga, pts, cache)
        slack = d[:, ga.index(a)] - d[:, ga.index(b)]
        i = int(np.argmin(slack))
        return ConstraintCheck(kind, (a, b), float(slack[i]), _row(ga, pts, i), implied=implied)
    if not tied:
        # strong across groups: slack separates into min over ga minus max over gb
        pa, pb = grid.lattice(ga), grid.lattice(gb)
        da = _group_partials(model, ga, pa, cache)[:, ga.index(a)]
        db = _group_partials(model, gb, pb, cache)[:, gb.index(b)]
        i, j = int(np.argmin(da)), int(np.argmax(db))
        return ConstraintCheck(
            kind, (a, b), float(da[i] - db[j]), {**_row(ga, pa, i), **_row(gb, pb, j)}, implied=implied
        )
    # tied comparison across groups: x_a == x_b == t, other coordinates free
    n = grid.points_1d if len(ga) == 1 and len(gb) == 1 else grid.points_group
    ts = grid.tie_axis(a, b, n)
    worst, best = np.inf, None
    for t in ts:
        sa = _slice_with(grid, ga, a, t)
        sb = _slice_with(grid, gb, b, t)
        da = _group_partials(model, ga, sa)[:, ga.index(a)]
        db = _group_partials(model, gb, sb)[:, gb.index(b)]
        i, j = int(np.argmin(da)), int(np.argmax(db))
        m = float(da[i] - db[j])
        if m < worst:
            worst, best = m, {**_row(ga, sa, i), **_row(gb, sb, j)}
    return ConstraintCheck(kind, (a, b), worst, best, implied=implied)


def _slice_with(grid: PenaltyGrid, group, name, value) -> np.ndarray:
    n = grid.n_for(group)
    axes = [np.array([value]) if m == name else grid.axis(m, n) for m in group]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)


def certify(model: GroveModel, spec: MonotoneSpec, audit_grid: PenaltyGrid | None = None) -> CertificationReport:
    """Minimum derivative slack of every constraint over ``audit_grid``.

    The default grid is the training default refined 4x.  Strong pairs are
    also checked for every ordering implied by chaining.
    """
    grid = audit_grid or PenaltyGrid(model.schema, model.arch).audit(4)
    if grid.arch != model.arch:
        grid = PenaltyGrid(model.schema, model.arch, grid.points_1d, grid.points_group, grid.refine)
    spec.check(model.schema)
    report = CertificationReport()
    cache: dict = {}
    for a in spec.individual:
        report.checks.append(_check_individual(model, grid, a, cache))
    for a, b in spec.weak_pairs:
        report.checks.append(_check_pair(model, grid, "weak", a, b, cache=cache))
    declared = set(spec.strong_pairs)
    for a, b in spec.strong_pairs:
        report.checks.append(_check_pair(model, grid, "strong", a, b, cache=cache))
    for a, b in transitive_closure_strong(spec):
        if (a, b) not in declared:
            report.checks.append(_check_pair(model, grid, "strong", a, b, implied=True, cache=cache))
    report.structural = validate(spec, model.arch, model.schema)
    return report


class FunctionModel:
    """Adapter so certify_discrete can check an arbitrary function of the features.

    ``fn`` maps an (n, k) array with columns in ``names`` order to n values.
    """

    def __init__(self, names: Sequence[str], fn: Callable[[np.ndarray], np.ndarray]):
        self.names = list(names)
        self.fn = fn


def table_function(names: Sequence[str], table: dict) -> FunctionModel:
    """FunctionModel backed by a ``{(v1, v2, ...): value}`` lookup."""

    def fn(pts):
        return np.array([table[tuple(int(round(v)) for v in row)] for row in pts], dtype=float)

    return FunctionModel(names, fn)


def _value_block(model, features: Sequence[str], count_domains: dict):
    """Values of the relevant part of f over the product of integer domains.

    Returns (names, domains, array) with one array axis per name.  For a
    grove model only the groups touching ``features`` matter (additivity);
    any other model is evaluated over all features in ``count_domains``.
    """
    if isinstance(model, GroveModel):
        groups = []
        for f in features:
            g = model.arch.group_of(f)
            if g not in groups:
                groups.append(g)
        names = [n for g in groups for n in g]
    else:
        names = [n for n in model.names if n in count_domains]
    missing = [n for n in names if n not in count_domains]
    if missing:
        raise ValueError(f"certify_discrete needs integer domains for {missing}")
    doms = [np.asarray(sorted(count_domains[n]), dtype=float) for n in names]
    for n, d in zip(names, doms):
        if len(d) > 1 and not np.all(np.diff(d) == 1):
            raise ValueError(f"domain of {n!r} must be a contiguous integer range")
    size = int(np.prod([len(d) for d in doms]))
    if size > MAX_COMPARISONS:
        raise DomainTooLarge(f"{size} lattice points exceed the {MAX_COMPARISONS} guard")
    pts = np.stack([m.ravel() for m in np.meshgrid(*doms, indexing="ij")], axis=1)
    if isinstance(model, GroveModel):
        vals = np.zeros(size)
        for g in groups:
            cols = [names.index(n) for n in g]
            vals += grove.contributions(model, group_label(g), pts[:, cols])
    else:
        full = np.zeros((size, len(model.names)))
        for j, n in enumerate(model.names):
            if n in names:
                full[:, j] = pts[:, names.index(n)]
            else:
                full[:, j] = min(count_domains.get(n, [0]))
        vals = np.asarray(model.fn(full), dtype=float)
    return names, doms, vals.reshape([len(d) for d in doms])


def _point(names, doms, idx) -> dict:
    return {n: float(d[i]) for n, d, i in zip(names, doms, idx)}


def _discrete_check(model, kind: str, features, count_domains, budget: list) -> ConstraintCheck:
    names, doms, V = _value_block(model, features, count_domains)
    worst = np.inf
    pair = None
    comparisons = 0
    if kind == "individual":
        ax = names.index(features[0])
        n = V.shape[ax]
        for c in range(1, n):
            hi = np.take(V, range(c, n), axis=ax)
            lo = np.take(V, range(0, n - c), axis=ax)
            comparisons += lo.size
            diff = hi - lo
            k = int(np.argmin(diff))
            if diff.flat[k] < worst:
                idx = list(np.unravel_index(k, diff.shape))
                lo_idx = list(idx)
                hi_idx = list(idx)
                hi_idx[ax] += c
                worst, pair = float(diff.flat[k]), (lo_idx, hi_idx)
    else:
        a, b = features
        ia, ib = names.index(a), names.index(b)
        da, db = doms[ia], doms[ib]
        for base in itertools.product(*[range(len(d)) for d in doms]):
            if kind == "weak" and da[base[ia]] != db[base[ib]]:
                continue
            for c in itertools.count(1):
                if base[ia] + c >= len(da) or base[ib] + c >= len(db):
                    break
                up_a = list(base)
                up_a[ia] += c
                up_b = list(base)
                up_b[ib] += c
                comparisons += 1
                diff = float(V[tuple(up_a)] - V[tuple(up_b)])
                if diff < worst:
                    worst, pair = diff, (up_b, up_a)
    budget[0] += comparisons
    if budget[0] > MAX_COMPARISONS:
        raise DomainTooLarge(f"more than {MAX_COMPARISONS} comparisons")
    if pair is None:
        return ConstraintCheck(kind, tuple(features), 0.0)
    low, high = _point(names, doms, pair[0]), _point(names, doms, pair[1])
    return ConstraintCheck(kind, tuple(features), worst, low, (low, high))


def certify_discrete(model, spec: MonotoneSpec, count_domains: dict) -> CertificationReport:
    """Brute-force check of the value-level definitions with integer increments.

    For a strong pair ``(y, z)`` every point ``x`` and every ``c >= 1`` with
    both shifted points inside the domains must satisfy
    ``f(x + c e_z) <= f(x + c e_y)``; weak pairs only use points with
    ``x_y == x_z``.  The witness pair is ``(lower, higher)``: the point that
    should not exceed the other one.
    """
    budget = [0]
    report = CertificationReport(method="discrete")
    for a in spec.individual:
        report.checks.append(_discrete_check(model, "individual", (a,), count_domains, budget))
    for a, b in spec.weak_pairs:
        report.checks.append(_discrete_check(model, "weak", (a, b), count_domains, budget))
    declared = set(spec.strong_pairs)
    for a, b in spec.strong_pairs:
        report.checks.append(_discrete_check(model, "strong", (a, b), count_domains, budget))
    for a, b in transitive_closure_strong(spec):
        if (a, b) not in declared:
            chk = _discrete_check(model, "strong", (a, b), count_domains, budget)
            chk.implied = True
            report.checks.append(chk)
    return report


def _contribution_curve(model, feature: str, values) -> np.ndarray:
    g = model.arch.group_of(feature)
    pts = np.array([[v if n == feature else model.schema[n].lo for n in g] for v in values], dtype=float)
    return grove.contributions(model, group_label(g), pts)


def dme_from_values(feature: str, values, tail_threshold: float = DME_TAIL_THRESHOLD) -> DMEFinding:
    values = np.asarray(values, dtype=float)
    if values.size < 3:
        raise ValueError("DME detection needs at least 3 grid points")
    d = np.diff(values)
    shape_ok = bool(np.all(d > 0) and np.all(np.diff(d) < 0))
    is_dme = shape_ok and bool(d[-1] < tail_threshold * d[0])
    return DMEFinding(feature, is_dme, shape_ok, d.tolist())


def detect_dme(model, feature: str, grid, tail_threshold: float = DME_TAIL_THRESHOLD) -> DMEFinding:
    """Diminishing-marginal-effect proxy on a finite grid.

    True when the first differences of the feature's contribution are all
    positive, strictly decreasing, and the last one is below
    ``tail_threshold`` times the first.  Other group members sit at their
    domain minimum.
    """
    grid = np.asarray(grid, dtype=float)
    if grid.size < 3 or np.any(np.diff(grid) <= 0):
        raise ValueError("degenerate DME grid: need >= 3 increasing points")
    return dme_from_values(feature, _contribution_curve(model, feature, grid), tail_threshold)


def proposition1_guard(
    arch: GroveArchitecture,
    spec: MonotoneSpec,
    report: CertificationReport,
    schema=None,
    slope_floor: float = SLOPE_FLOOR,
) -> list[Violation]:
    """Flag split strong pairs whose dominant feature has a (near-)zero slope somewhere.

    In an additive split the dominated term's slope can never exceed the
    dominant term's minimum slope, so a vanishing minimum forces the
    dominated term to be constant.
    """
    hazards = []
    for a, b in spec.strong_pairs:
        if arch.group_of(a) == arch.group_of(b):
            continue
        if schema is not None and schema.is_binary(a) and schema.is_binary(b):
            continue
        try:
            slope = report.check_for("individual", (a,)).min_margin
        except KeyError:
            continue
        if slope < slope_floor:
            hazards.append(
                Violation(
                    "proposition1_hazard",
                    (a, b),
                    f"{a} has minimum slope {slope:.3g} < {slope_floor:g} while split from {b}; "
                    f"{b}'s term is forced to be constant",
                )
            )
    return hazards


def dumps(report: CertificationReport) -> str:
    return json.dumps(report.to_dict(), indent=2) + "\n"
