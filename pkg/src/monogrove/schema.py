"""Features, monotonicity constraints and the grove (group) structure."""

from __future__ import annotations

import json
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from .diffcore import SchemaError

KINDS = ("continuous", "count", "binary")


@dataclass(frozen=True)
class Feature:
    name: str
    kind: str = "continuous"
    lo: float = 0.0
    hi: float = 1.0
    truncation: float | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise SchemaError(f"feature {self.name!r}: unknown kind {self.kind!r}")
        if self.kind == "binary" and (self.lo, self.hi) != (0.0, 1.0):
            raise SchemaError(f"binary feature {self.name!r} must have domain [0, 1]")
        if not self.lo < self.hi:
            raise SchemaError(f"feature {self.name!r}: empty domain [{self.lo}, {self.hi}]")


@dataclass(frozen=True)
class FeatureSchema:
    features: tuple[Feature, ...]

    def __post_init__(self):
        names = [f.name for f in self.features]
        if len(set(names)) != len(names):
            raise SchemaError("feature names must be unique")

    @property
    def names(self) -> list[str]:
        return [f.name for f in self.features]

    def __len__(self) -> int:
        return len(self.features)

    def __getitem__(self, name: str) -> Feature:
        for f in self.features:
            if f.name == name:
                return f
        raise SchemaError(f"unknown feature {name!r}")

    def index(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise SchemaError(f"unknown feature {name!r}") from None

    def is_binary(self, name: str) -> bool:
        return self[name].kind == "binary"

    def to_dict(self) -> list[dict]:
        return [
            {"name": f.name, "kind": f.kind, "domain": [f.lo, f.hi], "truncation": f.truncation}
            for f in self.features
        ]

    @classmethod
    def from_dict(cls, items: Sequence[dict]) -> "FeatureSchema":
        feats = []
        for it in items:
            lo, hi = it.get("domain") or (0.0, 1.0)
            feats.append(
                Feature(it["name"], it.get("kind", "continuous"), float(lo), float(hi), it.get("truncation"))
            )
        return cls(tuple(feats))


@dataclass(frozen=True)
class MonotoneSpec:
    """Increasing-monotonicity constraints.

    ``weak_pairs`` and ``strong_pairs`` hold ``(above, below)`` tuples: the
    first feature's increments must matter at least as much as the second's.
    """

    individual: tuple[str, ...] = ()
    weak_pairs: tuple[tuple[str, str], ...] = ()
    strong_pairs: tuple[tuple[str, str], ...] = ()

    @property
    def is_empty(self) -> bool:
        return not (self.individual or self.weak_pairs or self.strong_pairs)

    def features(self) -> set[str]:
        out = set(self.individual)
        for pair in (*self.weak_pairs, *self.strong_pairs):
            out.update(pair)
        return out

    def check(self, schema: FeatureSchema) -> None:
        """Raise SchemaError if the spec is inconsistent with ``schema``."""
        known = set(schema.names)
        for name in self.features():
            if name not in known:
                raise SchemaError(f"constraint references unknown feature {name!r}")
        indiv = set(self.individual)
        for kind, pairs in (("weak", self.weak_pairs), ("strong", self.strong_pairs)):
            for a, b in pairs:
                if a == b:
                    raise SchemaError(f"{kind} pair lists {a!r} against itself")
                for name in (a, b):
                    if name not in indiv:
                        raise SchemaError(
                            f"{name!r} appears in a {kind} pair but is not individually monotone"
                        )
        transitive_closure_strong(self)

    def restricted_to(self, names: Iterable[str]) -> "MonotoneSpec":
        keep = set(names)
        return MonotoneSpec(
            tuple(a for a in self.individual if a in keep),
            tuple(p for p in self.weak_pairs if set(p) <= keep),
            tuple(p for p in self.strong_pairs if set(p) <= keep),
        )

    def to_dict(self) -> dict:
        return {
            "individual": list(self.individual),
            "weak_pairs": [list(p) for p in self.weak_pairs],
            "strong_pairs": [list(p) for p in self.strong_pairs],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MonotoneSpec":
        return cls(
            tuple(d.get("individual", ())),
            tuple(tuple(p) for p in d.get("weak_pairs", ())),
            tuple(tuple(p) for p in d.get("strong_pairs", ())),
        )


@dataclass(frozen=True)
class GroveArchitecture:
    """Partition of the features into subnet groups.

    Groups of size one are the 1-D terms, larger groups the multi-feature
    terms.  ``hidden`` gives the hidden-layer widths shared by all subnets
    unless ``group_hidden`` overrides them for a group label.
    """

    groups: tuple[tuple[str, ...], ...]
    hidden: tuple[int, ...] = (2,)
    group_hidden: dict = field(default_factory=dict)

    @property
    def labels(self) -> list[str]:
        return [group_label(g) for g in self.groups]

    def hidden_for(self, group: Sequence[str]) -> tuple[int, ...]:
        return tuple(self.group_hidden.get(group_label(group), self.hidden))

    def group_of(self, name: str) -> tuple[str, ...]:
        for g in self.groups:
            if name in g:
                return g
        raise SchemaError(f"feature {name!r} is in no group")

    def to_dict(self) -> dict:
        return {
            "groups": [list(g) for g in self.groups],
            "hidden": list(self.hidden),
            "group_hidden": {k: list(v) for k, v in sorted(self.group_hidden.items())},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GroveArchitecture":
        return cls(
            tuple(tuple(g) for g in d["groups"]),
            tuple(d.get("hidden", (2,))),
            {k: tuple(v) for k, v in d.get("group_hidden", {}).items()},
        )

    @classmethod
    def singletons(cls, schema: FeatureSchema, hidden=(2,)) -> "GroveArchitecture":
        return cls(tuple((n,) for n in schema.names), tuple(hidden))

    @classmethod
    def single_group(cls, schema: FeatureSchema, hidden=(2,)) -> "GroveArchitecture":
        return cls((tuple(schema.names),), tuple(hidden))


def group_label(group: Sequence[str]) -> str:
    return "+".join(group)


@dataclass(frozen=True)
class Violation:
    kind: str  # "partition" | "proposition1_hazard" | "unfair_comparison"
    features: tuple[str, ...]
    message: str


def transitive_closure_strong(spec: MonotoneSpec) -> list[tuple[str, str]]:
    """All strong orderings implied by chaining the declared pairs."""
    succ: dict[str, set[str]] = defaultdict(set)
    for a, b in spec.strong_pairs:
        succ[a].add(b)
    nodes = sorted({n for p in spec.strong_pairs for n in p})
    closure = []
    for src in nodes:
        seen: set[str] = set()
        stack = list(succ[src])
        while stack:
            n = stack.pop()
            if n == src:
                raise SchemaError(f"strong pairs contain a cycle through {src!r}")
            if n not in seen:
                seen.add(n)
                stack.extend(succ[n])
        closure.extend((src, dst) for dst in sorted(seen))
    return closure


def _components(nodes: Iterable[str], edges: Iterable[tuple[str, str]]) -> list[set[str]]:
    parent = {n: n for n in nodes}

    def find(n):
        while parent[n] != n:
            parent[n] = parent[parent[n]]
            n = parent[n]
        return n

    for a, b in edges:
        parent[find(a)] = find(b)
    comps: dict[str, set[str]] = defaultdict(set)
    for n in parent:
        comps[find(n)].add(n)
    return list(comps.values())


def _needs_grouping(schema: FeatureSchema, pair: tuple[str, str]) -> bool:
    # binary-binary strong pairs stay additive: weak and strong coincide there
    return not (schema.is_binary(pair[0]) and schema.is_binary(pair[1]))


def _grouping_components(schema: FeatureSchema, spec: MonotoneSpec) -> list[set[str]]:
    edges = [*spec.weak_pairs, *spec.strong_pairs]
    comps = _components(schema.names, edges)
    out = []
    for comp in comps:
        if any(set(p) <= comp and _needs_grouping(schema, p) for p in spec.strong_pairs):
            out.append(comp)
    return out


def derive_groups(
    schema: FeatureSchema,
    spec: MonotoneSpec,
    hidden: Sequence[int] = (2,),
) -> GroveArchitecture:
    """Group every pairwise-connected component that carries a non-binary strong pair.

    Everything else stays a singleton.  Groups are ordered by their first
    feature's position in the schema, and members follow schema order, so the
    result does not depend on how the constraint lists are ordered.
    """
    spec.check(schema)
    order = {n: i for i, n in enumerate(schema.names)}
    grouped = {}
    for comp in _grouping_components(schema, spec):
        members = tuple(sorted(comp, key=order.__getitem__))
        for n in members:
            grouped[n] = members
    groups, seen = [], set()
    for n in schema.names:
        g = grouped.get(n, (n,))
        if g not in seen:
            seen.add(g)
            groups.append(g)
    return GroveArchitecture(tuple(groups), tuple(hidden))


def validate(spec: MonotoneSpec, arch: GroveArchitecture, schema: FeatureSchema | None = None) -> list[Violation]:
    """Structural problems of ``arch`` for ``spec``; empty when it is sound.

    Without ``schema`` every feature is treated as non-binary.
    """
    out: list[Violation] = []
    members = [n for g in arch.groups for n in g]
    dupes = sorted({n for n in members if members.count(n) > 1})
    if dupes:
        out.append(Violation("partition", tuple(dupes), "features appear in more than one group"))
    if schema is not None:
        missing = [n for n in schema.names if n not in members]
        extra = [n for n in members if n not in schema.names]
        if missing:
            out.append(Violation("partition", tuple(missing), "features are not covered by any group"))
        if extra:
            out.append(Violation("partition", tuple(extra), "groups name unknown features"))
    covered = set(members)

    def binary(n):
        return schema is not None and schema.is_binary(n)

    def gid(n):
        return next((i for i, g in enumerate(arch.groups) if n in g), None)

    for a, b in spec.strong_pairs:
        if a not in covered or b not in covered or gid(a) == gid(b):
            continue
        if not (binary(a) and binary(b)):
            out.append(
                Violation(
                    "proposition1_hazard",
                    (a, b),
                    f"strong pair ({a}, {b}) is split across groups; an additive split forces "
                    f"{b}'s term to be constant wherever {a}'s slope vanishes",
                )
            )

    # features pairwise-linked to a grouped strong pair must share its group
    edges = [*spec.weak_pairs, *spec.strong_pairs]
    nodes = covered | spec.features()
    comps = _components(nodes, edges)
    for comp in comps:
        hot = any(set(p) <= comp and not (binary(p[0]) and binary(p[1])) for p in spec.strong_pairs)
        if not hot:
            continue
        for kind, pairs in (("weak", spec.weak_pairs), ("strong", spec.strong_pairs)):
            for a, b in pairs:
                if not set((a, b)) <= comp or a not in covered or b not in covered:
                    continue
                if gid(a) == gid(b):
                    continue
                if kind == "strong" and not (binary(a) and binary(b)):
                    continue  # already reported as a hazard
                out.append(
                    Violation(
                        "unfair_comparison",
                        (a, b),
                        f"{kind} pair ({a}, {b}) links to a strong-pair group but is split across groups",
                    )
                )
    return out


@dataclass(frozen=True)
class ConstraintFile:
    """Parsed constraint spec file."""

    spec: MonotoneSpec
    features: tuple[dict, ...] = ()
    hidden: tuple[int, ...] = (2,)


def load_constraint_file(path: str | Path) -> ConstraintFile:
    """Read a constraint spec JSON.

    Keys: ``features`` (list of names or ``{"name", "kind", "domain"}``
    objects, optional), ``individual``, ``weak_pairs``, ``strong_pairs``
    (lists of ``[above, below]``) and ``subnet`` (``{"hidden": [2]}``).
    """
    with open(path, encoding="utf-8") as fh:
        raw = json.load(fh)
    return parse_constraint_dict(raw)


def parse_constraint_dict(raw: dict) -> ConstraintFile:
    unknown = set(raw) - {"features", "individual", "weak_pairs", "strong_pairs", "subnet", "description"}
    if unknown:
        raise SchemaError(f"unknown keys in constraint file: {sorted(unknown)}")
    feats = tuple({"name": f} if isinstance(f, str) else dict(f) for f in raw.get("features", ()))
    hidden = tuple((raw.get("subnet") or {}).get("hidden", (2,)))
    if not 1 <= len(hidden) <= 2 or any(h < 1 for h in hidden):
        raise SchemaError(f"subnet hidden sizes must be 1 or 2 positive widths, got {hidden}")
    return ConstraintFile(MonotoneSpec.from_dict(raw), feats, hidden)
