"""Downward refinement operator over canonical concepts.

Each rule either descends a class/role hierarchy, tightens a numeric or
cardinality bound, or adds a conjunct, so iterated refinement is monotone in
concept length. Results are canonical, deduplicated, length-bounded, sorted
in canonical order, and never include the input concept itself.

Disjunction enters the search only at the very top: ``refine_top_levels``
pairs distinct refinements of Thing into binary unions, and rule application
afterwards only rewrites the operands of an existing union.
"""

from __future__ import annotations

from dataclasses import dataclass

from .concept import (TOP, And, Atomic, BoolEq, Concept, Exists, Forall,
                      MaxCard, MinCard, NotAtomic, NumGeq, NumLeq, Or, RoleExpr,
                      StrEq, Top, canonicalize, concept_length, hash_concept,
                      sort_key)
from .kb import KbStatistics, KnowledgeBase

__all__ = ["RefinementConfig", "build_mb", "refine", "refine_top_levels"]


@dataclass(frozen=True)
class RefinementConfig:
    max_cardinality: tuple[int, ...] = ()
    max_cardinality_inverse: tuple[int, ...] = ()
    use_inverse_roles: bool = True
    use_cardinality: bool = True
    use_disjunction: bool = True
    use_negation: bool = True
    max_length: int = 10

    @classmethod
    def from_stats(cls, stats: KbStatistics, **kwargs) -> "RefinementConfig":
        return cls(max_cardinality=tuple(stats.max_fillers),
                   max_cardinality_inverse=tuple(stats.max_fillers_inverse),
                   **kwargs)

    def filler_cap(self, role) -> int:
        if role.inverse:
            return self.max_cardinality_inverse[role.role_id]
        return self.max_cardinality[role.role_id]


def build_mb(kb: KnowledgeBase, stats: KbStatistics) -> list[Concept]:
    """Concrete-role restriction pool: both booleans, every numeric boundary
    as >= and <=, and every asserted string value."""
    mb: list[Concept] = []
    for b in range(len(kb.boolean_assertions)):
        mb.append(BoolEq(b, True))
        mb.append(BoolEq(b, False))
    for d in range(len(kb.numeric_assertions)):
        bounds = stats.numeric_boundaries[d]
        mb.extend(NumGeq(d, v) for v in bounds)
        mb.extend(NumLeq(d, v) for v in bounds)
    for sr in range(len(kb.string_assertions)):
        mb.extend(StrEq(sr, vi) for vi in stats.string_domains[sr])
    return mb


def _role_exprs(kb: KnowledgeBase, cfg: RefinementConfig):
    for rid in range(kb.num_roles):
        yield RoleExpr(rid, False)
    if cfg.use_inverse_roles:
        for rid in range(kb.num_roles):
            yield RoleExpr(rid, True)


def _top_refinements(bound: int, kb: KnowledgeBase, stats: KbStatistics,
                     mb: list[Concept], cfg: RefinementConfig) -> list[Concept]:
    """Rule 1: the atoms reachable directly from Thing, length-bounded."""
    out: list[Concept] = []
    if bound >= 1:
        out.extend(Atomic(c) for c in stats.top_level_classes)
        out.extend(m for m in mb if concept_length(m) <= bound)
    if cfg.use_negation and bound >= 2:
        out.extend(NotAtomic(c) for c in stats.leaf_classes)
    for role in _role_exprs(kb, cfg):
        rlen = 3 + (1 if role.inverse else 0)
        if rlen <= bound:
            out.append(Exists(role, TOP))
            out.append(Forall(role, TOP))
        if (cfg.use_cardinality and not role.inverse and rlen + 1 <= bound
                and cfg.filler_cap(role) >= 2):
            out.append(MinCard(2, role, TOP))
    return out


def refine(c: Concept, length_bound: int, kb: KnowledgeBase, stats: KbStatistics,
           mb: list[Concept], cfg: RefinementConfig) -> list[Concept]:
    """All one-step refinements of canonical ``c`` with length <= bound."""
    if length_bound < concept_length(c):
        raise ValueError("length bound below the concept's own length")
    raw = _apply_rules(c, length_bound, kb, stats, mb, cfg)
    if isinstance(c, Top) and cfg.use_disjunction:
        raw.extend(refine_top_levels(length_bound, kb, stats, mb, cfg))
    seen: set[int] = set()
    out: list[Concept] = []
    input_hash = hash_concept(c)
    for r in raw:
        r = canonicalize(r)
        if concept_length(r) > length_bound:
            continue
        h = hash_concept(r)
        if h == input_hash or h in seen:
            continue
        seen.add(h)
        out.append(r)
    out.sort(key=sort_key)
    return out


def refine_top_levels(length_bound: int, kb: KnowledgeBase, stats: KbStatistics,
                      mb: list[Concept], cfg: RefinementConfig) -> list[Concept]:
    """Binary unions of distinct rule-1 atoms, length-bounded and canonical."""
    atoms = _top_refinements(length_bound - 2, kb, stats, mb, cfg)
    out: list[Concept] = []
    for i in range(len(atoms)):
        li = concept_length(atoms[i])
        for j in range(i + 1, len(atoms)):
            if li + concept_length(atoms[j]) + 1 > length_bound:
                continue
            u = canonicalize(Or((atoms[i], atoms[j])))
            if isinstance(u, Or):  # drops weakly-equal pairs that collapse
                out.append(u)
    return out


def _apply_rules(c: Concept, bound: int, kb: KnowledgeBase, stats: KbStatistics,
                 mb: list[Concept], cfg: RefinementConfig) -> list[Concept]:
    out: list[Concept] = []

    if isinstance(c, Top):
        out.extend(_top_refinements(bound, kb, stats, mb, cfg))

    elif isinstance(c, Atomic):
        out.extend(Atomic(s) for s in kb.direct_subclasses[c.class_id])
        for x in _top_refinements(bound - 2, kb, stats, mb, cfg):
            if x != c:
                out.append(And((c, x)))

    elif isinstance(c, NotAtomic):
        # The complement shrinks as the class grows.
        out.extend(NotAtomic(s) for s in kb.direct_superclasses[c.class_id])

    elif isinstance(c, Exists):
        overhead = concept_length(c) - concept_length(c.child)
        child_bound = bound - overhead
        if child_bound >= concept_length(c.child):
            out.extend(Exists(c.role, r)
                       for r in refine(c.child, child_bound, kb, stats, mb, cfg))
        out.extend(Exists(RoleExpr(s, c.role.inverse), c.child)
                   for s in kb.direct_subroles[c.role.role_id])
        if (cfg.use_cardinality and concept_length(c) + 1 <= bound
                and cfg.filler_cap(c.role) >= 2):
            out.append(MinCard(2, c.role, c.child))

    elif isinstance(c, Forall):
        overhead = concept_length(c) - concept_length(c.child)
        child_bound = bound - overhead
        if child_bound >= concept_length(c.child):
            out.extend(Forall(c.role, r)
                       for r in refine(c.child, child_bound, kb, stats, mb, cfg))

    elif isinstance(c, MinCard):
        if c.n + 1 <= cfg.filler_cap(c.role):
            out.append(MinCard(c.n + 1, c.role, c.child))
        overhead = concept_length(c) - concept_length(c.child)
        child_bound = bound - overhead
        if child_bound >= concept_length(c.child):
            out.extend(MinCard(c.n, c.role, r)
                       for r in refine(c.child, child_bound, kb, stats, mb, cfg))

    elif isinstance(c, MaxCard):
        if c.n - 1 >= 0:
            out.append(MaxCard(c.n - 1, c.role, c.child))
        overhead = concept_length(c) - concept_length(c.child)
        child_bound = bound - overhead
        if child_bound >= concept_length(c.child):
            out.extend(MaxCard(c.n, c.role, r)
                       for r in refine(c.child, child_bound, kb, stats, mb, cfg))

    elif isinstance(c, NumGeq):
        bounds = stats.numeric_boundaries[c.role_id]
        above = [v for v in bounds if v > c.value]
        if above:
            out.append(NumGeq(c.role_id, above[0]))

    elif isinstance(c, NumLeq):
        bounds = stats.numeric_boundaries[c.role_id]
        below = [v for v in bounds if v < c.value]
        if below:
            out.append(NumLeq(c.role_id, below[-1]))

    elif isinstance(c, (BoolEq, StrEq)):
        pass  # terminal restrictions

    elif isinstance(c, (And, Or)):
        total = concept_length(c)
        for i, child in enumerate(c.children):
            child_bound = bound - (total - concept_length(child))
            if child_bound < concept_length(child):
                continue
            for r in refine(child, child_bound, kb, stats, mb, cfg):
                rebuilt = c.children[:i] + (r,) + c.children[i + 1:]
                out.append(And(rebuilt) if isinstance(c, And) else Or(rebuilt))
        if isinstance(c, And):
            for x in _top_refinements(bound - total - 1, kb, stats, mb, cfg):
                out.append(And(c.children + (x,)))

    else:
        raise TypeError(f"not a concept: {c!r}")

    return out
