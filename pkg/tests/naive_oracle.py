"""Reference semantics: a per-individual recursive interpreter.

Deliberately shares nothing with the production evaluator: it walks the
structural assertion tables (sets and lists) one individual at a time and
never touches the numpy mirrors. Used as the ground truth the bitset engine
is compared against.
"""

from dlbeam.concept import (And, Atomic, BoolEq, Exists, Forall, MaxCard,
                            MinCard, NotAtomic, NumGeq, NumLeq, Or, StrEq, Top)


def _fillers(kb, role, x):
    pairs = kb.role_assertions[role.role_id]
    if role.inverse:
        return [s for (s, o) in pairs if o == x]
    return [o for (s, o) in pairs if s == x]


def satisfies(c, kb, x) -> bool:
    if isinstance(c, Top):
        return True
    if isinstance(c, Atomic):
        return x in kb.class_members[c.class_id]
    if isinstance(c, NotAtomic):
        return x not in kb.class_members[c.class_id]
    if isinstance(c, Exists):
        return any(satisfies(c.child, kb, y) for y in _fillers(kb, c.role, x))
    if isinstance(c, Forall):
        return all(satisfies(c.child, kb, y) for y in _fillers(kb, c.role, x))
    if isinstance(c, MinCard):
        return sum(1 for y in _fillers(kb, c.role, x)
                   if satisfies(c.child, kb, y)) >= c.n
    if isinstance(c, MaxCard):
        return sum(1 for y in _fillers(kb, c.role, x)
                   if satisfies(c.child, kb, y)) <= c.n
    if isinstance(c, BoolEq):
        return any(s == x and v == c.value
                   for (s, v) in kb.boolean_assertions[c.role_id])
    if isinstance(c, NumGeq):
        return any(s == x and v >= c.value
                   for (s, v) in kb.numeric_assertions[c.role_id])
    if isinstance(c, NumLeq):
        return any(s == x and v <= c.value
                   for (s, v) in kb.numeric_assertions[c.role_id])
    if isinstance(c, StrEq):
        return any(s == x and vi == c.value_index
                   for (s, vi) in kb.string_assertions[c.role_id])
    if isinstance(c, And):
        return all(satisfies(ch, kb, x) for ch in c.children)
    if isinstance(c, Or):
        return any(satisfies(ch, kb, x) for ch in c.children)
    raise TypeError(f"not a concept: {c!r}")


def naive_covered_set(c, kb) -> set:
    return {x for x in range(kb.num_individuals) if satisfies(c, kb, x)}
