"""Relational vocabularies and finite structures.

Domain elements are always the integers ``0 .. n-1``.  The identity
relation is built in and never declared.  Ordered structures carry the
relations ``le``/2 and ``succ``/2 plus the constants ``min`` and ``max``;
the natural order over ``0 .. n-1`` is what the parser synthesizes, but
any coherent linear order is accepted by validation.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from itertools import product

from .errors import ResourceError, StructuralError

ORDER_RELATIONS = (("le", 2), ("succ", 2))
ORDER_CONSTANTS = ("min", "max")


@dataclass(frozen=True)
class Vocabulary:
    """A relational signature: constant names plus (relation, arity) pairs."""

    constants: tuple[str, ...] = ()
    relations: tuple[tuple[str, int], ...] = ()
    ordered: bool = False

    def __post_init__(self):
        names = list(self.constants) + [r for r, _ in self.relations]
        if len(set(names)) != len(names):
            raise StructuralError(f"duplicate symbol in vocabulary: {names}")
        if "=" in names:
            raise StructuralError("the identity relation is implicit; do not declare '='")
        for r, a in self.relations:
            if a < 1:
                raise StructuralError(f"relation {r} must have arity >= 1, got {a}")
        if self.ordered:
            rels = dict(self.relations)
            for r, a in ORDER_RELATIONS:
                if rels.get(r) != a:
                    raise StructuralError(f"ordered vocabulary must declare {r}/{a}")
            for c in ORDER_CONSTANTS:
                if c not in self.constants:
                    raise StructuralError(f"ordered vocabulary must declare constant {c}")

    @cached_property
    def arity_of(self) -> dict[str, int]:
        return dict(self.relations)

    def has_relation(self, name: str) -> bool:
        return name in self.arity_of

    def extend(self, relations: tuple[tuple[str, int], ...]) -> "Vocabulary":
        """New vocabulary with extra relations appended (names must be fresh)."""
        return Vocabulary(self.constants, self.relations + tuple(relations), self.ordered)

    @staticmethod
    def make_ordered(constants=(), relations=()) -> "Vocabulary":
        """Attach the order built-ins to user-declared symbols."""
        rels = tuple(relations)
        rels += tuple(r for r in ORDER_RELATIONS if r[0] not in dict(rels))
        consts = tuple(constants)
        consts += tuple(c for c in ORDER_CONSTANTS if c not in consts)
        return Vocabulary(consts, rels, ordered=True)


@dataclass(frozen=True)
class FiniteStructure:
    """A concrete interpretation of a vocabulary over domain {0..n-1}."""

    vocabulary: Vocabulary
    n: int
    const_items: tuple[tuple[str, int], ...] = ()
    rel_items: tuple[tuple[str, frozenset[tuple[int, ...]]], ...] = ()

    def __post_init__(self):
        if self.n < 1:
            raise StructuralError("domain must be nonempty")
        if [c for c, _ in self.const_items] != list(self.vocabulary.constants):
            raise StructuralError("constant interpretations must match the vocabulary")
        if [r for r, _ in self.rel_items] != [r for r, _ in self.vocabulary.relations]:
            raise StructuralError("relation interpretations must match the vocabulary")
        for c, v in self.const_items:
            if not 0 <= v < self.n:
                raise StructuralError(f"constant {c} = {v} out of range")
        arities = self.vocabulary.arity_of
        for r, tuples in self.rel_items:
            for t in tuples:
                if len(t) != arities[r] or any(not 0 <= e < self.n for e in t):
                    raise StructuralError(f"tuple {t} invalid for {r}/{arities[r]}")
        if self.vocabulary.ordered:
            self._check_order()

    def _check_order(self):
        le = self.rel("le")
        n = self.n
        if not all(((a, b) in le) != ((b, a) in le) for a in range(n) for b in range(n) if a != b):
            raise StructuralError("le is not a total order")
        if not all((a, a) in le for a in range(n)):
            raise StructuralError("le must be reflexive")
        for a, b, c in product(range(n), repeat=3):
            if (a, b) in le and (b, c) in le and (a, c) not in le:
                raise StructuralError("le is not transitive")
        expected_succ = frozenset(
            (a, b)
            for a in range(n)
            for b in range(n)
            if a != b and (a, b) in le
            and not any(c != a and c != b and (a, c) in le and (c, b) in le for c in range(n))
        )
        if self.rel("succ") != expected_succ:
            raise StructuralError("succ does not match the successor of le")
        least = next(a for a in range(n) if all((a, b) in le for b in range(n)))
        greatest = next(a for a in range(n) if all((b, a) in le for b in range(n)))
        if self.const("min") != least or self.const("max") != greatest:
            raise StructuralError("min/max must be the extremes of le")

    @cached_property
    def _consts(self) -> dict[str, int]:
        return dict(self.const_items)

    @cached_property
    def _rels(self) -> dict[str, frozenset[tuple[int, ...]]]:
        return dict(self.rel_items)

    def const(self, name: str) -> int:
        return self._consts[name]

    def rel(self, name: str) -> frozenset[tuple[int, ...]]:
        return self._rels[name]

    def with_relations(self, extra: dict[str, frozenset[tuple[int, ...]]],
                       arities: dict[str, int]) -> "FiniteStructure":
        """Extend by new relations (used to freeze second-order assignments)."""
        vocab = self.vocabulary.extend(tuple((r, arities[r]) for r in extra))
        items = self.rel_items + tuple((r, frozenset(extra[r])) for r in extra)
        return FiniteStructure(vocab, self.n, self.const_items, items)

    def induced_substructure(self, elements: tuple[int, ...]) -> "FiniteStructure":
        """Substructure on `elements`, relabelled to 0..len-1 in given order."""
        if not elements:
            raise StructuralError("substructure domain must be nonempty")
        index = {e: i for i, e in enumerate(elements)}
        for c, v in self.const_items:
            if v not in index:
                raise StructuralError(f"constant {c} not contained in substructure domain")
        consts = tuple((c, index[v]) for c, v in self.const_items)
        rels = tuple(
            (r, frozenset(tuple(index[e] for e in t) for t in tuples
                          if all(e in index for e in t)))
            for r, tuples in self.rel_items
        )
        return FiniteStructure(self.vocabulary, len(elements), consts, rels)


def make_structure(vocab: Vocabulary, n: int, consts: dict[str, int] | None = None,
                   rels: dict[str, set[tuple[int, ...]]] | None = None) -> FiniteStructure:
    """Convenience constructor; missing relations are empty, constants default 0."""
    consts = consts or {}
    rels = rels or {}
    const_items = tuple((c, consts.get(c, 0)) for c in vocab.constants)
    rel_items = tuple((r, frozenset(rels.get(r, ()))) for r, _ in vocab.relations)
    return FiniteStructure(vocab, n, const_items, rel_items)


def natural_order_relations(n: int) -> dict[str, frozenset[tuple[int, ...]]]:
    le = frozenset((a, b) for a in range(n) for b in range(n) if a <= b)
    succ = frozenset((a, a + 1) for a in range(n - 1))
    return {"le": le, "succ": succ}


def enumerate_structures(vocab: Vocabulary, n: int, budget: int = 1_000_000):
    """Yield every structure over domain [0,n) exactly once, deterministically.

    For ordered vocabularies only the natural order is enumerated; the
    user-declared relations and constants still range over everything.
    """
    if n < 1:
        raise StructuralError("n must be >= 1")
    builtin_rels = dict(ORDER_RELATIONS) if vocab.ordered else {}
    builtin_consts = set(ORDER_CONSTANTS) if vocab.ordered else set()
    free_rels = [(r, a) for r, a in vocab.relations if r not in builtin_rels]
    free_consts = [c for c in vocab.constants if c not in builtin_consts]

    total = 1
    for _, a in free_rels:
        total *= 2 ** (n ** a)
    total *= n ** len(free_consts)
    if total > budget:
        raise ResourceError(
            f"enumeration of {total} structures exceeds budget {budget}", needed=total)

    order = natural_order_relations(n) if vocab.ordered else {}
    tuple_spaces = [sorted(product(range(n), repeat=a)) for _, a in free_rels]
    for const_choice in product(range(n), repeat=len(free_consts)):
        consts = dict(zip(free_consts, const_choice))
        if vocab.ordered:
            consts["min"] = 0
            consts["max"] = n - 1
        for masks in product(*(range(2 ** (n ** a)) for _, a in free_rels)):
            rels: dict[str, set[tuple[int, ...]]] = dict(order)
            for (r, _), mask, space in zip(free_rels, masks, tuple_spaces):
                rels[r] = {t for i, t in enumerate(space) if mask >> i & 1}
            yield make_structure(vocab, n, consts, rels)
