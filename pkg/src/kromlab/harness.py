"""Exhaustive structure enumeration, equivalence certification, random
formula generation, and the independent graph oracle."""

from __future__ import annotations

import random
from dataclasses import dataclass
from functools import lru_cache

from .errors import StructuralError
from .evaluator import EvalConfig, check_model
from .logic import (Atom, Clause, ClausalFormula, GuardedExists, SOQuant,
                    TupleEq, c, v)
from .structures import FiniteStructure, Vocabulary, enumerate_structures, make_structure
from .transforms import PrenexFO

VOCAB_P = Vocabulary(relations=(("P", 1),))
VOCAB_E = Vocabulary(relations=(("E", 2),))


@dataclass(frozen=True)
class EquivReport:
    """Verdict of exhaustive small-structure equivalence testing."""

    equivalent: bool
    bound: int
    tested: int
    counterexample: FiniteStructure | None = None
    lhs_verdict: bool | None = None
    rhs_verdict: bool | None = None

    def __str__(self):
        if self.equivalent:
            return f"equivalent-up-to-bound {self.bound}"
        return (f"counterexample at n={self.counterexample.n}: "
                f"lhs={self.lhs_verdict} rhs={self.rhs_verdict}")


@lru_cache(maxsize=64)
def _structures_up_to(vocab: Vocabulary, max_n: int) -> tuple[FiniteStructure, ...]:
    out = []
    for n in range(1, max_n + 1):
        out.extend(enumerate_structures(vocab, n))
    return tuple(out)


def equiv_test(lhs, rhs, max_n: int, vocab: Vocabulary | None = None,
               config: EvalConfig | None = None) -> EquivReport:
    """Exhaustively compare two formulas on every structure with n <= max_n."""
    if vocab is None:
        vocab = _shared_vocabulary(lhs, rhs)
    tested = 0
    for structure in _structures_up_to(vocab, max_n):
        tested += 1
        lv = check_model(lhs, structure, config)
        rv = check_model(rhs, structure, config)
        if lv != rv:
            return EquivReport(False, max_n, tested, structure, lv, rv)
    return EquivReport(True, max_n, tested)


def _vocab_of(formula) -> Vocabulary:
    vocab = getattr(formula, "vocabulary", None)
    if vocab is not None:
        return vocab
    parts = formula.disjuncts if hasattr(formula, "disjuncts") else formula
    vocabs = {d.vocabulary for d in parts}
    if len(vocabs) != 1:
        raise StructuralError("disjuncts disagree on their vocabulary")
    return vocabs.pop()


def _shared_vocabulary(lhs, rhs) -> Vocabulary:
    left, right = _vocab_of(lhs), _vocab_of(rhs)
    if left == right:
        return left
    rels = dict(left.relations)
    for name, arity in right.relations:
        if rels.setdefault(name, arity) != arity:
            raise StructuralError(f"vocabulary clash on {name}")
    consts = tuple(dict.fromkeys(left.constants + right.constants))
    return Vocabulary(consts, tuple(sorted(rels.items())),
                      left.ordered or right.ordered)


# ---------------------------------------------------------------------------
# Graph oracle


def scc_strong_connectivity(structure: FiniteStructure, relation: str = "E") -> bool:
    """True iff every ordered pair of distinct nodes is joined by a path of
    length >= 1 (vacuously true on one node): exactly one strongly
    connected component."""
    n = structure.n
    edges = structure.rel(relation)
    adjacency: dict[int, list[int]] = {a: [] for a in range(n)}
    for a, b in edges:
        adjacency[a].append(b)

    index: dict[int, int] = {}
    low: dict[int, int] = {}
    stack: list[int] = []
    on_stack: set[int] = set()
    count = 0
    components = 0
    for start in range(n):
        if start in index:
            continue
        index[start] = low[start] = count
        count += 1
        stack.append(start)
        on_stack.add(start)
        work = [(start, iter(adjacency[start]))]
        while work:
            node, neighbors = work[-1]
            advanced = False
            for w in neighbors:
                if w not in index:
                    index[w] = low[w] = count
                    count += 1
                    stack.append(w)
                    on_stack.add(w)
                    work.append((w, iter(adjacency[w])))
                    advanced = True
                    break
                if w in on_stack and index[w] < low[node]:
                    low[node] = index[w]
            if advanced:
                continue
            work.pop()
            if work and low[node] < low[work[-1][0]]:
                low[work[-1][0]] = low[node]
            if low[node] == index[node]:
                components += 1
                while True:
                    w = stack.pop()
                    on_stack.discard(w)
                    if w == node:
                        break
    return components == 1


def random_digraph(n: int, seed: int, p: float = 0.5,
                   vocab: Vocabulary = VOCAB_E) -> FiniteStructure:
    rng = random.Random(seed)
    edges = {(a, b) for a in range(n) for b in range(n) if rng.random() < p}
    return make_structure(vocab, n, rels={"E": edges})


# ---------------------------------------------------------------------------
# Random formulas


@dataclass(frozen=True)
class FormulaProfile:
    """What random_formula should produce.

    fragment is one of 'pi1-krom-r', 'pi1-krom', 'sigma1-krom-r',
    'sigma1-krom', 'ekrom'.  so_arities lists one entry per second-order
    variable (for ekrom: alternating forall/exists, so even length).
    guarded asks for that many guard literals (krom-r fragments only).
    """

    fragment: str
    vocabulary: Vocabulary = VOCAB_P
    clause_count: int = 3
    so_arities: tuple[int, ...] = (1,)
    fo_var_count: int = 2
    guarded: int = 0
    max_fo_literals: int = 2


def random_formula(profile: FormulaProfile, seed: int) -> ClausalFormula:
    """Seeded, deterministic formula in the requested fragment."""
    rng = random.Random(seed)
    if profile.fragment in ("pi1-krom-r", "pi1-krom"):
        quants = ["forall"] * len(profile.so_arities)
    elif profile.fragment in ("sigma1-krom-r", "sigma1-krom"):
        quants = ["exists"] * len(profile.so_arities)
    elif profile.fragment == "ekrom":
        if len(profile.so_arities) % 2:
            raise StructuralError("ekrom profiles need an even variable count")
        quants = ["forall", "exists"] * (len(profile.so_arities) // 2)
    else:
        raise StructuralError(f"unknown fragment {profile.fragment}")
    if profile.guarded and profile.fragment in ("pi1-krom", "sigma1-krom", "ekrom"):
        raise StructuralError(f"{profile.fragment} admits no guards")
    if profile.guarded > len(profile.so_arities):
        raise StructuralError("more guards requested than variables")

    prefix = tuple(SOQuant(q, f"R{i}", a)
                   for i, (q, a) in enumerate(zip(quants, profile.so_arities)))
    fo_vars = tuple(f"x{i}" for i in range(profile.fo_var_count))
    builder = _ClauseBuilder(rng, profile, prefix, fo_vars)
    clauses = [builder.clause() for _ in range(profile.clause_count)]

    if profile.fragment == "ekrom":
        # force at least one clause past the Krom bound so the formula
        # cannot reclassify into a Krom fragment
        universal = [q for q in prefix if q.quant == "forall"]
        extra = tuple(builder.so_atom(rng.choice(universal)) for _ in range(3))
        clauses[rng.randrange(len(clauses))] = Clause(
            clauses[0].literals[:1] + extra)
    for i in range(profile.guarded):
        target = rng.randrange(len(clauses))
        guard = GuardedExists(prefix[i % len(prefix)].name)
        lits = clauses[target].literals
        if sum(1 for l in lits if isinstance(l, (GuardedExists,)) or
               (isinstance(l, Atom) and l.pred in {q.name for q in prefix})) >= 2:
            lits = tuple(l for l in lits
                         if not (isinstance(l, Atom)
                                 and l.pred in {q.name for q in prefix}))[:1]
        clauses[target] = Clause(lits + (guard,))
    return ClausalFormula(profile.vocabulary, prefix, fo_vars, tuple(clauses))


class _ClauseBuilder:
    def __init__(self, rng, profile, prefix, fo_vars):
        self.rng = rng
        self.profile = profile
        self.prefix = prefix
        self.fo_vars = fo_vars
        self.existential = [q for q in prefix if q.quant == "exists"]

    def term(self):
        return v(self.rng.choice(self.fo_vars))

    def so_atom(self, q: SOQuant) -> Atom:
        return Atom(q.name, tuple(self.term() for _ in range(q.arity)),
                    self.rng.random() < 0.5)

    def fo_literal(self):
        rels = self.profile.vocabulary.relations
        if rels and self.rng.random() < 0.8:
            name, arity = self.rng.choice(rels)
            return Atom(name, tuple(self.term() for _ in range(arity)),
                        self.rng.random() < 0.5)
        return TupleEq((self.term(),), (self.term(),), self.rng.random() < 0.5)

    def clause(self) -> Clause:
        lits: list = []
        if self.profile.fragment == "ekrom":
            # any number of universal-variable literals, at most two existential
            for q in self.prefix:
                limit = 2 if q.quant == "exists" else 3
                for _ in range(self.rng.randrange(limit)):
                    lits.append(self.so_atom(q))
            while sum(1 for l in lits
                      if l.pred in {q.name for q in self.existential}) > 2:
                lits.pop()
        else:
            for _ in range(self.rng.randrange(3)):  # 0..2 SO literals
                lits.append(self.so_atom(self.rng.choice(self.prefix)))
        for _ in range(self.rng.randrange(self.profile.max_fo_literals + 1)):
            lits.append(self.fo_literal())
        if not lits:
            lits.append(self.fo_literal())
        return Clause(tuple(dict.fromkeys(lits)))


@dataclass(frozen=True)
class PrenexProfile:
    """Shapes for random prenex first-order formulas."""

    vocabulary: Vocabulary = VOCAB_P
    prefix_shapes: tuple[tuple[str, ...], ...] = (
        (), ("forall",), ("exists",), ("forall", "exists"), ("exists", "forall"))
    clause_count: int = 2
    max_fo_literals: int = 2


def random_prenex_fo(profile: PrenexProfile, seed: int) -> PrenexFO:
    rng = random.Random(seed)
    shapes = profile.prefix_shapes
    if not profile.vocabulary.constants:
        shapes = tuple(s for s in shapes if s) or (("forall",),)
    shape = rng.choice(shapes)
    prefix = tuple((q, f"x{i}") for i, q in enumerate(shape))
    variables = [x for _, x in prefix]
    consts = list(profile.vocabulary.constants)

    def term():
        pool = variables + consts
        if not pool:
            raise StructuralError("prenex profile needs variables or constants")
        name = rng.choice(pool)
        return v(name) if name in variables else c(name)

    clauses = []
    for _ in range(rng.randint(1, profile.clause_count)):
        lits = []
        for _ in range(rng.randint(1, profile.max_fo_literals)):
            rels = profile.vocabulary.relations
            if rels and (rng.random() < 0.85 or len(variables) < 2):
                name, arity = rng.choice(rels)
                lits.append(Atom(name, tuple(term() for _ in range(arity)),
                                 rng.random() < 0.5))
            else:
                lits.append(TupleEq((term(),), (term(),), rng.random() < 0.5))
        clauses.append(Clause(tuple(dict.fromkeys(lits))))
    return PrenexFO(profile.vocabulary, prefix, tuple(clauses))
