"""Formula ASTs, fragment classification, and syntactic substitution.

Two formula representations coexist:

* :class:`ClausalFormula` -- a prefixed-clausal formula: an optional
  first-order existential prefix, a second-order quantifier prefix, a
  block of universal first-order variables, and a conjunction of clauses.
  This is the shape every Krom-family fragment lives in.
* :class:`TreeFormula` -- an arbitrary second-order formula tree, used as
  translation input and as the brute-force evaluation oracle target.

All nodes are immutable; formulas are safe to share between threads.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from enum import Enum
from functools import cached_property

from .errors import StructuralError
from .structures import Vocabulary

# ---------------------------------------------------------------------------
# Terms and literals


@dataclass(frozen=True)
class Term:
    name: str
    kind: str  # "var" | "const"

    def __post_init__(self):
        if self.kind not in ("var", "const"):
            raise StructuralError(f"bad term kind {self.kind}")


def v(name: str) -> Term:
    return Term(name, "var")


def c(name: str) -> Term:
    return Term(name, "const")


@dataclass(frozen=True)
class Atom:
    """(Possibly negated) application of a vocabulary relation or SO variable."""

    pred: str
    terms: tuple[Term, ...]
    positive: bool = True


@dataclass(frozen=True)
class GuardedExists:
    """The nonemptiness guard on a second-order variable; always positive."""

    var: str


@dataclass(frozen=True)
class TupleEq:
    """Equality of two equal-length term tuples.

    Positive multi-coordinate occurrences abbreviate a conjunction and must
    be distributed before a clause is Krom-classified; negative ones
    abbreviate a disjunction and may be flattened in place.
    """

    left: tuple[Term, ...]
    right: tuple[Term, ...]
    positive: bool = True

    def __post_init__(self):
        if len(self.left) != len(self.right) or not self.left:
            raise StructuralError("tuple equality needs equal nonempty lengths")


@dataclass(frozen=True)
class Falsum:
    pass


FALSUM = Falsum()

Literal = Atom | GuardedExists | TupleEq | Falsum


def negated(lit: Literal) -> Literal:
    if isinstance(lit, Atom):
        return Atom(lit.pred, lit.terms, not lit.positive)
    if isinstance(lit, TupleEq):
        return TupleEq(lit.left, lit.right, not lit.positive)
    if isinstance(lit, GuardedExists):
        raise StructuralError("guards may not be negated")
    raise StructuralError("falsum has no clause-level negation")


@dataclass(frozen=True)
class Clause:
    literals: tuple[Literal, ...]


FALSE_CLAUSE = Clause((FALSUM,))


def simplify_literals(literals) -> Clause | None:
    """Simplify a disjunction.  Returns None when the clause is trivially true."""
    out: list[Literal] = []
    seen = set()
    for lit in literals:
        if isinstance(lit, Falsum):
            continue
        if isinstance(lit, TupleEq):
            if lit.left == lit.right:
                if lit.positive:
                    return None
                continue
        if lit in seen:
            continue
        neg = None
        if isinstance(lit, (Atom, TupleEq)):
            neg = negated(lit)
        if neg is not None and neg in seen:
            return None
        seen.add(lit)
        out.append(lit)
    return Clause(tuple(out)) if out else FALSE_CLAUSE


def flatten_tuple_eqs(clause: Clause) -> list[Clause]:
    """Expand multi-coordinate tuple equalities.

    Negative ones become per-coordinate literals inside the same clause;
    a positive one multiplies the clause (one copy per coordinate).
    """
    base: list[Literal] = []
    positive_multi: list[TupleEq] = []
    for lit in clause.literals:
        if isinstance(lit, TupleEq) and len(lit.left) > 1:
            if lit.positive:
                positive_multi.append(lit)
            else:
                base.extend(TupleEq((l,), (r,), False) for l, r in zip(lit.left, lit.right))
        else:
            base.append(lit)
    shells = [base]
    for eq in positive_multi:
        shells = [s + [TupleEq((l,), (r,), True)] for s in shells
                  for l, r in zip(eq.left, eq.right)]
    out = []
    for s in shells:
        simplified = simplify_literals(s)
        if simplified is not None:
            out.append(simplified)
    return out


# ---------------------------------------------------------------------------
# Clausal formulas


@dataclass(frozen=True)
class SOQuant:
    quant: str  # "exists" | "forall"
    name: str
    arity: int

    def __post_init__(self):
        if self.quant not in ("exists", "forall"):
            raise StructuralError(f"bad quantifier {self.quant}")
        if self.arity < 1:
            raise StructuralError(f"SO variable {self.name} needs arity >= 1")


@dataclass(frozen=True)
class ClausalFormula:
    """fo_exists-prefix, SO prefix, universal FO variables, clause matrix."""

    vocabulary: Vocabulary
    so_prefix: tuple[SOQuant, ...]
    fo_vars: tuple[str, ...]
    matrix: tuple[Clause, ...]
    fo_exists: tuple[str, ...] = ()

    def __post_init__(self):
        so_names = [q.name for q in self.so_prefix]
        fo_names = list(self.fo_exists) + list(self.fo_vars)
        all_binders = so_names + fo_names
        if len(set(all_binders)) != len(all_binders):
            raise StructuralError("binder names must be unique")
        clash = set(all_binders) & (set(self.vocabulary.constants)
                                    | set(self.vocabulary.arity_of))
        if clash:
            raise StructuralError(f"binders clash with vocabulary symbols: {clash}")
        arities = dict(self.vocabulary.arity_of)
        arities.update({q.name: q.arity for q in self.so_prefix})
        bound = set(fo_names)
        consts = set(self.vocabulary.constants)
        for clause in self.matrix:
            for lit in clause.literals:
                self._check_literal(lit, arities, set(so_names), bound, consts)

    @staticmethod
    def _check_literal(lit, arities, so_names, bound_vars, consts):
        if isinstance(lit, Falsum):
            return
        if isinstance(lit, GuardedExists):
            if lit.var not in so_names:
                raise StructuralError(f"guard on non-quantified symbol {lit.var}")
            return
        if isinstance(lit, Atom):
            if lit.pred not in arities:
                raise StructuralError(f"unknown relation {lit.pred}")
            if len(lit.terms) != arities[lit.pred]:
                raise StructuralError(
                    f"arity mismatch for {lit.pred}: {len(lit.terms)} != {arities[lit.pred]}")
            terms = lit.terms
        else:
            terms = lit.left + lit.right
        for t in terms:
            if t.kind == "var" and t.name not in bound_vars:
                raise StructuralError(f"unbound variable {t.name}")
            if t.kind == "const" and t.name not in consts:
                raise StructuralError(f"undeclared constant {t.name}")

    @cached_property
    def so_names(self) -> frozenset[str]:
        return frozenset(q.name for q in self.so_prefix)

    @cached_property
    def so_arities(self) -> dict[str, int]:
        return {q.name: q.arity for q in self.so_prefix}

    def alternation_blocks(self) -> list[list[SOQuant]]:
        blocks: list[list[SOQuant]] = []
        for q in self.so_prefix:
            if blocks and blocks[-1][0].quant == q.quant:
                blocks[-1].append(q)
            else:
                blocks.append([q])
        return blocks

    def is_trivially_true(self) -> bool:
        return not self.matrix

    def to_tree(self) -> "TreeFormula":
        node: Node = Conj(tuple(Disj(tuple(Lit(l) for l in cl.literals))
                                for cl in self.matrix))
        for x in reversed(self.fo_vars):
            node = ForAll(x, node)
        for q in reversed(self.so_prefix):
            cls = ExistsSO if q.quant == "exists" else ForAllSO
            node = cls(q.name, q.arity, node)
        for y in reversed(self.fo_exists):
            node = Exists(y, node)
        return TreeFormula(self.vocabulary, node)


# ---------------------------------------------------------------------------
# General formula trees


@dataclass(frozen=True)
class Lit:
    lit: Literal


@dataclass(frozen=True)
class Conj:
    parts: tuple["Node", ...]


@dataclass(frozen=True)
class Disj:
    parts: tuple["Node", ...]


@dataclass(frozen=True)
class Neg:
    body: "Node"


@dataclass(frozen=True)
class ForAll:
    var: str
    body: "Node"


@dataclass(frozen=True)
class Exists:
    var: str
    body: "Node"


@dataclass(frozen=True)
class ForAllSO:
    var: str
    arity: int
    body: "Node"


@dataclass(frozen=True)
class ExistsSO:
    var: str
    arity: int
    body: "Node"


Node = Lit | Conj | Disj | Neg | ForAll | Exists | ForAllSO | ExistsSO

TRUE_NODE = Conj(())
FALSE_NODE = Disj(())


@dataclass(frozen=True)
class TreeFormula:
    vocabulary: Vocabulary
    root: Node


def tree_children(node: Node):
    if isinstance(node, (Conj, Disj)):
        return node.parts
    if isinstance(node, Neg):
        return (node.body,)
    if isinstance(node, (ForAll, Exists, ForAllSO, ExistsSO)):
        return (node.body,)
    return ()


def nnf(node: Node, negate: bool = False) -> Node:
    """Negation normal form; guards under negation are rejected."""
    if isinstance(node, Lit):
        if not negate:
            return node
        if isinstance(node.lit, Falsum):
            return TRUE_NODE
        return Lit(negated(node.lit))
    if isinstance(node, Neg):
        return nnf(node.body, not negate)
    if isinstance(node, Conj):
        parts = tuple(nnf(p, negate) for p in node.parts)
        return Disj(parts) if negate else Conj(parts)
    if isinstance(node, Disj):
        parts = tuple(nnf(p, negate) for p in node.parts)
        return Conj(parts) if negate else Disj(parts)
    if isinstance(node, ForAll):
        body = nnf(node.body, negate)
        return Exists(node.var, body) if negate else ForAll(node.var, body)
    if isinstance(node, Exists):
        body = nnf(node.body, negate)
        return ForAll(node.var, body) if negate else Exists(node.var, body)
    if isinstance(node, ForAllSO):
        body = nnf(node.body, negate)
        cls = ExistsSO if negate else ForAllSO
        return cls(node.var, node.arity, body)
    if isinstance(node, ExistsSO):
        body = nnf(node.body, negate)
        cls = ForAllSO if negate else ExistsSO
        return cls(node.var, node.arity, body)
    raise StructuralError(f"unexpected node {node!r}")


def qf_to_clauses(node: Node) -> tuple[Clause, ...] | None:
    """CNF of a quantifier-free tree.  None means trivially true.

    An unsatisfiable input yields a matrix containing the false clause.
    """
    node = nnf(node)
    clauses = _cnf(node)
    if clauses is None:
        return None
    out: list[Clause] = []
    seen = set()
    for lits in clauses:
        cl = simplify_literals(lits)
        if cl is None:
            continue
        if cl.literals == ():  # pragma: no cover - simplify returns FALSE_CLAUSE
            cl = FALSE_CLAUSE
        if cl not in seen:
            seen.add(cl)
            out.append(cl)
    if any(cl == FALSE_CLAUSE for cl in out):
        return (FALSE_CLAUSE,)
    return tuple(out)


def _cnf(node: Node) -> list[tuple[Literal, ...]] | None:
    """CNF of an NNF quantifier-free tree as literal tuples; None = true."""
    if isinstance(node, Lit):
        if isinstance(node.lit, Falsum):
            return [()]
        return [(node.lit,)]
    if isinstance(node, Conj):
        out: list[tuple[Literal, ...]] = []
        for p in node.parts:
            sub = _cnf(p)
            if sub is None:
                continue
            out.extend(sub)
        return out or None
    if isinstance(node, Disj):
        shells: list[tuple[Literal, ...]] = [()]
        for p in node.parts:
            sub = _cnf(p)
            if sub is None:
                return None
            new = []
            for shell in shells:
                for cl in sub:
                    cand = shell + cl
                    if _has_complementary(cand):
                        continue
                    new.append(cand)
            shells = new
            if not shells:
                return None
        return shells
    raise StructuralError("quantifier inside a quantifier-free context")


def _has_complementary(lits: tuple[Literal, ...]) -> bool:
    pos = set()
    neg = set()
    for lit in lits:
        if isinstance(lit, Atom):
            key = (lit.pred, lit.terms)
        elif isinstance(lit, TupleEq):
            if lit.left == lit.right and lit.positive:
                return True
            key = (lit.left, lit.right)
        else:
            continue
        (pos if getattr(lit, "positive", True) else neg).add(key)
    return bool(pos & neg)


def tree_so_quantifiers(node: Node) -> list[SOQuant]:
    out = []
    stack = [node]
    while stack:
        cur = stack.pop()
        if isinstance(cur, ExistsSO):
            out.append(SOQuant("exists", cur.var, cur.arity))
        elif isinstance(cur, ForAllSO):
            out.append(SOQuant("forall", cur.var, cur.arity))
        stack.extend(tree_children(cur))
    return out


# ---------------------------------------------------------------------------
# Fresh names


class FreshNames:
    """Monotone counter namespaced per formula; capture-avoiding by design."""

    def __init__(self, used):
        self._used = set(used)
        self._counter = itertools.count(1)

    def fresh(self, base: str) -> str:
        while True:
            name = f"{base}{next(self._counter)}"
            if name not in self._used:
                self._used.add(name)
                return name

    def fresh_tuple(self, base: str, k: int) -> tuple[str, ...]:
        return tuple(self.fresh(base) for _ in range(k))


def used_names(formula: ClausalFormula) -> set[str]:
    names = set(formula.vocabulary.constants) | set(formula.vocabulary.arity_of)
    names |= {q.name for q in formula.so_prefix}
    names |= set(formula.fo_exists) | set(formula.fo_vars)
    for clause in formula.matrix:
        for lit in clause.literals:
            if isinstance(lit, Atom):
                names.update(t.name for t in lit.terms)
            elif isinstance(lit, TupleEq):
                names.update(t.name for t in lit.left + lit.right)
    return names


# ---------------------------------------------------------------------------
# Fragment classification


class FragmentKind(Enum):
    FO_UNIVERSAL_CNF = "FO-universal-CNF"
    SIGMA_KROM = "Sigma-KROM"
    PI_KROM = "Pi-KROM"
    SIGMA_KROM_R = "Sigma-KROM-r"
    PI_KROM_R = "Pi-KROM-r"
    SO_EKROM = "SO-EKROM"
    PI12_EKROM = "Pi12-EKROM"
    GENERAL_SO = "GeneralSO"


@dataclass(frozen=True)
class FragmentTag:
    kind: FragmentKind
    k: int | None = None

    def __str__(self):
        base = {
            FragmentKind.FO_UNIVERSAL_CNF: "FO-universal-CNF",
            FragmentKind.SIGMA_KROM: f"Sigma^1_{self.k}-KROM",
            FragmentKind.PI_KROM: f"Pi^1_{self.k}-KROM",
            FragmentKind.SIGMA_KROM_R: f"Sigma^1_{self.k}-KROM^r",
            FragmentKind.PI_KROM_R: f"Pi^1_{self.k}-KROM^r",
            FragmentKind.SO_EKROM: "SO-EKROM",
            FragmentKind.PI12_EKROM: "Pi^1_2-EKROM",
            FragmentKind.GENERAL_SO: "GeneralSO",
        }
        return base[self.kind]


def sigma_krom_r(k: int) -> FragmentTag:
    return FragmentTag(FragmentKind.SIGMA_KROM_R, k)


def pi_krom_r(k: int) -> FragmentTag:
    return FragmentTag(FragmentKind.PI_KROM_R, k)


def so_literal_count(clause: Clause, so_names) -> int:
    count = 0
    for lit in clause.literals:
        if isinstance(lit, Atom) and lit.pred in so_names:
            count += 1
        elif isinstance(lit, GuardedExists) and lit.var in so_names:
            count += 1
    return count


def classify(formula) -> FragmentTag:
    """Most specific syntactic fragment of a formula.

    A formula with a first-order existential prefix is classified by its
    inner part.  Tree formulas are always GeneralSO.
    """
    if isinstance(formula, TreeFormula):
        return FragmentTag(FragmentKind.GENERAL_SO)
    theta = getattr(formula, "theta", None)
    if theta is not None:
        # sanctioned translation shape: a Krom disjunct plus the
        # one-element patch; classified by its main disjunct
        return classify(theta)
    if not isinstance(formula, ClausalFormula):
        raise StructuralError(f"cannot classify {type(formula).__name__}")
    if not formula.so_prefix:
        return FragmentTag(FragmentKind.FO_UNIVERSAL_CNF)

    so_names = formula.so_names
    blocks = formula.alternation_blocks()
    k = len(blocks)
    has_guard = any(isinstance(lit, GuardedExists)
                    for cl in formula.matrix for lit in cl.literals)
    if all(so_literal_count(cl, so_names) <= 2 for cl in formula.matrix):
        sigma = blocks[0][0].quant == "exists"
        if has_guard:
            return FragmentTag(FragmentKind.SIGMA_KROM_R if sigma
                               else FragmentKind.PI_KROM_R, k)
        return FragmentTag(FragmentKind.SIGMA_KROM if sigma
                           else FragmentKind.PI_KROM, k)

    if not has_guard and k % 2 == 0 and blocks[0][0].quant == "forall":
        exist_vars = frozenset(q.name for q in formula.so_prefix if q.quant == "exists")
        if all(so_literal_count(cl, exist_vars) <= 2 for cl in formula.matrix):
            return FragmentTag(FragmentKind.SO_EKROM)
    return FragmentTag(FragmentKind.GENERAL_SO)


# ---------------------------------------------------------------------------
# Substitution


def substitute(formula: ClausalFormula, pred: str, params: tuple[str, ...],
               replacement) -> ClausalFormula:
    """Replace every occurrence of the atom pattern ``pred(params)``.

    ``replacement`` is True, False, a single literal, or a tuple of
    literals read as a disjunction, all written over the pattern
    variables.  Clauses are simplified: a true clause is dropped, a false
    literal removed, an emptied clause becomes the false clause, an
    emptied matrix the true formula.
    """
    arity = (formula.so_arities.get(pred)
             or formula.vocabulary.arity_of.get(pred))
    if arity is None:
        raise StructuralError(f"unknown relation {pred}")
    if len(params) != arity:
        raise StructuralError(f"pattern arity {len(params)} != {arity} for {pred}")
    disjuncts = _replacement_disjuncts(replacement)

    new_matrix: list[Clause] = []
    for clause in formula.matrix:
        expanded = _substitute_clause(clause, pred, params, disjuncts)
        for cl in expanded:
            flattened = flatten_tuple_eqs(cl)
            new_matrix.extend(flattened)
    deduped = tuple(dict.fromkeys(new_matrix))
    so_prefix = formula.so_prefix
    if not any(_mentions(cl, pred) for cl in deduped):
        so_prefix = tuple(q for q in so_prefix if q.name != pred)
    return ClausalFormula(formula.vocabulary, so_prefix, formula.fo_vars,
                          deduped, formula.fo_exists)


def _replacement_disjuncts(replacement):
    if replacement is True or replacement is False:
        return replacement
    if isinstance(replacement, tuple):
        return replacement
    return (replacement,)


def _mentions(clause: Clause, pred: str) -> bool:
    return any((isinstance(l, Atom) and l.pred == pred)
               or (isinstance(l, GuardedExists) and l.var == pred)
               for l in clause.literals)


def _instantiate(lit: Literal, mapping: dict[str, Term]) -> Literal:
    def sub(t: Term) -> Term:
        return mapping.get(t.name, t) if t.kind == "var" else t

    if isinstance(lit, Atom):
        return Atom(lit.pred, tuple(sub(t) for t in lit.terms), lit.positive)
    if isinstance(lit, TupleEq):
        return TupleEq(tuple(sub(t) for t in lit.left),
                       tuple(sub(t) for t in lit.right), lit.positive)
    return lit


def _substitute_clause(clause, pred, params, disjuncts) -> list[Clause]:
    """Returns replacement clauses; [] means the clause became true."""
    shells: list[list[Literal]] = [[]]
    for lit in clause.literals:
        if isinstance(lit, GuardedExists) and lit.var == pred:
            value = _guard_truth(params, disjuncts)
            if value is True:
                return []
            if value is False:
                continue
            shells = [s + [value] for s in shells]
        elif isinstance(lit, Atom) and lit.pred == pred:
            mapping = dict(zip(params, lit.terms))
            if lit.positive:
                if disjuncts is True:
                    return []
                if disjuncts is False:
                    continue
                inst = [_instantiate(d, mapping) for d in disjuncts]
                shells = [s + inst for s in shells]
            else:
                if disjuncts is True:
                    continue
                if disjuncts is False:
                    return []
                # ~(d1 | d2 | ...) distributes into one copy per disjunct
                shells = [s + [negated(_instantiate(d, mapping))]
                          for s in shells for d in disjuncts]
        else:
            shells = [s + [lit] for s in shells]
    out = []
    for s in shells:
        cl = simplify_literals(s)
        if cl is not None:
            out.append(cl)
    return out


def _guard_truth(params, disjuncts):
    """Truth of `exists params . replacement` for guard occurrences."""
    if disjuncts is True or disjuncts is False:
        return disjuncts
    param_set = set(params)
    for d in disjuncts:
        if isinstance(d, TupleEq) and d.positive:
            # point equality z = y with y free of the pattern: always reachable
            sides = [d.left, d.right]
            for a, b in (sides, sides[::-1]):
                if (tuple(t.name for t in a) == tuple(params)
                        and all(t.name not in param_set for t in b)):
                    return True
    if len(disjuncts) == 1:
        d = disjuncts[0]
        if (isinstance(d, Atom) and d.positive
                and tuple(t.name for t in d.terms) == tuple(params)):
            return GuardedExists(d.pred)
    raise StructuralError("guard occurrence not closed under this replacement")


# ---------------------------------------------------------------------------
# Renaming (used by tests and transforms)


def rename_so_var(formula: ClausalFormula, old: str, new: str) -> ClausalFormula:
    if new in used_names(formula):
        raise StructuralError(f"name {new} already in use")
    prefix = tuple(SOQuant(q.quant, new if q.name == old else q.name, q.arity)
                   for q in formula.so_prefix)
    matrix = []
    for clause in formula.matrix:
        lits = []
        for lit in clause.literals:
            if isinstance(lit, Atom) and lit.pred == old:
                lit = Atom(new, lit.terms, lit.positive)
            elif isinstance(lit, GuardedExists) and lit.var == old:
                lit = GuardedExists(new)
            lits.append(lit)
        matrix.append(Clause(tuple(lits)))
    return ClausalFormula(formula.vocabulary, prefix, formula.fo_vars,
                          tuple(matrix), formula.fo_exists)


def rename_fo_var(formula: ClausalFormula, old: str, new: str) -> ClausalFormula:
    if new in used_names(formula):
        raise StructuralError(f"name {new} already in use")
    mapping = {old: v(new)}
    matrix = tuple(Clause(tuple(_instantiate(l, mapping) for l in cl.literals))
                   for cl in formula.matrix)
    ren = lambda xs: tuple(new if x == old else x for x in xs)
    return ClausalFormula(formula.vocabulary, formula.so_prefix,
                          ren(formula.fo_vars), matrix, ren(formula.fo_exists))
