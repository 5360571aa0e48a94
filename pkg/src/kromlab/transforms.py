"""Formula-to-formula rewrites.

* ``drop_innermost_universal`` removes an innermost universal second-order
  block clause by clause (tautology removal, the positive/negative pair
  becoming a tuple equality, plain deletion otherwise).
* ``expand_exists_r`` eliminates nonemptiness guards from an existential
  Krom formula, producing a disjunction of guard-free formulas under
  fresh first-order existential prefixes.
* ``skolemize_fo`` rewrites a prenex first-order formula into the
  exists-one-relation normal form whose relation encodes a Skolem
  function per existential block.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import StructuralError
from .logic import (Atom, Clause, ClausalFormula, Conj, Disj, Exists, ExistsSO,
                    FALSE_CLAUSE, ForAll, ForAllSO, FragmentKind, FreshNames,
                    GuardedExists, Lit, Neg, Node, TreeFormula, TupleEq,
                    classify, flatten_tuple_eqs, qf_to_clauses, substitute,
                    tree_children, used_names, v)
from .structures import Vocabulary


@dataclass
class RewriteStep:
    rule: str
    detail: str
    before: str
    after: str


@dataclass
class RewriteTrace:
    """Chained snapshots: each step's `after` is the next step's `before`."""

    steps: list[RewriteStep] = field(default_factory=list)

    def add(self, rule, detail, before, after):
        self.steps.append(RewriteStep(rule, detail, before, after))

    def replay(self, initial: str) -> str:
        state = initial
        for step in self.steps:
            if step.before != state:
                raise StructuralError(
                    f"trace broken at rule {step.rule}: state diverged")
            state = step.after
        return state

    def format(self) -> str:
        lines = []
        for i, s in enumerate(self.steps):
            lines.append(f"[{i}] {s.rule}: {s.detail}")
            lines.append(f"    before: {s.before}")
            lines.append(f"    after:  {s.after}")
        return "\n".join(lines)


def _snapshot(formula) -> str:
    from .textio import print_formula  # deferred: textio imports logic only
    return print_formula(formula)


# ---------------------------------------------------------------------------
# Innermost universal block elimination


def drop_innermost_universal(formula: ClausalFormula,
                             trace: RewriteTrace | None = None) -> ClausalFormula:
    """Eliminate the innermost (universal) second-order block.

    Per clause: a guard together with a negative literal of the same
    variable makes the clause a tautology (removed); a positive/negative
    pair of one variable becomes the tuple equality of their argument
    tuples; otherwise the block literals are simply deleted.
    """
    blocks = formula.alternation_blocks()
    if not blocks or blocks[-1][0].quant != "forall":
        raise StructuralError("innermost second-order block is not universal")
    block_names = {q.name for q in blocks[-1]}

    state = formula
    for clause in formula.matrix:
        rewritten = _drop_clause(clause, block_names)
        if rewritten == [clause]:
            continue
        before = _snapshot(state)
        new_matrix = []
        for cl in state.matrix:
            new_matrix.extend(rewritten if cl == clause else [cl])
        state = ClausalFormula(state.vocabulary, state.so_prefix, state.fo_vars,
                               tuple(dict.fromkeys(new_matrix)), state.fo_exists)
        if trace is not None:
            rule = _drop_rule_name(clause, block_names)
            trace.add(rule, _clause_text(clause), before, _snapshot(state))

    before = _snapshot(state)
    result = ClausalFormula(
        state.vocabulary,
        tuple(q for q in state.so_prefix if q.name not in block_names),
        state.fo_vars, state.matrix, state.fo_exists)
    if trace is not None:
        trace.add("drop-prefix", " ".join(sorted(block_names)), before,
                  _snapshot(result))
    return result


def _clause_text(clause) -> str:
    from .textio import print_literal
    return "(" + " | ".join(print_literal(l) for l in clause.literals) + ")"


def _block_literals(clause, block_names):
    out = []
    for lit in clause.literals:
        if isinstance(lit, Atom) and lit.pred in block_names:
            out.append(lit)
        elif isinstance(lit, GuardedExists) and lit.var in block_names:
            out.append(lit)
    return out


def _drop_rule_name(clause, block_names) -> str:
    block = _block_literals(clause, block_names)
    guards = {l.var for l in block if isinstance(l, GuardedExists)}
    if any(isinstance(l, Atom) and not l.positive and l.pred in guards
           for l in block):
        return "case1-tautology"
    if _case2_pair(block) is not None:
        return "case2-equality"
    return "case3-delete"


def _case2_pair(block):
    if len(block) != 2:
        return None
    a, b = block
    if not (isinstance(a, Atom) and isinstance(b, Atom) and a.pred == b.pred):
        return None
    if a.positive == b.positive:
        return None
    pos, neg = (a, b) if a.positive else (b, a)
    return pos, neg


def _drop_clause(clause, block_names) -> list[Clause]:
    block = _block_literals(clause, block_names)
    if not block:
        return [clause]
    guards = {l.var for l in block if isinstance(l, GuardedExists)}
    if any(isinstance(l, Atom) and not l.positive and l.pred in guards
           for l in block):
        return []  # tautology: guard with a negative literal of the same variable
    rest = tuple(l for l in clause.literals if l not in block)
    pair = _case2_pair(block)
    if pair is not None:
        pos, neg = pair
        eq = TupleEq(pos.terms, neg.terms, True)
        return flatten_tuple_eqs(Clause(rest + (eq,)))
    return [Clause(rest) if rest else FALSE_CLAUSE]


def strip_universal_blocks(formula: ClausalFormula,
                           trace: RewriteTrace | None = None) -> ClausalFormula:
    """Apply drop_innermost_universal while the innermost block is universal."""
    current = formula
    while current.so_prefix and current.alternation_blocks()[-1][0].quant == "forall":
        current = drop_innermost_universal(current, trace)
    return current


# ---------------------------------------------------------------------------
# Guard expansion


def _has_guard(formula, var) -> bool:
    return any(isinstance(l, GuardedExists) and l.var == var
               for cl in formula.matrix for l in cl.literals)


def expand_exists_r(formula: ClausalFormula,
                    trace: RewriteTrace | None = None) -> list[ClausalFormula]:
    """Split an existential Krom formula into guard-free disjuncts.

    For each guarded variable R, in declaration order and per disjunct:
    one branch substitutes R by the empty relation, the other adds a
    fresh existential point tuple and substitutes R z by (z = y) | R z,
    which turns the guard into a tautology.
    """
    tag = classify(formula)
    if tag.kind is FragmentKind.FO_UNIVERSAL_CNF:
        return [formula]
    if tag.kind not in (FragmentKind.SIGMA_KROM, FragmentKind.SIGMA_KROM_R) \
            or tag.k != 1:
        raise StructuralError(f"guard expansion needs an existential Krom "
                              f"formula, got {tag}")

    disjuncts = [formula]
    for q in formula.so_prefix:
        if not any(_has_guard(d, q.name) for d in disjuncts):
            continue
        before = _snapshot(tuple(disjuncts))
        next_round = []
        for d in disjuncts:
            if not _has_guard(d, q.name):
                next_round.append(d)
                continue
            names = FreshNames(used_names(d))
            pattern = names.fresh_tuple("z", q.arity)
            point = names.fresh_tuple("w", q.arity)
            empty_branch = substitute(d, q.name, pattern, False)
            widened = ClausalFormula(d.vocabulary, d.so_prefix, d.fo_vars,
                                     d.matrix, point + d.fo_exists)
            replacement = (
                TupleEq(tuple(v(p) for p in pattern),
                        tuple(v(w) for w in point), True),
                Atom(q.name, tuple(v(p) for p in pattern), True),
            )
            point_branch = substitute(widened, q.name, pattern, replacement)
            next_round.extend([empty_branch, point_branch])
        disjuncts = next_round
        if trace is not None:
            trace.add("expand-guard", q.name, before, _snapshot(tuple(disjuncts)))
    return disjuncts


# ---------------------------------------------------------------------------
# Prenexing (artifact plumbing) and Skolemization


@dataclass(frozen=True)
class PrenexFO:
    """A prenex first-order formula with a CNF matrix."""

    vocabulary: Vocabulary
    prefix: tuple[tuple[str, str], ...]  # (quant, variable)
    matrix: tuple[Clause, ...]

    def to_tree(self) -> TreeFormula:
        node: Node = Conj(tuple(Disj(tuple(Lit(l) for l in cl.literals))
                                for cl in self.matrix))
        for quant, var in reversed(self.prefix):
            node = (ForAll if quant == "forall" else Exists)(var, node)
        return TreeFormula(self.vocabulary, node)


def prenex_normal_form(formula: TreeFormula) -> PrenexFO:
    """Pull first-order quantifiers to the front and CNF the matrix.

    Bound variables are renamed apart first, so quantifier order within
    independent subformulas is immaterial.
    """
    names = FreshNames(_all_names(formula))
    renamed = _rename_apart(formula.root, names, {})
    prefix, body = _pull_quantifiers(renamed)
    clauses = qf_to_clauses(body)
    matrix = () if clauses is None else clauses
    occurring = _term_variables(matrix)
    # vacuous quantifiers are sound to drop: domains are nonempty
    prefix = tuple((q, x) for q, x in prefix if x in occurring)
    return PrenexFO(formula.vocabulary, prefix, matrix)


def _all_names(formula: TreeFormula) -> set[str]:
    names = set(formula.vocabulary.constants) | set(formula.vocabulary.arity_of)
    stack = [formula.root]
    while stack:
        node = stack.pop()
        if isinstance(node, (ForAll, Exists)):
            names.add(node.var)
        elif isinstance(node, (ForAllSO, ExistsSO)):
            names.add(node.var)
        elif isinstance(node, Lit):
            lit = node.lit
            if isinstance(lit, Atom):
                names.update(t.name for t in lit.terms)
            elif isinstance(lit, TupleEq):
                names.update(t.name for t in lit.left + lit.right)
        stack.extend(tree_children(node))
    return names


def _rename_apart(node: Node, names: FreshNames, env: dict[str, str]) -> Node:
    if isinstance(node, Lit):
        lit = node.lit
        if isinstance(lit, Atom):
            return Lit(Atom(lit.pred, tuple(_rename_term(t, env) for t in lit.terms),
                            lit.positive))
        if isinstance(lit, TupleEq):
            return Lit(TupleEq(tuple(_rename_term(t, env) for t in lit.left),
                               tuple(_rename_term(t, env) for t in lit.right),
                               lit.positive))
        return node
    if isinstance(node, Conj):
        return Conj(tuple(_rename_apart(p, names, env) for p in node.parts))
    if isinstance(node, Disj):
        return Disj(tuple(_rename_apart(p, names, env) for p in node.parts))
    if isinstance(node, Neg):
        return Neg(_rename_apart(node.body, names, env))
    if isinstance(node, (ForAll, Exists)):
        fresh = names.fresh(node.var)
        body = _rename_apart(node.body, names, {**env, node.var: fresh})
        return type(node)(fresh, body)
    raise StructuralError("prenexing requires a first-order formula")


def _rename_term(term, env):
    if term.kind == "var":
        if term.name not in env:
            raise StructuralError(f"free variable {term.name} in prenex input")
        return v(env[term.name])
    return term


def _pull_quantifiers(node: Node):
    if isinstance(node, Lit):
        return (), node
    if isinstance(node, Neg):
        prefix, body = _pull_quantifiers(node.body)
        flipped = tuple(("forall" if q == "exists" else "exists", x)
                        for q, x in prefix)
        return flipped, Neg(body)
    if isinstance(node, (Conj, Disj)):
        prefix: tuple = ()
        bodies = []
        for p in node.parts:
            sub_prefix, sub_body = _pull_quantifiers(p)
            prefix += sub_prefix
            bodies.append(sub_body)
        return prefix, type(node)(tuple(bodies))
    if isinstance(node, (ForAll, Exists)):
        quant = "forall" if isinstance(node, ForAll) else "exists"
        prefix, body = _pull_quantifiers(node.body)
        return ((quant, node.var),) + prefix, body
    raise StructuralError("prenexing requires a first-order formula")


def _term_variables(matrix) -> set[str]:
    out = set()
    for cl in matrix:
        for lit in cl.literals:
            terms = ()
            if isinstance(lit, Atom):
                terms = lit.terms
            elif isinstance(lit, TupleEq):
                terms = lit.left + lit.right
            out.update(t.name for t in terms if t.kind == "var")
    return out


@dataclass(frozen=True)
class SkolemParts:
    """The pieces of the exists-one-relation normal form."""

    y_name: str
    blocks: tuple[tuple[tuple[str, ...], tuple[str, ...]], ...]  # (x-bar_i, y-bar_i)
    matrix: tuple[Clause, ...]

    @property
    def x_all(self) -> tuple[str, ...]:
        return tuple(x for xs, _ in self.blocks for x in xs)

    @property
    def y_all(self) -> tuple[str, ...]:
        return tuple(y for _, ys in self.blocks for y in ys)

    @property
    def args(self) -> tuple[str, ...]:
        return self.x_all + self.y_all

    @property
    def arity(self) -> int:
        return len(self.args)


def skolem_parts(prenex: PrenexFO, y_base: str = "Y") -> SkolemParts | None:
    """Group the prefix into (universal, existential) blocks.

    Returns None when the prefix has no existential variable (the
    rewrite is the identity in that case).
    """
    if not any(q == "exists" for q, _ in prenex.prefix):
        return None
    blocks: list[tuple[list[str], list[str]]] = []
    for quant, var in prenex.prefix:
        if quant == "forall":
            if not blocks or blocks[-1][1]:
                blocks.append(([], []))
            blocks[-1][0].append(var)
        else:
            if not blocks:
                blocks.append(([], []))
            blocks[-1][1].append(var)
    names = FreshNames(_prenex_names(prenex))
    y_name = names.fresh(y_base)
    return SkolemParts(y_name, tuple((tuple(xs), tuple(ys)) for xs, ys in blocks),
                       prenex.matrix)


def _prenex_names(prenex: PrenexFO) -> set[str]:
    names = set(prenex.vocabulary.constants) | set(prenex.vocabulary.arity_of)
    names.update(var for _, var in prenex.prefix)
    names.update(_term_variables(prenex.matrix))
    return names


def skolemize_fo(prenex: PrenexFO) -> TreeFormula:
    """Lemma-style normal form: one existential relation encoding a Skolem
    function per existential block, as exists Y (totality & dependence &
    matrix containment).  Inputs without existentials pass through."""
    parts = skolem_parts(prenex)
    if parts is None:
        return prenex.to_tree()

    y_atom = lambda args: Lit(Atom(parts.y_name, tuple(v(a) for a in args), True))
    not_y = lambda args: Lit(Atom(parts.y_name, tuple(v(a) for a in args), False))

    phi1: Node = y_atom(parts.args)
    for y in reversed(parts.y_all):
        phi1 = Exists(y, phi1)
    for x in reversed(parts.x_all):
        phi1 = ForAll(x, phi1)

    names = FreshNames(_prenex_names(prenex) | {parts.y_name})
    primed = {var: names.fresh(var) for var in parts.args}
    args2 = tuple(primed[a] for a in parts.args)
    dependence = []
    for i, (_, ys) in enumerate(parts.blocks):
        agree = [Lit(TupleEq((v(x),), (v(primed[x]),), False))
                 for xs, _ in parts.blocks[:i + 1] for x in xs]
        same = Conj(tuple(Lit(TupleEq((v(y),), (v(primed[y]),), True)) for y in ys))
        dependence.append(Disj(tuple(agree) + (same,)))
    phi2: Node = Disj((not_y(parts.args), not_y(args2), Conj(tuple(dependence))))
    for var in reversed(parts.args + args2):
        phi2 = ForAll(var, phi2)

    body = Conj(tuple(Disj(tuple(Lit(l) for l in cl.literals))
                      for cl in parts.matrix))
    phi3: Node = Disj((not_y(parts.args), body))
    for var in reversed(parts.args):
        phi3 = ForAll(var, phi3)

    root = ExistsSO(parts.y_name, parts.arity, Conj((phi1, phi2, phi3)))
    return TreeFormula(prenex.vocabulary, root)
