"""Prefixed DNF QBFs as structures, and the second-order-to-Krom translation.

The pipeline for a prenex source formula whose second-order prefix ends
universally:

1. ``negate_and_skolemize`` rewrites the negated first-order body into the
   one-relation Skolem normal form and re-negates, giving the intermediate
   shape  Q X_1 ... forall X_k forall W  exists xbar (forall ybar ~W zbar
   ybar  or  D_1 or ... or D_m)  with conjunctive terms D_j.
2. ``build_interpretation`` packages, inside width-d element tuples of a
   source structure, the ground DNF QBF this intermediate produces: some
   tuples encode ground terms, others ground atoms, with quantifier-free
   formulas selecting each role.
3. ``apply_interpretation`` rewrites the fixed evaluation formula
   (``phi_formula``) through those defining formulas, yielding a Krom
   formula with guards over the source vocabulary.
4. A quantifier-free disjunction over one-element isomorphism types
   patches the (excluded) one-element structures.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import product

from .errors import ParseError, StructuralError
from .evaluator import EvalConfig, GroundQbf, check_model
from .logic import (Atom, Clause, ClausalFormula, Conj, Disj, Exists, ExistsSO,
                    FALSE_CLAUSE, Falsum, ForAll, ForAllSO, FreshNames,
                    GuardedExists, Lit, Neg, Node, SOQuant, TreeFormula,
                    TupleEq, negated, qf_to_clauses, tree_children, v)
from .structures import FiniteStructure, Vocabulary, make_structure
from .transforms import prenex_normal_form, skolem_parts


# ---------------------------------------------------------------------------
# Prefixed DNF QBFs


@dataclass(frozen=True)
class PrefixedDnfQbf:
    """Alternating quantifier blocks over named variables, DNF matrix."""

    blocks: tuple[tuple[str, tuple[str, ...]], ...]
    terms: tuple[tuple[tuple[str, bool], ...], ...]

    def __post_init__(self):
        seen: set[str] = set()
        for i, (quant, names) in enumerate(self.blocks):
            if quant not in ("exists", "forall"):
                raise StructuralError(f"bad quantifier {quant}")
            if i and quant == self.blocks[i - 1][0]:
                raise StructuralError("blocks must alternate")
            for name in names:
                if name in seen:
                    raise StructuralError(f"variable {name} in two blocks")
                seen.add(name)
        for term in self.terms:
            for name, _ in term:
                if name not in seen:
                    raise StructuralError(f"term variable {name} is unbound")

    @property
    def k(self) -> int:
        return len(self.blocks)

    def to_ground(self) -> tuple[GroundQbf, dict[str, int]]:
        ids: dict[str, int] = {}
        prefix = []
        for quant, names in self.blocks:
            block_ids = []
            for name in names:
                ids[name] = len(ids) + 1
                block_ids.append(ids[name])
            prefix.append((quant, tuple(block_ids)))
        matrix = tuple(tuple(ids[n] if pos else -ids[n] for n, pos in term)
                       for term in self.terms)
        return GroundQbf(tuple(prefix), matrix, cnf=False), ids


def parse_qbf(text: str) -> PrefixedDnfQbf:
    """Text format: first line k, then k block lines `e x1 x2` / `a x3`,
    then term lines `t x1 -x2`."""
    lines = [ln.strip() for ln in text.splitlines()]
    lines = [ln for ln in lines if ln and not ln.startswith("#")]
    if not lines:
        raise ParseError("empty QBF input")
    try:
        k = int(lines[0])
    except ValueError as exc:
        raise ParseError("first line must be the block count") from exc
    if len(lines) < 1 + k:
        raise ParseError(f"expected {k} block lines")
    blocks = []
    for ln in lines[1:1 + k]:
        fields = ln.split()
        if fields[0] not in ("e", "a"):
            raise ParseError(f"block line must start with e or a: {ln}")
        blocks.append(("exists" if fields[0] == "e" else "forall",
                       tuple(fields[1:])))
    terms = []
    for ln in lines[1 + k:]:
        fields = ln.split()
        if fields[0] != "t":
            raise ParseError(f"expected a term line: {ln}")
        term = tuple((f.lstrip("-"), not f.startswith("-")) for f in fields[1:])
        terms.append(term)
    try:
        return PrefixedDnfQbf(tuple(blocks), tuple(terms))
    except StructuralError as exc:
        raise ParseError(str(exc)) from exc


def print_qbf(qbf: PrefixedDnfQbf) -> str:
    lines = [str(qbf.k)]
    for quant, names in qbf.blocks:
        lines.append(" ".join(["e" if quant == "exists" else "a", *names]).rstrip())
    for term in qbf.terms:
        lines.append(" ".join(["t", *(n if pos else f"-{n}" for n, pos in term)]))
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# QBF <-> structure encoding


def tau_vocabulary(k: int) -> Vocabulary:
    rels = [("Clause", 1)] + [(f"Var{h}", 1) for h in range(1, k + 1)]
    rels += [("Pos", 2), ("Neg", 2)]
    return Vocabulary(relations=tuple(rels))


@dataclass(frozen=True)
class QbfStructureEncoding:
    """A DNF QBF packaged as a finite structure: one element per term and
    per variable (clause and variable elements are disjoint)."""

    structure: FiniteStructure
    first_quant: str
    term_elements: tuple[int, ...]
    var_elements: tuple[tuple[str, int], ...]  # (variable, element), block order

    @property
    def k(self) -> int:
        return sum(1 for r, _ in self.structure.vocabulary.relations
                   if r.startswith("Var"))


def encode_qbf(qbf: PrefixedDnfQbf) -> QbfStructureEncoding:
    if not isinstance(qbf, PrefixedDnfQbf):
        raise StructuralError("only prefixed DNF inputs can be encoded")
    k = qbf.k
    if k < 1:
        raise StructuralError("need at least one quantifier block")
    term_elements = tuple(range(len(qbf.terms)))
    var_elements = []
    var_of: dict[str, int] = {}
    nxt = len(qbf.terms)
    for _, names in qbf.blocks:
        for name in names:
            var_of[name] = nxt
            var_elements.append((name, nxt))
            nxt += 1
    n = max(nxt, 2)

    rels: dict[str, set[tuple[int, ...]]] = {
        "Clause": {(t,) for t in term_elements},
        "Pos": set(), "Neg": set(),
    }
    for h, (_, names) in enumerate(qbf.blocks, start=1):
        rels[f"Var{h}"] = {(var_of[name],) for name in names}
    for t, term in enumerate(qbf.terms):
        for name, positive in term:
            rels["Pos" if positive else "Neg"].add((t, var_of[name]))

    structure = make_structure(tau_vocabulary(k), n, rels=rels)
    return QbfStructureEncoding(structure, qbf.blocks[0][0],
                                term_elements, tuple(var_elements))


def decode_qbf(enc: QbfStructureEncoding) -> PrefixedDnfQbf:
    """Inverse of encode_qbf up to variable renaming."""
    s = enc.structure
    k = enc.k
    name_of = {elem: f"v{elem}"
               for h in range(1, k + 1) for (elem,) in s.rel(f"Var{h}")}
    quant = enc.first_quant
    blocks = []
    for h in range(1, k + 1):
        members = tuple(name_of[e] for (e,) in sorted(s.rel(f"Var{h}")))
        blocks.append((quant, members))
        quant = "forall" if quant == "exists" else "exists"
    terms = []
    for (t,) in sorted(s.rel("Clause")):
        term = [(name_of[b], True) for (a, b) in sorted(s.rel("Pos")) if a == t]
        term += [(name_of[b], False) for (a, b) in sorted(s.rel("Neg")) if a == t]
        terms.append(tuple(term))
    return PrefixedDnfQbf(tuple(blocks), tuple(terms))


# ---------------------------------------------------------------------------
# The fixed evaluation formula


def phi_formula(k: int, first_quant: str | None = None) -> ClausalFormula:
    """The Krom formula with guards that evaluates an encoded k-block DNF
    QBF: some valuation for block 1, every valuation for block 2, ..., and
    a nonempty set of clauses all of whose literals the valuation makes
    true.  Even k starts existentially, odd k universally."""
    if k < 1:
        raise StructuralError("k must be >= 1")
    if first_quant is None:
        first_quant = "exists" if k % 2 == 0 else "forall"
    quant = first_quant
    prefix = []
    for h in range(1, k + 1):
        prefix.append(SOQuant(quant, f"X{h}", 1))
        quant = "forall" if quant == "exists" else "exists"
    if prefix[-1].quant != "forall":
        raise StructuralError("the innermost block must be universal "
                              "(even k existential-first, odd k universal-first)")
    prefix.append(SOQuant("exists", "Y", 1))

    x, y = v("x"), v("y")
    clauses = [Clause((GuardedExists("Y"),)),
               Clause((Atom("Y", (x,), False), Atom("Clause", (x,), True)))]
    for h in range(1, k + 1):
        clauses.append(Clause((Atom("Y", (x,), False), Atom("Pos", (x, y), False),
                               Atom(f"Var{h}", (y,), False), Atom(f"X{h}", (y,), True))))
        clauses.append(Clause((Atom("Y", (x,), False), Atom("Neg", (x, y), False),
                               Atom(f"Var{h}", (y,), False), Atom(f"X{h}", (y,), False))))
    return ClausalFormula(tau_vocabulary(k), tuple(prefix), ("x", "y"),
                          tuple(clauses))


# ---------------------------------------------------------------------------
# Negation and Skolemization of a prenex source formula


@dataclass(frozen=True)
class IntermediateFormula:
    """Q X_1 .. forall X_k [forall W] exists xbar (term_0 or D_1 .. or D_m).

    term_0 is `forall ybar ~W(zbar ybar)` and is present iff `skolem` is
    set; zbar names a sub-tuple of the existential variables.  Each D_j is
    a conjunction of literals over the source vocabulary, the source
    second-order variables, and W.
    """

    vocabulary: Vocabulary
    so_prefix: tuple[SOQuant, ...]     # X_1..X_k plus the Skolem relation
    skolem: str | None
    exists_vars: tuple[str, ...]
    z_vars: tuple[str, ...]
    y_vars: tuple[str, ...]
    terms: tuple[tuple, ...]           # D_1..D_m as literal tuples
    k: int

    @property
    def m(self) -> int:
        return len(self.terms)

    @property
    def x_len(self) -> int:
        return len(self.exists_vars)

    @property
    def g(self) -> int:
        return max(q.arity for q in self.so_prefix)

    @property
    def source_vars(self) -> tuple[SOQuant, ...]:
        return self.so_prefix[:self.k]

    def arity_of_block(self, i: int) -> int:
        """Arity of X_i for i in 1..k, or of the Skolem relation for k+1."""
        if i <= self.k:
            return self.so_prefix[i - 1].arity
        return self.so_prefix[self.k].arity

    def block_of(self, name: str) -> int:
        for i, q in enumerate(self.so_prefix, start=1):
            if q.name == name:
                return i
        raise StructuralError(f"unknown second-order variable {name}")

    def to_tree(self) -> TreeFormula:
        parts: list[Node] = []
        if self.skolem is not None:
            atom = Lit(Atom(self.skolem,
                            tuple(v(x) for x in self.z_vars + self.y_vars), False))
            node: Node = atom
            for yv in reversed(self.y_vars):
                node = ForAll(yv, node)
            parts.append(node)
        for term in self.terms:
            parts.append(Conj(tuple(Lit(l) for l in term)))
        body: Node = Disj(tuple(parts))
        for x in reversed(self.exists_vars):
            body = Exists(x, body)
        for q in reversed(self.so_prefix):
            cls = ExistsSO if q.quant == "exists" else ForAllSO
            body = cls(q.name, q.arity, body)
        return TreeFormula(self.vocabulary, body)


def _source_chain(source: TreeFormula) -> tuple[list[SOQuant], Node]:
    chain = []
    node = source.root
    while isinstance(node, (ExistsSO, ForAllSO)):
        quant = "exists" if isinstance(node, ExistsSO) else "forall"
        if chain and chain[-1].quant == quant:
            raise StructuralError("source prefix must alternate one variable "
                                  "per block")
        chain.append(SOQuant(quant, node.var, node.arity))
        node = node.body
    if not chain:
        raise StructuralError("source must have a second-order prefix")
    if chain[-1].quant != "forall":
        raise StructuralError("source prefix must end universally (even-k "
                              "existential or odd-k universal sources)")
    if any(isinstance(n, (ExistsSO, ForAllSO)) for n in _walk(node)):
        raise StructuralError("source body must be first-order")
    return chain, node


def _walk(node: Node):
    stack = [node]
    while stack:
        cur = stack.pop()
        yield cur
        stack.extend(tree_children(cur))


def negate_and_skolemize(source: TreeFormula) -> IntermediateFormula:
    """Skolemize the negated body, then re-negate.

    The negated body becomes `exists W forall (guard-like & CNF)`, so the
    source is equivalent to the intermediate DNF-bodied shape above with W
    universally quantified after X_k.
    """
    chain, body = _source_chain(source)
    k = len(chain)
    extended = source.vocabulary.extend(tuple((q.name, q.arity) for q in chain))
    negated_body = TreeFormula(extended, Neg(body))
    prenex = prenex_normal_form(negated_body)
    parts = skolem_parts(prenex, y_base="W")

    if parts is None:
        # no existential to Skolemize: ~body == forall zbar CNF, so the
        # body is exists zbar (D_1 | ... | D_m) directly
        exists_vars = tuple(x for _, x in prenex.prefix)
        terms = tuple(_negated_term(cl) for cl in prenex.matrix)
        return IntermediateFormula(source.vocabulary, tuple(chain), None,
                                   exists_vars, (), (), terms, k)

    names = FreshNames({q.name for q in chain}
                       | set(extended.constants) | set(extended.arity_of)
                       | set(parts.args) | {parts.y_name})
    primed = {x: names.fresh(x) for x in parts.args}
    args = parts.args
    args2 = tuple(primed[x] for x in args)
    y_atom = lambda vs, pos: Atom(parts.y_name, tuple(v(a) for a in vs), pos)

    merged: list[Clause] = []
    for i, (_, ys) in enumerate(parts.blocks):
        for yvar in ys:
            disagree = tuple(TupleEq((v(x),), (v(primed[x]),), False)
                             for xs, _ in parts.blocks[:i + 1] for x in xs)
            merged.append(Clause((y_atom(args, False), y_atom(args2, False))
                                 + disagree
                                 + (TupleEq((v(yvar),), (v(primed[yvar]),), True),)))
    for cl in parts.matrix:
        merged.append(Clause((y_atom(args, False),) + cl.literals))

    terms = tuple(_negated_term(cl) for cl in merged)
    exists_vars = args + args2
    inner_y = tuple(names.fresh(f"u{i}") for i in range(len(parts.y_all)))
    so_prefix = tuple(chain) + (SOQuant("forall", parts.y_name, parts.arity),)
    return IntermediateFormula(source.vocabulary, so_prefix, parts.y_name,
                               exists_vars, parts.x_all, inner_y, terms, k)


def _negated_term(clause: Clause) -> tuple:
    return tuple(negated(l) for l in clause.literals)


# ---------------------------------------------------------------------------
# Grounding the intermediate formula to a DNF QBF


def atom_name(var: str, args: tuple[int, ...]) -> str:
    return f"{var}({','.join(map(str, args))})"


@dataclass(frozen=True)
class GroundDnf:
    """psi_A: the DNF QBF an intermediate formula grounds to, with the
    (term-index, witness-tuple) identity of each surviving term."""

    qbf: PrefixedDnfQbf
    term_ids: tuple[tuple[int, tuple[int, ...]], ...]
    atom_of: tuple[tuple[str, tuple[str, tuple[int, ...]]], ...]

    def atom_identity(self, name: str) -> tuple[str, tuple[int, ...]]:
        return dict(self.atom_of)[name]


def ground_intermediate(inter: IntermediateFormula,
                        structure: FiniteStructure) -> GroundDnf:
    """Instantiate the existential tuple, evaluate away vocabulary
    literals, and expand the second-order prefix over ground atoms.  The
    Skolem block merges into block k."""
    n = structure.n
    blocks: list[tuple[str, list[str]]] = []
    atom_of: list[tuple[str, tuple[str, tuple[int, ...]]]] = []
    for i, q in enumerate(inter.source_vars, start=1):
        names = []
        for t in product(range(n), repeat=q.arity):
            name = atom_name(q.name, t)
            names.append(name)
            atom_of.append((name, (q.name, t)))
        blocks.append((q.quant, names))
    if inter.skolem is not None:
        sk = inter.so_prefix[inter.k]
        for t in product(range(n), repeat=sk.arity):
            name = atom_name(sk.name, t)
            blocks[-1][1].append(name)
            atom_of.append((name, (sk.name, t)))

    so_names = {q.name for q in inter.so_prefix}
    terms: list[tuple[tuple[str, bool], ...]] = []
    term_ids: list[tuple[int, tuple[int, ...]]] = []
    for abar in product(range(n), repeat=inter.x_len):
        env = dict(zip(inter.exists_vars, abar))
        if inter.skolem is not None:
            zs = tuple(env[z] for z in inter.z_vars)
            lits = tuple((atom_name(inter.skolem, zs + b), False)
                         for b in product(range(n), repeat=len(inter.y_vars)))
            terms.append(lits)
            term_ids.append((0, abar))
        for j, term in enumerate(inter.terms, start=1):
            ground = _ground_term(term, structure, env, so_names)
            if ground is None:
                continue
            terms.append(ground)
            term_ids.append((j, abar))
    qbf = PrefixedDnfQbf(tuple((q, tuple(ns)) for q, ns in blocks), tuple(terms))
    return GroundDnf(qbf, tuple(term_ids), tuple(atom_of))


def _ground_term(term, structure, env, so_names):
    """Ground literals of a conjunctive term; None when a vocabulary
    literal is false (the term is dropped)."""
    out: list[tuple[str, bool]] = []
    for lit in term:
        if isinstance(lit, Falsum):
            return None
        if isinstance(lit, TupleEq):
            left = tuple(env[t.name] if t.kind == "var" else structure.const(t.name)
                         for t in lit.left)
            right = tuple(env[t.name] if t.kind == "var" else structure.const(t.name)
                          for t in lit.right)
            if (left == right) != lit.positive:
                return None
            continue
        args = tuple(env[t.name] if t.kind == "var" else structure.const(t.name)
                     for t in lit.terms)
        if lit.pred in so_names:
            entry = (atom_name(lit.pred, args), lit.positive)
            if entry not in out:
                out.append(entry)
        elif (args in structure.rel(lit.pred)) != lit.positive:
            return None
    return tuple(out)


# ---------------------------------------------------------------------------
# The quantifier-free interpretation


@dataclass(frozen=True)
class Interpretation:
    """Width-d defining formulas of the encoded ground QBF inside d-tuples."""

    width: int
    v1: tuple[str, ...]
    v2: tuple[str, ...]
    pi_uni: Node
    pi_clause: Node
    pi_var: tuple[Node, ...]  # index h-1 holds pi_Var_h, h = 1..k
    pi_pos: Node
    pi_neg: Node
    m: int
    x_len: int
    g: int
    k: int
    intermediate: IntermediateFormula


def _eq(a: str, b: str, positive=True) -> Node:
    return Lit(TupleEq((v(a),), (v(b),), positive))


class _Layout:
    """Cell positions inside a width-d tuple (0-indexed)."""

    def __init__(self, inter: IntermediateFormula, d: int):
        self.inter = inter
        self.d = d
        self.m = inter.m
        self.k = inter.k

    def clause_selector(self, vs, j: int) -> Node:
        """Cells 3..3+m hold j+1 copies of cell 0 then copies of cell 2."""
        parts = [_eq(vs[3 + t], vs[0]) for t in range(j + 1)]
        parts += [_eq(vs[3 + t], vs[2]) for t in range(j + 1, self.m + 1)]
        return Conj(tuple(parts))

    def x_cell(self, vs, i: int) -> str:
        return vs[3 + self.m + 1 + i]

    def clause_padding(self, vs) -> tuple[Node, ...]:
        start = 3 + self.m + 1 + self.inter.x_len
        return tuple(_eq(vs[i], vs[0]) for i in range(start, self.d))

    def var_selector(self, vs, i: int) -> Node:
        """Cells 3..3+k hold i copies of cell 0 then copies of cell 2."""
        parts = [_eq(vs[3 + t], vs[0]) for t in range(i)]
        parts += [_eq(vs[3 + t], vs[2]) for t in range(i, self.k + 1)]
        return Conj(tuple(parts))

    def atom_cell(self, vs, coord: int) -> str:
        return vs[3 + self.k + 1 + coord]

    def var_padding(self, vs, arity: int) -> tuple[Node, ...]:
        start = 3 + self.k + 1 + arity
        return tuple(_eq(vs[i], vs[0]) for i in range(start, self.d))

    def selector_range(self):
        first = 0 if self.inter.skolem is not None else 1
        return range(first, self.m + 1)


def build_interpretation(inter: IntermediateFormula) -> Interpretation:
    """Construct the defining formulas, exactly following the tuple
    partitions: clause tuples carry marker cells, a unary clause selector,
    the existential witness, and padding; variable tuples carry marker
    cells, a unary block selector, the atom tuple, and padding."""
    d = 3 + max(inter.x_len + inter.m + 1, inter.g + inter.k + 1)
    layout = _Layout(inter, d)
    v1 = tuple(f"v1_{i}" for i in range(d))
    v2 = tuple(f"v2_{i}" for i in range(d))

    pi_uni = Conj(tuple(_eq(x, x) for x in v1))

    clause_marker = (_eq(v1[0], v1[2], False), _eq(v1[1], v1[2]))
    shape = Disj(tuple(layout.clause_selector(v1, j)
                       for j in layout.selector_range()))
    so_names = {q.name for q in inter.so_prefix}
    alpha_conds = []
    for j, term in enumerate(inter.terms, start=1):
        alpha = _alpha_formula(term, so_names, layout, v1)
        if alpha is not None:
            alpha_conds.append(Disj((Neg(layout.clause_selector(v1, j)), alpha)))
    pi_clause = Conj((shape, Conj(tuple(alpha_conds))) + clause_marker
                     + layout.clause_padding(v1))

    var_marker = (_eq(v2[0], v2[2], False), _eq(v2[0], v2[1]))
    pi_var: list[Node] = []
    for h in range(1, inter.k + 1):
        variants = [Conj((layout.var_selector(v2, h),)
                         + layout.var_padding(v2, inter.arity_of_block(h)))]
        if h == inter.k and inter.skolem is not None:
            variants.append(Conj((layout.var_selector(v2, inter.k + 1),)
                                 + layout.var_padding(
                                     v2, inter.arity_of_block(inter.k + 1))))
        body = variants[0] if len(variants) == 1 else Disj(tuple(variants))
        pi_var.append(Conj(var_marker + (body,)))

    markers_agree = (_eq(v1[0], v2[0]), _eq(v1[2], v2[2]))
    pi_pos = Conj(markers_agree
                  + (_occurrence_disjunction(inter, layout, v1, v2, pi_var,
                                             positive=True),))
    neg_parts = [_occurrence_disjunction(inter, layout, v1, v2, pi_var,
                                         positive=False)]
    if inter.skolem is not None:
        neg_parts.append(_beta_formula(inter, layout, v1, v2, pi_var,
                                       markers_agree))
        pi_neg = Disj((Conj(markers_agree + (neg_parts[0],)), neg_parts[1]))
    else:
        pi_neg = Conj(markers_agree + (neg_parts[0],))

    return Interpretation(d, v1, v2, pi_uni, pi_clause, tuple(pi_var),
                          pi_pos, pi_neg, inter.m, inter.x_len, inter.g,
                          inter.k, inter)


def _alpha_formula(term, so_names, layout, v1) -> Node | None:
    """First-order part of a term, with the existential variables replaced
    by their clause-tuple cells; None when there is nothing to require."""
    cell = {x: layout.x_cell(v1, i)
            for i, x in enumerate(layout.inter.exists_vars)}
    lits = []
    for lit in term:
        if isinstance(lit, Atom) and lit.pred in so_names:
            continue
        lits.append(Lit(_map_literal(lit, cell)))
    if not lits:
        return None
    return Conj(tuple(lits))


def _map_literal(lit, cell: dict[str, str]):
    def sub(t):
        return v(cell[t.name]) if t.kind == "var" else t

    if isinstance(lit, Atom):
        return Atom(lit.pred, tuple(sub(t) for t in lit.terms), lit.positive)
    if isinstance(lit, TupleEq):
        return TupleEq(tuple(sub(t) for t in lit.left),
                       tuple(sub(t) for t in lit.right), lit.positive)
    raise StructuralError(f"cannot map literal {lit!r}")


def _clause_shape(layout, v1, j: int) -> tuple[Node, ...]:
    """Structural constraints of 'v1 encodes ground term j': markers,
    selector, padding.  Inside pi_Pos/pi_Neg these stand in for the full
    clause formula; they agree with it on every tuple the evaluation
    formula can select (members of Y are constrained by pi_Clause anyway)
    and keep the clausal normalization polynomial."""
    return (_eq(v1[0], v1[2], False), _eq(v1[1], v1[2]),
            layout.clause_selector(v1, j)) + layout.clause_padding(v1)


def _coord_term(cell, t):
    return v(cell[t.name]) if t.kind == "var" else t


def _occurrence_disjunction(inter, layout, v1, v2, pi_var, positive) -> Node:
    """For every term D_j and every second-order atom occurring there with
    the requested polarity: the clause tuple encodes D_j, the variable
    tuple encodes that block, and the witness cells match the atom cells."""
    cell = {x: layout.x_cell(v1, i) for i, x in enumerate(inter.exists_vars)}
    so_blocks = {q.name: i for i, q in enumerate(inter.so_prefix, start=1)}
    options = []
    for j, term in enumerate(inter.terms, start=1):
        by_var: dict[str, list[Node]] = {}
        for lit in term:
            if not isinstance(lit, Atom) or lit.pred not in so_blocks:
                continue
            if lit.positive != positive:
                continue
            coords = Conj(tuple(
                Lit(TupleEq((_coord_term(cell, t),),
                            (v(layout.atom_cell(v2, ci)),), True))
                for ci, t in enumerate(lit.terms)))
            by_var.setdefault(lit.pred, []).append(coords)
        for name, matches in by_var.items():
            i = so_blocks[name]
            var_part: tuple[Node, ...]
            if i >= inter.k:  # block k and the Skolem block share pi_Var_k
                var_part = (pi_var[inter.k - 1], layout.var_selector(v2, i))
            else:
                var_part = (pi_var[i - 1],)
            options.append(Conj(_clause_shape(layout, v1, j)
                                + var_part + (Disj(tuple(matches)),)))
    return Disj(tuple(options))


def _beta_formula(inter, layout, v1, v2, pi_var, markers_agree) -> Node:
    """Negative occurrences coming from the `forall ybar ~W(zbar ybar)`
    term: the witness cells of zbar must match the leading atom cells."""
    cell = {x: layout.x_cell(v1, i) for i, x in enumerate(inter.exists_vars)}
    z_match = tuple(_eq(cell[z], layout.atom_cell(v2, ci))
                    for ci, z in enumerate(inter.z_vars))
    return Conj(_clause_shape(layout, v1, 0)
                + (pi_var[inter.k - 1], layout.var_selector(v2, inter.k + 1))
                + markers_agree + z_match)


# ---------------------------------------------------------------------------
# Applying the interpretation


def apply_interpretation(phi: ClausalFormula, interp: Interpretation,
                         rename: bool = True) -> ClausalFormula:
    """Rewrite the fixed evaluation formula through the interpretation.

    First-order variables become width-d tuples, second-order variables
    take arity d, and every tau-atom is replaced by its defining formula;
    the result is re-normalized to clausal form.  Second-order literal
    counts stay at most two because the defining formulas contribute only
    first-order literals.
    """
    if phi.fo_vars != ("x", "y"):
        raise StructuralError("expected the fixed evaluation formula")
    for node in (interp.pi_clause, interp.pi_pos, interp.pi_neg) + interp.pi_var:
        if any(isinstance(x, (ForAll, Exists, ForAllSO, ExistsSO))
               for x in _walk(node)):
            raise StructuralError("defining formulas must be quantifier-free")
    d = interp.width
    tuple_of = {"x": interp.v1, "y": interp.v2}
    so_rename = {}
    prefix = []
    for q in phi.so_prefix:
        new = (f"Z{q.name[1:]}" if rename and q.name.startswith("X") else q.name)
        so_rename[q.name] = new
        prefix.append(SOQuant(q.quant, new, d))

    pi_by_atom = {"Clause": interp.pi_clause, "Pos": interp.pi_pos,
                  "Neg": interp.pi_neg}
    pi_by_atom.update({f"Var{h}": interp.pi_var[h - 1]
                       for h in range(1, interp.k + 1)})

    matrix: list[Clause] = []
    for clause in phi.matrix:
        parts: list[Node] = []
        for lit in clause.literals:
            if isinstance(lit, GuardedExists):
                parts.append(Lit(GuardedExists(so_rename[lit.var])))
            elif isinstance(lit, Atom) and lit.pred in so_rename:
                args = tuple(v(name) for t in lit.terms
                             for name in tuple_of[t.name])
                parts.append(Lit(Atom(so_rename[lit.pred], args, lit.positive)))
            elif isinstance(lit, Atom):
                tree = pi_by_atom[lit.pred]
                parts.append(tree if lit.positive else Neg(tree))
            else:
                raise StructuralError(f"unexpected literal in phi: {lit!r}")
        clauses = qf_to_clauses(Disj(tuple(parts)))
        if clauses is None:
            continue
        matrix.extend(clauses)
    return ClausalFormula(interp.intermediate.vocabulary, tuple(prefix),
                          interp.v1 + interp.v2, tuple(dict.fromkeys(matrix)))


def theta_display_tree(phi, interp) -> TreeFormula:
    """The pre-normalization form: phi with tau-atoms replaced in place."""
    d = interp.width
    tuple_of = {"x": interp.v1, "y": interp.v2}
    pi_by_atom = {"Clause": interp.pi_clause, "Pos": interp.pi_pos,
                  "Neg": interp.pi_neg}
    pi_by_atom.update({f"Var{h}": interp.pi_var[h - 1]
                       for h in range(1, interp.k + 1)})
    clause_nodes = []
    for clause in phi.matrix:
        parts = []
        for lit in clause.literals:
            if isinstance(lit, GuardedExists):
                parts.append(Lit(lit))
            elif isinstance(lit, Atom) and lit.pred in pi_by_atom:
                tree = pi_by_atom[lit.pred]
                parts.append(tree if lit.positive else Neg(tree))
            else:
                args = tuple(v(name) for t in lit.terms
                             for name in tuple_of[t.name])
                parts.append(Lit(Atom(lit.pred, args, lit.positive)))
        clause_nodes.append(Disj(tuple(parts)))
    node: Node = Conj(tuple(clause_nodes))
    for name in reversed(interp.v1 + interp.v2):
        node = ForAll(name, node)
    for q in reversed(phi.so_prefix):
        cls = ExistsSO if q.quant == "exists" else ForAllSO
        node = cls(q.name, d, node)
    return TreeFormula(interp.intermediate.vocabulary, node)


# ---------------------------------------------------------------------------
# One-element structures and the full translation


@dataclass(frozen=True)
class OneElementDisjunct:
    """Isomorphism types of the one-element structures satisfying the
    source: for each, which relations hold on the single element."""

    satisfying: tuple[frozenset[str], ...]

    def formula(self, vocab: Vocabulary, var: str) -> Node:
        options = []
        for held in self.satisfying:
            lits = tuple(Lit(Atom(r, (v(var),) * a, r in held))
                         for r, a in vocab.relations)
            options.append(Conj(lits))
        return Disj(tuple(options))


def one_element_disjunct(source: TreeFormula,
                         config: EvalConfig | None = None) -> OneElementDisjunct:
    vocab = source.vocabulary
    satisfying = []
    rels = vocab.relations
    for bits in product((False, True), repeat=len(rels)):
        interp = {r: ({(0,) * a} if held else set())
                  for (r, a), held in zip(rels, bits)}
        structure = make_structure(vocab, 1, rels=interp)
        if check_model(source, structure, config):
            satisfying.append(frozenset(r for (r, _), held in zip(rels, bits)
                                        if held))
    return OneElementDisjunct(tuple(satisfying))


def small_model_patch(source: TreeFormula, delta: OneElementDisjunct) -> ClausalFormula:
    """forall x forall y (x = y  and  delta(x)), in clausal form."""
    vocab = source.vocabulary
    clauses = [Clause((TupleEq((v("x"),), (v("y"),), True),))]
    body = qf_to_clauses(delta.formula(vocab, "x"))
    if body is None:
        body = ()
    clauses.extend(body)
    if any(cl == FALSE_CLAUSE for cl in clauses):
        clauses = [FALSE_CLAUSE]
    return ClausalFormula(vocab, (), ("x", "y"), tuple(dict.fromkeys(clauses)))


@dataclass(frozen=True)
class TranslatedFormula:
    """The sanctioned output shape: a Krom-with-guards main disjunct that
    is correct on structures with at least two elements, plus the
    one-element patch."""

    theta: ClausalFormula
    small_model: ClausalFormula
    interpretation: Interpretation
    theta_display: TreeFormula

    @property
    def disjuncts(self):
        return (self.theta, self.small_model)

    @property
    def vocabulary(self):
        return self.theta.vocabulary

    def audit(self) -> dict:
        i = self.interpretation
        return {"d": i.width, "m": i.m, "g": i.g, "x_len": i.x_len, "k": i.k,
                "theta_clauses": len(self.theta.matrix),
                "so_arity": i.width}


def translate_sigma_k(source: TreeFormula,
                      config: EvalConfig | None = None) -> TranslatedFormula:
    """Full pipeline: negate-and-Skolemize, build the interpretation,
    push the fixed evaluation formula through it, and patch one-element
    structures by enumeration."""
    inter = negate_and_skolemize(source)
    interp = build_interpretation(inter)
    first = inter.so_prefix[0].quant
    phi = phi_formula(inter.k, first_quant=first)
    theta = apply_interpretation(phi, interp)
    display = theta_display_tree(phi, interp)
    delta = one_element_disjunct(source, config)
    patch = small_model_patch(source, delta)
    return TranslatedFormula(theta, patch, interp, display)


# ---------------------------------------------------------------------------
# Decoding an interpreted structure (test-facing)


@dataclass(frozen=True)
class DecodedInterpretation:
    """The tau-side content of A^Pi, keyed by canonical identities:
    terms by (term-index, witness-tuple), atoms by (variable, tuple)."""

    clauses: frozenset
    variables: frozenset  # ((var, tuple), block)
    pos: frozenset
    neg: frozenset


def interpret_structure(interp: Interpretation,
                        structure: FiniteStructure) -> DecodedInterpretation:
    """Exhaustively enumerate width-d tuples, classify them through the
    defining formulas, and decode their identities."""
    from .evaluator import eval_tree

    inter = interp.intermediate
    d = interp.width
    layout = _Layout(inter, d)
    vocab = inter.vocabulary

    def holds(node: Node, env) -> bool:
        return eval_tree(TreeFormula(vocab, node), structure, env=env)

    clause_tuples = []
    var_tuples = []
    for tup in product(range(structure.n), repeat=d):
        env1 = dict(zip(interp.v1, tup))
        if holds(interp.pi_clause, env1):
            clause_tuples.append((tup, _decode_clause(layout, tup)))
        env2 = dict(zip(interp.v2, tup))
        for h in range(1, inter.k + 1):
            if holds(interp.pi_var[h - 1], env2):
                var_tuples.append((tup, _decode_var(inter, layout, tup), h))

    pos = set()
    neg = set()
    for ct, cid in clause_tuples:
        env = dict(zip(interp.v1, ct))
        for vt, vid, _ in var_tuples:
            env2 = env | dict(zip(interp.v2, vt))
            if holds(interp.pi_pos, env2):
                pos.add((cid, vid))
            if holds(interp.pi_neg, env2):
                neg.add((cid, vid))
    return DecodedInterpretation(
        frozenset(cid for _, cid in clause_tuples),
        frozenset((vid, h) for _, vid, h in var_tuples),
        frozenset(pos), frozenset(neg))


def _decode_clause(layout, tup):
    one = tup[0]
    j = sum(1 for t in range(layout.m + 1) if tup[3 + t] == one) - 1
    witness = tuple(tup[3 + layout.m + 1 + i]
                    for i in range(layout.inter.x_len))
    return (j, witness)


def _decode_var(inter, layout, tup):
    one = tup[0]
    i = sum(1 for t in range(layout.k + 1) if tup[3 + t] == one)
    name = (inter.so_prefix[i - 1].name if i <= inter.k
            else inter.so_prefix[inter.k].name)
    arity = inter.arity_of_block(i)
    args = tuple(tup[3 + layout.k + 1 + ci] for ci in range(arity))
    return (name, args)
