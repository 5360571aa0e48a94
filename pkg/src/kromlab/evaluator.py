"""Grounding to quantified Boolean formulas and fragment-aware evaluation.

Three evaluation routes exist and must agree:

* ``eval_tree`` -- direct recursive brute force over a formula tree (the
  reference oracle; exponential in everything).
* ``ground`` + ``eval_qbf_bruteforce`` -- grounding to a closed QBF and
  exhaustive recursion over its prefix.
* ``check_model`` -- the fragment dispatcher.  Existential Krom formulas
  go through guard expansion and a 2-SAT leaf solver; deeper prefixes are
  evaluated by alternating enumeration of the outer second-order blocks
  with the same existential leaf, and a trailing universal block over a
  ground CNF is decided by the per-clause complementary-pair rule.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import product

from .errors import ResourceError, StructuralError
from .logic import (Atom, Clause, ClausalFormula, Conj, Disj, Exists, ExistsSO,
                    FALSE_CLAUSE, Falsum, ForAll, ForAllSO, FragmentKind,
                    GuardedExists, Lit, Neg, TreeFormula, TupleEq, classify)
from .structures import FiniteStructure


@dataclass
class EvalConfig:
    """Resource limits; overridable via the CLI environment variables."""

    max_qbf_vars: int = 24
    max_block_assignments: int = 2 ** 20


DEFAULT_CONFIG = EvalConfig()


@dataclass
class RouteStats:
    """Dispatcher telemetry: how often each evaluation route ran."""

    tree: int = 0
    sigma11: int = 0
    alternating: int = 0
    qbf_bruteforce: int = 0
    twosat: int = 0


# ---------------------------------------------------------------------------
# Ground atoms and ground QBFs


class GroundAtomIndex:
    """Bijection between propositional ids 1..V and ground atoms (var, tuple).

    Total over every (SO variable, tuple) pair, ordered by declaration
    order and row-major tuple order.
    """

    def __init__(self, atoms: tuple[tuple[str, tuple[int, ...]], ...]):
        self.atoms = atoms
        self.id_of = {atom: i + 1 for i, atom in enumerate(atoms)}
        self._per_var: dict[str, list[int]] = {}
        for i, (name, _) in enumerate(atoms):
            self._per_var.setdefault(name, []).append(i + 1)
        self._per_var = {name: tuple(ids) for name, ids in self._per_var.items()}

    @staticmethod
    def build(so_prefix, n: int) -> "GroundAtomIndex":
        atoms = []
        for q in so_prefix:
            atoms.extend((q.name, t) for t in product(range(n), repeat=q.arity))
        return GroundAtomIndex(tuple(atoms))

    @property
    def size(self) -> int:
        return len(self.atoms)

    def ids_for(self, name: str) -> tuple[int, ...]:
        return self._per_var.get(name, ())

    def span_of(self, name: str) -> tuple[int, int]:
        """(base, count): the variable's atoms are ids base+1 .. base+count,
        indexed row-major by tuple."""
        ids = self._per_var[name]
        return ids[0] - 1, len(ids)

    def atom(self, ident: int) -> tuple[str, tuple[int, ...]]:
        return self.atoms[ident - 1]


@dataclass(frozen=True)
class GroundQbf:
    """Closed QBF over ground-atom ids; matrix is CNF or DNF clause tuples."""

    prefix: tuple[tuple[str, tuple[int, ...]], ...]
    matrix: tuple[tuple[int, ...], ...]
    cnf: bool = True

    def variable_count(self) -> int:
        return sum(len(block) for _, block in self.prefix)


def ground(formula: ClausalFormula, structure: FiniteStructure,
           env: dict[str, int] | None = None,
           index: GroundAtomIndex | None = None):
    """Ground a prefixed-clausal formula over a structure.

    First-order universals are instantiated over all tuples, vocabulary
    atoms and equalities are evaluated away, guards expand to the
    nonemptiness disjunction of their atom block, and each SO quantifier
    ranges over its full atom block.  Truth is preserved exactly.
    """
    if not isinstance(formula, ClausalFormula):
        raise StructuralError("grounding requires a prefixed-clausal formula")
    require_compatible(formula, structure)
    env = dict(env or {})
    missing = [y for y in formula.fo_exists if y not in env]
    if missing:
        raise StructuralError(f"existential prefix variables unbound: {missing}")
    if index is None:
        index = GroundAtomIndex.build(formula.so_prefix, structure.n)

    blocks: list[tuple[str, tuple[int, ...]]] = []
    for q in formula.so_prefix:
        ids = index.ids_for(q.name)
        if blocks and blocks[-1][0] == q.quant:
            blocks[-1] = (q.quant, blocks[-1][1] + ids)
        else:
            blocks.append((q.quant, ids))

    matrix = _ground_matrix(formula, structure, env, index)
    return GroundQbf(tuple(blocks), matrix, cnf=True), index


def require_compatible(formula, structure: FiniteStructure):
    arities = structure.vocabulary.arity_of
    for name, arity in formula.vocabulary.arity_of.items():
        if arities.get(name) != arity:
            raise StructuralError(f"structure does not interpret {name}/{arity}")
    for cst in formula.vocabulary.constants:
        if cst not in structure.vocabulary.constants:
            raise StructuralError(f"structure does not interpret constant {cst}")


def _ground_matrix(formula, structure, base_env, index):
    """Instantiate clause by clause, each over the variables it uses.

    Unused universal variables would only produce duplicate ground
    clauses, so restricting the product per clause is exact.
    """
    n = structure.n
    clauses: list[tuple[int, ...]] = []
    seen: set[tuple[int, ...]] = set()
    for clause in formula.matrix:
        used, ops = _compile_clause(clause, formula, structure, base_env, index)
        for assignment in product(range(n), repeat=len(used)):
            ids = _run_clause(ops, assignment)
            if ids is None or ids in seen:
                continue
            seen.add(ids)
            clauses.append(ids)
    return tuple(clauses)


def _resolve(term, structure, env) -> int:
    if term.kind == "var":
        return env[term.name]
    return structure.const(term.name)


def _compile_clause(clause, formula, structure, base_env, index):
    """Precompile literals; terms become assignment slots or constants.

    Term encoding: slot i of the per-clause assignment is stored as i,
    a fixed element e as -(e+1).
    """
    used: list[str] = []
    slot: dict[str, int] = {}
    so_names = formula.so_names

    def code(term) -> int:
        if term.kind == "const":
            return -(structure.const(term.name) + 1)
        if term.name in base_env:
            return -(base_env[term.name] + 1)
        if term.name not in slot:
            slot[term.name] = len(used)
            used.append(term.name)
        return slot[term.name]

    ops = []
    for lit in clause.literals:
        if isinstance(lit, Falsum):
            continue
        if isinstance(lit, Atom):
            spec = tuple(code(t) for t in lit.terms)
            if lit.pred in so_names:
                base, _ = index.span_of(lit.pred)
                ops.append(("so", base, structure.n, spec, lit.positive))
            else:
                ops.append(("rel", structure.rel(lit.pred), spec, lit.positive))
        elif isinstance(lit, TupleEq):
            spec = tuple(zip((code(t) for t in lit.left),
                             (code(t) for t in lit.right)))
            ops.append(("eq", spec, lit.positive))
        else:
            ops.append(("guard", index.ids_for(lit.var)))
    return tuple(used), tuple(ops)


def _run_clause(ops, a):
    """Signed ground ids of one instantiated clause; None when satisfied."""
    ids: set[int] = set()
    for op in ops:
        kind = op[0]
        if kind == "so":
            _, base, n, spec, positive = op
            offset = 0
            for s in spec:
                offset = offset * n + (a[s] if s >= 0 else -s - 1)
            ident = base + offset + 1
            ids.add(ident if positive else -ident)
        elif kind == "rel":
            _, table, spec, positive = op
            args = tuple(a[s] if s >= 0 else -s - 1 for s in spec)
            if (args in table) == positive:
                return None
        elif kind == "eq":
            _, spec, positive = op
            equal = all((a[l] if l >= 0 else -l - 1) == (a[r] if r >= 0 else -r - 1)
                        for l, r in spec)
            if equal == positive:
                return None
        else:
            ids.update(op[1])
    if any(-i in ids for i in ids):
        return None
    return tuple(sorted(ids, key=abs))


# ---------------------------------------------------------------------------
# Brute-force QBF evaluation (reference oracle)


def eval_qbf_bruteforce(qbf: GroundQbf, config: EvalConfig | None = None) -> bool:
    """Exact truth by exhaustive recursion over the prefix."""
    config = config or DEFAULT_CONFIG
    nvars = qbf.variable_count()
    if nvars > config.max_qbf_vars:
        raise ResourceError(
            f"{nvars} ground variables exceed the brute-force limit "
            f"{config.max_qbf_vars}", needed=nvars)
    order = [(quant, var) for quant, block in qbf.prefix for var in block]
    bound = {var for _, var in order}
    loose = {abs(l) for cl in qbf.matrix for l in cl} - bound
    if loose:
        raise StructuralError(f"QBF is not closed; free ids {sorted(loose)}")
    return _qbf_rec(order, 0, qbf.matrix, qbf.cnf)


def _qbf_assign(matrix, cnf, true_lit):
    out = []
    for cl in matrix:
        if cnf:
            if true_lit in cl:
                continue
            reduced = tuple(l for l in cl if l != -true_lit)
            if not reduced:
                return False
        else:
            if -true_lit in cl:
                continue
            reduced = tuple(l for l in cl if l != true_lit)
            if not reduced:
                return True
        out.append(reduced)
    return tuple(out)


def _qbf_rec(order, i, matrix, cnf):
    if not matrix:
        return cnf
    if any(not cl for cl in matrix):
        return not cnf
    if i == len(order):
        raise StructuralError("prefix exhausted with undecided matrix")
    quant, var = order[i]
    if not any(var in (l, -l) for cl in matrix for l in cl):
        return _qbf_rec(order, i + 1, matrix, cnf)
    for value in (False, True):
        reduced = _qbf_assign(matrix, cnf, var if value else -var)
        result = reduced if isinstance(reduced, bool) else _qbf_rec(order, i + 1, reduced, cnf)
        if quant == "exists" and result:
            return True
        if quant == "forall" and not result:
            return False
    return quant == "forall"


# ---------------------------------------------------------------------------
# 2-SAT via implication-graph strongly connected components


def eval_2sat(clauses) -> tuple[bool, dict[int, bool] | None]:
    """Satisfiability of a ground 2-CNF; returns a witness when satisfiable."""
    adjacency: dict[int, list[int]] = {}
    variables: list[int] = []
    seen_vars: set[int] = set()

    def edge(a, b):
        adjacency.setdefault(a, []).append(b)

    for cl in clauses:
        if len(cl) > 2:
            raise StructuralError(f"clause {cl} has more than two literals")
        if len(cl) == 0:
            return False, None
        for l in cl:
            if abs(l) not in seen_vars:
                seen_vars.add(abs(l))
                variables.append(abs(l))
        if len(cl) == 1:
            edge(-cl[0], cl[0])
        else:
            a, b = cl
            edge(-a, b)
            edge(-b, a)

    nodes = [lit for var in variables for lit in (var, -var)]
    comp = _tarjan_scc(nodes, adjacency)
    witness = {}
    for var in variables:
        if comp[var] == comp[-var]:
            return False, None
        witness[var] = comp[var] < comp[-var]
    return True, witness


def _tarjan_scc(nodes, adjacency):
    index: dict[int, int] = {}
    low: dict[int, int] = {}
    comp: dict[int, int] = {}
    stack: list[int] = []
    on_stack: set[int] = set()
    next_index = 0
    next_comp = 0
    for start in nodes:
        if start in index:
            continue
        index[start] = low[start] = next_index
        next_index += 1
        stack.append(start)
        on_stack.add(start)
        work = [(start, iter(adjacency.get(start, ())))]
        while work:
            node, neighbors = work[-1]
            advanced = False
            for w in neighbors:
                if w not in index:
                    index[w] = low[w] = next_index
                    next_index += 1
                    stack.append(w)
                    on_stack.add(w)
                    work.append((w, iter(adjacency.get(w, ()))))
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
                while True:
                    w = stack.pop()
                    on_stack.discard(w)
                    comp[w] = next_comp
                    if w == node:
                        break
                next_comp += 1
    return comp


def _unit_propagate(clauses, assignment):
    """Fixpoint unit propagation.  Returns (consistent, assignment, residual)."""
    work = list(clauses)
    changed = True
    while changed:
        changed = False
        remaining = []
        for cl in work:
            lits = []
            satisfied = False
            for l in cl:
                value = assignment.get(abs(l))
                if value is None:
                    lits.append(l)
                elif (l > 0) == value:
                    satisfied = True
                    break
            if satisfied:
                continue
            if not lits:
                return False, assignment, []
            if len(lits) == 1:
                lit = lits[0]
                assignment[abs(lit)] = lit > 0
                changed = True
            else:
                remaining.append(tuple(lits))
        work = remaining
    return True, assignment, work


class _SharedTwoSat:
    """2-SAT over a fixed clause base plus per-call deltas.

    Unit propagation runs once over the base; each call propagates its
    delta on top and solves the small residue.
    """

    def __init__(self, base_clauses):
        for cl in base_clauses:
            if len(cl) > 2:
                raise StructuralError(f"clause {cl} has more than two literals")
        self.ok, self.forced, self.residual = _unit_propagate(base_clauses, {})

    def solve_with(self, delta) -> bool:
        if not self.ok:
            return False
        consistent, _, residue = _unit_propagate(
            list(self.residual) + list(delta), dict(self.forced))
        if not consistent:
            return False
        sat, _ = eval_2sat(residue)
        return sat


# ---------------------------------------------------------------------------
# Tree evaluation (reference oracle)


def eval_tree(formula: TreeFormula, structure: FiniteStructure,
              config: EvalConfig | None = None,
              env: dict[str, int] | None = None) -> bool:
    config = config or DEFAULT_CONFIG
    require_compatible(formula, structure)
    return _eval_node(formula.root, structure, config, dict(env or {}), {})


def _eval_node(node, structure, config, env, so_env) -> bool:
    if isinstance(node, Lit):
        return _eval_literal(node.lit, structure, env, so_env)
    if isinstance(node, Conj):
        return all(_eval_node(p, structure, config, env, so_env) for p in node.parts)
    if isinstance(node, Disj):
        return any(_eval_node(p, structure, config, env, so_env) for p in node.parts)
    if isinstance(node, Neg):
        return not _eval_node(node.body, structure, config, env, so_env)
    if isinstance(node, (ForAll, Exists)):
        want_any = isinstance(node, Exists)
        for e in range(structure.n):
            env[node.var] = e
            r = _eval_node(node.body, structure, config, env, so_env)
            if r == want_any:
                del env[node.var]
                return want_any
        del env[node.var]
        return not want_any
    if isinstance(node, (ForAllSO, ExistsSO)):
        tuples = sorted(product(range(structure.n), repeat=node.arity))
        count = 2 ** len(tuples)
        if count > config.max_block_assignments:
            raise ResourceError(
                f"{count} assignments for {node.var} exceed the limit",
                needed=count, block=(node.var,))
        want_any = isinstance(node, ExistsSO)
        for bits in product((False, True), repeat=len(tuples)):
            so_env[node.var] = frozenset(t for t, b in zip(tuples, bits) if b)
            r = _eval_node(node.body, structure, config, env, so_env)
            if r == want_any:
                del so_env[node.var]
                return want_any
        del so_env[node.var]
        return not want_any
    raise StructuralError(f"cannot evaluate node {node!r}")


def _eval_literal(lit, structure, env, so_env) -> bool:
    if isinstance(lit, Falsum):
        return False
    if isinstance(lit, GuardedExists):
        if lit.var in so_env:
            return bool(so_env[lit.var])
        return bool(structure.rel(lit.var))
    if isinstance(lit, Atom):
        args = tuple(_resolve(t, structure, env) for t in lit.terms)
        table = so_env.get(lit.pred)
        if table is None:
            table = structure.rel(lit.pred)
        return (args in table) == lit.positive
    left = tuple(_resolve(t, structure, env) for t in lit.left)
    right = tuple(_resolve(t, structure, env) for t in lit.right)
    return (left == right) == lit.positive


# ---------------------------------------------------------------------------
# Fragment-aware evaluation


def check_model(formula, structure: FiniteStructure,
                config: EvalConfig | None = None,
                stats: RouteStats | None = None) -> bool:
    """Dispatch on the syntactic fragment; all routes agree with brute force."""
    config = config or DEFAULT_CONFIG
    if isinstance(formula, TreeFormula):
        if stats:
            stats.tree += 1
        return eval_tree(formula, structure, config)
    if isinstance(formula, ClausalFormula):
        require_compatible(formula, structure)
        tag = classify(formula)
        if tag.kind is FragmentKind.FO_UNIVERSAL_CNF or (
                tag.kind in (FragmentKind.SIGMA_KROM, FragmentKind.SIGMA_KROM_R)
                and tag.k == 1):
            if stats:
                stats.sigma11 += 1
            return _eval_sigma11(formula, structure, config, stats)
        if formula.fo_exists:
            # rare shape (existential FO prefix over a deeper fragment):
            # no specialized route, use the oracle
            if stats:
                stats.tree += 1
            return eval_tree(formula.to_tree(), structure, config)
        if stats:
            stats.alternating += 1
        return eval_alternating(formula, structure, config, stats)
    disjuncts = getattr(formula, "disjuncts", None)
    if disjuncts is None and isinstance(formula, (list, tuple)):
        disjuncts = formula
    if disjuncts is not None:
        return any(check_model(d, structure, config, stats) for d in disjuncts)
    raise StructuralError(f"cannot evaluate {type(formula).__name__}")


def _eval_sigma11(formula, structure, config, stats) -> bool:
    """Existential-Krom route: guard expansion, then grounding and 2-SAT
    for each disjunct under each first-order witness tuple."""
    from .transforms import expand_exists_r  # deferred: avoids import cycle

    has_guard = any(isinstance(l, GuardedExists)
                    for cl in formula.matrix for l in cl.literals)
    disjuncts = expand_exists_r(formula) if has_guard else [formula]
    return any(_eval_sigma11_disjunct(d, structure, config, stats)
               for d in disjuncts)


def _eval_sigma11_disjunct(d, structure, config, stats) -> bool:
    if any(cl == FALSE_CLAUSE or not cl.literals for cl in d.matrix):
        return False
    index = GroundAtomIndex.build(d.so_prefix, structure.n)
    exists_set = set(d.fo_exists)

    def uses_exists(clause):
        for lit in clause.literals:
            terms = (lit.terms if isinstance(lit, Atom)
                     else lit.left + lit.right if isinstance(lit, TupleEq) else ())
            if any(t.kind == "var" and t.name in exists_set for t in terms):
                return True
        return False

    base = tuple(cl for cl in d.matrix if not uses_exists(cl))
    delta = tuple(cl for cl in d.matrix if uses_exists(cl))
    base_formula = ClausalFormula(d.vocabulary, d.so_prefix, d.fo_vars, base)
    base_qbf, _ = ground(base_formula, structure, index=index)
    solver = _SharedTwoSat(base_qbf.matrix)
    if stats:
        stats.twosat += 1
    if not delta:
        return solver.solve_with(())
    delta_formula = ClausalFormula(d.vocabulary, d.so_prefix, d.fo_vars,
                                   delta, d.fo_exists)
    for witness in product(range(structure.n), repeat=len(d.fo_exists)):
        env = dict(zip(d.fo_exists, witness))
        delta_qbf, _ = ground(delta_formula, structure, env, index=index)
        if solver.solve_with(delta_qbf.matrix):
            return True
    return False


def eval_alternating(formula: ClausalFormula, structure: FiniteStructure,
                     config: EvalConfig | None = None,
                     stats: RouteStats | None = None) -> bool:
    """Enumerate outer second-order blocks in prefix order.

    A purely existential residue goes through the 2-SAT leaf; a purely
    universal residue over a ground CNF is true exactly when every clause
    contains a complementary pair of ground literals.  Enumeration only
    ranges over atoms that occur in the ground matrix; the rest cannot
    influence truth (guarded variables always occur in full).
    """
    config = config or DEFAULT_CONFIG
    if formula.fo_exists:
        raise StructuralError("alternating evaluation needs a closed SO prefix")
    blocks = formula.alternation_blocks()
    if not blocks:
        qbf, _ = ground(formula, structure)
        return not qbf.matrix
    if len(blocks) == 1 and blocks[0][0].quant == "exists":
        return _eval_sigma11(formula, structure, config, stats)
    if len(blocks) == 1:
        qbf, _ = ground(formula, structure)
        return all(_tautological(cl) for cl in qbf.matrix)

    qbf, index = ground(formula, structure)
    if not qbf.matrix:
        return True
    if any(not cl for cl in qbf.matrix):
        return False
    block = blocks[0]
    block_names = [q.name for q in block]
    occurring_ids = {abs(l) for cl in qbf.matrix for l in cl}
    flat_atoms = [(name, t)
                  for name in block_names
                  for ident in index.ids_for(name)
                  if ident in occurring_ids
                  for t in (index.atom(ident)[1],)]
    if 2 ** len(flat_atoms) > config.max_block_assignments:
        raise ResourceError(
            f"2^{len(flat_atoms)} assignments for block {block_names} exceed "
            f"the limit", needed=2 ** len(flat_atoms), block=tuple(block_names))

    arities = {q.name: q.arity for q in block}
    want_any = block[0].quant == "exists"
    for bits in product((False, True), repeat=len(flat_atoms)):
        rels: dict[str, set] = {name: set() for name in block_names}
        for (name, t), b in zip(flat_atoms, bits):
            if b:
                rels[name].add(t)
        extended = structure.with_relations(
            {name: frozenset(ts) for name, ts in rels.items()}, arities)
        residual = _freeze(formula, extended, block_names, rels)
        result = eval_alternating(residual, extended, config, stats)
        if result == want_any:
            return want_any
    return not want_any


def _tautological(clause) -> bool:
    lits = set(clause)
    return any(-l in lits for l in lits)


def _freeze(formula, extended_structure, block_names, rels):
    """Drop the outermost block; guards of frozen variables become truth values."""
    new_prefix = tuple(q for q in formula.so_prefix if q.name not in block_names)
    matrix = []
    for clause in formula.matrix:
        lits = []
        satisfied = False
        for lit in clause.literals:
            if isinstance(lit, GuardedExists) and lit.var in block_names:
                if rels[lit.var]:
                    satisfied = True
                    break
                continue
            lits.append(lit)
        if satisfied:
            continue
        matrix.append(Clause(tuple(lits)) if lits else FALSE_CLAUSE)
    return ClausalFormula(extended_structure.vocabulary, new_prefix,
                          formula.fo_vars, tuple(dict.fromkeys(matrix)))
