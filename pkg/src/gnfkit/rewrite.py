"""Compiling certain-answer problems over guarded rule sets into Datalog.

All three compilation schemes share one mechanism: enumerate a capped space of
candidate rules, ask the chase to certify each candidate as a consequence of
the input rules, and keep exactly the certified ones.  The emitted program
therefore carries a certificate for every rule, and the returned artifacts
record the enumeration caps together with the verdict for every candidate.

The schemes, one per guardedness tier:

- ``rewrite_atomic_guarded``: atomic query + guarded rules -> guarded program;
- ``rewrite_cq_guarded``: conjunctive query + guarded rules -> internally
  guarded program (only goal rules may lack a guard);
- ``rewrite_fg``: answer-guarded query + frontier-guarded rules -> frontier
  guarded program, via guard-extension and query-extension predicates.

Programs run over copies of the input relations (one import rule per input
relation), so derived facts never touch input relation names.  Boolean goals
and other zero-argument derived predicates are represented as unary relations
holding the reserved constant ``_unit``.
"""

from __future__ import annotations

import itertools
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable, Iterator, Optional, Sequence

from .chase import TERMINATED, ChaseConfig, chase
from .datalog import DatalogProgram, Rule, classify_datalog, eval_datalog
from .model import Fact, Instance, Signature, Value, active_domain, elem
from .query import (Atom, ConjunctiveQuery, Cst, Var, canon_inst,
                    canonical_cq, core_cq, cq, cq_contained, eval_cq,
                    is_answer_guarded, query_signature)
from .tgd import Tgd, classify, make_tgd, tgd_signature

ENTAILED = "entailed"
REJECTED = "rejected"
UNKNOWN = "unknown"

COMPLETE_WITHIN_CAPS = "complete_within_caps"
CAPPED = "capped"

UNIT_CONST = "_unit"


# ---------------------------------------------------------------------------
# configuration and result types

@dataclass(frozen=True)
class RewriteConfig:
    """Caps for candidate enumeration plus the chase budget used to certify.

    ``k`` bounds the number of variables in derived queries and goal rules;
    when unset it defaults to the larger of the rule bodies' variable count
    and the query's variable count, clamped by ``max_k``.  The remaining caps
    bound the enumeration space itself; every produced artifact records the
    caps it was built under.
    """

    k: Optional[int] = None
    max_relations: int = 4
    max_arity: int = 3
    max_k: int = 3
    max_extra_body_atoms: int = 2
    fg_max_extra_body_atoms: int = 1
    extra_atom_pool_limit: int = 12
    max_goal_premises: int = 3
    max_quotient_vars: int = 6
    oracle: ChaseConfig = ChaseConfig()
    jobs: int = 1


@dataclass(frozen=True)
class CertainAnswerProblem:
    """A rule set paired with a conjunctive query to answer over any input."""

    rules: tuple[Tgd, ...]
    query: ConjunctiveQuery
    name: str = ""


@dataclass(frozen=True)
class CertificationRecord:
    """One candidate rule and the verdict the certifying oracle reached."""

    candidate: str
    verdict: str  # entailed | rejected | unknown
    kind: str     # rule | query-rule | goal-rule | axiom | import


@dataclass
class CandidateSpace:
    candidates: tuple[Tgd, ...]
    caps: dict[str, int]
    capped: bool


@dataclass
class DerivationResult:
    """Certified full guarded consequences of a rule set."""

    rules: tuple[Tgd, ...]
    certification: tuple[CertificationRecord, ...]
    caps: dict[str, int]
    capped: bool

    def has_unknown(self) -> bool:
        return any(r.verdict == UNKNOWN for r in self.certification)


@dataclass
class QueryRulesResult:
    """Guarded rules deriving query-extension predicates, with certificates."""

    rules: tuple[Tgd, ...]
    certification: tuple[CertificationRecord, ...]
    query_predicates: dict[str, str]  # predicate name -> canonical query text
    caps: dict[str, int]
    capped: bool


@dataclass
class GoalRulesResult:
    """Goal rules assembling query-extension premises into answers."""

    rules: tuple[Rule, ...]
    certification: tuple[CertificationRecord, ...]
    query_predicates: dict[str, str]
    capped: bool


@dataclass
class GuardExtensionResult:
    """Projection predicates for every argument-position subset of each relation.

    The predicate for the full position set is declared for uniformity but
    needs no axioms: the relation itself plays that role.  The empty subset
    yields a unary predicate over the reserved constant ``_unit`` recording
    nonemptiness of the relation.
    """

    predicates: dict[tuple[str, tuple[int, ...]], str]
    axioms: tuple[Tgd, ...]
    signature: Signature


@dataclass
class RewriteArtifacts:
    """A compiled program plus everything needed to audit how it was built."""

    program: DatalogProgram
    certification: tuple[CertificationRecord, ...]
    caps: dict[str, int]
    capped: bool
    completeness: str  # complete_within_caps | capped
    query_predicates: dict[str, str]
    boolean_goal: bool
    answer_projection: tuple[int, ...]


# ---------------------------------------------------------------------------
# small combinatorial helpers

def _set_partitions(items: list) -> Iterator[list[list]]:
    """All partitions of the list; each class lists its members in input order."""
    if not items:
        yield []
        return
    first, rest = items[0], items[1:]
    for part in _set_partitions(rest):
        for i in range(len(part)):
            yield part[:i] + [[first] + part[i]] + part[i + 1:]
        yield [[first]] + part


@lru_cache(maxsize=None)
def _position_patterns(arity: int) -> tuple[tuple[str, ...], ...]:
    """Variable patterns for an atom: every way to repeat variables across
    positions, named v0, v1, ... in first-occurrence order."""
    out: list[tuple[str, ...]] = []

    def rec(i: int, assignment: list[int], used: int):
        if i == arity:
            out.append(tuple(f"v{j}" for j in assignment))
            return
        for j in range(used + 1):
            rec(i + 1, assignment + [j], max(used, j + 1))

    rec(0, [], 0)
    return tuple(out)


def _atoms_over(rels: Sequence[tuple[str, int]], names: Sequence[str]) -> list[Atom]:
    out = []
    for rel, arity in rels:
        for combo in itertools.product(names, repeat=arity):
            out.append(Atom(rel, tuple(Var(v) for v in combo)))
    return out


def _subst_atom(a: Atom, ren: dict[str, str]) -> Atom:
    return Atom(a.rel, tuple(t if isinstance(t, Cst) else Var(ren.get(t.name, t.name))
                             for t in a.args))


def _fresh_name(base: str, used: set[str]) -> str:
    name = base
    while name in used:
        name += "'"
    return name


def _copy_map(sig: Signature) -> dict[str, str]:
    """A primed copy name per relation, fresh with respect to the signature."""
    used = set(sig.arities) | set(sig.constants)
    out = {}
    for rel in sig.arities:
        name = _fresh_name(rel + "'", used)
        used.add(name)
        out[rel] = name
    return out


# ---------------------------------------------------------------------------
# canonical forms

@lru_cache(maxsize=None)
def _cored_body(atoms: tuple[Atom, ...], kept_vars: frozenset[str]) -> tuple[Atom, ...]:
    """Core of a body, fixing the given variables (a rule's head variables)."""
    order = [v for a in atoms for v in a.vars()]
    frees = tuple(v for v in dict.fromkeys(order) if v in kept_vars)
    return tuple(core_cq(cq(frees, atoms)).atoms)


@lru_cache(maxsize=None)
def _body_canonical(atoms: tuple[Atom, ...]) -> tuple[tuple[Atom, ...], tuple[tuple[str, str], ...]]:
    """Variable renaming minimizing the body's serialization; returns the
    renamed atoms and the renaming that produced them."""
    names = sorted({v for a in atoms for v in a.vars()})
    if len(names) > 6:
        return atoms, tuple((v, v) for v in names)
    best = None
    for perm in itertools.permutations(range(len(names))):
        ren = {v: f"v{perm[i]}" for i, v in enumerate(names)}
        lst = tuple(sorted({_subst_atom(a, ren) for a in atoms}, key=str))
        key = tuple(str(a) for a in lst)
        if best is None or key < best[0]:
            best = (key, lst, ren)
    if best is None:
        return atoms, ()
    return best[1], tuple(sorted(best[2].items()))


def _canonical_full_rule(body_atoms: Sequence[Atom], head: Atom,
                         core_body: bool = True) -> Tgd:
    """Canonical form of a full single-head rule: optionally core the body
    around the head variables, then pick the variable naming minimizing the
    serialized rule."""
    atoms = tuple(sorted(set(body_atoms), key=str))
    if core_body:
        atoms = tuple(sorted(set(_cored_body(atoms, frozenset(head.vars()))), key=str))
    names = sorted({v for a in atoms for v in a.vars()})
    if len(names) > 6:
        return make_tgd(list(atoms), [head])
    best = None
    for perm in itertools.permutations(range(len(names))):
        ren = {v: f"v{perm[i]}" for i, v in enumerate(names)}
        b = tuple(sorted({_subst_atom(a, ren) for a in atoms}, key=str))
        h = _subst_atom(head, ren)
        key = (str(h), tuple(str(a) for a in b))
        if best is None or key < best[0]:
            best = (key, b, h)
    _, b, h = best
    return make_tgd(list(b), [h])


def _canonical_family_form(q: ConjunctiveQuery) -> tuple[str, ConjunctiveQuery, dict[str, int]]:
    """Canonicalize a query up to renaming: core it, rename free variables to
    f0, f1, ... minimizing the serialization.  Returns the canonical key, the
    canonical query, and the position each original free variable landed on."""
    cored = core_cq(q)
    temp_free = {v: f"t{i}" for i, v in enumerate(cored.free_vars)}
    temp_ex = {v: f"e{i}" for i, v in enumerate(cored.exist_vars)}
    ren0 = {**temp_free, **temp_ex}
    atoms0 = [_subst_atom(a, ren0) for a in cored.atoms]
    frees0 = [temp_free[v] for v in cored.free_vars]
    best = None
    for perm in itertools.permutations(range(len(frees0))):
        ren = {v: f"f{perm[i]}" for i, v in enumerate(frees0)}
        atoms = [_subst_atom(a, ren) for a in atoms0]
        qq = canonical_cq(cq([f"f{j}" for j in range(len(frees0))], atoms))
        key = f"({','.join(qq.free_vars)}) {qq}"
        if best is None or key < best[0]:
            best = (key, qq, {v: perm[i] for i, v in enumerate(cored.free_vars)})
    return best


# ---------------------------------------------------------------------------
# certification: chase each candidate body once, judge all heads against it

def _closure_request(atoms: Sequence[Atom]) -> tuple[str, tuple[Atom, ...], dict[str, str]]:
    base = tuple(sorted(set(atoms), key=str))
    canon, ren_items = _body_canonical(base)
    key = " & ".join(str(a) for a in canon)
    return key, canon, dict(ren_items)


def _closure_chunk(arg):
    rules, sig, items, oracle = arg
    out = []
    for key, atoms in items:
        inst, _ = canon_inst(cq([], list(atoms)), sig)
        res = chase(inst, list(rules), oracle)
        out.append((key, (res.status, res.result)))
    return out


def _closures_for_bodies(rules: Sequence[Tgd], sig: Signature,
                         bodies: dict[str, tuple[Atom, ...]],
                         config: RewriteConfig) -> dict[str, tuple[str, Instance]]:
    items = sorted(bodies.items())
    if config.jobs > 1 and len(items) > 1:
        chunks = [items[i::config.jobs] for i in range(config.jobs)]
        args = [(tuple(rules), sig, chunk, config.oracle) for chunk in chunks if chunk]
        out: dict[str, tuple[str, Instance]] = {}
        with ProcessPoolExecutor(max_workers=config.jobs) as ex:
            for part in ex.map(_closure_chunk, args):
                out.update(part)
        return out
    if not items:
        return {}
    return dict(_closure_chunk((tuple(rules), sig, items, config.oracle)))


def _head_verdict(status: str, closure: Instance, head: Atom, ren: dict[str, str]) -> str:
    args = []
    for t in head.args:
        if isinstance(t, Cst):
            args.append(closure.const_interp[t.name])
        else:
            args.append(elem(ren.get(t.name, t.name)))
    if Fact(head.rel, tuple(args)) in closure:
        return ENTAILED
    return REJECTED if status == TERMINATED else UNKNOWN


def _query_verdict(status: str, closure: Instance, q: ConjunctiveQuery,
                   binding: dict[str, Value]) -> str:
    if eval_cq(q, closure, binding=binding):
        return ENTAILED
    return REJECTED if status == TERMINATED else UNKNOWN


# ---------------------------------------------------------------------------
# candidate enumeration (guarded bodies)

def _enumeration_relations(sig: Signature, config: RewriteConfig) -> tuple[list[tuple[str, int]], bool]:
    rels = [(r, a) for r, a in sig.arities.items()]
    kept = [(r, a) for r, a in rels if a <= config.max_arity]
    capped = len(kept) < len(rels)
    if len(kept) > config.max_relations:
        kept = kept[:config.max_relations]
        capped = True
    return kept, capped


def _guarded_bodies(rels: Sequence[tuple[str, int]],
                    config: RewriteConfig) -> tuple[list[tuple[tuple[Atom, ...], tuple[str, ...]]], bool]:
    """All bodies consisting of a guard atom plus extra atoms over its variables."""
    capped = False
    bodies = []
    for rel, arity in rels:
        for pattern in _position_patterns(arity):
            guard = Atom(rel, tuple(Var(v) for v in pattern))
            gvars = tuple(dict.fromkeys(pattern))
            pool = [a for a in _atoms_over(rels, gvars) if a != guard]
            if len(pool) > config.extra_atom_pool_limit:
                pool = pool[:config.extra_atom_pool_limit]
                capped = True
            top = min(config.max_extra_body_atoms, len(pool))
            for n in range(top + 1):
                for extra in itertools.combinations(pool, n):
                    bodies.append(((guard,) + extra, gvars))
    return bodies, capped


def enumerate_full_guarded_candidates(sig: Signature, head_rel: Optional[str] = None,
                                      config: Optional[RewriteConfig] = None) -> CandidateSpace:
    """Every full guarded single-head rule over the signature, up to renaming,
    with cored bodies, within the configured enumeration caps."""
    config = config or RewriteConfig()
    rels, capped = _enumeration_relations(sig, config)
    if head_rel is not None and head_rel not in sig.arities:
        raise ValueError(f"undeclared head relation {head_rel}")
    bodies, caps_hit = _guarded_bodies(rels, config)
    capped = capped or caps_hit
    head_rels = [(r, a) for r, a in rels if head_rel is None or r == head_rel]
    cands: dict[str, Tgd] = {}
    for body, gvars in bodies:
        for hrel, harity in head_rels:
            for combo in itertools.product(gvars, repeat=harity):
                cand = _canonical_full_rule(body, Atom(hrel, tuple(Var(v) for v in combo)))
                cands.setdefault(str(cand), cand)
    caps = {
        "max_relations": config.max_relations,
        "max_arity": config.max_arity,
        "max_extra_body_atoms": config.max_extra_body_atoms,
        "extra_atom_pool_limit": config.extra_atom_pool_limit,
    }
    return CandidateSpace(tuple(cands[s] for s in sorted(cands)), caps, capped)


def _inject_input_rules(rules: Sequence[Tgd], require_guarded: bool) -> list[Tgd]:
    """Input rules that already have the shape of program rules: full, and
    (when required) guarded.  Multi-atom heads split into one rule per atom."""
    out = []
    for t in rules:
        if t.head.exist_vars:
            continue
        if require_guarded and not classify(t).guarded:
            continue
        for ha in t.head.atoms:
            out.append(_canonical_full_rule(t.body.atoms, ha))
    return out


def derive_full_guarded(rules: Sequence[Tgd], config: Optional[RewriteConfig] = None,
                        sig: Optional[Signature] = None) -> DerivationResult:
    """Chase-certified full guarded consequences of the rule set, within caps."""
    config = config or RewriteConfig()
    base = tgd_signature(list(rules), sig)
    space = enumerate_full_guarded_candidates(base, None, config)
    cands = {str(c): c for c in space.candidates}
    for c in _inject_input_rules(rules, require_guarded=True):
        cands.setdefault(str(c), c)
    bodies: dict[str, tuple[Atom, ...]] = {}
    requests = {}
    for s, c in cands.items():
        key, canon, ren = _closure_request(c.body.atoms)
        bodies.setdefault(key, canon)
        requests[s] = (key, ren)
    closures = _closures_for_bodies(rules, base, bodies, config)
    records, kept = [], []
    for s in sorted(cands):
        c = cands[s]
        key, ren = requests[s]
        status, closure = closures[key]
        verdict = _head_verdict(status, closure, c.head.atoms[0], ren)
        records.append(CertificationRecord(s, verdict, "rule"))
        if verdict == ENTAILED:
            kept.append(c)
    return DerivationResult(tuple(kept), tuple(records), space.caps, space.capped)


# ---------------------------------------------------------------------------
# query families: quotients of subqueries, canonicalized

def _quotient_subquery_family(query: ConjunctiveQuery, k: int, config: RewriteConfig,
                              answer_guarded_only: bool = False) -> tuple[dict[str, ConjunctiveQuery], bool]:
    """Queries relevant to answering the input query: take a variable quotient,
    keep a subset of its atoms, and expose the variables shared with the rest
    (plus answer variables).  Canonicalized and capped at k variables."""
    capped = False
    allvars = list(query.all_vars())
    if len(allvars) > config.max_quotient_vars:
        partitions: Iterable[list[list[str]]] = [[[v] for v in allvars]]
        capped = True
    else:
        partitions = _set_partitions(allvars)
    out: dict[str, ConjunctiveQuery] = {}
    for part in partitions:
        rep = {v: cls[0] for cls in part for v in cls}
        theta_atoms = list(dict.fromkeys(_subst_atom(a, rep) for a in query.atoms))
        theta_free = [rep[x] for x in query.free_vars]
        n = len(theta_atoms)
        for mask in range(1, 1 << n):
            sub = [theta_atoms[i] for i in range(n) if mask >> i & 1]
            rest = [theta_atoms[i] for i in range(n) if not mask >> i & 1]
            outside = {v for a in rest for v in a.vars()} | set(theta_free)
            boundary = [v for v in dict.fromkeys(v for a in sub for v in a.vars())
                        if v in outside]
            qsub = cq(boundary, sub)
            if len(set(qsub.all_vars())) > k:
                continue
            key, canonq, _ = _canonical_family_form(qsub)
            if answer_guarded_only and not is_answer_guarded(canonq):
                continue
            out.setdefault(key, canonq)
    return out, capped


def _family_predicate_names(family: dict[str, ConjunctiveQuery], used: set[str]) -> dict[str, str]:
    names = {}
    i = 0
    for key in sorted(family):
        while f"Q{i}" in used:
            i += 1
        names[key] = f"Q{i}"
        used.add(f"Q{i}")
        i += 1
    return names


def _family_head(name: str, frees: Sequence[str]) -> Atom:
    if frees:
        return Atom(name, tuple(Var(v) for v in frees))
    return Atom(name, (Cst(UNIT_CONST),))


# ---------------------------------------------------------------------------
# query generation rules (guarded bodies deriving query-extension predicates)

def _query_rule_candidates(bodies, family: dict[str, ConjunctiveQuery],
                           pred_names: dict[str, str]) -> dict[str, tuple[Tgd, str]]:
    cands: dict[str, tuple[Tgd, str]] = {}
    for body, gvars in bodies:
        for key in sorted(family):
            canonq = family[key]
            frees = canonq.free_vars
            if frees:
                for combo in itertools.product(gvars, repeat=len(frees)):
                    head = Atom(pred_names[key], tuple(Var(v) for v in combo))
                    cand = _canonical_full_rule(body, head, core_body=False)
                    cands.setdefault(str(cand), (cand, key))
            else:
                head = Atom(pred_names[key], (Cst(UNIT_CONST),))
                cand = _canonical_full_rule(body, head, core_body=False)
                cands.setdefault(str(cand), (cand, key))
    return cands


def _certify_query_rules(cands: dict[str, tuple[Tgd, str]],
                         family: dict[str, ConjunctiveQuery],
                         closures: dict[str, tuple[str, Instance]]) -> tuple[list[Tgd], list[CertificationRecord]]:
    kept, records = [], []
    for s in sorted(cands):
        cand, key = cands[s]
        ckey, _, ren = _closure_request(cand.body.atoms)
        status, closure = closures[ckey]
        canonq = family[key]
        if canonq.free_vars:
            binding = {f: elem(ren[t.name])
                       for f, t in zip(canonq.free_vars, cand.head.atoms[0].args)}
        else:
            binding = {}
        verdict = _query_verdict(status, closure, canonq, binding)
        records.append(CertificationRecord(s, verdict, "query-rule"))
        if verdict == ENTAILED:
            kept.append(cand)
    return kept, records


def query_generation_rules(rules: Sequence[Tgd], query: ConjunctiveQuery,
                           k: Optional[int] = None,
                           config: Optional[RewriteConfig] = None) -> QueryRulesResult:
    """Guarded full rules deriving query-extension predicates: body B entails
    the predicate's query with the head arguments, certified by the chase."""
    config = config or RewriteConfig()
    sig = tgd_signature(list(rules), query_signature(query))
    k = k if k is not None else _default_k(rules, query, config)
    family, fam_capped = _quotient_subquery_family(query, k, config)
    pred_names = _family_predicate_names(family, set(sig.arities) | set(sig.constants))
    rels, rel_capped = _enumeration_relations(sig, config)
    bodies, body_capped = _guarded_bodies(rels, config)
    cands = _query_rule_candidates(bodies, family, pred_names)
    closure_bodies: dict[str, tuple[Atom, ...]] = {}
    for cand, _ in cands.values():
        key, canon, _ren = _closure_request(cand.body.atoms)
        closure_bodies.setdefault(key, canon)
    closures = _closures_for_bodies(rules, sig, closure_bodies, config)
    kept, records = _certify_query_rules(cands, family, closures)
    caps = {"k": k, "max_relations": config.max_relations,
            "max_arity": config.max_arity,
            "max_extra_body_atoms": config.max_extra_body_atoms,
            "extra_atom_pool_limit": config.extra_atom_pool_limit}
    predicates = {pred_names[key]: key for key in family}
    return QueryRulesResult(tuple(kept), tuple(records), predicates,
                            caps, fam_capped or rel_capped or body_capped)


# ---------------------------------------------------------------------------
# goal rules (conjunctions of query-extension predicates entailing the query)

def _goal_rules_impl(query: ConjunctiveQuery, k: int,
                     family: dict[str, ConjunctiveQuery],
                     pred_names: dict[str, str], goal_name: str,
                     config: RewriteConfig) -> tuple[list[Rule], list[CertificationRecord], bool]:
    capped = False
    allvars = list(query.all_vars())
    if len(allvars) > config.max_quotient_vars:
        partitions: Iterable[list[list[str]]] = [[[v] for v in allvars]]
        capped = True
    else:
        partitions = _set_partitions(allvars)
    rules_out: dict[str, Rule] = {}
    records: dict[str, CertificationRecord] = {}
    for part in partitions:
        rep = {v: cls[0] for cls in part for v in cls}
        theta_atoms = list(dict.fromkeys(_subst_atom(a, rep) for a in query.atoms))
        theta_free = [rep[x] for x in query.free_vars]
        used_vars = {v for a in theta_atoms for v in a.vars()}
        if len(used_vars) > k:
            continue
        n = len(theta_atoms)
        for atom_part in _set_partitions(list(range(n))):
            if len(atom_part) > config.max_goal_premises:
                continue
            premises = []
            ok = True
            for group in atom_part:
                sub = [theta_atoms[i] for i in group]
                rest = [theta_atoms[i] for i in range(n) if i not in group]
                outside = {v for a in rest for v in a.vars()} | set(theta_free)
                boundary = [v for v in dict.fromkeys(v for a in sub for v in a.vars())
                            if v in outside]
                key, _canonq, posmap = _canonical_family_form(cq(boundary, sub))
                if key not in pred_names:
                    ok = False
                    break
                if boundary:
                    args: list = [None] * len(boundary)
                    for v, pos in posmap.items():
                        args[pos] = Var(v)
                    premises.append(Atom(pred_names[key], tuple(args)))
                else:
                    premises.append(Atom(pred_names[key], (Cst(UNIT_CONST),)))
            if not ok:
                continue
            if theta_free:
                head = Atom(goal_name, tuple(Var(v) for v in theta_free))
            else:
                head = Atom(goal_name, (Cst(UNIT_CONST),))
            rule = Rule(head, tuple(sorted(premises, key=str)))
            s = str(rule)
            if s in records:
                continue
            conj = cq(tuple(theta_free), theta_atoms)
            verdict = ENTAILED if cq_contained(conj, query) else REJECTED
            records[s] = CertificationRecord(s, verdict, "goal-rule")
            if verdict == ENTAILED:
                rules_out[s] = rule
    ordered = sorted(rules_out)
    return ([rules_out[s] for s in ordered],
            [records[s] for s in sorted(records)], capped)


def goal_rules(query: ConjunctiveQuery, k: Optional[int] = None,
               config: Optional[RewriteConfig] = None,
               goal_name: str = "Goal") -> GoalRulesResult:
    """All goal rules over query-extension predicates whose premise conjunction
    is contained in the query (checked by the containment test)."""
    config = config or RewriteConfig()
    k = k if k is not None else max(len(query.all_vars()), 1)
    family, fam_capped = _quotient_subquery_family(query, k, config)
    sig = query_signature(query)
    pred_names = _family_predicate_names(
        family, set(sig.arities) | set(sig.constants) | {goal_name})
    rules, records, capped = _goal_rules_impl(query, k, family, pred_names,
                                              goal_name, config)
    predicates = {pred_names[key]: key for key in family}
    return GoalRulesResult(tuple(rules), tuple(records), predicates,
                           capped or fam_capped)


# ---------------------------------------------------------------------------
# program assembly helpers

def _rule_from_tgd(t: Tgd, relmap: dict[str, str]) -> Rule:
    def tr(a: Atom) -> Atom:
        return Atom(relmap.get(a.rel, a.rel), a.args)

    return Rule(tr(t.head.atoms[0]), tuple(tr(a) for a in t.body.atoms))


def _import_rules(sig: Signature, copies: dict[str, str]) -> list[Rule]:
    out = []
    for rel, arity in sig.arities.items():
        args = tuple(Var(f"x{i}") for i in range(arity))
        out.append(Rule(Atom(copies[rel], args), (Atom(rel, args),)))
    return out


def _default_k(rules: Sequence[Tgd], query: ConjunctiveQuery,
               config: RewriteConfig) -> int:
    maxbody = max((len(t.body.free_vars) for t in rules), default=1)
    return min(max(maxbody, len(query.all_vars()), 1), config.max_k)


def _uses_unit(rules: Iterable[Rule]) -> bool:
    for r in rules:
        for a in (r.head, *r.body):
            if any(isinstance(t, Cst) and t.name == UNIT_CONST for t in a.args):
                return True
    return False


def _completeness(capped: bool, records: Iterable[CertificationRecord]) -> str:
    if capped or any(r.verdict == UNKNOWN for r in records):
        return CAPPED
    return COMPLETE_WITHIN_CAPS


# ---------------------------------------------------------------------------
# scheme 1: atomic queries under guarded rules

def _require_atomic(query: ConjunctiveQuery) -> Atom:
    if len(query.atoms) != 1:
        raise ValueError("atomic rewriting needs a single-atom query")
    a = query.atoms[0]
    if not all(isinstance(t, Var) for t in a.args):
        raise ValueError("atomic rewriting needs variable arguments")
    if len(set(t.name for t in a.args)) != len(a.args):
        raise ValueError("atomic rewriting needs pairwise distinct variables")
    if set(query.free_vars) != set(a.vars()):
        raise ValueError("atomic rewriting needs every variable free")
    return a


def rewrite_atomic_guarded(rules: Sequence[Tgd], query: ConjunctiveQuery,
                           config: Optional[RewriteConfig] = None) -> RewriteArtifacts:
    """Compile certain answers of an atomic query under guarded rules into a
    guarded Datalog program over relation copies."""
    config = config or RewriteConfig()
    qatom = _require_atomic(query)
    for t in rules:
        if not classify(t).guarded:
            raise ValueError(f"rule is not guarded: {t}")
    sig = tgd_signature(list(rules), query_signature(query))
    derivation = derive_full_guarded(rules, config, sig)
    copies = _copy_map(sig)
    prog_rules: dict[str, Rule] = {}
    records = list(derivation.certification)
    for t in derivation.rules:
        if t.head.atoms[0] in set(t.body.atoms):
            continue
        r = _rule_from_tgd(t, copies)
        prog_rules[str(r)] = r
    for r in _import_rules(sig, copies):
        prog_rules[str(r)] = r
        records.append(CertificationRecord(str(r), ENTAILED, "import"))
    idb = Signature([(copies[rel], arity) for rel, arity in sig.arities.items()])
    program = DatalogProgram(sig, idb,
                             tuple(prog_rules[s] for s in sorted(prog_rules)),
                             copies[qatom.rel])
    positions = {t.name: i for i, t in enumerate(qatom.args)}
    projection = tuple(positions[x] for x in query.free_vars)
    return RewriteArtifacts(
        program=program,
        certification=tuple(records),
        caps=dict(derivation.caps),
        capped=derivation.capped,
        completeness=_completeness(derivation.capped, records),
        query_predicates={},
        boolean_goal=False,
        answer_projection=projection,
    )


# ---------------------------------------------------------------------------
# scheme 2: conjunctive queries under guarded rules

def rewrite_cq_guarded(rules: Sequence[Tgd], query: ConjunctiveQuery,
                       config: Optional[RewriteConfig] = None) -> RewriteArtifacts:
    """Compile certain answers of a conjunctive query under guarded rules into
    an internally guarded program: guarded rules derive consequences and
    query-extension predicates; goal rules assemble the answers."""
    config = config or RewriteConfig()
    for t in rules:
        if not classify(t).guarded:
            raise ValueError(f"rule is not guarded: {t}")
    sig = tgd_signature(list(rules), query_signature(query))
    k = config.k if config.k is not None else _default_k(rules, query, config)
    capped = k < len(query.all_vars())

    family, fam_capped = _quotient_subquery_family(query, k, config)
    copies = _copy_map(sig)
    used = set(sig.arities) | set(sig.constants) | set(copies.values())
    goal_name = _fresh_name("Goal", used)
    used.add(goal_name)
    pred_names = _family_predicate_names(family, used)

    rels, rel_capped = _enumeration_relations(sig, config)
    bodies, body_capped = _guarded_bodies(rels, config)
    capped = capped or fam_capped or rel_capped or body_capped

    # candidates: full guarded consequences plus query-extension rules
    full_cands = {str(c): c for c in
                  enumerate_full_guarded_candidates(sig, None, config).candidates}
    for c in _inject_input_rules(rules, require_guarded=True):
        full_cands.setdefault(str(c), c)
    qg_cands = _query_rule_candidates(bodies, family, pred_names)

    closure_bodies: dict[str, tuple[Atom, ...]] = {}
    for c in full_cands.values():
        key, canon, _ = _closure_request(c.body.atoms)
        closure_bodies.setdefault(key, canon)
    for cand, _ in qg_cands.values():
        key, canon, _ = _closure_request(cand.body.atoms)
        closure_bodies.setdefault(key, canon)
    closures = _closures_for_bodies(rules, sig, closure_bodies, config)

    records: list[CertificationRecord] = []
    derived: list[Tgd] = []
    for s in sorted(full_cands):
        c = full_cands[s]
        key, _, ren = _closure_request(c.body.atoms)
        status, closure = closures[key]
        verdict = _head_verdict(status, closure, c.head.atoms[0], ren)
        records.append(CertificationRecord(s, verdict, "rule"))
        if verdict == ENTAILED:
            derived.append(c)
    qg_kept, qg_records = _certify_query_rules(qg_cands, family, closures)
    records.extend(qg_records)

    goal_list, goal_records, goal_capped = _goal_rules_impl(
        query, k, family, pred_names, goal_name, config)
    records.extend(goal_records)
    capped = capped or goal_capped

    prog_rules: dict[str, Rule] = {}
    for t in derived:
        if t.head.atoms[0] in set(t.body.atoms):
            continue
        r = _rule_from_tgd(t, copies)
        prog_rules[str(r)] = r
    for t in qg_kept:
        r = _rule_from_tgd(t, copies)  # head predicate is not an input relation
        prog_rules[str(r)] = r
    for r in goal_list:
        prog_rules[str(r)] = r
    for r in _import_rules(sig, copies):
        prog_rules[str(r)] = r
        records.append(CertificationRecord(str(r), ENTAILED, "import"))

    referenced = {a.rel for r in prog_rules.values() for a in (r.head, *r.body)}
    idb_rels = [(copies[rel], arity) for rel, arity in sig.arities.items()]
    for key in sorted(family):
        name = pred_names[key]
        if name in referenced:
            idb_rels.append((name, max(1, len(family[key].free_vars))))
    idb_rels.append((goal_name, max(1, len(query.free_vars))))

    ordered_rules = tuple(prog_rules[s] for s in sorted(prog_rules))
    edb = sig
    if _uses_unit(ordered_rules) and UNIT_CONST not in sig.constants:
        edb = sig.extend(constants=(UNIT_CONST,))
    program = DatalogProgram(edb, Signature(idb_rels), ordered_rules, goal_name)
    assert classify_datalog(program).internally_guarded

    return RewriteArtifacts(
        program=program,
        certification=tuple(records),
        caps={"k": k, "max_relations": config.max_relations,
              "max_arity": config.max_arity,
              "max_extra_body_atoms": config.max_extra_body_atoms,
              "extra_atom_pool_limit": config.extra_atom_pool_limit,
              "max_goal_premises": config.max_goal_premises},
        capped=capped,
        completeness=_completeness(capped, records),
        query_predicates={pred_names[key]: key for key in family},
        boolean_goal=not query.free_vars,
        answer_projection=tuple(range(len(query.free_vars))),
    )


# ---------------------------------------------------------------------------
# guard extension predicates

def guard_extension_axioms(sig: Signature,
                           config: Optional[RewriteConfig] = None) -> GuardExtensionResult:
    """Projection predicates for every argument-position subset of each input
    relation, with axioms tying them to the relation in both directions."""
    used = set(sig.arities) | set(sig.constants)
    predicates: dict[tuple[str, tuple[int, ...]], str] = {}
    axioms: list[Tgd] = []
    new_rels: list[tuple[str, int]] = []
    for rel, arity in sig.arities.items():
        positions = list(range(1, arity + 1))
        subsets = [tuple(s) for size in range(arity + 1)
                   for s in itertools.combinations(positions, size)]
        for subset in subsets:
            suffix = "".join(str(p) for p in subset) or "0"
            name = _fresh_name(f"{rel}_p{suffix}", used)
            used.add(name)
            predicates[(rel, subset)] = name
            new_rels.append((name, max(1, len(subset))))
            if len(subset) == arity:
                continue  # the relation itself plays this role
            full_args = tuple(Var(f"x{i}") for i in positions)
            if subset:
                proj = tuple(Var(f"x{p}") for p in subset)
                axioms.append(make_tgd([Atom(rel, full_args)], [Atom(name, proj)]))
                axioms.append(make_tgd([Atom(name, proj)], [Atom(rel, full_args)]))
            else:
                axioms.append(make_tgd([Atom(rel, full_args)],
                                       [Atom(name, (Cst(UNIT_CONST),))]))
                axioms.append(make_tgd([Atom(name, (Var("u"),))],
                                       [Atom(rel, full_args)]))
    constants = () if UNIT_CONST in sig.constants else (UNIT_CONST,)
    extended = sig.extend(relations=new_rels, constants=constants)
    return GuardExtensionResult(predicates, tuple(axioms), extended)


# ---------------------------------------------------------------------------
# scheme 3: answer-guarded queries under frontier-guarded rules

def _fg_rule_candidates(pool_rels: Sequence[tuple[str, int]],
                        head_rels: Sequence[tuple[str, int]],
                        guard_rels: Sequence[tuple[str, int]],
                        k: int, config: RewriteConfig) -> tuple[dict[str, Tgd], bool]:
    """Full frontier-guarded candidates: a guard atom covering the head
    variables, extra atoms over the guard's variables plus fresh ones."""
    capped = False
    cands: dict[str, Tgd] = {}
    for rel, arity in guard_rels:
        for pattern in _position_patterns(arity):
            guard = Atom(rel, tuple(Var(v) for v in pattern))
            gvars = tuple(dict.fromkeys(pattern))
            fresh = tuple(f"w{i}" for i in range(max(0, k - len(gvars))))
            pool = [a for a in _atoms_over(pool_rels, gvars + fresh) if a != guard]
            if len(pool) > config.extra_atom_pool_limit:
                pool = pool[:config.extra_atom_pool_limit]
                capped = True
            top = min(config.fg_max_extra_body_atoms, len(pool))
            for n in range(top + 1):
                for extra in itertools.combinations(pool, n):
                    body = (guard,) + extra
                    for hrel, harity in head_rels:
                        for combo in itertools.product(gvars, repeat=harity):
                            head = Atom(hrel, tuple(Var(v) for v in combo))
                            cand = _canonical_full_rule(body, head)
                            cands.setdefault(str(cand), cand)
                        if harity == 1:
                            head = Atom(hrel, (Cst(UNIT_CONST),))
                            cand = _canonical_full_rule(body, head)
                            cands.setdefault(str(cand), cand)
    return cands, capped


def rewrite_fg(rules: Sequence[Tgd], query: ConjunctiveQuery,
               config: Optional[RewriteConfig] = None) -> RewriteArtifacts:
    """Compile certain answers of an answer-guarded query under frontier-guarded
    rules into a frontier-guarded program, using guard-extension and
    query-extension predicates to carry derived information."""
    config = config or RewriteConfig()
    for t in rules:
        if not classify(t).frontier_guarded:
            raise ValueError(f"rule is not frontier-guarded: {t}")
    if not is_answer_guarded(query):
        raise ValueError("query must be answer-guarded")
    base_sig = tgd_signature(list(rules), query_signature(query))
    maxbody = max((len(t.body.free_vars) for t in rules), default=1)
    if config.k is not None:
        k = config.k
    else:
        k = max(min(max(maxbody, 1), config.max_k), len(query.all_vars()))
    capped = k < len(query.all_vars())

    ext = guard_extension_axioms(base_sig, config)
    used = set(ext.signature.arities) | set(ext.signature.constants)
    ans_name = _fresh_name("Ans", used)
    used.add(ans_name)
    family, fam_capped = _quotient_subquery_family(query, k, config,
                                                   answer_guarded_only=True)
    capped = capped or fam_capped
    pred_names = _family_predicate_names(family, used)

    ans_arity = max(1, len(query.free_vars))
    if query.free_vars:
        ans_head = Atom(ans_name, tuple(Var(x) for x in query.free_vars))
    else:
        ans_head = Atom(ans_name, (Cst(UNIT_CONST),))
    answer_rule = make_tgd(list(query.atoms), [ans_head])

    extension_axioms: list[Tgd] = []
    for key in sorted(family):
        canonq = family[key]
        head = _family_head(pred_names[key], canonq.free_vars)
        extension_axioms.append(make_tgd(list(canonq.atoms), [head]))
        if canonq.free_vars:
            back_body = Atom(pred_names[key], tuple(Var(v) for v in canonq.free_vars))
        else:
            back_body = Atom(pred_names[key], (Var("u"),))
        extension_axioms.append(make_tgd([back_body], list(canonq.atoms)))

    theory = list(rules) + [answer_rule] + list(ext.axioms) + extension_axioms
    ext_sig = ext.signature.extend(
        relations=[(ans_name, ans_arity)]
        + [(pred_names[key], max(1, len(family[key].free_vars)))
           for key in sorted(family)])

    base_rels, rel_capped = _enumeration_relations(base_sig, config)
    capped = capped or rel_capped
    extension_rels = ([(ans_name, ans_arity)]
                      + [(pred_names[key], max(1, len(family[key].free_vars)))
                         for key in sorted(family)]
                      + [(name, ext.signature.arities[name])
                         for name in sorted(set(ext.signature.arities) - set(base_sig.arities))])
    pool_rels = list(base_rels) + [(r, a) for r, a in extension_rels
                                   if a <= config.max_arity]
    head_rels = pool_rels
    guard_rels = pool_rels

    cands, enum_capped = _fg_rule_candidates(pool_rels, head_rels, guard_rels,
                                             k, config)
    capped = capped or enum_capped

    axiom_fulls: dict[str, Tgd] = {}
    for t in theory:
        if t.head.exist_vars:
            continue
        for ha in t.head.atoms:
            c = _canonical_full_rule(t.body.atoms, ha)
            axiom_fulls.setdefault(str(c), c)

    closure_bodies: dict[str, tuple[Atom, ...]] = {}
    for c in cands.values():
        if str(c) in axiom_fulls:
            continue
        key, canon, _ = _closure_request(c.body.atoms)
        closure_bodies.setdefault(key, canon)
    closures = _closures_for_bodies(theory, ext_sig, closure_bodies, config)

    records: list[CertificationRecord] = []
    derived: dict[str, Tgd] = {}
    for s in sorted(set(cands) | set(axiom_fulls)):
        if s in axiom_fulls:
            records.append(CertificationRecord(s, ENTAILED, "axiom"))
            derived[s] = axiom_fulls[s]
            continue
        c = cands[s]
        key, _, ren = _closure_request(c.body.atoms)
        status, closure = closures[key]
        verdict = _head_verdict(status, closure, c.head.atoms[0], ren)
        records.append(CertificationRecord(s, verdict, "rule"))
        if verdict == ENTAILED:
            derived[s] = c

    copies = _copy_map(base_sig)
    prog_rules: dict[str, Rule] = {}
    for s in sorted(derived):
        t = derived[s]
        if t.head.atoms[0] in set(t.body.atoms):
            continue
        r = _rule_from_tgd(t, copies)
        prog_rules[str(r)] = r
    records_rules = list(records)
    for r in _import_rules(base_sig, copies):
        prog_rules[str(r)] = r
        records_rules.append(CertificationRecord(str(r), ENTAILED, "import"))

    idb_rels = [(copies[rel], arity) for rel, arity in base_sig.arities.items()]
    idb_rels += [(r, a) for r, a in extension_rels]
    ordered_rules = tuple(prog_rules[s] for s in sorted(prog_rules))
    edb = base_sig
    if _uses_unit(ordered_rules) and UNIT_CONST not in base_sig.constants:
        edb = base_sig.extend(constants=(UNIT_CONST,))
    program = DatalogProgram(edb, Signature(idb_rels), ordered_rules, ans_name)
    assert classify_datalog(program).frontier_guarded

    return RewriteArtifacts(
        program=program,
        certification=tuple(records_rules),
        caps={"k": k, "max_relations": config.max_relations,
              "max_arity": config.max_arity,
              "fg_max_extra_body_atoms": config.fg_max_extra_body_atoms,
              "extra_atom_pool_limit": config.extra_atom_pool_limit},
        capped=capped,
        completeness=_completeness(capped, records_rules),
        query_predicates={pred_names[key]: key for key in family},
        boolean_goal=not query.free_vars,
        answer_projection=tuple(range(len(query.free_vars))),
    )


# ---------------------------------------------------------------------------
# the reference oracle and program evaluation

def certain_answers_oracle(rules: Sequence[Tgd], query: ConjunctiveQuery,
                           inst: Instance,
                           config: Optional[RewriteConfig] = None) -> tuple[frozenset, bool]:
    """Certain answers by chasing the instance and evaluating the query on the
    result, keeping tuples over the input's values only.  The second component
    reports whether the chase terminated (answers are complete) or the budget
    ran out (answers are a sound lower approximation)."""
    config = config or RewriteConfig()
    sig = tgd_signature(list(rules), query_signature(query, inst.sig))
    inst2 = Instance(sig, inst.facts, inst.const_interp)
    res = chase(inst2, list(rules), config.oracle)
    allowed = active_domain(inst2) | inst2.const_values()
    answers = frozenset(t for t in eval_cq(query, res.result)
                        if set(t) <= allowed)
    return answers, res.status == TERMINATED


def evaluate_program(artifacts: RewriteArtifacts, inst: Instance) -> set[tuple]:
    """Run a compiled program on an input instance and return the answers in
    the original query's free-variable order (Boolean queries: {()} or set())."""
    prog = artifacts.program
    missing_rels = [(r, a) for r, a in prog.edb.arities.items()
                    if r not in inst.sig.arities]
    missing_consts = [c for c in prog.edb.constants
                      if c not in inst.const_interp]
    sig = inst.sig.extend(relations=missing_rels, constants=missing_consts)
    inst2 = Instance(sig, inst.facts, inst.const_interp)
    answers = eval_datalog(prog, inst2)
    if artifacts.boolean_goal:
        return {()} if answers else set()
    return {tuple(t[i] for i in artifacts.answer_projection) for t in answers}
