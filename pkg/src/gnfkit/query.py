"""Conjunctive queries: evaluation, containment, cores, acyclicity, treeification."""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Iterable, Iterator, Optional, Sequence, Union

from .model import (Fact, Instance, Signature, Value, active_domain, elem,
                    find_homomorphism)


@dataclass(frozen=True)
class Var:
    name: str

    def __repr__(self):
        return self.name


@dataclass(frozen=True)
class Cst:
    name: str

    def __repr__(self):
        return self.name


Term = Union[Var, Cst]


@dataclass(frozen=True)
class Atom:
    rel: str
    args: tuple[Term, ...]

    def vars(self) -> tuple[str, ...]:
        seen = []
        for t in self.args:
            if isinstance(t, Var) and t.name not in seen:
                seen.append(t.name)
        return tuple(seen)

    def __str__(self):
        return f"{self.rel}({','.join(t.name for t in self.args)})"

    def __repr__(self):
        return str(self)


def atom(rel: str, *args: str) -> Atom:
    """Convenience builder: lowercase-by-convention names are all vars here; use
    cst() explicitly for constants."""
    return Atom(rel, tuple(Var(a) if isinstance(a, str) else a for a in args))


def cst(name: str) -> Cst:
    return Cst(name)


@dataclass(frozen=True)
class ConjunctiveQuery:
    free_vars: tuple[str, ...]
    exist_vars: tuple[str, ...]
    atoms: tuple[Atom, ...]

    def __post_init__(self):
        if set(self.free_vars) & set(self.exist_vars):
            raise ValueError("free and existential variables overlap")
        used = {v for a in self.atoms for v in a.vars()}
        declared = set(self.free_vars) | set(self.exist_vars)
        if not used <= declared:
            raise ValueError(f"undeclared variables {sorted(used - declared)}")
        for x in self.free_vars:
            if x not in used:
                raise ValueError(f"free variable {x} occurs in no atom")

    def all_vars(self) -> tuple[str, ...]:
        return self.free_vars + self.exist_vars

    def constants(self) -> set[str]:
        return {t.name for a in self.atoms for t in a.args if isinstance(t, Cst)}

    def __str__(self):
        body = ", ".join(str(a) for a in sorted(self.atoms, key=str))
        if self.exist_vars:
            return f"exists {','.join(self.exist_vars)}: {body}"
        return body

    def __repr__(self):
        return f"CQ({','.join(self.free_vars)} | {self})"


def cq(free: Sequence[str], atoms: Sequence[Atom]) -> ConjunctiveQuery:
    """Build a CQ; variables not listed free are existential (first-occurrence order)."""
    free = tuple(free)
    exist = []
    for a in atoms:
        for v in a.vars():
            if v not in free and v not in exist:
                exist.append(v)
    return ConjunctiveQuery(free, tuple(exist), tuple(atoms))


@dataclass(frozen=True)
class UnionOfCQs:
    members: tuple[ConjunctiveQuery, ...]

    def __post_init__(self):
        arities = {len(q.free_vars) for q in self.members}
        if len(arities) > 1:
            raise ValueError("union members disagree on free arity")


def query_signature(q: ConjunctiveQuery, base: Optional[Signature] = None) -> Signature:
    """Signature inferred from the query's atoms, optionally extending a base."""
    rels = {}
    for a in q.atoms:
        if a.rel in rels and rels[a.rel] != len(a.args):
            raise ValueError(f"relation {a.rel} used with two arities")
        rels[a.rel] = len(a.args)
    if base is not None:
        return base.extend(sorted(rels.items()), sorted(q.constants()))
    return Signature(sorted(rels.items()), sorted(q.constants()))


def canon_inst(q: ConjunctiveQuery, sig: Optional[Signature] = None):
    """Canonical instance of q: one element per variable, constants as themselves.

    Returns (instance, free_values) with free_values positionally matching free_vars.
    """
    sig = query_signature(q, sig)

    def tv(t: Term) -> Value:
        return elem(t.name) if isinstance(t, Var) else Value("constant", t.name)

    facts = [Fact(a.rel, tuple(tv(t) for t in a.args)) for a in q.atoms]
    inst = Instance(sig, facts)
    return inst, tuple(elem(x) for x in q.free_vars)


# ---------------------------------------------------------------------------
# joins over fact sets (shared by evaluation, the chase, and Datalog)

def match_atoms(atoms: Sequence[Atom], sources: Sequence[Iterable[tuple[Value, ...]]],
                binding: dict[str, Value],
                const_of) -> Iterator[dict[str, Value]]:
    """All extensions of `binding` matching each atom against its own tuple source.

    `const_of(name)` resolves constant terms to values.  Atoms are matched
    left to right; callers order them (guard first) for pruning.
    """
    if not atoms:
        yield dict(binding)
        return
    a, rest_atoms = atoms[0], atoms[1:]
    rest_sources = sources[1:]
    for tup in sources[0]:
        new = {}
        ok = True
        for t, v in zip(a.args, tup):
            if isinstance(t, Cst):
                if const_of(t.name) != v:
                    ok = False
                    break
            else:
                bound = binding.get(t.name, new.get(t.name))
                if bound is None:
                    new[t.name] = v
                elif bound != v:
                    ok = False
                    break
        if not ok:
            continue
        binding.update(new)
        yield from match_atoms(rest_atoms, rest_sources, binding, const_of)
        for k in new:
            del binding[k]


def _ordered_for_join(atoms: Sequence[Atom]) -> list[Atom]:
    # start from the widest atom, then greedily prefer atoms sharing bound vars
    if not atoms:
        return []
    rest = list(atoms)
    rest.sort(key=lambda a: (-len(set(a.vars())), str(a)))
    out = [rest.pop(0)]
    bound = set(out[0].vars())
    while rest:
        rest.sort(key=lambda a: (-len(set(a.vars()) & bound), str(a)))
        nxt = rest.pop(0)
        out.append(nxt)
        bound |= set(nxt.vars())
    return out


def instance_tuples(inst: Instance, rel: str) -> set[tuple[Value, ...]]:
    return {f.args for f in inst.rel_facts(rel)}


def eval_cq(q: ConjunctiveQuery, inst: Instance,
            binding: Optional[dict[str, Value]] = None) -> set[tuple[Value, ...]]:
    """All answer tuples of q on inst (set semantics, active-domain)."""
    for c in q.constants():
        if c not in inst.const_interp:
            raise ValueError(f"constant {c} not interpreted in instance")
    for a in q.atoms:
        if a.rel not in inst.sig.arities:
            raise ValueError(f"undeclared relation {a.rel}")
        if inst.sig.arities[a.rel] != len(a.args):
            raise ValueError(f"arity mismatch on {a.rel}")
    ordered = _ordered_for_join(q.atoms)
    sources = [instance_tuples(inst, a.rel) for a in ordered]
    out = set()
    start = dict(binding) if binding else {}
    for m in match_atoms(ordered, sources, start, lambda c: inst.const_interp[c]):
        out.add(tuple(m[x] for x in q.free_vars))
    return out


def cq_contained(q1: ConjunctiveQuery, q2: ConjunctiveQuery) -> bool:
    """Whether every answer of q1 is an answer of q2, by canonical-instance homomorphism."""
    if len(q1.free_vars) != len(q2.free_vars):
        raise ValueError("containment needs equal free arity")
    sig = query_signature(q2, query_signature(q1))
    inst1, free1 = canon_inst(q1, sig)
    inst2, free2 = canon_inst(q2, sig)
    seed = dict(zip(free2, free1))
    return find_homomorphism(inst2, inst1, seed=seed) is not None


def cq_equivalent(q1: ConjunctiveQuery, q2: ConjunctiveQuery) -> bool:
    return cq_contained(q1, q2) and cq_contained(q2, q1)


def core_cq(q: ConjunctiveQuery) -> ConjunctiveQuery:
    """Minimize q by endomorphic retracts that fix the free variables."""
    atoms = list(dict.fromkeys(q.atoms))
    free = q.free_vars
    while True:
        cur = cq(free, atoms)
        inst, free_vals = canon_inst(cur)
        seed = {v: v for v in free_vals}
        shrunk = False
        for drop in sorted(active_domain(inst), key=lambda v: v.name):
            if drop in set(free_vals) or drop.kind == "constant":
                continue
            target = Instance(inst.sig,
                              (f for f in inst.facts if drop not in f.args),
                              inst.const_interp)
            h = find_homomorphism(inst, target, seed=seed)
            if h is None:
                continue
            m = h.as_dict()

            def image(t: Term) -> Term:
                if isinstance(t, Cst):
                    return t
                v = m[elem(t.name)]
                return Cst(v.name) if v.kind == "constant" else Var(v.name)

            ren = {}
            for a in atoms:
                ren[Atom(a.rel, tuple(image(t) for t in a.args))] = True
            atoms = list(ren)
            shrunk = True
            break
        if not shrunk:
            return cq(free, atoms)


def is_answer_guarded(q: ConjunctiveQuery) -> bool:
    """Some atom contains every free variable (vacuously true for Boolean queries)."""
    need = set(q.free_vars)
    if not need:
        return True
    return any(need <= set(a.vars()) for a in q.atoms)


def is_acyclic(q: ConjunctiveQuery) -> bool:
    """Alpha-acyclicity of the atom hypergraph, by GYO reduction.

    Repeatedly drop vertices occurring in a single edge and edges contained in
    other edges; acyclic iff everything reduces away.
    """
    edges: list[set[str]] = [set(a.vars()) for a in q.atoms]
    edges = [e for e in edges if e]
    changed = True
    while changed:
        changed = False
        counts: dict[str, int] = {}
        for e in edges:
            for v in e:
                counts[v] = counts.get(v, 0) + 1
        for e in edges:
            lone = {v for v in e if counts[v] == 1}
            if lone:
                e -= lone
                changed = True
        keep = []
        for i, e in enumerate(edges):
            if not e:
                changed = True
                continue
            if any(e < f or (e == f and j < i)
                   for j, f in enumerate(edges) if j != i):
                changed = True
                continue
            keep.append(e)
        edges = keep
    return not edges


def canonical_cq(q: ConjunctiveQuery) -> ConjunctiveQuery:
    """Canonical variant renaming: free variables fixed, existentials renamed v0,v1,...
    minimizing the serialized form over all assignments."""
    ex = sorted(set(q.exist_vars) & {v for a in q.atoms for v in a.vars()})
    if len(ex) > 7:
        # too many to canonicalize exactly; fall back to first-occurrence naming
        order = []
        for a in sorted(q.atoms, key=str):
            for v in a.vars():
                if v in ex and v not in order:
                    order.append(v)
        ren = {v: f"v{i}" for i, v in enumerate(order)}
        return _rename(q, ren)
    best = None
    for perm in itertools.permutations(range(len(ex))):
        ren = {v: f"v{perm[i]}" for i, v in enumerate(ex)}
        cand = _rename(q, ren)
        key = str(cand)
        if best is None or key < best[0]:
            best = (key, cand)
    return best[1] if best else cq(q.free_vars, q.atoms)


def _rename(q: ConjunctiveQuery, ren: dict[str, str]) -> ConjunctiveQuery:
    atoms = tuple(Atom(a.rel, tuple(t if isinstance(t, Cst) else Var(ren.get(t.name, t.name))
                                    for t in a.args))
                  for a in q.atoms)
    return cq(q.free_vars, sorted(set(atoms), key=str))


def _enumerate_cqs(sig: Signature, free: tuple[str, ...], max_atoms: int,
                   max_vars: int) -> Iterator[ConjunctiveQuery]:
    """All canonical CQs over sig with the given free variables, within bounds."""
    pool_vars = list(free) + [f"v{i}" for i in range(max_vars - len(free))]
    atoms = []
    for rel in sig.relations():
        ar = sig.arities[rel]
        for combo in itertools.product(pool_vars, repeat=ar):
            atoms.append(Atom(rel, tuple(Var(v) for v in combo)))
    atoms.sort(key=str)
    seen = set()
    for n in range(1, max_atoms + 1):
        for combo in itertools.combinations(atoms, n):
            used = {v for a in combo for v in a.vars()}
            if len(used) > max_vars or not set(free) <= used:
                continue
            try:
                cand = canonical_cq(cq(free, combo))
            except ValueError:
                continue
            key = str(cand)
            if key in seen:
                continue
            seen.add(key)
            yield cand


def treeify(q: ConjunctiveQuery, max_atoms: int, max_vars: int,
            sig: Optional[Signature] = None) -> list[ConjunctiveQuery]:
    """The most general acyclic answer-guarded queries entailing q, within bounds.

    Searches every canonical CQ over the signature with at most max_atoms atoms and
    max_vars variables; keeps those that are acyclic, answer-guarded and contained in q;
    prunes members strictly contained in another member; ties between equivalent members
    go to the lexicographically least serialization.
    """
    if max_atoms < 1 or max_vars < 1:
        raise ValueError("treeify bounds must be positive")
    if not is_answer_guarded(q):
        raise ValueError("treeify requires an answer-guarded query")
    sig = query_signature(q, sig)
    if len(q.free_vars) > max_vars:
        return []
    found: list[ConjunctiveQuery] = []
    for cand in _enumerate_cqs(sig, q.free_vars, max_atoms, max_vars):
        if not is_answer_guarded(cand) or not is_acyclic(cand):
            continue
        if cq_contained(cand, q):
            found.append(core_cq(cand))
    # keep the weakest members: drop t if strictly contained in some other member
    out: list[ConjunctiveQuery] = []
    for i, t in enumerate(found):
        keep = True
        for j, u in enumerate(found):
            if i == j:
                continue
            if cq_contained(t, u):
                if not cq_contained(u, t):
                    keep = False
                    break
                # equivalent: lexicographic tie-break
                ct, cu = str(canonical_cq(t)), str(canonical_cq(u))
                if cu < ct or (cu == ct and j < i):
                    keep = False
                    break
        if keep:
            out.append(canonical_cq(t))
    uniq = sorted(set(out), key=str)
    return uniq
