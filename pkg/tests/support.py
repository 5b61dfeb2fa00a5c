"""Shared model builders and independent brute-force oracles for the tests.

The oracles deliberately avoid the code paths they check: joint enumeration
walks every assignment of the full joint, the datalog oracle grounds every
rule over every constant combination, and the skyline oracle is the
quadratic dominance check.
"""

from __future__ import annotations

import itertools

import numpy as np

from liftworlds import (
    Constant,
    Constraint,
    GroundAtom,
    Logvar,
    Parfactor,
    ParameterisedModel,
    PotentialTable,
    PRV,
    TemplateModel,
)

X = Logvar("X")
T = Logvar("T")
EPID = PRV("Epid")
SICK = PRV("Sick", (X,))
TRAVEL = PRV("Travel", (X,))
TREAT = PRV("Treat", (X, T))

# bundled example tables: P(Sick(x1)=true) declines as the domain grows
V0 = (3.0, 1.0)
V1 = (2.0, 1.0, 3.0, 4.0, 3.0, 4.0, 3.0, 1.0)
V2 = (1.0, 4.0, 2.0, 3.0, 2.0, 4.0, 4.0, 1.0)

EXAMPLE_PROGRAM = """
element_of_C2(X,Y1) :- linked(X,Y1,Y2).
element_of_C2(X,Y2) :- linked(X,Y1,Y2).
linked(X,Y1,Y2) :- instance_of_X(X) & pair(Y1,Y2).
0.7 pair(t1,t2).
0.2 pair(t2,t3).
0.1 pair(t1,t3).

populate instance_of_X/1 from X.

constraint g0 <- top.
constraint g1 <- instance_of_X(X).
constraint g2 <- element_of_C2(X,Y).
"""


def xs(n: int) -> list[Constant]:
    return [Constant(f"x{i + 1}") for i in range(n)]


def ts(n: int) -> list[Constant]:
    return [Constant(f"t{i + 1}") for i in range(n)]


def example_tables(rng: np.random.Generator | None = None):
    if rng is None:
        return V0, V1, V2
    return rng.uniform(0.1, 2.0, 2), rng.uniform(0.1, 2.0, 8), rng.uniform(0.1, 2.0, 8)


def epidemic_model(dx: int, dt: int, rng: np.random.Generator | None = None) -> ParameterisedModel:
    """Epid/Sick/Travel/Treat model over dx persons and dt treatments."""
    v0, v1, v2 = example_tables(rng)
    people, treatments = xs(dx), ts(dt)
    g0 = Parfactor(PotentialTable((EPID,), v0), Constraint.extensional((), [()]))
    g1 = Parfactor(
        PotentialTable((EPID, SICK, TRAVEL), v1),
        Constraint.extensional((X,), [(p,) for p in people]),
    )
    g2 = Parfactor(
        PotentialTable((EPID, SICK, TREAT), v2),
        Constraint.extensional((X, T), [(p, t) for p in people for t in treatments]),
    )
    return ParameterisedModel((g0, g1, g2))


def epidemic_template(rng: np.random.Generator | None = None) -> TemplateModel:
    v0, v1, v2 = example_tables(rng)
    g0 = Parfactor(PotentialTable((EPID,), v0), Constraint.empty(()))
    g1 = Parfactor(PotentialTable((EPID, SICK, TRAVEL), v1), Constraint.empty((X,)))
    g2 = Parfactor(PotentialTable((EPID, SICK, TREAT), v2), Constraint.empty((X, T)))
    return TemplateModel((g0, g1, g2), ("g0", "g1", "g2"))


def all_atoms(m: ParameterisedModel) -> list[GroundAtom]:
    seen: dict[GroundAtom, None] = {}
    for f in m.ground():
        for atom in f.atoms:
            seen.setdefault(atom)
    return sorted(seen)


def joint_enumeration(m: ParameterisedModel, targets, evidence=()):
    """Exact conditional marginal by summing the full joint; <= ~14 atoms only."""
    factors = m.ground()
    ranges: dict[GroundAtom, list[str]] = {}
    for f in factors:
        for atom, arg in zip(f.atoms, f.table.args):
            ranges[atom] = list(arg.range)
    atoms = sorted(ranges)
    evidence = dict(evidence)
    out = np.zeros([len(ranges[t]) for t in targets])
    for assignment in itertools.product(*[ranges[a] for a in atoms]):
        amap = dict(zip(atoms, assignment))
        if any(amap[a] != v for a, v in evidence.items()):
            continue
        weight = 1.0
        for f in factors:
            idx = tuple(
                arg.range.index(amap[atom]) for atom, arg in zip(f.atoms, f.table.args)
            )
            weight *= float(f.table.as_array()[idx])
        pos = tuple(ranges[t].index(amap[t]) for t in targets)
        out[pos] += weight
    return out.ravel() / out.sum()


def unnormalized_table(factors, keep, ranges):
    """Product of ground factors, atoms outside ``keep`` summed away."""
    mentioned = sorted({a for f in factors for a in f.atoms} | set(keep))
    out = np.zeros([len(ranges[a]) for a in keep])
    for assignment in itertools.product(*[ranges[a] for a in mentioned]):
        amap = dict(zip(mentioned, assignment))
        weight = 1.0
        for f in factors:
            idx = tuple(
                arg.range.index(amap[atom]) for atom, arg in zip(f.atoms, f.table.args)
            )
            weight *= float(f.table.as_array()[idx])
        out[tuple(ranges[a].index(amap[a]) for a in keep)] += weight
    return out


def naive_datalog(facts: set[tuple[str, tuple[str, ...]]], rules):
    """Ground-rule enumeration to fixpoint over every constant combination."""
    facts = set(facts)
    constants = sorted({c for _, terms in facts for c in terms})
    changed = True
    while changed:
        changed = False
        for rule in rules:
            variables = sorted(
                {v for atom in (rule.head, *rule.body) for v in atom.variables()}
            )
            for combo in itertools.product(constants, repeat=len(variables)):
                sub = dict(zip(variables, combo))

                def inst(atom):
                    return (atom.predicate, tuple(sub.get(t, t) for t in atom.terms))

                if all(inst(b) in facts for b in rule.body):
                    head = inst(rule.head)
                    if head not in facts:
                        facts.add(head)
                        changed = True
    return facts


def brute_force_skyline(points: np.ndarray) -> list[int]:
    """Indices on the Pareto frontier of (m, p) pairs, O(n^2) dominance check."""
    m, p = points[:, 0], points[:, 1]
    keep = []
    for i in range(len(points)):
        dominated = np.any(
            (m >= m[i]) & (p >= p[i]) & ((m > m[i]) | (p > p[i]))
        )
        if not dominated:
            keep.append(i)
    return keep
