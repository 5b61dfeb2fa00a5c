"""Value types and grounding machinery for parameterised factor models.

A parfactor packages a dense potential table over parameterised random
variables (PRVs) with a constraint listing, extensionally, the logvar
bindings the table applies to. A template model is the same structure with
every constraint left empty; a parameterised model has every constraint
filled in, so it can be grounded into ordinary propositional factors.

Table layout is fixed once and for all: the flat value array is row-major
over the argument ranges with the *last* argument varying fastest, i.e.
``values.reshape(shape)`` indexes as ``[i_arg0, ..., i_argN]``. File formats
and every operation in this package rely on that order.

All types are immutable after construction and safe to share between
threads; the operations below are pure functions.
"""

from __future__ import annotations

import enum
import itertools
from collections import Counter
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import NotCountNormalized, ValidationError

_IDENT_HINT = "identifiers must be non-empty strings"


@dataclass(frozen=True, slots=True, eq=False)
class Logvar:
    """A logical variable ranging over a domain of constants."""

    name: str

    def __post_init__(self):
        if not self.name:
            raise ValidationError(_IDENT_HINT)

    # comparisons by name only; str caches its hash, which matters in hot loops
    def __eq__(self, other):
        return isinstance(other, Logvar) and self.name == other.name

    def __hash__(self) -> int:
        return hash(self.name)

    def __lt__(self, other: "Logvar") -> bool:
        return self.name < other.name

    def __str__(self) -> str:
        return self.name


@dataclass(frozen=True, slots=True, eq=False)
class Constant:
    """A named individual; distinct names denote distinct individuals."""

    name: str

    def __post_init__(self):
        if not self.name:
            raise ValidationError(_IDENT_HINT)

    def __eq__(self, other):
        return isinstance(other, Constant) and self.name == other.name

    def __hash__(self) -> int:
        return hash(self.name)

    def __lt__(self, other: "Constant") -> bool:
        return self.name < other.name

    def __str__(self) -> str:
        return self.name


@dataclass(frozen=True, slots=True)
class Range:
    """Ordered discrete value labels of a randvar; order fixes table indexing."""

    values: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(self.values))
        if len(self.values) < 2:
            raise ValidationError("a range needs at least two values")
        if len(set(self.values)) != len(self.values):
            raise ValidationError("range values must be unique")

    def index(self, value: str) -> int:
        try:
            return self.values.index(value)
        except ValueError:
            raise ValidationError(f"{value!r} is not in range {list(self.values)}") from None

    def __len__(self) -> int:
        return len(self.values)

    def __iter__(self):
        return iter(self.values)


BOOLEAN = Range(("false", "true"))


@dataclass(frozen=True, slots=True)
class PRV:
    """A randvar template ``name(params...)``; no params means a propositional randvar."""

    name: str
    params: tuple[Logvar, ...] = ()
    range: Range = BOOLEAN

    def __post_init__(self):
        object.__setattr__(self, "params", tuple(self.params))
        if not self.name:
            raise ValidationError(_IDENT_HINT)
        if len(set(self.params)) != len(self.params):
            raise ValidationError(f"duplicate logvar in {self.name}{self.params}")

    def __str__(self) -> str:
        if not self.params:
            return self.name
        return f"{self.name}({','.join(p.name for p in self.params)})"


@dataclass(frozen=True, slots=True, order=True)
class GroundAtom:
    """One instance of a PRV: a randvar name applied to constants."""

    name: str
    args: tuple[Constant, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "args", tuple(self.args))

    def __str__(self) -> str:
        if not self.args:
            return self.name
        return f"{self.name}({','.join(c.name for c in self.args)})"


class ConstraintKind(enum.Enum):
    EXTENSIONAL = "extensional"
    TOP = "top"
    EMPTY = "empty"


@dataclass(frozen=True, slots=True)
class Constraint:
    """A logvar sequence plus the set of constant tuples it may bind to.

    ``TOP`` stands for the full Cartesian product of the logvars' domains and
    carries no tuples until resolved against a concrete domain world;
    ``EMPTY`` carries none by definition. Tuples are stored sorted so equal
    constraints compare and hash equal regardless of construction order.
    """

    logvars: tuple[Logvar, ...]
    tuples: tuple[tuple[Constant, ...], ...] = ()
    kind: ConstraintKind = ConstraintKind.EXTENSIONAL

    def __post_init__(self):
        logvars = tuple(self.logvars)
        if len(set(logvars)) != len(logvars):
            raise ValidationError("constraint logvars must be distinct")
        # order-preserving dedup, then sort: linear when the caller pre-sorts
        unique = dict.fromkeys(tuple(t) for t in self.tuples)
        tuples = tuple(sorted(unique, key=lambda t: tuple(c.name for c in t)))
        object.__setattr__(self, "logvars", logvars)
        object.__setattr__(self, "tuples", tuples)
        if self.kind is ConstraintKind.EXTENSIONAL:
            if not tuples:
                raise ValidationError("extensional constraint needs at least one tuple")
            for t in tuples:
                if len(t) != len(logvars):
                    raise ValidationError(
                        f"tuple {tuple(c.name for c in t)} does not match logvars "
                        f"{tuple(l.name for l in logvars)}"
                    )
        elif tuples:
            raise ValidationError(f"{self.kind.value} constraint carries no tuples")

    @classmethod
    def extensional(cls, logvars: Iterable[Logvar], tuples: Iterable[Sequence[Constant]]) -> "Constraint":
        return cls(tuple(logvars), tuple(tuple(t) for t in tuples), ConstraintKind.EXTENSIONAL)

    @classmethod
    def _presorted(cls, logvars: tuple[Logvar, ...], tuples: tuple[tuple[Constant, ...], ...]) -> "Constraint":
        """Trusted fast path: caller guarantees sorted, unique, arity-true, non-empty tuples."""
        obj = object.__new__(cls)
        object.__setattr__(obj, "logvars", logvars)
        object.__setattr__(obj, "tuples", tuples)
        object.__setattr__(obj, "kind", ConstraintKind.EXTENSIONAL)
        return obj

    @classmethod
    def top(cls, logvars: Iterable[Logvar]) -> "Constraint":
        return cls(tuple(logvars), (), ConstraintKind.TOP)

    @classmethod
    def empty(cls, logvars: Iterable[Logvar]) -> "Constraint":
        return cls(tuple(logvars), (), ConstraintKind.EMPTY)

    @property
    def size(self) -> int:
        return len(self.tuples)

    def position(self, logvar: Logvar) -> int:
        try:
            return self.logvars.index(logvar)
        except ValueError:
            raise ValidationError(f"logvar {logvar.name} not in constraint") from None


@dataclass(frozen=True, eq=False)
class PotentialTable:
    """Dense non-negative potentials over the joint range of the argument PRVs."""

    args: tuple[PRV, ...]
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "args", tuple(self.args))
        values = np.asarray(self.values, dtype=float).reshape(-1)
        expected = int(np.prod([len(a.range) for a in self.args], dtype=int)) if self.args else 1
        if values.size != expected:
            raise ValidationError(f"table needs {expected} values, got {values.size}")
        if np.any(values < 0) or not np.all(np.isfinite(values)):
            raise ValidationError("potentials must be finite and non-negative")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(len(a.range) for a in self.args)

    def as_array(self) -> np.ndarray:
        return self.values.reshape(self.shape)

    def encode(self, assignment: Sequence[str]) -> int:
        """Flat index of one joint range-value tuple (last argument fastest)."""
        if len(assignment) != len(self.args):
            raise ValidationError("assignment length does not match arguments")
        idx = 0
        for arg, value in zip(self.args, assignment):
            idx = idx * len(arg.range) + arg.range.index(value)
        return idx

    def decode(self, index: int) -> tuple[str, ...]:
        if not 0 <= index < self.values.size:
            raise ValidationError("index out of bounds")
        out = []
        for arg in reversed(self.args):
            index, pos = divmod(index, len(arg.range))
            out.append(arg.range.values[pos])
        return tuple(reversed(out))

    def __eq__(self, other) -> bool:
        if not isinstance(other, PotentialTable):
            return NotImplemented
        return self.args == other.args and np.array_equal(self.values, other.values)


def _arg_logvars(args: Iterable[PRV]) -> tuple[Logvar, ...]:
    seen: dict[Logvar, None] = {}
    for arg in args:
        for lv in arg.params:
            seen.setdefault(lv)
    return tuple(seen)


@dataclass(frozen=True, eq=False)
class Parfactor:
    """A potential table restricted to the groundings a constraint permits."""

    table: PotentialTable
    constraint: Constraint

    def __post_init__(self):
        need = set(_arg_logvars(self.table.args))
        have = set(self.constraint.logvars)
        if need != have:
            raise ValidationError(
                f"constraint logvars {sorted(l.name for l in have)} must cover exactly "
                f"the argument logvars {sorted(l.name for l in need)}"
            )

    @property
    def args(self) -> tuple[PRV, ...]:
        return self.table.args

    @property
    def logvars(self) -> tuple[Logvar, ...]:
        return self.constraint.logvars


@dataclass(frozen=True, eq=False)
class GroundFactor:
    """One grounding of a parfactor; the table object is shared, not copied."""

    atoms: tuple[GroundAtom, ...]
    table: PotentialTable


def _check_signatures(parfactors: Sequence[Parfactor]) -> dict[str, tuple[int, Range]]:
    sigs: dict[str, tuple[int, Range]] = {}
    for p in parfactors:
        for arg in p.table.args:
            sig = (len(arg.params), arg.range)
            known = sigs.setdefault(arg.name, sig)
            if known != sig:
                raise ValidationError(f"randvar {arg.name} used with inconsistent arity or range")
    return sigs


@dataclass(frozen=True)
class TemplateModel:
    """Parfactors with empty constraints: structure and local potentials, no universe.

    Each parfactor carries a name so constraint programs can address it;
    names default to ``g0, g1, ...`` in declaration order.
    """

    parfactors: tuple[Parfactor, ...]
    names: tuple[str, ...] = ()

    def __post_init__(self):
        parfactors = tuple(self.parfactors)
        object.__setattr__(self, "parfactors", parfactors)
        names = tuple(self.names) or tuple(f"g{i}" for i in range(len(parfactors)))
        object.__setattr__(self, "names", names)
        if len(names) != len(parfactors):
            raise ValidationError("one name per parfactor required")
        if len(set(names)) != len(names):
            raise ValidationError("parfactor names must be unique")
        for name, p in zip(names, parfactors):
            if p.constraint.kind is not ConstraintKind.EMPTY:
                raise ValidationError(f"template parfactor {name} must have an empty constraint")
        _check_signatures(parfactors)

    @cached_property
    def logvars(self) -> tuple[Logvar, ...]:
        seen: dict[Logvar, None] = {}
        for p in self.parfactors:
            for lv in p.constraint.logvars:
                seen.setdefault(lv)
        return tuple(seen)

    @cached_property
    def signatures(self) -> dict[str, tuple[int, Range]]:
        return _check_signatures(self.parfactors)


@dataclass(frozen=True)
class ParameterisedModel:
    """Parfactors whose constraints are filled in; the groundable form of a model."""

    parfactors: tuple[Parfactor, ...]

    def __post_init__(self):
        parfactors = tuple(self.parfactors)
        object.__setattr__(self, "parfactors", parfactors)
        for p in parfactors:
            if p.constraint.kind is ConstraintKind.EMPTY:
                raise ValidationError("parameterised model must not contain empty constraints")
        _check_signatures(parfactors)

    @cached_property
    def signatures(self) -> dict[str, tuple[int, Range]]:
        return _check_signatures(self.parfactors)

    def ground(self) -> tuple[GroundFactor, ...]:
        out: list[GroundFactor] = []
        for p in self.parfactors:
            out.extend(ground(p))
        return tuple(out)

    def ground_size(self) -> int:
        """Number of ground factors the model expands to."""
        for p in self.parfactors:
            if p.constraint.kind is not ConstraintKind.EXTENSIONAL:
                raise ValidationError("constraint not grounded")
        return sum(p.constraint.size for p in self.parfactors)

    def contains_atom(self, atom: GroundAtom) -> bool:
        for p in self.parfactors:
            if p.constraint.kind is not ConstraintKind.EXTENSIONAL:
                raise ValidationError("constraint not grounded")
            for arg in p.table.args:
                if arg.name != atom.name or len(arg.params) != len(atom.args):
                    continue
                if not arg.params:
                    return True
                pos = [p.constraint.position(lv) for lv in arg.params]
                if any(tuple(t[i] for i in pos) == atom.args for t in p.constraint.tuples):
                    return True
        return False

    def constants(self) -> tuple[Constant, ...]:
        seen: set[Constant] = set()
        for p in self.parfactors:
            for t in p.constraint.tuples:
                seen.update(t)
        return tuple(sorted(seen))


def ground(p: Parfactor) -> tuple[GroundFactor, ...]:
    """Expand a parfactor into one ground factor per constraint tuple."""
    c = p.constraint
    if c.kind is not ConstraintKind.EXTENSIONAL:
        raise ValidationError("constraint not grounded")
    pos = {lv: i for i, lv in enumerate(c.logvars)}
    out = []
    for t in c.tuples:
        atoms = tuple(
            GroundAtom(arg.name, tuple(t[pos[lv]] for lv in arg.params)) for arg in p.table.args
        )
        out.append(GroundFactor(atoms, p.table))
    return tuple(out)


def project(c: Constraint, keep: Sequence[Logvar]) -> Constraint:
    """Restrict the tuple set to ``keep`` (order as given), dropping duplicates."""
    if c.kind is not ConstraintKind.EXTENSIONAL:
        raise ValidationError("can only project an extensional constraint")
    keep = tuple(keep)
    if len(set(keep)) != len(keep):
        raise ValidationError("projection logvars must be distinct")
    idx = [c.position(lv) for lv in keep]
    tuples = {tuple(t[i] for i in idx) for t in c.tuples}
    return Constraint.extensional(keep, tuples)


def conditional_count(c: Constraint, eliminate: Iterable[Logvar]) -> int:
    """How many tuples each kept tuple extends to when ``eliminate`` is dropped.

    This is the count-normalization check behind lifted sum-out exponents:
    the count must be the same for every kept tuple, otherwise a single
    exponent cannot stand in for the eliminated groundings.
    """
    if c.kind is not ConstraintKind.EXTENSIONAL:
        raise ValidationError("can only count an extensional constraint")
    elim = set(eliminate)
    for lv in elim:
        c.position(lv)
    keep_idx = [i for i, lv in enumerate(c.logvars) if lv not in elim]
    counts = Counter(tuple(t[i] for i in keep_idx) for t in c.tuples)
    distinct = set(counts.values())
    if len(distinct) != 1:
        raise NotCountNormalized(
            f"not count-normalized: kept tuples extend to {sorted(distinct)} groundings"
        )
    return distinct.pop()


def resolve_top(p: Parfactor, domains) -> Parfactor:
    """Replace a TOP constraint with the Cartesian product of the logvars' domains.

    ``domains`` may be a mapping ``Logvar -> constants`` or any object with a
    ``.domains`` attribute holding one (a domain world, in particular).
    """
    if p.constraint.kind is not ConstraintKind.TOP:
        raise ValidationError("constraint is not top")
    mapping: Mapping[Logvar, Sequence[Constant]] = getattr(domains, "domains", domains)
    per_logvar = []
    for lv in p.constraint.logvars:
        if lv not in mapping:
            raise ValidationError(f"missing domain for logvar {lv.name}")
        dom = tuple(mapping[lv])
        if not dom:
            raise ValidationError(f"empty domain for logvar {lv.name}")
        per_logvar.append(dom)
    tuples = itertools.product(*per_logvar)
    return Parfactor(p.table, Constraint.extensional(p.constraint.logvars, tuples))
