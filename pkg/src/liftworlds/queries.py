"""Queries over a weighted model set: answer distributions and selections.

Running one query against every expanded model yields a set of answers that
inherits the model weights. On top of that sit the selection queries:
top-k by event probability, top-k by model probability, the skyline (the
Pareto frontier over both), and trend classification over ascending domain
sizes. Weights are reported raw; when filtering dropped mass upstream, the
per-answer model probabilities simply do not sum to 1.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from .engine import MarginalDistribution, QuerySpec, lifted_query
from .errors import InferenceError, ValidationError
from .model import GroundAtom
from .universe import Provenance, WeightedModel


@dataclass(frozen=True)
class EventProbe:
    """One target atom taking one range value, e.g. Sick(x1) = true."""

    atom: GroundAtom
    value: str


@dataclass(frozen=True)
class AnswerEntry:
    provenance: Provenance
    model_prob: float
    answer: MarginalDistribution


@dataclass(frozen=True)
class SkippedModel:
    provenance: Provenance
    reason: str


@dataclass(frozen=True)
class AnswerSet:
    """Per-model answers in expansion order, plus the models that could not answer."""

    query: QuerySpec
    entries: tuple[AnswerEntry, ...]
    skipped: tuple[SkippedModel, ...] = ()

    @property
    def retained_mass(self) -> float:
        return sum(e.model_prob for e in self.entries)


@dataclass(frozen=True)
class Selection:
    """Entries picked by a top-k query; ``clipped`` means k exceeded the set."""

    entries: tuple[AnswerEntry, ...]
    clipped: bool = False


@dataclass(frozen=True)
class TrendReport:
    direction: str  # increasing | decreasing | constant | non-monotone | insufficient
    max_adjacent_delta: float
    entries: int


def query_all(models: Sequence[WeightedModel], q: QuerySpec) -> AnswerSet:
    """Answer ``q`` on every model that contains all its atoms.

    Degenerate models and models missing an atom (a constant absent from a
    small universe, say) are skipped and reported. Raises when no model at
    all can answer.
    """
    entries: list[AnswerEntry] = []
    skipped: list[SkippedModel] = []
    atoms = tuple(q.targets) + q.evidence.atoms()
    for wm in models:
        if wm.degenerate or wm.model is None:
            skipped.append(SkippedModel(wm.provenance, "degenerate world"))
            continue
        missing = [a for a in atoms if not wm.model.contains_atom(a)]
        if missing:
            skipped.append(SkippedModel(wm.provenance, f"atom {missing[0]} not in model"))
            continue
        entries.append(AnswerEntry(wm.provenance, wm.prob, lifted_query(wm.model, q)))
    if models and not entries:
        raise InferenceError("no model can answer the query: " + skipped[0].reason)
    return AnswerSet(q, tuple(entries), tuple(skipped))


def event_probability(answer: MarginalDistribution, e: EventProbe) -> float:
    return answer.event_prob(e.atom, e.value)


def _probe_values(a: AnswerSet, e: EventProbe) -> list[float]:
    return [event_probability(entry.answer, e) for entry in a.entries]


def top_k_query_prob(a: AnswerSet, e: EventProbe, k: int) -> Selection:
    """The k entries with the highest event probability, descending.

    Ties go to the higher model probability, then to expansion order. Asking
    for more entries than exist returns them all, flagged.
    """
    if k < 1:
        raise ValidationError("k must be at least 1")
    probes = _probe_values(a, e)
    order = sorted(
        range(len(a.entries)),
        key=lambda i: (-probes[i], -a.entries[i].model_prob, i),
    )
    picked = tuple(a.entries[i] for i in order[:k])
    return Selection(picked, clipped=k > len(a.entries))


def top_k_model_prob(a: AnswerSet, k: int) -> Selection:
    """The k most probable models' entries, descending by model probability."""
    if k < 1:
        raise ValidationError("k must be at least 1")
    order = sorted(range(len(a.entries)), key=lambda i: (-a.entries[i].model_prob, i))
    picked = tuple(a.entries[i] for i in order[:k])
    return Selection(picked, clipped=k > len(a.entries))


def skyline(a: AnswerSet, e: EventProbe) -> tuple[AnswerEntry, ...]:
    """The Pareto frontier maximizing (model probability, event probability).

    An entry is kept iff no other entry is at least as good in both
    coordinates and strictly better in one. Exact duplicates of a frontier
    point are all kept. Output is ordered by model probability descending.
    """
    probes = _probe_values(a, e)
    points = [(a.entries[i].model_prob, probes[i], i) for i in range(len(a.entries))]
    points.sort(key=lambda t: (-t[0], -t[1], t[2]))
    kept: list[tuple[float, float, int]] = []
    best_p = None
    for m, p, i in points:
        if kept and (m, p) == (kept[-1][0], kept[-1][1]):
            kept.append((m, p, i))  # exact duplicate of a frontier point
        elif best_p is None or p > best_p:
            kept.append((m, p, i))
            best_p = p
    return tuple(a.entries[i] for _, _, i in kept)


def trend_report(a: AnswerSet, e: EventProbe) -> TrendReport:
    """Classify the event probability over models sorted by ascending domain size."""
    ordered = sorted(
        range(len(a.entries)), key=lambda i: (a.entries[i].provenance.domain_size, i)
    )
    probes = _probe_values(a, e)
    series = [probes[i] for i in ordered]
    if len(series) < 2:
        return TrendReport("insufficient", 0.0, len(series))
    deltas = [b - x for x, b in zip(series, series[1:])]
    max_delta = max(abs(d) for d in deltas)
    if all(d == 0 for d in deltas):
        direction = "constant"
    elif all(d >= 0 for d in deltas):
        direction = "increasing"
    elif all(d <= 0 for d in deltas):
        direction = "decreasing"
    else:
        direction = "non-monotone"
    return TrendReport(direction, max_delta, len(series))
