"""Stagings of an event tree: rule-implied stages, coarsenings and the
context-specific independence statements they encode."""

from __future__ import annotations

import colorsys
import logging
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .abm_spec import AbmSpec, Atom, Condition, clause_for
from .event_tree import EventTree, situation_probs

log = logging.getLogger(__name__)

DEFAULT_COLOR = "white"
PALETTES = {
    "figure": ("yellow", "green", "orange", "pink", "lightblue", "plum", "khaki", "palegreen"),
    "pastel": ("#fbb4ae", "#b3cde3", "#ccebc5", "#decbe4", "#fed9a6", "#ffffcc", "#e5d8bd", "#fddaec"),
    "grey": ("gray90", "gray75", "gray60", "gray45", "gray30"),
}


@dataclass(frozen=True)
class Stage:
    id: int
    variable: str
    members: frozenset[int]
    clause: tuple[tuple[str, int], ...] = ()  # rule clauses the stage came from
    condition: Condition | None = None
    color: str = DEFAULT_COLOR

    @property
    def singleton(self) -> bool:
        return len(self.members) == 1


@dataclass(frozen=True, eq=False)
class StagedTree:
    tree: EventTree
    stages: tuple[Stage, ...]
    name: str = "rules"
    stage_of: dict[int, int] = field(init=False, repr=False)

    def __post_init__(self):
        stage_of = {}
        for st in self.stages:
            if not st.members:
                raise ValueError(f"stage {st.id} is empty")
            for m in st.members:
                if m in stage_of:
                    raise ValueError(f"situation {m} is in two stages")
                if self.tree.situations[m].variable != st.variable:
                    raise ValueError(f"situation {m} does not carry variable {st.variable}")
                stage_of[m] = st.id
        if len(stage_of) != len(self.tree.situations):
            missing = sorted(set(range(len(self.tree.situations))) - set(stage_of))
            raise ValueError(f"situations {missing} have no stage")
        object.__setattr__(self, "stage_of", stage_of)

    @property
    def spec(self) -> AbmSpec:
        return self.tree.spec

    def partition(self) -> frozenset[frozenset[int]]:
        return frozenset(st.members for st in self.stages)


@dataclass(frozen=True)
class IndependenceStatement:
    subject: str
    independent_of: tuple[str, ...]
    given: Condition

    def render(self, symbol: str = "_||_") -> str:
        s = f"{self.subject} {symbol} {', '.join(self.independent_of)}"
        if self.given.atoms:
            s += f" | {self.given}"
        return s

    def __str__(self):
        return self.render()


def overflow_color(i: int) -> str:
    h = (i * 0.618033988749895) % 1.0
    r, g, b = colorsys.hsv_to_rgb(h, 0.35, 0.95)
    return f"#{round(r * 255):02x}{round(g * 255):02x}{round(b * 255):02x}"


def stage_colors(stages: Sequence[Stage], palette: str = "figure") -> dict[int, str]:
    """Non-singleton stages get palette colours in id order; singletons stay white."""
    try:
        colors = PALETTES[palette]
    except KeyError:
        raise ValueError(f"unknown palette {palette!r}; choose from {sorted(PALETTES)}") from None
    out, k = {}, 0
    for st in sorted(stages, key=lambda s: s.id):
        if st.singleton:
            out[st.id] = DEFAULT_COLOR
        else:
            out[st.id] = colors[k] if k < len(colors) else overflow_color(k)
            k += 1
    return out


def make_staged(tree: EventTree, groups: Iterable[dict], name: str, palette="figure") -> StagedTree:
    """Number ``groups`` (dicts of Stage fields minus id/color) in order and colour them."""
    stages = [Stage(id=i, **g) for i, g in enumerate(groups)]
    colors = stage_colors(stages, palette)
    stages = tuple(
        Stage(st.id, st.variable, st.members, st.clause, st.condition, colors[st.id]) for st in stages
    )
    return StagedTree(tree, stages, name)


def derive_staging(spec: AbmSpec, tree: EventTree) -> StagedTree:
    buckets: dict[tuple[str, int], set[int]] = {}
    for s in tree.situations:
        buckets.setdefault((s.variable, clause_for(spec, s.variable, s.context)), set()).add(s.id)
    order = {v: i for i, v in enumerate(spec.names)}
    groups = []
    for (var, ci) in sorted(buckets, key=lambda k: (order[k[0]], k[1])):
        groups.append(dict(
            variable=var,
            members=frozenset(buckets[var, ci]),
            clause=((var, ci),),
            condition=spec.rules[var][ci].condition,
        ))
    staged = make_staged(tree, groups, "rules")
    for w in staging_warnings(staged):
        log.warning(w)
    return staged


def staging_warnings(staged: StagedTree) -> list[str]:
    """Distinct same-variable stages whose rule vectors coincide numerically."""
    probs = situation_probs(staged.tree)
    out = []
    by_var: dict[str, list[Stage]] = {}
    for st in staged.stages:
        by_var.setdefault(st.variable, []).append(st)
    for var, sts in by_var.items():
        for i, a in enumerate(sts):
            pa = {probs[m] for m in a.members}
            for b in sts[i + 1:]:
                if len(pa) == 1 and pa == {probs[m] for m in b.members}:
                    out.append(f"stages {a.id} and {b.id} of {var} have equal probabilities but stay distinct")
    return out


def saturated_staging(tree: EventTree) -> StagedTree:
    """Every situation in a stage of its own."""
    order = {v: i for i, v in enumerate(tree.spec.names)}
    sits = sorted(tree.situations, key=lambda s: (order[s.variable], s.id))
    groups = [
        dict(
            variable=s.variable,
            members=frozenset({s.id}),
            condition=Condition(tuple(Atom(k, v) for k, v in s.context.items())),
        )
        for s in sits
    ]
    return make_staged(tree, groups, "saturated")


def staging_from_partition(tree: EventTree, blocks: Iterable[Iterable[int]], name="custom") -> StagedTree:
    order = {v: i for i, v in enumerate(tree.spec.names)}
    blocks = [frozenset(b) for b in blocks]
    groups = []
    for b in sorted(blocks, key=lambda b: (order[tree.situations[min(b)].variable], min(b))):
        var = tree.situations[min(b)].variable
        groups.append(dict(variable=var, members=b, condition=describe_members(tree, var, b)))
    return make_staged(tree, groups, name)


def describe_members(tree: EventTree, variable: str, members) -> Condition | None:
    """Tightest single-atom-per-variable conjunction satisfied by every member.

    Returns None when that conjunction also admits situations outside
    ``members``, i.e. the set cannot be written as one rule clause.
    """
    spec = tree.spec
    idx = spec.index(variable)
    ctxs = [tree.situations[m].context for m in members]
    atoms = []
    for w in spec.variables[:idx]:
        seen = {c.get(w.name) for c in ctxs}
        if len(seen) == 1 and None not in seen:
            atoms.append(Atom(w.name, next(iter(seen))))
            continue
        missing = [o for o in w.outcomes if o not in seen]
        if len(missing) == 1 and len(seen) > 1:
            atoms.append(Atom(w.name, missing[0], negated=True))
    cond = Condition(tuple(atoms))
    matched = {s.id for s in tree.situations_of(variable) if cond.holds(s.context)}
    return cond if matched == set(members) else None


def _varying(tree: EventTree, members, name: str) -> bool:
    return len({tree.situations[m].context.get(name) for m in members}) > 1


def extract_independencies(staged: StagedTree) -> list[IndependenceStatement]:
    spec = staged.spec
    out = []
    for st in staged.stages:
        if st.singleton:
            continue
        cond = st.condition
        if cond is None:
            cond = describe_members(staged.tree, st.variable, st.members) or Condition()
        atoms = list(cond.atoms)
        for a in spec.variable(st.variable).applicable_if.atoms:
            if a.variable not in cond.variables:
                atoms.append(a)
        given = Condition(tuple(sorted(atoms, key=lambda a: spec.index(a.variable))))
        earlier = spec.names[: spec.index(st.variable)]
        indep = tuple(
            w for w in earlier
            if w not in given.variables and _varying(staged.tree, st.members, w)
        )
        if indep:
            out.append(IndependenceStatement(st.variable, indep, given))
    return out


def merge_stages(staged: StagedTree, a: int, b: int) -> StagedTree | None:
    """Merge stages ``a`` and ``b``; None if the union is not expressible as one clause."""
    sa, sb = staged.stages[a], staged.stages[b]
    if sa.variable != sb.variable:
        return None
    t = staged.tree
    if t.situations[min(sa.members)].outcomes != t.situations[min(sb.members)].outcomes:
        return None
    members = sa.members | sb.members
    cond = describe_members(t, sa.variable, members)
    if cond is None:
        return None
    lo, hi = min(a, b), max(a, b)
    groups = []
    for st in staged.stages:
        if st.id == hi:
            continue
        if st.id == lo:
            groups.append(dict(variable=st.variable, members=members,
                               clause=tuple(sorted(set(sa.clause) | set(sb.clause))), condition=cond))
        else:
            groups.append(dict(variable=st.variable, members=st.members, clause=st.clause,
                               condition=st.condition))
    return make_staged(t, groups, f"{staged.name}+{lo}:{hi}")


def enumerate_coarsenings(staged: StagedTree, max_models: int) -> list[StagedTree]:
    """Breadth-first pairwise merges of same-variable stages, starting with ``staged``.

    Only merges whose union is itself describable by a single rule clause
    are admitted, so every candidate is the staging of some alternative ABM.
    """
    if max_models < 1:
        raise ValueError("max_models must be >= 1")
    out = [staged]
    seen = {staged.partition()}
    queue = deque([staged])
    while queue and len(out) < max_models:
        cur = queue.popleft()
        n = len(cur.stages)
        for a in range(n):
            for b in range(a + 1, n):
                merged = merge_stages(cur, a, b)
                if merged is None or merged.partition() in seen:
                    continue
                seen.add(merged.partition())
                out.append(merged)
                queue.append(merged)
                if len(out) >= max_models:
                    return out
    return out


def staging_report(staged: StagedTree) -> str:
    lines = [f"staging {staged.name}: {len(staged.stages)} stages"]
    for st in staged.stages:
        lines.append(f"stage {st.id} [{st.variable}] color={st.color} members={sorted(st.members)}")
        for m in sorted(st.members):
            ctx = ", ".join(f"{k}={v}" for k, v in staged.tree.situations[m].context.items())
            lines.append(f"  w{m}: {ctx or '(root)'}")
    for stmt in extract_independencies(staged):
        lines.append(str(stmt))
    return "\n".join(lines) + "\n"
