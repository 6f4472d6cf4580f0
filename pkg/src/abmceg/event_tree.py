"""Unrolling an ABM into the event tree it implies."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

from .abm_spec import AbmSpec, clause_for


@dataclass(frozen=True)
class Situation:
    id: int
    context: Mapping[str, str]
    variable: str
    edges: tuple[tuple[str, int], ...]  # (outcome, child node id)

    @property
    def outcomes(self) -> tuple[str, ...]:
        return tuple(o for o, _ in self.edges)

    @property
    def children(self) -> tuple[int, ...]:
        return tuple(c for _, c in self.edges)


@dataclass(frozen=True)
class Leaf:
    id: int
    context: Mapping[str, str]


@dataclass(frozen=True, eq=False)
class EventTree:
    """Situations take ids ``0..S-1`` and leaves ``S..S+L-1``, each breadth first."""

    spec: AbmSpec
    situations: tuple[Situation, ...]
    leaves: tuple[Leaf, ...]
    root: int = 0

    @property
    def n_nodes(self) -> int:
        return len(self.situations) + len(self.leaves)

    @property
    def n_edges(self) -> int:
        return sum(len(s.edges) for s in self.situations)

    def is_leaf(self, node: int) -> bool:
        self._check(node)
        return node >= len(self.situations)

    def node(self, node: int) -> Situation | Leaf:
        self._check(node)
        if node < len(self.situations):
            return self.situations[node]
        return self.leaves[node - len(self.situations)]

    def _check(self, node: int):
        if not 0 <= node < self.n_nodes:
            raise IndexError(f"node id {node} out of range 0..{self.n_nodes - 1}")

    def situations_of(self, variable: str) -> list[Situation]:
        return [s for s in self.situations if s.variable == variable]

    def signature(self):
        """Hashable structural fingerprint, used to check trees are the same."""
        return tuple((tuple(s.context.items()), s.variable, s.edges) for s in self.situations)


def _next_variable(spec: AbmSpec, start: int, context) -> int | None:
    for i in range(start, len(spec.variables)):
        if spec.variables[i].applicable(context):
            return i
    return None


def build_tree(spec: AbmSpec) -> EventTree:
    # pending: (context, index of variable whose floret the node carries or None)
    level = [({}, _next_variable(spec, 0, {}))]
    sit_raw: list[tuple[dict, int, list]] = []  # context, var index, child slots
    leaf_raw: list[dict] = []
    parents: list[int] = []  # parent situation index of each level entry

    while level:
        nxt = []
        nxt_parents = []
        for pos, (ctx, vi) in enumerate(level):
            if vi is None:
                ref = ("leaf", len(leaf_raw))
                leaf_raw.append(ctx)
            else:
                ref = ("sit", len(sit_raw))
                decl = spec.variables[vi]
                slots = []
                sit_raw.append((ctx, vi, slots))
                for o in decl.outcomes:
                    child = {**ctx, decl.name: o}
                    nxt.append((child, _next_variable(spec, vi + 1, child)))
                    nxt_parents.append(ref[1])
            if parents:
                sit_raw[parents[pos]][2].append(ref)
        level, parents = nxt, nxt_parents

    n_sit = len(sit_raw)

    def node_id(ref):
        kind, i = ref
        return i if kind == "sit" else n_sit + i

    situations = []
    for i, (ctx, vi, slots) in enumerate(sit_raw):
        decl = spec.variables[vi]
        edges = tuple((o, node_id(r)) for o, r in zip(decl.outcomes, slots))
        situations.append(Situation(i, ctx, decl.name, edges))
    leaves = tuple(Leaf(n_sit + i, ctx) for i, ctx in enumerate(leaf_raw))
    return EventTree(spec, tuple(situations), leaves)


def floret(tree: EventTree, node: int) -> tuple[str, tuple[str, ...], tuple[int, ...]]:
    if tree.is_leaf(node):
        raise ValueError(f"node {node} is a leaf and has no floret")
    s = tree.situations[node]
    return s.variable, s.outcomes, s.children


def context_of(tree: EventTree, node: int) -> dict[str, str]:
    return dict(tree.node(node).context)


def path_probability(tree: EventTree, leaf: int, probs) -> float:
    """Product of floret probabilities along the root-to-``leaf`` path.

    ``probs`` maps a situation id to its transition vector.
    """
    ctx = tree.node(leaf).context
    p = 1.0
    node = tree.root
    while not tree.is_leaf(node):
        s = tree.situations[node]
        k = s.outcomes.index(ctx[s.variable])
        p *= probs[node][k]
        node = s.children[k]
    return p


def situation_probs(tree: EventTree) -> dict[int, tuple[float, ...]]:
    """Transition vector of each situation under the ABM's matched rule clause."""
    spec = tree.spec
    return {
        s.id: spec.rules[s.variable][clause_for(spec, s.variable, s.context)].probs
        for s in tree.situations
    }
