"""Positions, chain event graphs and DOT rendering."""

from __future__ import annotations

from dataclasses import dataclass

from .event_tree import EventTree
from .staging import DEFAULT_COLOR, StagedTree, stage_colors


@dataclass(frozen=True)
class Position:
    id: int
    members: frozenset[int]
    stage: int


@dataclass(frozen=True, eq=False)
class Ceg:
    staged: StagedTree
    positions: tuple[Position, ...]
    edges: tuple[tuple[int, str, int], ...]  # (source position, outcome, target); sink = len(positions)

    @property
    def sink(self) -> int:
        return len(self.positions)

    @property
    def root(self) -> int:
        return 0

    @property
    def n_nodes(self) -> int:
        return len(self.positions) + 1

    def out_edges(self, pos: int) -> list[tuple[int, str, int]]:
        return [e for e in self.edges if e[0] == pos]

    def paths(self) -> list[tuple[tuple[str, int], ...]]:
        """Every root-to-sink path as a sequence of (outcome, stage) steps."""
        out = []

        def walk(pos, prefix):
            if pos == self.sink:
                out.append(prefix)
                return
            stage = self.positions[pos].stage
            for _, label, tgt in self.out_edges(pos):
                walk(tgt, prefix + ((label, stage),))

        walk(self.root, ())
        return out


def compute_positions(staged: StagedTree) -> list[Position]:
    tree = staged.tree
    interned: dict[tuple, int] = {}
    key = {leaf.id: -1 for leaf in tree.leaves}
    # children always carry larger ids than their parent
    for s in reversed(tree.situations):
        k = (staged.stage_of[s.id], tuple(key[c] for c in s.children))
        key[s.id] = interned.setdefault(k, len(interned))
    groups: dict[int, list[int]] = {}
    for s in tree.situations:
        groups.setdefault(key[s.id], []).append(s.id)
    ordered = sorted(groups.values(), key=min)
    return [Position(i, frozenset(m), staged.stage_of[m[0]]) for i, m in enumerate(ordered)]


def build_ceg(staged: StagedTree) -> Ceg:
    positions = compute_positions(staged)
    tree = staged.tree
    pos_of = {m: p.id for p in positions for m in p.members}
    sink = len(positions)
    edges = []
    for p in positions:
        rep = tree.situations[min(p.members)]
        for label, child in rep.edges:
            edges.append((p.id, label, sink if tree.is_leaf(child) else pos_of[child]))
    return Ceg(staged, tuple(positions), tuple(edges))


def tree_paths(staged: StagedTree) -> list[tuple[tuple[str, int], ...]]:
    """Root-to-leaf paths of a staged tree, in the same form as :meth:`Ceg.paths`."""
    tree = staged.tree
    out = []
    for leaf in tree.leaves:
        steps, node = [], tree.root
        while not tree.is_leaf(node):
            s = tree.situations[node]
            label = leaf.context[s.variable]
            steps.append((label, staged.stage_of[node]))
            node = s.children[s.outcomes.index(label)]
        out.append(tuple(steps))
    return out


def _q(text: str) -> str:
    return '"' + text.replace("\\", "\\\\").replace('"', '\\"') + '"'


def _ctx_label(ctx) -> str:
    return "\\n".join(f"{k}={v}" for k, v in ctx.items()) or "root"


def export_dot(obj, labels: str = "indices", palette: str = "figure") -> str:
    """Graphviz rendering of an EventTree, StagedTree or Ceg.

    ``labels`` is ``"indices"`` (w-numbers) or ``"contexts"``.
    """
    if labels not in ("indices", "contexts"):
        raise ValueError(f"labels must be 'indices' or 'contexts', not {labels!r}")
    if isinstance(obj, Ceg):
        return _ceg_dot(obj, labels, palette)
    if isinstance(obj, StagedTree):
        return _tree_dot(obj.tree, obj, labels, palette)
    if isinstance(obj, EventTree):
        return _tree_dot(obj, None, labels, palette)
    raise TypeError(f"cannot export {type(obj).__name__}")


def _tree_dot(tree: EventTree, staged: StagedTree | None, labels, palette) -> str:
    colors = stage_colors(staged.stages, palette) if staged else {}
    name = "staged_tree" if staged else "event_tree"
    lines = [f"digraph {name} {{", "  rankdir=LR;", "  node [shape=circle];"]
    for s in tree.situations:
        label = f"w{s.id}" if labels == "indices" else _ctx_label(s.context)
        attrs = f"label={_q(label)}"
        if staged:
            attrs += f", style=filled, fillcolor={_q(colors[staged.stage_of[s.id]])}"
        lines.append(f"  n{s.id} [{attrs}];")
    for leaf in tree.leaves:
        label = f"w{leaf.id}" if labels == "indices" else _ctx_label(leaf.context)
        lines.append(f"  n{leaf.id} [label={_q(label)}, shape=box];")
    for s in tree.situations:
        for label, child in s.edges:
            lines.append(f"  n{s.id} -> n{child} [label={_q(label)}];")
    lines.append("}")
    return "\n".join(lines) + "\n"


def _ceg_dot(ceg: Ceg, labels, palette) -> str:
    staged = ceg.staged
    colors = stage_colors(staged.stages, palette)
    lines = ["digraph ceg {", "  rankdir=LR;", "  node [shape=circle];"]
    for p in ceg.positions:
        rep = min(p.members)
        if labels == "indices":
            label = f"w{rep}"
        else:
            label = " | ".join(_ctx_label(staged.tree.situations[m].context) for m in sorted(p.members))
        lines.append(
            f"  p{p.id} [label={_q(label)}, style=filled, fillcolor={_q(colors.get(p.stage, DEFAULT_COLOR))}];"
        )
    lines.append(f"  p{ceg.sink} [label=\"w_inf\", shape=doublecircle];")
    for src, label, tgt in ceg.edges:
        lines.append(f"  p{src} -> p{tgt} [label={_q(label)}];")
    lines.append("}")
    return "\n".join(lines) + "\n"
