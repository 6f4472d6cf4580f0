from graphlib import TopologicalSorter
import math
import random
import re

import pytest
from hypothesis import given, settings, strategies as st

from abmceg.abm_spec import load_abm, parse_abm
from abmceg.ceg import build_ceg, compute_positions, export_dot, tree_paths
from abmceg.event_tree import build_tree, situation_probs
from abmceg.staging import derive_staging, saturated_staging, staging_from_partition

from _helpers import EXAMPLE, positions_oracle, random_partition, random_spec

ONE_VAR = '{"variables":[{"name":"A","outcomes":["a","b"]}],"rules":{"A":[{"if":{},"p":[0.5,0.5]}]}}'


@pytest.fixture(scope="module")
def staged():
    spec = load_abm(EXAMPLE)
    return derive_staging(spec, build_tree(spec))


def test_example_positions(staged):
    positions = compute_positions(staged)
    assert len(positions) == 8
    by_color = {}
    for p in positions:
        by_color.setdefault(staged.stages[p.stage].color, []).append(len(p.members))
    assert sorted(by_color["yellow"]) == [1, 1]
    assert sorted(by_color["green"]) == [1, 1]
    assert by_color["orange"] == [3]
    assert by_color["pink"] == [2]
    assert sorted(by_color["white"]) == [1, 1]  # root and the mid-high/employment X_M floret


def _edge_oracle(staged):
    # one edge per outcome of each position's representative floret
    classes = positions_oracle(staged)
    return sum(len(staged.tree.situations[c[0]].edges) for c in classes)


def test_example_ceg(staged):
    ceg = build_ceg(staged)
    assert ceg.n_nodes == 9
    assert len(ceg.edges) == _edge_oracle(staged) == 16
    assert sum(1 for e in ceg.edges if e[2] == ceg.sink) == 6


def test_saturated_ceg(staged):
    sat = saturated_staging(staged.tree)
    ceg = build_ceg(sat)
    assert (ceg.n_nodes, len(ceg.edges)) == (12, 22)
    assert all(len(p.members) == 1 for p in ceg.positions)


def test_one_variable_ceg():
    spec = parse_abm(ONE_VAR)
    ceg = build_ceg(derive_staging(spec, build_tree(spec)))
    assert (ceg.n_nodes, len(ceg.edges)) == (2, 2)


def test_dot_staged_colors(staged):
    dot = export_dot(staged)
    fills = set(re.findall(r'fillcolor="([^"]+)"', dot))
    assert {"yellow", "green", "orange", "pink"} <= fills
    assert fills - {"yellow", "green", "orange", "pink"} == {"white"}
    assert dot.startswith("digraph staged_tree {")


def test_dot_one_variable_tree():
    spec = parse_abm(ONE_VAR)
    dot = export_dot(build_tree(spec))
    nodes = re.findall(r"^  (n\d+) \[", dot, re.M)
    assert nodes == ["n0", "n1", "n2"]
    assert dot.count("->") == 2


def test_dot_ceg_sink(staged):
    dot = export_dot(build_ceg(staged))
    assert dot.count('label="w_inf"') == 1
    assert dot.count("->") == 16


def test_dot_deterministic_and_options(staged):
    ceg = build_ceg(staged)
    assert export_dot(ceg) == export_dot(build_ceg(staged))
    ctx = export_dot(staged, labels="contexts", palette="grey")
    assert "X_I=low" in ctx and "gray90" in ctx
    with pytest.raises(ValueError):
        export_dot(staged, labels="bogus")
    with pytest.raises(ValueError):
        export_dot(staged, palette="bogus")


def test_unroll_matches_tree(staged):
    assert sorted(build_ceg(staged).paths()) == sorted(tree_paths(staged))


def _ceg_path_mass(ceg):
    probs = situation_probs(ceg.staged.tree)
    total = []

    def walk(pos, p):
        if pos == ceg.sink:
            total.append(p)
            return
        rep = min(ceg.positions[pos].members)
        for k, (_, _, tgt) in enumerate(ceg.out_edges(pos)):
            walk(tgt, p * probs[rep][k])

    walk(ceg.root, 1.0)
    return math.fsum(total)


def test_path_probabilities_sum_to_one(staged):
    assert abs(_ceg_path_mass(build_ceg(staged)) - 1.0) < 1e-12


@settings(max_examples=80, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_positions_match_oracle(seed):
    spec = random_spec(seed)
    tree = build_tree(spec)
    rng = random.Random(seed)
    for staged in (derive_staging(spec, tree), saturated_staging(tree),
                   staging_from_partition(tree, random_partition(tree, rng))):
        positions = compute_positions(staged)
        assert sorted(sorted(p.members) for p in positions) == positions_oracle(staged)
        for p in positions:
            assert len({staged.stage_of[m] for m in p.members}) == 1
        assert [p.id for p in positions] == list(range(len(positions)))
        assert [min(p.members) for p in positions] == sorted(min(p.members) for p in positions)
        ceg = build_ceg(staged)
        assert sorted(ceg.paths()) == sorted(tree_paths(staged))
        if staged.name == "rules":
            assert abs(_ceg_path_mass(ceg) - 1.0) < 1e-12
        graph = {n: set() for n in range(ceg.n_nodes)}
        for src, _, tgt in ceg.edges:
            graph[tgt].add(src)
        order = list(TopologicalSorter(graph).static_order())  # raises CycleError on a cycle
        assert order[0] == ceg.root and order[-1] == ceg.sink
