import io
import json
import math
import random

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from abmceg.abm_spec import load_abm, parse_abm
from abmceg.event_tree import build_tree
from abmceg.inference import (
    DataError, PriorConfig, StagePosterior, TrajectoryDataset, allocate_priors, compare_models,
    count_stage_outcomes, format_trajectories, log_marginal_likelihood, phantom_masses,
    posterior_update, read_trajectories, score_table, stage_log_ml,
)
from abmceg.staging import derive_staging, enumerate_coarsenings, saturated_staging

from _helpers import EXAMPLE, example_doc, random_spec, sequential_log_ml


@pytest.fixture(scope="module")
def example():
    spec = load_abm(EXAMPLE)
    tree = build_tree(spec)
    return spec, tree, derive_staging(spec, tree)


def _uniform_example():
    doc = example_doc()
    for clauses in doc["rules"].values():
        for c in clauses:
            c["p"] = [0.5, 0.5]
    spec = parse_abm(json.dumps(doc))
    return derive_staging(spec, build_tree(spec))


def _by_color(staged, values, color):
    (i,) = [st.id for st in staged.stages if st.color == color]
    return values[i]


def test_allocate_uniform_example():
    staged = _uniform_example()
    priors = allocate_priors(staged, PriorConfig(ess=4))
    assert list(priors[0].alpha_prior) == [2, 2]
    assert list(_by_color(staged, priors, "yellow").alpha_prior) == [2, 2]
    assert _by_color(staged, priors, "orange").alpha_prior.sum() == pytest.approx(4 * (0.25 + 0.125 + 0.125))
    assert all(p.counts.sum() == 0 for p in priors)


def test_allocate_one_variable():
    spec = parse_abm('{"variables":[{"name":"A","outcomes":["a","b"]}],"rules":{"A":[{"if":{},"p":[0.5,0.5]}]}}')
    (p,) = allocate_priors(derive_staging(spec, build_tree(spec)), PriorConfig(ess=2))
    assert list(p.alpha_prior) == [1, 1]


@pytest.mark.parametrize("ess", [0, -1, float("nan")])
def test_bad_ess(ess):
    with pytest.raises(ValueError):
        PriorConfig(ess=ess)


def test_zero_probability_rejected():
    doc = example_doc()
    doc["rules"]["X_O"][0]["p"] = [0.0, 1.0]
    spec = parse_abm(json.dumps(doc))
    with pytest.raises(ValueError, match="floor"):
        allocate_priors(derive_staging(spec, build_tree(spec)), PriorConfig())


def test_means_must_match_tree(example):
    _, _, staged = example
    with pytest.raises(ValueError, match="do not match"):
        allocate_priors(staged, PriorConfig(means={0: [0.5, 0.5]}))


def test_floret_ess_override(example):
    _, tree, staged = example
    masses = phantom_masses(tree, PriorConfig(ess=1.0, floret_ess={1: 10.0}))
    assert masses[1][0] == 10.0
    assert masses[3][0] == pytest.approx(10.0 * 0.3)


def test_count_one_row(example):
    _, _, staged = example
    data = TrajectoryDataset(({"X_I": "low", "X_O": "no", "X_M": "yes"},))
    counts = [list(c) for c in count_stage_outcomes(staged, data)]
    colors = [st.color for st in staged.stages]
    got = dict(zip([f"{c}{i}" for i, c in enumerate(colors)], counts))
    assert got == {"white0": [1, 0], "yellow1": [0, 1], "green2": [0, 0],
                   "orange3": [1, 0], "white4": [0, 0], "pink5": [0, 0]}


def test_count_empty(example):
    _, _, staged = example
    assert all(c.sum() == 0 for c in count_stage_outcomes(staged, TrajectoryDataset(())))


@pytest.mark.parametrize("row, match", [
    ({"X_I": "low", "X_O": "no", "X_E": "yes", "X_M": "no"}, r"X_E=yes given .* requires X_O=yes"),
    ({"X_I": "low", "X_O": "yes", "X_M": "no"}, "missing value for applicable variable X_E"),
    ({"X_I": "low", "X_O": "maybe", "X_M": "no"}, "not an outcome"),
    ({"X_I": "low", "X_O": "no", "X_M": "no", "X_Z": "1"}, "unknown variable"),
])
def test_count_bad_rows(example, row, match):
    _, _, staged = example
    good = {"X_I": "low", "X_O": "no", "X_M": "yes"}
    with pytest.raises(DataError, match=match) as exc:
        count_stage_outcomes(staged, TrajectoryDataset((good, row)))
    assert "row 2" in str(exc.value)


@pytest.mark.parametrize("alpha, counts, post, mean", [
    ((1, 1), (3, 1), (4, 2), (2 / 3, 1 / 3)),
    ((1, 1), (0, 0), (1, 1), (0.5, 0.5)),
    ((2, 2), (0, 10), (2, 12), (1 / 7, 6 / 7)),
])
def test_posterior_update(alpha, counts, post, mean):
    (p,) = posterior_update([StagePosterior(0, alpha, [0, 0])], [np.array(counts)])
    assert list(p.alpha_post) == list(post)
    assert p.mean == pytest.approx(mean, abs=1e-15)


def test_posterior_update_dimension_mismatch():
    with pytest.raises(ValueError):
        posterior_update([StagePosterior(0, (1, 1), [0, 0])], [np.array([1, 2, 3])])
    with pytest.raises(ValueError):
        posterior_update([StagePosterior(0, (1, 1), [0, 0])], [])


@pytest.mark.parametrize("counts, seq", [((1, 1), [0, 1]), ((2, 0), [0, 0])])
def test_log_ml_polya(counts, seq):
    expected = sequential_log_ml((1, 1), seq)
    score = log_marginal_likelihood([StagePosterior(0, (1, 1), [0, 0])], [np.array(counts)])
    assert score.log_marginal_likelihood == pytest.approx(expected, abs=1e-12)
    assert math.isclose(expected, math.log(1 / 6) if counts == (1, 1) else math.log(1 / 3))


def test_log_ml_zero_counts(example):
    _, _, staged = example
    priors = allocate_priors(staged, PriorConfig())
    score = log_marginal_likelihood(priors, [p.counts for p in priors])
    assert score.log_marginal_likelihood == 0.0


def test_log_ml_rejects_nonpositive_alpha():
    with pytest.raises(ValueError):
        stage_log_ml([0.0, 1.0], [1, 1])


def test_compare_empty_data(example):
    _, tree, staged = example
    comp = compare_models([saturated_staging(tree), staged], TrajectoryDataset(()), PriorConfig())
    assert [m.log_marginal_likelihood for m in comp.ranking] == [0.0, 0.0]
    assert comp.best.staging == "rules"
    assert comp.log_bayes_factor("rules", "saturated") == 0.0


def test_compare_single(example):
    _, _, staged = example
    comp = compare_models([staged], TrajectoryDataset(()), PriorConfig())
    assert len(comp.ranking) == 1 and comp.pairwise() == []


def test_compare_different_trees(example):
    _, _, staged = example
    doc = example_doc()
    del doc["variables"][2]["applicable_if"]
    other = parse_abm(json.dumps(doc))
    with pytest.raises(ValueError, match="different event tree"):
        compare_models([staged, derive_staging(other, build_tree(other))], TrajectoryDataset(()), PriorConfig())


def test_score_table_format(example):
    _, tree, staged = example
    comp = compare_models([staged, saturated_staging(tree)], TrajectoryDataset(()), PriorConfig())
    lines = score_table(comp).splitlines()
    assert lines[0] == "staging\tstages\tlog_ml\tdelta_vs_best"
    assert lines[1].split("\t") == ["rules", "6", "0.000000", "0.000000"]


def test_csv_round_trip(example):
    spec, _, _ = example
    data = TrajectoryDataset((
        {"X_I": "low", "X_O": "no", "X_M": "yes"},
        {"X_I": "mid-high", "X_O": "yes", "X_E": "no", "X_M": "no"},
    ))
    text = format_trajectories(data, spec, "seed=1 generator=x")
    assert text.splitlines()[:3] == ["# seed=1 generator=x", "X_I,X_O,X_E,X_M", "low,no,,yes"]
    back = read_trajectories(io.StringIO(text), spec)
    assert back.rows == data.rows


def test_csv_bad_header(example):
    spec, _, _ = example
    with pytest.raises(DataError, match="header"):
        read_trajectories(io.StringIO("X_O,X_I,X_E,X_M\n"), spec)


def _random_rows(tree, rng, n):
    rows = []
    for _ in range(n):
        node, row = tree.root, {}
        while not tree.is_leaf(node):
            s = tree.situations[node]
            k = rng.randrange(len(s.edges))
            row[s.variable] = s.outcomes[k]
            node = s.children[k]
        rows.append(row)
    return TrajectoryDataset(tuple(rows))


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), ess=st.floats(0.1, 50))
def test_phantom_mass_conservation(seed, ess):
    spec = random_spec(seed, max_situations=30)
    tree = build_tree(spec)
    masses = phantom_masses(tree, PriorConfig(ess))
    assert masses[tree.root][0] == ess
    for s in tree.situations:
        arrival, edge = masses[s.id]
        assert abs(edge.sum() - arrival) <= 1e-12 * max(1.0, ess)
        for k, c in enumerate(s.children):
            if not tree.is_leaf(c):
                assert masses[c][0] == edge[k]
    staged = derive_staging(spec, tree)
    total = sum(p.alpha_prior.sum() for p in allocate_priors(staged, PriorConfig(ess)))
    for m in enumerate_coarsenings(saturated_staging(tree), 5):
        assert sum(p.alpha_prior.sum() for p in allocate_priors(m, PriorConfig(ess))) == pytest.approx(total, rel=1e-12)


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_conjugacy_split(seed):
    rng = random.Random(seed)
    spec = random_spec(seed, max_situations=20)
    tree = build_tree(spec)
    staged = derive_staging(spec, tree)
    data = _random_rows(tree, rng, rng.randint(0, 30))
    cut = rng.randint(0, data.n)
    d1, d2 = TrajectoryDataset(data.rows[:cut]), TrajectoryDataset(data.rows[cut:])
    priors = allocate_priors(staged, PriorConfig(1.5))
    seq = posterior_update(posterior_update(priors, count_stage_outcomes(staged, d1)),
                           count_stage_outcomes(staged, d2))
    once = posterior_update(priors, count_stage_outcomes(staged, data))
    for a, b in zip(seq, once):
        assert np.array_equal(a.alpha_post, b.alpha_post)


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_score_is_sequential_predictive(seed):
    rng = random.Random(seed)
    spec = random_spec(seed, max_situations=20)
    tree = build_tree(spec)
    staged = derive_staging(spec, tree)
    data = _random_rows(tree, rng, rng.randint(1, 6))
    priors = allocate_priors(staged, PriorConfig(2.0))
    score = log_marginal_likelihood(priors, count_stage_outcomes(staged, data))
    rows = list(data.rows)
    rng.shuffle(rows)
    # one-step-ahead predictive of each whole row given the rows before it
    alphas = [list(p.alpha_prior) for p in priors]
    logp = 0.0
    for row in rows:
        node = tree.root
        while not tree.is_leaf(node):
            s = tree.situations[node]
            k = s.outcomes.index(row[s.variable])
            a = alphas[staged.stage_of[node]]
            logp += math.log(a[k] / sum(a))
            a[k] += 1
            node = s.children[k]
    assert score.log_marginal_likelihood == pytest.approx(logp, abs=1e-9)
    assert score.log_marginal_likelihood == pytest.approx(math.fsum(score.per_stage_terms), abs=1e-12)


def test_posterior_mean_approaches_proportions():
    props = np.array([0.2, 0.5, 0.3])
    counts = np.rint(props * 10**4).astype(int)
    (p,) = posterior_update([StagePosterior(0, (0.7, 1.1, 0.2), [0, 0, 0])], [counts])
    assert np.max(np.abs(p.mean - props)) < 1e-3


def test_credible_interval_brackets_mean():
    p = StagePosterior(0, (2.0, 3.0), [10, 4])
    ci = p.credible_intervals(0.9)
    assert np.all(ci[:, 0] < p.mean) and np.all(p.mean < ci[:, 1])
    # symmetric Beta(a, a) interval is centred on 1/2
    q = StagePosterior(0, (5.0, 5.0), [0, 0])
    lo, hi = q.credible_intervals(0.9)[0]
    assert lo + hi == pytest.approx(1.0, abs=1e-12)
