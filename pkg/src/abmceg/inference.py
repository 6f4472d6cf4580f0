"""Conjugate Dirichlet inference over stagings.

Priors come from phantom samples: an effective sample size ``ess`` enters
at the root and is split down every floret according to the ABM's rule
probabilities.  A stage's Dirichlet hyperparameters are the summed edge
masses of its member situations, so candidate stagings of one tree share
the same underlying phantom population and their scores are comparable.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy import stats

from .event_tree import EventTree, situation_probs
from .staging import StagedTree

PROB_TOL = 1e-9


class DataError(ValueError):
    """A trajectory row that is not a root-to-leaf path of the event tree."""


@dataclass(frozen=True)
class PriorConfig:
    ess: float = 1.0
    # optional per-situation mean vectors; default is the matched rule clause
    means: Mapping[int, Sequence[float]] | None = None
    # optional arrival-mass overrides at individual situations
    floret_ess: Mapping[int, float] | None = None

    def __post_init__(self):
        if not (self.ess > 0 and math.isfinite(self.ess)):
            raise ValueError(f"ess must be positive, got {self.ess!r}")
        for sid, vec in (self.means or {}).items():
            if abs(math.fsum(vec) - 1.0) > PROB_TOL:
                raise ValueError(f"mean vector for situation {sid} does not sum to 1")
        for sid, m in (self.floret_ess or {}).items():
            if not m > 0:
                raise ValueError(f"floret ess for situation {sid} must be positive")


@dataclass
class StagePosterior:
    stage: int
    alpha_prior: np.ndarray
    counts: np.ndarray
    alpha_post: np.ndarray = field(init=False)

    def __post_init__(self):
        self.alpha_prior = np.asarray(self.alpha_prior, dtype=float)
        self.counts = np.asarray(self.counts, dtype=np.int64)
        if self.alpha_prior.shape != self.counts.shape:
            raise ValueError(f"stage {self.stage}: prior and counts differ in length")
        self.alpha_post = self.alpha_prior + self.counts

    @property
    def prior_mean(self) -> np.ndarray:
        return self.alpha_prior / self.alpha_prior.sum()

    @property
    def mean(self) -> np.ndarray:
        return self.alpha_post / self.alpha_post.sum()

    def credible_intervals(self, level: float = 0.9) -> np.ndarray:
        """Equal-tailed intervals from each outcome's marginal Beta posterior."""
        a = self.alpha_post
        b = a.sum() - a
        tail = (1.0 - level) / 2.0
        lo = stats.beta.ppf(tail, a, b)
        hi = stats.beta.ppf(1.0 - tail, a, b)
        return np.column_stack([lo, hi])


@dataclass(frozen=True)
class TrajectoryDataset:
    rows: tuple[Mapping[str, str], ...]
    provenance: str = "<memory>"

    @property
    def n(self) -> int:
        return len(self.rows)

    def __add__(self, other: "TrajectoryDataset") -> "TrajectoryDataset":
        return TrajectoryDataset(self.rows + other.rows, f"{self.provenance}+{other.provenance}")


@dataclass(frozen=True)
class ModelScore:
    staging: str
    n_stages: int
    log_marginal_likelihood: float
    per_stage_terms: tuple[float, ...]


@dataclass(frozen=True)
class Comparison:
    ranking: tuple[ModelScore, ...]

    def log_bayes_factor(self, a: str, b: str) -> float:
        scores = {m.staging: m.log_marginal_likelihood for m in self.ranking}
        return scores[a] - scores[b]

    def pairwise(self) -> list[tuple[str, str, float]]:
        r = self.ranking
        return [
            (r[i].staging, r[j].staging, r[i].log_marginal_likelihood - r[j].log_marginal_likelihood)
            for i in range(len(r)) for j in range(i + 1, len(r))
        ]

    @property
    def best(self) -> ModelScore:
        return self.ranking[0]


# -- priors ---------------------------------------------------------------

def phantom_masses(tree: EventTree, config: PriorConfig) -> dict[int, tuple[float, np.ndarray]]:
    """Arrival mass and outgoing edge masses of every situation."""
    means = config.means
    if means is None:
        means = situation_probs(tree)
    elif set(means) != {s.id for s in tree.situations}:
        raise ValueError("mean vectors do not match the tree's situations")
    overrides = config.floret_ess or {}
    bad = set(overrides) - {s.id for s in tree.situations}
    if bad:
        raise ValueError(f"floret_ess names unknown situations {sorted(bad)}")

    arrival = {tree.root: float(config.ess)}
    out = {}
    for s in tree.situations:  # parents precede children
        mass = overrides.get(s.id, arrival[s.id])
        p = np.asarray(means[s.id], dtype=float)
        if p.shape != (len(s.edges),):
            raise ValueError(f"mean vector for situation {s.id} has the wrong length")
        if np.any(p <= 0):
            k = int(np.argmin(p))
            raise ValueError(
                f"situation {s.id} ({s.variable}) has zero probability for outcome "
                f"{s.outcomes[k]!r}; a Dirichlet needs positive parameters, floor it "
                f"at a small value such as 1e-3 in the ABM"
            )
        edge = mass * p
        out[s.id] = (mass, edge)
        for k, child in enumerate(s.children):
            if not tree.is_leaf(child):
                arrival[child] = float(edge[k])
    return out


def allocate_priors(staged: StagedTree, config: PriorConfig) -> list[StagePosterior]:
    masses = phantom_masses(staged.tree, config)
    priors = []
    for st in staged.stages:
        alpha = sum(masses[m][1] for m in sorted(st.members))
        priors.append(StagePosterior(st.id, alpha, np.zeros(len(alpha), dtype=np.int64)))
    return priors


# -- data -----------------------------------------------------------------

def trace_row(tree: EventTree, row: Mapping[str, str], rownum: int = 0) -> list[tuple[int, int]]:
    """(situation, outcome index) pairs along the row's root-to-leaf path."""
    spec = tree.spec
    unknown = set(row) - set(spec.names)
    if unknown:
        raise DataError(f"row {rownum}: unknown variable(s) {sorted(unknown)}")
    steps = []
    used = set()
    node = tree.root
    while not tree.is_leaf(node):
        s = tree.situations[node]
        value = row.get(s.variable)
        if value is None:
            raise DataError(f"row {rownum}: missing value for applicable variable {s.variable}")
        if value not in s.outcomes:
            raise DataError(f"row {rownum}: {value!r} is not an outcome of {s.variable}")
        k = s.outcomes.index(value)
        steps.append((node, k))
        used.add(s.variable)
        node = s.children[k]
    for var in set(row) - used:
        cond = spec.variable(var).applicable_if
        raise DataError(
            f"row {rownum}: {var}={row[var]} given but {var} is not applicable on this path "
            f"(it requires {cond or 'an earlier branch'})"
        )
    return steps


def count_stage_outcomes(staged: StagedTree, data: TrajectoryDataset) -> list[np.ndarray]:
    tree = staged.tree
    counts = [np.zeros(len(tree.situations[min(st.members)].edges), dtype=np.int64) for st in staged.stages]
    for i, row in enumerate(data.rows, start=1):
        for sid, k in trace_row(tree, row, i):
            counts[staged.stage_of[sid]][k] += 1
    return counts


def read_trajectories(source, spec, provenance: str | None = None) -> TrajectoryDataset:
    """Read the trajectory CSV; ``source`` is a path or a text stream."""
    if isinstance(source, (str, bytes)) or hasattr(source, "__fspath__"):
        with open(source, encoding="utf-8", newline="") as fh:
            return read_trajectories(fh, spec, provenance or str(source))
    lines = [ln for ln in source if not ln.startswith("#")]
    reader = csv.reader(lines)
    header = next(reader, None)
    if header is None:
        raise DataError("empty trajectory file: header row missing")
    if tuple(header) != spec.names:
        raise DataError(f"header {header} does not match declared variables {list(spec.names)}")
    rows = []
    for i, rec in enumerate(reader, start=1):
        if not rec:
            continue
        if len(rec) != len(header):
            raise DataError(f"row {i}: expected {len(header)} fields, got {len(rec)}")
        rows.append({k: v for k, v in zip(header, rec) if v != ""})
    return TrajectoryDataset(tuple(rows), provenance or "<stream>")


def format_trajectories(data: TrajectoryDataset, spec, comment: str | None = None) -> str:
    buf = io.StringIO()
    if comment:
        buf.write(f"# {comment}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(spec.names)
    for row in data.rows:
        w.writerow([row.get(n, "") for n in spec.names])
    return buf.getvalue()


# -- conjugate updating and scoring ----------------------------------------

def _check_pairs(priors, counts):
    if len(priors) != len(counts):
        raise ValueError(f"{len(priors)} priors but {len(counts)} count vectors")
    for p, c in zip(priors, counts):
        if len(p.alpha_prior) != len(c):
            raise ValueError(f"stage {p.stage}: prior has {len(p.alpha_prior)} outcomes, counts {len(c)}")


def posterior_update(priors: Sequence[StagePosterior], counts) -> list[StagePosterior]:
    _check_pairs(priors, counts)
    return [StagePosterior(p.stage, p.alpha_prior, p.counts + np.asarray(c)) for p, c in zip(priors, counts)]


def stage_log_ml(alpha, counts) -> float:
    """Dirichlet-multinomial log evidence of one stage's ordered observations."""
    alpha = [float(a) for a in alpha]
    counts = [int(c) for c in counts]
    if any(a <= 0 for a in alpha):
        raise ValueError(f"Dirichlet parameters must be positive, got {alpha}")
    n = sum(counts)
    if n == 0:
        return 0.0
    a_sum = math.fsum(alpha)
    term = math.lgamma(a_sum) - math.lgamma(a_sum + n)
    for a, c in zip(alpha, counts):
        if c:
            term += math.lgamma(a + c) - math.lgamma(a)
    return term


def log_marginal_likelihood(priors: Sequence[StagePosterior], counts, staging: str = "") -> ModelScore:
    _check_pairs(priors, counts)
    terms = tuple(stage_log_ml(p.alpha_prior, c) for p, c in zip(priors, counts))
    return ModelScore(staging, len(priors), math.fsum(terms), terms)


def score_staging(staged: StagedTree, data: TrajectoryDataset, config: PriorConfig) -> ModelScore:
    priors = allocate_priors(staged, config)
    return log_marginal_likelihood(priors, count_stage_outcomes(staged, data), staged.name)


def compare_models(candidates: Sequence[StagedTree], data: TrajectoryDataset, config: PriorConfig) -> Comparison:
    if not candidates:
        raise ValueError("no candidate stagings")
    sig = candidates[0].tree.signature()
    for c in candidates[1:]:
        if c.tree is not candidates[0].tree and c.tree.signature() != sig:
            raise ValueError(f"candidate {c.name} is built on a different event tree")
    scores = [score_staging(c, data, config) for c in candidates]
    ranking = sorted(scores, key=lambda m: (-m.log_marginal_likelihood, m.n_stages, m.staging))
    return Comparison(tuple(ranking))


def score_table(comp: Comparison) -> str:
    best = comp.best.log_marginal_likelihood
    lines = ["staging\tstages\tlog_ml\tdelta_vs_best"]
    for m in comp.ranking:
        lines.append(f"{m.staging}\t{m.n_stages}\t{m.log_marginal_likelihood:.6f}\t{m.log_marginal_likelihood - best:.6f}")
    return "\n".join(lines) + "\n"
