"""Command-line front end: ``abmceg <command> MODEL [options]``.

Exit codes: 0 success, 1 usage error, 2 model/data validation or I/O failure.
"""

from __future__ import annotations

import argparse
import json
import sys

from .abm_spec import AbmError, load_abm, validate_partition
from .ceg import build_ceg, export_dot
from .event_tree import build_tree
from .inference import (
    DataError, PriorConfig, allocate_priors, compare_models, count_stage_outcomes,
    format_trajectories, posterior_update, read_trajectories, score_table,
)
from .simulate import SimConfig, header_comment, simulate
from .staging import (
    PALETTES, derive_staging, enumerate_coarsenings, extract_independencies, saturated_staging,
)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _float_list(text):
    try:
        vals = [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated list of numbers: {text!r}") from None
    if not vals or any(v <= 0 for v in vals):
        raise argparse.ArgumentTypeError("ess values must be positive")
    return vals


def _positive(text):
    v = float(text)
    if not v > 0:
        raise argparse.ArgumentTypeError("must be positive")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="abmceg", description="Compile a tree-structured ABM into a chain event graph and score stagings.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def cmd(name, help):
        sp = sub.add_parser(name, help=help)
        sp.add_argument("model", help="path to an .abm.json model")
        sp.add_argument("--json", action="store_true", help="machine-readable output")
        return sp

    cmd("validate", "check that rule clauses partition every applicable context")
    for name, what in (("tree", "event tree"), ("stage", "staged tree"), ("ceg", "chain event graph")):
        sp = cmd(name, f"summarise the {what}")
        sp.add_argument("--dot", metavar="PATH", help=f"also write the {what} as DOT")
        sp.add_argument("--labels", choices=("indices", "contexts"), default="indices")
        sp.add_argument("--palette", choices=sorted(PALETTES), default="figure")

    sp = cmd("export-dot", "write a DOT rendering")
    sp.add_argument("--what", choices=("tree", "staged", "ceg"), default="ceg")
    sp.add_argument("--labels", choices=("indices", "contexts"), default="indices")
    sp.add_argument("--palette", choices=sorted(PALETTES), default="figure")
    sp.add_argument("--out", metavar="PATH", help="output file (default stdout)")

    sp = cmd("simulate", "forward-sample trajectories as CSV")
    sp.add_argument("--n", type=int, required=True)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", metavar="PATH", help="output CSV (default stdout)")

    sp = cmd("fit", "posterior stage probabilities from trajectory data")
    sp.add_argument("--data", required=True, metavar="CSV")
    sp.add_argument("--ess", type=_positive, default=1.0)
    sp.add_argument("--level", type=float, default=0.9, help="credible interval mass")

    sp = cmd("compare", "rank candidate stagings by log marginal likelihood")
    sp.add_argument("--data", required=True, metavar="CSV")
    sp.add_argument("--ess", type=_positive, default=1.0)
    sp.add_argument("--ess-grid", type=_float_list, metavar="A,B,C", help="score at several ess values")
    sp.add_argument("--coarsenings", type=int, default=1, metavar="K",
                    help="include up to K stagings from merging rule stages (K=1: rules only)")
    sp.add_argument("--no-saturated", action="store_true", help="leave out the all-singleton staging")
    return p


def _write(path, text):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def _ctx(ctx):
    return ", ".join(f"{k}={v}" for k, v in ctx.items()) or "(root)"


def _emit(args, out, payload, text):
    out.write(json.dumps(payload, indent=2, sort_keys=True) + "\n" if args.json else text)


def cmd_validate(args, out):
    spec = load_abm(args.model, check=False)
    diags = validate_partition(spec)
    text = f"{len(diags)} diagnostics\n" + "".join(f"{d}\n" for d in diags)
    payload = {"diagnostics": [
        {"kind": d.kind, "variable": d.variable, "context": dict(d.context), "clauses": list(d.clauses)}
        for d in diags
    ]}
    _emit(args, out, payload, text)
    return 0 if not diags else 2


def _pipeline(args):
    spec = load_abm(args.model)
    tree = build_tree(spec)
    return spec, tree, derive_staging(spec, tree)


def cmd_tree(args, out):
    _, tree, _ = _pipeline(args)
    summary = {"situations": len(tree.situations), "leaves": len(tree.leaves), "edges": tree.n_edges}
    if args.dot:
        _write(args.dot, export_dot(tree, args.labels, args.palette))
    payload = {**summary, "nodes": [
        {"id": s.id, "variable": s.variable, "context": s.context,
         "edges": [{"outcome": o, "child": c} for o, c in s.edges]} for s in tree.situations
    ]}
    text = " ".join(f"{k}={v}" for k, v in summary.items()) + "\n"
    for s in tree.situations:
        text += f"w{s.id} {s.variable} [{_ctx(s.context)}] -> " + ", ".join(f"{o}:w{c}" for o, c in s.edges) + "\n"
    _emit(args, out, payload, text)
    return 0


def cmd_stage(args, out):
    _, tree, staged = _pipeline(args)
    stmts = extract_independencies(staged)
    if args.dot:
        _write(args.dot, export_dot(staged, args.labels, args.palette))
    text = f"situations={len(tree.situations)} stages={len(staged.stages)}\n"
    for st in staged.stages:
        text += f"stage {st.id} {st.variable} {st.color} members=" + ",".join(f"w{m}" for m in sorted(st.members)) + "\n"
    text += "".join(f"{s}\n" for s in stmts)
    payload = {
        "situations": len(tree.situations),
        "stages": [{"id": st.id, "variable": st.variable, "color": st.color,
                    "members": sorted(st.members), "clauses": [list(c) for c in st.clause]}
                   for st in staged.stages],
        "independencies": [str(s) for s in stmts],
    }
    _emit(args, out, payload, text)
    return 0


def cmd_ceg(args, out):
    _, tree, staged = _pipeline(args)
    ceg = build_ceg(staged)
    if args.dot:
        _write(args.dot, export_dot(ceg, args.labels, args.palette))
    text = (f"situations={len(tree.situations)} stages={len(staged.stages)} "
            f"positions={len(ceg.positions)} ceg_nodes={ceg.n_nodes}\n"
            f"ceg_edges={len(ceg.edges)}\n")
    for p in ceg.positions:
        text += f"position {p.id} stage={p.stage} members=" + ",".join(f"w{m}" for m in sorted(p.members)) + "\n"
    payload = {
        "situations": len(tree.situations), "stages": len(staged.stages),
        "positions": [{"id": p.id, "stage": p.stage, "members": sorted(p.members)} for p in ceg.positions],
        "ceg_nodes": ceg.n_nodes,
        "edges": [{"source": s, "outcome": o, "target": "sink" if t == ceg.sink else t} for s, o, t in ceg.edges],
    }
    _emit(args, out, payload, text)
    return 0


def cmd_export_dot(args, out):
    _, tree, staged = _pipeline(args)
    obj = {"tree": tree, "staged": staged, "ceg": build_ceg(staged) if args.what == "ceg" else None}[args.what]
    dot = export_dot(obj, args.labels, args.palette)
    if args.out:
        _write(args.out, dot)
    else:
        out.write(dot)
    return 0


def cmd_simulate(args, out):
    spec = load_abm(args.model)
    if args.n < 0:
        raise UsageError("--n must be >= 0")
    if not 0 <= args.seed < 2**64:
        raise UsageError("--seed must be an unsigned 64-bit integer")
    data = simulate(spec, SimConfig(args.n, args.seed))
    csv_text = format_trajectories(data, spec, header_comment(args.seed))
    if args.out:
        _write(args.out, csv_text)
    else:
        out.write(csv_text)
    return 0


def cmd_fit(args, out):
    spec, tree, staged = _pipeline(args)
    data = read_trajectories(args.data, spec)
    priors = allocate_priors(staged, PriorConfig(args.ess))
    post = posterior_update(priors, count_stage_outcomes(staged, data))
    lines = ["stage\tvariable\toutcome\tcount\tprior_mean\tposterior_mean\tci_low\tci_high"]
    rows = []
    for st, sp in zip(staged.stages, post):
        outcomes = tree.situations[min(st.members)].outcomes
        ci = sp.credible_intervals(args.level)
        for k, o in enumerate(outcomes):
            rows.append({"stage": st.id, "variable": st.variable, "outcome": o, "count": int(sp.counts[k]),
                         "prior_mean": float(sp.prior_mean[k]), "posterior_mean": float(sp.mean[k]),
                         "ci_low": float(ci[k, 0]), "ci_high": float(ci[k, 1])})
            r = rows[-1]
            lines.append(f"{st.id}\t{st.variable}\t{o}\t{r['count']}\t{r['prior_mean']:.6f}\t"
                         f"{r['posterior_mean']:.6f}\t{r['ci_low']:.6f}\t{r['ci_high']:.6f}")
    payload = {"n": data.n, "ess": args.ess, "level": args.level, "stages": rows}
    _emit(args, out, payload, "\n".join(lines) + "\n")
    return 0


def cmd_compare(args, out):
    spec, tree, staged = _pipeline(args)
    if args.coarsenings < 1:
        raise UsageError("--coarsenings must be >= 1")
    data = read_trajectories(args.data, spec)
    candidates = enumerate_coarsenings(staged, args.coarsenings)
    if not args.no_saturated:
        sat = saturated_staging(tree)
        if sat.partition() not in {c.partition() for c in candidates}:
            candidates.append(sat)
    grid = args.ess_grid or [args.ess]
    text, payload = "", []
    for ess in grid:
        comp = compare_models(candidates, data, PriorConfig(ess))
        if len(grid) > 1:
            text += f"# ess={ess:g}\n"
        text += score_table(comp)
        payload.append({
            "ess": ess,
            "ranking": [{"staging": m.staging, "stages": m.n_stages, "log_ml": m.log_marginal_likelihood,
                         "delta_vs_best": m.log_marginal_likelihood - comp.best.log_marginal_likelihood}
                        for m in comp.ranking],
        })
    _emit(args, out, {"n": data.n, "results": payload}, text)
    return 0


COMMANDS = {
    "validate": cmd_validate, "tree": cmd_tree, "stage": cmd_stage, "ceg": cmd_ceg,
    "export-dot": cmd_export_dot, "simulate": cmd_simulate, "fit": cmd_fit, "compare": cmd_compare,
}


def main(argv=None, out=None, err=None) -> int:
    out = out or sys.stdout
    err = err or sys.stderr
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return COMMANDS[args.command](args, out)
    except UsageError as exc:
        parser.print_usage(err)
        err.write(f"abmceg: error: {exc}\n")
        return 1
    except (AbmError, DataError, ValueError) as exc:
        err.write(f"abmceg: {exc}\n")
        return 2
    except OSError as exc:
        err.write(f"abmceg: {exc.filename or ''}: {exc.strerror or exc}\n")
        return 2


if __name__ == "__main__":
    sys.exit(main())
