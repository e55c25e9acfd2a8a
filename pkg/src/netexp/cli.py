"""Command-line front end: generate | truth | run | verify | moments.

Exit codes: 0 success, 1 usage or input error, 2 verification disagreement
under ``--strict``.
"""

from __future__ import annotations

import argparse
import csv
import datetime as _dt
import json
import math
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import analytical_moments, bias_tte_adjusted, bias_tte_ht
from .designs import (
    CRD,
    Bernoulli,
    SupportTooLarge,
    crd_cov2,
    crd_moment3,
    crd_moment4,
    design_from_spec,
)
from .estimators import BaselineInfo, estimator_from_spec
from .montecarlo import McConfig, run_mc
from .network import GammaLaw, Partition, degree_stats, generate_clustered, save_partition
from .oracle import exact_design_moment, exact_estimator_moments
from .outcomes import HaneModel, load_model, load_model_csv, random_model, save_model, true_aie, true_ate, true_tte

DEFAULT_TOLERANCE = 1e-9
MC_SIGMA_BAND = 5.0


class UsageError(Exception):
    """Bad flags or unusable input files; exit code 1."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


# --------------------------------------------------------------------------
# generate
# --------------------------------------------------------------------------


def cmd_generate(args) -> int:
    if not 0.0 <= args.edge_prob <= 1.0:
        raise UsageError(f"--edge-prob must lie in [0, 1], got {args.edge_prob}")
    if args.n < 1:
        raise UsageError("--n must be at least 1")
    for flag in ("gamma", "alpha", "beta"):
        try:
            GammaLaw.parse(getattr(args, flag))
        except ValueError as exc:
            raise UsageError(f"--{flag}: {exc}") from None
    if args.clustered:
        if args.clusters is None or not 1 <= args.clusters <= args.n:
            raise UsageError("--clustered needs --clusters T with 1 <= T <= n")
        p_between = args.edge_prob if args.p_between is None else args.p_between
        if not 0.0 <= p_between <= 1.0:
            raise UsageError(f"--p-between must lie in [0, 1], got {p_between}")
        partition = Partition.equal(args.n, args.clusters)
        ss_graph, ss_alpha, ss_beta = np.random.SeedSequence(args.seed).spawn(3)
        graph = generate_clustered(partition, args.edge_prob, p_between, args.gamma, int(ss_graph.generate_state(1)[0]))
        alpha = GammaLaw.parse(args.alpha).sample(np.random.default_rng(ss_alpha), args.n)
        beta = GammaLaw.parse(args.beta).sample(np.random.default_rng(ss_beta), args.n)
        model = HaneModel(graph, alpha, beta)
        if args.partition_out:
            save_partition(partition, args.partition_out)
    else:
        model = random_model(args.n, args.edge_prob, args.seed, args.gamma, args.alpha, args.beta)
    save_model(model, args.out)
    print(f"wrote {args.out}: n={model.n}, edges={model.graph.n_edges}")
    return 0


# --------------------------------------------------------------------------
# truth
# --------------------------------------------------------------------------


def _load_model_arg(path: str, edges: str | None = None) -> HaneModel:
    try:
        if edges:
            return load_model_csv(path, edges)
        return load_model(path)
    except (OSError, ValueError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot load model {path}: {exc}") from None


def truth_dict(model: HaneModel) -> dict:
    return {"tte": true_tte(model), "ate": true_ate(model), "aie": true_aie(model)}


def cmd_truth(args) -> int:
    model = _load_model_arg(args.model, args.edges)
    t = truth_dict(model)
    if not math.isclose(t["tte"], t["ate"] + t["aie"], rel_tol=1e-12, abs_tol=1e-12):
        raise AssertionError("TTE != ATE + AIE")
    ds = degree_stats(model.graph)
    out = {**t, "n": model.n, "n_edges": model.graph.n_edges, "d_max": ds.d_max,
           "mean_out_degree": float(ds.out_degrees.mean()) if model.n else 0.0}
    if args.json:
        print(json.dumps(out, indent=1))
    else:
        for key in ("tte", "ate", "aie"):
            print(f"{key}: {out[key]!r}")
        print(f"tte = ate + aie: {t['ate'] + t['aie']!r}")
        print(f"n: {out['n']}  edges: {out['n_edges']}  d_max: {out['d_max']}  mean out-degree: {out['mean_out_degree']:.6g}")
    return 0


# --------------------------------------------------------------------------
# run / verify
# --------------------------------------------------------------------------


def _resolve_model(spec, base: Path) -> tuple[HaneModel, dict]:
    if isinstance(spec, str):
        path = Path(spec) if Path(spec).is_absolute() else base / spec
        return _load_model_arg(str(path)), {"path": str(spec)}
    if isinstance(spec, dict) and "nodes" in spec:
        nodes = base / spec["nodes"]
        edges = base / spec["edges"]
        return _load_model_arg(str(nodes), str(edges)), dict(spec)
    if isinstance(spec, dict) and "generate" in spec:
        g = dict(spec["generate"])
        try:
            model = random_model(
                int(g["n"]),
                float(g.get("edge_prob", 0.0)),
                int(g.get("seed", 0)),
                g.get("gamma", "uniform:-2,2"),
                g.get("alpha", "uniform:-5,5"),
                g.get("beta", "uniform:-1,1"),
            )
        except KeyError as exc:
            raise UsageError(f"model generator spec is missing {exc.args[0]!r}") from None
        return model, {"generate": g}
    raise UsageError(f"model must be a path, a split-CSV object or a generator spec, got {spec!r}")


def _resolve_baseline(spec, model: HaneModel) -> tuple[BaselineInfo, int | None, dict]:
    """Returns the baseline info, an optional per-replicate survey size, and its description."""
    if spec is None:
        spec = "exact_individual"
    if isinstance(spec, str):
        spec = {"mode": spec}
    mode = spec.get("mode")
    if mode == "exact_individual":
        return BaselineInfo.exact_individual(model.alpha), None, spec
    if mode == "exact_population_mean":
        return BaselineInfo.exact_population_mean(model.alpha), None, spec
    if mode == "population_mean":
        return BaselineInfo.population_mean(float(spec["value"])), None, spec
    if mode == "survey":
        size = int(spec["size"])
        if not 1 <= size <= model.n:
            raise UsageError(f"survey size must be in 1..{model.n}")
        rng = np.random.default_rng(int(spec.get("seed", 0)))
        ids = np.sort(rng.choice(model.n, size, replace=False))
        resample = size if spec.get("resample_per_replicate", True) else None
        return BaselineInfo.survey(ids, model.alpha[ids]), resample, spec
    if mode == "noisy":
        sd = float(spec.get("sd", 0.0))
        rng = np.random.default_rng(int(spec.get("seed", 0)))
        return BaselineInfo.noisy(model.alpha + rng.normal(0.0, sd, model.n)), None, spec
    if mode == "none":
        return BaselineInfo.none(), None, spec
    raise UsageError(f"unknown baseline mode {mode!r}")


def _close(a: float, b: float, tol: float) -> bool:
    return abs(a - b) <= tol * max(1.0, abs(a), abs(b))


def _estimator_report(model, d, e, b, truth, verify, mc_cfg, tol) -> dict:
    rec = {
        "label": e.label,
        "target": e.target,
        "baseline_mode": e.baseline_mode,
        "notes": list(e.notes),
    }
    disagreements = []
    try:
        an = analytical_moments(model, e, d, b)
        rec["analytical_mean"] = an.mean
        rec["analytical_variance"] = an.variance
        rec["variance_formula"] = an.formula
        if e.target is not None:
            rec["analytical_bias"] = an.mean - truth[e.target]
            formula = None
            if e.label == "tte_ht":
                formula, value = "bias_tte_ht", bias_tte_ht(model, d)
            elif e.label == "tte_adjusted_simple" and b.mode in ("exact_individual",):
                formula, value = "bias_tte_adjusted", bias_tte_adjusted(model, d)
            if formula:
                rec["bias_formula"] = formula
                rec["formula_bias"] = value
                if not _close(value, rec["analytical_bias"], tol):
                    disagreements.append({"what": "bias", "formula": formula, "closed_form": value,
                                          "from_mean": rec["analytical_bias"]})
    except (ValueError, TypeError) as exc:
        rec["analytical_error"] = str(exc)
        an = None
    if verify:
        om = exact_estimator_moments(model, e, d, b)
        rec["oracle"] = {"mean": om.mean, "variance": om.variance, "support_size": om.support_size}
        if e.target is not None:
            rec["oracle"]["bias"] = om.mean - truth[e.target]
        if an is not None:
            for what, x, y in (("mean", an.mean, om.mean), ("variance", an.variance, om.variance)):
                if not _close(x, y, tol):
                    disagreements.append({"what": what, "analytical": x, "oracle": y})
    if mc_cfg is not None:
        if mc_cfg.survey_size is not None and e.baseline_mode != "subtract_population_mean":
            # only population-mean estimators consume the redrawn survey
            mc_cfg = replace(mc_cfg, survey_size=None)
        res = run_mc(model, e, d, b, mc_cfg)
        rec["mc"] = res.to_dict()
        if e.target is not None:
            rec["mc"]["bias"] = res.empirical_mean - truth[e.target]
        if an is not None and mc_cfg.survey_size is None:
            gap = abs(res.empirical_mean - an.mean)
            if gap > MC_SIGMA_BAND * res.stderr_of_mean + tol * max(1.0, abs(an.mean)):
                disagreements.append({"what": "mc_mean", "analytical": an.mean, "mc": res.empirical_mean,
                                      "stderr": res.stderr_of_mean})
    rec["disagreements"] = disagreements
    return rec


def run_scenario(scenario: dict, base_dir: Path, force_verify: bool = False) -> dict:
    started = _dt.datetime.now(_dt.timezone.utc).isoformat()
    if "model" not in scenario or "design" not in scenario:
        raise UsageError("scenario needs 'model' and 'design'")
    model, model_meta = _resolve_model(scenario["model"], base_dir)
    try:
        d = design_from_spec(scenario["design"], model.n, base_dir)
    except (ValueError, KeyError, OSError) as exc:
        raise UsageError(f"bad design spec: {exc}") from None
    verify = bool(scenario.get("verify", False)) or force_verify
    mc_cfg = None
    try:
        b, survey_size, baseline_meta = _resolve_baseline(scenario.get("baseline"), model)
    except (KeyError, ValueError, TypeError, AttributeError) as exc:
        raise UsageError(f"bad baseline spec: {exc!r}") from None
    if scenario.get("mc"):
        mc = dict(scenario["mc"])
        try:
            mc_cfg = McConfig(
                replicates=mc.get("replicates", 1000),
                master_seed=mc.get("master_seed", 0),
                keep_replicate_values=bool(mc.get("keep_replicate_values", False)),
                threads=mc.get("threads"),
                survey_size=survey_size,
            )
        except (ValueError, TypeError) as exc:
            raise UsageError(f"bad mc config: {exc}") from None
    if mc_cfg is None and not verify:
        raise UsageError("scenario needs at least one of 'mc' or 'verify'")
    tol = float(scenario.get("tolerance", DEFAULT_TOLERANCE))
    specs = scenario.get("estimators") or []
    if isinstance(specs, (str, dict)):
        specs = [specs]
    if not specs:
        raise UsageError("scenario lists no estimators")
    truth = truth_dict(model)
    records = []
    for spec in specs:
        try:
            e = estimator_from_spec(spec, d, model.graph)
        except ValueError as exc:
            raise UsageError(f"estimator {spec!r}: {exc}") from None
        rec = {"spec": spec}
        try:
            rec.update(_estimator_report(model, d, e, b, truth, verify, mc_cfg, tol))
        except SupportTooLarge:
            raise
        except ValueError as exc:
            raise UsageError(f"estimator {spec!r}: {exc}") from None
        records.append(rec)
    all_dis = [dict(estimator=r["label"], **x) for r in records for x in r["disagreements"]]
    return {
        "truth": truth,
        "estimators": records,
        "disagreements": all_dis,
        "metadata": {
            "netexp_version": __version__,
            "n": model.n,
            "n_edges": model.graph.n_edges,
            "d_max": degree_stats(model.graph).d_max,
            "model": model_meta,
            "design": d.to_spec(),
            "baseline": baseline_meta,
            "mc": None if mc_cfg is None else {"replicates": mc_cfg.replicates, "master_seed": mc_cfg.master_seed,
                                               "survey_size": mc_cfg.survey_size},
            "verify": verify,
            "tolerance": tol,
            "started": started,
            "finished": _dt.datetime.now(_dt.timezone.utc).isoformat(),
        },
    }


CSV_FIELDS = ("estimator", "target", "channel", "mean", "bias", "variance", "formula")


def report_rows(report: dict):
    """Flat projection: one row per (estimator, channel)."""
    for r in report["estimators"]:
        if "analytical_mean" in r:
            yield {"estimator": r["label"], "target": r["target"], "channel": "analytical",
                   "mean": r["analytical_mean"], "bias": r.get("analytical_bias"),
                   "variance": r["analytical_variance"], "formula": r["variance_formula"]}
        if "oracle" in r:
            o = r["oracle"]
            yield {"estimator": r["label"], "target": r["target"], "channel": "oracle", "mean": o["mean"],
                   "bias": o.get("bias"), "variance": o["variance"], "formula": "enumeration"}
        if "mc" in r:
            m = r["mc"]
            yield {"estimator": r["label"], "target": r["target"], "channel": "mc", "mean": m["empirical_mean"],
                   "bias": m.get("bias"), "variance": m["empirical_variance"], "formula": "monte_carlo"}


def write_csv(report: dict, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=CSV_FIELDS)
        writer.writeheader()
        for row in report_rows(report):
            writer.writerow(row)


def cmd_run(args, force_verify: bool = False) -> int:
    path = Path(args.scenario)
    try:
        scenario = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read scenario {path}: {exc}") from None
    if not isinstance(scenario, dict):
        raise UsageError("scenario file must hold a JSON object")
    try:
        report = run_scenario(scenario, path.parent, force_verify)
    except SupportTooLarge as exc:
        raise UsageError(str(exc)) from None
    out = args.output or scenario.get("output")
    text = json.dumps(report, indent=1)
    if out:
        out_path = Path(out) if Path(out).is_absolute() or args.output else path.parent / out
        out_path.write_text(text + "\n", encoding="utf-8")
        print(f"wrote {out_path}")
    else:
        print(text)
    if args.csv:
        write_csv(report, args.csv)
    for dis in report["disagreements"]:
        print(f"disagreement: {json.dumps(dis)}", file=sys.stderr)
    if report["disagreements"] and args.strict:
        return 2
    return 0


# --------------------------------------------------------------------------
# moments
# --------------------------------------------------------------------------


def _closed_moment(d, idx, raw: bool) -> float:
    if raw:
        return d.moment(idx)
    if len(idx) == 1:
        return d.cov2(idx[0], idx[0])
    if isinstance(d, CRD):
        if len(idx) == 2:
            return crd_cov2(d, *idx)
        if len(idx) == 3:
            return crd_moment3(d, *idx)
        return crd_moment4(d, *idx)
    # Bernoulli: covariances of products from raw moments
    left, right = (idx[:1], idx[1:]) if len(idx) < 4 else (idx[:2], idx[2:])
    return d.moment(left + right) - d.moment(left) * d.moment(right)


def cmd_moments(args) -> int:
    if min(args.cov) < 0:
        raise UsageError("--cov indices must be non-negative")
    try:
        if args.crd:
            n, m = args.crd
            d = CRD(n, m)
        else:
            n = max(args.cov) + 1 if args.n is None else args.n
            d = Bernoulli(n, args.bernoulli)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    idx = list(args.cov)
    if not 1 <= len(idx) <= 4:
        raise UsageError("--cov takes 1 to 4 indices")
    if any(not 0 <= i < d.n for i in idx):
        raise UsageError(f"indices must lie in 0..{d.n - 1}")
    kind = "raw" if args.raw else "central"
    closed = _closed_moment(d, idx, args.raw)
    enum = exact_design_moment(d, idx, kind)
    label = "E[" + "*".join(f"z{i}" for i in idx) + "]" if args.raw else _cov_label(idx)
    print(f"design: {d}")
    print(f"{label}")
    print(f"  closed form: {closed!r}")
    print(f"  enumeration: {enum!r}")
    print(f"  agree: {_close(closed, enum, 1e-12)}")
    return 0


def _cov_label(idx) -> str:
    z = [f"z{i}" for i in idx]
    if len(idx) == 1:
        return f"Var[{z[0]}]"
    if len(idx) < 4:
        return f"Cov[{z[0]}, {'*'.join(z[1:])}]"
    return f"Cov[{z[0]}*{z[1]}, {z[2]}*{z[3]}]"


# --------------------------------------------------------------------------
# entry point
# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="netexp", description="Randomized experiments under additive network interference.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("generate", help="generate a random HANE model file")
    kind = g.add_mutually_exclusive_group()
    kind.add_argument("--er", action="store_true", help="Erdos-Renyi effect graph (default)")
    kind.add_argument("--clustered", action="store_true", help="planted-partition effect graph")
    g.add_argument("--n", type=int, required=True)
    g.add_argument("--edge-prob", type=float, default=0.0, help="edge probability (within clusters when --clustered)")
    g.add_argument("--clusters", type=int, help="number of equal clusters for --clustered")
    g.add_argument("--p-between", type=float, help="cross-cluster edge probability (default: --edge-prob)")
    g.add_argument("--gamma", default="uniform:-2,2", help="edge weight law, e.g. normal:0,1")
    g.add_argument("--alpha", default="uniform:-5,5", help="baseline law")
    g.add_argument("--beta", default="uniform:-1,1", help="direct effect law")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True, help="model JSON output path")
    g.add_argument("--partition-out", help="partition CSV output path (with --clustered)")
    g.set_defaults(func=cmd_generate)

    t = sub.add_parser("truth", help="print TTE/ATE/AIE and degree statistics of a model")
    t.add_argument("model", help="model JSON, or node CSV when --edges is given")
    t.add_argument("--edges", help="edge-list CSV for the split-file model format")
    t.add_argument("--json", action="store_true")
    t.set_defaults(func=cmd_truth)

    for name, helptext in (("run", "run a scenario file"), ("verify", "run a scenario with enumeration enabled")):
        r = sub.add_parser(name, help=helptext)
        r.add_argument("scenario")
        r.add_argument("--output", "-o", help="report path (overrides the scenario's 'output')")
        r.add_argument("--csv", help="also write a flat CSV projection")
        r.add_argument("--strict", action="store_true", help="exit 2 when channels disagree")
        r.set_defaults(func=cmd_run if name == "run" else (lambda a: cmd_run(a, force_verify=True)))

    m = sub.add_parser("moments", help="closed-form vs enumerated design moments")
    which = m.add_mutually_exclusive_group(required=True)
    which.add_argument("--crd", nargs=2, type=int, metavar=("N", "M"))
    which.add_argument("--bernoulli", type=float, metavar="P")
    m.add_argument("--n", type=int, help="population size for --bernoulli (default: largest index + 1)")
    m.add_argument("--cov", nargs="+", type=int, required=True, metavar="IDX")
    m.add_argument("--raw", action="store_true", help="raw moment E[prod z] instead of covariance")
    m.set_defaults(func=cmd_moments)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "bernoulli", None) is not None and args.n is None:
        args.n = max(args.cov) + 1
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"netexp: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
