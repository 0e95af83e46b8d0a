"""Command-line entry point: ``cfgraph <subcommand> ...``.

Exit codes: 0 success, 2 validation error, 3 numerical error. Failures print
one JSON object ``{"error": ..., "message": ...}`` on stderr.
"""

from __future__ import annotations

import argparse
import configparser
import json
import sys
from dataclasses import replace
from pathlib import Path

from .data import SbmSpec, evaluate, generate_sbm, load_dataset, predict_labels, save_dataset
from .errors import CfgraphError, MissingFile, NumericalError, ValidationError
from .graph import FORGET_KINDS, ForgetRequest
from .lcfnet import LcfConfig, fit_lcfnet
from .pipeline_a import PipelineAConfig, RffParams, fit_a
from .router import DEFAULT_TAU, route
from .serialize import load_model, save_model
from .sweep import SweepConfig, jsonable, run_sweep
from .unlearn import (STRATEGIES, apply_forget, bench_csv, bench_unlearn, default_holdout, forget_nodes_of,
                      predict, probabilities, tolerance, unlearn, unlearn_and_verify, verify_exact)


def _emit(obj, out=None):
    text = json.dumps(jsonable(obj), indent=None if out is None else 2, sort_keys=True)
    if out is None:
        print(text)
    else:
        Path(out).write_text(text + "\n")


def _read_request(path):
    path = Path(path)
    if not path.is_file():
        raise MissingFile(f"forget request not found: {path}")
    try:
        return ForgetRequest.from_json(json.loads(path.read_text()))
    except (KeyError, TypeError, json.JSONDecodeError) as exc:
        raise ValidationError(f"bad forget request: {exc}") from None


def _with_chunk(model, chunk):
    if chunk is not None and hasattr(model.config, "chunk"):
        model.config = replace(model.config, chunk=chunk)
    return model


# --- commands -------------------------------------------------------------------

def cmd_route(args):
    _emit(route(load_dataset(args.dataset), args.tau).to_json())


def cmd_fit(args):
    ds = load_dataset(args.dataset)
    sweep = SweepConfig.from_file(args.config) if args.config else SweepConfig()
    if args.seed is not None:
        sweep.seed = args.seed
        sweep.rff = RffParams(sweep.rff.num_features, sweep.rff.sigma, args.seed)
    if args.tau is not None:
        sweep.tau = args.tau
    if args.precision:
        sweep.precision = args.precision
    if args.chunk:
        sweep.chunk = args.chunk
    model, report = run_sweep(ds, sweep)
    save_model(model, args.out)
    report["model"] = str(args.out)
    _emit(report, args.report)
    if args.report:
        _emit({"model": str(args.out), "pipeline": report["pipeline"],
               "selected_config": report["selected_config"]})


def cmd_predict(args):
    ds = load_dataset(args.dataset)
    model = _with_chunk(load_model(args.model), args.chunk)
    scores = predict(model, ds)
    probs = probabilities(scores, ds.multilabel)
    lines = ["id\tpred\t" + "\t".join(f"p{c}" for c in range(probs.shape[1]))]
    pred = predict_labels(probs) if not ds.multilabel else None
    for i in range(ds.n):
        if ds.removed[i]:
            continue  # deleted nodes have no prediction
        lab = str(int(pred[i])) if pred is not None else ",".join(str(int(b)) for b in probs[i] > 0.5)
        lines.append(f"{i}\t{lab}\t" + "\t".join(repr(float(p)) for p in probs[i]))
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)


def cmd_eval(args):
    ds = load_dataset(args.dataset)
    model = _with_chunk(load_model(args.model), args.chunk)
    scores = predict(model, ds)
    mask = {"train": ds.train_mask, "val": ds.val_mask, "test": ds.test_mask}[args.split]
    _emit({"metric": ds.metric, "split": args.split, "value": evaluate(scores, ds, mask)})


def cmd_unlearn(args):
    ds = load_dataset(args.dataset)
    req = _read_request(args.request)
    model = load_model(args.model)
    if args.strategy == "khop" or (args.strategy == "full" and model.kind == "pipeline-a"):
        model.attach(ds)
    if args.verify:
        out, rep = unlearn_and_verify(model, ds, req, args.strategy, args.seed or 0)
    else:
        out, rep = unlearn(model, ds, req, args.strategy)
    save_model(out, args.out)
    if args.dataset_out:
        ds2, _ = apply_forget(ds, req)
        save_dataset(ds2, args.dataset_out)
    _emit(rep.to_json(), args.report)


def cmd_verify(args):
    ds = load_dataset(args.dataset)
    a = load_model(args.unlearned)
    b = load_model(args.retrained)
    forget = holdout = None
    if args.request:
        forget = forget_nodes_of(_read_request(args.request))
        holdout = default_holdout(ds, forget, args.seed or 0)
    query = load_dataset(args.query_dataset) if args.query_dataset else None
    rep = verify_exact(a, b, ds, forget, holdout if holdout is not None and len(holdout) else None, query)
    tol = tolerance(a)
    out = rep.to_json()
    out["exact"] = bool(rep.delta_theta <= tol and rep.prob_equal)
    out["tolerance"] = tol
    _emit(out, args.out)


def _bench_grid(path):
    kinds, sizes, repeats, retrain = ["feature", "edge", "node", "label"], [1, 10, 100], 3, True
    if path:
        if not Path(path).is_file():
            raise MissingFile(f"grid file not found: {path}")
        cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
        cp.read(path)
        if "bench" in cp:
            b = cp["bench"]
            if "kinds" in b:
                kinds = [k.strip() for k in b["kinds"].split(",") if k.strip()]
            if "sizes" in b:
                sizes = [int(s) for s in b["sizes"].split(",") if s.strip()]
            repeats = b.getint("repeats", repeats)
            retrain = b.getboolean("retrain", retrain)
    bad = set(kinds) - set(FORGET_KINDS)
    if bad or not kinds or not sizes:
        raise ValidationError(f"bad benchmark grid (unknown kinds {sorted(bad)})")
    return [(k, s) for k in kinds for s in sizes], repeats, retrain


def _parse_sbm(text, seed):
    fields = {"n": int, "num_classes": int, "p_in": float, "p_out": float, "feature_dim": int,
              "class_mean_separation": float, "seed": int}
    kw = {"seed": seed or 0}
    for part in filter(None, (t.strip() for t in text.split(","))):
        k, _, v = part.partition("=")
        if k not in fields:
            raise ValidationError(f"unknown SBM field {k!r}")
        kw[k] = fields[k](v)
    return SbmSpec(**kw)


def cmd_bench(args):
    if args.dataset:
        ds = load_dataset(args.dataset)
    elif args.sbm is not None:
        ds = generate_sbm(_parse_sbm(args.sbm, args.seed))
    else:
        raise ValidationError("give a dataset directory or --sbm")
    if args.model:
        model = load_model(args.model).attach(ds)
    elif args.pipeline == "B":
        model = fit_lcfnet(ds, LcfConfig(K=1, whiten=False))
    else:
        model = fit_a(ds, PipelineAConfig(K=args.K, precision=args.precision or "fp64"))
    grid, repeats, retrain = _bench_grid(args.grid)
    rows = bench_unlearn(ds, model, grid, seed=args.seed or 0, repeats=repeats, retrain=retrain)
    text = bench_csv(rows)
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)


def cmd_gen(args):
    spec = SbmSpec(n=args.n, num_classes=args.classes, p_in=args.p_in, p_out=args.p_out,
                   feature_dim=args.dim, class_mean_separation=args.separation, seed=args.seed or 0)
    ds = generate_sbm(spec, name=args.name)
    save_dataset(ds, args.out, binary=not args.text)
    _emit({"out": str(args.out), "n": ds.n, "edges": ds.graph.num_edges,
           "train": int(ds.train_mask.sum()), "val": int(ds.val_mask.sum()), "test": int(ds.test_mask.sum())})


# --- parser --------------------------------------------------------------------

def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="seed for every random draw")
    common.add_argument("--precision", choices=("fp32", "fp64"), default=None)
    common.add_argument("--chunk", type=int, default=None, help="kernel row-block size")

    p = argparse.ArgumentParser(prog="cfgraph", description="Closed-form graph learning with exact unlearning.")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("route", parents=[common], help="print the routing decision as JSON")
    s.add_argument("dataset")
    s.add_argument("--tau", type=float, default=DEFAULT_TAU)
    s.set_defaults(func=cmd_route)

    s = sub.add_parser("fit", parents=[common], help="route, sweep, select on validation, save model")
    s.add_argument("dataset")
    s.add_argument("--config", help="sweep config (INI key=value sections)")
    s.add_argument("--tau", type=float, default=None)
    s.add_argument("--out", required=True, help="model file to write")
    s.add_argument("--report", help="write the full sweep report here (default: stdout)")
    s.set_defaults(func=cmd_fit)

    s = sub.add_parser("predict", parents=[common], help="per-node probabilities as TSV")
    s.add_argument("model")
    s.add_argument("dataset")
    s.add_argument("--out")
    s.set_defaults(func=cmd_predict)

    s = sub.add_parser("eval", parents=[common], help="metric on a split")
    s.add_argument("model")
    s.add_argument("dataset")
    s.add_argument("--split", choices=("train", "val", "test"), default="test")
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("unlearn", parents=[common], help="apply a forget request to a model")
    s.add_argument("model")
    s.add_argument("dataset")
    s.add_argument("request", help='JSON file {"kind": ..., "targets": [...]}')
    s.add_argument("--strategy", choices=STRATEGIES, default="khop")
    s.add_argument("--out", required=True, help="updated model file")
    s.add_argument("--dataset-out", help="write the modified dataset here")
    s.add_argument("--verify", action="store_true", help="also retrain and compare")
    s.add_argument("--report", help="write the report JSON here (default: stdout)")
    s.set_defaults(func=cmd_unlearn)

    s = sub.add_parser("verify-exact", parents=[common], help="compare an unlearned and a retrained model")
    s.add_argument("unlearned")
    s.add_argument("retrained")
    s.add_argument("dataset", help="the post-forget dataset")
    s.add_argument("--request", help="forget request, enables the membership-inference check")
    s.add_argument("--query-dataset", help="pre-forget dataset the attack queries (default: dataset)")
    s.add_argument("--out")
    s.set_defaults(func=cmd_verify)

    s = sub.add_parser("bench-unlearn", parents=[common], help="khop / full / retrain timing table (CSV)")
    s.add_argument("dataset", nargs="?")
    s.add_argument("--sbm", help="synthetic graph instead, e.g. n=100000,p_in=4e-5,p_out=4e-6")
    s.add_argument("--grid", help="INI file with a [bench] section: kinds, sizes, repeats, retrain")
    s.add_argument("--model", help="saved model to benchmark (default: fresh Pipeline A fit)")
    s.add_argument("--pipeline", choices=("A", "B"), default="A")
    s.add_argument("--K", type=int, default=2)
    s.add_argument("--out")
    s.set_defaults(func=cmd_bench)

    s = sub.add_parser("gen-synth", parents=[common], help="write a synthetic SBM dataset")
    s.add_argument("--n", type=int, default=400)
    s.add_argument("--classes", type=int, default=2)
    s.add_argument("--p-in", type=float, default=0.05)
    s.add_argument("--p-out", type=float, default=0.005)
    s.add_argument("--dim", type=int, default=16)
    s.add_argument("--separation", type=float, default=1.0)
    s.add_argument("--name", default=None)
    s.add_argument("--text", action="store_true", help="write features.csv instead of features.bin")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_gen)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except ValidationError as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return 3
    except (CfgraphError, OSError, json.JSONDecodeError, configparser.Error) as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
