"""Command-line entry point: ``graphmix <command> [<action>] [flags]``.

Exit status is 0 on success, 1 when a certification run exceeds its
violation threshold and 2 on usage or parameter errors.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
import tempfile
from pathlib import Path
from typing import Any, Callable

import numpy as np

from . import bounds, experiments
from .errors import GraphmixError, ParameterError, ShelterViolation
from .graph import Graph, dump_graph, generate_graph, load_graph, normalize_spec
from .online import (
    EwaBound,
    FiniteHypothesisSetting,
    GameConfig,
    make_ewa,
    make_sheltered,
    play_game,
    regret_of,
    sheltered_regret_bound,
    uniform_prior,
)
from .partitions import (
    WeightedStableFamily,
    exact_fractional_chromatic,
    greedy_power_coloring,
    residue_partition,
    validate_partition,
    weight_sum,
)
from .rng import stream

EXIT_OK, EXIT_CERT, EXIT_USAGE = 0, 1, 2


def fmt(x: Any) -> str:
    if isinstance(x, float):
        return "inf" if math.isinf(x) else f"{x:.7g}"
    return str(x)


def write_atomic(path: str | os.PathLike, text: str) -> None:
    """Write through a temp file in the target directory, then rename over the target."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise


def _dump_json(doc) -> str:
    return json.dumps(doc, sort_keys=True, indent=2) + "\n"


def _rows_csv(header: list[str], rows: list[list[Any]]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([fmt(x) for x in r])
    return buf.getvalue()


def _emit(args, doc: dict, csv_text: Callable[[], str] | None = None) -> None:
    if not args.out:
        return
    if args.format == "csv":
        if csv_text is None:
            raise ParameterError("this command has no CSV form; use --format json")
        write_atomic(args.out, csv_text())
    else:
        write_atomic(args.out, _dump_json(doc))


def _seed(args, fallback: int = 0) -> int:
    if args.seed is not None:
        seed = args.seed
    elif os.environ.get("GRAPHMIX_SEED"):
        try:
            seed = int(os.environ["GRAPHMIX_SEED"])
        except ValueError:
            raise ParameterError("GRAPHMIX_SEED must be an integer") from None
    else:
        seed = fallback
    if seed < 0:
        raise ParameterError("seed must be non-negative")
    return seed


def _graph_arg(value: str) -> tuple[Graph, dict | None]:
    """A shorthand spec ("path:10"), a JSON spec, or a path to an edge-list file."""
    if os.path.isfile(value):
        return load_graph(Path(value).read_text()), None
    spec = normalize_spec(json.loads(value) if value.lstrip().startswith("{") else value)
    return generate_graph(spec), spec


# --------------------------------------------------------------------------
# graph


def cmd_graph(args) -> int:
    g, spec = _graph_arg(args.graph)
    if args.action == "gen":
        if args.format == "csv":
            if args.out:
                write_atomic(args.out, dump_graph(g))
            print(f"n {g.n} edges {g.num_edges}")
            return EXIT_OK
        doc = {"spec": spec, "n": g.n, "edges": [list(e) for e in g.edges()]}
        _emit(args, doc)
        print(f"n {g.n} edges {g.num_edges}")
        return EXIT_OK
    comps = g.components()
    info = {
        "spec": spec,
        "n": g.n,
        "edges": g.num_edges,
        "max_degree": g.max_degree,
        "components": len(comps),
        "vertex_transitive": g.is_vertex_transitive_family(),
    }
    _emit(args, info, lambda: _rows_csv(list(info), [list(info.values())]))
    for k, v in info.items():
        if k != "spec":
            print(f"{k} {fmt(v)}")
    return EXIT_OK


# --------------------------------------------------------------------------
# partition


def _family_csv(fam: WeightedStableFamily) -> str:
    rows = [[k, v, str(w)] for k, (s, w) in enumerate(zip(fam.subsets, fam.weights)) for v in s]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["subset", "vertex", "weight"])
    w.writerows(rows)
    return buf.getvalue()


def cmd_partition(args) -> int:
    g, spec = _graph_arg(args.graph)
    if args.action == "validate":
        fam = WeightedStableFamily.from_dict(json.loads(Path(args.family).read_text()), g.n)
        report = validate_partition(g, fam)
        _emit(args, report.to_dict())
        _print_validation(report)
        return EXIT_OK if report.valid else EXIT_CERT
    if args.d is None:
        raise ParameterError("--d is required")
    extra = {}
    if args.action == "residue":
        if spec is None:
            raise ParameterError("residue partitions need a generator spec, not an edge-list file")
        fam = residue_partition(spec, args.d)
    elif args.action == "greedy":
        fam = greedy_power_coloring(g, args.d, args.strategy)
    else:
        value, fam = exact_fractional_chromatic(g, args.d, args.max_vertices)
        extra["chi_f"] = str(value)
    _emit(args, {**fam.to_dict(), **extra}, lambda: _family_csv(fam))
    print(f"subsets {len(fam.subsets)}")
    print(f"weight_sum {weight_sum(fam)}")
    for k, v in extra.items():
        print(f"{k} {v}")
    if args.validate:
        report = validate_partition(g, fam)
        _print_validation(report)
        if not report.valid:
            return EXIT_CERT
    return EXIT_OK


def _print_validation(report) -> None:
    print("valid" if report.valid else "invalid")
    for kind, detail in report.violations[:10]:
        print(f"  {kind}: {detail}")


# --------------------------------------------------------------------------
# bound


def cmd_bound(args) -> int:
    a = args.action
    if a == "concentration":
        value = bounds.concentration_bound(args.n, args.delta, args.range, args.phi, args.W)
        inputs = {"n": args.n, "delta": args.delta, "Delta": args.range, "phi": args.phi, "W": args.W}
    elif a == "pacbayes-iid":
        value = bounds.pacbayes_bound_iid(args.n, args.delta, args.kl)
        inputs = {"n": args.n, "delta": args.delta, "KL": args.kl}
    elif a == "pacbayes-graph":
        value = bounds.pacbayes_bound_graph(args.n, args.delta, args.kl, args.phi, args.W)
        inputs = {"n": args.n, "delta": args.delta, "KL": args.kl, "phi": args.phi, "W": args.W}
    elif a == "tail":
        if args.t is None:
            raise ParameterError("--t is required")
        value = bounds.tail_probability(args.n, args.range, args.W, args.phi, args.t)
        inputs = {"n": args.n, "Delta": args.range, "W": args.W, "phi": args.phi, "t": args.t}
    else:
        if args.C is None or args.tau is None:
            raise ParameterError("--C and --tau are required")
        value = bounds.tune_d_geometric(args.C, args.tau, args.n)
        inputs = {"C": args.C, "tau": args.tau, "n": args.n}
    report = bounds.BoundReport(a, inputs, value)
    _emit(args, report.to_dict(), lambda: _rows_csv(["kind", *inputs, "value"], [[a, *inputs.values(), value]]))
    print(fmt(value))
    return EXIT_OK


# --------------------------------------------------------------------------
# game


def random_setting(m: int, instances: int, seed: int) -> FiniteHypothesisSetting:
    """Loss table uniform on [0,1]; instances drawn uniformly, so L is the row mean."""
    loss = stream(seed, 0, 21).random((m, instances))
    return FiniteHypothesisSetting(loss, loss.mean(axis=1), "exact")


def cmd_game(args) -> int:
    g, spec = _graph_arg(args.graph)
    seed = _seed(args)
    setting = random_setting(args.m, args.instances, seed)
    data = stream(seed, 1, 22).integers(0, args.instances, g.n)
    ordering = None
    if args.ordering == "random":
        ordering = tuple(int(v) for v in stream(seed, 2, 23).permutation(g.n))
    d = args.shelter
    eta = args.eta if args.eta is not None else math.sqrt(8 * math.log(max(args.m, 2)) / g.n)
    prior = uniform_prior(args.m)
    if args.learner == "ewa":
        config = GameConfig(g, ordering, d, None if d == 1 else _game_family(g, spec, d, args))
        learner = make_ewa(prior, eta)
        W = 1.0
    else:
        fam = _game_family(g, spec, d, args)
        config = GameConfig(g, ordering, d, fam)
        learner = make_sheltered(lambda: make_ewa(prior, eta), fam, config)
        W = float(weight_sum(fam))
    tr = play_game(setting, config, learner, data)
    Lhat = setting.empirical_loss(data)
    best = np.zeros(args.m)
    best[int(np.argmin(Lhat))] = 1.0
    R = regret_of(tr, best)
    gap = float(best @ setting.population_loss - best @ Lhat)
    summary = {
        "n": g.n, "m": args.m, "shelter_d": d, "learner": args.learner, "eta": eta, "W": W,
        "regret": R, "M": tr.M, "identity_error": abs(R + tr.M - g.n * gap),
        "regret_bound": sheltered_regret_bound(W, EwaBound(math.log(args.m), eta), g.n),
    }
    _emit(args, {"summary": summary, "transcript": tr.to_dict()}, tr.to_csv)
    for k, v in summary.items():
        print(f"{k} {fmt(v)}")
    return EXIT_OK


def _game_family(g, spec, d, args) -> WeightedStableFamily:
    if args.partition == "residue":
        if spec is None:
            raise ParameterError("residue partitions need a generator spec")
        return residue_partition(spec, d)
    return greedy_power_coloring(g, d)


# --------------------------------------------------------------------------
# experiments


def _load_config(args) -> experiments.ExperimentConfig:
    doc = json.loads(Path(args.config).read_text())
    cfg = experiments.ExperimentConfig.from_dict(doc)
    cfg.seed = _seed(args, cfg.seed)
    if args.trials is not None:
        cfg.trials = args.trials
    if args.delta is not None:
        cfg.delta = args.delta
    if getattr(args, "allow_uncertified", False):
        cfg.allow_uncertified = True
    # re-run validation on the overridden fields
    return experiments.ExperimentConfig.from_dict(cfg.to_dict())


def _experiment(args, runner) -> int:
    cfg = _load_config(args)
    report = runner(cfg, threads=args.threads)
    doc = {"config": cfg.to_dict(), "report": report.to_dict()}
    _emit(args, doc, report.to_csv)
    if args.svg:
        write_atomic(args.svg, report.to_svg())
    print(f"trials {report.trials}")
    print(f"violations {report.violations}")
    print(f"rate {fmt(report.rate)}")
    print(f"wilson95 {fmt(report.wilson[0])} {fmt(report.wilson[1])}")
    print(f"threshold {fmt(report.threshold)}")
    for note in report.notes:
        print(f"note: {note}")
    print("PASS" if report.passed else "FAIL")
    return EXIT_OK if report.passed else EXIT_CERT


def cmd_verify(args) -> int:
    return _experiment(args, experiments.verify_concentration)


def cmd_generalize(args) -> int:
    return _experiment(args, experiments.run_generalization)


# --------------------------------------------------------------------------
# parser


def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return v


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="RNG seed (default: $GRAPHMIX_SEED or 0)")
    common.add_argument("--trials", type=_positive_int, default=None)
    common.add_argument("--delta", type=float, default=None)
    common.add_argument("--out", default=None, help="artifact path")
    common.add_argument("--format", choices=("json", "csv"), default="json")
    common.add_argument("--threads", type=_positive_int, default=1)

    p = argparse.ArgumentParser(prog="graphmix", description="Generalization bounds for graph-mixing data.")
    sub = p.add_subparsers(dest="command", required=True)

    gp = sub.add_parser("graph", help="generate or inspect graphs")
    gsub = gp.add_subparsers(dest="action", required=True)
    for name in ("gen", "info"):
        s = gsub.add_parser(name, parents=[common])
        s.add_argument("--graph", required=True, help='spec like "torus:20x20", JSON, or edge-list file')
        s.set_defaults(func=cmd_graph)

    pp = sub.add_parser("partition", help="build or validate d-stable fractional partitions")
    psub = pp.add_subparsers(dest="action", required=True)
    for name in ("residue", "greedy", "exact", "validate"):
        s = psub.add_parser(name, parents=[common])
        s.add_argument("--graph", required=True)
        s.set_defaults(func=cmd_partition)
        if name == "validate":
            s.add_argument("--family", required=True, help="family JSON document")
            continue
        s.add_argument("--d", type=_positive_int, default=None)
        s.add_argument("--validate", action="store_true")
        s.add_argument("--strategy", choices=("dsatur", "largest_first"), default="dsatur")
        s.add_argument("--max-vertices", type=_positive_int, default=16)

    bp = sub.add_parser("bound", help="evaluate closed-form bounds")
    bsub = bp.add_subparsers(dest="action", required=True)
    for name in ("concentration", "pacbayes-iid", "pacbayes-graph", "tune-d", "tail"):
        s = bsub.add_parser(name, parents=[common])
        s.add_argument("--n", type=int, required=True)
        s.add_argument("--kl", type=float, default=0.0)
        s.add_argument("--phi", type=float, default=0.0)
        s.add_argument("--W", type=float, default=1.0)
        s.add_argument("--range", type=float, default=1.0, help="range length Delta")
        s.add_argument("--t", type=float, default=None)
        s.add_argument("--C", type=float, default=None)
        s.add_argument("--tau", type=float, default=None)
        s.set_defaults(func=cmd_bound)

    gm = sub.add_parser("game", help="play the online game")
    gmsub = gm.add_subparsers(dest="action", required=True)
    s = gmsub.add_parser("play", parents=[common])
    s.add_argument("--graph", required=True)
    s.add_argument("--m", type=_positive_int, default=8)
    s.add_argument("--instances", type=_positive_int, default=16)
    s.add_argument("--learner", choices=("ewa", "sheltered"), default="sheltered")
    s.add_argument("--shelter", type=_positive_int, default=1)
    s.add_argument("--partition", choices=("residue", "greedy"), default="residue")
    s.add_argument("--eta", type=float, default=None)
    s.add_argument("--ordering", choices=("natural", "random"), default="natural")
    s.set_defaults(func=cmd_game)

    for name, fn in (("verify-concentration", cmd_verify), ("run-generalization", cmd_generalize)):
        s = sub.add_parser(name, parents=[common])
        s.add_argument("--config", required=True)
        s.add_argument("--svg", default=None, help="optional histogram path")
        if name == "run-generalization":
            s.add_argument("--allow-uncertified", action="store_true")
        s.set_defaults(func=fn)
    return p


def _bound_defaults(args) -> None:
    if args.command == "bound" and args.delta is None and args.action not in ("tail", "tune-d"):
        raise ParameterError("--delta is required")


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        _bound_defaults(args)
        return args.func(args)
    except ShelterViolation as exc:
        print(f"graphmix: shelter audit failed: {exc}", file=sys.stderr)
        return EXIT_CERT
    except (GraphmixError, ValueError, OSError, json.JSONDecodeError) as exc:
        print(f"graphmix: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
