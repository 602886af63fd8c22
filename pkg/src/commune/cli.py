"""Command-line entry point: ``commune <subcommand> ...``.

Exit codes: 0 success, 1 computation error, 2 usage error. Failures also write a
one-line JSON object ``{"error": ..., "message": ...}`` to standard error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from . import artifacts
from .cluster import kmeans
from .communities import optimize_modularity
from .embed import TrainConfig, save_checkpoint, train_gnn, train_vnn
from .errors import CommuneError
from .evaluate import RESULTS_COLUMNS, build_report
from .graph import build_graph, graph_stats
from .ingest import (
    METHODS,
    CityConfig,
    IncomeTable,
    parse_income_csv,
    parse_od_csv,
    write_income_csv,
    write_od_csv,
)
from .pse import laplacian_eigen_encoding, random_walk_encoding, svd_encoding
from .synth import PlantedSpec, generate_records, synthetic_geoid

logger = logging.getLogger("commune")


class UsageError(CommuneError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        _emit_error("UsageError", message)
        raise SystemExit(2)


def _emit_error(kind, message):
    sys.stderr.write(json.dumps({"error": kind, "message": str(message)}) + "\n")


def _int_at_least(lo):
    def parse(text):
        try:
            v = int(text)
        except ValueError:
            raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
        if v < lo:
            raise argparse.ArgumentTypeError(f"must be >= {lo}, got {v}")
        return v

    return parse


def _positive_float(text):
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number, got {text!r}") from None
    if not v > 0:
        raise argparse.ArgumentTypeError(f"must be positive, got {v}")
    return v


# --------------------------------------------------------------------------- stages


def load_graph(path):
    return build_graph(parse_od_csv(path))


def cmd_ingest(od_path, income_path, out_dir, cfg: CityConfig | None = None):
    """Aggregate an O-D file to tracts; write ``graph.csv``, ``incomes.csv`` and ``stats.json``."""
    cfg = cfg or CityConfig()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    records = parse_od_csv(od_path, cfg.geoid_length, cfg.origin_col, cfg.dest_col, cfg.flow_col)
    g = build_graph(records)
    write_od_csv(records, out / "graph.csv")
    stats = graph_stats(g)
    artifacts.write_json(stats._asdict(), out / "stats.json")
    if income_path:
        write_income_csv(parse_income_csv(income_path), out / "incomes.csv")
    return g


def embed_graph(g, method, d, cfg: TrainConfig, checkpoint=None):
    if method == "gnn":
        result = train_gnn(g, d, cfg)
    elif method == "vnn":
        result = train_vnn(g, d, cfg)
    elif method == "le":
        return laplacian_eigen_encoding(g, d)
    elif method == "rw":
        return random_walk_encoding(g, d)
    elif method == "svd":
        return svd_encoding(g, d)
    else:
        raise UsageError(f"unknown method {method!r}")
    if checkpoint is not None:
        save_checkpoint(checkpoint, method, result, cfg, d)
    return result.embedding


def cmd_embed(graph_path, method, d, cfg: TrainConfig, out_dir):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    g = load_graph(graph_path)
    ckpt = out / "checkpoint.npz" if method in ("gnn", "vnn") else None
    emb = embed_graph(g, method, d, cfg, ckpt)
    artifacts.write_embeddings_csv(emb, out / "embeddings.csv")
    return emb


def cmd_cluster(embeddings_path, k, seed, out_dir, restarts=10):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    emb = artifacts.read_embeddings_csv(embeddings_path)
    part = kmeans(emb, k, restarts, seed)
    artifacts.write_assignments_csv(emb.node_ids, part, out / "assignments.csv")
    return part


def cmd_optimize(graph_path, out_dir, max_k=None):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    g = load_graph(graph_path)
    part = optimize_modularity(g, max_k)
    artifacts.write_assignments_csv(g.node_ids, part, out / "assignments.csv")
    return part


def append_results_row(report, path):
    path = Path(path)
    new = not path.exists() or path.stat().st_size == 0
    with open(path, "a", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if new:
            w.writerow(RESULTS_COLUMNS)
        w.writerow(report.results_row())


def cmd_evaluate(graph_path, assignments_path, incomes_path, out_dir, city="city", method="gnn",
                 bins=20, seed=0, truth_path=None, report_name="report.json"):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    g = load_graph(graph_path)
    part = artifacts.partition_for(g.node_ids, artifacts.read_assignments_csv(assignments_path))
    incomes = parse_income_csv(incomes_path) if incomes_path else IncomeTable()
    truth = None
    if truth_path:
        truth = artifacts.partition_for(g.node_ids, artifacts.read_assignments_csv(truth_path))
    report = build_report(city, method, g, part, incomes, bins, seed, truth)
    (out / report_name).write_text(report.to_json(), encoding="utf-8")
    append_results_row(report, out / "results.csv")
    return report


def cmd_synth(spec: PlantedSpec, out_dir):
    """Write ``od.csv`` (ingest format), ``incomes.csv`` and ground-truth ``labels.csv``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    records, labels, incomes = generate_records(spec)
    write_od_csv(records, out / "od.csv")
    write_income_csv(incomes, out / "incomes.csv")
    with open(out / "labels.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["geoid", "community"])
        for i, c in enumerate(labels):
            w.writerow([synthetic_geoid(i), int(c)])
    return records, labels, incomes


# --------------------------------------------------------------------------- pipeline


def _manifest_matches(manifest_path, hashes, outputs):
    try:
        old = json.loads(Path(manifest_path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError):
        return False
    if old.get("input_hashes") != hashes:
        logger.warning("input hashes changed since the last run; recomputing")
        return False
    return all(Path(p).exists() for p in outputs)


def run_city(cfg: CityConfig, out_dir, config_path=None, resume=False, truth_path=None):
    """Run ingest -> embed -> cluster -> evaluate (and optionally the optimizer) for one city."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if not cfg.od_path:
        raise UsageError("config needs an od_path")
    inputs = {"od": cfg.od_path}
    if cfg.income_path:
        inputs["income"] = cfg.income_path
    if cfg.geojson_path:
        inputs["geojson"] = cfg.geojson_path
    if config_path:
        inputs["config"] = str(config_path)
    hashes = {k: artifacts.sha256_file(v) for k, v in inputs.items()}
    hashes["settings"] = _settings_hash(cfg)
    manifest_path = out / "manifest.json"
    primary = [out / "assignments.csv", out / "report.json"]
    if resume and _manifest_matches(manifest_path, hashes, primary):
        logger.info("%s: inputs unchanged, reusing outputs", cfg.city_name)
        return json.loads((out / "report.json").read_text(encoding="utf-8"))

    started = time.strftime("%Y-%m-%dT%H:%M:%S%z")
    cmd_ingest(cfg.od_path, cfg.income_path, out, cfg)
    graph_csv = out / "graph.csv"
    incomes_csv = out / "incomes.csv" if cfg.income_path else None
    tcfg = TrainConfig(epochs=cfg.epochs, learning_rate=cfg.learning_rate, seed=cfg.seed)
    cmd_embed(graph_csv, cfg.method, cfg.embed_dim, tcfg, out)
    cmd_cluster(out / "embeddings.csv", cfg.k, cfg.seed, out, cfg.restarts)
    rows = out / "results.csv"
    if rows.exists():
        rows.unlink()
    report = cmd_evaluate(graph_csv, out / "assignments.csv", incomes_csv, out, cfg.city_name,
                          cfg.method, cfg.bins, cfg.seed, truth_path)
    outputs = [str(p) for p in primary]
    if cfg.compare_optimizer:
        comp = out / "optimizer"
        cmd_optimize(graph_csv, comp, cfg.k)
        cmd_evaluate(graph_csv, comp / "assignments.csv", incomes_csv, out, cfg.city_name,
                     "optimizer", cfg.bins, cfg.seed, truth_path, report_name="report_optimizer.json")
        outputs += [str(comp / "assignments.csv"), str(out / "report_optimizer.json")]
    if cfg.geojson_path:
        assign = artifacts.read_assignments_csv(out / "assignments.csv")
        artifacts.inject_communities_geojson(cfg.geojson_path, out / "communities.geojson", assign)
        outputs.append(str(out / "communities.geojson"))
    artifacts.write_json(
        {
            "config_path": str(config_path) if config_path else None,
            "config": cfg.to_dict(),
            "inputs": inputs,
            "input_hashes": hashes,
            "output_dir": str(out),
            "outputs": outputs,
            "started": started,
            "finished": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
        },
        manifest_path,
    )
    return report.to_dict()


def _settings_hash(cfg):
    import hashlib

    return hashlib.sha256(json.dumps(cfg.to_dict(), sort_keys=True).encode()).hexdigest()


def _run_city_job(args):
    cfg_dict, out_dir, config_path, resume = args
    logging.basicConfig(level=logging.WARNING)
    return run_city(CityConfig.from_dict(cfg_dict), out_dir, config_path, resume)


def cmd_pipeline(configs, out_dir, resume=False, truth_path=None):
    """Run every ``(config_path, CityConfig)``; several cities fan out over worker processes.

    ``COMMUNE_THREADS`` caps the number of workers. Writes a combined ``results.csv``.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if len(configs) == 1:
        path, cfg = configs[0]
        reports = [run_city(cfg, out, path, resume, truth_path)]
        city_dirs = [out]
    else:
        workers = max(1, int(os.environ.get("COMMUNE_THREADS", os.cpu_count() or 1)))
        jobs = [(cfg.to_dict(), str(out / cfg.city_name), str(path), resume) for path, cfg in configs]
        city_dirs = [out / cfg.city_name for _, cfg in configs]
        if workers == 1:
            reports = [_run_city_job(j) for j in jobs]
        else:
            with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as pool:
                reports = list(pool.map(_run_city_job, jobs))
        with open(out / "results.csv", "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(RESULTS_COLUMNS)
            for d in city_dirs:
                with open(d / "results.csv", newline="", encoding="utf-8") as src:
                    rows = list(csv.reader(src))[1:]
                w.writerows(rows)
    return reports


# --------------------------------------------------------------------------- argparse


def _add_common(p, *names):
    opts = {
        "method": lambda: p.add_argument("--method", choices=METHODS, default=None),
        "dim": lambda: p.add_argument("--dim", type=_int_at_least(1), default=None, help="embedding dimension d"),
        "k": lambda: p.add_argument("--k", type=_int_at_least(2), default=None, help="number of communities"),
        "epochs": lambda: p.add_argument("--epochs", type=_int_at_least(1), default=None),
        "lr": lambda: p.add_argument("--lr", type=_positive_float, default=None),
        "seed": lambda: p.add_argument("--seed", type=int, default=None),
        "restarts": lambda: p.add_argument("--restarts", type=_int_at_least(1), default=None),
        "bins": lambda: p.add_argument("--bins", type=_int_at_least(2), default=None),
    }
    for n in names:
        opts[n]()
    p.add_argument("--out", default=".", help="output directory")


def build_parser():
    parser = _Parser(prog="commune", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    parser.add_argument("--config", help="JSON config holding CityConfig fields; flags override it")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("ingest", help="aggregate an O-D file and income table")
    p.add_argument("--od", required=True)
    p.add_argument("--income")
    p.add_argument("--origin-col")
    p.add_argument("--dest-col")
    p.add_argument("--flow-col")
    p.add_argument("--geoid-length", type=_int_at_least(1))
    _add_common(p)

    p = sub.add_parser("embed", help="compute node embeddings")
    p.add_argument("--graph", required=True, help="graph.csv written by ingest")
    _add_common(p, "method", "dim", "epochs", "lr", "seed")

    p = sub.add_parser("cluster", help="k-means over embeddings")
    p.add_argument("--embeddings", required=True)
    _add_common(p, "k", "seed", "restarts")

    p = sub.add_parser("optimize", help="modularity optimizer comparator")
    p.add_argument("--graph", required=True)
    p.add_argument("--max-k", type=_int_at_least(1))
    _add_common(p)

    p = sub.add_parser("evaluate", help="modularity and income metrics for a partition")
    p.add_argument("--graph", required=True)
    p.add_argument("--assignments", required=True)
    p.add_argument("--incomes")
    p.add_argument("--truth", help="ground-truth assignments; adds NMI to the report")
    p.add_argument("--city")
    p.add_argument("--label", help="method label recorded in the report")
    _add_common(p, "seed", "bins")

    p = sub.add_parser("pipeline", help="ingest, embed, cluster and evaluate in one go")
    p.add_argument("--cities", help="comma-separated city names; configs read from <config-dir>/<name>.json")
    p.add_argument("--config-dir", default=".")
    p.add_argument("--compare", action="store_true", help="also run the modularity optimizer")
    p.add_argument("--resume", action="store_true", help="skip cities whose inputs are unchanged")
    p.add_argument("--truth")
    _add_common(p, "method", "dim", "k", "epochs", "lr", "seed", "restarts", "bins")

    p = sub.add_parser("synth", help="planted-partition O-D data")
    p.add_argument("--n", type=_int_at_least(1), default=120)
    p.add_argument("--k", type=_int_at_least(1), default=3)
    p.add_argument("--p-in", type=float, default=0.3)
    p.add_argument("--p-out", type=float, default=0.02)
    p.add_argument("--w-in", type=_positive_float, default=PlantedSpec.w_in)
    p.add_argument("--w-out", type=_positive_float, default=PlantedSpec.w_out)
    p.add_argument("--income-centers", help="comma-separated USD values, one per block")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=".")
    return parser


def _load_config(path=None, **overrides):
    """Bad or inconsistent configuration is a usage error, not a computation error."""
    try:
        if path:
            return CityConfig.load(path, **overrides)
        return CityConfig.from_dict({}, **overrides)
    except (CommuneError, OSError) as exc:
        raise UsageError(f"{path or 'flags'}: {exc}") from None


def _config(args, **overrides):
    return _load_config(args.config, **overrides)


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        _dispatch(args)
    except UsageError as exc:
        _emit_error("UsageError", exc)
        return 2
    except (CommuneError, ValueError, OSError, KeyError) as exc:
        _emit_error(type(exc).__name__, exc)
        return 1
    return 0


def _dispatch(args):
    c = args.command
    if c == "ingest":
        cfg = _config(args, origin_col=args.origin_col, dest_col=args.dest_col, flow_col=args.flow_col,
                      geoid_length=args.geoid_length)
        g = cmd_ingest(args.od, args.income, args.out, cfg)
        print(json.dumps(graph_stats(g)._asdict()))
    elif c == "embed":
        cfg = _config(args, method=args.method, embed_dim=args.dim, epochs=args.epochs,
                      learning_rate=args.lr, seed=args.seed)
        tcfg = TrainConfig(epochs=cfg.epochs, learning_rate=cfg.learning_rate, seed=cfg.seed)
        cmd_embed(args.graph, cfg.method, cfg.embed_dim, tcfg, args.out)
    elif c == "cluster":
        cfg = _config(args, k=args.k, seed=args.seed, restarts=args.restarts)
        cmd_cluster(args.embeddings, cfg.k, cfg.seed, args.out, cfg.restarts)
    elif c == "optimize":
        cmd_optimize(args.graph, args.out, args.max_k)
    elif c == "evaluate":
        cfg = _config(args, seed=args.seed, bins=args.bins, city_name=args.city)
        report = cmd_evaluate(args.graph, args.assignments, args.incomes, args.out, cfg.city_name,
                              args.label or cfg.method, cfg.bins, cfg.seed, args.truth)
        sys.stdout.write(report.to_json())
    elif c == "pipeline":
        overrides = dict(method=args.method, embed_dim=args.dim, k=args.k, epochs=args.epochs,
                         learning_rate=args.lr, seed=args.seed, restarts=args.restarts, bins=args.bins)
        if args.compare:
            overrides["compare_optimizer"] = True
        if args.cities:
            names = [s.strip() for s in args.cities.split(",") if s.strip()]
            configs = []
            for name in names:
                path = Path(args.config_dir) / f"{name}.json"
                cfg = _load_config(path, **overrides)
                if cfg.city_name == "city":
                    cfg.city_name = name
                configs.append((path, cfg))
        elif args.config:
            configs = [(args.config, _load_config(args.config, **overrides))]
        else:
            raise UsageError("pipeline needs --config or --cities")
        reports = cmd_pipeline(configs, args.out, args.resume, args.truth)
        sys.stdout.write(json.dumps(reports, indent=2, sort_keys=True) + "\n")
    elif c == "synth":
        centers = None
        if args.income_centers:
            try:
                centers = tuple(float(x) for x in args.income_centers.split(","))
            except ValueError:
                raise UsageError("--income-centers must be comma-separated numbers") from None
        spec = PlantedSpec(n=args.n, k=args.k, p_in=args.p_in, p_out=args.p_out, w_in=args.w_in,
                           w_out=args.w_out, income_centers=centers, seed=args.seed)
        try:
            spec.validate()
        except CommuneError as exc:
            raise UsageError(str(exc)) from None
        cmd_synth(spec, args.out)


if __name__ == "__main__":
    raise SystemExit(main())
