"""``chainprofiler`` command line.

Every subcommand accepts ``--config FILE`` with flat ``key = value`` lines
(keys are flag names, dashes or underscores); explicit flags override the
file. Each output gets a ``<name>.meta.json`` sidecar recording the tool
version, seed and SHA-256 digests of the inputs.

Exit status: 0 on success, 2 for invalid usage or input data, 1 for I/O
failures. Files written by a failing run are removed.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import os
import secrets
import sys
from contextlib import contextmanager
from dataclasses import asdict
from pathlib import Path
from typing import Dict, List, Optional

from . import __version__
from . import embeddings as emb
from . import evaluation, fingerprint, ingest, profiles, tornado, txgraph
from .errors import ChainProfilerError, ConfigInvalid

logger = logging.getLogger("chainprofiler")

SUBCOMMANDS = ("ingest", "features", "graph", "embed", "rank", "evaluate", "tornado", "fingerprint", "pipeline")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


# --------------------------------------------------------------------------
# config and bookkeeping

def read_config(path) -> Dict[str, str]:
    out = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigInvalid(f"{path}:{lineno}: expected key=value")
            key, value = (s.strip() for s in line.split("=", 1))
            out[key.replace("-", "_")] = value
    return out


def _config_path(argv):
    for i, tok in enumerate(argv):
        if tok == "--config":
            if i + 1 >= len(argv):
                raise UsageError("argument --config: expected one argument")
            return argv[i + 1]
        if tok.startswith("--config="):
            return tok.split("=", 1)[1]
    return None


def _apply_config(parser: argparse.ArgumentParser, path) -> None:
    """Install config values as parser defaults, so explicit flags still win."""
    if not os.path.isfile(path):
        raise ConfigInvalid(f"--config: no such file {path}")
    actions = {a.dest: a for a in parser._actions}
    defaults = {}
    for key, value in read_config(path).items():
        action = actions.get(key)
        if action is None or key in ("config", "help"):
            raise ConfigInvalid(f"{path}: unknown key {key!r}")
        try:
            if action.nargs in ("*", "+"):
                conv = [action.type(v) if action.type else v for v in value.split()]
            else:
                conv = action.type(value) if action.type else value
        except (TypeError, ValueError) as exc:
            raise ConfigInvalid(f"{path}: bad value for {key}: {exc}") from None
        if action.choices is not None and conv not in action.choices:
            raise ConfigInvalid(f"{path}: {key} must be one of {sorted(action.choices)}")
        defaults[key] = conv
    parser.set_defaults(**defaults)


def _require(args, *names):
    for name in names:
        if getattr(args, name, None) in (None, ""):
            raise ConfigInvalid(f"missing required option --{name.replace('_', '-')}")


def _require_file(args, name):
    _require(args, name)
    path = getattr(args, name)
    if not os.path.isfile(path):
        raise ConfigInvalid(f"--{name.replace('_', '-')}: no such file {path}")
    return path


def _digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


class Outputs:
    """Tracks written files so a failed run can remove them."""

    def __init__(self, seed, inputs):
        self.seed = seed
        self.inputs = {os.path.basename(p): _digest(p) for p in inputs if p}
        self.paths: List[Path] = []

    def metadata(self, **extra):
        meta = {"tool": "chainprofiler", "version": __version__, "seed": self.seed, "inputs": self.inputs}
        meta.update(extra)
        return meta

    def claim(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        self.paths.append(path)
        return path

    def sidecar(self, path, **extra):
        side = self.claim(f"{path}.meta.json")
        with open(side, "w") as fh:
            json.dump(self.metadata(**extra), fh, indent=2, sort_keys=True)
            fh.write("\n")

    def cleanup(self):
        for p in self.paths:
            try:
                p.unlink()
            except FileNotFoundError:
                pass


@contextmanager
def _outputs(seed, inputs):
    out = Outputs(seed, inputs)
    try:
        yield out
    except BaseException:
        out.cleanup()
        raise


def _resolve_seed(args, required=False):
    if args.seed is not None:
        return args.seed
    if required:
        raise ConfigInvalid("missing required option --seed (randomized stages need an explicit seed)")
    seed = secrets.randbelow(2**31)
    print(f"chainprofiler: using seed {seed}", file=sys.stderr)
    return seed


def _cutoffs(text):
    out = []
    for part in str(text).split(","):
        part = part.strip().lower()
        if part in ("all", "none", ""):
            out.append(None)
        else:
            out.append(int(part))
    return out


# --------------------------------------------------------------------------
# shared stages

def _feature_cfg(args):
    try:
        return profiles.FeatureConfig(args.b_hour, args.b_gas, args.gas_clip)
    except ValueError as exc:
        raise ConfigInvalid(str(exc)) from None


def _walk_params(args, seed):
    try:
        return emb.WalkParams(
            dim=args.dim, walks_per_node=args.walks_per_node, cover_size=args.cover_size,
            walk_length=args.walk_length, window=args.window, negatives=args.negatives,
            epochs=args.epochs, learning_rate=args.learning_rate, seed=seed, workers=args.workers,
        )
    except ValueError as exc:
        raise ConfigInvalid(str(exc)) from None


def _features_for(txs, active, cfg, daily_gas=None):
    series = profiles.read_daily_gas(daily_gas) if daily_gas else None
    return profiles.build_profiles(txs, active, cfg, series)


def _embed(txs, method, params, universe, exclude_pairs=()):
    g, _ = txgraph.preprocess(txgraph.build_graph(txs, exclude_pairs=exclude_pairs))
    fn = emb.diff2vec if method == "diff2vec" else emb.role2vec
    table = fn(g, params)
    return emb.complete_embeddings(table, universe)


def _write_features(out, path, feats, **meta):
    p = out.claim(path)
    profiles.write_features(p, feats)
    out.sidecar(p, **meta)


# --------------------------------------------------------------------------
# subcommands

def cmd_ingest(args):
    _require(args, "out_dir")
    seed = args.seed
    inputs = [args.transactions, args.labels]
    txs = []
    if args.transactions:
        _require_file(args, "transactions")
        txs = ingest.load_transactions(args.transactions)
    if args.fetch:
        try:
            cfg = ingest.ApiConfig.from_env()
        except ValueError as exc:
            raise ConfigInvalid(str(exc)) from None
        client = ingest.ApiClient(cfg)
        by_key = {t.sort_key(): t for t in txs}
        for addr in args.fetch:
            for t in ingest.fetch_address_history(client, addr):
                by_key.setdefault(t.sort_key(), t)
        txs = sorted(by_key.values(), key=ingest.Transaction.sort_key)
    if not txs:
        raise ConfigInvalid("nothing to ingest: give --transactions and/or --fetch")
    with _outputs(seed, inputs) as out:
        d = Path(args.out_dir)
        p = out.claim(d / "transactions.csv")
        ingest.write_transactions(p, txs)
        out.sidecar(p)
        active = ingest.filter_active_addresses(txs, args.min_sent)
        p = out.claim(d / "addresses.csv")
        with open(p, "w") as fh:
            fh.write("address,source\n")
            for a in active:
                fh.write(f"{a},{active.sources[a]}\n")
        out.sidecar(p, min_sent=args.min_sent)
        if args.labels:
            labels = ingest.load_labels(_require_file(args, "labels"))
            exposure = ingest.service_exposure(active, labels, txs)
            p = out.claim(d / "exposure.csv")
            with open(p, "w") as fh:
                fh.write("category,fraction\n")
                for c, f in exposure.items():
                    fh.write(f"{c},{f!r}\n")
            out.sidecar(p)
    return 0


def cmd_features(args):
    _require(args, "out")
    txs = ingest.load_transactions(_require_file(args, "transactions"))
    cfg = _feature_cfg(args)
    active = ingest.filter_active_addresses(txs, args.min_sent)
    tod, gas = _features_for(txs, active, cfg, args.daily_gas)
    with _outputs(args.seed, [args.transactions, args.daily_gas]) as out:
        _write_features(out, args.out, list(tod.values()) + list(gas.values()), features=asdict(cfg))
    return 0


def cmd_graph(args):
    _require(args, "out")
    txs = ingest.load_transactions(_require_file(args, "transactions"))
    g, removed = txgraph.preprocess(txgraph.build_graph(txs))
    with _outputs(args.seed, [args.transactions]) as out:
        p = out.claim(args.out)
        txgraph.write_edges(p, g)
        out.sidecar(p, nodes=len(g), edges=g.n_edges, removed=len(removed))
    return 0


def cmd_embed(args):
    _require(args, "out")
    txs = ingest.load_transactions(_require_file(args, "transactions"))
    seed = _resolve_seed(args)
    params = _walk_params(args, seed)
    universe = ingest.filter_active_addresses(txs, args.min_sent)
    table = _embed(txs, args.method, params, universe)
    with _outputs(seed, [args.transactions]) as out:
        p = out.claim(args.out)
        out.claim(f"{p}.meta.json")
        emb.write_embeddings(p, table, out.metadata())
    return 0


def _load_features(args):
    feats = profiles.read_features(_require_file(args, "features"))
    if args.kind:
        feats = {a: f for a, f in feats.items() if f.kind == args.kind}
    return feats


def _features_by_kind(path):
    by_kind: Dict[str, Dict[str, profiles.FeatureVector]] = {}
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        header = next(r, None)
        if not header or header[:2] != ["address", "kind"]:
            raise ConfigInvalid(f"--features: {path} must start with address,kind")
        for row in r:
            if row:
                vals = [float(v) for v in row[2:] if v != ""]
                by_kind.setdefault(row[1], {})[row[0]] = profiles.FeatureVector(row[0], row[1], vals)
    return by_kind


def cmd_rank(args):
    _require(args, "out")
    pairs = ingest.load_ens_pairs(_require_file(args, "pairs"))
    by_kind = _features_by_kind(_require_file(args, "features"))
    with _outputs(args.seed, [args.features, args.pairs]) as out:
        p = out.claim(args.out)
        with open(p, "w") as fh:
            fh.write("method,target,truth,n,rank\n")
            for kind in sorted(by_kind):
                if args.kind and kind != args.kind:
                    continue
                feats = by_kind[kind]
                for r in evaluation.rank_pairs(feats, pairs, feats):
                    fh.write(f"{kind},{r.target},{r.truth},{r.n},{r.rank}\n")
        out.sidecar(p)
    return 0


def cmd_evaluate(args):
    _require(args, "features")
    _require(args, "pairs")
    _require(args, "out")
    pairs = ingest.load_ens_pairs(_require_file(args, "pairs"))
    by_kind = _features_by_kind(_require_file(args, "features"))
    report = evaluation.EvaluationReport()
    for kind in sorted(by_kind):
        results = evaluation.rank_pairs(by_kind[kind], pairs, by_kind[kind])
        if results:
            report.add(kind, evaluation.evaluate(results, args.resolution))
    if not report.methods:
        raise ConfigInvalid("no ground-truth pair has features for both addresses")
    with _outputs(args.seed, [args.features, args.pairs]) as out:
        _write_report(out, report, args.out)
    return 0


def _write_report(out, report, json_path):
    p = out.claim(json_path)
    report.write_json(p, out.metadata())
    csv_path = out.claim(Path(json_path).with_suffix(".csv"))
    report.write_csv(csv_path)
    out.sidecar(csv_path)


def _tornado_stage(out, d, txs, args):
    events = tornado.load_events(_require_file(args, "events"))
    links = tornado.all_links(events, txs, args.mixer_address or (), args.h2_scope)
    p = out.claim(d / "links.csv")
    tornado.write_links(p, links)
    out.sidecar(p, h2_scope=args.h2_scope)
    p = out.claim(d / "anonymity_series.csv")
    tornado.write_series(p, tornado.anonymity_series(events, links))
    out.sidecar(p)
    p = out.claim(d / "heuristics.json")
    with open(p, "w") as fh:
        json.dump(tornado.heuristic_table(events, links), fh, indent=2, sort_keys=True)
        fh.write("\n")
    out.sidecar(p)
    p = out.claim(d / "withdraw_reuse.csv")
    with open(p, "w") as fh:
        fh.write("mixer,withdraws,addresses\n")
        for m in tornado.MIXERS:
            for k, v in tornado.reuse_histogram(events, m).items():
                fh.write(f"{m},{k},{v}\n")
    out.sidecar(p)
    p = out.claim(d / "mixing_delays.csv")
    with open(p, "w") as fh:
        fh.write("mixer,window,day,links\n")
        for m in tornado.MIXERS:
            gt = [l for l in tornado.ground_truth_links(links, "past") if l.mixer == m]
            for day, c in enumerate(tornado.mixing_delay_distribution(gt)):
                fh.write(f"{m},past,{day},{c}\n")
    out.sidecar(p)
    return events, links


def cmd_tornado(args):
    _require(args, "out_dir")
    txs = ingest.load_transactions(_require_file(args, "transactions"))
    _require_file(args, "events")
    with _outputs(args.seed, [args.transactions, args.events]) as out:
        _tornado_stage(out, Path(args.out_dir), txs, args)
    return 0


def _fingerprint_stage(out, path, txs, args):
    ledger = fingerprint.replay_balances(txs)
    try:
        report = fingerprint.fingerprint_report(ledger, args.digits, _cutoffs(args.cutoffs))
    except ValueError as exc:
        raise ConfigInvalid(str(exc)) from None
    p = out.claim(path)
    fingerprint.write_report(p, report, out.metadata(digits=args.digits, approximate_ledger=ledger.approximate))
    out.sidecar(p)


def cmd_fingerprint(args):
    _require(args, "out")
    txs = ingest.load_transactions(_require_file(args, "transactions"))
    with _outputs(args.seed, [args.transactions]) as out:
        _fingerprint_stage(out, args.out, txs, args)
    return 0


def _tornado_eval(report, events, links, method_feats):
    for mixer in tornado.MIXERS:
        past = tornado.withdraw_tasks(events, links, "past")
        past = [t for t in past if t.mixer == mixer]
        if not past:
            continue
        total_set = sum(len(t.candidates) for t in past) / len(past)
        for window in ("day", "week", "past"):
            tasks = [t for t in tornado.withdraw_tasks(events, links, window) if t.mixer == mixer]
            if not tasks:
                continue
            cand_set = sum(len(t.candidates) for t in tasks) / len(tasks)
            miss = 1.0 - len(tasks) / len(past)
            corr = evaluation.rank_correction(total_set, min(cand_set, total_set), max(miss, 0.0))
            for name, feats in method_feats.items():
                results = [
                    evaluation.rank_candidates(feats, t.withdraw.address, t.candidates, t.truth)
                    for t in tasks
                    if t.withdraw.address in feats and all(c in feats for c in t.candidates)
                ]
                if results:
                    report.add(f"tornado/{mixer}/{window}/{name}", evaluation.evaluate(results, correction=corr))


def cmd_pipeline(args):
    _require(args, "out_dir")
    seed = _resolve_seed(args, required=True)
    txs = ingest.load_transactions(_require_file(args, "transactions"))
    pairs = ingest.load_ens_pairs(_require_file(args, "pairs"))
    cfg = _feature_cfg(args)
    params = _walk_params(args, seed)
    inputs = [args.transactions, args.pairs, args.events, args.labels, args.daily_gas]
    for name in ("events", "labels", "daily_gas"):
        if getattr(args, name):
            _require_file(args, name)
    d = Path(args.out_dir)
    with _outputs(seed, inputs) as out:
        active = ingest.filter_active_addresses(txs, args.min_sent)
        universe = set(active)
        if args.events:
            # mixer participants are ranked even when they sent few transactions
            universe |= {e.address for e in tornado.load_events(args.events)}
        universe = sorted(universe)
        tod, gas = _features_for(txs, universe, cfg, args.daily_gas)
        _write_features(out, d / "features.csv", list(tod.values()) + list(gas.values()), features=asdict(cfg))

        tables = {}
        for method in ("diff2vec", "role2vec"):
            table = _embed(txs, method, params, universe)
            p = out.claim(d / f"embeddings_{method}.csv")
            out.claim(f"{p}.meta.json")
            emb.write_embeddings(p, table, out.metadata())
            tables[method] = table.as_features()

        concat = {
            a: profiles.concat_features(tod[a], tables["diff2vec"][a]) for a in universe if a in tod
        }
        methods = {
            "timeofday": tod,
            "gasprice": gas,
            "diff2vec": tables["diff2vec"],
            "role2vec": tables["role2vec"],
            "timeofday+diff2vec": concat,
        }
        report = evaluation.EvaluationReport()
        active_set = list(active)
        ranked = {}
        for name, feats in methods.items():
            pool = [a for a in active_set if a in feats]
            results = evaluation.rank_pairs(feats, pairs, pool)
            if results:
                ranked[name] = results
                report.add(name, evaluation.evaluate(results, args.resolution))
        if "diff2vec" in ranked and "role2vec" in ranked:
            fused = evaluation.fuse_results(ranked["diff2vec"], ranked["role2vec"])
            report.add("diff2vec*role2vec", evaluation.evaluate(fused, args.resolution))

        if args.events:
            events, links = _tornado_stage(out, d, txs, args)
            # graph features must not see the edges that produced the ground truth
            h3 = [(l.deposit.address, l.withdraw.address) for l in links if l.heuristic == 3]
            blind = _embed(txs, "diff2vec", params, universe, exclude_pairs=h3).as_features()
            blind_concat = {a: profiles.concat_features(tod[a], blind[a]) for a in universe if a in tod}
            _tornado_eval(report, events, links,
                          {"timeofday": tod, "gasprice": gas, "diff2vec": blind,
                           "timeofday+diff2vec": blind_concat})
        if args.labels:
            exposure = ingest.service_exposure(active, ingest.load_labels(args.labels), txs)
            p = out.claim(d / "exposure.csv")
            with open(p, "w") as fh:
                fh.write("category,fraction\n")
                for c, f in exposure.items():
                    fh.write(f"{c},{f!r}\n")
            out.sidecar(p)
        _fingerprint_stage(out, d / "fingerprint_report.json", txs, args)
        _write_report(out, report, d / "metrics.json")
    return 0


# --------------------------------------------------------------------------
# parser

def _add_common(p):
    p.add_argument("--config", help="key=value configuration file; flags override it")
    p.add_argument("--seed", type=int)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("-v", "--verbose", action="store_true", default=None)


def _add_features(p):
    p.add_argument("--b-hour", type=int, default=6)
    p.add_argument("--b-gas", type=int, default=50)
    p.add_argument("--gas-clip", type=float, default=5.0)
    p.add_argument("--daily-gas", help="reference daily_gas.csv (date,avg_gas_price_wei)")
    p.add_argument("--min-sent", type=int, default=5)


def _add_walks(p):
    d = emb.WalkParams()
    p.add_argument("--dim", type=int, default=d.dim)
    p.add_argument("--walks-per-node", type=int, default=d.walks_per_node)
    p.add_argument("--cover-size", type=int, default=d.cover_size)
    p.add_argument("--walk-length", type=int, default=d.walk_length)
    p.add_argument("--window", type=int, default=d.window)
    p.add_argument("--negatives", type=int, default=d.negatives)
    p.add_argument("--epochs", type=int, default=d.epochs)
    p.add_argument("--learning-rate", type=float, default=d.learning_rate)


def _add_tornado(p):
    p.add_argument("--events", help="tornado_events.csv")
    p.add_argument("--mixer-address", nargs="*", help="mixer contract addresses ignored by heuristic 3")
    p.add_argument("--h2-scope", choices=("pool", "global"), default="pool")


def _add_fingerprint(p):
    p.add_argument("--digits", type=int, default=9)
    p.add_argument("--cutoffs", default="50,100,500,all")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="chainprofiler", description="Ethereum address profiling and deanonymization metrics")
    parser.add_argument("--version", action="version", version=f"chainprofiler {__version__}")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("ingest", help="validate and normalize a transaction corpus")
    _add_common(p)
    p.add_argument("--transactions")
    p.add_argument("--fetch", nargs="*", help="addresses to fetch from the explorer API")
    p.add_argument("--labels")
    p.add_argument("--min-sent", type=int, default=5)
    p.add_argument("--out-dir")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("features", help="time-of-day and gas-price profiles")
    _add_common(p)
    p.add_argument("--transactions")
    _add_features(p)
    p.add_argument("--out")
    p.set_defaults(func=cmd_features)

    p = sub.add_parser("graph", help="preprocessed transaction graph edge list")
    _add_common(p)
    p.add_argument("--transactions")
    p.add_argument("--out")
    p.set_defaults(func=cmd_graph)

    p = sub.add_parser("embed", help="diff2vec / role2vec node embeddings")
    _add_common(p)
    p.add_argument("--transactions")
    p.add_argument("--method", choices=("diff2vec", "role2vec"), default="diff2vec")
    p.add_argument("--min-sent", type=int, default=5)
    _add_walks(p)
    p.add_argument("--out")
    p.set_defaults(func=cmd_embed)

    p = sub.add_parser("rank", help="rank ENS partners by feature distance")
    _add_common(p)
    p.add_argument("--features")
    p.add_argument("--kind")
    p.add_argument("--pairs")
    p.add_argument("--out")
    p.set_defaults(func=cmd_rank)

    p = sub.add_parser("evaluate", help="average rank, AUC and entropy gain per feature kind")
    _add_common(p)
    p.add_argument("--features")
    p.add_argument("--pairs")
    p.add_argument("--resolution", type=int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("tornado", help="mixer heuristics, links and anonymity series")
    _add_common(p)
    p.add_argument("--transactions")
    _add_tornado(p)
    p.add_argument("--out-dir")
    p.set_defaults(func=cmd_tornado)

    p = sub.add_parser("fingerprint", help="balance fingerprint statistics")
    _add_common(p)
    p.add_argument("--transactions")
    _add_fingerprint(p)
    p.add_argument("--out")
    p.set_defaults(func=cmd_fingerprint)

    p = sub.add_parser("pipeline", help="run every stage end to end")
    _add_common(p)
    p.add_argument("--transactions")
    p.add_argument("--pairs")
    p.add_argument("--labels")
    _add_features(p)
    _add_walks(p)
    _add_tornado(p)
    _add_fingerprint(p)
    p.add_argument("--resolution", type=int)
    p.add_argument("--out-dir")
    p.set_defaults(func=cmd_pipeline)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        if not argv:
            raise UsageError(f"missing subcommand; choose from {', '.join(SUBCOMMANDS)}")
        if argv[0] not in SUBCOMMANDS and not argv[0].startswith("-"):
            raise UsageError(f"unknown subcommand {argv[0]!r}; choose from {', '.join(SUBCOMMANDS)}")
        config = _config_path(argv)
        if config is not None and argv[0] in SUBCOMMANDS:
            _apply_config(parser._subparsers._group_actions[0].choices[argv[0]], config)
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError("missing subcommand")
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        return args.func(args)
    except (UsageError, ConfigInvalid) as exc:
        print(f"chainprofiler: error: {exc}", file=sys.stderr)
        return 2
    except (ChainProfilerError, ValueError) as exc:
        print(f"chainprofiler: error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"chainprofiler: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
