"""``targcn`` command-line entry point.

Exit codes: 0 success, 1 configuration/data error, 2 training diverged.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from pathlib import Path

import torch

from targcn.checkpoint import CheckpointError, load_checkpoint
from targcn.config import ABLATIONS, PRESETS, ConfigError, RunConfig, ablation_config, load_config, parse_overrides
from targcn.evaluation import METRIC_COLUMNS, evaluate
from targcn.ingest import (
    DataFormatError,
    compute_stats,
    dataset_digest,
    load_dataset,
    make_irregular_split,
    make_unseen_split,
    write_split_dir,
    write_vocab,
)
from targcn.kg import ValidationError, build_index
from targcn.training import TrainingDiverged, count_parameters, train

logger = logging.getLogger("targcn")

DATA_ENV = "TARGCN_DATA_DIR"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # usage errors share exit code 1 with config errors; 2 is reserved for divergence
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _data_dir(args) -> Path:
    d = args.data_dir or os.environ.get(DATA_ENV)
    if not d:
        raise UsageError(f"--data-dir is required (or set {DATA_ENV})")
    p = Path(d)
    if not p.is_dir():
        raise FileNotFoundError(f"data directory not found: {p}")
    return p


def _out_dir(args, required=True) -> Path | None:
    if not args.out_dir:
        if required:
            raise UsageError("--out-dir is required")
        return None
    p = Path(args.out_dir)
    p.mkdir(parents=True, exist_ok=True)
    return p


def resolve_config(args) -> RunConfig:
    base = PRESETS[args.preset] if getattr(args, "preset", None) else RunConfig()
    overrides = parse_overrides(args.set or [])
    if args.seed is not None:
        overrides["seed"] = args.seed
    for flag, key in (("score_fn", "score_fn"), ("tie_mode", "tie_mode"), ("filter_mode", "filter_mode")):
        v = getattr(args, flag, None)
        if v is not None:
            overrides[key] = v
    cfg = load_config(args.config, base=base, **overrides)
    print("# resolved config", file=sys.stderr)
    print(cfg.to_text(), end="", file=sys.stderr)
    return cfg


def _provenance(cfg: RunConfig, data_dir: Path | None) -> dict:
    out = {"config": cfg.to_dict(), "config_sha256": cfg.digest()}
    if data_dir is not None:
        out["data_sha256"] = dataset_digest(data_dir)
    return out


def _metrics_row(rep) -> list:
    return [getattr(rep, c) for c in METRIC_COLUMNS]


def _train_and_eval(dataset, cfg: RunConfig, out: Path | None, split: str, threads: int):
    kg = build_index(dataset.augmented("train"), dataset.num_entities, dataset.num_relations, dataset.num_timestamps)
    result = train(dataset, cfg, out_dir=out, kg=kg, threads=1)
    torch.set_num_threads(max(1, threads))
    rep = evaluate(result.model, kg, dataset, split)
    return result, rep


# ---------------------------------------------------------------- commands


def cmd_stats(args) -> int:
    data = _data_dir(args)
    ds = load_dataset(data)
    stats = ds.stats.to_dict()
    print(json.dumps(stats, indent=2))
    out = _out_dir(args, required=False)
    if out is not None:
        _write_json(out / "stats.json", stats)
        write_vocab(out / "entities.tsv", ds.vocab.entities)
        write_vocab(out / "relations.tsv", ds.vocab.relations)
    return 0


def cmd_gen_unseen(args) -> int:
    data, out = _data_dir(args), _out_dir(args)
    ds = load_dataset(data)
    seed = 0 if args.seed is None else args.seed
    train_q, valid_q, test_q = make_unseen_split(ds.train, ds.vocab.calendar(ds.num_timestamps), seed)
    stats = compute_stats(train_q, valid_q, test_q)
    write_split_dir(out, train_q, valid_q, test_q, ds.vocab, stats)
    print(json.dumps(stats.to_dict(), indent=2))
    return 0


def cmd_gen_irregular(args) -> int:
    data, out = _data_dir(args), _out_dir(args)
    ds = load_dataset(data)
    seed = 0 if args.seed is None else args.seed
    train_q, valid_q, test_q, stats = make_irregular_split(ds, seed)
    write_split_dir(out, train_q, valid_q, test_q, ds.vocab, stats)
    print(json.dumps(stats.to_dict(), indent=2))
    return 0


def cmd_train(args) -> int:
    data, out = _data_dir(args), _out_dir(args)
    cfg = resolve_config(args)
    ds = load_dataset(data)
    result = train(ds, cfg, out_dir=out, threads=1)
    summary = {
        "best_epoch": result.best_epoch,
        "best_valid_mrr": result.best_valid_mrr if result.history else None,
        "epochs": len(result.history),
        **_provenance(cfg, data),
    }
    _write_json(out / "report.json", summary)
    return 0


def cmd_eval(args) -> int:
    data = _data_dir(args)
    out = _out_dir(args, required=False)
    ckpt = Path(args.checkpoint) if args.checkpoint else (out / "best.ckpt" if out else None)
    if ckpt is None or not ckpt.is_file():
        raise FileNotFoundError(f"checkpoint not found: {ckpt}")
    torch.set_num_threads(max(1, args.threads or os.cpu_count() or 1))
    model, _, header = load_checkpoint(ckpt)
    ds = load_dataset(data)
    if ds.num_entities != model.num_entities or ds.num_relations != model.num_base_relations:
        raise DataFormatError("checkpoint vocabulary does not match the dataset")
    kg = build_index(ds.augmented("train"), ds.num_entities, ds.num_relations, ds.num_timestamps)
    rep = evaluate(model, kg, ds, args.split or "test", tie_mode=args.tie_mode, filter_mode=args.filter_mode)
    rep.meta.update(_provenance(model.config, data))
    print(json.dumps({k: getattr(rep, k) for k in ("num_queries", *METRIC_COLUMNS)}, indent=2))
    if out is not None:
        rep.write_json(out / f"metrics_{rep.split}.json")
        rep.write_csv(out / f"metrics_{rep.split}.csv")
        rep.write_ranks(out / f"ranks_{rep.split}.tsv")
    return 0


def cmd_ablate(args) -> int:
    data, out = _data_dir(args), _out_dir(args)
    base = resolve_config(args)
    if not args.variant:
        raise UsageError(f"--variant is required; choose from {sorted(ABLATIONS)}")
    cfg = ablation_config(base, args.variant)
    ds = load_dataset(data)
    run_dir = out / args.variant
    result, rep = _train_and_eval(ds, cfg, run_dir, args.split or "test", args.threads or 1)
    diff = {k: list(v) for k, v in base.diff(cfg).items()}
    report = {
        "variant": args.variant,
        "config_diff": diff,
        "split": rep.split,
        "num_queries": rep.num_queries,
        **{c: getattr(rep, c) for c in METRIC_COLUMNS},
        **_provenance(cfg, data),
    }
    _write_json(out / f"ablation_{args.variant}.json", report)
    _write_csv(out / f"ablation_{args.variant}.csv", ["variant", *METRIC_COLUMNS], [[args.variant, *_metrics_row(rep)]])
    print(json.dumps({k: report[k] for k in ("variant", "config_diff", *METRIC_COLUMNS)}, indent=2))
    return 0


def _parse_ranges(text: str) -> list:
    out = []
    for tok in text.split(","):
        tok = tok.strip().lower()
        if not tok:
            continue
        if tok in ("whole", "all", "max", "none"):
            out.append(None)
        else:
            try:
                v = int(tok)
            except ValueError:
                raise UsageError(f"bad search range {tok!r}") from None
            if v < 0:
                raise UsageError(f"bad search range {tok!r}")
            out.append(v)
    if not out:
        raise UsageError("--ranges is empty")
    return out


def cmd_sweep_range(args) -> int:
    data, out = _data_dir(args), _out_dir(args)
    base = resolve_config(args)
    ranges = _parse_ranges(args.ranges or "whole")
    ds = load_dataset(data)
    rows, records = [], []
    for rg in ranges:
        label = "whole" if rg is None else str(rg)
        cfg = base.replace(search_range=rg)
        try:
            _, rep = _train_and_eval(ds, cfg, out / f"range_{label}", args.split or "test", args.threads or 1)
        except (TrainingDiverged, ValueError) as exc:
            print(f"range {label}: failed: {exc}", file=sys.stderr)
            records.append({"range": label, "error": str(exc)})
            continue
        rows.append([label, *_metrics_row(rep)])
        records.append({"range": label, **{c: getattr(rep, c) for c in METRIC_COLUMNS}})
    _write_csv(out / "sweep_range.csv", ["range", *METRIC_COLUMNS], rows)
    _write_json(out / "sweep_range.json", {"rows": records, **_provenance(base, data)})
    for r in rows:
        print(",".join(str(x) for x in r))
    return 0


def cmd_params(args) -> int:
    cfg = resolve_config(args)
    if args.num_entities is not None and args.num_relations is not None:
        n_ent, n_rel = args.num_entities, args.num_relations
    else:
        ds = load_dataset(_data_dir(args))
        n_ent, n_rel = ds.num_entities, ds.num_relations
    total, parts = count_parameters(cfg, n_ent, n_rel)
    report = {"total": total, "breakdown": dict(parts), "num_entities": n_ent, "num_base_relations": n_rel,
              "embedding_size": cfg.embedding_size, "time_dim": cfg.d_time}
    print(json.dumps(report, indent=2))
    out = _out_dir(args, required=False)
    if out is not None:
        _write_json(out / "params.json", report)
        _write_csv(out / "params.csv", ["tensor", "count"], [*parts.items(), ("total", total)])
    return 0


COMMANDS = {
    "stats": cmd_stats,
    "gen-unseen": cmd_gen_unseen,
    "gen-irregular": cmd_gen_irregular,
    "train": cmd_train,
    "eval": cmd_eval,
    "ablate": cmd_ablate,
    "sweep-range": cmd_sweep_range,
    "params": cmd_params,
}


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="targcn", description="Temporal KG completion with TARGCN.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="key = value config file")
        sp.add_argument("--preset", choices=sorted(PRESETS), help="start from a benchmark preset")
        sp.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one config key")
        sp.add_argument("--data-dir", help=f"directory with train/valid/test.txt (default ${DATA_ENV})")
        sp.add_argument("--out-dir")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--threads", type=int)
        sp.add_argument("--score-fn", choices=("distmult", "complex"))
        sp.add_argument("--tie-mode", choices=("pessimistic", "mean"))
        sp.add_argument("--filter-mode", choices=("time-aware", "static"))
        sp.add_argument("--split", choices=("valid", "test"))
        if name == "ablate":
            sp.add_argument("--variant", choices=sorted(ABLATIONS))
        if name == "sweep-range":
            sp.add_argument("--ranges", help="comma-separated search ranges; 'whole' for the full timeline")
        if name == "eval":
            sp.add_argument("--checkpoint")
        if name == "params":
            sp.add_argument("--num-entities", type=int)
            sp.add_argument("--num-relations", type=int, help="base relations, before reciprocals")
    return p


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("TARGCN_LOG", "WARNING"), format="%(asctime)s %(name)s %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except TrainingDiverged as exc:
        print(f"error: training diverged: {exc}", file=sys.stderr)
        return 2
    except (UsageError, ConfigError, DataFormatError, ValidationError, CheckpointError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
