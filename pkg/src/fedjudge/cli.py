"""Command-line front end.

Subcommands:

* run            — one experiment over the configured seeds
* sweep-malice   — accuracy vs malicious fraction (plus a no-screening arm)
* sweep-clients  — judge-creation runtime vs client count
* verify-chain   — check an exported ledger file's links and signatures
* export         — render an exported ledger file as readable text

The report path writes a metrics CSV (fixed column order), a JSON summary,
chain logs, and quick-look PNG figures next to the CSV (suppress with
--no-figures).
"""
from __future__ import annotations

import argparse
import csv
import json
import statistics
import sys
from collections import defaultdict
from pathlib import Path

from . import figures, harness
from .config import apply_overrides, config_to_dict, load_config
from .errors import FedJudgeError
from .harness import CSV_COLUMNS, linear_fit, run_experiment, sweep_clients, \
    sweep_malice
from .ledger import chain_from_bytes, chain_to_bytes, chain_to_text, verify_chain


class _CsvSink:
    """Streams metric rows to disk as they are produced."""

    def __init__(self, path: Path):
        self.fh = open(path, "w", newline="", encoding="utf-8")
        self.writer = csv.writer(self.fh)
        self.writer.writerow(CSV_COLUMNS)
        self.fh.flush()

    def __call__(self, record) -> None:
        self.writer.writerow(record.csv_row())
        self.fh.flush()

    def close(self) -> None:
        self.fh.close()


def _mean_std(values):
    values = list(values)
    mean = statistics.fmean(values)
    std = statistics.pstdev(values) if len(values) > 1 else 0.0
    return {"mean": mean, "std": std, "n": len(values)}


def _final_round_accuracy(records):
    final = max(r.round for r in records)
    return [r.global_acc for r in records
            if r.round == final and r.global_acc is not None]


def _summarize_run(cfg, records) -> dict:
    defined = lambda vals: [v for v in vals if v is not None]  # noqa: E731
    return {
        "config": config_to_dict(cfg),
        "final_global_acc": _mean_std(_final_round_accuracy(records)),
        "tpr": _mean_std(defined(r.tpr for r in records) or [0.0]),
        "fpr": _mean_std(defined(r.fpr for r in records) or [0.0]),
        "f1": _mean_std(defined(r.f1 for r in records) or [0.0]),
    }


def _summarize_malice(cfg, records) -> dict:
    final = max(r.round for r in records)
    arms = defaultdict(lambda: defaultdict(list))
    for r in records:
        if r.round == final and r.global_acc is not None:
            arms[r.experiment][r.malicious_frac].append(r.global_acc)
    return {
        "config": config_to_dict(cfg),
        "final_global_acc": {
            arm: {format(f, ".10g"): _mean_std(accs)
                  for f, accs in sorted(by_frac.items())}
            for arm, by_frac in sorted(arms.items())
        },
    }


def _summarize_clients(cfg, records) -> dict:
    counts = [r.n_clients for r in records]
    totals = [r.judge_ms_train + r.judge_ms_feat + r.judge_ms_forest
              for r in records]
    slope, intercept, r2 = linear_fit(counts, totals)
    return {
        "config": config_to_dict(cfg),
        "per_count": {
            str(r.n_clients): {
                "judge_ms_train": r.judge_ms_train,
                "judge_ms_feat": r.judge_ms_feat,
                "judge_ms_forest": r.judge_ms_forest,
                "judge_ms_total": r.judge_ms_train + r.judge_ms_feat
                                  + r.judge_ms_forest,
            }
            for r in records
        },
        "total_fit": {"slope_ms_per_client": slope, "intercept_ms": intercept,
                      "r2": r2},
    }


def _write_json(path: Path, payload: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _write_chains(out: Path, chains: dict) -> None:
    for (name, seed), chain in chains.items():
        (out / f"chain_{name}_seed{seed}.bin").write_bytes(
            chain_to_bytes(chain))


def _load_chain_file(path: str):
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise FedJudgeError(f"cannot read chain file {path}: {exc}") from exc
    return chain_from_bytes(raw)


def _cmd_run(args) -> int:
    cfg = apply_overrides(load_config(args.config), clients=args.clients,
                          malicious_frac=args.malicious_frac,
                          flip_frac=args.flip_frac, seed=args.seed,
                          rounds=args.rounds)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    sink = _CsvSink(out / "run_metrics.csv")
    try:
        result = run_experiment(cfg, sink)
    finally:
        sink.close()
    _write_json(out / "run_summary.json", _summarize_run(cfg, result.records))
    _write_chains(out, result.chains)
    if not args.no_figures:
        figures.accuracy_over_rounds(result.records,
                                     str(out / "accuracy_rounds.png"))
        figures.detection_over_rounds(result.records,
                                      str(out / "detection_rounds.png"))
    print(f"wrote {len(result.records)} metric rows to {out / 'run_metrics.csv'}")
    return 0


def _cmd_sweep_malice(args) -> int:
    cfg = apply_overrides(load_config(args.config), clients=args.clients,
                          flip_frac=args.flip_frac, seed=args.seed,
                          rounds=args.rounds)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    sink = _CsvSink(out / "sweep_malice_metrics.csv")
    try:
        result = sweep_malice(cfg, sink=sink)
    finally:
        sink.close()
    _write_json(out / "sweep_malice_summary.json",
                _summarize_malice(cfg, result.records))
    _write_chains(out, result.chains)
    if not args.no_figures:
        figures.accuracy_vs_malice(result.records,
                                   str(out / "accuracy_vs_malice.png"))
    print(f"wrote {len(result.records)} metric rows to "
          f"{out / 'sweep_malice_metrics.csv'}")
    return 0


def _cmd_sweep_clients(args) -> int:
    cfg = apply_overrides(load_config(args.config), seed=args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    sink = _CsvSink(out / "sweep_clients_metrics.csv")
    try:
        records = sweep_clients(cfg, sink=sink)
    finally:
        sink.close()
    _write_json(out / "sweep_clients_summary.json",
                _summarize_clients(cfg, records))
    if not args.no_figures:
        figures.runtime_scaling(records, str(out / "runtime_scaling.png"))
    print(f"wrote {len(records)} metric rows to "
          f"{out / 'sweep_clients_metrics.csv'}")
    return 0


def _cmd_verify_chain(args) -> int:
    chain = _load_chain_file(args.chain)
    verdict = verify_chain(chain)
    if verdict.valid:
        print(f"chain valid ({len(chain)} blocks)")
        return 0
    print(f"invalid chain: block {verdict.index}: {verdict.cause}",
          file=sys.stderr)
    return 1


def _cmd_export(args) -> int:
    chain = _load_chain_file(args.chain)
    text = chain_to_text(chain)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
        print(f"wrote {len(chain)} blocks to {args.out}")
    else:
        print(text)
    return 0


def _add_common(sub, *, overrides=True) -> None:
    sub.add_argument("--config", required=True, help="JSON config file")
    sub.add_argument("--out", default=".", help="output directory")
    sub.add_argument("--seed", type=int, default=None,
                     help="replace the config's seed list with one seed")
    sub.add_argument("--no-figures", action="store_true",
                     help="skip PNG rendering")
    if overrides:
        sub.add_argument("--clients", type=int, default=None)
        sub.add_argument("--flip-frac", type=float, default=None)
        sub.add_argument("--rounds", type=int, default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fedjudge",
        description="Poisoning-resistant federated learning simulator",
    )
    subs = parser.add_subparsers(dest="command", required=True)

    run = subs.add_parser("run", help="run one experiment")
    _add_common(run)
    run.add_argument("--malicious-frac", type=float, default=None)
    run.set_defaults(fn=_cmd_run)

    sm = subs.add_parser("sweep-malice",
                         help="sweep the malicious fraction")
    _add_common(sm)
    sm.set_defaults(fn=_cmd_sweep_malice)

    sc = subs.add_parser("sweep-clients",
                         help="sweep the client count for judge runtime")
    _add_common(sc, overrides=False)
    sc.set_defaults(fn=_cmd_sweep_clients)

    vc = subs.add_parser("verify-chain", help="verify an exported chain file")
    vc.add_argument("chain", help="binary chain export")
    vc.set_defaults(fn=_cmd_verify_chain)

    ex = subs.add_parser("export", help="dump an exported chain as text")
    ex.add_argument("chain", help="binary chain export")
    ex.add_argument("--out", default=None, help="write text here (else stdout)")
    ex.set_defaults(fn=_cmd_export)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except FedJudgeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
