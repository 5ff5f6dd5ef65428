"""Command-line interface.

Subcommands cover the full loop: ``simulate`` writes benchmark datasets,
``train`` fits a model from a JSON run config, ``segment`` labels a sequence
with a fitted model, ``score`` compares mode paths, and ``report`` renders
figures next to the delimited outputs.  Exit codes: 0 success, 2 usage or
config error, 3 data error, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import serialize
from .basis import basis_from_payload
from .composite import (ObservationLayout, ObservationSequence,
                        cartesian_layout, default_dynamics)
from .core import DataError, ModelParams, NumericalError
from .data import (Standardization, format_float, ingest_csv, read_modes_csv,
                   write_modes_csv, write_sequence_csv)
from .inference import EmConfig, em_fit, viterbi
from .metrics import frame_accuracy, seg_score, silhouette
from .simulate import SimConfig, quaternion_system, sweep_system, validation_system

_PRESETS = {
    "validation": lambda cfg: validation_system(cfg),
    "sweep-d1": lambda cfg: sweep_system(1, cfg),
    "sweep-d2": lambda cfg: sweep_system(2, cfg),
    "sweep-d3": lambda cfg: sweep_system(3, cfg),
    "quat": lambda cfg: quaternion_system(cfg),
}


class ConfigError(ValueError):
    """A run config file is malformed; maps to the usage exit code."""


def _cmd_simulate(args) -> int:
    cfg = SimConfig(seed=args.seed, n_sequences=args.sequences,
                    length=args.length)
    seqs, paths = _PRESETS[args.preset](cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    files = []
    for seq, modes in zip(seqs, paths):
        data_name = f"{seq.name}.csv"
        modes_name = f"{seq.name}_modes.csv"
        write_sequence_csv(out / data_name, seq)
        write_modes_csv(out / modes_name, modes)
        files.append({"data": data_name, "modes": modes_name})
    manifest = {
        "preset": args.preset,
        "seed": int(args.seed),
        "n_sequences": int(cfg.n_sequences),
        "length": int(cfg.length),
        "dt": float(cfg.dt),
        "noise_std": float(cfg.noise_std),
        "layout": seqs[0].layout.to_payload(),
        "sequences": files,
    }
    with open(out / "manifest.json", "w") as fh:
        fh.write(serialize.dumps_canonical(manifest))
        fh.write("\n")
    print(f"wrote {len(files)} sequences to {out}")
    return 0


def _load_run_config(path):
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except OSError as err:
        raise ConfigError(f"cannot read config {path}: {err}") from err
    except json.JSONDecodeError as err:
        raise ConfigError(f"{path}: not valid JSON: {err}") from err
    try:
        layout = ObservationLayout.from_payload(doc["layout"])
        n_modes = int(doc["S"])
        if n_modes < 1:
            raise ValueError("S must be >= 1")
        basis_by_block = {name: basis_from_payload(payload)
                          for name, payload in doc.get("basis", {}).items()}
        em_doc = doc.get("em", {})
        em = EmConfig(tol=float(em_doc.get("tol", 1e-5)),
                      max_iters=int(em_doc.get("max_iters", 100)),
                      seed=int(em_doc.get("seed", 0)),
                      restarts=int(em_doc.get("restarts", 5)))
        diagonal = bool(doc.get("diagonal_sigma", False))
    except (KeyError, TypeError, ValueError) as err:
        raise ConfigError(f"{path}: bad run config: {err}") from err
    return layout, n_modes, basis_by_block, em, diagonal


def _data_files(data_dir: Path) -> list[Path]:
    files = sorted(p for p in data_dir.glob("*.csv")
                   if not p.name.endswith("_modes.csv"))
    if not files:
        raise DataError(f"no sequence CSVs found in {data_dir}")
    return files


def _cmd_train(args) -> int:
    layout, n_modes, basis_by_block, em, diagonal = _load_run_config(args.config)
    raw = ingest_csv(_data_files(Path(args.data)), layout)
    std = Standardization.fit(raw)
    train_seqs = [std.apply(s) for s in raw]

    try:
        proto = default_dynamics(layout, basis_by_block)
    except ValueError as err:
        raise ConfigError(f"bad basis configuration: {err}") from err
    template = ModelParams(init=np.full(n_modes, 1.0 / n_modes),
                           trans=np.full((n_modes, n_modes), 1.0 / n_modes),
                           emissions=(proto,) * n_modes, layout=layout)
    model, trace = em_fit(train_seqs, template, em, diagonal=diagonal)
    model = model.replace(standardization=std)
    serialize.save_model(model, args.out)
    if args.trace:
        with open(args.trace, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["iter", "loglik"])
            for i, ll in enumerate(trace):
                writer.writerow([i, format_float(ll)])
    print(f"fitted {n_modes}-mode model on {len(train_seqs)} sequences, "
          f"final loglik {trace[-1]:.6f} -> {args.out}")
    return 0


def _standardized(model: ModelParams, seq):
    if model.standardization is None:
        return seq
    return model.standardization.apply(seq)


def _cmd_segment(args) -> int:
    model = serialize.load_model(args.model)
    seq = ingest_csv([args.data], model.layout)[0]
    result = viterbi(model, _standardized(model, seq))
    write_modes_csv(args.out, result.path)
    print(f"segmented {seq.name}: {result.path.size} steps, "
          f"log joint {result.log_joint:.6f} -> {args.out}")
    return 0


def _cmd_score(args) -> int:
    pred = read_modes_csv(args.pred)
    truth = read_modes_csv(args.truth)
    if pred.size != truth.size:
        raise DataError("prediction and reference paths differ in length")
    sil = None
    if args.data:
        if args.model:
            model = serialize.load_model(args.model)
            seq = ingest_csv([args.data], model.layout)[0]
            rows = _standardized(model, seq).values
        else:
            rows = _raw_numeric_rows(args.data)
        if rows.shape[0] != pred.size + 1:
            raise DataError("data length does not match the mode paths")
        sil = silhouette(rows[1:], pred)
    doc = {"seg_score": seg_score(pred, truth),
           "silhouette": sil,
           "frame_accuracy": frame_accuracy(pred, truth)}
    print(serialize.dumps_canonical(doc))
    return 0


def _raw_numeric_rows(path) -> np.ndarray:
    """Read a sequence CSV without a layout: any numeric table with a header."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise DataError(f"{path}: empty file")
        rows = []
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                rows.append([float(c) for c in row])
            except ValueError as err:
                raise DataError(f"{path}: unparseable value at line "
                                f"{line_no}") from err
    if not rows:
        raise DataError(f"{path}: no data rows")
    return np.asarray(rows, dtype=float)


def _cmd_report(args) -> int:
    from . import report

    pred = read_modes_csv(args.pred)
    truth = read_modes_csv(args.truth) if args.truth else None
    if args.model:
        model = serialize.load_model(args.model)
        seq = ingest_csv([args.data], model.layout)[0]
    else:
        rows = _raw_numeric_rows(args.data)
        seq = ObservationSequence(rows, cartesian_layout(rows.shape[1]),
                                  name=Path(args.data).stem)
    if pred.size != seq.n_steps:
        raise DataError("mode path length does not match the data")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    seg_path = out / "segmentation.png"
    report.render_segmentation(seq, pred, truth, seg_path)
    written = [str(seg_path)]
    if args.trace:
        with open(args.trace, newline="") as fh:
            reader = csv.reader(fh)
            next(reader, None)
            trace = np.array([float(row[1]) for row in reader if row])
        trace_path = out / "loglik_trace.png"
        report.render_loglik_trace(trace, trace_path)
        written.append(str(trace_path))
    print("wrote " + ", ".join(written))
    return 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="arhmm",
        description="Switching autoregressive dynamics: simulate, fit, "
                    "segment, score, report.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="write a benchmark dataset as CSV")
    p.add_argument("--preset", required=True, choices=sorted(_PRESETS))
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--sequences", type=int, default=50)
    p.add_argument("--length", type=int, default=100)
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("train", help="fit a model by EM from a run config")
    p.add_argument("--config", required=True)
    p.add_argument("--data", required=True, help="directory of sequence CSVs")
    p.add_argument("--out", required=True, help="output model JSON")
    p.add_argument("--trace", help="optional per-iteration loglik CSV")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("segment", help="label one sequence with a fitted model")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True, help="sequence CSV")
    p.add_argument("--out", required=True, help="output mode-path CSV")
    p.set_defaults(func=_cmd_segment)

    p = sub.add_parser("score", help="compare a predicted path to a reference")
    p.add_argument("--pred", required=True)
    p.add_argument("--truth", required=True)
    p.add_argument("--data", help="sequence CSV, enables the silhouette score")
    p.add_argument("--model", help="model JSON; silhouette then uses "
                                   "standardized values")
    p.set_defaults(func=_cmd_score)

    p = sub.add_parser("report", help="render figures for a segmentation run")
    p.add_argument("--data", required=True, help="sequence CSV")
    p.add_argument("--pred", required=True, help="predicted mode-path CSV")
    p.add_argument("--truth", help="reference mode-path CSV")
    p.add_argument("--model", help="model JSON used to interpret the data")
    p.add_argument("--trace", help="EM loglik trace CSV")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=_cmd_report)
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    except DataError as err:
        print(f"error: {err}", file=sys.stderr)
        return 3
    except NumericalError as err:
        print(f"error: {err}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
