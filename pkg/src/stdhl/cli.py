"""Command-line entry point: ``stdhl <command> ...``.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np
import pandas as pd

from .data import (
    TIMESTAMP_FORMAT,
    DataError,
    Normalizer,
    PreparedData,
    load_csv,
    prepare,
    save_csv,
    synth_dataset,
)
from .hypergraph import write_matrix_csv
from .metrics import mae
from .model import (
    BUILTIN_MODELS,
    TRAINABLE_MODELS,
    ModelConfig,
    StdhlModel,
    build_forecaster,
    load_checkpoint,
    save_checkpoint,
)
from .training import NumericalError, TrainConfig, evaluate, predict_batch, train

logger = logging.getLogger("stdhl")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


@dataclass
class RunConfig:
    data_path: str | None = None
    splits: tuple[float, float, float] = (0.70, 0.10, 0.20)
    power_only: bool = False
    output_dir: str = "runs"
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)

    def to_dict(self) -> dict[str, Any]:
        return {
            "data": {"path": self.data_path, "splits": list(self.splits), "power_only": self.power_only},
            "output_dir": self.output_dir,
            "model": self.model.to_dict(),
            "train": self.train.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "RunConfig":
        unknown = set(d) - {"data", "output_dir", "model", "train"}
        if unknown:
            raise UsageError(f"unknown config keys: {sorted(unknown)}")
        data = d.get("data", {})
        bad = set(data) - {"path", "splits", "power_only"}
        if bad:
            raise UsageError(f"unknown data config keys: {sorted(bad)}")
        try:
            model = ModelConfig.from_dict(d.get("model", {}))
            tcfg = TrainConfig.from_dict(d.get("train", {}))
        except (KeyError, TypeError, ValueError) as exc:
            raise UsageError(str(exc)) from exc
        splits = tuple(float(x) for x in data.get("splits", (0.70, 0.10, 0.20)))
        if len(splits) != 3:
            raise UsageError("data.splits needs three fractions")
        return cls(data.get("path"), splits, bool(data.get("power_only", False)),
                   d.get("output_dir", "runs"), model, tcfg)

    @classmethod
    def load(cls, path: str | None) -> "RunConfig":
        cfg = cls() if path is None else cls.from_dict(json.loads(Path(path).read_text()))
        seed = os.environ.get("STDHL_SEED")
        if seed is not None:
            cfg.model.seed = int(seed)
            cfg.train.seed = int(seed)
        return cfg


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _int_list(text: str, allow_zero: bool = False) -> list[int]:
    try:
        values = [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"expected comma-separated integers, got {text!r}") from None
    floor = 0 if allow_zero else 1
    if not values or any(v < floor for v in values):
        kind = "non-negative" if allow_zero else "positive"
        raise UsageError(f"values must be {kind} integers, got {text!r}")
    return values


def _load_series(path):
    if path is None:
        raise UsageError("no data file given (use --data or data.path in the config)")
    if not Path(path).exists():
        raise DataError(f"data file {path} not found")
    series = load_csv(path)
    if not series:
        raise DataError(f"{path} holds no rows")
    return series


def _prepare(series, model_cfg: ModelConfig, run: RunConfig, farms=None, normalizer=None) -> PreparedData:
    return prepare(
        series,
        model_cfg.look_back,
        model_cfg.horizon,
        model_cfg.nwp_extension,
        run.splits,
        run.power_only,
        farms=farms,
        normalizer=normalizer,
    )


def _model_config(run: RunConfig, n_nodes: int, **overrides) -> ModelConfig:
    d = run.model.to_dict()
    d["n_nodes"] = n_nodes
    if run.power_only:
        d["measured_features"] = 0
    if d.get("n_hyperedges") is not None and n_nodes != run.model.n_nodes:
        d["n_hyperedges"] = None
    d.update(overrides)
    return ModelConfig.from_dict(d)


def _fit(name: str, run: RunConfig, data: PreparedData, model_cfg: ModelConfig):
    model = build_forecaster(name, model_cfg, history=data.history)
    result = train(model, data.train, data.val, run.train) if model.trainable else None
    return model, result


def _checkpoint_extra(run: RunConfig, data: PreparedData) -> dict[str, Any]:
    return {
        "farm_ids": data.farm_ids,
        "normalizer": data.normalizer.to_dict(),
        "splits": list(run.splits),
        "power_only": run.power_only,
        "seed": run.model.seed,
    }


def _restore(checkpoint: str, data_path: str, config_path: str | None):
    """Load a checkpoint (or ``builtin:<name>``) and window the data consistently with it."""
    series = _load_series(data_path)
    if checkpoint.startswith("builtin:"):
        name = checkpoint.split(":", 1)[1]
        if name not in BUILTIN_MODELS:
            raise UsageError(f"unknown builtin model '{name}'; choose from {', '.join(BUILTIN_MODELS)}")
        run = RunConfig.load(config_path)
        cfg = _model_config(run, len(series))
        data = _prepare(series, cfg, run)
        return build_forecaster(name, cfg), data, run
    if not Path(checkpoint).exists():
        raise DataError(f"checkpoint {checkpoint} not found")
    try:
        model, extra = load_checkpoint(checkpoint)
    except (ValueError, KeyError, TypeError) as exc:
        raise DataError(f"cannot read checkpoint {checkpoint}: {exc}") from exc
    run = RunConfig(splits=tuple(extra.get("splits", (0.7, 0.1, 0.2))), power_only=extra.get("power_only", False))
    farm_ids = extra.get("farm_ids")
    available = [s.farm_id for s in series]
    if farm_ids and any(f not in available for f in farm_ids):
        raise DataError(f"checkpoint farms {farm_ids} are not all present in {data_path} ({available})")
    if not farm_ids and len(series) != model.config.n_nodes:
        raise DataError(f"checkpoint expects {model.config.n_nodes} farms, data has {len(series)}")
    norm = Normalizer.from_dict(extra["normalizer"]) if "normalizer" in extra else None
    data = _prepare(series, model.config, run, farms=farm_ids, normalizer=norm)
    return model, data, run


def _origin_index(data: PreparedData, origin: str | None) -> tuple[str, int]:
    """Find a window by timestamp (``YYYYMMDD HH:MM``) or integer index into the test partition."""
    batch = data.test
    if origin is None:
        return "test", 0
    try:
        stamp = np.datetime64(pd.Timestamp(pd.to_datetime(origin, format=TIMESTAMP_FORMAT)).to_datetime64(), "m")
    except (ValueError, TypeError):
        try:
            idx = int(origin)
        except ValueError:
            raise UsageError(f"origin {origin!r} is neither a timestamp nor an index") from None
        if not 0 <= idx < len(batch):
            raise UsageError(f"origin index {idx} outside the {len(batch)} test windows")
        return "test", idx
    for part in ("train", "val", "test"):
        hits = np.flatnonzero(getattr(data, part).origins == stamp)
        if hits.size:
            return part, int(hits[0])
    raise DataError(f"no complete window has origin {origin}")


# -- commands ---------------------------------------------------------------------------


def cmd_synth(args) -> int:
    lags = None if args.lags is None else _int_list(args.lags, allow_zero=True)
    series = synth_dataset(
        args.farms, args.length, args.seed, propagation_lags=lags, nwp_bias=args.nwp_bias,
        nwp_lag=args.nwp_lag, noise=args.noise, nwp_noise=args.nwp_noise, memory_lag=args.memory_lag,
    )
    out = Path(args.out)
    if out.parent and not out.parent.exists():
        raise DataError(f"output directory {out.parent} does not exist")
    save_csv(series, out)
    return EXIT_OK


def cmd_config_init(args) -> int:
    text = json.dumps(RunConfig().to_dict(), indent=2) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_train(args) -> int:
    if args.model not in TRAINABLE_MODELS:
        raise UsageError(f"unknown model '{args.model}'; valid names: {', '.join(TRAINABLE_MODELS)}")
    run = RunConfig.load(args.config)
    series = _load_series(args.data or run.data_path)
    cfg = _model_config(run, len(series))
    data = _prepare(series, cfg, run)
    model, result = _fit(args.model, run, data, cfg)
    out = Path(args.out or run.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_checkpoint(out / "checkpoint.json", model, _checkpoint_extra(run, data))
    result.write_history(out / "history.csv")
    logger.info("best epoch %d, validation pinball %.6f", result.best_epoch, result.best_val)
    return EXIT_OK


def cmd_evaluate(args) -> int:
    model, data, _ = _restore(args.checkpoint, args.data, args.config)
    report = evaluate(model, data.test)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    report.to_json(out / "report.json")
    report.to_csv(out / "report.csv", model.name)
    report.horizon_csv(out / "horizon_mae.csv")
    return EXIT_OK


def cmd_forecast(args) -> int:
    model, data, _ = _restore(args.checkpoint, args.data, args.config)
    part, idx = _origin_index(data, args.origin)
    batch = getattr(data, part).subset(slice(idx, idx + 1))
    q = predict_batch(model, batch)
    origin = batch.origins[0]
    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(("time", "farm", "level", "value"))
        for h in range(q.values.shape[-1]):
            stamp = pd.Timestamp(origin + np.timedelta64(h + 1, "h")).strftime(TIMESTAMP_FORMAT)
            for n, farm in enumerate(data.farm_ids):
                for k, level in enumerate(q.levels):
                    w.writerow((stamp, farm, repr(float(level)), repr(float(q.values[0, k, n, h]))))
    return EXIT_OK


def cmd_transfer_matrix(args) -> int:
    model, data, _ = _restore(args.checkpoint, args.data, None)
    if not isinstance(model, StdhlModel):
        raise UsageError(f"model '{model.name}' has no spatial operator")
    part, idx = _origin_index(data, args.origin)
    batch = getattr(data, part).subset(slice(idx, idx + 1))
    if not 0 <= args.block < model.config.n_blocks:
        raise UsageError(f"block must be in [0, {model.config.n_blocks})")
    matrix = model.transfer_matrices(batch.measured, batch.nwp, args.encoder, args.block)[0]
    write_matrix_csv(args.out, matrix, data.farm_ids)
    return EXIT_OK


def _ablation_rows(args, run: RunConfig, series, settings: Sequence[tuple[str, dict[str, Any], Sequence[str] | None]]):
    rows = []
    for label, overrides, farms in settings:
        n_nodes = len(farms) if farms is not None else len(series)
        cfg = _model_config(run, n_nodes, **overrides)
        data = _prepare(series, cfg, run, farms=farms)
        model, _ = _fit(args.model, run, data, cfg)
        if farms is not None:
            q = predict_batch(model, data.test)
            score = mae(data.test.target[:, 0], q.median()[:, 0])
        else:
            score = evaluate(model, data.test).mae
        logger.info("%s: MAE %.5f", label, score)
        rows.append((label, score))
    return rows


def cmd_ablate(args) -> int:
    run = RunConfig.load(args.config)
    series = _load_series(args.data or run.data_path)
    if args.model not in TRAINABLE_MODELS:
        raise UsageError(f"unknown model '{args.model}'; valid names: {', '.join(TRAINABLE_MODELS)}")
    if args.sweep == "lookback":
        values = _int_list(args.values)
        settings = [(str(v), {"look_back": v}, None) for v in values]
        header = ("look_back", "mae")
    elif args.sweep == "nwp-ext":
        values = _int_list(args.values, allow_zero=True)
        settings = [(str(v), {"nwp_extension": v}, None) for v in values]
        header = ("nwp_extension", "mae")
    else:
        ids = [s.farm_id for s in series]
        order = [f for f in args.order.split(",") if f] if args.order else [f for f in ids if f != args.target]
        if args.target not in ids or any(f not in ids for f in order) or args.target in order:
            raise UsageError(f"target/order must name distinct farms among {ids}")
        settings = [(order[k - 1] if k else args.target, {}, [args.target] + order[:k]) for k in range(len(order) + 1)]
        header = ("n_farms", "added_farm", "target_mae")
    rows = _ablation_rows(args, run, series, settings)
    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for k, (label, score) in enumerate(rows):
            if args.sweep == "spatial":
                w.writerow((k + 1, label, repr(score)))
            else:
                w.writerow((label, repr(score)))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="stdhl", description="Spatio-temporal dynamic hypergraph wind power forecasting.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("synth", help="write a synthetic dataset in the GEFCom CSV schema")
    s.add_argument("--farms", type=int, default=10)
    s.add_argument("--length", type=int, default=8760)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--lags", help="comma-separated propagation lag per farm")
    s.add_argument("--nwp-bias", type=float, default=0.5)
    s.add_argument("--nwp-lag", type=int, default=2)
    s.add_argument("--nwp-noise", type=float, default=0.0)
    s.add_argument("--noise", type=float, default=0.02)
    s.add_argument("--memory-lag", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_synth)

    c = sub.add_parser("config", help="configuration helpers")
    csub = c.add_subparsers(dest="action", required=True, parser_class=_Parser)
    ci = csub.add_parser("init", help="print the default run configuration")
    ci.add_argument("--out")
    ci.set_defaults(func=cmd_config_init)

    t = sub.add_parser("train", help="train a model and write checkpoint + history")
    t.add_argument("--config")
    t.add_argument("--model", default="stdhl")
    t.add_argument("--data")
    t.add_argument("--out")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("evaluate", help="score a checkpoint on the test partition")
    e.add_argument("--checkpoint", required=True, help="checkpoint file or builtin:persistence / builtin:mechanism")
    e.add_argument("--data", required=True)
    e.add_argument("--config", help="run config for builtin models")
    e.add_argument("--out", required=True)
    e.set_defaults(func=cmd_evaluate)

    f = sub.add_parser("forecast", help="write the quantile fan for one origin")
    f.add_argument("--checkpoint", required=True)
    f.add_argument("--data", required=True)
    f.add_argument("--origin", help="'YYYYMMDD HH:MM' or index into the test windows")
    f.add_argument("--config")
    f.add_argument("--out", required=True)
    f.set_defaults(func=cmd_forecast)

    a = sub.add_parser("ablate", help="retrain across covariate settings and report MAE")
    asub = a.add_subparsers(dest="sweep", required=True, parser_class=_Parser)
    for name in ("lookback", "nwp-ext", "spatial"):
        ap = asub.add_parser(name)
        ap.add_argument("--config")
        ap.add_argument("--data")
        ap.add_argument("--model", default="stdhl")
        ap.add_argument("--out", required=True)
        if name == "spatial":
            ap.add_argument("--target", required=True)
            ap.add_argument("--order", help="comma-separated farm ids added one at a time")
        else:
            ap.add_argument("--values", required=True)
        ap.set_defaults(func=cmd_ablate)

    m = sub.add_parser("transfer-matrix", help="export the N x N spatial operator for one window")
    m.add_argument("--checkpoint", required=True)
    m.add_argument("--data", required=True)
    m.add_argument("--origin")
    m.add_argument("--encoder", choices=("measured", "nwp"), default="measured")
    m.add_argument("--block", type=int, default=0)
    m.add_argument("--out", required=True)
    m.set_defaults(func=cmd_transfer_matrix)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"stdhl: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, OSError) as exc:
        print(f"stdhl: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericalError as exc:
        print(f"stdhl: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"stdhl: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
