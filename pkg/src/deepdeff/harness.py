"""Experiment runner: executes the method x time-steps matrix per dataset,
aggregates average MAPE across entities, and emits reports and plot data.

A run is fully reproducible: every (entity, method, timesteps, kind) cell
derives its own seed from the master seed, so results do not depend on
execution order or worker count, and two identical runs produce
byte-identical report files.
"""

from __future__ import annotations

import csv
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .data import (
    SplitSpec,
    load_csv,
    preprocess,
    preset,
    read_canonical,
    split,
    write_canonical,
)
from .errors import ConfigError, RunError
from .features import build_samples
from .model import (
    METHODS,
    TrainConfig,
    build_method,
    evaluate,
    predict_batch,
    save_weights,
    train,
)
from .numerics import SeededRng, derive_seed

KINDS = ("deepdeff", "basic")


@dataclass
class ExperimentConfig:
    dataset: str
    files: dict                       # entity id -> csv path
    methods: list
    timesteps: list
    kind: str = "both"                # deepdeff | basic | both
    out_dir: str | None = None
    seed: int = 0
    jobs: int = 1
    hidden_size: int = 20
    dense_size: int = 20
    derived_per_row: bool = True
    split_override: SplitSpec | None = None
    lr: float = 0.01
    dropout: float = 0.2
    epochs: int = 200
    batch_size: int = 32
    patience: int | None = 20
    save_models: bool = False

    def __post_init__(self):
        if not self.files:
            raise ConfigError("config needs at least one entity file")
        if not self.methods:
            raise ConfigError("config needs at least one method")
        if not self.timesteps:
            raise ConfigError("config needs at least one timesteps value")
        for m in self.methods:
            if m not in METHODS:
                raise ConfigError(f"unknown method {m!r}; choose from {sorted(METHODS)}")
        for k in self.timesteps:
            if int(k) < 1:
                raise ConfigError(f"timesteps must be >= 1, got {k}")
        if self.kind not in ("deepdeff", "basic", "both"):
            raise ConfigError(f"kind must be deepdeff|basic|both, got {self.kind!r}")
        preset(self.dataset)  # validates the name

    @property
    def kinds(self) -> tuple:
        return KINDS if self.kind == "both" else (self.kind,)

    @classmethod
    def from_json(cls, path) -> "ExperimentConfig":
        with open(path) as fh:
            raw = json.load(fh)
        return cls.from_dict(raw)

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        files = raw.get("files")
        if files is None and "file" in raw:
            entities = raw.get("entities")
            if not entities:
                raise ConfigError("'file' form needs a nonempty 'entities' list")
            files = {str(e): raw["file"] for e in entities}
        if files is None:
            raise ConfigError("config needs 'files' (entity -> path) or 'file' + 'entities'")

        split_override = None
        if "split" in raw:
            s = raw["split"]
            if s["mode"] == "month-wise":
                split_override = SplitSpec(
                    mode="month-wise",
                    day_boundaries=tuple(s.get("day_boundaries", (21, 26))),
                )
            else:
                split_override = SplitSpec(
                    mode="date-ranges",
                    ranges=tuple(
                        (np.datetime64(a).astype("O"), np.datetime64(b).astype("O"))
                        for a, b in s["ranges"]
                    ),
                )

        tr = raw.get("train", {})
        return cls(
            dataset=raw.get("dataset", "canonical"),
            files={str(k): v for k, v in files.items()},
            methods=list(raw.get("methods", [])),
            timesteps=[int(k) for k in raw.get("timesteps", [])],
            kind=raw.get("kind", "both"),
            out_dir=raw.get("out"),
            seed=int(raw.get("seed", 0)),
            jobs=int(raw.get("jobs", 1)),
            hidden_size=int(raw.get("hidden_size", 20)),
            dense_size=int(raw.get("dense_size", 20)),
            derived_per_row=bool(raw.get("derived_per_row", True)),
            split_override=split_override,
            lr=float(tr.get("lr", 0.01)),
            dropout=float(tr.get("dropout", 0.2)),
            epochs=int(tr.get("epochs", 200)),
            batch_size=int(tr.get("batch_size", 32)),
            patience=tr.get("patience", 20),
            save_models=bool(raw.get("save_models", False)),
        )


@dataclass
class CellResult:
    """One (entity, method, timesteps, kind) outcome."""

    entity: str
    method: str
    timesteps: int
    kind: str
    mape: float | None = None
    n_test: int = 0
    best_epoch: int = -1
    epochs_run: int = 0
    error: str | None = None


@dataclass
class ResultRow:
    method: str
    timesteps: int
    kind: str
    entity_mapes: dict = field(default_factory=dict)
    entity_errors: dict = field(default_factory=dict)

    @property
    def avg_mape(self) -> float | None:
        values = [v for v in self.entity_mapes.values() if v is not None]
        return float(np.mean(values)) if values else None


@dataclass
class ResultTable:
    rows: list

    def row(self, method, timesteps, kind) -> ResultRow | None:
        for r in self.rows:
            if (r.method, r.timesteps, r.kind) == (method, timesteps, kind):
                return r
        return None


# ---------------------------------------------------------------------------
# Per-entity pipeline
# ---------------------------------------------------------------------------

def ingest_entity(config: ExperimentConfig, entity: str):
    """Load and preprocess one entity's raw file into an annotated series."""
    p = preset(config.dataset)
    path = config.files[entity]
    if config.dataset == "canonical":
        series = read_canonical(path, source_id=entity)
    else:
        filter_entity = entity if p.schema.entity_column else None
        series = load_csv(path, p.schema, entity=filter_entity)
        series = replace(series, source_id=entity)
    return preprocess(series, p)


def _split_spec_for(config: ExperimentConfig) -> SplitSpec:
    return config.split_override or preset(config.dataset).split_spec


def _partition_samples(series, samples, spec):
    """Assign samples by target membership: context windows may reach back
    into earlier partitions, targets never do."""
    train_idx, val_idx, test_idx = (
        set(part.indices.tolist()) for part in split(series, spec)
    )
    parts = {"train": [], "val": [], "test": []}
    for sample in samples:
        if sample.target_index in train_idx:
            parts["train"].append(sample)
        elif sample.target_index in val_idx:
            parts["val"].append(sample)
        elif sample.target_index in test_idx:
            parts["test"].append(sample)
    return parts["train"], parts["val"], parts["test"]


def run_entity(config: ExperimentConfig, entity: str) -> list[CellResult]:
    """All matrix cells for one entity; every failure is recorded, not raised."""
    cells_out: list[CellResult] = []
    try:
        series = ingest_entity(config, entity)
        spec = _split_spec_for(config)
    except Exception as exc:  # noqa: BLE001 - entity isolation
        return [
            CellResult(entity, m, k, kind, error=f"{type(exc).__name__}: {exc}")
            for m in config.methods
            for k in config.timesteps
            for kind in config.kinds
        ]

    for k in config.timesteps:
        try:
            samples = build_samples(series, k, derived_per_row=config.derived_per_row)
            train_s, val_s, test_s = _partition_samples(series, samples, spec)
            if not train_s or not val_s or not test_s:
                raise RunError(
                    f"empty partition for K={k}: train={len(train_s)} "
                    f"val={len(val_s)} test={len(test_s)}"
                )
            f_basic = samples[0].basic_seq.shape[1]
        except Exception as exc:  # noqa: BLE001
            cells_out.extend(
                CellResult(entity, m, k, kind, error=f"{type(exc).__name__}: {exc}")
                for m in config.methods
                for kind in config.kinds
            )
            continue

        for method in config.methods:
            for kind in config.kinds:
                cell = CellResult(entity, method, k, kind, n_test=len(test_s))
                try:
                    cell_seed = derive_seed(config.seed, entity, method, k, kind)
                    model = build_method(
                        method,
                        kind,
                        k,
                        f_basic,
                        hidden_size=config.hidden_size,
                        dense_size=config.dense_size,
                        rng=SeededRng(cell_seed),
                    )
                    tc = TrainConfig(
                        lr=config.lr,
                        dropout=config.dropout,
                        epochs=config.epochs,
                        batch_size=config.batch_size,
                        patience=config.patience,
                        loss="mape" if kind == "deepdeff" else "mae",
                        seed=derive_seed(cell_seed, "train"),
                    )
                    _, report = train(model, train_s, val_s, tc)
                    cell.mape = evaluate(model, test_s)
                    cell.best_epoch = report.best_epoch
                    cell.epochs_run = report.epochs_run
                    if config.out_dir:
                        _write_cell_artifacts(
                            config, entity, method, k, kind, model, report, test_s
                        )
                except Exception as exc:  # noqa: BLE001
                    cell.error = f"{type(exc).__name__}: {exc}"
                cells_out.append(cell)
    return cells_out


def _cell_tag(entity, method, k, kind):
    return f"{entity}_{method}_K{k}_{kind}"


def _write_cell_artifacts(config, entity, method, k, kind, model, report, test_samples):
    os.makedirs(config.out_dir, exist_ok=True)
    tag = _cell_tag(entity, method, k, kind)
    curve_path = os.path.join(config.out_dir, f"train_report_{tag}.csv")
    with open(curve_path, "w") as fh:
        fh.write("epoch,train_loss,val_mape\n")
        for i, (tl, vm) in enumerate(zip(report.train_losses, report.val_mapes)):
            fh.write(f"{i},{tl!r},{vm!r}\n")
    if config.save_models:
        save_weights(model, os.path.join(config.out_dir, f"weights_{tag}.npz"))
    emit_plot_data(
        model, test_samples, os.path.join(config.out_dir, f"predictions_{tag}.csv")
    )


# ---------------------------------------------------------------------------
# The matrix
# ---------------------------------------------------------------------------

def run_experiment(config: ExperimentConfig) -> ResultTable:
    """Run every (entity, method, timesteps, kind) cell and tabulate MAPEs."""
    entities = sorted(config.files)
    if config.jobs > 1:
        with ProcessPoolExecutor(max_workers=config.jobs) as pool:
            per_entity = list(pool.map(run_entity, [config] * len(entities), entities))
    else:
        per_entity = [run_entity(config, e) for e in entities]

    cells_flat = [c for group in per_entity for c in group]
    if all(c.error is not None for c in cells_flat):
        raise RunError(
            "no entity produced a result; first error: "
            + next(c.error for c in cells_flat if c.error)
        )

    rows: dict[tuple, ResultRow] = {}
    for kind in config.kinds:
        for method in config.methods:
            for k in config.timesteps:
                rows[(method, k, kind)] = ResultRow(method, int(k), kind)
    for cell in sorted(cells_flat, key=lambda c: c.entity):
        row = rows[(cell.method, cell.timesteps, cell.kind)]
        row.entity_mapes[cell.entity] = cell.mape
        if cell.error is not None:
            row.entity_errors[cell.entity] = cell.error
    return ResultTable(rows=list(rows.values()))


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------

def table_to_dict(table: ResultTable) -> dict:
    return {
        "rows": [
            {
                "method": r.method,
                "timesteps": r.timesteps,
                "kind": r.kind,
                "entity_mapes": {k: r.entity_mapes[k] for k in sorted(r.entity_mapes)},
                "entity_errors": {k: r.entity_errors[k] for k in sorted(r.entity_errors)},
                "avg_mape": r.avg_mape,
            }
            for r in table.rows
        ]
    }


def load_results(path) -> ResultTable:
    """Read results.json back, re-checking that stored averages match the
    per-entity lists they claim to summarize."""
    with open(path) as fh:
        raw = json.load(fh)
    rows = []
    for r in raw["rows"]:
        row = ResultRow(
            method=r["method"],
            timesteps=int(r["timesteps"]),
            kind=r["kind"],
            entity_mapes=r["entity_mapes"],
            entity_errors=r.get("entity_errors", {}),
        )
        stored = r.get("avg_mape")
        recomputed = row.avg_mape
        if stored is not None and (recomputed is None or abs(stored - recomputed) > 1e-9):
            raise ConfigError(
                f"{path}: stored average {stored} disagrees with per-entity list "
                f"for ({row.method}, {row.timesteps}, {row.kind})"
            )
        rows.append(row)
    return ResultTable(rows=rows)


def _sorted_rows(table: ResultTable):
    return sorted(table.rows, key=lambda r: (r.method, r.timesteps, r.kind))


def emit_report(table: ResultTable, out_dir, formats=("csv", "json")) -> list[str]:
    """Write results files; returns the paths written."""
    os.makedirs(out_dir, exist_ok=True)
    written = []
    if "csv" in formats:
        # one line per table row; per-entity lists packed with ';'
        path = os.path.join(out_dir, "results.csv")
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(
                ["method", "timesteps", "kind", "avg_mape", "entities", "mapes", "errors"]
            )
            for r in _sorted_rows(table):
                entities = sorted(r.entity_mapes)
                avg = r.avg_mape
                writer.writerow(
                    [
                        r.method,
                        r.timesteps,
                        r.kind,
                        "" if avg is None else repr(avg),
                        ";".join(entities),
                        ";".join(
                            "" if r.entity_mapes[e] is None else repr(r.entity_mapes[e])
                            for e in entities
                        ),
                        ";".join(r.entity_errors.get(e, "") for e in entities),
                    ]
                )
        written.append(path)
    if "json" in formats:
        path = os.path.join(out_dir, "results.json")
        with open(path, "w") as fh:
            json.dump(table_to_dict(table), fh, indent=2, sort_keys=True)
            fh.write("\n")
        written.append(path)
    if "table" in formats:
        path = os.path.join(out_dir, "results.txt")
        with open(path, "w") as fh:
            fh.write(format_text_table(table))
        written.append(path)
    return written


def format_text_table(table: ResultTable) -> str:
    """Text table with the published column layout:
    Method | Time-steps | Avg.MAPE % (DeepDeFF) | Avg.MAPE % (Basic)."""
    pairs: dict[tuple, dict] = {}
    for r in table.rows:
        pairs.setdefault((r.method, r.timesteps), {})[r.kind] = r.avg_mape
    lines = [
        f"{'Method':<8} {'Time-steps':>10} {'DeepDeFF':>10} {'Basic':>10}",
        "-" * 42,
    ]
    for (method, k), kinds in sorted(pairs.items(), key=lambda x: (x[0][1], x[0][0])):
        dd = kinds.get("deepdeff")
        ba = kinds.get("basic")
        fmt = lambda v: f"{v:.2f}" if v is not None else "-"
        lines.append(f"{method:<8} {k:>10} {fmt(dd):>10} {fmt(ba):>10}")
    return "\n".join(lines) + "\n"


def emit_plot_data(model, test_samples, path) -> None:
    """CSV of (timestamp, actual, predicted), one row per test point."""
    ordered = sorted(test_samples, key=lambda s: s.target_timestamp)
    preds = predict_batch(model, ordered)
    with open(path, "w") as fh:
        fh.write("timestamp,actual,predicted\n")
        for sample, pred in zip(ordered, preds):
            stamp = np.datetime_as_string(sample.target_timestamp, unit="m")
            fh.write(f"{stamp},{sample.target!r},{float(pred)!r}\n")


def ingest_to_cache(config: ExperimentConfig, out_dir) -> list[str]:
    """Build the canonical cache for every entity; returns the paths."""
    os.makedirs(out_dir, exist_ok=True)
    written = []
    for entity in sorted(config.files):
        series = ingest_entity(config, entity)
        path = os.path.join(out_dir, f"cache_{entity}.csv")
        write_canonical(series, path)
        written.append(path)
    return written
