"""Experiment runs: single trainings, the noise x qubits x size grid, curves."""
from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, fields, replace
from itertools import product
from pathlib import Path
from typing import Iterable, Optional, Sequence

from . import dataset as ds
from .hybridnn import (
    HybridModel,
    MetricsHistory,
    TrainConfig,
    evaluate,
    ffnn_baseline,
    load_model,
    train,
)

log = logging.getLogger(__name__)

GRID_NOISE = (0.05, 0.10, 0.25, 0.35)
GRID_QUBITS = (2, 3, 4)
GRID_SAMPLES = (200, 1000, 5000)
GRID_HEADER = "noise,n_qubits,n_samples,seed,test_accuracy"
CURVES_HEADER = "noise,epoch,metric,value"
MODEL_KINDS = ("hybrid", "ffnn")


class ConfigError(ValueError):
    """Invalid experiment setting; ``field`` names the offending option."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


@dataclass(frozen=True)
class ExperimentConfig:
    n_qubits: int = 2
    n_sublayers: int = 4
    noise: float = 0.05
    n_samples: int = 1000
    epochs: int = 20
    learning_rate: float = 0.5
    batch_size: int = 32
    seed: int = 0
    model_kind: str = "hybrid"
    output_dir: str = "run"

    def __post_init__(self):
        for name in ("n_qubits", "n_sublayers", "n_samples", "epochs", "batch_size"):
            value = getattr(self, name)
            if not isinstance(value, int) or isinstance(value, bool) or value < 1:
                raise ConfigError(name, f"must be a positive integer, got {value!r}")
        if not isinstance(self.seed, int) or not 0 <= self.seed < 2**64:
            raise ConfigError("seed", f"must be a 64-bit unsigned integer, got {self.seed!r}")
        if not isinstance(self.noise, (int, float)) or not self.noise >= 0:
            raise ConfigError("noise", f"must be non-negative, got {self.noise!r}")
        if not isinstance(self.learning_rate, (int, float)) or not self.learning_rate > 0:
            raise ConfigError("learning_rate", f"must be positive, got {self.learning_rate!r}")
        if self.model_kind not in MODEL_KINDS:
            raise ConfigError("model_kind", f"must be one of {MODEL_KINDS}, got {self.model_kind!r}")
        if self.n_samples < 10:
            raise ConfigError("n_samples", f"need at least 10 samples to split, got {self.n_samples}")
        if self.batch_size > ds.split_sizes(self.n_samples)[0]:
            raise ConfigError(
                "batch_size",
                f"{self.batch_size} exceeds the training split of {ds.split_sizes(self.n_samples)[0]}",
            )

    @classmethod
    def from_mapping(cls, values: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(values) - known
        if unknown:
            raise ConfigError(sorted(unknown)[0], "unknown config key")
        return cls(**values)

    @classmethod
    def from_json(cls, path, **overrides) -> "ExperimentConfig":
        try:
            values = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError("config", f"cannot read {path}: {exc}") from None
        if not isinstance(values, dict):
            raise ConfigError("config", f"{path} must hold a flat JSON object")
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls.from_mapping(values)

    def train_config(self) -> TrainConfig:
        return TrainConfig(self.learning_rate, self.epochs, self.batch_size, self.seed)

    def build_model(self):
        if self.model_kind == "ffnn":
            return ffnn_baseline(self.seed)
        return HybridModel.create(self.n_qubits, self.n_sublayers, seed=self.seed)


def run_experiment(config: ExperimentConfig, data: Optional[ds.MoonsDataset] = None):
    """Train one model; returns ``(model, history, dataset)``."""
    if data is None:
        data = ds.generate(config.n_samples, config.noise, config.seed)
    model = config.build_model()
    history = train(model, data, config.train_config())
    return model, history, data


def cmd_gen_data(n_samples: int, noise: float, seed: int, out_path) -> ds.MoonsDataset:
    data = ds.generate(n_samples, noise, seed)
    try:
        ds.save_csv(data, out_path)
    except OSError as exc:
        raise OSError(f"cannot write dataset to {out_path}: {exc.strerror or exc}") from exc
    return data


def cmd_train(config: ExperimentConfig, data_path=None) -> tuple[object, MetricsHistory]:
    """Train and write ``metrics.csv``, ``weights.json`` and ``config.json``."""
    data = ds.load_csv(data_path) if data_path else None
    if data is not None and data.split is None:
        data = ds.split(data, config.seed)
    model, history, _ = run_experiment(config, data)
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "metrics.csv").write_text(history.to_csv(), encoding="utf-8", newline="")
    model.save(out / "weights.json")
    (out / "config.json").write_text(json.dumps(asdict(config), indent=1) + "\n", encoding="utf-8")
    return model, history


def cmd_eval(weights_path, data_path, split: str = "test", n_qubits: Optional[int] = None) -> float:
    model = load_model(weights_path)
    if n_qubits is not None:
        have = model.spec.n_qubits if isinstance(model, HybridModel) else None
        if have != n_qubits:
            raise ValueError(
                f"weights in {weights_path} are for n_qubits={have}, config asks for n_qubits={n_qubits}"
            )
    data = ds.load_csv(data_path)
    if data.split is None:
        raise ValueError(f"{data_path} has no split column values")
    if split not in ds.SPLIT_NAMES:
        raise ValueError(f"split must be one of {ds.SPLIT_NAMES}, got {split!r}")
    x, y = data.subset(split)
    n_in = model.layers[0].in_dim
    if x.shape[1] != n_in:
        raise ValueError(f"model expects {n_in} features, data has {x.shape[1]}")
    return evaluate(model, x, y)[1]


# grid


def cell_seed(base_seed: int, noise: float, n_qubits: int, n_samples: int) -> int:
    key = f"{base_seed}:{noise!r}:{n_qubits}:{n_samples}".encode()
    return int.from_bytes(hashlib.blake2b(key, digest_size=8).digest(), "little")


@dataclass(frozen=True, order=True)
class GridCell:
    noise: float
    n_qubits: int
    n_samples: int
    seed: int


@dataclass(frozen=True)
class GridRow:
    cell: GridCell
    test_accuracy: float

    def csv_line(self) -> str:
        c = self.cell
        return f"{c.noise!r},{c.n_qubits},{c.n_samples},{c.seed},{self.test_accuracy!r}"


def grid_cells(
    seeds: Sequence[int],
    noises: Iterable[float] = GRID_NOISE,
    qubits: Iterable[int] = GRID_QUBITS,
    samples: Iterable[int] = GRID_SAMPLES,
) -> list[GridCell]:
    cells = [GridCell(*c) for c in product(noises, qubits, samples, seeds)]
    return sorted(set(cells))


def run_cell(cell: GridCell, base: ExperimentConfig) -> GridRow:
    config = replace(
        base,
        noise=cell.noise,
        n_qubits=cell.n_qubits,
        n_samples=cell.n_samples,
        seed=cell_seed(cell.seed, cell.noise, cell.n_qubits, cell.n_samples),
        model_kind="hybrid",
    )
    _, history, _ = run_experiment(config)
    return GridRow(cell, history.test_accuracy)


def _run_cell_checked(cell: GridCell, base: ExperimentConfig) -> GridRow:
    try:
        return run_cell(cell, base)
    except Exception as exc:
        raise RuntimeError(
            f"grid cell noise={cell.noise} n_qubits={cell.n_qubits} "
            f"n_samples={cell.n_samples} seed={cell.seed} failed: {exc}"
        ) from exc


def run_grid(cells: Sequence[GridCell], base: Optional[ExperimentConfig] = None,
             workers: int = 1) -> list[GridRow]:
    """Run every cell; rows come back in canonical cell order whatever ``workers`` is."""
    if base is None:
        base = ExperimentConfig()
    cells = sorted(cells)
    if workers <= 1:
        rows = []
        for cell in cells:
            rows.append(_run_cell_checked(cell, base))
            log.info("%s -> %.4f", cell, rows[-1].test_accuracy)
        return rows
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_run_cell_checked, cells, [base] * len(cells)))


def grid_csv(rows: Sequence[GridRow]) -> str:
    return "\n".join([GRID_HEADER] + [r.csv_line() for r in rows]) + "\n"


def grid_means(rows: Sequence[GridRow]) -> dict[tuple[float, int, int], float]:
    groups: dict[tuple[float, int, int], list[float]] = {}
    for r in rows:
        groups.setdefault((r.cell.noise, r.cell.n_qubits, r.cell.n_samples), []).append(r.test_accuracy)
    return {k: sum(v) / len(v) for k, v in sorted(groups.items())}


def cmd_grid(seeds: Sequence[int], out_path, base: Optional[ExperimentConfig] = None,
             workers: int = 1, **axes) -> list[GridRow]:
    if not seeds:
        raise ValueError("grid needs at least one seed")
    rows = run_grid(grid_cells(seeds, **axes), base, workers)
    Path(out_path).write_text(grid_csv(rows), encoding="utf-8", newline="")
    return rows


# curves

_METRICS = ("loss", "accuracy", "val_loss", "val_accuracy")


def _read_run(run_dir: Path) -> tuple[str, list[dict[str, str]]]:
    metrics = run_dir / "metrics.csv"
    if not metrics.is_file():
        raise FileNotFoundError(f"missing metrics file {metrics}")
    config_path = run_dir / "config.json"
    if not config_path.is_file():
        raise FileNotFoundError(f"missing run config {config_path}")
    noise = json.loads(config_path.read_text(encoding="utf-8"))["noise"]
    with metrics.open(encoding="utf-8", newline="") as fh:
        return repr(float(noise)), list(csv.DictReader(fh))


def curves_rows(run_dirs: Sequence) -> list[tuple[str, str, str, str]]:
    rows = []
    for run_dir in run_dirs:
        noise, records = _read_run(Path(run_dir))
        for rec in records:
            for metric in _METRICS:
                rows.append((noise, rec["epoch"], metric, rec[metric]))
    rows.sort(key=lambda r: (float(r[0]), int(r[1]), r[2]))
    return rows


def cmd_curves(run_dirs: Sequence, out_path) -> int:
    rows = curves_rows(run_dirs)
    buf = io.StringIO()
    buf.write(CURVES_HEADER + "\n")
    for row in rows:
        buf.write(",".join(row) + "\n")
    Path(out_path).write_text(buf.getvalue(), encoding="utf-8", newline="")
    return len(rows)
