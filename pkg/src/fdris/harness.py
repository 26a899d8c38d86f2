"""Experiment orchestration: configs, the training loop, NMSE sweeps, reports.

The harness trains the attention network on a simulated pilot-exchange
dataset, then sweeps signal-to-noise ratio, surface size, pilot length,
Rician K-factor and amplitude error, recording per-channel NMSE for the
network and for the least-squares baseline on byte-identical test signals.
"""

from __future__ import annotations

import csv
import json
import os
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .dataset import (
    DatasetConfig,
    GraphSample,
    generate_dataset,
    split,
    stack_features,
)
from .channel import DEFAULT_POLYNOMIAL, PilotSequence, gen_pn_sequence
from .estimators import ls_estimate_pair, nmse
from .nn.model import (
    ModelDims,
    ModelParameters,
    forward,
    init_parameters,
    loss,
    save_checkpoint,
)
from .nn.optim import adam_step
from .seeding import derive_seed, float_bits

SEED_ENV_VAR = "FDRIS_SEED"

# independent seed streams hanging off the experiment seed
_SPLIT_STREAM = 1
_INIT_STREAM = 2
_SHUFFLE_STREAM = 3
_DROPOUT_STREAM = 4
_EVAL_STREAM = 5

_EVAL_CHUNK = 2048

CSV_HEADER = ("estimator", "channel", "snr_db", "n_elements", "m_pilots",
              "k_factor", "epsilon", "seed", "nmse_linear", "nmse_db")


def snr_grid(start_db: float, stop_db: float, step_db: float = 2.0) -> tuple[float, ...]:
    """Inclusive dB grid, e.g. ``snr_grid(-30, 0)`` -> -30, -28, ..., 0."""
    count = int(round((stop_db - start_db) / step_db)) + 1
    return tuple(start_db + i * step_db for i in range(count))


DEFAULT_TRAIN_SNR_GRID = snr_grid(-30.0, 0.0)
DEFAULT_TEST_SNR_GRID = snr_grid(-30.0, 10.0)
DEFAULT_TEST_K_FACTORS = (0.0, 4.0, 8.0, 10.0, 12.0)
DEFAULT_TEST_SWITCHING_ERRORS = (0.0, 1e-1, 1e-2, 1e-3)


@dataclass(frozen=True)
class ExperimentConfig:
    """One experiment: dataset, training, and evaluation-grid settings."""

    # problem size
    n_elements: int = 128
    m_pilots: int = 16
    # dataset
    train_snr_grid_db: tuple[float, ...] = DEFAULT_TRAIN_SNR_GRID
    train_samples_per_snr: int = 1000
    k_factor: float = 10.0
    switching_error: float = 0.0
    polynomial: int = DEFAULT_POLYNOMIAL
    pilot_seed: int = 1
    station_pilot_seed: int | None = None
    terminal_power: float = 1.0
    station_power: float = 1.0
    noiseless: bool = False
    normalize: bool = False
    # training
    epochs: int = 20
    patience: int = 5
    learning_rate: float = 1e-3
    weight_decay: float = 5e-4
    dropout_rate: float = 0.5
    batch_size: int = 64
    deterministic: bool = True
    seed: int = 0
    # evaluation grid
    test_snr_grid_db: tuple[float, ...] = DEFAULT_TEST_SNR_GRID
    test_samples_per_point: int = 500
    test_k_factors: tuple[float, ...] = DEFAULT_TEST_K_FACTORS
    test_switching_errors: tuple[float, ...] = DEFAULT_TEST_SWITCHING_ERRORS
    test_n_elements: tuple[int, ...] = (128, 256)
    output_dir: str = "runs"

    def __post_init__(self) -> None:
        if self.epochs < 0 or self.patience < 1 or self.batch_size < 1:
            raise ValueError("epochs must be >= 0, patience and batch_size positive")
        if self.learning_rate <= 0.0 or self.weight_decay < 0.0:
            raise ValueError("learning_rate must be positive, weight_decay nonnegative")
        for name in ("train_snr_grid_db", "test_snr_grid_db", "test_k_factors",
                     "test_switching_errors", "test_n_elements"):
            object.__setattr__(self, name, tuple(getattr(self, name)))

    def dataset_config(self) -> DatasetConfig:
        return DatasetConfig(
            n_elements=self.n_elements,
            m_pilots=self.m_pilots,
            snr_grid_db=self.train_snr_grid_db,
            samples_per_snr=self.train_samples_per_snr,
            master_seed=self.seed,
            k_factor=self.k_factor,
            switching_error=self.switching_error,
            polynomial=self.polynomial,
            pilot_seed=self.pilot_seed,
            station_pilot_seed=self.station_pilot_seed,
            terminal_power=self.terminal_power,
            station_power=self.station_power,
            amplitude_gain=1.0,
            normalize=self.normalize,
            noiseless=self.noiseless,
        )

    def model_dims(self, n_elements: int | None = None) -> ModelDims:
        return ModelDims(
            m_pilots=self.m_pilots,
            n_elements=self.n_elements if n_elements is None else n_elements,
            dropout_rate=self.dropout_rate,
        )

    def to_dict(self) -> dict:
        data = asdict(self)
        for key, value in data.items():
            if isinstance(value, tuple):
                data[key] = list(value)
        return data

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def load(cls, path=None, env: dict | None = None) -> "ExperimentConfig":
        """Defaults, overlaid with a JSON file, overlaid with the seed env var."""
        data: dict = {}
        if path is not None:
            data.update(json.loads(Path(path).read_text()))
        config = cls.from_dict(data)
        env = os.environ if env is None else env
        if SEED_ENV_VAR in env:
            config = cls.from_dict({**config.to_dict(), "seed": int(env[SEED_ENV_VAR])})
        return config


def write_resolved_config(config: ExperimentConfig, directory) -> Path:
    """Record the fully resolved config next to a run's outputs."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    path = directory / "config_resolved.json"
    path.write_text(json.dumps(config.to_dict(), indent=2) + "\n")
    return path


# -- training -------------------------------------------------------------------

class TrainingDivergedError(RuntimeError):
    """Raised when a batch produces a non-finite loss; carries the batch."""

    def __init__(self, epoch: int, batch_indices, loss_value: float,
                 batch_x=None, batch_labels=None):
        super().__init__(
            f"non-finite loss {loss_value!r} in epoch {epoch} on a batch of "
            f"{0 if batch_indices is None else len(batch_indices)} samples"
        )
        self.epoch = epoch
        self.batch_indices = batch_indices
        self.loss_value = loss_value
        self.batch_x = batch_x
        self.batch_labels = batch_labels


@dataclass
class TrainingLog:
    """Loss trajectory and the identity of the restored checkpoint."""

    initial_validation_loss: float
    train_losses: list[float] = field(default_factory=list)
    validation_losses: list[float] = field(default_factory=list)
    best_epoch: int = 0  # 0 means the initialization was never improved on
    best_validation_loss: float = float("inf")
    stopped_early: bool = False
    wall_time_s: float = 0.0
    checkpoint_path: str | None = None
    normalization: dict | None = None

    def deterministic_fields(self) -> dict:
        """Everything that must reproduce exactly across identical runs."""
        return {
            "initial_validation_loss": self.initial_validation_loss,
            "train_losses": list(self.train_losses),
            "validation_losses": list(self.validation_losses),
            "best_epoch": self.best_epoch,
            "best_validation_loss": self.best_validation_loss,
            "stopped_early": self.stopped_early,
            "normalization": self.normalization,
        }

    def to_dict(self) -> dict:
        data = self.deterministic_fields()
        data["wall_time_s"] = self.wall_time_s
        data["checkpoint_path"] = self.checkpoint_path
        return data


def _penalty(model: ModelParameters, l2: float) -> float:
    if l2 == 0.0:
        return 0.0
    return l2 * sum(float(np.sum(w.data ** 2)) for w in model.weight_parameters().values())


def _validation_loss(model: ModelParameters, x: np.ndarray, labels: np.ndarray,
                     l2: float) -> float:
    """Eval-mode MSE over the whole set plus the same L2 term training uses."""
    squared_error = 0.0
    for start in range(0, len(x), _EVAL_CHUNK):
        chunk = slice(start, start + _EVAL_CHUNK)
        pred = forward(model, x[chunk], mode="eval").data
        squared_error += float(np.sum((pred - labels[chunk]) ** 2))
    return squared_error / labels.size + _penalty(model, l2)


def train(
    config: ExperimentConfig,
    samples: list[GraphSample] | None = None,
    checkpoint_dir=None,
    normalization: dict | None = None,
) -> tuple[ModelParameters, TrainingLog]:
    """Mini-batch training with early stopping on validation loss.

    Returns the best-validation parameters (the initialization if no epoch
    improved on it) and the full loss trajectory.  A non-finite batch loss
    aborts with the offending batch attached to the exception.

    When the config standardizes features, the training-set statistics land in
    the log and the checkpoint so evaluation can apply the same transform;
    pass ``normalization`` explicitly when supplying pre-standardized samples.
    """
    if samples is None:
        samples, manifest = generate_dataset(config.dataset_config())
        normalization = manifest.normalization
    train_set, val_set = split(samples, seed=derive_seed(config.seed, _SPLIT_STREAM))
    x_train, y_train = stack_features(train_set)
    x_val, y_val = stack_features(val_set)

    dims = config.model_dims(n_elements=train_set[0].meta.n_elements)
    model = init_parameters(dims, np.random.default_rng(derive_seed(config.seed, _INIT_STREAM)))
    shuffle_rng = np.random.default_rng(derive_seed(config.seed, _SHUFFLE_STREAM))
    dropout_rng = np.random.default_rng(derive_seed(config.seed, _DROPOUT_STREAM))

    started = time.perf_counter()
    initial_val = _validation_loss(model, x_val, y_val, config.weight_decay)
    log = TrainingLog(initial_validation_loss=initial_val,
                      best_validation_loss=initial_val,
                      normalization=normalization)
    best = model.copy()
    stagnant = 0

    for epoch in range(1, config.epochs + 1):
        order = shuffle_rng.permutation(len(x_train))
        epoch_loss = 0.0
        for start in range(0, len(order), config.batch_size):
            batch = order[start:start + config.batch_size]
            model.zero_grad()
            objective = loss(
                forward(model, x_train[batch], mode="train", rng=dropout_rng),
                y_train[batch], model=model, l2=config.weight_decay,
            )
            value = objective.data.item()
            if not np.isfinite(value):
                raise TrainingDivergedError(epoch, batch, value,
                                            x_train[batch], y_train[batch])
            objective.backward()
            adam_step(model, lr=config.learning_rate)
            epoch_loss += value * len(batch)
        log.train_losses.append(epoch_loss / len(order))

        val = _validation_loss(model, x_val, y_val, config.weight_decay)
        if not np.isfinite(val):
            raise TrainingDivergedError(epoch, None, val)
        log.validation_losses.append(val)
        if val < log.best_validation_loss:
            log.best_validation_loss = val
            log.best_epoch = epoch
            best = model.copy()
            stagnant = 0
        else:
            stagnant += 1
            if stagnant >= config.patience:
                log.stopped_early = True
                break

    log.wall_time_s = time.perf_counter() - started
    if checkpoint_dir is not None:
        path = save_checkpoint(
            best, checkpoint_dir, seed=config.seed,
            hyperparameters={
                "learning_rate": config.learning_rate,
                "weight_decay": config.weight_decay,
                "dropout_rate": config.dropout_rate,
                "batch_size": config.batch_size,
                "epochs": config.epochs,
                "patience": config.patience,
                "normalization": normalization,
            })
        log.checkpoint_path = str(path)
        (Path(checkpoint_dir) / "training_log.json").write_text(
            json.dumps(log.to_dict(), indent=2) + "\n")
    return best, log


# -- evaluation -------------------------------------------------------------------

@dataclass(frozen=True)
class EvalPoint:
    """One cell of the test grid."""

    snr_db: float
    n_elements: int
    m_pilots: int
    k_factor: float
    switching_error: float


@dataclass(frozen=True)
class NmseRecord:
    """One measured curve point: an estimator, a channel, a grid cell."""

    estimator: str
    channel: str
    snr_db: float
    n_elements: int
    m_pilots: int
    k_factor: float
    epsilon: float
    seed: int
    nmse_linear: float
    nmse_db: float


def make_record(estimator: str, channel: str, point: EvalPoint, seed: int,
                nmse_linear: float) -> NmseRecord:
    return NmseRecord(
        estimator=estimator,
        channel=channel,
        snr_db=point.snr_db,
        n_elements=point.n_elements,
        m_pilots=point.m_pilots,
        k_factor=point.k_factor,
        epsilon=point.switching_error,
        seed=seed,
        nmse_linear=nmse_linear,
        nmse_db=10.0 * float(np.log10(nmse_linear)) if nmse_linear > 0.0 else -np.inf,
    )


def eval_points(
    config: ExperimentConfig,
    snr_grid_db: tuple[float, ...] | None = None,
    k_factors: tuple[float, ...] | None = None,
    switching_errors: tuple[float, ...] | None = None,
    n_elements: int | None = None,
    m_pilots: int | None = None,
) -> list[EvalPoint]:
    """The cartesian test grid, SNR-major, defaulting to the base condition."""
    points = []
    for k in (config.k_factor,) if k_factors is None else k_factors:
        for eps in (config.switching_error,) if switching_errors is None else switching_errors:
            for snr in config.test_snr_grid_db if snr_grid_db is None else snr_grid_db:
                points.append(EvalPoint(
                    snr_db=float(snr),
                    n_elements=config.n_elements if n_elements is None else n_elements,
                    m_pilots=config.m_pilots if m_pilots is None else m_pilots,
                    k_factor=float(k),
                    switching_error=float(eps),
                ))
    return points


def _point_seed(config: ExperimentConfig, point: EvalPoint) -> int:
    """Value-based seed: every estimator sees identical bytes at a grid cell."""
    return derive_seed(
        config.seed,
        _EVAL_STREAM,
        float_bits(point.snr_db),
        point.n_elements,
        point.m_pilots,
        float_bits(point.k_factor),
        float_bits(point.switching_error),
    )


def point_samples(config: ExperimentConfig, point: EvalPoint) -> list[GraphSample]:
    """Fresh test samples for one grid cell, deterministic in (config, point)."""
    cell = DatasetConfig(
        n_elements=point.n_elements,
        m_pilots=point.m_pilots,
        snr_grid_db=(point.snr_db,),
        samples_per_snr=config.test_samples_per_point,
        master_seed=_point_seed(config, point),
        k_factor=point.k_factor,
        switching_error=point.switching_error,
        polynomial=config.polynomial,
        pilot_seed=config.pilot_seed,
        station_pilot_seed=config.station_pilot_seed,
        terminal_power=config.terminal_power,
        station_power=config.station_power,
        normalize=False,
        noiseless=config.noiseless,
    )
    return generate_dataset(cell)[0]


def model_estimator(model: ModelParameters, normalization: dict | None = None):
    """Wrap a trained model as a batch estimator returning (h_hat, g_hat).

    ``normalization`` is the training-set standardization, applied to every
    input so the model sees the feature scale it was fitted on.
    """

    def run(samples: list[GraphSample]) -> tuple[np.ndarray, np.ndarray]:
        x, _ = stack_features(samples)
        if normalization is not None:
            x = (x - normalization["mean"]) / normalization["std"]
        chunks = [forward(model, x[start:start + _EVAL_CHUNK], mode="eval").data
                  for start in range(0, len(x), _EVAL_CHUNK)]
        out = np.concatenate(chunks)
        n = model.dims.n_elements
        if model.dims.output_mode == "complex_pair":
            return (out[:, :n] + 1j * out[:, n:2 * n],
                    out[:, 2 * n:3 * n] + 1j * out[:, 3 * n:])
        return out[:, :n] + 0j, out[:, n:] + 0j

    return run


def _edge_pilots(sample: GraphSample) -> PilotSequence:
    """Rebuild the pilot burst stored on the sample's single edge."""
    symbols = sample.edge_attr[0, 1].astype(np.float64).astype(np.complex128)
    bits = ((1.0 - symbols.real) / 2.0).astype(np.uint8)
    return PilotSequence(symbols=symbols, bits=bits, polynomial=0, seed=0)


def ls_estimator(samples: list[GraphSample],
                 station_pilots: PilotSequence | None = None
                 ) -> tuple[np.ndarray, np.ndarray]:
    """Least squares on each sample's burst, using the pilots off the edge.

    ``station_pilots`` only matters when the two ends transmitted different
    bursts; by default the edge pilots are matched against both channels.
    """
    h_rows, g_rows = [], []
    for s in samples:
        burst = s.x[0].astype(np.float64) + 1j * s.x[1].astype(np.float64)
        pilots = _edge_pilots(s)
        remote = pilots if station_pilots is None else station_pilots
        h_hat, g_hat = ls_estimate_pair(burst, pilots, remote, s.meta.n_elements)
        h_rows.append(h_hat)
        g_rows.append(g_hat)
    return np.stack(h_rows), np.stack(g_rows)


def _ls_estimator_for(config: ExperimentConfig):
    def run(samples: list[GraphSample]) -> tuple[np.ndarray, np.ndarray]:
        station = None
        if config.station_pilot_seed is not None and samples:
            station = gen_pn_sequence(samples[0].meta.m_pilots,
                                      polynomial=config.polynomial,
                                      seed=config.station_pilot_seed)
        return ls_estimator(samples, station_pilots=station)

    return run


def evaluate(
    model: ModelParameters | None,
    config: ExperimentConfig,
    points: list[EvalPoint] | None = None,
    estimator=None,
    estimator_name: str = "gat",
    normalization: dict | None = None,
) -> list[NmseRecord]:
    """Mean per-sample NMSE of an estimator at every grid cell.

    With no injected ``estimator`` the trained model is wrapped; its
    dimension chain must match every point and ``normalization`` (the
    statistics the model was trained under, if any) is applied to its
    inputs.  Two records per cell (channel h, then channel g).
    """
    if points is None:
        points = eval_points(config)
    if estimator is None:
        if model is None:
            raise ValueError("evaluate needs a model or an injected estimator")
        for point in points:
            if (model.dims.n_elements != point.n_elements
                    or model.dims.m_pilots != point.m_pilots):
                raise ValueError(
                    f"checkpoint is sized ({model.dims.n_elements}, "
                    f"{model.dims.m_pilots}) but the grid asks for "
                    f"({point.n_elements}, {point.m_pilots})"
                )
        estimator = model_estimator(model, normalization)

    records = []
    for point in points:
        samples = point_samples(config, point)
        h_hat, g_hat = estimator(samples)
        h_values, g_values = [], []
        for i, s in enumerate(samples):
            h_true, g_true = s.label_complex()
            h_values.append(nmse(h_true, h_hat[i]))
            g_values.append(nmse(g_true, g_hat[i]))
        records.append(make_record(estimator_name, "h", point, config.seed,
                                   float(np.mean(h_values))))
        records.append(make_record(estimator_name, "g", point, config.seed,
                                   float(np.mean(g_values))))
    return records


def run_ls_baseline(config: ExperimentConfig,
                    points: list[EvalPoint] | None = None) -> list[NmseRecord]:
    """The least-squares baseline over the same signals the model sees."""
    return evaluate(None, config, points=points,
                    estimator=_ls_estimator_for(config), estimator_name="ls")


# -- reporting -------------------------------------------------------------------

def write_records_csv(records: list[NmseRecord], path) -> Path:
    """CSV with the fixed header; floats printed with round-trip precision."""
    if not records:
        raise ValueError("no records to write")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(CSV_HEADER)
        for r in records:
            writer.writerow([
                r.estimator, r.channel, repr(r.snr_db), r.n_elements,
                r.m_pilots, repr(r.k_factor), repr(r.epsilon), r.seed,
                repr(r.nmse_linear), repr(r.nmse_db),
            ])
    return path


def parse_records_csv(path) -> list[NmseRecord]:
    with Path(path).open(newline="") as handle:
        reader = csv.reader(handle)
        header = tuple(next(reader))
        if header != CSV_HEADER:
            raise ValueError(f"unexpected CSV header: {header}")
        records = []
        for row in reader:
            records.append(NmseRecord(
                estimator=row[0], channel=row[1], snr_db=float(row[2]),
                n_elements=int(row[3]), m_pilots=int(row[4]),
                k_factor=float(row[5]), epsilon=float(row[6]), seed=int(row[7]),
                nmse_linear=float(row[8]), nmse_db=float(row[9]),
            ))
    return records


def _series(records: list[NmseRecord]) -> list[dict]:
    ordered = sorted(records, key=lambda r: r.snr_db)
    return [{"snr_db": r.snr_db, "nmse_linear": r.nmse_linear, "nmse_db": r.nmse_db}
            for r in ordered]


def summarize(records: list[NmseRecord], baseline_n: int | None = None) -> dict:
    """Group records into the four reported sweeps.

    * estimator comparison: every (estimator, channel) curve at the base
      condition (K = 10, no amplitude error).
    * size sweep: channel h curves per surface size.
    * k sweep: channel h curves at K in {0, 4, 8, 10, 12}.
    * amplitude-error sweep: channel h curves per error level.
    """
    if not records:
        raise ValueError("no records to summarize")
    if baseline_n is None:
        baseline_n = min(r.n_elements for r in records)
    base = [r for r in records if r.k_factor == 10.0 and r.epsilon == 0.0]

    fig3 = []
    for estimator in sorted({r.estimator for r in base}):
        for channel in ("h", "g"):
            curve = [r for r in base if r.estimator == estimator
                     and r.channel == channel and r.n_elements == baseline_n]
            if curve:
                fig3.append({"estimator": estimator, "channel": channel,
                             "n_elements": baseline_n, "points": _series(curve)})

    gat_h = [r for r in records if r.estimator == "gat" and r.channel == "h"]
    fig4 = []
    for n in sorted({r.n_elements for r in gat_h}):
        curve = [r for r in gat_h if r.n_elements == n
                 and r.k_factor == 10.0 and r.epsilon == 0.0]
        if curve:
            fig4.append({"n_elements": n, "points": _series(curve)})

    fig5 = []
    for k in (0.0, 4.0, 8.0, 10.0, 12.0):
        curve = [r for r in gat_h if r.k_factor == k and r.epsilon == 0.0
                 and r.n_elements == baseline_n]
        if curve:
            fig5.append({"k_factor": k, "points": _series(curve)})

    fig6 = []
    for eps in sorted({r.epsilon for r in gat_h}):
        curve = [r for r in gat_h if r.epsilon == eps and r.k_factor == 10.0
                 and r.n_elements == baseline_n]
        if curve:
            fig6.append({"epsilon": eps, "points": _series(curve)})

    return {"fig3": fig3, "fig4": fig4, "fig5": fig5, "fig6": fig6}


def report(records: list[NmseRecord], directory) -> dict[str, Path]:
    """Write ``records.csv`` and the per-figure ``summary.json``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    csv_path = write_records_csv(records, directory / "records.csv")
    summary_path = directory / "summary.json"
    summary_path.write_text(json.dumps(summarize(records), indent=2) + "\n")
    return {"csv": csv_path, "summary": summary_path}
