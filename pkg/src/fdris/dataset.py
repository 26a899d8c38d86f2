"""Graph-structured dataset construction and deterministic persistence.

One sample is the two-node graph built from a single pilot exchange: node
features are the real and imaginary rows of the burst received at the
terminal, the two nodes are joined by a single edge carrying the pilot
symbols, and the regression label stacks the real and imaginary parts of
both per-element coefficient vectors.

A dataset on disk is a directory holding ``manifest.json`` (all generation
parameters, the record layout, and a content checksum) plus ``samples.bin``
(little-endian float32, row-major, records in generation order).  Content is
a pure function of the config, so regeneration with the same master seed is
byte-identical.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .channel import (
    DEFAULT_POLYNOMIAL,
    ChannelRealization,
    NoiseParams,
    PilotSequence,
    RisConfig,
    gen_pn_sequence,
    synthesize_received_pilots,
)
from .seeding import derive_seed

MANIFEST_NAME = "manifest.json"
SAMPLES_NAME = "samples.bin"

TWO_NODE_ADJACENCY = np.array([[0, 1], [1, 0]], dtype=np.uint8)


class DatasetError(Exception):
    """Base class for dataset persistence failures."""


class TruncatedBlobError(DatasetError):
    """The sample blob ends mid-record."""


class ManifestInconsistencyError(DatasetError):
    """The manifest and the blob disagree about the sample count."""


class ChecksumMismatchError(DatasetError):
    """The blob does not hash to the manifest's checksum."""


def pack_channel_label(terminal_link: np.ndarray, station_link: np.ndarray) -> np.ndarray:
    """Stack two complex coefficient vectors as float32 reals.

    Layout: ``[Re terminal, Im terminal, Re station, Im station]``.
    """
    if terminal_link.shape != station_link.shape or terminal_link.ndim != 1:
        raise ValueError("coefficient vectors must be 1-D of equal length")
    return np.concatenate([
        terminal_link.real, terminal_link.imag,
        station_link.real, station_link.imag,
    ]).astype(np.float32)


def unpack_channel_label(label: np.ndarray, n_elements: int) -> tuple[np.ndarray, np.ndarray]:
    """Inverse of pack_channel_label; returns (terminal_link, station_link)."""
    label = np.asarray(label, dtype=np.float64)
    if label.shape != (4 * n_elements,):
        raise ValueError(f"label must hold {4 * n_elements} reals, got {label.shape}")
    parts = label.reshape(4, n_elements)
    return parts[0] + 1j * parts[1], parts[2] + 1j * parts[3]


@dataclass(frozen=True)
class SampleMeta:
    """Generation parameters attached to one sample."""

    n_elements: int
    m_pilots: int
    k_factor: float
    switching_error: float
    seed: int


@dataclass(frozen=True)
class GraphSample:
    """One two-node graph: burst features, pilot edge, coefficient label."""

    x: np.ndarray          # (2, M) float32; row 0 = Re, row 1 = Im of the burst
    adjacency: np.ndarray  # (2, 2) binary, the single-edge graph
    edge_attr: np.ndarray  # (2, 2, M) float32; pilot symbols on the two edge slots
    label: np.ndarray      # (4N,) float32
    snr_db: float
    meta: SampleMeta

    def label_complex(self) -> tuple[np.ndarray, np.ndarray]:
        return unpack_channel_label(self.label, self.meta.n_elements)


@dataclass(frozen=True)
class DatasetConfig:
    """Everything that determines a dataset's content."""

    n_elements: int
    m_pilots: int
    snr_grid_db: tuple[float, ...]
    samples_per_snr: int
    master_seed: int = 0
    k_factor: float = 10.0
    switching_error: float = 0.0
    polynomial: int = DEFAULT_POLYNOMIAL
    pilot_seed: int = 1
    station_pilot_seed: int | None = None  # None reuses the terminal pilots
    terminal_power: float = 1.0
    station_power: float = 1.0
    amplitude_gain: float = 1.0
    normalize: bool = False
    noiseless: bool = False  # keep the grid's snr_db labels but draw no impairments

    def __post_init__(self) -> None:
        if self.n_elements < 1 or self.m_pilots < 1:
            raise ValueError("n_elements and m_pilots must be positive")
        if len(self.snr_grid_db) == 0:
            raise ValueError("snr_grid_db must be nonempty")
        if self.samples_per_snr < 1:
            raise ValueError("samples_per_snr must be positive")
        if self.k_factor < 0.0:
            raise ValueError("k_factor must be nonnegative")
        if not 0.0 <= self.switching_error <= 1.0:
            raise ValueError("switching_error must lie in [0, 1]")
        object.__setattr__(self, "snr_grid_db", tuple(float(v) for v in self.snr_grid_db))

    @property
    def sample_count(self) -> int:
        return len(self.snr_grid_db) * self.samples_per_snr

    def pilot_pair(self) -> tuple[PilotSequence, PilotSequence]:
        s1 = gen_pn_sequence(self.m_pilots, polynomial=self.polynomial,
                             seed=self.pilot_seed)
        if self.station_pilot_seed is None:
            return s1, s1
        s2 = gen_pn_sequence(self.m_pilots, polynomial=self.polynomial,
                             seed=self.station_pilot_seed)
        return s1, s2


@dataclass(frozen=True)
class DatasetManifest:
    """On-disk description: config echo, record layout, content checksum."""

    config: DatasetConfig
    sample_count: int
    checksum: str
    split_ratio: tuple[int, int] = (4, 1)
    normalization: dict | None = None
    format_version: int = 1

    def record_layout(self) -> dict:
        m, n = self.config.m_pilots, self.config.n_elements
        return {
            "dtype": "float32",
            "byte_order": "little",
            "layout": "row-major",
            "fields": [
                {"name": "x", "shape": [2, m]},
                {"name": "label", "shape": [4 * n]},
                {"name": "snr_db", "shape": []},
            ],
        }

    def record_floats(self) -> int:
        return 2 * self.config.m_pilots + 4 * self.config.n_elements + 1

    def to_dict(self) -> dict:
        cfg = self.config
        return {
            "format_version": self.format_version,
            "n_elements": cfg.n_elements,
            "m_pilots": cfg.m_pilots,
            "snr_grid_db": list(cfg.snr_grid_db),
            "samples_per_snr": cfg.samples_per_snr,
            "master_seed": cfg.master_seed,
            "k_factor": cfg.k_factor,
            "switching_error": cfg.switching_error,
            "polynomial": cfg.polynomial,
            "pilot_seed": cfg.pilot_seed,
            "station_pilot_seed": cfg.station_pilot_seed,
            "terminal_power": cfg.terminal_power,
            "station_power": cfg.station_power,
            "amplitude_gain": cfg.amplitude_gain,
            "normalize": cfg.normalize,
            "noiseless": cfg.noiseless,
            "sample_count": self.sample_count,
            "split_ratio": list(self.split_ratio),
            "adjacency": TWO_NODE_ADJACENCY.tolist(),
            "normalization": self.normalization,
            "record_layout": self.record_layout(),
            "checksum": self.checksum,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "DatasetManifest":
        config = DatasetConfig(
            n_elements=data["n_elements"],
            m_pilots=data["m_pilots"],
            snr_grid_db=tuple(data["snr_grid_db"]),
            samples_per_snr=data["samples_per_snr"],
            master_seed=data["master_seed"],
            k_factor=data["k_factor"],
            switching_error=data["switching_error"],
            polynomial=data["polynomial"],
            pilot_seed=data["pilot_seed"],
            station_pilot_seed=data["station_pilot_seed"],
            terminal_power=data["terminal_power"],
            station_power=data["station_power"],
            amplitude_gain=data["amplitude_gain"],
            normalize=data["normalize"],
            noiseless=data["noiseless"],
        )
        return cls(
            config=config,
            sample_count=data["sample_count"],
            checksum=data["checksum"],
            split_ratio=tuple(data["split_ratio"]),
            normalization=data["normalization"],
            format_version=data["format_version"],
        )


def build_sample(
    y1: np.ndarray,
    s1: PilotSequence,
    channel: ChannelRealization,
    snr_db: float,
    meta: SampleMeta,
) -> GraphSample:
    """Assemble one graph from a received burst and the realization behind it."""
    y1 = np.asarray(y1)
    if y1.shape != (meta.m_pilots,) or len(s1) != meta.m_pilots:
        raise ValueError("burst and pilot lengths must equal meta.m_pilots")
    if channel.n_elements != meta.n_elements:
        raise ValueError("channel size does not match meta.n_elements")

    x = np.stack([y1.real, y1.imag]).astype(np.float32)
    edge_attr = np.zeros((2, 2, meta.m_pilots), dtype=np.float32)
    pilot_row = s1.symbols.real.astype(np.float32)
    edge_attr[0, 1] = pilot_row
    edge_attr[1, 0] = pilot_row
    label = pack_channel_label(channel.terminal_link, channel.station_link)
    return GraphSample(
        x=x,
        adjacency=TWO_NODE_ADJACENCY.copy(),
        edge_attr=edge_attr,
        label=label,
        snr_db=float(np.float32(snr_db)),
        meta=meta,
    )


def _synthesize_sample(config: DatasetConfig, s1: PilotSequence, s2: PilotSequence,
                       snr_db: float, seed: int) -> GraphSample:
    rng = np.random.default_rng(seed)
    channel = ChannelRealization.sample(config.n_elements, config.k_factor, rng)
    ris = RisConfig(
        n_elements=config.n_elements,
        amplitude_gain=config.amplitude_gain,
        switching_error=config.switching_error,
    )
    noise = NoiseParams.noiseless() if config.noiseless else NoiseParams.for_snr(snr_db)
    received = synthesize_received_pilots(
        channel, ris, s1, s2,
        p1=config.terminal_power, p2=config.station_power,
        noise=noise, rng=rng,
    )
    meta = SampleMeta(
        n_elements=config.n_elements,
        m_pilots=config.m_pilots,
        k_factor=config.k_factor,
        switching_error=config.switching_error,
        seed=seed,
    )
    return build_sample(received.at_terminal, s1, channel, snr_db, meta)


def sample_seed(config: DatasetConfig, snr_index: int, sample_index: int) -> int:
    """The per-sample generator seed: a mix of master seed and grid position."""
    return derive_seed(config.master_seed, snr_index, sample_index)


def generate_dataset(config: DatasetConfig) -> tuple[list[GraphSample], DatasetManifest]:
    """Synthesize every sample of the configured grid, grid-major order.

    Each sample draws a fresh channel realization and impairments from its
    own derived seed, so any subset can be regenerated independently.
    """
    s1, s2 = config.pilot_pair()
    samples: list[GraphSample] = []
    for snr_index, snr_db in enumerate(config.snr_grid_db):
        for sample_index in range(config.samples_per_snr):
            seed = sample_seed(config, snr_index, sample_index)
            samples.append(_synthesize_sample(config, s1, s2, snr_db, seed))

    normalization = None
    if config.normalize:
        stacked = np.stack([s.x for s in samples]).astype(np.float64)
        mean = float(stacked.mean())
        std = float(stacked.std())
        if std == 0.0:
            raise ValueError("cannot standardize a constant dataset")
        normalization = {"mean": mean, "std": std}
        samples = [
            replace(s, x=((s.x - mean) / std).astype(np.float32)) for s in samples
        ]

    manifest = DatasetManifest(
        config=config,
        sample_count=len(samples),
        checksum=_checksum(_serialize(samples)),
        normalization=normalization,
    )
    return samples, manifest


def split(samples: list, seed: int) -> tuple[list, list]:
    """Seeded shuffle, then a 4:1 train/validation partition."""
    n = len(samples)
    if n < 5:
        raise ValueError("need at least 5 samples for a 4:1 split")
    order = np.random.default_rng(seed).permutation(n)
    n_val = n // 5
    train = [samples[i] for i in order[: n - n_val]]
    validation = [samples[i] for i in order[n - n_val:]]
    return train, validation


def _serialize(samples: list[GraphSample]) -> bytes:
    chunks = []
    for s in samples:
        record = np.concatenate([
            s.x.ravel(),
            s.label,
            np.array([s.snr_db], dtype=np.float32),
        ]).astype("<f4")
        chunks.append(record.tobytes())
    return b"".join(chunks)


def _checksum(blob: bytes) -> str:
    return hashlib.sha256(blob).hexdigest()


def save_dataset(samples: list[GraphSample], manifest: DatasetManifest, path) -> Path:
    """Write ``manifest.json`` + ``samples.bin`` under ``path`` (a directory)."""
    if len(samples) != manifest.sample_count:
        raise ManifestInconsistencyError(
            f"manifest declares {manifest.sample_count} samples, got {len(samples)}"
        )
    blob = _serialize(samples)
    if _checksum(blob) != manifest.checksum:
        raise ChecksumMismatchError("samples do not match the manifest checksum")
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    (path / MANIFEST_NAME).write_text(json.dumps(manifest.to_dict(), indent=2) + "\n")
    (path / SAMPLES_NAME).write_bytes(blob)
    return path


def load_dataset(path) -> tuple[list[GraphSample], DatasetManifest]:
    """Read a dataset directory back, verifying structure before content.

    Raises TruncatedBlobError when the blob ends mid-record,
    ManifestInconsistencyError when the record count disagrees with the
    manifest, and ChecksumMismatchError when bytes were altered.
    """
    path = Path(path)
    manifest = DatasetManifest.from_dict(json.loads((path / MANIFEST_NAME).read_text()))
    if manifest.format_version != 1:
        raise ManifestInconsistencyError(
            f"unsupported dataset format: {manifest.format_version}"
        )
    blob = (path / SAMPLES_NAME).read_bytes()

    record_bytes = manifest.record_floats() * 4
    if len(blob) % record_bytes != 0:
        raise TruncatedBlobError(
            f"blob holds {len(blob)} bytes, not a multiple of the "
            f"{record_bytes}-byte record"
        )
    n_records = len(blob) // record_bytes
    if n_records != manifest.sample_count:
        raise ManifestInconsistencyError(
            f"manifest declares {manifest.sample_count} samples, blob holds {n_records}"
        )
    if _checksum(blob) != manifest.checksum:
        raise ChecksumMismatchError("samples.bin does not match the manifest checksum")

    config = manifest.config
    s1, _ = config.pilot_pair()
    pilot_row = s1.symbols.real.astype(np.float32)
    edge_attr = np.zeros((2, 2, config.m_pilots), dtype=np.float32)
    edge_attr[0, 1] = pilot_row
    edge_attr[1, 0] = pilot_row

    flat = np.frombuffer(blob, dtype="<f4").reshape(n_records, manifest.record_floats())
    m, n = config.m_pilots, config.n_elements
    samples: list[GraphSample] = []
    for i in range(n_records):
        snr_index, sample_index = divmod(i, config.samples_per_snr)
        record = flat[i]
        samples.append(GraphSample(
            x=record[: 2 * m].reshape(2, m).copy(),
            adjacency=TWO_NODE_ADJACENCY.copy(),
            edge_attr=edge_attr.copy(),
            label=record[2 * m: 2 * m + 4 * n].copy(),
            snr_db=float(record[-1]),
            meta=SampleMeta(
                n_elements=n,
                m_pilots=m,
                k_factor=config.k_factor,
                switching_error=config.switching_error,
                seed=sample_seed(config, snr_index, sample_index),
            ),
        ))
    return samples, manifest


def stack_features(samples: list[GraphSample]) -> tuple[np.ndarray, np.ndarray]:
    """Stack samples into float64 (B, 2, M) features and (B, 4N) labels."""
    x = np.stack([s.x for s in samples]).astype(np.float64)
    labels = np.stack([s.label for s in samples]).astype(np.float64)
    return x, labels
