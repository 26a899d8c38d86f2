"""The two-node attention network: parameters, forward pass, loss, checkpoints.

The network consumes a two-node graph whose node features are the real and
imaginary rows of one received pilot burst, and regresses the stacked
real/imaginary parts of both per-element coefficient vectors:

    (2 x M) -> gat (2 x gat1) -> gat (2 x gat2) -> gated pool -> dense (D)

All arithmetic runs in float64; checkpoints store tensors as little-endian
float32, row-major, in the order their manifest declares.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .layers import gat_layer, global_attention_pool
from .optim import AdamState
from .tensor import Tensor

TWO_NODE_ADJACENCY = np.array([[0, 1], [1, 0]], dtype=np.uint8)

# Output layouts: the default regresses [Re h; Im h; Re g; Im g] (4N reals for
# the 2N complex labels); "real_parts" is the literal 2N-real variant.
OUTPUT_MODES = ("complex_pair", "real_parts")


@dataclass(frozen=True)
class ModelDims:
    """Dimension chain and structural switches of the network."""

    m_pilots: int
    n_elements: int
    gat1_features: int = 128
    gat2_features: int = 32
    pool_features: int = 128
    output_mode: str = "complex_pair"
    self_loops: bool = True
    edge_fusion: bool = False
    dropout_rate: float = 0.5

    def __post_init__(self) -> None:
        if min(self.m_pilots, self.n_elements, self.gat1_features,
               self.gat2_features, self.pool_features) < 1:
            raise ValueError("all dimensions must be positive")
        if self.output_mode not in OUTPUT_MODES:
            raise ValueError(f"output_mode must be one of {OUTPUT_MODES}")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError("dropout_rate must lie in [0, 1)")

    @property
    def output_dim(self) -> int:
        factor = 4 if self.output_mode == "complex_pair" else 2
        return factor * self.n_elements


@dataclass
class GatLayerParams:
    weight: Tensor
    attn_kernel: Tensor
    bias: Tensor
    dropout_rate: float = 0.0
    edge_kernel: Tensor | None = None


@dataclass
class PoolParams:
    gate_weight: Tensor
    gate_bias: Tensor
    value_weight: Tensor
    value_bias: Tensor


@dataclass
class ModelParameters:
    dims: ModelDims
    gat1: GatLayerParams
    gat2: GatLayerParams
    pool: PoolParams
    dense_weight: Tensor
    dense_bias: Tensor
    adam: AdamState = field(default_factory=AdamState)

    def named_parameters(self) -> dict[str, Tensor]:
        """All trainable tensors in their canonical (storage) order."""
        named: dict[str, Tensor] = {}
        for prefix, layer in (("gat1", self.gat1), ("gat2", self.gat2)):
            named[f"{prefix}.weight"] = layer.weight
            named[f"{prefix}.attn_kernel"] = layer.attn_kernel
            if layer.edge_kernel is not None:
                named[f"{prefix}.edge_kernel"] = layer.edge_kernel
            named[f"{prefix}.bias"] = layer.bias
        named["pool.gate_weight"] = self.pool.gate_weight
        named["pool.gate_bias"] = self.pool.gate_bias
        named["pool.value_weight"] = self.pool.value_weight
        named["pool.value_bias"] = self.pool.value_bias
        named["dense.weight"] = self.dense_weight
        named["dense.bias"] = self.dense_bias
        return named

    def weight_parameters(self) -> dict[str, Tensor]:
        """The tensors the L2 penalty covers: everything that is not a bias."""
        return {k: v for k, v in self.named_parameters().items()
                if not k.rsplit(".", 1)[-1].endswith("bias")}

    def zero_grad(self) -> None:
        for p in self.named_parameters().values():
            p.grad = None

    def copy(self) -> "ModelParameters":
        """Deep copy of parameter values and optimizer state."""
        def dup_layer(layer: GatLayerParams) -> GatLayerParams:
            return GatLayerParams(
                weight=Tensor(layer.weight.data.copy(), requires_grad=True),
                attn_kernel=Tensor(layer.attn_kernel.data.copy(), requires_grad=True),
                bias=Tensor(layer.bias.data.copy(), requires_grad=True),
                dropout_rate=layer.dropout_rate,
                edge_kernel=None if layer.edge_kernel is None
                else Tensor(layer.edge_kernel.data.copy(), requires_grad=True),
            )

        return ModelParameters(
            dims=self.dims,
            gat1=dup_layer(self.gat1),
            gat2=dup_layer(self.gat2),
            pool=PoolParams(
                gate_weight=Tensor(self.pool.gate_weight.data.copy(), requires_grad=True),
                gate_bias=Tensor(self.pool.gate_bias.data.copy(), requires_grad=True),
                value_weight=Tensor(self.pool.value_weight.data.copy(), requires_grad=True),
                value_bias=Tensor(self.pool.value_bias.data.copy(), requires_grad=True),
            ),
            dense_weight=Tensor(self.dense_weight.data.copy(), requires_grad=True),
            dense_bias=Tensor(self.dense_bias.data.copy(), requires_grad=True),
            adam=AdamState(
                step=self.adam.step,
                first_moment={k: v.copy() for k, v in self.adam.first_moment.items()},
                second_moment={k: v.copy() for k, v in self.adam.second_moment.items()},
            ),
        )


def _glorot(rng: np.random.Generator, fan_in: int, fan_out: int, shape) -> Tensor:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return Tensor(rng.uniform(-limit, limit, shape), requires_grad=True)


def _zeros(shape) -> Tensor:
    return Tensor(np.zeros(shape), requires_grad=True)


def init_parameters(dims: ModelDims, rng: np.random.Generator) -> ModelParameters:
    """Glorot-uniform weights, zero biases, fresh optimizer state.

    Weight tensors are drawn in the fixed order gat1, gat2, pool (gate then
    value), dense, so a given generator state always produces the same model.
    """
    def gat(fan_in: int, fan_out: int, with_edges: bool) -> GatLayerParams:
        weight = _glorot(rng, fan_in, fan_out, (fan_in, fan_out))
        attn = _glorot(rng, 2 * fan_out, 1, (2 * fan_out,))
        # only the first layer sees raw edge vectors, so only it gets a kernel
        edge = _glorot(rng, dims.m_pilots, 1, (dims.m_pilots,)) if with_edges else None
        return GatLayerParams(
            weight=weight,
            attn_kernel=attn,
            bias=_zeros(fan_out),
            dropout_rate=dims.dropout_rate,
            edge_kernel=edge,
        )

    gat1 = gat(dims.m_pilots, dims.gat1_features, dims.edge_fusion)
    gat2 = gat(dims.gat1_features, dims.gat2_features, False)
    pool = PoolParams(
        gate_weight=_glorot(rng, dims.gat2_features, dims.pool_features,
                            (dims.gat2_features, dims.pool_features)),
        gate_bias=_zeros(dims.pool_features),
        value_weight=_glorot(rng, dims.gat2_features, dims.pool_features,
                             (dims.gat2_features, dims.pool_features)),
        value_bias=_zeros(dims.pool_features),
    )
    dense_weight = _glorot(rng, dims.pool_features, dims.output_dim,
                           (dims.pool_features, dims.output_dim))
    return ModelParameters(
        dims=dims,
        gat1=gat1,
        gat2=gat2,
        pool=pool,
        dense_weight=dense_weight,
        dense_bias=_zeros(dims.output_dim),
    )


def forward(model: ModelParameters, sample, mode: str = "eval",
            rng: np.random.Generator | None = None) -> Tensor:
    """Run the network on one sample's features or on a stacked batch.

    ``sample`` may be a GraphSample-like object (its ``x``, ``adjacency`` and
    ``edge_attr`` attributes are used) or a bare feature array of shape
    ``(2, M)`` / ``(batch, 2, M)``.  Returns a Tensor of shape ``(D,)`` or
    ``(batch, D)``.
    """
    x = getattr(sample, "x", sample)
    if isinstance(x, Tensor):
        x = x.data
    x = np.asarray(x, dtype=np.float64)
    adjacency = np.asarray(getattr(sample, "adjacency", TWO_NODE_ADJACENCY))
    edge_attr = getattr(sample, "edge_attr", None) if model.dims.edge_fusion else None
    dims = model.dims
    nodes = adjacency.shape[0]
    if x.ndim not in (2, 3) or x.shape[-2] != nodes or x.shape[-1] != dims.m_pilots:
        raise ValueError(
            f"expected features (..., {nodes}, {dims.m_pilots}), got {x.shape}"
        )

    hidden = gat_layer(x, adjacency, model.gat1, mode=mode, rng=rng,
                       self_loops=dims.self_loops, edge_attr=edge_attr)
    hidden = gat_layer(hidden, adjacency, model.gat2, mode=mode, rng=rng,
                       self_loops=dims.self_loops)
    pooled = global_attention_pool(hidden, model.pool)
    if pooled.ndim == 1:
        flat = pooled.reshape((1, dims.pool_features)) @ model.dense_weight + model.dense_bias
        return flat.reshape((dims.output_dim,))
    return pooled @ model.dense_weight + model.dense_bias


def loss(pred, label, model: ModelParameters | None = None, l2: float = 0.0) -> Tensor:
    """Mean squared error plus ``l2`` times the summed squared weights.

    The penalty covers weight matrices and attention kernels; biases are
    excluded.  For batched predictions the MSE is the mean over every output
    of every sample.
    """
    pred = pred if isinstance(pred, Tensor) else Tensor(pred)
    label = np.asarray(label, dtype=np.float64)
    if pred.shape != label.shape:
        raise ValueError(f"prediction shape {pred.shape} does not match label {label.shape}")
    err = pred - Tensor(label)
    total = err.square().mean()
    if l2 != 0.0:
        if model is None:
            raise ValueError("l2 > 0 requires the model")
        penalty = None
        for w in model.weight_parameters().values():
            term = w.square().sum()
            penalty = term if penalty is None else penalty + term
        total = total + penalty * l2
    return total


# -- checkpoint I/O ------------------------------------------------------------

MANIFEST_NAME = "manifest.json"
WEIGHTS_NAME = "weights.bin"


def save_checkpoint(model: ModelParameters, path, seed: int | None = None,
                    hyperparameters: dict | None = None) -> Path:
    """Write ``manifest.json`` + ``weights.bin`` under ``path`` (a directory).

    The blob holds every parameter tensor followed by the Adam moments, each
    as row-major little-endian float32 in the manifest-declared order.
    """
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    params = model.named_parameters()
    entries: list[tuple[str, np.ndarray]] = [(n, p.data) for n, p in params.items()]
    for name, p in params.items():
        entries.append((f"adam.m.{name}",
                        model.adam.first_moment.get(name, np.zeros_like(p.data))))
    for name, p in params.items():
        entries.append((f"adam.v.{name}",
                        model.adam.second_moment.get(name, np.zeros_like(p.data))))

    manifest = {
        "format_version": 1,
        "dims": asdict(model.dims),
        "seed": seed,
        "step_count": model.adam.step,
        "hyperparameters": hyperparameters or {},
        "dtype": "float32",
        "byte_order": "little",
        "layout": "row-major",
        "tensors": [{"name": n, "shape": list(a.shape)} for n, a in entries],
    }
    blob = b"".join(np.ascontiguousarray(a, dtype="<f4").tobytes() for _, a in entries)
    (path / MANIFEST_NAME).write_text(json.dumps(manifest, indent=2) + "\n")
    (path / WEIGHTS_NAME).write_bytes(blob)
    return path


def load_checkpoint(path) -> ModelParameters:
    """Rebuild a model from a checkpoint directory written by save_checkpoint."""
    path = Path(path)
    manifest = json.loads((path / MANIFEST_NAME).read_text())
    if manifest.get("format_version") != 1:
        raise ValueError(f"unsupported checkpoint format: {manifest.get('format_version')}")
    blob = (path / WEIGHTS_NAME).read_bytes()
    expected = sum(int(np.prod(t["shape"])) for t in manifest["tensors"]) * 4
    if len(blob) != expected:
        raise ValueError(f"weights blob holds {len(blob)} bytes, manifest declares {expected}")

    flat = np.frombuffer(blob, dtype="<f4")
    arrays: dict[str, np.ndarray] = {}
    cursor = 0
    for entry in manifest["tensors"]:
        count = int(np.prod(entry["shape"]))
        arrays[entry["name"]] = (
            flat[cursor:cursor + count].astype(np.float64).reshape(entry["shape"])
        )
        cursor += count

    dims = ModelDims(**manifest["dims"])

    def tensor(name: str) -> Tensor:
        return Tensor(arrays[name], requires_grad=True)

    def gat(prefix: str) -> GatLayerParams:
        edge_name = f"{prefix}.edge_kernel"
        return GatLayerParams(
            weight=tensor(f"{prefix}.weight"),
            attn_kernel=tensor(f"{prefix}.attn_kernel"),
            bias=tensor(f"{prefix}.bias"),
            dropout_rate=dims.dropout_rate,
            edge_kernel=tensor(edge_name) if edge_name in arrays else None,
        )

    model = ModelParameters(
        dims=dims,
        gat1=gat("gat1"),
        gat2=gat("gat2"),
        pool=PoolParams(
            gate_weight=tensor("pool.gate_weight"),
            gate_bias=tensor("pool.gate_bias"),
            value_weight=tensor("pool.value_weight"),
            value_bias=tensor("pool.value_bias"),
        ),
        dense_weight=tensor("dense.weight"),
        dense_bias=tensor("dense.bias"),
        adam=AdamState(
            step=int(manifest["step_count"]),
            first_moment={n: arrays[f"adam.m.{n}"] for n in _param_names(arrays)},
            second_moment={n: arrays[f"adam.v.{n}"] for n in _param_names(arrays)},
        ),
    )
    return model


def _param_names(arrays: dict[str, np.ndarray]) -> list[str]:
    return [n for n in arrays if not n.startswith("adam.")]
