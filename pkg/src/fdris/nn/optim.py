"""Adam with bias correction over the model's named parameters."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class AdamState:
    """First/second moment accumulators keyed by parameter name."""

    step: int = 0
    first_moment: dict[str, np.ndarray] = field(default_factory=dict)
    second_moment: dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(
    model,
    grads: dict[str, np.ndarray] | None = None,
    lr: float = 1e-3,
    betas: tuple[float, float] = (0.9, 0.999),
    eps: float = 1e-8,
):
    """Apply one in-place Adam update to every parameter and return the model.

    ``grads`` defaults to the ``.grad`` buffers left by ``backward``.  The
    whole step is rejected (no parameter touched, counter unchanged) if any
    gradient is missing, mis-shaped, or non-finite.
    """
    params = model.named_parameters()
    if grads is None:
        grads = {name: p.grad for name, p in params.items()}
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            raise ValueError(f"missing gradient for parameter {name!r}")
        g = np.asarray(g)
        if g.shape != p.data.shape:
            raise ValueError(f"gradient shape {g.shape} does not match {name!r} {p.data.shape}")
        finite = np.isfinite(g)
        if not finite.all():
            bad = int(g.size - np.count_nonzero(finite))
            raise ValueError(f"non-finite gradient for {name!r}: {bad} of {g.size} entries")

    state = model.adam
    state.step += 1
    beta1, beta2 = betas
    correction1 = 1.0 - beta1 ** state.step
    correction2 = 1.0 - beta2 ** state.step
    for name, p in params.items():
        g = np.asarray(grads[name], dtype=np.float64)
        m = state.first_moment.setdefault(name, np.zeros_like(p.data))
        v = state.second_moment.setdefault(name, np.zeros_like(p.data))
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        p.data -= lr * (m / correction1) / (np.sqrt(v / correction2) + eps)
    return model
