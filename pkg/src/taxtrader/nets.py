"""Small tanh MLPs with hand-written backprop, plus the update rules.

Policy and value heads share the same container: per-layer weight
matrices (fan_in, fan_out) and bias vectors, tanh on hidden layers,
identity on the output. Gradients are exact reverse-mode, computed from
the cached forward activations. Checkpoints round-trip bit-exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = [
    "MlpParams",
    "AdamState",
    "PolicyBundle",
    "init_mlp",
    "init_bundle",
    "forward",
    "forward_cached",
    "backward",
    "log_softmax",
    "softmax",
    "sample_action",
    "log_prob_and_entropy",
    "adam_step",
    "sgd_step",
    "apply_update",
    "save_bundle",
    "load_bundle",
]

CHECKPOINT_VERSION = 1


@dataclass
class MlpParams:
    """Per-layer weights (fan_in, fan_out) and biases (fan_out,)."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def __post_init__(self) -> None:
        if len(self.weights) != len(self.biases):
            raise ValueError("weights and biases must pair up")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.ndim != 2 or b.ndim != 1 or w.shape[1] != b.shape[0]:
                raise ValueError(f"layer {i}: weight {w.shape} / bias {b.shape}")
            if i > 0 and self.weights[i - 1].shape[1] != w.shape[0]:
                raise ValueError(
                    f"layer {i}: fan_in {w.shape[0]} does not match previous "
                    f"fan_out {self.weights[i - 1].shape[1]}"
                )

    @property
    def in_dim(self) -> int:
        return self.weights[0].shape[0]

    @property
    def out_dim(self) -> int:
        return self.weights[-1].shape[1]

    def arrays(self) -> list[np.ndarray]:
        """Flat [W0, b0, W1, b1, ...] view used by the optimizers."""
        out: list[np.ndarray] = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out

    def copy(self) -> "MlpParams":
        return MlpParams(
            [w.copy() for w in self.weights], [b.copy() for b in self.biases]
        )


def init_mlp(
    rng: np.random.Generator,
    in_dim: int,
    hidden: tuple[int, ...] = (64, 64),
    out_dim: int = 1,
    out_scale: float = 1.0,
) -> MlpParams:
    """Scaled-uniform init; the output layer is shrunk by ``out_scale``."""
    dims = (in_dim, *hidden, out_dim)
    weights, biases = [], []
    for i, (fan_in, fan_out) in enumerate(zip(dims, dims[1:])):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        w = rng.uniform(-limit, limit, size=(fan_in, fan_out))
        if i == len(dims) - 2:
            w *= out_scale
        weights.append(w)
        biases.append(np.zeros(fan_out))
    return MlpParams(weights, biases)


def forward(params: MlpParams, x: np.ndarray) -> np.ndarray:
    """Deterministic forward pass; accepts a single vector or a batch."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != params.in_dim:
        raise ValueError(f"input dim {x.shape[-1]} != expected {params.in_dim}")
    h = x
    last = len(params.weights) - 1
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        h = h @ w + b
        if i < last:
            h = np.tanh(h)
    return h


def forward_cached(
    params: MlpParams, x: np.ndarray
) -> tuple[np.ndarray, list[np.ndarray]]:
    """Forward pass on a batch, keeping per-layer activations for backward."""
    h = np.atleast_2d(np.asarray(x, dtype=np.float64))
    if h.shape[1] != params.in_dim:
        raise ValueError(f"input dim {h.shape[1]} != expected {params.in_dim}")
    cache = [h]
    last = len(params.weights) - 1
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        h = h @ w + b
        if i < last:
            h = np.tanh(h)
        cache.append(h)
    return h, cache


def backward(
    params: MlpParams, cache: list[np.ndarray], out_grad: np.ndarray
) -> tuple[MlpParams, np.ndarray]:
    """Exact gradients of ``sum(outputs * out_grad)`` for every parameter.

    Returns the parameter gradients (same container shape) and the
    gradient with respect to the input batch.
    """
    out_grad = np.atleast_2d(np.asarray(out_grad, dtype=np.float64))
    if out_grad.shape != cache[-1].shape:
        raise ValueError(
            f"out_grad shape {out_grad.shape} != output shape {cache[-1].shape}"
        )
    n_layers = len(params.weights)
    w_grads: list[np.ndarray] = [np.empty(0)] * n_layers
    b_grads: list[np.ndarray] = [np.empty(0)] * n_layers
    g = out_grad
    for i in reversed(range(n_layers)):
        # Hidden outputs are post-tanh; fold the activation derivative in.
        gz = g if i == n_layers - 1 else g * (1.0 - cache[i + 1] ** 2)
        w_grads[i] = cache[i].T @ gz
        b_grads[i] = gz.sum(axis=0)
        g = gz @ params.weights[i].T
    return MlpParams(w_grads, b_grads), g


def log_softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - np.max(logits, axis=-1, keepdims=True)
    return z - np.log(np.sum(np.exp(z), axis=-1, keepdims=True))


def softmax(logits: np.ndarray) -> np.ndarray:
    return np.exp(log_softmax(logits))


def sample_action(logits: np.ndarray, rng: np.random.Generator) -> tuple[int, float]:
    """Draw from the categorical given by ``logits``; return (index, log-prob)."""
    logits = np.asarray(logits, dtype=np.float64)
    if not np.all(np.isfinite(logits)):
        raise ValueError(f"non-finite logits: {logits}")
    logp = log_softmax(logits)
    cdf = np.cumsum(np.exp(logp))
    action = int(np.searchsorted(cdf, rng.random()))
    action = min(action, len(logits) - 1)
    return action, float(logp[action])


def log_prob_and_entropy(logits: np.ndarray, action: int) -> tuple[float, float]:
    """Exact categorical log-probability of ``action`` and distribution entropy."""
    logits = np.asarray(logits, dtype=np.float64)
    if not 0 <= action < logits.shape[-1]:
        raise ValueError(f"action {action} out of range for {logits.shape[-1]} logits")
    logp = log_softmax(logits)
    p = np.exp(logp)
    entropy = float(-np.sum(p * logp))
    return float(logp[action]), entropy


@dataclass
class AdamState:
    """First/second moment accumulators and step count for one net."""

    m: list[np.ndarray]
    v: list[np.ndarray]
    t: int = 0

    @classmethod
    def zeros_like(cls, params: MlpParams) -> "AdamState":
        arrays = params.arrays()
        return cls(
            m=[np.zeros_like(a) for a in arrays],
            v=[np.zeros_like(a) for a in arrays],
        )


def adam_step(
    params: MlpParams,
    grads: MlpParams,
    state: AdamState,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> None:
    """One bias-corrected adaptive-moment update, in place."""
    state.t += 1
    bc1 = 1.0 - beta1**state.t
    bc2 = 1.0 - beta2**state.t
    for p, g, m, v in zip(params.arrays(), grads.arrays(), state.m, state.v):
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g**2
        p -= lr * (m / bc1) / (np.sqrt(v / bc2) + eps)


def sgd_step(params: MlpParams, grads: MlpParams, lr: float) -> None:
    for p, g in zip(params.arrays(), grads.arrays()):
        p -= lr * g


@dataclass
class PolicyBundle:
    """Policy and value parameter sets plus their optimizer state."""

    policy: MlpParams
    value: MlpParams
    policy_opt: AdamState = field(init=False)
    value_opt: AdamState = field(init=False)
    optimizer: str = "adam"

    def __post_init__(self) -> None:
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        self.policy_opt = AdamState.zeros_like(self.policy)
        self.value_opt = AdamState.zeros_like(self.value)


def init_bundle(
    rng: np.random.Generator,
    obs_dim: int,
    n_actions: int = 3,
    hidden: tuple[int, ...] = (64, 64),
    optimizer: str = "adam",
) -> PolicyBundle:
    """Fresh 64-64 tanh policy/value pair; policy output layer scaled by 0.01."""
    policy = init_mlp(rng, obs_dim, hidden, n_actions, out_scale=0.01)
    value = init_mlp(rng, obs_dim, hidden, 1, out_scale=1.0)
    return PolicyBundle(policy=policy, value=value, optimizer=optimizer)


def apply_update(
    params: MlpParams,
    grads: MlpParams,
    state: AdamState,
    lr: float,
    optimizer: str,
) -> None:
    if optimizer == "adam":
        adam_step(params, grads, state, lr)
    elif optimizer == "sgd":
        sgd_step(params, grads, lr)
    else:
        raise ValueError(f"unknown optimizer {optimizer!r}")


def _pack_net(prefix: str, params: MlpParams, opt: AdamState, out: dict) -> None:
    out[f"{prefix}_n_layers"] = np.int64(len(params.weights))
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        out[f"{prefix}_w{i}"] = w
        out[f"{prefix}_b{i}"] = b
    for i, (m, v) in enumerate(zip(opt.m, opt.v)):
        out[f"{prefix}_opt_m{i}"] = m
        out[f"{prefix}_opt_v{i}"] = v
    out[f"{prefix}_opt_t"] = np.int64(opt.t)


def _unpack_net(prefix: str, data) -> tuple[MlpParams, AdamState]:
    n_layers = int(data[f"{prefix}_n_layers"])
    weights = [data[f"{prefix}_w{i}"].copy() for i in range(n_layers)]
    biases = [data[f"{prefix}_b{i}"].copy() for i in range(n_layers)]
    params = MlpParams(weights, biases)
    m = [data[f"{prefix}_opt_m{i}"].copy() for i in range(2 * n_layers)]
    v = [data[f"{prefix}_opt_v{i}"].copy() for i in range(2 * n_layers)]
    return params, AdamState(m=m, v=v, t=int(data[f"{prefix}_opt_t"]))


def save_bundle(
    path: str | Path, bundle: PolicyBundle, meta: dict[str, int] | None = None
) -> None:
    """Write a versioned checkpoint that ``load_bundle`` restores bit-exactly."""
    payload: dict = {
        "version": np.int64(CHECKPOINT_VERSION),
        "optimizer": np.str_(bundle.optimizer),
    }
    _pack_net("policy", bundle.policy, bundle.policy_opt, payload)
    _pack_net("value", bundle.value, bundle.value_opt, payload)
    for key, value in (meta or {}).items():
        payload[f"meta_{key}"] = np.int64(value)
    np.savez(path, **payload)


def load_bundle(path: str | Path) -> tuple[PolicyBundle, dict[str, int]]:
    with np.load(path, allow_pickle=False) as data:
        version = int(data["version"])
        if version != CHECKPOINT_VERSION:
            raise ValueError(
                f"checkpoint version {version} unsupported "
                f"(expected {CHECKPOINT_VERSION})"
            )
        policy, policy_opt = _unpack_net("policy", data)
        value, value_opt = _unpack_net("value", data)
        bundle = PolicyBundle(
            policy=policy, value=value, optimizer=str(data["optimizer"])
        )
        bundle.policy_opt = policy_opt
        bundle.value_opt = value_opt
        meta = {
            key[len("meta_"):]: int(data[key])
            for key in data.files
            if key.startswith("meta_")
        }
    return bundle, meta
