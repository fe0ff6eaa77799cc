"""Feature pipelines and the quantization-regression encoder.

Two fixed feature pipelines produce the per-item vectors that feed the
encoders: salient-region aggregation on the image side (top-k regions by
attraction score, position-augmented, mean-pooled together with the
holistic vector) and bag-of-words counts on the text side.

The encoder itself is a small fully-connected network, rectified hidden
layers and an identity output layer of width M. It is trained to regress
its batch output onto the current target codes:

    loss = eta * ||target - output||_F^2

Gradients are derived by hand (the output residual is -2 eta (target -
output), propagated through rectifier masks) and applied with Adam.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .codes import CodeMatrix

__all__ = [
    "AdamState",
    "EncoderModel",
    "RegionProposal",
    "adam_step",
    "aggregate_regions",
    "attraction_score",
    "backward",
    "bag_of_words",
    "forward",
    "quantization_loss",
]

# Full-image stand-in for a region's positional digits: centered, full extent.
HOLISTIC_POSITION = (0.5, 0.5, 1.0, 1.0)


@dataclass(frozen=True)
class RegionProposal:
    """One detected image region: feature vector plus detection metadata.

    confidence and area_fraction live strictly inside (0, 1); the bbox is
    (center_x, center_y, width, height), each normalized to [0, 1].
    """

    feature: np.ndarray
    confidence: float
    area_fraction: float
    bbox: tuple[float, float, float, float]

    def __post_init__(self):
        feature = np.asarray(self.feature, dtype=np.float64)
        if feature.ndim != 1 or not np.all(np.isfinite(feature)):
            raise ValueError("region feature must be a finite 1-D vector")
        object.__setattr__(self, "feature", feature)
        if not 0.0 < self.confidence < 1.0:
            raise ValueError(f"confidence must be in (0, 1), got {self.confidence}")
        if not 0.0 < self.area_fraction < 1.0:
            raise ValueError(
                f"area_fraction must be in (0, 1), got {self.area_fraction}"
            )
        if len(self.bbox) != 4 or any(not 0.0 <= v <= 1.0 for v in self.bbox):
            raise ValueError(f"bbox components must be in [0, 1], got {self.bbox}")


def attraction_score(confidence: float, area_fraction: float) -> float:
    """Heuristic region saliency: (confidence + area_fraction) / 2."""
    if not 0.0 < confidence < 1.0:
        raise ValueError(f"confidence must be in (0, 1), got {confidence}")
    if not 0.0 < area_fraction < 1.0:
        raise ValueError(f"area_fraction must be in (0, 1), got {area_fraction}")
    return (confidence + area_fraction) / 2.0


def aggregate_regions(proposals, holistic, k: int) -> np.ndarray:
    """Mean-pool the top-k salient regions together with the holistic vector.

    Proposals are ranked by attraction score, descending, with ties broken
    by input order. Each selected region is augmented with its four bbox
    digits; the holistic vector gets the fixed full-image digits and is
    appended as the final sequence element. The result is the elementwise
    mean of the k+1 augmented vectors (fewer when the list holds fewer
    than k proposals), length D_r + 4.
    """
    proposals = list(proposals)
    if not proposals:
        raise ValueError("at least one region proposal is required")
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    holistic = np.asarray(holistic, dtype=np.float64)
    d_r = proposals[0].feature.shape[0]
    if holistic.shape != (d_r,):
        raise ValueError(
            f"holistic feature length {holistic.shape} does not match "
            f"region feature length {d_r}"
        )
    if not np.all(np.isfinite(holistic)):
        raise ValueError("holistic feature must be finite")
    for p in proposals:
        if p.feature.shape[0] != d_r:
            raise ValueError("all region features must share one length")

    scores = [attraction_score(p.confidence, p.area_fraction) for p in proposals]
    order = sorted(range(len(proposals)), key=lambda i: (-scores[i], i))
    chosen = order[: min(k, len(proposals))]

    stack = [np.concatenate([proposals[i].feature, proposals[i].bbox]) for i in chosen]
    stack.append(np.concatenate([holistic, HOLISTIC_POSITION]))
    return np.mean(stack, axis=0)


def bag_of_words(token_ids, vocab_size: int) -> np.ndarray:
    """Count tokens into a length-vocab_size vector."""
    if vocab_size < 1:
        raise ValueError(f"vocab_size must be >= 1, got {vocab_size}")
    ids = np.asarray(list(token_ids), dtype=np.int64)
    if ids.size and (ids.min() < 0 or ids.max() >= vocab_size):
        raise ValueError("token ids must lie in [0, vocab_size)")
    return np.bincount(ids, minlength=vocab_size).astype(np.float64)


class EncoderModel:
    """Fully-connected encoder: rectified hidden layers, identity output.

    layers is a list of (weights, bias) pairs, weights shaped (out, in)
    and bias (out,). Batches are column-major: a D x N input maps to an
    M x N output.
    """

    def __init__(self, layers):
        if not layers:
            raise ValueError("encoder needs at least one layer")
        checked = []
        prev_out = None
        for w, b in layers:
            w = np.asarray(w, dtype=np.float64)
            b = np.asarray(b, dtype=np.float64)
            if w.ndim != 2 or b.shape != (w.shape[0],):
                raise ValueError(f"bad layer shapes: W {w.shape}, b {b.shape}")
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                raise ValueError("layer parameters must be finite")
            if prev_out is not None and w.shape[1] != prev_out:
                raise ValueError(
                    f"layer input width {w.shape[1]} does not chain "
                    f"with previous output width {prev_out}"
                )
            prev_out = w.shape[0]
            checked.append((w, b))
        self.layers = checked

    @classmethod
    def init_random(cls, dims, rng: np.random.Generator) -> "EncoderModel":
        """Glorot-uniform weights, zero biases, for the given layer widths."""
        if len(dims) < 2:
            raise ValueError("need an input and an output dimension")
        layers = []
        for fan_in, fan_out in zip(dims[:-1], dims[1:]):
            bound = np.sqrt(6.0 / (fan_in + fan_out))
            w = rng.uniform(-bound, bound, size=(fan_out, fan_in))
            layers.append((w, np.zeros(fan_out)))
        return cls(layers)

    @property
    def input_dim(self) -> int:
        return self.layers[0][0].shape[1]

    @property
    def output_dim(self) -> int:
        return self.layers[-1][0].shape[0]

    def copy(self) -> "EncoderModel":
        return EncoderModel([(w.copy(), b.copy()) for w, b in self.layers])


def _check_batch(model: EncoderModel, batch) -> np.ndarray:
    arr = np.asarray(batch, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError(f"batch must be 2-D, got shape {arr.shape}")
    if arr.shape[0] != model.input_dim:
        raise ValueError(
            f"batch dimension {arr.shape[0]} does not match "
            f"encoder input dimension {model.input_dim}"
        )
    if not np.all(np.isfinite(arr)):
        raise ValueError("batch must be finite")
    return arr


def _forward_states(model: EncoderModel, batch: np.ndarray):
    """Pre-activations and activations per layer, input first."""
    pre = []
    acts = [batch]
    x = batch
    last = len(model.layers) - 1
    for i, (w, b) in enumerate(model.layers):
        z = w @ x + b[:, None]
        pre.append(z)
        x = z if i == last else np.maximum(z, 0.0)
        acts.append(x)
    return pre, acts


def forward(model: EncoderModel, batch) -> np.ndarray:
    """Encode a D x N batch to its M x N real-valued output."""
    x = _check_batch(model, batch)
    return _forward_states(model, x)[1][-1]


def _targets(target, name: str = "target") -> np.ndarray:
    if isinstance(target, CodeMatrix):
        return target.unpack().astype(np.float64)
    arr = np.asarray(target, dtype=np.float64)
    if arr.ndim != 2 or not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} must be a finite 2-D matrix")
    return arr


def quantization_loss(target, output, eta: float = 1e-4) -> float:
    """eta-weighted squared distance between target codes and output."""
    t = _targets(target)
    out = np.asarray(output, dtype=np.float64)
    if out.shape != t.shape:
        raise ValueError(f"output shape {out.shape} does not match target {t.shape}")
    if eta < 0.0:
        raise ValueError(f"eta must be nonnegative, got {eta}")
    return float(eta) * float(np.sum((t - out) ** 2))


def backward(model: EncoderModel, batch, target, eta: float = 1e-4):
    """Exact quantization-loss gradients for every weight and bias.

    Returns a list of (dW, db) pairs aligned with model.layers. The
    output-layer residual gradient is -2 eta (target - output); hidden
    deltas are masked by each rectifier's active set.
    """
    x = _check_batch(model, batch)
    t = _targets(target)
    if t.shape != (model.output_dim, x.shape[1]):
        raise ValueError(
            f"target shape {t.shape} does not match output "
            f"{(model.output_dim, x.shape[1])}"
        )
    if eta < 0.0:
        raise ValueError(f"eta must be nonnegative, got {eta}")
    pre, acts = _forward_states(model, x)
    delta = -2.0 * eta * (t - acts[-1])
    grads = [None] * len(model.layers)
    for i in range(len(model.layers) - 1, -1, -1):
        w, _ = model.layers[i]
        grads[i] = (delta @ acts[i].T, delta.sum(axis=1))
        if i > 0:
            delta = (w.T @ delta) * (pre[i - 1] > 0.0)
    return grads


class AdamState:
    """Adam moment accumulators for one encoder.

    Mutated in place by adam_step; serialize steps per model externally.
    """

    def __init__(
        self,
        model: EncoderModel,
        learning_rate: float = 1e-3,
        beta1: float = 0.9,
        beta2: float = 0.999,
        epsilon: float = 1e-8,
    ):
        if learning_rate <= 0.0:
            raise ValueError(f"learning_rate must be positive, got {learning_rate}")
        if not 0.0 <= beta1 < 1.0 or not 0.0 <= beta2 < 1.0:
            raise ValueError("beta1 and beta2 must lie in [0, 1)")
        if epsilon <= 0.0:
            raise ValueError(f"epsilon must be positive, got {epsilon}")
        self.learning_rate = float(learning_rate)
        self.beta1 = float(beta1)
        self.beta2 = float(beta2)
        self.epsilon = float(epsilon)
        self.step = 0
        self.m = [(np.zeros_like(w), np.zeros_like(b)) for w, b in model.layers]
        self.v = [(np.zeros_like(w), np.zeros_like(b)) for w, b in model.layers]


def adam_step(state: AdamState, model: EncoderModel, grads) -> None:
    """Apply one bias-corrected Adam update to the model, in place."""
    if len(grads) != len(model.layers):
        raise ValueError(
            f"got {len(grads)} gradient pairs for {len(model.layers)} layers"
        )
    for (w, b), (dw, db) in zip(model.layers, grads):
        if dw.shape != w.shape or db.shape != b.shape:
            raise ValueError("gradient shapes do not mirror parameters")
    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    for i, ((w, b), (dw, db)) in enumerate(zip(model.layers, grads)):
        for param, grad, m, v in (
            (w, dw, state.m[i][0], state.v[i][0]),
            (b, db, state.m[i][1], state.v[i][1]),
        ):
            m *= b1
            m += (1.0 - b1) * grad
            v *= b2
            v += (1.0 - b2) * grad**2
            m_hat = m / (1.0 - b1**t)
            v_hat = v / (1.0 - b2**t)
            param -= state.learning_rate * m_hat / (np.sqrt(v_hat) + state.epsilon)
