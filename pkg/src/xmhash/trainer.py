"""Stochastic batch-wise alternating training of codes and encoders.

Global code matrices B (image side) and H (text side) are initialized
uniformly at random in {-1, +1} and re-solved inside every mini-batch:
slice the in-batch columns, apply the closed-form image-code update, then
the text-code update using the fresh image codes, regress both encoders
one Adam step onto the new codes, and write the codes back. Mini-batches
are drawn by reshuffling the training items every epoch; the fixed
batching mode reuses the first epoch's partition instead, which exists
only as an ablation switch.

Training stops at the iteration cap, the epoch cap, or convergence: the
epoch-mean combined encoder loss (loss_f + loss_g) changing by less than
a relative tolerance over three consecutive epochs.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .codes import build_similarity, normalize_labels, pack_bits, CodeMatrix
from .encoder import AdamState, EncoderModel, adam_step, backward, forward, quantization_loss
from .objective import trace_objective, update_image_codes, update_text_codes

__all__ = [
    "TrainConfig",
    "TrainState",
    "stochastic_batches",
    "train",
    "train_step",
]

BATCHING_MODES = ("stochastic", "fixed")


@dataclass
class TrainConfig:
    """Run settings for one training job."""

    code_len: int = 16
    batch_size: int = 64
    eta: float = 1e-4
    epochs: int = 30
    max_iterations: int | None = None
    rng_seed: int = 0
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    hidden_dim: int = 512
    batching_mode: str = "stochastic"
    convergence_tol: float = 1e-5
    convergence_epochs: int = 3

    def __post_init__(self):
        if self.code_len < 1:
            raise ValueError(f"code_len must be >= 1, got {self.code_len}")
        if self.batch_size < 2:
            raise ValueError(f"batch_size must be >= 2, got {self.batch_size}")
        if self.eta < 0.0:
            raise ValueError(f"eta must be nonnegative, got {self.eta}")
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.max_iterations is not None and self.max_iterations < 1:
            raise ValueError(
                f"max_iterations must be >= 1, got {self.max_iterations}"
            )
        if self.hidden_dim < 1:
            raise ValueError(f"hidden_dim must be >= 1, got {self.hidden_dim}")
        if self.batching_mode not in BATCHING_MODES:
            raise ValueError(
                f"batching_mode must be one of {BATCHING_MODES}, "
                f"got {self.batching_mode!r}"
            )


@dataclass
class TrainState:
    """Mutable training state; the finished state is the training result.

    B and H are the global code matrices as {-1, +1} int8 arrays of shape
    (code_len, N); history holds one (epoch, iteration, loss_f, loss_g,
    objective) record per step, 1-based counters.
    """

    B: np.ndarray
    H: np.ndarray
    image_model: EncoderModel
    text_model: EncoderModel
    image_adam: AdamState
    text_adam: AdamState
    epoch: int = 0
    iteration: int = 0
    history: list = field(default_factory=list)
    epoch_losses: list = field(default_factory=list)
    converged: bool = False

    def image_codes(self) -> CodeMatrix:
        return pack_bits(self.B)

    def text_codes(self) -> CodeMatrix:
        return pack_bits(self.H)


def stochastic_batches(n: int, batch_size: int, rng: np.random.Generator):
    """Shuffle 0..n-1 and chunk into batches, dropping a trailing chunk < 2.

    A one-item batch has a degenerate similarity matrix, so it is never
    emitted.
    """
    if batch_size < 1:
        raise ValueError(f"batch_size must be >= 1, got {batch_size}")
    if batch_size > n:
        raise ValueError(f"batch_size {batch_size} exceeds item count {n}")
    perm = rng.permutation(n)
    groups = [perm[i : i + batch_size] for i in range(0, n, batch_size)]
    if len(groups[-1]) < 2:
        groups.pop()
    return groups


def train_step(state: TrainState, batch_indices, X_b, Y_b, S_b, cfg: TrainConfig) -> TrainState:
    """Run one batch: code updates, encoder Adam steps, code write-back.

    Only the columns of B and H at batch_indices change.
    """
    idx = np.asarray(batch_indices, dtype=np.int64)
    n = state.B.shape[1]
    if idx.ndim != 1 or idx.size == 0:
        raise ValueError("batch_indices must be a nonempty 1-D index array")
    if idx.min() < 0 or idx.max() >= n:
        raise ValueError(f"batch index out of range for {n} items")

    H_b = state.H[:, idx]
    f_out = forward(state.image_model, X_b)
    g_out = forward(state.text_model, Y_b)

    B_b = update_image_codes(f_out, S_b, H_b, cfg.eta).unpack()
    H_b = update_text_codes(g_out, S_b, B_b, cfg.eta).unpack()

    loss_f = quantization_loss(B_b, f_out, cfg.eta)
    loss_g = quantization_loss(H_b, g_out, cfg.eta)
    objective = trace_objective(B_b, H_b, S_b) + loss_f + loss_g

    adam_step(state.image_adam, state.image_model, backward(state.image_model, X_b, B_b, cfg.eta))
    adam_step(state.text_adam, state.text_model, backward(state.text_model, Y_b, H_b, cfg.eta))

    state.B[:, idx] = B_b
    state.H[:, idx] = H_b
    state.iteration += 1
    state.history.append((state.epoch, state.iteration, loss_f, loss_g, objective))
    return state


def train(dataset, cfg: TrainConfig) -> TrainState:
    """Run the full batch-wise alternating optimization on a paired dataset.

    dataset must expose image_features (D_x, N), text_features (D_y, N)
    and labels (N per-item label collections). Returns the final state:
    trained encoders, global codes, and the per-step loss history.
    """
    X = np.asarray(dataset.image_features, dtype=np.float64)
    Y = np.asarray(dataset.text_features, dtype=np.float64)
    labels = normalize_labels(dataset.labels)
    if X.ndim != 2 or Y.ndim != 2:
        raise ValueError("feature matrices must be 2-D (dim x count)")
    n = X.shape[1]
    if Y.shape[1] != n or len(labels) != n:
        raise ValueError(
            f"modality counts differ: images {X.shape[1]}, "
            f"texts {Y.shape[1]}, labels {len(labels)}"
        )
    if cfg.batch_size > n:
        raise ValueError(f"batch_size {cfg.batch_size} exceeds dataset size {n}")
    if all(len(ids) == 0 for ids in labels):
        raise ValueError(
            "every item is unlabeled: no similarity supervision exists, "
            "so there is nothing to train against"
        )

    code_seed, img_seed, txt_seed, batch_seed = np.random.SeedSequence(
        cfg.rng_seed
    ).spawn(4)
    code_rng = np.random.default_rng(code_seed)
    batch_rng = np.random.default_rng(batch_seed)

    m = cfg.code_len
    B = (code_rng.integers(0, 2, size=(m, n)) * 2 - 1).astype(np.int8)
    H = (code_rng.integers(0, 2, size=(m, n)) * 2 - 1).astype(np.int8)
    image_model = EncoderModel.init_random(
        [X.shape[0], cfg.hidden_dim, m], np.random.default_rng(img_seed)
    )
    text_model = EncoderModel.init_random(
        [Y.shape[0], cfg.hidden_dim, m], np.random.default_rng(txt_seed)
    )
    adam_kwargs = dict(
        learning_rate=cfg.learning_rate,
        beta1=cfg.beta1,
        beta2=cfg.beta2,
        epsilon=cfg.epsilon,
    )
    state = TrainState(
        B=B,
        H=H,
        image_model=image_model,
        text_model=text_model,
        image_adam=AdamState(image_model, **adam_kwargs),
        text_adam=AdamState(text_model, **adam_kwargs),
    )

    fixed_partition = None
    flat_epochs = 0
    for _ in range(cfg.epochs):
        if cfg.batching_mode == "fixed" and fixed_partition is not None:
            partition = fixed_partition
        else:
            partition = stochastic_batches(n, cfg.batch_size, batch_rng)
            if cfg.batching_mode == "fixed":
                fixed_partition = partition
        state.epoch += 1
        capped = False
        for idx in partition:
            if cfg.max_iterations is not None and state.iteration >= cfg.max_iterations:
                capped = True
                break
            S_b = build_similarity(
                [labels[i] for i in idx], [labels[i] for i in idx]
            ).astype(np.float64)
            train_step(state, idx, X[:, idx], Y[:, idx], S_b, cfg)

        epoch_records = [r for r in state.history if r[0] == state.epoch]
        if epoch_records:
            combined = float(np.mean([r[2] + r[3] for r in epoch_records]))
            if state.epoch_losses:
                prev = state.epoch_losses[-1]
                rel = abs(combined - prev) / max(abs(prev), 1e-12)
                flat_epochs = flat_epochs + 1 if rel < cfg.convergence_tol else 0
            state.epoch_losses.append(combined)
        if capped:
            break
        if flat_epochs >= cfg.convergence_epochs:
            state.converged = True
            break
    return state
