"""Per-task training: combined boundary + augmentation objective, Adam updates.

One task runs as: init fresh tokens, embed the task's samples once, compute
class centroids and quantile radii, then iterate epochs of batched combined
steps. Closing the task freezes its tokens, snapshots its spheres and folds
them into the knowledge space (promoting any overlapped pseudo spheres).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .boundaries import (
    RADIUS_FLOOR,
    Hypersphere,
    MarginConfig,
    fallback_radius,
    init_radius,
    margin_loss,
)
from .errors import NumericalError, UsageError
from .features import Backbone, augmented_feature, extract_batch
from .geometry import seeded_rng
from .knowledge import KnowledgeSpace, promote
from .tokens import TokenBank

# stream tag for per-epoch batch shuffling
_SHUFFLE_STREAM = 4


@dataclass(frozen=True)
class TrainConfig:
    gamma: float = 0.5
    epochs: int = 20
    batch_size: int = 25
    learning_rate: float = 0.03
    beta1: float = 0.9
    beta2: float = 0.999
    eps_opt: float = 1e-8
    seed: int = 7

    def __post_init__(self):
        if not 0.0 <= self.gamma <= 1.0:
            raise UsageError("gamma must lie in [0, 1]")
        if self.batch_size < 1 or self.epochs < 1:
            raise UsageError("batch_size and epochs must be positive")


@dataclass(frozen=True)
class TokenConfig:
    tokens_per_task: int = 25
    token_length: int = 5
    select_k: int = 5
    lambda_key: float = 0.5

    def __post_init__(self):
        if self.tokens_per_task < self.select_k:
            raise UsageError("tokens_per_task must be at least select_k")
        if self.select_k < 1 or self.token_length < 1:
            raise UsageError("select_k and token_length must be positive")


class Classifier:
    """Linear softmax classifier over augmented features.

    Output columns are appended as classes register; existing columns are
    never touched by growth, only by their own gradient updates.
    """

    def __init__(self, feature_dim: int):
        self.feature_dim = feature_dim
        self.weights = np.zeros((feature_dim, 0))
        self.bias = np.zeros(0)
        self.class_ids: list[int] = []
        self._column = {}

    @property
    def num_classes(self) -> int:
        return len(self.class_ids)

    def register(self, class_ids) -> None:
        new = list(class_ids)
        for cid in new:
            if cid in self._column:
                raise UsageError(f"class {cid} already registered")
        self.weights = np.hstack([self.weights, np.zeros((self.feature_dim, len(new)))])
        self.bias = np.concatenate([self.bias, np.zeros(len(new))])
        for cid in new:
            self._column[cid] = len(self.class_ids)
            self.class_ids.append(cid)

    def column_of(self, cid: int) -> int:
        if cid not in self._column:
            raise UsageError(f"label {cid} is not registered")
        return self._column[cid]

    def logits(self, features) -> np.ndarray:
        return np.atleast_2d(np.asarray(features, dtype=float)) @ self.weights + self.bias

    def predict(self, features) -> list[int]:
        z = self.logits(features)
        return [self.class_ids[i] for i in np.argmax(z, axis=1)]


def classification_loss(clf: Classifier, features, labels):
    """Mean cross-entropy with stable softmax.

    Returns (loss, grad_weights, grad_bias, grad_features); the feature
    gradient is what backpropagates into the pooled token values.
    """
    feats = np.atleast_2d(np.asarray(features, dtype=float))
    cols = np.array([clf.column_of(y) for y in labels])
    batch = feats.shape[0]
    z = feats @ clf.weights + clf.bias
    z_shift = z - z.max(axis=1, keepdims=True)
    expz = np.exp(z_shift)
    sums = expz.sum(axis=1, keepdims=True)
    log_p = z_shift - np.log(sums)
    loss = float(-log_p[np.arange(batch), cols].mean())
    g = expz / sums
    g[np.arange(batch), cols] -= 1.0
    g /= batch
    grad_w = feats.T @ g
    grad_b = g.sum(axis=0)
    grad_f = g @ clf.weights.T
    return loss, grad_w, grad_b, grad_f


class Adam:
    """Adaptive-moment optimizer with lazily created per-tensor state."""

    def __init__(self, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self._state: dict[str, list] = {}

    def step(self, name: str, param: np.ndarray, grad: np.ndarray) -> None:
        """One in-place update of ``param``. Zero gradient leaves it unchanged."""
        st = self._state.get(name)
        if st is None:
            st = [0, np.zeros_like(param), np.zeros_like(param)]
            self._state[name] = st
        st[0] += 1
        t, m, v = st[0], st[1], st[2]
        m += (1.0 - self.beta1) * (grad - m)
        v += (1.0 - self.beta2) * (grad * grad - v)
        m_hat = m / (1.0 - self.beta1**t)
        v_hat = v / (1.0 - self.beta2**t)
        param -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)

    def grow(self, name: str, pad: int, axis: int) -> None:
        """Zero-pad an existing moment pair when its parameter grows."""
        st = self._state.get(name)
        if st is None or pad == 0:
            return
        widths = [(0, 0)] * st[1].ndim
        widths[axis] = (0, pad)
        st[1] = np.pad(st[1], widths)
        st[2] = np.pad(st[2], widths)


@dataclass
class TaskParams:
    """Live (trainable) parameters of the currently open task."""

    task: int
    class_ids: list[int]
    centroids: np.ndarray  # (n_classes, dim)
    radii: np.ndarray  # (n_classes,)
    token_rows: list[int]  # bank indices of this task's tokens
    keys: np.ndarray  # (tokens_per_task, dim), viewed by the bank tokens
    values: np.ndarray  # (tokens_per_task, token_length, dim)


@dataclass
class TrainerState:
    """Everything learnable (and its configuration) across the task stream."""

    backbone: Backbone
    bank: TokenBank
    classifier: Classifier
    space: KnowledgeSpace
    margin: np.ndarray  # stored 1-element so the optimizer treats it uniformly
    optimizer: Adam
    train_cfg: TrainConfig
    margin_cfg: MarginConfig
    token_cfg: TokenConfig
    closed_tasks: set = field(default_factory=set)


def init_state(
    backbone: Backbone,
    train_cfg: TrainConfig,
    margin_cfg: MarginConfig,
    token_cfg: TokenConfig,
) -> TrainerState:
    dim = backbone.output_dim
    return TrainerState(
        backbone=backbone,
        bank=TokenBank(dim, token_cfg.token_length),
        classifier=Classifier(dim * (1 + token_cfg.select_k)),
        space=KnowledgeSpace(),
        margin=np.array([margin_cfg.m]),
        optimizer=Adam(
            train_cfg.learning_rate, train_cfg.beta1, train_cfg.beta2, train_cfg.eps_opt
        ),
        train_cfg=train_cfg,
        margin_cfg=margin_cfg,
        token_cfg=token_cfg,
    )


def combined_step(state: TrainerState, params: TaskParams, h, labels, feats, selected):
    """One optimizer step of gamma * L_margin + (1 - gamma) * L_aug.

    ``h`` are the batch embeddings, ``feats`` their augmented versions and
    ``selected`` the per-sample token rows (bank indices). All losses and
    gradients are computed before any parameter moves, so a non-finite total
    aborts with the state untouched. Returns (l_margin, l_aug, total).
    """
    cfg = state.train_cfg
    gamma = cfg.gamma
    h = np.asarray(h, dtype=float)
    labels = np.asarray(labels)
    batch = h.shape[0]

    # boundary side: classes with a positive in this batch, negatives are the
    # batch's other same-task samples
    present = [i for i, cid in enumerate(params.class_ids) if np.any(labels == cid)]
    pos = [h[labels == params.class_ids[i]] for i in present]
    neg = [h[labels != params.class_ids[i]] for i in present]
    l_margin, g_cent_sub, g_rad_sub, g_margin = margin_loss(
        params.centroids[present],
        params.radii[present],
        float(state.margin[0]),
        pos,
        neg,
        state.margin_cfg,
    )
    g_cent = np.zeros_like(params.centroids)
    g_rad = np.zeros_like(params.radii)
    g_cent[present] = g_cent_sub
    g_rad[present] = g_rad_sub

    # augmentation side: cross-entropy plus the key pull, averaged over the batch
    l_cls, g_w, g_b, g_f = classification_loss(state.classifier, feats, labels)
    dim = state.backbone.output_dim
    row_of = {r: j for j, r in enumerate(params.token_rows)}
    g_keys = np.zeros_like(params.keys)
    g_values = np.zeros_like(params.values)
    l_pull = 0.0
    for i in range(batch):
        lk, key_grads = state.bank.key_pull_loss(h[i], selected[i], state.token_cfg.lambda_key)
        l_pull += lk
        for slot, row in enumerate(selected[i]):
            j = row_of[row]
            g_keys[j] += key_grads[slot] / batch
            seg = g_f[i, dim * (1 + slot) : dim * (2 + slot)]
            g_values[j] += seg / params.values.shape[1]
    l_pull /= batch
    l_aug = l_cls + l_pull

    total = gamma * l_margin + (1.0 - gamma) * l_aug
    if not np.isfinite(total):
        raise NumericalError(
            f"non-finite combined loss at task {params.task}; step aborted"
        )

    opt = state.optimizer
    t = params.task
    opt.step(f"task{t}.centroids", params.centroids, gamma * g_cent)
    opt.step(f"task{t}.radii", params.radii, gamma * g_rad)
    opt.step("margin", state.margin, gamma * np.array([g_margin]))
    opt.step(f"task{t}.keys", params.keys, (1.0 - gamma) * g_keys)
    opt.step(f"task{t}.values", params.values, (1.0 - gamma) * g_values)
    opt.step("clf.weights", state.classifier.weights, (1.0 - gamma) * g_w)
    opt.step("clf.bias", state.classifier.bias, (1.0 - gamma) * g_b)
    np.maximum(params.radii, RADIUS_FLOOR, out=params.radii)
    np.maximum(state.margin, RADIUS_FLOOR, out=state.margin)
    return l_margin, l_aug, total


def open_task(state: TrainerState, episode) -> TaskParams:
    """Initialize tokens, centroids and radii for a new task."""
    t = episode.task_index
    if t in state.closed_tasks:
        raise UsageError(f"task {t} was already trained")
    rows = state.bank.init_task_tokens(t, state.token_cfg.tokens_per_task, state.train_cfg.seed)
    keys = np.stack([state.bank.tokens[i].key for i in rows])
    values = np.stack([state.bank.tokens[i].values for i in rows])
    for j, i in enumerate(rows):
        state.bank.tokens[i].key = keys[j]
        state.bank.tokens[i].values = values[j]

    embeddings = extract_batch(state.backbone, np.stack([x for x, _ in episode.train]))
    labels = np.array([cid for _, cid in episode.train])
    class_ids = sorted(set(int(c) for c in labels))
    centroids = np.stack([embeddings[labels == cid].mean(axis=0) for cid in class_ids])
    # the quantile rule uses the configured margin: radius construction is a
    # fresh-class event, decoupled from the decaying learnable scalar
    radii = np.empty(len(class_ids))
    for i, cid in enumerate(class_ids):
        negatives = embeddings[labels != cid]
        if negatives.size:
            radii[i] = init_radius(centroids[i], negatives, state.margin_cfg)
        else:
            radii[i] = fallback_radius(centroids[i], embeddings[labels == cid])

    grown = len(class_ids)
    state.classifier.register(class_ids)
    state.optimizer.grow("clf.weights", grown, axis=1)
    state.optimizer.grow("clf.bias", grown, axis=0)
    return TaskParams(t, class_ids, centroids, radii, rows, keys, values)


def close_task(state: TrainerState, params: TaskParams) -> list[Hypersphere]:
    """Freeze the task's tokens, snapshot its spheres, fold into the space."""
    for j, i in enumerate(params.token_rows):
        state.bank.tokens[i].key = params.keys[j].copy()
        state.bank.tokens[i].values = params.values[j].copy()
    spheres = [
        Hypersphere(cid, params.centroids[i].copy(), float(params.radii[i]), params.task, "known")
        for i, cid in enumerate(params.class_ids)
    ]
    promote(state.space, spheres, params.task)
    state.closed_tasks.add(params.task)
    return spheres


def train_task(state: TrainerState, episode) -> list[tuple]:
    """Run the full per-task loop; returns one (task, epoch, l_margin,
    l_aug, total) row per epoch with batch-mean losses."""
    cfg = state.train_cfg
    tcfg = state.token_cfg
    params = open_task(state, episode)
    t = params.task

    embeddings = extract_batch(state.backbone, np.stack([x for x, _ in episode.train]))
    labels = np.array([cid for _, cid in episode.train])
    n = embeddings.shape[0]

    trace = []
    for epoch in range(cfg.epochs):
        order = seeded_rng(cfg.seed, _SHUFFLE_STREAM, t, epoch).permutation(n)
        sums = np.zeros(3)
        steps = 0
        for lo in range(0, n, cfg.batch_size):
            bidx = order[lo : lo + cfg.batch_size]
            hb = embeddings[bidx]
            yb = labels[bidx]
            selected = state.bank.select_batch(hb, tcfg.select_k, scope_task=t)
            for sel in selected:
                state.bank.record_selection(sel)
            feats = np.stack(
                [
                    augmented_feature(
                        hb[i],
                        [state.bank.tokens[s].values for s in selected[i]],
                        tcfg.select_k,
                    )
                    for i in range(len(bidx))
                ]
            )
            losses = combined_step(state, params, hb, yb, feats, selected)
            sums += np.array(losses)
            steps += 1
        means = sums / steps
        trace.append((t, epoch, float(means[0]), float(means[1]), float(means[2])))

    close_task(state, params)
    return trace
