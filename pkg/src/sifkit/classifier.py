"""Multi-class cosine-similarity classifier over mask embeddings.

Feature extractor: two 3x3 convolutions (stride 1, pad 1) with ReLU,
global average pooling, and a fully connected projection to a d-dim
feature vector. Scoring: gamma-scaled cosine similarity between the
feature and per-class weight rows, with a background row at index 0,
base-class rows after it, and reserved novel rows at the end that stay
zero (and masked out of prediction and loss) until imprinted.

Training is plain SGD with manually derived gradients; there is no
autodiff anywhere in the package, which keeps runs bit-reproducible
from a single seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .numcore import ZERO_NORM_EPS, Rng, require_finite, softmax_cross_entropy


@dataclass
class ClassLayout:
    """Row layout of the weight matrix: [background | base... | novel...].

    Rows for novel classes are reserved up front and flagged active only
    once imprinted; inactive rows are all-zero and excluded from argmax
    and loss.
    """

    base_class_ids: list[int]
    novel_class_ids: list[int]
    background_index: int = 0
    active_novel: list[bool] = field(default_factory=list)

    def __post_init__(self):
        if self.background_index != 0:
            raise ValueError("background row must be index 0")
        ids = list(self.base_class_ids) + list(self.novel_class_ids)
        if len(set(ids)) != len(ids):
            raise ValueError("base and novel class ids must be disjoint")
        if any(i == 0 for i in ids):
            raise ValueError("class id 0 is reserved for background")
        if not self.active_novel:
            self.active_novel = [False] * len(self.novel_class_ids)
        if len(self.active_novel) != len(self.novel_class_ids):
            raise ValueError("active flags must match novel class count")

    @property
    def n_base(self) -> int:
        return len(self.base_class_ids)

    @property
    def n_novel(self) -> int:
        return len(self.novel_class_ids)

    @property
    def total_classes(self) -> int:
        return 1 + self.n_base + self.n_novel

    def base_rows(self) -> range:
        return range(1, 1 + self.n_base)

    def novel_rows(self) -> range:
        return range(1 + self.n_base, self.total_classes)

    def is_novel_row(self, row: int) -> bool:
        return row >= 1 + self.n_base

    def row_is_active(self, row: int) -> bool:
        if self.is_novel_row(row):
            return self.active_novel[row - 1 - self.n_base]
        return True

    def active_rows(self) -> np.ndarray:
        return np.array([r for r in range(self.total_classes) if self.row_is_active(r)])

    def row_for_category(self, category_id: int) -> int:
        """Row index for a category id; id 0 means background."""
        if category_id == 0:
            return 0
        if category_id in self.base_class_ids:
            return 1 + self.base_class_ids.index(category_id)
        if category_id in self.novel_class_ids:
            return 1 + self.n_base + self.novel_class_ids.index(category_id)
        raise ValueError(f"unknown category id {category_id}")

    def category_for_row(self, row: int) -> int:
        if row == 0:
            return 0
        if row < 1 + self.n_base:
            return self.base_class_ids[row - 1]
        return self.novel_class_ids[row - 1 - self.n_base]

    def copy(self) -> "ClassLayout":
        return ClassLayout(
            base_class_ids=list(self.base_class_ids),
            novel_class_ids=list(self.novel_class_ids),
            background_index=self.background_index,
            active_novel=list(self.active_novel),
        )


@dataclass
class TrainConfig:
    learning_rate: float = 0.005
    point_batch: int = 16
    epochs: int = 20
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.point_batch < 1:
            raise ValueError("point_batch must be >= 1")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")


@dataclass
class ClassifierModel:
    conv1_w: np.ndarray  # (c_mid, c_in, 3, 3)
    conv1_b: np.ndarray  # (c_mid,)
    conv2_w: np.ndarray  # (c_mid, c_mid, 3, 3)
    conv2_b: np.ndarray  # (c_mid,)
    fc_w: np.ndarray  # (d, c_mid)
    fc_b: np.ndarray  # (d,)
    weights: np.ndarray  # (C, d) cosine rows
    gamma: float
    layout: ClassLayout
    epoch_losses: list = field(default_factory=list)

    @property
    def c_in(self) -> int:
        return self.conv1_w.shape[1]

    @property
    def c_mid(self) -> int:
        return self.conv1_w.shape[0]

    @property
    def d(self) -> int:
        return self.fc_w.shape[0]

    @property
    def n_classes(self) -> int:
        return self.weights.shape[0]

    def validate(self) -> "ClassifierModel":
        if self.gamma <= 0:
            raise ValueError("gamma must be positive")
        if self.weights.shape != (self.layout.total_classes, self.d):
            raise ValueError("weight matrix does not match layout")
        for name, t in self.param_items():
            require_finite(t, name)
        return self

    def param_items(self):
        return [
            ("conv1_w", self.conv1_w),
            ("conv1_b", self.conv1_b),
            ("conv2_w", self.conv2_w),
            ("conv2_b", self.conv2_b),
            ("fc_w", self.fc_w),
            ("fc_b", self.fc_b),
            ("weights", self.weights),
        ]

    def copy(self) -> "ClassifierModel":
        return ClassifierModel(
            conv1_w=self.conv1_w.copy(),
            conv1_b=self.conv1_b.copy(),
            conv2_w=self.conv2_w.copy(),
            conv2_b=self.conv2_b.copy(),
            fc_w=self.fc_w.copy(),
            fc_b=self.fc_b.copy(),
            weights=self.weights.copy(),
            gamma=self.gamma,
            layout=self.layout.copy(),
            epoch_losses=list(self.epoch_losses),
        )


@dataclass
class Gradients:
    conv1_w: np.ndarray
    conv1_b: np.ndarray
    conv2_w: np.ndarray
    conv2_b: np.ndarray
    fc_w: np.ndarray
    fc_b: np.ndarray
    weights: np.ndarray
    loss: float


def _im2col(x: np.ndarray, kh: int, kw: int) -> np.ndarray:
    """Unfold (c, h, w) into (c*kh*kw, h*w) columns with zero padding."""
    c, h, w = x.shape
    ph, pw = kh // 2, kw // 2
    xp = np.pad(x, ((0, 0), (ph, ph), (pw, pw)))
    windows = np.lib.stride_tricks.sliding_window_view(xp, (kh, kw), axis=(1, 2))
    # (c, h, w, kh, kw) -> (c, kh, kw, h*w)
    return windows.transpose(0, 3, 4, 1, 2).reshape(c * kh * kw, h * w)


def _col2im(cols: np.ndarray, c: int, h: int, w: int, kh: int, kw: int) -> np.ndarray:
    """Adjoint of _im2col: scatter-add columns back to a (c, h, w) image."""
    ph, pw = kh // 2, kw // 2
    out = np.zeros((c, h + 2 * ph, w + 2 * pw))
    cols = cols.reshape(c, kh, kw, h, w)
    for ky in range(kh):
        for kx in range(kw):
            out[:, ky : ky + h, kx : kx + w] += cols[:, ky, kx]
    return out[:, ph : ph + h, pw : pw + w]


def conv2d(x: np.ndarray, weight: np.ndarray, bias: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Same-size 2-D convolution; returns (output, columns cache)."""
    c_out, c_in, kh, kw = weight.shape
    cols = _im2col(x, kh, kw)
    out = weight.reshape(c_out, -1) @ cols + bias[:, None]
    return out.reshape(c_out, x.shape[1], x.shape[2]), cols


def conv2d_backward(
    dz: np.ndarray, cols: np.ndarray, weight: np.ndarray, x_shape: tuple
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Gradients (dweight, dbias, dx) of conv2d given upstream dz."""
    c_out, c_in, kh, kw = weight.shape
    c, h, w = x_shape
    dzf = dz.reshape(c_out, -1)
    dweight = (dzf @ cols.T).reshape(weight.shape)
    dbias = dzf.sum(axis=1)
    dcols = weight.reshape(c_out, -1).T @ dzf
    dx = _col2im(dcols, c, h, w, kh, kw)
    return dweight, dbias, dx


def _forward_trace(model: ClassifierModel, x: np.ndarray) -> dict:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 3 or x.shape[0] != model.c_in:
        raise ValueError("input shape mismatch")
    if x.shape[1] < 3 or x.shape[2] < 3:
        raise ValueError("input shape mismatch: spatial extent below 3x3")
    z1, cols1 = conv2d(x, model.conv1_w, model.conv1_b)
    a1 = np.maximum(z1, 0.0)
    z2, cols2 = conv2d(a1, model.conv2_w, model.conv2_b)
    a2 = np.maximum(z2, 0.0)
    pooled = a2.mean(axis=(1, 2))
    f = model.fc_w @ pooled + model.fc_b
    return {
        "x": x, "z1": z1, "a1": a1, "cols1": cols1,
        "z2": z2, "a2": a2, "cols2": cols2,
        "pooled": pooled, "f": f,
    }


def feature_extract(model: ClassifierModel, x: np.ndarray) -> np.ndarray:
    """Run the feature extractor on one (c_in, h, w) embedding."""
    f = _forward_trace(model, x)["f"]
    return require_finite(f, "feature vector")


def _cosine_trace(model: ClassifierModel, f: np.ndarray) -> dict:
    """Cosines of f against every weight row.

    Dot products and norms run over the full fixed-shape matrix (never an
    active-row slice) so the numbers for untouched rows are bit-identical
    before and after a novel row is imprinted or removed.
    """
    f = np.asarray(f, dtype=np.float64)
    nf = float(np.linalg.norm(f))
    if nf <= ZERO_NORM_EPS:
        raise ValueError("zero-norm feature vector")
    active_mask = np.array([model.layout.row_is_active(r) for r in range(model.n_classes)])
    norms = np.linalg.norm(model.weights, axis=1)
    if np.any(norms[active_mask] <= ZERO_NORM_EPS):
        bad = int(np.nonzero(active_mask & (norms <= ZERO_NORM_EPS))[0][0])
        raise ValueError(f"uninitialized class row {bad}")
    safe_norms = np.where(norms > ZERO_NORM_EPS, norms, 1.0)
    cos = np.clip((model.weights @ f) / (safe_norms * nf), -1.0, 1.0)
    scores = np.where(active_mask, model.gamma * cos, -np.inf)
    return {
        "f": f, "nf": nf, "u": f / nf,
        "active_mask": active_mask, "norms": safe_norms,
        "cos": cos, "scores": scores,
    }


def cosine_scores(model: ClassifierModel, f: np.ndarray) -> np.ndarray:
    """Per-class scores gamma * cos(f, W_row); inactive rows score -inf.

    The cosine is clipped to [-1, 1] so rounding can never push a score
    past gamma; an exactly aligned feature scores exactly gamma.
    """
    return _cosine_trace(model, f)["scores"]


def classifier_forward(model: ClassifierModel, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Scores over all class rows plus the feature vector (for imprinting)."""
    f = feature_extract(model, x)
    return cosine_scores(model, f), f


def predict_row(model: ClassifierModel, x: np.ndarray) -> int:
    scores, _ = classifier_forward(model, x)
    return int(np.argmax(scores))


def classifier_backward(model: ClassifierModel, x: np.ndarray, label: int) -> Gradients:
    """Analytic gradients of softmax cross-entropy at class row `label`.

    Differentiates through the cosine head including both feature and
    row normalization, then back through fc, pooling, ReLUs, and both
    convolutions. Inactive novel rows take no part: their scores are
    excluded from the softmax and their weight gradients are zero.
    """
    layout = model.layout
    if not 0 <= label < model.n_classes or not layout.row_is_active(label):
        raise ValueError(f"inactive label row {label}")
    trace = _forward_trace(model, x)
    head = _cosine_trace(model, trace["f"])
    u, nf = head["u"], head["nf"]
    cos, norms = head["cos"], head["norms"]
    v = model.weights / norms[:, None]

    loss, g_full = softmax_cross_entropy(head["scores"], label)
    g = np.where(head["active_mask"], g_full, 0.0)

    # d loss / d W rows: gamma * g_c * (u - cos_c * v_c) / ||W_c||
    dW = model.gamma * g[:, None] * (u[None, :] - cos[:, None] * v) / norms[:, None]
    dW[~head["active_mask"]] = 0.0

    # d loss / d f through u = f / ||f||
    du = model.gamma * (g @ v)
    df = (du - float(du @ u) * u) / nf

    dfc_w = np.outer(df, trace["pooled"])
    dfc_b = df
    dpooled = model.fc_w.T @ df

    h, w = x.shape[1], x.shape[2]
    da2 = np.broadcast_to(dpooled[:, None, None] / (h * w), trace["a2"].shape)
    dz2 = np.where(trace["z2"] > 0, da2, 0.0)
    dconv2_w, dconv2_b, da1 = conv2d_backward(dz2, trace["cols2"], model.conv2_w, trace["a1"].shape)
    dz1 = np.where(trace["z1"] > 0, da1, 0.0)
    dconv1_w, dconv1_b, _ = conv2d_backward(dz1, trace["cols1"], model.conv1_w, trace["x"].shape)

    return Gradients(
        conv1_w=dconv1_w, conv1_b=dconv1_b,
        conv2_w=dconv2_w, conv2_b=dconv2_b,
        fc_w=dfc_w, fc_b=dfc_b,
        weights=dW, loss=loss,
    )


def init_model(
    layout: ClassLayout,
    c_in: int,
    c_mid: int = 32,
    d: int = 64,
    gamma: float = 7.0,
    seed: int = 0,
) -> ClassifierModel:
    """He-uniform convolution/fc init; background and base cosine rows are
    unit Gaussian directions, reserved novel rows are zero and inactive."""
    rng = Rng(seed)

    def he_uniform(shape, fan_in):
        limit = math.sqrt(6.0 / fan_in)
        return rng.uniform_array(shape, -limit, limit)

    conv1_w = he_uniform((c_mid, c_in, 3, 3), c_in * 9)
    conv2_w = he_uniform((c_mid, c_mid, 3, 3), c_mid * 9)
    fc_w = he_uniform((d, c_mid), c_mid)

    layout = layout.copy()
    layout.active_novel = [False] * layout.n_novel
    weights = np.zeros((layout.total_classes, d))
    for row in range(1 + layout.n_base):
        vec = rng.normal_vector(d)
        weights[row] = vec / np.linalg.norm(vec)

    return ClassifierModel(
        conv1_w=conv1_w,
        conv1_b=np.zeros(c_mid),
        conv2_w=conv2_w,
        conv2_b=np.zeros(c_mid),
        fc_w=fc_w,
        fc_b=np.zeros(d),
        weights=weights,
        gamma=gamma,
        layout=layout,
    ).validate()


def train_classifier(
    samples: list,
    layout: ClassLayout,
    cfg: TrainConfig,
    c_mid: int = 32,
    d: int = 64,
    gamma: float = 7.0,
) -> ClassifierModel:
    """SGD training on (embedding, category_id) pairs over background and
    base classes only.

    Labels are category ids (0 = background). Every base class must be
    represented; novel labels are rejected. The returned model records
    the per-epoch mean loss in `epoch_losses`.
    """
    if not samples:
        raise ValueError("no training samples")
    novel = set(layout.novel_class_ids)
    seen_base = set()
    label_rows = []
    for _, cat in samples:
        if cat in novel:
            raise ValueError("novel labels forbidden in base training")
        label_rows.append(layout.row_for_category(cat))
        if cat in layout.base_class_ids:
            seen_base.add(cat)
    missing = sorted(set(layout.base_class_ids) - seen_base)
    if missing:
        raise ValueError(f"no samples for base class ids {missing}")

    rng = Rng(cfg.seed)
    c_in = np.asarray(samples[0][0]).shape[0]
    model = init_model(layout, c_in, c_mid=c_mid, d=d, gamma=gamma, seed=rng.next_u64())

    order = list(range(len(samples)))
    for _ in range(cfg.epochs):
        rng.shuffle(order)
        total_loss = 0.0
        for start in range(0, len(order), cfg.point_batch):
            batch = order[start : start + cfg.point_batch]
            acc = None
            for idx in batch:
                x, _ = samples[idx]
                g = classifier_backward(model, x, label_rows[idx])
                total_loss += g.loss
                if acc is None:
                    acc = g
                else:
                    acc.conv1_w += g.conv1_w
                    acc.conv1_b += g.conv1_b
                    acc.conv2_w += g.conv2_w
                    acc.conv2_b += g.conv2_b
                    acc.fc_w += g.fc_w
                    acc.fc_b += g.fc_b
                    acc.weights += g.weights
            scale = cfg.learning_rate / len(batch)
            model.conv1_w -= scale * acc.conv1_w
            model.conv1_b -= scale * acc.conv1_b
            model.conv2_w -= scale * acc.conv2_w
            model.conv2_b -= scale * acc.conv2_b
            model.fc_w -= scale * acc.fc_w
            model.fc_b -= scale * acc.fc_b
            model.weights -= scale * acc.weights
        model.epoch_losses.append(total_loss / len(order))
    return model.validate()
