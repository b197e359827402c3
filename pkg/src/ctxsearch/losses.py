"""Teacher-to-student transfer losses, the training weight schedule,
finite-difference gradient checking, and a toy linear-student trainer.

All losses are pure functions over float64 arrays.  Each returns a
:class:`LossReport` carrying the scalar value plus analytic gradients for its
differentiable inputs, keyed by input name.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

# loss_fn contract used by grad_check: x -> (value, gradient w.r.t. x)
GradFn = Callable[[np.ndarray], tuple[float, np.ndarray]]

# Weight growth beyond this factor counts as divergence.  The transfer loss
# itself is bounded (features are normalized inside it), so runaway weights
# are the only observable blow-up signal in the toy trainer.
_BLOWUP_FACTOR = 1e4


@dataclass(frozen=True, eq=False)
class LossReport:
    """Scalar loss plus gradients keyed by input name."""

    value: float
    gradients: dict[str, np.ndarray] = field(default_factory=dict)


@dataclass(frozen=True, eq=False)
class LossBatch:
    """One mini-batch of student/teacher features for the re-id losses.

    ``student_feats`` are raw (pre-normalization) K x d rows; ``teacher_feats``
    are unit K x d rows.  ``labels[k]`` is a class index or None for an
    unlabeled row; ``logits`` may be omitted when no row is labeled.
    """

    student_feats: np.ndarray
    teacher_feats: np.ndarray
    labels: tuple[Optional[int], ...]
    logits: Optional[np.ndarray] = None

    def __post_init__(self) -> None:
        s = np.asarray(self.student_feats, dtype=np.float64)
        t = np.asarray(self.teacher_feats, dtype=np.float64)
        if s.ndim != 2 or s.shape[0] < 1:
            raise ValueError("student_feats must be a K x d matrix with K >= 1")
        if t.shape != s.shape:
            raise ValueError(f"teacher shape {t.shape} != student shape {s.shape}")
        if not (np.all(np.isfinite(s)) and np.all(np.isfinite(t))):
            raise ValueError("features contain non-finite values")
        norms = np.linalg.norm(t, axis=1)
        if np.max(np.abs(norms - 1.0)) > 1e-6:
            raise ValueError("teacher rows must be unit vectors")
        labels = tuple(self.labels)
        if len(labels) != s.shape[0]:
            raise ValueError(f"{len(labels)} labels for {s.shape[0]} rows")
        object.__setattr__(self, "student_feats", s)
        object.__setattr__(self, "teacher_feats", t)
        object.__setattr__(self, "labels", labels)
        if self.logits is not None:
            z = np.asarray(self.logits, dtype=np.float64)
            if z.ndim != 2 or z.shape[0] != s.shape[0]:
                raise ValueError("logits must be K x C")
            for y in labels:
                if y is not None and not 0 <= y < z.shape[1]:
                    raise ValueError(f"label {y} out of range for {z.shape[1]} classes")
            object.__setattr__(self, "logits", z)

    @property
    def size(self) -> int:
        return self.student_feats.shape[0]


@dataclass(frozen=True, eq=False)
class DetLossInputs:
    """Classification and regression inputs for the four detector loss terms."""

    rpn_cls_logits: np.ndarray
    rpn_cls_labels: tuple[int, ...]
    rpn_reg_pred: np.ndarray
    rpn_reg_target: np.ndarray
    roi_cls_logits: np.ndarray
    roi_cls_labels: tuple[int, ...]
    roi_reg_pred: np.ndarray
    roi_reg_target: np.ndarray


def transfer_loss(batch: LossBatch) -> LossReport:
    """Mean squared distance between unit-normalized student rows and teacher rows.

    Student rows are normalized inside the loss, and the gradient flows
    through that normalization.  Applies to every row, labeled or not.
    """
    s = batch.student_feats
    t = batch.teacher_feats
    k = s.shape[0]
    norms = np.linalg.norm(s, axis=1, keepdims=True)
    if np.any(norms == 0.0):
        raise ValueError("zero-norm student row")
    s_hat = s / norms
    diff = s_hat - t
    value = float(np.sum(diff * diff) / k)
    dots = np.sum(s_hat * t, axis=1, keepdims=True)
    grad = (2.0 / k) * (s_hat * dots - t) / norms
    return LossReport(value, {"student_feats": grad})


def cross_entropy(logits: np.ndarray, labels: Sequence[Optional[int]]) -> LossReport:
    """Mean negative log-likelihood over the labeled rows.

    Unlabeled rows are skipped and receive zero gradient; a batch with no
    labeled row at all is an error.
    """
    z = np.asarray(logits, dtype=np.float64)
    if z.ndim != 2:
        raise ValueError("logits must be a K x C matrix")
    if len(labels) != z.shape[0]:
        raise ValueError(f"{len(labels)} labels for {z.shape[0]} rows")
    labeled = [i for i, y in enumerate(labels) if y is not None]
    if not labeled:
        raise ValueError("cross_entropy needs at least one labeled row")
    for i in labeled:
        if not 0 <= labels[i] < z.shape[1]:
            raise ValueError(f"label {labels[i]} out of range for {z.shape[1]} classes")
    zmax = z.max(axis=1, keepdims=True)
    logsum = zmax + np.log(np.sum(np.exp(z - zmax), axis=1, keepdims=True))
    logp = z - logsum
    n = len(labeled)
    value = float(-math.fsum(logp[i, labels[i]] for i in labeled) / n)
    grad = np.zeros_like(z)
    softmax = np.exp(logp)
    for i in labeled:
        grad[i] = softmax[i] / n
        grad[i, labels[i]] -= 1.0 / n
    return LossReport(value, {"logits": grad})


def smooth_l1(pred: np.ndarray, target: np.ndarray) -> LossReport:
    """Huber-style loss: quadratic for |error| < 1, linear beyond, averaged
    over all elements.  Gradient is with respect to ``pred``."""
    p = np.asarray(pred, dtype=np.float64)
    t = np.asarray(target, dtype=np.float64)
    if p.shape != t.shape:
        raise ValueError(f"shape mismatch: {p.shape} vs {t.shape}")
    if p.size == 0:
        raise ValueError("smooth_l1 needs at least one element")
    e = p - t
    absd = np.abs(e)
    quad = absd < 1.0
    per_elem = np.where(quad, 0.5 * e * e, absd - 0.5)
    value = float(per_elem.mean())
    grad = np.where(quad, e, np.sign(e)) / e.size
    return LossReport(value, {"pred": grad})


def detection_loss(inputs: DetLossInputs) -> LossReport:
    """Unweighted sum of RPN and RoI-head classification + regression losses."""
    rpn_cls = cross_entropy(inputs.rpn_cls_logits, inputs.rpn_cls_labels)
    rpn_reg = smooth_l1(inputs.rpn_reg_pred, inputs.rpn_reg_target)
    roi_cls = cross_entropy(inputs.roi_cls_logits, inputs.roi_cls_labels)
    roi_reg = smooth_l1(inputs.roi_reg_pred, inputs.roi_reg_target)
    value = rpn_cls.value + rpn_reg.value + roi_cls.value + roi_reg.value
    return LossReport(
        value,
        {
            "rpn_cls_logits": rpn_cls.gradients["logits"],
            "rpn_reg_pred": rpn_reg.gradients["pred"],
            "roi_cls_logits": roi_cls.gradients["logits"],
            "roi_reg_pred": roi_reg.gradients["pred"],
        },
    )


def weight_schedule(epoch: int) -> float:
    """Transfer-loss weight by epoch: 5 early, then a linear 11 - 0.4*epoch
    decay through the middle epochs, then 1.  Continuous at both joins."""
    if epoch < 0:
        raise ValueError("epoch must be >= 0")
    if epoch < 15:
        return 5.0
    if epoch < 25:
        return 11.0 - 0.4 * epoch
    return 1.0


def reid_loss(batch: LossBatch, epoch: int) -> LossReport:
    """Epoch-weighted transfer loss plus cross-entropy over the labeled rows.

    An all-unlabeled batch simply contributes no classification term (training
    batches without any label are routine, not an error).
    """
    w = weight_schedule(epoch)
    transfer = transfer_loss(batch)
    grads = {"student_feats": w * transfer.gradients["student_feats"]}
    if any(y is not None for y in batch.labels):
        if batch.logits is None:
            raise ValueError("labeled rows require logits")
        ce = cross_entropy(batch.logits, batch.labels)
        value = w * transfer.value + ce.value
        grads["logits"] = ce.gradients["logits"]
    else:
        value = w * transfer.value + 0.0
        if batch.logits is not None:
            grads["logits"] = np.zeros_like(batch.logits)
    return LossReport(value, grads)


def total_loss(batch: LossBatch, det: DetLossInputs, epoch: int) -> LossReport:
    """Re-id loss plus detection loss; gradients from both parts merged."""
    reid = reid_loss(batch, epoch)
    detection = detection_loss(det)
    grads = dict(reid.gradients)
    grads.update(detection.gradients)
    return LossReport(reid.value + detection.value, grads)


def grad_check(loss_fn: GradFn, x: np.ndarray, h: float = 1e-4) -> float:
    """Largest relative disagreement between the analytic gradient of
    ``loss_fn`` and a central finite difference, over all coordinates of ``x``.

    Per-coordinate relative error is |analytic - numeric| / max(1, |numeric|).
    """
    if h <= 0.0:
        raise ValueError("step size must be positive")
    x = np.asarray(x, dtype=np.float64)
    _, analytic = loss_fn(x)
    analytic = np.asarray(analytic, dtype=np.float64)
    if analytic.shape != x.shape:
        raise ValueError("gradient shape does not match input shape")
    worst = 0.0
    for idx in np.ndindex(*x.shape):
        bumped = x.copy()
        bumped[idx] = x[idx] + h
        up, _ = loss_fn(bumped)
        bumped[idx] = x[idx] - h
        down, _ = loss_fn(bumped)
        if not (np.isfinite(up) and np.isfinite(down)):
            raise FloatingPointError("loss is non-finite at a perturbed point")
        numeric = (up - down) / (2.0 * h)
        worst = max(worst, abs(float(analytic[idx]) - numeric) / max(1.0, abs(numeric)))
    return worst


@dataclass
class ToyStudent:
    """Linear stand-in for the student feature extractor: inputs -> features."""

    weights: np.ndarray  # (d_in, d)

    def __post_init__(self) -> None:
        w = np.asarray(self.weights, dtype=np.float64)
        if w.ndim != 2 or not np.all(np.isfinite(w)):
            raise ValueError("weights must be a finite 2-D matrix")
        self.weights = w

    def features(self, raw_inputs: np.ndarray) -> np.ndarray:
        return np.asarray(raw_inputs, dtype=np.float64) @ self.weights


class DistillDivergence(RuntimeError):
    """Raised when distillation training blows up instead of converging."""

    def __init__(self, epoch: int, trace: Sequence[float]):
        super().__init__(f"divergence detected at epoch {epoch}")
        self.epoch = epoch
        self.trace = tuple(trace)


@dataclass(frozen=True, eq=False)
class DistillResult:
    """Trained student plus the transfer-loss trace (initial value first,
    value after the final step last)."""

    student: ToyStudent
    trace: tuple[float, ...]

    @property
    def initial(self) -> float:
        return self.trace[0]

    @property
    def final(self) -> float:
        return self.trace[-1]


def distill_train(
    student: ToyStudent,
    teacher_feats: np.ndarray,
    raw_inputs: np.ndarray,
    epochs: int,
    lr: float,
) -> DistillResult:
    """Full-batch gradient descent of the toy student against fixed teacher rows.

    Minimizes the epoch-weighted re-id loss; with no labels the classification
    term vanishes, leaving weight_schedule(epoch) * transfer_loss.  The input
    ``student`` is left untouched.  Raises :class:`DistillDivergence` on
    non-finite values or runaway weight growth.
    """
    if epochs < 1:
        raise ValueError("epochs must be >= 1")
    teacher = np.asarray(teacher_feats, dtype=np.float64)
    x = np.asarray(raw_inputs, dtype=np.float64)
    weights = np.array(student.weights, dtype=np.float64, copy=True)
    limit = _BLOWUP_FACTOR * max(1.0, float(np.linalg.norm(weights)))
    labels: tuple[Optional[int], ...] = (None,) * x.shape[0]
    trace: list[float] = []
    for epoch in range(epochs):
        batch = LossBatch(x @ weights, teacher, labels)
        report = transfer_loss(batch)
        trace.append(report.value)
        if not np.isfinite(report.value):
            raise DistillDivergence(epoch, trace)
        grad = weight_schedule(epoch) * report.gradients["student_feats"]
        weights = weights - lr * (x.T @ grad)
        if not np.all(np.isfinite(weights)) or float(np.linalg.norm(weights)) > limit:
            raise DistillDivergence(epoch, trace)
    final_batch = LossBatch(x @ weights, teacher, labels)
    trace.append(transfer_loss(final_batch).value)
    return DistillResult(ToyStudent(weights), tuple(trace))


@dataclass(frozen=True)
class DistillConfig:
    """Pinned toy distillation setup.

    The teacher is a hidden linear map of the same inputs, so a student that
    matches it exists and plain gradient descent can find it.
    """

    seed: int
    n_rows: int = 32
    input_dim: int = 8
    embed_dim: int = 8
    epochs: int = 400
    lr: float = 0.5
    convergence_threshold: float = 0.05


def toy_distill_problem(cfg: DistillConfig) -> tuple[ToyStudent, np.ndarray, np.ndarray]:
    """Random inputs, realizable unit teacher targets, and a random student.

    Returns ``(student, teacher_feats, raw_inputs)`` ready for distill_train.
    """
    rng = np.random.default_rng(cfg.seed)
    x = rng.normal(size=(cfg.n_rows, cfg.input_dim))
    hidden = rng.normal(size=(cfg.input_dim, cfg.embed_dim))
    targets = x @ hidden
    teacher = targets / np.linalg.norm(targets, axis=1, keepdims=True)
    student = ToyStudent(rng.normal(size=(cfg.input_dim, cfg.embed_dim)))
    return student, teacher, x
