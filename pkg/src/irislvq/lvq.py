"""LVQ1 codebooks, a majority-voting ensemble of them, and evaluation metrics."""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .errors import DataError, DimensionError, ParameterError

DEFAULT_ALPHAS = (0.1, 0.2, 0.3)
MODEL_HEADER = "irislvq-model 1"


@dataclass(frozen=True)
class LvqConfig:
    learning_rate: float = 0.1
    epochs: int = 500
    prototypes_per_class: int = 2
    total_prototypes_cap: int = 40
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.learning_rate < 1:
            raise ParameterError(f"learning rate must lie in (0, 1), got {self.learning_rate}")
        if self.epochs < 1:
            raise ParameterError("epochs must be >= 1")
        if self.prototypes_per_class < 1 or self.total_prototypes_cap < 1:
            raise ParameterError("prototype counts must be >= 1")


@dataclass
class Codebook:
    vectors: np.ndarray  # (n_prototypes, dimension)
    labels: np.ndarray  # (n_prototypes,) int
    prototypes_per_class: int = 0
    reduced: bool = False

    @property
    def dimension(self) -> int:
        return int(self.vectors.shape[1])

    def copy(self) -> "Codebook":
        return Codebook(self.vectors.copy(), self.labels.copy(), self.prototypes_per_class, self.reduced)


def _check_data(X, y) -> tuple[np.ndarray, np.ndarray]:
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise DataError("training data must be a non-empty 2-D array")
    if y.shape != (X.shape[0],):
        raise DataError("one label per sample is required")
    return X, y


def init_codebook(X, y, cfg: LvqConfig, rng: np.random.Generator | None = None) -> Codebook:
    """Draw ``prototypes_per_class`` distinct training samples per class.

    When ``classes * prototypes_per_class`` exceeds the cap, the per-class count
    drops to ``max(1, cap // classes)``.
    """
    X, y = _check_data(X, y)
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    classes = np.unique(y)
    per_class = cfg.prototypes_per_class
    reduced = False
    if classes.size * per_class > cfg.total_prototypes_cap:
        per_class = max(1, cfg.total_prototypes_cap // classes.size)
        reduced = True
    vectors, labels = [], []
    for c in classes:
        idx = np.flatnonzero(y == c)
        if idx.size < per_class:
            raise DataError(f"class {int(c)} has {idx.size} samples, needs {per_class}")
        pick = rng.choice(idx, size=per_class, replace=False)
        vectors.append(X[pick])
        labels.extend([int(c)] * per_class)
    return Codebook(np.vstack(vectors).copy(), np.array(labels, dtype=np.int64), per_class, reduced)


def nearest_prototype(cb: Codebook, x) -> tuple[int, float]:
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (cb.dimension,):
        raise DimensionError(f"vector has dimension {x.size}, codebook expects {cb.dimension}")
    d2 = np.einsum("ij,ij->i", cb.vectors - x, cb.vectors - x)
    k = int(np.argmin(d2))
    return k, math.sqrt(d2[k])


def _nearest_batch(vectors: np.ndarray, X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    # exact differences rather than the expanded dot form: ties must resolve identically
    # to nearest_prototype, so no cancellation shortcuts
    d2 = np.empty((X.shape[0], vectors.shape[0]))
    for j in range(vectors.shape[0]):
        diff = X - vectors[j]
        d2[:, j] = np.einsum("ij,ij->i", diff, diff)
    k = np.argmin(d2, axis=1)
    return k, np.sqrt(d2[np.arange(X.shape[0]), k])


def classify(cb: Codebook, X) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if X.shape[1] != cb.dimension:
        raise DimensionError(f"vectors have dimension {X.shape[1]}, codebook expects {cb.dimension}")
    k, _ = _nearest_batch(cb.vectors, X)
    return cb.labels[k]


def update_winner(w: np.ndarray, x: np.ndarray, alpha: float, match: bool) -> np.ndarray:
    """LVQ1 rule: ``w + alpha (x - w)`` on a label match, ``w - alpha (x - w)`` otherwise."""
    step = alpha * (x - w)
    return w + step if match else w - step


UpdateHook = Callable[[np.ndarray, np.ndarray, np.ndarray, float, bool], None]


def train_lvq1(
    X,
    y,
    cfg: LvqConfig,
    log: list[float] | None = None,
    on_update: UpdateHook | None = None,
) -> Codebook:
    """Kohonen LVQ1 with a learning rate decaying linearly to zero.

    Each epoch visits every sample once in a seeded random order; the winner is
    pulled towards same-class samples and pushed away from others.  If ``log``
    is given, the end-of-epoch training accuracy is appended to it.
    ``on_update(w_old, w_new, x, alpha, match)`` observes every winner update.
    """
    X, y = _check_data(X, y)
    rng = np.random.default_rng(cfg.seed)
    cb = init_codebook(X, y, cfg, rng)
    W = cb.vectors
    # squared norms let the winner search use one matrix-vector product
    wn = np.einsum("ij,ij->i", W, W)
    for t in range(cfg.epochs):
        alpha = cfg.learning_rate * (1.0 - t / cfg.epochs)
        for i in rng.permutation(X.shape[0]):
            x = X[i]
            k = int(np.argmin(wn - 2.0 * (W @ x)))
            match = cb.labels[k] == y[i]
            old = W[k].copy()
            W[k] = update_winner(old, x, alpha, bool(match))
            wn[k] = W[k] @ W[k]
            if on_update is not None:
                on_update(old, W[k].copy(), x, alpha, bool(match))
        if log is not None:
            log.append(_training_accuracy(W, wn, cb.labels, X, y))
    return cb


def _training_accuracy(W, wn, labels, X, y) -> float:
    k = np.argmin(wn[None, :] - 2.0 * (X @ W.T), axis=1)
    return float(np.mean(labels[k] == y))


# --- ensemble ----------------------------------------------------------------------------


def default_member_configs(seed: int = 0, epochs: int = 500, prototypes_per_class: int = 2, cap: int = 40) -> list[LvqConfig]:
    return [
        LvqConfig(learning_rate=a, epochs=epochs, prototypes_per_class=prototypes_per_class, total_prototypes_cap=cap, seed=seed + i)
        for i, a in enumerate(DEFAULT_ALPHAS)
    ]


@dataclass
class TrainedEnsemble:
    members: list[Codebook]
    member_configs: list[LvqConfig]
    classes: list[int]
    training_log: list[list[float]] = field(default_factory=list)
    config_tag: str = ""

    @property
    def dimension(self) -> int:
        return self.members[0].dimension


@dataclass(frozen=True)
class Decision:
    label: int
    votes: dict[int, int]
    member_labels: list[int]
    member_distances: list[float]


def ensemble_train(X, y, member_configs: Sequence[LvqConfig], config_tag: str = "") -> TrainedEnsemble:
    X, y = _check_data(X, y)
    if not member_configs:
        raise ParameterError("an ensemble needs at least one member")
    members, logs = [], []
    for i, cfg in enumerate(member_configs):
        log: list[float] = []
        try:
            members.append(train_lvq1(X, y, cfg, log=log))
        except DataError as exc:
            raise DataError(f"member {i}: {exc}") from exc
        logs.append(log)
    classes = sorted(int(c) for c in np.unique(y))
    return TrainedEnsemble(members, list(member_configs), classes, logs, config_tag)


def vote(member_labels: Sequence[int], member_distances: Sequence[float]) -> int:
    """Majority label; ties go to the smallest summed winner distance, then smallest id."""
    counts = Counter(int(l) for l in member_labels)
    n = len(member_labels)
    top, top_count = min(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    if top_count * 2 > n:
        return top
    tied = [lab for lab, c in counts.items() if c == top_count]
    if len(tied) == 1:
        return tied[0]
    sums = {lab: math.fsum(d for l, d in zip(member_labels, member_distances) if l == lab) for lab in tied}
    return min(tied, key=lambda lab: (sums[lab], lab))


def ensemble_classify(ens: TrainedEnsemble, x) -> Decision:
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (ens.dimension,):
        raise DimensionError(f"vector has dimension {x.size}, model expects {ens.dimension}")
    labels, dists = [], []
    for cb in ens.members:
        k, d = nearest_prototype(cb, x)
        labels.append(int(cb.labels[k]))
        dists.append(d)
    return Decision(vote(labels, dists), dict(sorted(Counter(labels).items())), labels, dists)


def ensemble_predict(ens: TrainedEnsemble, X) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if X.shape[1] != ens.dimension:
        raise DimensionError(f"vectors have dimension {X.shape[1]}, model expects {ens.dimension}")
    per_member = [_nearest_batch(cb.vectors, X) for cb in ens.members]
    out = np.empty(X.shape[0], dtype=np.int64)
    for i in range(X.shape[0]):
        labels = [int(cb.labels[k[i]]) for cb, (k, _) in zip(ens.members, per_member)]
        dists = [float(d[i]) for _, d in per_member]
        out[i] = vote(labels, dists)
    return out


# --- evaluation -----------------------------------------------------------------------------


@dataclass(frozen=True)
class Metrics:
    classes: list[int]
    confusion: np.ndarray  # rows: true class, columns: predicted class
    total: int
    correct: int

    @property
    def recognition_rate(self) -> float:
        return self.correct / self.total

    @property
    def per_class_accuracy(self) -> dict[int, float]:
        rows = self.confusion.sum(axis=1)
        return {c: (float(self.confusion[i, i] / rows[i]) if rows[i] else float("nan")) for i, c in enumerate(self.classes)}


def confusion_metrics(true, pred, classes: Sequence[int]) -> Metrics:
    classes = list(classes)
    index = {c: i for i, c in enumerate(classes)}
    m = np.zeros((len(classes), len(classes)), dtype=np.int64)
    for t, p in zip(true, pred):
        m[index[int(t)], index[int(p)]] += 1
    correct = int(sum(int(t) == int(p) for t, p in zip(true, pred)))
    return Metrics(classes, m, len(list(true)), correct)


def evaluate(ens: TrainedEnsemble, X, y) -> Metrics:
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    y = np.asarray(y, dtype=np.int64)
    if X.shape[0] == 0:
        raise DataError("test set is empty")
    pred = ensemble_predict(ens, X)
    classes = sorted(set(ens.classes) | set(int(c) for c in y))
    return confusion_metrics(y, pred, classes)


# --- model file ------------------------------------------------------------------------------


def _f(v: float) -> str:
    return repr(float(v))


def dumps_model(ens: TrainedEnsemble) -> str:
    lines = [
        MODEL_HEADER,
        f"dimension {ens.dimension}",
        f"config {ens.config_tag or '-'}",
        "classes " + " ".join(str(c) for c in ens.classes),
        f"members {len(ens.members)}",
    ]
    for i, (cb, cfg) in enumerate(zip(ens.members, ens.member_configs)):
        log = ens.training_log[i] if i < len(ens.training_log) else []
        lines.append(
            f"member {i} learning_rate {_f(cfg.learning_rate)} epochs {cfg.epochs} seed {cfg.seed} "
            f"prototypes_per_class {cfg.prototypes_per_class} cap {cfg.total_prototypes_cap} "
            f"prototypes {cb.vectors.shape[0]} effective_per_class {cb.prototypes_per_class} reduced {int(cb.reduced)}"
        )
        lines.append("log " + " ".join(_f(a) for a in log))
        for vec, lab in zip(cb.vectors, cb.labels):
            lines.append(f"proto {int(lab)} " + " ".join(_f(v) for v in vec))
    return "\n".join(lines) + "\n"


def save_model(ens: TrainedEnsemble, path: str | Path) -> None:
    Path(path).write_text(dumps_model(ens))


def loads_model(text: str) -> TrainedEnsemble:
    lines = text.splitlines()
    if not lines or lines[0] != MODEL_HEADER:
        raise DataError("not a model file (bad header)")
    try:
        dim = int(lines[1].split()[1])
        tag = lines[2].split(maxsplit=1)[1]
        classes = [int(t) for t in lines[3].split()[1:]]
        n_members = int(lines[4].split()[1])
        pos = 5
        members, configs, logs = [], [], []
        for _ in range(n_members):
            f = lines[pos].split()
            kv = dict(zip(f[2::2], f[3::2]))
            cfg = LvqConfig(
                learning_rate=float(kv["learning_rate"]),
                epochs=int(kv["epochs"]),
                prototypes_per_class=int(kv["prototypes_per_class"]),
                total_prototypes_cap=int(kv["cap"]),
                seed=int(kv["seed"]),
            )
            n = int(kv["prototypes"])
            logs.append([float(t) for t in lines[pos + 1].split()[1:]])
            rows = [lines[pos + 2 + j].split() for j in range(n)]
            labels = np.array([int(r[1]) for r in rows], dtype=np.int64)
            vecs = np.array([[float(t) for t in r[2:]] for r in rows], dtype=np.float64).reshape(n, -1)
            if vecs.shape[1] != dim:
                raise DimensionError(f"member {len(members)} prototypes have dimension {vecs.shape[1]}, header says {dim}")
            members.append(Codebook(vecs, labels, int(kv["effective_per_class"]), bool(int(kv["reduced"]))))
            configs.append(cfg)
            pos += 2 + n
    except (IndexError, KeyError, ValueError) as exc:
        if isinstance(exc, DimensionError):
            raise
        raise DataError(f"malformed model file: {exc}") from exc
    return TrainedEnsemble(members, configs, classes, logs, "" if tag == "-" else tag)


def load_model(path: str | Path) -> TrainedEnsemble:
    return loads_model(Path(path).read_text())
