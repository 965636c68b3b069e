"""Dataset ingestion, standardization, vertical partitioning and synthetic data."""
import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np


class DataError(ValueError):
    pass


@dataclass
class Dataset:
    features: np.ndarray
    labels: np.ndarray
    feature_names: List[str]
    label_values: List[str] = field(default_factory=list)
    label_name: str = "label"

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.intp)
        if self.features.ndim != 2 or self.features.shape[0] != self.labels.shape[0]:
            raise DataError("features must be N x d with one label per row")
        if not np.all(np.isfinite(self.features)):
            raise DataError("non-finite feature values")
        if self.labels.size and self.labels.min() < 0:
            raise DataError("labels must be non-negative class indices")
        if not self.feature_names:
            self.feature_names = [f"x{j}" for j in range(self.features.shape[1])]
        if not self.label_values:
            self.label_values = [str(c) for c in range(self.num_classes)]

    @property
    def n(self):
        return self.features.shape[0]

    @property
    def d(self):
        return self.features.shape[1]

    @property
    def num_classes(self):
        return int(self.labels.max()) + 1 if self.labels.size else 0


def load_csv(path, label_column="label", header=True, exclude_columns=()) -> Dataset:
    """Read a numeric CSV into a :class:`Dataset`.

    Without a header, ``label_column`` may be an integer position (default:
    last column). Labels are mapped to contiguous indices in sorted order of
    their numeric value; the original values are kept in ``label_values``.
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"no such CSV file: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        rows = [r for r in csv.reader(fh) if r]
    if header:
        if not rows:
            raise DataError(f"{path}: empty file")
        names, rows = [c.strip() for c in rows[0]], rows[1:]
    else:
        width = len(rows[0]) if rows else 0
        names = [f"x{j}" for j in range(width)]
    if isinstance(label_column, int) or (not header and label_column == "label"):
        label_idx = -1 if label_column == "label" else int(label_column)
        label_idx %= len(names)
    else:
        if label_column not in names:
            raise DataError(f"{path}: label column {label_column!r} not found")
        label_idx = names.index(label_column)
    skip = {label_idx} | {names.index(c) for c in exclude_columns if c in names}
    keep = [j for j in range(len(names)) if j not in skip]

    values = np.empty((len(rows), len(names)), dtype=np.float64)
    for i, row in enumerate(rows):
        if len(row) != len(names):
            raise DataError(f"{path}: row {i} has {len(row)} fields, expected {len(names)}")
        for j, cell in enumerate(row):
            try:
                v = float(cell)
            except ValueError:
                raise DataError(f"{path}: row {i}, column {names[j]!r}: non-numeric value {cell!r}")
            if not np.isfinite(v):
                raise DataError(f"{path}: row {i}, column {names[j]!r}: non-finite value {cell!r}")
            values[i, j] = v
    raw_labels = values[:, label_idx]
    uniq = np.unique(raw_labels)
    labels = np.searchsorted(uniq, raw_labels)
    label_values = [f"{u:g}" for u in uniq]
    return Dataset(values[:, keep], labels, [names[j] for j in keep], label_values, names[label_idx])


def save_csv(dataset: Dataset, path):
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(list(dataset.feature_names) + [dataset.label_name])
        for x, y in zip(dataset.features, dataset.labels):
            w.writerow([repr(float(v)) for v in x] + [int(y)])


@dataclass
class Standardizer:
    mean: np.ndarray
    std: np.ndarray
    constant: np.ndarray

    @classmethod
    def fit(cls, x):
        x = np.asarray(x, dtype=np.float64)
        if x.shape[0] == 0:
            raise DataError("cannot standardize an empty dataset")
        mean = x.mean(axis=0)
        std = x.std(axis=0)
        constant = std <= 1e-12 * np.maximum(1.0, np.abs(mean))
        return cls(mean, np.where(constant, 1.0, std), constant)

    def apply(self, x):
        out = (np.asarray(x, dtype=np.float64) - self.mean) / self.std
        out[:, self.constant] = 0.0
        return out


def standardize(dataset: Dataset):
    """Zero-mean, unit-std features; constant features become 0 and are flagged."""
    stats = Standardizer.fit(dataset.features)
    out = Dataset(stats.apply(dataset.features), dataset.labels.copy(), list(dataset.feature_names),
                  list(dataset.label_values), dataset.label_name)
    return out, stats


@dataclass
class SplitSpec:
    client_columns: List[List[int]]
    overlap_size: int
    seed: int = 0
    test_size: int = 0

    def validate(self, d, n):
        cols = [c for group in self.client_columns for c in group]
        if len(self.client_columns) < 2:
            raise DataError("at least two clients are required")
        if any(len(g) == 0 for g in self.client_columns):
            raise DataError("every client needs at least one column")
        if len(set(cols)) != len(cols):
            raise DataError("client column lists overlap")
        if sorted(cols) != list(range(d)):
            raise DataError(f"client columns must cover exactly columns 0..{d - 1}")
        if self.overlap_size < 1 or self.test_size < 0:
            raise DataError("overlap size must be >= 1 and test size >= 0")
        if self.overlap_size + self.test_size > n:
            raise DataError(
                f"overlap size {self.overlap_size} + test size {self.test_size} exceeds N={n}"
            )


def first_k_split(d, k_first):
    """Columns ``[0, k_first)`` to client 0, the rest to client 1."""
    if not 0 < k_first < d:
        raise DataError(f"cannot give {k_first} of {d} columns to the first client")
    return [list(range(k_first)), list(range(k_first, d))]


@dataclass
class ClientData:
    columns: List[int]
    x_overlap: np.ndarray
    x_unaligned: np.ndarray
    x_test: np.ndarray
    unaligned_rows: np.ndarray

    @property
    def dim(self):
        return len(self.columns)


@dataclass
class VflSplit:
    clients: List[ClientData]
    y_overlap: np.ndarray
    y_test: np.ndarray
    overlap_rows: np.ndarray
    test_rows: np.ndarray
    num_classes: int

    @property
    def overlap_size(self):
        return self.y_overlap.shape[0]

    def standardized(self):
        """Per-client standardization fit on that client's own overlap + unaligned rows."""
        clients = []
        for c in self.clients:
            stats = Standardizer.fit(np.vstack([c.x_overlap, c.x_unaligned]))
            clients.append(ClientData(c.columns, stats.apply(c.x_overlap), stats.apply(c.x_unaligned),
                                      stats.apply(c.x_test), c.unaligned_rows))
        return VflSplit(clients, self.y_overlap, self.y_test, self.overlap_rows, self.test_rows,
                        self.num_classes)


def vertical_partition(dataset: Dataset, spec: SplitSpec) -> VflSplit:
    """Sample test and overlap rows, then deal the remainder evenly to the clients.

    Unaligned rows keep only the receiving client's columns; their labels are
    dropped. Test rows keep every client's columns for evaluation.
    """
    spec.validate(dataset.d, dataset.n)
    rng = np.random.default_rng(spec.seed)
    perm = rng.permutation(dataset.n)
    test_rows = perm[:spec.test_size]
    overlap_rows = perm[spec.test_size:spec.test_size + spec.overlap_size]
    rest = perm[spec.test_size + spec.overlap_size:]
    pools = np.array_split(rest, len(spec.client_columns))
    clients = []
    for cols, pool in zip(spec.client_columns, pools):
        cols = list(cols)
        x = dataset.features
        clients.append(ClientData(
            columns=cols,
            x_overlap=x[np.ix_(overlap_rows, cols)],
            x_unaligned=x[np.ix_(pool, cols)],
            x_test=x[np.ix_(test_rows, cols)],
            unaligned_rows=pool,
        ))
    return VflSplit(clients, dataset.labels[overlap_rows], dataset.labels[test_rows],
                    overlap_rows, test_rows, dataset.num_classes)


# --- synthetic data -------------------------------------------------------

TASKS = ("linear", "xor_cross")


def _latent_centers(rng, num, dim, spread):
    """``num`` cluster centres at distance ``spread`` from the origin.

    Centres are mutually orthogonal when ``num <= dim`` (a random rotation of
    scaled basis vectors), otherwise random directions.
    """
    g = rng.normal(size=(dim, max(num, 1)))
    if num <= dim:
        q, _ = np.linalg.qr(g)
        centers = q[:, :num].T
    else:
        centers = g.T / np.linalg.norm(g.T, axis=1, keepdims=True)
    return spread * centers


def gen_synthetic(n, d_per_client, classes=2, task="xor_cross", noise=0.5, seed=0) -> Dataset:
    """Two-client synthetic classification data.

    ``linear``: Gaussian features, label = argmax of a random linear map of
    the joint features (plus ``noise``-scaled logit noise).

    ``xor_cross``: each client holds a noisy embedding of its own latent
    category ``s_k`` in ``0..C-1``; the label is ``(s_0 + s_1) mod C``. With
    independent uniform latents the label is independent of either half, so
    one client alone is at chance while both together determine it.
    Columns ``[0, d)`` belong to client 0 and ``[d, 2d)`` to client 1.
    """
    if task not in TASKS:
        raise DataError(f"unknown task {task!r}; choose from {TASKS}")
    if classes < 2 or d_per_client < 1 or n < 4 * classes:
        raise DataError("need classes >= 2, d_per_client >= 1 and n >= 4 * classes")
    if noise < 0:
        raise DataError("noise must be >= 0")
    rng = np.random.default_rng(seed)
    d = 2 * d_per_client
    if task == "linear":
        x = rng.normal(size=(n, d))
        w = rng.normal(size=(d, classes))
        logits = x @ w + noise * rng.normal(size=(n, classes))
        y = np.argmax(logits, axis=1)
    else:
        latent = rng.integers(0, classes, size=(n, 2))
        y = latent.sum(axis=1) % classes
        blocks = []
        for k in range(2):
            centers = _latent_centers(rng, classes, d_per_client, spread=2.0)
            blocks.append(centers[latent[:, k]] + noise * rng.normal(size=(n, d_per_client)))
        x = np.hstack(blocks)
    names = [f"c{k}_x{j}" for k in range(2) for j in range(d_per_client)]
    return Dataset(x, y, names)


def generation_check(dataset: Dataset, d_per_client, seed=0, holdout=0.3) -> Dict[str, float]:
    """Holdout accuracies of reference classifiers on each half and on the joint features.

    Single-client halves use weakly regularised logistic regression; the joint score reports the
    better of logistic regression and k-nearest-neighbours so that non-linear
    (xor-style) structure is credited.
    """
    from sklearn.linear_model import LogisticRegression
    from sklearn.neighbors import KNeighborsClassifier

    rng = np.random.default_rng(seed)
    perm = rng.permutation(dataset.n)
    cut = int(round(dataset.n * (1 - holdout)))
    tr, te = perm[:cut], perm[cut:]
    x, y = dataset.features, dataset.labels
    views = {
        "client0": slice(0, d_per_client),
        "client1": slice(d_per_client, 2 * d_per_client),
        "joint": slice(0, 2 * d_per_client),
    }
    out = {}
    for name, cols in views.items():
        lr = LogisticRegression(C=1e4, max_iter=5000).fit(x[tr, cols], y[tr])
        acc = float(np.mean(lr.predict(x[te, cols]) == y[te]))
        out[f"{name}_logistic"] = acc
        if name == "joint":
            knn = KNeighborsClassifier(n_neighbors=15).fit(x[tr, cols], y[tr])
            out["joint_knn"] = float(np.mean(knn.predict(x[te, cols]) == y[te]))
            out["joint_best"] = max(acc, out["joint_knn"])
    return out


def write_manifest(path, params: dict, check: Optional[dict] = None):
    doc = {"generator": "gen_synthetic", "params": params}
    if check is not None:
        doc["generation_check"] = check
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")


# --- credit-card-default style tabular data -------------------------------

CREDIT_COLUMNS = (
    ["LIMIT_BAL", "SEX", "EDUCATION", "MARRIAGE", "AGE",
     "PAY_0", "PAY_2", "PAY_3", "PAY_4", "PAY_5", "PAY_6"]
    + [f"BILL_AMT{i}" for i in range(1, 7)]
    + [f"PAY_AMT{i}" for i in range(1, 7)]
)
CREDIT_LABEL = "default.payment.next.month"


def gen_credit_like(n, seed=0) -> Dataset:
    """Synthetic data in the 23-feature credit-card-default layout.

    Column names, ranges and the roughly 22% positive rate follow the public
    credit-default table; the dependence structure is invented. Default risk
    is driven by repayment status (``PAY_*``), utilisation (bill vs limit)
    and repayment amounts, with a non-linear interaction so that a model
    benefits from both column groups. Label noise is set so that a strong
    tabular model reaches an AUC near 0.78, close to what the public table
    supports.
    """
    rng = np.random.default_rng(seed)
    risk = rng.normal(size=n)
    limit = np.round(np.exp(rng.normal(11.7, 0.8, size=n) - 0.25 * risk), -4).clip(1e4, 1e6)
    sex = rng.integers(1, 3, size=n)
    education = rng.choice([1, 2, 3, 4], p=[0.35, 0.47, 0.16, 0.02], size=n)
    marriage = rng.choice([1, 2, 3], p=[0.45, 0.53, 0.02], size=n)
    age = np.clip(np.round(rng.normal(35, 9, size=n)), 21, 79)
    pay = np.empty((n, 6))
    state = risk + 0.3 * rng.normal(size=n)
    for m in range(6):
        state = 0.7 * state + 0.5 * rng.normal(size=n) + 0.2 * risk
        pay[:, m] = np.clip(np.round(state * 1.2 - 0.3), -2, 8)
    util = 1 / (1 + np.exp(-(0.8 * risk + 0.5 * rng.normal(size=n))))
    bill = np.empty((n, 6))
    payamt = np.empty((n, 6))
    for m in range(6):
        bill[:, m] = np.round(limit * util * np.exp(0.15 * rng.normal(size=n)))
        frac = 1 / (1 + np.exp(0.9 * risk + rng.normal(size=n)))
        payamt[:, m] = np.round(bill[:, m] * 0.2 * frac + rng.exponential(500, size=n))
    x = np.column_stack([limit, sex, education, marriage, age, pay, bill, payamt])
    score = (
        0.9 * np.maximum(pay[:, 0], 0) + 0.4 * np.maximum(pay[:, 1], 0)
        + 1.2 * util * (pay[:, 0] > 0)
        - 0.6 * np.log1p(payamt[:, 0] / 1000.0) * (util > 0.5)
        + 1.5 * rng.normal(size=n)
    )
    threshold = np.quantile(score, 0.78)
    y = (score > threshold).astype(np.intp)
    return Dataset(x, y, list(CREDIT_COLUMNS), ["0", "1"], CREDIT_LABEL)
