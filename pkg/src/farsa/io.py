"""LIBSVM ingestion, feature scaling, label mapping, group assignment and weight calibration."""

from __future__ import annotations

import gzip
import io as _io
import math
import os
from dataclasses import dataclass, replace

import numpy as np
import scipy.sparse as sp

from .core import CompositeObjective, GroupPartition
from .exceptions import LibSVMParseError, UnsupportedDatasetError
from .losses import LogisticLoss

GROUP_FRACTIONS = (0.25, 0.5, 0.75, 1.0)
LAMBDA_SCALES = (0.1, 0.01)

# name -> (N, n, scaled on the website)
DATASET_CATALOG = {
    "a9a": (32561, 123, True),
    "australian": (690, 140, True),
    "breast-cancer": (683, 10, True),
    "cod-rna": (59535, 8, False),
    "colon-cancer": (62, 2000, True),
    "covtype.binary": (581012, 54, True),
    "diabetes": (768, 8, True),
    "duke": (44, 7192, True),
    "fourclass": (862, 2, True),
    "german.numer": (1000, 24, True),
    "gisette": (6000, 5000, True),
    "heart": (270, 13, True),
    "ijcnn1": (49990, 22, True),
    "ionosphere": (351, 34, True),
    "leukemia": (38, 7129, True),
    "liver-disorders": (145, 5, True),
    "madelon": (2000, 500, False),
    "mushrooms": (8124, 112, True),
    "phishing": (11055, 68, True),
    "skin_nonskin": (245057, 3, False),
    "splice": (1000, 60, True),
    "sonar": (208, 60, True),
    "svmguide1": (3089, 4, False),
    "svmguide3": (1243, 21, True),
    "w8a": (49749, 300, True),
}


@dataclass(frozen=True)
class Dataset:
    features: sp.csr_matrix
    labels: np.ndarray
    source: str = "<memory>"
    scaling: str = "none"

    @property
    def n_samples(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]


def parse_libsvm(stream, n_features: int | None = None, source: str = "<stream>") -> Dataset:
    """Parse ``label idx:val ...`` lines with 1-based indices.

    Blank lines and ``#`` comments are skipped. Malformed tokens, non-numeric
    values, duplicate indices within a line and indices below 1 raise
    ``LibSVMParseError`` carrying the line number.
    """
    labels = []
    indptr = [0]
    cols = []
    vals = []
    for lineno, raw in enumerate(stream, start=1):
        if isinstance(raw, bytes):
            raw = raw.decode("utf-8")
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.split()
        try:
            label = float(tokens[0])
        except ValueError:
            raise LibSVMParseError(f"non-numeric label {tokens[0]!r}", lineno) from None
        if not math.isfinite(label):
            raise LibSVMParseError(f"non-finite label {tokens[0]!r}", lineno)
        seen = set()
        for tok in tokens[1:]:
            idx_str, sep, val_str = tok.partition(":")
            if not sep or not idx_str or not val_str:
                raise LibSVMParseError(f"malformed token {tok!r}", lineno)
            try:
                idx = int(idx_str)
            except ValueError:
                raise LibSVMParseError(f"non-integer index in {tok!r}", lineno) from None
            try:
                val = float(val_str)
            except ValueError:
                raise LibSVMParseError(f"non-numeric value in {tok!r}", lineno) from None
            if idx < 1:
                raise LibSVMParseError(f"index {idx} < 1", lineno)
            if idx in seen:
                raise LibSVMParseError(f"duplicate index {idx}", lineno)
            if not math.isfinite(val):
                raise LibSVMParseError(f"non-finite value in {tok!r}", lineno)
            seen.add(idx)
            cols.append(idx - 1)
            vals.append(val)
        labels.append(label)
        indptr.append(len(cols))

    max_col = max(cols) + 1 if cols else 0
    if n_features is None:
        n_features = max_col
    elif n_features < max_col:
        raise LibSVMParseError(f"index {max_col} exceeds n_features={n_features}", 0)
    features = sp.csr_matrix(
        (np.asarray(vals, dtype=float), np.asarray(cols, dtype=np.intp), np.asarray(indptr)),
        shape=(len(labels), n_features),
    )
    features.sort_indices()
    return Dataset(features, np.asarray(labels, dtype=float), source=source)


def load_libsvm(path, n_features: int | None = None) -> Dataset:
    """Read a LIBSVM file; ``.gz`` files are decompressed transparently."""
    path = os.fspath(path)
    opener = gzip.open if path.endswith(".gz") else open
    with opener(path, "rt", encoding="utf-8") as fh:
        return parse_libsvm(fh, n_features=n_features, source=path)


def format_libsvm(ds: Dataset) -> str:
    """Canonical text: labels and values with 17 significant digits, sorted indices."""
    buf = _io.StringIO()
    write_libsvm(ds, buf)
    return buf.getvalue()


def write_libsvm(ds: Dataset, stream) -> None:
    X = ds.features.tocsr()
    X.sort_indices()
    for i in range(X.shape[0]):
        lo, hi = X.indptr[i], X.indptr[i + 1]
        parts = [f"{ds.labels[i]:.17g}"]
        parts += [f"{c + 1}:{v:.17g}" for c, v in zip(X.indices[lo:hi], X.data[lo:hi])]
        stream.write(" ".join(parts) + "\n")


def scale_features(ds: Dataset) -> Dataset:
    """Divide each column by its largest absolute entry; all-zero columns are left alone."""
    X = ds.features.tocsc(copy=True)
    maxabs = np.asarray(abs(X).max(axis=0).todense()).ravel() if X.nnz else np.zeros(X.shape[1])
    divisor = np.where(maxabs > 0, maxabs, 1.0)
    # true division keeps the max-abs entry at exactly 1, so a second pass is a no-op
    X.data = X.data / np.repeat(divisor, np.diff(X.indptr))
    X = X.tocsr()
    X.sort_indices()
    return replace(ds, features=X, scaling="maxabs")


def map_labels(ds: Dataset) -> Dataset:
    """Map the smaller of two distinct labels to -1 and the larger to +1."""
    values = np.unique(ds.labels)
    if values.size != 2:
        raise UnsupportedDatasetError(f"expected 2 distinct labels, found {values.size}")
    mapped = np.where(ds.labels == values[1], 1.0, -1.0)
    return replace(ds, labels=mapped)


def assign_groups(n: int, num_groups: int) -> GroupPartition:
    """Contiguous groups with sizes differing by at most one; the larger ones come last."""
    if not 1 <= num_groups <= n:
        raise ValueError(f"num_groups must lie in [1, {n}], got {num_groups}")
    base, extra = divmod(n, num_groups)
    sizes = [base] * (num_groups - extra) + [base + 1] * extra
    return GroupPartition.from_sizes(sizes)


def lambda_min(loss, partition: GroupPartition) -> float:
    """Smallest ``lam`` with ``||grad_{G_i} f(0)|| <= lam sqrt(|G_i|)`` for every group."""
    grad0 = loss.gradient(np.zeros(partition.n))
    return float(np.max(partition.norms(grad0) / np.sqrt(partition.sizes)))


def num_groups_for(n: int, fraction: float) -> int:
    return max(1, int(math.floor(fraction * n)))


def build_instance(ds: Dataset, fraction: float, lambda_scale: float, delta: float = 1e-8):
    """Logistic objective with ``floor(fraction n)`` groups and ``lam_i = scale lam_min sqrt(|G_i|)``.

    Returns ``(objective, lam_min)``.
    """
    if not 0 < fraction <= 1:
        raise ValueError("fraction must lie in (0, 1]")
    if not lambda_scale > 0:
        raise ValueError("lambda_scale must be positive")
    loss = LogisticLoss(ds.features, ds.labels, delta=delta)
    part = assign_groups(ds.n_features, num_groups_for(ds.n_features, fraction))
    lam0 = lambda_min(loss, part)
    if not lam0 > 0:
        raise UnsupportedDatasetError("gradient at zero vanishes; every weight makes x = 0 optimal")
    part = part.with_weights(lambda_scale * lam0 * np.sqrt(part.sizes))
    return CompositeObjective(loss, part), lam0


def dataset_name(path) -> str:
    base = os.path.basename(os.fspath(path))
    for suffix in (".gz", ".txt", ".libsvm", ".svm"):
        if base.endswith(suffix):
            base = base[: -len(suffix)]
    return base


def is_prescaled(path) -> bool | None:
    """Catalogue lookup by file name; ``None`` when the dataset is not listed."""
    entry = DATASET_CATALOG.get(dataset_name(path))
    return None if entry is None else entry[2]
