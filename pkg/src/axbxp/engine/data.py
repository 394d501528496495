"""Bundled 8x8 handwritten-digit dataset.

``data/digits_images.csv`` holds one image per row as 64 comma-separated
integers in 0..16 (row-major 8x8 pixels). ``data/digits_labels.csv`` holds the
matching class label (0..9), one per line. Pixels are scaled to [0, 1].
"""

from __future__ import annotations

from dataclasses import dataclass
from importlib import resources

import numpy as np

from ..errors import InputError

SPLIT_SEED = 0
TEST_FRACTION = 0.2
PIXEL_MAX = 16.0


@dataclass(frozen=True)
class Dataset:
    train_x: np.ndarray
    train_y: np.ndarray
    test_x: np.ndarray
    test_y: np.ndarray

    @property
    def num_classes(self) -> int:
        return int(max(self.train_y.max(), self.test_y.max())) + 1

    def subset(self, n_train: int | None = None, n_test: int | None = None) -> "Dataset":
        return Dataset(self.train_x[:n_train], self.train_y[:n_train],
                       self.test_x[:n_test], self.test_y[:n_test])


def read_csv_pair(images_path, labels_path) -> tuple[np.ndarray, np.ndarray]:
    x = np.loadtxt(images_path, delimiter=",", dtype=np.float64, ndmin=2)
    y = np.loadtxt(labels_path, dtype=np.int64, ndmin=1)
    if len(x) != len(y):
        raise InputError(f"{len(x)} images but {len(y)} labels")
    return x, y


def load_digits(test_fraction: float = TEST_FRACTION) -> Dataset:
    """Load the bundled digits with a fixed shuffled train/test split."""
    root = resources.files("axbxp") / "data"
    with resources.as_file(root / "digits_images.csv") as ip, \
            resources.as_file(root / "digits_labels.csv") as lp:
        x, y = read_csv_pair(ip, lp)
    x = x / PIXEL_MAX
    order = np.random.default_rng(SPLIT_SEED).permutation(len(x))
    n_test = int(round(len(x) * test_fraction))
    test, train = order[:n_test], order[n_test:]
    return Dataset(x[train], y[train], x[test], y[test])
