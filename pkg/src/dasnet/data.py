"""Dataset ingestion: MNIST IDX, CIFAR-10 binary, and a synthetic
class-conditional Gaussian fixture for CI-scale runs.

Pixels are scaled by 1/255 into [0, 1]; no mean subtraction.  The
validation split is carved from the tail of the training samples.
"""

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataFormatError

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801
CIFAR_RECORD = 3073  # 1 label byte + 3*32*32 channel-planar pixels
VAL_TAIL = 5000


@dataclass
class Dataset:
    images: np.ndarray  # (N, ...) float32 in [0, 1]
    labels: np.ndarray  # (N,) int64 class indices
    splits: dict  # name -> index array; disjoint
    source: str
    n_classes: int = field(default=10)

    def __post_init__(self):
        if len(self.images) != len(self.labels):
            raise DataFormatError(
                f"{len(self.images)} images vs {len(self.labels)} labels"
            )
        if self.labels.size and int(self.labels.max()) >= self.n_classes:
            raise DataFormatError("label out of range")

    def size(self, split: str) -> int:
        return len(self.splits.get(split, ()))

    def split_arrays(self, split: str, input_shape=None):
        """Images and labels of one split, adapted to a network input
        shape (flattened, channel dim added, or center-cropped)."""
        idx = self.splits[split]
        images = self.images[idx]
        labels = self.labels[idx]
        if input_shape is not None:
            images = adapt_images(images, tuple(input_shape))
        return images, labels

    def save(self, path):
        np.savez(
            path,
            images=self.images,
            labels=self.labels,
            source=np.array(self.source),
            n_classes=np.array(self.n_classes),
            **{f"split_{k}": v for k, v in self.splits.items()},
        )

    @classmethod
    def load(cls, path) -> "Dataset":
        raw = np.load(path, allow_pickle=False)
        splits = {
            k[len("split_") :]: raw[k] for k in raw.files if k.startswith("split_")
        }
        return cls(
            raw["images"],
            raw["labels"],
            splits,
            str(raw["source"]),
            int(raw["n_classes"]),
        )


def adapt_images(images: np.ndarray, input_shape: tuple) -> np.ndarray:
    if len(input_shape) == 1:
        return images.reshape(len(images), -1)
    if images.ndim == 3:
        images = images[..., None]
    h, w = images.shape[1:3]
    th, tw = input_shape[:2]
    if (h, w) != (th, tw):
        if h < th or w < tw:
            raise DataFormatError(
                f"images {images.shape[1:]} smaller than input {input_shape}"
            )
        oh, ow = (h - th) // 2, (w - tw) // 2
        images = images[:, oh : oh + th, ow : ow + tw, :]
    if images.shape[1:] != tuple(input_shape):
        raise DataFormatError(
            f"cannot adapt images {images.shape[1:]} to input {input_shape}"
        )
    return images


def _train_test_splits(n_train: int, n_test: int, val_tail: int = VAL_TAIL):
    val_tail = min(val_tail, n_train // 5)
    return {
        "train": np.arange(n_train - val_tail),
        "val": np.arange(n_train - val_tail, n_train),
        "test": np.arange(n_train, n_train + n_test),
    }


def _read_idx_header(buf: bytes, path, expected_magic: int, n_dims: int):
    header = 4 + 4 * n_dims
    if len(buf) < header:
        raise DataFormatError(f"{path}: truncated header ({len(buf)} bytes)")
    magic = struct.unpack(">I", buf[:4])[0]
    if magic != expected_magic:
        raise DataFormatError(
            f"{path}: bad magic 0x{magic:08x} at offset 0, "
            f"expected 0x{expected_magic:08x}"
        )
    dims = struct.unpack(f">{n_dims}I", buf[4:header])
    expected_len = header + int(np.prod(dims))
    if len(buf) != expected_len:
        raise DataFormatError(
            f"{path}: payload length {len(buf) - header} at offset {header}, "
            f"expected {expected_len - header}"
        )
    return dims, buf[header:]


def load_idx(images_path, labels_path) -> Dataset:
    """Parse an MNIST-style IDX image/label file pair (one split)."""
    img_buf = Path(images_path).read_bytes()
    lab_buf = Path(labels_path).read_bytes()
    (n, h, w), img_payload = _read_idx_header(
        img_buf, images_path, IDX_IMAGES_MAGIC, 3
    )
    (n_lab,), lab_payload = _read_idx_header(
        lab_buf, labels_path, IDX_LABELS_MAGIC, 1
    )
    if n != n_lab:
        raise DataFormatError(f"{images_path}: {n} images but {n_lab} labels")
    images = (
        np.frombuffer(img_payload, dtype=np.uint8)
        .reshape(n, h, w)
        .astype(np.float32)
        / 255.0
    )
    labels = np.frombuffer(lab_payload, dtype=np.uint8).astype(np.int64)
    splits = {"train": np.arange(n), "val": np.arange(0), "test": np.arange(0)}
    return Dataset(images, labels, splits, f"idx:{images_path}")


def load_mnist(data_dir) -> Dataset:
    """Standard four-file MNIST layout with train/val/test splits."""
    d = Path(data_dir)
    train = load_idx(d / "train-images-idx3-ubyte", d / "train-labels-idx1-ubyte")
    test = load_idx(d / "t10k-images-idx3-ubyte", d / "t10k-labels-idx1-ubyte")
    images = np.concatenate([train.images, test.images])
    labels = np.concatenate([train.labels, test.labels])
    splits = _train_test_splits(len(train.labels), len(test.labels))
    return Dataset(images, labels, splits, f"mnist:{data_dir}")


def load_cifar10(batch_paths) -> Dataset:
    """Parse CIFAR-10 binary batches (3073-byte records, channel-planar),
    reordered to channel-last H x W x C."""
    images, labels = [], []
    for path in batch_paths:
        buf = Path(path).read_bytes()
        if len(buf) == 0 or len(buf) % CIFAR_RECORD:
            raise DataFormatError(
                f"{path}: size {len(buf)} is not a multiple of {CIFAR_RECORD}"
            )
        records = np.frombuffer(buf, dtype=np.uint8).reshape(-1, CIFAR_RECORD)
        labels.append(records[:, 0].astype(np.int64))
        pixels = records[:, 1:].reshape(-1, 3, 32, 32)
        images.append(pixels.transpose(0, 2, 3, 1).astype(np.float32) / 255.0)
    paths = ",".join(str(p) for p in batch_paths)
    n = sum(len(l) for l in labels)
    splits = {"train": np.arange(n), "val": np.arange(0), "test": np.arange(0)}
    return Dataset(np.concatenate(images), np.concatenate(labels), splits,
                   f"cifar10:{paths}")


def load_cifar10_dir(data_dir) -> Dataset:
    d = Path(data_dir)
    train = load_cifar10([d / f"data_batch_{i}.bin" for i in range(1, 6)])
    test = load_cifar10([d / "test_batch.bin"])
    images = np.concatenate([train.images, test.images])
    labels = np.concatenate([train.labels, test.labels])
    splits = _train_test_splits(len(train.labels), len(test.labels))
    return Dataset(images, labels, splits, f"cifar10:{data_dir}")


def synthetic_dataset(seed: int, n: int, shape, classes: int = 10) -> Dataset:
    """Deterministic, linearly separable class-conditional Gaussian blobs."""
    if n < classes:
        raise ValueError(f"need at least {classes} samples, got {n}")
    rng = np.random.default_rng(seed)
    dim = int(np.prod(shape))
    # well-separated means keep the blobs linearly separable after clipping
    means = 0.5 + 0.35 * rng.standard_normal((classes, dim)).astype(np.float32)
    labels = np.arange(n, dtype=np.int64) % classes
    noise = 0.08 * rng.standard_normal((n, dim)).astype(np.float32)
    images = np.clip(means[labels] + noise, 0.0, 1.0).reshape((n,) + tuple(shape))
    order = rng.permutation(n)
    images, labels = images[order], labels[order]
    n_test = max(classes, n // 5)
    n_train = n - n_test
    splits = _train_test_splits(n_train, n_test, val_tail=max(1, n_train // 10))
    return Dataset(images, labels, splits, f"synthetic:seed={seed}", classes)
