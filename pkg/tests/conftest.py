import os
from pathlib import Path

import pytest

from dasnet import data, nn


def pytest_collection_modifyitems(config, items):
    if os.environ.get("DASNET_EXTENDED"):
        return
    skip = pytest.mark.skip(reason="extended tier: set DASNET_EXTENDED=1")
    for item in items:
        if "extended" in item.keywords:
            item.add_marker(skip)


@pytest.fixture(scope="session")
def blobs_mlp():
    """Linearly separable 784-dim blobs sized for fast MLP-3 runs."""
    return data.synthetic_dataset(0, 2500, (784,))


@pytest.fixture(scope="session")
def trained_mlp(blobs_mlp):
    net = nn.build_network("mlp3", seed=0)
    cfg = nn.TrainConfig(lr=0.1, epochs=3, batch_size=64, seed=0)
    net, _ = nn.train_baseline(net, blobs_mlp, cfg)
    return net


@pytest.fixture(scope="session")
def blobs_conv():
    """Image-shaped blobs for the conv pipeline."""
    return data.synthetic_dataset(1, 900, (28, 28, 1))


def _dataset_root():
    return os.environ.get("DASNET_DATA_DIR", "")


@pytest.fixture(scope="session")
def mnist():
    root = _dataset_root()
    needed = [
        "train-images-idx3-ubyte",
        "train-labels-idx1-ubyte",
        "t10k-images-idx3-ubyte",
        "t10k-labels-idx1-ubyte",
    ]
    if not root or not all((Path(root) / n).exists() for n in needed):
        pytest.skip("MNIST IDX files not found; set DASNET_DATA_DIR")
    return data.load_mnist(root)


@pytest.fixture(scope="session")
def cifar10():
    root = _dataset_root()
    needed = [f"data_batch_{i}.bin" for i in range(1, 6)] + ["test_batch.bin"]
    if not root or not all((Path(root) / n).exists() for n in needed):
        pytest.skip("CIFAR-10 binary batches not found; set DASNET_DATA_DIR")
    return data.load_cifar10_dir(root)
