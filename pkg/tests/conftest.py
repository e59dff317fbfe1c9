import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from helpers import blob_data, small_conv_net  # noqa: E402

from snnprune.train import TrainConfig, train  # noqa: E402

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def blobs():
    return blob_data()


@pytest.fixture(scope="session")
def trained_small(blobs):
    """Small conv net trained for a few epochs on the 2-class blobs."""
    train_ds, _ = blobs
    net = small_conv_net(train_ds.sample_shape, train_ds.n_classes)
    net, _ = train(net, train_ds, TrainConfig(epochs=3, warmup_epochs=1, seed=0))
    return net
