import sys

import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(1337)


def adapter_cmd(*args):
    return [sys.executable, "-m", "irsr_adapter", *map(str, args)]


@pytest.fixture(scope="session")
def toy_x4_checkpoint(tmp_path_factory):
    """TorchScript nearest x4 upscaler: replication, so exact comparisons hold."""
    torch = pytest.importorskip("torch")

    class Up(torch.nn.Module):
        def forward(self, x):
            return torch.nn.functional.interpolate(x, scale_factor=4.0, mode="nearest")

    path = tmp_path_factory.mktemp("ckpt") / "up4.pt"
    torch.jit.save(torch.jit.script(Up()), str(path))
    return path


@pytest.fixture(scope="session")
def windowed_x4_checkpoint(tmp_path_factory):
    """Like toy_x4 but refuses inputs that are not multiples of 32, the way
    window-attention restorers do."""
    torch = pytest.importorskip("torch")

    class WindowedUp(torch.nn.Module):
        def forward(self, x):
            assert x.shape[-2] % 32 == 0 and x.shape[-1] % 32 == 0, "needs 32-multiples"
            return torch.nn.functional.interpolate(x, scale_factor=4.0, mode="nearest")

    path = tmp_path_factory.mktemp("ckpt") / "win4.pt"
    torch.jit.save(torch.jit.script(WindowedUp()), str(path))
    return path
