# %% [markdown]
# # Training a small network
#
# Two classes of synthetic slices differ in where their energy sits. A
# narrow version of the network learns to tell them apart in a few epochs.

# %%
import numpy as np

from genreforge.network import NetworkConfig, build_network, count_parameters
from genreforge.trainer import TrainConfig, evaluate_segments, train

rng = np.random.default_rng(0)
x = rng.uniform(0, 0.3, (64, 128, 128)).astype(np.float32)
y = np.arange(64) % 2
x[y == 0, :40] += 0.5
x[y == 1, 88:] += 0.5

cfg = NetworkConfig(num_classes=2, block_variant="resnet", stage_channels=(16, 16, 32, 32, 32))
net = build_network(cfg, rng=0)
print("parameters:", count_parameters(net))

# %%
report = train(net, x[:48], y[:48], x[48:], y[48:], TrainConfig(epochs=6, batch_size=16))
print("best epoch:", report.best_epoch, "held-out accuracy:", evaluate_segments(net, x[48:], y[48:]))
