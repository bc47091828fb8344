# %% [markdown]
# # Checking backpropagation numerically
#
# Every layer exposes ``forward`` and ``backward``. Central finite
# differences in float64 confirm the analytic gradients.

# %%
import numpy as np

from genreforge.layers import BatchNorm, Conv1d, Sequential, ReLU

rng = np.random.default_rng(0)
block = Sequential(Conv1d(3, 4, 4, rng, np.float64, name="conv"),
                   BatchNorm(4, dtype=np.float64), ReLU())
x = rng.standard_normal((2, 3, 8))
r = rng.standard_normal((2, 4, 8))


def f():
    return float(np.sum(block.forward(x, training=True) * r))


block.forward(x, training=True)
dx = block.backward(r)

# %%
h = 1e-5
num = np.zeros_like(x)
for i in np.ndindex(x.shape):
    old = x[i]
    x[i] = old + h
    fp = f()
    x[i] = old - h
    fm = f()
    x[i] = old
    num[i] = (fp - fm) / (2 * h)

err = np.linalg.norm(dx - num) / (np.linalg.norm(dx) + np.linalg.norm(num))
print(f"relative error of the input gradient: {err:.2e}")
