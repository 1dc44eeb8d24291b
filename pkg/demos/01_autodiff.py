"""Reverse-mode gradients on small numpy arrays, checked against finite differences."""

import numpy as np

from gstam import autodiff as ad
from gstam.autodiff import Tensor

rng = np.random.default_rng(0)

# A tiny two-layer network on a batch of 4 inputs.
x = Tensor(rng.standard_normal((4, 3)))
w1 = Tensor(rng.standard_normal((3, 5)), requires_grad=True)
w2 = Tensor(rng.standard_normal((5, 2)), requires_grad=True)
labels = np.array([0, 1, 1, 0])

loss = ad.cross_entropy(ad.relu(x @ w1) @ w2, labels)
loss.backward()
print("loss", loss.item())
print("dL/dw2\n", w2.grad)


def loss_at(w):
    return ad.cross_entropy(ad.relu(x @ w1) @ Tensor(w), labels).item()


# central differences on every entry of w2
eps = 1e-6
numeric = np.zeros_like(w2.data)
for idx in np.ndindex(w2.shape):
    up, down = w2.data.copy(), w2.data.copy()
    up[idx] += eps
    down[idx] -= eps
    numeric[idx] = (loss_at(up) - loss_at(down)) / (2 * eps)
print("max abs difference to finite differences:", np.abs(numeric - w2.grad).max())

# Broadcasting: a bias of shape (5,) added to a (4, 5) activation gets its
# gradient summed over the batch axis.
b = Tensor(np.zeros(5), requires_grad=True)
ad.sum(ad.relu(x @ w1 + b)).backward()
print("bias gradient shape:", b.grad.shape)

# One Adam step with a unit gradient moves the parameter by about lr.
p, state = ad.adam_step(ad.AdamState.zeros_like([np.zeros(1)]), [np.zeros(1)], [np.ones(1)], lr=0.001)
print("after one Adam step:", p[0])
