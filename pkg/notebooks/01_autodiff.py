"""
Reverse-mode gradients on plain numpy arrays
============================================

Build a small expression, backpropagate, and compare with central differences.
"""

import numpy as np

from tgib.numcore import Tensor, gradcheck, matmul, relu, sigmoid, tsum

rng = np.random.default_rng(0)
W = Tensor(rng.normal(size=(3, 2)), requires_grad=True)
x = Tensor(rng.normal(size=(4, 3)))

# a one-layer scorer squashed to (0, 1)
out = tsum(sigmoid(relu(matmul(x, W))))
out.backward()
print("loss", out.item())
print("dloss/dW\n", W.grad)

# the same gradient from finite differences
W.grad = None
report = gradcheck(lambda: tsum(sigmoid(relu(matmul(x, W)))), {"W": W})
print("max relative error", report.max_error)
