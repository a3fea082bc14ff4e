"""
The autodiff core in a few lines
================================

Tensors record how they were made; backward() walks that record in reverse.
"""
import numpy as np

from csgan import numcore as nc

rng = np.random.default_rng(0)
W = nc.Tensor(rng.normal(size=(4, 3)), requires_grad=True)
x = rng.normal(size=(5, 4))
targets = np.array([0, 2, 1, 1, 0])

logits = nc.matmul(nc.Tensor(x), W)
loss = nc.cross_entropy(logits, targets)
loss.backward()
print("loss", loss.item())
print("dL/dW\n", W.grad)

# the same gradient by central differences
h = 1e-6
fd = np.zeros_like(W.data)
for i in np.ndindex(W.shape):
    old = W.data[i]
    W.data[i] = old + h
    up = nc.cross_entropy(nc.matmul(nc.Tensor(x), W), targets).item()
    W.data[i] = old - h
    down = nc.cross_entropy(nc.matmul(nc.Tensor(x), W), targets).item()
    W.data[i] = old
    fd[i] = (up - down) / (2 * h)
print("max |backprop - fd|", np.abs(W.grad - fd).max())

# cross-entropy gradient w.r.t. logits is softmax minus one-hot, averaged
z = nc.Tensor(rng.normal(size=(2, 5)), requires_grad=True)
nc.cross_entropy(z, np.array([1, 3])).backward()
p = nc.softmax(nc.Tensor(z.data)).data
print(np.allclose(z.grad, (p - np.eye(5)[[1, 3]]) / 2))

# STLR: short warmup, long decay
sched = nc.StlrSchedule(eta_max=1e-3, total_steps=1000)
print([f"{sched(t):.2e}" for t in (0, 50, 100, 500, 1000)])
