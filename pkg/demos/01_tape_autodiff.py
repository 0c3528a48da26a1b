# The tape: record a small computation, run it backwards, compare with
# finite differences.
import numpy as np

from cagat import autodiff as ad

rng = np.random.default_rng(0)

store = ad.ParamStore()
w = store.add("w", ad.glorot_init(3, 4, rng))
x = ad.Var(rng.normal(size=(5, 4)))
labels = np.array([0, 1, 2, 1, 0])
train = np.array([0, 1, 2])

# anything computed inside the `with` block is recorded
with ad.Tape() as tape:
    logits = ad.elu(x @ w.T)
    loss = ad.masked_cross_entropy(logits, labels, train)
tape.backward(loss)
print("loss", loss.item())
print("dL/dw\n", w.grad.round(4))

# rows outside the mask get no gradient through the loss
print("nodes in loss:", train, "  ignored:", np.setdiff1d(np.arange(5), train))

# central differences agree to ~1e-9
err = ad.grad_check(lambda: ad.masked_cross_entropy(ad.elu(x @ w.T), labels, train), [w])
print(f"max relative error vs finite differences: {err:.2e}")

# a deliberately wrong backward rule is caught at once
with ad.corrupt_backward("matmul", 1.1):
    bad = ad.grad_check(lambda: ad.masked_cross_entropy(ad.elu(x @ w.T), labels, train), [w])
print(f"same check with matmul gradients scaled by 1.1: {bad:.2e}")

# one Adam step moves every entry by about lr
before = w.value.copy()
with ad.Tape() as tape:
    loss = ad.masked_cross_entropy(ad.elu(x @ w.T), labels, train)
tape.backward(loss)
ad.adam_step(store, lr=0.01)
print("largest first-step move:", np.abs(w.value - before).max())
