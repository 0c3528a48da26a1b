# Neighbourhood propagation and the joint objective.
import numpy as np

from cagat import autodiff as ad
from cagat import reference as ref
from cagat.attention import AttentionMatrix, np_truncated
from cagat.selftest import alternation_objectives, max_increase

rng = np.random.default_rng(2)

s = rng.random((5, 5))
s /= s.sum(axis=1, keepdims=True)
wh = rng.normal(size=(5, 3))

# H' <- lam S H' + (1 - lam) WH converges to (1 - lam)(I - lam S)^-1 WH
for T in (1, 5, 20, 200):
    approx = np_truncated(AttentionMatrix(ad.Var(s)), wh, 0.3, T).value
    print(f"T = {T:>3}: distance to closed form {np.abs(approx - ref.np_closed_form(s, wh, 0.3)).max():.2e}")

# alternating exact minimisation over S and H' never raises the joint objective
values = alternation_objectives(np.random.default_rng(3))
for i, v in enumerate(values):
    step = "start" if i == 0 else ("S-step" if i % 2 else "H-step")
    print(f"{step:>6}: {v:.10f}")
print("largest increase:", max_increase(values))
