#!/usr/bin/env python3
# The reverse-mode tensor engine underneath the models: a few ops, a
# backward pass, and a central-difference check of the analytic gradients.

import numpy as np

from flowgnn import Parameter, RowGroups, backward, grad_check
from flowgnn import autodiff as ad

rng = np.random.default_rng(0)

# a miniature "aggregate, transform, score" pipeline
edge_feats = ad.constant(rng.normal(size=(6, 3)))        # six edges, three features
w = Parameter("w", ad.glorot_uniform(rng, 6, 2))
groups = RowGroups.from_lists([[0, 1, 2], [3, 4], [5]], n_rows=6)

means = ad.row_mean_groups(edge_feats, groups)           # 3 groups -> 3 rows
hidden = ad.relu(ad.affine(ad.concat_cols([means, means]), w))
loss = ad.cross_entropy(hidden, [0, 1, 0])
print("loss:", loss.item())

backward(loss)
print("dloss/dw:\n", w.grad)

# the same gradients, checked against (f(w+eps) - f(w-eps)) / 2eps
def f():
    m = ad.row_mean_groups(edge_feats, groups)
    h = ad.relu(ad.affine(ad.concat_cols([m, m]), w))
    return ad.cross_entropy(h, [0, 1, 0])

print("max relative error vs central differences:", grad_check(f, [w], eps=1e-5))

# grouped softmax is the attention primitive: rows normalize within groups
logits = ad.constant(rng.normal(size=(6, 1)))
alpha = ad.masked_softmax_rows(logits, groups)
print("attention coefficients per group sum to:",
      [float(alpha.values[g, 0].sum()) for g in ([0, 1, 2], [3, 4], [5])])
