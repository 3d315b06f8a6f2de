"""Dense 2-D tensors with reverse-mode automatic differentiation.

Every tensor is a float64 matrix of shape (rows, cols); scalars are 1x1.
Operations build a tape of parent links and backward closures, and
``backward`` releases gradients in reverse topological order, visiting each
tape node exactly once.  The op set is deliberately small: matrix products,
column concatenation, grouped row reductions, pointwise activations,
group-masked softmax, cross-entropy, and coefficient dropout.

Grouped reductions take either a list of row-index arrays or a prebuilt
:class:`RowGroups`, which callers on hot paths construct once and reuse.
"""

from __future__ import annotations

from typing import Callable, Iterable, Sequence

import numpy as np

Array = np.ndarray


class Tensor:
    """A matrix value, optionally carrying a gradient and tape provenance."""

    __slots__ = ("values", "requires_grad", "grad", "parents", "_backward", "backward_visits")

    def __init__(self, values, requires_grad: bool = False, parents: tuple = ()):
        v = np.asarray(values, dtype=np.float64)
        if v.ndim != 2:
            raise ValueError(f"tensors are 2-D matrices, got shape {v.shape}")
        self.values = v
        self.requires_grad = bool(requires_grad)
        self.grad: Array | None = None
        # parents are kept only while a gradient can flow; constants drop them
        self.parents: tuple = parents if requires_grad else ()
        self._backward: Callable[[Array], None] | None = None
        self.backward_visits = 0

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape  # type: ignore[return-value]

    def item(self) -> float:
        if self.values.size != 1:
            raise ValueError(f"item() needs a 1x1 tensor, got {self.shape}")
        return float(self.values[0, 0])

    def accumulate(self, g: Array, own: bool = False) -> None:
        """Add g into the gradient buffer.  ``own`` marks g as a fresh array
        this tensor may keep without copying; never set it for views or
        arrays shared with another consumer."""
        if self.grad is None:
            self.grad = g if own else np.array(g, dtype=np.float64)
        else:
            self.grad += g

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"


class Parameter(Tensor):
    """A named trainable tensor with attached first/second moment state."""

    __slots__ = ("name", "moment1", "moment2", "step_count")

    def __init__(self, name: str, values):
        super().__init__(values, requires_grad=True)
        self.name = name
        self.moment1 = np.zeros_like(self.values)
        self.moment2 = np.zeros_like(self.values)
        self.step_count = 0


def constant(values) -> Tensor:
    return Tensor(values, requires_grad=False)


def glorot_uniform(rng: np.random.Generator, fan_in: int, fan_out: int,
                   shape: tuple[int, int] | None = None) -> Array:
    """Uniform init with bound sqrt(6 / (fan_in + fan_out))."""
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    if shape is None:
        shape = (fan_in, fan_out)
    return rng.uniform(-bound, bound, size=shape)


# ---------------------------------------------------------------------------
# Row grouping


class RowGroups:
    """Grouping of matrix rows for segment reductions.

    ``order`` lists row indices group by group (duplicates allowed for
    reductions, forbidden for softmax masking); ``indptr`` holds group
    boundaries into ``order``; ``n_rows`` is the row count of the matrices
    the grouping applies to.
    """

    __slots__ = ("order", "indptr", "n_rows", "sizes", "covers_exactly")

    def __init__(self, order: Array, indptr: Array, n_rows: int):
        self.order = np.asarray(order, dtype=np.int64)
        self.indptr = np.asarray(indptr, dtype=np.int64)
        self.n_rows = int(n_rows)
        self.sizes = np.diff(self.indptr)
        if len(self.indptr) < 1 or self.indptr[0] != 0 or self.indptr[-1] != len(self.order):
            raise ValueError("indptr must start at 0 and end at len(order)")
        if np.any(self.sizes <= 0):
            raise ValueError("empty row group")
        if len(self.order) and (self.order.min() < 0 or self.order.max() >= self.n_rows):
            raise ValueError("row index out of range")
        # groups that tile rows 0..n-1 in order allow gather/scatter-free reductions
        self.covers_exactly = (len(self.order) == self.n_rows
                               and np.array_equal(self.order, np.arange(self.n_rows)))

    def __len__(self) -> int:
        return len(self.indptr) - 1

    @classmethod
    def from_lists(cls, groups: Sequence[Iterable[int]], n_rows: int) -> "RowGroups":
        arrays = [np.asarray(list(g), dtype=np.int64) for g in groups]
        if any(a.size == 0 for a in arrays):
            raise ValueError("empty row group")
        order = np.concatenate(arrays) if arrays else np.empty(0, dtype=np.int64)
        indptr = np.zeros(len(arrays) + 1, dtype=np.int64)
        np.cumsum([a.size for a in arrays], out=indptr[1:])
        return cls(order, indptr, n_rows)

    @classmethod
    def contiguous(cls, indptr: Array, n_rows: int) -> "RowGroups":
        """Groups over already-sorted rows: group g covers rows indptr[g]:indptr[g+1]."""
        indptr = np.asarray(indptr, dtype=np.int64)
        return cls(np.arange(indptr[-1], dtype=np.int64), indptr, n_rows)

    @classmethod
    def rectangular(cls, index_matrix: Array, n_rows: int) -> "RowGroups":
        """One group per row of ``index_matrix`` (fixed group size, repeats allowed)."""
        m = np.asarray(index_matrix, dtype=np.int64)
        n_groups, width = m.shape
        indptr = np.arange(0, (n_groups + 1) * width, width, dtype=np.int64)
        return cls(m.reshape(-1), indptr, n_rows)


def _coerce_groups(groups, n_rows: int) -> RowGroups:
    if isinstance(groups, RowGroups):
        if groups.n_rows != n_rows:
            raise ValueError(f"groups built for {groups.n_rows} rows, tensor has {n_rows}")
        return groups
    return RowGroups.from_lists(groups, n_rows)


# ---------------------------------------------------------------------------
# Ops


def _make(values: Array, parents: tuple, bwd: Callable[[Array], None] | None) -> Tensor:
    requires = any(p.requires_grad for p in parents)
    out = Tensor(values, requires_grad=requires, parents=parents if requires else ())
    if requires:
        out._backward = bwd
    return out


class GatherPlan:
    """A row-index array with its precomputed scatter layout.

    Hot paths gather with the same indices many times per step; building the
    argsort once and sharing it makes every backward scatter a plain
    segment reduction.
    """

    __slots__ = ("idx", "order", "starts", "unique_rows")

    def __init__(self, idx):
        self.idx = np.asarray(idx, dtype=np.int64)
        self.order = np.argsort(self.idx, kind="stable")
        sidx = self.idx[self.order]
        self.starts = np.flatnonzero(np.r_[True, sidx[1:] != sidx[:-1]]) if len(sidx) \
            else np.empty(0, dtype=np.int64)
        self.unique_rows = sidx[self.starts] if len(sidx) else sidx


def _coerce_plan(idx) -> GatherPlan:
    return idx if isinstance(idx, GatherPlan) else GatherPlan(idx)


def _scatter_add_rows(n_rows: int, plan: GatherPlan, src: Array) -> Array:
    """Dense (n_rows, d) accumulation of src rows at possibly-repeated indices."""
    out = np.zeros((n_rows, src.shape[1]))
    if len(plan.idx):
        out[plan.unique_rows] = np.add.reduceat(src[plan.order], plan.starts, axis=0)
    return out


def affine(x: Tensor, w: Tensor) -> Tensor:
    """Matrix product x @ w."""
    if x.shape[1] != w.shape[0]:
        raise ValueError(f"affine: inner dimensions disagree, {x.shape} @ {w.shape}")
    def bwd(g: Array) -> None:
        if x.requires_grad:
            x.accumulate(g @ w.values.T, own=True)
        if w.requires_grad:
            w.accumulate(x.values.T @ g, own=True)
    return _make(x.values @ w.values, (x, w), bwd)


def concat_cols(parts: Sequence[Tensor]) -> Tensor:
    """Column-wise concatenation of equal-row tensors."""
    if not parts:
        raise ValueError("concat_cols of nothing")
    rows = {p.shape[0] for p in parts}
    if len(rows) != 1:
        raise ValueError(f"concat_cols: row counts differ: {[p.shape for p in parts]}")
    widths = [p.shape[1] for p in parts]
    bounds = np.concatenate([[0], np.cumsum(widths)])
    def bwd(g: Array) -> None:
        for p, lo, hi in zip(parts, bounds[:-1], bounds[1:]):
            if p.requires_grad:
                p.accumulate(g[:, lo:hi])
    return _make(np.hstack([p.values for p in parts]), tuple(parts), bwd)


def take_rows(x: Tensor, idx) -> Tensor:
    """Gather rows by index or GatherPlan (repeats allowed); backward
    scatter-adds."""
    plan = _coerce_plan(idx)
    def bwd(g: Array) -> None:
        x.accumulate(_scatter_add_rows(x.shape[0], plan, g), own=True)
    return _make(x.values[plan.idx], (x,), bwd)


def slice_rows(x: Tensor, lo: int, hi: int) -> Tensor:
    """Row range [lo, hi) of x; backward pads the complement with zeros."""
    if not 0 <= lo < hi <= x.shape[0]:
        raise ValueError(f"row slice [{lo}, {hi}) out of bounds for {x.shape}")
    def bwd(g: Array) -> None:
        gx = np.zeros_like(x.values)
        gx[lo:hi] = g
        x.accumulate(gx, own=True)
    return _make(x.values[lo:hi].copy(), (x,), bwd)


def add(x: Tensor, y: Tensor) -> Tensor:
    """Elementwise sum of same-shape tensors."""
    if x.shape != y.shape:
        raise ValueError(f"add: shapes differ, {x.shape} vs {y.shape}")
    def bwd(g: Array) -> None:
        if x.requires_grad:
            x.accumulate(g)
        if y.requires_grad:
            y.accumulate(g)
    return _make(x.values + y.values, (x, y), bwd)


def scale_rows(x: Tensor, s: Tensor) -> Tensor:
    """Multiply row i of x by the scalar s[i, 0]."""
    if s.shape != (x.shape[0], 1):
        raise ValueError(f"scale_rows: weights {s.shape} do not match rows of {x.shape}")
    def bwd(g: Array) -> None:
        if x.requires_grad:
            x.accumulate(g * s.values, own=True)
        if s.requires_grad:
            s.accumulate((g * x.values).sum(axis=1, keepdims=True), own=True)
    return _make(x.values * s.values, (x, s), bwd)


def _grouped_reduce(x: Tensor, groups, mean: bool) -> Tensor:
    rg = _coerce_groups(groups, x.shape[0])
    gathered = x.values if rg.covers_exactly else x.values[rg.order]
    out = np.add.reduceat(gathered, rg.indptr[:-1], axis=0)
    if mean:
        out = out / rg.sizes[:, None]
    def bwd(g: Array) -> None:
        scaled = g / rg.sizes[:, None] if mean else g
        spread = np.repeat(scaled, rg.sizes, axis=0)
        if rg.covers_exactly:
            x.accumulate(spread, own=True)
        else:
            x.accumulate(_scatter_add_rows(x.shape[0], GatherPlan(rg.order), spread), own=True)
    return _make(out, (x,), bwd)


def row_mean_groups(x: Tensor, groups) -> Tensor:
    """Row g of the output is the mean of x's rows in group g."""
    return _grouped_reduce(x, groups, mean=True)


def row_sum_groups(x: Tensor, groups) -> Tensor:
    """Row g of the output is the sum of x's rows in group g."""
    return _grouped_reduce(x, groups, mean=False)


def _pointwise(x: Tensor, values: Array, deriv: Array) -> Tensor:
    def bwd(g: Array) -> None:
        x.accumulate(g * deriv, own=True)
    return _make(values, (x,), bwd)


def relu(x: Tensor) -> Tensor:
    v = x.values
    return _pointwise(x, np.maximum(v, 0.0), (v > 0).astype(np.float64))


def leaky_relu(x: Tensor, slope: float = 0.2) -> Tensor:
    v = x.values
    return _pointwise(x, np.where(v > 0, v, slope * v), np.where(v > 0, 1.0, slope))


def elu(x: Tensor, alpha: float = 1.0) -> Tensor:
    v = x.values
    neg = alpha * np.expm1(np.minimum(v, 0.0))
    return _pointwise(x, np.where(v > 0, v, neg), np.where(v > 0, 1.0, neg + alpha))


_ACTIVATIONS = {"relu": relu, "leaky_relu": leaky_relu, "elu": elu}


def activation(x: Tensor, kind: str, **params) -> Tensor:
    """Dispatch on activation name: relu, leaky_relu(slope), elu(alpha)."""
    try:
        fn = _ACTIVATIONS[kind]
    except KeyError:
        raise ValueError(f"unknown activation {kind!r}, expected one of {sorted(_ACTIVATIONS)}")
    return fn(x, **params)


def masked_softmax_rows(logits: Tensor, groups) -> Tensor:
    """Max-shifted softmax over each row group of a (n, 1) logit column.

    Rows outside every group get 0.  Groups must not repeat rows.
    """
    if logits.shape[1] != 1:
        raise ValueError(f"masked_softmax_rows expects a column, got {logits.shape}")
    rg = _coerce_groups(groups, logits.shape[0])
    lo = logits.values[:, 0] if rg.covers_exactly else logits.values[rg.order, 0]
    starts = rg.indptr[:-1]
    maxs = np.maximum.reduceat(lo, starts)
    ex = np.exp(lo - np.repeat(maxs, rg.sizes))
    sums = np.add.reduceat(ex, starts)
    alpha = ex / np.repeat(sums, rg.sizes)
    if rg.covers_exactly:
        out = alpha.reshape(-1, 1)
    else:
        out = np.zeros_like(logits.values)
        out[rg.order, 0] = alpha
    def bwd(g: Array) -> None:
        go = g[:, 0] if rg.covers_exactly else g[rg.order, 0]
        inner = np.add.reduceat(alpha * go, starts)
        gl = alpha * (go - np.repeat(inner, rg.sizes))
        if rg.covers_exactly:
            logits.accumulate(gl.reshape(-1, 1), own=True)
        else:
            gx = np.zeros_like(logits.values)
            gx[rg.order, 0] = gl
            logits.accumulate(gx, own=True)
    return _make(out, (logits,), bwd)


def cross_entropy(logits: Tensor, labels) -> Tensor:
    """Mean negative log-softmax of the true class; returns a 1x1 tensor."""
    labels = np.asarray(labels, dtype=np.int64)
    n, c = logits.shape
    if labels.shape != (n,):
        raise ValueError(f"labels shape {labels.shape} does not match {n} logit rows")
    if labels.size and (labels.min() < 0 or labels.max() >= c):
        raise ValueError(f"label out of range for {c} classes")
    z = logits.values
    zmax = z.max(axis=1, keepdims=True)
    ez = np.exp(z - zmax)
    sez = ez.sum(axis=1, keepdims=True)
    log_probs = (z - zmax) - np.log(sez)
    loss = -log_probs[np.arange(n), labels].mean()
    def bwd(g: Array) -> None:
        soft = ez / sez
        soft[np.arange(n), labels] -= 1.0
        logits.accumulate(g[0, 0] * soft / n, own=True)
    return _make(np.array([[loss]]), (logits,), bwd)


def dropout_coeffs(coeffs: Tensor, rate: float, training: bool,
                   rng: np.random.Generator | None = None) -> Tensor:
    """Zero each entry with probability ``rate`` and rescale survivors by 1/(1-rate).

    Identity when not training or rate == 0.
    """
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    if not training or rate == 0.0:
        return coeffs
    if rng is None:
        raise ValueError("training-mode dropout needs a generator")
    mask = (rng.random(coeffs.shape) >= rate) / (1.0 - rate)
    def bwd(g: Array) -> None:
        coeffs.accumulate(g * mask, own=True)
    return _make(coeffs.values * mask, (coeffs,), bwd)


def sum_all(x: Tensor) -> Tensor:
    """Sum of all entries as a 1x1 tensor."""
    def bwd(g: Array) -> None:
        x.accumulate(np.full_like(x.values, g[0, 0]), own=True)
    return _make(np.array([[x.values.sum()]]), (x,), bwd)


def mean_tensors(parts: Sequence[Tensor]) -> Tensor:
    """Elementwise mean of same-shape tensors."""
    if not parts:
        raise ValueError("mean_tensors of nothing")
    shapes = {p.shape for p in parts}
    if len(shapes) != 1:
        raise ValueError(f"mean_tensors: shapes differ: {sorted(shapes)}")
    k = len(parts)
    def bwd(g: Array) -> None:
        for p in parts:
            if p.requires_grad:
                p.accumulate(g / k, own=True)
    values = parts[0].values.copy()
    for p in parts[1:]:
        values += p.values
    return _make(values / k, tuple(parts), bwd)


# ---------------------------------------------------------------------------
# Backward pass and gradient checking


def backward(loss: Tensor) -> None:
    """Propagate gradients from a 1x1 loss through the tape, once per node."""
    if loss.values.shape != (1, 1):
        raise ValueError(f"backward needs a scalar loss, got {loss.shape}")
    if not loss.requires_grad:
        return
    topo: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(loss, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            topo.append(node)
            continue
        if id(node) in seen or not node.requires_grad:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node.parents:
            stack.append((p, False))
    loss.accumulate(np.ones((1, 1)))
    for node in reversed(topo):
        if node._backward is not None:
            node.backward_visits += 1
            node._backward(node.grad)


def grad_check(f: Callable[[], Tensor], params: Sequence[Tensor], eps: float = 1e-5) -> float:
    """Max relative error between analytic gradients of f() and central differences.

    ``f`` must rebuild its forward pass on every call so parameter edits
    take effect.  Relative error uses denominator max(|analytic|, |numeric|, 1e-6).
    """
    for p in params:
        p.zero_grad()
    loss = f()
    backward(loss)
    analytic = []
    for p in params:
        if p.grad is None:
            raise ValueError("parameter received no gradient; is it used by f?")
        analytic.append(p.grad.copy())
        p.zero_grad()
    worst = 0.0
    for p, ga in zip(params, analytic):
        flat = p.values.reshape(-1)
        gflat = ga.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            up = f().item()
            flat[i] = orig - eps
            down = f().item()
            flat[i] = orig
            numeric = (up - down) / (2.0 * eps)
            denom = max(abs(gflat[i]), abs(numeric), 1e-6)
            worst = max(worst, abs(gflat[i] - numeric) / denom)
    return worst


def collect_tape(loss: Tensor) -> list[Tensor]:
    """All tensors reachable from ``loss`` through parent links (loss included)."""
    out: list[Tensor] = []
    seen: set[int] = set()
    stack = [loss]
    while stack:
        node = stack.pop()
        if id(node) in seen:
            continue
        seen.add(id(node))
        out.append(node)
        stack.extend(node.parents)
    return out
