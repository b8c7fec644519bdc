"""A small dense-tensor engine with reverse-mode automatic differentiation.

Tensors hold float32 data by default; pass ``dtype=np.float64`` for the
64-bit mode used by gradient checks. There is no broadcasting apart from a
Python scalar combined with a tensor; anything else raises ``ShapeError``.

``backward`` refuses to run twice on the same graph and refuses to overwrite
a leaf gradient that has not been cleared with ``zero_grad``.
"""

from contextlib import contextmanager
from numbers import Number

import numpy as np

from . import kernels as K
from ._accel import map_chunks
from .errors import GraphError, ShapeError, ValidationError

DEFAULT_DTYPE = np.float32

_grad_enabled = True


@contextmanager
def no_grad():
    """Build no graph inside the block (inference only)."""
    global _grad_enabled
    prev, _grad_enabled = _grad_enabled, False
    try:
        yield
    finally:
        _grad_enabled = prev


class Node:
    """Record of the operation that produced a tensor."""

    __slots__ = ("op", "parents", "backward_fn", "consumed")

    def __init__(self, op, parents, backward_fn):
        self.op = op
        self.parents = parents
        self.backward_fn = backward_fn
        self.consumed = False


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "node", "retain_grad", "name")

    def __init__(self, data, requires_grad=False, dtype=None, name=None):
        if dtype is None:
            dtype = DEFAULT_DTYPE
        arr = np.array(data, dtype=dtype)
        if any(s < 1 for s in arr.shape):
            raise ShapeError(f"tensor dimensions must be positive, got {arr.shape}")
        self.data = arr
        self.grad = None
        self.requires_grad = requires_grad
        self.node = None
        self.retain_grad = False
        self.name = name

    @classmethod
    def _wrap(cls, data, op, parents, backward_fn):
        out = cls.__new__(cls)
        out.data = data
        out.grad = None
        out.retain_grad = False
        out.name = None
        out.requires_grad = _grad_enabled and any(p.requires_grad for p in parents)
        out.node = Node(op, parents, backward_fn) if out.requires_grad else None
        return out

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def is_leaf(self):
        return self.node is None

    def numpy(self):
        return self.data

    def zero_grad(self):
        self.grad = None

    def detach(self):
        return Tensor(self.data, dtype=self.data.dtype)

    def backward(self, params=None):
        backward(self, params)

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __matmul__(self, other):
        return matmul(self, other)

    def __repr__(self):
        tag = f", op={self.node.op}" if self.node is not None else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{tag})"


def as_tensor(x, dtype=None):
    if isinstance(x, Tensor):
        return x
    return Tensor(x, dtype=dtype)


def _check_dtypes(*tensors):
    dtypes = {t.dtype for t in tensors}
    if len(dtypes) > 1:
        raise ValidationError(f"mixed dtypes {sorted(str(d) for d in dtypes)}")


def _scalar_operand(b, like):
    """Scalar operand as an array of ``like``'s dtype, or None if ``b`` is not a scalar."""
    if isinstance(b, Number):
        return like.dtype.type(b)
    return None


# -- elementwise ---------------------------------------------------------------


def add(a, b):
    s = _scalar_operand(b, a)
    if s is not None:
        return Tensor._wrap(a.data + s, "add", (a,), lambda g: (g,))
    if a.shape != b.shape:
        raise ShapeError(f"add: shape mismatch {a.shape} vs {b.shape}")
    _check_dtypes(a, b)
    return Tensor._wrap(a.data + b.data, "add", (a, b), lambda g: (g, g))


def mul(a, b):
    s = _scalar_operand(b, a)
    if s is not None:
        return Tensor._wrap(a.data * s, "mul", (a,), lambda g: (g * s,))
    if a.shape != b.shape:
        raise ShapeError(f"mul: shape mismatch {a.shape} vs {b.shape}")
    _check_dtypes(a, b)
    ad, bd = a.data, b.data
    return Tensor._wrap(ad * bd, "mul", (a, b), lambda g: (g * bd, g * ad))


def relu(a):
    mask = a.data > 0
    out = np.where(mask, a.data, a.dtype.type(0))
    return Tensor._wrap(out, "relu", (a,), lambda g: (g * mask,))


_ELEMENTWISE = {"add": add, "mul": mul, "relu": relu}


def elementwise(op, a, b=None):
    """Dispatch by name: ``add``, ``mul`` (binary) or ``relu`` (unary)."""
    try:
        fn = _ELEMENTWISE[op]
    except KeyError:
        raise ValidationError(f"unknown elementwise op {op!r}") from None
    if op == "relu":
        if b is not None:
            raise ValidationError("relu takes a single operand")
        return fn(a)
    if b is None:
        raise ValidationError(f"{op} needs two operands")
    return fn(a, b)


def tensor_sum(a):
    """Sum of all elements as a scalar tensor."""
    shape, dtype = a.shape, a.dtype
    out = np.asarray(a.data.sum(), dtype=dtype)
    return Tensor._wrap(out, "sum", (a,), lambda g: (np.full(shape, g, dtype=dtype),))


def pick(a, index):
    """Single element ``a[index]`` as a scalar tensor."""
    index = tuple(np.atleast_1d(index).tolist())
    if len(index) != a.ndim or any(not 0 <= i < n for i, n in zip(index, a.shape)):
        raise ShapeError(f"index {index} out of range for shape {a.shape}")
    shape, dtype = a.shape, a.dtype

    def backward_fn(g):
        ga = np.zeros(shape, dtype=dtype)
        ga[index] = g
        return (ga,)

    return Tensor._wrap(np.asarray(a.data[index]), "pick", (a,), backward_fn)


# -- linear algebra ------------------------------------------------------------


def matmul(a, b):
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError(f"matmul needs 2-D operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: inner dimensions differ, {a.shape} x {b.shape}")
    _check_dtypes(a, b)
    ad, bd = a.data, b.data

    def backward_fn(g):
        return (
            K.matmul(g, np.ascontiguousarray(bd.T)),
            K.matmul(np.ascontiguousarray(ad.T), g),
        )

    return Tensor._wrap(K.matmul(ad, bd), "matmul", (a, b), backward_fn)


def add_bias(x, b):
    """``x + b`` with ``b`` (n,) repeated over the leading axes of ``x`` (..., n)."""
    if b.ndim != 1 or x.shape[-1] != b.shape[0]:
        raise ShapeError(f"add_bias: bias {b.shape} does not match last axis of {x.shape}")
    _check_dtypes(x, b)
    n = b.shape[0]
    return Tensor._wrap(
        x.data + b.data, "add_bias", (x, b), lambda g: (g, g.reshape(-1, n).sum(axis=0))
    )


def conv2d(x, w, bias=None, stride=1, padding=0):
    """2-D cross-correlation with zero padding.

    ``x`` is (C, H, W) or batched (B, C, H, W); ``w`` is (C_out, C_in, kH, kW).
    The optional ``bias`` (C_out,) is added after the window sum.
    """
    if x.ndim not in (3, 4):
        raise ShapeError(f"conv2d input must be 3-D or 4-D, got {x.shape}")
    if w.ndim != 4:
        raise ShapeError(f"conv2d kernels must be 4-D, got {w.shape}")
    if stride < 1 or padding < 0:
        raise ValidationError(f"bad stride/padding {stride}/{padding}")
    batched = x.ndim == 4
    xd = x.data if batched else x.data[None]
    B, C, H, W = xd.shape
    Co, Ci, kh, kw = w.shape
    if Ci != C:
        raise ShapeError(f"conv2d: input has {C} channels, kernels expect {Ci}")
    Hp, Wp = H + 2 * padding, W + 2 * padding
    if kh > Hp or kw > Wp:
        raise ShapeError(f"conv2d: kernel {kh}x{kw} larger than padded input {Hp}x{Wp}")
    parents = (x, w) if bias is None else (x, w, bias)
    if bias is not None and bias.shape != (Co,):
        raise ShapeError(f"conv2d: bias shape {bias.shape}, expected ({Co},)")
    _check_dtypes(*parents)
    Ho = (Hp - kh) // stride + 1
    Wo = (Wp - kw) // stride + 1

    xp = np.pad(xd, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    wd = np.ascontiguousarray(w.data)
    out = np.concatenate(
        map_chunks(lambda xs: K.conv2d_forward(xs, wd, stride, Ho, Wo), B, xp)
    )
    if bias is not None:
        out += bias.data[None, :, None, None]

    def backward_fn(g):
        g4 = np.ascontiguousarray(g if batched else g[None])
        gxp = np.concatenate(
            map_chunks(lambda gs: K.conv2d_grad_input(gs, wd, stride, Hp, Wp), B, g4)
        )
        gx = gxp[:, :, padding:padding + H, padding:padding + W]
        parts = np.concatenate(
            map_chunks(lambda gs, xs: K.conv2d_grad_weight(gs, xs, stride, kh, kw), B, g4, xp)
        )
        gw = parts[0].copy()
        for i in range(1, B):
            gw += parts[i]
        grads = (gx if batched else gx[0], gw)
        if bias is not None:
            grads += (g4.sum(axis=(0, 2, 3)),)
        return grads

    return Tensor._wrap(out if batched else out[0], "conv2d", parents, backward_fn)


def global_avg_pool(x):
    """Spatial mean: (C, H, W) -> (C,) or (B, C, H, W) -> (B, C)."""
    if x.ndim not in (3, 4):
        raise ShapeError(f"global_avg_pool input must be 3-D or 4-D, got {x.shape}")
    batched = x.ndim == 4
    xd = x.data if batched else x.data[None]
    H, W = xd.shape[2:]
    out = K.spatial_mean(np.ascontiguousarray(xd))
    scale = x.dtype.type(1.0 / (H * W))
    shape = x.shape

    def backward_fn(g):
        return (np.broadcast_to(g[..., None, None] * scale, shape).copy(),)

    return Tensor._wrap(out if batched else out[0], "global_avg_pool", (x,), backward_fn)


# -- loss ----------------------------------------------------------------------


def softmax(logits, axis=-1):
    """Numerically stable softmax of an array (not differentiable)."""
    z = logits - logits.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


def softmax_cross_entropy(logits, label):
    """Cross-entropy of softmax(logits) against integer labels.

    With (d,) logits and an int label returns the loss; with (B, d) logits
    and B labels returns the batch mean.
    """
    batched = logits.ndim == 2
    if logits.ndim not in (1, 2):
        raise ShapeError(f"logits must be 1-D or 2-D, got {logits.shape}")
    x = logits.data if batched else logits.data[None]
    B, d = x.shape
    labels = np.atleast_1d(np.asarray(label))
    if labels.shape != (B,) or not np.issubdtype(labels.dtype, np.integer):
        raise ValidationError(f"expected {B} integer labels, got {label!r}")
    bad = (labels < 0) | (labels >= d)
    if bad.any():
        raise ValidationError(f"label {labels[bad][0]} out of range for {d} classes")
    z = x - x.max(axis=1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=1))
    rows = np.arange(B)
    losses = lse - z[rows, labels]
    loss = losses.sum() / x.dtype.type(B)
    probs = np.exp(z - lse[:, None])

    def backward_fn(g):
        gz = probs.copy()
        gz[rows, labels] -= 1
        gz *= g / x.dtype.type(B)
        return (gz if batched else gz[0],)

    return Tensor._wrap(np.asarray(loss, dtype=x.dtype), "softmax_xent", (logits,), backward_fn)


# -- reverse pass --------------------------------------------------------------


def _topo_order(root):
    order, seen = [], set()
    stack = [(root, False)]
    while stack:
        t, expanded = stack.pop()
        if expanded:
            order.append(t)
            continue
        if id(t) in seen:
            continue
        seen.add(id(t))
        stack.append((t, True))
        if t.node is not None:
            for p in reversed(t.node.parents):
                if p.requires_grad and id(p) not in seen:
                    stack.append((p, False))
    return order


def backward(loss, params=None):
    """Populate ``.grad`` on every leaf reachable from the scalar ``loss``.

    Leaves listed in ``params`` but unreachable from ``loss`` receive zero
    gradients. Intermediate tensors with ``retain_grad`` set keep theirs.
    """
    if loss.data.size != 1:
        raise GraphError(f"backward needs a scalar root, got shape {loss.shape}")
    if not loss.requires_grad:
        raise GraphError("loss does not depend on any tensor requiring grad")
    if loss.node is not None and loss.node.consumed:
        raise GraphError("graph already used by a previous backward call")
    order = _topo_order(loss)
    leaves = [t for t in order if t.node is None]
    extra = [p for p in (params or ()) if all(p is not t for t in leaves)]
    for t in leaves + extra:
        if t.grad is not None:
            raise GraphError(
                f"gradient of {t.name or t!r} already populated; call zero_grad first"
            )

    grads = {id(loss): np.ones(loss.shape, dtype=loss.dtype)}
    for t in reversed(order):
        g = grads.pop(id(t), None)
        if g is None:
            g = np.zeros(t.shape, dtype=t.dtype)
        if t.node is None:
            t.grad = g
            continue
        if t.retain_grad:
            t.grad = g
        parent_grads = t.node.backward_fn(g)
        for p, pg in zip(t.node.parents, parent_grads):
            if not p.requires_grad:
                continue
            if id(p) in grads:
                grads[id(p)] = grads[id(p)] + pg
            else:
                grads[id(p)] = np.asarray(pg, dtype=p.dtype).reshape(p.shape)
        t.node.consumed = True
        t.node.backward_fn = None
    for p in extra:
        p.grad = np.zeros(p.shape, dtype=p.dtype)


# -- optimizer -----------------------------------------------------------------


class SGD:
    """SGD with heavy-ball momentum: v <- m*v + g; p <- p - lr*v; grads cleared."""

    def __init__(self, params, lr=0.1, momentum=0.0):
        self.params = list(params)
        self.lr = lr
        self.momentum = momentum
        self.velocity = [np.zeros_like(p.data) for p in self.params]

    def step(self, lr=None):
        lr = self.lr if lr is None else lr
        missing = [p.name or repr(p) for p in self.params if p.grad is None]
        if missing:
            raise GraphError(f"missing gradients for {', '.join(missing)}")
        for p, v in zip(self.params, self.velocity):
            v *= p.dtype.type(self.momentum)
            v += p.grad
            p.data = p.data - p.dtype.type(lr) * v
            p.grad = None

    def zero_grad(self):
        for p in self.params:
            p.grad = None


def sgd_step(params, lr, momentum=0.0, velocity=None):
    """One functional SGD step; returns the updated velocity buffers."""
    opt = SGD(params, lr, momentum)
    if velocity is not None:
        opt.velocity = velocity
    opt.step()
    return opt.velocity
