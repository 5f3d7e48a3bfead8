# -*- coding: utf-8 -*-

"""Dense float64 tensors with a reverse-mode gradient tape.

Every model layer in dynstg_mamba is composed from the closed set of
primitives registered in :data:`PRIMITIVES`. A primitive evaluated while a
:class:`Tape` is active, with at least one operand that requires gradients,
appends a node to that tape; :func:`backward` walks the nodes in reverse
append order and accumulates gradients into the leaves.

Examples
--------
>>> x = parameter([3.0])
>>> with Tape():
...     y = reduce_sum(x * x)
...     backward(y)
>>> x.grad
array([6.])
"""

import dataclasses
import logging
import threading
from collections import Counter, OrderedDict
from contextlib import contextmanager

import numpy as np

from .exceptions import ContractError, DomainError, ShapeError


LOGGER = logging.getLogger(__name__)

DTYPE = np.float64

_STATE = threading.local()


def _tape_stack():
    stack = getattr(_STATE, "tapes", None)
    if stack is None:
        stack = _STATE.tapes = []
    return stack


def _counters():
    counters = getattr(_STATE, "counters", None)
    if counters is None:
        counters = _STATE.counters = []
    return counters


def active_tape():
    """Return the tape recording on this thread, or None"""
    stack = _tape_stack()
    return stack[-1] if stack else None


class Tensor(object):
    """Dense multi-dimensional float64 array with optional tape participation.

    Attributes
    ----------
    data : numpy.ndarray
        Row-major float64 values.
    requires_grad : bool
        Whether gradients should be accumulated for this tensor.
    grad : numpy.ndarray or None
        Accumulated gradient, same shape as ``data``.
    name : str or None
        Optional label used in gradient-check reports.
    """
    __array_ufunc__ = None

    def __init__(self, data, requires_grad=False, name=None):
        self.data = np.array(data, dtype=DTYPE)
        self.requires_grad = requires_grad
        self.grad = None
        self.name = name
        self._node = None
        self._tape = None

    @classmethod
    def _wrap(cls, array, requires_grad=False):
        tensor = cls.__new__(cls)
        tensor.data = np.asarray(array, dtype=DTYPE)
        tensor.requires_grad = requires_grad
        tensor.grad = None
        tensor.name = None
        tensor._node = None
        tensor._tape = None
        return tensor

    def __repr__(self):
        return "Tensor(shape=%s, requires_grad=%s)" % (self.shape,
                                                       self.requires_grad)

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def item(self):
        if self.size != 1:
            raise ContractError("item() requires a single-element tensor, "
                                "got shape %s" % (self.shape,))
        return float(self.data.reshape(-1)[0])

    def is_finite(self):
        return bool(np.all(np.isfinite(self.data)))

    def detach(self):
        """Return a tensor sharing the values but never recording"""
        return Tensor._wrap(self.data)

    def zero_grad(self):
        self.grad = None

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return getitem(self, index)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        return transpose(self, axes or None)

    def sum(self, axis=None, keepdims=False):
        return reduce_sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return reduce_mean(self, axis=axis, keepdims=keepdims)


def as_tensor(value):
    """Wrap ``value`` as a constant tensor unless it already is one"""
    if isinstance(value, Tensor):
        return value
    return Tensor._wrap(np.array(value, dtype=DTYPE))


def parameter(data, name=None):
    """Create a leaf tensor that requires gradients"""
    return Tensor(data, requires_grad=True, name=name)


def zeros(shape):
    return Tensor._wrap(np.zeros(shape, dtype=DTYPE))


class Tape(object):
    """Append-only record of primitive evaluations on one thread.

    Use as a context manager; operations evaluated inside the ``with``
    block are recorded when an operand requires gradients.

    Attributes
    ----------
    nodes : list of Function
        Recorded operations in evaluation order.
    """

    def __init__(self):
        self.nodes = []
        self._leaves = OrderedDict()

    def __enter__(self):
        _tape_stack().append(self)
        return self

    def __exit__(self, type, value, traceback):
        _tape_stack().pop()

    def __len__(self):
        return len(self.nodes)

    def record(self, node):
        self.nodes.append(node)
        for tensor in node.inputs:
            if tensor.requires_grad and not self._owns(tensor):
                self._leaves[id(tensor)] = tensor

    def _owns(self, tensor):
        return tensor._tape is self and tensor._node is not None

    def backward(self, output):
        """Propagate d(output)/d(leaf) into every leaf's ``grad``.

        Gradients accumulate across calls until the leaves are zeroed.
        """
        grads = {id(output): np.ones_like(output.data)}
        for node in reversed(self.nodes):
            grad = grads.pop(id(node.output), None)
            if grad is None:
                continue
            for tensor, input_grad in zip(node.inputs, node.backward(grad)):
                if input_grad is None or not tensor.requires_grad:
                    continue
                input_grad = unbroadcast(input_grad, tensor.shape)
                if self._owns(tensor):
                    key = id(tensor)
                    grads[key] = grads[key] + input_grad if key in grads \
                        else input_grad
                elif tensor.grad is None:
                    tensor.grad = np.array(input_grad, dtype=DTYPE)
                else:
                    tensor.grad = tensor.grad + input_grad

        for leaf in self._leaves.values():
            if leaf.grad is None:
                leaf.grad = np.zeros_like(leaf.data)


@contextmanager
def no_tape():
    """Suspend recording on this thread for the duration of the block"""
    stack = _tape_stack()
    stack.append(None)
    try:
        yield
    finally:
        stack.pop()


class OpCounter(object):
    """Tally of primitive evaluations, see :func:`count_ops`"""

    def __init__(self):
        self.count = 0
        self.by_op = Counter()

    def add(self, name):
        self.count += 1
        self.by_op[name] += 1


@contextmanager
def count_ops():
    """Count primitive evaluations performed inside the block.

    Examples
    --------
    >>> with count_ops() as counter:
    ...     _ = exp(as_tensor([1.0]))
    >>> counter.count
    1
    """
    counter = OpCounter()
    _counters().append(counter)
    try:
        yield counter
    finally:
        _counters().remove(counter)


def backward(output):
    """Populate gradients of a scalar ``output`` produced under a tape.

    Parameters
    ----------
    output : Tensor
        Single-element tensor recorded on a live tape.

    Raises
    ------
    ContractError
        If ``output`` is not a scalar or was not recorded on a tape.
    """
    if not isinstance(output, Tensor):
        raise ContractError("backward expects a Tensor, got %r" % (output,))
    if output.size != 1:
        raise ContractError("backward requires a scalar output, got shape %s"
                            % (output.shape,))
    if output._tape is None or output._node is None:
        raise ContractError("backward called on a tensor that was not "
                            "recorded on a tape")
    output._tape.backward(output)


def unbroadcast(grad, shape):
    """Sum ``grad`` over the axes numpy broadcasting added to reach it"""
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _broadcast_shape(name, a, b):
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError("%s: cannot broadcast shapes %s and %s"
                         % (name, a.shape, b.shape))


def _normalize_axes(axis, ndim):
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(sorted(a % ndim for a in axis))


def _expand_reduced(grad, shape, axis, keepdims):
    if not keepdims:
        grad = np.expand_dims(grad, _normalize_axes(axis, len(shape)))
    return np.broadcast_to(grad, shape)


def _sigmoid(x):
    out = np.empty_like(x)
    positive = x >= 0
    out[positive] = 1.0 / (1.0 + np.exp(-x[positive]))
    exp_x = np.exp(x[~positive])
    out[~positive] = exp_x / (1.0 + exp_x)
    return out


class Function(object):
    """A primitive operation and, once recorded, its tape node.

    Subclasses implement ``forward`` over numpy arrays and ``backward``,
    which maps the output gradient to one gradient (or None) per input.
    """
    name = None

    def __init__(self, inputs, options):
        self.inputs = inputs
        self.options = options
        self.output = None

    def forward(self, *arrays):
        raise NotImplementedError("Forward pass not implemented for %s"
                                  % self.name)

    def backward(self, grad):
        raise NotImplementedError("Backward pass not implemented for %s"
                                  % self.name)

    def needs(self, index):
        return self.inputs[index].requires_grad

    @classmethod
    def apply(cls, *operands, **options):
        inputs = tuple(as_tensor(operand) for operand in operands)
        node = cls(inputs, options)
        data = node.forward(*(tensor.data for tensor in inputs))
        for counter in _counters():
            counter.add(cls.name)

        tape = active_tape()
        record = tape is not None and any(t.requires_grad for t in inputs)
        output = Tensor._wrap(data, requires_grad=record)
        if record:
            node.output = output
            output._node = node
            output._tape = tape
            tape.record(node)
        return output


class Add(Function):
    name = "add"

    def forward(self, a, b):
        _broadcast_shape(self.name, a, b)
        return a + b

    def backward(self, grad):
        return grad, grad


class Sub(Function):
    name = "sub"

    def forward(self, a, b):
        _broadcast_shape(self.name, a, b)
        return a - b

    def backward(self, grad):
        return grad, -grad


class Neg(Function):
    name = "neg"

    def forward(self, a):
        return -a

    def backward(self, grad):
        return (-grad,)


class Mul(Function):
    name = "mul"

    def forward(self, a, b):
        _broadcast_shape(self.name, a, b)
        return a * b

    def backward(self, grad):
        a, b = (t.data for t in self.inputs)
        return (grad * b if self.needs(0) else None,
                grad * a if self.needs(1) else None)


class Div(Function):
    name = "div"

    def forward(self, a, b):
        _broadcast_shape(self.name, a, b)
        return a / b

    def backward(self, grad):
        a, b = (t.data for t in self.inputs)
        return (grad / b if self.needs(0) else None,
                -grad * a / (b * b) if self.needs(1) else None)


class MatMul(Function):
    """Matrix product over the last two axes, broadcasting leading axes"""
    name = "matmul"

    def forward(self, a, b):
        if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
            raise ShapeError("matmul: shapes %s and %s do not conform"
                             % (a.shape, b.shape))
        try:
            np.broadcast_shapes(a.shape[:-2], b.shape[:-2])
        except ValueError:
            raise ShapeError("matmul: batch shapes of %s and %s do not "
                             "broadcast" % (a.shape, b.shape))
        return np.matmul(a, b)

    def backward(self, grad):
        a, b = (t.data for t in self.inputs)
        grad_a = np.matmul(grad, np.swapaxes(b, -1, -2)) \
            if self.needs(0) else None
        grad_b = np.matmul(np.swapaxes(a, -1, -2), grad) \
            if self.needs(1) else None
        return grad_a, grad_b


class Einsum(Function):
    """Contraction over named indices, e.g. ``'ij,bjf->bif'``.

    The subscripts must be explicit (``->``), without ellipsis and without
    an index repeated inside one operand.
    """
    name = "einsum"

    def forward(self, *arrays):
        subscripts = self.options["subscripts"].replace(" ", "")
        if "->" not in subscripts or "." in subscripts:
            raise ContractError("einsum: subscripts must be explicit, got %r"
                                % subscripts)
        inputs, output = subscripts.split("->")
        self.in_subs = inputs.split(",")
        self.out_sub = output
        if len(self.in_subs) != len(arrays):
            raise ContractError("einsum: %d operands for %r"
                                % (len(arrays), subscripts))
        for sub in self.in_subs:
            if len(set(sub)) != len(sub):
                raise ContractError("einsum: repeated index in %r" % sub)
        try:
            return np.einsum(subscripts, *arrays)
        except ValueError:
            raise ShapeError("einsum %r: shapes %s do not conform"
                             % (subscripts, [a.shape for a in arrays]))

    def backward(self, grad):
        arrays = [t.data for t in self.inputs]
        grads = []
        for i, sub in enumerate(self.in_subs):
            if not self.needs(i):
                grads.append(None)
                continue
            other_subs = [s for j, s in enumerate(self.in_subs) if j != i]
            others = [a for j, a in enumerate(arrays) if j != i]
            available = set(self.out_sub).union(*other_subs)
            target = "".join(c for c in sub if c in available)
            spec = ",".join([self.out_sub] + other_subs) + "->" + target
            partial = np.einsum(spec, grad, *others)
            if target != sub:
                # indices summed away by this operand alone
                shape = [size if c in available else 1
                         for c, size in zip(sub, arrays[i].shape)]
                partial = np.broadcast_to(partial.reshape(shape),
                                          arrays[i].shape)
            grads.append(partial)
        return grads


class Conv1d(Function):
    """Cross-correlation along axis 1 of a ``(batch, time, channels)`` array.

    A weight of shape ``(K, C_in, C_out)`` mixes channels; a weight of shape
    ``(K, C)`` is applied depth-wise. ``padding=(left, right)`` zero-pads
    the time axis, stride is 1.
    """
    name = "conv1d"

    def forward(self, x, w):
        left, right = self.options.get("padding", (0, 0))
        self.depthwise = w.ndim == 2
        if x.ndim != 3 or w.ndim not in (2, 3) or w.shape[1] != x.shape[2]:
            raise ShapeError("conv1d: input %s and kernel %s do not conform"
                             % (x.shape, w.shape))
        padded = np.pad(x, ((0, 0), (left, right), (0, 0)))
        width = padded.shape[1] - w.shape[0] + 1
        if width < 1:
            raise ShapeError("conv1d: kernel %s longer than padded input %s"
                             % (w.shape, padded.shape))
        self.padded = padded
        self.width = width
        out = None
        for k in range(w.shape[0]):
            window = padded[:, k:k + width, :]
            term = window * w[k] if self.depthwise else np.matmul(window, w[k])
            out = term if out is None else out + term
        return out

    def backward(self, grad):
        x, w = (t.data for t in self.inputs)
        left, _ = self.options.get("padding", (0, 0))
        grad_padded = np.zeros_like(self.padded)
        grad_w = np.zeros_like(w)
        for k in range(w.shape[0]):
            window = self.padded[:, k:k + self.width, :]
            if self.depthwise:
                grad_padded[:, k:k + self.width, :] += grad * w[k]
                grad_w[k] = np.sum(window * grad, axis=(0, 1))
            else:
                grad_padded[:, k:k + self.width, :] += np.matmul(grad, w[k].T)
                grad_w[k] = np.einsum("btc,bto->co", window, grad)
        grad_x = grad_padded[:, left:left + x.shape[1], :]
        return grad_x, grad_w


class Softmax(Function):
    name = "softmax"

    def forward(self, x):
        axis = self.options.get("axis", -1)
        if x.ndim == 0 or x.shape[axis] == 0:
            raise DomainError("softmax over an empty axis (shape %s)"
                              % (x.shape,))
        shifted = np.exp(x - np.max(x, axis=axis, keepdims=True))
        return shifted / np.sum(shifted, axis=axis, keepdims=True)

    def backward(self, grad):
        y = self.output.data
        axis = self.options.get("axis", -1)
        return (y * (grad - np.sum(grad * y, axis=axis, keepdims=True)),)


class LogSoftmax(Function):
    name = "log_softmax"

    def forward(self, x):
        axis = self.options.get("axis", -1)
        if x.ndim == 0 or x.shape[axis] == 0:
            raise DomainError("log_softmax over an empty axis (shape %s)"
                              % (x.shape,))
        shifted = x - np.max(x, axis=axis, keepdims=True)
        return shifted - np.log(np.sum(np.exp(shifted), axis=axis,
                                       keepdims=True))

    def backward(self, grad):
        axis = self.options.get("axis", -1)
        probs = np.exp(self.output.data)
        return (grad - probs * np.sum(grad, axis=axis, keepdims=True),)


class Sigmoid(Function):
    name = "sigmoid"

    def forward(self, x):
        return _sigmoid(x)

    def backward(self, grad):
        y = self.output.data
        return (grad * y * (1.0 - y),)


class SiLU(Function):
    name = "silu"

    def forward(self, x):
        return x * _sigmoid(x)

    def backward(self, grad):
        x = self.inputs[0].data
        s = _sigmoid(x)
        return (grad * s * (1.0 + x * (1.0 - s)),)


class Softplus(Function):
    name = "softplus"

    def forward(self, x):
        return np.logaddexp(0.0, x)

    def backward(self, grad):
        return (grad * _sigmoid(self.inputs[0].data),)


class Exp(Function):
    name = "exp"

    def forward(self, x):
        return np.exp(x)

    def backward(self, grad):
        return (grad * self.output.data,)


class Sum(Function):
    name = "sum"

    def forward(self, x):
        return np.sum(x, axis=self.options.get("axis"),
                      keepdims=self.options.get("keepdims", False))

    def backward(self, grad):
        x = self.inputs[0].data
        return (_expand_reduced(grad, x.shape, self.options.get("axis"),
                                self.options.get("keepdims", False)),)


class Mean(Function):
    name = "mean"

    def forward(self, x):
        return np.mean(x, axis=self.options.get("axis"),
                       keepdims=self.options.get("keepdims", False))

    def backward(self, grad):
        x = self.inputs[0].data
        axes = _normalize_axes(self.options.get("axis"), x.ndim)
        count = int(np.prod([x.shape[a] for a in axes]))
        return (_expand_reduced(grad, x.shape, self.options.get("axis"),
                                self.options.get("keepdims", False)) / count,)


class Reshape(Function):
    name = "reshape"

    def forward(self, x):
        try:
            return np.reshape(x, self.options["shape"]).copy()
        except ValueError:
            raise ShapeError("reshape: cannot reshape %s into %s"
                             % (x.shape, self.options["shape"]))

    def backward(self, grad):
        return (np.reshape(grad, self.inputs[0].shape),)


class Transpose(Function):
    name = "transpose"

    def forward(self, x):
        axes = self.options.get("axes")
        if axes is None:
            axes = tuple(reversed(range(x.ndim)))
        if sorted(a % x.ndim for a in axes) != list(range(x.ndim)):
            raise ShapeError("transpose: axes %s invalid for shape %s"
                             % (axes, x.shape))
        self.axes = tuple(a % x.ndim for a in axes)
        return np.transpose(x, self.axes).copy()

    def backward(self, grad):
        return (np.transpose(grad, np.argsort(self.axes)),)


class GetItem(Function):
    """Basic indexing: integers, slices, None and Ellipsis"""
    name = "getitem"

    def forward(self, x):
        index = self.options["index"]
        parts = index if isinstance(index, tuple) else (index,)
        for part in parts:
            if not (part is None or part is Ellipsis
                    or isinstance(part, (int, np.integer, slice))):
                raise ContractError("getitem supports basic indexing only, "
                                    "got %r" % (part,))
        return np.array(x[index])

    def backward(self, grad):
        full = np.zeros_like(self.inputs[0].data)
        full[self.options["index"]] = grad
        return (full,)


class Concat(Function):
    name = "concat"

    def forward(self, *arrays):
        axis = self.options.get("axis", 0)
        try:
            return np.concatenate(arrays, axis=axis)
        except ValueError:
            raise ShapeError("concat: shapes %s do not conform along axis %d"
                             % ([a.shape for a in arrays], axis))

    def backward(self, grad):
        axis = self.options.get("axis", 0)
        sizes = [t.shape[axis] for t in self.inputs]
        return np.split(grad, np.cumsum(sizes)[:-1], axis=axis)


class Norm(Function):
    """Euclidean norm over ``axis``; the gradient at a zero vector is 0"""
    name = "norm"

    def forward(self, x):
        axis = self.options.get("axis")
        self.norm = np.sqrt(np.sum(x * x, axis=axis, keepdims=True))
        if self.options.get("keepdims", True):
            return self.norm.copy()
        return np.squeeze(self.norm, axis=_normalize_axes(axis, x.ndim))

    def backward(self, grad):
        x = self.inputs[0].data
        grad = np.reshape(grad, self.norm.shape)
        direction = np.divide(x, self.norm, out=np.zeros_like(x),
                              where=self.norm > 0)
        return (grad * direction,)


class L2Normalize(Function):
    """``x / max(||x||, eps)`` along ``axis``"""
    name = "l2_normalize"

    def forward(self, x):
        axis = self.options.get("axis", -1)
        eps = self.options.get("eps", 1e-12)
        self.norm = np.sqrt(np.sum(x * x, axis=axis, keepdims=True))
        self.denominator = np.maximum(self.norm, eps)
        return x / self.denominator

    def backward(self, grad):
        axis = self.options.get("axis", -1)
        y = self.output.data
        projected = np.sum(grad * y, axis=axis, keepdims=True)
        full = (grad - y * projected) / self.denominator
        clipped = grad / self.denominator
        eps = self.options.get("eps", 1e-12)
        return (np.where(self.norm > eps, full, clipped),)


def add(a, b):
    return Add.apply(a, b)


def sub(a, b):
    return Sub.apply(a, b)


def neg(a):
    return Neg.apply(a)


def mul(a, b):
    return Mul.apply(a, b)


def div(a, b):
    return Div.apply(a, b)


def matmul(a, b):
    return MatMul.apply(a, b)


def einsum(subscripts, *operands):
    """Batched contraction over named indices (see :class:`Einsum`)"""
    return Einsum.apply(*operands, subscripts=subscripts)


def conv1d(x, w, padding=(0, 0)):
    """Time-axis cross-correlation with zero padding (see :class:`Conv1d`)"""
    return Conv1d.apply(x, w, padding=tuple(padding))


def softmax(x, axis=-1):
    return Softmax.apply(x, axis=axis)


def log_softmax(x, axis=-1):
    return LogSoftmax.apply(x, axis=axis)


def sigmoid(x):
    return Sigmoid.apply(x)


def silu(x):
    """SiLU(x) = x * sigmoid(x)"""
    return SiLU.apply(x)


def softplus(x):
    """Softplus(x) = ln(1 + e^x), evaluated without overflow"""
    return Softplus.apply(x)


def exp(x):
    return Exp.apply(x)


def reduce_sum(x, axis=None, keepdims=False):
    return Sum.apply(x, axis=axis, keepdims=keepdims)


def reduce_mean(x, axis=None, keepdims=False):
    return Mean.apply(x, axis=axis, keepdims=keepdims)


def reshape(x, shape):
    return Reshape.apply(x, shape=tuple(shape))


def transpose(x, axes=None):
    return Transpose.apply(x, axes=None if axes is None else tuple(axes))


def getitem(x, index):
    return GetItem.apply(x, index=index)


def concat(tensors, axis=0):
    return Concat.apply(*tensors, axis=axis)


def norm(x, axis=None, keepdims=True):
    return Norm.apply(x, axis=axis, keepdims=keepdims)


def l2_normalize(x, axis=-1, eps=1e-12):
    """Scale ``x`` to unit length along ``axis``.

    Vectors shorter than ``eps`` are divided by ``eps`` instead, so a zero
    vector maps to zero.
    """
    return L2Normalize.apply(x, axis=axis, eps=eps)


PRIMITIVES = OrderedDict([
    ("add", add),
    ("sub", sub),
    ("neg", neg),
    ("mul", mul),
    ("div", div),
    ("matmul", matmul),
    ("einsum", einsum),
    ("conv1d", conv1d),
    ("softmax", softmax),
    ("log_softmax", log_softmax),
    ("sigmoid", sigmoid),
    ("silu", silu),
    ("softplus", softplus),
    ("exp", exp),
    ("sum", reduce_sum),
    ("mean", reduce_mean),
    ("reshape", reshape),
    ("transpose", transpose),
    ("getitem", getitem),
    ("concat", concat),
    ("norm", norm),
    ("l2_normalize", l2_normalize),
])
"""The closed primitive set. Layers compose only these operations."""


def evaluate(op, *operands, **options):
    """Evaluate the primitive named ``op``.

    Parameters
    ----------
    op : str
        Key of :data:`PRIMITIVES`.
    *operands
        Tensors or array-likes (``einsum`` takes the subscripts first,
        ``concat`` a single list of tensors).
    **options
        Keyword options of the primitive, e.g. ``axis``.

    Returns
    -------
    Tensor
        The result, recorded on the active tape when an operand requires
        gradients.

    Raises
    ------
    ContractError
        If ``op`` is not a primitive.
    """
    try:
        function = PRIMITIVES[op]
    except KeyError:
        raise ContractError("unknown primitive %r" % op)
    return function(*operands, **options)


class ParameterGroup(object):
    """Mixin for dataclasses whose Tensor fields are learnable parameters"""

    def named_parameters(self, prefix=""):
        """Yield ``(dotted_name, tensor)`` in field order; list fields are
        numbered, e.g. ``blocks.0.d_skip``."""
        for field in dataclasses.fields(self):
            value = getattr(self, field.name)
            name = prefix + field.name
            if isinstance(value, Tensor):
                yield name, value
            elif isinstance(value, ParameterGroup):
                for item in value.named_parameters(name + "."):
                    yield item
            elif isinstance(value, (list, tuple)):
                for index, member in enumerate(value):
                    if isinstance(member, ParameterGroup):
                        for item in member.named_parameters(
                                "%s.%d." % (name, index)):
                            yield item

    def parameters(self):
        return [tensor for _, tensor in self.named_parameters()]
