"""Dense reverse-mode differentiation on numpy arrays.

A `Tape` records every operation of one forward pass in creation order, so
the node list is already topologically sorted and `backward` walks it once in
reverse. Network parameters enter a tape as named leaves; anything entered as
a constant (target networks, snapshots, detached targets) never receives a
gradient.
"""
import copy
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.special import expit

from .non_finite_error import NonFiniteError
from .shape_mismatch_error import ShapeMismatchError

__all__ = [
    'Tensor', 'tensor', 'Tape', 'Var', 'Head', 'Mlp', 'AdamState',
    'forward', 'forward_heads', 'backward', 'adam_step', 'soft_update',
    'check_gradients', 'inverse_softplus',
]

# Tensors are row-major float64 numpy arrays.
Tensor = np.ndarray

ACTIVATIONS = ('identity', 'relu', 'softplus', 'tanh')


def tensor(data) -> Tensor:
    array = np.array(data, dtype=np.float64)
    _check_finite(array, 'tensor')
    return array


def inverse_softplus(value: float) -> float:
    """Return x with softplus(x) == value, for value > 0."""
    if value <= 0:
        raise ValueError(f'Softplus can only reach positive values, got {value}')
    # log(expm1(v)) overflows for large v; there softplus is the identity.
    if value > 30.0:
        return value + float(np.log1p(-np.exp(-value)))
    return float(np.log(np.expm1(value)))


def _check_finite(value: Tensor, what: str) -> None:
    if not np.all(np.isfinite(value)):
        raise NonFiniteError(f'{what} produced non-finite values')


def _unbroadcast(grad: Tensor, shape: Tuple[int, ...]) -> Tensor:
    """Sum a broadcast gradient back down to `shape`."""
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


@dataclass
class Node:
    kind: str
    inputs: Tuple[int, ...]
    value: Tensor
    backward: Optional[Callable[[Tensor], Tuple[Optional[Tensor], ...]]] = None
    param_id: Optional[str] = None
    # True when some trainable leaf lies upstream of this node.
    requires_grad: bool = False


class Var:
    """Handle on one tape node, with arithmetic operators recorded on the tape."""
    __slots__ = ('tape', 'id')
    # Make numpy arrays defer to the reflected operators below.
    __array_ufunc__ = None

    def __init__(self, tape: 'Tape', node_id: int) -> None:
        self.tape = tape
        self.id = node_id

    @property
    def value(self) -> Tensor:
        return self.tape.nodes[self.id].value

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.value.shape

    def __add__(self, other):
        return self.tape.add(self, other)

    def __radd__(self, other):
        return self.tape.add(other, self)

    def __sub__(self, other):
        return self.tape.sub(self, other)

    def __rsub__(self, other):
        return self.tape.sub(other, self)

    def __mul__(self, other):
        return self.tape.mul(self, other)

    def __rmul__(self, other):
        return self.tape.mul(other, self)

    def __truediv__(self, other: float):
        return self.tape.mul(self, 1.0 / other)

    def __neg__(self):
        return self.tape.neg(self)

    def __matmul__(self, other):
        return self.tape.matmul(self, other)

    def __repr__(self) -> str:
        node = self.tape.nodes[self.id]
        return f'<Var #{self.id} {node.kind} shape={node.value.shape}>'


Operand = Union[Var, Tensor, float]


class Tape:
    """Ordered record of one forward pass."""

    def __init__(self) -> None:
        self.nodes: List[Node] = []
        self._leaves: Dict[str, int] = {}

    def _record(self, kind: str, inputs: Sequence[Var], value: Tensor,
                backward=None, param_id: Optional[str] = None,
                check: bool = False) -> Var:
        # Only log, exp and reductions scan for non-finite values; every loss
        # ends in a reduction.
        if check:
            _check_finite(value, kind)
        requires_grad = param_id is not None or any(
            self.nodes[v.id].requires_grad for v in inputs)
        self.nodes.append(Node(
            kind, tuple(v.id for v in inputs), value,
            backward if requires_grad else None, param_id, requires_grad))
        return Var(self, len(self.nodes) - 1)

    def requires_grad(self, x: Var) -> bool:
        return self.nodes[x.id].requires_grad

    def lift(self, x: Operand) -> Var:
        if isinstance(x, Var):
            if x.tape is not self:
                raise ValueError('Var belongs to a different tape')
            return x
        return self.constant(x)

    def constant(self, value) -> Var:
        return self._record('constant', (), np.asarray(value, dtype=np.float64))

    def variable(self, param_id: str, value: Tensor) -> Var:
        """Trainable leaf; the same id always maps to the same node."""
        if param_id in self._leaves:
            return Var(self, self._leaves[param_id])
        var = self._record('param', (), value, param_id=param_id)
        self._leaves[param_id] = var.id
        return var

    def param_ids(self) -> List[str]:
        return list(self._leaves)

    def detach(self, x: Var) -> Var:
        return self.constant(np.array(self.lift(x).value))

    def add(self, a: Operand, b: Operand) -> Var:
        a, b = self.lift(a), self.lift(b)
        av, bv = a.value, b.value
        return self._record('add', (a, b), av + bv, lambda g: (
            _unbroadcast(g, av.shape), _unbroadcast(g, bv.shape)))

    def sub(self, a: Operand, b: Operand) -> Var:
        a, b = self.lift(a), self.lift(b)
        av, bv = a.value, b.value
        return self._record('sub', (a, b), av - bv, lambda g: (
            _unbroadcast(g, av.shape), _unbroadcast(-g, bv.shape)))

    def mul(self, a: Operand, b: Operand) -> Var:
        a, b = self.lift(a), self.lift(b)
        av, bv = a.value, b.value
        return self._record('mul', (a, b), av * bv, lambda g: (
            _unbroadcast(g * bv, av.shape), _unbroadcast(g * av, bv.shape)))

    def neg(self, a: Operand) -> Var:
        a = self.lift(a)
        return self._record('neg', (a,), -a.value, lambda g: (-g,))

    def matmul(self, a: Operand, b: Operand) -> Var:
        a, b = self.lift(a), self.lift(b)
        av, bv = a.value, b.value
        if av.ndim != 2 or bv.ndim != 2 or av.shape[1] != bv.shape[0]:
            raise ShapeMismatchError(
                f'Cannot multiply shapes {av.shape} and {bv.shape}')
        # Constant operands (target networks, batches) get no gradient.
        a_grad, b_grad = self.requires_grad(a), self.requires_grad(b)
        return self._record('matmul', (a, b), av @ bv, lambda g: (
            g @ bv.T if a_grad else None, av.T @ g if b_grad else None))

    def relu(self, a: Operand) -> Var:
        a = self.lift(a)
        mask = a.value > 0
        return self._record('relu', (a,), np.maximum(a.value, 0.0),
                            lambda g: (g * mask,))

    def tanh(self, a: Operand) -> Var:
        a = self.lift(a)
        t = np.tanh(a.value)
        return self._record('tanh', (a,), t, lambda g: (g * (1.0 - t * t),))

    def softplus(self, a: Operand) -> Var:
        a = self.lift(a)
        av = a.value
        return self._record('softplus', (a,), np.logaddexp(0.0, av),
                            lambda g: (g * expit(av),))

    def exp(self, a: Operand) -> Var:
        a = self.lift(a)
        e = np.exp(a.value)
        return self._record('exp', (a,), e, lambda g: (g * e,), check=True)

    def log(self, a: Operand) -> Var:
        a = self.lift(a)
        av = a.value
        return self._record('log', (a,), np.log(av), lambda g: (g / av,),
                            check=True)

    def abs(self, a: Operand) -> Var:
        a = self.lift(a)
        sign = np.sign(a.value)
        return self._record('abs', (a,), np.abs(a.value), lambda g: (g * sign,))

    def square(self, a: Operand) -> Var:
        a = self.lift(a)
        av = a.value
        return self._record('square', (a,), av * av, lambda g: (2.0 * av * g,))

    def sum(self, a: Operand) -> Var:
        a = self.lift(a)
        av = a.value
        return self._record('sum', (a,), np.asarray(av.sum()),
                            lambda g: (np.full_like(av, g),), check=True)

    def mean(self, a: Operand) -> Var:
        a = self.lift(a)
        av = a.value
        return self._record('mean', (a,), np.asarray(av.mean()),
                            lambda g: (np.full_like(av, g / av.size),),
                            check=True)

    def sum_cols(self, a: Operand) -> Var:
        """Row sums, keeping a trailing axis of size one."""
        a = self.lift(a)
        av = a.value
        return self._record('sum_cols', (a,), av.sum(axis=1, keepdims=True),
                            lambda g: (np.broadcast_to(g, av.shape),),
                            check=True)

    def minimum(self, a: Operand, b: Operand) -> Var:
        a, b = self.lift(a), self.lift(b)
        av, bv = a.value, b.value
        # Ties route the gradient to the first operand.
        take_a = av <= bv
        return self._record('minimum', (a, b), np.minimum(av, bv), lambda g: (
            _unbroadcast(g * take_a, av.shape),
            _unbroadcast(g * ~take_a, bv.shape)))

    def clip(self, a: Operand, low: float, high: float) -> Var:
        a = self.lift(a)
        av = a.value
        inside = (av >= low) & (av <= high)
        return self._record('clip', (a,), np.clip(av, low, high),
                            lambda g: (g * inside,))

    def concat(self, parts: Sequence[Operand]) -> Var:
        """Concatenate along the last axis."""
        parts = [self.lift(p) for p in parts]
        widths = [p.value.shape[-1] for p in parts]
        bounds = np.cumsum(widths)[:-1]
        value = np.concatenate([p.value for p in parts], axis=-1)
        return self._record('concat', parts, value, lambda g: tuple(
            np.split(g, bounds, axis=-1)))

    def activation(self, a: Operand, kind: str) -> Var:
        if kind == 'identity':
            return self.lift(a)
        if kind == 'relu':
            return self.relu(a)
        if kind == 'softplus':
            return self.softplus(a)
        if kind == 'tanh':
            return self.tanh(a)
        raise ValueError(f'Unknown activation {kind}')


def backward(tape: Tape, loss_node: Union[Var, int]) -> Dict[str, Tensor]:
    """Gradients of a scalar node w.r.t. every trainable leaf on the tape.

    Leaves the loss does not reach get zero gradients.
    """
    node_id = loss_node.id if isinstance(loss_node, Var) else loss_node
    loss = tape.nodes[node_id]
    if loss.value.size != 1:
        raise ShapeMismatchError(
            f'Loss must be scalar, got shape {loss.value.shape}')

    grads: List[Optional[Tensor]] = [None] * (node_id + 1)
    grads[node_id] = np.ones_like(loss.value)
    for index in range(node_id, -1, -1):
        grad = grads[index]
        node = tape.nodes[index]
        if grad is None or node.backward is None:
            continue
        for input_id, input_grad in zip(node.inputs, node.backward(grad)):
            if input_grad is None:
                continue
            if grads[input_id] is None:
                grads[input_id] = input_grad
            else:
                grads[input_id] = grads[input_id] + input_grad

    result = {}
    for param_id, index in tape._leaves.items():
        grad = grads[index] if index <= node_id else None
        value = tape.nodes[index].value
        result[param_id] = np.zeros_like(value) if grad is None else grad
    return result


@dataclass(frozen=True)
class Head:
    name: str
    size: int
    activation: str = 'identity'
    bias: bool = True
    bias_init: float = 0.0
    # Final layers start from U(-init_scale, init_scale).
    init_scale: float = 3e-3


class Mlp:
    """ReLU trunk followed by one linear layer per output head.

    `layer_sizes` lists the input width then each hidden width; an empty
    trunk (`[input_width]`) gives a plain linear model per head.
    """

    def __init__(self, name: str, layer_sizes: Sequence[int],
                 heads: Sequence[Head], rng: np.random.Generator,
                 hidden_activation: str = 'relu') -> None:
        if len(layer_sizes) < 1 or any(w < 1 for w in layer_sizes):
            raise ValueError(f'Invalid layer sizes {list(layer_sizes)}')
        if not heads:
            raise ValueError(f'Network {name} needs at least one head')
        for head in heads:
            if head.activation not in ACTIVATIONS:
                raise ValueError(
                    f'Head {head.name} has unknown activation {head.activation}')
        self.name = name
        self.layer_sizes = tuple(int(w) for w in layer_sizes)
        self.heads = tuple(heads)
        self.hidden_activation = hidden_activation
        self.params: Dict[str, Tensor] = {}

        for i, (fan_in, fan_out) in enumerate(
                zip(self.layer_sizes[:-1], self.layer_sizes[1:])):
            bound = 1.0 / np.sqrt(fan_in)
            self.params[f'w{i}'] = rng.uniform(-bound, bound, (fan_in, fan_out))
            self.params[f'b{i}'] = np.full((fan_out,), 0.1)
        width = self.layer_sizes[-1]
        for head in self.heads:
            self.params[f'{head.name}.w'] = rng.uniform(
                -head.init_scale, head.init_scale, (width, head.size))
            if head.bias:
                self.params[f'{head.name}.b'] = np.full(
                    (head.size,), float(head.bias_init))

    @property
    def n_hidden(self) -> int:
        return len(self.layer_sizes) - 1

    def architecture(self) -> Tuple:
        return (self.layer_sizes, self.heads, self.hidden_activation)

    def named_parameters(self) -> Dict[str, Tensor]:
        """Parameter arrays keyed by their tape id; arrays are shared, not copied."""
        return {f'{self.name}/{key}': value for key, value in self.params.items()}

    def copy(self, name: str) -> 'Mlp':
        clone = copy.deepcopy(self)
        clone.name = name
        return clone

    def load_parameters(self, values: Dict[str, Tensor]) -> None:
        for key, value in values.items():
            local = key.split('/', 1)[1] if '/' in key else key
            if self.params[local].shape != value.shape:
                raise ShapeMismatchError(
                    f'{self.name}/{local}: expected {self.params[local].shape}, '
                    f'got {value.shape}')
            self.params[local][...] = value


def forward_heads(net: Mlp, input: Operand, tape: Tape,
                  trainable: bool = True) -> Dict[str, Var]:
    """Run `net` on `input`, recording every step on `tape`."""
    if not isinstance(input, Var):
        input = np.atleast_2d(np.asarray(input, dtype=np.float64))
    x = tape.lift(input)
    if x.value.ndim != 2 or x.value.shape[-1] != net.layer_sizes[0]:
        raise ShapeMismatchError(
            f'{net.name} layer 0 expects {net.layer_sizes[0]} inputs, '
            f'got shape {x.value.shape}')

    def param(key: str) -> Var:
        if trainable:
            return tape.variable(f'{net.name}/{key}', net.params[key])
        return tape.constant(net.params[key])

    h = x
    for i in range(net.n_hidden):
        h = tape.activation(h @ param(f'w{i}') + param(f'b{i}'),
                            net.hidden_activation)
    outputs = {}
    for head in net.heads:
        y = h @ param(f'{head.name}.w')
        if head.bias:
            y = y + param(f'{head.name}.b')
        outputs[head.name] = tape.activation(y, head.activation)
    return outputs


def forward(net: Mlp, input: Operand, tape: Tape, trainable: bool = True) -> Var:
    """Single-head forward pass."""
    if len(net.heads) != 1:
        raise ValueError(
            f'{net.name} has {len(net.heads)} heads, use forward_heads')
    return forward_heads(net, input, tape, trainable)[net.heads[0].name]


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step_count: int = 0
    first_moment: Dict[str, Tensor] = field(default_factory=dict)
    second_moment: Dict[str, Tensor] = field(default_factory=dict)


def adam_step(params: Dict[str, Tensor], grads: Dict[str, Tensor],
              state: AdamState) -> Dict[str, Tensor]:
    """Bias-corrected Adam update, in place on the arrays in `params`."""
    for name in params:
        grad = grads.get(name)
        if grad is not None and not np.all(np.isfinite(grad)):
            raise NonFiniteError(f'Non-finite gradient for parameter {name}')

    state.step_count += 1
    bc1 = 1.0 - state.beta1 ** state.step_count
    bc2 = 1.0 - state.beta2 ** state.step_count
    for name, param in params.items():
        grad = grads.get(name)
        if grad is None:
            continue
        m = state.first_moment.setdefault(name, np.zeros_like(param))
        v = state.second_moment.setdefault(name, np.zeros_like(param))
        m *= state.beta1
        m += (1.0 - state.beta1) * grad
        v *= state.beta2
        v += (1.0 - state.beta2) * (grad * grad)
        param -= (state.lr / bc1) * m / (np.sqrt(v / bc2) + state.eps)
    return params


def soft_update(target: Mlp, online: Mlp, tau: float) -> Mlp:
    """target <- (1 - tau) * target + tau * online, elementwise."""
    if not 0.0 <= tau <= 1.0:
        raise ValueError(f'tau must lie in [0, 1], got {tau}')
    if target.architecture() != online.architecture():
        raise ShapeMismatchError(
            f'Cannot soft-update {target.name} from {online.name}: '
            'architectures differ')
    for key, value in target.params.items():
        value *= 1.0 - tau
        value += tau * online.params[key]
    return target


def check_gradients(loss_fn: Callable[[Tape], Var], params: Dict[str, Tensor],
                    h: float = 1e-5) -> float:
    """Largest relative gap between tape gradients and central differences.

    `loss_fn` must rebuild the loss on the tape it is given, reading the
    arrays in `params`, and be deterministic.
    """
    tape = Tape()
    analytic = backward(tape, loss_fn(tape))
    worst = 0.0
    for name, param in params.items():
        flat = param.reshape(-1)
        grad = analytic.get(name, np.zeros_like(param)).reshape(-1)
        for i in range(flat.size):
            original = flat[i]
            flat[i] = original + h
            upper = float(loss_fn(Tape()).value)
            flat[i] = original - h
            lower = float(loss_fn(Tape()).value)
            flat[i] = original
            numeric = (upper - lower) / (2.0 * h)
            scale = max(abs(grad[i]) + abs(numeric), 1e-6)
            worst = max(worst, abs(grad[i] - numeric) / scale)
    return worst
