"""
Dense feed-forward networks in plain numpy.

Shared by the GAN generator/discriminator and the localizer. Weights are stored
as (fan_in, fan_out) matrices so a layer computes act(X @ W + b) on a batch X
of shape (batch, fan_in).
"""

import json
import logging
import math
import re
from dataclasses import dataclass, field

import numpy as np

from modules.utilis import DomainError, NumericError, ensure_parent_dir, make_rng

logger = logging.getLogger(__name__)

ACTIVATIONS = ("relu", "leaky_relu", "tanh", "sigmoid", "identity")
DEFAULT_LEAKY_ALPHA = 0.01
PROB_CLAMP = 1e-7

# relative-error floor for parameters whose true gradient is ~0
GRADIENT_CHECK_FLOOR = 1e-4

_TAG = re.compile(r"^([a-z_]+)(?:\(([-+0-9.eE]+)\))?$")


def parse_activation(tag):
    """'leaky_relu(0.2)' -> ('leaky_relu', 0.2); other tags carry no parameter"""
    match = _TAG.match(tag or "")
    if not match or match.group(1) not in ACTIVATIONS:
        raise DomainError(f"unknown activation {tag!r}; expected one of {ACTIVATIONS}")
    name, alpha = match.group(1), match.group(2)
    if name == "leaky_relu":
        return name, float(alpha) if alpha is not None else DEFAULT_LEAKY_ALPHA
    if alpha is not None:
        raise DomainError(f"activation {name} takes no parameter")
    return name, None


def _activate(tag, z):
    name, alpha = parse_activation(tag)
    if name == "relu":
        return np.maximum(z, 0.0)
    if name == "leaky_relu":
        return np.where(z > 0, z, alpha * z)
    if name == "tanh":
        return np.tanh(z)
    if name == "sigmoid":
        # split form avoids overflow in exp for large |z|
        out = np.empty_like(z)
        positive = z >= 0
        out[positive] = 1.0 / (1.0 + np.exp(-z[positive]))
        ez = np.exp(z[~positive])
        out[~positive] = ez / (1.0 + ez)
        return out
    return z


def _activation_slope(tag, z, a):
    name, alpha = parse_activation(tag)
    if name == "relu":
        return (z > 0).astype(float)
    if name == "leaky_relu":
        return np.where(z > 0, 1.0, alpha)
    if name == "tanh":
        return 1.0 - a * a
    if name == "sigmoid":
        return a * (1.0 - a)
    return np.ones_like(z)


@dataclass
class DenseNetwork:
    layer_sizes: list
    weights: list
    biases: list
    activations: list

    def __post_init__(self):
        sizes = [int(s) for s in self.layer_sizes]
        if len(sizes) < 2 or any(s < 1 for s in sizes):
            raise DomainError(f"layer sizes must be >= 2 positive integers, got {self.layer_sizes}")
        n_layers = len(sizes) - 1
        if not (len(self.weights) == len(self.biases) == len(self.activations) == n_layers):
            raise DomainError("one weight matrix, bias vector and activation per layer is required")
        self.layer_sizes = sizes
        self.weights = [np.asarray(w, dtype=float) for w in self.weights]
        self.biases = [np.asarray(b, dtype=float) for b in self.biases]
        for index, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape != (sizes[index], sizes[index + 1]) or b.shape != (sizes[index + 1],):
                raise DomainError(f"layer {index}: weight {w.shape} / bias {b.shape} do not fit sizes {sizes}")
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                raise NumericError(f"layer {index} has non-finite parameters")
        for tag in self.activations:
            parse_activation(tag)

    @property
    def input_dim(self):
        return self.layer_sizes[0]

    @property
    def output_dim(self):
        return self.layer_sizes[-1]

    @property
    def n_params(self):
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    def copy(self):
        return DenseNetwork(
            layer_sizes=list(self.layer_sizes),
            weights=[w.copy() for w in self.weights],
            biases=[b.copy() for b in self.biases],
            activations=list(self.activations),
        )

    def parameters(self):
        """Weights and biases interleaved: [W0, b0, W1, b1, ...]"""
        params = []
        for w, b in zip(self.weights, self.biases):
            params.extend([w, b])
        return params


@dataclass
class Gradients:
    weights: list
    biases: list
    inputs: np.ndarray = None  # d loss / d batch

    def parameters(self):
        grads = []
        for w, b in zip(self.weights, self.biases):
            grads.extend([w, b])
        return grads


def init_network(layer_sizes, activations, seed):
    """Glorot-uniform weights, zero biases"""
    rng = make_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(layer_sizes[:-1], layer_sizes[1:]):
        limit = math.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-limit, limit, (fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return DenseNetwork(layer_sizes=list(layer_sizes), weights=weights, biases=biases, activations=list(activations))


def mlp(input_dim, hidden, output_dim, hidden_activation, output_activation, seed):
    """Convenience constructor for input-hidden...-output stacks"""
    sizes = [int(input_dim)] + [int(h) for h in hidden] + [int(output_dim)]
    activations = [hidden_activation] * len(hidden) + [output_activation]
    return init_network(sizes, activations, seed)


# --- FORWARD / BACKWARD ---

def _check_batch(net, batch):
    batch = np.asarray(batch, dtype=float)
    if batch.ndim != 2 or batch.shape[1] != net.input_dim:
        raise DomainError(f"batch of shape {batch.shape} does not fit input size {net.input_dim}")
    return batch


def _forward_cache(net, batch):
    cache = []
    a = batch
    for w, b, tag in zip(net.weights, net.biases, net.activations):
        z = a @ w + b
        out = _activate(tag, z)
        cache.append((a, z, out))
        a = out
    return a, cache


def forward(net, batch):
    """Network outputs for a (batch, input_dim) matrix; parameters are not touched"""
    batch = _check_batch(net, batch)
    outputs, _ = _forward_cache(net, batch)
    return outputs


def backward(net, batch, loss_grad):
    """Reverse-mode gradients of a loss whose gradient w.r.t. the outputs is loss_grad"""
    batch = _check_batch(net, batch)
    outputs, cache = _forward_cache(net, batch)
    delta = np.asarray(loss_grad, dtype=float)
    if delta.shape != outputs.shape:
        raise DomainError(f"loss gradient shape {delta.shape} differs from output shape {outputs.shape}")

    grad_w = [None] * len(net.weights)
    grad_b = [None] * len(net.biases)
    for index in reversed(range(len(net.weights))):
        a_in, z, out = cache[index]
        delta = delta * _activation_slope(net.activations[index], z, out)
        grad_w[index] = a_in.T @ delta
        grad_b[index] = delta.sum(axis=0)
        delta = delta @ net.weights[index].T
    return Gradients(weights=grad_w, biases=grad_b, inputs=delta)


# --- LOSSES ---

def squared_error(predictions, targets):
    """Sum of squared errors per row, averaged over the batch; returns (loss, d loss / d predictions)"""
    diff = np.asarray(predictions, dtype=float) - np.asarray(targets, dtype=float)
    n = diff.shape[0]
    return float(np.sum(diff * diff) / n), 2.0 * diff / n


def binary_log_loss(probabilities, targets):
    """Mean binary cross-entropy with probabilities clamped to [1e-7, 1 - 1e-7]"""
    p = np.clip(np.asarray(probabilities, dtype=float), PROB_CLAMP, 1.0 - PROB_CLAMP)
    t = np.asarray(targets, dtype=float)
    loss = -np.mean(t * np.log(p) + (1.0 - t) * np.log(1.0 - p))
    grad = (p - t) / (p * (1.0 - p)) / p.size
    return float(loss), grad


LOSSES = {"squared_error": squared_error, "log_loss": binary_log_loss}


def _loss_fn(loss):
    if loss not in LOSSES:
        raise DomainError(f"unknown loss {loss!r}; expected one of {tuple(LOSSES)}")
    return LOSSES[loss]


def loss_and_gradients(net, batch, targets, loss="squared_error"):
    value, grad = _loss_fn(loss)(forward(net, batch), targets)
    return value, backward(net, batch, grad)


# --- OPTIMIZER ---

@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    batch_size: int = 32
    epochs: int = 100
    optimizer: str = "adam"
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    seed: int = 0
    weight_decay: float = 0.0  # L2 on weight matrices, biases exempt
    input_noise: float = 0.0  # std of Gaussian jitter added to every training batch

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise DomainError(f"learning_rate must be positive, got {self.learning_rate!r}")
        if self.batch_size < 1:
            raise DomainError(f"batch_size must be >= 1, got {self.batch_size!r}")
        if self.epochs < 0:
            raise DomainError(f"epochs must be >= 0, got {self.epochs!r}")
        if self.optimizer not in ("sgd", "adam"):
            raise DomainError(f"optimizer must be 'sgd' or 'adam', got {self.optimizer!r}")
        if not self.weight_decay >= 0:
            raise DomainError(f"weight_decay must be >= 0, got {self.weight_decay!r}")
        if not self.input_noise >= 0:
            raise DomainError(f"input_noise must be >= 0, got {self.input_noise!r}")


@dataclass
class OptimizerState:
    t: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)


def init_optimizer_state(net):
    zeros = [np.zeros_like(p) for p in net.parameters()]
    return OptimizerState(t=0, m=zeros, v=[z.copy() for z in zeros])


def step(net, gradients, config, state=None):
    """One optimizer update; returns (updated copy of net, updated copy of state)"""
    grads = gradients.parameters()
    params = net.parameters()
    if len(grads) != len(params) or any(g.shape != p.shape for g, p in zip(grads, params)):
        raise DomainError("gradient shapes do not match network parameters")
    if state is None:
        state = init_optimizer_state(net)
    if config.weight_decay:
        # parameters() interleaves W0, b0, W1, b1, ...
        grads = [g + config.weight_decay * p if i % 2 == 0 else g for i, (g, p) in enumerate(zip(grads, params))]

    lr = config.learning_rate
    if config.optimizer == "sgd":
        updated = [p - lr * g for p, g in zip(params, grads)]
        new_state = OptimizerState(t=state.t + 1, m=list(state.m), v=list(state.v))
    else:
        t = state.t + 1
        m = [config.beta1 * m_i + (1.0 - config.beta1) * g for m_i, g in zip(state.m, grads)]
        v = [config.beta2 * v_i + (1.0 - config.beta2) * g * g for v_i, g in zip(state.v, grads)]
        bias1 = 1.0 - config.beta1 ** t
        bias2 = 1.0 - config.beta2 ** t
        updated = [
            p - lr * (m_i / bias1) / (np.sqrt(v_i / bias2) + config.epsilon)
            for p, m_i, v_i in zip(params, m, v)
        ]
        new_state = OptimizerState(t=t, m=m, v=v)

    new_net = DenseNetwork(
        layer_sizes=list(net.layer_sizes),
        weights=updated[0::2],
        biases=updated[1::2],
        activations=list(net.activations),
    )
    return new_net, new_state


# --- GRADIENT CHECK ---

def gradient_check(net, batch, targets, loss="squared_error", step_h=1e-5):
    """Largest relative disagreement between backward() and central differences"""
    if not (0 < step_h <= 1e-2):
        raise DomainError(f"step_h must be in (0, 1e-2], got {step_h!r}")
    loss_fn = _loss_fn(loss)
    batch = _check_batch(net, batch)
    _, analytic = loss_and_gradients(net, batch, targets, loss)

    probe = net.copy()
    worst = 0.0
    for param, grad in zip(probe.parameters(), analytic.parameters()):
        flat = param.reshape(-1)  # view into probe's parameters
        flat_grad = grad.reshape(-1)
        for index in range(flat.size):
            original = flat[index]
            flat[index] = original + step_h
            loss_plus, _ = loss_fn(forward(probe, batch), targets)
            flat[index] = original - step_h
            loss_minus, _ = loss_fn(forward(probe, batch), targets)
            flat[index] = original
            numeric = (loss_plus - loss_minus) / (2.0 * step_h)
            scale = max(abs(numeric), abs(flat_grad[index]), GRADIENT_CHECK_FLOOR)
            worst = max(worst, abs(numeric - flat_grad[index]) / scale)
    return worst


# --- TRAINING LOOP ---

def fit(net, inputs, targets, config, loss="squared_error"):
    """Minibatch training; returns (trained copy, per-epoch mean loss list)"""
    inputs = _check_batch(net, inputs)
    targets = np.asarray(targets, dtype=float)
    if len(inputs) == 0 or len(inputs) != len(targets):
        raise DomainError("training needs a nonempty set with one target row per input row")
    loss_fn = _loss_fn(loss)

    rng = make_rng(config.seed)
    state = init_optimizer_state(net)
    history = []
    n = len(inputs)
    for epoch in range(config.epochs):
        order = rng.permutation(n)
        epoch_loss = 0.0
        for start in range(0, n, config.batch_size):
            index = order[start:start + config.batch_size]
            batch = inputs[index]
            if config.input_noise:
                batch = batch + rng.normal(0.0, config.input_noise, batch.shape)
            value, grad = loss_fn(forward(net, batch), targets[index])
            if not math.isfinite(value):
                raise NumericError(f"non-finite {loss} at epoch {epoch}")
            net, state = step(net, backward(net, batch, grad), config, state)
            epoch_loss += value * len(index)
        history.append(epoch_loss / n)
        if epoch % 500 == 0:
            logger.debug("epoch %d: %s %.6g", epoch, loss, history[-1])
    return net, history


# --- PERSISTENCE ---

def network_to_dict(net):
    return {
        "layer_sizes": list(net.layer_sizes),
        "activations": list(net.activations),
        "weights": [w.ravel().tolist() for w in net.weights],  # row-major
        "biases": [b.tolist() for b in net.biases],
    }


def network_from_dict(data):
    try:
        sizes = [int(s) for s in data["layer_sizes"]]
        weights = [
            np.asarray(w, dtype=float).reshape(fan_in, fan_out)
            for w, fan_in, fan_out in zip(data["weights"], sizes[:-1], sizes[1:])
        ]
        biases = [np.asarray(b, dtype=float) for b in data["biases"]]
        return DenseNetwork(layer_sizes=sizes, weights=weights, biases=biases, activations=list(data["activations"]))
    except (KeyError, TypeError, ValueError) as e:
        raise DomainError(f"malformed network document: {e}")


def save_network(net, path):
    ensure_parent_dir(path)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(network_to_dict(net), f, indent=1)
    logger.info("Saved network %s to %s", net.layer_sizes, path)


def load_network(path):
    with open(path, "r", encoding="utf-8") as f:
        return network_from_dict(json.load(f))
