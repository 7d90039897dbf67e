"""Minimal fully connected feedforward network trained by plain SGD.

Hidden layers use the logistic sigmoid, the output layer is identity.
Gradients come from analytic reverse accumulation of the squared-error
loss 0.5 |output - target|^2; everything is float64.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path as FsPath

import numpy as np
from scipy.special import expit

from .errors import ValidationError


@dataclass(frozen=True)
class MlpArch:
    """Network shape: input_dim -> hidden_units x hidden_layers -> output_dim.

    hidden_layers may be 0, giving a purely linear (affine) map.
    """

    input_dim: int
    hidden_layers: int = 5
    hidden_units: int = 5
    output_dim: int = 1

    def __post_init__(self):
        if self.input_dim < 1 or self.hidden_units < 1 or self.output_dim < 1:
            raise ValidationError("all layer dimensions must be >= 1")
        if self.hidden_layers < 0:
            raise ValidationError("hidden_layers must be >= 0")

    @property
    def layer_dims(self) -> tuple[int, ...]:
        return (self.input_dim,
                *([self.hidden_units] * self.hidden_layers),
                self.output_dim)

    @property
    def parameter_count(self) -> int:
        dims = self.layer_dims
        return sum(fo * fi + fo for fi, fo in zip(dims[:-1], dims[1:]))


@dataclass
class Mlp:
    """Per-layer weight matrices (units_out x units_in) and bias vectors.

    Treat instances as immutable once built; training code works on its
    own copy (see ``copy``).
    """

    arch: MlpArch
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def __post_init__(self):
        dims = self.arch.layer_dims
        n_layers = len(dims) - 1
        if len(self.weights) != n_layers or len(self.biases) != n_layers:
            raise ValidationError(
                f"expected {n_layers} weight/bias layers, got "
                f"{len(self.weights)}/{len(self.biases)}"
            )
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape != (dims[i + 1], dims[i]):
                raise ValidationError(
                    f"layer {i} weight shape {w.shape} != {(dims[i + 1], dims[i])}"
                )
            if b.shape != (dims[i + 1],):
                raise ValidationError(
                    f"layer {i} bias shape {b.shape} != {(dims[i + 1],)}"
                )

    def copy(self) -> "Mlp":
        return Mlp(self.arch,
                   [w.copy() for w in self.weights],
                   [b.copy() for b in self.biases])

    def all_finite(self) -> bool:
        return all(np.isfinite(w).all() for w in self.weights) and \
            all(np.isfinite(b).all() for b in self.biases)


@dataclass
class Gradient:
    """Loss gradient, shape-congruent with an Mlp's parameters."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]


def mlp_init(arch: MlpArch, seed: int) -> Mlp:
    """Glorot-uniform weights on [-sqrt(6/(fan_in+fan_out)), +...], zero
    biases; deterministic in seed."""
    rng = np.random.default_rng(np.random.SeedSequence((seed,)))
    dims = arch.layer_dims
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        limit = math.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-limit, limit, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return Mlp(arch=arch, weights=weights, biases=biases)


def forward(net: Mlp, x) -> tuple[np.ndarray, list[np.ndarray]]:
    """Evaluate the network on one input vector.

    Returns (output, activations) where activations[l] is the input seen
    by layer l (activations[0] is x itself), as needed by ``backward``.
    """
    a = np.asarray(x, dtype=float)
    if a.shape != (net.arch.input_dim,):
        raise ValidationError(
            f"input shape {a.shape} != ({net.arch.input_dim},)"
        )
    activations = [a]
    last = len(net.weights) - 1
    for l, (w, b) in enumerate(zip(net.weights, net.biases)):
        z = w @ a + b
        a = z if l == last else expit(z)
        if l != last:
            activations.append(a)
    return a, activations


def forward_batch(net: Mlp, X: np.ndarray) -> np.ndarray:
    """Evaluate the network on a (batch, input_dim) matrix of inputs."""
    A = np.asarray(X, dtype=float)
    if A.ndim != 2 or A.shape[1] != net.arch.input_dim:
        raise ValidationError(
            f"batch input shape {A.shape} != (batch, {net.arch.input_dim})"
        )
    last = len(net.weights) - 1
    for l, (w, b) in enumerate(zip(net.weights, net.biases)):
        Z = A @ w.T + b
        A = Z if l == last else expit(Z)
    return A


def backward(net: Mlp, activations: list[np.ndarray], output_error) -> Gradient:
    """Gradient of 0.5 |output - target|^2 given output_error = output - target."""
    delta = np.asarray(output_error, dtype=float)
    if delta.shape != (net.arch.output_dim,):
        raise ValidationError(
            f"output_error shape {delta.shape} != ({net.arch.output_dim},)"
        )
    n_layers = len(net.weights)
    if len(activations) != n_layers:
        raise ValidationError(
            f"expected {n_layers} cached activations, got {len(activations)}"
        )
    g_weights = [None] * n_layers
    g_biases = [None] * n_layers
    for l in range(n_layers - 1, -1, -1):
        a_in = activations[l]
        g_weights[l] = np.outer(delta, a_in)
        g_biases[l] = delta
        if l > 0:
            # a_in is a sigmoid output here, so phi' = a (1 - a).
            delta = (net.weights[l].T @ delta) * a_in * (1.0 - a_in)
    return Gradient(weights=g_weights, biases=g_biases)


def sgd_step(net: Mlp, grad: Gradient, gamma: float) -> Mlp:
    """Plain SGD update theta <- theta - gamma * grad; returns a new Mlp."""
    if not 0.0 < gamma < 1.0:
        raise ValidationError(f"learning rate must satisfy 0 < gamma < 1, got {gamma}")
    weights = [w - gamma * gw for w, gw in zip(net.weights, grad.weights)]
    biases = [b - gamma * gb for b, gb in zip(net.biases, grad.biases)]
    return Mlp(arch=net.arch, weights=weights, biases=biases)


def loss(output, target) -> float:
    """0.5 squared Euclidean distance between output and target."""
    output = np.asarray(output, dtype=float)
    target = np.asarray(target, dtype=float)
    if output.shape != target.shape:
        raise ValidationError(
            f"output shape {output.shape} != target shape {target.shape}"
        )
    diff = output - target
    return 0.5 * float(diff @ diff)


# ---------------------------------------------------------------------------
# Flat text serialization: a header of layer widths, then one parameter per
# line in layer order (weights row-major, then biases). %.17g round-trips
# float64 exactly.


def save_mlp(net: Mlp, file) -> None:
    FsPath(file).write_text(dump_mlp(net))


def dump_mlp(net: Mlp) -> str:
    lines = ["mlp " + " ".join(str(d) for d in net.arch.layer_dims)]
    for w, b in zip(net.weights, net.biases):
        lines.extend("%.17g" % v for v in w.ravel())
        lines.extend("%.17g" % v for v in b)
    return "\n".join(lines) + "\n"


def load_mlp(file) -> Mlp:
    return parse_mlp(FsPath(file).read_text())


def parse_mlp(text: str) -> Mlp:
    lines = text.splitlines()
    if not lines or not lines[0].startswith("mlp "):
        raise ValidationError("not a serialized mlp: missing 'mlp' header")
    dims = [int(tok) for tok in lines[0].split()[1:]]
    if len(dims) < 2:
        raise ValidationError("mlp header must list at least input and output dims")
    arch = MlpArch(
        input_dim=dims[0],
        hidden_layers=len(dims) - 2,
        hidden_units=dims[1] if len(dims) > 2 else 1,
        output_dim=dims[-1],
    )
    if list(arch.layer_dims) != dims:
        raise ValidationError(f"unsupported layer widths {dims}: hidden layers must share one width")
    values = iter(lines[1:])
    weights, biases = [], []
    try:
        for fan_in, fan_out in zip(dims[:-1], dims[1:]):
            w = np.array([float(next(values)) for _ in range(fan_out * fan_in)])
            weights.append(w.reshape(fan_out, fan_in))
            biases.append(np.array([float(next(values)) for _ in range(fan_out)]))
    except StopIteration:
        raise ValidationError("truncated mlp parameter list") from None
    return Mlp(arch=arch, weights=weights, biases=biases)
