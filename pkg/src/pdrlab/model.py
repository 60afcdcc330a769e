"""Small dense tanh classifier with explicit forward and backward passes.

The network maps an n-vector through tanh hidden layers to softmax class
probabilities. All differentiation is written out by hand: cross-entropy
backward, backward of any scalar of the posterior (seeded at the posterior),
the input Jacobian of the posterior, and the parameter gradient of the
squared Jacobian norm via a forward tangent pass followed by a reverse pass
over the combined graph.

Per-example functions take 1-D inputs; the *_batch variants take one example
per row and are what the trainer and penalty code call.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .tensor import RandomSource, softmax

MODEL_FORMAT_VERSION = 1


@dataclass(frozen=True)
class MlpModel:
    """Immutable parameter container. weights[l] has shape (out, in)."""

    layer_dims: tuple[int, ...]
    weights: tuple[np.ndarray, ...]
    biases: tuple[np.ndarray, ...]

    def __post_init__(self):
        if len(self.layer_dims) < 2:
            raise ValueError("layer_dims needs at least input and output sizes")
        if any(int(d) < 1 for d in self.layer_dims):
            raise ValueError(f"layer_dims must be positive, got {self.layer_dims}")
        dims = self.layer_dims
        if len(self.weights) != len(dims) - 1 or len(self.biases) != len(dims) - 1:
            raise ValueError("parameter count does not match layer_dims")
        for l, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape != (dims[l + 1], dims[l]) or b.shape != (dims[l + 1],):
                raise ValueError(f"layer {l} parameter shapes do not match layer_dims")
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                raise ValueError(f"layer {l} has non-finite parameters")
            w.setflags(write=False)
            b.setflags(write=False)

    @property
    def n_inputs(self) -> int:
        return self.layer_dims[0]

    @property
    def n_classes(self) -> int:
        return self.layer_dims[-1]


@dataclass(frozen=True)
class ForwardTrace:
    """Everything the backward passes need, for one example."""

    x: np.ndarray
    hiddens: tuple[np.ndarray, ...]  # post-tanh activations, one per hidden layer
    logits: np.ndarray
    posterior: np.ndarray


@dataclass(frozen=True)
class BatchTrace:
    inputs: np.ndarray  # (B, n)
    hiddens: tuple[np.ndarray, ...]  # (B, h_l) each
    logits: np.ndarray  # (B, m)
    posteriors: np.ndarray  # (B, m)


@dataclass(frozen=True)
class GradientBundle:
    """Parameter gradients (same shapes as the model) plus d(value)/d(input)."""

    weight_grads: tuple[np.ndarray, ...]
    bias_grads: tuple[np.ndarray, ...]
    input_grad: np.ndarray | None = None


def init_mlp(layer_dims, rng: RandomSource) -> MlpModel:
    """Fresh model: weights ~ N(0, 1/fan_in), biases zero, one stream per layer."""
    dims = tuple(int(d) for d in layer_dims)
    weights, biases = [], []
    for l in range(len(dims) - 1):
        fan_in, fan_out = dims[l], dims[l + 1]
        flat = rng.split(l).generator().standard_normal(fan_out * fan_in)
        weights.append((flat / np.sqrt(fan_in)).reshape(fan_out, fan_in))
        biases.append(np.zeros(fan_out))
    return MlpModel(dims, tuple(weights), tuple(biases))


def _check_batch_inputs(model: MlpModel, X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != model.n_inputs:
        raise ValueError(f"inputs must have shape (B, {model.n_inputs}), got {X.shape}")
    if not np.all(np.isfinite(X)):
        raise ValueError("inputs have non-finite entries")
    return X


def forward_batch(model: MlpModel, X) -> BatchTrace:
    X = _check_batch_inputs(model, X)
    hiddens = []
    a = X
    for w, b in zip(model.weights[:-1], model.biases[:-1]):
        a = np.tanh(a @ w.T + b)
        hiddens.append(a)
    logits = a @ model.weights[-1].T + model.biases[-1]
    return BatchTrace(X, tuple(hiddens), logits, softmax(logits))


def forward(model: MlpModel, x) -> ForwardTrace:
    """Run one example through the network, keeping all intermediates."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError(f"forward expects a 1-D input, got shape {x.shape}")
    tr = forward_batch(model, x[None, :])
    return ForwardTrace(x, tuple(h[0] for h in tr.hiddens), tr.logits[0], tr.posteriors[0])


def posterior(model: MlpModel, x) -> np.ndarray:
    return forward(model, x).posterior


def _batch_trace(model: MlpModel, trace: ForwardTrace) -> BatchTrace:
    return BatchTrace(
        trace.x[None, :],
        tuple(h[None, :] for h in trace.hiddens),
        trace.logits[None, :],
        trace.posterior[None, :],
    )


def _backward_from_logits(model, tr: BatchTrace, g_logits, want_param_grads=True):
    """Backpropagate d(scalar)/d(logits) rows to parameters and inputs.

    Returns (weight_grads, bias_grads, input_grads); parameter grads are
    summed over the batch, input grads stay per row.
    """
    n_layers = len(model.weights)
    wg = [None] * n_layers
    bg = [None] * n_layers
    d = g_logits
    for l in range(n_layers - 1, -1, -1):
        a_prev = tr.hiddens[l - 1] if l > 0 else tr.inputs
        if want_param_grads:
            wg[l] = d.T @ a_prev
            bg[l] = d.sum(axis=0)
        d = d @ model.weights[l]
        if l > 0:
            d = d * (1.0 - a_prev * a_prev)
    return wg, bg, d


def _softmax_vjp(p, g):
    # (diag(p) - p p^T) g, rowwise
    return p * (g - np.sum(p * g, axis=-1, keepdims=True))


def backward_ce_batch(model, tr: BatchTrace, labels, weights=None):
    """Cross-entropy losses and gradients for a batch.

    weights scales each example's contribution to the summed parameter
    gradients (used to zero out unlabeled rows); losses are unweighted.
    """
    labels = np.asarray(labels)
    rows = np.arange(tr.logits.shape[0])
    # loss = lse(logits) - logit[label], stable for saturated posteriors
    m = np.max(tr.logits, axis=1)
    lse = m + np.log(np.sum(np.exp(tr.logits - m[:, None]), axis=1))
    losses = lse - tr.logits[rows, labels]
    g = tr.posteriors.copy()
    g[rows, labels] -= 1.0
    if weights is not None:
        g = g * np.asarray(weights)[:, None]
    wg, bg, xg = _backward_from_logits(model, tr, g)
    return losses, GradientBundle(tuple(wg), tuple(bg)), xg


def backward_ce(model, trace: ForwardTrace, label: int):
    """Loss -log p[label] and its gradients for one example."""
    if not 0 <= int(label) < model.n_classes:
        raise ValueError(f"label {label} out of range for {model.n_classes} classes")
    losses, grads, xg = backward_ce_batch(model, _batch_trace(model, trace), [int(label)])
    return float(losses[0]), GradientBundle(grads.weight_grads, grads.bias_grads, xg[0])


def backward_scalar_of_posterior_batch(model, tr: BatchTrace, seed, weights=None):
    """Gradients of sum_i w_i s_i where d s_i / d posterior_i = seed row i."""
    seed = np.asarray(seed, dtype=np.float64)
    if weights is not None:
        seed = seed * np.asarray(weights)[:, None]
    g = _softmax_vjp(tr.posteriors, seed)
    wg, bg, xg = _backward_from_logits(model, tr, g)
    return GradientBundle(tuple(wg), tuple(bg)), xg


def backward_scalar_of_posterior(model, trace: ForwardTrace, dvalue_dposterior):
    """Gradients of a scalar s given ds/dposterior, for one example."""
    seed = np.asarray(dvalue_dposterior, dtype=np.float64)
    if seed.shape != (model.n_classes,):
        raise ValueError(f"seed must have shape ({model.n_classes},), got {seed.shape}")
    grads, xg = backward_scalar_of_posterior_batch(model, _batch_trace(model, trace), seed[None, :])
    return GradientBundle(grads.weight_grads, grads.bias_grads, xg[0])


def input_jacobian_batch(model, tr: BatchTrace) -> np.ndarray:
    """(B, m, n) Jacobians of the posterior in the input, one VJP per class."""
    b, m = tr.posteriors.shape
    jac = np.empty((b, m, n := model.n_inputs))
    for k in range(m):
        p = tr.posteriors
        g = p * (np.eye(1, m, k) - p[:, k : k + 1])  # row k of the softmax Jacobian
        _, _, xg = _backward_from_logits(model, tr, g, want_param_grads=False)
        jac[:, k, :] = xg
    return jac


def input_jacobian(model, x) -> np.ndarray:
    """(m, n) Jacobian d posterior / d input at one point."""
    tr = forward_batch(model, np.asarray(x, dtype=np.float64)[None, :])
    return input_jacobian_batch(model, tr)[0]


def jacobian_sq_norm_grads_batch(model, tr: BatchTrace, weights=None):
    """Squared Frobenius norms of the posterior Jacobians and their exact
    parameter gradients.

    For each class k the stored Jacobian row c_k is treated as a constant,
    a tangent pass propagates the directional derivative of the posterior
    along c_k, and a reverse pass over the combined graph accumulates
    d <J_k, c_k> / d theta. Doubling the sum over k gives the gradient of
    ||J||_F^2. Returns (values (B,), GradientBundle summed over the batch).
    """
    jac = input_jacobian_batch(model, tr)
    values = np.sum(jac * jac, axis=(1, 2))
    w = None if weights is None else np.asarray(weights)[:, None]
    n_layers = len(model.weights)
    wg = [np.zeros_like(wl) for wl in model.weights]
    bg = [np.zeros_like(bl) for bl in model.biases]
    p = tr.posteriors
    m = model.n_classes

    for k in range(m):
        # tangent pass: directional derivative along c_k = Jacobian row k
        da = jac[:, k, :]
        tangents = []  # per hidden layer: (a, dz, da)
        a_prev, da_prev = tr.inputs, da
        for l in range(n_layers - 1):
            dz = da_prev @ model.weights[l].T
            a = tr.hiddens[l]
            da_prev = (1.0 - a * a) * dz
            tangents.append((a, dz, da_prev))
            a_prev = a
        dz_top = da_prev @ model.weights[-1].T  # tangent of the logits
        u = np.sum(p * dz_top, axis=1, keepdims=True)

        # reverse pass, seeded at component k of the posterior tangent
        ghat = np.zeros_like(p)
        ghat[:, k] = 1.0 if w is None else w[:, 0]
        g_dz = p * ghat - np.sum(ghat * p, axis=1, keepdims=True) * p
        g_p = ghat * dz_top - u * ghat - np.sum(ghat * p, axis=1, keepdims=True) * dz_top
        g_z = _softmax_vjp(p, g_p)

        for l in range(n_layers - 1, -1, -1):
            a_prev = tr.hiddens[l - 1] if l > 0 else tr.inputs
            da_prev = tangents[l - 1][2] if l > 0 else jac[:, k, :]
            wg[l] += g_z.T @ a_prev + g_dz.T @ da_prev
            bg[l] += g_z.sum(axis=0)
            g_a = g_z @ model.weights[l]
            g_da = g_dz @ model.weights[l]
            if l > 0:
                a, dz, _ = tangents[l - 1]
                sech2 = 1.0 - a * a
                g_dz = sech2 * g_da
                g_a = g_a - 2.0 * a * dz * g_da  # dependency of the tangent on a
                g_z = sech2 * g_a

    grads = GradientBundle(tuple(2.0 * g for g in wg), tuple(2.0 * g for g in bg))
    return values, grads


def apply_update(model: MlpModel, grads: GradientBundle, step) -> MlpModel:
    """New model with parameters theta - step * grad, elementwise."""
    weights = tuple(w - step * g for w, g in zip(model.weights, grads.weight_grads))
    biases = tuple(b - step * g for b, g in zip(model.biases, grads.bias_grads))
    return MlpModel(model.layer_dims, weights, biases)


def model_to_dict(model: MlpModel) -> dict:
    return {
        "format_version": MODEL_FORMAT_VERSION,
        "layer_dims": list(model.layer_dims),
        "weights": [w.tolist() for w in model.weights],
        "biases": [b.tolist() for b in model.biases],
    }


def model_from_dict(doc: dict) -> MlpModel:
    if doc.get("format_version") != MODEL_FORMAT_VERSION:
        raise ValueError(f"unsupported model format_version {doc.get('format_version')!r}")
    dims = tuple(int(d) for d in doc["layer_dims"])
    weights = tuple(np.asarray(w, dtype=np.float64) for w in doc["weights"])
    biases = tuple(np.asarray(b, dtype=np.float64) for b in doc["biases"])
    return MlpModel(dims, weights, biases)


def save_model(model: MlpModel, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model_to_dict(model), fh)
        fh.write("\n")


def load_model(path) -> MlpModel:
    with open(path, "r", encoding="utf-8") as fh:
        return model_from_dict(json.load(fh))
