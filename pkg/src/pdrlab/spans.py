"""Span scorer: per-position encoder plus begin/end softmaxes over positions.

Each row of a (T, n_feat) feature matrix is encoded independently by a shared
tanh network with a linear last layer. Two score vectors w_begin, w_end turn
the T encodings into begin and end distributions over positions; a span (i, j)
has probability P_begin(i) * P_end(j), so the joint table normalizes to 1 by
construction.

Smoothness penalties perturb the whole feature matrix with one shared draw by
default and sum the begin and end divergences. The Jacobian-norm penalty is
not defined for this head.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .divergences import PROB_FLOOR, generator
from .regularizers import PerturbationConfig, RegularizerSpec, _ASCENT_NORM_FLOOR
from .tensor import RandomSource, softmax


@dataclass(frozen=True)
class SpanModel:
    enc_dims: tuple[int, ...]  # feature size, hidden..., encoding size
    enc_weights: tuple[np.ndarray, ...]
    enc_biases: tuple[np.ndarray, ...]
    w_begin: np.ndarray
    w_end: np.ndarray

    def __post_init__(self):
        if len(self.enc_dims) < 2:
            raise ValueError("enc_dims needs at least feature and encoding sizes")
        d = self.enc_dims[-1]
        if self.w_begin.shape != (d,) or self.w_end.shape != (d,):
            raise ValueError("scorer weights must match the encoding size")
        for arr in (*self.enc_weights, *self.enc_biases, self.w_begin, self.w_end):
            arr.setflags(write=False)

    @property
    def n_features(self) -> int:
        return self.enc_dims[0]


@dataclass(frozen=True)
class SpanTrace:
    features: np.ndarray  # (T, n_feat)
    hiddens: tuple[np.ndarray, ...]
    encodings: np.ndarray  # (T, d)
    begin_scores: np.ndarray
    end_scores: np.ndarray
    begin_probs: np.ndarray
    end_probs: np.ndarray


@dataclass(frozen=True)
class SpanGradients:
    enc_weight_grads: tuple[np.ndarray, ...]
    enc_bias_grads: tuple[np.ndarray, ...]
    w_begin_grad: np.ndarray
    w_end_grad: np.ndarray
    feature_grad: np.ndarray | None = None


@dataclass(frozen=True)
class SpanPenaltyResult:
    value: float
    grads: SpanGradients
    adversarial_direction: np.ndarray | None = None


@dataclass(frozen=True)
class SpanExample:
    features: np.ndarray  # (T, n_feat)
    start: int | None
    end: int | None


def init_span_model(enc_dims, rng: RandomSource) -> SpanModel:
    dims = tuple(int(d) for d in enc_dims)
    weights, biases = [], []
    for l in range(len(dims) - 1):
        flat = rng.split(0, l).generator().standard_normal(dims[l + 1] * dims[l])
        weights.append((flat / np.sqrt(dims[l])).reshape(dims[l + 1], dims[l]))
        biases.append(np.zeros(dims[l + 1]))
    d = dims[-1]
    w_begin = rng.split(1, 0).generator().standard_normal(d) / np.sqrt(d)
    w_end = rng.split(1, 1).generator().standard_normal(d) / np.sqrt(d)
    return SpanModel(dims, tuple(weights), tuple(biases), w_begin, w_end)


def _check_features(model: SpanModel, features) -> np.ndarray:
    f = np.asarray(features, dtype=np.float64)
    if f.ndim != 2 or f.shape[1] != model.n_features:
        raise ValueError(f"features must have shape (T, {model.n_features}), got {f.shape}")
    if f.shape[0] < 1:
        raise ValueError("need at least one position")
    if not np.all(np.isfinite(f)):
        raise ValueError("features have non-finite entries")
    return f


def span_forward(model: SpanModel, features) -> SpanTrace:
    f = _check_features(model, features)
    hiddens = []
    a = f
    for w, b in zip(model.enc_weights[:-1], model.enc_biases[:-1]):
        a = np.tanh(a @ w.T + b)
        hiddens.append(a)
    h = a @ model.enc_weights[-1].T + model.enc_biases[-1]  # linear encoding
    sb = h @ model.w_begin
    se = h @ model.w_end
    return SpanTrace(f, tuple(hiddens), h, sb, se, softmax(sb), softmax(se))


def span_distributions(model: SpanModel, features):
    tr = span_forward(model, features)
    return tr.begin_probs, tr.end_probs


def joint_span_table(model: SpanModel, features) -> np.ndarray:
    """(T, T) table of span probabilities P_begin(i) * P_end(j)."""
    pb, pe = span_distributions(model, features)
    return np.outer(pb, pe)


def _encoder_backward(model: SpanModel, tr: SpanTrace, g_h, want_param_grads=True):
    """Backpropagate d(scalar)/d(encodings) to encoder params and features."""
    n_layers = len(model.enc_weights)
    wg = [None] * n_layers
    bg = [None] * n_layers
    d = g_h
    for l in range(n_layers - 1, -1, -1):
        a_prev = tr.hiddens[l - 1] if l > 0 else tr.features
        if want_param_grads:
            wg[l] = d.T @ a_prev
            bg[l] = d.sum(axis=0)
        d = d @ model.enc_weights[l]
        if l > 0:
            d = d * (1.0 - a_prev * a_prev)
    return wg, bg, d


def _scores_backward(model, tr: SpanTrace, g_sb, g_se, want_param_grads=True):
    """Gradients from seeds on the two score vectors."""
    g_h = np.outer(g_sb, model.w_begin) + np.outer(g_se, model.w_end)
    wg, bg, fg = _encoder_backward(model, tr, g_h, want_param_grads)
    if not want_param_grads:
        return None, fg
    grads = SpanGradients(
        tuple(wg), tuple(bg),
        w_begin_grad=tr.encodings.T @ g_sb,
        w_end_grad=tr.encodings.T @ g_se,
        feature_grad=fg,
    )
    return grads, fg


def span_loss(model: SpanModel, features, start: int, end: int):
    """Negative log-probability of the (start, end) span, with gradients."""
    tr = span_forward(model, features)
    t = tr.features.shape[0]
    if not (0 <= int(start) < t and 0 <= int(end) < t):
        raise ValueError(f"span ({start}, {end}) out of range for {t} positions")
    m_b, m_e = tr.begin_scores.max(), tr.end_scores.max()
    loss = (
        m_b + np.log(np.sum(np.exp(tr.begin_scores - m_b))) - tr.begin_scores[int(start)]
        + m_e + np.log(np.sum(np.exp(tr.end_scores - m_e))) - tr.end_scores[int(end)]
    )
    g_sb = tr.begin_probs.copy()
    g_sb[int(start)] -= 1.0
    g_se = tr.end_probs.copy()
    g_se[int(end)] -= 1.0
    grads, _ = _scores_backward(model, tr, g_sb, g_se)
    return float(loss), grads


def _div_value_and_seed(gen, p_noisy, p_clean):
    ratio = np.maximum(p_noisy, PROB_FLOOR) / np.maximum(p_clean, PROB_FLOOR)
    return float(np.sum(p_clean * gen.g(ratio))), gen.g_prime(ratio)


def _softmax_vjp_vec(p, g):
    return p * (g - np.dot(p, g))


def _term_value_and_score_seeds(gen, trn: SpanTrace, tr: SpanTrace):
    vb, seed_b = _div_value_and_seed(gen, trn.begin_probs, tr.begin_probs)
    ve, seed_e = _div_value_and_seed(gen, trn.end_probs, tr.end_probs)
    g_sb = _softmax_vjp_vec(trn.begin_probs, seed_b)
    g_se = _softmax_vjp_vec(trn.end_probs, seed_e)
    return vb + ve, g_sb, g_se


def _ascent_direction(model, tr, gen, delta):
    trn = span_forward(model, tr.features + delta)
    _, g_sb, g_se = _term_value_and_score_seeds(gen, trn, tr)
    _, fg = _scores_backward(model, trn, g_sb, g_se, want_param_grads=False)
    return fg


def _project_flat(delta, cfg: PerturbationConfig):
    if cfg.norm_kind == "linf":
        return np.clip(delta, -cfg.radius, cfg.radius)
    nrm = np.sqrt(np.sum(delta * delta))
    return cfg.radius * delta / nrm if nrm > 0 else delta


def span_penalty(model: SpanModel, features, spec: RegularizerSpec, rng: RandomSource) -> SpanPenaltyResult:
    """Summed begin+end divergence penalty under one shared perturbation.

    kind rpt draws the perturbation; kind vat runs normalized gradient
    ascent on the summed divergence and projects to the norm ball. The
    perturbation is one (T, n_feat) matrix applied to both terms; norms for
    ascent and projection treat it as a flat vector.
    """
    if spec.kind == "jr":
        raise ValueError("the Jacobian-norm penalty is not defined for span models")
    if spec.kind not in ("rpt", "vat"):
        raise ValueError(f"no span penalty for kind {spec.kind!r}")
    gen = generator(spec.generator_kind)
    cfg = spec.perturbation
    tr = span_forward(model, features)
    shape = tr.features.shape

    if spec.kind == "rpt":
        acc_value = 0.0
        acc = None
        for s in range(cfg.samples_per_example):
            eps = rng.split(s).generator().standard_normal(shape) * cfg.radius
            trn = span_forward(model, tr.features + eps)
            value, g_sb, g_se = _term_value_and_score_seeds(gen, trn, tr)
            grads, _ = _scores_backward(model, trn, g_sb, g_se)
            acc_value += value
            acc = grads if acc is None else _add_span_grads(acc, grads)
        k = cfg.samples_per_example
        return SpanPenaltyResult(acc_value / k, _scale_span_grads(acc, 1.0 / k))

    delta = rng.split(0).generator().standard_normal(shape) * cfg.init_std
    for _ in range(cfg.ascent_steps):
        g = _ascent_direction(model, tr, gen, delta)
        nrm = np.sqrt(np.sum(g * g))
        if nrm >= _ASCENT_NORM_FLOOR:
            delta = delta + cfg.step_size * g / nrm
    delta = _project_flat(delta, cfg)
    trn = span_forward(model, tr.features + delta)
    value, g_sb, g_se = _term_value_and_score_seeds(gen, trn, tr)
    grads, _ = _scores_backward(model, trn, g_sb, g_se)
    return SpanPenaltyResult(value, grads, delta)


def _add_span_grads(a: SpanGradients, b: SpanGradients) -> SpanGradients:
    return SpanGradients(
        tuple(x + y for x, y in zip(a.enc_weight_grads, b.enc_weight_grads)),
        tuple(x + y for x, y in zip(a.enc_bias_grads, b.enc_bias_grads)),
        a.w_begin_grad + b.w_begin_grad,
        a.w_end_grad + b.w_end_grad,
    )


def _scale_span_grads(g: SpanGradients, s: float) -> SpanGradients:
    return SpanGradients(
        tuple(s * x for x in g.enc_weight_grads),
        tuple(s * x for x in g.enc_bias_grads),
        s * g.w_begin_grad,
        s * g.w_end_grad,
        None if g.feature_grad is None else s * g.feature_grad,
    )


def span_quadratic_penalty(model: SpanModel, features, gen, eps) -> float:
    """Second-order value of the summed penalty at perturbation eps.

    Uses the Jacobians of the begin and end distributions in the flattened
    features: (g''(1)/2) [eps^T J_b^T diag(1/P_b) J_b eps + (end term)].
    """
    tr = span_forward(model, features)
    t = tr.features.shape[0]
    eps_flat = np.asarray(eps, dtype=np.float64).reshape(-1)
    total = 0.0
    for probs, which in ((tr.begin_probs, "b"), (tr.end_probs, "e")):
        jeps = np.empty(t)
        for i in range(t):
            seed = np.zeros(t)
            seed[i] = 1.0
            g_s = _softmax_vjp_vec(probs, seed)
            if which == "b":
                _, fg = _scores_backward(model, tr, g_s, np.zeros(t), want_param_grads=False)
            else:
                _, fg = _scores_backward(model, tr, np.zeros(t), g_s, want_param_grads=False)
            jeps[i] = fg.reshape(-1) @ eps_flat
        total += np.sum(jeps * jeps / np.maximum(probs, PROB_FLOOR))
    return float(0.5 * gen.curvature_at_one * total)


def apply_span_update(model: SpanModel, grads: SpanGradients, step) -> SpanModel:
    return SpanModel(
        model.enc_dims,
        tuple(w - step * g for w, g in zip(model.enc_weights, grads.enc_weight_grads)),
        tuple(b - step * g for b, g in zip(model.enc_biases, grads.enc_bias_grads)),
        model.w_begin - step * grads.w_begin_grad,
        model.w_end - step * grads.w_end_grad,
    )


def write_span_jsonl(examples, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for ex in examples:
            doc = {
                "features": np.asarray(ex.features, dtype=np.float64).tolist(),
                "start": None if ex.start is None else int(ex.start),
                "end": None if ex.end is None else int(ex.end),
            }
            fh.write(json.dumps(doc) + "\n")


def read_span_jsonl(path) -> list[SpanExample]:
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                doc = json.loads(line)
                features = np.asarray(doc["features"], dtype=np.float64)
                if features.ndim != 2:
                    raise ValueError("features must be a rectangular list of rows")
                start, end = doc["start"], doc["end"]
            except (KeyError, ValueError, TypeError) as exc:
                raise ValueError(f"{path}:{lineno}: bad span example: {exc}") from None
            t = features.shape[0]
            for name, idx in (("start", start), ("end", end)):
                if idx is not None and not 0 <= int(idx) < t:
                    raise ValueError(f"{path}:{lineno}: {name}={idx} out of range for {t} positions")
            out.append(SpanExample(features, start, end))
    return out
