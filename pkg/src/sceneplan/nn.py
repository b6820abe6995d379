"""Dense-network engine in plain numpy with hand-derived backprop.

Everything runs in double precision.  The only model family in the package is
a conditional VAE assembled from three MLPs: a condition encoder, an encoder
producing (mu, log_sigma), and a decoder consuming z concatenated with the
condition features.  Training uses Adam with a linear KL warm-up.
"""

from __future__ import annotations

import base64
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import TrainingError

FORMAT_VERSION = 1


def _act(name: str, z: np.ndarray) -> np.ndarray:
    if name == "identity":
        return z
    if name == "relu":
        return np.maximum(z, 0.0)
    if name == "tanh":
        return np.tanh(z)
    if name == "sigmoid":
        return 1.0 / (1.0 + np.exp(-z))
    raise ValueError(f"unknown activation {name!r}")


def _act_grad(name: str, z: np.ndarray) -> np.ndarray:
    if name == "identity":
        return np.ones_like(z)
    if name == "relu":
        return (z > 0.0).astype(float)
    if name == "tanh":
        t = np.tanh(z)
        return 1.0 - t * t
    if name == "sigmoid":
        s = 1.0 / (1.0 + np.exp(-z))
        return s * (1.0 - s)
    raise ValueError(f"unknown activation {name!r}")


@dataclass
class DenseLayer:
    """y = act(x @ weights + bias); weights (n_in, n_out)."""

    weights: np.ndarray
    bias: np.ndarray
    activation: str


def dense(n_in: int, n_out: int, activation: str, rng: np.random.Generator) -> DenseLayer:
    if activation == "relu":
        std = math.sqrt(2.0 / n_in)
    else:
        std = math.sqrt(1.0 / n_in)
    w = rng.standard_normal((n_in, n_out)) * std
    return DenseLayer(weights=w, bias=np.zeros(n_out), activation=activation)


@dataclass
class MlpCache:
    inputs: list[np.ndarray]     # per-layer input, (B, n_in)
    preacts: list[np.ndarray]    # per-layer pre-activation, (B, n_out)
    squeeze: bool


def mlp_forward(layers: list[DenseLayer], x: np.ndarray) -> tuple[np.ndarray, MlpCache]:
    x = np.asarray(x, dtype=float)
    squeeze = x.ndim == 1
    h = np.atleast_2d(x)
    if h.shape[1] != layers[0].weights.shape[0]:
        raise ValueError(
            f"input width {h.shape[1]} does not match first layer ({layers[0].weights.shape[0]})"
        )
    inputs, preacts = [], []
    for layer in layers:
        inputs.append(h)
        z = h @ layer.weights + layer.bias
        preacts.append(z)
        h = _act(layer.activation, z)
    out = h[0] if squeeze else h
    return out, MlpCache(inputs=inputs, preacts=preacts, squeeze=squeeze)


def mlp_backward(layers: list[DenseLayer], cache: MlpCache, grad_out: np.ndarray):
    """Exact reverse-mode gradients (summed over the batch).

    Returns ([(dW, db) per layer], grad wrt the input).
    """
    if len(cache.inputs) != len(layers):
        raise ValueError("cache does not match layer stack")
    g = np.atleast_2d(np.asarray(grad_out, dtype=float))
    if g.shape != cache.preacts[-1].shape:
        raise ValueError(
            f"upstream gradient shape {g.shape} does not match forward output "
            f"{cache.preacts[-1].shape}"
        )
    grads: list[tuple[np.ndarray, np.ndarray]] = [None] * len(layers)
    for li in range(len(layers) - 1, -1, -1):
        layer = layers[li]
        gz = g * _act_grad(layer.activation, cache.preacts[li])
        grads[li] = (cache.inputs[li].T @ gz, gz.sum(axis=0))
        g = gz @ layer.weights.T
    return grads, (g[0] if cache.squeeze else g)


def kl_standard_normal(mu: np.ndarray, log_sigma: np.ndarray) -> float:
    """KL(N(mu, diag(sigma^2)) || N(0, I)) = 0.5 * sum(mu^2 + sigma^2 - 1 - 2 log sigma)."""
    mu = np.asarray(mu, dtype=float)
    log_sigma = np.asarray(log_sigma, dtype=float)
    return float(0.5 * np.sum(mu * mu + np.exp(2.0 * log_sigma) - 1.0 - 2.0 * log_sigma))


def reparameterize(mu: np.ndarray, log_sigma: np.ndarray, eps: np.ndarray) -> np.ndarray:
    return mu + np.exp(log_sigma) * eps


@dataclass
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    step: int = 0
    learning_rate: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


def adam_init(params: list[np.ndarray], learning_rate: float = 1e-4) -> AdamState:
    return AdamState(
        m=[np.zeros_like(p) for p in params],
        v=[np.zeros_like(p) for p in params],
        learning_rate=learning_rate,
    )


def adam_step(params: list[np.ndarray], grads: list[np.ndarray], state: AdamState):
    """One bias-corrected Adam update, applied in place."""
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ValueError("params, grads and state must have matching lengths")
    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if p.shape != g.shape:
            raise ValueError(f"gradient shape {g.shape} does not match param {p.shape}")
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        m_hat = m / (1.0 - b1 ** t)
        v_hat = v / (1.0 - b2 ** t)
        p -= state.learning_rate * m_hat / (np.sqrt(v_hat) + state.eps)
    return params, state


@dataclass
class CvaeModel:
    condition_encoder: list[DenseLayer]
    encoder: list[DenseLayer]        # input: x ++ condition features, output: 2*d_z
    decoder: list[DenseLayer]        # input: z ++ condition features
    d_z: int
    x_dim: int
    cond_dim: int
    basis_seed: int | None = None    # set on models conditioned on BPS features
    n_basis: int | None = None


def make_cvae(x_dim: int, cond_dim: int, d_z: int = 32, hidden: int = 256,
              seed: int = 0, output_activation: str = "identity") -> CvaeModel:
    """Two hidden relu layers of width `hidden` in both coder stacks; the
    condition runs through a single dense layer to a `hidden`-wide feature."""
    rng = np.random.default_rng(seed)
    cond_enc = [dense(cond_dim, hidden, "relu", rng)]
    encoder = [
        dense(x_dim + hidden, hidden, "relu", rng),
        dense(hidden, hidden, "relu", rng),
        dense(hidden, 2 * d_z, "identity", rng),
    ]
    decoder = [
        dense(d_z + hidden, hidden, "relu", rng),
        dense(hidden, hidden, "relu", rng),
        dense(hidden, x_dim, output_activation, rng),
    ]
    return CvaeModel(cond_enc, encoder, decoder, d_z=d_z, x_dim=x_dim, cond_dim=cond_dim)


def cvae_parameters(model: CvaeModel) -> list[np.ndarray]:
    params = []
    for stack in (model.condition_encoder, model.encoder, model.decoder):
        for layer in stack:
            params.append(layer.weights)
            params.append(layer.bias)
    return params


def cvae_decode(model: CvaeModel, z: np.ndarray, cond: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    cond = np.asarray(cond, dtype=float)
    squeeze = z.ndim == 1 and cond.ndim == 1
    z2 = np.atleast_2d(z)
    c2 = np.atleast_2d(cond)
    if len(z2) == 1 and len(c2) > 1:
        z2 = np.repeat(z2, len(c2), axis=0)
    if len(c2) == 1 and len(z2) > 1:
        c2 = np.repeat(c2, len(z2), axis=0)
    feat, _ = mlp_forward(model.condition_encoder, c2)
    x_hat, _ = mlp_forward(model.decoder, np.concatenate([z2, feat], axis=1))
    return x_hat[0] if squeeze else x_hat


def cvae_loss_and_grads(model: CvaeModel, x: np.ndarray, cond: np.ndarray,
                        eps: np.ndarray, kl_weight: float):
    """Mean-over-batch loss 'sum((x_hat - x)^2) + kl_weight * KL' and exact
    gradients aligned with cvae_parameters(model)."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    cond = np.atleast_2d(np.asarray(cond, dtype=float))
    eps = np.atleast_2d(np.asarray(eps, dtype=float))
    batch = len(x)

    feat, cache_cond = mlp_forward(model.condition_encoder, cond)
    enc_out, cache_enc = mlp_forward(model.encoder, np.concatenate([x, feat], axis=1))
    mu = enc_out[:, : model.d_z]
    log_sigma = enc_out[:, model.d_z :]
    z = mu + np.exp(log_sigma) * eps
    x_hat, cache_dec = mlp_forward(model.decoder, np.concatenate([z, feat], axis=1))

    diff = x_hat - x
    recon = float(np.sum(diff * diff) / batch)
    kl = float(
        0.5 * np.sum(mu * mu + np.exp(2.0 * log_sigma) - 1.0 - 2.0 * log_sigma) / batch
    )
    total = recon + kl_weight * kl

    g_xhat = 2.0 * diff / batch
    dec_grads, g_dec_in = mlp_backward(model.decoder, cache_dec, g_xhat)
    g_z = g_dec_in[:, : model.d_z]
    g_feat = g_dec_in[:, model.d_z :].copy()

    g_mu = g_z + kl_weight * mu / batch
    g_log_sigma = g_z * eps * np.exp(log_sigma) + kl_weight * (np.exp(2.0 * log_sigma) - 1.0) / batch
    enc_grads, g_enc_in = mlp_backward(
        model.encoder, cache_enc, np.concatenate([g_mu, g_log_sigma], axis=1)
    )
    g_feat += g_enc_in[:, model.x_dim :]
    cond_grads, _ = mlp_backward(model.condition_encoder, cache_cond, g_feat)

    grads: list[np.ndarray] = []
    for stack_grads in (cond_grads, enc_grads, dec_grads):
        for dw, db in stack_grads:
            grads.append(dw)
            grads.append(db)
    return total, recon, kl, grads


def train_cvae(model: CvaeModel, inputs: np.ndarray, conditions: np.ndarray, *,
               epochs: int = 40, batch_size: int = 8, kl_weight: float = 1e-3,
               learning_rate: float = 1e-4, warmup_frac: float = 0.1,
               seed: int = 0) -> tuple[CvaeModel, list[float]]:
    """Seeded minibatch Adam training; the KL weight ramps linearly from zero
    over the first `warmup_frac` of all steps.  Returns per-epoch mean loss."""
    inputs = np.asarray(inputs, dtype=float)
    conditions = np.asarray(conditions, dtype=float)
    if inputs.ndim != 2 or conditions.ndim != 2 or len(inputs) != len(conditions):
        raise TrainingError("inputs and conditions must be 2d arrays of equal length")
    if inputs.shape[1] != model.x_dim or conditions.shape[1] != model.cond_dim:
        raise TrainingError(
            f"dataset dims {inputs.shape[1]}/{conditions.shape[1]} do not match model "
            f"{model.x_dim}/{model.cond_dim}"
        )
    n = len(inputs)
    rng = np.random.default_rng(seed)
    params = cvae_parameters(model)
    state = adam_init(params, learning_rate)
    steps_per_epoch = max(1, math.ceil(n / batch_size))
    warmup_steps = max(1, int(warmup_frac * epochs * steps_per_epoch))
    trace: list[float] = []
    global_step = 0
    for epoch in range(epochs):
        order = rng.permutation(n)
        epoch_loss = 0.0
        for b0 in range(0, n, batch_size):
            idx = order[b0 : b0 + batch_size]
            eps = rng.standard_normal((len(idx), model.d_z))
            w = kl_weight * min(1.0, (global_step + 1) / warmup_steps)
            total, _, _, grads = cvae_loss_and_grads(
                model, inputs[idx], conditions[idx], eps, w
            )
            if not math.isfinite(total):
                raise TrainingError(f"non-finite loss at epoch {epoch}, step {global_step}")
            adam_step(params, grads, state)
            epoch_loss += total * len(idx)
            global_step += 1
        trace.append(epoch_loss / n)
    return model, trace


def cvae_reconstruction_loss(model: CvaeModel, inputs: np.ndarray, conditions: np.ndarray,
                             seed: int = 0) -> float:
    """Mean squared-sum reconstruction error with seeded eps, for diagnostics."""
    rng = np.random.default_rng(seed)
    eps = rng.standard_normal((len(inputs), model.d_z))
    _, recon, _, _ = cvae_loss_and_grads(model, inputs, conditions, eps, 0.0)
    return recon


def gradient_check(loss_and_grads, params: list[np.ndarray], rng: np.random.Generator,
                   n_entries: int = 30, h: float = 1e-5) -> float:
    """Max relative error between analytic gradients and central differences on
    randomly chosen parameter entries.  `loss_and_grads()` must evaluate the
    current params and return (loss, grads-aligned-with-params)."""
    _, grads = loss_and_grads()
    worst = 0.0
    for _ in range(n_entries):
        pi = int(rng.integers(len(params)))
        p = params[pi]
        if p.size == 0:
            continue
        flat = int(rng.integers(p.size))
        orig = p.flat[flat]
        p.flat[flat] = orig + h
        up, _ = loss_and_grads()
        p.flat[flat] = orig - h
        down, _ = loss_and_grads()
        p.flat[flat] = orig
        numeric = (up - down) / (2.0 * h)
        analytic = grads[pi].flat[flat]
        denom = max(abs(numeric), abs(analytic), 1e-8)
        worst = max(worst, abs(numeric - analytic) / denom)
    return worst


def _layer_record(layer: DenseLayer) -> dict:
    return {
        "rows": int(layer.weights.shape[0]),
        "cols": int(layer.weights.shape[1]),
        "activation": layer.activation,
        "weights": base64.b64encode(np.ascontiguousarray(layer.weights).tobytes()).decode("ascii"),
        "bias": base64.b64encode(np.ascontiguousarray(layer.bias).tobytes()).decode("ascii"),
    }


def _layer_from_record(rec: dict) -> DenseLayer:
    rows, cols = int(rec["rows"]), int(rec["cols"])
    w = np.frombuffer(base64.b64decode(rec["weights"]), dtype="<f8").reshape(rows, cols).copy()
    b = np.frombuffer(base64.b64decode(rec["bias"]), dtype="<f8").copy()
    return DenseLayer(weights=w, bias=b, activation=rec["activation"])


def save_model(model: CvaeModel, path, kind: str = "cvae", extra: dict | None = None):
    """Versioned JSON checkpoint: layer shapes, activations and row-major
    parameter bytes.  Round-trips losslessly (float64 little-endian)."""
    record = {
        "format_version": FORMAT_VERSION,
        "kind": kind,
        "d_z": model.d_z,
        "x_dim": model.x_dim,
        "cond_dim": model.cond_dim,
        "basis_seed": model.basis_seed,
        "n_basis": model.n_basis,
        "extra": extra or {},
        "stacks": {
            name: [_layer_record(l) for l in stack]
            for name, stack in (
                ("condition_encoder", model.condition_encoder),
                ("encoder", model.encoder),
                ("decoder", model.decoder),
            )
        },
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(record, fh, sort_keys=True, separators=(",", ":"))


def load_model(path) -> tuple[CvaeModel, str, dict]:
    with open(path, "r", encoding="utf-8") as fh:
        record = json.load(fh)
    version = record.get("format_version")
    if version != FORMAT_VERSION:
        raise ValueError(f"unsupported checkpoint format_version {version}")
    stacks = {
        name: [_layer_from_record(r) for r in record["stacks"][name]]
        for name in ("condition_encoder", "encoder", "decoder")
    }
    model = CvaeModel(
        condition_encoder=stacks["condition_encoder"],
        encoder=stacks["encoder"],
        decoder=stacks["decoder"],
        d_z=int(record["d_z"]),
        x_dim=int(record["x_dim"]),
        cond_dim=int(record["cond_dim"]),
        basis_seed=record.get("basis_seed"),
        n_basis=record.get("n_basis"),
    )
    return model, record.get("kind", "cvae"), record.get("extra", {})
