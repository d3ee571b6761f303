"""Trainable model: MLP encoder, prototype, scale and margin parameters.

The encoder is a small ReLU MLP. In cosine geometry the final embedding is
L2-normalized (dividing by max(||v||, eps_stab), which keeps the output
exactly unit while bounding the Jacobian near zero) and scored by
kappa * mu^T z against a unit prototype mu; in euclidean geometry the
embedding stays unnormalized and is scored by the negative squared
distance to a free prototype. Forward passes cache everything the manual
backward pass needs.

Raw parameterizations keep constraints by construction:

    alpha = softplus(alpha_raw) > 0
    m     = tanh(margin_raw) in (-1, 1)      (cosine, default)
    m     = softplus(margin_raw)             (cosine, softplus variant)
    rho   = softplus(margin_raw) > 0         (euclidean squared radius)
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DegenerateEmbedding,
    DegeneratePrototype,
    DimensionMismatch,
    FormatViolation,
    InvalidSpec,
    IoFailure,
    StaleCache,
)
from .losses import LossConfig
from .rng import RngStream
from .sphere import EPS_NORM, sample_uniform_sphere

EPS_STAB = 1e-8

GEOMETRIES = ("cosine", "euclidean")


def softplus(x: float) -> float:
    return float(np.logaddexp(0.0, x))


def softplus_inv(y: float) -> float:
    if y <= 0:
        raise InvalidSpec("softplus inverse needs a positive value")
    return y + math.log1p(-math.exp(-y)) if y > 1e-8 else math.log(math.expm1(y))


@dataclass
class MlpParams:
    """Weights (out, in) and biases of the rectifier MLP."""

    weights: list
    biases: list
    dropout_rate: float
    embed_dim: int

    def layer_sizes(self):
        return [self.weights[0].shape[1]] + [w.shape[0] for w in self.weights]


@dataclass
class ModelState:
    encoder: MlpParams
    mu: np.ndarray | None
    proto_euclid: np.ndarray | None
    alpha_raw: np.ndarray  # 0-d array so the optimizer can update in place
    margin_raw: np.ndarray
    geometry: str
    loss_config: LossConfig
    init_rng: RngStream
    version: int = 0

    @property
    def alpha(self) -> float:
        return softplus(float(self.alpha_raw))

    @property
    def margin(self) -> float:
        cfg = self.loss_config
        if self.geometry == "euclidean":
            if cfg.margin_mode == "fixed":
                return cfg.margin_fixed
            return softplus(float(self.margin_raw))
        if cfg.margin_mode == "fixed":
            return cfg.margin_fixed
        if cfg.margin_param == "softplus":
            return softplus(float(self.margin_raw))
        return math.tanh(float(self.margin_raw))

    def margin_raw_grad_chain(self) -> float:
        """d(margin)/d(margin_raw) at the current raw value."""
        cfg = self.loss_config
        if cfg.margin_mode == "fixed":
            return 0.0
        if self.geometry == "euclidean" or cfg.margin_param == "softplus":
            return float(1.0 / (1.0 + np.exp(-float(self.margin_raw))))
        return 1.0 - math.tanh(float(self.margin_raw)) ** 2

    def alpha_raw_grad_chain(self) -> float:
        return float(1.0 / (1.0 + np.exp(-float(self.alpha_raw))))

    def parameters(self) -> dict:
        """Trainable arrays, keyed by name; views into this state."""
        params = {}
        for i, (w, b) in enumerate(zip(self.encoder.weights, self.encoder.biases)):
            params[f"W{i}"] = w
            params[f"b{i}"] = b
        if self.geometry == "cosine":
            params["mu"] = self.mu
        else:
            params["proto"] = self.proto_euclid
        params["alpha_raw"] = self.alpha_raw
        if self.loss_config.margin_mode == "learnable":
            params["margin_raw"] = self.margin_raw
        return params

    def bump_version(self):
        self.version += 1


def init_model(
    layer_sizes,
    geometry: str,
    rng: RngStream,
    loss_config: LossConfig | None = None,
    dropout_rate: float = 0.2,
) -> ModelState:
    """Build a fresh model.

    ``layer_sizes`` runs [input_dim, hidden..., embed_dim]. Weights are
    symmetric uniform scaled by 1/sqrt(fan_in), biases zero, the prototype
    uniform on the sphere, alpha = 1 and margin = 0.5 (euclidean: rho = 1).
    """
    sizes = [int(s) for s in layer_sizes]
    if len(sizes) < 2 or any(s < 1 for s in sizes):
        raise InvalidSpec(f"layer sizes must be >= 1 with at least one layer: {sizes}")
    if sizes[-1] < 2:
        raise InvalidSpec("embedding dimension must be >= 2")
    if geometry not in GEOMETRIES:
        raise InvalidSpec(f"geometry must be one of {GEOMETRIES}")
    if not 0.0 <= dropout_rate < 1.0:
        raise InvalidSpec("dropout rate must lie in [0, 1)")
    cfg = loss_config if loss_config is not None else LossConfig()

    gen = rng.child(0).generator()
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        bound = 1.0 / math.sqrt(fan_in)
        weights.append(gen.uniform(-bound, bound, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    d = sizes[-1]
    direction = sample_uniform_sphere(d, 1, rng.child(1))[0]

    alpha_raw = np.array(softplus_inv(cfg.alpha))
    if geometry == "euclidean":
        margin_raw = np.array(softplus_inv(1.0))
    elif cfg.margin_param == "softplus":
        margin_raw = np.array(softplus_inv(0.5))
    else:
        margin_raw = np.array(math.atanh(0.5))

    return ModelState(
        encoder=MlpParams(weights=weights, biases=biases, dropout_rate=dropout_rate, embed_dim=d),
        mu=direction if geometry == "cosine" else None,
        proto_euclid=direction.copy() if geometry == "euclidean" else None,
        alpha_raw=alpha_raw,
        margin_raw=margin_raw,
        geometry=geometry,
        loss_config=cfg,
        init_rng=rng,
    )


@dataclass
class ForwardCache:
    """Intermediate activations retained for the backward pass."""

    state: ModelState
    version: int
    inputs: list  # layer inputs H_0 .. H_{L-1}
    preacts: list  # pre-activations A_0 .. A_{L-1}
    pre_norm: np.ndarray  # post-dropout embedding before normalization
    mask: np.ndarray | None
    norms: np.ndarray | None  # raw norms (cosine geometry)
    squeezed: bool


def encoder_forward(x, state: ModelState, training: bool, rng: RngStream | None = None):
    """Map inputs to embeddings; returns (embeddings, cache).

    Accepts a single vector or an (n, in_dim) batch. Inverted dropout on the
    final embedding layer is active only when ``training`` is true (and then
    requires ``rng``). Cosine geometry normalizes with ||v|| + 1e-8 and
    raises DegenerateEmbedding if a pre-normalization norm collapses.
    """
    x = np.asarray(x, dtype=np.float64)
    squeezed = x.ndim == 1
    h = x[None, :] if squeezed else x
    if h.ndim != 2 or h.shape[1] != state.encoder.weights[0].shape[1]:
        raise DimensionMismatch(
            f"input dim {h.shape[-1]} != encoder input {state.encoder.weights[0].shape[1]}"
        )

    inputs, preacts = [], []
    n_layers = len(state.encoder.weights)
    for i, (w, b) in enumerate(zip(state.encoder.weights, state.encoder.biases)):
        inputs.append(h)
        a = h @ w.T + b
        preacts.append(a)
        h = np.maximum(a, 0.0) if i < n_layers - 1 else a

    mask = None
    rate = state.encoder.dropout_rate
    if training and rate > 0.0:
        if rng is None:
            raise InvalidSpec("training-mode forward needs an RngStream for dropout")
        keep = rng.generator().random(h.shape) >= rate
        mask = keep.astype(np.float64) / (1.0 - rate)
        h = h * mask

    norms = None
    if state.geometry == "cosine":
        norms = np.linalg.norm(h, axis=1)
        if np.any(norms <= EPS_NORM):
            raise DegenerateEmbedding("pre-normalization embedding norm collapsed")
        # max() keeps the output exactly unit for any non-degenerate input
        # while bounding the Jacobian by 1/EPS_STAB near zero.
        z = h / np.maximum(norms, EPS_STAB)[:, None]
    else:
        z = h

    cache = ForwardCache(
        state=state,
        version=state.version,
        inputs=inputs,
        preacts=preacts,
        pre_norm=h,
        mask=mask,
        norms=norms,
        squeezed=squeezed,
    )
    return (z[0] if squeezed else z), cache


def encoder_backward(grad_embedding, cache: ForwardCache) -> dict:
    """Backpropagate embedding gradients to every encoder parameter.

    The normalization Jacobian uses the same stabilized norm as the forward
    pass, so radial components of ``grad_embedding`` are annihilated up to
    O(eps_stab). Raises StaleCache if the model changed since the forward.
    """
    state = cache.state
    if cache.version != state.version:
        raise StaleCache("model parameters changed since the cached forward pass")
    g = np.asarray(grad_embedding, dtype=np.float64)
    if cache.squeezed:
        g = g[None, :]
    if g.shape != cache.pre_norm.shape:
        raise DimensionMismatch(f"gradient shape {g.shape} != embedding shape {cache.pre_norm.shape}")

    if state.geometry == "cosine":
        v = cache.pre_norm
        r = np.maximum(cache.norms, EPS_STAB)
        live = cache.norms > EPS_STAB  # below the floor the map is v / EPS_STAB
        radial = np.where(live, np.sum(v * g, axis=1) / (r * r * r), 0.0)
        g = g / r[:, None] - v * radial[:, None]
    if cache.mask is not None:
        g = g * cache.mask

    grads = {}
    n_layers = len(state.encoder.weights)
    for i in range(n_layers - 1, -1, -1):
        if i < n_layers - 1:
            g = g * (cache.preacts[i] > 0.0)
        grads[f"W{i}"] = g.T @ cache.inputs[i]
        grads[f"b{i}"] = g.sum(axis=0)
        if i > 0:
            g = g @ state.encoder.weights[i]
    return grads


def score(z, state: ModelState):
    """Classification score: kappa * mu^T z (cosine) or -||z - p||^2."""
    z = np.asarray(z, dtype=np.float64)
    d = state.encoder.embed_dim
    if z.shape[-1] != d:
        raise DimensionMismatch(f"embedding dim {z.shape[-1]} != model dim {d}")
    if state.geometry == "cosine":
        out = state.loss_config.kappa * (z @ state.mu)
    else:
        diff = z - state.proto_euclid
        out = -np.sum(diff * diff, axis=-1)
    return float(out) if z.ndim == 1 else out


def reproject_prototype(state: ModelState) -> ModelState:
    """Restore ||mu|| = 1 after a raw optimizer step (cosine geometry)."""
    if state.geometry != "cosine":
        return state
    n = float(np.linalg.norm(state.mu))
    if n <= EPS_NORM:
        raise DegeneratePrototype(f"prototype norm {n:.3e} after update")
    state.mu /= n
    return state


# ---------------------------------------------------------------------------
# Checkpoint serialization: self-describing JSON, exact float round-trip.

_CKPT_FORMAT = "spherepu-checkpoint"


def checkpoint_dict(state: ModelState) -> dict:
    cfg = state.loss_config
    doc = {
        "format": _CKPT_FORMAT,
        "format_version": 1,
        "geometry": state.geometry,
        "embed_dim": state.encoder.embed_dim,
        "dropout_rate": state.encoder.dropout_rate,
        "layer_shapes": [list(w.shape) for w in state.encoder.weights],
        "weights": [w.tolist() for w in state.encoder.weights],
        "biases": [b.tolist() for b in state.encoder.biases],
        "alpha_raw": float(state.alpha_raw),
        "margin_raw": float(state.margin_raw),
        "loss_config": {
            "kappa": cfg.kappa,
            "t": cfg.t,
            "lambda": cfg.lambda_,
            "alpha": cfg.alpha,
            "margin_mode": cfg.margin_mode,
            "margin_fixed": cfg.margin_fixed,
            "margin_param": cfg.margin_param,
            "logit_mode": cfg.logit_mode,
            "weight_gradient": cfg.weight_gradient,
        },
        "init_rng": {"seed": state.init_rng.seed, "stream_id": state.init_rng.stream_id},
    }
    if state.geometry == "cosine":
        doc["mu"] = state.mu.tolist()
    else:
        doc["proto_euclid"] = state.proto_euclid.tolist()
    return doc


def save_checkpoint(state: ModelState, path) -> None:
    try:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(checkpoint_dict(state), fh, indent=1)
            fh.write("\n")
    except OSError as exc:
        raise IoFailure(f"cannot write checkpoint {path}: {exc}") from exc


def state_from_dict(doc: dict) -> ModelState:
    if doc.get("format") != _CKPT_FORMAT:
        raise FormatViolation(f"not a {_CKPT_FORMAT} document")
    try:
        cfg_doc = doc["loss_config"]
        cfg = LossConfig(
            kappa=cfg_doc["kappa"],
            t=cfg_doc["t"],
            lambda_=cfg_doc["lambda"],
            alpha=cfg_doc["alpha"],
            margin_mode=cfg_doc["margin_mode"],
            margin_fixed=cfg_doc["margin_fixed"],
            margin_param=cfg_doc["margin_param"],
            logit_mode=cfg_doc["logit_mode"],
            weight_gradient=cfg_doc["weight_gradient"],
        )
        geometry = doc["geometry"]
        weights = [np.asarray(w, dtype=np.float64) for w in doc["weights"]]
        biases = [np.asarray(b, dtype=np.float64) for b in doc["biases"]]
        shapes = [list(w.shape) for w in weights]
        if shapes != doc["layer_shapes"]:
            raise FormatViolation(f"layer_shapes {doc['layer_shapes']} != stored arrays {shapes}")
        state = ModelState(
            encoder=MlpParams(
                weights=weights,
                biases=biases,
                dropout_rate=doc["dropout_rate"],
                embed_dim=doc["embed_dim"],
            ),
            mu=np.asarray(doc["mu"], dtype=np.float64) if geometry == "cosine" else None,
            proto_euclid=(
                np.asarray(doc["proto_euclid"], dtype=np.float64) if geometry == "euclidean" else None
            ),
            alpha_raw=np.array(doc["alpha_raw"], dtype=np.float64),
            margin_raw=np.array(doc["margin_raw"], dtype=np.float64),
            geometry=geometry,
            loss_config=cfg,
            init_rng=RngStream(doc["init_rng"]["seed"], doc["init_rng"]["stream_id"]),
        )
    except KeyError as exc:
        raise FormatViolation(f"checkpoint missing field {exc}") from exc
    return state


def load_checkpoint(path) -> ModelState:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise IoFailure(f"cannot read checkpoint {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise FormatViolation(f"checkpoint is not valid JSON: {exc}") from exc
    return state_from_dict(doc)
