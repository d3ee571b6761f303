"""PU loss terms on the hypersphere and their analytic gradients.

Three terms over a positive batch P and an unlabeled batch U of unit
embeddings:

    alignment      L_pos   = -(1/|P|) sum_i kappa * mu^T z_i
    neutral BCE    L_unlab =  (1/|U|) sum_j w(z_j) * log(2 cosh(l_j / 2))
    dispersion     L_reg   =  log( (1/(|U||U-1|)) sum_{i != j} e^{t z_i^T z_j} )

with soft weights w(z) = sigmoid(alpha * (mu^T z - m)) and total
L_pos + L_unlab + lambda * L_reg. The unlabeled logit l_j is either
kappa * mu^T z_j (``kappa_dot``) or alpha * (mu^T z_j - m)
(``margin_scaled``); both forms appear in the analysis and are kept
selectable.

Gradients are returned in ambient coordinates; the caller re-projects the
prototype after each update. Scalar reductions sort their per-sample terms
before summing so any permutation of a batch reproduces bit-identical loss
values.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import BatchTooSmall, EmptyBatch, InvalidSpec

LOGIT_MODES = ("kappa_dot", "margin_scaled")
MARGIN_MODES = ("learnable", "fixed")
MARGIN_PARAMS = ("tanh", "softplus")
WEIGHT_GRADIENTS = ("stopped", "flowing")


@dataclass(frozen=True)
class LossConfig:
    """Hyperparameters of the loss; trainable values (alpha, m) are passed live."""

    kappa: float = 3.0
    t: float = 2.0
    lambda_: float = 0.5
    alpha: float = 1.0
    margin_mode: str = "learnable"
    margin_fixed: float = 0.5
    margin_param: str = "tanh"
    logit_mode: str = "kappa_dot"
    weight_gradient: str = "stopped"

    def __post_init__(self):
        if self.kappa <= 0 or self.t <= 0 or self.alpha <= 0:
            raise InvalidSpec("kappa, t and alpha must be positive")
        if self.lambda_ < 0:
            raise InvalidSpec("lambda must be nonnegative")
        if self.margin_mode not in MARGIN_MODES:
            raise InvalidSpec(f"margin_mode must be one of {MARGIN_MODES}")
        if self.margin_mode == "fixed" and not -1.0 <= self.margin_fixed <= 1.0:
            raise InvalidSpec("fixed margin must lie in [-1, 1]")
        if self.margin_param not in MARGIN_PARAMS:
            raise InvalidSpec(f"margin_param must be one of {MARGIN_PARAMS}")
        if self.logit_mode not in LOGIT_MODES:
            raise InvalidSpec(f"logit_mode must be one of {LOGIT_MODES}")
        if self.weight_gradient not in WEIGHT_GRADIENTS:
            raise InvalidSpec(f"weight_gradient must be one of {WEIGHT_GRADIENTS}")


@dataclass
class LossBreakdown:
    """Loss terms, their weighted total, and gradients keyed by parameter.

    Gradient keys: ``mu`` (prototype, ambient), ``alpha``, ``m`` (the live
    margin value), ``z_pos`` and ``z_unlab`` (per-embedding, ambient).
    """

    l_pos: float
    l_unlab: float
    l_reg: float
    total: float
    grads: dict = field(default_factory=dict)


def _ordered_sum(values: np.ndarray) -> float:
    # Sorting fixes the reduction order as a function of the value multiset,
    # making scalar losses invariant to batch permutation at the bit level.
    return float(np.sum(np.sort(values, kind="stable")))


def sigmoid(x):
    arr = np.asarray(x, dtype=np.float64)
    a = np.atleast_1d(arr)
    out = np.empty_like(a)
    pos = a >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-a[pos]))
    ex = np.exp(a[~pos])
    out[~pos] = ex / (1.0 + ex)
    return float(out[0]) if arr.ndim == 0 else out


def neutral_bce(logit):
    """BCE against the constant target 0.5: log(2 cosh(s/2)), elementwise."""
    s = np.abs(np.asarray(logit, dtype=np.float64))
    out = 0.5 * s + np.log1p(np.exp(-s))
    return out if out.ndim else float(out)


def grad_unlab_logit(logit, w):
    """d/dl of one weighted neutral-BCE term: w * (sigmoid(l) - 1/2)."""
    l = np.asarray(logit, dtype=np.float64)
    out = np.asarray(w, dtype=np.float64) * 0.5 * np.tanh(0.5 * l)
    return out if out.ndim else float(out)


def soft_weight(z, mu, alpha: float, m: float) -> float:
    """Margin-proximity weight sigmoid(alpha * (mu^T z - m)) for one sample."""
    c = float(np.dot(np.asarray(z, dtype=np.float64), np.asarray(mu, dtype=np.float64)))
    return float(sigmoid(alpha * (c - m)))


def loss_pos(z_pos, mu, kappa: float) -> float:
    """Alignment loss -(kappa/|P|) sum mu^T z_i; lies in [-kappa, kappa]."""
    z_pos = np.asarray(z_pos, dtype=np.float64)
    if z_pos.ndim != 2 or z_pos.shape[0] == 0:
        raise EmptyBatch("positive batch is empty")
    cos = z_pos @ np.asarray(mu, dtype=np.float64)
    return -kappa * _ordered_sum(cos) / cos.shape[0]


def _unlab_terms(cos, config: LossConfig, m: float, alpha: float):
    x = alpha * (cos - m)
    w = sigmoid(x)
    if config.logit_mode == "kappa_dot":
        logit = config.kappa * cos
    else:
        logit = x
    return w, logit


def loss_unlab(z_unlab, mu, config: LossConfig, m: float, alpha: float | None = None) -> float:
    """Weighted neutral-BCE over the unlabeled batch; nonnegative."""
    z_unlab = np.asarray(z_unlab, dtype=np.float64)
    if z_unlab.ndim != 2 or z_unlab.shape[0] == 0:
        raise EmptyBatch("unlabeled batch is empty")
    if alpha is None:
        alpha = config.alpha
    cos = z_unlab @ np.asarray(mu, dtype=np.float64)
    w, logit = _unlab_terms(cos, config, m, alpha)
    return _ordered_sum(w * neutral_bce(logit)) / cos.shape[0]


def _reg_pieces(z_unlab, t: float):
    n = z_unlab.shape[0]
    gram = z_unlab @ z_unlab.T
    logits = t * gram
    off = ~np.eye(n, dtype=bool)
    mx = float(np.max(logits[off]))
    expm = np.exp(logits - mx)
    expm[np.diag_indices(n)] = 0.0
    return mx, expm, off


def loss_reg(z_unlab, t: float) -> float:
    """Log-mean-exp of temperature-scaled pairwise cosines; bounded by t."""
    z_unlab = np.asarray(z_unlab, dtype=np.float64)
    if z_unlab.ndim != 2 or z_unlab.shape[0] < 2:
        raise BatchTooSmall("dispersion term needs at least two unlabeled embeddings")
    n = z_unlab.shape[0]
    mx, expm, off = _reg_pieces(z_unlab, t)
    return mx + float(np.log(_ordered_sum(expm[off]) / (n * (n - 1))))


def manifold_grad_unlab(z, mu, alpha: float, m: float) -> np.ndarray:
    """Riemannian gradient of one margin-scaled neutral-BCE term at z.

    (alpha/2) * tanh(s/2) * (I - z z^T) mu  with  s = alpha * (mu^T z - m);
    tangent to z and equal to the tangent projection of the ambient gradient.
    """
    z = np.asarray(z, dtype=np.float64)
    mu = np.asarray(mu, dtype=np.float64)
    c = float(np.dot(mu, z))
    s = alpha * (c - m)
    return 0.5 * alpha * np.tanh(0.5 * s) * (mu - c * z)


def total_loss(z_pos, z_unlab, mu, config: LossConfig, m: float, alpha: float) -> LossBreakdown:
    """All three loss terms plus ambient gradients for mu, alpha, m and
    every batch embedding.

    The regularizer value is reported whenever |U| >= 2; its gradient enters
    only when lambda != 0, so lambda = 0 reproduces the two-term objective
    exactly. With ``weight_gradient="stopped"`` the soft weights are treated
    as constants during differentiation.
    """
    z_pos = np.asarray(z_pos, dtype=np.float64)
    z_unlab = np.asarray(z_unlab, dtype=np.float64)
    mu = np.asarray(mu, dtype=np.float64)
    if z_pos.ndim != 2 or z_pos.shape[0] == 0:
        raise EmptyBatch("positive batch is empty")
    if z_unlab.ndim != 2 or z_unlab.shape[0] == 0:
        raise EmptyBatch("unlabeled batch is empty")
    n_p, n_u = z_pos.shape[0], z_unlab.shape[0]
    kappa, lam = config.kappa, config.lambda_

    # Alignment term.
    cos_p = z_pos @ mu
    l_pos = -kappa * _ordered_sum(cos_p) / n_p
    g_mu = -(kappa / n_p) * z_pos.sum(axis=0)
    g_zp = np.broadcast_to(-(kappa / n_p) * mu, z_pos.shape).copy()

    # Weighted neutral BCE.
    cos_u = z_unlab @ mu
    w, logit = _unlab_terms(cos_u, config, m, alpha)
    nb = neutral_bce(logit)
    nbp = 0.5 * np.tanh(0.5 * logit)
    l_unlab = _ordered_sum(w * nb) / n_u

    if config.logit_mode == "kappa_dot":
        dl_dc, dl_da, dl_dm = kappa, None, None
    else:
        dl_dc, dl_da, dl_dm = alpha, cos_u - m, -alpha

    g_c = w * nbp * dl_dc
    g_alpha = 0.0 if dl_da is None else float(np.sum(w * nbp * dl_da))
    g_m = 0.0 if dl_dm is None else float(np.sum(w * nbp * dl_dm))
    if config.weight_gradient == "flowing":
        dw = w * (1.0 - w)
        g_c = g_c + nb * dw * alpha
        g_alpha += float(np.sum(nb * dw * (cos_u - m)))
        g_m += float(np.sum(nb * dw * (-alpha)))
    g_c /= n_u
    g_alpha /= n_u
    g_m /= n_u
    g_mu = g_mu + z_unlab.T @ g_c
    g_zu = np.outer(g_c, mu)

    # Dispersion term: value when defined, gradient only when weighted in.
    l_reg = 0.0
    if n_u >= 2:
        mx, expm, off = _reg_pieces(z_unlab, config.t)
        l_reg = mx + float(np.log(_ordered_sum(expm[off]) / (n_u * (n_u - 1))))
        if lam != 0.0:
            denom = float(np.sum(expm))
            g_zu = g_zu + lam * (2.0 * config.t / denom) * (expm @ z_unlab)
    elif lam != 0.0:
        raise BatchTooSmall("lambda > 0 requires at least two unlabeled embeddings")

    total = l_pos + l_unlab + lam * l_reg
    grads = {
        "mu": g_mu,
        "alpha": g_alpha,
        "m": g_m,
        "z_pos": g_zp,
        "z_unlab": g_zu,
    }
    return LossBreakdown(l_pos=l_pos, l_unlab=l_unlab, l_reg=l_reg, total=total, grads=grads)


def total_loss_euclidean(v_pos, v_unlab, proto, config: LossConfig, rho: float, alpha: float) -> LossBreakdown:
    """Euclidean-geometry counterpart used by the geometry ablation.

    Embeddings are unnormalized; the score is s(v) = -||v - p||^2 and the
    margin acts as a squared radius: logit = alpha * (rho - ||v - p||^2).
    Alignment pulls positives onto the prototype, the weighted neutral BCE
    plays the same role as in the angular model, and the dispersion term is
    not defined for this geometry (lambda must be 0). Gradient keys match
    the angular breakdown, with ``mu`` holding d/d(proto) and ``m`` holding
    d/d(rho).
    """
    v_pos = np.asarray(v_pos, dtype=np.float64)
    v_unlab = np.asarray(v_unlab, dtype=np.float64)
    proto = np.asarray(proto, dtype=np.float64)
    if v_pos.ndim != 2 or v_pos.shape[0] == 0:
        raise EmptyBatch("positive batch is empty")
    if v_unlab.ndim != 2 or v_unlab.shape[0] == 0:
        raise EmptyBatch("unlabeled batch is empty")
    if config.lambda_ != 0.0:
        raise InvalidSpec("dispersion regularizer is undefined in euclidean geometry")
    n_p, n_u = v_pos.shape[0], v_unlab.shape[0]

    diff_p = v_pos - proto
    sq_p = np.sum(diff_p * diff_p, axis=1)
    l_pos = _ordered_sum(sq_p) / n_p
    g_vp = (2.0 / n_p) * diff_p
    g_proto = -(2.0 / n_p) * diff_p.sum(axis=0)

    diff_u = v_unlab - proto
    sq_u = np.sum(diff_u * diff_u, axis=1)
    logit = alpha * (rho - sq_u)
    w = sigmoid(logit)
    nb = neutral_bce(logit)
    nbp = 0.5 * np.tanh(0.5 * logit)
    l_unlab = _ordered_sum(w * nb) / n_u

    g_l = w * nbp
    if config.weight_gradient == "flowing":
        g_l = g_l + nb * w * (1.0 - w)
    g_l /= n_u
    # d(logit)/d(v_j) = -2 alpha (v_j - p); d/d(p) = +2 alpha (v_j - p).
    g_vu = (-2.0 * alpha) * g_l[:, None] * diff_u
    g_proto = g_proto + (2.0 * alpha) * (diff_u.T @ g_l)
    g_alpha = float(np.sum(g_l * (rho - sq_u)))
    g_rho = float(np.sum(g_l)) * alpha

    total = l_pos + l_unlab
    grads = {
        "mu": g_proto,
        "alpha": g_alpha,
        "m": g_rho,
        "z_pos": g_vp,
        "z_unlab": g_vu,
    }
    return LossBreakdown(l_pos=l_pos, l_unlab=l_unlab, l_reg=0.0, total=total, grads=grads)
