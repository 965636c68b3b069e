"""FixMatch adapted to tabular features.

Weak view: each feature is independently replaced by the local feature mean
with some probability. Strong view: the weak view plus Gaussian noise. The
client objective is ``l_s + lambda_u * l_u`` where ``l_s`` is cross-entropy
on weakly augmented labeled rows and ``l_u`` is cross-entropy of the strong
view against the weak view's confident argmax.
"""
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import nn

MASKED_FRACTION = "masked_fraction"
KEEP_FRACTION = "keep_fraction"


@dataclass
class AugmentConfig:
    r_m: float
    sigma: float
    feature_means: np.ndarray
    mask_semantics: str = MASKED_FRACTION
    shared_mask: bool = True

    def __post_init__(self):
        self.feature_means = np.asarray(self.feature_means, dtype=np.float64)
        if not 0.0 <= self.r_m <= 1.0:
            raise ValueError(f"r_m must lie in [0, 1], got {self.r_m}")
        if self.sigma < 0:
            raise ValueError("sigma must be >= 0")
        if self.mask_semantics not in (MASKED_FRACTION, KEEP_FRACTION):
            raise ValueError(f"unknown mask semantics {self.mask_semantics!r}")

    @property
    def keep_prob(self):
        """Probability that a feature survives (is not replaced by its mean)."""
        return 1.0 - self.r_m if self.mask_semantics == MASKED_FRACTION else self.r_m

    @classmethod
    def from_data(cls, x, r_m=0.2, sigma=0.1, **kw):
        return cls(r_m, sigma, np.asarray(x, dtype=np.float64).mean(axis=0), **kw)


@dataclass
class SslConfig:
    lambda_u: float = 1.0
    tau: float = 0.95
    epochs: int = 20
    batch_size: int = 32
    lr: float = 0.01

    def __post_init__(self):
        if self.lambda_u < 0:
            raise ValueError("lambda_u must be >= 0")
        if not 0.0 < self.tau <= 1.0:
            raise ValueError("tau must lie in (0, 1]")
        if self.epochs < 0 or self.batch_size < 1 or self.lr <= 0:
            raise ValueError("epochs >= 0, batch_size >= 1 and lr > 0 are required")


def _check_width(x, cfg):
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != cfg.feature_means.shape[0]:
        raise ValueError(
            f"row has {x.shape[-1]} features but the mean vector has {cfg.feature_means.shape[0]}"
        )
    return x


def sample_mask(shape, cfg: AugmentConfig, rng):
    """Boolean keep-mask (True = keep the original value)."""
    return rng.random(shape) < cfg.keep_prob


def apply_mask(x, keep, cfg: AugmentConfig):
    return np.where(keep, x, cfg.feature_means)


def weak_augment(x, cfg: AugmentConfig, rng):
    x = _check_width(x, cfg)
    return apply_mask(x, sample_mask(x.shape, cfg, rng), cfg)


def strong_augment(x, cfg: AugmentConfig, rng):
    x = _check_width(x, cfg)
    return weak_augment(x, cfg, rng) + cfg.sigma * rng.standard_normal(x.shape)


def paired_views(x, cfg: AugmentConfig, rng):
    """(weak, strong) views of the same rows.

    With ``shared_mask`` both views use one mask, so ``strong - weak`` is
    exactly the noise term.
    """
    x = _check_width(x, cfg)
    keep = sample_mask(x.shape, cfg, rng)
    weak = apply_mask(x, keep, cfg)
    if not cfg.shared_mask:
        keep = sample_mask(x.shape, cfg, rng)
    strong = apply_mask(x, keep, cfg) + cfg.sigma * rng.standard_normal(x.shape)
    return weak, strong


@dataclass
class LocalModel:
    """Client extractor plus a local classification head."""

    extractor: nn.ModelParams
    head: nn.ModelParams

    def joined(self):
        return nn.ModelParams(self.extractor.layers + self.head.layers)

    @classmethod
    def split(cls, params: nn.ModelParams, n_extractor_layers: int):
        return cls(nn.ModelParams(params.layers[:n_extractor_layers]),
                   nn.ModelParams(params.layers[n_extractor_layers:]))

    def copy(self):
        return LocalModel(self.extractor.copy(), self.head.copy())

    def represent(self, x):
        return nn.forward(self.extractor, x).output

    def predict_proba(self, x):
        return nn.predict_proba(self.joined(), x)


@dataclass
class SslStepInfo:
    total: float
    supervised: float
    unsupervised: float
    n_confident: int
    n_unlabeled: int
    confident_mask: Optional[np.ndarray] = None


def ssl_step(model: LocalModel, x_lab, y_lab, x_unl, cfg: SslConfig, aug: AugmentConfig, rng):
    """One SGD step on ``l_s + lambda_u * l_u``. Returns ``(model, SslStepInfo)``."""
    x_lab = _check_width(x_lab, aug)
    y_lab = np.asarray(y_lab, dtype=np.intp)
    if x_lab.shape[0] == 0:
        raise ValueError("labeled batch is empty")
    if y_lab.shape != (x_lab.shape[0],):
        raise ValueError("one label per labeled row required")
    params = model.joined()
    n_ext = len(model.extractor.layers)

    weak_lab = weak_augment(x_lab, aug, rng)
    n_unl = 0 if x_unl is None else len(x_unl)
    confident = np.zeros(0, dtype=bool)
    strong_conf = np.empty((0, x_lab.shape[1]))
    pseudo = np.empty(0, dtype=np.intp)
    if n_unl:
        weak_u, strong_u = paired_views(_check_width(x_unl, aug), aug, rng)
        probs = nn.predict_proba(params, weak_u)
        confident = probs.max(axis=1) >= cfg.tau
        pseudo = np.argmax(probs, axis=1)[confident]
        strong_conf = strong_u[confident]

    n_lab, n_conf = x_lab.shape[0], int(confident.sum())
    # With lambda_u = 0 the unlabeled rows are left out of the backward batch
    # so the update is bit-identical to a purely supervised step.
    in_batch = n_conf if cfg.lambda_u else 0
    batch = np.vstack([weak_lab, strong_conf[:in_batch]])
    trace = nn.forward(params, batch)
    logits = trace.output
    l_s, d_s = nn.softmax_cross_entropy(logits[:n_lab], y_lab)
    dlogits = np.zeros_like(logits)
    dlogits[:n_lab] = d_s
    l_u = 0.0
    if in_batch:
        l_u, d_u = nn.softmax_cross_entropy(logits[n_lab:], pseudo)
        dlogits[n_lab:] = cfg.lambda_u * d_u
    elif n_conf:
        l_u, _ = nn.softmax_cross_entropy(nn.forward(params, strong_conf).output, pseudo)
    grads, _ = nn.backward(params, trace, dlogits)
    params = nn.sgd_step(params, grads, cfg.lr)
    info = SslStepInfo(l_s + cfg.lambda_u * l_u, l_s, l_u, n_conf, n_unl, confident)
    return LocalModel.split(params, n_ext), info


def _batches(n, batch_size, steps, rng):
    """``steps`` index batches over ``range(n)``, reshuffling at each wrap."""
    order = rng.permutation(n)
    pos = 0
    for _ in range(steps):
        if pos + batch_size > n and pos > 0:
            order = rng.permutation(n)
            pos = 0
        yield order[pos:pos + batch_size]
        pos += batch_size


def local_ssl_train(model: LocalModel, x_lab, y_lab, x_unl, cfg: SslConfig, aug: AugmentConfig,
                    rng, history=None):
    """Run ``cfg.epochs`` epochs of :func:`ssl_step`.

    An epoch is as many steps as the longer of the two streams needs to be
    covered once in batches of ``cfg.batch_size``; the shorter stream is
    cycled with a fresh shuffle on each pass.
    """
    x_lab = np.asarray(x_lab, dtype=np.float64)
    y_lab = np.asarray(y_lab, dtype=np.intp)
    x_unl = np.empty((0, x_lab.shape[1])) if x_unl is None else np.asarray(x_unl, dtype=np.float64)
    if y_lab.size and y_lab.max() >= model.head.out_dim:
        raise ValueError("label index exceeds local head width")
    n_l, n_u, b = x_lab.shape[0], x_unl.shape[0], cfg.batch_size
    steps = max(-(-n_l // b), -(-n_u // b))
    for _ in range(cfg.epochs):
        lab_batches = _batches(n_l, b, steps, rng)
        unl_batches = _batches(n_u, b, steps, rng) if n_u else None
        for _ in range(steps):
            li = next(lab_batches)
            xu = x_unl[next(unl_batches)] if unl_batches is not None else None
            model, info = ssl_step(model, x_lab[li], y_lab[li], xu, cfg, aug, rng)
            if history is not None:
                history.append(info)
    return model
