"""Parties and training procedures for vertical federated learning.

A :class:`Server` holds the labels of the aligned rows and the classifier;
each :class:`Client` holds its own feature columns and a representation
extractor. The run functions orchestrate them, routing every cross-party
transfer through a :class:`~vflshot.comm.Channel` so the ledger is exact.

Procedures:

* :func:`run_oneshot` - one gradient download, local SSL, one re-upload.
* :func:`run_fewshot` - adds server-side pseudo-label gating for the
  clients' unaligned rows (two clients).
* :func:`run_vanilla` - per-minibatch split training; ``q > 1`` gives the
  FedBCD variant with stale partial gradients.
* :func:`run_fewshot_finetune` - few-shot followed by vanilla rounds.
"""
import hashlib
import json
import time
from contextlib import contextmanager
from typing import Dict, List, Optional

import numpy as np

from . import comm, nn
from .cluster import gradients_to_templabels
from .config import ExperimentConfig
from .data import VflSplit
from .metrics import RunReport, accuracy, auc, comm_summary
from .ssl import AugmentConfig, LocalModel, SslConfig, local_ssl_train

# Stream tags for deriving independent per-party generators from one root seed.
_SERVER_INIT, _CLIENT_INIT, _CLIENT_SSL, _KMEANS, _BATCHES, _EXPAND, _SERVER_TRAIN, _HEAD = range(1, 9)


def derive_rng(seed, *tags):
    return np.random.default_rng(np.random.SeedSequence([int(seed), *tags]))


def derive_seed(seed, *tags):
    return int(np.random.SeedSequence([int(seed), *tags]).generate_state(1)[0])


# --- server-side estimation and gating ------------------------------------


def sdpa_weights(h_query, h_keys):
    """Row-softmax of ``h_query @ h_keys.T / sqrt(d)``."""
    h_query = np.asarray(h_query, dtype=np.float64)
    h_keys = np.asarray(h_keys, dtype=np.float64)
    if h_query.ndim != 2 or h_keys.ndim != 2 or h_query.shape[1] != h_keys.shape[1]:
        raise ValueError("query and key representations must share their width")
    if h_keys.shape[0] == 0:
        raise ValueError("no aligned representations to attend over")
    scores = h_query @ h_keys.T / np.sqrt(h_query.shape[1])
    return nn.softmax(scores)


def sdpa_estimate(h_unaligned, h_overlap_own, h_overlap_other):
    """Estimate the other party's representations of unaligned rows.

    Each estimate is an attention-weighted average of the other party's
    aligned representations, weighted by similarity between the unaligned
    row and the aligned rows in the owner's representation space.
    """
    h_overlap_other = np.asarray(h_overlap_other, dtype=np.float64)
    if np.shape(h_overlap_own)[0] != h_overlap_other.shape[0]:
        raise ValueError("aligned representation sets differ in row count")
    return sdpa_weights(h_unaligned, h_overlap_own) @ h_overlap_other


def inclusion_probs(pred_local, p_local, pred_joint, p_joint, t):
    """Probability of giving each unaligned row a pseudo label.

    Non-zero only where the local-only and the joint prediction agree and
    both confidences strictly exceed ``t``; the value is then the joint
    confidence.
    """
    if not 0.0 < t < 1.0:
        raise ValueError("threshold t must lie in (0, 1)")
    pred_local = np.asarray(pred_local)
    pred_joint = np.asarray(pred_joint)
    p_local = np.asarray(p_local, dtype=np.float64)
    p_joint = np.asarray(p_joint, dtype=np.float64)
    gate = (pred_local == pred_joint) & (p_local > t) & (p_joint > t)
    return np.where(gate, p_joint, 0.0)


# --- parties ---------------------------------------------------------------


class Client:
    """One feature-holding party. Never sees labels or other parties' data."""

    def __init__(self, k, x_overlap, x_unaligned, cfg: ExperimentConfig):
        self.k = k
        self.x_overlap = np.array(x_overlap, dtype=np.float64)
        self.x_unaligned = np.array(x_unaligned, dtype=np.float64)
        self.cfg = cfg
        dim = self.x_overlap.shape[1]
        specs = nn.mlp_specs([dim, cfg.extractor_hidden, cfg.rep_dim])
        self.extractor = nn.mlp_init(specs, derive_seed(cfg.seed, _CLIENT_INIT, k))
        self.head: Optional[nn.ModelParams] = None
        self.temp_labels: Optional[np.ndarray] = None
        self.expanded_rows: Optional[np.ndarray] = None
        self.expanded_labels: Optional[np.ndarray] = None
        self.rng = derive_rng(cfg.seed, _CLIENT_SSL, k)
        local = np.vstack([self.x_overlap, self.x_unaligned])
        self.aug = AugmentConfig.from_data(local, r_m=cfg.r_m, sigma=cfg.sigma,
                                           mask_semantics=cfg.mask_semantics,
                                           shared_mask=cfg.shared_mask)
        self.ssl_cfg = SslConfig(cfg.lambda_u, cfg.tau_fm, cfg.client_epochs, cfg.batch_size,
                                 cfg.client_lr)
        self.ssl_history: List = []

    @property
    def rep_dim(self):
        return self.extractor.out_dim

    def extract(self, which="overlap", rows=None):
        x = {"overlap": self.x_overlap, "unaligned": self.x_unaligned}[which]
        if rows is not None:
            x = x[rows]
        return nn.forward(self.extractor, x).output

    def represent(self, x):
        return nn.forward(self.extractor, x).output

    @property
    def local_model(self):
        return LocalModel(self.extractor, self.head)

    def _set_local_model(self, model: LocalModel):
        self.extractor, self.head = model.extractor, model.head

    def receive_gradients(self, grads, num_classes):
        """Cluster the partial gradients into temporary labels, then run local SSL."""
        grads = np.asarray(grads, dtype=np.float64)
        if grads.shape != (self.x_overlap.shape[0], self.rep_dim):
            raise ValueError(f"client {self.k}: gradient shape {grads.shape} does not match")
        self.temp_labels = gradients_to_templabels(
            grads, num_classes, seed=derive_seed(self.cfg.seed, _KMEANS, self.k),
            normalize=self.cfg.normalize_grads, restarts=self.cfg.kmeans_restarts)
        head_specs = [nn.LayerSpec(self.rep_dim, num_classes, nn.IDENTITY)]
        self.head = nn.mlp_init(head_specs, derive_seed(self.cfg.seed, _HEAD, self.k))
        model = local_ssl_train(self.local_model, self.x_overlap, self.temp_labels,
                                self.x_unaligned, self.ssl_cfg, self.aug, self.rng,
                                history=self.ssl_history)
        self._set_local_model(model)

    def expand_and_ssl(self, p_hat):
        """Sample unaligned rows with probability ``p_hat``, pseudo-label them, rerun SSL."""
        p_hat = np.asarray(p_hat, dtype=np.float64)
        if p_hat.shape != (self.x_unaligned.shape[0],):
            raise ValueError(f"client {self.k}: expected {self.x_unaligned.shape[0]} probabilities")
        if self.head is None:
            raise RuntimeError("expansion requires a trained local model")
        expand_rng = derive_rng(self.cfg.seed, _EXPAND, self.k)
        chosen = expand_rng.random(p_hat.shape[0]) < p_hat
        x_uc = self.x_unaligned[chosen]
        y_uc = np.argmax(self.local_model.predict_proba(x_uc), axis=1) if len(x_uc) else \
            np.empty(0, dtype=np.intp)
        self.expanded_rows = np.flatnonzero(chosen)
        self.expanded_labels = y_uc
        x_lab = np.vstack([self.x_overlap, x_uc])
        y_lab = np.concatenate([self.temp_labels, y_uc]).astype(np.intp)
        model = local_ssl_train(self.local_model, x_lab, y_lab, self.x_unaligned[~chosen],
                                self.ssl_cfg, self.aug, self.rng, history=self.ssl_history)
        self._set_local_model(model)
        return chosen

    def local_update(self, rows, rep_grad, q, lr):
        """``q`` SGD steps on the extractor using one (possibly stale) gradient w.r.t. its output."""
        x = self.x_overlap[rows]
        for _ in range(q):
            trace = nn.forward(self.extractor, x)
            grads, _ = nn.backward(self.extractor, trace, rep_grad)
            self.extractor = nn.sgd_step(self.extractor, grads, lr)


class Server:
    """Label-holding party: classifier, auxiliary classifiers and gating."""

    def __init__(self, y_overlap, rep_dims, cfg: ExperimentConfig, num_classes=None):
        self.y_overlap = np.array(y_overlap, dtype=np.intp)
        distinct = len(np.unique(self.y_overlap))
        self.num_classes = int(num_classes) if num_classes is not None else distinct
        if self.num_classes < distinct:
            raise ValueError("num_classes is smaller than the number of observed classes")
        self.rep_dims = list(rep_dims)
        self.cfg = cfg
        self.init_seed = derive_seed(cfg.seed, _SERVER_INIT)
        self.classifier = self.fresh_classifier(sum(self.rep_dims))
        self.aux: Dict[int, nn.ModelParams] = {}
        self.joint: Optional[nn.ModelParams] = None
        self.reps: Dict[int, np.ndarray] = {}
        self.train_rng = derive_rng(cfg.seed, _SERVER_TRAIN)

    def fresh_classifier(self, in_dim, salt=0):
        hidden = [self.cfg.server_hidden] if self.cfg.server_hidden else []
        specs = nn.mlp_specs([in_dim, *hidden, self.num_classes])
        return nn.mlp_init(specs, self.init_seed + salt)

    def _concat(self, reps):
        if len(reps) != len(self.rep_dims):
            raise ValueError(f"expected representations from {len(self.rep_dims)} clients")
        n = reps[0].shape[0]
        for k, (h, d) in enumerate(zip(reps, self.rep_dims)):
            if h.shape != (n, d):
                raise ValueError(f"client {k}: representation shape {h.shape}, expected ({n}, {d})")
        return np.hstack(reps)

    def _slice(self, grad_h):
        edges = np.cumsum([0] + self.rep_dims)
        return [grad_h[:, edges[k]:edges[k + 1]] for k in range(len(self.rep_dims))]

    def _fit(self, params, x, epochs):
        return nn.train_supervised(params, x, self.y_overlap, epochs, self.cfg.batch_size,
                                   self.cfg.server_lr, self.train_rng)

    def partial_grads(self, reps):
        """Gradients of the classifier loss w.r.t. each client's representations."""
        h = self._concat(reps)
        if h.shape[0] != self.y_overlap.shape[0]:
            raise ValueError("representation rows do not match the aligned label count")
        if self.cfg.server_grad_warmup_epochs:
            self.classifier = self._fit(self.classifier, h, self.cfg.server_grad_warmup_epochs)
        trace = nn.forward(self.classifier, h)
        _, dlogits = nn.softmax_cross_entropy(trace.output, self.y_overlap)
        _, grad_h = nn.backward(self.classifier, trace, dlogits)
        return self._slice(grad_h)

    def train_classifier(self, reps, epochs, init: Optional[nn.ModelParams] = None):
        h = self._concat(reps)
        self.reps = {k: r for k, r in enumerate(reps)}
        start = self.classifier if init is None else init
        self.classifier = self._fit(start, h, epochs)
        return self.classifier

    def train_aux(self, reps):
        """Per-client auxiliary classifiers and the joint classifier, on aligned rows."""
        self.reps = {k: r for k, r in enumerate(reps)}
        h = self._concat(reps)
        epochs = self.cfg.server_epochs
        self.aux = {
            k: self._fit(self.fresh_classifier(r.shape[1], salt=k + 1), r, epochs)
            for k, r in enumerate(reps)
        }
        self.joint = self._fit(self.fresh_classifier(h.shape[1]), h, epochs)
        return self.aux, self.joint

    def infer_prob(self, k, h_unaligned, t):
        """Inclusion probabilities for client ``k``'s unaligned rows (two clients)."""
        if self.joint is None or k not in self.aux:
            raise RuntimeError("auxiliary classifiers have not been trained")
        if len(self.rep_dims) != 2:
            raise NotImplementedError("representation estimation is implemented for two clients")
        other = 1 - k
        h_unaligned = np.asarray(h_unaligned, dtype=np.float64)
        estimate = sdpa_estimate(h_unaligned, self.reps[k], self.reps[other])
        p_loc = nn.predict_proba(self.aux[k], h_unaligned)
        parts = [None, None]
        parts[k], parts[other] = h_unaligned, estimate
        p_joint = nn.predict_proba(self.joint, np.hstack(parts))
        return inclusion_probs(p_loc.argmax(axis=1), p_loc.max(axis=1),
                               p_joint.argmax(axis=1), p_joint.max(axis=1), t)

    def vfl_step(self, reps, rows, q):
        """One communication round: partial gradients, then ``q`` classifier updates."""
        h = self._concat(reps)
        y = self.y_overlap[rows]
        trace = nn.forward(self.classifier, h)
        _, dlogits = nn.softmax_cross_entropy(trace.output, y)
        grads, grad_h = nn.backward(self.classifier, trace, dlogits)
        self.classifier = nn.sgd_step(self.classifier, grads, self.cfg.server_lr)
        for _ in range(q - 1):
            trace = nn.forward(self.classifier, h)
            _, dlogits = nn.softmax_cross_entropy(trace.output, y)
            grads, _ = nn.backward(self.classifier, trace, dlogits)
            self.classifier = nn.sgd_step(self.classifier, grads, self.cfg.server_lr)
        return self._slice(grad_h)

    def predict_proba(self, reps):
        return nn.predict_proba(self.classifier, self._concat(reps))


# --- orchestration ---------------------------------------------------------


class Session:
    """Parties, channel and bookkeeping for one run."""

    def __init__(self, split: VflSplit, cfg: ExperimentConfig):
        self.split = split
        self.cfg = cfg
        self.ledger = comm.CommLedger(cfg.bytes_per_scalar)
        self.channel = comm.Channel(self.ledger)
        self.clients = [Client(k, c.x_overlap, c.x_unaligned, cfg) for k, c in enumerate(split.clients)]
        self.server = Server(split.y_overlap, [c.rep_dim for c in self.clients], cfg,
                             num_classes=split.num_classes)
        self.timings: Dict[str, float] = {}
        self.curve: List[Dict] = []
        self.notes: List[str] = []

    @contextmanager
    def stage(self, name):
        start = time.perf_counter()
        yield
        self.timings[name] = self.timings.get(name, 0.0) + time.perf_counter() - start

    def evaluate(self):
        """Held-out metrics of the current server classifier and extractors."""
        split = self.split
        if split.y_test.size == 0:
            return {"accuracy": None, "auc": None}
        reps = [c.represent(d.x_test) for c, d in zip(self.clients, split.clients)]
        probs = self.server.predict_proba(reps)
        out = {"accuracy": accuracy(probs.argmax(axis=1), split.y_test), "auc": None}
        if probs.shape[1] == 2 and len(np.unique(split.y_test)) == 2:
            out["auc"] = auc(probs[:, 1], split.y_test)
        return out

    def report(self, method):
        cfg = self.cfg.to_dict()
        digest = hashlib.sha1(json.dumps(cfg, sort_keys=True).encode()).hexdigest()[:8]
        return RunReport(
            run_id=f"{method}-s{self.cfg.seed}-{digest}",
            method=method,
            seed=self.cfg.seed,
            config=cfg,
            metrics=self.evaluate(),
            comm=comm_summary(self.ledger),
            timings=dict(self.timings),
            curve=list(self.curve),
            notes=list(self.notes),
        )


def _upload_overlap(s: Session, stage):
    return [s.channel.upload(k, stage, (comm.REPS_OVERLAP, c.extract("overlap")))
            for k, c in enumerate(s.clients)]


def _oneshot_local_phase(s: Session):
    """Steps 1-4: upload reps, download gradients and C, cluster, local SSL."""
    with s.stage("extract"):
        reps = _upload_overlap(s, "initial_reps")
    with s.stage("server_grads"):
        grads = s.server.partial_grads(reps)
    received = [s.channel.download(k, "partial_grads", (comm.PARTIAL_GRADS, g),
                                   (comm.CLASS_COUNT, s.server.num_classes))
                for k, g in enumerate(grads)]
    with s.stage("local_ssl"):
        for c, (g, num_classes) in zip(s.clients, received):
            c.receive_gradients(g, int(num_classes))


def _train_final_classifier(s: Session, reps, init=None):
    with s.stage("server_train"):
        s.server.train_classifier(reps, s.cfg.server_epochs, init=init)


def run_oneshot(split: VflSplit, cfg: ExperimentConfig, session: Optional[Session] = None):
    s = session or Session(split, cfg)
    _oneshot_local_phase(s)
    with s.stage("extract"):
        reps = _upload_overlap(s, "final_reps")
    _train_final_classifier(s, reps)
    return s.report("oneshot"), s


def run_fewshot(split: VflSplit, cfg: ExperimentConfig, session: Optional[Session] = None):
    if len(split.clients) != 2:
        raise NotImplementedError("few-shot representation estimation supports two clients")
    s = session or Session(split, cfg)
    _oneshot_local_phase(s)
    with s.stage("extract"):
        uploaded = [s.channel.upload(k, "ssl_reps",
                                     (comm.REPS_OVERLAP, c.extract("overlap")),
                                     (comm.REPS_UNALIGNED, c.extract("unaligned")))
                    for k, c in enumerate(s.clients)]
    h_o = [u[0] for u in uploaded]
    h_u = [u[1] for u in uploaded]
    with s.stage("server_aux"):
        s.server.train_aux(h_o)
        p_hat = [s.server.infer_prob(k, h_u[k], cfg.t) for k in range(2)]
    for k, c in enumerate(s.clients):
        probs = s.channel.download(k, "inclusion_probs", (comm.INCLUSION_PROBS, p_hat[k]))
        with s.stage("local_ssl"):
            chosen = c.expand_and_ssl(probs)
        s.notes.append(f"client{k}: expanded labeled set by {int(chosen.sum())} of {chosen.size} rows "
                       f"(expected {float(np.sum(probs)):.1f})")
    with s.stage("extract"):
        reps = _upload_overlap(s, "final_reps")
    init = s.server.joint if cfg.reuse_joint_classifier else None
    _train_final_classifier(s, reps, init=init)
    return s.report("fewshot"), s


def _batch_stream(n, batch_size, rng):
    while True:
        order = rng.permutation(n)
        for start in range(0, n, batch_size):
            yield order[start:start + batch_size]


def run_vanilla(split: VflSplit, cfg: ExperimentConfig, q=1, rounds=None,
                session: Optional[Session] = None, method=None, patience=None):
    """Split training on the aligned rows; each round exchanges one minibatch.

    Per round every client uploads its representations of the batch, the
    server updates the classifier and returns the partial gradients, and the
    client takes ``q`` extractor steps with that gradient (stale after the
    first). Pass an existing ``session`` to warm-start from its parties.

    With ``patience > 0`` the held-out ``cfg.monitor`` metric is evaluated
    every round and training stops once it has not improved for ``patience``
    consecutive rounds.
    """
    if q < 1:
        raise ValueError("q must be >= 1")
    rounds = cfg.rounds if rounds is None else rounds
    patience = cfg.patience if patience is None else patience
    if rounds < 1:
        raise ValueError("rounds must be >= 1")
    s = session or Session(split, cfg)
    if method is None:
        method = "vanilla" if q == 1 else "fedbcd"
    batches = _batch_stream(split.overlap_size, cfg.batch_size, derive_rng(cfg.seed, _BATCHES))
    base_messages = max(s.ledger.comm_times().values(), default=0)
    best, since_best = -np.inf, 0
    for r in range(1, rounds + 1):
        rows = next(batches)
        with s.stage("round_compute"):
            reps = [s.channel.upload(k, f"round{r}", (comm.REPS_OVERLAP, c.extract("overlap", rows)))
                    for k, c in enumerate(s.clients)]
            grads = s.server.vfl_step(reps, rows, q)
            for k, c in enumerate(s.clients):
                g = s.channel.download(k, f"round{r}", (comm.PARTIAL_GRADS, grads[k]))
                c.local_update(rows, g, q, cfg.client_lr)
        stop = False
        if patience or r % cfg.eval_every == 0 or r == rounds:
            with s.stage("evaluate"):
                point = {"round": r, "comm_times": base_messages + 2 * r}
                point.update(s.evaluate())
            if r % cfg.eval_every == 0 or r == rounds:
                s.curve.append(point)
            if patience:
                value = point[cfg.monitor]
                if value is not None and value > best:
                    best, since_best = value, 0
                else:
                    since_best += 1
                stop = since_best >= patience
        if stop:
            if not s.curve or s.curve[-1] is not point:
                s.curve.append(point)
            s.notes.append(f"stopped after {r} rounds: no {cfg.monitor} improvement in {patience} rounds")
            break
    return s.report(method), s


def run_fewshot_finetune(split: VflSplit, cfg: ExperimentConfig):
    _, s = run_fewshot(split, cfg)
    return run_vanilla(split, cfg, q=1, rounds=cfg.finetune_rounds, session=s,
                       method="fewshot_finetune")


def run_method(split: VflSplit, cfg: ExperimentConfig):
    if cfg.method == "oneshot":
        return run_oneshot(split, cfg)
    if cfg.method == "fewshot":
        return run_fewshot(split, cfg)
    if cfg.method == "vanilla":
        return run_vanilla(split, cfg, q=1)
    if cfg.method == "fedbcd":
        return run_vanilla(split, cfg, q=cfg.q)
    if cfg.method == "fewshot_finetune":
        return run_fewshot_finetune(split, cfg)
    raise ValueError(f"unknown method {cfg.method!r}")
