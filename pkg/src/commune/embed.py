"""Self-supervised node embeddings trained to reconstruct the log-flow matrix.

Two models share the same target ``ln(1 + W)`` and an Adam optimizer:

* a two-layer mean-aggregation GNN whose output passes through an affine+ReLU
  decoder and an inner product, so the reconstruction is symmetric;
* a pairwise MLP ("VNN") that scores the concatenation of two free node vectors.

Gradients are derived by hand and checked against finite differences in the tests.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import GraphError, TrainingError
from .graph import CommuteGraph, PropagationMatrix, log_transform, normalize_adjacency
from .pse import EmbeddingMatrix

logger = logging.getLogger(__name__)

GNN_KEYS = ("H0", "W1", "B1", "W2", "B2", "Wdec", "bdec")
VNN_KEYS = ("E", "W1", "b1", "W2", "b2", "w3", "b3")
SUBSAMPLE_ABOVE = 3000
SUBSAMPLE_FRACTION = 0.25


@dataclass
class TrainConfig:
    epochs: int = 500
    learning_rate: float = 0.01
    seed: int = 0
    log_loss: bool = True
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    # "decoder": Z = ReLU(H2 Wdec + bdec), the factor whose Gram matrix is the
    # reconstruction; "h2": output of the second propagation layer
    embedding_layer: str = "decoder"

    def __post_init__(self):
        if int(self.epochs) < 1:
            raise ValueError("epochs must be >= 1")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if self.embedding_layer not in ("decoder", "h2"):
            raise ValueError("embedding_layer must be 'decoder' or 'h2'")


@dataclass
class TrainResult:
    embedding: EmbeddingMatrix
    params: dict
    losses: list = field(default_factory=list)

    @property
    def final_loss(self):
        return self.losses[-1] if self.losses else float("nan")


def _relu(x):
    return np.maximum(x, 0.0)


def _glorot(rng, fan_in, fan_out, size):
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=size)


def reconstruction_loss(a_hat, target) -> float:
    """Mean squared error over all N^2 entries."""
    a_hat = np.asarray(a_hat, dtype=float)
    target = np.asarray(target, dtype=float)
    if a_hat.shape != target.shape:
        raise ValueError(f"shape mismatch: {a_hat.shape} vs {target.shape}")
    diff = target - a_hat
    return float(np.mean(diff * diff))


def target_matrix(g: CommuteGraph, log_loss=True) -> np.ndarray:
    return log_transform(g) if log_loss else g.dense()


# --------------------------------------------------------------------------- GNN


def init_gnn_params(n: int, d: int, seed: int = 0) -> dict:
    rng = np.random.default_rng(seed)
    return {
        "H0": rng.normal(0.0, 0.1, size=(n, d)),
        "W1": _glorot(rng, d, d, (d, d)),
        "B1": np.zeros(d),
        "W2": _glorot(rng, d, d, (d, d)),
        "B2": np.zeros(d),
        "Wdec": _glorot(rng, d, d, (d, d)),
        "bdec": np.zeros(d),
    }


def _check_gnn_shapes(params, n):
    d = params["H0"].shape[1]
    expected = {"H0": (n, d), "W1": (d, d), "B1": (d,), "W2": (d, d), "B2": (d,), "Wdec": (d, d), "bdec": (d,)}
    for k, shape in expected.items():
        if params[k].shape != shape:
            raise ValueError(f"{k} has shape {params[k].shape}, expected {shape}")


def _gnn_forward_cache(params, prop):
    a = prop.rows
    _check_gnn_shapes(params, a.shape[0])
    m1 = a @ params["H0"]
    p1 = m1 @ params["W1"] + params["B1"]
    h1 = _relu(p1)
    m2 = a @ h1
    p2 = m2 @ params["W2"] + params["B2"]
    h2 = _relu(p2)
    pz = h2 @ params["Wdec"] + params["bdec"]
    z = _relu(pz)
    a_hat = z @ z.T
    return dict(m1=m1, p1=p1, h1=h1, m2=m2, p2=p2, h2=h2, pz=pz, z=z, a_hat=a_hat)


def gnn_forward(params: dict, prop: PropagationMatrix):
    """Two propagation layers, then ``Z = ReLU(H2 Wdec + bdec)`` and ``A_hat = Z Z^T``.

    Returns ``(H2, A_hat)`` as arrays.
    """
    c = _gnn_forward_cache(params, prop)
    return c["h2"], c["a_hat"]


def gnn_loss(params, prop, target) -> float:
    _, a_hat = gnn_forward(params, prop)
    return reconstruction_loss(a_hat, target)


def _gnn_backward(params, prop, target, c):
    a = prop.rows
    n = a.shape[0]
    # dL/dA_hat is symmetric, so dL/dZ = (G + G^T) Z = 2 G Z
    g = (c["a_hat"] - target) * (2.0 / (n * n))
    dz = 2.0 * (g @ c["z"])
    dpz = dz * (c["pz"] > 0)
    grads = {"Wdec": c["h2"].T @ dpz, "bdec": dpz.sum(axis=0)}
    dh2 = dpz @ params["Wdec"].T
    dp2 = dh2 * (c["p2"] > 0)
    grads["W2"] = c["m2"].T @ dp2
    grads["B2"] = dp2.sum(axis=0)
    dh1 = a.T @ (dp2 @ params["W2"].T)
    dp1 = dh1 * (c["p1"] > 0)
    grads["W1"] = c["m1"].T @ dp1
    grads["B1"] = dp1.sum(axis=0)
    grads["H0"] = a.T @ (dp1 @ params["W1"].T)
    return grads


def gnn_gradients(params: dict, prop: PropagationMatrix, target) -> dict:
    """Exact gradients of the reconstruction loss for every GNN parameter, H0 included."""
    c = _gnn_forward_cache(params, prop)
    return _gnn_backward(params, prop, np.asarray(target, dtype=float), c)


# --------------------------------------------------------------------------- VNN


def init_vnn_params(n: int, d: int, hidden: int | None = None, seed: int = 0) -> dict:
    h = 2 * d if hidden is None else hidden
    if h < 1:
        raise ValueError("hidden width must be >= 1")
    rng = np.random.default_rng(seed)
    return {
        "E": rng.normal(0.0, 0.1, size=(n, d)),
        "W1": _glorot(rng, 2 * d, h, (2 * d, h)),
        "b1": np.zeros(h),
        "W2": _glorot(rng, h, h, (h, h)),
        "b2": np.zeros(h),
        "w3": _glorot(rng, h, 1, (h,)),
        "b3": np.zeros(()),
    }


def _row_blocks(n, h, budget=4_000_000):
    step = max(1, budget // max(1, n * h))
    for start in range(0, n, step):
        yield start, min(n, start + step)


def vnn_predict(params: dict) -> np.ndarray:
    """``A_hat[i, j] = MLP([e_i, e_j])`` for every ordered pair."""
    e = params["E"]
    n, d = e.shape
    h = params["b1"].shape[0]
    left = e @ params["W1"][:d]
    right = e @ params["W1"][d:] + params["b1"]
    out = np.empty((n, n))
    for s, t in _row_blocks(n, h):
        h1 = _relu(left[s:t, None, :] + right[None, :, :])
        h2 = _relu(h1 @ params["W2"] + params["b2"])
        out[s:t] = h2 @ params["w3"] + params["b3"]
    return out


def vnn_loss_and_gradients(params: dict, target, mask=None):
    """Mean squared error over ordered pairs and its gradients.

    ``mask`` (boolean N x N) restricts the loss to a subset of pairs; the mean is
    then taken over the selected pairs.
    """
    target = np.asarray(target, dtype=float)
    e = params["E"]
    n, d = e.shape
    h = params["b1"].shape[0]
    w1a, w1b = params["W1"][:d], params["W1"][d:]
    left = e @ w1a
    right = e @ w1b + params["b1"]
    count = n * n if mask is None else int(mask.sum())
    if count == 0:
        raise ValueError("pair mask selects nothing")
    scale = 2.0 / count

    grads = {k: np.zeros_like(v) for k, v in params.items()}
    d_left = np.zeros((n, h))
    d_right = np.zeros((n, h))
    sq = 0.0
    for s, t in _row_blocks(n, h):
        p1 = left[s:t, None, :] + right[None, :, :]
        h1 = _relu(p1)
        p2 = h1 @ params["W2"] + params["b2"]
        h2 = _relu(p2)
        out = h2 @ params["w3"] + params["b3"]
        r = out - target[s:t]
        if mask is not None:
            r = r * mask[s:t]
        sq += float(np.sum(r * r))
        dout = r * scale
        grads["w3"] += np.einsum("ijh,ij->h", h2, dout)
        grads["b3"] += dout.sum()
        dp2 = (dout[:, :, None] * params["w3"]) * (p2 > 0)
        grads["W2"] += np.einsum("ijh,ijk->hk", h1, dp2)
        grads["b2"] += dp2.sum(axis=(0, 1))
        dp1 = (dp2 @ params["W2"].T) * (p1 > 0)
        d_left[s:t] = dp1.sum(axis=1)
        d_right += dp1.sum(axis=0)
    grads["W1"] = np.vstack([e.T @ d_left, e.T @ d_right])
    grads["b1"] = d_right.sum(axis=0)
    grads["E"] = d_left @ w1a.T + d_right @ w1b.T
    return sq / count, grads


def vnn_loss(params, target, mask=None) -> float:
    pred = vnn_predict(params)
    r = np.asarray(target, dtype=float) - pred
    if mask is None:
        return float(np.mean(r * r))
    return float(np.sum((r * r)[mask]) / mask.sum())


# --------------------------------------------------------------------------- training


class Adam:
    def __init__(self, params, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, params, grads):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1**self.t
        c2 = 1.0 - b2**self.t
        for k, g in grads.items():
            self.m[k] = b1 * self.m[k] + (1 - b1) * g
            self.v[k] = b2 * self.v[k] + (1 - b2) * g * g
            params[k] = params[k] - self.lr * (self.m[k] / c1) / (np.sqrt(self.v[k] / c2) + self.eps)


def _check_finite(loss, grads, epoch, losses):
    if not np.isfinite(loss) or not all(np.isfinite(g).all() for g in grads.values()):
        raise TrainingError("non-finite loss or gradient, training aborted", epoch, losses)


def gnn_embedding(params, prop, layer="decoder"):
    c = _gnn_forward_cache(params, prop)
    return c["z"] if layer == "decoder" else c["h2"]


def train_gnn(g: CommuteGraph, d: int, cfg: TrainConfig | None = None) -> TrainResult:
    """Full-batch Adam on the GNN reconstruction loss.

    The returned embedding is the decoder factor ``Z`` by default. ``A_hat = Z Z^T``
    fixes ``Z`` up to a rotation, which K-means cannot see, whereas ``H2`` is only
    fixed up to the invertible map ``Wdec``; directions of ``H2`` the decoder
    discards drift freely and swamp the community signal. ``embedding_layer="h2"``
    returns the second-layer output instead.
    """
    cfg = cfg or TrainConfig()
    if d < 2:
        raise GraphError("embedding dimension must be >= 2")
    prop = normalize_adjacency(g)
    target = target_matrix(g, cfg.log_loss)
    params = init_gnn_params(g.n, d, cfg.seed)
    opt = Adam(params, cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.eps)
    losses = []
    for epoch in range(1, cfg.epochs + 1):
        c = _gnn_forward_cache(params, prop)
        loss = reconstruction_loss(c["a_hat"], target)
        grads = _gnn_backward(params, prop, target, c)
        losses.append(loss)
        _check_finite(loss, grads, epoch, losses)
        opt.step(params, grads)
        if epoch % 100 == 0:
            logger.debug("gnn epoch %d loss %.6g", epoch, loss)
    c = _gnn_forward_cache(params, prop)
    losses.append(reconstruction_loss(c["a_hat"], target))
    emb = c["z"] if cfg.embedding_layer == "decoder" else c["h2"]
    if not np.isfinite(emb).all():
        raise TrainingError("non-finite embedding after training", cfg.epochs, losses)
    return TrainResult(EmbeddingMatrix(emb, "gnn", g.node_ids), params, losses)


def train_vnn(g: CommuteGraph, d: int, cfg: TrainConfig | None = None, hidden: int | None = None) -> TrainResult:
    """Full-batch Adam on the pairwise-MLP loss; returns the learned node vectors.

    Graphs above 3000 nodes train on a fresh uniform 25% sample of pairs each epoch.
    """
    cfg = cfg or TrainConfig()
    if d < 2:
        raise GraphError("embedding dimension must be >= 2")
    target = target_matrix(g, cfg.log_loss)
    params = init_vnn_params(g.n, d, hidden, cfg.seed)
    opt = Adam(params, cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.eps)
    sample_rng = np.random.default_rng([cfg.seed, 1])
    subsample = g.n > SUBSAMPLE_ABOVE
    losses = []
    for epoch in range(1, cfg.epochs + 1):
        mask = sample_rng.random((g.n, g.n)) < SUBSAMPLE_FRACTION if subsample else None
        loss, grads = vnn_loss_and_gradients(params, target, mask)
        losses.append(loss)
        _check_finite(loss, grads, epoch, losses)
        opt.step(params, grads)
        if epoch % 100 == 0:
            logger.debug("vnn epoch %d loss %.6g", epoch, loss)
    losses.append(vnn_loss(params, target))
    return TrainResult(EmbeddingMatrix(params["E"].copy(), "vnn", g.node_ids), params, losses)


# --------------------------------------------------------------------------- checkpoints


def save_checkpoint(path, method: str, result: TrainResult, cfg: TrainConfig, d: int):
    arrays = {f"param_{k}": np.asarray(v) for k, v in result.params.items()}
    meta = {
        "method": method,
        "d": d,
        "config": {k: getattr(cfg, k) for k in ("epochs", "learning_rate", "seed", "log_loss", "embedding_layer")},
        "final_loss": result.final_loss,
        "node_ids": list(result.embedding.node_ids or ()),
    }
    with open(path, "wb") as fh:
        np.savez(fh, losses=np.asarray(result.losses), meta=np.asarray(json.dumps(meta)), **arrays)


def load_checkpoint(path):
    with np.load(path, allow_pickle=False) as data:
        meta = json.loads(str(data["meta"]))
        params = {k[len("param_"):]: data[k].copy() for k in data.files if k.startswith("param_")}
        losses = data["losses"].tolist()
    return meta, params, losses


def embedding_from_checkpoint(path, g: CommuteGraph | None = None) -> EmbeddingMatrix:
    """Re-emit embeddings from saved parameters; the GNN needs the graph it was trained on."""
    meta, params, _ = load_checkpoint(path)
    ids = tuple(meta["node_ids"]) or None
    if meta["method"] == "vnn":
        return EmbeddingMatrix(params["E"], "vnn", ids)
    if g is None:
        raise ValueError("GNN checkpoints need the graph to recompute embeddings")
    if ids is not None and tuple(g.node_ids) != ids:
        raise GraphError("graph nodes do not match the checkpoint")
    layer = meta["config"].get("embedding_layer", "decoder")
    return EmbeddingMatrix(gnn_embedding(params, normalize_adjacency(g), layer), "gnn", g.node_ids)
