"""Fairness adapter: an MLP over concatenated user-item embeddings that
emits additive score corrections, trained while the backbone stays frozen.

The depth knob counts hidden ReLU layers before the linear scalar output:
2 (default: W1 2d-by-h, W2 h-by-h, W3 h-by-1; 3,169 parameters at
d = h = 32), 1 (one hidden layer, 2,113 parameters), or 0 (a single
linear map, 65 parameters).
"""

import json
import struct
from dataclasses import dataclass

import numpy as np

from .autodiff import Tensor

_CKPT_MAGIC = b"FAADP1\x00\x00"


@dataclass
class AdapterParams:
    """Weight matrices and biases of the correction MLP.

    `weights[0]` maps the concatenated pair embedding (2d) to the first
    hidden width; the final matrix maps to a scalar.  ReLU sits between
    consecutive matrices, never after the last.
    """

    weights: list
    biases: list
    dim: int
    hidden: int
    seed: int = 0

    @property
    def num_hidden(self):
        return len(self.weights) - 1

    def count(self):
        """Total number of scalar parameters."""
        return int(sum(w.size for w in self.weights)
                   + sum(b.size for b in self.biases))

    def copy(self):
        return AdapterParams([w.copy() for w in self.weights],
                             [b.copy() for b in self.biases],
                             self.dim, self.hidden, self.seed)


def init_adapter(d, h, seed, scale=None, layers=2):
    """Seeded adapter initialization.

    Weights are uniform(-s, s) with s = 1/sqrt(fan_in) per matrix (or the
    given constant `scale`, so scale=0 yields the exact zero map); biases
    start at zero so initial corrections are small and the initial ranking
    stays near the base model's.
    """
    if d < 1 or h < 1:
        raise ValueError("embedding and hidden dims must be >= 1")
    if not 0 <= layers <= 3:
        raise ValueError("hidden layer count must be 0, 1, 2, or 3")
    dims = [2 * d] + [h] * layers + [1]
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        s = (1.0 / np.sqrt(fan_in)) if scale is None else float(scale)
        weights.append(rng.uniform(-s, s, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return AdapterParams(weights, biases, d, h, seed)


def adapter_tensors(params):
    """Parameter tensors viewing (not copying) the adapter arrays, so an
    optimizer step updates `params` in place."""
    tensors = []
    for idx, (w, b) in enumerate(zip(params.weights, params.biases)):
        tensors.append(Tensor(w, requires_grad=True, name=f"W{idx + 1}"))
        tensors.append(Tensor(b, requires_grad=True, name=f"b{idx + 1}"))
    return tensors


def correction(pair_features, tensors):
    """MLP forward over (rows, 2d) pair features; returns a (rows,) Tensor.

    `tensors` alternates weight and bias as produced by adapter_tensors;
    plain arrays are accepted for a gradient-free evaluation.
    """
    x = pair_features if isinstance(pair_features, Tensor) \
        else Tensor(np.asarray(pair_features, dtype=np.float64))
    n_mats = len(tensors) // 2
    for idx in range(n_mats):
        w, b = tensors[2 * idx], tensors[2 * idx + 1]
        x = x @ w + b
        if idx < n_mats - 1:
            x = x.relu()
    return x.reshape((x.shape[0],))


def pair_features(emb, user, candidates):
    """concat(e_u, e_v) rows for one user's candidate items."""
    cand = np.asarray(candidates, dtype=np.int64)
    u_rows = np.broadcast_to(emb.user_emb[user], (cand.shape[0], emb.dim))
    return np.concatenate([u_rows, emb.item_emb[cand]], axis=1)


def adapter_forward(emb, user, candidates, params):
    """Correction vector for one user's candidate list (plain array)."""
    cand = np.asarray(candidates, dtype=np.int64)
    if cand.size == 0:
        raise ValueError("candidate list is empty")
    feats = pair_features(emb, user, cand)
    return correction(feats, adapter_tensors(params)).data


def adjust_scores(base, delta):
    """Adjusted scores = base + correction, elementwise."""
    base = np.asarray(base, dtype=np.float64)
    delta = np.asarray(delta, dtype=np.float64)
    if base.shape != delta.shape:
        raise ValueError(
            f"score/correction length mismatch: {base.shape} vs {delta.shape}")
    return base + delta


def full_correction_matrix(emb, params, block=64):
    """Corrections for every (user, item) pair as a (M, N) array,
    computed in user blocks to bound memory."""
    tensors = adapter_tensors(params)
    out = np.empty((emb.num_users, emb.num_items))
    all_items = np.arange(emb.num_items)
    for start in range(0, emb.num_users, block):
        stop = min(start + block, emb.num_users)
        feats = np.concatenate(
            [pair_features(emb, u, all_items) for u in range(start, stop)],
            axis=0)
        out[start:stop] = correction(feats, tensors).data.reshape(
            stop - start, emb.num_items)
    return out


def save_adapter(params, path):
    """Checkpoint: magic, length-prefixed JSON header (d, h, layers, seed,
    per-matrix shapes), then all weights and biases row-major float64."""
    header = {
        "d": params.dim,
        "h": params.hidden,
        "layers": params.num_hidden,
        "seed": params.seed,
        "shapes": [list(w.shape) for w in params.weights],
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_CKPT_MAGIC)
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        for w, b in zip(params.weights, params.biases):
            fh.write(np.ascontiguousarray(w, dtype=np.float64))
            fh.write(np.ascontiguousarray(b, dtype=np.float64))


def load_adapter(path):
    with open(path, "rb") as fh:
        magic = fh.read(len(_CKPT_MAGIC))
        if magic != _CKPT_MAGIC:
            raise ValueError(f"{path}: not an adapter checkpoint")
        (size,) = struct.unpack("<Q", fh.read(8))
        header = json.loads(fh.read(size).decode("utf-8"))
        weights, biases = [], []
        for rows, cols in header["shapes"]:
            w = np.frombuffer(fh.read(rows * cols * 8), dtype=np.float64)
            weights.append(w.reshape(rows, cols).copy())
            b = np.frombuffer(fh.read(cols * 8), dtype=np.float64)
            biases.append(b.copy())
    return AdapterParams(weights, biases, int(header["d"]),
                         int(header["h"]), int(header["seed"]))
