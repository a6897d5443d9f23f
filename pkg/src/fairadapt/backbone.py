"""Matrix-factorization backbone trained with BPR.

The backbone learns user and item embeddings whose inner product is the
base relevance score; after pretraining the table is frozen (verified by
checksum) and only the adapter moves scores from then on.
"""

import hashlib
import json
import struct
from dataclasses import dataclass, field

import numpy as np

from .autodiff import Tensor, parameter
from .metrics import evaluate_ranking
from .optim import Adam

_CKPT_MAGIC = b"FAEMB1\x00\x00"


@dataclass
class EmbeddingTable:
    """User and item embedding matrices plus the frozen flag."""

    user_emb: np.ndarray
    item_emb: np.ndarray
    seed: int = 0
    frozen: bool = False

    @property
    def num_users(self):
        return self.user_emb.shape[0]

    @property
    def num_items(self):
        return self.item_emb.shape[0]

    @property
    def dim(self):
        return self.user_emb.shape[1]

    def checksum(self):
        """SHA-256 over both matrices (row-major float64 bytes)."""
        h = hashlib.sha256()
        h.update(np.ascontiguousarray(self.user_emb, dtype=np.float64))
        h.update(np.ascontiguousarray(self.item_emb, dtype=np.float64))
        return h.hexdigest()

    def freeze(self):
        self.user_emb.setflags(write=False)
        self.item_emb.setflags(write=False)
        self.frozen = True
        return self


def score_all(emb, users=None):
    """Base score rows: dot(e_u, e_v) for every item, one row per user."""
    u = emb.user_emb if users is None else emb.user_emb[np.asarray(users)]
    return u @ emb.item_emb.T


def bpr_loss(batch, user_emb, item_emb, l2=0.0):
    """-sum ln sigma(y_pos - y_neg) over (user, pos, neg) triples.

    Accepts Tensors or arrays for the embedding matrices; the optional l2
    term adds `l2 * sum of squared embeddings` over the rows the batch
    touches.  Uses softplus(-diff) for numerical stability.
    """
    batch = np.asarray(batch, dtype=np.int64)
    if batch.ndim != 2 or batch.shape[1] != 3:
        raise ValueError("batch must be (n, 3) of (user, pos, neg)")
    users = user_emb if isinstance(user_emb, Tensor) else Tensor(user_emb)
    items = item_emb if isinstance(item_emb, Tensor) else Tensor(item_emb)
    pu = users.take(batch[:, 0])
    qi = items.take(batch[:, 1])
    qj = items.take(batch[:, 2])
    diff = (pu * qi).sum(axis=1) - (pu * qj).sum(axis=1)
    loss = (-diff).softplus().sum()
    if l2:
        loss = loss + l2 * ((pu * pu).sum() + (qi * qi).sum()
                            + (qj * qj).sum())
    return loss


def sample_negatives(positives_per_user, users, num_items, rng):
    """One uniform negative per row of `users`, never a training positive
    of that user (rejection sampling)."""
    out = np.empty(users.shape[0], dtype=np.int64)
    for row, u in enumerate(users):
        pos = positives_per_user[u]
        while True:
            j = int(rng.integers(num_items))
            if j not in pos:
                out[row] = j
                break
    return out


@dataclass
class PretrainConfig:
    lr: float = 0.01
    epochs: int = 30
    batch_size: int = 256
    dim: int = 32
    seed: int = 0
    l2: float = 1e-4
    eval_k: int = 20


@dataclass
class PretrainResult:
    table: EmbeddingTable
    log: list = field(default_factory=list)
    best_epoch: int = -1
    best_val_ndcg: float = 0.0


def pretrain(bundle, cfg: PretrainConfig) -> PretrainResult:
    """Train the MF backbone with BPR and keep the epoch with the best
    validation NDCG@k (ties keep the earlier epoch).

    Initialization is seeded uniform(-0.1, 0.1); each epoch shuffles the
    training pairs and draws one fresh negative per positive; updates are
    Adam.  A non-finite loss aborts with the offending epoch in the
    message.  Validation ranks all items minus the user's training items.
    """
    rng = np.random.default_rng(cfg.seed)
    m, n = bundle.num_users, bundle.num_items
    user_t = parameter(rng.uniform(-0.1, 0.1, size=(m, cfg.dim)), "user_emb")
    item_t = parameter(rng.uniform(-0.1, 0.1, size=(n, cfg.dim)), "item_emb")
    pairs = bundle.train_pairs()
    pos_sets = [set(int(i) for i in items) for items in bundle.train]
    opt = Adam([user_t, item_t], lr=cfg.lr)

    def val_ndcg():
        table = EmbeddingTable(user_t.data, item_t.data, cfg.seed)
        report = evaluate_ranking(score_all(table), bundle, cfg.eval_k,
                                  positives=bundle.val, masks=bundle.train)
        return report.ndcg

    result = PretrainResult(EmbeddingTable(user_t.data.copy(),
                                           item_t.data.copy(), cfg.seed))
    best = -np.inf
    log = []
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(pairs.shape[0])
        negs = sample_negatives(pos_sets, pairs[order, 0], n, rng)
        triples = np.column_stack([pairs[order], negs])
        epoch_loss = 0.0
        for start in range(0, triples.shape[0], cfg.batch_size):
            batch = triples[start:start + cfg.batch_size]
            opt.zero_grad()
            loss = bpr_loss(batch, user_t, item_t, l2=cfg.l2)
            value = float(loss.data)
            if not np.isfinite(value):
                raise RuntimeError(
                    f"BPR loss diverged (non-finite) at epoch {epoch}, "
                    f"batch offset {start}; lower the learning rate")
            loss.backward()
            opt.step()
            epoch_loss += value
        ndcg = val_ndcg()
        log.append({"epoch": epoch,
                    "loss": epoch_loss / triples.shape[0],
                    "val_ndcg": ndcg})
        if ndcg > best:
            best = ndcg
            result.table = EmbeddingTable(user_t.data.copy(),
                                          item_t.data.copy(), cfg.seed)
            result.best_epoch = epoch
    if cfg.epochs == 0:
        result.best_epoch = 0
        best = val_ndcg()
    result.best_val_ndcg = float(best)
    result.log = log
    result.table.freeze()
    return result


def save_table(table, path):
    """Checkpoint: magic, length-prefixed JSON header
    (m, n, d, seed, checksum), then the two row-major float64 matrices."""
    header = {
        "m": table.num_users,
        "n": table.num_items,
        "d": table.dim,
        "seed": table.seed,
        "checksum": table.checksum(),
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_CKPT_MAGIC)
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        fh.write(np.ascontiguousarray(table.user_emb, dtype=np.float64))
        fh.write(np.ascontiguousarray(table.item_emb, dtype=np.float64))


def load_table(path):
    """Load a checkpoint written by `save_table`, verifying the checksum."""
    with open(path, "rb") as fh:
        magic = fh.read(len(_CKPT_MAGIC))
        if magic != _CKPT_MAGIC:
            raise ValueError(f"{path}: not a backbone checkpoint")
        (size,) = struct.unpack("<Q", fh.read(8))
        header = json.loads(fh.read(size).decode("utf-8"))
        m, n, d = header["m"], header["n"], header["d"]
        user = np.frombuffer(fh.read(m * d * 8), dtype=np.float64)
        item = np.frombuffer(fh.read(n * d * 8), dtype=np.float64)
    table = EmbeddingTable(user.reshape(m, d).copy(),
                           item.reshape(n, d).copy(),
                           int(header["seed"]))
    if table.checksum() != header["checksum"]:
        raise ValueError(f"{path}: checksum mismatch, file corrupt")
    return table.freeze()
