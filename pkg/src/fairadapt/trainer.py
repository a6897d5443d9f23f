"""Adapter training: batched forward through the correction MLP and the
sorting network, fairness + accuracy objective, Adam updates on adapter
parameters only, and validation-driven checkpoint selection.

Per epoch the candidate sets are rebuilt from the current adjusted scores
(train positives always included), then user mini-batches contribute a
batch-level soft exposure estimate to the fairness term and per-user soft
relevances to the NDCG surrogate.  Validation metrics come from hard
ranking over the full catalog.
"""

from dataclasses import dataclass, field

import numpy as np

from .adapter import adapter_tensors, correction, full_correction_matrix, \
    init_adapter
from .autodiff import segment_sum
from .backbone import score_all
from .exposure import build_target, hierarchical_stats, position_bias
from .losses import LossWeights, diff_ndcg_loss, global_kl, \
    hierarchical_kl, total_loss
from .metrics import evaluate_ranking
from .optim import Adam
from .sorting import rank_contractions


@dataclass
class TrainConfig:
    """Adapter training hyperparameters."""

    epochs: int = 50
    batch_size: int = 256
    lr: float = 1e-3
    beta: float = 10.0
    k: int = 20
    candidates: object = 128      # int cap or "full"
    weights: LossWeights = field(default_factory=LossWeights)
    seed: int = 0
    ndcg_floor: float = 0.1
    target: str = "uniform_group"
    group_target: str = "aggregated"
    fairness: str = "hierarchical"   # or "global" (single-level ablation)
    hidden: int = 32
    layers: int = 2
    init_scale: object = None

    def validate(self):
        if self.lr <= 0:
            raise ValueError("lr must be positive")
        if not 0.0 <= self.ndcg_floor < 1.0:
            raise ValueError("ndcg_floor must be in [0, 1)")
        if self.candidates != "full":
            if int(self.candidates) < self.k:
                raise ValueError("candidate cap must be at least k")
        if self.fairness not in ("hierarchical", "global"):
            raise ValueError(f"unknown fairness loss {self.fairness!r}")
        return self


@dataclass
class EpochRecord:
    """One train_log row; loss fields are None for the epoch-0 baseline."""

    epoch: int
    fairness_loss: object
    ndcg_loss: object
    total_loss: object
    val_ndcg: float
    val_gini: float


@dataclass
class Checkpoint:
    """Selected adapter snapshot with its validation metrics."""

    params: object
    epoch: int
    val_ndcg: float
    val_gini: float


@dataclass
class TrainResult:
    checkpoint: Checkpoint
    log: list
    base_ndcg: float
    base_gini: float


def build_candidates(adjusted, train_items, cap, k):
    """Per-user candidate item arrays, refreshed from adjusted scores.

    Each user gets their training positives plus the top scored items up
    to `cap` ("full" keeps the whole catalog); rows are padded with the
    next-best items so every user has the same candidate count, then
    sorted by item id.  Requires at least k candidates.
    """
    num_users, num_items = adjusted.shape
    if cap == "full":
        if num_items < k:
            raise ValueError("catalog smaller than k")
        cand = np.broadcast_to(np.arange(num_items),
                               (num_users, num_items))
        return np.ascontiguousarray(cand)
    cap = min(int(cap), num_items)
    order = np.argsort(-adjusted, axis=1, kind="stable")
    rows = []
    for u in range(num_users):
        chosen = np.union1d(order[u, :cap], train_items[u])
        rows.append(chosen)
    width = max(r.shape[0] for r in rows)
    if width < k:
        raise ValueError("candidate count smaller than k")
    out = np.empty((num_users, width), dtype=np.int64)
    for u, chosen in enumerate(rows):
        need = width - chosen.shape[0]
        if need:
            mask = np.ones(num_items, dtype=bool)
            mask[chosen] = False
            extra = order[u][mask[order[u]]][:need]
            chosen = np.sort(np.concatenate([chosen, extra]))
        out[u] = chosen
    return out


def select_checkpoint(log, ndcg_floor, base_ndcg):
    """Pick the logged epoch to keep.

    Among epochs whose validation NDCG is at least (1 - floor) * base,
    take the minimum validation Gini; if none qualifies, the maximum
    NDCG.  Ties keep the earlier epoch.
    """
    floor = (1.0 - ndcg_floor) * base_ndcg
    eligible = [r for r in log if r.val_ndcg >= floor]
    if eligible:
        return min(eligible, key=lambda r: (r.val_gini, r.epoch))
    return min(log, key=lambda r: (-r.val_ndcg, r.epoch))


def train_adapter(bundle, table, cfg: TrainConfig) -> TrainResult:
    """Train the adapter against the frozen backbone.

    Returns the selected checkpoint (rule above, epoch 0 = initialization
    included), the per-epoch log, and the base model's validation metrics
    used for the NDCG floor.  Aborts on a non-finite loss.
    """
    cfg.validate()
    if not table.frozen:
        raise ValueError("backbone table must be frozen before adapting")
    rng = np.random.default_rng(cfg.seed)
    params = init_adapter(table.dim, cfg.hidden, cfg.seed,
                          scale=cfg.init_scale, layers=cfg.layers)
    tensors = adapter_tensors(params)
    opt = Adam(tensors, lr=cfg.lr)
    base_scores = score_all(table)
    item_provider = bundle.item_provider
    partition = bundle.partition
    target, target_group = build_target(cfg.target, partition,
                                        cfg.group_target)
    bias = position_bias(cfg.k)

    base_report = evaluate_ranking(base_scores, bundle, cfg.k,
                                   positives=bundle.val, masks=bundle.train)

    def val_metrics():
        adjusted = base_scores + full_correction_matrix(table, params)
        report = evaluate_ranking(adjusted, bundle, cfg.k,
                                  positives=bundle.val, masks=bundle.train)
        return report.ndcg, report.gini

    log = []
    snapshots = {}
    ndcg0, gini0 = val_metrics()
    log.append(EpochRecord(0, None, None, None, ndcg0, gini0))
    snapshots[0] = params.copy()

    for epoch in range(1, cfg.epochs + 1):
        adjusted = base_scores + full_correction_matrix(table, params)
        cand = build_candidates(adjusted, bundle.train, cfg.candidates,
                                cfg.k)
        order = rng.permutation(bundle.num_users)
        sums = np.zeros(3)
        batches = 0
        for start in range(0, order.shape[0], cfg.batch_size):
            users = order[start:start + cfg.batch_size]
            rows = cand[users]
            width = rows.shape[1]
            feats = np.concatenate([
                np.concatenate(
                    [np.repeat(table.user_emb[u][None, :], width, axis=0),
                     table.item_emb[rows[i]]], axis=1)
                for i, u in enumerate(users)], axis=0)
            relevance = np.stack([
                np.isin(rows[i], bundle.train[u]).astype(np.float64)
                for i, u in enumerate(users)])
            delta = correction(feats, tensors).reshape(rows.shape)
            scores = delta + base_scores[users[:, None], rows]
            w, rhat = rank_contractions(scores, relevance, bias, cfg.beta)
            exp = segment_sum(w.reshape(-1),
                              item_provider[rows].reshape(-1),
                              partition.num_providers)
            state = hierarchical_stats(exp, target, target_group, partition)
            if cfg.fairness == "hierarchical":
                fair = hierarchical_kl(state, cfg.weights)
            else:
                fair = global_kl(state)
            acc = diff_ndcg_loss(rhat, relevance, cfg.k)
            # The fairness term is one distribution per batch, so its
            # gradient does not shrink as lists grow, while the averaged
            # accuracy term spreads its gradient over every scored
            # (user, item) pair and every cutoff slot.  Weighting the
            # mean by pairs * k keeps the two pressures commensurate:
            # tiny lambda_acc leaves fairness in control, large values
            # hold the adapter near the identity, and the crossover sits
            # in between instead of collapsing onto the fairness end.
            acc_scaled = acc * float(feats.shape[0] * cfg.k)
            total = total_loss(fair, acc_scaled, cfg.weights)
            if not np.isfinite(float(total.data)):
                raise RuntimeError(
                    f"adapter loss diverged at epoch {epoch}, "
                    f"batch offset {start}")
            opt.zero_grad()
            total.backward()
            opt.step()
            sums += (float(fair.data), float(acc.data), float(total.data))
            batches += 1
        ndcg, gini_val = val_metrics()
        means = sums / batches
        log.append(EpochRecord(epoch, means[0], means[1], means[2],
                               ndcg, gini_val))
        snapshots[epoch] = params.copy()

    chosen = select_checkpoint(log, cfg.ndcg_floor, base_report.ndcg)
    checkpoint = Checkpoint(snapshots[chosen.epoch], chosen.epoch,
                            chosen.val_ndcg, chosen.val_gini)
    return TrainResult(checkpoint, log, base_report.ndcg, base_report.gini)
