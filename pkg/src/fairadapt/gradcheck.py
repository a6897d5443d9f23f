"""Finite-difference validation suite for every gradient path.

Covers the tape primitives, the BPR objective, and all training losses
(global KL, hierarchical KL, smoothed-NDCG, total) differentiated with
respect to both raw scores and adapter parameters on a small fixed
instance (4 users, 8 items, 3 providers, full candidates, K=3).  The
provider tiers are sized 2+1 so the within-tier term is non-degenerate.
The CLI's `grad-check` subcommand runs everything here and fails on any
mismatch.
"""

from dataclasses import dataclass

import numpy as np

from .adapter import correction, init_adapter
from .autodiff import Tensor, finite_diff_check, parameter, segment_sum
from .backbone import bpr_loss
from .exposure import ProviderPartition, build_target, hierarchical_stats, \
    position_bias
from .losses import LossWeights, diff_ndcg_loss, global_kl, \
    hierarchical_kl, total_loss
from .sorting import rank_contractions


@dataclass
class CheckResult:
    name: str
    max_rel_error: float
    ok: bool
    size: int

    def row(self):
        status = "ok" if self.ok else "FAIL"
        return (f"{self.name:<40s} {status:>4s}  "
                f"max_rel_error={self.max_rel_error:.3e}  n={self.size}")


def _result(name, report):
    return CheckResult(name, report.max_rel_error, report.ok,
                       report.analytic.size)


def _scalarize(out, proj):
    return (out * proj).sum() if out.data.ndim else out


def check_op(name, fn, x0, eps=1e-4, tol=1e-3, seed=0):
    """Finite-diff one tape op: scalar = <fn(x), fixed random projection>."""
    shape = x0.shape

    def f(theta):
        t = parameter(theta.reshape(shape))
        out = fn(t)
        proj = np.random.default_rng(seed + 1).uniform(
            0.5, 1.5, size=out.data.shape)
        val = _scalarize(out, proj)
        val.backward()
        return float(val.data), t.grad.ravel().copy()

    return _result(f"op:{name}", finite_diff_check(f, x0.ravel(), eps, tol))


def op_checks(eps=1e-4, tol=1e-3, seed=0):
    """Gradient checks for every tape primitive at generic points."""
    rng = np.random.default_rng(seed)
    x = rng.uniform(0.5, 2.0, size=(3, 4))
    y = rng.uniform(0.5, 2.0, size=(3, 4))
    m = rng.uniform(-1.0, 1.0, size=(4, 5))
    idx = np.array([2, 0, 2, 1])
    seg = np.array([0, 1, 0, 2, 1, -1, 2, 0, 1, 2, 0, 1])
    checks = [
        ("add", lambda t: t + y, x),
        ("sub", lambda t: (t - y) + (1.5 - t), x),
        ("mul", lambda t: t * y, x),
        ("div", lambda t: (t / y) + (2.0 / t), x),
        ("neg", lambda t: -t, x),
        ("matmul", lambda t: t @ m, x),
        ("matvec", lambda t: t @ m[:, 0], x),
        ("getitem", lambda t: t[:, 1:3], x),
        ("log", lambda t: t.log(), x),
        ("exp", lambda t: t.exp(), x),
        ("exp2", lambda t: t.exp2(), x),
        ("relu", lambda t: (t - 1.2).relu(), x),
        ("softplus", lambda t: (t * 3.0 - 4.0).softplus(), x),
        ("sum_all", lambda t: t.sum(), x),
        ("sum_axis", lambda t: t.sum(axis=1), x),
        ("mean", lambda t: t.mean(), x),
        ("take", lambda t: t.take(idx), x),
        ("reshape", lambda t: t.reshape((4, 3)), x),
        ("segment_sum",
         lambda t: segment_sum(t.reshape(-1), seg, 3), x),
    ]
    return [check_op(name, fn, arr, eps, tol, seed)
            for name, fn, arr in checks]


def bpr_check(eps=1e-4, tol=1e-3, seed=0):
    """BPR loss gradient on a 2-user/3-item instance."""
    rng = np.random.default_rng(seed)
    d = 3
    u0 = rng.uniform(-0.5, 0.5, size=(2, d))
    i0 = rng.uniform(-0.5, 0.5, size=(3, d))
    batch = np.array([[0, 0, 2], [1, 1, 0], [0, 1, 2]])

    def f(theta):
        users = parameter(theta[:u0.size].reshape(u0.shape))
        items = parameter(theta[u0.size:].reshape(i0.shape))
        loss = bpr_loss(batch, users, items, l2=1e-2)
        loss.backward()
        return float(loss.data), np.concatenate(
            [users.grad.ravel(), items.grad.ravel()])

    theta0 = np.concatenate([u0.ravel(), i0.ravel()])
    return _result("bpr_loss", finite_diff_check(f, theta0, eps, tol))


@dataclass
class ToyInstance:
    """Small fixed setup shared by the loss gradient checks."""

    user_emb: np.ndarray
    item_emb: np.ndarray
    base: np.ndarray
    relevance: np.ndarray
    item_provider: np.ndarray
    partition: ProviderPartition
    target: np.ndarray
    target_group: np.ndarray
    k: int = 3
    beta: float = 10.0


def toy_instance(seed=0):
    """4 users, 8 items, 3 providers in tiers {p0,p1} and {p2}, K=3."""
    rng = np.random.default_rng(seed)
    d = 4
    user_emb = rng.uniform(-0.5, 0.5, size=(4, d))
    item_emb = rng.uniform(-0.5, 0.5, size=(8, d))
    relevance = np.zeros((4, 8))
    for u in range(4):
        relevance[u, rng.choice(8, size=2, replace=False)] = 1.0
    item_provider = np.array([0, 0, 0, 1, 1, 1, 2, 2])
    partition = ProviderPartition(np.array([0, 0, 1]), 2)
    target, target_group = build_target("uniform_group", partition)
    return ToyInstance(user_emb, item_emb, user_emb @ item_emb.T,
                       relevance, item_provider, partition,
                       target, target_group)


def _losses_from_scores(scores, toy, weights):
    """All four loss tensors from a (4, 8) score tensor."""
    bias = position_bias(toy.k)
    w, rhat = rank_contractions(scores, toy.relevance, bias, toy.beta)
    num_users = toy.relevance.shape[0]
    providers = np.broadcast_to(toy.item_provider,
                                (num_users, toy.item_provider.shape[0]))
    exp = segment_sum(w.reshape(-1), providers.reshape(-1),
                      toy.partition.num_providers)
    state = hierarchical_stats(exp, toy.target, toy.target_group,
                               toy.partition)
    l_kl = global_kl(state)
    l_fair = hierarchical_kl(state, weights)
    l_acc = diff_ndcg_loss(rhat, toy.relevance, toy.k)
    l_tot = total_loss(l_fair, l_acc, weights)
    return {"kl": l_kl, "hier": l_fair, "ndcg": l_acc, "total": l_tot}


def loss_checks_scores(eps=1e-4, tol=1e-3, seed=0):
    """Losses differentiated w.r.t. the raw score matrix."""
    toy = toy_instance(seed)
    weights = LossWeights(1.0, 1.0, 1e-4)
    results = []
    for key in ("kl", "hier", "ndcg", "total"):
        def f(theta, key=key):
            scores = parameter(theta.reshape(toy.base.shape))
            loss = _losses_from_scores(scores, toy, weights)[key]
            loss.backward()
            return float(loss.data), scores.grad.ravel().copy()

        report = finite_diff_check(f, toy.base.ravel(), eps, tol)
        results.append(_result(f"loss/{key}:scores", report))
    return results


def _generic_adapter_point(shapes, feats, seed, margin=0.02):
    """Flat parameter vector whose ReLU pre-activations all clear zero.

    Central differences at eps around a kink average the two one-sided
    slopes and disagree with the analytic (one-sided) gradient, so the
    check point must keep every pre-activation at least `margin` away
    from it; the first seeded uniform draw that does is returned.
    """
    for attempt in range(1000):
        rng = np.random.default_rng(seed + attempt)
        mats = [(rng.uniform(-0.5, 0.5, shape),
                 rng.uniform(-0.5, 0.5, shape[1])) for shape in shapes]
        x, worst = feats, np.inf
        for idx, (w, b) in enumerate(mats):
            x = x @ w + b
            if idx < len(mats) - 1:
                worst = min(worst, float(np.abs(x).min()))
                x = np.maximum(x, 0.0)
        if worst >= margin:
            return np.concatenate(
                [np.concatenate([w.ravel(), b.ravel()]) for w, b in mats])
    raise RuntimeError("no kink-free adapter point found")


def loss_checks_params(eps=1e-4, tol=1e-3, seed=0):
    """Losses differentiated w.r.t. every adapter parameter.

    The parameters are drawn at a generic point rather than from
    `init_adapter`: zero biases park whole rows exactly on ReLU kinks
    (any row with an all-negative first layer), where the loss is not
    differentiable and no finite-difference check can be meaningful.
    """
    toy = toy_instance(seed)
    weights = LossWeights(1.0, 1.0, 1e-4)
    template = init_adapter(d=4, h=3, seed=seed, layers=2)
    shapes = [w.shape for w in template.weights]
    feats = np.concatenate([
        np.concatenate([np.repeat(toy.user_emb[u][None, :], 8, axis=0),
                        toy.item_emb], axis=1)
        for u in range(4)], axis=0)

    def unflatten(theta):
        tensors, offset = [], 0
        for shape in shapes:
            size = int(np.prod(shape))
            tensors.append(parameter(theta[offset:offset + size]
                                     .reshape(shape)))
            offset += size
            tensors.append(parameter(theta[offset:offset + shape[1]]))
            offset += shape[1]
        return tensors

    theta0 = _generic_adapter_point(shapes, feats, seed)
    results = []
    for key in ("kl", "hier", "ndcg", "total"):
        def f(theta, key=key):
            tensors = unflatten(theta)
            delta = correction(feats, tensors).reshape(toy.base.shape)
            loss = _losses_from_scores(delta + toy.base, toy, weights)[key]
            loss.backward()
            return float(loss.data), np.concatenate(
                [t.grad.ravel() if t.grad is not None
                 else np.zeros(t.data.size) for t in tensors])

        report = finite_diff_check(f, theta0, eps, tol)
        results.append(_result(f"loss/{key}:params", report))
    return results


def run_all(eps=1e-4, tol=1e-3, seed=0):
    """The full suite; every CheckResult.ok must hold."""
    results = op_checks(eps, tol, seed)
    results.append(bpr_check(eps, tol, seed))
    results.extend(loss_checks_scores(eps, tol, seed))
    results.extend(loss_checks_params(eps, tol, seed))
    return results
