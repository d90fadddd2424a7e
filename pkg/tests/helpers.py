"""Independent reference implementations used as test oracles.

Nothing here imports the package's metric or loss code: every value is
recomputed with plain Python loops straight from the textbook formulas.
"""

import math

import torch


def rmse_oracle(preds, gts, t):
    n = len(preds)
    acc = 0.0
    for i in range(n):
        dx = preds[i][t - 1][0] - gts[i][t - 1][0]
        dy = preds[i][t - 1][1] - gts[i][t - 1][1]
        acc += dx * dx + dy * dy
    return math.sqrt(acc / n)


def mae_oracle(preds, gts, t):
    n = len(preds)
    acc = 0.0
    for i in range(n):
        acc += math.hypot(preds[i][t - 1][0] - gts[i][t - 1][0], preds[i][t - 1][1] - gts[i][t - 1][1])
    return acc / n


def ade_oracle(preds, gts):
    n = len(preds)
    total = 0.0
    for i in range(n):
        Tf = len(preds[i])
        s = 0.0
        for j in range(Tf):
            s += math.hypot(preds[i][j][0] - gts[i][j][0], preds[i][j][1] - gts[i][j][1])
        total += s / Tf
    return total / n


def fde_oracle(preds, gts):
    n = len(preds)
    total = 0.0
    for i in range(n):
        total += math.hypot(preds[i][-1][0] - gts[i][-1][0], preds[i][-1][1] - gts[i][-1][1])
    return total / n


def best_of_n_oracle(samples, gt):
    best_k, best_s = None, None
    for k, s in enumerate(samples):
        score = 0.0
        for j in range(len(gt)):
            score += (s[j][0] - gt[j][0]) ** 2 + (s[j][1] - gt[j][1]) ** 2
        if best_s is None or score < best_s:
            best_k, best_s = k, score
    return best_k, best_s


def gan_oracle(d_real, d_fake, recon, lam, variant):
    loss_d = 0.0
    adv = 0.0
    for r, f in zip(d_real, d_fake):
        loss_d -= math.log(r) + math.log(1.0 - f)
        adv += math.log(1.0 - f) if variant == "saturating" else -math.log(f)
    return loss_d, adv + lam * recon


def recon_oracle(pred, gt, norm):
    total = 0.0
    for p, g in zip(pred, gt):
        dx, dy = p[0] - g[0], p[1] - g[1]
        total += dx * dx + dy * dy if norm == "L2" else abs(dx) + abs(dy)
    return total


def finite_difference_check(loss_fn, params, step=1e-4):
    """Compare autograd gradients with central differences for every parameter tensor.

    Returns ``{name: relative_error}`` where the error is
    ``||analytic - numeric|| / max(||analytic||, ||numeric||)`` over the tensor.
    """
    params = dict(params)
    for p in params.values():
        p.grad = None
    loss = loss_fn()
    grads = torch.autograd.grad(loss, list(params.values()), allow_unused=True)
    out = {}
    with torch.no_grad():
        for (name, p), g in zip(params.items(), grads):
            analytic = torch.zeros_like(p) if g is None else g
            numeric = torch.zeros_like(p)
            flat = p.view(-1)
            for i in range(flat.numel()):
                orig = flat[i].item()
                flat[i] = orig + step
                up = loss_fn().item()
                flat[i] = orig - step
                down = loss_fn().item()
                flat[i] = orig
                numeric.view(-1)[i] = (up - down) / (2 * step)
            denom = max(analytic.norm().item(), numeric.norm().item())
            out[name] = 0.0 if denom == 0 else (analytic - numeric).norm().item() / denom
    return out
