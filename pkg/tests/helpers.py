"""Shared test utilities: finite-difference gradient oracle.

The oracle only ever calls the forward path, so it stays independent of the
backward code it is used to check.
"""

from __future__ import annotations

import numpy as np

from semaphrase.tensor import GradientTape, Tensor, backward


def eval_loss(build, arrays: dict, seed: int = 0) -> float:
    """Run ``build`` on fresh tensors under a fresh tape, return scalar loss."""
    ts = {k: Tensor(v, copy=True) for k, v in arrays.items()}
    with GradientTape(seed) as _:
        loss = build(ts)
    return loss.item()


def analytic_grads(build, arrays: dict, wrt, seed: int = 0):
    ts = {k: Tensor(v, copy=True) for k, v in arrays.items()}
    with GradientTape(seed) as tape:
        loss = build(ts)
    backward(tape, loss)
    return {k: ts[k].grad for k in wrt}


def numeric_grad(build, arrays: dict, name: str, seed: int = 0, h: float = 1e-5) -> np.ndarray:
    work = {k: np.array(v, dtype=np.float64) for k, v in arrays.items()}
    target = work[name]
    grad = np.zeros_like(target)
    flat = target.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = eval_loss(build, work, seed)
        flat[i] = orig - h
        fm = eval_loss(build, work, seed)
        flat[i] = orig
        gflat[i] = (fp - fm) / (2.0 * h)
    return grad


def rel_err(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """max over elements of |a - n| / max(1, |a|, |n|)."""
    denom = np.maximum(1.0, np.maximum(np.abs(analytic), np.abs(numeric)))
    return float((np.abs(analytic - numeric) / denom).max())


def check_grads(build, arrays: dict, wrt=None, seed: int = 0, tol: float = 1e-4) -> float:
    """Assert analytic grads match central differences; returns worst error."""
    wrt = list(arrays.keys()) if wrt is None else list(wrt)
    got = analytic_grads(build, arrays, wrt, seed)
    worst = 0.0
    for name in wrt:
        ana = got[name]
        assert ana is not None, f"no gradient reached {name}"
        num = numeric_grad(build, arrays, name, seed)
        err = rel_err(ana, num)
        assert err < tol, f"gradient mismatch for {name}: rel err {err:.3e} >= {tol:g}"
        worst = max(worst, err)
    return worst
