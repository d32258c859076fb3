"""Adam with linear warmup and per-epoch learning-rate decay."""

from __future__ import annotations

import numpy as np

from ..tensor import Tensor


class Adam:
    """Adam (beta1=0.9, beta2=0.999, eps=1e-8).

    The effective rate is ``lr * min(1, step/warmup) * decay**epoch``; with
    ``weight_decay_mode="l2"`` the decay factor instead contributes a
    decoupled L2 gradient of (1 - decay) * theta and the schedule keeps only
    the warmup ramp.  Parameters without grads are skipped, and grads are
    cleared after the update (single-writer training).
    """

    def __init__(self, lr: float, warmup_steps: int = 0, decay: float = 1.0,
                 mode: str = "lr_decay", beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = 1e-8):
        self.lr = lr
        self.warmup_steps = warmup_steps
        self.decay = decay
        self.mode = mode
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self._m: dict[str, np.ndarray] = {}
        self._v: dict[str, np.ndarray] = {}

    def rate(self, step: int, epoch: int = 0) -> float:
        warm = min(1.0, step / self.warmup_steps) if self.warmup_steps > 0 else 1.0
        sched = self.decay ** epoch if self.mode == "lr_decay" else 1.0
        return self.lr * warm * sched

    def apply(self, params: dict[str, Tensor], step: int, epoch: int = 0) -> None:
        lr_t = self.rate(step, epoch)
        b1, b2 = self.beta1, self.beta2
        bias1 = 1.0 - b1 ** step
        bias2 = 1.0 - b2 ** step
        for name, p in params.items():
            g = p.grad
            if g is None:
                continue
            if self.mode == "l2":
                g = g + (1.0 - self.decay) * p.data
            m = self._m.get(name)
            if m is None:
                m = self._m[name] = np.zeros_like(p.data)
                self._v[name] = np.zeros_like(p.data)
            v = self._v[name]
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * (g * g)
            p.data -= lr_t * (m / bias1) / (np.sqrt(v / bias2) + self.eps)
            p.grad = None
