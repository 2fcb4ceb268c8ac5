"""Central finite-difference gradient verification.

Runs in the float64 shadow mode: build the layer and its inputs inside
`double_precision()` and call `check_gradients` there too, so perturbed
forward passes keep the tight tolerance that float64 allows.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .tensor import Tensor

DEFAULT_STEP = 1e-4


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    # The denominator floor makes the comparison absolute for gradients that
    # are (near-)zero by construction, where a true ratio would amplify
    # finite-difference noise.
    denom = max(float(np.abs(analytic).max(initial=0.0)),
                float(np.abs(numeric).max(initial=0.0)), 1e-2)
    return float(np.abs(analytic - numeric).max(initial=0.0)) / denom


def check_gradients(loss_fn: Callable[[], Tensor], tensors: Sequence[Tensor],
                    h: float = DEFAULT_STEP,
                    max_entries_per_tensor: int | None = None,
                    rng: np.random.Generator | None = None) -> float:
    """Compare backward() gradients of `loss_fn` against central differences.

    `loss_fn` must rebuild the forward pass from the given tensors on every
    call. Returns the worst relative error across all checked entries. When
    `max_entries_per_tensor` is set, a random subset of coordinates is probed
    (used for whole-model checks where exhaustive probing is too slow).

    Coordinates whose probe straddles a kink (ReLU / abs / clamp) are skipped:
    central differences are meaningless there. A kink is flagged when the two
    one-sided difference quotients disagree; a wrong analytic gradient is
    still caught because the one-sided quotients agree with each other.
    """
    for t in tensors:
        if t.data.dtype != np.float64:
            raise ValueError("gradient checks require float64 tensors; "
                             "build inside double_precision()")
        t.zero_grad()
    loss = loss_fn()
    loss.backward()
    analytic = [np.zeros_like(t.data) if t.grad is None else t.grad.copy()
                for t in tensors]

    center = loss_fn().item()
    worst = 0.0
    for t, a in zip(tensors, analytic):
        flat = t.data.reshape(-1)
        aflat = a.reshape(-1)
        if max_entries_per_tensor is not None and flat.size > max_entries_per_tensor:
            if rng is None:
                rng = np.random.default_rng(0)
            entries = rng.choice(flat.size, size=max_entries_per_tensor, replace=False)
        else:
            entries = range(flat.size)
        kept: list[int] = []
        numeric: list[float] = []
        for i in (int(i) for i in entries):
            orig = flat[i]
            flat[i] = orig + h
            lp = loss_fn().item()
            flat[i] = orig - h
            lm = loss_fn().item()
            flat[i] = orig
            d_plus = (lp - center) / h
            d_minus = (center - lm) / h
            if abs(d_plus - d_minus) > 1e-3 * max(1.0, abs(d_plus), abs(d_minus)):
                continue  # kink inside the probe interval
            kept.append(i)
            numeric.append((lp - lm) / (2.0 * h))
        if kept:
            worst = max(worst, relative_error(aflat[kept], np.asarray(numeric)))
    return worst
