"""Clip-wise end-to-end training with Adam.

Videos are visited in a seeded shuffle each epoch. Within a video, clips are
processed in order with the GRU state and memory bank carried along, clip
losses are averaged, and one optimizer step is taken per video so gradients
reach every stage, including the memory compression, through the live
cross-clip graph.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .data import VideoFeatures, iter_clips
from .errors import DataError
from .model import LossConfig, ModelConfig, SegmentationModel, clip_loss
from .nn import Parameter
from .tensor import Tensor

log = logging.getLogger(__name__)


@dataclass
class TrainRun:
    epochs: int = 50
    lr: float = 5e-4
    seed: int = 1
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


@dataclass
class TrainResult:
    model: SegmentationModel
    t_max: int
    loss_curve: list[float] = field(default_factory=list)
    epochs_run: int = 0


class Adam:
    def __init__(self, params: list[Parameter], lr: float,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = list(params)
        self.lr = lr
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]
        self.t = 0

    def step(self) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        bc1 = 1.0 - b1 ** self.t
        bc2 = 1.0 - b2 ** self.t
        for i, p in enumerate(self.params):
            if p.grad is None:
                continue
            g = p.grad
            self.m[i] = b1 * self.m[i] + (1 - b1) * g
            self.v[i] = b2 * self.v[i] + (1 - b2) * (g * g)
            p.data = p.data - self.lr * (self.m[i] / bc1) / (np.sqrt(self.v[i] / bc2) + self.eps)

    def zero_grad(self) -> None:
        for p in self.params:
            p.zero_grad()


def train(dataset: list[VideoFeatures], model_cfg: ModelConfig,
          loss_cfg: LossConfig, run: TrainRun,
          model: SegmentationModel | None = None,
          start_epoch: int = 0) -> TrainResult:
    if not dataset:
        raise DataError("empty training dataset")
    for video in dataset:
        if video.feature_dim != model_cfg.input_dim:
            raise DataError(f"{video.name}: feature dim {video.feature_dim} "
                            f"!= configured {model_cfg.input_dim}")
        if video.labels is None:
            raise DataError(f"{video.name}: training requires labels")
    t_max = max(v.num_frames for v in dataset)

    if model is None:
        model = SegmentationModel(model_cfg, seed=run.seed)
    opt = Adam(list(model.parameters()), run.lr, run.beta1, run.beta2, run.eps)
    result = TrainResult(model=model, t_max=t_max, epochs_run=start_epoch)

    for epoch in range(start_epoch, run.epochs):
        order = np.random.default_rng((run.seed, epoch)).permutation(len(dataset))
        epoch_loss = 0.0
        clip_total = 0
        for vi in order:
            video = dataset[vi]
            bank = model.new_bank()
            state = model.initial_state()
            losses = []
            for clip in iter_clips(video, model_cfg.window):
                logits, c_tilde, state = model.forward_clip(Tensor(clip.features),
                                                            bank, state)
                losses.append(clip_loss(logits, clip.labels, clip.valid, loss_cfg))
                if c_tilde is not None:
                    model.update_memory(bank, c_tilde)
            total = losses[0]
            for extra in losses[1:]:
                total = total + extra
            video_loss = total * (1.0 / len(losses))
            opt.zero_grad()
            video_loss.backward()
            opt.step()
            epoch_loss += video_loss.item() * len(losses)
            clip_total += len(losses)
        result.loss_curve.append(epoch_loss / clip_total)
        result.epochs_run = epoch + 1
        log.info("epoch %d/%d mean clip loss %.5f",
                 epoch + 1, run.epochs, result.loss_curve[-1])
    return result
