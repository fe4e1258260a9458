"""Shared training machinery: config, Adam fitting loop, determinism."""

from __future__ import annotations

import copy
from dataclasses import asdict, dataclass

import numpy as np
import torch


class ModelError(RuntimeError):
    pass


class TrainingDiverged(ModelError):
    """Raised internally; fit() converts divergence into an early stop."""


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    epochs: int = 10
    batch_size: int = 64
    seed: int = 0
    weight_decay: float = 0.0
    optimizer: str = "adam"  # fixed; Adam with default betas

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0 (0 = untrained)")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.optimizer != "adam":
            raise ValueError("only the fixed adam optimizer is supported")

    def asdict(self):
        return asdict(self)


def fit(model, cfg: TrainConfig, epoch_data, loss_fn, epoch_callback=None):
    """Deterministic full-batch-shuffled Adam loop.

    epoch_data(epoch) returns the (n, ...) numpy training array for that
    epoch (fresh dequantization noise goes here). loss_fn(model, batch)
    returns the mean negative log-likelihood of a torch batch. Divergence
    (non-finite loss) stops training and restores the last finite epoch's
    parameters; the stop epoch is recorded on the model.

    Records model.train_curve (mean log-likelihood per sample per epoch)
    and model.train_config_echo.
    """
    torch.set_num_threads(1)
    model.train_curve = []
    model.train_config_echo = cfg.asdict()
    model.diverged_at = None
    if cfg.epochs == 0:
        if epoch_callback is not None:
            epoch_callback(0, model)
        return model

    torch.manual_seed(cfg.seed)
    opt = torch.optim.Adam(
        model.parameters(), lr=cfg.learning_rate, weight_decay=cfg.weight_decay
    )
    shuffle_rng = np.random.default_rng((cfg.seed, 0xD5))
    last_good = copy.deepcopy(model.state_dict())

    for epoch in range(1, cfg.epochs + 1):
        arr = np.asarray(epoch_data(epoch))
        n = arr.shape[0]
        perm = shuffle_rng.permutation(n)
        bs = min(cfg.batch_size, n)
        total_ll = 0.0
        seen = 0
        diverged = False
        for start in range(0, n, bs):
            idx = perm[start : start + bs]
            batch = torch.as_tensor(arr[idx])
            loss = loss_fn(model, batch)
            if not torch.isfinite(loss):
                diverged = True
                break
            opt.zero_grad()
            loss.backward()
            opt.step()
            total_ll += -loss.item() * len(idx)
            seen += len(idx)
        if diverged or any(
            not torch.isfinite(p).all() for p in model.parameters()
        ):
            model.load_state_dict(last_good)
            model.diverged_at = epoch
            break
        model.train_curve.append(total_ll / seen)
        last_good = copy.deepcopy(model.state_dict())
        if epoch_callback is not None:
            epoch_callback(epoch, model)
    return model
