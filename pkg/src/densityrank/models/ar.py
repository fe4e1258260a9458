"""Masked autoregressive next-pixel model (MADE-style) over raster order."""

from __future__ import annotations

import numpy as np
import torch
from torch import nn
import torch.nn.functional as F

from ..data import Dataset
from .common import ModelError, TrainConfig, fit


class MaskedLinear(nn.Linear):
    def __init__(self, in_features, out_features, mask):
        super().__init__(in_features, out_features)
        self.register_buffer("mask", torch.as_tensor(mask, dtype=torch.float64))

    def forward(self, x):
        return F.linear(x, self.mask * self.weight, self.bias)


class ARModel(nn.Module):
    """Categorical next-symbol predictor with raster (natural) ordering.

    Input is the full quantized sequence; connectivity masks guarantee the
    logits for position t depend only on positions < t. The output layer is
    zero-initialized so the untrained model is exactly uniform.
    """

    kind = "ar"

    def __init__(self, seq_len, alphabet=256, hidden=256, n_hidden=2, seed=0):
        super().__init__()
        if seq_len < 2:
            raise ModelError("ar model needs seq_len >= 2")
        self.seq_len = seq_len
        self.alphabet = alphabet
        self.hidden = hidden
        self.n_hidden = n_hidden
        self.seed = seed
        torch.manual_seed(seed)

        in_deg = np.arange(1, seq_len + 1)
        hid_deg = 1 + np.arange(hidden) % (seq_len - 1)  # degrees in 1..T-1
        out_deg = np.repeat(np.arange(1, seq_len + 1), alphabet)

        layers = [MaskedLinear(seq_len, hidden, hid_deg[:, None] >= in_deg[None, :])]
        for _ in range(n_hidden - 1):
            layers.append(MaskedLinear(hidden, hidden, hid_deg[:, None] >= hid_deg[None, :]))
        out = MaskedLinear(hidden, seq_len * alphabet, out_deg[:, None] > hid_deg[None, :])
        nn.init.zeros_(out.weight)
        nn.init.zeros_(out.bias)
        layers.append(out)
        self.layers = nn.ModuleList(layers)
        self.double()

    def config_dict(self):
        return {
            "seq_len": self.seq_len,
            "alphabet": self.alphabet,
            "hidden": self.hidden,
            "n_hidden": self.n_hidden,
            "seed": self.seed,
        }

    def logits(self, xq: torch.Tensor) -> torch.Tensor:
        """xq: (n, T) integer symbols -> (n, T, alphabet) logits."""
        h = xq.double() / (self.alphabet - 1) * 2.0 - 1.0
        for layer in self.layers[:-1]:
            h = torch.relu(layer(h))
        out = self.layers[-1](h)
        return out.view(-1, self.seq_len, self.alphabet)

    def log_conditionals(self, xq: torch.Tensor) -> torch.Tensor:
        """(n, T) log-probability of each observed symbol given its prefix."""
        logp = torch.log_softmax(self.logits(xq), dim=-1)
        return logp.gather(-1, xq.long()[:, :, None])[:, :, 0]


def ar_conditionals(model: ARModel, xq: np.ndarray) -> np.ndarray:
    """Per-step log-probabilities for one quantized sequence."""
    xq = np.asarray(xq).reshape(-1)
    if xq.shape != (model.seq_len,):
        raise ModelError(f"expected sequence of length {model.seq_len}, got {xq.shape}")
    if xq.min() < 0 or xq.max() >= model.alphabet:
        raise ModelError(f"symbols must lie in 0..{model.alphabet - 1}")
    with torch.no_grad():
        lp = model.log_conditionals(torch.as_tensor(xq[None, :].astype(np.int64)))
    return lp.numpy()[0]


def train_ar(ds, cfg: TrainConfig, alphabet=256, hidden=256, n_hidden=2,
             epoch_callback=None) -> ARModel:
    """Per-step cross-entropy training on quantized pixels.

    `ds` is a Dataset (flattened quantized views) or an (n, T) integer array.
    """
    if isinstance(ds, Dataset):
        if len(ds) == 0:
            raise ModelError("cannot train on an empty dataset")
        arr = np.stack([img.flat_q().astype(np.int64) for img in ds.images])
    else:
        arr = np.asarray(ds, dtype=np.int64)
        if arr.ndim != 2 or arr.shape[0] == 0:
            raise ModelError("training array must be non-empty and 2-D")

    model = ARModel(arr.shape[1], alphabet=alphabet, hidden=hidden,
                    n_hidden=n_hidden, seed=cfg.seed)

    def loss_fn(m, batch):
        return -m.log_conditionals(batch).sum(dim=-1).mean()

    return fit(model, cfg, lambda epoch: arr, loss_fn, epoch_callback=epoch_callback)
