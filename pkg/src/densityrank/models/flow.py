"""Affine coupling flow with exact analytic per-layer log-determinants."""

from __future__ import annotations

import numpy as np
import torch
from torch import nn

from ..data import Dataset, dequantize
from .common import ModelError, TrainConfig, fit

LOG_2PI = float(np.log(2.0 * np.pi))


def _masks(input_dim: int, n_layers: int) -> torch.Tensor:
    """Alternating index-parity and half-split binary masks, each also used
    inverted, so every dimension is transformed."""
    idx = torch.arange(input_dim)
    parity = (idx % 2 == 0).double()
    half = (idx < input_dim // 2).double()
    out = []
    for i in range(n_layers):
        base = parity if (i // 2) % 2 == 0 else half
        out.append(base if i % 2 == 0 else 1.0 - base)
    return torch.stack(out)


class CouplingFlow(nn.Module):
    """Stack of affine coupling layers over flattened pixel vectors.

    Each layer passes the masked dimensions through unchanged and applies
    a conditioner-predicted affine map to the rest; log-scales are squashed
    to +-scale_bound so single-image training cannot blow up the scales.
    """

    kind = "flow"

    def __init__(self, input_dim, n_layers=6, hidden=None, scale_bound=3.0, seed=0):
        super().__init__()
        if input_dim < 2:
            raise ModelError("flow needs input_dim >= 2")
        self.input_dim = input_dim
        self.n_layers = n_layers
        self.hidden = hidden if hidden is not None else min(4 * input_dim, 1024)
        self.scale_bound = scale_bound
        self.seed = seed
        torch.manual_seed(seed)
        self.register_buffer("masks", _masks(input_dim, n_layers))
        self.conditioners = nn.ModuleList()
        for _ in range(n_layers):
            net = nn.Sequential(
                nn.Linear(input_dim, self.hidden),
                nn.Tanh(),
                nn.Linear(self.hidden, self.hidden),
                nn.Tanh(),
                nn.Linear(self.hidden, 2 * input_dim),
            )
            # zero-init last layer: the flow starts as the identity map
            nn.init.zeros_(net[-1].weight)
            nn.init.zeros_(net[-1].bias)
            self.conditioners.append(net)
        self.double()

    def config_dict(self):
        return {
            "input_dim": self.input_dim,
            "n_layers": self.n_layers,
            "hidden": self.hidden,
            "scale_bound": self.scale_bound,
            "seed": self.seed,
        }

    def _shift_scale(self, layer, masked_x):
        out = self.conditioners[layer](masked_x)
        shift, raw = out.chunk(2, dim=-1)
        log_scale = self.scale_bound * torch.tanh(raw / self.scale_bound)
        return shift, log_scale

    def forward(self, x: torch.Tensor):
        """x: (n, D) -> (z, logdet) with logdet the exact sum of log-scales."""
        logdet = torch.zeros(x.shape[0], dtype=x.dtype)
        for i in range(self.n_layers):
            m = self.masks[i]
            shift, log_scale = self._shift_scale(i, x * m)
            um = 1.0 - m
            x = m * x + um * (x * torch.exp(log_scale) + shift)
            logdet = logdet + (um * log_scale).sum(dim=-1)
            if not torch.isfinite(x).all():
                raise ModelError(f"non-finite activations in coupling layer {i}")
        return x, logdet

    def inverse(self, z: torch.Tensor) -> torch.Tensor:
        for i in reversed(range(self.n_layers)):
            m = self.masks[i]
            shift, log_scale = self._shift_scale(i, z * m)
            um = 1.0 - m
            z = m * z + um * ((z - shift) * torch.exp(-log_scale))
            if not torch.isfinite(z).all():
                raise ModelError(f"non-finite values inverting coupling layer {i}")
        return z

    def log_density(self, x: torch.Tensor) -> torch.Tensor:
        """Standard-normal-base log-likelihood per sample."""
        z, logdet = self.forward(x)
        latent = -0.5 * (z * z).sum(dim=-1) - 0.5 * self.input_dim * LOG_2PI
        return latent + logdet


def flow_forward(flow: CouplingFlow, x: np.ndarray):
    """Numpy wrapper: returns (z, logdet) for one flattened input."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (flow.input_dim,):
        raise ModelError(f"expected input of shape ({flow.input_dim},), got {x.shape}")
    with torch.no_grad():
        z, logdet = flow(torch.as_tensor(x[None, :]))
    return z.numpy()[0], float(logdet[0])


def flow_inverse(flow: CouplingFlow, z: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    if z.shape != (flow.input_dim,):
        raise ModelError(f"expected latent of shape ({flow.input_dim},), got {z.shape}")
    with torch.no_grad():
        x = flow.inverse(torch.as_tensor(z[None, :]))
    return x.numpy()[0]


def train_flow(ds, cfg: TrainConfig, n_layers=6, hidden=None, epoch_callback=None) -> CouplingFlow:
    """Maximum-likelihood training on dequantized pixels (or a raw float array).

    `ds` is a Dataset (dequantized fresh each epoch) or an (n, D) float
    array used as-is. epochs=0 returns the seeded initialization (UT).
    """
    if isinstance(ds, Dataset):
        if len(ds) == 0:
            raise ModelError("cannot train on an empty dataset")
        dim = ds.dim

        def epoch_data(epoch):
            return dequantize(ds, seed=(cfg.seed, epoch))
    else:
        arr = np.asarray(ds, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[0] == 0:
            raise ModelError("training array must be non-empty and 2-D")
        dim = arr.shape[1]

        def epoch_data(epoch):
            return arr

    model = CouplingFlow(dim, n_layers=n_layers, hidden=hidden, seed=cfg.seed)

    def loss_fn(m, batch):
        return -m.log_density(batch).mean()

    return fit(model, cfg, epoch_data, loss_fn, epoch_callback=epoch_callback)
