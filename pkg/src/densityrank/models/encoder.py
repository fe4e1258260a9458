"""Generic feature encoders for the rectangular-Jacobian estimator."""

from __future__ import annotations

import numpy as np
import torch
from torch import nn

from ..data import Dataset
from .common import ModelError, TrainConfig, fit


class Encoder(nn.Module):
    """Map from input dimension D to feature dimension m.

    arch 'identity' (m = D), 'linear' (single matrix, no bias), or 'mlp'
    with tanh throughout so numerical Jacobians are stable.
    """

    kind = "encoder"

    def __init__(self, input_dim, feature_dim, arch="mlp", hidden=64, seed=0):
        super().__init__()
        if arch not in ("identity", "linear", "mlp"):
            raise ModelError(f"unknown encoder arch {arch!r}")
        if arch == "identity" and feature_dim != input_dim:
            raise ModelError("identity encoder requires feature_dim == input_dim")
        self.input_dim = input_dim
        self.feature_dim = feature_dim
        self.arch = arch
        self.hidden = hidden
        self.seed = seed
        torch.manual_seed(seed)
        if arch == "identity":
            self.net = nn.Identity()
        elif arch == "linear":
            self.net = nn.Linear(input_dim, feature_dim, bias=False)
        else:
            self.net = nn.Sequential(
                nn.Linear(input_dim, hidden),
                nn.Tanh(),
                nn.Linear(hidden, hidden),
                nn.Tanh(),
                nn.Linear(hidden, feature_dim),
            )
        self.double()

    @classmethod
    def from_matrix(cls, a: np.ndarray) -> "Encoder":
        a = np.asarray(a, dtype=np.float64)
        enc = cls(a.shape[1], a.shape[0], arch="linear")
        with torch.no_grad():
            enc.net.weight.copy_(torch.as_tensor(a))
        return enc

    def config_dict(self):
        return {
            "input_dim": self.input_dim,
            "feature_dim": self.feature_dim,
            "arch": self.arch,
            "hidden": self.hidden,
            "seed": self.seed,
        }

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.net(x)


def encoder_forward(enc: Encoder, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (enc.input_dim,):
        raise ModelError(f"expected input of shape ({enc.input_dim},), got {x.shape}")
    with torch.no_grad():
        z = enc(torch.as_tensor(x[None, :]))
    return z.numpy()[0]


class _AutoEncoder(nn.Module):
    def __init__(self, encoder: Encoder):
        super().__init__()
        self.encoder = encoder
        self.decoder = nn.Sequential(
            nn.Linear(encoder.feature_dim, encoder.hidden),
            nn.Tanh(),
            nn.Linear(encoder.hidden, encoder.input_dim),
        )
        self.double()


def train_autoencoder(ds: Dataset, cfg: TrainConfig, feature_dim, hidden=64) -> Encoder:
    """Train an MLP encoder as half of a small reconstruction autoencoder."""
    if len(ds) == 0:
        raise ModelError("cannot train on an empty dataset")
    arr = np.stack([img.flat_f() for img in ds.images])
    enc = Encoder(ds.dim, feature_dim, arch="mlp", hidden=hidden, seed=cfg.seed)
    auto = _AutoEncoder(enc)

    def loss_fn(m, batch):
        recon = m.decoder(m.encoder(batch))
        return ((recon - batch) ** 2).sum(dim=-1).mean()

    fit(auto, cfg, lambda epoch: arr, loss_fn)
    enc.train_curve = auto.train_curve
    enc.train_config_echo = auto.train_config_echo
    return enc
