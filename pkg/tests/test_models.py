import itertools

import numpy as np
import pytest
import torch

from densityrank.data import synth_complexity_graded
from densityrank.models import (
    ARModel,
    CouplingFlow,
    Encoder,
    ModelError,
    TrainConfig,
    ar_conditionals,
    encoder_forward,
    flow_forward,
    flow_inverse,
    train_ar,
    train_autoencoder,
    train_flow,
)
from densityrank.models.common import fit
from densityrank.models.flow import LOG_2PI


def randomized_flow(dim=8, n_layers=4, seed=0, scale=0.1):
    """A flow with non-trivial weights (the fresh init is the identity map)."""
    flow = CouplingFlow(dim, n_layers=n_layers, hidden=32, seed=seed)
    gen = torch.Generator().manual_seed(seed + 1)
    with torch.no_grad():
        for p in flow.parameters():
            p.add_(scale * torch.randn(p.shape, generator=gen, dtype=p.dtype))
    return flow


def state_bytes(model):
    return b"".join(
        v.numpy().tobytes() for _, v in sorted(model.state_dict().items())
    )


class TestTrainConfig:
    def test_validation(self):
        with pytest.raises(ValueError):
            TrainConfig(learning_rate=0.0)
        with pytest.raises(ValueError):
            TrainConfig(epochs=-1)
        with pytest.raises(ValueError):
            TrainConfig(batch_size=0)
        with pytest.raises(ValueError):
            TrainConfig(optimizer="sgd")

    def test_asdict_roundtrip(self):
        cfg = TrainConfig(epochs=3, seed=9)
        assert TrainConfig(**cfg.asdict()) == cfg


class TestCouplingFlow:
    def test_fresh_init_is_identity(self):
        flow = CouplingFlow(6, n_layers=4, hidden=16, seed=0)
        x = np.linspace(0.1, 0.9, 6)
        z, logdet = flow_forward(flow, x)
        assert np.allclose(z, x) and logdet == 0.0

    def test_invertibility(self):
        flow = randomized_flow()
        rng = np.random.default_rng(0)
        for _ in range(10):
            x = rng.uniform(0, 1, size=8)
            assert np.allclose(flow_inverse(flow, flow_forward(flow, x)[0]), x,
                               atol=1e-10)

    def test_analytic_logdet_matches_numerical(self):
        flow = randomized_flow(dim=6)
        rng = np.random.default_rng(1)
        for _ in range(5):
            x = rng.uniform(0, 1, size=6)
            _, logdet = flow_forward(flow, x)
            eps = 1e-5
            jac = np.empty((6, 6))
            for j in range(6):
                step = np.zeros(6)
                step[j] = eps
                hi, _ = flow_forward(flow, x + step)
                lo, _ = flow_forward(flow, x - step)
                jac[:, j] = (hi - lo) / (2 * eps)
            assert logdet == pytest.approx(np.linalg.slogdet(jac)[1], abs=1e-6)

    def test_every_dimension_transformed(self):
        flow = CouplingFlow(7, n_layers=4, hidden=8, seed=0)
        covered = flow.masks.sum(dim=0)
        assert ((covered > 0) & (covered < flow.n_layers)).all()

    def test_log_density_decomposition(self):
        flow = randomized_flow()
        x = np.random.default_rng(2).uniform(0, 1, size=8)
        z, logdet = flow_forward(flow, x)
        expect = -0.5 * (z * z).sum() - 4 * LOG_2PI + logdet
        with torch.no_grad():
            got = float(flow.log_density(torch.as_tensor(x[None, :]))[0])
        assert got == pytest.approx(expect, abs=1e-12)

    def test_input_dim_validation(self):
        with pytest.raises(ModelError):
            CouplingFlow(1)
        flow = CouplingFlow(4, seed=0)
        with pytest.raises(ModelError):
            flow_forward(flow, np.zeros(5))

    def test_training_deterministic(self):
        ds = synth_complexity_graded(0, 24, 4, 2)
        cfg = TrainConfig(epochs=3, batch_size=8, seed=5)
        a = train_flow(ds, cfg, n_layers=2, hidden=16)
        b = train_flow(ds, cfg, n_layers=2, hidden=16)
        assert state_bytes(a) == state_bytes(b)
        assert a.train_curve == b.train_curve

    def test_untrained_epochs_zero(self):
        ds = synth_complexity_graded(0, 8, 4, 2)
        cfg = TrainConfig(epochs=0, seed=5)
        model = train_flow(ds, cfg, n_layers=2, hidden=16)
        assert model.train_curve == []
        assert state_bytes(model) == state_bytes(
            CouplingFlow(16, n_layers=2, hidden=16, seed=5)
        )

    def test_two_d_gaussian_entropy_bound(self):
        # average model log-likelihood should approach E_p[log p] = -H(p)
        rng = np.random.default_rng(3)
        sigma = np.array([0.5, 0.25])
        data = rng.standard_normal((2000, 2)) * sigma
        cfg = TrainConfig(learning_rate=1e-2, epochs=60, batch_size=256, seed=0)
        flow = train_flow(data, cfg, n_layers=4, hidden=32)
        with torch.no_grad():
            mean_ll = float(flow.log_density(torch.as_tensor(data)).mean())
        true = -(1.0 + LOG_2PI) - float(np.log(sigma).sum())
        assert abs(mean_ll - true) < 0.2


class TestFitLoop:
    class Scalar(torch.nn.Module):
        def __init__(self):
            super().__init__()
            self.p = torch.nn.Parameter(torch.zeros((), dtype=torch.float64))

    def test_divergence_restores_last_good(self):
        model = self.Scalar()
        cfg = TrainConfig(epochs=5, batch_size=4, seed=0)

        def epoch_data(epoch):
            return np.full((4, 1), np.nan if epoch == 3 else 1.0)

        def loss_fn(m, batch):
            return ((m.p - batch) ** 2).mean()

        fit(model, cfg, epoch_data, loss_fn)
        assert model.diverged_at == 3
        assert torch.isfinite(model.p)
        assert len(model.train_curve) == 2  # epochs 1 and 2 completed

    def test_callback_schedule(self):
        model = self.Scalar()
        seen = []
        fit(
            model,
            TrainConfig(epochs=3, batch_size=2, seed=0),
            lambda e: np.ones((2, 1)),
            lambda m, b: (m.p - b).pow(2).mean(),
            epoch_callback=lambda e, m: seen.append(e),
        )
        assert seen == [1, 2, 3]


class TestARModel:
    def test_untrained_is_exactly_uniform(self):
        model = ARModel(6, alphabet=256, hidden=16, seed=0)
        xq = np.array([0, 17, 255, 128, 3, 99])
        lp = ar_conditionals(model, xq)
        assert np.array_equal(lp, np.full(6, lp[0]))
        assert lp[0] == pytest.approx(-np.log(256.0))

    def test_normalization_small_alphabet(self):
        model = ARModel(4, alphabet=2, hidden=16, seed=0)
        gen = torch.Generator().manual_seed(1)
        with torch.no_grad():
            for p in model.parameters():
                p.add_(0.5 * torch.randn(p.shape, generator=gen, dtype=p.dtype))
        total = sum(
            np.exp(ar_conditionals(model, np.array(seq)).sum())
            for seq in itertools.product((0, 1), repeat=4)
        )
        assert total == pytest.approx(1.0, abs=1e-9)

    def test_autoregressive_masking(self):
        model = ARModel(5, alphabet=4, hidden=16, n_hidden=2, seed=0)
        gen = torch.Generator().manual_seed(2)
        with torch.no_grad():
            for p in model.parameters():
                p.add_(0.5 * torch.randn(p.shape, generator=gen, dtype=p.dtype))
        base = np.array([1, 2, 3, 0, 1])
        with torch.no_grad():
            ref = model.logits(torch.as_tensor(base[None, :])).numpy()[0]
        for t in range(5):
            mutated = base.copy()
            mutated[t] = (mutated[t] + 1) % 4
            with torch.no_grad():
                out = model.logits(torch.as_tensor(mutated[None, :])).numpy()[0]
            # logits at positions <= t depend only on the prefix before t
            assert np.array_equal(out[: t + 1], ref[: t + 1])
            if t + 1 < 5:
                assert not np.array_equal(out[t + 1 :], ref[t + 1 :])

    def test_constant_dataset_concentrates(self):
        data = np.zeros((32, 6), dtype=np.int64)
        cfg = TrainConfig(learning_rate=1e-1, epochs=200, batch_size=32, seed=0)
        model = train_ar(data, cfg, alphabet=4, hidden=32)
        prob = np.exp(ar_conditionals(model, np.zeros(6, dtype=np.int64)).sum())
        assert prob > 0.99

    def test_uniform_pixels_reach_entropy(self):
        rng = np.random.default_rng(0)
        data = rng.integers(0, 256, size=(256, 8), dtype=np.int64)
        cfg = TrainConfig(epochs=20, batch_size=64, seed=0)
        model = train_ar(data, cfg, hidden=32)
        mean_ll = np.mean([
            ar_conditionals(model, row).sum() for row in data[:64]
        ])
        target = 8 * -np.log(256.0)
        assert abs(mean_ll - target) / abs(target) < 0.05

    def test_symbol_range_checked(self):
        model = ARModel(3, alphabet=4, hidden=8, seed=0)
        with pytest.raises(ModelError):
            ar_conditionals(model, np.array([0, 1, 9]))

    def test_training_deterministic(self):
        ds = synth_complexity_graded(0, 16, 3, 2)
        cfg = TrainConfig(epochs=2, batch_size=8, seed=4)
        a = train_ar(ds, cfg, hidden=16)
        b = train_ar(ds, cfg, hidden=16)
        assert state_bytes(a) == state_bytes(b)


class TestEncoder:
    def test_from_matrix_forward_oracle(self):
        a = np.array([[1.0, 2.0], [0.0, -1.0], [3.0, 0.5]])
        enc = Encoder.from_matrix(a)
        x = np.array([0.5, -2.0])
        assert np.allclose(encoder_forward(enc, x), a @ x)

    def test_identity_arch(self):
        enc = Encoder(4, 4, arch="identity")
        x = np.arange(4.0)
        assert np.array_equal(encoder_forward(enc, x), x)
        with pytest.raises(ModelError):
            Encoder(4, 3, arch="identity")

    def test_unknown_arch(self):
        with pytest.raises(ModelError):
            Encoder(4, 2, arch="conv")

    def test_autoencoder_training_reduces_error(self):
        ds = synth_complexity_graded(0, 64, 4, 2)
        cfg = TrainConfig(learning_rate=1e-2, epochs=30, batch_size=32, seed=0)
        enc = train_autoencoder(ds, cfg, feature_dim=4, hidden=32)
        assert enc.feature_dim == 4
        # curve stores mean negative loss, so it should increase (loss falls)
        assert enc.train_curve[-1] > enc.train_curve[0]
