"""Loss functions, Adam, balanced batching, and the two training loops."""

import numpy as np
import numpy.testing as npt
import pytest

from sdfforge.decoder import NetConfig, forward_batch, backward_batch, init_params, write_checkpoint
from sdfforge.errors import BatchImbalanceError, NumericFault
from sdfforge.geometry import Sphere
from sdfforge.sampling import PrepConfig, SampleSet, sample_analytic
from sdfforge.training import (
    AdamState,
    TrainConfig,
    adam_step,
    clamp,
    clamped_l1,
    clamped_l1_grad,
    make_balanced_batch,
    train_auto_decoder,
    train_single_shape,
)


class TestClamp:
    def test_interior(self):
        assert clamp(0.05, 0.1) == 0.05

    def test_upper_saturation(self):
        assert clamp(0.5, 0.1) == pytest.approx(0.1)

    def test_lower_saturation(self):
        assert clamp(-3.0, 0.1) == pytest.approx(-0.1)

    def test_vectorized_range(self):
        rng = np.random.default_rng(0)
        out = clamp(rng.normal(size=1000), 0.1)
        assert np.all(np.abs(out) <= 0.1)

    def test_bad_delta(self):
        with pytest.raises(ValueError):
            clamp(0.0, 0.0)


class TestClampedL1:
    def test_equal_inputs(self):
        assert clamped_l1(0.07, 0.07, 0.1) == 0.0

    def test_target_saturates(self):
        assert clamped_l1(0.05, 0.2, 0.1) == pytest.approx(0.05)

    def test_maximum(self):
        assert clamped_l1(-0.5, 0.5, 0.1) == pytest.approx(0.2)

    def test_bounded_by_two_delta(self):
        rng = np.random.default_rng(1)
        vals = clamped_l1(rng.normal(size=500), rng.normal(size=500), 0.1)
        assert np.all(vals >= 0.0)
        assert np.all(vals <= 0.2 + 1e-12)

    def test_gradient_saturation(self):
        # prediction outside the band: zero gradient; inside: the sign
        assert clamped_l1_grad(0.5, 0.0, 0.1) == 0.0
        assert clamped_l1_grad(0.05, 0.0, 0.1) == 1.0
        assert clamped_l1_grad(-0.05, 0.0, 0.1) == -1.0


class TestAdam:
    def test_zero_gradient_keeps_params(self):
        p = [np.ones(4)]
        st = AdamState.for_arrays(p)
        adam_step(st, p, [np.zeros(4)], lr=0.1)
        npt.assert_array_equal(p[0], 1.0)
        assert st.step == 1

    def test_first_step_magnitude(self):
        g = np.array([0.3, -0.7, 2.0, -0.001])
        p = [np.zeros(4)]
        st = AdamState.for_arrays(p)
        adam_step(st, p, [g], lr=1e-3)
        # bias-corrected first step is lr * sign(g), up to the eps softening
        npt.assert_allclose(p[0], -1e-3 * np.sign(g), rtol=1e-4)

    def test_stateful_order_dependence(self):
        # the moment accumulators remember past gradients, so applying the
        # same pair of gradients in opposite orders lands elsewhere
        g1 = np.array([1.0, -2.0])
        g2 = np.array([-0.5, 0.1])
        pa = [np.zeros(2)]
        sta = AdamState.for_arrays(pa)
        adam_step(sta, pa, [g1], lr=1e-2)
        adam_step(sta, pa, [g2], lr=1e-2)
        pb = [np.zeros(2)]
        stb = AdamState.for_arrays(pb)
        adam_step(stb, pb, [g2], lr=1e-2)
        adam_step(stb, pb, [g1], lr=1e-2)
        assert not np.allclose(pa[0], pb[0])

    def test_matches_reference_formulas(self):
        # independent inline reimplementation of the textbook update
        rng = np.random.default_rng(5)
        p = [rng.normal(size=6)]
        expected = p[0].copy()
        st = AdamState.for_arrays(p)
        m = np.zeros(6)
        v = np.zeros(6)
        lr, b1, b2, eps = 3e-3, 0.9, 0.999, 1e-8
        for t in range(1, 8):
            g = rng.normal(size=6)
            m = b1 * m + (1 - b1) * g
            v = b2 * v + (1 - b2) * g * g
            expected -= lr * (m / (1 - b1**t)) / (np.sqrt(v / (1 - b2**t)) + eps)
            adam_step(st, p, [g.copy()], lr=lr)
        npt.assert_allclose(p[0], expected, atol=1e-12)

    def test_nonfinite_gradient_faults(self):
        p = [np.zeros(2)]
        st = AdamState.for_arrays(p)
        with pytest.raises(NumericFault):
            adam_step(st, p, [np.array([1.0, np.nan])], lr=1e-3)


def _synthetic_set(n_pos, n_neg, seed=0):
    rng = np.random.default_rng(seed)
    pos = rng.uniform(0.01, 1.0, n_pos)
    neg = -rng.uniform(0.01, 1.0, n_neg)
    s = np.concatenate([pos, neg])
    return SampleSet("synth", rng.uniform(-1, 1, (n_pos + n_neg, 3)), s)


class TestBalancedBatch:
    def test_exact_split(self):
        samples = _synthetic_set(9000, 9000)
        x, s = make_balanced_batch(samples, 16384, seed=1)
        assert len(s) == 16384
        assert np.count_nonzero(s >= 0) == 8192
        assert np.count_nonzero(s < 0) == 8192

    def test_odd_count(self):
        samples = _synthetic_set(50, 50)
        _, s = make_balanced_batch(samples, 9, seed=1)
        assert np.count_nonzero(s >= 0) == 5
        assert np.count_nonzero(s < 0) == 4

    def test_imbalance_error_names_sign(self):
        samples = _synthetic_set(3, 100)
        with pytest.raises(BatchImbalanceError) as err:
            make_balanced_batch(samples, 8, seed=0)
        assert err.value.sign == "positive"

    def test_without_replacement(self):
        samples = _synthetic_set(64, 64)
        x, s = make_balanced_batch(samples, 128, seed=3)
        assert len(np.unique(x, axis=0)) == 128

    def test_deterministic(self):
        samples = _synthetic_set(500, 500)
        a = make_balanced_batch(samples, 64, seed=9)
        b = make_balanced_batch(samples, 64, seed=9)
        npt.assert_array_equal(a[0], b[0])
        npt.assert_array_equal(a[1], b[1])


@pytest.fixture(scope="module")
def sphere_samples():
    return sample_analytic(Sphere((0, 0, 0), 0.5),
                           PrepConfig(n_surface=3000, n_uniform=1200),
                           seed=21, shape_id="sphere")


NET_SMALL = NetConfig(latent_dim=0, hidden_width=64, n_layers=3, skip_layers=(),
                      dropout_rate=0.0, seed=3)


class TestTrainSingleShape:
    def test_zero_epochs_returns_init(self, sphere_samples):
        cfg = TrainConfig(decoder_lr=1e-3, epochs=0, samples_per_step=256, seed=1)
        params, record = train_single_shape(sphere_samples, NET_SMALL, cfg)
        init = init_params(NET_SMALL)
        for a, b in zip(params.flat_arrays(), init.flat_arrays()):
            npt.assert_array_equal(a, b)
        assert len(record) == 0

    def test_loss_history_length_and_decrease(self, sphere_samples):
        cfg = TrainConfig(decoder_lr=1e-3, epochs=150, samples_per_step=512, seed=1)
        params, record = train_single_shape(sphere_samples, NET_SMALL, cfg)
        assert len(record) == 150
        assert record.sdf_loss[-1] < record.sdf_loss[0]
        assert all(0.0 <= l <= 0.2 for l in record.sdf_loss)

    def test_requires_latent_free_net(self, sphere_samples):
        net = NetConfig(latent_dim=4, hidden_width=32, n_layers=2, skip_layers=())
        with pytest.raises(ValueError):
            train_single_shape(sphere_samples, net, TrainConfig(epochs=1))

    def test_csv_format(self, tmp_path, sphere_samples):
        cfg = TrainConfig(decoder_lr=1e-3, epochs=3, samples_per_step=128, seed=1)
        _, record = train_single_shape(sphere_samples, NET_SMALL, cfg)
        path = tmp_path / "loss.csv"
        record.write_csv(path)
        lines = path.read_text().splitlines()
        assert lines[0] == "epoch,sdf_loss,reg_loss,seconds"
        assert len(lines) == 4
        assert lines[1].startswith("0,")


def _box_family_sets(n_shapes=3, seed=0):
    from sdfforge.families import make_family

    members = make_family("boxes", n_shapes)
    prep = PrepConfig(n_surface=1500, n_uniform=600)
    return [
        sample_analytic(m.shape, prep, seed=seed + i, shape_id=m.shape_id)
        for i, m in enumerate(members)
    ]


NET_LATENT = NetConfig(latent_dim=4, hidden_width=48, n_layers=3, skip_layers=(),
                       dropout_rate=0.0, seed=5)


class TestTrainAutoDecoder:
    def test_reg_shrinks_codes_when_dominant(self):
        sets = _box_family_sets(2)
        cfg = TrainConfig(decoder_lr=1e-4, latent_lr=1e-3, reg_weight=1e4,
                          latent_init_stddev=0.05, epochs=40,
                          samples_per_step=128, seed=2)
        _, codebook, record = train_auto_decoder(sets, NET_LATENT, cfg)
        reg = np.asarray(record.reg_loss)
        assert np.all(np.diff(reg) <= 1e-12)  # monotone decay toward zero
        assert reg[-1] < 0.5 * reg[0]

    def test_single_shape_with_latent_matches_plain_training(self, sphere_samples):
        # one free code should not hurt much relative to a latent-free fit
        budget = dict(epochs=300, samples_per_step=512, seed=7)
        plain_cfg = TrainConfig(decoder_lr=1e-3, **budget)
        _, plain = train_single_shape(sphere_samples, NET_SMALL, plain_cfg)
        net1 = NetConfig(latent_dim=1, hidden_width=64, n_layers=3, skip_layers=(),
                         dropout_rate=0.0, seed=3)
        coded_cfg = TrainConfig(decoder_lr=1e-3, latent_lr=1e-3, reg_weight=1e-4, **budget)
        _, _, coded = train_auto_decoder([sphere_samples], net1, coded_cfg)
        tail_plain = np.mean(plain.sdf_loss[-20:])
        tail_coded = np.mean(coded.sdf_loss[-20:])
        assert tail_coded <= 2.0 * tail_plain

    def test_objective_decreases(self):
        sets = _box_family_sets(3)
        cfg = TrainConfig(decoder_lr=1e-3, epochs=100, samples_per_step=256, seed=4)
        _, _, record = train_auto_decoder(sets, NET_LATENT, cfg)
        assert record.objective()[-1] < record.objective()[0]

    def test_duplicate_ids_rejected(self):
        sets = _box_family_sets(2)
        sets[1].shape_id = sets[0].shape_id
        with pytest.raises(ValueError):
            train_auto_decoder(sets, NET_LATENT, TrainConfig(epochs=1))

    def test_bit_identical_reruns(self, tmp_path):
        sets = _box_family_sets(2)
        cfg = TrainConfig(decoder_lr=1e-3, epochs=20, samples_per_step=128, seed=11)
        paths = []
        for tag in ("a", "b"):
            params, codebook, _ = train_auto_decoder(sets, NET_LATENT, cfg)
            path = tmp_path / f"{tag}.dsdf"
            write_checkpoint(path, params, codebook)
            paths.append(path)
        assert paths[0].read_bytes() == paths[1].read_bytes()

    def test_minibatched_shapes(self):
        sets = _box_family_sets(5)
        cfg = TrainConfig(decoder_lr=1e-3, epochs=30, samples_per_step=128,
                          shapes_per_batch=2, seed=4)
        params, codebook, record = train_auto_decoder(sets, NET_LATENT, cfg)
        assert len(codebook) == 5
        assert len(record) == 30


class TestLatentObjectiveGradient:
    def test_matches_finite_differences(self):
        # d/dz of (mean clamped-L1 + reg) against central differences, float64
        sets = _box_family_sets(1)
        samples = sets[0]
        net = NetConfig(latent_dim=4, hidden_width=24, n_layers=3, skip_layers=(),
                        dropout_rate=0.0, seed=5)
        params = init_params(net, dtype=np.float64)
        rng = np.random.default_rng(3)
        z = rng.normal(0, 0.1, 4)
        x = samples.positions[:256].astype(np.float64)
        s = samples.s[:256].astype(np.float64)
        lam, delta = 1e-2, 0.1

        def objective(zv):
            pred, _ = forward_batch(params, zv, x)
            return float(np.mean(clamped_l1(pred, s, delta)) + lam * np.dot(zv, zv))

        pred, tape = forward_batch(params, z, x)
        up = clamped_l1_grad(pred, s, delta) / len(x)
        gz = backward_batch(tape, up).z.sum(axis=0) + 2 * lam * z
        h = 1e-6
        for i in range(4):
            zp = z.copy(); zp[i] += h
            zm = z.copy(); zm[i] -= h
            fd = (objective(zp) - objective(zm)) / (2 * h)
            assert abs(fd - gz[i]) / max(abs(fd), abs(gz[i]), 1e-3) < 1e-5
