import numpy as np
import pytest

from satfuse.errors import ConfigError, CorruptionError, SatfuseError, ShapeError
from satfuse.raster import Raster
from satfuse.srcnn import (
    ArchConfig,
    PRESETS,
    backward,
    build_model,
    forward,
    infer_tiled,
    load_checkpoint,
    masked_mse,
    masked_mse_grad,
    preset,
    save_checkpoint,
)

from conftest import make_grid


def naive_forward(model, x):
    """Direct 6-loop convolution oracle with replicate padding and LeakyReLU."""
    slope = model.arch.slope
    a = x.astype(np.float64)
    for li, w in enumerate(model.weights):
        c_out, c_in, k, _ = w.shape
        p = k // 2
        H, W = a.shape[1], a.shape[2]
        out = np.zeros((c_out, H, W))
        for o in range(c_out):
            for r in range(H):
                for c in range(W):
                    acc = 0.0
                    for i in range(c_in):
                        for dr in range(k):
                            for dc in range(k):
                                rr = min(max(r + dr - p, 0), H - 1)
                                cc = min(max(c + dc - p, 0), W - 1)
                                acc += w[o, i, dr, dc] * a[i, rr, cc]
                    out[o, r, c] = acc
        if li != len(model.weights) - 1:
            out = np.where(out > 0, out, slope * out)
        a = out
    return a


class TestArchConfig:
    def test_preset_parameter_counts(self):
        assert preset("spectral").parameter_count() == 114624
        assert preset("spectral-rgb").parameter_count() == 9 * 9 * 3 * 64 + 25 * 64 * 32 + 25 * 32 * 8
        assert preset("spatial").parameter_count() == 13 * 13 * 8 * 64 + 25 * 64 * 32 + 25 * 32 * 8

    def test_rgb_only_variant_is_plain_config(self):
        # the camera-only scenario differs from the fused one purely by config
        a = preset("spectral")
        b = preset("spectral-rgb")
        assert a.layers == b.layers
        assert (a.in_channels, b.in_channels) == (11, 3)

    def test_validation(self):
        with pytest.raises(ConfigError):
            ArchConfig(3, 2, ((3, 2),))  # single layer
        with pytest.raises(ConfigError):
            ArchConfig(3, 2, ((4, 8), (3, 2)))  # even kernel
        with pytest.raises(ConfigError):
            ArchConfig(3, 2, ((3, 8), (3, 4)))  # last filters != out_channels
        with pytest.raises(ConfigError):
            preset("nope")


class TestBuildModel:
    def test_deterministic_per_seed(self):
        a = build_model(preset("spectral-rgb"), seed=7)
        b = build_model(preset("spectral-rgb"), seed=7)
        for wa, wb in zip(a.weights, b.weights):
            assert np.array_equal(wa, wb)
        c = build_model(preset("spectral-rgb"), seed=8)
        assert not np.array_equal(a.weights[0], c.weights[0])

    def test_parameter_count_matches_weights(self):
        m = build_model(preset("spectral"), seed=0)
        assert m.parameter_count() == 114624


class TestForward:
    def test_zero_weights_zero_output(self):
        m = build_model(ArchConfig(2, 2, ((3, 4), (3, 2))), seed=0)
        m.weights = [np.zeros_like(w) for w in m.weights]
        x = np.random.default_rng(0).uniform(size=(2, 8, 8))
        assert np.array_equal(forward(m, x), np.zeros((2, 8, 8)))

    def test_identity_kernel(self):
        # two-layer net wired to pass the input through untouched
        m = build_model(ArchConfig(1, 1, ((1, 1), (1, 1))), seed=0)
        big = 1e6  # LeakyReLU positive branch for all practical values
        m.weights[0] = np.array([[[[big]]]])
        m.weights[1] = np.array([[[[1.0 / big]]]])
        x = np.random.default_rng(1).uniform(0.1, 1.0, size=(1, 6, 6))
        assert np.allclose(forward(m, x), x, atol=1e-12)

    def test_matches_naive_convolution_oracle(self):
        rng = np.random.default_rng(2)
        m = build_model(ArchConfig(4, 3, ((3, 5), (3, 3)), slope=0.1), seed=3)
        x = rng.standard_normal((4, 8, 8))
        got = forward(m, x)
        want = naive_forward(m, x)
        assert got.shape == (3, 8, 8)
        assert np.max(np.abs(got - want)) < 1e-10

    def test_shape_invariance_all_presets(self):
        rng = np.random.default_rng(3)
        for name, arch in PRESETS.items():
            m = build_model(arch, seed=0)
            x = rng.uniform(size=(arch.in_channels, 16, 20))
            y = forward(m, x)
            assert y.shape == (arch.out_channels, 16, 20), name

    def test_channel_mismatch(self):
        m = build_model(preset("spectral-rgb"), seed=0)
        with pytest.raises(ShapeError):
            forward(m, np.zeros((5, 16, 16)))

    def test_too_small_input(self):
        m = build_model(preset("spectral-rgb"), seed=0)
        with pytest.raises(ShapeError):
            forward(m, np.zeros((3, 4, 4)))

    def test_translation_equivariance_interior(self):
        rng = np.random.default_rng(4)
        arch = ArchConfig(2, 2, ((5, 6), (3, 2)))
        m = build_model(arch, seed=1)
        x = rng.uniform(size=(2, 24, 24))
        y = forward(m, x)
        xs = np.roll(x, (1, 1), axis=(1, 2))
        ys = forward(m, xs)
        r = arch.receptive_radius + 1
        assert np.allclose(
            ys[:, r + 1 : -r, r + 1 : -r], y[:, r : -r - 1, r : -r - 1], atol=1e-10
        )


class TestBackward:
    def test_zero_grad_out(self):
        m = build_model(ArchConfig(2, 1, ((3, 3), (3, 1))), seed=0)
        x = np.random.default_rng(0).uniform(size=(2, 7, 7))
        grads, gin = backward(m, x, np.zeros((1, 7, 7)))
        assert all(np.array_equal(g, np.zeros_like(g)) for g in grads)
        assert np.array_equal(gin, np.zeros_like(x))

    def test_loss_gradient_zero_at_minimum(self):
        rng = np.random.default_rng(1)
        pred = rng.uniform(size=(2, 5, 5))
        mask = np.ones((5, 5))
        g = masked_mse_grad(pred, pred.copy(), mask)
        assert np.array_equal(g, np.zeros_like(pred))
        assert masked_mse(pred, pred.copy(), mask) == 0.0

    @pytest.mark.parametrize("trial", range(20))
    def test_gradient_matches_central_differences(self, trial):
        rng = np.random.default_rng(100 + trial)
        c_in = int(rng.integers(1, 4))
        c_mid = int(rng.integers(2, 5))
        c_out = int(rng.integers(1, 3))
        k1, k2 = [int(rng.choice([1, 3, 5])) for _ in range(2)]
        arch = ArchConfig(c_in, c_out, ((k1, c_mid), (k2, c_out)), slope=0.1)
        m = build_model(arch, seed=trial)
        H = W = int(rng.integers(max(k1, k2), 8))
        x = rng.uniform(0.05, 1.0, size=(c_in, H, W))
        target = rng.uniform(size=(c_out, H, W))
        mask = (rng.uniform(size=(H, W)) > 0.2).astype(np.float64)
        if not mask.any():
            mask[0, 0] = 1.0

        pred = forward(m, x)
        grads, _ = backward(m, x, masked_mse_grad(pred, target, mask))

        eps = 1e-6
        worst = 0.0
        for li, w in enumerate(m.weights):
            flat_grad = grads[li].ravel()
            idxs = rng.choice(w.size, size=min(10, w.size), replace=False)
            for fi in idxs:
                orig = w.ravel()[fi]
                w.ravel()[fi] = orig + eps
                lp = masked_mse(forward(m, x), target, mask)
                w.ravel()[fi] = orig - eps
                lm = masked_mse(forward(m, x), target, mask)
                w.ravel()[fi] = orig
                fd = (lp - lm) / (2 * eps)
                scale = max(abs(fd), abs(flat_grad[fi]), 1e-8)
                worst = max(worst, abs(fd - flat_grad[fi]) / scale)
        assert worst < 1e-5


class TestInferTiled:
    def _raster(self, seed, w, h, bands):
        rng = np.random.default_rng(seed)
        vals = rng.uniform(0, 1, size=(bands, h, w)).astype(np.float32)
        return Raster(make_grid(w, h, pixel=1.0), vals, [f"c{i}" for i in range(bands)])

    def test_single_tile_equals_forward(self):
        m = build_model(ArchConfig(3, 2, ((5, 6), (3, 2))), seed=0)
        r = self._raster(0, 64, 64, 3)
        out = infer_tiled(m, r)
        whole = forward(m, r.filled_values())
        assert np.allclose(out.values, whole.astype(np.float32), atol=0)

    def test_large_image_matches_whole_forward(self):
        m = build_model(ArchConfig(2, 2, ((5, 4), (3, 2))), seed=1)
        r = self._raster(1, 700, 700, 2)
        out = infer_tiled(m, r, tile=256, overlap=16)
        whole = forward(m, r.filled_values())
        assert np.max(np.abs(out.values.astype(np.float64) - whole)) < 1e-5

    def test_fully_masked_propagates(self):
        m = build_model(ArchConfig(2, 2, ((3, 4), (3, 2))), seed=2)
        r = self._raster(2, 32, 32, 2)
        r.mask[:] = False
        out = infer_tiled(m, r)
        assert not out.mask.any()

    def test_channel_mismatch(self):
        m = build_model(preset("spectral"), seed=0)
        with pytest.raises(ShapeError):
            infer_tiled(m, self._raster(0, 32, 32, 3))


class TestCheckpoints:
    def test_round_trip_forward_equivalent(self, tmp_path):
        m = build_model(preset("spectral-rgb"), seed=5)
        p = tmp_path / "model.ckpt"
        m.train_meta = {"seed": 5, "epochs": 3}
        save_checkpoint(m, p)
        back = load_checkpoint(p)
        assert back.arch == m.arch
        assert back.train_meta == m.train_meta
        x = np.random.default_rng(0).uniform(size=(3, 16, 16))
        a = forward(m, x)
        b = forward(back, x)
        assert np.max(np.abs(a - b)) < 1e-6

    def test_spectral_payload_size(self, tmp_path):
        m = build_model(preset("spectral"), seed=0)
        p = tmp_path / "spectral.ckpt"
        save_checkpoint(m, p)
        data = p.read_bytes()
        hlen = int(np.frombuffer(data[:4], dtype="<u4")[0])
        assert len(data) - 4 - hlen == 114624 * 4
        # whole-file size comfortably under 0.60 MB
        assert len(data) <= 0.60 * 1e6

    def test_truncated_payload(self, tmp_path):
        m = build_model(preset("spectral-rgb"), seed=0)
        p = tmp_path / "m.ckpt"
        save_checkpoint(m, p)
        data = p.read_bytes()
        q = tmp_path / "trunc.ckpt"
        q.write_bytes(data[:-17])
        with pytest.raises(CorruptionError):
            load_checkpoint(q)

    def test_fuzzed_truncations_are_structured(self, tmp_path):
        m = build_model(ArchConfig(2, 1, ((3, 3), (3, 1))), seed=0)
        p = tmp_path / "m.ckpt"
        save_checkpoint(m, p)
        data = p.read_bytes()
        rng = np.random.default_rng(0)
        for cut in sorted(set(int(c) for c in rng.integers(0, len(data), 30))):
            q = tmp_path / "cut.ckpt"
            q.write_bytes(data[:cut])
            with pytest.raises(SatfuseError):
                load_checkpoint(q)
