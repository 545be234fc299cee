from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fblcode import cnn_ae
from fblcode import nngraph as ng
from fblcode.channel import NoiseSpec, average_power, substream
from fblcode.cnn_ae import (AeConfig, CheckpointError, ConfigError, TrainConfig, build_model,
                            derive_config, encode_forward, infer, load_checkpoint,
                            save_checkpoint, table_shapes, train)

TRACE_NAMES = ["input", "enc0", "enc1", "enc2", "reshape", "mod0", "mod1", "normalize",
               "channel", "demod0", "demod1", "reshape", "dec0", "dec1", "dec2"]


def tiny_config(**kw):
    base = dict(n=8, rate=1, r_cod="1/2", k_mod=2, M1=8, M2=4, kernel=3, train_snr_db=10.0, seed=0)
    base.update(kw)
    return derive_config(**base)


def random_bits(cfg, frames, seed=0):
    return substream(seed, 1).integers(0, 2, (frames, cfg.K), dtype=np.uint8)


@pytest.mark.parametrize("rate,rcod,kmod,expect", [
    (2, "1/2", 4, (256, 512, 256, 1, 2)),
    (1, "1/2", 2, (128, 256, 128, 1, 2)),
    (Fraction(8, 3), "2/3", 4, (341 + Fraction(1, 3), None, None, None, None)),
])
def test_derive_config_gcd(rate, rcod, kmod, expect):
    if expect[1] is None:
        with pytest.raises(ConfigError):
            derive_config(128, rate, rcod, kmod)
        return
    cfg = derive_config(128, rate, rcod, kmod)
    assert (cfg.K, cfg.N, cfg.L, cfg.K_sub, cfg.N_sub) == expect
    assert cfg.rate == Fraction(rate) and cfg.k_mod == kmod


def test_derive_config_rejects_inconsistent_rate():
    with pytest.raises(ConfigError):
        derive_config(128, 2, "1/2", 2)
    with pytest.raises(ConfigError):
        derive_config(5, "1/2", "1/4", 2)
    with pytest.raises(ConfigError):
        AeConfig(n=8, K=8, N=16, M1=0)


def test_parameter_count_near_published_figure():
    cfg = derive_config(128, 2, "1/2", 4, M1=100, M2=20, kernel=5)
    count = build_model(cfg).num_params
    assert count == 105_547
    assert abs(count - 103_861) / 103_861 < 0.05


def test_kernel_one_is_much_smaller():
    cfg = derive_config(128, 2, "1/2", 4, M1=100, M2=20, kernel=1)
    assert build_model(cfg).num_params < 30_000


@st.composite
def valid_configs(draw):
    n = draw(st.sampled_from([4, 6, 8, 12, 16, 32]))
    kmod = draw(st.integers(1, 8))
    rcod = draw(st.sampled_from([Fraction(1, 4), Fraction(1, 3), Fraction(1, 2),
                                 Fraction(2, 3), Fraction(3, 4), Fraction(5, 6), Fraction(1)]))
    if (n * kmod * rcod).denominator != 1:
        rcod = Fraction(1, 2) if (n * kmod) % 2 == 0 else Fraction(1)
    return derive_config(n, rcod * kmod, rcod, kmod, M1=3, M2=2, kernel=3)


@settings(max_examples=50, deadline=None)
@given(valid_configs())
def test_shape_chain_matches_table(cfg):
    model = build_model(cfg)
    model.trace_shapes = True
    bits = random_bits(cfg, 4)
    bits[0] = 1  # an untrained model maps the all-zero batch to a zero codeword
    model.forward(bits, 0.1, substream(0, 0))
    assert [name for name, _ in model.shape_trace] == TRACE_NAMES
    assert [shape for _, shape in model.shape_trace] == table_shapes(cfg)
    assert cfg.K == cfg.K_sub * cfg.L and cfg.N == cfg.N_sub * cfg.L == cfg.n * cfg.k_mod


def test_forward_outputs_strictly_inside_unit_interval():
    cfg = tiny_config()
    out = build_model(cfg).forward(random_bits(cfg, 16), 0.1, substream(0, 0)).value
    assert out.shape == (16, cfg.K, 1)
    assert np.all((out > 0) & (out < 1))


def test_encoder_power_and_determinism():
    cfg = derive_config(128, 1, "1/2", 2, M1=8, M2=4)
    model = build_model(cfg)
    bits = random_bits(cfg, 500)
    x = encode_forward(bits, model)
    assert x.shape == (500, 128, 2)
    assert np.all(np.abs(average_power(x.astype(np.float64)) - 1) < 1e-6)
    assert np.array_equal(x, encode_forward(bits, model))


def test_every_weight_receives_gradient():
    cfg = tiny_config()
    model = build_model(cfg)
    bits = random_bits(cfg, 32)
    ng.bce_loss(model.forward(bits, 0.1, substream(0, 0)), bits[..., None]).backward()
    for p in model.parameters():
        norm = float(np.linalg.norm(p.grad))
        if p.name.endswith("conv.bias"):
            # a bias feeding batch normalization is cancelled by the mean
            # subtraction; its gradient is zero up to round-off
            assert norm < 1e-5
        else:
            assert norm > 0, p.name


def test_infer_thresholds_to_bits():
    cfg = tiny_config()
    model = build_model(cfg)
    bits = random_bits(cfg, 64)
    out = infer(bits, model, NoiseSpec.from_snr_db(5.0, seed=1))
    assert out.dtype == np.uint8 and set(np.unique(out)) <= {0, 1}
    soft = model.decode_soft(model.encode(bits))
    assert np.array_equal(model.decode(model.encode(bits)), (soft >= 0.5).astype(np.uint8))


def _train_tiny(seed=0, epochs=2):
    cfg = tiny_config(seed=seed)
    model = build_model(cfg)
    result = train(model, cfg, TrainConfig(batch_size=50, epochs=epochs, train_frames=500))
    return cfg, model, result


def test_training_is_deterministic(tmp_path):
    cfg, m1, r1 = _train_tiny()
    _, m2, r2 = _train_tiny()
    assert r1.losses == r2.losses
    a = save_checkpoint(m1, cfg, tmp_path / "a.fblae").read_bytes()
    b = save_checkpoint(m2, cfg, tmp_path / "b.fblae").read_bytes()
    assert a == b
    _, _, r3 = _train_tiny(seed=1)
    assert r3.losses != r1.losses


def test_checkpoint_roundtrip_is_exact(tmp_path):
    cfg, model, _ = _train_tiny()
    path = save_checkpoint(model, cfg, tmp_path / "m.fblae")
    loaded = load_checkpoint(path)
    bits = random_bits(cfg, 100, seed=3)
    assert loaded.cfg == cfg
    assert np.array_equal(loaded.encode(bits), model.eval_mode().encode(bits))
    y = model.encode(bits) + 0.1
    assert np.array_equal(loaded.decode_soft(y), model.decode_soft(y))
    assert path.read_bytes().startswith(b"FBLAE1\n")


def test_checkpoint_rejects_bad_magic(tmp_path):
    cfg, model, _ = _train_tiny(epochs=1)
    data = bytearray(cnn_ae.checkpoint_bytes(model))
    data[0:6] = b"XXXXXX"
    (tmp_path / "bad").write_bytes(bytes(data))
    with pytest.raises(CheckpointError, match="magic"):
        load_checkpoint(tmp_path / "bad")


def test_checkpoint_rejects_count_mismatch(tmp_path):
    cfg, model, _ = _train_tiny(epochs=1)
    data = cnn_ae.checkpoint_bytes(model)
    count = str(model.num_params).encode()
    data = data.replace(b'"param_count": ' + count, b'"param_count": ' + str(model.num_params + 1).encode())
    (tmp_path / "bad").write_bytes(data)
    with pytest.raises(CheckpointError, match="trainable"):
        load_checkpoint(tmp_path / "bad")


def test_checkpoint_rejects_truncation(tmp_path):
    cfg, model, _ = _train_tiny(epochs=1)
    (tmp_path / "bad").write_bytes(cnn_ae.checkpoint_bytes(model)[:-8])
    with pytest.raises(CheckpointError):
        load_checkpoint(tmp_path / "bad")


def test_noiseless_identity_is_learnable():
    cfg = derive_config(8, 1, "1/2", 2, M1=32, M2=16, kernel=3, train_snr_db=100.0, seed=0)
    model = build_model(cfg)
    train(model, cfg, TrainConfig(lr=3e-3, batch_size=100, epochs=6, train_frames=10_000))
    bits = random_bits(cfg, 10_000, seed=7)
    decoded = infer(bits, model, NoiseSpec.from_snr_db(100.0, seed=2))
    assert np.count_nonzero(np.any(decoded != bits, axis=1)) == 0


def test_smoothed_loss_mostly_descends():
    cfg = tiny_config(M1=16, M2=8)
    model = build_model(cfg)
    result = train(model, cfg, TrainConfig(lr=1e-3, batch_size=100, epochs=1, train_frames=100_000))
    assert cnn_ae.smoothed_descent_fraction(result.losses, 100) >= 0.9


def test_divergence_is_reported():
    cfg = tiny_config()
    model = build_model(cfg)
    model.parameters()[0].value[...] = np.nan
    with pytest.raises(cnn_ae.TrainingDiverged):
        train(model, cfg, TrainConfig(batch_size=50, epochs=1, train_frames=50))
