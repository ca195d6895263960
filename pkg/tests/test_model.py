import numpy as np
import pytest
from scipy import signal, special

from src.autodiff import primitives as P
from src.autodiff.gradcheck import gradcheck
from src.autodiff.rng import make_rng
from src.autodiff.tensor import Tensor, no_grad
from src.errors import CheckpointError, ShapeError
from src.model.cato import ModelState, chart_of, load_model, model_forward, save_model
from src.model.config import ARCH_PRESETS, CatoConfig, arch_preset
from src.model.local import LocalStencil, local_forward
from src.physics.loss import LOSS_PRESETS, total_loss
from src.physics.mesh import Mesh, uniform_mesh

TINY = CatoConfig(layers=1, channels=8, heads=2, chart_hidden=8, lift_hidden=8, mlp_hidden=16)


# ---- 独立的 numpy 直写实现 ----


def np_gelu(x):
    return 0.5 * x * (1.0 + special.erf(x / np.sqrt(2.0)))


def np_layernorm(x, gamma, beta, eps=1e-12):
    mu = x.mean(axis=-1, keepdims=True)
    var = ((x - mu) ** 2).mean(axis=-1, keepdims=True)
    return (x - mu) / np.sqrt(var + eps) * gamma + beta


def np_linear(x, layer):
    out = x @ layer.W.data
    return out + layer.b.data if layer.b is not None else out


def np_ffn(x, ffn):
    return np_linear(np_gelu(np_linear(x, ffn.fc1)), ffn.fc2)


def np_rope(v, p, theta):
    dh = v.shape[-1]
    out = np.empty_like(v)
    for r in range(dh // 2):
        angle = p * theta ** (-2.0 * r / dh)
        c, s = np.cos(angle), np.sin(angle)
        out[..., 2 * r] = c * v[..., 2 * r] - s * v[..., 2 * r + 1]
        out[..., 2 * r + 1] = s * v[..., 2 * r] + c * v[..., 2 * r + 1]
    return out


def np_sequence_attention(attn, tokens, positions, w_out, theta):
    dh = attn.head_dim
    q, k, v = tokens @ attn.W_Q.data, tokens @ attn.W_K.data, tokens @ attn.W_V.data
    heads = []
    for m in range(attn.heads):
        cols = slice(m * dh, (m + 1) * dh)
        qm = np_rope(q[:, cols], attn.rope.scale * positions[:, None], theta)
        km = np_rope(k[:, cols], attn.rope.scale * positions[:, None], theta)
        logits = qm @ km.T / np.sqrt(dh)
        logits -= logits.max(axis=-1, keepdims=True)
        weights = np.exp(logits) / np.exp(logits).sum(axis=-1, keepdims=True)
        heads.append(weights @ v[:, cols])
    return np.concatenate(heads, axis=-1) @ w_out


def np_local(stencil, x):
    out = np.zeros_like(x)
    for b in range(x.shape[0]):
        for c in range(x.shape[-1]):
            out[b, :, :, c] = signal.correlate2d(x[b, :, :, c], stencil.depthwise.data[c], mode="same")
    out = np_gelu(out + stencil.depthwise_bias.data)
    return out @ stencil.pointwise.data + stencil.pointwise_bias.data


def np_forward(ms, coords, feats):
    config = ms.config
    batch, height, width, _ = feats.shape
    x = np.broadcast_to(coords, (batch, height, width, 2))
    hidden = np_linear(x, ms.chart.V1)
    zeta = np.tanh(np_linear(hidden * special.expit(hidden), ms.chart.V2))
    h = np_ffn(np.concatenate([x, feats], axis=-1), ms.lift)
    for block in ms.blocks:
        normed = np_layernorm(h, block.norm1.gamma.data, block.norm1.beta.data)
        update = np.zeros_like(h)
        for b in range(batch):
            for i in range(height):
                update[b, i] += np_sequence_attention(
                    block.attn, normed[b, i], zeta[b, i, :, 0], block.attn.W_O_row.data, config.theta
                )
            for j in range(width):
                update[b, :, j] += np_sequence_attention(
                    block.attn, normed[b, :, j], zeta[b, :, j, 1], block.attn.W_O_col.data, config.theta
                )
        update += np_local(block.local, normed)
        h_tilde = h + update
        h = h_tilde + np_ffn(np_layernorm(h_tilde, block.norm2.gamma.data, block.norm2.beta.data), block.mlp)
    h = np_layernorm(h, ms.final_norm.gamma.data, ms.final_norm.beta.data).reshape(batch, height * width, -1)
    return np_linear(h, ms.readout_u), np_linear(h, ms.readout_q)


def randomize_readouts(ms, seed=11):
    rng = make_rng(seed)
    for layer in (ms.readout_u, ms.readout_q):
        layer.W.data = rng.standard_normal(layer.W.shape) * 0.5
        layer.b.data = rng.standard_normal(layer.b.shape) * 0.1


def tiny_inputs(batch=2, height=4, width=5, seed=3):
    rng = make_rng(seed)
    coords = uniform_mesh(height, width).coords
    feats = rng.uniform(1.0, 3.0, size=(batch, height, width, 1))
    return coords, feats


# ---- 测试 ----


def test_readouts_start_at_zero():
    ms = ModelState(TINY, seed=0)
    coords, feats = tiny_inputs()
    with no_grad():
        u_hat, q_hat = model_forward(ms, coords, feats)
    assert u_hat.shape == (2, 20, 1)
    assert q_hat.shape == (2, 20, 2)
    assert np.all(u_hat.numpy() == 0.0)
    assert np.all(q_hat.numpy() == 0.0)


def test_forward_matches_straight_line_reimplementation():
    config = CatoConfig(layers=2, channels=8, heads=2, chart_hidden=6, kernel_size=3)
    ms = ModelState(config, seed=5)
    randomize_readouts(ms)
    coords, feats = tiny_inputs(batch=2, height=5, width=4)
    with no_grad():
        u_hat, q_hat = model_forward(ms, coords, feats)
    u_ref, q_ref = np_forward(ms, coords, feats)
    np.testing.assert_allclose(u_hat.numpy(), u_ref, atol=1e-10)
    np.testing.assert_allclose(q_hat.numpy(), q_ref, atol=1e-10)


def test_tiny_model_gradients():
    config = CatoConfig(layers=1, channels=8, heads=2, chart_hidden=4, lift_hidden=8, mlp_hidden=8)
    ms = ModelState(config, seed=1)
    randomize_readouts(ms)
    coords, feats = tiny_inputs(batch=1, height=4, width=4)
    target = make_rng(9).standard_normal((1, 4, 4))
    mesh = Mesh(coords)

    def loss():
        return total_loss(model_forward(ms, coords, feats), target, mesh, LOSS_PRESETS["darcy"]).tensor

    assert gradcheck(loss, ms.parameters()) < 1e-5


def test_same_seed_same_parameters():
    a, b = ModelState(TINY, seed=4), ModelState(TINY, seed=4)
    for (name_a, pa), (name_b, pb) in zip(a.named_parameters(), b.named_parameters()):
        assert name_a == name_b
        np.testing.assert_array_equal(pa.data, pb.data)
    c = ModelState(TINY, seed=5)
    assert not np.array_equal(a.blocks[0].attn.W_Q.data, c.blocks[0].attn.W_Q.data)


def test_parameter_names_are_paths():
    names = [name for name, _ in ModelState(TINY).named_parameters()]
    assert "blocks.0.attn.W_Q" in names
    assert "blocks.0.local.depthwise" in names
    assert "readout_u.W" in names
    assert len(names) == len(set(names))


def test_variants_and_modes():
    baseline = ModelState(CatoConfig(layers=2, channels=8, heads=2, variant="lift-readout"))
    assert baseline.blocks == []
    normalized = ModelState(CatoConfig(layers=1, channels=8, heads=2, chart_mode="normalized"))
    assert not any(name.startswith("chart.") for name, _ in normalized.named_parameters())
    core = ModelState(CatoConfig(layers=1, channels=8, heads=2, core_mode=True))
    assert core.blocks[0].local is None
    assert core.blocks[0].norm1.identity


def test_config_validation():
    with pytest.raises(ValueError):
        CatoConfig(channels=6, heads=4).validate()
    with pytest.raises(ValueError):
        CatoConfig(channels=6, heads=2).validate()
    with pytest.raises(ValueError):
        CatoConfig(chart_mode="polar").validate()
    with pytest.raises(ValueError):
        CatoConfig(core_mode=True, dropout=0.1).validate()
    with pytest.raises(ValueError):
        CatoConfig.from_dict({"layers": 2, "width": 3})
    with pytest.raises(ValueError):
        arch_preset("unknown")


def test_architecture_presets():
    assert ARCH_PRESETS["darcy"].layers == 8
    assert ARCH_PRESETS["darcy"].channels == 96
    assert ARCH_PRESETS["desk"].channels == 32
    assert arch_preset("desk", layers=3).layers == 3


def test_feature_dimension_mismatch():
    ms = ModelState(TINY)
    coords, feats = tiny_inputs()
    with pytest.raises(ShapeError):
        model_forward(ms, coords, np.concatenate([feats, feats], axis=-1))
    with pytest.raises(ShapeError):
        model_forward(ms, coords, None)
    with pytest.raises(ShapeError):
        model_forward(ms, coords[:3], feats)


def test_normalizer_buffers_shift_outputs():
    ms = ModelState(TINY)
    ms.set_normalizer(
        {"feat_mean": np.array([2.0]), "feat_std": np.array([0.5]), "target_mean": np.array([3.0]), "target_std": np.array([2.0])}
    )
    coords, feats = tiny_inputs()
    with no_grad():
        u_hat, _ = model_forward(ms, coords, feats)
    np.testing.assert_allclose(u_hat.numpy(), 3.0)


def test_checkpoint_roundtrip(tmp_path):
    ms = ModelState(TINY, seed=2)
    randomize_readouts(ms)
    ms.set_normalizer(
        {"feat_mean": np.array([1.0]), "feat_std": np.array([2.0]), "target_mean": np.array([0.5]), "target_std": np.array([1.5])}
    )
    path = str(tmp_path / "model.cato1")
    save_model(path, ms)
    restored = load_model(path)
    assert restored.config == ms.config
    coords, feats = tiny_inputs()
    with no_grad():
        np.testing.assert_array_equal(model_forward(ms, coords, feats)[0].numpy(), model_forward(restored, coords, feats)[0].numpy())
    np.testing.assert_array_equal(restored.normalizer("target_std"), [1.5])

    with pytest.raises(CheckpointError):
        load_model(path, CatoConfig(layers=1, channels=16, heads=2))
    (tmp_path / "model.cato1.json").unlink()
    with pytest.raises(FileNotFoundError):
        load_model(path)


def test_chart_is_shared_across_blocks():
    ms = ModelState(TINY, seed=0)
    zeta = chart_of(ms, uniform_mesh(4, 4)).numpy()
    assert zeta.shape == (1, 4, 4, 2)
    assert np.all(np.abs(zeta) < 1.0)


def test_local_stencil_matches_correlation():
    stencil = LocalStencil(make_rng(0), channels=3, kernel_size=3)
    stencil.depthwise_bias.data = make_rng(1).standard_normal(3)
    x = make_rng(2).standard_normal((2, 5, 6, 3))
    with no_grad():
        out = local_forward(stencil, Tensor(x)).numpy()
    np.testing.assert_allclose(out, np_local(stencil, x), atol=1e-12)


def test_local_stencil_receptive_field():
    stencil = LocalStencil(make_rng(0), channels=2, kernel_size=3)
    x = np.zeros((1, 7, 7, 2))
    x[0, 3, 3, :] = 1.0
    with no_grad():
        out = local_forward(stencil, Tensor(x)).numpy()
    # 零偏置时 GELU(0)=0，3×3 邻域之外输出为 0
    outside = np.ones((7, 7), dtype=bool)
    outside[2:5, 2:5] = False
    assert np.all(out[0][outside] == 0.0)


def test_local_stencil_gradients_and_validation():
    stencil = LocalStencil(make_rng(0), channels=2, kernel_size=3)
    x = Tensor(make_rng(1).standard_normal((1, 4, 4, 2)), requires_grad=True)
    weights = Tensor(make_rng(2).standard_normal((1, 4, 4, 2)))
    loss = lambda: P.reduce_sum(P.mul(local_forward(stencil, x), weights))
    assert gradcheck(loss, [x, stencil.depthwise, stencil.pointwise]) < 1e-5
    with pytest.raises(ShapeError):
        LocalStencil(make_rng(0), channels=2, kernel_size=2)
    with pytest.raises(ShapeError):
        local_forward(stencil, Tensor(np.ones((1, 4, 4, 3))))
