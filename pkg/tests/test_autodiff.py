import numpy as np
import pytest

from src.autodiff import primitives as P
from src.autodiff.checkpoint import decode_records, encode_records, load_records, save_records
from src.autodiff.gradcheck import gradcheck
from src.autodiff.module import FeedForward, LayerNorm, Linear, Module
from src.autodiff.optim import OneCycleSchedule, OptimizerState, adamw_step
from src.autodiff.rng import make_rng
from src.autodiff.tensor import FlopCounter, Parameter, Tensor, backward, flop_scope, get_tape, no_grad
from src.errors import CheckpointError, NumericError, ShapeError

GRAD_TOL = 1e-5


def leaf(rng, *shape, low=None):
    data = rng.standard_normal(shape)
    if low is not None:
        data = np.abs(data) + low
    return Tensor(data, requires_grad=True)


def projected(out, weights):
    """用固定随机权重把输出投影成标量，覆盖所有输出分量"""
    return P.reduce_sum(P.mul(out, Tensor(weights)))


def check_unary(rng, op, shape=(3, 4), low=None, **attrs):
    x = leaf(rng, *shape, low=low)
    weights = rng.standard_normal(op(x, **attrs).shape)
    get_tape().clear()
    assert gradcheck(lambda: projected(op(x, **attrs), weights), [x]) < GRAD_TOL


@pytest.mark.parametrize(
    "op",
    [P.tanh, P.silu, P.gelu, P.sin, P.cos, P.square, P.softmax, P.layernorm],
    ids=lambda fn: fn.__name__,
)
def test_elementwise_and_normalizing_primitives(rng, op):
    check_unary(rng, op)


def test_sqrt_on_positive_input(rng):
    check_unary(rng, P.sqrt, low=0.5)


def test_binary_primitives_with_broadcasting(rng):
    a = leaf(rng, 2, 3, 4)
    b = leaf(rng, 4)
    for op in (P.add, P.sub, P.mul):
        weights = rng.standard_normal((2, 3, 4))
        assert gradcheck(lambda: projected(op(a, b), weights), [a, b]) < GRAD_TOL


def test_scale_and_batched_matmul(rng):
    a = leaf(rng, 2, 3, 4)
    b = leaf(rng, 4, 5)
    weights = rng.standard_normal((2, 3, 5))
    assert gradcheck(lambda: projected(P.scale(P.matmul(a, b), 0.7), weights), [a, b]) < GRAD_TOL


def test_shape_primitives(rng):
    x = leaf(rng, 2, 3, 4)
    cases = [
        lambda: P.reshape(x, (6, 4)),
        lambda: P.transpose(x, (2, 0, 1)),
        lambda: P.gather(x, np.array([0, 2, 2, 1]), axis=1),
        lambda: P.concat([x, P.scale(x, 2.0)], axis=-1),
        lambda: P.reduce_sum(x, axis=(0, 2), keepdims=True),
        lambda: P.reduce_mean(x, axis=1),
    ]
    for build in cases:
        weights = rng.standard_normal(build().shape)
        get_tape().clear()
        assert gradcheck(lambda: projected(build(), weights), [x]) < GRAD_TOL


def test_reduce_max_routes_gradient_to_argmax(rng):
    x = Tensor(rng.permutation(12).reshape(3, 4).astype(float), requires_grad=True)
    backward(P.reduce_sum(P.reduce_max(x, axis=1)))
    expected = np.zeros((3, 4))
    expected[np.arange(3), np.argmax(x.data, axis=1)] = 1.0
    np.testing.assert_array_equal(x.grad, expected)


def test_depthwise_conv2d_gradients(rng):
    x = leaf(rng, 2, 5, 4, 3)
    kernel = leaf(rng, 3, 3, 3)
    weights = rng.standard_normal((2, 5, 4, 3))
    assert gradcheck(lambda: projected(P.depthwise_conv2d(x, kernel), weights), [x, kernel]) < GRAD_TOL


def test_depthwise_conv2d_identity_kernel():
    x = Tensor(np.arange(2 * 4 * 4 * 2, dtype=float).reshape(2, 4, 4, 2))
    kernel = np.zeros((2, 3, 3))
    kernel[:, 1, 1] = 1.0
    np.testing.assert_array_equal(P.depthwise_conv2d(x, Tensor(kernel)).numpy(), x.data)


def test_dropout_is_constant_mask(rng):
    x = leaf(rng, 6, 6)
    out = P.dropout(x, 0.5, make_rng(3))
    kept = out.numpy() != 0.0
    np.testing.assert_allclose(out.numpy()[kept], 2.0 * x.data[kept])
    assert P.dropout(x, 0.0, make_rng(3)) is x


def test_backward_accumulates_and_clears_tape(rng):
    x = leaf(rng, 3)
    backward(P.reduce_sum(P.scale(x, 2.0)))
    assert len(get_tape()) == 0
    backward(P.reduce_sum(P.scale(x, 3.0)))
    np.testing.assert_allclose(x.grad, np.full(3, 5.0))


def test_parameter_zero_grad_resets_to_zeros():
    param = Parameter(np.ones(4))
    backward(P.reduce_sum(P.square(param)))
    param.zero_grad()
    np.testing.assert_array_equal(param.grad, np.zeros(4))


def test_backward_rejects_non_scalar_and_untaped(rng):
    x = leaf(rng, 3)
    with pytest.raises(ShapeError):
        backward(P.scale(x, 1.0))
    with pytest.raises(ValueError):
        backward(Tensor(1.0))


def test_no_grad_records_nothing(rng):
    x = leaf(rng, 3)
    with no_grad():
        P.reduce_sum(P.square(x))
    assert len(get_tape()) == 0


def test_non_finite_values_raise():
    with pytest.raises(NumericError):
        Tensor([1.0, np.nan])
    with pytest.raises(NumericError):
        P.scale(Tensor([1e308]), 1e10)


def test_matmul_inner_dimension_mismatch():
    with pytest.raises(ShapeError):
        P.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 3))))


def test_unknown_primitive_name():
    with pytest.raises(ValueError):
        P.forward_primitive("erf", [Tensor(1.0)])
    out = P.forward_primitive("concat", [Tensor(np.ones(2)), Tensor(np.zeros(1))], axis=0)
    np.testing.assert_array_equal(out.numpy(), [1.0, 1.0, 0.0])


def test_flop_counter_and_scope():
    a, b = Tensor(np.ones((2, 3, 4))), Tensor(np.ones((4, 5)))
    with FlopCounter() as counter:
        P.matmul(a, b)
        with flop_scope("attention"):
            P.matmul(a, b)
        P.depthwise_conv2d(Tensor(np.ones((1, 4, 4, 2))), Tensor(np.ones((2, 3, 3))))
    assert counter.by_op["matmul"] == 2 * 3 * 5 * 4
    assert counter.by_op["attention/matmul"] == 2 * 3 * 5 * 4
    assert counter.by_op["depthwise_conv2d"] == 32 * 9
    assert counter.total == 2 * 120 + 288


def test_rng_streams_are_reproducible_and_distinct():
    first = make_rng(7, stream=3).standard_normal(5)
    np.testing.assert_array_equal(first, make_rng(7, stream=3).standard_normal(5))
    assert not np.array_equal(first, make_rng(7, stream=4).standard_normal(5))
    assert not np.array_equal(first, make_rng(8, stream=3).standard_normal(5))


def test_one_cycle_schedule_shape():
    schedule = OneCycleSchedule(max_lr=1e-3, total_steps=100, warmup_frac=0.3)
    assert schedule(0) == pytest.approx(1e-3 / 25)
    assert schedule(30) == pytest.approx(1e-3)
    assert schedule(100) == pytest.approx(1e-3 / 25)
    values = [schedule(step) for step in range(30, 101)]
    assert all(later <= earlier + 1e-15 for earlier, later in zip(values, values[1:]))
    with pytest.raises(ValueError):
        OneCycleSchedule(max_lr=1e-3, total_steps=10, warmup_frac=1.0)


def test_adamw_step_moves_against_gradient():
    param = Parameter(np.array([1.0, -1.0]), name="w")
    param.grad = np.array([0.5, -0.5])
    state = OptimizerState(OneCycleSchedule(max_lr=0.1, total_steps=1, warmup_frac=0.0), weight_decay=0.0)
    lr = adamw_step(state, [param])
    # 第一步的偏差修正使更新量为 lr·sign(g)
    np.testing.assert_allclose(param.data, [1.0 - lr, -1.0 + lr], rtol=1e-6)
    assert state.step == 1


def test_adamw_decoupled_weight_decay_with_zero_gradient():
    param = Parameter(np.array([2.0]), name="w")
    param.grad = np.zeros(1)
    state = OptimizerState(OneCycleSchedule(max_lr=0.1, total_steps=1, warmup_frac=0.0), weight_decay=0.5)
    adamw_step(state, [param])
    np.testing.assert_allclose(param.data, [2.0 * (1.0 - 0.1 * 0.5)])


def test_adamw_requires_gradients():
    state = OptimizerState(OneCycleSchedule(max_lr=0.1, total_steps=1))
    with pytest.raises(ValueError):
        adamw_step(state, [Parameter(np.ones(2), name="w")])


class _Tiny(Module):
    def __init__(self, rng):
        self.proj = Linear(rng, 3, 2)
        self.norm = LayerNorm(2)
        self.mlp = [FeedForward(rng, 2, 4, 2)]


def test_module_parameter_names_and_state_roundtrip(rng):
    model = _Tiny(rng)
    names = [name for name, _ in model.named_parameters()]
    assert names == [
        "proj.W", "proj.b", "norm.gamma", "norm.beta",
        "mlp.0.fc1.W", "mlp.0.fc1.b", "mlp.0.fc2.W", "mlp.0.fc2.b",
    ]
    other = _Tiny(np.random.default_rng(99))
    other.load_state_dict(model.state_dict())
    for (_, a), (_, b) in zip(model.named_parameters(), other.named_parameters()):
        np.testing.assert_array_equal(a.data, b.data)

    broken = model.state_dict()
    broken["proj.W"] = np.zeros((2, 2))
    with pytest.raises(CheckpointError):
        other.load_state_dict(broken)
    del broken["proj.W"]
    with pytest.raises(CheckpointError):
        other.load_state_dict(broken)


def test_linear_rejects_wrong_width(rng):
    with pytest.raises(ShapeError):
        Linear(rng, 3, 2)(Tensor(np.ones((4, 2))))


def test_cato1_records_file(tmp_path, rng):
    records = {"a": rng.standard_normal((2, 3)), "scalar": np.array(1.5), "ζ": np.arange(4.0)}
    path = str(tmp_path / "records.cato1")
    save_records(path, records)
    loaded = load_records(path)
    assert list(loaded) == list(records)
    for name, value in records.items():
        np.testing.assert_array_equal(loaded[name], value)
    assert not (tmp_path / "records.cato1.tmp").exists()


def test_cato1_rejects_bad_payloads():
    payload = encode_records({"w": np.ones(3)})
    with pytest.raises(CheckpointError):
        decode_records(b"XXXX1" + payload[5:])
    with pytest.raises(CheckpointError):
        decode_records(payload[:-4])
    with pytest.raises(FileNotFoundError):
        load_records("/nonexistent/records.cato1")
