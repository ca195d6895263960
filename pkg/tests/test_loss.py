import numpy as np
import pytest

from src.autodiff.tensor import Tensor, backward
from src.errors import ShapeError
from src.physics.loss import (
    LOSS_PRESETS,
    LossWeights,
    loss_cons,
    loss_flux,
    loss_gdl,
    loss_grad,
    loss_val,
    relative_l2_error,
    total_loss,
)
from src.physics.mesh import mesh_gradient


def smooth_field(mesh, batch=2):
    x, y = mesh.coords[..., 0], mesh.coords[..., 1]
    return np.stack([np.sin(x + k) * np.cos(0.5 * y) for k in range(batch)])


def exact_flux(u, mesh):
    grad = mesh_gradient(u, mesh)
    return np.stack([grad.ux.numpy(), grad.uy.numpy()], axis=-1)


def test_perfect_prediction_has_zero_loss(skewed_mesh):
    u = smooth_field(skewed_mesh)
    batch, height, width = u.shape
    preds = (u.reshape(batch, height * width, 1), exact_flux(u, skewed_mesh).reshape(batch, height * width, 2))
    report = total_loss(preds, u, skewed_mesh, LossWeights(1.0, 1.0, 1.0, lambda_gdl=1.0))
    assert report.val == 0.0
    assert report.grad == pytest.approx(0.0, abs=1e-24)
    assert report.flux == pytest.approx(0.0, abs=1e-24)
    assert report.cons == pytest.approx(0.0, abs=1e-24)
    assert report.total == pytest.approx(0.0, abs=1e-12)


def test_total_is_weighted_sum_of_terms(skewed_mesh, rng):
    u = smooth_field(skewed_mesh)
    batch, height, width = u.shape
    u_hat = u + 0.1 * rng.standard_normal(u.shape)
    q_hat = rng.standard_normal((batch, height * width, 2))
    weights = LossWeights(lambda_g=0.3, lambda_f=0.2, lambda_c=0.1, lambda_gdl=0.5)
    report = total_loss((u_hat.reshape(batch, -1, 1), q_hat), u, skewed_mesh, weights)
    expected = report.val + 0.3 * report.grad + 0.2 * report.flux + 0.1 * report.cons + 0.5 * report.gdl
    assert report.total == pytest.approx(expected, rel=1e-12)
    assert report.tensor.item() == pytest.approx(report.total, rel=1e-12)
    assert report.valid_count == batch * (height - 2) * (width - 2)
    assert report.masked_fraction == pytest.approx(1.0 - (height - 2) * (width - 2) / (height * width))


def test_individual_terms(grid8, rng):
    u = smooth_field(grid8)
    assert loss_val(2.0 * u, u).item() == pytest.approx(1.0, rel=1e-6)
    assert loss_val(u, u).item() == 0.0
    flux = exact_flux(u, grid8)
    assert loss_flux(flux, u, grid8).item() == pytest.approx(0.0, abs=1e-24)
    # 一致性项只比较两个预测量
    assert loss_cons(flux, u, grid8).item() == pytest.approx(0.0, abs=1e-24)
    shifted = u + 5.0
    assert loss_grad(shifted, u, grid8).item() == pytest.approx(0.0, abs=1e-20)
    assert loss_gdl(shifted, u, grid8).item() == pytest.approx(0.0, abs=1e-12)
    assert loss_gdl(u + rng.standard_normal(u.shape), u, grid8).item() > 0.0


def test_loss_gradient_reaches_predictions(grid8, rng):
    u = smooth_field(grid8, batch=1)
    u_hat = Tensor(u.reshape(1, 64, 1) + 0.1 * rng.standard_normal((1, 64, 1)), requires_grad=True)
    q_hat = Tensor(rng.standard_normal((1, 64, 2)), requires_grad=True)
    backward(total_loss((u_hat, q_hat), u, grid8, LOSS_PRESETS["darcy"]).tensor)
    assert np.any(u_hat.grad != 0.0)
    boundary = q_hat.grad.reshape(8, 8, 2)[0]
    # 边界节点被屏蔽，通量梯度只来自内部节点
    assert np.all(boundary == 0.0)


def test_presets_and_validation():
    darcy = LOSS_PRESETS["darcy"]
    assert (darcy.lambda_g, darcy.lambda_f, darcy.lambda_c) == (0.2, 0.2, 0.05)
    assert LOSS_PRESETS["navier-stokes"].lambda_g == 0.0
    with pytest.raises(ValueError):
        LossWeights(lambda_g=-1.0).validate()
    with pytest.raises(ValueError):
        LossWeights(eps=0.0).validate()


def test_shape_errors(grid8):
    u = np.zeros((1, 8, 8))
    with pytest.raises(ShapeError):
        loss_val(np.zeros((1, 8, 7)), u)
    with pytest.raises(ShapeError):
        loss_flux(np.zeros((1, 63, 2)), u, grid8)
    with pytest.raises(ShapeError):
        loss_grad(np.zeros((1, 7, 8)), u, grid8)


def test_relative_l2_error_metric():
    u = np.ones((2, 4, 1))
    assert relative_l2_error(u, u) == 0.0
    assert relative_l2_error(np.zeros_like(u), u) == pytest.approx(1.0, rel=1e-6)
    assert relative_l2_error(np.zeros_like(u), np.zeros_like(u)) == 0.0
