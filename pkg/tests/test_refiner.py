import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from dualmapper.refiner import Predictor, RefineBlock, build_label_pyramid

from oracles import label_pyramid


def test_zeroed_residual_is_identity():
    torch.manual_seed(0)
    block = RefineBlock(16, 8)
    block.zero_residual_()
    fused, prev = torch.randn(2, 8, 8, 8), torch.randn(2, 16, 4, 4)
    for mode in (True, False):
        block.train(mode)
        with torch.no_grad():
            assert torch.equal(block(fused, prev), fused)


def test_residual_shape_chain_224():
    torch.manual_seed(0)
    chans = [256, 128, 64, 32, 16]
    sizes = [14, 28, 56, 112, 224]
    a_r = torch.randn(1, 256, 14, 14)
    for i in range(1, 5):
        block = RefineBlock(chans[i - 1], chans[i]).eval()
        with torch.no_grad():
            a_r = block(torch.randn(1, chans[i], sizes[i], sizes[i]), a_r)
        assert tuple(a_r.shape) == (1, chans[i], sizes[i], sizes[i])


def test_residual_rejects_mismatch():
    block = RefineBlock(8, 4)
    with pytest.raises(ValueError):
        block(torch.randn(1, 4, 8, 8), torch.randn(1, 8, 3, 3))


def test_gradient_reaches_previous_level():
    torch.manual_seed(0)
    block = RefineBlock(8, 4)
    prev = torch.randn(1, 8, 4, 4, requires_grad=True)
    block(torch.randn(1, 4, 8, 8), prev).square().sum().backward()
    assert prev.grad.abs().sum() > 0


def test_predictor_zero_weights_is_half():
    pred = Predictor(8)
    with torch.no_grad():
        pred.fc.weight.zero_()
        pred.fc.bias.zero_()
        p = pred(torch.randn(3, 8, 5, 5))
    assert tuple(p.shape) == (3, 5, 5)
    assert torch.all(p == 0.5)


def test_predictor_road_is_channel_one():
    pred = Predictor(2)
    with torch.no_grad():
        pred.fc.weight.zero_()
        pred.fc.bias.copy_(torch.tensor([0.0, 3.0]))
        p = pred(torch.zeros(1, 2, 2, 2))
    assert torch.allclose(p, torch.full_like(p, 1 / (1 + np.exp(-3.0))))


def test_predictor_rejects_wrong_channels():
    with pytest.raises(ValueError):
        Predictor(8)(torch.randn(1, 4, 2, 2))


def test_label_pyramid_shapes_and_constants():
    ones = build_label_pyramid(np.ones((224, 224), np.float32))
    assert [y.shape for y in ones] == [(14, 14), (28, 28), (56, 56), (112, 112), (224, 224)]
    assert all(np.all(y == 1) for y in ones)
    zeros = build_label_pyramid(np.zeros((32, 32), np.float32))
    assert all(not y.any() for y in zeros)


def test_label_pyramid_checkerboard():
    y = (np.add.outer(np.arange(32), np.arange(32)) % 2).astype(np.float32)
    pyr = build_label_pyramid(y)
    for lvl in pyr[:4]:
        assert np.all(lvl == 0.5)


@settings(max_examples=30, deadline=None)
@given(arrays(np.uint8, (32, 48), elements=st.integers(0, 1)))
def test_label_pyramid_matches_loop(label):
    ours = build_label_pyramid(label.astype(np.float32))
    ref = label_pyramid(label)
    for a, b in zip(ours, ref):
        np.testing.assert_allclose(a, b, rtol=0, atol=1e-6)
    tens = build_label_pyramid(torch.from_numpy(label[None].astype(np.float32)))
    for a, b in zip(tens, ref):
        np.testing.assert_allclose(a[0].numpy(), b, rtol=0, atol=1e-6)


def test_label_pyramid_rejects_bad_size():
    with pytest.raises(ValueError):
        build_label_pyramid(np.zeros((30, 32)))
