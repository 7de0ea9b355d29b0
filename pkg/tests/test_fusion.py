import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from dualmapper.fusion import GatedFusion, fuse, normalize_gates, update_gates

from oracles import central_difference


def _level_inputs(c=8, h=4, seed=0):
    g = torch.Generator().manual_seed(seed)
    return torch.randn(2, c, h, h, generator=g), torch.randn(2, c, h, h, generator=g)


def test_identity_adapter():
    gfm = GatedFusion(8)
    with torch.no_grad():
        for conv in (gfm.adapt_image, gfm.adapt_traj):
            conv.weight.copy_(torch.eye(8).view(8, 8, 1, 1))
            conv.bias.zero_()
    fi, ft = _level_inputs()
    ai, at = gfm.adapt(fi, ft)
    torch.testing.assert_close(ai, fi, rtol=0, atol=1e-6)
    torch.testing.assert_close(at, ft, rtol=0, atol=1e-6)


@pytest.mark.parametrize("level,h,c", [(1, 14, 256), (2, 28, 128), (3, 56, 64), (4, 112, 32), (5, 224, 16)])
def test_adapter_preserves_shape(level, h, c):
    gfm = GatedFusion(c).eval()
    with torch.no_grad():
        ai, at = gfm.adapt(torch.rand(1, c, h, h), torch.rand(1, c, h, h))
        delta = gfm.gate_delta(ai, at)
    assert ai.shape == at.shape == (1, c, h, h)
    assert delta.shape == (1, 2, h, h)


def test_adapter_gradient_check():
    torch.manual_seed(0)
    gfm = GatedFusion(8).double()
    fi = torch.randn(1, 8, 4, 4, dtype=torch.float64, requires_grad=True)
    ft = torch.randn(1, 8, 4, 4, dtype=torch.float64)
    w = torch.randn(1, 8, 4, 4, dtype=torch.float64)
    loss = sum((a * w).sum() for a in gfm.adapt(fi, ft))
    g_w, g_x = torch.autograd.grad(loss, [gfm.adapt_image.weight, fi])

    def scalar():
        with torch.no_grad():
            return float(sum((a * w).sum() for a in gfm.adapt(fi, ft)))

    for idx in range(0, 64, 7):
        num = central_difference(scalar, gfm.adapt_image.weight.data.view(-1), idx)
        assert abs(num - float(g_w.view(-1)[idx])) / max(abs(num), 1e-6) < 1e-3
        num = central_difference(scalar, fi.data.view(-1), idx)
        assert abs(num - float(g_x.view(-1)[idx])) / max(abs(num), 1e-6) < 1e-3


def test_zero_psi_gives_zero_delta():
    gfm = GatedFusion(8).eval()
    with torch.no_grad():
        gfm.psi.weight.zero_()
        gfm.psi.bias.zero_()
        delta = gfm.gate_delta(*_level_inputs())
    assert not delta.any()


def test_concat_order_matters():
    torch.manual_seed(0)
    gfm = GatedFusion(8).eval()
    a, b = _level_inputs()
    with torch.no_grad():
        assert not torch.allclose(gfm.gate_delta(a, b), gfm.gate_delta(b, a))


def test_update_gates_level_one_is_delta():
    delta = torch.randn(1, 2, 3, 3)
    assert update_gates(None, delta) is delta


def test_update_gates_nearest_replication():
    prev = torch.arange(8.0).view(1, 2, 2, 2)
    out = update_gates(prev, torch.zeros(1, 2, 4, 4))
    expected = prev.repeat_interleave(2, dim=2).repeat_interleave(2, dim=3)
    torch.testing.assert_close(out, expected, rtol=0, atol=0)
    assert out[0, 0, :2, :2].unique().tolist() == [0.0]


def test_update_gates_shape_mismatch():
    with pytest.raises(ValueError):
        update_gates(torch.zeros(1, 2, 2, 2), torch.zeros(1, 2, 5, 5))


def test_normalize_equal_logits():
    gi, gt = normalize_gates(torch.full((1, 2, 3, 3), 4.2))
    assert torch.all(gi == 0.5) and torch.all(gt == 0.5)


def test_normalize_saturation():
    logits = torch.tensor([20.0, -20.0], dtype=torch.float64).view(1, 2, 1, 1)
    gi, gt = normalize_gates(logits)
    assert abs(float(gi) - 1.0) < 1e-8


def test_normalize_extreme_logits_finite():
    logits = torch.tensor([1e4, -1e4]).view(1, 2, 1, 1)
    gi, gt = normalize_gates(logits)
    assert float(gi) == 1.0 and float(gt) == 0.0


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**31 - 1), st.floats(-50, 50))
def test_normalize_shift_invariant(seed, shift):
    logits = torch.randn(1, 2, 4, 4, generator=torch.Generator().manual_seed(seed), dtype=torch.float64) * 5
    a = normalize_gates(logits)
    b = normalize_gates(logits + shift)
    torch.testing.assert_close(a[0], b[0], rtol=0, atol=1e-12)
    assert float((a[0] + a[1] - 1).abs().max()) <= 1e-12


def test_fuse_identities():
    ai, at = _level_inputs()
    ones = torch.ones(2, 4, 4)
    torch.testing.assert_close(fuse(ai, at, ones, 1 - ones), ai, rtol=0, atol=0)
    half = torch.full((2, 4, 4), 0.5)
    torch.testing.assert_close(fuse(ai, at, half, half), (ai + at) / 2, rtol=0, atol=1e-7)


def test_fuse_matches_elementwise_loop():
    ai, at = _level_inputs(c=3, h=3, seed=5)
    gi = torch.rand(2, 3, 3)
    out = fuse(ai, at, gi, 1 - gi)
    for n in range(2):
        for c in range(3):
            for y in range(3):
                for x in range(3):
                    ref = gi[n, y, x] * ai[n, c, y, x] + (1 - gi[n, y, x]) * at[n, c, y, x]
                    assert abs(float(out[n, c, y, x] - ref)) < 1e-6


def test_fuse_rejects_unnormalized():
    ai, at = _level_inputs()
    with pytest.raises(ValueError):
        fuse(ai, at, torch.full((2, 4, 4), 0.6), torch.full((2, 4, 4), 0.6))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_fusion_is_convex(seed):
    g = torch.Generator().manual_seed(seed)
    ai, at = torch.randn(1, 5, 3, 3, generator=g), torch.randn(1, 5, 3, 3, generator=g)
    gi, gt = normalize_gates(torch.randn(1, 2, 3, 3, generator=g) * 4)
    out = fuse(ai, at, gi, gt)
    lo, hi = torch.minimum(ai, at), torch.maximum(ai, at)
    assert torch.all(out >= lo - 1e-6) and torch.all(out <= hi + 1e-6)


def test_coarse_to_fine_with_zero_residuals():
    gfms = [GatedFusion(4).eval() for _ in range(5)]
    with torch.no_grad():
        for g in gfms[1:]:
            g.psi.weight.zero_()
            g.psi.bias.zero_()
    logits, gates = None, []
    with torch.no_grad():
        for lvl, g in enumerate(gfms):
            s = 2 * 2**lvl
            out = g(torch.randn(1, 4, s, s), torch.randn(1, 4, s, s), logits)
            logits = out.gates.logits
            gates.append(out.gates.image)
    expected = gates[0].repeat_interleave(16, dim=1).repeat_interleave(16, dim=2)
    torch.testing.assert_close(gates[-1], expected, rtol=0, atol=0)


def test_gfm_forward_complementary():
    gfm = GatedFusion(8).train()
    out = gfm(*_level_inputs(), None)
    assert float((out.gates.image + out.gates.traj - 1).detach().abs().max()) <= 1e-6
    gi = out.gates.image.detach()
    assert torch.all(gi > 0) and torch.all(gi < 1)

