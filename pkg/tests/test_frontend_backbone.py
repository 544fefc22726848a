import numpy as np
import pytest
import torch
from hypothesis import given, settings, strategies as st
from scipy.special import erf

from aasistx.backbone import Backbone, BackboneConfig, Bifurcation, ResBlock, ResNetEncoder, collapse_axes
from aasistx.frontend import (Adapter, AdapterConfig, ConfigError, EncoderConfig, SyntheticEncoder, build_encoder,
                              encode, gelu)
from aasistx.model import CountermeasureModel, ModelConfig
from aasistx.nodes import Modality

from oracles import grad_rel_error


def wav(b=2, seconds=1.0, seed=0):
    g = torch.Generator().manual_seed(seed)
    return torch.rand(b, int(16000 * seconds), generator=g) - 0.5


# encoder

def test_synthetic_encoder_frame_rate():
    enc = SyntheticEncoder(96)
    assert enc(wav(1)).shape == (1, 50, 96)


def test_synthetic_encoder_deterministic_and_input_dependent():
    enc = SyntheticEncoder(32)
    x = wav(2)
    torch.testing.assert_close(enc(x), enc(x), rtol=0, atol=0)
    assert not torch.allclose(enc(x[:1]), enc(x[1:]))


def test_synthetic_encoder_gain_invariant():
    enc = SyntheticEncoder(32)
    x = wav(1).double()
    torch.testing.assert_close(enc.double()(x), enc.double()(3.0 * x), atol=1e-6, rtol=0)


def test_pretrained_flag_controls_initialisation():
    torch.manual_seed(0)
    a = build_encoder(EncoderConfig(pretrained=True, frozen=False))
    torch.manual_seed(1)
    b = build_encoder(EncoderConfig(pretrained=True, frozen=False))
    torch.manual_seed(1)
    c = build_encoder(EncoderConfig(pretrained=False, frozen=False))
    torch.testing.assert_close(a.proj.weight, b.proj.weight, rtol=0, atol=0)
    assert not torch.equal(a.proj.weight, c.proj.weight)


def test_frozen_encoder_outputs_unchanged_by_training():
    torch.manual_seed(0)
    cfg = ModelConfig()
    model = CountermeasureModel(cfg)
    x = wav(4, 0.4, 3)
    y = torch.tensor([0, 1, 0, 1])
    before = encode(x, model.encoder, True).clone()
    opt = torch.optim.NAdam([p for p in model.parameters() if p.requires_grad], lr=1e-3)
    model.train()
    for _ in range(100):
        opt.zero_grad()
        torch.nn.functional.cross_entropy(model(x), y).backward()
        opt.step()
    assert torch.equal(before, encode(x, model.encoder, True))


def test_external_ssl_missing_weights_has_hint():
    with pytest.raises(ConfigError, match="weights_path"):
        build_encoder(EncoderConfig(kind="external_ssl", embedding_dim=1024, weights_path="/nonexistent"))


def test_external_ssl_requires_frozen_1024():
    with pytest.raises(ConfigError):
        EncoderConfig(kind="external_ssl", embedding_dim=128).validate()
    with pytest.raises(ConfigError):
        EncoderConfig(kind="external_ssl", embedding_dim=1024, frozen=False).validate()


# adapter

def test_gelu_matches_phi_definition():
    xs = np.linspace(-6, 30, 721)
    ref = xs * 0.5 * (1 + erf(xs / np.sqrt(2)))
    np.testing.assert_allclose(gelu(torch.from_numpy(xs)).numpy(), ref, atol=1e-12)
    assert gelu(torch.tensor(0.0)).item() == 0.0
    assert gelu(torch.tensor(30.0)).item() == pytest.approx(30.0)


def test_zero_adapter_gives_zero_map():
    ad = Adapter(32, AdapterConfig(hidden_dim=16, out_dim=128))
    for p in ad.parameters():
        torch.nn.init.zeros_(p)
    out = ad(torch.randn(1, 50, 32))
    assert out.shape == (1, 1, 128, 50)
    assert torch.count_nonzero(out) == 0


def test_adapter_dim_mismatch():
    with pytest.raises(ConfigError):
        Adapter(32)(torch.randn(1, 5, 31))


def test_adapter_gradients(f64):
    torch.manual_seed(0)
    ad = Adapter(6, AdapterConfig(hidden_dim=5, out_dim=4))
    x = torch.randn(2, 3, 6)
    assert grad_rel_error(lambda: (ad(x) ** 2).sum(), list(ad.parameters())) < 1e-4


# backbone

def test_default_backbone_shape():
    torch.manual_seed(0)
    out = ResNetEncoder(BackboneConfig()).eval()(torch.randn(1, 1, 128, 50))
    assert out.shape == (1, 64, 16, 25)
    assert BackboneConfig().output_shape(128, 50) == (64, 16, 25)


def test_collapsed_axis_is_config_error():
    with pytest.raises(ConfigError, match="block"):
        BackboneConfig().output_shape(128, 1)


def test_identity_initialised_block_is_projection():
    blk = ResBlock(3, 5).eval()
    for m in (blk.conv1, blk.conv2):
        torch.nn.init.zeros_(m.weight)
        torch.nn.init.zeros_(m.bias)
    x = torch.randn(2, 3, 6, 7)
    torch.testing.assert_close(blk(x), blk.skip(x))
    same = ResBlock(4, 4).eval()
    torch.nn.init.zeros_(same.conv2.weight)
    torch.nn.init.zeros_(same.conv2.bias)
    x = torch.randn(2, 4, 6, 7)
    torch.testing.assert_close(same(x), x)


def test_zero_input_zero_bias_gives_zero():
    enc = ResNetEncoder(BackboneConfig()).eval()
    for name, p in enc.named_parameters():
        if name.endswith("bias"):
            torch.nn.init.zeros_(p)
    assert torch.count_nonzero(enc(torch.zeros(1, 1, 32, 8))) == 0


@pytest.mark.parametrize("pool", [(1, 1), (2, 1), (2, 2)])
def test_resblock_gradients(f64, pool):
    torch.manual_seed(1)
    blk = ResBlock(2, 3, pool).train()
    x = torch.randn(2, 2, 4, 4)
    w = torch.randn(2, 3, 4 // pool[0], 4 // pool[1])
    assert grad_rel_error(lambda: (blk(x) * w).sum(), list(blk.parameters())) < 1e-4


def test_bifurcation_constant_input():
    bif = Bifurcation(3, 4)
    spec, temp = bif(torch.full((1, 3, 5, 7), 0.7))
    assert spec.modality is Modality.SPECTRAL and temp.modality is Modality.TEMPORAL
    assert spec.num_nodes == 5 and temp.num_nodes == 7
    torch.testing.assert_close(spec.nodes, spec.nodes[:, :1].expand_as(spec.nodes))
    torch.testing.assert_close(temp.nodes, temp.nodes[:, :1].expand_as(temp.nodes))


def test_spike_lands_in_its_nodes():
    f = torch.zeros(1, 4, 6, 9)
    f[0, 2, 3, 5] = 10.0
    spec, temp = collapse_axes(f)
    assert spec.shape == (1, 6, 4) and temp.shape == (1, 9, 4)
    assert spec[0, 3, 2] == 10.0 and temp[0, 5, 2] == 10.0
    assert spec.sum() == 10.0 and temp.sum() == 10.0


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_time_permutation(seed):
    g = torch.Generator().manual_seed(seed)
    f = torch.randn(2, 3, 5, 8, generator=g)
    perm = torch.randperm(8, generator=g)
    spec, temp = collapse_axes(f)
    spec_p, temp_p = collapse_axes(f[..., perm])
    torch.testing.assert_close(spec_p, spec, rtol=0, atol=0)
    torch.testing.assert_close(temp_p, temp[:, perm], rtol=0, atol=0)


@given(s=st.floats(1e-3, 1e3))
def test_collapse_is_positively_homogeneous(s):
    f = torch.randn(1, 3, 4, 5, dtype=torch.float64, generator=torch.Generator().manual_seed(0))
    a, b = collapse_axes(f), collapse_axes(s * f)
    torch.testing.assert_close(b[0], s * a[0])
    torch.testing.assert_close(b[1], s * a[1])


def test_backbone_node_shapes():
    spec, temp = Backbone(BackboneConfig()).eval()(torch.randn(2, 1, 128, 50))
    assert spec.nodes.shape == (2, 16, 64) and temp.nodes.shape == (2, 25, 64)


def test_bifurcation_gradients(f64):
    bif = Bifurcation(3, 4)
    f = torch.randn(2, 3, 4, 5)
    w1, w2 = torch.randn(2, 4, 4), torch.randn(2, 5, 4)

    def fn():
        s, t = bif(f)
        return (s.nodes * w1).sum() + (t.nodes * w2).sum()

    assert grad_rel_error(fn, list(bif.parameters())) < 1e-4
