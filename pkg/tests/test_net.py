import numpy as np
import pytest
import torch

from lfdiff.checkpoint import MAGIC, checkpoint_bytes, load_checkpoint, read_checkpoint, save_checkpoint
from lfdiff.diffusion import make_schedule, training_loss
from lfdiff.errors import LFError
from lfdiff.lightfield import lf_to_sai_grid, sai_to_macropixel
from lfdiff.net import (
    AngularConv,
    DistgBlock,
    DistgNetConfig,
    DistgUnet,
    EpiConv,
    NetDenoiser,
    SpatialConv,
    count_parameters,
    macro_pad,
    mpi_to_sai,
    sai_to_mpi,
    timestep_embedding,
)

A = 3
TINY = DistgNetConfig(angular=A, base_channels=8, scales=1, blocks_per_scale=1, time_embed_dim=8,
                      in_channels=2 * 1 + 4, out_channels=1, max_mult=1)


def impulse(view, pixel, H=4, W=4, C=1):
    """Macro-pixel tensor with a single one at ``view`` / ``pixel``."""
    x = torch.zeros(1, C, A * H, A * W, dtype=torch.float64)
    (p, q), (s, t) = view, pixel
    x[0, 0, s * A + p, t * A + q] = 1.0
    return x


def support(y):
    """Set of (p, q, s, t) sites where any channel is nonzero."""
    nz = torch.nonzero(y[0].abs().sum(0) > 1e-12).tolist()
    return {(r % A, c % A, r // A, c // A) for r, c in nz}


def randomized(module, seed=0):
    g = torch.Generator().manual_seed(seed)
    with torch.no_grad():
        for p in module.parameters():
            p.copy_(torch.randn(p.shape, generator=g, dtype=p.dtype))
    return module


def test_timestep_embedding():
    e0 = timestep_embedding(0, 8)
    assert torch.equal(e0, torch.tensor([0.0] * 4 + [1.0] * 4, dtype=torch.float64))
    assert (timestep_embedding(1, 8) - timestep_embedding(2, 8)).abs().max() > 1e-6
    assert torch.equal(timestep_embedding(5, 8), timestep_embedding(5, 8))
    assert timestep_embedding(torch.tensor([1, 2, 3]), 8).shape == (3, 8)
    with pytest.raises(LFError):
        timestep_embedding(1, 7)


def test_mpi_conversion_matches_numpy_layout():
    lf = np.random.default_rng(0).random((A, A, 4, 4, 2))
    grid = torch.from_numpy(lf_to_sai_grid(lf).transpose(2, 0, 1))[None]
    mp = sai_to_mpi(grid, A)
    expect = sai_to_macropixel(lf).data.transpose(2, 0, 1)
    assert np.array_equal(mp[0].numpy(), expect)
    assert torch.equal(mpi_to_sai(mp, A), grid)


def test_macro_pad_replicates_border_views():
    x = torch.arange(36.0).reshape(1, 1, 6, 6)
    y = macro_pad(x, A, 1, 1)
    assert y.shape == (1, 1, 12, 12)
    assert torch.equal(y[..., A:-A, :A], x[..., :, :A])


def test_spatial_locality_and_identity():
    conv = randomized(SpatialConv(1, 2, A).double())
    for view in [(0, 0), (1, 2)]:
        y = conv(impulse(view, (2, 1))) - conv(torch.zeros(1, 1, 12, 12, dtype=torch.float64))
        assert {(p, q) for p, q, _, _ in support(y)} == {view}
    ident = SpatialConv(1, 1, A).double()
    with torch.no_grad():
        ident.conv.weight.zero_()
        ident.conv.weight[0, 0, 1, 1] = 1
        ident.conv.bias.zero_()
    x = torch.randn(1, 1, 12, 12, dtype=torch.float64)
    assert torch.equal(ident(x), x)
    with torch.no_grad():
        ident.conv.weight.fill_(0.5)
        ident.conv.bias.fill_(0.25)
    y = ident(torch.full((1, 1, 12, 12), 2.0, dtype=torch.float64))
    assert torch.allclose(y, torch.full_like(y, 2.0 * 0.5 * 9 + 0.25))


def test_angular_locality_and_shape():
    conv = randomized(AngularConv(1, 2, A).double())
    base = conv(torch.zeros(1, 1, 12, 12, dtype=torch.float64))
    y = conv(impulse((2, 0), (1, 3))) - base
    assert {(s, t) for _, _, s, t in support(y)} == {(1, 3)}
    assert conv.conv(torch.zeros(1, 1, 12, 12, dtype=torch.float64)).shape[-2:] == (4, 4)
    # a view-constant input yields an output that is constant within each macro-pixel
    x = torch.randn(1, 1, 4, 4, dtype=torch.float64).repeat_interleave(A, -1).repeat_interleave(A, -2)
    out = conv(x).reshape(1, 2, 4, A, 4, A)
    assert torch.allclose(out, out[:, :, :, :1, :, :1].expand_as(out))


@pytest.mark.parametrize("axis", ["horizontal", "vertical"])
def test_epi_locality(axis):
    conv = randomized(EpiConv(1, 2, A, axis).double())
    base = conv(torch.zeros(1, 1, 12, 12, dtype=torch.float64))
    view, pixel = (1, 2), (2, 1)
    y = conv(impulse(view, pixel)) - base
    sites = support(y)
    assert sites
    if axis == "horizontal":
        assert {(p, s) for p, _, s, _ in sites} == {(view[0], pixel[0])}
    else:
        assert {(q, t) for _, q, _, t in sites} == {(view[1], pixel[1])}
    c = conv(torch.full((1, 1, 12, 12), 3.0, dtype=torch.float64))
    assert torch.allclose(c, c[:, :, :1, :1].expand_as(c))
    assert c.shape == (1, 2, 12, 12)


def test_epi_fold_matches_direct_convolution():
    conv = randomized(EpiConv(2, 3, A).double(), seed=4)
    x = torch.randn(2, 2, 12, 15, dtype=torch.float64)
    direct = conv.conv(macro_pad(x, A, 0, 1)).repeat_interleave(A, dim=-1)
    assert torch.allclose(conv(x), direct, atol=1e-12)


def test_extractors_reject_indivisible():
    with pytest.raises(LFError):
        SpatialConv(1, 1, A)(torch.zeros(1, 1, 10, 12))


def test_block_zero_parameters_is_identity():
    blk = DistgBlock(8, A, 8).double()
    with torch.no_grad():
        for p in blk.parameters():
            p.zero_()
    x = torch.randn(2, 8, 12, 12, dtype=torch.float64)
    assert torch.equal(blk(x, torch.randn(2, 8, dtype=torch.float64)), x)


def test_block_finite_on_gaussian_input():
    torch.manual_seed(0)
    blk = DistgBlock(16, A, 8)
    y = blk(torch.randn(4, 16, 24, 24), torch.randn(4, 8))
    assert torch.isfinite(y).all()


def test_block_jvp_matches_finite_differences():
    blk = randomized(DistgBlock(8, A, 8).double(), seed=2)
    x = torch.randn(1, 8, 12, 12, dtype=torch.float64)
    v = torch.randn_like(x)
    temb = torch.randn(1, 8, dtype=torch.float64)
    _, jvp = torch.autograd.functional.jvp(lambda z: blk(z, temb), x, v)
    h = 1e-6
    fd = (blk(x + h * v, temb) - blk(x - h * v, temb)) / (2 * h)
    assert ((jvp - fd).norm() / jvp.norm()).item() < 1e-4


def test_config_validation():
    with pytest.raises(LFError):
        DistgNetConfig(angular=4)
    with pytest.raises(LFError):
        DistgNetConfig(scales=0)
    with pytest.raises(LFError):
        DistgNetConfig(base_channels=12)
    assert DistgNetConfig().pe_dim == 16


def test_unet_shapes_purity_and_init():
    torch.manual_seed(0)
    cfg = DistgNetConfig(angular=5, base_channels=8, scales=2, blocks_per_scale=1, time_embed_dim=16)
    net = DistgUnet(cfg)
    x = torch.randn(2, 3, 40, 40)
    c = torch.randn(2, 19, 40, 40)
    y1 = net(x, c, torch.tensor([1, 500]))
    assert y1.shape == x.shape
    assert torch.equal(y1, net(x, c, torch.tensor([1, 500])))
    assert y1.abs().max() < 1.0
    with pytest.raises(LFError):
        net(torch.randn(1, 3, 30, 30), torch.randn(1, 19, 30, 30), 1)
    with pytest.raises(LFError):
        net(torch.randn(1, 3, 40, 40), torch.randn(1, 18, 40, 40), 1)


def test_skip_gate_is_a_per_channel_linear_path():
    torch.manual_seed(0)
    cfg = DistgNetConfig(angular=5, base_channels=8, scales=2, blocks_per_scale=1, time_embed_dim=16)
    net = DistgUnet(cfg)
    x = torch.randn(1, 3, 40, 40)
    c = torch.randn(1, 19, 40, 40)
    assert torch.equal(net(x, c, 7), torch.zeros_like(x))
    with torch.no_grad():
        net.skip_gate.bias.copy_(torch.tensor([1.0, 2.0, 3.0, -1.0, 0.5, 0.0]))
    y = net(x, c, 7)
    a = torch.tensor([1.0, 2.0, 3.0])[:, None, None]
    b = torch.tensor([-1.0, 0.5, 0.0])[:, None, None]
    assert torch.allclose(y[0], a * x[0] + b * c[0, :3])


def test_parameter_count_deterministic():
    cfg = DistgNetConfig(angular=5, base_channels=8, scales=2, blocks_per_scale=1, time_embed_dim=32)
    assert count_parameters(DistgUnet(cfg)) == count_parameters(DistgUnet(cfg))
    assert count_parameters(DistgUnet(cfg)) <= 300_000


def test_unet_gradient_finite_differences():
    torch.manual_seed(1)
    net = DistgUnet(TINY).double()
    randomized(net, seed=3)
    with torch.no_grad():
        for p in net.parameters():
            p.mul_(0.3)
    sched = make_schedule()
    rng = np.random.default_rng(0)
    x0 = torch.from_numpy(rng.random((1, 1, A * 8, A * 8)))
    cond = torch.from_numpy(rng.random((1, 5, A * 8, A * 8)))
    eps = torch.from_numpy(rng.standard_normal(x0.shape))
    t = np.array([250])

    def loss():
        return training_loss(lambda x, tt, c: net(x, c, torch.as_tensor(tt)), x0, cond, t, eps, sched)

    net.zero_grad()
    loss().backward()
    params = list(net.parameters())
    sizes = [p.numel() for p in params]
    picks = rng.choice(sum(sizes), 64, replace=False)
    offsets = np.cumsum([0] + sizes)
    h = 1e-6
    worst = 0.0
    for k in picks:
        i = int(np.searchsorted(offsets, k, side="right") - 1)
        flat = params[i].data.view(-1)
        j = int(k - offsets[i])
        analytic = params[i].grad.view(-1)[j].item()
        old = flat[j].item()
        with torch.no_grad():
            flat[j] = old + h
            up = loss().item()
            flat[j] = old - h
            down = loss().item()
            flat[j] = old
        fd = (up - down) / (2 * h)
        worst = max(worst, abs(fd - analytic) / max(abs(fd), abs(analytic), 1e-6))
    assert worst < 1e-4


def test_net_denoiser_adapter():
    torch.manual_seed(0)
    cfg = DistgNetConfig(angular=3, base_channels=8, scales=1, blocks_per_scale=1, time_embed_dim=8,
                         in_channels=3 + 3 + 4)
    den = NetDenoiser(DistgUnet(cfg))
    c = np.random.default_rng(0).random((3, 3, 4, 4, 7))
    x = np.random.default_rng(1).standard_normal((12, 12, 3))
    assert den(x, 10, c).shape == x.shape
    with pytest.raises(LFError):
        den(np.zeros((20, 20, 3)), 10, np.zeros((5, 5, 4, 4, 7)))


def test_checkpoint_round_trip(tmp_path):
    torch.manual_seed(0)
    net = randomized(DistgUnet(TINY))
    path = tmp_path / "m.ckpt"
    save_checkpoint(path, net, {"step": 3})
    raw = path.read_bytes()
    assert raw.startswith(MAGIC)
    header, tensors = read_checkpoint(path)
    assert header["config"] == TINY.to_dict() and header["extra"] == {"step": 3}
    assert {e["name"] for e in header["params"]} == set(net.state_dict())
    loaded, _ = load_checkpoint(path)
    for k, v in net.state_dict().items():
        assert torch.equal(loaded.state_dict()[k], v.float())
    assert checkpoint_bytes(loaded, {"step": 3}) == raw


def test_checkpoint_rejects_garbage(tmp_path):
    p = tmp_path / "bad.ckpt"
    p.write_bytes(b"NOTACKPT" + b"\0" * 16)
    with pytest.raises(LFError):
        read_checkpoint(p)
