import math

import numpy as np
import pytest
import torch
from scipy.stats import chisquare

from mlvgan.exceptions import ShapeError
from mlvgan.models.presets import get_preset
from mlvgan.models.schemas import ModelConfig
from mlvgan.services.subsampling import (
    SubsampleSpec,
    frame_schedule,
    junction_rates,
    make_spec,
    max_offset,
    real_pyramid,
    resize_area,
    subsample_frames,
)


def _indexed(frames: int) -> torch.Tensor:
    return torch.arange(frames, dtype=torch.float32).view(1, 1, frames, 1, 1)


@pytest.mark.parametrize("rate", [1, 2, 3, 4])
def test_subsample_matches_index_enumeration(rate):
    for frames in range(1, 33):
        n = math.ceil(frames / rate)
        for offset in range(0, max_offset(frames, rate) + 1):
            spec = SubsampleSpec(rate=rate, offset=offset, input_len=frames, output_len=n)
            expected = [offset + k * rate for k in range(n)]
            assert spec.indices == expected
            assert all(i < frames for i in expected)
            out = subsample_frames(_indexed(frames), spec)
            assert out.flatten().tolist() == [float(i) for i in expected]


def test_max_offset_keeps_every_output_frame():
    assert max_offset(16, 4) == 3
    assert max_offset(15, 4) == 2
    assert max_offset(3, 4) == 2
    assert max_offset(5, 1) == 0


def test_spec_rejects_illegal_offsets():
    with pytest.raises(ValueError):
        SubsampleSpec(rate=4, offset=3, input_len=15, output_len=4)
    with pytest.raises(ValueError):
        SubsampleSpec(rate=2, offset=0, input_len=16, output_len=7)


def test_identity_spec_returns_input():
    h = torch.randn(2, 3, 5, 4, 4)
    spec = make_spec(5, 1, np.random.default_rng(0))
    assert spec.is_identity
    assert subsample_frames(h, spec) is h


def test_identity_spec_does_not_consume_randomness():
    rng = np.random.default_rng(3)
    before = rng.bit_generator.state
    make_spec(16, 1, rng)
    assert rng.bit_generator.state == before


def test_subsample_rejects_wrong_length():
    spec = SubsampleSpec(rate=2, offset=0, input_len=8, output_len=4)
    with pytest.raises(ShapeError):
        subsample_frames(torch.zeros(1, 1, 6, 2, 2), spec)


@pytest.mark.parametrize("frames,rate,support", [(16, 4, 4), (15, 4, 3), (16, 2, 2), (9, 3, 3)])
def test_offsets_are_uniform(frames, rate, support):
    rng = np.random.default_rng(1234)
    offsets = [make_spec(frames, rate, rng).offset for _ in range(10000)]
    counts = np.bincount(offsets, minlength=support)
    assert len(counts) == support
    assert chisquare(counts).pvalue > 0.01


def test_frame_schedules():
    assert frame_schedule(16, 2, 4) == [16, 8, 4, 2]
    assert frame_schedule(16, 4, 4) == [16, 4, 1, 1]
    assert frame_schedule(16, 1, 4) == [16, 16, 16, 16]
    assert frame_schedule(16, 2, 4, [True, False, True]) == [16, 8, 8, 4]
    assert junction_rates(4, 3, [False, True]) == [1, 4]
    with pytest.raises(ValueError):
        junction_rates(2, 4, [True])


def test_resize_area_preserves_mean():
    x = torch.rand(2, 3, 4, 16, 16)
    y = resize_area(x, 4)
    assert y.shape == (2, 3, 4, 4, 4)
    assert torch.allclose(y.mean(), x.mean(), atol=1e-6)
    assert resize_area(x, 1) is x
    with pytest.raises(ShapeError):
        resize_area(torch.zeros(1, 1, 1, 6, 6), 4)


def test_pyramid_shapes_at_full_scale():
    model = get_preset("paper-192px").model
    x = torch.zeros(1, 3, 16, 192, 192)
    pyramid = real_pyramid(x, model, np.random.default_rng(0))
    assert [tuple(p.shape[2:]) for p in pyramid] == [
        (16, 24, 24),
        (8, 48, 48),
        (4, 96, 96),
        (2, 192, 192),
    ]
    fast = model.model_copy(update={"rate": 4})
    pyramid = real_pyramid(x, fast, np.random.default_rng(0))
    assert [p.shape[2] for p in pyramid] == [16, 4, 1, 1]


def test_pyramid_levels_hold_real_frames():
    model = ModelConfig(levels=4, rate=2, frames=16, height=16, width=16, channels=[8, 8, 8, 8])
    x = torch.arange(16, dtype=torch.float32).view(1, 1, 16, 1, 1).expand(2, 1, 16, 16, 16)
    pyramid = real_pyramid(x.contiguous(), model, np.random.default_rng(7))
    for level, clip in enumerate(pyramid, start=1):
        values = clip[0, 0, :, 0, 0].tolist()
        steps = {b - a for a, b in zip(values, values[1:])}
        assert steps <= {float(2 ** (level - 1))}
        assert all(v == int(v) for v in values)


def test_pyramid_rejects_mismatched_clips():
    model = ModelConfig(levels=4, rate=2, frames=16, height=16, width=16, channels=[8, 8, 8, 8])
    with pytest.raises(ShapeError):
        real_pyramid(torch.zeros(1, 1, 8, 16, 16), model, np.random.default_rng(0))
    with pytest.raises(ShapeError):
        real_pyramid(torch.zeros(1, 1, 16, 12, 12), model, np.random.default_rng(0))


def test_model_schedule_uses_the_same_chain():
    for rate in (1, 2, 4):
        for flags in (None, [True, False, True], [False, False, True]):
            model = ModelConfig(levels=4, rate=rate, frames=16, height=16, width=16,
                                channels=[8, 8, 8, 8], subsample_enabled=flags)
            assert model.frame_counts() == frame_schedule(16, rate, 4, flags)
            assert model.junction_rates() == junction_rates(rate, 4, flags)


def test_single_video_pyramid_is_one_full_size_clip():
    model = ModelConfig(levels=4, rate=4, frames=16, height=16, width=16, channels=[8, 8, 8, 8],
                        render_all_levels=False)
    x = _indexed(16).expand(2, 1, 16, 16, 16).contiguous()
    (clip,) = real_pyramid(x, model, np.random.default_rng(3))
    offset = make_spec(16, 4, np.random.default_rng(3)).offset
    assert clip.shape == (2, 1, 4, 16, 16)
    assert clip[0, 0, :, 0, 0].tolist() == [float(offset + 4 * k) for k in range(4)]
