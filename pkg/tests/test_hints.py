import numpy as np
import pytest
import torch

from midframe.data import SceneSpec, generate_synthetic
from midframe.errors import ConfigError, ShapeError
from midframe.hints import (
    HintSource,
    MotionHints,
    block_matching_flow,
    empty_hints,
    extract_motion_hints,
    hints_to_tensor,
    make_hint_backend,
    simulator_volume,
    train_i2e,
)


def test_empty_hints_shape_and_tag():
    hints = empty_hints(4, 4, 9)
    assert hints.forward.shape == (4, 4, 18)
    assert hints.backward.shape == (4, 4, 18)
    assert hints.forward.sum() == 0.0 and hints.backward.sum() == 0.0
    assert hints.source_tag == HintSource.EMPTY


def test_empty_hints_matches_volume_shape():
    frame = np.zeros((4, 4), dtype=np.float32)
    vol = simulator_volume(frame, frame, b_channels=9)
    assert empty_hints(4, 4, 9).forward.shape == vol.shape


def test_empty_hints_bad_dims():
    with pytest.raises(ConfigError):
        empty_hints(0, 4, 9)


def test_identical_frames_zero_hints():
    frame = np.full((8, 8), 0.4, dtype=np.float32)
    hints = extract_motion_hints(frame, frame, frame, backend="simulator", b_channels=5)
    assert hints.forward.sum() == 0.0
    assert hints.backward.sum() == 0.0
    assert hints.source_tag == HintSource.SIMULATOR


def _dilate(mask: np.ndarray, r: int) -> np.ndarray:
    out = mask.copy()
    for dy in range(-r, r + 1):
        for dx in range(-r, r + 1):
            out |= np.roll(np.roll(mask, dy, axis=0), dx, axis=1)
    return out


def test_translating_shape_mass_near_edges():
    # a bright square moving +2 px/frame; simulator events live on the moving
    # edges, so all hint mass must fall inside a dilated edge mask
    def frame(cx):
        img = np.zeros((16, 16), dtype=np.float32)
        img[4:10, cx:cx + 6] = 0.9
        return img

    prev, mid, nxt = frame(2), frame(4), frame(6)
    hints = extract_motion_hints(prev, mid, nxt, backend="simulator", b_channels=5)
    assert hints.forward.sum() > 0 and hints.backward.sum() > 0

    for vol, a, b in ((hints.forward, prev, mid), (hints.backward, mid, nxt)):
        changed = np.abs(a - b) > 1e-6
        allowed = _dilate(changed, 1)
        support = vol.sum(axis=2) > 0
        assert not (support & ~allowed).any()


def test_flow_backend_recovers_translation():
    rng = np.random.default_rng(5)
    base = rng.uniform(0.0, 1.0, size=(40, 40)).astype(np.float32)
    shift = (0, 3)  # (dy, dx)
    moved = np.roll(base, shift, axis=(0, 1))
    flow = block_matching_flow(base, moved, block_size=8, search_radius=8)
    assert abs(float(np.median(flow[..., 0])) - shift[0]) <= 0.5
    assert abs(float(np.median(flow[..., 1])) - shift[1]) <= 0.5


def test_flow_ties_prefer_zero_displacement():
    flat = np.zeros((16, 16), dtype=np.float32)
    flow = block_matching_flow(flat, flat, block_size=8, search_radius=4)
    assert np.array_equal(flow, np.zeros_like(flow))


def test_flow_hints_padded_to_uniform_channels():
    rng = np.random.default_rng(2)
    a = rng.uniform(0, 1, (16, 16)).astype(np.float32)
    b = np.roll(a, 2, axis=1)
    hints = extract_motion_hints(a, b, a, backend="flow", b_channels=9,
                                 block_size=8, search_radius=4)
    assert hints.forward.shape == (16, 16, 18)
    assert hints.source_tag == HintSource.FLOW
    # displacement lives in the first two channels, the padding stays zero
    assert np.abs(hints.forward[:, :, 2:]).sum() == 0.0
    assert np.abs(hints.forward[:, :, :2]).sum() > 0.0


def test_unknown_backend_rejected():
    frame = np.zeros((4, 4), dtype=np.float32)
    with pytest.raises(ValueError):
        extract_motion_hints(frame, frame, frame, backend="warp-net")


def test_shape_mismatch_rejected():
    a = np.zeros((4, 4), dtype=np.float32)
    b = np.zeros((4, 5), dtype=np.float32)
    with pytest.raises(ShapeError):
        extract_motion_hints(a, b, a, backend="simulator")


def test_forward_backward_ordering():
    # forward hints come from (prev, mid), backward from (mid, next)
    prev = np.zeros((8, 8), dtype=np.float32)
    mid = prev.copy()
    mid[2, 2] = 1.0
    nxt = mid.copy()
    hints = extract_motion_hints(prev, mid, nxt, backend="simulator", b_channels=5)
    assert hints.forward.sum() > 0
    assert hints.backward.sum() == 0.0


def test_hints_to_tensor_layout():
    hints = empty_hints(4, 6, 3)
    hints.forward[1, 2, 0] = 2.0
    hints.backward[3, 5, 4] = 5.0
    t = hints_to_tensor(hints)
    assert t.shape == (1, 12, 4, 6)
    assert t[0, 0, 1, 2] == 2.0
    assert t[0, 6 + 4, 3, 5] == 5.0


def test_learned_backend_requires_model():
    with pytest.raises(ConfigError):
        make_hint_backend("learned_i2e", b_channels=5)


@pytest.mark.slow
def test_learned_i2e_regresses_simulator():
    spec = SceneSpec(height=16, width=16, motion_tier="medium", size_range=(2.0, 4.0))
    triplets = generate_synthetic(spec, 8, seed=11)
    pairs = []
    for tri in triplets:
        pairs.append((tri.prev, tri.mid))
        pairs.append((tri.mid, tri.next))
    model, losses = train_i2e(pairs, b_channels=5, width=16, steps=300, seed=0)
    assert losses[-1] < 0.5 * losses[0]

    hints = extract_motion_hints(
        triplets[0].prev, triplets[0].mid, triplets[0].next,
        backend="learned_i2e", b_channels=5, i2e_model=model,
    )
    assert hints.source_tag == HintSource.LEARNED_I2E
    assert hints.forward.min() >= 0.0  # non-negativity is structural
    target = simulator_volume(triplets[0].prev, triplets[0].mid, b_channels=5)
    untrained, _ = train_i2e(pairs[:1], b_channels=5, width=16, steps=0, seed=0)
    base_err = float(np.abs(untrained.predict_volume(triplets[0].prev, triplets[0].mid) - target).mean())
    got_err = float(np.abs(hints.forward - target).mean())
    assert got_err < base_err
