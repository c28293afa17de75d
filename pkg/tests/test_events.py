import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from midframe.errors import ConfigError, EventBoundsError, ShapeError
from midframe.events import (
    Event,
    build_event_volume,
    read_event_file,
    simulate_event_arrays,
    simulate_events,
    write_event_file,
)
from midframe.hints import simulator_volume


def test_empty_input_gives_zero_volume():
    vol = build_event_volume([], b_channels=9, height=4, width=4)
    assert vol.data.shape == (4, 4, 18)
    assert vol.data.sum() == 0.0


def test_single_event_degenerate_range_lands_on_channel_zero():
    vol = build_event_volume([Event(x=2, y=3, t=5.0, p=1)], b_channels=9, height=4, width=4)
    assert vol.data[3, 2, 0] == 1.0
    assert vol.data.sum() == 1.0


def test_three_events_on_integer_channels():
    # t* = (B-1) * (t - t1) / (tN - t1) = 8 * {0, 0.5, 1} = {0, 4, 8}
    events = [Event(0, 0, 0.0, 1), Event(0, 0, 0.5, 1), Event(0, 0, 1.0, 1)]
    vol = build_event_volume(events, b_channels=9, height=2, width=2)
    assert vol.data[0, 0, 0] == 1.0
    assert vol.data[0, 0, 4] == 1.0
    assert vol.data[0, 0, 8] == 1.0
    assert vol.data.sum() == 3.0


def test_fractional_timestamp_splits_linearly():
    # boundary events at other pixels pin t1 = 0, tN = 1; the middle event at
    # t = 0.4375 has t* = 8 * 0.4375 = 3.5 and splits evenly over channels 3, 4
    events = [
        Event(0, 0, 0.0, 1),
        Event(1, 1, 0.4375, 1),
        Event(2, 2, 1.0, 1),
    ]
    vol = build_event_volume(events, b_channels=9, height=3, width=3)
    assert vol.data[1, 1, 3] == pytest.approx(0.5)
    assert vol.data[1, 1, 4] == pytest.approx(0.5)
    assert vol.data.sum() == pytest.approx(3.0)


def test_polarity_blocks():
    events = [Event(0, 0, 0.0, 1), Event(1, 0, 1.0, -1)]
    vol = build_event_volume(events, b_channels=4, height=1, width=2)
    assert vol.data[0, 0, 0] == 1.0       # positive block, channel 0
    assert vol.data[0, 1, 4 + 3] == 1.0   # negative block, channel B-1
    assert vol.data.sum() == 2.0


def test_out_of_bounds_event_reports_index():
    events = [Event(0, 0, 0.0, 1), Event(5, 0, 0.5, 1)]
    with pytest.raises(EventBoundsError) as err:
        build_event_volume(events, b_channels=4, height=4, width=4)
    assert err.value.index == 1


def test_small_b_rejected():
    with pytest.raises(ConfigError):
        build_event_volume([Event(0, 0, 0.0, 1)], b_channels=1, height=2, width=2)


@settings(max_examples=50, deadline=None)
@given(
    st.lists(
        st.tuples(
            st.integers(0, 7), st.integers(0, 7),
            st.floats(0.0, 10.0, allow_nan=False),
            st.sampled_from([-1, 1]),
        ),
        min_size=1, max_size=64,
    )
)
def test_partition_of_unity_property(raw):
    events = [Event(x, y, t, p) for x, y, t, p in raw]
    vol = build_event_volume(events, b_channels=9, height=8, width=8)
    assert vol.data.min() >= 0.0
    assert vol.data.sum() == pytest.approx(len(events), rel=1e-5)


def test_determinism_bit_identical():
    events = [Event(i % 4, (i * 3) % 4, 0.1 * i, 1 if i % 2 else -1) for i in range(20)]
    a = build_event_volume(events, b_channels=9, height=4, width=4)
    b = build_event_volume(events, b_channels=9, height=4, width=4)
    assert np.array_equal(a.data, b.data)


def test_identical_frames_give_no_events():
    frame = np.full((8, 8), 0.5, dtype=np.float32)
    assert simulate_events(frame, frame, contrast_threshold=0.2) == []


def test_simulator_count_matches_log_formula():
    frame_a = np.full((4, 4), 0.2, dtype=np.float64)
    frame_b = frame_a.copy()
    frame_b[0, 0] = 0.8
    events = simulate_events(frame_a, frame_b, contrast_threshold=0.5)
    expected = math.floor(math.log(0.801 / 0.201) / 0.5)  # = 2
    assert expected == 2
    assert len(events) == expected
    assert all(e.x == 0 and e.y == 0 and e.p == 1 for e in events)
    assert [e.t for e in events] == [0.5, 1.0]


def test_simulator_swap_negates_polarity():
    rng = np.random.default_rng(0)
    frame_a = rng.uniform(0.0, 1.0, size=(8, 8))
    frame_b = rng.uniform(0.0, 1.0, size=(8, 8))
    fwd = simulate_events(frame_a, frame_b, 0.3)
    bwd = simulate_events(frame_b, frame_a, 0.3)
    assert len(fwd) == len(bwd)
    assert [(e.x, e.y, e.t) for e in fwd] == [(e.x, e.y, e.t) for e in bwd]
    assert all(a.p == -b.p for a, b in zip(fwd, bwd))


def test_time_reversal_swaps_polarity_blocks_exactly():
    rng = np.random.default_rng(3)
    frame_a = rng.uniform(0.0, 1.0, size=(8, 8))
    frame_b = rng.uniform(0.0, 1.0, size=(8, 8))
    vol_ab = simulator_volume(frame_a, frame_b, b_channels=5, contrast_threshold=0.3)
    vol_ba = simulator_volume(frame_b, frame_a, b_channels=5, contrast_threshold=0.3)
    assert np.array_equal(vol_ab[:, :, :5], vol_ba[:, :, 5:])
    assert np.array_equal(vol_ab[:, :, 5:], vol_ba[:, :, :5])


def test_simulator_shape_mismatch():
    with pytest.raises(ShapeError):
        simulate_events(np.zeros((4, 4)), np.zeros((4, 5)), 0.2)


def test_simulator_bad_threshold():
    with pytest.raises(ConfigError):
        simulate_events(np.zeros((4, 4)), np.zeros((4, 4)), 0.0)


def test_event_list_matches_array_path():
    rng = np.random.default_rng(7)
    frame_a = rng.uniform(0.0, 1.0, size=(6, 6))
    frame_b = rng.uniform(0.0, 1.0, size=(6, 6))
    events = simulate_events(frame_a, frame_b, 0.25)
    xs, ys, ts, ps = simulate_event_arrays(frame_a, frame_b, 0.25)
    assert [e.x for e in events] == xs.tolist()
    assert [e.y for e in events] == ys.tolist()
    assert [e.p for e in events] == ps.tolist()
    assert np.allclose([e.t for e in events], ts)


def test_event_file_round_trip(tmp_path):
    events = [Event(1, 2, 0.25, 1), Event(3, 0, 0.75, -1)]
    path = tmp_path / "events.txt"
    write_event_file(path, events)
    assert read_event_file(path) == events
