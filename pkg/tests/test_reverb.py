import numpy as np
import pytest

from pitchbench.errors import InfeasibleRoomError
from pitchbench.metrics import compare
from pitchbench.reverb import (
    RoomImpulseResponse,
    RoomSpec,
    convolve,
    reflection_coefficient,
    rir_length,
    save_rir,
    schroeder_t60,
    simulate_rir,
)
from pitchbench.signal import Signal, load_audio
from pitchbench.trackers import preset, track_nccf

SR = 44100


def mirror_images(room, order):
    """Images by repeated reflection across the six walls, keyed by position."""
    dims = np.asarray(room.dimensions)
    found = {tuple(np.round(room.source_position, 9)): 0}
    frontier = [np.asarray(room.source_position, float)]
    for depth in range(1, order + 1):
        nxt = []
        for p in frontier:
            for axis in range(3):
                for wall in (0.0, dims[axis]):
                    q = p.copy()
                    q[axis] = 2 * wall - q[axis]
                    key = tuple(np.round(q, 9))
                    if key not in found:
                        found[key] = depth
                        nxt.append(q)
        frontier = nxt
    return found


def test_image_sum_matches_mirror_enumeration():
    room = RoomSpec(t60=0.2, absorption_model="eyring", max_order=3)
    beta = reflection_coefficient(room)
    expected = np.zeros(rir_length(room.t60, SR))
    mic = np.asarray(room.mic_position)
    for pos, depth in mirror_images(room, 3).items():
        d = np.linalg.norm(np.asarray(pos) - mic)
        k = int(np.floor(d / room.speed_of_sound * SR + 0.5 + 1e-9))
        if k < expected.size:
            expected[k] += beta ** depth / d
    np.testing.assert_allclose(simulate_rir(room, SR).taps, expected, rtol=1e-12, atol=1e-15)


def test_direct_path_delay_221():
    room = RoomSpec(source_position=(1.0, 1.5, 1.5), mic_position=(2.715, 1.5, 1.5), t60=0.3)
    assert room.direct_distance == pytest.approx(1.715)
    taps = simulate_rir(room, SR).taps
    assert np.flatnonzero(taps)[0] == 221


def test_default_room_direct_path():
    room = RoomSpec(t60=0.2)
    taps = simulate_rir(room, SR).taps
    expected = int(np.floor(room.direct_distance / 343.0 * SR + 0.5))
    assert np.flatnonzero(taps)[0] == expected
    assert taps[expected] == pytest.approx(1 / room.direct_distance, rel=1e-12)


def test_schroeder_on_known_decay():
    rng = np.random.default_rng(0)
    t60 = 0.4
    t = np.arange(int(0.6 * SR)) / SR
    h = rng.normal(size=t.size) * 10 ** (-3 * t / t60)
    assert schroeder_t60(h, SR) == pytest.approx(t60, rel=0.03)


@pytest.mark.parametrize("t60", [0.1, 0.3, 0.5])
def test_requested_t60_achieved(t60):
    rir = simulate_rir(RoomSpec(t60=t60), SR)
    assert len(rir) == rir_length(t60, SR)
    assert 0.8 * t60 <= schroeder_t60(rir.taps, SR) <= 1.2 * t60


def test_t60_03_within_spec_band():
    assert 0.24 <= schroeder_t60(simulate_rir(RoomSpec(t60=0.3), SR).taps, SR) <= 0.36


def test_absorbing_limit_is_direct_path():
    room = RoomSpec(t60=0.01, absorption_model="eyring")
    assert reflection_coefficient(room) < 0.01
    taps = simulate_rir(room, SR).taps
    k = np.flatnonzero(taps)[0]
    energy = np.sum(taps ** 2)
    assert (energy - taps[k] ** 2) / energy < 0.01


def test_sabine_infeasible_names_minimum():
    with pytest.raises(InfeasibleRoomError) as info:
        simulate_rir(RoomSpec(t60=0.1, absorption_model="sabine"), SR)
    expected = 0.161 * 60.0 / 94.0
    assert info.value.min_t60 == pytest.approx(expected)
    assert f"{expected:.4f}" in str(info.value)
    simulate_rir(RoomSpec(t60=0.2, absorption_model="sabine"), SR)


def test_room_validation():
    with pytest.raises(ValueError):
        RoomSpec(source_position=(0.0, 1.0, 1.0))
    with pytest.raises(ValueError):
        RoomSpec(source_position=(1.0, 1.0, 1.0), mic_position=(1.0, 1.0, 1.0))
    with pytest.raises(ValueError):
        RoomSpec(mic_position=(3.5, 1.0, 1.0))
    with pytest.raises(ValueError):
        RoomSpec(t60=-1)
    with pytest.raises(ValueError):
        simulate_rir(RoomSpec(t60=0.0), SR)


def test_deterministic():
    a = simulate_rir(RoomSpec(t60=0.25), SR).taps
    b = simulate_rir(RoomSpec(t60=0.25), SR).taps
    assert a.tobytes() == b.tobytes()


def test_room_hashable():
    assert hash(RoomSpec(dimensions=[3, 4, 5])) == hash(RoomSpec())


def test_convolve_unit_impulse_identity():
    x = np.random.default_rng(1).normal(size=1000)
    y = convolve(Signal(x, SR), RoomImpulseResponse(np.array([1.0]), SR))
    np.testing.assert_allclose(y.samples, x, rtol=1e-12)


def test_convolve_shifted_impulse():
    x = np.random.default_rng(2).normal(size=500)
    taps = np.zeros(30)
    taps[17] = 1.0
    y = convolve(Signal(x, SR), RoomImpulseResponse(taps, SR)).samples
    expected = np.r_[np.zeros(17), x[:-17]]
    expected *= np.max(np.abs(x)) / np.max(np.abs(expected))
    np.testing.assert_allclose(y, expected, atol=1e-12)


def test_convolve_matches_direct():
    rng = np.random.default_rng(3)
    for _ in range(5):
        x, h = rng.normal(size=rng.integers(50, 800)), rng.normal(size=rng.integers(1, 300))
        direct = np.convolve(x, h)[:x.size]
        direct *= np.max(np.abs(x)) / np.max(np.abs(direct))
        got = convolve(Signal(x, SR), RoomImpulseResponse(h, SR)).samples
        np.testing.assert_allclose(got, direct, atol=1e-9)


def test_convolve_rate_mismatch():
    with pytest.raises(ValueError):
        convolve(Signal(np.ones(10), 16000), RoomImpulseResponse(np.ones(3), 44100))


def test_identity_rir_keeps_alignment():
    t = np.arange(SR) / SR
    x = np.where((t > 0.2) & (t < 0.7), 0.4 * np.sin(2 * np.pi * 220 * t), 0.0)
    clean = track_nccf(Signal(x, SR), preset("nccf"))
    wet = track_nccf(convolve(Signal(x, SR), RoomImpulseResponse(np.array([1.0]), SR)), preset("nccf"))
    assert compare(wet, clean).ffe == 0.0


def test_save_rir(tmp_path):
    rir = simulate_rir(RoomSpec(t60=0.1), 16000)
    save_rir(tmp_path / "r.wav", rir)
    back = load_audio(tmp_path / "r.wav")
    np.testing.assert_allclose(back.samples, rir.taps.astype(np.float32))
